use ndarray::{ArrayViewD, ArrayViewMutD};

use super::Scalar;

/// A fixed set of named tensors.
///
/// Gradient containers and optimizer moments reuse the parameter type itself,
/// so tensors line up by position.
pub trait Parameters<T: Scalar>: Clone {
    fn tensors(&self) -> Vec<(String, ArrayViewD<'_, T>)>;

    fn tensors_mut(&mut self) -> Vec<(String, ArrayViewMutD<'_, T>)>;

    fn zeros_like(&self) -> Self {
        let mut z = self.clone();
        for (_, mut t) in z.tensors_mut() {
            t.fill(T::zero());
        }
        z
    }

    fn num_parameters(&self) -> usize {
        self.tensors().iter().map(|(_, t)| t.len()).sum()
    }

    /// `self += other`, tensor by tensor.
    fn accumulate(&mut self, other: &Self) {
        for ((_, mut a), (_, b)) in self.tensors_mut().into_iter().zip(other.tensors()) {
            a += &b;
        }
    }

    fn is_finite(&self) -> bool {
        self.tensors().iter().all(|(_, t)| t.iter().all(|v| v.is_finite()))
    }
}
