use ndarray::{Array1, ArrayView1, Zip};
use serde::{Deserialize, Serialize};

use super::Scalar;

/// Pair/mention loss.
///
/// `Bce` is the full two-term binary cross-entropy. `PositiveOnly` keeps only
/// the `y * log(sigmoid(l))` term, for studying the one-term form of the loss.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum LossKind {
    #[default]
    Bce,
    PositiveOnly,
}

pub fn sigmoid<T: Scalar>(x: T) -> T {
    if x >= T::zero() {
        T::one() / (T::one() + (-x).exp())
    } else {
        let e = x.exp();
        e / (T::one() + e)
    }
}

/// `log(sigmoid(x))` without overflow: `-(max(-x, 0) + ln(1 + e^-|x|))`.
pub fn log_sigmoid<T: Scalar>(x: T) -> T {
    -((-x).max(T::zero()) + (-x.abs()).exp().ln_1p())
}

/// Mean loss over the batch and its gradient w.r.t. each logit (already
/// scaled by `1/B`).
pub fn bce_loss<T: Scalar>(logits: ArrayView1<T>, labels: ArrayView1<T>, kind: LossKind) -> (T, Array1<T>) {
    assert_eq!(logits.len(), labels.len(), "logits and labels differ in length");
    let n = logits.len();
    if n == 0 {
        return (T::zero(), Array1::zeros(0));
    }
    let scale = T::one() / T::of(n as f64);
    let mut total = T::zero();
    let grad = Zip::from(&logits).and(&labels).map_collect(|&l, &y| {
        match kind {
            LossKind::Bce => {
                // -[y log s + (1 - y) log(1 - s)] = max(l, 0) - l y + ln(1 + e^-|l|)
                total += l.max(T::zero()) - l * y + (-l.abs()).exp().ln_1p();
                (sigmoid(l) - y) * scale
            }
            LossKind::PositiveOnly => {
                total += -y * log_sigmoid(l);
                -y * (T::one() - sigmoid(l)) * scale
            }
        }
    });
    (total * scale, grad)
}
