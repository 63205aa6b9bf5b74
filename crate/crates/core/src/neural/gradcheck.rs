//! Central finite-difference gradient checking.

use super::{Parameters, Scalar};

pub const DEFAULT_STEP: f64 = 1e-4;

/// Denominator floor for the relative error, so that two near-zero
/// gradients do not produce a spurious large ratio.
pub const REL_FLOOR: f64 = 1e-7;

#[derive(Clone, Debug, PartialEq)]
pub struct GradCheckReport {
    pub max_rel_error: f64,
    pub worst_tensor: String,
    pub worst_index: usize,
    pub checked: usize,
}

pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(REL_FLOOR)
}

/// Compares `analytic` against `(L(p + h) - L(p - h)) / 2h` for every scalar
/// of every tensor in `params`.
pub fn check_gradients<T, P>(params: &P, analytic: &P, loss: impl Fn(&P) -> f64, step: f64) -> GradCheckReport
where
    T: Scalar,
    P: Parameters<T>,
{
    let expected: Vec<(String, Vec<f64>)> = analytic
        .tensors()
        .into_iter()
        .map(|(n, t)| (n, t.iter().map(|v| v.f64()).collect()))
        .collect();
    let mut probe = params.clone();
    let mut report = GradCheckReport {
        max_rel_error: 0.0,
        worst_tensor: String::new(),
        worst_index: 0,
        checked: 0,
    };
    for (ti, (name, grads)) in expected.iter().enumerate() {
        for (i, &a) in grads.iter().enumerate() {
            let original = nth(&mut probe, ti, i, None);
            nth(&mut probe, ti, i, Some(original + T::of(step)));
            let up = loss(&probe);
            nth(&mut probe, ti, i, Some(original - T::of(step)));
            let down = loss(&probe);
            nth(&mut probe, ti, i, Some(original));
            let numeric = (up - down) / (2.0 * step);
            let err = relative_error(a, numeric);
            report.checked += 1;
            if err > report.max_rel_error {
                report.max_rel_error = err;
                report.worst_tensor = name.clone();
                report.worst_index = i;
            }
        }
    }
    report
}

/// Reads (and optionally overwrites) scalar `i` of tensor `ti`.
fn nth<T: Scalar, P: Parameters<T>>(p: &mut P, ti: usize, i: usize, set: Option<T>) -> T {
    let mut tensors = p.tensors_mut();
    let (_, t) = &mut tensors[ti];
    let slot = t.iter_mut().nth(i).expect("index within tensor");
    let old = *slot;
    if let Some(v) = set {
        *slot = v;
    }
    old
}
