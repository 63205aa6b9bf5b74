use ndarray::{Array1, Array2, ArrayView1, ArrayView2, ArrayViewD, ArrayViewMutD, Axis};
use rand::Rng as _;

use super::{Parameters, Rng, Scalar};
use crate::error::{Error, Result};

/// Forward-pass mode. Dropout only fires in `Train`.
pub enum Mode<'a> {
    Eval,
    Train(&'a mut Rng),
}

impl Mode<'_> {
    pub fn is_training(&self) -> bool {
        matches!(self, Mode::Train(_))
    }

    pub fn reborrow(&mut self) -> Mode<'_> {
        match self {
            Mode::Eval => Mode::Eval,
            Mode::Train(rng) => Mode::Train(rng),
        }
    }
}

/// Glorot/Xavier uniform bound, `sqrt(6 / (fan_in + fan_out))`.
pub fn xavier_bound(fan_in: usize, fan_out: usize) -> f64 {
    (6.0 / (fan_in + fan_out) as f64).sqrt()
}

/// Xavier-uniform matrix of shape `(rows, cols)`, with `fan_in = cols` and
/// `fan_out = rows` as for an `out x in` weight matrix.
pub fn xavier_init<T: Scalar>(shape: (usize, usize), rng: &mut Rng) -> Array2<T> {
    let (rows, cols) = shape;
    let bound = xavier_bound(cols, rows);
    Array2::from_shape_simple_fn(shape, || T::of(rng.random_range(-bound..=bound)))
}

/// Affine map `y = x W^T + b` over row-major batches.
#[derive(Clone, Debug, PartialEq)]
pub struct Dense<T> {
    /// `out x in`
    pub weight: Array2<T>,
    pub bias: Array1<T>,
}

impl<T: Scalar> Dense<T> {
    pub fn zeros(inputs: usize, outputs: usize) -> Self {
        Dense {
            weight: Array2::zeros((outputs, inputs)),
            bias: Array1::zeros(outputs),
        }
    }

    pub fn xavier(inputs: usize, outputs: usize, rng: &mut Rng) -> Self {
        Dense {
            weight: xavier_init((outputs, inputs), rng),
            bias: Array1::zeros(outputs),
        }
    }

    pub fn inputs(&self) -> usize {
        self.weight.ncols()
    }

    pub fn outputs(&self) -> usize {
        self.weight.nrows()
    }

    pub fn forward(&self, x: ArrayView2<T>) -> Array2<T> {
        x.dot(&self.weight.t()) + &self.bias
    }

    /// Returns parameter gradients and the gradient w.r.t. `x`.
    pub fn backward(&self, x: ArrayView2<T>, dy: ArrayView2<T>) -> (Dense<T>, Array2<T>) {
        let grads = Dense {
            weight: dy.t().dot(&x),
            bias: dy.sum_axis(Axis(0)),
        };
        (grads, dy.dot(&self.weight))
    }
}

/// One-hidden-layer scorer: Dense -> ReLU -> dropout -> Dense(1).
#[derive(Clone, Debug, PartialEq)]
pub struct Ffnn<T> {
    pub hidden: Dense<T>,
    pub output: Dense<T>,
    pub dropout: f64,
}

/// Activations kept by a forward pass for [`Ffnn::backward`].
#[derive(Clone, Debug)]
pub struct FfnnCache<T> {
    input: Array2<T>,
    pre: Array2<T>,
    act: Array2<T>,
    mask: Option<Array2<T>>,
}

impl<T> FfnnCache<T> {
    pub fn batch_size(&self) -> usize {
        self.input.nrows()
    }
}

impl<T: Scalar> Ffnn<T> {
    pub fn zeros(inputs: usize, hidden: usize, dropout: f64) -> Self {
        Ffnn {
            hidden: Dense::zeros(inputs, hidden),
            output: Dense::zeros(hidden, 1),
            dropout,
        }
    }

    pub fn xavier(inputs: usize, hidden: usize, dropout: f64, rng: &mut Rng) -> Self {
        let h = Dense::xavier(inputs, hidden, rng);
        let o = Dense::xavier(hidden, 1, rng);
        Ffnn {
            hidden: h,
            output: o,
            dropout,
        }
    }

    pub fn inputs(&self) -> usize {
        self.hidden.inputs()
    }

    pub fn hidden_width(&self) -> usize {
        self.hidden.outputs()
    }

    fn check_input(&self, x: &ArrayView2<T>) -> Result<()> {
        if x.ncols() != self.inputs() {
            return Err(Error::Shape(format!(
                "scorer expects {} input features, got {}",
                self.inputs(),
                x.ncols()
            )));
        }
        Ok(())
    }

    /// Scores each row of `x`, keeping what [`Ffnn::backward`] needs.
    pub fn forward(&self, x: ArrayView2<T>, mode: Mode<'_>) -> Result<(Array1<T>, FfnnCache<T>)> {
        self.check_input(&x)?;
        let pre = self.hidden.forward(x);
        let mut act = pre.mapv(|v| v.max(T::zero()));
        let mask =
            match mode {
                Mode::Train(rng) if self.dropout > 0.0 => {
                    let keep = 1.0 - self.dropout;
                    let scale = T::of(1.0 / keep);
                    let mask = Array2::from_shape_simple_fn(act.raw_dim(), || {
                        if rng.random_bool(keep) {
                            scale
                        } else {
                            T::zero()
                        }
                    });
                    act *= &mask;
                    Some(mask)
                }
                _ => None,
            };
        let out = self.output.forward(act.view()).column(0).to_owned();
        Ok((
            out,
            FfnnCache {
                input: x.to_owned(),
                pre,
                act,
                mask,
            },
        ))
    }

    /// Eval-mode scores without caching.
    pub fn score(&self, x: ArrayView2<T>) -> Result<Array1<T>> {
        self.check_input(&x)?;
        let act = self.hidden.forward(x).mapv(|v| v.max(T::zero()));
        Ok(self.output.forward(act.view()).column(0).to_owned())
    }

    /// Backpropagates `upstream` (d loss / d score, one per row).
    pub fn backward(&self, cache: &FfnnCache<T>, upstream: ArrayView1<T>) -> Result<(Ffnn<T>, Array2<T>)> {
        if upstream.len() != cache.batch_size() {
            return Err(Error::Shape(format!(
                "upstream gradient has {} rows, cache has {}",
                upstream.len(),
                cache.batch_size()
            )));
        }
        let dout = upstream.insert_axis(Axis(1));
        let (g_out, mut d_act) = self.output.backward(cache.act.view(), dout);
        if let Some(mask) = &cache.mask {
            d_act *= mask;
        }
        let d_pre = ndarray::Zip::from(&d_act)
            .and(&cache.pre)
            .map_collect(|&d, &p| if p > T::zero() { d } else { T::zero() });
        let (g_hidden, dx) = self.hidden.backward(cache.input.view(), d_pre.view());
        Ok((
            Ffnn {
                hidden: g_hidden,
                output: g_out,
                dropout: self.dropout,
            },
            dx,
        ))
    }

    pub fn cast<U: Scalar>(&self) -> Ffnn<U> {
        let c = |a: &Array2<T>| a.mapv(|v| U::of(v.f64()));
        let v = |a: &Array1<T>| a.mapv(|v| U::of(v.f64()));
        Ffnn {
            hidden: Dense {
                weight: c(&self.hidden.weight),
                bias: v(&self.hidden.bias),
            },
            output: Dense {
                weight: c(&self.output.weight),
                bias: v(&self.output.bias),
            },
            dropout: self.dropout,
        }
    }

    pub(crate) fn named_tensors<'a>(&'a self, prefix: &str) -> Vec<(String, ArrayViewD<'a, T>)> {
        vec![
            (format!("{prefix}.hidden.weight"), self.hidden.weight.view().into_dyn()),
            (format!("{prefix}.hidden.bias"), self.hidden.bias.view().into_dyn()),
            (format!("{prefix}.output.weight"), self.output.weight.view().into_dyn()),
            (format!("{prefix}.output.bias"), self.output.bias.view().into_dyn()),
        ]
    }

    pub(crate) fn named_tensors_mut<'a>(&'a mut self, prefix: &str) -> Vec<(String, ArrayViewMutD<'a, T>)> {
        vec![
            (
                format!("{prefix}.hidden.weight"),
                self.hidden.weight.view_mut().into_dyn(),
            ),
            (format!("{prefix}.hidden.bias"), self.hidden.bias.view_mut().into_dyn()),
            (
                format!("{prefix}.output.weight"),
                self.output.weight.view_mut().into_dyn(),
            ),
            (format!("{prefix}.output.bias"), self.output.bias.view_mut().into_dyn()),
        ]
    }
}

impl<T: Scalar> Parameters<T> for Ffnn<T> {
    fn tensors(&self) -> Vec<(String, ArrayViewD<'_, T>)> {
        self.named_tensors("ffnn")
    }

    fn tensors_mut(&mut self) -> Vec<(String, ArrayViewMutD<'_, T>)> {
        self.named_tensors_mut("ffnn")
    }
}
