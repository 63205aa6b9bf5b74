//! All trainable tensors and the `CDCM` checkpoint format.
//!
//! Layout (little-endian): magic `CDCM`, u16 version, then the
//! hyperparameter block (u32 D, u32 max span width, u32 width dim, u32
//! mention-scorer hidden width, u32 pair-scorer hidden width, f64 dropout,
//! u32 metadata length + UTF-8 JSON), u32 tensor count, and per tensor:
//! u16 name length, name bytes, u8 rank, u32 dims, f32 data row-major. An
//! optional optimizer trailer follows: u8 flag, then (f64 lr, f64 beta1, f64
//! beta2, f64 epsilon, u64 step) and the first and second moments as two
//! more tensor lists.

use std::io::Write;
use std::path::Path;

use ndarray::{Array2, ArrayViewD, ArrayViewMutD};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::neural::{AdamConfig, AdamState, Dense, Ffnn, Parameters, Rng, Scalar};
use crate::pairs::PairParams;
use crate::spans::SpanParams;

pub const MAGIC: [u8; 4] = *b"CDCM";
pub const VERSION: u16 = 1;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModelShape {
    pub dim: usize,
    pub max_span_width: usize,
    pub width_dim: usize,
    pub mention_hidden: usize,
    pub pair_hidden: usize,
    pub dropout: f64,
}

impl ModelShape {
    pub fn repr_dim(&self) -> usize {
        3 * self.dim + self.width_dim
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ModelParams<T> {
    pub span: SpanParams<T>,
    pub pair: PairParams<T>,
}

impl<T: Scalar> ModelParams<T> {
    /// Xavier-initialized parameters; span tensors are drawn before pair tensors.
    pub fn new(shape: &ModelShape, rng: &mut Rng) -> Self {
        let span = SpanParams::new(
            shape.dim,
            shape.max_span_width,
            shape.width_dim,
            shape.mention_hidden,
            shape.dropout,
            rng,
        );
        let pair = PairParams::new(shape.repr_dim(), shape.pair_hidden, shape.dropout, rng);
        ModelParams { span, pair }
    }

    pub fn shape(&self) -> ModelShape {
        ModelShape {
            dim: self.span.dim(),
            max_span_width: self.span.max_width(),
            width_dim: self.span.width_dim(),
            mention_hidden: self.span.mention_scorer.hidden_width(),
            pair_hidden: self.pair.scorer.hidden_width(),
            dropout: self.span.mention_scorer.dropout,
        }
    }

    pub fn cast<U: Scalar>(&self) -> ModelParams<U> {
        ModelParams {
            span: self.span.cast(),
            pair: self.pair.cast(),
        }
    }
}

impl<T: Scalar> Parameters<T> for ModelParams<T> {
    fn tensors(&self) -> Vec<(String, ArrayViewD<'_, T>)> {
        let mut out = self.span.tensors();
        out.extend(self.pair.tensors());
        out
    }

    fn tensors_mut(&mut self) -> Vec<(String, ArrayViewMutD<'_, T>)> {
        let mut out = self.span.tensors_mut();
        out.extend(self.pair.tensors_mut());
        out
    }
}

/// Tensor names belonging to the mention scorer `s_m`.
pub fn is_mention_scorer_tensor(name: &str) -> bool {
    name.starts_with("span.mention_scorer.")
}

/// Tensor names feeding span pruning: everything under `span.`.
pub fn is_span_tensor(name: &str) -> bool {
    name.starts_with("span.")
}

#[derive(Clone, Debug, PartialEq)]
pub struct Checkpoint {
    pub params: ModelParams<f32>,
    /// Free-form JSON recorded by the writer (training configuration).
    pub meta: String,
    pub optimizer: Option<AdamState<ModelParams<f32>>>,
}

impl Checkpoint {
    pub fn new(params: ModelParams<f32>, meta: String) -> Self {
        Checkpoint {
            params,
            meta,
            optimizer: None,
        }
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::new();
        let shape = self.params.shape();
        out.extend_from_slice(&MAGIC);
        out.extend_from_slice(&VERSION.to_le_bytes());
        for v in [
            shape.dim,
            shape.max_span_width,
            shape.width_dim,
            shape.mention_hidden,
            shape.pair_hidden,
        ] {
            out.extend_from_slice(&(v as u32).to_le_bytes());
        }
        out.extend_from_slice(&shape.dropout.to_le_bytes());
        out.extend_from_slice(&(self.meta.len() as u32).to_le_bytes());
        out.extend_from_slice(self.meta.as_bytes());
        write_tensors(&mut out, &self.params);
        match &self.optimizer {
            None => out.push(0),
            Some(state) => {
                out.push(1);
                let c = state.config;
                for v in [c.learning_rate, c.beta1, c.beta2, c.epsilon] {
                    out.extend_from_slice(&v.to_le_bytes());
                }
                out.extend_from_slice(&state.step.to_le_bytes());
                write_tensors(&mut out, &state.m);
                write_tensors(&mut out, &state.v);
            }
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let mut r = Reader(bytes);
        let magic: [u8; 4] = r.take(4)?.try_into().expect("4 bytes");
        if magic != MAGIC {
            return Err(Error::BadMagic {
                what: "checkpoint",
                expected: MAGIC,
                found: magic,
            });
        }
        let version = r.u16()?;
        if version != VERSION {
            return Err(Error::UnsupportedVersion {
                what: "checkpoint",
                found: version,
            });
        }
        let mut dims = [0usize; 5];
        for d in &mut dims {
            *d = r.u32()? as usize;
        }
        let dropout = r.f64()?;
        let shape = ModelShape {
            dim: dims[0],
            max_span_width: dims[1],
            width_dim: dims[2],
            mention_hidden: dims[3],
            pair_hidden: dims[4],
            dropout,
        };
        if dims.contains(&0) || !(0.0..1.0).contains(&dropout) {
            return Err(Error::Checkpoint(format!("invalid hyperparameters {shape:?}")));
        }
        let meta_len = r.u32()? as usize;
        let meta = String::from_utf8(r.take(meta_len)?.to_vec())
            .map_err(|_| Error::Checkpoint("metadata is not UTF-8".into()))?;

        let template = zeros(&shape);
        let params = read_tensors(&mut r, template.clone())?;
        let optimizer = match r.u8()? {
            0 => None,
            1 => {
                let config = AdamConfig {
                    learning_rate: r.f64()?,
                    beta1: r.f64()?,
                    beta2: r.f64()?,
                    epsilon: r.f64()?,
                };
                let step = r.u64()?;
                let m = read_tensors(&mut r, template.clone())?;
                let v = read_tensors(&mut r, template)?;
                Some(AdamState { config, m, v, step })
            }
            other => return Err(Error::Checkpoint(format!("unknown optimizer flag {other}"))),
        };
        if !r.0.is_empty() {
            return Err(Error::Checkpoint(format!("{} trailing bytes", r.0.len())));
        }
        Ok(Checkpoint {
            params,
            meta,
            optimizer,
        })
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let mut f = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
        f.write_all(&self.to_bytes()).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
        Checkpoint::from_bytes(&bytes)
    }
}

fn zeros(shape: &ModelShape) -> ModelParams<f32> {
    ModelParams {
        span: SpanParams {
            attention: Dense::zeros(shape.dim, 1),
            width_embedding: Array2::zeros((shape.max_span_width, shape.width_dim)),
            mention_scorer: Ffnn::zeros(3 * shape.dim + shape.width_dim, shape.mention_hidden, shape.dropout),
        },
        pair: PairParams {
            scorer: Ffnn::zeros(3 * shape.repr_dim(), shape.pair_hidden, shape.dropout),
        },
    }
}

fn write_tensors(out: &mut Vec<u8>, params: &ModelParams<f32>) {
    let tensors = params.tensors();
    out.extend_from_slice(&(tensors.len() as u32).to_le_bytes());
    for (name, t) in tensors {
        out.extend_from_slice(&(name.len() as u16).to_le_bytes());
        out.extend_from_slice(name.as_bytes());
        out.push(t.ndim() as u8);
        for &d in t.shape() {
            out.extend_from_slice(&(d as u32).to_le_bytes());
        }
        for v in t.iter() {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
}

fn read_tensors(r: &mut Reader<'_>, mut params: ModelParams<f32>) -> Result<ModelParams<f32>> {
    let count = r.u32()? as usize;
    {
        let mut slots = params.tensors_mut();
        if count != slots.len() {
            return Err(Error::Checkpoint(format!(
                "expected {} tensors, found {count}",
                slots.len()
            )));
        }
        for (expected_name, slot) in slots.iter_mut() {
            let name_len = r.u16()? as usize;
            let name = String::from_utf8_lossy(r.take(name_len)?).into_owned();
            if &name != expected_name {
                return Err(Error::Checkpoint(format!(
                    "expected tensor `{expected_name}`, found `{name}`"
                )));
            }
            let rank = r.u8()? as usize;
            let mut dims = Vec::with_capacity(rank);
            for _ in 0..rank {
                dims.push(r.u32()? as usize);
            }
            if dims != slot.shape() {
                return Err(Error::Checkpoint(format!(
                    "tensor `{name}` has shape {dims:?}, expected {:?}",
                    slot.shape()
                )));
            }
            for v in slot.iter_mut() {
                *v = r.f32()?;
            }
        }
    }
    Ok(params)
}

struct Reader<'a>(&'a [u8]);

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        if self.0.len() < n {
            return Err(Error::Truncated("checkpoint"));
        }
        let (head, tail) = self.0.split_at(n);
        self.0 = tail;
        Ok(head)
    }

    fn u8(&mut self) -> Result<u8> {
        Ok(self.take(1)?[0])
    }

    fn u16(&mut self) -> Result<u16> {
        Ok(u16::from_le_bytes(self.take(2)?.try_into().expect("2 bytes")))
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().expect("4 bytes")))
    }

    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().expect("8 bytes")))
    }

    fn f32(&mut self) -> Result<f32> {
        Ok(f32::from_le_bytes(self.take(4)?.try_into().expect("4 bytes")))
    }

    fn f64(&mut self) -> Result<f64> {
        Ok(f64::from_le_bytes(self.take(8)?.try_into().expect("8 bytes")))
    }
}
