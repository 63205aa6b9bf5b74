//! Frozen per-token vectors, keyed by document.
//!
//! File layout (little-endian):
//!
//! ```text
//! "CDCE" | u16 version = 1 | u32 D
//! repeated until EOF:
//!     u16 id_len | id_len bytes of UTF-8 doc id | u32 T | T*D f32, row-major
//! ```

use std::collections::{BTreeMap, HashMap};
use std::io::{Read, Write};
use std::path::Path;

use ndarray::{Array1, Array2, ArrayView2};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::corpus::{ClusterKey, Corpus, MentionType};
use crate::error::{Error, Result};

pub const MAGIC: [u8; 4] = *b"CDCE";
pub const VERSION: u16 = 1;

#[derive(Clone, Debug, PartialEq)]
pub struct EmbeddingMatrix {
    pub doc_id: String,
    rows: Array2<f32>,
}

impl EmbeddingMatrix {
    pub fn new(doc_id: impl Into<String>, rows: Array2<f32>) -> Result<Self> {
        let doc_id = doc_id.into();
        if rows.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite(doc_id));
        }
        Ok(EmbeddingMatrix { doc_id, rows })
    }

    pub fn rows(&self) -> ArrayView2<'_, f32> {
        self.rows.view()
    }

    pub fn len(&self) -> usize {
        self.rows.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.nrows() == 0
    }

    pub fn dim(&self) -> usize {
        self.rows.ncols()
    }
}

/// Read-only collection of embedding matrices sharing one dimension.
#[derive(Clone, Debug, PartialEq)]
pub struct EmbeddingStore {
    dim: usize,
    matrices: Vec<EmbeddingMatrix>,
    index: HashMap<String, usize>,
}

impl EmbeddingStore {
    pub fn new(dim: usize) -> Self {
        EmbeddingStore {
            dim,
            matrices: Vec::new(),
            index: HashMap::new(),
        }
    }

    pub fn insert(&mut self, matrix: EmbeddingMatrix) -> Result<()> {
        if matrix.dim() != self.dim {
            return Err(Error::DimensionMismatch {
                found: matrix.dim(),
                expected: self.dim,
                doc_id: matrix.doc_id,
            });
        }
        if self.index.contains_key(&matrix.doc_id) {
            return Err(Error::DuplicateDocument(matrix.doc_id));
        }
        self.index.insert(matrix.doc_id.clone(), self.matrices.len());
        self.matrices.push(matrix);
        Ok(())
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.matrices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.matrices.is_empty()
    }

    pub fn get(&self, doc_id: &str) -> Option<&EmbeddingMatrix> {
        self.index.get(doc_id).map(|&i| &self.matrices[i])
    }

    pub fn require(&self, doc_id: &str) -> Result<&EmbeddingMatrix> {
        self.get(doc_id)
            .ok_or_else(|| Error::MissingEmbeddings(doc_id.to_string()))
    }

    pub fn iter(&self) -> impl Iterator<Item = &EmbeddingMatrix> {
        self.matrices.iter()
    }

    /// Every corpus document must have exactly one row per token.
    pub fn check_alignment(&self, corpus: &Corpus) -> Result<()> {
        for doc in corpus.documents() {
            let m = self.require(&doc.doc_id)?;
            if m.len() != doc.len() {
                return Err(Error::AlignmentMismatch {
                    doc_id: doc.doc_id.clone(),
                    rows: m.len(),
                    tokens: doc.len(),
                });
            }
        }
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
        Self::from_bytes(&bytes)
    }

    /// Loads a store and enforces alignment with `corpus`.
    pub fn load_aligned(path: impl AsRef<Path>, corpus: &Corpus) -> Result<Self> {
        let store = Self::load(path)?;
        store.check_alignment(corpus)?;
        Ok(store)
    }

    pub fn from_bytes(mut bytes: &[u8]) -> Result<Self> {
        let mut magic = [0u8; 4];
        read_exact(&mut bytes, &mut magic, "embedding header")?;
        if magic != MAGIC {
            return Err(Error::BadMagic {
                what: "embedding file",
                expected: MAGIC,
                found: magic,
            });
        }
        let version = read_u16(&mut bytes, "embedding header")?;
        if version != VERSION {
            return Err(Error::UnsupportedVersion {
                what: "embedding file",
                found: version,
            });
        }
        let dim = read_u32(&mut bytes, "embedding header")? as usize;
        let mut store = EmbeddingStore::new(dim);
        while !bytes.is_empty() {
            let id_len = read_u16(&mut bytes, "document id")? as usize;
            let mut id = vec![0u8; id_len];
            read_exact(&mut bytes, &mut id, "document id")?;
            let doc_id = String::from_utf8(id).map_err(|_| Error::Validation("document id is not UTF-8".into()))?;
            let rows = read_u32(&mut bytes, "row count")? as usize;
            let n = rows.checked_mul(dim).ok_or(Error::Truncated("embedding matrix"))?;
            if bytes.len() < n * 4 {
                return Err(Error::Truncated("embedding matrix"));
            }
            let (data, rest) = bytes.split_at(n * 4);
            bytes = rest;
            let values: Vec<f32> = data
                .chunks_exact(4)
                .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
                .collect();
            let matrix = Array2::from_shape_vec((rows, dim), values).map_err(|e| Error::Internal(e.to_string()))?;
            store.insert(EmbeddingMatrix::new(doc_id, matrix)?)?;
        }
        Ok(store)
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::new();
        self.write_to(&mut out).expect("writing to a Vec cannot fail");
        out
    }

    pub fn write_to(&self, w: &mut impl Write) -> std::io::Result<()> {
        w.write_all(&MAGIC)?;
        w.write_all(&VERSION.to_le_bytes())?;
        w.write_all(&(self.dim as u32).to_le_bytes())?;
        for m in &self.matrices {
            let id = m.doc_id.as_bytes();
            w.write_all(&(id.len() as u16).to_le_bytes())?;
            w.write_all(id)?;
            w.write_all(&(m.len() as u32).to_le_bytes())?;
            for v in m.rows.iter() {
                w.write_all(&v.to_le_bytes())?;
            }
        }
        Ok(())
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
        let mut w = std::io::BufWriter::new(file);
        self.write_to(&mut w)
            .and_then(|_| w.flush())
            .map_err(|e| Error::io(path, e))
    }
}

fn read_exact(r: &mut &[u8], buf: &mut [u8], what: &'static str) -> Result<()> {
    r.read_exact(buf).map_err(|_| Error::Truncated(what))
}

fn read_u16(r: &mut &[u8], what: &'static str) -> Result<u16> {
    let mut b = [0u8; 2];
    read_exact(r, &mut b, what)?;
    Ok(u16::from_le_bytes(b))
}

fn read_u32(r: &mut &[u8], what: &'static str) -> Result<u32> {
    let mut b = [0u8; 4];
    read_exact(r, &mut b, what)?;
    Ok(u32::from_le_bytes(b))
}

/// Generates a store where coreference is recoverable from the vectors.
///
/// A token inside a gold mention of cluster `c` and type `ty` gets
/// `signal * (u_c + mu_ty) + (1 - signal) * r + noise * e`, where `u_c` is a
/// per-cluster direction, `mu_ty` a per-type marker, and `r`, `e` fresh
/// standard-normal draws. Every other token is `r + noise * e`. At
/// `signal = 0` mention tokens and plain tokens share one distribution.
pub fn synthetic_embeddings(
    corpus: &Corpus,
    dim: usize,
    cluster_signal: f32,
    noise_scale: f32,
    seed: u64,
) -> Result<EmbeddingStore> {
    if dim < 8 {
        return Err(Error::Config(format!("synthetic dim must be >= 8, got {dim}")));
    }
    if !(0.0..=1.0).contains(&cluster_signal) {
        return Err(Error::Config(format!(
            "cluster_signal must be in [0, 1], got {cluster_signal}"
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let gaussian = |rng: &mut ChaCha8Rng| -> Array1<f32> {
        Array1::from_iter((0..dim).map(|_| rng.sample::<f32, _>(StandardNormal)))
    };

    let markers: BTreeMap<MentionType, Array1<f32>> = [MentionType::Event, MentionType::Entity]
        .into_iter()
        .map(|ty| (ty, gaussian(&mut rng)))
        .collect();
    // BTreeMap keeps direction assignment independent of mention file order.
    let mut clusters: BTreeMap<ClusterKey, Array1<f32>> = corpus
        .mentions()
        .iter()
        .map(|m| (m.cluster(), Array1::zeros(0)))
        .collect();
    for dir in clusters.values_mut() {
        *dir = gaussian(&mut rng);
    }

    let mut store = EmbeddingStore::new(dim);
    for doc in corpus.documents() {
        let mut latent: Vec<Option<Array1<f32>>> = vec![None; doc.len()];
        let mut doc_mentions: Vec<_> = corpus.mentions().iter().filter(|m| m.doc_id == doc.doc_id).collect();
        doc_mentions.sort_by_key(|m| (m.start, m.end, m.mention_type));
        for m in doc_mentions {
            let shared = &clusters[&m.cluster()] + &markers[&m.mention_type];
            for slot in &mut latent[m.start..=m.end] {
                slot.get_or_insert_with(|| shared.clone());
            }
        }
        let mut rows = Array2::<f32>::zeros((doc.len(), dim));
        for (t, mut row) in rows.rows_mut().into_iter().enumerate() {
            let r = gaussian(&mut rng);
            let e = gaussian(&mut rng);
            let v = match &latent[t] {
                Some(shared) => shared * cluster_signal + &r * (1.0 - cluster_signal) + &e * noise_scale,
                None => r + &e * noise_scale,
            };
            row.assign(&v);
        }
        store.insert(EmbeddingMatrix::new(doc.doc_id.clone(), rows)?)?;
    }
    Ok(store)
}
