//! Workspace index, run manifests and artifact writing.
//!
//! A workspace is a directory holding `index.json`, which points at a corpus
//! file and an embedding file together with their SHA-256 digests. Every
//! command writes its artifacts through [`Artifacts`], which stages each file
//! as `<name>.partial` and renames it only once the command succeeds, then
//! records the run in `<name>.manifest.json` next to the primary artifact.

use std::collections::BTreeMap;
use std::fs;
use std::io::{Read, Write};
use std::path::{Path, PathBuf};
use std::time::Instant;

use cdcoref::corpus::{Corpus, Split};
use cdcoref::embeddings::EmbeddingStore;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{CliError, CliResult};

pub const INDEX_FILE: &str = "index.json";
pub const VERSION: &str = concat!("v", env!("CARGO_PKG_VERSION"));

pub fn sha256_file(path: &Path) -> CliResult<String> {
    let mut file = fs::File::open(path).map_err(|e| CliError::io(path, e))?;
    let mut hasher = Sha256::new();
    let mut buf = vec![0u8; 1 << 16];
    loop {
        let n = file.read(&mut buf).map_err(|e| CliError::io(path, e))?;
        if n == 0 {
            break;
        }
        hasher.update(&buf[..n]);
    }
    Ok(hex::encode(hasher.finalize()))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct WorkspaceIndex {
    pub version: String,
    pub corpus: PathBuf,
    pub corpus_sha256: String,
    pub embeddings: PathBuf,
    pub embeddings_sha256: String,
    pub documents: usize,
    pub dim: usize,
    /// Documents per split.
    pub splits: BTreeMap<String, usize>,
    pub warnings: Vec<String>,
}

/// Loaded corpus and embeddings of a prepared workspace.
pub struct Workspace {
    pub dir: PathBuf,
    pub index: WorkspaceIndex,
    pub corpus: Corpus,
    pub store: EmbeddingStore,
}

impl Workspace {
    /// Validates `corpus` against `embeddings` and writes the index.
    pub fn prepare(corpus_path: &Path, embeddings_path: &Path, dir: &Path) -> CliResult<Workspace> {
        let corpus = Corpus::load(corpus_path)?;
        let store = EmbeddingStore::load_aligned(embeddings_path, &corpus)?;
        let absolute = |p: &Path| fs::canonicalize(p).map_err(|e| CliError::io(p, e));
        let index = WorkspaceIndex {
            version: VERSION.to_string(),
            corpus: absolute(corpus_path)?,
            corpus_sha256: sha256_file(corpus_path)?,
            embeddings: absolute(embeddings_path)?,
            embeddings_sha256: sha256_file(embeddings_path)?,
            documents: corpus.documents().len(),
            dim: store.dim(),
            splits: Split::ALL
                .iter()
                .map(|&s| (s.to_string(), corpus.split_documents(s).len()))
                .collect(),
            warnings: corpus.warnings().to_vec(),
        };
        fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))?;
        Ok(Workspace {
            dir: dir.to_path_buf(),
            index,
            corpus,
            store,
        })
    }

    pub fn index_path(&self) -> PathBuf {
        self.dir.join(INDEX_FILE)
    }

    /// Opens a prepared workspace; fails when either input changed since
    /// `prepare`.
    pub fn open(dir: &Path) -> CliResult<Workspace> {
        let path = dir.join(INDEX_FILE);
        let text = fs::read_to_string(&path).map_err(|e| CliError::io(&path, e))?;
        let index: WorkspaceIndex = serde_json::from_str(&text)
            .map_err(|e| CliError::Input(format!("malformed workspace index {}: {e}", path.display())))?;
        for (file, digest) in [
            (&index.corpus, &index.corpus_sha256),
            (&index.embeddings, &index.embeddings_sha256),
        ] {
            if &sha256_file(file)? != digest {
                return Err(CliError::Input(format!(
                    "{} changed since the workspace was prepared; run `prepare` again",
                    file.display()
                )));
            }
        }
        let corpus = Corpus::load(&index.corpus)?;
        let store = EmbeddingStore::load_aligned(&index.embeddings, &corpus)?;
        Ok(Workspace {
            dir: dir.to_path_buf(),
            index,
            corpus,
            store,
        })
    }

    pub fn input_digests(&self) -> BTreeMap<String, String> {
        BTreeMap::from([
            (
                self.index.corpus.display().to_string(),
                self.index.corpus_sha256.clone(),
            ),
            (
                self.index.embeddings.display().to_string(),
                self.index.embeddings_sha256.clone(),
            ),
        ])
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StageTiming {
    pub stage: String,
    pub seconds: f64,
}

/// Provenance of one command run.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub command: String,
    pub version: String,
    pub seed: Option<u64>,
    pub config: serde_json::Value,
    /// Path to SHA-256 of every input file.
    pub inputs: BTreeMap<String, String>,
    /// Path to SHA-256 of every artifact written.
    pub outputs: BTreeMap<String, String>,
    /// Wall-clock seconds per stage; the only non-reproducible field.
    pub timings: Vec<StageTiming>,
}

/// Stages artifacts and the manifest of one command.
pub struct Artifacts {
    manifest: RunManifest,
    manifest_path: PathBuf,
    staged: Vec<(PathBuf, PathBuf)>,
    written: Vec<PathBuf>,
    stage_started: Option<(String, Instant)>,
}

fn partial_path(path: &Path) -> PathBuf {
    let mut name = path.file_name().map(|n| n.to_os_string()).unwrap_or_default();
    name.push(".partial");
    path.with_file_name(name)
}

fn write_partial(path: &Path, bytes: &[u8]) -> CliResult<PathBuf> {
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        fs::create_dir_all(parent).map_err(|e| CliError::io(parent, e))?;
    }
    let partial = partial_path(path);
    let mut file = fs::File::create(&partial).map_err(|e| CliError::io(&partial, e))?;
    file.write_all(bytes).map_err(|e| CliError::io(&partial, e))?;
    Ok(partial)
}

pub fn manifest_path_for(primary: &Path) -> PathBuf {
    let mut name = primary.file_name().map(|n| n.to_os_string()).unwrap_or_default();
    name.push(".manifest.json");
    primary.with_file_name(name)
}

impl Artifacts {
    /// `primary` names the artifact the manifest is attached to.
    pub fn new(command: &str, primary: &Path) -> Artifacts {
        Artifacts {
            manifest: RunManifest {
                command: command.to_string(),
                version: VERSION.to_string(),
                seed: None,
                config: serde_json::Value::Null,
                inputs: BTreeMap::new(),
                outputs: BTreeMap::new(),
                timings: Vec::new(),
            },
            manifest_path: manifest_path_for(primary),
            staged: Vec::new(),
            written: Vec::new(),
            stage_started: None,
        }
    }

    pub fn set_seed(&mut self, seed: u64) {
        self.manifest.seed = Some(seed);
    }

    pub fn set_config(&mut self, config: &impl Serialize) {
        self.manifest.config = serde_json::to_value(config).expect("config serializes");
    }

    pub fn add_inputs(&mut self, digests: BTreeMap<String, String>) {
        self.manifest.inputs.extend(digests);
    }

    pub fn add_input_file(&mut self, path: &Path) -> CliResult<()> {
        let digest = sha256_file(path)?;
        self.manifest.inputs.insert(path.display().to_string(), digest);
        Ok(())
    }

    /// Ends the running stage, if any, and starts `name`.
    pub fn stage(&mut self, name: &str) {
        self.finish_stage();
        self.stage_started = Some((name.to_string(), Instant::now()));
    }

    fn finish_stage(&mut self) {
        if let Some((stage, started)) = self.stage_started.take() {
            let seconds = started.elapsed().as_secs_f64();
            log::info!("stage `{stage}` took {seconds:.2}s");
            self.manifest.timings.push(StageTiming { stage, seconds });
        }
    }

    /// Writes `bytes` to `<path>.partial`; the final name appears on commit.
    pub fn write(&mut self, path: &Path, bytes: &[u8]) -> CliResult<()> {
        let partial = write_partial(path, bytes)?;
        self.staged.push((partial, path.to_path_buf()));
        Ok(())
    }

    /// Writes `path` completely right away, for inputs of later stages.
    pub fn write_now(&mut self, path: &Path, bytes: &[u8]) -> CliResult<()> {
        let partial = write_partial(path, bytes)?;
        fs::rename(&partial, path).map_err(|e| CliError::io(path, e))?;
        self.written.push(path.to_path_buf());
        Ok(())
    }

    /// Renames every staged artifact into place and writes the manifest.
    pub fn commit(mut self) -> CliResult<RunManifest> {
        self.finish_stage();
        for (partial, path) in &self.staged {
            fs::rename(partial, path).map_err(|e| CliError::io(path, e))?;
        }
        for path in self.written.iter().chain(self.staged.iter().map(|(_, p)| p)) {
            self.manifest
                .outputs
                .insert(path.display().to_string(), sha256_file(path)?);
        }
        let text = serde_json::to_string_pretty(&self.manifest).expect("manifest serializes");
        fs::write(&self.manifest_path, text + "\n").map_err(|e| CliError::io(&self.manifest_path, e))?;
        Ok(self.manifest)
    }
}
