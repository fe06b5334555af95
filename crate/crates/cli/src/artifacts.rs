//! Output directory layout and the files passed between commands.

use std::fs;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::{Path, PathBuf};

use ehf_core::forest::{Forest, LabelMatrix};
use ehf_core::hedging::{read_checkpoint, write_checkpoint, DeltaPolicy};
use ehf_core::market_sim::{read_pathset, write_pathset, HestonParams, PathSet, SimConfig};
use ehf_core::{Error, Result};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::config::{Job, RunConfig};

const LABELS_MAGIC: &[u8; 4] = b"EHFL";
const LABELS_VERSION: u32 = 1;

pub struct Layout {
    root: PathBuf,
}

impl Layout {
    pub fn new(root: impl Into<PathBuf>) -> Self {
        Self { root: root.into() }
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    pub fn paths(&self) -> PathBuf {
        self.root.join("paths.bin")
    }

    pub fn paths_manifest(&self) -> PathBuf {
        self.root.join("paths.manifest.json")
    }

    pub fn labels_dir(&self) -> PathBuf {
        self.root.join("labels")
    }

    pub fn forest(&self) -> PathBuf {
        self.labels_dir().join("forest.json")
    }

    pub fn predicted_labels(&self) -> PathBuf {
        self.labels_dir().join("predicted.bin")
    }

    pub fn checkpoints_dir(&self) -> PathBuf {
        self.root.join("checkpoints")
    }

    /// Shared checkpoint of a job, or the one trained for threshold `k`.
    pub fn checkpoint(&self, job: &Job, alpha_index: Option<usize>) -> PathBuf {
        let stem = match alpha_index {
            None => job.name(),
            Some(k) => format!("{}_a{k:03}", job.name()),
        };
        self.checkpoints_dir().join(format!("{stem}.ehfm"))
    }

    pub fn training_log(&self, job: &Job, alpha_index: Option<usize>) -> PathBuf {
        self.checkpoint(job, alpha_index).with_extension("log.json")
    }

    pub fn frontiers_dir(&self) -> PathBuf {
        self.root.join("frontiers")
    }

    pub fn frontier(&self) -> PathBuf {
        self.root.join("frontier.csv")
    }

    pub fn report_dir(&self) -> PathBuf {
        self.root.join("report")
    }
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

pub fn create_parent(path: &Path) -> Result<()> {
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir)?;
    }
    Ok(())
}

pub fn write_bytes(path: &Path, bytes: &[u8]) -> Result<()> {
    create_parent(path)?;
    fs::write(path, bytes)?;
    Ok(())
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value).map_err(|e| Error::Format(e.to_string()))?;
    text.push('\n');
    write_bytes(path, text.as_bytes())
}

pub fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T> {
    let file = open(path)?;
    serde_json::from_reader(BufReader::new(file)).map_err(|e| Error::Format(format!("{}: {e}", path.display())))
}

/// Opens an input file, naming it in the error when it is missing.
pub fn open(path: &Path) -> Result<fs::File> {
    fs::File::open(path).map_err(|e| Error::Io(std::io::Error::new(e.kind(), format!("{}: {e}", path.display()))))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PathsManifest {
    pub file: String,
    pub bytes: u64,
    pub sha256: String,
    pub scenario: String,
    pub heston: HestonParams,
    pub simulation: SimConfig,
}

pub fn save_paths(layout: &Layout, cfg: &RunConfig, paths: &PathSet) -> Result<PathsManifest> {
    let mut bytes = Vec::new();
    write_pathset(paths, &mut bytes)?;
    write_bytes(&layout.paths(), &bytes)?;
    let manifest = PathsManifest {
        file: "paths.bin".into(),
        bytes: bytes.len() as u64,
        sha256: sha256_hex(&bytes),
        scenario: cfg.scenario.name.clone(),
        heston: cfg.heston()?,
        simulation: cfg.sim_config(),
    };
    write_json(&layout.paths_manifest(), &manifest)?;
    Ok(manifest)
}

/// Reads the path file after checking it against its manifest.
pub fn load_paths(layout: &Layout) -> Result<PathSet> {
    let manifest: PathsManifest = read_json(&layout.paths_manifest())?;
    let mut bytes = Vec::new();
    open(&layout.paths())?.read_to_end(&mut bytes)?;
    let digest = sha256_hex(&bytes);
    if digest != manifest.sha256 || bytes.len() as u64 != manifest.bytes {
        return Err(Error::Format(format!(
            "{} does not match its manifest (sha256 {digest}, expected {})",
            layout.paths().display(),
            manifest.sha256
        )));
    }
    read_pathset(bytes.as_slice(), manifest.simulation.dt)
}

/// Training and test splits: the first `n_train` paths, then the next `n_test`.
pub fn split(cfg: &RunConfig, paths: &PathSet) -> Result<(PathSet, PathSet)> {
    let s = &cfg.simulation;
    if paths.n_paths() < s.n_train + s.n_test {
        return Err(Error::Config(format!(
            "path file holds {} paths, the config needs {}",
            paths.n_paths(),
            s.n_train + s.n_test
        )));
    }
    if paths.n_steps() != s.n_steps {
        return Err(Error::Config("path file and config disagree on the number of steps".into()));
    }
    Ok((paths.select(0..s.n_train), paths.select(s.n_train..s.n_train + s.n_test)))
}

pub fn save_forest(layout: &Layout, forest: &Forest) -> Result<()> {
    let text = serde_json::to_string(forest).map_err(|e| Error::Format(e.to_string()))?;
    write_bytes(&layout.forest(), text.as_bytes())
}

pub fn write_labels(path: &Path, labels: &LabelMatrix) -> Result<()> {
    let mut bytes = Vec::with_capacity(24 + labels.as_slice().len());
    bytes.extend_from_slice(LABELS_MAGIC);
    bytes.extend_from_slice(&LABELS_VERSION.to_le_bytes());
    bytes.extend_from_slice(&(labels.n_paths() as u64).to_le_bytes());
    bytes.extend_from_slice(&(labels.n_steps() as u64).to_le_bytes());
    bytes.extend_from_slice(labels.as_slice());
    write_bytes(path, &bytes)
}

pub fn read_labels(path: &Path) -> Result<LabelMatrix> {
    let mut bytes = Vec::new();
    open(path)?.read_to_end(&mut bytes)?;
    let bad = || Error::Format(format!("{} is not a label file", path.display()));
    if bytes.len() < 24 || &bytes[..4] != LABELS_MAGIC {
        return Err(bad());
    }
    let word = |at: usize| u64::from_le_bytes(bytes[at..at + 8].try_into().unwrap()) as usize;
    if u32::from_le_bytes(bytes[4..8].try_into().unwrap()) != LABELS_VERSION {
        return Err(bad());
    }
    let (n_paths, n_steps) = (word(8), word(16));
    let body = &bytes[24..];
    if n_steps == 0 || n_paths.checked_mul(n_steps) != Some(body.len()) || body.iter().any(|&b| b > 1) {
        return Err(bad());
    }
    let rows: Vec<Vec<u8>> = body.chunks_exact(n_steps).map(<[u8]>::to_vec).collect();
    LabelMatrix::from_rows(&rows)
}

/// Forecast labels for the training and test splits.
pub fn load_split_labels(layout: &Layout, cfg: &RunConfig) -> Result<(LabelMatrix, LabelMatrix)> {
    let all = read_labels(&layout.predicted_labels())?;
    let s = &cfg.simulation;
    if all.n_paths() != s.n_train + s.n_test || all.n_steps() != s.n_steps {
        return Err(Error::Config("label file does not match the configured splits; rerun `label`".into()));
    }
    Ok((all.select(0..s.n_train), all.select(s.n_train..s.n_train + s.n_test)))
}

pub fn save_checkpoint(path: &Path, policy: &DeltaPolicy) -> Result<()> {
    create_parent(path)?;
    let mut w = BufWriter::new(fs::File::create(path)?);
    write_checkpoint(policy, &mut w)?;
    w.flush()?;
    Ok(())
}

pub fn load_checkpoint(path: &Path) -> Result<DeltaPolicy> {
    read_checkpoint(BufReader::new(open(path)?))
}
