//! Immutable per-agent experiment archive.
//!
//! Every finished agent leaves a directory tree under the archive root:
//!
//! ```text
//! Archive/agent_<N>/console.log
//! Archive/agent_<N>/experiments/exp_<III>/<snapshot>
//! Archive/agent_<N>/experiments/exp_<III>/score.txt
//! Archive/agent_<N>/experiments/exp_<III>/results/*
//! ```
//!
//! A [`ArchiveWriter`] owns one agent's subtree while the agent runs;
//! [`finalize`](ArchiveWriter::finalize) freezes it. Read access goes
//! through [`ArchiveView`], which rejects writes and path traversal —
//! immutability is enforced at this access layer, not with OS permissions.

use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};

use thiserror::Error;

use crate::util::{fnv1a64, now_rfc3339};

/// Outcome persisted to `score.txt`: a decimal score or a failure token.
#[derive(Debug, Clone, PartialEq)]
pub enum ExperimentScore {
    Value(f64),
    Failed(String),
}

impl fmt::Display for ExperimentScore {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ExperimentScore::Value(score) => write!(f, "{score}"),
            ExperimentScore::Failed(reason) => write!(f, "failed: {reason}"),
        }
    }
}

impl ExperimentScore {
    pub fn parse(text: &str) -> ExperimentScore {
        let trimmed = text.trim();
        match trimmed.strip_prefix("failed: ") {
            Some(reason) => ExperimentScore::Failed(reason.to_string()),
            None => trimmed
                .parse::<f64>()
                .map(ExperimentScore::Value)
                .unwrap_or_else(|_| ExperimentScore::Failed(trimmed.to_string())),
        }
    }

    pub fn value(&self) -> Option<f64> {
        match self {
            ExperimentScore::Value(v) => Some(*v),
            ExperimentScore::Failed(_) => None,
        }
    }
}

/// One recorded experiment.
#[derive(Debug, Clone)]
pub struct ExperimentRecord {
    /// 1-based, dense; rendered as `exp_<index:03>`.
    pub index: u32,
    pub snapshot_path: PathBuf,
    pub score: ExperimentScore,
    pub result_files: Vec<PathBuf>,
    pub started_at: String,
    pub ended_at: String,
}

/// A finished agent's archive subtree.
#[derive(Debug, Clone)]
pub struct AgentArchive {
    pub agent_number: u32,
    pub root: PathBuf,
    pub experiments: Vec<ExperimentRecord>,
    pub console_log_path: PathBuf,
}

#[derive(Debug, Error)]
pub enum ArchiveError {
    #[error("agent {0} is already finalized; the archive is immutable")]
    Finalized(u32),
    #[error("agent {0} was finalized twice")]
    DoubleFinalize(u32),
    #[error("agent directory {0} already exists")]
    AgentExists(String),
    #[error("path {0:?} escapes the archive root")]
    PathEscape(String),
    #[error("archive is read-only: cannot write {0:?}")]
    ReadOnly(String),
    #[error("io error on {path}: {source}")]
    Io {
        path: String,
        source: std::io::Error,
    },
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> ArchiveError + '_ {
    move |source| ArchiveError::Io {
        path: path.display().to_string(),
        source,
    }
}

pub fn experiment_dirname(index: u32) -> String {
    format!("exp_{index:03}")
}

pub fn agent_dirname(agent_number: u32) -> String {
    format!("agent_{agent_number}")
}

/// Writer for one agent's archive subtree.
#[derive(Debug)]
pub struct ArchiveWriter {
    agent_number: u32,
    root: PathBuf,
    experiments: Vec<ExperimentRecord>,
    finalized: bool,
}

impl ArchiveWriter {
    /// Create `archive_root/agent_<N>/experiments/`. The agent directory
    /// must not already exist.
    pub fn create(archive_root: &Path, agent_number: u32) -> Result<ArchiveWriter, ArchiveError> {
        let root = archive_root.join(agent_dirname(agent_number));
        if root.exists() {
            return Err(ArchiveError::AgentExists(root.display().to_string()));
        }
        fs::create_dir_all(root.join("experiments")).map_err(io_err(&root))?;
        Ok(ArchiveWriter {
            agent_number,
            root,
            experiments: Vec::new(),
            finalized: false,
        })
    }

    pub fn agent_number(&self) -> u32 {
        self.agent_number
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    pub fn experiments(&self) -> &[ExperimentRecord] {
        &self.experiments
    }

    /// Record one experiment: allocate the next index, copy the candidate
    /// byte-exactly (keeping its filename), write `score.txt`, and copy any
    /// result files under `results/`.
    pub fn record_experiment(
        &mut self,
        candidate_file: &Path,
        score: ExperimentScore,
        result_files: &[(String, Vec<u8>)],
        started_at: String,
    ) -> Result<&ExperimentRecord, ArchiveError> {
        if self.finalized {
            return Err(ArchiveError::Finalized(self.agent_number));
        }
        let index = self.experiments.len() as u32 + 1;
        let dir = self
            .root
            .join("experiments")
            .join(experiment_dirname(index));
        fs::create_dir_all(dir.join("results")).map_err(io_err(&dir))?;

        let snapshot_name = candidate_file
            .file_name()
            .map(|n| n.to_string_lossy().into_owned())
            .unwrap_or_else(|| "candidate".to_string());
        let snapshot_path = dir.join(&snapshot_name);
        fs::copy(candidate_file, &snapshot_path).map_err(io_err(candidate_file))?;

        let score_path = dir.join("score.txt");
        fs::write(&score_path, format!("{score}")).map_err(io_err(&score_path))?;

        let mut stored_results = Vec::new();
        for (name, bytes) in result_files {
            let path = dir.join("results").join(name);
            fs::write(&path, bytes).map_err(io_err(&path))?;
            stored_results.push(path);
        }

        self.experiments.push(ExperimentRecord {
            index,
            snapshot_path,
            score,
            result_files: stored_results,
            started_at,
            ended_at: now_rfc3339(),
        });
        Ok(self.experiments.last().expect("just pushed"))
    }

    /// Write `console.log` and freeze the subtree. Further writes are
    /// rejected at this access layer.
    pub fn finalize(&mut self, console_log: &str) -> Result<AgentArchive, ArchiveError> {
        if self.finalized {
            return Err(ArchiveError::DoubleFinalize(self.agent_number));
        }
        let console_log_path = self.root.join("console.log");
        fs::write(&console_log_path, console_log).map_err(io_err(&console_log_path))?;
        self.finalized = true;
        Ok(AgentArchive {
            agent_number: self.agent_number,
            root: self.root.clone(),
            experiments: self.experiments.clone(),
            console_log_path,
        })
    }

    pub fn is_finalized(&self) -> bool {
        self.finalized
    }
}

/// Read-only view over an archive root. All mutation is rejected; relative
/// paths may not traverse outside the root.
#[derive(Debug, Clone)]
pub struct ArchiveView {
    root: PathBuf,
}

impl ArchiveView {
    pub fn open(root: &Path) -> Result<ArchiveView, ArchiveError> {
        if !root.is_dir() {
            return Err(ArchiveError::Io {
                path: root.display().to_string(),
                source: std::io::Error::new(std::io::ErrorKind::NotFound, "no such directory"),
            });
        }
        Ok(ArchiveView {
            root: root.to_path_buf(),
        })
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    fn resolve(&self, rel: &str) -> Result<PathBuf, ArchiveError> {
        let rel_path = Path::new(rel);
        if rel_path.is_absolute() {
            return Err(ArchiveError::PathEscape(rel.to_string()));
        }
        let mut resolved = self.root.clone();
        for component in rel_path.components() {
            match component {
                std::path::Component::Normal(part) => resolved.push(part),
                std::path::Component::CurDir => {}
                _ => return Err(ArchiveError::PathEscape(rel.to_string())),
            }
        }
        Ok(resolved)
    }

    /// Agent numbers present under the root, ascending.
    pub fn agents(&self) -> Result<Vec<u32>, ArchiveError> {
        let mut numbers = Vec::new();
        for entry in fs::read_dir(&self.root).map_err(io_err(&self.root))? {
            let entry = entry.map_err(io_err(&self.root))?;
            if let Some(number) = entry
                .file_name()
                .to_string_lossy()
                .strip_prefix("agent_")
                .and_then(|n| n.parse::<u32>().ok())
            {
                numbers.push(number);
            }
        }
        numbers.sort_unstable();
        Ok(numbers)
    }

    /// Experiment directory names (`exp_001`, ...) for one agent, ascending.
    pub fn experiments(&self, agent_number: u32) -> Result<Vec<String>, ArchiveError> {
        let dir = self.root.join(agent_dirname(agent_number)).join("experiments");
        let mut names = Vec::new();
        for entry in fs::read_dir(&dir).map_err(io_err(&dir))? {
            let entry = entry.map_err(io_err(&dir))?;
            let name = entry.file_name().to_string_lossy().into_owned();
            if name.starts_with("exp_") {
                names.push(name);
            }
        }
        names.sort();
        Ok(names)
    }

    /// Read a file under the archive root.
    pub fn read(&self, rel: &str) -> Result<Vec<u8>, ArchiveError> {
        let path = self.resolve(rel)?;
        fs::read(&path).map_err(io_err(&path))
    }

    /// Any write through the view is rejected.
    pub fn write(&self, rel: &str, _bytes: &[u8]) -> Result<(), ArchiveError> {
        Err(ArchiveError::ReadOnly(rel.to_string()))
    }

    /// Fingerprint of the whole subtree: sorted relative paths and file
    /// contents. Constant across the rest of a run once finalized.
    pub fn tree_hash(&self) -> Result<u64, ArchiveError> {
        let mut entries: Vec<(String, Vec<u8>)> = Vec::new();
        collect_files(&self.root, &self.root, &mut entries)?;
        entries.sort();
        let mut buffer = Vec::new();
        for (rel, bytes) in entries {
            buffer.extend_from_slice(rel.as_bytes());
            buffer.push(0);
            buffer.extend_from_slice(&bytes);
            buffer.push(0);
        }
        Ok(fnv1a64(&buffer))
    }
}

fn collect_files(
    root: &Path,
    dir: &Path,
    out: &mut Vec<(String, Vec<u8>)>,
) -> Result<(), ArchiveError> {
    for entry in fs::read_dir(dir).map_err(io_err(dir))? {
        let entry = entry.map_err(io_err(dir))?;
        let path = entry.path();
        if path.is_dir() {
            collect_files(root, &path, out)?;
        } else {
            let rel = path
                .strip_prefix(root)
                .expect("path under root")
                .to_string_lossy()
                .into_owned();
            let bytes = fs::read(&path).map_err(io_err(&path))?;
            out.push((rel, bytes));
        }
    }
    Ok(())
}
