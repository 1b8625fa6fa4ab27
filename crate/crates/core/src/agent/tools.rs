//! The agent-facing tool layer: workspace-contained file access, a scrubbed
//! shell, and budget-metered simulation runs.
//!
//! Agents address files with workspace-rooted paths (`/new_algorithm.py`
//! means `<workspace>/new_algorithm.py`). Every path is resolved lexically
//! and checked against the workspace root; the digest and `Archive/` are
//! writable by nobody at this layer and readable only when the run mode
//! grants it.

use std::fs;
use std::path::{Component, Path, PathBuf};
use std::time::{Duration, Instant};

use serde_json::Value;
use thiserror::Error;

use crate::archive::{ArchiveWriter, ExperimentScore};
use crate::digest::DIGEST_FILENAME;
use crate::playground::{run_sandboxed, ExecPolicy, Playground, SimulationResult};
use crate::util::now_rfc3339;

/// Directory name of the archive inside a workspace.
pub const ARCHIVE_DIRNAME: &str = "Archive";

#[derive(Debug, Error)]
pub enum ToolError {
    #[error("path {0:?} escapes the workspace")]
    PathEscape(String),
    #[error("path {0:?} is not a file")]
    NotAFile(String),
    #[error("{0} is read-only; do not try to write to it")]
    ReadOnly(String),
    #[error("{0} is not available in this run mode")]
    NotAvailable(String),
    #[error("evaluation budget exhausted: no runs remaining")]
    BudgetExhausted,
    #[error("missing required argument {0:?}")]
    MissingArgument(&'static str),
    #[error("unknown tool {0:?}")]
    UnknownTool(String),
    #[error("io error on {path}: {source}")]
    Io {
        path: String,
        source: std::io::Error,
    },
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> ToolError + '_ {
    move |source| ToolError::Io {
        path: path.display().to_string(),
        source,
    }
}

/// Shared evaluation budget for one discovery run.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Budget {
    total: u32,
    used: u32,
}

impl Budget {
    pub fn new(total: u32) -> Budget {
        Budget { total, used: 0 }
    }

    pub fn total(&self) -> u32 {
        self.total
    }

    pub fn used(&self) -> u32 {
        self.used
    }

    pub fn remaining(&self) -> u32 {
        self.total - self.used
    }

    /// Consume one evaluation. Fails without side effects when exhausted.
    pub fn try_consume(&mut self) -> Result<(), ToolError> {
        if self.remaining() == 0 {
            return Err(ToolError::BudgetExhausted);
        }
        self.used += 1;
        Ok(())
    }
}

/// An agent's working directory, the containment root for every tool effect.
#[derive(Debug, Clone)]
pub struct Workspace {
    root: PathBuf,
}

impl Workspace {
    pub fn create(root: &Path) -> Result<Workspace, ToolError> {
        fs::create_dir_all(root).map_err(io_err(root))?;
        let root = root.canonicalize().map_err(io_err(root))?;
        Ok(Workspace { root })
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    /// Resolve an agent-supplied path. A leading `/` addresses the workspace
    /// root. Returns the absolute path and the normalized relative form.
    /// Rejects lexical escapes and symlinks pointing outside the root.
    pub fn resolve(&self, user_path: &str) -> Result<(PathBuf, String), ToolError> {
        let trimmed = user_path.trim();
        if trimmed.is_empty() {
            return Err(ToolError::PathEscape(user_path.to_string()));
        }
        let mut parts: Vec<String> = Vec::new();
        for component in Path::new(trimmed).components() {
            match component {
                Component::Normal(part) => parts.push(part.to_string_lossy().into_owned()),
                Component::CurDir | Component::RootDir => {}
                Component::ParentDir => {
                    if parts.pop().is_none() {
                        return Err(ToolError::PathEscape(user_path.to_string()));
                    }
                }
                Component::Prefix(_) => {
                    return Err(ToolError::PathEscape(user_path.to_string()))
                }
            }
        }
        if parts.is_empty() {
            return Err(ToolError::PathEscape(user_path.to_string()));
        }
        let rel = parts.join("/");
        let abs = self.root.join(&rel);
        // a symlink must not smuggle the access outside the root
        if abs.exists() {
            let real = abs.canonicalize().map_err(|source| ToolError::Io {
                path: trimmed.to_string(),
                source,
            })?;
            if !real.starts_with(&self.root) {
                return Err(ToolError::PathEscape(user_path.to_string()));
            }
        }
        Ok((abs, rel))
    }
}

/// Per-mode visibility and execution limits for the tool layer.
#[derive(Debug, Clone)]
pub struct ToolPolicy {
    pub digest_readable: bool,
    pub archive_readable: bool,
    pub shell: ExecPolicy,
}

impl Default for ToolPolicy {
    fn default() -> Self {
        ToolPolicy {
            digest_readable: true,
            archive_readable: true,
            shell: ExecPolicy {
                timeout: Duration::from_secs(30),
                output_cap: 8 * 1024,
            },
        }
    }
}

fn is_digest(rel: &str) -> bool {
    rel == DIGEST_FILENAME
}

fn is_archive(rel: &str) -> bool {
    rel == ARCHIVE_DIRNAME || rel.starts_with("Archive/")
}

/// Outcome of one tool execution, before formatting into a tool message.
#[derive(Debug, Clone)]
pub struct ToolOutput {
    pub text: String,
    pub score: Option<f64>,
    pub is_error: bool,
    /// Set when run_simulation was refused because the budget is exhausted.
    pub budget_exhausted: bool,
    /// Set when run_simulation consumed one budget unit.
    pub consumed_budget: bool,
    pub wall: Duration,
}

impl ToolOutput {
    fn ok(text: String, wall: Duration) -> ToolOutput {
        ToolOutput {
            text,
            score: None,
            is_error: false,
            budget_exhausted: false,
            consumed_budget: false,
            wall,
        }
    }

    fn error(e: &ToolError, wall: Duration) -> ToolOutput {
        ToolOutput {
            text: format!("error: {e}"),
            score: None,
            is_error: true,
            budget_exhausted: matches!(e, ToolError::BudgetExhausted),
            consumed_budget: false,
            wall,
        }
    }
}

/// Best-scoring candidate observed so far in a run, tracked framework-side
/// so it survives modes that keep no archive.
#[derive(Debug, Clone)]
pub struct BestCandidate {
    pub polarity: crate::playground::Polarity,
    pub score: Option<f64>,
    pub candidate: Vec<u8>,
    pub candidate_name: String,
    pub plan: Option<Vec<u8>>,
}

impl BestCandidate {
    pub fn new(polarity: crate::playground::Polarity) -> BestCandidate {
        BestCandidate {
            polarity,
            score: None,
            candidate: Vec::new(),
            candidate_name: String::new(),
            plan: None,
        }
    }

    fn observe(&mut self, score: f64, candidate_path: &Path, result_files: &[(String, Vec<u8>)]) {
        let improved = match self.score {
            None => true,
            Some(best) => self.polarity.improves(score, best),
        };
        if !improved {
            return;
        }
        if let Ok(bytes) = fs::read(candidate_path) {
            self.score = Some(score);
            self.candidate = bytes;
            self.candidate_name = candidate_path
                .file_name()
                .map(|n| n.to_string_lossy().into_owned())
                .unwrap_or_else(|| "candidate".to_string());
            self.plan = result_files
                .iter()
                .find(|(name, _)| name == "plan.json")
                .map(|(_, bytes)| bytes.clone());
        }
    }
}

/// Executes tool calls for one agent.
pub struct ToolExecutor<'a> {
    pub workspace: &'a Workspace,
    pub playground: &'a dyn Playground,
    pub policy: ToolPolicy,
    pub budget: &'a mut Budget,
    pub archive: Option<&'a mut ArchiveWriter>,
    pub best: Option<&'a mut BestCandidate>,
    /// Monotone per-agent counter for scratch directories.
    pub simulations_started: u32,
}

impl<'a> ToolExecutor<'a> {
    pub fn execute(&mut self, name: &str, arguments: &Value) -> ToolOutput {
        let started = Instant::now();
        let result = match name {
            "run_simulation" => self.run_simulation(arguments),
            "shell" => self.shell(arguments),
            "read_file" => self.read_file(arguments),
            "write_file" => self.write_file(arguments),
            other => Err(ToolError::UnknownTool(other.to_string())),
        };
        match result {
            Ok(output) => output,
            Err(e) => ToolOutput::error(&e, started.elapsed()),
        }
    }

    fn str_arg(arguments: &Value, key: &'static str) -> Result<String, ToolError> {
        arguments
            .get(key)
            .and_then(Value::as_str)
            .map(str::to_string)
            .ok_or(ToolError::MissingArgument(key))
    }

    fn run_simulation(&mut self, arguments: &Value) -> Result<ToolOutput, ToolError> {
        let started = Instant::now();
        let started_at = now_rfc3339();
        let file_path = Self::str_arg(arguments, "file_path")?;
        let (abs, rel) = self.workspace.resolve(&file_path)?;
        if !abs.is_file() {
            return Err(ToolError::NotAFile(rel));
        }
        // A refused run must not consume budget; a started run always does,
        // even when the candidate fails.
        self.budget.try_consume()?;
        self.simulations_started += 1;
        let scratch = self
            .workspace
            .root()
            .join(".sim")
            .join(format!("run_{:03}", self.simulations_started));
        let result = self.playground.run_candidate(&abs, &scratch);

        let (score, text, experiment_score, result_files) = match &result {
            SimulationResult::Scored {
                score,
                detail,
                result_files,
            } => (
                Some(*score),
                format!("score: {score}\n{detail}"),
                ExperimentScore::Value(*score),
                result_files.clone(),
            ),
            SimulationResult::Failed { reason, detail } => (
                None,
                format!("simulation failed: {reason}\n{detail}"),
                ExperimentScore::Failed(reason.clone()),
                Vec::new(),
            ),
        };
        if let Some(archive) = self.archive.as_deref_mut() {
            archive
                .record_experiment(&abs, experiment_score, &result_files, started_at)
                .map_err(|e| ToolError::Io {
                    path: format!("/{rel}"),
                    source: std::io::Error::other(e.to_string()),
                })?;
        }
        if let (Some(best), Some(score)) = (self.best.as_deref_mut(), score) {
            best.observe(score, &abs, &result_files);
        }
        Ok(ToolOutput {
            text,
            score,
            is_error: score.is_none(),
            budget_exhausted: false,
            consumed_budget: true,
            wall: started.elapsed(),
        })
    }

    fn shell(&mut self, arguments: &Value) -> Result<ToolOutput, ToolError> {
        let started = Instant::now();
        let command = Self::str_arg(arguments, "command")?;
        let outcome = run_sandboxed(
            "/bin/sh",
            &["-c".to_string(), command],
            self.workspace.root(),
            &self.policy.shell,
        )
        .map_err(|source| ToolError::Io {
            path: "/bin/sh".to_string(),
            source,
        })?;
        let mut text = String::new();
        if !outcome.stdout.is_empty() {
            text.push_str(&outcome.stdout);
        }
        if !outcome.stderr.is_empty() {
            if !text.is_empty() {
                text.push('\n');
            }
            text.push_str("stderr:\n");
            text.push_str(&outcome.stderr);
        }
        let failed = outcome.timed_out || outcome.status != Some(0);
        if failed {
            if !text.is_empty() {
                text.push('\n');
            }
            text.push_str(&outcome.to_string());
        }
        let mut output = ToolOutput::ok(text, started.elapsed());
        output.is_error = failed;
        Ok(output)
    }

    fn read_file(&mut self, arguments: &Value) -> Result<ToolOutput, ToolError> {
        let started = Instant::now();
        let target = Self::str_arg(arguments, "target_file")?;
        let (abs, rel) = self.workspace.resolve(&target)?;
        if is_digest(&rel) && !self.policy.digest_readable {
            return Err(ToolError::NotAvailable(format!("/{rel}")));
        }
        if is_archive(&rel) && !self.policy.archive_readable {
            return Err(ToolError::NotAvailable(format!("/{rel}")));
        }
        let bytes = fs::read(&abs).map_err(|source| ToolError::Io {
            path: format!("/{rel}"),
            source,
        })?;
        Ok(ToolOutput::ok(
            String::from_utf8_lossy(&bytes).into_owned(),
            started.elapsed(),
        ))
    }

    fn write_file(&mut self, arguments: &Value) -> Result<ToolOutput, ToolError> {
        let started = Instant::now();
        let file_path = Self::str_arg(arguments, "file_path")?;
        let contents = Self::str_arg(arguments, "contents")?;
        let (abs, rel) = self.workspace.resolve(&file_path)?;
        if is_digest(&rel) {
            return Err(ToolError::ReadOnly(format!("/{DIGEST_FILENAME}")));
        }
        if is_archive(&rel) {
            return Err(ToolError::ReadOnly(format!("/{ARCHIVE_DIRNAME}/")));
        }
        if let Some(parent) = abs.parent() {
            fs::create_dir_all(parent).map_err(|source| ToolError::Io {
                path: format!("/{rel}"),
                source,
            })?;
        }
        fs::write(&abs, contents.as_bytes()).map_err(|source| ToolError::Io {
            path: format!("/{rel}"),
            source,
        })?;
        Ok(ToolOutput::ok(
            format!(
                "wrote {} bytes to /{rel} (fnv1a64 {:016x})",
                contents.len(),
                crate::util::fnv1a64(contents.as_bytes())
            ),
            started.elapsed(),
        ))
    }
}
