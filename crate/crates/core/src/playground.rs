//! Pluggable evaluation backends for candidate programs.
//!
//! A playground accepts a candidate file, runs it in a sandboxed subprocess
//! (scrubbed environment, wall-clock timeout, capped output), and produces a
//! score. The multicast playground invokes candidates as
//! `<candidate> <topology_file> <transfer_file> <plan_out_file>` and scores
//! the emitted plan with the [`crate::evaluator`].

use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Stdio};
use std::time::{Duration, Instant};

use thiserror::Error;

use crate::evaluator::{self, parse_plan};
use crate::topology::{Topology, TransferSpec};

/// Whether larger or smaller scores are better for a playground.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Polarity {
    HigherBetter,
    LowerBetter,
}

impl Polarity {
    /// True when `candidate` strictly improves on `incumbent`.
    pub fn improves(self, candidate: f64, incumbent: f64) -> bool {
        match self {
            Polarity::HigherBetter => candidate > incumbent,
            Polarity::LowerBetter => candidate < incumbent,
        }
    }

    /// The better of two scores.
    pub fn better(self, a: f64, b: f64) -> f64 {
        if self.improves(b, a) {
            b
        } else {
            a
        }
    }
}

/// Outcome of one candidate run.
#[derive(Debug, Clone)]
pub enum SimulationResult {
    /// The candidate produced an evaluable artifact.
    Scored {
        score: f64,
        /// Human-readable breakdown shown to the agent.
        detail: String,
        /// Files to persist under the experiment's `results/` directory.
        result_files: Vec<(String, Vec<u8>)>,
    },
    /// The candidate crashed, timed out, or produced an unusable artifact.
    Failed { reason: String, detail: String },
}

impl SimulationResult {
    pub fn score(&self) -> Option<f64> {
        match self {
            SimulationResult::Scored { score, .. } => Some(*score),
            SimulationResult::Failed { .. } => None,
        }
    }
}

/// An evaluation backend that scores candidate program files.
pub trait Playground {
    /// Stable identifier used in run configs.
    fn id(&self) -> &'static str;
    /// Task description appended to the agent system prompt.
    fn task_description(&self) -> String;
    fn polarity(&self) -> Polarity;
    /// Filename the agent is told to write its candidate to.
    fn candidate_filename(&self) -> String;
    /// Execute the candidate and score it. `scratch_dir` is a fresh
    /// directory the run may use for intermediate files.
    fn run_candidate(&self, candidate: &Path, scratch_dir: &Path) -> SimulationResult;
}

#[derive(Debug, Error)]
pub enum PlaygroundError {
    #[error("unknown playground id {0:?}")]
    UnknownId(String),
}

/// Sandboxed subprocess execution: scrubbed environment, timeout, capped
/// captured output.
#[derive(Debug, Clone)]
pub struct ExecPolicy {
    pub timeout: Duration,
    pub output_cap: usize,
}

impl Default for ExecPolicy {
    fn default() -> Self {
        ExecPolicy {
            timeout: Duration::from_secs(60),
            output_cap: 8 * 1024,
        }
    }
}

/// Result of running a subprocess under an [`ExecPolicy`].
#[derive(Debug)]
pub struct ExecOutcome {
    pub status: Option<i32>,
    pub timed_out: bool,
    pub stdout: String,
    pub stderr: String,
    pub wall: Duration,
}

impl fmt::Display for ExecOutcome {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.timed_out {
            write!(f, "timed out after {:.1}s", self.wall.as_secs_f64())
        } else {
            match self.status {
                Some(code) => write!(f, "exit status {code}"),
                None => write!(f, "terminated by signal"),
            }
        }
    }
}

fn truncate_output(mut text: String, cap: usize) -> String {
    if text.len() > cap {
        let mut cut = cap;
        while cut > 0 && !text.is_char_boundary(cut) {
            cut -= 1;
        }
        text.truncate(cut);
        text.push_str("\n[output truncated]");
    }
    text
}

/// Run `program args...` with cwd `workdir`, environment scrubbed to a
/// minimal allowlist, stdin closed, and a hard wall-clock timeout.
pub fn run_sandboxed(
    program: &str,
    args: &[String],
    workdir: &Path,
    policy: &ExecPolicy,
) -> std::io::Result<ExecOutcome> {
    let started = Instant::now();
    let mut child = Command::new(program)
        .args(args)
        .current_dir(workdir)
        .env_clear()
        .env("PATH", "/usr/local/bin:/usr/bin:/bin")
        .env("HOME", workdir)
        .env("LC_ALL", "C")
        .stdin(Stdio::null())
        .stdout(Stdio::piped())
        .stderr(Stdio::piped())
        .spawn()?;

    // Drain pipes on threads so a chatty child cannot deadlock on a full pipe.
    let stdout_pipe = child.stdout.take().expect("piped stdout");
    let stderr_pipe = child.stderr.take().expect("piped stderr");
    let out_thread = std::thread::spawn(move || read_all(stdout_pipe));
    let err_thread = std::thread::spawn(move || read_all(stderr_pipe));

    let mut timed_out = false;
    let status = loop {
        if let Some(status) = child.try_wait()? {
            break Some(status);
        }
        if started.elapsed() >= policy.timeout {
            timed_out = true;
            let _ = child.kill();
            let _ = child.wait();
            break None;
        }
        std::thread::sleep(Duration::from_millis(5));
    };

    let stdout = out_thread.join().unwrap_or_default();
    let stderr = err_thread.join().unwrap_or_default();
    Ok(ExecOutcome {
        status: status.and_then(|s| s.code()),
        timed_out,
        stdout: truncate_output(stdout, policy.output_cap),
        stderr: truncate_output(stderr, policy.output_cap),
        wall: started.elapsed(),
    })
}

/// Make a path absolute against the current directory (no symlink
/// resolution needed; the path may not exist yet).
fn absolutize(path: &Path) -> PathBuf {
    if path.is_absolute() {
        path.to_path_buf()
    } else {
        std::env::current_dir()
            .map(|cwd| cwd.join(path))
            .unwrap_or_else(|_| path.to_path_buf())
    }
}

fn read_all(mut pipe: impl std::io::Read) -> String {
    let mut buffer = Vec::new();
    let _ = pipe.read_to_end(&mut buffer);
    String::from_utf8_lossy(&buffer).into_owned()
}

/// The multi-cloud multicast playground.
pub struct MulticastPlayground {
    topology: Topology,
    spec: TransferSpec,
    topology_path: PathBuf,
    spec_path: PathBuf,
    /// Interpreter prefix, e.g. `["/bin/sh"]` or `["python3"]`. Empty means
    /// the candidate file is executed directly.
    command_prefix: Vec<String>,
    candidate_filename: String,
    exec: ExecPolicy,
}

impl MulticastPlayground {
    pub fn new(
        topology: Topology,
        spec: TransferSpec,
        topology_path: PathBuf,
        spec_path: PathBuf,
        command_prefix: Vec<String>,
        candidate_filename: String,
        exec: ExecPolicy,
    ) -> MulticastPlayground {
        // candidates run with a different cwd, so input paths must survive it
        MulticastPlayground {
            topology,
            spec,
            topology_path: absolutize(&topology_path),
            spec_path: absolutize(&spec_path),
            command_prefix,
            candidate_filename,
            exec,
        }
    }

    pub fn topology(&self) -> &Topology {
        &self.topology
    }

    pub fn spec(&self) -> &TransferSpec {
        &self.spec
    }
}

impl Playground for MulticastPlayground {
    fn id(&self) -> &'static str {
        "multicast"
    }

    fn polarity(&self) -> Polarity {
        Polarity::HigherBetter
    }

    fn candidate_filename(&self) -> String {
        self.candidate_filename.clone()
    }

    fn task_description(&self) -> String {
        let dsts: Vec<&str> = self.spec.dsts.iter().map(String::as_str).collect();
        format!(
            "Design an efficient broadcast routing algorithm for multi-cloud multicast.\n\
             \n\
             The system broadcasts data from a source node to multiple destination nodes\n\
             across cloud networks. Data is split into {k} partitions (stripes) that can\n\
             be routed independently, and each partition must reach every destination.\n\
             The network is a directed graph whose nodes are cloud regions formatted as\n\
             provider:region. Each directed edge has a cost ($/GB) and a throughput\n\
             (Gbps). Per-VM provider ingress/egress limits apply (defaults: AWS\n\
             ingress=10, egress=5; GCP ingress=16, egress=7; Azure ingress=16,\n\
             egress=16) along with per-region VM caps, all given in the topology file.\n\
             \n\
             Transfer time is bottleneck-driven:\n\
             edge_time = (#partitions using edge) x (partition size in GB) x 8\n\
                         / (edge throughput in Gbps).\n\
             A partition's transfer time is the maximum edge-time along its path; a\n\
             destination completes when all its partitions complete; the overall\n\
             transfer time is the maximum completion time over destinations and must\n\
             fit the time budget.\n\
             \n\
             Total cost = egress cost + instance cost. Egress cost sums, over all\n\
             edges, the number of partitions using the edge times the partition size\n\
             times the edge cost ($/GB). Instance cost charges VM runtime over the\n\
             time budget. The combined score is 1 / (1 + total cost), so lower cost\n\
             yields a higher score. Infeasible plans score 0.\n\
             \n\
             Your candidate program is invoked as:\n\
             <candidate> <topology_file> <transfer_file> <plan_out_file>\n\
             It must exit 0 and write a plan file of the form\n\
             {{\"src\": ..., \"dsts\": [...], \"partitions\": K,\n\
              \"paths\": [{{\"dst\": ..., \"k\": ..., \"edges\": [[\"u\",\"v\"], ...]}}, ...]}}\n\
             covering every (destination, partition) pair with a contiguous path from\n\
             the source.\n\
             \n\
             This instance: source {src}, destinations {dsts}, {size} GB total,\n\
             time budget {budget} s, {k} partitions.\n",
            k = self.spec.partitions,
            src = self.spec.src,
            dsts = dsts.join(", "),
            size = self.spec.size_gb,
            budget = self.spec.time_budget_s,
        )
    }

    fn run_candidate(&self, candidate: &Path, scratch_dir: &Path) -> SimulationResult {
        if let Err(e) = fs::create_dir_all(scratch_dir) {
            return SimulationResult::Failed {
                reason: format!("could not create scratch dir: {e}"),
                detail: String::new(),
            };
        }
        let plan_path = absolutize(&scratch_dir.join("plan.json"));
        let _ = fs::remove_file(&plan_path);

        let candidate = absolutize(candidate);
        let (program, mut args) = match self.command_prefix.split_first() {
            Some((head, rest)) => (head.clone(), rest.to_vec()),
            None => (candidate.display().to_string(), Vec::new()),
        };
        if !self.command_prefix.is_empty() {
            args.push(candidate.display().to_string());
        }
        args.push(self.topology_path.display().to_string());
        args.push(self.spec_path.display().to_string());
        args.push(plan_path.display().to_string());

        let outcome = match run_sandboxed(&program, &args, scratch_dir, &self.exec) {
            Ok(outcome) => outcome,
            Err(e) => {
                return SimulationResult::Failed {
                    reason: format!("could not launch candidate: {e}"),
                    detail: String::new(),
                }
            }
        };
        let detail = format!("stdout:\n{}\nstderr:\n{}", outcome.stdout, outcome.stderr);

        if outcome.timed_out {
            return SimulationResult::Failed {
                reason: format!(
                    "{outcome}. Timeouts mean the algorithm is too slow, not that the idea is wrong."
                ),
                detail,
            };
        }
        if outcome.status != Some(0) {
            return SimulationResult::Failed {
                reason: outcome.to_string(),
                detail,
            };
        }
        // failure reasons must not leak host paths: archived score files and
        // replay comparisons depend on location-independent text
        if !plan_path.is_file() {
            return SimulationResult::Failed {
                reason: "candidate exited 0 but wrote no plan file".to_string(),
                detail,
            };
        }
        let plan = match fs::read_to_string(&plan_path)
            .map_err(|e| e.to_string())
            .and_then(|text| parse_plan(&text).map_err(|e| e.to_string()))
        {
            Ok(plan) => plan,
            Err(reason) => {
                return SimulationResult::Failed {
                    reason: format!("plan file invalid: {reason}"),
                    detail,
                }
            }
        };

        let structural = evaluator::verify_plan(&plan, &self.topology, &self.spec);
        if !structural.is_empty() {
            return SimulationResult::Failed {
                reason: format!("plan verification failed: {}", structural.join("; ")),
                detail,
            };
        }

        let report = evaluator::evaluate(&plan, &self.topology, &self.spec);
        let summary = format!(
            "feasible={} total_cost={} egress_cost={} instance_cost={} transfer_time_s={} score={}{}",
            report.feasible,
            report.total_cost,
            report.egress_cost,
            report.instance_cost,
            report.transfer_time_s,
            report.combined_score,
            if report.violations.is_empty() {
                String::new()
            } else {
                format!("\nviolations: {}", report.violations.join("; "))
            }
        );
        let report_bytes =
            serde_json::to_vec_pretty(&report).expect("report serialization cannot fail");
        SimulationResult::Scored {
            score: report.combined_score,
            detail: summary,
            result_files: vec![
                ("plan.json".to_string(), fs::read(&plan_path).unwrap_or_default()),
                ("report.json".to_string(), report_bytes),
            ],
        }
    }
}
