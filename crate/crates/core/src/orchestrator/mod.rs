//! The discovery loop: sequence fresh-context agents over one shared
//! evaluation budget, manage digest/archive handoffs, apply ablation modes,
//! and emit run reports with progress curves.

pub mod metrics;

pub use metrics::{
    aggregate, best_so_far_curve, bootstrap_ci, median, normalized_auc, MetricsError,
    RunAggregate,
};

use std::fs;
use std::path::{Path, PathBuf};
use std::time::Duration;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::agent::tools::{BestCandidate, Budget, ToolPolicy, Workspace};
use crate::agent::{
    build_system_prompt, run_agent, AgentEnv, AgentLimits, AgentOutcome, HttpDriver, LlmDriver,
    Role, ScriptedAction, ScriptedDriver,
};
use crate::archive::ArchiveWriter;
use crate::digest::{
    append_entry, entry_count, parse_summary, DigestEntry, DigestError, DIGEST_FILENAME,
};
use crate::evaluator;
use crate::milp;
use crate::playground::{ExecPolicy, MulticastPlayground, Playground};
use crate::topology::{load_topology, load_transfer_spec, save_topology, save_transfer_spec};
use crate::util::{atomic_write, fnv1a64};

/// Run modes: the full system plus the ablations.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RunMode {
    Full,
    SingleAgent,
    Summarization,
    Sequential,
    NoArchive,
    NoDigest,
}

impl RunMode {
    /// Does the digest exist (and get appended to) in this mode?
    pub fn has_digest(self) -> bool {
        !matches!(self, RunMode::Sequential | RunMode::NoDigest)
    }

    /// Does the archive exist in this mode?
    pub fn has_archive(self) -> bool {
        !matches!(self, RunMode::Sequential | RunMode::NoArchive)
    }

    /// Single-context modes run exactly one agent.
    pub fn single_context(self) -> bool {
        matches!(self, RunMode::SingleAgent | RunMode::Summarization)
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct AgentLimitsConfig {
    #[serde(default = "default_max_tool_calls")]
    pub max_tool_calls: u32,
    #[serde(default = "default_wall_clock_s")]
    pub wall_clock_s: f64,
    #[serde(default)]
    pub summarize_threshold_tokens: Option<usize>,
}

fn default_max_tool_calls() -> u32 {
    128
}

fn default_wall_clock_s() -> f64 {
    1800.0
}

impl Default for AgentLimitsConfig {
    fn default() -> Self {
        AgentLimitsConfig {
            max_tool_calls: default_max_tool_calls(),
            wall_clock_s: default_wall_clock_s(),
            summarize_threshold_tokens: None,
        }
    }
}

/// Which driver produces assistant turns.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum DriverConfig {
    /// Deterministic scripts, one per agent in sequence.
    Scripted { scripts: Vec<Vec<ScriptedAction>> },
    /// Chat-completions endpoint; auth token from the environment.
    Http {
        #[serde(default)]
        model: Option<String>,
        #[serde(default)]
        base_url: Option<String>,
    },
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PlaygroundConfig {
    /// Playground identifier; `multicast` is the one shipped here.
    pub id: String,
    pub topology: PathBuf,
    pub transfer: PathBuf,
    /// Interpreter prefix for candidate programs, e.g. `["/bin/sh"]` or
    /// `["python3"]`; empty runs the candidate directly.
    #[serde(default)]
    pub candidate_command: Vec<String>,
    /// Optional baseline program copied into the workspace at run start,
    /// keeping its filename.
    #[serde(default)]
    pub initial_program: Option<PathBuf>,
    #[serde(default = "default_candidate_filename")]
    pub candidate_filename: String,
    #[serde(default = "default_sim_timeout_s")]
    pub sim_timeout_s: f64,
    #[serde(default = "default_output_cap")]
    pub sim_output_cap: usize,
}

fn default_candidate_filename() -> String {
    "new_algorithm.py".to_string()
}

fn default_sim_timeout_s() -> f64 {
    60.0
}

fn default_output_cap() -> usize {
    8 * 1024
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RunConfig {
    #[serde(default = "default_budget")]
    pub total_eval_budget: u32,
    #[serde(default = "default_max_agents")]
    pub max_agents: u32,
    pub mode: RunMode,
    #[serde(default)]
    pub seed: u64,
    pub driver: DriverConfig,
    pub playground: PlaygroundConfig,
    #[serde(default)]
    pub limits: AgentLimitsConfig,
}

fn default_budget() -> u32 {
    100
}

fn default_max_agents() -> u32 {
    10
}

#[derive(Debug, Error)]
pub enum OrchestratorError {
    #[error("config error: {0}")]
    Config(String),
    #[error("topology error: {0}")]
    Topology(#[from] crate::topology::TopologyError),
    #[error("digest error: {0}")]
    Digest(#[from] DigestError),
    #[error("archive error: {0}")]
    Archive(#[from] crate::archive::ArchiveError),
    #[error("agent error: {0}")]
    Agent(#[from] crate::agent::AgentError),
    #[error("tool error: {0}")]
    Tool(#[from] crate::agent::ToolError),
    #[error("driver error: {0}")]
    Driver(#[from] crate::agent::DriverError),
    #[error(
        "workspace corruption: digest prefix changed under us (expected hash {expected:016x}, \
         found {found:016x})"
    )]
    DigestCorrupted { expected: u64, found: u64 },
    #[error("io error on {path}: {source}")]
    Io {
        path: String,
        source: std::io::Error,
    },
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> OrchestratorError + '_ {
    move |source| OrchestratorError::Io {
        path: path.display().to_string(),
        source,
    }
}

pub fn parse_run_config(text: &str) -> Result<RunConfig, OrchestratorError> {
    serde_json::from_str(text).map_err(|e| OrchestratorError::Config(e.to_string()))
}

/// Load a run config; relative playground paths are resolved against the
/// config file's directory.
pub fn load_run_config(path: &Path) -> Result<RunConfig, OrchestratorError> {
    let text = fs::read_to_string(path).map_err(io_err(path))?;
    let mut config = parse_run_config(&text)?;
    let base = path.parent().unwrap_or_else(|| Path::new("."));
    for p in [
        &mut config.playground.topology,
        &mut config.playground.transfer,
    ] {
        if p.is_relative() {
            *p = base.join(&*p);
        }
    }
    if let Some(p) = config.playground.initial_program.as_mut() {
        if p.is_relative() {
            *p = base.join(&*p);
        }
    }
    Ok(config)
}

/// One evaluation in run order (deterministic part; wall time lives only in
/// the events CSV).
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ReportEvent {
    pub eval_index: u32,
    pub agent: u32,
    /// None when the candidate failed to produce a score.
    pub score: Option<f64>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CurvePoint {
    pub evals_used: u32,
    pub best_so_far: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct AgentReport {
    pub agent_number: u32,
    pub simulations_run: u32,
    pub best_score: Option<f64>,
    pub stuck_ever: bool,
    pub summary_parsed: bool,
    pub budget_exhausted_seen: bool,
    /// Digest entries visible when this agent started.
    pub digest_entries_at_start: usize,
}

/// The structured run outcome, serialized as `report.json`. Deterministic
/// for scripted drivers: no wall-clock data, run-dir-relative paths.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RunReport {
    pub mode: RunMode,
    pub total_eval_budget: u32,
    pub evaluations_used: u32,
    pub best_score: Option<f64>,
    pub best_plan: Option<String>,
    pub best_candidate: Option<String>,
    pub digest_path: Option<String>,
    pub archive_root: Option<String>,
    pub digest_bytes: u64,
    pub agents: Vec<AgentReport>,
    pub events: Vec<ReportEvent>,
    pub curve: Vec<CurvePoint>,
}

pub fn load_run_report(path: &Path) -> Result<RunReport, OrchestratorError> {
    let text = fs::read_to_string(path).map_err(io_err(path))?;
    serde_json::from_str(&text).map_err(|e| OrchestratorError::Config(e.to_string()))
}

/// Everything a run produced: the persisted report plus in-memory agent
/// outcomes (with transcripts) for callers that inspect them.
pub struct DiscoveryResult {
    pub report: RunReport,
    pub outcomes: Vec<AgentOutcome>,
    pub run_dir: PathBuf,
}

struct DigestGuard {
    path: PathBuf,
    len: usize,
    hash: u64,
}

impl DigestGuard {
    fn new(path: PathBuf) -> DigestGuard {
        DigestGuard {
            path,
            len: 0,
            hash: fnv1a64(b""),
        }
    }

    /// Verify the previously observed prefix is intact, then append.
    fn append(&mut self, entry: &DigestEntry) -> Result<(), OrchestratorError> {
        if self.len > 0 {
            let bytes = fs::read(&self.path).map_err(io_err(&self.path))?;
            if bytes.len() < self.len {
                return Err(OrchestratorError::DigestCorrupted {
                    expected: self.hash,
                    found: fnv1a64(&bytes),
                });
            }
            let found = fnv1a64(&bytes[..self.len]);
            if found != self.hash {
                return Err(OrchestratorError::DigestCorrupted {
                    expected: self.hash,
                    found,
                });
            }
        }
        append_entry(&self.path, entry)?;
        let bytes = fs::read(&self.path).map_err(io_err(&self.path))?;
        self.len = bytes.len();
        self.hash = fnv1a64(&bytes);
        Ok(())
    }
}

fn workspace_layout(mode: RunMode, candidate: &str, seed_file: Option<&str>) -> String {
    let mut lines = vec![
        "/                     workspace root".to_string(),
        format!("/{candidate}     your working candidate program (create it if missing)"),
        "/topology.json        network topology (input, do not modify)".to_string(),
        "/transfer.json        transfer instance (input, do not modify)".to_string(),
    ];
    if let Some(name) = seed_file {
        lines.push(format!("/{name}     baseline program to start from"));
    }
    if mode.has_digest() {
        lines.push(format!(
            "/{DIGEST_FILENAME}   summaries from previous agents (READ-ONLY)"
        ));
    }
    if mode.has_archive() {
        lines.push(
            "/Archive/             archived experiments of previous agents (READ-ONLY)"
                .to_string(),
        );
    }
    lines.join("\n")
}

/// Stub appended when an agent's final message has no parseable summary, so
/// the handoff is preserved rather than lost.
fn stub_entry(agent_number: u32, final_message: &str) -> DigestEntry {
    let mut entry = DigestEntry::empty(agent_number);
    entry.mode_reason = "summary missing; raw final message preserved below".to_string();
    entry.extras.push((
        "Unstructured Final Message".to_string(),
        final_message.trim().to_string(),
    ));
    entry
}

/// Reset a sequential-mode workspace: keep only the playground inputs, then
/// restore the carried candidate.
fn reset_workspace_for_sequential(
    workspace: &Workspace,
    candidate_filename: &str,
    seed_file: Option<&str>,
    best: &BestCandidate,
) -> Result<(), OrchestratorError> {
    let mut keep = vec!["topology.json", "transfer.json"];
    if let Some(name) = seed_file {
        keep.push(name);
    }
    for entry in fs::read_dir(workspace.root()).map_err(io_err(workspace.root()))? {
        let entry = entry.map_err(io_err(workspace.root()))?;
        let name = entry.file_name().to_string_lossy().into_owned();
        if keep.contains(&name.as_str()) {
            continue;
        }
        let path = entry.path();
        if path.is_dir() {
            fs::remove_dir_all(&path).map_err(io_err(&path))?;
        } else {
            fs::remove_file(&path).map_err(io_err(&path))?;
        }
    }
    if !best.candidate.is_empty() {
        let target = workspace.root().join(candidate_filename);
        fs::write(&target, &best.candidate).map_err(io_err(&target))?;
    }
    Ok(())
}

/// Render an agent transcript as a console log.
fn render_console_log(outcome: &AgentOutcome) -> String {
    let mut out = String::new();
    for message in &outcome.state.transcript {
        let role = match message.role {
            Role::System => "system",
            Role::User => "user",
            Role::Assistant => "assistant",
            Role::Tool => "tool",
        };
        out.push_str(&format!("=== {role} ===\n{}\n\n", message.content));
    }
    out
}

/// Run the full discovery loop in `run_dir`.
///
/// Agents run strictly in sequence over one shared budget. Once the budget
/// is exhausted no new agent starts (the active agent is informed through a
/// budget-exhausted tool error and summarizes); at least one agent always
/// runs so a zero-budget run still produces a handoff.
pub fn run_discovery(
    config: &RunConfig,
    run_dir: &Path,
) -> Result<DiscoveryResult, OrchestratorError> {
    if config.playground.id != "multicast" {
        return Err(OrchestratorError::Config(format!(
            "unknown playground id {:?}",
            config.playground.id
        )));
    }
    if config.max_agents == 0 {
        return Err(OrchestratorError::Config("max_agents must be >= 1".into()));
    }
    for (name, value) in [
        ("playground.sim_timeout_s", config.playground.sim_timeout_s),
        ("limits.wall_clock_s", config.limits.wall_clock_s),
    ] {
        if !(value > 0.0 && value.is_finite()) {
            return Err(OrchestratorError::Config(format!(
                "{name} must be a positive number, got {value}"
            )));
        }
    }
    fs::create_dir_all(run_dir).map_err(io_err(run_dir))?;
    let workspace = Workspace::create(&run_dir.join("workspace"))?;
    for stale in [DIGEST_FILENAME, "Archive"] {
        if workspace.root().join(stale).exists() {
            return Err(OrchestratorError::Config(format!(
                "run directory already holds a {stale}; choose a fresh --out"
            )));
        }
    }

    // playground inputs live inside the workspace, visible to agents and
    // candidates alike
    let topology = load_topology(&config.playground.topology)?;
    let spec = load_transfer_spec(&config.playground.transfer)?;
    crate::topology::validate_spec(&spec, &topology).map_err(|vs| {
        OrchestratorError::Config(format!(
            "transfer spec invalid for topology: {}",
            vs.iter()
                .map(|v| v.to_string())
                .collect::<Vec<_>>()
                .join("; ")
        ))
    })?;
    let topo_path = workspace.root().join("topology.json");
    let spec_path = workspace.root().join("transfer.json");
    save_topology(&topo_path, &topology)?;
    save_transfer_spec(&spec_path, &spec)?;
    let mut seed_file = None;
    if let Some(source) = &config.playground.initial_program {
        let name = source
            .file_name()
            .map(|n| n.to_string_lossy().into_owned())
            .unwrap_or_else(|| "initial_program".to_string());
        let target = workspace.root().join(&name);
        fs::copy(source, &target).map_err(io_err(source))?;
        seed_file = Some(name);
    }

    let playground = MulticastPlayground::new(
        topology,
        spec,
        topo_path,
        spec_path,
        config.playground.candidate_command.clone(),
        config.playground.candidate_filename.clone(),
        ExecPolicy {
            timeout: Duration::from_secs_f64(config.playground.sim_timeout_s),
            output_cap: config.playground.sim_output_cap,
        },
    );

    let mode = config.mode;
    let digest_path = workspace.root().join(DIGEST_FILENAME);
    let archive_root = workspace.root().join("Archive");
    let mut digest_guard = DigestGuard::new(digest_path.clone());
    let mut budget = Budget::new(config.total_eval_budget);
    let mut best = BestCandidate::new(playground.polarity());

    let max_agents = if mode.single_context() {
        1
    } else {
        config.max_agents
    };
    let summarize_threshold = match mode {
        RunMode::Summarization => config.limits.summarize_threshold_tokens.or(Some(12_000)),
        _ => config.limits.summarize_threshold_tokens,
    };
    let limits = AgentLimits {
        max_tool_calls: config.limits.max_tool_calls,
        wall_clock: Duration::from_secs_f64(config.limits.wall_clock_s),
        summarize_threshold_tokens: summarize_threshold,
        max_plain_turns: 8,
    };

    let mut outcomes: Vec<AgentOutcome> = Vec::new();
    let mut agent_reports: Vec<AgentReport> = Vec::new();
    let mut events: Vec<ReportEvent> = Vec::new();
    let mut event_walls: Vec<f64> = Vec::new();

    for agent_number in 1..=max_agents {
        if agent_number > 1 && budget.remaining() == 0 {
            break;
        }
        let digest_entries_at_start = if mode.has_digest() {
            entry_count(&digest_path)?
        } else {
            0
        };
        if mode == RunMode::Sequential && agent_number > 1 {
            reset_workspace_for_sequential(
                &workspace,
                &config.playground.candidate_filename,
                seed_file.as_deref(),
                &best,
            )?;
        }

        let mut driver: Box<dyn LlmDriver> = match &config.driver {
            DriverConfig::Scripted { scripts } => Box::new(ScriptedDriver::new(
                scripts
                    .get(agent_number as usize - 1)
                    .cloned()
                    .unwrap_or_default(),
            )),
            DriverConfig::Http { model, base_url } => {
                Box::new(HttpDriver::from_env(model.clone(), base_url.clone())?)
            }
        };

        let system_prompt = build_system_prompt(
            agent_number,
            &workspace_layout(mode, &config.playground.candidate_filename, seed_file.as_deref()),
            &playground.task_description(),
        );
        let mut archive_writer = if mode.has_archive() {
            Some(ArchiveWriter::create(&archive_root, agent_number)?)
        } else {
            None
        };
        let policy = ToolPolicy {
            digest_readable: mode.has_digest(),
            archive_readable: mode.has_archive(),
            ..ToolPolicy::default()
        };
        let mut env = AgentEnv {
            workspace: &workspace,
            playground: &playground,
            budget: &mut budget,
            archive: archive_writer.as_mut(),
            best: Some(&mut best),
            policy,
        };
        let outcome = run_agent(
            agent_number,
            &system_prompt,
            driver.as_mut(),
            &mut env,
            &limits,
        )?;

        for event in &outcome.events {
            events.push(ReportEvent {
                eval_index: events.len() as u32 + 1,
                agent: agent_number,
                score: event.score,
            });
            event_walls.push(event.wall_s);
        }

        let parsed = parse_summary(&outcome.final_message, agent_number);
        let summary_parsed = parsed.is_ok();
        if mode.has_digest() {
            let entry = match parsed {
                Ok(entry) => entry,
                Err(DigestError::MissingSummaryHeading) => {
                    stub_entry(agent_number, &outcome.final_message)
                }
                Err(other) => return Err(other.into()),
            };
            digest_guard.append(&entry)?;
        }
        if let Some(writer) = archive_writer.as_mut() {
            writer.finalize(&render_console_log(&outcome))?;
        }

        agent_reports.push(AgentReport {
            agent_number,
            simulations_run: outcome.state.simulations_run,
            best_score: outcome.best_score,
            stuck_ever: outcome.state.stuck_flag
                || outcome.state.consecutive_non_improving >= crate::agent::STUCK_THRESHOLD,
            summary_parsed,
            budget_exhausted_seen: outcome.budget_exhausted_seen,
            digest_entries_at_start,
        });
        outcomes.push(outcome);
    }

    // persist best artifacts
    let best_candidate_rel = if best.candidate.is_empty() {
        None
    } else {
        let name = format!("best_{}", best.candidate_name);
        atomic_write(&run_dir.join(&name), &best.candidate).map_err(io_err(run_dir))?;
        Some(name)
    };
    let best_plan_rel = match &best.plan {
        Some(bytes) => {
            atomic_write(&run_dir.join("best_plan.json"), bytes).map_err(io_err(run_dir))?;
            Some("best_plan.json".to_string())
        }
        None => None,
    };

    let scored: Vec<(u32, f64)> = events
        .iter()
        .filter_map(|e| e.score.map(|s| (e.eval_index, s)))
        .collect();
    let curve_values = best_so_far_curve(
        &scored.iter().map(|(_, s)| *s).collect::<Vec<_>>(),
        playground.polarity(),
    );
    let curve: Vec<CurvePoint> = scored
        .iter()
        .zip(&curve_values)
        .map(|((evals_used, _), best_so_far)| CurvePoint {
            evals_used: *evals_used,
            best_so_far: *best_so_far,
        })
        .collect();

    let report = RunReport {
        mode,
        total_eval_budget: config.total_eval_budget,
        evaluations_used: budget.used(),
        best_score: best.score,
        best_plan: best_plan_rel,
        best_candidate: best_candidate_rel,
        digest_path: mode
            .has_digest()
            .then(|| format!("workspace/{DIGEST_FILENAME}")),
        archive_root: mode.has_archive().then(|| "workspace/Archive".to_string()),
        digest_bytes: fs::metadata(&digest_path).map(|m| m.len()).unwrap_or(0),
        agents: agent_reports,
        events,
        curve,
    };

    write_run_outputs(run_dir, &report, &event_walls)?;
    Ok(DiscoveryResult {
        report,
        outcomes,
        run_dir: run_dir.to_path_buf(),
    })
}

fn write_run_outputs(
    run_dir: &Path,
    report: &RunReport,
    event_walls: &[f64],
) -> Result<(), OrchestratorError> {
    let report_json =
        serde_json::to_string_pretty(report).expect("report serialization cannot fail");
    atomic_write(&run_dir.join("report.json"), report_json.as_bytes())
        .map_err(io_err(run_dir))?;

    let mut curve_csv = String::from("evals,best_score\n");
    for point in &report.curve {
        curve_csv.push_str(&format!("{},{}\n", point.evals_used, point.best_so_far));
    }
    atomic_write(&run_dir.join("curve.csv"), curve_csv.as_bytes()).map_err(io_err(run_dir))?;

    let mut events_csv = String::from("eval_index,agent,score,wall_s\n");
    for (event, wall) in report.events.iter().zip(event_walls) {
        events_csv.push_str(&format!(
            "{},{},{},{}\n",
            event.eval_index,
            event.agent,
            event.score.map(|s| s.to_string()).unwrap_or_default(),
            wall
        ));
    }
    atomic_write(&run_dir.join("events.csv"), events_csv.as_bytes()).map_err(io_err(run_dir))?;
    Ok(())
}

/// One row of a replay comparison.
#[derive(Debug, Clone, Serialize)]
pub struct ReplayRow {
    pub agent: u32,
    pub experiment: String,
    pub stored: String,
    pub reproduced: String,
    pub drift: bool,
}

/// Re-score every experiment in an archive by re-executing its snapshot
/// against the playground and comparing the reproduced `score.txt` bytes.
pub fn replay_archive(
    archive_root: &Path,
    playground: &dyn Playground,
) -> Result<Vec<ReplayRow>, OrchestratorError> {
    let view = crate::archive::ArchiveView::open(archive_root)?;
    let scratch_base =
        std::env::temp_dir().join(format!("relay_replay_{}", std::process::id()));
    let mut rows = Vec::new();
    for agent in view.agents()? {
        for experiment in view.experiments(agent)? {
            let exp_rel = format!("agent_{agent}/experiments/{experiment}");
            let stored =
                String::from_utf8_lossy(&view.read(&format!("{exp_rel}/score.txt"))?).into_owned();
            // the snapshot is the one entry that is neither score.txt nor results/
            let exp_dir = archive_root.join(&exp_rel);
            let mut snapshot = None;
            for entry in fs::read_dir(&exp_dir).map_err(io_err(&exp_dir))? {
                let entry = entry.map_err(io_err(&exp_dir))?;
                let name = entry.file_name().to_string_lossy().into_owned();
                if name != "score.txt" && name != "results" {
                    snapshot = Some(entry.path());
                }
            }
            let Some(snapshot) = snapshot else {
                rows.push(ReplayRow {
                    agent,
                    experiment,
                    stored,
                    reproduced: "missing snapshot".to_string(),
                    drift: true,
                });
                continue;
            };
            let scratch = scratch_base.join(format!("{agent}_{experiment}"));
            let result = playground.run_candidate(&snapshot, &scratch);
            let reproduced = match result {
                crate::playground::SimulationResult::Scored { score, .. } => {
                    crate::archive::ExperimentScore::Value(score).to_string()
                }
                crate::playground::SimulationResult::Failed { reason, .. } => {
                    crate::archive::ExperimentScore::Failed(reason).to_string()
                }
            };
            let drift = reproduced != stored;
            rows.push(ReplayRow {
                agent,
                experiment,
                stored,
                reproduced,
                drift,
            });
        }
    }
    let _ = fs::remove_dir_all(&scratch_base);
    Ok(rows)
}

/// Build the playground described by a config (used by replay and the CLI).
pub fn build_playground(
    config: &PlaygroundConfig,
) -> Result<MulticastPlayground, OrchestratorError> {
    if config.id != "multicast" {
        return Err(OrchestratorError::Config(format!(
            "unknown playground id {:?}",
            config.id
        )));
    }
    let topology = load_topology(&config.topology)?;
    let spec = load_transfer_spec(&config.transfer)?;
    Ok(MulticastPlayground::new(
        topology,
        spec,
        config.topology.clone(),
        config.transfer.clone(),
        config.candidate_command.clone(),
        config.candidate_filename.clone(),
        ExecPolicy {
            timeout: Duration::from_secs_f64(config.sim_timeout_s),
            output_cap: config.sim_output_cap,
        },
    ))
}

/// Combined score of the exact-oracle optimum for an instance.
pub fn oracle_score(
    topo: &crate::topology::Topology,
    spec: &crate::topology::TransferSpec,
    limits: &milp::OracleLimits,
) -> Result<f64, milp::OracleError> {
    let (plan, _cost) = milp::exact_oracle(topo, spec, limits)?;
    Ok(evaluator::evaluate(&plan, topo, spec).combined_score)
}


#[cfg(test)]
mod tests {
    use super::test_support::*;
    use super::*;
    use serde_json::json;

    #[test]
    fn three_agent_run_produces_digest_curve_and_archive() {
        let tmp = tempfile::tempdir().unwrap();
        let config = scripted_config(tmp.path(), RunMode::Full, 10, three_agent_scripts());
        let result = run_discovery(&config, &tmp.path().join("run")).unwrap();
        let report = &result.report;

        assert_eq!(report.evaluations_used, 3);
        assert_eq!(report.agents.len(), 3);
        assert_eq!(report.events.len(), 3);
        // digest grows one entry per agent; each agent saw the prior ones
        for (i, agent) in report.agents.iter().enumerate() {
            assert_eq!(agent.digest_entries_at_start, i);
            assert!(agent.summary_parsed);
        }
        // curve is monotone for higher-better scores
        let mut prev = f64::NEG_INFINITY;
        for point in &report.curve {
            assert!(point.best_so_far >= prev);
            prev = point.best_so_far;
        }
        assert_eq!(report.best_score, Some(1.0 / 35.5));
        // outputs exist
        let run = &result.run_dir;
        assert!(run.join("report.json").is_file());
        assert!(run.join("curve.csv").is_file());
        assert!(run.join("events.csv").is_file());
        assert!(run.join("best_plan.json").is_file());
        assert!(run.join("workspace/research_digest.md").is_file());
        assert!(run.join("workspace/Archive/agent_3/console.log").is_file());
        assert_eq!(
            crate::digest::read_digest(&run.join("workspace/research_digest.md"))
                .unwrap()
                .len(),
            3
        );
    }

    #[test]
    fn single_agent_mode_runs_exactly_one_agent() {
        let tmp = tempfile::tempdir().unwrap();
        let mut config =
            scripted_config(tmp.path(), RunMode::SingleAgent, 10, three_agent_scripts());
        config.max_agents = 3;
        let result = run_discovery(&config, &tmp.path().join("run")).unwrap();
        assert_eq!(result.report.agents.len(), 1);
        let archive = result.run_dir.join("workspace/Archive");
        let agents: Vec<_> = fs::read_dir(&archive)
            .unwrap()
            .map(|e| e.unwrap().file_name().to_string_lossy().into_owned())
            .collect();
        assert_eq!(agents, vec!["agent_1"]);
        assert!(entry_count(&result.run_dir.join("workspace/research_digest.md")).unwrap() <= 1);
    }

    #[test]
    fn summarization_mode_is_one_logical_agent_with_compression_armed() {
        let tmp = tempfile::tempdir().unwrap();
        let mut config =
            scripted_config(tmp.path(), RunMode::Summarization, 10, three_agent_scripts());
        config.max_agents = 3;
        // keep the scripted fixture below the trigger; the compression
        // mechanism itself is exercised in the agent tests
        config.limits.summarize_threshold_tokens = Some(1_000_000);
        let result = run_discovery(&config, &tmp.path().join("run")).unwrap();
        assert_eq!(result.report.agents.len(), 1, "one logical agent");
        assert!(entry_count(&result.run_dir.join("workspace/research_digest.md")).unwrap() <= 1);
        let archive = result.run_dir.join("workspace/Archive");
        assert!(archive.join("agent_1").is_dir());
        assert!(!archive.join("agent_2").exists());
    }

    #[test]
    fn zero_budget_forces_summaries_with_zero_evaluations() {
        let tmp = tempfile::tempdir().unwrap();
        let config = scripted_config(tmp.path(), RunMode::Full, 0, three_agent_scripts());
        let result = run_discovery(&config, &tmp.path().join("run")).unwrap();
        assert_eq!(result.report.evaluations_used, 0);
        assert!(result.report.events.is_empty());
        assert!(result.report.curve.is_empty());
        // only the first agent starts once the budget is exhausted
        assert_eq!(result.report.agents.len(), 1);
        assert!(result.report.agents[0].budget_exhausted_seen);
    }

    #[test]
    fn no_digest_mode_never_creates_the_digest() {
        let tmp = tempfile::tempdir().unwrap();
        let config = scripted_config(tmp.path(), RunMode::NoDigest, 10, three_agent_scripts());
        let result = run_discovery(&config, &tmp.path().join("run")).unwrap();
        assert!(!result.run_dir.join("workspace/research_digest.md").exists());
        assert!(result.report.digest_path.is_none());
        assert!(result.run_dir.join("workspace/Archive/agent_1").is_dir());
    }

    #[test]
    fn no_archive_mode_never_creates_the_archive() {
        let tmp = tempfile::tempdir().unwrap();
        let config = scripted_config(tmp.path(), RunMode::NoArchive, 10, three_agent_scripts());
        let result = run_discovery(&config, &tmp.path().join("run")).unwrap();
        assert!(!result.run_dir.join("workspace/Archive").exists());
        assert!(result.report.archive_root.is_none());
        assert!(result
            .run_dir
            .join("workspace/research_digest.md")
            .is_file());
    }

    #[test]
    fn sequential_mode_carries_only_the_best_candidate() {
        let tmp = tempfile::tempdir().unwrap();
        let scripts = vec![
            {
                // agent 1 writes scratch files plus a good candidate
                let mut s = vec![ScriptedAction::call(
                    "write_file",
                    json!({"file_path": "/scratch_notes.txt", "contents": "private notes"}),
                )];
                s.extend(write_then_sim(RELAY_CANDIDATE));
                s.push(summary_action(1, 1.0 / 35.5));
                s
            },
            {
                // agent 2 inspects what's visible
                vec![
                    ScriptedAction::call(
                        "read_file",
                        json!({"target_file": "/scratch_notes.txt"}),
                    ),
                    ScriptedAction::call(
                        "read_file",
                        json!({"target_file": "/new_algorithm.sh"}),
                    ),
                    ScriptedAction::call(
                        "read_file",
                        json!({"target_file": "/research_digest.md"}),
                    ),
                    summary_action(2, 1.0 / 35.5),
                ]
            },
        ];
        let config = scripted_config(tmp.path(), RunMode::Sequential, 10, scripts);
        let result = run_discovery(&config, &tmp.path().join("run")).unwrap();
        let transcript = &result.outcomes[1].state.transcript;
        let joined = transcript
            .iter()
            .filter(|m| m.role == Role::Tool)
            .map(|m| m.content.as_str())
            .collect::<Vec<_>>()
            .join("\n---\n");
        // scratch file gone, candidate carried, digest absent
        assert!(joined.contains("error: io error on"), "{joined}");
        assert!(joined.contains("cat > \"$3\""), "carried candidate readable");
        assert!(!result.run_dir.join("workspace/research_digest.md").exists());
        assert!(!result.run_dir.join("workspace/Archive").exists());
    }

    #[test]
    fn unparseable_summary_becomes_a_stub_entry() {
        let tmp = tempfile::tempdir().unwrap();
        // eight plain turns exhaust the nudge allowance; the forced final
        // turn then answers without the required heading
        let mut actions: Vec<ScriptedAction> =
            (0..8).map(|i| ScriptedAction::say(format!("thinking {i}"))).collect();
        actions.push(ScriptedAction::say(
            "I forgot the protocol entirely. The relay is cheap though.",
        ));
        let scripts = vec![actions];
        let config = scripted_config(tmp.path(), RunMode::Full, 10, scripts);
        let result = run_discovery(&config, &tmp.path().join("run")).unwrap();
        assert!(!result.report.agents[0].summary_parsed);
        let entries =
            crate::digest::read_digest(&result.run_dir.join("workspace/research_digest.md"))
                .unwrap();
        assert_eq!(entries.len(), 1);
        assert!(entries[0]
            .extras
            .iter()
            .any(|(title, body)| title == "Unstructured Final Message"
                && body.contains("relay is cheap")));
    }

    #[test]
    fn determinism_scripted_runs_are_byte_identical() {
        let tmp = tempfile::tempdir().unwrap();
        let config = scripted_config(tmp.path(), RunMode::Full, 10, three_agent_scripts());
        let a = run_discovery(&config, &tmp.path().join("run_a")).unwrap();
        let b = run_discovery(&config, &tmp.path().join("run_b")).unwrap();
        for file in ["report.json", "curve.csv", "workspace/research_digest.md"] {
            let x = fs::read(a.run_dir.join(file)).unwrap();
            let y = fs::read(b.run_dir.join(file)).unwrap();
            assert_eq!(x, y, "{file} differs");
        }
        let va = crate::archive::ArchiveView::open(&a.run_dir.join("workspace/Archive")).unwrap();
        let vb = crate::archive::ArchiveView::open(&b.run_dir.join("workspace/Archive")).unwrap();
        assert_eq!(va.tree_hash().unwrap(), vb.tree_hash().unwrap());
    }

    #[test]
    fn replay_detects_tampered_snapshots() {
        let tmp = tempfile::tempdir().unwrap();
        let config = scripted_config(tmp.path(), RunMode::Full, 10, three_agent_scripts());
        let result = run_discovery(&config, &tmp.path().join("run")).unwrap();
        let playground = build_playground(&PlaygroundConfig {
            topology: result.run_dir.join("workspace/topology.json"),
            transfer: result.run_dir.join("workspace/transfer.json"),
            ..config.playground.clone()
        })
        .unwrap();

        let archive_root = result.run_dir.join("workspace/Archive");
        let rows = replay_archive(&archive_root, &playground).unwrap();
        assert_eq!(rows.len(), 3);
        assert!(rows.iter().all(|r| !r.drift), "{rows:?}");

        // swap agent 1's snapshot for the relay candidate: the re-run now
        // produces a different score than the stored one
        fs::write(
            archive_root.join("agent_1/experiments/exp_001/new_algorithm.sh"),
            RELAY_CANDIDATE,
        )
        .unwrap();
        let rows = replay_archive(&archive_root, &playground).unwrap();
        assert!(rows.iter().any(|r| r.drift));
    }

    #[test]
    fn reused_run_dir_and_bad_timeouts_are_rejected() {
        let tmp = tempfile::tempdir().unwrap();
        let config = scripted_config(tmp.path(), RunMode::Full, 10, three_agent_scripts());
        let run_dir = tmp.path().join("run");
        run_discovery(&config, &run_dir).unwrap();
        let err = match run_discovery(&config, &run_dir) {
            Err(e) => e,
            Ok(_) => panic!("second run into the same dir must fail"),
        };
        assert!(err.to_string().contains("choose a fresh --out"), "{err}");

        let mut bad = scripted_config(tmp.path(), RunMode::Full, 10, Vec::new());
        bad.playground.sim_timeout_s = -1.0;
        let err = match run_discovery(&bad, &tmp.path().join("run2")) {
            Err(e) => e,
            Ok(_) => panic!("negative timeout must fail"),
        };
        assert!(err.to_string().contains("must be a positive number"), "{err}");
    }

    #[test]
    fn config_round_trip_and_relative_paths() {
        let tmp = tempfile::tempdir().unwrap();
        write_fixture_inputs(tmp.path());
        let config_text = r#"{
            "mode": "full",
            "driver": {"type": "scripted", "scripts": []},
            "playground": {
                "id": "multicast",
                "topology": "topology.json",
                "transfer": "transfer.json",
                "candidate_command": ["/bin/sh"]
            }
        }"#;
        let path = tmp.path().join("config.json");
        fs::write(&path, config_text).unwrap();
        let config = load_run_config(&path).unwrap();
        assert_eq!(config.total_eval_budget, 100); // shared-per-run default
        assert_eq!(config.max_agents, 10);
        assert!(config.playground.topology.is_absolute());
        assert!(config.playground.topology.ends_with("topology.json"));
        assert_eq!(config.playground.candidate_filename, "new_algorithm.py");
    }
}
