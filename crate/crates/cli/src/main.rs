//! `relay` — command-line surface for the discovery framework and the
//! multicast playground.
//!
//! Exit codes: 0 success, 1 domain error (infeasible plan, drift, failed
//! run), 2 usage error.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand};

use relay_core::digest;
use relay_core::evaluator::{self, EvaluationReport};
use relay_core::milp;
use relay_core::orchestrator::{
    self, aggregate, build_playground, load_run_config, load_run_report, normalized_auc,
    replay_archive, PlaygroundConfig,
};
use relay_core::topology::{load_topology, load_transfer_spec, Topology, TransferSpec};
use relay_core::util::atomic_write;

#[derive(Parser)]
#[command(
    name = "relay",
    version,
    about = "Sequential-agent discovery runs over a multi-cloud multicast playground"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Score a broadcast plan against a topology and transfer instance.
    Evaluate {
        #[arg(long)]
        topology: PathBuf,
        #[arg(long)]
        spec: PathBuf,
        #[arg(long)]
        plan: PathBuf,
        /// Write the full evaluation report here as JSON.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Check a plan's structural validity; list violations.
    Verify {
        #[arg(long)]
        topology: PathBuf,
        #[arg(long)]
        spec: PathBuf,
        #[arg(long)]
        plan: PathBuf,
    },
    /// Exact optimum of a tiny instance by exhaustive enumeration.
    Oracle {
        #[arg(long)]
        topology: PathBuf,
        #[arg(long)]
        spec: PathBuf,
        #[arg(long, default_value_t = 6)]
        max_nodes: usize,
        #[arg(long, default_value_t = 2)]
        max_partitions: u32,
        /// Write the optimal plan here (stdout when omitted).
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Emit the instance mixed-integer model as LP-format text.
    MilpEmit {
        #[arg(long)]
        topology: PathBuf,
        #[arg(long)]
        spec: PathBuf,
        /// Write the LP text here (stdout when omitted).
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Decode a solver assignment into a plan, then evaluate it.
    MilpDecode {
        #[arg(long)]
        topology: PathBuf,
        #[arg(long)]
        spec: PathBuf,
        /// Assignment file: one `<varname> <value>` per line.
        #[arg(long)]
        assignment: PathBuf,
        /// Write the decoded plan here (stdout when omitted).
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Run the discovery loop from a config file.
    Run {
        #[arg(long)]
        config: PathBuf,
        /// Run directory (digest, Archive, report, curves).
        #[arg(long)]
        out: PathBuf,
    },
    /// Re-execute every archived snapshot and flag score drift.
    Replay {
        #[arg(long)]
        archive: PathBuf,
        #[arg(long)]
        topology: PathBuf,
        #[arg(long)]
        spec: PathBuf,
        /// Interpreter prefix for candidates (repeatable), e.g. --command /bin/sh
        #[arg(long = "command")]
        command_prefix: Vec<String>,
        #[arg(long, default_value_t = 60.0)]
        timeout_s: f64,
    },
    /// Write per-run curve CSVs plus a cross-run aggregate.
    Curve {
        /// Run report JSON files (repeatable).
        #[arg(long = "report", required = true)]
        reports: Vec<PathBuf>,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 0.90)]
        level: f64,
        #[arg(long, default_value_t = 10000)]
        resamples: u32,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Show parsed research-digest entries.
    DigestShow {
        #[arg(long)]
        digest: PathBuf,
        /// Only this agent's entry.
        #[arg(long)]
        agent: Option<u32>,
    },
    /// Scaffold a directory with example inputs and a runnable config.
    Init {
        #[arg(long)]
        dir: PathBuf,
    },
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli.command) {
        Ok(clean) => {
            if clean {
                ExitCode::SUCCESS
            } else {
                ExitCode::from(1)
            }
        }
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
    }
}

fn load_instance(topology: &Path, spec: &Path) -> Result<(Topology, TransferSpec)> {
    let topo = load_topology(topology).context("loading topology")?;
    let transfer = load_transfer_spec(spec).context("loading transfer spec")?;
    if let Err(violations) = relay_core::topology::validate_spec(&transfer, &topo) {
        bail!(
            "transfer spec invalid for topology: {}",
            violations
                .iter()
                .map(|v| v.to_string())
                .collect::<Vec<_>>()
                .join("; ")
        );
    }
    Ok((topo, transfer))
}

fn write_or_print(out: Option<&Path>, text: &str) -> Result<()> {
    match out {
        Some(path) => atomic_write(path, text.as_bytes())
            .with_context(|| format!("writing {}", path.display())),
        None => {
            println!("{text}");
            Ok(())
        }
    }
}

fn print_report_line(report: &EvaluationReport) {
    println!(
        "feasible={} cost={} score={:.5}",
        report.feasible, report.total_cost, report.combined_score
    );
}

/// Returns Ok(true) on clean success, Ok(false) for domain failures that
/// should exit 1 without an error banner.
fn run(command: Command) -> Result<bool> {
    match command {
        Command::Evaluate {
            topology,
            spec,
            plan,
            out,
        } => {
            let (topo, transfer) = load_instance(&topology, &spec)?;
            let plan = evaluator::load_plan(&plan).context("loading plan")?;
            let report = evaluator::evaluate(&plan, &topo, &transfer);
            print_report_line(&report);
            for violation in &report.violations {
                eprintln!("violation: {violation}");
            }
            if let Some(out) = out {
                let json = serde_json::to_string_pretty(&report)?;
                atomic_write(&out, json.as_bytes())
                    .with_context(|| format!("writing {}", out.display()))?;
            }
            Ok(report.feasible)
        }
        Command::Verify {
            topology,
            spec,
            plan,
        } => {
            let (topo, transfer) = load_instance(&topology, &spec)?;
            let plan = evaluator::load_plan(&plan).context("loading plan")?;
            let violations = evaluator::verify_plan(&plan, &topo, &transfer);
            if violations.is_empty() {
                println!("ok");
                Ok(true)
            } else {
                for violation in &violations {
                    println!("violation: {violation}");
                }
                Ok(false)
            }
        }
        Command::Oracle {
            topology,
            spec,
            max_nodes,
            max_partitions,
            out,
        } => {
            let (topo, transfer) = load_instance(&topology, &spec)?;
            let limits = milp::OracleLimits {
                max_nodes,
                max_partitions,
                ..milp::OracleLimits::default()
            };
            let (plan, cost) = milp::exact_oracle(&topo, &transfer, &limits)?;
            let report = evaluator::evaluate(&plan, &topo, &transfer);
            println!("cost={cost} score={:.5}", report.combined_score);
            write_or_print(out.as_deref(), &evaluator::serialize_plan(&plan))?;
            Ok(true)
        }
        Command::MilpEmit {
            topology,
            spec,
            out,
        } => {
            let (topo, transfer) = load_instance(&topology, &spec)?;
            let model = milp::build_model(&topo, &transfer);
            let lp = milp::emit_lp(&model)?;
            write_or_print(out.as_deref(), &lp)?;
            Ok(true)
        }
        Command::MilpDecode {
            topology,
            spec,
            assignment,
            out,
        } => {
            let (topo, transfer) = load_instance(&topology, &spec)?;
            let model = milp::build_model(&topo, &transfer);
            let assignment = milp::load_assignment(&assignment)?;
            let (plan, allocation) = milp::decode_solution(&model, &assignment, &topo, &transfer)?;
            let report = evaluator::evaluate(&plan, &topo, &transfer);
            print_report_line(&report);
            println!("vms={}", allocation.total());
            write_or_print(out.as_deref(), &evaluator::serialize_plan(&plan))?;
            Ok(report.feasible)
        }
        Command::Run { config, out } => {
            let config = load_run_config(&config)?;
            let result = orchestrator::run_discovery(&config, &out)?;
            let report = &result.report;
            println!(
                "run complete: {} agents, {} of {} evaluations used",
                report.agents.len(),
                report.evaluations_used,
                report.total_eval_budget
            );
            match report.best_score {
                Some(score) => println!("best score: {score}"),
                None => println!("best score: none (no scored evaluation)"),
            }
            println!("report: {}", out.join("report.json").display());
            Ok(true)
        }
        Command::Replay {
            archive,
            topology,
            spec,
            command_prefix,
            timeout_s,
        } => {
            let playground = build_playground(&PlaygroundConfig {
                id: "multicast".into(),
                topology,
                transfer: spec,
                candidate_command: command_prefix,
                initial_program: None,
                candidate_filename: String::new(),
                sim_timeout_s: timeout_s,
                sim_output_cap: 8 * 1024,
            })?;
            let rows = replay_archive(&archive, &playground)?;
            if rows.is_empty() {
                println!("archive is empty");
                return Ok(true);
            }
            let mut drifted = 0;
            for row in &rows {
                println!(
                    "agent_{} {} stored={:?} reproduced={:?}{}",
                    row.agent,
                    row.experiment,
                    row.stored,
                    row.reproduced,
                    if row.drift { " DRIFT" } else { "" }
                );
                if row.drift {
                    drifted += 1;
                }
            }
            println!("{} experiments, {} drifted", rows.len(), drifted);
            Ok(drifted == 0)
        }
        Command::Curve {
            reports,
            out,
            level,
            resamples,
            seed,
        } => {
            fs::create_dir_all(&out).with_context(|| format!("creating {}", out.display()))?;
            let mut bests = Vec::new();
            let mut curves = Vec::new();
            for (i, path) in reports.iter().enumerate() {
                let report = load_run_report(path)?;
                let mut csv = String::from("evals,best_score\n");
                for point in &report.curve {
                    csv.push_str(&format!("{},{}\n", point.evals_used, point.best_so_far));
                }
                let name = format!("run_{:02}.csv", i + 1);
                atomic_write(&out.join(&name), csv.as_bytes())?;
                let curve: Vec<f64> = report.curve.iter().map(|p| p.best_so_far).collect();
                if let Some(best) = report.best_score {
                    bests.push(best);
                }
                curves.push(curve);
            }
            if bests.is_empty() {
                bail!("no report contains a scored evaluation");
            }
            let agg = aggregate(&bests, &curves, level, resamples, seed)?;
            let csv = format!(
                "mean_best,ci_lo,ci_hi,median_nauc\n{},{},{},{}\n",
                agg.mean_best, agg.ci.0, agg.ci.1, agg.median_nauc
            );
            atomic_write(&out.join("aggregate.csv"), csv.as_bytes())?;
            println!(
                "runs={} mean_best={} ci=[{}, {}] median_nauc={}",
                bests.len(),
                agg.mean_best,
                agg.ci.0,
                agg.ci.1,
                agg.median_nauc
            );
            for (i, curve) in curves.iter().enumerate() {
                println!("run_{:02}: nauc={}", i + 1, normalized_auc(curve));
            }
            Ok(true)
        }
        Command::DigestShow { digest, agent } => {
            let entries = digest::read_digest(&digest)?;
            if entries.is_empty() {
                println!("digest is empty");
                return Ok(true);
            }
            for entry in entries
                .iter()
                .filter(|e| agent.is_none_or(|n| e.agent_number == n))
            {
                println!("--- agent {} ---", entry.agent_number);
                print!("{}", digest::render_entry(entry));
            }
            Ok(true)
        }
        Command::Init { dir } => {
            init_scaffold(&dir)?;
            println!("initialized {}", dir.display());
            println!(
                "try: relay run --config {}/config.json --out {}/run",
                dir.display(),
                dir.display()
            );
            Ok(true)
        }
    }
}

const INIT_TOPOLOGY: &str = r#"{
  "nodes": [
    {"id": "aws:s"},
    {"id": "aws:a"},
    {"id": "aws:d"}
  ],
  "edges": [
    {"src": "aws:s", "dst": "aws:d", "cost_per_gb": 0.20, "throughput_gbps": 10.0},
    {"src": "aws:s", "dst": "aws:a", "cost_per_gb": 0.05, "throughput_gbps": 10.0},
    {"src": "aws:a", "dst": "aws:d", "cost_per_gb": 0.05, "throughput_gbps": 10.0}
  ]
}
"#;

const INIT_TRANSFER: &str = r#"{
  "src": "aws:s",
  "dsts": ["aws:d"],
  "size_gb": 300.0,
  "time_budget_s": 10000.0,
  "partitions": 1
}
"#;

const INIT_CANDIDATE: &str = r#"#!/bin/sh
# Baseline candidate: route everything over the direct edge.
# Arguments: <topology_file> <transfer_file> <plan_out_file>
out="$3"
cat > "$out" <<'PLAN'
{
  "src": "aws:s",
  "dsts": ["aws:d"],
  "partitions": 1,
  "paths": [
    {"dst": "aws:d", "k": 1, "edges": [["aws:s", "aws:d"]]}
  ]
}
PLAN
"#;

fn init_scaffold(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    atomic_write(&dir.join("topology.json"), INIT_TOPOLOGY.as_bytes())?;
    atomic_write(&dir.join("transfer.json"), INIT_TRANSFER.as_bytes())?;
    atomic_write(&dir.join("initial_program.sh"), INIT_CANDIDATE.as_bytes())?;

    // a self-contained scripted run: agent 1 tries the direct route, agent 2
    // improves it with the relay recommended by the digest
    let config = serde_json::json!({
        "total_eval_budget": 10,
        "max_agents": 2,
        "mode": "full",
        "seed": 7,
        "driver": {
            "type": "scripted",
            "scripts": [
                [
                    {"calls": [{"name": "read_file",
                                "arguments": {"target_file": "/initial_program.sh"}}]},
                    {"calls": [{"name": "shell",
                                "arguments": {"command": "cp initial_program.sh new_algorithm.sh"}}]},
                    {"calls": [{"name": "run_simulation",
                                "arguments": {"file_path": "/new_algorithm.sh"}}]},
                    {"say": "## Summary for Next Agent\n\n### Agent Mode\n- Mode: EXPLORATION\n- Reason: first pass, direct route baseline\n\n### Best Result\n- Score: 0.015625\n- Code location: /new_algorithm.sh\n- Approach that achieved it: direct edge\n\n### Key Insights\n- the direct edge costs 0.20/GB; the relay pair costs 0.10/GB total\n\n### Recommended Next Steps\n1. route via the relay node aws:a\n"}
                ],
                [
                    {"calls": [{"name": "read_file",
                                "arguments": {"target_file": "/research_digest.md"}}]},
                    {"calls": [{"name": "write_file",
                                "arguments": {"file_path": "/new_algorithm.sh",
                                              "contents": "#!/bin/sh\nout=\"$3\"\ncat > \"$out\" <<'PLAN'\n{\n  \"src\": \"aws:s\",\n  \"dsts\": [\"aws:d\"],\n  \"partitions\": 1,\n  \"paths\": [\n    {\"dst\": \"aws:d\", \"k\": 1, \"edges\": [[\"aws:s\", \"aws:a\"], [\"aws:a\", \"aws:d\"]]}\n  ]\n}\nPLAN\n"}}]},
                    {"calls": [{"name": "run_simulation",
                                "arguments": {"file_path": "/new_algorithm.sh"}}]},
                    {"say": "## Summary for Next Agent\n\n### Agent Mode\n- Mode: EXPLOITATION\n- Reason: digest recommended the relay route\n\n### Best Result\n- Score: 0.028169014084507043\n- Code location: /new_algorithm.sh\n- Approach that achieved it: relay via aws:a\n\n### Key Insights\n- relaying through aws:a cuts total cost by 45%\n"}
                ]
            ]
        },
        "playground": {
            "id": "multicast",
            "topology": "topology.json",
            "transfer": "transfer.json",
            "candidate_command": ["/bin/sh"],
            "initial_program": "initial_program.sh",
            "candidate_filename": "new_algorithm.sh",
            "sim_timeout_s": 30.0
        },
        "limits": {"max_tool_calls": 32, "wall_clock_s": 300.0}
    });
    let text = serde_json::to_string_pretty(&config)?;
    atomic_write(&dir.join("config.json"), text.as_bytes())?;
    Ok(())
}
