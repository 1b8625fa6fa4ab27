//! One agent exploration: fresh transcript, system prompt, tool loop
//! against an [`LlmDriver`], budget-metered simulations, struggle-protocol
//! tracking.

pub mod driver;
pub mod prompt;
pub mod tools;

pub use driver::{
    ChatMessage, DriverError, HttpConfig, HttpDriver, LlmDriver, Role, ScriptedAction,
    ScriptedCall, ScriptedDriver, ToolCall,
};
pub use prompt::build_system_prompt;
pub use tools::{Budget, ToolError, ToolExecutor, ToolOutput, ToolPolicy, Workspace};

use std::time::{Duration, Instant};

use thiserror::Error;

use crate::archive::{ArchiveWriter, ExperimentScore};
use crate::digest::SUMMARY_HEADING;
use crate::playground::{Playground, Polarity};
use crate::util::estimate_tokens;

/// Consecutive non-improving simulations after which an agent is stuck.
pub const STUCK_THRESHOLD: u32 = 3;

/// Per-agent execution limits.
#[derive(Debug, Clone)]
pub struct AgentLimits {
    pub max_tool_calls: u32,
    pub wall_clock: Duration,
    /// Summarization-mode trigger: when the transcript's estimated token
    /// count exceeds this, the transcript is compressed in place.
    pub summarize_threshold_tokens: Option<usize>,
    /// Consecutive plain turns without a summary before the final turn is
    /// forced (guards against drivers that never conclude).
    pub max_plain_turns: u32,
}

impl Default for AgentLimits {
    fn default() -> Self {
        AgentLimits {
            max_tool_calls: 128,
            wall_clock: Duration::from_secs(1800),
            summarize_threshold_tokens: None,
            max_plain_turns: 8,
        }
    }
}

/// Reference to one recorded experiment.
#[derive(Debug, Clone)]
pub struct ExperimentRef {
    pub index: u32,
    pub score: ExperimentScore,
}

/// Mutable state of one agent exploration.
#[derive(Debug)]
pub struct AgentState {
    pub transcript: Vec<ChatMessage>,
    pub simulations_run: u32,
    pub best_score_seen: Option<f64>,
    pub consecutive_non_improving: u32,
    pub stuck_flag: bool,
    pub experiments: Vec<ExperimentRef>,
}

impl AgentState {
    /// Fresh state: a transcript holding exactly the system prompt and the
    /// kickoff message.
    pub fn new(system_prompt: &str) -> AgentState {
        AgentState {
            transcript: vec![
                ChatMessage::system(system_prompt),
                ChatMessage::user(KICKOFF_MESSAGE),
            ],
            simulations_run: 0,
            best_score_seen: None,
            consecutive_non_improving: 0,
            stuck_flag: false,
            experiments: Vec::new(),
        }
    }
}

/// One budget-consuming evaluation, in run order.
#[derive(Debug, Clone)]
pub struct EvalEvent {
    /// None when the candidate failed to produce a score.
    pub score: Option<f64>,
    pub wall_s: f64,
}

/// Why the agent loop ended.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StopReason {
    Summary,
    ForcedFinal,
    DriverAborted,
}

#[derive(Debug)]
pub struct AgentOutcome {
    pub agent_number: u32,
    pub final_message: String,
    pub best_score: Option<f64>,
    pub state: AgentState,
    pub events: Vec<EvalEvent>,
    pub stop: StopReason,
    /// The agent saw at least one budget-exhausted tool error.
    pub budget_exhausted_seen: bool,
}

#[derive(Debug, Error)]
pub enum AgentError {
    #[error("workspace error: {0}")]
    Workspace(#[from] ToolError),
}

/// Everything one agent needs from the orchestrator.
pub struct AgentEnv<'a> {
    pub workspace: &'a Workspace,
    pub playground: &'a dyn Playground,
    pub budget: &'a mut Budget,
    pub archive: Option<&'a mut ArchiveWriter>,
    pub best: Option<&'a mut tools::BestCandidate>,
    pub policy: ToolPolicy,
}

const KICKOFF_MESSAGE: &str =
    "Begin now. Review prior work first, state your plan, then proceed.";

const NUDGE_MESSAGE: &str = "Continue with tool calls, or end your exploration with the \
exact heading '## Summary for Next Agent' followed by the required subsections.";

const FINAL_TURN_MESSAGE: &str = "Limits reached: no further tool calls will be executed. \
Write your final '## Summary for Next Agent' now, in this reply.";

const COMPRESS_MESSAGE: &str = "Your context is near its limit. In this reply, produce a \
compact summary of your exploration so far: the task, current best score and where the \
code lives, what you tried, key insights, and what you were about to do next. It will \
replace the conversation history, so include everything you still need.";

fn synthesized_failure_summary(reason: &str) -> String {
    format!(
        "{SUMMARY_HEADING}\n\n### Agent Mode\n- Mode: EXPLORATION\n- Reason: aborted\n\n\
         ### Best Result\n- Score: unreported\n- Code location: \n- Approach that achieved it: \n\n\
         ### What I Tried\n\n### Key Insights\n- agent aborted: {reason}\n\n\
         ### Recommended Next Steps\n\n### Approaches That Didn't Work (and Why)\n"
    )
}

/// Update the struggle counter with one simulation outcome. A strict
/// improvement (per the playground polarity) resets the counter and best
/// score; anything else, including equal scores and failures, counts as a
/// non-improving attempt.
pub fn update_struggle(state: &mut AgentState, new_score: Option<f64>, polarity: Polarity) {
    let improved = match (new_score, state.best_score_seen) {
        (Some(score), Some(best)) => polarity.improves(score, best),
        (Some(_), None) => true,
        (None, _) => false,
    };
    if improved {
        state.best_score_seen = new_score;
        state.consecutive_non_improving = 0;
    } else {
        state.consecutive_non_improving += 1;
    }
    state.stuck_flag = state.consecutive_non_improving >= STUCK_THRESHOLD;
}

fn transcript_tokens(transcript: &[ChatMessage]) -> usize {
    transcript
        .iter()
        .map(|m| estimate_tokens(&m.content) + 8)
        .sum()
}

/// Run one agent to completion.
///
/// The loop asks the driver for the next assistant message, executes its
/// tool calls in order, and terminates when the driver emits a plain message
/// containing the summary heading. Hitting a limit (tool-call cap, wall
/// clock, exhausted budget, provider context rejection) grants the agent
/// exactly one final turn to summarize. Driver failures abort the agent
/// with a synthesized failure summary.
pub fn run_agent(
    agent_number: u32,
    system_prompt: &str,
    driver: &mut dyn LlmDriver,
    env: &mut AgentEnv<'_>,
    limits: &AgentLimits,
) -> Result<AgentOutcome, AgentError> {
    let mut state = AgentState::new(system_prompt);
    let mut events = Vec::new();
    let mut executor = ToolExecutor {
        workspace: env.workspace,
        playground: env.playground,
        policy: env.policy.clone(),
        budget: env.budget,
        archive: env.archive.as_deref_mut(),
        best: env.best.as_deref_mut(),
        simulations_started: 0,
    };
    let polarity = env.playground.polarity();
    let started = Instant::now();
    let mut tool_calls_used: u32 = 0;
    let mut plain_turns: u32 = 0;
    let mut budget_exhausted_seen = false;
    let mut final_turn = false;

    loop {
        let limits_hit = tool_calls_used >= limits.max_tool_calls
            || started.elapsed() >= limits.wall_clock
            || plain_turns >= limits.max_plain_turns;
        if limits_hit && !final_turn {
            final_turn = true;
            state.transcript.push(ChatMessage::user(FINAL_TURN_MESSAGE));
        }

        let message = match driver.next(&state.transcript) {
            Ok(message) => message,
            Err(DriverError::ContextLength) if !final_turn => {
                // degrade into a handoff: drop to the final summarize turn
                final_turn = true;
                compress_for_final_turn(&mut state);
                match driver.next(&state.transcript) {
                    Ok(message) => message,
                    Err(e) => return Ok(abort(agent_number, state, events, e, budget_exhausted_seen)),
                }
            }
            Err(e) => return Ok(abort(agent_number, state, events, e, budget_exhausted_seen)),
        };
        state.transcript.push(message.clone());

        if final_turn {
            return Ok(AgentOutcome {
                agent_number,
                final_message: message.content,
                best_score: state.best_score_seen,
                stop: StopReason::ForcedFinal,
                budget_exhausted_seen,
                state,
                events,
            });
        }

        if message.tool_calls.is_empty() {
            if message.content.contains(SUMMARY_HEADING) {
                return Ok(AgentOutcome {
                    agent_number,
                    final_message: message.content,
                    best_score: state.best_score_seen,
                    stop: StopReason::Summary,
                    budget_exhausted_seen,
                    state,
                    events,
                });
            }
            plain_turns += 1;
            if plain_turns < limits.max_plain_turns {
                state.transcript.push(ChatMessage::user(NUDGE_MESSAGE));
            }
            continue;
        }
        plain_turns = 0;

        let mut exhausted_this_turn = false;
        for call in &message.tool_calls {
            tool_calls_used += 1;
            let output = executor.execute(&call.name, &call.arguments);
            let mut text = output.text.clone();
            if call.name == "run_simulation" {
                if output.consumed_budget {
                    state.simulations_run += 1;
                    let score = output.score;
                    update_struggle(&mut state, score, polarity);
                    state.experiments.push(ExperimentRef {
                        index: state.simulations_run,
                        score: match score {
                            Some(s) => ExperimentScore::Value(s),
                            None => ExperimentScore::Failed(String::new()),
                        },
                    });
                    events.push(EvalEvent {
                        score,
                        wall_s: output.wall.as_secs_f64(),
                    });
                    if state.stuck_flag {
                        text.push_str(&format!(
                            "\nnote: {} consecutive attempts without improvement - you are \
                             STUCK; per the struggle protocol, choose a fundamentally \
                             different approach.",
                            state.consecutive_non_improving
                        ));
                    }
                    text.push_str(&format!(
                        "\nbudget: {} of {} evaluations remaining.",
                        executor.budget.remaining(),
                        executor.budget.total()
                    ));
                }
                if output.budget_exhausted {
                    budget_exhausted_seen = true;
                    exhausted_this_turn = true;
                }
            }
            state
                .transcript
                .push(ChatMessage::tool(call.id.clone(), text));
        }
        if exhausted_this_turn && !final_turn {
            final_turn = true;
            state.transcript.push(ChatMessage::user(FINAL_TURN_MESSAGE));
        }

        if let Some(threshold) = limits.summarize_threshold_tokens {
            if transcript_tokens(&state.transcript) > threshold {
                compress_transcript(&mut state, driver);
            }
        }
    }
}

fn abort(
    agent_number: u32,
    state: AgentState,
    events: Vec<EvalEvent>,
    error: DriverError,
    budget_exhausted_seen: bool,
) -> AgentOutcome {
    AgentOutcome {
        agent_number,
        final_message: synthesized_failure_summary(&error.to_string()),
        best_score: state.best_score_seen,
        stop: StopReason::DriverAborted,
        budget_exhausted_seen,
        state,
        events,
    }
}

/// Shrink the transcript for the forced final turn after a context-length
/// rejection: keep the system prompt and the most recent exchanges so the
/// summary still has material to draw on.
fn compress_for_final_turn(state: &mut AgentState) {
    const KEEP_TAIL: usize = 6;
    let system = state.transcript[0].clone();
    let tail_start = state.transcript.len().saturating_sub(KEEP_TAIL).max(1);
    let mut tail: Vec<ChatMessage> = state.transcript[tail_start..].to_vec();
    // a dangling tool reply without its assistant turn confuses providers
    while tail.first().is_some_and(|m| m.role == Role::Tool) {
        tail.remove(0);
    }
    state.transcript = vec![system];
    state.transcript.extend(tail);
    state.transcript.push(ChatMessage::user(FINAL_TURN_MESSAGE));
}

/// Summarization-mode compression: ask the driver for a summary of the
/// exploration so far, then replace everything but the system prompt with
/// it. The same logical agent continues afterwards.
fn compress_transcript(state: &mut AgentState, driver: &mut dyn LlmDriver) {
    state.transcript.push(ChatMessage::user(COMPRESS_MESSAGE));
    let summary = match driver.next(&state.transcript) {
        Ok(message) => message.content,
        Err(_) => return, // keep the uncompressed transcript; limits still apply
    };
    let system = state.transcript[0].clone();
    state.transcript = vec![
        system,
        ChatMessage::user(format!(
            "Conversation history was compressed. Summary of your work so far:\n\n{summary}\n\n\
             Continue your exploration from here."
        )),
    ];
}
