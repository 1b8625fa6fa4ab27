//! The research digest: structured cross-agent handoff summaries.
//!
//! Agents end their exploration with a summary under the exact heading
//! `## Summary for Next Agent`. The renderer emits that format strictly and
//! deterministically; the parser is deliberately lenient (subsection-driven,
//! order-insensitive, unknown subsections preserved verbatim) because
//! free-text LLM output drifts from templates. The digest file itself is
//! append-only: one entry per agent, delimited by `<!-- agent N -->` marker
//! lines, with agent numbers strictly increasing.

use std::fmt::Write as _;
use std::fs;
use std::io::Write as _;
use std::path::{Path, PathBuf};

use thiserror::Error;

/// The exact heading line that starts a summary.
pub const SUMMARY_HEADING: &str = "## Summary for Next Agent";

/// Default digest filename at the workspace root.
pub const DIGEST_FILENAME: &str = "research_digest.md";

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AgentMode {
    Exploration,
    Exploitation,
}

impl AgentMode {
    pub fn as_str(self) -> &'static str {
        match self {
            AgentMode::Exploration => "EXPLORATION",
            AgentMode::Exploitation => "EXPLOITATION",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ApproachStatus {
    Working,
    Abandoned,
    Promising,
}

impl ApproachStatus {
    pub fn as_str(self) -> &'static str {
        match self {
            ApproachStatus::Working => "working",
            ApproachStatus::Abandoned => "abandoned",
            ApproachStatus::Promising => "promising",
        }
    }
}

/// One attempted approach in a summary's "What I Tried" section.
#[derive(Debug, Clone)]
pub struct ApproachRecord {
    pub name: String,
    pub score: Option<f64>,
    pub status: ApproachStatus,
    pub idea: String,
    pub reasoning: String,
    pub result: String,
    pub hyperparameters: Option<String>,
}

impl PartialEq for ApproachRecord {
    fn eq(&self, other: &Self) -> bool {
        self.name == other.name
            && nan_aware_opt_eq(self.score, other.score)
            && self.status == other.status
            && self.idea == other.idea
            && self.reasoning == other.reasoning
            && self.result == other.result
            && self.hyperparameters == other.hyperparameters
    }
}

fn nan_aware_eq(a: f64, b: f64) -> bool {
    (a.is_nan() && b.is_nan()) || a == b
}

fn nan_aware_opt_eq(a: Option<f64>, b: Option<f64>) -> bool {
    match (a, b) {
        (Some(x), Some(y)) => nan_aware_eq(x, y),
        (None, None) => true,
        _ => false,
    }
}

/// One agent's parsed summary. `best_score` uses NaN as the "unreported"
/// sentinel rather than failing when an agent omits its score.
#[derive(Debug, Clone)]
pub struct DigestEntry {
    pub agent_number: u32,
    pub mode: AgentMode,
    pub mode_reason: String,
    pub best_score: f64,
    pub code_location: String,
    pub best_approach: String,
    pub approaches: Vec<ApproachRecord>,
    pub insights: Vec<String>,
    pub next_steps: Vec<String>,
    pub dead_ends: Vec<(String, String)>,
    /// Unknown subsections, preserved verbatim as (title, body).
    pub extras: Vec<(String, String)>,
}

impl PartialEq for DigestEntry {
    fn eq(&self, other: &Self) -> bool {
        self.agent_number == other.agent_number
            && self.mode == other.mode
            && self.mode_reason == other.mode_reason
            && nan_aware_eq(self.best_score, other.best_score)
            && self.code_location == other.code_location
            && self.best_approach == other.best_approach
            && self.approaches == other.approaches
            && self.insights == other.insights
            && self.next_steps == other.next_steps
            && self.dead_ends == other.dead_ends
            && self.extras == other.extras
    }
}

impl DigestEntry {
    /// A minimal empty entry for an agent.
    pub fn empty(agent_number: u32) -> DigestEntry {
        DigestEntry {
            agent_number,
            mode: AgentMode::Exploration,
            mode_reason: String::new(),
            best_score: f64::NAN,
            code_location: String::new(),
            best_approach: String::new(),
            approaches: Vec::new(),
            insights: Vec::new(),
            next_steps: Vec::new(),
            dead_ends: Vec::new(),
            extras: Vec::new(),
        }
    }

    /// Check entry invariants: positive agent number, non-empty approach
    /// names, and best_score consistent with the best reported approach
    /// score when both are present.
    pub fn validate(&self) -> Result<(), DigestError> {
        if self.agent_number == 0 {
            return Err(DigestError::InvalidEntry(
                "agent_number must be >= 1".into(),
            ));
        }
        if self.approaches.iter().any(|a| a.name.trim().is_empty()) {
            return Err(DigestError::InvalidEntry(
                "approach name must be non-empty".into(),
            ));
        }
        let reported: Vec<f64> = self.approaches.iter().filter_map(|a| a.score).collect();
        if !reported.is_empty() && !self.best_score.is_nan() {
            let max = reported.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            if self.best_score != max {
                return Err(DigestError::InvalidEntry(format!(
                    "best_score {} does not equal the best reported approach score {max}",
                    self.best_score
                )));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Error)]
pub enum DigestError {
    #[error("missing summary heading {SUMMARY_HEADING:?}")]
    MissingSummaryHeading,
    #[error("invalid digest entry: {0}")]
    InvalidEntry(String),
    #[error("append ordering violation: entry {entry} must exceed last entry {last}")]
    OutOfOrder { entry: u32, last: u32 },
    #[error("could not acquire digest lock {path}")]
    LockBusy { path: String },
    #[error("io error on {path}: {source}")]
    Io {
        path: String,
        source: std::io::Error,
    },
}

// ---------------------------------------------------------------------------
// Rendering
// ---------------------------------------------------------------------------

fn render_score(score: f64) -> String {
    if score.is_nan() {
        "unreported".to_string()
    } else {
        format!("{score}")
    }
}

/// Render an entry in the exact summary format. Deterministic; ends with a
/// blank separator line.
pub fn render_entry(entry: &DigestEntry) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "{SUMMARY_HEADING}");
    out.push('\n');

    let _ = writeln!(out, "### Agent Mode");
    let _ = writeln!(out, "- Mode: {}", entry.mode.as_str());
    let _ = writeln!(out, "- Reason: {}", entry.mode_reason);
    out.push('\n');

    let _ = writeln!(out, "### Best Result");
    let _ = writeln!(out, "- Score: {}", render_score(entry.best_score));
    let _ = writeln!(out, "- Code location: {}", entry.code_location);
    let _ = writeln!(out, "- Approach that achieved it: {}", entry.best_approach);
    out.push('\n');

    let _ = writeln!(out, "### What I Tried");
    for (i, a) in entry.approaches.iter().enumerate() {
        match a.score {
            Some(score) => {
                let _ = writeln!(
                    out,
                    "{}. {}: score={} - {}",
                    i + 1,
                    a.name,
                    score,
                    a.status.as_str()
                );
            }
            None => {
                let _ = writeln!(out, "{}. {}: {}", i + 1, a.name, a.status.as_str());
            }
        }
        let _ = writeln!(out, "   - What I did (the idea): {}", a.idea);
        let _ = writeln!(out, "   - Reasoning behind it (why I tried it): {}", a.reasoning);
        let _ = writeln!(out, "   - Result: {}", a.result);
        if let Some(h) = &a.hyperparameters {
            let _ = writeln!(out, "   - Hyperparameters: {h}");
        }
    }
    out.push('\n');

    let _ = writeln!(out, "### Key Insights");
    for insight in &entry.insights {
        let _ = writeln!(out, "- {insight}");
    }
    out.push('\n');

    let _ = writeln!(out, "### Recommended Next Steps");
    for (i, step) in entry.next_steps.iter().enumerate() {
        let _ = writeln!(out, "{}. {}", i + 1, step);
    }
    out.push('\n');

    let _ = writeln!(out, "### Approaches That Didn't Work (and Why)");
    for (approach, why) in &entry.dead_ends {
        let _ = writeln!(out, "- {approach}: {why}");
    }

    for (title, body) in &entry.extras {
        out.push('\n');
        let _ = writeln!(out, "### {title}");
        if !body.is_empty() {
            let _ = writeln!(out, "{body}");
        }
    }

    out.push('\n');
    out
}

// ---------------------------------------------------------------------------
// Parsing
// ---------------------------------------------------------------------------

/// Parse an agent's final message into a digest entry.
///
/// Locates the last occurrence of the exact heading line, then parses
/// subsections by their headings. Unknown subsections are preserved in
/// `extras`; missing optional fields default to empty, and a missing score
/// yields the NaN "unreported" sentinel.
pub fn parse_summary(text: &str, agent_number: u32) -> Result<DigestEntry, DigestError> {
    let lines: Vec<&str> = text.lines().collect();
    let heading_at = lines
        .iter()
        .rposition(|line| line.trim() == SUMMARY_HEADING)
        .ok_or(DigestError::MissingSummaryHeading)?;

    let mut entry = DigestEntry::empty(agent_number);

    // split the remainder into (title, body-lines) subsections
    let mut sections: Vec<(String, Vec<&str>)> = Vec::new();
    for line in &lines[heading_at + 1..] {
        if let Some(title) = line.trim().strip_prefix("### ") {
            sections.push((title.trim().to_string(), Vec::new()));
        } else if let Some((_, body)) = sections.last_mut() {
            body.push(line);
        }
        // text between the heading and the first subsection is ignored
    }

    for (title, body) in sections {
        match title.as_str() {
            "Agent Mode" => parse_agent_mode(&body, &mut entry),
            "Best Result" => parse_best_result(&body, &mut entry),
            "What I Tried" => entry.approaches = parse_approaches(&body),
            "Key Insights" => entry.insights = parse_items(&body),
            "Recommended Next Steps" => entry.next_steps = parse_items(&body),
            "Approaches That Didn't Work (and Why)" => {
                entry.dead_ends = parse_items(&body)
                    .into_iter()
                    .map(|item| match item.split_once(':') {
                        Some((approach, why)) => {
                            (approach.trim().to_string(), why.trim().to_string())
                        }
                        None => (item, String::new()),
                    })
                    .collect();
            }
            _ => {
                let mut text = body.join("\n");
                while text.ends_with('\n') || text.ends_with(' ') {
                    text.pop();
                }
                let trimmed = text.trim_start_matches('\n').to_string();
                entry.extras.push((title, trimmed));
            }
        }
    }
    Ok(entry)
}

fn field_value<'a>(line: &'a str, key: &str) -> Option<&'a str> {
    let trimmed = line.trim_start();
    let rest = trimmed.strip_prefix("- ").unwrap_or(trimmed);
    rest.strip_prefix(key).map(str::trim)
}

fn parse_agent_mode(body: &[&str], entry: &mut DigestEntry) {
    for line in body {
        if let Some(value) = field_value(line, "Mode:") {
            if value.to_ascii_uppercase().contains("EXPLOITATION") {
                entry.mode = AgentMode::Exploitation;
            } else {
                entry.mode = AgentMode::Exploration;
            }
        } else if let Some(value) = field_value(line, "Reason:") {
            entry.mode_reason = value.to_string();
        }
    }
}

fn parse_best_result(body: &[&str], entry: &mut DigestEntry) {
    for line in body {
        if let Some(value) = field_value(line, "Score:") {
            entry.best_score = value
                .split_whitespace()
                .next()
                .and_then(|tok| tok.parse::<f64>().ok())
                .unwrap_or(f64::NAN);
        } else if let Some(value) = field_value(line, "Code location:") {
            entry.code_location = value.to_string();
        } else if let Some(value) = field_value(line, "Approach that achieved it:") {
            entry.best_approach = value.to_string();
        }
    }
}

/// `"1. name"`-style item start: returns the text after the marker.
fn numbered_item(line: &str) -> Option<&str> {
    let trimmed = line.trim_start();
    let digits = trimmed.chars().take_while(char::is_ascii_digit).count();
    if digits == 0 {
        return None;
    }
    let rest = &trimmed[digits..];
    rest.strip_prefix(". ")
        .or_else(|| rest.strip_prefix(") "))
        .or_else(|| rest.strip_prefix(".").filter(|r| r.is_empty()))
        .map(str::trim)
}

fn bullet_item(line: &str) -> Option<&str> {
    let trimmed = line.trim_start();
    trimmed
        .strip_prefix("- ")
        .or_else(|| trimmed.strip_prefix("* "))
        .map(str::trim)
}

fn parse_items(body: &[&str]) -> Vec<String> {
    body.iter()
        .filter_map(|line| {
            bullet_item(line)
                .or_else(|| numbered_item(line))
                .filter(|item| !item.is_empty())
                .map(str::to_string)
        })
        .collect()
}

fn parse_approaches(body: &[&str]) -> Vec<ApproachRecord> {
    let mut approaches: Vec<ApproachRecord> = Vec::new();
    for line in body {
        if let Some(head) = numbered_item(line) {
            approaches.push(parse_approach_head(head));
        } else if let Some(current) = approaches.last_mut() {
            if let Some(value) = field_value(line, "What I did (the idea):") {
                current.idea = value.to_string();
            } else if let Some(value) = field_value(line, "Reasoning behind it (why I tried it):")
            {
                current.reasoning = value.to_string();
            } else if let Some(value) = field_value(line, "Result:") {
                current.result = value.to_string();
            } else if let Some(value) = field_value(line, "Hyperparameters:") {
                current.hyperparameters = Some(value.to_string());
            }
        }
    }
    approaches
}

fn parse_approach_head(head: &str) -> ApproachRecord {
    let (name, rest) = match head.split_once(':') {
        Some((name, rest)) => (name.trim().to_string(), rest),
        None => (head.trim().to_string(), ""),
    };
    let score = rest.find("score=").and_then(|at| {
        rest[at + "score=".len()..]
            .split(|c: char| c.is_whitespace() || c == ',')
            .next()
            .and_then(|tok| tok.parse::<f64>().ok())
    });
    let lowered = rest.to_ascii_lowercase();
    let mut status = ApproachStatus::Working;
    let mut best_at = None;
    for (candidate, parsed) in [
        ("working", ApproachStatus::Working),
        ("abandoned", ApproachStatus::Abandoned),
        ("promising", ApproachStatus::Promising),
    ] {
        if let Some(at) = lowered.rfind(candidate) {
            if best_at.is_none_or(|prev| at > prev) {
                best_at = Some(at);
                status = parsed;
            }
        }
    }
    ApproachRecord {
        name,
        score,
        status,
        idea: String::new(),
        reasoning: String::new(),
        result: String::new(),
        hyperparameters: None,
    }
}

// ---------------------------------------------------------------------------
// Append-only digest file
// ---------------------------------------------------------------------------

fn marker_line(agent_number: u32) -> String {
    format!("<!-- agent {agent_number} -->")
}

fn parse_marker(line: &str) -> Option<u32> {
    line.trim()
        .strip_prefix("<!-- agent ")?
        .strip_suffix(" -->")?
        .parse()
        .ok()
}

struct LockGuard {
    path: PathBuf,
}

impl Drop for LockGuard {
    fn drop(&mut self) {
        let _ = fs::remove_file(&self.path);
    }
}

fn acquire_lock(digest_path: &Path) -> Result<LockGuard, DigestError> {
    let lock_path = digest_path.with_extension("md.lock");
    for _ in 0..100 {
        match fs::OpenOptions::new()
            .write(true)
            .create_new(true)
            .open(&lock_path)
        {
            Ok(_) => {
                return Ok(LockGuard {
                    path: lock_path,
                })
            }
            Err(e) if e.kind() == std::io::ErrorKind::AlreadyExists => {
                std::thread::sleep(std::time::Duration::from_millis(10));
            }
            Err(source) => {
                return Err(DigestError::Io {
                    path: lock_path.display().to_string(),
                    source,
                })
            }
        }
    }
    Err(DigestError::LockBusy {
        path: lock_path.display().to_string(),
    })
}

/// Last agent number recorded in the digest file, if any.
pub fn last_agent_number(digest_path: &Path) -> Result<Option<u32>, DigestError> {
    if !digest_path.exists() {
        return Ok(None);
    }
    let text = fs::read_to_string(digest_path).map_err(|source| DigestError::Io {
        path: digest_path.display().to_string(),
        source,
    })?;
    Ok(text.lines().filter_map(parse_marker).max())
}

/// Number of entries in the digest file.
pub fn entry_count(digest_path: &Path) -> Result<usize, DigestError> {
    if !digest_path.exists() {
        return Ok(0);
    }
    let text = fs::read_to_string(digest_path).map_err(|source| DigestError::Io {
        path: digest_path.display().to_string(),
        source,
    })?;
    Ok(text.lines().filter(|l| parse_marker(l).is_some()).count())
}

/// Append one entry. Strictly append-only: prior bytes are never touched,
/// agent numbers must strictly increase, and a filesystem lock guards
/// against concurrent writers.
pub fn append_entry(digest_path: &Path, entry: &DigestEntry) -> Result<(), DigestError> {
    let _guard = acquire_lock(digest_path)?;
    if let Some(last) = last_agent_number(digest_path)? {
        if entry.agent_number <= last {
            return Err(DigestError::OutOfOrder {
                entry: entry.agent_number,
                last,
            });
        }
    }
    let mut file = fs::OpenOptions::new()
        .create(true)
        .append(true)
        .open(digest_path)
        .map_err(|source| DigestError::Io {
            path: digest_path.display().to_string(),
            source,
        })?;
    let block = format!("{}\n{}", marker_line(entry.agent_number), render_entry(entry));
    file.write_all(block.as_bytes())
        .and_then(|()| file.sync_all())
        .map_err(|source| DigestError::Io {
            path: digest_path.display().to_string(),
            source,
        })
}

/// Parse the whole digest file back into entries.
pub fn read_digest(digest_path: &Path) -> Result<Vec<DigestEntry>, DigestError> {
    if !digest_path.exists() {
        return Ok(Vec::new());
    }
    let text = fs::read_to_string(digest_path).map_err(|source| DigestError::Io {
        path: digest_path.display().to_string(),
        source,
    })?;
    let mut entries = Vec::new();
    let mut current: Option<(u32, Vec<&str>)> = None;
    for line in text.lines() {
        if let Some(number) = parse_marker(line) {
            if let Some((n, body)) = current.take() {
                entries.push(parse_summary(&body.join("\n"), n)?);
            }
            current = Some((number, Vec::new()));
        } else if let Some((_, body)) = current.as_mut() {
            body.push(line);
        }
    }
    if let Some((n, body)) = current {
        entries.push(parse_summary(&body.join("\n"), n)?);
    }
    Ok(entries)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::util::fnv1a64;
    use proptest::prelude::*;

    fn sample_entry() -> DigestEntry {
        DigestEntry {
            agent_number: 1,
            mode: AgentMode::Exploitation,
            mode_reason: "previous agent left a working MILP to refine".into(),
            best_score: 0.001847,
            code_location: "/new_algorithm.py".into(),
            best_approach: "reduced-edge MILP".into(),
            approaches: vec![
                ApproachRecord {
                    name: "reduced-edge MILP".into(),
                    score: Some(0.001847),
                    status: ApproachStatus::Working,
                    idea: "prune expensive edges, then solve the small program".into(),
                    reasoning: "full program is intractable at this size".into(),
                    result: "solved in 40 s and beat the greedy baseline".into(),
                    hyperparameters: Some("COST_CUTOFF=0.18".into()),
                },
                ApproachRecord {
                    name: "greedy tree".into(),
                    score: Some(0.00151),
                    status: ApproachStatus::Abandoned,
                    idea: "cheapest-edge tree per stripe".into(),
                    reasoning: "fast baseline to anchor the search".into(),
                    result: "plateaued immediately".into(),
                    hyperparameters: None,
                },
            ],
            insights: vec![
                "cross-provider edges dominate cost; avoid unless necessary".into(),
            ],
            next_steps: vec!["tighten the edge cutoff".into(), "try per-stripe solves".into()],
            dead_ends: vec![("pure shortest paths".into(), "ignores VM cost entirely".into())],
            extras: Vec::new(),
        }
    }

    #[test]
    fn template_text_parses_with_expected_score() {
        let text = "I ran some experiments.\n\n\
## Summary for Next Agent\n\n\
### Agent Mode\n\
- Mode: EXPLORATION\n\
- Reason: early in the search\n\n\
### Best Result\n\
- Score: 0.001847\n\
- Code location: /new_algorithm.py\n\
- Approach that achieved it: reduced-edge MILP\n\n\
### What I Tried\n\
1. reduced-edge MILP: score=0.001847 - working\n\
   - What I did (the idea): prune edges then solve\n\
   - Reasoning behind it (why I tried it): full model too big\n\
   - Result: solved quickly\n\
   - Hyperparameters: COST_CUTOFF=0.18, TH_ALPHA=0.008\n\n\
### Key Insights\n\
- cross-provider edges cost $0.12/GB, avoid unless necessary\n\n\
### Recommended Next Steps\n\
1. tune the cutoff\n\n\
### Approaches That Didn't Work (and Why)\n\
- naive Steiner tree: ignores VM cost\n";
        let entry = parse_summary(text, 3).unwrap();
        assert_eq!(entry.agent_number, 3);
        assert_eq!(entry.best_score, 0.001847);
        assert_eq!(entry.mode, AgentMode::Exploration);
        assert_eq!(entry.approaches.len(), 1);
        assert_eq!(entry.approaches[0].score, Some(0.001847));
        assert_eq!(entry.approaches[0].status, ApproachStatus::Working);
        assert_eq!(
            entry.approaches[0].hyperparameters.as_deref(),
            Some("COST_CUTOFF=0.18, TH_ALPHA=0.008")
        );
        assert_eq!(entry.dead_ends.len(), 1);
        assert_eq!(entry.dead_ends[0].0, "naive Steiner tree");
    }

    #[test]
    fn missing_heading_is_a_protocol_error() {
        let err = parse_summary("no summary here", 1).unwrap_err();
        assert!(matches!(err, DigestError::MissingSummaryHeading));
    }

    #[test]
    fn last_heading_occurrence_wins() {
        let text = format!(
            "{SUMMARY_HEADING}\n\n### Best Result\n- Score: 0.1\n\n\
             later I found more\n\n{SUMMARY_HEADING}\n\n### Best Result\n- Score: 0.5\n"
        );
        let entry = parse_summary(&text, 1).unwrap();
        assert_eq!(entry.best_score, 0.5);
    }

    #[test]
    fn unknown_subsections_are_preserved() {
        let text = format!(
            "{SUMMARY_HEADING}\n\n### Best Result\n- Score: 0.25\n\n\
             ### Open Puzzles\nwhy does stripe 2 always lag?\nsecond line\n"
        );
        let entry = parse_summary(&text, 1).unwrap();
        assert_eq!(
            entry.extras,
            vec![(
                "Open Puzzles".to_string(),
                "why does stripe 2 always lag?\nsecond line".to_string()
            )]
        );
        // extras survive a render -> parse cycle
        let again = parse_summary(&render_entry(&entry), 1).unwrap();
        assert_eq!(again, entry);
    }

    #[test]
    fn missing_score_yields_unreported_sentinel() {
        let text = format!("{SUMMARY_HEADING}\n\n### Best Result\n- Code location: /x.py\n");
        let entry = parse_summary(&text, 1).unwrap();
        assert!(entry.best_score.is_nan());
        assert_eq!(entry.code_location, "/x.py");
        // and renders back as "unreported"
        assert!(render_entry(&entry).contains("- Score: unreported"));
    }

    #[test]
    fn render_contains_all_mandatory_headings() {
        let mut entry = sample_entry();
        entry.approaches.truncate(1);
        entry.approaches[0].hyperparameters = None;
        let text = render_entry(&entry);
        for heading in [
            "### Agent Mode",
            "### Best Result",
            "### Key Insights",
            "### Recommended Next Steps",
            "### Approaches That Didn't Work (and Why)",
        ] {
            assert!(text.contains(heading), "missing {heading}");
        }
        assert!(text.starts_with(SUMMARY_HEADING));
        assert!(text.ends_with("\n\n"), "must end with a blank separator");
    }

    #[test]
    fn approaches_render_numbered_in_order() {
        let text = render_entry(&sample_entry());
        let first = text.find("1. reduced-edge MILP").unwrap();
        let second = text.find("2. greedy tree").unwrap();
        assert!(first < second);
    }

    #[test]
    fn round_trip_identity_on_sample() {
        let entry = sample_entry();
        let parsed = parse_summary(&render_entry(&entry), entry.agent_number).unwrap();
        assert_eq!(parsed, entry);
    }

    #[test]
    fn validate_checks_best_score_consistency() {
        let mut entry = sample_entry();
        entry.validate().unwrap();
        entry.best_score = 0.00001;
        assert!(entry.validate().is_err());
        entry.best_score = f64::NAN; // unreported is always consistent
        entry.validate().unwrap();
    }

    #[test]
    fn append_maintains_order_and_prefix() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join(DIGEST_FILENAME);
        let mut hashes = Vec::new();
        for n in 1..=3 {
            let mut entry = sample_entry();
            entry.agent_number = n;
            append_entry(&path, &entry).unwrap();
            let bytes = fs::read(&path).unwrap();
            hashes.push((bytes.len(), fnv1a64(&bytes)));
        }
        let text = fs::read_to_string(&path).unwrap();
        assert_eq!(text.matches(SUMMARY_HEADING).count(), 3);
        assert_eq!(entry_count(&path).unwrap(), 3);
        assert_eq!(last_agent_number(&path).unwrap(), Some(3));

        // earlier states are byte prefixes of later states
        let bytes = fs::read(&path).unwrap();
        for (len, hash) in &hashes {
            assert_eq!(fnv1a64(&bytes[..*len]), *hash);
        }

        // stale agent number is rejected
        let mut stale = sample_entry();
        stale.agent_number = 2;
        let err = append_entry(&path, &stale).unwrap_err();
        assert!(matches!(err, DigestError::OutOfOrder { entry: 2, last: 3 }));

        let entries = read_digest(&path).unwrap();
        assert_eq!(entries.len(), 3);
        assert_eq!(entries[0].agent_number, 1);
        assert_eq!(entries[2].agent_number, 3);
    }

    #[test]
    fn lock_conflict_is_reported() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join(DIGEST_FILENAME);
        let lock = path.with_extension("md.lock");
        fs::write(&lock, b"held").unwrap();
        let err = append_entry(&path, &sample_entry()).unwrap_err();
        assert!(matches!(err, DigestError::LockBusy { .. }));
        fs::remove_file(&lock).unwrap();
        append_entry(&path, &sample_entry()).unwrap();
    }

    // ---- property tests ---------------------------------------------------

    /// Single-line free text that survives the line-oriented grammar: no
    /// newlines, no leading bullet/number markers, no interior colon for
    /// name-position fields; values are trimmed by the parser.
    fn arb_line() -> impl Strategy<Value = String> {
        "[a-zA-Z0-9][a-zA-Z0-9 _/()$=%.,+-]{0,38}[a-zA-Z0-9)]"
            .prop_map(|s| s.trim().to_string())
    }

    fn arb_name() -> impl Strategy<Value = String> {
        "[a-zA-Z][a-zA-Z0-9 _-]{0,24}[a-zA-Z0-9]".prop_map(|s| s.trim().to_string())
    }

    fn arb_score() -> impl Strategy<Value = Option<f64>> {
        prop::option::of((0u64..1_000_000).prop_map(|raw| raw as f64 / 1_000_000.0))
    }

    fn arb_status() -> impl Strategy<Value = ApproachStatus> {
        prop::sample::select(vec![
            ApproachStatus::Working,
            ApproachStatus::Abandoned,
            ApproachStatus::Promising,
        ])
    }

    fn arb_approach() -> impl Strategy<Value = ApproachRecord> {
        (
            arb_name(),
            arb_score(),
            arb_status(),
            arb_line(),
            arb_line(),
            arb_line(),
            prop::option::of(arb_line()),
        )
            .prop_map(
                |(name, score, status, idea, reasoning, result, hyperparameters)| ApproachRecord {
                    name,
                    score,
                    status,
                    idea,
                    reasoning,
                    result,
                    hyperparameters,
                },
            )
    }

    pub(super) fn arb_entry() -> impl Strategy<Value = DigestEntry> {
        (
            1u32..1000,
            prop::bool::ANY,
            arb_line(),
            arb_score(),
            prop::option::of("[a-z/_.]{1,20}"),
            arb_name(),
            prop::collection::vec(arb_approach(), 0..4),
            prop::collection::vec(arb_line(), 0..4),
            prop::collection::vec(arb_line(), 0..4),
            prop::collection::vec((arb_name(), arb_line()), 0..3),
        )
            .prop_map(
                |(
                    agent_number,
                    exploit,
                    mode_reason,
                    best_score,
                    code_location,
                    best_approach,
                    approaches,
                    insights,
                    next_steps,
                    dead_ends,
                )| DigestEntry {
                    agent_number,
                    mode: if exploit {
                        AgentMode::Exploitation
                    } else {
                        AgentMode::Exploration
                    },
                    mode_reason,
                    best_score: best_score.unwrap_or(f64::NAN),
                    code_location: code_location.unwrap_or_default(),
                    best_approach,
                    approaches,
                    insights,
                    next_steps,
                    dead_ends,
                    extras: Vec::new(),
                },
            )
    }

    proptest! {
        #[test]
        fn parse_render_round_trip(entry in arb_entry()) {
            let rendered = render_entry(&entry);
            let parsed = parse_summary(&rendered, entry.agent_number).unwrap();
            prop_assert_eq!(parsed, entry);
        }

        // parse never errors on rendered output, even embedded in chatter
        #[test]
        fn parse_total_on_rendered_with_prefix(entry in arb_entry(), prefix in "[a-zA-Z0-9 \n]{0,100}") {
            let text = format!("{prefix}\n{}", render_entry(&entry));
            prop_assert!(parse_summary(&text, entry.agent_number).is_ok());
        }
    }
}
