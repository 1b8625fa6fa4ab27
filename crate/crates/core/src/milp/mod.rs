//! Mixed-integer model for the multicast instance.
//!
//! The model carries three variable families over a graph augmented with a
//! virtual sink `t` reachable only from destinations:
//!
//! - `P[k, (u,v)]` binary: stripe `k` is sent over real edge `(u,v)`,
//! - `N[v]` integer: VMs provisioned in region `v`,
//! - `F[k, (u,v)]` continuous flow over the augmented edge set, forcing the
//!   selected edges of each stripe to connect the source to every
//!   destination.
//!
//! The objective charges VM time over the full budget plus per-stripe egress
//! volume. Constraint rows are tagged with their source equation number
//! (2..=8) so emitted LP text and violation reports stay traceable. No
//! solver is bundled: [`emit_lp`] writes industry-interchange LP text,
//! [`Assignment`] ingests a solver's variable values, and for tiny instances
//! [`exact_oracle`] provides ground truth by exhaustive enumeration.

mod oracle;

pub use oracle::{exact_oracle, OracleError, OracleLimits};

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use thiserror::Error;

use crate::evaluator::{verify_plan, BroadcastPlan, VmAllocation};
use crate::topology::{Topology, TransferSpec};

/// Name of the virtual sink node. Real node ids always contain `:`
/// (sanitized to `__`), so this cannot collide with a region name.
pub const SINK: &str = "t";

/// Integrality tolerance applied to solver assignments.
pub const INTEGRALITY_TOL: f64 = 1e-6;

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord)]
pub enum VarKind {
    /// `P[k, (src, dst)]`, binary.
    StripeEdge { k: u32, src: String, dst: String },
    /// `N[node]`, non-negative integer.
    VmCount { node: String },
    /// `F[k, (src, dst)]`, non-negative continuous; `dst` may be [`SINK`].
    Flow { k: u32, src: String, dst: String },
}

#[derive(Debug, Clone)]
pub struct Variable {
    pub kind: VarKind,
    pub binary: bool,
    pub integer: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Sense {
    Le,
    Ge,
    Eq,
}

impl Sense {
    fn lp_symbol(self) -> &'static str {
        match self {
            Sense::Le => "<=",
            Sense::Ge => ">=",
            Sense::Eq => "=",
        }
    }
}

/// One linear row, tagged with the equation family (2..=8) it implements.
#[derive(Debug, Clone)]
pub struct Constraint {
    pub name: String,
    pub equation: u8,
    /// (variable index, coefficient) pairs.
    pub terms: Vec<(usize, f64)>,
    pub sense: Sense,
    pub rhs: f64,
}

/// The full mixed-integer program for one transfer instance.
#[derive(Debug, Clone)]
pub struct MilpModel {
    vars: Vec<Variable>,
    objective: Vec<(usize, f64)>,
    constraints: Vec<Constraint>,
    nodes: Vec<String>,
    real_edges: Vec<(String, String)>,
    partitions: u32,
}

#[derive(Debug, Error)]
pub enum MilpError {
    #[error("sanitized variable name collision: nodes {a:?} and {b:?} both map to {name:?}")]
    NameCollision { a: String, b: String, name: String },
    #[error("assignment is missing variable {0:?}")]
    MissingVariable(String),
    #[error("variable {name:?} = {value} violates integrality tolerance {tol}")]
    NotIntegral { name: String, value: f64, tol: f64 },
    #[error("decode failure: selected edges do not connect {src} to destination {dst} for stripe {k}")]
    Disconnected { src: String, dst: String, k: u32 },
    #[error("decoded plan failed verification: {0:?}")]
    DecodedPlanInvalid(Vec<String>),
    #[error("assignment parse error at line {line}: {message}")]
    AssignmentParse { line: usize, message: String },
    #[error("io error on {path}: {source}")]
    Io {
        path: String,
        source: std::io::Error,
    },
}

fn sanitize_node_id(id: &str) -> String {
    let mut out = String::with_capacity(id.len() + 2);
    for c in id.chars() {
        if c == ':' {
            out.push_str("__");
        } else if c.is_ascii_alphanumeric() || c == '_' {
            out.push(c);
        } else {
            out.push('_');
        }
    }
    out
}

impl MilpModel {
    pub fn partitions(&self) -> u32 {
        self.partitions
    }

    pub fn variables(&self) -> &[Variable] {
        &self.vars
    }

    pub fn constraints(&self) -> &[Constraint] {
        &self.constraints
    }

    pub fn objective(&self) -> &[(usize, f64)] {
        &self.objective
    }

    pub fn real_edges(&self) -> &[(String, String)] {
        &self.real_edges
    }

    /// Sanitized names for every node, with a collision check over the whole
    /// scheme (`:` maps to `__`, any other non-alphanumeric to `_`).
    fn node_names(&self) -> Result<BTreeMap<String, String>, MilpError> {
        let mut seen: BTreeMap<String, String> = BTreeMap::new();
        let mut names = BTreeMap::new();
        for id in &self.nodes {
            let name = sanitize_node_id(id);
            if let Some(prev) = seen.get(&name) {
                return Err(MilpError::NameCollision {
                    a: prev.clone(),
                    b: id.clone(),
                    name,
                });
            }
            seen.insert(name.clone(), id.clone());
            names.insert(id.clone(), name);
        }
        Ok(names)
    }

    /// Variable names in index order: `P_k_u_v`, `N_v`, `F_k_u_v`.
    pub fn var_names(&self) -> Result<Vec<String>, MilpError> {
        let names = self.node_names()?;
        let name_of = |id: &str| -> String {
            if id == SINK {
                SINK.to_string()
            } else {
                names[id].clone()
            }
        };
        Ok(self
            .vars
            .iter()
            .map(|v| match &v.kind {
                VarKind::StripeEdge { k, src, dst } => {
                    format!("P_{}_{}_{}", k, name_of(src), name_of(dst))
                }
                VarKind::VmCount { node } => format!("N_{}", name_of(node)),
                VarKind::Flow { k, src, dst } => {
                    format!("F_{}_{}_{}", k, name_of(src), name_of(dst))
                }
            })
            .collect())
    }
}

/// Build the instance model. Index sets: one `P` per (stripe, real edge),
/// one `N` per node, one `F` per (stripe, augmented edge); rows cover the
/// VM cap (2), edge capacity (3), per-region egress (4) and ingress (5),
/// flow lower bounds (6), flow upper bounds (7), and conservation (8).
pub fn build_model(topo: &Topology, spec: &TransferSpec) -> MilpModel {
    let nodes: Vec<String> = topo.nodes().map(|n| n.id.clone()).collect();
    let real_edges: Vec<(String, String)> = topo
        .edges()
        .map(|e| (e.src.clone(), e.dst.clone()))
        .collect();
    let sink_edges: Vec<(String, String)> = spec
        .dsts
        .iter()
        .map(|d| (d.clone(), SINK.to_string()))
        .collect();
    let stripes = spec.partitions;
    let stripe_gb = spec.stripe_gb();
    let budget = spec.time_budget_s;
    let dst_count = spec.dsts.len();

    let mut vars = Vec::new();
    let mut p_idx: BTreeMap<(u32, String, String), usize> = BTreeMap::new();
    let mut n_idx: BTreeMap<String, usize> = BTreeMap::new();
    let mut f_idx: BTreeMap<(u32, String, String), usize> = BTreeMap::new();

    for k in 1..=stripes {
        for (u, v) in &real_edges {
            p_idx.insert((k, u.clone(), v.clone()), vars.len());
            vars.push(Variable {
                kind: VarKind::StripeEdge {
                    k,
                    src: u.clone(),
                    dst: v.clone(),
                },
                binary: true,
                integer: false,
            });
        }
    }
    for node in &nodes {
        n_idx.insert(node.clone(), vars.len());
        vars.push(Variable {
            kind: VarKind::VmCount { node: node.clone() },
            binary: false,
            integer: true,
        });
    }
    for k in 1..=stripes {
        for (u, v) in real_edges.iter().chain(sink_edges.iter()) {
            f_idx.insert((k, u.clone(), v.clone()), vars.len());
            vars.push(Variable {
                kind: VarKind::Flow {
                    k,
                    src: u.clone(),
                    dst: v.clone(),
                },
                binary: false,
                integer: false,
            });
        }
    }

    // Objective: T * sum p_v N_v + (B/K) * sum c_e P_{k,e}.
    let mut objective = Vec::new();
    for node in &nodes {
        let price = topo.node(node).expect("node exists").vm_price_per_s;
        objective.push((n_idx[node], budget * price));
    }
    for k in 1..=stripes {
        for (u, v) in &real_edges {
            let cost = topo.edge(u, v).expect("edge exists").cost_per_gb;
            objective.push((p_idx[&(k, u.clone(), v.clone())], stripe_gb * cost));
        }
    }

    let mut constraints = Vec::new();
    let sname = |id: &str| sanitize_node_id(id);

    // (2) N_v <= cap_v
    for node in &nodes {
        let cap = topo.node(node).expect("node exists").vm_cap;
        constraints.push(Constraint {
            name: format!("eq2_{}", sname(node)),
            equation: 2,
            terms: vec![(n_idx[node], 1.0)],
            sense: Sense::Le,
            rhs: f64::from(cap),
        });
    }
    // (3) per edge: (B/K) sum_k P_{k,e} <= T * beta_e * N_u  (beta in GB/s)
    for (u, v) in &real_edges {
        let beta_gbps = topo.edge(u, v).expect("edge exists").throughput_gbps;
        let mut terms: Vec<(usize, f64)> = (1..=stripes)
            .map(|k| (p_idx[&(k, u.clone(), v.clone())], stripe_gb))
            .collect();
        terms.push((n_idx[u], -budget * beta_gbps / 8.0));
        constraints.push(Constraint {
            name: format!("eq3_{}_{}", sname(u), sname(v)),
            equation: 3,
            terms,
            sense: Sense::Le,
            rhs: 0.0,
        });
    }
    // (4) per node: aggregate egress volume <= T * e_v * N_v
    for node in &nodes {
        let egress_gbps = topo.node(node).expect("node exists").egress_gbps;
        let mut terms = Vec::new();
        for k in 1..=stripes {
            for (u, v) in &real_edges {
                if u == node {
                    terms.push((p_idx[&(k, u.clone(), v.clone())], stripe_gb));
                }
            }
        }
        terms.push((n_idx[node], -budget * egress_gbps / 8.0));
        constraints.push(Constraint {
            name: format!("eq4_{}", sname(node)),
            equation: 4,
            terms,
            sense: Sense::Le,
            rhs: 0.0,
        });
    }
    // (5) per node: aggregate ingress volume <= T * i_v * N_v
    for node in &nodes {
        let ingress_gbps = topo.node(node).expect("node exists").ingress_gbps;
        let mut terms = Vec::new();
        for k in 1..=stripes {
            for (u, v) in &real_edges {
                if v == node {
                    terms.push((p_idx[&(k, u.clone(), v.clone())], stripe_gb));
                }
            }
        }
        terms.push((n_idx[node], -budget * ingress_gbps / 8.0));
        constraints.push(Constraint {
            name: format!("eq5_{}", sname(node)),
            equation: 5,
            terms,
            sense: Sense::Le,
            rhs: 0.0,
        });
    }
    // (6) selected edges must carry flow: F >= P on real edges, F >= 0 on
    // sink edges (no P variable there).
    for k in 1..=stripes {
        for (u, v) in real_edges.iter().chain(sink_edges.iter()) {
            let f = f_idx[&(k, u.clone(), v.clone())];
            let mut terms = vec![(f, 1.0)];
            if let Some(&p) = p_idx.get(&(k, u.clone(), v.clone())) {
                terms.push((p, -1.0));
            }
            constraints.push(Constraint {
                name: format!("eq6_{}_{}_{}", k, sname(u), sname(v)),
                equation: 6,
                terms,
                sense: Sense::Ge,
                rhs: 0.0,
            });
        }
    }
    // (7) flow upper bounds: F <= |D| * P on real edges (big-M linearization
    // of the select-or-zero case), F <= 1 on destination->sink edges.
    for k in 1..=stripes {
        for (u, v) in &real_edges {
            let f = f_idx[&(k, u.clone(), v.clone())];
            let p = p_idx[&(k, u.clone(), v.clone())];
            constraints.push(Constraint {
                name: format!("eq7_{}_{}_{}", k, sname(u), sname(v)),
                equation: 7,
                terms: vec![(f, 1.0), (p, -(dst_count as f64))],
                sense: Sense::Le,
                rhs: 0.0,
            });
        }
        for (u, v) in &sink_edges {
            let f = f_idx[&(k, u.clone(), v.clone())];
            constraints.push(Constraint {
                name: format!("eq7_{}_{}_{}", k, sname(u), sname(v)),
                equation: 7,
                terms: vec![(f, 1.0)],
                sense: Sense::Le,
                rhs: 1.0,
            });
        }
    }
    // (8) conservation per (stripe, node in V union {sink}): net outflow is
    // |D| at the source, -|D| at the sink, 0 elsewhere.
    for k in 1..=stripes {
        for node in nodes.iter().map(String::as_str).chain([SINK]) {
            let mut terms = Vec::new();
            for (u, v) in real_edges.iter().chain(sink_edges.iter()) {
                let f = f_idx[&(k, u.clone(), v.clone())];
                if u == node {
                    terms.push((f, 1.0));
                }
                if v == node {
                    terms.push((f, -1.0));
                }
            }
            let rhs = if node == spec.src {
                dst_count as f64
            } else if node == SINK {
                -(dst_count as f64)
            } else {
                0.0
            };
            constraints.push(Constraint {
                name: format!("eq8_{}_{}", k, if node == SINK { SINK.to_string() } else { sname(node) }),
                equation: 8,
                terms,
                sense: Sense::Eq,
                rhs,
            });
        }
    }

    MilpModel {
        vars,
        objective,
        constraints,
        nodes,
        real_edges,
        partitions: stripes,
    }
}

fn write_terms(out: &mut String, names: &[String], terms: &[(usize, f64)]) {
    for (i, (var, coef)) in terms.iter().enumerate() {
        if i == 0 {
            if *coef < 0.0 {
                let _ = write!(out, "- {} {}", -coef, names[*var]);
            } else {
                let _ = write!(out, "{} {}", coef, names[*var]);
            }
        } else if *coef < 0.0 {
            let _ = write!(out, " - {} {}", -coef, names[*var]);
        } else {
            let _ = write!(out, " + {} {}", coef, names[*var]);
        }
    }
}

/// Emit the model as deterministic LP-format text. Two calls on equal models
/// produce identical bytes.
pub fn emit_lp(model: &MilpModel) -> Result<String, MilpError> {
    let names = model.var_names()?;
    let mut out = String::new();
    out.push_str("\\ multicast broadcast plan model\n");
    out.push_str("Minimize\n obj: ");
    write_terms(&mut out, &names, &model.objective);
    out.push_str("\nSubject To\n");
    for c in &model.constraints {
        let _ = write!(out, " {}: ", c.name);
        write_terms(&mut out, &names, &c.terms);
        let _ = writeln!(out, " {} {}", c.sense.lp_symbol(), c.rhs);
    }
    out.push_str("Bounds\n");
    for (var, name) in model.vars.iter().zip(&names) {
        if !var.binary && !var.integer {
            let _ = writeln!(out, " 0 <= {name}");
        }
    }
    out.push_str("Generals\n");
    for (var, name) in model.vars.iter().zip(&names) {
        if var.integer {
            let _ = writeln!(out, " {name}");
        }
    }
    out.push_str("Binaries\n");
    for (var, name) in model.vars.iter().zip(&names) {
        if var.binary {
            let _ = writeln!(out, " {name}");
        }
    }
    out.push_str("End\n");
    Ok(out)
}

/// Variable values as produced by an external solver.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Assignment(pub BTreeMap<String, f64>);

impl Assignment {
    pub fn get(&self, name: &str) -> Option<f64> {
        self.0.get(name).copied()
    }
}

/// Parse an assignment file: one `<varname> <value>` pair per line. Blank
/// lines and lines starting with `#` are ignored.
pub fn parse_assignment(text: &str) -> Result<Assignment, MilpError> {
    let mut map = BTreeMap::new();
    for (i, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let mut parts = line.split_whitespace();
        let name = parts.next().ok_or(MilpError::AssignmentParse {
            line: i + 1,
            message: "missing variable name".into(),
        })?;
        let value: f64 = parts
            .next()
            .ok_or(MilpError::AssignmentParse {
                line: i + 1,
                message: "missing value".into(),
            })?
            .parse()
            .map_err(|e| MilpError::AssignmentParse {
                line: i + 1,
                message: format!("bad value: {e}"),
            })?;
        if parts.next().is_some() {
            return Err(MilpError::AssignmentParse {
                line: i + 1,
                message: "trailing tokens".into(),
            });
        }
        map.insert(name.to_string(), value);
    }
    Ok(Assignment(map))
}

pub fn load_assignment(path: &Path) -> Result<Assignment, MilpError> {
    let text = fs::read_to_string(path).map_err(|source| MilpError::Io {
        path: path.display().to_string(),
        source,
    })?;
    parse_assignment(&text)
}

pub fn serialize_assignment(assignment: &Assignment) -> String {
    let mut out = String::new();
    for (name, value) in &assignment.0 {
        let _ = writeln!(out, "{name} {value}");
    }
    out
}

struct ResolvedAssignment {
    /// Values in variable-index order.
    values: Vec<f64>,
}

fn resolve(model: &MilpModel, assignment: &Assignment) -> Result<ResolvedAssignment, MilpError> {
    let names = model.var_names()?;
    let mut values = Vec::with_capacity(names.len());
    for (var, name) in model.vars.iter().zip(&names) {
        let value = assignment
            .get(name)
            .ok_or_else(|| MilpError::MissingVariable(name.clone()))?;
        if var.binary {
            let nearest = if value < 0.5 { 0.0 } else { 1.0 };
            if (value - nearest).abs() > INTEGRALITY_TOL {
                return Err(MilpError::NotIntegral {
                    name: name.clone(),
                    value,
                    tol: INTEGRALITY_TOL,
                });
            }
        } else if var.integer && (value - value.round()).abs() > INTEGRALITY_TOL {
            return Err(MilpError::NotIntegral {
                name: name.clone(),
                value,
                tol: INTEGRALITY_TOL,
            });
        }
        values.push(value);
    }
    Ok(ResolvedAssignment { values })
}

/// Objective value of an assignment under the model's cost vector.
pub fn objective_value(model: &MilpModel, assignment: &Assignment) -> Result<f64, MilpError> {
    let resolved = resolve(model, assignment)?;
    Ok(model
        .objective
        .iter()
        .map(|(var, coef)| coef * resolved.values[*var])
        .sum())
}

/// Constraint rows an assignment violates beyond `tol`, with the violation
/// magnitude. Empty means the assignment is feasible for the model.
pub fn check_constraints(
    model: &MilpModel,
    assignment: &Assignment,
    tol: f64,
) -> Result<Vec<(String, f64)>, MilpError> {
    let resolved = resolve(model, assignment)?;
    let mut violations = Vec::new();
    for c in &model.constraints {
        let lhs: f64 = c
            .terms
            .iter()
            .map(|(var, coef)| coef * resolved.values[*var])
            .sum();
        let excess = match c.sense {
            Sense::Le => lhs - c.rhs,
            Sense::Ge => c.rhs - lhs,
            Sense::Eq => (lhs - c.rhs).abs(),
        };
        if excess > tol {
            violations.push((c.name.clone(), excess));
        }
    }
    Ok(violations)
}

/// Decode a solved assignment into a broadcast plan plus VM allocation.
///
/// For each stripe the selected edge set is `{e : P >= 0.5}`; a path is
/// extracted per destination by walking selected edges from the source,
/// preferring higher flow values when the selection branches.
pub fn decode_solution(
    model: &MilpModel,
    assignment: &Assignment,
    topo: &Topology,
    spec: &TransferSpec,
) -> Result<(BroadcastPlan, VmAllocation), MilpError> {
    let resolved = resolve(model, assignment)?;
    let value_of: BTreeMap<&VarKind, f64> = model
        .vars
        .iter()
        .map(|v| &v.kind)
        .zip(resolved.values.iter().copied())
        .collect();

    let mut plan = BroadcastPlan::new(spec.src.clone(), spec.dsts.clone(), spec.partitions);
    for k in 1..=model.partitions {
        // adjacency over selected edges, with flow values for tie-breaking
        let mut adjacency: BTreeMap<&str, Vec<(&str, f64)>> = BTreeMap::new();
        for (u, v) in &model.real_edges {
            let p = value_of[&VarKind::StripeEdge {
                k,
                src: u.clone(),
                dst: v.clone(),
            }];
            if p >= 0.5 {
                let flow = value_of[&VarKind::Flow {
                    k,
                    src: u.clone(),
                    dst: v.clone(),
                }];
                adjacency.entry(u.as_str()).or_default().push((v, flow));
            }
        }
        for neighbors in adjacency.values_mut() {
            neighbors.sort_by(|a, b| {
                b.1.partial_cmp(&a.1)
                    .unwrap_or(std::cmp::Ordering::Equal)
                    .then_with(|| a.0.cmp(b.0))
            });
        }
        for dst in &spec.dsts {
            let path =
                find_path(&adjacency, &spec.src, dst).ok_or_else(|| MilpError::Disconnected {
                    src: spec.src.clone(),
                    dst: dst.clone(),
                    k,
                })?;
            plan.set_path(dst.clone(), k, path);
        }
    }

    let violations = verify_plan(&plan, topo, spec);
    if !violations.is_empty() {
        return Err(MilpError::DecodedPlanInvalid(violations));
    }

    let mut counts = BTreeMap::new();
    for node in &model.nodes {
        let value = value_of[&VarKind::VmCount { node: node.clone() }];
        let rounded = value.round() as u32;
        if rounded > 0 {
            counts.insert(node.clone(), rounded);
        }
    }
    Ok((plan, VmAllocation(counts)))
}

fn find_path(
    adjacency: &BTreeMap<&str, Vec<(&str, f64)>>,
    src: &str,
    dst: &str,
) -> Option<Vec<(String, String)>> {
    // depth-first walk over the selected subgraph; neighbor order already
    // encodes the flow tie-break. Nodes are marked visited on entry, so the
    // preferred branch is fully explored before alternatives.
    fn dfs<'a>(
        adjacency: &BTreeMap<&'a str, Vec<(&'a str, f64)>>,
        node: &str,
        dst: &str,
        visited: &mut std::collections::BTreeSet<String>,
        path: &mut Vec<(String, String)>,
    ) -> bool {
        if node == dst {
            return true;
        }
        if let Some(neighbors) = adjacency.get(node) {
            for (next, _flow) in neighbors {
                if visited.contains(*next) {
                    continue;
                }
                visited.insert((*next).to_string());
                path.push((node.to_string(), (*next).to_string()));
                if dfs(adjacency, next, dst, visited, path) {
                    return true;
                }
                path.pop();
            }
        }
        false
    }
    let mut visited = std::collections::BTreeSet::new();
    visited.insert(src.to_string());
    let mut path = Vec::new();
    if dfs(adjacency, src, dst, &mut visited, &mut path) {
        Some(path)
    } else {
        None
    }
}

/// Re-encode a verified plan (and its VM allocation) as a model assignment:
/// `P` from each stripe's edge union, `N` from the allocation, and `F` as
/// one unit of flow per destination routed along that destination's path.
pub fn encode_assignment(
    model: &MilpModel,
    plan: &BroadcastPlan,
    allocation: &VmAllocation,
) -> Result<Assignment, MilpError> {
    let names = model.var_names()?;
    let mut values: Vec<f64> = vec![0.0; model.vars.len()];
    let index_of: BTreeMap<&VarKind, usize> = model
        .vars
        .iter()
        .enumerate()
        .map(|(i, v)| (&v.kind, i))
        .collect();

    for ((dst, k), edges) in plan.paths() {
        for (u, v) in edges {
            let p = index_of[&VarKind::StripeEdge {
                k: *k,
                src: u.clone(),
                dst: v.clone(),
            }];
            values[p] = 1.0;
            let f = index_of[&VarKind::Flow {
                k: *k,
                src: u.clone(),
                dst: v.clone(),
            }];
            values[f] += 1.0;
        }
        let sink = index_of[&VarKind::Flow {
            k: *k,
            src: dst.clone(),
            dst: SINK.to_string(),
        }];
        values[sink] = 1.0;
    }
    for (node, count) in &allocation.0 {
        let n = index_of[&VarKind::VmCount { node: node.clone() }];
        values[n] = f64::from(*count);
    }

    Ok(Assignment(
        names.into_iter().zip(values).collect::<BTreeMap<_, _>>(),
    ))
}
