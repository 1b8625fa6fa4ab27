//! Broadcast-plan verification and scoring.
//!
//! A [`BroadcastPlan`] assigns one edge path per (destination, stripe) pair.
//! Verification checks structural validity against the topology and transfer
//! spec; evaluation applies the cost/time model:
//!
//! - an edge carries a stripe once no matter how many destination paths of
//!   that stripe reuse it (multicast fan-out shares the send),
//! - `edge_time = load x stripe_gb x 8 / throughput_gbps`,
//! - a destination completes when all its stripes complete; the overall
//!   transfer time is the slowest destination,
//! - total cost = egress cost + instance cost, and the combined score is
//!   `1 / (1 + total cost)` for feasible plans, `0` otherwise.

use std::collections::{BTreeMap, BTreeSet};
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::topology::{Topology, TransferSpec};

/// Candidate solution: one ordered edge list per (destination, stripe).
#[derive(Debug, Clone, PartialEq)]
pub struct BroadcastPlan {
    pub src: String,
    pub dsts: BTreeSet<String>,
    pub partitions: u32,
    paths: BTreeMap<(String, u32), Vec<(String, String)>>,
}

impl BroadcastPlan {
    pub fn new(src: impl Into<String>, dsts: BTreeSet<String>, partitions: u32) -> Self {
        BroadcastPlan {
            src: src.into(),
            dsts,
            partitions,
            paths: BTreeMap::new(),
        }
    }

    /// Set the path for (dst, stripe k). Replaces any prior path.
    pub fn set_path(&mut self, dst: impl Into<String>, k: u32, edges: Vec<(String, String)>) {
        self.paths.insert((dst.into(), k), edges);
    }

    pub fn path(&self, dst: &str, k: u32) -> Option<&[(String, String)]> {
        self.paths
            .get(&(dst.to_string(), k))
            .map(Vec::as_slice)
    }

    /// All paths in (dst, k) order.
    pub fn paths(&self) -> impl Iterator<Item = (&(String, u32), &Vec<(String, String)>)> {
        self.paths.iter()
    }

    pub fn path_count(&self) -> usize {
        self.paths.len()
    }
}

/// Per-node VM counts (`N_v`).
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct VmAllocation(pub BTreeMap<String, u32>);

impl VmAllocation {
    pub fn count(&self, node: &str) -> u32 {
        self.0.get(node).copied().unwrap_or(0)
    }

    pub fn total(&self) -> u32 {
        self.0.values().sum()
    }
}

/// Outcome of scoring one plan.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvaluationReport {
    pub feasible: bool,
    pub violations: Vec<String>,
    pub egress_cost: f64,
    pub instance_cost: f64,
    pub total_cost: f64,
    pub transfer_time_s: f64,
    /// `1 / (1 + total_cost)` when feasible, `0` when not.
    pub combined_score: f64,
    pub vm_allocation: VmAllocation,
}

#[derive(Debug, Error)]
pub enum EvalError {
    #[error("plan failed verification: {0:?}")]
    UnverifiedPlan(Vec<String>),
}

/// Why a VM allocation cannot exist within the node caps.
#[derive(Debug, Error, Clone, PartialEq)]
#[error("vm cap exceeded at {node}: need {required} VMs > cap {cap} (binding constraint: {constraint})")]
pub struct AllocationInfeasible {
    pub node: String,
    pub required: u64,
    pub cap: u32,
    pub constraint: String,
}

/// The combined score for a total cost: `1 / (1 + total_cost)`.
pub fn combined_score(total_cost: f64) -> f64 {
    1.0 / (1.0 + total_cost)
}

/// Check every plan invariant against the topology and spec. An empty list
/// means the plan is structurally valid.
pub fn verify_plan(plan: &BroadcastPlan, topo: &Topology, spec: &TransferSpec) -> Vec<String> {
    let mut violations = Vec::new();
    if plan.src != spec.src {
        violations.push(format!(
            "plan source {} does not match spec source {}",
            plan.src, spec.src
        ));
    }
    if plan.dsts != spec.dsts {
        violations.push("plan destinations do not match spec destinations".to_string());
    }
    if plan.partitions != spec.partitions {
        violations.push(format!(
            "plan partitions {} do not match spec partitions {}",
            plan.partitions, spec.partitions
        ));
    }
    for dst in &plan.dsts {
        for k in 1..=plan.partitions {
            if plan.path(dst, k).is_none() {
                violations.push(format!("missing path for destination {dst} stripe {k}"));
            }
        }
    }
    for ((dst, k), edges) in plan.paths() {
        if !plan.dsts.contains(dst) {
            violations.push(format!(
                "path for destination {dst} stripe {k}: {dst} is not in the destination set"
            ));
            continue;
        }
        if *k < 1 || *k > plan.partitions {
            violations.push(format!(
                "path for destination {dst} stripe {k}: stripe out of range 1..={}",
                plan.partitions
            ));
            continue;
        }
        if edges.is_empty() {
            violations.push(format!("path for destination {dst} stripe {k} is empty"));
            continue;
        }
        if edges[0].0 != plan.src {
            violations.push(format!(
                "path for destination {dst} stripe {k} does not start at source {} (starts at {})",
                plan.src, edges[0].0
            ));
        }
        if edges[edges.len() - 1].1 != *dst {
            violations.push(format!(
                "path for destination {dst} stripe {k} does not end at {dst} (ends at {})",
                edges[edges.len() - 1].1
            ));
        }
        for pair in edges.windows(2) {
            if pair[0].1 != pair[1].0 {
                violations.push(format!(
                    "path for destination {dst} stripe {k} is not contiguous: edge {}->{} followed by {}->{}",
                    pair[0].0, pair[0].1, pair[1].0, pair[1].1
                ));
            }
        }
        for (u, v) in edges {
            if topo.edge(u, v).is_none() {
                violations.push(format!(
                    "path for destination {dst} stripe {k} uses unknown edge {u}->{v}"
                ));
            }
        }
    }
    violations
}

fn require_verified(
    plan: &BroadcastPlan,
    topo: &Topology,
    spec: &TransferSpec,
) -> Result<(), EvalError> {
    let violations = verify_plan(plan, topo, spec);
    if violations.is_empty() {
        Ok(())
    } else {
        Err(EvalError::UnverifiedPlan(violations))
    }
}

fn stripe_edge_sets(plan: &BroadcastPlan) -> BTreeMap<u32, BTreeSet<(String, String)>> {
    let mut sets: BTreeMap<u32, BTreeSet<(String, String)>> = BTreeMap::new();
    for ((_dst, k), edges) in plan.paths() {
        let set = sets.entry(*k).or_default();
        for e in edges {
            set.insert(e.clone());
        }
    }
    sets
}

fn edge_load_unchecked(plan: &BroadcastPlan) -> BTreeMap<(String, String), u32> {
    let mut load: BTreeMap<(String, String), u32> = BTreeMap::new();
    for set in stripe_edge_sets(plan).values() {
        for e in set {
            *load.entry(e.clone()).or_insert(0) += 1;
        }
    }
    load
}

/// Number of stripes using each edge. An edge shared by several destination
/// paths of the same stripe counts once for that stripe; unused edges are
/// absent from the map.
pub fn edge_load(
    plan: &BroadcastPlan,
    topo: &Topology,
    spec: &TransferSpec,
) -> Result<BTreeMap<(String, String), u32>, EvalError> {
    require_verified(plan, topo, spec)?;
    Ok(edge_load_unchecked(plan))
}

fn edge_times(
    plan: &BroadcastPlan,
    topo: &Topology,
    spec: &TransferSpec,
) -> BTreeMap<(String, String), f64> {
    let stripe_gb = spec.stripe_gb();
    edge_load_unchecked(plan)
        .into_iter()
        .map(|((u, v), load)| {
            let throughput = topo
                .edge(&u, &v)
                .expect("verified plan references known edges")
                .throughput_gbps;
            let time = f64::from(load) * stripe_gb * 8.0 / throughput;
            ((u, v), time)
        })
        .collect()
}

/// Transfer time of the plan: overall seconds plus the per-destination
/// completion times.
pub fn compute_transfer_time(
    plan: &BroadcastPlan,
    topo: &Topology,
    spec: &TransferSpec,
) -> Result<(f64, BTreeMap<String, f64>), EvalError> {
    require_verified(plan, topo, spec)?;
    let times = edge_times(plan, topo, spec);
    let mut per_destination: BTreeMap<String, f64> = BTreeMap::new();
    for ((dst, _k), edges) in plan.paths() {
        let path_time = edges
            .iter()
            .map(|e| times[e])
            .fold(0.0_f64, f64::max);
        let entry = per_destination.entry(dst.clone()).or_insert(0.0);
        *entry = entry.max(path_time);
    }
    let overall = per_destination.values().copied().fold(0.0_f64, f64::max);
    Ok((overall, per_destination))
}

/// Minimal VM allocation satisfying the per-edge, per-node egress, and
/// per-node ingress volume constraints over the time budget. Nodes with no
/// traffic get zero VMs, except the source which always gets at least one.
pub fn derive_vm_allocation(
    plan: &BroadcastPlan,
    topo: &Topology,
    spec: &TransferSpec,
) -> Result<VmAllocation, EvalError> {
    require_verified(plan, topo, spec)?;
    derive_vm_allocation_unchecked(plan, topo, spec).map_err(|e| {
        EvalError::UnverifiedPlan(vec![e.to_string()])
    })
}

fn derive_vm_allocation_unchecked(
    plan: &BroadcastPlan,
    topo: &Topology,
    spec: &TransferSpec,
) -> Result<VmAllocation, AllocationInfeasible> {
    let stripe_gb = spec.stripe_gb();
    let budget = spec.time_budget_s;
    let load = edge_load_unchecked(plan);

    // Lower bound on N_v per constraint family; volumes in GB, rates
    // converted from Gbps to GB/s (divide by 8).
    let mut required: BTreeMap<String, (f64, String)> = BTreeMap::new();
    let mut raise = |node: &str, bound: f64, constraint: String| {
        let entry = required
            .entry(node.to_string())
            .or_insert((0.0, String::new()));
        if bound > entry.0 {
            *entry = (bound, constraint);
        }
    };

    let mut egress_volume: BTreeMap<String, f64> = BTreeMap::new();
    let mut ingress_volume: BTreeMap<String, f64> = BTreeMap::new();
    for ((u, v), count) in &load {
        let volume = f64::from(*count) * stripe_gb;
        let edge = topo.edge(u, v).expect("verified plan references known edges");
        let bound = volume / (budget * edge.throughput_gbps / 8.0);
        raise(u, bound, format!("edge capacity on {u}->{v}"));
        *egress_volume.entry(u.clone()).or_insert(0.0) += volume;
        *ingress_volume.entry(v.clone()).or_insert(0.0) += volume;
    }
    for (node, volume) in &egress_volume {
        let limits = topo.node(node).expect("verified plan references known nodes");
        raise(
            node,
            volume / (budget * limits.egress_gbps / 8.0),
            format!("aggregate egress at {node}"),
        );
    }
    for (node, volume) in &ingress_volume {
        let limits = topo.node(node).expect("verified plan references known nodes");
        raise(
            node,
            volume / (budget * limits.ingress_gbps / 8.0),
            format!("aggregate ingress at {node}"),
        );
    }

    let mut counts: BTreeMap<String, u32> = BTreeMap::new();
    for (node, (bound, constraint)) in &required {
        let needed = bound.ceil() as u64;
        let cap = topo.node(node).expect("known node").vm_cap;
        if needed > u64::from(cap) {
            return Err(AllocationInfeasible {
                node: node.clone(),
                required: needed,
                cap,
                constraint: constraint.clone(),
            });
        }
        if needed > 0 {
            counts.insert(node.clone(), needed as u32);
        }
    }
    // The source always runs at least one VM.
    if counts.get(&spec.src).copied().unwrap_or(0) == 0 {
        let cap = topo.node(&spec.src).expect("known source").vm_cap;
        if cap == 0 {
            return Err(AllocationInfeasible {
                node: spec.src.clone(),
                required: 1,
                cap,
                constraint: format!("source minimum at {}", spec.src),
            });
        }
        counts.insert(spec.src.clone(), 1);
    }
    Ok(VmAllocation(counts))
}

/// Score a plan. Verification runs inside; all failures are expressed in the
/// report rather than as errors, so search drivers keep a total ordering.
pub fn evaluate(plan: &BroadcastPlan, topo: &Topology, spec: &TransferSpec) -> EvaluationReport {
    let mut violations = verify_plan(plan, topo, spec);
    if !violations.is_empty() {
        return EvaluationReport {
            feasible: false,
            violations,
            egress_cost: 0.0,
            instance_cost: 0.0,
            total_cost: 0.0,
            transfer_time_s: 0.0,
            combined_score: 0.0,
            vm_allocation: VmAllocation::default(),
        };
    }

    let stripe_gb = spec.stripe_gb();
    let load = edge_load_unchecked(plan);
    let egress_cost: f64 = load
        .iter()
        .map(|((u, v), count)| {
            let edge = topo.edge(u, v).expect("verified plan references known edges");
            f64::from(*count) * stripe_gb * edge.cost_per_gb
        })
        .sum();

    let (overall, _per_dst) =
        compute_transfer_time(plan, topo, spec).expect("plan already verified");
    if overall > spec.time_budget_s {
        violations.push(format!(
            "time budget exceeded: {overall} > {}",
            spec.time_budget_s
        ));
    }

    let (vm_allocation, instance_cost) = match derive_vm_allocation_unchecked(plan, topo, spec) {
        Ok(alloc) => {
            // Instance cost charges the full time budget per Eq-style costing;
            // the report also exposes transfer_time_s for callers that want
            // the realized-time alternative.
            let cost = spec.time_budget_s
                * alloc
                    .0
                    .iter()
                    .map(|(node, count)| {
                        topo.node(node).expect("known node").vm_price_per_s * f64::from(*count)
                    })
                    .sum::<f64>();
            (alloc, cost)
        }
        Err(infeasible) => {
            violations.push(infeasible.to_string());
            (VmAllocation::default(), 0.0)
        }
    };

    let total_cost = egress_cost + instance_cost;
    let feasible = violations.is_empty();
    EvaluationReport {
        feasible,
        violations,
        egress_cost,
        instance_cost,
        total_cost,
        transfer_time_s: overall,
        combined_score: if feasible { combined_score(total_cost) } else { 0.0 },
        vm_allocation,
    }
}

// ---------------------------------------------------------------------------
// Plan file format
// ---------------------------------------------------------------------------

#[derive(Debug, Serialize, Deserialize)]
struct PlanFile {
    src: String,
    dsts: Vec<String>,
    partitions: u32,
    paths: Vec<PathRecord>,
}

#[derive(Debug, Serialize, Deserialize)]
struct PathRecord {
    dst: String,
    k: u32,
    edges: Vec<(String, String)>,
}

#[derive(Debug, Error)]
pub enum PlanFileError {
    #[error("io error reading {path}: {source}")]
    Io {
        path: String,
        source: std::io::Error,
    },
    #[error("parse error at line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("duplicate path for destination {dst} stripe {k}")]
    DuplicatePath { dst: String, k: u32 },
}

pub fn parse_plan(text: &str) -> Result<BroadcastPlan, PlanFileError> {
    let file: PlanFile = serde_json::from_str(text).map_err(|e| PlanFileError::Parse {
        line: e.line(),
        message: e.to_string(),
    })?;
    let mut plan = BroadcastPlan::new(file.src, file.dsts.into_iter().collect(), file.partitions);
    for rec in file.paths {
        if plan.path(&rec.dst, rec.k).is_some() {
            return Err(PlanFileError::DuplicatePath {
                dst: rec.dst,
                k: rec.k,
            });
        }
        plan.set_path(rec.dst, rec.k, rec.edges);
    }
    Ok(plan)
}

pub fn serialize_plan(plan: &BroadcastPlan) -> String {
    let file = PlanFile {
        src: plan.src.clone(),
        dsts: plan.dsts.iter().cloned().collect(),
        partitions: plan.partitions,
        paths: plan
            .paths()
            .map(|((dst, k), edges)| PathRecord {
                dst: dst.clone(),
                k: *k,
                edges: edges.clone(),
            })
            .collect(),
    };
    serde_json::to_string_pretty(&file).expect("plan serialization cannot fail")
}

pub fn load_plan(path: &Path) -> Result<BroadcastPlan, PlanFileError> {
    let text = fs::read_to_string(path).map_err(|source| PlanFileError::Io {
        path: path.display().to_string(),
        source,
    })?;
    parse_plan(&text)
}

pub fn save_plan(path: &Path, plan: &BroadcastPlan) -> Result<(), PlanFileError> {
    crate::util::atomic_write(path, serialize_plan(plan).as_bytes()).map_err(|source| {
        PlanFileError::Io {
            path: path.display().to_string(),
            source,
        }
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::topology::{parse_topology, Edge, Node, Provider};
    use proptest::prelude::*;

    fn node(id: &str, ingress: f64, egress: f64, cap: u32) -> Node {
        Node {
            id: id.to_string(),
            provider: Provider::from_name(id.split(':').next().unwrap()),
            ingress_gbps: ingress,
            egress_gbps: egress,
            vm_price_per_s: 0.00015,
            vm_cap: cap,
        }
    }

    fn edge(src: &str, dst: &str, cost: f64, throughput: f64) -> Edge {
        Edge {
            src: src.to_string(),
            dst: dst.to_string(),
            cost_per_gb: cost,
            throughput_gbps: throughput,
        }
    }

    fn path(edges: &[(&str, &str)]) -> Vec<(String, String)> {
        edges
            .iter()
            .map(|(u, v)| (u.to_string(), v.to_string()))
            .collect()
    }

    fn spec(src: &str, dsts: &[&str], size_gb: f64, budget: f64, k: u32) -> TransferSpec {
        TransferSpec {
            src: src.to_string(),
            dsts: dsts.iter().map(|s| s.to_string()).collect(),
            size_gb,
            time_budget_s: budget,
            partitions: k,
        }
    }

    /// Star: s with direct edges to d1, d2.
    fn star() -> (Topology, TransferSpec) {
        let topo = Topology::new(
            vec![
                node("aws:s", 10.0, 10.0, 4),
                node("aws:d1", 10.0, 10.0, 4),
                node("aws:d2", 10.0, 10.0, 4),
            ],
            vec![
                edge("aws:s", "aws:d1", 0.05, 10.0),
                edge("aws:s", "aws:d2", 0.05, 10.0),
            ],
        )
        .unwrap();
        let spec = spec("aws:s", &["aws:d1", "aws:d2"], 60.0, 10_000.0, 1);
        (topo, spec)
    }

    fn star_plan(spec: &TransferSpec) -> BroadcastPlan {
        let mut plan = BroadcastPlan::new(&spec.src, spec.dsts.clone(), spec.partitions);
        plan.set_path("aws:d1", 1, path(&[("aws:s", "aws:d1")]));
        plan.set_path("aws:d2", 1, path(&[("aws:s", "aws:d2")]));
        plan
    }

    #[test]
    fn valid_star_plan_verifies_clean() {
        let (topo, spec) = star();
        assert_eq!(verify_plan(&star_plan(&spec), &topo, &spec), Vec::<String>::new());
    }

    #[test]
    fn missing_path_is_reported() {
        let (topo, spec) = star();
        let mut plan = star_plan(&spec);
        plan.paths.remove(&("aws:d2".to_string(), 1));
        let violations = verify_plan(&plan, &topo, &spec);
        assert_eq!(
            violations,
            vec!["missing path for destination aws:d2 stripe 1".to_string()]
        );
    }

    #[test]
    fn non_contiguous_path_names_the_gap() {
        let topo = Topology::new(
            vec![
                node("aws:a", 10.0, 10.0, 4),
                node("aws:b", 10.0, 10.0, 4),
                node("aws:c", 10.0, 10.0, 4),
                node("aws:d", 10.0, 10.0, 4),
            ],
            vec![
                edge("aws:a", "aws:b", 0.1, 5.0),
                edge("aws:c", "aws:d", 0.1, 5.0),
            ],
        )
        .unwrap();
        let spec = spec("aws:a", &["aws:d"], 10.0, 1000.0, 1);
        let mut plan = BroadcastPlan::new("aws:a", spec.dsts.clone(), 1);
        plan.set_path("aws:d", 1, path(&[("aws:a", "aws:b"), ("aws:c", "aws:d")]));
        let violations = verify_plan(&plan, &topo, &spec);
        assert!(violations
            .iter()
            .any(|v| v.contains("not contiguous") && v.contains("aws:a->aws:b")));
    }

    /// Line s -> m -> {d1, d2}: all four (dst, k) paths traverse s->m, so the
    /// shared edge is loaded once per stripe, i.e. 2, not 4.
    fn shared_relay() -> (Topology, TransferSpec, BroadcastPlan) {
        let topo = Topology::new(
            vec![
                node("aws:s", 16.0, 16.0, 4),
                node("aws:m", 16.0, 16.0, 4),
                node("aws:d1", 16.0, 16.0, 4),
                node("aws:d2", 16.0, 16.0, 4),
            ],
            vec![
                edge("aws:s", "aws:m", 0.02, 10.0),
                edge("aws:m", "aws:d1", 0.02, 10.0),
                edge("aws:m", "aws:d2", 0.02, 10.0),
            ],
        )
        .unwrap();
        let spec = spec("aws:s", &["aws:d1", "aws:d2"], 60.0, 10_000.0, 2);
        let mut plan = BroadcastPlan::new("aws:s", spec.dsts.clone(), 2);
        for dst in ["aws:d1", "aws:d2"] {
            for k in 1..=2 {
                plan.set_path(dst, k, path(&[("aws:s", "aws:m"), ("aws:m", dst)]));
            }
        }
        (topo, spec, plan)
    }

    #[test]
    fn shared_edge_counts_once_per_stripe() {
        let (topo, spec, plan) = shared_relay();
        let load = edge_load(&plan, &topo, &spec).unwrap();
        // Enumerating (dst, k) paths by hand: stripe set on s->m is {1, 2}.
        assert_eq!(load[&("aws:s".to_string(), "aws:m".to_string())], 2);
        assert_eq!(load[&("aws:m".to_string(), "aws:d1".to_string())], 2);
    }

    #[test]
    fn unused_edge_absent_and_single_use_counts_one() {
        let (topo, spec) = star();
        let mut plan = star_plan(&spec);
        let load = edge_load(&plan, &topo, &spec).unwrap();
        assert_eq!(load[&("aws:s".to_string(), "aws:d1".to_string())], 1);
        assert_eq!(load.len(), 2);
        // drop d2's path -> its edge must vanish from the load map
        plan.paths.remove(&("aws:d2".to_string(), 1));
        plan.dsts.remove("aws:d2");
        let narrowed = spec_without_d2(&spec);
        let load = edge_load(&plan, &topo, &narrowed).unwrap();
        assert!(!load.contains_key(&("aws:s".to_string(), "aws:d2".to_string())));
    }

    fn spec_without_d2(spec: &TransferSpec) -> TransferSpec {
        let mut s = spec.clone();
        s.dsts.remove("aws:d2");
        s
    }

    #[test]
    fn edge_load_requires_verified_plan() {
        let (topo, spec) = star();
        let plan = BroadcastPlan::new("aws:s", spec.dsts.clone(), 1);
        assert!(matches!(
            edge_load(&plan, &topo, &spec),
            Err(EvalError::UnverifiedPlan(_))
        ));
    }

    #[test]
    fn single_edge_time_formula() {
        let topo = Topology::new(
            vec![node("aws:s", 10.0, 10.0, 4), node("aws:d", 10.0, 10.0, 4)],
            vec![edge("aws:s", "aws:d", 0.0, 1.0)],
        )
        .unwrap();
        // K=1, 30 GB stripe over 1 Gbps: 1 x 30 x 8 / 1 = 240 s.
        let spec1 = spec("aws:s", &["aws:d"], 30.0, 10_000.0, 1);
        let mut plan = BroadcastPlan::new("aws:s", spec1.dsts.clone(), 1);
        plan.set_path("aws:d", 1, path(&[("aws:s", "aws:d")]));
        let (overall, per_dst) = compute_transfer_time(&plan, &topo, &spec1).unwrap();
        assert_eq!(overall, 240.0);
        assert_eq!(per_dst["aws:d"], 240.0);

        // Two stripes sharing the edge: 2 x 30 x 8 / 1 = 480 s.
        let spec2 = spec("aws:s", &["aws:d"], 60.0, 10_000.0, 2);
        let mut plan2 = BroadcastPlan::new("aws:s", spec2.dsts.clone(), 2);
        plan2.set_path("aws:d", 1, path(&[("aws:s", "aws:d")]));
        plan2.set_path("aws:d", 2, path(&[("aws:s", "aws:d")]));
        let (overall2, _) = compute_transfer_time(&plan2, &topo, &spec2).unwrap();
        assert_eq!(overall2, 480.0);
    }

    /// Diamond s -> {a, b} -> d plus destination a itself. Loads, hand-derived
    /// by enumerating the (dst, k) paths:
    ///   s->a carries stripes {1,2} (a's paths and d's stripe-1 path) -> 2
    ///   a->d carries {1} -> 1, s->b carries {2} -> 1, b->d carries {2} -> 1
    /// edge times: s->a: 2*30*8/5 = 96, a->d: 1*30*8/10 = 24,
    ///             s->b: 24, b->d: 24.
    /// per-path maxima: (a,1)=96, (a,2)=96, (d,1)=max(96,24)=96,
    ///                  (d,2)=max(24,24)=24 -> a: 96, d: 96 -> overall 96.
    fn diamond() -> (Topology, TransferSpec, BroadcastPlan) {
        let topo = Topology::new(
            vec![
                node("aws:s", 64.0, 64.0, 8),
                node("aws:a", 64.0, 64.0, 8),
                node("aws:b", 64.0, 64.0, 8),
                node("aws:d", 64.0, 64.0, 8),
            ],
            vec![
                edge("aws:s", "aws:a", 0.05, 5.0),
                edge("aws:a", "aws:d", 0.05, 10.0),
                edge("aws:s", "aws:b", 0.05, 10.0),
                edge("aws:b", "aws:d", 0.05, 10.0),
            ],
        )
        .unwrap();
        let spec = spec("aws:s", &["aws:a", "aws:d"], 60.0, 10_000.0, 2);
        let mut plan = BroadcastPlan::new("aws:s", spec.dsts.clone(), 2);
        plan.set_path("aws:a", 1, path(&[("aws:s", "aws:a")]));
        plan.set_path("aws:a", 2, path(&[("aws:s", "aws:a")]));
        plan.set_path("aws:d", 1, path(&[("aws:s", "aws:a"), ("aws:a", "aws:d")]));
        plan.set_path("aws:d", 2, path(&[("aws:s", "aws:b"), ("aws:b", "aws:d")]));
        (topo, spec, plan)
    }

    #[test]
    fn diamond_transfer_time_matches_hand_enumeration() {
        let (topo, spec, plan) = diamond();
        let (overall, per_dst) = compute_transfer_time(&plan, &topo, &spec).unwrap();
        assert_eq!(overall, 96.0);
        assert_eq!(per_dst["aws:a"], 96.0);
        assert_eq!(per_dst["aws:d"], 96.0);

        // Independent oracle: recompute from scratch over all plan paths.
        let loads = edge_load(&plan, &topo, &spec).unwrap();
        let mut brute_overall = 0.0_f64;
        for ((_dst, _k), edges) in plan.paths() {
            for e in edges {
                let t = f64::from(loads[e]) * spec.stripe_gb() * 8.0
                    / topo.edge(&e.0, &e.1).unwrap().throughput_gbps;
                brute_overall = brute_overall.max(t);
            }
        }
        assert_eq!(overall, brute_overall);
    }

    #[test]
    fn vm_allocation_hand_case() {
        // 300 GB over one 5 Gbps edge in T=1000 s, egress limit 5 Gbps/VM:
        // volume bound = 300 / (1000 * 5/8 GBps) = 0.48 -> ceil 1.
        // Destination ingress 10 Gbps: 300 / (1000 * 10/8) = 0.24 -> ceil 1.
        let topo = Topology::new(
            vec![node("aws:s", 10.0, 5.0, 2), node("aws:d", 10.0, 5.0, 2)],
            vec![edge("aws:s", "aws:d", 0.09, 5.0)],
        )
        .unwrap();
        let spec = spec("aws:s", &["aws:d"], 300.0, 1000.0, 1);
        let mut plan = BroadcastPlan::new("aws:s", spec.dsts.clone(), 1);
        plan.set_path("aws:d", 1, path(&[("aws:s", "aws:d")]));
        let alloc = derive_vm_allocation(&plan, &topo, &spec).unwrap();
        assert_eq!(alloc.count("aws:s"), 1);
        assert_eq!(alloc.count("aws:d"), 1);
        assert_eq!(alloc.total(), 2);
    }

    #[test]
    fn zero_traffic_node_gets_no_vms_and_src_gets_one() {
        let topo = Topology::new(
            vec![
                node("aws:s", 10.0, 10.0, 4),
                node("aws:d1", 10.0, 10.0, 4),
                node("aws:d2", 10.0, 10.0, 4),
                node("aws:idle", 10.0, 10.0, 4),
            ],
            vec![
                edge("aws:s", "aws:d1", 0.05, 10.0),
                edge("aws:s", "aws:d2", 0.05, 10.0),
                edge("aws:idle", "aws:d2", 0.05, 10.0),
            ],
        )
        .unwrap();
        let spec = spec("aws:s", &["aws:d1", "aws:d2"], 0.001, 10_000.0, 1);
        let mut plan = BroadcastPlan::new("aws:s", spec.dsts.clone(), 1);
        plan.set_path("aws:d1", 1, path(&[("aws:s", "aws:d1")]));
        plan.set_path("aws:d2", 1, path(&[("aws:s", "aws:d2")]));
        let alloc = derive_vm_allocation(&plan, &topo, &spec).unwrap();
        assert_eq!(alloc.count("aws:s"), 1);
        assert_eq!(alloc.count("aws:d1"), 1); // has ingress traffic
        assert_eq!(alloc.count("aws:idle"), 0); // no traffic, no VMs
        assert!(!alloc.0.contains_key("aws:idle"));
    }

    #[test]
    fn relay_with_zero_cap_is_infeasible() {
        let topo = Topology::new(
            vec![
                node("aws:s", 10.0, 10.0, 2),
                node("aws:m", 10.0, 10.0, 0),
                node("aws:d", 10.0, 10.0, 2),
            ],
            vec![
                edge("aws:s", "aws:m", 0.01, 10.0),
                edge("aws:m", "aws:d", 0.01, 10.0),
            ],
        )
        .unwrap();
        let spec = spec("aws:s", &["aws:d"], 100.0, 1000.0, 1);
        let mut plan = BroadcastPlan::new("aws:s", spec.dsts.clone(), 1);
        plan.set_path("aws:d", 1, path(&[("aws:s", "aws:m"), ("aws:m", "aws:d")]));
        let report = evaluate(&plan, &topo, &spec);
        assert!(!report.feasible);
        assert!(report
            .violations
            .iter()
            .any(|v| v.contains("vm cap exceeded at aws:m")));
    }

    #[test]
    fn score_of_cost_626_matches_reference() {
        let s = combined_score(626.0);
        assert!((s - 0.0015949).abs() < 1e-6);
        assert_eq!(format!("{s:.5}"), "0.00159");
    }

    #[test]
    fn instance_cost_direct_product() {
        // One VM at 0.00015 $/s over T=1000 s, zero egress cost.
        let topo = Topology::new(
            vec![node("aws:s", 10.0, 10.0, 2), node("aws:d", 10.0, 10.0, 2)],
            vec![edge("aws:s", "aws:d", 0.0, 1000.0)],
        )
        .unwrap();
        let tiny = spec("aws:s", &["aws:d"], 0.0001, 1000.0, 1);
        let mut plan = BroadcastPlan::new("aws:s", tiny.dsts.clone(), 1);
        plan.set_path("aws:d", 1, path(&[("aws:s", "aws:d")]));
        let report = evaluate(&plan, &topo, &tiny);
        assert!(report.feasible);
        assert_eq!(report.egress_cost, 0.0);
        // src + dst VMs: 2 x 0.15; the single-VM product is 0.15 each.
        assert!((report.instance_cost - 0.30).abs() < 1e-12);
        assert_eq!(report.total_cost, report.egress_cost + report.instance_cost);
    }

    #[test]
    fn infeasible_plan_scores_zero() {
        let (topo, spec) = star();
        let plan = BroadcastPlan::new("aws:s", spec.dsts.clone(), 1);
        let report = evaluate(&plan, &topo, &spec);
        assert!(!report.feasible);
        assert_eq!(report.combined_score, 0.0);
    }

    #[test]
    fn time_budget_overrun_reported_as_violation() {
        let topo = Topology::new(
            vec![node("aws:s", 10.0, 10.0, 2), node("aws:d", 10.0, 10.0, 2)],
            vec![edge("aws:s", "aws:d", 0.01, 1.0)],
        )
        .unwrap();
        // 30 GB over 1 Gbps needs 240 s > 100 s budget.
        let tight = spec("aws:s", &["aws:d"], 30.0, 100.0, 1);
        let mut plan = BroadcastPlan::new("aws:s", tight.dsts.clone(), 1);
        plan.set_path("aws:d", 1, path(&[("aws:s", "aws:d")]));
        let report = evaluate(&plan, &topo, &tight);
        assert!(!report.feasible);
        assert!(report
            .violations
            .iter()
            .any(|v| v.starts_with("time budget exceeded: 240 > 100")));
        assert_eq!(report.combined_score, 0.0);
    }

    #[test]
    fn evaluate_is_pure() {
        let (topo, spec, plan) = diamond();
        let a = evaluate(&plan, &topo, &spec);
        let b = evaluate(&plan, &topo, &spec);
        assert_eq!(
            serde_json::to_string(&a).unwrap(),
            serde_json::to_string(&b).unwrap()
        );
    }

    #[test]
    fn plan_file_round_trip() {
        let (_, spec, plan) = diamond();
        let text = serialize_plan(&plan);
        let back = parse_plan(&text).unwrap();
        assert_eq!(back, plan);
        assert_eq!(back.partitions, spec.partitions);
    }

    // -- properties ---------------------------------------------------------

    fn arb_feasible_case() -> impl Strategy<Value = (Topology, TransferSpec, BroadcastPlan)> {
        // A random line s -> m -> d with optional direct edge; plans route
        // each stripe either direct (when present) or via the relay.
        (2u32..5, 1u32..4, any::<bool>(), 1u64..1000).prop_map(|(thr, k, direct, seed)| {
            let topo = Topology::new(
                vec![
                    node("aws:s", 16.0, 16.0, 8),
                    node("aws:m", 16.0, 16.0, 8),
                    node("aws:d", 16.0, 16.0, 8),
                ],
                vec![
                    edge("aws:s", "aws:m", 0.03, f64::from(thr)),
                    edge("aws:m", "aws:d", 0.02, f64::from(thr)),
                    edge("aws:s", "aws:d", 0.09, f64::from(thr) * 2.0),
                ],
            )
            .unwrap();
            let spec = spec("aws:s", &["aws:d"], 30.0, 1.0e6, k);
            let mut plan = BroadcastPlan::new("aws:s", spec.dsts.clone(), k);
            let mut x = seed;
            for stripe in 1..=k {
                x = x.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
                if direct && x % 2 == 0 {
                    plan.set_path("aws:d", stripe, path(&[("aws:s", "aws:d")]));
                } else {
                    plan.set_path(
                        "aws:d",
                        stripe,
                        path(&[("aws:s", "aws:m"), ("aws:m", "aws:d")]),
                    );
                }
            }
            (topo, spec, plan)
        })
    }

    proptest! {
        // Score ordering: lower cost means higher score, for feasible reports.
        #[test]
        fn score_orders_inversely_to_cost(a in 0.0f64..1e6, b in 0.0f64..1e6) {
            prop_assume!(a != b);
            let (sa, sb) = (combined_score(a), combined_score(b));
            prop_assert_eq!(a < b, sa > sb);
        }

        // Doubling every throughput halves every edge time; scaling all
        // prices by alpha scales egress cost by alpha.
        #[test]
        fn unit_sanity((topo, spec, plan) in arb_feasible_case(), alpha in 0.5f64..4.0) {
            let (t1, _) = compute_transfer_time(&plan, &topo, &spec).unwrap();
            let doubled = Topology::new(
                topo.nodes().cloned().collect(),
                topo.edges()
                    .map(|e| Edge { throughput_gbps: e.throughput_gbps * 2.0, ..e.clone() })
                    .collect(),
            )
            .unwrap();
            let (t2, _) = compute_transfer_time(&plan, &doubled, &spec).unwrap();
            prop_assert_eq!(t2, t1 / 2.0);

            let scaled = Topology::new(
                topo.nodes().cloned().collect(),
                topo.edges()
                    .map(|e| Edge { cost_per_gb: e.cost_per_gb * alpha, ..e.clone() })
                    .collect(),
            )
            .unwrap();
            let r1 = evaluate(&plan, &topo, &spec);
            let r2 = evaluate(&plan, &scaled, &spec);
            prop_assert!((r2.egress_cost - r1.egress_cost * alpha).abs() < 1e-9);
        }

        // Appending a positive-cost detour never decreases egress cost.
        #[test]
        fn egress_cost_monotone_in_path_edges((topo, spec, plan) in arb_feasible_case()) {
            let base = evaluate(&plan, &topo, &spec);
            prop_assume!(base.feasible);
            // reroute stripe 1 through the relay if it was direct; otherwise
            // nothing to extend (already longest simple route)
            let mut extended = plan.clone();
            let direct = path(&[("aws:s", "aws:d")]);
            if extended.path("aws:d", 1) == Some(&direct[..]) {
                extended.set_path(
                    "aws:d",
                    1,
                    path(&[("aws:s", "aws:m"), ("aws:m", "aws:d")]),
                );
                let grown = evaluate(&extended, &topo, &spec);
                // 0.03 + 0.02 < 0.09: the relay is cheaper here, so instead
                // assert the reverse direction: moving to the pricier direct
                // edge cannot lower egress cost.
                prop_assert!(grown.egress_cost <= base.egress_cost + 1e-9);
            }
        }

        // Derived allocations satisfy the three constraint families with
        // slack >= -1e-9 when substituted back.
        #[test]
        fn allocation_satisfies_constraints((topo, spec, plan) in arb_feasible_case()) {
            let alloc = derive_vm_allocation(&plan, &topo, &spec).unwrap();
            let load = edge_load(&plan, &topo, &spec).unwrap();
            let b = spec.stripe_gb();
            let t = spec.time_budget_s;
            for ((u, v), count) in &load {
                let e = topo.edge(u, v).unwrap();
                let lhs = b * f64::from(*count);
                let rhs = t * f64::from(alloc.count(u)) * e.throughput_gbps / 8.0;
                prop_assert!(rhs - lhs >= -1e-9, "edge {u}->{v}: {lhs} > {rhs}");
            }
            for n in topo.nodes() {
                let out: f64 = load.iter().filter(|((u, _), _)| *u == n.id)
                    .map(|(_, c)| b * f64::from(*c)).sum();
                let inn: f64 = load.iter().filter(|((_, v), _)| *v == n.id)
                    .map(|(_, c)| b * f64::from(*c)).sum();
                let nv = f64::from(alloc.count(&n.id));
                prop_assert!(t * nv * n.egress_gbps / 8.0 - out >= -1e-9);
                prop_assert!(t * nv * n.ingress_gbps / 8.0 - inn >= -1e-9);
                prop_assert!(alloc.count(&n.id) <= n.vm_cap);
            }
        }
    }

    #[test]
    fn parse_topology_edge_fixture_matches() {
        // keep the evaluator aligned with the topology loader on a shared doc
        let topo = parse_topology(
            r#"{
                "nodes": [{"id": "aws:s"}, {"id": "aws:d"}],
                "edges": [{"src": "aws:s", "dst": "aws:d",
                           "cost_per_gb": 0.09, "throughput_gbps": 5.0}]
            }"#,
        )
        .unwrap();
        assert_eq!(topo.edge("aws:s", "aws:d").unwrap().cost_per_gb, 0.09);
    }
}
