//! Brute-force exact optimum for tiny instances.
//!
//! Enumerates, per stripe, every assignment of one simple path per
//! destination, scores each complete plan with [`crate::evaluator::evaluate`],
//! and returns a minimum-cost feasible plan. Shared-edge savings arise
//! naturally from the evaluator's per-stripe edge-set counting. Intended as
//! ground truth for the model and for candidate heuristics; the search space
//! is exponential, hence the hard node/partition limits.

use thiserror::Error;

use crate::evaluator::{evaluate, serialize_plan, BroadcastPlan};
use crate::topology::{validate_spec, Topology, TransferSpec};

/// Instance size limits the oracle will accept.
#[derive(Debug, Clone, Copy)]
pub struct OracleLimits {
    pub max_nodes: usize,
    pub max_partitions: u32,
    /// Hard cap on enumerated complete plans, guarding against dense
    /// instances that technically fit the node limit.
    pub max_plans: u64,
}

impl Default for OracleLimits {
    fn default() -> Self {
        OracleLimits {
            max_nodes: 6,
            max_partitions: 2,
            max_plans: 2_000_000,
        }
    }
}

#[derive(Debug, Error)]
pub enum OracleError {
    #[error("instance exceeds oracle limits: {what} = {actual} > {limit}")]
    LimitsExceeded {
        what: &'static str,
        actual: u64,
        limit: u64,
    },
    #[error("invalid transfer spec: {0:?}")]
    InvalidSpec(Vec<String>),
    #[error("no simple path from {src} to destination {dst}")]
    Unreachable { src: String, dst: String },
    #[error("no feasible plan exists within the time budget")]
    NoFeasiblePlan,
}

/// Exhaustive minimum-total-cost feasible plan, with a deterministic
/// lexicographic tie-break on the serialized plan encoding.
pub fn exact_oracle(
    topo: &Topology,
    spec: &TransferSpec,
    limits: &OracleLimits,
) -> Result<(BroadcastPlan, f64), OracleError> {
    if topo.node_count() > limits.max_nodes {
        return Err(OracleError::LimitsExceeded {
            what: "nodes",
            actual: topo.node_count() as u64,
            limit: limits.max_nodes as u64,
        });
    }
    if spec.partitions > limits.max_partitions {
        return Err(OracleError::LimitsExceeded {
            what: "partitions",
            actual: u64::from(spec.partitions),
            limit: u64::from(limits.max_partitions),
        });
    }
    validate_spec(spec, topo)
        .map_err(|vs| OracleError::InvalidSpec(vs.iter().map(|v| v.to_string()).collect()))?;

    // All simple paths per destination, in deterministic DFS order.
    let dsts: Vec<&String> = spec.dsts.iter().collect();
    let mut paths_per_dst: Vec<Vec<Vec<(String, String)>>> = Vec::with_capacity(dsts.len());
    for dst in &dsts {
        let paths = simple_paths(topo, &spec.src, dst);
        if paths.is_empty() {
            return Err(OracleError::Unreachable {
                src: spec.src.clone(),
                dst: (*dst).clone(),
            });
        }
        paths_per_dst.push(paths);
    }

    // One stripe choice = one path index per destination.
    let per_stripe: u64 = paths_per_dst
        .iter()
        .map(|p| p.len() as u64)
        .try_fold(1u64, u64::checked_mul)
        .unwrap_or(u64::MAX);
    let total_plans = per_stripe
        .checked_pow(spec.partitions)
        .unwrap_or(u64::MAX);
    if total_plans > limits.max_plans {
        return Err(OracleError::LimitsExceeded {
            what: "candidate plans",
            actual: total_plans,
            limit: limits.max_plans,
        });
    }

    let stripe_count = spec.partitions as usize;
    let dst_count = dsts.len();
    // odometer over (stripe, destination) path indices
    let mut indices = vec![0usize; stripe_count * dst_count];
    let radix: Vec<usize> = (0..indices.len())
        .map(|slot| paths_per_dst[slot % dst_count].len())
        .collect();

    let mut best: Option<(f64, String, BroadcastPlan)> = None;
    let mut audit_min: Option<f64> = None;
    loop {
        let mut plan = BroadcastPlan::new(spec.src.clone(), spec.dsts.clone(), spec.partitions);
        for stripe in 0..stripe_count {
            for (d, dst) in dsts.iter().enumerate() {
                let path = &paths_per_dst[d][indices[stripe * dst_count + d]];
                plan.set_path((*dst).clone(), stripe as u32 + 1, path.clone());
            }
        }
        let report = evaluate(&plan, topo, spec);
        if report.feasible {
            audit_min = Some(match audit_min {
                Some(m) => m.min(report.total_cost),
                None => report.total_cost,
            });
            let replace = match &best {
                None => true,
                Some((cost, encoding, _)) => {
                    report.total_cost < *cost
                        || (report.total_cost == *cost && serialize_plan(&plan) < *encoding)
                }
            };
            if replace {
                let encoding = serialize_plan(&plan);
                best = Some((report.total_cost, encoding, plan));
            }
        }

        // advance odometer
        let mut slot = 0;
        loop {
            if slot == indices.len() {
                let result = match best {
                    Some((cost, _, plan)) => {
                        // self-consistency: nothing enumerated beat the winner
                        assert_eq!(
                            Some(cost),
                            audit_min,
                            "oracle returned a non-minimal feasible plan"
                        );
                        Ok((plan, cost))
                    }
                    None => Err(OracleError::NoFeasiblePlan),
                };
                return result;
            }
            indices[slot] += 1;
            if indices[slot] < radix[slot] {
                break;
            }
            indices[slot] = 0;
            slot += 1;
        }
    }
}

/// Every simple path from `src` to `dst`, as edge lists, in deterministic
/// order (edges explored in sorted order).
fn simple_paths(topo: &Topology, src: &str, dst: &str) -> Vec<Vec<(String, String)>> {
    let mut result = Vec::new();
    let mut path: Vec<(String, String)> = Vec::new();
    let mut visited: Vec<String> = vec![src.to_string()];
    walk(topo, src, dst, &mut visited, &mut path, &mut result);
    result
}

fn walk(
    topo: &Topology,
    at: &str,
    dst: &str,
    visited: &mut Vec<String>,
    path: &mut Vec<(String, String)>,
    result: &mut Vec<Vec<(String, String)>>,
) {
    if at == dst {
        result.push(path.clone());
        return;
    }
    let next: Vec<String> = topo.out_edges(at).map(|e| e.dst.clone()).collect();
    for v in next {
        if visited.contains(&v) {
            continue;
        }
        visited.push(v.clone());
        path.push((at.to_string(), v.clone()));
        walk(topo, &v, dst, visited, path, result);
        path.pop();
        visited.pop();
    }
}
