//! Priced multi-cloud network model and transfer instances.
//!
//! A [`Topology`] is a directed graph of cloud regions. Each node carries
//! per-VM ingress/egress limits (Gbps), a per-VM price ($/s) and a VM cap;
//! each directed edge carries an egress price ($/GB) and a profiled
//! throughput (Gbps). A [`TransferSpec`] describes one broadcast instance:
//! source, destination set, total size, time budget, and the number of
//! stripes the data is partitioned into.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Default per-VM price when a node does not declare one ($/s).
pub const DEFAULT_VM_PRICE_PER_S: f64 = 0.00015;
/// Default per-node VM cap when a node does not declare one.
pub const DEFAULT_VM_CAP: u32 = 2;

/// Cloud provider, parsed from the `provider:region` node id prefix.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord)]
pub enum Provider {
    Aws,
    Gcp,
    Azure,
    Other(String),
}

impl Provider {
    /// Parse a provider name (case-insensitive for the three known clouds).
    pub fn from_name(name: &str) -> Provider {
        match name.to_ascii_lowercase().as_str() {
            "aws" => Provider::Aws,
            "gcp" => Provider::Gcp,
            "azure" => Provider::Azure,
            _ => Provider::Other(name.to_string()),
        }
    }

    /// Default (ingress, egress) per-VM limits in Gbps. Unknown providers
    /// have no defaults; their nodes must declare limits explicitly.
    pub fn default_limits_gbps(&self) -> Option<(f64, f64)> {
        match self {
            Provider::Aws => Some((10.0, 5.0)),
            Provider::Gcp => Some((16.0, 7.0)),
            Provider::Azure => Some((16.0, 16.0)),
            Provider::Other(_) => None,
        }
    }

    pub fn name(&self) -> &str {
        match self {
            Provider::Aws => "aws",
            Provider::Gcp => "gcp",
            Provider::Azure => "azure",
            Provider::Other(n) => n,
        }
    }
}

impl fmt::Display for Provider {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// A cloud region with per-VM limits and pricing.
#[derive(Debug, Clone, PartialEq)]
pub struct Node {
    /// `provider:region`, e.g. `aws:us-east-1`.
    pub id: String,
    pub provider: Provider,
    /// Per-VM ingress limit, Gbps.
    pub ingress_gbps: f64,
    /// Per-VM egress limit, Gbps.
    pub egress_gbps: f64,
    /// Per-VM instance price, $/s.
    pub vm_price_per_s: f64,
    /// Maximum VM count in this region.
    pub vm_cap: u32,
}

/// A directed priced link between two regions.
#[derive(Debug, Clone, PartialEq)]
pub struct Edge {
    pub src: String,
    pub dst: String,
    /// Egress price, $/GB.
    pub cost_per_gb: f64,
    /// Profiled per-VM throughput, Gbps.
    pub throughput_gbps: f64,
}

/// Directed priced network of cloud regions.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Topology {
    nodes: BTreeMap<String, Node>,
    edges: BTreeMap<(String, String), Edge>,
}

/// One broadcast instance: ship `size_gb` from `src` to every destination in
/// `dsts` within `time_budget_s`, split into `partitions` equal stripes.
#[derive(Debug, Clone, PartialEq)]
pub struct TransferSpec {
    pub src: String,
    pub dsts: BTreeSet<String>,
    pub size_gb: f64,
    pub time_budget_s: f64,
    pub partitions: u32,
}

impl TransferSpec {
    /// Volume of one stripe in GB (`size_gb / partitions`).
    pub fn stripe_gb(&self) -> f64 {
        self.size_gb / f64::from(self.partitions)
    }
}

#[derive(Debug, Error)]
pub enum TopologyError {
    #[error("io error reading {path}: {source}")]
    Io {
        path: String,
        source: std::io::Error,
    },
    #[error("parse error at line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("no nodes")]
    NoNodes,
    #[error("invalid node id {id:?}: expected exactly two non-empty segments split on the first ':'")]
    BadNodeId { id: String },
    #[error("duplicate node id {id:?}")]
    DuplicateNode { id: String },
    #[error("node {id:?} has unknown provider {provider:?} and no explicit {field}")]
    MissingLimit {
        id: String,
        provider: String,
        field: &'static str,
    },
    #[error("node {id:?}: {field} must be positive, got {value}")]
    NonPositiveNodeField {
        id: String,
        field: &'static str,
        value: f64,
    },
    #[error("node {id:?}: vm_price_per_s must be non-negative, got {value}")]
    NegativePrice { id: String, value: f64 },
    #[error("edge {src} -> {dst} references undeclared node {missing:?}")]
    DanglingEdge {
        src: String,
        dst: String,
        missing: String,
    },
    #[error("duplicate edge {src} -> {dst}")]
    DuplicateEdge { src: String, dst: String },
    #[error("edge {src} -> {dst}: throughput must be positive, got {value}")]
    NonPositiveThroughput { src: String, dst: String, value: f64 },
    #[error("edge {src} -> {dst}: cost must be non-negative, got {value}")]
    NegativeCost { src: String, dst: String, value: f64 },
    #[error("self-loop edge {src} -> {dst}")]
    SelfLoop { src: String, dst: String },
}

/// One violated [`TransferSpec`] invariant, naming the offending field.
#[derive(Debug, Error, PartialEq)]
pub enum SpecViolation {
    #[error("src: source in destination set: {0:?}")]
    SourceInDestinations(String),
    #[error("src: unknown node {0:?}")]
    UnknownSource(String),
    #[error("dsts: destination set is empty")]
    EmptyDestinations,
    #[error("dsts: unknown node {0:?}")]
    UnknownDestination(String),
    #[error("size_gb: must be > 0, got {0}")]
    NonPositiveSize(f64),
    #[error("time_budget_s: must be > 0, got {0}")]
    NonPositiveBudget(f64),
    #[error("partitions: partitions must be >= 1, got {0}")]
    ZeroPartitions(u32),
}

fn split_node_id(id: &str) -> Option<(&str, &str)> {
    let (provider, region) = id.split_once(':')?;
    if provider.is_empty() || region.is_empty() {
        return None;
    }
    Some((provider, region))
}

impl Node {
    fn validate(&self) -> Result<(), TopologyError> {
        if split_node_id(&self.id).is_none() {
            return Err(TopologyError::BadNodeId {
                id: self.id.clone(),
            });
        }
        for (field, value) in [
            ("ingress_gbps", self.ingress_gbps),
            ("egress_gbps", self.egress_gbps),
        ] {
            if value <= 0.0 || value.is_nan() {
                return Err(TopologyError::NonPositiveNodeField {
                    id: self.id.clone(),
                    field,
                    value,
                });
            }
        }
        if self.vm_price_per_s < 0.0 {
            return Err(TopologyError::NegativePrice {
                id: self.id.clone(),
                value: self.vm_price_per_s,
            });
        }
        Ok(())
    }
}

impl Topology {
    /// Build a topology, validating every node and edge invariant.
    pub fn new(nodes: Vec<Node>, edges: Vec<Edge>) -> Result<Topology, TopologyError> {
        if nodes.is_empty() {
            return Err(TopologyError::NoNodes);
        }
        let mut node_map = BTreeMap::new();
        for node in nodes {
            node.validate()?;
            if node_map.insert(node.id.clone(), node.clone()).is_some() {
                return Err(TopologyError::DuplicateNode { id: node.id });
            }
        }
        let mut edge_map = BTreeMap::new();
        for edge in edges {
            if edge.src == edge.dst {
                return Err(TopologyError::SelfLoop {
                    src: edge.src,
                    dst: edge.dst,
                });
            }
            for endpoint in [&edge.src, &edge.dst] {
                if !node_map.contains_key(endpoint) {
                    return Err(TopologyError::DanglingEdge {
                        src: edge.src.clone(),
                        dst: edge.dst.clone(),
                        missing: endpoint.clone(),
                    });
                }
            }
            if edge.throughput_gbps <= 0.0 || edge.throughput_gbps.is_nan() {
                return Err(TopologyError::NonPositiveThroughput {
                    src: edge.src,
                    dst: edge.dst,
                    value: edge.throughput_gbps,
                });
            }
            if edge.cost_per_gb < 0.0 {
                return Err(TopologyError::NegativeCost {
                    src: edge.src,
                    dst: edge.dst,
                    value: edge.cost_per_gb,
                });
            }
            let key = (edge.src.clone(), edge.dst.clone());
            if edge_map.insert(key, edge.clone()).is_some() {
                return Err(TopologyError::DuplicateEdge {
                    src: edge.src,
                    dst: edge.dst,
                });
            }
        }
        Ok(Topology {
            nodes: node_map,
            edges: edge_map,
        })
    }

    pub fn node(&self, id: &str) -> Option<&Node> {
        self.nodes.get(id)
    }

    pub fn edge(&self, src: &str, dst: &str) -> Option<&Edge> {
        self.edges.get(&(src.to_string(), dst.to_string()))
    }

    pub fn has_node(&self, id: &str) -> bool {
        self.nodes.contains_key(id)
    }

    /// Nodes in id order.
    pub fn nodes(&self) -> impl Iterator<Item = &Node> {
        self.nodes.values()
    }

    /// Edges in (src, dst) order.
    pub fn edges(&self) -> impl Iterator<Item = &Edge> {
        self.edges.values()
    }

    pub fn out_edges<'a>(&'a self, id: &'a str) -> impl Iterator<Item = &'a Edge> {
        self.edges.values().filter(move |e| e.src == id)
    }

    pub fn in_edges<'a>(&'a self, id: &'a str) -> impl Iterator<Item = &'a Edge> {
        self.edges.values().filter(move |e| e.dst == id)
    }

    pub fn node_count(&self) -> usize {
        self.nodes.len()
    }

    pub fn edge_count(&self) -> usize {
        self.edges.len()
    }
}

// ---------------------------------------------------------------------------
// File format
// ---------------------------------------------------------------------------

#[derive(Debug, Serialize, Deserialize)]
struct TopologyFile {
    nodes: Vec<NodeRecord>,
    edges: Vec<EdgeRecord>,
}

#[derive(Debug, Serialize, Deserialize)]
struct NodeRecord {
    id: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    provider: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    ingress_gbps: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    egress_gbps: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    vm_price_per_s: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    vm_cap: Option<u32>,
}

#[derive(Debug, Serialize, Deserialize)]
struct EdgeRecord {
    src: String,
    dst: String,
    cost_per_gb: f64,
    throughput_gbps: f64,
}

#[derive(Debug, Serialize, Deserialize)]
struct TransferSpecFile {
    src: String,
    dsts: Vec<String>,
    size_gb: f64,
    time_budget_s: f64,
    partitions: u32,
}

fn parse_error(err: &serde_json::Error) -> TopologyError {
    TopologyError::Parse {
        line: err.line(),
        message: err.to_string(),
    }
}

/// Parse a topology document. Nodes missing explicit limits receive the
/// provider defaults; defaults never override explicit values.
pub fn parse_topology(text: &str) -> Result<Topology, TopologyError> {
    let file: TopologyFile = serde_json::from_str(text).map_err(|e| parse_error(&e))?;
    if file.nodes.is_empty() {
        return Err(TopologyError::NoNodes);
    }
    let mut nodes = Vec::with_capacity(file.nodes.len());
    for rec in file.nodes {
        let (prefix, _) = split_node_id(&rec.id).ok_or_else(|| TopologyError::BadNodeId {
            id: rec.id.clone(),
        })?;
        let provider = match &rec.provider {
            Some(name) => Provider::from_name(name),
            None => Provider::from_name(prefix),
        };
        let defaults = provider.default_limits_gbps();
        let ingress_gbps = match (rec.ingress_gbps, defaults) {
            (Some(v), _) => v,
            (None, Some((ingress, _))) => ingress,
            (None, None) => {
                return Err(TopologyError::MissingLimit {
                    id: rec.id,
                    provider: provider.name().to_string(),
                    field: "ingress_gbps",
                })
            }
        };
        let egress_gbps = match (rec.egress_gbps, defaults) {
            (Some(v), _) => v,
            (None, Some((_, egress))) => egress,
            (None, None) => {
                return Err(TopologyError::MissingLimit {
                    id: rec.id,
                    provider: provider.name().to_string(),
                    field: "egress_gbps",
                })
            }
        };
        nodes.push(Node {
            id: rec.id,
            provider,
            ingress_gbps,
            egress_gbps,
            vm_price_per_s: rec.vm_price_per_s.unwrap_or(DEFAULT_VM_PRICE_PER_S),
            vm_cap: rec.vm_cap.unwrap_or(DEFAULT_VM_CAP),
        });
    }
    let edges = file
        .edges
        .into_iter()
        .map(|rec| Edge {
            src: rec.src,
            dst: rec.dst,
            cost_per_gb: rec.cost_per_gb,
            throughput_gbps: rec.throughput_gbps,
        })
        .collect();
    Topology::new(nodes, edges)
}

/// Serialize a topology with every field explicit, so that
/// `parse_topology(serialize_topology(t)) == t`.
pub fn serialize_topology(topo: &Topology) -> String {
    let file = TopologyFile {
        nodes: topo
            .nodes()
            .map(|n| NodeRecord {
                id: n.id.clone(),
                provider: Some(n.provider.name().to_string()),
                ingress_gbps: Some(n.ingress_gbps),
                egress_gbps: Some(n.egress_gbps),
                vm_price_per_s: Some(n.vm_price_per_s),
                vm_cap: Some(n.vm_cap),
            })
            .collect(),
        edges: topo
            .edges()
            .map(|e| EdgeRecord {
                src: e.src.clone(),
                dst: e.dst.clone(),
                cost_per_gb: e.cost_per_gb,
                throughput_gbps: e.throughput_gbps,
            })
            .collect(),
    };
    serde_json::to_string_pretty(&file).expect("topology serialization cannot fail")
}

pub fn load_topology(path: &Path) -> Result<Topology, TopologyError> {
    let text = fs::read_to_string(path).map_err(|source| TopologyError::Io {
        path: path.display().to_string(),
        source,
    })?;
    parse_topology(&text)
}

pub fn save_topology(path: &Path, topo: &Topology) -> Result<(), TopologyError> {
    crate::util::atomic_write(path, serialize_topology(topo).as_bytes()).map_err(|source| {
        TopologyError::Io {
            path: path.display().to_string(),
            source,
        }
    })
}

pub fn parse_transfer_spec(text: &str) -> Result<TransferSpec, TopologyError> {
    let file: TransferSpecFile = serde_json::from_str(text).map_err(|e| parse_error(&e))?;
    Ok(TransferSpec {
        src: file.src,
        dsts: file.dsts.into_iter().collect(),
        size_gb: file.size_gb,
        time_budget_s: file.time_budget_s,
        partitions: file.partitions,
    })
}

pub fn serialize_transfer_spec(spec: &TransferSpec) -> String {
    let file = TransferSpecFile {
        src: spec.src.clone(),
        dsts: spec.dsts.iter().cloned().collect(),
        size_gb: spec.size_gb,
        time_budget_s: spec.time_budget_s,
        partitions: spec.partitions,
    };
    serde_json::to_string_pretty(&file).expect("spec serialization cannot fail")
}

pub fn load_transfer_spec(path: &Path) -> Result<TransferSpec, TopologyError> {
    let text = fs::read_to_string(path).map_err(|source| TopologyError::Io {
        path: path.display().to_string(),
        source,
    })?;
    parse_transfer_spec(&text)
}

pub fn save_transfer_spec(path: &Path, spec: &TransferSpec) -> Result<(), TopologyError> {
    crate::util::atomic_write(path, serialize_transfer_spec(spec).as_bytes()).map_err(|source| {
        TopologyError::Io {
            path: path.display().to_string(),
            source,
        }
    })
}

/// Check every [`TransferSpec`] invariant against a topology. Returns one
/// violation per broken invariant.
pub fn validate_spec(spec: &TransferSpec, topo: &Topology) -> Result<(), Vec<SpecViolation>> {
    let mut violations = Vec::new();
    if spec.dsts.contains(&spec.src) {
        violations.push(SpecViolation::SourceInDestinations(spec.src.clone()));
    }
    if !topo.has_node(&spec.src) {
        violations.push(SpecViolation::UnknownSource(spec.src.clone()));
    }
    if spec.dsts.is_empty() {
        violations.push(SpecViolation::EmptyDestinations);
    }
    for dst in &spec.dsts {
        if !topo.has_node(dst) {
            violations.push(SpecViolation::UnknownDestination(dst.clone()));
        }
    }
    if spec.size_gb <= 0.0 || spec.size_gb.is_nan() {
        violations.push(SpecViolation::NonPositiveSize(spec.size_gb));
    }
    if spec.time_budget_s <= 0.0 || spec.time_budget_s.is_nan() {
        violations.push(SpecViolation::NonPositiveBudget(spec.time_budget_s));
    }
    if spec.partitions == 0 {
        violations.push(SpecViolation::ZeroPartitions(spec.partitions));
    }
    if violations.is_empty() {
        Ok(())
    } else {
        Err(violations)
    }
}
