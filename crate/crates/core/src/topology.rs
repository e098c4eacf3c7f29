//! Network description of the New England 39-bus system and graph utilities
//! built on top of it: the binary bus adjacency matrix, hop distances, and
//! the edge-as-node transform that turns branch attributes into node features.
//!
//! Bus ids are 1-based in case files and reports; everything in this module
//! works with 0-based indices once a case has been parsed.

use std::collections::VecDeque;
use std::fmt;
use std::path::Path;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Bundled NE39BS case text (per-unit on a 100 MVA base).
const NE39BS_CASE: &str = include_str!("../data/ne39bs.case");

/// Number of buses in the New England 39-bus system.
pub const NE39_BUSES: usize = 39;
/// Number of generators in the New England 39-bus system.
pub const NE39_GENERATORS: usize = 10;
/// Fault bus singled out by the detection task (1-based id).
pub const DEFAULT_FAULT_BUS: usize = 15;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum BusKind {
    Slack,
    Pv,
    Pq,
}

impl fmt::Display for BusKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            BusKind::Slack => write!(f, "SLACK"),
            BusKind::Pv => write!(f, "PV"),
            BusKind::Pq => write!(f, "PQ"),
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct BusRecord {
    /// 1-based bus id as printed in files and reports.
    pub id: usize,
    pub kind: BusKind,
    /// Voltage setpoint (pu); meaningful for slack and PV buses.
    pub voltage_setpoint: f64,
    /// Active load (pu on 100 MVA).
    pub load_p: f64,
    /// Reactive load (pu on 100 MVA).
    pub load_q: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct BranchRecord {
    /// 1-based endpoint ids.
    pub from: usize,
    pub to: usize,
    /// Series resistance (pu).
    pub resistance: f64,
    /// Series reactance (pu).
    pub reactance: f64,
    /// Total line charging susceptance (pu); half lumped at each end.
    pub shunt_susceptance: f64,
}

/// One synchronous machine. Reactances and time constants follow the
/// generator parameter table; the stator resistance and sub-transient
/// reactances are carried for completeness even though the classical
/// rotor model does not consume them.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct GeneratorRecord {
    /// 1-based terminal bus id.
    pub bus: usize,
    /// Scheduled active power output (pu); the slack machine's value is a
    /// nominal figure replaced by the power-flow solution.
    pub active_power: f64,
    /// Direct-axis synchronous reactance (pu).
    pub xd: f64,
    /// Quadrature-axis synchronous reactance (pu).
    pub xq: f64,
    /// Direct-axis transient reactance (pu).
    pub xd_transient: f64,
    /// Quadrature-axis transient reactance (pu).
    pub xq_transient: f64,
    /// Direct-axis open-circuit transient time constant (s).
    pub td0: f64,
    /// Quadrature-axis open-circuit transient time constant (s).
    pub tq0: f64,
    /// Inertia time constant H (s, on the 100 MVA system base).
    pub inertia: f64,
    /// Stator resistance (pu); zero in this dataset.
    pub stator_resistance: f64,
    /// Direct-axis sub-transient reactance (pu); parsed but unused.
    pub xd_subtransient: f64,
    /// Quadrature-axis sub-transient reactance (pu); parsed but unused.
    pub xq_subtransient: f64,
}

/// Static description of a grid case: buses, branches, and machines.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct GridCase {
    pub buses: Vec<BusRecord>,
    pub branches: Vec<BranchRecord>,
    pub generators: Vec<GeneratorRecord>,
}

impl GridCase {
    /// The bundled New England 39-bus case.
    pub fn ne39bs() -> GridCase {
        GridCase::from_case_str(NE39BS_CASE).expect("bundled case must parse")
    }

    /// Parse and fully validate a case file (including the 39-bus shape).
    pub fn from_file(path: &Path) -> Result<GridCase> {
        let text = std::fs::read_to_string(path)?;
        GridCase::from_case_str(&text)
    }

    /// Parse and fully validate case text (including the 39-bus shape).
    pub fn from_case_str(text: &str) -> Result<GridCase> {
        let case = parse_case(text)?;
        let mut violations = case.structural_violations();
        violations.extend(case.ne39_violations());
        if violations.is_empty() {
            Ok(case)
        } else {
            Err(Error::Validation(violations))
        }
    }

    /// Structural invariants that any case (toy or full) must satisfy.
    pub fn validate_structure(&self) -> Result<()> {
        let violations = self.structural_violations();
        if violations.is_empty() {
            Ok(())
        } else {
            Err(Error::Validation(violations))
        }
    }

    fn structural_violations(&self) -> Vec<String> {
        let mut v = Vec::new();
        let n = self.buses.len();
        if n == 0 {
            v.push("case has no buses".to_string());
            return v;
        }
        for (i, bus) in self.buses.iter().enumerate() {
            if bus.id != i + 1 {
                v.push(format!(
                    "bus ids must be contiguous 1..{}: position {} has id {}",
                    n,
                    i + 1,
                    bus.id
                ));
            }
        }
        let slacks = self
            .buses
            .iter()
            .filter(|b| b.kind == BusKind::Slack)
            .count();
        if slacks != 1 {
            v.push(format!("expected exactly one slack bus, found {slacks}"));
        }
        for (i, br) in self.branches.iter().enumerate() {
            if br.from == br.to {
                v.push(format!("branch {} is a self-loop at bus {}", i + 1, br.from));
            }
            if br.from == 0 || br.from > n || br.to == 0 || br.to > n {
                v.push(format!(
                    "branch {} references invalid bus ({} - {})",
                    i + 1,
                    br.from,
                    br.to
                ));
            }
            if br.reactance <= 0.0 {
                v.push(format!(
                    "branch {} ({}-{}) has non-positive reactance {}",
                    i + 1,
                    br.from,
                    br.to,
                    br.reactance
                ));
            }
        }
        for (i, g) in self.generators.iter().enumerate() {
            if g.bus == 0 || g.bus > n {
                v.push(format!("generator {} references invalid bus {}", i + 1, g.bus));
            }
            if g.xd_transient <= 0.0 {
                v.push(format!(
                    "generator {} has non-positive transient reactance {}",
                    i + 1,
                    g.xd_transient
                ));
            }
            if g.inertia <= 0.0 {
                v.push(format!(
                    "generator {} has non-positive inertia time constant {}",
                    i + 1,
                    g.inertia
                ));
            }
        }
        v
    }

    fn ne39_violations(&self) -> Vec<String> {
        let mut v = Vec::new();
        if self.buses.len() != NE39_BUSES {
            v.push(format!("expected {} buses, found {}", NE39_BUSES, self.buses.len()));
        }
        if self.generators.len() != NE39_GENERATORS {
            v.push(format!(
                "expected {} generators, found {}",
                NE39_GENERATORS,
                self.generators.len()
            ));
        }
        v
    }

    /// Number of buses.
    pub fn bus_count(&self) -> usize {
        self.buses.len()
    }

    /// 0-based index of the slack bus.
    pub fn slack_index(&self) -> usize {
        self.buses
            .iter()
            .position(|b| b.kind == BusKind::Slack)
            .expect("validated case has a slack bus")
    }

    /// 0-based bus index of each generator, in generator order.
    pub fn generator_bus_indices(&self) -> Vec<usize> {
        self.generators.iter().map(|g| g.bus - 1).collect()
    }

    /// Generator record index attached to a 0-based bus index, if any.
    pub fn generator_at_bus(&self, bus_index: usize) -> Option<usize> {
        self.generators.iter().position(|g| g.bus - 1 == bus_index)
    }
}

fn parse_case(text: &str) -> Result<GridCase> {
    #[derive(PartialEq, Clone, Copy)]
    enum Section {
        None,
        Bus,
        Branch,
        Generator,
    }

    let mut section = Section::None;
    let mut case = GridCase {
        buses: Vec::new(),
        branches: Vec::new(),
        generators: Vec::new(),
    };

    for (lineno, raw) in text.lines().enumerate() {
        let line = match raw.find('#') {
            Some(pos) => &raw[..pos],
            None => raw,
        }
        .trim();
        if line.is_empty() {
            continue;
        }
        match line {
            "BUS" => {
                section = Section::Bus;
                continue;
            }
            "BRANCH" => {
                section = Section::Branch;
                continue;
            }
            "GENERATOR" => {
                section = Section::Generator;
                continue;
            }
            _ => {}
        }
        let fields: Vec<&str> = line.split_whitespace().collect();
        let parse_err = |message: String| Error::Parse {
            line: lineno + 1,
            message,
        };
        let num = |idx: usize, name: &str| -> Result<f64> {
            fields
                .get(idx)
                .ok_or_else(|| parse_err(format!("missing field '{name}'")))?
                .parse::<f64>()
                .map_err(|_| parse_err(format!("field '{name}' is not a number: '{}'", fields[idx])))
        };
        let id = |idx: usize, name: &str| -> Result<usize> {
            fields
                .get(idx)
                .ok_or_else(|| parse_err(format!("missing field '{name}'")))?
                .parse::<usize>()
                .map_err(|_| parse_err(format!("field '{name}' is not an id: '{}'", fields[idx])))
        };
        match section {
            Section::None => {
                return Err(parse_err("data before any section header".to_string()));
            }
            Section::Bus => {
                let kind = match fields.get(1).copied() {
                    Some("SLACK") => BusKind::Slack,
                    Some("PV") => BusKind::Pv,
                    Some("PQ") => BusKind::Pq,
                    other => {
                        return Err(parse_err(format!(
                            "unknown bus type '{}'",
                            other.unwrap_or("<missing>")
                        )))
                    }
                };
                case.buses.push(BusRecord {
                    id: id(0, "id")?,
                    kind,
                    voltage_setpoint: num(2, "vset_pu")?,
                    load_p: num(3, "pload_pu")?,
                    load_q: num(4, "qload_pu")?,
                });
            }
            Section::Branch => {
                case.branches.push(BranchRecord {
                    from: id(0, "from")?,
                    to: id(1, "to")?,
                    resistance: num(2, "r_pu")?,
                    reactance: num(3, "x_pu")?,
                    shunt_susceptance: num(4, "b_pu")?,
                });
            }
            Section::Generator => {
                case.generators.push(GeneratorRecord {
                    bus: id(0, "bus")?,
                    active_power: num(1, "pg_pu")?,
                    xd: num(2, "xd")?,
                    xq: num(3, "xq")?,
                    xd_transient: num(4, "xd_t")?,
                    xq_transient: num(5, "xq_t")?,
                    td0: num(6, "td0_s")?,
                    tq0: num(7, "tq0_s")?,
                    inertia: num(8, "h_s")?,
                    stator_resistance: num(9, "ra")?,
                    xd_subtransient: num(10, "xd_st")?,
                    xq_subtransient: num(11, "xq_st")?,
                });
            }
        }
    }
    Ok(case)
}

/// Dense binary adjacency matrix over graph nodes (0-based, zero diagonal).
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AdjacencyMatrix {
    order: usize,
    entries: Vec<u8>,
}

impl AdjacencyMatrix {
    /// Build from undirected node pairs; parallel and reversed duplicates
    /// collapse to a single entry, self-pairs are rejected.
    pub fn from_edges(order: usize, pairs: &[(usize, usize)]) -> Result<AdjacencyMatrix> {
        let mut adj = AdjacencyMatrix {
            order,
            entries: vec![0; order * order],
        };
        for &(i, j) in pairs {
            if i >= order {
                return Err(Error::InvalidNode(i));
            }
            if j >= order {
                return Err(Error::InvalidNode(j));
            }
            if i == j {
                return Err(Error::InvalidArgument(format!("self-loop at node {i}")));
            }
            adj.entries[i * order + j] = 1;
            adj.entries[j * order + i] = 1;
        }
        Ok(adj)
    }

    pub fn order(&self) -> usize {
        self.order
    }

    pub fn entry(&self, i: usize, j: usize) -> bool {
        self.entries[i * self.order + j] != 0
    }

    pub fn degree(&self, i: usize) -> usize {
        (0..self.order).filter(|&j| self.entry(i, j)).count()
    }

    pub fn neighbors(&self, i: usize) -> impl Iterator<Item = usize> + '_ {
        (0..self.order).filter(move |&j| self.entry(i, j))
    }

    /// Distinct undirected edges as (i, j) with i < j, in ascending order.
    pub fn edges(&self) -> Vec<(usize, usize)> {
        let mut out = Vec::new();
        for i in 0..self.order {
            for j in (i + 1)..self.order {
                if self.entry(i, j) {
                    out.push((i, j));
                }
            }
        }
        out
    }

    pub fn edge_count(&self) -> usize {
        self.entries.iter().filter(|&&e| e != 0).count() / 2
    }

    pub fn nonzero_count(&self) -> usize {
        self.entries.iter().filter(|&&e| e != 0).count()
    }

    /// Copy with one edge removed.
    pub fn without_edge(&self, i: usize, j: usize) -> AdjacencyMatrix {
        let mut out = self.clone();
        out.entries[i * self.order + j] = 0;
        out.entries[j * self.order + i] = 0;
        out
    }

    /// True when every node is reachable from node 0.
    pub fn is_connected(&self) -> bool {
        if self.order == 0 {
            return true;
        }
        let mut seen = vec![false; self.order];
        let mut queue = VecDeque::from([0usize]);
        seen[0] = true;
        let mut count = 1;
        while let Some(u) = queue.pop_front() {
            for v in self.neighbors(u) {
                if !seen[v] {
                    seen[v] = true;
                    count += 1;
                    queue.push_back(v);
                }
            }
        }
        count == self.order
    }

    /// Dense 0/1 matrix used as the propagation operator.
    pub fn to_dense(&self) -> DMatrix<f64> {
        DMatrix::from_fn(self.order, self.order, |i, j| {
            if self.entry(i, j) {
                1.0
            } else {
                0.0
            }
        })
    }
}

/// Binary bus adjacency of a case: symmetric, zero diagonal, one entry per
/// connected bus pair regardless of parallel branches.
pub fn build_adjacency(case: &GridCase) -> AdjacencyMatrix {
    let pairs: Vec<(usize, usize)> = case
        .branches
        .iter()
        .map(|b| (b.from - 1, b.to - 1))
        .collect();
    AdjacencyMatrix::from_edges(case.bus_count(), &pairs)
        .expect("validated case has in-range, loop-free branches")
}

/// Breadth-first shortest path length in edges; `None` when unreachable.
pub fn hop_distance(adj: &AdjacencyMatrix, from: usize, to: usize) -> Result<Option<usize>> {
    if from >= adj.order() {
        return Err(Error::InvalidNode(from));
    }
    if to >= adj.order() {
        return Err(Error::InvalidNode(to));
    }
    if from == to {
        return Ok(Some(0));
    }
    let mut dist = vec![usize::MAX; adj.order()];
    dist[from] = 0;
    let mut queue = VecDeque::from([from]);
    while let Some(u) = queue.pop_front() {
        for v in adj.neighbors(u) {
            if dist[v] == usize::MAX {
                dist[v] = dist[u] + 1;
                if v == to {
                    return Ok(Some(dist[v]));
                }
                queue.push_back(v);
            }
        }
    }
    Ok(None)
}

/// Attributes carried by one artificial node of the edge-as-node transform.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EdgeNodeFeature {
    /// 0-based endpoints of the original edge.
    pub endpoints: (usize, usize),
    pub resistance: f64,
    pub reactance: f64,
    pub shunt_susceptance: f64,
}

/// Result of replacing every edge by an artificial node: original nodes keep
/// their indices, artificial node k sits at index `original_nodes + k`.
#[derive(Debug, Clone)]
pub struct EdgeNodeGraph {
    pub adjacency: AdjacencyMatrix,
    pub original_nodes: usize,
    pub edge_features: Vec<EdgeNodeFeature>,
}

/// Turn each distinct edge into a degree-2 node carrying the branch
/// attributes, so edge features can feed a node-feature model unchanged.
/// Parallel branches collapse first; the surviving branch record (first in
/// file order) supplies the attributes.
pub fn edge_to_node_transform(case: &GridCase) -> EdgeNodeGraph {
    let n = case.bus_count();
    let base = build_adjacency(case);
    let edges = base.edges();

    let mut features = Vec::with_capacity(edges.len());
    for &(i, j) in &edges {
        let branch = case
            .branches
            .iter()
            .find(|b| {
                let (a, c) = (b.from - 1, b.to - 1);
                (a, c) == (i, j) || (c, a) == (i, j)
            })
            .expect("edge came from the branch list");
        features.push(EdgeNodeFeature {
            endpoints: (i, j),
            resistance: branch.resistance,
            reactance: branch.reactance,
            shunt_susceptance: branch.shunt_susceptance,
        });
    }

    let mut pairs = Vec::with_capacity(2 * edges.len());
    for (k, &(i, j)) in edges.iter().enumerate() {
        let mid = n + k;
        pairs.push((i, mid));
        pairs.push((mid, j));
    }
    let adjacency = AdjacencyMatrix::from_edges(n + edges.len(), &pairs)
        .expect("constructed pairs are in range");

    EdgeNodeGraph {
        adjacency,
        original_nodes: n,
        edge_features: features,
    }
}
