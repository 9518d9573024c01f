//! Coordination-graph view of one decision period: one agent per
//! intersection with a four-phase domain, a 4x4 cost table per neighbouring
//! pair and a length-4 cost vector per agent.
//!
//! Edge tables hold the predicted next-period balance of the internal links
//! between the pair; agent vectors hold the predicted balance of the agent's
//! entry links. Every inflow into an internal link `l_ij` is released by
//! movements at `i`, and every outflow by movements at `j`, so the predicted
//! queues on `l_ij` depend on `(x_i, x_j)` alone and the tables sum exactly
//! to the network balance.

use std::io::Write;

use crate::error::{invalid, Error, Result};
use crate::network::{LinkKind, Phase, RoadNetwork};
use crate::sim::{served, QueueState, TurningModel};

const D: usize = Phase::COUNT;

/// Per-agent phase choice, indexed by agent (intersection) index.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct JointAssignment {
    phases: Vec<Phase>,
}

impl JointAssignment {
    pub fn new(phases: Vec<Phase>) -> Self {
        JointAssignment { phases }
    }

    pub fn uniform(n: usize, phase: Phase) -> Self {
        JointAssignment { phases: vec![phase; n] }
    }

    pub fn len(&self) -> usize {
        self.phases.len()
    }

    pub fn is_empty(&self) -> bool {
        self.phases.is_empty()
    }

    #[inline]
    pub fn get(&self, agent: usize) -> Phase {
        self.phases[agent]
    }

    pub fn set(&mut self, agent: usize, phase: Phase) {
        self.phases[agent] = phase;
    }

    pub fn as_slice(&self) -> &[Phase] {
        &self.phases
    }

    pub fn iter(&self) -> impl Iterator<Item = Phase> + '_ {
        self.phases.iter().copied()
    }

    /// Errors unless the assignment covers exactly `n` agents.
    pub fn check_covers(&self, n: usize) -> Result<()> {
        if self.phases.len() != n {
            return Err(invalid(format!(
                "joint assignment covers {} agents, expected {n}",
                self.phases.len()
            )));
        }
        Ok(())
    }
}

impl FromIterator<Phase> for JointAssignment {
    fn from_iter<T: IntoIterator<Item = Phase>>(iter: T) -> Self {
        JointAssignment::new(iter.into_iter().collect())
    }
}

pub type EdgeTable = [[f64; D]; D];

/// One adjacency entry: the neighbour, the edge index, and whether this
/// agent is the edge's first endpoint (table row index).
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Incidence {
    pub neighbor: usize,
    pub edge: usize,
    pub is_first: bool,
}

#[derive(Clone, Debug, PartialEq)]
pub struct CoordinationGraph {
    individual: Vec<[f64; D]>,
    edges: Vec<(usize, usize)>,
    tables: Vec<EdgeTable>,
    adjacency: Vec<Vec<Incidence>>,
}

impl CoordinationGraph {
    /// A graph with all costs zero. Edges are unordered pairs; each is
    /// stored once with its smaller endpoint first.
    pub fn new(n_agents: usize, edges: &[(usize, usize)]) -> Result<Self> {
        let mut norm: Vec<(usize, usize)> = Vec::with_capacity(edges.len());
        for &(a, b) in edges {
            if a == b || a >= n_agents || b >= n_agents {
                return Err(invalid(format!("bad edge ({a}, {b}) for {n_agents} agents")));
            }
            norm.push((a.min(b), a.max(b)));
        }
        norm.sort_unstable();
        norm.dedup();

        let mut adjacency = vec![Vec::new(); n_agents];
        for (e, &(a, b)) in norm.iter().enumerate() {
            adjacency[a].push(Incidence {
                neighbor: b,
                edge: e,
                is_first: true,
            });
            adjacency[b].push(Incidence {
                neighbor: a,
                edge: e,
                is_first: false,
            });
        }
        for adj in &mut adjacency {
            adj.sort_by_key(|inc| inc.neighbor);
        }
        Ok(CoordinationGraph {
            individual: vec![[0.0; D]; n_agents],
            tables: vec![[[0.0; D]; D]; norm.len()],
            edges: norm,
            adjacency,
        })
    }

    pub fn num_agents(&self) -> usize {
        self.individual.len()
    }

    pub fn num_edges(&self) -> usize {
        self.edges.len()
    }

    pub fn edges(&self) -> &[(usize, usize)] {
        &self.edges
    }

    pub fn incidences(&self, agent: usize) -> &[Incidence] {
        &self.adjacency[agent]
    }

    pub fn neighbors(&self, agent: usize) -> impl Iterator<Item = usize> + '_ {
        self.adjacency[agent].iter().map(|inc| inc.neighbor)
    }

    pub fn edge_index(&self, a: usize, b: usize) -> Option<usize> {
        self.adjacency
            .get(a)?
            .iter()
            .find(|inc| inc.neighbor == b)
            .map(|inc| inc.edge)
    }

    pub fn individual_cost(&self, agent: usize) -> &[f64; D] {
        &self.individual[agent]
    }

    pub fn set_individual_cost(&mut self, agent: usize, costs: [f64; D]) {
        self.individual[agent] = costs;
    }

    /// Table of edge `e`, indexed `[x_first][x_second]`.
    pub fn edge_table(&self, e: usize) -> &EdgeTable {
        &self.tables[e]
    }

    /// Sets the table for the pair `(a, b)`, indexed `[x_a][x_b]`.
    pub fn set_edge_cost(&mut self, a: usize, b: usize, table: EdgeTable) -> Result<()> {
        let e = self
            .edge_index(a, b)
            .ok_or_else(|| invalid(format!("no edge between agents {a} and {b}")))?;
        self.tables[e] = if a < b { table } else { transpose(&table) };
        Ok(())
    }

    /// `c_ab(x_a, x_b)` regardless of storage orientation.
    #[inline]
    pub fn pair_cost(&self, inc_from: &Incidence, x_self: usize, x_neighbor: usize) -> f64 {
        let t = &self.tables[inc_from.edge];
        if inc_from.is_first {
            t[x_self][x_neighbor]
        } else {
            t[x_neighbor][x_self]
        }
    }

    pub fn edge_cost(&self, a: usize, b: usize, xa: Phase, xb: Phase) -> Option<f64> {
        let inc = self.adjacency.get(a)?.iter().find(|inc| inc.neighbor == b)?;
        Some(self.pair_cost(inc, xa.index(), xb.index()))
    }

    /// Whether every agent is reachable from agent 0.
    pub fn is_connected(&self) -> bool {
        let n = self.num_agents();
        if n == 0 {
            return true;
        }
        let mut seen = vec![false; n];
        let mut stack = vec![0];
        seen[0] = true;
        let mut count = 1;
        while let Some(u) = stack.pop() {
            for v in self.neighbors(u) {
                if !seen[v] {
                    seen[v] = true;
                    count += 1;
                    stack.push(v);
                }
            }
        }
        count == n
    }

    /// Debug dump of every edge table: `edge,agent_i,agent_j,x_i,x_j,cost`.
    pub fn write_edge_costs_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        w.write_record(["edge", "agent_i", "agent_j", "x_i", "x_j", "cost"])?;
        for (e, &(a, b)) in self.edges.iter().enumerate() {
            for xa in Phase::ALL {
                for xb in Phase::ALL {
                    w.write_record([
                        e.to_string(),
                        a.to_string(),
                        b.to_string(),
                        xa.name().to_string(),
                        xb.name().to_string(),
                        self.tables[e][xa.index()][xb.index()].to_string(),
                    ])?;
                }
            }
        }
        w.flush()?;
        Ok(())
    }
}

fn transpose(t: &EdgeTable) -> EdgeTable {
    let mut out = [[0.0; D]; D];
    for (a, row) in t.iter().enumerate() {
        for (b, &v) in row.iter().enumerate() {
            out[b][a] = v;
        }
    }
    out
}

/// Sum of squared predicted queues on the movements draining `link`, given
/// the phase of the intersection that releases vehicles into it (`up`, if
/// the link is internal) and of the one that serves it (`down`).
fn link_balance(
    net: &RoadNetwork,
    state: &QueueState,
    turning: &TurningModel,
    link: usize,
    up: Option<Phase>,
    down: Phase,
) -> f64 {
    let inflow = match (net.link(link).kind, up) {
        (LinkKind::Entry, _) => turning.demand(link),
        (_, Some(up)) => net
            .in_movements(link)
            .iter()
            .map(|&m| served(net, m, up, state.q(m)))
            .sum(),
        (_, None) => 0.0,
    };
    net.out_movements(link)
        .iter()
        .map(|&m| {
            let q = state.q(m) - served(net, m, down, state.q(m)) + inflow * turning.ratio(m);
            q * q
        })
        .sum()
}

/// Builds the coordination graph for the period described by `state`.
pub fn build_cg(state: &QueueState, net: &RoadNetwork, turning: &TurningModel) -> Result<CoordinationGraph> {
    state.check_shape(net)?;
    turning.check_shape(net)?;
    let n = net.num_intersections();
    let pairs: Vec<(usize, usize)> = (0..n)
        .flat_map(|i| net.neighbors(i).iter().filter(move |&&j| i < j).map(move |&j| (i, j)))
        .collect();
    let mut cg = CoordinationGraph::new(n, &pairs)?;

    for (e, &(i, j)) in pairs.iter().enumerate() {
        debug_assert_eq!(cg.edges[e], (i, j));
        let forward: Vec<usize> = net.links_between(i, j).collect();
        let backward: Vec<usize> = net.links_between(j, i).collect();
        let mut table = [[0.0; D]; D];
        for xi in Phase::ALL {
            for xj in Phase::ALL {
                let mut c = 0.0;
                for &l in &forward {
                    c += link_balance(net, state, turning, l, Some(xi), xj);
                }
                for &l in &backward {
                    c += link_balance(net, state, turning, l, Some(xj), xi);
                }
                table[xi.index()][xj.index()] = c;
            }
        }
        cg.tables[e] = table;
    }

    for i in 0..n {
        if !net.is_boundary(i) {
            continue;
        }
        let mut costs = [0.0; D];
        for x in Phase::ALL {
            costs[x.index()] = net
                .inputs(i)
                .iter()
                .filter(|&&l| net.link(l).kind == LinkKind::Entry)
                .map(|&l| link_balance(net, state, turning, l, None, x))
                .sum();
        }
        cg.individual[i] = costs;
    }
    Ok(cg)
}

/// `C(x) = sum_i c_i(x_i) + sum_ij c_ij(x_i, x_j)`.
pub fn global_cost(cg: &CoordinationGraph, x: &JointAssignment) -> Result<f64> {
    x.check_covers(cg.num_agents())?;
    let mut total: f64 = (0..cg.num_agents()).map(|i| cg.individual[i][x.get(i).index()]).sum();
    for (e, &(a, b)) in cg.edges.iter().enumerate() {
        total += cg.tables[e][x.get(a).index()][x.get(b).index()];
    }
    Ok(total)
}

/// Agents beyond which exhaustive enumeration is refused (4^10 assignments).
pub const BRUTE_FORCE_MAX_AGENTS: usize = 10;

/// Exact minimiser of [`global_cost`] by enumeration. Ties go to the
/// lexicographically smallest assignment (agent 0 most significant).
pub fn brute_force_optimum(cg: &CoordinationGraph) -> Result<(JointAssignment, f64)> {
    let n = cg.num_agents();
    if n > BRUTE_FORCE_MAX_AGENTS {
        return Err(Error::Capacity(format!(
            "brute force is limited to {BRUTE_FORCE_MAX_AGENTS} agents, graph has {n}"
        )));
    }
    let mut digits = vec![0usize; n];
    let mut best = (digits.clone(), f64::INFINITY);
    loop {
        let mut cost: f64 = (0..n).map(|i| cg.individual[i][digits[i]]).sum();
        for (e, &(a, b)) in cg.edges.iter().enumerate() {
            cost += cg.tables[e][digits[a]][digits[b]];
        }
        if cost < best.1 {
            best = (digits.clone(), cost);
        }
        // odometer increment, last agent fastest
        let mut k = n;
        loop {
            if k == 0 {
                let x = best.0.iter().map(|&d| Phase::ALL[d]).collect();
                return Ok((x, best.1));
            }
            k -= 1;
            digits[k] += 1;
            if digits[k] < D {
                break;
            }
            digits[k] = 0;
        }
    }
}
