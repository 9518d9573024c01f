//! Orientation of the coordination graph into a DAG whose longest path is
//! as short as possible.
//!
//! The sink is a graph center (minimum eccentricity). Every edge then points
//! from the endpoint farther from the sink to the nearer one, so a message
//! needs at most `ecc(sink)` hops to reach the sink from anywhere.

use std::collections::VecDeque;
use std::fmt::Write as _;

use crate::coord_graph::CoordinationGraph;
use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct DagOrder {
    /// The agent with minimum eccentricity; lowest index on ties.
    pub sink: usize,
    /// Hop distance of every agent to the sink.
    pub dist: Vec<usize>,
    /// Eccentricity of the sink.
    pub diameter: usize,
    /// Directed edges `(from, to)`, one per coordination-graph edge.
    pub edges: Vec<(usize, usize)>,
    /// Whether the edges point away from the sink.
    pub reversed: bool,
    preds: Vec<Vec<usize>>,
    succs: Vec<Vec<usize>>,
    depth: usize,
}

fn bfs(cg: &CoordinationGraph, src: usize) -> Vec<usize> {
    let mut dist = vec![usize::MAX; cg.num_agents()];
    dist[src] = 0;
    let mut queue = VecDeque::from([src]);
    while let Some(a) = queue.pop_front() {
        for b in cg.neighbors(a) {
            if dist[b] == usize::MAX {
                dist[b] = dist[a] + 1;
                queue.push_back(b);
            }
        }
    }
    dist
}

/// Largest hop distance from `a` to any other agent.
pub fn eccentricity(cg: &CoordinationGraph, a: usize) -> Result<usize> {
    if a >= cg.num_agents() {
        return Err(Error::InvalidArgument(format!("agent {a} out of range")));
    }
    let dist = bfs(cg, a);
    match dist.iter().max() {
        Some(&usize::MAX) => Err(Error::Topology("coordination graph is disconnected".into())),
        Some(&d) => Ok(d),
        None => Ok(0),
    }
}

pub fn min_diameter_dag(cg: &CoordinationGraph) -> Result<DagOrder> {
    let n = cg.num_agents();
    if n == 0 {
        return Err(Error::Topology("coordination graph has no agents".into()));
    }
    let mut sink = 0;
    let mut best = usize::MAX;
    for a in 0..n {
        let e = eccentricity(cg, a)?;
        if e < best {
            best = e;
            sink = a;
        }
    }
    let dist = bfs(cg, sink);
    let edges = cg
        .edges()
        .iter()
        .map(|&(a, b)| {
            let a_first = dist[a] > dist[b] || (dist[a] == dist[b] && a > b);
            if a_first {
                (a, b)
            } else {
                (b, a)
            }
        })
        .collect();
    Ok(DagOrder::from_edges(sink, dist, best, edges, false))
}

impl DagOrder {
    fn from_edges(sink: usize, dist: Vec<usize>, diameter: usize, edges: Vec<(usize, usize)>, reversed: bool) -> Self {
        let n = dist.len();
        let mut preds = vec![Vec::new(); n];
        let mut succs = vec![Vec::new(); n];
        for &(a, b) in &edges {
            succs[a].push(b);
            preds[b].push(a);
        }
        for list in preds.iter_mut().chain(succs.iter_mut()) {
            list.sort_unstable();
        }
        let mut order = DagOrder {
            sink,
            dist,
            diameter,
            edges,
            reversed,
            preds,
            succs,
            depth: 0,
        };
        order.depth = order.longest_path().expect("distance orientation is acyclic");
        order
    }

    pub fn num_agents(&self) -> usize {
        self.dist.len()
    }

    /// Agents whose messages `agent` receives in this direction.
    pub fn preds(&self, agent: usize) -> &[usize] {
        &self.preds[agent]
    }

    /// Agents `agent` sends to in this direction.
    pub fn succs(&self, agent: usize) -> &[usize] {
        &self.succs[agent]
    }

    /// Length of the longest directed path. Equals `diameter` whenever no
    /// edge joins two agents at the same distance from the sink (e.g. on
    /// grids); odd cycles can make it longer.
    pub fn depth(&self) -> usize {
        self.depth
    }

    pub fn reverse(&self) -> DagOrder {
        let edges = self.edges.iter().map(|&(a, b)| (b, a)).collect();
        DagOrder::from_edges(self.sink, self.dist.clone(), self.diameter, edges, !self.reversed)
    }

    /// Kahn's algorithm; `None` if the edges contain a cycle.
    pub fn topological_order(&self) -> Option<Vec<usize>> {
        let n = self.num_agents();
        let mut indeg: Vec<usize> = (0..n).map(|a| self.preds[a].len()).collect();
        let mut ready: VecDeque<usize> = (0..n).filter(|&a| indeg[a] == 0).collect();
        let mut out = Vec::with_capacity(n);
        while let Some(a) = ready.pop_front() {
            out.push(a);
            for &b in &self.succs[a] {
                indeg[b] -= 1;
                if indeg[b] == 0 {
                    ready.push_back(b);
                }
            }
        }
        (out.len() == n).then_some(out)
    }

    fn longest_path(&self) -> Option<usize> {
        let topo = self.topological_order()?;
        let mut len = vec![0usize; self.num_agents()];
        for &a in &topo {
            for &b in &self.succs[a] {
                len[b] = len[b].max(len[a] + 1);
            }
        }
        Some(len.into_iter().max().unwrap_or(0))
    }

    pub fn to_dot(&self) -> String {
        let mut s = String::from("digraph order {\n");
        let _ = writeln!(s, "  {} [shape=doublecircle];", self.sink);
        for &(a, b) in &self.edges {
            let _ = writeln!(s, "  {a} -> {b};");
        }
        s.push_str("}\n");
        s
    }
}
