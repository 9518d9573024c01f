#![allow(dead_code)]

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use tsc_core::coord_graph::CoordinationGraph;
use tsc_core::network::LinkId;
use tsc_core::{build_grid, Phase, QueueState, RoadNetwork, TurningModel};

pub const FIXTURE: &str = concat!(env!("CARGO_MANIFEST_DIR"), "/tests/fixtures/two_node.json");

pub fn two_node() -> RoadNetwork {
    tsc_core::load_network(FIXTURE).unwrap()
}

/// Queues (l1,l2) = 4 and (l1,l3) = 2 at intersection 0 of the fixture.
pub fn example_state(net: &RoadNetwork) -> QueueState {
    let mut s = QueueState::zeros(net);
    s.set_q(net.movement_by_ids(LinkId(1), LinkId(2)).unwrap(), 4.0);
    s.set_q(net.movement_by_ids(LinkId(1), LinkId(3)).unwrap(), 2.0);
    s
}

pub fn grid(rows: usize, cols: usize) -> RoadNetwork {
    build_grid(rows, cols, 300.0, 300.0, 5.0).unwrap()
}

/// Integer queues in 0..=12, random normalized splits and entry demand.
pub fn random_state(net: &RoadNetwork, rng: &mut ChaCha8Rng) -> (QueueState, TurningModel) {
    let mut s = QueueState::zeros(net);
    for m in 0..net.num_movements() {
        s.set_q(m, rng.random_range(0..=12) as f64);
    }
    let mut t = TurningModel::uniform(net);
    for l in 0..net.num_links() {
        let outs = net.out_movements(l);
        if outs.is_empty() {
            continue;
        }
        let w: Vec<f64> = outs.iter().map(|_| rng.random_range(0.05..1.0)).collect();
        let sum: f64 = w.iter().sum();
        let r: Vec<f64> = w.iter().map(|x| x / sum).collect();
        t.set_split(net, l, &r).unwrap();
    }
    for l in net.entry_links() {
        t.set_demand(l, rng.random_range(0.0..5.0));
    }
    (s, t)
}

pub fn random_phases(n: usize, rng: &mut ChaCha8Rng) -> tsc_core::JointAssignment {
    (0..n).map(|_| Phase::ALL[rng.random_range(0..Phase::COUNT)]).collect()
}

pub fn fill_random_costs(cg: &mut CoordinationGraph, rng: &mut ChaCha8Rng) {
    for i in 0..cg.num_agents() {
        let c: [f64; 4] = std::array::from_fn(|_| rng.random_range(0.0..20.0));
        cg.set_individual_cost(i, c);
    }
    for (a, b) in cg.edges().to_vec() {
        let t = std::array::from_fn(|_| std::array::from_fn(|_| rng.random_range(0.0..20.0)));
        cg.set_edge_cost(a, b, t).unwrap();
    }
}

/// Random labelled tree: node k attaches to a uniformly chosen earlier node.
pub fn random_tree(n: usize, rng: &mut ChaCha8Rng) -> CoordinationGraph {
    let edges: Vec<(usize, usize)> = (1..n).map(|k| (rng.random_range(0..k), k)).collect();
    let mut cg = CoordinationGraph::new(n, &edges).unwrap();
    fill_random_costs(&mut cg, rng);
    cg
}

pub fn grid_cg(rows: usize, cols: usize) -> CoordinationGraph {
    let mut edges = Vec::new();
    for r in 0..rows {
        for c in 0..cols {
            let a = r * cols + c;
            if c + 1 < cols {
                edges.push((a, a + 1));
            }
            if r + 1 < rows {
                edges.push((a, a + cols));
            }
        }
    }
    CoordinationGraph::new(rows * cols, &edges).unwrap()
}

/// Random connected graph: a random tree plus `extra` random chords.
pub fn random_connected(n: usize, extra: usize, rng: &mut ChaCha8Rng) -> CoordinationGraph {
    let mut edges: Vec<(usize, usize)> = (1..n).map(|k| (rng.random_range(0..k), k)).collect();
    for _ in 0..extra {
        let a = rng.random_range(0..n);
        let b = rng.random_range(0..n);
        if a != b {
            edges.push((a, b));
        }
    }
    CoordinationGraph::new(n, &edges).unwrap()
}

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Hop distances by Floyd–Warshall, independent of the BFS in the library.
pub fn all_pairs(cg: &CoordinationGraph) -> Vec<Vec<usize>> {
    let n = cg.num_agents();
    let inf = usize::MAX / 4;
    let mut d = vec![vec![inf; n]; n];
    for (i, row) in d.iter_mut().enumerate() {
        row[i] = 0;
    }
    for &(a, b) in cg.edges() {
        d[a][b] = 1;
        d[b][a] = 1;
    }
    for k in 0..n {
        for i in 0..n {
            for j in 0..n {
                if d[i][k] + d[k][j] < d[i][j] {
                    d[i][j] = d[i][k] + d[k][j];
                }
            }
        }
    }
    d
}
