//! Network-level coordination by min-sum message passing over a DAG.
//!
//! A forward pass sends messages toward the sink for `depth` synchronous
//! rounds:
//!
//! ```text
//! R_ij(x_j) = min_{x_i} c_i(x_i) + c_ij(x_i, x_j) + sum_{k -> i} R_ki(x_i)
//! ```
//!
//! after which the sink's choice `argmin c_s + sum R_ks` is optimal on
//! trees. The reverse pass walks the orientation back out from the sink:
//! each agent fixes its phase given the phases its (nearer) neighbours
//! chose, sending them `c_ij(x_i, x_j*)` as its incoming message. On trees
//! this is exact backtracking, so one forward and one reverse pass reach the
//! optimum. The pair of passes is a deterministic function of the graph, so
//! repeating it cannot change the answer and the solver stops after one
//! cycle when the budget allows.

use std::fmt;
use std::io::Write;
use std::time::{Duration, Instant};

use crate::coord_graph::{global_cost, CoordinationGraph, JointAssignment};
use crate::dag::DagOrder;
use crate::error::{invalid, Result};
use crate::network::Phase;

const D: usize = Phase::COUNT;

pub type Message = [f64; D];

/// Messages of one direction, indexed by receiver.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct MessageTable {
    incoming: Vec<Vec<(usize, Message)>>,
    pub round: usize,
}

impl MessageTable {
    pub fn empty(n_agents: usize) -> Self {
        MessageTable {
            incoming: vec![Vec::new(); n_agents],
            round: 0,
        }
    }

    pub fn get(&self, from: usize, to: usize) -> Option<&Message> {
        self.incoming.get(to)?.iter().find(|(f, _)| *f == from).map(|(_, m)| m)
    }

    pub fn incoming(&self, to: usize) -> &[(usize, Message)] {
        &self.incoming[to]
    }

    pub fn insert(&mut self, from: usize, to: usize, msg: Message) {
        let list = &mut self.incoming[to];
        match list.iter_mut().find(|(f, _)| *f == from) {
            Some(slot) => slot.1 = msg,
            None => {
                list.push((from, msg));
                list.sort_unstable_by_key(|(f, _)| *f);
            }
        }
    }

    pub fn len(&self) -> usize {
        self.incoming.iter().map(Vec::len).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Largest absolute entry-wise difference to `other` over messages
    /// present in both tables; messages present in only one count as
    /// infinite.
    pub fn max_delta(&self, other: &MessageTable) -> f64 {
        let mut worst = 0.0f64;
        for (to, list) in self.incoming.iter().enumerate() {
            for (from, m) in list {
                match other.get(*from, to) {
                    Some(o) => {
                        for k in 0..D {
                            worst = worst.max((m[k] - o[k]).abs());
                        }
                    }
                    None => return f64::INFINITY,
                }
            }
        }
        if self.len() != other.len() {
            return f64::INFINITY;
        }
        worst
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum CoorBudget {
    Rounds(usize),
    WallClock(Duration),
}

impl CoorBudget {
    pub fn millis(ms: f64) -> Self {
        CoorBudget::WallClock(Duration::from_secs_f64(ms.max(0.0) / 1000.0))
    }
}

pub(crate) struct Meter {
    budget: CoorBudget,
    start: Instant,
    pub(crate) rounds: usize,
}

impl Meter {
    pub(crate) fn new(budget: CoorBudget) -> Self {
        Meter {
            budget,
            start: Instant::now(),
            rounds: 0,
        }
    }

    /// Checked before each round.
    pub(crate) fn allows_round(&self) -> bool {
        match self.budget {
            CoorBudget::Rounds(n) => self.rounds < n,
            CoorBudget::WallClock(d) => self.start.elapsed() < d,
        }
    }
}

/// Sum over incoming messages of `agent`, optionally skipping one sender.
fn incoming_sum(tables: &[&MessageTable], agent: usize, skip: Option<usize>) -> Message {
    let mut acc = [0.0; D];
    for t in tables {
        for (from, m) in t.incoming(agent) {
            if Some(*from) == skip {
                continue;
            }
            for k in 0..D {
                acc[k] += m[k];
            }
        }
    }
    acc
}

fn argmin(v: &Message) -> usize {
    let mut best = 0;
    for k in 1..D {
        if v[k] < v[best] {
            best = k;
        }
    }
    best
}

pub fn compute_message(i: usize, j: usize, cg: &CoordinationGraph, incoming: &MessageTable) -> Result<Message> {
    let inc = cg
        .incidences(i)
        .iter()
        .find(|inc| inc.neighbor == j)
        .ok_or_else(|| invalid(format!("agents {i} and {j} are not neighbours")))?;
    let ci = cg.individual_cost(i);
    let sum = incoming_sum(&[incoming], i, Some(j));
    let mut out = [f64::INFINITY; D];
    for (xj, slot) in out.iter_mut().enumerate() {
        for xi in 0..D {
            let v = ci[xi] + cg.pair_cost(inc, xi, xj) + sum[xi];
            if v < *slot {
                *slot = v;
            }
        }
    }
    Ok(out)
}

fn forward_round(cg: &CoordinationGraph, order: &DagOrder, prev: &MessageTable) -> MessageTable {
    let mut next = MessageTable::empty(cg.num_agents());
    next.round = prev.round + 1;
    for &(i, j) in &order.edges {
        let msg = compute_message(i, j, cg, prev).expect("order edges come from the graph");
        next.insert(i, j, msg);
    }
    next
}

/// `rounds` synchronous rounds along `order`, starting from no messages.
pub fn message_passing(cg: &CoordinationGraph, order: &DagOrder, rounds: usize) -> MessageTable {
    let mut table = MessageTable::empty(cg.num_agents());
    for _ in 0..rounds {
        table = forward_round(cg, order, &table);
    }
    table
}

/// `argmin c_i(x_i) + sum of incoming messages`, lowest phase on ties.
pub fn decide(i: usize, cg: &CoordinationGraph, incoming: &MessageTable) -> Phase {
    decide_with(i, cg, &[incoming])
}

/// As [`decide`], summing the incoming messages of several tables.
pub fn decide_with(i: usize, cg: &CoordinationGraph, tables: &[&MessageTable]) -> Phase {
    let ci = cg.individual_cost(i);
    let mut v = incoming_sum(tables, i, None);
    for k in 0..D {
        v[k] += ci[k];
    }
    Phase::from_index(argmin(&v)).expect("index below phase count")
}

fn decide_all(cg: &CoordinationGraph, tables: &[&MessageTable]) -> JointAssignment {
    (0..cg.num_agents()).map(|i| decide_with(i, cg, tables)).collect()
}

/// One value-propagation round along the reversed orientation: every agent
/// receives `c_ij(x_i, x_j)` from each neighbour `j` nearer the sink, using
/// the phases of the previous round.
fn reverse_round(cg: &CoordinationGraph, reversed: &DagOrder, x: &JointAssignment, round: usize) -> MessageTable {
    let mut table = MessageTable::empty(cg.num_agents());
    table.round = round;
    for &(j, i) in &reversed.edges {
        let inc = cg
            .incidences(i)
            .iter()
            .find(|inc| inc.neighbor == j)
            .expect("order edges come from the graph");
        let xj = x.get(j).index();
        let mut msg = [0.0; D];
        for (xi, slot) in msg.iter_mut().enumerate() {
            *slot = cg.pair_cost(inc, xi, xj);
        }
        table.insert(j, i, msg);
    }
    table
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Direction {
    Forward,
    Reverse,
}

impl fmt::Display for Direction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Direction::Forward => "forward",
            Direction::Reverse => "reverse",
        })
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct TraceRow {
    pub round: usize,
    pub direction: Direction,
    /// Global cost of the decisions the current messages imply.
    pub cost: f64,
    /// Largest change of any message entry since the previous round.
    pub max_delta: f64,
}

pub fn write_trace_csv<W: Write>(rows: &[TraceRow], writer: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(["round", "direction", "cost", "max_delta"])?;
    for r in rows {
        w.write_record([
            r.round.to_string(),
            r.direction.to_string(),
            r.cost.to_string(),
            r.max_delta.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

#[derive(Clone, Debug, PartialEq)]
pub struct CoorOutcome {
    pub assignment: JointAssignment,
    /// Rounds executed before stopping.
    pub rounds: usize,
    /// Forward and reverse passes that finished.
    pub passes: usize,
    /// Whether a full forward/reverse cycle finished within the budget.
    pub converged: bool,
    pub trace: Vec<TraceRow>,
}

pub fn nl_coor(cg: &CoordinationGraph, order: &DagOrder, budget: CoorBudget) -> JointAssignment {
    nl_coor_run(cg, order, budget, false).assignment
}

/// Runs the forward pass then the reverse pass, each `order.depth()`
/// rounds, as far as the budget allows. An interrupted run returns the last
/// complete snapshot, or before the first snapshot, decisions from the
/// partial forward messages.
pub fn nl_coor_run(cg: &CoordinationGraph, order: &DagOrder, budget: CoorBudget, trace: bool) -> CoorOutcome {
    let n = cg.num_agents();
    let depth = order.depth();
    let mut meter = Meter::new(budget);
    let mut rows = Vec::new();
    let cost_of = |x: &JointAssignment| global_cost(cg, x).expect("assignment covers the graph");

    let mut fwd = MessageTable::empty(n);
    for _ in 0..depth {
        if !meter.allows_round() {
            return CoorOutcome {
                assignment: decide_all(cg, &[&fwd]),
                rounds: meter.rounds,
                passes: 0,
                converged: false,
                trace: rows,
            };
        }
        let next = forward_round(cg, order, &fwd);
        meter.rounds += 1;
        if trace {
            rows.push(TraceRow {
                round: meter.rounds,
                direction: Direction::Forward,
                cost: cost_of(&decide_all(cg, &[&next])),
                max_delta: next.max_delta(&fwd),
            });
        }
        fwd = next;
    }
    let snapshot = decide_all(cg, &[&fwd]);
    if depth == 0 {
        return CoorOutcome {
            assignment: snapshot,
            rounds: 0,
            passes: 1,
            converged: true,
            trace: rows,
        };
    }

    let reversed = order.reverse();
    let mut x = snapshot.clone();
    let mut rev = MessageTable::empty(n);
    for r in 0..depth {
        if !meter.allows_round() {
            return CoorOutcome {
                assignment: snapshot,
                rounds: meter.rounds,
                passes: 1,
                converged: false,
                trace: rows,
            };
        }
        let next = reverse_round(cg, &reversed, &x, r + 1);
        meter.rounds += 1;
        x = decide_all(cg, &[&fwd, &next]);
        if trace {
            rows.push(TraceRow {
                round: meter.rounds,
                direction: Direction::Reverse,
                cost: cost_of(&x),
                max_delta: next.max_delta(&rev),
            });
        }
        rev = next;
    }
    CoorOutcome {
        assignment: x,
        rounds: meter.rounds,
        passes: 2,
        converged: true,
        trace: rows,
    }
}
