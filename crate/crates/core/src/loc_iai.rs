//! Local best-response refinement and its composition with network-level
//! coordination.

use std::time::{Duration, Instant};

use crate::coord_graph::{build_cg, JointAssignment};
use crate::dag::{min_diameter_dag, DagOrder};
use crate::error::{invalid, Result};
use crate::network::{LinkKind, Phase, RoadNetwork};
use crate::nl_coor::{nl_coor_run, CoorBudget, Meter};
use crate::sim::{served, QueueState, TurningModel};

pub const DEFAULT_EPSILON: f64 = 0.8;
pub const DEFAULT_BUDGET_MS: f64 = 3000.0;
pub const DEFAULT_MAX_SWEEPS: usize = 4;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct EmcConfig {
    pub budget: CoorBudget,
    /// Share of the budget given to network-level coordination.
    pub epsilon: f64,
    pub loc_iai_max_sweeps: usize,
}

impl Default for EmcConfig {
    fn default() -> Self {
        EmcConfig {
            budget: CoorBudget::millis(DEFAULT_BUDGET_MS),
            epsilon: DEFAULT_EPSILON,
            loc_iai_max_sweeps: DEFAULT_MAX_SWEEPS,
        }
    }
}

impl EmcConfig {
    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.epsilon) {
            return Err(invalid(format!("epsilon must lie in [0, 1], got {}", self.epsilon)));
        }
        Ok(())
    }

    /// `(eps * B, (1 - eps) * B)`; a round budget gives the coordination
    /// stage `floor(eps * n)` rounds and the rest to local sweeps.
    pub fn split(&self) -> (CoorBudget, CoorBudget) {
        match self.budget {
            CoorBudget::Rounds(n) => {
                let a = ((self.epsilon * n as f64) + 1e-9).floor() as usize;
                (CoorBudget::Rounds(a.min(n)), CoorBudget::Rounds(n - a.min(n)))
            }
            CoorBudget::WallClock(d) => (
                CoorBudget::WallClock(d.mul_f64(self.epsilon)),
                CoorBudget::WallClock(d.mul_f64(1.0 - self.epsilon)),
            ),
        }
    }
}

/// Predicted `B_i` for each of `i`'s phases with the neighbours' phases in
/// `actions` held fixed.
pub fn local_balances(
    i: usize,
    actions: &JointAssignment,
    state: &QueueState,
    net: &RoadNetwork,
    turning: &TurningModel,
) -> [f64; Phase::COUNT] {
    let mut out = [0.0; Phase::COUNT];
    for &l in net.inputs(i) {
        let inflow = match net.link(l).kind {
            LinkKind::Entry => turning.demand(l),
            _ => net
                .in_movements(l)
                .iter()
                .map(|&m| served(net, m, actions.get(net.mv_node(m)), state.q(m)))
                .sum(),
        };
        for &m in net.out_movements(l) {
            let q = state.q(m);
            let arriving = inflow * turning.ratio(m);
            for (p, slot) in Phase::ALL.iter().zip(out.iter_mut()) {
                let next = q - served(net, m, *p, q) + arriving;
                *slot += next * next;
            }
        }
    }
    out
}

/// The phase minimizing `i`'s own predicted balance. Ties keep the current
/// phase `actions[i]`, then fall to the lowest index.
pub fn best_response(
    i: usize,
    actions: &JointAssignment,
    state: &QueueState,
    net: &RoadNetwork,
    turning: &TurningModel,
) -> Result<Phase> {
    actions.check_covers(net.num_intersections())?;
    if i >= net.num_intersections() {
        return Err(invalid(format!("intersection index {i} out of range")));
    }
    let b = local_balances(i, actions, state, net, turning);
    let current = actions.get(i);
    let mut best = current;
    for p in Phase::ALL {
        if b[p.index()] < b[best.index()] {
            best = p;
        }
    }
    Ok(best)
}

#[derive(Clone, Debug, PartialEq)]
pub struct LocIaiOutcome {
    pub assignment: JointAssignment,
    pub sweeps: usize,
    /// Agents that changed phase in the last sweep performed.
    pub last_changes: usize,
}

/// Synchronous sweeps: every agent best-responds to the previous sweep's
/// assignment. Stops when the budget runs out, after `max_sweeps`, or
/// after a sweep that changes nothing.
pub fn loc_iai(
    init: &JointAssignment,
    state: &QueueState,
    net: &RoadNetwork,
    turning: &TurningModel,
    budget: CoorBudget,
    max_sweeps: usize,
) -> Result<LocIaiOutcome> {
    init.check_covers(net.num_intersections())?;
    let mut meter = Meter::new(budget);
    let mut x = init.clone();
    let mut last_changes = 0;
    while meter.rounds < max_sweeps && meter.allows_round() {
        let next: JointAssignment = (0..net.num_intersections())
            .map(|i| best_response(i, &x, state, net, turning))
            .collect::<Result<_>>()?;
        meter.rounds += 1;
        last_changes = next.iter().zip(x.iter()).filter(|(a, b)| a != b).count();
        x = next;
        if last_changes == 0 {
            break;
        }
    }
    Ok(LocIaiOutcome {
        assignment: x,
        sweeps: meter.rounds,
        last_changes,
    })
}

#[derive(Clone, Debug, PartialEq)]
pub struct EmcOutcome {
    pub assignment: JointAssignment,
    /// The coordination stage's answer before local refinement.
    pub coordinated: JointAssignment,
    pub rounds: usize,
    pub sweeps: usize,
    pub elapsed: Duration,
}

/// Coordination over the precomputed `order` under `eps * B`, then local
/// refinement under `(1 - eps) * B`.
pub fn emc_decide_with_order(
    state: &QueueState,
    net: &RoadNetwork,
    turning: &TurningModel,
    order: &DagOrder,
    cfg: &EmcConfig,
) -> Result<EmcOutcome> {
    let start = Instant::now();
    cfg.validate()?;
    let (coor_budget, local_budget) = cfg.split();
    let cg = build_cg(state, net, turning)?;
    let coor = nl_coor_run(&cg, order, coor_budget, false);
    let local = loc_iai(
        &coor.assignment,
        state,
        net,
        turning,
        local_budget,
        cfg.loc_iai_max_sweeps,
    )?;
    Ok(EmcOutcome {
        assignment: local.assignment,
        coordinated: coor.assignment,
        rounds: coor.rounds,
        sweeps: local.sweeps,
        elapsed: start.elapsed(),
    })
}

pub fn emc_decide(
    state: &QueueState,
    net: &RoadNetwork,
    turning: &TurningModel,
    cfg: &EmcConfig,
) -> Result<JointAssignment> {
    let cg = build_cg(state, net, turning)?;
    let order = min_diameter_dag(&cg)?;
    Ok(emc_decide_with_order(state, net, turning, &order, cfg)?.assignment)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::network::{build_grid, LinkId};
    use crate::sim::{balance_index, predict_next_queues, Scope};
    use crate::testutil::two_node;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn example_state(net: &RoadNetwork) -> QueueState {
        let mut s = QueueState::zeros(net);
        s.set_q(net.movement_by_ids(LinkId(1), LinkId(2)).unwrap(), 4.0);
        s.set_q(net.movement_by_ids(LinkId(1), LinkId(3)).unwrap(), 2.0);
        s
    }

    #[test]
    fn straight_beats_left_locally() {
        let net = two_node();
        let s = example_state(&net);
        let turning = TurningModel::uniform(&net);
        let x = JointAssignment::new(vec![Phase::WeLeft, Phase::WeStraight]);
        let b = local_balances(0, &x, &s, &net, &turning);
        assert_eq!(b[Phase::WeStraight.index()], 4.0);
        assert_eq!(b[Phase::WeLeft.index()], 16.0);
        assert_eq!(best_response(0, &x, &s, &net, &turning).unwrap(), Phase::WeStraight);
    }

    #[test]
    fn empty_queues_keep_the_current_phase() {
        let net = build_grid(2, 2, 300.0, 300.0, 5.0).unwrap();
        let s = QueueState::zeros(&net);
        let turning = TurningModel::uniform(&net);
        let x = JointAssignment::uniform(4, Phase::SnLeft);
        assert_eq!(best_response(3, &x, &s, &net, &turning).unwrap(), Phase::SnLeft);
        let out = loc_iai(&x, &s, &net, &turning, CoorBudget::Rounds(10), 4).unwrap();
        assert_eq!(out.assignment, x);
        assert_eq!(out.sweeps, 1);
    }

    #[test]
    fn missing_actions_rejected() {
        let net = two_node();
        let s = QueueState::zeros(&net);
        let turning = TurningModel::uniform(&net);
        let short = JointAssignment::uniform(1, Phase::WeLeft);
        assert!(best_response(0, &short, &s, &net, &turning).is_err());
    }

    #[test]
    fn matches_enumeration_of_the_predictor() {
        // B_i of the full one-step prediction restricted to i's movements.
        let net = build_grid(2, 3, 300.0, 300.0, 5.0).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..50 {
            let mut s = QueueState::zeros(&net);
            for m in 0..net.num_movements() {
                s.set_q(m, rng.random_range(0..9) as f64);
            }
            let mut turning = TurningModel::uniform(&net);
            for l in net.entry_links() {
                turning.set_demand(l, rng.random_range(0.0..4.0));
            }
            let x: JointAssignment = (0..6).map(|_| Phase::ALL[rng.random_range(0..4)]).collect();
            for i in 0..6 {
                let mut costs = [0.0; 4];
                for p in Phase::ALL {
                    let mut y = x.clone();
                    y.set(i, p);
                    let next = predict_next_queues(&s, &y, &net, &turning).unwrap();
                    costs[p.index()] = balance_index(&next, &net, Scope::Intersection(i));
                }
                let got = best_response(i, &x, &s, &net, &turning).unwrap();
                let min = costs.iter().cloned().fold(f64::INFINITY, f64::min);
                assert_eq!(costs[got.index()], min);
                assert_eq!(local_balances(i, &x, &s, &net, &turning), costs);
            }
        }
    }

    #[test]
    fn zero_round_budget_returns_init() {
        let net = two_node();
        let s = example_state(&net);
        let turning = TurningModel::uniform(&net);
        let init = JointAssignment::new(vec![Phase::WeLeft, Phase::WeStraight]);
        let out = loc_iai(&init, &s, &net, &turning, CoorBudget::Rounds(0), 4).unwrap();
        assert_eq!(out.assignment, init);
        assert_eq!(out.sweeps, 0);
    }

    #[test]
    fn refinement_flips_left_to_straight() {
        let net = two_node();
        let s = example_state(&net);
        let turning = TurningModel::uniform(&net);
        let init = JointAssignment::new(vec![Phase::WeLeft, Phase::WeStraight]);
        let out = loc_iai(&init, &s, &net, &turning, CoorBudget::Rounds(10), 4).unwrap();
        assert_eq!(out.assignment.get(0), Phase::WeStraight);
    }

    #[test]
    fn emc_budget_split() {
        let cfg = EmcConfig {
            budget: CoorBudget::Rounds(10),
            ..EmcConfig::default()
        };
        assert_eq!(cfg.split(), (CoorBudget::Rounds(8), CoorBudget::Rounds(2)));
        let (a, b) = EmcConfig::default().split();
        assert_eq!(a, CoorBudget::WallClock(Duration::from_millis(2400)));
        assert_eq!(b, CoorBudget::WallClock(Duration::from_millis(600)));
        let bad = EmcConfig {
            epsilon: 1.5,
            ..EmcConfig::default()
        };
        assert!(bad.validate().is_err());
    }

    #[test]
    fn emc_on_two_intersections() {
        let net = two_node();
        let s = example_state(&net);
        let turning = TurningModel::uniform(&net);
        let cg = build_cg(&s, &net, &turning).unwrap();
        let order = min_diameter_dag(&cg).unwrap();
        let cfg = EmcConfig {
            budget: CoorBudget::Rounds(20),
            ..EmcConfig::default()
        };
        let out = emc_decide_with_order(&s, &net, &turning, &order, &cfg).unwrap();
        assert_eq!(out.coordinated.get(0), Phase::WeLeft);
        assert_eq!(out.assignment.get(0), Phase::WeStraight);

        let pure = EmcConfig { epsilon: 1.0, ..cfg };
        let out = emc_decide_with_order(&s, &net, &turning, &order, &pure).unwrap();
        assert_eq!(out.assignment, out.coordinated);
        assert_eq!(out.sweeps, 0);
    }

    #[test]
    fn epsilon_zero_seeds_from_individual_costs() {
        let net = build_grid(2, 2, 300.0, 300.0, 5.0).unwrap();
        let mut s = QueueState::zeros(&net);
        for m in 0..net.num_movements() {
            s.set_q(m, (m % 5) as f64);
        }
        let turning = TurningModel::uniform(&net);
        let cg = build_cg(&s, &net, &turning).unwrap();
        let order = min_diameter_dag(&cg).unwrap();
        let cfg = EmcConfig {
            budget: CoorBudget::Rounds(4),
            epsilon: 0.0,
            loc_iai_max_sweeps: 4,
        };
        let out = emc_decide_with_order(&s, &net, &turning, &order, &cfg).unwrap();
        assert_eq!(out.rounds, 0);
        let seed = crate::nl_coor::nl_coor(&cg, &order, CoorBudget::Rounds(0));
        assert_eq!(out.coordinated, seed);
    }
}
