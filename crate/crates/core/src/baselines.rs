use crate::coord_graph::JointAssignment;
use crate::error::{invalid, Result};
use crate::network::{LinkKind, Phase, RoadNetwork};
use crate::sim::{QueueState, TurningModel};

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct FixedTimeConfig {
    pub sequence: Vec<Phase>,
    /// Periods each phase stays green.
    pub phase_duration: usize,
}

impl Default for FixedTimeConfig {
    fn default() -> Self {
        FixedTimeConfig {
            sequence: Phase::ALL.to_vec(),
            phase_duration: 1,
        }
    }
}

impl FixedTimeConfig {
    pub fn validate(&self) -> Result<()> {
        if self.sequence.is_empty() {
            return Err(invalid("fixed-time sequence is empty"));
        }
        if self.phase_duration == 0 {
            return Err(invalid("phase duration must be at least one period"));
        }
        Ok(())
    }

    pub fn phase_at(&self, period: usize) -> Phase {
        self.sequence[(period / self.phase_duration) % self.sequence.len()]
    }
}

pub fn fixed_time(period: usize, n_agents: usize, cfg: &FixedTimeConfig) -> Result<JointAssignment> {
    cfg.validate()?;
    Ok(JointAssignment::uniform(n_agents, cfg.phase_at(period)))
}

/// `sum f(l,h) * (q(l,h) - sum_p r(h,p) q(h,p))` over the phased movements
/// at `i` that `phase` serves. Always-on right turns do not count.
pub fn phase_pressure(i: usize, phase: Phase, state: &QueueState, net: &RoadNetwork, turning: &TurningModel) -> f64 {
    net.node_movements(i)
        .iter()
        .filter(|&&m| net.mv_phase(m) == Some(phase))
        .map(|&m| {
            let h = net.mv_to(m);
            let downstream: f64 = if net.link(h).kind == LinkKind::Exit {
                0.0
            } else {
                net.out_movements(h)
                    .iter()
                    .map(|&p| turning.ratio(p) * state.q(p))
                    .sum()
            };
            net.mv_sat_flow(m) * (state.q(m) - downstream)
        })
        .sum()
}

/// Per intersection, the phase of maximum pressure; lowest index on ties.
pub fn max_pressure(state: &QueueState, net: &RoadNetwork, turning: &TurningModel) -> JointAssignment {
    (0..net.num_intersections())
        .map(|i| {
            let mut best = Phase::ALL[0];
            let mut best_p = phase_pressure(i, best, state, net, turning);
            for &p in &Phase::ALL[1..] {
                let v = phase_pressure(i, p, state, net, turning);
                if v > best_p {
                    best = p;
                    best_p = v;
                }
            }
            best
        })
        .collect()
}
