//! Experiment loop, controllers, metrics and the communication-delay model.

use std::fmt;
use std::io::Write;
use std::str::FromStr;
use std::time::{Duration, Instant};

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::baselines::{fixed_time, max_pressure, FixedTimeConfig};
use crate::coord_graph::{build_cg, JointAssignment};
use crate::dag::{min_diameter_dag, DagOrder};
use crate::error::{invalid, Error, Result};
use crate::loc_iai::{emc_decide_with_order, EmcConfig};
use crate::network::{build_grid, RoadNetwork, DEFAULT_SAT_FLOW};
use crate::nl_coor::CoorBudget;
use crate::sim::{
    balance_index, generate_uniform_flow, littles_law_travel_time, travel_time_metrics, Mode, QueueState, Scope,
    SimConfig, Simulator, TurningModel, Vehicle,
};

/// RNG stream for message delays.
const DELAY_STREAM: u64 = 2;

/// Link length used for generated grids, meters.
pub const GRID_LINK_M: f64 = 300.0;

/// A controller slower than this multiple of its wall-clock budget aborts
/// the run.
pub const OVERRUN_FACTOR: f64 = 10.0;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum ControllerKind {
    FixedTime,
    MaxPressure,
    Emc,
    NlCoorOnly,
}

impl ControllerKind {
    pub const ALL: [ControllerKind; 4] = [
        ControllerKind::FixedTime,
        ControllerKind::MaxPressure,
        ControllerKind::NlCoorOnly,
        ControllerKind::Emc,
    ];

    pub fn name(self) -> &'static str {
        match self {
            ControllerKind::FixedTime => "fixedtime",
            ControllerKind::MaxPressure => "maxpressure",
            ControllerKind::Emc => "emc",
            ControllerKind::NlCoorOnly => "nlcoor",
        }
    }
}

impl fmt::Display for ControllerKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for ControllerKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        ControllerKind::ALL
            .into_iter()
            .find(|k| k.name() == s.to_ascii_lowercase())
            .ok_or_else(|| invalid(format!("unknown controller `{s}`")))
    }
}

/// Per-message latency `max(0, N(mu, sigma^2))` in milliseconds.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct DelayModel {
    pub mu_ms: f64,
    pub sigma_ms: f64,
    pub seed: u64,
    /// Agents spread over this many hosts; messages between agents on the
    /// same host are free. `None` charges every message.
    pub nodes: Option<usize>,
}

impl DelayModel {
    pub const SIGMA_MS: f64 = 3.0;

    pub fn new(mu_ms: f64, seed: u64) -> Self {
        DelayModel {
            mu_ms,
            sigma_ms: Self::SIGMA_MS,
            seed,
            nodes: None,
        }
    }

    pub fn partitioned(self, nodes: usize) -> Self {
        DelayModel {
            nodes: Some(nodes),
            ..self
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.mu_ms >= 0.0 && self.sigma_ms >= 0.0) {
            return Err(invalid("delay mean and deviation must be non-negative"));
        }
        if self.nodes == Some(0) {
            return Err(invalid("a partition needs at least one node"));
        }
        Ok(())
    }
}

/// Virtual clock for synchronous message rounds. Random draws happen for
/// every message whether or not it is charged, so two models differing only
/// in `mu` see the same noise.
pub struct DelayClock {
    model: DelayModel,
    rng: ChaCha8Rng,
    host: Option<Vec<usize>>,
}

impl DelayClock {
    pub fn new(model: DelayModel, n_agents: usize) -> Result<Self> {
        model.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(model.seed);
        rng.set_stream(DELAY_STREAM);
        let host = model.nodes.map(|k| {
            let mut agents: Vec<usize> = (0..n_agents).collect();
            agents.shuffle(&mut rng);
            let mut host = vec![0; n_agents];
            for (slot, a) in agents.into_iter().enumerate() {
                host[a] = slot % k;
            }
            host
        });
        Ok(DelayClock { model, rng, host })
    }

    /// Critical path of one round: the largest charged message delay.
    pub fn round(&mut self, messages: impl IntoIterator<Item = (usize, usize)>) -> f64 {
        let mut worst = 0.0f64;
        for (a, b) in messages {
            let z: f64 = self.rng.sample(StandardNormal);
            let free = self.host.as_ref().is_some_and(|h| h[a] == h[b]);
            if !free {
                worst = worst.max((self.model.mu_ms + self.model.sigma_ms * z).max(0.0));
            }
        }
        worst
    }
}

/// Modeled delay of `passes` passes of `order.depth()` rounds each, every
/// round sending one message per edge.
pub fn simulate_comm_delay(order: &DagOrder, passes: usize, model: &DelayModel) -> Result<f64> {
    let mut clock = DelayClock::new(*model, order.num_agents())?;
    let mut total = 0.0;
    for _ in 0..passes * order.depth() {
        total += clock.round(order.edges.iter().copied());
    }
    Ok(total)
}

pub struct DecisionInput<'a> {
    pub period: usize,
    pub state: &'a QueueState,
    pub net: &'a RoadNetwork,
    pub turning: &'a TurningModel,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Decision {
    pub assignment: JointAssignment,
    /// Modeled communication latency of this decision, ms.
    pub comm_delay_ms: f64,
}

impl Decision {
    fn local(assignment: JointAssignment) -> Self {
        Decision {
            assignment,
            comm_delay_ms: 0.0,
        }
    }
}

pub trait Controller {
    fn name(&self) -> &str;

    /// Wall-clock budget the safety valve is measured against.
    fn wall_budget(&self) -> Option<Duration> {
        None
    }

    fn decide(&mut self, input: &DecisionInput<'_>) -> Result<Decision>;
}

pub struct FixedTimeController(pub FixedTimeConfig);

impl Controller for FixedTimeController {
    fn name(&self) -> &str {
        "fixedtime"
    }

    fn decide(&mut self, input: &DecisionInput<'_>) -> Result<Decision> {
        fixed_time(input.period, input.net.num_intersections(), &self.0).map(Decision::local)
    }
}

pub struct MaxPressureController;

impl Controller for MaxPressureController {
    fn name(&self) -> &str {
        "maxpressure"
    }

    fn decide(&mut self, input: &DecisionInput<'_>) -> Result<Decision> {
        Ok(Decision::local(max_pressure(input.state, input.net, input.turning)))
    }
}

/// Coordination plus local refinement; with `epsilon = 1` it is pure
/// network-level coordination.
pub struct EmcController {
    name: String,
    cfg: EmcConfig,
    order: Option<DagOrder>,
    clock: Option<DelayClock>,
    delay: Option<DelayModel>,
}

impl EmcController {
    pub fn new(cfg: EmcConfig, delay: Option<DelayModel>) -> Result<Self> {
        cfg.validate()?;
        Ok(EmcController {
            name: "emc".into(),
            cfg,
            order: None,
            clock: None,
            delay,
        })
    }

    pub fn nl_coor_only(cfg: EmcConfig, delay: Option<DelayModel>) -> Result<Self> {
        let mut c = EmcController::new(EmcConfig { epsilon: 1.0, ..cfg }, delay)?;
        c.name = "nlcoor".into();
        Ok(c)
    }
}

impl Controller for EmcController {
    fn name(&self) -> &str {
        &self.name
    }

    fn wall_budget(&self) -> Option<Duration> {
        match self.cfg.budget {
            CoorBudget::WallClock(d) => Some(d),
            CoorBudget::Rounds(_) => None,
        }
    }

    fn decide(&mut self, input: &DecisionInput<'_>) -> Result<Decision> {
        if self.order.is_none() {
            let cg = build_cg(input.state, input.net, input.turning)?;
            self.order = Some(min_diameter_dag(&cg)?);
            if let Some(model) = self.delay {
                self.clock = Some(DelayClock::new(model, input.net.num_intersections())?);
            }
        }
        let order = self.order.as_ref().expect("set above");
        let out = emc_decide_with_order(input.state, input.net, input.turning, order, &self.cfg)?;
        let mut comm = 0.0;
        if let Some(clock) = self.clock.as_mut() {
            for _ in 0..out.rounds {
                comm += clock.round(order.edges.iter().copied());
            }
            // A sweep broadcasts each agent's phase to every neighbour.
            let both_ways: Vec<(usize, usize)> = order.edges.iter().flat_map(|&(a, b)| [(a, b), (b, a)]).collect();
            for _ in 0..out.sweeps {
                comm += clock.round(both_ways.iter().copied());
            }
        }
        Ok(Decision {
            assignment: out.assignment,
            comm_delay_ms: comm,
        })
    }
}

#[derive(Clone, Debug)]
pub struct Scenario {
    pub network: RoadNetwork,
    pub vehicles: Vec<Vehicle>,
    pub sim: SimConfig,
    pub controller: ControllerKind,
    pub emc: EmcConfig,
    pub fixed_time: FixedTimeConfig,
    pub delay: Option<DelayModel>,
}

/// Periods needed to cover `duration` seconds.
pub fn horizon_for(duration: f64, tau: f64) -> usize {
    ((duration / tau) - 1e-9).ceil().max(1.0) as usize
}

impl Scenario {
    pub fn new(network: RoadNetwork, vehicles: Vec<Vehicle>, sim: SimConfig) -> Self {
        Scenario {
            network,
            vehicles,
            sim,
            controller: ControllerKind::Emc,
            emc: EmcConfig::default(),
            fixed_time: FixedTimeConfig::default(),
            delay: None,
        }
    }

    /// A `rows x cols` grid of 300 m links with uniform arrivals for
    /// `duration` seconds, simulated for the same duration.
    pub fn grid(rows: usize, cols: usize, rate: f64, duration: f64, seed: u64) -> Result<Self> {
        let network = build_grid(rows, cols, GRID_LINK_M, GRID_LINK_M, DEFAULT_SAT_FLOW)?;
        let vehicles = generate_uniform_flow(&network, rate, duration, seed)?;
        let tau = SimConfig::default().tau;
        let sim = SimConfig {
            horizon: horizon_for(duration, tau),
            seed,
            ..SimConfig::default()
        };
        Ok(Scenario::new(network, vehicles, sim))
    }

    pub fn with_controller(&self, kind: ControllerKind) -> Scenario {
        Scenario {
            controller: kind,
            ..self.clone()
        }
    }

    pub fn make_controller(&self) -> Result<Box<dyn Controller>> {
        Ok(match self.controller {
            ControllerKind::FixedTime => {
                self.fixed_time.validate()?;
                Box::new(FixedTimeController(self.fixed_time.clone()))
            }
            ControllerKind::MaxPressure => Box::new(MaxPressureController),
            ControllerKind::Emc => Box::new(EmcController::new(self.emc, self.delay)?),
            ControllerKind::NlCoorOnly => Box::new(EmcController::nl_coor_only(self.emc, self.delay)?),
        })
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PeriodRecord {
    pub period: usize,
    /// Total queued vehicles after the step.
    pub total_queue: f64,
    pub balance: f64,
    pub decision_ms: f64,
    pub comm_delay_ms: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Metrics {
    pub controller: String,
    /// Seconds; `None` when no vehicle departed during the run.
    pub avg_travel_time: Option<f64>,
    /// Vehicles that left the network.
    pub throughput: f64,
    pub mean_balance: f64,
    pub max_total_queue: f64,
    pub mean_decision_ms: f64,
    pub mean_comm_delay_ms: f64,
    pub series: Vec<PeriodRecord>,
}

impl Metrics {
    pub fn mean_total_queue(&self, from: usize, to: usize) -> f64 {
        let s = &self.series[from..to];
        s.iter().map(|r| r.total_queue).sum::<f64>() / s.len() as f64
    }
}

pub fn run_experiment(scenario: &Scenario) -> Result<Metrics> {
    let mut controller = scenario.make_controller()?;
    run_with_controller(scenario, controller.as_mut())
}

pub fn run_with_controller(scenario: &Scenario, controller: &mut dyn Controller) -> Result<Metrics> {
    let net = &scenario.network;
    let mut sim = Simulator::new(net, scenario.sim.clone(), scenario.vehicles.clone())?;
    let mut series = Vec::with_capacity(scenario.sim.horizon);
    let mut vehicle_periods = 0.0;
    while !sim.is_finished() {
        let state = sim.state();
        let turning = sim.estimate_turning();
        let input = DecisionInput {
            period: sim.period(),
            state: &state,
            net,
            turning: &turning,
        };
        let start = Instant::now();
        let decision = controller.decide(&input)?;
        let elapsed = start.elapsed();
        if let Some(budget) = controller.wall_budget() {
            if elapsed.as_secs_f64() > OVERRUN_FACTOR * budget.as_secs_f64() {
                return Err(Error::BudgetOverrun {
                    controller: controller.name().to_string(),
                    elapsed_ms: elapsed.as_secs_f64() * 1e3,
                    budget_ms: budget.as_secs_f64() * 1e3,
                });
            }
        }
        let period = sim.period();
        sim.step(&decision.assignment)?;
        let after = sim.state();
        vehicle_periods += after.total();
        series.push(PeriodRecord {
            period,
            total_queue: after.total(),
            balance: balance_index(&after, net, Scope::Network),
            decision_ms: elapsed.as_secs_f64() * 1e3,
            comm_delay_ms: decision.comm_delay_ms,
        });
    }

    let end_time = sim.time();
    let census = sim.census();
    let (avg_travel_time, throughput) = match scenario.sim.mode {
        Mode::Micro => {
            let avg = match travel_time_metrics(sim.vehicles(), end_time) {
                Ok(s) => Some(s.avg_travel_time),
                Err(Error::UndefinedMetric(_)) => None,
                Err(e) => return Err(e),
            };
            (avg, census.exited as f64)
        }
        Mode::Macro => {
            let queued = series.last().map_or(0.0, |r| r.total_queue);
            let avg = littles_law_travel_time(vehicle_periods, scenario.sim.tau, census.entered);
            (avg, (census.entered as f64 - queued).max(0.0))
        }
    };
    let n = series.len() as f64;
    let mean = |f: fn(&PeriodRecord) -> f64| series.iter().map(f).sum::<f64>() / n;
    Ok(Metrics {
        controller: controller.name().to_string(),
        avg_travel_time,
        throughput,
        mean_balance: mean(|r| r.balance),
        max_total_queue: series.iter().map(|r| r.total_queue).fold(0.0, f64::max),
        mean_decision_ms: mean(|r| r.decision_ms),
        mean_comm_delay_ms: mean(|r| r.comm_delay_ms),
        series,
    })
}

/// Runs every kind in `kinds` on the same scenario.
pub fn compare(scenario: &Scenario, kinds: &[ControllerKind]) -> Result<Vec<Metrics>> {
    kinds
        .iter()
        .map(|&k| run_experiment(&scenario.with_controller(k)))
        .collect()
}

pub fn write_metrics_csv<W: Write>(metrics: &Metrics, writer: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(["period", "total_queue", "balance", "decision_ms", "comm_delay_ms"])?;
    for r in &metrics.series {
        w.write_record([
            r.period.to_string(),
            r.total_queue.to_string(),
            r.balance.to_string(),
            format!("{:.3}", r.decision_ms),
            format!("{:.3}", r.comm_delay_ms),
        ])?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_comparison_csv<W: Write>(rows: &[Metrics], writer: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(["controller", "avg_travel_time_s", "mean_balance", "mean_decision_ms"])?;
    for m in rows {
        w.write_record([
            m.controller.clone(),
            m.avg_travel_time.map_or_else(String::new, |t| format!("{t:.3}")),
            format!("{:.3}", m.mean_balance),
            format!("{:.3}", m.mean_decision_ms),
        ])?;
    }
    w.flush()?;
    Ok(())
}
