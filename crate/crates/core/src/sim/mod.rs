//! Period-based queue dynamics.
//!
//! Two modes share one movement-indexed [`QueueState`]:
//!
//! * **Micro** moves individual vehicles. Green movements release up to
//!   `floor(f)` head-of-queue vehicles; a released vehicle spends
//!   [`Link::traversal_periods`](crate::network::Link::traversal_periods)
//!   periods on its next link before joining the queue for the movement its
//!   route takes next. Vehicles whose next link is an exit link leave.
//! * **Macro** applies the expected-value update directly:
//!   `q'(l,h) = q(l,h) - (f x ∧ q)(l,h) + inflow(l) r(l,h)` where the inflow
//!   of an internal link is the total released into it and the inflow of an
//!   entry link is its exogenous demand `d(l)`. This is also the one-step
//!   lookahead used by every controller ([`predict_next_queues`]).

mod flow;
mod metrics;

pub use flow::{generate_uniform_flow, load_flow, route_vehicles, FlowSpec, Router, Vehicle, VehicleRecord};
pub use metrics::{travel_time_metrics, TravelTimeSummary};

use std::collections::VecDeque;

use crate::coord_graph::JointAssignment;
use crate::error::{invalid, Result};
use crate::network::{LinkKind, Phase, RoadNetwork};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Default)]
pub enum Mode {
    #[default]
    Micro,
    Macro,
}

#[derive(Clone, Debug, PartialEq)]
pub struct SimConfig {
    /// Seconds per period.
    pub tau: f64,
    /// Number of periods to simulate.
    pub horizon: usize,
    pub seed: u64,
    pub mode: Mode,
}

impl Default for SimConfig {
    fn default() -> Self {
        SimConfig {
            tau: 10.0,
            horizon: 360,
            seed: 0,
            mode: Mode::Micro,
        }
    }
}

impl SimConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.tau > 0.0 && self.tau.is_finite()) {
            return Err(invalid(format!("tau must be positive, got {}", self.tau)));
        }
        if self.horizon == 0 {
            return Err(invalid("horizon must be at least one period"));
        }
        Ok(())
    }
}

/// Queue lengths `q(l,h)` at the start of a period, indexed by movement.
#[derive(Clone, Debug, PartialEq)]
pub struct QueueState {
    pub period: usize,
    q: Vec<f64>,
}

impl QueueState {
    pub fn zeros(net: &RoadNetwork) -> Self {
        QueueState {
            period: 0,
            q: vec![0.0; net.num_movements()],
        }
    }

    pub fn from_queues(period: usize, q: Vec<f64>) -> Self {
        QueueState { period, q }
    }

    #[inline]
    pub fn q(&self, m: usize) -> f64 {
        self.q[m]
    }

    pub fn set_q(&mut self, m: usize, value: f64) {
        self.q[m] = value;
    }

    pub fn queues(&self) -> &[f64] {
        &self.q
    }

    /// `|Q(t)| = sum q(l,h)`.
    pub fn total(&self) -> f64 {
        self.q.iter().sum()
    }

    pub(crate) fn check_shape(&self, net: &RoadNetwork) -> Result<()> {
        if self.q.len() != net.num_movements() {
            return Err(invalid(format!(
                "queue state has {} movements, network has {}",
                self.q.len(),
                net.num_movements()
            )));
        }
        Ok(())
    }
}

/// Turning proportions `r(l,h)` (indexed by movement) and exogenous demand
/// `d(l)` in vehicles/period (indexed by link; non-zero only on entry links).
#[derive(Clone, Debug, PartialEq)]
pub struct TurningModel {
    r: Vec<f64>,
    d: Vec<f64>,
}

impl TurningModel {
    /// Uniform split over `Do_l` for every link, zero demand.
    pub fn uniform(net: &RoadNetwork) -> Self {
        let mut r = vec![0.0; net.num_movements()];
        for l in 0..net.num_links() {
            let outs = net.out_movements(l);
            for &m in outs {
                r[m] = 1.0 / outs.len() as f64;
            }
        }
        TurningModel {
            r,
            d: vec![0.0; net.num_links()],
        }
    }

    #[inline]
    pub fn ratio(&self, m: usize) -> f64 {
        self.r[m]
    }

    #[inline]
    pub fn demand(&self, link: usize) -> f64 {
        self.d[link]
    }

    pub fn set_ratio(&mut self, m: usize, r: f64) {
        self.r[m] = r;
    }

    pub fn set_demand(&mut self, link: usize, d: f64) {
        self.d[link] = d;
    }

    /// Sets `r(l, ·)` for every movement leaving `link`, in
    /// `net.out_movements(link)` order.
    pub fn set_split(&mut self, net: &RoadNetwork, link: usize, ratios: &[f64]) -> Result<()> {
        let outs = net.out_movements(link);
        if outs.len() != ratios.len() {
            return Err(invalid(format!(
                "link has {} movements, got {} ratios",
                outs.len(),
                ratios.len()
            )));
        }
        for (&m, &r) in outs.iter().zip(ratios) {
            self.r[m] = r;
        }
        Ok(())
    }

    /// Returns the links whose proportions do not sum to one.
    pub fn unnormalized_links(&self, net: &RoadNetwork) -> Vec<usize> {
        (0..net.num_links())
            .filter(|&l| {
                let outs = net.out_movements(l);
                !outs.is_empty() && (outs.iter().map(|&m| self.r[m]).sum::<f64>() - 1.0).abs() > 1e-9
            })
            .collect()
    }

    pub(crate) fn check_shape(&self, net: &RoadNetwork) -> Result<()> {
        if self.r.len() != net.num_movements() || self.d.len() != net.num_links() {
            return Err(invalid("turning model does not match the network"));
        }
        Ok(())
    }
}

/// Vehicles movement `m` discharges this period: `f x ∧ q`.
#[inline]
pub fn served(net: &RoadNetwork, m: usize, phase: Phase, q: f64) -> f64 {
    if net.is_served(m, phase) {
        net.mv_sat_flow(m).min(q)
    } else {
        0.0
    }
}

fn check_decision(decision: &JointAssignment, net: &RoadNetwork) -> Result<()> {
    if decision.len() != net.num_intersections() {
        return Err(invalid(format!(
            "decision covers {} intersections, network has {}",
            decision.len(),
            net.num_intersections()
        )));
    }
    Ok(())
}

/// Expected `Q(t+1)` under `decision`.
pub fn predict_next_queues(
    state: &QueueState,
    decision: &JointAssignment,
    net: &RoadNetwork,
    turning: &TurningModel,
) -> Result<QueueState> {
    check_decision(decision, net)?;
    state.check_shape(net)?;
    turning.check_shape(net)?;

    let released: Vec<f64> = (0..net.num_movements())
        .map(|m| served(net, m, decision.get(net.mv_node(m)), state.q(m)))
        .collect();
    let mut inflow = vec![0.0; net.num_links()];
    for (l, slot) in inflow.iter_mut().enumerate() {
        *slot = match net.link(l).kind {
            LinkKind::Entry => turning.demand(l),
            _ => net.in_movements(l).iter().map(|&m| released[m]).sum(),
        };
    }
    let q = (0..net.num_movements())
        .map(|m| state.q(m) - released[m] + inflow[net.mv_from(m)] * turning.ratio(m))
        .collect();
    Ok(QueueState {
        period: state.period + 1,
        q,
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Scope {
    Network,
    Intersection(usize),
}

/// Balance index: sum of squared queues over the movements in `scope`.
pub fn balance_index(state: &QueueState, net: &RoadNetwork, scope: Scope) -> f64 {
    match scope {
        Scope::Network => state.q.iter().map(|q| q * q).sum(),
        Scope::Intersection(i) => net.node_movements(i).iter().map(|&m| state.q(m) * state.q(m)).sum(),
    }
}

/// Running counters for the micro simulator.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct Census {
    pub entered: usize,
    pub exited: usize,
    pub queued: usize,
    pub in_transit: usize,
}

/// A simulation run over a fixed vehicle list.
pub struct Simulator<'a> {
    net: &'a RoadNetwork,
    cfg: SimConfig,
    vehicles: Vec<Vehicle>,
    /// Vehicle indices sorted by departure time.
    departure_order: Vec<usize>,
    next_departure: usize,
    route_links: Vec<Vec<usize>>,
    position: Vec<usize>,
    traversal: Vec<usize>,
    queues: Vec<VecDeque<usize>>,
    transit: Vec<VecDeque<(usize, usize)>>,
    macro_q: Vec<f64>,
    macro_split: Option<TurningModel>,
    period: usize,
    entered: usize,
    exited: usize,
}

impl<'a> Simulator<'a> {
    /// Vehicles must carry routes that start at their origin, end at their
    /// destination and follow existing movements.
    pub fn new(net: &'a RoadNetwork, cfg: SimConfig, vehicles: Vec<Vehicle>) -> Result<Self> {
        cfg.validate()?;
        let mut route_links = Vec::with_capacity(vehicles.len());
        for v in &vehicles {
            route_links.push(v.route_indices(net)?);
        }
        let mut departure_order: Vec<usize> = (0..vehicles.len()).collect();
        departure_order.sort_by(|&a, &b| {
            vehicles[a]
                .depart_time
                .total_cmp(&vehicles[b].depart_time)
                .then(a.cmp(&b))
        });
        let traversal = net.links().iter().map(|l| l.traversal_periods(cfg.tau)).collect();

        let macro_split = (cfg.mode == Mode::Macro).then(|| route_split(net, &route_links));
        Ok(Simulator {
            net,
            position: vec![0; vehicles.len()],
            cfg,
            vehicles,
            departure_order,
            next_departure: 0,
            route_links,
            traversal,
            queues: vec![VecDeque::new(); net.num_movements()],
            transit: vec![VecDeque::new(); net.num_links()],
            macro_q: vec![0.0; net.num_movements()],
            macro_split,
            period: 0,
            entered: 0,
            exited: 0,
        })
    }

    pub fn network(&self) -> &RoadNetwork {
        self.net
    }

    pub fn config(&self) -> &SimConfig {
        &self.cfg
    }

    pub fn period(&self) -> usize {
        self.period
    }

    pub fn is_finished(&self) -> bool {
        self.period >= self.cfg.horizon
    }

    /// Simulated clock at the start of the current period, seconds.
    pub fn time(&self) -> f64 {
        self.period as f64 * self.cfg.tau
    }

    pub fn vehicles(&self) -> &[Vehicle] {
        &self.vehicles
    }

    pub fn into_vehicles(self) -> Vec<Vehicle> {
        self.vehicles
    }

    pub fn state(&self) -> QueueState {
        let q = match self.cfg.mode {
            Mode::Micro => self.queues.iter().map(|f| f.len() as f64).collect(),
            Mode::Macro => self.macro_q.clone(),
        };
        QueueState { period: self.period, q }
    }

    /// FIFO of vehicle indices waiting on movement `m` (micro mode).
    pub fn queue(&self, m: usize) -> &VecDeque<usize> {
        &self.queues[m]
    }

    /// Overrides the macro-mode queues and turning model, e.g. to replay a
    /// lookahead from an arbitrary state.
    pub fn set_macro_state(&mut self, state: &QueueState, turning: TurningModel) -> Result<()> {
        if self.cfg.mode != Mode::Macro {
            return Err(invalid("macro state can only be set in macro mode"));
        }
        state.check_shape(self.net)?;
        turning.check_shape(self.net)?;
        self.macro_q = state.q.clone();
        self.macro_split = Some(turning);
        Ok(())
    }

    pub fn census(&self) -> Census {
        Census {
            entered: self.entered,
            exited: self.exited,
            queued: self.queues.iter().map(VecDeque::len).sum(),
            in_transit: self.transit.iter().map(VecDeque::len).sum(),
        }
    }

    /// Vehicles departing during the current period, `[t tau, (t+1) tau)`.
    fn departures_this_period(&self) -> impl Iterator<Item = usize> + '_ {
        let end = (self.period + 1) as f64 * self.cfg.tau;
        self.departure_order[self.next_departure..]
            .iter()
            .copied()
            .take_while(move |&v| self.vehicles[v].depart_time < end)
    }

    /// Advances one period under `decision`.
    pub fn step(&mut self, decision: &JointAssignment) -> Result<()> {
        check_decision(decision, self.net)?;
        if self.is_finished() {
            return Err(invalid(format!("horizon of {} periods reached", self.cfg.horizon)));
        }
        match self.cfg.mode {
            Mode::Micro => self.step_micro(decision),
            Mode::Macro => self.step_macro(decision)?,
        }
        self.period += 1;
        Ok(())
    }

    fn step_micro(&mut self, decision: &JointAssignment) {
        let net = self.net;
        let t = self.period;
        let exit_time = (t + 1) as f64 * self.cfg.tau;

        for m in 0..net.num_movements() {
            if !net.is_served(m, decision.get(net.mv_node(m))) {
                continue;
            }
            let capacity = net.mv_sat_flow(m).floor() as usize;
            for _ in 0..capacity.min(self.queues[m].len()) {
                let v = self.queues[m].pop_front().expect("length checked");
                self.position[v] += 1;
                let link = self.route_links[v][self.position[v]];
                if net.link(link).kind == LinkKind::Exit {
                    self.vehicles[v].exit_time = Some(exit_time);
                    self.exited += 1;
                } else {
                    self.transit[link].push_back((t + self.traversal[link], v));
                }
            }
        }

        for link in 0..self.transit.len() {
            while self.transit[link].front().is_some_and(|&(ready, _)| ready <= t + 1) {
                let (_, v) = self.transit[link].pop_front().expect("front checked");
                let m = self.movement_of(v);
                self.queues[m].push_back(v);
            }
        }

        let arriving: Vec<usize> = self.departures_this_period().collect();
        self.next_departure += arriving.len();
        for v in arriving {
            let depart = self.vehicles[v].depart_time;
            self.vehicles[v].enter_time = Some(depart);
            let m = self.movement_of(v);
            self.queues[m].push_back(v);
            self.entered += 1;
        }
    }

    fn step_macro(&mut self, decision: &JointAssignment) -> Result<()> {
        let mut turning = self.macro_split.clone().expect("macro mode keeps a split");
        let arriving: Vec<usize> = self.departures_this_period().collect();
        self.next_departure += arriving.len();
        for v in arriving {
            let origin = self.route_links[v][0];
            turning.set_demand(origin, turning.demand(origin) + 1.0);
            self.entered += 1;
        }
        let state = QueueState {
            period: self.period,
            q: std::mem::take(&mut self.macro_q),
        };
        self.macro_q = predict_next_queues(&state, decision, self.net, &turning)?.q;
        Ok(())
    }

    fn movement_of(&self, v: usize) -> usize {
        let route = &self.route_links[v];
        let p = self.position[v];
        self.net
            .movement_idx(route[p], route[p + 1])
            .expect("routes are validated against the movement table")
    }

    /// Turning proportions and demand for the next lookahead.
    ///
    /// `r(l,h)` is the share of vehicles bound for `h` among those that are
    /// on `l` (queued or in transit) or are about to enter it (queued
    /// upstream toward `l`, or departing onto entry link `l` this period);
    /// uniform over `Do_l` when there are none. `d(l)` counts departures onto
    /// entry link `l` during the current period.
    ///
    /// In macro mode the proportions are the static route split of the
    /// whole flow.
    pub fn estimate_turning(&self) -> TurningModel {
        let net = self.net;
        if let Some(split) = &self.macro_split {
            let mut turning = split.clone();
            for v in self.departures_this_period() {
                let origin = self.route_links[v][0];
                turning.d[origin] += 1.0;
            }
            return turning;
        }
        let mut counts = vec![0.0f64; net.num_movements()];
        let mut bump = |v: usize, at: usize| {
            let route = &self.route_links[v];
            if at + 1 < route.len() {
                if let Some(m) = net.movement_idx(route[at], route[at + 1]) {
                    counts[m] += 1.0;
                }
            }
        };
        for queue in &self.queues {
            for &v in queue {
                let p = self.position[v];
                bump(v, p);
                bump(v, p + 1);
            }
        }
        for transit in &self.transit {
            for &(_, v) in transit {
                bump(v, self.position[v]);
            }
        }
        let mut turning = TurningModel::uniform(net);
        for v in self.departures_this_period() {
            bump(v, 0);
            let origin = self.route_links[v][0];
            turning.d[origin] += 1.0;
        }
        for l in 0..net.num_links() {
            let outs = net.out_movements(l);
            let total: f64 = outs.iter().map(|&m| counts[m]).sum();
            if total > 0.0 {
                for &m in outs {
                    turning.r[m] = counts[m] / total;
                }
            }
        }
        turning
    }
}

/// Static turning proportions over the whole flow, used by macro mode.
fn route_split(net: &RoadNetwork, routes: &[Vec<usize>]) -> TurningModel {
    let mut counts = vec![0.0f64; net.num_movements()];
    for route in routes {
        for w in route.windows(2) {
            if let Some(m) = net.movement_idx(w[0], w[1]) {
                counts[m] += 1.0;
            }
        }
    }
    let mut turning = TurningModel::uniform(net);
    for l in 0..net.num_links() {
        let outs = net.out_movements(l);
        let total: f64 = outs.iter().map(|&m| counts[m]).sum();
        if total > 0.0 {
            for &m in outs {
                turning.r[m] = counts[m] / total;
            }
        }
    }
    turning
}

/// Mean time in network by Little's law, for runs without vehicle
/// identities. `vehicle_periods` is the queue total summed over periods.
pub fn littles_law_travel_time(vehicle_periods: f64, tau: f64, arrivals: usize) -> Option<f64> {
    (arrivals > 0).then(|| vehicle_periods * tau / arrivals as f64)
}
