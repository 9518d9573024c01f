use std::collections::{HashMap, VecDeque};
use std::path::Path;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::network::{LinkId, LinkKind, RoadNetwork};

/// RNG stream reserved for flow generation and route tie-breaks.
pub(crate) const FLOW_STREAM: u64 = 1;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Vehicle {
    pub id: u64,
    pub origin: LinkId,
    pub depart_time: f64,
    pub destination: LinkId,
    pub route: Vec<LinkId>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub enter_time: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub exit_time: Option<f64>,
}

impl Vehicle {
    /// Resolves the route to dense link indices, checking it against the
    /// network.
    pub fn route_indices(&self, net: &RoadNetwork) -> Result<Vec<usize>> {
        let bad = |why: String| invalid(format!("vehicle {}: {why}", self.id));
        if self.route.len() < 2 {
            return Err(bad("route needs at least an entry and an exit link".into()));
        }
        if self.route.first() != Some(&self.origin) || self.route.last() != Some(&self.destination) {
            return Err(bad("route must start at the origin and end at the destination".into()));
        }
        let links = self
            .route
            .iter()
            .map(|&id| net.link_idx(id).ok_or_else(|| bad(format!("unknown link {}", id.0))))
            .collect::<Result<Vec<_>>>()?;
        if net.link(links[0]).kind != LinkKind::Entry {
            return Err(bad("origin is not an entry link".into()));
        }
        if net.link(links[links.len() - 1]).kind != LinkKind::Exit {
            return Err(bad("destination is not an exit link".into()));
        }
        for w in links.windows(2) {
            if net.movement_idx(w[0], w[1]).is_none() {
                return Err(bad(format!(
                    "no movement from link {} to link {}",
                    net.link(w[0]).id.0,
                    net.link(w[1]).id.0
                )));
            }
        }
        Ok(links)
    }

    /// The flow-file entry this vehicle was generated from.
    pub fn record(&self) -> VehicleRecord {
        VehicleRecord {
            id: self.id,
            origin: self.origin,
            depart_s: self.depart_time,
            destination: self.destination,
        }
    }

    pub fn travel_time(&self, end_time: f64) -> f64 {
        self.exit_time.unwrap_or(end_time) - self.depart_time
    }
}

/// One entry of an explicit flow file; routes are computed on load.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct VehicleRecord {
    pub id: u64,
    pub origin: LinkId,
    pub depart_s: f64,
    pub destination: LinkId,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum FlowSpec {
    Vehicles(Vec<VehicleRecord>),
    Rate { rate_vps: f64, duration_s: f64, seed: u64 },
}

impl FlowSpec {
    pub fn to_json_string(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn realize(&self, net: &RoadNetwork) -> Result<Vec<Vehicle>> {
        match self {
            FlowSpec::Vehicles(records) => route_vehicles(net, records, 0),
            &FlowSpec::Rate {
                rate_vps,
                duration_s,
                seed,
            } => generate_uniform_flow(net, rate_vps, duration_s, seed),
        }
    }
}

pub fn load_flow(path: impl AsRef<Path>, net: &RoadNetwork) -> Result<Vec<Vehicle>> {
    let path = path.as_ref();
    let load_err = |reason: String| Error::Load {
        path: path.to_path_buf(),
        reason,
    };
    let text = std::fs::read_to_string(path).map_err(|e| load_err(e.to_string()))?;
    let spec: FlowSpec = serde_json::from_str(&text).map_err(|e| load_err(e.to_string()))?;
    spec.realize(net).map_err(|e| load_err(e.to_string()))
}

/// Hop-count shortest paths between links, with a cached distance-to-target
/// table per destination.
pub struct Router<'a> {
    net: &'a RoadNetwork,
    to_dest: HashMap<usize, Vec<u32>>,
}

impl<'a> Router<'a> {
    pub fn new(net: &'a RoadNetwork) -> Self {
        Router {
            net,
            to_dest: HashMap::new(),
        }
    }

    fn distances(&mut self, dest: usize) -> &[u32] {
        let net = self.net;
        self.to_dest.entry(dest).or_insert_with(|| {
            let mut dist = vec![u32::MAX; net.num_links()];
            dist[dest] = 0;
            let mut queue = VecDeque::from([dest]);
            while let Some(l) = queue.pop_front() {
                for u in net.upstream(l) {
                    if dist[u] == u32::MAX {
                        dist[u] = dist[l] + 1;
                        queue.push_back(u);
                    }
                }
            }
            dist
        })
    }

    /// A shortest route from `origin` to `dest` as link indices. Among equal
    /// length continuations, `rng` picks one uniformly; without it the
    /// lowest link index wins.
    pub fn route(&mut self, origin: usize, dest: usize, mut rng: Option<&mut ChaCha8Rng>) -> Option<Vec<usize>> {
        let net = self.net;
        let dist = self.distances(dest);
        if dist[origin] == u32::MAX {
            return None;
        }
        let mut route = vec![origin];
        let mut at = origin;
        while at != dest {
            let mut next: Vec<usize> = net
                .downstream(at)
                .filter(|&h| dist[h].checked_add(1) == Some(dist[at]))
                .collect();
            next.sort_unstable();
            at = match rng.as_deref_mut() {
                Some(r) => next[r.random_range(0..next.len())],
                None => next[0],
            };
            route.push(at);
        }
        Some(route)
    }

    pub fn reachable(&mut self, origin: usize, dest: usize) -> bool {
        self.distances(dest)[origin] != u32::MAX
    }
}

fn flow_rng(seed: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(FLOW_STREAM);
    rng
}

/// Attaches shortest routes to explicit vehicle records.
pub fn route_vehicles(net: &RoadNetwork, records: &[VehicleRecord], seed: u64) -> Result<Vec<Vehicle>> {
    let mut rng = flow_rng(seed);
    let mut router = Router::new(net);
    records
        .iter()
        .map(|rec| {
            let find = |id: LinkId, kind: LinkKind, what: &str| {
                net.link_idx(id)
                    .filter(|&l| net.link(l).kind == kind)
                    .ok_or_else(|| invalid(format!("vehicle {}: {what} {} is not a {kind:?} link", rec.id, id.0)))
            };
            let o = find(rec.origin, LinkKind::Entry, "origin")?;
            let d = find(rec.destination, LinkKind::Exit, "destination")?;
            if !(rec.depart_s.is_finite() && rec.depart_s >= 0.0) {
                return Err(invalid(format!(
                    "vehicle {}: bad departure time {}",
                    rec.id, rec.depart_s
                )));
            }
            let route = router
                .route(o, d, Some(&mut rng))
                .ok_or_else(|| Error::Topology(format!("vehicle {}: destination unreachable from origin", rec.id)))?;
            Ok(Vehicle {
                id: rec.id,
                origin: rec.origin,
                depart_time: rec.depart_s,
                destination: rec.destination,
                route: route.iter().map(|&l| net.link(l).id).collect(),
                enter_time: None,
                exit_time: None,
            })
        })
        .collect()
}

/// `floor(rate * duration)` vehicles departing every `1/rate` seconds.
/// Origins cycle over a shuffled list of entry links; each destination is
/// drawn uniformly from the exit links reachable from the origin.
pub fn generate_uniform_flow(net: &RoadNetwork, rate: f64, duration: f64, seed: u64) -> Result<Vec<Vehicle>> {
    if !(rate > 0.0 && rate.is_finite()) {
        return Err(invalid(format!("arrival rate must be positive, got {rate}")));
    }
    if !(duration >= 0.0 && duration.is_finite()) {
        return Err(invalid(format!("duration must be non-negative, got {duration}")));
    }
    let mut entries = net.entry_links();
    let exits = net.exit_links();
    if entries.is_empty() || exits.is_empty() {
        return Err(invalid("network needs at least one entry and one exit link"));
    }
    let mut rng = flow_rng(seed);
    entries.shuffle(&mut rng);

    let mut router = Router::new(net);
    let mut reachable: Vec<Vec<usize>> = Vec::with_capacity(entries.len());
    for &o in &entries {
        let r: Vec<usize> = exits.iter().copied().filter(|&d| router.reachable(o, d)).collect();
        if r.is_empty() {
            return Err(Error::Topology(format!(
                "entry link {} reaches no exit",
                net.link(o).id.0
            )));
        }
        reachable.push(r);
    }

    let n = (rate * duration + 1e-9).floor() as usize;
    let mut vehicles = Vec::with_capacity(n);
    for k in 0..n {
        let slot = k % entries.len();
        let o = entries[slot];
        let d = reachable[slot][rng.random_range(0..reachable[slot].len())];
        let route = router
            .route(o, d, Some(&mut rng))
            .expect("destination checked reachable");
        vehicles.push(Vehicle {
            id: k as u64,
            origin: net.link(o).id,
            depart_time: k as f64 / rate,
            destination: net.link(d).id,
            route: route.iter().map(|&l| net.link(l).id).collect(),
            enter_time: None,
            exit_time: None,
        });
    }
    Ok(vehicles)
}
