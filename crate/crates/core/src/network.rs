//! Road-network topology: intersections, directed links, movements and the
//! four-phase signal model, plus the adjacency queries the dynamics and
//! controllers need (`I(i)`, `O(i)`, `Neg(i)`, `Up_l`, `Do_l`, boundary set).
//!
//! Public identifiers ([`IntersectionId`], [`LinkId`]) are the ids found in
//! roadnet files. Hot paths use dense indices into the network's vectors;
//! intersection index `k` is also agent `k` in the coordination graph.

use std::collections::{HashMap, HashSet, VecDeque};
use std::fmt;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};

/// Default vehicle speed on every link, m/s.
pub const DEFAULT_SPEED_MPS: f64 = 10.0;
/// Saturation flow for right turns, vehicles/period.
pub const RIGHT_TURN_SAT_FLOW: f64 = 3.0;
/// Saturation flow for phased movements, vehicles/period.
pub const DEFAULT_SAT_FLOW: f64 = 5.0;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(transparent)]
pub struct IntersectionId(pub u32);

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(transparent)]
pub struct LinkId(pub u32);

impl fmt::Display for IntersectionId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "intersection {}", self.0)
    }
}

impl fmt::Display for LinkId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "link {}", self.0)
    }
}

/// One of the four signal phases. Encoded 0..3 on disk.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(try_from = "u8", into = "u8")]
pub enum Phase {
    WeStraight = 0,
    WeLeft = 1,
    SnStraight = 2,
    SnLeft = 3,
}

impl Phase {
    pub const ALL: [Phase; 4] = [Phase::WeStraight, Phase::WeLeft, Phase::SnStraight, Phase::SnLeft];
    pub const COUNT: usize = 4;

    #[inline]
    pub fn index(self) -> usize {
        self as usize
    }

    pub fn from_index(idx: usize) -> Option<Phase> {
        Phase::ALL.get(idx).copied()
    }

    pub fn name(self) -> &'static str {
        match self {
            Phase::WeStraight => "WE-Straight",
            Phase::WeLeft => "WE-Left",
            Phase::SnStraight => "SN-Straight",
            Phase::SnLeft => "SN-Left",
        }
    }
}

impl fmt::Display for Phase {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl TryFrom<u8> for Phase {
    type Error = String;

    fn try_from(v: u8) -> std::result::Result<Self, Self::Error> {
        Phase::from_index(v as usize).ok_or_else(|| format!("phase {v} outside 0..3"))
    }
}

impl From<Phase> for u8 {
    fn from(p: Phase) -> u8 {
        p as u8
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LinkKind {
    Entry,
    Internal,
    Exit,
}

/// Direction of travel along a link.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Heading {
    N,
    E,
    S,
    W,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Turn {
    Straight,
    Left,
    Right,
    UTurn,
}

impl Heading {
    fn quarter(self) -> u8 {
        match self {
            Heading::N => 0,
            Heading::E => 1,
            Heading::S => 2,
            Heading::W => 3,
        }
    }

    fn from_quarter(q: u8) -> Heading {
        match q % 4 {
            0 => Heading::N,
            1 => Heading::E,
            2 => Heading::S,
            _ => Heading::W,
        }
    }

    pub fn turned(self, turn: Turn) -> Heading {
        let delta = match turn {
            Turn::Straight => 0,
            Turn::Right => 1,
            Turn::UTurn => 2,
            Turn::Left => 3,
        };
        Heading::from_quarter(self.quarter() + delta)
    }

    pub fn turn_to(self, out: Heading) -> Turn {
        match (out.quarter() + 4 - self.quarter()) % 4 {
            0 => Turn::Straight,
            1 => Turn::Right,
            2 => Turn::UTurn,
            _ => Turn::Left,
        }
    }

    fn is_we(self) -> bool {
        matches!(self, Heading::E | Heading::W)
    }
}

/// Phase that must serve a movement entering with `inbound` heading and
/// making `turn`. `None` for right turns (always served). U-turns have no
/// valid phase assignment in the four-phase model.
pub fn phase_for_turn(inbound: Heading, turn: Turn) -> Option<Option<Phase>> {
    match (turn, inbound.is_we()) {
        (Turn::Right, _) => Some(None),
        (Turn::Straight, true) => Some(Some(Phase::WeStraight)),
        (Turn::Left, true) => Some(Some(Phase::WeLeft)),
        (Turn::Straight, false) => Some(Some(Phase::SnStraight)),
        (Turn::Left, false) => Some(Some(Phase::SnLeft)),
        (Turn::UTurn, _) => None,
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Intersection {
    pub id: IntersectionId,
    #[serde(default)]
    pub x: f64,
    #[serde(default)]
    pub y: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Link {
    pub id: LinkId,
    pub kind: LinkKind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub start: Option<IntersectionId>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub end: Option<IntersectionId>,
    #[serde(rename = "length_m")]
    pub length: f64,
    #[serde(rename = "speed_mps", default = "default_speed")]
    pub free_flow_speed: f64,
    /// Travel direction; only used to check phase/turn consistency.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub heading: Option<Heading>,
}

fn default_speed() -> f64 {
    DEFAULT_SPEED_MPS
}

impl Link {
    /// Whole periods a released vehicle spends on this link before it joins
    /// the downstream queue: `ceil(length / (speed * tau))`, at least 1.
    pub fn traversal_periods(&self, tau: f64) -> usize {
        let p = (self.length / (self.free_flow_speed * tau) - 1e-9).ceil();
        (p.max(1.0)) as usize
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Movement {
    pub from: LinkId,
    pub to: LinkId,
    pub intersection: IntersectionId,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub phase: Option<Phase>,
    #[serde(rename = "sat_flow")]
    pub saturation_flow: f64,
}

#[derive(Serialize, Deserialize)]
struct RoadnetFile {
    intersections: Vec<Intersection>,
    links: Vec<Link>,
    movements: Vec<Movement>,
}

/// A problem found by [`RoadNetwork::validate`].
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Violation {
    pub entity: String,
    pub message: String,
}

impl Violation {
    fn new(entity: impl Into<String>, message: impl Into<String>) -> Self {
        Violation {
            entity: entity.into(),
            message: message.into(),
        }
    }
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}: {}", self.entity, self.message)
    }
}

#[derive(Clone, Debug)]
pub struct RoadNetwork {
    intersections: Vec<Intersection>,
    links: Vec<Link>,
    movements: Vec<Movement>,

    node_index: HashMap<IntersectionId, usize>,
    link_index: HashMap<LinkId, usize>,
    movement_index: HashMap<(usize, usize), usize>,

    link_start: Vec<Option<usize>>,
    link_end: Vec<Option<usize>>,
    mv_from: Vec<usize>,
    mv_to: Vec<usize>,
    mv_node: Vec<usize>,

    inputs: Vec<Vec<usize>>,
    outputs: Vec<Vec<usize>>,
    neighbors: Vec<Vec<usize>>,
    node_movements: Vec<Vec<usize>>,
    out_movements: Vec<Vec<usize>>,
    in_movements: Vec<Vec<usize>>,
    boundary: Vec<bool>,
}

impl PartialEq for RoadNetwork {
    fn eq(&self, other: &Self) -> bool {
        self.intersections == other.intersections && self.links == other.links && self.movements == other.movements
    }
}

impl RoadNetwork {
    /// Assembles a network and its adjacency caches.
    ///
    /// Fails only on structural problems that make the caches impossible to
    /// build (duplicate ids, dangling references). Semantic invariants are
    /// left to [`RoadNetwork::validate`].
    pub fn from_parts(intersections: Vec<Intersection>, links: Vec<Link>, movements: Vec<Movement>) -> Result<Self> {
        let mut node_index = HashMap::with_capacity(intersections.len());
        for (k, n) in intersections.iter().enumerate() {
            if node_index.insert(n.id, k).is_some() {
                return Err(invalid(format!("duplicate {}", n.id)));
            }
        }
        let mut link_index = HashMap::with_capacity(links.len());
        for (k, l) in links.iter().enumerate() {
            if link_index.insert(l.id, k).is_some() {
                return Err(invalid(format!("duplicate {}", l.id)));
            }
        }

        let resolve_node = |id: Option<IntersectionId>, link: LinkId| -> Result<Option<usize>> {
            match id {
                None => Ok(None),
                Some(id) => node_index
                    .get(&id)
                    .copied()
                    .map(Some)
                    .ok_or_else(|| invalid(format!("{link} references unknown {id}"))),
            }
        };
        let mut link_start = Vec::with_capacity(links.len());
        let mut link_end = Vec::with_capacity(links.len());
        for l in &links {
            link_start.push(resolve_node(l.start, l.id)?);
            link_end.push(resolve_node(l.end, l.id)?);
        }

        let n = intersections.len();
        let mut inputs = vec![Vec::new(); n];
        let mut outputs = vec![Vec::new(); n];
        let mut neighbor_sets: Vec<HashSet<usize>> = vec![HashSet::new(); n];
        for k in 0..links.len() {
            if let Some(e) = link_end[k] {
                inputs[e].push(k);
            }
            if let Some(s) = link_start[k] {
                outputs[s].push(k);
            }
            if let (Some(s), Some(e)) = (link_start[k], link_end[k]) {
                if s != e {
                    neighbor_sets[s].insert(e);
                    neighbor_sets[e].insert(s);
                }
            }
        }
        let neighbors: Vec<Vec<usize>> = neighbor_sets
            .into_iter()
            .map(|s| {
                let mut v: Vec<usize> = s.into_iter().collect();
                v.sort_unstable();
                v
            })
            .collect();

        let mut mv_from = Vec::with_capacity(movements.len());
        let mut mv_to = Vec::with_capacity(movements.len());
        let mut mv_node = Vec::with_capacity(movements.len());
        let mut movement_index = HashMap::with_capacity(movements.len());
        let mut node_movements = vec![Vec::new(); n];
        let mut out_movements = vec![Vec::new(); links.len()];
        let mut in_movements = vec![Vec::new(); links.len()];
        for (m, mv) in movements.iter().enumerate() {
            let lookup = |id: LinkId| {
                link_index
                    .get(&id)
                    .copied()
                    .ok_or_else(|| invalid(format!("movement {}->{} references unknown {id}", mv.from.0, mv.to.0)))
            };
            let from = lookup(mv.from)?;
            let to = lookup(mv.to)?;
            let node = *node_index.get(&mv.intersection).ok_or_else(|| {
                invalid(format!(
                    "movement {}->{} references unknown {}",
                    mv.from.0, mv.to.0, mv.intersection
                ))
            })?;
            mv_from.push(from);
            mv_to.push(to);
            mv_node.push(node);
            movement_index.entry((from, to)).or_insert(m);
            node_movements[node].push(m);
            out_movements[from].push(m);
            in_movements[to].push(m);
        }

        let boundary = inputs
            .iter()
            .map(|ins| ins.iter().any(|&l| links[l].kind == LinkKind::Entry))
            .collect();

        Ok(RoadNetwork {
            intersections,
            links,
            movements,
            node_index,
            link_index,
            movement_index,
            link_start,
            link_end,
            mv_from,
            mv_to,
            mv_node,
            inputs,
            outputs,
            neighbors,
            node_movements,
            out_movements,
            in_movements,
            boundary,
        })
    }

    pub fn from_json_str(text: &str) -> Result<Self> {
        let file: RoadnetFile = serde_json::from_str(text)?;
        Self::from_parts(file.intersections, file.links, file.movements)
    }

    pub fn to_json_string(&self) -> Result<String> {
        let file = RoadnetFile {
            intersections: self.intersections.clone(),
            links: self.links.clone(),
            movements: self.movements.clone(),
        };
        Ok(serde_json::to_string_pretty(&file)?)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        fs::write(path, self.to_json_string()?)?;
        Ok(())
    }

    // ---- raw tables -------------------------------------------------------

    pub fn intersections(&self) -> &[Intersection] {
        &self.intersections
    }

    pub fn links(&self) -> &[Link] {
        &self.links
    }

    pub fn movements(&self) -> &[Movement] {
        &self.movements
    }

    pub fn num_intersections(&self) -> usize {
        self.intersections.len()
    }

    pub fn num_links(&self) -> usize {
        self.links.len()
    }

    pub fn num_movements(&self) -> usize {
        self.movements.len()
    }

    // ---- id <-> index -----------------------------------------------------

    pub fn node_idx(&self, id: IntersectionId) -> Option<usize> {
        self.node_index.get(&id).copied()
    }

    pub fn link_idx(&self, id: LinkId) -> Option<usize> {
        self.link_index.get(&id).copied()
    }

    pub fn link(&self, idx: usize) -> &Link {
        &self.links[idx]
    }

    pub fn link_by_id(&self, id: LinkId) -> Option<&Link> {
        self.link_idx(id).map(|k| &self.links[k])
    }

    /// Dense index of movement `(from, to)` given link indices.
    pub fn movement_idx(&self, from: usize, to: usize) -> Option<usize> {
        self.movement_index.get(&(from, to)).copied()
    }

    pub fn movement_by_ids(&self, from: LinkId, to: LinkId) -> Option<usize> {
        self.movement_idx(self.link_idx(from)?, self.link_idx(to)?)
    }

    // ---- movement accessors ---------------------------------------------

    #[inline]
    pub fn mv_from(&self, m: usize) -> usize {
        self.mv_from[m]
    }

    #[inline]
    pub fn mv_to(&self, m: usize) -> usize {
        self.mv_to[m]
    }

    #[inline]
    pub fn mv_node(&self, m: usize) -> usize {
        self.mv_node[m]
    }

    #[inline]
    pub fn mv_phase(&self, m: usize) -> Option<Phase> {
        self.movements[m].phase
    }

    #[inline]
    pub fn mv_sat_flow(&self, m: usize) -> f64 {
        self.movements[m].saturation_flow
    }

    /// Whether movement `m` receives green when its intersection runs `phase`.
    #[inline]
    pub fn is_served(&self, m: usize, phase: Phase) -> bool {
        self.movements[m].phase.is_none_or(|p| p == phase)
    }

    // ---- adjacency --------------------------------------------------------

    #[inline]
    pub fn link_start(&self, l: usize) -> Option<usize> {
        self.link_start[l]
    }

    #[inline]
    pub fn link_end(&self, l: usize) -> Option<usize> {
        self.link_end[l]
    }

    /// `I(i)`: links entering intersection `i`.
    pub fn inputs(&self, node: usize) -> &[usize] {
        &self.inputs[node]
    }

    /// `O(i)`: links leaving intersection `i`.
    pub fn outputs(&self, node: usize) -> &[usize] {
        &self.outputs[node]
    }

    /// `Neg(i)`, sorted by index.
    pub fn neighbors(&self, node: usize) -> &[usize] {
        &self.neighbors[node]
    }

    /// Movements controlled by intersection `node`.
    pub fn node_movements(&self, node: usize) -> &[usize] {
        &self.node_movements[node]
    }

    /// Movements `(l, ·)` that drain link `l`.
    pub fn out_movements(&self, link: usize) -> &[usize] {
        &self.out_movements[link]
    }

    /// Movements `(·, l)` that feed link `l`.
    pub fn in_movements(&self, link: usize) -> &[usize] {
        &self.in_movements[link]
    }

    /// `Do_l`.
    pub fn downstream(&self, link: usize) -> impl Iterator<Item = usize> + '_ {
        self.out_movements[link].iter().map(|&m| self.mv_to[m])
    }

    /// `Up_l`.
    pub fn upstream(&self, link: usize) -> impl Iterator<Item = usize> + '_ {
        self.in_movements[link].iter().map(|&m| self.mv_from[m])
    }

    pub fn is_boundary(&self, node: usize) -> bool {
        self.boundary[node]
    }

    /// `N_B`.
    pub fn boundary_nodes(&self) -> impl Iterator<Item = usize> + '_ {
        (0..self.intersections.len()).filter(|&k| self.boundary[k])
    }

    pub fn links_of_kind(&self, kind: LinkKind) -> impl Iterator<Item = usize> + '_ {
        (0..self.links.len()).filter(move |&k| self.links[k].kind == kind)
    }

    pub fn entry_links(&self) -> Vec<usize> {
        self.links_of_kind(LinkKind::Entry).collect()
    }

    pub fn exit_links(&self) -> Vec<usize> {
        self.links_of_kind(LinkKind::Exit).collect()
    }

    /// Internal links running from intersection `from` to intersection `to`.
    pub fn links_between(&self, from: usize, to: usize) -> impl Iterator<Item = usize> + '_ {
        self.outputs[from]
            .iter()
            .copied()
            .filter(move |&l| self.link_end[l] == Some(to))
    }

    // ---- validation -------------------------------------------------------

    /// Checks every topology invariant; returns one entry per violation.
    pub fn validate(&self) -> Vec<Violation> {
        let mut out = Vec::new();
        if self.intersections.is_empty() {
            out.push(Violation::new("network", "has no intersections"));
        }

        for l in &self.links {
            let ent = l.id.to_string();
            match (l.kind, l.start, l.end) {
                (LinkKind::Entry, None, Some(_))
                | (LinkKind::Exit, Some(_), None)
                | (LinkKind::Internal, Some(_), Some(_)) => {}
                (kind, start, end) => out.push(Violation::new(
                    &ent,
                    format!(
                        "{kind:?} link has start={} end={}",
                        start.map_or("none".into(), |s| s.0.to_string()),
                        end.map_or("none".into(), |e| e.0.to_string())
                    ),
                )),
            }
            if l.kind == LinkKind::Internal && l.start.is_some() && l.start == l.end {
                out.push(Violation::new(
                    &ent,
                    "internal link starts and ends at the same intersection",
                ));
            }
            if !(l.length > 0.0 && l.length.is_finite()) {
                out.push(Violation::new(&ent, format!("length {} is not positive", l.length)));
            }
            if !(l.free_flow_speed > 0.0 && l.free_flow_speed.is_finite()) {
                out.push(Violation::new(
                    &ent,
                    format!("free-flow speed {} is not positive", l.free_flow_speed),
                ));
            }
        }

        let mut seen = HashSet::new();
        for (m, mv) in self.movements.iter().enumerate() {
            let ent = format!("movement {}->{}", mv.from.0, mv.to.0);
            let (from, to, node) = (self.mv_from[m], self.mv_to[m], self.mv_node[m]);
            if !seen.insert((from, to)) {
                out.push(Violation::new(&ent, "duplicate movement"));
            }
            if self.link_end[from] != Some(node) {
                out.push(Violation::new(
                    &ent,
                    format!("{} is not an input of {}", mv.from, mv.intersection),
                ));
            }
            if self.link_start[to] != Some(node) {
                out.push(Violation::new(
                    &ent,
                    format!("{} is not an output of {}", mv.to, mv.intersection),
                ));
            }
            if !(mv.saturation_flow >= 0.0 && mv.saturation_flow.is_finite()) {
                out.push(Violation::new(
                    &ent,
                    format!("saturation flow {} is negative", mv.saturation_flow),
                ));
            }
            if let (Some(hin), Some(hout)) = (self.links[from].heading, self.links[to].heading) {
                let turn = hin.turn_to(hout);
                match phase_for_turn(hin, turn) {
                    None => out.push(Violation::new(&ent, "U-turn movements cannot be phased")),
                    Some(expected) if expected != mv.phase => out.push(Violation::new(
                        &ent,
                        format!(
                            "{turn:?} turn heading {hin:?} must be {} but is {}",
                            expected.map_or("unphased", Phase::name),
                            mv.phase.map_or("unphased", Phase::name)
                        ),
                    )),
                    Some(_) => {}
                }
            }
        }

        if let Some(unreached) = self.unreachable_from_first() {
            out.push(Violation::new(
                "network",
                format!(
                    "intersection graph is disconnected ({} of {} intersections unreachable)",
                    unreached,
                    self.intersections.len()
                ),
            ));
        }
        out
    }

    fn unreachable_from_first(&self) -> Option<usize> {
        let n = self.intersections.len();
        if n == 0 {
            return None;
        }
        let mut seen = vec![false; n];
        let mut queue = VecDeque::from([0]);
        seen[0] = true;
        let mut count = 1;
        while let Some(u) = queue.pop_front() {
            for &v in &self.neighbors[u] {
                if !seen[v] {
                    seen[v] = true;
                    count += 1;
                    queue.push_back(v);
                }
            }
        }
        (count < n).then_some(n - count)
    }
}

/// Reads and validates a roadnet JSON file.
pub fn load_network(path: impl AsRef<Path>) -> Result<RoadNetwork> {
    let path = path.as_ref();
    let load_err = |reason: String| Error::Load {
        path: path.to_path_buf(),
        reason,
    };
    let text = fs::read_to_string(path).map_err(|e| load_err(e.to_string()))?;
    if text.trim().is_empty() {
        return Err(load_err("file is empty".into()));
    }
    let net = RoadNetwork::from_json_str(&text).map_err(|e| load_err(e.to_string()))?;
    let violations = net.validate();
    if !violations.is_empty() {
        let listed: Vec<String> = violations.iter().map(|v| v.to_string()).collect();
        return Err(load_err(listed.join("; ")));
    }
    Ok(net)
}

/// Builds a `rows x cols` grid of four-way, bi-directional intersections.
///
/// Intersection `(r, c)` has id `r * cols + c` and sits at
/// `(c * h_len, r * v_len)`; row indices grow northward. Every approach that
/// has no internal neighbour gets an entry/exit stub so all intersections
/// carry the same 12 movements. Phased movements get `sat_flow`; right turns
/// get [`RIGHT_TURN_SAT_FLOW`].
pub fn build_grid(rows: usize, cols: usize, h_len: f64, v_len: f64, sat_flow: f64) -> Result<RoadNetwork> {
    if rows == 0 || cols == 0 {
        return Err(invalid(format!(
            "grid must have at least one row and column, got {rows}x{cols}"
        )));
    }
    if !(h_len > 0.0 && v_len > 0.0) {
        return Err(invalid("grid link lengths must be positive"));
    }
    if sat_flow.is_nan() || sat_flow < 0.0 {
        return Err(invalid("saturation flow must be non-negative"));
    }

    let node_id = |r: usize, c: usize| IntersectionId((r * cols + c) as u32);
    let intersections: Vec<Intersection> = (0..rows)
        .flat_map(|r| {
            (0..cols).map(move |c| Intersection {
                id: node_id(r, c),
                x: c as f64 * h_len,
                y: r as f64 * v_len,
            })
        })
        .collect();

    let mut links: Vec<Link> = Vec::new();
    let mut push = |kind, start, end, length, heading| {
        let id = LinkId(links.len() as u32);
        links.push(Link {
            id,
            kind,
            start,
            end,
            length,
            free_flow_speed: DEFAULT_SPEED_MPS,
            heading: Some(heading),
        });
    };

    for r in 0..rows {
        for c in 0..cols {
            if c + 1 < cols {
                push(
                    LinkKind::Internal,
                    Some(node_id(r, c)),
                    Some(node_id(r, c + 1)),
                    h_len,
                    Heading::E,
                );
                push(
                    LinkKind::Internal,
                    Some(node_id(r, c + 1)),
                    Some(node_id(r, c)),
                    h_len,
                    Heading::W,
                );
            }
            if r + 1 < rows {
                push(
                    LinkKind::Internal,
                    Some(node_id(r, c)),
                    Some(node_id(r + 1, c)),
                    v_len,
                    Heading::N,
                );
                push(
                    LinkKind::Internal,
                    Some(node_id(r + 1, c)),
                    Some(node_id(r, c)),
                    v_len,
                    Heading::S,
                );
            }
        }
    }
    for r in 0..rows {
        for c in 0..cols {
            let here = Some(node_id(r, c));
            // (side is open, heading of traffic arriving from that side, stub length)
            let sides = [
                (c == 0, Heading::E, h_len),
                (c + 1 == cols, Heading::W, h_len),
                (r == 0, Heading::N, v_len),
                (r + 1 == rows, Heading::S, v_len),
            ];
            for (open, inbound, len) in sides {
                if open {
                    push(LinkKind::Entry, None, here, len, inbound);
                    push(LinkKind::Exit, here, None, len, inbound.turned(Turn::UTurn));
                }
            }
        }
    }

    let mut by_node: Vec<(Vec<usize>, HashMap<Heading, usize>)> =
        vec![(Vec::new(), HashMap::new()); intersections.len()];
    for (k, l) in links.iter().enumerate() {
        if let Some(e) = l.end {
            by_node[e.0 as usize].0.push(k);
        }
        if let (Some(s), Some(h)) = (l.start, l.heading) {
            by_node[s.0 as usize].1.insert(h, k);
        }
    }

    let mut movements = Vec::with_capacity(intersections.len() * 12);
    for (node, (ins, outs)) in by_node.iter().enumerate() {
        for &l in ins {
            let hin = links[l].heading.expect("grid links carry headings");
            for turn in [Turn::Straight, Turn::Left, Turn::Right] {
                let h = outs[&hin.turned(turn)];
                let phase = phase_for_turn(hin, turn).flatten();
                movements.push(Movement {
                    from: links[l].id,
                    to: links[h].id,
                    intersection: IntersectionId(node as u32),
                    phase,
                    saturation_flow: if phase.is_some() { sat_flow } else { RIGHT_TURN_SAT_FLOW },
                });
            }
        }
    }

    RoadNetwork::from_parts(intersections, links, movements)
}
