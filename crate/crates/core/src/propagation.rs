//! Model relay over the ring-of-stars topology.
//!
//! The forwarding rules live here as small pure functions so the event-driven
//! engine and the closed-form planners below make identical decisions:
//!
//! * HAP ring, global model: the source sends to both ring neighbours, every
//!   other HAP forwards to its next hop away from the sender, the sink never
//!   forwards.
//! * Orbit ring, global model: a satellite forwards a version only on first
//!   receipt, to both neighbours when it came from a HAP and to the far
//!   neighbour when it came over an ISL.
//! * Orbit ring, local update: direct upload when a HAP is visible, otherwise
//!   two outward fronts capped at `ceil(N_o / 2)` hops.
//! * HAP ring, bundles: hop by hop along the shorter arc to the sink.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use rand::Rng;

use crate::aggregation::LocalUpdate;
use crate::error::{invalid, Result};
use crate::orbital::{NodeSpec, SatelliteId};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Endpoint {
    /// Index into the run's node list.
    Node(usize),
    Sat(SatelliteId),
}

impl fmt::Display for Endpoint {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Endpoint::Node(i) => write!(f, "node-{i}"),
            Endpoint::Sat(s) => write!(f, "{s}"),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MessageKind {
    GlobalModel,
    LocalUpdate,
    Bundle,
}

impl MessageKind {
    pub fn as_str(self) -> &'static str {
        match self {
            MessageKind::GlobalModel => "global_model",
            MessageKind::LocalUpdate => "local_update",
            MessageKind::Bundle => "bundle",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TimedMessage {
    pub kind: MessageKind,
    pub payload_bits: f64,
    pub src: Endpoint,
    pub dst: Endpoint,
    pub send_time: f64,
    pub arrive_time: f64,
}

/// Wire sizes for models and metadata.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PayloadSizes {
    pub bits_per_param: f64,
    pub metadata_bits: f64,
}

impl Default for PayloadSizes {
    fn default() -> Self {
        Self {
            bits_per_param: 32.0,
            metadata_bits: 256.0,
        }
    }
}

impl PayloadSizes {
    pub fn model_bits(&self, dim: usize) -> f64 {
        dim as f64 * self.bits_per_param
    }

    pub fn update_bits(&self, dim: usize) -> f64 {
        self.model_bits(dim) + self.metadata_bits
    }

    pub fn bundle_bits(&self, updates: &[LocalUpdate]) -> f64 {
        updates.iter().map(|u| self.update_bits(u.model.dim())).sum::<f64>() + self.metadata_bits
    }
}

/// The HAP backbone: ring positions ordered by longitude, with the current
/// source and sink positions.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct HapRing {
    /// Node-list indices in ring order.
    pub members: Vec<usize>,
    pub source: usize,
    pub sink: usize,
}

impl HapRing {
    pub fn len(&self) -> usize {
        self.members.len()
    }

    pub fn is_empty(&self) -> bool {
        self.members.is_empty()
    }

    pub fn node_at(&self, pos: usize) -> usize {
        self.members[pos]
    }

    pub fn position_of(&self, node: usize) -> Option<usize> {
        self.members.iter().position(|&m| m == node)
    }

    pub fn source_node(&self) -> usize {
        self.members[self.source]
    }

    pub fn sink_node(&self) -> usize {
        self.members[self.sink]
    }

    /// Distinct ring neighbours of a position (none for a single node).
    pub fn neighbors(&self, pos: usize) -> Vec<usize> {
        ring_neighbors(self.len(), pos)
    }

    /// Positions a HAP forwards the global model to, given where it came
    /// from (`None` at the source).
    pub fn global_forward_targets(&self, pos: usize, from: Option<usize>) -> Vec<usize> {
        if pos == self.sink && self.len() > 1 {
            return Vec::new();
        }
        match from {
            None => self.neighbors(pos),
            Some(f) => self.neighbors(pos).into_iter().filter(|&n| n != f).collect(),
        }
    }

    /// Positions from `pos` to the sink along the shorter arc, excluding
    /// `pos`. Ties go in increasing ring order.
    pub fn path_to_sink(&self, pos: usize) -> Vec<usize> {
        let n = self.len();
        let forward = (self.sink + n - pos) % n;
        let backward = (pos + n - self.sink) % n;
        if forward <= backward {
            (1..=forward).map(|k| (pos + k) % n).collect()
        } else {
            (1..=backward).map(|k| (pos + n - k) % n).collect()
        }
    }
}

/// Distinct neighbours of `slot` on a ring of `n`.
pub fn ring_neighbors(n: usize, slot: usize) -> Vec<usize> {
    match n {
        0 | 1 => Vec::new(),
        2 => vec![1 - slot],
        _ => vec![(slot + n - 1) % n, (slot + 1) % n],
    }
}

/// Orders the parameter servers by longitude, makes the first the source and
/// the node farthest along the ring the sink.
pub fn plan_ring(nodes: &[NodeSpec]) -> Result<HapRing> {
    if nodes.is_empty() {
        return Err(invalid("a ring needs at least one parameter server"));
    }
    let mut members: Vec<usize> = (0..nodes.len()).collect();
    members.sort_by(|&a, &b| {
        nodes[a]
            .longitude
            .total_cmp(&nodes[b].longitude)
            .then(nodes[a].id.cmp(&nodes[b].id))
    });
    let sink = members.len() / 2;
    Ok(HapRing {
        members,
        source: 0,
        sink,
    })
}

/// Source and sink exchange roles.
pub fn swap_roles(ring: &HapRing) -> HapRing {
    HapRing {
        source: ring.sink,
        sink: ring.source,
        ..ring.clone()
    }
}

/// Dissemination of one global version over the backbone starting at `t`.
/// `edge_delay(a, b)` is the backbone delay between ring positions;
/// `visible(pos, t)` lists the satellites in view of a HAP at time `t`.
pub fn relay_global_hap(
    ring: &HapRing,
    payload_bits: f64,
    t: f64,
    edge_delay: impl Fn(usize, usize) -> f64,
    visible: impl Fn(usize, f64) -> Vec<SatelliteId>,
    sat_delay: impl Fn(usize, SatelliteId, f64) -> Option<f64>,
) -> Vec<TimedMessage> {
    let mut out = Vec::new();
    let mut handled = BTreeSet::new();
    // (arrival time, position, came from)
    let mut queue: Vec<(f64, usize, Option<usize>)> = vec![(t, ring.source, None)];
    while let Some(idx) = next_earliest(&queue) {
        let (at, pos, from) = queue.swap_remove(idx);
        if !handled.insert(pos) {
            continue;
        }
        for target in ring.global_forward_targets(pos, from) {
            let arrive = at + edge_delay(pos, target);
            out.push(TimedMessage {
                kind: MessageKind::GlobalModel,
                payload_bits,
                src: Endpoint::Node(ring.node_at(pos)),
                dst: Endpoint::Node(ring.node_at(target)),
                send_time: at,
                arrive_time: arrive,
            });
            queue.push((arrive, target, Some(pos)));
        }
        for sat in visible(pos, at) {
            if let Some(d) = sat_delay(pos, sat, at) {
                out.push(TimedMessage {
                    kind: MessageKind::GlobalModel,
                    payload_bits,
                    src: Endpoint::Node(ring.node_at(pos)),
                    dst: Endpoint::Sat(sat),
                    send_time: at,
                    arrive_time: at + d,
                });
            }
        }
    }
    out
}

fn next_earliest(queue: &[(f64, usize, Option<usize>)]) -> Option<usize> {
    (0..queue.len()).min_by(|&a, &b| {
        queue[a]
            .0
            .total_cmp(&queue[b].0)
            .then(queue[a].1.cmp(&queue[b].1))
    })
}

/// Where a satellite that has just received a global version for the first
/// time sends it: both neighbours if it came from a HAP, else the far one.
pub fn global_relay_targets(num_sats: usize, slot: usize, from_slot: Option<usize>) -> Vec<usize> {
    let neighbors = ring_neighbors(num_sats, slot);
    match from_slot {
        None => neighbors,
        Some(f) => neighbors.into_iter().filter(|&n| n != f).collect(),
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RelaySchedule {
    pub messages: Vec<TimedMessage>,
    /// Hop count at which each slot first held the version.
    pub first_receipt: BTreeMap<usize, usize>,
    /// Slots that stopped the relay because the version arrived again.
    pub cease: BTreeSet<usize>,
}

/// Spreads one global version through an orbit from the satellites that got
/// it directly from a HAP, with a uniform per-hop delay.
pub fn intra_orbit_relay(
    orbit: usize,
    num_sats: usize,
    seeds: &BTreeSet<usize>,
    payload_bits: f64,
    t0: f64,
    hop_delay: f64,
) -> RelaySchedule {
    let mut messages = Vec::new();
    let mut first_receipt = BTreeMap::new();
    let mut cease = BTreeSet::new();
    // (slot, came from) pairs that hold the version and still have to act
    let mut frontier: Vec<(usize, Option<usize>)> = Vec::new();
    for &s in seeds.iter().filter(|&&s| s < num_sats) {
        first_receipt.insert(s, 0);
        frontier.push((s, None));
    }
    let mut hop = 0;
    while !frontier.is_empty() {
        let send_time = t0 + hop as f64 * hop_delay;
        let mut arrivals: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
        for &(slot, from) in &frontier {
            for target in global_relay_targets(num_sats, slot, from) {
                messages.push(TimedMessage {
                    kind: MessageKind::GlobalModel,
                    payload_bits,
                    src: Endpoint::Sat(SatelliteId::new(orbit, slot)),
                    dst: Endpoint::Sat(SatelliteId::new(orbit, target)),
                    send_time,
                    arrive_time: send_time + hop_delay,
                });
                arrivals.entry(target).or_default().push(slot);
            }
        }
        hop += 1;
        let mut next = Vec::new();
        for (slot, senders) in arrivals {
            if first_receipt.contains_key(&slot) || senders.len() > 1 {
                cease.insert(slot);
            }
            if first_receipt.contains_key(&slot) {
                continue;
            }
            first_receipt.insert(slot, hop);
            if senders.len() == 1 {
                next.push((slot, Some(senders[0])));
            }
        }
        frontier = next;
    }
    RelaySchedule {
        messages,
        first_receipt,
        cease,
    }
}

/// Hop limit for each local-update front.
pub fn update_hop_cap(num_sats: usize) -> usize {
    num_sats.div_ceil(2)
}

/// Next slot for a local update travelling outward from `prev` through `slot`.
pub fn outward_next(num_sats: usize, prev: usize, slot: usize) -> usize {
    if num_sats == 0 {
        return slot;
    }
    (2 * slot + num_sats - prev) % num_sats
}

/// Picks one of the visible HAPs uniformly with the run's PRNG.
pub fn choose_hap<R: Rng + ?Sized>(visible: &[usize], rng: &mut R) -> Option<usize> {
    match visible.len() {
        0 => None,
        1 => Some(visible[0]),
        n => Some(visible[rng.random_range(0..n)]),
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct DeliveryPlan {
    pub messages: Vec<TimedMessage>,
    /// `(node, arrival time)` of every upload.
    pub uploads: Vec<(usize, f64)>,
    /// Satellites left holding a copy for a later contact.
    pub held_by: Vec<SatelliteId>,
}

/// Routes a freshly trained update from `origin` at time `t` with uniform hop
/// and upload delays. `visible(sat, t)` lists node indices in view.
#[allow(clippy::too_many_arguments)]
pub fn route_local_update<R: Rng + ?Sized>(
    origin: SatelliteId,
    num_sats: usize,
    payload_bits: f64,
    t: f64,
    hop_delay: f64,
    upload_delay: f64,
    visible: impl Fn(SatelliteId, f64) -> Vec<usize>,
    rng: &mut R,
) -> DeliveryPlan {
    let mut plan = DeliveryPlan::default();
    let upload = |plan: &mut DeliveryPlan, sat: SatelliteId, at: f64, hap: usize| {
        plan.messages.push(TimedMessage {
            kind: MessageKind::LocalUpdate,
            payload_bits,
            src: Endpoint::Sat(sat),
            dst: Endpoint::Node(hap),
            send_time: at,
            arrive_time: at + upload_delay,
        });
        plan.uploads.push((hap, at + upload_delay));
    };
    if let Some(hap) = choose_hap(&visible(origin, t), rng) {
        upload(&mut plan, origin, t, hap);
        return plan;
    }
    plan.held_by.push(origin);
    let cap = update_hop_cap(num_sats);
    for first in ring_neighbors(num_sats, origin.slot) {
        let (mut prev, mut cur, mut hops, mut at) = (origin.slot, first, 1, t);
        loop {
            plan.messages.push(TimedMessage {
                kind: MessageKind::LocalUpdate,
                payload_bits,
                src: Endpoint::Sat(SatelliteId::new(origin.orbit, prev)),
                dst: Endpoint::Sat(SatelliteId::new(origin.orbit, cur)),
                send_time: at,
                arrive_time: at + hop_delay,
            });
            at += hop_delay;
            let here = SatelliteId::new(origin.orbit, cur);
            if let Some(hap) = choose_hap(&visible(here, at), rng) {
                upload(&mut plan, here, at, hap);
                break;
            }
            if hops >= cap {
                plan.held_by.push(here);
                break;
            }
            let next = outward_next(num_sats, prev, cur);
            prev = cur;
            cur = next;
            hops += 1;
        }
    }
    plan
}

/// Every non-sink HAP's buffer travels to the sink along the shorter arc,
/// one message per hop. `buffers` is keyed by ring position.
pub fn forward_buffers_to_sink(
    ring: &HapRing,
    buffers: &BTreeMap<usize, Vec<LocalUpdate>>,
    sizes: &PayloadSizes,
    t: f64,
    edge_delay: impl Fn(usize, usize, f64) -> f64,
) -> Vec<TimedMessage> {
    let mut out = Vec::new();
    for (&pos, updates) in buffers {
        if pos == ring.sink || ring.len() < 2 {
            continue;
        }
        let bits = sizes.bundle_bits(updates);
        let (mut at, mut here) = (t, pos);
        for next in ring.path_to_sink(pos) {
            let arrive = at + edge_delay(here, next, bits);
            out.push(TimedMessage {
                kind: MessageKind::Bundle,
                payload_bits: bits,
                src: Endpoint::Node(ring.node_at(here)),
                dst: Endpoint::Node(ring.node_at(next)),
                send_time: at,
                arrive_time: arrive,
            });
            at = arrive;
            here = next;
        }
    }
    out
}
