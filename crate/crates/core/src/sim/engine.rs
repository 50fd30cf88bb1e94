use std::cmp::{Ordering, Reverse};
use std::collections::{BTreeMap, BTreeSet, BinaryHeap};
use std::rc::Rc;

use serde_json::{json, Value};

use super::{evaluate_global, training_seed, LogRecord, MetricsRecord, Mode, Prepared, RunConfig, RunOutput};
use crate::aggregation::{Aggregator, GroupingEvent, LocalUpdate, SatMetadata};
use crate::error::{Error, Result};
use crate::fl::{fedavg, local_train, ModelParams, TrainConfig};
use crate::link::{backbone_delay, transfer_delay};
use crate::orbital::{
    argument_of_latitude, node_position, satellite_position, visibility_windows, EciPosition,
    SatelliteId,
};
use crate::propagation::{
    choose_hap, global_relay_targets, outward_next, plan_ring, ring_neighbors, swap_roles,
    update_hop_cap, Endpoint, HapRing, MessageKind,
};
use crate::rng::{self, StreamRng};

enum Event {
    Contact { sat: usize, node: usize, enter: bool },
    Arrival(Message),
    TrainingDone { sat: usize, version: u64 },
    CollectionTimeout { node: usize, version: u64 },
    AggregationDone,
}

struct Queued {
    time: f64,
    seq: u64,
    event: Event,
}

impl PartialEq for Queued {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}

impl Eq for Queued {}

impl PartialOrd for Queued {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for Queued {
    fn cmp(&self, other: &Self) -> Ordering {
        self.time.total_cmp(&other.time).then(self.seq.cmp(&other.seq))
    }
}

struct Message {
    kind: MessageKind,
    src: Endpoint,
    dst: Endpoint,
    send_time: f64,
    bits: f64,
    body: Body,
}

enum Body {
    Global {
        version: u64,
        model: Rc<ModelParams>,
    },
    /// `relay` is `(previous slot, hops so far)` for an inter-satellite hop.
    Update {
        update: LocalUpdate,
        relay: Option<(usize, usize)>,
    },
    Bundle {
        version: u64,
        from_pos: usize,
        updates: Vec<LocalUpdate>,
    },
}

struct Held {
    update: LocalUpdate,
    transmitted: bool,
}

#[derive(Default)]
struct SatState {
    version: Option<u64>,
    model: Option<Rc<ModelParams>>,
    training: Option<Rc<ModelParams>>,
    visible: BTreeSet<usize>,
    held: BTreeMap<SatelliteId, Held>,
}

#[derive(Default)]
struct HapState {
    version: Option<u64>,
    model: Option<Rc<ModelParams>>,
    buffer: Vec<LocalUpdate>,
    forwarded: bool,
    visible: BTreeSet<usize>,
}

#[derive(Default)]
struct EpochState {
    sink_ready: bool,
    bundles: BTreeSet<usize>,
    extended: bool,
    aggregating: bool,
}

struct Engine<'a> {
    cfg: &'a RunConfig,
    prep: &'a Prepared,
    sat_ids: Vec<SatelliteId>,
    orbit_offsets: Vec<usize>,
    now: f64,
    seq: u64,
    current_seq: u64,
    queue: BinaryHeap<Reverse<Queued>>,
    log: Vec<LogRecord>,
    bits: f64,
    sats: Vec<SatState>,
    haps: Vec<HapState>,
    ring: HapRing,
    version: u64,
    global: Rc<ModelParams>,
    aggregator: Aggregator,
    hap_rng: StreamRng,
    metrics: Vec<MetricsRecord>,
    epoch: EpochState,
    sync_round: BTreeMap<SatelliteId, LocalUpdate>,
    finished: bool,
    diagnostics: Vec<String>,
}

/// Runs the configured protocol over the prepared data until a termination
/// criterion fires or the horizon is reached.
pub fn simulate(cfg: &RunConfig, prep: &Prepared) -> Result<RunOutput> {
    let sat_ids = cfg.constellation.satellites();
    if prep.partitions.len() != sat_ids.len() {
        return Err(Error::InvalidArgument(format!(
            "{} partitions for {} satellites",
            prep.partitions.len(),
            sat_ids.len()
        )));
    }
    let mut orbit_offsets = Vec::with_capacity(cfg.constellation.num_orbits());
    let mut acc = 0;
    for o in &cfg.constellation.orbits {
        orbit_offsets.push(acc);
        acc += o.num_sats;
    }
    let ring = plan_ring(&cfg.nodes)?;
    let global = Rc::new(prep.initial_model.clone());
    let mut engine = Engine {
        cfg,
        prep,
        orbit_offsets,
        now: 0.0,
        seq: 0,
        current_seq: 0,
        queue: BinaryHeap::new(),
        log: Vec::new(),
        bits: 0.0,
        sats: sat_ids.iter().map(|_| SatState::default()).collect(),
        haps: cfg.nodes.iter().map(|_| HapState::default()).collect(),
        sat_ids,
        ring,
        version: 0,
        aggregator: Aggregator::new((*global).clone(), cfg.gap_fraction, prep.total_data()),
        global,
        hap_rng: rng::stream(cfg.master_seed, "hap-choice", &[]),
        metrics: Vec::new(),
        epoch: EpochState::default(),
        sync_round: BTreeMap::new(),
        finished: false,
        diagnostics: Vec::new(),
    };
    engine.run()?;
    Ok(RunOutput {
        metrics: engine.metrics,
        events: engine.log,
        diagnostics: engine.diagnostics,
    })
}

impl Engine<'_> {
    fn run(&mut self) -> Result<()> {
        let horizon = self.cfg.termination.max_sim_time;
        self.schedule_contacts(horizon)?;
        self.record_metrics(0, 0, 0)?;
        if self.done_after_record() {
            return Ok(());
        }
        self.begin_epoch()?;
        while let Some(Reverse(q)) = self.queue.pop() {
            if q.time > horizon {
                break;
            }
            self.now = q.time;
            self.current_seq = q.seq;
            self.handle(q.event)?;
            if self.finished {
                return Ok(());
            }
        }
        self.now = horizon;
        self.report_horizon();
        Ok(())
    }

    fn schedule(&mut self, time: f64, event: Event) {
        let seq = self.seq;
        self.seq += 1;
        self.queue.push(Reverse(Queued { time, seq, event }));
    }

    fn schedule_contacts(&mut self, horizon: f64) -> Result<()> {
        let mut contacts = Vec::new();
        for (node, spec) in self.cfg.nodes.iter().enumerate() {
            for w in visibility_windows(&self.cfg.constellation, spec, 0.0, horizon, self.cfg.visibility_step)? {
                let sat = self.flat(w.sat);
                contacts.push((w.enter, sat, node, true));
                if w.exit < horizon {
                    contacts.push((w.exit, sat, node, false));
                }
            }
        }
        contacts.sort_by(|a, b| a.0.total_cmp(&b.0).then((a.1, a.2, !a.3).cmp(&(b.1, b.2, !b.3))));
        for (t, sat, node, enter) in contacts {
            self.schedule(t, Event::Contact { sat, node, enter });
        }
        Ok(())
    }

    fn flat(&self, id: SatelliteId) -> usize {
        self.orbit_offsets[id.orbit] + id.slot
    }

    fn orbit_size(&self, orbit: usize) -> usize {
        self.cfg.constellation.orbits[orbit].num_sats
    }

    fn relay_allowed(&self) -> bool {
        self.cfg.mode == Mode::Async || self.cfg.sync_relay
    }

    fn log(&mut self, kind: &'static str, src: Option<String>, dst: Option<String>, bits: f64, detail: Value) {
        self.log.push(LogRecord {
            time: self.now,
            seq: self.current_seq,
            kind,
            src,
            dst,
            payload_bits: bits,
            detail,
        });
    }

    fn position(&self, e: Endpoint) -> Result<EciPosition> {
        match e {
            Endpoint::Node(n) => Ok(node_position(&self.cfg.constellation.constants, &self.cfg.nodes[n], self.now)),
            Endpoint::Sat(s) => satellite_position(&self.cfg.constellation, s, self.now),
        }
    }

    /// Puts a message on the link, unless the link is blocked.
    fn send(&mut self, kind: MessageKind, src: Endpoint, dst: Endpoint, bits: f64, body: Body) -> Result<bool> {
        let constants = &self.cfg.constellation.constants;
        let delay = match (src, dst) {
            (Endpoint::Node(a), Endpoint::Node(b)) => Some(backbone_delay(
                &self.cfg.link,
                constants,
                &self.cfg.nodes[a],
                &self.cfg.nodes[b],
                bits,
            )),
            _ => transfer_delay(&self.cfg.link, constants, self.position(src)?, self.position(dst)?, bits)?,
        };
        let Some(delay) = delay else {
            return Ok(false);
        };
        self.bits += bits;
        let msg = Message {
            kind,
            src,
            dst,
            send_time: self.now,
            bits,
            body,
        };
        self.schedule(self.now + delay, Event::Arrival(msg));
        Ok(true)
    }

    fn handle(&mut self, event: Event) -> Result<()> {
        match event {
            Event::Contact { sat, node, enter } => self.on_contact(sat, node, enter),
            Event::Arrival(msg) => self.on_arrival(msg),
            Event::TrainingDone { sat, version } => self.on_training_done(sat, version),
            Event::CollectionTimeout { node, version } => {
                if self.haps[node].version == Some(version) && version == self.version && !self.haps[node].forwarded {
                    self.log("collection_timeout", Some(self.node_name(node)), None, 0.0, json!({ "version": version }));
                    self.trigger_collection(node, "window")?;
                }
                Ok(())
            }
            Event::AggregationDone => self.aggregate(),
        }
    }

    fn node_name(&self, node: usize) -> String {
        self.cfg.nodes[node].id.clone()
    }

    fn endpoint_name(&self, e: Endpoint) -> String {
        match e {
            Endpoint::Node(n) => self.node_name(n),
            Endpoint::Sat(s) => s.to_string(),
        }
    }

    // ---- dissemination -------------------------------------------------

    fn begin_epoch(&mut self) -> Result<()> {
        self.epoch = EpochState::default();
        self.sync_round.clear();
        for h in &mut self.haps {
            h.forwarded = false;
        }
        let source = self.ring.source_node();
        let (version, model) = (self.version, Rc::clone(&self.global));
        self.log(
            "epoch_start",
            Some(self.node_name(source)),
            Some(self.node_name(self.ring.sink_node())),
            0.0,
            json!({ "version": version }),
        );
        self.hap_receive_global(source, version, model, None)
    }

    fn hap_receive_global(&mut self, node: usize, version: u64, model: Rc<ModelParams>, from: Option<usize>) -> Result<()> {
        if self.haps[node].version.is_some_and(|v| v >= version) {
            return Ok(());
        }
        let hap = &mut self.haps[node];
        hap.version = Some(version);
        hap.model = Some(Rc::clone(&model));
        hap.forwarded = false;
        if self.cfg.mode == Mode::Async {
            self.schedule(
                self.now + self.cfg.collection_window,
                Event::CollectionTimeout { node, version },
            );
        }
        let pos = self.ring.position_of(node).expect("every node is on the ring");
        let from_pos = from.and_then(|f| self.ring.position_of(f));
        let bits = self.cfg.payload.model_bits(model.dim());
        for target in self.ring.global_forward_targets(pos, from_pos) {
            let dst = self.ring.node_at(target);
            self.send(
                MessageKind::GlobalModel,
                Endpoint::Node(node),
                Endpoint::Node(dst),
                bits,
                Body::Global {
                    version,
                    model: Rc::clone(&model),
                },
            )?;
        }
        let visible: Vec<usize> = self.haps[node].visible.iter().copied().collect();
        for sat in visible {
            self.offer_global(node, sat)?;
        }
        Ok(())
    }

    /// A HAP hands its model to a visible satellite that holds an older one.
    fn offer_global(&mut self, node: usize, sat: usize) -> Result<()> {
        let (Some(version), Some(model)) = (self.haps[node].version, self.haps[node].model.clone()) else {
            return Ok(());
        };
        if self.sats[sat].version.is_some_and(|v| v >= version) {
            return Ok(());
        }
        let bits = self.cfg.payload.model_bits(model.dim());
        self.send(
            MessageKind::GlobalModel,
            Endpoint::Node(node),
            Endpoint::Sat(self.sat_ids[sat]),
            bits,
            Body::Global { version, model },
        )?;
        Ok(())
    }

    fn on_contact(&mut self, sat: usize, node: usize, enter: bool) -> Result<()> {
        let (s, n) = (self.sat_ids[sat].to_string(), self.node_name(node));
        if !enter {
            self.sats[sat].visible.remove(&node);
            self.haps[node].visible.remove(&sat);
            self.log("contact_exit", Some(s), Some(n), 0.0, Value::Null);
            return Ok(());
        }
        self.sats[sat].visible.insert(node);
        self.haps[node].visible.insert(sat);
        self.log("contact_enter", Some(s), Some(n), 0.0, Value::Null);
        self.offer_global(node, sat)?;
        let held = std::mem::take(&mut self.sats[sat].held);
        for (_, h) in held {
            let mut update = h.update;
            if !h.transmitted {
                update.meta.ts = self.now;
            }
            self.upload(sat, node, update)?;
        }
        Ok(())
    }

    fn on_arrival(&mut self, msg: Message) -> Result<()> {
        let src = self.endpoint_name(msg.src);
        let dst = self.endpoint_name(msg.dst);
        match msg.body {
            Body::Global { version, model } => {
                let fresh = match msg.dst {
                    Endpoint::Node(n) => self.haps[n].version.is_none_or(|v| v < version),
                    Endpoint::Sat(s) => self.sats[self.flat(s)].version.is_none_or(|v| v < version),
                };
                self.log(
                    msg.kind.as_str(),
                    Some(src),
                    Some(dst),
                    msg.bits,
                    json!({ "send_time": msg.send_time, "version": version, "duplicate": !fresh }),
                );
                match (msg.src, msg.dst) {
                    (Endpoint::Node(from), Endpoint::Node(to)) => {
                        self.hap_receive_global(to, version, model, Some(from))
                    }
                    (from, Endpoint::Sat(s)) => {
                        let from_slot = match from {
                            Endpoint::Sat(f) => Some(f.slot),
                            Endpoint::Node(_) => None,
                        };
                        self.sat_receive_global(s, version, model, from_slot)
                    }
                    (Endpoint::Sat(_), Endpoint::Node(_)) => Ok(()),
                }
            }
            Body::Update { update, relay } => {
                self.log(
                    msg.kind.as_str(),
                    Some(src),
                    Some(dst),
                    msg.bits,
                    json!({
                        "send_time": msg.send_time,
                        "origin": update.meta.id.to_string(),
                        "epoch": update.meta.epoch,
                        "ts": update.meta.ts,
                    }),
                );
                match msg.dst {
                    Endpoint::Node(n) => self.hap_receive_update(n, update),
                    Endpoint::Sat(s) => {
                        let (prev, hops) = relay.expect("inter-satellite updates carry relay state");
                        self.relay_update(s, prev, hops, update)
                    }
                }
            }
            Body::Bundle {
                version,
                from_pos,
                updates,
            } => {
                self.log(
                    msg.kind.as_str(),
                    Some(src),
                    Some(dst),
                    msg.bits,
                    json!({
                        "send_time": msg.send_time,
                        "version": version,
                        "from": self.node_name(self.ring.node_at(from_pos)),
                        "updates": updates.len(),
                    }),
                );
                let Endpoint::Node(node) = msg.dst else {
                    return Err(Error::InvalidState("bundle addressed to a satellite".into()));
                };
                self.hap_receive_bundle(node, version, from_pos, updates)
            }
        }
    }

    fn sat_receive_global(&mut self, id: SatelliteId, version: u64, model: Rc<ModelParams>, from_slot: Option<usize>) -> Result<()> {
        let sat = self.flat(id);
        if self.sats[sat].version.is_some_and(|v| v >= version) {
            return Ok(());
        }
        self.sats[sat].version = Some(version);
        self.sats[sat].model = Some(Rc::clone(&model));
        if self.relay_allowed() {
            let bits = self.cfg.payload.model_bits(model.dim());
            for target in global_relay_targets(self.orbit_size(id.orbit), id.slot, from_slot) {
                self.send(
                    MessageKind::GlobalModel,
                    Endpoint::Sat(id),
                    Endpoint::Sat(SatelliteId::new(id.orbit, target)),
                    bits,
                    Body::Global {
                        version,
                        model: Rc::clone(&model),
                    },
                )?;
            }
        }
        if self.sats[sat].training.is_none() {
            self.start_training(sat);
        }
        Ok(())
    }

    // ---- training and local updates --------------------------------------

    fn start_training(&mut self, sat: usize) {
        let Some(model) = self.sats[sat].model.clone() else {
            return;
        };
        let version = self.sats[sat].version.unwrap_or(0);
        self.sats[sat].training = Some(model);
        self.schedule(self.now + self.cfg.compute_delay, Event::TrainingDone { sat, version });
    }

    fn on_training_done(&mut self, sat: usize, version: u64) -> Result<()> {
        let id = self.sat_ids[sat];
        let model = self.sats[sat]
            .training
            .take()
            .ok_or_else(|| Error::InvalidState(format!("{id} finished training it never started")))?;
        let train = TrainConfig {
            rng_seed: training_seed(self.cfg.master_seed, id.orbit, id.slot, version),
            ..self.cfg.train
        };
        let data = &self.prep.partitions[sat];
        let trained = local_train(&self.prep.learner, &model, data, &train)?;
        let update = LocalUpdate {
            model: trained,
            meta: SatMetadata {
                id,
                size: data.len(),
                loc: argument_of_latitude(&self.cfg.constellation, id, self.now)?,
                ts: self.now,
                epoch: version + 1,
            },
        };
        self.log("training_done", Some(id.to_string()), None, 0.0, json!({ "version": version }));
        self.route_update(sat, update)?;
        if self.sats[sat].version.is_some_and(|v| v > version) {
            self.start_training(sat);
        }
        Ok(())
    }

    fn upload(&mut self, sat: usize, node: usize, update: LocalUpdate) -> Result<bool> {
        let bits = self.cfg.payload.update_bits(update.model.dim());
        self.send(
            MessageKind::LocalUpdate,
            Endpoint::Sat(self.sat_ids[sat]),
            Endpoint::Node(node),
            bits,
            Body::Update { update, relay: None },
        )
    }

    fn try_upload(&mut self, sat: usize, update: LocalUpdate) -> Result<Option<LocalUpdate>> {
        let visible: Vec<usize> = self.sats[sat].visible.iter().copied().collect();
        match choose_hap(&visible, &mut self.hap_rng) {
            Some(node) => {
                if self.upload(sat, node, update.clone())? {
                    Ok(None)
                } else {
                    Ok(Some(update))
                }
            }
            None => Ok(Some(update)),
        }
    }

    fn route_update(&mut self, sat: usize, update: LocalUpdate) -> Result<()> {
        let Some(update) = self.try_upload(sat, update)? else {
            return Ok(());
        };
        let id = self.sat_ids[sat];
        let mut transmitted = false;
        if self.relay_allowed() {
            let bits = self.cfg.payload.update_bits(update.model.dim());
            for n in ring_neighbors(self.orbit_size(id.orbit), id.slot) {
                transmitted |= self.send(
                    MessageKind::LocalUpdate,
                    Endpoint::Sat(id),
                    Endpoint::Sat(SatelliteId::new(id.orbit, n)),
                    bits,
                    Body::Update {
                        update: update.clone(),
                        relay: Some((id.slot, 1)),
                    },
                )?;
            }
        }
        self.hold(sat, update, transmitted);
        Ok(())
    }

    fn relay_update(&mut self, id: SatelliteId, prev: usize, hops: usize, update: LocalUpdate) -> Result<()> {
        let sat = self.flat(id);
        let Some(update) = self.try_upload(sat, update)? else {
            return Ok(());
        };
        let n_o = self.orbit_size(id.orbit);
        if hops < update_hop_cap(n_o) {
            let next = outward_next(n_o, prev, id.slot);
            let bits = self.cfg.payload.update_bits(update.model.dim());
            let sent = self.send(
                MessageKind::LocalUpdate,
                Endpoint::Sat(id),
                Endpoint::Sat(SatelliteId::new(id.orbit, next)),
                bits,
                Body::Update {
                    update: update.clone(),
                    relay: Some((id.slot, hops + 1)),
                },
            )?;
            if sent {
                return Ok(());
            }
        }
        self.hold(sat, update, true);
        Ok(())
    }

    /// Keeps the newest update per origin until the next contact.
    fn hold(&mut self, sat: usize, update: LocalUpdate, transmitted: bool) {
        let held = &mut self.sats[sat].held;
        let newer = held.get(&update.meta.id).is_none_or(|h| {
            (update.meta.epoch, update.meta.ts) > (h.update.meta.epoch, h.update.meta.ts)
        });
        if newer {
            held.insert(update.meta.id, Held { update, transmitted });
        }
    }

    // ---- collection and aggregation --------------------------------------

    fn hap_receive_update(&mut self, node: usize, update: LocalUpdate) -> Result<()> {
        self.haps[node].buffer.push(update);
        let pos = self.ring.position_of(node).expect("every node is on the ring");
        match self.cfg.mode {
            Mode::Sync => {
                if pos == self.ring.sink {
                    self.collect_sync_at_sink();
                } else {
                    self.send_bundle(node)?;
                }
            }
            Mode::Async => {
                if self.epoch.extended {
                    if pos == self.ring.sink {
                        self.request_aggregation();
                    } else {
                        self.send_bundle(node)?;
                    }
                } else if self.haps[node].version == Some(self.version)
                    && !self.haps[node].forwarded
                    && self.covers_all_orbits(node)
                {
                    self.trigger_collection(node, "all_orbits")?;
                }
            }
        }
        Ok(())
    }

    fn covers_all_orbits(&self, node: usize) -> bool {
        let orbits: BTreeSet<usize> = self.haps[node].buffer.iter().map(|u| u.meta.id.orbit).collect();
        orbits.len() == self.cfg.constellation.num_orbits()
    }

    fn trigger_collection(&mut self, node: usize, reason: &str) -> Result<()> {
        self.haps[node].forwarded = true;
        let buffered = self.haps[node].buffer.len();
        self.log(
            "collection",
            Some(self.node_name(node)),
            None,
            0.0,
            json!({ "reason": reason, "buffered": buffered, "version": self.version }),
        );
        let pos = self.ring.position_of(node).expect("every node is on the ring");
        if pos == self.ring.sink {
            self.epoch.sink_ready = true;
            self.check_sink();
        } else {
            self.send_bundle(node)?;
        }
        Ok(())
    }

    fn send_bundle(&mut self, node: usize) -> Result<()> {
        let pos = self.ring.position_of(node).expect("every node is on the ring");
        let updates = std::mem::take(&mut self.haps[node].buffer);
        self.forward_bundle(pos, pos, self.version, updates)
    }

    fn forward_bundle(&mut self, at: usize, from_pos: usize, version: u64, updates: Vec<LocalUpdate>) -> Result<()> {
        let Some(&next) = self.ring.path_to_sink(at).first() else {
            return Ok(());
        };
        let bits = self.cfg.payload.bundle_bits(&updates);
        self.send(
            MessageKind::Bundle,
            Endpoint::Node(self.ring.node_at(at)),
            Endpoint::Node(self.ring.node_at(next)),
            bits,
            Body::Bundle {
                version,
                from_pos,
                updates,
            },
        )?;
        Ok(())
    }

    fn hap_receive_bundle(&mut self, node: usize, version: u64, from_pos: usize, updates: Vec<LocalUpdate>) -> Result<()> {
        let pos = self.ring.position_of(node).expect("every node is on the ring");
        if pos != self.ring.sink {
            return self.forward_bundle(pos, from_pos, version, updates);
        }
        self.haps[node].buffer.extend(updates);
        match self.cfg.mode {
            Mode::Sync => self.collect_sync_at_sink(),
            Mode::Async => {
                if self.epoch.extended {
                    if !self.haps[node].buffer.is_empty() {
                        self.request_aggregation();
                    }
                } else if version == self.version {
                    self.epoch.bundles.insert(from_pos);
                    self.check_sink();
                }
            }
        }
        Ok(())
    }

    fn check_sink(&mut self) {
        if !self.epoch.sink_ready || self.epoch.bundles.len() + 1 < self.ring.len() {
            return;
        }
        if self.haps[self.ring.sink_node()].buffer.is_empty() {
            if !self.epoch.extended {
                self.epoch.extended = true;
                self.log("extended_epoch", Some(self.node_name(self.ring.sink_node())), None, 0.0, json!({ "version": self.version }));
            }
            return;
        }
        self.request_aggregation();
    }

    fn request_aggregation(&mut self) {
        if !self.epoch.aggregating {
            self.epoch.aggregating = true;
            self.schedule(self.now, Event::AggregationDone);
        }
    }

    fn collect_sync_at_sink(&mut self) {
        let sink = self.ring.sink_node();
        let beta = self.version + 1;
        for u in std::mem::take(&mut self.haps[sink].buffer) {
            if u.meta.epoch == beta {
                self.sync_round.entry(u.meta.id).or_insert(u);
            }
        }
        if self.sync_round.len() == self.sat_ids.len() {
            self.request_aggregation();
        }
    }

    fn aggregate(&mut self) -> Result<()> {
        let beta = self.version + 1;
        let sink = self.ring.sink_node();
        let (model, aggregated, stale, groups, detail) = match self.cfg.mode {
            Mode::Sync => {
                let round = std::mem::take(&mut self.sync_round);
                let inputs: Vec<(ModelParams, usize)> =
                    round.values().map(|u| (u.model.clone(), u.meta.size)).collect();
                let model = fedavg(&inputs)?;
                (model, inputs.len(), 0, 0, json!({ "beta": beta }))
            }
            Mode::Async => {
                let received = std::mem::take(&mut self.haps[sink].buffer);
                let outcome = self.aggregator.run_epoch(&self.global, received, beta)?;
                let grouping: Vec<Value> = outcome
                    .grouping_events
                    .iter()
                    .map(|g| match *g {
                        GroupingEvent::Initial { orbit, distance, group } => {
                            json!({ "kind": "initial", "orbit": orbit, "distance": distance, "group": group })
                        }
                        GroupingEvent::Assigned { orbit, distance, group } => {
                            json!({ "kind": "assigned", "orbit": orbit, "distance": distance, "group": group })
                        }
                    })
                    .collect();
                let detail = json!({
                    "beta": beta,
                    "gamma": outcome.gamma,
                    "rescaled": outcome.rescaled,
                    "extended": self.epoch.extended,
                    "stale_only_groups": outcome.stale_only_groups,
                    "grouping": grouping,
                    "aggregated": outcome.aggregated_ids.iter().map(ToString::to_string).collect::<Vec<_>>(),
                });
                (
                    outcome.model,
                    outcome.models_aggregated,
                    outcome.stale_selected,
                    outcome.groups,
                    detail,
                )
            }
        };
        self.log("aggregation_done", Some(self.node_name(sink)), None, 0.0, detail);
        self.global = Rc::new(model);
        self.version = beta;
        self.record_metrics(aggregated, stale, groups)?;
        if self.done_after_record() {
            self.finished = true;
            return Ok(());
        }
        self.ring = swap_roles(&self.ring);
        self.begin_epoch()
    }

    fn record_metrics(&mut self, aggregated: usize, stale: usize, groups: usize) -> Result<()> {
        let (acc, loss) = evaluate_global(&self.prep.learner, &self.global, &self.prep.test)?;
        let record = MetricsRecord {
            sim_time_s: self.now,
            epoch: self.version,
            test_accuracy: acc,
            global_loss: loss,
            models_aggregated: aggregated,
            stale_selected: stale,
            groups,
            bytes_transferred: self.bits,
        };
        self.log(
            "epoch",
            None,
            None,
            0.0,
            json!({ "epoch": record.epoch, "test_accuracy": acc, "global_loss": loss }),
        );
        self.metrics.push(record);
        Ok(())
    }

    fn done_after_record(&self) -> bool {
        let t = &self.cfg.termination;
        let last = self.metrics.last().map_or(0.0, |m| m.test_accuracy);
        t.target_accuracy.is_some_and(|a| last >= a) || t.max_epochs.is_some_and(|m| self.version >= m)
    }

    fn report_horizon(&mut self) {
        let note = match self.cfg.mode {
            Mode::Sync => {
                let missing: Vec<String> = self
                    .sat_ids
                    .iter()
                    .filter(|id| !self.sync_round.contains_key(id))
                    .map(ToString::to_string)
                    .collect();
                let note = format!(
                    "stalled round {}: {} of {} local models missing at t = {} s",
                    self.version + 1,
                    missing.len(),
                    self.sat_ids.len(),
                    self.now
                );
                self.log("stalled_round", None, None, 0.0, json!({ "round": self.version + 1, "missing": missing }));
                note
            }
            Mode::Async => {
                self.log("horizon", None, None, 0.0, json!({ "epoch": self.version }));
                format!("horizon reached after epoch {} at t = {} s", self.version, self.now)
            }
        };
        self.diagnostics.push(note);
    }
}
