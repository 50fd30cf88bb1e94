//! Sink-side aggregation: deduplicating collected updates, grouping orbits by
//! how far their partial models moved from the initial global model, picking
//! fresh models per group, and staleness-discounted model averaging.

use std::collections::{BTreeMap, BTreeSet};

use crate::error::{invalid, Error, Result};
use crate::fl::ModelParams;
use crate::orbital::SatelliteId;

/// Tolerance when checking that per-model coefficients sum to the scalar γ.
const COEFFICIENT_TOLERANCE: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq)]
pub struct SatMetadata {
    pub id: SatelliteId,
    /// Number of local training samples.
    pub size: usize,
    /// Argument of latitude of the satellite at `ts`, rad.
    pub loc: f64,
    /// First transmit time of the update, s.
    pub ts: f64,
    /// Global epoch this update contributes to when fresh (see `select_models`).
    pub epoch: u64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LocalUpdate {
    pub model: ModelParams,
    pub meta: SatMetadata,
}

/// Collected updates keyed by orbit, each list in ascending slot order once
/// deduplicated.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct UpdateSet {
    pub orbits: BTreeMap<usize, Vec<LocalUpdate>>,
    pub current_epoch: u64,
}

impl UpdateSet {
    pub fn new(current_epoch: u64) -> Self {
        Self {
            orbits: BTreeMap::new(),
            current_epoch,
        }
    }

    pub fn from_updates(current_epoch: u64, updates: impl IntoIterator<Item = LocalUpdate>) -> Self {
        let mut set = Self::new(current_epoch);
        for u in updates {
            set.insert(u);
        }
        set
    }

    pub fn insert(&mut self, update: LocalUpdate) {
        self.orbits.entry(update.meta.id.orbit).or_default().push(update);
    }

    pub fn len(&self) -> usize {
        self.orbits.values().map(Vec::len).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn iter(&self) -> impl Iterator<Item = &LocalUpdate> {
        self.orbits.values().flatten()
    }
}

/// Keeps one update per satellite: latest `ts`, then latest `epoch`, then the
/// earliest occurrence. Each orbit's list comes out sorted by slot.
pub fn dedupe(set: &UpdateSet) -> UpdateSet {
    let mut best: BTreeMap<SatelliteId, &LocalUpdate> = BTreeMap::new();
    for u in set.iter() {
        match best.get(&u.meta.id) {
            Some(cur) if (u.meta.ts, u.meta.epoch) <= (cur.meta.ts, cur.meta.epoch) => {}
            _ => {
                best.insert(u.meta.id, u);
            }
        }
    }
    let mut out = UpdateSet::new(set.current_epoch);
    for u in best.into_values() {
        out.insert(u.clone());
    }
    out
}

/// Total training data behind one orbit's updates.
pub fn orbit_data_size(updates: &[LocalUpdate]) -> usize {
    updates.iter().map(|u| u.meta.size).sum()
}

/// Data-size-weighted average of one orbit's models.
pub fn partial_global_model(updates: &[LocalUpdate]) -> Result<ModelParams> {
    let first = updates
        .first()
        .ok_or_else(|| invalid("partial model of an empty orbit"))?;
    let dim = first.model.dim();
    if updates.iter().any(|u| u.model.dim() != dim) {
        return Err(invalid("orbit updates have different dimensions"));
    }
    let total = orbit_data_size(updates);
    if total == 0 {
        return Err(invalid("orbit data size is zero"));
    }
    let mut out = vec![0.0; dim];
    for u in updates {
        let k = u.meta.size as f64 / total as f64;
        for (o, w) in out.iter_mut().zip(&u.model.weights) {
            *o += k * w;
        }
    }
    let epoch = updates.iter().map(|u| u.model.derived_from_epoch).max().unwrap_or(0);
    Ok(ModelParams::new(out, epoch))
}

/// Euclidean distance between an orbit's partial model and the initial model.
pub fn orbit_distance(partial: &ModelParams, w0: &ModelParams) -> Result<f64> {
    partial.distance(w0)
}

#[derive(Debug, Clone, PartialEq)]
pub struct Group {
    /// `(orbit, distance)` in join order.
    pub members: Vec<(usize, f64)>,
    pub mean_distance: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GroupingScheme {
    pub orbit_to_group: BTreeMap<usize, usize>,
    pub groups: Vec<Group>,
    pub reference_model: ModelParams,
}

impl GroupingScheme {
    pub fn empty(reference_model: ModelParams) -> Self {
        Self {
            orbit_to_group: BTreeMap::new(),
            groups: Vec::new(),
            reference_model,
        }
    }

    pub fn is_empty(&self) -> bool {
        self.groups.is_empty()
    }

    pub fn num_groups(&self) -> usize {
        self.groups.len()
    }

    pub fn group_of(&self, orbit: usize) -> Option<usize> {
        self.orbit_to_group.get(&orbit).copied()
    }

    pub fn group_mean_distance(&self, group: usize) -> Option<f64> {
        self.groups.get(group).map(|g| g.mean_distance)
    }

    /// Sorted member orbits of each group.
    pub fn memberships(&self) -> Vec<Vec<usize>> {
        self.groups
            .iter()
            .map(|g| {
                let mut m: Vec<usize> = g.members.iter().map(|&(o, _)| o).collect();
                m.sort_unstable();
                m
            })
            .collect()
    }

    /// Puts an ungrouped orbit into the group whose mean distance is closest
    /// (lower group id on ties) and updates that group's running mean.
    pub fn assign_orbit(&mut self, orbit: usize, distance: f64) -> Result<usize> {
        if self.orbit_to_group.contains_key(&orbit) {
            return Err(Error::InvalidState(format!("orbit {orbit} is already grouped")));
        }
        if !distance.is_finite() {
            return Err(invalid("orbit distance must be finite"));
        }
        let mut best: Option<(usize, f64)> = None;
        for (g, group) in self.groups.iter().enumerate() {
            let diff = (distance - group.mean_distance).abs();
            if best.is_none_or(|(_, d)| diff < d) {
                best = Some((g, diff));
            }
        }
        let (g, _) = best.ok_or_else(|| {
            Error::InvalidState("cannot assign an orbit before any group exists".into())
        })?;
        let group = &mut self.groups[g];
        group.members.push((orbit, distance));
        let n = group.members.len() as f64;
        group.mean_distance += (distance - group.mean_distance) / n;
        self.orbit_to_group.insert(orbit, g);
        Ok(g)
    }
}

/// One-dimensional gap clustering of orbit distances. Orbits are sorted by
/// distance and a new group starts wherever the gap to the previous orbit
/// exceeds `gap_fraction * (max - min)`. Group ids follow ascending distance.
pub fn initial_grouping(
    distances: &[(usize, f64)],
    gap_fraction: f64,
    reference_model: ModelParams,
) -> Result<GroupingScheme> {
    if distances.is_empty() {
        return Err(invalid("initial grouping needs at least one orbit"));
    }
    if !(gap_fraction > 0.0 && gap_fraction < 1.0) {
        return Err(invalid("gap_fraction must be in (0, 1)"));
    }
    if distances.iter().any(|(_, d)| !d.is_finite()) {
        return Err(invalid("orbit distances must be finite"));
    }
    let mut seen = BTreeSet::new();
    if !distances.iter().all(|(o, _)| seen.insert(*o)) {
        return Err(invalid("duplicate orbit in initial grouping"));
    }
    let mut sorted = distances.to_vec();
    sorted.sort_by(|a, b| a.1.total_cmp(&b.1).then(a.0.cmp(&b.0)));
    let range = sorted.last().map(|x| x.1).unwrap_or(0.0) - sorted[0].1;
    let threshold = gap_fraction * range;

    let mut scheme = GroupingScheme::empty(reference_model);
    let mut current: Vec<(usize, f64)> = Vec::new();
    let mut prev: Option<f64> = None;
    for (orbit, d) in sorted {
        if let Some(p) = prev {
            if range > 0.0 && d - p > threshold {
                push_group(&mut scheme, std::mem::take(&mut current));
            }
        }
        current.push((orbit, d));
        prev = Some(d);
    }
    push_group(&mut scheme, current);
    Ok(scheme)
}

fn push_group(scheme: &mut GroupingScheme, members: Vec<(usize, f64)>) {
    let id = scheme.groups.len();
    let mean = members.iter().map(|m| m.1).sum::<f64>() / members.len() as f64;
    for &(o, _) in &members {
        scheme.orbit_to_group.insert(o, id);
    }
    scheme.groups.push(Group {
        members,
        mean_distance: mean,
    });
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct Selection {
    pub selected: Vec<LocalUpdate>,
    /// Stale updates passed over because their group had fresh ones.
    pub discarded: Vec<LocalUpdate>,
    pub stale_only_groups: BTreeSet<usize>,
}

/// An update is fresh for epoch `beta` when `meta.epoch == beta`.
pub fn is_fresh(update: &LocalUpdate, beta: u64) -> bool {
    update.meta.epoch == beta
}

/// Per group: keep only the fresh updates if there are any, otherwise keep
/// every (stale) update and flag the group. Output is in ascending satellite
/// order.
pub fn select_models(set: &UpdateSet, scheme: &GroupingScheme, beta: u64) -> Result<Selection> {
    let mut by_group: BTreeMap<usize, Vec<&LocalUpdate>> = BTreeMap::new();
    for (&orbit, updates) in &set.orbits {
        if updates.is_empty() {
            continue;
        }
        let g = scheme
            .group_of(orbit)
            .ok_or_else(|| Error::InvalidState(format!("orbit {orbit} is not grouped")))?;
        by_group.entry(g).or_default().extend(updates.iter());
    }
    let mut out = Selection::default();
    for (g, updates) in by_group {
        if updates.iter().any(|u| is_fresh(u, beta)) {
            for u in updates {
                if is_fresh(u, beta) {
                    out.selected.push(u.clone());
                } else {
                    out.discarded.push(u.clone());
                }
            }
        } else {
            out.stale_only_groups.insert(g);
            out.selected.extend(updates.into_iter().cloned());
        }
    }
    out.selected.sort_by_key(|u| u.meta.id);
    out.discarded.sort_by_key(|u| u.meta.id);
    Ok(out)
}

#[derive(Debug, Clone, PartialEq)]
pub struct Discount {
    /// One coefficient per selected update, same order.
    pub coefficients: Vec<f64>,
    /// Sum of the coefficients, at most 1.
    pub gamma: f64,
    /// True when the raw sum exceeded 1 and was rescaled.
    pub rescaled: bool,
}

/// `gamma_n = (D_n / D) * (k_n / beta)` with `k_n = beta` for fresh updates and
/// `k_n = meta.epoch` otherwise; `gamma = sum gamma_n`, rescaled down to 1 if
/// it exceeds 1.
pub fn staleness_discount(selected: &[LocalUpdate], beta: u64, total_data: usize) -> Result<Discount> {
    if beta == 0 {
        return Err(Error::InvalidState("no aggregation before epoch 1".into()));
    }
    let used: usize = selected.iter().map(|u| u.meta.size).sum();
    if total_data == 0 || total_data < used {
        return Err(invalid(format!(
            "total data {total_data} smaller than selected data {used}"
        )));
    }
    let mut coefficients: Vec<f64> = selected
        .iter()
        .map(|u| {
            let k = if is_fresh(u, beta) { beta } else { u.meta.epoch.min(beta) };
            (u.meta.size as f64 / total_data as f64) * (k as f64 / beta as f64)
        })
        .collect();
    let mut gamma: f64 = coefficients.iter().sum();
    let rescaled = gamma > 1.0;
    if rescaled {
        for c in &mut coefficients {
            *c /= gamma;
        }
        gamma = 1.0;
    }
    Ok(Discount {
        coefficients,
        gamma,
        rescaled,
    })
}

/// `w' = (1 - gamma) w_prev + sum_n gamma_n w_n`.
pub fn aggregate(
    w_prev: &ModelParams,
    selected: &[LocalUpdate],
    coefficients: &[f64],
    gamma: f64,
) -> Result<ModelParams> {
    if selected.len() != coefficients.len() {
        return Err(invalid(format!(
            "{} models but {} coefficients",
            selected.len(),
            coefficients.len()
        )));
    }
    if !(0.0..=1.0).contains(&gamma) {
        return Err(invalid(format!("gamma {gamma} outside [0, 1]")));
    }
    if coefficients.iter().any(|&c| !(c >= 0.0)) {
        return Err(invalid("negative aggregation coefficient"));
    }
    let sum: f64 = coefficients.iter().sum();
    if (sum - gamma).abs() > COEFFICIENT_TOLERANCE {
        return Err(invalid(format!("coefficients sum to {sum}, gamma is {gamma}")));
    }
    let dim = w_prev.dim();
    if selected.iter().any(|u| u.model.dim() != dim) {
        return Err(invalid("aggregating models of different dimensions"));
    }
    let keep = 1.0 - gamma;
    let mut out: Vec<f64> = w_prev.weights.iter().map(|w| keep * w).collect();
    for (u, &c) in selected.iter().zip(coefficients) {
        for (o, w) in out.iter_mut().zip(&u.model.weights) {
            *o += c * w;
        }
    }
    Ok(ModelParams::new(out, w_prev.derived_from_epoch + 1))
}

/// What happened to the grouping during one aggregation.
#[derive(Debug, Clone, PartialEq)]
pub enum GroupingEvent {
    Initial { orbit: usize, distance: f64, group: usize },
    Assigned { orbit: usize, distance: f64, group: usize },
}

#[derive(Debug, Clone, PartialEq)]
pub struct EpochOutcome {
    pub model: ModelParams,
    pub models_aggregated: usize,
    pub stale_selected: usize,
    pub groups: usize,
    pub gamma: f64,
    pub rescaled: bool,
    pub stale_only_groups: BTreeSet<usize>,
    pub grouping_events: Vec<GroupingEvent>,
    /// Satellites whose updates were aggregated, ascending.
    pub aggregated_ids: Vec<SatelliteId>,
}

/// Aggregation state owned by the sink: the grouping scheme and the pool of
/// stale updates passed over in earlier epochs.
#[derive(Debug, Clone)]
pub struct Aggregator {
    pub scheme: GroupingScheme,
    pub gap_fraction: f64,
    /// Total data across the whole constellation.
    pub total_data: usize,
    carry: Vec<LocalUpdate>,
}

impl Aggregator {
    pub fn new(initial_model: ModelParams, gap_fraction: f64, total_data: usize) -> Self {
        Self {
            scheme: GroupingScheme::empty(initial_model),
            gap_fraction,
            total_data,
            carry: Vec::new(),
        }
    }

    /// Stale updates waiting from earlier epochs.
    pub fn carried(&self) -> &[LocalUpdate] {
        &self.carry
    }

    /// One epoch at the sink: merge `received` with carried-over updates,
    /// dedupe, group any new orbits, select, discount and aggregate into the
    /// next global model. `beta` is the epoch being produced (>= 1).
    pub fn run_epoch(
        &mut self,
        w_prev: &ModelParams,
        received: Vec<LocalUpdate>,
        beta: u64,
    ) -> Result<EpochOutcome> {
        let raw = UpdateSet::from_updates(beta, self.carry.drain(..).chain(received));
        let set = dedupe(&raw);
        if set.is_empty() {
            return Err(Error::InvalidState("aggregation with no updates".into()));
        }

        let mut events = Vec::new();
        let mut fresh_orbits = Vec::new();
        for (&orbit, updates) in &set.orbits {
            if self.scheme.group_of(orbit).is_none() {
                let partial = partial_global_model(updates)?;
                let d = orbit_distance(&partial, &self.scheme.reference_model)?;
                fresh_orbits.push((orbit, d));
            }
        }
        if self.scheme.is_empty() {
            self.scheme = initial_grouping(
                &fresh_orbits,
                self.gap_fraction,
                self.scheme.reference_model.clone(),
            )?;
            for &(orbit, distance) in &fresh_orbits {
                let group = self.scheme.group_of(orbit).unwrap_or(0);
                events.push(GroupingEvent::Initial { orbit, distance, group });
            }
        } else {
            for (orbit, distance) in fresh_orbits {
                let group = self.scheme.assign_orbit(orbit, distance)?;
                events.push(GroupingEvent::Assigned { orbit, distance, group });
            }
        }

        let selection = select_models(&set, &self.scheme, beta)?;
        let discount = staleness_discount(&selection.selected, beta, self.total_data)?;
        let model = aggregate(w_prev, &selection.selected, &discount.coefficients, discount.gamma)?;
        let stale_selected = selection
            .selected
            .iter()
            .filter(|u| !is_fresh(u, beta))
            .count();
        self.carry = selection.discarded;
        Ok(EpochOutcome {
            model,
            models_aggregated: selection.selected.len(),
            stale_selected,
            groups: self.scheme.num_groups(),
            gamma: discount.gamma,
            rescaled: discount.rescaled,
            stale_only_groups: selection.stale_only_groups,
            grouping_events: events,
            aggregated_ids: selection.selected.iter().map(|u| u.meta.id).collect(),
        })
    }
}
