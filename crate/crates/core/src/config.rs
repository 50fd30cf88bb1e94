//! JSON run configuration: schema with defaults, `key.path=value` overrides,
//! validation and conversion into a [`RunConfig`].
//!
//! Angles are given in degrees, distances in metres and times in seconds.
//! An empty file yields the defaults.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::error::{Error, Result};
use crate::fl::{LearnerKind, LocalSteps, PartitionMode, SyntheticSpec, TrainConfig};
use crate::link::{LinkParams, RateMode};
use crate::orbital::{AltitudeBounds, BodyConstants, ConstellationSpec, NodeRole, NodeSpec, OrbitSpec};
use crate::propagation::PayloadSizes;
use crate::sim::{DataSource, LearnerSettings, Mode, RunConfig, Termination};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ScenarioConfig {
    pub constellation: ConstellationConfig,
    pub nodes: Vec<NodeConfig>,
    pub link: LinkConfig,
    pub learner: LearnerConfig,
    pub train: TrainSection,
    pub data: DataConfig,
    pub mode: Mode,
    /// Whether the synchronous baseline may relay over inter-satellite links.
    pub sync_relay: bool,
    pub termination: TerminationConfig,
    pub gap_fraction: f64,
    pub collection_window_s: f64,
    pub compute_delay_s: f64,
    pub master_seed: u64,
    pub visibility_step_s: f64,
    pub payload: PayloadConfig,
}

impl Default for ScenarioConfig {
    fn default() -> Self {
        Self {
            constellation: ConstellationConfig::default(),
            nodes: vec![NodeConfig::hap("rolla", 37.9514, -91.7713)],
            link: LinkConfig::default(),
            learner: LearnerConfig::default(),
            train: TrainSection::default(),
            data: DataConfig::default(),
            mode: Mode::Async,
            sync_relay: true,
            termination: TerminationConfig::default(),
            gap_fraction: 0.25,
            collection_window_s: 1800.0,
            compute_delay_s: 60.0,
            master_seed: 0,
            visibility_step_s: 10.0,
            payload: PayloadConfig::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ConstellationConfig {
    pub num_orbits: usize,
    pub sats_per_orbit: usize,
    pub altitude_m: f64,
    pub inclination_deg: f64,
    /// Walker phasing between adjacent planes.
    pub phasing_deg: f64,
    /// Explicit planes; replaces the Walker fields above when present.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub orbits: Option<Vec<OrbitConfig>>,
    pub min_altitude_m: f64,
    pub max_altitude_m: f64,
}

impl Default for ConstellationConfig {
    fn default() -> Self {
        let bounds = AltitudeBounds::default();
        Self {
            num_orbits: 5,
            sats_per_orbit: 8,
            altitude_m: 2.0e6,
            inclination_deg: 80.0,
            phasing_deg: 0.0,
            orbits: None,
            min_altitude_m: bounds.min,
            max_altitude_m: bounds.max,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OrbitConfig {
    pub altitude_m: f64,
    pub inclination_deg: f64,
    pub raan_deg: f64,
    pub num_sats: usize,
    #[serde(default)]
    pub phase_offset_deg: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NodeConfig {
    pub id: String,
    #[serde(default = "default_role")]
    pub role: NodeRole,
    pub latitude_deg: f64,
    pub longitude_deg: f64,
    /// Defaults to 20 km for a HAP and 0 for a ground station.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub altitude_m: Option<f64>,
    #[serde(default = "default_min_elevation")]
    pub min_elevation_deg: f64,
}

fn default_role() -> NodeRole {
    NodeRole::Hap
}

fn default_min_elevation() -> f64 {
    NodeSpec::DEFAULT_MIN_ELEVATION_DEG
}

impl NodeConfig {
    pub fn hap(id: &str, latitude_deg: f64, longitude_deg: f64) -> Self {
        Self {
            id: id.to_string(),
            role: NodeRole::Hap,
            latitude_deg,
            longitude_deg,
            altitude_m: None,
            min_elevation_deg: default_min_elevation(),
        }
    }

    fn altitude(&self) -> f64 {
        self.altitude_m.unwrap_or(match self.role {
            NodeRole::Hap => NodeSpec::DEFAULT_HAP_ALTITUDE,
            NodeRole::Gs => 0.0,
        })
    }

    fn to_spec(&self) -> NodeSpec {
        NodeSpec {
            id: self.id.clone(),
            role: self.role,
            latitude: self.latitude_deg.to_radians(),
            longitude: self.longitude_deg.to_radians(),
            altitude: self.altitude(),
            min_elevation: self.min_elevation_deg.to_radians(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LinkConfig {
    pub tx_power_dbm: f64,
    pub tx_gain_dbi: f64,
    pub rx_gain_dbi: f64,
    pub carrier_freq_hz: f64,
    pub noise_temp_k: f64,
    pub bandwidth_hz: f64,
    pub rate_mode: RateMode,
    pub fixed_rate_bps: f64,
    pub proc_delay_tx_s: f64,
    pub proc_delay_rx_s: f64,
    pub earth_clearance_m: f64,
}

impl Default for LinkConfig {
    fn default() -> Self {
        let p = LinkParams::default();
        Self {
            tx_power_dbm: p.tx_power_dbm,
            tx_gain_dbi: p.tx_gain_dbi,
            rx_gain_dbi: p.rx_gain_dbi,
            carrier_freq_hz: p.carrier_freq,
            noise_temp_k: p.noise_temp,
            bandwidth_hz: p.bandwidth,
            rate_mode: p.rate_mode,
            fixed_rate_bps: p.fixed_rate,
            proc_delay_tx_s: p.proc_delay_tx,
            proc_delay_rx_s: p.proc_delay_rx,
            earth_clearance_m: p.earth_clearance,
        }
    }
}

impl LinkConfig {
    fn to_params(&self) -> LinkParams {
        LinkParams {
            tx_power_dbm: self.tx_power_dbm,
            tx_gain_dbi: self.tx_gain_dbi,
            rx_gain_dbi: self.rx_gain_dbi,
            carrier_freq: self.carrier_freq_hz,
            noise_temp: self.noise_temp_k,
            bandwidth: self.bandwidth_hz,
            rate_mode: self.rate_mode,
            fixed_rate: self.fixed_rate_bps,
            proc_delay_tx: self.proc_delay_tx_s,
            proc_delay_rx: self.proc_delay_rx_s,
            earth_clearance: self.earth_clearance_m,
            ..LinkParams::default()
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LearnerConfig {
    pub kind: LearnerKind,
    /// Hidden width for the MLP; ignored by softmax regression.
    pub hidden_dim: usize,
    /// Half-width of the uniform initialisation; 0 starts from zeros.
    pub init_scale: f64,
}

impl Default for LearnerConfig {
    fn default() -> Self {
        Self {
            kind: LearnerKind::SoftmaxRegression,
            hidden_dim: 32,
            init_scale: 0.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainSection {
    pub local_iters: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub steps: LocalSteps,
}

impl Default for TrainSection {
    fn default() -> Self {
        let t = TrainConfig::default();
        Self {
            local_iters: t.local_iters,
            batch_size: t.batch_size,
            learning_rate: t.learning_rate,
            steps: t.steps,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DataConfig {
    pub source: DataSourceConfig,
    pub partition: PartitionMode,
    pub test_fraction: f64,
}

impl Default for DataConfig {
    fn default() -> Self {
        Self {
            source: DataSourceConfig::Synthetic(SyntheticSpec::default()),
            partition: PartitionMode::NonIid,
            test_fraction: 0.2,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
pub enum DataSourceConfig {
    Synthetic(SyntheticSpec),
    Idx(IdxConfig),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct IdxConfig {
    pub images: PathBuf,
    pub labels: PathBuf,
    #[serde(default = "default_num_classes")]
    pub num_classes: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub limit: Option<usize>,
}

fn default_num_classes() -> usize {
    10
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TerminationConfig {
    pub target_accuracy: Option<f64>,
    pub max_epochs: Option<u64>,
    pub max_sim_time_s: f64,
}

impl Default for TerminationConfig {
    fn default() -> Self {
        Self {
            target_accuracy: None,
            max_epochs: None,
            max_sim_time_s: 72.0 * 3600.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PayloadConfig {
    pub bits_per_param: f64,
    pub metadata_bits: f64,
}

impl Default for PayloadConfig {
    fn default() -> Self {
        let p = PayloadSizes::default();
        Self {
            bits_per_param: p.bits_per_param,
            metadata_bits: p.metadata_bits,
        }
    }
}

/// Parses a configuration document. Whitespace-only input means defaults.
pub fn parse_config(text: &str) -> Result<ScenarioConfig> {
    let text = if text.trim().is_empty() { "{}" } else { text };
    serde_json::from_str(text).map_err(json_error)
}

/// Parses a document and applies `key.path=value` overrides before decoding.
pub fn parse_config_with_overrides(text: &str, overrides: &[String]) -> Result<ScenarioConfig> {
    if overrides.is_empty() {
        return parse_config(text);
    }
    let text = if text.trim().is_empty() { "{}" } else { text };
    let mut root: Value = serde_json::from_str(text).map_err(json_error)?;
    for o in overrides {
        let (path, value) = parse_override(o)?;
        apply_override(&mut root, &path, value)?;
    }
    serde_json::from_value(root).map_err(json_error)
}

pub fn load_config(path: &Path, overrides: &[String]) -> Result<ScenarioConfig> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| Error::Io(format!("{}: {e}", path.display())))?;
    parse_config_with_overrides(&text, overrides)
}

fn json_error(e: serde_json::Error) -> Error {
    Error::ConfigParse {
        line: e.line(),
        column: e.column(),
        message: e.to_string(),
    }
}

/// Splits `a.b.c=value`. The value is read as JSON when it parses, otherwise
/// as a bare string.
pub fn parse_override(s: &str) -> Result<(Vec<String>, Value)> {
    let (key, raw) = s
        .split_once('=')
        .ok_or_else(|| Error::InvalidArgument(format!("override `{s}` is not key=value")))?;
    let path: Vec<String> = key.trim().split('.').map(str::to_string).collect();
    if path.iter().any(|p| p.is_empty()) {
        return Err(Error::InvalidArgument(format!("override `{s}` has an empty key segment")));
    }
    let value = serde_json::from_str(raw).unwrap_or_else(|_| Value::String(raw.to_string()));
    Ok((path, value))
}

/// Sets `path` inside `root`, creating objects on the way. Numeric segments
/// index into existing arrays.
pub fn apply_override(root: &mut Value, path: &[String], value: Value) -> Result<()> {
    let Some((last, parents)) = path.split_last() else {
        return Err(Error::InvalidArgument("empty override path".into()));
    };
    let mut cur = root;
    for seg in parents {
        cur = child(cur, seg, path)?;
    }
    if cur.is_null() {
        *cur = Value::Object(Default::default());
    }
    match cur {
        Value::Object(map) => {
            map.insert(last.clone(), value);
            Ok(())
        }
        Value::Array(items) => {
            let slot = last
                .parse::<usize>()
                .ok()
                .and_then(|i| items.get_mut(i))
                .ok_or_else(|| bad_path(path))?;
            *slot = value;
            Ok(())
        }
        _ => Err(bad_path(path)),
    }
}

fn child<'a>(cur: &'a mut Value, seg: &str, path: &[String]) -> Result<&'a mut Value> {
    if cur.is_null() {
        *cur = Value::Object(Default::default());
    }
    match cur {
        Value::Object(map) => Ok(map.entry(seg.to_string()).or_insert(Value::Null)),
        Value::Array(items) => seg
            .parse::<usize>()
            .ok()
            .and_then(|i| items.get_mut(i))
            .ok_or_else(|| bad_path(path)),
        _ => Err(bad_path(path)),
    }
}

fn bad_path(path: &[String]) -> Error {
    Error::InvalidArgument(format!("override path `{}` does not fit the document", path.join(".")))
}

fn check(errors: &mut Vec<String>, ok: bool, field: &str, msg: impl std::fmt::Display) {
    if !ok {
        errors.push(format!("{field}: {msg}"));
    }
}

fn positive(errors: &mut Vec<String>, field: &str, v: f64) {
    check(errors, v.is_finite() && v > 0.0, field, format_args!("must be positive, got {v}"));
}

fn non_negative(errors: &mut Vec<String>, field: &str, v: f64) {
    check(errors, v.is_finite() && v >= 0.0, field, format_args!("must be >= 0, got {v}"));
}

impl ScenarioConfig {
    /// Every violated constraint, each prefixed with its field path.
    pub fn violations(&self) -> Vec<String> {
        let mut e = Vec::new();
        let c = &self.constellation;
        let (lo, hi) = (c.min_altitude_m, c.max_altitude_m);
        check(&mut e, lo.is_finite() && lo > 0.0 && lo <= hi && hi.is_finite(), "constellation.min_altitude_m",
            format_args!("bounds [{lo}, {hi}] must be finite, positive and ordered"));
        let in_bounds = |a: f64| a.is_finite() && a >= lo && a <= hi;
        match &c.orbits {
            Some(orbits) => {
                check(&mut e, !orbits.is_empty(), "constellation.orbits", "must not be empty");
                for (i, o) in orbits.iter().enumerate() {
                    let f = |s: &str| format!("constellation.orbits.{i}.{s}");
                    check(&mut e, in_bounds(o.altitude_m), &f("altitude_m"),
                        format_args!("must be in [{lo}, {hi}], got {}", o.altitude_m));
                    check(&mut e, (0.0..=180.0).contains(&o.inclination_deg), &f("inclination_deg"),
                        format_args!("must be in [0, 180], got {}", o.inclination_deg));
                    check(&mut e, o.raan_deg.is_finite(), &f("raan_deg"), "must be finite");
                    check(&mut e, o.phase_offset_deg.is_finite(), &f("phase_offset_deg"), "must be finite");
                    check(&mut e, o.num_sats >= 1, &f("num_sats"), "must be >= 1");
                }
            }
            None => {
                check(&mut e, c.num_orbits >= 1, "constellation.num_orbits", "must be >= 1");
                check(&mut e, c.sats_per_orbit >= 1, "constellation.sats_per_orbit", "must be >= 1");
                check(&mut e, in_bounds(c.altitude_m), "constellation.altitude_m",
                    format_args!("must be in [{lo}, {hi}], got {}", c.altitude_m));
                check(&mut e, (0.0..=180.0).contains(&c.inclination_deg), "constellation.inclination_deg",
                    format_args!("must be in [0, 180], got {}", c.inclination_deg));
                check(&mut e, c.phasing_deg.is_finite(), "constellation.phasing_deg", "must be finite");
            }
        }

        check(&mut e, !self.nodes.is_empty(), "nodes", "at least one parameter server is required");
        for (i, n) in self.nodes.iter().enumerate() {
            let f = |s: &str| format!("nodes.{i}.{s}");
            check(&mut e, !n.id.is_empty(), &f("id"), "must not be empty");
            check(&mut e, !self.nodes[..i].iter().any(|m| m.id == n.id), &f("id"),
                format_args!("duplicate id `{}`", n.id));
            check(&mut e, (-90.0..=90.0).contains(&n.latitude_deg), &f("latitude_deg"),
                format_args!("must be in [-90, 90], got {}", n.latitude_deg));
            check(&mut e, (-180.0..=180.0).contains(&n.longitude_deg), &f("longitude_deg"),
                format_args!("must be in [-180, 180], got {}", n.longitude_deg));
            if let Some(a) = n.altitude_m {
                non_negative(&mut e, &f("altitude_m"), a);
            }
            check(&mut e, n.min_elevation_deg >= 0.0 && n.min_elevation_deg < 90.0, &f("min_elevation_deg"),
                format_args!("must be in [0, 90), got {}", n.min_elevation_deg));
        }

        let l = &self.link;
        for (name, v) in [
            ("link.carrier_freq_hz", l.carrier_freq_hz),
            ("link.noise_temp_k", l.noise_temp_k),
            ("link.bandwidth_hz", l.bandwidth_hz),
            ("link.fixed_rate_bps", l.fixed_rate_bps),
        ] {
            positive(&mut e, name, v);
        }
        for (name, v) in [
            ("link.proc_delay_tx_s", l.proc_delay_tx_s),
            ("link.proc_delay_rx_s", l.proc_delay_rx_s),
            ("link.earth_clearance_m", l.earth_clearance_m),
        ] {
            non_negative(&mut e, name, v);
        }
        for (name, v) in [
            ("link.tx_power_dbm", l.tx_power_dbm),
            ("link.tx_gain_dbi", l.tx_gain_dbi),
            ("link.rx_gain_dbi", l.rx_gain_dbi),
        ] {
            check(&mut e, v.is_finite(), name, "must be finite");
        }

        if self.learner.kind == LearnerKind::MlpOneHidden {
            check(&mut e, self.learner.hidden_dim >= 1, "learner.hidden_dim", "must be >= 1");
        }
        non_negative(&mut e, "learner.init_scale", self.learner.init_scale);

        check(&mut e, self.train.local_iters >= 1, "train.local_iters", "must be >= 1");
        check(&mut e, self.train.batch_size >= 1, "train.batch_size", "must be >= 1");
        non_negative(&mut e, "train.learning_rate", self.train.learning_rate);

        let d = &self.data;
        check(&mut e, d.test_fraction > 0.0 && d.test_fraction < 1.0, "data.test_fraction",
            format_args!("must be in (0, 1), got {}", d.test_fraction));
        match &d.source {
            DataSourceConfig::Synthetic(s) => {
                if let Err(err) = s.validate() {
                    e.push(format!("data.source.synthetic: {err}"));
                }
            }
            DataSourceConfig::Idx(x) => {
                check(&mut e, x.num_classes >= 2, "data.source.idx.num_classes", "must be >= 2");
                if let Some(limit) = x.limit {
                    check(&mut e, limit >= 1, "data.source.idx.limit", "must be >= 1");
                }
            }
        }

        let t = &self.termination;
        if let Some(a) = t.target_accuracy {
            check(&mut e, a > 0.0 && a <= 1.0, "termination.target_accuracy",
                format_args!("must be in (0, 1], got {a}"));
        }
        positive(&mut e, "termination.max_sim_time_s", t.max_sim_time_s);

        check(&mut e, (0.0..=1.0).contains(&self.gap_fraction), "gap_fraction",
            format_args!("must be in [0, 1], got {}", self.gap_fraction));
        positive(&mut e, "collection_window_s", self.collection_window_s);
        non_negative(&mut e, "compute_delay_s", self.compute_delay_s);
        positive(&mut e, "visibility_step_s", self.visibility_step_s);
        positive(&mut e, "payload.bits_per_param", self.payload.bits_per_param);
        non_negative(&mut e, "payload.metadata_bits", self.payload.metadata_bits);
        e
    }

    /// Validates and converts into the engine's run description.
    pub fn to_run_config(&self) -> Result<RunConfig> {
        let violations = self.violations();
        if !violations.is_empty() {
            return Err(Error::Validation(violations));
        }
        let c = &self.constellation;
        let constants = BodyConstants::default();
        let bounds = AltitudeBounds {
            min: c.min_altitude_m,
            max: c.max_altitude_m,
        };
        let constellation = match &c.orbits {
            Some(orbits) => {
                let orbits = orbits
                    .iter()
                    .map(|o| {
                        OrbitSpec::new(
                            o.altitude_m,
                            o.inclination_deg.to_radians(),
                            o.raan_deg.to_radians(),
                            o.num_sats,
                            o.phase_offset_deg.to_radians(),
                        )
                    })
                    .collect();
                ConstellationSpec::with_bounds(constants, orbits, bounds)?
            }
            None => {
                let walker = ConstellationSpec::walker_delta(
                    constants,
                    c.num_orbits,
                    c.sats_per_orbit,
                    c.altitude_m,
                    c.inclination_deg.to_radians(),
                    c.phasing_deg.to_radians(),
                )?;
                ConstellationSpec::with_bounds(constants, walker.orbits, bounds)?
            }
        };
        let nodes: Vec<NodeSpec> = self.nodes.iter().map(NodeConfig::to_spec).collect();
        for n in &nodes {
            n.validate()?;
        }
        let link = self.link.to_params();
        link.validate()?;
        let data = match &self.data.source {
            DataSourceConfig::Synthetic(s) => DataSource::Synthetic(*s),
            DataSourceConfig::Idx(x) => DataSource::Idx {
                images: x.images.clone(),
                labels: x.labels.clone(),
                num_classes: x.num_classes,
                limit: x.limit,
            },
        };
        Ok(RunConfig {
            constellation,
            nodes,
            link,
            learner: LearnerSettings {
                kind: self.learner.kind,
                hidden_dim: self.learner.hidden_dim,
                init_scale: self.learner.init_scale,
            },
            train: TrainConfig {
                local_iters: self.train.local_iters,
                batch_size: self.train.batch_size,
                learning_rate: self.train.learning_rate,
                steps: self.train.steps,
                rng_seed: 0,
            },
            data,
            partition: self.data.partition,
            test_fraction: self.data.test_fraction,
            mode: self.mode,
            sync_relay: self.sync_relay,
            termination: Termination {
                target_accuracy: self.termination.target_accuracy,
                max_epochs: self.termination.max_epochs,
                max_sim_time: self.termination.max_sim_time_s,
            },
            gap_fraction: self.gap_fraction,
            collection_window: self.collection_window_s,
            compute_delay: self.compute_delay_s,
            master_seed: self.master_seed,
            visibility_step: self.visibility_step_s,
            payload: PayloadSizes {
                bits_per_param: self.payload.bits_per_param,
                metadata_bits: self.payload.metadata_bits,
            },
        })
    }

    /// Pretty JSON with every default spelled out.
    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("config serialises");
        s.push('\n');
        s
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_document_gives_table_defaults() {
        let cfg = parse_config("").unwrap();
        assert_eq!(cfg, ScenarioConfig::default());
        assert_eq!(cfg.link.tx_power_dbm, 40.0);
        assert_eq!(cfg.link.tx_gain_dbi, 6.98);
        assert_eq!(cfg.link.carrier_freq_hz, 2.4e9);
        assert_eq!(cfg.link.noise_temp_k, 354.81);
        assert_eq!(cfg.link.fixed_rate_bps, 16.0e6);
        assert_eq!(cfg.train.local_iters, 100);
        assert_eq!(cfg.train.learning_rate, 0.01);
        assert_eq!(cfg.train.batch_size, 32);
        assert!(cfg.to_run_config().is_ok());
    }

    #[test]
    fn negative_altitude_names_the_field() {
        let cfg = parse_config(r#"{"constellation": {"altitude_m": -1}}"#).unwrap();
        match cfg.to_run_config() {
            Err(Error::Validation(v)) => {
                assert_eq!(v.len(), 1);
                assert!(v[0].starts_with("constellation.altitude_m"), "{v:?}");
            }
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn every_violation_is_listed() {
        let cfg = parse_config(
            r#"{"gap_fraction": 2, "compute_delay_s": -1, "nodes": [], "train": {"batch_size": 0}}"#,
        )
        .unwrap();
        assert_eq!(cfg.violations().len(), 4);
    }

    #[test]
    fn unknown_keys_are_rejected() {
        let err = parse_config(r#"{"foo": 1}"#).unwrap_err();
        assert!(err.to_string().contains("foo"), "{err}");
        let err = parse_config("{\n  \"link\": {\"bar\": 1}\n}").unwrap_err();
        match err {
            Error::ConfigParse { line, message, .. } => {
                assert_eq!(line, 2);
                assert!(message.contains("bar"));
            }
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn overrides_patch_nested_values() {
        let cfg = parse_config_with_overrides(
            r#"{"nodes": [{"id": "a", "latitude_deg": 1, "longitude_deg": 2}]}"#,
            &[
                "constellation.num_orbits=3".into(),
                "mode=sync".into(),
                "nodes.0.id=b".into(),
                "termination.target_accuracy=0.5".into(),
            ],
        )
        .unwrap();
        assert_eq!(cfg.constellation.num_orbits, 3);
        assert_eq!(cfg.mode, Mode::Sync);
        assert_eq!(cfg.nodes[0].id, "b");
        assert_eq!(cfg.termination.target_accuracy, Some(0.5));
        assert!(parse_override("novalue").is_err());
        assert!(parse_override("a..b=1").is_err());
        assert!(parse_config_with_overrides("{}", &["nodes.7.id=x".into()]).is_err());
    }

    #[test]
    fn echo_round_trips() {
        let cfg = parse_config_with_overrides("", &["master_seed=9".into(), "learner.kind=mlp_one_hidden".into()])
            .unwrap();
        let again = parse_config(&cfg.to_json()).unwrap();
        assert_eq!(again, cfg);
    }
}
