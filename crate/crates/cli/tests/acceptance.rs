//! Acceptance checks. Runs as a plain binary so every line is printed.

#![allow(clippy::needless_range_loop)]

use std::collections::BTreeSet;
use std::f64::consts::TAU;
use std::path::PathBuf;
use std::process::{Command, ExitCode};
use std::time::Instant;

use orbitfl::aggregation::{
    aggregate, initial_grouping, orbit_distance, partial_global_model, staleness_discount,
    LocalUpdate, SatMetadata,
};
use orbitfl::config::load_config;
use orbitfl::fl::{batch_gradient, fedavg, local_loss, local_train, LabeledDataset, LearnerSpec, ModelParams, TrainConfig};
use orbitfl::link::{free_space_path_loss, transfer_delay, LinkParams, RateMode};
use orbitfl::orbital::{
    orbital_period, orbital_velocity, visibility_windows, BodyConstants, EciPosition, SatelliteId,
};
use orbitfl::propagation::intra_orbit_relay;
use orbitfl::sim::{self, prepare, training_seed, Mode, RunConfig};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

type Check = fn() -> Result<String, String>;

fn main() -> ExitCode {
    let checks: [(&str, Check); 11] = [
        ("orbital oracles", orbital_oracles),
        ("link oracles", link_oracles),
        ("visibility equivalence", visibility_equivalence),
        ("fl math", fl_math),
        ("staleness properties", staleness_properties),
        ("grouping recovers structure", grouping_recovers_structure),
        ("relay termination", relay_termination),
        ("async vs sync direction of effect", direction_of_effect),
        ("determinism", determinism),
        ("two parameter servers", two_parameter_servers),
        ("sanity: scenarios validate", scenarios_validate),
    ];
    let mut failed = 0;
    for (name, check) in checks {
        let start = Instant::now();
        let result = check();
        let secs = start.elapsed().as_secs_f64();
        match result {
            Ok(msg) => println!("PASS {name} ({secs:.1} s): {msg}"),
            Err(msg) => {
                failed += 1;
                println!("FAIL {name} ({secs:.1} s): {msg}");
            }
        }
    }
    println!("{} of {} criteria passed", checks.len() - failed, checks.len());
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}

fn ensure(ok: bool, msg: String) -> Result<String, String> {
    if ok {
        Ok(msg)
    } else {
        Err(msg)
    }
}

fn scenario(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../scenarios").join(name)
}

fn run_config(name: &str) -> RunConfig {
    load_config(&scenario(name), &[]).unwrap().to_run_config().unwrap()
}

fn rel(a: f64, b: f64) -> f64 {
    (a - b).abs() / b.abs()
}

fn orbital_oracles() -> Result<String, String> {
    let c = BodyConstants::default();
    let v = orbital_velocity(&c, 2.0e6).map_err(|e| e.to_string())?;
    let t = orbital_period(&c, 2.0e6).map_err(|e| e.to_string())?;
    ensure(
        rel(v, 6900.5) <= 1e-3 && rel(t, 7622.0) <= 1e-3,
        format!("v = {v:.2} m/s (want 6900.5), T = {t:.1} s (want 7622)"),
    )
}

fn link_oracles() -> Result<String, String> {
    let c = BodyConstants::default();
    let a = EciPosition::new(7.0e6, 0.0, 0.0);
    let b = EciPosition::new(7.0e6, 2.0e6, 0.0);
    let fspl_db = 10.0 * free_space_path_loss(a, b, 2.4e9, &c, 0.0).map_err(|e| e.to_string())?.log10();
    let params = LinkParams {
        rate_mode: RateMode::Fixed,
        fixed_rate: 16.0e6,
        proc_delay_tx: 0.0,
        proc_delay_rx: 0.0,
        ..LinkParams::default()
    };
    let delay = transfer_delay(&params, &c, a, b, 8.0e6)
        .map_err(|e| e.to_string())?
        .ok_or("link unexpectedly blocked")?;
    ensure(
        (fspl_db - 166.07).abs() <= 0.05 && (delay - 0.50667).abs() <= 1e-5,
        format!("FSPL = {fspl_db:.3} dB (want 166.07), delay = {delay:.6} s (want 0.50667)"),
    )
}

/// Circular-orbit geometry written out from scratch, sampled every 0.1 s.
fn visibility_equivalence() -> Result<String, String> {
    let cfg = run_config("reference.json");
    let spec = &cfg.constellation;
    let node = &cfg.nodes[0];
    let c = spec.constants;
    let horizon = 86400.0;
    let windows = visibility_windows(spec, node, 0.0, horizon, cfg.visibility_step).map_err(|e| e.to_string())?;
    let dt = 0.1;
    let samples = (horizon / dt).round() as usize;
    let (mut mismatches, mut worst, mut count_errors) = (0usize, 0.0f64, 0usize);
    for (o, orbit) in spec.orbits.iter().enumerate() {
        let r = c.earth_radius + orbit.altitude;
        let n = (c.gm / (r * r * r)).sqrt();
        for slot in 0..orbit.num_sats {
            let sat = SatelliteId::new(o, slot);
            let mine: Vec<(f64, f64)> = windows.iter().filter(|w| w.sat == sat).map(|w| (w.enter, w.exit)).collect();
            let visible = |t: f64| {
                let u = TAU * slot as f64 / orbit.num_sats as f64 + orbit.phase_offset + n * (t - spec.epoch_time_origin);
                let (si, ci) = orbit.inclination.sin_cos();
                let (so, co) = orbit.raan.sin_cos();
                let s = [
                    r * (co * u.cos() - so * u.sin() * ci),
                    r * (so * u.cos() + co * u.sin() * ci),
                    r * u.sin() * si,
                ];
                let rn = c.earth_radius + node.altitude;
                let lon = node.longitude + c.earth_rotation_rate * t;
                let g = [
                    rn * node.latitude.cos() * lon.cos(),
                    rn * node.latitude.cos() * lon.sin(),
                    rn * node.latitude.sin(),
                ];
                let d = [s[0] - g[0], s[1] - g[1], s[2] - g[2]];
                let dn = (d[0] * d[0] + d[1] * d[1] + d[2] * d[2]).sqrt();
                let up = (d[0] * g[0] + d[1] * g[1] + d[2] * g[2]) / (dn * rn);
                up >= node.min_elevation.sin()
            };
            let in_window = |t: f64| mine.iter().any(|&(a, b)| a <= t && t <= b);
            let near_boundary = |t: f64| mine.iter().any(|&(a, b)| (t - a).abs() <= dt || (t - b).abs() <= dt);
            let mut transitions = Vec::new();
            let mut prev = visible(0.0);
            for k in 0..=samples {
                let t = k as f64 * dt;
                let v = visible(t);
                if v != in_window(t) && !near_boundary(t) {
                    mismatches += 1;
                }
                if k > 0 && v != prev {
                    transitions.push((t - dt, t));
                }
                prev = v;
            }
            let bounds: Vec<f64> = mine
                .iter()
                .flat_map(|&(a, b)| [a, b])
                .filter(|&b| b > 0.0 && b < horizon)
                .collect();
            if bounds.len() != transitions.len() {
                count_errors += 1;
            }
            for b in bounds {
                let err = transitions
                    .iter()
                    .map(|&(lo, hi)| if b < lo { lo - b } else if b > hi { b - hi } else { 0.0 })
                    .fold(f64::INFINITY, f64::min);
                worst = worst.max(err);
            }
        }
    }
    ensure(
        mismatches == 0 && count_errors == 0 && worst <= 0.1,
        format!(
            "{} windows; {mismatches} interior disagreements, {count_errors} satellites with a different crossing count, worst boundary error {worst:.4} s",
            windows.len()
        ),
    )
}

fn random_dataset(rng: &mut ChaCha8Rng, rows: usize, dim: usize, classes: usize) -> LabeledDataset {
    let features = (0..rows * dim).map(|_| rng.random_range(-2.0..2.0)).collect();
    let labels = (0..rows).map(|_| rng.random_range(0..classes)).collect();
    LabeledDataset::new(dim, classes, features, labels).unwrap()
}

fn fl_math() -> Result<String, String> {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let mut worst_fd = 0.0f64;
    for case in 0..100 {
        let dim = rng.random_range(1..6);
        let classes = rng.random_range(2..5);
        let spec = if case % 2 == 0 {
            LearnerSpec::softmax(dim, classes)
        } else {
            LearnerSpec::mlp(dim, rng.random_range(1..6), classes)
        };
        let rows = rng.random_range(1..12);
        let data = random_dataset(&mut rng, rows, dim, classes);
        let model = ModelParams::new((0..spec.dim()).map(|_| rng.random_range(-1.0..1.0)).collect(), 0);
        let rows: Vec<usize> = (0..data.len()).collect();
        let g = batch_gradient(&spec, &model, &data, &rows).unwrap();
        let h = 1e-6;
        let fd: Vec<f64> = (0..spec.dim())
            .map(|k| {
                let mut p = model.clone();
                p.weights[k] += h;
                let mut m = model.clone();
                m.weights[k] -= h;
                (local_loss(&spec, &p, &data).unwrap() - local_loss(&spec, &m, &data).unwrap()) / (2.0 * h)
            })
            .collect();
        let diff = fd.iter().zip(&g).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt();
        let scale = g.iter().map(|x| x * x).sum::<f64>().sqrt().max(fd.iter().map(|x| x * x).sum::<f64>().sqrt());
        worst_fd = worst_fd.max(if scale > 0.0 { diff / scale } else { diff });
    }

    let mut worst_avg = 0.0f64;
    let mut worst_reduce = 0.0f64;
    for _ in 0..1000 {
        let dim = rng.random_range(1..8);
        let n = rng.random_range(1..10);
        let models: Vec<(ModelParams, usize)> = (0..n)
            .map(|_| {
                let w = (0..dim).map(|_| rng.random_range(-10.0..10.0)).collect();
                (ModelParams::new(w, 0), rng.random_range(1..1000))
            })
            .collect();
        let total: usize = models.iter().map(|m| m.1).sum();
        let brute: Vec<f64> = (0..dim)
            .map(|k| models.iter().map(|(m, s)| m.weights[k] * *s as f64).sum::<f64>() / total as f64)
            .collect();
        let avg = fedavg(&models).unwrap();
        let beta = rng.random_range(1..20);
        let updates: Vec<LocalUpdate> = models.iter().enumerate().map(|(i, (m, s))| update(i, m.weights.clone(), *s, beta)).collect();
        let d = staleness_discount(&updates, beta, total).unwrap();
        let prev = ModelParams::new((0..dim).map(|_| rng.random_range(-10.0..10.0)).collect(), 0);
        let agg = aggregate(&prev, &updates, &d.coefficients, d.gamma).unwrap();
        for k in 0..dim {
            let scale = brute[k].abs().max(1.0);
            worst_avg = worst_avg.max((avg.weights[k] - brute[k]).abs() / scale);
            worst_reduce = worst_reduce.max((agg.weights[k] - brute[k]).abs() / scale);
        }
    }
    ensure(
        worst_fd <= 1e-4 && worst_avg <= 1e-12 && worst_reduce <= 1e-12,
        format!("gradient rel err {worst_fd:.2e}; fedavg err {worst_avg:.2e}; fresh full aggregation vs weighted mean {worst_reduce:.2e}"),
    )
}

fn update(i: usize, weights: Vec<f64>, size: usize, epoch: u64) -> LocalUpdate {
    LocalUpdate {
        model: ModelParams::new(weights, 0),
        meta: SatMetadata {
            id: SatelliteId::new(i / 8, i % 8),
            size,
            loc: 0.0,
            ts: 0.0,
            epoch,
        },
    }
}

fn staleness_properties() -> Result<String, String> {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let (mut range_bad, mut mono_bad, mut hull_bad) = (0, 0, 0);
    for _ in 0..10_000 {
        let beta: u64 = rng.random_range(1..30);
        let n = rng.random_range(1..12);
        let dim = rng.random_range(1..5);
        let updates: Vec<LocalUpdate> = (0..n)
            .map(|i| {
                let w = (0..dim).map(|_| rng.random_range(-5.0..5.0)).collect();
                update(i, w, rng.random_range(1..500), rng.random_range(1..=beta))
            })
            .collect();
        let used: usize = updates.iter().map(|u| u.meta.size).sum();
        let total = used + rng.random_range(0..2000);
        let d = staleness_discount(&updates, beta, total).unwrap();
        if !(0.0..=1.0).contains(&d.gamma) {
            range_bad += 1;
        }
        // make one update staler and the discount must not grow
        let j = rng.random_range(0..n);
        if updates[j].meta.epoch > 1 {
            let mut staler = updates.clone();
            staler[j].meta.epoch = rng.random_range(1..updates[j].meta.epoch);
            if staleness_discount(&staler, beta, total).unwrap().gamma > d.gamma {
                mono_bad += 1;
            }
        }
        let prev: Vec<f64> = (0..dim).map(|_| rng.random_range(-5.0..5.0)).collect();
        let out = aggregate(&ModelParams::new(prev.clone(), 0), &updates, &d.coefficients, d.gamma).unwrap();
        for k in 0..dim {
            let lo = updates.iter().map(|u| u.model.weights[k]).fold(prev[k], f64::min);
            let hi = updates.iter().map(|u| u.model.weights[k]).fold(prev[k], f64::max);
            if out.weights[k] < lo - 1e-12 || out.weights[k] > hi + 1e-12 {
                hull_bad += 1;
            }
        }
    }
    ensure(
        range_bad + mono_bad + hull_bad == 0,
        format!("10000 cases: gamma out of range {range_bad}, monotonicity violations {mono_bad}, outside hull {hull_bad}"),
    )
}

fn grouping_recovers_structure() -> Result<String, String> {
    let cfg = run_config("reference.json");
    let prep = prepare(&cfg).map_err(|e| e.to_string())?;
    let sats = cfg.constellation.satellites();
    let mut distances = Vec::new();
    for o in 0..cfg.constellation.num_orbits() {
        let updates: Vec<LocalUpdate> = sats
            .iter()
            .enumerate()
            .filter(|(_, s)| s.orbit == o)
            .map(|(i, s)| {
                let tc = TrainConfig {
                    rng_seed: training_seed(cfg.master_seed, s.orbit, s.slot, 0),
                    ..cfg.train
                };
                let model = local_train(&prep.learner, &prep.initial_model, &prep.partitions[i], &tc).unwrap();
                LocalUpdate {
                    model,
                    meta: SatMetadata {
                        id: *s,
                        size: prep.partitions[i].len(),
                        loc: 0.0,
                        ts: 0.0,
                        epoch: 1,
                    },
                }
            })
            .collect();
        let partial = partial_global_model(&updates).map_err(|e| e.to_string())?;
        distances.push((o, orbit_distance(&partial, &prep.initial_model).map_err(|e| e.to_string())?));
    }
    let scheme = initial_grouping(&distances, cfg.gap_fraction, prep.initial_model.clone()).map_err(|e| e.to_string())?;
    let got: BTreeSet<Vec<usize>> = scheme.memberships().into_iter().collect();
    let want: BTreeSet<Vec<usize>> = [vec![0, 1], vec![2, 3, 4]].into_iter().collect();
    let shown: Vec<String> = distances.iter().map(|(o, d)| format!("{o}:{d:.3}")).collect();
    ensure(got == want, format!("groups {got:?} from distances [{}]", shown.join(", ")))
}

fn relay_termination() -> Result<String, String> {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let mut failures = Vec::new();
    let mut max_ratio = 0.0f64;
    for n in 3..=16 {
        for _ in 0..100 {
            let k = rng.random_range(1..=n);
            let mut seeds = BTreeSet::new();
            while seeds.len() < k {
                seeds.insert(rng.random_range(0..n));
            }
            let s = intra_orbit_relay(0, n, &seeds, 1.0, 0.0, 1.0);
            let all = s.first_receipt.len() == n && s.first_receipt.keys().copied().eq(0..n);
            // every non-seed satellite accepts from exactly one first-hop arrival time
            let accepted_once = (0..n).filter(|x| !seeds.contains(x)).all(|x| {
                let hop = s.first_receipt[&x] as f64;
                s.messages.iter().any(|m| m.dst == orbitfl::propagation::Endpoint::Sat(SatelliteId::new(0, x)) && m.arrive_time == hop)
            });
            max_ratio = max_ratio.max(s.messages.len() as f64 / n as f64);
            if !all || !accepted_once || s.messages.len() > 2 * n {
                failures.push(format!("n={n} seeds={seeds:?}"));
            }
        }
    }
    ensure(
        failures.is_empty(),
        format!("1400 seed sets, {} failures, max messages/N_o {max_ratio:.2} {}", failures.len(), failures.first().cloned().unwrap_or_default()),
    )
}

fn direction_of_effect() -> Result<String, String> {
    let mut cfg = run_config("reference.json");
    let target = cfg.termination.target_accuracy.ok_or("reference scenario has no target")?;
    // run both to the horizon so the final accuracies are comparable
    cfg.termination.target_accuracy = None;
    let a = sim::run(&RunConfig { mode: Mode::Async, ..cfg.clone() }).map_err(|e| e.to_string())?;
    let s = sim::run(&RunConfig { mode: Mode::Sync, ..cfg }).map_err(|e| e.to_string())?;
    let (ta, ts) = (a.time_to_accuracy(target), s.time_to_accuracy(target));
    let (fa, fs) = (a.final_accuracy(), s.final_accuracy());
    let msg = format!(
        "time to {target}: async {} s, sync {} s; final accuracy async {fa:.4}, sync {fs:.4}",
        fmt_time(ta),
        fmt_time(ts)
    );
    match (ta, ts) {
        (Some(ta), Some(ts)) => ensure(ta <= 0.5 * ts && fa >= fs - 0.02, format!("{msg}; ratio {:.3}", ta / ts)),
        (Some(_), None) => ensure(fa >= fs - 0.02, format!("{msg}; sync never reached the target")),
        _ => Err(msg),
    }
}

fn fmt_time(t: Option<f64>) -> String {
    t.map_or_else(|| "never".into(), |t| format!("{t:.0}"))
}

fn determinism() -> Result<String, String> {
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let mut outputs = Vec::new();
    for run in ["a", "b"] {
        let out = dir.path().join(run);
        let status = Command::new(env!("CARGO_BIN_EXE_orbitfl"))
            .args(["run", "--config"])
            .arg(scenario("reference.json"))
            .arg("--out")
            .arg(&out)
            .output()
            .map_err(|e| e.to_string())?;
        if !status.status.success() {
            return Err(String::from_utf8_lossy(&status.stderr).into_owned());
        }
        let read = |f: &str| std::fs::read(out.join(f)).map_err(|e| e.to_string());
        outputs.push((read("metrics.csv")?, read("events.jsonl")?));
    }
    ensure(
        outputs[0] == outputs[1],
        format!("metrics {} bytes, events {} bytes, identical: {}", outputs[0].0.len(), outputs[0].1.len(), outputs[0] == outputs[1]),
    )
}

fn two_parameter_servers() -> Result<String, String> {
    let one = sim::run(&run_config("reference.json")).map_err(|e| e.to_string())?;
    let two = sim::run(&run_config("two_hap.json")).map_err(|e| e.to_string())?;
    let target = run_config("reference.json").termination.target_accuracy.unwrap();
    let (t1, t2) = (one.time_to_accuracy(target), two.time_to_accuracy(target));
    let msg = format!("time to {target}: one HAP {} s, two HAPs {} s", fmt_time(t1), fmt_time(t2));
    match (t1, t2) {
        (Some(t1), Some(t2)) => ensure(t2 <= t1, msg),
        (None, Some(_)) => Ok(msg),
        _ => Err(msg),
    }
}

fn scenarios_validate() -> Result<String, String> {
    let mut names = Vec::new();
    for entry in std::fs::read_dir(scenario("")).map_err(|e| e.to_string())? {
        let path = entry.map_err(|e| e.to_string())?.path();
        load_config(&path, &[])
            .and_then(|c| c.to_run_config())
            .map_err(|e| format!("{}: {e}", path.display()))?;
        names.push(path.file_name().unwrap().to_string_lossy().into_owned());
    }
    names.sort();
    ensure(!names.is_empty(), names.join(", "))
}
