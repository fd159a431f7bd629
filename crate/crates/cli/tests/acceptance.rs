//! Acceptance suite. Prints one PASS/FAIL/SKIP line per criterion and exits
//! non-zero if any criterion fails.
//!
//! Criterion 10 runs only when `LSMDYN_ICUB_CSV` points at the published
//! iCub recording (optionally with `LSMDYN_ICUB_SCHEMA` for its column map).

use std::collections::BTreeMap;
use std::path::Path;
use std::process::Command;
use std::time::{Duration, Instant};

use liquid_dynamics::control::{
    forward_dynamics, inverse_dynamics, track, AnalyticFeedforward, PlantParams, TrackConfig,
    TrackingLog,
};
use liquid_dynamics::encoding::{EncodingMode, ScheduleKind};
use liquid_dynamics::experiment::ExperimentConfig;
use liquid_dynamics::pipeline::Pipeline;
use liquid_dynamics::pso::{search, PsoConfig, SearchSpace};
use liquid_dynamics::readout::{self, Mlp};
use liquid_dynamics::seed;
use liquid_dynamics::snn::{
    connection_probability, pairwise_distance, ClassConstants, LifParams, Reservoir,
    ReservoirConfig, Synapse, SEARCH_BOUNDS,
};
use rand::Rng;

enum Status {
    Pass,
    Fail,
    Skip,
}

struct Outcome {
    status: Status,
    detail: String,
}

fn pass_if(ok: bool, detail: String) -> Outcome {
    Outcome {
        status: if ok { Status::Pass } else { Status::Fail },
        detail,
    }
}

fn secs(d: Duration) -> f64 {
    d.as_secs_f64()
}

// ---------------------------------------------------------------- 1

struct ScalarLif {
    v: f64,
    i: f64,
}

impl ScalarLif {
    fn step(&mut self, p: &LifParams, spike_in: f64) -> bool {
        self.i = self.i + p.dt * (-self.i / p.tau3) + spike_in;
        self.v = self.v + p.dt * (-(self.v - p.v_rest) / p.tau1 + self.i / p.tau2);
        if self.v >= p.v_thresh {
            self.v = p.v_rest;
            true
        } else {
            false
        }
    }
}

fn lif_oracle() -> Outcome {
    let start = Instant::now();
    let lif = LifParams::default();
    let (w_in, w_01, w_10) = (1.1, 1.7, -0.8);
    let mut res = Reservoir::from_parts(
        lif,
        vec![false, true],
        vec![vec![Synapse {
            target: 0,
            weight: w_in,
        }]],
        vec![
            vec![Synapse {
                target: 1,
                weight: w_01,
            }],
            vec![Synapse {
                target: 0,
                weight: w_10,
            }],
        ],
    )
    .unwrap();
    let mut rng = seed::rng(1);
    let (mut a, mut b) = (ScalarLif { v: 0.0, i: 0.0 }, ScalarLif { v: 0.0, i: 0.0 });
    let (mut prev_a, mut prev_b) = (false, false);
    let mut mismatches = 0;
    let mut spikes = [0usize; 2];
    for _ in 0..1000 {
        let x: f64 = if rng.gen_bool(0.4) { 1.0 } else { 0.0 };
        let mut in_a = 0.0;
        if x != 0.0 {
            in_a += w_in * x;
        }
        if prev_b {
            in_a += w_10;
        }
        let in_b = if prev_a { w_01 } else { 0.0 };
        let (fa, fb) = (a.step(&lif, in_a), b.step(&lif, in_b));
        (prev_a, prev_b) = (fa, fb);
        let fired = res.step_once(&[x], ScheduleKind::Spikes).unwrap();
        if fired != [fa, fb] {
            mismatches += 1;
        }
        spikes[0] += usize::from(fa);
        spikes[1] += usize::from(fb);
    }
    let t = start.elapsed();
    pass_if(
        mismatches == 0 && spikes[0] > 0 && spikes[1] > 0 && t < Duration::from_secs(1),
        format!(
            "{mismatches} mismatched steps of 1000, spikes {spikes:?}, {:.3} s",
            secs(t)
        ),
    )
}

// ---------------------------------------------------------------- 2

fn connectivity() -> Outcome {
    let start = Instant::now();
    let mid = |k: usize| 0.5 * (SEARCH_BOUNDS[k].1 + SEARCH_BOUNDS[k].2);
    let c = ClassConstants {
        ee: mid(2),
        ei: mid(3),
        ie: mid(4),
        ii: mid(5),
    };
    let base = ReservoirConfig {
        n: 125,
        p_input: mid(1),
        c,
        ..ReservoirConfig::default()
    };
    // (class, squared distance) → (trials, connections)
    let mut tally: BTreeMap<(usize, i64), (u64, u64)> = BTreeMap::new();
    for s in 0..200 {
        let cfg = ReservoirConfig {
            seed: s,
            ..base.clone()
        };
        let res = Reservoir::build(&cfg, 1).unwrap();
        let inh = res.is_inhibitory();
        let pos = res.positions();
        let n = res.len();
        for (i, edges) in res.recurrent_edges().iter().enumerate() {
            let mut hit = vec![false; n];
            for e in edges {
                hit[e.target as usize] = true;
            }
            for (j, &h) in hit.iter().enumerate() {
                let d2: i64 = (0..3).map(|k| i64::from(pos[i][k] - pos[j][k]).pow(2)).sum();
                let class = usize::from(inh[i]) * 2 + usize::from(inh[j]);
                let entry = tally.entry((class, d2)).or_default();
                entry.0 += 1;
                entry.1 += u64::from(h);
            }
        }
    }
    let mut worst = (0.0f64, String::new());
    let mut failures = 0;
    for (&(class, d2), &(trials, hits)) in &tally {
        let (pre, post) = (class >= 2, class % 2 == 1);
        let d = pairwise_distance([0, 0, 0], [d2 as i32, 0, 0]).sqrt();
        let p = connection_probability(d, c.get(pre, post), base.lambda);
        let freq = hits as f64 / trials as f64;
        let sigma = (p * (1.0 - p) / trials as f64).sqrt();
        let dev = (freq - p).abs();
        let ok = if sigma == 0.0 { dev == 0.0 } else { dev <= 3.0 * sigma };
        if !ok {
            failures += 1;
        }
        let z = if sigma == 0.0 { 0.0 } else { dev / sigma };
        if z > worst.0 {
            worst = (z, format!("class {class} d²={d2}"));
        }
    }
    let t = start.elapsed();
    pass_if(
        failures == 0 && t < Duration::from_secs(30),
        format!(
            "{} (class, distance) cells, {failures} outside 3σ (about {:.2} expected by chance), worst {:.2}σ at {}, {:.1} s",
            tally.len(),
            tally.len() as f64 * 0.0027,
            worst.0,
            worst.1,
            secs(t)
        ),
    )
}

// ---------------------------------------------------------------- 3

fn param(m: &mut Mlp, k: usize) -> &mut f64 {
    let (a, b, c) = (m.w1.len(), m.b1.len(), m.w2.len());
    if k < a {
        &mut m.w1[k]
    } else if k < a + b {
        &mut m.b1[k - a]
    } else if k < a + b + c {
        &mut m.w2[k - a - b]
    } else {
        &mut m.b2[k - a - b - c]
    }
}

fn gradient_check() -> Outcome {
    let start = Instant::now();
    let mut worst = 0.0f64;
    for s in 0..10u64 {
        let mut rng = seed::rng(1000 + s);
        let m = Mlp::new(12, 10, 3, s);
        let x: Vec<Vec<f64>> = (0..16)
            .map(|_| (0..12).map(|_| rng.gen_range(-1.0..1.0)).collect())
            .collect();
        let t: Vec<Vec<f64>> = (0..16)
            .map(|_| (0..3).map(|_| rng.gen_range(-1.0..1.0)).collect())
            .collect();
        let (_, g) = m.gradient(&x, &t).unwrap();
        let flat: Vec<f64> = g.w1.iter().chain(&g.b1).chain(&g.w2).chain(&g.b2).copied().collect();
        for (k, &analytic) in flat.iter().enumerate() {
            let h = 1e-6;
            let mut plus = m.clone();
            *param(&mut plus, k) += h;
            let mut minus = m.clone();
            *param(&mut minus, k) -= h;
            let numeric = (plus.loss(&x, &t).unwrap() - minus.loss(&x, &t).unwrap()) / (2.0 * h);
            let rel = (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(1e-8);
            worst = worst.max(rel);
        }
    }
    let t = start.elapsed();
    pass_if(
        worst < 1e-5 && t < Duration::from_secs(10),
        format!("worst relative error {worst:.2e} over 10 seeds, {:.2} s", secs(t)),
    )
}

// ---------------------------------------------------------------- 4

fn plant_oracle() -> Outcome {
    let start = Instant::now();
    let p = PlantParams::default();
    let mut rng = seed::rng(4);
    let mut worst = 0.0f64;
    for _ in 0..1000 {
        let mut v = || [rng.gen_range(-3.0..3.0), rng.gen_range(-3.0..3.0)];
        let (q, dq, ddq) = (v(), v(), v());
        let back = forward_dynamics(q, dq, inverse_dynamics(q, dq, ddq, &p), &p);
        worst = worst.max((back[0] - ddq[0]).abs().max((back[1] - ddq[1]).abs()));
    }
    let mut spd = true;
    for a in 0..20 {
        for b in 0..20 {
            let q = [
                -std::f64::consts::PI + a as f64 * std::f64::consts::TAU / 19.0,
                -std::f64::consts::PI + b as f64 * std::f64::consts::TAU / 19.0,
            ];
            let m = p.mass_matrix(q);
            spd &= m[0][1] == m[1][0] && m[0][0] > 0.0 && m[0][0] * m[1][1] - m[0][1] * m[1][0] > 0.0;
        }
    }
    let t = start.elapsed();
    pass_if(
        worst < 1e-9 && spd && t < Duration::from_secs(5),
        format!(
            "round-trip max error {worst:.2e}, mass matrix SPD on 20×20 grid: {spd}, {:.3} s",
            secs(t)
        ),
    )
}

// ---------------------------------------------------------------- 5

fn pso_benchmark() -> Outcome {
    let start = Instant::now();
    let space = SearchSpace::reservoir_default();
    // sphere centred in the box, each coordinate scaled by its width
    let sphere = |x: &[f64]| -> f64 {
        x.iter()
            .zip(space.params())
            .map(|(v, p)| ((v - 0.5 * (p.lower + p.upper)) / (p.upper - p.lower)).powi(2))
            .sum()
    };
    let mut worst = 0.0f64;
    let mut monotone = true;
    for s in 0..20 {
        let r = search(&space, 10, 50, s, PsoConfig::default(), sphere).unwrap();
        worst = worst.max(r.best_fitness);
        monotone &= r
            .history
            .windows(2)
            .all(|w| w[1].best_fitness <= w[0].best_fitness);
    }
    let t = start.elapsed();
    pass_if(
        worst < 1e-3 && monotone && t < Duration::from_secs(10),
        format!(
            "worst gbest {worst:.2e} over 20 seeds, histories non-increasing: {monotone}, {:.2} s",
            secs(t)
        ),
    )
}

// ---------------------------------------------------------------- 6–8

struct SeedRun {
    cfg: ExperimentConfig,
    delta: Pipeline,
    delta_mse: f64,
    delta_nmse: f64,
    mean_nmse: f64,
    train_time: Duration,
}

fn regression(runs: &mut Vec<SeedRun>) -> Outcome {
    let start = Instant::now();
    let mut lines = Vec::new();
    let mut ok = true;
    for s in 0..5 {
        let t0 = Instant::now();
        let cfg = ExperimentConfig {
            seed: s,
            ..ExperimentConfig::default()
        };
        let ds = cfg.load_dataset().unwrap();
        let (train, test) = cfg.split(&ds).unwrap();
        assert_eq!((train.len(), test.len()), (5000, 2000));
        let out = Pipeline::train(&cfg.pipeline_config(Some(EncodingMode::Delta)), &train, None).unwrap();
        let m = out.pipeline.evaluate(&test).unwrap();
        let mean = readout::baseline_mean(&train, &test).unwrap();
        let (nmse, base) = (m.mean_nmse.unwrap(), mean.mean_nmse.unwrap());
        ok &= nmse < 0.5 && nmse < base;
        lines.push(format!("seed {s}: {nmse:.4} vs mean {base:.3}"));
        runs.push(SeedRun {
            cfg,
            delta: out.pipeline,
            delta_mse: m.mean_mse,
            delta_nmse: nmse,
            mean_nmse: base,
            train_time: t0.elapsed(),
        });
    }
    let t = start.elapsed();
    pass_if(
        ok && t < Duration::from_secs(300),
        format!("test NMSE {}; {:.0} s", lines.join(", "), secs(t)),
    )
}

fn ablation(runs: &[SeedRun]) -> Outcome {
    let start = Instant::now();
    let mut wins = 0;
    let mut lines = Vec::new();
    let mut full_order = 0;
    for r in runs {
        let ds = r.cfg.load_dataset().unwrap();
        let (train, test) = r.cfg.split(&ds).unwrap();
        let mse = |mode| {
            let out = Pipeline::train(&r.cfg.pipeline_config(Some(mode)), &train, None).unwrap();
            out.pipeline.evaluate(&test).unwrap().mean_mse
        };
        let (rate, direct) = (mse(EncodingMode::Rate), mse(EncodingMode::Direct));
        if r.delta_mse <= direct {
            wins += 1;
        }
        if r.delta_mse < rate && rate < direct {
            full_order += 1;
        }
        lines.push(format!(
            "seed {}: delta {:.4} rate {rate:.4} direct {direct:.4}",
            r.cfg.seed, r.delta_mse
        ));
    }
    let t = start.elapsed();
    let shared: f64 = runs.iter().map(|r| secs(r.train_time)).sum();
    pass_if(
        wins >= 4 && t + Duration::from_secs_f64(shared) < Duration::from_secs(900),
        format!(
            "delta ≤ direct MSE on {wins}/5 seeds (delta < rate < direct on {full_order}/5, not gated); {}; {:.0} s + {shared:.0} s shared delta training",
            lines.join("; "),
            secs(t)
        ),
    )
}

fn identity_holds(log: &TrackingLog) -> bool {
    (0..log.len()).all(|k| {
        (0..2).all(|j| log.applied[k][j] == log.feedforward[k][j] + log.feedback[k][j])
    })
}

fn closed_loop(runs: &[SeedRun]) -> Outcome {
    let start = Instant::now();
    let (mut learned, mut pd, mut oracle) = (0.0, 0.0, 0.0);
    let mut identity = true;
    for r in runs {
        let cfg = &r.cfg;
        let desired = cfg.reach_trajectory().unwrap();
        let tc = TrackConfig {
            plant_dt: cfg.control.plant_dt,
        };
        let gains = &cfg.control.gains;
        let mut ff = r.delta.predictor().unwrap();
        let l = track(&desired, Some(&mut ff), gains, &cfg.plant, &tc).unwrap();
        let p = track(&desired, None, gains, &cfg.plant, &tc).unwrap();
        let mut exact = AnalyticFeedforward(cfg.plant);
        let o = track(&desired, Some(&mut exact), gains, &cfg.plant, &tc).unwrap();
        for log in [&l, &p, &o] {
            identity &= identity_holds(log);
        }
        learned += l.rms_position_error() / 5.0;
        pd += p.rms_position_error() / 5.0;
        oracle += o.rms_position_error() / 5.0;
    }
    let t = start.elapsed();
    pass_if(
        learned < pd && learned > oracle && identity && t < Duration::from_secs(120),
        format!(
            "mean RMS position error: oracle {oracle:.2e} < learned {learned:.2e} < PD {pd:.2e}; applied = ff + fb: {identity}; {:.1} s (models shared with criterion 6)",
            secs(t)
        ),
    )
}

// ---------------------------------------------------------------- 9

const TINY: &str = r#"{
  "schema_version": 1,
  "seed": 9,
  "dataset": {"synthetic": {"n_moves": 5}},
  "split": {"n_train": 400},
  "reservoir": {"n": 100},
  "readout": {"hidden": 16, "epochs": 5},
  "pso": {"particle_counts": [2, 3], "iterations": 3, "fitness_epochs": 2},
  "control": {"reach": {"n_moves": 2}}
}"#;

fn lsmdyn(dir: &Path, args: &[&str]) -> bool {
    Command::new(env!("CARGO_BIN_EXE_lsmdyn"))
        .current_dir(dir)
        .args(args)
        .output()
        .map(|o| o.status.success())
        .unwrap_or(false)
}

fn snapshot(dir: &Path) -> BTreeMap<String, Vec<u8>> {
    std::fs::read_dir(dir)
        .unwrap()
        .map(|e| {
            let p = e.unwrap().path();
            (
                p.file_name().unwrap().to_string_lossy().into_owned(),
                std::fs::read(&p).unwrap(),
            )
        })
        .collect()
}

fn reproducibility() -> Outcome {
    let start = Instant::now();
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(dir.path().join("tiny.json"), TINY).unwrap();
    let commands: [&[&str]; 9] = [
        &["gen"],
        &["train"],
        &["train", "--encoder", "rate"],
        &["train", "--encoder", "direct"],
        &["eval"],
        &["search"],
        &["track"],
        &["track", "--no-model"],
        &["encode-inspect"],
    ];
    let mut all_ok = true;
    for out in ["a", "b"] {
        for cmd in commands {
            let mut args = vec!["--config", "tiny.json", "--out", out];
            args.extend_from_slice(cmd);
            all_ok &= lsmdyn(dir.path(), &args);
        }
    }
    let (a, b) = (snapshot(&dir.path().join("a")), snapshot(&dir.path().join("b")));
    let differing: Vec<&String> = a.keys().filter(|k| b.get(*k) != a.get(*k)).collect();
    let t = start.elapsed();
    pass_if(
        all_ok && !a.is_empty() && a.len() == b.len() && differing.is_empty(),
        format!(
            "{} files from {} subcommand runs, {} differ {:?}, {:.1} s",
            a.len(),
            commands.len(),
            differing.len(),
            differing,
            secs(t)
        ),
    )
}

// ---------------------------------------------------------------- 10

fn icub() -> Outcome {
    let Ok(csv) = std::env::var("LSMDYN_ICUB_CSV") else {
        return Outcome {
            status: Status::Skip,
            detail: "set LSMDYN_ICUB_CSV to the iCub recording to run".into(),
        };
    };
    let dir = tempfile::tempdir().unwrap();
    let schema = std::env::var("LSMDYN_ICUB_SCHEMA")
        .map(|s| format!(r#", "schema": {s:?}"#))
        .unwrap_or_default();
    let config = format!(
        r#"{{"schema_version": 1, "dataset": {{"csv": {{"path": {csv:?}{schema}}}}}, "split": {{"n_train": 5271}}}}"#
    );
    std::fs::write(dir.path().join("icub.json"), config).unwrap();
    let rows = liquid_dynamics::dataset::load_csv(
        &csv,
        std::env::var("LSMDYN_ICUB_SCHEMA")
            .ok()
            .map(|s| liquid_dynamics::dataset::CsvSchema::load(s).unwrap())
            .as_ref(),
        100.0,
    )
    .map(|d| d.len());
    let trained = lsmdyn(dir.path(), &["--config", "icub.json", "--out", "o", "train"]);
    let evaluated = lsmdyn(dir.path(), &["--config", "icub.json", "--out", "o", "eval"]);
    let table = std::fs::read_to_string(dir.path().join("o/metrics_eval.csv")).unwrap_or_default();
    let test_lsm = table
        .lines()
        .find(|l| l.starts_with("test,lsm"))
        .unwrap_or("")
        .to_string();
    pass_if(
        trained && evaluated && matches!(rows, Ok(7958)),
        format!("rows {rows:?}; per-joint metrics (no numeric gate): {test_lsm}"),
    )
}

fn main() {
    let mut results: Vec<(u32, &str, Outcome)> = Vec::new();
    let mut report = |n: u32, name: &'static str, o: Outcome| {
        let tag = match o.status {
            Status::Pass => "PASS",
            Status::Fail => "FAIL",
            Status::Skip => "SKIP",
        };
        println!("[{tag}] criterion {n:>2}: {name}: {}", o.detail);
        results.push((n, name, o));
    };
    report(1, "LIF oracle equivalence", lif_oracle());
    report(2, "connectivity statistics", connectivity());
    report(3, "gradient check", gradient_check());
    report(4, "plant oracle", plant_oracle());
    report(5, "PSO benchmark", pso_benchmark());
    let mut runs = Vec::new();
    report(6, "end-to-end regression", regression(&mut runs));
    for r in &runs {
        println!(
            "    seed {}: delta NMSE {:.4}, mean baseline {:.3}",
            r.cfg.seed, r.delta_nmse, r.mean_nmse
        );
    }
    report(7, "encoding ablation", ablation(&runs));
    report(8, "closed-loop tracking", closed_loop(&runs));
    report(9, "reproducibility", reproducibility());
    report(10, "iCub ingestion (optional)", icub());

    let failed: Vec<u32> = results
        .iter()
        .filter(|(_, _, o)| matches!(o.status, Status::Fail))
        .map(|(n, _, _)| *n)
        .collect();
    if failed.is_empty() {
        println!("acceptance: all criteria passed or skipped");
    } else {
        println!("acceptance: failed criteria {failed:?}");
        std::process::exit(1);
    }
}
