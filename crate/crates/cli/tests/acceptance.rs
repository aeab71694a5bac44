//! Acceptance suite. Runs every criterion, prints one PASS/FAIL line per
//! criterion and exits non-zero if any failed.

use std::collections::BTreeMap;
use std::io::{Read, Write};
use std::net::{TcpListener, TcpStream};
use std::panic::{self, AssertUnwindSafe};
use std::path::{Path, PathBuf};
use std::process::{Child, Command, Stdio};
use std::time::{Duration, Instant};

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use ctf_core::baselines::{
    dmd_fit, esn_fit, predict_zeros, ridge_readout, DmdConfig, EsnConfig, ReservoirSet,
};
use ctf_core::bundle::Bundle;
use ctf_core::metrics::{evaluate_predictions, Prediction, ScoreReport};
use ctf_core::splits::{make_splits, DatasetConfig, ParametricFamily, SplitSource};
use ctf_core::synth::{dispersion, gen_linear_system, gen_swell, LinearSystemConfig, Preset, SwellConfig, SwellMode};
use ctf_core::task::PredKey;
use ctf_core::tuner::{tune, Budget, HyperParamSpace, TuneOptions};
use ctf_core::{ScoreId, TimeSeriesMatrix};

type Check = fn() -> Result<(), String>;

macro_rules! ensure {
    ($cond:expr, $($msg:tt)+) => {
        if !$cond {
            return Err(format!($($msg)+));
        }
    };
}

fn main() {
    let criteria: [(&str, Check); 12] = [
        ("zeros baseline scores 0 everywhere", zeros_identity),
        ("hidden truths score 100 everywhere", perfect_match),
        ("random submissions stay in bounds, missing files floor", bounds_and_missing),
        ("E1 of alpha * truth is 100 alpha", short_term_scaling),
        ("E2 ignores circular spatial shifts", spectral_shift_invariance),
        ("DMD matches the matrix-power oracle", dmd_oracle),
        ("delay DMD recovers a sinusoid's frequency", hodmd_frequency),
        ("ESN spectral radius, ridge readout and seeding", esn_contracts),
        ("shipped split tables", split_fidelity),
        ("tuner finds the planted rank within budget", tuner_contract),
        ("swell phase speed follows the dispersion relation", swell_physics),
        ("ledger replay and HTTP leaderboard are byte-identical", referee_determinism),
    ];
    // Keep panic messages out of the summary lines; they surface as FAIL.
    panic::set_hook(Box::new(|_| {}));
    let mut failed = 0;
    for (i, (name, check)) in criteria.iter().enumerate() {
        let t0 = Instant::now();
        let outcome = panic::catch_unwind(AssertUnwindSafe(check)).unwrap_or_else(|p| {
            let msg = p
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_else(|| "panic".into());
            Err(format!("panicked: {msg}"))
        });
        let secs = t0.elapsed().as_secs_f64();
        match outcome {
            Ok(()) => println!("PASS {:>2} {name} ({secs:.2}s)", i + 1),
            Err(why) => {
                failed += 1;
                println!("FAIL {:>2} {name} ({secs:.2}s): {why}", i + 1);
            }
        }
    }
    println!("{} of {} criteria passed", criteria.len() - failed, criteria.len());
    if failed > 0 {
        std::process::exit(1);
    }
}

fn report_for(bundle: &Bundle, preds: BTreeMap<PredKey, Prediction>) -> Result<ScoreReport, String> {
    evaluate_predictions(bundle, "test", &preds).map_err(|e| e.to_string())
}

fn shapes(bundle: &Bundle) -> BTreeMap<PredKey, (usize, usize)> {
    PredKey::ALL
        .into_iter()
        .map(|k| (k, bundle.config().task(k.primary_score()).unwrap().pred_shape))
        .collect()
}

fn truths(bundle: &Bundle) -> BTreeMap<PredKey, Prediction> {
    PredKey::ALL
        .into_iter()
        .map(|k| (k, Ok(bundle.test(&k.test_key()).unwrap().clone())))
        .collect()
}

fn zeros_identity() -> Result<(), String> {
    for preset in Preset::ALL {
        let bundle = preset.bundle(11).map_err(|e| e.to_string())?;
        let t0 = Instant::now();
        let preds = shapes(&bundle)
            .into_iter()
            .map(|(k, s)| (k, Ok(predict_zeros(s))))
            .collect();
        let r = report_for(&bundle, preds)?;
        let secs = t0.elapsed().as_secs_f64();
        for (id, e) in r.scores.iter() {
            ensure!(e.abs() <= 1e-12, "{}: {id} = {e}", preset.name());
        }
        ensure!(r.composite == 0.0, "{}: composite {}", preset.name(), r.composite);
        ensure!(secs < 10.0, "scoring took {secs:.1}s");
    }
    Ok(())
}

fn perfect_match() -> Result<(), String> {
    for preset in Preset::ALL {
        let bundle = preset.bundle(3).map_err(|e| e.to_string())?;
        let r = report_for(&bundle, truths(&bundle))?;
        for (id, e) in r.scores.iter() {
            ensure!((e - 100.0).abs() <= 1e-9, "{}: {id} = {e}", preset.name());
        }
    }
    Ok(())
}

fn bounds_and_missing() -> Result<(), String> {
    let bundle = Preset::PulseSmall.bundle(0).map_err(|e| e.to_string())?;
    let shapes = shapes(&bundle);
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    for trial in 0..1000 {
        let scale = 10f64.powf(rng.random_range(-3.0..3.0));
        let preds = shapes
            .iter()
            .map(|(&k, &(r, c))| {
                let m = TimeSeriesMatrix::from_fn(r, c, |_, _| scale * rng.sample::<f64, _>(StandardNormal));
                (k, Ok(m))
            })
            .collect();
        let rep = report_for(&bundle, preds)?;
        for (id, e) in rep.scores.iter() {
            ensure!((-100.0..=100.0).contains(&e), "trial {trial}: {id} = {e}");
        }
        ensure!((-100.0..=100.0).contains(&rep.composite), "trial {trial}: composite {}", rep.composite);
    }

    let mut preds = truths(&bundle);
    preds.remove(&PredKey::ALL[0]);
    let rep = report_for(&bundle, preds)?;
    for (id, e) in rep.scores.iter() {
        let expect = if matches!(id, ScoreId::E1 | ScoreId::E2) { -100.0 } else { 100.0 };
        ensure!((e - expect).abs() <= 1e-9, "{id} = {e}, expected {expect}");
    }
    ensure!(rep.scores.get(ScoreId::E1) == -100.0, "missing file is not exactly -100");
    ensure!((rep.composite - 800.0 / 12.0).abs() < 1e-9, "composite {}", rep.composite);
    Ok(())
}

fn short_term_scaling() -> Result<(), String> {
    let bundle = Preset::SwellSmall.bundle(5).map_err(|e| e.to_string())?;
    for alpha in [0.0, 0.25, 0.5, 1.0] {
        let mut preds = truths(&bundle);
        let x1 = bundle.test("X1test").unwrap().map(|v| alpha * v);
        preds.insert(PredKey::ALL[0], Ok(x1));
        let e1 = report_for(&bundle, preds)?.scores.get(ScoreId::E1);
        ensure!((e1 - 100.0 * alpha).abs() <= 1e-9, "alpha {alpha}: E1 = {e1}");
    }
    Ok(())
}

fn spectral_shift_invariance() -> Result<(), String> {
    let bundle = Preset::SwellSmall.bundle(8).map_err(|e| e.to_string())?;
    let truth = bundle.test("X1test").unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let base = TimeSeriesMatrix::from_fn(truth.rows(), truth.cols(), |i, j| {
        0.7 * truth.get(i, j) + 0.3 * rng.sample::<f64, _>(StandardNormal)
    });
    let e2 = |pred: TimeSeriesMatrix| -> Result<f64, String> {
        let mut preds = truths(&bundle);
        preds.insert(PredKey::ALL[0], Ok(pred));
        Ok(report_for(&bundle, preds)?.scores.get(ScoreId::E2))
    };
    let reference = e2(base.clone())?;
    ensure!(reference < 100.0, "perturbed prediction scored {reference}");
    for shift in [1, 7, -13, 128, 255] {
        let e = e2(base.roll_cols(shift))?;
        ensure!((e - reference).abs() < 1e-9, "shift {shift}: {e} vs {reference}");
    }
    Ok(())
}

fn dmd_oracle() -> Result<(), String> {
    let t0 = Instant::now();
    let (w, r1, r2) = (0.31_f64, 0.998_f64, 0.99_f64);
    let planted = [(r1 * w.cos(), r1 * w.sin()), (r1 * w.cos(), -r1 * w.sin()), (r2, 0.0)];
    let cfg = LinearSystemConfig { dimension: 20, spectrum: planted.to_vec(), steps: 200, seed: 17 };
    let (traj, a) = gen_linear_system(&cfg).map_err(|e| e.to_string())?;
    let model = dmd_fit(&traj, &DmdConfig { rank: 3, delay: 0 }).map_err(|e| e.to_string())?;

    for &(re, im) in &planted {
        let best = model
            .eigenvalues()
            .iter()
            .map(|l| (l.re - re).hypot(l.im - im))
            .fold(f64::INFINITY, f64::min);
        ensure!(best < 1e-8, "planted {re}{im:+}i is off by {best:e}");
    }

    let steps = 100;
    let forecast = model.forecast(steps);
    let n = a.rows();
    let mut x = traj.row(traj.rows() - 1).to_vec();
    let (mut num, mut den) = (0.0, 0.0);
    for s in 0..steps {
        x = (0..n).map(|i| (0..n).map(|j| a.get(i, j) * x[j]).sum()).collect();
        for (j, xj) in x.iter().enumerate() {
            num += (forecast.get(s, j) - xj).powi(2);
            den += xj * xj;
        }
    }
    let rel = (num / den).sqrt();
    ensure!(rel < 1e-8, "relative forecast error {rel:e}");
    let secs = t0.elapsed().as_secs_f64();
    ensure!(secs < 5.0, "took {secs:.1}s");
    Ok(())
}

fn hodmd_frequency() -> Result<(), String> {
    let (omega, dt) = (0.7_f64, 0.05_f64);
    let x = TimeSeriesMatrix::from_fn(400, 1, |t, _| (omega * t as f64 * dt + 0.4).sin()).with_dt(Some(dt));
    let model = dmd_fit(&x, &DmdConfig { rank: 2, delay: 10 }).map_err(|e| e.to_string())?;
    for l in model.eigenvalues() {
        let w = l.im.atan2(l.re).abs() / dt;
        ensure!((w - omega).abs() < 1e-6, "recovered {w}, expected {omega}");
    }
    Ok(())
}

fn esn_contracts() -> Result<(), String> {
    // Spectral radius against a dense Schur-based eigenvalue oracle.
    for (rho, size, density) in [(0.6, 300, 0.02), (0.95, 120, 0.1), (0.02, 200, 0.05)] {
        let cfg = EsnConfig { reservoir_size: size, rho, density, ..Default::default() };
        let set = ReservoirSet::new(&cfg, 4).map_err(|e| e.to_string())?;
        for res in set.groups() {
            let dense = res.recurrent_dense();
            let flat: Vec<f64> = dense.iter().flatten().copied().collect();
            let w = DMatrix::from_row_slice(size, size, &flat);
            let radius = w.complex_eigenvalues().iter().map(|z| z.norm()).fold(0.0, f64::max);
            ensure!((radius - rho).abs() < 1e-8, "radius {radius} vs rho {rho}");
        }
    }

    // Ridge readout against dense normal equations.
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let (t, f, d, beta) = (60, 10, 10, 1e-3);
    let g = TimeSeriesMatrix::from_fn(t, f, |_, _| rng.sample::<f64, _>(StandardNormal));
    let y = TimeSeriesMatrix::from_fn(t, d, |_, _| rng.sample::<f64, _>(StandardNormal));
    let wt = ridge_readout(&g, &y, beta).map_err(|e| e.to_string())?;
    let gm = DMatrix::from_row_slice(t, f, g.values());
    let ym = DMatrix::from_row_slice(t, d, y.values());
    let lhs = gm.transpose() * &gm + DMatrix::identity(f, f) * beta;
    let oracle = lhs.lu().solve(&(gm.transpose() * ym)).ok_or("oracle system is singular")?;
    ensure!(wt.shape() == (f, d), "readout shape {:?}", wt.shape());
    let mut worst: f64 = 0.0;
    for i in 0..f {
        for j in 0..d {
            worst = worst.max((wt.get(i, j) - oracle[(i, j)]).abs());
        }
    }
    ensure!(worst < 1e-8, "readout differs by {worst:e}");

    // Seeding.
    let train = TimeSeriesMatrix::from_fn(150, 6, |t, j| (0.1 * t as f64 + j as f64).sin());
    let cfg = EsnConfig { reservoir_size: 80, spinup: 20, seed: 12, ..Default::default() };
    let a = esn_fit(&train, &cfg).map_err(|e| e.to_string())?.forecast(30);
    let b = esn_fit(&train, &cfg).map_err(|e| e.to_string())?.forecast(30);
    let bits = |m: &TimeSeriesMatrix| m.values().iter().map(|v| v.to_bits()).collect::<Vec<_>>();
    ensure!(bits(&a) == bits(&b), "identical seeds gave different forecasts");
    let c = esn_fit(&train, &EsnConfig { seed: 13, ..cfg })
        .map_err(|e| e.to_string())?
        .forecast(30);
    ensure!(bits(&a) != bits(&c), "different seeds gave identical forecasts");
    Ok(())
}

fn split_fidelity() -> Result<(), String> {
    type Row = (&'static str, usize, usize, usize, usize);
    let layout = |n: usize, np: usize, train: usize, limited: usize, test: usize| -> Vec<Row> {
        let lim = train - limited;
        vec![
            ("X1train", train, n, 0, train),
            ("X2train", train, n, 0, train),
            ("X3train", train, n, 0, train),
            ("X4train", limited, n, lim, train),
            ("X5train", limited, n, lim, train),
            ("X6train", train, np, 0, train),
            ("X7train", train, np, 0, train),
            ("X8train", train, np, 0, train),
            ("X9train", limited, np, lim, train),
            ("X10train", limited, np, lim, train),
            ("X1test", test, n, train, train + test),
            ("X2test", train, n, 0, train),
            ("X3test", test, n, train, train + test),
            ("X4test", train, n, 0, train),
            ("X5test", test, n, train, train + test),
            ("X6test", test, n, train, train + test),
            ("X7test", test, n, train, train + test),
            ("X8test", test, np, train, train + test),
            ("X9test", test, np, train, train + test),
        ]
    };
    let tables = [
        (DatasetConfig::global_wavefields(), layout(2048, 2048, 2000, 500, 1000)),
        (DatasetConfig::das(), layout(3000, 3000, 2000, 500, 1000)),
        (DatasetConfig::crustal(), layout(62451, 26508, 500, 200, 100)),
    ];
    for (cfg, rows) in tables {
        ensure!(cfg.index_table.len() == rows.len(), "{}: {} entries", cfg.name, cfg.index_table.len());
        for (key, r, c, start, end) in rows {
            let shape = cfg.shape_of(key).map_err(|e| e.to_string())?;
            let range = cfg.range(key).map_err(|e| e.to_string())?;
            ensure!(shape == (r, c), "{} {key}: shape {shape:?}, expected ({r}, {c})", cfg.name);
            ensure!(
                (range.start, range.end) == (start, end),
                "{} {key}: {}..{}, expected {start}..{end}",
                cfg.name,
                range.start,
                range.end
            );
        }
    }
    let g = DatasetConfig::global_wavefields();
    ensure!(g.shape_of("X1train").unwrap() == (2000, 2048), "X1train");
    ensure!(g.shape_of("X1test").unwrap() == (1000, 2048), "X1test");
    Ok(())
}

fn tuner_contract() -> Result<(), String> {
    // Three undamped rotation pairs, no normalization: rank 6 exactly.
    let cfg = DatasetConfig::desk("planted-rank", 1);
    let spectrum = [0.07_f64, 0.19, 0.31]
        .iter()
        .flat_map(|w| [(w.cos(), w.sin()), (w.cos(), -w.sin())])
        .collect();
    let (traj, _) = gen_linear_system(&LinearSystemConfig {
        dimension: cfg.n,
        spectrum,
        steps: cfg.required_lengths().0.max(cfg.required_lengths().1),
        seed: 21,
    })
    .map_err(|e| e.to_string())?;
    let family = ParametricFamily {
        trajectories: vec![traj.clone(); 5],
        params: vec![1.0, 2.0, 3.0, 2.5, 4.0],
    };
    let source = SplitSource { main: traj, family: Some(family) };
    let bundle = make_splits(&source, &cfg).map_err(|e| e.to_string())?;
    let space = HyperParamSpace::from_yaml(
        "method: dmd\nfixed: {delay: 0}\nparams:\n  - {name: rank, kind: randint, low: 1, high: 11}\n",
    )
    .map_err(|e| e.to_string())?;
    let budget = Budget { max_trials: 32, rungs: 3, keep_fraction: 0.5, ..Default::default() };
    let task = bundle.task(ScoreId::E1).map_err(|e| e.to_string())?;
    let result = tune(&space, &task, &bundle.train_view(), &budget, &TuneOptions { workers: 4, ..Default::default() })
        .map_err(|e| e.to_string())?;
    let rank = result.best.config["rank"].as_i64();
    ensure!(rank == Some(6), "best rank {rank:?}");
    let score = result.best.score.unwrap_or(f64::NEG_INFINITY);
    ensure!(score > 99.0, "validation E1 {score}");
    let bound: usize = (0..budget.rungs)
        .map(|r| ((32.0 * budget.keep_fraction.powi(r as i32)).floor() as usize).max(1))
        .sum();
    ensure!(result.trainings <= bound, "{} trainings, bound {bound}", result.trainings);
    ensure!(bundle.test_reads() == 0, "tuner read {} test matrices", bundle.test_reads());

    // A participant bundle has no test matrices at all; tuning still works.
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    bundle.save_participant(dir.path()).map_err(|e| e.to_string())?;
    let public = Bundle::load_train_only(dir.path()).map_err(|e| e.to_string())?;
    ensure!(public.test("X1test").is_err(), "participant bundle exposes X1test");
    let again = tune(&space, &task, &public.train_view(), &budget, &TuneOptions::default())
        .map_err(|e| e.to_string())?;
    ensure!(again.best.config == result.best.config, "participant tuning disagrees");
    Ok(())
}

fn swell_physics() -> Result<(), String> {
    let (k, h, g, dx, dt, lag) = (0.1, 30.0, 9.81, 1.0, 0.01, 20usize);
    let cfg = SwellConfig {
        channels: 512,
        channel_spacing: dx,
        dt,
        steps: 200,
        depth: h,
        gravity: g,
        modes: vec![SwellMode { k, amplitude: 1.0, phase: 0.3 }],
    };
    let field = gen_swell(&cfg).map_err(|e| e.to_string())?;
    let expected = dispersion(k, h, g) / k;
    let max_shift = 30usize;
    let overlap = cfg.channels - max_shift;
    let mut speeds = Vec::new();
    for t in (0..cfg.steps - lag).step_by(15) {
        let (a, b) = (field.row(t), field.row(t + lag));
        let corr: Vec<f64> = (0..max_shift)
            .map(|s| (0..overlap).map(|x| a[x] * b[x + s]).sum())
            .collect();
        let peak = (1..max_shift - 1)
            .max_by(|&i, &j| corr[i].total_cmp(&corr[j]))
            .unwrap();
        let (l, c, r) = (corr[peak - 1], corr[peak], corr[peak + 1]);
        let offset = 0.5 * (l - r) / (l - 2.0 * c + r);
        speeds.push((peak as f64 + offset) * dx / (lag as f64 * dt));
    }
    let measured = speeds.iter().sum::<f64>() / speeds.len() as f64;
    let rel = (measured - expected).abs() / expected;
    ensure!(rel < 0.02, "measured {measured:.4} m/s, dispersion gives {expected:.4} m/s");
    Ok(())
}

// --- referee determinism ---------------------------------------------------

fn ctf(args: &[&str]) -> Result<String, String> {
    let out = Command::new(env!("CARGO_BIN_EXE_ctf"))
        .args(args)
        .output()
        .map_err(|e| e.to_string())?;
    if !out.status.success() {
        return Err(format!("ctf {args:?}: {}", String::from_utf8_lossy(&out.stderr)));
    }
    String::from_utf8(out.stdout).map_err(|e| e.to_string())
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

struct Server(Child);

impl Drop for Server {
    fn drop(&mut self) {
        let _ = self.0.kill();
        let _ = self.0.wait();
    }
}

fn http_get(addr: &str, path: &str) -> Result<String, String> {
    let mut stream = TcpStream::connect(addr).map_err(|e| e.to_string())?;
    stream.set_read_timeout(Some(Duration::from_secs(30))).map_err(|e| e.to_string())?;
    write!(stream, "GET {path} HTTP/1.1\r\nHost: {addr}\r\nConnection: close\r\n\r\n").map_err(|e| e.to_string())?;
    let mut raw = String::new();
    stream.read_to_string(&mut raw).map_err(|e| e.to_string())?;
    let (head, body) = raw.split_once("\r\n\r\n").ok_or("malformed response")?;
    if !head.starts_with("HTTP/1.1 200") {
        return Err(format!("GET {path}: {head}"));
    }
    if head.to_ascii_lowercase().contains("transfer-encoding: chunked") {
        return Err("unexpected chunked body".into());
    }
    Ok(body.to_string())
}

fn referee_determinism() -> Result<(), String> {
    let tmp = tempfile::tempdir().map_err(|e| e.to_string())?;
    let root = tmp.path();
    let esn_yaml = root.join("esn.yaml");
    std::fs::write(&esn_yaml, "method: esn\nN_h: 100\nN_spin: 20\nseed: 3\n").map_err(|e| e.to_string())?;

    let datasets = ["swell-small", "linear-small"];
    let mut submissions: Vec<(PathBuf, PathBuf)> = Vec::new();
    for ds in datasets {
        let (reference, public) = (root.join(ds).join("ref"), root.join(ds).join("pub"));
        ctf(&["gen", "--preset", ds, "--out", s(&reference), "--participant-out", s(&public)])?;
        for method in ["zeros", "average", "dmd", "hodmd", "esn"] {
            let out = root.join(ds).join(method);
            let mut args = vec!["baseline", "--bundle", s(&public), "--out", s(&out)];
            if method == "esn" {
                args.extend(["--config", s(&esn_yaml)]);
            } else {
                args.extend(["--method", method]);
            }
            ctf(&args)?;
            submissions.push((reference.clone(), out.join("manifest.json")));
        }
    }
    // Resubmit two of them later so the board has to choose between entries.
    submissions.push(submissions[2].clone());
    submissions.push(submissions[5].clone());
    ensure!(submissions.len() >= 10, "only {} submissions", submissions.len());

    let record = |ledger: &Path| -> Result<(), String> {
        for (i, (bundle, manifest)) in submissions.iter().enumerate() {
            let at = format!("2026-01-01T00:{:02}:00Z", i);
            ctf(&["score", "--bundle", s(bundle), "--manifest", s(manifest), "--ledger", s(ledger), "--submitted-at", &at])?;
        }
        Ok(())
    };
    let (first, second) = (root.join("first.jsonl"), root.join("second.jsonl"));
    record(&first)?;
    record(&second)?;
    let a = std::fs::read(&first).map_err(|e| e.to_string())?;
    let b = std::fs::read(&second).map_err(|e| e.to_string())?;
    ensure!(a == b, "replayed ledgers differ");

    let mut boards = BTreeMap::new();
    for ds in datasets {
        for view in ["best", "latest"] {
            let x = ctf(&["board", "--json", "--ledger", s(&first), "--dataset", ds, "--view", view])?;
            let y = ctf(&["board", "--json", "--ledger", s(&second), "--dataset", ds, "--view", view])?;
            ensure!(x == y, "{ds}/{view}: replayed boards differ");
            let rows = serde_json::from_str::<serde_json::Value>(&x).map_err(|e| e.to_string())?["rows"]
                .as_array()
                .map_or(0, Vec::len);
            ensure!(rows == 5, "{ds}/{view}: {rows} rows");
            boards.insert((ds, view), x);
        }
    }

    let port = TcpListener::bind("127.0.0.1:0")
        .and_then(|l| l.local_addr())
        .map_err(|e| e.to_string())?
        .port();
    let addr = format!("127.0.0.1:{port}");
    let inbox = root.join("inbox");
    std::fs::create_dir_all(&inbox).map_err(|e| e.to_string())?;
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_ctf"));
    cmd.args(["serve", "--inbox", s(&inbox), "--ledger", s(&first), "--addr", &addr, "--bundle"]);
    for ds in datasets {
        cmd.arg(root.join(ds).join("ref"));
    }
    let _server = Server(cmd.stdout(Stdio::null()).stderr(Stdio::null()).spawn().map_err(|e| e.to_string())?);
    let deadline = Instant::now() + Duration::from_secs(30);
    while TcpStream::connect(&addr).is_err() {
        ensure!(Instant::now() < deadline, "server did not start on {addr}");
        std::thread::sleep(Duration::from_millis(50));
    }
    for ((ds, view), cli) in &boards {
        let body = http_get(&addr, &format!("/v1/leaderboard?dataset={ds}&view={view}"))?;
        ensure!(&body == cli, "{ds}/{view}: HTTP body differs from CLI output");
    }
    Ok(())
}
