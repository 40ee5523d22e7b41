//! Acceptance suite: one line per criterion, nonzero exit if any fails.
//!
//! Runs as a plain binary (`harness = false`); the whole suite takes about
//! ten minutes on one core, most of it the divergence-weight sweep.

use std::path::Path;
use std::process::{Command, ExitCode};
use std::time::Instant;

use lagvae::eval::*;
use lagvae::nn::BatchTensor;
use lagvae::objective::{accuracy_loss, generalization_loss, total_objective};
use lagvae::rng::{gaussian, seeded};
use lagvae::surrogate::{default_params, generate};
use lagvae::trainer::{checkpoint_from_json, checkpoint_to_json, gradient_audit, sweep_point, Checkpoint, TrainConfig};
use lagvae::trajectory::{read_batch, write_batch, Trajectory, TrajectoryBatch};
use lagvae::KlForm;
use rand::Rng;

type Outcome = Result<String, String>;

fn check(ok: bool, detail: String) -> Outcome {
    if ok {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn err(e: impl std::fmt::Display) -> String {
    e.to_string()
}

fn gradient_correctness() -> Outcome {
    let start = Instant::now();
    let data = generate(&default_params()).map_err(err)?;
    let report = gradient_audit(&data, &TrainConfig::default()).map_err(err)?;
    let secs = start.elapsed().as_secs_f64();
    check(
        report.max_relative_error < 1e-4 && secs < 10.0,
        format!(
            "max relative error {:.2e} over {} parameters ({} #{}), {secs:.2} s",
            report.max_relative_error, report.parameters_checked, report.worst_tensor, report.worst_index
        ),
    )
}

fn objective_identities() -> Outcome {
    let zeros = vec![0.0; 6];
    let unit = generalization_loss(&zeros, &zeros, 2, KlForm::Printed).map_err(err)?.value;
    let mut rng = seeded(1);
    let x: Vec<f64> = (0..2 * 3 * 16).map(|_| gaussian(&mut rng)).collect();
    let xt = BatchTensor::from_vec(2, 3, 16, x.clone()).map_err(err)?;
    let same = accuracy_loss(&xt, &xt, 1.0, 16.0).map_err(err)?.0;
    let delta = 0.3;
    let shifted = BatchTensor::from_vec(2, 3, 16, x.iter().map(|v| v + delta).collect()).map_err(err)?;
    let offset = accuracy_loss(&xt, &shifted, 1.0, 16.0).map_err(err)?.0;
    let one = generalization_loss(&[1.0], &[0.0], 1, KlForm::Printed).map_err(err)?.value;
    let total = total_objective(0.1, 50.0, 1e-4).map_err(err)?.j_total;
    let sum = total_objective(2.0, 4.0, 0.5).map_err(err)?.j_total;
    let ok = unit == 0.0
        && same == 0.0
        && (offset - 3.0 * delta * delta).abs() < 1e-12
        && (one - 0.5).abs() < 1e-12
        && (total - 0.105).abs() < 1e-12
        && (sum - 4.0).abs() < 1e-12;
    check(
        ok,
        format!("J_G(0,1) = {unit}, J_A(x,x) = {same}, offset {offset:.15}, J_G(mu=1) = {one}, J = {total} / {sum}"),
    )
}

fn naive_msd(t: &Trajectory) -> Vec<f64> {
    let n = t.len();
    (1..=n - 2)
        .map(|k| {
            let s: f64 = (0..n - k)
                .map(|i| {
                    let (a, b) = (t.cartesian_at(i), t.cartesian_at(i + k));
                    (b.0 - a.0).powi(2) + (b.1 - a.1).powi(2) + (b.2 - a.2).powi(2)
                })
                .sum();
            s / (n - k) as f64
        })
        .collect()
}

fn msd_oracle() -> Outcome {
    let mut rng = seeded(3);
    let mut worst: f64 = 0.0;
    for _ in 0..50 {
        let (m, n) = (rng.random_range(1..=5), rng.random_range(3..=200));
        let trajs: Vec<Trajectory> = (0..m)
            .map(|_| {
                let r = (0..n).map(|_| rng.random_range(0.5..2.0)).collect();
                let th = (0..n).map(|_| rng.random_range(-3.0..3.0)).collect();
                let z = (0..n).map(|_| gaussian(&mut rng)).collect();
                Trajectory::from_wrapped(r, th, z, 0.01).unwrap()
            })
            .collect();
        let batch = TrajectoryBatch::new(trajs).map_err(err)?;
        let fast = msd_batch(&batch, EvalAxis::ThreeD).map_err(err)?;
        let mut slow = vec![0.0; n - 2];
        for t in batch.iter() {
            for (s, v) in slow.iter_mut().zip(naive_msd(t)) {
                *s += v / m as f64;
            }
        }
        for (a, e) in fast.msd.iter().zip(&slow) {
            worst = worst.max((a - e).abs() / e.abs().max(f64::MIN_POSITIVE));
        }
    }

    let n = 300;
    let ballistic =
        Trajectory::new(vec![1.0; n], vec![0.0; n], (0..n).map(|i| 0.5 * i as f64).collect(), 0.01).map_err(err)?;
    let curve = msd_single(&ballistic, EvalAxis::Z).map_err(err)?;
    let gamma_ballistic = fit_exponent(&curve, last_decade_window(&curve)).map_err(err)?;

    let n = 100_000;
    let mut rng = seeded(0);
    let mut z = 0.0;
    let walk: Vec<f64> = (0..n)
        .map(|_| {
            z += gaussian(&mut rng);
            z
        })
        .collect();
    let walk = Trajectory::new(vec![1.0; n], vec![0.0; n], walk, 1.0).map_err(err)?;
    let curve = msd_single(&walk, EvalAxis::Z).map_err(err)?;
    let gamma_walk = fit_exponent(&curve, last_decade_window(&curve)).map_err(err)?;

    check(
        worst < 1e-10 && (gamma_ballistic - 2.0).abs() < 1e-10 && (0.9..=1.1).contains(&gamma_walk),
        format!(
            "naive loop max rel diff {worst:.1e}, ballistic gamma {gamma_ballistic:.12}, \
             white-noise walk last-decade gamma {gamma_walk:.3} (want [0.9, 1.1])"
        ),
    )
}

fn correlation_baseline() -> Outcome {
    let batch = generate(&default_params()).map_err(err)?;
    let mut worst: f64 = 0.0;
    let mut max_g: f64 = 0.0;
    let mut min_a: f64 = 1.0;
    for axis in EvalAxis::ALL {
        let c = self_correlation(&batch, axis).map_err(err)?;
        for i in 0..c.rows {
            worst = worst.max((c.get(i, i) - 1.0).abs());
            for j in 0..c.cols {
                worst = worst.max((c.get(i, j) - c.get(j, i)).abs());
            }
        }
        max_g = max_g.max(generalization_factor(&c).abs());
        let curve = msd_batch(&batch, axis).map_err(err)?;
        let tn = batch.t0() * batch.steps() as f64;
        min_a = min_a.min(accuracy_factor(&curve, &curve, batch.t0(), tn).map_err(err)?.accuracy);
    }
    check(
        worst < 1e-12 && max_g == 0.0 && min_a == 1.0,
        format!("symmetry/diagonal error {worst:.1e}, self generalization {max_g}, self accuracy {min_a}"),
    )
}

fn surrogate_phenomenology() -> Outcome {
    let start = Instant::now();
    let batch = generate(&default_params()).map_err(err)?;
    let mut ok = true;
    let mut parts = Vec::new();
    for axis in [EvalAxis::R, EvalAxis::Theta, EvalAxis::Z] {
        let curve = msd_batch(&batch, axis).map_err(err)?;
        let short = fit_exponent(&curve, short_time_window(&curve)).map_err(err)?;
        let long = fit_exponent(&curve, last_decade_window(&curve)).map_err(err)?;
        ok &= short > 1.5;
        ok &= match axis {
            EvalAxis::Theta => (0.8..=1.2).contains(&long),
            _ => long < 0.3,
        };
        parts.push(format!("{} short {short:.2} long {long:.2}", axis.name()));
    }
    let secs = start.elapsed().as_secs_f64();
    check(ok && secs < 30.0, format!("{}, {secs:.2} s", parts.join("; ")))
}

fn mean_j_a(rows: &[Vec<f64>]) -> f64 {
    rows.iter().map(|r| r[2]).sum::<f64>() / rows.len() as f64
}

fn read_history(path: &Path) -> Result<Vec<Vec<f64>>, String> {
    let text = std::fs::read_to_string(path).map_err(err)?;
    text.lines().skip(1).map(|l| l.split(',').map(|v| v.parse::<f64>().map_err(err)).collect()).collect()
}

fn lagvae_cli(dir: &Path, args: &[&str]) -> Result<(), String> {
    let out = Command::new(env!("CARGO_BIN_EXE_lagvae")).current_dir(dir).args(args).output().map_err(err)?;
    if out.status.success() {
        Ok(())
    } else {
        Err(format!("lagvae {}: {}", args.join(" "), String::from_utf8_lossy(&out.stderr).trim()))
    }
}

/// Default `lagvae train` on default synthetic data, twice.
fn training_sanity(dir: &Path) -> Outcome {
    lagvae_cli(dir, &["synth", "--out", "data"])?;
    let start = Instant::now();
    lagvae_cli(dir, &["train", "--data", "data/trajectories.csv", "--out", "run1"])?;
    let secs = start.elapsed().as_secs_f64();
    lagvae_cli(dir, &["train", "--data", "data/trajectories.csv", "--out", "run2"])?;
    let history = read_history(&dir.join("run1/history.csv"))?;
    // Per-minibatch values are noisy; compare the first and last iteration.
    let per_iter = 15 / 5;
    let first = mean_j_a(&history[..per_iter]);
    let last = mean_j_a(&history[history.len() - per_iter..]);
    let same = std::fs::read(dir.join("run1/checkpoint.json")).map_err(err)?
        == std::fs::read(dir.join("run2/checkpoint.json")).map_err(err)?;
    check(
        last < 0.5 * first && secs < 600.0 && same,
        format!(
            "j_a {first:.3} -> {last:.3} (ratio {:.3}) over {} steps, {secs:.1} s, rerun bit-identical: {same}",
            last / first,
            history.len()
        ),
    )
}

/// Spearman rank correlation for distinct values.
fn spearman(x: &[f64], y: &[f64]) -> f64 {
    let ranks = |v: &[f64]| -> Vec<f64> {
        let mut idx: Vec<usize> = (0..v.len()).collect();
        idx.sort_by(|&a, &b| v[a].total_cmp(&v[b]));
        let mut r = vec![0.0; v.len()];
        for (rank, i) in idx.into_iter().enumerate() {
            r[i] = rank as f64;
        }
        r
    };
    let (rx, ry) = (ranks(x), ranks(y));
    let n = x.len() as f64;
    let d2: f64 = rx.iter().zip(&ry).map(|(a, b)| (a - b).powi(2)).sum();
    1.0 - 6.0 * d2 / (n * (n * n - 1.0))
}

/// Trains to convergence at each weight, samples from the prior, scores.
fn trade_off() -> Outcome {
    let start = Instant::now();
    let truth = generate(&default_params()).map_err(err)?;
    let base = TrainConfig { learning_rate: 3e-2, iterations: 1500, seed: 20181211, ..TrainConfig::default() };
    let weights = [1e-3, 1e-4, 1e-5];
    let mut acc = Vec::new();
    let mut gen = Vec::new();
    let mut parts = Vec::new();
    for (i, &w) in weights.iter().enumerate() {
        let point = sweep_point(&truth, &base, w, i, weights.len()).map_err(err)?;
        let s = point.score.axis(EvalAxis::ThreeD);
        acc.push(s.accuracy);
        gen.push(s.generalization);
        parts.push(format!("w {w:.0e}: A {:.3} G {:.3}", s.accuracy, s.generalization));
    }
    let secs = start.elapsed().as_secs_f64();
    let (rho_g, rho_a) = (spearman(&weights, &gen), spearman(&weights, &acc));
    let best = weights[(0..3).max_by(|&a, &b| (acc[a] + gen[a]).total_cmp(&(acc[b] + gen[b]))).unwrap()];
    check(
        rho_g == 1.0 && rho_a == -1.0 && secs < 1800.0,
        format!(
            "{}; Spearman(w, G) {rho_g:+.2}, Spearman(w, A) {rho_a:+.2}; best A+G at w {best:.0e}; {secs:.0} s",
            parts.join(", ")
        ),
    )
}

fn round_trips(dir: &Path) -> Outcome {
    let batch = generate(&default_params()).map_err(err)?;
    let mut buf = Vec::new();
    write_batch(&batch, &mut buf).map_err(err)?;
    let back = read_batch(buf.as_slice(), batch.t0()).map_err(err)?;
    let mut csv_err: f64 = 0.0;
    for (a, b) in batch.iter().zip(back.iter()) {
        for axis in lagvae::Axis::ALL {
            for (x, y) in a.series(axis).iter().zip(b.series(axis)) {
                csv_err = csv_err.max((x - y).abs());
            }
        }
    }

    let text = std::fs::read_to_string(dir.join("run1/checkpoint.json")).map_err(err)?;
    let ckpt: Checkpoint = checkpoint_from_json(&text).map_err(err)?;
    let again = checkpoint_from_json(&checkpoint_to_json(&ckpt).map_err(err)?).map_err(err)?;
    let mut ckpt_err: f64 = 0.0;
    for (a, b) in ckpt.params.tensors().iter().zip(again.params.tensors()) {
        for (x, y) in a.data.iter().zip(&b.data) {
            ckpt_err = ckpt_err.max((x - y).abs());
        }
    }

    // Every command twice with the same seed; the second synth replays
    // the first one's manifest.
    lagvae_cli(dir, &["synth", "--out", "det1", "--seed", "11"])?;
    let manifest: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(dir.join("det1/manifest.json")).map_err(err)?).map_err(err)?;
    std::fs::write(dir.join("replay.json"), manifest["config"].to_string()).map_err(err)?;
    lagvae_cli(dir, &["synth", "--out", "det2", "--config", "replay.json"])?;
    for out in ["det1", "det2"] {
        lagvae_cli(dir, &["sample", "--checkpoint", "run1/checkpoint.json", "--out", out, "--seed", "11"])?;
        let generated = format!("{out}/generated.csv");
        lagvae_cli(dir, &["eval", "--truth", "data/trajectories.csv", "--generated", &generated, "--out", out])?;
    }
    let mut differing = Vec::new();
    for f in ["trajectories.csv", "generated.csv", "scorecard.json", "corr_3d.csv"] {
        if std::fs::read(dir.join("det1").join(f)).map_err(err)?
            != std::fs::read(dir.join("det2").join(f)).map_err(err)?
        {
            differing.push(f);
        }
    }
    check(
        csv_err <= 1e-10 && ckpt_err <= 1e-15 && differing.is_empty(),
        format!(
            "CSV max error {csv_err:.1e}, checkpoint max error {ckpt_err:.1e}, CLI outputs differing: {differing:?}"
        ),
    )
}

fn main() -> ExitCode {
    let tmp = tempfile::tempdir().expect("temp dir");
    let dir = tmp.path();
    let criteria: [(&str, Box<dyn Fn() -> Outcome + '_>); 8] = [
        ("gradient correctness", Box::new(gradient_correctness)),
        ("objective identities", Box::new(objective_identities)),
        ("MSD oracle equivalence", Box::new(msd_oracle)),
        ("correlation baseline", Box::new(correlation_baseline)),
        ("surrogate phenomenology", Box::new(surrogate_phenomenology)),
        ("training sanity", Box::new(|| training_sanity(dir))),
        ("accuracy/generalization trade-off", Box::new(trade_off)),
        ("round trips and CLI determinism", Box::new(|| round_trips(dir))),
    ];
    let mut failed = 0;
    for (i, (name, run)) in criteria.iter().enumerate() {
        let (status, detail) = match run() {
            Ok(d) => ("PASS", d),
            Err(d) => {
                failed += 1;
                ("FAIL", d)
            }
        };
        println!("criterion {} {status} {name}: {detail}", i + 1);
    }
    println!("{} of {} criteria passed", criteria.len() - failed, criteria.len());
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
