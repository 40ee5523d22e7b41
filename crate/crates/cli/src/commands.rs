use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;

use lagvae::eval::{
    correlation_matrix, fit_exponent, last_decade_window, msd_batch, score_model, short_time_window,
    velocity_distribution, CorrelationMatrix, EvalAxis, MsdCurve, ScoreCard, VelocityDistribution,
};
use lagvae::rng::{derive_seed, seeded};
use lagvae::surrogate::generate;
use lagvae::trainer::{
    gradient_audit, load_checkpoint, sample_model, save_checkpoint, sweep_point, write_history, Checkpoint, SweepPoint,
};
use lagvae::trajectory::{load_batch_with_t0, save_batch, window, Axis, TrajectoryBatch};
use serde::Serialize;

use crate::config::RunConfig;
use crate::error::{at, CliError};
use crate::manifest::Run;

/// Audits pass below this max relative error.
const AUDIT_TOLERANCE: f64 = 1e-4;

fn create(path: &Path) -> Result<BufWriter<File>, CliError> {
    File::create(path).map(BufWriter::new).map_err(|e| CliError::Io(format!("{}: {e}", path.display())))
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> CliError + '_ {
    move |e| CliError::Io(format!("{}: {e}", path.display()))
}

fn write_json(path: &Path, value: &impl Serialize) -> Result<(), CliError> {
    let text = serde_json::to_string_pretty(value).expect("outputs serialize");
    std::fs::write(path, text).map_err(io_err(path))
}

fn load(run: &mut Run, path: &Path, t0: f64) -> Result<TrajectoryBatch, CliError> {
    run.input(path);
    load_batch_with_t0(path, t0).map_err(at(path))
}

pub fn synth(cfg: &RunConfig, run: &mut Run) -> Result<(), CliError> {
    let batch = generate(&cfg.surrogate)?;
    let path = run.output("trajectories.csv");
    save_batch(&batch, &path).map_err(at(&path))?;
    run.detail("m", batch.len());
    run.detail("n", batch.steps());
    println!("wrote {} trajectories x {} steps to {}", batch.len(), batch.steps(), path.display());
    Ok(())
}

pub fn train(cfg: &RunConfig, data: &Path, run: &mut Run) -> Result<(), CliError> {
    let batch = load(run, data, cfg.t0)?;
    if cfg.train.gradient_audit {
        let report = gradient_audit(&batch, &cfg.train)?;
        println!(
            "max relative error {:e} over {} parameters (worst: {}[{}], analytic {:e}, numeric {:e})",
            report.max_relative_error,
            report.parameters_checked,
            report.worst_tensor,
            report.worst_index,
            report.analytic,
            report.numeric
        );
        write_json(&run.output("audit.json"), &report)?;
        run.detail("max_relative_error", report.max_relative_error);
        if !(report.max_relative_error < AUDIT_TOLERANCE) {
            return Err(CliError::Numerical(format!(
                "gradient audit failed: max relative error {:e} >= {AUDIT_TOLERANCE:e}",
                report.max_relative_error
            )));
        }
        return Ok(());
    }
    let report = lagvae::trainer::train(&batch, &cfg.train)?;
    let ckpt_path = run.output("checkpoint.json");
    save_checkpoint(&Checkpoint::from(&report), &ckpt_path).map_err(at(&ckpt_path))?;
    let hist_path = run.output("history.csv");
    let mut out = create(&hist_path)?;
    write_history(&report.history, &mut out).map_err(at(&hist_path))?;
    out.flush().map_err(io_err(&hist_path))?;
    let (first, last) = (report.history[0], *report.history.last().expect("history is non-empty"));
    run.detail("steps", report.history.len());
    run.detail("initial", first);
    run.detail("final", last);
    println!(
        "{} steps: j_a {:.4} -> {:.4}, j_g {:.3} -> {:.3}",
        report.history.len(),
        first.j_a,
        last.j_a,
        first.j_g,
        last.j_g
    );
    Ok(())
}

pub fn sample(cfg: &RunConfig, checkpoint: &Path, run: &mut Run) -> Result<(), CliError> {
    run.input(checkpoint);
    if cfg.sample.count == 0 {
        return Err(CliError::Usage("sample count must be >= 1".into()));
    }
    let ckpt = load_checkpoint(checkpoint).map_err(at(checkpoint))?;
    let mut rng = seeded(cfg.seed);
    let batch = sample_model(&ckpt.params, &ckpt.norm, cfg.sample.count, &mut rng)?;
    let path = run.output("generated.csv");
    save_batch(&batch, &path).map_err(at(&path))?;
    run.detail("count", batch.len());
    run.detail("n", batch.steps());
    println!("wrote {} trajectories x {} steps to {}", batch.len(), batch.steps(), path.display());
    Ok(())
}

fn write_msd(path: &Path, curve: &MsdCurve) -> Result<(), CliError> {
    let mut out = create(path)?;
    let mut body = String::from("delta_t,msd\n");
    for (dt, v) in curve.delta_t.iter().zip(&curve.msd) {
        body.push_str(&format!("{dt:?},{v:?}\n"));
    }
    out.write_all(body.as_bytes()).and_then(|_| out.flush()).map_err(io_err(path))
}

fn write_matrix(path: &Path, m: &CorrelationMatrix) -> Result<(), CliError> {
    let mut body = String::new();
    body.push_str(&(0..m.cols).fold(String::new(), |acc, j| format!("{acc},{j}")));
    body.push('\n');
    for i in 0..m.rows {
        body.push_str(&i.to_string());
        for v in m.row(i) {
            body.push_str(&format!(",{v:?}"));
        }
        body.push('\n');
    }
    std::fs::write(path, body).map_err(io_err(path))
}

fn write_velocity(path: &Path, parts: &[(&str, &VelocityDistribution)]) -> Result<(), CliError> {
    let mut body = String::from("source,center,density,fit_density\n");
    for (source, d) in parts {
        let (mu, sd) = (d.fit.mean, d.fit.std);
        for (c, p) in d.histogram.centers.iter().zip(&d.histogram.densities) {
            let fit = (-0.5 * ((c - mu) / sd).powi(2)).exp() / (sd * (2.0 * std::f64::consts::PI).sqrt());
            body.push_str(&format!("{source},{c:?},{p:?},{fit:?}\n"));
        }
    }
    std::fs::write(path, body).map_err(io_err(path))
}

#[derive(Serialize)]
struct ExponentRow {
    axis: EvalAxis,
    source: &'static str,
    window: &'static str,
    lo: f64,
    hi: f64,
    gamma: Option<f64>,
}

#[derive(Serialize)]
struct VelocityFit<'a> {
    axis: Axis,
    source: &'a str,
    fit_mean: f64,
    fit_std: f64,
    sample_mean: f64,
    sample_std: f64,
    samples: usize,
}

pub fn eval(cfg: &RunConfig, truth_path: &Path, generated: Option<&Path>, run: &mut Run) -> Result<(), CliError> {
    let truth = load(run, truth_path, cfg.t0)?;
    run.detail("self_mode", generated.is_none());
    let generated = match generated {
        Some(p) => load(run, p, cfg.t0)?,
        None => truth.clone(),
    };
    let len = truth.steps().min(generated.steps());
    let truth_w = window(&truth, len)?;
    let gen_w = window(&generated, len)?;

    let mut exponents = Vec::new();
    for axis in EvalAxis::ALL {
        for (source, batch, prefix) in [("truth", &truth_w, "truth_msd_"), ("generated", &gen_w, "msd_")] {
            let curve = msd_batch(batch, axis)?;
            write_msd(&run.output(&format!("{prefix}{}.csv", axis.name())), &curve)?;
            for (name, win) in [("short", short_time_window(&curve)), ("long", last_decade_window(&curve))] {
                exponents.push(ExponentRow {
                    axis,
                    source,
                    window: name,
                    lo: win.0,
                    hi: win.1,
                    gamma: fit_exponent(&curve, win).ok(),
                });
            }
        }
        let matrix = correlation_matrix(&truth_w, &gen_w, axis)?;
        write_matrix(&run.output(&format!("corr_{}.csv", axis.name())), &matrix)?;
    }
    write_json(&run.output("exponents.json"), &exponents)?;

    let mut fits = Vec::new();
    for axis in Axis::ALL {
        let t = velocity_distribution(&truth_w, axis, cfg.eval.bins)?;
        let g = velocity_distribution(&gen_w, axis, cfg.eval.bins)?;
        write_velocity(&run.output(&format!("velocity_{}.csv", axis.name())), &[("truth", &t), ("generated", &g)])?;
        for (source, d) in [("truth", &t), ("generated", &g)] {
            fits.push(VelocityFit {
                axis,
                source,
                fit_mean: d.fit.mean,
                fit_std: d.fit.std,
                sample_mean: d.sample_mean,
                sample_std: d.sample_std,
                samples: d.samples,
            });
        }
    }
    write_json(&run.output("velocity_fits.json"), &fits)?;

    let card = score_model(&truth, &generated, None)?;
    write_json(&run.output("scorecard.json"), &card)?;
    print_card(&card);
    Ok(())
}

fn print_card(card: &ScoreCard) {
    for s in &card.axes {
        println!("{:>5}: accuracy {:.4}  generalization {:.4}", s.axis.name(), s.accuracy, s.generalization);
    }
}

pub fn sweep(cfg: &RunConfig, data: &Path, run: &mut Run) -> Result<(), CliError> {
    let truth = load(run, data, cfg.t0)?;
    let ws = &cfg.sweep.w_list;
    if ws.is_empty() {
        return Err(CliError::Usage("sweep.w_list is empty".into()));
    }
    for &w in ws {
        lagvae::objective::check_weight(w)?;
    }
    cfg.train.validate(truth.len())?;
    let threads = match cfg.sweep.threads {
        0 => std::thread::available_parallelism().map_or(1, |n| n.get()),
        t => t,
    }
    .min(ws.len());
    let dirs: Vec<String> = (0..ws.len()).map(|i| format!("w{i:02}")).collect();
    let out_dir = run.out().to_path_buf();
    let next = AtomicUsize::new(0);
    let results: Mutex<Vec<Option<Result<ScoreCard, CliError>>>> = Mutex::new((0..ws.len()).map(|_| None).collect());

    std::thread::scope(|s| {
        for _ in 0..threads {
            s.spawn(|| loop {
                let i = next.fetch_add(1, Ordering::SeqCst);
                if i >= ws.len() {
                    break;
                }
                let outcome = sweep_point(&truth, &cfg.train, ws[i], i, cfg.sample.count)
                    .map_err(CliError::from)
                    .and_then(|p| write_point(&out_dir.join(&dirs[i]), &p).map(|_| p.score));
                match &outcome {
                    Ok(card) => eprintln!(
                        "w = {:e}: 3d accuracy {:.4}, generalization {:.4}",
                        ws[i],
                        card.axis(EvalAxis::ThreeD).accuracy,
                        card.axis(EvalAxis::ThreeD).generalization
                    ),
                    Err(e) => eprintln!("w = {:e}: failed: {e}", ws[i]),
                }
                results.lock().expect("no poisoned workers")[i] = Some(outcome);
            });
        }
    });

    let results = results.into_inner().expect("no poisoned workers");
    let frontier = run.output("frontier.csv");
    let mut body = String::from("w,axis,accuracy,generalization\n");
    let mut first_error = None;
    let mut seeds = Vec::new();
    for (i, r) in results.into_iter().enumerate() {
        match r.expect("every point ran") {
            Ok(card) => {
                for a in EvalAxis::ALL {
                    let s = card.axis(a);
                    body.push_str(&format!("{:?},{},{:?},{:?}\n", ws[i], a.name(), s.accuracy, s.generalization));
                }
                run.output(&dirs[i]);
            }
            Err(e) => {
                first_error.get_or_insert(CliError::from_point(ws[i], e));
            }
        }
        seeds.push(derive_seed(cfg.train.seed, i as u64));
    }
    std::fs::write(&frontier, body).map_err(io_err(&frontier))?;
    run.detail("w_list", ws);
    run.detail("run_seeds", seeds);
    match first_error {
        Some(e) => Err(e),
        None => Ok(()),
    }
}

fn write_point(dir: &Path, p: &SweepPoint) -> Result<(), CliError> {
    std::fs::create_dir_all(dir).map_err(io_err(dir))?;
    let ckpt = dir.join("checkpoint.json");
    save_checkpoint(&Checkpoint::from(&p.report), &ckpt).map_err(at(&ckpt))?;
    let hist = dir.join("history.csv");
    let mut out = create(&hist)?;
    write_history(&p.report.history, &mut out).map_err(at(&hist))?;
    out.flush().map_err(io_err(&hist))?;
    let gen = dir.join("generated.csv");
    save_batch(&p.generated, &gen).map_err(at(&gen))?;
    write_json(&dir.join("scorecard.json"), &p.score)
}

impl CliError {
    fn from_point(w: f64, e: CliError) -> CliError {
        let msg = format!("sweep point w = {w:e}: {e}");
        match e {
            CliError::Usage(_) => CliError::Usage(msg),
            CliError::Io(_) => CliError::Io(msg),
            CliError::Numerical(_) => CliError::Numerical(msg),
        }
    }
}
