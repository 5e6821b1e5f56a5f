//! Command-line front end. Every subcommand reads a JSON experiment
//! configuration, runs one study, and writes into `--out`:
//!
//! * `manifest.json` — config hash, code version, workers, wall clock;
//! * `report.json` — the study's summary numbers;
//! * CSV time series and binary snapshots where applicable.
//!
//! The wall clock lives only in the manifest, so every other output file is
//! byte-identical across reruns and worker counts. Exit codes: 0 success,
//! 1 failed acceptance check, 2 configuration error, 3 numerical failure.

use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand, ValueEnum};
use serde_json::json;

use crate::acceptance::{self, Profile};
use crate::config::{ExperimentConfig, ObservableSpec, RunManifest};
use crate::ergodicity::{
    bel_derivative, coming_down_sweep, ergodicity_report, eval_observable, probe_field,
    relaxation_probe, synchronous_couple, FkParams,
};
use crate::error::{Error, Result};
use crate::grid::RealField;
use crate::hamiltonian::schauder_exponent_fit;
use crate::rng::{Purpose, RngStream};
use crate::snapshot::write_snapshot;
use crate::solver::simulate;
use crate::stats::{linear_fit, mean_stderr};
use crate::wick::{sigma_profile, OUInit, OUState};

#[derive(Debug, Clone, Copy, ValueEnum)]
enum ProfileArg {
    Quick,
    Full,
}

impl From<ProfileArg> for Profile {
    fn from(p: ProfileArg) -> Profile {
        match p {
            ProfileArg::Quick => Profile::Quick,
            ProfileArg::Full => Profile::Full,
        }
    }
}

#[derive(Debug, Parser)]
#[command(name = "anderson-phi42", version, about = "Lattice laboratory for the Anderson stochastic quantization equation")]
struct Cli {
    /// JSON experiment configuration (required by every subcommand except `accept`)
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Output directory (created if missing)
    #[arg(long, global = true, default_value = "out")]
    out: PathBuf,
    /// Override the master seed from the configuration
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Worker threads (fallback: env ANDERSON_PHI42_WORKERS, then all cores)
    #[arg(long, global = true)]
    workers: Option<usize>,
    /// Study size preset
    #[arg(long, global = true, value_enum, default_value = "quick")]
    profile: ProfileArg,
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Debug, Subcommand)]
enum Cmd {
    /// Spectral summary of the Anderson Hamiltonian and Schauder fit
    Spectrum,
    /// Wick variance growth, cancellation, and truncation increments
    Wick,
    /// Integrate one trajectory; diagnostics, noise norms, snapshots
    Simulate,
    /// Synchronously couple two trajectories and fit the contraction rate
    Couple,
    /// Time averages from several initial conditions, gaps, KS distances
    Ergodicity,
    /// Bismut--Elworthy--Li semigroup derivative vs. finite differences
    Bel,
    /// Conditioned small-noise relaxation times over a ladder of targets
    Relax,
    /// Coming-down-from-infinity sweep over initial-data scales
    Sweep,
    /// Run the self-check suite; exit 1 if any check fails
    Accept,
}

pub fn run(argv: Vec<String>) -> i32 {
    let cli = match Cli::try_parse_from(std::iter::once("anderson-phi42".to_string()).chain(argv)) {
        Ok(c) => c,
        Err(e) => {
            // help/version requests are not errors
            use clap::error::ErrorKind::*;
            let code = matches!(e.kind(), DisplayHelp | DisplayVersion);
            let _ = e.print();
            return if code { 0 } else { 2 };
        }
    };
    match dispatch(cli) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            match e {
                Error::Config(_) | Error::Json(_) | Error::Io(_) | Error::Format(_) => 2,
                _ => 3,
            }
        }
    }
}

fn resolve_workers(flag: Option<usize>) -> Option<usize> {
    flag.or_else(|| {
        std::env::var("ANDERSON_PHI42_WORKERS")
            .ok()
            .and_then(|v| v.parse().ok())
    })
}

fn dispatch(cli: Cli) -> Result<i32> {
    if let Some(n) = resolve_workers(cli.workers) {
        // ignore "already built" when run() is called twice in-process
        let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
    }
    let workers = rayon::current_num_threads();
    std::fs::create_dir_all(&cli.out)?;
    let clock = std::time::Instant::now();

    if matches!(cli.cmd, Cmd::Accept) {
        return run_accept(&cli, workers, clock);
    }

    let path = cli.config.clone().ok_or_else(|| {
        Error::Config("--config is required for this subcommand".into())
    })?;
    let mut cfg = ExperimentConfig::load(&path)?;
    if let Some(s) = cli.seed {
        cfg.seed = s;
    }
    let mut manifest = RunManifest::new(cfg.hash(), workers);

    match cli.cmd {
        Cmd::Spectrum => run_spectrum(&cfg, &cli.out)?,
        Cmd::Wick => run_wick(&cfg, &cli.out)?,
        Cmd::Simulate => run_simulate(&cfg, &cli.out)?,
        Cmd::Couple => run_couple(&cfg, &cli.out)?,
        Cmd::Ergodicity => run_ergodicity(&cfg, &cli.out)?,
        Cmd::Bel => run_bel(&cfg, &cli.out)?,
        Cmd::Relax => run_relax(&cfg, &cli.out)?,
        Cmd::Sweep => run_sweep(&cfg, &cli.out)?,
        Cmd::Accept => unreachable!(),
    }

    manifest.wall_clock_seconds = clock.elapsed().as_secs_f64();
    write_json(&cli.out.join("manifest.json"), &manifest)?;
    Ok(0)
}

fn run_accept(cli: &Cli, workers: usize, clock: std::time::Instant) -> Result<i32> {
    let seed = cli.seed.unwrap_or(42);
    let profile: Profile = cli.profile.into();
    let report = acceptance::run_suite(profile, seed)?;
    for c in &report.checks {
        println!(
            "criterion {}: {} (value {:.6e}, threshold {:.6e})",
            c.name,
            if c.passed { "PASS" } else { "FAIL" },
            c.value,
            c.threshold
        );
    }
    let mut manifest = RunManifest::new(
        format!("accept:{}:{}", profile.name(), seed),
        workers,
    );
    manifest.checks = report.checks.clone();
    manifest.wall_clock_seconds = clock.elapsed().as_secs_f64();
    write_json(&cli.out.join("report.json"), &report)?;
    write_json(&cli.out.join("manifest.json"), &manifest)?;
    Ok(if report.passed { 0 } else { 1 })
}

// ---------------------------------------------------------------------------
// shared helpers

fn write_json<T: serde::Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    std::fs::write(path, text)?;
    Ok(())
}

fn write_csv(path: &Path, header: &str, rows: &[Vec<f64>]) -> Result<()> {
    let mut text = String::from(header);
    text.push('\n');
    for row in rows {
        let cells: Vec<String> = row.iter().map(|v| format!("{v:.17e}")).collect();
        text.push_str(&cells.join(","));
        text.push('\n');
    }
    std::fs::write(path, text)?;
    Ok(())
}

fn initial_data(cfg: &ExperimentConfig, op: &crate::hamiltonian::AndersonOperator) -> RealField {
    let scale = cfg.experiment.initial_scale.unwrap_or(1.0);
    let mut shape = probe_field(op.grid(), 1, 0);
    shape.axpy(1.0, &probe_field(op.grid(), 0, 1));
    shape.scale(scale)
}

fn observables(cfg: &ExperimentConfig) -> Vec<ObservableSpec> {
    cfg.experiment.observables.clone().unwrap_or_else(|| {
        vec![
            ObservableSpec::FourierChar { k1: 1, k2: 0 },
            ObservableSpec::LpNorm { p: 2.0 },
        ]
    })
}

// ---------------------------------------------------------------------------
// subcommands

fn run_spectrum(cfg: &ExperimentConfig, out: &Path) -> Result<()> {
    let op = cfg.build_operator()?;
    let evs = op.eigenvalues();
    let modes = cfg.experiment.modes.unwrap_or(evs.len()).min(evs.len());
    let rows: Vec<Vec<f64>> = evs[..modes]
        .iter()
        .enumerate()
        .map(|(i, &l)| vec![i as f64, l])
        .collect();
    write_csv(&out.join("eigenvalues.csv"), "index,lambda", &rows)?;
    let samples = cfg.experiment.samples.unwrap_or(10);
    let fit = schauder_exponent_fit(&op, -0.2, 0.4, samples, cfg.seed ^ 0x5eed)?;
    let report = json!({
        "M": cfg.grid.m,
        "lambda0": op.lambda0(),
        "renorm_constant": op.renorm_constant_value(),
        "modes_written": modes,
        "spectral_gap": if evs.len() > 1 { evs[1] - evs[0] } else { 0.0 },
        "schauder_fit": {
            "alpha": -0.2, "beta": 0.4,
            "slope": fit.slope, "expected_slope": -0.3,
            "r_squared": fit.r_squared,
        },
    });
    write_json(&out.join("report.json"), &report)
}

fn run_wick(cfg: &ExperimentConfig, out: &Path) -> Result<()> {
    let op = cfg.build_operator()?;
    let n_max = cfg.solver.n_trunc.min(op.grid().sites() - 1);
    let mut levels = Vec::new();
    let mut n = 4usize;
    while n < n_max {
        levels.push(n);
        n *= 2;
    }
    levels.push(n_max);
    let mut rows = Vec::new();
    let mut xs = Vec::new();
    let mut ys = Vec::new();
    for &n in &levels {
        let mean = sigma_profile(&op, n, 0.0, OUInit::Stationary)?.mean();
        rows.push(vec![n as f64, mean]);
        xs.push((n as f64).ln());
        ys.push(mean);
    }
    write_csv(&out.join("sigma.csv"), "N,mean_sigma", &rows)?;
    let fit = linear_fit(&xs, &ys).ok_or_else(|| Error::Numerical("sigma fit failed".into()))?;
    // centeredness of the Wick square at a fixed site
    let samples = cfg.experiment.samples.unwrap_or(2000);
    let site = op.grid().site(1, 2);
    let sigma0 = crate::wick::sigma_at(&op, n_max, OUInit::Stationary, 0.0, site);
    let vals: Vec<f64> = (0..samples)
        .map(|i| {
            let mut s = RngStream::new(cfg.seed, Purpose::Driving, i as u64);
            let st = OUState::sample_stationary(&op, &mut s);
            st.eval_at(n_max, site).powi(2) - sigma0
        })
        .collect();
    let (mean, se) = mean_stderr(&vals);
    let report = json!({
        "levels": levels,
        "sigma_log_fit": { "slope": fit.slope, "r_squared": fit.r_squared },
        "wick_square_mean": mean,
        "wick_square_stderr": se,
        "samples": samples,
    });
    write_json(&out.join("report.json"), &report)
}

fn run_simulate(cfg: &ExperimentConfig, out: &Path) -> Result<()> {
    let op = cfg.build_operator()?;
    let scfg = cfg.solver_config();
    let u0 = initial_data(cfg, &op);
    let snaps = cfg.experiment.snapshot_times.clone().unwrap_or_default();
    let mut stream = RngStream::new(cfg.seed, Purpose::Driving, 0);
    let outp = simulate(&op, scfg.clone(), u0, &snaps, &mut stream)?;
    let rows: Vec<Vec<f64>> = outp
        .records
        .iter()
        .map(|r| {
            vec![
                r.time, r.l2, r.l4, r.l3pm2, r.coming_down, r.besov, r.k_t, r.k_tilde_t,
            ]
        })
        .collect();
    write_csv(
        &out.join("diagnostics.csv"),
        "time,l2,l4,l3pm2,coming_down,besov,k_t,k_tilde_t",
        &rows,
    )?;
    let zrows: Vec<Vec<f64>> = outp
        .z_norms
        .iter()
        .map(|z| vec![z.time, z.weight, z.n1, z.n2, z.n3])
        .collect();
    write_csv(&out.join("z_norms.csv"), "time,weight,n1,n2,n3", &zrows)?;
    for (t, field) in &outp.snapshots {
        write_snapshot(field, *t, &out.join(format!("snapshot_t{t:.3}.bin")))?;
    }
    write_snapshot(&outp.final_u, scfg.t_final, &out.join("final_u.bin"))?;
    let report = json!({
        "t_final": scfg.t_final,
        "final_l2": outp.final_u.l2_norm(),
        "final_v_l2": outp.final_v.l2_norm(),
        "records": outp.records.len(),
        "snapshots": outp.snapshots.iter().map(|(t, _)| *t).collect::<Vec<f64>>(),
    });
    write_json(&out.join("report.json"), &report)
}

fn run_couple(cfg: &ExperimentConfig, out: &Path) -> Result<()> {
    let op = cfg.build_operator()?;
    let scfg = cfg.solver_config();
    let u0 = initial_data(cfg, &op);
    let zero = RealField::zeros(op.grid());
    let mut stream = RngStream::new(cfg.seed, Purpose::Driving, 0);
    let rep = synchronous_couple(&op, &scfg, u0, zero, &mut stream)?;
    let rows: Vec<Vec<f64>> = rep
        .times
        .iter()
        .zip(rep.d_l2.iter().zip(&rep.d_besov))
        .map(|(&t, (&a, &b))| vec![t, a, b])
        .collect();
    write_csv(&out.join("coupling.csv"), "time,d_l2,d_besov", &rows)?;
    write_json(&out.join("report.json"), &rep)
}

fn run_ergodicity(cfg: &ExperimentConfig, out: &Path) -> Result<()> {
    let op = cfg.build_operator()?;
    let scfg = cfg.solver_config();
    let specs = observables(cfg);
    let ics = vec![initial_data(cfg, &op), RealField::zeros(op.grid())];
    let base = RngStream::new(cfg.seed, Purpose::Driving, 0);
    let rep = ergodicity_report(&op, &scfg, &ics, &specs, &base)?;
    let mut header = String::from("time");
    for i in 0..ics.len() {
        for j in 0..specs.len() {
            header.push_str(&format!(",avg_ic{i}_obs{j}"));
        }
    }
    let rows: Vec<Vec<f64>> = rep
        .times
        .iter()
        .enumerate()
        .map(|(k, &t)| {
            let mut row = vec![t];
            for ic in &rep.running_averages {
                for obs in ic {
                    row.push(obs[k]);
                }
            }
            row
        })
        .collect();
    write_csv(&out.join("averages.csv"), &header, &rows)?;
    write_json(&out.join("report.json"), &rep)
}

fn run_bel(cfg: &ExperimentConfig, out: &Path) -> Result<()> {
    let op = cfg.build_operator()?;
    let scfg = cfg.solver_config();
    let u0 = initial_data(cfg, &op);
    let h = probe_field(op.grid(), 0, 1);
    let spec = observables(cfg)
        .into_iter()
        .next()
        .expect("default observables nonempty");
    let t = cfg.experiment.t.unwrap_or(scfg.t_final);
    let samples = cfg.experiment.samples.unwrap_or(500);
    let fk = if cfg.experiment.use_feynman_kac.unwrap_or(false) {
        Some(FkParams {
            c_tilde: 0.05,
            p: cfg.solver.p as f64,
            eps: cfg.solver.eps,
        })
    } else {
        None
    };
    let base = RngStream::new(cfg.seed, Purpose::Driving, 0);
    let rep = bel_derivative(
        &op,
        &scfg,
        &u0,
        &h,
        |u| eval_observable(&op, &spec, u),
        t,
        samples,
        fk,
        1e-2,
        &base,
    )?;
    write_json(&out.join("report.json"), &rep)
}

fn run_relax(cfg: &ExperimentConfig, out: &Path) -> Result<()> {
    let op = cfg.build_operator()?;
    let scfg = cfg.solver_config();
    let u0 = initial_data(cfg, &op);
    let targets = cfg
        .experiment
        .eps_targets
        .clone()
        .unwrap_or_else(|| vec![1e-1, 3e-2, 1e-2]);
    let eps_box = cfg.experiment.eps_box.unwrap_or(2.5);
    let n_cond = cfg.experiment.n_cond.unwrap_or(2);
    let mut rows = Vec::new();
    let mut logs = Vec::new();
    let mut hits = Vec::new();
    let mut outcomes = Vec::new();
    for &eps in &targets {
        let mut stream = RngStream::new(cfg.seed, Purpose::Driving, 700);
        let o = relaxation_probe(&op, &scfg, &u0, eps, eps_box, n_cond, &mut stream, 20_000)?;
        let t_hit = o.t_hit.unwrap_or(f64::NAN);
        rows.push(vec![eps, t_hit, o.noise_scale, o.acceptance_estimate]);
        if let Some(t) = o.t_hit {
            logs.push((1.0 / eps).ln());
            hits.push(t);
        }
        outcomes.push(o);
    }
    write_csv(
        &out.join("relaxation.csv"),
        "eps,t_hit,noise_scale,acceptance_estimate",
        &rows,
    )?;
    let fit = linear_fit(&logs, &hits);
    let report = json!({
        "targets": targets,
        "outcomes": outcomes,
        "log_fit": fit.map(|f| json!({
            "slope": f.slope, "intercept": f.intercept, "r_squared": f.r_squared,
        })),
    });
    write_json(&out.join("report.json"), &report)
}

fn run_sweep(cfg: &ExperimentConfig, out: &Path) -> Result<()> {
    let op = cfg.build_operator()?;
    let scfg = cfg.solver_config();
    let scales = cfg
        .experiment
        .scales
        .clone()
        .unwrap_or_else(|| vec![1.0, 10.0, 100.0]);
    let seeds = cfg.experiment.seeds.unwrap_or(2);
    let mut g = probe_field(op.grid(), 1, 0);
    g.axpy(1.0, &probe_field(op.grid(), 0, 1));
    let g = g.map(|v| v + 2.0);
    let base = RngStream::new(cfg.seed, Purpose::Driving, 0);
    let rep = coming_down_sweep(&op, &scfg, &g, &scales, seeds, &base)?;
    let rows: Vec<Vec<f64>> = rep
        .cells
        .iter()
        .map(|c| {
            vec![
                c.scale,
                c.seed_index as f64,
                c.stat,
                c.bound,
                if c.bound_ok { 1.0 } else { 0.0 },
            ]
        })
        .collect();
    write_csv(&out.join("sweep.csv"), "scale,seed,stat,bound,bound_ok", &rows)?;
    write_json(&out.join("report.json"), &rep)
}
