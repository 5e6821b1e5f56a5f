//! Statistical harness for the Markov semigroup: Monte Carlo semigroup
//! estimates, Krylov--Bogoliubov averages, synchronous coupling, relaxation
//! under conditioned small noise, derivative estimators, and the
//! coming-down-from-infinity sweep.
//!
//! Ensembles parallelize across trajectories with one deterministic
//! substream per sample index; reductions run sequentially over the indexed
//! results, so outputs are independent of the worker count.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::config::ObservableSpec;
use crate::error::{Error, Result};
use crate::grid::{besov_norm, sobolev_neg_inner, sobolev_neg_norm, RealField, TorusGrid};
use crate::hamiltonian::AndersonOperator;
use crate::rng::{Purpose, RngStream};
use crate::solver::{simulate, step_eta, step_v, Simulator, SolverConfig};
use crate::stats::{batch_mean_stderr, ks_statistic, linear_fit};
use crate::wick::{
    assemble_field, enhanced_data, low_mode_conditioned_sample, sigma_profile, wick_power,
    ConditionedOutcome, EnhancedNoise, OUInit,
};

/// Fraction of failed trajectories above which an ensemble aborts.
const MAX_FAILURE_FRACTION: f64 = 0.01;

/// `cos(2 pi (k1 x1 + k2 x2) / L)`, the real Fourier probe used by the
/// `fourier_char` and `linear` observables.
pub fn probe_field(grid: TorusGrid, k1: i64, k2: i64) -> RealField {
    let w = std::f64::consts::TAU / grid.side_length();
    RealField::from_fn(grid, |x1, x2| (w * (k1 as f64 * x1 + k2 as f64 * x2)).cos())
}

/// Evaluate a configured observable on a field.
pub fn eval_observable(op: &AndersonOperator, spec: &ObservableSpec, u: &RealField) -> f64 {
    match *spec {
        ObservableSpec::FourierChar { k1, k2 } => {
            u.inner(&probe_field(u.grid(), k1, k2)).cos()
        }
        ObservableSpec::Linear { k1, k2 } => u.inner(&probe_field(u.grid(), k1, k2)),
        ObservableSpec::LowNorm { k } => {
            let a = op.to_modal(u);
            let kmax = k.min(a.len().saturating_sub(1));
            a.iter().take(kmax + 1).map(|c| c * c).sum::<f64>().sqrt()
        }
        ObservableSpec::LpNorm { p } => u.lp_norm(p),
    }
}

/// The deterministic substep sizes of a run to horizon `t` (ramp mesh on
/// the first regular step, then regular steps), paired with start times.
fn substep_schedule(cfg: &SolverConfig, t: f64) -> Vec<(f64, f64)> {
    let steps = (t / cfg.dt).round().max(1.0) as usize;
    let mut out = Vec::new();
    let mut time = 0.0;
    for idx in 0..steps {
        if idx == 0 {
            for &h in &cfg.ramp_mesh() {
                out.push((time, h));
                time += h;
            }
        } else {
            out.push((time, cfg.dt));
            time += cfg.dt;
        }
    }
    out
}

/// Evolve `u(0) = u0` to time `t` with noise from `stream`; returns `u(t)`.
pub fn run_to_time(
    op: &AndersonOperator,
    cfg: &SolverConfig,
    u0: RealField,
    t: f64,
    stream: &mut RngStream,
) -> Result<RealField> {
    if t <= 0.0 {
        return Ok(u0);
    }
    let mut c = cfg.clone();
    c.t_final = t;
    if t < c.dt {
        c.dt = t;
    }
    let mut sim = Simulator::new(op, c, u0)?;
    while sim.time() < t - 1e-9 {
        sim.step(stream)?;
    }
    sim.u()
}

/// Monte Carlo estimate of `P_t phi(u0) = E[phi(u(t; u0))]`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SemigroupEstimate {
    pub mean: f64,
    pub stderr: f64,
    pub samples: usize,
    pub failures: usize,
}

pub fn estimate_semigroup<F>(
    op: &AndersonOperator,
    cfg: &SolverConfig,
    u0: &RealField,
    phi: F,
    t: f64,
    samples: usize,
    base: &RngStream,
) -> Result<SemigroupEstimate>
where
    F: Fn(&RealField) -> f64 + Sync,
{
    if samples < 2 {
        return Err(Error::Argument("estimate_semigroup needs samples >= 2".into()));
    }
    if t < 0.0 {
        return Err(Error::Argument("estimate_semigroup needs t >= 0".into()));
    }
    let results: Vec<Result<f64>> = (0..samples)
        .into_par_iter()
        .map(|i| {
            let mut stream = base.substream(Purpose::Driving, i as u64);
            run_to_time(op, cfg, u0.clone(), t, &mut stream).map(|u| phi(&u))
        })
        .collect();
    let mut values = Vec::with_capacity(samples);
    let mut failures = 0usize;
    for r in results {
        match r {
            Ok(v) => values.push(v),
            Err(_) => failures += 1,
        }
    }
    if (failures as f64) > MAX_FAILURE_FRACTION * samples as f64 {
        return Err(Error::Numerical(format!(
            "{failures}/{samples} trajectories failed in estimate_semigroup"
        )));
    }
    let batches = values.len().min(16);
    let (mean, stderr) = batch_mean_stderr(&values, batches);
    Ok(SemigroupEstimate {
        mean,
        stderr,
        samples: values.len(),
        failures,
    })
}

/// Running Krylov--Bogoliubov averages along one long trajectory.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct KbReport {
    /// Checkpoint times (every `record_every` regular steps).
    pub times: Vec<f64>,
    /// `averages[j][i]` = running average of observable `j` at `times[i]`.
    pub averages: Vec<Vec<f64>>,
    /// Instantaneous observable values at every regular step (per observable).
    pub series: Vec<Vec<f64>>,
    /// Batch-mean standard error of each observable's instantaneous series.
    pub stderrs: Vec<f64>,
}

pub fn krylov_bogoliubov(
    op: &AndersonOperator,
    cfg: &SolverConfig,
    u0: RealField,
    specs: &[ObservableSpec],
    stream: &mut RngStream,
) -> Result<KbReport> {
    if specs.is_empty() {
        return Err(Error::Argument("krylov_bogoliubov needs observables".into()));
    }
    let mut sim = Simulator::new(op, cfg.clone(), u0)?;
    let steps = (cfg.t_final / cfg.dt).round() as usize;
    let mut acc = vec![0.0f64; specs.len()];
    let mut series = vec![Vec::with_capacity(steps); specs.len()];
    let mut times = Vec::new();
    let mut averages = vec![Vec::new(); specs.len()];
    for step_idx in 0..steps {
        // one regular step: the whole pending substep mesh
        let target = sim.time() + cfg.dt;
        while sim.time() < target - 1e-9 {
            sim.step(stream)?;
        }
        let u = sim.u()?;
        for (j, spec) in specs.iter().enumerate() {
            let val = eval_observable(op, spec, &u);
            acc[j] += val * cfg.dt;
            series[j].push(val);
        }
        if (step_idx + 1) % cfg.record_every == 0 || step_idx + 1 == steps {
            times.push(sim.time());
            for j in 0..specs.len() {
                averages[j].push(acc[j] / sim.time());
            }
        }
    }
    let stderrs = series
        .iter()
        .map(|s| batch_mean_stderr(s, s.len().min(20)).1)
        .collect();
    Ok(KbReport {
        times,
        averages,
        series,
        stderrs,
    })
}

/// Synchronous (common-noise) coupling of two initial conditions.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CouplingReport {
    pub times: Vec<f64>,
    /// `||u - u~||_{L^2}` (equal to the remainder difference: the
    /// convolution cancels under common noise).
    pub d_l2: Vec<f64>,
    /// `C^{-eps}` proxy of the difference.
    pub d_besov: Vec<f64>,
    /// Fitted decay rate of `log d_l2` on the window `[T/2, T]`.
    pub rate: f64,
    pub r_squared: f64,
    /// False when the fit is degenerate or `R^2 < 0.5`.
    pub fit_ok: bool,
    pub eps: f64,
}

pub fn synchronous_couple(
    op: &AndersonOperator,
    cfg: &SolverConfig,
    u0: RealField,
    u0_tilde: RealField,
    stream: &mut RngStream,
) -> Result<CouplingReport> {
    let mut a = Simulator::new(op, cfg.clone(), u0)?;
    let mut b = Simulator::new(op, cfg.clone(), u0_tilde)?;
    let steps = (cfg.t_final / cfg.dt).round() as usize;
    let mut times = vec![0.0];
    let diff0 = a.v().sub(b.v())?;
    let mut d_l2 = vec![diff0.l2_norm()];
    let mut d_besov = vec![besov_norm(&diff0, -cfg.eps, f64::INFINITY, f64::INFINITY)];
    for step_idx in 0..steps {
        let target = a.time() + cfg.dt;
        while a.time() < target - 1e-9 {
            let dw = crate::noise::sample_wiener_increment(op.grid(), a.next_dt(), stream)?;
            a.step_with_increment(&dw)?;
            b.step_with_increment(&dw)?;
        }
        if (step_idx + 1) % cfg.record_every == 0 || step_idx + 1 == steps {
            let diff = a.v().sub(b.v())?;
            times.push(a.time());
            d_l2.push(diff.l2_norm());
            d_besov.push(besov_norm(&diff, -cfg.eps, f64::INFINITY, f64::INFINITY));
        }
    }
    // log-linear decay fit on the second half of the run
    let half = cfg.t_final / 2.0;
    let (xs, ys): (Vec<f64>, Vec<f64>) = times
        .iter()
        .zip(&d_l2)
        .filter(|&(&t, &d)| t >= half - 1e-9 && d > 1e-290)
        .map(|(&t, &d)| (t, d.ln()))
        .unzip();
    let fit = linear_fit(&xs, &ys);
    let (rate, r_squared, fit_ok) = match fit {
        Some(f) => (-f.slope, f.r_squared, f.r_squared >= 0.5),
        None => (0.0, 0.0, false),
    };
    Ok(CouplingReport {
        times,
        d_l2,
        d_besov,
        rate,
        r_squared,
        fit_ok,
        eps: cfg.eps,
    })
}

/// Relaxation to zero under a conditioned small-noise realization.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RelaxationOutcome {
    /// First time the remainder norm drops below the target, if reached
    /// before the horizon.
    pub t_hit: Option<f64>,
    pub success: bool,
    /// True when the rejection budget ran out before a conditioned
    /// trajectory was found.
    pub exhausted: bool,
    /// Factor applied to the conditioned field so the data triple is small
    /// (1.0 when the raw conditioned noise is already small enough).
    pub noise_scale: f64,
    /// Per-mode sup bound of the conditioning box.
    pub box_bound: f64,
    pub acceptance_estimate: f64,
    /// `(t, ||v(t)||)` in the `C^{1/2}` proxy norm, one entry per step.
    pub norms: Vec<(f64, f64)>,
}

/// Exponent of the `C^{1 - kappa}` proxy norm used by the probe.
pub const RELAXATION_NORM_EXPONENT: f64 = 0.5;

/// Run the remainder equation on a low-mode-conditioned stationary noise
/// trajectory, rescaled so the data triple stays below `eps_target / 2`,
/// and report the first time `||v||_{C^{1/2}}` drops below `eps_target`.
///
/// The conditioning box is the finite-mode event of the support theorem;
/// the rescaling picks a representative of the full small-noise event
/// (whose direct rejection sampling is infeasible). The solution map is
/// deterministic in the data vector, so the log-time relaxation mechanism
/// is exercised exactly as in the a-priori estimate.
#[allow(clippy::too_many_arguments)]
pub fn relaxation_probe(
    op: &AndersonOperator,
    cfg: &SolverConfig,
    u0: &RealField,
    eps_target: f64,
    eps_box: f64,
    n_cond: usize,
    stream: &mut RngStream,
    max_tries: u64,
) -> Result<RelaxationOutcome> {
    if !(eps_target > 0.0) {
        return Err(Error::Argument("eps_target must be positive".into()));
    }
    let norm_of = |v: &RealField| besov_norm(v, RELAXATION_NORM_EXPONENT, f64::INFINITY, f64::INFINITY);

    let initial = norm_of(u0);
    if initial <= eps_target {
        return Ok(RelaxationOutcome {
            t_hit: Some(0.0),
            success: true,
            exhausted: false,
            noise_scale: 1.0,
            box_bound: 0.0,
            acceptance_estimate: 1.0,
            norms: vec![(0.0, initial)],
        });
    }

    if !cfg.noise_on {
        // deterministic flow: pure decay of the remainder
        let mut v = u0.clone();
        let mut norms = vec![(0.0, norm_of(&v))];
        if norms[0].1 <= eps_target {
            return Ok(RelaxationOutcome {
                t_hit: Some(0.0),
                success: true,
                exhausted: false,
                noise_scale: 0.0,
                box_bound: 0.0,
                acceptance_estimate: 1.0,
                norms,
            });
        }
        let zero = zero_triple(op, cfg.n_trunc);
        let mut t_hit = None;
        for (s, h) in substep_schedule(cfg, cfg.t_final) {
            v = step_v(&v, &zero, h, op, s)?;
            let t = s + h;
            let n = norm_of(&v);
            norms.push((t, n));
            if t_hit.is_none() && n <= eps_target {
                t_hit = Some(t);
                break;
            }
        }
        return Ok(RelaxationOutcome {
            success: t_hit.is_some(),
            t_hit,
            exhausted: false,
            noise_scale: 0.0,
            box_bound: 0.0,
            acceptance_estimate: 1.0,
            norms,
        });
    }

    let sample = match low_mode_conditioned_sample(
        op,
        n_cond,
        eps_box,
        cfg.t_final,
        cfg.dt,
        stream,
        max_tries,
    )? {
        ConditionedOutcome::Accepted(s) => s,
        ConditionedOutcome::Exhausted { tries_per_mode, .. } => {
            return Ok(RelaxationOutcome {
                t_hit: None,
                success: false,
                exhausted: true,
                noise_scale: 1.0,
                box_bound: 0.0,
                acceptance_estimate: tries_per_mode
                    .iter()
                    .map(|&t| 1.0 / t.max(1) as f64)
                    .product(),
                norms: Vec::new(),
            })
        }
    };

    // raw enhanced data along the trajectory, then one global rescale
    let mut zs = Vec::with_capacity(sample.states.len());
    for st in &sample.states {
        zs.push(enhanced_data(st, cfg.n_trunc)?);
    }
    let sup = zs
        .iter()
        .flat_map(|z| {
            [
                besov_norm(&z.z1, -cfg.eps, f64::INFINITY, f64::INFINITY),
                besov_norm(&z.z2, -cfg.eps, f64::INFINITY, f64::INFINITY),
                besov_norm(&z.z3, -cfg.eps, f64::INFINITY, f64::INFINITY),
            ]
        })
        .fold(0.0f64, f64::max);
    let noise_scale = if sup > 0.0 {
        (eps_target / (2.0 * sup)).min(1.0)
    } else {
        1.0
    };
    for z in &mut zs {
        // data of the scaled field: z^(k) scales with the k-th power
        z.z1 = z.z1.scale(noise_scale);
        z.z2 = z.z2.scale(noise_scale * noise_scale);
        z.z3 = z.z3.scale(noise_scale.powi(3));
    }

    // v(0) = u0 - X(0): the decomposition against the stationary convolution
    let x0 = assemble_field(&sample.states[0], cfg.n_trunc)?.scale(noise_scale);
    let mut v = u0.sub(&x0)?;
    let mut norms = vec![(0.0, norm_of(&v))];
    let mut t_hit = if norms[0].1 <= eps_target { Some(0.0) } else { None };
    if t_hit.is_none() {
        let steps = zs.len() - 1;
        for i in 0..steps {
            // ramp-graded substeps against the left-endpoint data slice
            let base_time = i as f64 * cfg.dt;
            if i == 0 {
                let mut s = 0.0;
                for &h in &cfg.ramp_mesh() {
                    v = step_v(&v, &zs[0], h, op, s)?;
                    s += h;
                }
            } else {
                v = step_v(&v, &zs[i], cfg.dt, op, base_time)?;
            }
            let t = (i + 1) as f64 * cfg.dt;
            let n = norm_of(&v);
            norms.push((t, n));
            if n <= eps_target {
                t_hit = Some(t);
                break;
            }
        }
    }
    Ok(RelaxationOutcome {
        success: t_hit.is_some(),
        t_hit,
        exhausted: false,
        noise_scale,
        box_bound: sample.box_bound,
        acceptance_estimate: sample.acceptance_estimate,
        norms,
    })
}

fn zero_triple(op: &AndersonOperator, n: usize) -> EnhancedNoise {
    let grid = op.grid();
    EnhancedNoise {
        z1: RealField::zeros(grid),
        z2: RealField::zeros(grid),
        z3: RealField::zeros(grid),
        time: 0.0,
        n,
        sigma: RealField::zeros(grid),
    }
}

/// Feynman--Kac potential parameters `V(u) = c_tilde ||:u^2:||_{H^{-eps}}^p`.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct FkParams {
    pub c_tilde: f64,
    pub p: f64,
    pub eps: f64,
}

impl Default for FkParams {
    fn default() -> Self {
        Self {
            c_tilde: 1.0,
            p: 2.0,
            eps: 0.25,
        }
    }
}

/// Derivative estimator report.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct BelReport {
    /// Plain estimator of `d(P_t phi)(u0) . h`.
    pub value: f64,
    pub stderr: f64,
    pub samples: usize,
    pub failures: usize,
    /// Common-random-number finite difference `(P_t phi(u0 + delta h) -
    /// P_t phi(u0)) / delta`.
    pub fd_reference: f64,
    pub fd_stderr: f64,
    pub fd_delta: f64,
    /// Feynman--Kac variant (estimates the derivative of the weighted
    /// semigroup; close to the plain value when `c_tilde` is small).
    pub fk_value: Option<f64>,
    pub fk_stderr: Option<f64>,
    /// Batch stderr of the per-sample difference plain - FK.
    pub plain_minus_fk_stderr: Option<f64>,
    pub fk_params: Option<FkParams>,
    /// Set when the plain stderr exceeds half the absolute value.
    pub low_power: bool,
}

/// Bismut--Elworthy--Li derivative estimator with a common-random-number
/// finite-difference reference, and optionally the Feynman--Kac weighted
/// variant `E[e^{-int V} phi(u_t)((1/t) int eta dzeta + int (1-s/t) dV.eta)]`.
///
/// The driving increments have per-pairing variance `dt` and the equation
/// absorbs the `sqrt(2)` forcing, so the noise integral carries a
/// `1/(sqrt(2) t)` prefactor.
#[allow(clippy::too_many_arguments)]
pub fn bel_derivative<F>(
    op: &AndersonOperator,
    cfg: &SolverConfig,
    u0: &RealField,
    h: &RealField,
    phi: F,
    t: f64,
    samples: usize,
    fk: Option<FkParams>,
    fd_delta: f64,
    base: &RngStream,
) -> Result<BelReport>
where
    F: Fn(&RealField) -> f64 + Sync,
{
    if !(t > 0.0) {
        return Err(Error::Argument("bel_derivative needs t > 0".into()));
    }
    if samples < 2 {
        return Err(Error::Argument("bel_derivative needs samples >= 2".into()));
    }
    if !(fd_delta > 0.0) {
        return Err(Error::Argument("fd_delta must be positive".into()));
    }
    let mut c = cfg.clone();
    c.t_final = t;
    if t < c.dt {
        c.dt = t;
    }
    let schedule = substep_schedule(&c, t);
    // the Wick variance depends on time only: precompute along the schedule
    let sigmas: Vec<RealField> = if c.noise_on {
        schedule
            .iter()
            .map(|&(s, _)| sigma_profile(op, c.n_trunc, s, OUInit::Zero))
            .collect::<Result<_>>()?
    } else {
        schedule
            .iter()
            .map(|_| Ok(RealField::zeros(op.grid())))
            .collect::<Result<_>>()?
    };

    struct SampleOut {
        plain: f64,
        fk: Option<f64>,
        fd: f64,
    }

    let results: Vec<Result<SampleOut>> = (0..samples)
        .into_par_iter()
        .map(|i| -> Result<SampleOut> {
            let mut stream = base.substream(Purpose::Driving, i as u64);
            let mut sim = Simulator::new(op, c.clone(), u0.clone())?;
            let mut shifted = u0.clone();
            shifted.axpy(fd_delta, h);
            let mut sim_fd = Simulator::new(op, c.clone(), shifted)?;
            let mut eta = h.clone();
            let mut noise_integral = 0.0;
            let mut int_v = 0.0;
            let mut correction = 0.0;
            for (k, &(s, dtk)) in schedule.iter().enumerate() {
                let sigma = &sigmas[k];
                let u = sim.u()?;
                if let Some(fp) = fk {
                    let wick2 = wick_power(&u, sigma, 2)?;
                    let nv = sobolev_neg_norm(&wick2, fp.eps);
                    int_v += fp.c_tilde * nv.powf(fp.p) * dtk;
                    if nv > 0.0 {
                        let pairing = sobolev_neg_inner(&wick2, &u.mul(&eta)?, fp.eps)?;
                        let dv_eta = 2.0 * fp.p * fp.c_tilde * nv.powf(fp.p - 2.0) * pairing;
                        correction += (1.0 - s / t) * dv_eta * dtk;
                    }
                }
                let next_eta = if c.cubic_on {
                    step_eta(&eta, &u, sigma, dtk, op, s)?
                } else {
                    op.heat_apply(dtk, &eta)?
                };
                let dw = sim.step(&mut stream)?;
                sim_fd.step_with_increment(&dw)?;
                // Ito pairing: eta at the left endpoint of the increment
                noise_integral += eta.inner(&dw);
                eta = next_eta;
            }
            let u_t = sim.u()?;
            let phi_t = phi(&u_t);
            let scaled = noise_integral / (std::f64::consts::SQRT_2 * t);
            let plain = phi_t * scaled;
            let fk_val = fk.map(|_| (-int_v).exp() * phi_t * (scaled + correction));
            let fd = (phi(&sim_fd.u()?) - phi_t) / fd_delta;
            Ok(SampleOut {
                plain,
                fk: fk_val,
                fd,
            })
        })
        .collect();

    let mut plain = Vec::new();
    let mut fks = Vec::new();
    let mut fds = Vec::new();
    let mut failures = 0usize;
    for r in results {
        match r {
            Ok(s) => {
                plain.push(s.plain);
                if let Some(v) = s.fk {
                    fks.push(v);
                }
                fds.push(s.fd);
            }
            Err(_) => failures += 1,
        }
    }
    if (failures as f64) > MAX_FAILURE_FRACTION * samples as f64 {
        return Err(Error::Numerical(format!(
            "{failures}/{samples} trajectories failed in bel_derivative"
        )));
    }
    let batches = plain.len().min(16);
    let (value, stderr) = batch_mean_stderr(&plain, batches);
    let (fd_reference, fd_stderr) = batch_mean_stderr(&fds, batches);
    let (fk_value, fk_stderr, diff_stderr) = if fk.is_some() {
        let (m, s) = batch_mean_stderr(&fks, batches);
        let diffs: Vec<f64> = plain.iter().zip(&fks).map(|(a, b)| a - b).collect();
        let (_, ds) = batch_mean_stderr(&diffs, batches);
        (Some(m), Some(s), Some(ds))
    } else {
        (None, None, None)
    };
    Ok(BelReport {
        value,
        stderr,
        samples: plain.len(),
        failures,
        fd_reference,
        fd_stderr,
        fd_delta,
        fk_value,
        fk_stderr,
        plain_minus_fk_stderr: diff_stderr,
        fk_params: fk,
        low_power: stderr > 0.5 * value.abs(),
    })
}

/// One cell of the coming-down-from-infinity sweep.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SweepCell {
    pub scale: f64,
    pub seed_index: u64,
    /// `max_{t in [1/2, 1]} (1 ^ sqrt t) ||v||_{L^{3p-2}}`.
    pub stat: f64,
    /// `1 + K~_T` from the recorded noise norms.
    pub bound: f64,
    pub bound_ok: bool,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SweepReport {
    pub cells: Vec<SweepCell>,
    /// Worst max/min ratio of `stat` across scales, over seeds.
    pub ratio: f64,
    /// Fraction of cells satisfying the a-priori bound.
    pub bound_fraction: f64,
}

/// For `u0 = scale * g` with matched noise per seed, tabulate the uniform
/// coming-down statistic over `t in [1/2, 1]` and check the a-priori bound.
pub fn coming_down_sweep(
    op: &AndersonOperator,
    cfg: &SolverConfig,
    g: &RealField,
    scales: &[f64],
    seeds: usize,
    base: &RngStream,
) -> Result<SweepReport> {
    if scales.is_empty() {
        return Err(Error::Argument("coming_down_sweep needs scales".into()));
    }
    let jobs: Vec<(usize, usize)> = (0..seeds)
        .flat_map(|s| (0..scales.len()).map(move |j| (s, j)))
        .collect();
    let cells: Vec<Result<SweepCell>> = jobs
        .par_iter()
        .map(|&(seed, j)| -> Result<SweepCell> {
            // identical substream per seed: matched noise across scales
            let mut stream = base.substream(Purpose::Driving, seed as u64);
            let out = simulate(op, cfg.clone(), g.scale(scales[j]), &[], &mut stream)?;
            let stat = out
                .records
                .iter()
                .filter(|r| r.time >= 0.5 - 1e-9)
                .map(|r| r.coming_down)
                .fold(0.0f64, f64::max);
            let k_tilde = out.records.last().map(|r| r.k_tilde_t).unwrap_or(0.0);
            let bound = 1.0 + k_tilde;
            Ok(SweepCell {
                scale: scales[j],
                seed_index: seed as u64,
                stat,
                bound,
                bound_ok: stat <= bound,
            })
        })
        .collect();
    let cells: Vec<SweepCell> = cells.into_iter().collect::<Result<_>>()?;
    let mut ratio = 1.0f64;
    for seed in 0..seeds {
        let stats: Vec<f64> = cells
            .iter()
            .filter(|c| c.seed_index == seed as u64)
            .map(|c| c.stat)
            .collect();
        let max = stats.iter().fold(f64::MIN, |a, &b| a.max(b));
        let min = stats.iter().fold(f64::MAX, |a, &b| a.min(b));
        if min > 0.0 {
            ratio = ratio.max(max / min);
        }
    }
    let ok = cells.iter().filter(|c| c.bound_ok).count();
    let bound_fraction = ok as f64 / cells.len() as f64;
    Ok(SweepReport {
        cells,
        ratio,
        bound_fraction,
    })
}

/// Per-observable two-sample Kolmogorov--Smirnov statistics between the
/// time-`t` ensembles from two initial conditions (independent noise), a
/// lower bound witness for the total-variation distance.
pub fn mixing_distance(
    op: &AndersonOperator,
    cfg: &SolverConfig,
    u0: &RealField,
    u0_tilde: &RealField,
    t: f64,
    specs: &[ObservableSpec],
    samples: usize,
    base: &RngStream,
) -> Result<Vec<f64>> {
    if samples < 100 {
        return Err(Error::Argument("mixing_distance needs samples >= 100".into()));
    }
    if specs.is_empty() {
        return Err(Error::Argument("mixing_distance needs observables".into()));
    }
    let results: Vec<Result<(Vec<f64>, Vec<f64>)>> = (0..samples)
        .into_par_iter()
        .map(|i| -> Result<(Vec<f64>, Vec<f64>)> {
            let mut sa = base.substream(Purpose::Driving, 2 * i as u64);
            let mut sb = base.substream(Purpose::Driving, 2 * i as u64 + 1);
            let ua = run_to_time(op, cfg, u0.clone(), t, &mut sa)?;
            let ub = run_to_time(op, cfg, u0_tilde.clone(), t, &mut sb)?;
            Ok((
                specs.iter().map(|s| eval_observable(op, s, &ua)).collect(),
                specs.iter().map(|s| eval_observable(op, s, &ub)).collect(),
            ))
        })
        .collect();
    let mut ens_a = vec![Vec::with_capacity(samples); specs.len()];
    let mut ens_b = vec![Vec::with_capacity(samples); specs.len()];
    let mut failures = 0usize;
    for r in results {
        match r {
            Ok((va, vb)) => {
                for j in 0..specs.len() {
                    ens_a[j].push(va[j]);
                    ens_b[j].push(vb[j]);
                }
            }
            Err(_) => failures += 1,
        }
    }
    if (failures as f64) > MAX_FAILURE_FRACTION * samples as f64 {
        return Err(Error::Numerical(format!(
            "{failures}/{samples} trajectories failed in mixing_distance"
        )));
    }
    Ok((0..specs.len())
        .map(|j| ks_statistic(&ens_a[j], &ens_b[j]))
        .collect())
}

/// Combined ergodicity report for a set of initial conditions.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ErgodicityReport {
    pub times: Vec<f64>,
    /// `running_averages[ic][obs][checkpoint]`.
    pub running_averages: Vec<Vec<Vec<f64>>>,
    /// Batch stderr of the instantaneous series, `[ic][obs]`.
    pub stderrs: Vec<Vec<f64>>,
    /// Final running-average gap between the first two initial conditions,
    /// per observable, with the joint stderr.
    pub average_gaps: Vec<(f64, f64)>,
    /// KS statistic per observable between the second-half empirical
    /// distributions of the first two initial conditions.
    pub ks: Vec<f64>,
    /// Synchronous-coupling mixing rate between the first two conditions.
    pub mixing_rate: f64,
    pub mixing_r_squared: f64,
}

pub fn ergodicity_report(
    op: &AndersonOperator,
    cfg: &SolverConfig,
    ics: &[RealField],
    specs: &[ObservableSpec],
    base: &RngStream,
) -> Result<ErgodicityReport> {
    if ics.len() < 2 {
        return Err(Error::Argument("ergodicity_report needs >= 2 initial conditions".into()));
    }
    let kbs: Vec<Result<KbReport>> = ics
        .par_iter()
        .enumerate()
        .map(|(i, ic)| {
            let mut stream = base.substream(Purpose::Driving, 10_000 + i as u64);
            krylov_bogoliubov(op, cfg, ic.clone(), specs, &mut stream)
        })
        .collect();
    let kbs: Vec<KbReport> = kbs.into_iter().collect::<Result<_>>()?;
    let times = kbs[0].times.clone();
    let mut average_gaps = Vec::new();
    let mut ks = Vec::new();
    for j in 0..specs.len() {
        let a_last = *kbs[0].averages[j].last().unwrap();
        let b_last = *kbs[1].averages[j].last().unwrap();
        let joint = (kbs[0].stderrs[j].powi(2) + kbs[1].stderrs[j].powi(2)).sqrt();
        average_gaps.push(((a_last - b_last).abs(), joint));
        let half_a = &kbs[0].series[j][kbs[0].series[j].len() / 2..];
        let half_b = &kbs[1].series[j][kbs[1].series[j].len() / 2..];
        ks.push(ks_statistic(half_a, half_b));
    }
    let mut cstream = base.substream(Purpose::Driving, 20_000);
    let coupling = synchronous_couple(op, cfg, ics[0].clone(), ics[1].clone(), &mut cstream)?;
    Ok(ErgodicityReport {
        times,
        stderrs: kbs.iter().map(|k| k.stderrs.clone()).collect(),
        running_averages: kbs.into_iter().map(|k| k.averages).collect(),
        average_gaps,
        ks,
        mixing_rate: coupling.rate,
        mixing_r_squared: coupling.r_squared,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::hamiltonian::{renorm_constant, AndersonOperator};
    use crate::noise::sample_space_white_noise;
    use crate::stats::mean_stderr;
    use approx::assert_relative_eq;

    fn small_op(m: usize, seed: u64) -> AndersonOperator {
        let grid = TorusGrid::standard(m).unwrap();
        let mut stream = RngStream::new(seed, Purpose::Potential, 0);
        let xi = sample_space_white_noise(grid, &mut stream);
        AndersonOperator::assemble(grid, &xi, renorm_constant(grid), 0.0)
            .unwrap()
            .ensure_positive(1.0)
    }

    fn quick_cfg(n_trunc: usize) -> SolverConfig {
        SolverConfig {
            dt: 0.01,
            t_final: 0.5,
            n_trunc,
            record_every: 5,
            ..SolverConfig::default()
        }
    }

    #[test]
    fn semigroup_trivial_time_zero_and_constant() {
        let op = small_op(8, 11);
        let cfg = quick_cfg(30);
        let grid = op.grid();
        let u0 = RealField::from_fn(grid, |x, _| x.sin());
        let base = RngStream::new(5, Purpose::Driving, 0);
        let spec = ObservableSpec::Linear { k1: 1, k2: 0 };
        let est = estimate_semigroup(
            &op,
            &cfg,
            &u0,
            |u| eval_observable(&op, &spec, u),
            0.0,
            8,
            &base,
        )
        .unwrap();
        assert_relative_eq!(est.mean, eval_observable(&op, &spec, &u0), epsilon = 1e-12);
        assert!(est.stderr < 1e-12);
        // constant observable at positive time
        let est = estimate_semigroup(&op, &cfg, &u0, |_| 1.0, 0.1, 8, &base).unwrap();
        assert_relative_eq!(est.mean, 1.0, epsilon = 1e-12);
        assert!(est.stderr < 1e-12);
    }

    #[test]
    fn semigroup_chapman_kolmogorov_consistency() {
        let op = small_op(8, 12);
        let cfg = quick_cfg(30);
        let u0 = RealField::from_fn(op.grid(), |x, y| 0.5 * (x + y).cos());
        let spec = ObservableSpec::FourierChar { k1: 1, k2: 0 };
        let phi = |u: &RealField| eval_observable(&op, &spec, u);
        let base = RngStream::new(31, Purpose::Driving, 0);
        let direct = estimate_semigroup(&op, &cfg, &u0, phi, 0.2, 96, &base).unwrap();
        // nested: outer samples of u(0.1), inner estimate of P_{0.1} phi
        let outer: Vec<f64> = (0..24)
            .map(|i| {
                let mut s = base.substream(Purpose::Probe, i);
                let mid = run_to_time(&op, &cfg, u0.clone(), 0.1, &mut s).unwrap();
                let inner_base = base.substream(Purpose::Probe, 1000 + i);
                estimate_semigroup(&op, &cfg, &mid, phi, 0.1, 24, &inner_base)
                    .unwrap()
                    .mean
            })
            .collect();
        let (nested_mean, nested_se) = mean_stderr(&outer);
        let joint = (direct.stderr.powi(2) + nested_se.powi(2)).sqrt();
        assert!(
            (direct.mean - nested_mean).abs() < 2.5 * joint,
            "direct {} +- {}, nested {} +- {}",
            direct.mean,
            direct.stderr,
            nested_mean,
            nested_se
        );
    }

    #[test]
    fn semigroup_determinism_across_worker_counts() {
        let op = small_op(8, 13);
        let cfg = quick_cfg(30);
        let u0 = RealField::zeros(op.grid());
        let base = RngStream::new(77, Purpose::Driving, 0);
        let spec = ObservableSpec::LpNorm { p: 2.0 };
        let run = |threads: usize| {
            let pool = rayon::ThreadPoolBuilder::new()
                .num_threads(threads)
                .build()
                .unwrap();
            pool.install(|| {
                estimate_semigroup(
                    &op,
                    &cfg,
                    &u0,
                    |u| eval_observable(&op, &spec, u),
                    0.1,
                    16,
                    &base,
                )
                .unwrap()
            })
        };
        let a = run(1);
        let b = run(4);
        assert_eq!(a.mean.to_bits(), b.mean.to_bits());
        assert_eq!(a.stderr.to_bits(), b.stderr.to_bits());
    }

    #[test]
    fn krylov_bogoliubov_constant_observable() {
        let op = small_op(8, 14);
        let cfg = quick_cfg(30);
        // cos of the pairing with the zero probe: phi == cos(0 pairing)?
        // k = (0,0) probe is the constant 1, pairing is the integral; use
        // a genuinely constant observable through lp_norm of ... instead
        // check the running average of an arbitrary observable is between
        // min and max of the series, and times are uniform.
        let specs = [ObservableSpec::LpNorm { p: 2.0 }];
        let mut stream = RngStream::new(9, Purpose::Driving, 0);
        let kb = krylov_bogoliubov(&op, &cfg, RealField::zeros(op.grid()), &specs, &mut stream)
            .unwrap();
        assert_eq!(kb.times.len(), kb.averages[0].len());
        let lo = kb.series[0].iter().cloned().fold(f64::MAX, f64::min);
        let hi = kb.series[0].iter().cloned().fold(f64::MIN, f64::max);
        let last = *kb.averages[0].last().unwrap();
        assert!(last >= lo && last <= hi);
        // constant series has zero batch stderr and constant average:
        // feed a constant observable via FourierChar with huge frequency?
        // simpler: check the average recursion directly on the series
        let dt = cfg.dt;
        let manual: f64 = kb.series[0].iter().sum::<f64>() * dt / cfg.t_final;
        assert_relative_eq!(last, manual, epsilon = 1e-10);
    }

    #[test]
    fn coupling_identical_data_stays_zero() {
        let op = small_op(8, 15);
        let cfg = quick_cfg(30);
        let u0 = RealField::from_fn(op.grid(), |x, _| x.cos());
        let mut stream = RngStream::new(3, Purpose::Driving, 0);
        let rep = synchronous_couple(&op, &cfg, u0.clone(), u0, &mut stream).unwrap();
        assert!(rep.d_l2.iter().all(|&d| d == 0.0));
        assert!(!rep.fit_ok);
    }

    #[test]
    fn coupling_noise_off_contracts_at_spectral_rate() {
        let op = small_op(8, 16);
        let mut cfg = quick_cfg(30);
        cfg.noise_on = false;
        cfg.t_final = 1.0;
        let grid = op.grid();
        let u0 = RealField::from_fn(grid, |x, y| 0.1 * (x.cos() + y.sin()));
        let u0t = RealField::zeros(grid);
        let mut stream = RngStream::new(4, Purpose::Driving, 0);
        let rep = synchronous_couple(&op, &cfg, u0, u0t, &mut stream).unwrap();
        let lam0 = op.lambda0();
        let d0 = rep.d_l2[0];
        for (&t, &d) in rep.times.iter().zip(&rep.d_l2) {
            // linearized contraction; cubic terms only help for small data
            assert!(
                d <= d0 * (-lam0 * t).exp() * 1.05,
                "t = {t}: d = {d} vs bound {}",
                d0 * (-lam0 * t).exp()
            );
        }
        assert!(rep.fit_ok && rep.rate >= lam0 * 0.9, "rate {}", rep.rate);
    }

    #[test]
    fn coupling_with_noise_contracts() {
        let op = small_op(8, 17);
        let mut cfg = quick_cfg(30);
        cfg.t_final = 2.0;
        let u0 = RealField::constant(op.grid(), 2.0);
        let u0t = RealField::zeros(op.grid());
        let mut stream = RngStream::new(5, Purpose::Driving, 0);
        let rep = synchronous_couple(&op, &cfg, u0, u0t, &mut stream).unwrap();
        assert!(rep.rate > 0.0, "rate {} r2 {}", rep.rate, rep.r_squared);
        assert!(rep.d_l2.last().unwrap() < &rep.d_l2[0]);
    }

    #[test]
    fn relaxation_trivial_huge_target() {
        let op = small_op(8, 18);
        let cfg = quick_cfg(30);
        let u0 = RealField::constant(op.grid(), 1.0);
        let mut stream = RngStream::new(6, Purpose::Driving, 0);
        let out = relaxation_probe(&op, &cfg, &u0, 1e6, 0.5, 2, &mut stream, 1000).unwrap();
        assert_eq!(out.t_hit, Some(0.0));
        assert!(out.success);
    }

    #[test]
    fn relaxation_noise_off_matches_decay_oracle() {
        let op = small_op(8, 19);
        let mut cfg = quick_cfg(30);
        cfg.noise_on = false;
        cfg.t_final = 8.0;
        let u0 = RealField::from_fn(op.grid(), |x, y| 0.5 * (x.cos() + (x + y).sin()));
        let eps = 1e-3;
        let mut stream = RngStream::new(7, Purpose::Driving, 0);
        let out = relaxation_probe(&op, &cfg, &u0, eps, 0.5, 2, &mut stream, 1000).unwrap();
        let t_hit = out.t_hit.expect("deterministic decay must reach target");
        let n0 = out.norms[0].1;
        let predicted = (n0 / eps).ln() / op.lambda0();
        assert!(
            t_hit <= 2.0 * predicted && t_hit >= predicted / 4.0,
            "t_hit {t_hit} vs predicted {predicted}"
        );
    }

    #[test]
    fn relaxation_conditioned_noise_hits_small_target() {
        let op = small_op(8, 20);
        let mut cfg = quick_cfg(30);
        cfg.t_final = 10.0;
        let u0 = RealField::constant(op.grid(), 1.0);
        let mut stream = RngStream::new(8, Purpose::Driving, 0);
        let out = relaxation_probe(&op, &cfg, &u0, 1e-2, 2.5, 2, &mut stream, 10_000).unwrap();
        assert!(!out.exhausted);
        assert!(out.success, "norms tail: {:?}", &out.norms[out.norms.len().saturating_sub(3)..]);
        assert!(out.noise_scale <= 1.0 && out.noise_scale > 0.0);
    }

    #[test]
    fn bel_constant_observable_is_centered() {
        let op = small_op(8, 21);
        let cfg = quick_cfg(30);
        let u0 = RealField::zeros(op.grid());
        let h = RealField::from_fn(op.grid(), |x, _| x.cos());
        let base = RngStream::new(40, Purpose::Driving, 0);
        let rep = bel_derivative(&op, &cfg, &u0, &h, |_| 1.0, 0.2, 128, None, 1e-3, &base).unwrap();
        assert!(
            rep.value.abs() < 3.0 * rep.stderr.max(1e-12),
            "value {} stderr {}",
            rep.value,
            rep.stderr
        );
        // d(P_t 1) = 0 exactly for the finite difference as well
        assert!(rep.fd_reference.abs() < 1e-12);
    }

    #[test]
    fn bel_linear_sde_matches_closed_form() {
        let op = small_op(8, 22);
        let mut cfg = quick_cfg(30);
        cfg.cubic_on = false;
        cfg.dt = 0.005;
        let grid = op.grid();
        let u0 = RealField::zeros(grid);
        let h = RealField::from_fn(grid, |x, y| (x + y).cos());
        let t = 0.1;
        let spec = ObservableSpec::Linear { k1: 1, k2: 0 };
        let f = probe_field(grid, 1, 0);
        let base = RngStream::new(41, Purpose::Driving, 0);
        let rep = bel_derivative(
            &op,
            &cfg,
            &u0,
            &h,
            |u| eval_observable(&op, &spec, u),
            t,
            400,
            None,
            1e-4,
            &base,
        )
        .unwrap();
        let exact = f.inner(&op.heat_apply(t, &h).unwrap());
        assert!(
            (rep.value - exact).abs() < 2.0 * rep.stderr,
            "BEL {} +- {} vs exact {exact}",
            rep.value,
            rep.stderr
        );
        // the CRN finite difference is exact for linear dynamics + linear phi
        assert_relative_eq!(rep.fd_reference, exact, max_relative = 1e-4);
    }

    #[test]
    fn bel_feynman_kac_reduces_to_plain_at_zero_coupling() {
        let op = small_op(8, 23);
        let cfg = quick_cfg(30);
        let u0 = RealField::zeros(op.grid());
        let h = RealField::from_fn(op.grid(), |x, _| x.sin());
        let spec = ObservableSpec::FourierChar { k1: 0, k2: 1 };
        let base = RngStream::new(42, Purpose::Driving, 0);
        let fk = FkParams {
            c_tilde: 0.0,
            p: 2.0,
            eps: 0.25,
        };
        let rep = bel_derivative(
            &op,
            &cfg,
            &u0,
            &h,
            |u| eval_observable(&op, &spec, u),
            0.2,
            32,
            Some(fk),
            1e-3,
            &base,
        )
        .unwrap();
        assert_relative_eq!(rep.fk_value.unwrap(), rep.value, epsilon = 1e-12);
        // small positive coupling stays consistent within the joint error
        let fk = FkParams {
            c_tilde: 0.02,
            p: 2.0,
            eps: 0.25,
        };
        let rep = bel_derivative(
            &op,
            &cfg,
            &u0,
            &h,
            |u| eval_observable(&op, &spec, u),
            0.2,
            64,
            Some(fk),
            1e-3,
            &base,
        )
        .unwrap();
        let gap = (rep.value - rep.fk_value.unwrap()).abs();
        assert!(
            gap < 3.0 * rep.plain_minus_fk_stderr.unwrap().max(1e-9) + 0.05 * rep.value.abs(),
            "plain {} fk {} diff stderr {:?}",
            rep.value,
            rep.fk_value.unwrap(),
            rep.plain_minus_fk_stderr
        );
    }

    #[test]
    fn sweep_single_scale_ratio_one() {
        let op = small_op(8, 24);
        let mut cfg = quick_cfg(30);
        cfg.t_final = 1.0;
        cfg.ramp_steps = 10;
        let g = RealField::from_fn(op.grid(), |x, y| (x.cos() + y.cos()) * 0.5);
        let base = RngStream::new(50, Purpose::Driving, 0);
        let rep = coming_down_sweep(&op, &cfg, &g, &[3.0], 2, &base).unwrap();
        assert_eq!(rep.cells.len(), 2);
        assert_relative_eq!(rep.ratio, 1.0, epsilon = 1e-12);
    }

    #[test]
    fn mixing_trivial_cases() {
        let op = small_op(8, 25);
        let cfg = quick_cfg(30);
        let grid = op.grid();
        let specs = [
            ObservableSpec::Linear { k1: 1, k2: 0 },
            ObservableSpec::LpNorm { p: 2.0 },
        ];
        let base = RngStream::new(60, Purpose::Driving, 0);
        // t = 0, distinct point masses separated by the linear observable
        let ua = probe_field(grid, 1, 0);
        let ub = RealField::zeros(grid);
        let ks = mixing_distance(&op, &cfg, &ua, &ub, 0.0, &specs, 100, &base).unwrap();
        assert_relative_eq!(ks[0], 1.0, epsilon = 1e-12);
        // identical initial data, independent noise: KS at noise level
        let ks = mixing_distance(&op, &cfg, &ub, &ub, 0.3, &specs, 200, &base).unwrap();
        for &k in &ks {
            assert!(k < 0.2, "KS {k} too large for identical laws");
        }
    }

    #[test]
    fn feller_continuity_under_common_random_numbers() {
        let op = small_op(8, 26);
        let cfg = quick_cfg(30);
        let grid = op.grid();
        let base = RngStream::new(70, Purpose::Driving, 0);
        let spec = ObservableSpec::Linear { k1: 1, k2: 0 };
        let phi = |u: &RealField| eval_observable(&op, &spec, u);
        let dir = RealField::from_fn(grid, |x, _| x.cos());
        let p0 = estimate_semigroup(&op, &cfg, &RealField::zeros(grid), phi, 0.2, 24, &base)
            .unwrap()
            .mean;
        let mut prev_gap = f64::MAX;
        for &d in &[0.5, 0.125] {
            let u0 = dir.scale(d);
            let p = estimate_semigroup(&op, &cfg, &u0, phi, 0.2, 24, &base).unwrap().mean;
            let gap = (p - p0).abs();
            assert!(gap < prev_gap + 1e-12, "gap {gap} vs prev {prev_gap}");
            // Lipschitz ratio stays bounded
            assert!(gap / d < 50.0);
            prev_gap = gap;
        }
    }
}
