//! Self-check suite: quantitative, seeded verification of the laboratory's
//! key properties, from exact harmonic-analysis identities to statistical
//! targets for renormalization, coming down from infinity, derivative
//! estimators, mixing, and relaxation.
//!
//! Two profiles: `Quick` runs scaled-down grids and sample counts in
//! minutes; `Full` runs the pinned desk-scale parameters (tens of minutes).
//! Every check reports its measured value next to the threshold.

use rayon::prelude::*;

use crate::config::CheckResult;
use crate::error::Result;
use crate::grid::{
    lp_decompose, paraproduct, sobolev_neg_norm, ParaMode, RealField, TorusGrid,
};
use crate::hamiltonian::{renorm_constant, schauder_exponent_fit, AndersonOperator};
use crate::noise::{high_block_part, sample_space_white_noise};
use crate::rng::{Purpose, RngStream};
use crate::solver::{gamma_map, phi_map, SolverConfig};
use crate::stats::{linear_fit, mean_stderr};
use crate::wick::{
    assemble_field, binomial_shift, sigma_at, sigma_profile, stationary_covariance, step_ou,
    wick_power, OUInit, OUState,
};
use crate::ergodicity::{
    bel_derivative, coming_down_sweep, estimate_semigroup, eval_observable, krylov_bogoliubov,
    mixing_distance, probe_field, relaxation_probe, synchronous_couple, FkParams,
};
use crate::config::ObservableSpec;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Profile {
    Quick,
    Full,
}

impl Profile {
    pub fn name(self) -> &'static str {
        match self {
            Profile::Quick => "quick",
            Profile::Full => "full",
        }
    }
}

#[derive(Debug, Clone, serde::Serialize, serde::Deserialize)]
pub struct AcceptanceReport {
    pub profile: String,
    pub seed: u64,
    pub checks: Vec<CheckResult>,
    pub passed: bool,
}

fn check(name: &str, passed: bool, value: f64, threshold: f64) -> CheckResult {
    CheckResult {
        name: name.to_string(),
        passed,
        value,
        threshold,
    }
}

fn build_op(m: usize, seed: u64, lambda_min: f64) -> AndersonOperator {
    let grid = TorusGrid::standard(m).expect("valid grid");
    let mut stream = RngStream::new(seed, Purpose::Potential, m as u64);
    let xi = sample_space_white_noise(grid, &mut stream);
    AndersonOperator::assemble(grid, &xi, renorm_constant(grid), 0.0)
        .expect("assembly")
        .ensure_positive(lambda_min)
}

/// Run the whole suite. The report lists one line per sub-check; the
/// determinism contract at the file level is exercised by the CLI tests.
pub fn run_suite(profile: Profile, seed: u64) -> Result<AcceptanceReport> {
    let mut checks = Vec::new();
    checks.extend(criterion_1_harmonic_exactness(seed)?);
    checks.extend(criterion_2_renormalization_signature(profile, seed)?);
    checks.extend(criterion_3_renormalization_necessity(profile, seed)?);
    checks.extend(criterion_4_schauder(profile, seed)?);
    checks.extend(criterion_5_coming_down(profile, seed)?);
    checks.extend(criterion_6_derivative_consistency(profile, seed)?);
    checks.extend(criterion_7_mixing(profile, seed)?);
    checks.extend(criterion_8_relaxation_scaling(profile, seed)?);
    checks.extend(criterion_9_determinism(seed)?);
    let passed = checks.iter().all(|c| c.passed);
    Ok(AcceptanceReport {
        profile: profile.name().to_string(),
        seed,
        checks,
        passed,
    })
}

/// 1. Littlewood--Paley reconstruction, Bony decomposition, the
/// paracontrolled round trip, and the binomial Wick identity are exact to
/// 1e-10 relative on 50 random instances at M in {8, 16}.
pub fn criterion_1_harmonic_exactness(seed: u64) -> Result<Vec<CheckResult>> {
    let tol = 1e-10;
    let mut lp_err = 0.0f64;
    let mut bony_err = 0.0f64;
    let mut round_err = 0.0f64;
    let mut wick_err = 0.0f64;
    for &m in &[8usize, 16] {
        let op = build_op(m, seed, 1.0);
        let grid = op.grid();
        let n_modes = grid.sites() - 1;
        for i in 0..50u64 {
            let mut s = RngStream::new(seed, Purpose::Probe, 1000 * m as u64 + i);
            // LP reconstruction on a white-noise sample
            let f = sample_space_white_noise(grid, &mut s).field().clone();
            let mut sum = RealField::zeros(grid);
            for b in lp_decompose(&f) {
                sum.axpy(1.0, &b);
            }
            let sup = f.lp_norm(f64::INFINITY);
            lp_err = lp_err.max(sum.sub(&f)?.lp_norm(f64::INFINITY) / sup);
            // Bony decomposition sums to the product
            let g = sample_space_white_noise(grid, &mut s).field().clone();
            let mut bony = paraproduct(&f, &g, ParaMode::Lower)?;
            bony.axpy(1.0, &paraproduct(&f, &g, ParaMode::Resonant)?);
            bony.axpy(1.0, &paraproduct(&f, &g, ParaMode::Upper)?);
            let prod = f.mul(&g)?;
            bony_err = bony_err
                .max(bony.sub(&prod)?.lp_norm(f64::INFINITY) / prod.lp_norm(f64::INFINITY));
            // paracontrolled round trip Gamma_n . Phi_n = id
            let ou = OUState::sample_stationary(&op, &mut s);
            let x_hi = high_block_part(&assemble_field(&ou, n_modes)?, 3)?;
            let v = assemble_field(&ou, n_modes.min(60))?;
            let w = phi_map(&v, &x_hi)?;
            let pair = gamma_map(&w, &x_hi, 3, 1e-13, 300)?;
            round_err = round_err.max(pair.v.sub(&v)?.l2_norm() / v.l2_norm().max(1.0));
            // binomial Wick identity (Hermite translation with time-t variance)
            let n_tr = n_modes.min(30);
            let mut st = OUState::sample_stationary(&op, &mut s);
            let x_s = assemble_field(&st, n_tr)?;
            step_ou(&mut st, 0.3, &mut s)?;
            let x_t = assemble_field(&st, n_tr)?;
            let sigma = sigma_profile(&op, n_tr, 0.0, OUInit::Stationary)?;
            let powers = [
                x_t.clone(),
                wick_power(&x_t, &sigma, 2)?,
                wick_power(&x_t, &sigma, 3)?,
            ];
            let p = op.heat_apply(0.3, &x_s)?;
            let shifted = binomial_shift(&powers, &p)?;
            let d = x_t.sub(&p)?;
            let direct = [
                d.clone(),
                wick_power(&d, &sigma, 2)?,
                wick_power(&d, &sigma, 3)?,
            ];
            for (a, b) in shifted.iter().zip(&direct) {
                let scale = b.lp_norm(f64::INFINITY).max(1.0);
                let e = a.sub(b)?.lp_norm(f64::INFINITY) / scale;
                wick_err = wick_err.max(e);
            }
        }
    }
    Ok(vec![
        check("1a littlewood-paley reconstruction", lp_err < tol, lp_err, tol),
        check("1b bony decomposition", bony_err < tol, bony_err, tol),
        check("1c paracontrolled round trip", round_err < tol, round_err, tol),
        check("1d binomial wick identity", wick_err < tol, wick_err, tol),
    ])
}

/// 2. The Wick variance grows like log N with a clean linear fit, the Wick
/// square is centered, and the chaos covariance identity
/// `E[:X^2:(x) :X^2:(y)] = 2 E[X(x)X(y)]^2` holds at nearby probe pairs.
pub fn criterion_2_renormalization_signature(
    profile: Profile,
    seed: u64,
) -> Result<Vec<CheckResult>> {
    let (m, samples) = match profile {
        Profile::Quick => (16usize, 2000usize),
        Profile::Full => (32, 10_000),
    };
    let op = build_op(m, seed, 1.0);
    let grid = op.grid();
    let n_max = grid.sites() - 1;

    // (a) spatial mean of sigma_N against log N
    let mut levels = Vec::new();
    let mut n = 4usize;
    while n <= n_max {
        levels.push(n.min(n_max));
        n *= 2;
    }
    let xs: Vec<f64> = levels.iter().map(|&n| (n as f64).ln()).collect();
    let ys: Vec<f64> = levels
        .iter()
        .map(|&n| sigma_profile(&op, n, 0.0, OUInit::Stationary).map(|s| s.mean()))
        .collect::<Result<_>>()?;
    let fit = linear_fit(&xs, &ys).expect("sigma fit");
    let r2_ok = fit.r_squared > 0.9 && fit.slope > 0.0;

    // (b) Wick cancellation and (c) chaos covariance on the same ensemble
    let n_tr = n_max.min(511);
    let sites: Vec<(usize, usize)> = (0..5)
        .map(|i| {
            let (x, y) = ((3 + 5 * i) % m, (2 + 3 * i) % m);
            let a = grid.site(x, y);
            let b = grid.site((x + 1) % m, y); // lattice neighbor
            (a, b)
        })
        .collect();
    let sigma0 = sigma_at(&op, n_tr, OUInit::Stationary, 0.0, sites[0].0);
    let sigmas: Vec<(f64, f64)> = sites
        .iter()
        .map(|&(a, b)| {
            (
                sigma_at(&op, n_tr, OUInit::Stationary, 0.0, a),
                sigma_at(&op, n_tr, OUInit::Stationary, 0.0, b),
            )
        })
        .collect();
    let draws: Vec<(f64, Vec<f64>)> = (0..samples)
        .into_par_iter()
        .map(|i| {
            let mut s = RngStream::new(seed, Purpose::Driving, 50_000 + i as u64);
            let st = OUState::sample_stationary(&op, &mut s);
            let w0 = st.eval_at(n_tr, sites[0].0).powi(2) - sigma0;
            let prods = sites
                .iter()
                .zip(&sigmas)
                .map(|(&(a, b), &(sa, sb))| {
                    let wa = st.eval_at(n_tr, a).powi(2) - sa;
                    let wb = st.eval_at(n_tr, b).powi(2) - sb;
                    wa * wb
                })
                .collect();
            (w0, prods)
        })
        .collect();
    let w0s: Vec<f64> = draws.iter().map(|d| d.0).collect();
    let (wick_mean, wick_se) = mean_stderr(&w0s);
    let cancel_ok = wick_mean.abs() < 3.0 * wick_se;

    let mut chaos_err = 0.0f64;
    for (j, &(a, b)) in sites.iter().enumerate() {
        let prods: Vec<f64> = draws.iter().map(|d| d.1[j]).collect();
        let (emp, _) = mean_stderr(&prods);
        let cov = stationary_covariance(&op, n_tr, a, b);
        let exact = 2.0 * cov * cov;
        chaos_err = chaos_err.max((emp - exact).abs() / exact.abs());
    }
    Ok(vec![
        check("2a sigma log-divergence fit R^2", r2_ok, fit.r_squared, 0.9),
        check(
            "2b wick cancellation |mean| < 3 se",
            cancel_ok,
            wick_mean.abs() / wick_se.max(1e-300),
            3.0,
        ),
        check("2c chaos covariance max rel err", chaos_err < 0.15, chaos_err, 0.15),
    ])
}

/// 3. Renormalization necessity: on matched stationary samples the
/// `H^{-1/4}` distance between consecutive renormalized squares should
/// decrease in the truncation level while the bare distance should not.
///
/// The bare clause holds. The decrease clause is reported honestly even
/// though at lattice-accessible levels the measured increments scale like
/// `N^{-1/4} log N`, whose logarithm dominates the polynomial decay until
/// `N` far beyond desk scale: the measured sequence grows slowly instead
/// of decreasing. The same statistic does decrease once the weight beats
/// the logarithm (exponent 3/4; see the wick module's Cauchy-trend test).
pub fn criterion_3_renormalization_necessity(
    profile: Profile,
    seed: u64,
) -> Result<Vec<CheckResult>> {
    let (m, samples, levels): (usize, usize, Vec<usize>) = match profile {
        Profile::Quick => (16, 30, vec![8, 16, 32, 64, 128]),
        Profile::Full => (32, 60, vec![16, 32, 64, 128, 256]),
    };
    let eps = 0.25;
    let op = build_op(m, seed, 1.0);
    let sigmas: Vec<RealField> = levels
        .iter()
        .map(|&n| sigma_profile(&op, n, 0.0, OUInit::Stationary))
        .collect::<Result<_>>()?;
    let pairs = levels.len() - 1;
    let per_sample: Vec<(Vec<f64>, Vec<f64>)> = (0..samples)
        .into_par_iter()
        .map(|s| -> Result<(Vec<f64>, Vec<f64>)> {
            let mut stream = RngStream::new(seed, Purpose::Driving, 80_000 + s as u64);
            let st = OUState::sample_stationary(&op, &mut stream);
            let fields: Vec<RealField> = levels
                .iter()
                .map(|&n| assemble_field(&st, n))
                .collect::<Result<_>>()?;
            let mut ren = Vec::with_capacity(pairs);
            let mut bare = Vec::with_capacity(pairs);
            for i in 0..pairs {
                let hi = wick_power(&fields[i + 1], &sigmas[i + 1], 2)?;
                let lo = wick_power(&fields[i], &sigmas[i], 2)?;
                ren.push(sobolev_neg_norm(&hi.sub(&lo)?, eps));
                let bh = fields[i + 1].mul(&fields[i + 1])?;
                let bl = fields[i].mul(&fields[i])?;
                bare.push(sobolev_neg_norm(&bh.sub(&bl)?, eps));
            }
            Ok((ren, bare))
        })
        .collect::<Result<_>>()?;
    let mut ren_mean = vec![0.0f64; pairs];
    let mut bare_mean = vec![0.0f64; pairs];
    for (r, b) in &per_sample {
        for i in 0..pairs {
            ren_mean[i] += r[i] / samples as f64;
            bare_mean[i] += b[i] / samples as f64;
        }
    }
    // worst consecutive ratio; < 1 means strictly decreasing
    let ren_ratio = (1..pairs)
        .map(|i| ren_mean[i] / ren_mean[i - 1])
        .fold(0.0f64, f64::max);
    let bare_ratio = (1..pairs)
        .map(|i| bare_mean[i] / bare_mean[i - 1])
        .fold(0.0f64, f64::max);
    Ok(vec![
        check(
            "3a renormalized increments decrease (worst ratio)",
            ren_ratio < 1.0,
            ren_ratio,
            1.0,
        ),
        check(
            "3b bare increments do not decrease (worst ratio)",
            bare_ratio >= 1.0,
            bare_ratio,
            1.0,
        ),
    ])
}

/// 4. Heat-semigroup regularization exponent: the fitted slope of
/// `log ||e^{-tH}u_0||_{C^beta}` against `log t` for `C^alpha` data matches
/// `-(beta - alpha)/2` within 0.15 for `(alpha, beta) = (-0.2, 0.4)`.
pub fn criterion_4_schauder(profile: Profile, seed: u64) -> Result<Vec<CheckResult>> {
    let (m, samples) = match profile {
        Profile::Quick => (16usize, 10usize),
        Profile::Full => (32, 20),
    };
    let op = build_op(m, seed, 1.0);
    let fit = schauder_exponent_fit(&op, -0.2, 0.4, samples, seed ^ 0x5eed)?;
    let target = -(0.4 - (-0.2)) / 2.0;
    let err = (fit.slope - target).abs();
    Ok(vec![check(
        "4 schauder exponent |slope + 0.3|",
        err <= 0.15,
        err,
        0.15,
    )])
}

/// 5. Coming down from infinity: the uniform statistic
/// `max_{t in [1/2,1]} (1 ^ sqrt t)||v||_{L^4}` is flat across initial
/// scales spanning three decades under matched noise, and the a-priori
/// bound `1 + K~_T` holds in every cell.
pub fn criterion_5_coming_down(profile: Profile, seed: u64) -> Result<Vec<CheckResult>> {
    let (m, n_trunc, dt, scales, seeds): (usize, usize, f64, Vec<f64>, usize) = match profile {
        Profile::Quick => (16, 200, 2e-3, vec![1.0, 100.0], 2),
        Profile::Full => (32, 512, 1e-3, vec![1.0, 10.0, 100.0, 1000.0], 3),
    };
    // the spectral floor that clears the scale-1 transient from [1/2, 1]
    let op = build_op(m, seed, 12.0);
    let cfg = SolverConfig {
        dt,
        t_final: 1.0,
        n_trunc,
        ramp_steps: 25,
        lambda_min: 12.0,
        record_every: 10,
        ..SolverConfig::default()
    };
    let g = RealField::from_fn(op.grid(), |x, y| 0.5 * (x.cos() + y.sin()) + 1.0);
    let base = RngStream::new(seed, Purpose::Driving, 0);
    let rep = coming_down_sweep(&op, &cfg, &g, &scales, seeds, &base)?;
    Ok(vec![
        check("5a coming-down max/min ratio", rep.ratio < 1.2, rep.ratio, 1.2),
        check(
            "5b a-priori bound fraction",
            rep.bound_fraction == 1.0,
            rep.bound_fraction,
            1.0,
        ),
    ])
}

/// 6. Derivative consistency: the BEL estimator matches the
/// common-random-number finite difference, and the plain and Feynman--Kac
/// variants agree. The FK coupling constant is kept small (recorded in the
/// report) since the weighted semigroup only approximates the plain one.
pub fn criterion_6_derivative_consistency(
    profile: Profile,
    seed: u64,
) -> Result<Vec<CheckResult>> {
    let (m, n_trunc, dt, t, samples) = match profile {
        Profile::Quick => (8usize, 40usize, 5e-3, 0.3, 500usize),
        Profile::Full => (16, 128, 2e-3, 0.5, 10_000),
    };
    let op = build_op(m, seed, 1.0);
    let grid = op.grid();
    let cfg = SolverConfig {
        dt,
        t_final: t,
        n_trunc,
        ..SolverConfig::default()
    };
    let u0 = RealField::from_fn(grid, |x, _| 0.5 * x.cos());
    let h = probe_field(grid, 0, 1);
    let spec = ObservableSpec::FourierChar { k1: 1, k2: 0 };
    let fk = FkParams {
        c_tilde: 0.05,
        p: 2.0,
        eps: 0.25,
    };
    let base = RngStream::new(seed, Purpose::Driving, 0);
    let rep = bel_derivative(
        &op,
        &cfg,
        &u0,
        &h,
        |u| eval_observable(&op, &spec, u),
        t,
        samples,
        Some(fk),
        1e-2,
        &base,
    )?;
    let gap = (rep.value - rep.fd_reference).abs();
    let joint = (rep.stderr.powi(2) + rep.fd_stderr.powi(2)).sqrt();
    let fd_ok = gap <= (0.1 * rep.fd_reference.abs()).max(2.0 * joint);
    let fk_gap = (rep.value - rep.fk_value.unwrap()).abs();
    let fk_se = rep.plain_minus_fk_stderr.unwrap();
    let fk_ok = fk_gap <= 2.0 * fk_se;
    Ok(vec![
        check(
            "6a bel vs finite difference gap / bound",
            fd_ok,
            gap / (0.1 * rep.fd_reference.abs()).max(2.0 * joint).max(1e-300),
            1.0,
        ),
        check(
            "6b plain vs feynman-kac gap / 2 se",
            fk_ok,
            fk_gap / (2.0 * fk_se).max(1e-300),
            1.0,
        ),
    ])
}

/// 7. Mixing: synchronous coupling contracts from well-separated data,
/// observable KS distances shrink in time, and Krylov--Bogoliubov averages
/// from the two initial conditions coincide.
pub fn criterion_7_mixing(profile: Profile, seed: u64) -> Result<Vec<CheckResult>> {
    let (m, n_trunc, dt, t_couple, seeds, ks_times, ks_samples, t_kb): (
        usize,
        usize,
        f64,
        f64,
        usize,
        Vec<f64>,
        usize,
        f64,
    ) = match profile {
        Profile::Quick => (8, 40, 5e-3, 6.0, 2, vec![0.1, 1.0, 3.0], 100, 10.0),
        Profile::Full => (16, 128, 2e-3, 20.0, 5, vec![0.2, 1.0, 5.0], 200, 50.0),
    };
    let op = build_op(m, seed, 1.0);
    let grid = op.grid();
    let shape = RealField::from_fn(grid, |x, y| x.cos() + (x + y).sin());
    let u0 = shape.scale(10.0 / shape.l2_norm());
    let zero = RealField::zeros(grid);

    // (a) coupling rate across seeds
    let cfg = SolverConfig {
        dt,
        t_final: t_couple,
        n_trunc,
        record_every: 25,
        ..SolverConfig::default()
    };
    let reports: Vec<_> = (0..seeds)
        .into_par_iter()
        .map(|s| {
            let mut stream = RngStream::new(seed, Purpose::Driving, 200 + s as u64);
            synchronous_couple(&op, &cfg, u0.clone(), zero.clone(), &mut stream)
        })
        .collect::<Result<Vec<_>>>()?;
    let good = reports
        .iter()
        .filter(|r| r.rate > 0.0 && r.r_squared > 0.7)
        .count();
    let need = seeds - 1; // >= 4 of 5 at full scale
    let rate_ok = good >= need;

    // (b) KS mixing distance decreasing in t
    let spec_set = [
        ObservableSpec::FourierChar { k1: 1, k2: 0 },
        ObservableSpec::FourierChar { k1: 0, k2: 1 },
    ];
    let mut ks_curves = Vec::new();
    for (j, &tt) in ks_times.iter().enumerate() {
        let base = RngStream::new(seed, Purpose::Driving, 300 + j as u64);
        let ks = mixing_distance(&op, &cfg, &u0, &zero, tt, &spec_set, ks_samples, &base)?;
        ks_curves.push(ks.iter().sum::<f64>() / ks.len() as f64);
    }
    // two-sample KS has a sampling floor ~ 1/sqrt(n); demand decrease up to
    // that slack, plus a genuinely mixed law at the last time
    let slack = 1.5 / (ks_samples as f64).sqrt();
    let ks_ok = ks_curves.windows(2).all(|w| w[1] <= w[0] + slack)
        && *ks_curves.last().unwrap() <= ks_curves[0]
        && *ks_curves.last().unwrap() <= 0.25;

    // (c) Krylov--Bogoliubov agreement at the long horizon
    let cfg_kb = SolverConfig {
        dt,
        t_final: t_kb,
        n_trunc,
        record_every: 100,
        ramp_steps: 10,
        ..SolverConfig::default()
    };
    let kb_pair: Vec<_> = [u0.clone(), zero.clone()]
        .into_par_iter()
        .enumerate()
        .map(|(i, ic)| {
            let mut stream = RngStream::new(seed, Purpose::Driving, 400 + i as u64);
            krylov_bogoliubov(&op, &cfg_kb, ic, &spec_set, &mut stream)
        })
        .collect::<Result<Vec<_>>>()?;
    let mut kb_worst = 0.0f64;
    for j in 0..spec_set.len() {
        let a = *kb_pair[0].averages[j].last().unwrap();
        let b = *kb_pair[1].averages[j].last().unwrap();
        let joint = (kb_pair[0].stderrs[j].powi(2) + kb_pair[1].stderrs[j].powi(2)).sqrt();
        kb_worst = kb_worst.max((a - b).abs() / (2.0 * joint).max(1e-300));
    }
    Ok(vec![
        check(
            "7a coupling rate fits (good seeds)",
            rate_ok,
            good as f64,
            need as f64,
        ),
        check(
            "7b ks distance decreasing",
            ks_ok,
            ks_curves.last().copied().unwrap_or(1.0),
            ks_curves.first().copied().unwrap_or(1.0),
        ),
        check("7c kb average gap / 2 joint se", kb_worst <= 1.0, kb_worst, 1.0),
    ])
}

/// 8. Relaxation scaling: under the conditioned small-noise trajectory the
/// hitting time of the target grows affinely in `log(1/eps)`.
pub fn criterion_8_relaxation_scaling(profile: Profile, seed: u64) -> Result<Vec<CheckResult>> {
    let (m, n_trunc, dt, horizon, targets): (usize, usize, f64, f64, Vec<f64>) = match profile {
        Profile::Quick => (8, 40, 1e-2, 10.0, vec![1e-1, 3e-2, 1e-2]),
        Profile::Full => (16, 128, 5e-3, 12.0, vec![1e-1, 3e-2, 1e-2, 3e-3, 1e-3]),
    };
    let op = build_op(m, seed, 1.0);
    let cfg = SolverConfig {
        dt,
        t_final: horizon,
        n_trunc,
        ..SolverConfig::default()
    };
    let u0 = RealField::from_fn(op.grid(), |x, y| 3.0 * (x.cos() + y.cos()));
    let mut hits = Vec::new();
    let mut logs = Vec::new();
    let mut all_hit = true;
    for &eps in &targets {
        // matched conditioned trajectory across targets: one stream index
        let mut stream = RngStream::new(seed, Purpose::Driving, 700);
        let out = relaxation_probe(&op, &cfg, &u0, eps, 2.5, 2, &mut stream, 20_000)?;
        match out.t_hit {
            Some(t) => {
                hits.push(t);
                logs.push((1.0 / eps).ln());
            }
            None => all_hit = false,
        }
    }
    let fit = linear_fit(&logs, &hits);
    let (r2, slope_ok) = match fit {
        Some(f) => (f.r_squared, f.slope > 0.0),
        None => (0.0, false),
    };
    Ok(vec![
        check("8a all targets reached", all_hit, hits.len() as f64, targets.len() as f64),
        check(
            "8b hitting time affine in log(1/eps): R^2",
            r2 > 0.8 && slope_ok,
            r2,
            0.8,
        ),
    ])
}

/// 9. Determinism: ensemble estimates are bit-identical across worker
/// counts (the file-level byte-identity of reports is checked by the CLI
/// integration tests, which run the binary twice).
pub fn criterion_9_determinism(seed: u64) -> Result<Vec<CheckResult>> {
    let op = build_op(8, seed, 1.0);
    let cfg = SolverConfig {
        dt: 1e-2,
        t_final: 0.2,
        n_trunc: 40,
        ..SolverConfig::default()
    };
    let u0 = RealField::zeros(op.grid());
    let base = RngStream::new(seed, Purpose::Driving, 0);
    let spec = ObservableSpec::LpNorm { p: 4.0 };
    let run = |threads: usize| -> Result<(u64, u64)> {
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build()
            .map_err(|e| crate::error::Error::Numerical(e.to_string()))?;
        pool.install(|| {
            let est = estimate_semigroup(
                &op,
                &cfg,
                &u0,
                |u| eval_observable(&op, &spec, u),
                0.2,
                24,
                &base,
            )?;
            Ok((est.mean.to_bits(), est.stderr.to_bits()))
        })
    };
    let a = run(1)?;
    let b = run(4)?;
    let identical = a == b;
    Ok(vec![check(
        "9 bit-identical across worker counts",
        identical,
        if identical { 0.0 } else { 1.0 },
        0.0,
    )])
}
