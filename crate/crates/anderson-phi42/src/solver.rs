//! Time integration of the Da Prato--Debussche remainder equation and the
//! full truncated SPDE, the paracontrolled maps `Phi_n`/`Gamma_n`, the
//! linearized flow `eta`, and the diagnostic constants `K_t`, `K~_t`.
//!
//! The linear part is integrated exactly in the eigenbasis (exponential
//! Euler with the `phi_1` weight); the nonlinearity is evaluated in physical
//! space. The stochastic convolution is co-evolved by exact OU transitions
//! driven by the same per-step Wiener increments, so couplings and
//! derivative estimators can share one noise realization with the solver.

use crate::error::{Error, Result};
use crate::grid::{besov_norm, gradient_sq, paraproduct, ParaMode, RealField};
use crate::hamiltonian::AndersonOperator;
use crate::noise::sample_wiener_increment;
use crate::rng::RngStream;
use crate::wick::{
    enhanced_data, sigma_profile, step_ou_with_increment, wick_power, EnhancedNoise, OUInit,
    OUState,
};

/// `phi_1(x) = (1 - e^{-x}) / x`, the exponential-Euler weight, with the
/// removable singularity filled at zero.
#[inline]
pub fn phi1(x: f64) -> f64 {
    if x.abs() < 1e-8 {
        1.0 - 0.5 * x
    } else {
        (1.0 - (-x).exp()) / x
    }
}

/// Integration parameters for the remainder equation.
#[derive(Debug, Clone)]
pub struct SolverConfig {
    /// Regular time step.
    pub dt: f64,
    /// Horizon.
    pub t_final: f64,
    /// Spectral truncation level `N` (eigenmode index).
    pub n_trunc: usize,
    /// Paraproduct truncation `n` (Littlewood--Paley block index).
    pub n_para: usize,
    /// Negative-regularity exponent for `C^{-eps}` diagnostics.
    pub eps: f64,
    /// Positive-regularity exponent of the solution space.
    pub sigma_reg: f64,
    /// Even integer for `L^p` diagnostics.
    pub p: u32,
    /// Integrability exponent `q` of the fixed-point space.
    pub q: f64,
    /// Spectral floor passed to `ensure_positive` by callers.
    pub lambda_min: f64,
    /// Number of dyadic ramp-in substeps replacing the first regular step.
    ///
    /// The explicit cubic term needs `dt < 1/|v|^2` near `t = 0`; a fixed
    /// graded mesh (sizes `dt 2^{-K}, dt 2^{-K}, dt 2^{-K+1}, ..., dt/2`,
    /// summing exactly to `dt`) keeps huge initial data stable while staying
    /// deterministic and identical across trajectories, so matched-noise
    /// comparisons across initial scales remain exact.
    pub ramp_steps: u32,
    /// When false, the enhanced data is forced to zero (deterministic flow).
    pub noise_on: bool,
    /// When false, the cubic reaction is dropped: the dynamics reduce to the
    /// linear SDE `du = -Hu dt + sqrt(2) dW`, for which derivative and
    /// continuity probes have closed forms.
    pub cubic_on: bool,
    /// Record diagnostics every this many regular steps.
    pub record_every: usize,
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self {
            dt: 1e-3,
            t_final: 1.0,
            n_trunc: 0,
            n_para: 2,
            eps: 0.1,
            sigma_reg: 0.2,
            p: 2,
            q: 2.0,
            lambda_min: 1.0,
            ramp_steps: 0,
            noise_on: true,
            cubic_on: true,
            record_every: 10,
        }
    }
}

impl SolverConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.dt > 0.0) {
            return Err(Error::Config("solver.dt must be positive".into()));
        }
        if !(self.t_final >= self.dt) {
            return Err(Error::Config("solver.T must be at least dt".into()));
        }
        if !(0.0 < self.eps && self.eps < self.sigma_reg && self.sigma_reg < 1.0) {
            return Err(Error::Config(
                "solver exponents must satisfy 0 < eps < sigma < 1".into(),
            ));
        }
        if !(self.q > 1.0) {
            return Err(Error::Config("solver.q must exceed 1".into()));
        }
        // local-existence constraint of the fixed-point space
        let holder = self.q / (self.q - 1.0);
        if (self.sigma_reg + self.eps) / 2.0 * holder >= 1.0 / 3.0 {
            return Err(Error::Config(format!(
                "(sigma + eps)/2 * q/(q-1) = {:.4} breaks the < 1/3 constraint",
                (self.sigma_reg + self.eps) / 2.0 * holder
            )));
        }
        if self.p < 2 || self.p % 2 != 0 {
            return Err(Error::Config("solver.p must be an even integer >= 2".into()));
        }
        if self.record_every == 0 {
            return Err(Error::Config("solver.record_every must be positive".into()));
        }
        Ok(())
    }

    /// The graded substep sizes for the first regular step. Dyadic sizes sum
    /// to `dt` exactly in floating point.
    pub fn ramp_mesh(&self) -> Vec<f64> {
        if self.ramp_steps == 0 {
            return vec![self.dt];
        }
        let k = self.ramp_steps;
        let mut mesh = Vec::with_capacity(k as usize + 1);
        mesh.push(self.dt * (0.5f64).powi(k as i32));
        for j in (1..=k).rev() {
            mesh.push(self.dt * (0.5f64).powi(j as i32));
        }
        mesh
    }
}

/// One exponential-Euler step of the remainder equation:
/// `v <- e^{-dt H} v - dt phi_1(dt H) f(v, z)` with
/// `f(v, z) = v^3 + v^2 z1 + v z2 + z3`.
pub fn step_v(
    v: &RealField,
    z: &EnhancedNoise,
    dt: f64,
    op: &AndersonOperator,
    time: f64,
) -> Result<RealField> {
    if !(dt > 0.0) {
        return Err(Error::Argument(format!("step_v needs dt > 0, got {dt}")));
    }
    if v.grid() != op.grid() {
        return Err(Error::Argument("step_v grid mismatch".into()));
    }
    let mut f = RealField::zeros(v.grid());
    for i in 0..v.grid().sites() {
        let vi = v.values()[i];
        f.values_mut()[i] = vi * vi * vi
            + vi * vi * z.z1.values()[i]
            + vi * z.z2.values()[i]
            + z.z3.values()[i];
    }
    let mut a = op.to_modal(v);
    let b = op.to_modal(&f);
    for ((av, &bv), &l) in a.iter_mut().zip(b.iter()).zip(op.eigenvalues()) {
        let x = l * dt;
        *av = (-x).exp() * *av - dt * phi1(x) * bv;
    }
    let out = op.from_modal(&a);
    if !out.is_finite() {
        return Err(Error::Integration {
            time,
            context: "remainder blow-up: non-finite field after step_v".into(),
        });
    }
    Ok(out)
}

/// One exponential-Euler step of the linearized flow
/// `d eta + H eta + 3 :u^2: eta = 0` with `:u^2: = H_2(u, sigma)`.
pub fn step_eta(
    eta: &RealField,
    u: &RealField,
    sigma: &RealField,
    dt: f64,
    op: &AndersonOperator,
    time: f64,
) -> Result<RealField> {
    if !(dt > 0.0) {
        return Err(Error::Argument(format!("step_eta needs dt > 0, got {dt}")));
    }
    let wick2 = wick_power(u, sigma, 2)?;
    let f = eta.zip_with(&wick2, |e, w| 3.0 * w * e)?;
    let mut a = op.to_modal(eta);
    let b = op.to_modal(&f);
    for ((av, &bv), &l) in a.iter_mut().zip(b.iter()).zip(op.eigenvalues()) {
        let x = l * dt;
        *av = (-x).exp() * *av - dt * phi1(x) * bv;
    }
    let out = op.from_modal(&a);
    if !out.is_finite() {
        return Err(Error::Integration {
            time,
            context: "linearized flow blow-up: non-finite eta".into(),
        });
    }
    Ok(out)
}

/// Besov norms of the enhanced triple at one time slice.
#[derive(Debug, Clone, Copy)]
pub struct ZNorms {
    pub time: f64,
    /// Interval to the next slice (left-endpoint quadrature weight).
    pub weight: f64,
    pub n1: f64,
    pub n2: f64,
    pub n3: f64,
}

/// The constants of Eqs. (3.8)/(3.9) with the exponents used to form them.
#[derive(Debug, Clone, Copy, serde::Serialize)]
pub struct DiagnosticConstants {
    pub k_t: f64,
    pub k_tilde_t: f64,
    pub p: u32,
    pub eps: f64,
    pub q: f64,
    pub a: f64,
    pub b: f64,
}

/// Default exponents for `K~_t`: the paper only asks `a, b > 0`, `q > 1`.
pub const K_TILDE_Q: f64 = 2.0;
pub const K_TILDE_A: f64 = 0.5;
pub const K_TILDE_B: f64 = 3.0;

/// Measure the `C^{-eps}` norms of an enhanced triple.
pub fn z_norms(z: &EnhancedNoise, eps: f64, weight: f64) -> ZNorms {
    ZNorms {
        time: z.time,
        weight,
        n1: besov_norm(&z.z1, -eps, f64::INFINITY, f64::INFINITY),
        n2: besov_norm(&z.z2, -eps, f64::INFINITY, f64::INFINITY),
        n3: besov_norm(&z.z3, -eps, f64::INFINITY, f64::INFINITY),
    }
}

/// `K_t = sup_r |z1|^{2p} + int |z2|^{3p} + int |z3|^{3p}` and
/// `K~_t = (sup_r |z1| + t^a |z2|_{L^q_t} + t^a |z3|_{L^q_t})^b`, all norms
/// `C^{-eps}`, left-endpoint quadrature.
pub fn diagnostic_constants(
    norms: &[ZNorms],
    p: u32,
    eps: f64,
    q: f64,
    a: f64,
    b: f64,
) -> Result<DiagnosticConstants> {
    if norms.is_empty() {
        return Err(Error::Argument("empty z trajectory".into()));
    }
    let t = norms.last().map(|n| n.time + n.weight).unwrap_or(0.0);
    let sup1 = norms.iter().map(|n| n.n1).fold(0.0f64, f64::max);
    let int2: f64 = norms.iter().map(|n| n.weight * n.n2.powi(3 * p as i32)).sum();
    let int3: f64 = norms.iter().map(|n| n.weight * n.n3.powi(3 * p as i32)).sum();
    let k_t = sup1.powi(2 * p as i32) + int2 + int3;
    let lq2: f64 = norms
        .iter()
        .map(|n| n.weight * n.n2.powf(q))
        .sum::<f64>()
        .powf(1.0 / q);
    let lq3: f64 = norms
        .iter()
        .map(|n| n.weight * n.n3.powf(q))
        .sum::<f64>()
        .powf(1.0 / q);
    let k_tilde_t = (sup1 + t.powf(a) * lq2 + t.powf(a) * lq3).powf(b);
    Ok(DiagnosticConstants {
        k_t,
        k_tilde_t,
        p,
        eps,
        q,
        a,
        b,
    })
}

/// One diagnostics record along a trajectory.
#[derive(Debug, Clone, Copy, serde::Serialize)]
pub struct DiagnosticsRow {
    pub time: f64,
    pub l2: f64,
    pub l4: f64,
    /// `|v|_{L^{3p-2}}`.
    pub l3pm2: f64,
    /// `(1 and sqrt t) |v|_{L^{3p-2}}`, the coming-down statistic.
    pub coming_down: f64,
    /// `C^{-eps}` Besov proxy of `v`.
    pub besov: f64,
    pub k_t: f64,
    pub k_tilde_t: f64,
}

/// Co-evolving integrator: remainder `v` (exponential Euler) plus the
/// stochastic convolution (exact OU transitions), both consuming the same
/// per-step Wiener increments.
pub struct Simulator<'a> {
    op: &'a AndersonOperator,
    cfg: SolverConfig,
    ou: OUState<'a>,
    v: RealField,
    time: f64,
    /// Substep sizes still pending inside the current regular step.
    mesh: Vec<f64>,
    mesh_pos: usize,
    steps_done: usize,
}

impl<'a> Simulator<'a> {
    pub fn new(op: &'a AndersonOperator, cfg: SolverConfig, u0: RealField) -> Result<Self> {
        cfg.validate()?;
        if u0.grid() != op.grid() {
            return Err(Error::Argument("initial data grid mismatch".into()));
        }
        if !u0.is_finite() {
            return Err(Error::Argument("initial data must be finite".into()));
        }
        if cfg.n_trunc >= op.eigenvalues().len() {
            return Err(Error::Config(format!(
                "spectral truncation {} out of range 0..{}",
                cfg.n_trunc,
                op.eigenvalues().len()
            )));
        }
        let mesh = cfg.ramp_mesh();
        Ok(Self {
            op,
            cfg,
            ou: OUState::zero(op),
            v: u0,
            time: 0.0,
            mesh,
            mesh_pos: 0,
            steps_done: 0,
        })
    }

    #[inline]
    pub fn time(&self) -> f64 {
        self.time
    }

    #[inline]
    pub fn v(&self) -> &RealField {
        &self.v
    }

    #[inline]
    pub fn ou(&self) -> &OUState<'a> {
        &self.ou
    }

    #[inline]
    pub fn cfg(&self) -> &SolverConfig {
        &self.cfg
    }

    /// Current enhanced data (zero triple when noise is off).
    pub fn current_z(&self) -> Result<EnhancedNoise> {
        if self.cfg.noise_on {
            enhanced_data(&self.ou, self.cfg.n_trunc)
        } else {
            let grid = self.op.grid();
            Ok(EnhancedNoise {
                z1: RealField::zeros(grid),
                z2: RealField::zeros(grid),
                z3: RealField::zeros(grid),
                time: self.time,
                n: self.cfg.n_trunc,
                sigma: RealField::zeros(grid),
            })
        }
    }

    /// Full solution `u = Pi_N conv + v`.
    pub fn u(&self) -> Result<RealField> {
        let mut u = crate::wick::assemble_field(&self.ou, self.cfg.n_trunc)?;
        u.axpy(1.0, &self.v);
        Ok(u)
    }

    /// Size of the next substep.
    pub fn next_dt(&self) -> f64 {
        self.mesh[self.mesh_pos]
    }

    /// Advance one substep with a caller-provided Wiener increment of
    /// matching step size (`Var = next_dt` per site pairing).
    pub fn step_with_increment(&mut self, dw: &RealField) -> Result<()> {
        let dt = self.next_dt();
        if self.cfg.cubic_on {
            let z = self.current_z()?;
            self.v = step_v(&self.v, &z, dt, self.op, self.time)?;
        } else {
            self.v = self.op.heat_apply(dt, &self.v)?;
        }
        if self.cfg.noise_on {
            step_ou_with_increment(&mut self.ou, dt, dw)?;
        }
        self.time += dt;
        self.mesh_pos += 1;
        if self.mesh_pos == self.mesh.len() {
            self.mesh_pos = 0;
            self.steps_done += 1;
            if self.steps_done == 1 && self.mesh.len() > 1 {
                // ramp consumed; regular mesh from now on
                self.mesh = vec![self.cfg.dt];
            }
        }
        Ok(())
    }

    /// Advance one substep, drawing the increment from the stream.
    pub fn step(&mut self, stream: &mut RngStream) -> Result<RealField> {
        let dw = sample_wiener_increment(self.op.grid(), self.next_dt(), stream)?;
        self.step_with_increment(&dw)?;
        Ok(dw)
    }

    fn diagnostics_row(&self, zhist: &[ZNorms]) -> Result<DiagnosticsRow> {
        let p = self.cfg.p;
        let l3pm2 = self.v.lp_norm((3 * p - 2) as f64);
        let (k_t, k_tilde_t) = if zhist.is_empty() {
            (0.0, 0.0)
        } else {
            let d = diagnostic_constants(zhist, p, self.cfg.eps, self.cfg.q, K_TILDE_A, K_TILDE_B)?;
            (d.k_t, d.k_tilde_t)
        };
        Ok(DiagnosticsRow {
            time: self.time,
            l2: self.v.lp_norm(2.0),
            l4: self.v.lp_norm(4.0),
            l3pm2,
            coming_down: self.time.sqrt().min(1.0) * l3pm2,
            besov: besov_norm(&self.v, -self.cfg.eps, f64::INFINITY, f64::INFINITY),
            k_t,
            k_tilde_t,
        })
    }
}

/// Output of a full run.
#[derive(Debug)]
pub struct SimulationOutput {
    pub records: Vec<DiagnosticsRow>,
    pub z_norms: Vec<ZNorms>,
    pub final_v: RealField,
    pub final_u: RealField,
    /// Snapshots of `u` at the requested times (nearest grid time).
    pub snapshots: Vec<(f64, RealField)>,
}

/// Integrate from `v(0) = u0`, `conv(0) = 0` up to `cfg.t_final`, recording
/// diagnostics every `cfg.record_every` regular steps and snapshots of `u`
/// at the requested times.
pub fn simulate(
    op: &AndersonOperator,
    cfg: SolverConfig,
    u0: RealField,
    snapshot_times: &[f64],
    stream: &mut RngStream,
) -> Result<SimulationOutput> {
    let mut sim = Simulator::new(op, cfg, u0)?;
    let steps = (sim.cfg.t_final / sim.cfg.dt).round() as usize;
    let mut records = Vec::new();
    let mut zhist: Vec<ZNorms> = Vec::new();
    let mut snapshots = Vec::new();
    let mut next_snap = 0usize;
    let mut sorted_times: Vec<f64> = snapshot_times.to_vec();
    sorted_times.sort_by(f64::total_cmp);

    records.push(sim.diagnostics_row(&zhist)?);
    if next_snap < sorted_times.len() && sorted_times[next_snap] <= 0.0 {
        snapshots.push((sim.time(), sim.u()?));
        next_snap += 1;
    }
    for step_idx in 0..steps {
        // one regular step = the whole pending mesh (ramp on the first)
        let substeps = sim.mesh.len() - sim.mesh_pos;
        for _ in 0..substeps {
            sim.step(stream)?;
        }
        let record_now = (step_idx + 1) % sim.cfg.record_every == 0 || step_idx + 1 == steps;
        if record_now {
            let z = sim.current_z()?;
            let weight = sim.cfg.dt * sim.cfg.record_every as f64;
            zhist.push(z_norms(&z, sim.cfg.eps, weight));
            records.push(sim.diagnostics_row(&zhist)?);
        }
        while next_snap < sorted_times.len()
            && sorted_times[next_snap] <= sim.time() + 1e-12
        {
            snapshots.push((sim.time(), sim.u()?));
            next_snap += 1;
        }
    }
    let final_u = sim.u()?;
    Ok(SimulationOutput {
        records,
        z_norms: zhist,
        final_v: sim.v,
        final_u,
        snapshots,
    })
}

/// `Phi_n(v) = v - (v paraproduct-below X_{>n})`.
pub fn phi_map(v: &RealField, x_gt_n: &RealField) -> Result<RealField> {
    let low = paraproduct(v, x_gt_n, ParaMode::Lower)?;
    v.sub(&low)
}

/// A paracontrolled pair `(v, w)` with `w = Phi_n(v)` up to `residual`.
#[derive(Debug, Clone)]
pub struct ParacontrolledPair {
    pub v: RealField,
    pub w: RealField,
    pub n: usize,
    pub residual: f64,
}

/// `Gamma_n`: invert `Phi_n` by fixed-point iteration
/// `v <- w + (v paraproduct-below X_{>n})` starting from `v = w`.
pub fn gamma_map(
    w: &RealField,
    x_gt_n: &RealField,
    n: usize,
    tol: f64,
    max_iter: usize,
) -> Result<ParacontrolledPair> {
    let mut v = w.clone();
    let mut residual = f64::INFINITY;
    for it in 0..max_iter {
        let next = w.add(&paraproduct(&v, x_gt_n, ParaMode::Lower)?)?;
        residual = phi_map(&next, x_gt_n)?.sub(w)?.l2_norm();
        v = next;
        if residual < tol {
            return Ok(ParacontrolledPair {
                v,
                w: w.clone(),
                n,
                residual,
            });
        }
        let _ = it;
    }
    Err(Error::NonConvergence {
        iterations: max_iter,
        residual,
        hint: "paracontrolled inversion stalled; raise the truncation n".into(),
    })
}

/// Tested-equation budget of Eq. (3.5) at one time slice.
#[derive(Debug, Clone, Copy, serde::Serialize)]
pub struct RemainderBudget {
    /// `|w|_{L^{3p}}^{3p}` (coercive).
    pub w_l3p: f64,
    /// `(3p-3) | |grad w|^2 w^{3p-4} |_{L^1}` (coercive).
    pub gradient_term: f64,
    pub q1_pairing: f64,
    pub q2_pairing: f64,
    pub q3_pairing: f64,
    /// `< xi paraproduct-leq w, w^{3p-3} >`.
    pub xi_pairing: f64,
    /// Whether the coercive terms dominate `|<Q1, w^{3p-3}>|`.
    pub coercive_dominates: bool,
}

/// Compute the Prop 3.8 budget: good terms and the `Q_i` pairings, with
/// `Q1 = -v^3 < X + (v < X)^3 + 3 (v < X) w^2 + 3 (v < X)^2 w`,
/// `Q2 = v^2 z1 + v z2 + z3`, `Q3 = -(Q2) < X`, `X = X_{>n}`.
pub fn remainder_equation_diagnostics(
    pair: &ParacontrolledPair,
    op: &AndersonOperator,
    x_gt_n: &RealField,
    z: &EnhancedNoise,
    p: u32,
) -> Result<RemainderBudget> {
    if p % 2 != 0 || p < 2 {
        return Err(Error::Argument("budget needs even p >= 2".into()));
    }
    let grid = op.grid();
    let v = &pair.v;
    let w = &pair.w;
    let pf = p as i32;
    let w_test = w.map(|x| x.powi(3 * pf - 3));
    let w_l3p = w.lp_norm(3.0 * p as f64).powi(3 * pf);
    let grad2 = gradient_sq(w);
    let w_pow = w.map(|x| x.powi(3 * pf - 4));
    let gradient_term =
        (3.0 * p as f64 - 3.0) * grad2.zip_with(&w_pow, |g, wp| g * wp)?.lp_norm(1.0);

    let v_cube = v.map(|x| x * x * x);
    let v_para = paraproduct(v, x_gt_n, ParaMode::Lower)?;
    let mut q1 = paraproduct(&v_cube, x_gt_n, ParaMode::Lower)?.scale(-1.0);
    for i in 0..grid.sites() {
        let a = v_para.values()[i];
        let wv = w.values()[i];
        q1.values_mut()[i] += a * a * a + 3.0 * a * wv * wv + 3.0 * a * a * wv;
    }
    let mut q2 = RealField::zeros(grid);
    for i in 0..grid.sites() {
        let vv = v.values()[i];
        q2.values_mut()[i] =
            vv * vv * z.z1.values()[i] + vv * z.z2.values()[i] + z.z3.values()[i];
    }
    let q3 = paraproduct(&q2, x_gt_n, ParaMode::Lower)?.scale(-1.0);
    let xi_leq_w = paraproduct(op.potential(), w, ParaMode::Leq)?;

    let q1_pairing = q1.inner(&w_test);
    let budget = RemainderBudget {
        w_l3p,
        gradient_term,
        q1_pairing,
        q2_pairing: q2.inner(&w_test),
        q3_pairing: q3.inner(&w_test),
        xi_pairing: xi_leq_w.inner(&w_test),
        coercive_dominates: w_l3p + gradient_term >= q1_pairing.abs(),
    };
    Ok(budget)
}

/// Shift the enhanced data by the heat-propagated initial condition
/// `X = e^{-tH} u0`: the triple of `conv + X`, used for the zero-initial
/// ansatz `u = X + Pi_N conv + v~`.
pub fn shifted_data(z: &EnhancedNoise, u0: &RealField, op: &AndersonOperator) -> Result<EnhancedNoise> {
    let x = op.heat_apply(z.time, u0)?;
    let grid = x.grid();
    let mut z1 = z.z1.clone();
    let mut z2 = z.z2.clone();
    let mut z3 = z.z3.clone();
    for i in 0..grid.sites() {
        let xv = x.values()[i];
        let a1 = z.z1.values()[i];
        let a2 = z.z2.values()[i];
        z1.values_mut()[i] += 3.0 * xv;
        z2.values_mut()[i] += 2.0 * xv * a1 + 3.0 * xv * xv;
        z3.values_mut()[i] += xv * a2 + xv * xv * a1 + xv * xv * xv;
    }
    Ok(EnhancedNoise {
        z1,
        z2,
        z3,
        time: z.time,
        n: z.n,
        sigma: z.sigma.clone(),
    })
}

/// Convenience: the full-solution Wick variance at a simulator time, for the
/// linearized flow's potential.
pub fn solution_sigma(sim: &Simulator<'_>) -> Result<RealField> {
    if sim.cfg().noise_on {
        sigma_profile(
            sim.ou().op(),
            sim.cfg().n_trunc,
            sim.time(),
            OUInit::Zero,
        )
    } else {
        Ok(RealField::zeros(sim.ou().op().grid()))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::TorusGrid;
    use crate::noise::{high_block_part, sample_space_white_noise};
    use crate::rng::{Purpose, RngStream};
    use crate::stats::linear_fit;
    use crate::wick::assemble_field;
    use approx::assert_relative_eq;

    fn test_operator(m: usize, seed: u64) -> AndersonOperator {
        let grid = TorusGrid::standard(m).unwrap();
        let mut stream = RngStream::new(seed, Purpose::Potential, 0);
        let xi = sample_space_white_noise(grid, &mut stream);
        let c = crate::hamiltonian::renorm_constant(grid);
        AndersonOperator::assemble(grid, &xi, c, 0.0)
            .unwrap()
            .ensure_positive(1.0)
    }

    fn zero_noise(grid: TorusGrid, time: f64, n: usize) -> EnhancedNoise {
        EnhancedNoise {
            z1: RealField::zeros(grid),
            z2: RealField::zeros(grid),
            z3: RealField::zeros(grid),
            time,
            n,
            sigma: RealField::zeros(grid),
        }
    }

    #[test]
    fn config_validation() {
        assert!(SolverConfig::default().validate().is_ok());
        let mut c = SolverConfig::default();
        c.dt = 0.0;
        assert!(c.validate().is_err());
        let mut c = SolverConfig::default();
        c.eps = 0.3;
        c.sigma_reg = 0.25;
        assert!(c.validate().is_err());
        let mut c = SolverConfig::default();
        c.sigma_reg = 0.4; // (0.1 + 0.4)/2 * 2 = 0.5 >= 1/3
        assert!(c.validate().is_err());
        let mut c = SolverConfig::default();
        c.p = 3;
        assert!(c.validate().is_err());
    }

    #[test]
    fn ramp_mesh_sums_exactly() {
        let mut c = SolverConfig::default();
        for k in [0u32, 1, 5, 20] {
            c.ramp_steps = k;
            let mesh = c.ramp_mesh();
            let total: f64 = mesh.iter().sum();
            assert_eq!(total, c.dt, "ramp mesh sum for K = {k}");
            assert!(mesh.windows(2).all(|w| w[0] <= w[1]));
        }
    }

    #[test]
    fn step_v_linear_decay_on_eigenmode() {
        let op = test_operator(8, 80);
        let z = zero_noise(op.grid(), 0.0, 0);
        // tiny amplitude: cubic correction is O(c^3), relatively 1e-16
        let c = 1e-8;
        let dt = 0.05;
        let mut v = op.eigenfunction(0).scale(c);
        for _ in 0..20 {
            v = step_v(&v, &z, dt, &op, 0.0).unwrap();
        }
        let expected = op.eigenfunction(0).scale(c * (-op.lambda0() * 20.0 * dt).exp());
        for (a, b) in v.values().iter().zip(expected.values()) {
            assert!((a - b).abs() < 1e-10 * c);
        }
        assert!(step_v(&v, &z, 0.0, &op, 0.0).is_err());
    }

    #[test]
    fn step_v_matches_scalar_ode_oracle() {
        // constant-in-space data on the pure-Laplacian operator reduces to
        // the scalar ODE dv = -(m v + v^3); compare against fine RK4
        let grid = TorusGrid::standard(4).unwrap();
        let m = 1.0;
        let op = AndersonOperator::laplacian_control(grid, m).unwrap();
        let z = zero_noise(grid, 0.0, 0);
        let v0 = 0.15;
        let dt = 1e-3;
        let steps = 1000;
        let mut v = RealField::constant(grid, v0);
        for _ in 0..steps {
            v = step_v(&v, &z, dt, &op, 0.0).unwrap();
        }
        // RK4 oracle at dt = 1e-5
        let f = |x: f64| -(m * x + x * x * x);
        let mut y = v0;
        let h = 1e-5;
        for _ in 0..100_000 {
            let k1 = f(y);
            let k2 = f(y + 0.5 * h * k1);
            let k3 = f(y + 0.5 * h * k2);
            let k4 = f(y + h * k3);
            y += h / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
        }
        for &val in v.values() {
            assert!(
                (val - y).abs() < 1e-6,
                "exponential Euler {val} vs RK4 oracle {y}"
            );
        }
    }

    #[test]
    fn simulate_deterministic() {
        let op = test_operator(8, 81);
        let cfg = SolverConfig {
            dt: 0.01,
            t_final: 0.2,
            n_trunc: 40,
            record_every: 5,
            ..SolverConfig::default()
        };
        let u0 = RealField::zeros(op.grid());
        let mut s1 = RngStream::new(82, Purpose::Driving, 0);
        let mut s2 = RngStream::new(82, Purpose::Driving, 0);
        let out1 = simulate(&op, cfg.clone(), u0.clone(), &[0.1], &mut s1).unwrap();
        let out2 = simulate(&op, cfg, u0, &[0.1], &mut s2).unwrap();
        assert_eq!(out1.final_v.values(), out2.final_v.values());
        assert_eq!(out1.snapshots.len(), 1);
        assert_eq!(out1.snapshots[0].1.values(), out2.snapshots[0].1.values());
    }

    #[test]
    fn noise_off_energy_dissipation() {
        let op = test_operator(8, 83);
        let cfg = SolverConfig {
            dt: 0.005,
            t_final: 0.5,
            noise_on: false,
            record_every: 10,
            ..SolverConfig::default()
        };
        let u0 = RealField::from_fn(op.grid(), |x1, x2| x1.sin() + 0.5 * x2.cos());
        let norm0 = u0.l2_norm();
        let mut stream = RngStream::new(84, Purpose::Driving, 0);
        let out = simulate(&op, cfg, u0, &[], &mut stream).unwrap();
        for row in &out.records {
            assert!(
                row.l2 <= (-op.lambda0() * row.time).exp() * norm0 * (1.0 + 1e-9),
                "dissipation violated at t = {}: {} vs {}",
                row.time,
                row.l2,
                (-op.lambda0() * row.time).exp() * norm0
            );
        }
    }

    #[test]
    fn self_convergence_order() {
        let op = test_operator(8, 85);
        let u0 = RealField::from_fn(op.grid(), |x1, x2| 0.5 * (x1 + x2).cos());
        let mut endpoints = Vec::new();
        for &dt in &[0.02, 0.01, 0.005] {
            let cfg = SolverConfig {
                dt,
                t_final: 1.0,
                n_trunc: 40,
                record_every: 1_000_000,
                ..SolverConfig::default()
            };
            // identical noise across dt: drive with a shared Brownian path
            // by summing fine increments; here use noise off plus nonzero z
            // is unavailable, so instead compare deterministic flows
            let mut cfg = cfg;
            cfg.noise_on = false;
            let mut stream = RngStream::new(86, Purpose::Driving, 0);
            let out = simulate(&op, cfg, u0.clone(), &[], &mut stream).unwrap();
            endpoints.push(out.final_v);
        }
        let e1 = endpoints[0].sub(&endpoints[2]).unwrap().l2_norm();
        let e2 = endpoints[1].sub(&endpoints[2]).unwrap().l2_norm();
        let order = (e1 / e2).log2() - 0.0; // Richardson: e(2dt)/e(dt) ~ 2^order
        assert!(
            order > 0.9,
            "observed self-convergence order {order} (errors {e1}, {e2})"
        );
    }

    #[test]
    fn ramp_stabilizes_large_data() {
        let op = test_operator(8, 87);
        let cfg = SolverConfig {
            dt: 1e-3,
            t_final: 0.05,
            n_trunc: 40,
            ramp_steps: 25,
            record_every: 10,
            ..SolverConfig::default()
        };
        let u0 = RealField::constant(op.grid(), 1000.0);
        let mut stream = RngStream::new(88, Purpose::Driving, 0);
        let out = simulate(&op, cfg, u0, &[], &mut stream).unwrap();
        assert!(out.final_v.is_finite());
        // coming down: by t = 0.05 the field is O(1/sqrt(t)) ~ O(10), far
        // below the initial 1000
        assert!(out.final_v.lp_norm(f64::INFINITY) < 50.0);
    }

    #[test]
    fn phi_gamma_trivial_and_roundtrip() {
        let op = test_operator(16, 89);
        let grid = op.grid();
        let zero = RealField::zeros(grid);
        let mut stream = RngStream::new(90, Purpose::Driving, 0);
        let ou = OUState::sample_stationary(&op, &mut stream);
        let x = assemble_field(&ou, 100).unwrap();

        let v = RealField::from_fn(grid, |x1, x2| (x1 - x2).sin());
        // X = 0: identity both ways
        let w = phi_map(&v, &zero).unwrap();
        assert_eq!(w.values(), v.values());
        let pair = gamma_map(&v, &zero, 0, 1e-12, 5).unwrap();
        assert_eq!(pair.v.values(), v.values());
        // v = 0 maps to 0
        assert!(phi_map(&zero, &x).unwrap().lp_norm(f64::INFINITY) == 0.0);

        // round trip on 50 random fields
        for i in 0..50u64 {
            let mut s = RngStream::new(91, Purpose::Driving, i);
            let sample = OUState::sample_stationary(&op, &mut s);
            let v = assemble_field(&sample, 60).unwrap();
            let n = 3usize;
            let x_hi = high_block_part(&x, n).unwrap();
            let w = phi_map(&v, &x_hi).unwrap();
            let pair = gamma_map(&w, &x_hi, n, 1e-12, 200).unwrap();
            let err = pair.v.sub(&v).unwrap().l2_norm();
            assert!(
                err < 1e-10 * v.l2_norm().max(1.0),
                "round-trip error {err} at sample {i}"
            );
        }
    }

    #[test]
    fn phi_map_contraction_in_n() {
        let op = test_operator(16, 92);
        let mut stream = RngStream::new(93, Purpose::Driving, 0);
        let ou = OUState::sample_stationary(&op, &mut stream);
        let x = assemble_field(&ou, 100).unwrap();
        let v = assemble_field(&ou, 30).unwrap();
        let mut deltas = Vec::new();
        for n in [0usize, 2, 4] {
            let x_hi = high_block_part(&x, n).unwrap();
            let w = phi_map(&v, &x_hi).unwrap();
            deltas.push(w.sub(&v).unwrap().l2_norm());
        }
        assert!(
            deltas[2] < deltas[0],
            "perturbation did not shrink with n: {deltas:?}"
        );
    }

    #[test]
    fn gamma_map_norm_equivalence() {
        let op = test_operator(16, 94);
        let mut stream = RngStream::new(95, Purpose::Driving, 0);
        let ou = OUState::sample_stationary(&op, &mut stream);
        let x = assemble_field(&ou, 100).unwrap();
        for n in [3usize, 4, 5] {
            let x_hi = high_block_part(&x, n).unwrap();
            for p in [2.0f64, 4.0, 6.0] {
                for i in 0..10u64 {
                    let mut s = RngStream::new(96 + n as u64, Purpose::Driving, i);
                    let sample = OUState::sample_stationary(&op, &mut s);
                    let v = assemble_field(&sample, 50).unwrap();
                    let w = phi_map(&v, &x_hi).unwrap();
                    let ratio = w.lp_norm(p) / v.lp_norm(p);
                    assert!(
                        ratio > 0.5 && ratio < 2.0,
                        "norm-equivalence ratio {ratio} at n={n}, p={p}"
                    );
                }
            }
        }
    }

    #[test]
    fn remainder_budget_trivial_cases() {
        let op = test_operator(8, 97);
        let grid = op.grid();
        let z = zero_noise(grid, 0.0, 0);
        let x = RealField::zeros(grid);
        let zero_pair = ParacontrolledPair {
            v: RealField::zeros(grid),
            w: RealField::zeros(grid),
            n: 0,
            residual: 0.0,
        };
        let b = remainder_equation_diagnostics(&zero_pair, &op, &x, &z, 2).unwrap();
        assert_eq!(b.w_l3p, 0.0);
        assert_eq!(b.gradient_term, 0.0);
        assert_eq!(b.q1_pairing, 0.0);
        assert_eq!(b.xi_pairing, 0.0);

        let c = 1.5f64;
        let const_pair = ParacontrolledPair {
            v: RealField::constant(grid, c),
            w: RealField::constant(grid, c),
            n: 0,
            residual: 0.0,
        };
        let b = remainder_equation_diagnostics(&const_pair, &op, &x, &z, 2).unwrap();
        assert_eq!(b.gradient_term, 0.0);
        let l2 = grid.side_length() * grid.side_length();
        assert_relative_eq!(b.w_l3p, c.powi(6) * l2, max_relative = 1e-10);
        assert!(remainder_equation_diagnostics(&const_pair, &op, &x, &z, 3).is_err());
    }

    #[test]
    fn coercive_terms_dominate_along_trajectory() {
        let op = test_operator(16, 98);
        let cfg = SolverConfig {
            dt: 0.005,
            t_final: 0.4,
            n_trunc: 80,
            record_every: 8,
            ..SolverConfig::default()
        };
        let u0 = RealField::from_fn(op.grid(), |x1, _| x1.sin());
        let mut stream = RngStream::new(99, Purpose::Driving, 0);
        let mut sim = Simulator::new(&op, cfg, u0).unwrap();
        let mut lift = OUState::sample_stationary(&op, &mut stream);
        // a fixed rough reference X for the paracontrolled split
        crate::wick::step_ou(&mut lift, 0.1, &mut stream).unwrap();
        let x_full = assemble_field(&lift, op.eigenvalues().len() - 1).unwrap();
        let n = 4usize;
        let x_hi = high_block_part(&x_full, n).unwrap();
        let mut dominated = 0usize;
        let mut slices = 0usize;
        for _ in 0..80 {
            sim.step(&mut stream).unwrap();
            if (sim.time() / 0.025).fract() < 0.2 {
                let z = sim.current_z().unwrap();
                let w = phi_map(sim.v(), &x_hi).unwrap();
                let pair = ParacontrolledPair {
                    v: sim.v().clone(),
                    w,
                    n,
                    residual: 0.0,
                };
                let b = remainder_equation_diagnostics(&pair, &op, &x_hi, &z, 2).unwrap();
                slices += 1;
                if b.coercive_dominates {
                    dominated += 1;
                }
            }
        }
        assert!(slices > 5);
        assert!(
            dominated as f64 >= 0.9 * slices as f64,
            "coercive domination {dominated}/{slices}"
        );
    }

    #[test]
    fn step_eta_heat_flow_and_linearity() {
        let op = test_operator(8, 100);
        let grid = op.grid();
        let zero = RealField::zeros(grid);
        let h = RealField::from_fn(grid, |x1, x2| x1.cos() + x2.sin());
        // u = 0, sigma = 0: eta follows the heat flow of the integrator
        let dt = 0.02;
        let stepped = step_eta(&h, &zero, &zero, dt, &op, 0.0).unwrap();
        let heat = op.heat_apply(dt, &h).unwrap();
        for (a, b) in stepped.values().iter().zip(heat.values()) {
            assert!((a - b).abs() < 1e-12);
        }
        // linearity
        let mut stream = RngStream::new(101, Purpose::Driving, 0);
        let ou = OUState::sample_stationary(&op, &mut stream);
        let u = assemble_field(&ou, 40).unwrap();
        let sigma = sigma_profile(&op, 40, 0.0, OUInit::Stationary).unwrap();
        let h2 = RealField::from_fn(grid, |x1, x2| (2.0 * x1 - x2).sin());
        let (a, b) = (1.7, -0.6);
        let combo = h.scale(a).add(&h2.scale(b)).unwrap();
        let lhs = step_eta(&combo, &u, &sigma, dt, &op, 0.0).unwrap();
        let r1 = step_eta(&h, &u, &sigma, dt, &op, 0.0).unwrap();
        let r2 = step_eta(&h2, &u, &sigma, dt, &op, 0.0).unwrap();
        let rhs = r1.scale(a).add(&r2.scale(b)).unwrap();
        let scale = lhs.lp_norm(f64::INFINITY).max(1.0);
        for (x, y) in lhs.values().iter().zip(rhs.values()) {
            assert!((x - y).abs() < 1e-10 * scale);
        }
    }

    #[test]
    fn eta_matches_finite_difference() {
        let op = test_operator(8, 102);
        let cfg = SolverConfig {
            dt: 0.005,
            t_final: 0.25,
            n_trunc: 40,
            record_every: 100,
            ..SolverConfig::default()
        };
        let u0 = RealField::from_fn(op.grid(), |x1, _| 0.3 * x1.sin());
        let h = RealField::from_fn(op.grid(), |_, x2| x2.cos());
        let delta = 1e-4;
        let u0p = u0.add(&h.scale(delta)).unwrap();

        // common random numbers: pre-draw the increment path
        let steps = 50usize;
        let mut stream = RngStream::new(103, Purpose::Driving, 0);
        let incs: Vec<RealField> = (0..steps)
            .map(|_| sample_wiener_increment(op.grid(), cfg.dt, &mut stream).unwrap())
            .collect();

        let mut sim_a = Simulator::new(&op, cfg.clone(), u0).unwrap();
        let mut sim_b = Simulator::new(&op, cfg.clone(), u0p).unwrap();
        let mut eta = h.clone();
        for dw in &incs {
            let u = sim_a.u().unwrap();
            let sigma = solution_sigma(&sim_a).unwrap();
            eta = step_eta(&eta, &u, &sigma, cfg.dt, &op, sim_a.time()).unwrap();
            sim_a.step_with_increment(dw).unwrap();
            sim_b.step_with_increment(dw).unwrap();
        }
        let fd = sim_b
            .v()
            .sub(sim_a.v())
            .unwrap()
            .scale(1.0 / delta);
        let err = fd.sub(&eta).unwrap().l2_norm() / eta.l2_norm();
        assert!(err < 0.05, "linearized flow vs CRN finite difference: {err}");
    }

    #[test]
    fn shifted_data_trivial_cases() {
        let op = test_operator(8, 104);
        let grid = op.grid();
        let mut stream = RngStream::new(105, Purpose::Driving, 0);
        let ou = OUState::sample_stationary(&op, &mut stream);
        let z = enhanced_data(&ou, 40).unwrap();
        // u0 = 0: unchanged
        let same = shifted_data(&z, &RealField::zeros(grid), &op).unwrap();
        assert_eq!(same.z1.values(), z.z1.values());
        assert_eq!(same.z2.values(), z.z2.values());
        assert_eq!(same.z3.values(), z.z3.values());
        // z = 0: pure drift powers
        let u0 = RealField::from_fn(grid, |x1, x2| x1.cos() * x2.cos());
        let z0 = zero_noise(grid, 0.3, 40);
        let shifted = shifted_data(&z0, &u0, &op).unwrap();
        let x = op.heat_apply(0.3, &u0).unwrap();
        for i in 0..grid.sites() {
            let xv = x.values()[i];
            assert!((shifted.z1.values()[i] - 3.0 * xv).abs() < 1e-12);
            assert!((shifted.z2.values()[i] - 3.0 * xv * xv).abs() < 1e-12);
            assert!((shifted.z3.values()[i] - xv * xv * xv).abs() < 1e-12);
        }
    }

    #[test]
    fn dual_ansatz_equivalence() {
        // solving (3.2) from (u0, z) or from (0, z~) yields the same u
        let op = test_operator(8, 106);
        let n = 40usize;
        let dt = 0.01;
        let steps = 30usize;
        let u0 = RealField::from_fn(op.grid(), |x1, x2| 0.8 * (x1 + 0.5 * x2).sin());
        let mut stream = RngStream::new(107, Purpose::Driving, 0);
        let mut ou = OUState::zero(&op);
        let mut v_direct = u0.clone();
        let mut v_shift = RealField::zeros(op.grid());
        for _ in 0..steps {
            let z = enhanced_data(&ou, n).unwrap();
            let zt = shifted_data(&z, &u0, &op).unwrap();
            v_direct = step_v(&v_direct, &z, dt, &op, 0.0).unwrap();
            v_shift = step_v(&v_shift, &zt, dt, &op, 0.0).unwrap();
            crate::wick::step_ou(&mut ou, dt, &mut stream).unwrap();
        }
        let t = steps as f64 * dt;
        let x = op.heat_apply(t, &u0).unwrap();
        let recon = v_shift.add(&x).unwrap();
        let err = recon.sub(&v_direct).unwrap().l2_norm()
            / v_direct.l2_norm().max(1e-12);
        assert!(err < 1e-8, "dual-ansatz mismatch {err}");
    }

    #[test]
    fn diagnostic_constants_properties() {
        assert!(diagnostic_constants(&[], 2, 0.25, 2.0, 0.5, 3.0).is_err());
        // z = 0 trajectory
        let zeros: Vec<ZNorms> = (0..10)
            .map(|i| ZNorms {
                time: i as f64 * 0.1,
                weight: 0.1,
                n1: 0.0,
                n2: 0.0,
                n3: 0.0,
            })
            .collect();
        let d = diagnostic_constants(&zeros, 2, 0.25, 2.0, 0.5, 3.0).unwrap();
        assert_eq!(d.k_t, 0.0);
        assert_eq!(d.k_tilde_t, 0.0);
        // monotone in t on a real trajectory
        let op = test_operator(8, 108);
        let cfg = SolverConfig {
            dt: 0.01,
            t_final: 1.0,
            n_trunc: 40,
            record_every: 5,
            ..SolverConfig::default()
        };
        let mut stream = RngStream::new(109, Purpose::Driving, 0);
        let out = simulate(&op, cfg, RealField::zeros(op.grid()), &[], &mut stream).unwrap();
        let ks: Vec<f64> = out.records.iter().map(|r| r.k_t).collect();
        assert!(ks.windows(2).all(|w| w[1] >= w[0] - 1e-12), "K_t not monotone");
        assert!(out.records.last().unwrap().k_t > 0.0);
        assert!(out.records.last().unwrap().k_tilde_t.is_finite());
    }

    #[test]
    fn k_tilde_moments_finite() {
        let op = test_operator(8, 110);
        let cfg = SolverConfig {
            dt: 0.02,
            t_final: 1.0,
            n_trunc: 40,
            record_every: 5,
            ..SolverConfig::default()
        };
        let mut values = Vec::new();
        for seed in 0..40u64 {
            let mut stream = RngStream::new(111, Purpose::Driving, seed);
            let out = simulate(&op, cfg.clone(), RealField::zeros(op.grid()), &[], &mut stream)
                .unwrap();
            values.push(out.records.last().unwrap().k_tilde_t);
        }
        let (mean, se) = crate::stats::mean_stderr(&values);
        assert!(mean.is_finite() && se.is_finite() && mean > 0.0);
    }

    #[test]
    fn coming_down_matched_noise_small() {
        // reduced version of the acceptance sweep: ratio of the [0.5, 1]
        // coming-down statistic across widely separated initial scales
        // strongly dissipative regime: the transient memory of the initial
        // scale must clear within [0.5, 1] for the statistic to be
        // data-independent there
        let op = test_operator(8, 112).ensure_positive(12.0);
        let profile = RealField::from_fn(op.grid(), |x1, x2| (x1.sin() + x2.cos()) / 1.6);
        let mut stats = Vec::new();
        for &scale in &[1.0f64, 100.0] {
            let cfg = SolverConfig {
                dt: 1e-3,
                t_final: 1.0,
                n_trunc: 40,
                ramp_steps: 22,
                record_every: 50,
                ..SolverConfig::default()
            };
            let mut stream = RngStream::new(113, Purpose::Driving, 0);
            let out = simulate(&op, cfg, profile.scale(scale), &[], &mut stream).unwrap();
            let m = out
                .records
                .iter()
                .filter(|r| r.time >= 0.5)
                .map(|r| r.coming_down)
                .fold(0.0f64, f64::max);
            stats.push(m);
        }
        let ratio = stats[1].max(stats[0]) / stats[1].min(stats[0]);
        assert!(ratio < 1.2, "coming-down ratio {ratio} from stats {stats:?}");
    }

    #[test]
    fn uniform_in_time_moment_stabilizes() {
        // running max of (1 and t^{(3p-2)/2}) E-proxy |u|^{3p-2} over [0, 10]
        let op = test_operator(8, 114);
        let cfg = SolverConfig {
            dt: 0.01,
            t_final: 10.0,
            n_trunc: 40,
            record_every: 20,
            ..SolverConfig::default()
        };
        let mut stream = RngStream::new(115, Purpose::Driving, 0);
        let out = simulate(&op, cfg, RealField::zeros(op.grid()), &[], &mut stream).unwrap();
        let p = 2u32;
        let pow = (3 * p - 2) as f64;
        let vals: Vec<(f64, f64)> = out
            .records
            .iter()
            .map(|r| (r.time, r.time.powf(pow / 2.0).min(1.0) * r.l3pm2.powf(pow)))
            .collect();
        let mut running = 0.0f64;
        let mut max_at_9 = 0.0;
        for &(t, v) in &vals {
            running = running.max(v);
            if t <= 9.0 {
                max_at_9 = running;
            }
        }
        assert!(
            running <= 1.1 * max_at_9,
            "last-decade increase too large: {running} vs {max_at_9}"
        );
    }
}
