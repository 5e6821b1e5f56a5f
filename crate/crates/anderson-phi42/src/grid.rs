//! Periodic lattice geometry, discrete Fourier analysis, Littlewood-Paley
//! blocks, Besov norms and Bony paraproducts on the 2-torus.
//!
//! All fields live on an `M x M` lattice with spacing `h = L / M` and are
//! stored row-major with the second coordinate fastest. Fourier coefficients
//! are indexed by integer frequencies `k in {-M/2, ..., M/2 - 1}^2`.

use std::cell::RefCell;
use std::collections::HashMap;
use std::sync::Arc;

use num_complex::Complex64;
use rustfft::{Fft, FftPlanner};

use crate::error::{Error, Result};

/// Square periodic lattice on the torus of side `L`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TorusGrid {
    points_per_side: usize,
    side_length: f64,
}

impl TorusGrid {
    /// Default side length `2 pi`.
    pub const DEFAULT_SIDE: f64 = std::f64::consts::TAU;

    pub fn new(points_per_side: usize, side_length: f64) -> Result<Self> {
        if points_per_side < 2 || !points_per_side.is_power_of_two() {
            return Err(Error::Config(format!(
                "grid size M = {points_per_side} must be a power of two >= 2"
            )));
        }
        if !(side_length > 0.0) {
            return Err(Error::Config(format!(
                "side length L = {side_length} must be positive"
            )));
        }
        Ok(Self {
            points_per_side,
            side_length,
        })
    }

    /// Grid with `M` points per side on the standard torus `[0, 2 pi)^2`.
    pub fn standard(points_per_side: usize) -> Result<Self> {
        Self::new(points_per_side, Self::DEFAULT_SIDE)
    }

    #[inline]
    pub fn m(&self) -> usize {
        self.points_per_side
    }

    #[inline]
    pub fn side_length(&self) -> f64 {
        self.side_length
    }

    #[inline]
    pub fn spacing(&self) -> f64 {
        self.side_length / self.points_per_side as f64
    }

    /// Number of lattice sites `M^2`.
    #[inline]
    pub fn sites(&self) -> usize {
        self.points_per_side * self.points_per_side
    }

    /// Site index for coordinates `(i1, i2)`, second coordinate fastest.
    #[inline]
    pub fn site(&self, i1: usize, i2: usize) -> usize {
        i1 * self.points_per_side + i2
    }

    /// Physical coordinates of a site.
    #[inline]
    pub fn coords(&self, idx: usize) -> (f64, f64) {
        let m = self.points_per_side;
        let h = self.spacing();
        ((idx / m) as f64 * h, (idx % m) as f64 * h)
    }

    /// Signed integer frequency for FFT bin `i in 0..M`.
    #[inline]
    pub fn signed_freq(&self, i: usize) -> i64 {
        let m = self.points_per_side as i64;
        let i = i as i64;
        if i < m / 2 {
            i
        } else {
            i - m
        }
    }

    /// Symbol of the negative discrete 5-point Laplacian at integer frequency
    /// `k`: `(2 / h^2) (2 - cos(k1 h') - cos(k2 h'))` with `h' = 2 pi / M`.
    pub fn laplacian_symbol(&self, k1: i64, k2: i64) -> f64 {
        let h = self.spacing();
        let w = std::f64::consts::TAU / self.points_per_side as f64;
        (2.0 / (h * h)) * (2.0 - (k1 as f64 * w).cos() - (k2 as f64 * w).cos())
    }

    /// Periodic Euclidean distance between two sites.
    pub fn distance(&self, a: usize, b: usize) -> f64 {
        let (x1, y1) = self.coords(a);
        let (x2, y2) = self.coords(b);
        let l = self.side_length;
        let wrap = |d: f64| {
            let d = d.abs() % l;
            d.min(l - d)
        };
        let dx = wrap(x1 - x2);
        let dy = wrap(y1 - y2);
        (dx * dx + dy * dy).sqrt()
    }
}

/// Real scalar field sampled at the lattice nodes.
#[derive(Debug, Clone, PartialEq)]
pub struct RealField {
    grid: TorusGrid,
    values: Vec<f64>,
}

impl RealField {
    pub fn new(grid: TorusGrid, values: Vec<f64>) -> Result<Self> {
        if values.len() != grid.sites() {
            return Err(Error::Argument(format!(
                "field has {} values, grid has {} sites",
                values.len(),
                grid.sites()
            )));
        }
        Ok(Self { grid, values })
    }

    pub fn zeros(grid: TorusGrid) -> Self {
        Self {
            grid,
            values: vec![0.0; grid.sites()],
        }
    }

    pub fn constant(grid: TorusGrid, c: f64) -> Self {
        Self {
            grid,
            values: vec![c; grid.sites()],
        }
    }

    /// Build from a function of the physical coordinates.
    pub fn from_fn(grid: TorusGrid, f: impl Fn(f64, f64) -> f64) -> Self {
        let values = (0..grid.sites())
            .map(|i| {
                let (x1, x2) = grid.coords(i);
                f(x1, x2)
            })
            .collect();
        Self { grid, values }
    }

    #[inline]
    pub fn grid(&self) -> TorusGrid {
        self.grid
    }

    #[inline]
    pub fn values(&self) -> &[f64] {
        &self.values
    }

    #[inline]
    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    pub fn is_finite(&self) -> bool {
        self.values.iter().all(|v| v.is_finite())
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Self {
        Self {
            grid: self.grid,
            values: self.values.iter().map(|&v| f(v)).collect(),
        }
    }

    pub fn zip_with(&self, other: &Self, f: impl Fn(f64, f64) -> f64) -> Result<Self> {
        check_same_grid(self, other)?;
        Ok(Self {
            grid: self.grid,
            values: self
                .values
                .iter()
                .zip(&other.values)
                .map(|(&a, &b)| f(a, b))
                .collect(),
        })
    }

    pub fn scale(&self, s: f64) -> Self {
        self.map(|v| s * v)
    }

    pub fn add(&self, other: &Self) -> Result<Self> {
        self.zip_with(other, |a, b| a + b)
    }

    pub fn sub(&self, other: &Self) -> Result<Self> {
        self.zip_with(other, |a, b| a - b)
    }

    pub fn mul(&self, other: &Self) -> Result<Self> {
        self.zip_with(other, |a, b| a * b)
    }

    pub fn axpy(&mut self, a: f64, x: &Self) {
        for (v, &xv) in self.values.iter_mut().zip(&x.values) {
            *v += a * xv;
        }
    }

    pub fn mean(&self) -> f64 {
        self.values.iter().sum::<f64>() / self.values.len() as f64
    }

    /// `h^2`-weighted inner product, the lattice `L^2` pairing.
    pub fn inner(&self, other: &Self) -> f64 {
        let h2 = self.grid.spacing() * self.grid.spacing();
        h2 * self
            .values
            .iter()
            .zip(&other.values)
            .map(|(&a, &b)| a * b)
            .sum::<f64>()
    }

    /// Lattice `L^p` norm `(h^2 sum |f|^p)^{1/p}`; `p = inf` is the sup norm.
    pub fn lp_norm(&self, p: f64) -> f64 {
        assert!(p >= 1.0, "L^p norm needs p >= 1");
        if p.is_infinite() {
            return self.values.iter().fold(0.0f64, |m, &v| m.max(v.abs()));
        }
        let h2 = self.grid.spacing() * self.grid.spacing();
        (h2 * self
            .values
            .iter()
            .map(|&v| v.abs().powf(p))
            .sum::<f64>())
        .powf(1.0 / p)
    }

    pub fn l2_norm(&self) -> f64 {
        self.inner(self).sqrt()
    }

    /// Dirichlet energy `h^2 sum |grad f|^2` with forward differences.
    pub fn dirichlet_energy(&self) -> f64 {
        let h2 = self.grid.spacing() * self.grid.spacing();
        h2 * gradient_sq(self).values().iter().sum::<f64>()
    }

    /// Lattice `H^1` norm using forward differences with periodic wrap.
    pub fn h1_norm(&self) -> f64 {
        (self.inner(self) + self.dirichlet_energy()).sqrt()
    }
}

/// Pointwise squared forward-difference gradient `|grad f|^2`.
pub fn gradient_sq(f: &RealField) -> RealField {
    let grid = f.grid();
    let m = grid.m();
    let h = grid.spacing();
    let v = f.values();
    let mut out = vec![0.0; grid.sites()];
    for i1 in 0..m {
        for i2 in 0..m {
            let idx = grid.site(i1, i2);
            let dx = (v[grid.site((i1 + 1) % m, i2)] - v[idx]) / h;
            let dy = (v[grid.site(i1, (i2 + 1) % m)] - v[idx]) / h;
            out[idx] = dx * dx + dy * dy;
        }
    }
    RealField {
        grid,
        values: out,
    }
}

fn check_same_grid(a: &RealField, b: &RealField) -> Result<()> {
    if a.grid != b.grid {
        return Err(Error::Argument("grid mismatch between fields".into()));
    }
    Ok(())
}

/// Fourier-side representation of a lattice field.
#[derive(Debug, Clone)]
pub struct SpectralField {
    grid: TorusGrid,
    /// Coefficient for FFT bin `(i1, i2)` at index `i1 * M + i2`.
    coefficients: Vec<Complex64>,
}

impl SpectralField {
    pub fn new(grid: TorusGrid, coefficients: Vec<Complex64>) -> Result<Self> {
        if coefficients.len() != grid.sites() {
            return Err(Error::Argument("spectral field shape mismatch".into()));
        }
        Ok(Self { grid, coefficients })
    }

    pub fn zeros(grid: TorusGrid) -> Self {
        Self {
            grid,
            coefficients: vec![Complex64::default(); grid.sites()],
        }
    }

    #[inline]
    pub fn grid(&self) -> TorusGrid {
        self.grid
    }

    #[inline]
    pub fn coefficients(&self) -> &[Complex64] {
        &self.coefficients
    }

    #[inline]
    pub fn coefficients_mut(&mut self) -> &mut [Complex64] {
        &mut self.coefficients
    }

    /// Coefficient at integer frequency `(k1, k2)`.
    pub fn at_freq(&self, k1: i64, k2: i64) -> Complex64 {
        let m = self.grid.m() as i64;
        let wrap = |k: i64| (((k % m) + m) % m) as usize;
        self.coefficients[wrap(k1) * self.grid.m() + wrap(k2)]
    }

    /// Max deviation from Hermitian symmetry `c(-k) = conj(c(k))`.
    pub fn hermitian_defect(&self) -> f64 {
        let m = self.grid.m() as i64;
        let mut worst = 0.0f64;
        for i1 in 0..m {
            for i2 in 0..m {
                let a = self.at_freq(i1, i2);
                let b = self.at_freq(-i1, -i2).conj();
                worst = worst.max((a - b).norm());
            }
        }
        worst
    }
}

thread_local! {
    static FFT_CACHE: RefCell<HashMap<(usize, bool), Arc<dyn Fft<f64>>>> =
        RefCell::new(HashMap::new());
}

fn plan(m: usize, inverse: bool) -> Arc<dyn Fft<f64>> {
    FFT_CACHE.with(|c| {
        c.borrow_mut()
            .entry((m, inverse))
            .or_insert_with(|| {
                let mut planner = FftPlanner::new();
                if inverse {
                    planner.plan_fft_inverse(m)
                } else {
                    planner.plan_fft_forward(m)
                }
            })
            .clone()
    })
}

fn fft2(data: &mut [Complex64], m: usize, inverse: bool) {
    let fft = plan(m, inverse);
    // rows
    for row in data.chunks_exact_mut(m) {
        fft.process(row);
    }
    // columns via transpose
    let mut col = vec![Complex64::default(); m];
    for j in 0..m {
        for i in 0..m {
            col[i] = data[i * m + j];
        }
        fft.process(&mut col);
        for i in 0..m {
            data[i * m + j] = col[i];
        }
    }
}

/// Forward transform: `f_hat(k) = h^2 sum_x f(x) e^{-i k . x}`.
pub fn forward_transform(f: &RealField) -> SpectralField {
    let grid = f.grid();
    let m = grid.m();
    let h2 = grid.spacing() * grid.spacing();
    let mut data: Vec<Complex64> = f
        .values()
        .iter()
        .map(|&v| Complex64::new(v * h2, 0.0))
        .collect();
    fft2(&mut data, m, false);
    SpectralField {
        grid,
        coefficients: data,
    }
}

/// Inverse transform: `f(x) = L^{-2} sum_k f_hat(k) e^{i k . x}`.
pub fn inverse_transform(s: &SpectralField) -> RealField {
    let grid = s.grid();
    let m = grid.m();
    let l2 = grid.side_length() * grid.side_length();
    let mut data = s.coefficients.clone();
    fft2(&mut data, m, true);
    // rustfft's inverse omits the 1/M^2 factor.
    let scale = 1.0 / l2;
    RealField {
        grid,
        values: data.iter().map(|c| c.re * scale).collect(),
    }
}

/// Dyadic annulus structure of the frequency lattice.
///
/// Block `0` holds `|k| <= 1`; block `j >= 1` holds `2^{j-1} < |k| <= 2^j`
/// with `|k|` the Euclidean norm of the integer frequency.
#[derive(Debug, Clone)]
pub struct DyadicBlocks {
    grid: TorusGrid,
    block_of: Vec<u8>,
    max_block: usize,
}

impl DyadicBlocks {
    pub fn new(grid: TorusGrid) -> Self {
        let m = grid.m();
        let mut block_of = vec![0u8; grid.sites()];
        let mut max_block = 0usize;
        for i1 in 0..m {
            for i2 in 0..m {
                let k1 = grid.signed_freq(i1) as f64;
                let k2 = grid.signed_freq(i2) as f64;
                let mag = (k1 * k1 + k2 * k2).sqrt();
                let j = block_index(mag);
                block_of[i1 * m + i2] = j as u8;
                max_block = max_block.max(j);
            }
        }
        Self {
            grid,
            block_of,
            max_block,
        }
    }

    #[inline]
    pub fn grid(&self) -> TorusGrid {
        self.grid
    }

    /// Largest occupied block index `J(M)`.
    #[inline]
    pub fn max_block(&self) -> usize {
        self.max_block
    }

    #[inline]
    pub fn block_of(&self, coeff_idx: usize) -> usize {
        self.block_of[coeff_idx] as usize
    }
}

#[inline]
fn block_index(mag: f64) -> usize {
    if mag <= 1.0 {
        0
    } else {
        mag.log2().ceil() as usize
    }
}

/// Littlewood-Paley projection `Delta_j f` with sharp annulus cutoffs.
pub fn lp_block(f: &RealField, j: usize) -> Result<RealField> {
    let blocks = DyadicBlocks::new(f.grid());
    if j > blocks.max_block() {
        return Err(Error::Argument(format!(
            "block index {j} out of range 0..={}",
            blocks.max_block()
        )));
    }
    let mut s = forward_transform(f);
    for (idx, c) in s.coefficients_mut().iter_mut().enumerate() {
        if blocks.block_of(idx) != j {
            *c = Complex64::default();
        }
    }
    Ok(inverse_transform(&s))
}

/// All Littlewood-Paley blocks of `f` at once; their sum reconstructs `f`.
pub fn lp_decompose(f: &RealField) -> Vec<RealField> {
    let grid = f.grid();
    let blocks = DyadicBlocks::new(grid);
    let s = forward_transform(f);
    (0..=blocks.max_block())
        .map(|j| {
            let mut sj = SpectralField::zeros(grid);
            for (idx, c) in s.coefficients().iter().enumerate() {
                if blocks.block_of(idx) == j {
                    sj.coefficients_mut()[idx] = *c;
                }
            }
            inverse_transform(&sj)
        })
        .collect()
}

/// Besov norm `B^alpha_{p,q}` built on the sharp dyadic decomposition.
pub fn besov_norm(f: &RealField, alpha: f64, p: f64, q: f64) -> f64 {
    assert!(p >= 1.0 && q >= 1.0, "Besov exponents need p, q >= 1");
    let blocks = lp_decompose(f);
    let weighted = blocks
        .iter()
        .enumerate()
        .map(|(j, b)| 2f64.powf(alpha * j as f64) * b.lp_norm(p));
    if q.is_infinite() {
        weighted.fold(0.0, f64::max)
    } else {
        weighted
            .map(|w| w.powf(q))
            .sum::<f64>()
            .powf(1.0 / q)
    }
}

/// Holder-norm proxy `C^alpha = B^alpha_{inf,inf}` used throughout the
/// diagnostics.
pub fn holder_norm(f: &RealField, alpha: f64) -> f64 {
    besov_norm(f, alpha, f64::INFINITY, f64::INFINITY)
}

/// Negative-order Sobolev norm proxy `H^{-eps} = B^{-eps}_{2,2}`.
pub fn sobolev_neg_norm(f: &RealField, eps: f64) -> f64 {
    besov_norm(f, -eps, 2.0, 2.0)
}

/// `H^{-eps}` pairing via the block-diagonal quadratic form
/// `<f, g> = sum_j 2^{-2 eps j} <Delta_j f, Delta_j g>_{L^2}`.
pub fn sobolev_neg_inner(f: &RealField, g: &RealField, eps: f64) -> Result<f64> {
    check_same_grid(f, g)?;
    let bf = lp_decompose(f);
    let bg = lp_decompose(g);
    Ok(bf
        .iter()
        .zip(&bg)
        .enumerate()
        .map(|(j, (a, b))| 2f64.powf(-2.0 * eps * j as f64) * a.inner(b))
        .sum())
}

/// Paraproduct mode selection for [`paraproduct`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ParaMode {
    /// `f < g`: low frequencies of `f` times high blocks of `g`.
    Lower,
    /// `f <= g`: `Lower` plus the resonant part.
    Leq,
    /// Resonant part `f o g`.
    Resonant,
    /// `f > g`: `Lower` with the arguments swapped.
    Upper,
}

/// Bony paraproduct with the standard two-block separation:
/// `f < g = sum_{j >= 2} S_{j-2} f . Delta_j g`, resonant part over
/// `|i - j| <= 1`. The three modes sum to the pointwise product exactly.
pub fn paraproduct(f: &RealField, g: &RealField, mode: ParaMode) -> Result<RealField> {
    check_same_grid(f, g)?;
    match mode {
        ParaMode::Lower => para_lower(f, g),
        ParaMode::Upper => para_lower(g, f),
        ParaMode::Resonant => para_resonant(f, g),
        ParaMode::Leq => {
            let mut low = para_lower(f, g)?;
            let res = para_resonant(f, g)?;
            low.axpy(1.0, &res);
            Ok(low)
        }
    }
}

fn para_lower(f: &RealField, g: &RealField) -> Result<RealField> {
    let grid = f.grid();
    let bf = lp_decompose(f);
    let bg = lp_decompose(g);
    // partial sums S_m f = sum_{i <= m} Delta_i f
    let mut partial = Vec::with_capacity(bf.len());
    let mut acc = RealField::zeros(grid);
    for b in &bf {
        acc.axpy(1.0, b);
        partial.push(acc.clone());
    }
    let mut out = RealField::zeros(grid);
    for j in 2..bg.len() {
        let prod = partial[j - 2].mul(&bg[j])?;
        out.axpy(1.0, &prod);
    }
    Ok(out)
}

fn para_resonant(f: &RealField, g: &RealField) -> Result<RealField> {
    let grid = f.grid();
    let bf = lp_decompose(f);
    let bg = lp_decompose(g);
    let mut out = RealField::zeros(grid);
    for i in 0..bf.len() {
        for j in 0..bg.len() {
            if i.abs_diff(j) <= 1 {
                let prod = bf[i].mul(&bg[j])?;
                out.axpy(1.0, &prod);
            }
        }
    }
    Ok(out)
}
