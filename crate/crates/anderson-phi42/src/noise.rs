//! Spatial white noise, the lifted field `X = Laplacian^{-1} xi`, and
//! spacetime white-noise increments.

use rand_distr::{Distribution, Normal};

use crate::error::{Error, Result};
use crate::grid::{
    forward_transform, inverse_transform, lp_decompose, DyadicBlocks, RealField, TorusGrid,
};
use crate::rng::RngStream;

/// A realization of spatial white noise, per-site `N(0, 1/h^2)`.
#[derive(Debug, Clone)]
pub struct SpaceWhiteNoise {
    field: RealField,
}

impl SpaceWhiteNoise {
    /// Wrap an arbitrary field as a potential (controls, deterministic tests).
    pub fn from_field(field: RealField) -> Self {
        Self { field }
    }

    pub fn field(&self) -> &RealField {
        &self.field
    }

    pub fn into_field(self) -> RealField {
        self.field
    }

    /// Per-site standard deviation `1/h`.
    pub fn site_std(&self) -> f64 {
        1.0 / self.field.grid().spacing()
    }
}

/// Sample spatial white noise: i.i.d. centered Gaussians with std `1/h`,
/// so that pairings `<xi, f> = h^2 sum xi f` have variance `|f|_{L^2}^2`.
pub fn sample_space_white_noise(grid: TorusGrid, stream: &mut RngStream) -> SpaceWhiteNoise {
    let std = 1.0 / grid.spacing();
    let normal = Normal::new(0.0, std).expect("std is positive");
    let values = (0..grid.sites())
        .map(|_| normal.sample(stream.rng()))
        .collect();
    SpaceWhiteNoise {
        field: RealField::new(grid, values).expect("shape matches grid"),
    }
}

/// Lift `X = Laplacian^{-1} xi`: the zero-mean solution of
/// `-Laplacian_h X = xi - mean(xi)` via spectral division by the discrete
/// symbol; the `k = 0` coefficient is set to zero.
pub fn lift_x(xi: &SpaceWhiteNoise) -> RealField {
    let grid = xi.field.grid();
    let m = grid.m();
    let mut s = forward_transform(&xi.field);
    for i1 in 0..m {
        for i2 in 0..m {
            let idx = i1 * m + i2;
            if i1 == 0 && i2 == 0 {
                s.coefficients_mut()[idx] = Default::default();
            } else {
                let sym = grid.laplacian_symbol(grid.signed_freq(i1), grid.signed_freq(i2));
                s.coefficients_mut()[idx] /= sym;
            }
        }
    }
    inverse_transform(&s)
}

/// Remove Littlewood-Paley blocks `0..=n`, keeping spectral support in
/// annuli `> n`.
pub fn truncate_high(x: &RealField, n: usize) -> Result<RealField> {
    let grid = x.grid();
    let blocks = DyadicBlocks::new(grid);
    if n > blocks.max_block() {
        return Err(Error::Argument(format!(
            "truncation level {n} out of range 0..={}",
            blocks.max_block()
        )));
    }
    let mut s = forward_transform(x);
    for (idx, c) in s.coefficients_mut().iter_mut().enumerate() {
        if blocks.block_of(idx) <= n {
            *c = Default::default();
        }
    }
    Ok(inverse_transform(&s))
}

/// Sample a spacetime white-noise increment over a step of length `dt`:
/// i.i.d. per-site `N(0, dt/h^2)`, so `<dW, f>` has variance `dt |f|^2`.
pub fn sample_wiener_increment(
    grid: TorusGrid,
    dt: f64,
    stream: &mut RngStream,
) -> Result<RealField> {
    if !(dt > 0.0) {
        return Err(Error::Argument(format!("dt = {dt} must be positive")));
    }
    let std = dt.sqrt() / grid.spacing();
    let normal = Normal::new(0.0, std).expect("std is positive");
    let values = (0..grid.sites())
        .map(|_| normal.sample(stream.rng()))
        .collect();
    RealField::new(grid, values)
}

/// Apply the negative discrete Laplacian stencil `-Laplacian_h f`.
pub fn neg_laplacian_apply(f: &RealField) -> RealField {
    let grid = f.grid();
    let m = grid.m();
    let h2 = grid.spacing() * grid.spacing();
    let v = f.values();
    let mut out = vec![0.0; grid.sites()];
    for i1 in 0..m {
        for i2 in 0..m {
            let idx = grid.site(i1, i2);
            let up = v[grid.site((i1 + m - 1) % m, i2)];
            let down = v[grid.site((i1 + 1) % m, i2)];
            let left = v[grid.site(i1, (i2 + m - 1) % m)];
            let right = v[grid.site(i1, (i2 + 1) % m)];
            out[idx] = (4.0 * v[idx] - up - down - left - right) / h2;
        }
    }
    RealField::new(grid, out).expect("shape matches grid")
}

/// Check that `lp_decompose`-based truncation agrees with `truncate_high`.
pub fn high_block_part(x: &RealField, n: usize) -> Result<RealField> {
    let blocks = lp_decompose(x);
    let mut out = RealField::zeros(x.grid());
    for (j, b) in blocks.iter().enumerate() {
        if j > n {
            out.axpy(1.0, b);
        }
    }
    Ok(out)
}
