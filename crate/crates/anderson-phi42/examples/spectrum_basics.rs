//! Assemble the Anderson Hamiltonian on a lattice torus and inspect its
//! spectrum: the renormalization constant, the ground-state energy before
//! and after the mass shift, the spectral gap, and a Weyl-type check that
//! high eigenvalues grow linearly in the mode index (as for the Laplacian
//! in two dimensions).
//!
//! Usage: spectrum_basics [M] [seed]

use anderson_phi42::grid::TorusGrid;
use anderson_phi42::hamiltonian::{renorm_constant, AndersonOperator};
use anderson_phi42::noise::sample_space_white_noise;
use anderson_phi42::rng::{Purpose, RngStream};
use anderson_phi42::stats::linear_fit;

fn main() {
    let args: Vec<String> = std::env::args().collect();
    let m: usize = args.get(1).map_or(32, |s| s.parse().unwrap());
    let seed: u64 = args.get(2).map_or(7, |s| s.parse().unwrap());

    let grid = TorusGrid::standard(m).unwrap();
    let c = renorm_constant(grid);
    println!("M = {m}, sites = {}, renorm constant c_h = {c:.4}", grid.sites());

    let mut stream = RngStream::new(seed, Purpose::Potential, 0);
    let xi = sample_space_white_noise(grid, &mut stream);
    let raw = AndersonOperator::assemble(grid, &xi, c, 0.0).unwrap();
    let lam0_raw = raw.lambda0();
    let op = raw.ensure_positive(1.0);
    let evs = op.eigenvalues();
    println!("ground state before shift: {lam0_raw:.4}");
    println!("after mass floor 1.0:      {:.4}", op.lambda0());
    println!("spectral gap:              {:.4}", evs[1] - evs[0]);

    // Weyl asymptotics: lambda_n ~ (4 pi / L^2) n in 2d, so lambda_n / n
    // should flatten out. Fit log lambda_n vs log n over the upper half.
    let lo = evs.len() / 2;
    let xs: Vec<f64> = (lo..evs.len()).map(|n| (n as f64).ln()).collect();
    let ys: Vec<f64> = evs[lo..].iter().map(|l| l.ln()).collect();
    let fit = linear_fit(&xs, &ys).unwrap();
    println!(
        "Weyl fit over upper half: log lambda_n = {:.3} log n + {:.3} (R^2 = {:.4}; expect slope ~ 1)",
        fit.slope, fit.intercept, fit.r_squared
    );

    println!("\nfirst eigenvalues:");
    for (i, l) in evs.iter().take(12).enumerate() {
        println!("  lambda_{i:<2} = {l:.5}");
    }
}
