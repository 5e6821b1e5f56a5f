//! The Wick renormalization at work: the variance sigma_N of the truncated
//! stochastic convolution diverges like log N, yet the recentered square
//! :X_N^2: = X_N^2 - sigma_N stays centered, and its covariance matches the
//! second-chaos identity E[:X^2:(x):X^2:(y)] = 2 E[X(x)X(y)]^2.
//!
//! Usage: wick_renormalization [M] [samples] [seed]

use anderson_phi42::hamiltonian::{renorm_constant, AndersonOperator};
use anderson_phi42::grid::TorusGrid;
use anderson_phi42::noise::sample_space_white_noise;
use anderson_phi42::rng::{Purpose, RngStream};
use anderson_phi42::stats::{linear_fit, mean_stderr};
use anderson_phi42::wick::{sigma_at, sigma_profile, stationary_covariance, OUInit, OUState};

fn main() {
    let args: Vec<String> = std::env::args().collect();
    let m: usize = args.get(1).map_or(32, |s| s.parse().unwrap());
    let samples: usize = args.get(2).map_or(4000, |s| s.parse().unwrap());
    let seed: u64 = args.get(3).map_or(7, |s| s.parse().unwrap());

    let grid = TorusGrid::standard(m).unwrap();
    let mut pstream = RngStream::new(seed, Purpose::Potential, 0);
    let xi = sample_space_white_noise(grid, &mut pstream);
    let op = AndersonOperator::assemble(grid, &xi, renorm_constant(grid), 0.0)
        .unwrap()
        .ensure_positive(1.0);

    // 1. log divergence of the spatial mean of sigma_N
    let n_max = grid.sites() - 1;
    let mut levels = Vec::new();
    let mut n = 4;
    while n <= n_max {
        levels.push(n);
        n *= 2;
    }
    println!("variance growth (spatial mean of sigma_N):");
    let mut xs = Vec::new();
    let mut ys = Vec::new();
    for &n in &levels {
        let mean = sigma_profile(&op, n, 0.0, OUInit::Stationary).unwrap().mean();
        println!("  N = {n:>5}: {mean:.5}");
        xs.push((n as f64).ln());
        ys.push(mean);
    }
    let fit = linear_fit(&xs, &ys).unwrap();
    println!(
        "  fit vs log N: slope {:.4}, R^2 {:.5}\n",
        fit.slope, fit.r_squared
    );

    // 2. centeredness of :X^2: and the chaos covariance at a neighbor pair
    let n_tr = n_max.min(511);
    let a = grid.site(3, 2);
    let b = grid.site(4, 2);
    let (sa, sb) = (
        sigma_at(&op, n_tr, OUInit::Stationary, 0.0, a),
        sigma_at(&op, n_tr, OUInit::Stationary, 0.0, b),
    );
    let mut centered = Vec::with_capacity(samples);
    let mut prods = Vec::with_capacity(samples);
    for i in 0..samples {
        let mut s = RngStream::new(seed, Purpose::Driving, i as u64);
        let st = OUState::sample_stationary(&op, &mut s);
        let wa = st.eval_at(n_tr, a).powi(2) - sa;
        let wb = st.eval_at(n_tr, b).powi(2) - sb;
        centered.push(wa);
        prods.push(wa * wb);
    }
    let (mean, se) = mean_stderr(&centered);
    println!(":X^2:(a) over {samples} samples: mean {mean:.4} +- {se:.4} (should straddle 0)");
    let (emp, ese) = mean_stderr(&prods);
    let cov = stationary_covariance(&op, n_tr, a, b);
    println!(
        "chaos covariance at neighbors: empirical {emp:.4} +- {ese:.4}, exact 2 cov^2 = {:.4}",
        2.0 * cov * cov
    );
}
