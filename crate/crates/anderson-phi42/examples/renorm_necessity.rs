//! Why the Wick constant is necessary: on matched stationary samples, the
//! renormalized squares :(Pi_N conv)^2: form a Cauchy sequence in negative
//! regularity while the bare squares do not.
//!
//! Usage: renorm_necessity [M] [eps] [samples] [seed]
//! Prints, for consecutive truncation pairs (N, 2N), the mean distance in
//! the Holder-type and Sobolev-type `C^{-eps}` proxies, plus the bare
//! (unrenormalized) distance.

use anderson_phi42::grid::{besov_norm, sobolev_neg_norm, TorusGrid};
use anderson_phi42::hamiltonian::{renorm_constant, AndersonOperator};
use anderson_phi42::noise::sample_space_white_noise;
use anderson_phi42::rng::{Purpose, RngStream};
use anderson_phi42::wick::{assemble_field, sigma_profile, wick_power, OUInit, OUState};

fn main() {
    let args: Vec<String> = std::env::args().collect();
    let m: usize = args.get(1).map_or(32, |s| s.parse().unwrap());
    let eps: f64 = args.get(2).map_or(0.25, |s| s.parse().unwrap());
    let samples: usize = args.get(3).map_or(40, |s| s.parse().unwrap());
    let seed: u64 = args.get(4).map_or(7, |s| s.parse().unwrap());
    let levels: Vec<usize> = if args.len() > 5 {
        args[5..].iter().map(|s| s.parse().unwrap()).collect()
    } else {
        vec![16, 32, 64, 128, 256]
    };

    let grid = TorusGrid::standard(m).unwrap();
    let mut pstream = RngStream::new(seed, Purpose::Potential, 0);
    let xi = sample_space_white_noise(grid, &mut pstream);
    let op = AndersonOperator::assemble(grid, &xi, renorm_constant(grid), 0.0)
        .unwrap()
        .ensure_positive(1.0);

    let sigmas: Vec<_> = levels
        .iter()
        .map(|&n| sigma_profile(&op, n, 0.0, OUInit::Stationary).unwrap())
        .collect();

    let mut holder = vec![0.0f64; levels.len() - 1];
    let mut sobolev = vec![0.0f64; levels.len() - 1];
    let mut bare = vec![0.0f64; levels.len() - 1];
    for s in 0..samples {
        let mut stream = RngStream::new(seed, Purpose::Driving, s as u64);
        let state = OUState::sample_stationary(&op, &mut stream);
        let fields: Vec<_> = levels
            .iter()
            .map(|&n| assemble_field(&state, n).unwrap())
            .collect();
        for i in 0..levels.len() - 1 {
            let w_hi = wick_power(&fields[i + 1], &sigmas[i + 1], 2).unwrap();
            let w_lo = wick_power(&fields[i], &sigmas[i], 2).unwrap();
            let d = w_hi.sub(&w_lo).unwrap();
            holder[i] += besov_norm(&d, -eps, f64::INFINITY, f64::INFINITY) / samples as f64;
            sobolev[i] += sobolev_neg_norm(&d, eps) / samples as f64;
            let b = fields[i + 1].mul(&fields[i + 1]).unwrap();
            let b = b.sub(&fields[i].mul(&fields[i]).unwrap()).unwrap();
            bare[i] += sobolev_neg_norm(&b, eps) / samples as f64;
        }
    }
    println!("M = {m}, eps = {eps}, samples = {samples}, seed = {seed}");
    println!("{:>10} {:>14} {:>14} {:>14}", "pair", "holder proxy", "sobolev proxy", "bare (sobolev)");
    for i in 0..levels.len() - 1 {
        println!(
            "{:>4} ->{:>4} {:>14.6} {:>14.6} {:>14.6}",
            levels[i],
            levels[i + 1],
            holder[i],
            sobolev[i],
            bare[i]
        );
    }
}
