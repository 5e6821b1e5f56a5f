//! Small statistical helpers shared by the diagnostics: least squares,
//! batch-mean errors, Kolmogorov-Smirnov statistics.

/// Ordinary least squares fit `y = slope * x + intercept`.
#[derive(Debug, Clone, Copy)]
pub struct LinearFit {
    pub slope: f64,
    pub intercept: f64,
    pub r_squared: f64,
}

pub fn linear_fit(x: &[f64], y: &[f64]) -> Option<LinearFit> {
    if x.len() != y.len() || x.len() < 2 {
        return None;
    }
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let sxx = x.iter().map(|v| (v - mx) * (v - mx)).sum::<f64>();
    let sxy = x
        .iter()
        .zip(y)
        .map(|(a, b)| (a - mx) * (b - my))
        .sum::<f64>();
    let syy = y.iter().map(|v| (v - my) * (v - my)).sum::<f64>();
    if sxx == 0.0 {
        return None;
    }
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let r_squared = if syy == 0.0 { 1.0 } else { sxy * sxy / (sxx * syy) };
    Some(LinearFit {
        slope,
        intercept,
        r_squared,
    })
}

/// Sample mean and standard error of the mean.
pub fn mean_stderr(samples: &[f64]) -> (f64, f64) {
    let n = samples.len() as f64;
    if samples.is_empty() {
        return (f64::NAN, f64::NAN);
    }
    let mean = samples.iter().sum::<f64>() / n;
    if samples.len() < 2 {
        return (mean, f64::NAN);
    }
    let var = samples.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n - 1.0);
    (mean, (var / n).sqrt())
}

/// Standard error from batch means: split into `batches` contiguous batches
/// and use the spread of batch averages.
pub fn batch_mean_stderr(samples: &[f64], batches: usize) -> (f64, f64) {
    let b = batches.max(2).min(samples.len().max(1));
    let per = samples.len() / b;
    if per == 0 {
        return mean_stderr(samples);
    }
    let means: Vec<f64> = (0..b)
        .map(|i| {
            let chunk = &samples[i * per..(i + 1) * per];
            chunk.iter().sum::<f64>() / chunk.len() as f64
        })
        .collect();
    mean_stderr(&means)
}

/// Two-sample Kolmogorov-Smirnov statistic `sup_x |F1(x) - F2(x)|`.
pub fn ks_statistic(a: &[f64], b: &[f64]) -> f64 {
    let mut a = a.to_vec();
    let mut b = b.to_vec();
    a.sort_by(f64::total_cmp);
    b.sort_by(f64::total_cmp);
    let (mut i, mut j) = (0usize, 0usize);
    let (na, nb) = (a.len() as f64, b.len() as f64);
    let mut d = 0.0f64;
    while i < a.len() && j < b.len() {
        // advance past ties on both sides at once so equal samples never
        // open a spurious gap between the empirical CDFs
        let v = a[i].min(b[j]);
        while i < a.len() && a[i] <= v {
            i += 1;
        }
        while j < b.len() && b[j] <= v {
            j += 1;
        }
        d = d.max((i as f64 / na - j as f64 / nb).abs());
    }
    d
}
