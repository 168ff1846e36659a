//! Small statistics helpers for the Monte-Carlo checks.

use rand::Rng;

pub fn mean(values: &[f64]) -> f64 {
    values.iter().sum::<f64>() / values.len() as f64
}

/// Unbiased sample variance; zero for fewer than two values.
pub fn variance(values: &[f64]) -> f64 {
    if values.len() < 2 {
        return 0.0;
    }
    let mu = mean(values);
    values.iter().map(|v| (v - mu).powi(2)).sum::<f64>() / (values.len() - 1) as f64
}

/// Standard error of the mean.
pub fn standard_error(values: &[f64]) -> f64 {
    (variance(values) / values.len() as f64).sqrt()
}

/// Asymptotic Kolmogorov critical coefficient `c(alpha)` with
/// `P(sqrt(n) D > c) = alpha`.
pub fn ks_coefficient(alpha: f64) -> f64 {
    (-(alpha / 2.0).ln() / 2.0).sqrt()
}

/// Two-sample Kolmogorov–Smirnov statistic. Ties are handled by
/// comparing the empirical CDFs after each distinct value.
pub fn ks_two_sample(a: &[f64], b: &[f64]) -> f64 {
    let mut a = a.to_vec();
    let mut b = b.to_vec();
    a.sort_by(f64::total_cmp);
    b.sort_by(f64::total_cmp);
    let (na, nb) = (a.len() as f64, b.len() as f64);
    let (mut i, mut j) = (0, 0);
    let mut d: f64 = 0.0;
    while i < a.len() && j < b.len() {
        let x = a[i].min(b[j]);
        while i < a.len() && a[i] <= x {
            i += 1;
        }
        while j < b.len() && b[j] <= x {
            j += 1;
        }
        d = d.max((i as f64 / na - j as f64 / nb).abs());
    }
    d
}

/// Critical value of the two-sample statistic at level `alpha`.
pub fn ks_two_sample_critical(alpha: f64, na: usize, nb: usize) -> f64 {
    let (na, nb) = (na as f64, nb as f64);
    ks_coefficient(alpha) * ((na + nb) / (na * nb)).sqrt()
}

/// One-sample statistic `sup |F_n - F|` against a CDF that may have
/// jumps. `cdf_left(x)` must return `F(x-)`.
pub fn ks_one_sample(
    samples: &[f64],
    cdf: impl Fn(f64) -> f64,
    cdf_left: impl Fn(f64) -> f64,
) -> f64 {
    let mut xs = samples.to_vec();
    xs.sort_by(f64::total_cmp);
    let n = xs.len() as f64;
    let mut d: f64 = 0.0;
    let mut k = 0;
    while k < xs.len() {
        let x = xs[k];
        let before = k as f64 / n;
        while k < xs.len() && xs[k] <= x {
            k += 1;
        }
        let after = k as f64 / n;
        d = d
            .max((before - cdf_left(x)).abs())
            .max((after - cdf(x)).abs());
    }
    d
}

/// Bootstrap standard deviation of `statistic` over resamples of `0..n`.
pub fn bootstrap_stderr<G: Rng>(
    n: usize,
    resamples: usize,
    rng: &mut G,
    mut statistic: impl FnMut(&[usize]) -> f64,
) -> f64 {
    let mut values = Vec::with_capacity(resamples);
    let mut idx = vec![0usize; n];
    for _ in 0..resamples {
        for slot in idx.iter_mut() {
            *slot = rng.random_range(0..n);
        }
        values.push(statistic(&idx));
    }
    variance(&values).sqrt()
}

/// Largest-remainder rounding of `weights * total` to integers summing to `total`.
pub fn largest_remainder(weights: &[f64], total: u64) -> Vec<u64> {
    let sum: f64 = weights.iter().sum();
    if sum <= 0.0 {
        return vec![0; weights.len()];
    }
    let exact: Vec<f64> = weights.iter().map(|w| w / sum * total as f64).collect();
    let mut counts: Vec<u64> = exact.iter().map(|e| e.floor() as u64).collect();
    let assigned: u64 = counts.iter().sum();
    let mut order: Vec<usize> = (0..weights.len()).collect();
    order.sort_by(|&a, &b| {
        let (ra, rb) = (exact[a] - exact[a].floor(), exact[b] - exact[b].floor());
        rb.total_cmp(&ra).then(a.cmp(&b))
    });
    for &i in order.iter().take((total - assigned) as usize) {
        counts[i] += 1;
    }
    counts
}
