//! Lawson–Hanson active-set solver for `min ||Cx - d||^2, x >= 0`.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const KKT_TOLERANCE: f64 = 1e-8;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NnlsReport {
    pub x: Vec<f64>,
    pub residual_norm: f64,
    pub kkt_residual: f64,
    pub iterations: usize,
}

impl NnlsReport {
    pub(crate) fn from_solution(
        c: &DMatrix<f64>,
        d: &DVector<f64>,
        x: DVector<f64>,
        iterations: usize,
    ) -> Self {
        let residual = c * &x - d;
        let kkt_residual = kkt_residual(c, d, &x);
        Self {
            x: x.iter().copied().collect(),
            residual_norm: residual.norm(),
            kkt_residual,
            iterations,
        }
    }

    pub fn objective(&self, c: &DMatrix<f64>, d: &DVector<f64>) -> f64 {
        (c * DVector::from_column_slice(&self.x) - d).norm_squared()
    }
}

/// Worst violation of the orthant KKT conditions at `x`.
pub fn kkt_residual(c: &DMatrix<f64>, d: &DVector<f64>, x: &DVector<f64>) -> f64 {
    let g = c.transpose() * (c * x - d);
    x.iter()
        .zip(g.iter())
        .map(|(&xj, &gj)| if xj > 0.0 { gj.abs() } else { (-gj).max(0.0) })
        .fold(0.0, f64::max)
}

/// Minimum-norm least squares on the columns flagged in `passive`.
fn passive_solve(c: &DMatrix<f64>, d: &DVector<f64>, passive: &[bool]) -> DVector<f64> {
    let cols: Vec<usize> = (0..passive.len()).filter(|&j| passive[j]).collect();
    let mut z = DVector::zeros(passive.len());
    if cols.is_empty() {
        return z;
    }
    let sub = c.select_columns(&cols);
    let svd = sub.clone().svd(true, true);
    let sigma_max = svd.singular_values.max();
    let eps = f64::EPSILON * sub.nrows().max(sub.ncols()) as f64 * sigma_max;
    let solution = svd.solve(d, eps).expect("u and v were computed");
    for (k, &j) in cols.iter().enumerate() {
        z[j] = solution[k];
    }
    z
}

fn check_dims(c: &DMatrix<f64>, d: &DVector<f64>) -> Result<()> {
    if c.nrows() != d.len() {
        return Err(Error::DimensionMismatch(format!(
            "design has {} rows but target has {}",
            c.nrows(),
            d.len()
        )));
    }
    Ok(())
}

/// Active-set NNLS. The entering threshold is `tol` scaled down for
/// small-magnitude systems so the answer is invariant to a common
/// rescaling of `C` and `d`.
pub fn nnls(c: &DMatrix<f64>, d: &DVector<f64>, tol: f64) -> Result<NnlsReport> {
    check_dims(c, d)?;
    let n = c.ncols();
    let scale = c.norm() * d.norm();
    let threshold = tol * scale.min(1.0);
    let cap = 10 * n.max(1);
    let mut x = DVector::zeros(n);
    let mut passive = vec![false; n];
    let mut blocked = vec![false; n];
    let mut iterations = 0;
    if scale == 0.0 {
        return Ok(NnlsReport::from_solution(c, d, x, 0));
    }
    let ct = c.transpose();
    loop {
        let w = &ct * (d - c * &x);
        let entering = (0..n)
            .filter(|&j| !passive[j] && !blocked[j] && w[j] > threshold)
            .max_by(|&a, &b| w[a].total_cmp(&w[b]));
        let Some(j) = entering else { break };
        passive[j] = true;
        let before = x.clone();
        loop {
            iterations += 1;
            if iterations > cap {
                return Err(Error::IterationCap { iterations: cap });
            }
            let z = passive_solve(c, d, &passive);
            if (0..n).all(|k| !passive[k] || z[k] > 0.0) {
                x = z;
                break;
            }
            let mut alpha = f64::INFINITY;
            for k in 0..n {
                if passive[k] && z[k] <= 0.0 {
                    alpha = alpha.min(x[k] / (x[k] - z[k]));
                }
            }
            x += (z - &x) * alpha;
            for k in 0..n {
                if passive[k] && x[k] <= f64::EPSILON * x.amax() {
                    passive[k] = false;
                    x[k] = 0.0;
                }
            }
        }
        // Numerical stall: the entering column was dropped straight away.
        if !passive[j] && x == before {
            blocked[j] = true;
        } else {
            blocked.iter_mut().for_each(|b| *b = false);
        }
    }
    Ok(NnlsReport::from_solution(c, d, x, iterations))
}

/// Tikhonov-regularized NNLS toward `x_prev` by row augmentation.
pub fn nnls_regularized(
    c: &DMatrix<f64>,
    d: &DVector<f64>,
    x_prev: &[f64],
    lambda_reg: f64,
    tol: f64,
) -> Result<NnlsReport> {
    if !(lambda_reg >= 0.0) || !lambda_reg.is_finite() {
        return Err(Error::InvalidParams(format!(
            "regularization weight {lambda_reg} must be >= 0"
        )));
    }
    if x_prev.len() != c.ncols() {
        return Err(Error::DimensionMismatch(format!(
            "previous estimate has {} entries, design has {} columns",
            x_prev.len(),
            c.ncols()
        )));
    }
    if let Some(index) = x_prev.iter().position(|&v| v < 0.0) {
        return Err(Error::NegativeEntry {
            field: "x_prev",
            index,
            value: x_prev[index],
        });
    }
    if lambda_reg == 0.0 {
        return nnls(c, d, tol);
    }
    let (c_aug, d_aug) = augment(c, d, x_prev, lambda_reg);
    nnls(&c_aug, &d_aug, tol)
}

pub fn augment(
    c: &DMatrix<f64>,
    d: &DVector<f64>,
    x_prev: &[f64],
    lambda_reg: f64,
) -> (DMatrix<f64>, DVector<f64>) {
    let (rows, cols) = c.shape();
    let root = lambda_reg.sqrt();
    let mut c_aug = DMatrix::zeros(rows + cols, cols);
    c_aug.view_mut((0, 0), (rows, cols)).copy_from(c);
    for j in 0..cols {
        c_aug[(rows + j, j)] = root;
    }
    let mut d_aug = DVector::zeros(rows + cols);
    d_aug.rows_mut(0, rows).copy_from(d);
    for j in 0..cols {
        d_aug[rows + j] = root * x_prev[j];
    }
    (c_aug, d_aug)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    /// Exhaustive oracle: least squares on every support, keep the best
    /// feasible one.
    fn brute_force(c: &DMatrix<f64>, d: &DVector<f64>) -> f64 {
        let n = c.ncols();
        let mut best = d.norm_squared();
        for mask in 1u32..(1 << n) {
            let support: Vec<bool> = (0..n).map(|j| mask & (1 << j) != 0).collect();
            let z = passive_solve(c, d, &support);
            if z.iter().all(|&v| v >= 0.0) {
                best = best.min((c * &z - d).norm_squared());
            }
        }
        best
    }

    fn random_instance(
        rng: &mut ChaCha8Rng,
        rows: usize,
        cols: usize,
    ) -> (DMatrix<f64>, DVector<f64>) {
        let c = DMatrix::from_fn(rows, cols, |_, _| rng.random_range(-1.0..1.0));
        let d = DVector::from_fn(rows, |_, _| rng.random_range(-1.0..1.0));
        (c, d)
    }

    #[test]
    fn identity_design_projects() {
        let c = DMatrix::identity(2, 2);
        let d = DVector::from_vec(vec![3.0, -2.0]);
        let r = nnls(&c, &d, KKT_TOLERANCE).unwrap();
        assert_eq!(r.x, vec![3.0, 0.0]);
    }

    #[test]
    fn zero_target_gives_zero() {
        let c = DMatrix::from_row_slice(2, 2, &[1.0, 2.0, 3.0, 4.0]);
        let r = nnls(&c, &DVector::zeros(2), KKT_TOLERANCE).unwrap();
        assert_eq!(r.x, vec![0.0, 0.0]);
    }

    #[test]
    fn matches_exhaustive_enumeration() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        for _ in 0..100 {
            let (c, d) = random_instance(&mut rng, 6, 4);
            let r = nnls(&c, &d, KKT_TOLERANCE).unwrap();
            assert!(r.x.iter().all(|&v| v >= 0.0));
            assert!((r.objective(&c, &d) - brute_force(&c, &d)).abs() <= 1e-8);
            assert!(r.kkt_residual <= KKT_TOLERANCE);
        }
    }

    #[test]
    fn dimension_mismatch_rejected() {
        let c = DMatrix::<f64>::zeros(3, 2);
        assert!(nnls(&c, &DVector::zeros(2), KKT_TOLERANCE).is_err());
    }

    #[test]
    fn zero_weight_is_plain_nnls() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let (c, d) = random_instance(&mut rng, 6, 4);
        let plain = nnls(&c, &d, KKT_TOLERANCE).unwrap();
        let reg = nnls_regularized(&c, &d, &[1.0; 4], 0.0, KKT_TOLERANCE).unwrap();
        assert_eq!(plain, reg);
    }

    #[test]
    fn pure_penalty_returns_prior() {
        let c = DMatrix::<f64>::zeros(3, 2);
        let prior = [0.25, 1.5];
        let r = nnls_regularized(&c, &DVector::zeros(3), &prior, 1e-5, KKT_TOLERANCE).unwrap();
        for (x, p) in r.x.iter().zip(prior) {
            assert!((x - p).abs() < 1e-12);
        }
    }

    #[test]
    fn heavy_penalty_pins_to_prior() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let (c, d) = random_instance(&mut rng, 8, 3);
        let prior = [0.3, 0.0, 0.7];
        let r = nnls_regularized(&c, &d, &prior, 1e9, KKT_TOLERANCE).unwrap();
        let dist: f64 =
            r.x.iter()
                .zip(prior)
                .map(|(x, p)| (x - p).powi(2))
                .sum::<f64>()
                .sqrt();
        assert!(dist <= 1e-3);
    }

    #[test]
    fn augmentation_identity() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let (c, d) = random_instance(&mut rng, 6, 4);
        let prior = [0.1, 0.2, 0.0, 0.4];
        let reg = nnls_regularized(&c, &d, &prior, 0.5, KKT_TOLERANCE).unwrap();
        let (ca, da) = augment(&c, &d, &prior, 0.5);
        let stacked = nnls(&ca, &da, KKT_TOLERANCE).unwrap();
        assert!((reg.objective(&ca, &da) - stacked.objective(&ca, &da)).abs() <= 1e-12);
    }

    #[test]
    fn negative_prior_rejected() {
        let c = DMatrix::<f64>::identity(2, 2);
        assert!(
            nnls_regularized(&c, &DVector::zeros(2), &[0.0, -1.0], 1.0, KKT_TOLERANCE).is_err()
        );
    }

    proptest! {
        #[test]
        fn kkt_certificate_holds(seed in any::<u64>(), rows in 1usize..10, cols in 1usize..6) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let (c, d) = random_instance(&mut rng, rows, cols);
            let r = nnls(&c, &d, KKT_TOLERANCE).unwrap();
            prop_assert!(r.x.iter().all(|&v| v >= 0.0));
            prop_assert!(r.kkt_residual <= KKT_TOLERANCE);
        }

        #[test]
        fn common_rescaling_is_harmless(seed in any::<u64>(), scale in 1e-4f64..1e3) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let (c, d) = random_instance(&mut rng, 6, 4);
            let base = nnls(&c, &d, KKT_TOLERANCE).unwrap();
            let scaled = nnls(&(&c * scale), &(&d * scale), KKT_TOLERANCE).unwrap();
            for (a, b) in base.x.iter().zip(&scaled.x) {
                prop_assert!((a - b).abs() <= 1e-8 * (1.0 + a.abs()));
            }
        }
    }
}
