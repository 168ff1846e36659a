//! Sliding-window change detection on contact-rate estimates.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::estimation::{build_regression, mse, nnls, NnlsReport, KKT_TOLERANCE};
use crate::model::Trajectory;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PhaseConfig {
    pub w: usize,
    pub dp: usize,
    pub eps: f64,
    pub delta: f64,
    pub min_phase: usize,
    /// Error gaps at or below this count as no change when the
    /// unconstrained fit is exact.
    pub zero_floor: f64,
}

impl Default for PhaseConfig {
    fn default() -> Self {
        Self {
            w: 30,
            dp: 5,
            eps: 1e-4,
            delta: 3.0,
            min_phase: 20,
            zero_floor: 1e-15,
        }
    }
}

impl PhaseConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.w > self.dp && self.dp > 0) {
            return Err(Error::Config(format!(
                "need w > dp > 0, got w = {}, dp = {}",
                self.w, self.dp
            )));
        }
        if !(self.eps > 0.0 && self.eps.is_finite()) {
            return Err(Error::Config(format!(
                "eps must be positive, got {}",
                self.eps
            )));
        }
        if !(self.delta > 0.0) {
            return Err(Error::Config(format!(
                "delta must be positive, got {}",
                self.delta
            )));
        }
        if !(self.zero_floor >= 0.0) {
            return Err(Error::Config(format!(
                "zero_floor must be >= 0, got {}",
                self.zero_floor
            )));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct WindowResult {
    pub p: usize,
    #[serde(rename = "E_a")]
    pub e_a: f64,
    #[serde(rename = "E_b")]
    pub e_b: f64,
    /// `None` encodes an infinite ratio (exact unconstrained fit, inexact
    /// constrained one).
    pub ratio: Option<f64>,
    pub flagged: bool,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct PhaseReport {
    pub boundaries: Vec<usize>,
    pub windows: Vec<WindowResult>,
}

const DYKSTRA_MAX: usize = 2000;
const GRADIENT_MAX: usize = 50_000;

fn project_ball(x: &DVector<f64>, center: &DVector<f64>, radius: f64) -> DVector<f64> {
    let offset = x - center;
    let dist = offset.norm();
    if dist <= radius {
        x.clone()
    } else {
        center + offset * (radius / dist)
    }
}

/// Dykstra's alternating projections onto the orthant and the ball.
fn project(y: &DVector<f64>, center: &DVector<f64>, radius: f64) -> DVector<f64> {
    let n = y.len();
    let mut x = y.clone();
    let mut p = DVector::zeros(n);
    let mut q = DVector::zeros(n);
    for _ in 0..DYKSTRA_MAX {
        let a = (&x + &p).map(|v| v.max(0.0));
        p = &x + &p - &a;
        let b = project_ball(&(&a + &q), center, radius);
        q = &a + &q - &b;
        let change = (&b - &x).norm();
        x = b;
        if change <= 1e-14 * (1.0 + x.norm()) {
            break;
        }
    }
    // The ball center is in the orthant, so clamping keeps ball membership.
    project_ball(&x, center, radius).map(|v| v.max(0.0))
}

/// `min ||Cx - d||^2` over `x >= 0, ||x - center|| <= radius` by
/// accelerated projected gradient with adaptive restart.
pub fn solve_constrained(
    c: &DMatrix<f64>,
    d: &DVector<f64>,
    center: &[f64],
    radius: f64,
) -> Result<NnlsReport> {
    if c.nrows() != d.len() || c.ncols() != center.len() {
        return Err(Error::DimensionMismatch(format!(
            "design {}x{}, target {}, center {}",
            c.nrows(),
            c.ncols(),
            d.len(),
            center.len()
        )));
    }
    if !(radius >= 0.0) || !radius.is_finite() {
        return Err(Error::InvalidParams(format!(
            "radius {radius} must be >= 0"
        )));
    }
    if let Some(index) = center.iter().position(|&v| v < 0.0) {
        return Err(Error::NegativeEntry {
            field: "center",
            index,
            value: center[index],
        });
    }
    let center = DVector::from_column_slice(center);
    let h = c.transpose() * c;
    let q = c.transpose() * d;
    let lipschitz = 2.0 * h.symmetric_eigenvalues().max();
    let objective = |x: &DVector<f64>| (c * x - d).norm_squared();
    let mut x = center.clone();
    let mut iterations = 0;
    if radius > 0.0 && lipschitz > 0.0 {
        let mut y = x.clone();
        let mut t = 1.0_f64;
        let mut f_x = objective(&x);
        while iterations < GRADIENT_MAX {
            iterations += 1;
            let grad = (&h * &y - &q) * 2.0;
            let next = project(&(&y - grad / lipschitz), &center, radius);
            let f_next = objective(&next);
            let step = (&next - &x).norm();
            if f_next > f_x && t > 1.0 {
                // Restart momentum from the current iterate.
                y = x.clone();
                t = 1.0;
                continue;
            }
            let t_next = (1.0 + (1.0 + 4.0 * t * t).sqrt()) / 2.0;
            y = &next + (&next - &x) * ((t - 1.0) / t_next);
            t = t_next;
            x = next;
            f_x = f_next;
            if step <= 1e-13 * (1.0 + x.norm()) {
                break;
            }
        }
    }
    let distance = (&x - &center).norm();
    if distance > radius * (1.0 + 1e-9) || x.iter().any(|&v| v < -1e-12) {
        return Err(Error::Infeasible { distance, radius });
    }
    Ok(NnlsReport::from_solution(c, d, x, iterations))
}

fn ratio(e_a: f64, e_b: f64, floor: f64) -> Option<f64> {
    let gap = (e_b - e_a).abs();
    if gap <= floor {
        Some(0.0)
    } else if e_a == 0.0 {
        None
    } else {
        Some(gap / e_a)
    }
}

/// Deletes, in ascending order, every boundary that ends a phase no
/// longer than `min_phase`.
pub fn merge_short_phases(flags: &[usize], min_phase: usize) -> Vec<usize> {
    let mut sorted = flags.to_vec();
    sorted.sort_unstable();
    sorted.dedup();
    let mut start = 0;
    let mut kept = Vec::new();
    for p in sorted {
        if p - start > min_phase {
            kept.push(p);
            start = p;
        }
    }
    kept
}

pub fn detect_phases(data: &Trajectory, cfg: &PhaseConfig) -> Result<PhaseReport> {
    cfg.validate()?;
    let needed = cfg.w + cfg.dp + 1;
    if data.len() < needed {
        return Err(Error::DataTooShort {
            len: data.len(),
            needed,
        });
    }
    let last = data.len() - 1;
    let unconstrained = |p: usize| -> Result<Vec<f64>> {
        let sys = build_regression(data, p, p + cfg.w)?;
        Ok(nnls(&sys.c, &sys.d, KKT_TOLERANCE)?.x)
    };
    let mut previous = unconstrained(0)?;
    let mut windows = Vec::new();
    let mut p = cfg.dp;
    while p + cfg.w <= last {
        let sys = build_regression(data, p, p + cfg.w)?;
        let window = data.slice(p, p + cfg.w)?;
        let x_a = nnls(&sys.c, &sys.d, KKT_TOLERANCE)?.x;
        let radius = cfg.eps * previous.iter().map(|v| v * v).sum::<f64>().sqrt();
        let x_b = solve_constrained(&sys.c, &sys.d, &previous, radius)?.x;
        let e_a = mse(&window, &x_a);
        let e_b = mse(&window, &x_b);
        let r = ratio(e_a, e_b, cfg.zero_floor);
        windows.push(WindowResult {
            p,
            e_a,
            e_b,
            ratio: r,
            flagged: r.is_none_or(|v| v > cfg.delta),
        });
        previous = x_a;
        p += cfg.dp;
    }
    let flags: Vec<usize> = windows.iter().filter(|w| w.flagged).map(|w| w.p).collect();
    Ok(PhaseReport {
        boundaries: merge_short_phases(&flags, cfg.min_phase),
        windows,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::estimation::NnlsReport;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn objective(r: &NnlsReport, c: &DMatrix<f64>, d: &DVector<f64>) -> f64 {
        r.objective(c, d)
    }

    #[test]
    fn zero_radius_returns_center() {
        let c = DMatrix::from_row_slice(2, 2, &[1.0, 0.0, 0.0, 1.0]);
        let d = DVector::from_vec(vec![5.0, 5.0]);
        let r = solve_constrained(&c, &d, &[0.5, 0.25], 0.0).unwrap();
        assert_eq!(r.x, vec![0.5, 0.25]);
    }

    #[test]
    fn loose_ball_matches_nnls() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..20 {
            let c = DMatrix::from_fn(6, 4, |_, _| rng.random_range(-1.0..1.0));
            let d = DVector::from_fn(6, |_, _| rng.random_range(-1.0..1.0));
            let free = nnls(&c, &d, KKT_TOLERANCE).unwrap();
            let center = vec![0.1; 4];
            let dist: f64 = free.x.iter().map(|v| (v - 0.1).powi(2)).sum::<f64>().sqrt();
            let r = solve_constrained(&c, &d, &center, dist + 1.0).unwrap();
            assert!((objective(&r, &c, &d) - objective(&free, &c, &d)).abs() <= 1e-6);
        }
    }

    #[test]
    fn two_variable_grid_oracle() {
        let c = DMatrix::from_row_slice(3, 2, &[1.0, 2.0, -0.5, 1.0, 0.3, -1.2]);
        let d = DVector::from_vec(vec![2.0, -1.0, 1.5]);
        let center = [0.2, 0.1];
        let radius = 0.5;
        let r = solve_constrained(&c, &d, &center, radius).unwrap();
        let mut best = f64::INFINITY;
        let steps = (2.0 * radius / 1e-3) as i64;
        for a in 0..=steps {
            for b in 0..=steps {
                let x = [
                    center[0] - radius + a as f64 * 1e-3,
                    center[1] - radius + b as f64 * 1e-3,
                ];
                if x[0] < 0.0 || x[1] < 0.0 {
                    continue;
                }
                if ((x[0] - center[0]).powi(2) + (x[1] - center[1]).powi(2)).sqrt() > radius {
                    continue;
                }
                best = best.min((&c * DVector::from_column_slice(&x) - &d).norm_squared());
            }
        }
        let got = objective(&r, &c, &d);
        assert!(got <= best + 1e-9);
        assert!((got - best).abs() <= 2e-3);
    }

    #[test]
    fn solutions_are_feasible() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..50 {
            let c = DMatrix::from_fn(5, 3, |_, _| rng.random_range(-1.0..1.0));
            let d = DVector::from_fn(5, |_, _| rng.random_range(-3.0..3.0));
            let center: Vec<f64> = (0..3).map(|_| rng.random_range(0.0..0.5)).collect();
            let radius = rng.random_range(0.0..1.0);
            let r = solve_constrained(&c, &d, &center, radius).unwrap();
            let dist: f64 =
                r.x.iter()
                    .zip(&center)
                    .map(|(x, c)| (x - c).powi(2))
                    .sum::<f64>()
                    .sqrt();
            assert!(dist <= radius * (1.0 + 1e-9));
            assert!(r.x.iter().all(|&v| v >= -1e-12));
        }
    }

    #[test]
    fn negative_center_rejected() {
        let c = DMatrix::<f64>::identity(2, 2);
        assert!(solve_constrained(&c, &DVector::zeros(2), &[-0.1, 0.0], 1.0).is_err());
    }

    #[test]
    fn merge_scans_ascending() {
        assert_eq!(merge_short_phases(&[60], 20), vec![60]);
        assert_eq!(merge_short_phases(&[20, 45, 50, 70], 20), vec![45, 70]);
        assert_eq!(merge_short_phases(&[70, 21, 30], 20), vec![21, 70]);
        assert!(merge_short_phases(&[5, 10, 15], 20).is_empty());
    }

    #[test]
    fn ratio_rules() {
        assert_eq!(ratio(0.0, 0.0, 1e-15), Some(0.0));
        assert_eq!(ratio(0.0, 1e-16, 1e-15), Some(0.0));
        assert_eq!(ratio(0.0, 1e-10, 1e-15), None);
        assert_eq!(ratio(1e-10, 5e-10, 1e-15), Some(4.0));
    }

    #[test]
    fn config_validation() {
        assert!(PhaseConfig::default().validate().is_ok());
        let bad = PhaseConfig {
            dp: 30,
            ..PhaseConfig::default()
        };
        assert!(bad.validate().is_err());
    }
}
