//! Linear regression of the one-day map on observed fractions, and its
//! nonnegative solves.

mod nnls;

pub use nnls::{augment, kkt_residual, nnls, nnls_regularized, NnlsReport, KKT_TOLERANCE};

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{iterate_discrete, GroupFractions, GroupMatrix, ModelParams, Trajectory};

/// Default weight of the pull toward the previous phase estimate.
pub const DEFAULT_LAMBDA_REG: f64 = 1e-5;

/// Column layout of the parameter vector.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Layout {
    /// `A` row-major, then `gamma`.
    ContactThenRecovery,
}

#[derive(Clone, Debug, PartialEq)]
pub struct RegressionSystem {
    pub c: DMatrix<f64>,
    pub d: DVector<f64>,
    pub m: usize,
    pub layout: Layout,
}

impl RegressionSystem {
    pub fn is_degenerate(&self) -> bool {
        self.c.iter().all(|&v| v == 0.0)
    }
}

pub fn parameter_len(m: usize) -> usize {
    m * m + m
}

pub fn pack(params: &ModelParams) -> Vec<f64> {
    let mut x = params.contact().as_slice().to_vec();
    x.extend_from_slice(params.recovery());
    x
}

pub fn unpack(x: &[f64], m: usize) -> Result<ModelParams> {
    if x.len() != parameter_len(m) {
        return Err(Error::DimensionMismatch(format!(
            "parameter vector has {} entries, expected {}",
            x.len(),
            parameter_len(m)
        )));
    }
    ModelParams::mean_field(
        GroupMatrix::from_row_major(m, &x[..m * m])?,
        x[m * m..].to_vec(),
    )
}

fn check_unit_spacing(traj: &Trajectory, k0: usize, k1: usize) -> Result<()> {
    for k in k0 + 1..=k1 {
        if ((traj.times[k] - traj.times[k - 1]) - 1.0).abs() > 1e-9 {
            return Err(Error::NonUnitSpacing {
                index: k,
                time: traj.times[k],
            });
        }
    }
    Ok(())
}

/// Stacks the one-day equations for days `k0..k1` (using samples up to `k1`).
/// Rows run over days, then groups, then (s, beta, r).
pub fn build_regression(traj: &Trajectory, k0: usize, k1: usize) -> Result<RegressionSystem> {
    if k1 <= k0 || k1 >= traj.len() {
        return Err(Error::WindowOutOfRange {
            k0,
            k1,
            len: traj.len(),
        });
    }
    check_unit_spacing(traj, k0, k1)?;
    let m = traj.groups();
    let days = k1 - k0;
    let rows = 3 * m * days;
    let mut c = DMatrix::zeros(rows, parameter_len(m));
    let mut d = DVector::zeros(rows);
    for (step, k) in (k0..k1).enumerate() {
        let (now, next) = (&traj.states[k], &traj.states[k + 1]);
        for i in 0..m {
            let row = (step * m + i) * 3;
            for j in 0..m {
                let coupling = now.s[i] * now.beta[j];
                c[(row, i * m + j)] = -coupling;
                c[(row + 1, i * m + j)] = coupling;
            }
            c[(row + 1, m * m + i)] = -now.beta[i];
            c[(row + 2, m * m + i)] = now.beta[i];
            d[row] = next.s[i] - now.s[i];
            d[row + 1] = next.beta[i] - now.beta[i];
            d[row + 2] = next.r[i] - now.r[i];
        }
    }
    Ok(RegressionSystem {
        c,
        d,
        m,
        layout: Layout::ContactThenRecovery,
    })
}

/// Free run of the discrete map from `anchor` under parameters `x`.
pub fn generated_trajectory(x: &[f64], anchor: &GroupFractions, days: usize) -> Result<Trajectory> {
    if let Some(index) = x.iter().position(|&v| v < 0.0) {
        return Err(Error::NegativeEntry {
            field: "parameter vector",
            index,
            value: x[index],
        });
    }
    let params = unpack(x, anchor.groups())?;
    iterate_discrete(&params, anchor, days)
}

/// Unchecked free run, so the error measure is defined for any `x`.
fn free_run(x: &[f64], anchor: &GroupFractions, days: usize) -> Vec<GroupFractions> {
    let m = anchor.groups();
    let mut states = vec![anchor.clone()];
    for _ in 0..days {
        let cur = states.last().expect("nonempty");
        let mut next = cur.clone();
        for i in 0..m {
            let flux: f64 = cur.s[i] * (0..m).map(|j| x[i * m + j] * cur.beta[j]).sum::<f64>();
            let recovered = x[m * m + i] * cur.beta[i];
            next.s[i] = cur.s[i] - flux;
            next.beta[i] = cur.beta[i] + flux - recovered;
            next.r[i] = cur.r[i] + recovered;
        }
        states.push(next);
    }
    states
}

/// Mean squared deviation between `window` and the free run anchored at
/// its first sample, over all (group, day, compartment) entries.
pub fn mse(window: &Trajectory, x: &[f64]) -> f64 {
    let m = window.groups();
    let generated = free_run(x, &window.states[0], window.len() - 1);
    let mut total = 0.0;
    for (data, model) in window.states.iter().zip(&generated) {
        for i in 0..m {
            total += (data.s[i] - model.s[i]).powi(2)
                + (data.beta[i] - model.beta[i]).powi(2)
                + (data.r[i] - model.r[i]).powi(2);
        }
    }
    total / (3 * m * window.len()) as f64
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PhaseEstimate {
    pub phase_index: usize,
    pub start_day: usize,
    pub end_day: usize,
    #[serde(rename = "A")]
    pub contact: GroupMatrix,
    pub gamma: Vec<f64>,
    pub residual_norm: f64,
    pub kkt_residual: f64,
    pub degenerate: bool,
}

/// Sample-index spans `[start, end]` of the phases cut by `boundaries`.
pub fn phase_spans(len: usize, boundaries: &[usize]) -> Result<Vec<(usize, usize)>> {
    let last = len.saturating_sub(1);
    let mut spans = Vec::with_capacity(boundaries.len() + 1);
    let mut start = 0;
    for &b in boundaries.iter().chain(std::iter::once(&last)) {
        if b < start + 2 || b > last {
            return Err(Error::PhaseTooShort { start, end: b });
        }
        spans.push((start, b));
        start = b;
    }
    Ok(spans)
}

/// One estimate per phase; later phases are pulled toward their predecessor.
pub fn estimate_per_phase(
    data: &Trajectory,
    boundaries: &[usize],
    lambda_reg: f64,
) -> Result<Vec<PhaseEstimate>> {
    let m = data.groups();
    let mut estimates: Vec<PhaseEstimate> = Vec::new();
    let mut previous: Option<Vec<f64>> = None;
    for (index, (start, end)) in phase_spans(data.len(), boundaries)?.into_iter().enumerate() {
        let sys = build_regression(data, start, end)?;
        let report = match &previous {
            None => nnls(&sys.c, &sys.d, KKT_TOLERANCE)?,
            Some(prev) => nnls_regularized(&sys.c, &sys.d, prev, lambda_reg, KKT_TOLERANCE)?,
        };
        estimates.push(PhaseEstimate {
            phase_index: index,
            start_day: start,
            end_day: end,
            contact: GroupMatrix::from_row_major(m, &report.x[..m * m])?,
            gamma: report.x[m * m..].to_vec(),
            residual_norm: report.residual_norm,
            kkt_residual: report.kkt_residual,
            degenerate: sys.is_degenerate(),
        });
        previous = Some(report.x);
    }
    Ok(estimates)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn two_group() -> (ModelParams, GroupFractions) {
        let params = ModelParams::mean_field(
            GroupMatrix::from_rows(&[vec![0.3, 0.1], vec![0.15, 0.25]]).unwrap(),
            vec![0.1, 0.12],
        )
        .unwrap();
        let init =
            GroupFractions::new(vec![0.58, 0.38], vec![0.02, 0.01], vec![0.0, 0.01]).unwrap();
        (params, init)
    }

    #[test]
    fn hand_matrix_single_day() {
        let params =
            ModelParams::mean_field(GroupMatrix::from_rows(&[vec![2.0]]).unwrap(), vec![1.0])
                .unwrap();
        let init = GroupFractions::new(vec![0.9], vec![0.1], vec![0.0]).unwrap();
        let traj = iterate_discrete(&params, &init, 1).unwrap();
        let sys = build_regression(&traj, 0, 1).unwrap();
        let want = DMatrix::from_row_slice(3, 2, &[-0.09, 0.0, 0.09, -0.1, 0.0, 0.1]);
        assert!((sys.c - want).amax() < 1e-15);
    }

    #[test]
    fn noiseless_data_satisfies_system() {
        let (params, init) = two_group();
        let traj = iterate_discrete(&params, &init, 20).unwrap();
        let sys = build_regression(&traj, 3, 17).unwrap();
        let x = DVector::from_vec(pack(&params));
        assert!((&sys.c * x - &sys.d).amax() < 1e-12);
        assert!(sys.c.iter().all(|v| v.abs() <= 1.0));
    }

    #[test]
    fn disease_free_window_is_zero() {
        let (params, _) = two_group();
        let init = GroupFractions::new(vec![0.5, 0.5], vec![0.0, 0.0], vec![0.0, 0.0]).unwrap();
        let traj = iterate_discrete(&params, &init, 5).unwrap();
        let sys = build_regression(&traj, 0, 5).unwrap();
        assert!(sys.is_degenerate());
        assert!(sys.d.iter().all(|&v| v == 0.0));
        let est = estimate_per_phase(&traj, &[], DEFAULT_LAMBDA_REG).unwrap();
        assert!(est[0].degenerate);
        assert!(est[0].gamma.iter().all(|&g| g == 0.0));
    }

    #[test]
    fn window_errors() {
        let (params, init) = two_group();
        let traj = iterate_discrete(&params, &init, 5).unwrap();
        assert!(matches!(
            build_regression(&traj, 2, 2),
            Err(Error::WindowOutOfRange { .. })
        ));
        assert!(matches!(
            build_regression(&traj, 0, 6),
            Err(Error::WindowOutOfRange { .. })
        ));
        let mut stretched = traj.clone();
        stretched.times[3] = 3.5;
        assert!(matches!(
            build_regression(&stretched, 0, 5),
            Err(Error::NonUnitSpacing { index: 3, .. })
        ));
    }

    #[test]
    fn exact_recovery_over_sixty_days() {
        let (params, init) = two_group();
        let traj = iterate_discrete(&params, &init, 60).unwrap();
        let est = estimate_per_phase(&traj, &[], DEFAULT_LAMBDA_REG).unwrap();
        assert_eq!(est.len(), 1);
        let truth = pack(&params);
        let mut got = est[0].contact.as_slice().to_vec();
        got.extend(&est[0].gamma);
        for (g, t) in got.iter().zip(&truth) {
            assert!((g - t).abs() <= 1e-6 * t.abs());
        }
        assert!(est[0].kkt_residual <= KKT_TOLERANCE);
    }

    #[test]
    fn identical_phases_agree() {
        let (params, init) = two_group();
        let traj = iterate_discrete(&params, &init, 60).unwrap();
        let est = estimate_per_phase(&traj, &[30], DEFAULT_LAMBDA_REG).unwrap();
        assert_eq!(
            (
                est[0].start_day,
                est[0].end_day,
                est[1].start_day,
                est[1].end_day
            ),
            (0, 30, 30, 60)
        );
        for (a, b) in est[0]
            .contact
            .as_slice()
            .iter()
            .zip(est[1].contact.as_slice())
        {
            assert!((a - b).abs() <= 1e-6 * a.abs());
        }
    }

    #[test]
    fn short_phase_rejected() {
        let (params, init) = two_group();
        let traj = iterate_discrete(&params, &init, 30).unwrap();
        assert!(matches!(
            estimate_per_phase(&traj, &[10, 11], DEFAULT_LAMBDA_REG),
            Err(Error::PhaseTooShort { start: 10, end: 11 })
        ));
    }

    #[test]
    fn mse_cases() {
        let (params, init) = two_group();
        let traj = iterate_discrete(&params, &init, 10).unwrap();
        assert!(mse(&traj, &pack(&params)) <= 1e-20);

        let params1 =
            ModelParams::mean_field(GroupMatrix::from_rows(&[vec![0.0]]).unwrap(), vec![0.0])
                .unwrap();
        let anchor = GroupFractions::new(vec![0.5], vec![0.2], vec![0.3]).unwrap();
        let mut window = iterate_discrete(&params1, &anchor, 1).unwrap();
        window.states[1].s[0] += 0.1;
        assert!((mse(&window, &[0.0, 0.0]) - 0.01 / 6.0).abs() < 1e-18);
    }

    #[test]
    fn generated_trajectory_matches_iteration() {
        let (params, init) = two_group();
        let a = generated_trajectory(&pack(&params), &init, 7).unwrap();
        assert_eq!(a, iterate_discrete(&params, &init, 7).unwrap());
        assert!(generated_trajectory(&[-1.0, 0.0, 0.0, 0.0, 0.0, 0.0], &init, 1).is_err());
    }

    proptest! {
        #[test]
        fn recovery_from_generic_parameters(
            a in proptest::collection::vec(0.05f64..0.6, 4),
            g in proptest::collection::vec(0.05f64..0.3, 2),
        ) {
            let params = ModelParams::mean_field(GroupMatrix::from_row_major(2, &a).unwrap(), g).unwrap();
            let init = GroupFractions::new(vec![0.55, 0.4], vec![0.03, 0.02], vec![0.0, 0.0]).unwrap();
            let traj = iterate_discrete(&params, &init, 40).unwrap();
            let sys = build_regression(&traj, 0, 40).unwrap();
            let r = nnls(&sys.c, &sys.d, KKT_TOLERANCE).unwrap();
            for (got, want) in r.x.iter().zip(pack(&params)) {
                prop_assert!((got - want).abs() <= 1e-6 * want);
            }
        }
    }
}
