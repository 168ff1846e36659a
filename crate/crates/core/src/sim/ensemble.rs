use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{init_network, simulate, SimConfig, SimMode};
use crate::error::{Error, Result};
use crate::model::{GroupFractions, ModelParams, Trajectory};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct InitSpec {
    pub initial_infected: Vec<u64>,
    pub mode: SimMode,
}

#[derive(Clone, Debug)]
pub struct EnsembleSummary {
    pub mean: Trajectory,
    /// Unbiased per-sample variance, laid out like the mean (entries are
    /// variances, not fractions).
    pub variance: Vec<GroupFractions>,
    pub finals: Vec<GroupFractions>,
}

/// `runs` independent simulations with seeds `base_seed + r`, returned in
/// run order regardless of scheduling.
pub fn ensemble_runs(
    params: &ModelParams,
    init: &InitSpec,
    runs: usize,
    t_end: f64,
    sample_dt: f64,
    base_seed: u64,
) -> Result<Vec<Trajectory>> {
    if runs == 0 {
        return Err(Error::InvalidParams(
            "ensemble needs at least one run".into(),
        ));
    }
    let config = SimConfig {
        t_end,
        sample_dt,
        record_events: false,
    };
    (0..runs as u64)
        .into_par_iter()
        .map(|r| {
            let mut state = init_network(
                params,
                &init.initial_infected,
                base_seed.wrapping_add(r),
                init.mode,
            )?;
            Ok(simulate(&mut state, params, &config)?.trajectory)
        })
        .collect()
}

pub fn ensemble(
    params: &ModelParams,
    init: &InitSpec,
    runs: usize,
    t_end: f64,
    sample_dt: f64,
    base_seed: u64,
) -> Result<EnsembleSummary> {
    let trajectories = ensemble_runs(params, init, runs, t_end, sample_dt, base_seed)?;
    Ok(summarize(&trajectories))
}

pub(crate) fn summarize(trajectories: &[Trajectory]) -> EnsembleSummary {
    let first = &trajectories[0];
    let m = first.groups();
    let count = trajectories.len() as f64;
    let mut means = Vec::with_capacity(first.len());
    let mut variances = Vec::with_capacity(first.len());
    for k in 0..first.len() {
        let mut mean = GroupFractions::zeros(m);
        for traj in trajectories {
            let st = &traj.states[k];
            for i in 0..m {
                mean.s[i] += st.s[i];
                mean.beta[i] += st.beta[i];
                mean.r[i] += st.r[i];
            }
        }
        for v in mean.s.iter_mut().chain(&mut mean.beta).chain(&mut mean.r) {
            *v /= count;
        }
        let mut var = GroupFractions::zeros(m);
        if trajectories.len() > 1 {
            for traj in trajectories {
                let st = &traj.states[k];
                for i in 0..m {
                    var.s[i] += (st.s[i] - mean.s[i]).powi(2);
                    var.beta[i] += (st.beta[i] - mean.beta[i]).powi(2);
                    var.r[i] += (st.r[i] - mean.r[i]).powi(2);
                }
            }
            for v in var.s.iter_mut().chain(&mut var.beta).chain(&mut var.r) {
                *v /= count - 1.0;
            }
        }
        means.push(mean);
        variances.push(var);
    }
    EnsembleSummary {
        mean: Trajectory {
            times: first.times.clone(),
            states: means,
        },
        variance: variances,
        finals: trajectories.iter().map(|t| t.last().clone()).collect(),
    }
}
