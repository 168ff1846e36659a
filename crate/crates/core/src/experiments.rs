//! Monte-Carlo checks of the network chain against its mean-field limit
//! and of the edge process on its own.

use std::io::Write;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{
    integrate_ode, write_rows, GroupFractions, GroupMatrix, ModelParams, Trajectory,
};
use crate::sim::{ensemble_runs, init_network, simulate, EventKind, InitSpec, SimConfig, SimMode};
use crate::stats;

/// ODE substeps per sample interval are chosen so the step is at most this.
pub const ODE_MAX_STEP: f64 = 0.01;
pub const BOOTSTRAP_RESAMPLES: usize = 1000;

/// ODE solution sampled every `sample_dt` up to `t_end`, integrated with
/// the largest step not above `max_step` that divides `sample_dt`.
pub fn ode_reference(
    params: &ModelParams,
    init: &GroupFractions,
    t_end: f64,
    sample_dt: f64,
    max_step: f64,
) -> Result<Trajectory> {
    let per_sample = (sample_dt / max_step - 1e-9).ceil().max(1.0) as usize;
    let dt = sample_dt / per_sample as f64;
    let samples = (t_end / sample_dt + 1e-9).floor() as usize;
    let fine = integrate_ode(params, init, samples as f64 * sample_dt, dt)?;
    let states: Vec<GroupFractions> = fine.states.iter().step_by(per_sample).cloned().collect();
    let times = (0..states.len()).map(|k| k as f64 * sample_dt).collect();
    Ok(Trajectory { times, states })
}

/// Per (sample, group) mean over runs of the squared (s, beta) distance to
/// the reference, then the maximum. `runs` are selected through `pick`.
fn max_mean_square(runs: &[Trajectory], pick: &[usize], reference: &Trajectory) -> f64 {
    let m = reference.groups();
    let len = reference.len().min(runs[0].len());
    let mut worst: f64 = 0.0;
    for k in 0..len {
        let target = &reference.states[k];
        for i in 0..m {
            let total: f64 = pick
                .iter()
                .map(|&r| {
                    let st = &runs[r].states[k];
                    (st.s[i] - target.s[i]).powi(2) + (st.beta[i] - target.beta[i]).powi(2)
                })
                .sum();
            worst = worst.max(total / pick.len() as f64);
        }
    }
    worst
}

/// Sup-in-time mean-square distance of `runs` from `reference`.
pub fn mean_square_gap(runs: &[Trajectory], reference: &Trajectory) -> f64 {
    let all: Vec<usize> = (0..runs.len()).collect();
    max_mean_square(runs, &all, reference)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConvergenceSetup {
    #[serde(rename = "B")]
    pub transmission: GroupMatrix,
    pub rho: GroupMatrix,
    pub gamma: Vec<f64>,
    /// Share of the population in each group.
    pub group_shares: Vec<f64>,
    /// Initially infected fraction of the whole population, per group.
    pub initial_infected: Vec<f64>,
    pub runs: usize,
    pub t_end: f64,
    pub sample_dt: f64,
    #[serde(default = "lazy_mode")]
    pub mode: SimMode,
    #[serde(default)]
    pub seed: u64,
}

fn lazy_mode() -> SimMode {
    SimMode::Lazy
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ConvergenceRow {
    pub n: u64,
    pub lambda: f64,
    #[serde(rename = "E_n")]
    pub e_n: f64,
    pub stderr: f64,
}

impl ConvergenceSetup {
    fn target_fractions(&self) -> Result<GroupFractions> {
        let total: f64 = self.group_shares.iter().sum();
        let shares: Vec<f64> = self.group_shares.iter().map(|s| s / total).collect();
        let s = shares
            .iter()
            .zip(&self.initial_infected)
            .map(|(a, b)| a - b)
            .collect();
        GroupFractions::new(s, self.initial_infected.clone(), vec![0.0; shares.len()])
    }

    /// Group sizes and infected counts for population `n`, rounded by
    /// largest remainder from the common target fractions.
    pub fn counts_for(&self, n: u64) -> (Vec<u64>, Vec<u64>) {
        let sizes = stats::largest_remainder(&self.group_shares, n);
        let infected_total = (self.initial_infected.iter().sum::<f64>() * n as f64).round() as u64;
        let infected = stats::largest_remainder(&self.initial_infected, infected_total)
            .into_iter()
            .zip(&sizes)
            .map(|(c, &size)| c.min(size))
            .collect();
        (sizes, infected)
    }
}

/// For each `n`, an ensemble at `lambda_rule(n)` compared to the ODE from
/// the common target fractions.
pub fn convergence_sweep(
    setup: &ConvergenceSetup,
    n_list: &[u64],
    lambda_rule: impl Fn(u64) -> f64,
) -> Result<Vec<ConvergenceRow>> {
    let contact = setup.rho.hadamard(&setup.transmission);
    let mean_field = ModelParams::mean_field(contact, setup.gamma.clone())?;
    let reference = ode_reference(
        &mean_field,
        &setup.target_fractions()?,
        setup.t_end,
        setup.sample_dt,
        ODE_MAX_STEP,
    )?;
    let mut rows = Vec::with_capacity(n_list.len());
    for (cell, &n) in n_list.iter().enumerate() {
        let lambda = lambda_rule(n);
        let (sizes, infected) = setup.counts_for(n);
        let params = ModelParams::network(
            setup.transmission.clone(),
            setup.rho.clone(),
            setup.gamma.clone(),
            lambda,
            sizes,
        )?;
        let init = InitSpec {
            initial_infected: infected,
            mode: setup.mode,
        };
        let cell_seed = setup.seed.wrapping_add((cell as u64) << 32);
        let runs = ensemble_runs(
            &params,
            &init,
            setup.runs,
            setup.t_end,
            setup.sample_dt,
            cell_seed,
        )?;
        let e_n = mean_square_gap(&runs, &reference);
        let mut rng = ChaCha8Rng::seed_from_u64(cell_seed ^ 0x5eed);
        let stderr = stats::bootstrap_stderr(runs.len(), BOOTSTRAP_RESAMPLES, &mut rng, |pick| {
            max_mean_square(&runs, pick, &reference)
        });
        rows.push(ConvergenceRow {
            n,
            lambda,
            e_n,
            stderr,
        });
    }
    Ok(rows)
}

pub fn write_convergence_csv<W: Write>(writer: W, rows: &[ConvergenceRow]) -> Result<()> {
    let header = ["n", "lambda", "E_n", "stderr"].map(String::from);
    let mut wtr = csv::Writer::from_writer(writer);
    wtr.write_record(&header)?;
    for row in rows {
        wtr.write_record([
            row.n.to_string(),
            crate::model::format_f64(row.lambda),
            crate::model::format_f64(row.e_n),
            crate::model::format_f64(row.stderr),
        ])?;
    }
    wtr.flush()?;
    Ok(())
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConverseSetup {
    pub params: crate::model::ParamsSpec,
    pub initial_infected: Vec<u64>,
    pub runs: usize,
    pub t1: f64,
    pub t2: f64,
    pub sample_dt: f64,
    #[serde(default)]
    pub group: usize,
    #[serde(default = "lazy_mode")]
    pub mode: SimMode,
    #[serde(default)]
    pub seed: u64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GapRow {
    pub t: f64,
    pub gap: f64,
    pub stderr: f64,
    pub z: f64,
}

/// Mean susceptible fraction of `group` minus its ODE value, on the sample
/// grid inside `[t1, t2]`. The ODE starts from the realized initial counts.
pub fn converse_gap(setup: &ConverseSetup) -> Result<Vec<GapRow>> {
    let params = setup.params.clone().validate()?;
    let sizes = params
        .group_sizes()
        .ok_or_else(|| Error::InvalidParams("converse experiment needs group_sizes".into()))?
        .to_vec();
    if setup.group >= params.groups() {
        return Err(Error::InvalidParams(format!(
            "group {} out of range",
            setup.group
        )));
    }
    if !(0.0 <= setup.t1 && setup.t1 <= setup.t2) {
        return Err(Error::InvalidParams(format!(
            "need 0 <= t1 <= t2, got [{}, {}]",
            setup.t1, setup.t2
        )));
    }
    if setup.initial_infected.len() != sizes.len()
        || setup
            .initial_infected
            .iter()
            .zip(&sizes)
            .any(|(a, b)| a > b)
    {
        return Err(Error::InvalidParams(
            "initial infected must fit the group sizes".into(),
        ));
    }
    let susceptible: Vec<u64> = sizes
        .iter()
        .zip(&setup.initial_infected)
        .map(|(n, i)| n - i)
        .collect();
    let init =
        GroupFractions::from_counts(&susceptible, &setup.initial_infected, &vec![0; sizes.len()]);
    let reference = ode_reference(&params, &init, setup.t2, setup.sample_dt, ODE_MAX_STEP)?;
    let window: Vec<usize> = (0..reference.len())
        .filter(|&k| reference.times[k] >= setup.t1 - 1e-9 && reference.times[k] <= setup.t2 + 1e-9)
        .collect();
    for &k in &window {
        let st = &reference.states[k];
        if let Some(i) = (0..st.groups()).find(|&i| st.s[i] <= 0.0 || st.beta[i] <= 0.0) {
            return Err(Error::InvalidParams(format!(
                "mean-field s or beta of group {i} is not positive at t = {}",
                reference.times[k]
            )));
        }
    }
    let init_spec = InitSpec {
        initial_infected: setup.initial_infected.clone(),
        mode: setup.mode,
    };
    let runs = ensemble_runs(
        &params,
        &init_spec,
        setup.runs,
        setup.t2,
        setup.sample_dt,
        setup.seed,
    )?;
    let i = setup.group;
    Ok(window
        .into_iter()
        .map(|k| {
            let values: Vec<f64> = runs.iter().map(|r| r.states[k].s[i]).collect();
            let gap = stats::mean(&values) - reference.states[k].s[i];
            let stderr = stats::standard_error(&values);
            // Count fractions are multiples of 1/n, so a real spread is far above 1e-14.
            let z = if stderr > 1e-14 {
                gap / stderr
            } else if gap.abs() <= 1e-12 {
                0.0
            } else {
                gap.signum() * f64::INFINITY
            };
            GapRow {
                t: reference.times[k],
                gap,
                stderr,
                z,
            }
        })
        .collect())
}

pub fn write_gap_csv<W: Write>(writer: W, rows: &[GapRow]) -> Result<()> {
    let header = ["t", "gap", "stderr", "z"].map(String::from);
    write_rows(
        writer,
        &header,
        rows.iter().map(|r| vec![r.t, r.gap, r.stderr, r.z]),
    )
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EdgeAgeReport {
    pub samples: usize,
    pub lambda: f64,
    pub t: f64,
    pub ks: f64,
    pub critical: f64,
    pub ks_pass: bool,
    pub atom_fraction: f64,
    pub atom_expected: f64,
    pub atom_sigma: f64,
    pub atom_pass: bool,
}

/// Coefficient of the 1% Kolmogorov critical value `c / sqrt(N)`.
pub const KS_COEFFICIENT_1PCT: f64 = 1.628;

/// Time since the last update of edge `pair = (target, source)` at time
/// `t`, or `t` if it was never updated, over independent dense runs.
pub fn edge_ages(
    params: &ModelParams,
    pair: (usize, usize),
    t: f64,
    samples: usize,
    seed: u64,
) -> Result<Vec<f64>> {
    let sizes = params
        .group_sizes()
        .ok_or_else(|| Error::InvalidParams("edge experiment needs group_sizes".into()))?;
    let n: u64 = sizes.iter().sum();
    if pair.0 == pair.1 || pair.0 as u64 >= n || pair.1 as u64 >= n {
        return Err(Error::InvalidParams(format!(
            "pair {pair:?} is not an ordered pair of distinct nodes"
        )));
    }
    let none = vec![0; sizes.len()];
    let config = SimConfig {
        t_end: t,
        sample_dt: t.max(f64::MIN_POSITIVE),
        record_events: true,
    };
    (0..samples as u64)
        .into_par_iter()
        .map(|s| {
            let mut state = init_network(params, &none, seed.wrapping_add(s), SimMode::Dense)?;
            let out = simulate(&mut state, params, &config)?;
            let last = out.events.iter().rev().find_map(|e| match e.kind {
                EventKind::EdgeUpdate { target, source, .. } if (target, source) == pair => {
                    Some(e.time)
                }
                _ => None,
            });
            Ok(last.map_or(t, |time| t - time))
        })
        .collect()
}

pub fn edge_age_distribution(
    params: &ModelParams,
    pair: (usize, usize),
    t: f64,
    samples: usize,
    seed: u64,
) -> Result<EdgeAgeReport> {
    let ages = edge_ages(params, pair, t, samples, seed)?;
    let lambda = params.edge_rate();
    let below = |x: f64| 1.0 - (-lambda * x.max(0.0)).exp();
    let cdf = |x: f64| if x >= t { 1.0 } else { below(x) };
    let cdf_left = |x: f64| if x > t { 1.0 } else { below(x) };
    let ks = stats::ks_one_sample(&ages, cdf, cdf_left);
    let critical = KS_COEFFICIENT_1PCT / (samples as f64).sqrt();
    let atom_expected = (-lambda * t).exp();
    let atom_fraction = ages.iter().filter(|&&a| a == t).count() as f64 / samples as f64;
    let atom_sigma = (atom_expected * (1.0 - atom_expected) / samples as f64).sqrt();
    Ok(EdgeAgeReport {
        samples,
        lambda,
        t,
        ks,
        critical,
        ks_pass: ks < critical,
        atom_fraction,
        atom_expected,
        atom_sigma,
        atom_pass: (atom_fraction - atom_expected).abs() <= 4.0 * atom_sigma,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DensityRow {
    pub target_group: usize,
    pub source_group: usize,
    pub pairs: u64,
    pub probability: f64,
    pub expected: f64,
    pub mean: f64,
    /// Standard deviation of `mean` under the binomial law.
    pub sigma: f64,
    pub within: bool,
}

/// Mean directed-edge count per group pair at time `t` over dense runs
/// with no infection, against `pairs * rho / n`.
pub fn edge_density_check(
    params: &ModelParams,
    t: f64,
    samples: usize,
    seed: u64,
) -> Result<Vec<DensityRow>> {
    let sizes = params
        .group_sizes()
        .ok_or_else(|| Error::InvalidParams("edge experiment needs group_sizes".into()))?
        .to_vec();
    let rho = params
        .edge_scale()
        .ok_or_else(|| Error::InvalidParams("edge experiment needs rho".into()))?;
    if samples == 0 {
        return Err(Error::InvalidParams("need at least one sample".into()));
    }
    let n: u64 = sizes.iter().sum();
    let m = sizes.len();
    let none = vec![0; m];
    let config = SimConfig {
        t_end: t,
        sample_dt: t.max(f64::MIN_POSITIVE),
        record_events: false,
    };
    let counts: Vec<Vec<usize>> = (0..samples as u64)
        .into_par_iter()
        .map(|s| {
            let mut state = init_network(params, &none, seed.wrapping_add(s), SimMode::Dense)?;
            simulate(&mut state, params, &config)?;
            Ok((0..m * m)
                .map(|p| {
                    state
                        .dense_edges_between(p / m, p % m)
                        .expect("dense state")
                })
                .collect())
        })
        .collect::<Result<_>>()?;
    Ok((0..m * m)
        .map(|p| {
            let (i, j) = (p / m, p % m);
            let pairs = if i == j {
                sizes[i] * sizes[i].saturating_sub(1)
            } else {
                sizes[i] * sizes[j]
            };
            let probability = rho.get(i, j) / n as f64;
            let expected = pairs as f64 * probability;
            let mean = counts.iter().map(|c| c[p] as f64).sum::<f64>() / samples as f64;
            let sigma = (pairs as f64 * probability * (1.0 - probability) / samples as f64).sqrt();
            DensityRow {
                target_group: i,
                source_group: j,
                pairs,
                probability,
                expected,
                mean,
                sigma,
                within: (mean - expected).abs() <= 4.0 * sigma + 1e-9,
            }
        })
        .collect())
}
