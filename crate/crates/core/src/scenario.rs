//! Scenario files: model parameters plus run settings.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{GroupFractions, GroupMatrix, ModelParams, ParamsSpec};
use crate::sim::SimMode;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Scenario {
    /// Optional group count, checked against the parameters when present.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub m: Option<usize>,
    #[serde(default, rename = "A", skip_serializing_if = "Option::is_none")]
    pub contact: Option<GroupMatrix>,
    #[serde(default, rename = "B", skip_serializing_if = "Option::is_none")]
    pub transmission: Option<GroupMatrix>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub rho: Option<GroupMatrix>,
    pub gamma: Vec<f64>,
    #[serde(default = "default_one")]
    pub lambda_edge: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub group_sizes: Option<Vec<u64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub initial_infected: Option<Vec<u64>>,
    /// Initial fractions for the ODE; derived from the counts when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub initial_state: Option<GroupFractions>,
    pub t_end: f64,
    #[serde(default = "default_one")]
    pub sample_dt: f64,
    #[serde(default = "default_dt")]
    pub dt: f64,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub mode: SimMode,
    #[serde(default = "default_runs")]
    pub runs: usize,
}

fn default_one() -> f64 {
    1.0
}

fn default_dt() -> f64 {
    0.01
}

fn default_runs() -> usize {
    100
}

impl Scenario {
    pub fn from_json(text: &str) -> Result<Self> {
        let scenario: Self = serde_json::from_str(text)?;
        scenario.params()?;
        Ok(scenario)
    }

    pub fn params(&self) -> Result<ModelParams> {
        let params = ParamsSpec {
            contact: self.contact.clone(),
            transmission: self.transmission.clone(),
            rho: self.rho.clone(),
            gamma: self.gamma.clone(),
            lambda_edge: self.lambda_edge,
            group_sizes: self.group_sizes.clone(),
        }
        .validate()?;
        if let Some(m) = self.m {
            if m != params.groups() {
                return Err(Error::DimensionMismatch(format!(
                    "m = {m} but the parameters have {} groups",
                    params.groups()
                )));
            }
        }
        if !(self.t_end >= 0.0 && self.t_end.is_finite()) {
            return Err(Error::InvalidParams(format!(
                "t_end must be >= 0, got {}",
                self.t_end
            )));
        }
        for (name, v) in [("sample_dt", self.sample_dt), ("dt", self.dt)] {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::InvalidParams(format!(
                    "{name} must be positive, got {v}"
                )));
            }
        }
        Ok(params)
    }

    pub fn initial_counts(&self) -> Result<Vec<u64>> {
        let counts = self
            .initial_infected
            .clone()
            .ok_or_else(|| Error::InvalidParams("scenario needs initial_infected".into()))?;
        let sizes = self
            .group_sizes
            .as_ref()
            .ok_or_else(|| Error::InvalidParams("scenario needs group_sizes".into()))?;
        if counts.len() != sizes.len() {
            return Err(Error::DimensionMismatch(format!(
                "initial_infected has {} entries, group_sizes {}",
                counts.len(),
                sizes.len()
            )));
        }
        if let Some(i) = counts.iter().zip(sizes).position(|(c, s)| c > s) {
            return Err(Error::InvalidParams(format!(
                "group {i} has more infected than members"
            )));
        }
        Ok(counts)
    }

    pub fn initial_fractions(&self) -> Result<GroupFractions> {
        if let Some(state) = &self.initial_state {
            state.validate()?;
            if state.groups() != self.gamma.len() {
                return Err(Error::DimensionMismatch(format!(
                    "initial_state has {} groups, expected {}",
                    state.groups(),
                    self.gamma.len()
                )));
            }
            return Ok(state.clone());
        }
        let infected = self.initial_counts()?;
        let sizes = self
            .group_sizes
            .as_ref()
            .expect("checked by initial_counts");
        let susceptible: Vec<u64> = sizes.iter().zip(&infected).map(|(s, i)| s - i).collect();
        Ok(GroupFractions::from_counts(
            &susceptible,
            &infected,
            &vec![0; sizes.len()],
        ))
    }
}
