//! Parameter and state types of the age-structured SIR model, the
//! continuous right-hand side, a fixed-step RK4 integrator and the
//! explicit one-day map used for estimation.

use std::io::{Read, Write};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Tolerance on the total mass of a [`GroupFractions`].
pub const MASS_TOLERANCE: f64 = 1e-9;
/// Negative values above `-CLAMP_TOLERANCE` are rounding and get clamped to zero.
pub const CLAMP_TOLERANCE: f64 = 1e-12;
const CONTACT_TOLERANCE: f64 = 1e-12;

/// Dense row-major `m x m` matrix indexed by (target group, source group).
#[derive(Clone, Debug, PartialEq)]
pub struct GroupMatrix {
    m: usize,
    data: Vec<f64>,
}

impl GroupMatrix {
    pub fn zeros(m: usize) -> Self {
        Self {
            m,
            data: vec![0.0; m * m],
        }
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let m = rows.len();
        let mut data = Vec::with_capacity(m * m);
        for (i, row) in rows.iter().enumerate() {
            if row.len() != m {
                return Err(Error::DimensionMismatch(format!(
                    "row {i} has {} entries, expected {m}",
                    row.len()
                )));
            }
            data.extend_from_slice(row);
        }
        Ok(Self { m, data })
    }

    /// Builds a matrix from a row-major slice of length `m * m`.
    pub fn from_row_major(m: usize, data: &[f64]) -> Result<Self> {
        if data.len() != m * m {
            return Err(Error::DimensionMismatch(format!(
                "expected {} entries, got {}",
                m * m,
                data.len()
            )));
        }
        Ok(Self {
            m,
            data: data.to_vec(),
        })
    }

    #[inline]
    pub fn dim(&self) -> usize {
        self.m
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.m + j]
    }

    #[inline]
    pub fn set(&mut self, i: usize, j: usize, value: f64) {
        self.data[i * self.m + j] = value;
    }

    #[inline]
    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.m..(i + 1) * self.m]
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn to_rows(&self) -> Vec<Vec<f64>> {
        self.data
            .chunks(self.m.max(1))
            .map(<[f64]>::to_vec)
            .collect()
    }

    /// Elementwise product.
    pub fn hadamard(&self, other: &GroupMatrix) -> GroupMatrix {
        GroupMatrix {
            m: self.m,
            data: self
                .data
                .iter()
                .zip(&other.data)
                .map(|(a, b)| a * b)
                .collect(),
        }
    }

    pub fn scaled(&self, factor: f64) -> GroupMatrix {
        GroupMatrix {
            m: self.m,
            data: self.data.iter().map(|v| v * factor).collect(),
        }
    }
}

impl Serialize for GroupMatrix {
    fn serialize<S: serde::Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        self.to_rows().serialize(serializer)
    }
}

impl<'de> Deserialize<'de> for GroupMatrix {
    fn deserialize<D: serde::Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let rows = Vec::<Vec<f64>>::deserialize(deserializer)?;
        GroupMatrix::from_rows(&rows).map_err(serde::de::Error::custom)
    }
}

/// Unvalidated parameter set, as read from a scenario or config file.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct ParamsSpec {
    #[serde(default, rename = "A", skip_serializing_if = "Option::is_none")]
    pub contact: Option<GroupMatrix>,
    #[serde(default, rename = "B", skip_serializing_if = "Option::is_none")]
    pub transmission: Option<GroupMatrix>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub rho: Option<GroupMatrix>,
    pub gamma: Vec<f64>,
    pub lambda_edge: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub group_sizes: Option<Vec<u64>>,
}

/// Validated model parameters.
///
/// `contact` is always present. The network fields (`transmission`,
/// `edge_scale`, `group_sizes`) are only needed by the simulator; when
/// both `transmission` and `edge_scale` are given the contact matrix
/// equals their elementwise product.
#[derive(Clone, Debug, PartialEq)]
pub struct ModelParams {
    contact: GroupMatrix,
    transmission: Option<GroupMatrix>,
    edge_scale: Option<GroupMatrix>,
    recovery: Vec<f64>,
    edge_rate: f64,
    group_sizes: Option<Vec<u64>>,
}

fn check_entries(field: &'static str, values: &[f64]) -> Result<()> {
    for (index, &value) in values.iter().enumerate() {
        if !value.is_finite() {
            return Err(Error::NonFiniteParameter(field));
        }
        if value < 0.0 {
            return Err(Error::NegativeEntry {
                field,
                index,
                value,
            });
        }
    }
    Ok(())
}

impl ParamsSpec {
    pub fn validate(self) -> Result<ModelParams> {
        let m = self.gamma.len();
        if m == 0 {
            return Err(Error::DimensionMismatch("gamma is empty".into()));
        }
        for (name, mat) in [
            ("A", &self.contact),
            ("B", &self.transmission),
            ("rho", &self.rho),
        ] {
            if let Some(mat) = mat {
                if mat.dim() != m {
                    return Err(Error::DimensionMismatch(format!(
                        "{name} is {0}x{0} but gamma has {m} entries",
                        mat.dim()
                    )));
                }
            }
        }
        check_entries("gamma", &self.gamma)?;
        if let Some(a) = &self.contact {
            check_entries("A", a.as_slice())?;
        }
        if let Some(b) = &self.transmission {
            check_entries("B", b.as_slice())?;
        }
        if let Some(rho) = &self.rho {
            check_entries("rho", rho.as_slice())?;
        }
        if !self.lambda_edge.is_finite() || self.lambda_edge <= 0.0 {
            return Err(Error::InvalidParams(format!(
                "lambda_edge must be positive, got {}",
                self.lambda_edge
            )));
        }

        let contact = match (&self.contact, &self.transmission, &self.rho) {
            (Some(a), Some(b), Some(rho)) => {
                for i in 0..m {
                    for j in 0..m {
                        let product = rho.get(i, j) * b.get(i, j);
                        if (a.get(i, j) - product).abs() > CONTACT_TOLERANCE {
                            return Err(Error::ContactMismatch {
                                i,
                                j,
                                a: a.get(i, j),
                                product,
                            });
                        }
                    }
                }
                a.clone()
            }
            (Some(a), _, _) => a.clone(),
            (None, Some(b), Some(rho)) => rho.hadamard(b),
            (None, _, _) => {
                return Err(Error::InvalidParams(
                    "either A or both B and rho must be given".into(),
                ))
            }
        };

        if let Some(sizes) = &self.group_sizes {
            if sizes.len() != m {
                return Err(Error::DimensionMismatch(format!(
                    "group_sizes has {} entries, expected {m}",
                    sizes.len()
                )));
            }
            if let Some(i) = sizes.iter().position(|&s| s == 0) {
                return Err(Error::InvalidParams(format!("group {i} is empty")));
            }
            if let Some(rho) = &self.rho {
                let n: u64 = sizes.iter().sum();
                for i in 0..m {
                    for j in 0..m {
                        let value = rho.get(i, j) / n as f64;
                        if value > 1.0 {
                            return Err(Error::EdgeProbability { i, j, value });
                        }
                    }
                }
            }
        }

        Ok(ModelParams {
            contact,
            transmission: self.transmission,
            edge_scale: self.rho,
            recovery: self.gamma,
            edge_rate: self.lambda_edge,
            group_sizes: self.group_sizes,
        })
    }
}

impl ModelParams {
    /// Mean-field parameters only (no network fields).
    pub fn mean_field(contact: GroupMatrix, recovery: Vec<f64>) -> Result<Self> {
        ParamsSpec {
            contact: Some(contact),
            gamma: recovery,
            lambda_edge: 1.0,
            ..Default::default()
        }
        .validate()
    }

    pub fn network(
        transmission: GroupMatrix,
        edge_scale: GroupMatrix,
        recovery: Vec<f64>,
        edge_rate: f64,
        group_sizes: Vec<u64>,
    ) -> Result<Self> {
        ParamsSpec {
            contact: None,
            transmission: Some(transmission),
            rho: Some(edge_scale),
            gamma: recovery,
            lambda_edge: edge_rate,
            group_sizes: Some(group_sizes),
        }
        .validate()
    }

    pub fn to_spec(&self) -> ParamsSpec {
        ParamsSpec {
            contact: Some(self.contact.clone()),
            transmission: self.transmission.clone(),
            rho: self.edge_scale.clone(),
            gamma: self.recovery.clone(),
            lambda_edge: self.edge_rate,
            group_sizes: self.group_sizes.clone(),
        }
    }

    pub fn with_edge_rate(&self, edge_rate: f64) -> Result<Self> {
        let mut spec = self.to_spec();
        spec.lambda_edge = edge_rate;
        spec.validate()
    }

    pub fn with_group_sizes(&self, sizes: Vec<u64>) -> Result<Self> {
        let mut spec = self.to_spec();
        spec.group_sizes = Some(sizes);
        spec.validate()
    }

    #[inline]
    pub fn groups(&self) -> usize {
        self.recovery.len()
    }

    pub fn contact(&self) -> &GroupMatrix {
        &self.contact
    }

    pub fn transmission(&self) -> Option<&GroupMatrix> {
        self.transmission.as_ref()
    }

    pub fn edge_scale(&self) -> Option<&GroupMatrix> {
        self.edge_scale.as_ref()
    }

    pub fn recovery(&self) -> &[f64] {
        &self.recovery
    }

    pub fn edge_rate(&self) -> f64 {
        self.edge_rate
    }

    pub fn group_sizes(&self) -> Option<&[u64]> {
        self.group_sizes.as_deref()
    }

    /// Total population `n`, when group sizes are known.
    pub fn population(&self) -> Option<u64> {
        self.group_sizes.as_ref().map(|s| s.iter().sum())
    }
}

/// Per-group susceptible, infected and recovered fractions of the total population.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GroupFractions {
    pub s: Vec<f64>,
    pub beta: Vec<f64>,
    pub r: Vec<f64>,
}

impl GroupFractions {
    pub fn new(s: Vec<f64>, beta: Vec<f64>, r: Vec<f64>) -> Result<Self> {
        let state = Self { s, beta, r };
        state.validate()?;
        Ok(state)
    }

    pub fn zeros(m: usize) -> Self {
        Self {
            s: vec![0.0; m],
            beta: vec![0.0; m],
            r: vec![0.0; m],
        }
    }

    /// Fractions from per-group counts, normalised by the total population.
    pub fn from_counts(susceptible: &[u64], infected: &[u64], recovered: &[u64]) -> Self {
        let n: u64 = susceptible.iter().chain(infected).chain(recovered).sum();
        let n = n.max(1) as f64;
        let f = |v: &[u64]| v.iter().map(|&c| c as f64 / n).collect();
        Self {
            s: f(susceptible),
            beta: f(infected),
            r: f(recovered),
        }
    }

    #[inline]
    pub fn groups(&self) -> usize {
        self.s.len()
    }

    pub fn total(&self) -> f64 {
        self.s.iter().chain(&self.beta).chain(&self.r).sum()
    }

    pub fn validate(&self) -> Result<()> {
        let m = self.s.len();
        if self.beta.len() != m || self.r.len() != m {
            return Err(Error::DimensionMismatch(format!(
                "compartment lengths {}, {}, {}",
                m,
                self.beta.len(),
                self.r.len()
            )));
        }
        for (group, ((&s, &b), &r)) in self.s.iter().zip(&self.beta).zip(&self.r).enumerate() {
            for value in [s, b, r] {
                if !value.is_finite() {
                    return Err(Error::InvalidState(format!(
                        "non-finite entry in group {group}"
                    )));
                }
                if value < 0.0 {
                    return Err(Error::InvalidState(format!(
                        "negative fraction {value} in group {group}"
                    )));
                }
            }
        }
        let total = self.total();
        if (total - 1.0).abs() > MASS_TOLERANCE {
            return Err(Error::InvalidState(format!(
                "fractions sum to {total}, not 1"
            )));
        }
        Ok(())
    }

    /// Clamps rounding-level negatives to zero and rejects larger ones.
    fn clamp_negatives(&mut self, time: f64) -> Result<()> {
        for compartment in [&mut self.s, &mut self.beta, &mut self.r] {
            for (group, value) in compartment.iter_mut().enumerate() {
                if !value.is_finite() {
                    return Err(Error::NonFiniteState(time));
                }
                if *value < 0.0 {
                    if *value < -CLAMP_TOLERANCE {
                        return Err(Error::NegativeCompartment {
                            group,
                            value: *value,
                            time,
                        });
                    }
                    *value = 0.0;
                }
            }
        }
        Ok(())
    }
}

/// Time-stamped sequence of states.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Trajectory {
    pub times: Vec<f64>,
    pub states: Vec<GroupFractions>,
}

impl Trajectory {
    pub fn new(times: Vec<f64>, states: Vec<GroupFractions>) -> Result<Self> {
        if times.is_empty() || times.len() != states.len() {
            return Err(Error::InvalidState(format!(
                "trajectory has {} times and {} states",
                times.len(),
                states.len()
            )));
        }
        if times.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::InvalidState(
                "times are not strictly increasing".into(),
            ));
        }
        let m = states[0].groups();
        for state in &states {
            if state.groups() != m {
                return Err(Error::DimensionMismatch(
                    "mixed group counts in trajectory".into(),
                ));
            }
            state.validate()?;
        }
        Ok(Self { times, states })
    }

    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    pub fn groups(&self) -> usize {
        self.states.first().map_or(0, GroupFractions::groups)
    }

    pub fn last(&self) -> &GroupFractions {
        self.states.last().expect("trajectory is never empty")
    }

    /// Samples `k0..=k1` as a new trajectory (times kept).
    pub fn slice(&self, k0: usize, k1: usize) -> Result<Trajectory> {
        if k0 > k1 || k1 >= self.len() {
            return Err(Error::WindowOutOfRange {
                k0,
                k1,
                len: self.len(),
            });
        }
        Ok(Trajectory {
            times: self.times[k0..=k1].to_vec(),
            states: self.states[k0..=k1].to_vec(),
        })
    }

    pub fn csv_header(m: usize) -> Vec<String> {
        let mut header = vec!["t".to_string()];
        for i in 1..=m {
            header.push(format!("s_{i}"));
            header.push(format!("beta_{i}"));
            header.push(format!("r_{i}"));
        }
        header
    }

    /// Writes the trajectory CSV (`t,s_1,beta_1,r_1,...`) at 17 significant digits.
    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        write_rows(
            writer,
            &Self::csv_header(self.groups()),
            self.times.iter().zip(&self.states).map(|(t, state)| {
                let mut row = vec![*t];
                for i in 0..state.groups() {
                    row.extend([state.s[i], state.beta[i], state.r[i]]);
                }
                row
            }),
        )
    }

    pub fn read_csv<R: Read>(reader: R) -> Result<Trajectory> {
        let mut rdr = csv::ReaderBuilder::new()
            .trim(csv::Trim::All)
            .from_reader(reader);
        let header: Vec<String> = rdr.headers()?.iter().map(str::to_string).collect();
        if header.first().map(String::as_str) != Some("t")
            || header.len() < 4
            || !(header.len() - 1).is_multiple_of(3)
        {
            return Err(Error::Parse {
                line: 1,
                message: "expected header t,s_1,beta_1,r_1,...".into(),
            });
        }
        let m = (header.len() - 1) / 3;
        let expected = Self::csv_header(m);
        if let Some(bad) = header.iter().zip(&expected).find(|(a, b)| a != b) {
            return Err(Error::MissingColumn(bad.1.clone()));
        }
        let mut times = Vec::new();
        let mut states = Vec::new();
        for (row, record) in rdr.records().enumerate() {
            let line = row + 2;
            let record = record?;
            if record.len() != header.len() {
                return Err(Error::Parse {
                    line,
                    message: format!("expected {} fields, got {}", header.len(), record.len()),
                });
            }
            let values = record
                .iter()
                .map(|field| {
                    field.parse::<f64>().map_err(|_| Error::Parse {
                        line,
                        message: format!("malformed number {field:?}"),
                    })
                })
                .collect::<Result<Vec<f64>>>()?;
            let mut state = GroupFractions::zeros(m);
            for i in 0..m {
                state.s[i] = values[1 + 3 * i];
                state.beta[i] = values[2 + 3 * i];
                state.r[i] = values[3 + 3 * i];
            }
            state.validate().map_err(|e| Error::Parse {
                line,
                message: e.to_string(),
            })?;
            times.push(values[0]);
            states.push(state);
        }
        Trajectory::new(times, states)
    }
}

/// Writes a numeric table with every value at 17 significant digits.
pub(crate) fn write_rows<W: Write>(
    writer: W,
    header: &[String],
    rows: impl Iterator<Item = Vec<f64>>,
) -> Result<()> {
    let mut wtr = csv::Writer::from_writer(writer);
    wtr.write_record(header)?;
    for row in rows {
        wtr.write_record(row.iter().map(|v| format_f64(*v)))?;
    }
    wtr.flush()?;
    Ok(())
}

pub(crate) fn format_f64(v: f64) -> String {
    format!("{v:.16e}")
}

/// Per-group time derivatives.
#[derive(Clone, Debug, PartialEq)]
pub struct Derivatives {
    pub ds: Vec<f64>,
    pub dbeta: Vec<f64>,
    pub dr: Vec<f64>,
}

fn infection_flux(params: &ModelParams, state: &GroupFractions) -> Vec<f64> {
    let a = params.contact();
    (0..state.groups())
        .map(|i| {
            let force: f64 = a
                .row(i)
                .iter()
                .zip(&state.beta)
                .map(|(aij, bj)| aij * bj)
                .sum();
            state.s[i] * force
        })
        .collect()
}

pub fn ode_rhs(params: &ModelParams, state: &GroupFractions) -> Derivatives {
    let flux = infection_flux(params, state);
    let gamma = params.recovery();
    let recovery: Vec<f64> = state.beta.iter().zip(gamma).map(|(b, g)| g * b).collect();
    let ds: Vec<f64> = flux.iter().map(|f| -f).collect();
    let dbeta = ds.iter().zip(&recovery).map(|(d, rec)| -d - rec).collect();
    Derivatives {
        ds,
        dbeta,
        dr: recovery,
    }
}

fn check_dims(params: &ModelParams, state: &GroupFractions) -> Result<()> {
    if state.groups() != params.groups() {
        return Err(Error::DimensionMismatch(format!(
            "state has {} groups, parameters have {}",
            state.groups(),
            params.groups()
        )));
    }
    state.validate()
}

fn axpy(state: &GroupFractions, h: f64, k: &Derivatives) -> GroupFractions {
    let f = |x: &[f64], d: &[f64]| x.iter().zip(d).map(|(x, d)| x + h * d).collect();
    GroupFractions {
        s: f(&state.s, &k.ds),
        beta: f(&state.beta, &k.dbeta),
        r: f(&state.r, &k.dr),
    }
}

fn rk4_step(params: &ModelParams, state: &GroupFractions, h: f64) -> GroupFractions {
    let k1 = ode_rhs(params, state);
    let k2 = ode_rhs(params, &axpy(state, h / 2.0, &k1));
    let k3 = ode_rhs(params, &axpy(state, h / 2.0, &k2));
    let k4 = ode_rhs(params, &axpy(state, h, &k3));
    let combine = |x: &[f64], a: &[f64], b: &[f64], c: &[f64], d: &[f64]| {
        (0..x.len())
            .map(|i| x[i] + h / 6.0 * (a[i] + 2.0 * b[i] + 2.0 * c[i] + d[i]))
            .collect()
    };
    GroupFractions {
        s: combine(&state.s, &k1.ds, &k2.ds, &k3.ds, &k4.ds),
        beta: combine(&state.beta, &k1.dbeta, &k2.dbeta, &k3.dbeta, &k4.dbeta),
        r: combine(&state.r, &k1.dr, &k2.dr, &k3.dr, &k4.dr),
    }
}

/// Classical RK4 with fixed step `dt`, sampled at every step. The last
/// sample is at the first multiple of `dt` that is `>= t_end`.
pub fn integrate_ode(
    params: &ModelParams,
    init: &GroupFractions,
    t_end: f64,
    dt: f64,
) -> Result<Trajectory> {
    if !(dt > 0.0 && dt.is_finite()) || !(t_end >= 0.0 && t_end.is_finite()) {
        return Err(Error::InvalidParams(format!(
            "need dt > 0 and t_end >= 0, got dt = {dt}, t_end = {t_end}"
        )));
    }
    check_dims(params, init)?;
    let steps = (t_end / dt - 1e-9).ceil().max(0.0) as usize;
    let mut times = Vec::with_capacity(steps + 1);
    let mut states = Vec::with_capacity(steps + 1);
    times.push(0.0);
    states.push(init.clone());
    let mut state = init.clone();
    for k in 1..=steps {
        let t = k as f64 * dt;
        state = rk4_step(params, &state, dt);
        state.clamp_negatives(t)?;
        times.push(t);
        states.push(state.clone());
    }
    Ok(Trajectory { times, states })
}

/// One day of the explicit discrete-time dynamics.
pub fn discrete_step(params: &ModelParams, state: &GroupFractions) -> Result<GroupFractions> {
    check_dims(params, state)?;
    next_day(params, state, 0.0)
}

fn next_day(params: &ModelParams, state: &GroupFractions, time: f64) -> Result<GroupFractions> {
    let flux = infection_flux(params, state);
    let gamma = params.recovery();
    let m = state.groups();
    let mut next = GroupFractions::zeros(m);
    for i in 0..m {
        let recovered = gamma[i] * state.beta[i];
        next.s[i] = state.s[i] - flux[i];
        next.beta[i] = state.beta[i] + flux[i] - recovered;
        next.r[i] = state.r[i] + recovered;
    }
    next.clamp_negatives(time + 1.0)?;
    Ok(next)
}

/// `days` applications of [`discrete_step`], sampled at `t = 0, 1, ..., days`.
pub fn iterate_discrete(
    params: &ModelParams,
    init: &GroupFractions,
    days: usize,
) -> Result<Trajectory> {
    check_dims(params, init)?;
    let mut times = Vec::with_capacity(days + 1);
    let mut states = Vec::with_capacity(days + 1);
    times.push(0.0);
    states.push(init.clone());
    for k in 0..days {
        let next = next_day(params, &states[k], k as f64)?;
        times.push((k + 1) as f64);
        states.push(next);
    }
    Ok(Trajectory { times, states })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn sir1(a: f64, gamma: f64) -> ModelParams {
        ModelParams::mean_field(GroupMatrix::from_rows(&[vec![a]]).unwrap(), vec![gamma]).unwrap()
    }

    fn state1(s: f64, b: f64, r: f64) -> GroupFractions {
        GroupFractions::new(vec![s], vec![b], vec![r]).unwrap()
    }

    #[test]
    fn validate_accepts_ode_only_params() {
        let p = ParamsSpec {
            contact: Some(GroupMatrix::from_rows(&[vec![2.0]]).unwrap()),
            gamma: vec![1.0],
            lambda_edge: 1.0,
            ..Default::default()
        };
        assert!(p.validate().is_ok());
    }

    #[test]
    fn validate_accepts_consistent_network_params() {
        let ones = GroupMatrix::from_rows(&[vec![1.0, 1.0], vec![1.0, 1.0]]).unwrap();
        let p = ParamsSpec {
            contact: Some(ones.scaled(2.0)),
            transmission: Some(ones.clone()),
            rho: Some(ones.scaled(2.0)),
            gamma: vec![1.0, 1.0],
            lambda_edge: 1.0,
            group_sizes: Some(vec![10, 10]),
        };
        let params = p.validate().unwrap();
        assert_eq!(params.contact().get(1, 0), 2.0);
    }

    #[test]
    fn validate_rejects_bad_params() {
        let base = ParamsSpec {
            contact: Some(GroupMatrix::from_rows(&[vec![2.0]]).unwrap()),
            gamma: vec![-0.1],
            lambda_edge: 1.0,
            ..Default::default()
        };
        let err = base.clone().validate().unwrap_err();
        assert!(err.to_string().contains("negative entry"), "{err}");

        let mismatch = ParamsSpec {
            contact: Some(GroupMatrix::from_rows(&[vec![2.0]]).unwrap()),
            transmission: Some(GroupMatrix::from_rows(&[vec![1.0]]).unwrap()),
            rho: Some(GroupMatrix::from_rows(&[vec![2.5]]).unwrap()),
            gamma: vec![1.0],
            lambda_edge: 1.0,
            group_sizes: None,
        };
        assert!(matches!(
            mismatch.validate(),
            Err(Error::ContactMismatch { .. })
        ));

        let dense = ParamsSpec {
            contact: None,
            transmission: Some(GroupMatrix::from_rows(&[vec![1.0]]).unwrap()),
            rho: Some(GroupMatrix::from_rows(&[vec![20.0]]).unwrap()),
            gamma: vec![1.0],
            lambda_edge: 1.0,
            group_sizes: Some(vec![10]),
        };
        assert!(matches!(
            dense.validate(),
            Err(Error::EdgeProbability { .. })
        ));

        let dims = ParamsSpec {
            contact: Some(GroupMatrix::from_rows(&[vec![2.0]]).unwrap()),
            gamma: vec![1.0, 1.0],
            lambda_edge: 1.0,
            ..Default::default()
        };
        assert!(matches!(dims.validate(), Err(Error::DimensionMismatch(_))));

        let mut lam = base;
        lam.gamma = vec![1.0];
        lam.lambda_edge = 0.0;
        assert!(lam.validate().is_err());
    }

    #[test]
    fn rhs_hand_case() {
        let d = ode_rhs(&sir1(2.0, 1.0), &state1(0.9, 0.1, 0.0));
        assert!((d.ds[0] + 0.18).abs() < 1e-15);
        assert!((d.dbeta[0] - 0.08).abs() < 1e-15);
        assert!((d.dr[0] - 0.1).abs() < 1e-15);
    }

    #[test]
    fn rhs_edge_cases() {
        let p = sir1(2.0, 1.0);
        let d = ode_rhs(&p, &state1(0.7, 0.0, 0.3));
        assert_eq!((d.ds[0], d.dbeta[0], d.dr[0]), (0.0, 0.0, 0.0));
        let d = ode_rhs(&p, &state1(0.0, 0.4, 0.6));
        assert_eq!(d.ds[0], 0.0);
        assert!((d.dbeta[0] + 0.4).abs() < 1e-15);
    }

    #[test]
    fn ode_disease_free_is_constant() {
        let p = sir1(2.0, 1.0);
        let init = state1(0.8, 0.0, 0.2);
        let traj = integrate_ode(&p, &init, 5.0, 0.1).unwrap();
        assert!(traj.states.iter().all(|s| *s == init));
        assert!(*traj.times.last().unwrap() >= 5.0);
    }

    #[test]
    fn ode_first_integral_and_monotonicity() {
        let p = sir1(2.0, 1.0);
        let traj = integrate_ode(&p, &state1(0.99, 0.01, 0.0), 50.0, 0.01).unwrap();
        let invariant = |s: &GroupFractions| s.beta[0] + s.s[0] - 0.5 * s.s[0].ln();
        let h0 = invariant(&traj.states[0]);
        let drift = traj
            .states
            .iter()
            .map(|s| (invariant(s) - h0).abs())
            .fold(0.0, f64::max);
        assert!(drift <= 1e-8, "drift {drift}");
        for w in traj.states.windows(2) {
            assert!(w[1].s[0] <= w[0].s[0]);
            assert!(w[1].r[0] >= w[0].r[0]);
            assert!((w[1].total() - 1.0).abs() <= MASS_TOLERANCE);
        }
    }

    #[test]
    fn rk4_is_fourth_order() {
        let p = sir1(2.0, 1.0);
        let init = state1(0.9, 0.1, 0.0);
        let end = |dt: f64| integrate_ode(&p, &init, 4.0, dt).unwrap().last().beta[0];
        let reference = end(0.0025);
        let errs: Vec<f64> = [0.2, 0.1, 0.05]
            .iter()
            .map(|&dt| (end(dt) - reference).abs())
            .collect();
        for w in errs.windows(2) {
            let ratio = w[0] / w[1];
            assert!(
                ratio > 12.0 && ratio < 20.0,
                "ratio {ratio}, errors {errs:?}"
            );
        }
    }

    #[test]
    fn discrete_step_cases() {
        let p = sir1(2.0, 1.0);
        let next = discrete_step(&p, &state1(0.9, 0.1, 0.0)).unwrap();
        assert!((next.s[0] - 0.72).abs() <= 1e-15);
        assert!((next.beta[0] - 0.18).abs() <= 1e-15);
        assert!((next.r[0] - 0.10).abs() <= 1e-15);

        let free = state1(0.6, 0.0, 0.4);
        assert_eq!(discrete_step(&p, &free).unwrap(), free);
        let frozen = state1(0.5, 0.2, 0.3);
        assert_eq!(discrete_step(&sir1(0.0, 0.0), &frozen).unwrap(), frozen);

        let err = discrete_step(&sir1(20.0, 1.0), &state1(0.5, 0.5, 0.0)).unwrap_err();
        assert!(matches!(err, Error::NegativeCompartment { .. }));
    }

    #[test]
    fn iterate_discrete_lengths() {
        let p = sir1(2.0, 1.0);
        let init = state1(0.9, 0.1, 0.0);
        let zero = iterate_discrete(&p, &init, 0).unwrap();
        assert_eq!(zero.len(), 1);
        let one = iterate_discrete(&p, &init, 1).unwrap();
        assert_eq!(one.times, vec![0.0, 1.0]);
        assert_eq!(one.states[1], discrete_step(&p, &init).unwrap());
    }

    #[test]
    fn trajectory_csv_round_trip() {
        let p = sir1(2.0, 1.0);
        let traj = integrate_ode(&p, &state1(0.9, 0.1, 0.0), 1.0, 0.25).unwrap();
        let mut buf = Vec::new();
        traj.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf.clone()).unwrap();
        assert!(text.starts_with("t,s_1,beta_1,r_1\n"));
        assert_eq!(Trajectory::read_csv(buf.as_slice()).unwrap(), traj);
    }

    #[test]
    fn trajectory_csv_reports_line_numbers() {
        let text = "t,s_1,beta_1,r_1\n0,0.9,0.1,0\n1,abc,0.1,0\n";
        let err = Trajectory::read_csv(text.as_bytes()).unwrap_err();
        assert!(err.to_string().starts_with("line 3"), "{err}");
    }

    fn random_state(m: usize) -> impl Strategy<Value = GroupFractions> {
        prop::collection::vec(0.0f64..1.0, 3 * m).prop_map(move |raw| {
            let total: f64 = raw.iter().sum::<f64>().max(1e-9);
            let v: Vec<f64> = raw.iter().map(|x| x / total).collect();
            GroupFractions {
                s: v[0..m].to_vec(),
                beta: v[m..2 * m].to_vec(),
                r: v[2 * m..].to_vec(),
            }
        })
    }

    proptest! {
        #[test]
        fn discrete_step_is_one_euler_step(
            state in random_state(3),
            a in prop::collection::vec(0.0f64..0.3, 9),
            g in prop::collection::vec(0.0f64..0.3, 3),
        ) {
            let params = ModelParams::mean_field(GroupMatrix::from_row_major(3, &a).unwrap(), g).unwrap();
            let d = ode_rhs(&params, &state);
            let next = discrete_step(&params, &state).unwrap();
            for i in 0..3 {
                prop_assert!((next.s[i] - (state.s[i] + d.ds[i])).abs() <= 1e-15);
                prop_assert!((next.beta[i] - (state.beta[i] + d.dbeta[i])).abs() <= 1e-15);
                prop_assert!((next.r[i] - (state.r[i] + d.dr[i])).abs() <= 1e-15);
            }
            prop_assert!((next.total() - 1.0).abs() <= MASS_TOLERANCE);
        }

        #[test]
        fn rhs_conserves_mass(
            state in random_state(2),
            a in prop::collection::vec(0.0f64..5.0, 4),
            g in prop::collection::vec(0.0f64..5.0, 2),
        ) {
            let params = ModelParams::mean_field(GroupMatrix::from_row_major(2, &a).unwrap(), g).unwrap();
            let d = ode_rhs(&params, &state);
            let sum: f64 = d.ds.iter().chain(&d.dbeta).chain(&d.dr).sum();
            prop_assert!(sum.abs() <= 1e-12);
        }
    }
}
