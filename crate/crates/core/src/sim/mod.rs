//! Exact stochastic simulation of the network epidemic chain.
//!
//! Nodes carry a disease state (S, I or R) and every ordered pair of
//! distinct nodes `(a, b)` carries an edge bit meaning "b can transmit to
//! a". Each edge bit is re-drawn as Bernoulli(rho_ij / n) at the events of
//! a rate-lambda Poisson clock, independently of everything else.
//!
//! Two engines sample the same law:
//!
//! * **dense**: stores all `n(n-1)` bits and simulates every edge update;
//!   cost grows with `lambda * n^2` and is meant as the oracle.
//! * **lazy**: only pairs with a susceptible target and an infected source
//!   ("channels") can affect the epidemic, and edge clocks never depend on
//!   disease states, so only the channels that are on are stored and the
//!   rest of the edge process is never materialised.

mod dense;
mod ensemble;
mod lazy;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{GroupFractions, ModelParams, Trajectory};

pub use ensemble::{ensemble, ensemble_runs, EnsembleSummary, InitSpec};

use dense::DenseEdges;
use lazy::LazyEdges;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Disease {
    Susceptible,
    Infected,
    Recovered,
}

impl Disease {
    /// Integer code used in the chain's state vector: 0, 1 and -1.
    pub fn code(self) -> i8 {
        match self {
            Disease::Susceptible => 0,
            Disease::Infected => 1,
            Disease::Recovered => -1,
        }
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SimMode {
    #[default]
    Dense,
    Lazy,
}

impl std::str::FromStr for SimMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "dense" => Ok(SimMode::Dense),
            "lazy" => Ok(SimMode::Lazy),
            other => Err(Error::Config(format!("unknown mode {other:?}"))),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum EventKind {
    Infection {
        node: usize,
    },
    Recovery {
        node: usize,
    },
    /// Re-draw of the edge bit of `(target, source)`.
    EdgeUpdate {
        target: usize,
        source: usize,
        state: bool,
    },
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct EventRecord {
    pub time: f64,
    pub kind: EventKind,
}

impl EventRecord {
    pub fn csv_header() -> [&'static str; 4] {
        ["t", "kind", "node_or_pair", "detail"]
    }

    pub fn csv_fields(&self) -> [String; 4] {
        let t = crate::model::format_f64(self.time);
        match self.kind {
            EventKind::Infection { node } => {
                [t, "infection".into(), node.to_string(), String::new()]
            }
            EventKind::Recovery { node } => [t, "recovery".into(), node.to_string(), String::new()],
            EventKind::EdgeUpdate {
                target,
                source,
                state,
            } => [
                t,
                "edge_update".into(),
                format!("{target}:{source}"),
                u8::from(state).to_string(),
            ],
        }
    }
}

pub fn write_events_csv<W: std::io::Write>(writer: W, events: &[EventRecord]) -> Result<()> {
    let mut wtr = csv::Writer::from_writer(writer);
    wtr.write_record(EventRecord::csv_header())?;
    for event in events {
        wtr.write_record(event.csv_fields())?;
    }
    wtr.flush()?;
    Ok(())
}

/// Rates of the chain, flattened for the engines.
#[derive(Clone, Debug)]
pub(crate) struct Rates {
    m: usize,
    /// Per-edge transmission rate, indexed `target_group * m + source_group`.
    transmission: Vec<f64>,
    /// Edge-on probability `rho_ij / n`.
    edge_prob: Vec<f64>,
    recovery: Vec<f64>,
    edge_rate: f64,
}

impl Rates {
    fn new(params: &ModelParams) -> Result<Self> {
        let n = params
            .population()
            .ok_or_else(|| Error::InvalidParams("simulation needs group_sizes".into()))?;
        let b = params
            .transmission()
            .ok_or_else(|| Error::InvalidParams("simulation needs B".into()))?;
        let rho = params
            .edge_scale()
            .ok_or_else(|| Error::InvalidParams("simulation needs rho".into()))?;
        Ok(Self {
            m: params.groups(),
            transmission: b.as_slice().to_vec(),
            edge_prob: rho.as_slice().iter().map(|r| r / n as f64).collect(),
            recovery: params.recovery().to_vec(),
            edge_rate: params.edge_rate(),
        })
    }

    #[inline]
    fn pair(&self, i: usize, j: usize) -> usize {
        i * self.m + j
    }
}

#[derive(Clone, Debug)]
enum EdgeStore {
    Dense(DenseEdges),
    Lazy(LazyEdges),
}

/// Full state of one simulation run.
#[derive(Clone, Debug)]
pub struct NetworkState {
    disease: Vec<Disease>,
    group_of: Vec<usize>,
    counts: [Vec<u64>; 3],
    edges: EdgeStore,
    clock: f64,
    rng: ChaCha8Rng,
    seed: u64,
}

const S: usize = 0;
const I: usize = 1;
const R: usize = 2;

fn uniform(rng: &mut ChaCha8Rng) -> f64 {
    rng.random::<f64>()
}

fn exponential(rng: &mut ChaCha8Rng, rate: f64) -> f64 {
    -(1.0 - uniform(rng)).ln() / rate
}

/// Previous observation of an edge bit.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum EdgeObservation {
    Never,
    Seen { state: bool, time: f64 },
}

/// Draws the current state of an edge bit given its last observation.
///
/// No update in `(last, now]` happens with probability
/// `exp(-lambda (now - last))`, in which case the prior bit is kept;
/// otherwise the bit is a fresh Bernoulli draw.
pub fn propagate_edge<G: Rng>(
    prior: EdgeObservation,
    now: f64,
    edge_prob: f64,
    edge_rate: f64,
    rng: &mut G,
) -> Result<bool> {
    match prior {
        EdgeObservation::Never => Ok(rng.random::<f64>() < edge_prob),
        EdgeObservation::Seen { state, time } => {
            if time > now {
                return Err(Error::ObservationInFuture {
                    last_observed: time,
                    now,
                });
            }
            let keep = (-edge_rate * (now - time)).exp();
            if rng.random::<f64>() < keep {
                Ok(state)
            } else {
                Ok(rng.random::<f64>() < edge_prob)
            }
        }
    }
}

pub fn init_network(
    params: &ModelParams,
    initial_infected: &[u64],
    seed: u64,
    mode: SimMode,
) -> Result<NetworkState> {
    let rates = Rates::new(params)?;
    let sizes = params.group_sizes().expect("checked by Rates::new");
    if initial_infected.len() != sizes.len() {
        return Err(Error::DimensionMismatch(format!(
            "initial_infected has {} entries, expected {}",
            initial_infected.len(),
            sizes.len()
        )));
    }
    if let Some(i) = (0..sizes.len()).find(|&i| initial_infected[i] > sizes[i]) {
        return Err(Error::InvalidState(format!(
            "{} initial infections exceed the size {} of group {i}",
            initial_infected[i], sizes[i]
        )));
    }

    let mut group_of = Vec::new();
    let mut disease = Vec::new();
    for (g, (&size, &infected)) in sizes.iter().zip(initial_infected).enumerate() {
        for k in 0..size {
            group_of.push(g);
            disease.push(if k < infected {
                Disease::Infected
            } else {
                Disease::Susceptible
            });
        }
    }
    let counts = [
        sizes
            .iter()
            .zip(initial_infected)
            .map(|(s, i)| s - i)
            .collect(),
        initial_infected.to_vec(),
        vec![0; sizes.len()],
    ];
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let edges = match mode {
        SimMode::Dense => EdgeStore::Dense(DenseEdges::new(&rates, &group_of, &disease, &mut rng)),
        SimMode::Lazy => EdgeStore::Lazy(LazyEdges::new(&rates, &group_of, &disease, &mut rng)?),
    };
    Ok(NetworkState {
        disease,
        group_of,
        counts,
        edges,
        clock: 0.0,
        rng,
        seed,
    })
}

impl NetworkState {
    pub fn mode(&self) -> SimMode {
        match self.edges {
            EdgeStore::Dense(_) => SimMode::Dense,
            EdgeStore::Lazy(_) => SimMode::Lazy,
        }
    }

    pub fn nodes(&self) -> usize {
        self.disease.len()
    }

    pub fn disease(&self, node: usize) -> Disease {
        self.disease[node]
    }

    pub fn group_of(&self, node: usize) -> usize {
        self.group_of[node]
    }

    pub fn clock(&self) -> f64 {
        self.clock
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn susceptible_counts(&self) -> &[u64] {
        &self.counts[S]
    }

    pub fn infected_counts(&self) -> &[u64] {
        &self.counts[I]
    }

    pub fn recovered_counts(&self) -> &[u64] {
        &self.counts[R]
    }

    pub fn fractions(&self) -> GroupFractions {
        GroupFractions::from_counts(&self.counts[S], &self.counts[I], &self.counts[R])
    }

    /// Edge bit of `(target, source)`; `None` in lazy mode for pairs
    /// that are not an open channel.
    pub fn edge(&self, target: usize, source: usize) -> Option<bool> {
        match &self.edges {
            EdgeStore::Dense(d) => Some(d.bit(target, source)),
            EdgeStore::Lazy(l) => l.channel_state(target, source, &self.disease),
        }
    }

    /// Number of stored edge bits that are on (all edges in dense mode,
    /// open channels in lazy mode).
    pub fn edges_on(&self) -> usize {
        match &self.edges {
            EdgeStore::Dense(d) => d.count_on(),
            EdgeStore::Lazy(l) => l.count_on(),
        }
    }

    /// Directed on-edges from group `source_group` into group `target_group` (dense mode).
    pub fn dense_edges_between(&self, target_group: usize, source_group: usize) -> Option<usize> {
        match &self.edges {
            EdgeStore::Dense(d) => {
                Some(d.count_between(&self.group_of, target_group, source_group))
            }
            EdgeStore::Lazy(_) => None,
        }
    }

    pub fn tracked_edge_bits(&self) -> Option<usize> {
        match &self.edges {
            EdgeStore::Dense(d) => Some(d.len()),
            EdgeStore::Lazy(_) => None,
        }
    }

    fn set_disease(&mut self, node: usize, to: Disease) {
        let g = self.group_of[node];
        let from = self.disease[node];
        let slot = |d: Disease| match d {
            Disease::Susceptible => S,
            Disease::Infected => I,
            Disease::Recovered => R,
        };
        self.counts[slot(from)][g] -= 1;
        self.counts[slot(to)][g] += 1;
        self.disease[node] = to;
    }
}

/// Total rate at which susceptible `node` gets infected:
/// `sum_k B[i][k] * (infected in-neighbours of node in group k)`.
pub fn infection_rate_of(state: &NetworkState, params: &ModelParams, node: usize) -> Result<f64> {
    if state.disease[node] != Disease::Susceptible {
        return Err(Error::NotSusceptible(node));
    }
    let b = params
        .transmission()
        .ok_or_else(|| Error::InvalidParams("simulation needs B".into()))?;
    let i = state.group_of[node];
    let m = params.groups();
    let mut exposure = vec![0u64; m];
    match &state.edges {
        EdgeStore::Dense(d) => {
            for c in 0..state.nodes() {
                if c != node && state.disease[c] == Disease::Infected && d.bit(node, c) {
                    exposure[state.group_of[c]] += 1;
                }
            }
        }
        EdgeStore::Lazy(l) => {
            for c in l.sources_of(node) {
                exposure[state.group_of[c]] += 1;
            }
        }
    }
    Ok((0..m).map(|k| b.get(i, k) * exposure[k] as f64).sum())
}

/// Pending transition chosen by an engine, applied after the caller has
/// seen its time.
#[derive(Clone, Copy, Debug)]
enum Pending {
    Infect {
        node: usize,
    },
    Recover {
        node: usize,
    },
    Edge {
        target: usize,
        source: usize,
        state: bool,
    },
}

impl NetworkState {
    /// Samples the next transition without applying it. `None` means no
    /// transition has positive rate.
    fn draw(&mut self, rates: &Rates) -> Option<(f64, Pending)> {
        let (total, pending) = match &mut self.edges {
            EdgeStore::Dense(d) => d.draw(
                rates,
                &self.disease,
                &self.group_of,
                &self.counts,
                &mut self.rng,
            )?,
            EdgeStore::Lazy(l) => l.draw(rates, &self.counts, &mut self.rng)?,
        };
        let wait = exponential(&mut self.rng, total);
        Some((self.clock + wait, pending))
    }

    fn apply(&mut self, rates: &Rates, time: f64, pending: Pending) -> Result<EventRecord> {
        self.clock = time;
        let kind = match pending {
            Pending::Infect { node, .. } => {
                self.set_disease(node, Disease::Infected);
                match &mut self.edges {
                    EdgeStore::Dense(d) => d.on_infection(node, &self.disease, &self.group_of),
                    EdgeStore::Lazy(l) => {
                        l.on_infection(node, time, rates, &self.group_of, &mut self.rng)?
                    }
                }
                EventKind::Infection { node }
            }
            Pending::Recover { node } => {
                self.set_disease(node, Disease::Recovered);
                match &mut self.edges {
                    EdgeStore::Dense(d) => d.on_recovery(node, &self.disease, &self.group_of),
                    EdgeStore::Lazy(l) => l.on_recovery(node, &self.group_of),
                }
                EventKind::Recovery { node }
            }
            Pending::Edge {
                target,
                source,
                state,
            } => {
                match &mut self.edges {
                    EdgeStore::Dense(d) => {
                        d.set(target, source, state, &self.disease, &self.group_of)
                    }
                    EdgeStore::Lazy(l) => l.set(target, source, state, &self.group_of),
                }
                EventKind::EdgeUpdate {
                    target,
                    source,
                    state,
                }
            }
        };
        Ok(EventRecord { time, kind })
    }
}

/// One transition of a dense-mode chain. Returns `Ok(None)` when the
/// chain is absorbed (total rate zero).
pub fn step_dense(state: &mut NetworkState, params: &ModelParams) -> Result<Option<EventRecord>> {
    if state.mode() != SimMode::Dense {
        return Err(Error::InvalidState(
            "step_dense needs a dense-mode state".into(),
        ));
    }
    let rates = Rates::new(params)?;
    match state.draw(&rates) {
        Some((time, pending)) => state.apply(&rates, time, pending).map(Some),
        None => Ok(None),
    }
}

/// Output of [`simulate`].
#[derive(Clone, Debug)]
pub struct SimOutput {
    pub trajectory: Trajectory,
    pub events: Vec<EventRecord>,
}

#[derive(Clone, Copy, Debug)]
pub struct SimConfig {
    pub t_end: f64,
    pub sample_dt: f64,
    pub record_events: bool,
}

/// Runs the chain from `state.clock()` to `t_end`, sampling group
/// fractions every `sample_dt`. The engine is the one the state was
/// initialised with.
pub fn simulate(
    state: &mut NetworkState,
    params: &ModelParams,
    config: &SimConfig,
) -> Result<SimOutput> {
    if !(config.sample_dt > 0.0 && config.sample_dt.is_finite()) {
        return Err(Error::InvalidParams(format!(
            "sample_dt must be positive, got {}",
            config.sample_dt
        )));
    }
    if !config.t_end.is_finite() || config.t_end < state.clock {
        return Err(Error::InvalidParams(format!(
            "t_end {} precedes the state clock {}",
            config.t_end, state.clock
        )));
    }
    let rates = Rates::new(params)?;
    let start = state.clock;
    let samples = ((config.t_end - start) / config.sample_dt + 1e-9).floor() as usize;
    let sample_time = |k: usize| start + k as f64 * config.sample_dt;

    let mut times = Vec::with_capacity(samples + 1);
    let mut states = Vec::with_capacity(samples + 1);
    let mut events = Vec::new();
    let mut next = 0usize;
    loop {
        let drawn = state.draw(&rates);
        let horizon = drawn.map_or(f64::INFINITY, |(t, _)| t);
        while next <= samples && sample_time(next) < horizon {
            times.push(sample_time(next));
            states.push(state.fractions());
            next += 1;
        }
        match drawn {
            Some((time, pending)) if time <= config.t_end => {
                let record = state.apply(&rates, time, pending)?;
                if config.record_events {
                    events.push(record);
                }
            }
            _ => {
                state.clock = config.t_end;
                break;
            }
        }
    }
    Ok(SimOutput {
        trajectory: Trajectory { times, states },
        events,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::GroupMatrix;

    fn params(
        b: &[Vec<f64>],
        rho: &[Vec<f64>],
        gamma: Vec<f64>,
        lambda: f64,
        sizes: Vec<u64>,
    ) -> ModelParams {
        ModelParams::network(
            GroupMatrix::from_rows(b).unwrap(),
            GroupMatrix::from_rows(rho).unwrap(),
            gamma,
            lambda,
            sizes,
        )
        .unwrap()
    }

    fn two_group() -> ModelParams {
        params(
            &[vec![1.0, 0.5], vec![0.5, 1.5]],
            &[vec![3.0, 2.0], vec![2.0, 3.0]],
            vec![0.5, 1.0],
            2.0,
            vec![12, 8],
        )
    }

    #[test]
    fn init_rejects_too_many_infected() {
        let p = two_group();
        assert!(init_network(&p, &[13, 0], 1, SimMode::Dense).is_err());
        assert!(init_network(&p, &[1], 1, SimMode::Dense).is_err());
    }

    #[test]
    fn zero_rho_dense_has_no_edges() {
        let p = params(&[vec![1.0]], &[vec![0.0]], vec![1.0], 1.0, vec![30]);
        let state = init_network(&p, &[2], 3, SimMode::Dense).unwrap();
        assert_eq!(state.edges_on(), 0);
        assert_eq!(state.tracked_edge_bits(), Some(30 * 29));
    }

    #[test]
    fn no_infected_gives_constant_trajectory() {
        let p = two_group();
        for mode in [SimMode::Dense, SimMode::Lazy] {
            let mut state = init_network(&p, &[0, 0], 5, mode).unwrap();
            let out = simulate(
                &mut state,
                &p,
                &SimConfig {
                    t_end: 3.0,
                    sample_dt: 0.5,
                    record_events: true,
                },
            )
            .unwrap();
            assert_eq!(out.trajectory.len(), 7);
            let first = out.trajectory.states[0].clone();
            assert!(out.trajectory.states.iter().all(|s| *s == first));
            assert!(out
                .events
                .iter()
                .all(|e| matches!(e.kind, EventKind::EdgeUpdate { .. })));
        }
    }

    #[test]
    fn infection_rate_counts_infected_in_neighbours() {
        // Group 0 = {0}, group 1 = {1, 2}; everything connected.
        let p = params(
            &[vec![0.7, 0.3], vec![0.2, 0.4]],
            &[vec![3.0, 3.0], vec![3.0, 3.0]],
            vec![1.0, 1.0],
            1.0,
            vec![1, 2],
        );
        let state = init_network(&p, &[0, 0], 1, SimMode::Dense).unwrap();
        assert_eq!(infection_rate_of(&state, &p, 0).unwrap(), 0.0);

        let state = init_network(&p, &[0, 1], 1, SimMode::Dense).unwrap();
        assert!((infection_rate_of(&state, &p, 0).unwrap() - 0.3).abs() < 1e-15);
        assert!((infection_rate_of(&state, &p, 2).unwrap() - 0.4).abs() < 1e-15);
        assert!(matches!(
            infection_rate_of(&state, &p, 1),
            Err(Error::NotSusceptible(1))
        ));

        let p3 = params(
            &[
                vec![0.7, 0.3, 0.1],
                vec![0.2, 0.4, 0.6],
                vec![0.5, 0.5, 0.5],
            ],
            &[vec![3.0; 3], vec![3.0; 3], vec![3.0; 3]],
            vec![1.0; 3],
            1.0,
            vec![1, 1, 1],
        );
        let state = init_network(&p3, &[0, 1, 1], 1, SimMode::Lazy).unwrap();
        assert!((infection_rate_of(&state, &p3, 0).unwrap() - 0.4).abs() < 1e-15);
    }

    #[test]
    fn reproducible_event_logs() {
        let p = two_group();
        for mode in [SimMode::Dense, SimMode::Lazy] {
            let run = |seed| {
                let mut state = init_network(&p, &[2, 1], seed, mode).unwrap();
                simulate(
                    &mut state,
                    &p,
                    &SimConfig {
                        t_end: 4.0,
                        sample_dt: 0.25,
                        record_events: true,
                    },
                )
                .unwrap()
            };
            let (a, b, c) = (run(11), run(11), run(12));
            assert_eq!(a.events, b.events);
            assert_eq!(a.trajectory, b.trajectory);
            assert_ne!(a.events, c.events);
        }
    }

    #[test]
    fn counts_are_conserved_and_states_monotone() {
        let p = two_group();
        for mode in [SimMode::Dense, SimMode::Lazy] {
            let mut state = init_network(&p, &[3, 2], 7, mode).unwrap();
            let rates = Rates::new(&p).unwrap();
            let mut last = state.disease.clone();
            let mut steps = 0;
            while let Some((time, pending)) = state.draw(&rates) {
                if time > 10.0 || steps > 20_000 {
                    break;
                }
                state.apply(&rates, time, pending).unwrap();
                let total: u64 = (0..2)
                    .map(|g| state.counts[S][g] + state.counts[I][g] + state.counts[R][g])
                    .sum();
                assert_eq!(total, 20);
                for (before, after) in last.iter().zip(&state.disease) {
                    assert!(
                        before.code() == after.code()
                            || matches!(
                                (before, after),
                                (Disease::Susceptible, Disease::Infected)
                                    | (Disease::Infected, Disease::Recovered)
                            )
                    );
                }
                if let EdgeStore::Dense(d) = &state.edges {
                    d.check_caches(&rates, &state.disease, &state.group_of);
                }
                if let EdgeStore::Lazy(l) = &state.edges {
                    l.check_consistency(&state.disease, &state.group_of);
                }
                last = state.disease.clone();
                steps += 1;
            }
        }
    }

    #[test]
    fn lone_recovery_time_is_exponential() {
        let gamma = 2.0;
        let p = params(&[vec![1.0]], &[vec![0.0]], vec![gamma], 1.0, vec![3]);
        let runs = 10_000;
        let mut sum = 0.0;
        for seed in 0..runs {
            let mut state = init_network(&p, &[1], seed, SimMode::Dense).unwrap();
            loop {
                let event = step_dense(&mut state, &p).unwrap().unwrap();
                if let EventKind::Recovery { node } = event.kind {
                    assert_eq!(node, 0);
                    sum += event.time;
                    break;
                }
                assert!(matches!(event.kind, EventKind::EdgeUpdate { .. }));
            }
        }
        let mean = sum / runs as f64;
        let se = (1.0 / gamma) / (runs as f64).sqrt();
        assert!((mean - 1.0 / gamma).abs() < 4.0 * se, "mean {mean}");
    }

    #[test]
    fn competing_infection_and_recovery() {
        // n = 2, one S (node 1) one I (node 0), edge always on (rho / n = 1).
        let (b, gamma) = (1.5, 0.5);
        let p = params(&[vec![b]], &[vec![2.0]], vec![gamma], 1.0, vec![2]);
        let runs = 20_000usize;
        let mut infections = 0usize;
        for seed in 0..runs as u64 {
            let mut state = init_network(&p, &[1], seed, SimMode::Dense).unwrap();
            loop {
                match step_dense(&mut state, &p).unwrap().unwrap().kind {
                    EventKind::Infection { node } => {
                        assert_eq!(node, 1);
                        infections += 1;
                        break;
                    }
                    EventKind::Recovery { .. } => break,
                    EventKind::EdgeUpdate { state: on, .. } => assert!(on),
                }
            }
        }
        let expected = b / (b + gamma);
        let freq = infections as f64 / runs as f64;
        let sd = (expected * (1.0 - expected) / runs as f64).sqrt();
        assert!((freq - expected).abs() < 4.0 * sd, "freq {freq}");
    }

    #[test]
    fn all_recovered_only_edge_events() {
        let p = params(&[vec![1.0]], &[vec![1.0]], vec![50.0], 1.0, vec![4]);
        let mut state = init_network(&p, &[4], 9, SimMode::Dense).unwrap();
        let mut recoveries = 0;
        while recoveries < 4 {
            if let EventKind::Recovery { .. } = step_dense(&mut state, &p).unwrap().unwrap().kind {
                recoveries += 1;
            }
        }
        for _ in 0..200 {
            let ev = step_dense(&mut state, &p).unwrap().unwrap();
            assert!(matches!(ev.kind, EventKind::EdgeUpdate { .. }));
        }
    }

    #[test]
    fn propagate_edge_cases() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let seen = EdgeObservation::Seen {
            state: true,
            time: 2.0,
        };
        for _ in 0..100 {
            assert!(propagate_edge(seen, 2.0, 0.0, 5.0, &mut rng).unwrap());
        }
        assert!(propagate_edge(seen, 1.0, 0.1, 1.0, &mut rng).is_err());

        // Long gap: stationary Bernoulli(0.25).
        let draws = 100_000;
        let on = (0..draws)
            .filter(|_| propagate_edge(seen, 1e6, 0.25, 1.0, &mut rng).unwrap())
            .count();
        let sd = (0.25 * 0.75 / draws as f64).sqrt();
        assert!((on as f64 / draws as f64 - 0.25).abs() < 4.0 * sd);

        // Gap ln 2 at lambda = 1: P(on) = 0.5 + 0.5 * 0.1 = 0.55.
        let prior = EdgeObservation::Seen {
            state: true,
            time: 0.0,
        };
        let on = (0..draws)
            .filter(|_| propagate_edge(prior, std::f64::consts::LN_2, 0.1, 1.0, &mut rng).unwrap())
            .count();
        let sd = (0.55 * 0.45 / draws as f64).sqrt();
        assert!((on as f64 / draws as f64 - 0.55).abs() < 4.0 * sd, "{on}");
    }

    #[test]
    fn event_csv_format() {
        let events = [
            EventRecord {
                time: 0.5,
                kind: EventKind::Infection { node: 3 },
            },
            EventRecord {
                time: 0.75,
                kind: EventKind::EdgeUpdate {
                    target: 1,
                    source: 2,
                    state: true,
                },
            },
        ];
        let mut buf = Vec::new();
        write_events_csv(&mut buf, &events).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines[0], "t,kind,node_or_pair,detail");
        assert_eq!(lines[1], "5.0000000000000000e-1,infection,3,");
        assert_eq!(lines[2], "7.5000000000000000e-1,edge_update,1:2,1");
    }
}
