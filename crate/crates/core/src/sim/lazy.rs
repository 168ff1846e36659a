use indexmap::IndexSet;
use rand::Rng;
use rand_chacha::ChaCha8Rng;

use super::{propagate_edge, uniform, Disease, EdgeObservation, Pending, Rates, I, S};
use crate::error::Result;

/// Channel bookkeeping for the lazy engine.
///
/// A channel is an ordered pair (susceptible target, infected source).
/// Channels that are off are not stored: an off channel turns on at rate
/// `lambda * p`, which is sampled per group pair as a uniform draw over
/// `S_i x I_j`. A pair is a channel over a single time interval (disease
/// states only move S -> I -> R), so a retired channel never reopens and
/// its edge state is dropped rather than archived.
#[derive(Clone, Debug)]
pub(super) struct LazyEdges {
    m: usize,
    /// Susceptible and infected members per group.
    members: [Vec<Vec<u32>>; 2],
    /// Position of each node inside its `members` list.
    slot: Vec<u32>,
    /// Open, on channels `(target, source)` per group pair.
    on: Vec<IndexSet<(u32, u32)>>,
    sources: Vec<Vec<u32>>,
    targets: Vec<Vec<u32>>,
}

fn remove_value(list: &mut Vec<u32>, value: u32) {
    if let Some(pos) = list.iter().position(|&v| v == value) {
        list.swap_remove(pos);
    }
}

impl LazyEdges {
    pub(super) fn new(
        rates: &Rates,
        group_of: &[usize],
        disease: &[Disease],
        rng: &mut ChaCha8Rng,
    ) -> Result<Self> {
        let n = group_of.len();
        let m = rates.m;
        let mut edges = Self {
            m,
            members: [vec![Vec::new(); m], vec![Vec::new(); m]],
            slot: vec![0; n],
            on: vec![IndexSet::new(); m * m],
            sources: vec![Vec::new(); n],
            targets: vec![Vec::new(); n],
        };
        for (node, (&g, &d)) in group_of.iter().zip(disease).enumerate() {
            let family = match d {
                Disease::Susceptible => S,
                Disease::Infected => I,
                Disease::Recovered => continue,
            };
            edges.slot[node] = edges.members[family][g].len() as u32;
            edges.members[family][g].push(node as u32);
        }
        for (source, &d) in disease.iter().enumerate() {
            if d == Disease::Infected {
                edges.open_channels(source, 0.0, rates, group_of, rng)?;
            }
        }
        Ok(edges)
    }

    fn take(&mut self, family: usize, group: usize, node: usize) {
        let list = &mut self.members[family][group];
        let pos = self.slot[node] as usize;
        debug_assert_eq!(list[pos] as usize, node);
        list.swap_remove(pos);
        if let Some(&moved) = list.get(pos) {
            self.slot[moved as usize] = pos as u32;
        }
    }

    fn put(&mut self, family: usize, group: usize, node: usize) {
        let list = &mut self.members[family][group];
        self.slot[node] = list.len() as u32;
        list.push(node as u32);
    }

    fn insert(&mut self, target: usize, source: usize, group_of: &[usize]) {
        let key = (target as u32, source as u32);
        if self.on[group_of[target] * self.m + group_of[source]].insert(key) {
            self.sources[target].push(source as u32);
            self.targets[source].push(target as u32);
        }
    }

    fn remove(&mut self, target: usize, source: usize, group_of: &[usize]) {
        let key = (target as u32, source as u32);
        if self.on[group_of[target] * self.m + group_of[source]].swap_remove(&key) {
            remove_value(&mut self.sources[target], source as u32);
            remove_value(&mut self.targets[source], target as u32);
        }
    }

    /// Draws the edge state of every new channel `(c, source)` from the
    /// never-observed law.
    fn open_channels(
        &mut self,
        source: usize,
        now: f64,
        rates: &Rates,
        group_of: &[usize],
        rng: &mut ChaCha8Rng,
    ) -> Result<()> {
        let j = group_of[source];
        for k in 0..self.m {
            let p = rates.edge_prob[rates.pair(k, j)];
            if p <= 0.0 {
                continue;
            }
            for idx in 0..self.members[S][k].len() {
                let target = self.members[S][k][idx] as usize;
                if propagate_edge(EdgeObservation::Never, now, p, rates.edge_rate, rng)? {
                    self.insert(target, source, group_of);
                }
            }
        }
        Ok(())
    }

    pub(super) fn channel_state(
        &self,
        target: usize,
        source: usize,
        disease: &[Disease],
    ) -> Option<bool> {
        if disease[target] != Disease::Susceptible || disease[source] != Disease::Infected {
            return None;
        }
        Some(self.sources[target].contains(&(source as u32)))
    }

    pub(super) fn sources_of(&self, target: usize) -> impl Iterator<Item = usize> + '_ {
        self.sources[target].iter().map(|&s| s as usize)
    }

    pub(super) fn count_on(&self) -> usize {
        self.on.iter().map(IndexSet::len).sum()
    }

    pub(super) fn draw(
        &mut self,
        rates: &Rates,
        counts: &[Vec<u64>; 3],
        rng: &mut ChaCha8Rng,
    ) -> Option<(f64, Pending)> {
        let m = self.m;
        let mm = m * m;
        // Category order: transmissions (per group pair), recoveries (per
        // group), switch-on (per group pair), switch-off (per group pair).
        let weight = |c: usize| -> f64 {
            if c < mm {
                rates.transmission[c] * self.on[c].len() as f64
            } else if c < mm + m {
                let i = c - mm;
                rates.recovery[i] * counts[I][i] as f64
            } else if c < 2 * mm + m {
                let p = c - mm - m;
                let (i, j) = (p / m, p % m);
                rates.edge_rate * rates.edge_prob[p] * (counts[S][i] * counts[I][j]) as f64
            } else {
                let p = c - 2 * mm - m;
                rates.edge_rate * (1.0 - rates.edge_prob[p]) * self.on[p].len() as f64
            }
        };
        let categories = 3 * mm + m;
        let total: f64 = (0..categories).map(weight).sum();
        if total <= 0.0 {
            return None;
        }
        let mut u = uniform(rng) * total;
        let mut chosen = None;
        for c in 0..categories {
            let w = weight(c);
            if w > 0.0 {
                chosen = Some(c);
                if u < w {
                    break;
                }
                u -= w;
            }
        }
        let c = chosen.expect("positive total rate");
        let pending = if c < mm {
            let idx = rng.random_range(0..self.on[c].len());
            let &(target, _) = self.on[c].get_index(idx).expect("index in range");
            Pending::Infect {
                node: target as usize,
            }
        } else if c < mm + m {
            let list = &self.members[I][c - mm];
            Pending::Recover {
                node: list[rng.random_range(0..list.len())] as usize,
            }
        } else if c < 2 * mm + m {
            let p = c - mm - m;
            let (i, j) = (p / m, p % m);
            let target = self.members[S][i][rng.random_range(0..self.members[S][i].len())] as usize;
            let source = self.members[I][j][rng.random_range(0..self.members[I][j].len())] as usize;
            Pending::Edge {
                target,
                source,
                state: true,
            }
        } else {
            let p = c - 2 * mm - m;
            let idx = rng.random_range(0..self.on[p].len());
            let &(target, source) = self.on[p].get_index(idx).expect("index in range");
            Pending::Edge {
                target: target as usize,
                source: source as usize,
                state: false,
            }
        };
        Some((total, pending))
    }

    pub(super) fn set(&mut self, target: usize, source: usize, state: bool, group_of: &[usize]) {
        if state {
            self.insert(target, source, group_of);
        } else {
            self.remove(target, source, group_of);
        }
    }

    /// `node` has just moved S -> I.
    pub(super) fn on_infection(
        &mut self,
        node: usize,
        now: f64,
        rates: &Rates,
        group_of: &[usize],
        rng: &mut ChaCha8Rng,
    ) -> Result<()> {
        let g = group_of[node];
        self.take(S, g, node);
        self.put(I, g, node);
        for source in std::mem::take(&mut self.sources[node]) {
            let source = source as usize;
            self.on[g * self.m + group_of[source]].swap_remove(&(node as u32, source as u32));
            remove_value(&mut self.targets[source], node as u32);
        }
        self.open_channels(node, now, rates, group_of, rng)
    }

    /// `node` has just moved I -> R.
    pub(super) fn on_recovery(&mut self, node: usize, group_of: &[usize]) {
        let g = group_of[node];
        self.take(I, g, node);
        for target in std::mem::take(&mut self.targets[node]) {
            let target = target as usize;
            self.on[group_of[target] * self.m + g].swap_remove(&(target as u32, node as u32));
            remove_value(&mut self.sources[target], node as u32);
        }
    }

    #[cfg(test)]
    pub(super) fn check_consistency(&self, disease: &[Disease], group_of: &[usize]) {
        for (family, want) in [(S, Disease::Susceptible), (I, Disease::Infected)] {
            for (g, list) in self.members[family].iter().enumerate() {
                for (pos, &node) in list.iter().enumerate() {
                    assert_eq!(disease[node as usize], want);
                    assert_eq!(group_of[node as usize], g);
                    assert_eq!(self.slot[node as usize] as usize, pos);
                }
            }
        }
        let mut total = 0;
        for (p, set) in self.on.iter().enumerate() {
            for &(a, b) in set {
                let (a, b) = (a as usize, b as usize);
                assert_eq!(disease[a], Disease::Susceptible);
                assert_eq!(disease[b], Disease::Infected);
                assert_eq!(group_of[a] * self.m + group_of[b], p);
                assert!(self.sources[a].contains(&(b as u32)));
                assert!(self.targets[b].contains(&(a as u32)));
                total += 1;
            }
        }
        assert_eq!(total, self.sources.iter().map(Vec::len).sum::<usize>());
        assert_eq!(total, self.targets.iter().map(Vec::len).sum::<usize>());
    }
}
