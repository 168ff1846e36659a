use rand::Rng;
use rand_chacha::ChaCha8Rng;

use super::{uniform, Disease, Pending, Rates, I};

/// All `n(n-1)` edge bits in lexicographic pair order, plus cached
/// exposure counts so rates are exact integers times `B`.
#[derive(Clone, Debug)]
pub(super) struct DenseEdges {
    n: usize,
    m: usize,
    bits: Vec<bool>,
    /// `exposure[a * m + k]`: on-edges into `a` from infected nodes of group `k`.
    exposure: Vec<u32>,
    /// `pressure[i * m + k]`: sum of `exposure[a * m + k]` over susceptible `a` in group `i`.
    pressure: Vec<u64>,
}

impl DenseEdges {
    pub(super) fn new(
        rates: &Rates,
        group_of: &[usize],
        disease: &[Disease],
        rng: &mut ChaCha8Rng,
    ) -> Self {
        let n = group_of.len();
        let m = rates.m;
        let mut bits = Vec::with_capacity(n * n.saturating_sub(1));
        for a in 0..n {
            for b in 0..n {
                if a != b {
                    let p = rates.edge_prob[rates.pair(group_of[a], group_of[b])];
                    bits.push(rng.random::<f64>() < p);
                }
            }
        }
        let mut edges = Self {
            n,
            m,
            bits,
            exposure: vec![0; n * m],
            pressure: vec![0; m * m],
        };
        edges.rebuild(disease, group_of);
        edges
    }

    fn rebuild(&mut self, disease: &[Disease], group_of: &[usize]) {
        self.exposure.iter_mut().for_each(|e| *e = 0);
        self.pressure.iter_mut().for_each(|z| *z = 0);
        for a in 0..self.n {
            for c in 0..self.n {
                if a != c && disease[c] == Disease::Infected && self.bit(a, c) {
                    self.exposure[a * self.m + group_of[c]] += 1;
                }
            }
            if disease[a] == Disease::Susceptible {
                let i = group_of[a];
                for k in 0..self.m {
                    self.pressure[i * self.m + k] += u64::from(self.exposure[a * self.m + k]);
                }
            }
        }
    }

    #[inline]
    fn index(&self, target: usize, source: usize) -> usize {
        debug_assert_ne!(target, source);
        target * (self.n - 1) + if source < target { source } else { source - 1 }
    }

    #[inline]
    fn pair_of(&self, index: usize) -> (usize, usize) {
        let target = index / (self.n - 1);
        let r = index % (self.n - 1);
        (target, if r < target { r } else { r + 1 })
    }

    #[inline]
    pub(super) fn bit(&self, target: usize, source: usize) -> bool {
        self.bits[self.index(target, source)]
    }

    pub(super) fn len(&self) -> usize {
        self.bits.len()
    }

    pub(super) fn count_on(&self) -> usize {
        self.bits.iter().filter(|&&b| b).count()
    }

    pub(super) fn count_between(
        &self,
        group_of: &[usize],
        target_group: usize,
        source_group: usize,
    ) -> usize {
        (0..self.bits.len())
            .filter(|&idx| {
                let (a, b) = self.pair_of(idx);
                self.bits[idx] && group_of[a] == target_group && group_of[b] == source_group
            })
            .count()
    }

    fn node_rate(&self, rates: &Rates, group: usize, node: usize) -> f64 {
        (0..self.m)
            .map(|k| {
                rates.transmission[rates.pair(group, k)]
                    * f64::from(self.exposure[node * self.m + k])
            })
            .sum()
    }

    pub(super) fn draw(
        &mut self,
        rates: &Rates,
        disease: &[Disease],
        group_of: &[usize],
        counts: &[Vec<u64>; 3],
        rng: &mut ChaCha8Rng,
    ) -> Option<(f64, Pending)> {
        let infection: f64 = self
            .pressure
            .iter()
            .zip(&rates.transmission)
            .map(|(&z, &b)| z as f64 * b)
            .sum();
        let recovery: f64 = counts[I]
            .iter()
            .zip(&rates.recovery)
            .map(|(&c, &g)| c as f64 * g)
            .sum();
        let pairs = self.bits.len();
        let edge = rates.edge_rate * pairs as f64;
        let total = infection + recovery + edge;
        if total <= 0.0 {
            return None;
        }
        let mut u = uniform(rng) * total;

        if u < infection {
            let mut fallback = None;
            for a in 0..self.n {
                if disease[a] != Disease::Susceptible {
                    continue;
                }
                let w = self.node_rate(rates, group_of[a], a);
                if w > 0.0 {
                    fallback = Some(a);
                    if u < w {
                        return Some((total, Pending::Infect { node: a }));
                    }
                    u -= w;
                }
            }
            let node = fallback.expect("positive infection rate has a susceptible target");
            return Some((total, Pending::Infect { node }));
        }
        u -= infection;

        if u < recovery {
            let mut fallback = None;
            for a in 0..self.n {
                if disease[a] != Disease::Infected {
                    continue;
                }
                let w = rates.recovery[group_of[a]];
                if w > 0.0 {
                    fallback = Some(a);
                    if u < w {
                        return Some((total, Pending::Recover { node: a }));
                    }
                    u -= w;
                }
            }
            let node = fallback.expect("positive recovery rate has an infected node");
            return Some((total, Pending::Recover { node }));
        }
        u -= recovery;

        let index = ((u / rates.edge_rate) as usize).min(pairs - 1);
        let (target, source) = self.pair_of(index);
        let p = rates.edge_prob[rates.pair(group_of[target], group_of[source])];
        let state = uniform(rng) < p;
        Some((
            total,
            Pending::Edge {
                target,
                source,
                state,
            },
        ))
    }

    pub(super) fn set(
        &mut self,
        target: usize,
        source: usize,
        state: bool,
        disease: &[Disease],
        group_of: &[usize],
    ) {
        let idx = self.index(target, source);
        if self.bits[idx] == state {
            return;
        }
        self.bits[idx] = state;
        if disease[source] == Disease::Infected {
            let k = group_of[source];
            let e = &mut self.exposure[target * self.m + k];
            if state {
                *e += 1;
            } else {
                *e -= 1;
            }
            if disease[target] == Disease::Susceptible {
                let z = &mut self.pressure[group_of[target] * self.m + k];
                if state {
                    *z += 1;
                } else {
                    *z -= 1;
                }
            }
        }
    }

    /// `node` has just moved S -> I.
    pub(super) fn on_infection(&mut self, node: usize, disease: &[Disease], group_of: &[usize]) {
        let i = group_of[node];
        for k in 0..self.m {
            self.pressure[i * self.m + k] -= u64::from(self.exposure[node * self.m + k]);
        }
        for a in 0..self.n {
            if a != node && self.bit(a, node) {
                self.exposure[a * self.m + i] += 1;
                if disease[a] == Disease::Susceptible {
                    self.pressure[group_of[a] * self.m + i] += 1;
                }
            }
        }
    }

    /// `node` has just moved I -> R.
    pub(super) fn on_recovery(&mut self, node: usize, disease: &[Disease], group_of: &[usize]) {
        let i = group_of[node];
        for a in 0..self.n {
            if a != node && self.bit(a, node) {
                self.exposure[a * self.m + i] -= 1;
                if disease[a] == Disease::Susceptible {
                    self.pressure[group_of[a] * self.m + i] -= 1;
                }
            }
        }
    }

    #[cfg(test)]
    pub(super) fn check_caches(&self, _rates: &Rates, disease: &[Disease], group_of: &[usize]) {
        let mut fresh = self.clone();
        fresh.rebuild(disease, group_of);
        assert_eq!(fresh.exposure, self.exposure);
        assert_eq!(fresh.pressure, self.pressure);
    }
}
