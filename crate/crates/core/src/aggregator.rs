//! The fronthaul aggregator: `N` RRUs share a link of capacity `B_c`.
//!
//! The aggregator state `k = (k_1..k_M)` counts RRUs at each rate. RRUs wake
//! at rate `lambda`, step up from rate `m` at `lambda_m` and down at `mu_m`
//! (from [`crate::rru::transition_rates`]); a step that would push the summed
//! rate past `B_c` is refused. The resulting chain is reversible, so its
//! stationary law has the product form
//!
//! ```text
//! P(k) ∝ C(N, K) K! / prod k_i! * prod_i (lambda_{i-1} / mu_i)^(k_i + .. + k_M)
//! ```
//!
//! truncated to the feasible set.

use std::collections::HashMap;

use crate::config::{RateSet, Scenario};
use crate::ctmc::{Distribution, RateMatrix};
use crate::error::{Error, Result};
use crate::math::{ln_factorial_table, log_sum_exp};
use crate::rru::{self, RruChainSpec, RruRates};

pub const DEFAULT_STATE_CAP: usize = 5_000_000;

/// `floor(B_c / d_1)`: how many RRUs can be active at the lowest rate.
pub fn max_rru(capacity: f64, d1: f64) -> u64 {
    // tolerate rates like 614.4 whose multiples are inexact in binary
    (capacity / d1 * (1.0 + 1e-12)).floor() as u64
}

fn fits(load: f64, capacity: f64) -> bool {
    load <= capacity * (1.0 + 1e-9)
}

/// How a cluster larger than `floor(B_c / d_1)` is modelled.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum ClusterConvention {
    /// Every one of the `N` RRUs can wake up: the wake-up rate is
    /// `(N - K) lambda` and the binomial uses `N`.
    #[default]
    Exact,
    /// Only `min(N, N_max)` RRUs take part, in both the binomial and the
    /// wake-up rate.
    Capped,
}

#[derive(Debug, Clone, PartialEq)]
pub struct AggregatorSpec {
    cluster_size: u32,
    rate_set: RateSet,
    capacity: f64,
    rru_rates: RruRates,
    convention: ClusterConvention,
    state_cap: usize,
}

impl AggregatorSpec {
    pub fn new(cluster_size: u32, rate_set: RateSet, capacity: f64, rru_rates: RruRates) -> Result<Self> {
        if cluster_size == 0 {
            return Err(Error::config("cluster_size", "must be at least 1"));
        }
        if !(capacity > rate_set.rate(1)) {
            return Err(Error::config(
                "fha_capacity_mbps",
                format!("must exceed the lowest rate {} Mbit/s", rate_set.rate(1)),
            ));
        }
        if rru_rates.levels() != rate_set.len() {
            return Err(Error::config(
                "rru_rates",
                "level count does not match the rate set",
            ));
        }
        if rru_rates
            .up
            .iter()
            .chain(&rru_rates.down)
            .any(|&r| !(r > 0.0 && r.is_finite()))
        {
            return Err(Error::InvalidParameter(
                "RRU transition rates must be positive".into(),
            ));
        }
        Ok(Self {
            cluster_size,
            rate_set,
            capacity,
            rru_rates,
            convention: ClusterConvention::default(),
            state_cap: DEFAULT_STATE_CAP,
        })
    }

    /// Solves the per-RRU model of a scenario and wraps it.
    pub fn from_scenario(scenario: &Scenario) -> Result<Self> {
        let rru_spec = RruChainSpec::new(
            scenario.rate_set.clone(),
            scenario.thresholds.clone(),
            scenario.traffic,
        )?;
        let rates = rru::transition_rates(&rru_spec)?;
        let n =
            u32::try_from(scenario.cluster_size).map_err(|_| Error::config("cluster_size", "too large"))?;
        Self::new(n, scenario.rate_set.clone(), scenario.capacity_mbps, rates)
    }

    pub fn with_convention(mut self, convention: ClusterConvention) -> Self {
        self.convention = convention;
        self
    }

    pub fn with_state_cap(mut self, cap: usize) -> Self {
        self.state_cap = cap;
        self
    }

    /// The same spec with `mu_level` scaled by `factor`.
    pub fn with_scaled_down_rate(&self, level: usize, factor: f64) -> Self {
        let mut out = self.clone();
        out.rru_rates.down[level - 1] *= factor;
        out
    }

    pub fn cluster_size(&self) -> u32 {
        self.cluster_size
    }

    pub fn rate_set(&self) -> &RateSet {
        &self.rate_set
    }

    pub fn capacity(&self) -> f64 {
        self.capacity
    }

    pub fn rru_rates(&self) -> &RruRates {
        &self.rru_rates
    }

    pub fn convention(&self) -> ClusterConvention {
        self.convention
    }

    pub fn levels(&self) -> usize {
        self.rate_set.len()
    }

    /// Wake-up rate of a single idle RRU.
    pub fn lambda(&self) -> f64 {
        self.rru_rates.up[0]
    }

    pub fn max_rru(&self) -> u64 {
        max_rru(self.capacity, self.rate_set.rate(1))
    }

    /// `N_RRU`: the population entering the binomial and the wake-up rate.
    pub fn effective_cluster_size(&self) -> u32 {
        match self.convention {
            ClusterConvention::Exact => self.cluster_size,
            ClusterConvention::Capped => self.max_rru().min(u64::from(self.cluster_size)) as u32,
        }
    }
}

/// RRU counts per rate level.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct AggregatorState {
    pub k: Vec<u32>,
}

impl AggregatorState {
    /// Number of active RRUs, `K_s`.
    pub fn active(&self) -> u32 {
        self.k.iter().sum()
    }

    /// Summed fronthaul rate in Mbit/s.
    pub fn load(&self, rates: &RateSet) -> f64 {
        self.k
            .iter()
            .zip(rates.rates())
            .map(|(&k, &d)| f64::from(k) * d)
            .sum()
    }
}

#[derive(Debug, Clone)]
pub struct StateSpace {
    states: Vec<AggregatorState>,
    index: HashMap<Vec<u32>, usize>,
}

impl StateSpace {
    pub fn states(&self) -> &[AggregatorState] {
        &self.states
    }

    pub fn len(&self) -> usize {
        self.states.len()
    }

    pub fn is_empty(&self) -> bool {
        self.states.is_empty()
    }

    pub fn index_of(&self, k: &[u32]) -> Option<usize> {
        self.index.get(k).copied()
    }
}

/// Every `k` with `sum k_i <= N_RRU` and `sum d_i k_i <= B_c`, in
/// lexicographic order.
pub fn enumerate_states(spec: &AggregatorSpec) -> Result<StateSpace> {
    fn walk(
        level: usize,
        rates: &[f64],
        users_left: u32,
        capacity_left: f64,
        current: &mut Vec<u32>,
        out: &mut Vec<AggregatorState>,
        cap: usize,
    ) -> Result<()> {
        if level == rates.len() {
            if out.len() >= cap {
                return Err(Error::Capacity {
                    states: out.len() + 1,
                    cap,
                });
            }
            out.push(AggregatorState { k: current.clone() });
            return Ok(());
        }
        let mut k = 0;
        loop {
            let used = f64::from(k) * rates[level];
            if k > users_left || !fits(used, capacity_left) {
                break;
            }
            current.push(k);
            walk(
                level + 1,
                rates,
                users_left - k,
                capacity_left - used,
                current,
                out,
                cap,
            )?;
            current.pop();
            k += 1;
        }
        Ok(())
    }

    let mut states = Vec::new();
    walk(
        0,
        spec.rate_set.rates(),
        spec.effective_cluster_size(),
        spec.capacity,
        &mut Vec::new(),
        &mut states,
        spec.state_cap,
    )?;
    let index = states.iter().enumerate().map(|(i, s)| (s.k.clone(), i)).collect();
    Ok(StateSpace { states, index })
}

/// Transition rate between two feasible states; zero unless they differ by a
/// single RRU waking, sleeping or changing rate by one step.
pub fn transition_rate(from: &AggregatorState, to: &AggregatorState, spec: &AggregatorSpec) -> f64 {
    let m = spec.levels();
    let rates = &spec.rru_rates;
    let diff: Vec<i64> =
        to.k.iter()
            .zip(&from.k)
            .map(|(&a, &b)| i64::from(a) - i64::from(b))
            .collect();
    let nonzero: Vec<usize> = (0..m).filter(|&i| diff[i] != 0).collect();
    match nonzero.as_slice() {
        // wake-up or sleep at the lowest rate
        [0] if diff[0] == 1 => {
            let n = spec.effective_cluster_size();
            let active = from.active();
            if active < n {
                f64::from(n - active) * spec.lambda()
            } else {
                0.0
            }
        }
        [0] if diff[0] == -1 => f64::from(from.k[0]) * rates.down_rate(1),
        [a, b] if *b == a + 1 => {
            let level = a + 1;
            if diff[*a] == -1 && diff[*b] == 1 {
                f64::from(from.k[*a]) * rates.up_rate(level)
            } else if diff[*a] == 1 && diff[*b] == -1 {
                f64::from(from.k[*b]) * rates.down_rate(level + 1)
            } else {
                0.0
            }
        }
        _ => 0.0,
    }
}

/// Neighbours of `k` reachable in one step, with their rates.
fn outgoing(state: &AggregatorState, spec: &AggregatorSpec, space: &StateSpace) -> Vec<(usize, f64)> {
    let m = spec.levels();
    let mut out = Vec::with_capacity(2 * m);
    let mut push = |k: Vec<u32>| {
        if let Some(j) = space.index_of(&k) {
            let r = transition_rate(state, &space.states[j], spec);
            if r > 0.0 {
                out.push((j, r));
            }
        }
    };
    let mut k = state.k.clone();
    k[0] += 1;
    push(k);
    if state.k[0] > 0 {
        let mut k = state.k.clone();
        k[0] -= 1;
        push(k);
    }
    for a in 0..m.saturating_sub(1) {
        if state.k[a] > 0 {
            let mut k = state.k.clone();
            k[a] -= 1;
            k[a + 1] += 1;
            push(k);
        }
        if state.k[a + 1] > 0 {
            let mut k = state.k.clone();
            k[a] += 1;
            k[a + 1] -= 1;
            push(k);
        }
    }
    out
}

/// Dense generator of the aggregator chain over `space`.
pub fn generator(spec: &AggregatorSpec, space: &StateSpace) -> Result<RateMatrix> {
    let mut t = Vec::new();
    for (i, s) in space.states.iter().enumerate() {
        for (j, r) in outgoing(s, spec, space) {
            t.push((i, j, r));
        }
    }
    RateMatrix::from_transitions(space.len(), t)
}

/// Product-form stationary distribution, evaluated in log space.
pub fn product_form(spec: &AggregatorSpec) -> Result<(StateSpace, Distribution)> {
    let space = enumerate_states(spec)?;
    let n = spec.effective_cluster_size();
    let lf = ln_factorial_table(n as usize);
    let rates = &spec.rru_rates;
    let ln_ratio: Vec<f64> = (1..=spec.levels())
        .map(|i| rates.up_rate(i - 1).ln() - rates.down_rate(i).ln())
        .collect();
    let ln_w: Vec<f64> = space
        .states
        .iter()
        .map(|s| {
            let big_k = s.active() as usize;
            // C(N, K) K! = N! / (N - K)!
            let mut w = lf[n as usize] - lf[n as usize - big_k];
            let mut tail = big_k as u32;
            for (i, &k) in s.k.iter().enumerate() {
                w -= lf[k as usize];
                w += f64::from(tail) * ln_ratio[i];
                tail -= k;
            }
            w
        })
        .collect();
    let total = log_sum_exp(&ln_w);
    let dist = Distribution::new(ln_w.iter().map(|w| (w - total).exp()).collect())?;
    Ok((space, dist))
}

/// Blocking of rate upgrades at the aggregator.
///
/// Every call that needs its RRU to wake up or step up a rate is an upgrade
/// request; the request is refused when the new summed rate would exceed
/// `B_c`. Component `m` is the refused flow of `d_m -> d_{m+1}` requests
/// (`m = 0` is wake-up) over the total offered upgrade flow, so the
/// components add up to the fraction of upgrade requests refused. Wake-ups
/// are offered by all `N - K` idle RRUs of the cluster.
#[derive(Debug, Clone, PartialEq)]
pub struct BlockingReport {
    pub per_rate: Vec<f64>,
    pub total: f64,
    /// Share of the offered upgrade flow made up by each request type.
    pub offered_share: Vec<f64>,
    /// Number of states in which a request of each type is refused.
    pub set_sizes: Vec<usize>,
    pub n_rru_effective: u32,
}

pub fn blocking(spec: &AggregatorSpec) -> Result<BlockingReport> {
    let (space, dist) = product_form(spec)?;
    Ok(blocking_with(spec, &space, &dist))
}

/// [`blocking`] for a precomputed distribution over `space`.
pub fn blocking_with(spec: &AggregatorSpec, space: &StateSpace, dist: &Distribution) -> BlockingReport {
    let m = spec.levels();
    let rates = spec.rate_set.rates();
    let n = spec.cluster_size;
    let mut offered = vec![0.0; m];
    let mut refused = vec![0.0; m];
    let mut set_sizes = vec![0; m];
    for (s, &p) in space.states.iter().zip(dist.probs()) {
        let load = s.load(&spec.rate_set);
        let active = s.active();
        if active < n {
            let flow = f64::from(n - active) * spec.lambda() * p;
            offered[0] += flow;
            if !fits(load + rates[0], spec.capacity) {
                refused[0] += flow;
                set_sizes[0] += 1;
            }
        }
        for level in 1..m {
            let k = s.k[level - 1];
            if k == 0 {
                continue;
            }
            let flow = f64::from(k) * spec.rru_rates.up_rate(level) * p;
            offered[level] += flow;
            if !fits(load - rates[level - 1] + rates[level], spec.capacity) {
                refused[level] += flow;
                set_sizes[level] += 1;
            }
        }
    }
    let total_offered: f64 = offered.iter().sum();
    let per_rate: Vec<f64> = refused.iter().map(|r| r / total_offered).collect();
    BlockingReport {
        total: per_rate.iter().sum::<f64>().min(1.0),
        per_rate,
        offered_share: offered.iter().map(|o| o / total_offered).collect(),
        set_sizes,
        n_rru_effective: spec.effective_cluster_size(),
    }
}

/// Largest `|P(i) Q_ij - P(j) Q_ji|` over adjacent pairs, using the product
/// form.
pub fn detailed_balance_check(spec: &AggregatorSpec) -> Result<f64> {
    let (space, dist) = product_form(spec)?;
    Ok(detailed_balance_residual(spec, &space, &dist))
}

/// Detailed-balance residual of an arbitrary distribution over `space`.
pub fn detailed_balance_residual(spec: &AggregatorSpec, space: &StateSpace, dist: &Distribution) -> f64 {
    let mut worst: f64 = 0.0;
    for (i, s) in space.states.iter().enumerate() {
        for (j, r) in outgoing(s, spec, space) {
            if j > i {
                let back = transition_rate(&space.states[j], s, spec);
                worst = worst.max((dist[i] * r - dist[j] * back).abs());
            }
        }
    }
    worst
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::config::{default_profile, select_rates, CpriProfile, ModelConfig, ProfileRow};
    use crate::ctmc;
    use proptest::prelude::*;

    /// Two rates `d` and `2d`, link `6d`: the six-RRU lattice.
    fn lattice_spec(n: u32) -> AggregatorSpec {
        let rows = vec![
            ProfileRow {
                bandwidth_mhz: 5.0,
                fft_size: 512,
                prb_count: 25,
                rate_mbps: 1.0,
                max_users: 12,
            },
            ProfileRow {
                bandwidth_mhz: 10.0,
                fft_size: 1024,
                prb_count: 50,
                rate_mbps: 2.0,
                max_users: 25,
            },
        ];
        let rs = RateSet::from_rows(&CpriProfile::new(rows).unwrap(), &[0, 1]).unwrap();
        let rates = RruRates {
            up: vec![0.7, 0.4],
            down: vec![0.9, 0.3],
        };
        AggregatorSpec::new(n, rs, 6.0, rates).unwrap()
    }

    fn scenario_spec(n_d: usize, gap: u32, a: f64, n: usize) -> AggregatorSpec {
        let sc = ModelConfig::new(n_d, gap, a, n).resolve().unwrap();
        AggregatorSpec::from_scenario(&sc).unwrap()
    }

    /// Refused upgrade flow over offered upgrade flow, read off the generator
    /// by trying each request against the capacity.
    fn flow_counting_blocking(spec: &AggregatorSpec) -> f64 {
        let space = enumerate_states(spec).unwrap();
        let q = generator(spec, &space).unwrap();
        let pi = ctmc::steady_state(&q).unwrap();
        let (mut offered, mut refused) = (0.0, 0.0);
        let n = spec.cluster_size();
        for (i, s) in space.states().iter().enumerate() {
            let mut requests = vec![];
            if s.active() < n {
                let mut k = s.k.clone();
                k[0] += 1;
                requests.push((k, f64::from(n - s.active()) * spec.lambda()));
            }
            for a in 0..spec.levels() - 1 {
                if s.k[a] > 0 {
                    let mut k = s.k.clone();
                    k[a] -= 1;
                    k[a + 1] += 1;
                    requests.push((k, f64::from(s.k[a]) * spec.rru_rates().up_rate(a + 1)));
                }
            }
            for (target, rate) in requests {
                offered += pi[i] * rate;
                match space.index_of(&target) {
                    Some(j) => assert!((q.get(i, j) - rate).abs() < 1e-12),
                    None => refused += pi[i] * rate,
                }
            }
        }
        refused / offered
    }

    #[test]
    fn max_rru_examples() {
        assert_eq!(max_rru(10_000.0, 1228.8), 8);
        assert_eq!(max_rru(10_000.0, 614.4), 16);
        assert_eq!(max_rru(6.0 * 1228.8, 1228.8), 6);
        assert_eq!(max_rru(6.0 * 0.1, 0.1), 6);
    }

    #[test]
    fn lattice_has_sixteen_states() {
        let space = enumerate_states(&lattice_spec(6)).unwrap();
        assert_eq!(space.len(), 16);
        assert!(space.states().windows(2).all(|w| w[0] < w[1]));
        for s in space.states() {
            assert!(s.active() <= 6 && s.load(lattice_spec(6).rate_set()) <= 6.0);
        }
    }

    #[test]
    fn one_dimensional_space() {
        let rs = select_rates(&default_profile(), 1).unwrap();
        let rates = RruRates {
            up: vec![1.0],
            down: vec![2.0],
        };
        let spec = AggregatorSpec::new(5, rs, 10_000.0, rates).unwrap();
        let space = enumerate_states(&spec).unwrap();
        assert_eq!(space.len(), 6);
        assert_eq!(space.states()[5].k, vec![5]);
    }

    #[test]
    fn state_cap_is_enforced() {
        let err = enumerate_states(&lattice_spec(6).with_state_cap(10)).unwrap_err();
        assert!(matches!(err, Error::Capacity { cap: 10, .. }));
    }

    #[test]
    fn transition_rate_branches() {
        let spec = lattice_spec(6);
        let st = |k: &[u32]| AggregatorState { k: k.to_vec() };
        assert_eq!(transition_rate(&st(&[2, 1]), &st(&[1, 2]), &spec), 2.0 * 0.4);
        assert_eq!(transition_rate(&st(&[0, 0]), &st(&[1, 0]), &spec), 6.0 * 0.7);
        assert_eq!(transition_rate(&st(&[1, 0]), &st(&[0, 0]), &spec), 0.9);
        assert_eq!(transition_rate(&st(&[1, 2]), &st(&[2, 1]), &spec), 2.0 * 0.3);
        assert_eq!(transition_rate(&st(&[1, 2]), &st(&[2, 2]), &spec), 3.0 * 0.7);
        assert_eq!(transition_rate(&st(&[1, 0]), &st(&[0, 1]), &spec), 0.4);
        assert_eq!(transition_rate(&st(&[1, 0]), &st(&[2, 1]), &spec), 0.0);
        assert_eq!(transition_rate(&st(&[1, 1]), &st(&[1, 1]), &spec), 0.0);
    }

    #[test]
    fn product_form_matches_direct_solve_on_lattice() {
        let spec = lattice_spec(6);
        let (space, pf) = product_form(&spec).unwrap();
        let q = generator(&spec, &space).unwrap();
        let direct = ctmc::steady_state(&q).unwrap();
        for (a, b) in pf.probs().iter().zip(direct.probs()) {
            assert!((a - b).abs() < 1e-10);
        }
        assert!(detailed_balance_check(&spec).unwrap() < 1e-10);
    }

    #[test]
    fn single_rate_is_engset() {
        let rs = select_rates(&default_profile(), 1).unwrap();
        let rates = RruRates {
            up: vec![0.8],
            down: vec![1.6],
        };
        let spec = AggregatorSpec::new(5, rs, 10_000.0, rates).unwrap();
        let (_, pf) = product_form(&spec).unwrap();
        let binom = [1.0, 5.0, 10.0, 10.0, 5.0, 1.0];
        let w: Vec<f64> = (0..6).map(|k| binom[k] * 0.5f64.powi(k as i32)).collect();
        let total: f64 = w.iter().sum();
        for k in 0..6 {
            assert!((pf[k] - w[k] / total).abs() < 1e-14);
        }
        assert!((pf[0] - 1.0 / 1.5f64.powi(5)).abs() < 1e-14);
        assert!(detailed_balance_check(&spec).unwrap() < 1e-14);
        assert_eq!(blocking(&spec).unwrap().total, 0.0);
    }

    #[test]
    fn negative_control_breaks_balance() {
        let spec = lattice_spec(6);
        for level in 1..=2 {
            let (space, perturbed) = product_form(&spec.with_scaled_down_rate(level, 1.01)).unwrap();
            assert!(detailed_balance_residual(&spec, &space, &perturbed) > 1e-6);
        }
    }

    #[test]
    fn blocking_matches_flow_counting() {
        for n in [4, 6, 8] {
            let spec = lattice_spec(n);
            let report = blocking(&spec).unwrap();
            let oracle = flow_counting_blocking(&spec);
            assert!((report.total - oracle).abs() < 1e-9, "n {n}");
            assert!((report.total - report.per_rate.iter().sum::<f64>()).abs() < 1e-15);
        }
        let report = blocking(&lattice_spec(6)).unwrap();
        assert!(report.total > 0.0 && report.set_sizes.iter().all(|&s| s > 0));
    }

    #[test]
    fn traditional_fronthaul_knee() {
        for n in 1..=8 {
            let r = blocking(&scenario_spec(1, 1, 0.2, n)).unwrap();
            assert_eq!(r.total, 0.0, "n {n}");
            assert_eq!(r.set_sizes, vec![0]);
        }
        let r = blocking(&scenario_spec(1, 1, 0.2, 9)).unwrap();
        assert!(r.total > 0.5);
    }

    #[test]
    fn product_form_matches_direct_solve_on_scenarios() {
        for &(n_d, gap, a, n) in &[(2, 1, 0.3, 8), (3, 2, 0.2, 6), (3, 1, 0.5, 8), (2, 3, 0.25, 5)] {
            let spec = scenario_spec(n_d, gap, a, n);
            let (space, pf) = product_form(&spec).unwrap();
            let direct = ctmc::steady_state(&generator(&spec, &space).unwrap()).unwrap();
            let worst = pf
                .probs()
                .iter()
                .zip(direct.probs())
                .map(|(a, b)| (a - b).abs())
                .fold(0.0, f64::max);
            assert!(worst < 1e-8, "n_d {n_d} n {n}: {worst}");
            assert!(detailed_balance_residual(&spec, &space, &pf) < 1e-10);
        }
    }

    #[test]
    fn capped_convention_limits_population() {
        let exact = scenario_spec(1, 1, 0.2, 12);
        let capped = exact.clone().with_convention(ClusterConvention::Capped);
        assert_eq!(exact.effective_cluster_size(), 12);
        assert_eq!(capped.effective_cluster_size(), 8);
        assert_eq!(enumerate_states(&capped).unwrap().len(), 9);
        // the capped chain is still reversible and matches its own direct solve
        let (space, pf) = product_form(&capped).unwrap();
        let direct = ctmc::steady_state(&generator(&capped, &space).unwrap()).unwrap();
        for (a, b) in pf.probs().iter().zip(direct.probs()) {
            assert!((a - b).abs() < 1e-10);
        }
        assert!(blocking(&capped).unwrap().total > 0.99);
    }

    #[test]
    fn unconstrained_link_decouples_rrus() {
        for &(n_d, a) in &[(2, 0.3), (3, 0.2)] {
            let sc = ModelConfig::new(n_d, 1, a, 3).resolve().unwrap();
            let spec = AggregatorSpec::new(3, sc.rate_set.clone(), 1e9, {
                let rs = RruChainSpec::new(sc.rate_set.clone(), sc.thresholds.clone(), sc.traffic).unwrap();
                rru::transition_rates(&rs).unwrap()
            })
            .unwrap();
            let (space, pf) = product_form(&spec).unwrap();
            assert_eq!(blocking_with(&spec, &space, &pf).total, 0.0);
            let single = rru::rate_level_distribution(spec.rru_rates()).unwrap();
            // marginal of one RRU: level-l share of all RRU slots
            for l in 0..=n_d {
                let mut marginal = 0.0;
                for (s, &p) in space.states().iter().zip(pf.probs()) {
                    let count = if l == 0 { 3 - s.active() } else { s.k[l - 1] };
                    marginal += p * f64::from(count) / 3.0;
                }
                assert!((marginal - single[l]).abs() < 1e-9, "n_d {n_d} level {l}");
            }
        }
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(16))]

        #[test]
        fn normalized_and_bounded(n_d in 1usize..=4, gap in 1u32..=2, a in 0.05f64..0.8, n in 1usize..=20) {
            let spec = scenario_spec(n_d, gap, a, n);
            let (space, pf) = product_form(&spec).unwrap();
            prop_assert!((pf.probs().iter().sum::<f64>() - 1.0).abs() < 1e-10);
            let r = blocking_with(&spec, &space, &pf);
            prop_assert!((0.0..=1.0).contains(&r.total));
            for (c, share) in r.per_rate.iter().zip(&r.offered_share) {
                prop_assert!(*c >= 0.0 && *c <= share + 1e-12);
            }
        }

        #[test]
        fn blocking_grows_with_cluster_and_load(n_d in 2usize..=4, a in 0.1f64..0.6, n in 8usize..=19) {
            let base = blocking(&scenario_spec(n_d, 1, a, n)).unwrap().total;
            let bigger = blocking(&scenario_spec(n_d, 1, a, n + 1)).unwrap().total;
            let busier = blocking(&scenario_spec(n_d, 1, (a * 1.1).min(0.95), n)).unwrap().total;
            prop_assert!(bigger >= base * (1.0 - 1e-9));
            prop_assert!(busier >= base * (1.0 - 1e-9));
        }
    }
}
