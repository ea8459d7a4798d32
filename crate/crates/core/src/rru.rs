//! Per-RRU threshold queue with hysteresis.
//!
//! An RRU is an `M/M/K/K` loss system whose fronthaul rate level steps up
//! when an arrival finds `F_l` calls at level `l`, and steps down when a
//! departure leaves `R_{l-1}` calls at level `l`. Level 0 is the idle RRU.
//!
//! Each rate level's block of states is analysed on its own: the conditional
//! distribution inside level `l` is available in closed form (see
//! [`partition_coefficients`]), and the rate levels themselves then form a
//! birth-death chain with up-rates `lambda_l` and down-rates `mu_l`.
//!
//! Partition index ranges: level 1 covers user counts `0..=F_1` and includes
//! the idle state at 0 calls; level `l >= 2` covers `R_{l-1}+1..=F_l`, with
//! `F_M = K`.

use log::warn;

use crate::config::{RateSet, ThresholdPolicy, TrafficSpec};
use crate::ctmc::{self, Distribution, Partition, RateMatrix};
use crate::error::{Error, Result};
use crate::math::{ln_factorial_table, log_sum_exp};

/// Relative size below which a closed-form difference is considered to have
/// lost too many digits to cancellation.
const CANCELLATION_FLOOR: f64 = 1e-6;

#[derive(Debug, Clone, PartialEq)]
pub struct RruChainSpec {
    rate_set: RateSet,
    thresholds: ThresholdPolicy,
    traffic: TrafficSpec,
}

impl RruChainSpec {
    pub fn new(rate_set: RateSet, thresholds: ThresholdPolicy, traffic: TrafficSpec) -> Result<Self> {
        if thresholds.levels() != rate_set.len() {
            return Err(Error::config(
                "thresholds",
                "threshold count does not match the rate set",
            ));
        }
        if thresholds.server_count() != rate_set.server_count()
            || traffic.server_count != rate_set.server_count()
        {
            return Err(Error::config(
                "server_count",
                "rate set, thresholds and traffic disagree on the server count",
            ));
        }
        for l in 1..rate_set.len() {
            if thresholds.forward(l) > rate_set.capacities()[l - 1] {
                return Err(Error::config(
                    "thresholds",
                    format!("F_{l} exceeds the capacity of rate {l}"),
                ));
            }
        }
        if !(traffic.lambda > 0.0 && traffic.mu > 0.0) {
            return Err(Error::config(
                "traffic",
                "arrival and service rates must be positive",
            ));
        }
        Ok(Self {
            rate_set,
            thresholds,
            traffic,
        })
    }

    pub fn rate_set(&self) -> &RateSet {
        &self.rate_set
    }

    pub fn thresholds(&self) -> &ThresholdPolicy {
        &self.thresholds
    }

    pub fn traffic(&self) -> &TrafficSpec {
        &self.traffic
    }

    /// Number of rate levels `M`.
    pub fn levels(&self) -> usize {
        self.rate_set.len()
    }

    pub fn server_count(&self) -> u32 {
        self.rate_set.server_count()
    }

    /// Offered load `lambda / mu` in Erlang.
    pub fn rho(&self) -> f64 {
        self.traffic.rho()
    }

    /// Inclusive user-count range of partition `l`.
    pub fn partition_range(&self, l: usize) -> (u32, u32) {
        let lo = if l == 1 {
            0
        } else {
            self.thresholds.reverse(l - 1) + 1
        };
        (lo, self.thresholds.forward(l))
    }

    fn check_level(&self, l: usize) -> Result<()> {
        if l == 0 || l > self.levels() {
            return Err(Error::InvalidParameter(format!(
                "rate index {l} outside 1..={}",
                self.levels()
            )));
        }
        Ok(())
    }
}

/// A state of the full RRU chain: `users` active calls at rate level `level`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct RruState {
    pub users: u32,
    pub level: usize,
}

/// The complete `(users, level)` chain of one RRU.
#[derive(Debug, Clone)]
pub struct GlobalRruChain {
    states: Vec<RruState>,
    generator: RateMatrix,
}

impl GlobalRruChain {
    pub fn states(&self) -> &[RruState] {
        &self.states
    }

    pub fn generator(&self) -> &RateMatrix {
        &self.generator
    }

    pub fn index_of(&self, users: u32, level: usize) -> Option<usize> {
        self.states.binary_search(&RruState { users, level }).ok()
    }

    /// Indices of partition `l`'s states, ascending in user count. For `l = 1`
    /// this starts with the idle state.
    pub fn partition_states(&self, spec: &RruChainSpec, l: usize) -> Vec<usize> {
        let (lo, hi) = spec.partition_range(l);
        (lo..=hi)
            .map(|u| {
                let level = if u == 0 { 0 } else { l };
                self.index_of(u, level).expect("partition state exists")
            })
            .collect()
    }
}

/// Builds the global chain: arrivals at rate `lambda` (moving up a level at
/// `F_l`), departures at rate `users * mu` (moving down a level when they
/// leave `R_{l-1}` calls), and the idle state `(0, 0)` linked to `(1, 1)`.
pub fn build_global_chain(spec: &RruChainSpec) -> Result<GlobalRruChain> {
    let m = spec.levels();
    let th = spec.thresholds();
    let k = spec.server_count();
    let (lambda, mu) = (spec.traffic().lambda, spec.traffic().mu);

    let mut sorted = vec![RruState { users: 0, level: 0 }];
    for l in 1..=m {
        let (lo, hi) = spec.partition_range(l);
        for users in lo.max(1)..=hi {
            sorted.push(RruState { users, level: l });
        }
    }
    // adjacent levels overlap in user count, so order by (users, level)
    sorted.sort();
    let index = |users: u32, level: usize| {
        sorted
            .binary_search(&RruState { users, level })
            .expect("target state exists")
    };

    let mut transitions = Vec::new();
    for s in &sorted {
        let from = index(s.users, s.level);
        if s.level == 0 {
            transitions.push((from, index(1, 1), lambda));
            continue;
        }
        let (i, j) = (s.users, s.level);
        // arrivals
        if i < k {
            if j < m && i == th.forward(j) {
                transitions.push((from, index(i + 1, j + 1), lambda));
            } else {
                transitions.push((from, index(i + 1, j), lambda));
            }
        }
        // departures
        let rate = f64::from(i) * mu;
        if (i, j) == (1, 1) {
            transitions.push((from, index(0, 0), rate));
        } else if j >= 2 && i - 1 == th.reverse(j - 1) {
            transitions.push((from, index(i - 1, j - 1), rate));
        } else {
            transitions.push((from, index(i - 1, j), rate));
        }
    }
    let generator = RateMatrix::from_transitions(sorted.len(), transitions)?;
    Ok(GlobalRruChain {
        states: sorted,
        generator,
    })
}

/// Where a set of partition coefficients came from.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CoefficientSource {
    ClosedForm,
    /// The closed form lost its precision to cancellation and the exact
    /// stochastic-complement solve was used instead.
    OracleFallback,
}

/// `C_i^l` over partition `l`, with `C = 1` at the partition's base state.
#[derive(Debug, Clone, PartialEq)]
pub struct PartitionCoefficients {
    pub level: usize,
    pub base_users: u32,
    ln_values: Vec<f64>,
    pub source: CoefficientSource,
}

impl PartitionCoefficients {
    pub fn ln_values(&self) -> &[f64] {
        &self.ln_values
    }

    pub fn values(&self) -> Vec<f64> {
        self.ln_values.iter().map(|x| x.exp()).collect()
    }

    /// `C_i` for user count `i`.
    pub fn get(&self, users: u32) -> Option<f64> {
        users
            .checked_sub(self.base_users)
            .and_then(|o| self.ln_values.get(o as usize))
            .map(|x| x.exp())
    }
}

/// Closed-form `C_i^l` for every user count of partition `l`.
///
/// With `b = R_{l-1}+1`, `e = F_{l-1}+1`, `r = R_l` and `F = F_l`, the
/// partition's flow balance without the top fold-back gives
///
/// ```text
/// G_i = rho^i / i!                                    (l = 1)
/// G_i = b / i! * sum_{k=b-1}^{min(i,e)-1} rho^(i-1-k) k!   (l >= 2)
/// ```
///
/// which is the first branch for `i <= e` and the first minus the second
/// branch beyond `e` (the subtracted sum cancels the leading terms exactly).
/// The top fold-back `F -> r` then gives, with `T_i = sum_{k=i}^{F-1} rho^(F-k) k!/F!`,
///
/// ```text
/// C_F = G_F / (1 + T_r)
/// C_i = G_i (1 + T_i) / (1 + T_r)                     (r < i < F, i >= e)
/// C_i = G_i - C_F * sum_{k=r}^{i-1} rho^(i-k) k!/i!   (r < i < e)
/// ```
///
/// The middle line is the third branch with its subtraction carried out
/// symbolically; only the last line (which needs `R_l < F_{l-1}+1`) still
/// subtracts, and it falls back to the exact solve when the difference
/// cancels below [`CANCELLATION_FLOOR`].
pub fn partition_coefficients(spec: &RruChainSpec, l: usize) -> Result<PartitionCoefficients> {
    spec.check_level(l)?;
    let (lo, hi) = spec.partition_range(l);
    match closed_form_ln(spec, l) {
        Some(ln_values) => Ok(PartitionCoefficients {
            level: l,
            base_users: lo,
            ln_values,
            source: CoefficientSource::ClosedForm,
        }),
        None => {
            warn!(
                "closed-form coefficients for level {l} (users {lo}..={hi}, rho {}) cancel; using the exact solve",
                spec.rho()
            );
            let dist = oracle_conditional(spec, l)?;
            let base = dist[0];
            Ok(PartitionCoefficients {
                level: l,
                base_users: lo,
                ln_values: dist.probs().iter().map(|p| (p / base).ln()).collect(),
                source: CoefficientSource::OracleFallback,
            })
        }
    }
}

fn closed_form_ln(spec: &RruChainSpec, l: usize) -> Option<Vec<f64>> {
    let m = spec.levels();
    let th = spec.thresholds();
    let lr = spec.rho().ln();
    let lf = ln_factorial_table(spec.server_count() as usize + 1);
    let (lo, hi) = spec.partition_range(l);

    let ln_g = |i: u32| -> f64 {
        if l == 1 {
            f64::from(i) * lr - lf[i as usize]
        } else {
            let b = th.reverse(l - 1) + 1;
            let e = th.forward(l - 1) + 1;
            let top = i.min(e) - 1;
            let terms: Vec<f64> = (b - 1..=top)
                .map(|k| f64::from(i - 1 - k) * lr + lf[k as usize])
                .collect();
            f64::from(b).ln() - lf[i as usize] + log_sum_exp(&terms)
        }
    };

    if l == m {
        return Some((lo..=hi).map(ln_g).collect());
    }

    let r = th.reverse(l);
    let f = hi;
    let e = if l == 1 { 0 } else { th.forward(l - 1) + 1 };
    // ln(1 + T_from) with T_from = sum_{k=from}^{F-1} rho^(F-k) k! / F!
    let ln_one_plus_t = |from: u32| -> f64 {
        let mut terms = vec![0.0];
        terms.extend((from..f).map(|k| f64::from(f - k) * lr + lf[k as usize] - lf[f as usize]));
        log_sum_exp(&terms)
    };
    let ln_norm = ln_one_plus_t(r);
    let ln_cf = ln_g(f) - ln_norm;

    let mut out = Vec::with_capacity((hi - lo + 1) as usize);
    for i in lo..=hi {
        let v = if i <= r {
            ln_g(i)
        } else if i == f {
            ln_cf
        } else if i >= e {
            ln_g(i) + ln_one_plus_t(i) - ln_norm
        } else {
            let d_terms: Vec<f64> = (r..i)
                .map(|k| f64::from(i - k) * lr + lf[k as usize] - lf[i as usize])
                .collect();
            let minuend = ln_g(i);
            let subtrahend = log_sum_exp(&d_terms) + ln_cf;
            let ratio = (subtrahend - minuend).exp();
            if !(1.0 - ratio > CANCELLATION_FLOOR) {
                return None;
            }
            minuend + (-ratio).ln_1p()
        };
        out.push(v);
    }
    Some(out)
}

/// Conditional stationary distribution over a partition.
#[derive(Debug, Clone, PartialEq)]
pub struct PartitionDistribution {
    pub level: usize,
    pub base_users: u32,
    pub coefficients: Vec<f64>,
    pub probabilities: Vec<f64>,
}

impl PartitionDistribution {
    /// `pi_l(users)`; zero outside the partition.
    pub fn prob(&self, users: u32) -> f64 {
        users
            .checked_sub(self.base_users)
            .and_then(|o| self.probabilities.get(o as usize))
            .copied()
            .unwrap_or(0.0)
    }

    /// Distribution conditioned on the RRU being active, i.e. with the idle
    /// state of level 1 removed. Other levels are returned unchanged.
    pub fn active(&self) -> PartitionDistribution {
        if self.base_users > 0 {
            return self.clone();
        }
        let rest = 1.0 - self.probabilities[0];
        PartitionDistribution {
            level: self.level,
            base_users: 1,
            coefficients: self.coefficients[1..].to_vec(),
            probabilities: self.probabilities[1..].iter().map(|p| p / rest).collect(),
        }
    }
}

/// `pi_l(i) = C_i^l / sum_j C_j^l` over partition `l`'s realized user counts.
pub fn partition_distribution(spec: &RruChainSpec, l: usize) -> Result<PartitionDistribution> {
    let coeffs = partition_coefficients(spec, l)?;
    let ln = coeffs.ln_values();
    let ln_total = log_sum_exp(ln);
    Ok(PartitionDistribution {
        level: l,
        base_users: coeffs.base_users,
        coefficients: coeffs.values(),
        probabilities: ln.iter().map(|x| (x - ln_total).exp()).collect(),
    })
}

/// Exact conditional distribution over partition `l`, from the global chain.
///
/// The outer levels have a single return state and use the fold-back
/// generator; interior levels are re-entered from both sides and are
/// obtained by censoring the global chain to the partition. Both are solved
/// without subtractions so that entries far below the partition's mode keep
/// their relative accuracy.
pub fn oracle_conditional(spec: &RruChainSpec, l: usize) -> Result<Distribution> {
    spec.check_level(l)?;
    let chain = build_global_chain(spec)?;
    let left = chain.partition_states(spec, l);
    let part = Partition::new(chain.states().len(), left)?;
    let m = spec.levels();
    let th = spec.thresholds();
    let reduced = if l == 1 || l == m {
        let entry = if m == 1 {
            chain.index_of(0, 0)
        } else if l == 1 {
            chain.index_of(th.reverse(1), 1)
        } else {
            chain.index_of(th.forward(m - 1) + 1, m)
        }
        .expect("entry state exists");
        ctmc::fold_back_generator(chain.generator(), &part, entry)?
    } else {
        ctmc::censor(chain.generator(), &part)?
    };
    ctmc::steady_state_gth(&reduced)
}

/// The adjusted chain of partition `l`: exits downward from the base state are
/// redirected to `F_{l-1}+1`, exits upward from `F_l` to `R_l`. States are
/// indexed by user count offset from the partition base.
pub fn adjusted_partition_chain(spec: &RruChainSpec, l: usize) -> Result<RateMatrix> {
    spec.check_level(l)?;
    let m = spec.levels();
    let th = spec.thresholds();
    let (lambda, mu) = (spec.traffic().lambda, spec.traffic().mu);
    let (lo, hi) = spec.partition_range(l);
    let idx = |u: u32| (u - lo) as usize;
    let mut t = Vec::new();
    for u in lo..=hi {
        if u < hi {
            t.push((idx(u), idx(u + 1), lambda));
        } else if l < m {
            t.push((idx(u), idx(th.reverse(l)), lambda));
        }
        if u > lo {
            t.push((idx(u), idx(u - 1), f64::from(u) * mu));
        } else if l > 1 {
            t.push((idx(u), idx(th.forward(l - 1) + 1), f64::from(u) * mu));
        }
    }
    RateMatrix::from_transitions((hi - lo + 1) as usize, t)
}

/// Transition rates of the rate-level process.
#[derive(Debug, Clone, PartialEq)]
pub struct RruRates {
    /// `lambda_0 ..= lambda_{M-1}`; `up[0]` is the wake-up rate `lambda`.
    pub up: Vec<f64>,
    /// `mu_1 ..= mu_M`; `down[l - 1]` leaves level `l` for level `l - 1`.
    pub down: Vec<f64>,
}

impl RruRates {
    pub fn levels(&self) -> usize {
        self.down.len()
    }

    /// `lambda_l` for `l` in `0..M`.
    pub fn up_rate(&self, l: usize) -> f64 {
        self.up[l]
    }

    /// `mu_l` for `l` in `1..=M`.
    pub fn down_rate(&self, l: usize) -> f64 {
        self.down[l - 1]
    }
}

/// `lambda_l = lambda pi_l(F_l)` and `mu_l = (R_{l-1}+1) mu pi_l(R_{l-1}+1)`.
///
/// Both use the level's distribution conditioned on the RRU being active,
/// so for level 1 the idle state is excluded before reading off `pi_1`.
pub fn transition_rates(spec: &RruChainSpec) -> Result<RruRates> {
    let m = spec.levels();
    let th = spec.thresholds();
    let (lambda, mu) = (spec.traffic().lambda, spec.traffic().mu);
    let mut up = vec![lambda];
    let mut down = Vec::with_capacity(m);
    for l in 1..=m {
        let dist = partition_distribution(spec, l)?.active();
        let base = th.reverse(l - 1) + 1;
        down.push(f64::from(base) * mu * dist.prob(base));
        if l < m {
            up.push(lambda * dist.prob(th.forward(l)));
        }
    }
    Ok(RruRates { up, down })
}

/// Stationary distribution of the `(M+1)`-state birth-death chain over
/// `{off, d_1, .., d_M}`.
pub fn rate_level_distribution(rates: &RruRates) -> Result<Distribution> {
    let m = rates.levels();
    if rates.up.len() != m {
        return Err(Error::InvalidParameter("up and down rate counts differ".into()));
    }
    if rates.up.iter().chain(&rates.down).any(|&x| !(x > 0.0)) {
        return Err(Error::InvalidParameter("rates must be strictly positive".into()));
    }
    let mut ln_w = vec![0.0];
    for l in 1..=m {
        let prev = ln_w[l - 1];
        ln_w.push(prev + rates.up_rate(l - 1).ln() - rates.down_rate(l).ln());
    }
    let total = log_sum_exp(&ln_w);
    Distribution::new(ln_w.iter().map(|x| (x - total).exp()).collect())
}
