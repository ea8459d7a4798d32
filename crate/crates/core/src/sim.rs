//! Discrete-event simulation of an RRU cluster behind one aggregation link.
//!
//! Each RRU is an `M/M/K/K` (or Weibull-renewal/M/K/K) loss system whose rate
//! level follows the hysteresis thresholds. An arrival is lost when all `K`
//! servers of its RRU are busy (`blocked_rru`) or when it needs the RRU to
//! wake up or step up a rate and the link cannot carry the new summed rate
//! (`blocked_fha`).
//!
//! Runs are reproducible: randomness comes from a `ChaCha8Rng` seeded with
//! the configured 64-bit seed, and a single replication is strictly
//! sequential.

use std::cmp::Ordering;
use std::collections::BinaryHeap;
use std::fmt;
use std::str::FromStr;

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution as _, Exp, Weibull};
use serde::Serialize;
use statrs::distribution::{ContinuousCDF, Discrete, Poisson, StudentsT};
use statrs::function::gamma::gamma;

use crate::config::{RateSet, Scenario, ThresholdPolicy, TrafficSpec};
use crate::error::{Error, Result};

/// Fewest counted events a run may be configured with.
pub const MIN_EVENTS: u64 = 100_000;
pub const DEFAULT_EVENTS: u64 = 1_000_000;
const BATCHES: usize = 20;

/// Per-RRU call arrival process. Both variants are renewal processes; the
/// Weibull one uses scale `1 / lambda`, so its mean gap is
/// `Gamma(1 + 1/k) / lambda`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ArrivalProcess {
    Poisson { lambda: f64 },
    Weibull { shape: f64, scale: f64 },
}

impl ArrivalProcess {
    pub fn poisson(lambda: f64) -> Result<Self> {
        if !(lambda > 0.0 && lambda.is_finite()) {
            return Err(Error::config("arrival", "rate must be positive"));
        }
        Ok(ArrivalProcess::Poisson { lambda })
    }

    pub fn weibull(shape: f64, lambda: f64) -> Result<Self> {
        if !(shape > 0.0 && shape.is_finite()) {
            return Err(Error::config("arrival", "Weibull shape must be positive"));
        }
        Self::poisson(lambda)?;
        Ok(ArrivalProcess::Weibull {
            shape,
            scale: 1.0 / lambda,
        })
    }

    pub fn mean_interarrival(&self) -> f64 {
        match *self {
            ArrivalProcess::Poisson { lambda } => 1.0 / lambda,
            ArrivalProcess::Weibull { shape, scale } => scale * gamma(1.0 + 1.0 / shape),
        }
    }

    fn sampler(&self) -> Sampler {
        match *self {
            ArrivalProcess::Poisson { lambda } => Sampler::Exp(Exp::new(lambda).expect("validated rate")),
            ArrivalProcess::Weibull { shape, scale } => {
                Sampler::Weibull(Weibull::new(scale, shape).expect("validated shape"))
            }
        }
    }
}

/// Arrival family without a rate, as written on the command line:
/// `poisson` or `weibull:K`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ArrivalKind {
    Poisson,
    Weibull(f64),
}

impl ArrivalKind {
    pub fn with_rate(self, lambda: f64) -> Result<ArrivalProcess> {
        match self {
            ArrivalKind::Poisson => ArrivalProcess::poisson(lambda),
            ArrivalKind::Weibull(k) => ArrivalProcess::weibull(k, lambda),
        }
    }
}

impl FromStr for ArrivalKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim();
        if s.eq_ignore_ascii_case("poisson") {
            return Ok(ArrivalKind::Poisson);
        }
        if let Some(k) = s.strip_prefix("weibull:") {
            let shape: f64 = k
                .parse()
                .map_err(|_| Error::config("arrival", format!("bad Weibull shape {k:?}")))?;
            if !(shape > 0.0 && shape.is_finite()) {
                return Err(Error::config("arrival", "Weibull shape must be positive"));
            }
            return Ok(ArrivalKind::Weibull(shape));
        }
        Err(Error::config(
            "arrival",
            format!("expected `poisson` or `weibull:K`, got {s:?}"),
        ))
    }
}

impl fmt::Display for ArrivalKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ArrivalKind::Poisson => write!(f, "poisson"),
            ArrivalKind::Weibull(k) => write!(f, "weibull:{k}"),
        }
    }
}

enum Sampler {
    Exp(Exp<f64>),
    Weibull(Weibull<f64>),
}

impl Sampler {
    fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        match self {
            Sampler::Exp(d) => d.sample(rng),
            Sampler::Weibull(d) => d.sample(rng),
        }
    }
}

/// One inter-arrival gap: exponential for Poisson, `gamma (-ln U)^(1/k)` for
/// Weibull.
pub fn sample_interarrival<R: Rng + ?Sized>(process: &ArrivalProcess, rng: &mut R) -> f64 {
    process.sampler().sample(rng)
}

/// Probability of exactly `n` Poisson arrivals at rate `lambda` within
/// `window` (same time unit as the rate).
pub fn reconfig_arrival_probability(lambda: f64, window: f64, n: u64) -> Result<f64> {
    if !(lambda > 0.0 && window > 0.0) {
        return Err(Error::InvalidParameter("rate and window must be positive".into()));
    }
    let dist = Poisson::new(lambda * window).map_err(|e| Error::InvalidParameter(e.to_string()))?;
    Ok(dist.pmf(n))
}

/// Rate index after an accepted arrival that found `users_before` calls.
/// Index 0 is the idle RRU.
pub fn rate_after_arrival(level: usize, users_before: u32, thresholds: &ThresholdPolicy) -> usize {
    if level == 0 {
        1
    } else if level < thresholds.levels() && users_before == thresholds.forward(level) {
        level + 1
    } else {
        level
    }
}

/// Rate index after a departure that left `users_after` calls.
pub fn rate_after_departure(level: usize, users_after: u32, thresholds: &ThresholdPolicy) -> usize {
    if level >= 1 && users_after == thresholds.reverse(level - 1) {
        level - 1
    } else {
        level
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimConfig {
    pub cluster_size: u32,
    pub rate_set: RateSet,
    pub thresholds: ThresholdPolicy,
    pub traffic: TrafficSpec,
    pub capacity: f64,
    pub arrival: ArrivalProcess,
    /// Counted events (arrivals plus departures) after warm-up.
    pub events: u64,
    pub seed: u64,
    /// Delay before a downgrade takes effect; 0 switches immediately.
    pub latency: f64,
}

impl SimConfig {
    pub fn from_scenario(scenario: &Scenario, arrival: ArrivalKind, events: u64, seed: u64) -> Result<Self> {
        let cfg = Self {
            cluster_size: u32::try_from(scenario.cluster_size)
                .map_err(|_| Error::config("cluster_size", "too large"))?,
            rate_set: scenario.rate_set.clone(),
            thresholds: scenario.thresholds.clone(),
            traffic: scenario.traffic,
            capacity: scenario.capacity_mbps,
            arrival: arrival.with_rate(scenario.traffic.lambda)?,
            events,
            seed,
            latency: 0.0,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn with_latency(mut self, latency: f64) -> Result<Self> {
        self.latency = latency;
        self.validate()?;
        Ok(self)
    }

    pub fn validate(&self) -> Result<()> {
        if self.cluster_size == 0 {
            return Err(Error::config("cluster_size", "must be at least 1"));
        }
        if self.events < MIN_EVENTS {
            return Err(Error::config(
                "events",
                format!("need at least {MIN_EVENTS} events"),
            ));
        }
        if !(self.latency >= 0.0 && self.latency.is_finite()) {
            return Err(Error::config("latency", "must be a non-negative time"));
        }
        if !(self.capacity > self.rate_set.rate(1)) {
            return Err(Error::config("fha_capacity_mbps", "must exceed the lowest rate"));
        }
        if self.thresholds.levels() != self.rate_set.len() {
            return Err(Error::config(
                "thresholds",
                "threshold count does not match the rate set",
            ));
        }
        if !(self.traffic.mu > 0.0) {
            return Err(Error::config("mu", "must be positive"));
        }
        Ok(())
    }

    /// Warm-up events discarded before counting: 5% of the counted budget.
    pub fn warmup_events(&self) -> u64 {
        self.events / 20
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SimStats {
    pub events: u64,
    pub arrivals: u64,
    pub accepted: u64,
    pub blocked_rru: u64,
    pub blocked_fha: u64,
    /// Arrivals that needed their RRU to wake up or step up a rate.
    pub upgrade_requests: u64,
    /// `blocked_fha / upgrade_requests`: the link blocking estimate.
    pub pb_fha: f64,
    pub pb_fha_std_error: f64,
    /// 95% confidence half-width of `pb_fha`, from batch means.
    pub pb_fha_ci: f64,
    /// `blocked_rru / arrivals`.
    pub pb_rru: f64,
    /// All lost calls over all arrivals.
    pub pb_calls: f64,
    pub mean_link_load: f64,
    pub max_link_load: f64,
    pub simulated_time: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
enum EventKind {
    Arrival(usize),
    Departure(usize),
    Downgrade { rru: usize, token: u64 },
}

#[derive(Debug, Clone, Copy)]
struct Event {
    time: f64,
    seq: u64,
    kind: EventKind,
}

impl PartialEq for Event {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}

impl Eq for Event {}

impl PartialOrd for Event {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for Event {
    // reversed: BinaryHeap is a max-heap and we want the earliest event
    fn cmp(&self, other: &Self) -> Ordering {
        other
            .time
            .total_cmp(&self.time)
            .then_with(|| other.seq.cmp(&self.seq))
    }
}

#[derive(Debug, Clone, Default)]
struct RruRuntime {
    users: u32,
    level: usize,
    /// Token of the pending delayed downgrade, if any.
    pending: Option<u64>,
}

#[derive(Debug, Clone, Copy, Default)]
struct Counters {
    arrivals: u64,
    accepted: u64,
    blocked_rru: u64,
    blocked_fha: u64,
    upgrade_requests: u64,
}

struct Engine<'a> {
    cfg: &'a SimConfig,
    rng: ChaCha8Rng,
    heap: BinaryHeap<Event>,
    seq: u64,
    now: f64,
    rrus: Vec<RruRuntime>,
    load: f64,
    next_token: u64,
    arrivals: Sampler,
    service: Exp<f64>,
}

impl<'a> Engine<'a> {
    fn new(cfg: &'a SimConfig) -> Self {
        let mut engine = Self {
            cfg,
            rng: ChaCha8Rng::seed_from_u64(cfg.seed),
            heap: BinaryHeap::new(),
            seq: 0,
            now: 0.0,
            rrus: vec![RruRuntime::default(); cfg.cluster_size as usize],
            load: 0.0,
            next_token: 0,
            arrivals: cfg.arrival.sampler(),
            service: Exp::new(cfg.traffic.mu).expect("validated service rate"),
        };
        for r in 0..engine.rrus.len() {
            let gap = engine.arrivals.sample(&mut engine.rng);
            engine.schedule(gap, EventKind::Arrival(r));
        }
        engine
    }

    fn schedule(&mut self, delay: f64, kind: EventKind) {
        self.seq += 1;
        self.heap.push(Event {
            time: self.now + delay,
            seq: self.seq,
            kind,
        });
    }

    fn rate(&self, level: usize) -> f64 {
        self.cfg.rate_set.rate(level)
    }

    fn set_level(&mut self, r: usize, level: usize) {
        let old = self.rrus[r].level;
        self.load += self.rate(level) - self.rate(old);
        self.rrus[r].level = level;
        if self.rrus.iter().all(|x| x.level == 0) {
            // clear accumulated rounding once the link is empty
            self.load = 0.0;
        }
    }

    fn fits(&self, load: f64) -> bool {
        load <= self.cfg.capacity * (1.0 + 1e-9)
    }

    /// Processes the next event; returns whether it counts towards the
    /// event budget (timer expiries do not).
    fn step(&mut self, counters: &mut Counters) -> bool {
        let ev = self
            .heap
            .pop()
            .expect("arrival streams keep the event list non-empty");
        self.now = ev.time;
        match ev.kind {
            EventKind::Arrival(r) => {
                let gap = self.arrivals.sample(&mut self.rng);
                self.schedule(gap, EventKind::Arrival(r));
                self.arrival(r, counters);
                self.check(r);
                true
            }
            EventKind::Departure(r) => {
                self.departure(r);
                self.check(r);
                true
            }
            EventKind::Downgrade { rru, token } => {
                if self.rrus[rru].pending == Some(token) {
                    self.rrus[rru].pending = None;
                    let mut level = self.rrus[rru].level;
                    while level >= 1 && self.rrus[rru].users <= self.cfg.thresholds.reverse(level - 1) {
                        level -= 1;
                    }
                    self.set_level(rru, level);
                    self.check(rru);
                }
                false
            }
        }
    }

    fn arrival(&mut self, r: usize, c: &mut Counters) {
        c.arrivals += 1;
        let k = self.cfg.traffic.server_count;
        let RruRuntime { users, level, .. } = self.rrus[r];
        if users == k {
            c.blocked_rru += 1;
            return;
        }
        let next = rate_after_arrival(level, users, &self.cfg.thresholds);
        if next != level {
            c.upgrade_requests += 1;
            if !self.fits(self.load - self.rate(level) + self.rate(next)) {
                c.blocked_fha += 1;
                return;
            }
            self.set_level(r, next);
        }
        c.accepted += 1;
        let rru = &mut self.rrus[r];
        rru.users += 1;
        if rru.pending.is_some() && level >= 1 && rru.users > self.cfg.thresholds.reverse(level - 1) {
            rru.pending = None;
        }
        let service = self.service.sample(&mut self.rng);
        self.schedule(service, EventKind::Departure(r));
    }

    fn departure(&mut self, r: usize) {
        self.rrus[r].users -= 1;
        let RruRuntime {
            users,
            level,
            pending,
        } = self.rrus[r];
        let next = rate_after_departure(level, users, &self.cfg.thresholds);
        if next == level {
            return;
        }
        if self.cfg.latency > 0.0 {
            if pending.is_none() {
                self.next_token += 1;
                let token = self.next_token;
                self.rrus[r].pending = Some(token);
                self.schedule(self.cfg.latency, EventKind::Downgrade { rru: r, token });
            }
        } else {
            self.set_level(r, next);
        }
    }

    fn check(&self, r: usize) {
        assert!(
            self.fits(self.load),
            "link load {} exceeds capacity {}",
            self.load,
            self.cfg.capacity
        );
        let rru = &self.rrus[r];
        let th = &self.cfg.thresholds;
        if rru.level == 0 {
            assert_eq!(rru.users, 0, "idle RRU with active calls");
        } else {
            assert!(rru.users <= th.forward(rru.level), "users above the level's band");
            assert!(
                rru.pending.is_some() || rru.users > th.reverse(rru.level - 1),
                "users below the level's band"
            );
        }
    }
}

/// Runs one replication.
pub fn run(cfg: &SimConfig) -> Result<SimStats> {
    cfg.validate()?;
    let mut engine = Engine::new(cfg);

    let mut warm = Counters::default();
    let mut seen = 0;
    while seen < cfg.warmup_events() {
        if engine.step(&mut warm) {
            seen += 1;
        }
    }

    let start = engine.now;
    let per_batch = cfg.events.div_ceil(BATCHES as u64);
    let mut batches = vec![Counters::default(); BATCHES];
    let mut total = Counters::default();
    let mut area = 0.0;
    let mut max_load: f64 = engine.load;
    let mut counted = 0;
    while counted < cfg.events {
        let before = engine.now;
        let load_before = engine.load;
        let b = (counted / per_batch) as usize;
        let mut c = Counters::default();
        let counts = engine.step(&mut c);
        area += load_before * (engine.now - before);
        max_load = max_load.max(engine.load);
        for acc in [&mut batches[b], &mut total] {
            acc.arrivals += c.arrivals;
            acc.accepted += c.accepted;
            acc.blocked_rru += c.blocked_rru;
            acc.blocked_fha += c.blocked_fha;
            acc.upgrade_requests += c.upgrade_requests;
        }
        if counts {
            counted += 1;
        }
    }
    assert_eq!(
        total.arrivals,
        total.accepted + total.blocked_rru + total.blocked_fha,
        "call conservation"
    );

    let elapsed = engine.now - start;
    let ratio = |num: u64, den: u64| if den == 0 { 0.0 } else { num as f64 / den as f64 };
    let pb_fha = ratio(total.blocked_fha, total.upgrade_requests);
    let std_error =
        ratio_std_error(&batches, pb_fha).max(binomial_floor(total.blocked_fha, total.upgrade_requests));
    let t = StudentsT::new(0.0, 1.0, (BATCHES - 1) as f64)
        .expect("valid degrees of freedom")
        .inverse_cdf(0.975);
    Ok(SimStats {
        events: counted,
        arrivals: total.arrivals,
        accepted: total.accepted,
        blocked_rru: total.blocked_rru,
        blocked_fha: total.blocked_fha,
        upgrade_requests: total.upgrade_requests,
        pb_fha,
        pb_fha_std_error: std_error,
        pb_fha_ci: t * std_error,
        pb_rru: ratio(total.blocked_rru, total.arrivals),
        pb_calls: ratio(total.blocked_rru + total.blocked_fha, total.arrivals),
        mean_link_load: if elapsed > 0.0 {
            area / elapsed
        } else {
            engine.load
        },
        max_link_load: max_load,
        simulated_time: elapsed,
    })
}

/// Smallest standard error reported. Batch means collapse to zero when every
/// batch blocks all or none of its requests; this binomial error with a
/// half-count continuity correction keeps the interval honest there.
fn binomial_floor(blocked: u64, requests: u64) -> f64 {
    let n = requests.max(1) as f64;
    let p = (blocked as f64 + 0.5) / (requests as f64 + 1.0);
    (p * (1.0 - p) / n).sqrt()
}

/// Batch-means standard error of the ratio estimator `sum(blocked) /
/// sum(requests)`; robust to batches without any request.
fn ratio_std_error(batches: &[Counters], estimate: f64) -> f64 {
    let b = batches.len() as f64;
    let mean_requests = batches.iter().map(|c| c.upgrade_requests as f64).sum::<f64>() / b;
    if mean_requests == 0.0 {
        return 0.0;
    }
    let ss: f64 = batches
        .iter()
        .map(|c| (c.blocked_fha as f64 - estimate * c.upgrade_requests as f64).powi(2))
        .sum();
    (ss / (b * (b - 1.0))).sqrt() / mean_requests
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::config::{default_profile, select_rates, CpriProfile, ModelConfig, ProfileRow};
    use crate::math::erlang_b;
    use statrs::distribution::Exp as ExpDist;

    fn scenario(n_d: usize, a: f64, n: usize) -> Scenario {
        ModelConfig::new(n_d, 1, a, n).resolve().unwrap()
    }

    fn five_server_single_rru(rho: f64, seed: u64) -> SimConfig {
        let row = ProfileRow {
            bandwidth_mhz: 1.0,
            fft_size: 128,
            prb_count: 10,
            rate_mbps: 100.0,
            max_users: 5,
        };
        let rs = RateSet::from_rows(&CpriProfile::new(vec![row]).unwrap(), &[0]).unwrap();
        let th = ThresholdPolicy::new(&rs, vec![], vec![]).unwrap();
        SimConfig {
            cluster_size: 1,
            rate_set: rs,
            thresholds: th,
            traffic: TrafficSpec {
                lambda: rho,
                mu: 1.0,
                a: rho / 5.0,
                server_count: 5,
            },
            capacity: 1000.0,
            arrival: ArrivalProcess::poisson(rho).unwrap(),
            events: 1_000_000,
            seed,
            latency: 0.0,
        }
    }

    #[test]
    fn arrival_level_rules() {
        let rs = select_rates(&default_profile(), 5).unwrap();
        let th = ThresholdPolicy::new(&rs, vec![3, 6, 12, 25], vec![2, 5, 11, 24]).unwrap();
        assert_eq!(rate_after_arrival(1, 3, &th), 2);
        assert_eq!(rate_after_arrival(0, 0, &th), 1);
        assert_eq!(rate_after_arrival(2, 4, &th), 2);
        assert_eq!(rate_after_arrival(5, 40, &th), 5);
    }

    #[test]
    fn departure_level_rules() {
        let rs = select_rates(&default_profile(), 5).unwrap();
        let th = ThresholdPolicy::new(&rs, vec![3, 6, 12, 25], vec![2, 5, 11, 24]).unwrap();
        assert_eq!(rate_after_departure(2, 2, &th), 1);
        assert_eq!(rate_after_departure(1, 0, &th), 0);
        assert_eq!(rate_after_departure(3, 6, &th), 3);
        assert_eq!(rate_after_departure(3, 5, &th), 2);
    }

    #[test]
    fn reconfiguration_window_probabilities() {
        let per_min = 10.0;
        let half_second = 0.5 / 60.0;
        let five_seconds = 5.0 / 60.0;
        let cases = [
            (half_second, 1, 0.0767),
            (half_second, 2, 0.0032),
            (half_second, 3, 8.8739e-5),
            (five_seconds, 1, 0.3622),
            (five_seconds, 2, 0.1509),
            (five_seconds, 3, 0.0419),
            (five_seconds, 4, 0.0087),
        ];
        for (window, n, expect) in cases {
            let p = reconfig_arrival_probability(per_min, window, n).unwrap();
            assert!(((p - expect) / expect).abs() < 5e-3, "{window} {n}: {p}");
        }
        assert!(reconfig_arrival_probability(0.0, 1.0, 1).is_err());
    }

    #[test]
    fn arrival_kind_parsing() {
        assert_eq!("poisson".parse::<ArrivalKind>().unwrap(), ArrivalKind::Poisson);
        assert_eq!(
            "weibull:0.9".parse::<ArrivalKind>().unwrap(),
            ArrivalKind::Weibull(0.9)
        );
        assert!("weibull:-1".parse::<ArrivalKind>().is_err());
        assert!("gamma".parse::<ArrivalKind>().is_err());
        assert_eq!(ArrivalKind::Weibull(1.5).to_string(), "weibull:1.5");
    }

    #[test]
    fn unit_shape_weibull_is_exponential() {
        let p = ArrivalProcess::weibull(1.0, 2.0).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let mut xs: Vec<f64> = (0..100_000).map(|_| sample_interarrival(&p, &mut rng)).collect();
        xs.sort_by(f64::total_cmp);
        let exp = ExpDist::new(2.0).unwrap();
        let n = xs.len() as f64;
        let d = xs
            .iter()
            .enumerate()
            .map(|(i, &x)| {
                let f = exp.cdf(x);
                (f - i as f64 / n).abs().max(((i + 1) as f64 / n - f).abs())
            })
            .fold(0.0, f64::max);
        assert!(d < 1.628 / n.sqrt(), "KS statistic {d}");
    }

    #[test]
    fn weibull_moments() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let p = ArrivalProcess::weibull(0.9, 1.0).unwrap();
        assert!((p.mean_interarrival() - 1.0522).abs() < 1e-4);
        let mean = (0..1_000_000)
            .map(|_| sample_interarrival(&p, &mut rng))
            .sum::<f64>()
            / 1e6;
        assert!((mean / 1.0522 - 1.0).abs() < 0.01);

        let p = ArrivalProcess::weibull(1.5, 4.0).unwrap();
        let xs: Vec<f64> = (0..1_000_000)
            .map(|_| sample_interarrival(&p, &mut rng))
            .collect();
        let m = xs.iter().sum::<f64>() / xs.len() as f64;
        let var = xs.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (xs.len() - 1) as f64;
        let g = 0.25f64;
        let expect = g * g * (gamma(1.0 + 2.0 / 1.5) - gamma(1.0 + 1.0 / 1.5).powi(2));
        assert!((var / expect - 1.0).abs() < 0.02);
    }

    #[test]
    fn single_rru_matches_erlang_b() {
        let cfg = five_server_single_rru(2.5, 3);
        let stats = run(&cfg).unwrap();
        let b = erlang_b(2.5, 5);
        let se = (stats.pb_rru * (1.0 - stats.pb_rru) / stats.arrivals as f64).sqrt();
        // calls are correlated in time, so allow a generous multiple of the
        // binomial error
        assert!((stats.pb_rru - b).abs() < 6.0 * se, "{} vs {b}", stats.pb_rru);
        assert_eq!(stats.blocked_fha, 0);
    }

    #[test]
    fn traditional_fronthaul_never_blocks_at_eight() {
        let cfg = SimConfig::from_scenario(&scenario(1, 0.2, 8), ArrivalKind::Poisson, 1_000_000, 5).unwrap();
        let stats = run(&cfg).unwrap();
        assert_eq!(stats.blocked_fha, 0);
        assert!(stats.max_link_load <= 10_000.0);
    }

    #[test]
    fn ninth_rru_is_starved() {
        let cfg = SimConfig::from_scenario(&scenario(1, 0.2, 9), ArrivalKind::Poisson, 200_000, 5).unwrap();
        let stats = run(&cfg).unwrap();
        assert!(stats.blocked_fha > 0);
        assert!(stats.pb_fha > 0.5);
    }

    #[test]
    fn reproducible() {
        let cfg =
            SimConfig::from_scenario(&scenario(3, 0.3, 14), ArrivalKind::Weibull(0.9), 100_000, 42).unwrap();
        assert_eq!(run(&cfg).unwrap(), run(&cfg).unwrap());
        let other = SimConfig {
            seed: 43,
            ..cfg.clone()
        };
        assert_ne!(run(&cfg).unwrap(), run(&other).unwrap());
    }

    #[test]
    fn latency_keeps_invariants() {
        let cfg = SimConfig::from_scenario(&scenario(3, 0.3, 14), ArrivalKind::Poisson, 200_000, 1)
            .unwrap()
            .with_latency(0.05)
            .unwrap();
        let stats = run(&cfg).unwrap();
        assert_eq!(
            stats.arrivals,
            stats.accepted + stats.blocked_rru + stats.blocked_fha
        );
        assert!(stats.max_link_load <= 10_000.0 * (1.0 + 1e-9));
        assert!(SimConfig { latency: -1.0, ..cfg }.validate().is_err());
    }

    #[test]
    fn rejects_tiny_budgets() {
        assert!(SimConfig::from_scenario(&scenario(2, 0.3, 4), ArrivalKind::Poisson, 10, 1).is_err());
    }
}
