//! CPRI rate profiles, rate-set selection, hysteresis thresholds and load
//! translation.
//!
//! Rates are always held in ascending order. Level `l` (1-based) of an RRU
//! transmits at `rates[l - 1]` and can serve up to `capacities[l - 1]` calls;
//! level 0 is the "off" state that sends nothing over the fronthaul.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// One line of a CPRI rate ladder.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProfileRow {
    pub bandwidth_mhz: f64,
    pub fft_size: u32,
    pub prb_count: u32,
    pub rate_mbps: f64,
    pub max_users: u32,
}

/// Ordered table of bandwidth configurations, lowest rate first.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CpriProfile {
    rows: Vec<ProfileRow>,
}

impl CpriProfile {
    pub fn new(rows: Vec<ProfileRow>) -> Result<Self> {
        if rows.is_empty() {
            return Err(Error::config("profile", "profile has no rows"));
        }
        for (i, row) in rows.iter().enumerate() {
            let field = format!("profile[{i}]");
            if !(row.bandwidth_mhz > 0.0 && row.rate_mbps > 0.0)
                || row.fft_size == 0
                || row.prb_count == 0
                || row.max_users == 0
            {
                return Err(Error::config(&field, "all fields must be strictly positive"));
            }
            // one resource group (two PRBs) per call
            if row.max_users != row.prb_count / 2 {
                return Err(Error::config(
                    &field,
                    format!(
                        "max_users {} does not equal floor(prb_count / 2) = {}",
                        row.max_users,
                        row.prb_count / 2
                    ),
                ));
            }
            if i > 0 {
                let prev = &rows[i - 1];
                if row.rate_mbps <= prev.rate_mbps || row.max_users <= prev.max_users {
                    return Err(Error::config(
                        &field,
                        "rows must be strictly increasing in rate_mbps and max_users",
                    ));
                }
            }
        }
        Ok(Self { rows })
    }

    pub fn rows(&self) -> &[ProfileRow] {
        &self.rows
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }
}

/// The standard LTE CPRI ladder (1.25 MHz to 20 MHz).
pub fn default_profile() -> CpriProfile {
    let row = |bandwidth_mhz, fft_size, prb_count, rate_mbps, max_users| ProfileRow {
        bandwidth_mhz,
        fft_size,
        prb_count,
        rate_mbps,
        max_users,
    };
    CpriProfile {
        rows: vec![
            row(1.25, 128, 6, 76.8, 3),
            row(2.5, 256, 12, 153.6, 6),
            row(5.0, 512, 25, 307.2, 12),
            row(10.0, 1024, 50, 614.4, 25),
            row(15.0, 1536, 75, 921.6, 37),
            row(20.0, 2048, 100, 1228.8, 50),
        ],
    }
}

/// The fronthaul rates an RRU may switch between, ascending.
#[derive(Debug, Clone, PartialEq)]
pub struct RateSet {
    rates: Vec<f64>,
    capacities: Vec<u32>,
}

impl RateSet {
    /// Builds a rate set from arbitrary (sorted, distinct) profile row indices.
    pub fn from_rows(profile: &CpriProfile, indices: &[usize]) -> Result<Self> {
        if indices.is_empty() {
            return Err(Error::config("n_d", "rate set must not be empty"));
        }
        if indices.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::config("rates", "row indices must be strictly increasing"));
        }
        let rows = profile.rows();
        if let Some(&bad) = indices.iter().find(|&&i| i >= rows.len()) {
            return Err(Error::config("rates", format!("row index {bad} outside profile")));
        }
        Ok(Self {
            rates: indices.iter().map(|&i| rows[i].rate_mbps).collect(),
            capacities: indices.iter().map(|&i| rows[i].max_users).collect(),
        })
    }

    /// Number of rates, `M`.
    pub fn len(&self) -> usize {
        self.rates.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rates.is_empty()
    }

    pub fn rates(&self) -> &[f64] {
        &self.rates
    }

    pub fn capacities(&self) -> &[u32] {
        &self.capacities
    }

    /// Rate of level `l` (1-based); level 0 is off and transmits nothing.
    pub fn rate(&self, level: usize) -> f64 {
        if level == 0 {
            0.0
        } else {
            self.rates[level - 1]
        }
    }

    /// Per-RRU server count: capacity of the highest rate.
    pub fn server_count(&self) -> u32 {
        *self.capacities.last().expect("non-empty rate set")
    }
}

/// Picks the `n_d` highest rates of the profile's halving ladder, returned
/// ascending.
pub fn select_rates(profile: &CpriProfile, n_d: usize) -> Result<RateSet> {
    let ladder = rate_ladder(profile);
    if n_d == 0 || n_d > ladder.len() {
        return Err(Error::config(
            "n_d",
            format!("must be between 1 and {}, got {n_d}", ladder.len()),
        ));
    }
    let mut indices = ladder[..n_d].to_vec();
    indices.reverse();
    RateSet::from_rows(profile, &indices)
}

/// Row indices of the selectable ladder, highest rate first: starting from the
/// top row, each next rung is the highest row at no more than half the rate
/// above it.
fn rate_ladder(profile: &CpriProfile) -> Vec<usize> {
    let rows = profile.rows();
    let mut ladder = vec![rows.len() - 1];
    let mut ceiling = rows[rows.len() - 1].rate_mbps / 2.0;
    for (i, row) in rows.iter().enumerate().rev().skip(1) {
        if row.rate_mbps <= ceiling * (1.0 + 1e-9) {
            ladder.push(i);
            ceiling = row.rate_mbps / 2.0;
        }
    }
    ladder
}

/// Forward (`F_1..F_{M-1}`) and reverse (`R_1..R_{M-1}`) thresholds, with the
/// implicit conventions `R_0 = 0` and `F_M = K`.
#[derive(Debug, Clone, PartialEq)]
pub struct ThresholdPolicy {
    forward: Vec<u32>,
    reverse: Vec<u32>,
    server_count: u32,
}

impl ThresholdPolicy {
    pub fn new(rate_set: &RateSet, forward: Vec<u32>, reverse: Vec<u32>) -> Result<Self> {
        let m = rate_set.len();
        if forward.len() + 1 != m || reverse.len() + 1 != m {
            return Err(Error::config(
                "thresholds",
                format!("expected {} forward and reverse thresholds", m - 1),
            ));
        }
        let k = rate_set.server_count();
        for l in 0..m - 1 {
            let (f, r) = (forward[l], reverse[l]);
            let field = format!("thresholds[{}]", l + 1);
            if r < 1 {
                return Err(Error::config(&field, "reverse threshold must be at least 1"));
            }
            if f <= r {
                return Err(Error::config(
                    &field,
                    format!("forward {f} must exceed reverse {r} by at least 1"),
                ));
            }
            if f > rate_set.capacities()[l] {
                return Err(Error::config(
                    &field,
                    format!("forward {f} exceeds rate capacity {}", rate_set.capacities()[l]),
                ));
            }
            if f >= k {
                return Err(Error::config(
                    &field,
                    "forward threshold must be below the server count",
                ));
            }
            if l > 0 && (f <= forward[l - 1] || r <= reverse[l - 1]) {
                return Err(Error::config(&field, "thresholds must be strictly increasing"));
            }
        }
        Ok(Self {
            forward,
            reverse,
            server_count: k,
        })
    }

    pub fn levels(&self) -> usize {
        self.forward.len() + 1
    }

    /// `F_l` for `l` in `1..=M`, with `F_M = K`.
    pub fn forward(&self, l: usize) -> u32 {
        assert!(l >= 1 && l <= self.levels(), "level {l} out of range");
        if l == self.levels() {
            self.server_count
        } else {
            self.forward[l - 1]
        }
    }

    /// `R_l` for `l` in `0..M`, with `R_0 = 0`.
    pub fn reverse(&self, l: usize) -> u32 {
        assert!(l < self.levels(), "level {l} out of range");
        if l == 0 {
            0
        } else {
            self.reverse[l - 1]
        }
    }

    pub fn forward_thresholds(&self) -> &[u32] {
        &self.forward
    }

    pub fn reverse_thresholds(&self) -> &[u32] {
        &self.reverse
    }

    pub fn server_count(&self) -> u32 {
        self.server_count
    }
}

/// Forward thresholds at each rate's full capacity, reverse thresholds `gap`
/// below them.
pub fn default_thresholds(rate_set: &RateSet, gap: u32) -> Result<ThresholdPolicy> {
    if gap == 0 {
        return Err(Error::config("threshold_gap", "must be at least 1"));
    }
    let caps = rate_set.capacities();
    let forward: Vec<u32> = caps[..caps.len() - 1].to_vec();
    let mut reverse = Vec::with_capacity(forward.len());
    for (l, &f) in forward.iter().enumerate() {
        let r = f.checked_sub(gap).filter(|&r| r >= 1).ok_or_else(|| {
            Error::config(
                "threshold_gap",
                format!("gap {gap} pushes reverse threshold R_{} below 1", l + 1),
            )
        })?;
        if l > 0 && r <= reverse[l - 1] {
            return Err(Error::config(
                "threshold_gap",
                format!("gap {gap} makes reverse thresholds non-increasing"),
            ));
        }
        reverse.push(r);
    }
    ThresholdPolicy::new(rate_set, forward, reverse).map_err(|e| match e {
        Error::InvalidConfig { message, .. } => Error::config("threshold_gap", message),
        other => other,
    })
}

/// Per-RRU Poisson traffic. `a = lambda / (K * mu)` is the normalized load.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrafficSpec {
    pub lambda: f64,
    pub mu: f64,
    pub a: f64,
    pub server_count: u32,
}

impl TrafficSpec {
    /// Offered load in Erlang, `lambda / mu`.
    pub fn rho(&self) -> f64 {
        self.lambda / self.mu
    }
}

pub fn traffic_from_load(a: f64, mu: f64, server_count: u32) -> Result<TrafficSpec> {
    if !(a > 0.0 && a < 1.0) {
        return Err(Error::config(
            "a",
            format!("normalized load must lie in (0, 1), got {a}"),
        ));
    }
    if !(mu > 0.0 && mu.is_finite()) {
        return Err(Error::config(
            "mu",
            format!("service rate must be positive, got {mu}"),
        ));
    }
    if server_count == 0 {
        return Err(Error::config("server_count", "must be positive"));
    }
    Ok(TrafficSpec {
        lambda: a * f64::from(server_count) * mu,
        mu,
        a,
        server_count,
    })
}

/// On-disk model configuration (JSON). Unknown keys are rejected.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelConfig {
    #[serde(default)]
    pub profile: Option<Vec<ProfileRow>>,
    pub n_d: usize,
    #[serde(default = "default_gap")]
    pub threshold_gap: u32,
    pub a: f64,
    #[serde(default = "default_mu")]
    pub mu: f64,
    #[serde(default = "default_server_count")]
    pub server_count: u32,
    pub cluster_size: usize,
    #[serde(default = "default_capacity")]
    pub fha_capacity_mbps: f64,
}

fn default_gap() -> u32 {
    1
}

pub(crate) fn default_mu() -> f64 {
    0.5
}

pub(crate) fn default_server_count() -> u32 {
    50
}

pub(crate) fn default_capacity() -> f64 {
    10_000.0
}

impl ModelConfig {
    /// A configuration using every default except the four grid coordinates.
    pub fn new(n_d: usize, threshold_gap: u32, a: f64, cluster_size: usize) -> Self {
        Self {
            profile: None,
            n_d,
            threshold_gap,
            a,
            mu: default_mu(),
            server_count: default_server_count(),
            cluster_size,
            fha_capacity_mbps: default_capacity(),
        }
    }

    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| Error::config("config", e.to_string()))
    }

    /// Validates every field and derives the typed model.
    pub fn resolve(&self) -> Result<Scenario> {
        let profile = match &self.profile {
            Some(rows) => CpriProfile::new(rows.clone())?,
            None => default_profile(),
        };
        let rate_set = select_rates(&profile, self.n_d)?;
        if rate_set.server_count() != self.server_count {
            return Err(Error::config(
                "server_count",
                format!(
                    "{} does not match the top rate's capacity {}",
                    self.server_count,
                    rate_set.server_count()
                ),
            ));
        }
        let thresholds = default_thresholds(&rate_set, self.threshold_gap)?;
        let traffic = traffic_from_load(self.a, self.mu, self.server_count)?;
        if self.cluster_size == 0 {
            return Err(Error::config("cluster_size", "must be at least 1"));
        }
        if !(self.fha_capacity_mbps > rate_set.rate(1)) || !self.fha_capacity_mbps.is_finite() {
            return Err(Error::config(
                "fha_capacity_mbps",
                format!("must exceed the lowest rate {} Mbit/s", rate_set.rate(1)),
            ));
        }
        Ok(Scenario {
            rate_set,
            thresholds,
            traffic,
            cluster_size: self.cluster_size,
            capacity_mbps: self.fha_capacity_mbps,
        })
    }
}

/// A fully validated model instance.
#[derive(Debug, Clone, PartialEq)]
pub struct Scenario {
    pub rate_set: RateSet,
    pub thresholds: ThresholdPolicy,
    pub traffic: TrafficSpec,
    pub cluster_size: usize,
    pub capacity_mbps: f64,
}
