//! `vrf` command line: analytic evaluation, simulation, grid sweeps and a
//! self-check.
//!
//! Exit codes: 0 on success, 1 when a validation suite or sweep point fails,
//! 2 on configuration errors.
//!
//! CSV rows have the fixed columns of [`CSV_HEADER`]; floats are written
//! with 9 significant digits.

use std::collections::BTreeMap;
use std::ffi::OsString;
use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::sync::mpsc;
use std::time::Instant;

use clap::{Parser, Subcommand, ValueEnum};
use log::{error, info};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::aggregator::{self, AggregatorSpec, BlockingReport, ClusterConvention};
use crate::config::{
    self, default_profile, default_thresholds, select_rates, traffic_from_load, ModelConfig, ProfileRow,
};
use crate::ctmc;
use crate::error::{Error, Result};
use crate::rru::{self, RruChainSpec};
use crate::sim::{self, ArrivalKind, SimConfig, SimStats, DEFAULT_EVENTS};

pub const CSV_HEADER: [&str; 15] = [
    "n",
    "a",
    "n_d",
    "gap",
    "arrival",
    "events",
    "seed",
    "pb_analytic",
    "pb_components",
    "pb_sim",
    "pb_sim_ci",
    "blocked_rru",
    "blocked_fha",
    "agree",
    "wall_s",
];

/// Below this both estimates count as "no blocking" when comparing.
const NEGLIGIBLE: f64 = 1e-4;

#[derive(Debug, Parser)]
#[command(
    name = "vrf",
    version,
    about = "Variable-rate fronthaul blocking analysis and simulation"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Product-form blocking for one configuration.
    Analyze {
        #[arg(long)]
        config: PathBuf,
        /// Overrides the configured threshold gap.
        #[arg(long)]
        gap: Option<u32>,
        /// Appends a CSV row (with header) to this file.
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long, value_enum, default_value_t = Convention::Exact)]
        convention: Convention,
        /// Writes the aggregator generator as (row, col, rate) CSV.
        #[arg(long)]
        dump_generator: Option<PathBuf>,
    },
    /// Discrete-event simulation for one configuration.
    Simulate {
        #[arg(long)]
        config: PathBuf,
        #[arg(long, default_value_t = DEFAULT_EVENTS)]
        events: u64,
        #[arg(long, default_value_t = 1)]
        seed: u64,
        /// `poisson` or `weibull:K`.
        #[arg(long, default_value = "poisson")]
        arrival: String,
        #[arg(long)]
        gap: Option<u32>,
        /// Delay before a rate downgrade takes effect, in the model's time unit.
        #[arg(long, default_value_t = 0.0)]
        latency: f64,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Runs a grid described by a JSON plan and writes one CSV row per point.
    Sweep {
        #[arg(long)]
        plan: PathBuf,
        /// Defaults to the plan's `output`, then to stdout.
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long)]
        jobs: Option<usize>,
    },
    /// Runs the oracle suites and a small analytic-vs-simulation grid.
    Validate {
        #[arg(long, default_value_t = DEFAULT_EVENTS)]
        events: u64,
        #[arg(long)]
        jobs: Option<usize>,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum Convention {
    #[default]
    Exact,
    Capped,
}

impl From<Convention> for ClusterConvention {
    fn from(c: Convention) -> Self {
        match c {
            Convention::Exact => ClusterConvention::Exact,
            Convention::Capped => ClusterConvention::Capped,
        }
    }
}

/// Parses `args` and runs the command, returning the process exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 2 } else { 0 };
        }
    };
    let outcome = match cli.command {
        Command::Analyze {
            config,
            gap,
            out,
            convention,
            dump_generator,
        } => cmd_analyze(
            &config,
            gap,
            out.as_deref(),
            convention,
            dump_generator.as_deref(),
        ),
        Command::Simulate {
            config,
            events,
            seed,
            arrival,
            gap,
            latency,
            out,
        } => cmd_simulate(&config, events, seed, &arrival, gap, latency, out.as_deref()),
        Command::Sweep { plan, out, jobs } => cmd_sweep(&plan, out.as_deref(), jobs),
        Command::Validate { events, jobs } => cmd_validate(events, jobs),
    };
    match outcome {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            exit_code_for(&e)
        }
    }
}

fn exit_code_for(e: &Error) -> i32 {
    match e {
        Error::InvalidConfig { .. } => 2,
        _ => 1,
    }
}

fn load_config(path: &Path, gap: Option<u32>) -> Result<ModelConfig> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| Error::config("config", format!("cannot read {}: {e}", path.display())))?;
    let mut cfg = ModelConfig::from_json(&text)?;
    if let Some(g) = gap {
        cfg.threshold_gap = g;
    }
    Ok(cfg)
}

fn io_err(path: &Path, e: io::Error) -> Error {
    Error::config("out", format!("cannot write {}: {e}", path.display()))
}

/// One output line.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct SweepRow {
    pub n: usize,
    pub a: f64,
    pub n_d: usize,
    pub gap: u32,
    pub arrival: String,
    pub events: Option<u64>,
    pub seed: Option<u64>,
    pub pb_analytic: Option<f64>,
    pub pb_components: Option<Vec<f64>>,
    pub pb_sim: Option<f64>,
    pub pb_sim_ci: Option<f64>,
    pub pb_sim_std_error: Option<f64>,
    pub blocked_rru: Option<u64>,
    pub blocked_fha: Option<u64>,
    pub agree: Option<bool>,
    pub failed: bool,
    pub wall_s: f64,
}

impl SweepRow {
    fn new(cfg: &ModelConfig, arrival: ArrivalKind) -> Self {
        Self {
            n: cfg.cluster_size,
            a: cfg.a,
            n_d: cfg.n_d,
            gap: cfg.threshold_gap,
            arrival: arrival.to_string(),
            ..Self::default()
        }
    }

    fn with_analytic(mut self, report: &BlockingReport) -> Self {
        self.pb_analytic = Some(report.total);
        self.pb_components = Some(report.per_rate.clone());
        self
    }

    fn with_sim(mut self, cfg: &SimConfig, stats: &SimStats) -> Self {
        self.events = Some(cfg.events);
        self.seed = Some(cfg.seed);
        self.pb_sim = Some(stats.pb_fha);
        self.pb_sim_ci = Some(stats.pb_fha_ci);
        self.pb_sim_std_error = Some(stats.pb_fha_std_error);
        self.blocked_rru = Some(stats.blocked_rru);
        self.blocked_fha = Some(stats.blocked_fha);
        if let Some(pa) = self.pb_analytic {
            self.agree = Some(agrees(pa, stats.pb_fha, stats.pb_fha_std_error));
        }
        self
    }

    pub fn record(&self) -> Vec<String> {
        let f = |x: Option<f64>| x.map(sig9).unwrap_or_default();
        let u = |x: Option<u64>| x.map(|v| v.to_string()).unwrap_or_default();
        vec![
            self.n.to_string(),
            sig9(self.a),
            self.n_d.to_string(),
            self.gap.to_string(),
            self.arrival.clone(),
            u(self.events),
            u(self.seed),
            f(self.pb_analytic),
            self.pb_components
                .as_ref()
                .map(|c| c.iter().map(|&x| sig9(x)).collect::<Vec<_>>().join(";"))
                .unwrap_or_default(),
            f(self.pb_sim),
            f(self.pb_sim_ci),
            u(self.blocked_rru),
            u(self.blocked_fha),
            if self.failed {
                "failed".to_string()
            } else {
                self.agree.map(|a| a.to_string()).unwrap_or_default()
            },
            format!("{:.3}", self.wall_s),
        ]
    }
}

/// Agreement rule for a sweep row: within three standard errors, or both
/// estimates negligible.
pub fn agrees(analytic: f64, simulated: f64, std_error: f64) -> bool {
    (analytic - simulated).abs() <= 3.0 * std_error || (analytic < NEGLIGIBLE && simulated < NEGLIGIBLE)
}

/// `x` with 9 significant digits.
pub fn sig9(x: f64) -> String {
    if x == 0.0 || !x.is_finite() {
        return format!("{x}");
    }
    let exp = x.abs().log10().floor() as i32;
    if (-4..9).contains(&exp) {
        let decimals = (8 - exp).max(0) as usize;
        let s = format!("{x:.decimals$}");
        if s.contains('.') {
            s.trim_end_matches('0').trim_end_matches('.').to_string()
        } else {
            s
        }
    } else {
        format!("{x:.8e}")
    }
}

fn csv_writer(path: Option<&Path>) -> Result<csv::Writer<Box<dyn Write + Send>>> {
    let sink: Box<dyn Write + Send> = match path {
        Some(p) => Box::new(BufWriter::new(File::create(p).map_err(|e| io_err(p, e))?)),
        None => Box::new(io::stdout()),
    };
    let mut w = csv::Writer::from_writer(sink);
    w.write_record(CSV_HEADER).map_err(csv_err)?;
    Ok(w)
}

fn csv_err(e: csv::Error) -> Error {
    Error::InvalidParameter(format!("CSV output failed: {e}"))
}

fn cmd_analyze(
    path: &Path,
    gap: Option<u32>,
    out: Option<&Path>,
    convention: Convention,
    dump: Option<&Path>,
) -> Result<i32> {
    let cfg = load_config(path, gap)?;
    let scenario = cfg.resolve()?;
    let start = Instant::now();
    let spec = AggregatorSpec::from_scenario(&scenario)?.with_convention(convention.into());
    let (space, dist) = aggregator::product_form(&spec)?;
    let report = aggregator::blocking_with(&spec, &space, &dist);
    let wall = start.elapsed().as_secs_f64();

    println!(
        "n_d={} gap={} a={} N={} B_c={} Mbit/s",
        cfg.n_d, cfg.threshold_gap, cfg.a, cfg.cluster_size, cfg.fha_capacity_mbps
    );
    println!("states: {}  N_RRU: {}", space.len(), report.n_rru_effective);
    println!("P_B = {}", sig9(report.total));
    for (m, (c, size)) in report.per_rate.iter().zip(&report.set_sizes).enumerate() {
        println!("  P_B[lambda_{m}] = {}  (blocking states: {size})", sig9(*c));
    }

    if let Some(p) = dump {
        let q = aggregator::generator(&spec, &space)?;
        let file = File::create(p).map_err(|e| io_err(p, e))?;
        q.write_csv(BufWriter::new(file)).map_err(|e| io_err(p, e))?;
        info!("wrote {}x{} generator to {}", q.dim(), q.dim(), p.display());
    }
    if let Some(p) = out {
        let mut row = SweepRow::new(&cfg, ArrivalKind::Poisson).with_analytic(&report);
        row.wall_s = wall;
        let mut w = csv_writer(Some(p))?;
        w.write_record(row.record()).map_err(csv_err)?;
        w.flush().map_err(|e| io_err(p, e))?;
    }
    Ok(0)
}

fn cmd_simulate(
    path: &Path,
    events: u64,
    seed: u64,
    arrival: &str,
    gap: Option<u32>,
    latency: f64,
    out: Option<&Path>,
) -> Result<i32> {
    let cfg = load_config(path, gap)?;
    let kind: ArrivalKind = arrival.parse()?;
    let scenario = cfg.resolve()?;
    let sim_cfg = SimConfig::from_scenario(&scenario, kind, events, seed)?.with_latency(latency)?;
    let start = Instant::now();
    let stats = sim::run(&sim_cfg)?;
    let wall = start.elapsed().as_secs_f64();
    println!(
        "{}",
        serde_json::to_string_pretty(&stats).expect("stats serialize")
    );
    let mut row = SweepRow::new(&cfg, kind).with_sim(&sim_cfg, &stats);
    row.wall_s = wall;
    let mut w = csv_writer(out)?;
    w.write_record(row.record()).map_err(csv_err)?;
    w.flush().map_err(|e| Error::InvalidParameter(e.to_string()))?;
    Ok(0)
}

/// An integer axis given either as a list or as an inclusive range.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum IntGrid {
    List(Vec<u64>),
    Range { from: u64, to: u64 },
}

impl IntGrid {
    pub fn values(&self) -> Vec<u64> {
        match self {
            IntGrid::List(v) => v.clone(),
            IntGrid::Range { from, to } => (*from..=*to).collect(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum Mode {
    Analytic,
    Simulate,
    #[default]
    Both,
}

fn default_gap_grid() -> IntGrid {
    IntGrid::List(vec![1])
}

fn default_arrivals() -> Vec<String> {
    vec!["poisson".into()]
}

fn default_events() -> u64 {
    DEFAULT_EVENTS
}

fn default_seed() -> u64 {
    1
}

/// JSON sweep description. Grid axes are `n`, `a`, `n_d`, `gap` and
/// `arrival`; the remaining fields are shared by every point.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepPlan {
    pub n: IntGrid,
    pub a: Vec<f64>,
    pub n_d: IntGrid,
    #[serde(default = "default_gap_grid")]
    pub gap: IntGrid,
    #[serde(default = "default_arrivals")]
    pub arrival: Vec<String>,
    #[serde(default)]
    pub mode: Mode,
    #[serde(default = "default_events")]
    pub events: u64,
    /// Base seed mixed with each point's coordinates.
    #[serde(default = "default_seed")]
    pub seed: u64,
    #[serde(default)]
    pub output: Option<PathBuf>,
    #[serde(default)]
    pub profile: Option<Vec<ProfileRow>>,
    #[serde(default = "config::default_mu")]
    pub mu: f64,
    #[serde(default = "config::default_server_count")]
    pub server_count: u32,
    #[serde(default = "config::default_capacity")]
    pub fha_capacity_mbps: f64,
    #[serde(default)]
    pub convention: Convention,
}

/// A single grid point of a plan.
#[derive(Debug, Clone, PartialEq)]
pub struct SweepPoint {
    pub config: ModelConfig,
    pub arrival: ArrivalKind,
    pub seed: u64,
}

impl SweepPlan {
    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| Error::config("plan", e.to_string()))
    }

    /// Expands the grid in `n_d`, `gap`, `a`, `arrival`, `n` order (`n`
    /// fastest) and validates every point.
    pub fn points(&self) -> Result<Vec<SweepPoint>> {
        let arrivals = self
            .arrival
            .iter()
            .map(|s| s.parse::<ArrivalKind>())
            .collect::<Result<Vec<_>>>()?;
        let (ns, nds, gaps) = (self.n.values(), self.n_d.values(), self.gap.values());
        if ns.is_empty() || nds.is_empty() || gaps.is_empty() || self.a.is_empty() || arrivals.is_empty() {
            return Err(Error::config("plan", "every grid axis needs at least one value"));
        }
        if self.mode != Mode::Analytic && self.events < sim::MIN_EVENTS {
            return Err(Error::config(
                "events",
                format!("need at least {}", sim::MIN_EVENTS),
            ));
        }
        let mut out = Vec::new();
        for &n_d in &nds {
            for &gap in &gaps {
                for &a in &self.a {
                    for &arrival in &arrivals {
                        for &n in &ns {
                            let config = ModelConfig {
                                profile: self.profile.clone(),
                                n_d: n_d as usize,
                                threshold_gap: u32::try_from(gap)
                                    .map_err(|_| Error::config("gap", "too large"))?,
                                a,
                                mu: self.mu,
                                server_count: self.server_count,
                                cluster_size: n as usize,
                                fha_capacity_mbps: self.fha_capacity_mbps,
                            };
                            config.resolve().map_err(|e| match e {
                                Error::InvalidConfig { field, message } => Error::InvalidConfig {
                                    field,
                                    message: format!("{message} (at n={n}, a={a}, n_d={n_d}, gap={gap})"),
                                },
                                other => other,
                            })?;
                            let seed = point_seed(self.seed, &config, arrival);
                            out.push(SweepPoint {
                                config,
                                arrival,
                                seed,
                            });
                        }
                    }
                }
            }
        }
        Ok(out)
    }
}

fn splitmix64(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9e37_79b9_7f4a_7c15);
    x = (x ^ (x >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    x = (x ^ (x >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    x ^ (x >> 31)
}

/// Seed of a grid point: depends only on the base seed and the point's
/// coordinates, never on execution order.
pub fn point_seed(base: u64, cfg: &ModelConfig, arrival: ArrivalKind) -> u64 {
    let arrival_code = match arrival {
        ArrivalKind::Poisson => 0,
        ArrivalKind::Weibull(k) => k.to_bits(),
    };
    [
        cfg.cluster_size as u64,
        cfg.a.to_bits(),
        cfg.n_d as u64,
        u64::from(cfg.threshold_gap),
        arrival_code,
    ]
    .iter()
    .fold(splitmix64(base), |h, &c| splitmix64(h ^ c))
}

/// Evaluates one grid point.
pub fn run_point(point: &SweepPoint, mode: Mode, events: u64, convention: Convention) -> Result<SweepRow> {
    let start = Instant::now();
    let scenario = point.config.resolve()?;
    let mut row = SweepRow::new(&point.config, point.arrival);
    if mode != Mode::Simulate {
        let spec = AggregatorSpec::from_scenario(&scenario)?.with_convention(convention.into());
        row = row.with_analytic(&aggregator::blocking(&spec)?);
    }
    if mode != Mode::Analytic {
        let cfg = SimConfig::from_scenario(&scenario, point.arrival, events, point.seed)?;
        row = row.with_sim(&cfg, &sim::run(&cfg)?);
    }
    row.wall_s = start.elapsed().as_secs_f64();
    Ok(row)
}

fn thread_pool(jobs: Option<usize>) -> Result<rayon::ThreadPool> {
    let mut b = rayon::ThreadPoolBuilder::new();
    if let Some(j) = jobs {
        if j == 0 {
            return Err(Error::config("jobs", "must be at least 1"));
        }
        b = b.num_threads(j);
    }
    b.build().map_err(|e| Error::InvalidParameter(e.to_string()))
}

fn cmd_sweep(plan_path: &Path, out: Option<&Path>, jobs: Option<usize>) -> Result<i32> {
    let text = std::fs::read_to_string(plan_path)
        .map_err(|e| Error::config("plan", format!("cannot read {}: {e}", plan_path.display())))?;
    let plan = SweepPlan::from_json(&text)?;
    let points = plan.points()?;
    let out = out.map(Path::to_path_buf).or_else(|| plan.output.clone());
    let mut writer = csv_writer(out.as_deref())?;
    let pool = thread_pool(jobs)?;
    info!("sweeping {} points", points.len());

    let (tx, rx) = mpsc::channel::<(usize, SweepRow)>();
    let mut failures = 0;
    std::thread::scope(|scope| -> Result<()> {
        let points = &points;
        let plan = &plan;
        scope.spawn(move || {
            pool.install(|| {
                points.par_iter().enumerate().for_each_with(tx, |tx, (i, p)| {
                    let row = run_point(p, plan.mode, plan.events, plan.convention).unwrap_or_else(|e| {
                        error!("point {i} failed: {e}");
                        SweepRow {
                            failed: true,
                            seed: Some(p.seed),
                            ..SweepRow::new(&p.config, p.arrival)
                        }
                    });
                    let _ = tx.send((i, row));
                });
            });
        });
        // reorder so rows come out in grid order as soon as they can
        let mut pending = BTreeMap::new();
        let mut next = 0;
        for (i, row) in rx {
            pending.insert(i, row);
            while let Some(row) = pending.remove(&next) {
                if row.failed {
                    failures += 1;
                }
                writer.write_record(row.record()).map_err(csv_err)?;
                writer
                    .flush()
                    .map_err(|e| Error::InvalidParameter(e.to_string()))?;
                next += 1;
            }
        }
        Ok(())
    })?;
    Ok(if failures > 0 { 1 } else { 0 })
}

#[derive(Debug, Clone, Serialize)]
pub struct SuiteResult {
    pub name: String,
    pub passed: bool,
    pub metric: f64,
    pub threshold: f64,
    pub detail: String,
}

#[derive(Debug, Clone, Serialize)]
pub struct ValidationReport {
    pub passed: bool,
    pub suites: Vec<SuiteResult>,
}

/// Closed-form partition distributions against the exact reduction of the
/// full chain, over `count` random specs. Returns the worst relative error.
pub fn coefficient_oracle_suite(count: usize, seed: u64) -> Result<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let profile = default_profile();
    let mut worst: f64 = 0.0;
    let mut done = 0;
    while done < count {
        let n_d = rng.random_range(2..=4);
        let gap = rng.random_range(1..=4);
        let rho: f64 = rng.random_range(0.1..40.0);
        let rates = select_rates(&profile, n_d)?;
        let Ok(th) = default_thresholds(&rates, gap) else {
            continue;
        };
        let k = rates.server_count();
        let traffic = traffic_from_load(rho / f64::from(k), 0.5, k)?;
        let spec = RruChainSpec::new(rates, th, traffic)?;
        for l in 1..=n_d {
            let closed = rru::partition_distribution(&spec, l)?;
            let oracle = rru::oracle_conditional(&spec, l)?;
            for (c, o) in closed.probabilities.iter().zip(oracle.probs()) {
                worst = worst.max(((c - o) / o).abs());
            }
        }
        done += 1;
    }
    Ok(worst)
}

/// Product form against the direct solve for every small instance; returns
/// the worst entrywise difference and the worst detailed-balance residual.
pub fn product_form_suite() -> Result<(f64, f64)> {
    let mut worst_diff: f64 = 0.0;
    let mut worst_balance: f64 = 0.0;
    for n_d in 1..=3 {
        for gap in 1..=2 {
            for &a in &[0.1, 0.3, 0.6] {
                for n in 1..=6 {
                    let scenario = ModelConfig::new(n_d, gap, a, n).resolve()?;
                    // a tight link so that the capacity constraint bites
                    for capacity in [scenario.capacity_mbps, 3.0 * scenario.rate_set.rate(n_d)] {
                        let mut sc = scenario.clone();
                        sc.capacity_mbps = capacity;
                        let spec = AggregatorSpec::from_scenario(&sc)?;
                        let (space, pf) = aggregator::product_form(&spec)?;
                        let direct = ctmc::steady_state(&aggregator::generator(&spec, &space)?)?;
                        for (x, y) in pf.probs().iter().zip(direct.probs()) {
                            worst_diff = worst_diff.max((x - y).abs());
                        }
                        worst_balance =
                            worst_balance.max(aggregator::detailed_balance_residual(&spec, &space, &pf));
                    }
                }
            }
        }
    }
    Ok((worst_diff, worst_balance))
}

/// Grid points used by `validate` for the simulation cross-check.
pub const VALIDATION_GRID: [(f64, usize, usize); 5] = [
    (0.2, 1, 9),
    (0.2, 1, 12),
    (0.2, 2, 17),
    (0.3, 2, 12),
    (0.3, 4, 14),
];

fn cmd_validate(events: u64, jobs: Option<usize>) -> Result<i32> {
    let mut suites = Vec::new();

    let worst = coefficient_oracle_suite(50, 2024)?;
    suites.push(SuiteResult {
        name: "closed-form coefficients vs chain reduction".into(),
        passed: worst < 1e-9,
        metric: worst,
        threshold: 1e-9,
        detail: "max relative error over 50 random specs".into(),
    });

    let (diff, balance) = product_form_suite()?;
    suites.push(SuiteResult {
        name: "product form vs direct solve".into(),
        passed: diff < 1e-8,
        metric: diff,
        threshold: 1e-8,
        detail: "max |delta pi| for N <= 6, M <= 3".into(),
    });
    suites.push(SuiteResult {
        name: "detailed balance".into(),
        passed: balance < 1e-10,
        metric: balance,
        threshold: 1e-10,
        detail: "max |P(i)Q_ij - P(j)Q_ji|".into(),
    });

    let pool = thread_pool(jobs)?;
    let rows: Vec<Result<SweepRow>> = pool.install(|| {
        VALIDATION_GRID
            .par_iter()
            .map(|&(a, n_d, n)| {
                let config = ModelConfig::new(n_d, 1, a, n);
                let seed = point_seed(1, &config, ArrivalKind::Poisson);
                let point = SweepPoint {
                    config,
                    arrival: ArrivalKind::Poisson,
                    seed,
                };
                run_point(&point, Mode::Both, events, Convention::Exact)
            })
            .collect()
    });
    let mut worst_z: f64 = 0.0;
    let mut failing = Vec::new();
    for row in rows {
        let row = row?;
        let (pa, ps, se) = (
            row.pb_analytic.unwrap_or(f64::NAN),
            row.pb_sim.unwrap_or(f64::NAN),
            row.pb_sim_std_error.unwrap_or(f64::NAN),
        );
        worst_z = worst_z.max((pa - ps).abs() / se);
        if row.agree != Some(true) {
            failing.push(format!(
                "a={} n_d={} N={}: analytic {pa:.4e} sim {ps:.4e}",
                row.a, row.n_d, row.n
            ));
        }
    }
    suites.push(SuiteResult {
        name: "analytic vs simulation".into(),
        passed: failing.is_empty(),
        metric: worst_z,
        threshold: 3.0,
        detail: if failing.is_empty() {
            format!("{} points, max |z|", VALIDATION_GRID.len())
        } else {
            failing.join("; ")
        },
    });

    let report = ValidationReport {
        passed: suites.iter().all(|s| s.passed),
        suites,
    };
    for s in report.suites.iter().filter(|s| !s.passed) {
        eprintln!("FAILED: {} ({} vs {})", s.name, s.metric, s.threshold);
    }
    println!(
        "{}",
        serde_json::to_string_pretty(&report).expect("report serializes")
    );
    Ok(if report.passed { 0 } else { 1 })
}
