//! Seeded experiment runners for the two-firm, variance-scaling, multi-firm,
//! cost-exponent and open-boundary studies.
//!
//! Every task is a pure function of `(spec, sweep point, seed)`. Tasks run on
//! the rayon pool and are collected in `(sweep point, seed)` order, so
//! results do not depend on scheduling.

use std::collections::HashSet;
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::analytics::{
    self, fit_line, fit_power_law_above, nash_equilibrium, AnalyticsError, FitPoint, LineFit,
    PowerLawFit,
};
use crate::dynamics::{
    self, run_alternating, run_alternating_from, DynamicsError, DynamicsTrace, Method, PriceEngine,
};
use crate::market::{Boundary, MarketConfig, MarketError, Point};

pub const RNG_ALGORITHM: &str = "ChaCha8 (rand_chacha), seed_from_u64";
pub const DEFAULT_SEED_COUNT: u64 = 20;
pub const DEFAULT_N_SIDE: usize = 80;
pub const DEFAULT_FIT_MIN_M: usize = 8;
pub const DEFAULT_PROFILE_POINTS: usize = 1001;
pub const NON_PBC_STEPS: usize = 500;
/// Grid resolution used once the customer lattice reaches `LARGE_GRID_N`.
pub const LARGE_GRID_POINTS: usize = 100_000;
pub const LARGE_GRID_N: usize = 640;
pub const GAMMA_GRID: [f64; 12] = [
    0.25, 0.5, 0.75, 1.0, 1.25, 1.5, 1.75, 2.0, 2.5, 3.0, 3.5, 4.0,
];

#[derive(Debug, Error)]
pub enum ExperimentError {
    #[error("invalid experiment spec: {0}")]
    InvalidSpec(String),
    #[error(transparent)]
    Market(#[from] MarketError),
    #[error(transparent)]
    Dynamics(#[from] DynamicsError),
    #[error(transparent)]
    Analytics(#[from] AnalyticsError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ExperimentKind {
    TwoFirmSweep,
    VarianceScaling,
    MultiFirmSweep,
    GammaSweep,
    NonPbcDemo,
    NashTable,
}

impl ExperimentKind {
    /// Command-line name of the experiment.
    pub fn command(&self) -> &'static str {
        match self {
            ExperimentKind::TwoFirmSweep => "two-firm",
            ExperimentKind::VarianceScaling => "variance-scaling",
            ExperimentKind::MultiFirmSweep => "multi-firm",
            ExperimentKind::GammaSweep => "gamma-sweep",
            ExperimentKind::NonPbcDemo => "non-pbc-demo",
            ExperimentKind::NashTable => "nash-table",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentSpec {
    pub kind: ExperimentKind,
    pub r: f64,
    pub gamma: f64,
    pub boundary: Boundary,
    pub d_list: Vec<f64>,
    pub n_list: Vec<usize>,
    pub m_list: Vec<usize>,
    pub gamma_list: Vec<f64>,
    /// Rival prices at which the open-boundary demo samples profit profiles.
    pub p_other_list: Vec<f64>,
    pub seeds: Vec<u64>,
    pub steps: usize,
    pub burn_in: usize,
    pub initial_price: f64,
    pub method: Method,
    pub fit_min_m: usize,
    pub profile_points: usize,
}

impl ExperimentSpec {
    pub fn new(kind: ExperimentKind) -> Self {
        let mut spec = ExperimentSpec {
            kind,
            r: 1.0,
            gamma: 1.0,
            boundary: Boundary::Periodic,
            d_list: vec![],
            n_list: vec![DEFAULT_N_SIDE],
            m_list: vec![],
            gamma_list: vec![],
            p_other_list: vec![],
            seeds: (0..DEFAULT_SEED_COUNT).collect(),
            steps: dynamics::DEFAULT_STEPS,
            burn_in: dynamics::DEFAULT_BURN_IN,
            initial_price: dynamics::DEFAULT_INITIAL_PRICE,
            method: Method::exact(),
            fit_min_m: DEFAULT_FIT_MIN_M,
            profile_points: DEFAULT_PROFILE_POINTS,
        };
        match kind {
            ExperimentKind::TwoFirmSweep => spec.d_list = vec![0.1, 0.2, 0.3, 0.4, 0.5],
            ExperimentKind::VarianceScaling => {
                spec.d_list = vec![0.5];
                spec.n_list = vec![10, 20, 40, 80, 160];
            }
            ExperimentKind::MultiFirmSweep => spec.m_list = vec![2, 4, 8, 16, 32, 64],
            ExperimentKind::GammaSweep => {
                spec.m_list = vec![2, 4, 8, 16, 32, 64];
                spec.gamma_list = GAMMA_GRID.to_vec();
            }
            ExperimentKind::NonPbcDemo => {
                spec.boundary = Boundary::Open;
                spec.d_list = vec![0.2];
                spec.p_other_list = vec![0.65, 0.71];
                spec.steps = NON_PBC_STEPS;
                spec.seeds = vec![0];
            }
            ExperimentKind::NashTable => {
                spec.d_list = (1..=10).map(|i| i as f64 / 20.0).collect();
                spec.seeds = vec![0];
            }
        }
        spec
    }

    pub fn validate(&self) -> Result<(), ExperimentError> {
        let bad = |msg: String| Err(ExperimentError::InvalidSpec(msg));
        if !(self.r > 0.0 && self.r.is_finite()) {
            return bad(format!("r must be positive, got {}", self.r));
        }
        if !(self.gamma > 0.0 && self.gamma.is_finite()) {
            return bad(format!("gamma must be positive, got {}", self.gamma));
        }
        if self.burn_in >= self.steps {
            return bad(format!(
                "burn-in must be < steps ({} >= {})",
                self.burn_in, self.steps
            ));
        }
        if !(self.initial_price >= 0.0 && self.initial_price.is_finite()) {
            return bad("initial price must be nonnegative".into());
        }
        if self.seeds.is_empty() {
            return bad("seed list is empty".into());
        }
        let distinct: HashSet<u64> = self.seeds.iter().copied().collect();
        if distinct.len() != self.seeds.len() {
            return bad("seeds must be distinct".into());
        }
        if self.n_list.is_empty() || self.n_list.contains(&0) {
            return bad("grid side list must be nonempty and positive".into());
        }
        if let Method::Grid {
            grid_points,
            price_max,
        } = self.method
        {
            if grid_points < 2 || price_max.is_nan() || price_max <= 0.0 {
                return bad("grid needs >= 2 points and a positive price cap".into());
            }
        }
        let need_d = matches!(
            self.kind,
            ExperimentKind::TwoFirmSweep
                | ExperimentKind::VarianceScaling
                | ExperimentKind::NonPbcDemo
                | ExperimentKind::NashTable
        );
        if need_d {
            if self.d_list.is_empty() {
                return bad("distance list (--d) is required".into());
            }
            if let Some(d) = self.d_list.iter().find(|d| !(**d > 0.0 && **d < 1.0)) {
                return bad(format!("distance must lie in (0, 1), got {d}"));
            }
        }
        let need_m = matches!(
            self.kind,
            ExperimentKind::MultiFirmSweep | ExperimentKind::GammaSweep
        );
        if need_m {
            if self.m_list.is_empty() {
                return bad("firm-count list (--m) is required".into());
            }
            if self.m_list.iter().any(|&m| m < 2) {
                return bad("firm counts must be >= 2".into());
            }
        }
        if self.kind == ExperimentKind::GammaSweep {
            if self.gamma_list.is_empty() {
                return bad("gamma list is required".into());
            }
            if let Some(g) = self.gamma_list.iter().find(|g| !(**g > 0.0 && **g <= 4.0)) {
                return bad(format!("gamma-sweep values must lie in (0, 4], got {g}"));
            }
        }
        Ok(())
    }

    /// Best-response method for a lattice of side `n`; grid searches switch to
    /// the finer resolution on the largest lattices.
    pub fn method_for(&self, n: usize) -> Method {
        match self.method {
            Method::Grid {
                grid_points,
                price_max,
            } if n >= LARGE_GRID_N && grid_points == dynamics::DEFAULT_GRID_POINTS => {
                Method::Grid {
                    grid_points: LARGE_GRID_POINTS,
                    price_max,
                }
            }
            m => m,
        }
    }
}

/// One dynamics run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub d: Option<f64>,
    pub n_side: usize,
    pub m: usize,
    pub gamma: f64,
    pub seed: u64,
    /// Averages over firms of the per-firm tail statistics.
    pub mean_price: f64,
    pub mean_profit: f64,
    pub tail_var: f64,
    pub firm_profits: Vec<f64>,
    pub theory: Option<f64>,
    pub converged: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NashRow {
    pub d: f64,
    pub omega: f64,
    pub x_star: f64,
    pub p_star: f64,
    pub stable: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Rows {
    Sweep(Vec<SweepRow>),
    Nash(Vec<NashRow>),
}

/// Statistics across seeds at one sweep point.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Aggregate {
    pub d: Option<f64>,
    pub n_side: usize,
    pub m: usize,
    pub gamma: f64,
    pub n_seeds: usize,
    pub mean_profit: f64,
    /// Sample standard deviation across seeds; absent with a single seed.
    pub std_profit: Option<f64>,
    pub min_profit: f64,
    pub max_profit: f64,
    pub mean_price: f64,
    pub mean_tail_var: f64,
    pub theory: Option<f64>,
    pub converged_fraction: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum FitRecord {
    PowerLaw {
        gamma: f64,
        fit: PowerLawFit,
    },
    /// `ln(tail variance)` against `ln N`.
    VarianceSlope {
        d: f64,
        fit: LineFit,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProfileSeries {
    pub d: f64,
    pub p_other: f64,
    /// `(p1, X1(p1 | p_other))`.
    pub points: Vec<(f64, f64)>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Meta {
    pub rng: String,
    pub seeds: Vec<u64>,
    pub wall_clock_secs: f64,
    pub version: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentResult {
    pub spec: ExperimentSpec,
    pub rows: Rows,
    pub aggregates: Vec<Aggregate>,
    pub fits: Vec<FitRecord>,
    #[serde(skip_serializing_if = "Vec::is_empty", default)]
    pub traces: Vec<DynamicsTrace>,
    #[serde(skip_serializing_if = "Vec::is_empty", default)]
    pub profiles: Vec<ProfileSeries>,
    pub meta: Meta,
}

impl ExperimentResult {
    pub fn sweep_rows(&self) -> &[SweepRow] {
        match &self.rows {
            Rows::Sweep(r) => r,
            Rows::Nash(_) => &[],
        }
    }

    pub fn power_law_fits(&self) -> impl Iterator<Item = (f64, &PowerLawFit)> {
        self.fits.iter().filter_map(|f| match f {
            FitRecord::PowerLaw { gamma, fit } => Some((*gamma, fit)),
            _ => None,
        })
    }
}

/// `m` positions drawn i.i.d. uniform on the unit square.
pub fn place_firms_random(m: usize, seed: u64) -> Vec<Point> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..m)
        .map(|_| {
            let x: f64 = rng.random();
            let y: f64 = rng.random();
            Point::new(x, y)
        })
        .collect()
}

/// Firms at `(0, 0.5)` and `(d, 0.5)`.
pub fn pair_positions(d: f64) -> [Point; 2] {
    [Point::new(0.0, 0.5), Point::new(d, 0.5)]
}

/// Starting prices for a seeded run. Seed 0 starts every firm at `base`;
/// other seeds draw each price uniformly from `[0, price_max)`.
pub fn initial_prices(m: usize, seed: u64, base: f64, price_max: f64) -> Vec<f64> {
    if seed == 0 {
        return vec![base; m];
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(1);
    (0..m).map(|_| rng.random_range(0.0..price_max)).collect()
}

/// Dynamics length for `m` firms when `steps`/`burn_in` describe the
/// two-firm schedule: every firm gets `steps / 2` optimizations.
pub fn scaled_schedule(steps: usize, burn_in: usize, m: usize) -> (usize, usize) {
    if m <= 2 {
        (steps, burn_in)
    } else {
        (steps * m / 2, burn_in * m / 2)
    }
}

fn mean(xs: &[f64]) -> f64 {
    xs.iter().sum::<f64>() / xs.len() as f64
}

fn sample_std(xs: &[f64]) -> Option<f64> {
    if xs.len() < 2 {
        return None;
    }
    let mu = mean(xs);
    Some((xs.iter().map(|x| (x - mu).powi(2)).sum::<f64>() / (xs.len() - 1) as f64).sqrt())
}

fn row_from_trace(
    trace: &DynamicsTrace,
    d: Option<f64>,
    n_side: usize,
    gamma: f64,
    seed: u64,
    theory: Option<f64>,
) -> SweepRow {
    SweepRow {
        d,
        n_side,
        m: trace.m(),
        gamma,
        seed,
        mean_price: mean(&trace.tail_mean_price),
        mean_profit: mean(&trace.tail_mean_profit),
        tail_var: mean(&trace.tail_var_profit),
        firm_profits: trace.tail_mean_profit.clone(),
        theory,
        converged: trace.converged,
    }
}

/// Groups consecutive rows that share a sweep point.
fn aggregate(rows: &[SweepRow]) -> Vec<Aggregate> {
    let same = |a: &SweepRow, b: &SweepRow| {
        a.d == b.d && a.n_side == b.n_side && a.m == b.m && a.gamma == b.gamma
    };
    let mut out = Vec::new();
    let mut start = 0;
    while start < rows.len() {
        let mut end = start + 1;
        while end < rows.len() && same(&rows[start], &rows[end]) {
            end += 1;
        }
        let group = &rows[start..end];
        let profits: Vec<f64> = group.iter().map(|r| r.mean_profit).collect();
        let head = &group[0];
        out.push(Aggregate {
            d: head.d,
            n_side: head.n_side,
            m: head.m,
            gamma: head.gamma,
            n_seeds: group.len(),
            mean_profit: mean(&profits),
            std_profit: sample_std(&profits),
            min_profit: profits.iter().copied().fold(f64::INFINITY, f64::min),
            max_profit: profits.iter().copied().fold(f64::NEG_INFINITY, f64::max),
            mean_price: mean(&group.iter().map(|r| r.mean_price).collect::<Vec<_>>()),
            mean_tail_var: mean(&group.iter().map(|r| r.tail_var).collect::<Vec<_>>()),
            theory: head.theory,
            converged_fraction: group.iter().filter(|r| r.converged).count() as f64
                / group.len() as f64,
        });
        start = end;
    }
    out
}

fn finish(
    spec: &ExperimentSpec,
    rows: Rows,
    aggregates: Vec<Aggregate>,
    fits: Vec<FitRecord>,
    started: Instant,
) -> ExperimentResult {
    ExperimentResult {
        spec: spec.clone(),
        rows,
        aggregates,
        fits,
        traces: vec![],
        profiles: vec![],
        meta: Meta {
            rng: RNG_ALGORITHM.to_string(),
            seeds: spec.seeds.clone(),
            wall_clock_secs: started.elapsed().as_secs_f64(),
            version: env!("CARGO_PKG_VERSION").to_string(),
        },
    }
}

fn pair_config(
    spec: &ExperimentSpec,
    d: f64,
    n: usize,
    seed: u64,
) -> Result<MarketConfig, ExperimentError> {
    let prices = initial_prices(2, seed, spec.initial_price, dynamics::DEFAULT_PRICE_MAX);
    Ok(MarketConfig::new(
        n,
        &pair_positions(d),
        spec.initial_price,
        spec.r,
        spec.gamma,
        spec.boundary,
    )?
    .with_prices(&prices)?)
}

fn run_pair(
    spec: &ExperimentSpec,
    d: f64,
    n: usize,
    seed: u64,
) -> Result<SweepRow, ExperimentError> {
    let config = pair_config(spec, d, n, seed)?;
    let trace = run_alternating_from(&config, spec.steps, spec.burn_in, spec.method_for(n))?;
    let theory = if spec.gamma == 1.0 && spec.boundary == Boundary::Periodic {
        Some(nash_equilibrium(d, spec.r)?.profit)
    } else {
        None
    };
    Ok(row_from_trace(&trace, Some(d), n, spec.gamma, seed, theory))
}

fn pair_rows(spec: &ExperimentSpec) -> Result<Vec<SweepRow>, ExperimentError> {
    let mut tasks = Vec::new();
    for &d in &spec.d_list {
        for &n in &spec.n_list {
            for &seed in &spec.seeds {
                tasks.push((d, n, seed));
            }
        }
    }
    tasks
        .par_iter()
        .map(|&(d, n, seed)| run_pair(spec, d, n, seed))
        .collect()
}

/// Two firms at distance `d` for every `(d, N, seed)`, with the closed-form
/// Nash profit alongside.
pub fn run_two_firm_sweep(spec: &ExperimentSpec) -> Result<ExperimentResult, ExperimentError> {
    spec.validate()?;
    let started = Instant::now();
    let rows = pair_rows(spec)?;
    let aggregates = aggregate(&rows);
    Ok(finish(spec, Rows::Sweep(rows), aggregates, vec![], started))
}

/// Tail profit variance per lattice size and its log-log slope in `N`.
pub fn run_variance_scaling(spec: &ExperimentSpec) -> Result<ExperimentResult, ExperimentError> {
    spec.validate()?;
    if spec.n_list.len() < 2 {
        return Err(ExperimentError::InvalidSpec(
            "variance scaling needs at least two lattice sizes".into(),
        ));
    }
    let started = Instant::now();
    let rows = pair_rows(spec)?;
    let aggregates = aggregate(&rows);
    let mut fits = Vec::new();
    for &d in &spec.d_list {
        let (xs, ys): (Vec<f64>, Vec<f64>) = aggregates
            .iter()
            .filter(|a| a.d == Some(d) && a.mean_tail_var > 0.0)
            .map(|a| ((a.n_side as f64).ln(), a.mean_tail_var.ln()))
            .unzip();
        fits.push(FitRecord::VarianceSlope {
            d,
            fit: fit_line(&xs, &ys)?,
        });
    }
    Ok(finish(spec, Rows::Sweep(rows), aggregates, fits, started))
}

fn multi_firm_rows(spec: &ExperimentSpec, gamma: f64) -> Result<Vec<SweepRow>, ExperimentError> {
    let n = spec.n_list[0];
    let mut tasks = Vec::new();
    for &m in &spec.m_list {
        for &seed in &spec.seeds {
            tasks.push((m, seed));
        }
    }
    tasks
        .par_iter()
        .map(|&(m, seed)| {
            let positions = place_firms_random(m, seed);
            let config = MarketConfig::new(
                n,
                &positions,
                spec.initial_price,
                spec.r,
                gamma,
                spec.boundary,
            )?;
            let (steps, burn_in) = scaled_schedule(spec.steps, spec.burn_in, m);
            let trace = run_alternating(
                &config,
                steps,
                burn_in,
                spec.initial_price,
                spec.method_for(n),
            )?;
            let theory = analytics::predicted_profit_per_firm(m, spec.r)?;
            Ok(row_from_trace(&trace, None, n, gamma, seed, Some(theory)))
        })
        .collect()
}

fn power_law_fit(spec: &ExperimentSpec, gamma: f64, aggregates: &[Aggregate]) -> Option<FitRecord> {
    let points: Vec<FitPoint> = aggregates
        .iter()
        .filter(|a| a.gamma == gamma)
        .filter_map(|a| {
            a.std_profit.map(|std| FitPoint {
                m: a.m,
                mean: a.mean_profit,
                std,
            })
        })
        .collect();
    fit_power_law_above(&points, spec.r, spec.fit_min_m)
        .ok()
        .map(|fit| FitRecord::PowerLaw { gamma, fit })
}

/// Randomly placed firms for every `(m, seed)`; mean profit per firm is fitted
/// to `A r / m^B` over `m >= fit_min_m`. The fit is omitted when fewer than
/// three sweep points with a seed spread are available.
pub fn run_multi_firm_sweep(spec: &ExperimentSpec) -> Result<ExperimentResult, ExperimentError> {
    spec.validate()?;
    let started = Instant::now();
    let rows = multi_firm_rows(spec, spec.gamma)?;
    let aggregates = aggregate(&rows);
    let fits = power_law_fit(spec, spec.gamma, &aggregates)
        .into_iter()
        .collect();
    Ok(finish(spec, Rows::Sweep(rows), aggregates, fits, started))
}

/// The multi-firm pipeline repeated for each cost exponent.
pub fn run_gamma_sweep(spec: &ExperimentSpec) -> Result<ExperimentResult, ExperimentError> {
    spec.validate()?;
    let started = Instant::now();
    let mut rows = Vec::new();
    let mut fits = Vec::new();
    for &gamma in &spec.gamma_list {
        let block = multi_firm_rows(spec, gamma)?;
        fits.extend(power_law_fit(spec, gamma, &aggregate(&block)));
        rows.extend(block);
    }
    let aggregates = aggregate(&rows);
    Ok(finish(spec, Rows::Sweep(rows), aggregates, fits, started))
}

/// Open-boundary two-firm dynamics plus profit profiles of firm 1 against
/// fixed rival prices.
pub fn run_non_pbc_demo(spec: &ExperimentSpec) -> Result<ExperimentResult, ExperimentError> {
    spec.validate()?;
    let started = Instant::now();
    let n = spec.n_list[0];
    let method = spec.method_for(n);
    let price_max = match method {
        Method::Grid { price_max, .. } => price_max,
        Method::Exact { .. } => dynamics::DEFAULT_PRICE_MAX,
    };
    let seed = spec.seeds[0];
    let mut rows = Vec::new();
    let mut traces = Vec::new();
    let mut profiles = Vec::new();
    for &d in &spec.d_list {
        let config = pair_config(spec, d, n, seed)?;
        let trace = run_alternating_from(&config, spec.steps, spec.burn_in, method)?;
        rows.push(row_from_trace(&trace, Some(d), n, spec.gamma, seed, None));
        traces.push(trace);
        for &p_other in &spec.p_other_list {
            let mut engine = PriceEngine::new(config.clone())?;
            engine.set_price(1, p_other)?;
            profiles.push(ProfileSeries {
                d,
                p_other,
                points: engine.profit_profile(0, price_max, spec.profile_points),
            });
        }
    }
    let aggregates = aggregate(&rows);
    let mut result = finish(spec, Rows::Sweep(rows), aggregates, vec![], started);
    result.traces = traces;
    result.profiles = profiles;
    Ok(result)
}

/// Closed-form equilibrium and its undercutting stability per distance.
pub fn run_nash_table(spec: &ExperimentSpec) -> Result<ExperimentResult, ExperimentError> {
    spec.validate()?;
    let started = Instant::now();
    let rows = spec
        .d_list
        .iter()
        .map(|&d| {
            let eq = nash_equilibrium(d, spec.r)?;
            Ok(NashRow {
                d,
                omega: eq.omega,
                x_star: eq.profit,
                p_star: eq.price,
                stable: analytics::pbc_stability_check(d.min(1.0 - d), spec.r)?,
            })
        })
        .collect::<Result<Vec<_>, AnalyticsError>>()?;
    Ok(finish(spec, Rows::Nash(rows), vec![], vec![], started))
}

pub fn run(spec: &ExperimentSpec) -> Result<ExperimentResult, ExperimentError> {
    match spec.kind {
        ExperimentKind::TwoFirmSweep => run_two_firm_sweep(spec),
        ExperimentKind::VarianceScaling => run_variance_scaling(spec),
        ExperimentKind::MultiFirmSweep => run_multi_firm_sweep(spec),
        ExperimentKind::GammaSweep => run_gamma_sweep(spec),
        ExperimentKind::NonPbcDemo => run_non_pbc_demo(spec),
        ExperimentKind::NashTable => run_nash_table(spec),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn seeded_initial_prices() {
        assert_eq!(initial_prices(2, 0, 0.3, 1.0), vec![0.3, 0.3]);
        let a = initial_prices(2, 5, 0.3, 1.0);
        assert_eq!(a, initial_prices(2, 5, 0.3, 1.0));
        assert_ne!(a, initial_prices(2, 6, 0.3, 1.0));
        assert!(a.iter().all(|p| (0.0..1.0).contains(p)));
    }

    #[test]
    fn placement_is_deterministic() {
        assert_eq!(place_firms_random(7, 42), place_firms_random(7, 42));
        assert_ne!(place_firms_random(7, 42), place_firms_random(7, 43));
    }

    #[test]
    fn placement_mean_is_central() {
        let pts = place_firms_random(100_000, 9);
        let sigma = (1.0 / 12.0f64).sqrt() / (100_000f64).sqrt();
        let mx = pts.iter().map(|p| p.x).sum::<f64>() / pts.len() as f64;
        let my = pts.iter().map(|p| p.y).sum::<f64>() / pts.len() as f64;
        assert!((mx - 0.5).abs() < 3.0 * sigma, "{mx}");
        assert!((my - 0.5).abs() < 3.0 * sigma, "{my}");
    }

    #[test]
    fn schedule_scaling() {
        assert_eq!(scaled_schedule(120, 80, 2), (120, 80));
        assert_eq!(scaled_schedule(120, 80, 8), (480, 320));
    }

    #[test]
    fn spec_validation() {
        let mut s = ExperimentSpec::new(ExperimentKind::TwoFirmSweep);
        assert!(s.validate().is_ok());
        s.burn_in = 200;
        assert!(
            matches!(s.validate(), Err(ExperimentError::InvalidSpec(m)) if m.contains("burn-in"))
        );
        let mut s = ExperimentSpec::new(ExperimentKind::MultiFirmSweep);
        s.m_list.clear();
        assert!(s.validate().is_err());
        let mut s = ExperimentSpec::new(ExperimentKind::TwoFirmSweep);
        s.seeds = vec![1, 1];
        assert!(s.validate().is_err());
        let mut s = ExperimentSpec::new(ExperimentKind::GammaSweep);
        s.gamma_list = vec![4.5];
        assert!(s.validate().is_err());
    }

    #[test]
    fn large_lattice_uses_fine_grid() {
        let mut s = ExperimentSpec::new(ExperimentKind::VarianceScaling);
        s.method = Method::grid();
        assert_eq!(
            s.method_for(640),
            Method::Grid {
                grid_points: 100_000,
                price_max: 1.0
            }
        );
        assert_eq!(s.method_for(160), Method::grid());
    }

    #[test]
    fn aggregates_bracket_rows() {
        let mut s = ExperimentSpec::new(ExperimentKind::TwoFirmSweep);
        s.d_list = vec![0.3, 0.7];
        s.n_list = vec![12];
        s.seeds = vec![0, 1, 2];
        let res = run_two_firm_sweep(&s).unwrap();
        assert_eq!(res.sweep_rows().len(), 6);
        assert_eq!(res.aggregates.len(), 2);
        for a in &res.aggregates {
            assert_eq!(a.n_seeds, 3);
            assert!(a.min_profit <= a.mean_profit && a.mean_profit <= a.max_profit);
            assert!(a.std_profit.is_some());
        }
    }

    #[test]
    fn nash_table_rows() {
        let res = run_nash_table(&ExperimentSpec::new(ExperimentKind::NashTable)).unwrap();
        let Rows::Nash(rows) = &res.rows else {
            panic!("expected nash rows")
        };
        assert_eq!(rows.len(), 10);
        let last = rows.last().unwrap();
        assert!((last.d - 0.5).abs() < 1e-12);
        assert!((last.x_star - 0.169_039_661_488_382_6).abs() < 1e-12);
        assert!(rows.iter().all(|r| r.stable));
    }
}
