//! Best-response pricing and the alternating optimization protocol.
//!
//! [`PriceEngine`] keeps the two cheapest offers seen by every customer so
//! that a single firm's best response only needs one pass over the grid,
//! independent of the number of competitors.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::market::{Assignment, MarketConfig, MarketError, TransportCosts};

pub const DEFAULT_GRID_POINTS: usize = 10_000;
pub const DEFAULT_PRICE_MAX: f64 = 1.0;
pub const DEFAULT_EPSILON: f64 = 1e-9;
/// Tail profit variance below `CONVERGENCE_FACTOR * (r / N)^2` for every
/// firm counts as converged. Lattice discreteness alone leaves a residual
/// variance of order `0.1 (r / N)^2` in stable markets.
pub const CONVERGENCE_FACTOR: f64 = 1.0;

pub fn convergence_threshold(config: &MarketConfig) -> f64 {
    CONVERGENCE_FACTOR * (config.r / config.n_side as f64).powi(2)
}
pub const DEFAULT_STEPS: usize = 120;
pub const DEFAULT_BURN_IN: usize = 80;
pub const DEFAULT_INITIAL_PRICE: f64 = 0.3;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum DynamicsError {
    #[error("monopolist best response is unbounded (no competitor thresholds)")]
    UnboundedBestResponse,
    #[error("firm id {0} out of range")]
    UnknownFirm(usize),
    #[error("grid needs at least 2 points and a positive price cap")]
    InvalidGrid,
    #[error("burn-in ({burn_in}) must be < steps ({steps})")]
    BurnInTooLong { steps: usize, burn_in: usize },
    #[error("need at least 2 post-burn-in steps, have {0}")]
    InsufficientData(usize),
    #[error(transparent)]
    Market(#[from] MarketError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum MethodKind {
    Grid,
    Exact,
}

/// How a firm searches for its best response.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum Method {
    /// Evenly spaced prices on `[0, price_max]`.
    Grid { grid_points: usize, price_max: f64 },
    /// Candidates just below each customer's switching threshold.
    Exact { epsilon: f64 },
}

impl Method {
    pub fn grid() -> Self {
        Method::Grid {
            grid_points: DEFAULT_GRID_POINTS,
            price_max: DEFAULT_PRICE_MAX,
        }
    }

    pub fn exact() -> Self {
        Method::Exact {
            epsilon: DEFAULT_EPSILON,
        }
    }

    pub fn kind(&self) -> MethodKind {
        match self {
            Method::Grid { .. } => MethodKind::Grid,
            Method::Exact { .. } => MethodKind::Exact,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BestResponse {
    pub price: f64,
    pub profit_per_customer: f64,
    pub method: MethodKind,
}

#[derive(Debug, Clone, Copy, PartialEq)]
struct Offer {
    cost: f64,
    firm: usize,
}

const NO_OFFER: Offer = Offer {
    cost: f64::INFINITY,
    firm: usize::MAX,
};

impl Offer {
    /// Lexicographic on (cost, firm id): the customer's preference order.
    fn beats(self, other: Offer) -> bool {
        self.cost < other.cost || (self.cost == other.cost && self.firm < other.firm)
    }
}

/// Market state with mutable prices and cached per-customer top-two offers.
#[derive(Debug, Clone)]
pub struct PriceEngine {
    config: MarketConfig,
    costs: TransportCosts,
    best: Vec<Offer>,
    second: Vec<Offer>,
}

/// Customer switching thresholds for one firm: up to rounding, the firm
/// wins customer `c` at price `p` iff `p < theta[c]`.
struct Thresholds {
    theta: Vec<f64>,
}

impl PriceEngine {
    pub fn new(config: MarketConfig) -> Result<Self, MarketError> {
        config.validate()?;
        let costs = TransportCosts::new(&config);
        let nc = costs.n_customers();
        let mut engine = PriceEngine {
            config,
            costs,
            best: vec![NO_OFFER; nc],
            second: vec![NO_OFFER; nc],
        };
        for c in 0..nc {
            engine.rescan(c);
        }
        Ok(engine)
    }

    pub fn config(&self) -> &MarketConfig {
        &self.config
    }

    pub fn prices(&self) -> Vec<f64> {
        self.config.prices()
    }

    fn offer(&self, k: usize, c: usize) -> Offer {
        Offer {
            cost: self.config.firms[k].price + self.costs.firm(k)[c],
            firm: k,
        }
    }

    fn rescan(&mut self, c: usize) {
        let mut best = NO_OFFER;
        let mut second = NO_OFFER;
        for k in 0..self.config.m() {
            let o = self.offer(k, c);
            if o.beats(best) {
                second = best;
                best = o;
            } else if o.beats(second) {
                second = o;
            }
        }
        self.best[c] = best;
        self.second[c] = second;
    }

    fn rescan_second(&mut self, c: usize) {
        let skip = self.best[c].firm;
        let mut second = NO_OFFER;
        for k in 0..self.config.m() {
            if k == skip {
                continue;
            }
            let o = self.offer(k, c);
            if o.beats(second) {
                second = o;
            }
        }
        self.second[c] = second;
    }

    /// Sets firm `k`'s price and refreshes the cached offers.
    pub fn set_price(&mut self, k: usize, price: f64) -> Result<(), DynamicsError> {
        if k >= self.config.m() {
            return Err(DynamicsError::UnknownFirm(k));
        }
        self.config.set_price(k, price)?;
        for c in 0..self.costs.n_customers() {
            let o = self.offer(k, c);
            if self.best[c].firm == k {
                if o.beats(self.second[c]) {
                    self.best[c] = o;
                } else {
                    self.rescan(c);
                }
            } else if self.second[c].firm == k {
                if o.beats(self.best[c]) {
                    self.second[c] = self.best[c];
                    self.best[c] = o;
                } else if o.cost <= self.second[c].cost {
                    self.second[c] = o;
                } else {
                    self.rescan_second(c);
                }
            } else if o.beats(self.best[c]) {
                self.second[c] = self.best[c];
                self.best[c] = o;
            } else if o.beats(self.second[c]) {
                self.second[c] = o;
            }
        }
        Ok(())
    }

    pub fn counts(&self) -> Vec<usize> {
        let mut counts = vec![0usize; self.config.m()];
        for o in &self.best {
            counts[o.firm] += 1;
        }
        counts
    }

    pub fn assignment(&self) -> Assignment {
        Assignment::from_counts(self.counts(), &self.prices(), self.costs.n_customers())
    }

    /// The cheapest competing offer each customer has, excluding firm `k`.
    fn rival(&self, k: usize, c: usize) -> Offer {
        if self.best[c].firm == k {
            self.second[c]
        } else {
            self.best[c]
        }
    }

    /// Number of customers firm `k` would serve at `price`, others fixed.
    pub fn count_at(&self, k: usize, price: f64) -> usize {
        let t = self.costs.firm(k);
        (0..self.costs.n_customers())
            .filter(|&c| {
                Offer {
                    cost: price + t[c],
                    firm: k,
                }
                .beats(self.rival(k, c))
            })
            .count()
    }

    /// Profit per customer firm `k` would earn at `price`, others fixed.
    pub fn profit_at(&self, k: usize, price: f64) -> f64 {
        price * self.count_at(k, price) as f64 / self.costs.n_customers() as f64
    }

    fn thresholds(&self, k: usize) -> Thresholds {
        let t = self.costs.firm(k);
        let theta = (0..self.costs.n_customers())
            .map(|c| self.rival(k, c).cost - t[c])
            .collect();
        Thresholds { theta }
    }

    fn check_firm(&self, k: usize) -> Result<(), DynamicsError> {
        if k >= self.config.m() {
            Err(DynamicsError::UnknownFirm(k))
        } else {
            Ok(())
        }
    }

    /// Grid search over `grid_points` evenly spaced prices in `[0, price_max]`;
    /// the lowest maximizing price wins ties.
    pub fn best_response_grid(
        &self,
        k: usize,
        grid_points: usize,
        price_max: f64,
    ) -> Result<BestResponse, DynamicsError> {
        self.check_firm(k)?;
        if grid_points < 2 || !(price_max > 0.0 && price_max.is_finite()) {
            return Err(DynamicsError::InvalidGrid);
        }
        let mut theta = self.thresholds(k).theta;
        theta.sort_unstable_by(|a, b| a.total_cmp(b));
        let nc = theta.len();
        let step = price_max / (grid_points - 1) as f64;
        // lost[g] = customers with theta <= p; monotone in p so one sweep suffices
        let mut lost = 0usize;
        let mut best_price = 0.0;
        let mut best_score = -1.0;
        for g in 0..grid_points {
            let p = step * g as f64;
            while lost < nc && theta[lost] <= p {
                lost += 1;
            }
            let score = p * (nc - lost) as f64;
            if score > best_score {
                best_score = score;
                best_price = p;
            }
        }
        // the sweep above is only used to rank prices; the reported profit is
        // recounted against the exact preference rule
        Ok(BestResponse {
            price: best_price,
            profit_per_customer: self.profit_at(k, best_price),
            method: MethodKind::Grid,
        })
    }

    /// Exact maximizer of the sawtooth `p * #{theta > p}` using candidates
    /// `theta - epsilon` for each distinct threshold.
    pub fn best_response_exact(
        &self,
        k: usize,
        epsilon: f64,
    ) -> Result<BestResponse, DynamicsError> {
        self.check_firm(k)?;
        if self.config.m() < 2 {
            return Err(DynamicsError::UnboundedBestResponse);
        }
        let mut theta: Vec<f64> = self
            .thresholds(k)
            .theta
            .into_iter()
            .filter(|&v| v > epsilon)
            .collect();
        if theta.is_empty() {
            return Ok(BestResponse {
                price: 0.0,
                profit_per_customer: 0.0,
                method: MethodKind::Exact,
            });
        }
        theta.sort_unstable_by(|a, b| b.total_cmp(a));
        let mut best_price = 0.0;
        let mut best_score = -1.0;
        let mut i = 0;
        while i < theta.len() {
            let level = theta[i];
            while i < theta.len() && theta[i] == level {
                i += 1;
            }
            let p = level - epsilon;
            let score = p * i as f64;
            if score > best_score || (score == best_score && p < best_price) {
                best_score = score;
                best_price = p;
            }
        }
        Ok(BestResponse {
            price: best_price,
            profit_per_customer: self.profit_at(k, best_price),
            method: MethodKind::Exact,
        })
    }

    pub fn best_response(&self, k: usize, method: Method) -> Result<BestResponse, DynamicsError> {
        match method {
            Method::Grid {
                grid_points,
                price_max,
            } => self.best_response_grid(k, grid_points, price_max),
            Method::Exact { epsilon } => self.best_response_exact(k, epsilon),
        }
    }

    /// Profit profile `X_k(p)` sampled at `points` evenly spaced prices.
    pub fn profit_profile(&self, k: usize, price_max: f64, points: usize) -> Vec<(f64, f64)> {
        let step = if points > 1 {
            price_max / (points - 1) as f64
        } else {
            0.0
        };
        (0..points)
            .map(|g| {
                let p = step * g as f64;
                (p, self.profit_at(k, p))
            })
            .collect()
    }
}

pub fn best_response_grid(
    config: &MarketConfig,
    k: usize,
    grid_points: usize,
    price_max: f64,
) -> Result<BestResponse, DynamicsError> {
    PriceEngine::new(config.clone())?.best_response_grid(k, grid_points, price_max)
}

pub fn best_response_exact(config: &MarketConfig, k: usize) -> Result<BestResponse, DynamicsError> {
    best_response_exact_with(config, k, DEFAULT_EPSILON)
}

pub fn best_response_exact_with(
    config: &MarketConfig,
    k: usize,
    epsilon: f64,
) -> Result<BestResponse, DynamicsError> {
    PriceEngine::new(config.clone())?.best_response_exact(k, epsilon)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepRecord {
    pub firm: usize,
    pub prices: Vec<f64>,
    pub profits: Vec<f64>,
    pub shares: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DynamicsTrace {
    pub steps: Vec<StepRecord>,
    pub burn_in: usize,
    pub tail_mean_price: Vec<f64>,
    pub tail_mean_profit: Vec<f64>,
    pub tail_var_profit: Vec<f64>,
    pub convergence_threshold: f64,
    pub converged: bool,
}

impl DynamicsTrace {
    fn from_steps(steps: Vec<StepRecord>, burn_in: usize, m: usize, threshold: f64) -> Self {
        let tail = &steps[burn_in.min(steps.len())..];
        let n = tail.len() as f64;
        let mean = |f: &dyn Fn(&StepRecord) -> f64| tail.iter().map(f).sum::<f64>() / n;
        let tail_mean_price: Vec<f64> = (0..m).map(|k| mean(&|s| s.prices[k])).collect();
        let tail_mean_profit: Vec<f64> = (0..m).map(|k| mean(&|s| s.profits[k])).collect();
        let tail_var_profit: Vec<f64> = (0..m)
            .map(|k| {
                if tail.len() < 2 {
                    return f64::NAN;
                }
                let mu = tail_mean_profit[k];
                tail.iter()
                    .map(|s| (s.profits[k] - mu).powi(2))
                    .sum::<f64>()
                    / (n - 1.0)
            })
            .collect();
        let converged = tail_var_profit.iter().all(|&v| v < threshold);
        DynamicsTrace {
            steps,
            burn_in,
            tail_mean_price,
            tail_mean_profit,
            tail_var_profit,
            convergence_threshold: threshold,
            converged,
        }
    }

    pub fn tail(&self) -> &[StepRecord] {
        &self.steps[self.burn_in.min(self.steps.len())..]
    }

    pub fn m(&self) -> usize {
        self.tail_mean_profit.len()
    }
}

/// Round-robin best-response dynamics: at step `t` firm `t mod m` replaces its
/// price with its best response to the current prices of all others.
pub fn run_alternating(
    config: &MarketConfig,
    steps: usize,
    burn_in: usize,
    initial_price: f64,
    method: Method,
) -> Result<DynamicsTrace, DynamicsError> {
    let start = config
        .clone()
        .with_prices(&vec![initial_price; config.m()])?;
    run_alternating_from(&start, steps, burn_in, method)
}

/// Like [`run_alternating`], starting from the prices already in `config`.
pub fn run_alternating_from(
    config: &MarketConfig,
    steps: usize,
    burn_in: usize,
    method: Method,
) -> Result<DynamicsTrace, DynamicsError> {
    if burn_in >= steps {
        return Err(DynamicsError::BurnInTooLong { steps, burn_in });
    }
    let m = config.m();
    let mut engine = PriceEngine::new(config.clone())?;
    let mut records = Vec::with_capacity(steps);
    for t in 0..steps {
        let k = t % m;
        let br = engine.best_response(k, method)?;
        engine.set_price(k, br.price)?;
        let a = engine.assignment();
        records.push(StepRecord {
            firm: k,
            prices: engine.prices(),
            profits: a.profits_per_customer,
            shares: a.shares,
        });
    }
    let threshold = convergence_threshold(engine.config());
    Ok(DynamicsTrace::from_steps(records, burn_in, m, threshold))
}

/// Unbiased sample variance of each firm's profit over post-burn-in steps.
pub fn tail_profit_variance(trace: &DynamicsTrace) -> Result<Vec<f64>, DynamicsError> {
    let tail = trace.tail();
    if tail.len() < 2 {
        return Err(DynamicsError::InsufficientData(tail.len()));
    }
    Ok(trace.tail_var_profit.clone())
}
