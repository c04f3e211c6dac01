//! Geometry of the unit-square market and the customer-to-firm assignment.
//!
//! Customers sit on the fixed lattice `((i - 0.5) / N, (j - 0.5) / N)`.
//! Each one buys from the firm with the lowest effective cost
//! `p_k + r * dist^gamma`; exact ties go to the lowest firm id.

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum MarketError {
    #[error("customer grid side must be positive")]
    EmptyGrid,
    #[error("at least one firm is required")]
    NoFirms,
    #[error("transport rate must be positive and finite, got {0}")]
    InvalidRate(f64),
    #[error("distance exponent must be positive and finite, got {0}")]
    InvalidGamma(f64),
    #[error("price of firm {firm} must be nonnegative and finite, got {price}")]
    InvalidPrice { firm: usize, price: f64 },
    #[error("firm id {0} out of range")]
    UnknownFirm(usize),
    #[error(
        "no boundary: one firm undercuts the other everywhere (|p1 - p2| = {gap} >= r*d = {reach})"
    )]
    NoBoundary { gap: f64, reach: f64 },
    #[error("firm distance must lie in (0, 1), got {0}")]
    InvalidDistance(f64),
}

/// Position on the unit square, canonicalized into `[0, 1)^2`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Point {
    pub x: f64,
    pub y: f64,
}

fn wrap_unit(v: f64) -> f64 {
    let w = v.rem_euclid(1.0);
    // rem_euclid can round up to exactly 1.0 for tiny negative inputs
    if w >= 1.0 {
        0.0
    } else {
        w
    }
}

impl Point {
    /// Wraps both coordinates mod 1.
    pub fn new(x: f64, y: f64) -> Self {
        Point {
            x: wrap_unit(x),
            y: wrap_unit(y),
        }
    }

    pub fn translate(self, dx: f64, dy: f64) -> Self {
        Point::new(self.x + dx, self.y + dy)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Boundary {
    Periodic,
    Open,
}

impl std::fmt::Display for Boundary {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Boundary::Periodic => f.write_str("periodic"),
            Boundary::Open => f.write_str("open"),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FirmState {
    pub id: usize,
    pub position: Point,
    pub price: f64,
}

/// A full problem instance.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MarketConfig {
    pub n_side: usize,
    pub firms: Vec<FirmState>,
    pub r: f64,
    pub gamma: f64,
    pub boundary: Boundary,
}

impl MarketConfig {
    /// Builds a validated instance. Firm ids are assigned by position in
    /// `positions` and every firm starts at `initial_price`.
    pub fn new(
        n_side: usize,
        positions: &[Point],
        initial_price: f64,
        r: f64,
        gamma: f64,
        boundary: Boundary,
    ) -> Result<Self, MarketError> {
        let firms = positions
            .iter()
            .enumerate()
            .map(|(id, p)| FirmState {
                id,
                position: Point::new(p.x, p.y),
                price: initial_price,
            })
            .collect();
        let config = MarketConfig {
            n_side,
            firms,
            r,
            gamma,
            boundary,
        };
        config.validate()?;
        Ok(config)
    }

    pub fn validate(&self) -> Result<(), MarketError> {
        if self.n_side == 0 {
            return Err(MarketError::EmptyGrid);
        }
        if self.firms.is_empty() {
            return Err(MarketError::NoFirms);
        }
        if !(self.r > 0.0 && self.r.is_finite()) {
            return Err(MarketError::InvalidRate(self.r));
        }
        if !(self.gamma > 0.0 && self.gamma.is_finite()) {
            return Err(MarketError::InvalidGamma(self.gamma));
        }
        for f in &self.firms {
            check_price(f.id, f.price)?;
        }
        Ok(())
    }

    pub fn m(&self) -> usize {
        self.firms.len()
    }

    pub fn n_customers(&self) -> usize {
        self.n_side * self.n_side
    }

    /// Coordinates of customer `(i, j)` with zero-based indices.
    pub fn customer(&self, i: usize, j: usize) -> Point {
        let n = self.n_side as f64;
        Point {
            x: (i as f64 + 0.5) / n,
            y: (j as f64 + 0.5) / n,
        }
    }

    pub fn prices(&self) -> Vec<f64> {
        self.firms.iter().map(|f| f.price).collect()
    }

    pub fn set_price(&mut self, k: usize, price: f64) -> Result<(), MarketError> {
        check_price(k, price)?;
        self.firms
            .get_mut(k)
            .ok_or(MarketError::UnknownFirm(k))?
            .price = price;
        Ok(())
    }

    pub fn with_prices(mut self, prices: &[f64]) -> Result<Self, MarketError> {
        for (k, &p) in prices.iter().enumerate() {
            self.set_price(k, p)?;
        }
        Ok(self)
    }
}

fn check_price(firm: usize, price: f64) -> Result<(), MarketError> {
    if price >= 0.0 && price.is_finite() {
        Ok(())
    } else {
        Err(MarketError::InvalidPrice { firm, price })
    }
}

/// Shorter of the two paths between coordinates on the unit circle.
pub fn torus_delta(a: f64, b: f64) -> f64 {
    let d = (a - b).abs();
    if d <= 0.5 {
        d
    } else {
        1.0 - d
    }
}

fn axis_delta(a: f64, b: f64, boundary: Boundary) -> f64 {
    match boundary {
        Boundary::Periodic => torus_delta(a, b),
        Boundary::Open => (a - b).abs(),
    }
}

/// `[dx^2 + dy^2]^(gamma/2)`.
pub fn distance(p: Point, q: Point, boundary: Boundary, gamma: f64) -> f64 {
    let dx = axis_delta(p.x, q.x, boundary);
    let dy = axis_delta(p.y, q.y, boundary);
    let sq = dx * dx + dy * dy;
    if gamma == 2.0 {
        sq
    } else if gamma == 1.0 {
        sq.sqrt()
    } else {
        sq.powf(gamma / 2.0)
    }
}

pub fn effective_cost(
    customer: Point,
    firm: &FirmState,
    r: f64,
    gamma: f64,
    boundary: Boundary,
) -> f64 {
    firm.price + r * distance(customer, firm.position, boundary, gamma)
}

/// Per-firm transport cost `r * dist^gamma` to every customer, laid out
/// firm-major: `cost(k, c) = data[k * n_customers + c]`.
///
/// Customer index `c = j * N + i` where `i` runs along x.
#[derive(Debug, Clone)]
pub struct TransportCosts {
    n_customers: usize,
    data: Vec<f64>,
}

impl TransportCosts {
    pub fn new(config: &MarketConfig) -> Self {
        let n = config.n_side;
        let nc = config.n_customers();
        let mut data = Vec::with_capacity(nc * config.m());
        for firm in &config.firms {
            for j in 0..n {
                for i in 0..n {
                    let c = config.customer(i, j);
                    data.push(config.r * distance(c, firm.position, config.boundary, config.gamma));
                }
            }
        }
        TransportCosts {
            n_customers: nc,
            data,
        }
    }

    pub fn n_customers(&self) -> usize {
        self.n_customers
    }

    pub fn firm(&self, k: usize) -> &[f64] {
        &self.data[k * self.n_customers..(k + 1) * self.n_customers]
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Assignment {
    pub counts: Vec<usize>,
    pub shares: Vec<f64>,
    pub profits_per_customer: Vec<f64>,
}

impl Assignment {
    pub fn from_counts(counts: Vec<usize>, prices: &[f64], n_customers: usize) -> Self {
        let total = n_customers as f64;
        let shares: Vec<f64> = counts.iter().map(|&c| c as f64 / total).collect();
        let profits_per_customer = shares.iter().zip(prices).map(|(s, p)| p * s).collect();
        Assignment {
            counts,
            shares,
            profits_per_customer,
        }
    }
}

/// Index of the firm each customer buys from, in customer order.
pub fn customer_choices(config: &MarketConfig, costs: &TransportCosts) -> Vec<usize> {
    let nc = costs.n_customers();
    let mut best_cost = vec![f64::INFINITY; nc];
    let mut best_firm = vec![0usize; nc];
    for (k, firm) in config.firms.iter().enumerate() {
        let t = costs.firm(k);
        for c in 0..nc {
            let e = firm.price + t[c];
            // strict: earlier (lower) ids keep ties
            if e < best_cost[c] {
                best_cost[c] = e;
                best_firm[c] = k;
            }
        }
    }
    best_firm
}

pub fn assign_customers(config: &MarketConfig) -> Assignment {
    let costs = TransportCosts::new(config);
    assign_with_costs(config, &costs)
}

pub fn assign_with_costs(config: &MarketConfig, costs: &TransportCosts) -> Assignment {
    let mut counts = vec![0usize; config.m()];
    for k in customer_choices(config, costs) {
        counts[k] += 1;
    }
    Assignment::from_counts(counts, &config.prices(), costs.n_customers())
}

/// Region boundaries between two firms at `(0, 0.5)` and `(d, 0.5)` on the
/// torus with linear transport costs.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BoundaryCurves {
    pub y: Vec<f64>,
    /// Left boundary, between firm 1 and firm 2.
    pub x_left: Vec<f64>,
    /// Right boundary, across the periodic edge.
    pub x_right: Vec<f64>,
}

pub const BOUNDARY_TOLERANCE: f64 = 1e-10;
pub const DEFAULT_BOUNDARY_SAMPLES: usize = 512;

/// Root of a monotone function, found by bisection after widening `[lo, hi]`
/// until it brackets a sign change.
fn bisect_monotone(f: impl Fn(f64) -> f64, mut lo: f64, mut hi: f64, tol: f64) -> f64 {
    let mut flo = f(lo);
    let mut fhi = f(hi);
    let mut width = hi - lo;
    while flo.signum() == fhi.signum() && flo != 0.0 && fhi != 0.0 {
        width *= 2.0;
        lo -= width;
        hi += width;
        flo = f(lo);
        fhi = f(hi);
    }
    if flo == 0.0 {
        return lo;
    }
    if fhi == 0.0 {
        return hi;
    }
    while hi - lo > tol {
        let mid = 0.5 * (lo + hi);
        let fm = f(mid);
        if fm == 0.0 {
            return mid;
        }
        if fm.signum() == flo.signum() {
            lo = mid;
            flo = fm;
        } else {
            hi = mid;
        }
    }
    0.5 * (lo + hi)
}

/// Samples the two equal-cost curves for `samples` rows `y = (j + 0.5) / samples`.
///
/// Returned x values are in the unwrapped frame of firm 1 at `x = 0`; they
/// may fall outside `[0, 1)` when the cheaper firm pushes a boundary past
/// the other firm's column.
pub fn boundary_curves(
    d: f64,
    p1: f64,
    p2: f64,
    r: f64,
    samples: usize,
) -> Result<BoundaryCurves, MarketError> {
    if !(d > 0.0 && d < 1.0) {
        return Err(MarketError::InvalidDistance(d));
    }
    if !(r > 0.0 && r.is_finite()) {
        return Err(MarketError::InvalidRate(r));
    }
    check_price(0, p1)?;
    check_price(1, p2)?;
    let gap = (p1 - p2).abs();
    // near side spans d, far side spans 1 - d; the near side is the binding one
    let reach = r * d.min(1.0 - d);
    if gap >= reach {
        return Err(MarketError::NoBoundary { gap, reach });
    }
    let mut curves = BoundaryCurves {
        y: Vec::with_capacity(samples),
        x_left: Vec::with_capacity(samples),
        x_right: Vec::with_capacity(samples),
    };
    for j in 0..samples {
        let y = (j as f64 + 0.5) / samples as f64;
        let dy2 = (y - 0.5) * (y - 0.5);
        let left =
            |x: f64| r * (x * x + dy2).sqrt() + p1 - r * ((x - d) * (x - d) + dy2).sqrt() - p2;
        let right = |x: f64| {
            r * ((x - 1.0) * (x - 1.0) + dy2).sqrt() + p1
                - r * ((x - d) * (x - d) + dy2).sqrt()
                - p2
        };
        curves.y.push(y);
        curves
            .x_left
            .push(bisect_monotone(left, 0.0, d, BOUNDARY_TOLERANCE));
        curves
            .x_right
            .push(bisect_monotone(right, d, 1.0, BOUNDARY_TOLERANCE));
    }
    Ok(curves)
}
