//! Market data types, disorder sampling, price clearing and the objective.
//!
//! Signals take values in `{-, +}`. Every per-signal pair in this module is
//! stored as `[minus, plus]`, see [`Signal::index`].

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(try_from = "i8", into = "i8")]
pub enum Signal {
    Minus,
    Plus,
}

impl Signal {
    pub const BOTH: [Signal; 2] = [Signal::Minus, Signal::Plus];

    /// Position in a `[minus, plus]` pair.
    #[inline]
    pub fn index(self) -> usize {
        match self {
            Signal::Minus => 0,
            Signal::Plus => 1,
        }
    }

    #[inline]
    pub fn value(self) -> i8 {
        match self {
            Signal::Minus => -1,
            Signal::Plus => 1,
        }
    }

    /// Sign of `x`; an exact zero maps to `Plus`.
    #[inline]
    pub fn from_sign(x: f64) -> Self {
        if x < 0.0 {
            Signal::Minus
        } else {
            Signal::Plus
        }
    }
}

impl From<Signal> for i8 {
    fn from(s: Signal) -> i8 {
        s.value()
    }
}

impl TryFrom<i8> for Signal {
    type Error = String;

    fn try_from(v: i8) -> std::result::Result<Self, Self::Error> {
        match v {
            -1 => Ok(Signal::Minus),
            1 => Ok(Signal::Plus),
            other => Err(format!("signal must be -1 or +1, got {other}")),
        }
    }
}

/// Structural constants of one market.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ModelParams {
    /// Number of informed traders `N`.
    #[serde(rename = "N")]
    pub n_agents: usize,
    /// Number of states of nature `Omega`.
    #[serde(rename = "Omega")]
    pub n_states: usize,
    /// Cost of information `eps` per unit invested. May be negative.
    #[serde(rename = "eps")]
    pub info_cost: f64,
    #[serde(rename = "R_bar")]
    pub mean_return: f64,
    /// Returns have variance `s^2 / N` around the mean.
    #[serde(rename = "s")]
    pub return_scale: f64,
    pub seed: u64,
}

impl ModelParams {
    pub fn new(n_agents: usize, n_states: usize, info_cost: f64, seed: u64) -> Self {
        ModelParams { n_agents, n_states, info_cost, mean_return: 1.0, return_scale: 1.0, seed }
    }

    /// Builds parameters for a density `n = N / Omega`, rounding `N`.
    pub fn with_density(density: f64, n_states: usize, info_cost: f64, seed: u64) -> Result<Self> {
        let n_agents = (density * n_states as f64).round();
        if !(n_agents >= 1.0) {
            return Err(Error::InvalidParams(format!(
                "density {density} with {n_states} states gives fewer than one agent"
            )));
        }
        let p = ModelParams::new(n_agents as usize, n_states, info_cost, seed);
        p.validate()?;
        Ok(p)
    }

    /// `n = N / Omega`.
    pub fn density(&self) -> f64 {
        self.n_agents as f64 / self.n_states as f64
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_agents < 1 {
            return Err(Error::InvalidParams("N must be at least 1".into()));
        }
        if self.n_states < 1 {
            return Err(Error::InvalidParams("Omega must be at least 1".into()));
        }
        if !(self.return_scale > 0.0) || !self.return_scale.is_finite() {
            return Err(Error::InvalidParams(format!("s must be positive, got {}", self.return_scale)));
        }
        if !(self.mean_return > 0.0) || !self.mean_return.is_finite() {
            return Err(Error::InvalidParams(format!("R_bar must be positive, got {}", self.mean_return)));
        }
        if !self.info_cost.is_finite() {
            return Err(Error::InvalidParams("eps must be finite".into()));
        }
        Ok(())
    }
}

/// One draw of the quenched disorder: returns per state and the private
/// signal table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(into = "InstanceDoc", try_from = "InstanceDoc")]
pub struct MarketInstance {
    params: ModelParams,
    returns: Vec<f64>,
    /// Row-major `N x Omega`.
    signals: Vec<Signal>,
}

#[derive(Serialize, Deserialize)]
struct InstanceDoc {
    params: ModelParams,
    returns: Vec<f64>,
    signals: Vec<Vec<Signal>>,
}

impl From<MarketInstance> for InstanceDoc {
    fn from(m: MarketInstance) -> Self {
        let signals = m.signals.chunks(m.params.n_states.max(1)).map(<[Signal]>::to_vec).collect();
        InstanceDoc { params: m.params, returns: m.returns, signals }
    }
}

impl TryFrom<InstanceDoc> for MarketInstance {
    type Error = Error;

    fn try_from(doc: InstanceDoc) -> Result<Self> {
        MarketInstance::from_parts(doc.params, doc.returns, doc.signals)
    }
}

impl MarketInstance {
    /// Draws returns `R = R_bar + s * xi / sqrt(N)` with standard normal `xi`
    /// (state by state), then the signal table agent by agent, all from the
    /// stream seeded by `params.seed`.
    pub fn sample(params: &ModelParams) -> Result<Self> {
        params.validate()?;
        let mut rng = rng::seeded(params.seed);
        let scale = params.return_scale / (params.n_agents as f64).sqrt();
        let returns = (0..params.n_states)
            .map(|_| {
                let xi: f64 = rng.sample(StandardNormal);
                params.mean_return + scale * xi
            })
            .collect();
        let signals = (0..params.n_agents * params.n_states)
            .map(|_| if rng.random::<bool>() { Signal::Plus } else { Signal::Minus })
            .collect();
        Ok(MarketInstance { params: *params, returns, signals })
    }

    /// Builds an instance from explicit tables; `signals` has one row per
    /// informed agent.
    pub fn from_parts(params: ModelParams, returns: Vec<f64>, signals: Vec<Vec<Signal>>) -> Result<Self> {
        params.validate()?;
        if returns.len() != params.n_states {
            return Err(Error::DimensionMismatch {
                what: "returns",
                expected: params.n_states,
                actual: returns.len(),
            });
        }
        if signals.len() != params.n_agents {
            return Err(Error::DimensionMismatch {
                what: "signal rows",
                expected: params.n_agents,
                actual: signals.len(),
            });
        }
        if let Some(row) = signals.iter().find(|r| r.len() != params.n_states) {
            return Err(Error::DimensionMismatch {
                what: "signal columns",
                expected: params.n_states,
                actual: row.len(),
            });
        }
        if returns.iter().any(|r| !r.is_finite()) {
            return Err(Error::InvalidParams("returns must be finite".into()));
        }
        Ok(MarketInstance { params, returns, signals: signals.concat() })
    }

    pub fn params(&self) -> &ModelParams {
        &self.params
    }

    pub fn n_agents(&self) -> usize {
        self.params.n_agents
    }

    pub fn n_states(&self) -> usize {
        self.params.n_states
    }

    pub fn returns(&self) -> &[f64] {
        &self.returns
    }

    #[inline]
    pub fn signal(&self, agent: usize, state: usize) -> Signal {
        self.signals[agent * self.params.n_states + state]
    }

    /// Signals of one agent across all states.
    pub fn agent_signals(&self, agent: usize) -> &[Signal] {
        let w = self.params.n_states;
        &self.signals[agent * w..(agent + 1) * w]
    }

    pub fn mean_return_realized(&self) -> f64 {
        self.returns.iter().sum::<f64>() / self.returns.len() as f64
    }

    /// Informed part of `N p`: `A^w = sum_i z_i^{k_i^w}`.
    pub fn informed_demand(&self, alloc: &Allocation) -> Result<Vec<f64>> {
        self.check(alloc)?;
        let mut demand = vec![0.0; self.n_states()];
        for (i, z) in alloc.z.iter().enumerate() {
            for (d, k) in demand.iter_mut().zip(self.agent_signals(i)) {
                *d += z[k.index()];
            }
        }
        Ok(demand)
    }

    fn check(&self, alloc: &Allocation) -> Result<()> {
        if alloc.z.len() != self.n_agents() {
            return Err(Error::DimensionMismatch {
                what: "allocation rows",
                expected: self.n_agents(),
                actual: alloc.z.len(),
            });
        }
        Ok(())
    }
}

/// Money invested by each informed agent per private signal and by the
/// chartist per public signal. Pairs are `[minus, plus]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Allocation {
    pub z: Vec<[f64; 2]>,
    pub z0: [f64; 2],
}

impl Allocation {
    pub fn zeros(n_agents: usize) -> Self {
        Allocation { z: vec![[0.0; 2]; n_agents], z0: [0.0; 2] }
    }

    pub fn uniform(n_agents: usize, informed: f64, chartist: f64) -> Self {
        Allocation { z: vec![[informed; 2]; n_agents], z0: [chartist; 2] }
    }

    pub fn n_agents(&self) -> usize {
        self.z.len()
    }

    /// `(z^+ - z^-) / 2`
    pub fn delta(&self, agent: usize) -> f64 {
        let [m, p] = self.z[agent];
        0.5 * (p - m)
    }

    /// `(z^+ + z^-) / 2`
    pub fn mean_investment(&self, agent: usize) -> f64 {
        let [m, p] = self.z[agent];
        0.5 * (p + m)
    }

    /// Mean of `z_i^m` over informed agents and both signals.
    pub fn mean_informed(&self) -> f64 {
        if self.z.is_empty() {
            return 0.0;
        }
        self.z.iter().map(|[m, p]| m + p).sum::<f64>() / (2 * self.z.len()) as f64
    }

    pub fn informed_total(&self) -> f64 {
        self.z.iter().map(|[m, p]| m + p).sum()
    }

    /// Flat layout `[z0-, z0+, z1-, z1+, ..., zN-, zN+]`.
    pub fn to_flat(&self) -> Vec<f64> {
        let mut v = Vec::with_capacity(2 * self.z.len() + 2);
        v.extend_from_slice(&self.z0);
        for pair in &self.z {
            v.extend_from_slice(pair);
        }
        v
    }

    pub fn from_flat(flat: &[f64]) -> Result<Self> {
        if flat.len() < 2 || !flat.len().is_multiple_of(2) {
            return Err(Error::DimensionMismatch { what: "flat allocation", expected: 2, actual: flat.len() });
        }
        let z0 = [flat[0], flat[1]];
        let z = flat[2..].chunks_exact(2).map(|c| [c[0], c[1]]).collect();
        Ok(Allocation { z, z0 })
    }

    pub fn is_feasible(&self) -> bool {
        self.to_flat().iter().all(|&x| x >= 0.0 && x.is_finite())
    }

    pub fn validate(&self) -> Result<()> {
        if self.is_feasible() {
            Ok(())
        } else {
            Err(Error::InvalidParams("allocation components must be finite and nonnegative".into()))
        }
    }

    /// Componentwise `a * self + b * other`.
    pub fn combine(&self, a: f64, other: &Allocation, b: f64) -> Allocation {
        let z = self.z.iter().zip(&other.z).map(|(x, y)| [a * x[0] + b * y[0], a * x[1] + b * y[1]]).collect();
        let z0 = [a * self.z0[0] + b * other.z0[0], a * self.z0[1] + b * other.z0[1]];
        Allocation { z, z0 }
    }
}

/// Partial derivatives of `H_eps`, laid out like [`Allocation`].
#[derive(Debug, Clone, PartialEq)]
pub struct AllocationGradient {
    pub z: Vec<[f64; 2]>,
    pub z0: [f64; 2],
}

impl AllocationGradient {
    pub fn to_flat(&self) -> Vec<f64> {
        let mut v = Vec::with_capacity(2 * self.z.len() + 2);
        v.extend_from_slice(&self.z0);
        for pair in &self.z {
            v.extend_from_slice(pair);
        }
        v
    }
}

/// Clearing prices `p^{w,k0}`, one `[minus, plus]` pair per state.
#[derive(Debug, Clone, PartialEq)]
pub struct PriceTable {
    pub p: Vec<[f64; 2]>,
}

impl PriceTable {
    pub fn get(&self, state: usize, public: Signal) -> f64 {
        self.p[state][public.index()]
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Trader {
    Chartist,
    /// Zero-based informed agent.
    Informed(usize),
}

/// `N p^{w,k0} = sum_i z_i^{k_i^w} + z_0^{k0}`.
pub fn clearing_prices(inst: &MarketInstance, alloc: &Allocation) -> Result<PriceTable> {
    let n = inst.n_agents() as f64;
    let demand = inst.informed_demand(alloc)?;
    let p = demand.iter().map(|a| [(a + alloc.z0[0]) / n, (a + alloc.z0[1]) / n]).collect();
    Ok(PriceTable { p })
}

/// Expected payoff `(1/Omega) sum_w z^{m} (R^w / p^{w,k0} - 1)` of one trader,
/// averaged over the public signal.
pub fn payoff(inst: &MarketInstance, alloc: &Allocation, trader: Trader) -> Result<f64> {
    let prices = clearing_prices(inst, alloc)?;
    if let Trader::Informed(i) = trader {
        if i >= inst.n_agents() {
            return Err(Error::DimensionMismatch { what: "trader index", expected: inst.n_agents(), actual: i });
        }
    }
    let mut total = 0.0;
    for (w, &r) in inst.returns().iter().enumerate() {
        for k0 in Signal::BOTH {
            let z = match trader {
                Trader::Chartist => alloc.z0[k0.index()],
                Trader::Informed(i) => alloc.z[i][inst.signal(i, w).index()],
            };
            if z == 0.0 {
                continue;
            }
            let p = prices.get(w, k0);
            if p <= 0.0 {
                return Err(Error::ZeroPrice { state: w, public: k0.value() });
            }
            total += 0.5 * z * (r / p - 1.0);
        }
    }
    Ok(total / inst.n_states() as f64)
}

/// `sum_w E_{k0}[(R^w - p^{w,k0})^2]`, the squared price-return distance.
pub fn squared_distance(inst: &MarketInstance, alloc: &Allocation) -> Result<f64> {
    let n = inst.n_agents() as f64;
    let demand = inst.informed_demand(alloc)?;
    Ok(inst
        .returns()
        .iter()
        .zip(&demand)
        .map(|(r, a)| {
            let lo = r - (a + alloc.z0[0]) / n;
            let hi = r - (a + alloc.z0[1]) / n;
            0.5 * (lo * lo + hi * hi)
        })
        .sum())
}

/// `H_eps = 1/2 sum_w E_{k0}[(R - p)^2] + eps/(2N) sum_{i,m} z_i^m`.
///
/// The cost term runs over informed agents only.
pub fn hamiltonian_eps(inst: &MarketInstance, alloc: &Allocation, eps: f64) -> Result<f64> {
    let n = inst.n_agents() as f64;
    Ok(0.5 * squared_distance(inst, alloc)? + eps / (2.0 * n) * alloc.informed_total())
}

pub fn hamiltonian_gradient(inst: &MarketInstance, alloc: &Allocation, eps: f64) -> Result<AllocationGradient> {
    let n = inst.n_agents() as f64;
    let demand = inst.informed_demand(alloc)?;
    // Residuals per state, k0-averaged and per k0.
    let mut mean_resid = Vec::with_capacity(demand.len());
    let mut z0 = [0.0; 2];
    for (r, a) in inst.returns().iter().zip(&demand) {
        let lo = r - (a + alloc.z0[0]) / n;
        let hi = r - (a + alloc.z0[1]) / n;
        mean_resid.push(0.5 * (lo + hi));
        z0[0] -= lo;
        z0[1] -= hi;
    }
    z0[0] /= 2.0 * n;
    z0[1] /= 2.0 * n;

    let cost = eps / (2.0 * n);
    let z = (0..inst.n_agents())
        .map(|i| {
            let mut g = [0.0; 2];
            for (k, res) in inst.agent_signals(i).iter().zip(&mean_resid) {
                g[k.index()] -= res;
            }
            [g[0] / n + cost, g[1] / n + cost]
        })
        .collect();
    Ok(AllocationGradient { z, z0 })
}

/// `|p - R| = sqrt(sum_w E_{k0}[(R^w - p^{w,k0})^2])`.
pub fn distance_price_return(inst: &MarketInstance, alloc: &Allocation) -> Result<f64> {
    Ok(squared_distance(inst, alloc)?.sqrt())
}
