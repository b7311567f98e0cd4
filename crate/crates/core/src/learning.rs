//! Online adaptation of investment propensities.
//!
//! Each period a state is drawn, every trader invests `chi(U)` for the signal
//! it sees, the market clears, and propensities move by the realized excess
//! return. Informed propensities additionally pay the information cost every
//! period; the chartist pays nothing and conditions on the sign of the last
//! excess return.

use std::io::Write;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{self, Allocation, MarketInstance, Signal};
use crate::rng::{self, SimRng};

/// Largest exponent fed to `exp` by the exponential response; propensities
/// are also floored at `-EXP_ARG_CAP / gain` so they stay finite.
pub const EXP_ARG_CAP: f64 = 700.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ChiKind {
    Exponential,
    RectifiedLinear,
}

/// Per-period information cost charged to informed propensities.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum CostConvention {
    /// `eps / N` per period.
    PerAgent,
    /// `eps / (2 Omega)` per period: the stationary point then satisfies
    /// exactly the Kuhn-Tucker conditions of `H_eps`.
    ObjectiveMatched,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct LearningConfig {
    pub chi: ChiKind,
    /// Gain inside the response function.
    pub gain: f64,
    pub cost_convention: CostConvention,
    pub t_max: u64,
    /// Periods discarded before averaging starts.
    pub transient: u64,
    /// Periods per averaging window.
    pub avg_window: u64,
    /// Convergence threshold on the relative sup-norm change of the windowed
    /// mean allocation; 0 runs to `t_max`.
    pub tol: f64,
    pub seed: u64,
    /// Keep every `record_stride`-th step record; 0 keeps none.
    pub record_stride: u64,
}

impl Default for LearningConfig {
    fn default() -> Self {
        LearningConfig {
            chi: ChiKind::Exponential,
            gain: 0.1,
            cost_convention: CostConvention::ObjectiveMatched,
            t_max: 2_000_000,
            transient: 400_000,
            avg_window: 400_000,
            tol: 1e-2,
            seed: 0,
            record_stride: 0,
        }
    }
}

impl LearningConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.gain > 0.0) || !self.gain.is_finite() {
            return Err(Error::InvalidParams("gain must be positive".into()));
        }
        if !(self.tol >= 0.0) {
            return Err(Error::InvalidParams("tol must be nonnegative".into()));
        }
        if self.avg_window == 0 {
            return Err(Error::InvalidParams("avg_window must be positive".into()));
        }
        if self.transient.saturating_add(self.avg_window) > self.t_max {
            return Err(Error::InvalidParams("transient + avg_window exceeds t_max".into()));
        }
        Ok(())
    }

    pub fn cost_per_step(&self, eps: f64, n_agents: usize, n_states: usize) -> f64 {
        match self.cost_convention {
            CostConvention::PerAgent => eps / n_agents as f64,
            CostConvention::ObjectiveMatched => eps / (2.0 * n_states as f64),
        }
    }

    fn floor(&self) -> f64 {
        -EXP_ARG_CAP / self.gain
    }
}

/// Investment response to a propensity: nondecreasing, vanishing at minus
/// infinity and unbounded above.
#[inline]
pub fn chi(u: f64, config: &LearningConfig) -> f64 {
    match config.chi {
        ChiKind::Exponential => (config.gain * u).min(EXP_ARG_CAP).exp(),
        ChiKind::RectifiedLinear => (config.gain * u).max(0.0),
    }
}

/// Propensity that yields investment `z > 0`.
pub fn chi_inverse(z: f64, config: &LearningConfig) -> f64 {
    match config.chi {
        ChiKind::Exponential => z.ln() / config.gain,
        ChiKind::RectifiedLinear => z / config.gain,
    }
}

/// Sign of the previous excess return; zero counts as `+`.
pub fn public_signal(prev_excess: f64) -> Signal {
    Signal::from_sign(prev_excess)
}

#[derive(Debug, Clone, PartialEq)]
pub struct PropensityState {
    pub u: Vec<[f64; 2]>,
    pub u0: [f64; 2],
    /// Public signal for the coming period.
    pub public: Signal,
}

/// What happened in one period.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct StepRecord {
    pub t: u64,
    pub omega: usize,
    pub k0: Signal,
    pub price: f64,
    pub excess: f64,
    /// Chartist investment `[minus, plus]` before the update.
    pub z0: [f64; 2],
    pub h_eps: f64,
    pub distance: f64,
}

impl PropensityState {
    /// Every propensity starts at `chi^-1(R_bar)` so the opening price level
    /// is close to `R_bar`. The first public signal is a fair coin.
    pub fn initial(inst: &MarketInstance, config: &LearningConfig, rng: &mut SimRng) -> Self {
        let u_start = chi_inverse(inst.params().mean_return, config);
        let public = if rng.random::<bool>() { Signal::Plus } else { Signal::Minus };
        PropensityState { u: vec![[u_start; 2]; inst.n_agents()], u0: [u_start; 2], public }
    }

    /// Current investments `chi(U)`. A disabled chartist invests nothing.
    pub fn allocation(&self, config: &LearningConfig, chartist_enabled: bool) -> Allocation {
        let z = self.u.iter().map(|u| [chi(u[0], config), chi(u[1], config)]).collect();
        let z0 = if chartist_enabled { [chi(self.u0[0], config), chi(self.u0[1], config)] } else { [0.0; 2] };
        Allocation { z, z0 }
    }

    /// Adds the current investments to `acc` in the flat layout of
    /// [`Allocation::to_flat`].
    fn accumulate(&self, config: &LearningConfig, chartist_enabled: bool, acc: &mut [f64]) {
        if chartist_enabled {
            acc[0] += chi(self.u0[0], config);
            acc[1] += chi(self.u0[1], config);
        }
        for (pair, u) in acc[2..].chunks_exact_mut(2).zip(&self.u) {
            pair[0] += chi(u[0], config);
            pair[1] += chi(u[1], config);
        }
    }

    /// Advances one period in state `omega` (zero-based).
    ///
    /// `h_eps` and `distance` of the returned record are left at zero; they
    /// need the full allocation and are filled in by [`run`] when recording.
    pub fn step(
        &mut self,
        inst: &MarketInstance,
        omega: usize,
        config: &LearningConfig,
        eps: f64,
        chartist_enabled: bool,
    ) -> StepRecord {
        let n = inst.n_agents() as f64;
        let k0 = self.public;
        let z0 = if chartist_enabled { [chi(self.u0[0], config), chi(self.u0[1], config)] } else { [0.0; 2] };
        let demand: f64 = (0..inst.n_agents()).map(|i| chi(self.u[i][inst.signal(i, omega).index()], config)).sum();
        let price = (demand + z0[k0.index()]) / n;
        let excess = inst.returns()[omega] - price;

        let cost = config.cost_per_step(eps, inst.n_agents(), inst.n_states());
        let floor = config.floor();
        for (i, u) in self.u.iter_mut().enumerate() {
            u[inst.signal(i, omega).index()] += excess;
            for v in u.iter_mut() {
                *v = (*v - cost).max(floor);
            }
        }
        if chartist_enabled {
            let u = &mut self.u0[k0.index()];
            *u = (*u + excess).max(floor);
        }
        self.public = public_signal(excess);

        StepRecord { t: 0, omega, k0, price, excess, z0, h_eps: 0.0, distance: 0.0 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RunSummary {
    /// Mean allocation over the last averaging window.
    pub mean_alloc: Allocation,
    /// Price-return distance of each window's mean allocation.
    pub distance_series: Vec<f64>,
    /// Chartist investment per capita of each window's mean allocation.
    pub z0_per_capita_series: Vec<f64>,
    /// `H_eps` of each window's mean allocation.
    pub h_series: Vec<f64>,
    /// Window means of `z0^-` and `z0^+`.
    pub z0_window_means: Vec<[f64; 2]>,
    pub converged: bool,
    /// Relative sup-norm change between the last two windows.
    pub last_drift: f64,
    pub steps: u64,
    pub exp_arg_cap: f64,
    pub records: Vec<StepRecord>,
}

fn relative_drift(prev: &[f64], next: &[f64]) -> f64 {
    let scale = prev.iter().fold(0.0f64, |m, x| m.max(x.abs()));
    let diff = prev.iter().zip(next).fold(0.0f64, |m, (a, b)| m.max((a - b).abs()));
    if scale > 0.0 {
        diff / scale
    } else {
        diff
    }
}

/// Iterates the dynamics with states drawn uniformly from the stream seeded
/// by `config.seed`.
///
/// After the transient, allocations are averaged over consecutive windows;
/// the run stops once two consecutive window means differ by less than
/// `tol` (relative, sup norm). Hitting `t_max` first is reported through
/// `converged == false` with the last complete window still returned.
pub fn run(inst: &MarketInstance, eps: f64, config: &LearningConfig, chartist_enabled: bool) -> Result<RunSummary> {
    config.validate()?;
    let mut rng = rng::seeded(config.seed);
    let mut state = PropensityState::initial(inst, config, &mut rng);
    let dim = 2 * inst.n_agents() + 2;
    let n = inst.n_agents() as f64;

    let mut acc = vec![0.0; dim];
    let mut in_window = 0u64;
    let mut prev_mean: Option<Vec<f64>> = None;
    let mut summary = RunSummary {
        mean_alloc: state.allocation(config, chartist_enabled),
        distance_series: Vec::new(),
        z0_per_capita_series: Vec::new(),
        h_series: Vec::new(),
        z0_window_means: Vec::new(),
        converged: false,
        last_drift: f64::INFINITY,
        steps: 0,
        exp_arg_cap: EXP_ARG_CAP,
        records: Vec::new(),
    };

    for t in 0..config.t_max {
        let omega = rng.random_range(0..inst.n_states());
        let recording = config.record_stride > 0 && t % config.record_stride == 0;
        let snapshot = if recording { Some(state.allocation(config, chartist_enabled)) } else { None };
        if t >= config.transient {
            state.accumulate(config, chartist_enabled, &mut acc);
            in_window += 1;
        }

        let mut record = state.step(inst, omega, config, eps, chartist_enabled);
        summary.steps = t + 1;
        if let Some(alloc) = snapshot {
            record.t = t;
            record.h_eps = model::hamiltonian_eps(inst, &alloc, eps)?;
            record.distance = model::distance_price_return(inst, &alloc)?;
            summary.records.push(record);
        }

        if in_window == config.avg_window {
            let mean: Vec<f64> = acc.iter().map(|a| a / in_window as f64).collect();
            let alloc = Allocation::from_flat(&mean)?;
            summary.distance_series.push(model::distance_price_return(inst, &alloc)?);
            summary.h_series.push(model::hamiltonian_eps(inst, &alloc, eps)?);
            summary.z0_per_capita_series.push(0.5 * (alloc.z0[0] + alloc.z0[1]) / n);
            summary.z0_window_means.push(alloc.z0);
            summary.mean_alloc = alloc;
            if let Some(prev) = &prev_mean {
                summary.last_drift = relative_drift(prev, &mean);
                if summary.last_drift < config.tol {
                    summary.converged = true;
                    break;
                }
            }
            prev_mean = Some(mean);
            acc.iter_mut().for_each(|a| *a = 0.0);
            in_window = 0;
        }
    }
    Ok(summary)
}

/// Writes step records as CSV.
pub fn write_step_csv<W: Write>(mut out: W, records: &[StepRecord]) -> Result<()> {
    writeln!(out, "t,omega,k0,price,excess,z0_plus,z0_minus,H_eps,distance")?;
    for r in records {
        writeln!(
            out,
            "{},{},{},{},{},{},{},{},{}",
            r.t,
            r.omega,
            r.k0.value(),
            r.price,
            r.excess,
            r.z0[1],
            r.z0[0],
            r.h_eps,
            r.distance
        )?;
    }
    Ok(())
}
