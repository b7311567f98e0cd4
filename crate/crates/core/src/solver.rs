//! Competitive equilibria as constrained minimizers of `H_eps`.
//!
//! `H_eps` is a convex quadratic in the allocation. Minimization is over
//! `z >= 0`, and the result is certified by the Kuhn-Tucker residual rather
//! than by uniqueness: above the efficiency transition the minimizer set is
//! degenerate and only the objective value is unique.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::learning::RunSummary;
use crate::model::{self, Allocation, AllocationGradient, MarketInstance};
use crate::rng;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Method {
    CoordinateDescent,
    ProjectedGradient,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Init {
    /// Informed agents at `R_bar / 2` per signal, chartist idle.
    Uniform,
    /// Every free component uniform on `[0, 2 R_bar)`.
    Random { seed: u64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SolverOptions {
    pub method: Method,
    /// Force `z0^+ = z0^-`.
    pub tie_chartist: bool,
    /// When false the chartist is pinned at zero.
    pub chartist_enabled: bool,
    /// When false every informed component is pinned at zero.
    pub informed_enabled: bool,
    /// Sweeps (coordinate descent) or gradient steps (projected gradient).
    pub max_iter: usize,
    pub kt_tol: f64,
    /// Projected-gradient step; `None` uses `1/L` with `L` estimated by power
    /// iteration on the Hessian.
    pub pg_step: Option<f64>,
    /// Nesterov momentum with function-value restart.
    pub pg_accelerated: bool,
    pub init: Init,
}

impl Default for SolverOptions {
    fn default() -> Self {
        SolverOptions {
            method: Method::CoordinateDescent,
            tie_chartist: true,
            chartist_enabled: true,
            informed_enabled: true,
            max_iter: 200_000,
            kt_tol: 1e-8,
            pg_step: None,
            pg_accelerated: true,
            init: Init::Uniform,
        }
    }
}

impl SolverOptions {
    pub fn validate(&self) -> Result<()> {
        if !(self.kt_tol > 0.0) {
            return Err(Error::InvalidParams("kt_tol must be positive".into()));
        }
        if let Some(step) = self.pg_step {
            if !(step > 0.0) {
                return Err(Error::InvalidParams("pg_step must be positive".into()));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EquilibriumResult {
    pub objective: f64,
    pub kt_residual: f64,
    pub distance: f64,
    pub iterations: usize,
    pub converged: bool,
    /// Price averaged over states and public signals, to compare with `R_bar`.
    pub mean_price: f64,
    pub alloc: Allocation,
}

impl EquilibriumResult {
    pub fn z0_per_capita(&self) -> f64 {
        0.5 * (self.alloc.z0[0] + self.alloc.z0[1]) / self.alloc.n_agents() as f64
    }
}

/// Largest violation of the Kuhn-Tucker conditions over all `2N + 2`
/// components: `|g|` where `z > 0`, `max(0, -g)` where `z = 0`.
pub fn kt_residual(inst: &MarketInstance, alloc: &Allocation, eps: f64) -> Result<f64> {
    let grad = model::hamiltonian_gradient(inst, alloc, eps)?;
    Ok(masked_residual(alloc, &grad, true, true))
}

/// Residual over the enabled trader classes only.
pub fn kt_residual_with(inst: &MarketInstance, alloc: &Allocation, eps: f64, chartist: bool, informed: bool) -> Result<f64> {
    let grad = model::hamiltonian_gradient(inst, alloc, eps)?;
    Ok(masked_residual(alloc, &grad, chartist, informed))
}

fn component_residual(x: f64, g: f64) -> f64 {
    if x > 0.0 {
        g.abs()
    } else {
        (-g).max(0.0)
    }
}

fn masked_residual(alloc: &Allocation, grad: &AllocationGradient, chartist: bool, informed: bool) -> f64 {
    let mut worst: f64 = 0.0;
    if chartist {
        for k in 0..2 {
            worst = worst.max(component_residual(alloc.z0[k], grad.z0[k]));
        }
    }
    if informed {
        for (z, g) in alloc.z.iter().zip(&grad.z) {
            for k in 0..2 {
                worst = worst.max(component_residual(z[k], g[k]));
            }
        }
    }
    worst
}

fn mean_price(inst: &MarketInstance, alloc: &Allocation) -> Result<f64> {
    let prices = model::clearing_prices(inst, alloc)?;
    Ok(prices.p.iter().map(|[a, b]| 0.5 * (a + b)).sum::<f64>() / inst.n_states() as f64)
}

fn check_bounded(inst: &MarketInstance, eps: f64, opts: &SolverOptions) -> Result<()> {
    if eps >= 0.0 || !opts.informed_enabled {
        return Ok(());
    }
    for i in 0..inst.n_agents() {
        let signals = inst.agent_signals(i);
        for m in model::Signal::BOTH {
            if !signals.contains(&m) {
                return Err(Error::Unbounded { agent: i, signal: m.value() });
            }
        }
    }
    Ok(())
}

fn initial_allocation(inst: &MarketInstance, opts: &SolverOptions) -> Allocation {
    let n = inst.n_agents();
    let r_bar = inst.params().mean_return;
    let mut alloc = match opts.init {
        Init::Uniform => Allocation::uniform(n, 0.5 * r_bar, 0.0),
        Init::Random { seed } => {
            let mut rng = rng::seeded(seed);
            let z = (0..n).map(|_| [rng.random::<f64>() * 2.0 * r_bar, rng.random::<f64>() * 2.0 * r_bar]).collect();
            let z0 = [rng.random::<f64>() * 2.0 * r_bar * n as f64, rng.random::<f64>() * 2.0 * r_bar * n as f64];
            Allocation { z, z0 }
        }
    };
    if !opts.informed_enabled {
        alloc.z.iter_mut().for_each(|z| *z = [0.0; 2]);
    }
    if !opts.chartist_enabled {
        alloc.z0 = [0.0; 2];
    } else if opts.tie_chartist {
        let mean = 0.5 * (alloc.z0[0] + alloc.z0[1]);
        alloc.z0 = [mean; 2];
    }
    alloc
}

/// Minimizes `H_eps` over nonnegative allocations.
///
/// An exhausted iteration budget is not an error: the best iterate comes back
/// with `converged == false`.
pub fn solve(inst: &MarketInstance, eps: f64, opts: &SolverOptions) -> Result<EquilibriumResult> {
    opts.validate()?;
    check_bounded(inst, eps, opts)?;
    let (alloc, iterations) = match opts.method {
        Method::CoordinateDescent => {
            let mut cd = CoordinateDescent::new(inst, eps, opts.clone())?;
            let iterations = cd.run()?;
            (cd.into_allocation(), iterations)
        }
        Method::ProjectedGradient => projected_gradient(inst, eps, opts)?,
    };
    finish(inst, eps, opts, alloc, iterations)
}

fn finish(
    inst: &MarketInstance,
    eps: f64,
    opts: &SolverOptions,
    alloc: Allocation,
    iterations: usize,
) -> Result<EquilibriumResult> {
    let grad = model::hamiltonian_gradient(inst, &alloc, eps)?;
    let kt = masked_residual(&alloc, &grad, opts.chartist_enabled, opts.informed_enabled);
    Ok(EquilibriumResult {
        objective: model::hamiltonian_eps(inst, &alloc, eps)?,
        kt_residual: kt,
        distance: model::distance_price_return(inst, &alloc)?,
        iterations,
        converged: kt <= opts.kt_tol,
        mean_price: mean_price(inst, &alloc)?,
        alloc,
    })
}

/// Cyclic coordinate descent with exact minimization along each coordinate.
///
/// Along `z_i^m` the objective is a parabola with curvature `c_im / N^2`,
/// `c_im` being the number of states in which agent `i` sees signal `m`, so
/// each update is closed-form and clipped at zero. One sweep visits the
/// chartist first, then agents `0..N` with `m = -, +`.
pub struct CoordinateDescent<'a> {
    inst: &'a MarketInstance,
    eps: f64,
    opts: SolverOptions,
    alloc: Allocation,
    /// `A^w = sum_i z_i^{k_i^w}`, kept in sync with `alloc`.
    demand: Vec<f64>,
    /// States in which agent `i` sees signal `m`, indexed `[i][m]`.
    states: Vec<[Vec<u32>; 2]>,
}

impl<'a> CoordinateDescent<'a> {
    pub fn new(inst: &'a MarketInstance, eps: f64, opts: SolverOptions) -> Result<Self> {
        opts.validate()?;
        check_bounded(inst, eps, &opts)?;
        let alloc = initial_allocation(inst, &opts);
        Self::with_start(inst, eps, opts, alloc)
    }

    pub fn with_start(inst: &'a MarketInstance, eps: f64, opts: SolverOptions, alloc: Allocation) -> Result<Self> {
        alloc.validate()?;
        let demand = inst.informed_demand(&alloc)?;
        let states = (0..inst.n_agents())
            .map(|i| {
                let mut by_signal = [Vec::new(), Vec::new()];
                for (w, k) in inst.agent_signals(i).iter().enumerate() {
                    by_signal[k.index()].push(w as u32);
                }
                by_signal
            })
            .collect();
        Ok(CoordinateDescent { inst, eps, opts, alloc, demand, states })
    }

    pub fn allocation(&self) -> &Allocation {
        &self.alloc
    }

    pub fn into_allocation(self) -> Allocation {
        self.alloc
    }

    pub fn objective(&self) -> f64 {
        let n = self.inst.n_agents() as f64;
        let mut quad = 0.0;
        for (r, a) in self.inst.returns().iter().zip(&self.demand) {
            for z0 in self.alloc.z0 {
                let res = r - (a + z0) / n;
                quad += 0.5 * res * res;
            }
        }
        0.5 * quad + self.eps / (2.0 * n) * self.alloc.informed_total()
    }

    pub fn kt_residual(&self) -> Result<f64> {
        let grad = model::hamiltonian_gradient(self.inst, &self.alloc, self.eps)?;
        Ok(masked_residual(&self.alloc, &grad, self.opts.chartist_enabled, self.opts.informed_enabled))
    }

    /// One full sweep; returns the objective afterwards.
    pub fn sweep(&mut self) -> f64 {
        let inst = self.inst;
        let n = inst.n_agents() as f64;
        let returns = inst.returns();

        if self.opts.chartist_enabled {
            // Both chartist legs face the same parabola in their own k0 cells;
            // its minimizer is the mean over states of N R - A.
            let target = returns.iter().zip(&self.demand).map(|(r, a)| n * r - a).sum::<f64>() / returns.len() as f64;
            self.alloc.z0 = [target.max(0.0); 2];
        }

        if self.opts.informed_enabled {
            let z0_mean = 0.5 * (self.alloc.z0[0] + self.alloc.z0[1]);
            let half_cost = 0.5 * self.eps;
            for i in 0..inst.n_agents() {
                for m in 0..2 {
                    let states = &self.states[i][m];
                    let current = self.alloc.z[i][m];
                    let updated = if states.is_empty() {
                        // Moves no price: only the cost matters.
                        if self.eps >= 0.0 {
                            0.0
                        } else {
                            current
                        }
                    } else {
                        let resid: f64 = states
                            .iter()
                            .map(|&w| returns[w as usize] - (self.demand[w as usize] + z0_mean) / n)
                            .sum();
                        (current + n * (resid - half_cost) / states.len() as f64).max(0.0)
                    };
                    let step = updated - current;
                    if step != 0.0 {
                        for &w in states {
                            self.demand[w as usize] += step;
                        }
                        self.alloc.z[i][m] = updated;
                    }
                }
            }
        }
        self.objective()
    }

    /// Sweeps until the Kuhn-Tucker residual reaches `kt_tol` or the budget is
    /// spent. Returns the number of sweeps.
    pub fn run(&mut self) -> Result<usize> {
        for it in 1..=self.opts.max_iter {
            self.sweep();
            // Rebuild the running sums to keep round-off from accumulating.
            if it % 64 == 0 {
                self.demand = self.inst.informed_demand(&self.alloc)?;
            }
            if self.kt_residual()? <= self.opts.kt_tol {
                self.demand = self.inst.informed_demand(&self.alloc)?;
                return Ok(it);
            }
        }
        Ok(self.opts.max_iter)
    }
}

fn project(x: &mut [f64], opts: &SolverOptions) {
    for v in x.iter_mut() {
        *v = v.max(0.0);
    }
    if !opts.chartist_enabled {
        x[0] = 0.0;
        x[1] = 0.0;
    } else if opts.tie_chartist {
        let mean = 0.5 * (x[0] + x[1]);
        x[0] = mean;
        x[1] = mean;
    }
    if !opts.informed_enabled {
        x[2..].iter_mut().for_each(|v| *v = 0.0);
    }
}

fn flat_objective(inst: &MarketInstance, eps: f64, x: &[f64]) -> Result<f64> {
    model::hamiltonian_eps(inst, &Allocation::from_flat(x)?, eps)
}

fn flat_gradient(inst: &MarketInstance, eps: f64, x: &[f64]) -> Result<Vec<f64>> {
    Ok(model::hamiltonian_gradient(inst, &Allocation::from_flat(x)?, eps)?.to_flat())
}

/// Largest Hessian eigenvalue by power iteration; the Hessian is constant, so
/// `H v = grad(v) - grad(0)` at zero cost.
fn lipschitz_estimate(inst: &MarketInstance) -> Result<f64> {
    let dim = 2 * inst.n_agents() + 2;
    let g0 = flat_gradient(inst, 0.0, &vec![0.0; dim])?;
    let mut v: Vec<f64> = (0..dim).map(|j| 1.0 + (j % 7) as f64 * 0.1).collect();
    let mut lambda = 0.0;
    for _ in 0..200 {
        let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        v.iter_mut().for_each(|x| *x /= norm);
        let hv: Vec<f64> = flat_gradient(inst, 0.0, &v)?.iter().zip(&g0).map(|(a, b)| a - b).collect();
        let next = v.iter().zip(&hv).map(|(a, b)| a * b).sum::<f64>();
        v = hv;
        if (next - lambda).abs() <= 1e-12 * next.abs() {
            lambda = next;
            break;
        }
        lambda = next;
    }
    Ok(lambda)
}

/// Projected gradient with optional Nesterov momentum. Momentum is dropped
/// whenever the objective goes up.
fn projected_gradient(inst: &MarketInstance, eps: f64, opts: &SolverOptions) -> Result<(Allocation, usize)> {
    let step = match opts.pg_step {
        Some(s) => s,
        None => 1.0 / (1.05 * lipschitz_estimate(inst)?),
    };
    let mut x = initial_allocation(inst, opts).to_flat();
    let mut y = x.clone();
    let mut f_x = flat_objective(inst, eps, &x)?;
    let mut t = 1.0f64;
    for it in 1..=opts.max_iter {
        let g = flat_gradient(inst, eps, &y)?;
        let mut next: Vec<f64> = y.iter().zip(&g).map(|(a, b)| a - step * b).collect();
        project(&mut next, opts);
        let f_next = flat_objective(inst, eps, &next)?;

        if opts.pg_accelerated && f_next > f_x {
            // Restart from the last accepted point.
            t = 1.0;
            y.clone_from(&x);
            continue;
        }
        let t_next = if opts.pg_accelerated { 0.5 * (1.0 + (1.0 + 4.0 * t * t).sqrt()) } else { 1.0 };
        let beta = (t - 1.0) / t_next;
        y = next.iter().zip(&x).map(|(a, b)| a + beta * (a - b)).collect();
        project(&mut y, opts);
        x = next;
        f_x = f_next;
        t = t_next;

        if it % 16 == 0 {
            let alloc = Allocation::from_flat(&x)?;
            let grad = model::hamiltonian_gradient(inst, &alloc, eps)?;
            if masked_residual(&alloc, &grad, opts.chartist_enabled, opts.informed_enabled) <= opts.kt_tol {
                return Ok((alloc, it));
            }
        }
    }
    Ok((Allocation::from_flat(&x)?, opts.max_iter))
}

/// Agreement between the learning dynamics and the direct minimization on the
/// same instance and cost.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CrossCheck {
    pub h_solver: f64,
    pub h_dynamics: f64,
    /// `|H(dynamics) - H(solver)| / H(solver)`
    pub rel_h_gap: f64,
    pub distance_solver: f64,
    pub distance_dynamics: f64,
    pub rel_distance_gap: f64,
}

pub fn stationarity_crosscheck(
    inst: &MarketInstance,
    eps: f64,
    result: &EquilibriumResult,
    run: &RunSummary,
) -> Result<CrossCheck> {
    let h_dynamics = model::hamiltonian_eps(inst, &run.mean_alloc, eps)?;
    let distance_dynamics = model::distance_price_return(inst, &run.mean_alloc)?;
    let rel = |a: f64, b: f64| if b != 0.0 { (a - b).abs() / b.abs() } else { (a - b).abs() };
    Ok(CrossCheck {
        h_solver: result.objective,
        h_dynamics,
        rel_h_gap: rel(h_dynamics, result.objective),
        distance_solver: result.distance,
        distance_dynamics,
        rel_distance_gap: rel(distance_dynamics, result.distance),
    })
}
