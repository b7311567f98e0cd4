//! Disorder-averaged sweeps over the density `n = N / Omega` or the cost
//! `eps`, and the overlay of the analytic curves on them.
//!
//! Realization `r` at sweep value `v` samples its instance with seed
//! [`rng::realization_seed`]`(base_seed, v, r)`; the learning dynamics of
//! that realization use `mix64` of the same seed. Any realization can be
//! recomputed alone with [`run_realization`].

use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::learning::{self, LearningConfig};
use crate::model::{self, MarketInstance, ModelParams};
use crate::replica;
use crate::rng;
use crate::solver::{self, SolverOptions};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Swept {
    N,
    Eps,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Engine {
    Dynamics,
    Equilibrium,
    Both,
}

impl Engine {
    fn expand(self) -> &'static [Engine] {
        match self {
            Engine::Dynamics => &[Engine::Dynamics],
            Engine::Equilibrium => &[Engine::Equilibrium],
            Engine::Both => &[Engine::Dynamics, Engine::Equilibrium],
        }
    }

    pub fn tag(self) -> &'static str {
        match self {
            Engine::Dynamics => "dynamics",
            Engine::Equilibrium => "equilibrium",
            Engine::Both => "both",
        }
    }
}

/// The parameter held fixed while the other is swept.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct Fixed {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub eps: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub n: Option<f64>,
}

fn one() -> f64 {
    1.0
}

fn yes() -> bool {
    true
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepSpec {
    pub swept: Swept,
    pub values: Vec<f64>,
    pub fixed: Fixed,
    pub omega: usize,
    pub realizations: usize,
    pub engine: Engine,
    #[serde(default = "yes")]
    pub chartist: bool,
    #[serde(default)]
    pub base_seed: u64,
    #[serde(default = "one")]
    pub s: f64,
    #[serde(default = "one")]
    pub r_bar: f64,
    #[serde(default)]
    pub learning: LearningConfig,
    #[serde(default)]
    pub solver: SolverOptions,
}

impl SweepSpec {
    pub fn validate(&self) -> Result<()> {
        if self.values.is_empty() {
            return Err(Error::InvalidParams("sweep needs at least one value".into()));
        }
        if self.realizations < 2 {
            return Err(Error::InvalidParams("standard errors need at least 2 realizations".into()));
        }
        if self.omega < 1 {
            return Err(Error::InvalidParams("omega must be at least 1".into()));
        }
        match self.swept {
            Swept::N if self.fixed.eps.is_none() => {
                return Err(Error::InvalidParams("sweeping n needs fixed.eps".into()))
            }
            Swept::Eps if self.fixed.n.is_none() => {
                return Err(Error::InvalidParams("sweeping eps needs fixed.n".into()))
            }
            _ => {}
        }
        for &v in &self.values {
            self.params_for(v, 0)?;
        }
        if matches!(self.engine, Engine::Dynamics | Engine::Both) {
            self.learning.validate()?;
        }
        self.solver.validate()
    }

    /// `(n, eps)` at one sweep value.
    pub fn point(&self, value: f64) -> (f64, f64) {
        match self.swept {
            Swept::N => (value, self.fixed.eps.unwrap_or(0.0)),
            Swept::Eps => (self.fixed.n.unwrap_or(0.0), value),
        }
    }

    pub fn params_for(&self, value: f64, realization: u64) -> Result<ModelParams> {
        let (n, eps) = self.point(value);
        let seed = rng::realization_seed(self.base_seed, value, realization);
        let mut params = ModelParams::with_density(n, self.omega, eps, seed)?;
        params.return_scale = self.s;
        params.mean_return = self.r_bar;
        params.validate()?;
        Ok(params)
    }
}

/// Per-realization outputs.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Observation {
    pub distance: f64,
    pub z0_percap: f64,
    /// Mean of `z_i^m` over informed agents and signals.
    pub z_fund: f64,
    pub h_eps: f64,
    pub kt_residual: f64,
    pub converged: bool,
}

/// Mean and standard error over realizations.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct Stat {
    pub mean: f64,
    pub se: f64,
}

impl Stat {
    pub fn of(xs: &[f64]) -> Stat {
        let n = xs.len();
        if n == 0 {
            return Stat { mean: f64::NAN, se: f64::NAN };
        }
        let mean = xs.iter().sum::<f64>() / n as f64;
        if n < 2 {
            return Stat { mean, se: f64::NAN };
        }
        let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
        Stat { mean, se: (var / n as f64).sqrt() }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepRow {
    pub value: f64,
    pub engine: Engine,
    pub distance: Stat,
    pub z0_percap: Stat,
    pub z_fund: Stat,
    pub h_eps: Stat,
    pub kt_max: f64,
    pub unconverged: usize,
    /// One message per failed realization.
    pub failures: Vec<String>,
    pub replica_distance: Option<f64>,
    pub replica_z0pc: Option<f64>,
    pub observations: Vec<Observation>,
}

/// Runs one realization of one engine at one sweep value.
pub fn run_realization(spec: &SweepSpec, value: f64, realization: u64, engine: Engine) -> Result<Observation> {
    let params = spec.params_for(value, realization)?;
    let inst = MarketInstance::sample(&params)?;
    let eps = params.info_cost;
    let n = params.n_agents as f64;
    match engine {
        Engine::Equilibrium => {
            let opts = SolverOptions { chartist_enabled: spec.chartist, ..spec.solver.clone() };
            let res = solver::solve(&inst, eps, &opts)?;
            Ok(Observation {
                distance: res.distance,
                z0_percap: res.z0_per_capita(),
                z_fund: res.alloc.mean_informed(),
                h_eps: res.objective,
                kt_residual: res.kt_residual,
                converged: res.converged,
            })
        }
        Engine::Dynamics => {
            let config = LearningConfig { seed: rng::mix64(params.seed), ..spec.learning.clone() };
            let summary = learning::run(&inst, eps, &config, spec.chartist)?;
            let alloc = &summary.mean_alloc;
            Ok(Observation {
                distance: model::distance_price_return(&inst, alloc)?,
                z0_percap: 0.5 * (alloc.z0[0] + alloc.z0[1]) / n,
                z_fund: alloc.mean_informed(),
                h_eps: model::hamiltonian_eps(&inst, alloc, eps)?,
                kt_residual: solver::kt_residual_with(&inst, alloc, eps, spec.chartist, true)?,
                converged: summary.converged,
            })
        }
        Engine::Both => Err(Error::InvalidParams("run_realization takes a single engine".into())),
    }
}

/// Runs every realization of every value and aggregates. Rows come out in
/// value order, one per engine.
pub fn sweep(spec: &SweepSpec, calibration: Option<&Calibration>) -> Result<Vec<SweepRow>> {
    spec.validate()?;
    let mut rows = Vec::new();
    for &value in &spec.values {
        for &engine in spec.engine.expand() {
            let mut observations = Vec::with_capacity(spec.realizations);
            let mut failures = Vec::new();
            for r in 0..spec.realizations as u64 {
                match run_realization(spec, value, r, engine) {
                    Ok(obs) => observations.push(obs),
                    Err(e) => failures.push(format!("realization {r}: {e}")),
                }
            }
            let column = |f: fn(&Observation) -> f64| observations.iter().map(f).collect::<Vec<_>>();
            let overlay = calibration.and_then(|c| c.overlay(spec, value));
            rows.push(SweepRow {
                value,
                engine,
                distance: Stat::of(&column(|o| o.distance)),
                z0_percap: Stat::of(&column(|o| o.z0_percap)),
                z_fund: Stat::of(&column(|o| o.z_fund)),
                h_eps: Stat::of(&column(|o| o.h_eps)),
                kt_max: observations.iter().map(|o| o.kt_residual).fold(0.0, f64::max),
                unconverged: observations.iter().filter(|o| !o.converged).count(),
                failures,
                replica_distance: overlay.map(|o| o.0),
                replica_z0pc: overlay.map(|o| o.1),
                observations,
            });
        }
    }
    Ok(rows)
}

fn opt(x: Option<f64>) -> String {
    x.map(|v| v.to_string()).unwrap_or_default()
}

pub fn write_sweep_csv<W: Write>(mut out: W, rows: &[SweepRow]) -> Result<()> {
    writeln!(
        out,
        "value,engine,distance_mean,distance_se,z0pc_mean,z0pc_se,zfund_mean,zfund_se,Heps_mean,Heps_se,kt_max,replica_distance,replica_z0pc"
    )?;
    for r in rows {
        writeln!(
            out,
            "{},{},{},{},{},{},{},{},{},{},{},{},{}",
            r.value,
            r.engine.tag(),
            r.distance.mean,
            r.distance.se,
            r.z0_percap.mean,
            r.z0_percap.se,
            r.z_fund.mean,
            r.z_fund.se,
            r.h_eps.mean,
            r.h_eps.se,
            r.kt_max,
            opt(r.replica_distance),
            opt(r.replica_z0pc)
        )?;
    }
    Ok(())
}

/// Candidate identification of the replica load with the simulated density.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum AlphaMap {
    /// `alpha = n`
    Density,
    /// `alpha = 1 / n`
    InverseDensity,
}

impl AlphaMap {
    pub const CANDIDATES: [AlphaMap; 2] = [AlphaMap::Density, AlphaMap::InverseDensity];

    pub fn alpha(self, n: f64) -> f64 {
        match self {
            AlphaMap::Density => n,
            AlphaMap::InverseDensity => 1.0 / n,
        }
    }

    pub fn label(self) -> &'static str {
        match self {
            AlphaMap::Density => "alpha=n",
            AlphaMap::InverseDensity => "alpha=1/n",
        }
    }
}

/// Unscaled analytic observables at density `n`: the price-return distance
/// `sqrt(H_mean / n)` and the per-capita chartist investment.
pub fn replica_observables(map: AlphaMap, n: f64, eps: f64, s: f64, r_bar: f64) -> Result<(f64, f64)> {
    let sol = replica::solve_at_load(map.alpha(n), eps, s, r_bar)?;
    Ok(((sol.h_mean / n).sqrt(), sol.z0_percap))
}

/// A frozen choice of map and scale constants used for overlays.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Calibration {
    pub map: AlphaMap,
    pub distance_scale: f64,
    pub z0_scale: f64,
}

impl Calibration {
    /// Scaled `(distance, z0_percap)` at one sweep value, if the branch
    /// reaches it.
    pub fn overlay(&self, spec: &SweepSpec, value: f64) -> Option<(f64, f64)> {
        let (n, eps) = spec.point(value);
        let (d, z) = replica_observables(self.map, n, eps, spec.s, spec.r_bar).ok()?;
        Some((self.distance_scale * d, self.z0_scale * z))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CandidateFit {
    pub map: AlphaMap,
    pub distance_scale: f64,
    pub z0_scale: f64,
    /// Summed squared deviation of both scaled observables from the sweep;
    /// infinite when the branch misses a grid point.
    pub ssd: f64,
    /// Whether every adjacent step of the scaled distance curve moves in the
    /// same direction as the simulated one.
    pub monotone_consistent: bool,
    /// Unscaled `(distance, z0_percap)` per grid point.
    pub replica: Vec<Option<(f64, f64)>>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CalibrationReport {
    pub n_grid: Vec<f64>,
    pub eps: f64,
    pub insufficient_data: bool,
    pub candidates: Vec<CandidateFit>,
    pub selected: Option<Calibration>,
    pub rows: Vec<SweepRow>,
}

/// Least-squares scale `c` minimizing `sum (y - c x)^2`.
fn fit_scale(x: &[f64], y: &[f64]) -> f64 {
    let xx: f64 = x.iter().map(|v| v * v).sum();
    if xx == 0.0 {
        return 1.0;
    }
    x.iter().zip(y).map(|(a, b)| a * b).sum::<f64>() / xx
}

fn fit_candidate(map: AlphaMap, n_grid: &[f64], spec: &SweepSpec, rows: &[SweepRow]) -> CandidateFit {
    let eps = spec.fixed.eps.unwrap_or(0.0);
    let replica: Vec<Option<(f64, f64)>> =
        n_grid.iter().map(|&n| replica_observables(map, n, eps, spec.s, spec.r_bar).ok()).collect();
    if replica.iter().any(Option::is_none) {
        return CandidateFit {
            map,
            distance_scale: f64::NAN,
            z0_scale: f64::NAN,
            ssd: f64::INFINITY,
            monotone_consistent: false,
            replica,
        };
    }
    let rep_d: Vec<f64> = replica.iter().map(|p| p.unwrap().0).collect();
    let rep_z: Vec<f64> = replica.iter().map(|p| p.unwrap().1).collect();
    let sim_d: Vec<f64> = rows.iter().map(|r| r.distance.mean).collect();
    let sim_z: Vec<f64> = rows.iter().map(|r| r.z0_percap.mean).collect();
    let distance_scale = fit_scale(&rep_d, &sim_d);
    let z0_scale = fit_scale(&rep_z, &sim_z);
    let ssd = rep_d.iter().zip(&sim_d).map(|(r, s)| (s - distance_scale * r).powi(2)).sum::<f64>()
        + rep_z.iter().zip(&sim_z).map(|(r, s)| (s - z0_scale * r).powi(2)).sum::<f64>();
    let monotone_consistent = rep_d
        .windows(2)
        .zip(sim_d.windows(2))
        .all(|(r, s)| ((r[1] - r[0]) * distance_scale).signum() == (s[1] - s[0]).signum());
    CandidateFit { map, distance_scale, z0_scale, ssd, monotone_consistent, replica }
}

/// Runs the equilibrium sweep over `n_grid` and fits both candidate maps to
/// it, each with one scale constant for the distance and one for `z0`. The
/// candidate with the smaller summed squared deviation is selected.
pub fn calibrate_alpha_map(
    omega: usize,
    eps: f64,
    n_grid: &[f64],
    realizations: usize,
    base_seed: u64,
) -> Result<CalibrationReport> {
    if !(eps > 0.0) {
        return Err(Error::InvalidParams("calibration needs eps > 0".into()));
    }
    let spec = SweepSpec {
        swept: Swept::N,
        values: n_grid.to_vec(),
        fixed: Fixed { eps: Some(eps), n: None },
        omega,
        realizations,
        engine: Engine::Equilibrium,
        chartist: true,
        base_seed,
        s: 1.0,
        r_bar: 1.0,
        learning: LearningConfig::default(),
        solver: SolverOptions::default(),
    };
    calibrate_with(&spec)
}

/// Calibration against an arbitrary `n` sweep with the equilibrium engine.
pub fn calibrate_with(spec: &SweepSpec) -> Result<CalibrationReport> {
    let eps = spec.fixed.eps.unwrap_or(0.0);
    let n_grid = spec.values.clone();
    if n_grid.len() < 2 {
        return Ok(CalibrationReport {
            n_grid,
            eps,
            insufficient_data: true,
            candidates: Vec::new(),
            selected: None,
            rows: Vec::new(),
        });
    }
    if spec.swept != Swept::N || spec.engine != Engine::Equilibrium {
        return Err(Error::InvalidParams("calibration sweeps n with the equilibrium engine".into()));
    }
    let rows = sweep(spec, None)?;
    let candidates: Vec<CandidateFit> =
        AlphaMap::CANDIDATES.iter().map(|&map| fit_candidate(map, &n_grid, spec, &rows)).collect();
    let selected = candidates
        .iter()
        .filter(|c| c.ssd.is_finite())
        .min_by(|a, b| a.ssd.total_cmp(&b.ssd))
        .map(|c| Calibration { map: c.map, distance_scale: c.distance_scale, z0_scale: c.z0_scale });
    Ok(CalibrationReport { n_grid, eps, insufficient_data: false, candidates, selected, rows })
}
