//! Replica-symmetric solution for large `N` and `Omega`.
//!
//! Everything is expressed through three truncated Gaussian moments of the
//! threshold `tau = eps / sqrt(q_hat0)`:
//!
//! ```text
//! psi_r(tau)   = sqrt(2/pi) exp(-tau^2/2) - tau erfc(tau/sqrt 2)
//! psi_q(tau)   = (1 + tau^2) erfc(tau/sqrt 2) - sqrt(2/pi) tau exp(-tau^2/2)
//! psi_phi(tau) = erfc(tau/sqrt 2)
//! ```
//!
//! which are `2 E[(t - tau)^k; t > tau]` for a standard normal `t` with
//! `k = 1, 2` and `2 E[t (t - tau); t > tau]` respectively. The optimal
//! imbalance `Delta*(t)` is a soft threshold of the Gaussian field, so
//! `<|Delta*|> = sqrt(q_hat0)/w psi_r`, `<Delta*^2> = q_hat0/w^2 psi_q` and
//! `<t Delta*> = sqrt(q_hat0)/w psi_phi`.
//!
//! Two parametrizations are provided: fixed cost `eps` with the load `alpha`
//! read off along `tau`, and fixed `alpha` with `eps` read off along `tau`.
//! `tau = 0` is a singular point of both and is never evaluated.

use std::f64::consts::{FRAC_1_SQRT_2, PI};

use serde::{Deserialize, Serialize};
use statrs::function::erf::erfc;

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Psi {
    pub r: f64,
    pub q: f64,
    pub phi: f64,
}

pub fn psi(tau: f64) -> Psi {
    let gauss = (2.0 / PI).sqrt() * (-0.5 * tau * tau).exp();
    let tail = erfc(tau * FRAC_1_SQRT_2);
    Psi { r: gauss - tau * tail, q: (1.0 + tau * tau) * tail - tau * gauss, phi: tail }
}

pub fn psi_r(tau: f64) -> f64 {
    psi(tau).r
}

pub fn psi_q(tau: f64) -> f64 {
    psi(tau).q
}

pub fn psi_phi(tau: f64) -> f64 {
    erfc(tau * FRAC_1_SQRT_2)
}

/// Critical load reached as `eps -> 0`: `psi_phi(0) = 1`.
pub fn critical_load_zero_cost() -> f64 {
    psi_phi(0.0)
}

/// One point of an analytic branch.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ReplicaSolution {
    pub tau: f64,
    pub alpha: f64,
    pub eps: f64,
    /// Susceptibility; diverges at the efficiency transition.
    pub phi: f64,
    pub q0: f64,
    pub q_hat0: f64,
    pub w: f64,
    /// Chartist investment per capita, floored at zero.
    pub z0_percap: f64,
    /// `(q0 + s^2) / (1 + phi)^2`
    pub h_mean: f64,
    /// True when the balance equation for `z0` asked for a negative value.
    pub clamped: bool,
}

impl ReplicaSolution {
    /// `<|Delta*|>`, the per-capita informed investment at the optimum.
    pub fn mean_abs_imbalance(&self) -> f64 {
        self.q_hat0.sqrt() / self.w * psi_r(self.tau)
    }
}

fn domain(tau: f64, reason: &'static str) -> Error {
    Error::ReplicaDomain { tau, reason }
}

/// Physical root of `c (1 - r) phi^2 + c phi - s^2 psi_phi = 0` with
/// `c = eps^2 / tau^2` and `r = psi_q / psi_phi`, in a form that stays
/// regular as `r -> 1`.
pub fn phi_plus(tau: f64, eps: f64, s: f64) -> Result<f64> {
    if tau == 0.0 || eps == 0.0 || !tau.is_finite() || !eps.is_finite() {
        return Err(domain(tau, "tau and eps must be finite and nonzero"));
    }
    if tau.signum() != eps.signum() {
        return Err(domain(tau, "tau and eps must share their sign"));
    }
    let p = psi(tau);
    if p.phi <= 0.0 {
        return Err(domain(tau, "psi_phi underflows"));
    }
    let inv_c = (tau / eps).powi(2);
    let disc = 1.0 + 4.0 * p.phi * s * s * inv_c * (1.0 - p.q / p.phi);
    if disc < 0.0 {
        return Err(domain(tau, "no real susceptibility"));
    }
    Ok(2.0 * s * s * p.phi * inv_c / (1.0 + disc.sqrt()))
}

#[allow(clippy::too_many_arguments)]
fn finish_point(
    tau: f64,
    alpha: f64,
    eps: f64,
    phi: f64,
    q_hat0: f64,
    q0: f64,
    s: f64,
    r_bar: f64,
) -> ReplicaSolution {
    let w = alpha / (1.0 + phi);
    let z0 = r_bar - q_hat0.sqrt() / w * psi_r(tau);
    ReplicaSolution {
        tau,
        alpha,
        eps,
        phi,
        q0,
        q_hat0,
        w,
        z0_percap: z0.max(0.0),
        h_mean: (q0 + s * s) / (1.0 + phi).powi(2),
        clamped: z0 < 0.0,
    }
}

/// Branch point at fixed cost `eps` and threshold `tau`.
pub fn fixed_eps_point(eps: f64, s: f64, r_bar: f64, tau: f64) -> Result<ReplicaSolution> {
    let phi = phi_plus(tau, eps, s)?;
    if !(phi > 0.0) {
        return Err(domain(tau, "vanishing susceptibility"));
    }
    let p = psi(tau);
    let q_hat0 = (eps / tau).powi(2);
    let alpha = (1.0 + phi) / phi * p.phi;
    let q0 = q_hat0 * p.q / (p.phi * p.phi) * phi * phi;
    Ok(finish_point(tau, alpha, eps, phi, q_hat0, q0, s, r_bar))
}

/// Fixed-cost branch over a grid of thresholds sharing the sign of `eps`.
pub fn solve_fixed_eps(eps: f64, s: f64, r_bar: f64, taus: &[f64]) -> Vec<Result<ReplicaSolution>> {
    taus.iter().map(|&tau| fixed_eps_point(eps, s, r_bar, tau)).collect()
}

/// Branch point at fixed load `alpha` and threshold `tau`; the cost `eps`
/// comes out with the sign of `tau`.
pub fn fixed_alpha_point(alpha: f64, s: f64, r_bar: f64, tau: f64) -> Result<ReplicaSolution> {
    if tau == 0.0 || !tau.is_finite() {
        return Err(domain(tau, "tau must be finite and nonzero"));
    }
    if !(alpha > 0.0) {
        return Err(domain(tau, "alpha must be positive"));
    }
    let p = psi(tau);
    if alpha <= p.phi {
        return Err(domain(tau, "alpha at or below psi_phi: susceptibility pole"));
    }
    if alpha <= p.q {
        return Err(domain(tau, "alpha at or below psi_q: no real cost"));
    }
    let phi = p.phi / (alpha - p.phi);
    // Past psi_q > psi_phi the susceptibility quadratic has two positive
    // roots; only the smaller one is the stable branch.
    let ratio = p.q / p.phi;
    if ratio > 1.0 && phi > 0.5 / (ratio - 1.0) {
        return Err(domain(tau, "point lies on the unstable susceptibility root"));
    }
    let q_hat0 = alpha * s * s / (1.0 + phi).powi(2) / (1.0 - p.q / alpha);
    let eps = tau * q_hat0.sqrt();
    let q0 = q_hat0 * (1.0 + phi).powi(2) / (alpha * alpha) * p.q;
    Ok(finish_point(tau, alpha, eps, phi, q_hat0, q0, s, r_bar))
}

pub fn solve_fixed_alpha(alpha: f64, s: f64, r_bar: f64, taus: &[f64]) -> Vec<Result<ReplicaSolution>> {
    taus.iter().map(|&tau| fixed_alpha_point(alpha, s, r_bar, tau)).collect()
}

/// Saddle-point residuals of a branch point, each scaled by
/// `max(1, |lhs|, |rhs|)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SaddleResiduals {
    pub w: f64,
    pub q_hat: f64,
    /// `None` for clamped points, where the balance equation is not imposed.
    pub balance: Option<f64>,
    pub q: f64,
    pub chi: f64,
    /// `tau - eps / sqrt(q_hat0)`
    pub tau: f64,
    /// The conjugate of the price-level constraint vanishes identically.
    pub r_hat: f64,
}

impl SaddleResiduals {
    pub fn max(&self) -> f64 {
        [self.w, self.q_hat, self.balance.unwrap_or(0.0), self.q, self.chi, self.tau, self.r_hat]
            .into_iter()
            .fold(0.0, f64::max)
    }
}

fn scaled(lhs: f64, rhs: f64) -> f64 {
    (lhs - rhs).abs() / 1f64.max(lhs.abs()).max(rhs.abs())
}

/// Substitutes a branch point back into the saddle-point equations.
pub fn saddle_residuals(sol: &ReplicaSolution, s: f64, r_bar: f64) -> SaddleResiduals {
    let p = psi(sol.tau);
    let root = sol.q_hat0.sqrt();
    let mean_abs = root / sol.w * p.r;
    let second = sol.q_hat0 / (sol.w * sol.w) * p.q;
    let cross = root / sol.w * p.phi;
    SaddleResiduals {
        w: scaled(sol.w, sol.alpha / (1.0 + sol.phi)),
        q_hat: scaled(sol.q_hat0, sol.alpha * (s * s + sol.q0) / (1.0 + sol.phi).powi(2)),
        balance: (!sol.clamped).then(|| scaled(r_bar, sol.z0_percap + mean_abs)),
        q: scaled(sol.q0, second),
        chi: scaled(sol.phi, cross / root),
        tau: scaled(sol.tau, sol.eps / root),
        r_hat: 0.0,
    }
}

/// Solution at a given load and cost, found by bracketing `alpha(tau)` on the
/// fixed-cost branch over a log-spaced `|tau|` grid and bisecting.
pub fn solve_at_load(alpha: f64, eps: f64, s: f64, r_bar: f64) -> Result<ReplicaSolution> {
    if eps == 0.0 {
        return Err(domain(0.0, "eps = 0 is only reachable as a limit"));
    }
    let sign = eps.signum();
    let gap = |mag: f64| fixed_eps_point(eps, s, r_bar, sign * mag).map(|p| p.alpha - alpha).ok();

    const POINTS: usize = 600;
    let (lo, hi) = (1e-6f64.ln(), 12f64.ln());
    let grid: Vec<f64> = (0..POINTS).map(|j| (lo + (hi - lo) * j as f64 / (POINTS - 1) as f64).exp()).collect();
    for pair in grid.windows(2) {
        let (Some(ga), Some(gb)) = (gap(pair[0]), gap(pair[1])) else { continue };
        if ga == 0.0 {
            return fixed_eps_point(eps, s, r_bar, sign * pair[0]);
        }
        if ga.signum() == gb.signum() {
            continue;
        }
        let (mut a, mut b, mut fa) = (pair[0], pair[1], ga);
        for _ in 0..200 {
            let mid = 0.5 * (a + b);
            let Some(fm) = gap(mid) else { break };
            if fm.signum() == fa.signum() {
                a = mid;
                fa = fm;
            } else {
                b = mid;
            }
            if b - a <= 1e-15 * b {
                break;
            }
        }
        return fixed_eps_point(eps, s, r_bar, sign * 0.5 * (a + b));
    }
    Err(domain(f64::NAN, "load not reached on the fixed-cost branch"))
}

/// Writes a branch as CSV; failed points are skipped.
pub fn write_curve_csv<W: std::io::Write>(mut out: W, points: &[ReplicaSolution]) -> Result<()> {
    writeln!(out, "tau,alpha,eps,phi,q0,w,z0_percap,H_mean,clamped")?;
    for p in points {
        writeln!(
            out,
            "{},{},{},{},{},{},{},{},{}",
            p.tau, p.alpha, p.eps, p.phi, p.q0, p.w, p.z0_percap, p.h_mean, p.clamped
        )?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn psi_at_zero() {
        let p = psi(0.0);
        assert!((p.phi - 1.0).abs() < 1e-15);
        assert!((p.q - 1.0).abs() < 1e-15);
        assert!((p.r - (2.0 / PI).sqrt()).abs() < 1e-15);
        assert!((p.r - 0.797885).abs() < 1e-6);
    }

    #[test]
    fn psi_tails() {
        let far = psi(40.0);
        assert!(far.r.abs() < 1e-12 && far.q.abs() < 1e-12 && far.phi < 1e-12);
        assert!((psi_phi(-40.0) - 2.0).abs() < 1e-15);
        assert_eq!(critical_load_zero_cost(), 1.0);
    }

    #[test]
    fn phi_plus_domain() {
        assert!(phi_plus(1.0, -0.1, 1.0).is_err());
        assert!(phi_plus(0.0, 0.1, 1.0).is_err());
        assert!(phi_plus(1.0, 0.0, 1.0).is_err());
        assert!(phi_plus(-0.1, -0.1, 1.0).is_ok());
        assert!(phi_plus(-0.5, -0.1, 1.0).is_err());
    }

    #[test]
    fn phi_plus_vanishes_without_disorder() {
        assert!(phi_plus(1.0, 0.1, 1e-8).unwrap() < 1e-12);
    }

    #[test]
    fn stable_root_matches_printed_quadratic() {
        for &(tau, eps) in &[(1.0, 0.1), (0.3, 0.05), (2.0, 0.4), (-0.1, -0.1)] {
            let p = psi(tau);
            let c = (eps / tau) * (eps / tau);
            let r = p.q / p.phi;
            let phi = phi_plus(tau, eps, 1.0).unwrap();
            let residual = c * (1.0 - r) * phi * phi + c * phi - p.phi;
            assert!(residual.abs() < 1e-12, "{tau}: {residual}");
        }
    }

    #[test]
    fn fixed_alpha_pole_is_flagged() {
        let tau = 0.7;
        let alpha = psi_phi(tau);
        assert!(matches!(fixed_alpha_point(alpha, 1.0, 1.0, tau), Err(Error::ReplicaDomain { .. })));
        assert!(fixed_alpha_point(2.0, 1.0, 1.0, 0.0).is_err());
    }

    #[test]
    fn load_solver_hits_target() {
        let sol = solve_at_load(0.5, 0.1, 1.0, 1.0).unwrap();
        assert!((sol.alpha - 0.5).abs() < 1e-10);
        assert!(saddle_residuals(&sol, 1.0, 1.0).max() < 1e-10);
        assert!(solve_at_load(0.5, 0.0, 1.0, 1.0).is_err());
    }

    #[test]
    fn curve_csv_layout() {
        let p = fixed_eps_point(0.1, 1.0, 1.0, 1.0).unwrap();
        let mut buf = Vec::new();
        write_curve_csv(&mut buf, &[p]).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let mut lines = text.lines();
        assert_eq!(lines.next(), Some("tau,alpha,eps,phi,q0,w,z0_percap,H_mean,clamped"));
        assert_eq!(lines.next().unwrap().split(',').count(), 9);
    }
}
