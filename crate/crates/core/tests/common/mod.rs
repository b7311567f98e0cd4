//! Oracles shared by the integration tests and the acceptance suite. None of
//! them goes through the closed forms they check.

#![allow(dead_code)]

use infomarket_core::model::{self, Allocation, MarketInstance};
use quadrature::double_exponential;

/// Central differences of `hamiltonian_eps` in the flat layout.
pub fn fd_gradient(inst: &MarketInstance, alloc: &Allocation, eps: f64) -> Vec<f64> {
    let base = alloc.to_flat();
    (0..base.len())
        .map(|j| {
            let h = 1e-6 * base[j].abs().max(1.0);
            let mut up = base.clone();
            let mut down = base.clone();
            up[j] += h;
            down[j] -= h;
            let f = |x: &[f64]| model::hamiltonian_eps(inst, &Allocation::from_flat(x).unwrap(), eps).unwrap();
            (f(&up) - f(&down)) / (2.0 * h)
        })
        .collect()
}

/// Largest componentwise gap, relative to the gradient's sup norm.
pub fn gradient_error(inst: &MarketInstance, alloc: &Allocation, eps: f64) -> f64 {
    let exact = model::hamiltonian_gradient(inst, alloc, eps).unwrap().to_flat();
    let fd = fd_gradient(inst, alloc, eps);
    let scale = exact.iter().fold(1e-3f64, |m, g| m.max(g.abs()));
    exact.iter().zip(&fd).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max) / scale
}

fn normal_density(t: f64) -> f64 {
    (-0.5 * t * t).exp() / (2.0 * std::f64::consts::PI).sqrt()
}

/// `2 * int_tau^inf phi(t) f(t) dt` by double-exponential quadrature; the
/// integrand is negligible beyond `max(tau, 0) + 40`.
fn twice_tail(tau: f64, f: impl Fn(f64) -> f64) -> f64 {
    let upper = tau.max(0.0) + 40.0;
    2.0 * double_exponential::integrate(|t| normal_density(t) * f(t), tau, upper, 1e-14).integral
}

/// `(psi_r, psi_q, psi_phi)` by quadrature.
pub fn psi_quadrature(tau: f64) -> (f64, f64, f64) {
    (
        twice_tail(tau, |t| t - tau),
        twice_tail(tau, |t| (t - tau) * (t - tau)),
        twice_tail(tau, |t| t * (t - tau)),
    )
}

/// Saddle point at fixed `(alpha, eps)` obtained by root finding on
/// `q_hat0`, with the susceptibility solved by bisection at each trial.
#[derive(Debug, Clone, Copy)]
pub struct SaddleOracle {
    pub tau: f64,
    pub q_hat0: f64,
    pub phi: f64,
    pub w: f64,
    pub q0: f64,
    pub z0: f64,
    pub h_mean: f64,
}

fn bisect(mut lo: f64, mut hi: f64, f: impl Fn(f64) -> f64) -> f64 {
    let mut flo = f(lo);
    for _ in 0..300 {
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

/// Susceptibility from `phi = psi_phi (1 + phi) / alpha`; `None` past the pole.
fn oracle_phi(alpha: f64, psi_phi: f64) -> Option<f64> {
    let g = |phi: f64| phi * alpha - psi_phi * (1.0 + phi);
    if g(1e12) <= 0.0 {
        return None;
    }
    Some(bisect(0.0, 1e12, g))
}

fn oracle_state(alpha: f64, eps: f64, s: f64, q_hat0: f64) -> Option<(f64, f64, f64, f64, f64)> {
    let tau = eps / q_hat0.sqrt();
    let (_, psi_q, psi_phi) = psi_quadrature(tau);
    let phi = oracle_phi(alpha, psi_phi)?;
    let w = alpha / (1.0 + phi);
    let q0 = q_hat0 / (w * w) * psi_q;
    let gap = q_hat0 - alpha * (s * s + q0) / (1.0 + phi).powi(2);
    Some((tau, phi, w, q0, gap))
}

/// Every root of the `q_hat0` balance on a log grid over `[1e-8, 1e4]`.
pub fn saddle_oracle(alpha: f64, eps: f64, s: f64, r_bar: f64) -> Vec<SaddleOracle> {
    let gap = |lq: f64| oracle_state(alpha, eps, s, lq.exp()).map(|st| st.4);
    let grid: Vec<f64> = (0..=400).map(|j| (1e-8f64).ln() + (1e12f64).ln() * j as f64 / 400.0).collect();
    let mut roots = Vec::new();
    for pair in grid.windows(2) {
        let (Some(a), Some(b)) = (gap(pair[0]), gap(pair[1])) else { continue };
        if a.signum() == b.signum() {
            continue;
        }
        let lq = bisect(pair[0], pair[1], |x| gap(x).unwrap_or(f64::NAN));
        let q_hat0 = lq.exp();
        let (tau, phi, w, q0, _) = oracle_state(alpha, eps, s, q_hat0).unwrap();
        let (psi_r, _, _) = psi_quadrature(tau);
        roots.push(SaddleOracle {
            tau,
            q_hat0,
            phi,
            w,
            q0,
            z0: r_bar - q_hat0.sqrt() / w * psi_r,
            h_mean: (q0 + s * s) / (1.0 + phi).powi(2),
        });
    }
    roots
}

/// `|a - b| <= tol * max(|a|, |b|)`.
pub fn rel_close(a: f64, b: f64, tol: f64) -> bool {
    (a - b).abs() <= tol * a.abs().max(b.abs())
}

/// Agreement to `digits` significant digits.
pub fn sig_digits(a: f64, b: f64, digits: i32) -> bool {
    rel_close(a, b, 0.5 * 10f64.powi(1 - digits))
}
