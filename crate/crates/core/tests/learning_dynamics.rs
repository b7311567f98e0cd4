use infomarket_core::learning::{self, LearningConfig, PropensityState};
use infomarket_core::model::{MarketInstance, ModelParams};
use infomarket_core::rng;

fn instance(n: usize, omega: usize, seed: u64) -> MarketInstance {
    MarketInstance::sample(&ModelParams::new(n, omega, 0.0, seed)).unwrap()
}

fn short(seed: u64) -> LearningConfig {
    LearningConfig { t_max: 60_000, transient: 10_000, avg_window: 10_000, tol: 0.0, seed, record_stride: 97, ..Default::default() }
}

#[test]
fn runs_are_reproducible() {
    let inst = instance(8, 6, 1);
    let a = learning::run(&inst, 0.05, &short(3), true).unwrap();
    let b = learning::run(&inst, 0.05, &short(3), true).unwrap();
    assert_eq!(a.records, b.records);
    assert_eq!(a.mean_alloc, b.mean_alloc);
    let c = learning::run(&inst, 0.05, &short(4), true).unwrap();
    assert_ne!(a.records, c.records);
}

#[test]
fn prohibitive_cost_leaves_only_the_chartist() {
    let inst = instance(10, 8, 2);
    let run = learning::run(&inst, 50.0, &short(0), true).unwrap();
    assert!(run.mean_alloc.mean_informed() < 1e-12);
    let z0 = 0.5 * (run.mean_alloc.z0[0] + run.mean_alloc.z0[1]) / 10.0;
    assert!((z0 - inst.mean_return_realized()).abs() < 0.1, "{z0}");
}

#[test]
fn windowed_objective_does_not_rise_without_cost() {
    let inst = instance(24, 12, 5);
    let config = LearningConfig { t_max: 1_200_000, transient: 100_000, avg_window: 50_000, tol: 0.0, ..Default::default() };
    let run = learning::run(&inst, 0.0, &config, false).unwrap();
    let h = &run.h_series;
    assert!(h.len() >= 20);
    let diffs: Vec<f64> = h.windows(2).map(|p| p[1] - p[0]).collect();
    let mean = diffs.iter().sum::<f64>() / diffs.len() as f64;
    let sd = (diffs.iter().map(|d| (d - mean).powi(2)).sum::<f64>() / (diffs.len() - 1) as f64).sqrt();
    for d in &diffs {
        assert!(*d <= 3.0 * sd + 1e-15, "rise {d} vs sd {sd}");
    }
    assert!(h.last().unwrap() <= &(h[0] + 3.0 * sd));
}

/// Mean and standard error of `z0+ - z0-` over windows.
fn leg_gap(inst: &MarketInstance, gain: f64) -> (f64, f64, f64) {
    let window = (3000.0 / gain) as u64;
    let config = LearningConfig { gain, t_max: 40 * window, transient: 4 * window, avg_window: window, tol: 0.0, ..Default::default() };
    let run = learning::run(inst, 0.1, &config, true).unwrap();
    let diffs: Vec<f64> = run.z0_window_means.iter().map(|z| z[1] - z[0]).collect();
    let k = diffs.len() as f64;
    let mean = diffs.iter().sum::<f64>() / k;
    let se = (diffs.iter().map(|d| (d - mean).powi(2)).sum::<f64>() / (k - 1.0) / k).sqrt();
    (mean, se, 0.5 * (run.mean_alloc.z0[0] + run.mean_alloc.z0[1]))
}

#[test]
fn chartist_legs_agree_as_the_gain_vanishes() {
    let inst = instance(16, 8, 7);
    let (coarse, coarse_se, z0) = leg_gap(&inst, 0.1);
    let (fine, fine_se, _) = leg_gap(&inst, 0.05);
    assert!(coarse.abs() < 0.01 * z0, "{coarse} vs {z0}");
    // The gap is a first-order effect of the gain: halving it halves the gap.
    let ratio = coarse / fine;
    let spread = 3.0 * ratio * ((coarse_se / coarse).powi(2) + (fine_se / fine).powi(2)).sqrt();
    assert!((ratio - 2.0).abs() <= spread.max(0.3), "{ratio} +- {spread}");
}

#[test]
fn propensities_are_stationary_at_the_averaged_point() {
    let inst = instance(16, 8, 11);
    let config = LearningConfig::default();
    let mut rng = rng::seeded(1);
    let mut state = PropensityState::initial(&inst, &config, &mut rng);
    use rand::Rng;
    let burn = 50_000;
    let total = 100_000;
    let mut start = state.clone();
    let mut z_acc = vec![[0.0; 2]; 16];
    for t in 0..total {
        if t == burn {
            start = state.clone();
        }
        if t >= burn {
            for (acc, u) in z_acc.iter_mut().zip(&state.u) {
                acc[0] += learning::chi(u[0], &config);
                acc[1] += learning::chi(u[1], &config);
            }
        }
        let omega = rng.random_range(0..8);
        state.step(&inst, omega, &config, 0.1, true);
    }
    let steps = (total - burn) as f64;
    let z_scale = z_acc.iter().flatten().fold(0.0f64, |m, z| m.max(*z)) / steps;
    let mut active = 0;
    for (i, legs) in z_acc.iter().enumerate() {
        for (m, z) in legs.iter().enumerate() {
            if z / steps > 0.1 * z_scale {
                active += 1;
                let drift = (state.u[i][m] - start.u[i][m]) / steps;
                assert!(drift.abs() < 1e-3, "agent {i} leg {m}: {drift}");
            }
        }
    }
    assert!(active > 0);
}
