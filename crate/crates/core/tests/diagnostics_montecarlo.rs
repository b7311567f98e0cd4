use infomarket_core::diagnostics::{self, conditional_mean_gap, count_indistinguishable_pairs};
use infomarket_core::model::{MarketInstance, ModelParams};

fn sample(n: usize, omega: usize, seed: u64) -> MarketInstance {
    MarketInstance::sample(&ModelParams::new(n, omega, 0.0, seed)).unwrap()
}

#[test]
fn mean_pair_count_matches_expectation() {
    let counts: Vec<f64> = (0..10_000).map(|s| count_indistinguishable_pairs(&sample(2, 4, s)) as f64).collect();
    let k = counts.len() as f64;
    let mean = counts.iter().sum::<f64>() / k;
    let sd = (counts.iter().map(|c| (c - mean).powi(2)).sum::<f64>() / (k - 1.0)).sqrt();
    assert!((mean - 1.5).abs() <= 3.0 * sd / k.sqrt(), "{mean}");
}

#[test]
fn collision_probability_respects_the_bound() {
    for size in [8, 16, 24] {
        let row = diagnostics::diagnostics_table(size, size, 10_000, 17).unwrap();
        let se = (row.bound * (1.0 - row.bound.min(1.0)) / 10_000.0).sqrt();
        assert!(row.frac_indist <= row.bound + 3.0 * se, "{size}: {} vs {}", row.frac_indist, row.bound);
    }
}

#[test]
fn full_revelation_is_injective() {
    for seed in 0..200 {
        let inst = sample(6, 10, seed);
        if count_indistinguishable_pairs(&inst) == 0 {
            let mut seen = std::collections::HashSet::new();
            for w in 0..10 {
                let column: Vec<i8> = (0..6).map(|i| inst.signal(i, w).value()).collect();
                assert!(seen.insert(column));
            }
        }
    }
}

#[test]
fn conditional_gap_shrinks_like_one_over_n() {
    let mut scaled = Vec::new();
    for n in [16usize, 32, 64, 128] {
        let mut sq = 0.0;
        let mut count = 0;
        for seed in 0..40 {
            let inst = sample(n, n, seed);
            for i in 0..n {
                if let Some(g) = conditional_mean_gap(&inst, i) {
                    sq += g * g;
                    count += 1;
                }
            }
        }
        scaled.push((sq / count as f64).sqrt() * n as f64);
    }
    let hi = scaled.iter().cloned().fold(f64::MIN, f64::max);
    let lo = scaled.iter().cloned().fold(f64::MAX, f64::min);
    assert!(hi / lo <= 2.0, "{scaled:?}");
}

#[test]
fn signals_carry_nearly_a_bit() {
    let row = diagnostics::diagnostics_table(20, 32, 200, 2).unwrap();
    assert!(row.mean_bits >= 0.95, "{}", row.mean_bits);
}
