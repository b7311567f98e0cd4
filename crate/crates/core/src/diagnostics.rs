//! Information content of the private signals.

use std::collections::HashMap;
use std::io::Write;

use serde::Serialize;

use crate::error::Result;
use crate::model::{MarketInstance, ModelParams, Signal};
use crate::rng;

/// Column of signals seen by all agents in one state.
fn state_signature(inst: &MarketInstance, state: usize) -> Vec<Signal> {
    (0..inst.n_agents()).map(|i| inst.signal(i, state)).collect()
}

/// Unordered pairs of states that no agent's signal separates.
pub fn count_indistinguishable_pairs(inst: &MarketInstance) -> u64 {
    let mut classes: HashMap<Vec<Signal>, u64> = HashMap::new();
    for w in 0..inst.n_states() {
        *classes.entry(state_signature(inst, w)).or_default() += 1;
    }
    classes.values().map(|&m| m * (m.saturating_sub(1)) / 2).sum()
}

/// Whether the joint signal vector identifies the state.
pub fn signals_identify_state(inst: &MarketInstance) -> bool {
    count_indistinguishable_pairs(inst) == 0
}

/// `E[N_=] = Omega (Omega - 1) 2^-(N+1)`, which also bounds `P{N_= > 0}`.
pub fn indistinguishable_bound(n_agents: usize, n_states: usize) -> f64 {
    let omega = n_states as f64;
    let exponent = -(n_agents as f64 + 1.0);
    omega * (omega - 1.0) * exponent.exp2()
}

/// `|E[R | k_i = +] - E[R | k_i = -]|` over the states; `None` when the agent
/// sees only one signal value.
pub fn conditional_mean_gap(inst: &MarketInstance, agent: usize) -> Option<f64> {
    let (mut sum, mut count) = ([0.0; 2], [0usize; 2]);
    for (k, r) in inst.agent_signals(agent).iter().zip(inst.returns()) {
        sum[k.index()] += r;
        count[k.index()] += 1;
    }
    if count.contains(&0) {
        return None;
    }
    Some((sum[1] / count[1] as f64 - sum[0] / count[0] as f64).abs())
}

/// Mutual information in bits between a uniform state and one agent's
/// signal: the binary entropy of the signal split.
pub fn signal_information(inst: &MarketInstance, agent: usize) -> f64 {
    let plus = inst.agent_signals(agent).iter().filter(|&&k| k == Signal::Plus).count();
    let p = plus as f64 / inst.n_states() as f64;
    if p == 0.0 || p == 1.0 {
        return 0.0;
    }
    -(p * p.log2() + (1.0 - p) * (1.0 - p).log2())
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DiagnosticsRow {
    #[serde(rename = "N")]
    pub n_agents: usize,
    #[serde(rename = "Omega")]
    pub n_states: usize,
    /// Mean of `N_=` over instances.
    pub n_indist: f64,
    pub bound: f64,
    /// Fraction of instances with at least one indistinguishable pair.
    pub frac_indist: f64,
    /// Mean over instances and two-sided agents of the conditional-mean gap.
    pub mean_gap: f64,
    pub mean_bits: f64,
    pub instances: usize,
}

/// Averages the diagnostics over `instances` independent draws; instance `r`
/// uses seed `realization_seed(seed, N, r)`.
pub fn diagnostics_table(n_agents: usize, n_states: usize, instances: usize, seed: u64) -> Result<DiagnosticsRow> {
    let (mut pairs, mut hit, mut gap, mut gaps, mut bits) = (0.0, 0usize, 0.0, 0usize, 0.0);
    for r in 0..instances {
        let params = ModelParams::new(n_agents, n_states, 0.0, rng::realization_seed(seed, n_agents as f64, r as u64));
        let inst = MarketInstance::sample(&params)?;
        let count = count_indistinguishable_pairs(&inst);
        pairs += count as f64;
        hit += usize::from(count > 0);
        for i in 0..n_agents {
            if let Some(g) = conditional_mean_gap(&inst, i) {
                gap += g;
                gaps += 1;
            }
            bits += signal_information(&inst, i);
        }
    }
    let runs = instances.max(1) as f64;
    Ok(DiagnosticsRow {
        n_agents,
        n_states,
        n_indist: pairs / runs,
        bound: indistinguishable_bound(n_agents, n_states),
        frac_indist: hit as f64 / runs,
        mean_gap: if gaps > 0 { gap / gaps as f64 } else { f64::NAN },
        mean_bits: bits / (runs * n_agents as f64),
        instances,
    })
}

pub fn write_diagnostics_csv<W: Write>(mut out: W, rows: &[DiagnosticsRow]) -> Result<()> {
    writeln!(out, "N,Omega,n_indist,bound,mean_gap,mean_bits")?;
    for r in rows {
        writeln!(out, "{},{},{},{},{},{}", r.n_agents, r.n_states, r.n_indist, r.bound, r.mean_gap, r.mean_bits)?;
    }
    Ok(())
}
