use std::ops::Index;

use super::game::{mobius_coefficients, CharacteristicGame};
use crate::error::{Error, Result};

/// Largest agent set for exact Shapley / Banzhaf computation.
pub const MAX_EXACT_AGENTS: usize = 12;

/// One payoff per agent.
#[derive(Clone, Debug, PartialEq)]
pub struct PayoffVector(pub Vec<f64>);

impl PayoffVector {
    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn total(&self) -> f64 {
        self.0.iter().sum()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn max_abs_diff(&self, other: &PayoffVector) -> f64 {
        self.0
            .iter()
            .zip(&other.0)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max)
    }
}

impl Index<usize> for PayoffVector {
    type Output = f64;

    fn index(&self, i: usize) -> &f64 {
        &self.0[i]
    }
}

fn check_budget(v: &CharacteristicGame) -> Result<()> {
    if v.n_agents() > MAX_EXACT_AGENTS {
        return Err(Error::BudgetExceeded {
            what: "exact payoff",
            n_agents: v.n_agents(),
            limit: MAX_EXACT_AGENTS,
        });
    }
    Ok(())
}

/// `|S|! (n-|S|-1)! / n!` for `|S| = 0..n`.
pub(crate) fn shapley_size_weights(n: usize) -> Vec<f64> {
    // w(s) = 1 / (n * C(n-1, s))
    let mut weights = Vec::with_capacity(n);
    let mut binom = 1.0f64;
    for s in 0..n {
        weights.push(1.0 / (n as f64 * binom));
        binom = binom * (n - 1 - s) as f64 / (s + 1) as f64;
    }
    weights
}

/// Marginal contributions weighted by the size of the coalition joined.
pub(crate) fn weighted_marginals(v: &CharacteristicGame, size_weights: &[f64]) -> PayoffVector {
    let n = v.n_agents();
    let phi = (0..n)
        .map(|i| {
            let bit = 1usize << i;
            (0..=v.grand_mask())
                .filter(|s| s & bit == 0)
                .map(|s| {
                    let w = size_weights[s.count_ones() as usize];
                    w * (v.value_of_bits(s | bit) - v.value_of_bits(s))
                })
                .sum()
        })
        .collect();
    PayoffVector(phi)
}

/// Shapley value by the subset-weighted closed form
/// `phi_i = sum_{S ⊆ N\{i}} |S|!(n-|S|-1)!/n! · (v(S ∪ {i}) - v(S))`.
pub fn shapley_exact(v: &CharacteristicGame) -> Result<PayoffVector> {
    check_budget(v)?;
    Ok(weighted_marginals(v, &shapley_size_weights(v.n_agents())))
}

/// Shapley value as an even split of every dividend among its coalition:
/// `phi_i = sum_{C ∋ i} k_C / |C|`.
pub fn shapley_from_dividends(v: &CharacteristicGame) -> Result<PayoffVector> {
    check_budget(v)?;
    let k = mobius_coefficients(v);
    let mut phi = vec![0.0; v.n_agents()];
    for (c, kc) in k.iter() {
        let share = kc / c.len() as f64;
        for i in c.members() {
            phi[i] += share;
        }
    }
    Ok(PayoffVector(phi))
}

/// Banzhaf index `phi_i = 2^{-(n-1)} sum_{S ⊆ N\{i}} (v(S ∪ {i}) - v(S))`.
pub fn banzhaf_exact(v: &CharacteristicGame) -> Result<PayoffVector> {
    check_budget(v)?;
    let n = v.n_agents();
    let w = 1.0 / (1u64 << (n - 1)) as f64;
    Ok(weighted_marginals(v, &vec![w; n]))
}
