use rand::Rng;

use super::game::{random_game, CharacteristicGame};
use super::values::PayoffVector;
use crate::error::Result;
use crate::tolerance;

/// `|sum phi - v(N)| < 1e-9`.
pub fn check_efficiency(v: &CharacteristicGame, phi: &PayoffVector) -> bool {
    phi.len() == v.n_agents() && (phi.total() - v.grand_value()).abs() < tolerance::ORACLE
}

/// Whether agents `i` and `j` add the same value to every coalition containing neither.
pub fn interchangeable(v: &CharacteristicGame, i: usize, j: usize) -> bool {
    let bi = 1usize << i;
    let bj = 1usize << j;
    (0..=v.grand_mask())
        .filter(|s| s & (bi | bj) == 0)
        .all(|s| v.value_of_bits(s | bi) == v.value_of_bits(s | bj))
}

/// Every interchangeable pair receives payoffs within 1e-9 of each other.
pub fn check_symmetry(v: &CharacteristicGame, phi: &PayoffVector) -> bool {
    let n = v.n_agents();
    if phi.len() != n {
        return false;
    }
    for i in 0..n {
        for j in i + 1..n {
            if interchangeable(v, i, j) && (phi[i] - phi[j]).abs() >= tolerance::ORACLE {
                return false;
            }
        }
    }
    true
}

/// Samples `trials` random pairs of games and nonnegative scalars and checks
/// `f(a v + b w) = a f(v) + b f(w)` componentwise to 1e-8.
pub fn check_linearity<R, F>(payoff: F, rng: &mut R, n_agents: usize, trials: usize) -> Result<bool>
where
    R: Rng + ?Sized,
    F: Fn(&CharacteristicGame) -> Result<PayoffVector>,
{
    for _ in 0..trials {
        let v = random_game(rng, n_agents);
        let w = random_game(rng, n_agents);
        let a = rng.gen_range(0.0..3.0);
        let b = rng.gen_range(0.0..3.0);
        let mixed = payoff(&v.combine(a, &w, b)?)?;
        let pv = payoff(&v)?;
        let pw = payoff(&w)?;
        let ok = (0..n_agents).all(|i| (mixed[i] - a * pv[i] - b * pw[i]).abs() < tolerance::LINEARITY);
        if !ok {
            return Ok(false);
        }
    }
    Ok(true)
}
