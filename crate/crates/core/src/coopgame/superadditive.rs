use rand::Rng;

use super::coalition::{submasks, CoalitionId};
use super::game::{mobius_coefficients, random_game, CharacteristicGame};
use crate::error::{Error, Result};
use crate::tolerance;

/// Largest agent set for the superadditive cover.
pub const MAX_COVER_AGENTS: usize = 10;

/// `v(C ∪ D) >= v(C) + v(D)` for every pair of disjoint non-empty coalitions.
///
/// Costs `O(3^n)`; intended for the small games used here.
pub fn is_superadditive(v: &CharacteristicGame) -> bool {
    let full = v.grand_mask();
    for c in 1..=full {
        let rest = full & !c;
        // Each unordered pair once: D ranges over non-empty submasks of the
        // complement whose lowest bit is above the lowest bit of C.
        for d in submasks(rest) {
            if d == 0 || d.trailing_zeros() < c.trailing_zeros() {
                continue;
            }
            let joint = v.value_of_bits(c | d);
            let parts = v.value_of_bits(c) + v.value_of_bits(d);
            if joint < parts - tolerance::EXACT * (1.0 + joint.abs()) {
                return false;
            }
        }
    }
    true
}

/// `v*(C) = max over partitions P of C of sum_{D in P} v(D)`.
///
/// Subset dynamic programme: the block holding the lowest member of `C` is
/// chosen first, so every partition is visited exactly once.
pub fn superadditive_cover(v: &CharacteristicGame) -> Result<CharacteristicGame> {
    let n = v.n_agents();
    if n > MAX_COVER_AGENTS {
        return Err(Error::BudgetExceeded {
            what: "superadditive cover",
            n_agents: n,
            limit: MAX_COVER_AGENTS,
        });
    }
    let mut cover = vec![0.0; v.grand_mask() + 1];
    for c in 1..cover.len() {
        let low = c & c.wrapping_neg();
        let rest = c & !low;
        let mut best = f64::NEG_INFINITY;
        for tail in submasks(rest) {
            let block = low | tail;
            best = best.max(v.value_of_bits(block) + cover[c & !block]);
        }
        cover[c] = best;
    }
    CharacteristicGame::new(n, cover)
}

/// A superadditive game with a negative Harsanyi dividend.
#[derive(Clone, Debug)]
pub struct NegativeDividend {
    pub game: CharacteristicGame,
    pub coalition: CoalitionId,
    pub dividend: f64,
    pub trials: usize,
}

/// Random search for superadditive games that carry a negative dividend.
///
/// Candidates are covers of uniform random games. Returns the first hit, or
/// `None` when `trials` candidates all have nonnegative dividends.
pub fn search_negative_dividend<R: Rng + ?Sized>(
    rng: &mut R,
    n_agents: usize,
    trials: usize,
) -> Result<Option<NegativeDividend>> {
    for trial in 1..=trials {
        let game = superadditive_cover(&random_game(rng, n_agents))?;
        let k = mobius_coefficients(&game);
        let hit = k.iter().find(|(_, x)| *x < -tolerance::ORACLE);
        if let Some((coalition, dividend)) = hit {
            return Ok(Some(NegativeDividend {
                game,
                coalition,
                dividend,
                trials: trial,
            }));
        }
    }
    Ok(None)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::coopgame::{oracle, reconstruct_game, unanimity_game, BasisCoefficients};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn unanimity_games_are_superadditive() {
        for bits in 1..8u32 {
            let c = CoalitionId::new(bits, 3).unwrap();
            assert!(is_superadditive(&unanimity_game(c, 2.5, 3).unwrap()));
        }
    }

    #[test]
    fn two_singletons_beat_the_pair() {
        let v = CharacteristicGame::new(2, vec![0.0, 1.0, 1.0, 1.0]).unwrap();
        assert!(!is_superadditive(&v));
        let cover = superadditive_cover(&v).unwrap();
        assert_eq!(cover.grand_value(), 2.0);
        assert!(is_superadditive(&cover));
    }

    #[test]
    fn cover_matches_partition_enumeration() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        for i in 0..100 {
            let n = 1 + i % 5;
            let v = random_game(&mut rng, n);
            let cover = superadditive_cover(&v).unwrap();
            let brute = oracle::cover_by_partitions(&v);
            for (a, b) in cover.values().iter().zip(&brute) {
                assert!((a - b).abs() < 1e-12);
            }
            assert!(is_superadditive(&cover));
            assert!(v.values().iter().zip(cover.values()).all(|(x, y)| y >= x));
            let twice = superadditive_cover(&cover).unwrap();
            for (a, b) in twice.values().iter().zip(cover.values()) {
                assert!((a - b).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn nonnegative_dividends_give_superadditive_games() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        for n in 1..=5 {
            let k = BasisCoefficients::new(
                n,
                (0..(1 << n) - 1).map(|_| rng.gen::<f64>()).collect(),
            )
            .unwrap();
            assert!(is_superadditive(&reconstruct_game(&k).unwrap()));
        }
    }

    #[test]
    fn negative_dividend_exists_for_three_agents() {
        // v = 1 on every pair and on N: superadditive, yet k_N = 1 - 3 = -2.
        let v = CharacteristicGame::from_fn(3, |c| if c.len() >= 2 { 1.0 } else { 0.0 }).unwrap();
        assert!(is_superadditive(&v));
        let k = mobius_coefficients(&v);
        assert_eq!(k.get(CoalitionId::grand(3).unwrap()), -2.0);

        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let hit = search_negative_dividend(&mut rng, 3, 1000).unwrap();
        assert!(hit.is_some());
    }

    #[test]
    fn cover_budget() {
        let v = CharacteristicGame::new(11, vec![0.0; 1 << 11]).unwrap();
        assert!(matches!(
            superadditive_cover(&v),
            Err(Error::BudgetExceeded { .. })
        ));
    }
}
