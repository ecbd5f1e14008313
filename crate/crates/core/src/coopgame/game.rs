use std::collections::BTreeMap;

use rand::Rng;

use super::coalition::{CoalitionId, MAX_AGENTS};
use crate::error::{Error, Result};
use crate::tolerance;

/// A nonnegative characteristic function `v: 2^N -> R`, stored densely by bitmask.
#[derive(Clone, Debug, PartialEq)]
pub struct CharacteristicGame {
    n_agents: usize,
    values: Vec<f64>,
}

impl CharacteristicGame {
    /// Builds a game from a full table of `2^n_agents` values.
    ///
    /// The empty coalition must be worth exactly zero and every entry must be
    /// finite and nonnegative.
    pub fn new(n_agents: usize, values: Vec<f64>) -> Result<Self> {
        if n_agents == 0 || n_agents > MAX_AGENTS {
            return Err(Error::invalid(format!(
                "n_agents must be in 1..={MAX_AGENTS}, got {n_agents}"
            )));
        }
        let len = 1usize << n_agents;
        if values.len() != len {
            return Err(Error::DimensionMismatch {
                what: "game table",
                expected: len,
                got: values.len(),
            });
        }
        if values[0] != 0.0 {
            return Err(Error::invalid("the empty coalition must be worth 0"));
        }
        if let Some((bits, v)) = values
            .iter()
            .enumerate()
            .find(|(_, v)| !v.is_finite() || **v < 0.0)
        {
            return Err(Error::invalid(format!(
                "coalition {bits:#b} has value {v}; games are nonnegative and finite"
            )));
        }
        Ok(Self { n_agents, values })
    }

    pub fn from_fn(n_agents: usize, f: impl Fn(CoalitionId) -> f64) -> Result<Self> {
        if n_agents == 0 || n_agents > MAX_AGENTS {
            return Err(Error::invalid(format!(
                "n_agents must be in 1..={MAX_AGENTS}, got {n_agents}"
            )));
        }
        let values = (0..1u32 << n_agents)
            .map(|bits| {
                if bits == 0 {
                    0.0
                } else {
                    f(CoalitionId::new(bits, n_agents).expect("mask in range"))
                }
            })
            .collect();
        Self::new(n_agents, values)
    }

    /// `v(C) = sum of w_i over members`.
    pub fn additive(weights: &[f64]) -> Result<Self> {
        Self::from_fn(weights.len(), |c| c.members().map(|i| weights[i]).sum())
    }

    pub fn n_agents(&self) -> usize {
        self.n_agents
    }

    pub fn value(&self, c: CoalitionId) -> f64 {
        self.values[c.index()]
    }

    pub fn value_of_bits(&self, bits: usize) -> f64 {
        self.values[bits]
    }

    pub fn grand_value(&self) -> f64 {
        self.values[self.values.len() - 1]
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn grand_mask(&self) -> usize {
        self.values.len() - 1
    }

    /// `a * self + b * other` for nonnegative scalars.
    pub fn combine(&self, a: f64, other: &CharacteristicGame, b: f64) -> Result<Self> {
        if self.n_agents != other.n_agents {
            return Err(Error::DimensionMismatch {
                what: "game combination",
                expected: self.n_agents,
                got: other.n_agents,
            });
        }
        let values = self
            .values
            .iter()
            .zip(&other.values)
            .map(|(x, y)| a * x + b * y)
            .collect();
        Self::new(self.n_agents, values)
    }

    pub fn scale(&self, factor: f64) -> Result<Self> {
        Self::new(self.n_agents, self.values.iter().map(|v| v * factor).collect())
    }

    /// Swaps the roles of agents `i` and `j`.
    pub fn permute_agents(&self, i: usize, j: usize) -> Self {
        let bi = 1usize << i;
        let bj = 1usize << j;
        let values = (0..self.values.len())
            .map(|mask| {
                let has_i = mask & bi != 0;
                let has_j = mask & bj != 0;
                let mut src = mask & !(bi | bj);
                if has_i {
                    src |= bj;
                }
                if has_j {
                    src |= bi;
                }
                self.values[src]
            })
            .collect();
        Self {
            n_agents: self.n_agents,
            values,
        }
    }
}

/// Unanimity-basis coordinates `k_C`, one per non-empty coalition.
#[derive(Clone, Debug, PartialEq)]
pub struct BasisCoefficients {
    n_agents: usize,
    // k[bits - 1]
    k: Vec<f64>,
}

impl BasisCoefficients {
    pub fn new(n_agents: usize, k: Vec<f64>) -> Result<Self> {
        if n_agents == 0 || n_agents > MAX_AGENTS {
            return Err(Error::invalid(format!(
                "n_agents must be in 1..={MAX_AGENTS}, got {n_agents}"
            )));
        }
        let len = (1usize << n_agents) - 1;
        if k.len() != len {
            return Err(Error::DimensionMismatch {
                what: "basis coefficients",
                expected: len,
                got: k.len(),
            });
        }
        if k.iter().any(|x| !x.is_finite()) {
            return Err(Error::NonFinite("basis coefficients".into()));
        }
        Ok(Self { n_agents, k })
    }

    pub fn zeros(n_agents: usize) -> Result<Self> {
        Self::new(n_agents, vec![0.0; (1usize << n_agents) - 1])
    }

    pub fn n_agents(&self) -> usize {
        self.n_agents
    }

    /// Coefficient of a non-empty coalition.
    pub fn get(&self, c: CoalitionId) -> f64 {
        assert!(!c.is_empty(), "the empty coalition carries no coefficient");
        self.k[c.index() - 1]
    }

    pub fn set(&mut self, c: CoalitionId, value: f64) {
        assert!(!c.is_empty(), "the empty coalition carries no coefficient");
        self.k[c.index() - 1] = value;
    }

    /// `(coalition, k_C)` in ascending bitmask order.
    pub fn iter(&self) -> impl Iterator<Item = (CoalitionId, f64)> + '_ {
        self.k.iter().enumerate().map(move |(i, &k)| {
            (
                CoalitionId::new((i + 1) as u32, self.n_agents).expect("mask in range"),
                k,
            )
        })
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.k
    }

    pub fn all_nonnegative(&self) -> bool {
        self.k.iter().all(|&k| k >= 0.0)
    }
}

/// The unanimity game `v_C^z`: worth `z` on every superset of `C`, zero elsewhere.
pub fn unanimity_game(c: CoalitionId, z: f64, n_agents: usize) -> Result<CharacteristicGame> {
    if c.is_empty() {
        return Err(Error::invalid("unanimity games need a non-empty carrier"));
    }
    if c.n_agents() != n_agents {
        return Err(Error::DimensionMismatch {
            what: "carrier coalition",
            expected: n_agents,
            got: c.n_agents(),
        });
    }
    if !z.is_finite() || z < 0.0 {
        return Err(Error::invalid(format!(
            "unanimity scale must be finite and nonnegative, got {z}"
        )));
    }
    let carrier = c.index();
    let values = (0..1usize << n_agents)
        .map(|d| if d & carrier == carrier { z } else { 0.0 })
        .collect();
    CharacteristicGame::new(n_agents, values)
}

/// Harsanyi dividends `k_C = sum_{T ⊆ C} (-1)^{|C|-|T|} v(T)` via the fast
/// subset Möbius transform.
pub fn mobius_coefficients(v: &CharacteristicGame) -> BasisCoefficients {
    let n = v.n_agents();
    let mut f = v.values().to_vec();
    for bit in 0..n {
        let b = 1usize << bit;
        for mask in 0..f.len() {
            if mask & b != 0 {
                f[mask] -= f[mask ^ b];
            }
        }
    }
    f.remove(0);
    BasisCoefficients { n_agents: n, k: f }
}

fn zeta(n: usize, k: &[f64], z: f64) -> Vec<f64> {
    let mut f = Vec::with_capacity(1 << n);
    f.push(0.0);
    f.extend(k.iter().map(|x| x * z));
    for bit in 0..n {
        let b = 1usize << bit;
        for mask in 0..f.len() {
            if mask & b != 0 {
                f[mask] += f[mask ^ b];
            }
        }
    }
    f
}

fn into_game(n: usize, mut values: Vec<f64>, scale: f64) -> Result<CharacteristicGame> {
    // Sums of dividends that cancel to zero may land a few ulps below it.
    let floor = -tolerance::EXACT * (1.0 + scale);
    for (bits, v) in values.iter_mut().enumerate() {
        if *v < 0.0 {
            if *v < floor {
                return Err(Error::invalid(format!(
                    "coefficients reconstruct a negative value {v} on coalition {bits:#b}"
                )));
            }
            *v = 0.0;
        }
    }
    CharacteristicGame::new(n, values)
}

/// `v(D) = sum_{∅ ≠ C ⊆ D} k_C`. Fails when the coefficients describe a game
/// with negative values.
pub fn reconstruct_game(k: &BasisCoefficients) -> Result<CharacteristicGame> {
    reconstruct_in_basis(k, 1.0)
}

/// Reconstructs `sum_C k_C · v_C^z`, the game spanned by unanimity games of scale `z`.
pub fn reconstruct_in_basis(k: &BasisCoefficients, z: f64) -> Result<CharacteristicGame> {
    let n = k.n_agents();
    let scale = k.as_slice().iter().map(|x| (x * z).abs()).sum::<f64>();
    into_game(n, zeta(n, k.as_slice(), z), scale)
}

/// Coefficients of `v` in the basis of unanimity games scaled by `v(N)`:
/// `k_C / v(N)`.
pub fn lemma1_rescale(v: &CharacteristicGame) -> Result<BasisCoefficients> {
    let grand = v.grand_value();
    if grand == 0.0 {
        return Err(Error::DivisionByZero(
            "the grand coalition is worth 0; the scaled basis is undefined".into(),
        ));
    }
    let mut k = mobius_coefficients(v);
    for x in &mut k.k {
        *x /= grand;
    }
    Ok(k)
}

/// Uniform `[0, 1)` values on every non-empty coalition.
pub fn random_game<R: Rng + ?Sized>(rng: &mut R, n_agents: usize) -> CharacteristicGame {
    let values = (0..1usize << n_agents)
        .map(|bits| if bits == 0 { 0.0 } else { rng.gen::<f64>() })
        .collect();
    CharacteristicGame::new(n_agents, values).expect("random values are valid")
}

/// One characteristic game per state, all over the same agent set.
#[derive(Clone, Debug, Default)]
pub struct StateGameFamily {
    n_agents: Option<usize>,
    games: BTreeMap<u64, CharacteristicGame>,
}

impl StateGameFamily {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, state: u64, game: CharacteristicGame) -> Result<()> {
        match self.n_agents {
            Some(n) if n != game.n_agents() => Err(Error::DimensionMismatch {
                what: "state game family",
                expected: n,
                got: game.n_agents(),
            }),
            _ => {
                self.n_agents = Some(game.n_agents());
                self.games.insert(state, game);
                Ok(())
            }
        }
    }

    pub fn get(&self, state: u64) -> Option<&CharacteristicGame> {
        self.games.get(&state)
    }

    pub fn n_agents(&self) -> Option<usize> {
        self.n_agents
    }

    pub fn len(&self) -> usize {
        self.games.len()
    }

    pub fn is_empty(&self) -> bool {
        self.games.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (u64, &CharacteristicGame)> {
        self.games.iter().map(|(s, g)| (*s, g))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn c(members: &[usize], n: usize) -> CoalitionId {
        CoalitionId::from_members(members, n).unwrap()
    }

    // Direct inclusion-exclusion, independent of the fast transform.
    fn dividend_by_subsets(v: &CharacteristicGame, carrier: usize) -> f64 {
        let mut total = 0.0;
        for t in 0..=carrier {
            if t & !carrier != 0 {
                continue;
            }
            let sign = if (carrier.count_ones() - (t as u32).count_ones()).is_multiple_of(2) {
                1.0
            } else {
                -1.0
            };
            total += sign * v.value_of_bits(t);
        }
        total
    }

    #[test]
    fn unanimity_pair_over_three() {
        let v = unanimity_game(c(&[0, 1], 3), 1.0, 3).unwrap();
        for bits in 1..8usize {
            let expected = if bits & 0b011 == 0b011 { 1.0 } else { 0.0 };
            assert_eq!(v.value_of_bits(bits), expected, "bits {bits:#b}");
        }
    }

    #[test]
    fn unanimity_single_agent() {
        let v = unanimity_game(c(&[0], 1), 5.0, 1).unwrap();
        assert_eq!(v.grand_value(), 5.0);
    }

    #[test]
    fn unanimity_singleton_has_four_supersets() {
        let v = unanimity_game(c(&[1], 3), 1.0, 3).unwrap();
        let ones = (1..8).filter(|&b| v.value_of_bits(b) == 1.0).count();
        let zeros = (1..8).filter(|&b| v.value_of_bits(b) == 0.0).count();
        assert_eq!((ones, zeros), (4, 3));
    }

    #[test]
    fn unanimity_rejects_bad_arguments() {
        let empty = CoalitionId::new(0, 3).unwrap();
        assert!(matches!(
            unanimity_game(empty, 1.0, 3),
            Err(Error::InvalidArgument(_))
        ));
        assert!(matches!(
            unanimity_game(c(&[0], 3), -1.0, 3),
            Err(Error::InvalidArgument(_))
        ));
    }

    #[test]
    fn dividends_of_unanimity_game() {
        let k = mobius_coefficients(&unanimity_game(c(&[0, 1], 3), 1.0, 3).unwrap());
        for (coal, x) in k.iter() {
            let expected = if coal.bits() == 0b011 { 1.0 } else { 0.0 };
            assert_eq!(x, expected);
        }
    }

    #[test]
    fn dividends_of_additive_game() {
        let k = mobius_coefficients(&CharacteristicGame::additive(&[1.0, 2.0, 3.0]).unwrap());
        for (coal, x) in k.iter() {
            let expected = if coal.len() == 1 {
                [1.0, 2.0, 3.0][coal.members().next().unwrap()]
            } else {
                0.0
            };
            assert!((x - expected).abs() < 1e-15);
        }
    }

    #[test]
    fn dividends_of_asymmetric_three_agent_game() {
        // v({0,1}) = v({0,2}) = 1, v(N) = 2, everything else 0.
        let v = CharacteristicGame::new(3, vec![0.0, 0.0, 0.0, 1.0, 0.0, 1.0, 0.0, 2.0]).unwrap();
        let k = mobius_coefficients(&v);
        for (coal, x) in k.iter() {
            assert_eq!(x, dividend_by_subsets(&v, coal.index()));
        }
        // Frozen from the subset oracle: k_{01} = k_{02} = 1, k_N = 0.
        assert_eq!(k.get(c(&[0, 1], 3)), 1.0);
        assert_eq!(k.get(c(&[0, 2], 3)), 1.0);
        assert_eq!(k.get(c(&[0, 1, 2], 3)), 0.0);
    }

    #[test]
    fn reconstruct_simple_cases() {
        let mut k = BasisCoefficients::zeros(3).unwrap();
        k.set(c(&[0], 3), 2.0);
        let v = reconstruct_game(&k).unwrap();
        for bits in 1..8usize {
            assert_eq!(v.value_of_bits(bits), if bits & 1 == 1 { 2.0 } else { 0.0 });
        }
        let zero = reconstruct_game(&BasisCoefficients::zeros(4).unwrap()).unwrap();
        assert!(zero.values().iter().all(|&x| x == 0.0));
    }

    #[test]
    fn reconstruct_rejects_negative_games() {
        let mut k = BasisCoefficients::zeros(2).unwrap();
        k.set(c(&[0], 2), -1.0);
        assert!(reconstruct_game(&k).is_err());
    }

    #[test]
    fn round_trip_random_games() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for i in 0..100 {
            let n = 1 + i % 6;
            let v = random_game(&mut rng, n);
            let back = reconstruct_game(&mobius_coefficients(&v)).unwrap();
            for (a, b) in v.values().iter().zip(back.values()) {
                assert!((a - b).abs() < tolerance::EXACT);
            }
        }
    }

    #[test]
    fn rescale_unit_grand_value_is_identity() {
        let v = CharacteristicGame::new(2, vec![0.0, 0.25, 0.5, 1.0]).unwrap();
        assert_eq!(lemma1_rescale(&v).unwrap(), mobius_coefficients(&v));
    }

    #[test]
    fn rescale_is_scale_invariant() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..50 {
            let v = random_game(&mut rng, 4);
            let a = lemma1_rescale(&v).unwrap();
            let b = lemma1_rescale(&v.scale(10.0).unwrap()).unwrap();
            for (x, y) in a.as_slice().iter().zip(b.as_slice()) {
                assert!((x - y).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn rescale_self_basis() {
        let v = unanimity_game(CoalitionId::grand(3).unwrap(), 4.0, 3).unwrap();
        let k = lemma1_rescale(&v).unwrap();
        assert_eq!(k.get(CoalitionId::grand(3).unwrap()), 1.0);
        assert_eq!(reconstruct_in_basis(&k, 4.0).unwrap(), v);
    }

    #[test]
    fn rescale_rejects_zero_grand_value() {
        let v = CharacteristicGame::new(2, vec![0.0; 4]).unwrap();
        assert!(matches!(lemma1_rescale(&v), Err(Error::DivisionByZero(_))));
    }

    #[test]
    fn game_validation() {
        assert!(CharacteristicGame::new(2, vec![1.0, 0.0, 0.0, 0.0]).is_err());
        assert!(CharacteristicGame::new(2, vec![0.0, -1.0, 0.0, 0.0]).is_err());
        assert!(CharacteristicGame::new(2, vec![0.0, 0.0, 0.0]).is_err());
        assert!(CharacteristicGame::new(2, vec![0.0, f64::NAN, 0.0, 0.0]).is_err());
    }

    #[test]
    fn family_requires_common_agent_set() {
        let mut family = StateGameFamily::new();
        family.insert(0, CharacteristicGame::additive(&[1.0, 1.0]).unwrap()).unwrap();
        assert!(family
            .insert(1, CharacteristicGame::additive(&[1.0]).unwrap())
            .is_err());
        assert_eq!(family.len(), 1);
    }
}
