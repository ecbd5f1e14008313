//! Exact transferable-utility cooperative games over a small agent set.
//!
//! Coalitions are bitmasks over agents `0..n`, and every game is a dense
//! table indexed by those bitmasks. The module covers the unanimity basis
//! (Möbius / Harsanyi dividends), the Shapley value and Banzhaf index, the
//! axiom checks used to certify them, and superadditivity.

mod axioms;
mod coalition;
mod game;
pub mod io;
pub mod oracle;
mod superadditive;
mod values;

pub use axioms::{check_efficiency, check_linearity, check_symmetry, interchangeable};
pub use coalition::{CoalitionId, MAX_AGENTS};
pub use game::{
    lemma1_rescale, mobius_coefficients, random_game, reconstruct_game, reconstruct_in_basis,
    unanimity_game, BasisCoefficients, CharacteristicGame, StateGameFamily,
};
pub use superadditive::{
    is_superadditive, search_negative_dividend, superadditive_cover, NegativeDividend,
    MAX_COVER_AGENTS,
};
pub(crate) use values::{shapley_size_weights, weighted_marginals};
pub use values::{
    banzhaf_exact, shapley_exact, shapley_from_dividends, PayoffVector, MAX_EXACT_AGENTS,
};
