//! Numerical tolerances shared by the library, the verification suite and the tests.

/// Exact combinatorics carried out in floating point (round trips, weight sums).
pub const EXACT: f64 = 1e-12;

/// Algorithm against independent oracle, and the axiom checks.
pub const ORACLE: f64 = 1e-9;

/// Componentwise tolerance for the linearity check.
pub const LINEARITY: f64 = 1e-8;

/// Return-target identities (TTD against lambda-return, GAE against its definition).
pub const RETURNS: f64 = 1e-10;

/// Rescaled-basis reconstruction.
pub const RESCALE: f64 = 1e-10;

/// Central finite-difference step and relative agreement for gradient checks.
pub const FD_STEP: f64 = 1e-5;
pub const FD_RELATIVE: f64 = 1e-4;
