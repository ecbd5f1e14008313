//! Fixed-seed property suite over the game-theory and return code, as run by
//! `smach verify`.

use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::coopgame::{
    self, banzhaf_exact, check_efficiency, check_linearity, check_symmetry, is_superadditive, lemma1_rescale,
    mobius_coefficients, oracle, random_game, reconstruct_game, reconstruct_in_basis, search_negative_dividend,
    unanimity_game, BasisCoefficients, CharacteristicGame, CoalitionId, PayoffVector,
};
use crate::error::Result;
use crate::returns::{coalition_return_map, ttd_weights, Lane, ReturnConfig};
use crate::tolerance;

/// Deliberate breakage for checking that the suite notices.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum Fault {
    #[default]
    None,
    /// Shapley size weights scaled by 1.1 for the empty coalition.
    CorruptShapleyWeights,
}

#[derive(Clone, Debug, PartialEq)]
pub struct PropertyRow {
    pub name: &'static str,
    /// `None` when the time budget ran out before the property ran.
    pub passed: Option<bool>,
    pub detail: String,
    pub seconds: f64,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct Report {
    pub rows: Vec<PropertyRow>,
}

impl Report {
    /// Every property ran and passed.
    pub fn all_passed(&self) -> bool {
        self.rows.iter().all(|r| r.passed == Some(true))
    }

    pub fn table(&self) -> String {
        let width = self.rows.iter().map(|r| r.name.len()).max().unwrap_or(8);
        let mut out = format!("{:<width$}  {:<7}  {:>7}  detail\n", "property", "result", "secs");
        for r in &self.rows {
            let status = match r.passed {
                Some(true) => "pass",
                Some(false) => "FAIL",
                None => "skipped",
            };
            out += &format!("{:<width$}  {:<7}  {:>7.2}  {}\n", r.name, status, r.seconds, r.detail);
        }
        out
    }
}

fn shapley(v: &CharacteristicGame, fault: Fault) -> Result<PayoffVector> {
    match fault {
        Fault::None => coopgame::shapley_exact(v),
        Fault::CorruptShapleyWeights => {
            let mut w = coopgame::shapley_size_weights(v.n_agents());
            w[0] *= 1.1;
            Ok(coopgame::weighted_marginals(v, &w))
        }
    }
}

/// `(v + v∘(i j)) / 2`, which makes `i` and `j` interchangeable.
fn symmetrised(v: &CharacteristicGame, i: usize, j: usize) -> Result<CharacteristicGame> {
    v.combine(0.5, &v.permute_agents(i, j), 0.5)
}

type Check = fn(Fault) -> Result<(bool, String)>;

const GAMES_PER_SIZE: usize = 1000;
const SIZES: std::ops::RangeInclusive<usize> = 1..=6;

fn rng(tag: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(0x5EED ^ tag)
}

fn mobius_round_trip(_: Fault) -> Result<(bool, String)> {
    let mut r = rng(1);
    let mut worst = 0.0f64;
    for n in SIZES {
        for _ in 0..GAMES_PER_SIZE {
            let v = random_game(&mut r, n);
            let back = reconstruct_game(&mobius_coefficients(&v))?;
            for (a, b) in v.values().iter().zip(back.values()) {
                worst = worst.max((a - b).abs());
            }
        }
    }
    Ok((worst < tolerance::EXACT, format!("max error {worst:.2e}")))
}

fn shapley_vs_permutations(fault: Fault) -> Result<(bool, String)> {
    let mut r = rng(2);
    let mut worst = 0.0f64;
    for n in SIZES {
        for _ in 0..GAMES_PER_SIZE {
            let v = random_game(&mut r, n);
            worst = worst.max(shapley(&v, fault)?.max_abs_diff(&oracle::shapley_by_permutations(&v)));
        }
    }
    Ok((worst < tolerance::ORACLE, format!("max difference {worst:.2e}")))
}

fn shapley_efficiency(fault: Fault) -> Result<(bool, String)> {
    let mut r = rng(3);
    let mut failures = 0;
    for n in SIZES {
        for _ in 0..GAMES_PER_SIZE {
            let v = random_game(&mut r, n);
            if !check_efficiency(&v, &shapley(&v, fault)?) {
                failures += 1;
            }
        }
    }
    Ok((failures == 0, format!("{failures} failing games")))
}

fn shapley_symmetry(fault: Fault) -> Result<(bool, String)> {
    let mut r = rng(4);
    let mut failures = 0;
    for n in 2..=*SIZES.end() {
        for _ in 0..GAMES_PER_SIZE {
            let i = r.gen_range(0..n);
            let j = (i + r.gen_range(1..n)) % n;
            let v = symmetrised(&random_game(&mut r, n), i, j)?;
            if !check_symmetry(&v, &shapley(&v, fault)?) {
                failures += 1;
            }
        }
    }
    Ok((failures == 0, format!("{failures} failing games")))
}

fn shapley_linearity(fault: Fault) -> Result<(bool, String)> {
    let mut r = rng(5);
    for n in SIZES {
        if !check_linearity(|v| shapley(v, fault), &mut r, n, GAMES_PER_SIZE / 10)? {
            return Ok((false, format!("violated at n = {n}")));
        }
    }
    Ok((true, String::new()))
}

fn banzhaf_axioms(_: Fault) -> Result<(bool, String)> {
    let mut r = rng(6);
    for n in SIZES {
        if !check_linearity(banzhaf_exact, &mut r, n, GAMES_PER_SIZE / 10)? {
            return Ok((false, format!("linearity violated at n = {n}")));
        }
    }
    let v = unanimity_game(CoalitionId::grand(3)?, 1.0, 3)?;
    let phi = banzhaf_exact(&v)?;
    let efficient = check_efficiency(&v, &phi);
    Ok((
        !efficient,
        format!("unanimity game on 3 agents: total {:.4} vs v(N) = 1", phi.total()),
    ))
}

fn rescaled_basis(_: Fault) -> Result<(bool, String)> {
    let mut r = rng(7);
    let mut worst = 0.0f64;
    for k in 0..200 {
        let v = random_game(&mut r, 1 + k % 6);
        let back = reconstruct_in_basis(&lemma1_rescale(&v)?, v.grand_value())?;
        for (a, b) in v.values().iter().zip(back.values()) {
            worst = worst.max((a - b).abs());
        }
    }
    Ok((worst < tolerance::RESCALE, format!("max error {worst:.2e}")))
}

fn weights_normalised(_: Fault) -> Result<(bool, String)> {
    let mut worst = 0.0f64;
    for l in 1..10 {
        for m in 1..=64 {
            let w = ttd_weights(&ReturnConfig::new(0.99, l as f64 / 10.0, m)?)?;
            worst = worst.max((w.iter().sum::<f64>() - 1.0).abs());
        }
    }
    Ok((worst < tolerance::EXACT, format!("max |sum - 1| {worst:.2e}")))
}

fn random_lane(r: &mut ChaCha8Rng, len: usize, terminal: bool) -> (Vec<f64>, Vec<f64>) {
    let rewards = (0..len).map(|_| r.gen_range(-1.0..1.0)).collect();
    let mut values: Vec<f64> = (0..=len).map(|_| r.gen_range(-2.0..2.0)).collect();
    if terminal {
        values[len] = 0.0;
    }
    (rewards, values)
}

fn truncated_matches_full(_: Fault) -> Result<(bool, String)> {
    let mut r = rng(8);
    let mut worst = 0.0f64;
    for k in 0..200 {
        let len = 1 + k % 30;
        let (rw, v) = random_lane(&mut r, len, k % 2 == 0);
        let lane = Lane::new(&rw, &v)?;
        let lambda = r.gen_range(0.05..0.95);
        let full = lane.lambda_returns(0.97, lambda);
        for (t, f) in full.iter().enumerate() {
            let y = lane.ttd(t, &ReturnConfig::new(0.97, lambda, len - t)?)?;
            worst = worst.max((y - f).abs());
        }
    }
    Ok((worst < tolerance::RETURNS, format!("max difference {worst:.2e}")))
}

fn gae_matches_definition(_: Fault) -> Result<(bool, String)> {
    let mut r = rng(9);
    let mut worst = 0.0f64;
    for k in 0..200 {
        let len = 1 + k % 30;
        let (rw, v) = random_lane(&mut r, len, k % 3 == 0);
        let lane = Lane::new(&rw, &v)?;
        let (g, l) = (0.95, r.gen_range(0.0..1.0));
        let fast = lane.gae(g, l);
        let delta = lane.td_errors(g);
        for (t, f) in fast.iter().enumerate() {
            let slow: f64 = (t..len).map(|u| (g * l).powi((u - t) as i32) * delta[u]).sum();
            worst = worst.max((slow - f).abs());
        }
    }
    Ok((worst < tolerance::RETURNS, format!("max difference {worst:.2e}")))
}

fn small_lambda_is_one_step(_: Fault) -> Result<(bool, String)> {
    let mut r = rng(10);
    let mut worst = 0.0f64;
    for k in 0..100 {
        let len = 2 + k % 20;
        let (rw, v) = random_lane(&mut r, len, false);
        let lane = Lane::new(&rw, &v)?;
        let cfg = ReturnConfig::new(0.9, 1e-12, 7)?;
        for t in 0..len {
            worst = worst.max((lane.ttd(t, &cfg)? - lane.nstep(t, 1, 0.9)?).abs());
        }
    }
    Ok((worst < tolerance::RETURNS, format!("max difference {worst:.2e}")))
}

fn coalition_horizons(_: Fault) -> Result<(bool, String)> {
    for n in 1..=8 {
        if coalition_return_map(n, usize::MAX)?.len() != (1 << n) - 1 {
            return Ok((false, format!("wrong count at n = {n}")));
        }
    }
    let h: Vec<usize> = coalition_return_map(3, 7)?.entries.iter().map(|e| e.horizon).collect();
    Ok((h == [1, 1, 1, 2, 2, 2, 3], format!("3-agent horizons {h:?}")))
}

fn nonnegative_dividends_superadditive(_: Fault) -> Result<(bool, String)> {
    let mut r = rng(11);
    let mut failures = 0;
    for k in 0..1000 {
        let n = 1 + k % 5;
        let coeffs = (1..1usize << n).map(|_| r.gen_range(0.0..1.0)).collect();
        if !is_superadditive(&reconstruct_game(&BasisCoefficients::new(n, coeffs)?)?) {
            failures += 1;
        }
    }
    Ok((failures == 0, format!("{failures} of 1000 not superadditive")))
}

fn converse_search(_: Fault) -> Result<(bool, String)> {
    let mut r = rng(12);
    for n in 3..=5 {
        if let Some(hit) = search_negative_dividend(&mut r, n, 2000)? {
            let members: Vec<usize> = hit.coalition.members().collect();
            return Ok((
                true,
                format!(
                    "counterexample found: superadditive game on {n} agents with k{members:?} = {:.4} after {} draws",
                    hit.dividend, hit.trials
                ),
            ));
        }
    }
    Ok((true, "no counterexample within budget".into()))
}

const CHECKS: [(&str, Check); 14] = [
    ("mobius_round_trip", mobius_round_trip),
    ("shapley_vs_permutations", shapley_vs_permutations),
    ("shapley_efficiency", shapley_efficiency),
    ("shapley_symmetry", shapley_symmetry),
    ("shapley_linearity", shapley_linearity),
    ("banzhaf_linear_not_efficient", banzhaf_axioms),
    ("rescaled_basis_round_trip", rescaled_basis),
    ("ttd_weights_sum_to_one", weights_normalised),
    ("ttd_full_horizon_is_lambda_return", truncated_matches_full),
    ("gae_recursion", gae_matches_definition),
    ("small_lambda_one_step", small_lambda_is_one_step),
    ("coalition_horizons", coalition_horizons),
    ("nonnegative_dividends_superadditive", nonnegative_dividends_superadditive),
    ("superadditive_negative_dividend_search", converse_search),
];

/// Runs every property in order; once `budget` is spent the rest are
/// reported as skipped.
pub fn run(fault: Fault, budget: Option<Duration>) -> Report {
    let start = Instant::now();
    let mut report = Report::default();
    for (name, check) in CHECKS {
        if budget.is_some_and(|b| start.elapsed() > b) {
            report.rows.push(PropertyRow {
                name,
                passed: None,
                detail: "time budget exhausted".into(),
                seconds: 0.0,
            });
            continue;
        }
        let t = Instant::now();
        let (passed, detail) = match check(fault) {
            Ok((p, d)) => (p, d),
            Err(e) => (false, format!("error: {e}")),
        };
        report.rows.push(PropertyRow {
            name,
            passed: Some(passed),
            detail,
            seconds: t.elapsed().as_secs_f64(),
        });
    }
    report
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn corrupted_weights_break_efficiency() {
        let (ok, _) = shapley_efficiency(Fault::CorruptShapleyWeights).unwrap();
        assert!(!ok);
        let (ok, _) = shapley_efficiency(Fault::None).unwrap();
        assert!(ok);
    }

    #[test]
    fn zero_budget_skips_everything() {
        let r = run(Fault::None, Some(Duration::ZERO));
        assert!(r.rows.iter().all(|row| row.passed.is_none()));
        assert!(!r.all_passed());
        assert!(r.table().contains("skipped"));
    }
}
