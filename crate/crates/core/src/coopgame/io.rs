//! Plain-text game files.
//!
//! ```text
//! n_agents=2
//! 1 2.5000000000000000e-1
//! 2 5.0000000000000000e-1
//! 3 1.0000000000000000e0
//! ```
//!
//! One line per non-empty coalition in ascending bitmask order. Values carry
//! 17 significant digits so that parse followed by write reproduces the file
//! byte for byte.

use std::fmt::Write as _;
use std::path::Path;

use super::coalition::MAX_AGENTS;
use super::game::CharacteristicGame;
use crate::error::{Error, Result};

pub fn write_game(v: &CharacteristicGame) -> String {
    let mut out = format!("n_agents={}\n", v.n_agents());
    for bits in 1..=v.grand_mask() {
        writeln!(out, "{bits} {:.16e}", v.value_of_bits(bits)).expect("writing to a String");
    }
    out
}

pub fn parse_game(text: &str) -> Result<CharacteristicGame> {
    let mut lines = text.lines().enumerate().map(|(i, l)| (i + 1, l));
    let (line_no, header) = lines.next().ok_or(Error::Parse {
        line: 1,
        message: "empty game file".into(),
    })?;
    let n: usize = header
        .trim()
        .strip_prefix("n_agents=")
        .and_then(|s| s.parse().ok())
        .filter(|&n| (1..=MAX_AGENTS).contains(&n))
        .ok_or_else(|| Error::Parse {
            line: line_no,
            message: format!("expected `n_agents=<1..={MAX_AGENTS}>`, found `{header}`"),
        })?;

    let mut values = vec![0.0; 1 << n];
    let mut expected = 1usize;
    for (line_no, line) in lines {
        if line.trim().is_empty() {
            continue;
        }
        let parse_err = |message: String| Error::Parse {
            line: line_no,
            message,
        };
        let mut fields = line.split_whitespace();
        let (Some(mask), Some(value), None) = (fields.next(), fields.next(), fields.next()) else {
            return Err(parse_err(format!("expected `bitmask value`, found `{line}`")));
        };
        let mask: usize = mask
            .parse()
            .map_err(|_| parse_err(format!("bad bitmask `{mask}`")))?;
        if mask != expected {
            return Err(parse_err(format!(
                "expected bitmask {expected}, found {mask} (ascending order, no gaps)"
            )));
        }
        let value: f64 = value
            .parse()
            .map_err(|_| parse_err(format!("bad value `{value}`")))?;
        if !value.is_finite() || value < 0.0 {
            return Err(parse_err(format!("value {value} must be finite and nonnegative")));
        }
        values[mask] = value;
        expected += 1;
    }
    if expected != 1 << n {
        return Err(Error::Parse {
            line: text.lines().count(),
            message: format!("expected {} coalitions, found {}", (1 << n) - 1, expected - 1),
        });
    }
    CharacteristicGame::new(n, values)
}

pub fn read_game_file(path: &Path) -> Result<CharacteristicGame> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_game(&text)
}

pub fn write_game_file(path: &Path, v: &CharacteristicGame) -> Result<()> {
    std::fs::write(path, write_game(v)).map_err(|e| Error::io(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::coopgame::random_game;
    use proptest::prelude::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn documented_example_parses() {
        let text = "n_agents=2\n1 2.5000000000000000e-1\n2 5.0000000000000000e-1\n3 1.0000000000000000e0\n";
        let v = parse_game(text).unwrap();
        assert_eq!(v.values(), &[0.0, 0.25, 0.5, 1.0]);
        assert_eq!(write_game(&v), text);
    }

    #[test]
    fn errors_are_line_anchored() {
        let err = parse_game("n_agents=2\n1 0.5\n3 1.0\n").unwrap_err();
        assert!(matches!(err, Error::Parse { line: 3, .. }), "{err}");
        let err = parse_game("agents=2\n").unwrap_err();
        assert!(matches!(err, Error::Parse { line: 1, .. }));
        let err = parse_game("n_agents=2\n1 0.5\n2 -1\n3 1\n").unwrap_err();
        assert!(matches!(err, Error::Parse { line: 3, .. }));
        assert!(parse_game("n_agents=2\n1 0.5\n").is_err());
    }

    proptest! {
        #[test]
        fn write_parse_write_is_bit_exact(seed in any::<u64>(), n in 1usize..6) {
            let v = random_game(&mut ChaCha8Rng::seed_from_u64(seed), n);
            let text = write_game(&v);
            let back = parse_game(&text).unwrap();
            prop_assert_eq!(&back, &v);
            prop_assert_eq!(write_game(&back), text);
        }
    }
}
