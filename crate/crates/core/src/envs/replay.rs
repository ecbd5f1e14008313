//! Episode replay logs: one text line per environment step.
//!
//! ```text
//! t=0 p=1,2;3,4;0,0 e=5,5 o=2,4;4,2 | a=1,0,4 r=0 done=0
//! ```
//!
//! The part before `|` is the state snapshot after the step; the part after
//! holds the joint action, the common reward and the done flag. Lines that
//! start with `#` are comments.

use std::fmt;

use super::pursuit::{Cell, PursuitState};
use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq)]
pub struct ReplayLine {
    pub snapshot: String,
    pub actions: Vec<usize>,
    pub reward: f64,
    pub done: bool,
}

impl fmt::Display for ReplayLine {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let actions: Vec<String> = self.actions.iter().map(usize::to_string).collect();
        write!(
            f,
            "{} | a={} r={} done={}",
            self.snapshot,
            actions.join(","),
            self.reward,
            u8::from(self.done)
        )
    }
}

pub fn parse_line(line_no: usize, line: &str) -> Result<ReplayLine> {
    let err = |message: String| Error::Parse { line: line_no, message };
    let (snapshot, rest) = line
        .split_once(" | ")
        .ok_or_else(|| err(format!("missing ` | ` separator in `{line}`")))?;
    let mut actions = None;
    let mut reward = None;
    let mut done = None;
    for field in rest.split_whitespace() {
        match field.split_once('=') {
            Some(("a", v)) => {
                let parsed: std::result::Result<Vec<usize>, _> = v.split(',').map(str::parse).collect();
                actions = Some(parsed.map_err(|_| err(format!("bad action list `{v}`")))?);
            }
            Some(("r", v)) => reward = Some(v.parse::<f64>().map_err(|_| err(format!("bad reward `{v}`")))?),
            Some(("done", v)) => {
                done = Some(match v {
                    "0" => false,
                    "1" => true,
                    _ => return Err(err(format!("bad done flag `{v}`"))),
                })
            }
            _ => return Err(err(format!("unknown field `{field}`"))),
        }
    }
    Ok(ReplayLine {
        snapshot: snapshot.to_string(),
        actions: actions.ok_or_else(|| err("missing a=".into()))?,
        reward: reward.ok_or_else(|| err("missing r=".into()))?,
        done: done.ok_or_else(|| err("missing done=".into()))?,
    })
}

pub fn parse_log(text: &str) -> Result<Vec<ReplayLine>> {
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty() && !l.starts_with('#'))
        .map(|(i, l)| parse_line(i + 1, l))
        .collect()
}

fn parse_cell(s: &str) -> Option<Cell> {
    let (x, y) = s.split_once(',')?;
    Some(Cell::new(x.parse().ok()?, y.parse().ok()?))
}

fn parse_cells(s: &str) -> Option<Vec<Cell>> {
    if s.is_empty() {
        return Some(Vec::new());
    }
    s.split(';').map(parse_cell).collect()
}

/// Inverse of the pursuit state's `Display`.
pub fn parse_pursuit_snapshot(s: &str) -> Option<PursuitState> {
    let mut step_count = None;
    let mut pursuers = None;
    let mut evader = None;
    let mut obstacles = None;
    for field in s.split_whitespace() {
        match field.split_once('=')? {
            ("t", v) => step_count = v.parse().ok(),
            ("p", v) => pursuers = parse_cells(v),
            ("e", v) => evader = parse_cell(v),
            ("o", v) => obstacles = parse_cells(v),
            _ => return None,
        }
    }
    Some(PursuitState {
        pursuers: pursuers?,
        evader: evader?,
        obstacles: obstacles?,
        step_count: step_count?,
    })
}

/// Text picture of a pursuit state, top row first. `P` pursuer (or a digit
/// when several share a cell), `E` evader, `*` evader with a pursuer on it,
/// `#` obstacle.
pub fn render_grid(state: &PursuitState, grid_size: i32) -> String {
    let mut out = String::new();
    for y in (0..grid_size).rev() {
        for x in 0..grid_size {
            let c = Cell::new(x, y);
            let n = state.pursuers.iter().filter(|p| **p == c).count();
            let ch = if state.obstacles.contains(&c) {
                '#'
            } else if state.evader == c {
                if n > 0 {
                    '*'
                } else {
                    'E'
                }
            } else {
                match n {
                    0 => '.',
                    1 => 'P',
                    k => char::from_digit(k as u32, 10).unwrap_or('+'),
                }
            };
            out.push(ch);
        }
        out.push('\n');
    }
    out
}
