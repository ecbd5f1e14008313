use std::fmt;

use rand::seq::index;
use rand::Rng;
use serde::{Deserialize, Serialize};

use super::{Action, Heuristic, Step};
use crate::error::{Error, Result};

/// Own position (2) + 4 teammate slots (3 each) + evader (3) + 2 obstacles (3 each).
pub const OBS_DIM: usize = 2 + MAX_TEAMMATES * 3 + 3 + MAX_OBSTACLES * 3;
const MAX_TEAMMATES: usize = 4;
const MAX_OBSTACLES: usize = 2;
const EVADER_SLOT: usize = 2 + MAX_TEAMMATES * 3;
const OBSTACLE_SLOT: usize = EVADER_SLOT + 3;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Cell {
    pub x: i32,
    pub y: i32,
}

impl Cell {
    pub const fn new(x: i32, y: i32) -> Self {
        Self { x, y }
    }

    pub fn offset(self, a: Action) -> Cell {
        let (dx, dy) = a.delta();
        Cell::new(self.x + dx, self.y + dy)
    }

    pub fn chebyshev(self, o: Cell) -> i32 {
        (self.x - o.x).abs().max((self.y - o.y).abs())
    }

    pub fn manhattan(self, o: Cell) -> i32 {
        (self.x - o.x).abs() + (self.y - o.y).abs()
    }
}

impl fmt::Display for Cell {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{},{}", self.x, self.y)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PursuitConfig {
    pub n_agents: usize,
    pub grid_size: i32,
    /// Chebyshev visibility radius.
    pub radius: i32,
    pub episode_limit: usize,
    pub obstacles: Vec<Cell>,
}

impl Default for PursuitConfig {
    fn default() -> Self {
        Self {
            n_agents: 3,
            grid_size: 7,
            radius: 3,
            episode_limit: 100,
            obstacles: vec![Cell::new(2, 4), Cell::new(4, 2)],
        }
    }
}

impl PursuitConfig {
    pub fn validate(&self) -> Result<()> {
        if !(2..=MAX_TEAMMATES + 1).contains(&self.n_agents) {
            return Err(Error::Config(format!("pursuit needs 2..=5 agents, got {}", self.n_agents)));
        }
        if self.grid_size < 2 || self.radius < 1 || self.episode_limit == 0 {
            return Err(Error::Config(format!(
                "grid_size >= 2, radius >= 1 and episode_limit >= 1 required: {self:?}"
            )));
        }
        if self.obstacles.len() > MAX_OBSTACLES {
            return Err(Error::Config(format!("at most {MAX_OBSTACLES} obstacles")));
        }
        if let Some(c) = self.obstacles.iter().find(|c| !self.in_bounds(**c)) {
            return Err(Error::Config(format!("obstacle {c} lies outside the grid")));
        }
        let free = (self.grid_size * self.grid_size) as usize - self.obstacles.len();
        if free < self.n_agents + 1 {
            return Err(Error::Config(format!(
                "{free} free cells cannot hold {} pursuers and the evader",
                self.n_agents
            )));
        }
        Ok(())
    }

    pub fn in_bounds(&self, c: Cell) -> bool {
        (0..self.grid_size).contains(&c.x) && (0..self.grid_size).contains(&c.y)
    }

    fn free_cells(&self) -> Vec<Cell> {
        let mut out = Vec::new();
        for y in 0..self.grid_size {
            for x in 0..self.grid_size {
                let c = Cell::new(x, y);
                if !self.obstacles.contains(&c) {
                    out.push(c);
                }
            }
        }
        out
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct PursuitState {
    pub pursuers: Vec<Cell>,
    pub evader: Cell,
    pub obstacles: Vec<Cell>,
    pub step_count: usize,
}

impl fmt::Display for PursuitState {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let list = |cells: &[Cell]| cells.iter().map(Cell::to_string).collect::<Vec<_>>().join(";");
        write!(
            f,
            "t={} p={} e={} o={}",
            self.step_count,
            list(&self.pursuers),
            self.evader,
            list(&self.obstacles)
        )
    }
}

#[derive(Clone, Debug)]
pub struct PursuitEnv {
    config: PursuitConfig,
    state: PursuitState,
    done: bool,
}

impl PursuitEnv {
    pub fn new(config: PursuitConfig) -> Result<Self> {
        config.validate()?;
        let state = PursuitState {
            pursuers: vec![Cell::new(0, 0); config.n_agents],
            evader: Cell::new(0, 0),
            obstacles: config.obstacles.clone(),
            step_count: 0,
        };
        Ok(Self {
            config,
            state,
            done: true,
        })
    }

    pub fn config(&self) -> &PursuitConfig {
        &self.config
    }

    pub fn state(&self) -> &PursuitState {
        &self.state
    }

    pub fn is_done(&self) -> bool {
        self.done
    }

    /// Places pursuers and the evader on distinct free cells, uniformly.
    pub fn reset<R: Rng + ?Sized>(&mut self, rng: &mut R) -> Result<&PursuitState> {
        let free = self.config.free_cells();
        let picks = index::sample(rng, free.len(), self.config.n_agents + 1);
        let cells: Vec<Cell> = picks.iter().map(|i| free[i]).collect();
        self.state.pursuers = cells[..self.config.n_agents].to_vec();
        self.state.evader = cells[self.config.n_agents];
        self.state.step_count = 0;
        self.done = false;
        Ok(&self.state)
    }

    /// Starts an episode from an explicit state.
    pub fn set_state(&mut self, state: PursuitState) -> Result<()> {
        if state.pursuers.len() != self.config.n_agents || state.obstacles != self.config.obstacles {
            return Err(Error::invalid("state does not match the environment config"));
        }
        let cells = state.pursuers.iter().chain(std::iter::once(&state.evader));
        for c in cells {
            if !self.config.in_bounds(*c) || state.obstacles.contains(c) {
                return Err(Error::invalid(format!("entity placed on blocked cell {c}")));
            }
        }
        self.state = state;
        self.done = false;
        Ok(())
    }

    fn walkable(&self, c: Cell) -> bool {
        self.config.in_bounds(c) && !self.state.obstacles.contains(&c)
    }

    pub fn captured(&self) -> bool {
        let e = self.state.evader;
        self.state.pursuers.iter().filter(|p| p.manhattan(e) <= 1).count() >= 2
    }

    pub fn step<R: Rng + ?Sized>(&mut self, actions: &[Action], rng: &mut R) -> Result<Step> {
        if self.done {
            return Err(Error::EpisodeDone);
        }
        if actions.len() != self.config.n_agents {
            return Err(Error::DimensionMismatch {
                what: "joint action",
                expected: self.config.n_agents,
                got: actions.len(),
            });
        }
        for (i, a) in actions.iter().enumerate() {
            let next = self.state.pursuers[i].offset(*a);
            if self.walkable(next) {
                self.state.pursuers[i] = next;
            }
        }
        let evade = self.evader_action(rng);
        self.state.evader = self.state.evader.offset(evade);
        self.state.step_count += 1;

        let terminated = self.captured();
        let truncated = !terminated && self.state.step_count >= self.config.episode_limit;
        self.done = terminated || truncated;
        Ok(Step {
            reward: if terminated { 1.0 } else { 0.0 },
            terminated,
            truncated,
        })
    }

    /// Maximin flight: among legal moves (in bounds, off obstacles, off
    /// pursuer cells) pick one maximising the distance to the nearest pursuer
    /// within the visibility radius, Chebyshev first and Manhattan second.
    /// Ties are uniform.
    pub fn evader_action<R: Rng + ?Sized>(&self, rng: &mut R) -> Action {
        let e = self.state.evader;
        let visible: Vec<Cell> = self
            .state
            .pursuers
            .iter()
            .copied()
            .filter(|p| p.chebyshev(e) <= self.config.radius)
            .collect();
        let mut best = Vec::with_capacity(5);
        let mut best_score = (i32::MIN, i32::MIN);
        for a in Action::ALL {
            let c = e.offset(a);
            if !self.walkable(c) || self.state.pursuers.contains(&c) {
                continue;
            }
            let score = (
                visible.iter().map(|p| p.chebyshev(c)).min().unwrap_or(0),
                visible.iter().map(|p| p.manhattan(c)).min().unwrap_or(0),
            );
            if score > best_score {
                best_score = score;
                best.clear();
            }
            if score == best_score {
                best.push(a);
            }
        }
        match best.len() {
            0 => Action::Stay,
            1 => best[0],
            k => best[rng.gen_range(0..k)],
        }
    }

    fn rel(&self, from: Cell, to: Cell) -> [f64; 2] {
        let r = self.config.radius as f64;
        [(to.x - from.x) as f64 / r, (to.y - from.y) as f64 / r]
    }

    /// Own position scaled to [-1, 1], then teammates, evader and obstacles as
    /// `(dx / r, dy / r, visible)`; anything beyond the radius is all zeros
    /// unless `full` is set. Entries within the radius lie in [-1, 1].
    pub fn observe(&self, agent: usize, full: bool) -> Vec<f64> {
        let mut o = vec![0.0; OBS_DIM];
        let me = self.state.pursuers[agent];
        let span = (self.config.grid_size - 1).max(1) as f64;
        o[0] = 2.0 * me.x as f64 / span - 1.0;
        o[1] = 2.0 * me.y as f64 / span - 1.0;
        let seen = |c: Cell| full || me.chebyshev(c) <= self.config.radius;
        let put = |o: &mut Vec<f64>, slot: usize, c: Cell| {
            if seen(c) {
                let [dx, dy] = self.rel(me, c);
                o[slot] = dx;
                o[slot + 1] = dy;
                o[slot + 2] = 1.0;
            }
        };
        let mates = (0..self.config.n_agents).filter(|&j| j != agent);
        for (k, j) in mates.enumerate() {
            put(&mut o, 2 + 3 * k, self.state.pursuers[j]);
        }
        put(&mut o, EVADER_SLOT, self.state.evader);
        for (k, c) in self.state.obstacles.iter().enumerate() {
            put(&mut o, OBSTACLE_SLOT + 3 * k, *c);
        }
        o
    }

    /// Scripted move computed from one observation vector only.
    pub fn heuristic_action<R: Rng + ?Sized>(&self, obs: &[f64], h: Heuristic, rng: &mut R) -> Action {
        let view = ObsView::decode(obs, &self.config);
        let Some(evader) = view.evader else {
            return Action::ALL[rng.gen_range(0..Action::ALL.len())];
        };
        let target = match h {
            Heuristic::Chase => evader,
            Heuristic::Flank => match view.mates.iter().min_by_key(|m| (m.chebyshev(evader), m.manhattan(evader))) {
                Some(m) => {
                    let c = Cell::new(
                        evader.x + (evader.x - m.x).signum(),
                        evader.y + (evader.y - m.y).signum(),
                    );
                    let g = self.config.grid_size - 1;
                    let c = Cell::new(c.x.clamp(0, g), c.y.clamp(0, g));
                    if c == evader || view.obstacles.contains(&c) {
                        evader
                    } else {
                        c
                    }
                }
                None => evader,
            },
        };
        let mut best = Vec::with_capacity(5);
        let mut best_score = (i32::MAX, i32::MAX);
        for a in Action::ALL {
            let mut c = view.me.offset(a);
            if !self.config.in_bounds(c) || view.obstacles.contains(&c) {
                c = view.me;
            }
            let score = (c.chebyshev(target), c.manhattan(target));
            if score < best_score {
                best_score = score;
                best.clear();
            }
            if score == best_score {
                best.push(a);
            }
        }
        if best.len() == 1 {
            best[0]
        } else {
            best[rng.gen_range(0..best.len())]
        }
    }
}

/// Grid quantities recovered from an observation vector.
struct ObsView {
    me: Cell,
    mates: Vec<Cell>,
    evader: Option<Cell>,
    obstacles: Vec<Cell>,
}

impl ObsView {
    fn decode(o: &[f64], cfg: &PursuitConfig) -> Self {
        let span = (cfg.grid_size - 1).max(1) as f64;
        let r = cfg.radius as f64;
        let me = Cell::new(
            ((o[0] + 1.0) / 2.0 * span).round() as i32,
            ((o[1] + 1.0) / 2.0 * span).round() as i32,
        );
        let at = |slot: usize| {
            (o[slot + 2] > 0.5).then(|| {
                Cell::new(
                    me.x + (o[slot] * r).round() as i32,
                    me.y + (o[slot + 1] * r).round() as i32,
                )
            })
        };
        Self {
            me,
            mates: (0..MAX_TEAMMATES).filter_map(|k| at(2 + 3 * k)).collect(),
            evader: at(EVADER_SLOT),
            obstacles: (0..MAX_OBSTACLES).filter_map(|k| at(OBSTACLE_SLOT + 3 * k)).collect(),
        }
    }
}
