//! Sampling checks on the pursuit grid, team sampling and scripted teammates.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use shapley_machine::envs::{Action, Cell, Env, EnvConfig, PursuitConfig, PursuitEnv, PursuitState, N_ACTIONS};
use shapley_machine::teammates::{default_pool, sample_team, PolicyKind, UncontrolledPolicy};
use statrs::distribution::{ChiSquared, ContinuousCDF};

/// Upper-tail p-value of Pearson's statistic against equal expected counts.
fn chi_square_p(counts: &[u64]) -> f64 {
    let total: u64 = counts.iter().sum();
    let expected = total as f64 / counts.len() as f64;
    let stat: f64 = counts.iter().map(|&c| (c as f64 - expected).powi(2) / expected).sum();
    let dist = ChiSquared::new((counts.len() - 1) as f64).unwrap();
    1.0 - dist.cdf(stat)
}

fn free_cells(cfg: &PursuitConfig) -> Vec<Cell> {
    (0..cfg.grid_size)
        .flat_map(|y| (0..cfg.grid_size).map(move |x| Cell::new(x, y)))
        .filter(|c| !cfg.obstacles.contains(c))
        .collect()
}

#[test]
fn reset_occupancy_is_uniform_over_free_cells() {
    let cfg = PursuitConfig::default();
    let free = free_cells(&cfg);
    let mut env = PursuitEnv::new(cfg).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(17);
    let mut all = vec![0u64; free.len()];
    let mut evader = vec![0u64; free.len()];
    for _ in 0..1000 {
        let s = env.reset(&mut rng).unwrap().clone();
        for c in s.pursuers.iter().chain(std::iter::once(&s.evader)) {
            all[free.iter().position(|f| f == c).expect("entity on a free cell")] += 1;
        }
        evader[free.iter().position(|f| *f == s.evader).unwrap()] += 1;
    }
    assert!(chi_square_p(&all) > 1e-3, "pooled occupancy p = {}", chi_square_p(&all));
    assert!(chi_square_p(&evader) > 1e-3, "evader occupancy p = {}", chi_square_p(&evader));
}

#[test]
fn uncontrolled_count_is_uniform() {
    let pool = default_pool();
    let mut rng = ChaCha8Rng::seed_from_u64(18);
    for n in [3usize, 5] {
        let mut counts = vec![0u64; n - 1];
        let mut groups = vec![0u64; pool.len()];
        for _ in 0..10_000 {
            let team = sample_team(&mut rng, n, &pool).unwrap();
            counts[team.n_uncontrolled() - 1] += 1;
            let g: Vec<usize> = team.uncontrolled.values().copied().collect();
            assert!(g.windows(2).all(|w| w[0] == w[1]), "one group per team");
            groups[g[0]] += 1;
        }
        assert!(chi_square_p(&counts) > 1e-3, "n = {n}: {counts:?}");
        assert!(chi_square_p(&groups) > 1e-3, "n = {n}: {groups:?}");
    }
}

fn pursuit_env() -> Env {
    EnvConfig::Pursuit(PursuitConfig::default()).build().unwrap()
}

#[test]
fn random_teammate_actions_are_uniform() {
    let mut env = pursuit_env();
    let mut rng = ChaCha8Rng::seed_from_u64(19);
    env.reset(&mut rng).unwrap();
    let obs = env.observe(0, false);
    let policy = UncontrolledPolicy::new(PolicyKind::Random);
    let mut counts = [0u64; N_ACTIONS];
    for _ in 0..10_000 {
        counts[policy.act(&env, &obs, &mut rng).index()] += 1;
    }
    assert!(chi_square_p(&counts) > 1e-3, "{counts:?}");
}

fn random_state(rng: &mut ChaCha8Rng, cfg: &PursuitConfig) -> PursuitState {
    let free = free_cells(cfg);
    let picks = rand::seq::index::sample(rng, free.len(), cfg.n_agents + 1);
    PursuitState {
        pursuers: picks.iter().take(cfg.n_agents).map(|i| free[i]).collect(),
        evader: free[picks.index(cfg.n_agents)],
        obstacles: cfg.obstacles.clone(),
        step_count: rng.gen_range(0..cfg.episode_limit),
    }
}

fn in_free_cell(cfg: &PursuitConfig, c: Cell) -> bool {
    cfg.in_bounds(c) && !cfg.obstacles.contains(&c)
}

#[test]
fn every_teammate_kind_acts_legally_from_random_states() {
    let cfg = PursuitConfig::default();
    let kinds = [
        UncontrolledPolicy::new(PolicyKind::GreedyChase),
        UncontrolledPolicy::new(PolicyKind::Flanker),
        UncontrolledPolicy::new(PolicyKind::Random),
        UncontrolledPolicy::new(PolicyKind::Lazy),
        UncontrolledPolicy::new(PolicyKind::NoisyGreedy).with_noise(0.3),
    ];
    let mut rng = ChaCha8Rng::seed_from_u64(20);
    let mut env = pursuit_env();
    for k in 0..100_000 {
        let state = random_state(&mut rng, &cfg);
        let Env::Pursuit(p) = &mut env else { unreachable!() };
        p.set_state(state).unwrap();
        let policy = &kinds[k % kinds.len()];
        let full = k % 2 == 0;
        let actions: Vec<Action> = (0..cfg.n_agents)
            .map(|i| policy.act(&env, &env.observe(i, full), &mut rng))
            .collect();
        assert!(actions.iter().all(|a| Action::from_index(a.index()) == Some(*a)));
        env.step(&actions, &mut rng).unwrap();
        let Env::Pursuit(p) = &env else { unreachable!() };
        let s = p.state();
        assert!(s.pursuers.iter().all(|c| in_free_cell(&cfg, *c)), "{s}");
        assert!(in_free_cell(&cfg, s.evader), "{s}");
    }
}

#[test]
fn evader_stays_on_the_grid_and_off_obstacles() {
    let cfg = PursuitConfig::default();
    let mut env = PursuitEnv::new(cfg.clone()).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(21);
    env.reset(&mut rng).unwrap();
    for _ in 0..10_000 {
        if env.is_done() {
            env.reset(&mut rng).unwrap();
        }
        let actions: Vec<Action> = (0..cfg.n_agents).map(|_| Action::ALL[rng.gen_range(0..N_ACTIONS)]).collect();
        env.step(&actions, &mut rng).unwrap();
        let e = env.state().evader;
        assert!(in_free_cell(&cfg, e), "evader at {e}");
    }
}
