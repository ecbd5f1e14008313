use proptest::prelude::*;
use shapley_machine::returns::{
    coalition_return_map, gae, lambda_return_finite, nstep_return, ttd_error, ttd_target, ttd_weights,
    ReturnConfig, RewardSource, Trajectory,
};

fn lane() -> impl Strategy<Value = (Vec<f64>, Vec<f64>, bool)> {
    (1usize..40, any::<bool>()).prop_flat_map(|(len, terminal)| {
        (
            prop::collection::vec(-1.0..1.0f64, len),
            prop::collection::vec(-3.0..3.0f64, len + 1),
            Just(terminal),
        )
    })
}

fn trajectory((rewards, mut values, terminal): (Vec<f64>, Vec<f64>, bool)) -> Trajectory {
    let len = rewards.len();
    if terminal {
        values[len] = 0.0;
    }
    let mut dones = vec![false; len];
    dones[len - 1] = terminal;
    Trajectory::new(rewards, vec![values], dones).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(256))]

    #[test]
    fn weights_sum_to_one(lambda in 0.001..0.999f64, m in 1usize..300) {
        let w = ttd_weights(&ReturnConfig::new(0.99, lambda, m).unwrap()).unwrap();
        prop_assert_eq!(w.len(), m);
        prop_assert!((w.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        prop_assert!(w.iter().all(|x| *x >= 0.0));
    }

    #[test]
    fn full_horizon_truncation_is_the_lambda_return(l in lane(), gamma in 0.5..1.0f64, lambda in 0.01..0.99f64) {
        let traj = trajectory(l);
        for t in 0..traj.len() {
            let exact = ReturnConfig::new(gamma, lambda, traj.len() - t).unwrap();
            let longer = ReturnConfig::new(gamma, lambda, traj.len() + 5).unwrap();
            let full = lambda_return_finite(&traj, 0, t, &exact, RewardSource::Team).unwrap();
            prop_assert!((ttd_target(&traj, 0, t, &exact, RewardSource::Team).unwrap() - full).abs() < 1e-10);
            prop_assert!((ttd_target(&traj, 0, t, &longer, RewardSource::Team).unwrap() - full).abs() < 1e-10);
        }
    }

    #[test]
    fn gae_is_the_discounted_sum_of_td_errors(l in lane(), gamma in 0.5..1.0f64, lambda in 0.0..1.0f64) {
        let traj = trajectory(l);
        let cfg = ReturnConfig::new(gamma, lambda, 1).unwrap();
        let fast = gae(&traj, 0, &cfg, RewardSource::Team).unwrap();
        let (r, v) = (traj.rewards(), traj.values(0));
        for (t, f) in fast.iter().enumerate() {
            let slow: f64 = (t..traj.len())
                .map(|u| (gamma * lambda).powi((u - t) as i32) * (r[u] + gamma * v[u + 1] - v[u]))
                .sum();
            prop_assert!((slow - f).abs() < 1e-10);
        }
    }

    #[test]
    fn td_error_vanishes_on_exact_values(
        rewards in prop::collection::vec(-1.0..1.0f64, 1..30),
        tail in -2.0..2.0f64,
        terminal in any::<bool>(),
        gamma in 0.5..1.0f64,
        lambda in 0.01..0.99f64,
        m in 1usize..10,
    ) {
        let len = rewards.len();
        let mut values = vec![0.0; len + 1];
        values[len] = if terminal { 0.0 } else { tail };
        for t in (0..len).rev() {
            values[t] = rewards[t] + gamma * values[t + 1];
        }
        let mut dones = vec![false; len];
        dones[len - 1] = terminal;
        let traj = Trajectory::new(rewards, vec![values], dones).unwrap();
        let cfg = ReturnConfig::new(gamma, lambda, m).unwrap();
        for t in 0..len {
            prop_assert!(ttd_error(&traj, 0, t, &cfg, RewardSource::Team).unwrap().abs() < 1e-10);
        }
    }

    #[test]
    fn vanishing_lambda_is_the_one_step_return(l in lane(), gamma in 0.5..1.0f64, m in 1usize..10) {
        let traj = trajectory(l);
        let cfg = ReturnConfig::new(gamma, 1e-12, m).unwrap();
        for t in 0..traj.len() {
            let one = nstep_return(&traj, 0, t, 1, &cfg, RewardSource::Team).unwrap();
            prop_assert!((ttd_target(&traj, 0, t, &cfg, RewardSource::Team).unwrap() - one).abs() < 1e-10);
        }
    }

    #[test]
    fn coalition_blocks_cover_every_coalition(n in 1usize..10, m in 1usize..20) {
        let map = coalition_return_map(n, m).unwrap();
        prop_assert_eq!(map.len(), (1 << n) - 1);
        prop_assert!(map.entries.windows(2).all(|w| w[0].horizon <= w[1].horizon));
        prop_assert!(map.entries.iter().all(|e| e.horizon == e.coalition.len().min(m)));
        prop_assert_eq!(map.distinct_horizons(), n.min(m));
    }
}
