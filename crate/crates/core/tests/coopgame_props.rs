use proptest::prelude::*;
use shapley_machine::coopgame::{
    banzhaf_exact, check_efficiency, check_symmetry, io, is_superadditive, lemma1_rescale, mobius_coefficients,
    oracle, reconstruct_game, reconstruct_in_basis, shapley_exact, shapley_from_dividends, superadditive_cover,
    CharacteristicGame,
};

fn game(max_n: usize) -> impl Strategy<Value = CharacteristicGame> {
    (1..=max_n).prop_flat_map(|n| {
        prop::collection::vec(0.0..10.0f64, (1 << n) - 1).prop_map(move |rest| {
            let mut v = vec![0.0];
            v.extend(rest);
            CharacteristicGame::new(n, v).unwrap()
        })
    })
}

fn close(a: &[f64], b: &[f64], tol: f64) -> bool {
    a.len() == b.len() && a.iter().zip(b).all(|(x, y)| (x - y).abs() <= tol * (1.0 + x.abs()))
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(256))]

    #[test]
    fn mobius_round_trip(v in game(7)) {
        let back = reconstruct_game(&mobius_coefficients(&v)).unwrap();
        prop_assert!(close(v.values(), back.values(), 1e-12));
    }

    #[test]
    fn shapley_closed_form_matches_dividends_and_permutations(v in game(6)) {
        let phi = shapley_exact(&v).unwrap();
        prop_assert!(phi.max_abs_diff(&shapley_from_dividends(&v).unwrap()) < 1e-9);
        prop_assert!(phi.max_abs_diff(&oracle::shapley_by_permutations(&v)) < 1e-9);
        prop_assert!(check_efficiency(&v, &phi));
    }

    #[test]
    fn symmetrised_games_get_equal_shares(v in game(6), i in 0usize..6, j in 0usize..6) {
        let n = v.n_agents();
        let (i, j) = (i % n, j % n);
        let sym = v.combine(0.5, &v.permute_agents(i, j), 0.5).unwrap();
        prop_assert!(check_symmetry(&sym, &shapley_exact(&sym).unwrap()));
        let phi = shapley_exact(&sym).unwrap();
        prop_assert!((phi[i] - phi[j]).abs() < 1e-9);
    }

    #[test]
    fn banzhaf_matches_enumeration(v in game(6)) {
        let b = banzhaf_exact(&v).unwrap();
        prop_assert!(b.max_abs_diff(&oracle::banzhaf_by_enumeration(&v)) < 1e-9);
    }

    #[test]
    fn additive_games_pay_their_weights(w in prop::collection::vec(0.0..5.0f64, 1..7)) {
        let v = CharacteristicGame::additive(&w).unwrap();
        prop_assert!(close(shapley_exact(&v).unwrap().as_slice(), &w, 1e-12));
        prop_assert!(close(banzhaf_exact(&v).unwrap().as_slice(), &w, 1e-12));
    }

    #[test]
    fn rescaled_basis_round_trip(v in game(6)) {
        prop_assume!(v.grand_value() > 0.0);
        let back = reconstruct_in_basis(&lemma1_rescale(&v).unwrap(), v.grand_value()).unwrap();
        prop_assert!(close(v.values(), back.values(), 1e-10));
    }

    #[test]
    fn cover_dominates_and_is_superadditive(v in game(5)) {
        let c = superadditive_cover(&v).unwrap();
        prop_assert!(is_superadditive(&c));
        prop_assert!(v.values().iter().zip(c.values()).all(|(a, b)| *b >= *a - 1e-12));
        prop_assert!(close(superadditive_cover(&c).unwrap().values(), c.values(), 1e-12));
    }

    #[test]
    fn text_format_round_trip(v in game(5)) {
        let back = io::parse_game(&io::write_game(&v)).unwrap();
        prop_assert_eq!(back.values(), v.values());
    }
}
