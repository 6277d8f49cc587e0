use approx::assert_relative_eq;
use edm_raim::edm::{self, EigenOrdering};
use edm_raim::geometry::{
    generate_constellation, sample_pseudoranges, true_ranges, ConstellationParams, NoiseModel, ScenarioGeometry,
};
use edm_raim::montecarlo::{run_trials, TrialConfig};
use edm_raim::perturbation::{predict_q_distribution, PredictionConfig};
use nalgebra::DVector;
use proptest::prelude::*;

fn scenario() -> impl Strategy<Value = ScenarioGeometry> {
    (5usize..=14, any::<u64>()).prop_map(|(n_sats, seed)| {
        generate_constellation(&ConstellationParams { n_sats, seed, ..Default::default() }).unwrap()
    })
}

fn noise() -> impl Strategy<Value = NoiseModel> {
    (0.5f64..10.0, 1.0e4f64..1.0e6).prop_map(|(sigma_v, bias_b)| NoiseModel::new(sigma_v, bias_b, 0.0).unwrap())
}

fn noisy_gram(g: &ScenarioGeometry, nm: &NoiseModel, seed: u64) -> nalgebra::DMatrix<f64> {
    let s = sample_pseudoranges(&true_ranges(g), nm, seed);
    edm::centered_gram(&edm::satellite_edm(&g.satellite_matrix()), &s.rho).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn augmented_edm_is_valid(g in scenario(), nm in noise(), seed in any::<u64>()) {
        let s = sample_pseudoranges(&true_ranges(&g), &nm, seed);
        let d = edm::augment_edm(&edm::satellite_edm(&g.satellite_matrix()), &s.rho).unwrap();
        prop_assert!(d.is_valid());
        prop_assert_eq!(d.dim(), g.m() + 1);
        prop_assert_eq!(d.asymmetry(), 0.0);
    }

    #[test]
    fn centered_gram_annihilates_ones(g in scenario(), nm in noise(), seed in any::<u64>()) {
        let gc = noisy_gram(&g, &nm, seed);
        let ones = DVector::from_element(gc.nrows(), 1.0);
        let scale = gc.abs().max();
        prop_assert!((&gc * ones).amax() <= 1e-12 * scale * gc.nrows() as f64);
        prop_assert_eq!(&gc, &gc.transpose());
    }

    #[test]
    fn exact_ranges_have_rank_three(g in scenario()) {
        let d = true_ranges(&g);
        let gc = edm::centered_gram(&edm::satellite_edm(&g.satellite_matrix()), &d).unwrap();
        let spec = edm::spectrum(&gc, EigenOrdering::Magnitude).unwrap();
        prop_assert_eq!(spec.count_nonzero(1e-9), 3);
    }

    #[test]
    fn bias_and_noise_touch_only_two_more_dimensions(g in scenario(), nm in noise(), seed in any::<u64>()) {
        // the perturbation lives in row and column 0, so it has rank two
        let spec = edm::spectrum(&noisy_gram(&g, &nm, seed), EigenOrdering::Magnitude).unwrap();
        let n = spec.count_nonzero(1e-9);
        prop_assert!((3..=5).contains(&n), "{n} nonzero eigenvalues");
        prop_assert!(spec.lambda(4) > 0.0);
    }

    #[test]
    fn spectrum_ignores_satellite_order(g in scenario(), nm in noise(), seed in any::<u64>(), shift in 1usize..5) {
        let s = sample_pseudoranges(&true_ranges(&g), &nm, seed);
        let m = g.m();
        let perm: Vec<usize> = (0..m).map(|k| (k * (shift % (m - 1) + 1) + shift) % m).collect();
        let mut seen = perm.clone();
        seen.sort_unstable();
        prop_assume!(seen == (0..m).collect::<Vec<_>>());
        let gp = g.permuted(&perm).unwrap();
        let rho_p: Vec<f64> = perm.iter().map(|&k| s.rho[k]).collect();
        let a = edm::ordered_eigenvalues(
            &edm::centered_gram(&edm::satellite_edm(&g.satellite_matrix()), &s.rho).unwrap(),
            EigenOrdering::Magnitude,
        ).unwrap();
        let b = edm::ordered_eigenvalues(
            &edm::centered_gram(&edm::satellite_edm(&gp.satellite_matrix()), &rho_p).unwrap(),
            EigenOrdering::Magnitude,
        ).unwrap();
        for (x, y) in a.iter().zip(&b).take(5) {
            prop_assert!((x - y).abs() <= 1e-9 * a[0].abs(), "{x} vs {y}");
        }
    }

    #[test]
    fn statistic_is_scale_invariant(g in scenario(), seed in any::<u64>(), c in 0.25f64..4.0) {
        let nm = NoiseModel::default();
        let s = sample_pseudoranges(&true_ranges(&g), &nm, seed);
        let q = |geom: &ScenarioGeometry, rho: &[f64]| {
            let gc = edm::centered_gram(&edm::satellite_edm(&geom.satellite_matrix()), rho).unwrap();
            edm::statistic_from_eigenvalues(&edm::ordered_eigenvalues(&gc, EigenOrdering::Magnitude).unwrap()).unwrap()
        };
        let rho_c: Vec<f64> = s.rho.iter().map(|r| r * c).collect();
        let q0 = q(&g, &s.rho);
        let q1 = q(&g.scaled(c).unwrap(), &rho_c);
        prop_assert!((q0 - q1).abs() <= 1e-6 * q0.abs(), "{q0} vs {q1}");
    }

    #[test]
    fn predicted_spread_grows_with_noise(g in scenario(), k in 1.1f64..5.0) {
        let base = NoiseModel::default();
        let louder = NoiseModel { sigma_v: base.sigma_v * k, ..base };
        let cfg = PredictionConfig::default();
        let (a, b) = match (predict_q_distribution(&g, &base, &cfg), predict_q_distribution(&g, &louder, &cfg)) {
            (Ok(a), Ok(b)) => (a, b),
            _ => return Err(TestCaseError::reject("degenerate spectrum")),
        };
        prop_assert!(b.sigma_q > a.sigma_q);
        assert_relative_eq!(b.sigma_q / a.sigma_q, k, max_relative = 1e-9);
        assert_relative_eq!(b.mu_q, a.mu_q, max_relative = 1e-12);
        for (ea, eb) in a.eigenvalues.iter().zip(&b.eigenvalues) {
            prop_assert!(eb.std > ea.std);
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(8))]

    #[test]
    fn trials_are_seed_deterministic(g in scenario(), seed in any::<u64>()) {
        let cfg = TrialConfig::new(64, seed);
        let a = run_trials(&g, &NoiseModel::default(), &cfg).unwrap();
        let b = run_trials(&g, &NoiseModel::default(), &cfg).unwrap();
        prop_assert_eq!(a, b);
    }
}
