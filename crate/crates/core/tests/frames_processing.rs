use proptest::prelude::*;
use qtomo::frames::{alternate_dual, canonical_dual, verify_dual, Povm};
use qtomo::operator::{random_density, random_hermitian, random_operator, Operator};
use qtomo::processing::{
    coefficients_from_dual, estimate, kl_divergence, log_likelihood, optimal_dual, sample_multinomial, shannon_entropy,
    statistical_error, Counts, Ensemble,
};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

fn skewed_ensemble(d: usize, r: &mut ChaCha8Rng) -> Ensemble {
    let states = (0..3).map(|_| random_density(d, r)).collect();
    Ensemble::discrete(states, vec![0.6, 0.3, 0.1]).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn random_povms_are_valid_and_ic(seed in any::<u64>(), d in 2usize..4, extra in 0usize..4) {
        let povm = Povm::random_ic(d, d * d + extra, &mut rng(seed)).unwrap();
        let diag = povm.validate(1e-10);
        prop_assert!(diag.passed, "{diag:?}");
        prop_assert!(povm.is_info_complete(1e-10));
        let (lo, hi) = povm.frame_operator().bounds();
        prop_assert!(lo > 0.0 && lo <= hi);
    }

    #[test]
    fn duals_reconstruct_every_operator(seed in any::<u64>(), d in 2usize..4) {
        let mut r = rng(seed);
        let povm = Povm::random_ic(d, d * d + 2, &mut r).unwrap();
        let canonical = canonical_dual(&povm).unwrap();
        prop_assert!(verify_dual(&povm, &canonical, 1e-9));
        let y: Vec<Operator> = (0..povm.len()).map(|_| random_operator(d, d, &mut r)).collect();
        let alt = alternate_dual(&povm, &canonical, &y).unwrap();
        prop_assert!(verify_dual(&povm, &alt, 1e-9));

        let x = random_operator(d, d, &mut r);
        for dual in [&canonical, &alt] {
            let f = dual.coefficients(&x).unwrap();
            let mut acc = Operator::zeros(d, d);
            for (p, c) in povm.elements().iter().zip(&f) {
                acc += &p.scale(*c);
            }
            prop_assert!((&acc - &x).max_abs() < 1e-9);
        }
    }

    #[test]
    fn averaging_estimate_is_unbiased_at_exact_frequencies(seed in any::<u64>()) {
        let mut r = rng(seed);
        let povm = Povm::random_ic(2, 6, &mut r).unwrap();
        let rho = random_density(2, &mut r);
        let x = random_hermitian(2, &mut r);
        let f = coefficients_from_dual(&canonical_dual(&povm).unwrap(), &x).unwrap();
        let p = povm.probabilities(&rho).unwrap();
        let lhs: f64 = f.values.iter().zip(&p).map(|(f, p)| f.re * p).sum();
        prop_assert!((lhs - x.expectation(&rho).re).abs() < 1e-10);
        prop_assert!(f.unbiasedness_residual(&povm).unwrap() < 1e-10);
    }

    #[test]
    fn optimal_dual_never_loses(seed in any::<u64>(), d in 2usize..4) {
        let mut r = rng(seed);
        let povm = Povm::random_ic(d, d * d + 1, &mut r).unwrap();
        let ens = skewed_ensemble(d, &mut r);
        let canonical = canonical_dual(&povm).unwrap();
        let optimal = optimal_dual(&povm, &ens).unwrap();
        prop_assert!(verify_dual(&povm, &optimal, 1e-9));
        for _ in 0..4 {
            let x = random_hermitian(d, &mut r);
            let e_opt = statistical_error(&coefficients_from_dual(&optimal, &x).unwrap(), &povm, &ens).unwrap();
            let e_can = statistical_error(&coefficients_from_dual(&canonical, &x).unwrap(), &povm, &ens).unwrap();
            prop_assert!(e_opt <= e_can + 1e-10, "{e_opt} > {e_can}");
            prop_assert!(e_opt >= -1e-12);
        }
    }

    #[test]
    fn multinomial_counts_sum_to_shots(seed in any::<u64>(), n in 1u64..5000) {
        let mut r = rng(seed);
        let povm = Povm::random_ic(2, 5, &mut r).unwrap();
        let p = povm.probabilities(&random_density(2, &mut r)).unwrap();
        let c = sample_multinomial(&p, n, &mut r).unwrap();
        prop_assert_eq!(c.total(), n);
        prop_assert_eq!(c.len(), 5);
    }

    #[test]
    fn log_likelihood_gap_is_kl_divergence(seed in any::<u64>()) {
        let mut r = rng(seed);
        let povm = Povm::random_ic(2, 4, &mut r).unwrap();
        let nu = povm.probabilities(&random_density(2, &mut r)).unwrap();
        let rho = random_density(2, &mut r);
        let p = povm.probabilities(&rho).unwrap();
        let ll = log_likelihood(&povm, &nu, &rho);
        let kl = kl_divergence(&nu, &p).unwrap();
        prop_assert!((ll + shannon_entropy(&nu) + kl).abs() < 1e-10);
        prop_assert!(kl >= -1e-12);
    }

    #[test]
    fn counts_csv_roundtrip(counts in prop::collection::vec(0u64..1000, 1..12)) {
        let c = Counts::new(counts);
        let mut buf = Vec::new();
        c.write_csv(&mut buf).unwrap();
        prop_assert_eq!(Counts::read_csv(buf.as_slice(), Some(c.len())).unwrap(), c);
    }
}

#[test]
fn estimate_matches_frequency_sum() {
    let povm = Povm::pauli6();
    let x = qtomo::operator::pauli::z();
    let f = coefficients_from_dual(&canonical_dual(&povm).unwrap(), &x).unwrap();
    let counts = Counts::new(vec![10, 10, 10, 10, 30, 10]);
    let direct: f64 = f.values.iter().zip(counts.frequencies().unwrap()).map(|(f, v)| f.re * v).sum();
    assert!((estimate(&f, &counts).unwrap().re - direct).abs() < 1e-14);
    // 3·(ν_{z+} − ν_{z−}) = 3·(30 − 10)/80
    assert!((direct - 0.75).abs() < 1e-12);
}
