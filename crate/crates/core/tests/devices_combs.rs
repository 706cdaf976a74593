use proptest::prelude::*;
use qtomo::combs::{realize_tester, tester_probabilities, validate_comb, QuantumComb, Tester};
use qtomo::devices::{process_tomography, ChoiClass, ChoiOperator, FaithfulState};
use qtomo::frames::Povm;
use qtomo::operator::{random_density, random_kraus, random_operator, Operator, SubsystemShape};
use qtomo::processing::{DualKind, Picture, Shots};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// `Σ_k K_k ρ K_k†`.
fn kraus_apply(kraus: &[Operator], rho: &Operator) -> Operator {
    let d = kraus[0].rows();
    kraus.iter().fold(Operator::zeros(d, d), |acc, k| &acc + &(&(k * rho) * &k.adjoint()))
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn choi_action_matches_kraus(seed in any::<u64>(), d_in in 1usize..4, d_out in 1usize..4, n in 1usize..4) {
        let mut r = rng(seed);
        let kraus = random_kraus(d_in, d_out, n.max(d_in), &mut r);
        let c = ChoiOperator::from_kraus(&kraus).unwrap();
        prop_assert!(c.trace_preservation_residual() < 1e-10);
        let rho = random_density(d_in, &mut r);
        prop_assert!((&c.apply(&rho).unwrap() - &kraus_apply(&kraus, &rho)).max_abs() < 1e-11);
        // Linearity on non-positive inputs too.
        let x = random_operator(d_in, d_in, &mut r);
        prop_assert!((&c.apply(&x).unwrap() - &kraus_apply(&kraus, &x)).max_abs() < 1e-10);
    }

    #[test]
    fn composition_matches_kraus_products(seed in any::<u64>(), d in 1usize..4) {
        let mut r = rng(seed);
        let ka = random_kraus(d, d + 1, 2, &mut r);
        let kb = random_kraus(d + 1, d, 3, &mut r);
        let composed: Vec<Operator> = kb.iter().flat_map(|b| ka.iter().map(move |a| b * a)).collect();
        let a = ChoiOperator::from_kraus(&ka).unwrap();
        let b = ChoiOperator::from_kraus(&kb).unwrap();
        let linked = b.after(&a).unwrap();
        let direct = ChoiOperator::from_kraus(&composed).unwrap();
        prop_assert!((linked.operator() - direct.operator()).max_abs() < 1e-10);
    }

    #[test]
    fn superoperator_roundtrip(seed in any::<u64>(), d_in in 1usize..4, d_out in 1usize..4) {
        let c = ChoiOperator::random(d_in, d_out, d_in, &mut rng(seed));
        let back = ChoiOperator::from_superoperator(&c.superoperator(), d_out, d_in).unwrap();
        prop_assert!((back.operator() - c.operator()).max_abs() < 1e-12);
    }

    #[test]
    fn random_channels_are_one_tooth_combs(seed in any::<u64>(), d_in in 1usize..4, d_out in 1usize..4) {
        let c = ChoiOperator::random(d_in, d_out, d_in, &mut rng(seed));
        // Comb wires run in causal order in ⊗ out; the Choi operator is out ⊗ in.
        let swapped = c.operator().permute_subsystems(&SubsystemShape::new(&[d_out, d_in]), &[1, 0]).unwrap();
        let ok = validate_comb(&swapped, &[d_in, d_out], 1, 1e-9).unwrap();
        prop_assert!(ok.passed, "{ok:?}");
        let comb = QuantumComb::from_channel(&c, 0, 1).unwrap();
        prop_assert!(comb.validate(1e-9).unwrap().passed);
    }

    #[test]
    fn tester_realization_reproduces_born_rule(seed in any::<u64>(), d in 2usize..4) {
        let mut r = rng(seed);
        let sigma = random_density(d, &mut r);
        let povm = Povm::random_ic(d * d, d * d * d * d, &mut r).unwrap();
        let s = Operator::identity(d).tensor(&sigma.sqrt_psd());
        let elements = povm.elements().iter().map(|p| (&(&s * p) * &s).hermitian_part()).collect();
        let t = Tester::new(elements, d, d).unwrap();
        let real = realize_tester(&t);
        let channel = ChoiOperator::random(d, d, 2, &mut r);
        let born = tester_probabilities(&t, &channel).unwrap();
        let run = real.probabilities(&channel).unwrap();
        prop_assert!((born.iter().sum::<f64>() - 1.0).abs() < 1e-10);
        for (a, b) in born.iter().zip(&run) {
            prop_assert!((a - b).abs() < 1e-9);
        }
    }

    #[test]
    fn faithful_map_inverts(seed in any::<u64>(), d in 2usize..4) {
        let mut r = rng(seed);
        let f = FaithfulState::maximally_entangled(d);
        let p = random_density(d, &mut r);
        prop_assert!((&f.invert(&f.map(&p).unwrap()).unwrap() - &p).max_abs() < 1e-10);
    }
}

#[test]
fn depolarizing_choi_closed_form() {
    for d in 2..4 {
        let p = 0.37;
        let c = ChoiOperator::depolarizing(p, d, Picture::Schrodinger).unwrap();
        let omega = Operator::from_fn(d * d, d * d, |i, j| {
            let diag = |k: usize| k / d == k % d;
            if diag(i) && diag(j) {
                1.0.into()
            } else {
                0.0.into()
            }
        });
        let expected = &omega.scale_real(1.0 - p) + &Operator::identity(d * d).scale_real(p / d as f64);
        assert!((c.operator() - &expected).max_abs() < 1e-14);
        assert_eq!(c.class(), ChoiClass::Unital);
    }
}

#[test]
fn exact_process_tomography_recovers_channels() {
    let mut r = rng(9);
    let f = FaithfulState::maximally_entangled(2);
    for _ in 0..5 {
        let c = ChoiOperator::random(2, 2, 2, &mut r);
        for kind in [DualKind::Canonical, DualKind::Optimal] {
            let est = process_tomography(&c, &f, kind, Shots::Exact, &mut r).unwrap();
            assert!((&est.choi - c.operator()).max_abs() < 1e-9);
        }
    }
}

#[test]
fn sequential_network_is_a_two_tooth_comb() {
    let mut r = rng(1);
    let a = ChoiOperator::random(2, 4, 2, &mut r);
    let b = ChoiOperator::random(4, 2, 2, &mut r);
    let comb = QuantumComb::sequential(&a, &b, 2).unwrap();
    assert_eq!(comb.teeth(), 2);
    let diag = comb.validate(1e-9).unwrap();
    assert!(diag.passed, "{diag:?}");
    let json = serde_json::to_string(&comb).unwrap();
    let back: QuantumComb = serde_json::from_str(&json).unwrap();
    assert_eq!(back, comb);
}
