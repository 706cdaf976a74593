//! Exit-gate checks. Each test prints one `PASS`/`FAIL` line to stderr
//! (written directly, so it shows even under output capture).

use std::io::Write;

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use qtomo::combs::{realize_tester, tester_probabilities, validate_comb, QuantumComb, Tester};
use qtomo::devices::ChoiOperator;
use qtomo::frames::{alternate_dual, canonical_dual, verify_dual};
use qtomo::harness::{run_experiment, DualChoice, ExperimentConfig, Model, PovmSpec, Task};
use qtomo::operator::design::UnitaryDesign;
use qtomo::operator::{
    link_product, random_density, random_hermitian, random_kraus, random_operator, vectorize, Operator, C64,
};
use qtomo::optimal_tester::{
    eta, optimal_eta_bound, optimal_seed, random_fiducial, seed_y, special_case_eta, twirl, twirl_haar,
    SchurCoefficients, SubspaceKind, WeightedObservables,
};
use qtomo::processing::{
    coefficients_from_dual, depolarized_qubit_estimator, kl_divergence, log_likelihood, max_likelihood,
    min_error_closed_form, min_error_first_term, optimal_dual, outcome_weights, qubit_estimator,
    shannon_entropy, statistical_error, Counts, Ensemble, MaxLikOptions, Shots, ZeroOutcomes,
};
use qtomo::Povm;

fn report(n: u32, name: &str, passed: bool, detail: &str) {
    let status = if passed { "PASS" } else { "FAIL" };
    let _ = writeln!(std::io::stderr(), "acceptance {n} [{status}] {name}: {detail}");
}

fn rel(a: f64, b: f64) -> f64 {
    ((a - b) / b).abs()
}

#[test]
fn criterion_1_optimal_setup_bounds() {
    let s2 = 2f64.sqrt();
    let formula = |kind: SubspaceKind, d: f64| match kind {
        SubspaceKind::QuantumOperations => d.powi(6) + d.powi(4) - d * d,
        SubspaceKind::UnitalChannels => (d * d - 1.0).powi(3) + 1.0,
        SubspaceKind::Channels => {
            d.powi(6) + (2.0 * s2 - 3.0) * d.powi(4) + (5.0 - 4.0 * s2) * d * d + 2.0 * (s2 - 1.0)
        }
        _ => unreachable!(),
    };
    let kinds = [SubspaceKind::QuantumOperations, SubspaceKind::UnitalChannels, SubspaceKind::Channels];
    let mut worst_bound = 0.0f64;
    let mut worst_pipeline = 0.0f64;
    let mut worst_matrix = 0.0f64;
    for d in 2..=5usize {
        for kind in kinds {
            let expect = formula(kind, d as f64);
            worst_bound = worst_bound.max(rel(optimal_eta_bound(kind, d), expect));
            let coef = optimal_seed(kind, d, &random_fiducial(d, &mut ChaCha8Rng::seed_from_u64(d as u64)))
                .unwrap()
                .coefficients()
                .unwrap();
            worst_pipeline = worst_pipeline.max(rel(coef.eta_for(kind), expect));
            if d <= 3 {
                let m = eta(&coef.operator(), &WeightedObservables::subspace(kind, d)).unwrap();
                worst_matrix = worst_matrix.max(rel(m, expect));
            }
        }
    }
    let literals = [
        (optimal_eta_bound(SubspaceKind::QuantumOperations, 2), 76.0),
        (optimal_eta_bound(SubspaceKind::QuantumOperations, 3), 801.0),
        (optimal_eta_bound(SubspaceKind::UnitalChannels, 2), 28.0),
        (optimal_eta_bound(SubspaceKind::Channels, 2), 34.0 + 18.0 * s2),
    ];
    let worst_literal = literals.iter().map(|&(a, b)| rel(a, b)).fold(0.0, f64::max);
    let passed = worst_bound < 1e-9 && worst_literal < 1e-9 && worst_pipeline < 1e-8 && worst_matrix < 1e-8;
    report(
        1,
        "optimal-setup bounds",
        passed,
        &format!(
            "bound rel err {worst_bound:.1e}, literals {worst_literal:.1e}, pipeline d=2..5 {worst_pipeline:.1e}, matrix η d=2,3 {worst_matrix:.1e}"
        ),
    );
    assert!(passed);
}

#[test]
fn criterion_2_state_povm_special_case() {
    let mut worst = 0.0f64;
    for d in 2..=5usize {
        let df = d as f64;
        let expect = df.powi(3) + df * df - df;
        for kind in [SubspaceKind::States, SubspaceKind::Povms] {
            worst = worst.max(rel(special_case_eta(kind, d).unwrap(), expect));
            let coef = optimal_seed(kind, d, &random_fiducial(d, &mut ChaCha8Rng::seed_from_u64(7))).unwrap();
            worst = worst.max(rel(coef.coefficients().unwrap().eta_for(kind), expect));
        }
    }
    let lit = rel(special_case_eta(SubspaceKind::States, 2).unwrap(), 10.0)
        .max(rel(special_case_eta(SubspaceKind::Povms, 3).unwrap(), 33.0));
    let passed = worst < 1e-8 && lit < 1e-9;
    report(2, "state/POVM special case", passed, &format!("max rel err {worst:.1e}, literals {lit:.1e}"));
    assert!(passed);
}

#[test]
fn criterion_3_schur_haar_agreement() {
    let d = 2;
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let design = UnitaryDesign::clifford(d).unwrap();
    let mut worst_exact = 0.0f64;
    let mut seeds_list = Vec::new();
    for kind in [SubspaceKind::QuantumOperations, SubspaceKind::Channels, SubspaceKind::UnitalChannels] {
        let s = optimal_seed(kind, d, &random_fiducial(d, &mut rng)).unwrap();
        seeds_list.push(vec![(d as f64, s.psi)]);
    }
    // a generic two-element seed set
    let mut generic = Vec::new();
    for w in [0.7, 1.3] {
        let psi = random_operator(d, d, &mut rng);
        generic.push((w, psi.scale_real(1.0 / psi.hs_norm())));
    }
    seeds_list.push(generic);
    for seeds in &seeds_list {
        let y = seed_y(seeds, d).unwrap();
        let analytic = qtomo::optimal_tester::covariant_y_from_seeds(seeds, d).unwrap().operator();
        worst_exact = worst_exact.max((&twirl(&y, &design).unwrap() - &analytic).max_abs());
    }
    let y = seed_y(&seeds_list[3], d).unwrap();
    let analytic = SchurCoefficients::from_seed_operators(
        &seeds_list[3]
            .iter()
            .map(|(w, psi)| {
                let v = vectorize(psi).amplitudes;
                Operator::from_matrix(&v * v.adjoint()).scale_real(*w)
            })
            .collect::<Vec<_>>(),
        d,
    )
    .unwrap()
    .operator();
    let mc = twirl_haar(&y, d, 100_000, 17).unwrap();
    let frob = (&mc - &analytic).hs_norm() / analytic.hs_norm();
    let passed = worst_exact < 1e-9 && frob < 0.01;
    report(
        3,
        "Schur/Haar agreement",
        passed,
        &format!("Clifford twirl max entry err {worst_exact:.1e}, Haar 1e5 samples rel Frobenius {:.3}%", 100.0 * frob),
    );
    assert!(passed);
}

/// Minimizes `Σ_l π_l |f_l|²` subject to `Σ_l f_l P_l = X` by parametrizing
/// the affine solution set with a null-space basis and solving the reduced
/// normal equations.
fn brute_force_min(elements: &[Operator], weights: &[f64], x: &Operator) -> (f64, Vec<C64>) {
    let dd = x.rows() * x.cols();
    let l = elements.len();
    let lambda = DMatrix::from_fn(dd, l, |r, c| vectorize(&elements[c]).amplitudes[r]);
    let target = vectorize(x).amplitudes;
    let svd = lambda.clone().svd(true, true);
    let f0 = svd.solve(&target, 1e-12).unwrap();
    let v_t = svd.v_t.unwrap();
    // full right singular basis: complete v_t rows to C^l
    let full = {
        let mut m = DMatrix::<C64>::zeros(l, l);
        m.view_mut((0, 0), (v_t.nrows(), l)).copy_from(&v_t);
        let rank = svd.singular_values.iter().filter(|&&s| s > 1e-10).count();
        // Gram–Schmidt on the standard basis against the first `rank` rows
        let mut rows: Vec<DVector<C64>> = (0..rank).map(|i| v_t.row(i).transpose().conjugate()).collect();
        for e in 0..l {
            let mut v = DVector::<C64>::zeros(l);
            v[e] = C64::new(1.0, 0.0);
            for r in &rows {
                let c = r.dotc(&v);
                v -= r * c;
            }
            if v.norm() > 1e-8 {
                let n = v.norm();
                rows.push(v / C64::new(n, 0.0));
            }
            if rows.len() == l {
                break;
            }
        }
        for (i, r) in rows.iter().enumerate() {
            m.set_row(i, &r.adjoint());
        }
        (m, rank)
    };
    let (basis, rank) = full;
    let null = basis.rows(rank, l - rank).adjoint();
    let pi = DMatrix::from_diagonal(&DVector::from_iterator(l, weights.iter().map(|&w| C64::new(w, 0.0))));
    let a = null.adjoint() * &pi * &null;
    let b = -(null.adjoint() * &pi * &f0);
    let z = a.lu().solve(&b).unwrap();
    let f = f0 + null * z;
    let value = f.iter().zip(weights).map(|(f, w)| f.norm_sqr() * w).sum();
    (value, f.iter().copied().collect())
}

#[test]
fn criterion_4_optimal_data_processing() {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let mut worst_gap = f64::NEG_INFINITY;
    let mut worst_closed = 0.0f64;
    for _ in 0..50 {
        let n = rng.random_range(4..=9);
        let povm = Povm::random_ic(2, n, &mut rng).unwrap();
        let states = vec![random_density(2, &mut rng), random_density(2, &mut rng)];
        let ensemble = Ensemble::discrete(states, vec![0.9, 0.1]).unwrap();
        let canon = canonical_dual(&povm).unwrap();
        let opt = optimal_dual(&povm, &ensemble).unwrap();
        for _ in 0..5 {
            let x = random_hermitian(2, &mut rng);
            let d_opt = statistical_error(&coefficients_from_dual(&opt, &x).unwrap(), &povm, &ensemble).unwrap();
            let d_can = statistical_error(&coefficients_from_dual(&canon, &x).unwrap(), &povm, &ensemble).unwrap();
            worst_gap = worst_gap.max(d_opt - d_can);
            let closed = min_error_closed_form(&povm, &ensemble, &x, ZeroOutcomes::Reject).unwrap();
            worst_closed = worst_closed.max((closed - d_opt).abs());
        }
    }

    let pauli = Povm::pauli6();
    let ensemble = Ensemble::discrete(
        vec![random_density(2, &mut rng), random_density(2, &mut rng), random_density(2, &mut rng)],
        vec![0.6, 0.3, 0.1],
    )
    .unwrap();
    let w = outcome_weights(&pauli, &ensemble).unwrap();
    let opt = optimal_dual(&pauli, &ensemble).unwrap();
    let mut worst_oracle = 0.0f64;
    for _ in 0..20 {
        let x = &random_hermitian(2, &mut rng) + &random_operator(2, 2, &mut rng).scale_real(0.3);
        let (value, f) = brute_force_min(pauli.elements(), &w, &x);
        let first = min_error_first_term(pauli.elements(), &w, &x, ZeroOutcomes::Reject).unwrap();
        let ours = opt.coefficients(&x).unwrap();
        let coef_err = ours.iter().zip(&f).map(|(a, b)| (a - b).norm()).fold(0.0, f64::max);
        worst_oracle = worst_oracle.max((value - first).abs()).max(coef_err);
    }
    let passed = worst_gap <= 1e-10 && worst_closed < 1e-9 && worst_oracle < 1e-8;
    report(
        4,
        "optimal data processing",
        passed,
        &format!(
            "max δ(opt)−δ(can) {worst_gap:.1e}, closed form err {worst_closed:.1e}, Pauli-6 oracle err {worst_oracle:.1e}"
        ),
    );
    assert!(passed);
}

#[test]
fn criterion_5_dual_frame_algebra() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let mut canon_ok = true;
    let mut alt_ok = 0;
    let mut worst_recon = 0.0f64;
    let povms: Vec<Povm> = vec![
        Povm::pauli6(),
        Povm::standard(3).unwrap(),
        Povm::random_ic(2, 7, &mut rng).unwrap(),
        Povm::random_ic(3, 12, &mut rng).unwrap(),
    ];
    for povm in &povms {
        let canon = canonical_dual(povm).unwrap();
        canon_ok &= verify_dual(povm, &canon, 1e-10);
        let d = povm.dim();
        for _ in 0..25 {
            let y: Vec<Operator> = (0..povm.len()).map(|_| random_operator(d, d, &mut rng)).collect();
            let alt = alternate_dual(povm, &canon, &y).unwrap();
            if verify_dual(povm, &alt, 1e-10) {
                alt_ok += 1;
            }
            let x = random_operator(d, d, &mut rng);
            let f = coefficients_from_dual(&alt, &x).unwrap();
            worst_recon = worst_recon.max(f.unbiasedness_residual(povm).unwrap());
        }
    }
    let passed = canon_ok && alt_ok == 100 && worst_recon < 1e-9;
    report(
        5,
        "dual-frame algebra",
        passed,
        &format!("canonical ok {canon_ok}, alternate duals verified {alt_ok}/100, max reconstruction err {worst_recon:.1e}"),
    );
    assert!(passed);
}

#[test]
fn criterion_6_monte_carlo_consistency() {
    let mut cfg = ExperimentConfig::new(Task::State, 2);
    cfg.shots = Shots::Finite(10_000);
    cfg.trials = 500;
    cfg.seed = 6;
    cfg.measurement.povm = PovmSpec::Pauli6;
    cfg.measurement.dual = DualChoice::Optimal;
    cfg.model = Some(Model::UniformPure);
    let state = run_experiment(&cfg).unwrap().summary;
    let max_z = state.observables.iter().map(|o| o.bias_z()).fold(0.0, f64::max);

    let mut pcfg = ExperimentConfig::new(Task::Process, 2);
    pcfg.shots = Shots::Finite(10_000);
    pcfg.trials = 500;
    pcfg.seed = 6;
    pcfg.measurement.kind = SubspaceKind::UnitalChannels;
    let rec = run_experiment(&pcfg).unwrap();
    let process = &rec.summary;
    let truth_sq: f64 = rec.trials[0].truths.iter().map(|t| t.norm_sqr()).sum();
    let eta_emp = process.mean_sq_error * 10_000.0 + truth_sq;

    let passed = (state.ratio - 1.0).abs() < 0.1 && max_z < 4.0 && (process.ratio - 1.0).abs() < 0.1;
    report(
        6,
        "Monte Carlo consistency",
        passed,
        &format!(
            "state MSE/analytic {:.3}, max bias z {max_z:.2}; process MSE/prediction {:.3}, empirical η {eta_emp:.2} (bound {:.0})",
            state.ratio,
            process.ratio,
            process.eta.unwrap()
        ),
    );
    assert!(passed);
}

#[test]
fn criterion_7_noise_unbiasing() {
    let rho = Operator::from_real_rows(&[&[0.7, 0.2], &[0.2, 0.3]]);
    let mut max_z = 0.0f64;
    for p in [0.1, 0.3] {
        let mut cfg = ExperimentConfig::new(Task::State, 2);
        cfg.shots = Shots::Finite(100_000);
        cfg.trials = 400;
        cfg.seed = 7;
        cfg.measurement.povm = PovmSpec::Pauli6;
        cfg.measurement.dual = DualChoice::Canonical;
        cfg.measurement.noise = Some(p);
        cfg.model = Some(Model::State { state: rho.clone() });
        let s = run_experiment(&cfg).unwrap().summary;
        max_z = s.observables.iter().map(|o| o.bias_z()).fold(max_z, f64::max);
    }

    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let mut exact_zero = true;
    for _ in 0..20 {
        let x = random_hermitian(2, &mut rng);
        exact_zero &= depolarized_qubit_estimator(&x, 0.0).unwrap() == qubit_estimator(&x).unwrap();
    }
    let mut cfg = ExperimentConfig::new(Task::State, 2);
    cfg.shots = Shots::Finite(1000);
    cfg.trials = 20;
    cfg.measurement.povm = PovmSpec::Pauli6;
    let clean = run_experiment(&cfg).unwrap();
    cfg.measurement.noise = Some(0.0);
    let zero = run_experiment(&cfg).unwrap();
    exact_zero &= clean.trials == zero.trials;

    let passed = max_z < 4.0 && exact_zero;
    report(
        7,
        "noise unbiasing",
        passed,
        &format!("max bias z over p ∈ {{0.1, 0.3}} at N=1e5: {max_z:.2}; p=0 estimator identical: {exact_zero}"),
    );
    assert!(passed);
}

#[test]
fn criterion_8_max_likelihood() {
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let mut worst_td = 0.0f64;
    let mut monotone = true;
    for _ in 0..10 {
        let d = rng.random_range(2..=3);
        let povm = Povm::random_ic(d, d * d + 2, &mut rng).unwrap();
        let rho = &random_density(d, &mut rng).scale_real(0.8) + &Operator::identity(d).scale_real(0.2 / d as f64);
        let scale = 1e12;
        let counts = Counts::new(povm.probabilities(&rho).unwrap().iter().map(|p| (p * scale).round() as u64).collect());
        let init = Operator::identity(d).scale_real(1.0 / d as f64);
        let fit = max_likelihood(&povm, &counts, &init, MaxLikOptions::default()).unwrap();
        monotone &= fit.log_likelihood.windows(2).all(|w| w[1] >= w[0] - 1e-12);
        worst_td = worst_td.max(0.5 * (&fit.into_state().unwrap() - &rho).trace_norm());
    }

    // argmax of the log-likelihood = argmin of D(ν‖p(ρ)), via L + D = −S(ν)
    let mut kl_ok = 0;
    for _ in 0..20 {
        let povm = Povm::random_ic(2, 6, &mut rng).unwrap();
        let rho = random_density(2, &mut rng);
        let probs = povm.probabilities(&rho).unwrap();
        let counts = qtomo::processing::sample_multinomial(&probs, 500, &mut rng).unwrap();
        let nu = counts.frequencies().unwrap();
        let init = Operator::identity(2).scale_real(0.5);
        let fit = max_likelihood(&povm, &counts, &init, MaxLikOptions::default()).unwrap();
        let best = fit.state;
        let kl = |s: &Operator| kl_divergence(&nu, &povm.probabilities(s).unwrap()).unwrap();
        let identity_err = (log_likelihood(&povm, &nu, &best) + kl(&best) + shannon_entropy(&nu)).abs();
        let kl_best = kl(&best);
        let beats_all = (0..50).all(|_| {
            let t = rng.random::<f64>() * 0.2;
            let other = &best.scale_real(1.0 - t) + &random_density(2, &mut rng).scale_real(t);
            let better_ll = log_likelihood(&povm, &nu, &other) <= log_likelihood(&povm, &nu, &best) + 1e-12;
            let better_kl = kl(&other) >= kl_best - 1e-12;
            better_ll && better_kl
        });
        if identity_err < 1e-10 && beats_all {
            kl_ok += 1;
        }
    }
    let passed = worst_td < 1e-6 && monotone && kl_ok == 20;
    report(
        8,
        "maximum likelihood",
        passed,
        &format!("max trace distance {worst_td:.1e}, monotone {monotone}, KL equivalence {kl_ok}/20"),
    );
    assert!(passed);
}

#[test]
fn criterion_9_comb_tester_calculus() {
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let tol = 1e-9;

    let mut channels_ok = 0;
    for _ in 0..20 {
        let (di, dout) = (rng.random_range(2..=3), rng.random_range(2..=3));
        let c = ChoiOperator::random(di, dout, rng.random_range(1..=4), &mut rng);
        if QuantumComb::from_channel(&c, 0, 1).unwrap().validate(tol).unwrap().passed {
            channels_ok += 1;
        }
    }
    let a = ChoiOperator::random(2, 4, 3, &mut rng);
    let b = ChoiOperator::random(4, 2, 3, &mut rng);
    let network = QuantumComb::sequential(&a, &b, 2).unwrap().validate(tol).unwrap();

    // reset channel read with output and input swapped
    let d = 3;
    let reset = ChoiOperator::from_kraus(
        &(0..d).map(|k| Operator::matrix_unit(d, d, 0, k)).collect::<Vec<_>>(),
    )
    .unwrap();
    let right = QuantumComb::from_channel(&reset, 0, 1).unwrap().validate(tol).unwrap();
    let swapped = validate_comb(reset.operator(), &[d, d], 1, tol).unwrap();

    // realization of testers on random channels
    let mut worst_real = 0.0f64;
    for i in 0..100 {
        let (dout, di) = (2, if i % 2 == 0 { 2 } else { 3 });
        // general entangled tester: Π_i = (I ⊗ √σ) P_i (I ⊗ √σ)
        let root = Operator::identity(dout).tensor(&random_density(di, &mut rng).sqrt_psd());
        let povm = Povm::random_ic(dout * di, dout * dout * di * di, &mut rng).unwrap();
        let elements = povm.elements().iter().map(|p| (&(&root * p) * &root).hermitian_part()).collect();
        let t = Tester::new(elements, dout, di).unwrap();
        let real = realize_tester(&t);
        let c = ChoiOperator::random(di, dout, 2, &mut rng);
        let p = tester_probabilities(&t, &c).unwrap();
        let q = real.probabilities(&c).unwrap();
        worst_real = p.iter().zip(&q).map(|(a, b)| (a - b).abs()).fold(worst_real, f64::max);
    }

    // link product vs Kraus composition
    let mut worst_link = 0.0f64;
    for _ in 0..20 {
        let ka = random_kraus(2, 3, 2, &mut rng);
        let kb = random_kraus(3, 2, 3, &mut rng);
        let (ca, cb) = (ChoiOperator::from_kraus(&ka).unwrap(), ChoiOperator::from_kraus(&kb).unwrap());
        let composed: Vec<Operator> = kb.iter().flat_map(|b| ka.iter().map(move |a| b * a)).collect();
        let oracle = ChoiOperator::from_kraus(&composed).unwrap();
        let linked = link_product(&ca.labeled(1, 0), &cb.labeled(2, 1)).unwrap().reordered(&[2, 0]).unwrap();
        worst_link = worst_link.max((&linked.op - oracle.operator()).max_abs());
    }

    let passed = channels_ok == 20
        && network.passed
        && right.passed
        && !swapped.passed
        && worst_real < 1e-9
        && worst_link < 1e-10;
    report(
        9,
        "comb/tester calculus",
        passed,
        &format!(
            "random channels accepted {channels_ok}/20, N=2 network residual {:.1e}, swapped reset residual {:.2} (rejected {}), realization err {worst_real:.1e}, link vs Kraus err {worst_link:.1e}",
            network.max_residual(),
            swapped.max_residual(),
            !swapped.passed
        ),
    );
    assert!(passed);
}
