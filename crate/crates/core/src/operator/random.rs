//! Random operators: Haar unitaries, Ginibre-induced states and random channels.

use rand::Rng;
use rand_distr::StandardNormal;

use super::{Operator, C64};

fn complex_gaussian<R: Rng + ?Sized>(rng: &mut R) -> C64 {
    let re: f64 = rng.sample(StandardNormal);
    let im: f64 = rng.sample(StandardNormal);
    C64::new(re, im) * std::f64::consts::FRAC_1_SQRT_2
}

/// Matrix of i.i.d. standard complex Gaussians.
pub fn random_operator<R: Rng + ?Sized>(rows: usize, cols: usize, rng: &mut R) -> Operator {
    Operator::from_fn(rows, cols, |_, _| complex_gaussian(rng))
}

pub fn random_hermitian<R: Rng + ?Sized>(d: usize, rng: &mut R) -> Operator {
    random_operator(d, d, rng).hermitian_part()
}

/// Haar-distributed unitary: QR of a complex Ginibre matrix with the phases of
/// `R`'s diagonal moved into `Q`.
pub fn haar_random_unitary<R: Rng + ?Sized>(d: usize, rng: &mut R) -> Operator {
    assert!(d >= 1, "unitary dimension must be positive");
    let z = random_operator(d, d, rng).into_matrix();
    let qr = z.qr();
    let mut q = qr.q();
    let r = qr.r();
    for j in 0..d {
        let rjj = r[(j, j)];
        let n = rjj.norm();
        let phase = if n > 0.0 { rjj / n } else { C64::new(1.0, 0.0) };
        for i in 0..d {
            q[(i, j)] *= phase;
        }
    }
    Operator::from_matrix(q)
}

/// Haar-random pure state as a vector.
pub fn random_pure_state<R: Rng + ?Sized>(d: usize, rng: &mut R) -> Vec<C64> {
    let v: Vec<C64> = (0..d).map(|_| complex_gaussian(rng)).collect();
    let n = v.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
    v.into_iter().map(|z| z / n).collect()
}

/// Full-rank random density operator `G G† / Tr[G G†]` (Hilbert–Schmidt measure).
pub fn random_density<R: Rng + ?Sized>(d: usize, rng: &mut R) -> Operator {
    let g = random_operator(d, d, rng);
    let p = &g * &g.adjoint();
    let tr = p.trace().re;
    p.scale_real(1.0 / tr).hermitian_part()
}

/// Random isometry `V: C^cols → C^rows` (`V†V = I`).
pub fn random_isometry<R: Rng + ?Sized>(rows: usize, cols: usize, rng: &mut R) -> Operator {
    assert!(rows >= cols, "isometry needs rows >= cols");
    let g = random_operator(rows, cols, rng);
    let gram = &g.adjoint() * &g;
    &g * &gram.pinv_sqrt_psd(1e-14)
}

/// Kraus operators of a random channel `L(C^d_in) → L(C^d_out)` with
/// `n` Kraus operators, cut from a random isometry.
pub fn random_kraus<R: Rng + ?Sized>(d_in: usize, d_out: usize, n: usize, rng: &mut R) -> Vec<Operator> {
    let v = random_isometry(n * d_out, d_in, rng);
    (0..n)
        .map(|k| Operator::from_fn(d_out, d_in, |m, j| v.get(k * d_out + m, j)))
        .collect()
}

/// Monte Carlo average of `U X U†` over Haar unitaries.
pub fn twirl_check<R: Rng + ?Sized>(x: &Operator, samples: usize, rng: &mut R) -> Operator {
    let d = x.dim();
    let mut acc = Operator::zeros(d, d);
    for _ in 0..samples {
        let u = haar_random_unitary(d, rng);
        acc += &(&(&u * x) * &u.adjoint());
    }
    acc.scale_real(1.0 / samples as f64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::operator::pauli;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn haar_is_unitary() {
        let mut rng = ChaCha8Rng::seed_from_u64(31);
        for d in 1..=5 {
            let u = haar_random_unitary(d, &mut rng);
            let e = &(&u.adjoint() * &u) - &Operator::identity(d);
            assert!(e.max_abs() < 1e-12);
            let col: f64 = u.column(0).iter().map(|z| z.norm_sqr()).sum();
            assert!((col - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn twirl_of_identity_is_identity() {
        let mut rng = ChaCha8Rng::seed_from_u64(32);
        let t = twirl_check(&Operator::identity(3), 7, &mut rng);
        assert!((&t - &Operator::identity(3)).max_abs() < 1e-12);
    }

    #[test]
    fn twirl_averages_to_trace_over_d() {
        let mut rng = ChaCha8Rng::seed_from_u64(33);
        let x = Operator::diagonal(&[1.0, 0.0]);
        let t = twirl_check(&x, 100_000, &mut rng);
        let target = Operator::identity(2).scale_real(0.5);
        // within 2% of the target's norm
        assert!((&t - &target).hs_norm() < 0.02 * target.hs_norm());
    }

    #[test]
    fn twirl_of_traceless_shrinks_with_samples() {
        let mut rng = ChaCha8Rng::seed_from_u64(34);
        let x = pauli::z();
        let norms: Vec<f64> = [250, 1000, 4000, 16000]
            .iter()
            .map(|&n| twirl_check(&x, n, &mut rng).hs_norm())
            .collect();
        // 1/√n decay: each 4x more samples roughly halves the residual
        assert!(norms[3] < norms[0] / 2.0, "{norms:?}");
        assert!(norms[3] < 0.05);
    }

    #[test]
    fn random_kraus_is_trace_preserving() {
        let mut rng = ChaCha8Rng::seed_from_u64(35);
        let ks = random_kraus(2, 3, 4, &mut rng);
        let mut sum = Operator::zeros(2, 2);
        for k in &ks {
            sum += &(&k.adjoint() * k);
        }
        assert!((&sum - &Operator::identity(2)).max_abs() < 1e-12);
    }

    #[test]
    fn random_density_is_state() {
        let mut rng = ChaCha8Rng::seed_from_u64(36);
        random_density(4, &mut rng).check_density(1e-12).unwrap();
    }
}
