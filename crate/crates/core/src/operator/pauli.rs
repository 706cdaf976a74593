//! Pauli matrices and their qudit generalization (Weyl operators).

use super::{Operator, C64, I, ONE, ZERO};

pub fn x() -> Operator {
    Operator::from_row_slice(2, 2, &[ZERO, ONE, ONE, ZERO]).unwrap()
}

pub fn y() -> Operator {
    Operator::from_row_slice(2, 2, &[ZERO, -I, I, ZERO]).unwrap()
}

pub fn z() -> Operator {
    Operator::from_row_slice(2, 2, &[ONE, ZERO, ZERO, -ONE]).unwrap()
}

/// `σ_1, σ_2, σ_3` for `i = 0, 1, 2`.
pub fn sigma(i: usize) -> Operator {
    match i {
        0 => x(),
        1 => y(),
        2 => z(),
        _ => panic!("Pauli index {i} out of range"),
    }
}

/// Weyl operator `X^a Z^b` with `X|j⟩ = |j+1⟩`, `Z|j⟩ = ω^j |j⟩`.
pub fn weyl(d: usize, a: usize, b: usize) -> Operator {
    let omega = |k: usize| C64::from_polar(1.0, 2.0 * std::f64::consts::PI * (k % d) as f64 / d as f64);
    Operator::from_fn(d, d, |r, c| {
        if r == (c + a) % d {
            omega(b * c)
        } else {
            ZERO
        }
    })
}

/// Orthonormal hermitian basis of the `d×d` operator space: `I/√d` first,
/// then the generalized Gell-Mann matrices scaled to unit Hilbert–Schmidt norm.
pub fn orthonormal_hermitian_basis(d: usize) -> Vec<Operator> {
    let mut out = vec![Operator::identity(d).scale_real(1.0 / (d as f64).sqrt())];
    let s = std::f64::consts::FRAC_1_SQRT_2;
    for j in 0..d {
        for k in (j + 1)..d {
            let mut sym = Operator::zeros(d, d);
            sym.set(j, k, C64::new(s, 0.0));
            sym.set(k, j, C64::new(s, 0.0));
            out.push(sym);
            let mut anti = Operator::zeros(d, d);
            anti.set(j, k, C64::new(0.0, -s));
            anti.set(k, j, C64::new(0.0, s));
            out.push(anti);
        }
    }
    for l in 1..d {
        let norm = 1.0 / ((l * (l + 1)) as f64).sqrt();
        let mut diag = vec![0.0; d];
        for v in diag.iter_mut().take(l) {
            *v = norm;
        }
        diag[l] = -(l as f64) * norm;
        out.push(Operator::diagonal(&diag));
    }
    out
}
