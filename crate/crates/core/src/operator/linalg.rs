use nalgebra::{DMatrix, Dyn, SymmetricEigen, SVD};

use super::{Operator, C64};

/// Eigen-decomposition of a hermitian operator, eigenvalues ascending.
#[derive(Clone, Debug)]
pub struct Eigh {
    pub values: Vec<f64>,
    /// Eigenvectors as columns, in the order of `values`.
    pub vectors: DMatrix<C64>,
}

impl Eigh {
    pub fn new(x: &Operator) -> Self {
        let h = x.hermitian_part();
        let m = h.into_matrix();
        let eig = SymmetricEigen::try_new(m.clone(), 1e-24, 100_000).unwrap_or_else(|| SymmetricEigen::new(m));
        let n = eig.eigenvalues.len();
        let mut order: Vec<usize> = (0..n).collect();
        order.sort_by(|&a, &b| eig.eigenvalues[a].total_cmp(&eig.eigenvalues[b]));
        let values = order.iter().map(|&k| eig.eigenvalues[k]).collect();
        let vectors = DMatrix::from_fn(n, n, |r, c| eig.eigenvectors[(r, order[c])]);
        Self { values, vectors }
    }

    /// Rebuilds `Σ f(λ_k) |v_k⟩⟨v_k|`.
    pub fn map(&self, mut f: impl FnMut(f64) -> f64) -> Operator {
        let n = self.values.len();
        let mut scaled = self.vectors.clone();
        for (k, &lam) in self.values.iter().enumerate() {
            let s = C64::new(f(lam), 0.0);
            for r in 0..n {
                scaled[(r, k)] *= s;
            }
        }
        Operator::from_matrix(scaled * self.vectors.adjoint())
    }

    pub fn max_abs_value(&self) -> f64 {
        self.values.iter().map(|v| v.abs()).fold(0.0, f64::max)
    }

    /// Eigenvector `k` as a plain vector.
    pub fn vector(&self, k: usize) -> Vec<C64> {
        self.vectors.column(k).iter().copied().collect()
    }
}

impl Operator {
    pub fn eigh(&self) -> Eigh {
        Eigh::new(self)
    }

    /// Eigenvalues of the hermitian part, ascending.
    pub fn eigenvalues(&self) -> Vec<f64> {
        self.eigh().values
    }

    pub fn min_eigenvalue(&self) -> f64 {
        self.eigenvalues().first().copied().unwrap_or(0.0)
    }

    pub fn max_eigenvalue(&self) -> f64 {
        self.eigenvalues().last().copied().unwrap_or(0.0)
    }

    /// Square root of a PSD operator; small negative eigenvalues are clipped.
    pub fn sqrt_psd(&self) -> Operator {
        self.eigh().map(|l| l.max(0.0).sqrt())
    }

    /// Moore–Penrose inverse of a hermitian operator by eigen-decomposition,
    /// dropping eigenvalues below `rel_tol · max|λ|`.
    pub fn pinv_hermitian(&self, rel_tol: f64) -> Operator {
        let e = self.eigh();
        let cut = rel_tol * e.max_abs_value();
        e.map(|l| if l.abs() > cut { 1.0 / l } else { 0.0 })
    }

    /// `X^{-1/2}` on the support of a PSD operator.
    pub fn pinv_sqrt_psd(&self, rel_tol: f64) -> Operator {
        let e = self.eigh();
        let cut = rel_tol * e.max_abs_value();
        e.map(|l| if l > cut { 1.0 / l.sqrt() } else { 0.0 })
    }

    /// Orthogonal projector onto the support (eigenvalues above `rel_tol · max|λ|`).
    pub fn support_projector(&self, rel_tol: f64) -> Operator {
        let e = self.eigh();
        let cut = rel_tol * e.max_abs_value();
        e.map(|l| if l > cut { 1.0 } else { 0.0 })
    }
}

/// SVD iterated well past the default stopping threshold (machine epsilon
/// relative to the bidiagonal entries), which can leave errors of order
/// 1e-5 on matrices with clustered zero singular values.
pub(crate) fn accurate_svd(m: &DMatrix<C64>, vectors: bool) -> SVD<C64, Dyn, Dyn> {
    m.clone()
        .try_svd(vectors, vectors, 1e-24, 100_000)
        .unwrap_or_else(|| m.clone().svd(vectors, vectors))
}

/// Moore–Penrose generalized inverse via SVD; singular values at or below
/// `tol` are treated as zero.
pub fn moore_penrose(m: &Operator, tol: f64) -> Operator {
    let svd = accurate_svd(m.matrix(), true);
    let u = svd.u.expect("svd computed with u");
    let v_t = svd.v_t.expect("svd computed with v_t");
    let k = svd.singular_values.len();
    let mut v_scaled = v_t.adjoint();
    for j in 0..k {
        let s = svd.singular_values[j];
        let inv = if s > tol { 1.0 / s } else { 0.0 };
        for r in 0..v_scaled.nrows() {
            v_scaled[(r, j)] *= C64::new(inv, 0.0);
        }
    }
    Operator::from_matrix(v_scaled * u.adjoint())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::operator::{random_operator, random_hermitian};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn pinv_identity_and_diagonal() {
        let id = Operator::identity(3);
        assert!((&moore_penrose(&id, 1e-12) - &id).max_abs() < 1e-14);
        let d = Operator::diagonal(&[2.0, 0.0]);
        let p = moore_penrose(&d, 1e-12);
        assert!((&p - &Operator::diagonal(&[0.5, 0.0])).max_abs() < 1e-14);
    }

    #[test]
    fn penrose_identities_rank_deficient() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        // 6x4 of rank 2
        let a = random_operator(6, 2, &mut rng);
        let b = random_operator(2, 4, &mut rng);
        let m = &a * &b;
        let p = moore_penrose(&m, 1e-10);
        let mpm = &(&m * &p) * &m;
        let pmp = &(&p * &m) * &p;
        let mp = &m * &p;
        let pm = &p * &m;
        assert!((&mpm - &m).max_abs() < 1e-10);
        assert!((&pmp - &p).max_abs() < 1e-10);
        assert!((&mp - &mp.adjoint()).max_abs() < 1e-10);
        assert!((&pm - &pm.adjoint()).max_abs() < 1e-10);
    }

    #[test]
    fn eigh_reconstructs() {
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        let h = random_hermitian(5, &mut rng);
        let e = h.eigh();
        assert!(e.values.windows(2).all(|w| w[0] <= w[1]));
        let back = e.map(|l| l);
        assert!((&back - &h).max_abs() < 1e-12);
    }

    #[test]
    fn sqrt_squares_back() {
        let mut rng = ChaCha8Rng::seed_from_u64(13);
        let g = random_operator(4, 4, &mut rng);
        let p = &g * &g.adjoint();
        let s = p.sqrt_psd();
        assert!((&(&s * &s) - &p).max_abs() < 1e-12);
    }

    #[test]
    fn decompositions_converge_with_clustered_zeros() {
        // (I − M) π (I − M) for the six-outcome Pauli POVM: rank 2 with a
        // four-fold numerically zero cluster
        let p = crate::frames::Povm::pauli6();
        let lambda = crate::frames::expansion_map(p.elements());
        let m = &moore_penrose(&lambda, 1e-10) * &lambda;
        let c = &Operator::identity(6) - &m;
        let x = &(&c * &Operator::diagonal(&[0.3, 0.05, 0.2, 0.1, 0.25, 0.1])) * &c;
        let svd = accurate_svd(x.matrix(), true);
        let recon = svd.recompose().unwrap();
        assert!((recon - x.matrix()).map(|z| z.norm()).max() < 1e-14);
        let e = x.eigh();
        assert!((&e.map(|l| l) - &x).max_abs() < 1e-14);
        let pinv = moore_penrose(&x, 1e-11);
        assert!((&(&(&x * &pinv) * &x) - &x).max_abs() < 1e-14);
    }
}
