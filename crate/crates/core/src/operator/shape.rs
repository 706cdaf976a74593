//! Multipartite bookkeeping: partial traces, partial transposes, subsystem
//! permutations and the link product over labeled wires.
//!
//! Factors are ordered with the last subsystem varying fastest, matching the
//! Kronecker product: `A ⊗ B` has entry `((m·d_B + p), (n·d_B + q)) = A_mn B_pq`.

use std::collections::HashSet;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use super::{Operator, C64, ZERO};
use crate::error::{Error, Result};

/// Ordered subsystem dimensions with an integer wire label per factor.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct SubsystemShape {
    dims: Vec<usize>,
    labels: Vec<u32>,
}

impl SubsystemShape {
    /// Factors labeled `0, 1, 2, ...` in order.
    pub fn new(dims: &[usize]) -> Self {
        Self { dims: dims.to_vec(), labels: (0..dims.len() as u32).collect() }
    }

    pub fn labeled(wires: &[(u32, usize)]) -> Result<Self> {
        let labels: Vec<u32> = wires.iter().map(|w| w.0).collect();
        let unique: HashSet<u32> = labels.iter().copied().collect();
        if unique.len() != labels.len() {
            return Err(Error::Labels(format!("duplicate wire label in {labels:?}")));
        }
        if wires.iter().any(|w| w.1 == 0) {
            return Err(Error::Subsystems("zero-dimensional wire".into()));
        }
        Ok(Self { dims: wires.iter().map(|w| w.1).collect(), labels })
    }

    pub fn dims(&self) -> &[usize] {
        &self.dims
    }

    pub fn labels(&self) -> &[u32] {
        &self.labels
    }

    pub fn len(&self) -> usize {
        self.dims.len()
    }

    pub fn is_empty(&self) -> bool {
        self.dims.is_empty()
    }

    pub fn total(&self) -> usize {
        self.dims.iter().product()
    }

    pub fn position(&self, label: u32) -> Option<usize> {
        self.labels.iter().position(|&l| l == label)
    }

    pub fn dim_of(&self, label: u32) -> Option<usize> {
        self.position(label).map(|p| self.dims[p])
    }

    /// Positions of the given labels, failing on unknown ones.
    pub fn positions_of(&self, labels: &[u32]) -> Result<Vec<usize>> {
        labels
            .iter()
            .map(|&l| {
                self.position(l)
                    .ok_or_else(|| Error::Labels(format!("label {l} not in {:?}", self.labels)))
            })
            .collect()
    }

    fn select(&self, positions: &[usize]) -> Self {
        Self {
            dims: positions.iter().map(|&p| self.dims[p]).collect(),
            labels: positions.iter().map(|&p| self.labels[p]).collect(),
        }
    }

    fn check_operator(&self, x: &Operator) -> Result<()> {
        let n = self.total();
        if x.rows() != n || x.cols() != n {
            return Err(Error::Subsystems(format!(
                "shape {:?} (total {n}) on a {}x{} operator",
                self.dims,
                x.rows(),
                x.cols()
            )));
        }
        Ok(())
    }

    fn check_positions(&self, which: &[usize]) -> Result<()> {
        let mut seen = HashSet::new();
        for &w in which {
            if w >= self.len() {
                return Err(Error::Subsystems(format!("subsystem {w} out of {}", self.len())));
            }
            if !seen.insert(w) {
                return Err(Error::Subsystems(format!("subsystem {w} listed twice")));
            }
        }
        Ok(())
    }

    fn strides(&self) -> Vec<usize> {
        let mut s = vec![1; self.len()];
        for k in (0..self.len().saturating_sub(1)).rev() {
            s[k] = s[k + 1] * self.dims[k + 1];
        }
        s
    }

    /// Flat offsets of every multi-index over `positions`, enumerated with the
    /// last listed position fastest.
    fn offsets(&self, positions: &[usize]) -> Vec<usize> {
        let strides = self.strides();
        let mut out = vec![0usize];
        for &p in positions {
            let mut next = Vec::with_capacity(out.len() * self.dims[p]);
            for &base in &out {
                for i in 0..self.dims[p] {
                    next.push(base + i * strides[p]);
                }
            }
            out = next;
        }
        out
    }

    fn complement(&self, positions: &[usize]) -> Vec<usize> {
        (0..self.len()).filter(|p| !positions.contains(p)).collect()
    }

    /// Shape left after removing the listed positions.
    pub fn without(&self, positions: &[usize]) -> Self {
        self.select(&self.complement(positions))
    }
}

impl Operator {
    /// Traces out the subsystems at `which` (positions into `shape`).
    pub fn partial_trace(&self, shape: &SubsystemShape, which: &[usize]) -> Result<Operator> {
        shape.check_operator(self)?;
        shape.check_positions(which)?;
        if which.is_empty() {
            return Err(Error::Subsystems("nothing to trace".into()));
        }
        let keep = shape.complement(which);
        let ok = shape.offsets(&keep);
        let ot = shape.offsets(which);
        let m = self.matrix();
        let n = ok.len();
        Ok(Operator::from_fn(n, n, |a, b| {
            ot.iter().map(|&t| m[(ok[a] + t, ok[b] + t)]).sum::<C64>()
        }))
    }

    /// Partial trace addressed by wire labels.
    pub fn partial_trace_labels(&self, shape: &SubsystemShape, labels: &[u32]) -> Result<Operator> {
        self.partial_trace(shape, &shape.positions_of(labels)?)
    }

    /// Transposes the subsystems at `which`, leaving the others untouched.
    pub fn partial_transpose(&self, shape: &SubsystemShape, which: &[usize]) -> Result<Operator> {
        shape.check_operator(self)?;
        shape.check_positions(which)?;
        let rest = shape.complement(which);
        let os = shape.offsets(which);
        let on = shape.offsets(&rest);
        let m = self.matrix();
        let total = shape.total();
        let mut out = DMatrix::from_element(total, total, ZERO);
        for &rs in &os {
            for &rn in &on {
                for &cs in &os {
                    for &cn in &on {
                        out[(rn + cs, cn + rs)] = m[(rn + rs, cn + cs)];
                    }
                }
            }
        }
        Ok(Operator::from_matrix(out))
    }

    /// Reorders tensor factors: factor `k` of the result is factor `order[k]`
    /// of `self`.
    pub fn permute_subsystems(&self, shape: &SubsystemShape, order: &[usize]) -> Result<Operator> {
        shape.check_operator(self)?;
        shape.check_positions(order)?;
        if order.len() != shape.len() {
            return Err(Error::Subsystems(format!(
                "permutation {order:?} of {} subsystems",
                shape.len()
            )));
        }
        let map = shape.offsets(order);
        let m = self.matrix();
        let n = map.len();
        Ok(Operator::from_fn(n, n, |a, b| m[(map[a], map[b])]))
    }
}

/// An operator together with the wires its tensor factors live on.
#[derive(Clone, Debug, PartialEq)]
pub struct LabeledOperator {
    pub op: Operator,
    pub shape: SubsystemShape,
}

impl LabeledOperator {
    pub fn new(op: Operator, shape: SubsystemShape) -> Result<Self> {
        shape.check_operator(&op)?;
        Ok(Self { op, shape })
    }

    /// A scalar comb (no wires).
    pub fn scalar(z: C64) -> Self {
        Self { op: Operator::from_fn(1, 1, |_, _| z), shape: SubsystemShape::new(&[]) }
    }

    /// Reorders factors so that labels appear in `labels` order.
    pub fn reordered(&self, labels: &[u32]) -> Result<Self> {
        if labels.len() != self.shape.len() {
            return Err(Error::Labels(format!(
                "{labels:?} is not a reordering of {:?}",
                self.shape.labels()
            )));
        }
        let order = self.shape.positions_of(labels)?;
        let op = self.op.permute_subsystems(&self.shape, &order)?;
        Ok(Self { op, shape: self.shape.select(&order) })
    }

    pub fn trace_labels(&self, labels: &[u32]) -> Result<Self> {
        let pos = self.shape.positions_of(labels)?;
        let op = self.op.partial_trace(&self.shape, &pos)?;
        Ok(Self { op, shape: self.shape.without(&pos) })
    }

    pub fn labels(&self) -> &[u32] {
        self.shape.labels()
    }
}

/// Link product `R₁ * R₂ = Tr_K[R₁^{θ_K} R₂]`, contracting every wire label
/// shared by the two operands. The result lives on the unconnected wires of
/// `a` followed by those of `b`.
pub fn link_product(a: &LabeledOperator, b: &LabeledOperator) -> Result<LabeledOperator> {
    let connected: Vec<u32> = a
        .labels()
        .iter()
        .copied()
        .filter(|l| b.shape.position(*l).is_some())
        .collect();
    for &l in &connected {
        let (da, db) = (a.shape.dim_of(l).unwrap(), b.shape.dim_of(l).unwrap());
        if da != db {
            return Err(Error::Labels(format!("wire {l} has dimension {da} vs {db}")));
        }
    }
    let free_a: Vec<u32> = a.labels().iter().copied().filter(|l| !connected.contains(l)).collect();
    let free_b: Vec<u32> = b.labels().iter().copied().filter(|l| !connected.contains(l)).collect();

    let a_order: Vec<u32> = free_a.iter().chain(&connected).copied().collect();
    let b_order: Vec<u32> = connected.iter().chain(&free_b).copied().collect();
    let ra = a.reordered(&a_order)?;
    let rb = b.reordered(&b_order)?;

    let dim = |s: &SubsystemShape, ls: &[u32]| ls.iter().map(|&l| s.dim_of(l).unwrap()).product::<usize>();
    let d_a = dim(&a.shape, &free_a);
    let d_k = dim(&a.shape, &connected);
    let d_b = dim(&b.shape, &free_b);

    // Realign: left[(α,α'),(k',k)] = A[(α,k'),(α',k)], right[(k',k),(β,β')] = B[(k',β),(k,β')];
    // the contraction over k, k' is then a plain matrix product.
    let ma = ra.op.matrix();
    let mb = rb.op.matrix();
    let left = DMatrix::from_fn(d_a * d_a, d_k * d_k, |r, c| {
        let (al, alp) = (r / d_a, r % d_a);
        let (kp, k) = (c / d_k, c % d_k);
        ma[(al * d_k + kp, alp * d_k + k)]
    });
    let right = DMatrix::from_fn(d_k * d_k, d_b * d_b, |r, c| {
        let (kp, k) = (r / d_k, r % d_k);
        let (be, bep) = (c / d_b, c % d_b);
        mb[(kp * d_b + be, k * d_b + bep)]
    });
    let prod = left * right;
    let out = Operator::from_fn(d_a * d_b, d_a * d_b, |r, c| {
        let (al, be) = (r / d_b, r % d_b);
        let (alp, bep) = (c / d_b, c % d_b);
        prod[(al * d_a + alp, be * d_b + bep)]
    });

    let mut wires: Vec<(u32, usize)> = free_a.iter().map(|&l| (l, a.shape.dim_of(l).unwrap())).collect();
    wires.extend(free_b.iter().map(|&l| (l, b.shape.dim_of(l).unwrap())));
    LabeledOperator::new(out, SubsystemShape::labeled(&wires)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::operator::{ket_bra, random_density, random_operator, ONE};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn rng(seed: u64) -> ChaCha8Rng {
        ChaCha8Rng::seed_from_u64(seed)
    }

    #[test]
    fn partial_trace_of_double_ket_outer() {
        let mut r = rng(21);
        let a = random_operator(2, 2, &mut r);
        let b = random_operator(2, 2, &mut r);
        let x = ket_bra(&a, &b);
        let shape = SubsystemShape::new(&[2, 2]);
        let t = x.partial_trace(&shape, &[0]).unwrap();
        let expect = &a.transpose() * &b.conj();
        assert!((&t - &expect).max_abs() < 1e-13);
    }

    #[test]
    fn partial_trace_product_state() {
        let mut r = rng(22);
        let rho = random_density(2, &mut r);
        let tau = random_operator(3, 3, &mut r);
        let x = rho.tensor(&tau);
        let t = x.partial_trace(&SubsystemShape::new(&[2, 3]), &[1]).unwrap();
        assert!((&t - &rho.scale(tau.trace())).max_abs() < 1e-13);
    }

    #[test]
    fn partial_trace_maximally_entangled() {
        let id = Operator::identity(2);
        let x = ket_bra(&id, &id);
        let t = x.partial_trace(&SubsystemShape::new(&[2, 2]), &[0]).unwrap();
        assert!((&t - &id).max_abs() < 1e-15);
    }

    #[test]
    fn partial_trace_rejects_bad_shape() {
        let x = Operator::identity(4);
        assert!(x.partial_trace(&SubsystemShape::new(&[2, 3]), &[0]).is_err());
        assert!(x.partial_trace(&SubsystemShape::new(&[2, 2]), &[2]).is_err());
        assert!(x.partial_trace(&SubsystemShape::new(&[2, 2]), &[]).is_err());
    }

    #[test]
    fn partial_transpose_full_and_involution() {
        let mut r = rng(23);
        let x = random_operator(4, 4, &mut r);
        let s = SubsystemShape::new(&[2, 2]);
        let full = x.partial_transpose(&s, &[0, 1]).unwrap();
        assert!((&full - &x.transpose()).max_abs() < 1e-15);
        let twice = x.partial_transpose(&s, &[1]).unwrap().partial_transpose(&s, &[1]).unwrap();
        assert!((&twice - &x).max_abs() < 1e-15);
    }

    #[test]
    fn partial_transpose_of_maximally_entangled_is_swap() {
        let id = Operator::identity(2);
        let x = ket_bra(&id, &id);
        let pt = x.partial_transpose(&SubsystemShape::new(&[2, 2]), &[0]).unwrap();
        // SWAP|ab⟩ = |ba⟩
        let swap = Operator::from_fn(4, 4, |r, c| {
            let (a, b) = (c / 2, c % 2);
            if r == b * 2 + a { ONE } else { ZERO }
        });
        assert!((&pt - &swap).max_abs() < 1e-15);
    }

    #[test]
    fn permute_matches_swapped_tensor() {
        let mut r = rng(24);
        let a = random_operator(2, 2, &mut r);
        let b = random_operator(3, 3, &mut r);
        let ab = a.tensor(&b);
        let ba = ab.permute_subsystems(&SubsystemShape::new(&[2, 3]), &[1, 0]).unwrap();
        assert!((&ba - &b.tensor(&a)).max_abs() < 1e-15);
    }

    #[test]
    fn link_scalar_is_identity() {
        let mut r = rng(25);
        let x = random_operator(4, 4, &mut r);
        let a = LabeledOperator::new(x.clone(), SubsystemShape::new(&[2, 2])).unwrap();
        let out = link_product(&a, &LabeledOperator::scalar(ONE)).unwrap();
        assert!((&out.op - &x).max_abs() < 1e-15);
        assert_eq!(out.labels(), &[0, 1]);
    }

    #[test]
    fn link_rejects_dimension_mismatch() {
        let a = LabeledOperator::new(Operator::identity(2), SubsystemShape::labeled(&[(0, 2)]).unwrap()).unwrap();
        let b = LabeledOperator::new(Operator::identity(3), SubsystemShape::labeled(&[(0, 3)]).unwrap()).unwrap();
        assert!(matches!(link_product(&a, &b), Err(Error::Labels(_))));
    }

    #[test]
    fn duplicate_labels_rejected() {
        assert!(SubsystemShape::labeled(&[(1, 2), (1, 2)]).is_err());
    }
}
