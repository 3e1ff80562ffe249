//! Finite-dimensional tracial algebras and their elements.
//!
//! An algebra is a direct sum of full matrix blocks `M_{d_1} ⊕ … ⊕ M_{d_k}`
//! carrying the normalized trace `τ(x) = Σ_i w_i · tr(x_i) / d_i` with
//! positive weights summing to one. A single block models `(M_n, tr/n)`; all
//! blocks of size one model a finite probability space.
//!
//! Every element can be flattened into coordinates in the orthonormal basis
//! `sqrt(d_i / w_i) · e_{rc}` of the trace inner product, so that
//! `τ(a* b)` is the Euclidean inner product of coordinate vectors. Channels
//! are stored as matrices acting on these coordinates.

use std::fmt;
use std::ops::{Add, Mul, Neg, Sub};
use std::sync::Arc;

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use num_complex::Complex64;

use crate::error::{domain, structural, Result};

pub type C64 = Complex64;
pub type CMatrix = DMatrix<C64>;
pub type CVector = DVector<C64>;

/// Operator-norm deviation `‖x − x*‖` tolerated by the self-adjointness test.
pub const HERMITIAN_TOL: f64 = 1e-10;
/// Minimum eigenvalue floor for the positivity test.
pub const POSITIVITY_TOL: f64 = 1e-10;
/// Singular values below this fraction of the largest are treated as zero.
pub const RANK_TOL: f64 = 1e-12;

const WEIGHT_SUM_TOL: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Block {
    pub dim: usize,
    pub weight: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TracialAlgebra {
    blocks: Vec<Block>,
    offsets: Vec<usize>,
}

impl TracialAlgebra {
    pub fn new(blocks: Vec<Block>) -> Result<Self> {
        if blocks.is_empty() {
            return Err(structural("an algebra needs at least one block"));
        }
        let mut total = 0.0;
        for (i, b) in blocks.iter().enumerate() {
            if b.dim == 0 {
                return Err(structural(format!("block {i} has dimension 0")));
            }
            if !(b.weight > 0.0) || !b.weight.is_finite() {
                return Err(structural(format!("block {i} has non-positive weight {}", b.weight)));
            }
            total += b.weight;
        }
        if (total - 1.0).abs() > WEIGHT_SUM_TOL {
            return Err(structural(format!("block weights sum to {total}, expected 1")));
        }
        let mut offsets = Vec::with_capacity(blocks.len());
        let mut acc = 0;
        for b in &blocks {
            offsets.push(acc);
            acc += b.dim * b.dim;
        }
        Ok(Self { blocks, offsets })
    }

    /// `(M_n, tr/n)`.
    pub fn matrix(n: usize) -> Result<Self> {
        Self::new(vec![Block { dim: n, weight: 1.0 }])
    }

    /// A finite probability space with the given point masses.
    pub fn commutative(weights: &[f64]) -> Result<Self> {
        Self::new(weights.iter().map(|&weight| Block { dim: 1, weight }).collect())
    }

    pub fn uniform_commutative(n: usize) -> Result<Self> {
        if n == 0 {
            return Err(structural("an algebra needs at least one point"));
        }
        Self::commutative(&vec![1.0 / n as f64; n])
    }

    pub fn blocks(&self) -> &[Block] {
        &self.blocks
    }

    pub fn num_blocks(&self) -> usize {
        self.blocks.len()
    }

    /// Complex dimension `Σ d_i²` of the algebra as a vector space.
    pub fn coord_dim(&self) -> usize {
        self.blocks.iter().map(|b| b.dim * b.dim).sum()
    }

    /// Size `Σ d_i` of the matrices the algebra is represented on.
    pub fn matrix_size(&self) -> usize {
        self.blocks.iter().map(|b| b.dim).sum()
    }

    pub fn is_commutative(&self) -> bool {
        self.blocks.iter().all(|b| b.dim == 1)
    }

    pub fn is_single_block(&self) -> bool {
        self.blocks.len() == 1
    }

    pub(crate) fn block_offset(&self, block: usize) -> usize {
        self.offsets[block]
    }

    /// Same weights, every block dimension doubled: `M_2 ⊗ M` with trace
    /// `tr_2 ⊗ τ`.
    pub fn doubled(&self) -> Self {
        let blocks = self
            .blocks
            .iter()
            .map(|b| Block { dim: 2 * b.dim, weight: b.weight })
            .collect();
        Self::new(blocks).expect("doubling preserves validity")
    }

    /// Locates coordinate `k` as `(block, row, col)`.
    pub fn coord_position(&self, k: usize) -> (usize, usize, usize) {
        let block = match self.offsets.binary_search(&k) {
            Ok(i) => i,
            Err(i) => i - 1,
        };
        let d = self.blocks[block].dim;
        let local = k - self.offsets[block];
        (block, local / d, local % d)
    }

    /// Scale of the unnormalized matrix unit `e_{rc}` of block `i` in
    /// orthonormal coordinates: `sqrt(w_i / d_i)`.
    pub(crate) fn coord_scale(&self, block: usize) -> f64 {
        let b = self.blocks[block];
        (b.weight / b.dim as f64).sqrt()
    }
}

impl fmt::Display for TracialAlgebra {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let parts: Vec<String> = self
            .blocks
            .iter()
            .map(|b| format!("M_{}[{}]", b.dim, b.weight))
            .collect();
        write!(f, "{}", parts.join(" ⊕ "))
    }
}

/// A block-diagonal element of a [`TracialAlgebra`].
///
/// Arithmetic operators panic on operands from different algebras, the same
/// way matrix arithmetic panics on mismatched shapes; the fallible entry
/// points return [`crate::Error::Structural`] instead.
#[derive(Debug, Clone)]
pub struct Element {
    algebra: Arc<TracialAlgebra>,
    blocks: Vec<CMatrix>,
}

impl Element {
    pub fn from_blocks(algebra: &Arc<TracialAlgebra>, blocks: Vec<CMatrix>) -> Result<Self> {
        if blocks.len() != algebra.num_blocks() {
            return Err(structural(format!(
                "expected {} blocks, got {}",
                algebra.num_blocks(),
                blocks.len()
            )));
        }
        for (i, (m, b)) in blocks.iter().zip(algebra.blocks()).enumerate() {
            if m.nrows() != b.dim || m.ncols() != b.dim {
                return Err(structural(format!(
                    "block {i} is {}x{}, expected {}x{}",
                    m.nrows(),
                    m.ncols(),
                    b.dim,
                    b.dim
                )));
            }
        }
        Ok(Self { algebra: Arc::clone(algebra), blocks })
    }

    /// An element of a single-block algebra.
    pub fn from_matrix(algebra: &Arc<TracialAlgebra>, m: CMatrix) -> Result<Self> {
        Self::from_blocks(algebra, vec![m])
    }

    /// A diagonal element of a single-block algebra, or a function on the
    /// points of a commutative one.
    pub fn from_real_diagonal(algebra: &Arc<TracialAlgebra>, diag: &[f64]) -> Result<Self> {
        if algebra.is_commutative() {
            if diag.len() != algebra.num_blocks() {
                return Err(structural("diagonal length does not match the number of points"));
            }
            let blocks = diag.iter().map(|&v| CMatrix::from_element(1, 1, C64::new(v, 0.0))).collect();
            return Self::from_blocks(algebra, blocks);
        }
        if !algebra.is_single_block() || diag.len() != algebra.blocks()[0].dim {
            return Err(structural("diagonal does not match a single-block algebra"));
        }
        let v = DVector::from_iterator(diag.len(), diag.iter().map(|&d| C64::new(d, 0.0)));
        Self::from_matrix(algebra, CMatrix::from_diagonal(&v))
    }

    pub fn zero(algebra: &Arc<TracialAlgebra>) -> Self {
        let blocks = algebra.blocks().iter().map(|b| CMatrix::zeros(b.dim, b.dim)).collect();
        Self { algebra: Arc::clone(algebra), blocks }
    }

    pub fn identity(algebra: &Arc<TracialAlgebra>) -> Self {
        let blocks = algebra.blocks().iter().map(|b| CMatrix::identity(b.dim, b.dim)).collect();
        Self { algebra: Arc::clone(algebra), blocks }
    }

    /// The `k`-th vector of the orthonormal trace basis.
    pub fn basis(algebra: &Arc<TracialAlgebra>, k: usize) -> Self {
        let mut coords = CVector::zeros(algebra.coord_dim());
        coords[k] = C64::new(1.0, 0.0);
        Self::from_coords(algebra, &coords)
    }

    /// Unnormalized matrix unit `e_{rc}` inside block `block`.
    pub fn matrix_unit(algebra: &Arc<TracialAlgebra>, block: usize, r: usize, c: usize) -> Self {
        let mut x = Self::zero(algebra);
        x.blocks[block][(r, c)] = C64::new(1.0, 0.0);
        x
    }

    pub fn algebra(&self) -> &Arc<TracialAlgebra> {
        &self.algebra
    }

    pub fn blocks(&self) -> &[CMatrix] {
        &self.blocks
    }

    pub fn into_blocks(self) -> Vec<CMatrix> {
        self.blocks
    }

    pub fn same_algebra(&self, other: &Element) -> bool {
        Arc::ptr_eq(&self.algebra, &other.algebra) || *self.algebra == *other.algebra
    }

    pub(crate) fn check_same(&self, other: &Element) -> Result<()> {
        if self.same_algebra(other) {
            Ok(())
        } else {
            Err(structural(format!(
                "algebra mismatch: {} vs {}",
                self.algebra, other.algebra
            )))
        }
    }

    pub fn to_coords(&self) -> CVector {
        let mut v = CVector::zeros(self.algebra.coord_dim());
        for (i, m) in self.blocks.iter().enumerate() {
            let s = 1.0 / self.algebra.coord_scale(i);
            let off = self.algebra.block_offset(i);
            let d = m.nrows();
            for r in 0..d {
                for c in 0..d {
                    v[off + r * d + c] = m[(r, c)] / s;
                }
            }
        }
        v
    }

    pub fn from_coords(algebra: &Arc<TracialAlgebra>, v: &CVector) -> Self {
        assert_eq!(v.len(), algebra.coord_dim(), "coordinate vector has the wrong length");
        let blocks = algebra
            .blocks()
            .iter()
            .enumerate()
            .map(|(i, b)| {
                let s = 1.0 / algebra.coord_scale(i);
                let off = algebra.block_offset(i);
                CMatrix::from_fn(b.dim, b.dim, |r, c| v[off + r * b.dim + c] * s)
            })
            .collect();
        Self { algebra: Arc::clone(algebra), blocks }
    }

    pub fn map_blocks(&self, f: impl Fn(usize, &CMatrix) -> CMatrix) -> Self {
        let blocks = self.blocks.iter().enumerate().map(|(i, m)| f(i, m)).collect();
        Self { algebra: Arc::clone(&self.algebra), blocks }
    }

    pub fn adjoint(&self) -> Self {
        self.map_blocks(|_, m| m.adjoint())
    }

    pub fn scale(&self, c: C64) -> Self {
        self.map_blocks(|_, m| m * c)
    }

    pub fn scale_re(&self, c: f64) -> Self {
        self.map_blocks(|_, m| m * C64::new(c, 0.0))
    }

    /// `τ(x)`.
    pub fn trace(&self) -> C64 {
        self.blocks
            .iter()
            .zip(self.algebra.blocks())
            .map(|(m, b)| m.trace() * (b.weight / b.dim as f64))
            .sum()
    }

    /// `τ(a* b)`.
    pub fn inner(&self, other: &Element) -> Result<C64> {
        self.check_same(other)?;
        Ok(self.inner_unchecked(other))
    }

    pub(crate) fn inner_unchecked(&self, other: &Element) -> C64 {
        self.blocks
            .iter()
            .zip(&other.blocks)
            .zip(self.algebra.blocks())
            .map(|((a, b), blk)| a.dotc(b) * (blk.weight / blk.dim as f64))
            .sum()
    }

    /// `‖x‖_2 = τ(x* x)^{1/2}`.
    pub fn norm2(&self) -> f64 {
        self.inner_unchecked(self).re.max(0.0).sqrt()
    }

    /// Largest singular value over all blocks.
    pub fn op_norm(&self) -> f64 {
        self.singular_values()
            .iter()
            .flat_map(|s| s.iter().copied())
            .fold(0.0, f64::max)
    }

    /// Sup-norm of the entrywise difference, for tolerance checks.
    pub fn max_abs_diff(&self, other: &Element) -> f64 {
        self.blocks
            .iter()
            .zip(&other.blocks)
            .flat_map(|(a, b)| a.iter().zip(b.iter()).map(|(x, y)| (x - y).norm()))
            .fold(0.0, f64::max)
    }

    pub fn singular_values(&self) -> Vec<DVector<f64>> {
        self.blocks.iter().map(|m| m.clone().singular_values()).collect()
    }

    /// `‖x‖_p = τ(|x|^p)^{1/p}`, with `p = ∞` giving the operator norm.
    pub fn schatten_norm(&self, p: f64) -> Result<f64> {
        if p.is_nan() || p < 1.0 {
            return Err(domain(format!("Schatten norm needs p ≥ 1, got {p}")));
        }
        Ok(self.lp_norm_unchecked(p))
    }

    pub(crate) fn lp_norm_unchecked(&self, p: f64) -> f64 {
        let svs = self.singular_values();
        if p.is_infinite() {
            return svs.iter().flat_map(|s| s.iter().copied()).fold(0.0, f64::max);
        }
        let smax = svs.iter().flat_map(|s| s.iter().copied()).fold(0.0, f64::max);
        if smax == 0.0 {
            return 0.0;
        }
        // Factor out the largest singular value so large p cannot overflow.
        let sum: f64 = svs
            .iter()
            .zip(self.algebra.blocks())
            .map(|(s, b)| b.weight / b.dim as f64 * s.iter().map(|v| (v / smax).powf(p)).sum::<f64>())
            .sum();
        smax * sum.powf(1.0 / p)
    }

    pub fn hermitian_deviation(&self) -> f64 {
        (self - &self.adjoint()).op_norm()
    }

    pub fn is_self_adjoint(&self) -> bool {
        self.hermitian_deviation() <= HERMITIAN_TOL
    }

    /// `x*x = xx*` up to the Hermitian tolerance.
    pub fn is_normal(&self) -> bool {
        let a = self.adjoint();
        (&(&a * self) - &(self * &a)).op_norm() <= HERMITIAN_TOL * self.op_norm().max(1.0)
    }

    /// Smallest eigenvalue of the Hermitian part.
    pub fn min_eigenvalue(&self) -> f64 {
        self.hermitian_eigen()
            .iter()
            .flat_map(|(vals, _)| vals.iter().copied())
            .fold(f64::INFINITY, f64::min)
    }

    pub fn is_positive(&self) -> bool {
        self.is_self_adjoint() && self.min_eigenvalue() >= -POSITIVITY_TOL
    }

    /// Eigendecomposition of the Hermitian part of every block.
    pub fn hermitian_eigen(&self) -> Vec<(DVector<f64>, CMatrix)> {
        self.blocks
            .iter()
            .map(|m| {
                let h = (m + m.adjoint()) * C64::new(0.5, 0.0);
                let e = SymmetricEigen::new(h);
                (e.eigenvalues, e.eigenvectors)
            })
            .collect()
    }

    /// Applies `f` to the spectrum of the Hermitian part.
    pub fn spectral_map(&self, f: impl Fn(f64) -> f64) -> Self {
        let blocks = self
            .hermitian_eigen()
            .into_iter()
            .map(|(vals, vecs)| {
                let mapped = DVector::from_iterator(vals.len(), vals.iter().map(|&v| C64::new(f(v), 0.0)));
                &vecs * CMatrix::from_diagonal(&mapped) * vecs.adjoint()
            })
            .collect();
        Self { algebra: Arc::clone(&self.algebra), blocks }
    }

    /// `x_+^α − x_−^α` for self-adjoint `x`; equals `x^α` when `x ≥ 0`.
    pub fn signed_power(&self, alpha: f64) -> Result<Self> {
        if !(alpha > 0.0) {
            return Err(domain(format!("signed power needs α > 0, got {alpha}")));
        }
        if !self.is_self_adjoint() {
            return Err(domain("signed power needs a self-adjoint element; use the Mazur map"));
        }
        Ok(self.spectral_map(|v| if v == 0.0 { 0.0 } else { v.signum() * v.abs().powf(alpha) }))
    }

    /// `x^α` for positive `x`, with tiny negative eigenvalues clipped to zero.
    pub fn positive_power(&self, alpha: f64) -> Result<Self> {
        if !self.is_positive() {
            return Err(domain("expected a positive element"));
        }
        Ok(self.spectral_map(|v| v.max(0.0).powf(alpha)))
    }

    pub fn positive_part(&self) -> Self {
        self.spectral_map(|v| v.max(0.0))
    }

    pub fn negative_part(&self) -> Self {
        self.spectral_map(|v| (-v).max(0.0))
    }

    /// `|x| = (x* x)^{1/2}`.
    pub fn abs(&self) -> Self {
        self.polar_map(|s| s)
    }

    /// `u · g(|x|)` from the polar decomposition `x = u|x|`, where the
    /// partial isometry vanishes on the numerical kernel.
    fn polar_map(&self, g: impl Fn(f64) -> f64) -> Self {
        let svds: Vec<_> = self.blocks.iter().map(crate::linalg::svd).collect();
        let smax = svds
            .iter()
            .flat_map(|s| s.singular_values.iter().copied())
            .fold(0.0, f64::max);
        let cutoff = RANK_TOL * smax;
        let blocks = svds
            .into_iter()
            .map(|svd| {
                let u = svd.u.expect("u requested");
                let vt = svd.v_t.expect("v_t requested");
                let s = DVector::from_iterator(
                    svd.singular_values.len(),
                    svd.singular_values
                        .iter()
                        .map(|&v| C64::new(if v > cutoff && smax > 0.0 { g(v) } else { 0.0 }, 0.0)),
                );
                if vt.nrows() == u.ncols() {
                    // |x| = V Σ V*, u|x|^r = U Σ^r V*.
                    &u * CMatrix::from_diagonal(&s) * &vt
                } else {
                    unreachable!("square blocks give square factors")
                }
            })
            .collect();
        Self { algebra: Arc::clone(&self.algebra), blocks }
    }

    /// Partial isometry `u` of the polar decomposition.
    pub fn polar_unitary_part(&self) -> Self {
        self.polar_map(|_| 1.0)
    }

    /// `M_{p,q}(x) = x|x|^{p/q − 1}`, mapping the unit sphere of `L_p` onto
    /// that of `L_q`.
    pub fn mazur(&self, p: f64, q: f64) -> Result<Self> {
        if !(p > 0.0 && p.is_finite() && q > 0.0 && q.is_finite()) {
            return Err(domain(format!("Mazur map needs p, q in (0, ∞), got ({p}, {q})")));
        }
        let r = p / q;
        Ok(self.polar_map(|s| s.powf(r)))
    }

    /// Norming functional `J_p(x) = u|x|^{p−1} / ‖x‖_p^{p−1}` in `L_{p'}`.
    pub fn duality_map(&self, p: f64) -> Result<Self> {
        if !(p > 1.0 && p.is_finite()) {
            return Err(domain(format!("duality map needs p in (1, ∞), got {p}")));
        }
        let n = self.lp_norm_unchecked(p);
        if n == 0.0 {
            return Err(domain("duality map of the zero element"));
        }
        Ok(self.duality_map_unchecked(p, n))
    }

    pub(crate) fn duality_map_unchecked(&self, p: f64, norm: f64) -> Self {
        // (s / ‖x‖)^{p−1} keeps the arithmetic in range for large p.
        self.polar_map(|s| (s / norm).powf(p - 1.0))
    }

    /// Self-adjoint dilation `[[0, x], [x*, 0]]` in `M_2 ⊗ M`.
    ///
    /// The doubled algebra carries the normalized trace `tr_2 ⊗ τ`, under
    /// which the dilation has the same `L_p` norm as `x` for every `p`.
    pub fn embed_2x2(&self) -> Self {
        let doubled = Arc::new(self.algebra.doubled());
        let blocks = self
            .blocks
            .iter()
            .map(|m| {
                let d = m.nrows();
                let mut out = CMatrix::zeros(2 * d, 2 * d);
                out.view_mut((0, d), (d, d)).copy_from(m);
                out.view_mut((d, 0), (d, d)).copy_from(&m.adjoint());
                out
            })
            .collect();
        Self { algebra: doubled, blocks }
    }
}

impl PartialEq for Element {
    fn eq(&self, other: &Self) -> bool {
        self.same_algebra(other) && self.blocks == other.blocks
    }
}

macro_rules! binop {
    ($trait:ident, $method:ident, $f:expr) => {
        impl $trait<&Element> for &Element {
            type Output = Element;
            fn $method(self, rhs: &Element) -> Element {
                assert!(self.same_algebra(rhs), "algebra mismatch in {}", stringify!($method));
                let blocks = self.blocks.iter().zip(&rhs.blocks).map(|(a, b)| $f(a, b)).collect();
                Element { algebra: Arc::clone(&self.algebra), blocks }
            }
        }
        impl $trait<Element> for Element {
            type Output = Element;
            fn $method(self, rhs: Element) -> Element {
                (&self).$method(&rhs)
            }
        }
    };
}

binop!(Add, add, |a: &CMatrix, b: &CMatrix| a + b);
binop!(Sub, sub, |a: &CMatrix, b: &CMatrix| a - b);
binop!(Mul, mul, |a: &CMatrix, b: &CMatrix| a * b);

impl Neg for &Element {
    type Output = Element;
    fn neg(self) -> Element {
        self.map_blocks(|_, m| -m)
    }
}

/// `τ(a* b)`; fails when the operands live in different algebras.
pub fn inner_product(a: &Element, b: &Element) -> Result<C64> {
    a.inner(b)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn m2() -> Arc<TracialAlgebra> {
        Arc::new(TracialAlgebra::matrix(2).unwrap())
    }

    fn diag(a: &Arc<TracialAlgebra>, d: &[f64]) -> Element {
        Element::from_real_diagonal(a, d).unwrap()
    }

    #[test]
    fn rejects_bad_blocks() {
        assert!(TracialAlgebra::new(vec![]).is_err());
        assert!(TracialAlgebra::new(vec![Block { dim: 0, weight: 1.0 }]).is_err());
        assert!(TracialAlgebra::new(vec![Block { dim: 2, weight: 0.7 }]).is_err());
        assert!(TracialAlgebra::new(vec![
            Block { dim: 2, weight: 0.5 },
            Block { dim: 1, weight: -0.5 }
        ])
        .is_err());
        let a = TracialAlgebra::new(vec![Block { dim: 2, weight: 0.25 }, Block { dim: 3, weight: 0.75 }]).unwrap();
        assert_eq!(a.coord_dim(), 13);
        assert_eq!(a.coord_position(4), (1, 0, 0));
        assert_eq!(a.coord_position(12), (1, 2, 2));
    }

    #[test]
    fn trace_of_identity_is_one() {
        let a = Arc::new(TracialAlgebra::new(vec![Block { dim: 2, weight: 0.3 }, Block { dim: 3, weight: 0.7 }]).unwrap());
        assert_relative_eq!(Element::identity(&a).trace().re, 1.0, epsilon = 1e-15);
    }

    #[test]
    fn inner_product_examples() {
        let a = m2();
        let one = Element::identity(&a);
        assert_relative_eq!(inner_product(&one, &one).unwrap().re, 1.0);
        let z = diag(&a, &[1.0, -1.0]);
        assert_relative_eq!(inner_product(&z, &z).unwrap().re, 1.0);
        let v = inner_product(&diag(&a, &[3.0, 4.0]), &diag(&a, &[1.0, 2.0])).unwrap();
        assert_relative_eq!(v.re, 5.5, epsilon = 1e-14);
        assert_relative_eq!(v.im, 0.0);
    }

    #[test]
    fn inner_product_rejects_mismatch() {
        let a = m2();
        let b = Arc::new(TracialAlgebra::matrix(3).unwrap());
        let err = inner_product(&Element::identity(&a), &Element::identity(&b)).unwrap_err();
        assert!(matches!(err, crate::Error::Structural(_)));
    }

    #[test]
    fn coords_are_orthonormal() {
        let a = Arc::new(TracialAlgebra::new(vec![Block { dim: 2, weight: 0.4 }, Block { dim: 1, weight: 0.6 }]).unwrap());
        for i in 0..a.coord_dim() {
            for j in 0..a.coord_dim() {
                let v = Element::basis(&a, i).inner(&Element::basis(&a, j)).unwrap();
                let want = if i == j { 1.0 } else { 0.0 };
                assert_relative_eq!(v.re, want, epsilon = 1e-14);
            }
        }
    }

    #[test]
    fn schatten_examples() {
        let a = m2();
        for p in [1.0, 1.5, 2.0, 3.0, f64::INFINITY] {
            assert_relative_eq!(Element::identity(&a).schatten_norm(p).unwrap(), 1.0, epsilon = 1e-14);
            assert_relative_eq!(diag(&a, &[1.0, -1.0]).schatten_norm(p).unwrap(), 1.0, epsilon = 1e-14);
        }
        assert_relative_eq!(diag(&a, &[3.0, 4.0]).schatten_norm(2.0).unwrap(), 3.5355339059327378, epsilon = 1e-14);
        assert!(matches!(Element::identity(&a).schatten_norm(0.5), Err(crate::Error::Domain(_))));
    }

    #[test]
    fn signed_power_examples() {
        let a = m2();
        let one = Element::identity(&a);
        assert!(one.signed_power(7.0).unwrap().max_abs_diff(&one) < 1e-14);
        let r = diag(&a, &[4.0, -9.0]).signed_power(0.5).unwrap();
        assert!(r.max_abs_diff(&diag(&a, &[2.0, -3.0])) < 1e-13);
        let r = diag(&a, &[4.0, 0.0]).signed_power(2.0).unwrap();
        assert!(r.max_abs_diff(&diag(&a, &[16.0, 0.0])) < 1e-13);
        let e12 = Element::matrix_unit(&a, 0, 0, 1);
        assert!(matches!(e12.signed_power(1.0), Err(crate::Error::Domain(_))));
    }

    #[test]
    fn mazur_examples() {
        let a = m2();
        let one = Element::identity(&a);
        assert!(one.mazur(3.0, 1.5).unwrap().max_abs_diff(&one) < 1e-14);
        let r = diag(&a, &[3.0, 4.0]).mazur(2.0, 1.0).unwrap();
        assert!(r.max_abs_diff(&diag(&a, &[9.0, 16.0])) < 1e-12);
        let z = diag(&a, &[1.0, -1.0]);
        assert!(z.mazur(2.0, 4.0).unwrap().max_abs_diff(&z) < 1e-14);
        // Rank-deficient input: the partial isometry vanishes on the kernel.
        let e12 = Element::matrix_unit(&a, 0, 0, 1);
        assert!(e12.mazur(2.0, 0.5).unwrap().max_abs_diff(&e12) < 1e-14);
    }

    #[test]
    fn duality_examples() {
        let a = m2();
        let u = Element::from_matrix(
            &a,
            CMatrix::from_row_slice(2, 2, &[C64::new(0.0, 0.0), C64::new(0.0, 1.0), C64::new(1.0, 0.0), C64::new(0.0, 0.0)]),
        )
        .unwrap();
        for p in [1.5, 3.0] {
            assert!(u.duality_map(p).unwrap().max_abs_diff(&u) < 1e-14);
        }
        let x = Element::matrix_unit(&a, 0, 1, 0).scale_re(2.0) + diag(&a, &[0.5, 0.0]);
        assert!(x.duality_map(2.0).unwrap().max_abs_diff(&x.scale_re(1.0 / x.norm2())) < 1e-14);

        // J_3(diag(1, 2)) = diag(1, 4) / ‖diag(1, 2)‖_3^2 with ‖·‖_3 = ((1 + 8)/2)^{1/3}.
        let j = diag(&a, &[1.0, 2.0]).duality_map(3.0).unwrap();
        let n3 = 4.5f64.powf(1.0 / 3.0);
        assert!(j.max_abs_diff(&diag(&a, &[1.0 / (n3 * n3), 4.0 / (n3 * n3)])) < 1e-13);
        assert_relative_eq!(j.schatten_norm(1.5).unwrap(), 1.0, epsilon = 1e-12);
        assert_relative_eq!(j.inner(&diag(&a, &[1.0, 2.0])).unwrap().re, n3, epsilon = 1e-12);

        assert!(matches!(Element::zero(&a).duality_map(2.0), Err(crate::Error::Domain(_))));
    }

    #[test]
    fn embed_examples() {
        let a1 = Arc::new(TracialAlgebra::matrix(1).unwrap());
        assert!(Element::zero(&a1).embed_2x2().max_abs_diff(&Element::zero(&Arc::new(a1.doubled()))) == 0.0);
        let e = Element::identity(&a1).embed_2x2();
        assert!(e.is_self_adjoint());
        assert_relative_eq!(e.schatten_norm(2.0).unwrap(), 1.0, epsilon = 1e-15);

        let a = m2();
        let x = Element::matrix_unit(&a, 0, 0, 1);
        let e = x.embed_2x2();
        // Oracle: the dilation has singular values {1, 1, 0, 0} on M_4 with tr/4,
        // so ‖·‖_4 = (2/4)^{1/4}; x has {1, 0} on M_2, ‖x‖_4 = (1/2)^{1/4}.
        assert_relative_eq!(e.schatten_norm(4.0).unwrap(), 0.5f64.powf(0.25), epsilon = 1e-14);
        assert_relative_eq!(x.schatten_norm(4.0).unwrap(), 0.5f64.powf(0.25), epsilon = 1e-14);
    }

    #[test]
    fn positive_and_negative_parts() {
        let a = m2();
        let x = diag(&a, &[2.0, -3.0]);
        assert!(x.positive_part().max_abs_diff(&diag(&a, &[2.0, 0.0])) < 1e-14);
        assert!(x.negative_part().max_abs_diff(&diag(&a, &[0.0, 3.0])) < 1e-14);
    }
}
