//! Unital *-subalgebras, conditional expectations, fixed-point algebras and
//! explicit factorizations `T = E_M ∘ π` of Markov maps.

use std::f64::consts::PI;
use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::algebra::{CMatrix, CVector, Element, TracialAlgebra, C64};
use crate::channels::{MarkovMap, Representation};
use crate::error::{structural, Error, Result};

/// Relative residual below which a vector counts as lying in a span.
pub const SPAN_TOL: f64 = 1e-10;
/// Closure residual tolerated by the subalgebra invariants.
pub const CLOSURE_TOL: f64 = 1e-9;
/// Singular values of `[T − I; T† − I]` below this mark fixed vectors.
pub const FIXED_POINT_TOL: f64 = 1e-8;
/// Principal-angle cosine threshold for the intersection of two spans.
pub const INTERSECTION_TOL: f64 = 1e-9;
/// Residual gate for factorization certificates.
pub const FACTORIZATION_TOL: f64 = 1e-9;

const MAX_BRANCHES: usize = 4096;

/// A unital *-subalgebra given by a trace-orthonormal basis.
#[derive(Debug, Clone)]
pub struct Subalgebra {
    algebra: Arc<TracialAlgebra>,
    basis: Vec<Element>,
    /// Coordinates of the basis as columns.
    frame: CMatrix,
}

/// Residuals of the subalgebra invariants.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SubalgebraResiduals {
    pub gram: f64,
    pub adjoint: f64,
    pub product: f64,
    pub identity: f64,
}

impl SubalgebraResiduals {
    pub fn passes(&self) -> bool {
        self.gram <= SPAN_TOL && self.adjoint <= CLOSURE_TOL && self.product <= CLOSURE_TOL && self.identity <= SPAN_TOL
    }
}

/// Orthonormalizes `candidates` against the columns already in `frame`
/// (twice-iterated Gram–Schmidt), dropping vectors already in the span.
/// Residuals are measured relative to `max(‖v‖, floor)`.
fn extend_orthonormal(frame: &mut Vec<CVector>, candidates: impl IntoIterator<Item = CVector>, floor: f64) {
    for v in candidates {
        let norm0 = v.norm();
        if norm0 == 0.0 {
            continue;
        }
        let mut r = v;
        for _ in 0..2 {
            for q in frame.iter() {
                let c = q.dotc(&r);
                r -= q * c;
            }
        }
        let n = r.norm();
        if n > SPAN_TOL * norm0.max(floor) {
            frame.push(r / C64::new(n, 0.0));
        }
    }
}

fn frame_matrix(n: usize, cols: &[CVector]) -> CMatrix {
    let mut m = CMatrix::zeros(n, cols.len());
    for (j, c) in cols.iter().enumerate() {
        m.set_column(j, c);
    }
    m
}

impl Subalgebra {
    fn from_frame_unchecked(algebra: &Arc<TracialAlgebra>, cols: Vec<CVector>) -> Self {
        let frame = frame_matrix(algebra.coord_dim(), &cols);
        let basis = cols.iter().map(|c| Element::from_coords(algebra, c)).collect();
        Self { algebra: Arc::clone(algebra), basis, frame }
    }

    /// The span of `elements`, which must already be a unital *-subalgebra.
    pub fn from_spanning(algebra: &Arc<TracialAlgebra>, elements: &[Element]) -> Result<Self> {
        for e in elements {
            e.check_same(&Element::identity(algebra))?;
        }
        let mut cols = Vec::new();
        extend_orthonormal(&mut cols, elements.iter().map(Element::to_coords), 0.0);
        let sub = Self::from_frame_unchecked(algebra, cols);
        let res = sub.residuals();
        if !res.passes() {
            return Err(structural(format!("span is not a unital *-subalgebra: {res:?}")));
        }
        Ok(sub)
    }

    pub fn scalars(algebra: &Arc<TracialAlgebra>) -> Self {
        Self::from_frame_unchecked(algebra, vec![Element::identity(algebra).to_coords()])
    }

    pub fn full(algebra: &Arc<TracialAlgebra>) -> Self {
        let n = algebra.coord_dim();
        let cols = (0..n).map(|k| Element::basis(algebra, k).to_coords()).collect();
        Self::from_frame_unchecked(algebra, cols)
    }

    /// Diagonal matrices in every block.
    pub fn diagonal(algebra: &Arc<TracialAlgebra>) -> Result<Self> {
        let mut units = Vec::new();
        for (i, b) in algebra.blocks().iter().enumerate() {
            for r in 0..b.dim {
                units.push(Element::matrix_unit(algebra, i, r, r));
            }
        }
        Self::from_spanning(algebra, &units)
    }

    /// `U D U*` for the diagonal algebra `D` of `M_n` and the real rotation
    /// `U` by `angle` (radians) in the plane of the first two basis vectors.
    pub fn rotated_diagonal(algebra: &Arc<TracialAlgebra>, angle: f64) -> Result<Self> {
        if !algebra.is_single_block() || algebra.blocks()[0].dim < 2 {
            return Err(structural("rotated diagonal needs a single block of size ≥ 2"));
        }
        let n = algebra.blocks()[0].dim;
        let mut u = CMatrix::identity(n, n);
        let (s, c) = angle.sin_cos();
        u[(0, 0)] = C64::new(c, 0.0);
        u[(0, 1)] = C64::new(-s, 0.0);
        u[(1, 0)] = C64::new(s, 0.0);
        u[(1, 1)] = C64::new(c, 0.0);
        let units: Vec<Element> = (0..n)
            .map(|r| {
                let col = u.column(r).into_owned();
                Element::from_matrix(algebra, &col * col.adjoint()).expect("n x n")
            })
            .collect();
        Self::from_spanning(algebra, &units)
    }

    pub fn algebra(&self) -> &Arc<TracialAlgebra> {
        &self.algebra
    }

    pub fn basis(&self) -> &[Element] {
        &self.basis
    }

    pub fn dim(&self) -> usize {
        self.basis.len()
    }

    /// Columns are the orthonormal basis in trace coordinates.
    pub fn frame(&self) -> &CMatrix {
        &self.frame
    }

    /// Orthogonal projector onto the span, in trace coordinates.
    pub fn projector(&self) -> CMatrix {
        &self.frame * self.frame.adjoint()
    }

    pub fn project(&self, x: &Element) -> Element {
        Element::from_coords(&self.algebra, &self.project_coords(&x.to_coords()))
    }

    pub(crate) fn project_coords(&self, v: &CVector) -> CVector {
        &self.frame * (self.frame.adjoint() * v)
    }

    /// `‖v − P v‖_2 / ‖v‖_2`, zero for `v = 0`.
    pub fn relative_residual(&self, x: &Element) -> f64 {
        let v = x.to_coords();
        let n = v.norm();
        if n == 0.0 {
            return 0.0;
        }
        (&v - self.project_coords(&v)).norm() / n
    }

    /// Residual relative to `max(‖v‖_2, 1)`, for products of unit basis
    /// vectors that may cancel to rounding noise.
    fn floored_residual(&self, x: &Element) -> f64 {
        let v = x.to_coords();
        (&v - self.project_coords(&v)).norm() / v.norm().max(1.0)
    }

    pub fn contains(&self, x: &Element) -> bool {
        self.relative_residual(x) <= CLOSURE_TOL
    }

    pub fn residuals(&self) -> SubalgebraResiduals {
        let k = self.dim();
        let gram = (self.frame.adjoint() * &self.frame - CMatrix::identity(k, k)).camax();
        let adjoint = self.basis.iter().map(|b| self.floored_residual(&b.adjoint())).fold(0.0, f64::max);
        let mut product: f64 = 0.0;
        for a in &self.basis {
            for b in &self.basis {
                product = product.max(self.floored_residual(&(a * b)));
            }
        }
        let identity = self.relative_residual(&Element::identity(&self.algebra));
        SubalgebraResiduals { gram, adjoint, product, identity }
    }

    /// Intersection of the spans, found through principal angles.
    pub fn intersection(&self, other: &Subalgebra) -> Result<Subalgebra> {
        if *self.algebra != *other.algebra {
            return Err(structural("intersection of subalgebras of different algebras"));
        }
        let m = self.frame.adjoint() * &other.frame;
        let svd = crate::linalg::svd(&m);
        let u = svd.u.expect("u requested");
        let cols: Vec<CVector> = svd
            .singular_values
            .iter()
            .enumerate()
            .filter(|(_, &s)| s >= 1.0 - INTERSECTION_TOL)
            .map(|(j, _)| &self.frame * u.column(j))
            .collect();
        let mut ortho = Vec::new();
        extend_orthonormal(&mut ortho, cols, 1.0);
        let sub = Self::from_frame_unchecked(&self.algebra, ortho);
        if !sub.residuals().passes() {
            return Err(structural("intersection is not a subalgebra"));
        }
        Ok(sub)
    }

    /// The relative commutant `{x ∈ M : xb = bx for all b}`.
    pub fn commutant(&self) -> Subalgebra {
        let alg = &self.algebra;
        let n = alg.coord_dim();
        let k = self.dim();
        let mut stacked = CMatrix::zeros(n * k, n);
        for (bi, b) in self.basis.iter().enumerate() {
            for j in 0..n {
                let e = Element::basis(alg, j);
                let c = (&(&e * b) - &(b * &e)).to_coords();
                stacked.view_mut((bi * n, j), (n, 1)).copy_from(&c);
            }
        }
        let cols = null_space(&stacked, SPAN_TOL);
        let mut ortho = Vec::new();
        extend_orthonormal(&mut ortho, cols, 1.0);
        Self::from_frame_unchecked(alg, ortho)
    }
}

/// Right singular vectors of `m` with singular value at most `tol · max(1, σ_max)`.
fn null_space(m: &CMatrix, tol: f64) -> Vec<CVector> {
    let n = m.ncols();
    // Thin SVD drops directions when rows < cols; pad to square.
    let padded = if m.nrows() < n {
        let mut p = CMatrix::zeros(n, n);
        p.view_mut((0, 0), (m.nrows(), n)).copy_from(m);
        p
    } else {
        m.clone()
    };
    let svd = crate::linalg::svd(&padded);
    let vt = svd.v_t.expect("v_t requested");
    let smax = svd.singular_values.iter().copied().fold(0.0, f64::max);
    let cut = tol * smax.max(1.0);
    svd.singular_values
        .iter()
        .enumerate()
        .filter(|(_, &s)| s <= cut)
        .map(|(j, _)| vt.row(j).adjoint())
        .collect()
}

/// The smallest unital *-subalgebra containing `gens`.
pub fn generate_subalgebra(algebra: &Arc<TracialAlgebra>, gens: &[Element]) -> Result<Subalgebra> {
    for g in gens {
        g.check_same(&Element::identity(algebra))?;
    }
    let mut cols = Vec::new();
    extend_orthonormal(
        &mut cols,
        std::iter::once(Element::identity(algebra).to_coords()).chain(gens.iter().map(Element::to_coords)),
        0.0,
    );
    for _ in 0..=algebra.coord_dim() {
        let before = cols.len();
        let elems: Vec<Element> = cols.iter().map(|c| Element::from_coords(algebra, c)).collect();
        let mut cand: Vec<CVector> = elems.iter().map(|e| e.adjoint().to_coords()).collect();
        for a in &elems {
            for b in &elems {
                cand.push((a * b).to_coords());
            }
        }
        extend_orthonormal(&mut cols, cand, 1.0);
        if cols.len() == before {
            break;
        }
    }
    let sub = Subalgebra::from_frame_unchecked(algebra, cols);
    let res = sub.residuals();
    if !res.passes() {
        return Err(Error::Numerical(format!("closure did not settle: {res:?}")));
    }
    Ok(sub)
}

/// Conditional expectation onto `sub`, as a Markov map.
pub fn conditional_expectation(sub: &Subalgebra) -> Result<MarkovMap> {
    let res = sub.residuals();
    if !res.passes() {
        return Err(structural(format!("subalgebra invariants violated: {res:?}")));
    }
    Ok(MarkovMap::conditional_expectation(sub.clone()))
}

/// Fixed points of `T`, computed as the common kernel of `T − I` and
/// `T† − I` on trace coordinates.
pub fn fixed_point_algebra(t: &MarkovMap) -> Result<Subalgebra> {
    let n = t.algebra().coord_dim();
    let id = CMatrix::identity(n, n);
    let mut stacked = CMatrix::zeros(2 * n, n);
    stacked.view_mut((0, 0), (n, n)).copy_from(&(t.transfer() - &id));
    stacked.view_mut((n, 0), (n, n)).copy_from(&(t.transfer().adjoint() - &id));
    let svd = crate::linalg::svd(&stacked);
    let vt = svd.v_t.expect("v_t requested");
    let cols: Vec<CVector> = svd
        .singular_values
        .iter()
        .enumerate()
        .filter(|(_, &s)| s <= FIXED_POINT_TOL)
        .map(|(j, _)| vt.row(j).adjoint())
        .collect();
    let mut ortho = Vec::new();
    extend_orthonormal(&mut ortho, cols, 1.0);
    let sub = Subalgebra::from_frame_unchecked(t.algebra(), ortho);
    if !sub.residuals().passes() {
        return Err(structural("fixed points not an algebra"));
    }
    Ok(sub)
}

/// `‖T E − E T‖` and `‖T E − E‖` as matrix max-norms on trace coordinates.
pub fn commutation_residual(t: &MarkovMap, sub: &Subalgebra) -> f64 {
    let p = sub.projector();
    let te = t.transfer() * &p;
    let et = &p * t.transfer();
    (&te - &et).camax().max((&te - &p).camax())
}

/// One automorphism in a random-automorphism decomposition.
#[derive(Debug, Clone)]
pub enum Branch {
    /// `x ↦ u x u*`.
    Unitary(Element),
    /// `f ↦ f ∘ σ` on a commutative algebra, `σ(i) = perm[i]`.
    Permutation(Vec<usize>),
}

impl Branch {
    fn act(&self, x: &Element) -> Element {
        match self {
            Self::Unitary(u) => &(u * x) * &u.adjoint(),
            Self::Permutation(perm) => {
                let blocks = perm.iter().map(|&j| x.blocks()[j].clone()).collect();
                Element::from_blocks(x.algebra(), blocks).expect("commutative shapes")
            }
        }
    }
}

/// `M̃ = ⊕_ℓ M` with trace `Σ p_ℓ τ`, embedding `ι(x) = (x, …, x)`,
/// representation `π(x) = (α_ℓ(x))_ℓ` and conditional expectation
/// `E_M(y) = ι(Σ p_ℓ y_ℓ)`, so that `T = E_M ∘ π`.
#[derive(Debug, Clone)]
pub struct DilationCertificate {
    algebra: Arc<TracialAlgebra>,
    weights: Vec<f64>,
    branches: Vec<Branch>,
}

impl DilationCertificate {
    pub fn new(algebra: Arc<TracialAlgebra>, weights: Vec<f64>, branches: Vec<Branch>) -> Result<Self> {
        if weights.len() != branches.len() || weights.is_empty() {
            return Err(structural("a certificate needs one weight per branch"));
        }
        Ok(Self { algebra, weights, branches })
    }

    pub fn algebra(&self) -> &Arc<TracialAlgebra> {
        &self.algebra
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn branches(&self) -> &[Branch] {
        &self.branches
    }

    pub fn len(&self) -> usize {
        self.branches.len()
    }

    pub fn is_empty(&self) -> bool {
        self.branches.is_empty()
    }

    /// Block structure of `M̃`; fails when the weights are not a probability
    /// vector.
    pub fn dilated_algebra(&self) -> Result<TracialAlgebra> {
        let blocks = self
            .weights
            .iter()
            .flat_map(|&p| self.algebra.blocks().iter().map(move |b| crate::algebra::Block { dim: b.dim, weight: p * b.weight }))
            .collect();
        TracialAlgebra::new(blocks)
    }

    pub fn embed(&self, x: &Element) -> Vec<Element> {
        vec![x.clone(); self.branches.len()]
    }

    pub fn represent(&self, x: &Element) -> Vec<Element> {
        self.branches.iter().map(|b| b.act(x)).collect()
    }

    /// `E_M` followed by the identification `ι(M) ≅ M`.
    pub fn expectation(&self, y: &[Element]) -> Element {
        y.iter()
            .zip(&self.weights)
            .fold(Element::zero(&self.algebra), |acc, (yl, &p)| &acc + &yl.scale_re(p))
    }

    /// `τ̃(y) = Σ p_ℓ τ(y_ℓ)`.
    pub fn dilated_trace(&self, y: &[Element]) -> C64 {
        y.iter().zip(&self.weights).map(|(yl, &p)| yl.trace() * p).sum()
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FactorizationReport {
    /// `max ‖T(x) − E_M π(x)‖_2` over the basis.
    pub map_residual: f64,
    /// `max |τ(x) − τ̃(π(x))|` and `|τ(x) − τ̃(ι(x))|`.
    pub trace_residual: f64,
    /// Multiplicativity and *-preservation of `π`, per branch.
    pub homomorphism_residual: f64,
    /// `‖E_M ι(x) − x‖_2`.
    pub embedding_residual: f64,
}

impl FactorizationReport {
    pub fn passes(&self) -> bool {
        self.map_residual <= FACTORIZATION_TOL
            && self.trace_residual <= FACTORIZATION_TOL
            && self.homomorphism_residual <= FACTORIZATION_TOL
            && self.embedding_residual <= FACTORIZATION_TOL
    }
}

pub fn verify_factorization(cert: &DilationCertificate, t: &MarkovMap) -> Result<FactorizationReport> {
    if *cert.algebra != **t.algebra() {
        return Err(structural("certificate and map live on different algebras"));
    }
    let alg = &cert.algebra;
    let n = alg.coord_dim();
    let basis: Vec<Element> = (0..n).map(|k| Element::basis(alg, k)).collect();
    let images: Vec<Vec<Element>> = basis.iter().map(|x| cert.represent(x)).collect();
    let mut map_residual: f64 = 0.0;
    let mut trace_residual: f64 = 0.0;
    let mut homomorphism_residual: f64 = 0.0;
    let mut embedding_residual: f64 = 0.0;
    for (x, px) in basis.iter().zip(&images) {
        let tx = t.apply_unchecked(x);
        map_residual = map_residual.max((&tx - &cert.expectation(px)).norm2());
        trace_residual = trace_residual
            .max((x.trace() - cert.dilated_trace(px)).norm())
            .max((x.trace() - cert.dilated_trace(&cert.embed(x))).norm());
        embedding_residual = embedding_residual.max((&cert.expectation(&cert.embed(x)) - x).norm2());
        for (b, img) in cert.branches.iter().zip(px) {
            homomorphism_residual = homomorphism_residual.max((&b.act(&x.adjoint()) - &img.adjoint()).norm2());
        }
    }
    for (x, px) in basis.iter().zip(&images) {
        for (y, py) in basis.iter().zip(&images) {
            let pxy = cert.represent(&(x * y));
            for ((a, b), c) in px.iter().zip(py).zip(&pxy) {
                homomorphism_residual = homomorphism_residual.max((&(a * b) - c).norm2());
            }
        }
    }
    Ok(FactorizationReport { map_residual, trace_residual, homomorphism_residual, embedding_residual })
}

/// Explicit factorization for random-unitary Kraus maps, stochastic kernels
/// on uniform probability spaces, conditional expectations, and
/// compositions of these.
pub fn build_dilation(t: &MarkovMap) -> Result<DilationCertificate> {
    let alg = Arc::clone(t.algebra());
    let n = alg.coord_dim();
    if (t.transfer() - CMatrix::identity(n, n)).camax() <= 1e-14 {
        return DilationCertificate::new(Arc::clone(&alg), vec![1.0], vec![Branch::Unitary(Element::identity(&alg))]);
    }
    match t.representation() {
        Representation::Kraus(ops) => {
            let one = Element::identity(&alg);
            let mut weights = Vec::new();
            let mut branches = Vec::new();
            for (l, a) in ops.iter().enumerate() {
                let ata = &a.adjoint() * a;
                let p = ata.trace().re;
                if p <= 1e-15 {
                    continue;
                }
                if (&ata - &one.scale_re(p)).op_norm() > 1e-10 {
                    return Err(Error::Unsupported(format!("Kraus operator {l} is not a multiple of a unitary")));
                }
                weights.push(p);
                branches.push(Branch::Unitary(a.scale_re(1.0 / p.sqrt())));
            }
            DilationCertificate::new(alg, weights, branches)
        }
        Representation::StochasticKernel(k) => {
            let w: Vec<f64> = alg.blocks().iter().map(|b| b.weight).collect();
            if w.iter().any(|&v| (v - w[0]).abs() > 1e-15) {
                return Err(Error::Unsupported("permutation dilations need uniform point masses".into()));
            }
            let parts = birkhoff_decomposition(k)?;
            let (weights, branches) = parts.into_iter().map(|(c, p)| (c, Branch::Permutation(p))).unzip();
            DilationCertificate::new(alg, weights, branches)
        }
        Representation::CondExpectation(sub) => expectation_dilation(sub),
        Representation::Composition(factors) => {
            let mut acc: Option<DilationCertificate> = None;
            for f in factors {
                let c = build_dilation(f)?;
                acc = Some(match acc {
                    None => c,
                    Some(prev) => product_dilation(&prev, &c)?,
                });
            }
            acc.ok_or_else(|| Error::Unsupported("empty composition".into()))
        }
        Representation::SchurMask(_) | Representation::Transfer => {
            Err(Error::Unsupported(format!("no explicit dilation for {} maps", t.representation().kind())))
        }
    }
}

/// Certificate for `S ∘ T` from certificates of `S` and `T`.
fn product_dilation(s: &DilationCertificate, t: &DilationCertificate) -> Result<DilationCertificate> {
    let alg = Arc::clone(&s.algebra);
    if s.len() * t.len() > MAX_BRANCHES {
        return Err(Error::Unsupported(format!("product dilation would need {} branches", s.len() * t.len())));
    }
    let commutative = alg.is_commutative();
    let as_perm = |b: &Branch| -> Vec<usize> {
        match b {
            Branch::Permutation(p) => p.clone(),
            // Inner automorphisms of a commutative algebra are trivial.
            Branch::Unitary(_) => (0..alg.num_blocks()).collect(),
        }
    };
    let mut weights = Vec::with_capacity(s.len() * t.len());
    let mut branches = Vec::with_capacity(s.len() * t.len());
    for (ps, bs) in s.weights.iter().zip(&s.branches) {
        for (pt, bt) in t.weights.iter().zip(&t.branches) {
            weights.push(ps * pt);
            let b = match (bs, bt) {
                (Branch::Unitary(u), Branch::Unitary(v)) if !commutative => Branch::Unitary(u * v),
                _ if commutative => {
                    // (S T f)(i) = Σ f(τ(σ(i))).
                    let sigma = as_perm(bs);
                    let tau = as_perm(bt);
                    Branch::Permutation(sigma.iter().map(|&i| tau[i]).collect())
                }
                _ => return Err(Error::Unsupported("cannot combine permutation and unitary branches".into())),
            };
            branches.push(b);
        }
    }
    DilationCertificate::new(alg, weights, branches)
}

/// Greedy Birkhoff–von Neumann decomposition of a doubly stochastic matrix
/// into weighted permutations `perm[i] = j`.
pub fn birkhoff_decomposition(k: &DMatrix<f64>) -> Result<Vec<(f64, Vec<usize>)>> {
    let n = k.nrows();
    if k.ncols() != n {
        return Err(structural("Birkhoff decomposition needs a square matrix"));
    }
    let mut rest = k.clone();
    let mut parts = Vec::new();
    let tol = 1e-12;
    for _ in 0..=(n * n) {
        let remaining: f64 = rest.iter().filter(|&&v| v > tol).sum();
        if remaining <= tol * n as f64 {
            break;
        }
        let perm = perfect_matching(&rest, tol)
            .ok_or_else(|| Error::Unsupported("kernel is not doubly stochastic; no permutation support".into()))?;
        let c = perm.iter().enumerate().map(|(i, &j)| rest[(i, j)]).fold(f64::INFINITY, f64::min);
        for (i, &j) in perm.iter().enumerate() {
            rest[(i, j)] -= c;
        }
        parts.push((c, perm));
    }
    let total: f64 = parts.iter().map(|(c, _)| c).sum();
    if (total - 1.0).abs() > 1e-9 {
        return Err(Error::Numerical(format!("Birkhoff weights sum to {total}")));
    }
    Ok(parts)
}

/// Kuhn's augmenting-path matching on the entries above `tol`.
fn perfect_matching(m: &DMatrix<f64>, tol: f64) -> Option<Vec<usize>> {
    let n = m.nrows();
    let mut match_col: Vec<Option<usize>> = vec![None; n];
    fn augment(i: usize, m: &DMatrix<f64>, tol: f64, seen: &mut [bool], match_col: &mut [Option<usize>]) -> bool {
        for j in 0..m.ncols() {
            if m[(i, j)] > tol && !seen[j] {
                seen[j] = true;
                if match_col[j].is_none() || augment(match_col[j].unwrap(), m, tol, seen, match_col) {
                    match_col[j] = Some(i);
                    return true;
                }
            }
        }
        false
    }
    for i in 0..n {
        let mut seen = vec![false; n];
        if !augment(i, m, tol, &mut seen, &mut match_col) {
            return None;
        }
    }
    let mut perm = vec![0; n];
    for (j, i) in match_col.iter().enumerate() {
        perm[i.expect("perfect matching")] = j;
    }
    Some(perm)
}

/// Spectral projections of a self-adjoint element, grouping eigenvalues that
/// agree within `tol` across all blocks. Sorted by eigenvalue.
fn spectral_projections(x: &Element, tol: f64) -> Vec<(f64, Element)> {
    let eig = x.hermitian_eigen();
    let mut values: Vec<f64> = eig.iter().flat_map(|(v, _)| v.iter().copied()).collect();
    values.sort_by(|a, b| a.total_cmp(b));
    let mut centers: Vec<f64> = Vec::new();
    for v in values {
        if centers.last().map_or(true, |&c| (v - c).abs() > tol) {
            centers.push(v);
        }
    }
    centers
        .into_iter()
        .map(|c| {
            let blocks = eig
                .iter()
                .map(|(vals, vecs)| {
                    let d = vals.len();
                    let mut p = CMatrix::zeros(d, d);
                    for (k, &v) in vals.iter().enumerate() {
                        if (v - c).abs() <= tol {
                            let col = vecs.column(k);
                            p += &col * col.adjoint();
                        }
                    }
                    p
                })
                .collect();
            (c, Element::from_blocks(x.algebra(), blocks).expect("same shapes"))
        })
        .collect()
}

fn random_self_adjoint_in(sub: &Subalgebra, rng: &mut ChaCha8Rng) -> Element {
    let alg = sub.algebra();
    sub.basis().iter().fold(Element::zero(alg), |acc, b| {
        let c = C64::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0));
        let term = b.scale(c);
        &acc + &(&term + &term.adjoint())
    })
}

fn random_in(sub: &Subalgebra, rng: &mut ChaCha8Rng) -> Element {
    let alg = sub.algebra();
    sub.basis().iter().fold(Element::zero(alg), |acc, b| {
        &acc + &b.scale(C64::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)))
    })
}

/// Factorization of `E_N` as a uniform average of automorphisms.
///
/// When `N` contains the center of `M`, `E_N` is the average of `Ad(u)` over
/// a finite group generating the commutant `N'`: a clock over the minimal
/// central projections of `N'` times Weyl–Heisenberg unitaries in each of
/// its simple summands. On a commutative algebra `E_N` averages over the
/// cells of a partition; with uniform masses inside each cell this is an
/// average of cyclic shifts.
fn expectation_dilation(sub: &Subalgebra) -> Result<DilationCertificate> {
    let alg = Arc::clone(sub.algebra());
    let mut rng = ChaCha8Rng::seed_from_u64(0x5eed_d11a);
    let center_of_m = Subalgebra::full(&alg).commutant();
    let contains_center = center_of_m.basis().iter().all(|z| sub.contains(z));
    if alg.is_commutative() && !contains_center {
        return commutative_expectation_dilation(sub, &mut rng);
    }
    if !contains_center {
        return Err(Error::Unsupported(
            "conditional expectations that mix blocks of a noncommutative algebra have no inner dilation here".into(),
        ));
    }
    let comm = sub.commutant();
    let center = comm.intersection(sub)?;
    let z = random_self_adjoint_in(&center, &mut rng);
    let central: Vec<Element> = spectral_projections(&z, 1e-7).into_iter().map(|(_, p)| p).collect();
    let k = central.len();
    let omega_k = C64::from_polar(1.0, 2.0 * PI / k as f64);

    let mut summands: Vec<Vec<Element>> = Vec::with_capacity(k);
    for pk in &central {
        let compressed: Vec<Element> = comm.basis().iter().map(|b| &(pk * b) * pk).collect();
        let mut cols = Vec::new();
        extend_orthonormal(&mut cols, compressed.iter().map(Element::to_coords), 1.0);
        let factor = Subalgebra::from_frame_unchecked(&alg, cols);
        let m = (factor.dim() as f64).sqrt().round() as usize;
        if m * m != factor.dim() {
            return Err(Error::Numerical(format!("summand of dimension {} is not a full matrix algebra", factor.dim())));
        }
        // Minimal projections of the summand: spectral projections of a
        // generic self-adjoint element, shifted off the complement of P_k.
        let h = random_self_adjoint_in(&factor, &mut rng);
        let big = 10.0 * (h.op_norm() + 1.0);
        let shifted = &h + &(&Element::identity(&alg) - pk).scale_re(big);
        let minimal: Vec<Element> = spectral_projections(&shifted, 1e-7)
            .into_iter()
            .filter(|(v, _)| *v < big / 2.0)
            .map(|(_, p)| p)
            .collect();
        if minimal.len() != m {
            return Err(Error::Numerical(format!("found {} minimal projections, expected {m}", minimal.len())));
        }
        let y = random_in(&factor, &mut rng);
        let mut first_row = vec![minimal[0].clone()];
        for f in minimal.iter().skip(1) {
            let w = &(&minimal[0] * &y) * f;
            let s = w.op_norm();
            if s < 1e-8 {
                return Err(Error::Numerical("degenerate matrix-unit search".into()));
            }
            first_row.push(w.scale_re(1.0 / s));
        }
        let unit = |i: usize, j: usize| -> Element { &first_row[i].adjoint() * &first_row[j] };
        let omega = C64::from_polar(1.0, 2.0 * PI / m as f64);
        let clock = (0..m).fold(Element::zero(&alg), |acc, j| &acc + &unit(j, j).scale(omega.powu(j as u32)));
        let shift = (0..m).fold(Element::zero(&alg), |acc, j| &acc + &unit((j + 1) % m, j));
        let mut weyl = Vec::with_capacity(m * m);
        let mut xa = pk.clone();
        for _ in 0..m {
            let mut zb = pk.clone();
            for _ in 0..m {
                weyl.push(&xa * &zb);
                zb = &zb * &clock;
            }
            xa = &xa * &shift;
        }
        summands.push(weyl);
    }
    let count = summands.iter().map(Vec::len).product::<usize>() * k;
    if count > MAX_BRANCHES {
        return Err(Error::Unsupported(format!("expectation dilation would need {count} branches")));
    }
    let mut products = vec![Element::zero(&alg)];
    for weyl in &summands {
        products = products.iter().flat_map(|acc| weyl.iter().map(move |w| acc + w)).collect();
    }
    let mut branches = Vec::with_capacity(count);
    for c in 0..k {
        let phase = central
            .iter()
            .enumerate()
            .fold(Element::zero(&alg), |acc, (j, p)| &acc + &p.scale(omega_k.powu((c * j) as u32)));
        for w in &products {
            branches.push(Branch::Unitary(&phase * w));
        }
    }
    let weights = vec![1.0 / branches.len() as f64; branches.len()];
    DilationCertificate::new(alg, weights, branches)
}

fn commutative_expectation_dilation(sub: &Subalgebra, rng: &mut ChaCha8Rng) -> Result<DilationCertificate> {
    let alg = Arc::clone(sub.algebra());
    let z = random_self_adjoint_in(sub, rng);
    let cells: Vec<Vec<usize>> = spectral_projections(&z, 1e-7)
        .into_iter()
        .map(|(_, p)| (0..alg.num_blocks()).filter(|&i| p.blocks()[i][(0, 0)].re > 0.5).collect())
        .collect();
    let w: Vec<f64> = alg.blocks().iter().map(|b| b.weight).collect();
    for cell in &cells {
        if cell.iter().any(|&i| (w[i] - w[cell[0]]).abs() > 1e-15) {
            return Err(Error::Unsupported("cell with unequal point masses".into()));
        }
    }
    let period = cells.iter().map(Vec::len).fold(1usize, lcm);
    if period > MAX_BRANCHES {
        return Err(Error::Unsupported(format!("expectation dilation would need {period} branches")));
    }
    let branches: Vec<Branch> = (0..period)
        .map(|s| {
            let mut perm: Vec<usize> = (0..alg.num_blocks()).collect();
            for cell in &cells {
                let m = cell.len();
                for (pos, &i) in cell.iter().enumerate() {
                    perm[i] = cell[(pos + s) % m];
                }
            }
            Branch::Permutation(perm)
        })
        .collect();
    DilationCertificate::new(alg, vec![1.0 / period as f64; period], branches)
}

fn lcm(a: usize, b: usize) -> usize {
    fn gcd(a: usize, b: usize) -> usize {
        if b == 0 {
            a
        } else {
            gcd(b, a % b)
        }
    }
    a / gcd(a, b) * b
}

/// Real coefficients of a vector in the span, for diagnostics.
pub fn coefficients(sub: &Subalgebra, x: &Element) -> DVector<C64> {
    sub.frame().adjoint() * x.to_coords()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::channels::{build_channel, compose, validate_markov, ChannelSpec};
    use approx::assert_relative_eq;

    fn m2() -> Arc<TracialAlgebra> {
        Arc::new(TracialAlgebra::matrix(2).unwrap())
    }

    #[test]
    fn generation_examples() {
        let a = m2();
        assert_eq!(generate_subalgebra(&a, &[]).unwrap().dim(), 1);
        let d = Element::from_real_diagonal(&a, &[1.0, 2.0]).unwrap();
        let s = generate_subalgebra(&a, &[d]).unwrap();
        assert_eq!(s.dim(), 2);
        // Closure oracle: the diagonal matrix units are in the span, e_12 is not.
        assert!(s.contains(&Element::matrix_unit(&a, 0, 0, 0)));
        assert!(s.contains(&Element::matrix_unit(&a, 0, 1, 1)));
        assert!(!s.contains(&Element::matrix_unit(&a, 0, 0, 1)));
        let full = generate_subalgebra(&a, &[Element::matrix_unit(&a, 0, 0, 1)]).unwrap();
        assert_eq!(full.dim(), 4);
    }

    #[test]
    fn from_spanning_rejects_non_algebras() {
        let a = m2();
        let err = Subalgebra::from_spanning(&a, &[Element::identity(&a), Element::matrix_unit(&a, 0, 0, 1)]);
        assert!(err.is_err());
    }

    #[test]
    fn conditional_expectation_examples() {
        let a = m2();
        let x = Element::from_matrix(
            &a,
            CMatrix::from_row_slice(2, 2, &[C64::new(1.0, 0.0), C64::new(2.0, 1.0), C64::new(-3.0, 0.0), C64::new(5.0, 0.0)]),
        )
        .unwrap();
        let e = conditional_expectation(&Subalgebra::scalars(&a)).unwrap();
        assert!(e.is_valid());
        assert!(e.apply(&x).unwrap().max_abs_diff(&Element::identity(&a).scale(x.trace())) < 1e-14);
        let e = conditional_expectation(&Subalgebra::diagonal(&a).unwrap()).unwrap();
        assert!(e.apply(&x).unwrap().max_abs_diff(&Element::from_real_diagonal(&a, &[1.0, 5.0]).unwrap()) < 1e-14);
        let e = conditional_expectation(&Subalgebra::full(&a)).unwrap();
        assert!(e.apply(&x).unwrap().max_abs_diff(&x) < 1e-14);
    }

    #[test]
    fn fixed_point_examples() {
        let t = build_channel(ChannelSpec::Depolarizing { n: 2, lambda: 0.5 }).unwrap();
        assert_eq!(fixed_point_algebra(&t).unwrap().dim(), 1);
        let mask = CMatrix::from_fn(3, 3, |i, j| if i == j { C64::new(1.0, 0.0) } else { C64::new(0.4, 0.0) });
        let t = build_channel(ChannelSpec::Schur { mask }).unwrap();
        let n = fixed_point_algebra(&t).unwrap();
        assert_eq!(n.dim(), 3);
        assert!(commutation_residual(&t, &n) < 1e-9);
        let a = Arc::new(TracialAlgebra::new(vec![
            crate::algebra::Block { dim: 2, weight: 0.5 },
            crate::algebra::Block { dim: 1, weight: 0.5 },
        ]).unwrap());
        assert_eq!(fixed_point_algebra(&MarkovMap::identity(&a)).unwrap().dim(), 5);
    }

    #[test]
    fn fixed_point_rejects_non_algebra_eigenspace() {
        // Projection onto span{1, e_12}: contraction-free raw transfer whose
        // fixed space is not closed under adjoints.
        let a = m2();
        let span = [Element::identity(&a), Element::matrix_unit(&a, 0, 0, 1)];
        let mut cols = Vec::new();
        extend_orthonormal(&mut cols, span.iter().map(Element::to_coords), 0.0);
        let f = frame_matrix(4, &cols);
        let p = &f * f.adjoint();
        let t = build_channel(ChannelSpec::Transfer { algebra: a, matrix: p }).unwrap();
        assert_eq!(fixed_point_algebra(&t).unwrap_err(), Error::Structural("fixed points not an algebra".into()));
    }

    #[test]
    fn intersection_by_principal_angles() {
        let a = m2();
        let d = Subalgebra::diagonal(&a).unwrap();
        let r = Subalgebra::rotated_diagonal(&a, PI / 4.0).unwrap();
        assert_eq!(d.intersection(&r).unwrap().dim(), 1);
        assert_eq!(d.intersection(&d).unwrap().dim(), 2);
    }

    #[test]
    fn birkhoff_example() {
        let k = DMatrix::from_row_slice(2, 2, &[0.75, 0.25, 0.25, 0.75]);
        let mut parts = birkhoff_decomposition(&k).unwrap();
        parts.sort_by(|a, b| b.0.total_cmp(&a.0));
        assert_eq!(parts.len(), 2);
        assert_relative_eq!(parts[0].0, 0.75, epsilon = 1e-15);
        assert_eq!(parts[0].1, vec![0, 1]);
        assert_relative_eq!(parts[1].0, 0.25, epsilon = 1e-15);
        assert_eq!(parts[1].1, vec![1, 0]);
    }

    #[test]
    fn dilation_examples() {
        let a = m2();
        let u = Element::from_matrix(
            &a,
            CMatrix::from_row_slice(2, 2, &[C64::new(0.0, 0.0), C64::new(1.0, 0.0), C64::new(0.0, 1.0), C64::new(0.0, 0.0)]),
        )
        .unwrap();
        let t = build_channel(ChannelSpec::RandomUnitary { weights: vec![0.5, 0.5], unitaries: vec![u, Element::identity(&a)] }).unwrap();
        let cert = build_dilation(&t).unwrap();
        assert_eq!(cert.len(), 2);
        assert!(verify_factorization(&cert, &t).unwrap().passes());

        let k = DMatrix::from_row_slice(2, 2, &[0.75, 0.25, 0.25, 0.75]);
        let t = build_channel(ChannelSpec::Stochastic { weights: vec![0.5, 0.5], kernel: k }).unwrap();
        let cert = build_dilation(&t).unwrap();
        assert_eq!(cert.len(), 2);
        assert!(verify_factorization(&cert, &t).unwrap().passes());
        assert!(cert.dilated_algebra().is_ok());

        let e = conditional_expectation(&Subalgebra::diagonal(&a).unwrap()).unwrap();
        let cert = build_dilation(&e).unwrap();
        assert_eq!(cert.len(), 2);
        assert!(verify_factorization(&cert, &e).unwrap().passes());
        // The two branches are Ad(1) and Ad(σ_z).
        let sz = Element::from_real_diagonal(&a, &[1.0, -1.0]).unwrap();
        let x = Element::matrix_unit(&a, 0, 0, 1);
        let avg = (&x + &(&(&sz * &x) * &sz)).scale_re(0.5);
        assert!(avg.max_abs_diff(&e.apply(&x).unwrap()) < 1e-14);
    }

    #[test]
    fn dilations_of_expectations_and_products() {
        let a3 = Arc::new(TracialAlgebra::matrix(3).unwrap());
        for sub in [Subalgebra::scalars(&a3), Subalgebra::diagonal(&a3).unwrap(), Subalgebra::rotated_diagonal(&a3, 0.3).unwrap()] {
            let e = MarkovMap::conditional_expectation(sub);
            let cert = build_dilation(&e).unwrap();
            let rep = verify_factorization(&cert, &e).unwrap();
            assert!(rep.passes(), "{rep:?}");
        }
        // M_2 ⊗ 1 inside M_4 has commutant 1 ⊗ M_2, a full matrix summand.
        let a4 = Arc::new(TracialAlgebra::matrix(4).unwrap());
        let e = |i, j| Element::matrix_unit(&a4, 0, i, j);
        let gens = vec![&e(0, 2) + &e(1, 3), &e(2, 0) + &e(3, 1)];
        let sub = generate_subalgebra(&a4, &gens).unwrap();
        assert_eq!(sub.dim(), 4);
        assert_eq!(sub.commutant().dim(), 4);
        let e = MarkovMap::conditional_expectation(sub);
        let cert = build_dilation(&e).unwrap();
        assert!(verify_factorization(&cert, &e).unwrap().passes());

        let a = m2();
        let ea = MarkovMap::conditional_expectation(Subalgebra::diagonal(&a).unwrap());
        let eb = MarkovMap::conditional_expectation(Subalgebra::rotated_diagonal(&a, 0.4).unwrap());
        let t = compose(&ea, &eb).unwrap();
        let cert = build_dilation(&t).unwrap();
        assert_eq!(cert.len(), 4);
        assert!(verify_factorization(&cert, &t).unwrap().passes());
    }

    #[test]
    fn commutative_expectation_dilation() {
        let alg = Arc::new(TracialAlgebra::uniform_commutative(5).unwrap());
        let f = Element::from_real_diagonal(&alg, &[1.0, 1.0, 2.0, 2.0, 2.0]).unwrap();
        let sub = generate_subalgebra(&alg, &[f]).unwrap();
        assert_eq!(sub.dim(), 2);
        let e = MarkovMap::conditional_expectation(sub);
        assert!(validate_markov(&e).passes());
        let cert = build_dilation(&e).unwrap();
        assert_eq!(cert.len(), 6);
        assert!(verify_factorization(&cert, &e).unwrap().passes());
    }

    #[test]
    fn broken_certificates_fail() {
        let a = m2();
        let e = MarkovMap::conditional_expectation(Subalgebra::diagonal(&a).unwrap());
        let cert = build_dilation(&e).unwrap();

        let mut branches = cert.branches().to_vec();
        branches[1] = Branch::Unitary(Element::from_real_diagonal(&a, &[1.0, 0.0]).unwrap());
        let bad = DilationCertificate::new(Arc::clone(&a), cert.weights().to_vec(), branches).unwrap();
        let rep = verify_factorization(&bad, &e).unwrap();
        assert!(rep.homomorphism_residual > 0.1);
        assert!(!rep.passes());

        let bad = DilationCertificate::new(Arc::clone(&a), vec![0.6, 0.6], cert.branches().to_vec()).unwrap();
        let rep = verify_factorization(&bad, &e).unwrap();
        assert!(rep.trace_residual > 0.1);
        assert!(!rep.passes());
        assert!(bad.dilated_algebra().is_err());
    }

    #[test]
    fn unsupported_classes() {
        let mask = CMatrix::from_fn(2, 2, |i, j| if i == j { C64::new(1.0, 0.0) } else { C64::new(0.5, 0.0) });
        let t = build_channel(ChannelSpec::Schur { mask }).unwrap();
        assert!(matches!(build_dilation(&t), Err(Error::Unsupported(_))));
        let a = m2();
        let op = Element::from_real_diagonal(&a, &[1.0, 0.0]).unwrap();
        let op2 = Element::matrix_unit(&a, 0, 0, 1);
        let t = build_channel(ChannelSpec::Kraus { algebra: a, operators: vec![op, op2] }).unwrap();
        assert!(matches!(build_dilation(&t), Err(Error::Unsupported(_))));
    }
}
