//! Markov maps: unital, completely positive, trace-preserving maps on a
//! [`TracialAlgebra`].
//!
//! Every map keeps its structured representation next to a transfer matrix
//! acting on orthonormal trace coordinates (see [`crate::algebra`]). The
//! transfer matrix is assembled once, at construction, and the three Markov
//! conditions are checked at the same time.

use std::f64::consts::PI;
use std::fmt;
use std::sync::Arc;

use nalgebra::{DMatrix, SymmetricEigen};

use crate::algebra::{CMatrix, Element, TracialAlgebra, C64};
use crate::error::{structural, Error, Result};
use crate::structure::Subalgebra;

/// Residual gate for unitality and trace preservation.
pub const MARKOV_TOL: f64 = 1e-10;
/// Floor for the smallest Choi eigenvalue.
pub const CHOI_FLOOR: f64 = -1e-10;

#[derive(Debug, Clone)]
pub enum Representation {
    /// `T(x) = Σ a_ℓ x a_ℓ*`.
    Kraus(Vec<Element>),
    /// `T(x)_{ij} = s_{ij} x_{ij}` on a single full block.
    SchurMask(CMatrix),
    /// `T(f)(i) = Σ_j P_{ij} f(j)` on a commutative algebra.
    StochasticKernel(DMatrix<f64>),
    CondExpectation(Subalgebra),
    /// Factors in application order reversed: `[S, T]` is `S ∘ T`.
    Composition(Vec<MarkovMap>),
    /// Only the transfer matrix is known.
    Transfer,
}

impl Representation {
    pub fn kind(&self) -> &'static str {
        match self {
            Self::Kraus(_) => "kraus",
            Self::SchurMask(_) => "schur",
            Self::StochasticKernel(_) => "stochastic",
            Self::CondExpectation(_) => "conditional-expectation",
            Self::Composition(_) => "composition",
            Self::Transfer => "transfer",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Validity {
    Unchecked,
    Valid,
    Invalid(String),
}

#[derive(Debug, Clone, PartialEq)]
pub struct ValidationReport {
    /// `‖T(1) − 1‖_∞`.
    pub unital_residual: f64,
    /// `‖T†(1) − 1‖_∞`, which vanishes iff `τ ∘ T = τ`.
    pub trace_residual: f64,
    pub min_choi_eigenvalue: f64,
    /// Failures specific to the representation (mask or kernel checks).
    pub structural_failures: Vec<String>,
}

impl ValidationReport {
    pub fn unital_ok(&self) -> bool {
        self.unital_residual <= MARKOV_TOL
    }

    pub fn trace_ok(&self) -> bool {
        self.trace_residual <= MARKOV_TOL
    }

    pub fn cp_ok(&self) -> bool {
        self.min_choi_eigenvalue >= CHOI_FLOOR
    }

    pub fn passes(&self) -> bool {
        self.unital_ok() && self.trace_ok() && self.cp_ok() && self.structural_failures.is_empty()
    }

    /// First failure, phrased for reports.
    pub fn reason(&self) -> Option<String> {
        if let Some(s) = self.structural_failures.first() {
            return Some(s.clone());
        }
        if !self.cp_ok() {
            return Some(format!("Choi not PSD (min eigenvalue {:.3e})", self.min_choi_eigenvalue));
        }
        if !self.unital_ok() {
            return Some(format!("not unital (residual {:.3e})", self.unital_residual));
        }
        if !self.trace_ok() {
            return Some(format!("not trace preserving (residual {:.3e})", self.trace_residual));
        }
        None
    }
}

/// A channel on a tracial algebra with its cached transfer matrix.
#[derive(Clone)]
pub struct MarkovMap {
    algebra: Arc<TracialAlgebra>,
    repr: Representation,
    transfer: CMatrix,
    report: ValidationReport,
    validity: Validity,
}

impl fmt::Debug for MarkovMap {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("MarkovMap")
            .field("algebra", &self.algebra.to_string())
            .field("kind", &self.repr.kind())
            .field("validity", &self.validity)
            .finish()
    }
}

/// Description of a channel to build.
#[derive(Debug, Clone)]
pub enum ChannelSpec {
    Identity(Arc<TracialAlgebra>),
    /// `(1 − λ) x + λ τ(x) 1` on `M_n`, realized with Weyl–Heisenberg Kraus
    /// operators.
    Depolarizing { n: usize, lambda: f64 },
    Kraus { algebra: Arc<TracialAlgebra>, operators: Vec<Element> },
    /// `Σ p_ℓ u_ℓ x u_ℓ*`.
    RandomUnitary { weights: Vec<f64>, unitaries: Vec<Element> },
    Schur { mask: CMatrix },
    /// Row-stochastic kernel on the commutative algebra with the given point
    /// masses.
    Stochastic { weights: Vec<f64>, kernel: DMatrix<f64> },
    /// Convolution by a probability vector on `Z_n` (uniform weights), the
    /// Fourier multiplier picture of a cyclic group.
    Circulant { probabilities: Vec<f64> },
    ConditionalExpectation(Subalgebra),
    /// Transpose on `M_n`: positive, not completely positive.
    Transpose { n: usize },
    /// A raw transfer matrix in orthonormal trace coordinates.
    Transfer { algebra: Arc<TracialAlgebra>, matrix: CMatrix },
}

/// Builds the channel and runs the Markov checks. Shape errors are returned
/// as `Err`; failing Markov conditions are recorded as
/// [`Validity::Invalid`] on the returned map.
pub fn build_channel(spec: ChannelSpec) -> Result<MarkovMap> {
    match spec {
        ChannelSpec::Identity(algebra) => {
            let n = algebra.coord_dim();
            Ok(MarkovMap::from_transfer_with_repr(algebra, CMatrix::identity(n, n), Representation::Transfer))
        }
        ChannelSpec::Depolarizing { n, lambda } => {
            if !(0.0..=1.0).contains(&lambda) {
                return Err(Error::Domain(format!("depolarizing parameter {lambda} outside [0, 1]")));
            }
            let algebra = Arc::new(TracialAlgebra::matrix(n)?);
            let ops = depolarizing_kraus(&algebra, n, lambda);
            MarkovMap::from_kraus(algebra, ops)
        }
        ChannelSpec::Kraus { algebra, operators } => MarkovMap::from_kraus(algebra, operators),
        ChannelSpec::RandomUnitary { weights, unitaries } => {
            if weights.len() != unitaries.len() || weights.is_empty() {
                return Err(structural("random-unitary spec needs one weight per unitary"));
            }
            if weights.iter().any(|&w| !(w >= 0.0)) {
                return Err(Error::Domain("random-unitary weights must be nonnegative".into()));
            }
            let algebra = Arc::clone(unitaries[0].algebra());
            let ops = weights.iter().zip(&unitaries).map(|(&w, u)| u.scale_re(w.sqrt())).collect();
            MarkovMap::from_kraus(algebra, ops)
        }
        ChannelSpec::Schur { mask } => MarkovMap::from_schur(mask),
        ChannelSpec::Stochastic { weights, kernel } => MarkovMap::from_kernel(&weights, kernel),
        ChannelSpec::Circulant { probabilities } => {
            let n = probabilities.len();
            if n == 0 {
                return Err(structural("empty probability vector"));
            }
            let kernel = DMatrix::from_fn(n, n, |i, j| probabilities[(j + n - i) % n]);
            MarkovMap::from_kernel(&vec![1.0 / n as f64; n], kernel)
        }
        ChannelSpec::ConditionalExpectation(sub) => Ok(MarkovMap::conditional_expectation(sub)),
        ChannelSpec::Transpose { n } => {
            let algebra = Arc::new(TracialAlgebra::matrix(n)?);
            let m = MarkovMap::from_action(Arc::clone(&algebra), Representation::Transfer, |x| {
                x.map_blocks(|_, b| b.transpose())
            });
            Ok(m)
        }
        ChannelSpec::Transfer { algebra, matrix } => {
            let n = algebra.coord_dim();
            if matrix.nrows() != n || matrix.ncols() != n {
                return Err(structural(format!(
                    "transfer matrix is {}x{}, algebra needs {n}x{n}",
                    matrix.nrows(),
                    matrix.ncols()
                )));
            }
            Ok(MarkovMap::from_transfer_with_repr(algebra, matrix, Representation::Transfer))
        }
    }
}

/// Kraus operators of the depolarizing channel on `M_n`.
fn depolarizing_kraus(algebra: &Arc<TracialAlgebra>, n: usize, lambda: f64) -> Vec<Element> {
    let omega = C64::from_polar(1.0, 2.0 * PI / n as f64);
    let shift = CMatrix::from_fn(n, n, |r, c| if r == (c + 1) % n { C64::new(1.0, 0.0) } else { C64::new(0.0, 0.0) });
    let clock = CMatrix::from_fn(n, n, |r, c| if r == c { omega.powu(r as u32) } else { C64::new(0.0, 0.0) });
    let mut ops = Vec::with_capacity(n * n);
    let nn = (n * n) as f64;
    let mut xa = CMatrix::identity(n, n);
    for a in 0..n {
        let mut zb = CMatrix::identity(n, n);
        for b in 0..n {
            let coef = if a == 0 && b == 0 { (1.0 - lambda + lambda / nn).sqrt() } else { lambda.sqrt() / n as f64 };
            if coef > 0.0 {
                let w = &xa * &zb * C64::new(coef, 0.0);
                ops.push(Element::from_matrix(algebra, w).expect("n x n"));
            }
            zb = &zb * &clock;
        }
        xa = &xa * &shift;
    }
    ops
}

impl MarkovMap {
    fn from_action(algebra: Arc<TracialAlgebra>, repr: Representation, f: impl Fn(&Element) -> Element) -> Self {
        let n = algebra.coord_dim();
        let mut transfer = CMatrix::zeros(n, n);
        for k in 0..n {
            let col = f(&Element::basis(&algebra, k)).to_coords();
            transfer.set_column(k, &col);
        }
        Self::from_transfer_with_repr(algebra, transfer, repr)
    }

    fn from_transfer_with_repr(algebra: Arc<TracialAlgebra>, transfer: CMatrix, repr: Representation) -> Self {
        let mut map = Self {
            algebra,
            repr,
            transfer,
            report: ValidationReport {
                unital_residual: f64::NAN,
                trace_residual: f64::NAN,
                min_choi_eigenvalue: f64::NAN,
                structural_failures: vec![],
            },
            validity: Validity::Unchecked,
        };
        map.revalidate();
        map
    }

    fn from_kraus(algebra: Arc<TracialAlgebra>, operators: Vec<Element>) -> Result<Self> {
        if operators.is_empty() {
            return Err(structural("Kraus family is empty"));
        }
        for a in &operators {
            if !a.same_algebra(&Element::identity(&algebra)) {
                return Err(structural("Kraus operator lives in a different algebra"));
            }
        }
        let ops = operators.clone();
        Ok(Self::from_action(algebra, Representation::Kraus(operators), move |x| apply_kraus(&ops, x)))
    }

    fn from_schur(mask: CMatrix) -> Result<Self> {
        let n = mask.nrows();
        if n == 0 || mask.ncols() != n {
            return Err(structural("Schur mask must be a nonempty square matrix"));
        }
        let algebra = Arc::new(TracialAlgebra::matrix(n)?);
        let m = mask.clone();
        let mut map = Self::from_action(algebra, Representation::SchurMask(mask), move |x| {
            x.map_blocks(|_, b| b.component_mul(&m))
        });
        map.revalidate();
        Ok(map)
    }

    fn from_kernel(weights: &[f64], kernel: DMatrix<f64>) -> Result<Self> {
        let n = weights.len();
        if kernel.nrows() != n || kernel.ncols() != n {
            return Err(structural(format!(
                "kernel is {}x{}, expected {n}x{n}",
                kernel.nrows(),
                kernel.ncols()
            )));
        }
        let algebra = Arc::new(TracialAlgebra::commutative(weights)?);
        let k = kernel.clone();
        Ok(Self::from_action(algebra, Representation::StochasticKernel(kernel), move |x| apply_kernel(&k, x)))
    }

    /// The trace-preserving conditional expectation onto `sub`.
    pub fn conditional_expectation(sub: Subalgebra) -> Self {
        let algebra = Arc::clone(sub.algebra());
        let transfer = sub.projector();
        Self::from_transfer_with_repr(algebra, transfer, Representation::CondExpectation(sub))
    }

    pub fn identity(algebra: &Arc<TracialAlgebra>) -> Self {
        build_channel(ChannelSpec::Identity(Arc::clone(algebra))).expect("identity always builds")
    }

    fn revalidate(&mut self) {
        let report = self.compute_report();
        self.validity = match report.reason() {
            None => Validity::Valid,
            Some(r) => Validity::Invalid(r),
        };
        self.report = report;
    }

    fn compute_report(&self) -> ValidationReport {
        let one = Element::identity(&self.algebra);
        let unital_residual = (&self.apply_transfer(&one) - &one).op_norm();
        let adj = Element::from_coords(&self.algebra, &(self.transfer.adjoint() * one.to_coords()));
        let trace_residual = (&adj - &one).op_norm();
        let min_choi_eigenvalue = self.choi_matrix().min_eigenvalue();
        let mut structural_failures = Vec::new();
        match &self.repr {
            Representation::SchurMask(mask) => {
                let herm_dev = (mask - mask.adjoint()).iter().map(|v| v.norm()).fold(0.0, f64::max);
                let min_eig = SymmetricEigen::new((mask + mask.adjoint()) * C64::new(0.5, 0.0))
                    .eigenvalues
                    .iter()
                    .copied()
                    .fold(f64::INFINITY, f64::min);
                if herm_dev > MARKOV_TOL || min_eig < CHOI_FLOOR {
                    structural_failures.push(format!("mask not PSD (min eigenvalue {min_eig:.3e})"));
                }
                if (0..mask.nrows()).any(|i| (mask[(i, i)] - C64::new(1.0, 0.0)).norm() > MARKOV_TOL) {
                    structural_failures.push("mask diagonal not 1".into());
                }
            }
            Representation::StochasticKernel(k) => {
                if k.iter().any(|&v| v < -MARKOV_TOL) {
                    structural_failures.push("kernel has negative entries".into());
                }
                if (0..k.nrows()).any(|i| (k.row(i).sum() - 1.0).abs() > MARKOV_TOL) {
                    structural_failures.push("kernel rows do not sum to 1".into());
                }
                let w: Vec<f64> = self.algebra.blocks().iter().map(|b| b.weight).collect();
                let uniform = w.iter().all(|&v| (v - w[0]).abs() <= 1e-15);
                let broken = (0..k.ncols()).any(|j| {
                    let mass: f64 = (0..k.nrows()).map(|i| w[i] * k[(i, j)]).sum();
                    (mass - w[j]).abs() > MARKOV_TOL
                });
                if broken {
                    structural_failures.push(if uniform {
                        "kernel not doubly stochastic".into()
                    } else {
                        "kernel not weight-preserving".into()
                    });
                }
            }
            _ => {}
        }
        ValidationReport { unital_residual, trace_residual, min_choi_eigenvalue, structural_failures }
    }

    pub fn algebra(&self) -> &Arc<TracialAlgebra> {
        &self.algebra
    }

    pub fn representation(&self) -> &Representation {
        &self.repr
    }

    pub fn transfer(&self) -> &CMatrix {
        &self.transfer
    }

    pub fn validity(&self) -> &Validity {
        &self.validity
    }

    pub fn is_valid(&self) -> bool {
        self.validity == Validity::Valid
    }

    pub fn validation_report(&self) -> &ValidationReport {
        &self.report
    }

    /// Errors unless the map passed the Markov checks.
    pub fn ensure_valid(&self) -> Result<()> {
        match &self.validity {
            Validity::Valid => Ok(()),
            Validity::Invalid(r) => Err(Error::InvalidMap(r.clone())),
            Validity::Unchecked => Err(Error::InvalidMap("unchecked".into())),
        }
    }

    /// `T(x)` through the structured representation.
    pub fn apply(&self, x: &Element) -> Result<Element> {
        x.check_same(&Element::identity(&self.algebra))?;
        Ok(self.apply_unchecked(x))
    }

    pub(crate) fn apply_unchecked(&self, x: &Element) -> Element {
        match &self.repr {
            Representation::Kraus(ops) => apply_kraus(ops, x),
            Representation::SchurMask(mask) => x.map_blocks(|_, b| b.component_mul(mask)),
            Representation::StochasticKernel(k) => apply_kernel(k, x),
            Representation::CondExpectation(sub) => sub.project(x),
            Representation::Composition(factors) => {
                factors.iter().rev().fold(x.clone(), |acc, f| f.apply_unchecked(&acc))
            }
            Representation::Transfer => self.apply_transfer(x),
        }
    }

    /// `T(x)` through the cached transfer matrix.
    pub fn apply_transfer(&self, x: &Element) -> Element {
        Element::from_coords(&self.algebra, &(&self.transfer * x.to_coords()))
    }

    /// `T†(x)` for the trace pairing.
    pub fn apply_adjoint(&self, x: &Element) -> Element {
        Element::from_coords(&self.algebra, &(self.transfer.adjoint() * x.to_coords()))
    }

    /// Choi matrix `Σ E_{rc} ⊗ T(E_{rc})` over the matrix units of the
    /// algebra, embedded block-diagonally in `M_D`, `D = Σ d_i`.
    pub fn choi_matrix(&self) -> ChoiMatrix {
        let big = self.algebra.matrix_size();
        let mut starts = Vec::with_capacity(self.algebra.num_blocks());
        let mut acc = 0;
        for b in self.algebra.blocks() {
            starts.push(acc);
            acc += b.dim;
        }
        let mut choi = CMatrix::zeros(big * big, big * big);
        for (i, b) in self.algebra.blocks().iter().enumerate() {
            for r in 0..b.dim {
                for c in 0..b.dim {
                    let image = self.apply_transfer(&Element::matrix_unit(&self.algebra, i, r, c));
                    let (outer_r, outer_c) = (starts[i] + r, starts[i] + c);
                    for (j, m) in image.blocks().iter().enumerate() {
                        let s = starts[j];
                        for rr in 0..m.nrows() {
                            for cc in 0..m.ncols() {
                                choi[(outer_r * big + s + rr, outer_c * big + s + cc)] = m[(rr, cc)];
                            }
                        }
                    }
                }
            }
        }
        ChoiMatrix { matrix: choi, block_size: big }
    }

    /// The trace-pairing adjoint, again a Markov map when `self` is.
    pub fn adjoint(&self) -> MarkovMap {
        let transfer = self.transfer.adjoint();
        let repr = match &self.repr {
            Representation::Kraus(ops) => Representation::Kraus(ops.iter().map(Element::adjoint).collect()),
            Representation::SchurMask(m) => Representation::SchurMask(m.map(|v| v.conj())),
            Representation::StochasticKernel(k) => {
                let w: Vec<f64> = self.algebra.blocks().iter().map(|b| b.weight).collect();
                Representation::StochasticKernel(DMatrix::from_fn(k.nrows(), k.ncols(), |i, j| w[j] * k[(j, i)] / w[i]))
            }
            Representation::CondExpectation(s) => Representation::CondExpectation(s.clone()),
            Representation::Composition(fs) => Representation::Composition(fs.iter().rev().map(MarkovMap::adjoint).collect()),
            Representation::Transfer => Representation::Transfer,
        };
        Self::from_transfer_with_repr(Arc::clone(&self.algebra), transfer, repr)
    }

    /// `Id_{M_2} ⊗ T` on the doubled algebra.
    pub fn amplify_2x2(&self) -> MarkovMap {
        let doubled = Arc::new(self.algebra.doubled());
        let repr = match &self.repr {
            Representation::Kraus(ops) => Representation::Kraus(
                ops.iter()
                    .map(|a| {
                        let blocks = a
                            .blocks()
                            .iter()
                            .map(|m| {
                                let d = m.nrows();
                                let mut out = CMatrix::zeros(2 * d, 2 * d);
                                out.view_mut((0, 0), (d, d)).copy_from(m);
                                out.view_mut((d, d), (d, d)).copy_from(m);
                                out
                            })
                            .collect();
                        Element::from_blocks(&doubled, blocks).expect("doubled shapes")
                    })
                    .collect(),
            ),
            _ => Representation::Transfer,
        };
        let base = self.clone();
        let alg = Arc::clone(&self.algebra);
        Self::from_action(Arc::clone(&doubled), repr, move |x| {
            let mut out: Vec<CMatrix> = x.blocks().iter().map(|m| CMatrix::zeros(m.nrows(), m.ncols())).collect();
            for s in 0..2 {
                for t in 0..2 {
                    let quadrant: Vec<CMatrix> = x
                        .blocks()
                        .iter()
                        .map(|m| {
                            let d = m.nrows() / 2;
                            m.view((s * d, t * d), (d, d)).into_owned()
                        })
                        .collect();
                    let y = base.apply_transfer(&Element::from_blocks(&alg, quadrant).expect("quadrant shapes"));
                    for (o, m) in out.iter_mut().zip(y.blocks()) {
                        let d = m.nrows();
                        o.view_mut((s * d, t * d), (d, d)).copy_from(m);
                    }
                }
            }
            Element::from_blocks(&doubled, out).expect("doubled shapes")
        })
    }
}

/// `S ∘ T`, with the factor list kept.
pub fn compose(s: &MarkovMap, t: &MarkovMap) -> Result<MarkovMap> {
    if *s.algebra != *t.algebra {
        return Err(structural(format!("cannot compose maps on {} and {}", s.algebra, t.algebra)));
    }
    let mut factors = Vec::new();
    for m in [s, t] {
        match &m.repr {
            Representation::Composition(fs) => factors.extend(fs.iter().cloned()),
            _ => factors.push(m.clone()),
        }
    }
    let transfer = &s.transfer * &t.transfer;
    Ok(MarkovMap::from_transfer_with_repr(Arc::clone(&s.algebra), transfer, Representation::Composition(factors)))
}

pub fn adjoint(t: &MarkovMap) -> MarkovMap {
    t.adjoint()
}

pub fn validate_markov(t: &MarkovMap) -> ValidationReport {
    t.report.clone()
}

fn apply_kraus(ops: &[Element], x: &Element) -> Element {
    let mut acc = Element::zero(x.algebra());
    for a in ops {
        acc = &acc + &(&(a * x) * &a.adjoint());
    }
    acc
}

fn apply_kernel(k: &DMatrix<f64>, x: &Element) -> Element {
    let vals: Vec<C64> = x.blocks().iter().map(|m| m[(0, 0)]).collect();
    let blocks = (0..k.nrows())
        .map(|i| {
            let v: C64 = (0..k.ncols()).map(|j| vals[j] * k[(i, j)]).sum();
            CMatrix::from_element(1, 1, v)
        })
        .collect();
    Element::from_blocks(x.algebra(), blocks).expect("commutative shapes")
}

/// Eigenvalues of the circulant kernel built from `probabilities`: the
/// Fourier coefficients `c_g = Σ_k μ_k ω^{gk}` of the convolving measure.
pub fn circulant_multipliers(probabilities: &[f64]) -> Vec<C64> {
    let n = probabilities.len();
    (0..n)
        .map(|g| {
            probabilities
                .iter()
                .enumerate()
                .map(|(k, &mu)| C64::from_polar(mu, 2.0 * PI * (g * k) as f64 / n as f64))
                .sum()
        })
        .collect()
}

#[derive(Debug, Clone)]
pub struct ChoiMatrix {
    pub matrix: CMatrix,
    /// `D = Σ d_i`; the matrix is `D² × D²`.
    pub block_size: usize,
}

impl ChoiMatrix {
    pub fn eigenvalues(&self) -> Vec<f64> {
        let h = (&self.matrix + self.matrix.adjoint()) * C64::new(0.5, 0.0);
        let mut v: Vec<f64> = SymmetricEigen::new(h).eigenvalues.iter().copied().collect();
        v.sort_by(|a, b| a.total_cmp(b));
        v
    }

    pub fn min_eigenvalue(&self) -> f64 {
        self.eigenvalues().first().copied().unwrap_or(0.0)
    }

    pub fn hermitian_deviation(&self) -> f64 {
        (&self.matrix - self.matrix.adjoint()).iter().map(|v| v.norm()).fold(0.0, f64::max)
    }
}
