//! Spectral gaps `c_p = ‖T : L_p^0 → L_p^0‖`.
//!
//! `c_2` is a singular value. For `p ≠ 2` the norm is a nonconvex
//! maximization; [`gap_lp`] returns a witnessed lower bound from a monotone
//! ascent on the unit sphere of `L_p^0`, paired with the best closed-form
//! upper bound.

use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::algebra::{CMatrix, CVector, Element, TracialAlgebra, C64};
use crate::bounds::{forward_bound, BoundSource};
use crate::channels::MarkovMap;
use crate::error::{domain, structural, Error, Result};
use crate::exec::{argmax_by_key, derive_seed, map_indexed, ExecPolicy};
use crate::structure::{commutation_residual, Subalgebra};

/// Largest commutation residual accepted between `T` and `E_N`.
pub const FIXED_ALGEBRA_TOL: f64 = 1e-8;
/// Largest `Σ d_i²` the brute-force oracle accepts.
pub const ORACLE_MAX_COORDS: usize = 16;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GapOptions {
    pub restarts: usize,
    pub max_iters: usize,
    pub tol: f64,
    pub seed: u64,
    pub policy: ExecPolicy,
}

impl Default for GapOptions {
    fn default() -> Self {
        Self { restarts: 20, max_iters: 5000, tol: 1e-10, seed: 0, policy: ExecPolicy::default() }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct UpperBound {
    pub value: f64,
    pub source: BoundSource,
}

#[derive(Debug, Clone)]
pub struct GapEstimate {
    pub p: f64,
    pub lower: f64,
    /// Unit vector of `L_p^0` attaining `lower`; `None` when `L_p^0 = 0`.
    pub witness: Option<Element>,
    pub upper: Option<UpperBound>,
    pub iterations: usize,
    pub restarts_used: usize,
    pub converged: bool,
}

impl GapEstimate {
    /// `‖T(witness)‖_p` recomputed from scratch.
    pub fn reevaluate(&self, t: &MarkovMap) -> Option<f64> {
        self.witness.as_ref().map(|w| t.apply_unchecked(w).lp_norm_unchecked(self.p))
    }
}

/// Unit sphere of `L_p^0 = ker E_N`, in trace coordinates.
#[derive(Debug, Clone)]
pub struct Sphere {
    algebra: Arc<TracialAlgebra>,
    p: f64,
    /// Orthogonal projector `I − E_N`.
    complement: CMatrix,
    dim: usize,
}

impl Sphere {
    pub fn new(sub: &Subalgebra, p: f64) -> Self {
        let n = sub.algebra().coord_dim();
        Self {
            algebra: Arc::clone(sub.algebra()),
            p,
            complement: CMatrix::identity(n, n) - sub.projector(),
            dim: n - sub.dim(),
        }
    }

    pub fn p(&self) -> f64 {
        self.p
    }

    pub fn algebra(&self) -> &Arc<TracialAlgebra> {
        &self.algebra
    }

    /// Complex dimension of `L_p^0`.
    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn element(&self, v: &CVector) -> Element {
        Element::from_coords(&self.algebra, v)
    }

    pub fn project(&self, v: &CVector) -> CVector {
        &self.complement * v
    }

    pub fn norm(&self, v: &CVector) -> f64 {
        self.element(v).lp_norm_unchecked(self.p)
    }

    /// Projects onto `L_p^0` and rescales to unit `L_p` norm; `None` when
    /// nothing of `v` survives the projection.
    pub fn normalize(&self, v: &CVector) -> Option<CVector> {
        let scale = v.norm();
        if !(scale > 0.0) || !scale.is_finite() {
            return None;
        }
        let w = self.project(v);
        if w.norm() <= 1e-12 * scale {
            return None;
        }
        let n = self.norm(&w);
        (n > 0.0).then(|| w.unscale(n))
    }
}

/// A scale-invariant function on the sphere of `L_p^0`.
pub trait Objective: Sync {
    /// Value at a nonzero vector of `L_p^0`.
    fn value(&self, x: &CVector) -> f64;

    /// Real gradient of the value at a unit vector `x`, as a vector of the
    /// trace-coordinate space (projection onto `L_p^0` is done by the caller).
    fn gradient(&self, x: &CVector, value: f64) -> CVector;

    /// Extra candidate points tried before the gradient step.
    fn proposals(&self, _x: &CVector) -> Vec<CVector> {
        Vec::new()
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AscentOptions {
    pub max_iters: usize,
    pub tol: f64,
}

#[derive(Debug, Clone)]
pub struct AscentResult {
    pub x: CVector,
    pub value: f64,
    pub iterations: usize,
    pub converged: bool,
    /// Objective after every accepted step, starting with the seed.
    pub history: Vec<f64>,
}

/// Below this relative gain, proposals are supplemented by a gradient step.
const SLOW_PROGRESS: f64 = 1e-4;
const MIN_STEP: f64 = 1e-12;

/// Monotone ascent: every accepted step strictly increases the objective.
/// Stops when the relative gain of a step is below `tol`, when no ascent
/// step is found, or after `max_iters` steps.
pub fn ascend<O: Objective + ?Sized>(sphere: &Sphere, obj: &O, x0: &CVector, opts: AscentOptions) -> Option<AscentResult> {
    let mut x = sphere.normalize(x0)?;
    let mut f = obj.value(&x);
    let mut history = vec![f];
    let mut step = 0.1;
    let mut converged = false;
    let mut iterations = 0;
    while iterations < opts.max_iters {
        let mut best: Option<(CVector, f64)> = None;
        for prop in obj.proposals(&x) {
            if let Some(y) = sphere.normalize(&prop) {
                let fy = obj.value(&y);
                if fy > best.as_ref().map_or(f, |b| b.1) {
                    best = Some((y, fy));
                }
            }
        }
        let slow = best.as_ref().map_or(true, |b| b.1 - f <= SLOW_PROGRESS * f.abs());
        if slow {
            let g = sphere.project(&obj.gradient(&x, f));
            let gn = g.norm();
            if gn > 0.0 && gn.is_finite() {
                let dir = g * C64::new(x.norm() / gn, 0.0);
                let floor = best.as_ref().map_or(f, |b| b.1);
                let mut t = step;
                let mut found = false;
                while t >= MIN_STEP {
                    if let Some(y) = sphere.normalize(&(&x + &dir * C64::new(t, 0.0))) {
                        let fy = obj.value(&y);
                        if fy > floor {
                            best = Some((y, fy));
                            found = true;
                            break;
                        }
                    }
                    t *= 0.5;
                }
                step = if found { (2.0 * t).min(1.0) } else { 1e-3 };
            }
        }
        let Some((y, fy)) = best else {
            converged = true;
            break;
        };
        iterations += 1;
        let gain = (fy - f) / f.abs().max(f64::MIN_POSITIVE);
        x = y;
        f = fy;
        history.push(f);
        if gain < opts.tol {
            converged = true;
            break;
        }
    }
    Some(AscentResult { x, value: f, iterations, converged, history })
}

/// `‖T x‖_p / ‖x‖_p` on `L_p^0`.
pub struct GapObjective<'a> {
    sphere: &'a Sphere,
    transfer: &'a CMatrix,
    adjoint: CMatrix,
}

impl<'a> GapObjective<'a> {
    pub fn new(sphere: &'a Sphere, t: &'a MarkovMap) -> Self {
        Self { sphere, transfer: t.transfer(), adjoint: t.transfer().adjoint() }
    }

    /// `T† J_p(T x)`, or `None` when `T x = 0`.
    fn pullback(&self, x: &CVector) -> Option<CVector> {
        let tx = self.sphere.element(&(self.transfer * x));
        let n = tx.lp_norm_unchecked(self.sphere.p);
        (n > 0.0).then(|| &self.adjoint * tx.duality_map_unchecked(self.sphere.p, n).to_coords())
    }
}

impl Objective for GapObjective<'_> {
    fn value(&self, x: &CVector) -> f64 {
        let n = self.sphere.norm(x);
        if n == 0.0 {
            return 0.0;
        }
        self.sphere.norm(&(self.transfer * x)) / n
    }

    fn gradient(&self, x: &CVector, value: f64) -> CVector {
        let Some(pulled) = self.pullback(x) else {
            return CVector::zeros(x.len());
        };
        let xe = self.sphere.element(x);
        let jx = xe.duality_map_unchecked(self.sphere.p, xe.lp_norm_unchecked(self.sphere.p)).to_coords();
        pulled - jx * C64::new(value, 0.0)
    }

    fn proposals(&self, x: &CVector) -> Vec<CVector> {
        let Some(pulled) = self.pullback(x) else {
            return Vec::new();
        };
        // Power step, then the dual-norm step that maximizes the pairing.
        let z = self.sphere.project(&pulled);
        let ze = self.sphere.element(&z);
        let q = self.sphere.p / (self.sphere.p - 1.0);
        let nz = ze.lp_norm_unchecked(q);
        let mut out = vec![pulled];
        if nz > 0.0 {
            out.push(ze.duality_map_unchecked(q, nz).to_coords());
        }
        out
    }
}

fn check_gap_p(p: f64) -> Result<()> {
    if !(p > 1.0 && p.is_finite()) {
        return Err(domain(format!("gap estimation needs p in (1, ∞), got {p}: the result is false for p=1,∞")));
    }
    Ok(())
}

fn check_fixed_algebra(t: &MarkovMap, n: &Subalgebra) -> Result<()> {
    if **t.algebra() != **n.algebra() {
        return Err(structural("map and subalgebra live on different algebras"));
    }
    let r = commutation_residual(t, n);
    if !(r <= FIXED_ALGEBRA_TOL) {
        return Err(domain(format!("subalgebra is not fixed by the map (commutation residual {r:.3e})")));
    }
    Ok(())
}

/// A unit vector of `L_2^0`, for degenerate cases.
fn any_unit_vector(sphere: &Sphere) -> Option<CVector> {
    (0..sphere.complement.ncols())
        .map(|j| sphere.complement.column(j).into_owned())
        .max_by(|a, b| a.norm().total_cmp(&b.norm()))
        .filter(|v| v.norm() > 1e-8)
        .map(|v| v.unscale(v.norm()))
}

/// Exact `c_2`: the top singular value of `T (I − E_N)`.
pub fn gap_l2(t: &MarkovMap, n: &Subalgebra) -> Result<GapEstimate> {
    t.ensure_valid()?;
    check_fixed_algebra(t, n)?;
    let sphere = Sphere::new(n, 2.0);
    let exact = |lower: f64, witness: Option<Element>| GapEstimate {
        p: 2.0,
        lower,
        witness,
        upper: Some(UpperBound { value: lower, source: BoundSource::ExactL2 }),
        iterations: 0,
        restarts_used: 0,
        converged: true,
    };
    if sphere.dim == 0 {
        return Ok(exact(0.0, None));
    }
    let s = t.transfer() * &sphere.complement;
    let svd = crate::linalg::svd(&s);
    let vt = svd.v_t.expect("v_t requested");
    let k = argmax_by_key(svd.singular_values.as_slice(), |v| *v).expect("nonempty");
    let sigma = svd.singular_values[k];
    let v = sphere.project(&vt.row(k).adjoint());
    let v = if v.norm() > 0.5 { v.unscale(v.norm()) } else { any_unit_vector(&sphere).ok_or_else(|| Error::Numerical("no unit vector in L_2^0".into()))? };
    Ok(exact(sigma, Some(sphere.element(&v))))
}

fn upper_for(c2: f64, p: f64) -> Option<UpperBound> {
    if p == 2.0 {
        return Some(UpperBound { value: c2, source: BoundSource::ExactL2 });
    }
    forward_bound(c2, p)
        .ok()
        .and_then(|r| r.minimum_applicable)
        .map(|(value, source)| UpperBound { value, source })
}

/// Standard complex Gaussian vector in trace coordinates; self-adjoint when
/// `hermitian` is set.
pub(crate) fn gaussian_coords(algebra: &Arc<TracialAlgebra>, rng: &mut ChaCha8Rng, hermitian: bool) -> CVector {
    let n = algebra.coord_dim();
    let v = CVector::from_fn(n, |_, _| C64::new(rng.sample(StandardNormal), rng.sample(StandardNormal)));
    if hermitian {
        let e = Element::from_coords(algebra, &v);
        (&e + &e.adjoint()).to_coords()
    } else {
        v
    }
}

/// Seeds for restart `r`: the `L_2` witness, its Mazur transport to the
/// `L_p` sphere, then Gaussian draws alternating between general and
/// self-adjoint elements.
fn restart_seed(r: usize, l2: &Element, p: f64, opts: &GapOptions) -> CVector {
    match r {
        0 => l2.to_coords(),
        1 => l2.mazur(2.0, p).expect("finite exponents").to_coords(),
        _ => {
            let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(opts.seed, r as u64));
            gaussian_coords(l2.algebra(), &mut rng, r % 2 == 1)
        }
    }
}

/// Best restart of an ascent run, merged deterministically.
pub(crate) fn best_of_restarts<O: Objective + ?Sized>(
    sphere: &Sphere,
    obj: &O,
    restarts: usize,
    seed_for: impl Fn(usize) -> CVector + Sync + Send,
    opts: &GapOptions,
) -> Option<AscentResult> {
    let aopts = AscentOptions { max_iters: opts.max_iters, tol: opts.tol };
    let runs = map_indexed(opts.policy, restarts, |r| ascend(sphere, obj, &seed_for(r), aopts));
    let runs: Vec<AscentResult> = runs.into_iter().flatten().collect();
    let k = argmax_by_key(&runs, |r| r.value)?;
    runs.into_iter().nth(k)
}

/// Witnessed lower bound on `c_p` bracketed by the best closed-form upper
/// bound.
pub fn gap_lp(t: &MarkovMap, n: &Subalgebra, p: f64, opts: &GapOptions) -> Result<GapEstimate> {
    check_gap_p(p)?;
    let l2 = gap_l2(t, n)?;
    let upper = upper_for(l2.lower, p);
    let Some(l2_witness) = l2.witness else {
        return Ok(GapEstimate { p, lower: 0.0, witness: None, upper, iterations: 0, restarts_used: 0, converged: true });
    };
    let sphere = Sphere::new(n, p);
    let obj = GapObjective::new(&sphere, t);
    let restarts = opts.restarts.max(1);
    let best = best_of_restarts(&sphere, &obj, restarts, |r| restart_seed(r, &l2_witness, p, opts), opts)
        .ok_or_else(|| Error::Numerical("every restart degenerated".into()))?;
    Ok(GapEstimate {
        p,
        lower: best.value,
        witness: Some(sphere.element(&best.x)),
        upper,
        iterations: best.iterations,
        restarts_used: restarts,
        converged: best.converged,
    })
}

/// Orthonormal basis of `L_2^0` as columns.
fn complement_basis(sphere: &Sphere) -> CMatrix {
    let q = &sphere.complement;
    let svd = crate::linalg::svd(q);
    let u = svd.u.expect("u requested");
    let cols: Vec<CVector> = svd
        .singular_values
        .iter()
        .enumerate()
        .filter(|(_, &s)| s > 0.5)
        .map(|(j, _)| u.column(j).into_owned())
        .collect();
    let mut m = CMatrix::zeros(q.nrows(), cols.len());
    for (j, c) in cols.iter().enumerate() {
        m.set_column(j, c);
    }
    m
}

/// Independent estimate by random sampling and coordinate search, using only
/// `T` applications and norms.
pub fn gap_lp_oracle(t: &MarkovMap, n: &Subalgebra, p: f64, budget: usize, seed: u64) -> Result<GapEstimate> {
    check_gap_p(p)?;
    t.ensure_valid()?;
    check_fixed_algebra(t, n)?;
    let alg = t.algebra();
    if alg.coord_dim() > ORACLE_MAX_COORDS {
        return Err(domain(format!("oracle dimension guard exceeded: {} > {ORACLE_MAX_COORDS}", alg.coord_dim())));
    }
    let sphere = Sphere::new(n, p);
    if sphere.dim == 0 {
        return Ok(GapEstimate { p, lower: 0.0, witness: None, upper: None, iterations: 0, restarts_used: 0, converged: true });
    }
    let basis = complement_basis(&sphere);
    let value = |c: &CVector| -> f64 {
        let x = sphere.element(&(&basis * c));
        let nx = x.lp_norm_unchecked(p);
        if nx == 0.0 {
            return 0.0;
        }
        t.apply_unchecked(&x).lp_norm_unchecked(p) / nx
    };
    let k = basis.ncols();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    const KEEP: usize = 4;
    let mut top: Vec<(f64, CVector)> = Vec::with_capacity(KEEP + 1);
    for i in 0..budget.max(1) {
        let full = gaussian_coords(alg, &mut rng, i % 2 == 1);
        let c = basis.adjoint() * full;
        let v = value(&c);
        if top.len() < KEEP || v > top[top.len() - 1].0 {
            top.push((v, c));
            top.sort_by(|a, b| b.0.total_cmp(&a.0));
            top.truncate(KEEP);
        }
    }
    let mut sweeps = 0;
    let mut best: Option<(f64, CVector)> = None;
    for (mut f, mut c) in top {
        c.unscale_mut(c.norm());
        let mut step = 0.1;
        while step > 1e-8 && sweeps < 100_000 {
            sweeps += 1;
            let mut improved = false;
            for j in 0..2 * k {
                let unit = if j < k { C64::new(step, 0.0) } else { C64::new(0.0, step) };
                for sign in [1.0, -1.0] {
                    let mut trial = c.clone();
                    trial[j % k] += unit * sign;
                    let tn = trial.norm();
                    trial.unscale_mut(tn);
                    let ft = value(&trial);
                    if ft > f {
                        f = ft;
                        c = trial;
                        improved = true;
                    }
                }
            }
            if !improved {
                step *= 0.5;
            }
        }
        if best.as_ref().map_or(true, |b| f > b.0) {
            best = Some((f, c));
        }
    }
    let (lower, c) = best.expect("at least one sample");
    let w = sphere.normalize(&(&basis * c)).map(|v| sphere.element(&v));
    Ok(GapEstimate { p, lower, witness: w, upper: None, iterations: sweeps, restarts_used: budget, converged: true })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::channels::{build_channel, compose, ChannelSpec};
    use crate::structure::fixed_point_algebra;
    use approx::assert_relative_eq;
    use nalgebra::DMatrix;

    fn quick() -> GapOptions {
        GapOptions { restarts: 4, ..GapOptions::default() }
    }

    fn with_fixed(spec: ChannelSpec) -> (MarkovMap, Subalgebra) {
        let t = build_channel(spec).unwrap();
        let n = fixed_point_algebra(&t).unwrap();
        (t, n)
    }

    #[test]
    fn l2_examples() {
        let (t, n) = with_fixed(ChannelSpec::Depolarizing { n: 2, lambda: 0.5 });
        assert_relative_eq!(gap_l2(&t, &n).unwrap().lower, 0.5, epsilon = 1e-14);
        let mask = CMatrix::from_fn(2, 2, |i, j| C64::new(if i == j { 1.0 } else { 0.3 }, 0.0));
        let (t, n) = with_fixed(ChannelSpec::Schur { mask });
        assert_relative_eq!(gap_l2(&t, &n).unwrap().lower, 0.3, epsilon = 1e-14);
        let k = DMatrix::from_row_slice(2, 2, &[0.75, 0.25, 0.25, 0.75]);
        let (t, n) = with_fixed(ChannelSpec::Stochastic { weights: vec![0.5, 0.5], kernel: k });
        let g = gap_l2(&t, &n).unwrap();
        assert_relative_eq!(g.lower, 0.5, epsilon = 1e-14);
        let w = g.witness.unwrap();
        assert!(n.project(&w).norm2() < 1e-12);
        assert_relative_eq!(w.norm2(), 1.0, epsilon = 1e-14);
    }

    #[test]
    fn mismatched_subalgebra_is_rejected() {
        let mask = CMatrix::from_fn(2, 2, |i, j| C64::new(if i == j { 1.0 } else { 0.3 }, 0.0));
        let t = build_channel(ChannelSpec::Schur { mask }).unwrap();
        let a = Arc::clone(t.algebra());
        let rotated = Subalgebra::rotated_diagonal(&a, 0.3).unwrap();
        assert!(matches!(gap_l2(&t, &rotated), Err(Error::Domain(_))));
    }

    #[test]
    fn depolarizing_is_forced() {
        let (t, n) = with_fixed(ChannelSpec::Depolarizing { n: 2, lambda: 0.3 });
        for p in [1.5, 3.0, 4.0] {
            let g = gap_lp(&t, &n, p, &quick()).unwrap();
            assert_relative_eq!(g.lower, 0.7, epsilon = 1e-10);
            assert!(g.upper.unwrap().value >= 0.7);
        }
    }

    #[test]
    fn endpoints_are_rejected() {
        let (t, n) = with_fixed(ChannelSpec::Depolarizing { n: 2, lambda: 0.3 });
        for p in [1.0, 0.5, f64::INFINITY, f64::NAN] {
            let e = gap_lp(&t, &n, p, &quick()).unwrap_err();
            assert!(e.to_string().contains("false for p=1,∞"), "{e}");
        }
    }

    #[test]
    fn expectations_have_zero_gap() {
        let a = Arc::new(TracialAlgebra::matrix(2).unwrap());
        for sub in [Subalgebra::scalars(&a), Subalgebra::diagonal(&a).unwrap()] {
            let e = MarkovMap::conditional_expectation(sub.clone());
            for p in [1.5, 3.0] {
                assert!(gap_lp(&e, &sub, p, &quick()).unwrap().lower < 1e-12);
            }
        }
        let full = Subalgebra::full(&a);
        let g = gap_lp(&MarkovMap::identity(&a), &full, 3.0, &quick()).unwrap();
        assert_eq!(g.lower, 0.0);
        assert!(g.witness.is_none());
    }

    #[test]
    fn p2_matches_exact_value() {
        let a = Arc::new(TracialAlgebra::matrix(2).unwrap());
        let ea = MarkovMap::conditional_expectation(Subalgebra::diagonal(&a).unwrap());
        let eb = MarkovMap::conditional_expectation(Subalgebra::rotated_diagonal(&a, 0.4).unwrap());
        let t = compose(&ea, &eb).unwrap();
        let n = fixed_point_algebra(&t).unwrap();
        let exact = gap_l2(&t, &n).unwrap().lower;
        assert_relative_eq!(exact, (0.8f64).cos(), epsilon = 1e-12);
        assert_relative_eq!(gap_lp(&t, &n, 2.0, &quick()).unwrap().lower, exact, epsilon = 1e-8);
    }

    #[test]
    fn witness_reproduces_lower() {
        let mask = CMatrix::from_fn(3, 3, |i, j| C64::new(if i == j { 1.0 } else { 0.2 + 0.1 * (i + j) as f64 }, 0.0));
        let (t, n) = with_fixed(ChannelSpec::Schur { mask });
        for p in [1.5, 4.0] {
            let g = gap_lp(&t, &n, p, &quick()).unwrap();
            let w = g.witness.as_ref().unwrap();
            assert!(n.project(w).norm2() <= 1e-9);
            assert!((w.lp_norm_unchecked(p) - 1.0).abs() <= 1e-10);
            assert!((g.reevaluate(&t).unwrap() - g.lower).abs() <= 1e-10);
            assert!(g.lower <= g.upper.unwrap().value + 1e-7);
        }
    }

    #[test]
    fn ascent_is_monotone() {
        let mask = CMatrix::from_fn(2, 2, |i, j| C64::new(if i == j { 1.0 } else { 0.3 }, 0.0));
        let (t, n) = with_fixed(ChannelSpec::Schur { mask });
        let sphere = Sphere::new(&n, 4.0);
        let obj = GapObjective::new(&sphere, &t);
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..5 {
            let x0 = gaussian_coords(t.algebra(), &mut rng, false);
            let r = ascend(&sphere, &obj, &x0, AscentOptions { max_iters: 500, tol: 1e-12 }).unwrap();
            assert!(r.history.windows(2).all(|w| w[1] >= w[0] - 1e-12));
        }
    }

    #[test]
    fn oracle_examples() {
        let a = Arc::new(TracialAlgebra::matrix(2).unwrap());
        let g = gap_lp_oracle(&MarkovMap::identity(&a), &Subalgebra::scalars(&a), 3.0, 100, 1).unwrap();
        assert_relative_eq!(g.lower, 1.0, epsilon = 1e-12);
        let (t, n) = with_fixed(ChannelSpec::Depolarizing { n: 2, lambda: 0.5 });
        assert_relative_eq!(gap_lp_oracle(&t, &n, 3.0, 2000, 1).unwrap().lower, 0.5, epsilon = 1e-4);
        let a5 = Arc::new(TracialAlgebra::matrix(5).unwrap());
        assert!(gap_lp_oracle(&MarkovMap::identity(&a5), &Subalgebra::scalars(&a5), 3.0, 10, 1).is_err());
    }
}
