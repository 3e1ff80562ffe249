//! Σ-norms for a pair of subalgebras and their equivalence with `L_p` norms
//! on `L_p^0(N)`, `N = A ∩ B`.

use std::sync::Arc;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::algebra::{CMatrix, CVector, Element, TracialAlgebra, C64};
use crate::channels::{compose, MarkovMap};
use crate::error::{domain, structural, Error, Result};
use crate::exec::derive_seed;
use crate::gap::{best_of_restarts, gap_l2, gap_lp, gaussian_coords, GapEstimate, GapOptions, Objective, Sphere, UpperBound};
use crate::bounds::{forward_bound, BoundSource};
use crate::structure::{fixed_point_algebra, Subalgebra};

/// Slack of the Σ-norm triangle bound `‖x‖_Σ ≤ 4‖x‖_p`.
pub const SIGMA_SLACK: f64 = 1e-10;
/// Largest `‖E_N x‖_2` accepted for an element of `L_p^0`.
pub const MEAN_ZERO_TOL: f64 = 1e-9;

#[derive(Debug, Clone)]
pub struct SigmaInstance {
    pub a: Subalgebra,
    pub b: Subalgebra,
    pub n: Subalgebra,
    pub e_a: MarkovMap,
    pub e_b: MarkovMap,
    pub e_n: MarkovMap,
    /// `E_A E_B`.
    pub t: MarkovMap,
}

impl SigmaInstance {
    /// Builds the instance and checks that the fixed points of `E_A E_B`
    /// are exactly `A ∩ B`.
    pub fn new(a: Subalgebra, b: Subalgebra) -> Result<Self> {
        let n = a.intersection(&b)?;
        let e_a = MarkovMap::conditional_expectation(a.clone());
        let e_b = MarkovMap::conditional_expectation(b.clone());
        let e_n = MarkovMap::conditional_expectation(n.clone());
        let t = compose(&e_a, &e_b)?;
        let fixed = fixed_point_algebra(&t)?;
        let residual = (fixed.projector() - n.projector()).camax();
        if fixed.dim() != n.dim() || residual > 1e-8 {
            return Err(structural(format!(
                "fixed points of E_A E_B (dim {}) differ from A ∩ B (dim {}), residual {residual:.3e}",
                fixed.dim(),
                n.dim()
            )));
        }
        Ok(Self { a, b, n, e_a, e_b, e_n, t })
    }

    pub fn algebra(&self) -> &Arc<TracialAlgebra> {
        self.a.algebra()
    }

    /// `E_B E_A`.
    pub fn reversed(&self) -> MarkovMap {
        compose(&self.e_b, &self.e_a).expect("same algebra")
    }
}

/// `‖(1 − E_A)x‖_p + ‖(1 − E_B)x‖_p` for `x ∈ L_p^0(N)`.
pub fn sigma_norm(inst: &SigmaInstance, x: &Element, p: f64) -> Result<f64> {
    x.check_same(&Element::identity(inst.algebra()))?;
    if !(p >= 1.0) {
        return Err(domain(format!("Σ-norm needs p ≥ 1, got {p}")));
    }
    let mean = inst.n.project(x).norm2();
    if mean > MEAN_ZERO_TOL * x.norm2().max(1.0) {
        return Err(domain(format!("x is not mean zero: ‖E_N x‖_2 = {mean:.3e}")));
    }
    Ok((x - &inst.a.project(x)).lp_norm_unchecked(p) + (x - &inst.b.project(x)).lp_norm_unchecked(p))
}

/// `‖x‖_p / ‖x‖_{Σ,p}` on `L_p^0`.
struct RatioObjective<'a> {
    sphere: &'a Sphere,
    off_a: CMatrix,
    off_b: CMatrix,
}

impl RatioObjective<'_> {
    fn parts(&self, x: &CVector) -> (Element, Element) {
        (self.sphere.element(&(&self.off_a * x)), self.sphere.element(&(&self.off_b * x)))
    }
}

impl Objective for RatioObjective<'_> {
    fn value(&self, x: &CVector) -> f64 {
        let (a, b) = self.parts(x);
        let p = self.sphere.p();
        let d = a.lp_norm_unchecked(p) + b.lp_norm_unchecked(p);
        if d == 0.0 {
            return 0.0;
        }
        self.sphere.norm(x) / d
    }

    fn gradient(&self, x: &CVector, value: f64) -> CVector {
        let p = self.sphere.p();
        let xe = self.sphere.element(x);
        let nx = xe.lp_norm_unchecked(p);
        let (a, b) = self.parts(x);
        let (na, nb) = (a.lp_norm_unchecked(p), b.lp_norm_unchecked(p));
        let d = na + nb;
        if d == 0.0 || nx == 0.0 {
            return CVector::zeros(x.len());
        }
        // Subgradient of the denominator; a vanishing term contributes 0.
        let mut dd = CVector::zeros(x.len());
        if na > 0.0 {
            dd += &self.off_a * a.duality_map_unchecked(p, na).to_coords();
        }
        if nb > 0.0 {
            dd += &self.off_b * b.duality_map_unchecked(p, nb).to_coords();
        }
        (xe.duality_map_unchecked(p, nx).to_coords() - dd * C64::new(value, 0.0)).unscale(d)
    }
}

#[derive(Debug, Clone)]
pub struct EquivalenceReport {
    pub p: f64,
    pub worst_ratio: f64,
    pub witness: Option<Element>,
    pub c2: f64,
    pub c_p_upper: Option<UpperBound>,
    /// `1/(1 − c_p_upper)` when the upper bound is below 1.
    pub paper_bound: Option<f64>,
    pub iterations: usize,
    pub converged: bool,
}

impl EquivalenceReport {
    /// Whether a gap (and with it the norm equivalence) is certified.
    pub fn certified(&self) -> bool {
        self.paper_bound.is_some()
    }

    /// `worst_ratio ≤ paper_bound + 1e-6`, or `None` when not certified.
    pub fn within_bound(&self) -> Option<bool> {
        self.paper_bound.map(|b| self.worst_ratio <= b + 1e-6)
    }

    pub fn status(&self) -> &'static str {
        if self.certified() {
            "certified"
        } else {
            "equivalence not certified"
        }
    }
}

fn upper_from_c2(c2: f64, p: f64) -> Option<UpperBound> {
    if p == 2.0 {
        return (c2 < 1.0).then_some(UpperBound { value: c2, source: BoundSource::ExactL2 });
    }
    forward_bound(c2, p)
        .ok()
        .and_then(|r| r.minimum_applicable)
        .map(|(value, source)| UpperBound { value, source })
}

/// Largest `‖x‖_p / ‖x‖_{Σ,p}` found over `L_p^0`, against the bound
/// `1/(1 − c_p)` obtained from the exact `c_2` of `E_A E_B`.
pub fn equivalence_ratio(inst: &SigmaInstance, p: f64, opts: &GapOptions) -> Result<EquivalenceReport> {
    if !(p > 1.0 && p.is_finite()) {
        return Err(domain(format!("equivalence ratio needs p in (1, ∞), got {p}")));
    }
    let l2 = gap_l2(&inst.t, &inst.n)?;
    let c2 = l2.lower;
    let c_p_upper = upper_from_c2(c2, p).filter(|u| u.value < 1.0);
    let paper_bound = c_p_upper.map(|u| 1.0 / (1.0 - u.value));
    let Some(l2_witness) = l2.witness else {
        return Ok(EquivalenceReport { p, worst_ratio: 0.0, witness: None, c2, c_p_upper, paper_bound, iterations: 0, converged: true });
    };
    let sphere = Sphere::new(&inst.n, p);
    let n = inst.algebra().coord_dim();
    let id = CMatrix::identity(n, n);
    let obj = RatioObjective { sphere: &sphere, off_a: &id - inst.a.projector(), off_b: &id - inst.b.projector() };
    let restarts = opts.restarts.max(1);
    let seed_for = |r: usize| {
        if r == 0 {
            l2_witness.to_coords()
        } else {
            let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(opts.seed, r as u64));
            gaussian_coords(inst.algebra(), &mut rng, r % 2 == 1)
        }
    };
    let best = best_of_restarts(&sphere, &obj, restarts, seed_for, opts)
        .ok_or_else(|| Error::Numerical("every restart degenerated".into()))?;
    Ok(EquivalenceReport {
        p,
        worst_ratio: best.value,
        witness: Some(sphere.element(&best.x)),
        c2,
        c_p_upper,
        paper_bound,
        iterations: best.iterations,
        converged: best.converged,
    })
}

#[derive(Debug, Clone)]
pub struct SweepRow {
    pub p: f64,
    pub gap_ab: GapEstimate,
    pub gap_ba: GapEstimate,
    pub equivalence: EquivalenceReport,
}

#[derive(Debug, Clone)]
pub struct SweepReport {
    pub rows: Vec<SweepRow>,
    pub c2_ab: f64,
    pub c2_ba: f64,
    /// `|c_2(E_A E_B) − c_2(E_B E_A)| ≤ 1e-10`.
    pub symmetric: bool,
    /// Either every `p` is certified or none is.
    pub all_or_nothing: bool,
}

impl SweepReport {
    pub fn all_certified(&self) -> bool {
        self.rows.iter().all(|r| r.equivalence.certified())
    }
}

/// Gap brackets of `E_A E_B` and `E_B E_A` and the equivalence ratio at
/// every `p`.
pub fn corollary_sweep(inst: &SigmaInstance, ps: &[f64], opts: &GapOptions) -> Result<SweepReport> {
    let ba = inst.reversed();
    let c2_ab = gap_l2(&inst.t, &inst.n)?.lower;
    let c2_ba = gap_l2(&ba, &inst.n)?.lower;
    let rows = ps
        .iter()
        .map(|&p| {
            Ok(SweepRow {
                p,
                gap_ab: gap_lp(&inst.t, &inst.n, p, opts)?,
                gap_ba: gap_lp(&ba, &inst.n, p, opts)?,
                equivalence: equivalence_ratio(inst, p, opts)?,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let certified: Vec<bool> = rows.iter().map(|r| r.equivalence.certified()).collect();
    let all_or_nothing = certified.iter().all(|&c| c) || certified.iter().all(|&c| !c);
    Ok(SweepReport { rows, c2_ab, c2_ba, symmetric: (c2_ab - c2_ba).abs() <= 1e-10, all_or_nothing })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use std::f64::consts::FRAC_PI_4;

    fn quick() -> GapOptions {
        GapOptions { restarts: 4, ..GapOptions::default() }
    }

    fn pair(angle: f64) -> SigmaInstance {
        let a = Arc::new(TracialAlgebra::matrix(2).unwrap());
        SigmaInstance::new(Subalgebra::diagonal(&a).unwrap(), Subalgebra::rotated_diagonal(&a, angle).unwrap()).unwrap()
    }

    #[test]
    fn sigma_norm_examples() {
        let inst = pair(0.3);
        let alg = Arc::clone(inst.algebra());
        let sz = Element::from_real_diagonal(&alg, &[1.0, -1.0]).unwrap();
        // σ_z ∈ A, so only the B term survives: |sin 2θ| ‖σ_z‖_2 by projection.
        let v = sigma_norm(&inst, &sz, 2.0).unwrap();
        assert_relative_eq!(v, (0.6f64).sin().abs(), epsilon = 1e-14);
        assert_eq!(sigma_norm(&inst, &Element::zero(&alg), 2.0).unwrap(), 0.0);
        assert!(sigma_norm(&inst, &Element::identity(&alg), 2.0).is_err());
    }

    #[test]
    fn forty_five_degrees() {
        let inst = pair(FRAC_PI_4);
        assert_eq!(inst.n.dim(), 1);
        let alg = Arc::clone(inst.algebra());
        let sz = Element::from_real_diagonal(&alg, &[1.0, -1.0]).unwrap();
        // B = span{1, σ_x}: σ_z is orthogonal to B, so ‖σ_z‖_Σ = ‖σ_z‖_2.
        assert_relative_eq!(sigma_norm(&inst, &sz, 2.0).unwrap(), 1.0, epsilon = 1e-14);
        let r = equivalence_ratio(&inst, 2.0, &quick()).unwrap();
        assert!(r.c2 < 1e-14);
        assert!(r.within_bound().unwrap());
        assert_relative_eq!(r.worst_ratio, 1.0, epsilon = 1e-8);
    }

    #[test]
    fn same_algebra_ratio_is_half() {
        let a = Arc::new(TracialAlgebra::matrix(2).unwrap());
        let d = Subalgebra::diagonal(&a).unwrap();
        let inst = SigmaInstance::new(d.clone(), d).unwrap();
        for p in [1.5, 3.0] {
            let r = equivalence_ratio(&inst, p, &quick()).unwrap();
            assert_relative_eq!(r.worst_ratio, 0.5, epsilon = 1e-12);
            assert!(r.certified());
        }
    }

    #[test]
    fn sweep_is_symmetric_and_all_or_nothing() {
        let inst = pair(0.4);
        let s = corollary_sweep(&inst, &[1.5, 2.0, 3.0, 4.0], &quick()).unwrap();
        assert!(s.symmetric);
        assert!(s.all_or_nothing);
        assert!(s.all_certified());
        for row in &s.rows {
            assert!(row.equivalence.within_bound().unwrap());
        }
    }
}
