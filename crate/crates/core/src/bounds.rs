//! Closed-form transfer bounds between `c_2` and `c_p`, and checkers for the
//! auxiliary operator inequalities they rest on.
//!
//! Every forward bound is evaluated through its deficit `1 − bound`, written
//! with `ln_1p`/`exp_m1` in terms of `h = 1 − c_2`. Near `c_2 = 1` some
//! deficits fall far below machine epsilon relative to 1 (at `p = 8` the
//! `δ_p^p` factor alone is about `1e-11`), and the asymptotic slopes are
//! ratios of such deficits.

use std::fmt;

use crate::algebra::Element;
use crate::channels::MarkovMap;
use crate::error::{domain, Error, Result};
use crate::structure::Subalgebra;

/// Absolute slack for inequality checks, scaled by `max(1, |rhs|)`.
pub const INEQUALITY_SLACK: f64 = 1e-9;

/// Where an upper bound on `c_p` comes from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum BoundSource {
    ExactL2,
    TheoremBound,
    InterpolationBound,
    HmoBound,
}

impl BoundSource {
    pub fn as_str(self) -> &'static str {
        match self {
            Self::ExactL2 => "exact-L2",
            Self::TheoremBound => "theorem-bound",
            Self::InterpolationBound => "interpolation-bound",
            Self::HmoBound => "hmo-bound",
        }
    }
}

impl fmt::Display for BoundSource {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Direction {
    Forward,
    Reverse,
}

/// A bound `b ∈ [0, 1]` stored together with its deficit `1 − b`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Bound {
    pub deficit: f64,
}

impl Bound {
    fn from_deficit(deficit: f64) -> Self {
        Self { deficit: deficit.clamp(0.0, 1.0) }
    }

    pub fn value(self) -> f64 {
        1.0 - self.deficit
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BoundReport {
    pub direction: Direction,
    pub c: f64,
    pub p: f64,
    /// All case bounds of the forward theorem at this `p`.
    pub thm21_case_bounds: Vec<Bound>,
    /// Worst case over `thm21_case_bounds`.
    pub thm21_final: Bound,
    pub hmo: Bound,
    /// Only for `p > 2`, and only when informative (`< 1`).
    pub interpolation: Option<Bound>,
    pub reverse_thm32: Option<f64>,
    /// Smallest of `thm21_final`, `hmo`, `interpolation` that is `< 1`.
    pub minimum_applicable: Option<(f64, BoundSource)>,
}

/// `1 − (1 − d)^{1/p}`.
fn root_deficit(d: f64, p: f64) -> f64 {
    if d >= 1.0 {
        return 1.0;
    }
    -((-d).ln_1p() / p).exp_m1()
}

/// `1 − c^a` given `ln c`.
fn power_deficit(ln_c: f64, a: f64) -> f64 {
    -(a * ln_c).exp_m1()
}

fn check_forward_inputs(c2: f64, p: f64) -> Result<()> {
    if !(0.0..1.0).contains(&c2) {
        return Err(domain(format!("forward bound needs c2 in [0, 1), got {c2}")));
    }
    check_open_p(p)
}

fn check_open_p(p: f64) -> Result<()> {
    if !(p > 1.0 && p.is_finite()) {
        return Err(domain(format!("p must lie in (1, ∞), got {p}; the transfer is false for p=1,∞")));
    }
    Ok(())
}

/// `δ_p = (1 − 2^{−1/p}) / 2`.
pub fn delta_p(p: f64) -> f64 {
    -(-(2f64.ln()) / p).exp_m1() / 2.0
}

/// `p* = max(p, p')`.
pub fn dual_max(p: f64) -> f64 {
    p.max(p / (p - 1.0))
}

/// Deficits of the case bounds of the forward theorem, as functions of
/// `h = 1 − c_2` (kept separate so `h` can be tiny without cancellation).
fn thm21_case_deficits(h: f64, p: f64) -> Vec<f64> {
    // 1 − c2² = h(2 − h).
    let one_minus_c2sq = h * (2.0 - h);
    let ln_c2 = (-h).ln_1p();
    if p < 2.0 {
        // K = (144 + c2²)/145, so 1 − K = (1 − c2²)/145.
        let ln_k = (-one_minus_c2sq / 145.0).ln_1p();
        let a = 2.0 * p - 2.0;
        let mut out = vec![
            root_deficit(power_deficit(ln_c2, a) / 2.0, p),
            root_deficit(power_deficit(ln_k, a / (2.0 * p)) / 2.0, p),
        ];
        let four_p = 4f64.powf(p);
        for e in [a / 2.0, a / (2.0 * p)] {
            out.push(root_deficit(power_deficit(ln_k, e) / four_p, p));
        }
        out
    } else {
        let dp = delta_p(p).powf(p);
        vec![root_deficit(one_minus_c2sq / 2.0, p), root_deficit(dp * one_minus_c2sq / 2.0 / (1.0 + dp), p)]
    }
}

fn thm21_deficit(h: f64, p: f64) -> f64 {
    thm21_case_deficits(h, p).into_iter().fold(f64::INFINITY, f64::min)
}

fn hmo_deficit(h: f64, p: f64) -> f64 {
    let ps = dual_max(p);
    root_deficit((2.0 - ps).exp2() * h, ps)
}

/// Forward transfer `c_2 → c_p` by every available formula.
pub fn forward_bound(c2: f64, p: f64) -> Result<BoundReport> {
    check_forward_inputs(c2, p)?;
    let h = 1.0 - c2;
    let thm21_case_bounds: Vec<Bound> = thm21_case_deficits(h, p).into_iter().map(Bound::from_deficit).collect();
    let thm21_final = *thm21_case_bounds
        .iter()
        .min_by(|a, b| a.deficit.total_cmp(&b.deficit))
        .expect("at least one case");
    let hmo = Bound::from_deficit(hmo_deficit(h, p));
    let interpolation = (p > 2.0)
        .then(|| {
            let v = c2.powf(2.0 / p) * (1.0 - 2.0 / p).exp2();
            Bound::from_deficit(1.0 - v)
        })
        .filter(|b| b.value() < 1.0);
    let mut candidates = vec![(thm21_final, BoundSource::TheoremBound), (hmo, BoundSource::HmoBound)];
    if let Some(b) = interpolation {
        candidates.push((b, BoundSource::InterpolationBound));
    }
    let minimum_applicable = candidates
        .into_iter()
        .filter(|(b, _)| b.deficit > 0.0)
        .max_by(|a, b| a.0.deficit.total_cmp(&b.0.deficit))
        .map(|(b, s)| (b.value(), s));
    Ok(BoundReport {
        direction: Direction::Forward,
        c: c2,
        p,
        thm21_case_bounds,
        thm21_final,
        hmo,
        interpolation,
        reverse_thm32: None,
        minimum_applicable,
    })
}

/// `θ = ¼ min(p/2, 2/p)`.
pub fn pto2_exponent(p: f64) -> f64 {
    0.25 * (p / 2.0).min(2.0 / p)
}

/// Reverse transfer for factorizable maps, `c_2 ≤ 1 − ((C/p)(1 − c_p))^{2/θ}`,
/// for a caller-supplied constant `C`.
pub fn reverse_bound(cp: f64, p: f64, constant: f64) -> Result<f64> {
    if !(0.0..1.0).contains(&cp) {
        return Err(domain(format!("reverse bound needs c_p in [0, 1), got {cp}")));
    }
    check_open_p(p)?;
    if p == 2.0 {
        return Err(domain("reverse bound is stated for p ≠ 2"));
    }
    if !(constant > 0.0 && constant.is_finite()) {
        return Err(domain(format!("constant must be positive, got {constant}")));
    }
    let theta = pto2_exponent(p);
    let base = constant / p * (1.0 - cp);
    Ok((1.0 - base.powf(2.0 / theta)).clamp(0.0, 1.0))
}

/// Reverse report: the forward fields evaluated at `c = c_p` are not
/// meaningful, so only `reverse_thm32` is filled.
pub fn reverse_report(cp: f64, p: f64, constant: f64) -> Result<BoundReport> {
    let r = reverse_bound(cp, p, constant)?;
    Ok(BoundReport {
        direction: Direction::Reverse,
        c: cp,
        p,
        thm21_case_bounds: Vec::new(),
        thm21_final: Bound::from_deficit(0.0),
        hmo: Bound::from_deficit(0.0),
        interpolation: None,
        reverse_thm32: Some(r),
        minimum_applicable: None,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SlopeKind {
    Thm21,
    Hmo,
}

/// Step sizes for the slope estimate.
pub const SLOPE_STEPS: [f64; 3] = [1e-3, 1e-4, 1e-5];

/// `lim_{c_2 → 1} (1 − bound)/(1 − c_2)` for the chosen forward bound.
pub fn asymptotic_slope(p: f64, which: SlopeKind) -> Result<f64> {
    check_open_p(p)?;
    let f = |h: f64| match which {
        SlopeKind::Thm21 => thm21_deficit(h, p) / h,
        SlopeKind::Hmo => hmo_deficit(h, p) / h,
    };
    let s: Vec<f64> = SLOPE_STEPS.iter().map(|&h| f(h)).collect();
    let hi = s.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let lo = s.iter().copied().fold(f64::INFINITY, f64::min);
    if !(lo > 0.0) || !hi.is_finite() || (hi - lo) / hi > 0.05 {
        return Err(Error::Numerical(format!("slope estimates do not agree: {s:?}")));
    }
    // s(h) ≈ s0 + a h; eliminate the linear term with the two smallest steps.
    let ratio = SLOPE_STEPS[1] / SLOPE_STEPS[2];
    Ok((ratio * s[2] - s[1]) / (ratio - 1.0))
}

/// `lhs`, `rhs` and the signed slack of an asserted inequality; positive
/// margin means the inequality holds with room to spare.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct InequalityReport {
    pub lhs: f64,
    pub rhs: f64,
    pub margin: f64,
    pub pass: bool,
}

impl InequalityReport {
    /// Report for `lhs ≤ rhs`.
    pub fn at_most(lhs: f64, rhs: f64) -> Self {
        let margin = rhs - lhs;
        Self { lhs, rhs, margin, pass: margin >= -INEQUALITY_SLACK * rhs.abs().max(1.0) }
    }

    /// Report for `lhs ≥ rhs`.
    pub fn at_least(lhs: f64, rhs: f64) -> Self {
        let margin = lhs - rhs;
        Self { lhs, rhs, margin, pass: margin >= -INEQUALITY_SLACK * lhs.abs().max(1.0) }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RatioReport {
    pub numerator: f64,
    pub denominator: f64,
    pub ratio: f64,
}

impl RatioReport {
    fn new(numerator: f64, denominator: f64) -> Self {
        let ratio = if denominator < 1e-14 {
            if numerator < 1e-12 {
                0.0
            } else {
                f64::INFINITY
            }
        } else {
            numerator / denominator
        };
        Self { numerator, denominator, ratio }
    }
}

fn require_positive(x: &Element, name: &str) -> Result<()> {
    if !x.is_positive() {
        return Err(domain(format!("{name} must be positive")));
    }
    Ok(())
}

/// Clips rounding-level negative eigenvalues before taking powers.
fn pos_power(x: &Element, alpha: f64) -> Element {
    x.spectral_map(|v| v.max(0.0).powf(alpha))
}

/// `‖T(x)‖_p ≤ ‖T(x^p)‖_1^{2/p−1} ‖T(x^{p/2})‖_2^{2−2/p}` for `x ≥ 0`, `1 < p < 2`.
pub fn check_psmall(t: &MarkovMap, x: &Element, p: f64) -> Result<InequalityReport> {
    t.ensure_valid()?;
    if !(p > 1.0 && p < 2.0) {
        return Err(domain(format!("check_psmall needs 1 < p < 2, got {p}")));
    }
    require_positive(x, "x")?;
    let lhs = t.apply(x)?.lp_norm_unchecked(p);
    let a = t.apply(&pos_power(x, p))?.lp_norm_unchecked(1.0);
    let b = t.apply(&pos_power(x, p / 2.0))?.lp_norm_unchecked(2.0);
    Ok(InequalityReport::at_most(lhs, a.powf(2.0 / p - 1.0) * b.powf(2.0 - 2.0 / p)))
}

/// `‖T(x^α)‖_p ≥ ‖T(x)^α‖_p` for `x ≥ 0`, `α ≥ 1`, `p ≥ 1`.
pub fn check_pbig(t: &MarkovMap, x: &Element, alpha: f64, p: f64) -> Result<InequalityReport> {
    t.ensure_valid()?;
    if !(alpha >= 1.0) || !(p >= 1.0) {
        return Err(domain(format!("check_pbig needs α ≥ 1 and p ≥ 1, got α={alpha}, p={p}")));
    }
    require_positive(x, "x")?;
    let lhs = t.apply(&pos_power(x, alpha))?.lp_norm_unchecked(p);
    let rhs = pos_power(&t.apply(x)?, alpha).lp_norm_unchecked(p);
    Ok(InequalityReport::at_least(lhs, rhs))
}

/// `‖a^{2/p} − b^{2/p}‖_p ≤ ‖a − b‖_2^{2/p}` for `a, b ≥ 0`, `p > 2`.
pub fn check_ando(a: &Element, b: &Element, p: f64) -> Result<InequalityReport> {
    a.check_same(b)?;
    if !(p > 2.0 && p.is_finite()) {
        return Err(domain(format!("check_ando needs 2 < p < ∞, got {p}")));
    }
    require_positive(a, "a")?;
    require_positive(b, "b")?;
    let r = 2.0 / p;
    let lhs = (&pos_power(a, r) - &pos_power(b, r)).lp_norm_unchecked(p);
    let rhs = (a - b).lp_norm_unchecked(2.0).powf(r);
    Ok(InequalityReport::at_most(lhs, rhs))
}

/// `‖a − b‖_p^p ≤ ‖a‖_p^p + ‖b‖_p^p` for `a, b ≥ 0`, `p ≥ 1`.
pub fn check_positive_difference(a: &Element, b: &Element, p: f64) -> Result<InequalityReport> {
    a.check_same(b)?;
    if !(p >= 1.0 && p.is_finite()) {
        return Err(domain(format!("p must lie in [1, ∞), got {p}")));
    }
    require_positive(a, "a")?;
    require_positive(b, "b")?;
    let lhs = (a - b).lp_norm_unchecked(p).powf(p);
    let rhs = a.lp_norm_unchecked(p).powf(p) + b.lp_norm_unchecked(p).powf(p);
    Ok(InequalityReport::at_most(lhs, rhs))
}

/// `‖a − E_N a‖_p ≤ ‖a‖_p` for `a ≥ 0`, `p ≥ 2`.
pub fn check_centered_contraction(sub: &Subalgebra, a: &Element, p: f64) -> Result<InequalityReport> {
    if !(p >= 2.0 && p.is_finite()) {
        return Err(domain(format!("needs 2 ≤ p < ∞, got {p}")));
    }
    require_positive(a, "a")?;
    a.check_same(&Element::identity(sub.algebra()))?;
    let lhs = (a - &sub.project(a)).lp_norm_unchecked(p);
    Ok(InequalityReport::at_most(lhs, a.lp_norm_unchecked(p)))
}

/// `‖T(y)‖_q ≤ ‖T(|y|)‖_q` for normal `y`.
pub fn check_normal_domination(t: &MarkovMap, y: &Element, q: f64) -> Result<InequalityReport> {
    t.ensure_valid()?;
    if !(q >= 1.0) {
        return Err(domain(format!("q must be ≥ 1, got {q}")));
    }
    if !y.is_normal() {
        return Err(domain("y must be normal"));
    }
    let lhs = t.apply(y)?.lp_norm_unchecked(q);
    let rhs = t.apply(&y.abs())?.lp_norm_unchecked(q);
    Ok(InequalityReport::at_most(lhs, rhs))
}

/// `‖T(M_{2,p}(y)) − M_{2,p}(y)‖_p / (‖T(y) − y‖_2^θ ‖y‖_2^{1−θ})` on the
/// unit sphere of `L_2`.
pub fn check_pto2(t: &MarkovMap, y: &Element, p: f64) -> Result<RatioReport> {
    t.ensure_valid()?;
    check_open_p(p)?;
    let n = y.norm2();
    if n == 0.0 {
        return Err(domain("check_pto2 needs y ≠ 0"));
    }
    let y = y.scale_re(1.0 / n);
    let m = y.mazur(2.0, p)?;
    let numerator = (&t.apply(&m)? - &m).lp_norm_unchecked(p);
    let theta = pto2_exponent(p);
    let denominator = (&t.apply(&y)? - &y).norm2().powf(theta);
    Ok(RatioReport::new(numerator, denominator))
}

/// Hölder quotient of the Mazur map `M_{p,q}` on the unit sphere of `L_p`.
pub fn check_mazur_holder(x: &Element, y: &Element, p: f64, q: f64) -> Result<RatioReport> {
    x.check_same(y)?;
    if !(p >= 1.0 && q >= 1.0 && p.is_finite() && q.is_finite()) {
        return Err(domain(format!("Mazur exponents must lie in [1, ∞), got ({p}, {q})")));
    }
    let (nx, ny) = (x.lp_norm_unchecked(p), y.lp_norm_unchecked(p));
    if nx == 0.0 || ny == 0.0 {
        return Err(domain("Mazur Hölder check needs nonzero inputs"));
    }
    let (x, y) = (x.scale_re(1.0 / nx), y.scale_re(1.0 / ny));
    let numerator = (&x.mazur(p, q)? - &y.mazur(p, q)?).lp_norm_unchecked(q);
    let denominator = (&x - &y).lp_norm_unchecked(p).powf((p / q).min(1.0));
    Ok(RatioReport::new(numerator, denominator))
}

/// Largest finite ratio, or `None` when every ratio was degenerate.
pub fn empirical_constant(reports: &[RatioReport]) -> Option<f64> {
    reports.iter().map(|r| r.ratio).filter(|r| r.is_finite()).reduce(f64::max)
}
