//! Turns a parsed configuration into report rows. Task-level failures are
//! recorded as failing rows; nothing here aborts the suite.

use markov_gap::bounds::{
    asymptotic_slope, check_ando, check_centered_contraction, check_mazur_holder, check_normal_domination, check_pbig,
    check_positive_difference, check_psmall, check_pto2, empirical_constant, forward_bound, InequalityReport,
    RatioReport, SlopeKind,
};
use markov_gap::channels::MarkovMap;
use markov_gap::ensemble::{random_element, random_positive, random_self_adjoint};
use markov_gap::exec::{derive_seed, ExecPolicy};
use markov_gap::gap::{gap_l2, gap_lp, GapEstimate, GapOptions};
use markov_gap::sigma::{corollary_sweep, sigma_norm, SigmaInstance};
use markov_gap::structure::Subalgebra;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::config::{ChannelEntry, ExperimentConfig, SigmaEntry, Task};
use crate::report::{sort_rows, ReportRow, WitnessLit};

/// Slack on `cp_lower ≤ cp_upper`.
pub const BRACKET_SLACK: f64 = 1e-7;
/// Largest Hölder quotient accepted before a ratio row is flagged.
pub const RATIO_CEILING: f64 = 1e3;
/// Slack on `‖x‖_Σ ≤ 4‖x‖_p`.
pub const SIGMA_TRIANGLE_SLACK: f64 = 1e-10;

// Stream tags mixed into the base seed so tasks never share random streams.
const GAP_STREAM: u64 = 1;
const LEMMA_STREAM: u64 = 2;
const SIGMA_STREAM: u64 = 3;

fn stream(seed: u64, tag: u64, entry: usize, p_index: usize) -> u64 {
    derive_seed(derive_seed(derive_seed(seed, tag), entry as u64), p_index as u64)
}

pub fn gap_options(cfg: &ExperimentConfig, seed: u64, policy: ExecPolicy) -> GapOptions {
    GapOptions { restarts: cfg.restarts, max_iters: cfg.max_iters, tol: cfg.tol, seed, policy }
}

/// Runs every task in `tasks` over the configured channels and
/// returns rows sorted by `(task, channel_id, p)`.
pub fn run_suite(cfg: &ExperimentConfig, tasks: &[Task], policy: ExecPolicy) -> Vec<ReportRow> {
    let mut rows = Vec::new();
    for &task in tasks {
        match task {
            Task::Validate => cfg.channels.iter().for_each(|c| rows.push(validate_row(c))),
            Task::Gap => {
                for (i, c) in cfg.channels.iter().enumerate() {
                    rows.extend(gap_rows(cfg, i, c, policy));
                }
            }
            Task::Bounds => {
                for c in &cfg.channels {
                    rows.extend(bound_rows(cfg, c));
                }
                rows.extend(slope_rows(cfg));
            }
            Task::Lemmas => {
                for (i, c) in cfg.channels.iter().enumerate() {
                    rows.extend(lemma_rows(cfg, i, c));
                }
            }
            Task::Sigma => {
                for (i, s) in cfg.sigma.iter().enumerate() {
                    rows.extend(sigma_rows(cfg, i, s, policy));
                }
            }
        }
    }
    sort_rows(&mut rows);
    rows
}

/// Channel and its subalgebra `N`, checked for validity.
pub fn prepare(entry: &ChannelEntry) -> markov_gap::Result<(MarkovMap, Subalgebra)> {
    let t = entry.channel.build()?;
    t.ensure_valid()?;
    let n = entry.fixed.build(&t)?;
    Ok((t, n))
}

fn validate_row(entry: &ChannelEntry) -> ReportRow {
    let row = ReportRow::new("validate", &entry.id, "markov", None);
    let t = match entry.channel.build() {
        Ok(t) => t,
        Err(e) => return row.failed(e.to_string()),
    };
    let report = t.validation_report();
    let mut row = row;
    row.value = Some(t.choi_matrix().min_eigenvalue());
    row.margin = Some(row.value.unwrap_or(0.0) - markov_gap::channels::CHOI_FLOOR);
    match report.reason() {
        Some(reason) if !report.passes() => row.failed(reason),
        _ => row,
    }
}

fn gap_row(task: &str, id: &str, item: &str, c2: f64, est: &GapEstimate) -> ReportRow {
    let mut row = ReportRow::new(task, id, item, Some(est.p));
    row.c2_exact = Some(c2);
    row.cp_lower = Some(est.lower);
    row.cp_upper = est.upper.map(|u| u.value);
    row.upper_source = est.upper.map(|u| u.source.as_str().to_string());
    row.value = Some(est.lower);
    row.iterations = Some(est.iterations);
    row.converged = Some(est.converged);
    row.witness = est.witness.as_ref().map(WitnessLit::from_element);
    match est.upper {
        Some(u) => {
            let margin = u.value - est.lower;
            row.margin = Some(margin);
            if margin < -BRACKET_SLACK {
                return row.failed(format!("lower bound exceeds upper bound by {:.3e}", -margin));
            }
            row
        }
        None => {
            row.reason = "no upper bound below 1".into();
            row
        }
    }
}

fn gap_rows(cfg: &ExperimentConfig, index: usize, entry: &ChannelEntry, policy: ExecPolicy) -> Vec<ReportRow> {
    let (t, n) = match prepare(entry) {
        Ok(x) => x,
        Err(e) => return vec![ReportRow::new("gap", &entry.id, "gap", None).failed(e.to_string())],
    };
    let c2 = match gap_l2(&t, &n) {
        Ok(g) => g.lower,
        Err(e) => return vec![ReportRow::new("gap", &entry.id, "gap", None).failed(e.to_string())],
    };
    cfg.p_grid
        .iter()
        .enumerate()
        .map(|(pi, &p)| {
            let opts = gap_options(cfg, stream(cfg.seed, GAP_STREAM, index, pi), policy);
            match gap_lp(&t, &n, p, &opts) {
                Ok(est) => gap_row("gap", &entry.id, "gap", c2, &est),
                Err(e) => ReportRow::new("gap", &entry.id, "gap", Some(p)).failed(e.to_string()),
            }
        })
        .collect()
}

fn bound_row(id: &str, item: &str, p: f64, c2: f64, value: f64) -> ReportRow {
    let mut row = ReportRow::new("bounds", id, item, Some(p));
    row.c2_exact = Some(c2);
    row.value = Some(value);
    row.margin = Some(1.0 - value);
    if !(value.is_finite() && (0.0..=1.0).contains(&value)) {
        return row.failed(format!("bound {value} outside [0, 1]"));
    }
    row
}

fn bound_rows(cfg: &ExperimentConfig, entry: &ChannelEntry) -> Vec<ReportRow> {
    let c2 = match prepare(entry).and_then(|(t, n)| gap_l2(&t, &n)) {
        Ok(g) => g.lower,
        Err(e) => return vec![ReportRow::new("bounds", &entry.id, "forward", None).failed(e.to_string())],
    };
    let mut rows = Vec::new();
    for &p in &cfg.p_grid {
        let report = match forward_bound(c2, p) {
            Ok(r) => r,
            Err(e) => {
                rows.push(ReportRow::new("bounds", &entry.id, "forward", Some(p)).failed(e.to_string()));
                continue;
            }
        };
        for (k, b) in report.thm21_case_bounds.iter().enumerate() {
            rows.push(bound_row(&entry.id, &format!("thm21-case-{}", k + 1), p, c2, b.value()));
        }
        rows.push(bound_row(&entry.id, "thm21-final", p, c2, report.thm21_final.value()));
        rows.push(bound_row(&entry.id, "hmo", p, c2, report.hmo.value()));
        if let Some(b) = report.interpolation {
            rows.push(bound_row(&entry.id, "interpolation", p, c2, b.value()));
        }
        let mut row = ReportRow::new("bounds", &entry.id, "minimum-applicable", Some(p));
        row.c2_exact = Some(c2);
        match report.minimum_applicable {
            Some((v, source)) => {
                row.cp_upper = Some(v);
                row.upper_source = Some(source.as_str().to_string());
                row.value = Some(v);
                row.margin = Some(1.0 - v);
            }
            None => row.reason = "no bound below 1".into(),
        }
        rows.push(row);
    }
    rows
}

fn slope_rows(cfg: &ExperimentConfig) -> Vec<ReportRow> {
    let mut rows = Vec::new();
    for &p in &cfg.p_grid {
        for (item, kind) in [("slope-thm21", SlopeKind::Thm21), ("slope-hmo", SlopeKind::Hmo)] {
            let row = ReportRow::new("bounds", "asymptotic", item, Some(p));
            rows.push(match asymptotic_slope(p, kind) {
                Ok(s) => {
                    let mut row = row;
                    row.value = Some(s);
                    row.margin = Some(s);
                    if s > 0.0 {
                        row
                    } else {
                        row.failed("slope is not positive")
                    }
                }
                Err(e) => row.failed(e.to_string()),
            });
        }
    }
    rows
}

fn inequality_row(id: &str, item: &str, p: f64, reports: markov_gap::Result<Vec<InequalityReport>>) -> ReportRow {
    let row = ReportRow::new("lemmas", id, item, Some(p));
    let reports = match reports {
        Ok(r) => r,
        Err(e) => return row.failed(e.to_string()),
    };
    let worst = reports.iter().map(|r| r.margin).fold(f64::INFINITY, f64::min);
    let failures = reports.iter().filter(|r| !r.pass).count();
    let mut row = row;
    row.value = Some(worst);
    row.margin = Some(worst);
    row.iterations = Some(reports.len());
    if failures > 0 {
        return row.failed(format!("{failures}/{} instances violate the inequality", reports.len()));
    }
    row
}

fn ratio_row(id: &str, item: &str, p: f64, reports: markov_gap::Result<Vec<RatioReport>>) -> ReportRow {
    let row = ReportRow::new("lemmas", id, item, Some(p));
    let reports = match reports {
        Ok(r) => r,
        Err(e) => return row.failed(e.to_string()),
    };
    let mut row = row;
    row.iterations = Some(reports.len());
    match empirical_constant(&reports) {
        Some(c) => {
            row.value = Some(c);
            row.margin = Some(RATIO_CEILING - c);
            if c > RATIO_CEILING {
                return row.failed(format!("empirical constant {c:.3e} exceeds {RATIO_CEILING:e}"));
            }
            row
        }
        None => row.failed("every ratio was degenerate"),
    }
}

fn unit(x: markov_gap::algebra::Element) -> markov_gap::algebra::Element {
    let n = x.norm2();
    if n > 0.0 {
        x.scale_re(1.0 / n)
    } else {
        x
    }
}

fn lemma_rows(cfg: &ExperimentConfig, index: usize, entry: &ChannelEntry) -> Vec<ReportRow> {
    let (t, n) = match prepare(entry) {
        Ok(x) => x,
        Err(e) => return vec![ReportRow::new("lemmas", &entry.id, "lemmas", None).failed(e.to_string())],
    };
    let alg = std::sync::Arc::clone(t.algebra());
    let k = cfg.lemma_samples;
    let mut rows = Vec::new();
    for (pi, &p) in cfg.p_grid.iter().enumerate() {
        let mut rng = ChaCha8Rng::seed_from_u64(stream(cfg.seed, LEMMA_STREAM, index, pi));
        let pos = |rng: &mut ChaCha8Rng| unit(random_positive(&alg, rng));
        let id = entry.id.as_str();
        if p < 2.0 {
            let r = (0..k).map(|_| check_psmall(&t, &pos(&mut rng), p)).collect();
            rows.push(inequality_row(id, "psmall", p, r));
        }
        let r = (0..k)
            .map(|_| {
                let alpha = rng.random_range(1.0..3.0);
                check_pbig(&t, &pos(&mut rng), alpha, p)
            })
            .collect();
        rows.push(inequality_row(id, "pbig", p, r));
        if p > 2.0 {
            let r = (0..k).map(|_| check_ando(&pos(&mut rng), &pos(&mut rng), p)).collect();
            rows.push(inequality_row(id, "ando", p, r));
        }
        let r = (0..k).map(|_| check_positive_difference(&pos(&mut rng), &pos(&mut rng), p)).collect();
        rows.push(inequality_row(id, "positive-difference", p, r));
        if p >= 2.0 {
            let r = (0..k).map(|_| check_centered_contraction(&n, &pos(&mut rng), p)).collect();
            rows.push(inequality_row(id, "centered-contraction", p, r));
        }
        let r = (0..k).map(|_| check_normal_domination(&t, &unit(random_self_adjoint(&alg, &mut rng)), p)).collect();
        rows.push(inequality_row(id, "normal-domination", p, r));
        let r = (0..k).map(|_| check_pto2(&t, &random_element(&alg, &mut rng), p)).collect();
        rows.push(ratio_row(id, "pto2", p, r));
        let r = (0..k).map(|_| check_mazur_holder(&random_element(&alg, &mut rng), &random_element(&alg, &mut rng), p, 2.0)).collect();
        rows.push(ratio_row(id, "mazur-holder-p-2", p, r));
        let r = (0..k).map(|_| check_mazur_holder(&random_element(&alg, &mut rng), &random_element(&alg, &mut rng), 2.0, p)).collect();
        rows.push(ratio_row(id, "mazur-holder-2-p", p, r));
    }
    rows
}

fn sigma_rows(cfg: &ExperimentConfig, index: usize, entry: &SigmaEntry, policy: ExecPolicy) -> Vec<ReportRow> {
    let id = entry.id.as_str();
    let inst = entry.algebra.build().and_then(|alg| SigmaInstance::new(entry.a.build(&alg)?, entry.b.build(&alg)?));
    let inst = match inst {
        Ok(i) => i,
        Err(e) => return vec![ReportRow::new("sigma", id, "instance", None).failed(e.to_string())],
    };
    let opts = gap_options(cfg, stream(cfg.seed, SIGMA_STREAM, index, 0), policy);
    let sweep = match corollary_sweep(&inst, &cfg.p_grid, &opts) {
        Ok(s) => s,
        Err(e) => return vec![ReportRow::new("sigma", id, "sweep", None).failed(e.to_string())],
    };
    let mut rows = Vec::new();

    let mut row = ReportRow::new("sigma", id, "c2-symmetry", None);
    row.c2_exact = Some(sweep.c2_ab);
    row.value = Some(sweep.c2_ba);
    row.margin = Some(1e-10 - (sweep.c2_ab - sweep.c2_ba).abs());
    rows.push(if sweep.symmetric { row } else { row.failed("c2 of E_A E_B and E_B E_A differ") });

    let mut row = ReportRow::new("sigma", id, "all-or-nothing", None);
    row.value = Some(sweep.rows.iter().filter(|r| r.equivalence.certified()).count() as f64);
    rows.push(if sweep.all_or_nothing { row } else { row.failed("certification differs across p") });

    for (pi, r) in sweep.rows.iter().enumerate() {
        rows.push(gap_row("sigma", id, "gap-ab", sweep.c2_ab, &r.gap_ab));
        rows.push(gap_row("sigma", id, "gap-ba", sweep.c2_ba, &r.gap_ba));

        let eq = &r.equivalence;
        let mut row = ReportRow::new("sigma", id, "equivalence", Some(r.p));
        row.c2_exact = Some(eq.c2);
        row.cp_upper = eq.c_p_upper.map(|u| u.value);
        row.upper_source = eq.c_p_upper.map(|u| u.source.as_str().to_string());
        row.value = Some(eq.worst_ratio);
        row.iterations = Some(eq.iterations);
        row.converged = Some(eq.converged);
        row.margin = eq.paper_bound.map(|b| b - eq.worst_ratio);
        row.witness = eq.witness.as_ref().map(WitnessLit::from_element);
        rows.push(match eq.within_bound() {
            Some(true) => row,
            Some(false) => row.failed("worst ratio exceeds 1/(1 - c_p)"),
            None => {
                row.reason = eq.status().to_string();
                row
            }
        });

        let mut rng = ChaCha8Rng::seed_from_u64(stream(cfg.seed, SIGMA_STREAM, index, pi + 1));
        let alg = inst.algebra();
        let mut worst = f64::NEG_INFINITY;
        let mut failure = None;
        for _ in 0..cfg.lemma_samples {
            let x = random_element(alg, &mut rng);
            let x = unit(&x - &inst.n.project(&x));
            let (Ok(s), Ok(np)) = (sigma_norm(&inst, &x, r.p), x.schatten_norm(r.p)) else {
                failure = Some("Σ-norm evaluation failed");
                break;
            };
            if np > 0.0 {
                worst = worst.max(s - 4.0 * np);
            }
        }
        let mut row = ReportRow::new("sigma", id, "sigma-triangle", Some(r.p));
        row.iterations = Some(cfg.lemma_samples);
        row.value = Some(worst);
        row.margin = Some(-worst);
        rows.push(match failure {
            Some(f) => row.failed(f),
            None if worst > SIGMA_TRIANGLE_SLACK => row.failed("‖x‖_Σ exceeds 4‖x‖_p"),
            None => row,
        });
    }
    rows
}
