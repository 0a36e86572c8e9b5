use perclab::estimators::{
    bisect_critical_q, bisect_with_drift, crossing_probability, gm_seed_event, one_arm_profile, slab_critical_curve, subcritical_certificate, theta,
    trifurcation_scaling, uniqueness, BisectOptions, ConditionalInstance, CriticalEstimate, CrossingDesign, EstimateRecord,
    GmEventKind, GmEventSpec, GmGeometry, Moments, RecordMeta, Z95,
};
use perclab::field::{mix64, ParamPoint};
use perclab::gmrenorm::{grow_renormalized_cluster, origin_report, rho_profile, RenormConfig, Violations};
use perclab::lattice::{sup_norm, Axis, ClassRule, LatticeSpec, MAX_D};
use perclab::oracle::{
    exact_probability, exhaustive_inequalities, mass_transport_check, Diagonal, MtpMode, NearestToTop, RationalProbs,
    SameHCluster, TinyInstance, Transport,
};
use rayon::prelude::*;
use serde::Serialize;
use serde_json::{json, Value};
use thiserror::Error;

use crate::config::{Command, ConfigError, Design, ExperimentConfig, MtpModeKind, Preset, TransportKind};

#[derive(Debug, Error)]
pub enum RunError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error("{0}")]
    Runtime(String),
}

fn rt(e: impl std::fmt::Display) -> RunError {
    RunError::Runtime(e.to_string())
}

fn bad(field: &str, message: impl Into<String>) -> RunError {
    RunError::Config(ConfigError::Field { field: field.to_string(), message: message.into() })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Check {
    pub name: String,
    pub passed: bool,
    pub detail: String,
}

fn check(name: impl Into<String>, passed: bool, detail: impl Into<String>) -> Check {
    Check { name: name.into(), passed, detail: detail.into() }
}

/// Everything a command produces.
#[derive(Debug, Default)]
pub struct Outcome {
    pub records: Vec<EstimateRecord>,
    pub details: Value,
    pub checks: Vec<Check>,
    pub summary: String,
    /// Lines of the trace file, when the command keeps one.
    pub trace: Vec<Value>,
}

/// Seed of the i-th point of a parameter grid. The first point uses the
/// master seed itself.
pub fn stream_seed(seed: u64, i: usize) -> u64 {
    if i == 0 {
        seed
    } else {
        mix64(seed ^ mix64(i as u64))
    }
}

pub fn run(cfg: &ExperimentConfig) -> Result<Outcome, RunError> {
    cfg.validate()?;
    match cfg.command.expect("validated") {
        Command::Theta => theta_cmd(cfg),
        Command::OneArm => one_arm_cmd(cfg),
        Command::Crossing => crossing_cmd(cfg),
        Command::Bisect => bisect_cmd(cfg),
        Command::QcCurve => qc_curve_cmd(cfg),
        Command::SlabCurve => slab_curve_cmd(cfg),
        Command::Uniqueness => uniqueness_cmd(cfg),
        Command::Trifurcations => trifurcations_cmd(cfg),
        Command::Certificate => certificate_cmd(cfg),
        Command::GmEvent => gm_event_cmd(cfg),
        Command::Renorm => renorm_cmd(cfg),
        Command::Oracle => oracle_cmd(cfg),
        Command::MtpCheck => mtp_cmd(cfg),
    }
}

/// P(o <-> ∂B_m) by enumeration, when B_m has few enough edges.
fn exact_theta(cfg: &ExperimentConfig, params: &ParamPoint) -> Result<Option<f64>, RunError> {
    let spec = LatticeSpec::cube(cfg.d, cfg.s, cfg.m, cfg.rule).map_err(rt)?;
    let Ok((inst, _)) = TinyInstance::from_lattice(&spec, params) else {
        return Ok(None);
    };
    let o = spec.index_of(&[0; MAX_D]).expect("origin");
    let shell: Vec<usize> = (0..spec.num_vertices()).filter(|&v| sup_norm(&spec.coords(v)) == cfg.m as i64).collect();
    let x = exact_probability(&inst, |c| shell.iter().any(|&w| inst.connected(c, o, w))).map_err(rt)?;
    Ok(Some(x))
}

fn theta_cmd(cfg: &ExperimentConfig) -> Result<Outcome, RunError> {
    let mut out = Outcome::default();
    let mut exact = Vec::new();
    for (i, pt) in cfg.points()?.iter().enumerate() {
        let r = theta(cfg.d, cfg.s, cfg.rule, pt, cfg.m, cfg.samples, stream_seed(cfg.seed, i));
        let x = exact_theta(cfg, pt)?;
        if let Some(x) = x {
            let z = r.z_score(x);
            out.checks.push(check(format!("theta[{i}] within 4 standard errors of enumeration"), z < 4.0, format!("z = {z:.3}")));
        }
        exact.push(x);
        out.records.push(r);
    }
    let r = &out.records[0];
    out.summary = match exact[0] {
        Some(x) => format!("theta: {:.6} ± {:.6} (exact {:.6})", r.mean, r.stderr, x),
        None => format!("theta: {:.6} ± {:.6}", r.mean, r.stderr),
    };
    out.details = json!({ "exact": exact });
    Ok(out)
}

fn one_arm_cmd(cfg: &ExperimentConfig) -> Result<Outcome, RunError> {
    if cfg.radii.len() < 2 {
        return Err(bad("radii", "need at least two radii"));
    }
    let mut out = Outcome::default();
    let mut profiles = Vec::new();
    for (i, pt) in cfg.points()?.iter().enumerate() {
        let prof = one_arm_profile(cfg.d, cfg.s, cfg.rule, pt, [0; MAX_D], &cfg.radii, cfg.samples, stream_seed(cfg.seed, i));
        let ok = !prof.degenerate && prof.rate.is_some_and(|r| r > 0.0) && prof.r2.is_some_and(|r| r >= 0.98);
        out.checks.push(check(format!("one-arm[{i}] positive rate with R^2 >= 0.98"), ok, format!("rate {:?}, R^2 {:?}", prof.rate, prof.r2)));
        out.records.extend(prof.records.iter().cloned());
        profiles.push(json!({ "rate": prof.rate, "r2": prof.r2, "dropped": prof.dropped, "degenerate": prof.degenerate }));
    }
    let first = &profiles[0];
    out.summary = format!("one-arm: rate {} (R^2 {})", first["rate"], first["r2"]);
    out.details = json!({ "fits": profiles });
    Ok(out)
}

fn square(cfg: &ExperimentConfig) -> CrossingDesign {
    CrossingDesign::Square { d: cfg.d, s: cfg.s, rule: cfg.rule, l: cfg.l, thick: cfg.n_slab }
}

fn crossing_cmd(cfg: &ExperimentConfig) -> Result<Outcome, RunError> {
    if cfg.l == 0 {
        return Err(bad("L", "must be positive"));
    }
    let (spec, _) = square(cfg).boxes().remove(0);
    let mut out = Outcome::default();
    for (i, pt) in cfg.points()?.iter().enumerate() {
        let mut r = crossing_probability(&spec, pt, cfg.axis, cfg.samples, stream_seed(cfg.seed, i)).map_err(rt)?;
        r.meta.l = Some(cfg.l);
        r.meta.n_slab = cfg.n_slab;
        out.records.push(r);
    }
    let r = &out.records[0];
    out.summary = format!("crossing: {:.6} ± {:.6} over {} samples", r.mean, r.stderr, r.n);
    out.details = json!({ "axis": cfg.axis });
    Ok(out)
}

fn bisect_options(cfg: &ExperimentConfig, stream: u64) -> BisectOptions {
    BisectOptions {
        tolerance: cfg.tolerance,
        samples_per_step: cfg.samples,
        max_samples: cfg.max_samples.unwrap_or(4 * cfg.samples).max(cfg.samples),
        seed: cfg.seed,
        stream,
    }
}

fn design(cfg: &ExperimentConfig) -> Result<CrossingDesign, RunError> {
    match cfg.design {
        Design::Box => Ok(square(cfg)),
        Design::SelfDual => {
            if cfg.d != 2 || cfg.rule != ClassRule::AxisDirection {
                return Err(bad("design", "self_dual needs d = 2 and rule = axis_direction"));
            }
            Ok(CrossingDesign::SelfDualPair { l: cfg.l })
        }
    }
}

/// Row for a critical-point estimate; the q column carries the estimate.
fn qc_record(est: &CriticalEstimate) -> EstimateRecord {
    let (d, s) = est.design.dims();
    let params = ParamPoint { p: est.p, q: est.q_hat, t: None };
    EstimateRecord {
        event: "q_c".into(),
        mean: est.q_hat,
        stderr: est.sigma(),
        n: est.samples,
        seed: est.seed,
        ci_lo: est.ci_lo,
        ci_hi: est.ci_hi,
        meta: RecordMeta { l: Some(est.design.side()), n_slab: est.design.thickness(), ..RecordMeta::new(d, s, &params) },
    }
}

fn p_of(cfg: &ExperimentConfig) -> Result<f64, RunError> {
    cfg.p.ok_or_else(|| bad("p", "required"))
}

fn bisect_cmd(cfg: &ExperimentConfig) -> Result<Outcome, RunError> {
    let p = p_of(cfg)?;
    let des = design(cfg)?;
    let report = bisect_with_drift(des, p, &bisect_options(cfg, 0));
    let est = &report.full;
    let mut out = Outcome::default();
    out.checks.push(check("bisection bracketed", est.flag.is_none(), format!("{:?}", est.flag)));
    if cfg.d == 2 && cfg.rule == ClassRule::AxisDirection {
        let err = (est.q_hat - (1.0 - p)).abs();
        out.checks.push(check("planar axis rule: q_c within 0.02 of 1 - p", err <= 0.02, format!("|q_hat - (1-p)| = {err:.4}")));
    }
    out.summary = format!(
        "bisect: q_c({p}) = {:.4} [{:.4}, {:.4}] from {} samples; drift from L/2 {:+.4}",
        est.q_hat, est.ci_lo, est.ci_hi, est.samples, report.drift
    );
    out.records.push(qc_record(est));
    out.records.push(qc_record(&report.half));
    out.details = json!({ "estimate": est, "half": report.half, "drift": report.drift });
    Ok(out)
}

fn qc_curve_cmd(cfg: &ExperimentConfig) -> Result<Outcome, RunError> {
    let ps = cfg.p_values.clone().ok_or_else(|| bad("p_values", "required"))?;
    let des = design(cfg)?;
    let ests: Vec<CriticalEstimate> =
        ps.iter().enumerate().map(|(i, &p)| bisect_critical_q(des, p, &bisect_options(cfg, i as u64))).collect();
    let mut out = Outcome::default();
    let mut order: Vec<&CriticalEstimate> = ests.iter().collect();
    order.sort_by(|a, b| a.p.total_cmp(&b.p));
    for w in order.windows(2) {
        let (a, b) = (w[0], w[1]);
        let ok = b.q_hat < a.q_hat && b.ci_hi < a.ci_lo;
        out.checks.push(check(
            format!("q_c({}) > q_c({}) with disjoint intervals", a.p, b.p),
            ok,
            format!("[{:.4}, {:.4}] vs [{:.4}, {:.4}]", a.ci_lo, a.ci_hi, b.ci_lo, b.ci_hi),
        ));
    }
    out.records = ests.iter().map(|e| qc_record(e)).collect();
    out.summary = format!(
        "qc-curve: {}",
        ests.iter().map(|e| format!("q_c({}) = {:.4}", e.p, e.q_hat)).collect::<Vec<_>>().join(", ")
    );
    out.details = json!({ "estimates": ests });
    Ok(out)
}

fn slab_curve_cmd(cfg: &ExperimentConfig) -> Result<Outcome, RunError> {
    let p = p_of(cfg)?;
    if cfg.n_list.is_empty() {
        return Err(bad("N_list", "empty"));
    }
    let curve = slab_critical_curve(cfg.d, cfg.s, cfg.l, &cfg.n_list, p, &bisect_options(cfg, 0));
    let mut out = Outcome::default();
    let mut slabs = curve.slabs.clone();
    slabs.sort_by_key(|s| s.0);
    for w in slabs.windows(2) {
        let (a, b) = (&w[0].1, &w[1].1);
        let ok = b.q_hat <= a.q_hat || b.ci_lo <= a.ci_hi;
        out.checks.push(check(
            format!("q_c^{} not above q_c^{}", w[1].0, w[0].0),
            ok,
            format!("{:.4} vs {:.4}", b.q_hat, a.q_hat),
        ));
    }
    let (n_top, top) = slabs.last().expect("nonempty");
    let full = &curve.full_box;
    let sigma = (top.sigma().powi(2) + full.sigma().powi(2)).sqrt();
    let gap = (top.q_hat - full.q_hat).abs();
    out.checks.push(check(
        format!("q_c^{n_top} within 2 sigma of the full box"),
        gap <= 2.0 * sigma,
        format!("gap {gap:.4}, sigma {sigma:.4}"),
    ));
    out.records = curve.slabs.iter().map(|(_, e)| qc_record(e)).collect();
    out.records.push(qc_record(full));
    out.summary = format!(
        "slab-curve: {} | full {:.4}",
        curve.slabs.iter().map(|(n, e)| format!("N={n}: {:.4}", e.q_hat)).collect::<Vec<_>>().join(", "),
        full.q_hat
    );
    out.details = json!({ "curve": curve });
    Ok(out)
}

fn uniqueness_cmd(cfg: &ExperimentConfig) -> Result<Outcome, RunError> {
    if cfg.l < 2 {
        return Err(bad("L", "must be at least 2"));
    }
    let axes = vec![Axis::free(-(cfg.l as i64 / 2), cfg.l); cfg.d];
    let spec = LatticeSpec::new(cfg.d, cfg.s, axes, cfg.rule).map_err(rt)?;
    let mut out = Outcome::default();
    let mut hist = Vec::new();
    for (i, pt) in cfg.points()?.iter().enumerate() {
        let rep = uniqueness(&spec, pt, cfg.axis, cfg.min_fraction, cfg.samples, stream_seed(cfg.seed, i)).map_err(rt)?;
        let u = rep.unique.mean;
        out.checks.push(check(format!("uniqueness[{i}] fraction >= 0.95"), u >= 0.95, format!("{u:.4}")));
        out.records.push(rep.unique);
        out.records.push(rep.mean_count);
        hist.push(rep.histogram);
    }
    out.summary = format!("uniqueness: fraction with one large spanning cluster {:.4}", out.records[0].mean);
    out.details = json!({ "histograms": hist, "min_fraction": cfg.min_fraction });
    Ok(out)
}

fn trifurcations_cmd(cfg: &ExperimentConfig) -> Result<Outcome, RunError> {
    if cfg.n_values.len() < 2 {
        return Err(bad("n_values", "need at least two sizes"));
    }
    let mut out = Outcome::default();
    let mut fits = Vec::new();
    for (i, pt) in cfg.points()?.iter().enumerate() {
        let sc = trifurcation_scaling(cfg.d, cfg.s, pt, &cfg.n_values, cfg.samples, stream_seed(cfg.seed, i));
        let lo = cfg.s as f64 - 0.6;
        let hi = cfg.s as f64 + 0.6;
        let ok = sc.exponent.is_some_and(|e| (lo..=hi).contains(&e));
        out.checks.push(check(format!("trifurcations[{i}] exponent in [{lo}, {hi}]"), ok, format!("{:?}", sc.exponent)));
        out.checks.push(check(
            format!("trifurcations[{i}] never exceed the boundary size"),
            sc.bound_violations == 0,
            format!("{} violations", sc.bound_violations),
        ));
        fits.push(json!({ "exponent": sc.exponent, "r2": sc.r2, "bound_violations": sc.bound_violations, "max_count": sc.max_count }));
        out.records.extend(sc.records);
    }
    out.summary = format!("trifurcations: exponent {} (R^2 {})", fits[0]["exponent"], fits[0]["r2"]);
    out.details = json!({ "fits": fits });
    Ok(out)
}

fn certificate_cmd(cfg: &ExperimentConfig) -> Result<Outcome, RunError> {
    if cfg.l == 0 {
        return Err(bad("L", "must be positive"));
    }
    let pts = cfg.points()?;
    let certs: Vec<_> = pts
        .iter()
        .enumerate()
        .map(|(i, pt)| subcritical_certificate(cfg.d, cfg.s, cfg.rule, pt, cfg.l, cfg.samples, stream_seed(cfg.seed, i)))
        .collect();
    let mut out = Outcome::default();
    for (pt, c) in pts.iter().zip(&certs) {
        let worst = c.representatives.iter().max_by(|a, b| a.upper.total_cmp(&b.upper)).expect("L >= 1");
        let mut r = worst.record.clone();
        r.event = "certificate_phi".into();
        r.mean = worst.phi;
        r.stderr = worst.stderr;
        r.ci_lo = worst.phi - (worst.upper - worst.phi);
        r.ci_hi = worst.upper;
        r.meta.p = pt.p;
        r.meta.q = pt.q;
        out.records.push(r);
    }
    if pts.len() == 1 {
        out.checks.push(check("certificate holds", certs[0].holds, format!("max upper bound {:.4}", out.records[0].ci_hi)));
    } else {
        // holding set closed downward: every point below a holding point holds
        let mut bad_pairs = 0;
        for (a, ca) in pts.iter().zip(&certs) {
            for (b, cb) in pts.iter().zip(&certs) {
                if ca.holds && b.le(a) && !cb.holds {
                    bad_pairs += 1;
                }
            }
        }
        out.checks.push(check("holding region closed downward", bad_pairs == 0, format!("{bad_pairs} offending pairs")));
    }
    let holding = certs.iter().filter(|c| c.holds).count();
    out.summary = format!("certificate: holds at {holding} of {} points (K' = {:.4})", certs.len(), certs[0].k_prime);
    out.details = json!({ "certificates": certs, "holds": certs.iter().map(|c| c.holds).collect::<Vec<_>>() });
    Ok(out)
}

fn gm_event_cmd(cfg: &ExperimentConfig) -> Result<Outcome, RunError> {
    let ev = GmEventSpec { alpha: cfg.alpha, beta: cfg.beta, m: cfg.m, n: cfg.gm_n, kind: cfg.kind };
    let pts = cfg.points()?;
    let mut out = Outcome::default();
    if cfg.kind != GmEventKind::FiniteSizeConditional {
        for (i, pt) in pts.iter().enumerate() {
            out.records.push(gm_seed_event(cfg.d, cfg.s, cfg.rule, pt, &ev, cfg.samples, stream_seed(cfg.seed, i)).map_err(rt)?);
        }
        let r = &out.records[0];
        out.summary = format!("gm-event: {} = {:.6} ± {:.6}", r.event, r.mean, r.stderr);
        out.details = json!({ "event": ev });
        return Ok(out);
    }
    let geom = GmGeometry::new(cfg.d, cfg.s, &ev).map_err(rt)?;
    let inst = ConditionalInstance::new(geom, geom.seed_box(), |_| cfg.level, cfg.delta).map_err(rt)?;
    let draws = cfg.draws.unwrap_or(5 * cfg.samples);
    let mut comparisons = Vec::new();
    for (i, pt) in pts.iter().enumerate() {
        let stream = i as u64;
        let cond = inst.conditional(pt, cfg.rule, cfg.samples, cfg.seed, stream);
        let rej = inst.rejection(pt, cfg.rule, draws, cfg.seed.wrapping_add(1), stream);
        let se = (cond.stderr.powi(2) + rej.stderr.powi(2)).sqrt();
        let diff = (cond.mean - rej.mean).abs();
        let ok = if se == 0.0 { diff == 0.0 } else { diff <= 4.0 * se };
        out.checks.push(check(format!("gm-event[{i}] conditional matches rejection"), ok, format!("diff {diff:.5}, se {se:.5}")));
        if cfg.delta == 0.0 {
            out.checks.push(check(format!("gm-event[{i}] zero delta gives zero"), cond.mean == 0.0, format!("{}", cond.mean)));
        }
        comparisons.push(json!({ "difference": cond.mean - rej.mean, "stderr": se, "accepted": rej.n }));
        out.records.push(cond);
        out.records.push(rej);
    }
    out.summary = format!(
        "gm-event: conditional {:.5} ± {:.5}, rejection {:.5} ± {:.5}",
        out.records[0].mean, out.records[0].stderr, out.records[1].mean, out.records[1].stderr
    );
    out.details = json!({ "event": ev, "boundary_edges": inst.levels.len(), "comparisons": comparisons });
    Ok(out)
}

fn renorm_config(cfg: &ExperimentConfig) -> RenormConfig {
    let mut rc = match cfg.preset {
        Preset::Desk => RenormConfig::desk(),
        Preset::Reference => RenormConfig::reference(cfg.d, cfg.s, cfg.renorm_m.unwrap_or(0), cfg.renorm_n.unwrap_or(200), cfg.eta),
    };
    if let Some(n) = cfg.renorm_n {
        rc.n = n;
    }
    if let Some(m) = cfg.renorm_m {
        rc.m = m;
    }
    if let Some(a) = cfg.renorm_alpha {
        rc.alpha = a;
        rc.betas[2] = 2.0 + a + a * a;
    }
    if let Some(dl) = cfg.renorm_delta {
        rc.delta = dl;
    }
    rc.strict = cfg.strict;
    rc
}

#[derive(Debug, Serialize)]
struct RunSummary {
    sample: u64,
    occupied: bool,
    failed_phase: Option<u8>,
    steps: usize,
    explored_edges: usize,
    max_inspections: u32,
    zeta_bound_violations: u64,
    path_violations: usize,
    violations: Violations,
    sites: usize,
    overlapping_pairs: usize,
}

fn renorm_cmd(cfg: &ExperimentConfig) -> Result<Outcome, RunError> {
    let rc = renorm_config(cfg);
    rc.validate().map_err(|e| bad("preset", e.to_string()))?;
    let params = match (cfg.p, cfg.q, cfg.preset) {
        (None, None, Preset::Desk) => RenormConfig::desk_params(),
        _ => cfg.point()?,
    };
    let growth = cfg.max_sites > 1;
    type Run = (RunSummary, Vec<Value>, Option<perclab::gmrenorm::Trajectory>);
    let runs: Vec<Result<Run, RunError>> = (0..cfg.runs)
        .into_par_iter()
        .map(|sample| {
            let tag = |state: &perclab::gmrenorm::RenormState| -> Vec<Value> {
                state
                    .trace
                    .iter()
                    .map(|t| {
                        let mut v = serde_json::to_value(t).expect("serializable");
                        v["sample"] = json!(sample);
                        v
                    })
                    .collect()
            };
            if growth {
                let (g, state) =
                    grow_renormalized_cluster(rc, params, cfg.rule, cfg.max_sites, cfg.seed, sample).map_err(rt)?;
                let origin = &g.sites[0];
                let summary = RunSummary {
                    sample,
                    occupied: origin.occupied,
                    failed_phase: origin.failed_phase,
                    steps: g.sites.iter().map(|s| s.steps).sum(),
                    explored_edges: state.explored_count(),
                    max_inspections: g.max_inspections,
                    zeta_bound_violations: 0,
                    path_violations: 0,
                    violations: g.violations,
                    sites: g.trajectory.steps.len(),
                    overlapping_pairs: g.overlapping_pairs,
                };
                Ok((summary, tag(&state), Some(g.trajectory)))
            } else {
                let (r, state) = origin_report(rc, params, cfg.rule, cfg.seed, sample).map_err(rt)?;
                let summary = RunSummary {
                    sample,
                    occupied: r.outcome.occupied,
                    failed_phase: r.outcome.failed_phase,
                    steps: r.outcome.steps,
                    explored_edges: r.explored_edges,
                    max_inspections: r.max_inspections,
                    zeta_bound_violations: r.zeta_bound_violations,
                    path_violations: r.path_violations,
                    violations: r.violations,
                    sites: 1,
                    overlapping_pairs: 0,
                };
                Ok((summary, tag(&state), None))
            }
        })
        .collect();
    let mut summaries = Vec::new();
    let mut out = Outcome::default();
    let mut trajectories = Vec::new();
    for r in runs {
        let (s, trace, traj) = r?;
        out.trace.extend(trace);
        trajectories.extend(traj);
        summaries.push(s);
    }
    let mut total = Violations::default();
    for s in &summaries {
        total.add(&s.violations);
    }
    let zeta: u64 = summaries.iter().map(|s| s.zeta_bound_violations).sum();
    let paths: usize = summaries.iter().map(|s| s.path_violations).sum();
    let overlaps: usize = summaries.iter().map(|s| s.overlapping_pairs).sum();
    let occupied = summaries.iter().filter(|s| s.occupied).count();
    let meta = RecordMeta::new(rc.d, rc.s, &params).with_l(rc.n);
    let mut occ = Moments::default();
    for s in &summaries {
        occ.push(if s.occupied { 1.0 } else { 0.0 });
    }
    out.records.push(EstimateRecord::indicator("origin_occupied", &occ, cfg.seed, meta));
    if growth {
        let mut reach = Moments::default();
        for s in &summaries {
            reach.push(if s.sites >= cfg.max_sites { 1.0 } else { 0.0 });
        }
        out.records.push(EstimateRecord::indicator("reached_max_sites", &reach, cfg.seed, meta));
    }
    out.checks.push(check("levels monotone", total.monotone == 0, format!("{}", total.monotone)));
    out.checks.push(check("variates inside their brackets", total.bracket == 0, format!("{}", total.bracket)));
    out.checks.push(check("certified paths re-verify", paths == 0, format!("{paths}")));
    out.checks.push(check("same-column explorations disjoint", overlaps == 0, format!("{overlaps}")));
    if rc.is_reference_geometry() {
        out.checks.push(check("final upper levels within parameter + 8 delta", zeta == 0, format!("{zeta}")));
    }
    out.summary = format!(
        "renorm: origin occupied in {occupied} of {} runs; violations monotone {} bracket {} hypothesis {} constraint {}",
        summaries.len(),
        total.monotone,
        total.bracket,
        total.hypothesis,
        total.constraint
    );
    out.details = json!({
        "renorm_config": rc,
        "params": { "p": params.p, "q": params.q },
        "lambda_target": rc.lambda_target(),
        "violations": total,
        "zeta_bound_violations": zeta,
        "path_violations": paths,
        "runs": summaries,
        "rho": rho_profile(&trajectories),
    });
    Ok(out)
}

fn oracle_cmd(cfg: &ExperimentConfig) -> Result<Outcome, RunError> {
    let mut out = Outcome::default();
    if cfg.max_edges > 5 {
        return Err(bad("max_edges", "the exhaustive check supports at most 5 edges"));
    }
    let mut reports = Vec::new();
    for m in 0..=cfg.max_edges {
        for probs in [
            RationalProbs { num: vec![1; m], den: 2 },
            RationalProbs { num: [1, 3, 5, 7, 9][..m].to_vec(), den: 10 },
            RationalProbs { num: [1, 2, 3, 12, 15][..m].to_vec(), den: 16 },
        ] {
            let r = exhaustive_inequalities(&probs);
            out.checks.push(check(
                format!("FKG and BK on {m} edges, weights {:?}/{}", probs.num, probs.den),
                r.holds(),
                format!("{} pairs, {} FKG and {} BK failures", r.pairs, r.fkg_failures, r.bk_failures),
            ));
            reports.push(r);
        }
    }
    let mut exact = Vec::new();
    if cfg.p.is_some() || cfg.grid.is_some() {
        for pt in cfg.points()? {
            if let Some(x) = exact_theta(cfg, &pt)? {
                let m = Moments::default();
                let mut r = EstimateRecord::numeric("theta_exact", &m, cfg.seed, RecordMeta::new(cfg.d, cfg.s, &pt).with_l(cfg.m));
                r.mean = x;
                r.ci_lo = x;
                r.ci_hi = x;
                exact.push(x);
                out.records.push(r);
            }
        }
    }
    let pairs: u64 = reports.iter().map(|r| r.pairs).sum();
    out.summary = format!(
        "oracle: {} event pairs checked, {} failures",
        pairs,
        reports.iter().map(|r| r.fkg_failures + r.bk_failures).sum::<u64>()
    );
    out.details = json!({ "inequalities": reports, "exact": exact });
    Ok(out)
}

fn mtp_cmd(cfg: &ExperimentConfig) -> Result<Outcome, RunError> {
    let axes = cfg
        .torus
        .iter()
        .enumerate()
        .map(|(k, &len)| if k < cfg.s { Axis::periodic(0, len) } else { Axis::periodic(-(len as i64 / 2), len) })
        .collect();
    let spec = LatticeSpec::new(cfg.d, cfg.s, axes, ClassRule::DefectSublattice).map_err(rt)?;
    let o = spec.index_of(&[0; MAX_D]).ok_or_else(|| bad("torus", "must contain the origin"))?;
    let transport: &dyn Transport = match cfg.transport {
        TransportKind::NearestToTop => &NearestToTop,
        TransportKind::SameHCluster => &SameHCluster,
        TransportKind::Diagonal => &Diagonal,
    };
    let mut out = Outcome::default();
    let mut results = Vec::new();
    for (i, pt) in cfg.points()?.iter().enumerate() {
        let mode = match cfg.mode {
            MtpModeKind::Exact => MtpMode::Exact,
            MtpModeKind::MonteCarlo => MtpMode::MonteCarlo { samples: cfg.samples, seed: stream_seed(cfg.seed, i) },
        };
        let r = mass_transport_check(&spec, transport, pt, o, mode).map_err(rt)?;
        let ok = if r.stderr == 0.0 { r.delta.abs() < 1e-12 } else { r.delta.abs() <= 4.0 * r.stderr };
        out.checks.push(check(format!("mass transport[{i}] balanced"), ok, format!("delta {:e}, stderr {:e}", r.delta, r.stderr)));
        let n = if cfg.mode == MtpModeKind::Exact { 0 } else { cfg.samples };
        out.records.push(EstimateRecord {
            event: "mtp_delta".into(),
            mean: r.delta,
            stderr: r.stderr,
            n,
            seed: stream_seed(cfg.seed, i),
            ci_lo: r.delta - Z95 * r.stderr,
            ci_hi: r.delta + Z95 * r.stderr,
            meta: RecordMeta::new(cfg.d, cfg.s, pt),
        });
        results.push(r);
    }
    let r = &results[0];
    out.summary = format!("mtp-check: sent {:.6}, received {:.6}, delta {:e} ± {:e}", r.lhs, r.rhs, r.delta, r.stderr);
    out.details = json!({ "results": results.iter().map(|r| json!({"lhs": r.lhs, "rhs": r.rhs, "delta": r.delta, "stderr": r.stderr})).collect::<Vec<_>>() });
    Ok(out)
}
