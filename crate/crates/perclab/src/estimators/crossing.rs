//! Crossing probabilities as functions of q, and the location of the
//! probability-1/2 point.
//!
//! For a fixed field the crossing event is increasing in q, so each sample
//! has a threshold: the smallest q at which it crosses. It is found with one
//! sweep: union every open non-H edge, then add H edges in order of their
//! variates until the two faces meet. The empirical crossing curve is then a
//! step function that can be evaluated at any q without resampling.

use serde::Serialize;

use crate::clusters::Dsu;
use crate::field::{threshold_units, ParamPoint, Thresholds, UniformField};
use crate::lattice::{Axis, ClassRule, EdgeClass, LatticeSpec};

use super::{map_samples, Z95};

/// The sample crosses even with every H edge closed.
pub const ALWAYS: i64 = -1;
/// The sample does not cross even with every H edge open.
pub const NEVER: i64 = 1 << 32;

/// Boxes whose crossing events make up the score.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum CrossingDesign {
    /// Planar lattice with the axis rule: the mean of the horizontal crossing
    /// of an (L+1) x L box and the vertical crossing of an L x (L+1) box.
    /// By planar duality the score equals 1/2 exactly at q = 1 - p.
    SelfDualPair { l: usize },
    /// Crossing along axis 0 of a box with side L on the first `s` axes (all
    /// axes under the axis rule). Remaining axes span {-N..N} when `thick`
    /// is set and L sites otherwise.
    Square { d: usize, s: usize, rule: ClassRule, l: usize, thick: Option<usize> },
}

impl CrossingDesign {
    pub fn boxes(&self) -> Vec<(LatticeSpec, usize)> {
        match *self {
            CrossingDesign::SelfDualPair { l } => {
                let wide = LatticeSpec::new(2, 1, vec![Axis::free(0, l + 1), Axis::free(0, l)], ClassRule::AxisDirection).expect("valid box");
                let tall = LatticeSpec::new(2, 1, vec![Axis::free(0, l), Axis::free(0, l + 1)], ClassRule::AxisDirection).expect("valid box");
                vec![(wide, 0), (tall, 1)]
            }
            CrossingDesign::Square { d, s, rule, l, thick } => {
                let wide_axes = if rule == ClassRule::AxisDirection { d } else { s };
                let axes = (0..d)
                    .map(|k| {
                        if k < wide_axes {
                            Axis::free(0, l)
                        } else {
                            match thick {
                                Some(n) => Axis::centered(n),
                                None => Axis::free(-(l as i64 / 2), l),
                            }
                        }
                    })
                    .collect();
                vec![(LatticeSpec::new(d, s, axes, rule).expect("valid box"), 0)]
            }
        }
    }

    pub fn side(&self) -> usize {
        match *self {
            CrossingDesign::SelfDualPair { l } | CrossingDesign::Square { l, .. } => l,
        }
    }

    pub fn dims(&self) -> (usize, usize) {
        match *self {
            CrossingDesign::SelfDualPair { .. } => (2, 1),
            CrossingDesign::Square { d, s, .. } => (d, s),
        }
    }

    pub fn thickness(&self) -> Option<usize> {
        match *self {
            CrossingDesign::Square { thick, .. } => thick,
            _ => None,
        }
    }

    /// Same design at half the side length.
    pub fn halved(&self) -> Self {
        let mut out = *self;
        match &mut out {
            CrossingDesign::SelfDualPair { l } | CrossingDesign::Square { l, .. } => *l = (*l / 2).max(1),
        }
        out
    }
}

fn join(dsu: &mut Dsu, flags: &mut [u8], a: usize, b: usize) -> bool {
    if let Some((r, gone)) = dsu.union(a, b) {
        flags[r] |= flags[gone];
        flags[r] == 3
    } else {
        false
    }
}

/// Smallest H-edge variate (in 32-bit units) at which the sample crosses,
/// or [`ALWAYS`] / [`NEVER`].
pub fn crossing_threshold(field: &UniformField, spec: &LatticeSpec, axis: usize, th: &Thresholds) -> i64 {
    let nv = spec.num_vertices();
    let d = spec.d();
    let len = spec.axis(axis).len;
    let mut flags: Vec<u8> = (0..nv)
        .map(|v| {
            let o = spec.offset(v, axis);
            (o == 0) as u8 | (((o + 1 == len) as u8) << 1)
        })
        .collect();
    if flags.contains(&3) && len == 1 {
        return ALWAYS;
    }
    let mut dsu = Dsu::new(nv);
    let mut h_edges: Vec<(u32, u32, u32)> = Vec::new();
    let mut crossed = false;
    spec.for_each_edge(|_, v, w, k, class, base| {
        let raw = field.raw(base, d, k);
        if class == EdgeClass::H {
            h_edges.push((raw, v as u32, w as u32));
        } else if th.open(raw, class) && join(&mut dsu, &mut flags, v, w) {
            crossed = true;
        }
    });
    if crossed {
        return ALWAYS;
    }
    h_edges.sort_unstable();
    for (raw, v, w) in h_edges {
        if join(&mut dsu, &mut flags, v as usize, w as usize) {
            return raw as i64;
        }
    }
    NEVER
}

/// Per-sample crossing thresholds for a design at fixed p.
#[derive(Debug, Clone)]
pub struct CrossingSweep {
    pub design: CrossingDesign,
    pub p: f64,
    pub seed: u64,
    pub stream: u64,
    boxes: Vec<(LatticeSpec, usize)>,
    /// `thresholds[i][b]` for sample i and box b.
    thresholds: Vec<Vec<i64>>,
}

impl CrossingSweep {
    pub fn new(design: CrossingDesign, p: f64, seed: u64, stream: u64) -> Self {
        CrossingSweep { design, p, seed, stream, boxes: design.boxes(), thresholds: Vec::new() }
    }

    pub fn samples(&self) -> u64 {
        self.thresholds.len() as u64
    }

    /// Grow the sample set to `n` samples.
    pub fn extend_to(&mut self, n: u64) {
        let have = self.samples();
        if n <= have {
            return;
        }
        let th = ParamPoint { p: self.p, q: 0.0, t: None }.units();
        let boxes = &self.boxes;
        let (seed, stream) = (self.seed, self.stream);
        let fresh = map_samples(have, n - have, |i| {
            let field = UniformField::new(seed, stream, i);
            boxes.iter().map(|(spec, axis)| crossing_threshold(&field, spec, *axis, &th)).collect::<Vec<i64>>()
        });
        self.thresholds.extend(fresh);
    }

    pub fn thresholds(&self) -> &[Vec<i64>] {
        &self.thresholds
    }

    /// Score mean and standard error at q.
    pub fn score(&self, q: f64) -> (f64, f64) {
        let u = threshold_units(q) as i64;
        let k = self.boxes.len() as f64;
        let n = self.thresholds.len() as f64;
        if n == 0.0 {
            return (0.0, 0.0);
        }
        let mut s = 0.0;
        let mut s2 = 0.0;
        for row in &self.thresholds {
            let x = row.iter().filter(|&&t| t < u).count() as f64 / k;
            s += x;
            s2 += x * x;
        }
        let mean = s / n;
        let var = if n > 1.0 { ((s2 - n * mean * mean) / (n - 1.0)).max(0.0) } else { 0.0 };
        (mean, (var / n).sqrt())
    }

    /// Smallest q (on the 2^-32 grid) where the score reaches `level`, and
    /// the interval of q where `level` lies inside the 95% band of the score.
    pub fn level_crossing(&self, level: f64) -> (f64, f64, f64) {
        let n = self.thresholds.len();
        let k = self.boxes.len();
        let mut events: Vec<(i64, usize)> = Vec::new();
        let mut counts = vec![0usize; n];
        for (i, row) in self.thresholds.iter().enumerate() {
            for &t in row {
                if t == ALWAYS {
                    counts[i] += 1;
                } else if t != NEVER {
                    events.push((t, i));
                }
            }
        }
        events.sort_unstable();
        let kf = k as f64;
        let nf = n as f64;
        let mut s: f64 = counts.iter().map(|&c| c as f64 / kf).sum();
        let mut s2: f64 = counts.iter().map(|&c| (c as f64 / kf).powi(2)).sum();
        let stats = |s: f64, s2: f64| {
            let mean = s / nf;
            let var = if nf > 1.0 { ((s2 - nf * mean * mean) / (nf - 1.0)).max(0.0) } else { 0.0 };
            (mean, (var / nf).sqrt())
        };
        let to_q = |u: i64| (u as f64 / 4294967296.0).clamp(0.0, 1.0);
        let mut point = None;
        let mut lo = None;
        let mut hi = None;
        let mut check = |u: i64, s: f64, s2: f64| {
            let (m, se) = stats(s, s2);
            if lo.is_none() && m + Z95 * se >= level {
                lo = Some(to_q(u));
            }
            if point.is_none() && m >= level {
                point = Some(to_q(u));
            }
            if hi.is_none() && m - Z95 * se >= level {
                hi = Some(to_q(u));
            }
        };
        check(0, s, s2);
        let mut j = 0;
        while j < events.len() {
            let t = events[j].0;
            while j < events.len() && events[j].0 == t {
                let i = events[j].1;
                let before = counts[i] as f64 / kf;
                counts[i] += 1;
                let after = counts[i] as f64 / kf;
                s += after - before;
                s2 += after * after - before * before;
                j += 1;
            }
            check(t + 1, s, s2);
        }
        (point.unwrap_or(1.0), lo.unwrap_or(1.0), hi.unwrap_or(1.0))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum BracketFlag {
    /// The score is already above 1/2 at q = 0.
    AboveAtZero,
    /// The score stays below 1/2 at q = 1.
    BelowAtOne,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct BisectOptions {
    pub tolerance: f64,
    pub samples_per_step: u64,
    /// Sample cap for the doubling rule.
    pub max_samples: u64,
    pub seed: u64,
    pub stream: u64,
}

impl BisectOptions {
    pub fn new(samples: u64, seed: u64) -> Self {
        BisectOptions { tolerance: 1e-3, samples_per_step: samples, max_samples: samples * 4, seed, stream: 0 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct BisectionStep {
    pub lo: f64,
    pub hi: f64,
    pub mid: f64,
    pub mean: f64,
    pub stderr: f64,
    pub samples: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CriticalEstimate {
    pub design: CrossingDesign,
    pub p: f64,
    pub q_hat: f64,
    /// q range over which 1/2 lies inside the score's 95% band.
    pub ci_lo: f64,
    pub ci_hi: f64,
    pub bracket: (f64, f64),
    pub samples: u64,
    pub seed: u64,
    pub steps: Vec<BisectionStep>,
    pub flag: Option<BracketFlag>,
}

impl CriticalEstimate {
    /// Half-width of the interval, used as a standard-error surrogate.
    pub fn sigma(&self) -> f64 {
        ((self.ci_hi - self.ci_lo) / (2.0 * Z95)).max(0.0)
    }
}

/// Bisection on the crossing score for the q with score 1/2. When the 95%
/// band at the midpoint contains 1/2 the sample count is doubled, up to the
/// cap, before the bracket moves.
pub fn bisect_critical_q(design: CrossingDesign, p: f64, opts: &BisectOptions) -> CriticalEstimate {
    let mut sweep = CrossingSweep::new(design, p, opts.seed, opts.stream);
    sweep.extend_to(opts.samples_per_step.max(1));
    bisect_on(&mut sweep, opts)
}

pub fn bisect_on(sweep: &mut CrossingSweep, opts: &BisectOptions) -> CriticalEstimate {
    let mut out = CriticalEstimate {
        design: sweep.design,
        p: sweep.p,
        q_hat: 0.0,
        ci_lo: 0.0,
        ci_hi: 0.0,
        bracket: (0.0, 1.0),
        samples: 0,
        seed: opts.seed,
        steps: Vec::new(),
        flag: None,
    };
    let (m0, _) = sweep.score(0.0);
    let (m1, _) = sweep.score(1.0);
    if m0 > 0.5 || m1 < 0.5 {
        let q = if m0 > 0.5 { 0.0 } else { 1.0 };
        out.flag = Some(if m0 > 0.5 { BracketFlag::AboveAtZero } else { BracketFlag::BelowAtOne });
        out.q_hat = q;
        out.ci_lo = q;
        out.ci_hi = q;
        out.bracket = (q, q);
        out.samples = sweep.samples();
        return out;
    }
    let (mut lo, mut hi) = (0.0f64, 1.0f64);
    let tol = opts.tolerance.max(1e-9);
    while hi - lo > tol {
        let mid = 0.5 * (lo + hi);
        let (mut mean, mut se) = sweep.score(mid);
        while (mean - Z95 * se..=mean + Z95 * se).contains(&0.5) && sweep.samples() * 2 <= opts.max_samples {
            let n = sweep.samples() * 2;
            sweep.extend_to(n);
            (mean, se) = sweep.score(mid);
        }
        out.steps.push(BisectionStep { lo, hi, mid, mean, stderr: se, samples: sweep.samples() });
        if mean >= 0.5 {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    let (_, ci_lo, ci_hi) = sweep.level_crossing(0.5);
    out.q_hat = 0.5 * (lo + hi);
    out.ci_lo = ci_lo.min(out.q_hat);
    out.ci_hi = ci_hi.max(out.q_hat);
    out.bracket = (lo, hi);
    out.samples = sweep.samples();
    out
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DriftReport {
    pub full: CriticalEstimate,
    pub half: CriticalEstimate,
    /// q̂ at L minus q̂ at L/2.
    pub drift: f64,
}

/// Critical point at side L and at L/2, reporting the finite-size drift.
pub fn bisect_with_drift(design: CrossingDesign, p: f64, opts: &BisectOptions) -> DriftReport {
    let full = bisect_critical_q(design, p, opts);
    let half = bisect_critical_q(design.halved(), p, opts);
    let drift = full.q_hat - half.q_hat;
    DriftReport { full, half, drift }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SlabCurve {
    pub slabs: Vec<(usize, CriticalEstimate)>,
    pub full_box: CriticalEstimate,
}

/// Critical q on slabs of half-thickness N for each N, and on the full cube.
/// All runs share one sample stream, so the nested slabs are coupled.
pub fn slab_critical_curve(d: usize, s: usize, l: usize, thicknesses: &[usize], p: f64, opts: &BisectOptions) -> SlabCurve {
    let slabs = thicknesses
        .iter()
        .map(|&n| (n, bisect_critical_q(CrossingDesign::Square { d, s, rule: ClassRule::DefectSublattice, l, thick: Some(n) }, p, opts)))
        .collect();
    let full_box = bisect_critical_q(CrossingDesign::Square { d, s, rule: ClassRule::DefectSublattice, l, thick: None }, p, opts);
    SlabCurve { slabs, full_box }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn self_dual_boxes() {
        let b = CrossingDesign::SelfDualPair { l: 4 }.boxes();
        assert_eq!(b[0].0.num_vertices(), 20);
        assert_eq!(b[1].0.num_vertices(), 20);
        assert_eq!((b[0].1, b[1].1), (0, 1));
    }

    #[test]
    fn threshold_extremes() {
        let spec = LatticeSpec::new(2, 1, vec![Axis::free(0, 5), Axis::free(0, 5)], ClassRule::AxisDirection).unwrap();
        let f = UniformField::new(1, 0, 0);
        // horizontal edges all open: crossing along axis 0 without any H edge
        let all = ParamPoint::new(1.0, 0.0).unwrap().units();
        assert_eq!(crossing_threshold(&f, &spec, 0, &all), ALWAYS);
        // no horizontal edges: axis 0 can never be crossed
        let none = ParamPoint::new(0.0, 0.0).unwrap().units();
        assert_eq!(crossing_threshold(&f, &spec, 0, &none), NEVER);
        // vertical crossing needs H edges only
        let t = crossing_threshold(&f, &spec, 1, &none);
        assert!((0..NEVER).contains(&t));
    }

    #[test]
    fn threshold_matches_direct_crossing() {
        use crate::clusters::build_clusters;
        let spec = LatticeSpec::new(2, 1, vec![Axis::free(0, 6), Axis::free(0, 6)], ClassRule::AxisDirection).unwrap();
        for i in 0..40 {
            let f = UniformField::new(9, 0, i);
            let t = crossing_threshold(&f, &spec, 0, &ParamPoint::new(0.4, 0.0).unwrap().units());
            for q in [0.1, 0.3, 0.5, 0.7, 0.9] {
                let pp = ParamPoint::new(0.4, q).unwrap();
                let forest = build_clusters(&f, &spec, &pp, None, None);
                let direct = forest.components().iter().any(|&(r, _)| forest.touches_face(r, 0, 0) && forest.touches_face(r, 0, 1));
                assert_eq!(direct, t < threshold_units(q) as i64, "sample {i} q {q}");
            }
        }
    }

    #[test]
    fn one_dimensional_lines_at_p_zero() {
        let opts = BisectOptions { tolerance: 0.01, samples_per_step: 64, max_samples: 64, seed: 5, stream: 0 };
        let est = bisect_critical_q(CrossingDesign::SelfDualPair { l: 16 }, 0.0, &opts);
        assert!(est.q_hat > 0.9, "{}", est.q_hat);
    }

    #[test]
    fn brackets_shrink() {
        let opts = BisectOptions { tolerance: 0.01, samples_per_step: 64, max_samples: 256, seed: 2, stream: 0 };
        let est = bisect_critical_q(CrossingDesign::SelfDualPair { l: 16 }, 0.3, &opts);
        for w in est.steps.windows(2) {
            assert!(w[1].hi - w[1].lo < w[0].hi - w[0].lo);
            assert!(w[1].lo >= w[0].lo && w[1].hi <= w[0].hi);
        }
        assert!(est.bracket.1 - est.bracket.0 <= 0.01);
    }
}
