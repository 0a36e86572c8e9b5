//! Monte Carlo estimators. Every sample `i` reads the field keyed by
//! `(seed, stream, i)`, samples are processed in fixed chunks and the chunk
//! sums are reduced in order, so results do not depend on the thread count.

use rayon::prelude::*;
use serde::Serialize;

use crate::clusters::{build_clusters, find_trifurcations, spanning_sizes, ClusterError};
use crate::field::{ParamPoint, UniformField, ZView};
use crate::lattice::{sphere_size, sup_norm, Axis, ClassRule, LatticeSpec, Point, ZBox, MAX_D};

mod crossing;
mod gm;

pub use crossing::*;
pub use gm::*;

pub const CHUNK: u64 = 4096;
/// Two-sided 95% normal quantile.
pub const Z95: f64 = 1.959963984540054;

/// Kahan-compensated running sum.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct Accumulator {
    sum: f64,
    comp: f64,
}

impl Accumulator {
    #[inline]
    pub fn add(&mut self, x: f64) {
        let y = x - self.comp;
        let t = self.sum + y;
        self.comp = (t - self.sum) - y;
        self.sum = t;
    }

    pub fn value(&self) -> f64 {
        self.sum - self.comp
    }

    /// Sum and (negated) compensation, for exact-as-possible merging.
    pub fn parts(&self) -> (f64, f64) {
        (self.sum, -self.comp)
    }
}

/// First two moments of a sample stream.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct Moments {
    pub n: u64,
    sum: Accumulator,
    sum_sq: Accumulator,
}

impl Moments {
    pub fn push(&mut self, x: f64) {
        self.n += 1;
        self.sum.add(x);
        self.sum_sq.add(x * x);
    }

    pub fn merge(&mut self, other: &Moments) {
        self.n += other.n;
        let (a, b) = other.sum.parts();
        self.sum.add(a);
        self.sum.add(b);
        let (a, b) = other.sum_sq.parts();
        self.sum_sq.add(a);
        self.sum_sq.add(b);
    }

    pub fn mean(&self) -> f64 {
        if self.n == 0 {
            0.0
        } else {
            self.sum.value() / self.n as f64
        }
    }

    /// Unbiased sample variance.
    pub fn variance(&self) -> f64 {
        if self.n < 2 {
            return 0.0;
        }
        let n = self.n as f64;
        let m = self.mean();
        ((self.sum_sq.value() - n * m * m) / (n - 1.0)).max(0.0)
    }

    pub fn stderr(&self) -> f64 {
        if self.n == 0 {
            0.0
        } else {
            (self.variance() / self.n as f64).sqrt()
        }
    }
}

/// Run `f(sample_index)` for samples `start..start+n` in parallel and return
/// the results in sample order.
pub fn map_samples<T: Send>(start: u64, n: u64, f: impl Fn(u64) -> T + Sync) -> Vec<T> {
    let n_chunks = n.div_ceil(CHUNK);
    let chunks: Vec<Vec<T>> = (0..n_chunks)
        .into_par_iter()
        .map(|c| {
            let lo = start + c * CHUNK;
            let hi = (lo + CHUNK).min(start + n);
            (lo..hi).map(&f).collect()
        })
        .collect();
    chunks.into_iter().flatten().collect()
}

/// Moments of `f(sample_index)` over `n` samples, reduced deterministically.
pub fn sample_moments(n: u64, f: impl Fn(u64) -> f64 + Sync) -> Moments {
    let n_chunks = n.div_ceil(CHUNK);
    let parts: Vec<Moments> = (0..n_chunks)
        .into_par_iter()
        .map(|c| {
            let mut m = Moments::default();
            for i in c * CHUNK..((c + 1) * CHUNK).min(n) {
                m.push(f(i));
            }
            m
        })
        .collect();
    let mut total = Moments::default();
    for p in &parts {
        total.merge(p);
    }
    total
}

/// Vector-valued version of [`sample_moments`]: `f` fills one value per slot.
pub fn sample_moments_vec(n: u64, width: usize, f: impl Fn(u64, &mut [f64]) + Sync) -> Vec<Moments> {
    let n_chunks = n.div_ceil(CHUNK);
    let parts: Vec<Vec<Moments>> = (0..n_chunks)
        .into_par_iter()
        .map(|c| {
            let mut ms = vec![Moments::default(); width];
            let mut buf = vec![0.0; width];
            for i in c * CHUNK..((c + 1) * CHUNK).min(n) {
                buf.iter_mut().for_each(|b| *b = 0.0);
                f(i, &mut buf);
                for (m, &x) in ms.iter_mut().zip(&buf) {
                    m.push(x);
                }
            }
            ms
        })
        .collect();
    let mut total = vec![Moments::default(); width];
    for p in &parts {
        for (t, m) in total.iter_mut().zip(p) {
            t.merge(m);
        }
    }
    total
}

/// Descriptive fields carried by every record.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize)]
pub struct RecordMeta {
    pub d: usize,
    pub s: usize,
    #[serde(rename = "L")]
    pub l: Option<usize>,
    #[serde(rename = "N")]
    pub n_slab: Option<usize>,
    pub p: f64,
    pub q: f64,
}

impl RecordMeta {
    pub fn new(d: usize, s: usize, params: &ParamPoint) -> Self {
        RecordMeta { d, s, l: None, n_slab: None, p: params.p, q: params.q }
    }

    pub fn of(spec: &LatticeSpec, params: &ParamPoint) -> Self {
        RecordMeta::new(spec.d(), spec.s(), params)
    }

    pub fn with_l(mut self, l: usize) -> Self {
        self.l = Some(l);
        self
    }

    pub fn with_n(mut self, n: usize) -> Self {
        self.n_slab = Some(n);
        self
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EstimateRecord {
    pub event: String,
    pub mean: f64,
    pub stderr: f64,
    pub n: u64,
    pub seed: u64,
    pub ci_lo: f64,
    pub ci_hi: f64,
    #[serde(flatten)]
    pub meta: RecordMeta,
}

pub const CSV_HEADER: &str = "event,d,s,L,N,p,q,mean,stderr,n,seed";

fn opt(x: Option<usize>) -> String {
    x.map(|v| v.to_string()).unwrap_or_default()
}

impl EstimateRecord {
    /// Record for an indicator mean: binomial standard error, CI clamped to [0,1].
    pub fn indicator(event: &str, m: &Moments, seed: u64, meta: RecordMeta) -> Self {
        let mean = m.mean();
        let stderr = if m.n == 0 { 0.0 } else { (mean * (1.0 - mean) / m.n as f64).max(0.0).sqrt() };
        EstimateRecord {
            event: event.to_string(),
            mean,
            stderr,
            n: m.n,
            seed,
            ci_lo: (mean - Z95 * stderr).clamp(0.0, 1.0),
            ci_hi: (mean + Z95 * stderr).clamp(0.0, 1.0),
            meta,
        }
    }

    /// Record for a numeric mean with the sample standard error.
    pub fn numeric(event: &str, m: &Moments, seed: u64, meta: RecordMeta) -> Self {
        let mean = m.mean();
        let stderr = m.stderr();
        EstimateRecord {
            event: event.to_string(),
            mean,
            stderr,
            n: m.n,
            seed,
            ci_lo: mean - Z95 * stderr,
            ci_hi: mean + Z95 * stderr,
            meta,
        }
    }

    pub fn csv_row(&self) -> String {
        format!(
            "{},{},{},{},{},{},{},{},{},{},{}",
            self.event,
            self.meta.d,
            self.meta.s,
            opt(self.meta.l),
            opt(self.meta.n_slab),
            self.meta.p,
            self.meta.q,
            self.mean,
            self.stderr,
            self.n,
            self.seed
        )
    }

    /// |mean - truth| in units of the standard error (infinite when the
    /// error is zero and the values differ).
    pub fn z_score(&self, truth: f64) -> f64 {
        let diff = (self.mean - truth).abs();
        if diff == 0.0 {
            0.0
        } else if self.stderr == 0.0 {
            f64::INFINITY
        } else {
            diff / self.stderr
        }
    }
}

/// Least-squares line fit.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct LineFit {
    pub slope: f64,
    pub intercept: f64,
    pub r2: f64,
}

/// Weighted least squares of `ys` on `xs`; `None` with fewer than two points.
pub fn fit_line(xs: &[f64], ys: &[f64], ws: Option<&[f64]>) -> Option<LineFit> {
    if xs.len() < 2 || xs.len() != ys.len() {
        return None;
    }
    let w = |i: usize| ws.map_or(1.0, |w| w[i]);
    let sw: f64 = (0..xs.len()).map(w).sum();
    let mx = (0..xs.len()).map(|i| w(i) * xs[i]).sum::<f64>() / sw;
    let my = (0..xs.len()).map(|i| w(i) * ys[i]).sum::<f64>() / sw;
    let sxx: f64 = (0..xs.len()).map(|i| w(i) * (xs[i] - mx).powi(2)).sum();
    let sxy: f64 = (0..xs.len()).map(|i| w(i) * (xs[i] - mx) * (ys[i] - my)).sum();
    let syy: f64 = (0..xs.len()).map(|i| w(i) * (ys[i] - my).powi(2)).sum();
    if sxx == 0.0 {
        return None;
    }
    let slope = sxy / sxx;
    let r2 = if syy == 0.0 { 1.0 } else { sxy * sxy / (sxx * syy) };
    Some(LineFit { slope, intercept: my - slope * mx, r2 })
}

/// Indicator mean of `event(field)` over `n` samples.
pub fn estimate_event(
    spec: &LatticeSpec,
    params: &ParamPoint,
    name: &str,
    event: impl Fn(&UniformField) -> bool + Sync,
    n: u64,
    seed: u64,
    stream: u64,
) -> EstimateRecord {
    let m = sample_moments(n, |i| if event(&UniformField::new(seed, stream, i)) { 1.0 } else { 0.0 });
    EstimateRecord::indicator(name, &m, seed, RecordMeta::of(spec, params))
}

/// Dense BFS over the open cluster of `start` inside a box. Reusable across
/// samples thanks to epoch stamps.
pub struct BoxExplorer {
    pub bx: ZBox,
    stamp: Vec<u32>,
    epoch: u32,
    stack: Vec<Point>,
}

impl BoxExplorer {
    pub fn new(bx: ZBox) -> Self {
        BoxExplorer { bx, stamp: vec![0; bx.volume()], epoch: 0, stack: Vec::new() }
    }

    fn next_epoch(&mut self) {
        self.epoch = self.epoch.wrapping_add(1);
        if self.epoch == 0 {
            self.stamp.iter_mut().for_each(|s| *s = 0);
            self.epoch = 1;
        }
    }

    /// Explore from `sources` through open edges that stay in the box and in
    /// `allowed`, calling `visit` on every reached vertex.
    pub fn explore(
        &mut self,
        view: &ZView,
        sources: &[Point],
        allowed: impl Fn(&Point) -> bool,
        mut visit: impl FnMut(&Point),
    ) {
        self.next_epoch();
        let d = view.d;
        for x in sources {
            if self.bx.contains(x) && allowed(x) {
                let i = self.bx.index(x);
                if self.stamp[i] != self.epoch {
                    self.stamp[i] = self.epoch;
                    self.stack.push(*x);
                }
            }
        }
        while let Some(x) = self.stack.pop() {
            visit(&x);
            for k in 0..d {
                for dir in [1i64, -1] {
                    let mut y = x;
                    y[k] += dir;
                    if !self.bx.contains(&y) {
                        continue;
                    }
                    let i = self.bx.index(&y);
                    if self.stamp[i] == self.epoch || !allowed(&y) {
                        continue;
                    }
                    let base = if dir > 0 { x } else { y };
                    let class = crate::lattice::classify_points(&x, &y, k, d, view.s, view.rule);
                    if view.th.open(view.field.raw(&base, d, k), class) {
                        self.stamp[i] = self.epoch;
                        self.stack.push(y);
                    }
                }
            }
        }
    }

    /// Whether `x` was reached by the last exploration.
    pub fn reached(&self, x: &Point) -> bool {
        self.bx.contains(x) && self.stamp[self.bx.index(x)] == self.epoch
    }
}

fn dist_from(x: &Point, c: &Point) -> i64 {
    let mut y = *x;
    for k in 0..MAX_D {
        y[k] -= c[k];
    }
    sup_norm(&y)
}

/// P(o <-> ∂B_m) on the lattice B_m.
pub fn theta(d: usize, s: usize, rule: ClassRule, params: &ParamPoint, m: usize, n: u64, seed: u64) -> EstimateRecord {
    let origin = [0i64; MAX_D];
    let bx = ZBox::ball(d, &origin, m as i64);
    let m = m as i64;
    let moments = sample_moments_explorer(n, bx, |ex, i| {
        let view = ZView::new(UniformField::new(seed, 0, i), params, d, s, rule);
        let mut hit = m == 0;
        ex.explore(&view, &[origin], |_| true, |x| hit |= sup_norm(x) == m);
        if hit {
            1.0
        } else {
            0.0
        }
    });
    EstimateRecord::indicator("theta", &moments, seed, RecordMeta::new(d, s, params).with_l(m as usize))
}

thread_local! {
    static EXPLORER: std::cell::RefCell<Option<BoxExplorer>> = const { std::cell::RefCell::new(None) };
}

/// Run `f` with a per-thread explorer for `bx`.
pub fn with_explorer<R>(bx: ZBox, f: impl FnOnce(&mut BoxExplorer) -> R) -> R {
    EXPLORER.with(|cell| {
        let mut slot = cell.borrow_mut();
        if slot.as_ref().is_none_or(|e| e.bx != bx) {
            *slot = Some(BoxExplorer::new(bx));
        }
        f(slot.as_mut().expect("explorer"))
    })
}

fn sample_moments_explorer(n: u64, bx: ZBox, f: impl Fn(&mut BoxExplorer, u64) -> f64 + Sync) -> Moments {
    sample_moments(n, |i| with_explorer(bx, |ex| f(ex, i)))
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct OneArmProfile {
    pub records: Vec<EstimateRecord>,
    /// Fitted decay rate of P(v <-> ∂B_m(v)) in m.
    pub rate: Option<f64>,
    pub r2: Option<f64>,
    /// Radii left out of the fit because no sample reached them.
    pub dropped: Vec<usize>,
    /// Fewer than two usable radii, or all means equal to one.
    pub degenerate: bool,
}

/// One-arm probabilities P(v <-> ∂B_m(v)) for every m in `radii`, from one
/// exploration per sample inside the largest box, with a fit of
/// -log P against m. Points are weighted by the inverse variance of log P.
pub fn one_arm_profile(
    d: usize,
    s: usize,
    rule: ClassRule,
    params: &ParamPoint,
    v: Point,
    radii: &[usize],
    n: u64,
    seed: u64,
) -> OneArmProfile {
    let mmax = radii.iter().copied().max().unwrap_or(0) as i64;
    let bx = ZBox::ball(d, &v, mmax);
    let ms = sample_moments_vec(n, radii.len(), |i, out| {
        let view = ZView::new(UniformField::new(seed, 0, i), params, d, s, rule);
        let mut reach = 0i64;
        with_explorer(bx, |ex| ex.explore(&view, &[v], |_| true, |x| reach = reach.max(dist_from(x, &v))));
        for (o, &m) in out.iter_mut().zip(radii) {
            *o = if reach >= m as i64 { 1.0 } else { 0.0 };
        }
    });
    let meta = RecordMeta::new(d, s, params);
    let records: Vec<EstimateRecord> = ms
        .iter()
        .zip(radii)
        .map(|(m, &r)| EstimateRecord::indicator("one_arm", m, seed, meta.with_l(r)))
        .collect();
    let mut xs = Vec::new();
    let mut ys = Vec::new();
    let mut ws = Vec::new();
    let mut dropped = Vec::new();
    for (rec, &r) in records.iter().zip(radii) {
        if rec.mean > 0.0 {
            xs.push(r as f64);
            ys.push(-rec.mean.ln());
            let var_log = (1.0 - rec.mean) / (rec.mean * rec.n as f64);
            ws.push(if var_log > 0.0 { 1.0 / var_log } else { 1.0 });
        } else {
            dropped.push(r);
        }
    }
    let all_one = records.iter().all(|r| r.mean == 1.0);
    let fit = if all_one { fit_line(&xs, &ys, None) } else { fit_line(&xs, &ys, Some(&ws)) };
    OneArmProfile {
        rate: fit.map(|f| f.slope),
        r2: fit.map(|f| f.r2),
        degenerate: fit.is_none() || all_one,
        records,
        dropped,
    }
}

/// P(some open cluster joins the two faces of `spec` across `axis`).
pub fn crossing_probability(spec: &LatticeSpec, params: &ParamPoint, axis: usize, n: u64, seed: u64) -> Result<EstimateRecord, ClusterError> {
    if axis >= spec.d() {
        return Err(ClusterError::Axis(axis));
    }
    if spec.axis(axis).bc != crate::lattice::Boundary::Free {
        return Err(ClusterError::PeriodicAxis(axis));
    }
    let m = sample_moments(n, |i| {
        let forest = build_clusters(&UniformField::new(seed, 0, i), spec, params, None, None);
        let spans = forest
            .components()
            .iter()
            .any(|&(r, _)| forest.touches_face(r, axis, 0) && forest.touches_face(r, axis, 1));
        if spans {
            1.0
        } else {
            0.0
        }
    });
    Ok(EstimateRecord::indicator("crossing", &m, seed, RecordMeta::of(spec, params).with_l(spec.axis(axis).len)))
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct UniquenessReport {
    /// Fraction of samples with exactly one large spanning cluster.
    pub unique: EstimateRecord,
    /// Mean number of large spanning clusters.
    pub mean_count: EstimateRecord,
    pub histogram: Vec<u64>,
}

/// Spanning clusters along `axis` with at least `min_fraction` of all vertices.
pub fn uniqueness(spec: &LatticeSpec, params: &ParamPoint, axis: usize, min_fraction: f64, n: u64, seed: u64) -> Result<UniquenessReport, ClusterError> {
    let min_size = (min_fraction * spec.num_vertices() as f64).ceil() as usize;
    let counts: Vec<Result<usize, ClusterError>> = map_samples(0, n, |i| {
        let forest = build_clusters(&UniformField::new(seed, 0, i), spec, params, None, None);
        Ok(spanning_sizes(&forest, spec, axis)?.iter().filter(|&&s| s >= min_size).count())
    });
    let counts: Vec<usize> = counts.into_iter().collect::<Result<_, _>>()?;
    let mut uniq = Moments::default();
    let mut cnt = Moments::default();
    let mut histogram = vec![0u64; counts.iter().copied().max().unwrap_or(0) + 1];
    for &c in &counts {
        uniq.push(if c == 1 { 1.0 } else { 0.0 });
        cnt.push(c as f64);
        histogram[c] += 1;
    }
    let meta = RecordMeta::of(spec, params).with_l(spec.axis(axis).len);
    Ok(UniquenessReport {
        unique: EstimateRecord::indicator("unique_spanning", &uniq, seed, meta),
        mean_count: EstimateRecord::numeric("spanning_count", &cnt, seed, meta),
        histogram,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TrifurcationScaling {
    pub records: Vec<EstimateRecord>,
    /// Log-log slope of the mean count against n.
    pub exponent: Option<f64>,
    pub r2: Option<f64>,
    /// Samples whose count exceeded |∂B_n|.
    pub bound_violations: u64,
    pub max_count: Vec<usize>,
}

/// Mean number of trifurcations in B_n for each n.
pub fn trifurcation_scaling(d: usize, s: usize, params: &ParamPoint, ns: &[usize], samples: u64, seed: u64) -> TrifurcationScaling {
    let mut records = Vec::new();
    let mut violations = 0u64;
    let mut max_count = Vec::new();
    for (j, &nn) in ns.iter().enumerate() {
        let spec = LatticeSpec::new(d, s, vec![Axis::centered(nn); d], ClassRule::DefectSublattice).expect("valid box");
        let bound = sphere_size(d, nn as u64) as usize;
        let counts = map_samples(0, samples, |i| find_trifurcations(&UniformField::new(seed, j as u64, i), &spec, params).count());
        let mut m = Moments::default();
        let mut mx = 0;
        for &c in &counts {
            if c > bound {
                violations += 1;
            }
            mx = mx.max(c);
            m.push(c as f64);
        }
        max_count.push(mx);
        records.push(EstimateRecord::numeric("trifurcations", &m, seed, RecordMeta::new(d, s, params).with_l(nn)));
    }
    let (xs, ys): (Vec<f64>, Vec<f64>) = records
        .iter()
        .zip(ns)
        .filter(|(r, _)| r.mean > 0.0)
        .map(|(r, &nn)| ((nn as f64).ln(), r.mean.ln()))
        .unzip();
    let fit = fit_line(&xs, &ys, None);
    TrifurcationScaling { records, exponent: fit.map(|f| f.slope), r2: fit.map(|f| f.r2), bound_violations: violations, max_count }
}

/// Mean of |C(Δ_v B_{n-1}; H)| / |B_n ∩ H| for each n.
pub fn boundary_ratio_profile(d: usize, s: usize, params: &ParamPoint, ns: &[usize], samples: u64, seed: u64) -> Vec<EstimateRecord> {
    ns.iter()
        .enumerate()
        .map(|(j, &nn)| {
            let spec = LatticeSpec::new(d, s, vec![Axis::centered(nn); d], ClassRule::DefectSublattice).expect("valid box");
            let m = sample_moments(samples, |i| crate::clusters::boundary_to_h_ratio(&UniformField::new(seed, j as u64, i), &spec, params));
            EstimateRecord::numeric("boundary_ratio", &m, seed, RecordMeta::new(d, s, params).with_l(nn))
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Representative {
    pub distance_to_h: usize,
    pub phi: f64,
    pub stderr: f64,
    pub upper: f64,
    pub record: EstimateRecord,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Certificate {
    #[serde(rename = "L")]
    pub l: usize,
    /// Smallest K with |∂B_m| <= K m^d for 1 <= m <= L.
    pub k_prime: f64,
    pub representatives: Vec<Representative>,
    pub holds: bool,
}

pub fn shell_constant(d: usize, l: usize) -> f64 {
    (1..=l as u64).map(|m| sphere_size(d, m) as f64 / (m as f64).powi(d as i32)).fold(0.0, f64::max)
}

/// Estimates φ_v = K' L^d E|S_L(v)| for one vertex at each distance 0..L from
/// H, where S_L(v) is the set of shell vertices of B_L(v) joined to v inside
/// the box. Holds when every upper 95% bound is below 1/2.
pub fn subcritical_certificate(d: usize, s: usize, rule: ClassRule, params: &ParamPoint, l: usize, n: u64, seed: u64) -> Certificate {
    assert!(l >= 1, "certificate needs L >= 1");
    let k_prime = shell_constant(d, l);
    let scale = k_prime * (l as f64).powi(d as i32);
    let li = l as i64;
    let mut representatives = Vec::new();
    for j in 0..=l {
        let mut v = [0i64; MAX_D];
        if s < d {
            v[d - 1] = j as i64;
        } else {
            v[0] = j as i64;
        }
        let bx = ZBox::ball(d, &v, li);
        let m = sample_moments_explorer(n, bx, |ex, i| {
            let view = ZView::new(UniformField::new(seed, 0, i), params, d, s, rule);
            let mut count = 0usize;
            ex.explore(&view, &[v], |_| true, |x| {
                if dist_from(x, &v) == li {
                    count += 1;
                }
            });
            count as f64
        });
        let record = EstimateRecord::numeric("shell_connections", &m, seed, RecordMeta::new(d, s, params).with_l(l));
        let phi = scale * record.mean;
        let stderr = scale * record.stderr;
        representatives.push(Representative { distance_to_h: j, phi, stderr, upper: phi + Z95 * stderr, record });
    }
    let holds = representatives.iter().all(|r| r.upper < 0.5);
    Certificate { l, k_prime, representatives, holds }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn kahan_and_moments() {
        let mut a = Accumulator::default();
        for _ in 0..10 {
            a.add(0.1);
        }
        assert_eq!(a.value(), 1.0);
        let mut m = Moments::default();
        for x in [1.0, 2.0, 3.0, 4.0] {
            m.push(x);
        }
        assert_eq!(m.mean(), 2.5);
        assert!((m.variance() - 5.0 / 3.0).abs() < 1e-12);
    }

    #[test]
    fn always_true_event() {
        let spec = LatticeSpec::cube(2, 1, 1, ClassRule::DefectSublattice).unwrap();
        let pp = ParamPoint::new(0.5, 0.5).unwrap();
        let r = estimate_event(&spec, &pp, "true", |_| true, 1000, 1, 0);
        assert_eq!((r.mean, r.stderr, r.ci_lo, r.ci_hi), (1.0, 0.0, 1.0, 1.0));
    }

    #[test]
    fn map_samples_keeps_order() {
        let v = map_samples(3, 10_000, |i| i);
        assert!(v.iter().enumerate().all(|(j, &i)| i == j as u64 + 3));
    }

    #[test]
    fn fit_exact_line() {
        let f = fit_line(&[1.0, 2.0, 3.0], &[2.0, 4.0, 6.0], None).unwrap();
        assert!((f.slope - 2.0).abs() < 1e-12 && f.intercept.abs() < 1e-12 && (f.r2 - 1.0).abs() < 1e-12);
        assert!(fit_line(&[1.0], &[1.0], None).is_none());
    }

    #[test]
    fn shell_constant_values() {
        assert_eq!(shell_constant(3, 4), 26.0);
        assert_eq!(shell_constant(2, 4), 8.0);
    }

    #[test]
    fn one_arm_extremes() {
        let one = ParamPoint::new(1.0, 1.0).unwrap();
        let prof = one_arm_profile(2, 1, ClassRule::DefectSublattice, &one, [0; MAX_D], &[1, 2, 3], 50, 3);
        assert!(prof.records.iter().all(|r| r.mean == 1.0));
        assert_eq!(prof.rate, Some(0.0));
        let zero = ParamPoint::new(0.0, 0.0).unwrap();
        let prof = one_arm_profile(2, 1, ClassRule::DefectSublattice, &zero, [0; MAX_D], &[1, 2, 3], 50, 3);
        assert!(prof.degenerate && prof.dropped == vec![1, 2, 3]);
    }

    #[test]
    fn certificate_extremes() {
        let c = subcritical_certificate(3, 2, ClassRule::DefectSublattice, &ParamPoint::new(0.0, 0.0).unwrap(), 2, 100, 1);
        assert!(c.holds && c.representatives.iter().all(|r| r.phi == 0.0));
        let c = subcritical_certificate(3, 2, ClassRule::DefectSublattice, &ParamPoint::new(1.0, 1.0).unwrap(), 2, 10, 1);
        assert!(!c.holds);
        let expect = 26.0 * 8.0 * sphere_size(3, 2) as f64;
        assert!(c.representatives.iter().all(|r| r.phi == expect));
    }

    #[test]
    fn crossing_extremes() {
        let spec = LatticeSpec::cube(2, 1, 3, ClassRule::DefectSublattice).unwrap();
        let one = crossing_probability(&spec, &ParamPoint::new(1.0, 1.0).unwrap(), 0, 20, 1).unwrap();
        let zero = crossing_probability(&spec, &ParamPoint::new(0.0, 0.0).unwrap(), 0, 20, 1).unwrap();
        assert_eq!((one.mean, zero.mean), (1.0, 0.0));
    }
}
