//! Seed events around B_m^H: the sets U_n and V_n, reaching an open m-seed,
//! and the conditional finite-size event given closed boundary edges.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::field::{resample_conditionally_closed, threshold_units, ParamPoint, UniformField, ZView};
use crate::lattice::{in_h, sup_norm, ClassRule, Point, ZBox, ZEdge, MAX_D};

use super::{sample_moments, with_explorer, EstimateRecord, Moments, RecordMeta};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GmError {
    #[error("geometry: inner radius {inner} must exceed m={m}")]
    InnerRadius { inner: i64, m: i64 },
    #[error("geometry: annulus width {width} must exceed 2m+1={need}")]
    AnnulusWidth { width: i64, need: i64 },
    #[error("geometry: alpha and beta must be positive")]
    Scale,
    #[error("region must contain B_m^H")]
    RegionMissesSeedBox,
    #[error("region must lie inside the outer box")]
    RegionOutsideBox,
    #[error("region or its outer vertex boundary meets the target set T")]
    RegionMeetsTarget,
    #[error("levels must lie in [0, 1 - delta] (found {0})")]
    Level(f64),
    #[error("delta must lie in [0,1) (found {0})")]
    Delta(f64),
    #[error("this event kind has its own entry point")]
    Kind,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GmEventKind {
    UCount,
    VCount,
    SeedReach,
    FiniteSizeConditional,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GmEventSpec {
    pub alpha: f64,
    pub beta: f64,
    pub m: usize,
    pub n: usize,
    pub kind: GmEventKind,
}

/// Integer geometry of the annulus construction around the origin.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct GmGeometry {
    pub d: usize,
    pub s: usize,
    pub m: i64,
    /// βn
    pub inner: i64,
    /// αn
    pub width: i64,
}

fn scaled(x: f64, n: usize) -> i64 {
    (x * n as f64 + 1e-9).floor() as i64
}

impl GmGeometry {
    pub fn new(d: usize, s: usize, ev: &GmEventSpec) -> Result<Self, GmError> {
        if !(ev.alpha > 0.0 && ev.beta > 0.0) {
            return Err(GmError::Scale);
        }
        let g = GmGeometry { d, s, m: ev.m as i64, inner: scaled(ev.beta, ev.n), width: scaled(ev.alpha, ev.n) };
        if g.inner <= g.m {
            return Err(GmError::InnerRadius { inner: g.inner, m: g.m });
        }
        if ev.kind != GmEventKind::UCount && ev.kind != GmEventKind::VCount && g.width <= 2 * g.m + 1 {
            return Err(GmError::AnnulusWidth { width: g.width, need: 2 * g.m + 1 });
        }
        Ok(g)
    }

    /// βn + αn
    pub fn outer(&self) -> i64 {
        self.inner + self.width
    }

    pub fn outer_box(&self) -> ZBox {
        ZBox::ball(self.d, &[0; MAX_D], self.outer())
    }

    /// S: H-vertices with βn+1 <= |x| <= βn+αn.
    pub fn in_annulus(&self, x: &Point) -> bool {
        let r = sup_norm(x);
        in_h(x, self.d, self.s) && r > self.inner && r <= self.outer()
    }

    /// F = [βn+1, βn+αn] x [0, βn+αn]^(s-1) x {0}^(d-s).
    pub fn in_f(&self, x: &Point) -> bool {
        if !in_h(x, self.d, self.s) || x[0] <= self.inner || x[0] > self.outer() {
            return false;
        }
        (1..self.s).all(|k| x[k] >= 0 && x[k] <= self.outer())
    }

    /// T = Δ_v F ∩ B_{βn+αn}.
    pub fn in_t(&self, x: &Point) -> bool {
        sup_norm(x) <= self.outer() && !self.in_f(x) && crate::lattice::zd_neighbors(x, self.d).any(|y| self.in_f(&y))
    }

    /// B_m^H
    pub fn seed_box(&self) -> Vec<Point> {
        h_box(self.d, self.s, &[0; MAX_D], self.m)
    }

    /// Centers z with z + B_m^H inside F.
    pub fn seed_centers(&self) -> Vec<Point> {
        let mut lo = [0; MAX_D];
        let mut hi = [0; MAX_D];
        lo[0] = self.inner + 1 + self.m;
        hi[0] = self.outer() - self.m;
        for k in 1..self.s {
            lo[k] = self.m;
            hi[k] = self.outer() - self.m;
        }
        let bx = ZBox { lo, hi, d: self.d };
        if (0..self.d).any(|k| lo[k] > hi[k]) {
            return Vec::new();
        }
        bx.points()
    }
}

/// z + B_m^H
pub fn h_box(d: usize, s: usize, z: &Point, m: i64) -> Vec<Point> {
    let mut lo = *z;
    let mut hi = *z;
    for k in 0..s {
        lo[k] -= m;
        hi[k] += m;
    }
    ZBox { lo, hi, d }.points()
}

/// H-edges with both endpoints in z + B_m^H.
pub fn h_box_edges(d: usize, s: usize, z: &Point, m: i64) -> Vec<ZEdge> {
    let mut out = Vec::new();
    for x in h_box(d, s, z, m) {
        for k in 0..s {
            if x[k] < z[k] + m {
                out.push(ZEdge { base: x, axis: k as u8 });
            }
        }
    }
    out
}

/// Vertices of F covered by some open m-seed inside F, as a mask over the
/// outer box.
pub fn seed_cover(view: &ZView, g: &GmGeometry) -> Vec<bool> {
    let bx = g.outer_box();
    let mut cover = vec![false; bx.volume()];
    for z in g.seed_centers() {
        if h_box_edges(g.d, g.s, &z, g.m).iter().all(|e| view.open(e)) {
            for y in h_box(g.d, g.s, &z, g.m) {
                cover[bx.index(&y)] = true;
            }
        }
    }
    cover
}

/// One sample of |U_n|.
pub fn u_count(view: &ZView, g: &GmGeometry) -> usize {
    let bx = g.outer_box();
    let sources = g.seed_box();
    let mut count = 0;
    with_explorer(bx, |ex| {
        ex.explore(view, &sources, |x| !g.in_annulus(x), |x| {
            if crate::lattice::zd_neighbors(x, g.d).any(|y| g.in_annulus(&y)) {
                count += 1;
            }
        })
    });
    count
}

/// One sample of |V_n|.
pub fn v_count(view: &ZView, g: &GmGeometry) -> usize {
    let bx = g.outer_box();
    let sources = g.seed_box();
    let mut count = 0;
    with_explorer(bx, |ex| {
        ex.explore(view, &sources, |x| !g.in_f(x), |x| {
            if g.in_t(x) {
                count += 1;
            }
        })
    });
    count
}

fn reaches_seed(view: &ZView, g: &GmGeometry, cover: &[bool], x: &Point) -> bool {
    let bx = g.outer_box();
    g.in_t(x)
        && crate::lattice::zd_neighbors(x, g.d).any(|y| g.in_f(&y) && cover[bx.index(&y)] && view.open_between(x, &y))
}

/// One sample of {B_m^H <-> K_{m,n} inside B_{βn+αn}}.
pub fn seed_reach(view: &ZView, g: &GmGeometry) -> bool {
    let bx = g.outer_box();
    let cover = seed_cover(view, g);
    if !cover.iter().any(|&c| c) {
        return false;
    }
    let sources = g.seed_box();
    let mut hit = false;
    with_explorer(bx, |ex| {
        ex.explore(view, &sources, |_| true, |x| {
            if !hit && reaches_seed(view, g, &cover, x) {
                hit = true;
            }
        })
    });
    hit
}

/// Estimate of |U_n|, |V_n| or the seed-reach probability.
pub fn gm_seed_event(d: usize, s: usize, rule: ClassRule, params: &ParamPoint, ev: &GmEventSpec, n: u64, seed: u64) -> Result<EstimateRecord, GmError> {
    let g = GmGeometry::new(d, s, ev)?;
    let view_of = |i: u64| ZView::new(UniformField::new(seed, 0, i), params, d, s, rule);
    let meta = RecordMeta::new(d, s, params).with_l(ev.n);
    Ok(match ev.kind {
        GmEventKind::UCount => EstimateRecord::numeric("u_count", &sample_moments(n, |i| u_count(&view_of(i), &g) as f64), seed, meta),
        GmEventKind::VCount => EstimateRecord::numeric("v_count", &sample_moments(n, |i| v_count(&view_of(i), &g) as f64), seed, meta),
        GmEventKind::SeedReach => EstimateRecord::indicator(
            "seed_reach",
            &sample_moments(n, |i| if seed_reach(&view_of(i), &g) { 1.0 } else { 0.0 }),
            seed,
            meta,
        ),
        GmEventKind::FiniteSizeConditional => return Err(GmError::Kind),
    })
}

/// A region R around B_m^H with closedness levels on its outgoing edges.
#[derive(Debug, Clone, PartialEq)]
pub struct ConditionalInstance {
    pub geom: GmGeometry,
    pub region: Vec<Point>,
    /// Levels on Δ_eR ∩ E_B, sorted by edge.
    pub levels: Vec<(ZEdge, f64)>,
    pub delta: f64,
}

impl ConditionalInstance {
    /// Checks the hypotheses and attaches `level(f)` to every edge leaving R
    /// inside the outer box.
    pub fn new(geom: GmGeometry, mut region: Vec<Point>, level: impl Fn(&ZEdge) -> f64, delta: f64) -> Result<Self, GmError> {
        if !(0.0..1.0).contains(&delta) {
            return Err(GmError::Delta(delta));
        }
        region.sort_unstable();
        region.dedup();
        let inside = |x: &Point| region.binary_search(x).is_ok();
        if !geom.seed_box().iter().all(inside) {
            return Err(GmError::RegionMissesSeedBox);
        }
        let bx = geom.outer_box();
        if !region.iter().all(|x| bx.contains(x)) {
            return Err(GmError::RegionOutsideBox);
        }
        let mut levels = Vec::new();
        for x in &region {
            if geom.in_t(x) {
                return Err(GmError::RegionMeetsTarget);
            }
            for y in crate::lattice::zd_neighbors(x, geom.d) {
                if inside(&y) {
                    continue;
                }
                if geom.in_t(&y) {
                    return Err(GmError::RegionMeetsTarget);
                }
                if bx.contains(&y) {
                    let e = ZEdge::new(x, &y).expect("adjacent");
                    let g = level(&e);
                    if !(0.0..=1.0 - delta).contains(&g) {
                        return Err(GmError::Level(g));
                    }
                    levels.push((e, g));
                }
            }
        }
        levels.sort_by_key(|l| l.0);
        levels.dedup_by(|a, b| a.0 == b.0);
        Ok(ConditionalInstance { geom, region, levels, delta })
    }

    fn in_region(&self, x: &Point) -> bool {
        self.region.binary_search(x).is_ok()
    }

    /// E: some boundary edge f has `u(f) < level(f) + delta` and its outer
    /// endpoint reaches K_{m,n} by an open path avoiding R.
    pub fn event(&self, view: &ZView, boundary_u: impl Fn(usize) -> f64) -> bool {
        let g = &self.geom;
        let mut starts = Vec::new();
        for (j, (e, level)) in self.levels.iter().enumerate() {
            if boundary_u(j) < level + self.delta {
                let outer = if self.in_region(&e.base) { e.tip() } else { e.base };
                starts.push(outer);
            }
        }
        if starts.is_empty() {
            return false;
        }
        let cover = seed_cover(view, g);
        let mut hit = false;
        with_explorer(g.outer_box(), |ex| {
            ex.explore(view, &starts, |x| !self.in_region(x), |x| {
                if !hit && reaches_seed(view, g, &cover, x) {
                    hit = true;
                }
            })
        });
        hit
    }

    /// P(E | all boundary edges closed at their levels), sampled exactly by
    /// drawing the boundary variates from (level, 1).
    pub fn conditional(&self, params: &ParamPoint, rule: ClassRule, n: u64, seed: u64, stream: u64) -> EstimateRecord {
        let g = &self.geom;
        let m = sample_moments(n, |i| {
            let field = UniformField::new(seed, stream, i);
            let view = ZView::new(field, params, g.d, g.s, rule);
            let us: Vec<f64> = self
                .levels
                .iter()
                .map(|(e, level)| resample_conditionally_closed(&field, e, g.d, *level).expect("level < 1"))
                .collect();
            if self.event(&view, |j| us[j]) {
                1.0
            } else {
                0.0
            }
        });
        EstimateRecord::indicator("finite_size_conditional", &m, seed, RecordMeta::new(g.d, g.s, params))
    }

    /// Same probability by rejection: unconditioned draws, keeping only those
    /// where every boundary edge is closed at its level.
    pub fn rejection(&self, params: &ParamPoint, rule: ClassRule, draws: u64, seed: u64, stream: u64) -> EstimateRecord {
        let g = &self.geom;
        let d = g.d;
        let units: Vec<(u64, u64)> = self.levels.iter().map(|(_, l)| (threshold_units(*l), threshold_units(l + self.delta))).collect();
        let outcomes = super::map_samples(0, draws, |i| {
            let field = UniformField::new(seed, stream, i);
            let raws: Vec<u64> = self.levels.iter().map(|(e, _)| field.raw(&e.base, d, e.axis as usize) as u64).collect();
            if raws.iter().zip(&units).any(|(&r, &(closed_at, _))| r < closed_at) {
                return None;
            }
            let view = ZView::new(field, params, d, g.s, rule);
            // u < level + delta, on the 32-bit grid
            Some(self.event(&view, |j| if raws[j] < units[j].1 { f64::NEG_INFINITY } else { f64::INFINITY }))
        });
        let mut m = Moments::default();
        for hit in outcomes.into_iter().flatten() {
            m.push(if hit { 1.0 } else { 0.0 });
        }
        EstimateRecord::indicator("finite_size_rejection", &m, seed, RecordMeta::new(d, g.s, params))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn geom(m: usize, n: usize) -> GmGeometry {
        GmGeometry::new(3, 2, &GmEventSpec { alpha: 0.5, beta: 1.0, m, n, kind: GmEventKind::SeedReach }).unwrap()
    }

    #[test]
    fn geometry_checks() {
        let bad = GmEventSpec { alpha: 0.5, beta: 0.1, m: 1, n: 8, kind: GmEventKind::SeedReach };
        assert!(matches!(GmGeometry::new(3, 2, &bad), Err(GmError::InnerRadius { .. })));
        let narrow = GmEventSpec { alpha: 0.25, beta: 1.0, m: 1, n: 8, kind: GmEventKind::SeedReach };
        assert!(matches!(GmGeometry::new(3, 2, &narrow), Err(GmError::AnnulusWidth { .. })));
        let g = geom(1, 8);
        assert_eq!((g.inner, g.width, g.outer()), (8, 4, 12));
        assert!(g.in_f(&[9, 0, 0, 0, 0, 0]) && !g.in_f(&[8, 0, 0, 0, 0, 0]) && !g.in_f(&[9, -1, 0, 0, 0, 0]));
        assert!(g.in_t(&[8, 3, 0, 0, 0, 0]) && g.in_t(&[9, 3, 1, 0, 0, 0]) && g.in_t(&[9, -1, 0, 0, 0, 0]));
        assert_eq!(g.seed_centers().len(), 2 * 11);
    }

    #[test]
    fn extremes() {
        let ev = GmEventSpec { alpha: 0.5, beta: 1.0, m: 1, n: 8, kind: GmEventKind::SeedReach };
        let one = gm_seed_event(3, 2, ClassRule::DefectSublattice, &ParamPoint::new(1.0, 1.0).unwrap(), &ev, 20, 1).unwrap();
        assert_eq!(one.mean, 1.0);
        let zero = gm_seed_event(3, 2, ClassRule::DefectSublattice, &ParamPoint::new(0.0, 0.0).unwrap(), &ev, 20, 1).unwrap();
        assert_eq!(zero.mean, 0.0);
    }

    #[test]
    fn region_hypotheses() {
        let g = geom(1, 8);
        let small = vec![[0; MAX_D]];
        assert_eq!(ConditionalInstance::new(g, small, |_| 0.0, 0.1).unwrap_err(), GmError::RegionMissesSeedBox);
        let mut big = g.seed_box();
        big.push([7, 0, 0, 0, 0, 0]);
        assert_eq!(ConditionalInstance::new(g, big, |_| 0.0, 0.1).unwrap_err(), GmError::RegionMeetsTarget);
        let inst = ConditionalInstance::new(g, g.seed_box(), |_| 0.05, 0.1).unwrap();
        assert_eq!(inst.levels.len(), 30);
        assert!(ConditionalInstance::new(g, g.seed_box(), |_| 0.95, 0.1).is_err());
    }

    #[test]
    fn zero_delta_is_impossible() {
        let g = geom(1, 8);
        let inst = ConditionalInstance::new(g, g.seed_box(), |_| 0.05, 0.0).unwrap();
        let r = inst.conditional(&ParamPoint::new(1.0, 1.0).unwrap(), ClassRule::DefectSublattice, 200, 1, 0);
        assert_eq!(r.mean, 0.0);
    }
}
