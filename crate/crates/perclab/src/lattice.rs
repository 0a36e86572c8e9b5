//! Finite pieces of the hypercubic lattice Z^d with a defect sublattice
//! H = Z^s x {0}^(d-s).
//!
//! Vertices are indexed mixed-radix (axis 0 fastest). An edge is addressed by
//! the slot `vertex * d + axis` and joins `vertex` to its successor along
//! `axis`. On a free axis the last layer has no successor, so some slots are
//! empty; `edge_exists` and `edges()` report which ones are real.

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Largest supported ambient dimension.
pub const MAX_D: usize = 6;

/// Absolute lattice coordinates; entries past `d` are zero.
pub type Point = [i64; MAX_D];

#[derive(Debug, Error, Clone, PartialEq)]
pub enum LatticeError {
    #[error("dimension d={0} outside 2..={MAX_D}")]
    Dimension(usize),
    #[error("defect dimension s={s} must satisfy 1 <= s <= d={d}")]
    DefectDimension { s: usize, d: usize },
    #[error("expected {expected} axes, got {got}")]
    AxisCount { expected: usize, got: usize },
    #[error("axis {axis}: length must be >= 1")]
    EmptyAxis { axis: usize },
    #[error("axis {axis}: periodic axes need length >= 3")]
    ShortPeriodic { axis: usize },
    #[error("edge slot {0} does not exist")]
    Edge(usize),
    #[error("vertex {0} out of range")]
    Vertex(usize),
    #[error("lattice too large ({0} vertices)")]
    TooLarge(u128),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Boundary {
    Free,
    Periodic,
}

/// How edges are assigned to parameter classes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ClassRule {
    /// Edges inside H use q; the rest split into plus/minus by the last coordinate.
    DefectSublattice,
    /// Axis-0 edges use p, every other axis uses q.
    AxisDirection,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EdgeClass {
    H,
    Bulk,
    Plus,
    Minus,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Axis {
    pub lo: i64,
    pub len: usize,
    pub bc: Boundary,
}

impl Axis {
    pub fn free(lo: i64, len: usize) -> Self {
        Axis { lo, len, bc: Boundary::Free }
    }

    /// `{-r..r}` with free ends.
    pub fn centered(r: usize) -> Self {
        Axis::free(-(r as i64), 2 * r + 1)
    }

    pub fn periodic(lo: i64, len: usize) -> Self {
        Axis { lo, len, bc: Boundary::Periodic }
    }

    pub fn hi(&self) -> i64 {
        self.lo + self.len as i64 - 1
    }
}

pub fn in_h(x: &Point, d: usize, s: usize) -> bool {
    x[s..d].iter().all(|&c| c == 0)
}

/// Class of the edge `{x, y}` where `y` differs from `x` along `axis`.
pub fn classify_points(x: &Point, y: &Point, axis: usize, d: usize, s: usize, rule: ClassRule) -> EdgeClass {
    match rule {
        ClassRule::AxisDirection => {
            if axis == 0 {
                EdgeClass::Bulk
            } else {
                EdgeClass::H
            }
        }
        ClassRule::DefectSublattice => {
            if in_h(x, d, s) && in_h(y, d, s) {
                EdgeClass::H
            } else if x[d - 1].max(y[d - 1]) > 0 {
                EdgeClass::Plus
            } else {
                EdgeClass::Minus
            }
        }
    }
}

pub fn sup_norm(x: &Point) -> i64 {
    x.iter().map(|c| c.abs()).max().unwrap_or(0)
}

/// |∂B_m| = |B_m \ B_{m-1}| in Z^d.
pub fn sphere_size(d: usize, m: u64) -> u64 {
    if m == 0 {
        return 1;
    }
    (2 * m + 1).pow(d as u32) - (2 * m - 1).pow(d as u32)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LatticeSpec {
    d: usize,
    s: usize,
    axes: Vec<Axis>,
    rule: ClassRule,
    #[serde(skip)]
    stride: Vec<usize>,
    #[serde(skip)]
    nv: usize,
}

impl LatticeSpec {
    pub fn new(d: usize, s: usize, axes: Vec<Axis>, rule: ClassRule) -> Result<Self, LatticeError> {
        if !(2..=MAX_D).contains(&d) {
            return Err(LatticeError::Dimension(d));
        }
        if s < 1 || s > d {
            return Err(LatticeError::DefectDimension { s, d });
        }
        if axes.len() != d {
            return Err(LatticeError::AxisCount { expected: d, got: axes.len() });
        }
        let mut stride = Vec::with_capacity(d);
        let mut total: u128 = 1;
        for (k, a) in axes.iter().enumerate() {
            if a.len == 0 {
                return Err(LatticeError::EmptyAxis { axis: k });
            }
            if a.bc == Boundary::Periodic && a.len < 3 {
                return Err(LatticeError::ShortPeriodic { axis: k });
            }
            stride.push(total as usize);
            total *= a.len as u128;
            if total > u32::MAX as u128 / 8 {
                return Err(LatticeError::TooLarge(total));
            }
        }
        Ok(LatticeSpec { d, s, axes, rule, stride, nv: total as usize })
    }

    /// The box B_r = {-r..r}^d with free boundary.
    pub fn cube(d: usize, s: usize, r: usize, rule: ClassRule) -> Result<Self, LatticeError> {
        LatticeSpec::new(d, s, vec![Axis::centered(r); d], rule)
    }

    /// `Z^s`-part of extent `len` along each of the first `s` axes (free or
    /// periodic), times `{-thick..thick}` on the remaining axes with free ends.
    pub fn slab(d: usize, s: usize, len: usize, thick: usize, periodic_h: bool) -> Result<Self, LatticeError> {
        let mut axes = Vec::with_capacity(d);
        for k in 0..d {
            if k < s {
                axes.push(if periodic_h { Axis::periodic(0, len) } else { Axis::free(0, len) });
            } else {
                axes.push(Axis::centered(thick));
            }
        }
        LatticeSpec::new(d, s, axes, ClassRule::DefectSublattice)
    }

    /// Rebuild the derived tables after deserialization.
    pub fn validated(self) -> Result<Self, LatticeError> {
        LatticeSpec::new(self.d, self.s, self.axes, self.rule)
    }

    pub fn d(&self) -> usize {
        self.d
    }
    pub fn s(&self) -> usize {
        self.s
    }
    pub fn rule(&self) -> ClassRule {
        self.rule
    }
    pub fn axes(&self) -> &[Axis] {
        &self.axes
    }
    pub fn axis(&self, k: usize) -> &Axis {
        &self.axes[k]
    }
    pub fn num_vertices(&self) -> usize {
        self.nv
    }
    /// Size of the edge slot space (`|V| * d`), including empty slots.
    pub fn num_edge_slots(&self) -> usize {
        self.nv * self.d
    }

    pub fn num_edges(&self) -> usize {
        let mut total = 0usize;
        for k in 0..self.d {
            let a = &self.axes[k];
            let per_line = match a.bc {
                Boundary::Free => a.len - 1,
                Boundary::Periodic => a.len,
            };
            total += self.nv / a.len * per_line;
        }
        total
    }

    pub fn coords(&self, v: usize) -> Point {
        let mut x = [0i64; MAX_D];
        let mut rem = v;
        for k in 0..self.d {
            let len = self.axes[k].len;
            x[k] = self.axes[k].lo + (rem % len) as i64;
            rem /= len;
        }
        x
    }

    /// Index of an absolute point, wrapping periodic axes.
    pub fn index_of(&self, x: &Point) -> Option<usize> {
        let mut v = 0usize;
        for k in 0..self.d {
            let a = &self.axes[k];
            let mut off = x[k] - a.lo;
            if a.bc == Boundary::Periodic {
                off = off.rem_euclid(a.len as i64);
            } else if off < 0 || off >= a.len as i64 {
                return None;
            }
            v += off as usize * self.stride[k];
        }
        Some(v)
    }

    pub fn contains(&self, x: &Point) -> bool {
        self.index_of(x).is_some()
    }

    pub fn offset(&self, v: usize, k: usize) -> usize {
        (v / self.stride[k]) % self.axes[k].len
    }

    /// Neighbor of `v` one step along `axis` in direction `dir` (+1 or -1).
    pub fn neighbor(&self, v: usize, axis: usize, dir: i8) -> Option<usize> {
        let a = &self.axes[axis];
        let off = self.offset(v, axis);
        let st = self.stride[axis];
        if dir > 0 {
            if off + 1 < a.len {
                Some(v + st)
            } else if a.bc == Boundary::Periodic {
                Some(v - off * st)
            } else {
                None
            }
        } else if off > 0 {
            Some(v - st)
        } else if a.bc == Boundary::Periodic {
            Some(v + (a.len - 1) * st)
        } else {
            None
        }
    }

    pub fn edge_slot(&self, v: usize, axis: usize) -> usize {
        v * self.d + axis
    }

    pub fn edge_exists(&self, e: usize) -> bool {
        if e >= self.num_edge_slots() {
            return false;
        }
        let (v, axis) = (e / self.d, e % self.d);
        self.neighbor(v, axis, 1).is_some()
    }

    pub fn endpoints(&self, e: usize) -> Result<(usize, usize), LatticeError> {
        if e >= self.num_edge_slots() {
            return Err(LatticeError::Edge(e));
        }
        let (v, axis) = (e / self.d, e % self.d);
        match self.neighbor(v, axis, 1) {
            Some(w) => Ok((v, w)),
            None => Err(LatticeError::Edge(e)),
        }
    }

    /// Slot of the edge joining two adjacent vertices.
    pub fn edge_between(&self, v: usize, w: usize) -> Option<usize> {
        for axis in 0..self.d {
            if self.neighbor(v, axis, 1) == Some(w) {
                return Some(self.edge_slot(v, axis));
            }
            if self.neighbor(w, axis, 1) == Some(v) {
                return Some(self.edge_slot(w, axis));
            }
        }
        None
    }

    /// Iterator over all existing edge slots in increasing order.
    pub fn edges(&self) -> impl Iterator<Item = usize> + '_ {
        (0..self.num_edge_slots()).filter(move |&e| self.edge_exists(e))
    }

    /// Edge slots incident to `v`, as (slot, other endpoint).
    pub fn incident(&self, v: usize) -> impl Iterator<Item = (usize, usize)> + '_ {
        (0..self.d).flat_map(move |axis| {
            let up = self.neighbor(v, axis, 1).map(|w| (self.edge_slot(v, axis), w));
            let down = self.neighbor(v, axis, -1).map(|w| (self.edge_slot(w, axis), w));
            // a periodic axis of length >= 3 never yields the same edge twice
            up.into_iter().chain(down)
        })
    }

    pub fn vertex_in_h(&self, v: usize) -> bool {
        in_h(&self.coords(v), self.d, self.s)
    }

    pub fn classify_edge(&self, e: usize) -> Result<EdgeClass, LatticeError> {
        let (v, w) = self.endpoints(e)?;
        let axis = e % self.d;
        Ok(classify_points(&self.coords(v), &self.coords(w), axis, self.d, self.s, self.rule))
    }

    /// Visit every edge once as `(slot, v, w, axis, class, base)`, walking the
    /// vertices in index order with an incremental coordinate counter.
    pub fn for_each_edge(&self, mut f: impl FnMut(usize, usize, usize, usize, EdgeClass, &Point)) {
        let d = self.d;
        let mut x = [0i64; MAX_D];
        let mut off = [0usize; MAX_D];
        for k in 0..d {
            x[k] = self.axes[k].lo;
        }
        let last = d - 1;
        for v in 0..self.nv {
            let base_h = in_h(&x, d, self.s);
            for axis in 0..d {
                let a = &self.axes[axis];
                let (w, wrapped) = if off[axis] + 1 < a.len {
                    (v + self.stride[axis], false)
                } else if a.bc == Boundary::Periodic {
                    (v - off[axis] * self.stride[axis], true)
                } else {
                    continue;
                };
                let class = match self.rule {
                    ClassRule::AxisDirection => {
                        if axis == 0 {
                            EdgeClass::Bulk
                        } else {
                            EdgeClass::H
                        }
                    }
                    ClassRule::DefectSublattice => {
                        let tip_last = if axis == last {
                            if wrapped {
                                a.lo
                            } else {
                                x[last] + 1
                            }
                        } else {
                            x[last]
                        };
                        if axis < self.s && base_h {
                            EdgeClass::H
                        } else if x[last].max(tip_last) > 0 {
                            EdgeClass::Plus
                        } else {
                            EdgeClass::Minus
                        }
                    }
                };
                f(v * d + axis, v, w, axis, class, &x);
            }
            for k in 0..d {
                off[k] += 1;
                x[k] += 1;
                if off[k] < self.axes[k].len {
                    break;
                }
                off[k] = 0;
                x[k] = self.axes[k].lo;
            }
        }
    }

    /// True when `v` sits on a face of a free axis.
    pub fn on_free_face(&self, v: usize) -> bool {
        (0..self.d).any(|k| {
            let a = &self.axes[k];
            let o = self.offset(v, k);
            a.bc == Boundary::Free && (o == 0 || o + 1 == a.len)
        })
    }

    /// Translate by `shift` along the H axes; `None` if the image leaves the lattice.
    pub fn translate(&self, v: usize, shift: &Point) -> Option<usize> {
        let mut x = self.coords(v);
        for k in 0..self.d {
            x[k] += shift[k];
        }
        self.index_of(&x)
    }
}

/// A box `{center + x : |x_k| <= radius_k}`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Region {
    pub center: Point,
    pub radius: Vec<i64>,
}

impl Region {
    /// B_m(v).
    pub fn ball(d: usize, center: Point, m: i64) -> Self {
        Region { center, radius: vec![m; d] }
    }

    pub fn origin_ball(d: usize, m: i64) -> Self {
        Region::ball(d, [0; MAX_D], m)
    }

    pub fn contains(&self, x: &Point) -> bool {
        self.radius.iter().enumerate().all(|(k, &r)| (x[k] - self.center[k]).abs() <= r)
    }

    /// Vertices of the region that lie in `spec`.
    pub fn vertices(&self, spec: &LatticeSpec) -> Vec<usize> {
        (0..spec.num_vertices()).filter(|&v| self.contains(&spec.coords(v))).collect()
    }

    /// A lattice with exactly the region's vertices and free boundary.
    pub fn as_lattice(&self, s: usize, rule: ClassRule) -> Result<LatticeSpec, LatticeError> {
        let d = self.radius.len();
        let axes = (0..d)
            .map(|k| Axis::free(self.center[k] - self.radius[k], (2 * self.radius[k] + 1).max(1) as usize))
            .collect();
        LatticeSpec::new(d, s, axes, rule)
    }

    /// Shell ∂B_m(v) = B_m(v) \ B_{m-1}(v) (radius taken from axis 0).
    pub fn on_shell(&self, x: &Point) -> bool {
        let d = self.radius.len();
        let m = self.radius[0];
        let dist = (0..d).map(|k| (x[k] - self.center[k]).abs()).max().unwrap_or(0);
        dist == m
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct BoundarySets {
    pub interior: Vec<usize>,
    pub exterior_v: Vec<usize>,
    pub exterior_e: Vec<usize>,
}

/// ∂K, Δ_vK and Δ_eK of a vertex set `k_set` in the lattice, optionally
/// restricted to a subgraph given by an edge predicate.
pub fn boundary_sets(spec: &LatticeSpec, k_set: &[usize], subgraph: Option<&dyn Fn(usize) -> bool>) -> BoundarySets {
    let mut in_k = vec![false; spec.num_vertices()];
    for &v in k_set {
        in_k[v] = true;
    }
    let mut interior = Vec::new();
    let mut ext_v = vec![false; spec.num_vertices()];
    let mut ext_e = Vec::new();
    for &v in k_set {
        let mut on_boundary = false;
        for (e, w) in spec.incident(v) {
            if let Some(keep) = subgraph {
                if !keep(e) {
                    continue;
                }
            }
            if !in_k[w] {
                on_boundary = true;
                ext_v[w] = true;
                ext_e.push(e);
            }
        }
        if on_boundary {
            interior.push(v);
        }
    }
    interior.sort_unstable();
    interior.dedup();
    ext_e.sort_unstable();
    ext_e.dedup();
    let exterior_v = (0..spec.num_vertices()).filter(|&v| ext_v[v]).collect();
    BoundarySets { interior, exterior_v, exterior_e: ext_e }
}

/// B_m^H: region vertices whose coordinates vanish on axes s..d.
pub fn sublattice_intersection(spec: &LatticeSpec, region: &Region) -> Vec<usize> {
    region.vertices(spec).into_iter().filter(|&v| spec.vertex_in_h(v)).collect()
}

/// An edge of Z^d given by its lower endpoint and axis.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct ZEdge {
    pub base: Point,
    pub axis: u8,
}

impl ZEdge {
    pub fn new(x: &Point, y: &Point) -> Option<ZEdge> {
        let mut axis = None;
        for k in 0..MAX_D {
            match y[k] - x[k] {
                0 => {}
                1 | -1 if axis.is_none() => axis = Some(k),
                _ => return None,
            }
        }
        let k = axis?;
        let base = if y[k] > x[k] { *x } else { *y };
        Some(ZEdge { base, axis: k as u8 })
    }

    pub fn tip(&self) -> Point {
        let mut y = self.base;
        y[self.axis as usize] += 1;
        y
    }

    pub fn has_endpoint(&self, x: &Point) -> bool {
        self.base == *x || self.tip() == *x
    }

    pub fn class(&self, d: usize, s: usize, rule: ClassRule) -> EdgeClass {
        classify_points(&self.base, &self.tip(), self.axis as usize, d, s, rule)
    }
}

/// The 2d neighbors of a point of Z^d.
pub fn zd_neighbors(x: &Point, d: usize) -> impl Iterator<Item = Point> + '_ {
    (0..2 * d).map(move |j| {
        let mut y = *x;
        y[j / 2] += if j % 2 == 0 { 1 } else { -1 };
        y
    })
}

/// Axis-aligned box of Z^d given by inclusive per-axis bounds.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ZBox {
    pub lo: Point,
    pub hi: Point,
    pub d: usize,
}

impl ZBox {
    pub fn ball(d: usize, center: &Point, r: i64) -> Self {
        let mut lo = [0; MAX_D];
        let mut hi = [0; MAX_D];
        for k in 0..d {
            lo[k] = center[k] - r;
            hi[k] = center[k] + r;
        }
        ZBox { lo, hi, d }
    }

    pub fn contains(&self, x: &Point) -> bool {
        (0..self.d).all(|k| self.lo[k] <= x[k] && x[k] <= self.hi[k])
    }

    pub fn contains_edge(&self, e: &ZEdge) -> bool {
        self.contains(&e.base) && self.contains(&e.tip())
    }

    pub fn volume(&self) -> usize {
        (0..self.d).map(|k| (self.hi[k] - self.lo[k] + 1).max(0) as usize).product()
    }

    /// Dense index of a contained point.
    pub fn index(&self, x: &Point) -> usize {
        let mut v = 0usize;
        let mut st = 1usize;
        for k in 0..self.d {
            v += (x[k] - self.lo[k]) as usize * st;
            st *= (self.hi[k] - self.lo[k] + 1) as usize;
        }
        v
    }

    pub fn intersects(&self, other: &ZBox) -> bool {
        (0..self.d).all(|k| self.lo[k] <= other.hi[k] && other.lo[k] <= self.hi[k])
    }

    pub fn points(&self) -> Vec<Point> {
        let mut out = Vec::with_capacity(self.volume());
        if self.volume() == 0 {
            return out;
        }
        let mut x = self.lo;
        loop {
            out.push(x);
            let mut k = 0;
            loop {
                if k == self.d {
                    return out;
                }
                if x[k] < self.hi[k] {
                    x[k] += 1;
                    break;
                }
                x[k] = self.lo[k];
                k += 1;
            }
        }
    }
}
