//! Connected components of a configuration and the observables derived from
//! them: connections between vertex sets, spanning clusters, trifurcations.

use thiserror::Error;

use crate::field::{ParamPoint, UniformField};
use crate::lattice::{Boundary, EdgeClass, LatticeSpec, Point, Region};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ClusterError {
    #[error("axis {0} is periodic; spanning needs two opposite free faces")]
    PeriodicAxis(usize),
    #[error("axis {0} out of range")]
    Axis(usize),
}

const H_BIT: u32 = 1 << 31;

/// Union-find by size with path halving.
#[derive(Debug, Clone)]
pub struct Dsu {
    parent: Vec<u32>,
    size: Vec<u32>,
}

impl Dsu {
    pub fn new(n: usize) -> Self {
        Dsu { parent: (0..n as u32).collect(), size: vec![1; n] }
    }

    #[inline]
    pub fn find(&mut self, mut v: usize) -> usize {
        while self.parent[v] as usize != v {
            let gp = self.parent[self.parent[v] as usize];
            self.parent[v] = gp;
            v = gp as usize;
        }
        v
    }

    /// Root without compression.
    pub fn find_const(&self, mut v: usize) -> usize {
        while self.parent[v] as usize != v {
            v = self.parent[v] as usize;
        }
        v
    }

    /// Merge and return `(new root, absorbed root)`, or `None` if already joined.
    #[inline]
    pub fn union(&mut self, a: usize, b: usize) -> Option<(usize, usize)> {
        let (mut ra, mut rb) = (self.find(a), self.find(b));
        if ra == rb {
            return None;
        }
        if self.size[ra] < self.size[rb] {
            std::mem::swap(&mut ra, &mut rb);
        }
        self.parent[rb] = ra as u32;
        self.size[ra] += self.size[rb];
        Some((ra, rb))
    }

    pub fn size_of_root(&self, r: usize) -> usize {
        self.size[r] as usize
    }

    pub fn len(&self) -> usize {
        self.parent.len()
    }

    pub fn is_empty(&self) -> bool {
        self.parent.is_empty()
    }
}

/// Components of the open subgraph of a lattice restricted to a region.
#[derive(Debug, Clone)]
pub struct ClusterForest {
    dsu: Dsu,
    flags: Vec<u32>,
    active: Option<Vec<bool>>,
    components: usize,
    d: usize,
}

fn face_flags(spec: &LatticeSpec, x: &Point, region: Option<&Region>) -> u32 {
    let mut f = 0u32;
    for k in 0..spec.d() {
        let (lo, hi, free) = match region {
            Some(r) => (r.center[k] - r.radius[k], r.center[k] + r.radius[k], true),
            None => {
                let a = spec.axis(k);
                (a.lo, a.hi(), a.bc == Boundary::Free)
            }
        };
        if !free {
            continue;
        }
        if x[k] == lo {
            f |= 1 << (2 * k);
        }
        if x[k] == hi {
            f |= 1 << (2 * k + 1);
        }
    }
    f
}

impl ClusterForest {
    /// Build from an explicit openness rule `open(slot, base, axis, class)`.
    /// Only edges with both endpoints in `region` (when given) are used.
    pub fn build(
        spec: &LatticeSpec,
        region: Option<&Region>,
        mut open: impl FnMut(usize, &Point, usize, EdgeClass) -> bool,
    ) -> ClusterForest {
        let nv = spec.num_vertices();
        let d = spec.d();
        let mut flags = vec![0u32; nv];
        let mut active = region.map(|_| vec![false; nv]);
        let mut n_active = 0usize;
        for (v, fl) in flags.iter_mut().enumerate() {
            let x = spec.coords(v);
            if let (Some(r), Some(a)) = (region, active.as_mut()) {
                if !r.contains(&x) {
                    continue;
                }
                a[v] = true;
            }
            n_active += 1;
            *fl = face_flags(spec, &x, region) | if spec.vertex_in_h(v) { H_BIT } else { 0 };
        }
        let mut dsu = Dsu::new(nv);
        let mut components = n_active;
        spec.for_each_edge(|e, v, w, axis, class, base| {
            if let Some(a) = active.as_ref() {
                if !a[v] || !a[w] {
                    return;
                }
            }
            if open(e, base, axis, class) {
                if let Some((r, gone)) = dsu.union(v, w) {
                    flags[r] |= flags[gone];
                    components -= 1;
                }
            }
        });
        ClusterForest { dsu, flags, active, components, d }
    }

    pub fn is_active(&self, v: usize) -> bool {
        self.active.as_ref().is_none_or(|a| a[v])
    }

    pub fn find(&mut self, v: usize) -> usize {
        self.dsu.find(v)
    }

    pub fn root(&self, v: usize) -> usize {
        self.dsu.find_const(v)
    }

    pub fn connected(&self, a: usize, b: usize) -> bool {
        self.root(a) == self.root(b)
    }

    pub fn component_size(&self, v: usize) -> usize {
        self.dsu.size_of_root(self.root(v))
    }

    pub fn component_count(&self) -> usize {
        self.components
    }

    pub fn touches_h(&self, v: usize) -> bool {
        self.flags[self.root(v)] & H_BIT != 0
    }

    /// Whether the component of `v` meets the low (`side = 0`) or high face of `axis`.
    pub fn touches_face(&self, v: usize, axis: usize, side: usize) -> bool {
        self.flags[self.root(v)] & (1 << (2 * axis + side)) != 0
    }

    pub fn touches_boundary(&self, v: usize) -> bool {
        self.flags[self.root(v)] & !H_BIT != 0
    }

    /// Root and size of every component, in order of first vertex.
    pub fn components(&self) -> Vec<(usize, usize)> {
        (0..self.dsu.len())
            .filter(|&v| self.is_active(v) && self.dsu.find_const(v) == v)
            .map(|r| (r, self.dsu.size_of_root(r)))
            .collect()
    }

    pub fn dimension(&self) -> usize {
        self.d
    }

    /// Component sizes summed over active vertices (equals the active count).
    pub fn total_size(&self) -> usize {
        self.components().iter().map(|c| c.1).sum()
    }
}

pub fn build_clusters(
    field: &UniformField,
    spec: &LatticeSpec,
    params: &ParamPoint,
    region: Option<&Region>,
    edge_filter: Option<&dyn Fn(usize, EdgeClass) -> bool>,
) -> ClusterForest {
    let th = params.units();
    let d = spec.d();
    ClusterForest::build(spec, region, |e, base, axis, class| {
        if let Some(f) = edge_filter {
            if !f(e, class) {
                return false;
            }
        }
        th.open(field.raw(base, d, axis), class)
    })
}

/// C(S';S): members of `source` whose component meets `target`.
pub fn connected_to_set(forest: &ClusterForest, source: &[usize], target: &[usize]) -> Vec<usize> {
    let mut roots: Vec<usize> = target.iter().map(|&v| forest.root(v)).collect();
    roots.sort_unstable();
    roots.dedup();
    source.iter().copied().filter(|&v| roots.binary_search(&forest.root(v)).is_ok()).collect()
}

fn check_axis(forest: &ClusterForest, spec: &LatticeSpec, axis: usize) -> Result<(), ClusterError> {
    if axis >= forest.dimension() {
        return Err(ClusterError::Axis(axis));
    }
    if spec.axis(axis).bc == Boundary::Periodic {
        return Err(ClusterError::PeriodicAxis(axis));
    }
    Ok(())
}

/// Number of components touching both faces perpendicular to `axis`.
pub fn count_spanning_clusters(forest: &ClusterForest, spec: &LatticeSpec, axis: usize) -> Result<usize, ClusterError> {
    Ok(spanning_sizes(forest, spec, axis)?.len())
}

/// Sizes of the spanning components along `axis`, largest first.
pub fn spanning_sizes(forest: &ClusterForest, spec: &LatticeSpec, axis: usize) -> Result<Vec<usize>, ClusterError> {
    check_axis(forest, spec, axis)?;
    let mut out: Vec<usize> = forest
        .components()
        .into_iter()
        .filter(|&(r, _)| forest.touches_face(r, axis, 0) && forest.touches_face(r, axis, 1))
        .map(|(_, size)| size)
        .collect();
    out.sort_unstable_by(|a, b| b.cmp(a));
    Ok(out)
}

/// Open adjacency lists in compressed form.
#[derive(Debug, Clone)]
pub struct OpenGraph {
    start: Vec<u32>,
    adj: Vec<u32>,
}

impl OpenGraph {
    pub fn build(spec: &LatticeSpec, mut open: impl FnMut(usize, &Point, usize, EdgeClass) -> bool) -> Self {
        let nv = spec.num_vertices();
        let mut pairs = Vec::new();
        spec.for_each_edge(|e, v, w, axis, class, base| {
            if open(e, base, axis, class) {
                pairs.push((v as u32, w as u32));
            }
        });
        let mut deg = vec![0u32; nv + 1];
        for &(v, w) in &pairs {
            deg[v as usize] += 1;
            deg[w as usize] += 1;
        }
        let mut start = vec![0u32; nv + 1];
        for v in 0..nv {
            start[v + 1] = start[v] + deg[v];
        }
        let mut fill = start.clone();
        let mut adj = vec![0u32; 2 * pairs.len()];
        for &(v, w) in &pairs {
            adj[fill[v as usize] as usize] = w;
            fill[v as usize] += 1;
            adj[fill[w as usize] as usize] = v;
            fill[w as usize] += 1;
        }
        OpenGraph { start, adj }
    }

    pub fn from_field(field: &UniformField, spec: &LatticeSpec, params: &ParamPoint) -> Self {
        let th = params.units();
        let d = spec.d();
        OpenGraph::build(spec, |_, base, axis, class| th.open(field.raw(base, d, axis), class))
    }

    pub fn neighbors(&self, v: usize) -> &[u32] {
        &self.adj[self.start[v] as usize..self.start[v + 1] as usize]
    }

    pub fn degree(&self, v: usize) -> usize {
        (self.start[v + 1] - self.start[v]) as usize
    }

    pub fn num_vertices(&self) -> usize {
        self.start.len() - 1
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct TrifurcationReport {
    pub vertices: Vec<usize>,
    /// Boundary-touching pieces left after deleting each reported vertex's edges.
    pub arms: Vec<usize>,
}

impl TrifurcationReport {
    pub fn count(&self) -> usize {
        self.vertices.len()
    }
}

/// Vertices whose boundary-touching cluster splits into at least three
/// boundary-touching pieces once their incident edges are deleted. The
/// boundary is the set of vertices on a free face of the lattice.
pub fn trifurcations_of(spec: &LatticeSpec, graph: &OpenGraph) -> TrifurcationReport {
    let nv = spec.num_vertices();
    let on_face: Vec<bool> = (0..nv).map(|v| spec.on_free_face(v)).collect();
    let mut dsu = Dsu::new(nv);
    for v in 0..nv {
        for &w in graph.neighbors(v) {
            if (w as usize) > v {
                dsu.union(v, w as usize);
            }
        }
    }
    let mut root_touches = vec![false; nv];
    for v in 0..nv {
        if on_face[v] {
            let r = dsu.find(v);
            root_touches[r] = true;
        }
    }
    let mut stamp = vec![0u32; nv];
    let mut epoch = 0u32;
    let mut stack = Vec::new();
    let mut report = TrifurcationReport::default();
    for u in 0..nv {
        if graph.degree(u) < 3 || !root_touches[dsu.find(u)] {
            continue;
        }
        epoch += 1;
        stamp[u] = epoch;
        let mut arms = 0usize;
        for &w0 in graph.neighbors(u) {
            let w0 = w0 as usize;
            if stamp[w0] == epoch {
                continue;
            }
            stamp[w0] = epoch;
            stack.clear();
            stack.push(w0);
            let mut touches = false;
            while let Some(x) = stack.pop() {
                touches |= on_face[x];
                for &y in graph.neighbors(x) {
                    let y = y as usize;
                    if stamp[y] != epoch {
                        stamp[y] = epoch;
                        stack.push(y);
                    }
                }
            }
            if touches {
                arms += 1;
            }
        }
        if arms >= 3 {
            report.vertices.push(u);
            report.arms.push(arms);
        }
    }
    report
}

pub fn find_trifurcations(field: &UniformField, spec: &LatticeSpec, params: &ParamPoint) -> TrifurcationReport {
    trifurcations_of(spec, &OpenGraph::from_field(field, spec, params))
}

/// One sample of |C(Δ_v B_{n-1}; H)| / |B_n ∩ H| on the lattice B_n.
pub fn boundary_to_h_ratio(field: &UniformField, spec: &LatticeSpec, params: &ParamPoint) -> f64 {
    let forest = build_clusters(field, spec, params, None, None);
    let mut shell = 0usize;
    let mut h_count = 0usize;
    for v in 0..spec.num_vertices() {
        if spec.vertex_in_h(v) {
            h_count += 1;
        }
        if spec.on_free_face(v) && forest.touches_h(v) {
            shell += 1;
        }
    }
    if h_count == 0 {
        0.0
    } else {
        shell as f64 / h_count as f64
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lattice::{ClassRule, MAX_D};

    fn pt(c: &[i64]) -> Point {
        let mut x = [0; MAX_D];
        x[..c.len()].copy_from_slice(c);
        x
    }

    #[test]
    fn all_closed_and_all_open() {
        let spec = LatticeSpec::cube(2, 1, 3, ClassRule::DefectSublattice).unwrap();
        let f = UniformField::new(1, 0, 0);
        let closed = build_clusters(&f, &spec, &ParamPoint::new(0.0, 0.0).unwrap(), None, None);
        assert_eq!(closed.component_count(), spec.num_vertices());
        let open = build_clusters(&f, &spec, &ParamPoint::new(1.0, 1.0).unwrap(), None, None);
        assert_eq!(open.component_count(), 1);
        assert_eq!(count_spanning_clusters(&open, &spec, 0).unwrap(), 1);
        assert_eq!(count_spanning_clusters(&closed, &spec, 0).unwrap(), 0);
        assert_eq!(open.total_size(), spec.num_vertices());
    }

    #[test]
    fn two_lines_span_twice() {
        let spec = LatticeSpec::cube(2, 2, 3, ClassRule::DefectSublattice).unwrap();
        let forest = ClusterForest::build(&spec, None, |_, base, axis, _| axis == 0 && (base[1] == -2 || base[1] == 2));
        assert_eq!(count_spanning_clusters(&forest, &spec, 0).unwrap(), 2);
        assert_eq!(count_spanning_clusters(&forest, &spec, 1).unwrap(), 0);
    }

    #[test]
    fn periodic_axis_rejected() {
        let spec = LatticeSpec::slab(3, 2, 4, 1, true).unwrap();
        let forest = build_clusters(&UniformField::new(0, 0, 0), &spec, &ParamPoint::new(0.5, 0.5).unwrap(), None, None);
        assert_eq!(count_spanning_clusters(&forest, &spec, 0), Err(ClusterError::PeriodicAxis(0)));
        assert!(count_spanning_clusters(&forest, &spec, 2).is_ok());
    }

    #[test]
    fn connected_to_set_basics() {
        let spec = LatticeSpec::cube(2, 2, 2, ClassRule::DefectSublattice).unwrap();
        let forest = ClusterForest::build(&spec, None, |_, _, _, _| false);
        let s: Vec<usize> = vec![0, 1, 2];
        assert_eq!(connected_to_set(&forest, &s, &s), s);
        assert!(connected_to_set(&forest, &[5, 6], &[0]).is_empty());
    }

    #[test]
    fn plus_shape_is_single_trifurcation() {
        let spec = LatticeSpec::cube(2, 2, 3, ClassRule::DefectSublattice).unwrap();
        let g = OpenGraph::build(&spec, |_, base, axis, _| {
            (axis == 0 && base[1] == 0) || (axis == 1 && base[0] == 0)
        });
        let rep = trifurcations_of(&spec, &g);
        assert_eq!(rep.vertices, vec![spec.index_of(&pt(&[0, 0])).unwrap()]);
        assert_eq!(rep.arms, vec![4]);
    }

    #[test]
    fn straight_path_has_none() {
        let spec = LatticeSpec::cube(2, 2, 3, ClassRule::DefectSublattice).unwrap();
        let g = OpenGraph::build(&spec, |_, base, axis, _| axis == 0 && base[1] == 0);
        assert_eq!(trifurcations_of(&spec, &g).count(), 0);
    }

    #[test]
    fn region_restriction() {
        let spec = LatticeSpec::cube(2, 2, 3, ClassRule::DefectSublattice).unwrap();
        let region = Region::origin_ball(2, 1);
        let forest = ClusterForest::build(&spec, Some(&region), |_, _, _, _| true);
        assert_eq!(forest.component_count(), 1);
        assert_eq!(forest.total_size(), 9);
        let o = spec.index_of(&pt(&[0, 0])).unwrap();
        assert!(forest.touches_face(o, 0, 0) && forest.touches_face(o, 1, 1));
    }

    #[test]
    fn boundary_ratio_extremes() {
        let spec = LatticeSpec::cube(3, 2, 3, ClassRule::DefectSublattice).unwrap();
        let f = UniformField::new(0, 0, 0);
        // with every edge closed only the shell's own H vertices count
        assert_eq!(boundary_to_h_ratio(&f, &spec, &ParamPoint::new(0.0, 0.0).unwrap()), 24.0 / 49.0);
        let all = boundary_to_h_ratio(&f, &spec, &ParamPoint::new(1.0, 1.0).unwrap());
        assert!((all - (7f64.powi(3) - 125.0) / 49.0).abs() < 1e-12);
    }
}
