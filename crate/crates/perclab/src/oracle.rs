//! Exact computations on tiny instances by summing over all 2^|E|
//! configurations, plus checks of the FKG and BK inequalities and of the
//! mass-transport identity.

use rayon::prelude::*;
use serde::Serialize;
use thiserror::Error;

use crate::clusters::Dsu;
use crate::estimators::Accumulator;
use crate::field::{ParamPoint, UniformField};
use crate::lattice::{Boundary, LatticeSpec};

pub const MAX_EDGES: usize = 24;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum OracleError {
    #[error("{0} edges exceed the enumeration cap of {MAX_EDGES}")]
    TooManyEdges(usize),
    #[error("probability {0} outside [0,1]")]
    Probability(f64),
    #[error("mass transport needs a lattice periodic along every H axis")]
    NotPeriodic,
    #[error("vertex {0} is not in H")]
    NotInH(usize),
}

/// Explicit small graph with one Bernoulli parameter per edge.
#[derive(Debug, Clone, PartialEq)]
pub struct TinyInstance {
    pub n_vertices: usize,
    pub edges: Vec<(usize, usize)>,
    pub probs: Vec<f64>,
}

/// A configuration: bit `i` set iff edge `i` is open.
pub type Config = u32;

impl TinyInstance {
    pub fn new(n_vertices: usize, edges: Vec<(usize, usize)>, probs: Vec<f64>) -> Result<Self, OracleError> {
        if edges.len() > MAX_EDGES {
            return Err(OracleError::TooManyEdges(edges.len()));
        }
        if let Some(&p) = probs.iter().find(|p| !(0.0..=1.0).contains(*p)) {
            return Err(OracleError::Probability(p));
        }
        assert_eq!(edges.len(), probs.len(), "one probability per edge");
        Ok(TinyInstance { n_vertices, edges, probs })
    }

    /// All edges of a lattice with their class thresholds.
    pub fn from_lattice(spec: &LatticeSpec, params: &ParamPoint) -> Result<(Self, Vec<usize>), OracleError> {
        let slots: Vec<usize> = spec.edges().collect();
        if slots.len() > MAX_EDGES {
            return Err(OracleError::TooManyEdges(slots.len()));
        }
        let mut edges = Vec::new();
        let mut probs = Vec::new();
        for &e in &slots {
            let (v, w) = spec.endpoints(e).expect("existing edge");
            edges.push((v, w));
            probs.push(params.threshold(spec.classify_edge(e).expect("existing edge")));
        }
        Ok((TinyInstance::new(spec.num_vertices(), edges, probs)?, slots))
    }

    pub fn num_edges(&self) -> usize {
        self.edges.len()
    }

    pub fn weight(&self, cfg: Config) -> f64 {
        let mut w = 1.0;
        for (i, &p) in self.probs.iter().enumerate() {
            w *= if cfg >> i & 1 == 1 { p } else { 1.0 - p };
        }
        w
    }

    pub fn components(&self, cfg: Config) -> Dsu {
        let mut dsu = Dsu::new(self.n_vertices);
        for (i, &(a, b)) in self.edges.iter().enumerate() {
            if cfg >> i & 1 == 1 {
                dsu.union(a, b);
            }
        }
        dsu
    }

    pub fn connected(&self, cfg: Config, a: usize, b: usize) -> bool {
        let mut dsu = self.components(cfg);
        dsu.find(a) == dsu.find(b)
    }

    pub fn cluster_size(&self, cfg: Config, v: usize) -> usize {
        let mut dsu = self.components(cfg);
        let r = dsu.find(v);
        dsu.size_of_root(r)
    }
}

/// Kahan-compensated sum of `f(cfg) * weight(cfg)` over all configurations.
pub fn exact_expected(inst: &TinyInstance, functional: impl Fn(Config) -> f64 + Sync) -> Result<f64, OracleError> {
    let m = inst.num_edges();
    if m > MAX_EDGES {
        return Err(OracleError::TooManyEdges(m));
    }
    let total: u64 = 1 << m;
    let chunk: u64 = 1 << 12;
    let n_chunks = total.div_ceil(chunk);
    let parts: Vec<(f64, f64)> = (0..n_chunks)
        .into_par_iter()
        .map(|c| {
            let mut acc = Accumulator::default();
            for cfg in c * chunk..((c + 1) * chunk).min(total) {
                let v = functional(cfg as Config);
                if v != 0.0 {
                    acc.add(v * inst.weight(cfg as Config));
                }
            }
            acc.parts()
        })
        .collect();
    let mut acc = Accumulator::default();
    for (s, c) in parts {
        acc.add(s);
        acc.add(c);
    }
    Ok(acc.value())
}

pub fn exact_probability(inst: &TinyInstance, event: impl Fn(Config) -> bool + Sync) -> Result<f64, OracleError> {
    exact_expected(inst, |cfg| if event(cfg) { 1.0 } else { 0.0 })
}

/// P(a <-> b) by inclusion-exclusion over the self-avoiding a-b paths. This
/// shares nothing with the configuration sum and serves as a cross-check.
pub fn connection_probability_by_paths(inst: &TinyInstance, a: usize, b: usize) -> f64 {
    if a == b {
        return 1.0;
    }
    let mut adj = vec![Vec::new(); inst.n_vertices];
    for (i, &(x, y)) in inst.edges.iter().enumerate() {
        adj[x].push((y, i));
        adj[y].push((x, i));
    }
    let mut paths: Vec<u32> = Vec::new();
    let mut visited = vec![false; inst.n_vertices];
    fn dfs(v: usize, b: usize, mask: u32, adj: &[Vec<(usize, usize)>], visited: &mut [bool], out: &mut Vec<u32>) {
        if v == b {
            out.push(mask);
            return;
        }
        visited[v] = true;
        for &(w, i) in &adj[v] {
            if !visited[w] {
                dfs(w, b, mask | 1 << i, adj, visited, out);
            }
        }
        visited[v] = false;
    }
    dfs(a, b, 0, &adj, &mut visited, &mut paths);
    paths.sort_unstable();
    paths.dedup();
    assert!(paths.len() <= 22, "too many paths for inclusion-exclusion");
    let mut total = 0.0;
    for subset in 1u64..(1 << paths.len()) {
        let mut union = 0u32;
        for (j, &pm) in paths.iter().enumerate() {
            if subset >> j & 1 == 1 {
                union |= pm;
            }
        }
        let mut w = 1.0;
        for (i, &p) in inst.probs.iter().enumerate() {
            if union >> i & 1 == 1 {
                w *= p;
            }
        }
        if subset.count_ones() % 2 == 1 {
            total += w;
        } else {
            total -= w;
        }
    }
    total
}

/// Whether an event is increasing, checked by flipping single edges.
pub fn is_increasing(m: usize, event: &impl Fn(Config) -> bool) -> bool {
    (0..1u32 << m).all(|cfg| !event(cfg) || (0..m).all(|i| event(cfg | 1 << i)))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct InequalityCheck {
    pub lhs: f64,
    pub rhs: f64,
    pub holds: bool,
    /// Both inputs verified increasing by enumeration.
    pub increasing: bool,
}

/// E[fg] >= E[f] E[g].
pub fn verify_fkg(inst: &TinyInstance, f: impl Fn(Config) -> bool + Sync, g: impl Fn(Config) -> bool + Sync) -> Result<InequalityCheck, OracleError> {
    let increasing = is_increasing(inst.num_edges(), &f) && is_increasing(inst.num_edges(), &g);
    let lhs = exact_probability(inst, |c| f(c) && g(c))?;
    let rhs = exact_probability(inst, &f)? * exact_probability(inst, &g)?;
    Ok(InequalityCheck { lhs, rhs, holds: lhs >= rhs - 1e-12, increasing })
}

/// Disjoint occurrence: some open set K with `a(K)` and `b(open \ K)`.
pub fn disjoint_occurrence(cfg: Config, a: &impl Fn(Config) -> bool, b: &impl Fn(Config) -> bool) -> bool {
    let mut k = cfg;
    loop {
        if a(k) && b(cfg & !k) {
            return true;
        }
        if k == 0 {
            return false;
        }
        k = (k - 1) & cfg;
    }
}

/// P(A∘B) <= P(A) P(B).
pub fn verify_bk(inst: &TinyInstance, a: impl Fn(Config) -> bool + Sync, b: impl Fn(Config) -> bool + Sync) -> Result<InequalityCheck, OracleError> {
    let increasing = is_increasing(inst.num_edges(), &a) && is_increasing(inst.num_edges(), &b);
    let lhs = exact_probability(inst, |c| disjoint_occurrence(c, &a, &b))?;
    let rhs = exact_probability(inst, &a)? * exact_probability(inst, &b)?;
    Ok(InequalityCheck { lhs, rhs, holds: lhs <= rhs + 1e-12, increasing })
}

/// Edge probabilities `num[i] / den`, for integer-exact sums.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RationalProbs {
    pub num: Vec<u64>,
    pub den: u64,
}

impl RationalProbs {
    /// Σ_cfg 1{event} Π weights, in units of den^|E|.
    pub fn mass(&self, event: impl Fn(Config) -> bool) -> u128 {
        let m = self.num.len();
        let mut total: u128 = 0;
        for cfg in 0..1u32 << m {
            if event(cfg) {
                let mut w: u128 = 1;
                for (i, &a) in self.num.iter().enumerate() {
                    w *= if cfg >> i & 1 == 1 { a } else { self.den - a } as u128;
                }
                total += w;
            }
        }
        total
    }

    pub fn unit(&self) -> u128 {
        (self.den as u128).pow(self.num.len() as u32)
    }

    /// FKG in exact integer arithmetic: returns (lhs, rhs) scaled by den^(2|E|).
    pub fn fkg(&self, f: impl Fn(Config) -> bool, g: impl Fn(Config) -> bool) -> (u128, u128) {
        let fg = self.mass(|c| f(c) && g(c));
        (fg * self.unit(), self.mass(&f) * self.mass(&g))
    }

    /// BK in exact integer arithmetic: returns (lhs, rhs) scaled by den^(2|E|).
    pub fn bk(&self, a: impl Fn(Config) -> bool, b: impl Fn(Config) -> bool) -> (u128, u128) {
        let ab = self.mass(|c| disjoint_occurrence(c, &a, &b));
        (ab * self.unit(), self.mass(&a) * self.mass(&b))
    }
}

/// All up-sets of the Boolean lattice on `m` elements, as truth tables.
pub fn increasing_events(m: usize) -> Vec<u64> {
    assert!(m <= 5, "truth tables hold at most 2^6 bits");
    let n = 1usize << m;
    let mut out = Vec::new();
    // grow up-sets by adding configurations in decreasing popcount order
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by_key(|&c| std::cmp::Reverse((c as u32).count_ones()));
    fn rec(i: usize, set: u64, order: &[usize], m: usize, out: &mut Vec<u64>) {
        if i == order.len() {
            out.push(set);
            return;
        }
        let c = order[i];
        rec(i + 1, set, order, m, out);
        let closed_up = (0..m).all(|j| c >> j & 1 == 1 || set >> (c | 1 << j) & 1 == 1);
        if closed_up {
            rec(i + 1, set | 1 << c, order, m, out);
        }
    }
    rec(0, 0, &order, m, &mut out);
    out
}

/// FKG and BK over every ordered pair of increasing events on `num.len()`
/// edges, in exact integer arithmetic. Every connection event of a graph
/// with that many edges is one of these up-sets.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct ExhaustiveReport {
    pub edges: usize,
    pub events: usize,
    pub pairs: u64,
    pub fkg_failures: u64,
    pub bk_failures: u64,
}

impl ExhaustiveReport {
    pub fn holds(&self) -> bool {
        self.fkg_failures == 0 && self.bk_failures == 0
    }
}

/// Truth table of {x : x ⊇ c} for every configuration c.
fn up_closures(m: usize) -> Vec<u64> {
    let n = 1usize << m;
    (0..n).map(|c| (0..n).filter(|&x| x & c == c).fold(0u64, |acc, x| acc | 1 << x)).collect()
}

fn minimal_configs(event: u64, m: usize) -> Vec<usize> {
    (0..1usize << m)
        .filter(|&c| event >> c & 1 == 1 && (0..m).all(|i| c >> i & 1 == 0 || event >> (c & !(1 << i)) & 1 == 0))
        .collect()
}

/// A∘B for up-sets: the up-closure of K ∪ L over disjoint minimal K ∈ A, L ∈ B.
fn disjoint_table(min_a: &[usize], min_b: &[usize], up: &[u64]) -> u64 {
    let mut out = 0u64;
    for &k in min_a {
        for &l in min_b {
            if k & l == 0 {
                out |= up[k | l];
            }
        }
    }
    out
}

pub fn exhaustive_inequalities(probs: &RationalProbs) -> ExhaustiveReport {
    let m = probs.num.len();
    let events = increasing_events(m);
    let n = 1usize << m;
    // mass of a truth table, one lookup table per byte of it
    let weight: Vec<u128> = (0..n).map(|c| probs.mass(|x| x as usize == c)).collect();
    let tables: Vec<[u128; 256]> = (0..n.div_ceil(8))
        .map(|b| {
            let mut t = [0u128; 256];
            for (byte, slot) in t.iter_mut().enumerate() {
                *slot = (0..8).filter(|i| byte >> i & 1 == 1 && 8 * b + i < n).map(|i| weight[8 * b + i]).sum();
            }
            t
        })
        .collect();
    let mass = |mask: u64| -> u128 { tables.iter().enumerate().map(|(b, t)| t[(mask >> (8 * b) & 0xff) as usize]).sum() };
    let up = up_closures(m);
    let minimal: Vec<Vec<usize>> = events.iter().map(|&e| minimal_configs(e, m)).collect();
    let masses: Vec<u128> = events.iter().map(|&e| mass(e)).collect();
    let unit = probs.unit();
    let (fkg_failures, bk_failures) = (0..events.len())
        .into_par_iter()
        .map(|i| {
            let (mut f, mut b) = (0u64, 0u64);
            for j in 0..events.len() {
                let rhs = masses[i] * masses[j];
                if mass(events[i] & events[j]) * unit < rhs {
                    f += 1;
                }
                if mass(disjoint_table(&minimal[i], &minimal[j], &up)) * unit > rhs {
                    b += 1;
                }
            }
            (f, b)
        })
        .reduce(|| (0, 0), |a, b| (a.0 + b.0, a.1 + b.1));
    let k = events.len() as u64;
    ExhaustiveReport { edges: m, events: events.len(), pairs: k * k, fkg_failures, bk_failures }
}

/// A transport rule m(x, y, ω) for x, y in H, reported as the two flows at
/// one vertex: (Σ_y m(o,y), Σ_y m(y,o)).
pub trait Transport: Sync {
    fn flows(&self, spec: &LatticeSpec, open: &[bool], o: usize) -> (f64, f64);
}

fn h_clusters(spec: &LatticeSpec, open: &[bool]) -> Dsu {
    let mut dsu = Dsu::new(spec.num_vertices());
    for e in spec.edges() {
        if open[e] && spec.classify_edge(e).ok() == Some(crate::lattice::EdgeClass::H) {
            let (v, w) = spec.endpoints(e).expect("existing edge");
            dsu.union(v, w);
        }
    }
    dsu
}

/// m(x,y) = 1 when x and y lie in the same H-cluster. Symmetric.
pub struct SameHCluster;

impl Transport for SameHCluster {
    fn flows(&self, spec: &LatticeSpec, open: &[bool], o: usize) -> (f64, f64) {
        let mut dsu = h_clusters(spec, open);
        let ro = dsu.find(o);
        let mut out = 0.0;
        let mut inn = 0.0;
        for y in 0..spec.num_vertices() {
            if spec.vertex_in_h(y) && dsu.find(y) == ro {
                out += 1.0;
                inn += 1.0;
            }
        }
        (out, inn)
    }
}

/// m(x,y) = 1{x = y}.
pub struct Diagonal;

impl Transport for Diagonal {
    fn flows(&self, _: &LatticeSpec, _: &[bool], _: usize) -> (f64, f64) {
        (1.0, 1.0)
    }
}

/// m(x,y) = 1 when y is the unique vertex of the H-cluster of x that is
/// strictly closest, in open-path distance, to the top layer of the lattice.
pub struct NearestToTop;

impl NearestToTop {
    fn distances(spec: &LatticeSpec, open: &[bool]) -> Vec<u32> {
        let d = spec.d();
        let top = spec.axis(d - 1).hi();
        let nv = spec.num_vertices();
        let mut dist = vec![u32::MAX; nv];
        let mut queue = std::collections::VecDeque::new();
        for v in 0..nv {
            if spec.coords(v)[d - 1] == top {
                dist[v] = 0;
                queue.push_back(v);
            }
        }
        while let Some(v) = queue.pop_front() {
            for (e, w) in spec.incident(v) {
                if open[e] && dist[w] == u32::MAX {
                    dist[w] = dist[v] + 1;
                    queue.push_back(w);
                }
            }
        }
        dist
    }
}

impl Transport for NearestToTop {
    fn flows(&self, spec: &LatticeSpec, open: &[bool], o: usize) -> (f64, f64) {
        let mut dsu = h_clusters(spec, open);
        let dist = NearestToTop::distances(spec, open);
        let ro = dsu.find(o);
        let mut best = u32::MAX;
        let mut best_count = 0usize;
        let mut leader = usize::MAX;
        let mut size = 0usize;
        for y in 0..spec.num_vertices() {
            if !spec.vertex_in_h(y) || dsu.find(y) != ro {
                continue;
            }
            size += 1;
            if dist[y] < best {
                best = dist[y];
                best_count = 1;
                leader = y;
            } else if dist[y] == best {
                best_count += 1;
            }
        }
        if best == u32::MAX || best == 0 || best_count != 1 {
            return (0.0, 0.0);
        }
        let out = 1.0;
        let inn = if leader == o { size as f64 } else { 0.0 };
        (out, inn)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum MtpMode {
    Exact,
    MonteCarlo { samples: u64, seed: u64 },
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MtpResult {
    pub lhs: f64,
    pub rhs: f64,
    pub delta: f64,
    /// Standard error of `delta` (zero in exact mode).
    pub stderr: f64,
}

/// Σ_y E m(o,y) against Σ_y E m(y,o) at an H vertex `o` of a lattice that is
/// periodic along all H axes.
pub fn mass_transport_check(spec: &LatticeSpec, transport: &dyn Transport, params: &ParamPoint, o: usize, mode: MtpMode) -> Result<MtpResult, OracleError> {
    if (0..spec.s()).any(|k| spec.axis(k).bc != Boundary::Periodic) {
        return Err(OracleError::NotPeriodic);
    }
    if !spec.vertex_in_h(o) {
        return Err(OracleError::NotInH(o));
    }
    match mode {
        MtpMode::Exact => {
            let (inst, slots) = TinyInstance::from_lattice(spec, params)?;
            let open_of = |cfg: Config| {
                let mut open = vec![false; spec.num_edge_slots()];
                for (i, &e) in slots.iter().enumerate() {
                    open[e] = cfg >> i & 1 == 1;
                }
                open
            };
            let lhs = exact_expected(&inst, |cfg| transport.flows(spec, &open_of(cfg), o).0)?;
            let rhs = exact_expected(&inst, |cfg| transport.flows(spec, &open_of(cfg), o).1)?;
            Ok(MtpResult { lhs, rhs, delta: lhs - rhs, stderr: 0.0 })
        }
        MtpMode::MonteCarlo { samples, seed } => {
            let th = params.units();
            let d = spec.d();
            let rows: Vec<(f64, f64)> = (0..samples)
                .into_par_iter()
                .map(|i| {
                    let field = UniformField::new(seed, 0, i);
                    let mut open = vec![false; spec.num_edge_slots()];
                    spec.for_each_edge(|e, _, _, axis, class, base| {
                        open[e] = th.open(field.raw(base, d, axis), class);
                    });
                    transport.flows(spec, &open, o)
                })
                .collect();
            let n = samples as f64;
            let (mut sl, mut sr) = (Accumulator::default(), Accumulator::default());
            let mut diff = Accumulator::default();
            let mut diff2 = Accumulator::default();
            for &(a, b) in &rows {
                sl.add(a);
                sr.add(b);
                diff.add(a - b);
                diff2.add((a - b) * (a - b));
            }
            let mean = diff.value() / n;
            let var = (diff2.value() / n - mean * mean).max(0.0) * n / (n - 1.0).max(1.0);
            Ok(MtpResult { lhs: sl.value() / n, rhs: sr.value() / n, delta: mean, stderr: (var / n).sqrt() })
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn single_edge() {
        let inst = TinyInstance::new(2, vec![(0, 1)], vec![0.37]).unwrap();
        assert!((exact_probability(&inst, |c| c & 1 == 1).unwrap() - 0.37).abs() < 1e-15);
        assert!((exact_expected(&inst, |c| inst.cluster_size(c, 0) as f64).unwrap() - 1.37).abs() < 1e-15);
    }

    #[test]
    fn square_cycle_opposite_corners() {
        let p: f64 = 0.3;
        let inst = TinyInstance::new(4, vec![(0, 1), (1, 2), (2, 3), (3, 0)], vec![p; 4]).unwrap();
        let got = exact_probability(&inst, |c| inst.connected(c, 0, 2)).unwrap();
        assert!((got - (2.0 * p * p - p.powi(4))).abs() < 1e-15);
        assert!((connection_probability_by_paths(&inst, 0, 2) - got).abs() < 1e-15);
    }

    #[test]
    fn total_mass_is_one() {
        let inst = TinyInstance::new(5, (0..12).map(|i| (i % 5, (i + 1) % 5)).collect(), (0..12).map(|i| 0.05 + 0.07 * i as f64).collect()).unwrap();
        assert!((exact_probability(&inst, |_| true).unwrap() - 1.0).abs() < 1e-14);
    }

    #[test]
    fn closed_instance_cluster_is_one() {
        let inst = TinyInstance::new(4, vec![(0, 1), (1, 2), (2, 3)], vec![0.0; 3]).unwrap();
        assert_eq!(exact_expected(&inst, |c| inst.cluster_size(c, 0) as f64).unwrap(), 1.0);
    }

    #[test]
    fn too_many_edges() {
        let edges = vec![(0, 1); 25];
        assert_eq!(TinyInstance::new(2, edges, vec![0.5; 25]), Err(OracleError::TooManyEdges(25)));
    }

    #[test]
    fn dedekind_numbers() {
        let counts: Vec<usize> = (0..=4).map(|m| increasing_events(m).len()).collect();
        assert_eq!(counts, vec![2, 3, 6, 20, 168]);
    }

    #[test]
    fn exhaustive_matches_direct_bk() {
        let probs = RationalProbs { num: vec![1, 2, 4], den: 5 };
        let r = exhaustive_inequalities(&probs);
        assert_eq!((r.events, r.pairs), (20, 400));
        assert!(r.holds());
        // the shortcut for A∘B agrees with the subset search
        let up = up_closures(4);
        let events = increasing_events(4);
        for &a in &events {
            for &b in &events {
                let fa = |c: Config| a >> c & 1 == 1;
                let fb = |c: Config| b >> c & 1 == 1;
                let direct = (0..16u32).filter(|&c| disjoint_occurrence(c, &fa, &fb)).fold(0u64, |t, c| t | 1 << c);
                assert_eq!(disjoint_table(&minimal_configs(a, 4), &minimal_configs(b, 4), &up), direct);
            }
        }
    }

    #[test]
    fn bk_single_edge_twice() {
        let inst = TinyInstance::new(2, vec![(0, 1)], vec![0.6]).unwrap();
        let r = verify_bk(&inst, |c| c & 1 == 1, |c| c & 1 == 1).unwrap();
        assert_eq!(r.lhs, 0.0);
        assert!(r.holds && (r.rhs - 0.36).abs() < 1e-15);
    }

    #[test]
    fn disjoint_support_is_equality() {
        let inst = TinyInstance::new(4, vec![(0, 1), (2, 3)], vec![0.3, 0.8]).unwrap();
        let a = |c: Config| c & 1 == 1;
        let b = |c: Config| c & 2 == 2;
        let bk = verify_bk(&inst, a, b).unwrap();
        assert!((bk.lhs - bk.rhs).abs() < 1e-15);
        let fkg = verify_fkg(&inst, a, b).unwrap();
        assert!((fkg.lhs - fkg.rhs).abs() < 1e-15);
    }

    #[test]
    fn fkg_self_pair() {
        let inst = TinyInstance::new(3, vec![(0, 1), (1, 2)], vec![0.4, 0.7]).unwrap();
        let f = |c: Config| inst.connected(c, 0, 2);
        let r = verify_fkg(&inst, f, f).unwrap();
        assert!(r.holds && r.increasing);
    }

    #[test]
    fn non_increasing_flagged() {
        let inst = TinyInstance::new(2, vec![(0, 1)], vec![0.5]).unwrap();
        let r = verify_fkg(&inst, |c| c & 1 == 0, |c| c & 1 == 1).unwrap();
        assert!(!r.increasing);
    }

    #[test]
    fn mtp_needs_periodic() {
        let spec = LatticeSpec::slab(3, 2, 3, 1, false).unwrap();
        let pp = ParamPoint::new(0.5, 0.5).unwrap();
        assert_eq!(mass_transport_check(&spec, &Diagonal, &pp, 0, MtpMode::Exact), Err(OracleError::NotPeriodic));
    }
}
