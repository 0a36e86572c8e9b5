//! Block renormalization onto the oriented graph {x in Z+ x Z : x1 + x2 even}.
//!
//! A site x is occupied when a chain of seed-to-seed connections, each found
//! inside a box around the current seed, runs from a seed in the block of x
//! to seeds in the blocks of x + (1, 1) and x + (1, -1). Every step looks at
//! fresh edges only through the per-edge levels `gamma <= U < zeta`, which
//! record what the exploration has learned about each variate.

use rustc_hash::{FxHashMap, FxHashSet};
use serde::Serialize;
use thiserror::Error;

use crate::field::{threshold_units, ParamPoint, ZView};
use crate::lattice::{in_h, ClassRule, EdgeClass, Point, ZBox, ZEdge, MAX_D};

const SCALE: f64 = 4294967296.0;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum RenormError {
    #[error("configuration: {0}")]
    Config(String),
    #[error("phase {phase}, step {step}: explored region meets the target set")]
    Hypothesis { phase: u8, step: usize },
    #[error("phase {phase}, step {step}: seed constraint violated ({what})")]
    Constraint { phase: u8, step: usize, what: &'static str },
}

/// Which steering rule to apply.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum SteerMode {
    /// Flip coordinates 2..s toward the reference.
    Straight,
    /// As `Straight` on coordinates 3..s, then rotate the first plane by -pi/2.
    Turn,
    /// Negate coordinate 2 and steer coordinates 3..s.
    Reflect,
}

#[inline]
fn sgn(x: i64) -> i64 {
    if x < 0 {
        -1
    } else {
        1
    }
}

/// σ_v(x) (composed with the plane rotation in `Turn` mode), with sgn(0) = +1.
pub fn steering(v: &Point, x: &Point, s: usize, mode: SteerMode) -> Point {
    let mut y = *x;
    let first_steered = if mode == SteerMode::Straight { 1 } else { 2 };
    for i in first_steered..s {
        y[i] = -sgn(v[i]) * x[i];
    }
    match mode {
        SteerMode::Straight => y,
        SteerMode::Reflect => {
            y[1] = -x[1];
            y
        }
        SteerMode::Turn => {
            let (a, b) = (y[0], y[1]);
            y[0] = b;
            y[1] = -a;
            y
        }
    }
}

/// A signed permutation: local axis i goes to `sign[i] * e_{perm[i]}`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct Frame {
    pub perm: [usize; MAX_D],
    pub sign: [i64; MAX_D],
}

impl Frame {
    pub fn identity() -> Self {
        Frame { perm: [0, 1, 2, 3, 4, 5], sign: [1; MAX_D] }
    }

    pub fn apply(&self, x: &Point) -> Point {
        let mut y = [0; MAX_D];
        for i in 0..MAX_D {
            y[self.perm[i]] += self.sign[i] * x[i];
        }
        y
    }

    /// Growth along `axis` with `dir`, the other plane axis steered toward
    /// `reference`, axes 2..s steered toward 0.
    fn growth(axis: usize, dir: i64, b: &Point, reference: &Point, s: usize) -> Self {
        let mut f = Frame::identity();
        let other = 1 - axis;
        f.perm[0] = axis;
        f.sign[0] = dir;
        f.perm[1] = other;
        f.sign[1] = -sgn(b[other] - reference[other]);
        for i in 2..s {
            f.sign[i] = -sgn(b[i]);
        }
        f
    }

    /// The map x -> σ_b(x) (or -σ_b(x)) for a steering mode, as a frame.
    fn from_steering(b: &Point, s: usize, mode: SteerMode, negate: bool) -> Self {
        let mut f = Frame::identity();
        for i in 0..MAX_D {
            let mut e = [0; MAX_D];
            e[i] = 1;
            let img = steering(b, &e, s, mode);
            let k = (0..MAX_D).find(|&k| img[k] != 0).expect("signed permutation");
            f.perm[i] = k;
            f.sign[i] = if negate { -img[k] } else { img[k] };
        }
        f
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct RenormConfig {
    pub d: usize,
    pub s: usize,
    pub m: usize,
    pub n: usize,
    pub alpha: f64,
    /// Scale of the straight, turning and wide-turning boxes.
    pub betas: [f64; 3],
    pub delta: f64,
    /// Step budgets for phases 2, 3, 4, 5, 6, 7, 8, 9.
    pub budgets: [usize; 8],
    /// Return an error instead of recording when a step's explored region
    /// meets its target set.
    pub strict: bool,
    /// Site threshold of the oriented graph, for reporting the target λ.
    pub p_site: f64,
}

impl RenormConfig {
    /// Small geometry that runs in milliseconds.
    pub fn desk() -> Self {
        let alpha = 0.5;
        RenormConfig {
            d: 3,
            s: 2,
            m: 1,
            n: 8,
            alpha,
            betas: [1.0, 2.0, 2.0 + alpha + alpha * alpha],
            delta: 0.1,
            budgets: [9, 2, 12, 1, 13, 24, 1, 13],
            strict: false,
            p_site: 0.7055,
        }
    }

    /// Parameters at which the desk geometry occupies the origin in roughly
    /// one run out of five.
    pub fn desk_params() -> ParamPoint {
        ParamPoint { p: 0.15, q: 0.95, t: None }
    }

    /// Reference constants: α = 1/100, β = (1, 2, 2+α+α²), δ = η/16.
    pub fn reference(d: usize, s: usize, m: usize, n: usize, eta: f64) -> Self {
        let alpha = 0.01;
        RenormConfig {
            d,
            s,
            m,
            n,
            alpha,
            betas: [1.0, 2.0, 2.0 + alpha + alpha * alpha],
            delta: eta / 16.0,
            budgets: [9, 2, 12, 1, 13, 24, 1, 13],
            strict: false,
            p_site: 0.7055,
        }
    }

    pub fn is_reference_geometry(&self) -> bool {
        (self.alpha - 0.01).abs() < 1e-12 && (self.betas[0] - 1.0).abs() < 1e-12 && (self.betas[1] - 2.0).abs() < 1e-12
    }

    pub fn validate(&self) -> Result<(), RenormError> {
        if self.s < 2 || self.s > self.d || self.d > MAX_D {
            return Err(RenormError::Config(format!("need 2 <= s <= d <= {MAX_D}")));
        }
        if self.width() <= 2 * self.m as i64 + 1 {
            return Err(RenormError::Config(format!("alpha*n = {} must exceed 2m+1 = {}", self.width(), 2 * self.m + 1)));
        }
        if self.scaled(self.betas[0]) <= self.m as i64 {
            return Err(RenormError::Config("beta*n must exceed m".into()));
        }
        if !(0.0..=1.0).contains(&self.delta) {
            return Err(RenormError::Config("delta must lie in [0,1]".into()));
        }
        Ok(())
    }

    fn scaled(&self, x: f64) -> i64 {
        (x * self.n as f64 + 1e-9).floor() as i64
    }

    /// αn
    pub fn width(&self) -> i64 {
        self.scaled(self.alpha)
    }

    pub fn n_i(&self) -> i64 {
        self.n as i64
    }

    /// Half-width of a site block, N = 6n.
    pub fn block(&self) -> i64 {
        6 * self.n as i64
    }

    /// Target λ = (1 + p_site) / 2.
    pub fn lambda_target(&self) -> f64 {
        0.5 * (1.0 + self.p_site)
    }
}

/// Geometry of one step: seeds are sought in the face block
/// F = [βn+1, βn+αn] x [0, βn+αn]^(s-1) x {0} of the box of radius βn+αn.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
struct StepGeom {
    inner: i64,
    width: i64,
    m: i64,
    d: usize,
    s: usize,
}

impl StepGeom {
    fn outer(&self) -> i64 {
        self.inner + self.width
    }

    fn in_f(&self, x: &Point) -> bool {
        in_h(x, self.d, self.s) && x[0] > self.inner && x[0] <= self.outer() && (1..self.s).all(|k| x[k] >= 0 && x[k] <= self.outer())
    }

    fn in_t(&self, x: &Point) -> bool {
        (0..self.d).all(|k| x[k].abs() <= self.outer())
            && !self.in_f(x)
            && crate::lattice::zd_neighbors(x, self.d).any(|y| self.in_f(&y))
    }

    fn t_points(&self) -> Vec<Point> {
        let mut lo = [0; MAX_D];
        let mut hi = [0; MAX_D];
        lo[0] = self.inner;
        hi[0] = self.outer();
        for k in 1..self.s {
            lo[k] = -1;
            hi[k] = self.outer();
        }
        for k in self.s..self.d {
            lo[k] = -1;
            hi[k] = 1;
        }
        ZBox { lo, hi, d: self.d }.points().into_iter().filter(|x| self.in_t(x)).collect()
    }

    fn seed_centers_containing(&self, y: &Point) -> Vec<Point> {
        let mut out = Vec::new();
        let lo0 = (self.inner + 1 + self.m).max(y[0] - self.m);
        let hi0 = (self.outer() - self.m).min(y[0] + self.m);
        let mut lo = *y;
        let mut hi = *y;
        lo[0] = lo0;
        hi[0] = hi0;
        for k in 1..self.s {
            lo[k] = self.m.max(y[k] - self.m);
            hi[k] = (self.outer() - self.m).min(y[k] + self.m);
        }
        if (0..self.d).any(|k| lo[k] > hi[k]) {
            return out;
        }
        out.extend(ZBox { lo, hi, d: self.d }.points());
        out
    }
}

fn vkey(x: &Point) -> u128 {
    const OFF: i64 = 1 << 19;
    let mut k = 0u128;
    for (i, &c) in x.iter().enumerate() {
        debug_assert!(c.abs() < OFF);
        k |= (((c + OFF) as u128) & 0xF_FFFF) << (20 * i);
    }
    k
}

fn ekey(e: &ZEdge) -> u128 {
    (vkey(&e.base) << 3) | e.axis as u128
}

fn unkey_edge(k: u128) -> ZEdge {
    const OFF: i64 = 1 << 19;
    let axis = (k & 7) as u8;
    let v = k >> 3;
    let mut base = [0; MAX_D];
    for (i, b) in base.iter_mut().enumerate() {
        *b = ((v >> (20 * i)) & 0xF_FFFF) as i64 - OFF;
    }
    ZEdge { base, axis }
}

fn h_box(d: usize, s: usize, z: &Point, m: i64) -> Vec<Point> {
    crate::estimators::h_box(d, s, z, m)
}

/// Bookkeeping violations found while updating the levels.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize)]
pub struct Violations {
    /// gamma decreased or zeta increased.
    pub monotone: u64,
    /// gamma <= U < zeta failed.
    pub bracket: u64,
    /// A step's explored region (or its outer boundary) met the target set.
    pub hypothesis: u64,
    /// A new seed broke the growth constraints.
    pub constraint: u64,
}

impl Violations {
    pub fn add(&mut self, o: &Violations) {
        self.monotone += o.monotone;
        self.bracket += o.bracket;
        self.hypothesis += o.hypothesis;
        self.constraint += o.constraint;
    }

    pub fn bookkeeping_clean(&self) -> bool {
        self.monotone == 0 && self.bracket == 0
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TraceRecord {
    pub site: (i64, i64),
    pub phase: u8,
    pub step: usize,
    pub center: Vec<i64>,
    pub radius: i64,
    pub success: bool,
    pub seed: Option<Vec<i64>>,
    pub edges_touched: usize,
    pub hypothesis_ok: bool,
}

/// Exploration ledger shared by all site determinations of one trajectory.
#[derive(Debug, Clone)]
pub struct RenormState {
    pub cfg: RenormConfig,
    pub params: ParamPoint,
    gamma: FxHashMap<u128, f64>,
    zeta: FxHashMap<u128, f64>,
    inspections: FxHashMap<u128, u32>,
    explored: FxHashSet<u128>,
    verts: FxHashSet<u128>,
    /// Explored vertices bucketed by their first two coordinates.
    cells: FxHashMap<(i64, i64), Vec<Point>>,
    /// Steps performed so far.
    pub k: usize,
    pub trace: Vec<TraceRecord>,
    pub violations: Violations,
    /// Edges touched since the last call to `take_touched`.
    touched: FxHashSet<u128>,
    site: (i64, i64),
}

struct StepOutcome {
    seed: Option<Point>,
}

impl RenormState {
    pub fn new(cfg: RenormConfig, params: ParamPoint) -> Result<Self, RenormError> {
        cfg.validate()?;
        Ok(RenormState {
            cfg,
            params,
            gamma: FxHashMap::default(),
            zeta: FxHashMap::default(),
            inspections: FxHashMap::default(),
            explored: FxHashSet::default(),
            verts: FxHashSet::default(),
            cells: FxHashMap::default(),
            k: 0,
            trace: Vec::new(),
            violations: Violations::default(),
            touched: FxHashSet::default(),
            site: (0, 0),
        })
    }

    pub fn gamma(&self, e: &ZEdge) -> f64 {
        self.gamma.get(&ekey(e)).copied().unwrap_or(0.0)
    }

    pub fn zeta(&self, e: &ZEdge) -> f64 {
        self.zeta.get(&ekey(e)).copied().unwrap_or(1.0)
    }

    pub fn inspections(&self, e: &ZEdge) -> u32 {
        self.inspections.get(&ekey(e)).copied().unwrap_or(0)
    }

    pub fn max_inspections(&self) -> u32 {
        self.inspections.values().copied().max().unwrap_or(0)
    }

    pub fn is_explored(&self, e: &ZEdge) -> bool {
        self.explored.contains(&ekey(e))
    }

    pub fn explored_edges(&self) -> impl Iterator<Item = ZEdge> + '_ {
        self.explored.iter().map(|&k| unkey_edge(k))
    }

    pub fn explored_count(&self) -> usize {
        self.explored.len()
    }

    pub fn in_cluster(&self, x: &Point) -> bool {
        self.verts.contains(&vkey(x))
    }

    fn take_touched(&mut self) -> FxHashSet<u128> {
        std::mem::take(&mut self.touched)
    }

    fn threshold(&self, class: EdgeClass) -> f64 {
        self.params.threshold(class)
    }

    fn u_of(view: &ZView, e: &ZEdge) -> f64 {
        view.raw(e) as f64 / SCALE
    }

    /// Write new levels for `e`, checking monotonicity and the bracket.
    fn set_levels(&mut self, view: &ZView, e: &ZEdge, gamma: f64, zeta: f64) {
        let key = ekey(e);
        let (g0, z0) = (self.gamma(e), self.zeta(e));
        if gamma < g0 || zeta > z0 {
            self.violations.monotone += 1;
        }
        let u = Self::u_of(view, e);
        if !(gamma <= u && u < zeta) {
            self.violations.bracket += 1;
        }
        if gamma != g0 || zeta != z0 {
            *self.inspections.entry(key).or_insert(0) += 1;
            self.touched.insert(key);
        }
        if gamma != 0.0 {
            self.gamma.insert(key, gamma);
        } else {
            self.gamma.remove(&key);
        }
        if zeta != 1.0 {
            self.zeta.insert(key, zeta);
        } else {
            self.zeta.remove(&key);
        }
    }

    fn add_vertex(&mut self, x: &Point) {
        if self.verts.insert(vkey(x)) {
            self.cells.entry(cell_of(x)).or_default().push(*x);
        }
    }

    fn add_explored(&mut self, e: &ZEdge) {
        self.explored.insert(ekey(e));
        self.add_vertex(&e.base);
        self.add_vertex(&e.tip());
        self.touched.insert(ekey(e));
    }

    fn vertices_in(&self, bx: &ZBox) -> Vec<Point> {
        let (lo, hi) = (cell_of(&bx.lo), cell_of(&bx.hi));
        let mut out = Vec::new();
        for a in lo.0..=hi.0 {
            for b in lo.1..=hi.1 {
                if let Some(v) = self.cells.get(&(a, b)) {
                    out.extend(v.iter().filter(|x| bx.contains(x)));
                }
            }
        }
        out
    }

    /// Phase 1: the edges of B_m^H around `center` must all be q-open.
    pub fn start_seed(&mut self, view: &ZView, center: &Point) -> bool {
        let (d, s, m) = (self.cfg.d, self.cfg.s, self.cfg.m as i64);
        let edges = crate::estimators::h_box_edges(d, s, center, m);
        let ok = edges.iter().all(|e| view.open(e));
        self.k += 1;
        if ok {
            for e in &edges {
                let z = self.params.q.min(self.zeta(e));
                self.set_levels(view, e, self.gamma(e), z);
                self.add_explored(e);
            }
            self.add_vertex(center);
        }
        self.trace.push(TraceRecord {
            site: self.site,
            phase: 1,
            step: self.k,
            center: center[..d].to_vec(),
            radius: m,
            success: ok,
            seed: ok.then(|| center[..d].to_vec()),
            edges_touched: if ok { edges.len() } else { 0 },
            hypothesis_ok: true,
        });
        ok
    }

    /// One application of the finite-size step: box b + B_{βn+αn}, target
    /// b + M(K) for the frame M.
    fn step(&mut self, view: &ZView, phase: u8, b: &Point, frame: &Frame, inner: i64) -> Result<StepOutcome, RenormError> {
        let cfg = self.cfg;
        let (d, s) = (cfg.d, cfg.s);
        let g = StepGeom { inner, width: cfg.width(), m: cfg.m as i64, d, s };
        let radius = g.outer();
        let dbox = ZBox::ball(d, b, radius);
        let to_global = |x: &Point| {
            let y = frame.apply(x);
            let mut z = *b;
            for k in 0..d {
                z[k] += y[k];
            }
            z
        };
        self.k += 1;
        let touched_before = self.touched.len();

        // target set, and the hypothesis (R ∪ Δ_v R) ∩ T = ∅
        let t_global: Vec<Point> = g.t_points().iter().map(to_global).collect();
        let hypothesis_ok = !t_global
            .iter()
            .any(|t| self.in_cluster(t) || crate::lattice::zd_neighbors(t, d).any(|y| self.in_cluster(&y)));
        if !hypothesis_ok {
            self.violations.hypothesis += 1;
            if cfg.strict {
                return Err(RenormError::Hypothesis { phase, step: self.k });
            }
        }

        // boundary edges of the explored set inside the box
        let mut boundary: Vec<u128> = Vec::new();
        for v in self.vertices_in(&dbox) {
            for (w, e) in incident(&v, d) {
                if dbox.contains(&w) {
                    let k = ekey(&e);
                    if !self.explored.contains(&k) {
                        boundary.push(k);
                    }
                }
            }
        }
        let boundary = sorted_edges(boundary);

        let delta = cfg.delta;
        let mut opened: Vec<ZEdge> = Vec::new();
        let mut stay_closed: Vec<ZEdge> = Vec::new();
        let mut starts: Vec<Point> = Vec::new();
        for e in &boundary {
            if Self::u_of(view, e) < self.gamma(e) + delta {
                opened.push(*e);
                for x in [e.base, e.tip()] {
                    if !self.in_cluster(&x) {
                        starts.push(x);
                    }
                }
            } else {
                stay_closed.push(*e);
            }
        }

        // open paths from the new endpoints, avoiding the explored vertices
        let mut reached: FxHashSet<u128> = FxHashSet::default();
        let mut stack: Vec<Point> = Vec::new();
        for x in &starts {
            if reached.insert(vkey(x)) {
                stack.push(*x);
            }
        }
        let mut new_open: Vec<u128> = Vec::new();
        let mut new_closed: Vec<u128> = Vec::new();
        while let Some(x) = stack.pop() {
            for (y, e) in incident(&x, d) {
                if !dbox.contains(&y) || self.in_cluster(&y) {
                    continue;
                }
                if view.open(&e) {
                    new_open.push(ekey(&e));
                    if reached.insert(vkey(&y)) {
                        stack.push(y);
                    }
                } else {
                    new_closed.push(ekey(&e));
                }
            }
        }
        let new_open = sorted_edges(new_open);
        let new_closed = sorted_edges(new_closed);

        // level updates
        for e in &opened {
            let g0 = self.gamma(e);
            let z = (g0 + delta).min(self.zeta(e));
            self.set_levels(view, e, g0, z);
        }
        for e in &stay_closed {
            let g0 = self.gamma(e);
            self.set_levels(view, e, g0 + delta, self.zeta(e));
        }
        for e in &new_open {
            let t = self.threshold(view.class(e));
            self.set_levels(view, e, self.gamma(e), t.min(self.zeta(e)));
        }
        for e in &new_closed {
            let t = self.threshold(view.class(e));
            self.set_levels(view, e, self.gamma(e).max(t), self.zeta(e));
        }
        for e in opened.iter().chain(&new_open) {
            self.add_explored(e);
        }

        // success: an explored vertex in T joined by an open edge to a q-open seed in F
        // earliest seed in lexicographic order of the step's own coordinates
        let mut best: Option<Point> = None;
        let local_of = |z: &Point| {
            // inverse of to_global
            let mut rel = [0; MAX_D];
            for k in 0..d {
                rel[k] = z[k] - b[k];
            }
            let mut x = [0; MAX_D];
            for i in 0..MAX_D {
                x[i] = frame.sign[i] * rel[frame.perm[i]];
            }
            x
        };
        for t in &t_global {
            if !self.in_cluster(t) {
                continue;
            }
            for y in crate::lattice::zd_neighbors(t, d) {
                let yl = local_of(&y);
                if !g.in_f(&yl) || !view.open_between(t, &y) {
                    continue;
                }
                for zl in g.seed_centers_containing(&yl) {
                    if best.is_some_and(|bl| bl <= zl) {
                        continue;
                    }
                    if crate::estimators::h_box_edges(d, s, &to_global(&zl), g.m).iter().all(|e| view.open(e)) {
                        best = Some(zl);
                    }
                }
            }
        }
        let best = best.map(|zl| to_global(&zl));
        let edges_touched = self.touched.len() - touched_before;
        self.trace.push(TraceRecord {
            site: self.site,
            phase,
            step: self.k,
            center: b[..d].to_vec(),
            radius,
            success: best.is_some(),
            seed: best.map(|z| z[..d].to_vec()),
            edges_touched,
            hypothesis_ok,
        });
        Ok(StepOutcome { seed: best })
    }

    /// Repeated straight steps along `axis` in direction `dir`, steering the
    /// other plane axis toward `reference`, until `stop` holds or the budget
    /// runs out.
    #[allow(clippy::too_many_arguments)]
    fn grow(
        &mut self,
        view: &ZView,
        phase: u8,
        start: Point,
        axis: usize,
        dir: i64,
        reference: &Point,
        budget: usize,
        stop: impl Fn(&Point) -> bool,
    ) -> Result<Option<Point>, RenormError> {
        let cfg = self.cfg;
        let inner = cfg.scaled(cfg.betas[0]);
        let reach = inner + cfg.width();
        let mut b = start;
        for _ in 0..budget {
            if stop(&b) {
                return Ok(Some(b));
            }
            let frame = Frame::growth(axis, dir, &b, reference, cfg.s);
            let Some(nb) = self.step(view, phase, &b, &frame, inner)?.seed else {
                return Ok(None);
            };
            let other = 1 - axis;
            let adv = dir * (nb[axis] - b[axis]);
            let ok_adv = adv > inner && adv <= reach;
            let dev_old = (b[other] - reference[other]).abs();
            let dev_new = (nb[other] - reference[other]).abs();
            let ok_dev = dev_new <= dev_old.max(reach);
            let ok_h = in_h(&nb, cfg.d, cfg.s);
            if !(ok_adv && ok_dev && ok_h) {
                self.violations.constraint += 1;
                if cfg.strict {
                    return Err(RenormError::Constraint { phase, step: self.k, what: "growth step" });
                }
            }
            b = nb;
        }
        Ok(if stop(&b) { Some(b) } else { None })
    }

    fn turn(&mut self, view: &ZView, phase: u8, b: &Point, mode: SteerMode, negate: bool, beta: f64) -> Result<Option<Point>, RenormError> {
        let frame = Frame::from_steering(b, self.cfg.s, mode, negate);
        let inner = self.cfg.scaled(beta);
        Ok(self.step(view, phase, b, &frame, inner)?.seed)
    }

    /// Upward mirror of the reflecting turn: x2 kept, coordinates 3..s steered.
    fn mirror_turn(&mut self, view: &ZView, b: &Point) -> Result<Option<Point>, RenormError> {
        let mut frame = Frame::identity();
        for i in 2..self.cfg.s {
            frame.sign[i] = -sgn(b[i]);
        }
        let inner = self.cfg.scaled(self.cfg.betas[1]);
        Ok(self.step(view, 8, b, &frame, inner)?.seed)
    }

    /// Shortest path through explored edges between two vertex sets,
    /// if one exists.
    pub fn explored_path(&self, from: &[Point], to: &[Point]) -> Option<Vec<ZEdge>> {
        let d = self.cfg.d;
        let targets: FxHashSet<u128> = to.iter().map(vkey).collect();
        let mut prev: FxHashMap<u128, Option<(Point, ZEdge)>> = FxHashMap::default();
        let mut queue = std::collections::VecDeque::new();
        for x in from {
            if prev.insert(vkey(x), None).is_none() {
                queue.push_back(*x);
            }
        }
        while let Some(x) = queue.pop_front() {
            if targets.contains(&vkey(&x)) {
                let mut path = Vec::new();
                let mut cur = x;
                while let Some(Some((p, e))) = prev.get(&vkey(&cur)) {
                    path.push(*e);
                    cur = *p;
                }
                path.reverse();
                return Some(path);
            }
            for (y, e) in incident(&x, d) {
                if self.explored.contains(&ekey(&e)) && !prev.contains_key(&vkey(&y)) {
                    prev.insert(vkey(&y), Some((x, e)));
                    queue.push_back(y);
                }
            }
        }
        None
    }

    /// Explored edges whose upper level exceeds its class parameter by more than `slack`.
    pub fn zeta_bound_violations(&self, view: &ZView, slack: f64) -> u64 {
        self.explored
            .iter()
            .filter(|&&k| {
                let e = unkey_edge(k);
                self.zeta(&e) > self.threshold(view.class(&e)) + slack + 1e-12
            })
            .count() as u64
    }

    /// Edges of `path` whose variate is not below its class parameter plus `slack`.
    pub fn path_violations(&self, view: &ZView, path: &[ZEdge], slack: f64) -> usize {
        path.iter()
            .filter(|e| {
                let t = self.threshold(view.class(e)) + slack;
                (view.raw(e) as u64) >= threshold_units(t)
            })
            .count()
    }
}

fn sorted_edges(mut keys: Vec<u128>) -> Vec<ZEdge> {
    keys.sort_unstable();
    keys.dedup();
    keys.into_iter().map(unkey_edge).collect()
}

/// Neighbors of x with the connecting edges.
fn incident(x: &Point, d: usize) -> impl Iterator<Item = (Point, ZEdge)> + '_ {
    (0..2 * d).map(move |j| {
        let k = j / 2;
        let mut y = *x;
        if j % 2 == 0 {
            y[k] += 1;
            (y, ZEdge { base: *x, axis: k as u8 })
        } else {
            y[k] -= 1;
            (y, ZEdge { base: y, axis: k as u8 })
        }
    })
}

const CELL: i64 = 16;

fn cell_of(x: &Point) -> (i64, i64) {
    (x[0].div_euclid(CELL), x[1].div_euclid(CELL))
}

#[cfg(test)]
fn unkey_vertex(k: u128) -> Point {
    let e = unkey_edge(k << 3);
    e.base
}

/// Renormalized site coordinates.
pub type Site = (i64, i64);

/// Result of determining one site.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SiteOutcome {
    pub site: Site,
    pub occupied: bool,
    /// Seed the determination started from.
    pub entry: Option<Vec<i64>>,
    /// Exit seed in the upper half of the block of x + (1, -1).
    pub lower_exit: Option<Vec<i64>>,
    /// Exit seed in the lower half of the block of x + (1, 1).
    pub upper_exit: Option<Vec<i64>>,
    pub steps: usize,
    pub failed_phase: Option<u8>,
    /// Edges whose levels changed or that joined the explored set.
    #[serde(skip)]
    pub touched: FxHashSet<u128>,
}

impl SiteOutcome {
    pub fn exits(&self) -> Option<(Point, Point)> {
        match (&self.lower_exit, &self.upper_exit) {
            (Some(a), Some(b)) => Some((to_point(a), to_point(b))),
            _ => None,
        }
    }
}

fn to_point(v: &[i64]) -> Point {
    let mut x = [0; MAX_D];
    x[..v.len()].copy_from_slice(v);
    x
}

/// Seeds offered to a site by its occupied predecessors.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct Incoming {
    /// Lower exit of x - (1, -1); lies in the upper half of the block of x.
    pub from_below: Option<Point>,
    /// Upper exit of x - (1, 1); lies in the lower half of the block of x.
    pub from_above: Option<Point>,
}

fn block_origin(cfg: &RenormConfig, x: Site) -> Point {
    let mut o = [0; MAX_D];
    o[0] = 4 * cfg.block() * x.0;
    o[1] = 4 * cfg.block() * x.1;
    o
}

fn block_contains(cfg: &RenormConfig, center: &Point, seed: &Point) -> bool {
    let n = cfg.block();
    let m = cfg.m as i64;
    (0..cfg.d).all(|k| (seed[k] - center[k]).abs() + m <= n)
}

/// Phases 2 to 9 for site `x`, starting at `start` in the lower (`upper = false`)
/// or upper half of its block.
pub fn determine_site(state: &mut RenormState, view: &ZView, x: Site, start: Point, upper: bool) -> Result<SiteOutcome, RenormError> {
    let cfg = state.cfg;
    let n = cfg.n_i();
    let an = cfg.width();
    let big = cfg.block();
    let o = block_origin(&cfg, x);
    let k0 = state.k;
    state.site = x;
    let _ = state.take_touched();
    let mut out = SiteOutcome {
        site: x,
        occupied: false,
        entry: Some(start[..cfg.d].to_vec()),
        lower_exit: None,
        upper_exit: None,
        steps: 0,
        failed_phase: None,
        touched: FxHashSet::default(),
    };
    let (b4, b7) = if upper { (cfg.budgets[5], cfg.budgets[2]) } else { (cfg.budgets[2], cfg.budgets[5]) };
    let rel = |p: &Point, k: usize| p[k] - o[k];
    let result: Result<Option<(Point, Point)>, RenormError> = (|| {
        // phase 2: along +x1, steering x2 toward the row of the start block
        let mut r2 = o;
        r2[1] += if upper { 2 * big } else { 0 };
        let Some(c2) = state.grow(view, 2, start, 0, 1, &r2, cfg.budgets[0], |b| rel(b, 0) >= 9 * n)? else {
            out.failed_phase = Some(2);
            return Ok(None);
        };
        if rel(&c2, 0) > 10 * n + an {
            state.violations.constraint += 1;
        }
        // phase 3: branch downward, then upward with the wider box
        let Some(c3l) = state.turn(view, 3, &c2, SteerMode::Turn, false, cfg.betas[1])? else {
            out.failed_phase = Some(3);
            return Ok(None);
        };
        let Some(c3u) = state.turn(view, 3, &c2, SteerMode::Turn, true, cfg.betas[2])? else {
            out.failed_phase = Some(3);
            return Ok(None);
        };
        // phases 4-6: lower branch
        let mut r4 = o;
        r4[0] += 12 * n;
        let window = |v: i64, lo: i64, hi: i64| (lo..=hi).contains(&v);
        let Some(c4) = state.grow(view, 4, c3l, 1, -1, &r4, b4, |b| rel(b, 1) <= -9 * n)?.filter(|c| window(rel(c, 0), 9 * n, 15 * n)) else {
            out.failed_phase = Some(4);
            return Ok(None);
        };
        let Some(c5) = state.turn(view, 5, &c4, SteerMode::Reflect, false, cfg.betas[1])? else {
            out.failed_phase = Some(5);
            return Ok(None);
        };
        let mut r6 = o;
        r6[1] -= 12 * n;
        let Some(lower) = state.grow(view, 6, c5, 0, 1, &r6, cfg.budgets[4], |b| rel(b, 0) >= 24 * n)?.filter(|c| window(rel(c, 1), -15 * n, -9 * n)) else {
            out.failed_phase = Some(6);
            return Ok(None);
        };
        // phases 7-9: upper branch
        let Some(c7) = state.grow(view, 7, c3u, 1, 1, &r4, b7, |b| rel(b, 1) >= 21 * n)?.filter(|c| window(rel(c, 0), 9 * n, 15 * n)) else {
            out.failed_phase = Some(7);
            return Ok(None);
        };
        let Some(c8) = state.mirror_turn(view, &c7)? else {
            out.failed_phase = Some(8);
            return Ok(None);
        };
        let mut r9 = o;
        r9[1] += 24 * n;
        let Some(upper_seed) = state.grow(view, 9, c8, 0, 1, &r9, cfg.budgets[7], |b| rel(b, 0) >= 24 * n)?.filter(|c| window(rel(c, 1), 21 * n, 27 * n)) else {
            out.failed_phase = Some(9);
            return Ok(None);
        };
        Ok(Some((lower, upper_seed)))
    })();
    out.steps = state.k - k0;
    out.touched = state.take_touched();
    if let Some((lower, upper_seed)) = result? {
        let lower_block = block_origin(&cfg, (x.0 + 1, x.1 - 1));
        let mut lower_center = lower_block;
        lower_center[1] += 2 * big;
        let upper_center = block_origin(&cfg, (x.0 + 1, x.1 + 1));
        if !block_contains(&cfg, &lower_center, &lower) || !block_contains(&cfg, &upper_center, &upper_seed) {
            state.violations.constraint += 1;
        }
        out.occupied = true;
        out.lower_exit = Some(lower[..cfg.d].to_vec());
        out.upper_exit = Some(upper_seed[..cfg.d].to_vec());
    }
    Ok(out)
}


/// Phase 1 at the origin followed by phases 2-9.
pub fn determine_origin(state: &mut RenormState, view: &ZView) -> Result<SiteOutcome, RenormError> {
    let origin = [0; MAX_D];
    state.site = (0, 0);
    let _ = state.take_touched();
    if !state.start_seed(view, &origin) {
        return Ok(SiteOutcome {
            site: (0, 0),
            occupied: false,
            entry: None,
            lower_exit: None,
            upper_exit: None,
            steps: 1,
            failed_phase: Some(1),
            touched: state.take_touched(),
        });
    }
    let seeded = state.take_touched();
    let mut out = determine_site(state, view, (0, 0), origin, false)?;
    out.steps += 1;
    out.touched.extend(seeded);
    Ok(out)
}

/// Summary of one Z(o) determination with the post-run checks.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct OriginReport {
    pub outcome: SiteOutcome,
    pub violations: Violations,
    pub explored_edges: usize,
    pub max_inspections: u32,
    /// Explored edges with zeta above parameter + 8δ.
    pub zeta_bound_violations: u64,
    /// Lengths of the certified paths to the two exit seeds.
    pub certified_paths: Vec<usize>,
    /// Certified-path edges that fail (p+8δ, q+8δ)-openness.
    pub path_violations: usize,
}

pub fn origin_report(cfg: RenormConfig, params: ParamPoint, rule: ClassRule, seed: u64, sample: u64) -> Result<(OriginReport, RenormState), RenormError> {
    let mut state = RenormState::new(cfg, params)?;
    let view = ZView::new(crate::field::UniformField::new(seed, 0, sample), &params, cfg.d, cfg.s, rule);
    let outcome = determine_origin(&mut state, &view)?;
    let slack = 8.0 * cfg.delta;
    let mut certified_paths = Vec::new();
    let mut path_violations = 0;
    if let Some((lo, up)) = outcome.exits() {
        let m = cfg.m as i64;
        let start = h_box(cfg.d, cfg.s, &[0; MAX_D], m);
        for target in [lo, up] {
            match state.explored_path(&start, &h_box(cfg.d, cfg.s, &target, m)) {
                Some(path) => {
                    path_violations += state.path_violations(&view, &path, slack);
                    certified_paths.push(path.len());
                }
                None => path_violations += 1,
            }
        }
    }
    let report = OriginReport {
        violations: state.violations,
        explored_edges: state.explored_count(),
        max_inspections: state.max_inspections(),
        zeta_bound_violations: state.zeta_bound_violations(&view, slack),
        certified_paths,
        path_violations,
        outcome,
    };
    Ok((report, state))
}

/// Cluster-growth process on the oriented graph.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Trajectory {
    /// Sites in the order they were examined, with their state.
    pub steps: Vec<(Site, bool)>,
    pub occupied: Vec<Site>,
    pub vacant: Vec<Site>,
    pub extinct: bool,
}

/// Examine sites in lexicographic order, each time taking the smallest
/// unexamined site with an occupied predecessor. `decide` returns the exit
/// seeds of an occupied site and `None` for a vacant one.
pub fn grow_cluster(max_sites: usize, mut decide: impl FnMut(Site, Incoming) -> Option<(Point, Point)>) -> Trajectory {
    let mut exits: std::collections::BTreeMap<Site, (Point, Point)> = Default::default();
    let mut seen: FxHashSet<Site> = FxHashSet::default();
    let mut frontier: std::collections::BTreeSet<Site> = Default::default();
    let mut traj = Trajectory { steps: Vec::new(), occupied: Vec::new(), vacant: Vec::new(), extinct: false };
    frontier.insert((0, 0));
    while traj.steps.len() < max_sites {
        let Some(x) = frontier.pop_first() else {
            traj.extinct = true;
            break;
        };
        seen.insert(x);
        let incoming = Incoming {
            from_below: exits.get(&(x.0 - 1, x.1 + 1)).map(|e| e.0),
            from_above: exits.get(&(x.0 - 1, x.1 - 1)).map(|e| e.1),
        };
        match decide(x, incoming) {
            Some(e) => {
                exits.insert(x, e);
                traj.occupied.push(x);
                traj.steps.push((x, true));
                for y in [(x.0 + 1, x.1 - 1), (x.0 + 1, x.1 + 1)] {
                    if !seen.contains(&y) {
                        frontier.insert(y);
                    }
                }
            }
            None => {
                traj.vacant.push(x);
                traj.steps.push((x, false));
            }
        }
    }
    if frontier.is_empty() && traj.steps.len() < max_sites {
        traj.extinct = true;
    }
    traj
}

/// Report for one renormalized trajectory.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GrowthReport {
    pub trajectory: Trajectory,
    pub sites: Vec<SiteOutcome>,
    pub violations: Violations,
    /// Pairs of same-column sites whose touched edge sets intersect.
    pub overlapping_pairs: usize,
    pub max_inspections: u32,
}

/// Grow the renormalized cluster of the origin using real site determinations.
pub fn grow_renormalized_cluster(cfg: RenormConfig, params: ParamPoint, rule: ClassRule, max_sites: usize, seed: u64, sample: u64) -> Result<(GrowthReport, RenormState), RenormError> {
    let mut state = RenormState::new(cfg, params)?;
    let view = ZView::new(crate::field::UniformField::new(seed, 0, sample), &params, cfg.d, cfg.s, rule);
    let mut sites: Vec<SiteOutcome> = Vec::new();
    let mut error = None;
    let trajectory = grow_cluster(max_sites, |x, inc| {
        if error.is_some() {
            return None;
        }
        let res = if x == (0, 0) {
            determine_origin(&mut state, &view)
        } else if let Some(s) = inc.from_below {
            determine_site(&mut state, &view, x, s, true)
        } else if let Some(s) = inc.from_above {
            determine_site(&mut state, &view, x, s, false)
        } else {
            return None;
        };
        match res {
            Ok(o) => {
                let exits = o.exits();
                sites.push(o);
                exits
            }
            Err(e) => {
                error = Some(e);
                None
            }
        }
    });
    if let Some(e) = error {
        return Err(e);
    }
    let mut overlapping_pairs = 0;
    for (i, a) in sites.iter().enumerate() {
        for b in &sites[i + 1..] {
            if a.site.0 == b.site.0 && a.touched.iter().any(|k| b.touched.contains(k)) {
                overlapping_pairs += 1;
            }
        }
    }
    let report = GrowthReport { trajectory, violations: state.violations, overlapping_pairs, max_inspections: state.max_inspections(), sites };
    Ok((report, state))
}

/// Empirical ρ(S, t): among trajectories that examined a (t+1)-th site,
/// the fraction where that site was occupied.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct RhoPoint {
    pub t: usize,
    pub trials: usize,
    pub successes: usize,
    pub rho: f64,
}

pub fn rho_profile(trajectories: &[Trajectory]) -> Vec<RhoPoint> {
    let tmax = trajectories.iter().map(|t| t.steps.len()).max().unwrap_or(0);
    (0..tmax)
        .map(|t| {
            let trials = trajectories.iter().filter(|tr| tr.steps.len() > t).count();
            let successes = trajectories.iter().filter(|tr| tr.steps.get(t).is_some_and(|s| s.1)).count();
            RhoPoint { t, trials, successes, rho: if trials == 0 { 1.0 } else { successes as f64 / trials as f64 } }
        })
        .collect()
}

/// Greedy extraction of `m` points with pairwise sup-distance > k.
pub fn separation_check(points: &[Point], m: usize, k: i64) -> Option<Vec<Point>> {
    let mut kept: Vec<Point> = Vec::new();
    for x in points {
        if kept.len() == m {
            break;
        }
        let far = kept.iter().all(|y| (0..MAX_D).map(|i| (x[i] - y[i]).abs()).max().unwrap_or(0) > k);
        if far {
            kept.push(*x);
        }
    }
    (kept.len() == m).then_some(kept)
}

/// Size above which the greedy extraction always succeeds in Z^d: each kept
/// point rules out at most (2k+1)^d others.
pub fn greedy_threshold(m: usize, k: i64, d: usize) -> u64 {
    (m.saturating_sub(1) as u64) * ((2 * k + 1) as u64).pow(d as u32)
}
