//! Per-edge uniform variates.
//!
//! `u(e)` is a stateless function of `(seed, stream, sample, edge)`, where the
//! edge is identified by the absolute coordinates of its lower endpoint and its
//! axis. Two lattices that share an edge therefore see the same variate for it,
//! which is what makes boxes, slabs and tori nest under one coupling.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::lattice::{ClassRule, EdgeClass, LatticeSpec, Point, ZEdge};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum FieldError {
    #[error("parameter {name}={value} outside [0,1]")]
    Param { name: &'static str, value: f64 },
    #[error("conditioning level {0} must be < 1")]
    Level(f64),
}

const SCALE: f64 = 4294967296.0; // 2^32

#[inline(always)]
pub fn mix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

#[inline(always)]
fn pack3(x: &[i64]) -> u64 {
    const OFF: i64 = 1 << 20;
    const MASK: u64 = (1 << 21) - 1;
    let mut w = 0u64;
    for (i, &c) in x.iter().enumerate() {
        debug_assert!(c.abs() < OFF, "coordinate {c} outside field key range");
        w |= (((c + OFF) as u64) & MASK) << (21 * i);
    }
    w
}

/// Threshold in 32-bit units: `u < t` iff `raw < threshold_units(t)`.
#[inline]
pub fn threshold_units(t: f64) -> u64 {
    (t.clamp(0.0, 1.0) * SCALE).ceil() as u64
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct UniformField {
    pub seed: u64,
    pub stream: u64,
    pub sample: u64,
    key: u64,
}

impl UniformField {
    pub fn new(seed: u64, stream: u64, sample: u64) -> Self {
        let key = mix64(mix64(mix64(seed ^ 0x5851_f42d_4c95_7f2d) ^ stream.wrapping_mul(0xd1b5_4a32_d192_ed03)) ^ sample);
        UniformField { seed, stream, sample, key }
    }

    /// 32-bit variate of the edge at `base` along `axis`.
    #[inline(always)]
    pub fn raw(&self, base: &Point, d: usize, axis: usize) -> u32 {
        let mut h = mix64(self.key ^ pack3(&base[..d.min(3)]));
        if d > 3 {
            h = mix64(h ^ pack3(&base[3..d]));
        }
        h = mix64(h ^ (axis as u64 + 1).wrapping_mul(0x9e37_79b9_7f4a_7c15));
        (h >> 32) as u32
    }

    #[inline]
    pub fn u(&self, base: &Point, d: usize, axis: usize) -> f64 {
        self.raw(base, d, axis) as f64 / SCALE
    }

    pub fn u_edge(&self, e: &ZEdge, d: usize) -> f64 {
        self.u(&e.base, d, e.axis as usize)
    }

    /// Variate of a lattice edge slot.
    pub fn u_slot(&self, spec: &LatticeSpec, e: usize) -> f64 {
        let d = spec.d();
        self.u(&spec.coords(e / d), d, e % d)
    }

    /// A variate strictly inside (0,1) derived from the same 32 bits.
    pub fn u_open_interval(&self, e: &ZEdge, d: usize) -> f64 {
        (self.raw(&e.base, d, e.axis as usize) as f64 + 0.5) / SCALE
    }

    /// Independent auxiliary variate attached to a vertex (used for marks).
    pub fn vertex_mark(&self, x: &Point, d: usize) -> u32 {
        self.raw(x, d, 63)
    }
}

/// Replacement variate for an edge known to be `gamma`-closed: uniform on
/// `(gamma, 1)`, obtained as a quantile transform of the edge's own variate.
pub fn resample_conditionally_closed(field: &UniformField, e: &ZEdge, d: usize, gamma: f64) -> Result<f64, FieldError> {
    if !(gamma < 1.0) || gamma.is_nan() {
        return Err(FieldError::Level(gamma));
    }
    let g = gamma.max(0.0);
    let v = field.u_open_interval(e, d);
    let u = g + (1.0 - g) * v;
    Ok(u.max(g.next_up()).min(1.0f64.next_down()))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ParamPoint {
    pub p: f64,
    pub q: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub t: Option<f64>,
}

impl ParamPoint {
    pub fn new(p: f64, q: f64) -> Result<Self, FieldError> {
        ParamPoint { p, q, t: None }.validated()
    }

    pub fn with_t(p: f64, q: f64, t: f64) -> Result<Self, FieldError> {
        ParamPoint { p, q, t: Some(t) }.validated()
    }

    pub fn validated(self) -> Result<Self, FieldError> {
        for (name, value) in [("p", self.p), ("q", self.q), ("t", self.t.unwrap_or(self.p))] {
            if !(0.0..=1.0).contains(&value) {
                return Err(FieldError::Param { name, value });
            }
        }
        Ok(self)
    }

    pub fn t(&self) -> f64 {
        self.t.unwrap_or(self.p)
    }

    pub fn threshold(&self, class: EdgeClass) -> f64 {
        match class {
            EdgeClass::H => self.q,
            EdgeClass::Bulk | EdgeClass::Plus => self.p,
            EdgeClass::Minus => self.t(),
        }
    }

    pub fn units(&self) -> Thresholds {
        Thresholds {
            h: threshold_units(self.q),
            bulk: threshold_units(self.p),
            minus: threshold_units(self.t()),
        }
    }

    /// Componentwise order, the premise of the monotone coupling.
    pub fn le(&self, other: &ParamPoint) -> bool {
        self.p <= other.p && self.q <= other.q && self.t() <= other.t()
    }
}

/// Per-class thresholds in 32-bit units.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Thresholds {
    pub h: u64,
    pub bulk: u64,
    pub minus: u64,
}

impl Thresholds {
    #[inline(always)]
    pub fn of(&self, class: EdgeClass) -> u64 {
        match class {
            EdgeClass::H => self.h,
            EdgeClass::Bulk | EdgeClass::Plus => self.bulk,
            EdgeClass::Minus => self.minus,
        }
    }

    #[inline(always)]
    pub fn open(&self, raw: u32, class: EdgeClass) -> bool {
        (raw as u64) < self.of(class)
    }
}

/// Openness of Z^d edges addressed by their endpoints, for explorations
/// that are not tied to one finite lattice.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ZView {
    pub field: UniformField,
    pub th: Thresholds,
    pub d: usize,
    pub s: usize,
    pub rule: ClassRule,
}

impl ZView {
    pub fn new(field: UniformField, params: &ParamPoint, d: usize, s: usize, rule: ClassRule) -> Self {
        ZView { field, th: params.units(), d, s, rule }
    }

    #[inline]
    pub fn raw(&self, e: &ZEdge) -> u32 {
        self.field.raw(&e.base, self.d, e.axis as usize)
    }

    #[inline]
    pub fn class(&self, e: &ZEdge) -> EdgeClass {
        e.class(self.d, self.s, self.rule)
    }

    #[inline]
    pub fn open(&self, e: &ZEdge) -> bool {
        self.th.open(self.raw(e), self.class(e))
    }

    /// `x` and `y` must be adjacent.
    #[inline]
    pub fn open_between(&self, x: &Point, y: &Point) -> bool {
        self.open(&ZEdge::new(x, y).expect("adjacent points"))
    }
}

/// Open iff u(e) < threshold(class(e)).
pub fn is_open(field: &UniformField, spec: &LatticeSpec, e: usize, params: &ParamPoint) -> Result<bool, crate::lattice::LatticeError> {
    let class = spec.classify_edge(e)?;
    let d = spec.d();
    let raw = field.raw(&spec.coords(e / d), d, e % d);
    Ok(params.units().open(raw, class))
}
