//! Single-qubit Clifford group and its compilation into 1-J exchange pulses.
//!
//! Rotations act on the qubit Bloch vector in the frame where ẑ is `|0⟩`
//! (S13 = 0) and x̂ lies in the exchange plane, so the three exchange axes
//! are ẑ, n̂ and m̂. An exchange pulse only turns the Bloch vector one way,
//! `R_r̂(−2π|r|t)`; a right-handed angle θ is reached with the duration for
//! `2π − θ`.

use std::f64::consts::{PI, TAU};
use std::sync::OnceLock;

use nalgebra::{Matrix3, Vector3};
use rand::Rng;

use crate::dynamics::{PulseSequence, Segment};
use crate::error::Result;
use crate::hamiltonian::{ExchangeConfig, AXIS_M, AXIS_N, AXIS_Z};

pub type Rotation = Matrix3<f64>;

/// Right-handed rotation by `angle` about unit `axis` (Rodrigues).
pub fn rotation(axis: [f64; 3], angle: f64) -> Rotation {
    let k = Vector3::from(axis).normalize();
    let kx = Matrix3::new(0.0, -k.z, k.y, k.z, 0.0, -k.x, -k.y, k.x, 0.0);
    Matrix3::identity() + kx * angle.sin() + kx * kx * (1.0 - angle.cos())
}

/// Exchange pair driven alone by a 1-J pulse.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Pair {
    P12,
    P23,
    P13,
}

impl Pair {
    pub fn axis(self) -> [f64; 3] {
        match self {
            Pair::P12 => AXIS_M,
            Pair::P23 => AXIS_N,
            Pair::P13 => AXIS_Z,
        }
    }

    pub fn config(self, j: f64) -> ExchangeConfig {
        let mut c = ExchangeConfig::off(0.0);
        match self {
            Pair::P12 => c.j12 = j,
            Pair::P23 => c.j23 = j,
            Pair::P13 => c.j13 = j,
        }
        c
    }
}

/// A right-handed rotation by `angle ∈ (0, 2π)` about a pair axis.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ExchangeRotation {
    pub pair: Pair,
    pub angle: f64,
}

impl ExchangeRotation {
    pub fn rotation(&self) -> Rotation {
        rotation(self.pair.axis(), self.angle)
    }

    /// Pulse duration (µs) at coupling `j` (MHz).
    pub fn duration_us(&self, j: f64) -> f64 {
        (TAU - self.angle).rem_euclid(TAU) / (TAU * j)
    }

    pub fn segment(&self, j: f64) -> Segment {
        Segment::new(self.pair.config(j), self.duration_us(j))
    }
}

fn push_angle(out: &mut Vec<ExchangeRotation>, pair: Pair, angle: f64) {
    let a = angle.rem_euclid(TAU);
    if a > 1e-12 && (TAU - a) > 1e-12 {
        out.push(ExchangeRotation { pair, angle: a });
    }
}

/// Decomposes `target` as `R_z(α)·R_n(β)·R_z(γ)`, optionally preceded in
/// the product by `R_n(π)`. Returned rotations are in time order.
///
/// z-n-z only reaches rotations that tilt ẑ by at most 120° (the z-n
/// angle), hence the n(π) prefix for the rest.
pub fn compile(target: &Rotation) -> Vec<ExchangeRotation> {
    let z = Vector3::from(AXIS_Z);
    let nz = AXIS_N[2];
    let mut out = Vec::new();
    let tilt = (target * z).dot(&z);
    let (body, prefix) = if tilt >= -0.5 + 1e-12 {
        (*target, false)
    } else {
        (rotation(AXIS_N, PI) * target, true)
    };
    let tz = body * z;
    let cos_beta = ((tz.z - nz * nz) / (1.0 - nz * nz)).clamp(-1.0, 1.0);
    let beta = cos_beta.acos();
    let rn = rotation(AXIS_N, beta);
    let v = rn * z;
    let alpha = tz.y.atan2(tz.x) - v.y.atan2(v.x);
    let alpha = if (v.x * v.x + v.y * v.y) < 1e-24 { 0.0 } else { alpha };
    let rest = (rotation(AXIS_Z, alpha) * rn).transpose() * body;
    let gamma = rest[(1, 0)].atan2(rest[(0, 0)]);
    push_angle(&mut out, Pair::P13, gamma);
    push_angle(&mut out, Pair::P23, beta);
    push_angle(&mut out, Pair::P13, alpha);
    if prefix {
        push_angle(&mut out, Pair::P23, PI);
    }
    out
}

/// Product of compiled rotations in time order.
pub fn realized(seq: &[ExchangeRotation]) -> Rotation {
    seq.iter().fold(Matrix3::identity(), |acc, r| r.rotation() * acc)
}

/// The 24 proper rotations of the cube, generated from π/2 turns about x̂
/// and ẑ. Element 0 is the identity.
pub fn clifford_group() -> &'static [Rotation] {
    static GROUP: OnceLock<Vec<Rotation>> = OnceLock::new();
    GROUP.get_or_init(|| {
        let gens = [rotation([1.0, 0.0, 0.0], PI / 2.0), rotation([0.0, 0.0, 1.0], PI / 2.0)];
        let mut group = vec![Matrix3::identity()];
        let mut frontier = group.clone();
        while !frontier.is_empty() {
            let mut next = Vec::new();
            for g in &frontier {
                for h in &gens {
                    let c = (h * g).map(|x| x.round());
                    if !group.iter().any(|e| (e - c).norm() < 1e-9) {
                        group.push(c);
                        next.push(c);
                    }
                }
            }
            frontier = next;
        }
        group
    })
}

/// Compiled pulses for every group element, in group order.
pub fn compiled_cliffords() -> &'static [Vec<ExchangeRotation>] {
    static COMPILED: OnceLock<Vec<Vec<ExchangeRotation>>> = OnceLock::new();
    COMPILED.get_or_init(|| clifford_group().iter().map(compile).collect())
}

/// Random Clifford indices plus the recovery element that returns the
/// composite to the identity.
#[derive(Debug, Clone, PartialEq)]
pub struct RbSequence {
    pub cliffords: Vec<usize>,
    pub recovery: usize,
}

pub fn random_rb_sequence(depth: usize, rng: &mut impl Rng) -> RbSequence {
    let group = clifford_group();
    let cliffords: Vec<usize> = (0..depth).map(|_| rng.random_range(0..group.len())).collect();
    let total = cliffords.iter().fold(Matrix3::identity(), |acc, &k| group[k] * acc);
    let inv = total.transpose();
    let recovery = group
        .iter()
        .position(|g| (g - inv).norm() < 1e-9)
        .expect("Clifford group is closed");
    RbSequence { cliffords, recovery }
}

impl RbSequence {
    /// Exchange pulses at coupling `rb_j`, with `interleave` inserted after
    /// every random Clifford (not after the recovery).
    pub fn pulse_sequence(&self, rb_j: f64, interleave: Option<&Segment>) -> Result<PulseSequence> {
        let compiled = compiled_cliffords();
        let mut segs = Vec::new();
        for &k in &self.cliffords {
            segs.extend(compiled[k].iter().map(|r| r.segment(rb_j)));
            if let Some(s) = interleave {
                segs.push(*s);
            }
        }
        segs.extend(compiled[self.recovery].iter().map(|r| r.segment(rb_j)));
        if segs.is_empty() {
            return Ok(PulseSequence::identity());
        }
        PulseSequence::new(segs)
    }
}
