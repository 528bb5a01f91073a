//! Two-gate map of P0 after randomized Clifford sequences with a 3-J pulse
//! interleaved after every Clifford. Only near the LPI is the interleave
//! the identity on the qubit, so P0 stays high in a small disc there.

use std::collections::VecDeque;

use serde::{Deserialize, Serialize};

use super::{initial_state, require_shots, GaugePolicy, NoiseEnv, SweepAxis, SweepResult};
use crate::clifford::{compiled_cliffords, random_rb_sequence, RbSequence};
use crate::device::{exchange_from_voltages, solve_lpi_voltages, virtual_gate_matrix, DeviceParams, VoltageVector};
use crate::dynamics::{PulseSequence, Segment};
use crate::error::{invalid, Error, Result};
use crate::hamiltonian::ExchangeConfig;
use crate::noise::{perturb_exchange, shot_rng, HyperfineMode, NoiseRealization};
use crate::spin::{shared_projector, Mat8, ProjectorTag};

use nalgebra::Vector3;
use rayon::prelude::*;

/// How sweep coordinates map to physical gate voltages.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum GateMap {
    /// Coordinates are virtual gates `C·v`; each one moves one exchange.
    #[default]
    Virtual,
    /// Coordinates are the physical voltages on gates 12 and 23.
    Physical,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LpiSweepParams {
    /// Exchange at the LPI being located (MHz).
    pub target_j_mhz: f64,
    #[serde(default)]
    pub gate_map: GateMap,
    #[serde(default = "default_interleave_ns")]
    pub interleave_ns: f64,
    #[serde(default = "default_depth")]
    pub rb_depth: usize,
    #[serde(default = "default_sequences")]
    pub rb_sequences: usize,
    /// Coupling of the 1-J Clifford pulses (MHz).
    #[serde(default = "default_rb_j")]
    pub rb_j_mhz: f64,
    #[serde(default)]
    pub bz: f64,
    /// Disc threshold on P0; `None` is halfway between the map's median
    /// (the scrambled background) and its maximum.
    #[serde(default)]
    pub threshold: Option<f64>,
}

fn default_interleave_ns() -> f64 {
    20.0
}
fn default_depth() -> usize {
    10
}
fn default_sequences() -> usize {
    32
}
fn default_rb_j() -> f64 {
    20.0
}

impl LpiSweepParams {
    pub fn new(target_j_mhz: f64) -> Self {
        Self {
            target_j_mhz,
            gate_map: GateMap::Virtual,
            interleave_ns: default_interleave_ns(),
            rb_depth: default_depth(),
            rb_sequences: default_sequences(),
            rb_j_mhz: default_rb_j(),
            bz: 0.0,
            threshold: None,
        }
    }

    fn validate(&self) -> Result<()> {
        if !(self.target_j_mhz > 0.0) {
            return Err(invalid("target_j_mhz", "must be positive"));
        }
        if !(self.interleave_ns >= 0.0) {
            return Err(invalid("interleave_ns", "must be >= 0"));
        }
        if self.rb_sequences == 0 {
            return Err(invalid("rb_sequences", "need at least one sequence"));
        }
        if !(self.rb_j_mhz > 0.0) {
            return Err(invalid("rb_j_mhz", "must be positive"));
        }
        Ok(())
    }
}

/// Sweep-coordinate frame: maps `(x, y)` to physical voltages, with the
/// third coordinate held at its LPI value.
#[derive(Debug, Clone, Copy)]
pub struct SweepFrame {
    device: DeviceParams,
    map: GateMap,
    /// Third coordinate (virtual or physical gate 13).
    fixed: f64,
    /// Coordinates of the exact LPI.
    pub truth: (f64, f64),
}

impl SweepFrame {
    pub fn new(device: &DeviceParams, map: GateMap, target_j: f64) -> Result<Self> {
        let v = solve_lpi_voltages(device, target_j)?;
        let (truth, fixed) = match map {
            GateMap::Virtual => {
                let c = device.coupling_matrix() * v.to_vector();
                ((c[0], c[1]), c[2])
            }
            GateMap::Physical => ((v.x12, v.x23), v.x13),
        };
        Ok(Self {
            device: *device,
            map,
            fixed,
            truth,
        })
    }

    pub fn voltages(&self, x: f64, y: f64) -> Result<VoltageVector> {
        Ok(match self.map {
            GateMap::Virtual => {
                let v = virtual_gate_matrix(&self.device)? * Vector3::new(x, y, self.fixed);
                VoltageVector::new(v[0], v[1], v[2])
            }
            GateMap::Physical => VoltageVector::new(x, y, self.fixed),
        })
    }
}

/// The high-P0 region found in a map.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Disc {
    pub center: (f64, f64),
    /// Radius of the circle with the same area.
    pub radius: f64,
    pub cells: usize,
    pub threshold: f64,
}

/// Finds the high-P0 disc: among the connected regions above `threshold`
/// (default: halfway from the map's median to its maximum) that contain
/// their own weighted centroid, the one with the highest peak. Rings such
/// as full-rotation revivals fail the centroid test. `p0` is row-major with
/// `ys` fastest.
pub fn detect_disc(xs: &[f64], ys: &[f64], p0: &[f64], threshold: Option<f64>) -> Option<Disc> {
    let (nx, ny) = (xs.len(), ys.len());
    if nx < 2 || ny < 2 || p0.len() != nx * ny {
        return None;
    }
    let mut sorted = p0.to_vec();
    sorted.sort_by(f64::total_cmp);
    let background = sorted[sorted.len() / 2];
    let thr = threshold.unwrap_or(0.5 * (background + sorted[sorted.len() - 1]));
    let nearest = |v: &[f64], c: f64| {
        v.iter()
            .enumerate()
            .min_by(|a, b| (a.1 - c).abs().total_cmp(&(b.1 - c).abs()))
            .map(|(i, _)| i)
            .unwrap()
    };
    let dx = (xs[nx - 1] - xs[0]).abs() / (nx - 1) as f64;
    let dy = (ys[ny - 1] - ys[0]).abs() / (ny - 1) as f64;
    let mut label = vec![usize::MAX; p0.len()];
    let mut best: Option<(f64, Disc)> = None;
    for seed in 0..p0.len() {
        if label[seed] != usize::MAX || !(p0[seed] > thr) {
            continue;
        }
        label[seed] = seed;
        let mut queue = VecDeque::from([seed]);
        let (mut wx, mut wy, mut w, mut peak) = (0.0, 0.0, 0.0, f64::NEG_INFINITY);
        let mut cells = 0;
        while let Some(k) = queue.pop_front() {
            let (i, j) = (k / ny, k % ny);
            let weight = p0[k] - thr;
            wx += weight * xs[i];
            wy += weight * ys[j];
            w += weight;
            peak = peak.max(p0[k]);
            cells += 1;
            let neighbours = [
                (i > 0).then(|| k - ny),
                (i + 1 < nx).then(|| k + ny),
                (j > 0).then(|| k - 1),
                (j + 1 < ny).then(|| k + 1),
            ];
            for q in neighbours.into_iter().flatten() {
                if label[q] == usize::MAX && p0[q] > thr {
                    label[q] = seed;
                    queue.push_back(q);
                }
            }
        }
        let center = (wx / w, wy / w);
        if label[nearest(xs, center.0) * ny + nearest(ys, center.1)] != seed {
            continue;
        }
        if best.as_ref().is_none_or(|(p, _)| peak > *p) {
            let disc = Disc {
                center,
                radius: (cells as f64 * dx * dy / std::f64::consts::PI).sqrt(),
                cells,
                threshold: thr,
            };
            best = Some((peak, disc));
        }
    }
    best.map(|(_, d)| d)
}

/// Noisy unitaries of every compiled Clifford for one realisation.
fn clifford_unitaries(rb_j: f64, bz: f64, env: &NoiseEnv, r: &NoiseRealization) -> Result<Vec<Mat8>> {
    compiled_cliffords()
        .iter()
        .map(|pulses| {
            if pulses.is_empty() {
                return Ok(Mat8::identity());
            }
            let segs = pulses
                .iter()
                .map(|p| {
                    let mut s = p.segment(rb_j);
                    s.config.bz = bz;
                    s
                })
                .collect();
            env.perturb(&PulseSequence::new(segs)?, r).unitary()
        })
        .collect()
}

struct Trial {
    rb: RbSequence,
    realization: NoiseRealization,
    cliffords: Vec<Mat8>,
}

/// P0 map over `xs × ys` sweep coordinates (volts), plus the detected disc
/// and the exact LPI location in the same coordinates.
pub fn lpi_sweep(
    p: &LpiSweepParams,
    xs: &[f64],
    ys: &[f64],
    env: &NoiseEnv,
    shots: usize,
    seed: u64,
) -> Result<SweepResult> {
    p.validate()?;
    env.validate()?;
    require_shots(shots)?;
    if xs.len() < 2 || ys.len() < 2 {
        return Err(Error::EmptyGrid("lpi sweep needs at least 2x2 points"));
    }
    if let HyperfineMode::Trajectory(_) = env.hyperfine.mode {
        return Err(invalid("hyperfine.mode", "lpi sweep uses quasi-static noise"));
    }
    let frame = SweepFrame::new(&env.device, p.gate_map, p.target_j_mhz)?;
    let trials: Vec<Trial> = (0..(p.rb_sequences * shots) as u64)
        .into_par_iter()
        .map(|t| {
            let seq_index = t / shots as u64;
            let mut rng = shot_rng(seed, seq_index, 2);
            let rb = random_rb_sequence(p.rb_depth, &mut rng);
            let realization = env.realization(seed, t);
            let cliffords = clifford_unitaries(p.rb_j_mhz, p.bz, env, &realization)?;
            Ok(Trial {
                rb,
                realization,
                cliffords,
            })
        })
        .collect::<Result<_>>()?;
    let rho0 = initial_state(p.bz, GaugePolicy::EqualMixture);
    let singlet = shared_projector(ProjectorTag::S13Singlet);
    let points: Vec<(f64, f64)> = xs.iter().flat_map(|&x| ys.iter().map(move |&y| (x, y))).collect();
    let per_point: Vec<(f64, bool, ExchangeConfig)> = points
        .par_iter()
        .map(|&(x, y)| {
            let out = exchange_from_voltages(&env.device, &frame.voltages(x, y)?)?;
            let cfg = ExchangeConfig { bz: p.bz, ..out.config };
            let mut acc = 0.0;
            for trial in &trials {
                let noisy = perturb_exchange(&env.device, &cfg, &trial.realization.voltage_offset);
                let seg = Segment {
                    config: noisy,
                    fields: trial.realization.fields,
                    duration_us: p.interleave_ns * 1e-3,
                };
                let ui = seg.unitary()?;
                let mut rho = *rho0.matrix();
                for &k in &trial.rb.cliffords {
                    let u = ui * trial.cliffords[k];
                    rho = u * rho * u.adjoint();
                }
                let u = &trial.cliffords[trial.rb.recovery];
                rho = u * rho * u.adjoint();
                acc += crate::dynamics::trace_product(singlet, &rho);
            }
            Ok((acc / trials.len() as f64, out.saturated, cfg))
        })
        .collect::<Result<_>>()?;
    let p0: Vec<f64> = per_point.iter().map(|v| v.0).collect();
    let mut out = SweepResult::new(
        "lpi-sweep",
        vec![SweepAxis::new("x_volts", "V", xs.to_vec()), SweepAxis::new("y_volts", "V", ys.to_vec())],
    );
    out.push_column("p0", p0.clone())?;
    out.push_column("j12_mhz", per_point.iter().map(|v| v.2.j12).collect())?;
    out.push_column("j23_mhz", per_point.iter().map(|v| v.2.j23).collect())?;
    out.push_column("j13_mhz", per_point.iter().map(|v| v.2.j13).collect())?;
    out.set("saturated_points", per_point.iter().filter(|v| v.1).count() as f64);
    out.set("truth_x_volts", frame.truth.0);
    out.set("truth_y_volts", frame.truth.1);
    if let Some(d) = detect_disc(xs, ys, &p0, p.threshold) {
        out.set("disc_x_volts", d.center.0);
        out.set("disc_y_volts", d.center.1);
        out.set("disc_radius_volts", d.radius);
        out.set("disc_cells", d.cells as f64);
        out.set("disc_threshold", d.threshold);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn grid(c: f64, half: f64, n: usize) -> Vec<f64> {
        (0..n).map(|k| c - half + 2.0 * half * k as f64 / (n - 1) as f64).collect()
    }

    #[test]
    fn disc_detection_on_synthetic_blob() {
        let xs = grid(0.0, 1.0, 31);
        let ys = grid(0.0, 1.0, 31);
        let map: Vec<f64> = xs
            .iter()
            .flat_map(|&x| ys.iter().map(move |&y| (-((x - 0.2).powi(2) + (y + 0.1).powi(2)) / 0.02).exp()))
            .collect();
        let d = detect_disc(&xs, &ys, &map, None).unwrap();
        assert!((d.center.0 - 0.2).abs() < 0.02 && (d.center.1 + 0.1).abs() < 0.02, "{d:?}");
        // half maximum of exp(-r²/0.02) is at r² = 0.02 ln 2
        assert!((d.radius - (0.02f64 * 2f64.ln()).sqrt()).abs() < 0.02);
    }

    #[test]
    fn ring_is_rejected() {
        let xs = grid(0.0, 1.0, 41);
        let map: Vec<f64> = xs
            .iter()
            .flat_map(|&x| xs.iter().map(move |&y| (-((x * x + y * y).sqrt() - 0.6).powi(2) / 0.005).exp()))
            .collect();
        assert!(detect_disc(&xs, &xs, &map, None).is_none());
    }

    #[test]
    fn frames_agree_on_the_lpi() {
        let dev = DeviceParams::default();
        for map in [GateMap::Virtual, GateMap::Physical] {
            let f = SweepFrame::new(&dev, map, 50.0).unwrap();
            let j = exchange_from_voltages(&dev, &f.voltages(f.truth.0, f.truth.1).unwrap()).unwrap();
            for v in j.config.pairs() {
                assert!((v - 50.0).abs() < 1e-9, "{map:?}: {:?}", j.config);
            }
        }
    }

    #[test]
    fn noiseless_map_peaks_at_lpi() {
        let p = LpiSweepParams {
            rb_sequences: 3,
            ..LpiSweepParams::new(50.0)
        };
        let env = NoiseEnv::noiseless();
        let f = SweepFrame::new(&env.device, p.gate_map, 50.0).unwrap();
        let xs = grid(f.truth.0, 0.01, 11);
        let ys = grid(f.truth.1, 0.01, 11);
        let r = lpi_sweep(&p, &xs, &ys, &env, 1, 4).unwrap();
        let p0 = r.column("p0").unwrap();
        assert!((p0[5 * 11 + 5] - 1.0).abs() < 1e-9);
        assert!(p0.iter().all(|&v| v <= 1.0 + 1e-9));
    }
}
