//! Simulated measurements built on the dynamics and noise layers.
//!
//! Every experiment is a deterministic function of its inputs and a master
//! seed. Shots run in parallel, results are collected in shot order and
//! reduced sequentially, so output is bit-identical for any thread count.

pub mod b_calibration;
pub mod free_evolution;
pub mod levels;
pub mod lpi_sweep;
pub mod spectroscopy;
pub mod sweep;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::device::DeviceParams;
use crate::dynamics::{DensityMatrix, PulseSequence, Segment};
use crate::error::{invalid, Result};
use crate::hamiltonian::{build_hamiltonian, eigensystem, LocalFields};
use crate::noise::{
    field_traces, perturb_exchange, sample_realization, ChargeNoiseModel, HyperfineMode, HyperfineModel,
    NoiseRealization,
};
use crate::spin::{ideal_qubit_flip, shared_projector, CoupledBasis, Mat8, ProjectorTag};

pub use sweep::{SweepAxis, SweepResult};

/// Everything random about a run.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize, Default)]
pub struct NoiseEnv {
    #[serde(default)]
    pub hyperfine: HyperfineModel,
    #[serde(default)]
    pub charge: ChargeNoiseModel,
    #[serde(default)]
    pub device: DeviceParams,
}

impl NoiseEnv {
    pub fn noiseless() -> Self {
        Self::default()
    }

    pub fn validate(&self) -> Result<()> {
        self.hyperfine.validate()?;
        self.charge.validate()?;
        self.device.validate()
    }

    pub fn realization(&self, seed: u64, shot: u64) -> NoiseRealization {
        sample_realization(&self.hyperfine, &self.charge, seed, shot)
    }

    /// `seq` with one shot's quasi-static noise applied.
    pub fn perturb(&self, seq: &PulseSequence, r: &NoiseRealization) -> PulseSequence {
        seq.perturbed(&r.fields, |c| perturb_exchange(&self.device, c, &r.voltage_offset))
    }
}

/// Which gauge state(s) the initialisation loads.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum GaugePolicy {
    #[default]
    EqualMixture,
    /// The Zeeman ground gauge; an equal mixture at zero field.
    LowerEnergy,
    Plus,
    Minus,
}

/// Qubit state `|0⟩` (S13 = 0) in the gauge(s) selected by `policy` at
/// uniform field `bz`.
pub fn initial_state(bz: f64, policy: GaugePolicy) -> DensityMatrix {
    let basis = CoupledBasis::shared();
    let plus = basis.column(0);
    let minus = basis.column(1);
    let pick = match policy {
        GaugePolicy::Plus => Some(true),
        GaugePolicy::Minus => Some(false),
        GaugePolicy::LowerEnergy if bz > 0.0 => Some(false),
        GaugePolicy::LowerEnergy if bz < 0.0 => Some(true),
        _ => None,
    };
    let r = match pick {
        Some(true) => DensityMatrix::pure(&plus),
        Some(false) => DensityMatrix::pure(&minus),
        None => DensityMatrix::mixture(&[(0.5, plus), (0.5, minus)]),
    };
    r.expect("basis states are normalised")
}

/// Outcome probabilities of the two-step readout: a singlet check on
/// (1,3), then an ideal qubit flip and a second singlet check.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize, Default)]
pub struct Readout {
    pub p0: f64,
    /// Probability the state was `|1⟩` (singlet after the flip).
    pub p0to1: f64,
    /// Neither check fired: the state left the qubit subspace.
    pub pl: f64,
}

impl Readout {
    pub fn from_state(rho: &Mat8) -> Self {
        let singlet = shared_projector(ProjectorTag::S13Singlet);
        let p0 = crate::dynamics::trace_product(singlet, rho);
        let flip = ideal_qubit_flip();
        // project out the singlet outcome, flip, then check again
        let q = Mat8::identity() - singlet;
        let rest = flip * (q * rho * q) * flip.adjoint();
        let p0to1 = crate::dynamics::trace_product(singlet, &rest);
        Self {
            p0,
            p0to1,
            pl: 1.0 - p0 - p0to1,
        }
    }
}

pub fn readout(rho: &DensityMatrix) -> Readout {
    Readout::from_state(rho.matrix())
}

/// Shot-averaged readout with standard errors of the mean.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize, Default)]
pub struct ReadoutStats {
    pub p0: f64,
    pub p0to1: f64,
    pub pl: f64,
    pub p0_stderr: f64,
    pub p0to1_stderr: f64,
    pub pl_stderr: f64,
    pub shots: usize,
}

/// Mean and standard error of the mean.
pub fn mean_stderr(xs: &[f64]) -> (f64, f64) {
    let n = xs.len();
    if n == 0 {
        return (f64::NAN, f64::NAN);
    }
    let mean = xs.iter().sum::<f64>() / n as f64;
    if n < 2 {
        return (mean, 0.0);
    }
    let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
    (mean, (var / n as f64).sqrt())
}

impl ReadoutStats {
    pub fn from_shots(shots: &[Readout]) -> Self {
        let col = |f: fn(&Readout) -> f64| mean_stderr(&shots.iter().map(f).collect::<Vec<_>>());
        let (p0, p0_stderr) = col(|r| r.p0);
        let (p0to1, p0to1_stderr) = col(|r| r.p0to1);
        let (pl, pl_stderr) = col(|r| r.pl);
        Self {
            p0,
            p0to1,
            pl,
            p0_stderr,
            p0to1_stderr,
            pl_stderr,
            shots: shots.len(),
        }
    }
}

/// Runs `f` for shots `0..shots` in parallel and returns results in shot
/// order.
pub fn map_shots<T: Send>(shots: usize, f: impl Fn(u64) -> Result<T> + Sync + Send) -> Result<Vec<T>> {
    (0..shots as u64).into_par_iter().map(f).collect()
}

pub(crate) fn require_shots(shots: usize) -> Result<()> {
    if shots == 0 {
        return Err(invalid("shots", "need at least one shot"));
    }
    Ok(())
}

/// Unitary of `seq` under time-dependent local fields sampled every `dt`
/// (field `k` holds on `[k·dt, (k+1)·dt)`).
pub fn sliced_unitary(seq: &PulseSequence, traces: &[[[f64; 3]; 3]], dt_us: f64) -> Result<Mat8> {
    let mut u = Mat8::identity();
    let mut t = 0.0;
    for seg in seq.segments() {
        let end = t + seg.duration_us;
        while t < end - 1e-12 * end.max(1.0) {
            let k = ((t / dt_us).floor() as usize).min(traces.len() - 1);
            let stop = ((k + 1) as f64 * dt_us).min(end);
            let stop = if stop <= t { end } else { stop };
            let mut fields = seg.fields;
            for (row, add) in fields.b.iter_mut().zip(traces[k].iter()) {
                for (v, a) in row.iter_mut().zip(add) {
                    *v += a;
                }
            }
            let piece = Segment {
                config: seg.config,
                fields,
                duration_us: stop - t,
            };
            u = piece.unitary()? * u;
            t = stop;
        }
        t = end;
    }
    Ok(u)
}

/// Time step for field trajectories: half the Nyquist limit of the band.
pub(crate) fn trajectory_step(h: &HyperfineModel, duration_us: f64) -> Option<(f64, f64)> {
    match h.mode {
        HyperfineMode::Trajectory(t) => {
            let f_max = t.f_max_hz * 1e-6;
            let f_min = t.f_min_hz * 1e-6;
            let dt = (0.25 / f_max).min(duration_us.max(1e-12));
            Some((dt, duration_us.max(1.0 / f_min)))
        }
        HyperfineMode::QuasiStatic => None,
    }
}

/// Final state of one noisy shot of `seq` from `rho0`.
pub fn shot_state(seq: &PulseSequence, rho0: &DensityMatrix, env: &NoiseEnv, seed: u64, shot: u64) -> Result<Mat8> {
    let r = env.realization(seed, shot);
    let u = match trajectory_step(&env.hyperfine, seq.total_duration_us()) {
        None => env.perturb(seq, &r).unitary()?,
        Some((dt, span)) => {
            let mut r0 = r;
            r0.fields = LocalFields::zero();
            let traces = field_traces(&env.hyperfine, seed, shot, span, dt)?;
            sliced_unitary(&env.perturb(seq, &r0), &traces, dt)?
        }
    };
    Ok(u * rho0.matrix() * u.adjoint())
}

/// Monte Carlo readout statistics of `seq` applied to `rho0`.
pub fn measure_populations(
    seq: &PulseSequence,
    rho0: &DensityMatrix,
    env: &NoiseEnv,
    shots: usize,
    seed: u64,
) -> Result<ReadoutStats> {
    require_shots(shots)?;
    env.validate()?;
    let per_shot = map_shots(shots, |s| Ok(Readout::from_state(&shot_state(seq, rho0, env, seed, s)?)))?;
    Ok(ReadoutStats::from_shots(&per_shot))
}

/// Long-time populations predicted by dephasing in the eigenbasis of each
/// shot's Hamiltonian: `Σ_n ⟨n|ρ0|n⟩⟨n|Π|n⟩`, averaged over shots. Only
/// quasi-static noise is meaningful here.
pub fn dephased_populations(
    config: &crate::hamiltonian::ExchangeConfig,
    rho0: &DensityMatrix,
    env: &NoiseEnv,
    shots: usize,
    seed: u64,
) -> Result<ReadoutStats> {
    require_shots(shots)?;
    env.validate()?;
    let per_shot = map_shots(shots, |s| {
        let r = env.realization(seed, s);
        let cfg = perturb_exchange(&env.device, config, &r.voltage_offset);
        let eig = eigensystem(&build_hamiltonian(&cfg, &r.fields)?)?;
        let v = &eig.vectors;
        let b = v.adjoint() * rho0.matrix() * v;
        let diag = Mat8::from_fn(|i, j| if i == j { b[(i, i)] } else { Default::default() });
        Ok(Readout::from_state(&(v * diag * v.adjoint())))
    })?;
    Ok(ReadoutStats::from_shots(&per_shot))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dynamics::propagate;
    use crate::hamiltonian::ExchangeConfig;

    #[test]
    fn readout_channels() {
        let basis = CoupledBasis::shared();
        for (k, want) in [(0, [1.0, 0.0, 0.0]), (3, [0.0, 1.0, 0.0]), (6, [0.0, 0.0, 1.0])] {
            let r = readout(&DensityMatrix::pure(&basis.column(k)).unwrap());
            assert!((r.p0 - want[0]).abs() < 1e-12 && (r.p0to1 - want[1]).abs() < 1e-12, "{k}: {r:?}");
            assert!((r.pl - want[2]).abs() < 1e-12);
        }
    }

    #[test]
    fn lower_energy_gauge_follows_field() {
        let minus = shared_projector(ProjectorTag::GaugeMinus);
        assert!((initial_state(2.0, GaugePolicy::LowerEnergy).expectation(minus) - 1.0).abs() < 1e-12);
        assert!(initial_state(-2.0, GaugePolicy::LowerEnergy).expectation(minus).abs() < 1e-12);
        assert!((initial_state(0.0, GaugePolicy::LowerEnergy).expectation(minus) - 0.5).abs() < 1e-12);
    }

    #[test]
    fn noiseless_measurement_matches_direct_propagation() {
        let seq = PulseSequence::new(vec![Segment::new(ExchangeConfig::new(10.0, 3.0, 0.0, 0.0).unwrap(), 0.037)]).unwrap();
        let rho = initial_state(0.0, GaugePolicy::EqualMixture);
        let stats = measure_populations(&seq, &rho, &NoiseEnv::noiseless(), 3, 1).unwrap();
        let direct = readout(&propagate(&seq, &rho).unwrap());
        assert!((stats.p0 - direct.p0).abs() < 1e-12);
        assert_eq!(stats.p0_stderr, 0.0);
    }

    #[test]
    fn thread_count_does_not_change_results() {
        let seq = PulseSequence::new(vec![Segment::new(ExchangeConfig::off(0.5), 2.0)]).unwrap();
        let rho = initial_state(0.5, GaugePolicy::EqualMixture);
        let env = NoiseEnv {
            hyperfine: HyperfineModel::quasi_static(0.3),
            ..NoiseEnv::default()
        };
        let run = |n| {
            rayon::ThreadPoolBuilder::new()
                .num_threads(n)
                .build()
                .unwrap()
                .install(|| measure_populations(&seq, &rho, &env, 257, 9).unwrap())
        };
        assert_eq!(run(1), run(4));
    }

    #[test]
    fn sliced_unitary_with_constant_fields_is_exact() {
        let seq = PulseSequence::new(vec![
            Segment::new(ExchangeConfig::new(4.0, 1.0, 2.0, 0.3).unwrap(), 0.31),
            Segment::new(ExchangeConfig::off(0.3), 0.17),
        ])
        .unwrap();
        let b = [[0.1, -0.2, 0.05], [0.0, 0.3, -0.1], [0.2, 0.2, 0.2]];
        let traces = vec![b; 40];
        let fields = LocalFields { b };
        let want = seq.perturbed(&fields, |c| *c).unitary().unwrap();
        let got = sliced_unitary(&seq, &traces, 0.013).unwrap();
        assert!((want - got).norm() < 1e-10);
    }
}
