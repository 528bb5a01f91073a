//! Reproducible noise: quasi-static Overhauser fields, quasi-static gate
//! voltage offsets and band-limited 1/f^α traces.
//!
//! Every random draw comes from a ChaCha8 stream keyed by
//! `(master seed, shot index)`, so shots can be evaluated in any order or in
//! parallel with identical results.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rustfft::FftPlanner;
use serde::{Deserialize, Serialize};

use crate::device::{exchange_noise_factors, DeviceParams, VoltageVector};
use crate::error::{invalid, Result};
use crate::hamiltonian::{ExchangeConfig, LocalFields};
use crate::spin::C64;

/// Time-resolved hyperfine fluctuations.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrajectoryParams {
    pub alpha: f64,
    pub f_min_hz: f64,
    pub f_max_hz: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum HyperfineMode {
    #[default]
    QuasiStatic,
    Trajectory(TrajectoryParams),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HyperfineModel {
    /// Per-axis standard deviation of each local field component (MHz).
    pub sigma_mhz: f64,
    /// `"quasi-static"`, or `{ trajectory = { alpha, f_min_hz, f_max_hz } }`.
    #[serde(default)]
    pub mode: HyperfineMode,
}

impl HyperfineModel {
    pub fn quasi_static(sigma_mhz: f64) -> Self {
        Self {
            sigma_mhz,
            mode: HyperfineMode::QuasiStatic,
        }
    }

    pub fn off() -> Self {
        Self::quasi_static(0.0)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.sigma_mhz >= 0.0) || !self.sigma_mhz.is_finite() {
            return Err(invalid("hyperfine.sigma_mhz", format!("must be >= 0, got {}", self.sigma_mhz)));
        }
        if let HyperfineMode::Trajectory(t) = self.mode {
            OneOverF::from_trajectory(&t, self.sigma_mhz).validate()?;
        }
        Ok(())
    }
}

impl Default for HyperfineModel {
    fn default() -> Self {
        Self::off()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize, Default)]
pub struct ChargeNoiseModel {
    /// Standard deviation of the quasi-static offset on each physical gate (V).
    pub sigma_volts: f64,
}

impl ChargeNoiseModel {
    pub fn off() -> Self {
        Self { sigma_volts: 0.0 }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.sigma_volts >= 0.0) || !self.sigma_volts.is_finite() {
            return Err(invalid("charge.sigma_volts", format!("must be >= 0, got {}", self.sigma_volts)));
        }
        Ok(())
    }
}

/// One Monte Carlo shot of the quasi-static noise.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NoiseRealization {
    pub fields: LocalFields,
    pub voltage_offset: VoltageVector,
    pub shot: u64,
    pub seed: u64,
}

/// Random stream for one shot. `lane` separates independent consumers that
/// share a shot (field traces, RB randomisations).
pub fn shot_rng(seed: u64, shot: u64, lane: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ lane.wrapping_mul(0x9E37_79B9_7F4A_7C15));
    rng.set_stream(shot);
    rng
}

pub fn sample_realization(h: &HyperfineModel, c: &ChargeNoiseModel, seed: u64, shot: u64) -> NoiseRealization {
    let mut rng = shot_rng(seed, shot, 0);
    let mut fields = LocalFields::zero();
    for row in fields.b.iter_mut() {
        for v in row.iter_mut() {
            let z: f64 = rng.sample(StandardNormal);
            *v = h.sigma_mhz * z;
        }
    }
    let dv: [f64; 3] = std::array::from_fn(|_| {
        let z: f64 = rng.sample(StandardNormal);
        c.sigma_volts * z
    });
    NoiseRealization {
        fields,
        voltage_offset: VoltageVector::from_array(dv),
        shot,
        seed,
    }
}

/// Exchange modified by a gate-voltage offset: `J_p · exp((C·δv)_p/V0_p)`.
pub fn perturb_exchange(params: &DeviceParams, cfg: &ExchangeConfig, dv: &VoltageVector) -> ExchangeConfig {
    let f = exchange_noise_factors(params, dv);
    let j = cfg.pairs();
    cfg.with_pairs(std::array::from_fn(|p| j[p] * f[p]))
}

/// Band-limited Gaussian process with PSD ∝ 1/f^α; frequencies in MHz,
/// times in µs.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OneOverF {
    pub alpha: f64,
    pub f_min_mhz: f64,
    pub f_max_mhz: f64,
    /// Root-mean-square amplitude of the trace (MHz).
    pub rms: f64,
}

impl OneOverF {
    pub fn from_trajectory(t: &TrajectoryParams, rms: f64) -> Self {
        Self {
            alpha: t.alpha,
            f_min_mhz: t.f_min_hz * 1e-6,
            f_max_mhz: t.f_max_hz * 1e-6,
            rms,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.alpha > 0.0) || !self.alpha.is_finite() {
            return Err(invalid("alpha", format!("must be > 0, got {}", self.alpha)));
        }
        if !(self.f_min_mhz > 0.0) || !(self.f_min_mhz < self.f_max_mhz) || !self.f_max_mhz.is_finite() {
            return Err(invalid(
                "band",
                format!("need 0 < f_min < f_max, got [{}, {}] MHz", self.f_min_mhz, self.f_max_mhz),
            ));
        }
        if !(self.rms >= 0.0) {
            return Err(invalid("rms", "must be >= 0"));
        }
        Ok(())
    }
}

pub fn one_over_f_trace(model: &OneOverF, duration_us: f64, dt_us: f64, seed: u64) -> Result<Vec<f64>> {
    model.validate()?;
    if !(dt_us > 0.0) || !(duration_us > 0.0) {
        return Err(invalid("dt", "duration and dt must be positive"));
    }
    if dt_us >= 0.5 / model.f_max_mhz {
        return Err(invalid("dt", format!("dt = {dt_us} us does not resolve f_max = {} MHz", model.f_max_mhz)));
    }
    let n = (duration_us / dt_us).ceil() as usize;
    if n < 4 {
        return Err(invalid("duration", "trace shorter than four samples"));
    }
    let df = 1.0 / (n as f64 * dt_us);
    let band: Vec<usize> = (1..n.div_ceil(2))
        .filter(|&k| {
            let f = k as f64 * df;
            f >= model.f_min_mhz && f <= model.f_max_mhz
        })
        .collect();
    if band.is_empty() {
        return Err(invalid("band", "no frequency bins inside the band for this duration"));
    }
    if model.rms == 0.0 {
        return Ok(vec![0.0; n]);
    }
    let weight = |k: usize| (k as f64 * df).powf(-model.alpha / 2.0);
    let total: f64 = band.iter().map(|&k| weight(k).powi(2)).sum();
    let scale = model.rms * n as f64 / (2.0 * total.sqrt());
    let mut rng = shot_rng(seed, 0, 7);
    let mut spec = vec![C64::new(0.0, 0.0); n];
    for &k in &band {
        let a: f64 = rng.sample(StandardNormal);
        let b: f64 = rng.sample(StandardNormal);
        let x = C64::new(a, b) * (scale * weight(k));
        spec[k] = x;
        spec[n - k] = x.conj();
    }
    let fft = FftPlanner::new().plan_fft_inverse(n);
    fft.process(&mut spec);
    Ok(spec.iter().map(|z| z.re / n as f64).collect())
}

/// Independent 1/f traces for the nine field components of one shot,
/// indexed `[site][axis]`.
pub fn field_traces(h: &HyperfineModel, seed: u64, shot: u64, duration_us: f64, dt_us: f64) -> Result<Vec<[[f64; 3]; 3]>> {
    let HyperfineMode::Trajectory(t) = h.mode else {
        return Err(invalid("hyperfine.mode", "field traces need trajectory mode"));
    };
    let model = OneOverF::from_trajectory(&t, h.sigma_mhz);
    let mut rng = shot_rng(seed, shot, 3);
    let mut comps = Vec::with_capacity(9);
    for _ in 0..9 {
        comps.push(one_over_f_trace(&model, duration_us, dt_us, rng.random())?);
    }
    let n = comps[0].len();
    Ok((0..n)
        .map(|i| std::array::from_fn(|s| std::array::from_fn(|a| comps[3 * s + a][i])))
        .collect())
}
