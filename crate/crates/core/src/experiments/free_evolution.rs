//! Free evolution at a fixed exchange point, T2* extraction and the T2*
//! dependence on the qubit-leakage gap.

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::{initial_state, map_shots, mean_stderr, require_shots, GaugePolicy, NoiseEnv, SweepAxis, SweepResult};
use crate::clifford::{ExchangeRotation, Pair};
use crate::dynamics::{DwellTrace, PulseSequence};
use crate::error::{invalid, Error, Result};
use crate::fitting::{fit_power_law, FitResult};
use crate::hamiltonian::{build_hamiltonian, eigensystem, ExchangeConfig};
use crate::noise::{perturb_exchange, shot_rng, HyperfineMode, HyperfineModel};
use crate::spin::{ideal_qubit_flip, shared_projector, Mat8, ProjectorTag};

/// Rotation about n̂ that takes ẑ onto the Bloch equator.
pub fn equator_angle() -> f64 {
    (-1.0f64 / 3.0).acos()
}

/// Preparation of an equatorial state from `|0⟩` and its inverse, as 1-J
/// pulses on pair (2,3) at coupling `j`.
pub fn prepare_plus(j: f64) -> (PulseSequence, PulseSequence) {
    let theta = equator_angle();
    let prep = ExchangeRotation { pair: Pair::P23, angle: theta }.segment(j);
    let undo = ExchangeRotation {
        pair: Pair::P23,
        angle: std::f64::consts::TAU - theta,
    }
    .segment(j);
    (
        PulseSequence::new(vec![prep]).expect("one segment"),
        PulseSequence::new(vec![undo]).expect("one segment"),
    )
}

/// Readout observables as linear operators on the pre-readout state:
/// `[P0, P0→1, PL]`.
pub fn readout_observables() -> [Mat8; 3] {
    let s = shared_projector(ProjectorTag::S13Singlet);
    let q = Mat8::identity() - s;
    let f = ideal_qubit_flip();
    let one = q * f.adjoint() * s * f * q;
    let l = Mat8::identity() - s - one;
    [*s, one, l]
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FreeEvolutionParams {
    pub config: ExchangeConfig,
    #[serde(default)]
    pub gauge: GaugePolicy,
    /// Coupling used for the equatorial preparation pulses (MHz).
    #[serde(default = "default_prep_j")]
    pub prep_j_mhz: f64,
}

fn default_prep_j() -> f64 {
    200.0
}

/// Per-shot dwell traces; evaluation at any time is cheap.
pub struct ShotTraces {
    /// `[P0, P0→1, PL, P0 after the equatorial round trip]` per shot.
    traces: Vec<[DwellTrace; 4]>,
}

impl ShotTraces {
    pub fn compute(p: &FreeEvolutionParams, env: &NoiseEnv, shots: usize, seed: u64) -> Result<Self> {
        require_shots(shots)?;
        env.validate()?;
        p.config.validate()?;
        if let HyperfineMode::Trajectory(_) = env.hyperfine.mode {
            return Err(invalid("hyperfine.mode", "free evolution uses quasi-static noise"));
        }
        if !(p.prep_j_mhz > 0.0) {
            return Err(invalid("prep_j_mhz", "must be positive"));
        }
        let rho0 = initial_state(p.config.bz, p.gauge);
        let obs = readout_observables();
        let (prep, undo) = prepare_plus(p.prep_j_mhz);
        let prep = prep.perturbed(&Default::default(), |c| ExchangeConfig { bz: p.config.bz, ..*c });
        let undo = undo.perturbed(&Default::default(), |c| ExchangeConfig { bz: p.config.bz, ..*c });
        let traces = map_shots(shots, |s| {
            let r = env.realization(seed, s);
            let cfg = perturb_exchange(&env.device, &p.config, &r.voltage_offset);
            let eig = eigensystem(&build_hamiltonian(&cfg, &r.fields)?)?;
            let rho = rho0.matrix();
            let up = env.perturb(&prep, &r).unitary()?;
            let uu = env.perturb(&undo, &r).unitary()?;
            let rho_plus = up * rho * up.adjoint();
            let obs_plus = uu.adjoint() * obs[0] * uu;
            Ok([
                DwellTrace::new(&eig, rho, &obs[0]),
                DwellTrace::new(&eig, rho, &obs[1]),
                DwellTrace::new(&eig, rho, &obs[2]),
                DwellTrace::new(&eig, &rho_plus, &obs_plus),
            ])
        })?;
        Ok(Self { traces })
    }

    pub fn shots(&self) -> usize {
        self.traces.len()
    }

    /// `S = (P0 + P+)/2` for every shot at every time (`[shot][time]`).
    pub fn coherence(&self, times: &[f64]) -> Vec<Vec<f64>> {
        self.traces
            .iter()
            .map(|tr| times.iter().map(|&t| 0.5 * (tr[0].eval(t) + tr[3].eval(t))).collect())
            .collect()
    }

    /// Shot means of `[P0, P0→1, PL, P+]` at every time.
    pub fn means(&self, times: &[f64]) -> [Vec<f64>; 4] {
        std::array::from_fn(|k| {
            times
                .iter()
                .map(|&t| self.traces.iter().map(|tr| tr[k].eval(t)).sum::<f64>() / self.traces.len() as f64)
                .collect()
        })
    }

    /// Per-shot values of channel `k` at time `t`.
    pub fn channel(&self, k: usize, t: f64) -> Vec<f64> {
        self.traces.iter().map(|tr| tr[k].eval(t)).collect()
    }

    /// Shot-averaged infinite-time value of channel `k`.
    pub fn time_average(&self, k: usize) -> (f64, f64) {
        mean_stderr(&self.traces.iter().map(|tr| tr[k].time_average(1e-9)).collect::<Vec<_>>())
    }
}

/// First time where `N(t) = (S − ½)/(S(0) − ½)` drops to 1/e, linearly
/// interpolated between samples.
pub fn decay_time(times: &[f64], s: &[f64]) -> Result<f64> {
    let t_max = times.last().copied().unwrap_or(0.0);
    if times.len() < 2 || times.len() != s.len() {
        return Err(Error::EmptyGrid("decay time needs matching samples"));
    }
    let s0 = s[0] - 0.5;
    if s0.abs() < 1e-12 {
        return Err(Error::Undetermined { t_max });
    }
    let target = (-1.0f64).exp();
    let n: Vec<f64> = s.iter().map(|v| (v - 0.5) / s0).collect();
    for k in 1..n.len() {
        if n[k] <= target {
            let f = (n[k - 1] - target) / (n[k - 1] - n[k]);
            return Ok(times[k - 1] + f * (times[k] - times[k - 1]));
        }
    }
    Err(Error::Undetermined { t_max })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct T2Star {
    pub t2star_us: f64,
    /// Bootstrap standard deviation over shot resamples.
    pub sigma_us: f64,
    pub t_max_us: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct T2StarOptions {
    /// Initial time window (µs); doubled until the decay is seen.
    pub t_max_us: f64,
    pub points: usize,
    pub max_doublings: usize,
    pub bootstrap: usize,
}

impl Default for T2StarOptions {
    fn default() -> Self {
        Self {
            t_max_us: 4.0,
            points: 400,
            max_doublings: 8,
            bootstrap: 100,
        }
    }
}

fn grid(t_max: f64, points: usize) -> Vec<f64> {
    (0..points).map(|k| t_max * k as f64 / (points - 1) as f64).collect()
}

pub fn t2star_from_traces(traces: &ShotTraces, opts: &T2StarOptions, seed: u64) -> Result<T2Star> {
    if opts.points < 3 || !(opts.t_max_us > 0.0) {
        return Err(invalid("t2star", "need points >= 3 and t_max_us > 0"));
    }
    let mut t_max = opts.t_max_us;
    for _ in 0..=opts.max_doublings {
        let times = grid(t_max, opts.points);
        let per_shot = traces.coherence(&times);
        let n = per_shot.len();
        let mean: Vec<f64> = (0..times.len())
            .map(|k| per_shot.iter().map(|s| s[k]).sum::<f64>() / n as f64)
            .collect();
        match decay_time(&times, &mean) {
            Ok(t2) => {
                let mut rng = shot_rng(seed, 0, 5);
                let mut draws = Vec::with_capacity(opts.bootstrap);
                for _ in 0..opts.bootstrap {
                    let mut acc = vec![0.0; times.len()];
                    for _ in 0..n {
                        let s = &per_shot[rng.random_range(0..n)];
                        for (a, v) in acc.iter_mut().zip(s) {
                            *a += v;
                        }
                    }
                    acc.iter_mut().for_each(|a| *a /= n as f64);
                    if let Ok(t) = decay_time(&times, &acc) {
                        draws.push(t);
                    }
                }
                let sigma = if draws.len() > 1 { mean_stderr(&draws).1 * (draws.len() as f64).sqrt() } else { f64::NAN };
                return Ok(T2Star {
                    t2star_us: t2,
                    sigma_us: sigma,
                    t_max_us: t_max,
                });
            }
            Err(Error::Undetermined { .. }) => t_max *= 2.0,
            Err(e) => return Err(e),
        }
    }
    Err(Error::Undetermined { t_max: t_max / 2.0 })
}

pub fn t2star(p: &FreeEvolutionParams, env: &NoiseEnv, shots: usize, seed: u64, opts: &T2StarOptions) -> Result<T2Star> {
    let traces = ShotTraces::compute(p, env, shots, seed)?;
    t2star_from_traces(&traces, opts, seed)
}

/// Equal-coupling operating point with gap `E_g`; zero gap is exchange off.
pub fn lpi_point(gap: f64, bz: f64) -> Result<ExchangeConfig> {
    if gap == 0.0 {
        Ok(ExchangeConfig::off(bz))
    } else {
        ExchangeConfig::lpi_for_gap(gap, bz)
    }
}

/// Free-evolution traces on a time grid.
pub fn free_evolution(p: &FreeEvolutionParams, env: &NoiseEnv, times: &[f64], shots: usize, seed: u64) -> Result<SweepResult> {
    if times.is_empty() {
        return Err(Error::EmptyGrid("times"));
    }
    let traces = ShotTraces::compute(p, env, shots, seed)?;
    let [p0, p1, pl, pplus] = traces.means(times);
    let mut out = SweepResult::new("free-evolution", vec![SweepAxis::new("time_us", "us", times.to_vec())]);
    out.push_column("p0", p0)?;
    out.push_column("p0to1", p1)?;
    out.push_column("pl", pl)?;
    out.push_column("p_plus", pplus)?;
    let (avg, err) = traces.time_average(0);
    out.set("p0_dephased", avg);
    out.set("p0_dephased_stderr", err);
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PowerLawWindow {
    pub min_mhz: f64,
    pub max_mhz: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct T2StarScan {
    pub gaps_mhz: Vec<f64>,
    pub t2star_us: Vec<f64>,
    pub sigma_us: Vec<f64>,
    pub low_fit: Option<FitResult>,
    pub high_fit: Option<FitResult>,
}

impl T2StarScan {
    pub fn baseline(&self) -> Option<f64> {
        self.gaps_mhz.iter().position(|&g| g == 0.0).map(|k| self.t2star_us[k])
    }

    /// Gap of the largest finite T2*.
    /// Start of the decreasing tail: the smallest gap from which T2* falls
    /// at every later grid point. `None` unless the tail has at least two
    /// steps and is preceded by a point below its start (a real maximum).
    pub fn turnover_mhz(&self) -> Option<f64> {
        let pts: Vec<(f64, f64)> = self
            .gaps_mhz
            .iter()
            .zip(&self.t2star_us)
            .filter(|(_, t)| t.is_finite())
            .map(|(g, t)| (*g, *t))
            .collect();
        let n = pts.len();
        let mut k = n.checked_sub(1)?;
        while k > 0 && pts[k - 1].1 > pts[k].1 {
            k -= 1;
        }
        (k > 0 && n - 1 - k >= 2).then_some(pts[k].0)
    }

    pub fn to_sweep(&self) -> Result<SweepResult> {
        let mut out = SweepResult::new("t2star-scan", vec![SweepAxis::new("gap_mhz", "MHz", self.gaps_mhz.clone())]);
        out.push_column("t2star_us", self.t2star_us.clone())?;
        out.push_column("t2star_sigma_us", self.sigma_us.clone())?;
        for (label, fit) in [("low", &self.low_fit), ("high", &self.high_fit)] {
            if let Some(f) = fit {
                let mut f = f.clone();
                f.model = format!("{label}:{}", f.model);
                if let Some(e) = f.value("exponent") {
                    out.set(&format!("{label}_exponent"), e);
                }
                out.fits.push(f);
            }
        }
        if let Some(b) = self.baseline() {
            out.set("baseline_us", b);
        }
        if let Some(g) = self.turnover_mhz() {
            out.set("turnover_mhz", g);
        }
        Ok(out)
    }
}

fn window_fit(gaps: &[f64], t2: &[f64], w: &PowerLawWindow) -> FitResult {
    let (xs, ys): (Vec<f64>, Vec<f64>) = gaps
        .iter()
        .zip(t2)
        .filter(|(g, t)| **g >= w.min_mhz && **g <= w.max_mhz && **g > 0.0 && t.is_finite())
        .map(|(g, t)| (*g, *t))
        .unzip();
    fit_power_law(&xs, &ys)
}

/// T2* at every gap, fitted with power laws on the two windows. Each gap
/// uses the same noise draws, so the curve is smooth in `E_g`.
pub fn t2star_scan(
    gaps: &[f64],
    base: &FreeEvolutionParams,
    env: &NoiseEnv,
    shots: usize,
    seed: u64,
    opts: &T2StarOptions,
    low: Option<PowerLawWindow>,
    high: Option<PowerLawWindow>,
) -> Result<T2StarScan> {
    if gaps.is_empty() {
        return Err(Error::EmptyGrid("gaps"));
    }
    let mut t2 = Vec::with_capacity(gaps.len());
    let mut sig = Vec::with_capacity(gaps.len());
    for &g in gaps {
        if !(g >= 0.0) {
            return Err(invalid("gap", format!("gaps must be >= 0, got {g}")));
        }
        let p = FreeEvolutionParams {
            config: lpi_point(g, base.config.bz)?,
            ..*base
        };
        match t2star(&p, env, shots, seed, opts) {
            Ok(r) => {
                t2.push(r.t2star_us);
                sig.push(r.sigma_us);
            }
            Err(Error::Undetermined { .. }) => {
                t2.push(f64::NAN);
                sig.push(f64::NAN);
            }
            Err(e) => return Err(e),
        }
    }
    Ok(T2StarScan {
        low_fit: low.map(|w| window_fit(gaps, &t2, &w)),
        high_fit: high.map(|w| window_fit(gaps, &t2, &w)),
        gaps_mhz: gaps.to_vec(),
        t2star_us: t2,
        sigma_us: sig,
    })
}

/// Hyperfine amplitude giving `T2*(E_g = 0) = target_us`. T2* scales as
/// 1/σ at zero field, so a rescaling iteration converges in one or two
/// steps; common random numbers keep it deterministic.
pub fn calibrate_hyperfine(
    target_us: f64,
    bz: f64,
    env: &NoiseEnv,
    shots: usize,
    seed: u64,
    opts: &T2StarOptions,
) -> Result<f64> {
    if !(target_us > 0.0) {
        return Err(invalid("target_us", "must be positive"));
    }
    let p = FreeEvolutionParams {
        config: ExchangeConfig::off(bz),
        gauge: GaugePolicy::EqualMixture,
        prep_j_mhz: default_prep_j(),
    };
    let mut sigma = 1.0 / (2.0 * std::f64::consts::PI * target_us);
    for _ in 0..30 {
        let e = NoiseEnv {
            hyperfine: HyperfineModel::quasi_static(sigma),
            ..*env
        };
        let t = t2star(&p, &e, shots, seed, opts)?.t2star_us;
        let next = sigma * t / target_us;
        if ((next - sigma) / sigma).abs() < 1e-9 {
            return Ok(next);
        }
        sigma = next;
    }
    Ok(sigma)
}

/// Gate-noise amplitude (V) for which `T2*(gap)` equals `fraction` of the
/// exchange-off T2* (the baseline). Bisection in log σ_V.
#[allow(clippy::too_many_arguments)]
pub fn calibrate_charge_noise(
    gap: f64,
    fraction: f64,
    base: &FreeEvolutionParams,
    env: &NoiseEnv,
    shots: usize,
    seed: u64,
    opts: &T2StarOptions,
    bracket: (f64, f64),
) -> Result<f64> {
    if !(fraction > 0.0 && fraction < 1.0) {
        return Err(invalid("fraction", "must lie in (0, 1)"));
    }
    let p = FreeEvolutionParams {
        config: lpi_point(gap, base.config.bz)?,
        ..*base
    };
    let idle = FreeEvolutionParams {
        config: ExchangeConfig::off(base.config.bz),
        ..*base
    };
    let target = fraction * t2star(&idle, env, shots, seed, opts)?.t2star_us;
    let at = |sv: f64| -> Result<f64> {
        let e = NoiseEnv {
            charge: crate::noise::ChargeNoiseModel { sigma_volts: sv },
            ..*env
        };
        Ok(t2star(&p, &e, shots, seed, opts)?.t2star_us)
    };
    if !(bracket.0 > 0.0 && bracket.0 < bracket.1) {
        return Err(invalid("bracket", "need 0 < low < high"));
    }
    let (mut lo, mut hi) = (bracket.0.ln(), bracket.1.ln());
    if at(lo.exp())? < target || at(hi.exp())? > target {
        return Err(invalid("bracket", "charge-noise bracket does not contain the target"));
    }
    // 0.5% in σ_V is far below the Monte Carlo error of T2*
    while hi - lo > 5e-3 {
        let mid = 0.5 * (lo + hi);
        if at(mid.exp())? > target {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok((0.5 * (lo + hi)).exp())
}
