//! Leakage versus field (spectroscopy of the qubit-leakage crossings) and
//! leakage versus gap at a fixed long dwell.

use serde::{Deserialize, Serialize};

use super::free_evolution::{lpi_point, readout_observables};
use super::{initial_state, map_shots, mean_stderr, measure_populations, require_shots, GaugePolicy, NoiseEnv, SweepAxis, SweepResult};
use crate::dynamics::{DwellTrace, PulseSequence, Segment};
use crate::error::{invalid, Error, Result};
use crate::fitting::{fit_double_gaussian, fit_gaussian_sum, fit_power_law, FitResult};
use crate::hamiltonian::{build_hamiltonian, eigensystem, ExchangeConfig};
use crate::noise::{perturb_exchange, HyperfineMode};

/// Default dwell: ten inverse hyperfine widths.
pub fn default_dwell_us(env: &NoiseEnv) -> Result<f64> {
    let s = env.hyperfine.sigma_mhz;
    if s > 0.0 {
        Ok(10.0 / s)
    } else {
        Err(invalid("dwell_us", "needs hyperfine noise or an explicit dwell"))
    }
}

/// Leakage after a dwell of `dwell_us` at `config`, per shot from `|0⟩`.
/// Returns shot samples of `[P0, P0→1, PL]`.
pub(crate) fn dwell_samples(
    config: &ExchangeConfig,
    gauge: GaugePolicy,
    dwell_us: f64,
    env: &NoiseEnv,
    shots: usize,
    seed: u64,
) -> Result<Vec<[f64; 3]>> {
    let rho0 = initial_state(config.bz, gauge);
    let obs = readout_observables();
    map_shots(shots, |s| {
        let r = env.realization(seed, s);
        let cfg = perturb_exchange(&env.device, config, &r.voltage_offset);
        let eig = eigensystem(&build_hamiltonian(&cfg, &r.fields)?)?;
        Ok(std::array::from_fn(|k| DwellTrace::new(&eig, rho0.matrix(), &obs[k]).eval(dwell_us)))
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SpectroscopyParams {
    /// Coupling on the driven pairs (MHz).
    pub j_mhz: f64,
    /// Which pairs are on: all three (the LPI) or a single pair.
    #[serde(default)]
    pub pairs: PairSelection,
    #[serde(default)]
    pub gauge: GaugePolicy,
    /// `None` picks [`default_dwell_us`].
    #[serde(default)]
    pub dwell_us: Option<f64>,
    /// Gaussians fitted to PL(Bz); 0 disables fitting.
    #[serde(default = "default_peaks")]
    pub peaks: usize,
}

fn default_peaks() -> usize {
    2
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum PairSelection {
    #[default]
    All,
    P12,
    P23,
    P13,
}

impl PairSelection {
    pub fn config(self, j: f64, bz: f64) -> Result<ExchangeConfig> {
        let [a, b, c] = match self {
            PairSelection::All => [j, j, j],
            PairSelection::P12 => [j, 0.0, 0.0],
            PairSelection::P23 => [0.0, j, 0.0],
            PairSelection::P13 => [0.0, 0.0, j],
        };
        ExchangeConfig::new(a, b, c, bz)
    }
}

/// PL, P0 and P0→1 versus uniform field, with a Gaussian-sum fit to PL.
/// Every field point uses the same noise draws.
pub fn leakage_spectroscopy(
    p: &SpectroscopyParams,
    bz_grid: &[f64],
    env: &NoiseEnv,
    shots: usize,
    seed: u64,
) -> Result<SweepResult> {
    require_shots(shots)?;
    env.validate()?;
    if bz_grid.len() < 3 {
        return Err(Error::EmptyGrid("bz grid needs at least 3 points"));
    }
    if let HyperfineMode::Trajectory(_) = env.hyperfine.mode {
        return Err(invalid("hyperfine.mode", "spectroscopy uses quasi-static noise"));
    }
    let dwell = match p.dwell_us {
        Some(d) if d > 0.0 => d,
        Some(d) => return Err(invalid("dwell_us", format!("must be positive, got {d}"))),
        None => default_dwell_us(env)?,
    };
    let mut cols = (0..4).map(|_| Vec::with_capacity(bz_grid.len())).collect::<Vec<_>>();
    for &bz in bz_grid {
        let samples = dwell_samples(&p.pairs.config(p.j_mhz, bz)?, p.gauge, dwell, env, shots, seed)?;
        let (pl, pl_err) = mean_stderr(&samples.iter().map(|s| s[2]).collect::<Vec<_>>());
        cols[0].push(pl);
        cols[1].push(pl_err);
        cols[2].push(mean_stderr(&samples.iter().map(|s| s[0]).collect::<Vec<_>>()).0);
        cols[3].push(mean_stderr(&samples.iter().map(|s| s[1]).collect::<Vec<_>>()).0);
    }
    let mut out = SweepResult::new("leakage-spectroscopy", vec![SweepAxis::new("bz_mhz", "MHz", bz_grid.to_vec())]);
    for (name, c) in ["pl", "pl_stderr", "p0", "p0to1"].iter().zip(cols) {
        out.push_column(name, c)?;
    }
    out.set("dwell_us", dwell);
    if p.peaks > 0 {
        let fit = if p.peaks == 2 {
            fit_double_gaussian(bz_grid, out.column("pl").unwrap())
        } else {
            fit_gaussian_sum(bz_grid, out.column("pl").unwrap(), p.peaks)
        };
        if fit.converged {
            if let Some(gap) = gap_from_fit(&fit) {
                out.set("gap_mhz", gap);
            }
        }
        out.fits.push(fit);
    }
    Ok(out)
}

/// Fitted peak centres, ascending.
pub fn peak_centers(fit: &FitResult) -> Vec<f64> {
    let mut c: Vec<f64> = fit
        .params
        .iter()
        .filter(|p| p.name.starts_with("center_"))
        .map(|p| p.value)
        .collect();
    c.sort_by(f64::total_cmp);
    c
}

/// Qubit-leakage gap from the outermost pair of fitted peaks: the mean of
/// their distances from zero field.
pub fn gap_from_fit(fit: &FitResult) -> Option<f64> {
    let c = peak_centers(fit);
    if c.len() < 2 {
        return None;
    }
    Some(0.5 * (c[0].abs() + c[c.len() - 1].abs()))
}

/// Leakage after a fixed dwell at LPI points of increasing gap, with a
/// log-log power-law fit of PL versus `E_g`.
pub fn leakage_vs_gap(
    gaps: &[f64],
    bz: f64,
    dwell_us: f64,
    gauge: GaugePolicy,
    env: &NoiseEnv,
    shots: usize,
    seed: u64,
) -> Result<SweepResult> {
    require_shots(shots)?;
    env.validate()?;
    if gaps.is_empty() {
        return Err(Error::EmptyGrid("gaps"));
    }
    if !(dwell_us > 0.0) {
        return Err(invalid("dwell_us", "must be positive"));
    }
    let mut pl = Vec::with_capacity(gaps.len());
    let mut err = Vec::with_capacity(gaps.len());
    for &g in gaps {
        if !(g > 0.0) {
            return Err(invalid("gap", format!("gaps must be positive, got {g}")));
        }
        let cfg = lpi_point(g, bz)?;
        let (m, e) = match env.hyperfine.mode {
            HyperfineMode::QuasiStatic => {
                let s = dwell_samples(&cfg, gauge, dwell_us, env, shots, seed)?;
                mean_stderr(&s.iter().map(|x| x[2]).collect::<Vec<_>>())
            }
            HyperfineMode::Trajectory(_) => {
                let seq = PulseSequence::new(vec![Segment::new(cfg, dwell_us)])?;
                let r = measure_populations(&seq, &initial_state(bz, gauge), env, shots, seed)?;
                (r.pl, r.pl_stderr)
            }
        };
        pl.push(m);
        err.push(e);
    }
    let mut out = SweepResult::new("leakage-vs-gap", vec![SweepAxis::new("gap_mhz", "MHz", gaps.to_vec())]);
    let fit = fit_power_law(gaps, &pl);
    if let Some(e) = fit.value("exponent") {
        out.set("slope", e);
    }
    out.fits.push(fit);
    out.push_column("pl", pl)?;
    out.push_column("pl_stderr", err)?;
    out.set("dwell_us", dwell_us);
    Ok(out)
}
