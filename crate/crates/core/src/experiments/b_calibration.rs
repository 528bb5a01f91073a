//! Coil calibration from 1-J leakage spectroscopy.
//!
//! A 1-J pulse on one pair crosses qubit and leakage levels where the
//! Zeeman frequency equals J. Locating that crossing in coil current for
//! several J, with each J measured from its exchange oscillation, gives
//! `|B|(I)` at a set of points, fitted to `√((κI + B_par)² + B_perp²)`.
//!
//! The crossing is probed on pair (1,3): `|0⟩` is its exchange eigenstate,
//! so leakage shows up on a near-zero background. `|0⟩` does not oscillate
//! under J13, so J itself is read from a pair (1,2) oscillation set to the
//! same value.
//!
//! The total field is simulated along the quantisation axis with magnitude
//! `|B(I)|`: only its magnitude enters an isotropic spin Hamiltonian with
//! isotropic hyperfine noise.

use serde::{Deserialize, Serialize};

use super::free_evolution::readout_observables;
use super::spectroscopy::{default_dwell_us, dwell_samples, PairSelection};
use super::{initial_state, map_shots, mean_stderr, require_shots, GaugePolicy, NoiseEnv, SweepAxis, SweepResult};
use crate::dynamics::DwellTrace;
use crate::error::{invalid, Error, Result};
use crate::fitting::{fit_gaussian_sum, fit_model, FitParam, FitResult};
use crate::hamiltonian::{build_hamiltonian, eigensystem, ExchangeConfig, DEFAULT_G_MU_B_MHZ_PER_T};
use crate::noise::{perturb_exchange, HyperfineMode};
use crate::spectrum::{fft_peak, FftPeak};

/// Coil plus ambient field: `B(I) = κI ẑ' + B_par ẑ' + B_perp x̂'`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CoilModel {
    pub kappa_mt_per_ma: f64,
    pub b_par_mt: f64,
    pub b_perp_mt: f64,
}

impl CoilModel {
    pub fn field_mt(&self, current_ma: f64) -> f64 {
        (self.kappa_mt_per_ma * current_ma + self.b_par_mt).hypot(self.b_perp_mt)
    }

    /// Currents where `|B| = b` (mT), ascending; empty if unreachable.
    pub fn currents_for(&self, b: f64) -> Vec<f64> {
        let d = b * b - self.b_perp_mt * self.b_perp_mt;
        if d < 0.0 || self.kappa_mt_per_ma == 0.0 {
            return Vec::new();
        }
        let mut v: Vec<f64> = [-d.sqrt(), d.sqrt()]
            .iter()
            .map(|r| (r - self.b_par_mt) / self.kappa_mt_per_ma)
            .collect();
        v.sort_by(f64::total_cmp);
        v
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BCalibrationParams {
    /// The coil being calibrated; the pipeline only sees its simulated data.
    pub coil: CoilModel,
    pub j_values_mhz: Vec<f64>,
    #[serde(default = "default_spectroscopy_pair")]
    pub spectroscopy_pair: PairSelection,
    #[serde(default = "default_oscillation_pair")]
    pub oscillation_pair: PairSelection,
    /// Nominal κ used to place the current windows.
    pub kappa_guess_mt_per_ma: f64,
    /// Half-width (mA) of each window around a nominal crossing.
    pub window_ma: f64,
    pub window_points: usize,
    #[serde(default)]
    pub dwell_us: Option<f64>,
    /// Exchange-oscillation trace: length and sampling (µs).
    pub trace_us: f64,
    pub trace_dt_us: f64,
    #[serde(default = "default_g")]
    pub g_mu_b_mhz_per_t: f64,
}

fn default_spectroscopy_pair() -> PairSelection {
    PairSelection::P13
}

fn default_oscillation_pair() -> PairSelection {
    PairSelection::P12
}

fn default_g() -> f64 {
    DEFAULT_G_MU_B_MHZ_PER_T
}

impl BCalibrationParams {
    pub fn new(coil: CoilModel, j_values_mhz: Vec<f64>) -> Self {
        Self {
            coil,
            j_values_mhz,
            spectroscopy_pair: default_spectroscopy_pair(),
            oscillation_pair: default_oscillation_pair(),
            kappa_guess_mt_per_ma: coil.kappa_mt_per_ma,
            window_ma: 0.2,
            window_points: 161,
            dwell_us: None,
            trace_us: 1.0,
            trace_dt_us: 1e-3,
            g_mu_b_mhz_per_t: DEFAULT_G_MU_B_MHZ_PER_T,
        }
    }

    fn mhz_per_mt(&self) -> f64 {
        self.g_mu_b_mhz_per_t * 1e-3
    }
}

/// P0(t) of the 1-J exchange oscillation from `|0⟩`, shot-averaged.
pub fn exchange_oscillation(
    config: &ExchangeConfig,
    times: &[f64],
    env: &NoiseEnv,
    shots: usize,
    seed: u64,
) -> Result<Vec<f64>> {
    require_shots(shots)?;
    let rho0 = initial_state(config.bz, GaugePolicy::LowerEnergy);
    let p0 = readout_observables()[0];
    let traces = map_shots(shots, |s| {
        let r = env.realization(seed, s);
        let cfg = perturb_exchange(&env.device, config, &r.voltage_offset);
        let eig = eigensystem(&build_hamiltonian(&cfg, &r.fields)?)?;
        let tr = DwellTrace::new(&eig, rho0.matrix(), &p0);
        Ok(times.iter().map(|&t| tr.eval(t)).collect::<Vec<f64>>())
    })?;
    Ok((0..times.len())
        .map(|k| traces.iter().map(|t| t[k]).sum::<f64>() / shots as f64)
        .collect())
}

/// Measures J from the FFT of its exchange oscillation at field `bz`.
pub fn measure_exchange(
    j: f64,
    pair: PairSelection,
    bz: f64,
    trace_us: f64,
    dt_us: f64,
    env: &NoiseEnv,
    shots: usize,
    seed: u64,
) -> Result<(FftPeak, Vec<f64>, Vec<f64>)> {
    if !(trace_us > 0.0 && dt_us > 0.0) {
        return Err(invalid("trace", "length and spacing must be positive"));
    }
    let n = (trace_us / dt_us).round() as usize;
    let times: Vec<f64> = (0..n).map(|k| k as f64 * dt_us).collect();
    let p0 = exchange_oscillation(&pair.config(j, bz)?, &times, env, shots, seed)?;
    Ok((fft_peak(&p0, dt_us)?, times, p0))
}

/// `|B|(I)` fit with `q = B_perp²` as the free parameter (better
/// conditioned near zero); `B_perp = √q` is appended with a propagated
/// uncertainty.
pub fn fit_coil(currents: &[f64], fields_mt: &[f64], kappa_guess: f64) -> FitResult {
    let model = |i: f64, p: &[f64]| ((p[0] * i + p[1]).powi(2) + p[2]).max(0.0).sqrt();
    let mut fit = fit_model(
        "coil",
        &["kappa_mt_per_ma", "b_par_mt", "b_perp_sq_mt2"],
        currents,
        fields_mt,
        &[kappa_guess, 0.0, 0.0],
        model,
    );
    if fit.converged {
        let q = &fit.params[2];
        let (v, s) = if q.value > 0.0 {
            (q.value.sqrt(), q.sigma / (2.0 * q.value.sqrt()))
        } else {
            (0.0, q.sigma.max(0.0).sqrt())
        };
        fit.params.push(FitParam {
            name: "b_perp_mt".into(),
            value: v,
            sigma: s,
        });
    }
    fit
}

/// Full coil-calibration pipeline. Returns the per-window spectra in
/// `tables`, the crossing points as the main table and the coil fit.
pub fn b_calibration(p: &BCalibrationParams, env: &NoiseEnv, shots: usize, seed: u64) -> Result<SweepResult> {
    require_shots(shots)?;
    env.validate()?;
    if p.j_values_mhz.len() < 3 {
        return Err(Error::Underdetermined(format!(
            "coil fit has three parameters; need at least 3 J values, got {}",
            p.j_values_mhz.len()
        )));
    }
    if p.spectroscopy_pair == PairSelection::All || p.oscillation_pair == PairSelection::All {
        return Err(invalid("pair", "calibration needs single exchange pairs"));
    }
    if p.oscillation_pair == PairSelection::P13 {
        return Err(invalid("oscillation_pair", "|0> is an eigenstate of J13 and does not oscillate"));
    }
    if let HyperfineMode::Trajectory(_) = env.hyperfine.mode {
        return Err(invalid("hyperfine.mode", "calibration uses quasi-static noise"));
    }
    if !(p.kappa_guess_mt_per_ma > 0.0) || !(p.window_ma > 0.0) || p.window_points < 8 {
        return Err(invalid("window", "need kappa_guess > 0, window_ma > 0 and at least 8 points"));
    }
    let dwell = match p.dwell_us {
        Some(d) if d > 0.0 => d,
        Some(d) => return Err(invalid("dwell_us", format!("must be positive, got {d}"))),
        None => default_dwell_us(env)?,
    };
    let scale = p.mhz_per_mt();
    let mut out = SweepResult::new("b-calibration", vec![]);
    let (mut js, mut jm, mut cur, mut cur_err, mut field) = (vec![], vec![], vec![], vec![], vec![]);
    for (k, &j) in p.j_values_mhz.iter().enumerate() {
        if !(j > 0.0) {
            return Err(invalid("j_values_mhz", format!("must be positive, got {j}")));
        }
        // J from the oscillation at zero coil current
        let bz0 = p.coil.field_mt(0.0) * scale;
        let (peak, times, trace) = measure_exchange(j, p.oscillation_pair, bz0, p.trace_us, p.trace_dt_us, env, shots, seed)?;
        let mut osc = SweepResult::new("exchange-oscillation", vec![SweepAxis::new("time_us", "us", times)]);
        osc.push_column("p0", trace)?;
        osc.set("fft_mhz", peak.frequency);
        osc.set("fft_bin_mhz", peak.bin_width);
        out.tables.insert(format!("oscillation_{k}"), osc);
        let b_nominal = j / scale / p.kappa_guess_mt_per_ma;
        for (side, centre) in [("neg", -b_nominal), ("pos", b_nominal)] {
            let grid: Vec<f64> = (0..p.window_points)
                .map(|i| centre - p.window_ma + 2.0 * p.window_ma * i as f64 / (p.window_points - 1) as f64)
                .collect();
            let mut pl = Vec::with_capacity(grid.len());
            for &i in &grid {
                let cfg = p.spectroscopy_pair.config(j, p.coil.field_mt(i) * scale)?;
                let s = dwell_samples(&cfg, GaugePolicy::LowerEnergy, dwell, env, shots, seed)?;
                pl.push(mean_stderr(&s.iter().map(|x| x[2]).collect::<Vec<_>>()).0);
            }
            let fit = fit_gaussian_sum(&grid, &pl, 1);
            let mut spec = SweepResult::new("coil-spectroscopy", vec![SweepAxis::new("current_ma", "mA", grid)]);
            spec.push_column("pl", pl)?;
            let title = format!("spectroscopy_{k}_{side}");
            if !fit.converged {
                spec.fits.push(fit);
                out.tables.insert(title, spec);
                return Err(Error::FitFailed(format!("no leakage peak near {centre:.4} mA for J = {j} MHz")));
            }
            let c = fit.get("center_1").expect("gaussian centre");
            js.push(j);
            jm.push(peak.frequency);
            cur.push(c.value);
            cur_err.push(c.sigma);
            field.push(peak.frequency / scale);
            spec.fits.push(fit);
            out.tables.insert(title, spec);
        }
    }
    out.axes = vec![SweepAxis::new("point", "", (0..js.len()).map(|k| k as f64).collect())];
    let fit = fit_coil(&cur, &field, p.kappa_guess_mt_per_ma);
    if fit.converged {
        for name in ["kappa_mt_per_ma", "b_par_mt", "b_perp_mt"] {
            let q = fit.get(name).unwrap();
            out.set(name, q.value);
            out.set(&format!("{name}_sigma"), q.sigma);
        }
    }
    out.push_column("j_set_mhz", js)?;
    out.push_column("j_fft_mhz", jm)?;
    out.push_column("current_ma", cur)?;
    out.push_column("current_sigma_ma", cur_err)?;
    out.push_column("field_mt", field)?;
    out.fits.push(fit);
    out.set("dwell_us", dwell);
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn coil_inverse() {
        let c = CoilModel {
            kappa_mt_per_ma: 1.0,
            b_par_mt: 0.1,
            b_perp_mt: 0.2,
        };
        for i in c.currents_for(0.8) {
            assert!((c.field_mt(i) - 0.8).abs() < 1e-12);
        }
        assert!(c.currents_for(0.1).is_empty());
    }

    #[test]
    fn coil_fit_on_exact_data() {
        let c = CoilModel {
            kappa_mt_per_ma: 1.3,
            b_par_mt: -0.07,
            b_perp_mt: 0.15,
        };
        let xs: Vec<f64> = [-1.5, -1.0, -0.6, 0.6, 1.0, 1.5].to_vec();
        let ys: Vec<f64> = xs.iter().map(|&i| c.field_mt(i)).collect();
        let f = fit_coil(&xs, &ys, 1.0);
        assert!(f.converged);
        assert!((f.value("kappa_mt_per_ma").unwrap() - 1.3).abs() < 1e-8);
        assert!((f.value("b_par_mt").unwrap() + 0.07).abs() < 1e-8);
        assert!((f.value("b_perp_mt").unwrap() - 0.15).abs() < 1e-7);
    }

    #[test]
    fn two_j_values_are_underdetermined() {
        let c = CoilModel {
            kappa_mt_per_ma: 1.0,
            b_par_mt: 0.0,
            b_perp_mt: 0.0,
        };
        let p = BCalibrationParams::new(c, vec![10.0, 20.0]);
        assert!(matches!(b_calibration(&p, &NoiseEnv::noiseless(), 1, 0), Err(Error::Underdetermined(_))));
    }

    #[test]
    fn oscillation_frequency_is_j() {
        let (peak, _, p0) = measure_exchange(23.0, PairSelection::P12, 0.0, 1.0, 1e-3, &NoiseEnv::noiseless(), 1, 0).unwrap();
        assert!((peak.frequency - 23.0).abs() < 0.5 * peak.bin_width, "{peak:?}");
        assert!((p0[0] - 1.0).abs() < 1e-12);
    }
}
