//! Dispatch from a validated config to the experiment it names.

use trispin::experiments::b_calibration::{b_calibration, BCalibrationParams};
use trispin::experiments::free_evolution::{calibrate_charge_noise, calibrate_hyperfine, free_evolution, t2star_scan, FreeEvolutionParams};
use trispin::experiments::levels::energy_levels;
use trispin::experiments::lpi_sweep::lpi_sweep;
use trispin::experiments::spectroscopy::{leakage_spectroscopy, leakage_vs_gap};
use trispin::experiments::SweepResult;
use trispin::hamiltonian::ExchangeConfig;
use trispin::Result;

use crate::config::RunConfig;

fn missing<T>(section: &str) -> T {
    panic!("validated config lacks [{section}]")
}

/// Runs `cfg.experiment`. The config must have passed validation.
pub fn execute(cfg: &RunConfig) -> Result<SweepResult> {
    let env = cfg.noise_env(None);
    let (shots, seed) = (cfg.shots, cfg.seed);
    match cfg.experiment() {
        "spectrum" => {
            let s = cfg.spectrum.as_ref().unwrap_or_else(|| missing("spectrum"));
            let base = ExchangeConfig::new(s.j12_mhz, s.j23_mhz, s.j13_mhz, s.bz_mhz)?;
            energy_levels(&base, s.swept, &cfg.grid(&s.axis))
        }
        "lpi-sweep" => {
            let s = cfg.lpi_sweep.as_ref().unwrap_or_else(|| missing("lpi_sweep"));
            let d = &cfg.device;
            let guess = |p: usize| d.v0_volts[p] * (s.params.target_j_mhz / d.j0_mhz[p]).ln();
            let xs: Vec<f64> = cfg.grid(&s.x_axis).iter().map(|o| guess(0) + o).collect();
            let ys: Vec<f64> = cfg.grid(&s.y_axis).iter().map(|o| guess(1) + o).collect();
            lpi_sweep(&s.params, &xs, &ys, &env, shots, seed)
        }
        "leakage-spectroscopy" => {
            let s = cfg.leakage_spectroscopy.as_ref().unwrap_or_else(|| missing("leakage_spectroscopy"));
            leakage_spectroscopy(&s.params, &cfg.grid(&s.axis), &env, shots, seed)
        }
        "free-evolution" => {
            let s = cfg.free_evolution.as_ref().unwrap_or_else(|| missing("free_evolution"));
            free_evolution(&s.params, &env, &cfg.grid(&s.axis), shots, seed)
        }
        "t2star-scan" => {
            let s = cfg.t2star_scan.as_ref().unwrap_or_else(|| missing("t2star_scan"));
            let mut env = env;
            let base = FreeEvolutionParams {
                config: ExchangeConfig::off(s.bz_mhz),
                gauge: s.gauge,
                prep_j_mhz: s.prep_j_mhz,
            };
            if let Some(target) = s.calibrate_hyperfine_us {
                env.hyperfine.sigma_mhz = calibrate_hyperfine(target, s.bz_mhz, &env, shots, seed, &s.options)?;
            }
            if let Some(c) = &s.calibrate_charge {
                let b = (c.bracket_volts[0], c.bracket_volts[1]);
                env.charge.sigma_volts = calibrate_charge_noise(c.gap_mhz, c.fraction, &base, &env, shots, seed, &s.options, b)?;
            }
            let mut gaps = cfg.grid(&s.axis);
            if s.include_baseline && !gaps.contains(&0.0) {
                gaps.insert(0, 0.0);
            }
            let scan = t2star_scan(&gaps, &base, &env, shots, seed, &s.options, s.low_window, s.high_window)?;
            let mut out = scan.to_sweep()?;
            out.set("hyperfine_sigma_mhz", env.hyperfine.sigma_mhz);
            out.set("charge_sigma_volts", env.charge.sigma_volts);
            Ok(out)
        }
        "leakage-vs-gap" => {
            let s = cfg.leakage_vs_gap.as_ref().unwrap_or_else(|| missing("leakage_vs_gap"));
            leakage_vs_gap(&cfg.grid(&s.axis), s.bz_mhz, s.dwell_us, s.gauge, &env, shots, seed)
        }
        "b-calibration" => {
            let s = cfg.b_calibration.as_ref().unwrap_or_else(|| missing("b_calibration"));
            let p = BCalibrationParams {
                g_mu_b_mhz_per_t: cfg.constants.g_mu_b_mhz_per_t,
                ..s.clone()
            };
            b_calibration(&p, &env, shots, seed)
        }
        other => panic!("validated config names unknown experiment {other}"),
    }
}
