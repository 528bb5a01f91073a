//! Independent reference computations checked against the library.

use std::f64::consts::TAU;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rustfft::FftPlanner;
use trispin::dynamics::Segment;
use trispin::experiments::b_calibration::exchange_oscillation;
use trispin::experiments::spectroscopy::{leakage_spectroscopy, peak_centers, PairSelection, SpectroscopyParams};
use trispin::experiments::{GaugePolicy, NoiseEnv};
use trispin::hamiltonian::{level_crossings, ExchangeConfig, LocalFields};
use trispin::noise::{one_over_f_trace, HyperfineModel, OneOverF};
use trispin::spectrum::magnitude_spectrum;
use trispin::spin::{Mat8, C64};

/// `exp(A)` by Taylor series after scaling `A` below norm 1/2, then squaring.
fn expm_taylor(a: &Mat8) -> Mat8 {
    let norm = a.norm();
    let s = if norm > 0.5 { (norm / 0.5).log2().ceil() as i32 } else { 0 };
    let a = a * C64::new(0.5f64.powi(s), 0.0);
    let mut term = Mat8::identity();
    let mut sum = Mat8::identity();
    for k in 1..30 {
        term = term * a * C64::new(1.0 / k as f64, 0.0);
        sum += term;
    }
    for _ in 0..s {
        sum = sum * sum;
    }
    sum
}

#[test]
fn propagator_matches_taylor_expm() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let mut worst = 0.0f64;
    for _ in 0..1000 {
        let cfg = ExchangeConfig::new(
            rng.random_range(0.0..100.0),
            rng.random_range(0.0..100.0),
            rng.random_range(0.0..100.0),
            rng.random_range(-50.0..50.0),
        )
        .unwrap();
        let mut fields = LocalFields::zero();
        for b in fields.b.iter_mut().flatten() {
            *b = rng.random_range(-1.0..1.0);
        }
        let seg = Segment {
            config: cfg,
            fields,
            duration_us: rng.random_range(0.0..0.5),
        };
        let h = seg.hamiltonian().unwrap();
        let want = expm_taylor(&(h * C64::new(0.0, -TAU * seg.duration_us)));
        worst = worst.max((seg.unitary().unwrap() - want).norm());
    }
    assert!(worst < 1e-9, "max operator distance {worst:e}");
}

#[test]
fn one_over_f_periodogram_slope() {
    let model = OneOverF {
        alpha: 1.0,
        f_min_mhz: 0.5,
        f_max_mhz: 20.0,
        rms: 1.0,
    };
    let (n, dt) = (512usize, 0.01);
    let fft = FftPlanner::new().plan_fft_forward(n);
    let mut power = vec![0.0; n / 2];
    for seed in 0..10_000u64 {
        let tr = one_over_f_trace(&model, n as f64 * dt, dt, seed).unwrap();
        assert_eq!(tr.len(), n);
        let mut buf: Vec<C64> = tr.iter().map(|&x| C64::new(x, 0.0)).collect();
        fft.process(&mut buf);
        for (p, z) in power.iter_mut().zip(&buf) {
            *p += z.norm_sqr();
        }
    }
    let df = 1.0 / (n as f64 * dt);
    let (mut xs, mut ys) = (vec![], vec![]);
    for (k, &p) in power.iter().enumerate().skip(1) {
        let f = k as f64 * df;
        // stay clear of the band edges
        if (1.0..=15.0).contains(&f) {
            xs.push(f.ln());
            ys.push(p.ln());
        }
    }
    let mx = xs.iter().sum::<f64>() / xs.len() as f64;
    let my = ys.iter().sum::<f64>() / ys.len() as f64;
    let sxy: f64 = xs.iter().zip(&ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let sxx: f64 = xs.iter().map(|x| (x - mx).powi(2)).sum();
    let slope = sxy / sxx;
    assert!((slope + 1.0).abs() < 0.1, "slope {slope}");
}

fn spectroscopy_env() -> NoiseEnv {
    NoiseEnv {
        hyperfine: HyperfineModel::quasi_static(0.0908),
        ..NoiseEnv::noiseless()
    }
}

#[test]
fn spectroscopy_peaks_sit_on_level_crossings() {
    let j = 2.4;
    let step = 0.05;
    let grid: Vec<f64> = (-90..=90).map(|k| k as f64 * step).collect();
    let predicted = level_crossings(j).unwrap();
    for (gauge, peaks, want) in [
        (GaugePolicy::LowerEnergy, 2, vec![predicted[0], predicted[3]]),
        (GaugePolicy::EqualMixture, 4, predicted.clone()),
    ] {
        let p = SpectroscopyParams {
            j_mhz: j,
            pairs: PairSelection::All,
            gauge,
            dwell_us: None,
            peaks,
        };
        let r = leakage_spectroscopy(&p, &grid, &spectroscopy_env(), 400, 5).unwrap();
        let fit = &r.fits[0];
        assert!(fit.converged, "{gauge:?}: {fit:?}");
        let got = peak_centers(fit);
        assert_eq!(got.len(), want.len());
        for (g, w) in got.iter().zip(&want) {
            assert!((g - w).abs() < step, "{gauge:?}: peak {g} vs crossing {w}");
        }
    }
}

#[test]
fn no_oscillation_at_lpi() {
    let env = spectroscopy_env();
    let dt = 0.01;
    let times: Vec<f64> = (0..400).map(|k| k as f64 * dt).collect();
    // a 10% detuned J12 rotates the qubit at |r| = 1.5 MHz
    let band = (0.75, 3.0);
    let peak = |cfg: ExchangeConfig| {
        let p0 = exchange_oscillation(&cfg, &times, &env, 200, 9).unwrap();
        let (f, mags) = magnitude_spectrum(&p0, dt).unwrap();
        f.iter()
            .zip(mags)
            .filter(|(f, _)| **f >= band.0 && **f <= band.1)
            .map(|(_, m)| m)
            .fold(0.0, f64::max)
    };
    let lpi = peak(ExchangeConfig::equal(15.0, 0.0).unwrap());
    let detuned = peak(ExchangeConfig::new(16.5, 15.0, 15.0, 0.0).unwrap());
    assert!(lpi < 0.2 * detuned, "lpi {lpi} vs detuned {detuned}");
}
