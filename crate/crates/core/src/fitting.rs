//! Damped Gauss-Newton (Levenberg-Marquardt) curve fitting and the model
//! families used by the experiments.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitParam {
    pub name: String,
    pub value: f64,
    /// 1σ uncertainty from the residual-scaled covariance.
    pub sigma: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitResult {
    pub model: String,
    /// Empty unless `converged`.
    pub params: Vec<FitParam>,
    pub residual_norm: f64,
    pub converged: bool,
    pub iterations: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub message: Option<String>,
}

impl FitResult {
    pub fn failed(model: &str, message: impl Into<String>) -> Self {
        Self {
            model: model.to_string(),
            params: Vec::new(),
            residual_norm: f64::NAN,
            converged: false,
            iterations: 0,
            message: Some(message.into()),
        }
    }

    pub fn get(&self, name: &str) -> Option<&FitParam> {
        self.params.iter().find(|p| p.name == name)
    }

    pub fn value(&self, name: &str) -> Option<f64> {
        self.get(name).map(|p| p.value)
    }
}

#[derive(Debug, Clone, Copy)]
pub struct LmOptions {
    pub max_iterations: usize,
    /// Convergence when ‖Δp‖ ≤ tol · (‖p‖ + tol).
    pub relative_step: f64,
    pub initial_damping: f64,
}

impl Default for LmOptions {
    fn default() -> Self {
        Self {
            max_iterations: 200,
            relative_step: 1e-10,
            initial_damping: 1e-3,
        }
    }
}

#[derive(Debug, Clone)]
pub struct LmOutcome {
    pub params: Vec<f64>,
    pub covariance: Option<DMatrix<f64>>,
    pub residual_norm: f64,
    pub iterations: usize,
    pub converged: bool,
}

/// Residual function with an analytic or finite-difference Jacobian.
pub trait Residuals {
    /// Number of residuals.
    fn len(&self) -> usize;

    fn is_empty(&self) -> bool {
        self.len() == 0
    }

    fn residuals(&self, p: &[f64], out: &mut [f64]);

    /// Row-major `len × p.len()` Jacobian; central differences by default.
    fn jacobian(&self, p: &[f64], out: &mut DMatrix<f64>) {
        let m = self.len();
        let mut plus = vec![0.0; m];
        let mut minus = vec![0.0; m];
        let mut q = p.to_vec();
        for k in 0..p.len() {
            let h = 1e-7 * p[k].abs().max(1e-6);
            q[k] = p[k] + h;
            self.residuals(&q, &mut plus);
            q[k] = p[k] - h;
            self.residuals(&q, &mut minus);
            q[k] = p[k];
            for i in 0..m {
                out[(i, k)] = (plus[i] - minus[i]) / (2.0 * h);
            }
        }
    }
}

fn sum_sq(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum()
}

pub fn levenberg_marquardt(problem: &impl Residuals, p0: &[f64], opts: &LmOptions) -> LmOutcome {
    let m = problem.len();
    let n = p0.len();
    let mut p = p0.to_vec();
    let mut r = vec![0.0; m];
    problem.residuals(&p, &mut r);
    let mut cost = sum_sq(&r);
    let mut lambda = opts.initial_damping;
    let mut jac = DMatrix::zeros(m, n);
    let mut converged = false;
    let mut iterations = 0;
    let mut trial = vec![0.0; m];
    if !cost.is_finite() {
        return LmOutcome {
            params: p,
            covariance: None,
            residual_norm: f64::NAN,
            iterations,
            converged,
        };
    }
    while iterations < opts.max_iterations {
        iterations += 1;
        problem.jacobian(&p, &mut jac);
        let rv = DVector::from_column_slice(&r);
        let jtj = jac.transpose() * &jac;
        let g = jac.transpose() * rv;
        if g.norm() == 0.0 || cost == 0.0 {
            converged = true;
            break;
        }
        let mut accepted = false;
        for _ in 0..40 {
            let mut a = jtj.clone();
            for k in 0..n {
                a[(k, k)] += lambda * jtj[(k, k)].max(1e-12);
            }
            let Some(chol) = a.cholesky() else {
                lambda *= 10.0;
                continue;
            };
            let step = -chol.solve(&g);
            let q: Vec<f64> = p.iter().zip(step.iter()).map(|(a, b)| a + b).collect();
            problem.residuals(&q, &mut trial);
            let c = sum_sq(&trial);
            if c.is_finite() && c <= cost {
                let pn = p.iter().map(|x| x * x).sum::<f64>().sqrt();
                let small = step.norm() <= opts.relative_step * (pn + opts.relative_step);
                let flat = cost - c <= 1e-15 * cost;
                p = q;
                std::mem::swap(&mut r, &mut trial);
                cost = c;
                lambda = (lambda / 3.0).max(1e-12);
                accepted = true;
                if small || (flat && step.norm() <= 1e-6 * (pn + 1e-6)) {
                    converged = true;
                }
                break;
            }
            lambda *= 4.0;
        }
        if !accepted {
            // No descent direction at any damping: already at the minimum to
            // working precision.
            converged = lambda > 1e20 || cost <= 1e-28;
            break;
        }
        if converged {
            break;
        }
    }
    problem.jacobian(&p, &mut jac);
    let dof = m.saturating_sub(n).max(1) as f64;
    let s2 = cost / dof;
    let covariance = (jac.transpose() * &jac).try_inverse().map(|c| c * s2);
    LmOutcome {
        params: p,
        covariance,
        residual_norm: cost.sqrt(),
        iterations,
        converged,
    }
}

pub(crate) fn outcome_to_result(model: &str, names: &[String], out: &LmOutcome) -> FitResult {
    if !out.converged {
        return FitResult {
            iterations: out.iterations,
            residual_norm: out.residual_norm,
            ..FitResult::failed(model, "did not converge")
        };
    }
    let Some(cov) = &out.covariance else {
        return FitResult {
            iterations: out.iterations,
            residual_norm: out.residual_norm,
            ..FitResult::failed(model, "singular normal equations")
        };
    };
    let params = names
        .iter()
        .enumerate()
        .map(|(k, name)| FitParam {
            name: name.clone(),
            value: out.params[k],
            sigma: cov[(k, k)].max(0.0).sqrt(),
        })
        .collect();
    FitResult {
        model: model.to_string(),
        params,
        residual_norm: out.residual_norm,
        converged: true,
        iterations: out.iterations,
        message: None,
    }
}

/// `y = c + Σ_k A_k exp(−(x − µ_k)² / 2s_k²)`; parameters ordered
/// `[c, A_1, µ_1, s_1, A_2, …]`.
pub fn gaussian_sum(x: f64, p: &[f64]) -> f64 {
    let mut y = p[0];
    for g in p[1..].chunks_exact(3) {
        let z = (x - g[1]) / g[2];
        y += g[0] * (-0.5 * z * z).exp();
    }
    y
}

struct GaussianSumProblem<'a> {
    xs: &'a [f64],
    ys: &'a [f64],
}

impl Residuals for GaussianSumProblem<'_> {
    fn len(&self) -> usize {
        self.xs.len()
    }

    fn residuals(&self, p: &[f64], out: &mut [f64]) {
        for (o, (&x, &y)) in out.iter_mut().zip(self.xs.iter().zip(self.ys)) {
            *o = gaussian_sum(x, p) - y;
        }
    }

    fn jacobian(&self, p: &[f64], out: &mut DMatrix<f64>) {
        for (i, &x) in self.xs.iter().enumerate() {
            out[(i, 0)] = 1.0;
            for (k, g) in p[1..].chunks_exact(3).enumerate() {
                let z = (x - g[1]) / g[2];
                let e = (-0.5 * z * z).exp();
                out[(i, 1 + 3 * k)] = e;
                out[(i, 2 + 3 * k)] = g[0] * e * z / g[2];
                out[(i, 3 + 3 * k)] = g[0] * e * z * z / g[2];
            }
        }
    }
}

/// Local maxima rising at least `min_prominence` above the lower of the two
/// surrounding minima, sorted by height (highest first). Positions are
/// refined by a parabola through the three neighbouring samples.
pub fn find_peaks(xs: &[f64], ys: &[f64], min_prominence: f64) -> Vec<(f64, f64)> {
    let n = ys.len();
    let mut peaks = Vec::new();
    for i in 1..n.saturating_sub(1) {
        if !(ys[i] > ys[i - 1] && ys[i] >= ys[i + 1]) {
            continue;
        }
        let mut left = ys[i];
        for j in (0..i).rev() {
            if ys[j] > ys[i] {
                break;
            }
            left = left.min(ys[j]);
        }
        let mut right = ys[i];
        for &y in &ys[i + 1..] {
            if y > ys[i] {
                break;
            }
            right = right.min(y);
        }
        let prominence = ys[i] - left.max(right);
        if prominence < min_prominence {
            continue;
        }
        let (y0, y1, y2) = (ys[i - 1], ys[i], ys[i + 1]);
        let denom = y0 - 2.0 * y1 + y2;
        let shift = if denom.abs() > 0.0 { 0.5 * (y0 - y2) / denom } else { 0.0 };
        let step = 0.5 * (xs[i + 1] - xs[i - 1]);
        peaks.push((xs[i] + shift.clamp(-0.5, 0.5) * step, y1));
    }
    peaks.sort_by(|a, b| b.1.total_cmp(&a.1));
    peaks
}

fn half_width_guess(xs: &[f64], ys: &[f64], idx: usize, base: f64) -> f64 {
    let half = base + 0.5 * (ys[idx] - base);
    let mut lo = idx;
    while lo > 0 && ys[lo] > half {
        lo -= 1;
    }
    let mut hi = idx;
    while hi + 1 < ys.len() && ys[hi] > half {
        hi += 1;
    }
    let fwhm = (xs[hi] - xs[lo]).abs().max((xs[1] - xs[0]).abs());
    fwhm / 2.354_820_045
}

/// Fits `n_peaks` Gaussians plus a constant. Initial guesses come from the
/// most prominent local maxima; data without enough peaks is reported as a
/// non-converged fit.
pub fn fit_gaussian_sum(xs: &[f64], ys: &[f64], n_peaks: usize) -> FitResult {
    let model = match n_peaks {
        1 => "gaussian",
        2 => "double-gaussian",
        _ => "gaussian-sum",
    };
    if xs.len() != ys.len() || xs.len() < 3 * n_peaks + 2 {
        return FitResult::failed(model, "not enough samples");
    }
    if ys.iter().any(|y| !y.is_finite()) || xs.iter().any(|x| !x.is_finite()) {
        return FitResult::failed(model, "non-finite data");
    }
    let lo = ys.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = ys.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let span = hi - lo;
    if !(span > 1e-12 * hi.abs().max(1e-300)) || span <= 0.0 {
        return FitResult::failed(model, "flat data: no peaks");
    }
    // weak satellites next to strong peaks need a lower threshold
    let mut peaks = Vec::new();
    for frac in [0.1, 0.03, 0.01] {
        peaks = find_peaks(xs, ys, frac * span);
        if peaks.len() >= n_peaks {
            break;
        }
    }
    if peaks.len() < n_peaks {
        return FitResult::failed(model, format!("found {} peaks, need {n_peaks}", peaks.len()));
    }
    let mut p0 = vec![lo];
    let mut chosen: Vec<(f64, f64)> = peaks[..n_peaks].to_vec();
    chosen.sort_by(|a, b| a.0.total_cmp(&b.0));
    for (x, y) in &chosen {
        let idx = xs
            .iter()
            .enumerate()
            .min_by(|a, b| (a.1 - x).abs().total_cmp(&(b.1 - x).abs()))
            .map(|(i, _)| i)
            .unwrap_or(0);
        p0.extend([y - lo, *x, half_width_guess(xs, ys, idx, lo)]);
    }
    let out = levenberg_marquardt(&GaussianSumProblem { xs, ys }, &p0, &LmOptions::default());
    let mut names = vec!["offset".to_string()];
    for k in 1..=n_peaks {
        names.extend([format!("amplitude_{k}"), format!("center_{k}"), format!("width_{k}")]);
    }
    let mut res = outcome_to_result(model, &names, &out);
    if res.converged {
        for p in res.params.iter_mut().filter(|p| p.name.starts_with("width")) {
            p.value = p.value.abs();
        }
    }
    res
}

pub fn fit_double_gaussian(xs: &[f64], ys: &[f64]) -> FitResult {
    fit_gaussian_sum(xs, ys, 2)
}

struct LogPowerLaw<'a> {
    lx: Vec<f64>,
    ly: &'a [f64],
}

impl Residuals for LogPowerLaw<'_> {
    fn len(&self) -> usize {
        self.lx.len()
    }

    fn residuals(&self, p: &[f64], out: &mut [f64]) {
        for (o, (lx, ly)) in out.iter_mut().zip(self.lx.iter().zip(self.ly)) {
            *o = p[0] + p[1] * lx - ly;
        }
    }

    fn jacobian(&self, _p: &[f64], out: &mut DMatrix<f64>) {
        for (i, lx) in self.lx.iter().enumerate() {
            out[(i, 0)] = 1.0;
            out[(i, 1)] = *lx;
        }
    }
}

/// `y = A·x^k` fitted on log-log residuals (relative errors), seeded by
/// ordinary log-log regression. Reports `amplitude` and `exponent`.
pub fn fit_power_law(xs: &[f64], ys: &[f64]) -> FitResult {
    const MODEL: &str = "power-law";
    if xs.len() != ys.len() || xs.len() < 2 {
        return FitResult::failed(MODEL, "need at least two points");
    }
    if xs.iter().chain(ys).any(|v| !(*v > 0.0) || !v.is_finite()) {
        return FitResult::failed(MODEL, "power-law fit needs positive finite data");
    }
    let lx: Vec<f64> = xs.iter().map(|x| x.ln()).collect();
    let ly: Vec<f64> = ys.iter().map(|y| y.ln()).collect();
    let n = lx.len() as f64;
    let mx = lx.iter().sum::<f64>() / n;
    let my = ly.iter().sum::<f64>() / n;
    let sxx: f64 = lx.iter().map(|x| (x - mx).powi(2)).sum();
    if sxx == 0.0 {
        return FitResult::failed(MODEL, "all x values equal");
    }
    let sxy: f64 = lx.iter().zip(&ly).map(|(x, y)| (x - mx) * (y - my)).sum();
    let slope = sxy / sxx;
    let p0 = [my - slope * mx, slope];
    let problem = LogPowerLaw { lx, ly: &ly };
    let out = levenberg_marquardt(&problem, &p0, &LmOptions::default());
    let mut res = outcome_to_result(MODEL, &["log_amplitude".into(), "exponent".into()], &out);
    if res.converged {
        let la = res.params[0].clone();
        res.params[0] = FitParam {
            name: "amplitude".into(),
            value: la.value.exp(),
            sigma: la.value.exp() * la.sigma,
        };
    }
    res
}

/// Fits an arbitrary model with a finite-difference Jacobian.
pub fn fit_model(
    model: &str,
    names: &[&str],
    xs: &[f64],
    ys: &[f64],
    p0: &[f64],
    f: impl Fn(f64, &[f64]) -> f64,
) -> FitResult {
    struct Generic<'a, F> {
        xs: &'a [f64],
        ys: &'a [f64],
        f: F,
    }
    impl<F: Fn(f64, &[f64]) -> f64> Residuals for Generic<'_, F> {
        fn len(&self) -> usize {
            self.xs.len()
        }
        fn residuals(&self, p: &[f64], out: &mut [f64]) {
            for (o, (&x, &y)) in out.iter_mut().zip(self.xs.iter().zip(self.ys)) {
                *o = (self.f)(x, p) - y;
            }
        }
    }
    if xs.len() != ys.len() || xs.len() < p0.len() {
        return FitResult::failed(model, "not enough samples");
    }
    let out = levenberg_marquardt(&Generic { xs, ys, f }, p0, &LmOptions::default());
    let names: Vec<String> = names.iter().map(|s| s.to_string()).collect();
    outcome_to_result(model, &names, &out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn exact_double_gaussian_recovered() {
        let truth = [0.02, 0.4, -3.6, 0.25, 0.3, 3.55, 0.2];
        let xs: Vec<f64> = (0..241).map(|k| -6.0 + 0.05 * k as f64).collect();
        let ys: Vec<f64> = xs.iter().map(|&x| gaussian_sum(x, &truth)).collect();
        let fit = fit_double_gaussian(&xs, &ys);
        assert!(fit.converged, "{fit:?}");
        for (p, t) in fit.params.iter().zip(truth) {
            assert!((p.value - t).abs() < 1e-8, "{} = {} vs {t}", p.name, p.value);
        }
    }

    #[test]
    fn flat_data_is_not_converged() {
        let xs: Vec<f64> = (0..50).map(|k| k as f64).collect();
        let fit = fit_double_gaussian(&xs, &vec![0.0; 50]);
        assert!(!fit.converged);
        assert!(fit.params.is_empty());
    }

    #[test]
    fn power_law_exact() {
        let xs: Vec<f64> = (0..11).map(|k| 10f64.powf(k as f64 / 10.0)).collect();
        let ys: Vec<f64> = xs.iter().map(|x| 3.0 * x * x).collect();
        let fit = fit_power_law(&xs, &ys);
        assert!(fit.converged);
        assert!((fit.value("exponent").unwrap() - 2.0).abs() < 1e-6);
        assert!((fit.value("amplitude").unwrap() - 3.0).abs() < 1e-6);
    }

    #[test]
    fn power_law_rejects_nonpositive() {
        assert!(!fit_power_law(&[1.0, 2.0], &[1.0, -1.0]).converged);
        assert!(!fit_power_law(&[2.0, 2.0], &[1.0, 3.0]).converged);
    }

    #[test]
    fn generic_model_with_uncertainties() {
        // y = a·exp(-x/b) with small deterministic perturbation.
        let xs: Vec<f64> = (0..40).map(|k| 0.1 * k as f64).collect();
        let ys: Vec<f64> = xs
            .iter()
            .enumerate()
            .map(|(k, &x)| 2.0 * (-x / 1.5).exp() + 1e-3 * ((k * 7 % 5) as f64 - 2.0))
            .collect();
        let fit = fit_model("exp", &["a", "b"], &xs, &ys, &[1.0, 1.0], |x, p| p[0] * (-x / p[1]).exp());
        assert!(fit.converged);
        let a = fit.get("a").unwrap();
        let b = fit.get("b").unwrap();
        assert!((a.value - 2.0).abs() < 5.0 * a.sigma + 1e-3);
        assert!((b.value - 1.5).abs() < 5.0 * b.sigma + 1e-3);
        assert!(a.sigma > 0.0 && b.sigma > 0.0);
    }

    #[test]
    fn peak_finder_ignores_small_bumps() {
        let xs: Vec<f64> = (0..200).map(|k| k as f64 * 0.1).collect();
        let ys: Vec<f64> = xs
            .iter()
            .map(|&x| gaussian_sum(x, &[0.0, 1.0, 5.0, 0.5, 0.6, 14.0, 0.7]) + 0.002 * (x * 9.0).sin())
            .collect();
        let peaks = find_peaks(&xs, &ys, 0.05);
        assert_eq!(peaks.len(), 2);
        assert!((peaks[0].0 - 5.0).abs() < 0.05 && (peaks[1].0 - 14.0).abs() < 0.05);
    }
}
