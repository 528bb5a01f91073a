//! Exponential gate-voltage → exchange map with linear cross-coupling, and
//! the virtual gates that undo the cross-coupling.

use nalgebra::{Matrix3, Vector3};
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::hamiltonian::ExchangeConfig;

/// Physical exchange-gate voltages (V) in pair order (X12, X23, X13).
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct VoltageVector {
    pub x12: f64,
    pub x23: f64,
    pub x13: f64,
}

impl VoltageVector {
    pub fn new(x12: f64, x23: f64, x13: f64) -> Self {
        Self { x12, x23, x13 }
    }

    pub fn from_array(v: [f64; 3]) -> Self {
        Self::new(v[0], v[1], v[2])
    }

    pub fn to_array(self) -> [f64; 3] {
        [self.x12, self.x23, self.x13]
    }

    pub fn to_vector(self) -> Vector3<f64> {
        Vector3::from(self.to_array())
    }

}

impl std::ops::Add for VoltageVector {
    type Output = Self;

    fn add(self, other: VoltageVector) -> Self {
        Self::new(self.x12 + other.x12, self.x23 + other.x23, self.x13 + other.x13)
    }
}

pub const DEFAULT_J_MAX_MHZ: f64 = 10_000.0;

fn default_j_max() -> f64 {
    DEFAULT_J_MAX_MHZ
}

/// `J_p = J0_p · exp((C·v)_p / V0_p)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DeviceParams {
    /// Exchange (MHz) at zero voltage, pair order (12, 23, 13).
    pub j0_mhz: [f64; 3],
    /// Volts per e-fold of exchange.
    pub v0_volts: [f64; 3],
    /// Rows are exchange pairs, columns physical gates.
    pub cross_coupling: [[f64; 3]; 3],
    #[serde(default = "default_j_max")]
    pub j_max_mhz: f64,
}

impl Default for DeviceParams {
    /// Synthetic device: 30 MHz at zero bias, 30 mV per e-fold, 0.15
    /// cross-coupling between every pair of gates.
    fn default() -> Self {
        let c = 0.15;
        Self {
            j0_mhz: [30.0; 3],
            v0_volts: [0.030; 3],
            cross_coupling: [[1.0, c, c], [c, 1.0, c], [c, c, 1.0]],
            j_max_mhz: DEFAULT_J_MAX_MHZ,
        }
    }
}

impl DeviceParams {
    pub fn ideal(j0: f64, v0: f64) -> Self {
        Self {
            j0_mhz: [j0; 3],
            v0_volts: [v0; 3],
            cross_coupling: [[1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]],
            j_max_mhz: DEFAULT_J_MAX_MHZ,
        }
    }

    pub fn coupling_matrix(&self) -> Matrix3<f64> {
        Matrix3::from_fn(|r, c| self.cross_coupling[r][c])
    }

    pub fn validate(&self) -> Result<()> {
        for p in 0..3 {
            if !(self.j0_mhz[p] > 0.0) || !self.j0_mhz[p].is_finite() {
                return Err(invalid("j0_mhz", format!("must be positive, got {}", self.j0_mhz[p])));
            }
            if !(self.v0_volts[p] > 0.0) || !self.v0_volts[p].is_finite() {
                return Err(invalid("v0_volts", format!("must be positive, got {}", self.v0_volts[p])));
            }
            for q in 0..3 {
                let c = self.cross_coupling[p][q];
                if !c.is_finite() {
                    return Err(Error::NonFinite("cross_coupling"));
                }
                if p == q && c != 1.0 {
                    return Err(invalid("cross_coupling", "diagonal entries must be 1"));
                }
                if p != q && c.abs() >= 1.0 {
                    return Err(invalid("cross_coupling", format!("off-diagonal |{c}| must be < 1")));
                }
            }
        }
        if !(self.j_max_mhz > 0.0) {
            return Err(invalid("j_max_mhz", "must be positive"));
        }
        Ok(())
    }
}

/// Exchange map output plus the saturation flag.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ExchangeOutput {
    pub config: ExchangeConfig,
    /// Set when any coupling hit `j_max`.
    pub saturated: bool,
}

const PAIR_NAMES: [&str; 3] = ["12", "23", "13"];

/// Saturating forward map; couplings above `j_max` are clamped and flagged.
pub fn exchange_from_voltages(params: &DeviceParams, v: &VoltageVector) -> Result<ExchangeOutput> {
    params.validate()?;
    let vv = v.to_array();
    if vv.iter().any(|x| !x.is_finite()) {
        return Err(Error::NonFinite("voltages"));
    }
    let cv = params.coupling_matrix() * v.to_vector();
    let mut saturated = false;
    let mut j = [0.0; 3];
    for p in 0..3 {
        let raw = params.j0_mhz[p] * (cv[p] / params.v0_volts[p]).exp();
        if !(raw <= params.j_max_mhz) {
            saturated = true;
            j[p] = params.j_max_mhz;
        } else {
            j[p] = raw;
        }
    }
    Ok(ExchangeOutput {
        config: ExchangeConfig::off(0.0).with_pairs(j),
        saturated,
    })
}

/// Like [`exchange_from_voltages`] but saturation is an error.
pub fn exchange_strict(params: &DeviceParams, v: &VoltageVector) -> Result<ExchangeConfig> {
    let out = exchange_from_voltages(params, v)?;
    if out.saturated {
        let pair = (0..3)
            .find(|&p| out.config.pairs()[p] >= params.j_max_mhz)
            .map(|p| PAIR_NAMES[p])
            .unwrap_or("?");
        return Err(Error::Saturated {
            pair,
            j_max: params.j_max_mhz,
        });
    }
    Ok(out.config)
}

/// `C⁻¹`: physical voltages for unit steps of the virtual gates.
pub fn virtual_gate_matrix(params: &DeviceParams) -> Result<Matrix3<f64>> {
    let c = params.coupling_matrix();
    if c.determinant().abs() < 1e-12 {
        return Err(Error::Singular("cross-coupling matrix"));
    }
    c.try_inverse().ok_or(Error::Singular("cross-coupling matrix"))
}

/// Physical voltages for a virtual-gate vector.
pub fn physical_from_virtual(params: &DeviceParams, virt: [f64; 3]) -> Result<VoltageVector> {
    let v = virtual_gate_matrix(params)? * Vector3::from(virt);
    Ok(VoltageVector::new(v[0], v[1], v[2]))
}

/// Exact log-linear inverse: voltages giving `J_target` on all three pairs.
pub fn solve_lpi_voltages(params: &DeviceParams, j_target: f64) -> Result<VoltageVector> {
    params.validate()?;
    if !(j_target > 0.0) || !j_target.is_finite() {
        return Err(invalid("j_target", format!("must be positive, got {j_target}")));
    }
    if j_target > params.j_max_mhz {
        return Err(Error::Saturated {
            pair: "all",
            j_max: params.j_max_mhz,
        });
    }
    let rhs = Vector3::from_fn(|p, _| params.v0_volts[p] * (j_target / params.j0_mhz[p]).ln());
    let v = virtual_gate_matrix(params)? * rhs;
    Ok(VoltageVector::new(v[0], v[1], v[2]))
}

/// Exchange at `v + δv`: the charge-noise perturbed operating point.
pub fn effective_exchange_noise(params: &DeviceParams, v: &VoltageVector, dv: &VoltageVector) -> Result<ExchangeConfig> {
    Ok(exchange_from_voltages(params, &(*v + *dv))?.config)
}

/// Multiplicative exchange factors `exp((C·δv)_p / V0_p)` produced by a
/// voltage offset; independent of the operating point.
pub fn exchange_noise_factors(params: &DeviceParams, dv: &VoltageVector) -> [f64; 3] {
    let cv = params.coupling_matrix() * dv.to_vector();
    std::array::from_fn(|p| (cv[p] / params.v0_volts[p]).exp())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn reference_point() {
        let p = DeviceParams::default();
        let out = exchange_from_voltages(&p, &VoltageVector::default()).unwrap();
        assert_eq!(out.config.pairs(), p.j0_mhz);
        assert!(!out.saturated);
    }

    #[test]
    fn exponential_law_doubles() {
        let p = DeviceParams::ideal(40.0, 0.025);
        let v = VoltageVector::new(0.025 * 2f64.ln(), 0.0, 0.0);
        let j = exchange_from_voltages(&p, &v).unwrap().config;
        assert!((j.j12 - 80.0).abs() < 1e-12);
        assert!((j.j23 - 40.0).abs() < 1e-12 && (j.j13 - 40.0).abs() < 1e-12);
    }

    #[test]
    fn saturation_flagged() {
        let p = DeviceParams::ideal(40.0, 0.025);
        let out = exchange_from_voltages(&p, &VoltageVector::new(1.0, 0.0, 0.0)).unwrap();
        assert!(out.saturated);
        assert_eq!(out.config.j12, p.j_max_mhz);
        assert!(matches!(exchange_strict(&p, &VoltageVector::new(1.0, 0.0, 0.0)), Err(Error::Saturated { pair: "12", .. })));
    }

    #[test]
    fn virtual_gate_identity_and_single_offdiagonal() {
        let p = DeviceParams::ideal(30.0, 0.03);
        assert_eq!(virtual_gate_matrix(&p).unwrap(), Matrix3::identity());
        let mut p = p;
        p.cross_coupling[0][1] = 0.1;
        let inv = virtual_gate_matrix(&p).unwrap();
        // exact inverse of [[1, ε, 0], [0, 1, 0], [0, 0, 1]]
        assert!((inv[(0, 1)] + 0.1).abs() < 1e-15);
        assert!((inv * p.coupling_matrix() - Matrix3::identity()).norm() < 1e-15);
    }

    #[test]
    fn singular_coupling_rejected() {
        let p = DeviceParams::default();
        let rows = [[1.0, 0.5, -0.5], [0.5, 1.0, 0.5], [-0.5, 0.5, 1.0]];
        let q = DeviceParams { cross_coupling: rows, ..p };
        assert_eq!(virtual_gate_matrix(&q).unwrap_err(), Error::Singular("cross-coupling matrix"));
    }

    #[test]
    fn solve_lpi_asymmetric_j0() {
        let mut p = DeviceParams::ideal(1.0, 0.03);
        p.j0_mhz = [50.0, 100.0, 200.0];
        let v = solve_lpi_voltages(&p, 100.0).unwrap();
        let l2 = 2f64.ln() * 0.03;
        assert!((v.x12 - l2).abs() < 1e-15 && v.x23.abs() < 1e-15 && (v.x13 + l2).abs() < 1e-15);
    }

    #[test]
    fn solve_lpi_zero_when_on_target() {
        let p = DeviceParams::ideal(70.0, 0.03);
        let v = solve_lpi_voltages(&p, 70.0).unwrap();
        assert_eq!(v.to_array(), [0.0; 3]);
    }

    #[test]
    fn round_trip_with_cross_coupling() {
        let p = DeviceParams::default();
        for target in [5.0, 200.0, 1234.0] {
            let v = solve_lpi_voltages(&p, target).unwrap();
            let j = exchange_strict(&p, &v).unwrap();
            for x in j.pairs() {
                assert!((x / target - 1.0).abs() < 1e-9);
            }
        }
        assert!(solve_lpi_voltages(&p, 2e4).is_err());
        assert!(solve_lpi_voltages(&p, 0.0).is_err());
    }

    // Finite-difference Jacobian of ln J with respect to virtual voltages is
    // diagonal with entries 1/V0.
    #[test]
    fn virtual_jacobian_is_diagonal() {
        let p = DeviceParams::default();
        let base = [0.01, -0.02, 0.035];
        let h = 1e-6;
        let lnj = |virt: [f64; 3]| {
            let v = physical_from_virtual(&p, virt).unwrap();
            exchange_strict(&p, &v).unwrap().pairs().map(f64::ln)
        };
        for gate in 0..3 {
            let mut up = base;
            let mut dn = base;
            up[gate] += h;
            dn[gate] -= h;
            let (a, b) = (lnj(up), lnj(dn));
            for pair in 0..3 {
                let d = (a[pair] - b[pair]) / (2.0 * h);
                let want = if pair == gate { 1.0 / p.v0_volts[pair] } else { 0.0 };
                assert!((d - want).abs() * p.v0_volts[pair] < 1e-9, "gate {gate} pair {pair}: {d}");
            }
        }
    }

    #[test]
    fn log_linear_collinearity() {
        let p = DeviceParams::default();
        let dir = [0.3, -0.7, 0.2];
        let pts: Vec<[f64; 3]> = [0.0, 0.01, 0.025]
            .iter()
            .map(|&s| {
                let v = VoltageVector::from_array(dir.map(|d| d * s));
                exchange_strict(&p, &v).unwrap().pairs().map(f64::ln)
            })
            .collect();
        for ((a, b), c) in pts[0].iter().zip(&pts[1]).zip(&pts[2]) {
            let slope1 = (b - a) / 0.01;
            let slope2 = (c - a) / 0.025;
            assert!((slope1 - slope2).abs() < 1e-9);
        }
    }

    #[test]
    fn noise_factors_match_forward_map() {
        let p = DeviceParams::default();
        let v = solve_lpi_voltages(&p, 120.0).unwrap();
        let dv = VoltageVector::new(1e-3, -4e-4, 2e-4);
        let noisy = effective_exchange_noise(&p, &v, &dv).unwrap();
        let f = exchange_noise_factors(&p, &dv);
        for (j, fk) in noisy.pairs().iter().zip(f) {
            assert!((j - 120.0 * fk).abs() < 1e-9);
        }
        assert_eq!(effective_exchange_noise(&p, &v, &VoltageVector::default()).unwrap(), exchange_strict(&p, &v).unwrap());
    }
}
