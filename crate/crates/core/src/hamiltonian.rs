//! Exchange + Zeeman Hamiltonian of the three-spin system.
//!
//! Energies are frequencies in MHz (h = 1) and times are in µs, so a
//! propagator is `exp(-i 2π H t)`.

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::spin::{Axis, Mat8, ProjectorTag, SpinOperatorSet, C64};

/// g·µB/h for g = 2, in MHz per tesla.
pub const DEFAULT_G_MU_B_MHZ_PER_T: f64 = 27_970.0;

/// Zeeman frequency (MHz) of a field given in tesla.
pub fn zeeman_mhz_from_tesla(b_tesla: f64, g_mu_b_mhz_per_t: f64) -> f64 {
    b_tesla * g_mu_b_mhz_per_t
}

/// Pairwise exchange strengths and the uniform z field, all in MHz.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ExchangeConfig {
    pub j12: f64,
    pub j23: f64,
    pub j13: f64,
    /// Uniform field along z as a Zeeman frequency g·µB·B/h.
    #[serde(default)]
    pub bz: f64,
}

impl ExchangeConfig {
    pub fn new(j12: f64, j23: f64, j13: f64, bz: f64) -> Result<Self> {
        let cfg = Self { j12, j23, j13, bz };
        cfg.validate()?;
        Ok(cfg)
    }

    /// Equal couplings on all three pairs.
    pub fn equal(j: f64, bz: f64) -> Result<Self> {
        Self::new(j, j, j, bz)
    }

    /// Equal couplings producing the requested gap `E_g = 3J/2`.
    pub fn lpi_for_gap(gap: f64, bz: f64) -> Result<Self> {
        Self::equal(2.0 * gap / 3.0, bz)
    }

    pub fn off(bz: f64) -> Self {
        Self {
            j12: 0.0,
            j23: 0.0,
            j13: 0.0,
            bz,
        }
    }

    pub fn validate(&self) -> Result<()> {
        for (name, v) in [("j12", self.j12), ("j23", self.j23), ("j13", self.j13)] {
            if !v.is_finite() {
                return Err(Error::NonFinite(name));
            }
            if v < 0.0 {
                return Err(invalid(name, format!("negative exchange {v} MHz")));
            }
        }
        if !self.bz.is_finite() {
            return Err(Error::NonFinite("bz"));
        }
        Ok(())
    }

    /// Couplings in pair order (12, 23, 13).
    pub fn pairs(&self) -> [f64; 3] {
        [self.j12, self.j23, self.j13]
    }

    pub fn with_pairs(&self, j: [f64; 3]) -> Self {
        Self {
            j12: j[0],
            j23: j[1],
            j13: j[2],
            bz: self.bz,
        }
    }
}

/// Quasi-static local (Overhauser) fields `b[site][axis]` in MHz.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct LocalFields {
    pub b: [[f64; 3]; 3],
}

impl LocalFields {
    pub fn zero() -> Self {
        Self::default()
    }

    pub fn is_zero(&self) -> bool {
        self.b.iter().flatten().all(|&v| v == 0.0)
    }

    pub fn validate(&self) -> Result<()> {
        if self.b.iter().flatten().all(|v| v.is_finite()) {
            Ok(())
        } else {
            Err(Error::NonFinite("local fields"))
        }
    }

    pub fn scaled(&self, factor: f64) -> Self {
        Self {
            b: self.b.map(|row| row.map(|v| v * factor)),
        }
    }
}

pub(crate) const PAIRS: [(usize, usize); 3] = [(1, 2), (2, 3), (1, 3)];

fn re(x: f64) -> C64 {
    C64::new(x, 0.0)
}

/// `H = Σ J_ij S_i·S_j + Bz S^z + Σ_i b_i·S_i`.
pub fn build_hamiltonian(cfg: &ExchangeConfig, fields: &LocalFields) -> Result<Mat8> {
    cfg.validate()?;
    fields.validate()?;
    let ops = SpinOperatorSet::shared();
    let mut h = Mat8::zeros();
    for (j, (a, b)) in cfg.pairs().into_iter().zip(PAIRS) {
        if j != 0.0 {
            h += ops.dot(a, b) * re(j);
        }
    }
    if cfg.bz != 0.0 {
        h += ops.total(Axis::Z) * re(cfg.bz);
    }
    for (site, row) in fields.b.iter().enumerate() {
        for (axis, &v) in Axis::ALL.iter().zip(row) {
            if v != 0.0 {
                h += ops.site(site + 1, *axis) * re(v);
            }
        }
    }
    Ok(h)
}

/// Ascending eigenvalues with matching orthonormal eigenvectors (columns).
#[derive(Debug, Clone)]
pub struct Eigensystem {
    pub values: [f64; 8],
    pub vectors: Mat8,
}

pub(crate) fn hermitian_asymmetry(h: &Mat8) -> f64 {
    (h - h.adjoint()).norm() / h.norm().max(1.0)
}

pub fn eigensystem(h: &Mat8) -> Result<Eigensystem> {
    if h.iter().any(|z| !z.re.is_finite() || !z.im.is_finite()) {
        return Err(Error::NonFinite("Hamiltonian"));
    }
    let asym = hermitian_asymmetry(h);
    if asym > 1e-8 {
        return Err(Error::NotHermitian(asym));
    }
    let sym = (h + h.adjoint()) * re(0.5);
    let eig = sym.symmetric_eigen();
    let mut order: [usize; 8] = std::array::from_fn(|k| k);
    order.sort_by(|&a, &b| eig.eigenvalues[a].total_cmp(&eig.eigenvalues[b]));
    let values = order.map(|k| eig.eigenvalues[k]);
    let vectors = Mat8::from_fn(|r, c| eig.eigenvectors[(r, order[c])]);
    Ok(Eigensystem { values, vectors })
}

impl Eigensystem {
    pub fn reconstruct(&self) -> Mat8 {
        let d = Mat8::from_diagonal(&self.values.map(re).into());
        self.vectors * d * self.vectors.adjoint()
    }

    /// `exp(-i 2π H t)` for `t` in µs.
    pub fn propagator(&self, t_us: f64) -> Mat8 {
        let phases = self
            .values
            .map(|e| C64::from_polar(1.0, -std::f64::consts::TAU * e * t_us));
        let mut vp = self.vectors;
        for (c, p) in phases.iter().enumerate() {
            for r in 0..8 {
                vp[(r, c)] *= *p;
            }
        }
        vp * self.vectors.adjoint()
    }
}

/// Gap between the S = 1/2 and S = 3/2 manifolds at the leakage-protected
/// idle point.
pub fn lpi_gap(j: f64) -> f64 {
    1.5 * j
}

pub const AXIS_Z: [f64; 3] = [0.0, 0.0, 1.0];
/// Qubit-frame axis of the (1,2) exchange term.
pub const AXIS_M: [f64; 3] = [0.866_025_403_784_438_6, 0.0, -0.5];
/// Qubit-frame axis of the (2,3) exchange term.
pub const AXIS_N: [f64; 3] = [-0.866_025_403_784_438_6, 0.0, -0.5];

/// Qubit rotation generated by an exchange configuration.
///
/// Inside either gauge block the exchange Hamiltonian equals
/// `const − ½ r·τ` with `r = J12 m̂ + J23 n̂ + J13 ẑ`, so a segment of
/// length `t` rotates the Bloch vector by `−2π|r|t` about `r̂`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RotationAxis {
    pub axis: Option<[f64; 3]>,
    /// |r| in MHz.
    pub rate: f64,
}

pub fn rotation_vector(cfg: &ExchangeConfig) -> [f64; 3] {
    let mut r = [0.0; 3];
    for (j, axis) in cfg.pairs().into_iter().zip([AXIS_M, AXIS_N, AXIS_Z]) {
        for k in 0..3 {
            r[k] += j * axis[k];
        }
    }
    r
}

pub fn rotation_axis(cfg: &ExchangeConfig) -> RotationAxis {
    let r = rotation_vector(cfg);
    let rate = r.iter().map(|v| v * v).sum::<f64>().sqrt();
    let scale = cfg.pairs().iter().fold(0.0f64, |m, v| m.max(v.abs()));
    if rate <= 1e-12 * scale.max(f64::MIN_POSITIVE) || rate == 0.0 {
        return RotationAxis {
            axis: None,
            rate: 0.0,
        };
    }
    RotationAxis {
        axis: Some(r.map(|v| v / rate)),
        rate,
    }
}

/// Fields (Zeeman MHz) at which qubit and leakage levels cross for equal
/// couplings `J`, ascending.
pub fn level_crossings(j: f64) -> Result<Vec<f64>> {
    if !(j > 0.0) || !j.is_finite() {
        return Err(invalid("j", format!("level crossings need J > 0, got {j}")));
    }
    Ok(vec![-1.5 * j, -0.75 * j, 0.75 * j, 1.5 * j])
}

/// Smallest energy difference between an S = 1/2 and an S = 3/2 level.
///
/// Valid when `H` commutes with S² (no local fields). Labels come from
/// diagonalising `H + κS²`, which splits the manifolds without moving the
/// eigenvectors.
pub fn qubit_leakage_gap(h: &Mat8) -> Result<f64> {
    let (qubit, leakage) = labelled_levels(h)?;
    let gap = qubit
        .iter()
        .flat_map(|q| leakage.iter().map(move |l| (q - l).abs()))
        .fold(f64::INFINITY, f64::min);
    Ok(gap)
}

/// Energies of the S = 1/2 and S = 3/2 levels, each ascending. Same
/// validity and labelling as [`qubit_leakage_gap`].
pub fn labelled_levels(h: &Mat8) -> Result<(Vec<f64>, Vec<f64>)> {
    let ops = SpinOperatorSet::shared();
    let kappa = 10.0 * (h.norm() + 1.0);
    let eig = eigensystem(&(h + ops.total_sq() * re(kappa)))?;
    let leak = crate::spin::shared_projector(ProjectorTag::Leakage);
    let mut qubit = Vec::with_capacity(4);
    let mut leakage = Vec::with_capacity(4);
    for k in 0..8 {
        let v = eig.vectors.column(k);
        let e = (v.adjoint() * h * v)[(0, 0)].re;
        let pl = (v.adjoint() * leak * v)[(0, 0)].re;
        if pl > 0.5 {
            leakage.push(e);
        } else {
            qubit.push(e);
        }
    }
    qubit.sort_by(f64::total_cmp);
    leakage.sort_by(f64::total_cmp);
    Ok((qubit, leakage))
}

/// Dense-grid search for vanishing qubit-leakage gaps of the equal-J
/// Hamiltonian. Returns the grid points that are local minima of the gap
/// with a gap smaller than `2·step` (the gap slope is at most 2 per unit
/// field).
pub fn scan_level_crossings(j: f64, bz_grid: &[f64]) -> Result<Vec<f64>> {
    if bz_grid.len() < 3 {
        return Err(Error::EmptyGrid("bz grid needs at least 3 points"));
    }
    let gaps = bz_grid
        .iter()
        .map(|&bz| {
            let h = build_hamiltonian(&ExchangeConfig::equal(j, bz)?, &LocalFields::zero())?;
            qubit_leakage_gap(&h)
        })
        .collect::<Result<Vec<_>>>()?;
    let mut out = Vec::new();
    for k in 1..gaps.len() - 1 {
        let step = (bz_grid[k + 1] - bz_grid[k - 1]).abs() / 2.0;
        if gaps[k] <= gaps[k - 1] && gaps[k] < gaps[k + 1] && gaps[k] < 2.0 * step {
            out.push(bz_grid[k]);
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::spin::{commutator, CoupledBasis};

    #[test]
    fn equal_exchange_spectrum() {
        let h = build_hamiltonian(&ExchangeConfig::equal(100.0, 0.0).unwrap(), &LocalFields::zero()).unwrap();
        let eig = eigensystem(&h).unwrap();
        for (k, v) in eig.values.iter().enumerate() {
            let want = if k < 4 { -75.0 } else { 75.0 };
            assert!((v - want).abs() < 1e-10, "{:?}", eig.values);
        }
    }

    #[test]
    fn zero_config_gives_zero_matrix() {
        let h = build_hamiltonian(&ExchangeConfig::off(0.0), &LocalFields::zero()).unwrap();
        assert_eq!(h, Mat8::zeros());
        let eig = eigensystem(&h).unwrap();
        assert!(eig.values.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn single_pair_13_singlet_triplet() {
        let j = 37.0;
        let h = build_hamiltonian(&ExchangeConfig::new(0.0, 0.0, j, 0.0).unwrap(), &LocalFields::zero()).unwrap();
        let basis = CoupledBasis::shared();
        for k in 0..2 {
            let v = basis.column(k);
            let resid = h * v - v * re(-0.75 * j);
            assert!(resid.norm() < 1e-12);
        }
        let eig = eigensystem(&h).unwrap();
        assert!((eig.values[2] - eig.values[1] - j).abs() < 1e-10);
    }

    #[test]
    fn invalid_inputs_rejected() {
        assert!(ExchangeConfig::new(f64::NAN, 0.0, 0.0, 0.0).is_err());
        assert!(ExchangeConfig::new(-1.0, 0.0, 0.0, 0.0).is_err());
        let mut f = LocalFields::zero();
        f.b[1][2] = f64::NAN;
        assert_eq!(
            build_hamiltonian(&ExchangeConfig::off(0.0), &f).unwrap_err(),
            Error::NonFinite("local fields")
        );
        let cfg = ExchangeConfig {
            j12: 1.0,
            j23: 1.0,
            j13: 1.0,
            bz: f64::INFINITY,
        };
        assert!(build_hamiltonian(&cfg, &LocalFields::zero()).is_err());
    }

    #[test]
    fn non_hermitian_rejected() {
        let mut h = Mat8::zeros();
        h[(0, 1)] = re(1.0);
        assert!(matches!(eigensystem(&h), Err(Error::NotHermitian(_))));
    }

    #[test]
    fn spin_conservation_without_local_fields() {
        let ops = SpinOperatorSet::shared();
        let h = build_hamiltonian(&ExchangeConfig::new(3.0, 11.0, 7.5, 2.2).unwrap(), &LocalFields::zero()).unwrap();
        assert!(commutator(&h, ops.total_sq()).norm() < 1e-10);
        assert!(commutator(&h, ops.total(Axis::Z)).norm() < 1e-10);
    }

    #[test]
    fn lpi_gap_values() {
        assert_eq!(lpi_gap(100.0), 150.0);
        assert!((lpi_gap(2.4) - 3.6).abs() < 1e-12);
        assert_eq!(lpi_gap(0.0), 0.0);
    }

    #[test]
    fn rotation_axis_cases() {
        let j = 42.0;
        let lpi = rotation_axis(&ExchangeConfig::equal(j, 0.0).unwrap());
        assert_eq!(lpi.axis, None);
        assert_eq!(lpi.rate, 0.0);
        let z = rotation_axis(&ExchangeConfig::new(0.0, 0.0, j, 0.0).unwrap());
        let a = z.axis.unwrap();
        assert!((a[2] - 1.0).abs() < 1e-15 && (z.rate - j).abs() < 1e-12);
        let mn = rotation_axis(&ExchangeConfig::new(j, j, 0.0, 0.0).unwrap());
        let a = mn.axis.unwrap();
        assert!(a[0].abs() < 1e-12 && (a[2] + 1.0).abs() < 1e-12);
        assert!((mn.rate - j).abs() < 1e-12);
    }

    // The axis formula must agree with the qubit block of the full
    // Hamiltonian: block = c·1 − ½ r·τ in both gauges.
    #[test]
    fn rotation_vector_matches_qubit_block() {
        let basis = CoupledBasis::shared();
        let cfg = ExchangeConfig::new(13.0, 2.5, 31.0, 0.0).unwrap();
        let h = basis.to_coupled(&build_hamiltonian(&cfg, &LocalFields::zero()).unwrap());
        let r = rotation_vector(&cfg);
        for g in 0..2 {
            let (a, b) = (g, g + 2);
            let rz = -(h[(a, a)].re - h[(b, b)].re);
            let rx = -2.0 * h[(a, b)].re;
            assert!((rz - r[2]).abs() < 1e-10 && (rx - r[0]).abs() < 1e-10);
            assert!(h[(a, b)].im.abs() < 1e-12);
        }
    }

    #[test]
    fn level_crossing_formula() {
        assert_eq!(level_crossings(100.0).unwrap(), vec![-150.0, -75.0, 75.0, 150.0]);
        let c = level_crossings(2.4).unwrap();
        assert!((c[0] + 3.6).abs() < 1e-12 && (c[1] + 1.8).abs() < 1e-12);
        assert!(level_crossings(0.0).is_err());
    }

    #[test]
    fn numerical_crossing_at_fifteen_mhz() {
        let grid: Vec<f64> = (0..=4000).map(|k| -20.0 + k as f64 * 0.01 + 0.003).collect();
        let found = scan_level_crossings(10.0, &grid).unwrap();
        assert_eq!(found.len(), 4, "{found:?}");
        for (f, want) in found.iter().zip(level_crossings(10.0).unwrap()) {
            assert!((f - want).abs() <= 0.01, "{f} vs {want}");
        }
    }
}
