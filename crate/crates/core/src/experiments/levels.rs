//! Energy levels of the noiseless Hamiltonian along a one-coupling sweep.

use serde::{Deserialize, Serialize};

use super::{SweepAxis, SweepResult};
use crate::error::{Error, Result};
use crate::hamiltonian::{build_hamiltonian, eigensystem, labelled_levels, ExchangeConfig, LocalFields};

/// The coupling varied by a spectrum sweep.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum SweptPair {
    #[default]
    J12,
    J23,
    J13,
}

impl SweptPair {
    pub fn apply(self, base: &ExchangeConfig, j: f64) -> ExchangeConfig {
        let mut c = *base;
        match self {
            SweptPair::J12 => c.j12 = j,
            SweptPair::J23 => c.j23 = j,
            SweptPair::J13 => c.j13 = j,
        }
        c
    }

    pub fn name(self) -> &'static str {
        match self {
            SweptPair::J12 => "J12_MHz",
            SweptPair::J23 => "J23_MHz",
            SweptPair::J13 => "J13_MHz",
        }
    }
}

/// Eigenvalues `E1..E8` (ascending, MHz), the splitting between the two qubit
/// doublets and the qubit-leakage gap at every grid value of `swept`.
pub fn energy_levels(base: &ExchangeConfig, swept: SweptPair, grid: &[f64]) -> Result<SweepResult> {
    if grid.is_empty() {
        return Err(Error::EmptyGrid("spectrum grid"));
    }
    let mut levels = (0..8).map(|_| Vec::with_capacity(grid.len())).collect::<Vec<_>>();
    let mut split = Vec::with_capacity(grid.len());
    let mut gap = Vec::with_capacity(grid.len());
    for &j in grid {
        let cfg = swept.apply(base, j);
        cfg.validate()?;
        let h = build_hamiltonian(&cfg, &LocalFields::zero())?;
        let eig = eigensystem(&h)?;
        for (col, e) in levels.iter_mut().zip(eig.values) {
            col.push(e);
        }
        let (q, l) = labelled_levels(&h)?;
        split.push(0.5 * ((q[2] + q[3]) - (q[0] + q[1])));
        gap.push(
            q.iter()
                .flat_map(|a| l.iter().map(move |b| (a - b).abs()))
                .fold(f64::INFINITY, f64::min),
        );
    }
    let mut out = SweepResult::new("spectrum", vec![SweepAxis::new(swept.name(), "MHz", grid.to_vec())]);
    for (k, col) in levels.into_iter().enumerate() {
        out.push_column(&format!("E{}_MHz", k + 1), col)?;
    }
    out.push_column("qubit_splitting_MHz", split)?;
    out.push_column("gap_MHz", gap)?;
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn doublet_splitting_is_detuning_from_equal_coupling() {
        let base = ExchangeConfig::new(0.0, 100.0, 100.0, 0.0).unwrap();
        let grid = [0.0, 50.0, 100.0, 170.0];
        let r = energy_levels(&base, SweptPair::J12, &grid).unwrap();
        let split = r.column("qubit_splitting_MHz").unwrap();
        for (j, s) in grid.iter().zip(split) {
            assert!((s - (j - 100.0).abs()).abs() < 1e-9, "{j}: {s}");
        }
        assert!((r.column("gap_MHz").unwrap()[2] - 150.0).abs() < 1e-9);
    }
}
