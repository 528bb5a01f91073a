use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};
use crate::fitting::FitResult;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepAxis {
    pub name: String,
    pub unit: String,
    pub values: Vec<f64>,
}

impl SweepAxis {
    pub fn new(name: &str, unit: &str, values: Vec<f64>) -> Self {
        Self {
            name: name.to_string(),
            unit: unit.to_string(),
            values,
        }
    }
}

/// Gridded experiment output. Columns are flattened row-major over the
/// axes, the last axis varying fastest.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
pub struct SweepResult {
    pub experiment: String,
    pub axes: Vec<SweepAxis>,
    pub columns: Vec<(String, Vec<f64>)>,
    pub fits: Vec<FitResult>,
    /// Derived scalars (extracted gaps, centres, calibration constants).
    pub scalars: BTreeMap<String, f64>,
    /// Secondary tables that do not share the main grid.
    pub tables: BTreeMap<String, SweepResult>,
}

impl SweepResult {
    pub fn new(experiment: &str, axes: Vec<SweepAxis>) -> Self {
        Self {
            experiment: experiment.to_string(),
            axes,
            ..Default::default()
        }
    }

    pub fn rows(&self) -> usize {
        self.axes.iter().map(|a| a.values.len()).product()
    }

    pub fn push_column(&mut self, name: &str, values: Vec<f64>) -> Result<()> {
        if values.len() != self.rows() {
            return Err(invalid(
                "column",
                format!("{name} has {} values for {} grid points", values.len(), self.rows()),
            ));
        }
        self.columns.push((name.to_string(), values));
        Ok(())
    }

    pub fn column(&self, name: &str) -> Option<&[f64]> {
        self.columns.iter().find(|(n, _)| n == name).map(|(_, v)| v.as_slice())
    }

    pub fn scalar(&self, name: &str) -> Option<f64> {
        self.scalars.get(name).copied()
    }

    pub fn set(&mut self, name: &str, value: f64) {
        self.scalars.insert(name.to_string(), value);
    }

    /// Axis coordinates of flattened row `i`.
    pub fn coordinates(&self, mut i: usize) -> Vec<f64> {
        let mut out = vec![0.0; self.axes.len()];
        for (k, axis) in self.axes.iter().enumerate().rev() {
            let n = axis.values.len();
            out[k] = axis.values[i % n];
            i /= n;
        }
        out
    }

    /// Header names: axes then columns.
    pub fn header(&self) -> Vec<String> {
        self.axes
            .iter()
            .map(|a| a.name.clone())
            .chain(self.columns.iter().map(|(n, _)| n.clone()))
            .collect()
    }

    /// Row `i` as axis coordinates followed by column values.
    pub fn row(&self, i: usize) -> Vec<f64> {
        let mut r = self.coordinates(i);
        r.extend(self.columns.iter().map(|(_, v)| v[i]));
        r
    }
}
