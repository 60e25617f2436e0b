//! Uniform one-dimensional grids.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum BoundaryCondition {
    #[default]
    DirichletEndstates,
    NeumannZero,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Grid1D {
    pub x_min: f64,
    pub x_max: f64,
    pub m: usize,
    #[serde(default)]
    pub boundary_condition: BoundaryCondition,
}

impl Grid1D {
    pub fn new(x_min: f64, x_max: f64, m: usize) -> Result<Self> {
        if m < 3 || !(x_max > x_min) || !x_min.is_finite() || !x_max.is_finite() {
            return Err(Error::Config(format!(
                "grid needs m >= 3 and x_max > x_min (got m = {m}, [{x_min}, {x_max}])"
            )));
        }
        Ok(Self { x_min, x_max, m, boundary_condition: BoundaryCondition::DirichletEndstates })
    }

    /// Grid with spacing `h`; the interval is stretched to a whole number of cells.
    pub fn with_spacing(x_min: f64, x_max: f64, h: f64) -> Result<Self> {
        if !(h > 0.0) {
            return Err(Error::Config(format!("spacing must be positive, got {h}")));
        }
        let cells = ((x_max - x_min) / h).round() as usize;
        Self::new(x_min, x_min + cells as f64 * h, cells + 1)
    }

    pub fn h(&self) -> f64 {
        (self.x_max - self.x_min) / (self.m - 1) as f64
    }

    pub fn x(&self, i: usize) -> f64 {
        self.x_min + i as f64 * self.h()
    }

    pub fn points(&self) -> Vec<f64> {
        (0..self.m).map(|i| self.x(i)).collect()
    }

    /// Same interval, half the spacing.
    pub fn refined(&self) -> Self {
        Self { m: 2 * self.m - 1, ..*self }
    }

    pub fn shifted(&self, s: f64) -> Self {
        Self { x_min: self.x_min + s, x_max: self.x_max + s, ..*self }
    }

    /// Index of the node closest to `x`.
    pub fn nearest(&self, x: f64) -> usize {
        let i = ((x - self.x_min) / self.h()).round();
        i.clamp(0.0, (self.m - 1) as f64) as usize
    }

    pub fn same_as(&self, other: &Grid1D) -> bool {
        self.m == other.m
            && (self.x_min - other.x_min).abs() <= 1e-12 * (1.0 + self.x_min.abs())
            && (self.x_max - other.x_max).abs() <= 1e-12 * (1.0 + self.x_max.abs())
    }

    pub fn check_same(&self, other: &Grid1D) -> Result<()> {
        if self.same_as(other) {
            Ok(())
        } else {
            Err(Error::GridMismatch(format!(
                "[{}, {}] x {} vs [{}, {}] x {}",
                self.x_min, self.x_max, self.m, other.x_min, other.x_max, other.m
            )))
        }
    }
}
