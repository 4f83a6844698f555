//! Tolerance constants shared by every evaluator.
//!
//! All thresholds live in one record so a run can override them (for
//! instance from the CLI `--tol-scale` flag) without touching call sites.

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Tolerances {
    /// Allowed deviation of `|sigma|` from 1 for a rotor.
    pub unit_rotor: f64,
    /// `xi3^2 + xi4^2 < degenerate_rotor * |Im xi|^2` selects the explicit slice branches.
    pub degenerate_rotor: f64,
    /// Smallest accepted finite-difference step.
    pub min_fd_step: f64,
    /// Boundary kernel calls closer than this to the diagonal are rejected.
    pub diagonal: f64,
    /// `|K|` below this makes `|K|^p` non-differentiable for our purposes.
    pub near_zero_modulus: f64,
    /// Largest `d(I)` accepted by finite-difference derivative operators.
    pub max_fd_order: usize,
}

impl Default for Tolerances {
    fn default() -> Self {
        Self {
            unit_rotor: 1e-12,
            degenerate_rotor: 1e-24,
            min_fd_step: 1e-8,
            diagonal: 1e-8,
            near_zero_modulus: 1e-8,
            max_fd_order: 4,
        }
    }
}

impl Tolerances {
    /// Scales every floating-point threshold by `factor`.
    pub fn scaled(self, factor: f64) -> Self {
        Self {
            unit_rotor: self.unit_rotor * factor,
            degenerate_rotor: self.degenerate_rotor * factor,
            min_fd_step: self.min_fd_step * factor,
            diagonal: self.diagonal * factor,
            near_zero_modulus: self.near_zero_modulus * factor,
            max_fd_order: self.max_fd_order,
        }
    }
}
