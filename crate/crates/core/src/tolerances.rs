//! Every numeric tolerance and verdict threshold used by the library lives
//! here so that a run can be audited from its config alone.

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum SolverBackend {
    /// Companion matrix below `aberth_min_degree`, Aberth–Ehrlich above.
    #[default]
    Auto,
    Companion,
    Aberth,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Tolerances {
    /// Chordal distance allowed between f(root) and the target.
    pub residual: f64,
    /// Roots closer than this (chordal) are merged into one multiple root.
    pub clustering: f64,
    /// Targets this close to a critical value get `residual * d`.
    pub near_critical: f64,
    /// Lower bound on |Res(F_0, F_1)| after coefficient normalization.
    pub resultant: f64,
    /// Lower bound on min ||F|| over the unit sphere (k >= 2 certificate).
    pub sphere_threshold: f64,
    pub sphere_samples: usize,
    pub map_constant_safety: f64,
    pub solver: SolverBackend,
    pub aberth_min_degree: usize,
    /// Largest d^n an exact backward orbit may expand to.
    pub fiber_cap: u64,
    /// Errors at or below this are treated as numerically zero in rate fits.
    pub error_floor: f64,
    pub rate_threshold: f64,
    pub r_squared_min: f64,
    pub exceptional_lambda: f64,
    pub exceptional_depth: u32,
    pub count_ratio_tolerance: f64,
    pub boundary_shell: f64,
    pub boundary_fraction: f64,
    pub mixing_sigmas: f64,
    pub green_tail: f64,
    pub pole_distance: f64,
    pub survival_fraction: f64,
    pub hypersurface_margin: f64,
}

impl Default for Tolerances {
    fn default() -> Self {
        Self {
            residual: 1e-10,
            clustering: 1e-6,
            near_critical: 1e-8,
            resultant: 1e-12,
            sphere_threshold: 1e-8,
            sphere_samples: 10_000,
            map_constant_safety: 2.0,
            solver: SolverBackend::Auto,
            aberth_min_degree: 8,
            fiber_cap: 2_000_000,
            error_floor: 1e-14,
            rate_threshold: 1.5,
            r_squared_min: 0.9,
            exceptional_lambda: 1.5,
            exceptional_depth: 6,
            count_ratio_tolerance: 0.1,
            boundary_shell: 0.005,
            boundary_fraction: 0.05,
            mixing_sigmas: 3.0,
            green_tail: 1e-10,
            pole_distance: 1e-6,
            survival_fraction: 0.9,
            hypersurface_margin: 1e-3,
        }
    }
}
