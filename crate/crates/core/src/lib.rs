//! Numerical laboratory for non-invertible holomorphic endomorphisms of P^k:
//! homogeneous lifts, Green functions, exact backward fibers on P^1,
//! equilibrium-measure estimators and reproducible equidistribution
//! experiments.

pub mod cli;
pub mod error;
pub mod experiments;
pub mod fibers;
pub mod iteration;
pub mod map;
pub mod measures;
pub mod polynomial;
pub mod projective;
pub mod rng;
pub mod roots;
pub mod tolerances;

pub use error::{Error, Result};
pub use map::{
    check_nondegenerate, evaluate_map, Certificate, EndomorphismMap, MapDefinition, Preset,
};
pub use polynomial::HomogeneousPolynomial;
pub use projective::{fs_distance, normalize, ComplexScalar, ProjectivePoint};
pub use tolerances::{SolverBackend, Tolerances};
