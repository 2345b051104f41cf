//! Numerical kernels shared by the solvers.

pub mod bisection;
pub mod brute;
pub mod ellipsoid;
pub mod sum;

pub use bisection::{bisect_monotone, bisect_threshold, BisectionResult, BisectionSetup};
pub use brute::{brute_force_jam, BruteObjective, BRUTE_FORCE_CAP};
pub use ellipsoid::{
    ellipsoid_minimize, Bound, Ellipsoid, EllipsoidOptions, EllipsoidOutcome, EllipsoidStatus,
    OracleAnswer,
};
pub use sum::{compensated_sum, CompensatedSum};
