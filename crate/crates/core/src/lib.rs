//! Outlier-robust subspace recovery.
//!
//! The crate is organised around two families of solvers for the least
//! absolute deviations subspace problem
//!
//! ```text
//! min_{V in O(D,r)} (1/N) sum_i ||(I - V V^T) x_i||
//! ```
//!
//! * [`glad`]: nonconvex geodesic gradient descent on the Grassmannian, with
//!   optional minibatching and Gaussian gradient noise (GGD, NGGD, SGGD, NSGGD).
//! * [`reaper`]: the convex REAPER relaxation over
//!   `H = {0 <= P <= I, tr P = r}`, solved by projected subgradient descent or
//!   von Neumann entropy mirror descent.
//!
//! Around them sit [`geometry`] (bases, retraction, subspace distances),
//! [`data`] (haystack generator and CSV I/O), [`stability`] (recovery
//! diagnostics) and [`privacy`] (Gaussian-mechanism noise calibration).

pub mod data;
pub mod error;
pub mod geometry;
pub mod glad;
pub mod privacy;
pub mod reaper;
pub mod seeding;
pub mod stability;
pub mod trajectory;

pub use data::{HaystackParams, Label, LabeledDataset};
pub use error::{Error, Result};
pub use geometry::{SubspaceBasis, TangentVector, TopEigenspace};
pub use glad::{GladConfig, StepSchedule};
pub use privacy::{Mechanism, NoisePlan, PrivacyBudget};
pub use reaper::{ReaperConfig, ReaperRun, RelaxedProjection, Solver};
pub use stability::{ReaperStabilityReport, StabilityReport};
pub use trajectory::{Record, Trajectory};

/// Dense real matrix used throughout the crate.
pub type Matrix = nalgebra::DMatrix<f64>;
