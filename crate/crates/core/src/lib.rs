//! Projection-based solvers for two-set convex feasibility problems
//! `find z in X ∩ Y`.
//!
//! The main method is the extended centralized circumcentered-reflection
//! iteration: an admissible kernel `T` moves the point into `Y`, an
//! `alpha`-centralizer mixes `T z` with `P_X T z`, and a circumcenter step of
//! the result and its two reflections produces the next iterate. Alternating
//! projections are included as a baseline.
//!
//! ```
//! use eccrm::{problems, solver::{solve, Method, SolverConfig}};
//!
//! let pair = problems::gen_halfspace_wedge(3, 0.8, 7).unwrap();
//! let cfg = SolverConfig::new(Method::Ccrm, 1e-10, 1000);
//! let trace = solve(&pair, &cfg).unwrap();
//! assert!(trace.final_delta() <= 1e-10);
//! ```

pub mod bench;
pub mod circumcenter;
pub mod error;
pub mod geometry;
pub mod operators;
pub mod oracle;
pub mod problems;
pub mod rng;
pub mod solver;

pub use circumcenter::{circumcenter, pcrm, CircumcenterCase, CircumcenterResult};
pub use error::{CfpError, Result};
pub use geometry::{ConvexSet, MaskEntry, Metadata, Point, ProblemPair};
pub use operators::{centralize, eccrm_step, AdmissibleOperator, KernelSpec, SetId, StepValue};
pub use problems::{Family, GeneratorSpec, InstanceDocument};
pub use rng::SplitMix64;
pub use solver::{solve, Method, RunStatus, SolveTrace, SolverConfig, StepSchedule};
