//! Two-stage staged co-deployment of coupled subsystems under demand
//! uncertainty.
//!
//! Each subsystem picks a Stage-1 capacity now and expands it once its
//! Stage-2 demand is known. Subsystems add demand to one another in
//! proportion to their capacities. The crate builds the fully flexible
//! stochastic program over the joint scenario tensor, and a locally
//! discretized version where every coupling gets its own scenario count
//! from a pre-processing step. It also partitions the system into blocks
//! solved bottom-up.
//!
//! ```
//! use codeploy::{bundled, stochprog};
//!
//! let spec = bundled::case2();
//! let (_, det) = stochprog::build_deterministic(&spec).unwrap();
//! assert!((det.cost - 15.4510).abs() < 1e-3);
//! ```

pub mod coupling;
pub mod error;
pub mod guide;
pub mod model;
pub mod partition;
pub mod pipeline;
pub mod scenario;
pub mod solver;
pub mod stochprog;

pub use error::{Error, Result};
pub use model::{validate, CouplingSpec, ProblemSpec, SubsystemSpec};

/// Problem files shipped with the crate.
pub mod bundled {
    use crate::model::ProblemSpec;

    /// Two subsystems, A and B.
    pub const CASE2: &str = include_str!("../problems/case2.json");
    /// Three subsystems, A, B and a weakly coupled C.
    pub const CASE3: &str = include_str!("../problems/case3.json");

    pub fn case2() -> ProblemSpec {
        ProblemSpec::from_json(CASE2).expect("bundled case2 parses")
    }

    pub fn case3() -> ProblemSpec {
        ProblemSpec::from_json(CASE3).expect("bundled case3 parses")
    }
}
