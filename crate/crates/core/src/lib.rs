//! Dynamic assortment optimization under the multinomial-logit (MNL) choice
//! model with resource knapsack constraints.
//!
//! The crate is organised bottom-up:
//!
//! * [`model`] holds the problem instance and the MNL choice formulas.
//! * [`linprog`] is a small dense bounded-variable simplex solver.
//! * [`fluid`] solves the fluid relaxation `Φ(γ)` by bisection over LPs and the
//!   denominator-budgeted LP `Ψ(γ, s)`.
//! * [`sampler`] turns a fractional solution into random assortments of size at
//!   most `K` with exact marginals (Birkhoff–von-Neumann decomposition).
//! * [`policy`] implements the epoch-based re-solving heuristic and two
//!   sampling baselines.
//! * [`sim`] runs trajectories, records per-epoch traces and provides the
//!   exact dynamic-programming oracle for toy instances.
//! * [`harness`] generates random instances, runs batched experiments and
//!   aggregates regret curves.
//!
//! ```
//! use assort_knap::model::{Assortment, ModelInstance};
//!
//! let inst = ModelInstance::new(
//!     2, 1, 2, 100,
//!     vec![0.5, 1.0],
//!     vec![1.0, 3.0],
//!     vec![0.1, 0.2],
//!     vec![10.0],
//! ).unwrap();
//! let s = Assortment::new(vec![0, 1], &inst).unwrap();
//! assert!((inst.assortment_revenue(&s) - 0.7).abs() < 1e-12);
//! ```

pub mod error;
pub mod fluid;
pub mod harness;
pub mod linprog;
pub mod model;
pub mod policy;
pub mod sampler;
pub mod sim;

pub use error::{Error, Result};
pub use fluid::FractionalSolution;
pub use model::{Assortment, InventoryState, ModelInstance};
pub use policy::{Outcome, PolicyKind, PolicyState};
pub use sim::{run_trajectory, EpochTrace, TrajectoryResult};
