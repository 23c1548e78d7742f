//! Exact behavioural distances for probabilistic transition systems.
//!
//! The engine computes the behavioural pseudometric between states of a
//! finite probabilistic transition system — the quantitative analogue of
//! probabilistic bisimilarity — in exact rational arithmetic. Distances
//! are obtained as the greatest fixed point of a transportation-based
//! functional: iteration yields certified lower bounds, verified
//! post-fixed points yield certified upper bounds, and a linear-system
//! accelerator usually closes the gap to an exact answer.
//!
//! The crate also builds the corresponding sentences in the existential
//! theory of the reals and can drive an external decision procedure (or a
//! bounds-based internal oracle) through interval bisection.

pub mod bisim;
pub mod delta;
pub mod encode;
pub mod error;
pub mod fixpoint;
pub mod io;
mod linalg;
pub mod linprog;
pub mod logic;
pub mod metric;
pub mod pts;
pub mod rational;
pub mod reach;

pub use error::Error;
pub use metric::{Coupling, DistanceMatrix};
pub use pts::{Pts, StateKind};
pub use rational::Rat;
