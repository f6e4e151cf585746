//! Discrete multi-marginal optimal transport: exact Kantorovich solver,
//! reduced lower-marginal problems, disintegration and gluing, and
//! uniqueness and extremality diagnostics.

pub mod costs;
pub mod error;
pub mod extremality;
pub mod grid;
pub mod instance;
pub mod lp;
pub mod measure;
pub mod par;
pub mod reduction;
pub mod scenarios;
pub mod twomap;

pub use costs::{CostKind, CostSpec, Sense};
pub use error::{Error, Result};
pub use grid::{Grid, MultiIndex};
pub use instance::Instance;
pub use measure::{Coupling, DiscreteMeasure, Disintegration, Space};
pub use par::Exec;
