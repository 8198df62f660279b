//! Interaction indices for cooperative games: faithful least-squares indices,
//! classical Shapley/Banzhaf interaction indices and Shapley-Taylor, with
//! exact solvers and Monte-Carlo estimators.

pub mod bench;
pub mod coalition;
pub mod error;
pub mod estimators;
pub mod game;
pub mod index;
pub mod indices;
pub mod solver;
pub mod transforms;
pub mod weighting;

pub use coalition::{Coalition, SubsetBasis};
pub use error::{Error, Result};
pub use game::ValueFunction;
pub use index::{IndexKind, InteractionIndex};
pub use weighting::WeightingScheme;
