//! Topology conversion for tensor networks.
//!
//! A tensor network here is a multigraph whose nodes hold dense factor tensors,
//! one open (physical) mode per node, and whose edges are summed bond indices.
//! The crate converts between three layouts without leaving the compressed
//! representation:
//!
//! * ring to string ([`convert::tc_to_tt`]),
//! * 2-D grid to string ([`convert::peps_to_tt`]),
//! * string to ring ([`convert::tt_to_tc`]).
//!
//! Every conversion is a sequence of local SVD-based rewrites from [`rewire`].
//! [`verify`] holds the brute-force contraction oracle, linear-cost inner
//! products for string and ring layouts, and the per-step truncation error
//! bound.

pub mod convert;
pub mod error;
pub mod linalg;
pub mod network;
pub mod par;
pub mod rewire;
pub mod tensor;
pub mod verify;

pub use error::{Error, Result};
pub use linalg::{svd_split, SvdSplit, TruncationPolicy};
pub use network::{Bond, EdgeId, Fill, NodeId, TensorNetwork, Topology};
pub use tensor::{contract, DenseTensor, Matrix};
