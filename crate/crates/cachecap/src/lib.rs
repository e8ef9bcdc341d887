//! Capacitated-tree model of a dense wireless network.
//!
//! The toolkit builds the dyadic tree abstraction of a random node
//! placement on the `[0, sqrt(n)]^2` square, routes caching traffic over it
//! by linear programming, computes cut-based outer bounds, and verifies the
//! duality/multicut chain that pins the flow value against the best cut up
//! to an explicit `1/(16(1+ln 2n^4))` factor. A channel module evaluates
//! MIMO cut capacities for the same placements, and a scheme module plays
//! out the distribute/concentrate cooperation bookkeeping at the bit level.
//!
//! Numeric work is generic over the scalar: the simplex core runs on `f64`
//! for speed and on exact rationals for oracle duty (see [`Scalar`] and
//! [`ExactScalar`]).

pub mod channel;
pub mod cutbounds;
pub mod error;
pub mod harness;
pub mod json;
pub mod lp;
pub mod lpcore;
pub mod maxflow;
pub mod placement;
pub mod scheme;
pub mod traffic;
pub mod tree;

pub use error::{Error, Result};

/// Default scalar for all network math.
pub type Scalar = f64;
/// Exact scalar used by the rational LP oracle.
pub type ExactScalar = num_rational::BigRational;

/// Linear program over the default scalar.
pub type LpProgram = lp::LinearProgram<Scalar>;
/// Linear program over exact rationals.
pub type ExactLpProgram = lp::LinearProgram<ExactScalar>;
