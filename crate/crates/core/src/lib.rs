//! Linear-programming policy evaluation for discounted linear-quadratic problems.
//!
//! The crate builds the sampled linear program whose decision variable is the
//! quadratic q-function matrix `Q`, decides boundedness with an explicit dual
//! certificate, and constructs datasets and objectives for which the program is
//! guaranteed to be bounded with `Q_π` as its unique optimizer.
//!
//! Layout:
//!
//! - [`matlib`]: symmetric matrices, half-vectorization, Lyapunov solves.
//! - [`system`]: plant, policy, cost, datasets and model-based ground truth.
//! - [`features`]: quadratic features and the data matrix.
//! - [`lpcore`]: LP model, simplex, Farkas certificates, eigenvector cutting planes.
//! - [`algorithms`]: the two dataset/objective construction procedures.
//! - [`geometry`]: membership residuals and property suites for the feasible sets.
//! - [`bench`]: random instances and Monte Carlo experiment drivers.

pub mod algorithms;
pub mod bench;
pub mod error;
pub mod features;
pub mod geometry;
pub mod io;
pub mod lpcore;
pub mod matlib;
pub mod system;

pub use error::{Error, Result};
pub use matlib::{SVec, SymMatrix};
