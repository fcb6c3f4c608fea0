//! Numerical tools for overdetermined elliptic problems posed on periodic
//! perturbations of the straight cylinder `B × ℝ`.
//!
//! The crate computes the radial ground state on the unit ball, the Dirichlet
//! and Robin spectra of its linearization, the Fourier symbol of the linearized
//! Dirichlet-to-Neumann operator on the cylinder, and the bifurcating branch of
//! periodic domains on which the overdetermined problem is solvable.

// `!(x > 0.0)` guards also reject NaN; index loops follow the stencils.
#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop)]

pub mod ball_spectra;
pub mod continuation;
pub mod cylinder_spectra;
pub mod dtn;
pub mod nonlinearity;
pub mod numerics;
pub mod radial_ball;

pub use nonlinearity::{Nonlinearity, NonlinearityError, Table};
pub use numerics::{BallGeometry, NumericsError, UniformGrid1D};
pub use radial_ball::{
    eval_profile, robin_constant, solve_ground_profile, RadialError, RadialProfile, ShootingConfig,
};
