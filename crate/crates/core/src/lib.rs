//! Control sets of control-affine systems near homoclinic bifurcations.
//!
//! The crate is organized bottom-up:
//!
//! * [`expr`] — arithmetic expression trees with parsing, evaluation, and
//!   symbolic differentiation; vector fields are defined by the user as
//!   expression strings.
//! * [`dynamics`] — parameter-dependent control-affine systems
//!   `x' = f0(alpha,x) + sum_i u_i f_i(alpha,x)` with `u(t)` constrained to
//!   a scaled box, integrated by an adaptive embedded Runge-Kutta 5(4) pair
//!   with dense output, forward or in reversed time.
//! * [`analysis`] — equilibria and spectra, saddle quantities, Lie brackets
//!   and rank conditions, invariant-manifold legs, split functions, Melnikov
//!   integrals, and Poincaré-map limit cycles.
//! * [`reachset`] — grid-based fixpoint approximation of reachable,
//!   controllable, and control sets, invariance classification,
//!   chain-transitive components, and controlled-periodic-orbit
//!   certificates.
//! * [`scenarios`] — built-in systems and figure presets, scenario
//!   execution with property tags, and `(alpha, rho)` sweeps.

pub mod analysis;
pub mod dynamics;
pub mod expr;
pub mod linalg;
pub mod reachset;
pub mod scenarios;
