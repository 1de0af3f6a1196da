//! Deterministic kinetic transport for a two-layer solid and the inverse
//! toolkit that recovers the interface heat-reflection coefficient from
//! surface measurements.
//!
//! The forward model is a pair of linearized phonon BGK equations posed on
//! `[0, 1]` and `[1, L]`, coupled at the material junction `x = 1` by
//! reflection/transmission coefficients and closed by an incoming boundary
//! at `x = 0` and a diffusive wall at `x = L`. The inverse side injects a
//! boundary pulse concentrated in time, angle, and frequency, windows the
//! returning signal around the ballistic round-trip time, and extrapolates
//! the windowed measurements to recover the reflectance `eta1(omega)` one
//! frequency at a time. A least-squares fit of simulated traces against
//! observed ones is included as a baseline for comparison.
//!
//! Modules are layered bottom-up: [`quadrature`] builds the angle/frequency
//! node sets, [`material`] the dispersion and relaxation tables,
//! [`interface`] the junction coefficients, [`solver`] the time stepper,
//! [`analytic`] the closed-form pulse machinery, [`reconstruct`] the
//! measurement and fitting pipeline, and [`estimates`] the a-priori bound
//! checks. [`config`] holds the serializable run descriptions used by the
//! command-line front end.

pub mod analytic;
pub mod config;
pub mod error;
pub mod estimates;
pub mod interface;
pub mod material;
pub mod quadrature;
pub mod reconstruct;
pub mod solver;

pub use error::PhonoxError;

/// Library-wide result alias.
pub type Result<T> = std::result::Result<T, PhonoxError>;
