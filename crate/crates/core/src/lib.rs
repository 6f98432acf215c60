//! Numerical laboratory for a two-phase elliptic-parabolic moving boundary
//! problem: an evaporation front in a porous layer. Water saturates the
//! region above the front (elliptic pressure), a vapor-air mixture fills the
//! region below it (parabolic humidity), and the front moves by the mass-flux
//! balance of the two phases plus gravity.
//!
//! The crate bundles
//! - a fixed-domain nonlinear simulator (tent-profile vertical coordinate
//!   map, pseudo-spectral/finite-difference bulk solvers, explicit
//!   second-order interface stepping, well-posedness monitoring), and
//! - executable linear analysis: frozen boundary coefficients, the
//!   inhomogeneous boundary symbol with its principal parts and Newton
//!   polygon, sector-based parabolicity scans, dispersion-root finding for
//!   the half-space and finite-layer problems, and semi-analytic mode oracles
//!   used to validate the simulator.
//!
//! ```
//! use evapfront::fields::{solve_pressure, FieldState, Params, SolverOptions};
//! use evapfront::geometry::{build_diffeomorphism, DiffeoOptions, Grid, InterfaceState};
//! use evapfront::interface::check_wellposedness;
//!
//! // Flat equilibrium at H = 0.5: alpha/H + beta/(1-H) = 1.
//! let params = Params::new(0.1, 0.4, 1.0, 0.5, 1e-3).unwrap();
//! let grid = Grid::build(8, 8, 8, params.h).unwrap();
//! let eta = InterfaceState::flat(8);
//! let map = build_diffeomorphism(&eta, &grid, &DiffeoOptions::default()).unwrap();
//! let pressure = solve_pressure(&map, &grid, &SolverOptions::default()).unwrap();
//! let fields = FieldState { pressure, humidity: FieldState::flat_steady(&grid).humidity, time: 0.0 };
//! let report = check_wellposedness(&fields, &map, &grid, &params).unwrap();
//! assert!(report.satisfied && (report.worst + 0.6).abs() < 1e-10);
//! ```

pub mod config;
pub mod error;
pub mod fields;
pub mod geometry;
pub mod interface;
pub mod linearize;
pub mod modelproblem;
pub mod numerics;
pub mod simulation;
pub mod symbol;

pub use error::{Result, SimError};
