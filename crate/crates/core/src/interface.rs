//! Interface evolution by the transformed kinematic law, and the
//! well-posedness monitor.
//!
//! On the interface row the dynamic condition reads
//!
//! ```text
//! mu * d(eta)/dt = (1 + |grad eta|^2) * ( -alpha * P_z / (1 + sigma_z^-)
//!                                         + beta * nu_z / (1 + sigma_z^+) ) + 1
//! ```
//!
//! with one-sided vertical derivatives on each side of the row. The monitor
//! tracks the sign condition that keeps this evolution dissipative: the
//! normal derivative of beta*nu + alpha*P (times sign mu) must stay below
//! -omega0 on the whole interface.

use ndarray::Array1;
use serde::Serialize;

use crate::error::{Result, SimError};
use crate::fields::{
    humidity_interface_derivative, pressure_interface_derivative, FieldState, Params,
};
use crate::geometry::{DiffeoMap, Grid, InterfaceState};

/// Pointwise well-posedness margin and the strict-parabolicity gap.
///
/// Conventions: `margin` uses the physical alpha, beta (not divided by mu)
/// times sign(mu), matching the sign condition as stated on the original
/// interface law; `omega1_pointwise` is the coefficient gap of the frozen
/// linearization, which lives in the boundary law divided by mu, so it
/// carries the 1/mu factor. On flat states both reduce (for mu > 0) to
/// +/-(alpha/H - beta/(1-H)) and `omega1_min > omega0` iff `satisfied`.
#[derive(Debug, Clone, Serialize)]
pub struct WellposednessReport {
    /// sign(mu) * [beta * dn(nu) + alpha * dn(P)] per transverse node.
    pub margin: Vec<f64>,
    /// Maximum of `margin` over the grid.
    pub worst: f64,
    /// worst <= -omega0.
    pub satisfied: bool,
    /// (-beta U+_z - alpha U-_z) (1 + |grad sigma|^2) / ((1 + sigma_z)^2 mu)
    /// per node, with one-sided sigma_z on each side; the coefficient gap of
    /// the frozen linearization.
    pub omega1_pointwise: Vec<f64>,
    /// Minimum of the gap over the interface.
    pub omega1_min: f64,
}

/// Right side of the transformed kinematic law divided by mu, evaluated on
/// the interface row with one-sided second-order derivatives.
pub fn interface_normal_flux(
    fields: &FieldState,
    diffeo: &DiffeoMap,
    grid: &Grid,
    params: &Params,
) -> Result<Array1<f64>> {
    params.validate_relaxed()?;
    let nx = grid.n_transverse;
    let pz = pressure_interface_derivative(&fields.pressure, grid);
    let nz = humidity_interface_derivative(&fields.humidity, grid);
    let mut flux = Array1::zeros(nx);
    for i in 0..nx {
        let jm = 1.0 + diffeo.d_sigma_dz_minus[i];
        let jp = 1.0 + diffeo.d_sigma_dz_plus[i];
        if jm.abs() < 1e-12 || jp.abs() < 1e-12 {
            return Err(SimError::DegenerateMap(format!(
                "one-sided Jacobian vanished on the interface row at node {i}"
            )));
        }
        let ge = diffeo.grad_eta[i];
        let slope_factor = 1.0 + ge * ge;
        flux[i] =
            (slope_factor * (-params.alpha * pz[i] / jm + params.beta * nz[i] / jp) + 1.0)
                / params.mu;
    }
    Ok(flux)
}

/// Margins the stepped interface must respect.
#[derive(Debug, Clone, Copy)]
pub struct StepBounds {
    pub h: f64,
    pub gamma_margin: f64,
}

/// Advance the interface by one explicit Heun step. The flux is re-evaluated
/// at the provisional Euler state, so constant-rate forcing is integrated
/// exactly; the margin constraint is enforced on the provisional and the
/// accepted state.
pub fn step_interface<F>(
    eta: &InterfaceState,
    flux: F,
    dt: f64,
    bounds: &StepBounds,
) -> Result<InterfaceState>
where
    F: Fn(&InterfaceState) -> Result<Array1<f64>>,
{
    if !(dt > 0.0) {
        return Err(SimError::InvalidParameter(format!(
            "interface step requires dt > 0, got {dt}"
        )));
    }
    let f1 = flux(eta)?;
    let predictor = InterfaceState {
        eta: &eta.eta + &(dt * &f1),
        time: eta.time + dt,
    };
    predictor.check_margin(bounds.h, bounds.gamma_margin)?;
    let f2 = flux(&predictor)?;
    let next = InterfaceState {
        eta: &eta.eta + &((0.5 * dt) * &(&f1 + &f2)),
        time: eta.time + dt,
    };
    next.check_margin(bounds.h, bounds.gamma_margin)?;
    Ok(next)
}

/// Evaluate the sign condition on the current state. `satisfied` demands the
/// worst margin at or below -omega0; the report also carries the
/// strict-parabolicity gap that the frozen linearization needs positive.
pub fn check_wellposedness(
    fields: &FieldState,
    diffeo: &DiffeoMap,
    grid: &Grid,
    params: &Params,
) -> Result<WellposednessReport> {
    params.validate_relaxed()?;
    let nx = grid.n_transverse;
    let pz = pressure_interface_derivative(&fields.pressure, grid);
    let nuz = humidity_interface_derivative(&fields.humidity, grid);
    let sgn = params.mu.signum();
    let mut margin = Vec::with_capacity(nx);
    let mut omega1 = Vec::with_capacity(nx);
    let mut worst = f64::NEG_INFINITY;
    let mut omega1_min = f64::INFINITY;
    for i in 0..nx {
        let jm = 1.0 + diffeo.d_sigma_dz_minus[i];
        let jp = 1.0 + diffeo.d_sigma_dz_plus[i];
        let ge = diffeo.grad_eta[i];
        let slope = (1.0 + ge * ge).sqrt();
        // Normal derivative of a Dirichlet-constant field u through the
        // interface: dn(u) = sqrt(1 + |grad eta|^2) * u_z / (1 + sigma_z).
        let dn_p = slope * pz[i] / jm;
        let dn_nu = slope * nuz[i] / jp;
        let m = sgn * (params.beta * dn_nu + params.alpha * dn_p);
        margin.push(m);
        worst = worst.max(m);

        let slope2 = 1.0 + ge * ge;
        let g = (-params.beta * nuz[i] / (jp * jp) - params.alpha * pz[i] / (jm * jm)) * slope2
            / params.mu;
        omega1.push(g);
        omega1_min = omega1_min.min(g);
    }
    let satisfied = worst <= -params.omega0;
    Ok(WellposednessReport {
        margin,
        worst,
        satisfied,
        omega1_pointwise: omega1,
        omega1_min,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fields::{solve_pressure, SolverOptions};
    use crate::geometry::{build_diffeomorphism, DiffeoOptions};
    use approx::assert_relative_eq;
    use ndarray::Array1;

    fn flat_case(h: f64, alpha: f64, beta: f64, mu: f64) -> (Grid, DiffeoMap, FieldState, Params) {
        let grid = Grid::build(8, 16, 16, h).unwrap();
        let eta = InterfaceState::flat(8);
        let d = build_diffeomorphism(&eta, &grid, &DiffeoOptions::default()).unwrap();
        let state = FieldState::flat_steady(&grid);
        let params = Params {
            alpha,
            beta,
            gamma_diff: 1.0,
            mu,
            h,
            omega0: 1e-3,
        };
        (grid, d, state, params)
    }

    #[test]
    fn flat_equilibrium_flux_vanishes() {
        // alpha/H + beta/(1-H) = 0.2 + 0.8 = 1.
        let (grid, d, state, params) = flat_case(0.5, 0.1, 0.4, 1.0);
        let f = interface_normal_flux(&state, &d, &grid, &params).unwrap();
        for v in f.iter() {
            assert!(v.abs() < 1e-12, "flux {v}");
        }
    }

    #[test]
    fn pure_gravity_drift() {
        let (grid, d, state, params) = flat_case(0.5, 0.0, 0.0, 2.0);
        let f = interface_normal_flux(&state, &d, &grid, &params).unwrap();
        for v in f.iter() {
            assert_relative_eq!(*v, 0.5, epsilon = 1e-12);
        }
    }

    #[test]
    fn flat_non_equilibrium_flux() {
        let mu = 2.0;
        let (grid, d, state, params) = flat_case(0.5, 0.25, 0.5, mu);
        let f = interface_normal_flux(&state, &d, &grid, &params).unwrap();
        for v in f.iter() {
            assert_relative_eq!(*v, -0.5 / mu, epsilon = 1e-12);
        }
    }

    #[test]
    fn heun_is_exact_for_constant_rate() {
        let eta = InterfaceState::flat(8);
        let bounds = StepBounds {
            h: 0.5,
            gamma_margin: 0.05,
        };
        let c = 0.37;
        let next = step_interface(
            &eta,
            |_s| Ok(Array1::from_elem(8, c)),
            0.01,
            &bounds,
        )
        .unwrap();
        for v in next.eta.iter() {
            assert_relative_eq!(*v, c * 0.01, epsilon = 1e-15);
        }
        let still = step_interface(&eta, |_s| Ok(Array1::zeros(8)), 0.01, &bounds).unwrap();
        for v in still.eta.iter() {
            assert_eq!(*v, 0.0);
        }
    }

    #[test]
    fn margin_breach_halts() {
        let eta = InterfaceState::flat(8);
        let bounds = StepBounds {
            h: 0.5,
            gamma_margin: 0.05,
        };
        let err = step_interface(&eta, |_s| Ok(Array1::from_elem(8, 100.0)), 0.01, &bounds);
        assert!(matches!(err, Err(SimError::MarginViolation(_))));
    }

    #[test]
    fn wellposedness_flat_examples() {
        let (grid, d, state, params) = flat_case(0.5, 0.1, 0.4, 1.0);
        let r = check_wellposedness(&state, &d, &grid, &params).unwrap();
        // dn P = 1/H = 2, dn nu = -1/(1-H) = -2: margin = 0.1*2 - 0.4*2 = -0.6.
        assert_relative_eq!(r.worst, -0.6, epsilon = 1e-10);
        assert!(r.satisfied);
        assert_relative_eq!(r.omega1_min, 0.6, epsilon = 1e-10);

        let (grid, d, state, params) = flat_case(0.5, 0.4, 0.1, 1.0);
        let r = check_wellposedness(&state, &d, &grid, &params).unwrap();
        assert_relative_eq!(r.worst, 0.6, epsilon = 1e-10);
        assert!(!r.satisfied);

        let (grid, d, state, params) = flat_case(0.5, 0.0, 0.0, 1.0);
        let r = check_wellposedness(&state, &d, &grid, &params).unwrap();
        assert!(r.worst.abs() < 1e-12);
        assert!(!r.satisfied);
    }

    #[test]
    fn monitor_matches_closed_form_on_flat_states() {
        for (h, alpha, beta) in [(0.5, 0.1, 0.4), (0.3, 0.2, 0.15), (0.7, 0.05, 0.6)] {
            let (grid, d, _state, params) = flat_case(h, alpha, beta, 1.0);
            // Use the solved pressure, not the analytic profile, to check the
            // whole path.
            let p = solve_pressure(&d, &grid, &SolverOptions::default()).unwrap();
            let state = FieldState {
                pressure: p,
                humidity: FieldState::flat_steady(&grid).humidity,
                time: 0.0,
            };
            let r = check_wellposedness(&state, &d, &grid, &params).unwrap();
            let closed = alpha / h - beta / (1.0 - h);
            assert_relative_eq!(r.worst, closed, epsilon = 1e-10);
        }
    }

    #[test]
    fn translation_equivariance_of_flat_solve() {
        // Shifting both Dirichlet constants shifts the solution affinely and
        // leaves the vertical derivative (hence the flux terms) unchanged.
        let grid = Grid::build(8, 16, 16, 0.5).unwrap();
        let eta = InterfaceState::flat(8);
        let d = build_diffeomorphism(&eta, &grid, &DiffeoOptions::default()).unwrap();
        let opts = SolverOptions::default();
        let shift = 0.35;
        let b0 = Array1::zeros(8);
        let t0 = Array1::from_elem(8, 1.0);
        let (p0, _, _) =
            crate::fields::solve_pressure_general(&d, &grid, &opts, &b0, &t0, None).unwrap();
        let b1 = Array1::from_elem(8, shift);
        let t1 = Array1::from_elem(8, 1.0 + shift);
        let (p1, _, _) =
            crate::fields::solve_pressure_general(&d, &grid, &opts, &b1, &t1, None).unwrap();
        for (a, b) in p0.iter().zip(p1.iter()) {
            assert_relative_eq!(*b - *a, shift, epsilon = 1e-11);
        }
        let d0 = pressure_interface_derivative(&p0, &grid);
        let d1 = pressure_interface_derivative(&p1, &grid);
        for (a, b) in d0.iter().zip(d1.iter()) {
            assert_relative_eq!(*a, *b, epsilon = 1e-10);
        }
    }
}
