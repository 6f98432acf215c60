//! Frozen boundary coefficients of the linearized interface evolution.
//!
//! Linearizing the dynamic boundary condition about a background state
//! (fields U-, U+ solving the bulk problems over the shift map sigma) gives
//! a boundary operator of the form
//!
//! ```text
//! d(phi)/dt - am * phi_z^- - ap * phi_z^+ + zeta * grad'(phi)
//!           - atm * u_z^- - atp * u_z^+ = g0 + (quadratic remainders)
//! ```
//!
//! with coefficients
//!
//! ```text
//! am  =  alpha * U-_z * (1 + |grad sigma|^2) / (1 + sigma_z^-)^2
//! ap  = -beta  * U+_z * (1 + |grad sigma|^2) / (1 + sigma_z^+)^2
//! atm = -alpha * (1 + |grad sigma|^2) / (1 + sigma_z^-)
//! atp =  beta  * (1 + |grad sigma|^2) / (1 + sigma_z^+)
//! zeta = 2 * grad sigma * (alpha U-_z / (1 + sigma_z^-) - beta U+_z / (1 + sigma_z^+))
//! g0  = 1/mu - sigma_t + (1 + |grad sigma|^2)
//!                        * (-alpha U-_z / (1 + sigma_z^-) + beta U+_z / (1 + sigma_z^+))
//! ```
//!
//! where alpha, beta here already carry the 1/mu convention (the boundary law
//! divided by mu) and the vertical derivatives are one-sided on the interface
//! row. When sigma_z is continuous across the row the two one-sided factors
//! coincide and atm, atp share the common factor
//! (1 + |grad sigma|^2)/(1 + sigma_z); the tent map makes them differ for a
//! deformed interface, so each coefficient uses its own side.
//!
//! The gap ap - am must stay above a positive floor omega1 for the frozen
//! problem to be parabolic; its minimum over the interface is reported.

use ndarray::Array1;
use serde::Serialize;

use crate::error::{Result, SimError};
use crate::fields::{
    humidity_interface_derivative, pressure_interface_derivative, FieldState, Params,
};
use crate::geometry::{DiffeoMap, Grid};
use crate::symbol::SymbolParams;

/// Pointwise frozen coefficients on the interface grid.
#[derive(Debug, Clone, Serialize)]
pub struct BoundaryCoeffs {
    pub alpha_minus: Vec<f64>,
    pub alpha_plus: Vec<f64>,
    pub alpha_tilde_minus: Vec<f64>,
    pub alpha_tilde_plus: Vec<f64>,
    pub zeta: Vec<f64>,
    pub g0: Vec<f64>,
    /// min over the interface of alpha_plus - alpha_minus.
    pub omega1: f64,
}

/// Freezing strategy when constants are needed: the transverse mean is the
/// global surrogate, a pointwise freeze picks one node.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Freeze {
    Mean,
    At(usize),
}

impl BoundaryCoeffs {
    pub fn frozen(&self, mode: Freeze) -> FrozenBoundaryCoeffs {
        let pick = |v: &[f64]| match mode {
            Freeze::Mean => v.iter().sum::<f64>() / v.len() as f64,
            Freeze::At(i) => v[i],
        };
        FrozenBoundaryCoeffs {
            alpha_minus: pick(&self.alpha_minus),
            alpha_plus: pick(&self.alpha_plus),
            alpha_tilde_minus: pick(&self.alpha_tilde_minus),
            alpha_tilde_plus: pick(&self.alpha_tilde_plus),
            zeta: pick(&self.zeta),
            g0: pick(&self.g0),
        }
    }
}

/// Constant-coefficient freeze of the boundary operator.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct FrozenBoundaryCoeffs {
    pub alpha_minus: f64,
    pub alpha_plus: f64,
    pub alpha_tilde_minus: f64,
    pub alpha_tilde_plus: f64,
    pub zeta: f64,
    pub g0: f64,
}

impl FrozenBoundaryCoeffs {
    /// Map to the half-space boundary-symbol parameters. The model problem
    /// reflects the lower phase onto the upper half-space, which flips the
    /// sign of the coefficient multiplying the elliptic normal derivative:
    /// alpha_s = -am, beta_s = ap, c = zeta.
    pub fn to_symbol_params(self) -> SymbolParams {
        SymbolParams::new(
            -self.alpha_minus,
            self.alpha_plus,
            vec![self.zeta],
        )
    }
}

/// Compute the frozen coefficients from a background state over the current
/// map. `deta_dt` is the time derivative of the interface trace of sigma
/// (zero for a static background).
pub fn frozen_coefficients(
    fields: &FieldState,
    diffeo: &DiffeoMap,
    grid: &Grid,
    params: &Params,
    deta_dt: Option<&Array1<f64>>,
) -> Result<BoundaryCoeffs> {
    params.validate_relaxed()?;
    let nx = grid.n_transverse;
    if let Some(d) = deta_dt {
        if d.len() != nx {
            return Err(SimError::InvalidParameter(
                "deta_dt length does not match the transverse grid".into(),
            ));
        }
    }
    let am_u = pressure_interface_derivative(&fields.pressure, grid);
    let ap_u = humidity_interface_derivative(&fields.humidity, grid);
    let a = params.alpha / params.mu;
    let b = params.beta / params.mu;

    let mut alpha_minus = Vec::with_capacity(nx);
    let mut alpha_plus = Vec::with_capacity(nx);
    let mut alpha_tilde_minus = Vec::with_capacity(nx);
    let mut alpha_tilde_plus = Vec::with_capacity(nx);
    let mut zeta = Vec::with_capacity(nx);
    let mut g0 = Vec::with_capacity(nx);
    let mut omega1 = f64::INFINITY;
    for i in 0..nx {
        let jm = 1.0 + diffeo.d_sigma_dz_minus[i];
        let jp = 1.0 + diffeo.d_sigma_dz_plus[i];
        if jm.abs() < 1e-12 || jp.abs() < 1e-12 {
            return Err(SimError::DegenerateMap(format!(
                "one-sided Jacobian vanished on the interface row at node {i}"
            )));
        }
        let gs = diffeo.grad_eta[i];
        let slope2 = 1.0 + gs * gs;
        let um = am_u[i];
        let up = ap_u[i];
        let am = a * um * slope2 / (jm * jm);
        let ap = -b * up * slope2 / (jp * jp);
        alpha_minus.push(am);
        alpha_plus.push(ap);
        alpha_tilde_minus.push(-a * slope2 / jm);
        alpha_tilde_plus.push(b * slope2 / jp);
        zeta.push(2.0 * gs * (a * um / jm - b * up / jp));
        let st = deta_dt.map_or(0.0, |d| d[i]);
        g0.push(1.0 / params.mu - st + slope2 * (-a * um / jm + b * up / jp));
        omega1 = omega1.min(ap - am);
    }
    Ok(BoundaryCoeffs {
        alpha_minus,
        alpha_plus,
        alpha_tilde_minus,
        alpha_tilde_plus,
        zeta,
        g0,
        omega1,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{build_diffeomorphism, DiffeoOptions, InterfaceState};
    use crate::interface::check_wellposedness;
    use approx::assert_relative_eq;
    use ndarray::Array1;

    fn flat_background(
        h: f64,
        alpha: f64,
        beta: f64,
        mu: f64,
    ) -> (Grid, crate::geometry::DiffeoMap, FieldState, Params) {
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
    fn flat_coefficients_match_hand_values() {
        let (grid, d, state, params) = flat_background(0.5, 0.1, 0.4, 1.0);
        let c = frozen_coefficients(&state, &d, &grid, &params, None).unwrap();
        for i in 0..8 {
            assert_relative_eq!(c.alpha_minus[i], 0.2, epsilon = 1e-10);
            assert_relative_eq!(c.alpha_plus[i], 0.8, epsilon = 1e-10);
            assert_relative_eq!(c.alpha_tilde_minus[i], -0.1, epsilon = 1e-12);
            assert_relative_eq!(c.alpha_tilde_plus[i], 0.4, epsilon = 1e-12);
            assert_eq!(c.zeta[i], 0.0);
        }
        assert_relative_eq!(c.omega1, 0.6, epsilon = 1e-10);
    }

    #[test]
    fn zeta_vanishes_for_transverse_constant_map() {
        let grid = Grid::build(8, 16, 16, 0.5).unwrap();
        let eta = InterfaceState::new(Array1::from_elem(8, 0.05), 0.0);
        let d = build_diffeomorphism(&eta, &grid, &DiffeoOptions::default()).unwrap();
        let state = FieldState::flat_steady(&grid);
        let params = Params::new(0.1, 0.4, 1.0, 0.5, 1e-3).unwrap();
        let c = frozen_coefficients(&state, &d, &grid, &params, None).unwrap();
        for v in c.zeta.iter() {
            assert_eq!(*v, 0.0);
        }
    }

    #[test]
    fn equilibrium_g0_vanishes() {
        for mu in [1.0, 2.0] {
            let (grid, d, state, params) = flat_background(0.5, 0.1, 0.4, mu);
            let c = frozen_coefficients(&state, &d, &grid, &params, None).unwrap();
            for v in c.g0.iter() {
                assert!(v.abs() < 1e-12, "g0 = {v} for mu = {mu}");
            }
        }
    }

    #[test]
    fn shared_factor_proportionality_where_sigma_z_is_continuous() {
        // With sigma_z continuous across the row (flat map) the tilde
        // coefficients share the factor (1+|grad sigma|^2)/(1+sigma_z).
        let (grid, d, state, params) = flat_background(0.5, 0.1, 0.4, 1.0);
        let c = frozen_coefficients(&state, &d, &grid, &params, None).unwrap();
        for i in 0..8 {
            assert_relative_eq!(
                c.alpha_tilde_plus[i],
                -(params.beta / params.alpha) * c.alpha_tilde_minus[i],
                epsilon = 1e-12
            );
        }
    }

    #[test]
    fn omega1_sign_matches_monitor_on_flat_backgrounds() {
        for (alpha, beta) in [(0.1, 0.4), (0.4, 0.1), (0.2, 0.21)] {
            let (grid, d, state, params) = flat_background(0.5, alpha, beta, 1.0);
            let c = frozen_coefficients(&state, &d, &grid, &params, None).unwrap();
            let r = check_wellposedness(&state, &d, &grid, &params).unwrap();
            // Both reduce to beta/(1-H) - alpha/H on flat states.
            let closed = beta / 0.5 - alpha / 0.5;
            assert_relative_eq!(c.omega1, closed, epsilon = 1e-10);
            assert_eq!(c.omega1 > params.omega0, r.satisfied);
        }
    }

    #[test]
    fn joint_scaling_of_alpha_beta() {
        let (grid, d, state, params) = flat_background(0.5, 0.1, 0.4, 1.0);
        let c1 = frozen_coefficients(&state, &d, &grid, &params, None).unwrap();
        let s = 3.5;
        let scaled = Params {
            alpha: s * params.alpha,
            beta: s * params.beta,
            ..params
        };
        let c2 = frozen_coefficients(&state, &d, &grid, &scaled, None).unwrap();
        for i in 0..8 {
            assert_relative_eq!(c2.alpha_minus[i], s * c1.alpha_minus[i], epsilon = 1e-12);
            assert_relative_eq!(c2.alpha_plus[i], s * c1.alpha_plus[i], epsilon = 1e-12);
            assert_relative_eq!(
                c2.alpha_tilde_minus[i],
                s * c1.alpha_tilde_minus[i],
                epsilon = 1e-12
            );
            assert_relative_eq!(
                c2.alpha_tilde_plus[i],
                s * c1.alpha_tilde_plus[i],
                epsilon = 1e-12
            );
            assert_relative_eq!(c2.zeta[i], s * c1.zeta[i], epsilon = 1e-12);
        }
        assert_eq!(c1.omega1.signum(), c2.omega1.signum());
    }

    #[test]
    fn mean_freeze_and_symbol_mapping() {
        let (grid, d, state, params) = flat_background(0.5, 0.1, 0.4, 1.0);
        let c = frozen_coefficients(&state, &d, &grid, &params, None).unwrap();
        let f = c.frozen(Freeze::Mean);
        let sp = f.to_symbol_params();
        assert_relative_eq!(sp.alpha_s(), -0.2, epsilon = 1e-10);
        assert_relative_eq!(sp.beta_s(), 0.8, epsilon = 1e-10);
        // The parabolicity constraint alpha_s + beta_s > 0 is the frozen gap.
        assert_relative_eq!(sp.constraint_sum(), 0.6, epsilon = 1e-10);
    }
}
