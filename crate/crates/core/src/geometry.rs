//! Periodic layer grids, interface representation, and the fixed-domain
//! coordinate map.
//!
//! The moving interface is a graph z = H + eta(x) over the unit torus inside
//! the layer (0,1). The simulator pulls the problem back to the fixed layer
//! with the vertical shift map (x, z) -> (x, z + sigma(x, z)), where sigma is
//! the tent profile sigma = eta(x) * s(z), s(0) = 0, s(H) = 1, s(1) = 0.
//!
//! The analytic construction behind this map (a biharmonic extension of the
//! interface data, blended by a cutoff into thin outer slabs of small slope)
//! exists to serve low-regularity data; on a grid the tent profile gives the
//! same trace and Jacobian-positivity guarantees, is exactly invertible, and
//! vanishes identically for a flat interface, so we use it throughout. The
//! tent map is continuous but not differentiable across the interface row, so
//! one-sided vertical derivatives are kept separately for the two phases.

use ndarray::{Array1, Array2};
use serde::{Deserialize, Serialize};

use crate::error::{Result, SimError};
use crate::numerics::Transverse;

/// How transverse (periodic) derivatives of interface and map fields are
/// computed. The bulk solvers always use the Fourier structure; this choice
/// only affects first derivatives of eta and sigma.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum TransverseDeriv {
    #[default]
    Spectral,
    Centered,
}

/// Fixed layer grid: `n_transverse` points on the unit torus (spacing exactly
/// 1/n_transverse, no duplicated endpoint), `n_lower` cells on (0, H) and
/// `n_upper` cells on (H, 1). The nodes z = 0, z = H and z = 1 are grid
/// points; the interface row at z = H is shared by both vertical subgrids.
#[derive(Debug, Clone, PartialEq)]
pub struct Grid {
    pub n_transverse: usize,
    pub n_lower: usize,
    pub n_upper: usize,
    pub h: f64,
    /// z-nodes of the lower phase, zs_lower[0] = 0, zs_lower[n_lower] = H.
    pub zs_lower: Array1<f64>,
    /// z-nodes of the upper phase, zs_upper[0] = H, zs_upper[n_upper] = 1.
    pub zs_upper: Array1<f64>,
}

impl Grid {
    /// Smallest vertical extent usable with the second-order stencils: the
    /// one-sided three-point formulas and the interior centered formulas need
    /// at least 4 cells per phase.
    pub const MIN_CELLS: usize = 4;

    pub fn build(n_transverse: usize, n_lower: usize, n_upper: usize, h: f64) -> Result<Grid> {
        if !(h > 0.0 && h < 1.0) {
            return Err(SimError::InvalidParameter(format!(
                "reference level H must lie in (0,1), got {h}"
            )));
        }
        if n_transverse < Self::MIN_CELLS || n_lower < Self::MIN_CELLS || n_upper < Self::MIN_CELLS
        {
            return Err(SimError::InvalidParameter(format!(
                "grid counts ({n_transverse}, {n_lower}, {n_upper}) too small for second-order stencils (min {})",
                Self::MIN_CELLS
            )));
        }
        let hz_l = h / n_lower as f64;
        let hz_u = (1.0 - h) / n_upper as f64;
        let mut zs_lower = Array1::zeros(n_lower + 1);
        for j in 0..=n_lower {
            zs_lower[j] = j as f64 * hz_l;
        }
        zs_lower[0] = 0.0;
        zs_lower[n_lower] = h;
        let mut zs_upper = Array1::zeros(n_upper + 1);
        for j in 0..=n_upper {
            zs_upper[j] = h + j as f64 * hz_u;
        }
        zs_upper[0] = h;
        zs_upper[n_upper] = 1.0;
        Ok(Grid {
            n_transverse,
            n_lower,
            n_upper,
            h,
            zs_lower,
            zs_upper,
        })
    }

    pub fn dx(&self) -> f64 {
        1.0 / self.n_transverse as f64
    }

    pub fn hz_lower(&self) -> f64 {
        self.h / self.n_lower as f64
    }

    pub fn hz_upper(&self) -> f64 {
        (1.0 - self.h) / self.n_upper as f64
    }

    pub fn xs(&self) -> Array1<f64> {
        Array1::from_iter((0..self.n_transverse).map(|i| i as f64 * self.dx()))
    }
}

/// The interface graph offset eta over the transverse grid at a given time.
#[derive(Debug, Clone, PartialEq)]
pub struct InterfaceState {
    pub eta: Array1<f64>,
    pub time: f64,
}

impl InterfaceState {
    pub fn new(eta: Array1<f64>, time: f64) -> Self {
        InterfaceState { eta, time }
    }

    pub fn flat(n: usize) -> Self {
        InterfaceState {
            eta: Array1::zeros(n),
            time: 0.0,
        }
    }

    /// The interface must stay a margin `gamma_m` away from both walls:
    /// eta in (gamma_m - H, 1 - gamma_m - H) at every transverse node.
    pub fn check_margin(&self, h: f64, gamma_m: f64) -> Result<()> {
        let lo = gamma_m - h;
        let hi = 1.0 - gamma_m - h;
        for (i, &e) in self.eta.iter().enumerate() {
            if !(e > lo && e < hi) {
                return Err(SimError::MarginViolation(format!(
                    "eta[{i}] = {e:.6e} outside ({lo:.6e}, {hi:.6e}) at t = {:.6e}",
                    self.time
                )));
            }
        }
        Ok(())
    }
}

/// Options controlling the diffeomorphism construction.
#[derive(Debug, Clone, Copy)]
pub struct DiffeoOptions {
    /// Floor for the discrete Jacobian 1 + d(sigma)/dz.
    pub delta_j: f64,
    pub deriv: TransverseDeriv,
}

impl Default for DiffeoOptions {
    fn default() -> Self {
        DiffeoOptions {
            delta_j: 0.1,
            deriv: TransverseDeriv::Spectral,
        }
    }
}

/// The vertical shift field sigma and its derived quantities on both phases.
/// Arrays are laid out (n_transverse, n_z) with x along axis 0.
#[derive(Debug, Clone)]
pub struct DiffeoMap {
    pub sigma_lower: Array2<f64>,
    pub sigma_upper: Array2<f64>,
    /// d(sigma)/dz on each phase (centered interior, one-sided second order at
    /// the phase edges). At z = H these are the one-sided values.
    pub dsz_lower: Array2<f64>,
    pub dsz_upper: Array2<f64>,
    /// Transverse gradient of sigma on each phase.
    pub dsx_lower: Array2<f64>,
    pub dsx_upper: Array2<f64>,
    /// Metric coefficient vector a(grad sigma) = (a_x, a_z) per phase.
    pub a_x_lower: Array2<f64>,
    pub a_z_lower: Array2<f64>,
    pub a_x_upper: Array2<f64>,
    pub a_z_upper: Array2<f64>,
    /// One-sided vertical derivatives of sigma on the interface row.
    pub d_sigma_dz_minus: Array1<f64>,
    pub d_sigma_dz_plus: Array1<f64>,
    /// Transverse gradient of eta on the interface row.
    pub grad_eta: Array1<f64>,
    /// Minimum of the discrete Jacobian 1 + d(sigma)/dz over both phases.
    pub jacobian_min: f64,
}

impl DiffeoMap {
    /// Interface trace of sigma (lower copy; equals the upper copy and eta).
    pub fn interface_sigma(&self) -> Array1<f64> {
        let nzl = self.sigma_lower.dim().1;
        self.sigma_lower.column(nzl - 1).to_owned()
    }

    /// Max transverse variation over all rows; used to pick the banded
    /// per-mode fast path when the map is transverse-constant.
    pub fn transverse_variation(&self) -> f64 {
        let mut var = 0.0f64;
        for s in [&self.sigma_lower, &self.sigma_upper] {
            for col in s.columns() {
                let mut lo = f64::INFINITY;
                let mut hi = f64::NEG_INFINITY;
                for &v in col.iter() {
                    lo = lo.min(v);
                    hi = hi.max(v);
                }
                var = var.max(hi - lo);
            }
        }
        var
    }

    /// Convex blend of two maps over the same grid: since all stored shift
    /// fields are linear in the interface offset, the blend is exactly the
    /// tent map of the blended interface; the metric coefficients are
    /// recomputed from the blended gradients.
    pub fn blend(a: &DiffeoMap, b: &DiffeoMap, w: f64) -> Result<DiffeoMap> {
        let mix2 = |x: &Array2<f64>, y: &Array2<f64>| x * (1.0 - w) + y * w;
        let mix1 = |x: &Array1<f64>, y: &Array1<f64>| x * (1.0 - w) + y * w;
        let sigma_lower = mix2(&a.sigma_lower, &b.sigma_lower);
        let sigma_upper = mix2(&a.sigma_upper, &b.sigma_upper);
        let dsz_lower = mix2(&a.dsz_lower, &b.dsz_lower);
        let dsz_upper = mix2(&a.dsz_upper, &b.dsz_upper);
        let dsx_lower = mix2(&a.dsx_lower, &b.dsx_lower);
        let dsx_upper = mix2(&a.dsx_upper, &b.dsx_upper);
        // 1 + dsz of the blend is the convex blend of the endpoints' values,
        // so the Jacobian floor of the endpoints carries over.
        let guard = (a.jacobian_min.min(b.jacobian_min)).max(1e-9);
        let (a_x_lower, a_z_lower) = metric_coefficients(&dsx_lower, &dsz_lower, guard * 0.5)?;
        let (a_x_upper, a_z_upper) = metric_coefficients(&dsx_upper, &dsz_upper, guard * 0.5)?;
        let mut jac_min = f64::INFINITY;
        for d in dsz_lower.iter().chain(dsz_upper.iter()) {
            jac_min = jac_min.min(1.0 + d);
        }
        Ok(DiffeoMap {
            d_sigma_dz_minus: mix1(&a.d_sigma_dz_minus, &b.d_sigma_dz_minus),
            d_sigma_dz_plus: mix1(&a.d_sigma_dz_plus, &b.d_sigma_dz_plus),
            grad_eta: mix1(&a.grad_eta, &b.grad_eta),
            sigma_lower,
            sigma_upper,
            dsz_lower,
            dsz_upper,
            dsx_lower,
            dsx_upper,
            a_x_lower,
            a_z_lower,
            a_x_upper,
            a_z_upper,
            jacobian_min: jac_min,
        })
    }

    /// The forward map z -> z + sigma must be strictly increasing along every
    /// vertical grid line; equivalent to positivity of the discrete Jacobian.
    pub fn is_monotone(&self, grid: &Grid) -> bool {
        let nx = grid.n_transverse;
        for i in 0..nx {
            let mut prev = grid.zs_lower[0] + self.sigma_lower[[i, 0]];
            for j in 1..=grid.n_lower {
                let cur = grid.zs_lower[j] + self.sigma_lower[[i, j]];
                if cur <= prev {
                    return false;
                }
                prev = cur;
            }
            for j in 1..=grid.n_upper {
                let cur = grid.zs_upper[j] + self.sigma_upper[[i, j]];
                if cur <= prev {
                    return false;
                }
                prev = cur;
            }
        }
        true
    }
}

/// Metric coefficient vector a(grad phi) with components
///   a_x = 2 * phi_x / (1 + phi_z),
///   a_z = -(1 + phi_x^2) / (1 + phi_z)^2,
/// evaluated pointwise. `guard` protects the division: |1 + phi_z| must stay
/// above it (this is the same floor as the Jacobian positivity condition).
pub fn metric_coefficients(
    grad_x: &Array2<f64>,
    grad_z: &Array2<f64>,
    guard: f64,
) -> Result<(Array2<f64>, Array2<f64>)> {
    let dim = grad_x.dim();
    if grad_z.dim() != dim {
        return Err(SimError::InvalidParameter(
            "metric_coefficients: gradient arrays must have equal shape".into(),
        ));
    }
    let mut ax = Array2::zeros(dim);
    let mut az = Array2::zeros(dim);
    for ((i, j), &gx) in grad_x.indexed_iter() {
        let gz = grad_z[[i, j]];
        let jac = 1.0 + gz;
        if jac.abs() < guard {
            return Err(SimError::DegenerateMap(format!(
                "1 + sigma_z = {jac:.3e} below guard {guard:.3e} at node ({i}, {j})"
            )));
        }
        ax[[i, j]] = 2.0 * gx / jac;
        az[[i, j]] = -(1.0 + gx * gx) / (jac * jac);
    }
    Ok((ax, az))
}

fn tent_profile(grid: &Grid) -> (Array1<f64>, Array1<f64>) {
    let mut s_lower = Array1::zeros(grid.n_lower + 1);
    for j in 0..=grid.n_lower {
        s_lower[j] = grid.zs_lower[j] / grid.h;
    }
    s_lower[grid.n_lower] = 1.0;
    let mut s_upper = Array1::zeros(grid.n_upper + 1);
    for j in 0..=grid.n_upper {
        s_upper[j] = (1.0 - grid.zs_upper[j]) / (1.0 - grid.h);
    }
    s_upper[0] = 1.0;
    s_upper[grid.n_upper] = 0.0;
    (s_lower, s_upper)
}

fn deriv_x(tr: &Transverse, data: &Array1<f64>, mode: TransverseDeriv) -> Array1<f64> {
    let v: Vec<f64> = data.to_vec();
    let d = match mode {
        TransverseDeriv::Spectral => tr.deriv_spectral(&v),
        TransverseDeriv::Centered => tr.deriv_centered(&v),
    };
    Array1::from_vec(d)
}

/// Build the tent-profile shift map for the current interface. The interface
/// row of sigma equals eta exactly (s(H) = 1 by construction) and sigma
/// vanishes on both walls.
pub fn build_diffeomorphism(
    eta: &InterfaceState,
    grid: &Grid,
    opts: &DiffeoOptions,
) -> Result<DiffeoMap> {
    let nx = grid.n_transverse;
    if eta.eta.len() != nx {
        return Err(SimError::InvalidParameter(format!(
            "eta has {} nodes, grid expects {nx}",
            eta.eta.len()
        )));
    }
    let (s_lower, s_upper) = tent_profile(grid);
    let nzl = grid.n_lower + 1;
    let nzu = grid.n_upper + 1;

    let mut sigma_lower = Array2::zeros((nx, nzl));
    let mut sigma_upper = Array2::zeros((nx, nzu));
    for i in 0..nx {
        let e = eta.eta[i];
        for j in 0..nzl {
            sigma_lower[[i, j]] = e * s_lower[j];
        }
        for j in 0..nzu {
            sigma_upper[[i, j]] = e * s_upper[j];
        }
    }

    let dsz_lower = crate::numerics::deriv_z_field(&sigma_lower, grid.hz_lower());
    let dsz_upper = crate::numerics::deriv_z_field(&sigma_upper, grid.hz_upper());

    // Jacobian positivity on both phases.
    let mut jac_min = f64::INFINITY;
    for d in dsz_lower.iter().chain(dsz_upper.iter()) {
        jac_min = jac_min.min(1.0 + d);
    }
    if jac_min < opts.delta_j {
        return Err(SimError::DegenerateMap(format!(
            "min(1 + sigma_z) = {jac_min:.6e} below delta_J = {:.3e}; eta too large for H = {}",
            opts.delta_j, grid.h
        )));
    }

    let tr = Transverse::new(nx);
    let grad_eta = deriv_x(&tr, &eta.eta, opts.deriv);
    // sigma = eta(x) * s(z), so the transverse gradient is grad_eta * s(z).
    let mut dsx_lower = Array2::zeros((nx, nzl));
    let mut dsx_upper = Array2::zeros((nx, nzu));
    for i in 0..nx {
        for j in 0..nzl {
            dsx_lower[[i, j]] = grad_eta[i] * s_lower[j];
        }
        for j in 0..nzu {
            dsx_upper[[i, j]] = grad_eta[i] * s_upper[j];
        }
    }

    let (a_x_lower, a_z_lower) = metric_coefficients(&dsx_lower, &dsz_lower, opts.delta_j)?;
    let (a_x_upper, a_z_upper) = metric_coefficients(&dsx_upper, &dsz_upper, opts.delta_j)?;

    let d_sigma_dz_minus = dsz_lower.column(nzl - 1).to_owned();
    let d_sigma_dz_plus = dsz_upper.column(0).to_owned();

    Ok(DiffeoMap {
        sigma_lower,
        sigma_upper,
        dsz_lower,
        dsz_upper,
        dsx_lower,
        dsx_upper,
        a_x_lower,
        a_z_lower,
        a_x_upper,
        a_z_upper,
        d_sigma_dz_minus,
        d_sigma_dz_plus,
        grad_eta,
        jacobian_min: jac_min,
    })
}
