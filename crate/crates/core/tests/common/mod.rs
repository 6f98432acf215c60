//! Shared helpers for the integration suites: manufactured solutions with
//! hand-derived continuous residuals (the independent oracles for the
//! transformed solvers), and a lock so timed criteria run serially.

use std::f64::consts::PI;
use std::sync::{Mutex, MutexGuard, OnceLock};

use ndarray::{Array1, Array2};

use evapfront::fields::{solve_pressure_general, step_humidity_general, SolverOptions};
use evapfront::geometry::{build_diffeomorphism, DiffeoOptions, Grid, InterfaceState};

static LOCK: OnceLock<Mutex<()>> = OnceLock::new();

/// Serialize timed/heavy tests so wall-clock measurements stay meaningful
/// under the parallel test runner.
pub fn serial() -> MutexGuard<'static, ()> {
    LOCK.get_or_init(|| Mutex::new(()))
        .lock()
        .unwrap_or_else(|e| e.into_inner())
}

/// Manufactured solution for the transformed elliptic problem on the lower
/// phase with the tent map sigma = eta(x) z / H, eta = amp cos(2 pi x):
///
///   P*(x, z) = z/H + eps sin(pi z / H) cos(2 pi x)
///
/// satisfies the physical boundary rows exactly; `source` is the continuous
/// residual A[P*] - (P*_z / (1 + sigma_z)) A[sigma], differentiated by hand.
pub struct EllipticMms {
    pub h: f64,
    pub amp: f64,
    pub eps: f64,
}

impl EllipticMms {
    pub fn exact(&self, x: f64, z: f64) -> f64 {
        z / self.h + self.eps * (PI * z / self.h).sin() * (2.0 * PI * x).cos()
    }

    pub fn source(&self, x: f64, z: f64) -> f64 {
        let h = self.h;
        let eta = self.amp * (2.0 * PI * x).cos();
        let eta_p = -2.0 * PI * self.amp * (2.0 * PI * x).sin();
        let eta_pp = -(2.0 * PI) * (2.0 * PI) * self.amp * (2.0 * PI * x).cos();

        // sigma = eta z / H inside the lower phase.
        let sx = eta_p * z / h;
        let sz = eta / h;
        let sxx = eta_pp * z / h;
        let sxz = eta_p / h;
        // sigma_zz = 0 (z-linear profile).

        let jac = 1.0 + sz;
        let ax = 2.0 * sx / jac;
        let az = -(1.0 + sx * sx) / (jac * jac);

        let cx = (2.0 * PI * x).cos();
        let sxp = (2.0 * PI * x).sin();
        let szn = (PI * z / h).sin();
        let czn = (PI * z / h).cos();

        let pz = 1.0 / h + self.eps * PI / h * czn * cx;
        let pxx = -(2.0 * PI) * (2.0 * PI) * self.eps * szn * cx;
        let pzz = -self.eps * (PI / h) * (PI / h) * szn * cx;
        let pxz = -self.eps * (PI / h) * 2.0 * PI * czn * sxp;

        let a_p = pxx - ax * pxz - az * pzz;
        let a_sigma = sxx - ax * sxz; // - az * sigma_zz with sigma_zz = 0
        a_p - pz / jac * a_sigma
    }

    /// Solve on an n x n x n grid and return the max-norm error at the nodes.
    pub fn run(&self, n: usize) -> f64 {
        let grid = Grid::build(n, n, n, self.h).unwrap();
        let eta = InterfaceState::new(
            Array1::from_iter(
                (0..n).map(|i| self.amp * (2.0 * PI * i as f64 / n as f64).cos()),
            ),
            0.0,
        );
        let diffeo = build_diffeomorphism(&eta, &grid, &DiffeoOptions::default()).unwrap();
        let nx = n;
        let nz = grid.n_lower + 1;
        let mut src = Array2::zeros((nx, nz));
        for i in 0..nx {
            let x = i as f64 / nx as f64;
            for j in 1..nz - 1 {
                src[[i, j]] = self.source(x, grid.zs_lower[j]);
            }
        }
        let bottom = Array1::zeros(nx);
        let top = Array1::from_elem(nx, 1.0);
        let opts = SolverOptions {
            tol_ell: 1e-12,
            ..Default::default()
        };
        let (sol, _res, _it) =
            solve_pressure_general(&diffeo, &grid, &opts, &bottom, &top, Some(&src)).unwrap();
        let mut err = 0.0f64;
        for i in 0..nx {
            let x = i as f64 / nx as f64;
            for j in 0..nz {
                err = err.max((sol[[i, j]] - self.exact(x, grid.zs_lower[j])).abs());
            }
        }
        err
    }
}

/// Manufactured solution for the transformed parabolic problem on the upper
/// phase with the static tent map sigma = eta(x) (1 - z)/(1 - H):
///
///   nu*(x, z, t) = (1-z)/(1-H) + eps sin(m pi zt) cos(2 pi x) e^{-t},
///   zt = (z - H)/(1 - H),
///
/// with the hand-differentiated source
/// S = nu*_t - A[nu*] + (nu*_z / (1 + sigma_z)) A[sigma].
pub struct ParabolicMms {
    pub h: f64,
    pub amp: f64,
    pub eps: f64,
    pub m: f64,
}

impl ParabolicMms {
    pub fn exact(&self, x: f64, z: f64, t: f64) -> f64 {
        let ell = 1.0 - self.h;
        let zt = (z - self.h) / ell;
        (1.0 - z) / ell + self.eps * (self.m * PI * zt).sin() * (2.0 * PI * x).cos() * (-t).exp()
    }

    pub fn source(&self, x: f64, z: f64, t: f64) -> f64 {
        let ell = 1.0 - self.h;
        let zt = (z - self.h) / ell;
        let eta = self.amp * (2.0 * PI * x).cos();
        let eta_p = -2.0 * PI * self.amp * (2.0 * PI * x).sin();
        let eta_pp = -(2.0 * PI) * (2.0 * PI) * self.amp * (2.0 * PI * x).cos();

        // sigma = eta (1 - z) / (1 - H) inside the upper phase.
        let sx = eta_p * (1.0 - z) / ell;
        let sz = -eta / ell;
        let sxx = eta_pp * (1.0 - z) / ell;
        let sxz = -eta_p / ell;

        let jac = 1.0 + sz;
        let ax = 2.0 * sx / jac;
        let az = -(1.0 + sx * sx) / (jac * jac);

        let cx = (2.0 * PI * x).cos();
        let sxp = (2.0 * PI * x).sin();
        let szn = (self.m * PI * zt).sin();
        let czn = (self.m * PI * zt).cos();
        let et = (-t).exp();

        let nu_t = -self.eps * szn * cx * et;
        let nu_z = -1.0 / ell + self.eps * self.m * PI / ell * czn * cx * et;
        let nu_xx = -(2.0 * PI) * (2.0 * PI) * self.eps * szn * cx * et;
        let nu_zz = -self.eps * (self.m * PI / ell) * (self.m * PI / ell) * szn * cx * et;
        let nu_xz = -self.eps * (self.m * PI / ell) * 2.0 * PI * czn * sxp * et;

        let a_nu = nu_xx - ax * nu_xz - az * nu_zz;
        let a_sigma = sxx - ax * sxz;
        nu_t - a_nu + nu_z / jac * a_sigma
    }

    /// March to t = t_end with dt proportional to hz^2 on an n^3 grid and
    /// return the final max-norm error.
    pub fn run(&self, n: usize, t_end: f64) -> f64 {
        let grid = Grid::build(n, n, n, self.h).unwrap();
        let eta = InterfaceState::new(
            Array1::from_iter(
                (0..n).map(|i| self.amp * (2.0 * PI * i as f64 / n as f64).cos()),
            ),
            0.0,
        );
        let diffeo = build_diffeomorphism(&eta, &grid, &DiffeoOptions::default()).unwrap();
        let nx = n;
        let nz = grid.n_upper + 1;

        let mut nu = Array2::zeros((nx, nz));
        for i in 0..nx {
            let x = i as f64 / nx as f64;
            for j in 0..nz {
                nu[[i, j]] = self.exact(x, grid.zs_upper[j], 0.0);
            }
        }

        let hz = grid.hz_upper();
        let steps = (t_end / (2.0 * hz * hz)).ceil() as usize;
        let dt = t_end / steps as f64;

        let gamma_row = Array1::from_elem(nx, 1.0);
        let top_row = Array1::zeros(nx);
        let zs: Vec<f64> = grid.zs_upper.to_vec();
        let source = |t: f64| -> Array2<f64> {
            let mut s = Array2::zeros((nx, nz));
            for i in 0..nx {
                let x = i as f64 / nx as f64;
                for j in 1..nz - 1 {
                    s[[i, j]] = self.source(x, zs[j], t);
                }
            }
            s
        };

        let mut t = 0.0;
        for _ in 0..steps {
            nu = step_humidity_general(
                &nu,
                &diffeo,
                &diffeo,
                &grid,
                dt,
                t,
                &gamma_row,
                &top_row,
                Some(&source),
            )
            .unwrap();
            t += dt;
        }

        let mut err = 0.0f64;
        for i in 0..nx {
            let x = i as f64 / nx as f64;
            for j in 0..nz {
                err = err.max((nu[[i, j]] - self.exact(x, grid.zs_upper[j], t)).abs());
            }
        }
        err
    }
}

/// Least-squares slope of ln(err) against ln(1/n): the observed convergence
/// order.
pub fn observed_order(ns: &[usize], errs: &[f64]) -> f64 {
    let xs: Vec<f64> = ns.iter().map(|&n| (1.0 / n as f64).ln()).collect();
    let ys: Vec<f64> = errs.iter().map(|&e| e.ln()).collect();
    let n = xs.len() as f64;
    let sx: f64 = xs.iter().sum();
    let sy: f64 = ys.iter().sum();
    let sxx: f64 = xs.iter().map(|v| v * v).sum();
    let sxy: f64 = xs.iter().zip(&ys).map(|(x, y)| x * y).sum();
    (n * sxy - sx * sy) / (n * sxx - sx * sx)
}
