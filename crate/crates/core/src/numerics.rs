//! Shared numerical kernels: FFT-based transverse derivatives, tridiagonal and
//! banded solves, and a matrix-free BiCGSTAB.
//!
//! All routines are deterministic: fixed iteration order, no parallelism, no
//! allocation-order dependence.

use ndarray::{Array1, Array2};
use num_complex::Complex64;
use rustfft::{Fft, FftPlanner};
use std::sync::Arc;

use crate::error::{Result, SimError};

/// FFT workspace for a periodic transverse grid of `nx` points on the unit
/// torus (spacing exactly `1/nx`, no duplicated endpoint).
pub struct Transverse {
    pub nx: usize,
    fwd: Arc<dyn Fft<f64>>,
    inv: Arc<dyn Fft<f64>>,
    /// Signed integer frequencies f(m): m for m <= nx/2, m - nx otherwise.
    freqs: Vec<f64>,
}

impl Transverse {
    pub fn new(nx: usize) -> Self {
        let mut planner = FftPlanner::new();
        let fwd = planner.plan_fft_forward(nx);
        let inv = planner.plan_fft_inverse(nx);
        let freqs = (0..nx)
            .map(|m| {
                if m <= nx / 2 {
                    m as f64
                } else {
                    m as f64 - nx as f64
                }
            })
            .collect();
        Transverse { nx, fwd, inv, freqs }
    }

    /// Angular wavenumber of spectral mode `m`: 2*pi*f(m).
    pub fn wavenumber(&self, m: usize) -> f64 {
        2.0 * std::f64::consts::PI * self.freqs[m]
    }

    pub fn forward(&self, data: &mut [Complex64]) {
        self.fwd.process(data);
    }

    /// Unnormalized inverse; caller divides by nx (see `ifft_normalized`).
    pub fn inverse(&self, data: &mut [Complex64]) {
        self.inv.process(data);
    }

    pub fn fft_real(&self, data: &[f64]) -> Vec<Complex64> {
        let mut buf: Vec<Complex64> = data.iter().map(|&v| Complex64::new(v, 0.0)).collect();
        self.forward(&mut buf);
        buf
    }

    pub fn ifft_normalized(&self, data: &mut Vec<Complex64>) {
        self.inverse(data);
        let scale = 1.0 / self.nx as f64;
        for v in data.iter_mut() {
            *v *= scale;
        }
    }

    /// Spectral first derivative of a real periodic sample vector.
    /// The Nyquist mode (even nx) is projected out, as usual for odd operators.
    pub fn deriv_spectral(&self, data: &[f64]) -> Vec<f64> {
        let mut buf = self.fft_real(data);
        for (m, v) in buf.iter_mut().enumerate() {
            if self.nx % 2 == 0 && m == self.nx / 2 {
                *v = Complex64::new(0.0, 0.0);
            } else {
                *v *= Complex64::new(0.0, self.wavenumber(m));
            }
        }
        self.ifft_normalized(&mut buf);
        buf.iter().map(|v| v.re).collect()
    }

    /// Centered second-order first derivative on the periodic grid.
    pub fn deriv_centered(&self, data: &[f64]) -> Vec<f64> {
        let n = self.nx;
        let h = 1.0 / n as f64;
        (0..n)
            .map(|i| (data[(i + 1) % n] - data[(i + n - 1) % n]) / (2.0 * h))
            .collect()
    }

    /// Spectral second derivative (Nyquist kept: the operator is even).
    pub fn second_deriv_spectral(&self, data: &[f64]) -> Vec<f64> {
        let mut buf = self.fft_real(data);
        for (m, v) in buf.iter_mut().enumerate() {
            let k = self.wavenumber(m);
            *v *= Complex64::new(-k * k, 0.0);
        }
        self.ifft_normalized(&mut buf);
        buf.iter().map(|v| v.re).collect()
    }
}

/// Apply the spectral x-derivative to every z-row of a (nx, nz) field.
pub fn deriv_x_field(tr: &Transverse, field: &Array2<f64>) -> Array2<f64> {
    let (nx, nz) = field.dim();
    let mut out = Array2::zeros((nx, nz));
    let mut col = vec![0.0; nx];
    for j in 0..nz {
        for i in 0..nx {
            col[i] = field[[i, j]];
        }
        let d = tr.deriv_spectral(&col);
        for i in 0..nx {
            out[[i, j]] = d[i];
        }
    }
    out
}

/// Spectral transverse Laplacian of every z-row of a (nx, nz) field.
pub fn second_deriv_x_field(tr: &Transverse, field: &Array2<f64>) -> Array2<f64> {
    let (nx, nz) = field.dim();
    let mut out = Array2::zeros((nx, nz));
    let mut col = vec![0.0; nx];
    for j in 0..nz {
        for i in 0..nx {
            col[i] = field[[i, j]];
        }
        let d = tr.second_deriv_spectral(&col);
        for i in 0..nx {
            out[[i, j]] = d[i];
        }
    }
    out
}

/// Thomas algorithm for a complex tridiagonal system. `sub[0]` and
/// `sup[n-1]` are ignored. No pivoting: intended for diagonally dominant
/// systems from implicit diffusion and second-order vertical stencils.
pub fn solve_tridiag(
    sub: &[Complex64],
    diag: &[Complex64],
    sup: &[Complex64],
    rhs: &[Complex64],
) -> Result<Vec<Complex64>> {
    let n = diag.len();
    let mut c = vec![Complex64::new(0.0, 0.0); n];
    let mut d = vec![Complex64::new(0.0, 0.0); n];
    let mut x = vec![Complex64::new(0.0, 0.0); n];
    if diag[0].norm() == 0.0 {
        return Err(SimError::SolverBreakdown("tridiagonal zero pivot".into()));
    }
    c[0] = sup[0] / diag[0];
    d[0] = rhs[0] / diag[0];
    for i in 1..n {
        let denom = diag[i] - sub[i] * c[i - 1];
        if denom.norm() == 0.0 {
            return Err(SimError::SolverBreakdown(format!(
                "tridiagonal zero pivot at row {i}"
            )));
        }
        if i + 1 < n {
            c[i] = sup[i] / denom;
        }
        d[i] = (rhs[i] - sub[i] * d[i - 1]) / denom;
    }
    x[n - 1] = d[n - 1];
    for i in (0..n - 1).rev() {
        x[i] = d[i] - c[i] * x[i + 1];
    }
    Ok(x)
}

/// Banded complex LU solve with one subdiagonal and two superdiagonals,
/// no pivoting. Row i couples columns i-1 .. i+2.
pub struct Banded12 {
    n: usize,
    /// LU factors stored in-place: lower multiplier l[i] (for row i against
    /// row i-1), and the three upper bands u0 (diag), u1, u2.
    l: Vec<Complex64>,
    u0: Vec<Complex64>,
    u1: Vec<Complex64>,
    u2: Vec<Complex64>,
}

impl Banded12 {
    /// Factor the matrix given by bands: `sub[i]` = A[i][i-1], `diag[i]`,
    /// `sup1[i]` = A[i][i+1], `sup2[i]` = A[i][i+2].
    pub fn factor(
        sub: &[Complex64],
        diag: &[Complex64],
        sup1: &[Complex64],
        sup2: &[Complex64],
    ) -> Result<Self> {
        let n = diag.len();
        let mut l = vec![Complex64::new(0.0, 0.0); n];
        let mut u0 = diag.to_vec();
        let mut u1 = sup1.to_vec();
        let u2 = sup2.to_vec();
        for i in 1..n {
            if u0[i - 1].norm() == 0.0 {
                return Err(SimError::SolverBreakdown(format!(
                    "banded zero pivot at row {}",
                    i - 1
                )));
            }
            let m = sub[i] / u0[i - 1];
            l[i] = m;
            u0[i] -= m * u1[i - 1];
            u1[i] -= m * u2[i - 1];
        }
        if u0[n - 1].norm() == 0.0 {
            return Err(SimError::SolverBreakdown("banded zero pivot at last row".into()));
        }
        Ok(Banded12 { n, l, u0, u1, u2 })
    }

    pub fn solve(&self, rhs: &[Complex64]) -> Vec<Complex64> {
        let n = self.n;
        let mut y = rhs.to_vec();
        for i in 1..n {
            let m = self.l[i];
            y[i] = y[i] - m * y[i - 1];
        }
        let mut x = vec![Complex64::new(0.0, 0.0); n];
        for i in (0..n).rev() {
            let mut acc = y[i];
            if i + 1 < n {
                acc -= self.u1[i] * x[i + 1];
            }
            if i + 2 < n {
                acc -= self.u2[i] * x[i + 2];
            }
            x[i] = acc / self.u0[i];
        }
        x
    }
}

/// Matrix-free preconditioned BiCGSTAB over real vectors.
///
/// `apply` computes A*x, `precond` approximates A^{-1}. Returns the solution
/// and the final residual norm. The stopping test is
/// ||r||_2 <= tol * ||b||_2 + tol_abs.
pub fn bicgstab<A, P>(
    apply: A,
    precond: P,
    b: &[f64],
    x0: &[f64],
    tol: f64,
    tol_abs: f64,
    max_iter: usize,
) -> Result<(Vec<f64>, f64, usize)>
where
    A: Fn(&[f64]) -> Vec<f64>,
    P: Fn(&[f64]) -> Vec<f64>,
{
    let n = b.len();
    let nrm = |v: &[f64]| v.iter().map(|a| a * a).sum::<f64>().sqrt();
    let dot = |u: &[f64], v: &[f64]| u.iter().zip(v).map(|(a, b)| a * b).sum::<f64>();

    let bnorm = nrm(b);
    let target = tol * bnorm + tol_abs;

    let mut x = x0.to_vec();
    let ax = apply(&x);
    let mut r: Vec<f64> = b.iter().zip(&ax).map(|(bi, ai)| bi - ai).collect();
    let mut rnorm = nrm(&r);
    if rnorm <= target {
        return Ok((x, rnorm, 0));
    }
    let r0 = r.clone();
    let mut rho = 1.0;
    let mut alpha = 1.0;
    let mut omega = 1.0;
    let mut v = vec![0.0; n];
    let mut p = vec![0.0; n];

    for it in 1..=max_iter {
        let rho_new = dot(&r0, &r);
        if rho_new.abs() < 1e-300 {
            return Err(SimError::SolverBreakdown(format!(
                "bicgstab rho breakdown at iteration {it}, residual {rnorm:.3e}"
            )));
        }
        let beta = (rho_new / rho) * (alpha / omega);
        rho = rho_new;
        for i in 0..n {
            p[i] = r[i] + beta * (p[i] - omega * v[i]);
        }
        let phat = precond(&p);
        v = apply(&phat);
        let denom = dot(&r0, &v);
        if denom.abs() < 1e-300 {
            return Err(SimError::SolverBreakdown(format!(
                "bicgstab alpha breakdown at iteration {it}, residual {rnorm:.3e}"
            )));
        }
        alpha = rho / denom;
        let s: Vec<f64> = r.iter().zip(&v).map(|(ri, vi)| ri - alpha * vi).collect();
        let snorm = nrm(&s);
        if snorm <= target {
            for i in 0..n {
                x[i] += alpha * phat[i];
            }
            return Ok((x, snorm, it));
        }
        let shat = precond(&s);
        let t = apply(&shat);
        let tt = dot(&t, &t);
        if tt.abs() < 1e-300 {
            return Err(SimError::SolverBreakdown(format!(
                "bicgstab omega breakdown at iteration {it}, residual {snorm:.3e}"
            )));
        }
        omega = dot(&t, &s) / tt;
        for i in 0..n {
            x[i] += alpha * phat[i] + omega * shat[i];
            r[i] = s[i] - omega * t[i];
        }
        rnorm = nrm(&r);
        if rnorm <= target {
            return Ok((x, rnorm, it));
        }
    }
    Err(SimError::SolverBreakdown(format!(
        "bicgstab did not reach tolerance in {max_iter} iterations, residual {rnorm:.3e}"
    )))
}

/// One-sided second-order derivative at the first sample of a column
/// (points u0, u1, u2 with spacing h, derivative at u0 pointing toward u2).
pub fn one_sided_start(u0: f64, u1: f64, u2: f64, h: f64) -> f64 {
    (-3.0 * u0 + 4.0 * u1 - u2) / (2.0 * h)
}

/// One-sided second-order derivative at the last sample of a column.
pub fn one_sided_end(um2: f64, um1: f64, um0: f64, h: f64) -> f64 {
    (3.0 * um0 - 4.0 * um1 + um2) / (2.0 * h)
}

/// z-derivative of a (nx, nz) field sampled on a uniform column of spacing h:
/// centered in the interior, one-sided second order at both ends.
pub fn deriv_z_field(field: &Array2<f64>, h: f64) -> Array2<f64> {
    let (nx, nz) = field.dim();
    assert!(nz >= 3);
    let mut out = Array2::zeros((nx, nz));
    for i in 0..nx {
        out[[i, 0]] = one_sided_start(field[[i, 0]], field[[i, 1]], field[[i, 2]], h);
        for j in 1..nz - 1 {
            out[[i, j]] = (field[[i, j + 1]] - field[[i, j - 1]]) / (2.0 * h);
        }
        out[[i, nz - 1]] = one_sided_end(
            field[[i, nz - 3]],
            field[[i, nz - 2]],
            field[[i, nz - 1]],
            h,
        );
    }
    out
}

/// Second z-derivative (interior only; end rows are zero-filled since the
/// solvers never use them there).
pub fn second_deriv_z_field(field: &Array2<f64>, h: f64) -> Array2<f64> {
    let (nx, nz) = field.dim();
    let mut out = Array2::zeros((nx, nz));
    let h2 = h * h;
    for i in 0..nx {
        for j in 1..nz - 1 {
            out[[i, j]] = (field[[i, j + 1]] - 2.0 * field[[i, j]] + field[[i, j - 1]]) / h2;
        }
    }
    out
}

/// Max-norm of an array.
pub fn max_abs(a: &Array2<f64>) -> f64 {
    a.iter().fold(0.0f64, |m, &v| m.max(v.abs()))
}

pub fn max_abs1(a: &Array1<f64>) -> f64 {
    a.iter().fold(0.0f64, |m, &v| m.max(v.abs()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn spectral_derivative_of_cosine() {
        let tr = Transverse::new(32);
        let xs: Vec<f64> = (0..32).map(|i| i as f64 / 32.0).collect();
        let data: Vec<f64> = xs.iter().map(|&x| (2.0 * std::f64::consts::PI * x).cos()).collect();
        let d = tr.deriv_spectral(&data);
        for (i, &x) in xs.iter().enumerate() {
            let exact = -2.0 * std::f64::consts::PI * (2.0 * std::f64::consts::PI * x).sin();
            assert_relative_eq!(d[i], exact, epsilon = 1e-10);
        }
    }

    #[test]
    fn tridiag_solves_poisson() {
        // -u'' = 1 on (0,1), u(0)=u(1)=0, exact u = x(1-x)/2 at nodes.
        let n = 17;
        let h = 1.0 / (n - 1) as f64;
        let m = n - 2;
        let sub = vec![Complex64::new(-1.0 / (h * h), 0.0); m];
        let diag = vec![Complex64::new(2.0 / (h * h), 0.0); m];
        let sup = vec![Complex64::new(-1.0 / (h * h), 0.0); m];
        let rhs = vec![Complex64::new(1.0, 0.0); m];
        let x = solve_tridiag(&sub, &diag, &sup, &rhs).unwrap();
        for (i, v) in x.iter().enumerate() {
            let xi = (i + 1) as f64 * h;
            assert_relative_eq!(v.re, xi * (1.0 - xi) / 2.0, epsilon = 1e-12);
        }
    }

    #[test]
    fn banded_matches_tridiag_when_top_band_zero() {
        let n = 12;
        let sub: Vec<Complex64> = (0..n).map(|i| Complex64::new(-1.0 - 0.01 * i as f64, 0.0)).collect();
        let diag: Vec<Complex64> = (0..n).map(|i| Complex64::new(4.0 + 0.1 * i as f64, 0.2)).collect();
        let sup: Vec<Complex64> = (0..n).map(|i| Complex64::new(-1.5 + 0.02 * i as f64, 0.0)).collect();
        let sup2 = vec![Complex64::new(0.0, 0.0); n];
        let rhs: Vec<Complex64> = (0..n).map(|i| Complex64::new(i as f64, 1.0)).collect();
        let f = Banded12::factor(&sub, &diag, &sup, &sup2).unwrap();
        let x1 = f.solve(&rhs);
        let x2 = solve_tridiag(&sub, &diag, &sup, &rhs).unwrap();
        for i in 0..n {
            assert!((x1[i] - x2[i]).norm() < 1e-12);
        }
    }

    #[test]
    fn bicgstab_solves_small_spd_system() {
        // A = tridiag(-1, 3, -1) acting on vectors of length 20.
        let n = 20;
        let apply = |x: &[f64]| -> Vec<f64> {
            (0..n)
                .map(|i| {
                    let mut v = 3.0 * x[i];
                    if i > 0 {
                        v -= x[i - 1];
                    }
                    if i + 1 < n {
                        v -= x[i + 1];
                    }
                    v
                })
                .collect()
        };
        let b = vec![1.0; n];
        let (x, res, _) = bicgstab(apply, |r: &[f64]| r.to_vec(), &b, &vec![0.0; n], 1e-12, 0.0, 200).unwrap();
        let ax = apply(&x);
        for i in 0..n {
            assert_relative_eq!(ax[i], b[i], epsilon = 1e-9);
        }
        assert!(res < 1e-9);
    }
}
