//! The inhomogeneous boundary symbol and its executable analysis.
//!
//! The Fourier-Laplace symbol of the linearized dynamic boundary condition on
//! the half-space is
//!
//! ```text
//! P(lambda, z) = lambda + alpha*|z|_- + beta*sqrt(lambda + |z|_-^2) - c.z,
//! |z|_- = sqrt(-sum z_k^2),
//! ```
//!
//! with the principal square root sqrt(w) = sqrt(|w|) e^{i arg(w)/2},
//! arg(w) in (-pi, pi]. Its roots lambda(k) at z = i*k are the modal growth
//! rates of the linearized front. The symbol is not quasihomogeneous; its
//! gamma-principal parts are
//!
//! ```text
//! (alpha+beta)*|z|_- - c.z              (gamma < 1)
//! lambda + (alpha+beta)*|z|_- - c.z     (gamma = 1)
//! lambda                                (gamma > 1)
//! ```
//!
//! and the associated Newton polygon is the triangle (0,0), (1,0), (0,1).
//! Parabolicity of this family means all principal parts stay nonzero on the
//! widened product sector S_{pi/2+eta} x Sigma_delta^{n-1}; the scan below
//! samples that region, checks sectoriality of the gamma<1 part (the
//! quantitative content of the nonvanishing argument), and verifies the
//! closed-form lower bounds
//!
//! ```text
//! Re(|z|_-)                      >= sqrt(cos 2*delta) * cos(delta)
//! Re((alpha+beta)|z|_- - c.z)    >= sqrt(cos 2*delta) * cos(delta) * (alpha+beta)
//!                                   - ||c||_2 * sin(delta)
//! ```
//!
//! on every sample (under the normalization sum |z_k|^2 = 1, which the
//! homogeneity of the principal parts permits).

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use serde::Serialize;

use crate::error::{Result, SimError};

/// Constant coefficients of the boundary symbol. `constraint_sum` caches
/// alpha_s + beta_s; parabolicity claims require it positive.
#[derive(Debug, Clone, PartialEq)]
pub struct SymbolParams {
    alpha_s: f64,
    beta_s: f64,
    c: Vec<f64>,
    constraint_sum: f64,
}

impl SymbolParams {
    pub fn new(alpha_s: f64, beta_s: f64, c: Vec<f64>) -> SymbolParams {
        SymbolParams {
            alpha_s,
            beta_s,
            constraint_sum: alpha_s + beta_s,
            c,
        }
    }

    pub fn alpha_s(&self) -> f64 {
        self.alpha_s
    }

    pub fn beta_s(&self) -> f64 {
        self.beta_s
    }

    pub fn c(&self) -> &[f64] {
        &self.c
    }

    pub fn constraint_sum(&self) -> f64 {
        self.constraint_sum
    }

    pub fn c_norm(&self) -> f64 {
        self.c.iter().map(|v| v * v).sum::<f64>().sqrt()
    }
}

/// Principal square root with arg(w) in (-pi, pi]: values on the negative
/// real axis take the upper side of the cut.
pub fn sqrt_principal(w: Complex64) -> Complex64 {
    if w.im == 0.0 && w.re < 0.0 {
        Complex64::new(0.0, (-w.re).sqrt())
    } else {
        w.sqrt()
    }
}

fn on_cut(w: Complex64) -> bool {
    w.im == 0.0 && w.re < 0.0
}

/// |z|_-^2 = -sum z_k^2 (the argument of the square root, kept unsquared to
/// avoid losing precision).
fn norm_minus_sq(z: &[Complex64]) -> Complex64 {
    let mut s = Complex64::new(0.0, 0.0);
    for &zk in z {
        s += zk * zk;
    }
    -s
}

/// |z|_- = sqrt(-sum z_k^2). An argument landing on the branch cut (negative
/// real axis) is reported as an explicit error: the symbol is not holomorphic
/// there and a silent one-sided value would poison downstream root finding.
pub fn norm_minus(z: &[Complex64]) -> Result<Complex64> {
    let w = norm_minus_sq(z);
    if on_cut(w) {
        return Err(SimError::BranchCut(format!(
            "-sum z_k^2 = {w} lies on the negative real axis"
        )));
    }
    Ok(sqrt_principal(w))
}

fn c_dot_z(c: &[f64], z: &[Complex64]) -> Complex64 {
    c.iter()
        .zip(z)
        .map(|(&ck, &zk)| ck * zk)
        .sum::<Complex64>()
}

/// Evaluate P(lambda, z).
pub fn eval_symbol(p: &SymbolParams, lambda: Complex64, z: &[Complex64]) -> Result<Complex64> {
    if z.len() != p.c.len() {
        return Err(SimError::InvalidParameter(format!(
            "z has dimension {}, symbol expects {}",
            z.len(),
            p.c.len()
        )));
    }
    let w = norm_minus_sq(z);
    if on_cut(w) {
        return Err(SimError::BranchCut(format!(
            "|z|_- argument {w} lies on the branch cut"
        )));
    }
    let arg2 = lambda + w;
    if on_cut(arg2) {
        return Err(SimError::BranchCut(format!(
            "lambda + |z|_-^2 = {arg2} lies on the branch cut"
        )));
    }
    Ok(lambda + p.alpha_s * sqrt_principal(w) + p.beta_s * sqrt_principal(arg2) - c_dot_z(&p.c, z))
}

/// gamma-principal part of the symbol. `gamma` may be infinite.
pub fn principal_part(
    p: &SymbolParams,
    gamma: f64,
    lambda: Complex64,
    z: &[Complex64],
) -> Result<Complex64> {
    if !(gamma > 0.0) {
        return Err(SimError::InvalidParameter(format!(
            "principal part weight must be positive, got {gamma}"
        )));
    }
    if gamma > 1.0 {
        return Ok(lambda);
    }
    let nm = norm_minus(z)?;
    let base = p.constraint_sum * nm - c_dot_z(&p.c, z);
    if gamma == 1.0 {
        Ok(lambda + base)
    } else {
        Ok(base)
    }
}

/// Newton polygon vertices in the (space-order, time-order) plane, counter-
/// clockwise from the origin, plus a degeneracy flag (fewer than three
/// vertices: the symbol lost its spatial order entirely).
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct NewtonPolygon {
    pub vertices: Vec<(f64, f64)>,
    pub degenerate: bool,
}

/// Convex hull of the exponent points augmented with their coordinate
/// projections and the origin (the standard completion for mixed-order
/// symbols). Monotone chain; vertices returned counterclockwise starting
/// from the lexicographically smallest point.
pub fn monomial_hull(points: &[(f64, f64)]) -> Vec<(f64, f64)> {
    let mut pts: Vec<(f64, f64)> = Vec::new();
    pts.push((0.0, 0.0));
    for &(x, y) in points {
        pts.push((x, y));
        pts.push((x, 0.0));
        pts.push((0.0, y));
    }
    pts.sort_by(|a, b| a.partial_cmp(b).unwrap());
    pts.dedup_by(|a, b| (a.0 - b.0).abs() < 1e-14 && (a.1 - b.1).abs() < 1e-14);
    if pts.len() <= 2 {
        return pts;
    }
    let cross = |o: (f64, f64), a: (f64, f64), b: (f64, f64)| {
        (a.0 - o.0) * (b.1 - o.1) - (a.1 - o.1) * (b.0 - o.0)
    };
    let mut lower: Vec<(f64, f64)> = Vec::new();
    for &p in &pts {
        while lower.len() >= 2 && cross(lower[lower.len() - 2], lower[lower.len() - 1], p) <= 1e-14
        {
            lower.pop();
        }
        lower.push(p);
    }
    let mut upper: Vec<(f64, f64)> = Vec::new();
    for &p in pts.iter().rev() {
        while upper.len() >= 2 && cross(upper[upper.len() - 2], upper[upper.len() - 1], p) <= 1e-14
        {
            upper.pop();
        }
        upper.push(p);
    }
    lower.pop();
    upper.pop();
    lower.extend(upper);
    lower
}

/// Newton polygon of this symbol family. Structurally the triangle
/// (0,0), (1,0), (0,1) whenever any spatial-order term survives; the generic
/// hull routine handles the degenerate pure-lambda case.
pub fn newton_polygon(p: &SymbolParams) -> NewtonPolygon {
    let mut monomials: Vec<(f64, f64)> = vec![(0.0, 1.0)];
    if p.alpha_s != 0.0 {
        monomials.push((1.0, 0.0));
    }
    if p.beta_s != 0.0 {
        // sqrt(lambda + |z|^2): order 1 in z when z dominates, order 1/2 in
        // lambda when lambda dominates.
        monomials.push((1.0, 0.0));
        monomials.push((0.0, 0.5));
    }
    if p.c.iter().any(|&v| v != 0.0) {
        monomials.push((1.0, 0.0));
    }
    let vertices = monomial_hull(&monomials);
    let degenerate = !monomials.iter().any(|&(x, _)| x > 0.0);
    NewtonPolygon {
        vertices,
        degenerate,
    }
}

/// Sampling sectors for the parabolicity scan: S_kappa for lambda (half-angle
/// kappa about the positive real axis) and Sigma_delta for each z_k (double
/// cone of half-angle delta about the imaginary axis).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SectorSpec {
    pub kappa: f64,
    pub delta_s: f64,
    pub n_samples_radial: usize,
    pub n_samples_angular: usize,
}

impl SectorSpec {
    pub fn new(
        kappa: f64,
        delta_s: f64,
        n_samples_radial: usize,
        n_samples_angular: usize,
    ) -> Result<SectorSpec> {
        if !(kappa > 0.0 && kappa < std::f64::consts::PI) {
            return Err(SimError::InvalidParameter(format!(
                "kappa must lie in (0, pi), got {kappa}"
            )));
        }
        if !(delta_s > 0.0 && delta_s < std::f64::consts::FRAC_PI_2) {
            return Err(SimError::InvalidParameter(format!(
                "delta must lie in (0, pi/2), got {delta_s}"
            )));
        }
        if n_samples_radial < 2 || n_samples_angular < 2 {
            return Err(SimError::InvalidParameter(
                "sector sampling needs at least 2 samples per direction".into(),
            ));
        }
        Ok(SectorSpec {
            kappa,
            delta_s,
            n_samples_radial,
            n_samples_angular,
        })
    }

    /// Sector spec for a scan over S_{pi/2 + eta} x Sigma_delta.
    pub fn widened(delta_s: f64, eta_sector: f64, nr: usize, na: usize) -> Result<SectorSpec> {
        SectorSpec::new(std::f64::consts::FRAC_PI_2 + eta_sector, delta_s, nr, na)
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct ScanViolation {
    pub gamma: f64,
    pub lambda: Option<(f64, f64)>,
    pub z: Vec<(f64, f64)>,
    pub kind: String,
    pub value: f64,
}

/// Outcome of a parabolicity scan.
#[derive(Debug, Clone, Serialize)]
pub struct ScanReport {
    pub pass: bool,
    pub constraint_sum: f64,
    pub delta: f64,
    pub eta_sector: f64,
    pub n_z_samples: usize,
    pub n_lambda_samples: usize,
    /// min |pi_{1/2} P| over z samples.
    pub min_abs_pi_half: f64,
    /// min |pi_1 P| over (lambda, z) samples.
    pub min_abs_pi_one: f64,
    /// min |pi_2 P| = min |lambda| over lambda samples.
    pub min_abs_pi_two: f64,
    /// min Re pi_{gamma<1} P over z samples (sectoriality of the sub-order part).
    pub min_re_pi_sub: f64,
    /// max |arg pi_{gamma<1} P| over z samples.
    pub max_arg_pi_sub: f64,
    /// Closed-form lower bound sqrt(cos 2 delta) cos(delta) for Re |z|_-.
    pub re_zminus_bound: f64,
    pub re_zminus_min: f64,
    pub re_zminus_violations: usize,
    /// Closed-form bound for Re pi_{gamma<1}: bound * (alpha+beta) - ||c|| sin(delta).
    pub re_pi_bound: f64,
    pub re_pi_violations: usize,
    /// Largest delta for which the closed-form bound stays positive
    /// (bisection to 1e-3); zero when alpha+beta <= 0.
    pub delta_max: f64,
    pub first_violation: Option<ScanViolation>,
}

fn unit_sector_samples(delta: f64, n_angular: usize, dim: usize, n_radial: usize) -> Vec<Vec<Complex64>> {
    // Angular offsets within (-delta, delta), symmetric and including 0.
    let per_branch = (n_angular / 2).max(3) | 1;
    let mut offsets = Vec::with_capacity(per_branch);
    for j in 0..per_branch {
        offsets.push(delta * (-1.0 + 2.0 * j as f64 / (per_branch - 1) as f64));
    }
    let mut angles = Vec::with_capacity(2 * per_branch);
    for &o in &offsets {
        angles.push(std::f64::consts::FRAC_PI_2 + o);
    }
    for &o in &offsets {
        angles.push(-std::f64::consts::FRAC_PI_2 + o);
    }

    match dim {
        1 => angles
            .iter()
            .map(|&th| vec![Complex64::from_polar(1.0, th)])
            .collect(),
        2 => {
            // Split the unit magnitude between the two components.
            let n_t = n_radial.clamp(3, 9);
            let mut out = Vec::new();
            for it in 0..n_t {
                let t = 0.05 + 0.9 * it as f64 / (n_t - 1) as f64;
                let (r1, r2) = (t.sqrt(), (1.0 - t).sqrt());
                for &th1 in &angles {
                    for &th2 in &angles {
                        out.push(vec![
                            Complex64::from_polar(r1, th1),
                            Complex64::from_polar(r2, th2),
                        ]);
                    }
                }
            }
            out
        }
        _ => panic!("scan supports 1 or 2 transverse dimensions"),
    }
}

/// Largest delta in (0, pi/4) keeping
/// sqrt(cos 2 delta) cos(delta) (alpha+beta) - ||c|| sin(delta) positive.
pub fn delta_max_closed_form(constraint_sum: f64, c_norm: f64) -> f64 {
    if constraint_sum <= 0.0 {
        return 0.0;
    }
    let f = |d: f64| (2.0 * d).cos().max(0.0).sqrt() * d.cos() * constraint_sum - c_norm * d.sin();
    let mut lo = 0.0;
    let mut hi = std::f64::consts::FRAC_PI_4;
    if f(hi) > 0.0 {
        return hi;
    }
    while hi - lo > 1e-3 {
        let mid = 0.5 * (lo + hi);
        if f(mid) > 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    lo
}

/// Sample the widened product sector and check that every principal part
/// stays away from zero, that the sub-order part is sectorial (positive real
/// part and argument bounded away from pi/2 by eta), and that the closed-form
/// lower bounds hold on every sample.
pub fn n_parabolicity_scan(
    p: &SymbolParams,
    spec: &SectorSpec,
    eta_sector: f64,
) -> Result<ScanReport> {
    if !(eta_sector > 0.0 && eta_sector < std::f64::consts::FRAC_PI_2) {
        return Err(SimError::InvalidParameter(format!(
            "eta_sector must lie in (0, pi/2), got {eta_sector}"
        )));
    }
    let delta = spec.delta_s;
    let dim = p.c.len();
    let zs = unit_sector_samples(delta, spec.n_samples_angular, dim, spec.n_samples_radial);

    // lambda samples on a log-radial/angular grid of S_kappa.
    let mut lambdas = Vec::with_capacity(spec.n_samples_radial * spec.n_samples_angular);
    for ir in 0..spec.n_samples_radial {
        let r = 10f64.powf(-3.0 + 6.0 * ir as f64 / (spec.n_samples_radial - 1) as f64);
        for ia in 0..spec.n_samples_angular {
            let psi = spec.kappa * (-1.0 + 2.0 * ia as f64 / (spec.n_samples_angular - 1) as f64);
            lambdas.push(Complex64::from_polar(r, psi));
        }
    }

    let bound_unit = (2.0 * delta).cos().max(0.0).sqrt() * delta.cos();
    let bound_pi = bound_unit * p.constraint_sum - p.c_norm() * delta.sin();
    let tol = 1e-12;

    let mut min_abs_pi_half = f64::INFINITY;
    let mut min_re_pi_sub = f64::INFINITY;
    let mut max_arg_pi_sub: f64 = 0.0;
    let mut re_zminus_min = f64::INFINITY;
    let mut re_zminus_violations = 0usize;
    let mut re_pi_violations = 0usize;
    let mut first_violation: Option<ScanViolation> = None;

    let record = |slot: &mut Option<ScanViolation>, v: ScanViolation| {
        if slot.is_none() {
            *slot = Some(v);
        }
    };

    for z in &zs {
        let nm = norm_minus(z)?;
        re_zminus_min = re_zminus_min.min(nm.re);
        if nm.re < bound_unit - tol {
            re_zminus_violations += 1;
            record(
                &mut first_violation,
                ScanViolation {
                    gamma: 0.5,
                    lambda: None,
                    z: z.iter().map(|w| (w.re, w.im)).collect(),
                    kind: "re_zminus_below_closed_form_bound".into(),
                    value: nm.re,
                },
            );
        }
        let pi_sub = principal_part(p, 0.5, Complex64::new(0.0, 0.0), z)?;
        min_abs_pi_half = min_abs_pi_half.min(pi_sub.norm());
        min_re_pi_sub = min_re_pi_sub.min(pi_sub.re);
        max_arg_pi_sub = max_arg_pi_sub.max(pi_sub.arg().abs());
        if pi_sub.re <= 0.0 {
            record(
                &mut first_violation,
                ScanViolation {
                    gamma: 0.5,
                    lambda: None,
                    z: z.iter().map(|w| (w.re, w.im)).collect(),
                    kind: "pi_sub_not_sectorial".into(),
                    value: pi_sub.re,
                },
            );
        }
        if p.constraint_sum > 0.0 && pi_sub.re < bound_pi - tol {
            re_pi_violations += 1;
            record(
                &mut first_violation,
                ScanViolation {
                    gamma: 0.5,
                    lambda: None,
                    z: z.iter().map(|w| (w.re, w.im)).collect(),
                    kind: "re_pi_sub_below_closed_form_bound".into(),
                    value: pi_sub.re,
                },
            );
        }
    }

    let mut min_abs_pi_one = f64::INFINITY;
    let mut min_abs_pi_two = f64::INFINITY;
    for lam in &lambdas {
        min_abs_pi_two = min_abs_pi_two.min(lam.norm());
        for z in &zs {
            let v = principal_part(p, 1.0, *lam, z)?;
            let n = v.norm();
            if n < min_abs_pi_one {
                min_abs_pi_one = n;
            }
            if n == 0.0 {
                record(
                    &mut first_violation,
                    ScanViolation {
                        gamma: 1.0,
                        lambda: Some((lam.re, lam.im)),
                        z: z.iter().map(|w| (w.re, w.im)).collect(),
                        kind: "pi_one_vanishes".into(),
                        value: 0.0,
                    },
                );
            }
        }
    }

    // Pass: the sub-order part is strictly sectorial with argument margin
    // eta (which makes pi_1 = lambda + pi_sub nonzero for every lambda in
    // S_{pi/2+eta}, sampled or not), and no sampled zero appeared.
    let arg_limit = std::f64::consts::FRAC_PI_2 - eta_sector;
    let pass = min_re_pi_sub > 0.0
        && max_arg_pi_sub < arg_limit
        && min_abs_pi_one > 0.0
        && min_abs_pi_two > 0.0
        && re_zminus_violations == 0;

    Ok(ScanReport {
        pass,
        constraint_sum: p.constraint_sum,
        delta,
        eta_sector,
        n_z_samples: zs.len(),
        n_lambda_samples: lambdas.len(),
        min_abs_pi_half,
        min_abs_pi_one,
        min_abs_pi_two,
        min_re_pi_sub,
        max_arg_pi_sub,
        re_zminus_bound: bound_unit,
        re_zminus_min,
        re_zminus_violations,
        re_pi_bound: bound_pi,
        re_pi_violations,
        delta_max: delta_max_closed_form(p.constraint_sum, p.c_norm()),
        first_violation,
    })
}

/// A verified root of the boundary symbol at z = i*k.
#[derive(Debug, Clone)]
pub struct DispersionRoot {
    pub k: Vec<f64>,
    pub lambda: Complex64,
    pub residual: f64,
    pub branch_note: String,
}

pub const TOL_ROOT: f64 = 1e-12;
pub const MAX_ROOT_ITER: usize = 50;

fn k_norm(k: &[f64]) -> f64 {
    k.iter().map(|v| v * v).sum::<f64>().sqrt()
}

fn z_from_k(k: &[f64]) -> Vec<Complex64> {
    k.iter().map(|&v| Complex64::new(0.0, v)).collect()
}

/// Closed-form root guess for c = 0: substituting s = sqrt(lambda + |k|^2)
/// turns P(lambda, ik) = 0 into s^2 + beta s + (alpha |k| - |k|^2) = 0; the
/// branch constraint keeps the solution with the larger real part. For
/// beta = 0 this reduces to the explicit linear root -alpha |k|.
fn quadratic_guess(p: &SymbolParams, knorm: f64) -> Complex64 {
    let disc = Complex64::new(
        p.beta_s * p.beta_s - 4.0 * (p.alpha_s * knorm - knorm * knorm),
        0.0,
    );
    let sq = sqrt_principal(disc);
    let s1 = 0.5 * (-Complex64::new(p.beta_s, 0.0) + sq);
    let s2 = 0.5 * (-Complex64::new(p.beta_s, 0.0) - sq);
    let s = if s1.re >= s2.re { s1 } else { s2 };
    s * s - knorm * knorm
}

fn newton_root<F>(
    f: F,
    mut lambda: Complex64,
    tol: f64,
    max_iter: usize,
) -> Result<(Complex64, f64, String)>
where
    F: Fn(Complex64) -> Result<(Complex64, Complex64)>,
{
    let mut note = String::new();
    let mut reflected = false;
    let (mut val, mut dval) = match f(lambda) {
        Ok(v) => v,
        Err(SimError::BranchCut(_)) => {
            // Restart from the reflected guess once.
            reflected = true;
            note.push_str("restarted from reflected guess; ");
            lambda = lambda.conj() + Complex64::new(0.0, 1e-8);
            f(lambda)?
        }
        Err(e) => return Err(e),
    };
    for _ in 0..max_iter {
        if val.norm() < tol {
            return Ok((lambda, val.norm(), note));
        }
        if dval.norm() < 1e-300 {
            return Err(SimError::NonConvergence(format!(
                "vanishing derivative at lambda = {lambda}, residual {:.3e}",
                val.norm()
            )));
        }
        let mut step = -val / dval;
        // Damping: halve the step while the residual does not decrease or the
        // iterate falls onto the branch cut.
        let mut accepted = false;
        for _ in 0..12 {
            let cand = lambda + step;
            match f(cand) {
                Ok((v, dv)) => {
                    if v.norm() < val.norm() {
                        lambda = cand;
                        val = v;
                        dval = dv;
                        accepted = true;
                        break;
                    }
                    step *= 0.5;
                }
                Err(SimError::BranchCut(_)) => {
                    if !reflected {
                        reflected = true;
                        note.push_str("restarted from reflected guess; ");
                        let refl = lambda.conj() + Complex64::new(0.0, 1e-8);
                        if let Ok((v, dv)) = f(refl) {
                            lambda = refl;
                            val = v;
                            dval = dv;
                            accepted = true;
                            break;
                        }
                    }
                    step *= 0.5;
                }
                Err(e) => return Err(e),
            }
        }
        if !accepted {
            return Err(SimError::NonConvergence(format!(
                "damping stalled at lambda = {lambda}, residual {:.3e}",
                val.norm()
            )));
        }
    }
    Err(SimError::NonConvergence(format!(
        "no root after {max_iter} iterations; last iterate {lambda}, residual {:.3e}",
        val.norm()
    )))
}

/// Root of lambda -> P(lambda, i k) by damped Newton iteration with the
/// analytic derivative 1 + beta / (2 sqrt(lambda + |k|^2)).
pub fn dispersion_root(
    p: &SymbolParams,
    k: &[f64],
    lambda0: Option<Complex64>,
) -> Result<DispersionRoot> {
    let knorm = k_norm(k);
    if !(knorm > 0.0) {
        return Err(SimError::InvalidParameter(
            "dispersion root needs |k| > 0".into(),
        ));
    }
    if k.len() != p.c.len() {
        return Err(SimError::InvalidParameter(format!(
            "k has dimension {}, symbol expects {}",
            k.len(),
            p.c.len()
        )));
    }
    let z = z_from_k(k);
    let ck: f64 = p.c.iter().zip(k).map(|(&c, &kk)| c * kk).sum();

    if p.beta_s == 0.0 {
        let lambda = Complex64::new(-p.alpha_s * knorm, ck);
        let residual = eval_symbol(p, lambda, &z)?.norm();
        return Ok(DispersionRoot {
            k: k.to_vec(),
            lambda,
            residual,
            branch_note: "explicit linear root (beta = 0)".into(),
        });
    }

    let guess = lambda0.unwrap_or_else(|| quadratic_guess(p, knorm) + Complex64::new(0.0, ck));
    let f = |lam: Complex64| -> Result<(Complex64, Complex64)> {
        let val = eval_symbol(p, lam, &z)?;
        let s = sqrt_principal(lam + Complex64::new(knorm * knorm, 0.0));
        let dval = Complex64::new(1.0, 0.0) + p.beta_s / (2.0 * s);
        Ok((val, dval))
    };
    let (lambda, _res, mut note) = newton_root(f, guess, TOL_ROOT, MAX_ROOT_ITER)?;
    // Verify independently of the iteration bookkeeping.
    let residual = eval_symbol(p, lambda, &z)?.norm();
    if residual >= TOL_ROOT {
        return Err(SimError::NonConvergence(format!(
            "root verification failed: |P| = {residual:.3e} at lambda = {lambda}"
        )));
    }
    if note.is_empty() {
        note = "newton from closed-form quadratic guess".into();
    }
    Ok(DispersionRoot {
        k: k.to_vec(),
        lambda,
        residual,
        branch_note: note,
    })
}

/// Complex hyperbolic cotangent, stable for large |Re w| and accurate for
/// small |w| via the Laurent series.
pub fn coth(w: Complex64) -> Complex64 {
    if w.re < 0.0 {
        return -coth(-w);
    }
    if w.norm() < 1e-4 {
        let w2 = w * w;
        return 1.0 / w + w / 3.0 - w * w2 / 45.0;
    }
    let e = (-2.0 * w).exp();
    (1.0 + e) / (1.0 - e)
}

/// Root of the finite-layer dispersion relation
///
/// ```text
/// lambda + alpha |k| coth(|k| H) + beta s coth(s (1-H)) - i c.k = 0,
/// s = sqrt(lambda + |k|^2),
/// ```
///
/// the layer analogue of the half-space symbol: the Dirichlet-to-Neumann
/// factors |k| and s pick up coth corrections from the finite phase
/// thicknesses H and 1-H. As |k| -> infinity both coth factors tend to 1 and
/// the root converges to the half-space root.
pub fn layered_dispersion_root(p: &SymbolParams, k: &[f64], h: f64) -> Result<DispersionRoot> {
    let knorm = k_norm(k);
    if !(knorm > 0.0) {
        return Err(SimError::InvalidParameter(
            "layered dispersion root needs |k| > 0".into(),
        ));
    }
    if !(h > 0.0 && h < 1.0) {
        return Err(SimError::InvalidParameter(format!(
            "layer split H must lie in (0,1), got {h}"
        )));
    }
    let ck: f64 = p.c.iter().zip(k).map(|(&c, &kk)| c * kk).sum();
    let ell = 1.0 - h;
    let elliptic_dtn = knorm * coth(Complex64::new(knorm * h, 0.0)).re;

    if p.beta_s == 0.0 {
        let lambda = Complex64::new(-p.alpha_s * elliptic_dtn, ck);
        let residual =
            (lambda + p.alpha_s * elliptic_dtn - Complex64::new(0.0, ck)).norm();
        return Ok(DispersionRoot {
            k: k.to_vec(),
            lambda,
            residual,
            branch_note: "explicit linear layered root (beta = 0)".into(),
        });
    }

    let f = |lam: Complex64| -> Result<(Complex64, Complex64)> {
        let arg = lam + Complex64::new(knorm * knorm, 0.0);
        if on_cut(arg) {
            return Err(SimError::BranchCut(format!(
                "lambda + |k|^2 = {arg} lies on the branch cut"
            )));
        }
        let s = sqrt_principal(arg);
        let u = s * ell;
        let ct = coth(u);
        let val = lam + p.alpha_s * elliptic_dtn + p.beta_s * s * ct - Complex64::new(0.0, ck);
        let dval = Complex64::new(1.0, 0.0)
            + p.beta_s * (ct + u * (Complex64::new(1.0, 0.0) - ct * ct)) / (2.0 * s);
        Ok((val, dval))
    };

    // Start from the half-space root when available, otherwise from the
    // linear layered root.
    let guess = match dispersion_root(p, k, None) {
        Ok(r) => r.lambda,
        Err(_) => Complex64::new(-p.alpha_s * elliptic_dtn, ck),
    };
    let (lambda, _res, mut note) = newton_root(f, guess, TOL_ROOT, MAX_ROOT_ITER)?;
    let residual = f(lambda)?.0.norm();
    if residual >= TOL_ROOT {
        return Err(SimError::NonConvergence(format!(
            "layered root verification failed: residual {residual:.3e}"
        )));
    }
    if note.is_empty() {
        note = "newton from half-space root".into();
    }
    Ok(DispersionRoot {
        k: k.to_vec(),
        lambda,
        residual,
        branch_note: note,
    })
}

/// Reduction of anisotropic frozen second-order coefficients to the isotropic
/// routines: factor the inverse coefficient matrix as M^T M, compose with the
/// rotation that keeps the boundary plane in place, and read off the
/// transformed boundary parameters. `a0` is the symmetric positive definite
/// matrix of second-order coefficients in n dimensions (n-th coordinate
/// normal to the boundary).
#[derive(Debug, Clone)]
pub struct IsotropicReduction {
    pub alpha: f64,
    pub beta: f64,
    pub c: Vec<f64>,
    /// The full substitution map y = M x (boundary-plane preserving).
    pub map: DMatrix<f64>,
}

impl IsotropicReduction {
    /// Transverse wavevector in the reduced coordinates: the boundary trace
    /// e^{i k.x'} becomes e^{i k~ . y'} with k = (M')^T k~.
    pub fn transform_wavevector(&self, k: &[f64]) -> Result<Vec<f64>> {
        let n = self.map.nrows();
        let mp = self.map.view((0, 0), (n - 1, n - 1)).transpose();
        let kv = DVector::from_column_slice(k);
        match mp.lu().solve(&kv) {
            Some(s) => Ok(s.iter().copied().collect()),
            None => Err(SimError::SolverBreakdown(
                "tangential block of the reduction map is singular".into(),
            )),
        }
    }
}

pub fn isotropic_reduction(
    a0: &DMatrix<f64>,
    alpha: f64,
    beta: f64,
    c: &[f64],
) -> Result<IsotropicReduction> {
    let n = a0.nrows();
    if a0.ncols() != n || n < 2 {
        return Err(SimError::InvalidParameter(
            "coefficient matrix must be square with n >= 2".into(),
        ));
    }
    if c.len() != n - 1 {
        return Err(SimError::InvalidParameter(format!(
            "transport vector has length {}, expected {}",
            c.len(),
            n - 1
        )));
    }
    for i in 0..n {
        for j in 0..n {
            if (a0[(i, j)] - a0[(j, i)]).abs() > 1e-12 * (1.0 + a0[(i, j)].abs()) {
                return Err(SimError::InvalidParameter(
                    "coefficient matrix must be symmetric".into(),
                ));
            }
        }
    }
    let eig = nalgebra::SymmetricEigen::new(a0.clone());
    if eig.eigenvalues.iter().any(|&l| l <= 0.0) {
        return Err(SimError::InvalidParameter(
            "coefficient matrix must be positive definite".into(),
        ));
    }
    // Symmetric square roots of A and A^{-1}.
    let q = &eig.eigenvectors;
    let mut dinv_half = DMatrix::<f64>::zeros(n, n);
    let mut d_half = DMatrix::<f64>::zeros(n, n);
    for i in 0..n {
        dinv_half[(i, i)] = 1.0 / eig.eigenvalues[i].sqrt();
        d_half[(i, i)] = eig.eigenvalues[i].sqrt();
    }
    let s = q * dinv_half * q.transpose();
    let a_half = q * d_half * q.transpose();

    // Rotation (Householder reflection) taking the image of the boundary
    // plane back onto x_n = 0: it maps w = A^{1/2} e_n / |.| to e_n.
    let mut w = a_half.column(n - 1).into_owned();
    w /= w.norm();
    let mut e_n = DVector::<f64>::zeros(n);
    e_n[n - 1] = 1.0;
    let v = &w - &e_n;
    let map = if v.norm() < 1e-14 {
        s.clone()
    } else {
        let hh = DMatrix::<f64>::identity(n, n) - 2.0 / v.norm_squared() * (&v * v.transpose());
        hh * &s
    };
    // The bottom row of the tangential block vanishes by construction; clear
    // the roundoff so downstream block extraction is exact.
    let mut map = map;
    for j in 0..n - 1 {
        debug_assert!(map[(n - 1, j)].abs() < 1e-10);
        map[(n - 1, j)] = 0.0;
    }
    let m_nn = map[(n - 1, n - 1)];
    if m_nn <= 0.0 {
        return Err(SimError::SolverBreakdown(
            "reduction map does not preserve the half-space orientation".into(),
        ));
    }
    // Boundary parameters: normal derivatives pick up M_nn plus tangential
    // leakage through the last column; the transport vector is transformed by
    // the tangential block.
    let mut c_tilde = vec![0.0; n - 1];
    for (j, ct) in c_tilde.iter_mut().enumerate() {
        let mut acc = 0.0;
        for (i, &ci) in c.iter().enumerate() {
            acc += map[(j, i)] * ci;
        }
        acc -= (alpha + beta) * map[(j, n - 1)];
        *ct = acc;
    }
    Ok(IsotropicReduction {
        alpha: m_nn * alpha,
        beta: m_nn * beta,
        c: c_tilde,
        map,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    fn c0() -> Complex64 {
        Complex64::new(0.0, 0.0)
    }

    #[test]
    fn eval_symbol_examples() {
        let p = SymbolParams::new(1.0, 2.0, vec![0.0]);
        let v = eval_symbol(&p, c0(), &[c0()]).unwrap();
        assert_eq!(v, c0());
        let v = eval_symbol(&p, Complex64::new(1.0, 0.0), &[c0()]).unwrap();
        assert_relative_eq!(v.re, 3.0);
        assert_eq!(v.im, 0.0);

        let p = SymbolParams::new(1.0, 0.0, vec![0.0]);
        let v = eval_symbol(&p, c0(), &[Complex64::new(0.0, 2.0)]).unwrap();
        assert_relative_eq!(v.re, 2.0, epsilon = 1e-14);
        assert_eq!(v.im, 0.0);
    }

    #[test]
    fn branch_cut_is_an_error() {
        let p = SymbolParams::new(1.0, 1.0, vec![0.0]);
        // Real nonzero z puts -z^2 on the negative real axis.
        let err = eval_symbol(&p, c0(), &[Complex64::new(1.0, 0.0)]);
        assert!(matches!(err, Err(SimError::BranchCut(_))));
        // lambda + |z|^2 on the cut.
        let err = eval_symbol(&p, Complex64::new(-2.0, 0.0), &[Complex64::new(0.0, 1.0)]);
        assert!(matches!(err, Err(SimError::BranchCut(_))));
    }

    #[test]
    fn imaginary_z_gives_real_norm() {
        let z = [Complex64::new(0.0, 3.0), Complex64::new(0.0, -4.0)];
        let nm = norm_minus(&z).unwrap();
        assert_relative_eq!(nm.re, 5.0, epsilon = 1e-12);
        assert_eq!(nm.im, 0.0);
    }

    #[test]
    fn principal_part_examples() {
        let p = SymbolParams::new(1.0, 2.0, vec![0.0]);
        let lam = Complex64::new(7.0, 3.0);
        let z = [Complex64::new(0.0, 2.0)];
        assert_eq!(principal_part(&p, 2.0, lam, &z).unwrap(), lam);
        assert_eq!(principal_part(&p, f64::INFINITY, lam, &z).unwrap(), lam);

        let v = principal_part(&p, 1.0, Complex64::new(1.0, 0.0), &[c0()]).unwrap();
        assert_relative_eq!(v.re, 1.0);

        let p = SymbolParams::new(1.0, 1.0, vec![0.0]);
        let v = principal_part(&p, 0.5, Complex64::new(5.0, 0.0), &z).unwrap();
        assert_relative_eq!(v.re, 4.0, epsilon = 1e-14);

        // alpha + beta = 1, z = i: sub-order part equals 1.
        let p1 = SymbolParams::new(0.4, 0.6, vec![0.0]);
        let v = principal_part(&p1, 0.5, c0(), &[Complex64::new(0.0, 1.0)]).unwrap();
        assert_relative_eq!(v.re, 1.0, epsilon = 1e-14);
    }

    proptest! {
        #[test]
        fn branch_convention_on_imaginary_axis(xi in -50.0f64..50.0) {
            prop_assume!(xi != 0.0);
            let nm = norm_minus(&[Complex64::new(0.0, xi)]).unwrap();
            prop_assert!((nm.re - xi.abs()).abs() < 1e-12 * xi.abs().max(1.0));
            prop_assert_eq!(nm.im, 0.0);
        }

        #[test]
        fn sub_order_part_is_homogeneous_degree_one(
            s in 0.01f64..100.0,
            th in -0.2f64..0.2,
            alpha in -2.0f64..2.0,
            beta in -2.0f64..2.0,
            c in -2.0f64..2.0,
        ) {
            let p = SymbolParams::new(alpha, beta, vec![c]);
            let z = [Complex64::from_polar(1.0, std::f64::consts::FRAC_PI_2 + th)];
            let zs = [z[0] * s];
            let v1 = principal_part(&p, 0.5, c0(), &z).unwrap();
            let vs = principal_part(&p, 0.5, c0(), &zs).unwrap();
            prop_assert!((vs - s * v1).norm() <= 1e-12 * (1.0 + vs.norm()));
            // Independent of lambda.
            let v2 = principal_part(&p, 0.5, Complex64::new(3.0, -1.0), &z).unwrap();
            prop_assert_eq!(v1, v2);
        }

        #[test]
        fn order_one_part_is_jointly_homogeneous(
            s in 0.01f64..100.0,
            th in -0.2f64..0.2,
            lr in 0.01f64..10.0,
            la in -1.5f64..1.5,
            alpha in -2.0f64..2.0,
            beta in -2.0f64..2.0,
        ) {
            let p = SymbolParams::new(alpha, beta, vec![0.3]);
            let z = [Complex64::from_polar(1.0, std::f64::consts::FRAC_PI_2 + th)];
            let lam = Complex64::from_polar(lr, la);
            let v1 = principal_part(&p, 1.0, lam, &z).unwrap();
            let zs = [z[0] * s];
            let vs = principal_part(&p, 1.0, lam * s, &zs).unwrap();
            prop_assert!((vs - s * v1).norm() <= 1e-12 * (1.0 + vs.norm()));
        }
    }

    #[test]
    fn newton_polygon_standard_and_degenerate() {
        let p = SymbolParams::new(1.0, 2.0, vec![0.5]);
        let np = newton_polygon(&p);
        assert!(!np.degenerate);
        assert_eq!(np.vertices, vec![(0.0, 0.0), (1.0, 0.0), (0.0, 1.0)]);

        let p = SymbolParams::new(0.0, 0.0, vec![0.0]);
        let np = newton_polygon(&p);
        assert!(np.degenerate);
        assert_eq!(np.vertices, vec![(0.0, 0.0), (0.0, 1.0)]);

        // Generic hull on the monomials lambda and |z|.
        let hull = monomial_hull(&[(0.0, 1.0), (1.0, 0.0)]);
        assert_eq!(hull, vec![(0.0, 0.0), (1.0, 0.0), (0.0, 1.0)]);
    }

    #[test]
    fn scan_passes_for_positive_sum() {
        let p = SymbolParams::new(1.0, 1.0, vec![0.0]);
        let spec = SectorSpec::widened(0.1, 0.05, 16, 32).unwrap();
        let r = n_parabolicity_scan(&p, &spec, 0.05).unwrap();
        assert!(r.pass, "report: {r:?}");
        assert_relative_eq!(
            r.re_zminus_bound,
            (0.2f64.cos()).sqrt() * 0.1f64.cos(),
            epsilon = 1e-12
        );
        assert!((r.re_zminus_bound - 0.985).abs() < 1e-3);
        assert_relative_eq!(r.re_pi_bound, 2.0 * r.re_zminus_bound, epsilon = 1e-12);
        assert_eq!(r.re_zminus_violations, 0);
        assert_eq!(r.re_pi_violations, 0);
    }

    #[test]
    fn scan_fails_for_negative_sum() {
        let p = SymbolParams::new(2.0, -3.0, vec![0.0]);
        let spec = SectorSpec::widened(0.1, 0.05, 16, 32).unwrap();
        let r = n_parabolicity_scan(&p, &spec, 0.05).unwrap();
        assert!(!r.pass);
        assert!(r.min_re_pi_sub < 0.0);
        let v = r.first_violation.expect("first violating sample recorded");
        assert_eq!(v.gamma, 0.5);
        assert!(!v.z.is_empty());
    }

    #[test]
    fn scan_two_transverse_dimensions() {
        let p = SymbolParams::new(0.8, 0.7, vec![0.3, -0.4]);
        let spec = SectorSpec::widened(0.1, 0.05, 6, 16).unwrap();
        let r = n_parabolicity_scan(&p, &spec, 0.05).unwrap();
        assert!(r.pass, "report: {r:?}");
        assert_eq!(r.re_zminus_violations, 0);
    }

    #[test]
    fn dispersion_root_examples() {
        // Linear case.
        let p = SymbolParams::new(1.0, 0.0, vec![0.0]);
        let r = dispersion_root(&p, &[1.0], None).unwrap();
        assert_relative_eq!(r.lambda.re, -1.0, epsilon = 1e-12);
        assert!(r.residual < 1e-12);

        // Quadratic case: root -(sqrt(5)-1)/2.
        let p = SymbolParams::new(0.0, 1.0, vec![0.0]);
        let r = dispersion_root(&p, &[1.0], None).unwrap();
        assert_relative_eq!(r.lambda.re, -(5f64.sqrt() - 1.0) / 2.0, epsilon = 1e-10);
        assert!(r.residual < 1e-12);

        // Unstable case alpha + beta < 0: root (5 - sqrt(13))/2.
        let p = SymbolParams::new(-2.0, 1.0, vec![0.0]);
        let r = dispersion_root(&p, &[1.0], None).unwrap();
        assert_relative_eq!(r.lambda.re, (5.0 - 13f64.sqrt()) / 2.0, epsilon = 1e-10);
        assert!(r.lambda.re > 0.0);
    }

    #[test]
    fn dispersion_root_with_transport() {
        let p = SymbolParams::new(1.0, 0.0, vec![0.7]);
        let r = dispersion_root(&p, &[2.0], None).unwrap();
        assert_relative_eq!(r.lambda.re, -2.0, epsilon = 1e-12);
        assert_relative_eq!(r.lambda.im, 1.4, epsilon = 1e-12);
    }

    #[test]
    fn conjugate_symmetry_for_real_coefficients() {
        // Complex-pair regime: alpha > 1 with beta < 0 keeps alpha+beta > 0
        // but pushes the substitution roots complex.
        let p = SymbolParams::new(1.5, -0.8, vec![0.0]);
        let r = dispersion_root(&p, &[1.0], None).unwrap();
        if r.lambda.im.abs() > 1e-10 {
            let conj = eval_symbol(&p, r.lambda.conj(), &[Complex64::new(0.0, 1.0)])
                .unwrap()
                .norm();
            assert!(conj < 1e-10, "conjugate residual {conj}");
        }
    }

    #[test]
    fn sign_dichotomy_small_scan() {
        for i in 0..10 {
            for j in 0..10 {
                let alpha = -0.9 + 0.19 * i as f64;
                let beta = -0.9 + 0.19 * j as f64;
                let sum = alpha + beta;
                if sum.abs() < 1e-9 {
                    continue;
                }
                let p = SymbolParams::new(alpha, beta, vec![0.0]);
                let r = dispersion_root(&p, &[1.0], None).unwrap();
                assert!(
                    (r.lambda.re < 0.0) == (sum > 0.0),
                    "alpha={alpha} beta={beta} lambda={}",
                    r.lambda
                );
                // Real coefficients, c = 0: roots are real or come in
                // conjugate pairs; on this alpha < 1 grid they are real.
                assert!(
                    r.lambda.im.abs() < 1e-12,
                    "alpha={alpha} beta={beta}: expected a real root, got {}",
                    r.lambda
                );
            }
        }
    }

    #[test]
    fn layered_root_examples() {
        // coth(10) is 1 within 5e-9, so the layered root sits on the
        // half-space root.
        let p = SymbolParams::new(1.0, 0.0, vec![0.0]);
        let r = layered_dispersion_root(&p, &[20.0], 0.5).unwrap();
        assert!((r.lambda.re + 20.0).abs() / 20.0 < 0.01);

        // Exact closed form in the linear case.
        let k = 3.0f64;
        let h = 0.4;
        let r = layered_dispersion_root(&p, &[k], h).unwrap();
        let expected = -k * (k * h).cosh() / (k * h).sinh();
        assert_relative_eq!(r.lambda.re, expected, epsilon = 1e-12);

        // Small-k layer limit -alpha/H.
        let r = layered_dispersion_root(&p, &[1e-3], 0.5).unwrap();
        assert!((r.lambda.re + 2.0).abs() < 1e-4);
    }

    #[test]
    fn layered_matches_halfspace_at_large_k() {
        let p = SymbolParams::new(-0.2, 0.8, vec![0.0]);
        let hs = dispersion_root(&p, &[20.0], None).unwrap();
        let lay = layered_dispersion_root(&p, &[20.0], 0.5).unwrap();
        assert!(
            (hs.lambda - lay.lambda).norm() / hs.lambda.norm() < 0.01,
            "half-space {} vs layered {}",
            hs.lambda,
            lay.lambda
        );
    }

    #[test]
    fn reduction_identity_and_diagonal() {
        let a0 = DMatrix::<f64>::identity(2, 2);
        let r = isotropic_reduction(&a0, 0.4, 0.6, &[0.3]).unwrap();
        assert_relative_eq!(r.alpha, 0.4, epsilon = 1e-12);
        assert_relative_eq!(r.beta, 0.6, epsilon = 1e-12);
        assert_relative_eq!(r.c[0], 0.3, epsilon = 1e-12);

        let a0 = DMatrix::<f64>::from_diagonal(&DVector::from_vec(vec![4.0, 9.0]));
        let r = isotropic_reduction(&a0, 1.0, 2.0, &[0.0]).unwrap();
        assert_relative_eq!(r.alpha, 1.0 / 3.0, epsilon = 1e-12);
        assert_relative_eq!(r.beta, 2.0 / 3.0, epsilon = 1e-12);
        // Positive-sum constraint is preserved with a positive factor.
        assert!(r.alpha + r.beta > 0.0);
    }

    #[test]
    fn reduction_matches_direct_anisotropic_root() {
        // Elliptic-only closed form in the symbol's Fourier convention
        // (frequency xi pairs with modes e^{-i xi x}): the decaying mode
        // e^{-i xi x - kappa z} of a11 u_xx + 2 a12 u_xz + a22 u_zz = 0 has
        // kappa = (|xi| sqrt(det A) - i a12 xi) / a22, and the boundary law
        // d(phi)/dt = alpha d(phi-)/dz gives lambda = -alpha kappa.
        let (a11, a12, a22) = (2.0f64, 0.5f64, 1.0f64);
        let alpha = 0.7;
        let k = 1.3f64;
        let det = a11 * a22 - a12 * a12;
        let kappa = Complex64::new(k.abs() * det.sqrt() / a22, -a12 * k / a22);
        let lambda_direct = -alpha * kappa;

        let a0 = DMatrix::<f64>::from_row_slice(2, 2, &[a11, a12, a12, a22]);
        let red = isotropic_reduction(&a0, alpha, 0.0, &[0.0]).unwrap();
        let kt = red.transform_wavevector(&[k]).unwrap();
        let p = SymbolParams::new(red.alpha, red.beta, red.c.clone());
        let root = dispersion_root(&p, &kt, None).unwrap();
        assert!(
            (root.lambda - lambda_direct).norm() < 1e-10,
            "reduced {} vs direct {}",
            root.lambda,
            lambda_direct
        );
    }

    #[test]
    fn delta_max_bisection() {
        // With c = 0 the bound stays positive on the whole interval.
        assert_relative_eq!(
            delta_max_closed_form(1.0, 0.0),
            std::f64::consts::FRAC_PI_4,
            epsilon = 1e-12
        );
        let d = delta_max_closed_form(1.0, 2.0);
        assert!(d > 0.0 && d < std::f64::consts::FRAC_PI_4);
        // At the reported delta the bound is still positive.
        let f = (2.0 * d).cos().sqrt() * d.cos() - 2.0 * d.sin();
        assert!(f > 0.0);
        assert_eq!(delta_max_closed_form(-1.0, 0.0), 0.0);
    }
}
