//! Configuration: physical constants, nondimensionalization, and the run
//! configuration file (TOML sections of key = value pairs).

use ndarray::Array1;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Result, SimError};
use crate::fields::{Params, SolverOptions};
use crate::geometry::{Grid, TransverseDeriv};

/// Dimensional constants of the porous layer problem (SI units).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PhysicalParams {
    /// Porosity, fraction of free pore space in (0,1).
    pub porosity_m: f64,
    /// Permeability to water (m^2).
    pub permeability_k: f64,
    /// Viscosity of water (Pa s).
    pub viscosity_w: f64,
    /// Vapor diffusivity (m^2/s).
    pub diffusivity_d: f64,
    /// Density of water (kg/m^3).
    pub density_w: f64,
    /// Density of air (kg/m^3).
    pub density_a: f64,
    /// Gravity (m/s^2).
    pub gravity_g: f64,
    /// Mixture pressure at the interface (Pa).
    pub p_a: f64,
    /// Capillary pressure (Pa).
    pub p_c: f64,
    /// Hydrodynamic pressure at the upper wall (Pa).
    pub p_0: f64,
    /// Condensation humidity on the front, in (0,1).
    pub nu_star: f64,
    /// Humidity at the lower wall, in (0,1).
    pub nu_a: f64,
    /// Layer thickness (m).
    pub layer_l: f64,
    /// Reference interface depth (m), in (0, layer_l).
    pub level_h: f64,
}

impl PhysicalParams {
    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("permeability_k", self.permeability_k),
            ("viscosity_w", self.viscosity_w),
            ("diffusivity_d", self.diffusivity_d),
            ("density_w", self.density_w),
            ("density_a", self.density_a),
            ("gravity_g", self.gravity_g),
            ("layer_l", self.layer_l),
        ];
        for (name, v) in positive {
            if !(v > 0.0) {
                return Err(SimError::InvalidParameter(format!(
                    "{name} must be positive, got {v}"
                )));
            }
        }
        if !(self.porosity_m > 0.0 && self.porosity_m < 1.0) {
            return Err(SimError::InvalidParameter(format!(
                "porosity_m must lie in (0,1), got {}",
                self.porosity_m
            )));
        }
        for (name, v) in [("nu_star", self.nu_star), ("nu_a", self.nu_a)] {
            if !(v > 0.0 && v < 1.0) {
                return Err(SimError::InvalidParameter(format!(
                    "{name} must lie in (0,1), got {v}"
                )));
            }
        }
        if !(self.nu_star > self.nu_a) {
            return Err(SimError::InvalidParameter(format!(
                "nu_star ({}) must exceed nu_a ({})",
                self.nu_star, self.nu_a
            )));
        }
        if !(self.level_h > 0.0 && self.level_h < self.layer_l) {
            return Err(SimError::InvalidParameter(format!(
                "level_h must lie in (0, layer_l), got {}",
                self.level_h
            )));
        }
        Ok(())
    }
}

/// Time units of the two dimensionless formulations: the pressure-velocity
/// unit and the diffusion unit obtained by the final time rescaling. Both are
/// reported so downstream users can convert either way.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct TimeUnits {
    /// L m mu_w / (k rho_w g), seconds.
    pub pressure_unit_s: f64,
    /// pressure_unit_s / gamma = L^2 / D, seconds.
    pub diffusion_unit_s: f64,
}

/// Nondimensionalize the physical constants:
///
/// ```text
/// alpha = (P_a + P_c - P_0) / (rho_w g L)
/// beta  = D rho_a (nu* - nu_a) m mu_w / (k rho_w^2 g L)
/// gamma = D m mu_w / (k rho_w g L)
/// H     = h / L
/// mu    = 1 - rho_a nu* / rho_w
/// ```
///
/// alpha may come out nonpositive (the sign carries meaning for the
/// well-posedness analysis); the strict simulator validation happens at run
/// setup, not here.
pub fn nondimensionalize(phys: &PhysicalParams) -> Result<(Params, TimeUnits)> {
    phys.validate()?;
    let rho_w_g_l = phys.density_w * phys.gravity_g * phys.layer_l;
    let alpha = (phys.p_a + phys.p_c - phys.p_0) / rho_w_g_l;
    let beta = phys.diffusivity_d
        * phys.density_a
        * (phys.nu_star - phys.nu_a)
        * phys.porosity_m
        * phys.viscosity_w
        / (phys.permeability_k * phys.density_w * rho_w_g_l);
    let gamma = phys.diffusivity_d * phys.porosity_m * phys.viscosity_w
        / (phys.permeability_k * rho_w_g_l);
    let mu = 1.0 - phys.density_a * phys.nu_star / phys.density_w;
    if mu == 0.0 {
        return Err(SimError::InvalidParameter(
            "mobility factor mu = 1 - rho_a nu*/rho_w vanished".into(),
        ));
    }
    let pressure_unit =
        phys.layer_l * phys.porosity_m * phys.viscosity_w / (phys.permeability_k * phys.density_w * phys.gravity_g);
    let units = TimeUnits {
        pressure_unit_s: pressure_unit,
        diffusion_unit_s: pressure_unit / gamma,
    };
    Ok((
        Params {
            alpha,
            beta,
            gamma_diff: gamma,
            mu,
            h: phys.level_h / phys.layer_l,
            omega0: 1e-3,
        },
        units,
    ))
}

/// Grid section of the run configuration.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GridSection {
    pub n_transverse: usize,
    pub n_lower: usize,
    pub n_upper: usize,
}

/// Time-stepping section.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TimeSection {
    pub dt: f64,
    pub t_end: f64,
    /// Stability factor: dt must not exceed c_dt * transverse spacing.
    #[serde(default = "default_c_dt")]
    pub c_dt: f64,
}

fn default_c_dt() -> f64 {
    0.25
}

/// Initial data section. `eta` and `nu` are small expressions:
/// - eta: "flat", "const:V", "cos:AMP,MODE[,PHASE]", "random:AMP",
///   "values:v0,v1,..."
/// - nu: "steady", "steady+mode:EPS,M", "values:..." (row-major, x-major)
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InitialSection {
    pub eta: String,
    #[serde(default = "default_nu")]
    pub nu: String,
}

fn default_nu() -> String {
    "steady".into()
}

/// Monitoring thresholds.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MonitorSection {
    /// Jacobian floor of the coordinate map.
    #[serde(default = "default_delta_j")]
    pub delta_j: f64,
    /// Wall margin for the interface.
    #[serde(default = "default_gamma_margin")]
    pub gamma_margin: f64,
    /// Halt the run when the well-posedness monitor trips (off by default:
    /// watching ill-posed growth is a feature, not a crash).
    #[serde(default)]
    pub halt_on_illposed: bool,
    /// Transverse mode whose amplitude is tracked in the time series.
    #[serde(default = "default_monitor_mode")]
    pub monitor_mode: usize,
}

fn default_delta_j() -> f64 {
    0.1
}

fn default_gamma_margin() -> f64 {
    0.05
}

fn default_monitor_mode() -> usize {
    1
}

impl Default for MonitorSection {
    fn default() -> Self {
        MonitorSection {
            delta_j: default_delta_j(),
            gamma_margin: default_gamma_margin(),
            halt_on_illposed: false,
            monitor_mode: default_monitor_mode(),
        }
    }
}

/// Output cadence.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OutputSection {
    /// Append a time-series row every this many steps.
    #[serde(default = "default_series_every")]
    pub series_every: usize,
    /// Write a snapshot every this many steps (0 disables).
    #[serde(default)]
    pub snapshot_every: usize,
}

fn default_series_every() -> usize {
    1
}

impl Default for OutputSection {
    fn default() -> Self {
        OutputSection {
            series_every: default_series_every(),
            snapshot_every: 0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SolverSection {
    #[serde(default = "default_tol_ell")]
    pub tol_ell: f64,
    #[serde(default = "default_tol_mp")]
    pub tol_mp: f64,
    #[serde(default = "default_max_iter")]
    pub max_iter: usize,
    #[serde(default)]
    pub transverse_derivative: TransverseDeriv,
}

fn default_tol_ell() -> f64 {
    1e-10
}

fn default_tol_mp() -> f64 {
    1e-8
}

fn default_max_iter() -> usize {
    400
}

impl Default for SolverSection {
    fn default() -> Self {
        SolverSection {
            tol_ell: default_tol_ell(),
            tol_mp: default_tol_mp(),
            max_iter: default_max_iter(),
            transverse_derivative: TransverseDeriv::Spectral,
        }
    }
}

/// Full run configuration; serialized as TOML with one section per struct
/// field.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunConfig {
    pub params: Params,
    pub grid: GridSection,
    pub time: TimeSection,
    pub initial: InitialSection,
    #[serde(default)]
    pub monitor: MonitorSection,
    #[serde(default)]
    pub output: OutputSection,
    #[serde(default)]
    pub solver: SolverSection,
    /// Seed for any randomized initial data.
    #[serde(default)]
    pub seed: Option<u64>,
}

impl RunConfig {
    pub fn from_toml(text: &str) -> Result<RunConfig> {
        let cfg: RunConfig = toml::from_str(text)
            .map_err(|e| SimError::InvalidParameter(format!("config parse error: {e}")))?;
        Ok(cfg)
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string_pretty(self)
            .map_err(|e| SimError::InvalidParameter(format!("config serialize error: {e}")))
    }

    pub fn validate(&self) -> Result<()> {
        self.params.validate_strict()?;
        if !(self.time.dt > 0.0) || !(self.time.t_end > 0.0) {
            return Err(SimError::InvalidParameter(
                "dt and t_end must be positive".into(),
            ));
        }
        let dx = 1.0 / self.grid.n_transverse as f64;
        if self.time.dt > self.time.c_dt * dx {
            return Err(SimError::InvalidParameter(format!(
                "dt = {} exceeds the stability bound c_dt * dx = {}",
                self.time.dt,
                self.time.c_dt * dx
            )));
        }
        for (name, v) in [
            ("tol_ell", self.solver.tol_ell),
            ("tol_mp", self.solver.tol_mp),
            ("delta_j", self.monitor.delta_j),
            ("gamma_margin", self.monitor.gamma_margin),
        ] {
            if !(v > 0.0) {
                return Err(SimError::InvalidParameter(format!(
                    "{name} must be positive, got {v}"
                )));
            }
        }
        if self.output.series_every == 0 {
            return Err(SimError::InvalidParameter(
                "series_every must be at least 1".into(),
            ));
        }
        Ok(())
    }

    pub fn build_grid(&self) -> Result<Grid> {
        Grid::build(
            self.grid.n_transverse,
            self.grid.n_lower,
            self.grid.n_upper,
            self.params.h,
        )
    }

    pub fn solver_options(&self) -> SolverOptions {
        SolverOptions {
            tol_ell: self.solver.tol_ell,
            tol_mp: self.solver.tol_mp,
            max_iter: self.solver.max_iter,
        }
    }

    /// Evaluate the initial interface expression on the transverse grid.
    pub fn initial_eta(&self, nx: usize) -> Result<Array1<f64>> {
        parse_eta_expr(&self.initial.eta, nx, self.seed)
    }

    /// Evaluate the initial humidity expression on the upper-phase grid.
    pub fn initial_nu(&self, grid: &Grid) -> Result<ndarray::Array2<f64>> {
        parse_nu_expr(&self.initial.nu, grid)
    }
}

fn parse_args(body: &str, expected: std::ops::RangeInclusive<usize>, what: &str) -> Result<Vec<f64>> {
    let parts: Vec<&str> = body.split(',').map(|s| s.trim()).collect();
    if !expected.contains(&parts.len()) {
        return Err(SimError::InvalidParameter(format!(
            "{what}: expected {expected:?} arguments, got {}",
            parts.len()
        )));
    }
    parts
        .iter()
        .map(|s| {
            s.parse::<f64>().map_err(|_| {
                SimError::InvalidParameter(format!("{what}: cannot parse number '{s}'"))
            })
        })
        .collect()
}

pub fn parse_eta_expr(expr: &str, nx: usize, seed: Option<u64>) -> Result<Array1<f64>> {
    let expr = expr.trim();
    if expr == "flat" {
        return Ok(Array1::zeros(nx));
    }
    if let Some(body) = expr.strip_prefix("const:") {
        let v = parse_args(body, 1..=1, "const")?;
        return Ok(Array1::from_elem(nx, v[0]));
    }
    if let Some(body) = expr.strip_prefix("cos:") {
        let v = parse_args(body, 2..=3, "cos")?;
        let amp = v[0];
        let mode = v[1];
        let phase = v.get(2).copied().unwrap_or(0.0);
        return Ok(Array1::from_iter((0..nx).map(|i| {
            amp * (2.0 * std::f64::consts::PI * mode * i as f64 / nx as f64 + phase).cos()
        })));
    }
    if let Some(body) = expr.strip_prefix("random:") {
        let v = parse_args(body, 1..=1, "random")?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed.unwrap_or(0));
        let mut eta = Array1::from_iter((0..nx).map(|_| v[0] * (2.0 * rng.random::<f64>() - 1.0)));
        // Remove the mean so the perturbation does not shift the front.
        let mean = eta.sum() / nx as f64;
        eta.mapv_inplace(|x| x - mean);
        return Ok(eta);
    }
    if let Some(body) = expr.strip_prefix("values:") {
        let v = parse_args(body, nx..=nx, "values")?;
        return Ok(Array1::from_vec(v));
    }
    Err(SimError::InvalidParameter(format!(
        "unknown eta expression '{expr}'"
    )))
}

pub fn parse_nu_expr(expr: &str, grid: &Grid) -> Result<ndarray::Array2<f64>> {
    let expr = expr.trim();
    let nx = grid.n_transverse;
    let nz = grid.n_upper + 1;
    let steady = |j: usize| (1.0 - grid.zs_upper[j]) / (1.0 - grid.h);
    if expr == "steady" {
        let mut nu = ndarray::Array2::zeros((nx, nz));
        for j in 0..nz {
            let v = steady(j);
            for i in 0..nx {
                nu[[i, j]] = v;
            }
        }
        return Ok(nu);
    }
    if let Some(body) = expr.strip_prefix("steady+mode:") {
        let v = parse_args(body, 2..=2, "steady+mode")?;
        let eps = v[0];
        let m = v[1];
        let mut nu = ndarray::Array2::zeros((nx, nz));
        for j in 0..nz {
            let zt = (grid.zs_upper[j] - grid.h) / (1.0 - grid.h);
            let val = steady(j) + eps * (std::f64::consts::PI * m * zt).sin();
            for i in 0..nx {
                nu[[i, j]] = val;
            }
        }
        return Ok(nu);
    }
    if let Some(body) = expr.strip_prefix("values:") {
        let v = parse_args(body, nx * nz..=nx * nz, "values")?;
        let mut nu = ndarray::Array2::zeros((nx, nz));
        for i in 0..nx {
            for j in 0..nz {
                nu[[i, j]] = v[i * nz + j];
            }
        }
        return Ok(nu);
    }
    Err(SimError::InvalidParameter(format!(
        "unknown nu expression '{expr}'"
    )))
}

/// Solve the flat-equilibrium relation alpha/H + beta/(1-H) = 1 for one
/// unknown given the other two. For H two roots may exist; both in (0,1) are
/// returned.
pub fn solve_equilibrium(
    alpha: Option<f64>,
    beta: Option<f64>,
    h: Option<f64>,
) -> Result<Vec<(String, f64)>> {
    match (alpha, beta, h) {
        (None, Some(b), Some(h)) => {
            check_h(h)?;
            Ok(vec![("alpha".into(), h * (1.0 - b / (1.0 - h)))])
        }
        (Some(a), None, Some(h)) => {
            check_h(h)?;
            Ok(vec![("beta".into(), (1.0 - h) * (1.0 - a / h))])
        }
        (Some(a), Some(b), None) => {
            // alpha (1-H) + beta H = H (1-H)  =>  H^2 + H (beta - alpha - 1) + alpha = 0.
            let bq = b - a - 1.0;
            let disc = bq * bq - 4.0 * a;
            if disc < 0.0 {
                return Err(SimError::InvalidParameter(format!(
                    "no real equilibrium level for alpha = {a}, beta = {b}"
                )));
            }
            let mut out = Vec::new();
            for root in [(-bq + disc.sqrt()) / 2.0, (-bq - disc.sqrt()) / 2.0] {
                if root > 0.0 && root < 1.0 {
                    out.push(("h".into(), root));
                }
            }
            if out.is_empty() {
                return Err(SimError::InvalidParameter(format!(
                    "no equilibrium level inside (0,1) for alpha = {a}, beta = {b}"
                )));
            }
            out.dedup_by(|x, y| (x.1 - y.1).abs() < 1e-15);
            Ok(out)
        }
        _ => Err(SimError::InvalidParameter(
            "specify exactly two of alpha, beta, h".into(),
        )),
    }
}

fn check_h(h: f64) -> Result<()> {
    if !(h > 0.0 && h < 1.0) {
        return Err(SimError::InvalidParameter(format!(
            "H must lie in (0,1), got {h}"
        )));
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn sample_phys() -> PhysicalParams {
        PhysicalParams {
            porosity_m: 0.3,
            permeability_k: 1e-12,
            viscosity_w: 1e-3,
            diffusivity_d: 2.5e-5,
            density_w: 1000.0,
            density_a: 1.2,
            gravity_g: 9.81,
            p_a: 101325.0,
            p_c: 2000.0,
            p_0: 101325.0,
            nu_star: 0.8,
            nu_a: 0.4,
            layer_l: 1.0,
            level_h: 0.5,
        }
    }

    #[test]
    fn nondim_zero_numerators() {
        let mut phys = sample_phys();
        phys.p_c = 0.0; // P_a + P_c = P_0
        let (p, _) = nondimensionalize(&phys).unwrap();
        assert_eq!(p.alpha, 0.0);

        let mut phys = sample_phys();
        phys.nu_a = phys.nu_star;
        assert!(nondimensionalize(&phys).is_err()); // invariant nu* > nu_a
        phys.nu_a = phys.nu_star - 1e-12;
        let (p, _) = nondimensionalize(&phys).unwrap();
        assert!(p.beta.abs() < 1e-12);
    }

    #[test]
    fn doubling_length_halves_alpha_beta_gamma() {
        let phys = sample_phys();
        let (p1, u1) = nondimensionalize(&phys).unwrap();
        let mut phys2 = phys;
        phys2.layer_l = 2.0;
        phys2.level_h = 1.0; // keep H fixed
        let (p2, u2) = nondimensionalize(&phys2).unwrap();
        assert_relative_eq!(p2.alpha, p1.alpha / 2.0, epsilon = 1e-15);
        assert_relative_eq!(p2.beta, p1.beta / 2.0, epsilon = 1e-15);
        assert_relative_eq!(p2.gamma_diff, p1.gamma_diff / 2.0, epsilon = 1e-15);
        assert_relative_eq!(p2.h, p1.h, epsilon = 1e-15);
        // mu has no L dependence.
        assert_relative_eq!(p2.mu, p1.mu, epsilon = 1e-15);
        // The diffusion time unit scales as L^2.
        assert_relative_eq!(u2.diffusion_unit_s, 4.0 * u1.diffusion_unit_s, epsilon = 1e-12);
    }

    #[test]
    fn mu_formula() {
        let phys = sample_phys();
        let (p, _) = nondimensionalize(&phys).unwrap();
        assert_relative_eq!(p.mu, 1.0 - 1.2 * 0.8 / 1000.0, epsilon = 1e-15);
    }

    fn sample_config() -> RunConfig {
        RunConfig {
            params: Params {
                alpha: 0.1,
                beta: 0.4,
                gamma_diff: 1.0,
                mu: 1.0,
                h: 0.5,
                omega0: 1e-3,
            },
            grid: GridSection {
                n_transverse: 16,
                n_lower: 16,
                n_upper: 16,
            },
            time: TimeSection {
                dt: 0.01,
                t_end: 0.1,
                c_dt: 0.25,
            },
            initial: InitialSection {
                eta: "cos:1e-6,1".into(),
                nu: "steady".into(),
            },
            monitor: MonitorSection::default(),
            output: OutputSection::default(),
            solver: SolverSection::default(),
            seed: Some(7),
        }
    }

    #[test]
    fn config_toml_round_trip() {
        let cfg = sample_config();
        let text = cfg.to_toml().unwrap();
        let back = RunConfig::from_toml(&text).unwrap();
        assert_eq!(cfg, back);
    }

    #[test]
    fn config_validation_catches_dt() {
        let mut cfg = sample_config();
        cfg.time.dt = 1.0; // far above c_dt * dx
        assert!(matches!(
            cfg.validate(),
            Err(SimError::InvalidParameter(_))
        ));
    }

    #[test]
    fn eta_expressions() {
        let flat = parse_eta_expr("flat", 8, None).unwrap();
        assert_eq!(flat.sum(), 0.0);
        let c = parse_eta_expr("const:0.25", 4, None).unwrap();
        assert!(c.iter().all(|&v| v == 0.25));
        let cos = parse_eta_expr("cos:2.0,1", 4, None).unwrap();
        assert_relative_eq!(cos[0], 2.0, epsilon = 1e-15);
        assert_relative_eq!(cos[1], 0.0, epsilon = 1e-12);
        assert_relative_eq!(cos[2], -2.0, epsilon = 1e-15);
        let r1 = parse_eta_expr("random:1e-3", 8, Some(3)).unwrap();
        let r2 = parse_eta_expr("random:1e-3", 8, Some(3)).unwrap();
        assert_eq!(r1, r2);
        assert!(r1.sum().abs() < 1e-15);
        assert!(parse_eta_expr("wavelet:1", 8, None).is_err());
    }

    #[test]
    fn nu_expressions() {
        let grid = Grid::build(4, 4, 4, 0.5).unwrap();
        let nu = parse_nu_expr("steady", &grid).unwrap();
        assert_relative_eq!(nu[[0, 0]], 1.0);
        assert_relative_eq!(nu[[0, 4]], 0.0);
        let nu = parse_nu_expr("steady+mode:0.1,1", &grid).unwrap();
        assert_relative_eq!(nu[[0, 0]], 1.0, epsilon = 1e-12);
        assert_relative_eq!(
            nu[[0, 2]],
            0.5 + 0.1,
            epsilon = 1e-12
        );
    }

    #[test]
    fn equilibrium_solutions() {
        let r = solve_equilibrium(None, Some(0.4), Some(0.5)).unwrap();
        assert_relative_eq!(r[0].1, 0.1, epsilon = 1e-15);
        let r = solve_equilibrium(Some(0.1), None, Some(0.5)).unwrap();
        assert_relative_eq!(r[0].1, 0.4, epsilon = 1e-15);
        let r = solve_equilibrium(Some(0.1), Some(0.4), None).unwrap();
        // Both roots solve alpha/H + beta/(1-H) = 1.
        for (_, h) in &r {
            assert_relative_eq!(0.1 / h + 0.4 / (1.0 - h), 1.0, epsilon = 1e-12);
        }
        assert!(r.iter().any(|(_, h)| (h - 0.5).abs() < 1e-12));
        assert!(solve_equilibrium(Some(0.1), None, None).is_err());
    }
}
