//! Run orchestration: the coupled stepping loop, monitoring time series,
//! snapshots and restart.
//!
//! One step advances the pair (eta, nu) over dt:
//!
//! 1. build the shift map for eta_n, solve the pressure, evaluate the
//!    interface flux f1;
//! 2. provisional interface eta* = eta_n + dt f1 (margin-checked), with its
//!    own map;
//! 3. humidity IMEX step from map_n to map*, pressure re-solved on map*,
//!    flux f2 from the advanced fields;
//! 4. Heun update eta_{n+1} = eta_n + dt/2 (f1 + f2), margin-checked.
//!
//! Every solve is a pure function of the current state, so a restored
//! snapshot reproduces the uninterrupted trajectory bit for bit.

use std::io::Write;
use std::path::{Path, PathBuf};

use ndarray::{Array1, Array2};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::config::RunConfig;
use crate::error::{Result, SimError};
use crate::fields::{solve_pressure, step_humidity_general, FieldState, SolverOptions};
use crate::geometry::{build_diffeomorphism, DiffeoMap, DiffeoOptions, Grid, InterfaceState};
use crate::interface::{check_wellposedness, interface_normal_flux};
use crate::modelproblem::mode_amplitude;

/// One monitoring row of the time series.
#[derive(Debug, Clone, Serialize)]
pub struct StepRecord {
    pub step: usize,
    pub time: f64,
    pub eta_inf: f64,
    pub eta_l2: f64,
    /// Amplitude of the monitored transverse mode of eta.
    pub mode_amp: f64,
    pub margin_worst: f64,
    pub satisfied: bool,
    pub omega1_min: f64,
    pub p_min: f64,
    pub p_max: f64,
    pub nu_min: f64,
    pub nu_max: f64,
    pub max_principle_ok: bool,
}

impl StepRecord {
    pub const CSV_HEADER: &'static str = "step,t,eta_inf,eta_l2,mode_amp,margin_worst,satisfied,omega1_min,p_min,p_max,nu_min,nu_max,max_principle_ok";

    pub fn csv_row(&self) -> String {
        format!(
            "{},{:.17e},{:.17e},{:.17e},{:.17e},{:.17e},{},{:.17e},{:.17e},{:.17e},{:.17e},{:.17e},{}",
            self.step,
            self.time,
            self.eta_inf,
            self.eta_l2,
            self.mode_amp,
            self.margin_worst,
            self.satisfied as u8,
            self.omega1_min,
            self.p_min,
            self.p_max,
            self.nu_min,
            self.nu_max,
            self.max_principle_ok as u8
        )
    }
}

/// Summary of a finished (or halted) run.
#[derive(Debug, Clone, Serialize)]
pub struct RunReport {
    pub steps_completed: usize,
    pub final_time: f64,
    pub final_eta_inf: f64,
    pub wellposed_throughout: bool,
    pub halted: Option<String>,
    /// Simulation time is measured in the diffusion unit; one pressure unit
    /// equals `gamma_diff` diffusion units.
    pub gamma_diff: f64,
    pub time_unit_note: String,
}

#[derive(Debug)]
pub struct RunOutcome {
    pub report: RunReport,
    pub records: Vec<StepRecord>,
}

/// The stepping state machine.
pub struct Simulator {
    pub cfg: RunConfig,
    pub grid: Grid,
    pub eta: InterfaceState,
    pub nu: Array2<f64>,
    pub step_count: usize,
    solver: SolverOptions,
    diffeo_opts: DiffeoOptions,
    config_hash: String,
}

impl Simulator {
    pub fn new(cfg: RunConfig) -> Result<Simulator> {
        cfg.validate()?;
        let grid = cfg.build_grid()?;
        let eta_vals = cfg.initial_eta(grid.n_transverse)?;
        let eta = InterfaceState::new(eta_vals, 0.0);
        // A breach in the initial data is a configuration problem, not a
        // runtime halt.
        eta.check_margin(cfg.params.h, cfg.monitor.gamma_margin)
            .map_err(|e| SimError::InvalidParameter(e.to_string()))?;
        let nu = cfg.initial_nu(&grid)?;
        let solver = cfg.solver_options();
        let diffeo_opts = DiffeoOptions {
            delta_j: cfg.monitor.delta_j,
            deriv: cfg.solver.transverse_derivative,
        };
        let config_hash = config_hash(&cfg)?;
        Ok(Simulator {
            cfg,
            grid,
            eta,
            nu,
            step_count: 0,
            solver,
            diffeo_opts,
            config_hash,
        })
    }

    pub fn config_hash(&self) -> &str {
        &self.config_hash
    }

    fn build_map(&self, eta: &InterfaceState) -> Result<DiffeoMap> {
        build_diffeomorphism(eta, &self.grid, &self.diffeo_opts)
    }

    fn fields_for(&self, pressure: Array2<f64>) -> FieldState {
        FieldState {
            pressure,
            humidity: self.nu.clone(),
            time: self.eta.time,
        }
    }

    fn make_record(
        &self,
        fields: &FieldState,
        monitor: &crate::interface::WellposednessReport,
    ) -> StepRecord {
        let (p_min, p_max, nu_min, nu_max) = fields.extrema();
        let eta_inf = crate::numerics::max_abs1(&self.eta.eta);
        let eta_l2 = (self.eta.eta.iter().map(|v| v * v).sum::<f64>()
            / self.grid.n_transverse as f64)
            .sqrt();
        StepRecord {
            step: self.step_count,
            time: self.eta.time,
            eta_inf,
            eta_l2,
            mode_amp: mode_amplitude(&self.eta.eta, self.cfg.monitor.monitor_mode),
            margin_worst: monitor.worst,
            satisfied: monitor.satisfied,
            omega1_min: monitor.omega1_min,
            p_min,
            p_max,
            nu_min,
            nu_max,
            max_principle_ok: fields.max_principle_ok(self.solver.tol_mp),
        }
    }

    /// Monitoring record for the current state (does not mutate anything).
    pub fn observe(&self) -> Result<StepRecord> {
        let diffeo = self.build_map(&self.eta)?;
        let pressure = solve_pressure(&diffeo, &self.grid, &self.solver)?;
        let fields = self.fields_for(pressure);
        let report = check_wellposedness(&fields, &diffeo, &self.grid, &self.cfg.params)?;
        Ok(self.make_record(&fields, &report))
    }

    /// Advance one step. Returns the monitoring record of the pre-step state
    /// (whose pressure solve the step needs anyway).
    pub fn step(&mut self) -> Result<StepRecord> {
        let dt = self.cfg.time.dt;
        let h = self.cfg.params.h;
        let gamma_m = self.cfg.monitor.gamma_margin;

        let diffeo_n = self.build_map(&self.eta)?;
        let pressure_n = solve_pressure(&diffeo_n, &self.grid, &self.solver)?;
        let fields_n = self.fields_for(pressure_n);

        let monitor = check_wellposedness(&fields_n, &diffeo_n, &self.grid, &self.cfg.params)?;
        if self.cfg.monitor.halt_on_illposed && !monitor.satisfied {
            return Err(SimError::WellposednessHalt(format!(
                "step {}: margin worst {:.6e} above -omega0 = {:.6e}",
                self.step_count, monitor.worst, -self.cfg.params.omega0
            )));
        }

        let record = self.make_record(&fields_n, &monitor);

        let flux1 = interface_normal_flux(&fields_n, &diffeo_n, &self.grid, &self.cfg.params)?;

        let eta_star = InterfaceState {
            eta: &self.eta.eta + &(dt * &flux1),
            time: self.eta.time + dt,
        };
        eta_star.check_margin(h, gamma_m)?;
        let diffeo_star = self.build_map(&eta_star)?;

        let gamma_row = Array1::from_elem(self.grid.n_transverse, 1.0);
        let top_row = Array1::zeros(self.grid.n_transverse);
        let nu_next = step_humidity_general(
            &self.nu,
            &diffeo_n,
            &diffeo_star,
            &self.grid,
            dt,
            self.eta.time,
            &gamma_row,
            &top_row,
            None,
        )?;

        let pressure_star = solve_pressure(&diffeo_star, &self.grid, &self.solver)?;
        let fields_star = FieldState {
            pressure: pressure_star,
            humidity: nu_next.clone(),
            time: self.eta.time + dt,
        };
        let flux2 =
            interface_normal_flux(&fields_star, &diffeo_star, &self.grid, &self.cfg.params)?;

        let eta_next = InterfaceState {
            eta: &self.eta.eta + &((0.5 * dt) * &(&flux1 + &flux2)),
            time: self.eta.time + dt,
        };
        eta_next.check_margin(h, gamma_m)?;

        self.eta = eta_next;
        self.nu = nu_next;
        self.step_count += 1;
        Ok(record)
    }

    /// Serialize the evolving state (interface, humidity, clock) plus the
    /// configuration hash. Pressure is recomputed on restore.
    pub fn snapshot(&self) -> Snapshot {
        Snapshot {
            format: SNAPSHOT_FORMAT.into(),
            config_sha256: self.config_hash.clone(),
            step: self.step_count,
            time: self.eta.time,
            n_transverse: self.grid.n_transverse,
            n_upper: self.grid.n_upper,
            eta_hex: encode_f64s(self.eta.eta.as_slice().unwrap()),
            nu_hex: encode_f64s(self.nu.as_slice().unwrap()),
        }
    }

    /// Restore a snapshot taken under the identical configuration.
    pub fn restore(&mut self, snap: &Snapshot) -> Result<()> {
        if snap.format != SNAPSHOT_FORMAT {
            return Err(SimError::SnapshotMismatch(format!(
                "unknown snapshot format '{}'",
                snap.format
            )));
        }
        if snap.config_sha256 != self.config_hash {
            return Err(SimError::SnapshotMismatch(format!(
                "snapshot was taken under config {} but the active config hashes to {}",
                snap.config_sha256, self.config_hash
            )));
        }
        if snap.n_transverse != self.grid.n_transverse || snap.n_upper != self.grid.n_upper {
            return Err(SimError::SnapshotMismatch(
                "snapshot grid does not match the active grid".into(),
            ));
        }
        let eta = decode_f64s(&snap.eta_hex)?;
        if eta.len() != self.grid.n_transverse {
            return Err(SimError::SnapshotMismatch("eta length mismatch".into()));
        }
        let nu = decode_f64s(&snap.nu_hex)?;
        let expect = self.grid.n_transverse * (self.grid.n_upper + 1);
        if nu.len() != expect {
            return Err(SimError::SnapshotMismatch("humidity length mismatch".into()));
        }
        self.eta = InterfaceState::new(Array1::from_vec(eta), snap.time);
        self.nu = Array2::from_shape_vec((self.grid.n_transverse, self.grid.n_upper + 1), nu)
            .map_err(|e| SimError::SnapshotMismatch(e.to_string()))?;
        self.step_count = snap.step;
        Ok(())
    }
}

pub const SNAPSHOT_FORMAT: &str = "evapfront-snapshot-v1";

/// Self-describing snapshot document. Arrays are hex-encoded little-endian
/// f64 words, so the round trip is lossless.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Snapshot {
    pub format: String,
    pub config_sha256: String,
    pub step: usize,
    pub time: f64,
    pub n_transverse: usize,
    pub n_upper: usize,
    pub eta_hex: String,
    pub nu_hex: String,
}

impl Snapshot {
    pub fn to_json(&self) -> Result<String> {
        serde_json::to_string_pretty(self)
            .map_err(|e| SimError::InvalidParameter(format!("snapshot serialize error: {e}")))
    }

    pub fn from_json(text: &str) -> Result<Snapshot> {
        serde_json::from_str(text)
            .map_err(|e| SimError::SnapshotMismatch(format!("snapshot parse error: {e}")))
    }
}

fn encode_f64s(vals: &[f64]) -> String {
    let mut bytes = Vec::with_capacity(vals.len() * 8);
    for v in vals {
        bytes.extend_from_slice(&v.to_le_bytes());
    }
    hex::encode(bytes)
}

fn decode_f64s(text: &str) -> Result<Vec<f64>> {
    let bytes = hex::decode(text)
        .map_err(|e| SimError::SnapshotMismatch(format!("hex decode error: {e}")))?;
    if bytes.len() % 8 != 0 {
        return Err(SimError::SnapshotMismatch(
            "hex payload is not a whole number of f64 words".into(),
        ));
    }
    Ok(bytes
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
        .collect())
}

/// SHA-256 of the canonical TOML serialization of the configuration.
pub fn config_hash(cfg: &RunConfig) -> Result<String> {
    let text = cfg.to_toml()?;
    let mut hasher = Sha256::new();
    hasher.update(text.as_bytes());
    Ok(hex::encode(hasher.finalize()))
}

/// Write a file atomically (write to a temporary sibling, then rename).
pub fn atomic_write(path: &Path, contents: &str) -> Result<()> {
    let tmp: PathBuf = path.with_extension("tmp");
    {
        let mut f = std::fs::File::create(&tmp)?;
        f.write_all(contents.as_bytes())?;
        f.sync_all()?;
    }
    std::fs::rename(&tmp, path)?;
    Ok(())
}

fn annotate(e: SimError, step: usize) -> SimError {
    match e {
        SimError::MarginViolation(m) => SimError::MarginViolation(format!("step {step}: {m}")),
        SimError::DegenerateMap(m) => SimError::DegenerateMap(format!("step {step}: {m}")),
        SimError::SolverBreakdown(m) => SimError::SolverBreakdown(format!("step {step}: {m}")),
        other => other,
    }
}

/// Run the whole configured simulation. When `out_dir` is given, a CSV time
/// series, a JSON report, and snapshots at the configured cadence are written
/// there; on a mid-run failure a post-mortem snapshot is dumped before the
/// error is returned.
pub fn run_simulation(cfg: &RunConfig, out_dir: Option<&Path>) -> Result<RunOutcome> {
    run_simulation_from(cfg, out_dir, None)
}

/// As `run_simulation`, optionally resuming from a snapshot (which replaces
/// the configured initial data and step counter).
pub fn run_simulation_from(
    cfg: &RunConfig,
    out_dir: Option<&Path>,
    restore: Option<&Snapshot>,
) -> Result<RunOutcome> {
    let mut sim = Simulator::new(cfg.clone())?;
    if let Some(snap) = restore {
        sim.restore(snap)?;
    }
    let n_steps = (cfg.time.t_end / cfg.time.dt).round() as usize;
    if n_steps == 0 {
        return Err(SimError::InvalidParameter(
            "t_end shorter than a single step".into(),
        ));
    }
    if let Some(dir) = out_dir {
        std::fs::create_dir_all(dir)?;
    }

    let mut records: Vec<StepRecord> = Vec::new();
    let mut wellposed = true;
    let mut halted = None;

    for step in sim.step_count..n_steps {
        let result = sim.step();
        match result {
            Ok(rec) => {
                wellposed &= rec.satisfied;
                if step % cfg.output.series_every == 0 {
                    records.push(rec);
                }
                if cfg.output.snapshot_every > 0
                    && sim.step_count % cfg.output.snapshot_every == 0
                {
                    if let Some(dir) = out_dir {
                        let snap = sim.snapshot().to_json()?;
                        atomic_write(&dir.join(format!("snapshot_{:06}.json", sim.step_count)), &snap)?;
                    }
                }
            }
            Err(e) => {
                let e = annotate(e, step);
                if let Some(dir) = out_dir {
                    if let Ok(snap) = sim.snapshot().to_json() {
                        let _ = atomic_write(&dir.join("snapshot_postmortem.json"), &snap);
                    }
                    let _ = write_series(dir, &records);
                }
                if matches!(e, SimError::WellposednessHalt(_)) {
                    halted = Some(e.to_string());
                    break;
                }
                return Err(e);
            }
        }
    }
    // Final-state observation.
    let final_rec = sim.observe()?;
    wellposed &= final_rec.satisfied;
    records.push(final_rec);

    let report = RunReport {
        steps_completed: sim.step_count,
        final_time: sim.eta.time,
        final_eta_inf: crate::numerics::max_abs1(&sim.eta.eta),
        wellposed_throughout: wellposed,
        halted,
        gamma_diff: cfg.params.gamma_diff,
        time_unit_note:
            "t is measured in the diffusion time unit L^2/D; one pressure-velocity unit \
             (L m mu_w / (k rho_w g)) equals gamma_diff diffusion units"
                .into(),
    };

    if let Some(dir) = out_dir {
        write_series(dir, &records)?;
        let json = serde_json::to_string_pretty(&report)
            .map_err(|e| SimError::InvalidParameter(format!("report serialize error: {e}")))?;
        atomic_write(&dir.join("report.json"), &json)?;
        let snap = sim.snapshot().to_json()?;
        atomic_write(&dir.join("snapshot_final.json"), &snap)?;
    }

    Ok(RunOutcome { report, records })
}

fn write_series(dir: &Path, records: &[StepRecord]) -> Result<()> {
    let mut text = String::from(StepRecord::CSV_HEADER);
    text.push('\n');
    for r in records {
        text.push_str(&r.csv_row());
        text.push('\n');
    }
    atomic_write(&dir.join("series.csv"), &text)
}
