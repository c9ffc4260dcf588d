//! Scenario files: schema, defaults, bundled scenarios, execution of the
//! requested analyses and the run manifest.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::analysis::{
    extract_bl, fit_power_law, modal_amplitude, residual_exponent, validate_prediction, ValidationReport,
};
use crate::blprofiles::{assemble_bl_linear, ExpansionOrder, Side};
use crate::domain::{split_mean_fluct, Grid, RealField};
use crate::dynamics::{
    run, Background, DiagnosticsRecord, DtSpec, InitialData, Mode, RunOutput, RunSpec, StepperConfig,
};
use crate::error::{Error, Result};
use crate::rearrange::{crossed_cells, level_measure};
use crate::stokes::{clamped_spectrum, dense_clamped_eigenvalues, Strip};

fn default_height() -> f64 {
    1.0
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridSpec {
    pub nx: usize,
    pub nz: usize,
    #[serde(default = "default_height")]
    pub height: f64,
}

fn default_cfl() -> f64 {
    0.5
}
fn default_dt_max() -> f64 {
    0.5
}
fn default_true() -> bool {
    true
}

/// Integrator settings (mode and final time live at the top level).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StepperSection {
    #[serde(default)]
    pub dt: DtSpec,
    #[serde(default = "default_cfl")]
    pub cfl: f64,
    #[serde(default = "default_dt_max")]
    pub dt_max: f64,
    #[serde(default = "default_true")]
    pub dealias: bool,
    #[serde(default)]
    pub exact_linear: bool,
    #[serde(default)]
    pub filter: f64,
}

impl Default for StepperSection {
    fn default() -> Self {
        Self {
            dt: DtSpec::default(),
            cfl: default_cfl(),
            dt_max: default_dt_max(),
            dealias: true,
            exact_linear: false,
            filter: 0.0,
        }
    }
}

fn default_lambdas() -> Vec<f64> {
    vec![0.25, 0.5, 0.75]
}
fn default_diag_every() -> f64 {
    1.0
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DiagnosticsSection {
    #[serde(default = "default_lambdas")]
    pub lambdas: Vec<f64>,
    #[serde(default = "default_diag_every")]
    pub diag_every: f64,
    /// 0 disables snapshots
    #[serde(default)]
    pub snapshot_every: f64,
    /// extra diagnostic/snapshot times
    #[serde(default)]
    pub output_times: Vec<f64>,
}

impl Default for DiagnosticsSection {
    fn default() -> Self {
        Self {
            lambdas: default_lambdas(),
            diag_every: default_diag_every(),
            snapshot_every: 0.0,
            output_times: Vec::new(),
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputSection {
    /// defaults to `out/<name>`
    #[serde(default)]
    pub dir: Option<PathBuf>,
}

/// Power-law fit of a time-series column.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FitRequest {
    pub quantity: String,
    pub window: (f64, f64),
    #[serde(default)]
    pub interval: Option<(f64, f64)>,
    /// reported but never failing
    #[serde(default)]
    pub exploratory: bool,
}

/// Value of a column at `time` relative to its initial value.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RatioRequest {
    pub quantity: String,
    pub time: f64,
    pub interval: (f64, f64),
}

fn default_strip_factor() -> f64 {
    4.0
}

/// Boundary-layer extraction and comparison with the linear prediction at
/// the snapshot times listed in `times`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BlRequest {
    pub times: Vec<f64>,
    #[serde(default = "default_side")]
    pub side: Side,
    /// residual strips have this many fitted widths
    #[serde(default = "default_strip_factor")]
    pub strip_factor: f64,
    #[serde(default)]
    pub width_interval: Option<(f64, f64)>,
    #[serde(default)]
    pub amplitude_interval: Option<(f64, f64)>,
    #[serde(default)]
    pub residual_min_exponent: Option<f64>,
}

fn default_side() -> Side {
    Side::Both
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AnalysisSection {
    #[serde(default)]
    pub fits: Vec<FitRequest>,
    #[serde(default)]
    pub ratios: Vec<RatioRequest>,
    #[serde(default)]
    pub bl: Option<BlRequest>,
    /// compare with the rearranged initial density
    #[serde(default)]
    pub rearrangement: bool,
    /// `‖ρ − ρ*₀‖` at the end relative to its initial value must be below
    #[serde(default)]
    pub rearrangement_max_ratio: Option<f64>,
    /// E non-increasing across records (with this absolute slack)
    #[serde(default)]
    pub energy_monotone_tol: Option<f64>,
    /// relative tolerance on `ΔE/Δt + ‖∇u‖²`
    #[serde(default)]
    pub energy_identity_tol: Option<f64>,
    /// `‖θ′‖_{H⁴}` must stay below this multiple of its initial value
    #[serde(default)]
    pub h4_growth_max: Option<f64>,
    /// all diagnostics constant to this absolute tolerance
    #[serde(default)]
    pub steady_tol: Option<f64>,
    /// eigenfunction data: relative error of the modal amplitude against
    /// `exp(−λ̃ t)`
    #[serde(default)]
    pub eigen_decay_tol: Option<f64>,
}

/// A full run configuration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Scenario {
    pub name: String,
    pub grid: GridSpec,
    #[serde(default)]
    pub mode: Mode,
    pub t_final: f64,
    #[serde(default)]
    pub background: Background,
    #[serde(default = "default_initial")]
    pub initial: InitialData,
    #[serde(default)]
    pub stepper: StepperSection,
    #[serde(default)]
    pub diagnostics: DiagnosticsSection,
    #[serde(default)]
    pub output: OutputSection,
    #[serde(default)]
    pub analysis: AnalysisSection,
}

fn default_initial() -> InitialData {
    InitialData::Stratified
}

/// 1-based line of the first `key =` assignment in `text`.
fn key_line(text: &str, key: &str) -> Option<usize> {
    text.lines().position(|l| {
        let l = l.trim_start();
        l.strip_prefix(key)
            .map(|rest| rest.trim_start().starts_with('='))
            .unwrap_or(false)
    })
    .map(|i| i + 1)
}

fn anchored(text: &str, key: &str, msg: String) -> Error {
    match key_line(text, key) {
        Some(l) => Error::Config(format!("line {l}: {msg}")),
        None => Error::Config(msg),
    }
}

impl Scenario {
    /// Parses and validates a scenario; errors carry the offending line.
    pub fn from_toml(text: &str) -> Result<Self> {
        let sc: Scenario = toml::from_str(text).map_err(|e| {
            let line = e
                .span()
                .map(|s| text[..s.start.min(text.len())].matches('\n').count() + 1);
            let msg = e.message().to_string();
            match line {
                Some(l) => Error::Config(format!("line {l}: {msg}")),
                None => Error::Config(msg),
            }
        })?;
        sc.validate_with(text)?;
        Ok(sc)
    }

    pub fn from_file(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path)?;
        Self::from_toml(&text)
    }

    pub fn validate(&self) -> Result<()> {
        self.validate_with("")
    }

    fn validate_with(&self, text: &str) -> Result<()> {
        let g = &self.grid;
        if g.nz < 9 {
            return Err(anchored(text, "nz", format!("grid.nz = {} violates nz >= 9", g.nz)));
        }
        if g.nx < 8 || g.nx % 2 != 0 {
            return Err(anchored(text, "nx", format!("grid.nx = {} violates nx even and >= 8", g.nx)));
        }
        if !(g.height > 0.0) {
            return Err(anchored(text, "height", format!("grid.height = {} must be positive", g.height)));
        }
        if self.name.trim().is_empty() {
            return Err(anchored(text, "name", "name must not be empty".into()));
        }
        if let Err(Error::Config(m)) = self.stepper_config().validate() {
            return Err(anchored(text, "t_final", m));
        }
        if self.stepper.exact_linear && self.mode != Mode::Linear {
            return Err(anchored(text, "exact_linear", "exact_linear requires mode = \"linear\"".into()));
        }
        let grid = self.build_grid()?;
        self.background.sample(&grid).map_err(|e| anchored(text, "kind", e.to_string()))?;
        self.initial.build(&grid).map_err(|e| anchored(text, "kind", e.to_string()))?;
        if let Some(bl) = &self.analysis.bl {
            for t in &bl.times {
                if !self.diagnostics.output_times.iter().any(|o| (o - t).abs() < 1e-9 * t.max(1.0)) {
                    return Err(anchored(
                        text,
                        "times",
                        format!("analysis.bl time {t} is not listed in diagnostics.output_times"),
                    ));
                }
            }
        }
        for f in &self.analysis.fits {
            if DiagnosticsRecord::column_names().iter().all(|c| *c != f.quantity) {
                return Err(anchored(text, "quantity", format!("unknown time-series quantity '{}'", f.quantity)));
            }
        }
        Ok(())
    }

    pub fn build_grid(&self) -> Result<Grid> {
        Grid::new(self.grid.nx, self.grid.nz, self.grid.height)
    }

    pub fn stepper_config(&self) -> StepperConfig {
        let s = &self.stepper;
        StepperConfig {
            dt: s.dt,
            cfl: s.cfl,
            dt_max: s.dt_max,
            mode: self.mode,
            dealias: s.dealias,
            exact_linear: s.exact_linear,
            filter: s.filter,
            t_final: self.t_final,
            snapshot_every: self.diagnostics.snapshot_every,
            diag_every: self.diagnostics.diag_every,
            output_times: self.diagnostics.output_times.clone(),
        }
    }

    pub fn run_spec(&self) -> Result<RunSpec> {
        Ok(RunSpec {
            grid: self.build_grid()?,
            background: self.background.clone(),
            initial: self.initial.clone(),
            stepper: self.stepper_config(),
            lambdas: self.diagnostics.lambdas.clone(),
        })
    }

    pub fn output_dir(&self) -> PathBuf {
        self.output
            .dir
            .clone()
            .unwrap_or_else(|| PathBuf::from("out").join(&self.name))
    }
}

/// Names of the bundled scenarios.
pub const BUNDLED: [&str; 6] = [
    "stratified",
    "stab",
    "stab-general-profile",
    "linear-eigen",
    "linear-trace",
    "nonlinear-bl",
];

/// TOML text of a bundled scenario.
pub fn bundled_text(name: &str) -> Option<&'static str> {
    Some(match name {
        "stratified" => include_str!("../../../scenarios/stratified.toml"),
        "stab" => include_str!("../../../scenarios/stab.toml"),
        "stab-general-profile" => include_str!("../../../scenarios/stab-general-profile.toml"),
        "linear-eigen" => include_str!("../../../scenarios/linear-eigen.toml"),
        "linear-trace" => include_str!("../../../scenarios/linear-trace.toml"),
        "nonlinear-bl" => include_str!("../../../scenarios/nonlinear-bl.toml"),
        _ => return None,
    })
}

pub fn bundled(name: &str) -> Result<Scenario> {
    let text = bundled_text(name).ok_or_else(|| Error::Config(format!("no bundled scenario named '{name}'")))?;
    Scenario::from_toml(text)
}

impl DiagnosticsRecord {
    /// Scalar time-series columns addressable by name.
    pub fn column_names() -> &'static [&'static str] {
        &[
            "energy",
            "dissipation",
            "l2_theta_fluct",
            "h1_theta_fluct",
            "h2_theta_fluct",
            "h3_theta_fluct",
            "h4_theta_fluct",
            "l2_dx3_fluct",
            "h4_dx_fluct",
            "h2_g",
            "mass",
            "l2_rho",
            "min_dz_rho",
            "dist_rearranged",
        ]
    }

    pub fn quantity(&self, name: &str) -> Option<f64> {
        Some(match name {
            "energy" => self.energy,
            "dissipation" => self.dissipation,
            "l2_theta_fluct" => self.l2_theta_fluct,
            "h1_theta_fluct" => self.hs_theta_fluct[0],
            "h2_theta_fluct" => self.hs_theta_fluct[1],
            "h3_theta_fluct" => self.hs_theta_fluct[2],
            "h4_theta_fluct" => self.hs_theta_fluct[3],
            "l2_dx3_fluct" => self.l2_dx3_fluct,
            "h4_dx_fluct" => self.h4_dx_fluct,
            "h2_g" => self.h2_g,
            "mass" => self.mass,
            "l2_rho" => self.l2_rho,
            "min_dz_rho" => self.min_dz_rho,
            "dist_rearranged" => self.dist_rearranged,
            _ => return None,
        })
    }
}

fn series(records: &[DiagnosticsRecord], name: &str) -> Vec<(f64, f64)> {
    records
        .iter()
        .filter_map(|r| r.quantity(name).map(|v| (r.time, v)))
        .collect()
}

/// Worst relative mismatch of the centred energy balance
/// `|ΔE/Δt + ‖∇u‖²| / max(‖∇u‖², 1e−12)` over interior records.
pub fn energy_identity_error(records: &[DiagnosticsRecord]) -> f64 {
    let mut worst = 0.0f64;
    for i in 1..records.len().saturating_sub(1) {
        let (a, b) = (&records[i - 1], &records[i + 1]);
        let de = (b.energy - a.energy) / (b.time - a.time);
        let d = records[i].dissipation;
        worst = worst.max((de + d).abs() / d.max(1e-12));
    }
    worst
}

/// Largest increase of E between consecutive records.
pub fn max_energy_increase(records: &[DiagnosticsRecord]) -> f64 {
    records
        .windows(2)
        .map(|w| w[1].energy - w[0].energy)
        .fold(f64::NEG_INFINITY, f64::max)
        .max(0.0)
}

/// Evaluates the requested analyses on a finished run.
pub fn evaluate(sc: &Scenario, out: &RunOutput) -> Result<ValidationReport> {
    let mut rep = ValidationReport::new(&sc.name);
    let recs = &out.records;
    let a = &sc.analysis;
    let first = &recs[0];
    let last = recs.last().expect("at least one record");

    let mass_drift = (last.mass - first.mass).abs() / first.mass.abs().max(1e-300);
    rep.check("mass_relative_drift", mass_drift, Some((0.0, 1e-8)), "");

    for f in &a.fits {
        let s = series(recs, &f.quantity);
        match fit_power_law(&s, f.window) {
            Ok(fit) => {
                let name = format!("fit_exponent:{}", f.quantity);
                let interval = if f.exploratory { None } else { f.interval };
                let note = match (f.exploratory, f.interval) {
                    (true, Some((lo, hi))) => format!(
                        "exploratory; target interval [{lo}, {hi}] {}",
                        if fit.exponent >= lo && fit.exponent <= hi { "met" } else { "not met" }
                    ),
                    _ => String::new(),
                };
                rep.check(&name, fit.exponent, interval, &note);
                rep.check(&format!("fit_r_squared:{}", f.quantity), fit.r_squared, None, "");
                rep.power_law_fits.push((f.quantity.clone(), fit));
            }
            Err(e) => {
                if f.exploratory {
                    rep.check(&format!("fit_exponent:{}", f.quantity), f64::NAN, None, &e.to_string());
                } else {
                    rep.flag(&format!("fit_exponent:{}", f.quantity), false, &e.to_string());
                }
            }
        }
    }

    for r in &a.ratios {
        let s = series(recs, &r.quantity);
        let v0 = s.first().map(|p| p.1).unwrap_or(f64::NAN);
        let vt = s
            .iter()
            .find(|p| (p.0 - r.time).abs() <= 1e-9 * r.time.max(1.0))
            .map(|p| p.1)
            .unwrap_or(f64::NAN);
        rep.check(&format!("ratio:{}@{}", r.quantity, r.time), vt / v0, Some(r.interval), "");
    }

    if let Some(tol) = a.steady_tol {
        let mut worst = 0.0f64;
        for r in recs {
            for name in DiagnosticsRecord::column_names() {
                let (x, y) = (r.quantity(name).unwrap(), first.quantity(name).unwrap());
                if x.is_finite() && y.is_finite() {
                    worst = worst.max((x - y).abs());
                }
            }
            for (x, y) in r.level_measures.iter().zip(&first.level_measures) {
                worst = worst.max((x - y).abs());
            }
        }
        rep.check("steady_max_change", worst, Some((0.0, tol)), "");
    }

    if let Some(tol) = a.energy_monotone_tol {
        rep.check("energy_max_increase", max_energy_increase(recs), Some((0.0, tol)), "");
    }
    if let Some(tol) = a.energy_identity_tol {
        rep.check("energy_identity_rel_error", energy_identity_error(recs), Some((0.0, tol)), "");
    }
    if let Some(g) = a.h4_growth_max {
        let h0 = first.hs_theta_fluct[3];
        let worst = recs.iter().map(|r| r.hs_theta_fluct[3]).fold(0.0, f64::max);
        rep.check("h4_growth_factor", worst / h0, Some((0.0, g)), "");
    }

    if a.rearrangement {
        let d0 = first.dist_rearranged;
        let dn = last.dist_rearranged;
        rep.check("rearrangement_distance_final", dn, None, "");
        if let Some(m) = a.rearrangement_max_ratio {
            rep.check("rearrangement_distance_ratio", dn / d0, Some((0.0, m)), "");
        }
        // non-increasing over the final decade of times
        let t_end = last.time;
        let tail: Vec<f64> = recs
            .iter()
            .filter(|r| r.time >= 0.1 * t_end)
            .map(|r| r.dist_rearranged)
            .collect();
        let mono = tail.windows(2).all(|w| w[1] <= w[0] * (1.0 + 1e-9));
        rep.flag("rearrangement_distance_monotone_final_decade", mono, "");
        // level sets are transported; ρ*₀ must be equimeasurable with ρ₀
        let grid = out.final_state.grid().clone();
        let rho_t = out.final_state.rho();
        let rho_star = out.rearrangement.to_field(&grid);
        let cell = grid.cell_area();
        let (mut drift, mut star) = (0.0f64, 0.0f64);
        for (i, &lam) in sc.diagnostics.lambdas.iter().enumerate() {
            let m0 = first.level_measures[i];
            let allowed = 2.0 * cell * crossed_cells(&rho_t, lam).max(1) as f64;
            drift = drift.max((last.level_measures[i] - m0).abs() / allowed);
            star = star.max((level_measure(&rho_star, lam) - m0).abs() / cell);
        }
        rep.check("level_measure_drift_over_allowance", drift, Some((0.0, 1.0)), "");
        rep.check("rearrangement_equimeasurability_cells", star, Some((0.0, 2.0)), "");
    }

    if let Some(tol) = a.eigen_decay_tol {
        match sc.initial {
            InitialData::Eigen { k, n, .. } => {
                let grid = sc.build_grid()?;
                let rates = dense_clamped_eigenvalues(&grid, k as f64, n + 1)?;
                let rate = (k as f64).powi(2) / rates[n];
                let b = clamped_spectrum(k as i64, n + 1, Strip::Unit, grid.z_nodes())?[n].eigfun.clone();
                let a0 = modal_amplitude(&out.fields[0].1, k as usize, &b)?;
                let mut worst = 0.0f64;
                for (t, f) in &out.fields {
                    let at = modal_amplitude(f, k as usize, &b)?;
                    let expect = (-rate * t).exp();
                    worst = worst.max((at / a0 - expect).abs() / expect);
                }
                rep.check("discrete_decay_rate", rate, None, "");
                rep.check("eigen_amplitude_rel_error", worst, Some((0.0, tol)), "");
            }
            _ => rep.flag("eigen_amplitude_rel_error", false, "initial data is not an eigenfunction"),
        }
    }

    if let Some(bl) = &a.bl {
        let snaps: Vec<(f64, RealField)> = bl
            .times
            .iter()
            .filter_map(|t| {
                out.fields
                    .iter()
                    .find(|f| (f.0 - t).abs() <= 1e-9 * t.max(1.0))
                    .cloned()
            })
            .collect();
        let m = extract_bl(&snaps, bl.side)?;
        match m.width_fit() {
            Ok(f) => {
                rep.check("bl_width_exponent", f.exponent, bl.width_interval, "");
                rep.ladder_fits.push(("bl_width".into(), f));
            }
            Err(e) => rep.flag("bl_width_exponent", false, &e.to_string()),
        }
        let fa = m.amplitude_fit()?;
        rep.check("bl_amplitude_exponent", fa.exponent, bl.amplitude_interval, "");
        rep.ladder_fits.push(("bl_amplitude".into(), fa));
        let theta0 = sc.initial.build(&sc.build_grid()?)?;
        let mean0 = split_mean_fluct(&theta0).mean;
        let mut by_order = Vec::new();
        for order in [ExpansionOrder::Leading, ExpansionOrder::LeadingPlusOne] {
            let mut reports = Vec::new();
            for (i, (t, f)) in snaps.iter().enumerate() {
                let pred = assemble_bl_linear(&theta0, *t, bl.side, order)?;
                let w = m.widths[i].unwrap_or(0.25 * sc.grid.height / bl.strip_factor);
                reports.push(validate_prediction(f, *t, &pred, &mean0, bl.strip_factor * w)?);
            }
            by_order.push(reports);
        }
        let fit = residual_exponent(&by_order[0])?;
        let interval = bl.residual_min_exponent.map(|m| (m, f64::INFINITY));
        rep.check("bl_residual_exponent_leading", fit.exponent, interval, "");
        rep.ladder_fits.push(("bl_residual_leading".into(), fit));
        for (i, (l0, l1)) in by_order[0].iter().zip(&by_order[1]).enumerate() {
            rep.check(&format!("bl_residual_leading@{}", snaps[i].0), l0.l2_residual, None, "");
            rep.flag(
                &format!("bl_residual_ordering@{}", snaps[i].0),
                l1.l2_residual <= l0.l2_residual * (1.0 + 1e-12),
                "leading+1 residual not above leading residual",
            );
        }
    }
    Ok(rep)
}

/// Git-style content hash: SHA-256 of `"blob <len>\0" ++ bytes`, hex.
pub fn content_hash(bytes: &[u8]) -> String {
    let mut h = Sha256::new();
    h.update(format!("blob {}\0", bytes.len()).as_bytes());
    h.update(bytes);
    hex::encode(h.finalize())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ManifestFile {
    /// relative to the output directory
    pub path: String,
    pub bytes: u64,
    pub sha256: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub name: String,
    pub config_hash: String,
    pub scenario: Scenario,
    pub files: Vec<ManifestFile>,
}

/// Writes `manifest.json` listing `files` (with content hashes).
pub fn write_manifest(dir: &Path, sc: &Scenario, config_text: &str, files: &[PathBuf]) -> Result<PathBuf> {
    let mut entries = Vec::new();
    for f in files {
        let bytes = fs::read(f)?;
        let rel = f.strip_prefix(dir).unwrap_or(f);
        entries.push(ManifestFile {
            path: rel.to_string_lossy().replace('\\', "/"),
            bytes: bytes.len() as u64,
            sha256: content_hash(&bytes),
        });
    }
    let m = Manifest {
        name: sc.name.clone(),
        config_hash: content_hash(config_text.as_bytes()),
        scenario: sc.clone(),
        files: entries,
    };
    let p = dir.join("manifest.json");
    let json = serde_json::to_string_pretty(&m).map_err(|e| Error::Invalid(e.to_string()))?;
    fs::write(&p, json)?;
    Ok(p)
}

/// Result of executing a scenario end to end.
#[derive(Debug)]
pub struct Execution {
    pub output: RunOutput,
    pub report: ValidationReport,
    pub dir: PathBuf,
    pub manifest: PathBuf,
}

/// Runs a scenario, evaluates its analyses and writes `report.json`,
/// `scenario.toml` and the manifest into `dir`.
pub fn execute(sc: &Scenario, config_text: &str, dir: &Path) -> Result<Execution> {
    let spec = sc.run_spec()?;
    let output = run(&spec, Some(dir))?;
    let report = evaluate(sc, &output)?;
    let mut files = output.files.clone();
    let p = dir.join("report.json");
    fs::write(&p, report.to_json())?;
    files.push(p);
    let p = dir.join("scenario.toml");
    fs::write(&p, config_text)?;
    files.push(p);
    let manifest = write_manifest(dir, sc, config_text, &files)?;
    Ok(Execution {
        output,
        report,
        dir: dir.to_path_buf(),
        manifest,
    })
}
