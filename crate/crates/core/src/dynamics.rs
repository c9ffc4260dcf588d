//! Time integration of the transport–Stokes system and its linearization
//! about a stratified background, with diagnostics.

use std::collections::HashMap;
use std::f64::consts::PI;
use std::fs;
use std::path::{Path, PathBuf};

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::domain::{
    dz_apply, mixed_derivative, sobolev_norm, split_mean_fluct, write_snapshot, Axis, Grid, MeanFluctPair, RealField,
    SpectralField, VerticalProfile,
};
use crate::error::{Error, Result};
use crate::rearrange::{level_measure, vertical_rearrangement, RearrangementProfile};
use crate::stokes::{clamped_spectrum, max_linear_rate, velocity, StokesSolver, Strip};

/// Which equation is integrated.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum Mode {
    Linear,
    #[default]
    Nonlinear,
}

/// Time-step selection.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum DtSpec {
    Fixed(f64),
    Named(DtAuto),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DtAuto {
    Auto,
}

impl Default for DtSpec {
    fn default() -> Self {
        DtSpec::Named(DtAuto::Auto)
    }
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
fn default_diag() -> f64 {
    1.0
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StepperConfig {
    #[serde(default)]
    pub dt: DtSpec,
    #[serde(default = "default_cfl")]
    pub cfl: f64,
    /// accuracy cap on the automatic step
    #[serde(default = "default_dt_max")]
    pub dt_max: f64,
    #[serde(default)]
    pub mode: Mode,
    #[serde(default = "default_true")]
    pub dealias: bool,
    /// linear mode only: propagate with per-mode matrix exponentials
    #[serde(default)]
    pub exact_linear: bool,
    /// coefficient of the `∂_z⁶` filter on the fluctuation (0 disables)
    #[serde(default)]
    pub filter: f64,
    pub t_final: f64,
    /// 0 disables snapshots
    #[serde(default)]
    pub snapshot_every: f64,
    #[serde(default = "default_diag")]
    pub diag_every: f64,
    /// extra output times (merged with the regular cadence)
    #[serde(default)]
    pub output_times: Vec<f64>,
}

impl StepperConfig {
    pub fn new(mode: Mode, t_final: f64) -> Self {
        Self {
            dt: DtSpec::default(),
            cfl: default_cfl(),
            dt_max: default_dt_max(),
            mode,
            dealias: true,
            exact_linear: false,
            filter: 0.0,
            t_final,
            snapshot_every: 0.0,
            diag_every: default_diag(),
            output_times: Vec::new(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.t_final > 0.0) {
            return Err(Error::Config(format!("t_final must be positive (got {})", self.t_final)));
        }
        if !(self.cfl > 0.0 && self.cfl <= 1.0) {
            return Err(Error::Config(format!("cfl must lie in (0, 1] (got {})", self.cfl)));
        }
        if let DtSpec::Fixed(dt) = self.dt {
            if !(dt > 0.0) {
                return Err(Error::Config(format!("dt must be positive (got {dt})")));
            }
        }
        if !(self.dt_max > 0.0) {
            return Err(Error::Config(format!("dt_max must be positive (got {})", self.dt_max)));
        }
        if !(self.diag_every > 0.0) {
            return Err(Error::Config(format!("diag_every must be positive (got {})", self.diag_every)));
        }
        if self.snapshot_every < 0.0 || self.filter < 0.0 {
            return Err(Error::Config("snapshot_every and filter must be nonnegative".into()));
        }
        if self.exact_linear && self.mode != Mode::Linear {
            return Err(Error::Config("exact_linear requires mode = \"linear\"".into()));
        }
        Ok(())
    }
}

/// Stationary stratified background `Θ(z)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum Background {
    /// `Θ = 1 − z`
    #[default]
    Affine,
    /// monotone cubic interpolation of `(z, Θ)` samples
    Tabulated { z: Vec<f64>, values: Vec<f64> },
}

impl Background {
    /// `(Θ, Θ')` sampled on the grid.
    pub fn sample(&self, grid: &Grid) -> Result<(VerticalProfile, VerticalProfile)> {
        match self {
            Background::Affine => Ok((
                VerticalProfile::from_fn(grid, |z| 1.0 - z),
                VerticalProfile::from_fn(grid, |_| -1.0),
            )),
            Background::Tabulated { z, values } => {
                let p = Pchip::new(z, values)?;
                let zs = grid.z_nodes();
                if zs[0] < z[0] - 1e-12 || zs[zs.len() - 1] > z[z.len() - 1] + 1e-12 {
                    return Err(Error::Config("tabulated background does not cover the channel".into()));
                }
                Ok((
                    VerticalProfile::from_fn(grid, |x| p.eval(x).0),
                    VerticalProfile::from_fn(grid, |x| p.eval(x).1),
                ))
            }
        }
    }
}

/// Monotone piecewise-cubic Hermite interpolant (Fritsch–Carlson).
struct Pchip {
    x: Vec<f64>,
    y: Vec<f64>,
    d: Vec<f64>,
}

impl Pchip {
    fn new(x: &[f64], y: &[f64]) -> Result<Self> {
        let n = x.len();
        if n < 2 || y.len() != n || x.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(Error::Config(
                "tabulated profile needs >= 2 strictly increasing z samples with matching values".into(),
            ));
        }
        let h: Vec<f64> = x.windows(2).map(|w| w[1] - w[0]).collect();
        let del: Vec<f64> = (0..n - 1).map(|i| (y[i + 1] - y[i]) / h[i]).collect();
        let mut d = vec![0.0; n];
        if n == 2 {
            d = vec![del[0]; 2];
        } else {
            for i in 1..n - 1 {
                if del[i - 1] * del[i] > 0.0 {
                    let w1 = 2.0 * h[i] + h[i - 1];
                    let w2 = h[i] + 2.0 * h[i - 1];
                    d[i] = (w1 + w2) / (w1 / del[i - 1] + w2 / del[i]);
                }
            }
            let end = |h0: f64, h1: f64, d0: f64, d1: f64| {
                let v = ((2.0 * h0 + h1) * d0 - h0 * d1) / (h0 + h1);
                if v * d0 <= 0.0 {
                    0.0
                } else if d0 * d1 <= 0.0 && v.abs() > 3.0 * d0.abs() {
                    3.0 * d0
                } else {
                    v
                }
            };
            d[0] = end(h[0], h[1], del[0], del[1]);
            d[n - 1] = end(h[n - 2], h[n - 3], del[n - 2], del[n - 3]);
        }
        Ok(Self {
            x: x.to_vec(),
            y: y.to_vec(),
            d,
        })
    }

    fn eval(&self, xv: f64) -> (f64, f64) {
        let n = self.x.len();
        let i = self.x.partition_point(|&a| a <= xv).clamp(1, n - 1) - 1;
        let h = self.x[i + 1] - self.x[i];
        let t = (xv - self.x[i]) / h;
        let (y0, y1, d0, d1) = (self.y[i], self.y[i + 1], self.d[i], self.d[i + 1]);
        let h00 = 2.0 * t.powi(3) - 3.0 * t * t + 1.0;
        let h10 = t.powi(3) - 2.0 * t * t + t;
        let h01 = -2.0 * t.powi(3) + 3.0 * t * t;
        let h11 = t.powi(3) - t * t;
        let v = h00 * y0 + h10 * h * d0 + h01 * y1 + h11 * h * d1;
        let dv = ((6.0 * t * t - 6.0 * t) * y0 + (3.0 * t * t - 4.0 * t + 1.0) * h * d0 + (-6.0 * t * t + 6.0 * t) * y1
            + (3.0 * t * t - 2.0 * t) * h * d1)
            / h;
        (v, dv)
    }
}

fn default_eps() -> f64 {
    0.01
}
fn default_one() -> u32 {
    1
}
fn default_p() -> u32 {
    3
}

/// Named initial perturbations `θ₀`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum InitialData {
    /// `θ₀ = 0`
    Stratified,
    /// `ε c sin(m x) z^p (H − z)^p` with `c` normalizing the vertical factor
    /// to unit maximum; vanishes with `p − 1` derivatives at the walls
    Bump {
        #[serde(default = "default_eps")]
        eps: f64,
        #[serde(default = "default_one")]
        m: u32,
        #[serde(default = "default_p")]
        p: u32,
    },
    /// `ε cos(m x)`, nonzero wall traces
    WallTrace {
        #[serde(default = "default_eps")]
        eps: f64,
        #[serde(default = "default_one")]
        m: u32,
    },
    /// `ε b_{n,k}(z) cos(k x)` with `b` a unit-norm clamped eigenfunction
    Eigen {
        #[serde(default = "default_eps")]
        eps: f64,
        k: u32,
        #[serde(default)]
        n: usize,
    },
    /// band-limited random data scaled to `max |θ₀| = ε`; with `clamped`
    /// the vertical factor carries `z²(H − z)²`
    Random {
        #[serde(default = "default_eps")]
        eps: f64,
        k_max: u32,
        n_max: u32,
        seed: u64,
        #[serde(default)]
        clamped: bool,
    },
}

impl InitialData {
    pub fn build(&self, grid: &Grid) -> Result<RealField> {
        let h = grid.height;
        Ok(match *self {
            InitialData::Stratified => RealField::zeros(grid.clone()),
            InitialData::Bump { eps, m, p } => {
                let c = (4.0 / (h * h)).powi(p as i32);
                RealField::from_fn(grid.clone(), |x, z| {
                    eps * c * (m as f64 * x).sin() * (z * (h - z)).powi(p as i32)
                })
            }
            InitialData::WallTrace { eps, m } => RealField::from_fn(grid.clone(), |x, _| eps * (m as f64 * x).cos()),
            InitialData::Eigen { eps, k, n } => {
                if (h - 1.0).abs() > 1e-12 {
                    return Err(Error::Unsupported("eigenfunction data on a channel of height != 1".into()));
                }
                let sp = clamped_spectrum(k as i64, n + 1, Strip::Unit, grid.z_nodes())?;
                let b = &sp[n].eigfun;
                let nz = grid.nz;
                let mut f = RealField::zeros(grid.clone());
                for ix in 0..grid.nx {
                    let cx = (k as f64 * grid.dx() * ix as f64).cos();
                    for iz in 0..nz {
                        f.set(ix, iz, eps * cx * b[iz]);
                    }
                }
                f
            }
            InitialData::Random {
                eps,
                k_max,
                n_max,
                seed,
                clamped,
            } => {
                if k_max == 0 || n_max == 0 {
                    return Err(Error::Config("random data needs k_max, n_max >= 1".into()));
                }
                if k_max as usize >= grid.nx / 3 {
                    return Err(Error::Config(format!(
                        "random data k_max = {k_max} not resolved on nx = {}",
                        grid.nx
                    )));
                }
                let mut rng = ChaCha8Rng::seed_from_u64(seed);
                let mut coef = Vec::new();
                for k in 1..=k_max {
                    for n in 1..=n_max {
                        let a: f64 = StandardNormal.sample(&mut rng);
                        let b: f64 = StandardNormal.sample(&mut rng);
                        coef.push((k as f64, n as f64, a, b));
                    }
                }
                let f = RealField::from_fn(grid.clone(), |x, z| {
                    let env = if clamped { (z * (h - z)).powi(2) } else { 1.0 };
                    env * coef
                        .iter()
                        .map(|&(k, n, a, b)| (a * (k * x).cos() + b * (k * x).sin()) * (n * PI * z / h).sin())
                        .sum::<f64>()
                });
                let m = f.max_abs();
                if m > 0.0 {
                    f.scaled(eps / m)
                } else {
                    f
                }
            }
        })
    }
}

/// Evolving state: `ρ = Θ + θ`.
#[derive(Debug, Clone)]
pub struct State {
    pub time: f64,
    /// full perturbation θ
    pub theta: RealField,
    /// stream function of the current fluctuation
    pub psi: RealField,
    pub background: VerticalProfile,
    pub background_dz: VerticalProfile,
}

impl State {
    pub fn new(solver: &StokesSolver, background: &Background, theta: RealField) -> Result<Self> {
        let (bg, bg_dz) = background.sample(theta.grid())?;
        let psi = solver.solve_stream(&theta)?;
        Ok(Self {
            time: 0.0,
            theta,
            psi,
            background: bg,
            background_dz: bg_dz,
        })
    }

    pub fn grid(&self) -> &Grid {
        self.theta.grid()
    }

    pub fn rho(&self) -> RealField {
        self.theta.axpy(1.0, &self.background.to_field(self.grid()))
    }

    pub fn theta_pair(&self) -> MeanFluctPair {
        split_mean_fluct(&self.theta)
    }
}

/// Per-mode exact propagator of the linear dynamics
/// `∂_tθ̂_k = −Θ'(z) (ik) ψ̂_k`, `A_k ψ̂_k = ik θ̂_k`.
#[derive(Debug, Clone)]
pub struct ExactLinear {
    generators: Vec<Option<DMatrix<f64>>>,
    cache: HashMap<(usize, u64), DMatrix<f64>>,
}

impl ExactLinear {
    pub fn new(solver: &StokesSolver, background_dz: &VerticalProfile) -> Self {
        let grid = solver.grid();
        let half = grid.nx / 2;
        let generators = (0..grid.n_modes())
            .map(|k| {
                if k == 0 || k == half {
                    return None;
                }
                let mut m = solver.l_matrix(k);
                for (i, g) in background_dz.values.iter().enumerate() {
                    let s = -g;
                    m.row_mut(i).scale_mut(s);
                }
                Some(m)
            })
            .collect();
        Self {
            generators,
            cache: HashMap::new(),
        }
    }

    /// Generator of mode `k` (None for `k = 0` and the Nyquist mode).
    pub fn generator(&self, k: usize) -> Option<&DMatrix<f64>> {
        self.generators[k].as_ref()
    }

    fn propagator(&mut self, k: usize, dt: f64) -> Option<&DMatrix<f64>> {
        let g = self.generators[k].as_ref()?;
        let key = (k, dt.to_bits());
        if !self.cache.contains_key(&key) {
            if self.cache.len() > 4 * self.generators.len() {
                self.cache.clear();
            }
            self.cache.insert(key, (g * dt).exp());
        }
        self.cache.get(&key)
    }

    /// Advances `theta` by `dt` exactly (per mode).
    pub fn advance(&mut self, theta: &RealField, dt: f64) -> RealField {
        let mut spec = theta.to_spectral();
        let nz = theta.grid().nz;
        for k in 0..self.generators.len() {
            let Some(p) = self.propagator(k, dt) else {
                continue;
            };
            let col = spec.column_mut(k);
            let re = DVector::from_iterator(nz, col.iter().map(|c| c.re));
            let im = DVector::from_iterator(nz, col.iter().map(|c| c.im));
            let (re, im) = (p * re, p * im);
            for i in 0..nz {
                col[i] = Complex64::new(re[i], im[i]);
            }
        }
        spec.to_real()
    }
}

/// Explicit SSP-RK3 integrator (or exact per-mode propagation in linear
/// mode).
#[derive(Debug, Clone)]
pub struct Stepper {
    pub solver: StokesSolver,
    pub config: StepperConfig,
    linear_cap: f64,
    exact: Option<ExactLinear>,
}

impl Stepper {
    pub fn new(grid: &Grid, config: StepperConfig) -> Result<Self> {
        config.validate()?;
        let solver = StokesSolver::new(grid)?;
        let rate = max_linear_rate(grid.nx / 2, grid.height)?;
        Ok(Self {
            solver,
            config,
            linear_cap: 0.5 / rate,
            exact: None,
        })
    }

    /// Time-derivative of θ and the stream function of θ′.
    pub fn rhs(&self, theta: &RealField, bg_dz: &VerticalProfile) -> Result<(RealField, RealField)> {
        let grid = theta.grid();
        let mut spec = theta.to_spectral();
        if self.config.dealias {
            spec.dealias();
        }
        let psi_hat = self.solver.solve_stream_spectral(&spec);
        let psi = psi_hat.to_real();
        let mut u2_hat = psi_hat.clone();
        crate::domain::dx_spectral(&mut u2_hat, 1);
        let u2 = u2_hat.to_real();
        let nz = grid.nz;
        let mut r = u2.clone();
        for col in r.values_mut().chunks_mut(nz) {
            for (v, g) in col.iter_mut().zip(&bg_dz.values) {
                *v *= -g;
            }
        }
        if self.config.mode == Mode::Nonlinear {
            let th = if self.config.dealias { spec.to_real() } else { theta.clone() };
            let u1 = dz_apply(&psi, grid.z_stencil(1)?).scaled(-1.0);
            let f1 = u1.mul(&th);
            let f2 = u2.mul(&th);
            let mut f1_hat = f1.to_spectral();
            crate::domain::dx_spectral(&mut f1_hat, 1);
            let df2 = dz_apply(&f2, grid.z_stencil(1)?);
            let mut div = f1_hat;
            let df2_hat = df2.to_spectral();
            for k in 0..grid.n_modes() {
                let src = df2_hat.column(k).to_vec();
                for (c, s) in div.column_mut(k).iter_mut().zip(src) {
                    *c += s;
                }
            }
            if self.config.dealias {
                div.dealias();
            }
            r = r.axpy(-1.0, &div.to_real());
        }
        if self.config.filter > 0.0 {
            let pair = split_mean_fluct(theta);
            let d6 = mixed_derivative(&pair.fluct, 0, 6)?;
            r = r.axpy(self.config.filter, &d6);
        }
        Ok((r, psi))
    }

    /// Automatic step from the CFL condition and the caps.
    pub fn auto_dt(&self, state: &State) -> Result<f64> {
        let grid = state.grid();
        let (u1, u2) = velocity(&state.psi)?;
        let (a, b) = (u1.max_abs(), u2.max_abs());
        let mut dt = f64::INFINITY;
        if a > 0.0 {
            dt = dt.min(grid.dx() / a);
        }
        if b > 0.0 {
            dt = dt.min(grid.dz() / b);
        }
        let dt = (self.config.cfl * dt).min(self.config.dt_max).min(self.linear_cap);
        Ok(dt.max(1e-6))
    }

    pub fn dt_for(&self, state: &State) -> Result<f64> {
        match self.config.dt {
            DtSpec::Fixed(dt) => Ok(dt.min(self.linear_cap)),
            DtSpec::Named(DtAuto::Auto) => self.auto_dt(state),
        }
    }

    /// One SSP-RK3 step of size `dt`.
    pub fn step(&self, state: &mut State, dt: f64) -> Result<()> {
        let bg = state.background_dz.clone();
        let th0 = &state.theta;
        let (r0, _) = self.rhs(th0, &bg)?;
        let th1 = th0.axpy(dt, &r0);
        let (r1, _) = self.rhs(&th1, &bg)?;
        let th2 = th0.scaled(0.75).axpy(0.25, &th1.axpy(dt, &r1));
        let (r2, _) = self.rhs(&th2, &bg)?;
        let mut th3 = th0.scaled(1.0 / 3.0).axpy(2.0 / 3.0, &th2.axpy(dt, &r2));
        if self.config.dealias {
            let mut s = th3.to_spectral();
            s.dealias();
            th3 = s.to_real();
        }
        let t_new = state.time + dt;
        if !th3.is_finite() {
            return Err(Error::BlowUp {
                time: state.time,
                what: format!("non-finite density perturbation after step to t = {t_new}"),
            });
        }
        state.psi = self.solver.solve_stream(&th3)?;
        state.theta = th3;
        state.time = t_new;
        Ok(())
    }

    /// Advances the state to `t_target`, by RK3 sub-steps or exactly.
    pub fn advance_to(&mut self, state: &mut State, t_target: f64) -> Result<()> {
        if self.config.exact_linear {
            let dt = t_target - state.time;
            if dt > 0.0 {
                if self.exact.is_none() {
                    self.exact = Some(ExactLinear::new(&self.solver, &state.background_dz));
                }
                let th = self.exact.as_mut().unwrap().advance(&state.theta, dt);
                if !th.is_finite() {
                    return Err(Error::BlowUp {
                        time: state.time,
                        what: format!("non-finite density perturbation at t = {t_target}"),
                    });
                }
                state.psi = self.solver.solve_stream(&th)?;
                state.theta = th;
                state.time = t_target;
            }
            return Ok(());
        }
        while state.time < t_target - 1e-12 * t_target.abs().max(1.0) {
            let dt = self.dt_for(state)?.min(t_target - state.time);
            self.step(state, dt)?;
        }
        state.time = t_target;
        Ok(())
    }
}

/// Diagnostics of one state.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DiagnosticsRecord {
    pub time: f64,
    /// `E = ∫ z ρ`
    pub energy: f64,
    /// `‖∇u‖²`
    pub dissipation: f64,
    pub l2_theta_fluct: f64,
    /// `‖θ′‖_{H^s}` for `s = 1..=4`
    pub hs_theta_fluct: [f64; 4],
    pub l2_dx3_fluct: f64,
    /// `‖∂ₓθ′‖_{H⁴}`
    pub h4_dx_fluct: f64,
    /// `‖∂_z θ̄‖_{H²(0, H)}`
    pub h2_g: f64,
    pub mass: f64,
    pub l2_rho: f64,
    pub level_measures: Vec<f64>,
    pub min_dz_rho: f64,
    /// `‖ρ − ρ*₀‖` against the rearrangement of the initial density (NaN if
    /// not supplied)
    pub dist_rearranged: f64,
}

pub fn diagnose(state: &State, lambdas: &[f64], rearranged: Option<&RearrangementProfile>) -> Result<DiagnosticsRecord> {
    let grid = state.grid().clone();
    let rho = state.rho();
    let pair = state.theta_pair();
    let fl = &pair.fluct;
    let (u1, u2) = velocity(&state.psi)?;
    let mut dissipation = 0.0;
    for u in [&u1, &u2] {
        dissipation += mixed_derivative(u, 1, 0)?.l2_norm().powi(2);
        dissipation += mixed_derivative(u, 0, 1)?.l2_norm().powi(2);
    }
    let z_field = RealField::from_fn(grid.clone(), |_, z| z);
    let mut hs = [0.0; 4];
    for (s, slot) in hs.iter_mut().enumerate() {
        *slot = sobolev_norm(fl, s + 1)?;
    }
    let dx = mixed_derivative(fl, 1, 0)?;
    let g = pair.mean.derivative(&grid, 1)?;
    let dz_rho = mixed_derivative(&rho, 0, 1)?;
    let dist = match rearranged {
        Some(r) => rho.axpy(-1.0, &r.to_field(&grid)).l2_norm(),
        None => f64::NAN,
    };
    Ok(DiagnosticsRecord {
        time: state.time,
        energy: rho.inner(&z_field),
        dissipation,
        l2_theta_fluct: fl.l2_norm(),
        hs_theta_fluct: hs,
        l2_dx3_fluct: mixed_derivative(fl, 3, 0)?.l2_norm(),
        h4_dx_fluct: sobolev_norm(&dx, 4)?,
        h2_g: g.h_norm(&grid, 2)?,
        mass: rho.integral(),
        l2_rho: rho.l2_norm(),
        level_measures: lambdas.iter().map(|&l| level_measure(&rho, l)).collect(),
        min_dz_rho: dz_rho.min(),
        dist_rearranged: dist,
    })
}

/// Time series as CSV with a header of field names and units (all
/// quantities are nondimensional).
pub fn timeseries_csv(records: &[DiagnosticsRecord], lambdas: &[f64]) -> String {
    let mut out = String::from(
        "time[-],energy[-],dissipation[-],l2_theta_fluct[-],h1_theta_fluct[-],h2_theta_fluct[-],\
h3_theta_fluct[-],h4_theta_fluct[-],l2_dx3_fluct[-],h4_dx_fluct[-],h2_g[-],mass[-],l2_rho[-],min_dz_rho[-],\
dist_rearranged[-]",
    );
    for l in lambdas {
        out.push_str(&format!(",level_{l}[area]"));
    }
    out.push('\n');
    for r in records {
        let mut row = vec![
            r.time,
            r.energy,
            r.dissipation,
            r.l2_theta_fluct,
            r.hs_theta_fluct[0],
            r.hs_theta_fluct[1],
            r.hs_theta_fluct[2],
            r.hs_theta_fluct[3],
            r.l2_dx3_fluct,
            r.h4_dx_fluct,
            r.h2_g,
            r.mass,
            r.l2_rho,
            r.min_dz_rho,
            r.dist_rearranged,
        ];
        row.extend(&r.level_measures);
        let cells: Vec<String> = row.iter().map(|v| format!("{v:.17e}")).collect();
        out.push_str(&cells.join(","));
        out.push('\n');
    }
    out
}

/// Everything needed for one run.
#[derive(Debug, Clone)]
pub struct RunSpec {
    pub grid: Grid,
    pub background: Background,
    pub initial: InitialData,
    pub stepper: StepperConfig,
    pub lambdas: Vec<f64>,
}

/// Results of a run.
#[derive(Debug, Clone)]
pub struct RunOutput {
    pub records: Vec<DiagnosticsRecord>,
    /// `(time, path)` of written snapshots of θ
    pub snapshots: Vec<(f64, PathBuf)>,
    /// in-memory θ at every output time
    pub fields: Vec<(f64, RealField)>,
    pub final_state: State,
    pub rearrangement: RearrangementProfile,
    pub files: Vec<PathBuf>,
}

fn event_times(cfg: &StepperConfig) -> Vec<(f64, bool, bool)> {
    let t_end = cfg.t_final;
    let mut ev: Vec<(f64, bool, bool)> = Vec::new();
    let n_diag = (t_end / cfg.diag_every + 1e-9).floor() as usize;
    for i in 1..=n_diag {
        ev.push((i as f64 * cfg.diag_every, true, false));
    }
    if cfg.snapshot_every > 0.0 {
        let n_snap = (t_end / cfg.snapshot_every + 1e-9).floor() as usize;
        for i in 1..=n_snap {
            ev.push((i as f64 * cfg.snapshot_every, false, true));
        }
    }
    for &t in &cfg.output_times {
        if t > 0.0 && t <= t_end {
            ev.push((t, true, true));
        }
    }
    ev.push((t_end, true, false));
    ev.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap());
    // merge coincident times
    let mut merged: Vec<(f64, bool, bool)> = Vec::new();
    for e in ev {
        match merged.last_mut() {
            Some(last) if (last.0 - e.0).abs() <= 1e-9 * e.0.max(1.0) => {
                last.1 |= e.1;
                last.2 |= e.2;
            }
            _ => merged.push(e),
        }
    }
    merged
}

/// Integrates a run, recording diagnostics at the diagnostic cadence and
/// writing θ snapshots into `out_dir` at the snapshot cadence. On blow-up the
/// partial time series is written before the error is returned.
pub fn run(spec: &RunSpec, out_dir: Option<&Path>) -> Result<RunOutput> {
    let mut stepper = Stepper::new(&spec.grid, spec.stepper.clone())?;
    let theta0 = spec.initial.build(&spec.grid)?;
    let mut state = State::new(&stepper.solver, &spec.background, theta0)?;
    let rearr = vertical_rearrangement(&state.rho());
    if state.background_dz.values.iter().any(|&g| g >= 0.0) {
        log::warn!("background profile is not strictly decreasing; stability is not expected");
    }
    let mut records = vec![diagnose(&state, &spec.lambdas, Some(&rearr))?];
    let mut fields = vec![(0.0, state.theta.clone())];
    let mut snapshots = Vec::new();
    let mut files = Vec::new();
    if let Some(dir) = out_dir {
        fs::create_dir_all(dir)?;
    }
    let write_snap = |dir: &Path, idx: usize, st: &State, snaps: &mut Vec<(f64, PathBuf)>| -> Result<()> {
        fs::create_dir_all(dir.join("snapshots"))?;
        let p = dir.join("snapshots").join(format!("theta_{idx:05}.stlb"));
        write_snapshot(&p, &st.theta, st.time)?;
        snaps.push((st.time, p));
        Ok(())
    };
    if let (Some(dir), true) = (out_dir, spec.stepper.snapshot_every > 0.0) {
        write_snap(dir, 0, &state, &mut snapshots)?;
    }
    let mut result = Ok(());
    for (t, diag, snap) in event_times(&spec.stepper) {
        if let Err(e) = stepper.advance_to(&mut state, t) {
            result = Err(e);
            break;
        }
        if diag {
            records.push(diagnose(&state, &spec.lambdas, Some(&rearr))?);
        }
        if diag || snap {
            fields.push((t, state.theta.clone()));
        }
        if let (Some(dir), true) = (out_dir, snap) {
            let idx = snapshots.len();
            write_snap(dir, idx, &state, &mut snapshots)?;
        }
    }
    if let Some(dir) = out_dir {
        let p = dir.join("timeseries.csv");
        fs::write(&p, timeseries_csv(&records, &spec.lambdas))?;
        files.push(p);
        let p = dir.join("rearrangement.csv");
        fs::write(&p, rearr.to_csv())?;
        files.push(p);
        files.extend(snapshots.iter().map(|s| s.1.clone()));
    }
    result?;
    Ok(RunOutput {
        records,
        snapshots,
        fields,
        final_state: state,
        rearrangement: rearr,
        files,
    })
}

/// Spectral helper: the fluctuation of a field with modes above `k_max`
/// removed.
pub fn band_limit(f: &RealField, k_max: usize) -> RealField {
    let mut s: SpectralField = f.to_spectral();
    for k in (k_max + 1)..f.grid().n_modes() {
        for c in s.column_mut(k) {
            *c = Complex64::new(0.0, 0.0);
        }
    }
    s.to_real()
}

/// Derivative along an axis (re-exported convenience).
pub fn derivative(f: &RealField, axis: Axis, order: usize) -> Result<RealField> {
    crate::domain::differentiate(f, axis, order)
}
