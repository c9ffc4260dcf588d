//! Channel grid `T × (0, height)`, real and Fourier-in-x field storage,
//! derivatives, mean/fluctuation splitting and discrete Sobolev norms.

use std::f64::consts::PI;
use std::fmt;
use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;
use std::sync::{Arc, Mutex, OnceLock};

use num_complex::Complex64;
use rustfft::{Fft, FftPlanner};

use crate::error::{Error, Result};
use crate::linalg::Stencil;

/// Largest derivative order with a dedicated finite-difference operator.
pub const MAX_DERIVATIVE: usize = 4;

struct GridCache {
    stencils: [OnceLock<Stencil>; 6],
}

/// Uniform channel grid: `nx` Fourier points on `[0, 2π)`, `nz` nodes on
/// `[0, height]` including both walls.
#[derive(Clone)]
pub struct Grid {
    pub nx: usize,
    pub nz: usize,
    pub height: f64,
    z: Arc<[f64]>,
    cache: Arc<GridCache>,
}

impl fmt::Debug for Grid {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Grid")
            .field("nx", &self.nx)
            .field("nz", &self.nz)
            .field("height", &self.height)
            .finish()
    }
}

impl PartialEq for Grid {
    fn eq(&self, other: &Self) -> bool {
        self.nx == other.nx && self.nz == other.nz && self.height == other.height
    }
}

impl Grid {
    pub fn new(nx: usize, nz: usize, height: f64) -> Result<Self> {
        if nx < 8 || nx % 2 != 0 {
            return Err(Error::Config(format!("nx must be even and >= 8 (got {nx})")));
        }
        if nz < 9 {
            return Err(Error::Config(format!("nz must be >= 9 (got {nz})")));
        }
        if !(height > 0.0 && height.is_finite()) {
            return Err(Error::Config(format!("height must be positive (got {height})")));
        }
        let dz = height / (nz - 1) as f64;
        let mut z: Vec<f64> = (0..nz).map(|i| i as f64 * dz).collect();
        z[nz - 1] = height;
        Ok(Self {
            nx,
            nz,
            height,
            z: z.into(),
            cache: Arc::new(GridCache {
                stencils: Default::default(),
            }),
        })
    }

    pub fn z_nodes(&self) -> &[f64] {
        &self.z
    }

    pub fn x_nodes(&self) -> Vec<f64> {
        (0..self.nx).map(|i| self.dx() * i as f64).collect()
    }

    pub fn dx(&self) -> f64 {
        2.0 * PI / self.nx as f64
    }

    pub fn dz(&self) -> f64 {
        self.height / (self.nz - 1) as f64
    }

    /// Area of the periodic channel.
    pub fn area(&self) -> f64 {
        2.0 * PI * self.height
    }

    pub fn cell_area(&self) -> f64 {
        self.dx() * self.dz()
    }

    /// Number of stored Fourier modes (`k = 0..=nx/2`).
    pub fn n_modes(&self) -> usize {
        self.nx / 2 + 1
    }

    /// Quadrature weights in z.
    pub fn z_weights(&self) -> Vec<f64> {
        // trapezoid with Gregory end corrections (exact for cubics)
        let dz = self.dz();
        let n = self.nz;
        let mut w = vec![dz; n];
        for (i, c) in [3.0 / 8.0, 7.0 / 6.0, 23.0 / 24.0].into_iter().enumerate() {
            w[i] = c * dz;
            w[n - 1 - i] = c * dz;
        }
        w
    }

    /// Fourth-order z-derivative operator of the given order (1..=6).
    pub fn z_stencil(&self, order: usize) -> Result<&Stencil> {
        if order == 0 || order > 6 {
            return Err(Error::Unsupported(format!("z-derivative of order {order}")));
        }
        let needed = order + 4;
        if self.nz < needed {
            return Err(Error::Config(format!(
                "nz = {} too small for a z-derivative of order {order}",
                self.nz
            )));
        }
        Ok(self.cache.stencils[order - 1].get_or_init(|| Stencil::fourth_order(&self.z, order)))
    }
}

/// Axis selector for derivatives.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Axis {
    X,
    Z,
}

/// Field sampled on the grid; `values[ix * nz + iz]`.
#[derive(Debug, Clone)]
pub struct RealField {
    grid: Grid,
    values: Vec<f64>,
}

impl RealField {
    pub fn zeros(grid: Grid) -> Self {
        let n = grid.nx * grid.nz;
        Self {
            grid,
            values: vec![0.0; n],
        }
    }

    pub fn from_fn<F: Fn(f64, f64) -> f64>(grid: Grid, f: F) -> Self {
        let mut values = Vec::with_capacity(grid.nx * grid.nz);
        for ix in 0..grid.nx {
            let x = grid.dx() * ix as f64;
            for &z in grid.z_nodes() {
                values.push(f(x, z));
            }
        }
        Self { grid, values }
    }

    pub fn from_values(grid: Grid, values: Vec<f64>) -> Result<Self> {
        if values.len() != grid.nx * grid.nz {
            return Err(Error::Config(format!(
                "field has {} values, grid expects {}x{}",
                values.len(),
                grid.nx,
                grid.nz
            )));
        }
        Ok(Self { grid, values })
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    pub fn get(&self, ix: usize, iz: usize) -> f64 {
        self.values[ix * self.grid.nz + iz]
    }

    pub fn set(&mut self, ix: usize, iz: usize, v: f64) {
        let nz = self.grid.nz;
        self.values[ix * nz + iz] = v;
    }

    /// Column at fixed x index (all z).
    pub fn column(&self, ix: usize) -> &[f64] {
        let nz = self.grid.nz;
        &self.values[ix * nz..(ix + 1) * nz]
    }

    pub fn is_finite(&self) -> bool {
        self.values.iter().all(|v| v.is_finite())
    }

    pub fn max_abs(&self) -> f64 {
        self.values.iter().fold(0.0, |a, v| a.max(v.abs()))
    }

    pub fn min(&self) -> f64 {
        self.values.iter().copied().fold(f64::INFINITY, f64::min)
    }

    pub fn max(&self) -> f64 {
        self.values.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn scaled(&self, a: f64) -> Self {
        Self {
            grid: self.grid.clone(),
            values: self.values.iter().map(|v| a * v).collect(),
        }
    }

    /// `self + a * other`.
    pub fn axpy(&self, a: f64, other: &RealField) -> Self {
        debug_assert_eq!(self.grid, other.grid);
        Self {
            grid: self.grid.clone(),
            values: self.values.iter().zip(&other.values).map(|(u, v)| u + a * v).collect(),
        }
    }

    /// Pointwise map.
    pub fn map<F: Fn(f64) -> f64>(&self, f: F) -> Self {
        Self {
            grid: self.grid.clone(),
            values: self.values.iter().map(|&v| f(v)).collect(),
        }
    }

    /// Pointwise product.
    pub fn mul(&self, other: &RealField) -> Self {
        Self {
            grid: self.grid.clone(),
            values: self.values.iter().zip(&other.values).map(|(u, v)| u * v).collect(),
        }
    }

    /// `∫_Ω f` with exact periodic quadrature in x and `z_weights` in z.
    pub fn integral(&self) -> f64 {
        let w = self.grid.z_weights();
        let dx = self.grid.dx();
        self.values
            .chunks(self.grid.nz)
            .map(|col| col.iter().zip(&w).map(|(v, w)| v * w).sum::<f64>())
            .sum::<f64>()
            * dx
    }

    /// `∫_Ω f g`.
    pub fn inner(&self, other: &RealField) -> f64 {
        self.mul(other).integral()
    }

    pub fn l2_norm(&self) -> f64 {
        self.inner(self).max(0.0).sqrt()
    }

    /// L² norm restricted to `z ∈ [z0, z1]` (trapezoid over included nodes).
    pub fn l2_norm_strip(&self, z0: f64, z1: f64) -> f64 {
        let z = self.grid.z_nodes();
        let idx: Vec<usize> = (0..self.grid.nz).filter(|&i| z[i] >= z0 - 1e-12 && z[i] <= z1 + 1e-12).collect();
        if idx.len() < 2 {
            return 0.0;
        }
        let mut s = 0.0;
        for ix in 0..self.grid.nx {
            let col = self.column(ix);
            for w in idx.windows(2) {
                let (a, b) = (w[0], w[1]);
                s += 0.5 * (col[a] * col[a] + col[b] * col[b]) * (z[b] - z[a]);
            }
        }
        (s * self.grid.dx()).sqrt()
    }

    pub fn to_spectral(&self) -> SpectralField {
        to_spectral(self)
    }
}

/// Fourier-in-x representation: modes `k = 0..=nx/2` stored, negative modes
/// implied by Hermitian symmetry. Coefficients are normalized so that
/// `f(x) = Σ_k f̂_k e^{ikx}`.
#[derive(Debug, Clone)]
pub struct SpectralField {
    grid: Grid,
    // modes[k * nz + iz]
    modes: Vec<Complex64>,
}

impl SpectralField {
    pub fn zeros(grid: Grid) -> Self {
        let n = grid.n_modes() * grid.nz;
        Self {
            grid,
            modes: vec![Complex64::new(0.0, 0.0); n],
        }
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn column(&self, k: usize) -> &[Complex64] {
        let nz = self.grid.nz;
        &self.modes[k * nz..(k + 1) * nz]
    }

    pub fn column_mut(&mut self, k: usize) -> &mut [Complex64] {
        let nz = self.grid.nz;
        &mut self.modes[k * nz..(k + 1) * nz]
    }

    /// Mutable access to all stored columns, in order of `k`.
    pub fn columns_mut(&mut self) -> std::slice::ChunksMut<'_, Complex64> {
        let nz = self.grid.nz;
        self.modes.chunks_mut(nz)
    }

    /// Mode `k ∈ (−nx/2, nx/2]` at z index `iz`.
    pub fn mode(&self, k: i64, iz: usize) -> Complex64 {
        let half = (self.grid.nx / 2) as i64;
        assert!(k > -half && k <= half, "wavenumber {k} out of range");
        if k >= 0 {
            self.column(k as usize)[iz]
        } else {
            self.column((-k) as usize)[iz].conj()
        }
    }

    pub fn to_real(&self) -> RealField {
        to_real(self)
    }

    /// Zeroes modes with `|k| > nx/3` (2/3 rule).
    pub fn dealias(&mut self) {
        let cut = self.grid.nx / 3;
        for k in (cut + 1)..self.grid.n_modes() {
            for c in self.column_mut(k) {
                *c = Complex64::new(0.0, 0.0);
            }
        }
    }
}

fn plans(nx: usize) -> (Arc<dyn Fft<f64>>, Arc<dyn Fft<f64>>) {
    static PLANNER: OnceLock<Mutex<FftPlanner<f64>>> = OnceLock::new();
    let mut p = PLANNER
        .get_or_init(|| Mutex::new(FftPlanner::new()))
        .lock()
        .unwrap_or_else(|e| e.into_inner());
    (p.plan_fft_forward(nx), p.plan_fft_inverse(nx))
}

pub fn to_spectral(f: &RealField) -> SpectralField {
    let grid = f.grid.clone();
    let (nx, nz) = (grid.nx, grid.nz);
    let (fwd, _) = plans(nx);
    let mut out = SpectralField::zeros(grid.clone());
    let mut line = vec![Complex64::new(0.0, 0.0); nx];
    let mut scratch = vec![Complex64::new(0.0, 0.0); fwd.get_inplace_scratch_len()];
    let inv_n = 1.0 / nx as f64;
    for iz in 0..nz {
        for ix in 0..nx {
            line[ix] = Complex64::new(f.values[ix * nz + iz], 0.0);
        }
        fwd.process_with_scratch(&mut line, &mut scratch);
        for k in 0..grid.n_modes() {
            out.modes[k * nz + iz] = line[k] * inv_n;
        }
        out.modes[iz].im = 0.0;
        out.modes[(nx / 2) * nz + iz].im = 0.0;
    }
    out
}

pub fn to_real(s: &SpectralField) -> RealField {
    let grid = s.grid.clone();
    let (nx, nz) = (grid.nx, grid.nz);
    let (_, inv) = plans(nx);
    let mut out = RealField::zeros(grid.clone());
    let mut line = vec![Complex64::new(0.0, 0.0); nx];
    let mut scratch = vec![Complex64::new(0.0, 0.0); inv.get_inplace_scratch_len()];
    let half = nx / 2;
    for iz in 0..nz {
        line[0] = Complex64::new(s.modes[iz].re, 0.0);
        for k in 1..half {
            let c = s.modes[k * nz + iz];
            line[k] = c;
            line[nx - k] = c.conj();
        }
        line[half] = Complex64::new(s.modes[half * nz + iz].re, 0.0);
        inv.process_with_scratch(&mut line, &mut scratch);
        for ix in 0..nx {
            out.values[ix * nz + iz] = line[ix].re;
        }
    }
    out
}

/// `(ik)^order` applied to each mode; the Nyquist mode is dropped for odd
/// orders.
pub fn dx_spectral(s: &mut SpectralField, order: usize) {
    let half = s.grid.nx / 2;
    let nz = s.grid.nz;
    for k in 0..=half {
        let mult = if k == half && order % 2 == 1 {
            Complex64::new(0.0, 0.0)
        } else {
            Complex64::new(0.0, k as f64).powu(order as u32)
        };
        for c in &mut s.modes[k * nz..(k + 1) * nz] {
            *c *= mult;
        }
    }
}

/// Applies a z-stencil to each x-column of a real field.
pub fn dz_apply(f: &RealField, stencil: &Stencil) -> RealField {
    let nz = f.grid.nz;
    let mut out = RealField::zeros(f.grid.clone());
    for (src, dst) in f.values.chunks(nz).zip(out.values.chunks_mut(nz)) {
        stencil.apply(src, dst);
    }
    out
}

/// Derivative of order `1..=4` along an axis: spectral in x, fourth-order
/// finite differences in z.
pub fn differentiate(f: &RealField, axis: Axis, order: usize) -> Result<RealField> {
    if order == 0 || order > MAX_DERIVATIVE {
        return Err(Error::Unsupported(format!(
            "derivative order {order} (supported: 1..={MAX_DERIVATIVE})"
        )));
    }
    match axis {
        Axis::X => {
            let mut s = f.to_spectral();
            dx_spectral(&mut s, order);
            Ok(s.to_real())
        }
        Axis::Z => Ok(dz_apply(f, f.grid.z_stencil(order)?)),
    }
}

/// Mixed derivative `∂ₓ^a ∂_z^b`, composing z-operators for `b > 4`.
pub fn mixed_derivative(f: &RealField, a: usize, b: usize) -> Result<RealField> {
    let mut g = f.clone();
    let mut rem = b;
    while rem > 0 {
        let step = rem.min(MAX_DERIVATIVE);
        g = differentiate(&g, Axis::Z, step)?;
        rem -= step;
    }
    if a > 0 {
        let mut s = g.to_spectral();
        dx_spectral(&mut s, a);
        g = s.to_real();
    }
    Ok(g)
}

/// Function of z only.
#[derive(Debug, Clone, PartialEq)]
pub struct VerticalProfile {
    pub z: Vec<f64>,
    pub values: Vec<f64>,
}

impl VerticalProfile {
    pub fn from_fn<F: Fn(f64) -> f64>(grid: &Grid, f: F) -> Self {
        Self {
            z: grid.z_nodes().to_vec(),
            values: grid.z_nodes().iter().map(|&z| f(z)).collect(),
        }
    }

    pub fn zeros(grid: &Grid) -> Self {
        Self::from_fn(grid, |_| 0.0)
    }

    fn weights(&self) -> Vec<f64> {
        let n = self.z.len();
        let mut w: Vec<f64> = (0..n)
            .map(|i| {
                let l = if i > 0 { self.z[i] - self.z[i - 1] } else { 0.0 };
                let r = if i + 1 < n { self.z[i + 1] - self.z[i] } else { 0.0 };
                0.5 * (l + r)
            })
            .collect();
        // Gregory end corrections on uniform nodes
        if n >= 6 {
            let h = (self.z[n - 1] - self.z[0]) / (n - 1) as f64;
            let uniform = self.z.windows(2).all(|p| ((p[1] - p[0]) - h).abs() <= 1e-9 * h);
            if uniform {
                for (i, c) in [3.0 / 8.0, 7.0 / 6.0, 23.0 / 24.0].into_iter().enumerate() {
                    w[i] = c * h;
                    w[n - 1 - i] = c * h;
                }
            }
        }
        w
    }

    /// `∫ f dz` (trapezoid, end-corrected on uniform nodes).
    pub fn integral(&self) -> f64 {
        self.values.iter().zip(self.weights()).map(|(v, w)| v * w).sum()
    }

    pub fn l2_norm(&self) -> f64 {
        self.values
            .iter()
            .zip(self.weights())
            .map(|(v, w)| v * v * w)
            .sum::<f64>()
            .sqrt()
    }

    /// Derivative via the fourth-order stencils of `grid`.
    pub fn derivative(&self, grid: &Grid, order: usize) -> Result<VerticalProfile> {
        let mut v = self.values.clone();
        let mut rem = order;
        while rem > 0 {
            let step = rem.min(MAX_DERIVATIVE);
            v = grid.z_stencil(step)?.apply_vec(&v);
            rem -= step;
        }
        Ok(Self {
            z: self.z.clone(),
            values: v,
        })
    }

    /// `‖f‖_{H^s(0, height)}`.
    pub fn h_norm(&self, grid: &Grid, s: usize) -> Result<f64> {
        let mut acc = self.l2_norm().powi(2);
        for b in 1..=s {
            acc += self.derivative(grid, b)?.l2_norm().powi(2);
        }
        Ok(acc.sqrt())
    }

    /// Broadcast to a field constant in x.
    pub fn to_field(&self, grid: &Grid) -> RealField {
        let mut values = Vec::with_capacity(grid.nx * grid.nz);
        for _ in 0..grid.nx {
            values.extend_from_slice(&self.values);
        }
        RealField {
            grid: grid.clone(),
            values,
        }
    }
}

/// Horizontal mean and zero-mean fluctuation of a field.
#[derive(Debug, Clone)]
pub struct MeanFluctPair {
    pub mean: VerticalProfile,
    pub fluct: RealField,
}

impl MeanFluctPair {
    pub fn reconstruct(&self) -> RealField {
        self.fluct.axpy(1.0, &self.mean.to_field(self.fluct.grid()))
    }
}

pub fn split_mean_fluct(f: &RealField) -> MeanFluctPair {
    let grid = f.grid.clone();
    let (nx, nz) = (grid.nx, grid.nz);
    let mut mean = vec![0.0; nz];
    for col in f.values.chunks(nz) {
        for (m, v) in mean.iter_mut().zip(col) {
            *m += v;
        }
    }
    for m in &mut mean {
        *m /= nx as f64;
    }
    let mut fluct = f.clone();
    for col in fluct.values.chunks_mut(nz) {
        for (v, m) in col.iter_mut().zip(&mean) {
            *v -= m;
        }
    }
    MeanFluctPair {
        mean: VerticalProfile {
            z: grid.z_nodes().to_vec(),
            values: mean,
        },
        fluct,
    }
}

/// Largest supported Sobolev index.
pub const MAX_SOBOLEV: usize = 6;

/// `(Σ_{a+b≤s} ‖∂ₓ^a ∂_z^b f‖²)^{1/2}`, x-derivatives and x-quadrature
/// spectral (Parseval), z-derivatives by finite differences, `z_weights` quadrature in z.
pub fn sobolev_norm(f: &RealField, s: usize) -> Result<f64> {
    if s > MAX_SOBOLEV {
        return Err(Error::Unsupported(format!("Sobolev index {s} > {MAX_SOBOLEV}")));
    }
    let grid = f.grid();
    let w = grid.z_weights();
    let mut total = 0.0;
    for b in 0..=s {
        let g = mixed_derivative(f, 0, b)?;
        let spec = g.to_spectral();
        // per-mode z-integrals of |ĝ_k|², counted twice for 0 < k < nx/2
        let half = grid.nx / 2;
        let energies: Vec<f64> = (0..=half)
            .map(|k| {
                let mult = if k == 0 || k == half { 1.0 } else { 2.0 };
                mult * spec
                    .column(k)
                    .iter()
                    .zip(&w)
                    .map(|(c, w)| c.norm_sqr() * w)
                    .sum::<f64>()
            })
            .collect();
        for a in 0..=(s - b) {
            let sum: f64 = energies
                .iter()
                .enumerate()
                .map(|(k, e)| {
                    if k == half && a % 2 == 1 {
                        0.0
                    } else {
                        (k as f64).powi(2 * a as i32) * e
                    }
                })
                .sum();
            total += 2.0 * PI * sum;
        }
    }
    Ok(total.sqrt())
}

const SNAPSHOT_MAGIC: &[u8; 4] = b"STLB";
const SNAPSHOT_VERSION: u32 = 1;

/// Writes a field in the little-endian snapshot format.
pub fn write_snapshot(path: &Path, f: &RealField, time: f64) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    w.write_all(SNAPSHOT_MAGIC)?;
    w.write_all(&SNAPSHOT_VERSION.to_le_bytes())?;
    w.write_all(&(f.grid.nx as u32).to_le_bytes())?;
    w.write_all(&(f.grid.nz as u32).to_le_bytes())?;
    w.write_all(&f.grid.height.to_le_bytes())?;
    w.write_all(&time.to_le_bytes())?;
    for v in &f.values {
        w.write_all(&v.to_le_bytes())?;
    }
    w.flush()?;
    Ok(())
}

/// Reads a snapshot, returning the field and its time stamp.
pub fn read_snapshot(path: &Path) -> Result<(RealField, f64)> {
    let mut r = BufReader::new(File::open(path)?);
    let mut head = [0u8; 32];
    r.read_exact(&mut head)?;
    if &head[0..4] != SNAPSHOT_MAGIC {
        return Err(Error::Invalid("not a snapshot file (bad magic)".into()));
    }
    let u32_at = |o: usize| u32::from_le_bytes(head[o..o + 4].try_into().unwrap());
    let f64_at = |o: usize| f64::from_le_bytes(head[o..o + 8].try_into().unwrap());
    let version = u32_at(4);
    if version != SNAPSHOT_VERSION {
        return Err(Error::Invalid(format!("unsupported snapshot version {version}")));
    }
    let (nx, nz) = (u32_at(8) as usize, u32_at(12) as usize);
    let height = f64_at(16);
    let time = f64_at(24);
    let grid = Grid::new(nx, nz, height)?;
    let mut bytes = vec![0u8; nx * nz * 8];
    r.read_exact(&mut bytes)?;
    let values = bytes
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
        .collect();
    Ok((RealField::from_values(grid, values)?, time))
}
