//! Clamped bilaplacian `Δ²ψ = ∂ₓθ` with `ψ = ∂_zψ = 0` on both walls, solved
//! mode by mode in x; velocity reconstruction and the clamped spectrum.

use std::f64::consts::PI;
use std::sync::Arc;

use nalgebra::DMatrix;
use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::domain::{differentiate, Axis, Grid, RealField, SpectralField};
use crate::error::{Error, Result};
use crate::linalg::{BandedLu, BandedMatrix};

/// Factorized `(∂_z² − k²)²` for one wavenumber with clamped boundary rows.
///
/// Row layout: 0 and `nz-1` impose ψ = 0, rows 1 and `nz-2` impose
/// ∂_zψ = 0 with the one-sided first-derivative stencil, and interior rows
/// `2..nz-2` carry the operator.
#[derive(Debug, Clone)]
pub struct ModeOperator {
    pub k: f64,
    matrix: BandedMatrix,
    lu: BandedLu,
}

impl ModeOperator {
    pub fn new(grid: &Grid, k: f64) -> Result<Self> {
        let matrix = assemble_mode_matrix(grid, k)?;
        let lu = matrix.clone().factorize()?;
        Ok(Self { k, matrix, lu })
    }

    pub fn matrix(&self) -> &BandedMatrix {
        &self.matrix
    }

    /// Solves `A ψ = rhs`, `rhs` holding interior data (boundary rows must be
    /// the boundary values, normally zero).
    pub fn solve(&self, rhs: &[f64]) -> Vec<f64> {
        self.lu.solve(rhs)
    }

    /// Solves with interior right-hand side `f` (boundary rows forced to 0).
    pub fn solve_interior(&self, f: &[f64]) -> Vec<f64> {
        let mut b = f.to_vec();
        let n = b.len();
        for i in [0, 1, n - 2, n - 1] {
            b[i] = 0.0;
        }
        self.lu.solve_in_place(&mut b);
        b
    }

    fn solve_complex(&self, f: &[Complex64]) -> Vec<Complex64> {
        let re: Vec<f64> = f.iter().map(|c| c.re).collect();
        let im: Vec<f64> = f.iter().map(|c| c.im).collect();
        let (re, im) = (self.solve_interior(&re), self.solve_interior(&im));
        re.into_iter().zip(im).map(|(a, b)| Complex64::new(a, b)).collect()
    }

    /// Dense copy of the matrix.
    pub fn dense(&self) -> DMatrix<f64> {
        let n = self.matrix.n();
        DMatrix::from_fn(n, n, |i, j| self.matrix.get(i, j))
    }
}

fn assemble_mode_matrix(grid: &Grid, k: f64) -> Result<BandedMatrix> {
    let nz = grid.nz;
    let d1 = grid.z_stencil(1)?;
    let d2 = grid.z_stencil(2)?;
    let d4 = grid.z_stencil(4)?;
    let mut rows: Vec<Vec<(usize, f64)>> = vec![Vec::new(); nz];
    rows[0].push((0, 1.0));
    rows[nz - 1].push((nz - 1, 1.0));
    for (r, node) in [(1, 0), (nz - 2, nz - 1)] {
        let st = &d1.rows[node];
        rows[r].extend(st.weights.iter().enumerate().map(|(o, w)| (st.start + o, *w)));
    }
    let k2 = k * k;
    for (i, row) in rows.iter_mut().enumerate().take(nz - 2).skip(2) {
        let mut add = |c: usize, w: f64| match row.iter_mut().find(|e| e.0 == c) {
            Some(e) => e.1 += w,
            None => row.push((c, w)),
        };
        let s4 = &d4.rows[i];
        for (o, w) in s4.weights.iter().enumerate() {
            add(s4.start + o, *w);
        }
        let s2 = &d2.rows[i];
        for (o, w) in s2.weights.iter().enumerate() {
            add(s2.start + o, -2.0 * k2 * w);
        }
        add(i, k2 * k2);
    }
    let (mut kl, mut ku) = (0, 0);
    for (r, row) in rows.iter().enumerate() {
        for &(c, _) in row {
            if c > r {
                ku = ku.max(c - r);
            } else {
                kl = kl.max(r - c);
            }
        }
    }
    let mut m = BandedMatrix::zeros(nz, kl, ku);
    for (r, row) in rows.iter().enumerate() {
        for &(c, w) in row {
            m.add(r, c, w);
        }
    }
    Ok(m)
}

/// Cached per-mode operators for `k = 0..=nx/2` on one grid.
#[derive(Debug, Clone)]
pub struct StokesSolver {
    grid: Grid,
    modes: Arc<Vec<ModeOperator>>,
}

impl StokesSolver {
    pub fn new(grid: &Grid) -> Result<Self> {
        let modes = (0..grid.n_modes())
            .into_par_iter()
            .map(|k| ModeOperator::new(grid, k as f64))
            .collect::<Result<Vec<_>>>()?;
        Ok(Self {
            grid: grid.clone(),
            modes: Arc::new(modes),
        })
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn mode(&self, k: usize) -> &ModeOperator {
        &self.modes[k]
    }

    fn check(&self, f: &RealField) -> Result<()> {
        if f.grid() != &self.grid {
            return Err(Error::Config(format!(
                "field grid {:?} does not match solver grid {:?}",
                f.grid(),
                self.grid
            )));
        }
        Ok(())
    }

    /// Solves `Δ²ψ = f` (clamped) for an arbitrary right-hand side, all
    /// modes including `k = 0`.
    pub fn solve_bilaplacian(&self, f: &RealField) -> Result<RealField> {
        self.check(f)?;
        let spec = f.to_spectral();
        Ok(self.solve_spectral(&spec, |_, c| c).to_real())
    }

    /// Per-mode solve of `A_k ψ̂_k = g(k, f̂_k)`.
    pub fn solve_spectral<G>(&self, spec: &SpectralField, g: G) -> SpectralField
    where
        G: Fn(usize, Complex64) -> Complex64 + Sync,
    {
        let mut out = SpectralField::zeros(self.grid.clone());
        let cols: Vec<Vec<Complex64>> = (0..self.grid.n_modes())
            .into_par_iter()
            .map(|k| {
                let rhs: Vec<Complex64> = spec.column(k).iter().map(|&c| g(k, c)).collect();
                if rhs.iter().all(|c| c.norm_sqr() == 0.0) {
                    return vec![Complex64::new(0.0, 0.0); rhs.len()];
                }
                self.modes[k].solve_complex(&rhs)
            })
            .collect();
        for (k, col) in cols.into_iter().enumerate() {
            out.column_mut(k).copy_from_slice(&col);
        }
        out
    }

    /// Spectral stream function of `Δ²ψ = ∂ₓθ`.
    pub fn solve_stream_spectral(&self, theta: &SpectralField) -> SpectralField {
        let half = self.grid.nx / 2;
        self.solve_spectral(theta, |k, c| {
            if k == 0 || k == half {
                Complex64::new(0.0, 0.0)
            } else {
                Complex64::new(0.0, k as f64) * c
            }
        })
    }

    /// Stream function of `Δ²ψ = ∂ₓθ`; only the fluctuation of θ matters.
    pub fn solve_stream(&self, theta: &RealField) -> Result<RealField> {
        self.check(theta)?;
        if !theta.is_finite() {
            return Err(Error::Invalid("non-finite density perturbation".into()));
        }
        Ok(self.solve_stream_spectral(&theta.to_spectral()).to_real())
    }

    /// `Lθ = ∂ₓψ[θ]`.
    pub fn apply_l(&self, theta: &RealField) -> Result<RealField> {
        let psi = self.solve_stream(theta)?;
        differentiate(&psi, Axis::X, 1)
    }

    /// Dense discrete `L` restricted to mode `k`: `θ̂ ↦ −k² A_k⁻¹ P θ̂`
    /// where `P` zeroes the boundary rows.
    pub fn l_matrix(&self, k: usize) -> DMatrix<f64> {
        let nz = self.grid.nz;
        let op = &self.modes[k];
        let kf = k as f64;
        let mut m = DMatrix::zeros(nz, nz);
        let mut e = vec![0.0; nz];
        for j in 2..nz - 2 {
            e.iter_mut().for_each(|v| *v = 0.0);
            e[j] = 1.0;
            let col = op.solve_interior(&e);
            for i in 0..nz {
                m[(i, j)] = -kf * kf * col[i];
            }
        }
        m
    }
}

/// `(u₁, u₂) = (−∂_zψ, ∂ₓψ)`.
pub fn velocity(psi: &RealField) -> Result<(RealField, RealField)> {
    let u1 = differentiate(psi, Axis::Z, 1)?.scaled(-1.0);
    let u2 = differentiate(psi, Axis::X, 1)?;
    Ok((u1, u2))
}

/// Strip on which the clamped spectrum is computed.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Strip {
    /// `(−1, 1)`
    Symmetric,
    /// `(0, 1)`
    Unit,
}

impl Strip {
    pub fn half_height(self) -> f64 {
        match self {
            Strip::Symmetric => 1.0,
            Strip::Unit => 0.5,
        }
    }

    pub fn center(self) -> f64 {
        match self {
            Strip::Symmetric => 0.0,
            Strip::Unit => 0.5,
        }
    }

    pub fn bounds(self) -> (f64, f64) {
        let (c, a) = (self.center(), self.half_height());
        (c - a, c + a)
    }
}

/// Parity of a clamped eigenfunction about the strip centre.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Parity {
    Even,
    Odd,
}

/// One eigenpair of `Δ²` on `H²₀` of the strip, for the mode `e^{ikx}`.
#[derive(Debug, Clone)]
pub struct SpectrumEntry {
    pub n: usize,
    pub k: i64,
    pub lambda: f64,
    /// oscillatory parameter on the strip, `ω² = λ^{1/2} − k²`
    pub omega: f64,
    /// evanescent parameter on the strip, `r² = λ^{1/2} + k²`
    pub r: f64,
    pub parity: Parity,
    /// `|b'(wall)|` of the normalized eigenfunction
    pub residual: f64,
    pub strip: Strip,
    /// unit-L² eigenfunction sampled at `z`
    pub z: Vec<f64>,
    pub eigfun: Vec<f64>,
    norm_factor: f64,
}

impl SpectrumEntry {
    /// Evaluates the unit-norm eigenfunction and its first derivative at a
    /// physical `z` in the strip.
    pub fn eval(&self, z: f64) -> (f64, f64) {
        let a = self.strip.half_height();
        let xi = (z - self.strip.center()) / a;
        let (v, d) = reference_eigfun(self.parity, self.omega * a, self.r * a, xi);
        (v * self.norm_factor, d * self.norm_factor / a)
    }

    /// Decay rate `k² / λ` of this mode under the linear dynamics.
    pub fn decay_rate(&self) -> f64 {
        (self.k * self.k) as f64 / self.lambda
    }

    fn wall_residual(&self) -> f64 {
        let (lo, hi) = self.strip.bounds();
        let (v0, d0) = self.eval(lo);
        let (v1, d1) = self.eval(hi);
        v0.abs().max(v1.abs()).max(d0.abs()).max(d1.abs())
    }
}

/// Eigenfunction on `(−1, 1)` and its derivative, unnormalized.
fn reference_eigfun(parity: Parity, omega: f64, r: f64, xi: f64) -> (f64, f64) {
    match parity {
        Parity::Even => {
            // cosh(r xi)/cosh(r) evaluated without overflow
            let ch = ((r * (xi.abs() - 1.0)).exp() + (-r * (xi.abs() + 1.0)).exp()) / (1.0 + (-2.0 * r).exp());
            let sh = xi.signum() * ((r * (xi.abs() - 1.0)).exp() - (-r * (xi.abs() + 1.0)).exp())
                / (1.0 + (-2.0 * r).exp());
            (
                (omega * xi).cos() - omega.cos() * ch,
                -omega * (omega * xi).sin() - omega.cos() * r * sh,
            )
        }
        Parity::Odd => {
            let den = 1.0 - (-2.0 * r).exp();
            let sh = xi.signum() * ((r * (xi.abs() - 1.0)).exp() - (-r * (xi.abs() + 1.0)).exp()) / den;
            let ch = ((r * (xi.abs() - 1.0)).exp() + (-r * (xi.abs() + 1.0)).exp()) / den;
            (
                (omega * xi).sin() - omega.sin() * sh,
                omega * (omega * xi).cos() - omega.sin() * r * ch,
            )
        }
    }
}

/// Wall-derivative condition on `(−1, 1)` as a function of `ω` for scaled
/// wavenumber `kk`.
fn wall_condition(parity: Parity, omega: f64, kk: f64) -> f64 {
    let r = (omega * omega + 2.0 * kk * kk).sqrt();
    match parity {
        Parity::Even => omega * omega.sin() + r * r.tanh() * omega.cos(),
        Parity::Odd => {
            // r coth r, finite as r -> 0
            let rc = if r < 1e-6 { 1.0 + r * r / 3.0 } else { r / r.tanh() };
            omega * omega.cos() - rc * omega.sin()
        }
    }
}

fn bisect<F: Fn(f64) -> f64>(f: F, mut a: f64, mut b: f64) -> f64 {
    let mut fa = f(a);
    for _ in 0..200 {
        let m = 0.5 * (a + b);
        let fm = f(m);
        if fm == 0.0 {
            return m;
        }
        if (fm > 0.0) == (fa > 0.0) {
            a = m;
            fa = fm;
        } else {
            b = m;
        }
        if (b - a) <= 1e-15 * b.abs() {
            break;
        }
    }
    0.5 * (a + b)
}

/// The `n_max` smallest eigenpairs of `Δ²` on `H²₀` of the strip for the
/// Fourier mode `e^{ikx}`, found by bracketing sign changes of the wall
/// condition in `ω` and bisecting. Eigenfunctions are sampled at `z`
/// (physical coordinates) and normalized to unit L² norm on the strip.
pub fn clamped_spectrum(k: i64, n_max: usize, strip: Strip, z: &[f64]) -> Result<Vec<SpectrumEntry>> {
    if n_max == 0 {
        return Err(Error::Config("n_max must be at least 1".into()));
    }
    let a = strip.half_height();
    let kk = k.unsigned_abs() as f64 * a;
    let step = 0.01;
    let limit = (n_max as f64 + 4.0) * PI;
    let mut roots: Vec<(f64, Parity)> = Vec::new();
    for parity in [Parity::Even, Parity::Odd] {
        let f = |w: f64| wall_condition(parity, w, kk);
        let mut w0 = 1e-3;
        let mut f0 = f(w0);
        while w0 < limit {
            let w1 = w0 + step;
            let f1 = f(w1);
            if f0 == 0.0 || (f0 > 0.0) != (f1 > 0.0) {
                roots.push((bisect(f, w0, w1), parity));
            }
            w0 = w1;
            f0 = f1;
        }
    }
    roots.sort_by(|x, y| x.0.partial_cmp(&y.0).unwrap());
    if roots.len() < n_max {
        return Err(Error::Bracketing { n: roots.len(), k });
    }
    roots.truncate(n_max);
    roots
        .into_iter()
        .enumerate()
        .map(|(n, (om, parity))| {
            let rr = (om * om + 2.0 * kk * kk).sqrt();
            let lambda_ref = (om * om + kk * kk).powi(2);
            // normalization: ∫_{-a}^{a} b² dz = a ∫_{-1}^{1} b_ref² dξ (Simpson)
            let m = 4000;
            let h = 2.0 / m as f64;
            let mut acc = 0.0;
            for i in 0..=m {
                let xi = -1.0 + h * i as f64;
                let w = if i == 0 || i == m { 1.0 } else if i % 2 == 1 { 4.0 } else { 2.0 };
                acc += w * reference_eigfun(parity, om, rr, xi).0.powi(2);
            }
            let norm2 = a * acc * h / 3.0;
            if !(norm2 > 0.0) {
                return Err(Error::Bracketing { n, k });
            }
            let mut e = SpectrumEntry {
                n,
                k,
                lambda: lambda_ref / a.powi(4),
                omega: om / a,
                r: rr / a,
                parity,
                residual: 0.0,
                strip,
                z: z.to_vec(),
                eigfun: Vec::new(),
                norm_factor: 1.0 / norm2.sqrt(),
            };
            e.eigfun = z.iter().map(|&zz| e.eval(zz).0).collect();
            e.residual = e.wall_residual();
            Ok(e)
        })
        .collect()
}

/// Lowest clamped eigenvalue of `(∂_z² − k²)²` on `(0, height)` for real `k`.
pub fn clamped_lowest_eigenvalue(k: f64, height: f64) -> Result<f64> {
    let a = 0.5 * height;
    let kk = k.abs() * a;
    let f = |w: f64| wall_condition(Parity::Even, w, kk);
    let (mut w0, step) = (1e-3, 0.01);
    let mut f0 = f(w0);
    while w0 < 2.0 * PI {
        let w1 = w0 + step;
        let f1 = f(w1);
        if (f0 > 0.0) != (f1 > 0.0) {
            let om = bisect(f, w0, w1);
            return Ok((om * om + kk * kk).powi(2) / a.powi(4));
        }
        w0 = w1;
        f0 = f1;
    }
    Err(Error::Bracketing { n: 0, k: k.round() as i64 })
}

/// Largest decay rate `k²/λ_min(k)` of the linear dynamics over `1..=k_max`.
pub fn max_linear_rate(k_max: usize, height: f64) -> Result<f64> {
    let mut best = 0.0f64;
    for k in 1..=k_max {
        let kf = k as f64;
        best = best.max(kf * kf / clamped_lowest_eigenvalue(kf, height)?);
    }
    Ok(best)
}

/// Smallest `count` eigenvalues of the discrete clamped `(∂_z² − k²)²` on
/// `grid`, from the nonzero spectrum of `A_k⁻¹ P`.
pub fn dense_clamped_eigenvalues(grid: &Grid, k: f64, count: usize) -> Result<Vec<f64>> {
    let op = ModeOperator::new(grid, k)?;
    let nz = grid.nz;
    let mut m = DMatrix::zeros(nz, nz);
    let mut e = vec![0.0; nz];
    for j in 2..nz - 2 {
        e.iter_mut().for_each(|v| *v = 0.0);
        e[j] = 1.0;
        let col = op.solve_interior(&e);
        for i in 0..nz {
            m[(i, j)] = col[i];
        }
    }
    let mut lams: Vec<f64> = m
        .complex_eigenvalues()
        .iter()
        .filter(|mu| mu.norm() > 1e-14)
        .map(|mu| 1.0 / mu.re)
        .collect();
    lams.sort_by(|a, b| a.partial_cmp(b).unwrap());
    lams.truncate(count);
    Ok(lams)
}

/// Spectrum table as CSV `n,k,lambda,omega,r,residual`.
pub fn spectrum_csv(entries: &[SpectrumEntry]) -> String {
    let mut out = String::from("n,k,lambda,omega,r,residual\n");
    for e in entries {
        out.push_str(&format!(
            "{},{},{:.17e},{:.17e},{:.17e},{:.3e}\n",
            e.n, e.k, e.lambda, e.omega, e.r, e.residual
        ));
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn first_roots_at_zero_wavenumber() {
        let s = clamped_spectrum(0, 2, Strip::Symmetric, &[]).unwrap();
        assert!((s[0].omega - 2.365020372).abs() < 1e-8, "{}", s[0].omega);
        assert_eq!(s[0].parity, Parity::Even);
        assert!((s[1].omega - 3.926602312).abs() < 1e-8, "{}", s[1].omega);
        assert_eq!(s[1].parity, Parity::Odd);
    }

    #[test]
    fn unit_strip_scales_from_reference() {
        let a = clamped_spectrum(3, 3, Strip::Unit, &[]).unwrap();
        let b = clamped_spectrum(0, 3, Strip::Symmetric, &[]).unwrap();
        let c = clamped_spectrum(1, 3, Strip::Symmetric, &[]).unwrap();
        // (0,1) with k = 3 is (−1,1) with k = 1.5, eigenvalues times 16
        assert!(a[0].lambda > 16.0 * b[0].lambda && a[0].lambda > 0.0);
        assert!(c[0].lambda > b[0].lambda);
    }
}
