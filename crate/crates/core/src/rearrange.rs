//! Level-set measures and the decreasing vertical rearrangement.

use std::f64::consts::PI;

use sha2::{Digest, Sha256};

use crate::domain::{Grid, RealField, VerticalProfile};

/// Decreasing vertical rearrangement `ρ*` sampled on the grid nodes.
#[derive(Debug, Clone, PartialEq)]
pub struct RearrangementProfile {
    pub z_nodes: Vec<f64>,
    pub values: Vec<f64>,
    /// SHA-256 of the source field values (little-endian bytes), hex
    pub source_hash: String,
}

impl RearrangementProfile {
    pub fn to_vertical(&self) -> VerticalProfile {
        VerticalProfile {
            z: self.z_nodes.clone(),
            values: self.values.clone(),
        }
    }

    pub fn to_field(&self, grid: &Grid) -> RealField {
        self.to_vertical().to_field(grid)
    }

    /// Two-column CSV `z,value`.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("z,value\n");
        for (z, v) in self.z_nodes.iter().zip(&self.values) {
            out.push_str(&format!("{z:.17e},{v:.17e}\n"));
        }
        out
    }
}

/// Hex SHA-256 of a field's values.
pub fn field_hash(f: &RealField) -> String {
    let mut h = Sha256::new();
    for v in f.values() {
        h.update(v.to_le_bytes());
    }
    hex::encode(h.finalize())
}

/// Fraction of a linear triangle whose values exceed `lambda`.
fn triangle_fraction(mut v: [f64; 3], lambda: f64) -> f64 {
    v.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let [v1, v2, v3] = v;
    if lambda >= v3 {
        0.0
    } else if lambda < v1 {
        1.0
    } else if lambda < v2 {
        1.0 - (lambda - v1).powi(2) / ((v2 - v1) * (v3 - v1))
    } else {
        (v3 - lambda).powi(2) / ((v3 - v1) * (v3 - v2))
    }
}

/// Triangles of the piecewise-linear interpolant (each cell split along
/// its diagonal, periodic in x): sorted vertex values and area.
fn triangles(rho: &RealField) -> Vec<([f64; 3], f64)> {
    let g = rho.grid();
    let (nx, nz) = (g.nx, g.nz);
    let z = g.z_nodes();
    let dx = g.dx();
    let mut out = Vec::with_capacity(2 * nx * (nz - 1));
    for ix in 0..nx {
        let a = rho.column(ix);
        let b = rho.column((ix + 1) % nx);
        for iz in 0..nz - 1 {
            let half = 0.5 * dx * (z[iz + 1] - z[iz]);
            for mut v in [[a[iz], b[iz], b[iz + 1]], [a[iz], a[iz + 1], b[iz + 1]]] {
                v.sort_by(|p, q| p.partial_cmp(q).unwrap());
                out.push((v, half));
            }
        }
    }
    out
}

fn measure_of(tris: &[([f64; 3], f64)], lambda: f64) -> f64 {
    tris.iter()
        .map(|(v, a)| {
            if lambda < v[0] {
                *a
            } else if lambda >= v[2] {
                0.0
            } else {
                a * triangle_fraction(*v, lambda)
            }
        })
        .sum()
}

/// Area of `{ρ > λ}` for the piecewise-linear interpolant of `rho` on the
/// triangulated grid (each cell split along its diagonal), periodic in x.
pub fn level_measure(rho: &RealField, lambda: f64) -> f64 {
    measure_of(&triangles(rho), lambda)
}

/// Number of grid cells whose corner values straddle `lambda` (an estimate
/// of the level-set length in cell units).
pub fn crossed_cells(rho: &RealField, lambda: f64) -> usize {
    let g = rho.grid();
    let (nx, nz) = (g.nx, g.nz);
    let mut n = 0;
    for ix in 0..nx {
        let a = rho.column(ix);
        let b = rho.column((ix + 1) % nx);
        for iz in 0..nz - 1 {
            let c = [a[iz], a[iz + 1], b[iz], b[iz + 1]];
            let lo = c.iter().cloned().fold(f64::INFINITY, f64::min);
            let hi = c.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            if lo <= lambda && lambda < hi {
                n += 1;
            }
        }
    }
    n
}

/// Decreasing vertical rearrangement `ρ*(z) = inf{λ : |{ρ₀ > λ}| ≤ 2π z}`,
/// with `|·|` the piecewise-linear measure of [`level_measure`], so the
/// result is equimeasurable with `rho0` in that measure. The distribution
/// function is inverted at each node by bisection, bracketed by the
/// area-weighted sort of the node samples.
pub fn vertical_rearrangement(rho0: &RealField) -> RearrangementProfile {
    let g = rho0.grid();
    let tris = triangles(rho0);
    let total: f64 = tris.iter().map(|t| t.1).sum();
    let (lo, hi) = (rho0.min(), rho0.max());
    let w = g.z_weights();
    let dx = g.dx();
    let nz = g.nz;
    let mut samples: Vec<(f64, f64)> = rho0
        .values()
        .iter()
        .enumerate()
        .map(|(i, &v)| (v, dx * w[i % nz]))
        .collect();
    samples.sort_by(|a, b| b.0.partial_cmp(&a.0).unwrap_or(std::cmp::Ordering::Equal));
    let mut cumulative = Vec::with_capacity(samples.len());
    let mut acc = 0.0;
    for &(v, a) in &samples {
        acc += a;
        cumulative.push((acc, v));
    }
    let values = g
        .z_nodes()
        .iter()
        .map(|&zv| {
            let target = 2.0 * PI * zv * total / (2.0 * PI * g.height);
            if target <= 0.0 {
                return hi;
            }
            if target >= total {
                return lo;
            }
            // sample-based guess, widened until it brackets the P1 value
            let j = cumulative.partition_point(|c| c.0 < target).min(cumulative.len() - 1);
            let guess = cumulative[j].1;
            let mut step = 1e-3 * (hi - lo).max(f64::MIN_POSITIVE);
            let (mut a, mut b) = (guess, guess);
            while a > lo && measure_of(&tris, a) <= target {
                a = (a - step).max(lo);
                step *= 2.0;
            }
            step = 1e-3 * (hi - lo).max(f64::MIN_POSITIVE);
            while b < hi && measure_of(&tris, b) > target {
                b = (b + step).min(hi);
                step *= 2.0;
            }
            // invariant: m(a) > target (or a = lo), m(b) <= target
            for _ in 0..200 {
                let m = 0.5 * (a + b);
                if m <= a || m >= b {
                    break;
                }
                if measure_of(&tris, m) > target {
                    a = m;
                } else {
                    b = m;
                }
            }
            b
        })
        .collect();
    RearrangementProfile {
        z_nodes: g.z_nodes().to_vec(),
        values,
        source_hash: field_hash(rho0),
    }
}

/// `∫_Ω |f|^p` with the grid quadrature.
pub fn lp_norm(f: &RealField, p: f64) -> f64 {
    f.map(|v| v.abs().powf(p)).integral().powf(1.0 / p)
}

/// `(∫_0^H |f|^p dz)^{1/p}` for a vertical profile.
pub fn lp_norm_profile(f: &VerticalProfile, p: f64) -> f64 {
    VerticalProfile {
        z: f.z.clone(),
        values: f.values.iter().map(|v| v.abs().powf(p)).collect(),
    }
    .integral()
    .powf(1.0 / p)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn triangle_fraction_limits() {
        assert_eq!(triangle_fraction([0.0, 1.0, 2.0], 3.0), 0.0);
        assert_eq!(triangle_fraction([0.0, 1.0, 2.0], -1.0), 1.0);
        assert!((triangle_fraction([0.0, 1.0, 2.0], 1.0) - 0.5).abs() < 1e-15);
    }
}
