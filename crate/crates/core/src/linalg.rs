//! Small numerical kernels shared by the solvers: finite-difference weights
//! on arbitrary nodes and a banded LU factorization with partial pivoting.

use crate::error::{Error, Result};

/// Finite-difference weights for derivatives `0..=max_order` at `x0` using
/// the given nodes (Fornberg's recursion). Row `m` of the result holds the
/// weights of the `m`-th derivative.
pub fn fd_weights(x0: f64, nodes: &[f64], max_order: usize) -> Vec<Vec<f64>> {
    let n = nodes.len();
    let mut c = vec![vec![0.0; n]; max_order + 1];
    c[0][0] = 1.0;
    let mut c1 = 1.0;
    let mut c4 = nodes[0] - x0;
    for i in 1..n {
        let mn = i.min(max_order);
        let mut c2 = 1.0;
        let c5 = c4;
        c4 = nodes[i] - x0;
        for j in 0..i {
            let c3 = nodes[i] - nodes[j];
            c2 *= c3;
            if j == i - 1 {
                for k in (1..=mn).rev() {
                    c[k][i] = c1 * (k as f64 * c[k - 1][i - 1] - c5 * c[k][i - 1]) / c2;
                }
                c[0][i] = -c1 * c5 * c[0][i - 1] / c2;
            }
            for k in (1..=mn).rev() {
                c[k][j] = (c4 * c[k][j] - k as f64 * c[k - 1][j]) / c3;
            }
            c[0][j] = c4 * c[0][j] / c3;
        }
        c1 = c2;
    }
    c
}

/// One row of a sparse differentiation operator: weights applied to the
/// contiguous node window starting at `start`.
#[derive(Debug, Clone, PartialEq)]
pub struct StencilRow {
    pub start: usize,
    pub weights: Vec<f64>,
}

impl StencilRow {
    pub fn apply(&self, values: &[f64]) -> f64 {
        self.weights
            .iter()
            .zip(&values[self.start..self.start + self.weights.len()])
            .map(|(w, v)| w * v)
            .sum()
    }

    pub fn end(&self) -> usize {
        self.start + self.weights.len()
    }
}

/// Differentiation operator of a fixed derivative order on a 1-D node set,
/// stored row by row.
#[derive(Debug, Clone)]
pub struct Stencil {
    pub order: usize,
    pub rows: Vec<StencilRow>,
}

impl Stencil {
    /// Builds the operator with `width`-point windows centred on each node
    /// where they fit, and shifted (one-sided) windows of `boundary_width`
    /// points where they do not.
    pub fn build(nodes: &[f64], order: usize, width: usize, boundary_width: usize) -> Self {
        let n = nodes.len();
        assert!(boundary_width <= n && width <= n, "grid too small for stencil");
        let half = width / 2;
        let rows = (0..n)
            .map(|i| {
                let (start, len) = if i >= half && i + half < n {
                    (i - half, width)
                } else {
                    let len = boundary_width;
                    let start = if i < half { 0 } else { n - len };
                    (start, len)
                };
                let w = fd_weights(nodes[i], &nodes[start..start + len], order);
                StencilRow {
                    start,
                    weights: w[order].clone(),
                }
            })
            .collect();
        Self { order, rows }
    }

    /// Fourth-order accurate operator: centred odd-width interior windows and
    /// one-sided windows of `order + 4` points near the ends.
    pub fn fourth_order(nodes: &[f64], order: usize) -> Self {
        let width = 2 * order.div_ceil(2) + 3;
        Self::build(nodes, order, width, order + 4)
    }

    pub fn apply(&self, values: &[f64], out: &mut [f64]) {
        for (o, row) in out.iter_mut().zip(&self.rows) {
            *o = row.apply(values);
        }
    }

    pub fn apply_vec(&self, values: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; values.len()];
        self.apply(values, &mut out);
        out
    }
}

/// Square banded matrix with `kl` sub- and `ku` super-diagonals, stored in
/// LAPACK band layout with room for the fill produced by row pivoting.
#[derive(Debug, Clone)]
pub struct BandedMatrix {
    n: usize,
    kl: usize,
    ku: usize,
    // column-major, leading dimension 2*kl + ku + 1
    ab: Vec<f64>,
}

impl BandedMatrix {
    pub fn zeros(n: usize, kl: usize, ku: usize) -> Self {
        Self {
            n,
            kl,
            ku,
            ab: vec![0.0; (2 * kl + ku + 1) * n],
        }
    }

    pub fn n(&self) -> usize {
        self.n
    }

    fn ldab(&self) -> usize {
        2 * self.kl + self.ku + 1
    }

    fn idx(&self, i: usize, j: usize) -> usize {
        (self.kl + self.ku + i - j) + j * self.ldab()
    }

    pub fn in_band(&self, i: usize, j: usize) -> bool {
        i < self.n && j < self.n && j <= i + self.ku && i <= j + self.kl
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        if self.in_band(i, j) {
            self.ab[self.idx(i, j)]
        } else {
            0.0
        }
    }

    /// Adds `v` to entry `(i, j)`. Panics if the entry is outside the band.
    pub fn add(&mut self, i: usize, j: usize, v: f64) {
        assert!(self.in_band(i, j), "entry ({i},{j}) outside band");
        let k = self.idx(i, j);
        self.ab[k] += v;
    }

    pub fn set_row(&mut self, i: usize, row: &StencilRow, scale: f64) {
        for (o, w) in row.weights.iter().enumerate() {
            self.add(i, row.start + o, scale * w);
        }
    }

    pub fn matvec(&self, x: &[f64]) -> Vec<f64> {
        (0..self.n)
            .map(|i| {
                let lo = i.saturating_sub(self.kl);
                let hi = (i + self.ku).min(self.n - 1);
                (lo..=hi).map(|j| self.get(i, j) * x[j]).sum()
            })
            .collect()
    }

    /// LU factorization with partial pivoting (unblocked `gbtf2`).
    pub fn factorize(mut self) -> Result<BandedLu> {
        let n = self.n;
        let (kl, ku) = (self.kl, self.ku);
        let kv = kl + ku;
        let ld = self.ldab();
        let mut ipiv = vec![0usize; n];
        let mut ju = 0usize;
        for j in 0..n {
            let km = kl.min(n - 1 - j);
            let col = j * ld;
            let mut jp = 0;
            let mut best = self.ab[col + kv].abs();
            for i in 1..=km {
                let v = self.ab[col + kv + i].abs();
                if v > best {
                    best = v;
                    jp = i;
                }
            }
            ipiv[j] = j + jp;
            if best == 0.0 || !best.is_finite() {
                return Err(Error::Breakdown(format!(
                    "zero pivot in banded LU at column {j}"
                )));
            }
            ju = ju.max((j + ku + jp).min(n - 1));
            if jp != 0 {
                for c in j..=ju {
                    let a = self.idx(j, c);
                    let b = self.idx(j + jp, c);
                    self.ab.swap(a, b);
                }
            }
            let piv = self.ab[col + kv];
            for i in 1..=km {
                self.ab[col + kv + i] /= piv;
            }
            for c in (j + 1)..=ju {
                let ajc = self.ab[self.idx(j, c)];
                if ajc != 0.0 {
                    for i in 1..=km {
                        let l = self.ab[col + kv + i];
                        let t = self.idx(j + i, c);
                        self.ab[t] -= l * ajc;
                    }
                }
            }
        }
        Ok(BandedLu { m: self, ipiv })
    }
}

/// Factorized banded matrix, reusable for any number of right-hand sides.
#[derive(Debug, Clone)]
pub struct BandedLu {
    m: BandedMatrix,
    ipiv: Vec<usize>,
}

impl BandedLu {
    pub fn n(&self) -> usize {
        self.m.n
    }

    pub fn solve_in_place(&self, b: &mut [f64]) {
        let n = self.m.n;
        let kl = self.m.kl;
        let kv = kl + self.m.ku;
        let ld = self.m.ldab();
        let ab = &self.m.ab;
        for j in 0..n {
            let p = self.ipiv[j];
            if p != j {
                b.swap(p, j);
            }
            let bj = b[j];
            if bj != 0.0 {
                let lm = kl.min(n - 1 - j);
                for i in 1..=lm {
                    b[j + i] -= ab[j * ld + kv + i] * bj;
                }
            }
        }
        for j in (0..n).rev() {
            b[j] /= ab[j * ld + kv];
            let bj = b[j];
            if bj != 0.0 {
                let lo = j.saturating_sub(kv);
                for i in lo..j {
                    b[i] -= ab[j * ld + kv + i - j] * bj;
                }
            }
        }
    }

    pub fn solve(&self, b: &[f64]) -> Vec<f64> {
        let mut x = b.to_vec();
        self.solve_in_place(&mut x);
        x
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn fornberg_reproduces_classic_weights() {
        let nodes = [-2.0, -1.0, 0.0, 1.0, 2.0];
        let w = fd_weights(0.0, &nodes, 2);
        let d1 = [1.0 / 12.0, -2.0 / 3.0, 0.0, 2.0 / 3.0, -1.0 / 12.0];
        let d2 = [-1.0 / 12.0, 4.0 / 3.0, -5.0 / 2.0, 4.0 / 3.0, -1.0 / 12.0];
        for i in 0..5 {
            assert!((w[1][i] - d1[i]).abs() < 1e-14);
            assert!((w[2][i] - d2[i]).abs() < 1e-14);
        }
    }

    #[test]
    fn stencil_exact_on_polynomials() {
        let nodes: Vec<f64> = (0..20).map(|i| i as f64 * 0.05).collect();
        for order in 1..=4 {
            let s = Stencil::fourth_order(&nodes, order);
            // degree order+3 polynomial is reproduced by every row
            let deg = order + 3;
            let f: Vec<f64> = nodes.iter().map(|z| z.powi(deg as i32)).collect();
            let d = s.apply_vec(&f);
            let falling: f64 = (0..order).map(|m| (deg - m) as f64).product();
            for (z, v) in nodes.iter().zip(&d) {
                let exact = falling * z.powi((deg - order) as i32);
                assert!((v - exact).abs() < 1e-7, "order {order}: {v} vs {exact}");
            }
        }
    }

    #[test]
    fn banded_lu_matches_matvec() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let n = 40;
        let (kl, ku) = (3, 5);
        let mut m = BandedMatrix::zeros(n, kl, ku);
        for i in 0..n {
            for j in i.saturating_sub(kl)..=(i + ku).min(n - 1) {
                m.add(i, j, rng.gen_range(-1.0..1.0));
            }
        }
        let x: Vec<f64> = (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let b = m.matvec(&x);
        let lu = m.factorize().unwrap();
        let y = lu.solve(&b);
        let err = x.iter().zip(&y).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        assert!(err < 1e-10, "err {err}");
    }

    #[test]
    fn singular_band_is_reported() {
        let m = BandedMatrix::zeros(5, 1, 1);
        assert!(matches!(m.factorize(), Err(Error::Breakdown(_))));
    }
}
