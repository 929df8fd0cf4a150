//! Uniform grids on 𝕋² (φ) and [0, 2π] (t), quadrature, and lattice shifts.
//!
//! All series coefficients live on an `n_phi × n_phi` φ-lattice crossed with
//! an `n_t + 1`-point t-grid that stores both endpoints explicitly. Full-period
//! integrals use composite Simpson; running integrals `∫₀^t` use a 4th-order
//! cumulative rule (cubic Lagrange pieces on the shared grid).

use crate::catmap::CatMap;
use crate::trig::TWO_PI;
use serde::{Deserialize, Serialize};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct GridSpec {
    /// Lattice points per torus dimension.
    pub n_phi: usize,
    /// Number of t-intervals; the grid has `n_t + 1` points on [0, 2π].
    pub n_t: usize,
}

impl GridSpec {
    pub fn new(n_phi: usize, n_t: usize) -> Self {
        assert!(n_phi >= 2 && n_t >= 4 && n_t % 2 == 0, "grid too coarse or odd n_t");
        GridSpec { n_phi, n_t }
    }

    pub fn t_step(&self) -> f64 {
        TWO_PI / self.n_t as f64
    }

    pub fn t_values(&self) -> Vec<f64> {
        (0..=self.n_t).map(|k| k as f64 * self.t_step()).collect()
    }

    pub fn phi(&self, i: usize, j: usize) -> [f64; 2] {
        let s = TWO_PI / self.n_phi as f64;
        [i as f64 * s, j as f64 * s]
    }

    pub fn n_sites(&self) -> usize {
        self.n_phi * self.n_phi
    }
}

pub const DEFAULT_GRID: GridSpec = GridSpec { n_phi: 64, n_t: 256 };

/// Scalar field over the φ-lattice.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PhiField {
    pub n: usize,
    pub data: Vec<f64>,
}

impl PhiField {
    pub fn zeros(n: usize) -> Self {
        PhiField { n, data: vec![0.0; n * n] }
    }

    pub fn from_fn(n: usize, mut f: impl FnMut(usize, usize) -> f64) -> Self {
        let mut data = Vec::with_capacity(n * n);
        for i in 0..n {
            for j in 0..n {
                data.push(f(i, j));
            }
        }
        PhiField { n, data }
    }

    #[inline]
    pub fn at(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.n + j]
    }

    #[inline]
    pub fn set(&mut self, i: usize, j: usize, v: f64) {
        self.data[i * self.n + j] = v;
    }

    pub fn sup_norm(&self) -> f64 {
        self.data.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    pub fn mean(&self) -> f64 {
        self.data.iter().sum::<f64>() / self.data.len() as f64
    }

    pub fn min_max(&self) -> (f64, f64) {
        self.data
            .iter()
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| (lo.min(v), hi.max(v)))
    }

    /// `r ∘ S^m` through the exact lattice permutation `perm`.
    pub fn shifted(&self, perm: &[u32]) -> PhiField {
        PhiField {
            n: self.n,
            data: perm.iter().map(|&p| self.data[p as usize]).collect(),
        }
    }

    /// Accumulate `scale · r(S^m φ)` in place.
    pub fn add_shifted(&mut self, src: &PhiField, perm: &[u32], scale: f64) {
        for (out, &p) in self.data.iter_mut().zip(perm.iter()) {
            *out += scale * src.data[p as usize];
        }
    }

    /// Periodic bilinear interpolation at an arbitrary torus point.
    pub fn bilinear(&self, phi: [f64; 2]) -> f64 {
        let n = self.n;
        let s = n as f64 / TWO_PI;
        let u = (phi[0].rem_euclid(TWO_PI)) * s;
        let v = (phi[1].rem_euclid(TWO_PI)) * s;
        let i0 = u.floor() as usize % n;
        let j0 = v.floor() as usize % n;
        let fu = u - u.floor();
        let fv = v - v.floor();
        let i1 = (i0 + 1) % n;
        let j1 = (j0 + 1) % n;
        let f00 = self.at(i0, j0);
        let f01 = self.at(i0, j1);
        let f10 = self.at(i1, j0);
        let f11 = self.at(i1, j1);
        f00 * (1.0 - fu) * (1.0 - fv) + f10 * fu * (1.0 - fv) + f01 * (1.0 - fu) * fv
            + f11 * fu * fv
    }
}

/// Field over φ-lattice × t-grid, t contiguous per site.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PhiTimeField {
    pub n: usize,
    pub nt: usize,
    pub data: Vec<f64>,
}

impl PhiTimeField {
    pub fn zeros(grid: GridSpec) -> Self {
        PhiTimeField {
            n: grid.n_phi,
            nt: grid.n_t,
            data: vec![0.0; grid.n_sites() * (grid.n_t + 1)],
        }
    }

    #[inline]
    pub fn row(&self, i: usize, j: usize) -> &[f64] {
        let w = self.nt + 1;
        let base = (i * self.n + j) * w;
        &self.data[base..base + w]
    }

    #[inline]
    pub fn row_mut(&mut self, i: usize, j: usize) -> &mut [f64] {
        let w = self.nt + 1;
        let base = (i * self.n + j) * w;
        &mut self.data[base..base + w]
    }

    #[inline]
    pub fn at(&self, i: usize, j: usize, k: usize) -> f64 {
        self.data[(i * self.n + j) * (self.nt + 1) + k]
    }

    pub fn sup_norm(&self) -> f64 {
        self.data.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    /// The `t = 2π` slice as a φ-field.
    pub fn endpoint(&self) -> PhiField {
        let n = self.n;
        PhiField::from_fn(n, |i, j| self.at(i, j, self.nt))
    }

    pub fn is_zero(&self) -> bool {
        self.data.iter().all(|&v| v == 0.0)
    }
}

/// Composite Simpson over the full row (even number of intervals).
pub fn simpson_full(row: &[f64], h: f64) -> f64 {
    let n = row.len() - 1;
    debug_assert!(n >= 2 && n % 2 == 0);
    let mut odd = 0.0;
    let mut even = 0.0;
    for (k, &v) in row.iter().enumerate().take(n).skip(1) {
        if k % 2 == 1 {
            odd += v;
        } else {
            even += v;
        }
    }
    (row[0] + row[n] + 4.0 * odd + 2.0 * even) * h / 3.0
}

/// 6th-order running integral: `out[k] = ∫_{t₀}^{t_k} f`, quintic Lagrange
/// pieces on 6-point stencils, one-sided near the ends.
pub fn cumulative_integral(row: &[f64], h: f64, out: &mut [f64]) {
    let n = row.len();
    debug_assert!(n >= 6 && out.len() == n);
    // ∫ over the first and second intervals of the quintic through points 0..5
    const FIRST: [f64; 6] = [
        95.0 / 288.0,
        1427.0 / 1440.0,
        -133.0 / 240.0,
        241.0 / 720.0,
        -173.0 / 1440.0,
        3.0 / 160.0,
    ];
    const SECOND: [f64; 6] = [
        -3.0 / 160.0,
        637.0 / 1440.0,
        511.0 / 720.0,
        -43.0 / 240.0,
        77.0 / 1440.0,
        -11.0 / 1440.0,
    ];
    // ∫ over [x_k, x_{k+1}] of the quintic through points k-2..k+3
    const INTERIOR: [f64; 6] = [
        11.0 / 1440.0,
        -31.0 / 480.0,
        401.0 / 720.0,
        401.0 / 720.0,
        -31.0 / 480.0,
        11.0 / 1440.0,
    ];
    let dot6 = |vals: &[f64], w: &[f64; 6]| -> f64 {
        vals.iter().zip(w.iter()).map(|(v, c)| v * c).sum::<f64>()
    };
    out[0] = 0.0;
    out[1] = h * dot6(&row[0..6], &FIRST);
    out[2] = out[1] + h * dot6(&row[0..6], &SECOND);
    for k in 2..n - 3 {
        out[k + 1] = out[k] + h * dot6(&row[k - 2..k + 4], &INTERIOR);
    }
    // mirrored one-sided stencils for the last two intervals
    let m = n - 1;
    let rev_dot = |start: usize, w: &[f64; 6]| -> f64 {
        (0..6).map(|i| row[start + 5 - i] * w[i]).sum::<f64>()
    };
    out[m - 1] = out[m - 2] + h * rev_dot(m - 5, &SECOND);
    out[m] = out[m - 1] + h * rev_dot(m - 5, &FIRST);
}

/// Lattice permutation realizing `φ ↦ S^m φ` on the `n × n` lattice:
/// `perm[idx(i,j)] = idx(S^m (i,j) mod n)`. Exact, no interpolation.
pub fn shift_permutation(cat: &CatMap, m: i64, n: usize) -> Vec<u32> {
    let nn = n as i64;
    let p = cat.pow_mod(m, nn);
    let mut perm = Vec::with_capacity(n * n);
    for i in 0..nn {
        for j in 0..nn {
            let si = (p[0][0] * i + p[0][1] * j).rem_euclid(nn);
            let sj = (p[1][0] * i + p[1][1] * j).rem_euclid(nn);
            perm.push((si * nn + sj) as u32);
        }
    }
    perm
}
