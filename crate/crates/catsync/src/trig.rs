//! Finite trigonometric polynomials on 𝕋² × 𝕋 × 𝕋.
//!
//! Every coupling field is a finite sum of terms `c·cos(k·v)` or `c·sin(k·v)`
//! with integer wavevector `k = (k₁, k₂, k_w, k_t)` and `v = (x₁, x₂, w, t)`.
//! The class is closed under the partial derivatives ∂₁, ∂₂, ∂_w, ∂_t and
//! under directional derivatives along the cat-map eigenvectors, so every
//! Taylor coefficient of the perturbation is available exactly, without
//! finite differencing.

use serde::{Deserialize, Serialize};

pub const TWO_PI: f64 = 2.0 * std::f64::consts::PI;

/// Which trigonometric function a term carries.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Phase {
    Cos,
    Sin,
}

/// A single term `coeff · phase(wave · (x₁, x₂, w, t))`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrigTerm {
    pub coeff: f64,
    pub wave: [i64; 4],
    pub phase: Phase,
}

impl TrigTerm {
    pub fn new(phase: Phase, coeff: f64, wave: [i64; 4]) -> Self {
        TrigTerm { coeff, wave, phase }
    }

    fn eval(&self, v: [f64; 4]) -> f64 {
        let theta = self.angle(v);
        match self.phase {
            Phase::Cos => self.coeff * theta.cos(),
            Phase::Sin => self.coeff * theta.sin(),
        }
    }

    fn angle(&self, v: [f64; 4]) -> f64 {
        self.wave[0] as f64 * v[0]
            + self.wave[1] as f64 * v[1]
            + self.wave[2] as f64 * v[2]
            + self.wave[3] as f64 * v[3]
    }

    /// Exact derivative with respect to slot `axis`.
    fn deriv(&self, axis: usize) -> TrigTerm {
        let k = self.wave[axis] as f64;
        match self.phase {
            // d/dθ cos = -sin, d/dθ sin = cos
            Phase::Cos => TrigTerm::new(Phase::Sin, -self.coeff * k, self.wave),
            Phase::Sin => TrigTerm::new(Phase::Cos, self.coeff * k, self.wave),
        }
    }

    /// Directional derivative `d₁∂₁ + d₂∂₂`; a plane wave stays a single term.
    fn dir_deriv(&self, d: [f64; 2]) -> TrigTerm {
        let k = d[0] * self.wave[0] as f64 + d[1] * self.wave[1] as f64;
        match self.phase {
            Phase::Cos => TrigTerm::new(Phase::Sin, -self.coeff * k, self.wave),
            Phase::Sin => TrigTerm::new(Phase::Cos, self.coeff * k, self.wave),
        }
    }
}

/// A finite trigonometric polynomial; 2π-periodic in each of its four slots.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct TrigPoly {
    pub terms: Vec<TrigTerm>,
}

impl TrigPoly {
    pub fn new(terms: Vec<TrigTerm>) -> Self {
        TrigPoly { terms }
    }

    pub fn zero() -> Self {
        TrigPoly { terms: Vec::new() }
    }

    pub fn is_zero(&self) -> bool {
        self.terms.iter().all(|t| t.coeff == 0.0)
    }

    pub fn cos(coeff: f64, wave: [i64; 4]) -> Self {
        TrigPoly::new(vec![TrigTerm::new(Phase::Cos, coeff, wave)])
    }

    pub fn sin(coeff: f64, wave: [i64; 4]) -> Self {
        TrigPoly::new(vec![TrigTerm::new(Phase::Sin, coeff, wave)])
    }

    pub fn eval(&self, v: [f64; 4]) -> f64 {
        self.terms.iter().map(|t| t.eval(v)).sum()
    }

    pub fn deriv(&self, axis: usize) -> TrigPoly {
        TrigPoly::new(self.terms.iter().map(|t| t.deriv(axis)).collect())
    }

    /// Directional derivative in the (x₁, x₂) plane along `d`.
    pub fn dir_deriv(&self, d: [f64; 2]) -> TrigPoly {
        TrigPoly::new(self.terms.iter().map(|t| t.dir_deriv(d)).collect())
    }

    /// Mixed partial ∂₊^{q₊} ∂₋^{q₋} ∂_w^{q₃} with eigen-directions `xp`, `xm`.
    /// No factorial normalization is applied.
    pub fn mixed_partial(&self, q: [usize; 3], xp: [f64; 2], xm: [f64; 2]) -> TrigPoly {
        let mut p = self.clone();
        for _ in 0..q[0] {
            p = p.dir_deriv(xp);
        }
        for _ in 0..q[1] {
            p = p.dir_deriv(xm);
        }
        for _ in 0..q[2] {
            p = p.deriv(2);
        }
        p.drop_null_terms();
        p
    }

    pub fn scaled(&self, s: f64) -> TrigPoly {
        TrigPoly::new(
            self.terms
                .iter()
                .map(|t| TrigTerm::new(t.phase, t.coeff * s, t.wave))
                .collect(),
        )
    }

    pub fn plus(&self, other: &TrigPoly) -> TrigPoly {
        let mut terms = self.terms.clone();
        terms.extend_from_slice(&other.terms);
        let mut p = TrigPoly::new(terms);
        p.merge_terms();
        p
    }

    fn drop_null_terms(&mut self) {
        self.terms.retain(|t| t.coeff != 0.0);
    }

    /// Merge terms with identical (wavevector, phase).
    pub fn merge_terms(&mut self) {
        let mut merged: Vec<TrigTerm> = Vec::with_capacity(self.terms.len());
        for t in &self.terms {
            if let Some(m) = merged
                .iter_mut()
                .find(|m| m.wave == t.wave && m.phase == t.phase)
            {
                m.coeff += t.coeff;
            } else {
                merged.push(*t);
            }
        }
        merged.retain(|t| t.coeff != 0.0);
        self.terms = merged;
    }

    /// Largest |coeff| over terms; crude amplitude scale.
    pub fn amplitude(&self) -> f64 {
        self.terms.iter().map(|t| t.coeff.abs()).fold(0.0, f64::max)
    }

    /// Evaluate along the unperturbed trajectory insertion `(xy, w₀ + t, t)`
    /// for every `t` in `t_grid`, accumulating `scale·value` into `out`.
    ///
    /// Each term reduces to `c·trig(A + B·t)` with `A = k₁₂·xy + k_w·w₀` and
    /// `B = k_w + k_t`; the row is filled by a rotation recurrence, one
    /// `sin_cos` per term rather than per grid point.
    pub fn accumulate_unperturbed_row(
        &self,
        xy: [f64; 2],
        w0: f64,
        t_grid: &[f64],
        scale: f64,
        out: &mut [f64],
    ) {
        debug_assert_eq!(t_grid.len(), out.len());
        if t_grid.is_empty() {
            return;
        }
        let dt = if t_grid.len() > 1 {
            t_grid[1] - t_grid[0]
        } else {
            0.0
        };
        for term in &self.terms {
            let a = term.wave[0] as f64 * xy[0]
                + term.wave[1] as f64 * xy[1]
                + term.wave[2] as f64 * w0;
            let b = (term.wave[2] + term.wave[3]) as f64;
            let c = scale * term.coeff;
            let theta0 = a + b * t_grid[0];
            let (mut s, mut co) = theta0.sin_cos();
            let (ds, dc) = (b * dt).sin_cos();
            for (k, slot) in out.iter_mut().enumerate() {
                *slot += match term.phase {
                    Phase::Cos => c * co,
                    Phase::Sin => c * s,
                };
                if k + 1 < t_grid.len() {
                    let (s2, c2) = (s * dc + co * ds, co * dc - s * ds);
                    s = s2;
                    co = c2;
                }
            }
        }
    }

    /// Closed-form integral `∫_{t0}^{t1} p(xy, w₀+τ, τ) dτ` along the
    /// unperturbed trajectory insertion. Exact per term; used for the
    /// dissipation envelope and as an independent quadrature oracle.
    pub fn unperturbed_t_integral(&self, xy: [f64; 2], w0: f64, t0: f64, t1: f64) -> f64 {
        let mut total = 0.0;
        for term in &self.terms {
            let a = term.wave[0] as f64 * xy[0]
                + term.wave[1] as f64 * xy[1]
                + term.wave[2] as f64 * w0;
            let b = (term.wave[2] + term.wave[3]) as f64;
            total += match (term.phase, b == 0.0) {
                (Phase::Cos, true) => term.coeff * a.cos() * (t1 - t0),
                (Phase::Sin, true) => term.coeff * a.sin() * (t1 - t0),
                (Phase::Cos, false) => term.coeff * ((a + b * t1).sin() - (a + b * t0).sin()) / b,
                (Phase::Sin, false) => -term.coeff * ((a + b * t1).cos() - (a + b * t0).cos()) / b,
            };
        }
        total
    }
}

/// Component of a 2-vector field along an eigen-direction: `x·(f₁, f₂)`.
pub fn eigen_component(f1: &TrigPoly, f2: &TrigPoly, x: [f64; 2]) -> TrigPoly {
    f1.scaled(x[0]).plus(&f2.scaled(x[1]))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn fd(p: &TrigPoly, v: [f64; 4], axis: usize) -> f64 {
        let h = 1e-6;
        let mut vp = v;
        let mut vm = v;
        vp[axis] += h;
        vm[axis] -= h;
        (p.eval(vp) - p.eval(vm)) / (2.0 * h)
    }

    #[test]
    fn derivative_matches_finite_difference() {
        let p = TrigPoly::sin(1.3, [2, -1, 1, 1]).plus(&TrigPoly::cos(-0.7, [0, 1, 2, -1]));
        let v = [0.3, 1.1, 2.2, 0.9];
        for axis in 0..4 {
            let d = p.deriv(axis).eval(v);
            assert!((d - fd(&p, v, axis)).abs() < 1e-8, "axis {axis}");
        }
    }

    #[test]
    fn mixed_partials_commute() {
        let p = TrigPoly::sin(1.0, [1, 2, 1, 0]);
        let xp = [0.6, 0.8];
        let xm = [-0.8, 0.6];
        let a = p.dir_deriv(xp).dir_deriv(xm).eval([0.1, 0.2, 0.3, 0.4]);
        let b = p.dir_deriv(xm).dir_deriv(xp).eval([0.1, 0.2, 0.3, 0.4]);
        assert!((a - b).abs() < 1e-14);
    }

    #[test]
    fn periodic_in_every_slot() {
        let p = TrigPoly::sin(1.0, [0, 1, 1, 1]).plus(&TrigPoly::sin(1.0, [0, 0, 1, -1]));
        let v = [0.4, 1.9, 5.0, 2.7];
        for axis in 0..4 {
            let mut vs = v;
            vs[axis] += TWO_PI;
            assert!((p.eval(v) - p.eval(vs)).abs() < 1e-12);
        }
    }

    #[test]
    fn row_accumulation_matches_pointwise_eval() {
        let p = TrigPoly::sin(0.9, [1, 1, 1, 1]).plus(&TrigPoly::cos(0.4, [0, 2, 0, 0]));
        let n = 97;
        let t: Vec<f64> = (0..n).map(|k| TWO_PI * k as f64 / (n - 1) as f64).collect();
        let xy = [0.77, 2.13];
        let w0 = std::f64::consts::PI;
        let mut row = vec![0.0; n];
        p.accumulate_unperturbed_row(xy, w0, &t, 1.0, &mut row);
        for (k, &tk) in t.iter().enumerate() {
            let direct = p.eval([xy[0], xy[1], w0 + tk, tk]);
            assert!((row[k] - direct).abs() < 1e-12);
        }
    }

    #[test]
    fn closed_form_integral_matches_riemann_sum() {
        let p = TrigPoly::sin(1.0, [0, 1, 1, 1]).plus(&TrigPoly::sin(1.0, [0, 0, 1, -1]));
        let xy = [1.0, 2.0];
        let w0 = 0.7;
        let n = 200_000;
        let h = TWO_PI / n as f64;
        let mut sum = 0.0;
        for k in 0..n {
            let t = (k as f64 + 0.5) * h;
            sum += p.eval([xy[0], xy[1], w0 + t, t]) * h;
        }
        let exact = p.unperturbed_t_integral(xy, w0, 0.0, TWO_PI);
        assert!((sum - exact).abs() < 1e-9);
    }
}
