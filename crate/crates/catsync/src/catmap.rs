//! Arnold's cat map `S = [[2,1],[1,1]]` on 𝕋² and the associated state types.
//!
//! The map is applied as an exact integer-matrix multiply followed by
//! reduction mod 2π. On the uniform N×N lattice `φ_{ij} = 2π(i,j)/N` the map
//! is an exact permutation of lattice points (`S` has integer entries), which
//! is what makes the `S^m φ` sums in the series modules interpolation-free:
//! powers of `S` act on lattice indices through modular integer arithmetic.

use crate::trig::TWO_PI;
use serde::{Deserialize, Serialize};

/// Reduce an angle to `[0, 2π)`.
pub fn reduce_angle(x: f64) -> f64 {
    let r = x.rem_euclid(TWO_PI);
    if r >= TWO_PI {
        0.0
    } else {
        r
    }
}

/// A point on the 2-torus, components always reduced to `[0, 2π)`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TorusPoint(pub [f64; 2]);

impl TorusPoint {
    pub fn new(x1: f64, x2: f64) -> Self {
        TorusPoint([reduce_angle(x1), reduce_angle(x2)])
    }

    pub fn x1(&self) -> f64 {
        self.0[0]
    }

    pub fn x2(&self) -> f64 {
        self.0[1]
    }
}

/// Full state `(x, w)` on 𝕋² × 𝕋.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct FullState {
    pub x: TorusPoint,
    pub w: f64,
}

impl FullState {
    pub fn new(x1: f64, x2: f64, w: f64) -> Self {
        FullState {
            x: TorusPoint::new(x1, x2),
            w: reduce_angle(w),
        }
    }
}

/// Circular distance between two angles.
pub fn circ_dist(a: f64, b: f64) -> f64 {
    let d = (a - b).rem_euclid(TWO_PI);
    d.min(TWO_PI - d)
}

/// The hyperbolic automorphism with its eigendata.
#[derive(Clone, Debug)]
pub struct CatMap {
    pub matrix: [[i64; 2]; 2],
    pub inverse: [[i64; 2]; 2],
    pub lambda_plus: f64,
    pub lambda_minus: f64,
    pub x_plus: [f64; 2],
    pub x_minus: [f64; 2],
}

impl Default for CatMap {
    fn default() -> Self {
        CatMap::new()
    }
}

impl CatMap {
    pub fn new() -> Self {
        let sqrt5 = 5.0_f64.sqrt();
        let lp = (3.0 + sqrt5) / 2.0;
        let lm = (3.0 - sqrt5) / 2.0;
        // x_α = ±(1, λ_α − 2)/𝒩_α, normalized
        let np = (1.0 + (lp - 2.0) * (lp - 2.0)).sqrt();
        let nm = (1.0 + (lm - 2.0) * (lm - 2.0)).sqrt();
        CatMap {
            matrix: [[2, 1], [1, 1]],
            inverse: [[1, -1], [-1, 2]],
            lambda_plus: lp,
            lambda_minus: lm,
            x_plus: [1.0 / np, (lp - 2.0) / np],
            x_minus: [-1.0 / nm, -(lm - 2.0) / nm],
        }
    }

    /// Eigenvalue by signed index: `+ → λ₊`, `- → λ₋`.
    pub fn lambda(&self, sign: Sign) -> f64 {
        match sign {
            Sign::Plus => self.lambda_plus,
            Sign::Minus => self.lambda_minus,
        }
    }

    pub fn eigvec(&self, sign: Sign) -> [f64; 2] {
        match sign {
            Sign::Plus => self.x_plus,
            Sign::Minus => self.x_minus,
        }
    }

    /// `S·φ mod 2π`, the δ-kick of the suspension flow.
    pub fn apply(&self, p: TorusPoint) -> TorusPoint {
        let [x, y] = p.0;
        TorusPoint::new(2.0 * x + y, x + y)
    }

    /// `S⁻¹·φ mod 2π`.
    pub fn apply_inv(&self, p: TorusPoint) -> TorusPoint {
        let [x, y] = p.0;
        TorusPoint::new(x - y, 2.0 * y - x)
    }

    /// Kick on the tangent space: block `diag(S, 1)`.
    pub fn kick_tangent(&self, y: [f64; 3]) -> [f64; 3] {
        [2.0 * y[0] + y[1], y[0] + y[1], y[2]]
    }

    /// `S^m mod n` for any integer `m` (negative powers via the inverse),
    /// by binary exponentiation in `(ℤ/nℤ)^{2×2}`.
    pub fn pow_mod(&self, m: i64, n: i64) -> [[i64; 2]; 2] {
        debug_assert!(n > 0);
        let base = if m >= 0 { self.matrix } else { self.inverse };
        let mut e = m.unsigned_abs();
        let mut acc = [[1, 0], [0, 1]];
        let mut b = [[base[0][0].rem_euclid(n), base[0][1].rem_euclid(n)], [
            base[1][0].rem_euclid(n),
            base[1][1].rem_euclid(n),
        ]];
        while e > 0 {
            if e & 1 == 1 {
                acc = mat_mul_mod(acc, b, n);
            }
            b = mat_mul_mod(b, b, n);
            e >>= 1;
        }
        acc
    }
}

fn mat_mul_mod(a: [[i64; 2]; 2], b: [[i64; 2]; 2], n: i64) -> [[i64; 2]; 2] {
    let mut out = [[0i64; 2]; 2];
    for i in 0..2 {
        for j in 0..2 {
            out[i][j] = (a[i][0] * b[0][j] + a[i][1] * b[1][j]).rem_euclid(n);
        }
    }
    out
}

/// Eigen-direction index {+, −}.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Sign {
    Plus,
    Minus,
}

impl Sign {
    pub fn factor(self) -> f64 {
        match self {
            Sign::Plus => 1.0,
            Sign::Minus => -1.0,
        }
    }

    pub fn opposite(self) -> Sign {
        match self {
            Sign::Plus => Sign::Minus,
            Sign::Minus => Sign::Plus,
        }
    }

    pub const BOTH: [Sign; 2] = [Sign::Plus, Sign::Minus];
}
