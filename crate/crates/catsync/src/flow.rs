//! Exact simulation of the kicked flow, its 2π-Poincaré map and tangent map.
//!
//! The δ-kick is applied as an exact matrix multiply at `t = 2πk⁺` (never a
//! narrow pulse); between kicks the smooth part `ẋ = εf`, `ẇ = 1 + εg` is
//! integrated with a fixed-step classical RK4. Angles accumulate unreduced
//! inside one segment and are reduced mod 2π only at segment boundaries.
//! Tangent vectors ride along the same RK4 stages, so the tangent step is the
//! exact derivative of the discrete base step.

use crate::catmap::{CatMap, FullState};
use crate::coupling::CouplingSpec;
use crate::trig::{Phase, TrigPoly, TWO_PI};
use thiserror::Error;

pub const DEFAULT_DT: f64 = TWO_PI / 512.0;

#[derive(Debug, Error)]
pub enum FlowError {
    #[error("flow window must satisfy 0 ≤ t0 < t1 ≤ 2π, got [{0}, {1}]")]
    InvalidWindow(f64, f64),
    #[error("step size must be positive, got {0}")]
    InvalidStep(f64),
}

/// Flattened term table: every term as `c · cos(k·v + off)`.
#[derive(Clone, Debug, Default)]
struct CompiledPoly {
    terms: Vec<(f64, [f64; 4], f64)>,
}

impl CompiledPoly {
    fn build(p: &TrigPoly) -> Self {
        CompiledPoly {
            terms: p
                .terms
                .iter()
                .filter(|t| t.coeff != 0.0)
                .map(|t| {
                    let k = [
                        t.wave[0] as f64,
                        t.wave[1] as f64,
                        t.wave[2] as f64,
                        t.wave[3] as f64,
                    ];
                    let off = match t.phase {
                        Phase::Cos => 0.0,
                        Phase::Sin => -std::f64::consts::FRAC_PI_2,
                    };
                    (t.coeff, k, off)
                })
                .collect(),
        }
    }

    #[inline]
    fn eval(&self, v: [f64; 4]) -> f64 {
        let mut acc = 0.0;
        for (c, k, off) in &self.terms {
            acc += c * (k[0] * v[0] + k[1] * v[1] + k[2] * v[2] + k[3] * v[3] + off).cos();
        }
        acc
    }
}

/// Precompiled field tables for the smooth part of the flow and its Jacobian.
#[derive(Clone, Debug)]
pub struct FlowEngine {
    pub cat: CatMap,
    pub epsilon: f64,
    pub dt: f64,
    f1: CompiledPoly,
    f2: CompiledPoly,
    g: CompiledPoly,
    /// Cartesian Jacobian rows of (f₁, f₂, g) in (x₁, x₂, w).
    jac: [[CompiledPoly; 3]; 3],
    f_zero: bool,
}

impl FlowEngine {
    pub fn new(spec: &CouplingSpec, dt: f64) -> Self {
        let fields = [&spec.f1, &spec.f2, &spec.g];
        let jac = std::array::from_fn(|i| {
            std::array::from_fn(|a| {
                let axis = if a == 2 { 2 } else { a };
                CompiledPoly::build(&fields[i].deriv(axis))
            })
        });
        FlowEngine {
            cat: CatMap::new(),
            epsilon: spec.epsilon,
            dt,
            f1: CompiledPoly::build(&spec.f1),
            f2: CompiledPoly::build(&spec.f2),
            g: CompiledPoly::build(&spec.g),
            jac,
            f_zero: spec.f_is_zero(),
        }
    }

    #[inline]
    fn rhs(&self, s: [f64; 3], t: f64) -> [f64; 3] {
        let v = [s[0], s[1], s[2], t];
        if self.f_zero {
            [0.0, 0.0, 1.0 + self.epsilon * self.g.eval(v)]
        } else {
            [
                self.epsilon * self.f1.eval(v),
                self.epsilon * self.f2.eval(v),
                1.0 + self.epsilon * self.g.eval(v),
            ]
        }
    }

    #[inline]
    fn jac_at(&self, s: [f64; 3], t: f64) -> [[f64; 3]; 3] {
        let v = [s[0], s[1], s[2], t];
        let mut out = [[0.0; 3]; 3];
        let rows = if self.f_zero { 2..3 } else { 0..3 };
        for i in rows {
            for a in 0..3 {
                out[i][a] = self.epsilon * self.jac[i][a].eval(v);
            }
        }
        out
    }

    /// One RK4 step of the base state and `NT` tangent columns.
    #[inline]
    fn rk4_step<const NT: usize>(
        &self,
        s: &mut [f64; 3],
        ys: &mut [[f64; 3]; NT],
        t: f64,
        h: f64,
    ) {
        #[inline]
        fn mv(j: &[[f64; 3]; 3], y: [f64; 3]) -> [f64; 3] {
            [
                j[0][0] * y[0] + j[0][1] * y[1] + j[0][2] * y[2],
                j[1][0] * y[0] + j[1][1] * y[1] + j[1][2] * y[2],
                j[2][0] * y[0] + j[2][1] * y[1] + j[2][2] * y[2],
            ]
        }
        #[inline]
        fn axpy(a: f64, x: [f64; 3], y: [f64; 3]) -> [f64; 3] {
            [y[0] + a * x[0], y[1] + a * x[1], y[2] + a * x[2]]
        }

        let k1 = self.rhs(*s, t);
        let j1 = self.jac_at(*s, t);
        let s2 = axpy(0.5 * h, k1, *s);
        let k2 = self.rhs(s2, t + 0.5 * h);
        let j2 = self.jac_at(s2, t + 0.5 * h);
        let s3 = axpy(0.5 * h, k2, *s);
        let k3 = self.rhs(s3, t + 0.5 * h);
        let j3 = self.jac_at(s3, t + 0.5 * h);
        let s4 = axpy(h, k3, *s);
        let k4 = self.rhs(s4, t + h);
        let j4 = self.jac_at(s4, t + h);

        for i in 0..3 {
            s[i] += h / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]);
        }
        for y in ys.iter_mut() {
            let m1 = mv(&j1, *y);
            let m2 = mv(&j2, axpy(0.5 * h, m1, *y));
            let m3 = mv(&j3, axpy(0.5 * h, m2, *y));
            let m4 = mv(&j4, axpy(h, m3, *y));
            for i in 0..3 {
                y[i] += h / 6.0 * (m1[i] + 2.0 * m2[i] + 2.0 * m3[i] + m4[i]);
            }
        }
    }

    fn integrate<const NT: usize>(
        &self,
        mut s: [f64; 3],
        ys: &mut [[f64; 3]; NT],
        t0: f64,
        t1: f64,
    ) -> [f64; 3] {
        let span = t1 - t0;
        let n_steps = ((span / self.dt).round() as usize).max(1);
        let h = span / n_steps as f64;
        let mut t = t0;
        for _ in 0..n_steps {
            self.rk4_step(&mut s, ys, t, h);
            t += h;
        }
        s
    }

    /// Kick + smooth flow over one full period, state only.
    pub fn poincare(&self, s: FullState) -> FullState {
        let kicked = self.cat.apply(s.x);
        let out = self.integrate::<0>([kicked.x1(), kicked.x2(), s.w], &mut [], 0.0, TWO_PI);
        FullState::new(out[0], out[1], out[2])
    }

    /// Kick + smooth flow carrying a full tangent frame (columns).
    pub fn poincare_with_frame(
        &self,
        s: FullState,
        frame: [[f64; 3]; 3],
    ) -> (FullState, [[f64; 3]; 3]) {
        let kicked = self.cat.apply(s.x);
        let mut ys = frame.map(|y| self.cat.kick_tangent(y));
        let out = self.integrate::<3>([kicked.x1(), kicked.x2(), s.w], &mut ys, 0.0, TWO_PI);
        (FullState::new(out[0], out[1], out[2]), ys)
    }

    /// Full tangent matrix `DS_ε^{2π}` at `s`, row-major (`out[i][j] = ∂ᵢ'/∂ⱼ`).
    pub fn poincare_jacobian(&self, s: FullState) -> [[f64; 3]; 3] {
        let id = [[1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]];
        let cols = self.poincare_with_frame(s, id).1;
        std::array::from_fn(|i| std::array::from_fn(|j| cols[j][i]))
    }
}

/// Integrate the smooth part only over `[t0, t1] ⊆ [0, 2π]`; the kick must be
/// handled by the caller.
pub fn flow_segment(
    s: FullState,
    spec: &CouplingSpec,
    t0: f64,
    t1: f64,
    dt: f64,
) -> Result<FullState, FlowError> {
    if !(0.0 <= t0 && t0 < t1 && t1 <= TWO_PI) {
        return Err(FlowError::InvalidWindow(t0, t1));
    }
    if dt <= 0.0 {
        return Err(FlowError::InvalidStep(dt));
    }
    let engine = FlowEngine::new(spec, dt);
    let out = engine.integrate::<0>([s.x.x1(), s.x.x2(), s.w], &mut [], t0, t1);
    Ok(FullState::new(out[0], out[1], out[2]))
}

/// The 2π-Poincaré map: kick `x → Sx` at `t = 0⁺`, then the smooth flow
/// over `(0, 2π]`.
pub fn poincare_map(s: FullState, spec: &CouplingSpec, dt: f64) -> FullState {
    FlowEngine::new(spec, dt).poincare(s)
}

/// Tangent map `DS_ε^{2π}(s)·y`: kick `Λ = diag(S, 1)`, then the variational
/// flow `ẏ = ε ∂f(S_ε^t x, t) y` along the concurrently integrated base
/// trajectory.
pub fn tangent_step(s: FullState, y: [f64; 3], spec: &CouplingSpec, dt: f64) -> [f64; 3] {
    let engine = FlowEngine::new(spec, dt);
    let kicked = engine.cat.apply(s.x);
    let mut ys = [engine.cat.kick_tangent(y)];
    engine.integrate::<1>([kicked.x1(), kicked.x2(), s.w], &mut ys, 0.0, TWO_PI);
    ys[0]
}
