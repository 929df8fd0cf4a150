//! Locked phase w₀, dissipation rate Γ and the dissipation envelope.
//!
//! The synchronization hypotheses require a phase w₀ with
//! `γ̄₀(φ, w₀) = ∫₀^{2π} g(Sφ, w₀+t, t) dt = 0` and
//! `Γ = γ̄₁(φ, w₀) = ∫₀^{2π} ∂_w g(Sφ, w₀+t, t) dt < 0`, both independent
//! of φ. The solver scans the 1D φ-averaged `γ̄₀`, bisects each sign change,
//! verifies φ-independence on the lattice, and keeps the root with the most
//! negative Γ (strongest contraction), reporting all of them.

use crate::catmap::{CatMap, TorusPoint};
use crate::grid::{simpson_full, GridSpec, PhiField};
use crate::trig::{TrigPoly, TWO_PI};
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Root-finding tolerance on the φ-averaged γ̄₀.
pub const TOL_ROOT: f64 = 1e-12;
/// Hard bound on the allowed φ-dependence of γ̄₀ and γ̄₁ at the root.
pub const TOL_PHI_INDEPENDENCE: f64 = 1e-10;

#[derive(Debug, Error)]
pub enum HypothesisError {
    #[error("no locked phase with negative dissipation rate exists for this g")]
    NoRoot,
    #[error("{quantity} varies with φ (spread {spread:.3e} > {tol:.1e}); hypotheses require φ-independence")]
    PhiDependent { quantity: &'static str, spread: f64, tol: f64 },
}

/// Locked phase, dissipation rate and the auxiliary expansion parameter μ
/// (tied to ε when the series is resummed).
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PhaseConstants {
    pub w0: f64,
    pub gamma: f64,
    pub mu: f64,
}

impl PhaseConstants {
    pub fn at_mu(self, mu: f64) -> Self {
        PhaseConstants { mu, ..self }
    }

    /// Multiplier of the linearized clock recursion, `λ = e^{μΓ}`.
    pub fn lambda_u(&self) -> f64 {
        (self.mu * self.gamma).exp()
    }
}

#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
pub struct W0Root {
    pub w0: f64,
    pub gamma: f64,
}

/// Everything the solver saw: all roots, the chosen one, φ-independence spreads.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct W0Report {
    pub roots: Vec<W0Root>,
    pub chosen: usize,
    pub gamma0_spread: f64,
    pub gamma1_spread: f64,
}

/// φ-averaged `γ̄₀(w)` as a function of the trial phase. Only wavevectors with
/// `k₁ = k₂ = 0` survive the torus average (S is invertible, so `Sᵀk ≠ 0`
/// for `k ≠ 0`), which reduces the scan to a cheap 1D function.
fn mean_gamma0(g: &TrigPoly, grid: GridSpec, w: f64) -> f64 {
    let t = grid.t_values();
    let mut row = vec![0.0; t.len()];
    let reduced = TrigPoly::new(
        g.terms
            .iter()
            .filter(|term| term.wave[0] == 0 && term.wave[1] == 0)
            .copied()
            .collect(),
    );
    reduced.accumulate_unperturbed_row([0.0, 0.0], w, &t, 1.0, &mut row);
    simpson_full(&row, grid.t_step())
}

fn mean_gamma1(g: &TrigPoly, grid: GridSpec, w: f64) -> f64 {
    mean_gamma0(&g.deriv(2), grid, w)
}

/// `γ̄ᵢ(φ, w₀)` over the full lattice (Simpson in t at each site).
fn gamma_bar_field(poly: &TrigPoly, cat: &CatMap, grid: GridSpec, w0: f64) -> PhiField {
    let t = grid.t_values();
    let h = grid.t_step();
    let mut row = vec![0.0; t.len()];
    PhiField::from_fn(grid.n_phi, |i, j| {
        let phi = grid.phi(i, j);
        let sphi = cat.apply(TorusPoint::new(phi[0], phi[1]));
        row.iter_mut().for_each(|v| *v = 0.0);
        poly.accumulate_unperturbed_row(sphi.0, w0, &t, 1.0, &mut row);
        simpson_full(&row, h)
    })
}

/// Find the locked phase: scan [0, 2π) at 1024 points, bisect each bracket
/// to `TOL_ROOT`, check the hypotheses, pick the most negative Γ.
pub fn solve_w0(g: &TrigPoly, grid: GridSpec) -> Result<(PhaseConstants, W0Report), HypothesisError> {
    let cat = CatMap::new();
    let scan = 1024;
    let mut roots: Vec<W0Root> = Vec::new();
    let f = |w: f64| mean_gamma0(g, grid, w);
    let scale = g.amplitude().max(1.0) * TWO_PI;
    let push_root = |roots: &mut Vec<W0Root>, w: f64| {
        let w0 = w.rem_euclid(TWO_PI);
        let gamma = mean_gamma1(g, grid, w0);
        if roots
            .iter()
            .all(|r| crate::catmap::circ_dist(r.w0, w0) > 1e-8)
        {
            roots.push(W0Root { w0, gamma });
        }
    };
    let mut prev_w = 0.0;
    let mut prev_v = f(0.0);
    if prev_v.abs() < TOL_ROOT * scale {
        push_root(&mut roots, 0.0);
    }
    for k in 1..=scan {
        let w = TWO_PI * k as f64 / scan as f64;
        let v = f(w);
        if v.abs() < TOL_ROOT * scale {
            push_root(&mut roots, w);
        } else if prev_v.abs() >= TOL_ROOT * scale && (prev_v < 0.0) != (v < 0.0) {
            // sign change strictly inside [prev_w, w]: bisect
            let (mut lo, mut hi) = (prev_w, w);
            let mut flo = prev_v;
            while hi - lo > TOL_ROOT {
                let mid = 0.5 * (lo + hi);
                let fm = f(mid);
                if fm == 0.0 {
                    lo = mid;
                    hi = mid;
                } else if (flo < 0.0) != (fm < 0.0) {
                    hi = mid;
                } else {
                    lo = mid;
                    flo = fm;
                }
            }
            push_root(&mut roots, 0.5 * (lo + hi));
        }
        prev_w = w;
        prev_v = v;
    }

    // Degenerate case: the φ-averaged γ̄₀ is identically zero in w. Every w
    // zeroes the average; dissipation then decides the candidate.
    if roots.is_empty() {
        let all_zero = (0..64).all(|k| f(TWO_PI * k as f64 / 64.0).abs() < TOL_ROOT * scale);
        if all_zero {
            let mut best = W0Root { w0: 0.0, gamma: mean_gamma1(g, grid, 0.0) };
            for k in 1..scan {
                let w = TWO_PI * k as f64 / scan as f64;
                let gamma = mean_gamma1(g, grid, w);
                if gamma < best.gamma {
                    best = W0Root { w0: w, gamma };
                }
            }
            roots.push(best);
        }
    }
    if roots.is_empty() {
        return Err(HypothesisError::NoRoot);
    }

    // The mean only sees k₁₂ = 0 modes; a candidate root must also zero the
    // full lattice field, otherwise the hypotheses are φ-dependent.
    let mut spreads = Vec::with_capacity(roots.len());
    for r in &roots {
        spreads.push(gamma_bar_field(g, &cat, grid, r.w0).sup_norm());
    }
    let admissible: Vec<usize> =
        (0..roots.len()).filter(|&k| spreads[k] <= TOL_PHI_INDEPENDENCE).collect();
    if admissible.is_empty() {
        let best = spreads.iter().cloned().fold(f64::INFINITY, f64::min);
        return Err(HypothesisError::PhiDependent {
            quantity: "gamma0_bar",
            spread: best,
            tol: TOL_PHI_INDEPENDENCE,
        });
    }
    let negative: Vec<usize> =
        admissible.iter().copied().filter(|&k| roots[k].gamma < 0.0).collect();
    if negative.is_empty() {
        return Err(HypothesisError::NoRoot);
    }
    let chosen = *negative
        .iter()
        .min_by(|&&a, &&b| roots[a].gamma.partial_cmp(&roots[b].gamma).unwrap())
        .unwrap();
    let w0 = roots[chosen].w0;
    let g0_spread = spreads[chosen];

    let g1_field = gamma_bar_field(&g.deriv(2), &cat, grid, w0);
    let (lo, hi) = g1_field.min_max();
    let g1_spread = hi - lo;
    if g1_spread > TOL_PHI_INDEPENDENCE {
        return Err(HypothesisError::PhiDependent {
            quantity: "gamma1_bar",
            spread: g1_spread,
            tol: TOL_PHI_INDEPENDENCE,
        });
    }

    let constants = PhaseConstants { w0, gamma: roots[chosen].gamma, mu: 0.0 };
    let report = W0Report { roots, chosen, gamma0_spread: g0_spread, gamma1_spread: g1_spread };
    Ok((constants, report))
}

/// Partial dissipation integral `Γ(φ, t, τ) = ∫_τ^t γ₁(φ, τ′) dτ′`,
/// evaluated in closed form (γ₁ along the unperturbed trajectory is a pure
/// trigonometric function of τ′, so the primitive is exact and the integral
/// is additive to roundoff).
pub fn gamma_envelope(g: &TrigPoly, w0: f64, t: f64, tau: f64, phi: TorusPoint) -> f64 {
    assert!((0.0..=TWO_PI).contains(&tau) && tau <= t && t <= TWO_PI, "need 0 ≤ τ ≤ t ≤ 2π");
    let cat = CatMap::new();
    let sphi = cat.apply(phi);
    g.deriv(2).unperturbed_t_integral(sphi.0, w0, tau, t)
}

/// Per-site cumulative dissipation `𝒢(φ, t_k) = Γ(φ, t_k, 0)` on the grid,
/// plus the exponential kernel rows used by the series recursion.
#[derive(Clone, Debug)]
pub struct DissipationKernel {
    /// 𝒢(φ, t_k)
    pub gee: crate::grid::PhiTimeField,
}

impl DissipationKernel {
    pub fn build(g: &TrigPoly, cat: &CatMap, grid: GridSpec, w0: f64) -> Self {
        let g1 = g.deriv(2);
        let t = grid.t_values();
        let mut gee = crate::grid::PhiTimeField::zeros(grid);
        for i in 0..grid.n_phi {
            for j in 0..grid.n_phi {
                let phi = grid.phi(i, j);
                let sphi = cat.apply(TorusPoint::new(phi[0], phi[1]));
                let row = gee.row_mut(i, j);
                for (k, &tk) in t.iter().enumerate() {
                    row[k] = g1.unperturbed_t_integral(sphi.0, w0, 0.0, tk);
                }
            }
        }
        DissipationKernel { gee }
    }
}
