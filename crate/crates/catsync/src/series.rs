//! Order-by-order construction of the invariant-manifold data.
//!
//! Writing the conjugated solution as
//! `x(t) = Sφ + Sh(φ) + a(φ,t)`, `w(t) = w₀ + t + e^{μΓ(φ,t,0)}U(φ) + ξ(φ,t)`
//! and expanding in ε at fixed auxiliary parameter μ gives, per order n, four
//! coefficient functions. The t-dependent ones (ξ, a_±) come from running
//! integrals of the dressed Taylor coefficients of g and f along the
//! unperturbed trajectory; the t-independent ones (U, h_±) solve cohomology
//! equations `u(Sφ) = λ u(φ) + r(φ)` through geometric sums over `S^m φ`.
//! On the lattice those sums are exact index permutations.
//!
//! The u-side sums contract at rate `λ = e^{μΓ}`, which approaches 1 as
//! μ → 0, so their truncation depth is chosen adaptively from μΓ; the h-side
//! (and every tangent-frame) sum contracts at the fixed rate `λ₊⁻¹` and uses
//! the configured `m_sum` cutoff.

use crate::catmap::{CatMap, Sign, TorusPoint};
use crate::constants::{DissipationKernel, PhaseConstants};
use crate::coupling::CouplingSpec;
use crate::flow::{poincare_map, FlowEngine};
use crate::grid::{cumulative_integral, shift_permutation, GridSpec, PhiField, PhiTimeField};
use crate::trig::TrigPoly;
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Default m-sum cutoff for the λ₊-rate sums: tail ≈ λ₊^{-40} ≈ 2e-17.
pub const DEFAULT_M_SUM: usize = 40;
/// Hard cap for the adaptively deepened u-side sums.
pub const M_SUM_CAP: usize = 4096;
/// Target relative tail for the u-side sums.
const U_TAIL_TARGET: f64 = 1e-14;

#[derive(Debug, Error)]
pub enum SeriesError {
    #[error("order {missing} required before order {requested} can be built")]
    MissingOrder { missing: usize, requested: usize },
}

/// Truncation depth for a geometric sum with per-term ratio `ratio < 1`.
pub fn adaptive_depth(ratio: f64, floor: usize) -> usize {
    if ratio <= 0.0 || ratio >= 1.0 {
        return M_SUM_CAP;
    }
    let needed = (U_TAIL_TARGET.ln() / ratio.ln()).ceil() as usize;
    needed.clamp(floor, M_SUM_CAP)
}

/// Per-order coefficient functions on the grid.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct OrderData {
    pub xi: PhiTimeField,
    pub a_plus: PhiTimeField,
    pub a_minus: PhiTimeField,
    pub u_cap: PhiField,
    pub h_plus: PhiField,
    pub h_minus: PhiField,
}

impl OrderData {
    pub fn sup_norm(&self) -> f64 {
        [
            self.xi.sup_norm(),
            self.a_plus.sup_norm(),
            self.a_minus.sup_norm(),
            self.u_cap.sup_norm(),
            self.h_plus.sup_norm(),
            self.h_minus.sup_norm(),
        ]
        .into_iter()
        .fold(0.0, f64::max)
    }
}

/// Numerical health data recorded while building a bundle.
#[derive(Clone, Debug, Default, Serialize, Deserialize)]
pub struct SeriesDiagnostics {
    /// Depth actually used by the u-side geometric sums.
    pub u_sum_depth: usize,
    /// Geometric tail bound of the u-side sums (relative).
    pub u_tail_bound: f64,
    /// Geometric tail bound of the h-side sums (relative), λ₊^{-m_sum}.
    pub h_tail_bound: f64,
    /// Per-order sup norms max{|ξ⁽ⁿ⁾|, |U⁽ⁿ⁾|, |a⁽ⁿ⁾|, |h⁽ⁿ⁾|}.
    pub order_sup_norms: Vec<f64>,
    /// Fitted growth constant: sup_n ≤ C₃ⁿ μ^{-[(2n-1)/3]}.
    pub growth_constant: f64,
    /// Heuristic convergence radius C₃⁻¹ μ^{2/3}.
    pub radius_estimate: f64,
    /// S^m evaluation is an exact lattice permutation; kept for the record.
    pub interpolation_error: f64,
    /// Sup-norm defect of the order-wise boundary identities at t = 2π.
    pub boundary_defect: f64,
}

/// The truncated invariant-manifold series with its constants and grids.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct SeriesBundle {
    pub grid: GridSpec,
    pub constants: PhaseConstants,
    pub m_sum: usize,
    pub n_max: usize,
    pub orders: Vec<OrderData>,
    pub diagnostics: SeriesDiagnostics,
}

/// Dressed Taylor coefficients of a field about the unperturbed trajectory,
/// indexed by q = (q₊, q₋, q₃): `(1/q!) ∂₊^{q₊} ∂₋^{q₋} ∂_w^{q₃} p`.
pub struct TaylorTable {
    /// (q, poly) pairs, |q| ≥ 0, coefficient already divided by q!.
    pub entries: Vec<([usize; 3], TrigPoly)>,
}

impl TaylorTable {
    pub fn build(p: &TrigPoly, max_total: usize, cat: &CatMap) -> Self {
        let mut entries = Vec::new();
        let fact = |k: usize| -> f64 { (1..=k).map(|v| v as f64).product::<f64>().max(1.0) };
        for total in 0..=max_total {
            for qp in 0..=total {
                for qm in 0..=(total - qp) {
                    let q3 = total - qp - qm;
                    let poly = p
                        .mixed_partial([qp, qm, q3], cat.x_plus, cat.x_minus)
                        .scaled(1.0 / (fact(qp) * fact(qm) * fact(q3)));
                    entries.push(([qp, qm, q3], poly));
                }
            }
        }
        TaylorTable { entries }
    }

    pub fn get(&self, q: [usize; 3]) -> Option<&TrigPoly> {
        self.entries.iter().find(|(qq, _)| *qq == q).map(|(_, p)| p)
    }
}

/// Ordered compositions of `total` into `parts` strictly positive integers.
pub fn compositions(total: usize, parts: usize) -> Vec<Vec<usize>> {
    if parts == 0 {
        return if total == 0 { vec![vec![]] } else { vec![] };
    }
    if total < parts {
        return vec![];
    }
    let mut out = Vec::new();
    if parts == 1 {
        out.push(vec![total]);
        return out;
    }
    for first in 1..=(total - parts + 1) {
        for rest in compositions(total - first, parts - 1) {
            let mut v = Vec::with_capacity(parts);
            v.push(first);
            v.extend(rest);
            out.push(v);
        }
    }
    out
}

/// Work buffers shared by the per-order builders.
pub struct SeriesWorkspace {
    pub cat: CatMap,
    pub grid: GridSpec,
    pub t: Vec<f64>,
    /// e^{-μ𝒢(φ,t)} rows
    pub kernel_neg: PhiTimeField,
    /// e^{+μ𝒢(φ,t)} rows
    pub kernel_pos: PhiTimeField,
    pub g_taylor: TaylorTable,
    pub f_taylor: [TaylorTable; 2],
    pub f_zero: bool,
    /// per-order u⁽ⁿ⁾(φ,t) = e^{μ𝒢}U⁽ⁿ⁾ + ξ⁽ⁿ⁾ and d_α⁽ⁿ⁾ = λ_α h_α⁽ⁿ⁾ + a_α⁽ⁿ⁾
    pub u_rows: Vec<PhiTimeField>,
    pub d_plus_rows: Vec<PhiTimeField>,
    pub d_minus_rows: Vec<PhiTimeField>,
}

impl SeriesWorkspace {
    pub fn new(
        spec: &CouplingSpec,
        constants: &PhaseConstants,
        grid: GridSpec,
        n_max: usize,
    ) -> Self {
        let cat = CatMap::new();
        let kern = DissipationKernel::build(&spec.g, &cat, grid, constants.w0);
        let mut kernel_neg = PhiTimeField::zeros(grid);
        let mut kernel_pos = PhiTimeField::zeros(grid);
        for (&gee, (n, p)) in kern
            .gee
            .data
            .iter()
            .zip(kernel_neg.data.iter_mut().zip(kernel_pos.data.iter_mut()))
        {
            let e = (constants.mu * gee).exp();
            *p = e;
            *n = 1.0 / e;
        }
        let max_q = n_max.saturating_sub(1);
        let f_plus = crate::trig::eigen_component(&spec.f1, &spec.f2, cat.x_plus);
        let f_minus = crate::trig::eigen_component(&spec.f1, &spec.f2, cat.x_minus);
        SeriesWorkspace {
            grid,
            t: grid.t_values(),
            kernel_neg,
            kernel_pos,
            g_taylor: TaylorTable::build(&spec.g, max_q, &cat),
            f_taylor: [
                TaylorTable::build(&f_plus, max_q, &cat),
                TaylorTable::build(&f_minus, max_q, &cat),
            ],
            f_zero: spec.f_is_zero(),
            u_rows: Vec::new(),
            d_plus_rows: Vec::new(),
            d_minus_rows: Vec::new(),
            cat,
        }
    }

    /// Evaluate a dressed coefficient on the whole grid: poly at `(Sφ, w₀+t, t)`.
    fn dressed_rows(&self, poly: &TrigPoly, w0: f64) -> PhiTimeField {
        let mut out = PhiTimeField::zeros(self.grid);
        for i in 0..self.grid.n_phi {
            for j in 0..self.grid.n_phi {
                let phi = self.grid.phi(i, j);
                let sphi = self.cat.apply(TorusPoint::new(phi[0], phi[1]));
                poly.accumulate_unperturbed_row(sphi.0, w0, &self.t, 1.0, out.row_mut(i, j));
            }
        }
        out
    }

    /// Assemble the order-n source `Σ_q C_q(φ,t) Σ_{n̲} Π (lower-order rows)`.
    /// `star` excludes q = (0,0,0) and (0,0,1) (the u-linear term lives in
    /// the exponential kernel).
    fn source_rows(&self, table: &TaylorTable, w0: f64, n: usize, star: bool) -> PhiTimeField {
        let mut out = PhiTimeField::zeros(self.grid);
        if n == 1 {
            if let Some(p0) = table.get([0, 0, 0]) {
                if !p0.is_zero() {
                    out = self.dressed_rows(p0, w0);
                }
            }
            return out;
        }
        let len = out.data.len();
        for (q, poly) in &table.entries {
            let total_q = q[0] + q[1] + q[2];
            if total_q == 0 || total_q > n - 1 || poly.is_zero() {
                continue;
            }
            if star && *q == [0, 0, 1] {
                continue;
            }
            let mut weight = vec![0.0; len];
            let mut any = false;
            for comp in compositions(n - 1, total_q) {
                // slots: q₊ of d₊, then q₋ of d₋, then q₃ of u
                let mut factor_refs: Vec<&PhiTimeField> = Vec::with_capacity(total_q);
                for (slot, &ord) in comp.iter().enumerate() {
                    let bank = if slot < q[0] {
                        &self.d_plus_rows
                    } else if slot < q[0] + q[1] {
                        &self.d_minus_rows
                    } else {
                        &self.u_rows
                    };
                    factor_refs.push(&bank[ord - 1]);
                }
                if factor_refs.iter().any(|f| f.is_zero()) {
                    continue;
                }
                any = true;
                for idx in 0..len {
                    let mut prod = 1.0;
                    for f in &factor_refs {
                        prod *= f.data[idx];
                    }
                    weight[idx] += prod;
                }
            }
            if !any {
                continue;
            }
            let coeff = self.dressed_rows(poly, w0);
            for idx in 0..len {
                out.data[idx] += coeff.data[idx] * weight[idx];
            }
        }
        out
    }
}

/// Build the order-n data given all lower orders in the workspace.
fn build_order(
    ws: &mut SeriesWorkspace,
    constants: &PhaseConstants,
    m_sum: usize,
    n: usize,
) -> OrderData {
    let grid = ws.grid;
    let h = grid.t_step();
    let lambda_u = constants.lambda_u();
    let cat = ws.cat.clone();

    // u side: ξ⁽ⁿ⁾ and U⁽ⁿ⁾ from the starred G-source
    let src_u = ws.source_rows(&ws.g_taylor, constants.w0, n, true);
    let mut xi = PhiTimeField::zeros(grid);
    let mut r_u = PhiField::zeros(grid.n_phi);
    if !src_u.is_zero() {
        let mut damped = vec![0.0; grid.n_t + 1];
        let mut cum = vec![0.0; grid.n_t + 1];
        for i in 0..grid.n_phi {
            for j in 0..grid.n_phi {
                let neg = ws.kernel_neg.row(i, j);
                let pos = ws.kernel_pos.row(i, j);
                let src = src_u.row(i, j);
                for k in 0..=grid.n_t {
                    damped[k] = neg[k] * src[k];
                }
                cumulative_integral(&damped, h, &mut cum);
                let out = xi.row_mut(i, j);
                for k in 0..=grid.n_t {
                    out[k] = pos[k] * cum[k];
                }
                // r(φ) = ξ(φ, 2π): same quadrature path, so the cohomology
                // identity closes to the geometric tail
                r_u.set(i, j, out[grid.n_t]);
            }
        }
    }
    // U⁽ⁿ⁾(φ) = Σ_{m ≤ -1} λ^{-m-1} r(S^m φ)
    let depth_u = adaptive_depth(lambda_u, m_sum);
    let mut u_cap = PhiField::zeros(grid.n_phi);
    if !src_u.is_zero() {
        let mut scale = 1.0; // λ^{-m-1} at m = -1
        for mm in 1..=depth_u {
            let perm = shift_permutation(&cat, -(mm as i64), grid.n_phi);
            u_cap.add_shifted(&r_u, &perm, scale);
            scale *= lambda_u;
        }
    }

    // x side: a_α⁽ⁿ⁾ and h_α⁽ⁿ⁾ from the F_α sources
    let side = |sign: Sign| -> (PhiTimeField, PhiField) {
        let table = match sign {
            Sign::Plus => &ws.f_taylor[0],
            Sign::Minus => &ws.f_taylor[1],
        };
        let src = ws.source_rows(table, constants.w0, n, false);
        let mut a = PhiTimeField::zeros(grid);
        let mut h_field = PhiField::zeros(grid.n_phi);
        if src.is_zero() {
            return (a, h_field);
        }
        let mut r = PhiField::zeros(grid.n_phi);
        let mut cum = vec![0.0; grid.n_t + 1];
        for i in 0..grid.n_phi {
            for j in 0..grid.n_phi {
                let row = src.row(i, j);
                cumulative_integral(row, h, &mut cum);
                a.row_mut(i, j).copy_from_slice(&cum);
                r.set(i, j, cum[grid.n_t]);
            }
        }
        // h_α(φ) = -α Σ_{m ∈ ℤ_α} λ_α^{-m-1} r(S^m φ)
        let lam = cat.lambda(sign);
        match sign {
            Sign::Plus => {
                // m = 0, 1, 2, …, factor -λ₊^{-m-1}
                let mut scale = -1.0 / lam;
                for mm in 0..=m_sum {
                    let perm = shift_permutation(&cat, mm as i64, grid.n_phi);
                    h_field.add_shifted(&r, &perm, scale);
                    scale /= lam;
                }
            }
            Sign::Minus => {
                // m = -1, -2, …, factor +λ₋^{-m-1} = λ₋^{|m|-1}
                let mut scale = 1.0;
                for mm in 1..=m_sum {
                    let perm = shift_permutation(&cat, -(mm as i64), grid.n_phi);
                    h_field.add_shifted(&r, &perm, scale);
                    scale *= lam;
                }
            }
        }
        (a, h_field)
    };
    let (a_plus, h_plus) = side(Sign::Plus);
    let (a_minus, h_minus) = side(Sign::Minus);

    OrderData { xi, a_plus, a_minus, u_cap, h_plus, h_minus }
}

/// Push the derived rows u⁽ⁿ⁾ and d_±⁽ⁿ⁾ for a freshly built order.
fn push_derived_rows(ws: &mut SeriesWorkspace, cat: &CatMap, od: &OrderData) {
    let grid = ws.grid;
    let mut u = PhiTimeField::zeros(grid);
    let mut dp = PhiTimeField::zeros(grid);
    let mut dm = PhiTimeField::zeros(grid);
    for i in 0..grid.n_phi {
        for j in 0..grid.n_phi {
            let pos = ws.kernel_pos.row(i, j);
            let xi = od.xi.row(i, j);
            let ucap = od.u_cap.at(i, j);
            let ur = u.row_mut(i, j);
            for k in 0..=grid.n_t {
                ur[k] = pos[k] * ucap + xi[k];
            }
            let ap = od.a_plus.row(i, j);
            let am = od.a_minus.row(i, j);
            let hp = cat.lambda_plus * od.h_plus.at(i, j);
            let hm = cat.lambda_minus * od.h_minus.at(i, j);
            let dpr = dp.row_mut(i, j);
            let dmr = dm.row_mut(i, j);
            for k in 0..=grid.n_t {
                dpr[k] = hp + ap[k];
                dmr[k] = hm + am[k];
            }
        }
    }
    ws.u_rows.push(u);
    ws.d_plus_rows.push(dp);
    ws.d_minus_rows.push(dm);
}

/// First-order coefficients (ξ⁽¹⁾, U⁽¹⁾, a⁽¹⁾, h⁽¹⁾).
pub fn first_order(
    spec: &CouplingSpec,
    constants: &PhaseConstants,
    grid: GridSpec,
    m_sum: usize,
) -> OrderData {
    let mut ws = SeriesWorkspace::new(spec, constants, grid, 1);
    build_order(&mut ws, constants, m_sum, 1)
}

/// Order-n coefficients given a bundle holding all lower orders.
pub fn higher_order(
    n: usize,
    bundle: &SeriesBundle,
    spec: &CouplingSpec,
    constants: &PhaseConstants,
) -> Result<OrderData, SeriesError> {
    if n < 2 || bundle.orders.len() + 1 < n {
        return Err(SeriesError::MissingOrder { missing: bundle.orders.len() + 1, requested: n });
    }
    let mut ws = SeriesWorkspace::new(spec, constants, bundle.grid, n);
    let cat = ws.cat.clone();
    for od in bundle.orders.iter().take(n - 1) {
        push_derived_rows(&mut ws, &cat, od);
    }
    Ok(build_order(&mut ws, constants, bundle.m_sum, n))
}

impl SeriesBundle {
    /// Build the full bundle to order `n_max` at the constants' μ.
    pub fn build(
        spec: &CouplingSpec,
        constants: PhaseConstants,
        grid: GridSpec,
        m_sum: usize,
        n_max: usize,
    ) -> Self {
        let mut ws = SeriesWorkspace::new(spec, &constants, grid, n_max);
        let cat = ws.cat.clone();
        let mut orders = Vec::with_capacity(n_max);
        for n in 1..=n_max {
            let od = build_order(&mut ws, &constants, m_sum, n);
            push_derived_rows(&mut ws, &cat, &od);
            orders.push(od);
        }
        let mut bundle = SeriesBundle {
            grid,
            constants,
            m_sum,
            n_max,
            orders,
            diagnostics: SeriesDiagnostics::default(),
        };
        bundle.diagnostics = bundle.compute_diagnostics(&cat);
        bundle
    }

    fn compute_diagnostics(&self, cat: &CatMap) -> SeriesDiagnostics {
        let mu = self.constants.mu.max(f64::MIN_POSITIVE);
        let sup: Vec<f64> = self.orders.iter().map(|o| o.sup_norm()).collect();
        // fitted C₃ with sup_n ≤ C₃ⁿ μ^{-[(2n-1)/3]}
        let mut c3: f64 = 0.0;
        for (k, &s) in sup.iter().enumerate() {
            let n = k + 1;
            if s > 0.0 {
                let exponent = ((2 * n - 1) / 3) as f64;
                c3 = c3.max((s * mu.powf(exponent)).powf(1.0 / n as f64));
            }
        }
        let radius = if c3 > 0.0 { mu.powf(2.0 / 3.0) / c3 } else { f64::INFINITY };
        let lambda_u = self.constants.lambda_u();
        let depth_u = adaptive_depth(lambda_u, self.m_sum);
        let u_tail = if lambda_u < 1.0 {
            lambda_u.powi(depth_u as i32) / (1.0 - lambda_u)
        } else {
            f64::INFINITY
        };
        SeriesDiagnostics {
            u_sum_depth: depth_u,
            u_tail_bound: u_tail,
            h_tail_bound: cat.lambda_plus.powi(-(self.m_sum as i32)),
            order_sup_norms: sup,
            growth_constant: c3,
            radius_estimate: radius,
            interpolation_error: 0.0,
            boundary_defect: self.boundary_defect(cat),
        }
    }

    /// Order-wise boundary identities at t = 2π:
    /// `e^{μΓ} U⁽ⁿ⁾(φ) + ξ⁽ⁿ⁾(φ,2π) = U⁽ⁿ⁾(Sφ)` and
    /// `a_α⁽ⁿ⁾(φ,2π) = h_α⁽ⁿ⁾(Sφ) − λ_α h_α⁽ⁿ⁾(φ)`.
    pub fn boundary_defect(&self, cat: &CatMap) -> f64 {
        let n = self.grid.n_phi;
        let perm = shift_permutation(cat, 1, n);
        let lam_u = self.constants.lambda_u();
        let mut worst: f64 = 0.0;
        for od in &self.orders {
            let u_s = od.u_cap.shifted(&perm);
            let hp_s = od.h_plus.shifted(&perm);
            let hm_s = od.h_minus.shifted(&perm);
            for i in 0..n {
                for j in 0..n {
                    let d_u =
                        lam_u * od.u_cap.at(i, j) + od.xi.at(i, j, self.grid.n_t) - u_s.at(i, j);
                    let d_p = od.a_plus.at(i, j, self.grid.n_t)
                        - (hp_s.at(i, j) - cat.lambda_plus * od.h_plus.at(i, j));
                    let d_m = od.a_minus.at(i, j, self.grid.n_t)
                        - (hm_s.at(i, j) - cat.lambda_minus * od.h_minus.at(i, j));
                    worst = worst.max(d_u.abs()).max(d_p.abs()).max(d_m.abs());
                }
            }
        }
        worst
    }

    pub fn coefficient(&self, n: usize) -> &OrderData {
        &self.orders[n - 1]
    }
}

/// A resummed manifold: `H(φ) = φ + h(φ)`, `W(φ) = w₀ + U(φ)` on the lattice.
#[derive(Clone, Debug)]
pub struct Manifold {
    pub grid: GridSpec,
    pub epsilon: f64,
    pub w0: f64,
    /// cartesian components of h
    pub h1: PhiField,
    pub h2: PhiField,
    pub u: PhiField,
    /// set when ε exceeded the fitted convergence radius
    pub radius_warning: Option<String>,
}

impl Manifold {
    /// `H(φ)` (unreduced) and `W(φ)` at a lattice site.
    pub fn at_site(&self, i: usize, j: usize) -> ([f64; 2], f64) {
        let phi = self.grid.phi(i, j);
        ([phi[0] + self.h1.at(i, j), phi[1] + self.h2.at(i, j)], self.w0 + self.u.at(i, j))
    }

    /// Bilinear evaluation at an arbitrary φ.
    pub fn eval(&self, phi: [f64; 2]) -> ([f64; 2], f64) {
        (
            [phi[0] + self.h1.bilinear(phi), phi[1] + self.h2.bilinear(phi)],
            self.w0 + self.u.bilinear(phi),
        )
    }
}

/// Sum the truncated series at coupling ε (μ was tied when the bundle was
/// built). Warns, without failing, when ε exceeds the fitted radius:
/// extrapolation beyond it is explicitly allowed downstream.
pub fn assemble_manifold(bundle: &SeriesBundle, epsilon: f64) -> Manifold {
    let cat = CatMap::new();
    let n = bundle.grid.n_phi;
    let mut h1 = PhiField::zeros(n);
    let mut h2 = PhiField::zeros(n);
    let mut u = PhiField::zeros(n);
    let mut pow = 1.0;
    for od in &bundle.orders {
        pow *= epsilon;
        for i in 0..n {
            for j in 0..n {
                let hp = od.h_plus.at(i, j);
                let hm = od.h_minus.at(i, j);
                h1.set(i, j, h1.at(i, j) + pow * (hp * cat.x_plus[0] + hm * cat.x_minus[0]));
                h2.set(i, j, h2.at(i, j) + pow * (hp * cat.x_plus[1] + hm * cat.x_minus[1]));
                u.set(i, j, u.at(i, j) + pow * od.u_cap.at(i, j));
            }
        }
    }
    let radius_warning = if epsilon > bundle.diagnostics.radius_estimate {
        Some(format!(
            "epsilon {:.4} exceeds fitted radius {:.4}; resummation is an extrapolation",
            epsilon, bundle.diagnostics.radius_estimate
        ))
    } else {
        None
    };
    Manifold { grid: bundle.grid, epsilon, w0: bundle.constants.w0, h1, h2, u, radius_warning }
}

/// Sup over a `sample × sample` lattice-aligned set of the invariance defect
/// `|S_ε^{2π}(H(φ), W(φ)) − (H(Sφ), W(Sφ))|` (componentwise circular sup).
pub fn conjugation_residual(manifold: &Manifold, spec: &CouplingSpec, dt: f64, sample: usize) -> f64 {
    let n = manifold.grid.n_phi;
    assert!(sample > 0 && n % sample == 0, "sample must divide the lattice");
    let stride = n / sample;
    let engine = FlowEngine::new(spec, dt);
    let mut worst: f64 = 0.0;
    for i in (0..n).step_by(stride) {
        for j in (0..n).step_by(stride) {
            let (hx, w) = manifold.at_site(i, j);
            let mapped = engine.poincare(crate::catmap::FullState::new(hx[0], hx[1], w));
            let si = (2 * i + j) % n;
            let sj = (i + j) % n;
            let (hx_s, w_s) = manifold.at_site(si, sj);
            let d1 = crate::catmap::circ_dist(mapped.x.x1(), crate::catmap::reduce_angle(hx_s[0]));
            let d2 = crate::catmap::circ_dist(mapped.x.x2(), crate::catmap::reduce_angle(hx_s[1]));
            let dw = crate::catmap::circ_dist(mapped.w, crate::catmap::reduce_angle(w_s));
            worst = worst.max(d1).max(d2).max(dw);
        }
    }
    worst
}

/// Solve the constants at μ = ε and build the bundle.
pub fn build_bundle(
    spec: &CouplingSpec,
    grid: GridSpec,
    m_sum: usize,
    n_max: usize,
) -> Result<SeriesBundle, crate::constants::HypothesisError> {
    let (constants, _) = crate::constants::solve_w0(&spec.g, grid)?;
    Ok(SeriesBundle::build(spec, constants.at_mu(spec.epsilon), grid, m_sum, n_max))
}

/// Map one manifold site forward and return it with its conjugation target.
pub fn manifold_point_mapped(
    manifold: &Manifold,
    spec: &CouplingSpec,
    dt: f64,
    i: usize,
    j: usize,
) -> (crate::catmap::FullState, crate::catmap::FullState) {
    let (hx, w) = manifold.at_site(i, j);
    let mapped = poincare_map(crate::catmap::FullState::new(hx[0], hx[1], w), spec, dt);
    let n = manifold.grid.n_phi;
    let si = (2 * i + j) % n;
    let sj = (i + j) % n;
    let (hx_s, w_s) = manifold.at_site(si, sj);
    (mapped, crate::catmap::FullState::new(hx_s[0], hx_s[1], w_s))
}

// ---------------------------------------------------------------------------
// Versioned binary cache: JSON header + raw little-endian f64 arrays.
// ---------------------------------------------------------------------------

const BUNDLE_MAGIC: &[u8] = b"CATSYNC-BUNDLE-v1\n";

#[derive(Serialize, Deserialize)]
struct BundleHeader {
    grid: GridSpec,
    constants: PhaseConstants,
    m_sum: usize,
    n_max: usize,
    diagnostics: SeriesDiagnostics,
}

pub(crate) fn write_f64s(w: &mut impl std::io::Write, data: &[f64]) -> std::io::Result<()> {
    w.write_all(&(data.len() as u64).to_le_bytes())?;
    for v in data {
        w.write_all(&v.to_le_bytes())?;
    }
    Ok(())
}

pub(crate) fn read_f64s(r: &mut impl std::io::Read) -> std::io::Result<Vec<f64>> {
    let mut len8 = [0u8; 8];
    r.read_exact(&mut len8)?;
    let len = u64::from_le_bytes(len8) as usize;
    let mut out = Vec::with_capacity(len);
    let mut buf = [0u8; 8];
    for _ in 0..len {
        r.read_exact(&mut buf)?;
        out.push(f64::from_le_bytes(buf));
    }
    Ok(out)
}

impl SeriesBundle {
    pub fn save(&self, path: &std::path::Path) -> std::io::Result<()> {
        let mut w = std::io::BufWriter::new(std::fs::File::create(path)?);
        use std::io::Write;
        w.write_all(BUNDLE_MAGIC)?;
        let header = BundleHeader {
            grid: self.grid,
            constants: self.constants,
            m_sum: self.m_sum,
            n_max: self.n_max,
            diagnostics: self.diagnostics.clone(),
        };
        let hdr = serde_json::to_vec(&header).expect("header serializes");
        w.write_all(&(hdr.len() as u64).to_le_bytes())?;
        w.write_all(&hdr)?;
        for od in &self.orders {
            write_f64s(&mut w, &od.xi.data)?;
            write_f64s(&mut w, &od.a_plus.data)?;
            write_f64s(&mut w, &od.a_minus.data)?;
            write_f64s(&mut w, &od.u_cap.data)?;
            write_f64s(&mut w, &od.h_plus.data)?;
            write_f64s(&mut w, &od.h_minus.data)?;
        }
        Ok(())
    }

    pub fn load(path: &std::path::Path) -> std::io::Result<SeriesBundle> {
        let mut r = std::io::BufReader::new(std::fs::File::open(path)?);
        use std::io::Read;
        let mut magic = vec![0u8; BUNDLE_MAGIC.len()];
        r.read_exact(&mut magic)?;
        if magic != BUNDLE_MAGIC {
            return Err(std::io::Error::new(std::io::ErrorKind::InvalidData, "bad bundle magic"));
        }
        let mut len8 = [0u8; 8];
        r.read_exact(&mut len8)?;
        let mut hdr = vec![0u8; u64::from_le_bytes(len8) as usize];
        r.read_exact(&mut hdr)?;
        let header: BundleHeader = serde_json::from_slice(&hdr)
            .map_err(|e| std::io::Error::new(std::io::ErrorKind::InvalidData, e))?;
        let grid = header.grid;
        let mut orders = Vec::with_capacity(header.n_max);
        for _ in 0..header.n_max {
            let field3 = |data: Vec<f64>| PhiTimeField { n: grid.n_phi, nt: grid.n_t, data };
            let field2 = |data: Vec<f64>| PhiField { n: grid.n_phi, data };
            orders.push(OrderData {
                xi: field3(read_f64s(&mut r)?),
                a_plus: field3(read_f64s(&mut r)?),
                a_minus: field3(read_f64s(&mut r)?),
                u_cap: field2(read_f64s(&mut r)?),
                h_plus: field2(read_f64s(&mut r)?),
                h_minus: field2(read_f64s(&mut r)?),
            });
        }
        Ok(SeriesBundle {
            grid,
            constants: header.constants,
            m_sum: header.m_sum,
            n_max: header.n_max,
            orders,
            diagnostics: header.diagnostics,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::constants::solve_w0;
    use crate::trig::TWO_PI;
    use crate::coupling::{bidirectional_spec, clock_only_spec};
    use std::f64::consts::PI;

    fn constants_for(spec: &CouplingSpec, grid: GridSpec, mu: f64) -> PhaseConstants {
        solve_w0(&spec.g, grid).unwrap().0.at_mu(mu)
    }

    const GRID: GridSpec = GridSpec { n_phi: 32, n_t: 128 };

    #[test]
    fn compositions_are_ordered_and_complete() {
        assert_eq!(compositions(1, 1), vec![vec![1]]);
        assert_eq!(compositions(3, 2), vec![vec![1, 2], vec![2, 1]]);
        assert_eq!(compositions(2, 3), Vec::<Vec<usize>>::new());
        assert_eq!(compositions(4, 2).len(), 3);
    }

    #[test]
    fn f_zero_kills_displacement_orders() {
        let spec = clock_only_spec(0.05);
        let c = constants_for(&spec, GRID, 0.05);
        let od = first_order(&spec, &c, GRID, DEFAULT_M_SUM);
        assert!(od.a_plus.is_zero() && od.a_minus.is_zero());
        assert_eq!(od.h_plus.sup_norm(), 0.0);
        assert_eq!(od.h_minus.sup_norm(), 0.0);
        assert!(od.xi.sup_norm() > 0.0);
    }

    #[test]
    fn phi_independent_g_gives_phi_independent_u1() {
        // g = sin(w - t): γ₀(φ,t) = sin(w₀) = 0 at the root, so ξ⁽¹⁾ = U⁽¹⁾ ≡ 0,
        // trivially φ-independent; direct evaluation is the oracle.
        let g = TrigPoly::sin(1.0, [0, 0, 1, -1]);
        let spec = CouplingSpec::new(TrigPoly::zero(), TrigPoly::zero(), g, 0.05).unwrap();
        let c = constants_for(&spec, GRID, 0.05);
        assert!((c.w0 - PI).abs() < 1e-9);
        let od = first_order(&spec, &c, GRID, DEFAULT_M_SUM);
        let (lo, hi) = od.u_cap.min_max();
        assert!(hi - lo < 1e-10);
        assert!(od.xi.sup_norm() < 1e-12);
    }

    #[test]
    fn first_order_xi_matches_direct_quadrature() {
        // ξ⁽¹⁾(φ,t) = ∫₀^t e^{μΓ(φ,t,τ)} γ₀(φ,τ) dτ against a slow midpoint rule
        let spec = clock_only_spec(0.05);
        let mu = 0.05;
        let c = constants_for(&spec, GRID, mu);
        let od = first_order(&spec, &c, GRID, DEFAULT_M_SUM);
        let cat = CatMap::new();
        let (i, j) = (5, 17);
        let phi = GRID.phi(i, j);
        let sphi = cat.apply(TorusPoint::new(phi[0], phi[1]));
        let g1 = spec.g.deriv(2);
        let t_end = GRID.t_values()[96];
        let nq = 3000;
        let hq = t_end / nq as f64;
        let mut acc = 0.0;
        for k in 0..nq {
            let tau = (k as f64 + 0.5) * hq;
            let gamma0 = spec.g.eval([sphi.x1(), sphi.x2(), c.w0 + tau, tau]);
            let env = g1.unperturbed_t_integral(sphi.0, c.w0, tau, t_end);
            acc += (mu * env).exp() * gamma0 * hq;
        }
        let got = od.xi.at(i, j, 96);
        assert!((got - acc).abs() < 1e-6, "{got} vs {acc}");
    }

    #[test]
    fn first_order_u_solves_cohomology() {
        // e^{μΓ} U⁽¹⁾(φ) + ξ⁽¹⁾(φ,2π) = U⁽¹⁾(Sφ) up to the geometric tail
        let spec = clock_only_spec(0.1);
        let c = constants_for(&spec, GRID, 0.1);
        let od = first_order(&spec, &c, GRID, DEFAULT_M_SUM);
        let cat = CatMap::new();
        let perm = shift_permutation(&cat, 1, GRID.n_phi);
        let shifted = od.u_cap.shifted(&perm);
        let lam = c.lambda_u();
        let mut worst: f64 = 0.0;
        for i in 0..GRID.n_phi {
            for j in 0..GRID.n_phi {
                let lhs = lam * od.u_cap.at(i, j) + od.xi.at(i, j, GRID.n_t);
                worst = worst.max((lhs - shifted.at(i, j)).abs());
            }
        }
        assert!(worst < 1e-10, "cohomology defect {worst}");
    }

    #[test]
    fn first_order_h_solves_cohomology() {
        let spec = bidirectional_spec(0.05);
        let c = constants_for(&spec, GRID, 0.05);
        let od = first_order(&spec, &c, GRID, DEFAULT_M_SUM);
        let cat = CatMap::new();
        let perm = shift_permutation(&cat, 1, GRID.n_phi);
        // h₊(Sφ) = λ₊ h₊(φ) + ∫₀^{2π} F₊,₀(φ,τ) dτ. Against the grid
        // quadrature the identity closes to the geometric tail; against the
        // closed-form integral it closes to quadrature accuracy.
        let f_plus = crate::trig::eigen_component(&spec.f1, &spec.f2, cat.x_plus);
        let shifted = od.h_plus.shifted(&perm);
        let mut worst_exact: f64 = 0.0;
        let mut worst_grid: f64 = 0.0;
        for i in 0..GRID.n_phi {
            for j in 0..GRID.n_phi {
                let defect_grid = shifted.at(i, j)
                    - cat.lambda_plus * od.h_plus.at(i, j)
                    - od.a_plus.at(i, j, GRID.n_t);
                worst_grid = worst_grid.max(defect_grid.abs());
                let phi = GRID.phi(i, j);
                let sphi = cat.apply(TorusPoint::new(phi[0], phi[1]));
                let rho = f_plus.unperturbed_t_integral(sphi.0, c.w0, 0.0, TWO_PI);
                let defect = shifted.at(i, j) - cat.lambda_plus * od.h_plus.at(i, j) - rho;
                worst_exact = worst_exact.max(defect.abs());
            }
        }
        assert!(worst_grid < 1e-12, "grid-level h cohomology defect {worst_grid}");
        assert!(worst_exact < 1e-5, "h cohomology defect vs closed form {worst_exact}");
    }

    #[test]
    fn bundle_boundary_conditions_hold_per_order() {
        let spec = bidirectional_spec(0.05);
        let bundle = build_bundle(&spec, GRID, DEFAULT_M_SUM, 3).unwrap();
        assert!(
            bundle.diagnostics.boundary_defect < 1e-8,
            "boundary defect {}",
            bundle.diagnostics.boundary_defect
        );
    }

    #[test]
    fn missing_order_is_reported() {
        let spec = clock_only_spec(0.05);
        let c = constants_for(&spec, GRID, 0.05);
        let bundle = SeriesBundle::build(&spec, c, GRID, DEFAULT_M_SUM, 1);
        match higher_order(3, &bundle, &spec, &c) {
            Err(SeriesError::MissingOrder { missing: 2, requested: 3 }) => {}
            other => panic!("expected MissingOrder, got {other:?}"),
        }
    }

    #[test]
    fn zero_epsilon_manifold_is_identity() {
        let spec = clock_only_spec(0.05);
        let bundle = build_bundle(&spec, GRID, DEFAULT_M_SUM, 2).unwrap();
        let m = assemble_manifold(&bundle, 0.0);
        assert_eq!(m.h1.sup_norm(), 0.0);
        assert_eq!(m.h2.sup_norm(), 0.0);
        assert_eq!(m.u.sup_norm(), 0.0);
        let (hx, w) = m.at_site(3, 9);
        let phi = GRID.phi(3, 9);
        assert_eq!(hx, phi);
        assert!((w - PI).abs() < 1e-9);
    }

    #[test]
    fn conjugation_residual_shrinks_at_higher_order() {
        let eps = 0.05;
        let spec = bidirectional_spec(eps);
        let grid = GridSpec::new(32, 128);
        let b1 = build_bundle(&spec, grid, DEFAULT_M_SUM, 1).unwrap();
        let b3 = build_bundle(&spec, grid, DEFAULT_M_SUM, 3).unwrap();
        let dt = TWO_PI / 512.0;
        let r1 = conjugation_residual(&assemble_manifold(&b1, eps), &spec, dt, 8);
        let r3 = conjugation_residual(&assemble_manifold(&b3, eps), &spec, dt, 8);
        assert!(r3 < r1 / 10.0, "r1 = {r1:.3e}, r3 = {r3:.3e}");
    }

    #[test]
    fn clock_only_residual_is_fourth_order_small() {
        // for f = 0 the ε³ residual term carries the same average-cancellation
        // as γ̄₀, so even the order-1 truncation sits at ε⁴ scale
        let eps = 0.05;
        let spec = clock_only_spec(eps);
        let grid = GridSpec::new(32, 128);
        let b3 = build_bundle(&spec, grid, DEFAULT_M_SUM, 3).unwrap();
        let r3 = conjugation_residual(&assemble_manifold(&b3, eps), &spec, TWO_PI / 512.0, 8);
        assert!(r3 < 10.0 * eps.powi(4), "r3 = {r3:.3e}");
    }
}
