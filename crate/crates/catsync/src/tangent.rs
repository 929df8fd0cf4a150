//! Perturbative diagonalization of the tangent Poincaré map.
//!
//! Over one period the tangent map factors as `DS_ε^{2π} = (1 + 𝔐(φ))Λ`,
//! where 𝔐 collects the time-ordered integrals of `ε ∂f` along the conjugated
//! trajectory. In the eigenbasis {y₊, y₋, y₃} we then seek an off-diagonal
//! conjugator `K(φ)` and diagonal corrections `N(φ) = diag(ν₊, ν₋, ν₃)` with
//!
//! `DS_ε^{2π}(H(φ)) (1 + K(φ)) = (1 + K(Sφ)) (Λ + N(φ))`.
//!
//! Order by order, the diagonal part fixes ν and the off-diagonal part is a
//! cohomology equation `λ_i k_{ij}(φ) − λ_j k_{ij}(Sφ) + R_{ij}(φ) = 0`
//! solved by geometric sums over `S^m φ`, all of which contract at λ-rates so
//! the fixed `m_sum` cutoff applies. The per-step multipliers are
//! `λ_i(φ) = λ_i + ν_i(φ)`; averaged logs give the Lyapunov exponents.

use crate::catmap::{CatMap, TorusPoint};
use crate::constants::PhaseConstants;
use crate::coupling::CouplingSpec;
use crate::flow::FlowEngine;
use crate::grid::{cumulative_integral, shift_permutation, GridSpec, PhiField};
use crate::series::{compositions, SeriesBundle, SeriesError, TaylorTable};
use crate::trig::{eigen_component, TrigPoly};
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum TangentError {
    #[error(transparent)]
    MissingOrder(#[from] SeriesError),
    #[error("multiplier λ_{index}(φ) is not positive at some φ (min {min:.3e}); log undefined")]
    NonPositive { index: &'static str, min: f64 },
}

/// Index set {+, −, 3} of the unperturbed eigenbasis.
pub const DIRS: [usize; 3] = [0, 1, 2];

pub fn lambda_of(cat: &CatMap, i: usize) -> f64 {
    match i {
        0 => cat.lambda_plus,
        1 => cat.lambda_minus,
        _ => 1.0,
    }
}

pub fn dir_name(i: usize) -> &'static str {
    ["plus", "minus", "3"][i]
}

/// Per-order matrices `𝔐⁽ⁿ⁾(φ) = 𝔐⁽ⁿ⁾(φ, 2π)` in the eigenbasis, row-major.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct MSeries {
    pub grid: GridSpec,
    pub n_max: usize,
    pub orders: Vec<[PhiField; 9]>,
}

impl MSeries {
    pub fn entry(&self, n: usize, i: usize, j: usize) -> &PhiField {
        &self.orders[n - 1][3 * i + j]
    }
}

/// Jacobian of `(f₊, f₋, g)` in the eigen directions, as exact polynomials,
/// together with their dressed Taylor tables.
struct JacobianTables {
    /// tables[i][j] holds the q-indexed coefficients of ∂_j f_i
    tables: Vec<Vec<TaylorTable>>,
}

impl JacobianTables {
    fn build(spec: &CouplingSpec, cat: &CatMap, max_q: usize) -> Self {
        let f = [
            eigen_component(&spec.f1, &spec.f2, cat.x_plus),
            eigen_component(&spec.f1, &spec.f2, cat.x_minus),
            spec.g.clone(),
        ];
        let deriv = |p: &TrigPoly, j: usize| -> TrigPoly {
            match j {
                0 => p.dir_deriv(cat.x_plus),
                1 => p.dir_deriv(cat.x_minus),
                _ => p.deriv(2),
            }
        };
        let tables = (0..3)
            .map(|i| (0..3).map(|j| TaylorTable::build(&deriv(&f[i], j), max_q, cat)).collect())
            .collect();
        JacobianTables { tables }
    }
}

/// Build `𝔐⁽¹⁾ … 𝔐⁽ⁿ_max⁾` from the stored trajectory insertions of the
/// bundle (no re-simulation): per site, expand
/// `∂f(S_ε^τ(H(φ)), τ) = Σ_p ε^p B⁽ᵖ⁾(φ,τ)` and integrate the time-ordered
/// recursion `𝔐⁽ⁿ⁾(φ,t) = ∫₀^t Σ_{p+k=n-1} B⁽ᵖ⁾ 𝔐⁽ᵏ⁾ dτ`.
pub fn m_series(bundle: &SeriesBundle, spec: &CouplingSpec, n_max: usize) -> MSeries {
    assert!(
        bundle.orders.len() + 1 >= n_max,
        "bundle must hold at least n_max-1 orders"
    );
    let grid = bundle.grid;
    let cat = CatMap::new();
    let jac = JacobianTables::build(spec, &cat, n_max.saturating_sub(1));
    let t = grid.t_values();
    let width = grid.n_t + 1;
    let h = grid.t_step();

    // per-order u/d rows from the bundle (trajectory insertions)
    let kern = crate::constants::DissipationKernel::build(&spec.g, &cat, grid, bundle.constants.w0);
    let mu = bundle.constants.mu;

    let mut orders: Vec<[PhiField; 9]> =
        (0..n_max).map(|_| std::array::from_fn(|_| PhiField::zeros(grid.n_phi))).collect();

    // scratch rows per site
    let mut b_rows: Vec<[Vec<f64>; 9]> = (0..n_max)
        .map(|_| std::array::from_fn(|_| vec![0.0; width]))
        .collect();
    let mut m_rows: Vec<[Vec<f64>; 9]> = (0..n_max)
        .map(|_| std::array::from_fn(|_| vec![0.0; width]))
        .collect();
    let mut integrand = vec![0.0; width];
    let mut u_rows: Vec<Vec<f64>> = (0..n_max.saturating_sub(1)).map(|_| vec![0.0; width]).collect();
    let mut dp_rows = u_rows.clone();
    let mut dm_rows = u_rows.clone();
    let mut prod = vec![0.0; width];

    for si in 0..grid.n_phi {
        for sj in 0..grid.n_phi {
            let phi = grid.phi(si, sj);
            let sphi = cat.apply(TorusPoint::new(phi[0], phi[1]));
            // trajectory insertion rows for orders 1..n_max-1
            for (ord, ((u, dp), dm)) in
                u_rows.iter_mut().zip(dp_rows.iter_mut()).zip(dm_rows.iter_mut()).enumerate()
            {
                let od = &bundle.orders[ord];
                let gee = kern.gee.row(si, sj);
                let xi = od.xi.row(si, sj);
                let ucap = od.u_cap.at(si, sj);
                let ap = od.a_plus.row(si, sj);
                let am = od.a_minus.row(si, sj);
                let hp = cat.lambda_plus * od.h_plus.at(si, sj);
                let hm = cat.lambda_minus * od.h_minus.at(si, sj);
                for k in 0..width {
                    u[k] = (mu * gee[k]).exp() * ucap + xi[k];
                    dp[k] = hp + ap[k];
                    dm[k] = hm + am[k];
                }
            }

            // B⁽ᵖ⁾ rows
            for p in 0..n_max {
                for e in 0..9 {
                    b_rows[p][e].iter_mut().for_each(|v| *v = 0.0);
                }
                for i in 0..3 {
                    for j in 0..3 {
                        let table = &jac.tables[i][j];
                        for (q, poly) in &table.entries {
                            let tq = q[0] + q[1] + q[2];
                            if poly.is_zero() || tq > p || (p > 0 && tq == 0) || (p == 0 && tq > 0) {
                                continue;
                            }
                            if p == 0 {
                                poly.accumulate_unperturbed_row(
                                    sphi.0,
                                    bundle.constants.w0,
                                    &t,
                                    1.0,
                                    &mut b_rows[0][3 * i + j],
                                );
                                continue;
                            }
                            // Σ over compositions of p into tq ordered parts
                            let mut weight_any = false;
                            prod.iter_mut().for_each(|v| *v = 0.0);
                            for comp in compositions(p, tq) {
                                let mut term = vec![1.0; width];
                                let mut zero = false;
                                for (slot, &ord) in comp.iter().enumerate() {
                                    let bank = if slot < q[0] {
                                        &dp_rows
                                    } else if slot < q[0] + q[1] {
                                        &dm_rows
                                    } else {
                                        &u_rows
                                    };
                                    let row = &bank[ord - 1];
                                    if row.iter().all(|&v| v == 0.0) {
                                        zero = true;
                                        break;
                                    }
                                    for k in 0..width {
                                        term[k] *= row[k];
                                    }
                                }
                                if zero {
                                    continue;
                                }
                                weight_any = true;
                                for k in 0..width {
                                    prod[k] += term[k];
                                }
                            }
                            if !weight_any {
                                continue;
                            }
                            // multiply by the dressed coefficient row
                            integrand.iter_mut().for_each(|v| *v = 0.0);
                            poly.accumulate_unperturbed_row(
                                sphi.0,
                                bundle.constants.w0,
                                &t,
                                1.0,
                                &mut integrand,
                            );
                            for k in 0..width {
                                b_rows[p][3 * i + j][k] += integrand[k] * prod[k];
                            }
                        }
                    }
                }
            }

            // 𝔐 recursion
            for n in 1..=n_max {
                for i in 0..3 {
                    for j in 0..3 {
                        integrand.iter_mut().for_each(|v| *v = 0.0);
                        for p in 0..n {
                            let k_ord = n - 1 - p;
                            if k_ord == 0 {
                                let b = &b_rows[p][3 * i + j];
                                for k in 0..width {
                                    integrand[k] += b[k];
                                }
                            } else {
                                for l in 0..3 {
                                    let b = &b_rows[p][3 * i + l];
                                    let m = &m_rows[k_ord - 1][3 * l + j];
                                    for k in 0..width {
                                        integrand[k] += b[k] * m[k];
                                    }
                                }
                            }
                        }
                        let mut out = vec![0.0; width];
                        cumulative_integral(&integrand, h, &mut out);
                        m_rows[n - 1][3 * i + j] = out;
                    }
                }
            }
            for n in 0..n_max {
                for e in 0..9 {
                    orders[n][e].set(si, sj, m_rows[n][e][width - 1]);
                }
            }
        }
    }

    MSeries { grid, n_max, orders }
}

/// Off-diagonal conjugator and diagonal corrections, per order.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct TangentFrame {
    pub grid: GridSpec,
    pub constants: PhaseConstants,
    pub m_sum: usize,
    pub n_max: usize,
    /// ν_i⁽ⁿ⁾(φ), i ∈ {+, −, 3}
    pub nu: Vec<[PhiField; 3]>,
    /// k_{ij}⁽ⁿ⁾(φ), row-major with zero diagonal
    pub k: Vec<[PhiField; 9]>,
}

/// Solve the cohomology equation `λ_i k(φ) − λ_j k(Sφ) + R(φ) = 0` by the
/// geometric sum `k(φ) = −α λ_i⁻¹ Σ_{m∈ℤ_α} (λ_i/λ_j)^{-m} R(S^m φ)` with
/// α = + when the sum contracts forward, − backward.
fn solve_offdiag(cat: &CatMap, i: usize, j: usize, r: &PhiField, m_sum: usize) -> PhiField {
    let n = r.n;
    let li = lambda_of(cat, i);
    let lj = lambda_of(cat, j);
    // forward sum (m ≥ 0) iff λ_i/λ_j > 1
    let forward = li > lj;
    let alpha = if forward { 1.0 } else { -1.0 };
    let ratio = li / lj;
    let mut out = PhiField::zeros(n);
    if forward {
        // factor -α λ_i⁻¹ ratio^{-m}, m = 0, 1, …
        let mut scale = -alpha / li;
        for m in 0..=m_sum {
            let perm = shift_permutation(cat, m as i64, n);
            out.add_shifted(r, &perm, scale);
            scale /= ratio;
        }
    } else {
        // m = -1, -2, …: ratio^{-m} = ratio^{|m|} < 1
        let mut scale = -alpha / li * ratio;
        for m in 1..=m_sum {
            let perm = shift_permutation(cat, -(m as i64), n);
            out.add_shifted(r, &perm, scale);
            scale *= ratio;
        }
    }
    out
}

/// First-order frame: `ν_i⁽¹⁾ = λ_i 𝔐⁽¹⁾_{ii}` and the three cohomology sums.
pub fn first_order_frame(
    mseries: &MSeries,
    constants: &PhaseConstants,
    m_sum: usize,
) -> TangentFrame {
    let cat = CatMap::new();
    let grid = mseries.grid;
    let mut nu: [PhiField; 3] = std::array::from_fn(|_| PhiField::zeros(grid.n_phi));
    let mut k: [PhiField; 9] = std::array::from_fn(|_| PhiField::zeros(grid.n_phi));
    for i in DIRS {
        let li = lambda_of(&cat, i);
        let m_ii = mseries.entry(1, i, i);
        for (dst, &src) in nu[i].data.iter_mut().zip(m_ii.data.iter()) {
            *dst = li * src;
        }
        for j in DIRS {
            if i == j {
                continue;
            }
            let lj = lambda_of(&cat, j);
            let mut r = mseries.entry(1, i, j).clone();
            r.data.iter_mut().for_each(|v| *v *= lj);
            k[3 * i + j] = solve_offdiag(&cat, i, j, &r, m_sum);
        }
    }
    TangentFrame {
        grid,
        constants: *constants,
        m_sum,
        n_max: 1,
        nu: vec![nu],
        k: vec![k],
    }
}

/// Extend the frame by one order using
/// `ν_i⁽ⁿ⁾ = λ_i 𝔐⁽ⁿ⁾_{ii} + Σ_{n₁+n₂=n} Σ_j 𝔐⁽ⁿ¹⁾_{ij} λ_j k⁽ⁿ²⁾_{ji}` and
/// the off-diagonal solve with
/// `R_{ij} = 𝔐⁽ⁿ⁾_{ij} λ_j + Σ_{n₁+n₂=n} (−k⁽ⁿ¹⁾_{ij}(Sφ) ν_j⁽ⁿ²⁾ + Σ_{j'} 𝔐⁽ⁿ¹⁾_{ij'} λ_{j'} k⁽ⁿ²⁾_{j'j})`.
pub fn higher_order_frame(
    n: usize,
    frame: &mut TangentFrame,
    mseries: &MSeries,
) -> Result<(), TangentError> {
    if n < 2 || frame.nu.len() + 1 < n || mseries.n_max < n {
        return Err(SeriesError::MissingOrder { missing: frame.nu.len() + 1, requested: n }.into());
    }
    let cat = CatMap::new();
    let grid = frame.grid;
    let nn = grid.n_phi;
    let sites = grid.n_sites();
    let perm1 = shift_permutation(&cat, 1, nn);

    let mut nu_n: [PhiField; 3] = std::array::from_fn(|_| PhiField::zeros(nn));
    for i in DIRS {
        let li = lambda_of(&cat, i);
        let mut acc = mseries.entry(n, i, i).clone();
        acc.data.iter_mut().for_each(|v| *v *= li);
        for n1 in 1..n {
            let n2 = n - n1;
            for j in DIRS {
                if j == i {
                    continue;
                }
                let lj = lambda_of(&cat, j);
                let m_ij = mseries.entry(n1, i, j);
                let k_ji = &frame.k[n2 - 1][3 * j + i];
                for s in 0..sites {
                    acc.data[s] += m_ij.data[s] * lj * k_ji.data[s];
                }
            }
        }
        nu_n[i] = acc;
    }

    let mut k_n: [PhiField; 9] = std::array::from_fn(|_| PhiField::zeros(nn));
    for i in DIRS {
        for j in DIRS {
            if i == j {
                continue;
            }
            let lj = lambda_of(&cat, j);
            let mut r = mseries.entry(n, i, j).clone();
            r.data.iter_mut().for_each(|v| *v *= lj);
            for n1 in 1..n {
                let n2 = n - n1;
                // −k_{ij}⁽ⁿ¹⁾(Sφ) ν_j⁽ⁿ²⁾(φ)
                let k_shift = frame.k[n1 - 1][3 * i + j].shifted(&perm1);
                let nu_j = &frame.nu[n2 - 1][j];
                for s in 0..sites {
                    r.data[s] -= k_shift.data[s] * nu_j.data[s];
                }
                // Σ_{j'} 𝔐⁽ⁿ¹⁾_{ij'} λ_{j'} k⁽ⁿ²⁾_{j'j}
                for jp in DIRS {
                    if jp == j {
                        continue; // k_{jj} = 0
                    }
                    let ljp = lambda_of(&cat, jp);
                    let m_ijp = mseries.entry(n1, i, jp);
                    let k_jpj = &frame.k[n2 - 1][3 * jp + j];
                    for s in 0..sites {
                        r.data[s] += m_ijp.data[s] * ljp * k_jpj.data[s];
                    }
                }
            }
            k_n[3 * i + j] = solve_offdiag(&cat, i, j, &r, frame.m_sum);
        }
    }

    frame.nu.push(nu_n);
    frame.k.push(k_n);
    frame.n_max = frame.nu.len();
    Ok(())
}

/// Frame to order `n_max` in one call.
pub fn build_frame(
    bundle: &SeriesBundle,
    spec: &CouplingSpec,
    n_max: usize,
) -> Result<(MSeries, TangentFrame), TangentError> {
    let ms = m_series(bundle, spec, n_max);
    let mut frame = first_order_frame(&ms, &bundle.constants, bundle.m_sum);
    for n in 2..=n_max {
        higher_order_frame(n, &mut frame, &ms)?;
    }
    Ok((ms, frame))
}

/// Resummed per-site multipliers `λ_i(φ) = λ_i + Σ εⁿ ν_i⁽ⁿ⁾(φ)`.
pub fn multipliers(frame: &TangentFrame, epsilon: f64) -> [PhiField; 3] {
    let cat = CatMap::new();
    let n = frame.grid.n_phi;
    std::array::from_fn(|i| {
        let mut out = PhiField::zeros(n);
        out.data.iter_mut().for_each(|v| *v = lambda_of(&cat, i));
        let mut pow = 1.0;
        for order in &frame.nu {
            pow *= epsilon;
            for (dst, &src) in out.data.iter_mut().zip(order[i].data.iter()) {
                *dst += pow * src;
            }
        }
        out
    })
}

const FRAME_MAGIC: &[u8] = b"CATSYNC-FRAME-v1\n";

#[derive(Serialize, Deserialize)]
struct FrameHeader {
    grid: GridSpec,
    constants: PhaseConstants,
    m_sum: usize,
    n_max: usize,
}

impl TangentFrame {
    /// Cache alongside the series bundle: JSON header + raw f64 arrays.
    pub fn save(&self, path: &std::path::Path) -> std::io::Result<()> {
        use crate::series::write_f64s;
        use std::io::Write;
        let mut w = std::io::BufWriter::new(std::fs::File::create(path)?);
        w.write_all(FRAME_MAGIC)?;
        let header = FrameHeader {
            grid: self.grid,
            constants: self.constants,
            m_sum: self.m_sum,
            n_max: self.n_max,
        };
        let hdr = serde_json::to_vec(&header).expect("header serializes");
        w.write_all(&(hdr.len() as u64).to_le_bytes())?;
        w.write_all(&hdr)?;
        for order in &self.nu {
            for field in order {
                write_f64s(&mut w, &field.data)?;
            }
        }
        for order in &self.k {
            for field in order {
                write_f64s(&mut w, &field.data)?;
            }
        }
        Ok(())
    }

    pub fn load(path: &std::path::Path) -> std::io::Result<TangentFrame> {
        use crate::series::read_f64s;
        use std::io::Read;
        let mut r = std::io::BufReader::new(std::fs::File::open(path)?);
        let mut magic = vec![0u8; FRAME_MAGIC.len()];
        r.read_exact(&mut magic)?;
        if magic != FRAME_MAGIC {
            return Err(std::io::Error::new(std::io::ErrorKind::InvalidData, "bad frame magic"));
        }
        let mut len8 = [0u8; 8];
        r.read_exact(&mut len8)?;
        let mut hdr = vec![0u8; u64::from_le_bytes(len8) as usize];
        r.read_exact(&mut hdr)?;
        let header: FrameHeader = serde_json::from_slice(&hdr)
            .map_err(|e| std::io::Error::new(std::io::ErrorKind::InvalidData, e))?;
        let n = header.grid.n_phi;
        let mut nu = Vec::with_capacity(header.n_max);
        for _ in 0..header.n_max {
            let mut order: [PhiField; 3] = std::array::from_fn(|_| PhiField::zeros(n));
            for field in order.iter_mut() {
                field.data = read_f64s(&mut r)?;
            }
            nu.push(order);
        }
        let mut k = Vec::with_capacity(header.n_max);
        for _ in 0..header.n_max {
            let mut order: [PhiField; 9] = std::array::from_fn(|_| PhiField::zeros(n));
            for field in order.iter_mut() {
                field.data = read_f64s(&mut r)?;
            }
            k.push(order);
        }
        Ok(TangentFrame {
            grid: header.grid,
            constants: header.constants,
            m_sum: header.m_sum,
            n_max: header.n_max,
            nu,
            k,
        })
    }
}

/// Check positivity before logs are taken downstream.
pub fn check_positive(mults: &[PhiField; 3]) -> Result<(), TangentError> {
    for (i, field) in mults.iter().enumerate() {
        let (lo, _) = field.min_max();
        if lo <= 0.0 {
            return Err(TangentError::NonPositive { index: dir_name(i), min: lo });
        }
    }
    Ok(())
}

/// Resummed conjugator `1 + K(φ)` and `Λ + N(φ)` at a site, eigenbasis.
pub fn frame_matrices_at(
    frame: &TangentFrame,
    epsilon: f64,
    i: usize,
    j: usize,
) -> ([[f64; 3]; 3], [[f64; 3]; 3]) {
    let cat = CatMap::new();
    let mut one_k = [[0.0; 3]; 3];
    let mut lam_n = [[0.0; 3]; 3];
    for d in DIRS {
        one_k[d][d] = 1.0;
        lam_n[d][d] = lambda_of(&cat, d);
    }
    let mut pow = 1.0;
    for (kord, nuord) in frame.k.iter().zip(frame.nu.iter()) {
        pow *= epsilon;
        for a in DIRS {
            for b in DIRS {
                if a != b {
                    one_k[a][b] += pow * kord[3 * a + b].at(i, j);
                }
            }
            lam_n[a][a] += pow * nuord[a].at(i, j);
        }
    }
    (one_k, lam_n)
}

/// Eigenbasis change: columns of Q are (x₊,0), (x₋,0), (0,0,1); orthonormal.
pub fn to_eigen(cat: &CatMap, m: [[f64; 3]; 3]) -> [[f64; 3]; 3] {
    let q = [
        [cat.x_plus[0], cat.x_minus[0], 0.0],
        [cat.x_plus[1], cat.x_minus[1], 0.0],
        [0.0, 0.0, 1.0],
    ];
    // Qᵀ m Q
    let mut tmp = [[0.0; 3]; 3];
    for a in 0..3 {
        for b in 0..3 {
            tmp[a][b] = (0..3).map(|c| m[a][c] * q[c][b]).sum();
        }
    }
    let mut out = [[0.0; 3]; 3];
    for a in 0..3 {
        for b in 0..3 {
            out[a][b] = (0..3).map(|c| q[c][a] * tmp[c][b]).sum();
        }
    }
    out
}

pub fn from_eigen(cat: &CatMap, m: [[f64; 3]; 3]) -> [[f64; 3]; 3] {
    let q = [
        [cat.x_plus[0], cat.x_minus[0], 0.0],
        [cat.x_plus[1], cat.x_minus[1], 0.0],
        [0.0, 0.0, 1.0],
    ];
    // Q m Qᵀ
    let mut tmp = [[0.0; 3]; 3];
    for a in 0..3 {
        for b in 0..3 {
            tmp[a][b] = (0..3).map(|c| m[a][c] * q[b][c]).sum();
        }
    }
    let mut out = [[0.0; 3]; 3];
    for a in 0..3 {
        for b in 0..3 {
            out[a][b] = (0..3).map(|c| q[a][c] * tmp[c][b]).sum();
        }
    }
    out
}

fn mat_mul(a: [[f64; 3]; 3], b: [[f64; 3]; 3]) -> [[f64; 3]; 3] {
    let mut out = [[0.0; 3]; 3];
    for i in 0..3 {
        for j in 0..3 {
            out[i][j] = (0..3).map(|c| a[i][c] * b[c][j]).sum();
        }
    }
    out
}

/// Sup over a lattice-aligned sample of
/// `‖DS_ε^{2π}(H(φ)) (1 + K(φ)) − (1 + K(Sφ)) (Λ + N(φ))‖_max`, with
/// `DS` from direct tangent propagation at the resummed manifold point.
pub fn tangent_conjugation_residual(
    frame: &TangentFrame,
    manifold: &crate::series::Manifold,
    spec: &CouplingSpec,
    dt: f64,
    sample: usize,
) -> f64 {
    let n = frame.grid.n_phi;
    assert!(sample > 0 && n % sample == 0);
    let stride = n / sample;
    let cat = CatMap::new();
    let engine = FlowEngine::new(spec, dt);
    let eps = manifold.epsilon;
    let mut worst: f64 = 0.0;
    for i in (0..n).step_by(stride) {
        for j in (0..n).step_by(stride) {
            let (hx, w) = manifold.at_site(i, j);
            let ds_cart =
                engine.poincare_jacobian(crate::catmap::FullState::new(hx[0], hx[1], w));
            let ds = to_eigen(&cat, ds_cart);
            let (one_k, lam_n) = frame_matrices_at(frame, eps, i, j);
            let si = (2 * i + j) % n;
            let sj = (i + j) % n;
            let (one_k_s, _) = frame_matrices_at(frame, eps, si, sj);
            let lhs = mat_mul(ds, one_k);
            let rhs = mat_mul(one_k_s, lam_n);
            for a in 0..3 {
                for b in 0..3 {
                    worst = worst.max((lhs[a][b] - rhs[a][b]).abs());
                }
            }
        }
    }
    worst
}
