//! Lyapunov spectrum, Kaplan–Yorke dimension and the synchronization scan.
//!
//! Two routes to the exponents:
//!  * `spectrum_qr` — direct tangent propagation with per-iterate
//!    Gram–Schmidt reorthonormalization; the invariant (SRB) average arises
//!    as a forward Birkhoff average from Lebesgue-random initial data.
//!  * `spectrum_perturbative` — logs of the conjugation multipliers
//!    `λ_i(φ) = λ_i + ν_i(φ)` averaged along a base cat-map orbit (or over
//!    the lattice). Plain orbit averaging stands in for the SRB weighting;
//!    for `f = 0` the φ-marginal of the SRB measure is exactly Lebesgue, and
//!    in general the distinction enters at the stated tolerance only.
//!
//! Statistical errors are reported from 20-batch means. The critical
//! coupling is bracketed by the sign change of `Λ₀ − Λ₋` and polished by
//! bisection plus a three-point parabolic refinement.

use crate::catmap::{CatMap, FullState, TorusPoint};
use crate::coupling::CouplingSpec;
use crate::flow::FlowEngine;
use crate::tangent::{multipliers, TangentFrame};
use crate::trig::TWO_PI;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub const DEFAULT_N_ITER: usize = 100_000;
pub const DEFAULT_N_TRANSIENT: usize = 1_000;
const N_BATCHES: usize = 20;

#[derive(Debug, Error)]
pub enum LyapunovError {
    #[error("trajectory diverged (non-finite state) at iterate {0}")]
    Divergence(usize),
    #[error("multiplier λ_{index}(φ) non-positive (min {min:.3e}); cannot take logs")]
    NonPositive { index: &'static str, min: f64 },
    #[error("Λ₀ − Λ₋ does not change sign on the given ε grid")]
    NoBracket,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    QrDirect,
    Perturbative,
    BirkhoffMultiplier,
}

/// One spectrum measurement: exponents per 2π-map iterate, sorted
/// `Λ₊ ≥ Λ₀ ≥ Λ₋`, with batch-mean standard errors and the Kaplan–Yorke
/// dimension.
#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
pub struct SpectrumRecord {
    pub epsilon: f64,
    pub lambda_plus: f64,
    pub lambda_zero: f64,
    pub lambda_minus: f64,
    pub d_l: f64,
    pub stderr_plus: f64,
    pub stderr_zero: f64,
    pub stderr_minus: f64,
    pub n_iter: usize,
    pub n_transient: usize,
    pub seed: u64,
    pub method: Method,
}

impl SpectrumRecord {
    pub fn exponents(&self) -> [f64; 3] {
        [self.lambda_plus, self.lambda_zero, self.lambda_minus]
    }
}

#[derive(Clone, Copy, Debug)]
pub struct SpectrumOpts {
    pub n_iter: usize,
    pub n_transient: usize,
    pub dt: f64,
    pub seed: u64,
}

impl Default for SpectrumOpts {
    fn default() -> Self {
        SpectrumOpts {
            n_iter: DEFAULT_N_ITER,
            n_transient: DEFAULT_N_TRANSIENT,
            dt: crate::flow::DEFAULT_DT,
            seed: 1,
        }
    }
}

fn random_state(seed: u64) -> FullState {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    FullState::new(
        rng.random::<f64>() * TWO_PI,
        rng.random::<f64>() * TWO_PI,
        rng.random::<f64>() * TWO_PI,
    )
}

/// Modified Gram–Schmidt on 3 columns; returns log diagonal stretches.
fn orthonormalize(frame: &mut [[f64; 3]; 3]) -> [f64; 3] {
    let mut logs = [0.0; 3];
    for c in 0..3 {
        for prev in 0..c {
            let dot = (0..3).map(|r| frame[c][r] * frame[prev][r]).sum::<f64>();
            for r in 0..3 {
                frame[c][r] -= dot * frame[prev][r];
            }
        }
        let norm = (0..3).map(|r| frame[c][r] * frame[c][r]).sum::<f64>().sqrt();
        logs[c] = norm.ln();
        for r in 0..3 {
            frame[c][r] /= norm;
        }
    }
    logs
}

fn batch_stats(batches: &[[f64; 3]], n_per_batch: &[usize]) -> ([f64; 3], [f64; 3]) {
    let total: usize = n_per_batch.iter().sum();
    let mut mean = [0.0; 3];
    for (b, _) in batches.iter().zip(n_per_batch) {
        for i in 0..3 {
            mean[i] += b[i];
        }
    }
    for m in mean.iter_mut() {
        *m /= total as f64;
    }
    // batch means (per-iterate), weighted equally since batches are equal-ish
    let k = batches.len() as f64;
    let mut var = [0.0; 3];
    for (b, &n) in batches.iter().zip(n_per_batch) {
        for i in 0..3 {
            let bm = b[i] / n as f64;
            var[i] += (bm - mean[i]) * (bm - mean[i]);
        }
    }
    let stderr = std::array::from_fn(|i| (var[i] / (k - 1.0)).sqrt() / k.sqrt());
    (mean, stderr)
}

fn sort_spectrum(mean: [f64; 3], stderr: [f64; 3]) -> ([f64; 3], [f64; 3]) {
    let mut idx = [0usize, 1, 2];
    idx.sort_by(|&a, &b| mean[b].partial_cmp(&mean[a]).unwrap());
    (std::array::from_fn(|i| mean[idx[i]]), std::array::from_fn(|i| stderr[idx[i]]))
}

/// Direct spectrum: orthonormal 3-frame through the tangent map,
/// reorthonormalized every Poincaré iterate, transient discarded.
pub fn spectrum_qr(
    spec: &CouplingSpec,
    epsilon: f64,
    opts: SpectrumOpts,
) -> Result<SpectrumRecord, LyapunovError> {
    let spec = spec.with_epsilon(epsilon);
    let engine = FlowEngine::new(&spec, opts.dt);
    let mut state = random_state(opts.seed);
    let mut frame = [[1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]];
    for it in 0..opts.n_transient {
        let (s, f) = engine.poincare_with_frame(state, frame);
        state = s;
        frame = f;
        if !state.w.is_finite() {
            return Err(LyapunovError::Divergence(it));
        }
        orthonormalize(&mut frame);
    }
    let batch_len = opts.n_iter.div_ceil(N_BATCHES);
    let mut batches: Vec<[f64; 3]> = Vec::with_capacity(N_BATCHES);
    let mut counts: Vec<usize> = Vec::with_capacity(N_BATCHES);
    let mut acc = [0.0; 3];
    let mut in_batch = 0usize;
    for it in 0..opts.n_iter {
        let (s, mut f) = engine.poincare_with_frame(state, frame);
        if !(s.w.is_finite() && s.x.x1().is_finite()) {
            return Err(LyapunovError::Divergence(it));
        }
        let logs = orthonormalize(&mut f);
        state = s;
        frame = f;
        for i in 0..3 {
            acc[i] += logs[i];
        }
        in_batch += 1;
        if in_batch == batch_len || it + 1 == opts.n_iter {
            batches.push(acc);
            counts.push(in_batch);
            acc = [0.0; 3];
            in_batch = 0;
        }
    }
    let (mean, stderr) = batch_stats(&batches, &counts);
    let (l, se) = sort_spectrum(mean, stderr);
    let d_l = lyapunov_dimension(&l).value;
    Ok(SpectrumRecord {
        epsilon,
        lambda_plus: l[0],
        lambda_zero: l[1],
        lambda_minus: l[2],
        d_l,
        stderr_plus: se[0],
        stderr_zero: se[1],
        stderr_minus: se[2],
        n_iter: opts.n_iter,
        n_transient: opts.n_transient,
        seed: opts.seed,
        method: Method::QrDirect,
    })
}

/// Averaging mode for the multiplier route.
#[derive(Clone, Copy, Debug)]
pub enum Average {
    /// Birkhoff average of `log λ_i(φ_k)` along `φ_k = S^k φ₀`.
    Orbit { n_iter: usize, seed: u64 },
    /// Plain lattice (Lebesgue) average.
    Lattice,
}

/// Spectrum from the resummed conjugation multipliers.
pub fn spectrum_perturbative(
    frame: &TangentFrame,
    epsilon: f64,
    average: Average,
) -> Result<SpectrumRecord, LyapunovError> {
    let mults = multipliers(frame, epsilon);
    for (i, field) in mults.iter().enumerate() {
        let (lo, _) = field.min_max();
        if lo <= 0.0 {
            return Err(LyapunovError::NonPositive { index: crate::tangent::dir_name(i), min: lo });
        }
    }
    let (mean, stderr, n_iter, seed, method) = match average {
        Average::Lattice => {
            let mut mean = [0.0; 3];
            for i in 0..3 {
                mean[i] =
                    mults[i].data.iter().map(|&v| v.ln()).sum::<f64>() / mults[i].data.len() as f64;
            }
            (mean, [0.0; 3], mults[0].data.len(), 0, Method::Perturbative)
        }
        Average::Orbit { n_iter, seed } => {
            let cat = CatMap::new();
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let mut phi = TorusPoint::new(rng.random::<f64>() * TWO_PI, rng.random::<f64>() * TWO_PI);
            let batch_len = n_iter.div_ceil(N_BATCHES);
            let mut batches = Vec::new();
            let mut counts = Vec::new();
            let mut acc = [0.0; 3];
            let mut in_batch = 0usize;
            for it in 0..n_iter {
                for i in 0..3 {
                    acc[i] += mults[i].bilinear(phi.0).ln();
                }
                phi = cat.apply(phi);
                in_batch += 1;
                if in_batch == batch_len || it + 1 == n_iter {
                    batches.push(acc);
                    counts.push(in_batch);
                    acc = [0.0; 3];
                    in_batch = 0;
                }
            }
            let (mean, stderr) = batch_stats(&batches, &counts);
            (mean, stderr, n_iter, seed, Method::BirkhoffMultiplier)
        }
    };
    let (l, se) = sort_spectrum(mean, stderr);
    let d_l = lyapunov_dimension(&l).value;
    Ok(SpectrumRecord {
        epsilon,
        lambda_plus: l[0],
        lambda_zero: l[1],
        lambda_minus: l[2],
        d_l,
        stderr_plus: se[0],
        stderr_zero: se[1],
        stderr_minus: se[2],
        n_iter,
        n_transient: 0,
        seed,
        method,
    })
}

/// Kaplan–Yorke dimension with the general k.
#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
pub struct DimensionResult {
    pub value: f64,
    pub k: usize,
    /// no nonnegative partial sum exists (value 0 by convention)
    pub all_negative: bool,
    /// D_L outside [0, n]; inconsistent input for this system
    pub out_of_range: bool,
}

/// `D_L = k + (Σ_{i≤k} Λ_i)/|Λ_{k+1}|` with k ≤ n−1 the largest index whose
/// partial sum is nonnegative. At zero coupling the exponents cancel in
/// pairs, so the interpolation lands on n exactly; a value above n flags
/// inconsistent (volume-expanding) input.
pub fn lyapunov_dimension(sorted: &[f64; 3]) -> DimensionResult {
    let n = 3usize;
    if sorted[0] < 0.0 {
        return DimensionResult { value: 0.0, k: 0, all_negative: true, out_of_range: false };
    }
    let mut partial = 0.0;
    let mut k = 0;
    let mut sum_k = 0.0;
    for (i, &l) in sorted.iter().enumerate().take(n - 1) {
        partial += l;
        if partial >= 0.0 {
            k = i + 1;
            sum_k = partial;
        }
    }
    let denom = sorted[k].abs().max(f64::MIN_POSITIVE);
    let value = k as f64 + sum_k / denom;
    DimensionResult {
        value,
        k,
        all_negative: false,
        out_of_range: !(0.0..=n as f64).contains(&value),
    }
}

/// Closed form for the `f = 0` transition: `ε_c = log λ₊ / (−Γ)`.
pub fn closed_form_epsilon_c(gamma: f64) -> f64 {
    CatMap::new().lambda_plus.ln() / (-gamma)
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct SweepResult {
    pub records: Vec<SpectrumRecord>,
    pub epsilon_c: Option<f64>,
}

/// Locate the ε where the central exponent crosses Λ₋. With sorted output
/// the gap `Λ₀ − Λ₋` is nonnegative by construction and the crossing is the
/// vertex of its V: the scan brackets the grid minimum, a ternary search
/// narrows it, and a three-point parabola fitted to the squared gap (which is
/// smooth through a transversal crossing) gives the refined root. For f = 0
/// this vertex coincides with the sign change of `ΣΛ + log λ₊`, since the
/// longitudinal exponents stay at ±log λ₊. Sweep points run in parallel;
/// each record is single-threaded and deterministic given (seed, dt).
pub fn find_epsilon_c(
    spec: &CouplingSpec,
    eps_grid: &[f64],
    opts: SpectrumOpts,
) -> Result<SweepResult, LyapunovError> {
    use rayon::prelude::*;
    assert!(eps_grid.windows(2).all(|w| w[0] < w[1]), "ε grid must be strictly increasing");
    let records: Vec<SpectrumRecord> = eps_grid
        .par_iter()
        .map(|&eps| spectrum_qr(spec, eps, opts))
        .collect::<Result<_, _>>()?;
    let gaps: Vec<f64> = records.iter().map(|r| r.lambda_zero - r.lambda_minus).collect();
    let k_min = (0..gaps.len())
        .min_by(|&a, &b| gaps[a].partial_cmp(&gaps[b]).unwrap())
        .expect("nonempty grid");
    // an interior minimum, or an endpoint minimum approaching zero, brackets
    // the crossing; a monotone gap bounded away from zero does not
    let near_zero = gaps[k_min] < 0.2 * gaps.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    if (k_min == 0 || k_min + 1 == gaps.len()) && !near_zero {
        return Ok(SweepResult { records, epsilon_c: None });
    }
    let mut lo = eps_grid[k_min.saturating_sub(1)];
    let mut hi = eps_grid[(k_min + 1).min(eps_grid.len() - 1)];
    let eval = |eps: f64| -> Result<f64, LyapunovError> {
        let r = spectrum_qr(spec, eps, opts)?;
        Ok(r.lambda_zero - r.lambda_minus)
    };
    for _ in 0..8 {
        let m1 = lo + (hi - lo) / 3.0;
        let m2 = hi - (hi - lo) / 3.0;
        if eval(m1)? < eval(m2)? {
            hi = m2;
        } else {
            lo = m1;
        }
    }
    let mid = 0.5 * (lo + hi);
    let (fa, fb, fc) = (eval(lo)?, eval(mid)?, eval(hi)?);
    let vertex =
        parabola_vertex(lo, fa * fa, mid, fb * fb, hi, fc * fc).unwrap_or(mid).clamp(lo, hi);
    Ok(SweepResult { records, epsilon_c: Some(vertex) })
}

/// Vertex abscissa of the parabola through three points.
fn parabola_vertex(a: f64, fa: f64, b: f64, fb: f64, c: f64, fc: f64) -> Option<f64> {
    let denom_a = (a - b) * (a - c);
    let denom_b = (b - a) * (b - c);
    let denom_c = (c - a) * (c - b);
    let p2 = fa / denom_a + fb / denom_b + fc / denom_c;
    if p2.abs() < 1e-300 {
        return None;
    }
    let p1 = -(fa * (b + c) / denom_a + fb * (a + c) / denom_b + fc * (a + b) / denom_c);
    Some(-p1 / (2.0 * p2))
}

/// Iterate the Poincaré map, discard the transient, emit `(x₁, x₂, w)` rows.
pub fn attractor_cloud(
    spec: &CouplingSpec,
    epsilon: f64,
    n_points: usize,
    n_transient: usize,
    dt: f64,
    seed: u64,
) -> Vec<[f64; 3]> {
    let spec = spec.with_epsilon(epsilon);
    let engine = FlowEngine::new(&spec, dt);
    let mut state = random_state(seed);
    for _ in 0..n_transient {
        state = engine.poincare(state);
    }
    let mut out = Vec::with_capacity(n_points);
    for _ in 0..n_points {
        state = engine.poincare(state);
        out.push([state.x.x1(), state.x.x2(), state.w]);
    }
    out
}

/// Interquartile range of the w-marginal, centered circularly at `center`.
pub fn w_iqr(points: &[[f64; 3]], center: f64) -> f64 {
    let mut d: Vec<f64> = points
        .iter()
        .map(|p| {
            let mut v = (p[2] - center).rem_euclid(TWO_PI);
            if v > std::f64::consts::PI {
                v -= TWO_PI;
            }
            v
        })
        .collect();
    d.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let q = |frac: f64| -> f64 {
        let pos = frac * (d.len() - 1) as f64;
        let lo = pos.floor() as usize;
        let w = pos - lo as f64;
        if lo + 1 < d.len() {
            d[lo] * (1.0 - w) + d[lo + 1] * w
        } else {
            d[lo]
        }
    };
    q(0.75) - q(0.25)
}

/// Circular mean and resultant length of the w-marginal.
pub fn w_circular_stats(points: &[[f64; 3]]) -> (f64, f64) {
    let (mut s, mut c) = (0.0, 0.0);
    for p in points {
        s += p[2].sin();
        c += p[2].cos();
    }
    let n = points.len() as f64;
    ((s / n).atan2(c / n).rem_euclid(TWO_PI), ((s / n).powi(2) + (c / n).powi(2)).sqrt())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::coupling::clock_only_spec;

    fn quick_opts(seed: u64) -> SpectrumOpts {
        SpectrumOpts { n_iter: 3000, n_transient: 100, dt: TWO_PI / 256.0, seed }
    }

    #[test]
    fn unperturbed_spectrum_is_exact() {
        let spec = clock_only_spec(0.0);
        let rec = spectrum_qr(&spec, 0.0, quick_opts(7)).unwrap();
        let log_lp = CatMap::new().lambda_plus.ln();
        assert!((rec.lambda_plus - log_lp).abs() < 1e-9);
        assert!(rec.lambda_zero.abs() < 1e-9);
        assert!((rec.lambda_minus + log_lp).abs() < 1e-9);
        // volume preservation of the uncoupled system
        assert!((rec.lambda_plus + rec.lambda_zero + rec.lambda_minus).abs() < 1e-8);
        assert_eq!(rec.d_l, 3.0);
    }

    #[test]
    fn seeds_agree_on_the_attractor() {
        let spec = clock_only_spec(0.05);
        let a = spectrum_qr(&spec, 0.05, quick_opts(11)).unwrap();
        let b = spectrum_qr(&spec, 0.05, quick_opts(2024)).unwrap();
        let tol = |sa: f64, sb: f64| 3.0 * (sa * sa + sb * sb).sqrt() + 1e-7;
        assert!((a.lambda_plus - b.lambda_plus).abs() < tol(a.stderr_plus, b.stderr_plus));
        assert!((a.lambda_zero - b.lambda_zero).abs() < tol(a.stderr_zero, b.stderr_zero));
        assert!((a.lambda_minus - b.lambda_minus).abs() < tol(a.stderr_minus, b.stderr_minus));
    }

    #[test]
    fn central_exponent_tracks_linear_law() {
        // Λ₀ ≈ εΓ with Γ = −2π for the standard coupling
        let spec = clock_only_spec(0.05);
        let rec = spectrum_qr(&spec, 0.05, quick_opts(3)).unwrap();
        let expected = -0.05 * TWO_PI;
        assert!(
            (rec.lambda_zero - expected).abs() < 0.2 * expected.abs(),
            "Λ₀ = {}, expected ≈ {expected}",
            rec.lambda_zero
        );
    }

    #[test]
    fn dimension_formula_cases() {
        let log_lp = CatMap::new().lambda_plus.ln();
        let at_zero = lyapunov_dimension(&[log_lp, 0.0, -log_lp]);
        assert_eq!(at_zero.value, 3.0);
        assert_eq!(at_zero.k, 2);

        let generic = lyapunov_dimension(&[1.0, -0.2, -0.5]);
        assert!((generic.value - 3.6).abs() < 1e-14);
        assert_eq!(generic.k, 2);
        assert!(generic.out_of_range, "D_L > 3 must be flagged");

        let dead = lyapunov_dimension(&[-0.1, -0.2, -0.5]);
        assert_eq!(dead.value, 0.0);
        assert!(dead.all_negative);

        // k = 2 specialization: D_L = 2 + (Λ₊ + Λ₀)/|Λ₋|
        let r = lyapunov_dimension(&[0.9, -0.3, -0.9]);
        assert!((r.value - (2.0 + 0.6 / 0.9)).abs() < 1e-14);
    }

    #[test]
    fn closed_form_critical_coupling() {
        let eps_c = closed_form_epsilon_c(-TWO_PI);
        assert!((eps_c - 0.15317).abs() < 1e-5, "{eps_c}");
        let exact = CatMap::new().lambda_plus.ln() / TWO_PI;
        assert_eq!(eps_c, exact);
    }

    #[test]
    fn conserved_clock_leaves_w_marginal_seed_dependent() {
        // ε = 0: w is conserved per iterate, so each cloud pins its initial w
        // and different seeds land uniformly over the circle.
        let spec = clock_only_spec(0.0);
        let mut values = Vec::new();
        for seed in 0..40u64 {
            let cloud = attractor_cloud(&spec, 0.0, 8, 4, TWO_PI / 128.0, seed);
            let spread = w_iqr(&cloud, cloud[0][2]);
            assert!(spread < 1e-9, "w must be conserved, spread {spread}");
            values.push([0.0, 0.0, cloud[0][2]]);
        }
        let (_, resultant) = w_circular_stats(&values);
        assert!(resultant < 0.35, "initial phases should scatter, resultant {resultant}");
    }

    #[test]
    fn synchronized_clock_concentrates_near_locked_phase() {
        let spec = clock_only_spec(0.1);
        let cloud = attractor_cloud(&spec, 0.1, 4000, 300, TWO_PI / 256.0, 5);
        let (mean, resultant) = w_circular_stats(&cloud);
        assert!(
            crate::catmap::circ_dist(mean, std::f64::consts::PI) < 0.15,
            "circular mean {mean} should sit near π"
        );
        assert!(resultant > 0.5, "marginal should be concentrated, resultant {resultant}");
    }

    #[test]
    fn no_bracket_reported() {
        let spec = clock_only_spec(0.0);
        let grid = [0.001, 0.002];
        let res = find_epsilon_c(&spec, &grid, quick_opts(1)).unwrap();
        assert!(res.epsilon_c.is_none());
        assert_eq!(res.records.len(), 2);
    }
}
