//! Acceptance suite: one test per criterion, each printing a PASS line with
//! the measured numbers (run with `--nocapture` to see them all). Tolerances
//! are pinned here, not tuned at runtime.

use catsync::catmap::{CatMap, Sign};
use catsync::constants::solve_w0;
use catsync::coupling::{bidirectional_spec, clock_only_spec};
use catsync::grid::GridSpec;
use catsync::lyapunov::{
    attractor_cloud, closed_form_epsilon_c, find_epsilon_c, lyapunov_dimension, spectrum_qr,
    w_iqr, SpectrumOpts, SpectrumRecord,
};
use catsync::series::{assemble_manifold, build_bundle, conjugation_residual, SeriesBundle};
use catsync::tangent::{build_frame, tangent_conjugation_residual, DIRS};
use catsync::tangent_trees::{k_from_trees, nu_from_trees, TangentTreeCtx};
use catsync::trees::{
    certify_internal_u_bound, count_internal_type1, enumerate_theta_star, eval_target_sum,
    saturating_tree, NodeType, NodeValue,
};
use catsync::trig::TWO_PI;
use std::sync::{Mutex, OnceLock, PoisonError};
use std::time::Instant;

/// Serializes the heavy computations so wall-clock assertions measure
/// exclusive use of the machine.
static HEAVY: Mutex<()> = Mutex::new(());

const QR_DT: f64 = TWO_PI / 512.0;

fn log_lambda_plus() -> f64 {
    CatMap::new().lambda_plus.ln()
}

/// Shared QR records at the small-ε grid used by criteria 2, 3 and 9.
fn small_eps_records() -> &'static (Vec<SpectrumRecord>, f64) {
    static RECORDS: OnceLock<(Vec<SpectrumRecord>, f64)> = OnceLock::new();
    RECORDS.get_or_init(|| {
        use rayon::prelude::*;
        let spec = clock_only_spec(0.0);
        let started = Instant::now();
        let recs: Vec<SpectrumRecord> = [0.005, 0.01, 0.02, 0.04]
            .par_iter()
            .map(|&eps| {
                let opts = SpectrumOpts {
                    n_iter: 100_000,
                    n_transient: 1_000,
                    dt: QR_DT,
                    seed: 101 + (eps * 1000.0) as u64,
                };
                spectrum_qr(&spec, eps, opts).expect("spectrum")
            })
            .collect();
        (recs, started.elapsed().as_secs_f64())
    })
}

/// Least squares line y = a x + b.
fn ols(xs: &[f64], ys: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let sxx: f64 = xs.iter().map(|x| (x - mx) * (x - mx)).sum();
    let sxy: f64 = xs.iter().zip(ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let a = sxy / sxx;
    (a, my - a * mx)
}

#[test]
fn criterion_01_unperturbed_spectrum() {
    let _guard = HEAVY.lock().unwrap_or_else(PoisonError::into_inner);
    let started = Instant::now();
    let spec = clock_only_spec(0.0);
    let opts = SpectrumOpts { n_iter: 100_000, n_transient: 1_000, dt: QR_DT, seed: 42 };
    let rec = spectrum_qr(&spec, 0.0, opts).unwrap();
    let elapsed = started.elapsed().as_secs_f64();
    let l = log_lambda_plus();
    let errs = [
        (rec.lambda_plus - l).abs(),
        rec.lambda_zero.abs(),
        (rec.lambda_minus + l).abs(),
    ];
    let worst = errs.iter().cloned().fold(0.0, f64::max);
    println!(
        "criterion 01 (unperturbed spectrum): PASS — ({:.7}, {:.2e}, {:.7}), max err {:.2e}, {:.1}s",
        rec.lambda_plus, rec.lambda_zero, rec.lambda_minus, worst, elapsed
    );
    assert!(worst < 1e-6, "spectrum error {worst:.3e} exceeds 1e-6");
    assert!(elapsed < 30.0, "runtime {elapsed:.1}s exceeds 30s");
    // volume preservation of the uncoupled flow
    let sum = rec.lambda_plus + rec.lambda_zero + rec.lambda_minus;
    assert!(sum.abs() < 1e-8, "exponent sum {sum:.3e} breaks the ε=0 sum rule");
}

#[test]
fn criterion_02_central_exponent_law() {
    let _guard = HEAVY.lock().unwrap_or_else(PoisonError::into_inner);
    // Γ derived by quadrature for the standard coupling
    let (constants, _) = solve_w0(&clock_only_spec(0.0).g, GridSpec::new(32, 256)).unwrap();
    assert!(
        (constants.gamma + TWO_PI).abs() < 1e-9,
        "quadrature Γ = {} should equal −2π",
        constants.gamma
    );
    let (records, elapsed) = small_eps_records();
    let eps: Vec<f64> = records.iter().map(|r| r.epsilon).collect();
    let zero: Vec<f64> = records.iter().map(|r| r.lambda_zero).collect();
    let (slope, intercept) = ols(&eps, &zero);
    println!(
        "criterion 02 (central exponent law): PASS — slope {slope:.4} (Γ = {:.4}, dev {:.2}%), intercept {intercept:.2e}, {elapsed:.1}s",
        -TWO_PI,
        (slope / -TWO_PI - 1.0).abs() * 100.0
    );
    assert!(
        (slope / -TWO_PI - 1.0).abs() < 0.05,
        "slope {slope:.4} deviates more than 5% from −2π"
    );
    assert!(intercept.abs() < 1e-3, "intercept {intercept:.3e} exceeds 1e-3");
    assert!(*elapsed < 300.0, "runtime {elapsed:.1}s exceeds 5 min");
}

#[test]
fn criterion_03_longitudinal_exponents() {
    let _guard = HEAVY.lock().unwrap_or_else(PoisonError::into_inner);
    let l = log_lambda_plus();
    let mut worst: f64 = 0.0;
    let mut checked = Vec::new();
    for rec in &small_eps_records().0 {
        worst = worst.max((rec.lambda_plus - l).abs()).max((rec.lambda_minus + l).abs());
        checked.push(rec.epsilon);
    }
    let spec = clock_only_spec(0.0);
    let opts = SpectrumOpts { n_iter: 100_000, n_transient: 1_000, dt: QR_DT, seed: 7 };
    let rec = spectrum_qr(&spec, 0.1, opts).unwrap();
    worst = worst.max((rec.lambda_plus - l).abs()).max((rec.lambda_minus + l).abs());
    checked.push(0.1);
    println!(
        "criterion 03 (longitudinal exponents): PASS — max |Λ± ∓ log λ₊| = {worst:.2e} over ε ∈ {checked:?}"
    );
    assert!(worst < 1e-4, "longitudinal deviation {worst:.3e} exceeds 1e-4");
}

#[test]
fn criterion_04_critical_coupling() {
    let _guard = HEAVY.lock().unwrap_or_else(PoisonError::into_inner);
    let spec = clock_only_spec(0.0);
    let (constants, _) = solve_w0(&spec.g, GridSpec::new(32, 256)).unwrap();
    let closed = closed_form_epsilon_c(constants.gamma);
    // formula evaluation reproduces log λ₊ / (−Γ) bit-for-bit
    assert_eq!(closed, log_lambda_plus() / (-constants.gamma));
    assert!((closed - 0.15317).abs() < 5e-6, "closed form {closed:.6}");

    let grid: Vec<f64> = (0..6).map(|k| 0.10 + 0.02 * k as f64).collect();
    let opts = SpectrumOpts { n_iter: 20_000, n_transient: 500, dt: QR_DT, seed: 9 };
    let sweep = find_epsilon_c(&spec, &grid, opts).unwrap();
    let eps_c = sweep.epsilon_c.expect("transition must be bracketed on [0.10, 0.20]");
    println!(
        "criterion 04 (critical coupling): PASS — detected ε_c = {eps_c:.4}, closed form {closed:.5}"
    );
    assert!((eps_c - 0.153).abs() < 0.01, "detected ε_c = {eps_c:.4} not within ±0.01 of 0.153");
}

struct ResidualSetup {
    bundle3: SeriesBundle,
    spec: catsync::coupling::CouplingSpec,
}

/// Shared ε = 0.02 bidirectional bundle for criteria 5 and 6.
fn residual_setup() -> &'static ResidualSetup {
    static SETUP: OnceLock<ResidualSetup> = OnceLock::new();
    SETUP.get_or_init(|| {
        let eps = 0.02;
        let spec = bidirectional_spec(eps);
        let grid = GridSpec::new(64, 256);
        let bundle3 = build_bundle(&spec, grid, 40, 3).unwrap();
        ResidualSetup { bundle3, spec }
    })
}

fn truncated(bundle: &SeriesBundle, n: usize) -> SeriesBundle {
    SeriesBundle { orders: bundle.orders[..n].to_vec(), n_max: n, ..bundle.clone() }
}

/// Tolerance policy: 10³ ε⁴ plus the recorded quadrature/tail budget.
fn residual_tolerance(bundle: &SeriesBundle, eps: f64) -> f64 {
    let d = &bundle.diagnostics;
    let quad = 10.0 * (TWO_PI / bundle.grid.n_t as f64).powi(4);
    let flow = 10.0 * QR_DT.powi(4);
    1e3 * eps.powi(4) + d.u_tail_bound + d.h_tail_bound + quad + flow + d.interpolation_error
}

#[test]
fn criterion_05_conjugation_residual() {
    let _guard = HEAVY.lock().unwrap_or_else(PoisonError::into_inner);
    let eps = 0.02;
    let setup = residual_setup();
    let r3 = conjugation_residual(&assemble_manifold(&setup.bundle3, eps), &setup.spec, QR_DT, 16);
    let r2 = conjugation_residual(
        &assemble_manifold(&truncated(&setup.bundle3, 2), eps),
        &setup.spec,
        QR_DT,
        16,
    );
    let tol = residual_tolerance(&setup.bundle3, eps);
    let ratio = r2 / r3;
    let lo = 0.1 / eps;
    let hi = 10.0 / eps;

    // the pure clock coupling must also meet the sup bound
    let clock = clock_only_spec(eps);
    let cb = build_bundle(&clock, GridSpec::new(64, 256), 40, 3).unwrap();
    let r_clock = conjugation_residual(&assemble_manifold(&cb, eps), &clock, QR_DT, 16);

    println!(
        "criterion 05 (conjugation residual): PASS — r3 = {r3:.3e} ≤ {tol:.3e}, r2/r3 = {ratio:.1} ∈ [{lo:.0}, {hi:.0}], f=0 r3 = {r_clock:.3e}"
    );
    assert!(r3 <= tol, "residual {r3:.3e} exceeds tolerance {tol:.3e}");
    assert!(r_clock <= tol, "f = 0 residual {r_clock:.3e} exceeds tolerance {tol:.3e}");
    assert!(
        ratio >= lo && ratio <= hi,
        "r2/r3 = {ratio:.2} outside a factor 10 of 1/ε = {:.0}",
        1.0 / eps
    );
}

#[test]
fn criterion_06_tangent_conjugation_residual() {
    let _guard = HEAVY.lock().unwrap_or_else(PoisonError::into_inner);
    let eps = 0.02;
    let setup = residual_setup();
    let (_, frame3) = build_frame(&setup.bundle3, &setup.spec, 3).unwrap();
    let manifold3 = assemble_manifold(&setup.bundle3, eps);
    let r3 = tangent_conjugation_residual(&frame3, &manifold3, &setup.spec, QR_DT, 16);

    let bundle2 = truncated(&setup.bundle3, 2);
    let (_, frame2) = build_frame(&bundle2, &setup.spec, 2).unwrap();
    let manifold2 = assemble_manifold(&bundle2, eps);
    let r2 = tangent_conjugation_residual(&frame2, &manifold2, &setup.spec, QR_DT, 16);

    let tol = residual_tolerance(&setup.bundle3, eps);
    let ratio = r2 / r3;
    let (lo, hi) = (0.1 / eps, 10.0 / eps);
    println!(
        "criterion 06 (tangent conjugation residual): PASS — r3 = {r3:.3e} ≤ {tol:.3e}, r2/r3 = {ratio:.1} ∈ [{lo:.0}, {hi:.0}]"
    );
    assert!(r3 <= tol, "tangent residual {r3:.3e} exceeds tolerance {tol:.3e}");
    assert!(
        ratio >= lo && ratio <= hi,
        "r2/r3 = {ratio:.2} outside a factor 10 of 1/ε"
    );
}

#[test]
fn criterion_07_tree_oracle_equivalence() {
    let _guard = HEAVY.lock().unwrap_or_else(PoisonError::into_inner);
    // exact topology counts at n = 1, 2
    for (eta, expect1, expect2) in [
        (NodeType::Xi, 1usize, 2usize),
        (NodeType::UCap, 1, 2),
        (NodeType::AComp, 1, 4),
        (NodeType::HComp, 1, 4),
    ] {
        let sign = eta.is_signed().then_some(Sign::Plus);
        assert_eq!(enumerate_theta_star(1, eta, sign, 6).unwrap().len(), expect1);
        assert_eq!(enumerate_theta_star(2, eta, sign, 6).unwrap().len(), expect2);
    }

    let eps = 0.05;
    let grid = GridSpec::new(20, 128);
    let spec = bidirectional_spec(eps);
    let bundle = build_bundle(&spec, grid, 40, 3).unwrap();
    let ctx = catsync::trees::TreeEvalCtx::new(&spec, bundle.constants, grid, 40);
    let sample: Vec<(i64, i64)> =
        (0..5).flat_map(|i| (0..5).map(move |j| (4 * i as i64, 4 * j as i64))).collect();
    let t_probe = [grid.n_t / 2, grid.n_t];
    let mut worst: f64 = 0.0;
    for n in 1..=3usize {
        let od = &bundle.orders[n - 1];
        for &(i, j) in &sample {
            let (iu, ju) = (i as usize, j as usize);
            match eval_target_sum(n, NodeType::Xi, None, &ctx, (i, j), 6).unwrap() {
                NodeValue::Row(r) => {
                    for &k in &t_probe {
                        worst = worst.max((r[k] - od.xi.at(iu, ju, k)).abs());
                    }
                }
                _ => unreachable!(),
            }
            match eval_target_sum(n, NodeType::UCap, None, &ctx, (i, j), 6).unwrap() {
                NodeValue::Scalar(s) => worst = worst.max((s - od.u_cap.at(iu, ju)).abs()),
                _ => unreachable!(),
            }
            for sign in Sign::BOTH {
                let (a_grid, h_grid) = match sign {
                    Sign::Plus => (&od.a_plus, &od.h_plus),
                    Sign::Minus => (&od.a_minus, &od.h_minus),
                };
                match eval_target_sum(n, NodeType::AComp, Some(sign), &ctx, (i, j), 6).unwrap() {
                    NodeValue::Row(r) => {
                        for &k in &t_probe {
                            worst = worst.max((r[k] - a_grid.at(iu, ju, k)).abs());
                        }
                    }
                    _ => unreachable!(),
                }
                match eval_target_sum(n, NodeType::HComp, Some(sign), &ctx, (i, j), 6).unwrap() {
                    NodeValue::Scalar(s) => worst = worst.max((s - h_grid.at(iu, ju)).abs()),
                    _ => unreachable!(),
                }
            }
        }
    }

    // tangent-frame targets against their trees
    let (ms, frame) = build_frame(&bundle, &spec, 3).unwrap();
    let tctx = TangentTreeCtx::new(&ms, 40);
    let mut worst_tangent: f64 = 0.0;
    for n in 1..=3usize {
        for &(i, j) in &sample {
            let (iu, ju) = (i as usize, j as usize);
            for a in DIRS {
                let got = nu_from_trees(n, a, &tctx, (i, j), 6).unwrap();
                worst_tangent = worst_tangent.max((got - frame.nu[n - 1][a].at(iu, ju)).abs());
                for b in DIRS {
                    if a == b {
                        continue;
                    }
                    let got = k_from_trees(n, a, b, &tctx, (i, j), 6).unwrap();
                    worst_tangent =
                        worst_tangent.max((got - frame.k[n - 1][3 * a + b].at(iu, ju)).abs());
                }
            }
        }
    }
    println!(
        "criterion 07 (tree-oracle equivalence): PASS — manifold max dev {worst:.2e}, tangent max dev {worst_tangent:.2e}, counts match diagrams"
    );
    assert!(worst < 1e-6, "tree/recursion deviation {worst:.3e} exceeds 1e-6");
    assert!(worst_tangent < 1e-6, "tangent tree deviation {worst_tangent:.3e} exceeds 1e-6");
}

#[test]
fn criterion_08_internal_u_bound_certification() {
    let report = certify_internal_u_bound(5, 6).expect("no violation up to order 5");
    assert!(report.saturating_orders_found.contains(&2));
    assert!(report.saturating_orders_found.contains(&5));
    let constructed = saturating_tree(3);
    assert_eq!(constructed.order(), 11);
    assert_eq!(count_internal_type1(&constructed), 7);
    let counts: Vec<usize> = report.rows.iter().map(|r| r.max_internal_u).collect();
    println!(
        "criterion 08 (combinatorial bound): PASS — max internal-U per order {:?}, saturation at {:?}, constructed n=11 tree count 7",
        counts, report.saturating_orders_found
    );
}

#[test]
fn criterion_09_lyapunov_dimension() {
    let _guard = HEAVY.lock().unwrap_or_else(PoisonError::into_inner);
    let l = log_lambda_plus();
    let at_zero = lyapunov_dimension(&[l, 0.0, -l]);
    assert_eq!(at_zero.value, 3.0, "D_L(0) must equal 3 exactly");

    let (records, _) = small_eps_records();
    let eps: Vec<f64> = records.iter().map(|r| r.epsilon).collect();
    let dls: Vec<f64> = records.iter().map(|r| r.d_l).collect();
    let (slope, _) = ols(&eps, &dls);
    let expected = -TWO_PI / l;
    println!(
        "criterion 09 (Lyapunov dimension): PASS — D_L(0) = 3 exactly, dD_L/dε = {slope:.3} vs Γ/log λ₊ = {expected:.3}"
    );
    assert!(
        (slope / expected - 1.0).abs() < 0.10,
        "dimension slope {slope:.3} deviates more than 10% from {expected:.3}"
    );
}

/// KNOWN RED. The criterion asserts a strictly decreasing interquartile
/// range of the w-marginal across ε = 0.05, 0.1, 0.153, 1, but the system
/// does the opposite: the on-attractor graph amplitude `W(φ) − w₀` grows
/// with ε (≈ ε·U⁽¹⁾ at small coupling), so the IQR strictly increases.
/// Two independent routes agree to three digits — the direct Poincaré cloud
/// and the resummed manifold graph sampled over the lattice (e.g. at
/// ε = 0.05: cloud 0.0101 vs series 0.0102; ε = 0.1: 0.0299 vs 0.0305;
/// ε = 0.153: 0.0605 vs 0.0608). Stronger coupling tightens the transverse
/// relaxation, not the graph amplitude; the fractal→smooth transition is
/// about regularity, not spread. The criterion is kept faithful and left
/// failing; see the analysis printed below.
#[test]
fn criterion_10_w_dispersion_monotone() {
    let _guard = HEAVY.lock().unwrap_or_else(PoisonError::into_inner);
    let spec = clock_only_spec(0.0);
    let mut iqrs = Vec::new();
    for &eps in &[0.05, 0.1, 0.153, 1.0] {
        let cloud = attractor_cloud(&spec, eps, 20_000, 1_000, QR_DT, 5);
        iqrs.push((eps, w_iqr(&cloud, std::f64::consts::PI)));
    }
    // independent check: the manifold graph's own IQR on the lattice, where
    // the series is trustworthy
    let mut series_iqrs = Vec::new();
    for &eps in &[0.05, 0.1, 0.153] {
        let bundle = build_bundle(&spec.with_epsilon(eps), GridSpec::new(64, 256), 40, 3).unwrap();
        let m = assemble_manifold(&bundle, eps);
        let pts: Vec<[f64; 3]> = (0..64)
            .flat_map(|i| (0..64).map(move |j| (i, j)))
            .map(|(i, j)| [0.0, 0.0, m.at_site(i, j).1])
            .collect();
        series_iqrs.push((eps, w_iqr(&pts, std::f64::consts::PI)));
    }
    let fmt = |v: &[(f64, f64)]| {
        v.iter().map(|(e, x)| format!("ε={e}: {x:.4}")).collect::<Vec<_>>().join(", ")
    };
    println!(
        "criterion 10 (w-dispersion): measured cloud IQR [{}]; independent series-graph IQR [{}] — \
         dispersion grows with ε, so the stated strictly-decreasing ordering cannot hold \
         (see decisions ledger)",
        fmt(&iqrs),
        fmt(&series_iqrs)
    );
    for w in iqrs.windows(2) {
        assert!(
            w[1].1 < w[0].1,
            "IQR must strictly decrease per the acceptance criterion, got {:?} -> {:?}; \
             both measurement routes show the dispersion increasing with ε",
            w[0],
            w[1]
        );
    }
}
