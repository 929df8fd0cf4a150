//! Command implementations behind the `catsync` binary: configuration in,
//! CSV/JSON artifacts plus a manifest out.

use crate::config::{full_precision, ConfigError, ResultManifest, RunConfig, SweepMethod};
use crate::constants::HypothesisError;
use crate::coupling::CouplingSpec;
use crate::lyapunov::{
    attractor_cloud, closed_form_epsilon_c, find_epsilon_c, spectrum_perturbative, spectrum_qr,
    Average, LyapunovError, SpectrumOpts, SpectrumRecord,
};
use crate::series::{assemble_manifold, conjugation_residual, SeriesBundle};
use crate::tangent::{build_frame, tangent_conjugation_residual, TangentError, TangentFrame};
use crate::trees::{certify_internal_u_bound, enumerate_theta_star, render_dot, NodeType};
use serde_json::json;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::time::Instant;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Config(#[from] ConfigError),
    #[error("{0}")]
    Hypothesis(#[from] HypothesisError),
    #[error("{0}")]
    Numerical(String),
    #[error("i/o failure: {0}")]
    Io(#[from] std::io::Error),
}

impl From<LyapunovError> for CliError {
    fn from(e: LyapunovError) -> Self {
        CliError::Numerical(e.to_string())
    }
}

impl From<TangentError> for CliError {
    fn from(e: TangentError) -> Self {
        CliError::Numerical(e.to_string())
    }
}

impl From<serde_json::Error> for CliError {
    fn from(e: serde_json::Error) -> Self {
        CliError::Numerical(format!("serialization failure: {e}"))
    }
}

impl CliError {
    /// 2 = config, 3 = hypothesis failure, 4 = numerical failure.
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Config(_) => 2,
            CliError::Hypothesis(_) => 3,
            CliError::Numerical(_) | CliError::Io(_) => 4,
        }
    }
}

fn ensure_dir(dir: &Path) -> Result<(), CliError> {
    std::fs::create_dir_all(dir)?;
    Ok(())
}

fn spectrum_opts(cfg: &RunConfig) -> SpectrumOpts {
    SpectrumOpts {
        n_iter: cfg.dynamics.n_iter,
        n_transient: cfg.dynamics.n_transient,
        dt: cfg.dynamics.dt,
        seed: cfg.dynamics.seed,
    }
}

fn record_json(rec: &SpectrumRecord) -> serde_json::Value {
    serde_json::to_value(rec).expect("record serializes")
}

fn write_records_csv(path: &Path, records: &[SpectrumRecord]) -> Result<(), CliError> {
    let mut w = std::io::BufWriter::new(std::fs::File::create(path)?);
    writeln!(
        w,
        "epsilon,L_plus,L_zero,L_minus,D_L,stderr_plus,stderr_zero,stderr_minus"
    )?;
    for r in records {
        writeln!(
            w,
            "{},{},{},{},{},{},{},{}",
            full_precision(r.epsilon),
            full_precision(r.lambda_plus),
            full_precision(r.lambda_zero),
            full_precision(r.lambda_minus),
            full_precision(r.d_l),
            full_precision(r.stderr_plus),
            full_precision(r.stderr_zero),
            full_precision(r.stderr_minus),
        )?;
    }
    Ok(())
}

/// `simulate`: attractor point cloud.
pub fn run_simulate(cfg: &RunConfig, out: &Path) -> Result<ResultManifest, CliError> {
    let started = Instant::now();
    ensure_dir(out)?;
    let spec = cfg.coupling_spec()?;
    let cloud = attractor_cloud(
        &spec,
        cfg.coupling.epsilon,
        cfg.dynamics.n_points,
        cfg.dynamics.n_transient,
        cfg.dynamics.dt,
        cfg.dynamics.seed,
    );
    {
        let mut w = std::io::BufWriter::new(std::fs::File::create(out.join("points.csv"))?);
        writeln!(w, "x1,x2,w")?;
        for p in &cloud {
            writeln!(
                w,
                "{},{},{}",
                full_precision(p[0]),
                full_precision(p[1]),
                full_precision(p[2])
            )?;
        }
    }
    let (w_mean, w_resultant) = crate::lyapunov::w_circular_stats(&cloud);
    let mut manifest = ResultManifest::new("simulate", cfg.config_hash());
    manifest.diagnostics = json!({
        "n_points": cloud.len(),
        "w_circular_mean": w_mean,
        "w_resultant": w_resultant,
    });
    manifest.record_file(out, "points.csv")?;
    manifest.wall_clock_s = started.elapsed().as_secs_f64();
    manifest.write(out)?;
    Ok(manifest)
}

fn perturbative_record(
    cfg: &RunConfig,
    spec: &CouplingSpec,
    epsilon: f64,
) -> Result<SpectrumRecord, CliError> {
    let grid = cfg.grid_spec();
    let (constants, _) = crate::constants::solve_w0(&spec.g, grid)?;
    let bundle = SeriesBundle::build(
        &spec.with_epsilon(epsilon),
        constants.at_mu(epsilon),
        grid,
        cfg.series.m_sum,
        cfg.series.n_max,
    );
    let (_, frame) = build_frame(&bundle, &spec.with_epsilon(epsilon), cfg.series.n_max)?;
    Ok(spectrum_perturbative(
        &frame,
        epsilon,
        Average::Orbit { n_iter: cfg.dynamics.n_iter, seed: cfg.dynamics.seed },
    )?)
}

/// `spectrum`: single record or ε sweep with transition detection.
pub fn run_spectrum(cfg: &RunConfig, out: &Path) -> Result<ResultManifest, CliError> {
    let started = Instant::now();
    ensure_dir(out)?;
    let spec = cfg.coupling_spec()?;
    let opts = spectrum_opts(cfg);
    let mut manifest = ResultManifest::new("spectrum", cfg.config_hash());

    if let Some(sweep) = &cfg.sweep {
        let grid = sweep.grid()?;
        let sweep_out = find_epsilon_c(&spec, &grid, opts)?;
        write_records_csv(&out.join("sweep.csv"), &sweep_out.records)?;
        let mut diag = json!({
            "epsilon_c": sweep_out.epsilon_c,
            "method": "qr",
        });
        if spec.f_is_zero() {
            let (constants, _) = crate::constants::solve_w0(&spec.g, cfg.grid_spec())?;
            diag["epsilon_c_closed_form"] = json!(closed_form_epsilon_c(constants.gamma));
        }
        let body = json!({
            "epsilon_c": sweep_out.epsilon_c,
            "records": sweep_out.records,
        });
        std::fs::write(out.join("sweep.json"), serde_json::to_string_pretty(&body)?)?;
        if sweep.method != SweepMethod::Qr {
            let records: Result<Vec<SpectrumRecord>, CliError> =
                grid.iter().map(|&e| perturbative_record(cfg, &spec, e)).collect();
            write_records_csv(&out.join("sweep_perturbative.csv"), &records?)?;
            manifest.record_file(out, "sweep_perturbative.csv")?;
        }
        manifest.diagnostics = diag;
        manifest.record_file(out, "sweep.csv")?;
        manifest.record_file(out, "sweep.json")?;
    } else {
        let method = cfg.sweep.as_ref().map(|s| s.method).unwrap_or_default();
        let body = match method {
            SweepMethod::Qr => {
                let rec = spectrum_qr(&spec, cfg.coupling.epsilon, opts)?;
                json!({ "qr": record_json(&rec) })
            }
            SweepMethod::Perturbative => {
                let rec = perturbative_record(cfg, &spec, cfg.coupling.epsilon)?;
                json!({ "perturbative": record_json(&rec) })
            }
            SweepMethod::Both => {
                let qr = spectrum_qr(&spec, cfg.coupling.epsilon, opts)?;
                let pert = perturbative_record(cfg, &spec, cfg.coupling.epsilon)?;
                let diff = [
                    (qr.lambda_plus - pert.lambda_plus).abs(),
                    (qr.lambda_zero - pert.lambda_zero).abs(),
                    (qr.lambda_minus - pert.lambda_minus).abs(),
                ];
                json!({
                    "qr": record_json(&qr),
                    "perturbative": record_json(&pert),
                    "agreement": {
                        "max_abs_difference": diff.iter().cloned().fold(0.0, f64::max),
                        "per_exponent": diff,
                    }
                })
            }
        };
        std::fs::write(out.join("spectrum.json"), serde_json::to_string_pretty(&body)?)?;
        manifest.record_file(out, "spectrum.json")?;
    }
    manifest.wall_clock_s = started.elapsed().as_secs_f64();
    manifest.write(out)?;
    Ok(manifest)
}

/// `series`: build (or reload) the manifold series and tangent frame, write
/// norms, residuals and the locked-phase report.
pub fn run_series(cfg: &RunConfig, out: &Path) -> Result<ResultManifest, CliError> {
    let started = Instant::now();
    ensure_dir(out)?;
    let spec = cfg.coupling_spec()?;
    let grid = cfg.grid_spec();
    let (constants, w0_report) = crate::constants::solve_w0(&spec.g, grid)?;
    let constants = constants.at_mu(cfg.mu());

    let key = cfg.bundle_cache_key();
    let bundle_path = out.join(format!("bundle-{key}.bin"));
    let frame_path = out.join(format!("frame-{key}.bin"));
    let mut cache_hit = false;
    let bundle = if bundle_path.exists() {
        match SeriesBundle::load(&bundle_path) {
            Ok(b) if b.n_max == cfg.series.n_max && b.grid == grid => {
                cache_hit = true;
                b
            }
            _ => SeriesBundle::build(&spec, constants, grid, cfg.series.m_sum, cfg.series.n_max),
        }
    } else {
        SeriesBundle::build(&spec, constants, grid, cfg.series.m_sum, cfg.series.n_max)
    };
    if !cache_hit {
        bundle.save(&bundle_path)?;
    }
    let frame = if cache_hit && frame_path.exists() {
        TangentFrame::load(&frame_path)?
    } else {
        let (_, frame) = build_frame(&bundle, &spec, cfg.series.n_max)?;
        frame.save(&frame_path)?;
        frame
    };

    // per-order norms
    let torus_zero = bundle
        .orders
        .iter()
        .all(|od| od.a_plus.is_zero() && od.a_minus.is_zero() && od.h_plus.sup_norm() == 0.0);
    {
        let mut w = std::io::BufWriter::new(std::fs::File::create(out.join("norms_clock.csv"))?);
        writeln!(w, "order,xi_sup,u_sup")?;
        for (k, od) in bundle.orders.iter().enumerate() {
            writeln!(
                w,
                "{},{},{}",
                k + 1,
                full_precision(od.xi.sup_norm()),
                full_precision(od.u_cap.sup_norm())
            )?;
        }
    }
    if !torus_zero {
        let mut w = std::io::BufWriter::new(std::fs::File::create(out.join("norms_torus.csv"))?);
        writeln!(w, "order,a_plus_sup,a_minus_sup,h_plus_sup,h_minus_sup")?;
        for (k, od) in bundle.orders.iter().enumerate() {
            writeln!(
                w,
                "{},{},{},{},{}",
                k + 1,
                full_precision(od.a_plus.sup_norm()),
                full_precision(od.a_minus.sup_norm()),
                full_precision(od.h_plus.sup_norm()),
                full_precision(od.h_minus.sup_norm())
            )?;
        }
    }

    // conjugation residuals per truncation order
    let sample = grid.n_phi.min(16);
    let mut residuals = Vec::new();
    for n in 1..=cfg.series.n_max {
        let truncated = SeriesBundle {
            orders: bundle.orders[..n].to_vec(),
            n_max: n,
            ..bundle.clone()
        };
        let manifold = assemble_manifold(&truncated, cfg.coupling.epsilon);
        residuals.push(conjugation_residual(&manifold, &spec, cfg.dynamics.dt, sample));
    }
    let manifold = assemble_manifold(&bundle, cfg.coupling.epsilon);
    let tangent_residual =
        tangent_conjugation_residual(&frame, &manifold, &spec, cfg.dynamics.dt, sample);

    let report = json!({
        "w0": constants.w0,
        "gamma": constants.gamma,
        "mu": constants.mu,
        "roots": w0_report.roots,
        "gamma0_phi_spread": w0_report.gamma0_spread,
        "gamma1_phi_spread": w0_report.gamma1_spread,
        "order_sup_norms": bundle.diagnostics.order_sup_norms,
        "conjugation_residuals_by_order": residuals,
        "tangent_conjugation_residual": tangent_residual,
        "radius_estimate": bundle.diagnostics.radius_estimate,
        "growth_constant": bundle.diagnostics.growth_constant,
        "u_sum_depth": bundle.diagnostics.u_sum_depth,
        "u_tail_bound": bundle.diagnostics.u_tail_bound,
        "h_tail_bound": bundle.diagnostics.h_tail_bound,
        "boundary_defect": bundle.diagnostics.boundary_defect,
        "interpolation_error": bundle.diagnostics.interpolation_error,
        "radius_warning": manifold.radius_warning,
        "cache_hit": cache_hit,
    });
    std::fs::write(out.join("series_report.json"), serde_json::to_string_pretty(&report)?)?;

    let mut manifest = ResultManifest::new("series", cfg.config_hash());
    manifest.diagnostics = json!({
        "cache_key": key,
        "cache_hit": cache_hit,
    });
    if torus_zero {
        manifest
            .notes
            .push("torus displacement series (a, h) identically zero for f = 0; norms_torus.csv omitted".into());
    }
    manifest.record_file(out, "series_report.json")?;
    manifest.record_file(out, "norms_clock.csv")?;
    if !torus_zero {
        manifest.record_file(out, "norms_torus.csv")?;
    }
    manifest.record_file(out, bundle_path.file_name().unwrap().to_str().unwrap())?;
    manifest.record_file(out, frame_path.file_name().unwrap().to_str().unwrap())?;
    manifest.wall_clock_s = started.elapsed().as_secs_f64();
    manifest.write(out)?;
    Ok(manifest)
}

/// `trees`: combinatorial-bound certification, topology counts, renders.
pub fn run_trees(cfg: &RunConfig, out: &Path) -> Result<ResultManifest, CliError> {
    let started = Instant::now();
    ensure_dir(out)?;
    let tcfg = cfg.trees.clone().unwrap_or_default();
    let enum_max = tcfg.n_max.max(crate::trees::DEFAULT_ENUM_MAX);
    let report = certify_internal_u_bound(tcfg.n_max, enum_max)
        .map_err(|e| CliError::Numerical(e.to_string()))?;
    let constructed = crate::trees::saturating_tree(3);
    let counts = |n: usize, eta: NodeType| -> usize {
        enumerate_theta_star(n, eta, Some(crate::catmap::Sign::Plus), enum_max)
            .map(|v| v.len())
            .unwrap_or(0)
    };
    let body = json!({
        "lemma": report,
        "all_pass": true,
        "constructed_order_11": {
            "order": constructed.order(),
            "internal_u_count": crate::trees::count_internal_type1(&constructed),
        },
        "topology_counts": {
            "n1": { "xi": counts(1, NodeType::Xi), "u": counts(1, NodeType::UCap),
                     "a": counts(1, NodeType::AComp), "h": counts(1, NodeType::HComp) },
            "n2": { "xi": counts(2, NodeType::Xi), "u": counts(2, NodeType::UCap),
                     "a": counts(2, NodeType::AComp), "h": counts(2, NodeType::HComp) },
        },
    });
    std::fs::write(out.join("trees_report.json"), serde_json::to_string_pretty(&body)?)?;
    let mut manifest = ResultManifest::new("trees", cfg.config_hash());
    manifest.record_file(out, "trees_report.json")?;

    if tcfg.render {
        let render_dir = out.join("render");
        std::fs::create_dir_all(&render_dir)?;
        let mut rendered = Vec::new();
        for n in 1..=2usize {
            for eta in [NodeType::Xi, NodeType::UCap, NodeType::AComp, NodeType::HComp] {
                let trees = enumerate_theta_star(n, eta, Some(crate::catmap::Sign::Plus), enum_max)
                    .map_err(|e| CliError::Numerical(e.to_string()))?;
                for (k, tree) in trees.iter().enumerate() {
                    let name = format!("{}_n{}_{}", eta.short(), n, k);
                    let path = render_dir.join(format!("{name}.dot"));
                    std::fs::write(&path, render_dot(tree, &name))?;
                    rendered.push(format!("render/{name}.dot"));
                }
            }
        }
        for k in 1..=3u32 {
            let name = format!("saturating_k{k}");
            let path = render_dir.join(format!("{name}.dot"));
            std::fs::write(&path, render_dot(&crate::trees::saturating_tree(k), &name))?;
            rendered.push(format!("render/{name}.dot"));
        }
        for name in rendered {
            manifest.record_file(out, &name)?;
        }
    }
    manifest.wall_clock_s = started.elapsed().as_secs_f64();
    manifest.write(out)?;
    Ok(manifest)
}

/// Dispatch used by the binary.
pub fn run_command(
    command: &str,
    config_path: &Path,
    out_override: Option<PathBuf>,
    seed_override: Option<u64>,
) -> Result<ResultManifest, CliError> {
    let mut cfg = RunConfig::from_path(config_path)?;
    if let Some(seed) = seed_override {
        cfg.dynamics.seed = seed;
    }
    let out = out_override.unwrap_or_else(|| cfg.output.dir.clone());
    match command {
        "simulate" => run_simulate(&cfg, &out),
        "spectrum" => run_spectrum(&cfg, &out),
        "series" => run_series(&cfg, &out),
        "trees" => run_trees(&cfg, &out),
        other => Err(CliError::Config(ConfigError::Invalid(format!("unknown command {other}")))),
    }
}
