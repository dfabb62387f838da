//! `cgw` command-line front end.
//!
//! Results go to standard output (or `--output`), diagnostics to standard
//! error. Validation errors exit with status 1 and a single line
//! `error: <code>: <detail>`; a failed `verify` probe exits with status 2.
//! Every completed run writes `run_manifest.json` next to its output.

mod args;
mod io;

use std::ffi::OsString;
use std::path::{Path, PathBuf};
use std::time::Instant;

use clap::error::ErrorKind;
use clap::Parser;
use serde::Serialize;
use serde_json::{json, Value};

use cgw_core::analysis::{
    delta_sweep, gw_fragility_demo, robustness_probe, verify_bound_sandwich, verify_scaling, weak_iso_probe,
};
use cgw_core::baselines::{cot_solve, gw2_solve, BaselineConfig};
use cgw_core::data::{foscttm, gen_aligned_hypernetworks, gen_squares, image_to_network, knn_classify};
use cgw_core::uot::{pushforward_value_distribution, uot_solve, UotConfig};
use cgw_core::{
    bca_solve, cgw_solve, ConeKernel, DiscreteMeasureNetwork, KernelFamily, NetworkDocument, SolverConfig,
    SolverReport, TensorMode,
};

pub use args::{Cli, Command, Global, Probe};

/// A failure reported as `error: <code>: <detail>`.
#[derive(Debug, Clone, PartialEq)]
pub struct CliError {
    pub code: String,
    pub detail: String,
}

impl CliError {
    pub fn new(code: impl Into<String>, detail: impl Into<String>) -> Self {
        Self { code: code.into(), detail: detail.into() }
    }

    fn io(path: &Path, e: std::io::Error) -> Self {
        Self::new("io", format!("{}: {e}", path.display()))
    }
}

impl From<cgw_core::Error> for CliError {
    fn from(e: cgw_core::Error) -> Self {
        Self::new(e.code(), e.to_string())
    }
}

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let detail = self.detail.replace(['\n', '\r'], " ");
        write!(f, "error: {}: {}", self.code, detail.trim())
    }
}

/// What a finished command leaves behind for its manifest.
struct Completed {
    config: Value,
    inputs: Vec<PathBuf>,
    /// Directory for the manifest when the command has no `--output`.
    artifact_dir: Option<PathBuf>,
    /// A `verify` probe whose checks did not hold.
    failed: bool,
}

impl Completed {
    fn new(config: Value, inputs: &[&Path]) -> Self {
        Self {
            config,
            inputs: inputs.iter().map(|p| p.to_path_buf()).collect(),
            artifact_dir: None,
            failed: false,
        }
    }
}

/// Parses `argv` (program name first), runs the command and returns the
/// process exit status.
pub fn run<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let argv: Vec<OsString> = argv.into_iter().map(Into::into).collect();
    let cli = match Cli::try_parse_from(&argv) {
        Ok(cli) => cli,
        Err(e) if matches!(e.kind(), ErrorKind::DisplayHelp | ErrorKind::DisplayVersion) => {
            let _ = e.print();
            return 0;
        }
        Err(e) => {
            let text = e.to_string();
            let first = text.lines().next().unwrap_or("invalid arguments");
            eprintln!("{}", CliError::new("usage", first.trim_start_matches("error: ")));
            return 1;
        }
    };
    let start = Instant::now();
    let outcome = with_threads(&cli.global, || execute(&cli));
    let done = match outcome {
        Ok(done) => done,
        Err(e) => {
            eprintln!("{e}");
            return 1;
        }
    };
    let argv_text: Vec<String> = argv.iter().map(|a| a.to_string_lossy().into_owned()).collect();
    if let Err(e) = write_manifest(&cli, &argv_text, &done, start.elapsed().as_secs_f64()) {
        eprintln!("{e}");
        return 1;
    }
    if done.failed {
        eprintln!("verification failed");
        2
    } else {
        0
    }
}

fn with_threads<T: Send>(global: &Global, f: impl FnOnce() -> T + Send) -> T {
    match global.threads {
        args::Threads::Auto => f(),
        args::Threads::Count(n) => match rayon::ThreadPoolBuilder::new().num_threads(n).build() {
            Ok(pool) => pool.install(f),
            Err(_) => f(),
        },
    }
}

fn command_name(command: &Command) -> &'static str {
    match command {
        Command::Ccot { .. } => "ccot",
        Command::Cgw { .. } => "cgw",
        Command::Gw2 { .. } => "gw2",
        Command::Cot { .. } => "cot",
        Command::UotBound { .. } => "uot-bound",
        Command::DeltaSweep { .. } => "delta-sweep",
        Command::Verify { probe } => match probe {
            Probe::Scaling { .. } => "verify scaling",
            Probe::Bounds { .. } => "verify bounds",
            Probe::Robustness { .. } => "verify robustness",
            Probe::Weakiso { .. } => "verify weakiso",
            Probe::Fragility { .. } => "verify fragility",
        },
        Command::GenSquares { .. } => "gen-squares",
        Command::Img2net { .. } => "img2net",
        Command::GenAligned { .. } => "gen-aligned",
        Command::Classify { .. } => "classify",
        Command::Foscttm { .. } => "foscttm",
        Command::Bench { .. } => "bench",
    }
}

#[derive(Serialize)]
struct Manifest<'a> {
    command: &'a str,
    argv: &'a [String],
    seed: u64,
    config: &'a Value,
    tool_version: &'a str,
    input_hashes: serde_json::Map<String, Value>,
    wall_time: f64,
}

fn write_manifest(cli: &Cli, argv: &[String], done: &Completed, wall_time: f64) -> Result<(), CliError> {
    let mut input_hashes = serde_json::Map::new();
    for path in &done.inputs {
        input_hashes.insert(path.display().to_string(), Value::String(io::sha256_file(path)?));
    }
    let manifest = Manifest {
        command: command_name(&cli.command),
        argv,
        seed: cli.global.seed,
        config: &done.config,
        tool_version: env!("CARGO_PKG_VERSION"),
        input_hashes,
        wall_time,
    };
    let dir = match (&cli.global.output, &done.artifact_dir) {
        (Some(out), _) => out.parent().map(Path::to_path_buf).unwrap_or_default(),
        (None, Some(dir)) => dir.clone(),
        (None, None) => PathBuf::new(),
    };
    io::write_text(&dir.join("run_manifest.json"), &io::to_json(&manifest))
}

/// Result text to `--output` or standard output.
fn emit(global: &Global, text: &str) -> Result<(), CliError> {
    match &global.output {
        Some(path) => io::write_text(path, text),
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

fn kernel(global: &Global) -> Result<ConeKernel, CliError> {
    let family = match global.kernel {
        args::KernelArg::Cos => KernelFamily::TruncatedCosine,
        args::KernelArg::Exp => KernelFamily::Gaussian,
    };
    Ok(ConeKernel::new(family, global.delta)?)
}

fn solver_config(global: &Global) -> Result<SolverConfig, CliError> {
    let mut cfg = SolverConfig::new(kernel(global)?).with_seed(global.seed);
    if let Some(m) = global.max_iters {
        cfg.max_iters = m;
    }
    if let Some(t) = global.tol {
        cfg.rel_tol = t;
    }
    if let Some(r) = global.restarts {
        cfg.restarts = r;
    }
    match global.quantize {
        Some(args::Quantize::Off) => cfg.tensor_policy.force_mode = Some(TensorMode::Dense),
        Some(args::Quantize::Bins(q)) => cfg.tensor_policy.quantize_bins = q,
        None => {}
    }
    if let Some(tile) = global.tile {
        if tile == 0 {
            return Err(CliError::new("invalid_config", "--tile must be positive"));
        }
        cfg.tensor_policy.tile = tile;
    }
    cfg.validate()?;
    Ok(cfg)
}

fn baseline_config(global: &Global) -> BaselineConfig {
    let mut cfg = BaselineConfig { seed: global.seed, ..Default::default() };
    if let Some(m) = global.max_iters {
        cfg.max_iters = m;
    }
    if let Some(t) = global.tol {
        cfg.tol = t;
    }
    if let Some(r) = global.restarts {
        cfg.restarts = r;
    }
    cfg
}

fn to_value<T: Serialize>(v: &T) -> Value {
    serde_json::to_value(v).expect("serializable")
}

/// Common result shape of every distance command.
#[derive(Serialize)]
struct DistanceResult {
    method: &'static str,
    distance: f64,
    objective: f64,
    iterations: usize,
    converged: bool,
    frobenius_gap: Option<f64>,
    equality_certified: Option<bool>,
    quantization_uncertainty: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    upper_distance: Option<f64>,
    config: Value,
}

impl DistanceResult {
    fn from_report(method: &'static str, report: &SolverReport) -> Self {
        Self {
            method,
            distance: report.distance,
            objective: report.objective,
            iterations: report.iterations,
            converged: report.converged,
            frobenius_gap: report.frobenius_gap,
            equality_certified: report.equality_certified,
            quantization_uncertainty: report.quantization_uncertainty,
            upper_distance: None,
            config: to_value(&report.config),
        }
    }
}

fn solver_trace(path: &Path, report: &SolverReport) -> Result<(), CliError> {
    let rows: Vec<Vec<String>> = report
        .objective_trace
        .iter()
        .enumerate()
        .map(|(t, f)| {
            let gap = report.frobenius_gap_trace.get(t).map(f64::to_string).unwrap_or_default();
            vec![t.to_string(), f.to_string(), gap]
        })
        .collect();
    io::write_csv(path, &["sweep", "F", "frobenius_gap"], &rows)
}

/// Trace of a minimizing baseline; the `F` column holds its energy.
fn energy_trace(path: &Path, trace: &[f64]) -> Result<(), CliError> {
    let rows: Vec<Vec<String>> = trace
        .iter()
        .enumerate()
        .map(|(t, e)| vec![t.to_string(), e.to_string(), String::new()])
        .collect();
    io::write_csv(path, &["sweep", "F", "frobenius_gap"], &rows)
}

fn verify_done<R: Serialize>(global: &Global, report: &R, pass: bool, config: Value, inputs: &[&Path]) -> Result<Completed, CliError> {
    emit(global, &io::to_json(report))?;
    let mut done = Completed::new(config, inputs);
    done.failed = !pass;
    Ok(done)
}

/// Network of an image; a draw that lands only on dark pixels is retried
/// with another seed.
fn sampled_network(image: &cgw_core::data::Image, n: usize, knn: usize, seed: u64) -> Result<DiscreteMeasureNetwork, CliError> {
    let mut s = seed;
    for _ in 0..16 {
        match image_to_network(image, n, knn, s) {
            Err(cgw_core::Error::InsufficientMass) => s = s.wrapping_add(1 << 32),
            other => return Ok(other?),
        }
    }
    Err(cgw_core::Error::InsufficientMass.into())
}

fn execute(cli: &Cli) -> Result<Completed, CliError> {
    let g = &cli.global;
    match &cli.command {
        Command::Cgw { x, y } => {
            let cfg = solver_config(g)?;
            let (nx, ny) = (io::read_network(x)?, io::read_network(y)?);
            let (_, report) = cgw_solve(&nx, &ny, &cfg)?;
            if let Some(path) = &g.trace {
                solver_trace(path, &report)?;
            }
            let mut result = DistanceResult::from_report("cgw", &report);
            result.upper_distance = report.cgw_upper;
            emit(g, &io::to_json(&result))?;
            Ok(Completed::new(to_value(&cfg), &[x, y]))
        }
        Command::Ccot { x, y, matching } => {
            let cfg = solver_config(g)?;
            let (hx, hy) = (io::read_hypernetwork(x)?, io::read_hypernetwork(y)?);
            let (_, quad, report) = bca_solve(&hx, &hy, &cfg)?;
            if let Some(path) = &g.trace {
                solver_trace(path, &report)?;
            }
            if let Some(path) = matching {
                io::write_matrix(path, quad.samples.matching().view())?;
            }
            emit(g, &io::to_json(&DistanceResult::from_report("ccot", &report)))?;
            Ok(Completed::new(to_value(&cfg), &[x, y]))
        }
        Command::Gw2 { x, y } => {
            let cfg = baseline_config(g);
            let (nx, ny) = (io::read_network(x)?, io::read_network(y)?);
            let r = gw2_solve(&nx, &ny, &cfg)?;
            if let Some(path) = &g.trace {
                energy_trace(path, &r.trace)?;
            }
            let result = DistanceResult {
                method: "gw2",
                distance: r.value,
                objective: r.squared,
                iterations: r.iterations,
                converged: r.iterations < cfg.max_iters,
                frobenius_gap: None,
                equality_certified: None,
                quantization_uncertainty: 0.0,
                upper_distance: None,
                config: to_value(&cfg),
            };
            emit(g, &io::to_json(&result))?;
            Ok(Completed::new(to_value(&cfg), &[x, y]))
        }
        Command::Cot { x, y } => {
            let cfg = baseline_config(g);
            let (hx, hy) = (io::read_hypernetwork(x)?, io::read_hypernetwork(y)?);
            let r = cot_solve(&hx, &hy, &cfg)?;
            if let Some(path) = &g.trace {
                energy_trace(path, &r.trace)?;
            }
            let result = DistanceResult {
                method: "cot",
                distance: r.value,
                objective: r.squared,
                iterations: r.iterations,
                converged: r.iterations < cfg.max_iters,
                frobenius_gap: None,
                equality_certified: None,
                quantization_uncertainty: 0.0,
                upper_distance: None,
                config: to_value(&cfg),
            };
            emit(g, &io::to_json(&result))?;
            Ok(Completed::new(to_value(&cfg), &[x, y]))
        }
        Command::UotBound { x, y } => {
            let kernel = kernel(g)?;
            let mut cfg = UotConfig::default();
            if let Some(m) = g.max_iters {
                cfg.max_iters = m;
            }
            if let Some(t) = g.tol {
                cfg.rel_tol = t;
            }
            let (nx, ny) = (io::read_network(x)?, io::read_network(y)?);
            let nu_x = pushforward_value_distribution(&nx, cfg.coalesce_tol);
            let nu_y = pushforward_value_distribution(&ny, cfg.coalesce_tol);
            let r = uot_solve(&nu_x, &nu_y, &kernel, &cfg);
            if let Some(path) = &g.trace {
                let rows: Vec<Vec<String>> = r
                    .trace
                    .iter()
                    .enumerate()
                    .map(|(t, f)| vec![t.to_string(), f.to_string(), String::new()])
                    .collect();
                io::write_csv(path, &["sweep", "F", "frobenius_gap"], &rows)?;
            }
            let config = json!({ "kernel": kernel, "uot": cfg });
            let result = DistanceResult {
                method: "uot",
                distance: r.value,
                objective: r.objective,
                iterations: r.iterations,
                converged: r.iterations < cfg.max_iters,
                frobenius_gap: None,
                equality_certified: None,
                quantization_uncertainty: 0.0,
                upper_distance: Some(r.primal_value),
                config: config.clone(),
            };
            emit(g, &io::to_json(&result))?;
            Ok(Completed::new(config, &[x, y]))
        }
        Command::DeltaSweep { x, y, deltas, table } => {
            let cfg = solver_config(g)?;
            let (nx, ny) = (io::read_network(x)?, io::read_network(y)?);
            let sweep = delta_sweep(&nx, &ny, deltas, &cfg)?;
            if let Some(path) = table {
                let rows: Vec<Vec<String>> = sweep
                    .rows
                    .iter()
                    .map(|r| vec![r.delta.to_string(), r.cgw.to_string(), r.reference.to_string(), r.relative_gap.to_string()])
                    .collect();
                io::write_csv(path, &["delta", "cgw", "reference", "relative_gap"], &rows)?;
            }
            emit(g, &io::to_json(&sweep))?;
            Ok(Completed::new(json!({ "solver": cfg, "deltas": deltas }), &[x, y]))
        }
        Command::Verify { probe } => {
            let cfg = solver_config(g)?;
            match probe {
                Probe::Scaling { net, r, s } => {
                    let report = verify_scaling(&io::read_network(net)?, *r, *s, &cfg)?;
                    verify_done(g, &report, report.pass, json!({ "solver": cfg, "r": r, "s": s }), &[net])
                }
                Probe::Bounds { x, y } => {
                    let report = verify_bound_sandwich(&io::read_network(x)?, &io::read_network(y)?, &cfg)?;
                    verify_done(g, &report, report.pass, to_value(&cfg), &[x, y])
                }
                Probe::Robustness { net, eps, trials } => {
                    let report = robustness_probe(&io::read_network(net)?, *eps, *trials, &cfg)?;
                    verify_done(g, &report, report.pass, json!({ "solver": cfg, "eps": eps, "trials": trials }), &[net])
                }
                Probe::Weakiso { net } => {
                    let report = weak_iso_probe(&io::read_network(net)?, &cfg)?;
                    verify_done(g, &report, report.pass, to_value(&cfg), &[net])
                }
                Probe::Fragility { eps, f } => {
                    let report = gw_fragility_demo(*eps, *f)?;
                    verify_done(g, &report, report.pass, json!({ "eps": eps, "f": f }), &[])
                }
            }
        }
        Command::GenSquares { count, g: squares, side, size, format, out_dir } => {
            let images = gen_squares(*count, *squares, *side, *size, g.seed)?;
            let ext = match format {
                args::ImageFormat::Csv => "csv",
                args::ImageFormat::Pgm => "pgm",
            };
            let mut files = Vec::with_capacity(images.len());
            for (i, image) in images.iter().enumerate() {
                let name = format!("square_{i:04}.{ext}");
                io::write_image(&out_dir.join(&name), image)?;
                files.push(name);
            }
            let params = json!({
                "generator": "squares",
                "seed": g.seed,
                "count": count,
                "g": squares,
                "side": side,
                "image_size": size,
                "format": ext,
            });
            let dataset = json!({ "parameters": params, "files": files });
            io::write_text(&out_dir.join("dataset.json"), &io::to_json(&dataset))?;
            emit(g, &io::to_json(&dataset))?;
            let mut done = Completed::new(params, &[]);
            done.artifact_dir = Some(out_dir.clone());
            Ok(done)
        }
        Command::Img2net { image, n_sample, knn } => {
            let img = io::read_image(image)?;
            let n = match n_sample {
                args::SampleCount::All => img.len(),
                args::SampleCount::Count(n) => *n,
            };
            let net = image_to_network(&img, n, *knn, g.seed)?;
            emit(g, &io::to_json(&NetworkDocument::from(&net)))?;
            Ok(Completed::new(json!({ "n_sample": n, "knn": knn }), &[image]))
        }
        Command::GenAligned { cells, feat_x, feat_y, noise, downsample, out_dir } => {
            let data = gen_aligned_hypernetworks(*cells, *feat_x, *feat_y, *noise, *downsample, g.seed)?;
            io::write_text(&out_dir.join("x.json"), &io::to_json(&NetworkDocument::from(&data.hx)))?;
            io::write_text(&out_dir.join("y.json"), &io::to_json(&NetworkDocument::from(&data.hy)))?;
            io::write_pairs(&out_dir.join("cells.csv"), &data.cells)?;
            io::write_pairs(&out_dir.join("features.csv"), &data.features)?;
            let params = json!({
                "generator": "aligned",
                "seed": g.seed,
                "cells": cells,
                "feat_x": feat_x,
                "feat_y": feat_y,
                "noise": noise,
                "downsample_y": downsample,
            });
            let dataset = json!({
                "parameters": params,
                "files": ["x.json", "y.json", "cells.csv", "features.csv"],
                "cells_in_y": data.hy.n_samples(),
            });
            io::write_text(&out_dir.join("dataset.json"), &io::to_json(&dataset))?;
            emit(g, &io::to_json(&dataset))?;
            let mut done = Completed::new(params, &[]);
            done.artifact_dir = Some(out_dir.clone());
            Ok(done)
        }
        Command::Classify { features, k, label_rate, trials } => {
            let (header, rows) = io::read_table(features)?;
            let label_col = header
                .iter()
                .position(|h| h == "label")
                .ok_or_else(|| CliError::new("parse", format!("{}: no 'label' column", features.display())))?;
            let mut labels = Vec::with_capacity(rows.len());
            let mut values = Vec::with_capacity(rows.len());
            for row in &rows {
                let label = row[label_col];
                if !(label >= 0.0 && label.fract() == 0.0) {
                    return Err(CliError::new("parse", format!("label {label} is not a nonnegative integer")));
                }
                labels.push(label as usize);
                values.push(row.iter().enumerate().filter(|&(c, _)| c != label_col).map(|(_, v)| *v).collect());
            }
            let matrix = io::rows_to_matrix(&values, header.len() - 1)?;
            let (mean, std) = knn_classify(matrix.view(), &labels, *k, *label_rate, *trials, g.seed)?;
            let config = json!({ "k": k, "label_rate": label_rate, "trials": trials, "seed": g.seed });
            emit(g, &io::to_json(&json!({ "mean_error": mean, "std_error": std, "config": config })))?;
            Ok(Completed::new(config, &[features]))
        }
        Command::Foscttm { scores, pairs } => {
            let matrix = io::read_matrix(scores)?;
            let truth = io::read_pairs(pairs)?;
            let value = foscttm(matrix.view(), &truth)?;
            emit(g, &io::to_json(&json!({ "foscttm": value, "pairs": truth.len() })))?;
            Ok(Completed::new(json!({}), &[scores, pairs]))
        }
        Command::Bench { sizes, knn } => {
            if sizes.windows(2).any(|w| w[0] > w[1]) {
                return Err(CliError::new("invalid_config", "--sizes must be sorted ascending"));
            }
            let mut cfg = solver_config(g)?;
            if g.quantize != Some(args::Quantize::Off) {
                cfg.tensor_policy.force_mode = Some(TensorMode::Factored);
            }
            let images = gen_squares(2, 4, 5, 32, g.seed)?;
            let mut rows = Vec::with_capacity(sizes.len());
            for &n in sizes {
                let nx = sampled_network(&images[0], n, *knn, g.seed)?;
                let ny = sampled_network(&images[1], n, *knn, g.seed.wrapping_add(1))?;
                let start = Instant::now();
                let (distance, report) = cgw_solve(&nx, &ny, &cfg)?;
                let seconds = start.elapsed().as_secs_f64();
                eprintln!("n={n}: {} sweeps in {seconds:.3}s", report.iterations);
                rows.push(vec![n.to_string(), report.iterations.to_string(), seconds.to_string(), distance.to_string()]);
            }
            let mut w = csv::Writer::from_writer(Vec::new());
            let mut push = |r: &[String]| w.write_record(r).map_err(|e| CliError::new("io", e.to_string()));
            push(&["size".into(), "iters".into(), "seconds".into(), "distance".into()])?;
            for r in &rows {
                push(r)?;
            }
            let bytes = w.into_inner().map_err(|e| CliError::new("io", e.to_string()))?;
            emit(g, &String::from_utf8(bytes).expect("utf-8"))?;
            Ok(Completed::new(json!({ "solver": cfg, "sizes": sizes, "knn": knn }), &[]))
        }
    }
}
