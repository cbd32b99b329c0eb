//! `tinyad`: feature extraction, memory planning and auditing, scheduled
//! execution, anomaly detection, and latency simulation for small sequential
//! CNNs.
//!
//! Exit codes: 0 success, 1 usage error, 2 data/validation error, 3 budget
//! violation.

mod tensorio;

use clap::error::ErrorKind;
use clap::{Args, Parser, Subcommand};
use serde_json::json;
use std::path::PathBuf;
use tinyad_core::audit;
use tinyad_core::features::{build_feature_matrix, DomainSet, FeatureRecipe};
use tinyad_core::latsim::{self, FlashModel};
use tinyad_core::modelio::{self, Model};
use tinyad_core::pipeline::{self, InputRecipe};
use tinyad_core::scheduler::{execute, plan_patches, Arena, ExecMode};
use tinyad_core::Error;

#[derive(Parser)]
#[command(
    name = "tinyad",
    version,
    about = "Memory-budgeted CNN inference and time-series anomaly detection toolchain"
)]
struct Cli {
    /// Omit the timestamp header so repeated runs are byte-identical.
    #[arg(long, global = true)]
    no_timestamp: bool,
    /// Also write the report as JSON to this path.
    #[arg(long, global = true, value_name = "PATH")]
    json: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone)]
struct ModeArgs {
    /// Execution mode: naive | inplace | patch | tinyad.
    #[arg(long, default_value = "naive")]
    mode: String,
    /// Patch count m for the patch/tinyad modes.
    #[arg(long, default_value_t = 3)]
    patches: usize,
}

impl ModeArgs {
    fn resolve(&self) -> Result<ExecMode, Error> {
        match self.mode.as_str() {
            "naive" => Ok(ExecMode::Naive),
            "inplace" => Ok(ExecMode::InPlace),
            "patch" => Ok(ExecMode::PatchOnly { patches: self.patches }),
            "tinyad" => Ok(ExecMode::TinyAd { patches: self.patches }),
            other => Err(Error::Plan(format!(
                "unknown mode '{other}' (expected naive|inplace|patch|tinyad)"
            ))),
        }
    }
}

#[derive(Args, Clone)]
struct FeatureGeometry {
    /// History window length L.
    #[arg(long)]
    window: usize,
    /// Sub-window length for feature columns.
    #[arg(long)]
    subwindow: usize,
    /// Sub-window stride.
    #[arg(long, default_value_t = 1)]
    stride: usize,
    /// Feature domains: time | frequency | wavelet | tri.
    #[arg(long, default_value = "tri")]
    domains: String,
}

impl FeatureGeometry {
    fn recipe(&self) -> Result<FeatureRecipe, Error> {
        let recipe = FeatureRecipe {
            window: self.window,
            subwindow: self.subwindow,
            stride: self.stride,
            domains: DomainSet::parse(&self.domains)?,
        };
        recipe.validate()?;
        Ok(recipe)
    }
}

#[derive(Subcommand)]
enum Command {
    /// Extract a feature matrix from a labeled series window.
    Features {
        /// Input CSV with header timestamp,value,label.
        #[arg(long)]
        data: PathBuf,
        #[command(flatten)]
        geometry: FeatureGeometry,
        /// Timestep the window ends at (exclusive); defaults to the series
        /// end.
        #[arg(long)]
        at: Option<usize>,
        /// Write the matrix as CSV (feature rows, sub-window columns).
        #[arg(long, value_name = "PATH")]
        output_csv: Option<PathBuf>,
        /// Write the matrix as a model-input tensor file.
        #[arg(long, value_name = "PATH")]
        output_tensor: Option<PathBuf>,
    },
    /// Show the patch plan and per-mode memory plans for a model.
    Plan {
        #[arg(long)]
        model: PathBuf,
        #[arg(long, default_value_t = 3)]
        patches: usize,
    },
    /// Analytic audit: MACs, parameters, per-layer and peak memory.
    Audit {
        #[arg(long)]
        model: PathBuf,
        #[command(flatten)]
        mode: ModeArgs,
        /// SRAM budget in bytes; exceeding it exits with code 3.
        #[arg(long)]
        budget: Option<u64>,
    },
    /// Execute a model on an input tensor and report measured peak and MACs.
    Run {
        #[arg(long)]
        model: PathBuf,
        /// Input tensor file (see `features --output-tensor`).
        #[arg(long)]
        input: PathBuf,
        #[command(flatten)]
        mode: ModeArgs,
        /// SRAM budget in bytes enforced by the arena; exceeding it exits 3.
        #[arg(long)]
        budget: Option<u64>,
        /// Write the output tensor here.
        #[arg(long, value_name = "PATH")]
        output: Option<PathBuf>,
    },
    /// Detect anomalies: score the series, pick the threshold on
    /// validation, evaluate on test.
    Detect {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        data: PathBuf,
        #[command(flatten)]
        mode: ModeArgs,
        /// Raw-input window length; read from the model shape when omitted.
        #[arg(long)]
        window: Option<usize>,
        /// Use a tri-domain feature matrix input with this sub-window.
        #[arg(long)]
        subwindow: Option<usize>,
        /// Sub-window stride for feature input.
        #[arg(long, default_value_t = 1)]
        stride: usize,
        /// Score with squared prediction error instead of absolute.
        #[arg(long)]
        squared: bool,
        /// Dump per-timestep scores as CSV (t,score).
        #[arg(long, value_name = "PATH")]
        scores_out: Option<PathBuf>,
    },
    /// Evaluate previously dumped scores against a labeled series.
    Evaluate {
        /// Scores CSV produced by `detect --scores-out`.
        #[arg(long)]
        scores: PathBuf,
        #[arg(long)]
        data: PathBuf,
        /// Fixed threshold; when omitted the threshold is selected on the
        /// validation segment.
        #[arg(long)]
        threshold: Option<f64>,
    },
    /// Simulate single- and multi-thread inference latency.
    Simulate {
        #[arg(long)]
        model: PathBuf,
        #[command(flatten)]
        mode: ModeArgs,
        /// Re-read trunk parameters from flash for every patch.
        #[arg(long)]
        reload_per_patch: bool,
        /// Flash page size in bytes.
        #[arg(long, default_value_t = 8192)]
        page_size: u64,
        /// Page read latency in microseconds.
        #[arg(long, default_value_t = 25.0)]
        t_read_us: f64,
        /// Decode cost per serialized byte in microseconds.
        #[arg(long, default_value_t = 2.5)]
        decode_us: f64,
        /// Compute cost per MAC in microseconds.
        #[arg(long, default_value_t = 0.016)]
        mac_us: f64,
        /// In-place copy cost per byte in microseconds.
        #[arg(long, default_value_t = 0.002)]
        copy_us: f64,
        /// Write per-layer Gantt rows as CSV.
        #[arg(long, value_name = "PATH")]
        gantt: Option<PathBuf>,
    },
}

struct Report {
    text: String,
    json: serde_json::Value,
    exit: i32,
}

fn main() {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => 0,
                _ => 1,
            };
            let _ = e.print();
            std::process::exit(code);
        }
    };
    let no_timestamp = cli.no_timestamp;
    let json_path = cli.json.clone();
    match dispatch(cli) {
        Ok(mut report) => {
            if !no_timestamp {
                let now = std::time::SystemTime::now()
                    .duration_since(std::time::UNIX_EPOCH)
                    .map(|d| d.as_secs())
                    .unwrap_or(0);
                report.text = format!("# generated unix:{now}\n{}", report.text);
                if let serde_json::Value::Object(map) = &mut report.json {
                    map.insert("generated_unix".into(), json!(now));
                }
            }
            print!("{}", report.text);
            if let Some(path) = json_path {
                if let Err(e) = std::fs::write(&path, report.json.to_string()) {
                    eprintln!("error: cannot write {}: {e}", path.display());
                    std::process::exit(2);
                }
            }
            std::process::exit(report.exit);
        }
        Err(e) => {
            eprintln!("error: {e}");
            let code = match e {
                Error::Budget { .. } => 3,
                _ => 2,
            };
            std::process::exit(code);
        }
    }
}

fn dispatch(cli: Cli) -> Result<Report, Error> {
    match cli.command {
        Command::Features { data, geometry, at, output_csv, output_tensor } => {
            cmd_features(data, geometry, at, output_csv, output_tensor)
        }
        Command::Plan { model, patches } => cmd_plan(model, patches),
        Command::Audit { model, mode, budget } => cmd_audit(model, mode, budget),
        Command::Run { model, input, mode, budget, output } => {
            cmd_run(model, input, mode, budget, output)
        }
        Command::Detect { model, data, mode, window, subwindow, stride, squared, scores_out } => {
            cmd_detect(model, data, mode, window, subwindow, stride, squared, scores_out)
        }
        Command::Evaluate { scores, data, threshold } => cmd_evaluate(scores, data, threshold),
        Command::Simulate {
            model,
            mode,
            reload_per_patch,
            page_size,
            t_read_us,
            decode_us,
            mac_us,
            copy_us,
            gantt,
        } => {
            let flash = FlashModel {
                page_size_bytes: page_size,
                t_read_us,
                decode_us_per_byte: decode_us,
                mac_us,
                copy_us_per_byte: copy_us,
            };
            cmd_simulate(model, mode, reload_per_patch, flash, gantt)
        }
    }
}

fn kb(bytes: u64) -> String {
    format!("{:.1}", bytes as f64 / 1000.0)
}

fn load_model(path: &PathBuf) -> Result<Model, Error> {
    modelio::parse_model(path)
}

/// Fixed-width text table.
fn table(headers: &[&str], rows: &[Vec<String>]) -> String {
    let mut widths: Vec<usize> = headers.iter().map(|h| h.len()).collect();
    for row in rows {
        for (i, cell) in row.iter().enumerate() {
            widths[i] = widths[i].max(cell.len());
        }
    }
    let mut out = String::new();
    let fmt_row = |cells: Vec<String>, widths: &[usize]| {
        let mut line = String::new();
        for (i, cell) in cells.iter().enumerate() {
            if i > 0 {
                line.push_str("  ");
            }
            line.push_str(&format!("{:>width$}", cell, width = widths[i]));
        }
        line.push('\n');
        line
    };
    out.push_str(&fmt_row(headers.iter().map(|h| h.to_string()).collect(), &widths));
    for row in rows {
        out.push_str(&fmt_row(row.clone(), &widths));
    }
    out
}

fn cmd_features(
    data: PathBuf,
    geometry: FeatureGeometry,
    at: Option<usize>,
    output_csv: Option<PathBuf>,
    output_tensor: Option<PathBuf>,
) -> Result<Report, Error> {
    let recipe = geometry.recipe()?;
    let ds = pipeline::load_csv(&data)?;
    let end = at.unwrap_or(ds.len());
    if end > ds.len() || end < recipe.window {
        return Err(Error::Window(format!(
            "window [{}, {end}) does not fit the series of {} samples",
            end as i64 - recipe.window as i64,
            ds.len()
        )));
    }
    let start = end - recipe.window;
    let matrix = build_feature_matrix(&ds.values[start..end], &recipe)?;
    let names = recipe.domains.feature_names();
    let cols = recipe.columns();

    let mut csv = format!("# window {start}..{end}\nfeature");
    for c in 0..cols {
        csv.push_str(&format!(",c{c}"));
    }
    csv.push('\n');
    for (r, name) in names.iter().enumerate() {
        csv.push_str(name);
        for c in 0..cols {
            csv.push_str(&format!(",{}", matrix.tensor.at(0, &[r, c])));
        }
        csv.push('\n');
    }
    if let Some(path) = &output_csv {
        std::fs::write(path, &csv)?;
    }
    if let Some(path) = &output_tensor {
        tensorio::write_tensor(path, &matrix.tensor)?;
    }

    let text = format!(
        "feature matrix: {} features x {} columns from window [{start}, {end})\n\
         guard flags set on {}/{} columns\n{}",
        names.len(),
        cols,
        matrix.guard_flags.iter().filter(|&&g| g).count(),
        cols,
        csv
    );
    let json = json!({
        "window": [start, end],
        "rows": names.len(),
        "columns": cols,
        "feature_names": names,
        "guard_flags": matrix.guard_flags,
        "matrix": matrix.tensor.data(),
    });
    Ok(Report { text, json, exit: 0 })
}

fn memory_plan_rows(plan: &audit::MemoryPlan) -> Vec<Vec<String>> {
    plan.layers
        .iter()
        .map(|l| {
            vec![
                l.index.to_string(),
                l.kind.clone(),
                l.macs.to_string(),
                (l.weight_count + l.bias_count).to_string(),
                l.live_bytes.to_string(),
                if l.inplace { "yes".into() } else { "".into() },
            ]
        })
        .collect()
}

fn cmd_plan(model_path: PathBuf, patches: usize) -> Result<Report, Error> {
    let model = load_model(&model_path)?;
    let plan = plan_patches(&model, patches)?;
    let mut text = format!(
        "patch plan: m={patches}, split axis {}, trunk layers 0..{}\n",
        plan.split_axis, plan.trunk_len
    );
    for (p, range) in plan.output_ranges.iter().enumerate() {
        text.push_str(&format!(
            "patch {p}: output [{}, {}), overlap {} elements\n",
            range.start, range.end, plan.overlap_elems[p]
        ));
        for (i, region) in plan.layer_inputs[p].iter().enumerate() {
            let spans: Vec<String> =
                region.ranges.iter().map(|r| format!("[{}, {})", r.start, r.end)).collect();
            text.push_str(&format!("  layer {i} input: {}\n", spans.join(" x ")));
        }
    }

    let modes = [
        ExecMode::Naive,
        ExecMode::InPlace,
        ExecMode::PatchOnly { patches },
        ExecMode::TinyAd { patches },
    ];
    let mut rows = Vec::new();
    let mut mode_json = Vec::new();
    for mode in modes {
        let mp = audit::activation_memory(&model, mode)?;
        rows.push(vec![
            mode.to_string(),
            mp.peak_bytes.to_string(),
            kb(mp.peak_bytes),
            mp.working_peak_bytes.to_string(),
            mp.dominant_layer.map(|d| d.to_string()).unwrap_or_else(|| "-".into()),
            mp.total_macs.to_string(),
        ]);
        mode_json.push(serde_json::to_value(&mp).expect("plan serializes"));
    }
    text.push_str("\nmemory plans (bytes; kB is decimal):\n");
    text.push_str(&table(
        &["mode", "peak_bytes", "peak_kB", "working_peak_bytes", "dominant_layer", "macs"],
        &rows,
    ));

    let json = json!({
        "patches": patches,
        "split_axis": plan.split_axis,
        "trunk_len": plan.trunk_len,
        "output_ranges": plan.output_ranges.iter().map(|r| [r.start, r.end]).collect::<Vec<_>>(),
        "layer_inputs": plan
            .layer_inputs
            .iter()
            .map(|per_layer| {
                per_layer
                    .iter()
                    .map(|region| {
                        region.ranges.iter().map(|r| [r.start, r.end]).collect::<Vec<_>>()
                    })
                    .collect::<Vec<_>>()
            })
            .collect::<Vec<_>>(),
        "overlap_elems": plan.overlap_elems,
        "memory_plans": mode_json,
    });
    Ok(Report { text, json, exit: 0 })
}

fn cmd_audit(model_path: PathBuf, mode: ModeArgs, budget: Option<u64>) -> Result<Report, Error> {
    let model = load_model(&model_path)?;
    let mode = mode.resolve()?;
    let plan = audit::activation_memory(&model, mode)?;

    let mut text = format!("audit: mode {mode} (bytes; kB is decimal 1000)\n");
    text.push_str(&table(
        &["layer", "kind", "macs", "params", "live_bytes", "inplace"],
        &memory_plan_rows(&plan),
    ));
    let budget_state = match budget {
        Some(b) if plan.peak_bytes > b => "FAIL",
        Some(_) => "pass",
        None => "-",
    };
    text.push_str("\nsummary (kB is decimal):\n");
    text.push_str(&table(
        &["F1", "MACs(M)", "ModelSize(kB)", "PeakMem(kB)", "budget"],
        &[vec![
            "-".into(),
            format!("{:.2}", plan.total_macs as f64 / 1e6),
            kb(plan.model_bytes()),
            kb(plan.peak_bytes),
            budget_state.into(),
        ]],
    ));
    if let Some(d) = plan.dominant_layer {
        text.push_str(&format!(
            "dominant layer: {d} ({}, {} live bytes)\n",
            plan.layers[d].kind, plan.layers[d].live_bytes
        ));
    }
    text.push_str(&format!(
        "formula view (activations + kernels, no holding): {:.1} elements\n",
        plan.formula_peak_elems
    ));

    let exit = match budget {
        Some(b) if plan.peak_bytes > b => {
            text.push_str(&format!(
                "BUDGET EXCEEDED: peak {} bytes > budget {b} bytes\n",
                plan.peak_bytes
            ));
            3
        }
        _ => 0,
    };
    let json = json!({
        "budget": budget,
        "budget_ok": exit == 0,
        "plan": serde_json::to_value(&plan).expect("plan serializes"),
    });
    Ok(Report { text, json, exit })
}

fn cmd_run(
    model_path: PathBuf,
    input_path: PathBuf,
    mode: ModeArgs,
    budget: Option<u64>,
    output: Option<PathBuf>,
) -> Result<Report, Error> {
    let model = load_model(&model_path)?;
    let input = tensorio::read_tensor(&input_path)?;
    let mode = mode.resolve()?;
    let mut arena = match budget {
        Some(b) => Arena::with_budget(b),
        None => Arena::new(),
    };
    let report = execute(&model, &input, mode, &mut arena)?;

    let preview: Vec<f32> = report.output.data().iter().copied().take(8).collect();
    let text = format!(
        "run: mode {mode}\noutput shape {} ({} elements), first values {:?}\n\
         measured peak: {} bytes ({} kB decimal)\nworking peak: {} bytes\nmacs: {}\n\
         param slot peak: {} bytes\nin-place layers: {:?}\n",
        report.output.shape(),
        report.output.shape().element_count(),
        preview,
        report.peak_bytes,
        kb(report.peak_bytes),
        report.working_peak_bytes,
        report.macs,
        report.param_slot_peak,
        report.inplace_layers,
    );
    if let Some(path) = &output {
        tensorio::write_tensor(path, &report.output)?;
    }
    let json = json!({
        "mode": mode,
        "output_shape": {"channels": report.output.shape().channels, "spatial": report.output.shape().spatial},
        "peak_bytes": report.peak_bytes,
        "working_peak_bytes": report.working_peak_bytes,
        "macs": report.macs,
        "param_slot_peak": report.param_slot_peak,
        "inplace_layers": report.inplace_layers,
        "output": report.output.data(),
    });
    Ok(Report { text, json, exit: 0 })
}

fn detect_threads() -> usize {
    let available = std::thread::available_parallelism().map(|n| n.get()).unwrap_or(1);
    match std::env::var("TINYAD_THREADS").ok().and_then(|v| v.parse::<usize>().ok()) {
        Some(cap) => available.min(cap.max(1)),
        None => available,
    }
}

#[allow(clippy::too_many_arguments)]
fn cmd_detect(
    model_path: PathBuf,
    data: PathBuf,
    mode: ModeArgs,
    window: Option<usize>,
    subwindow: Option<usize>,
    stride: usize,
    squared: bool,
    scores_out: Option<PathBuf>,
) -> Result<Report, Error> {
    let model = load_model(&model_path)?;
    let ds = pipeline::load_csv(&data)?;
    let mode = mode.resolve()?;
    let recipe = match subwindow {
        Some(sub) => {
            let window = window.ok_or_else(|| {
                Error::Window("feature input needs an explicit --window".into())
            })?;
            let recipe =
                FeatureRecipe { window, subwindow: sub, stride, domains: DomainSet::TRI };
            recipe.validate()?;
            InputRecipe::Features(recipe)
        }
        None => {
            let window = match window {
                Some(w) => w,
                None => {
                    let shape = model.input_shape();
                    if shape.rank() != 1 || shape.channels != 1 {
                        return Err(Error::Shape(format!(
                            "cannot infer a raw window from model input {shape}; pass --window/--subwindow"
                        )));
                    }
                    shape.spatial[0]
                }
            };
            InputRecipe::Raw { window }
        }
    };
    let threads = detect_threads();
    let report = pipeline::detect(&model, &ds, &recipe, mode, squared, threads)?;

    if let Some(path) = &scores_out {
        let mut csv = String::from("t,score\n");
        for (i, s) in report.scores.scores.iter().enumerate() {
            csv.push_str(&format!("{},{s}\n", report.scores.window + i));
        }
        std::fs::write(path, csv)?;
    }
    let text = format!(
        "detect: mode {mode}, window {}, {} scored timesteps, {} workers\n\
         threshold: {} (validation F1 {:.4}{})\n\
         test: precision {:.4} recall {:.4} F1 {:.4} (tp {} fp {} fn {} tn {})\n",
        report.window,
        report.scores.scores.len(),
        threads,
        report.choice.threshold,
        report.choice.validation_f1,
        if report.choice.degenerate { ", degenerate: no validation anomalies" } else { "" },
        report.test.precision,
        report.test.recall,
        report.test.f1,
        report.test.true_positives,
        report.test.false_positives,
        report.test.false_negatives,
        report.test.true_negatives,
    );
    let json = json!({
        "mode": mode,
        "window": report.window,
        "threshold": report.choice.threshold,
        "validation_f1": report.choice.validation_f1,
        "degenerate_threshold": report.choice.degenerate,
        "test": {
            "precision": report.test.precision,
            "recall": report.test.recall,
            "f1": report.test.f1,
            "true_positives": report.test.true_positives,
            "false_positives": report.test.false_positives,
            "false_negatives": report.test.false_negatives,
            "true_negatives": report.test.true_negatives,
        },
    });
    Ok(Report { text, json, exit: 0 })
}

fn cmd_evaluate(
    scores_path: PathBuf,
    data: PathBuf,
    threshold: Option<f64>,
) -> Result<Report, Error> {
    let ds = pipeline::load_csv(&data)?;
    let text = std::fs::read_to_string(&scores_path)?;
    let mut lines = text.lines();
    match lines.next() {
        Some("t,score") => {}
        other => {
            return Err(Error::Ingest {
                row: 1,
                message: format!("expected header 't,score', got {other:?}"),
            })
        }
    }
    let mut first_t: Option<usize> = None;
    let mut scores = Vec::new();
    for (i, line) in lines.enumerate() {
        let row = i + 2;
        if line.trim().is_empty() {
            continue;
        }
        let (t_str, s_str) = line
            .split_once(',')
            .ok_or_else(|| Error::Ingest { row, message: "expected t,score".into() })?;
        let t: usize = t_str
            .trim()
            .parse()
            .map_err(|_| Error::Ingest { row, message: format!("bad t '{t_str}'") })?;
        let s: f64 = s_str
            .trim()
            .parse()
            .map_err(|_| Error::Ingest { row, message: format!("bad score '{s_str}'") })?;
        if first_t.is_none() {
            first_t = Some(t);
        }
        scores.push(s);
    }
    let window = first_t.ok_or(Error::Ingest { row: 2, message: "no score rows".into() })?;
    if window + scores.len() != ds.len() {
        return Err(Error::Ingest {
            row: 2,
            message: format!(
                "{} scores starting at t={window} do not cover the {}-sample series",
                scores.len(),
                ds.len()
            ),
        });
    }
    let series = pipeline::ScoreSeries { window, scores };
    let (val_scores, val_labels) = series.segment(&ds.labels, ds.train_end, ds.val_end);
    let (tau, val_f1, degenerate) = match threshold {
        Some(t) => (t, f64::NAN, false),
        None => {
            let choice = pipeline::select_threshold(&val_scores, &val_labels)?;
            (choice.threshold, choice.validation_f1, choice.degenerate)
        }
    };
    let (test_scores, test_labels) = series.segment(&ds.labels, ds.val_end, ds.len());
    let result = pipeline::evaluate(&test_scores, &test_labels, tau);

    let text = format!(
        "evaluate: threshold {tau}{}\n\
         test: precision {:.4} recall {:.4} F1 {:.4} (tp {} fp {} fn {} tn {})\n",
        if threshold.is_none() {
            format!(" selected on validation (F1 {val_f1:.4}{})",
                if degenerate { ", degenerate" } else { "" })
        } else {
            String::new()
        },
        result.precision,
        result.recall,
        result.f1,
        result.true_positives,
        result.false_positives,
        result.false_negatives,
        result.true_negatives,
    );
    let json = json!({
        "threshold": tau,
        "test": {
            "precision": result.precision,
            "recall": result.recall,
            "f1": result.f1,
            "true_positives": result.true_positives,
            "false_positives": result.false_positives,
            "false_negatives": result.false_negatives,
            "true_negatives": result.true_negatives,
        },
    });
    Ok(Report { text, json, exit: 0 })
}

fn cmd_simulate(
    model_path: PathBuf,
    mode: ModeArgs,
    reload_per_patch: bool,
    flash: FlashModel,
    gantt: Option<PathBuf>,
) -> Result<Report, Error> {
    let model = load_model(&model_path)?;
    let mode = mode.resolve()?;
    // exact serialized parameter bytes from the layer stream
    let param_bytes: Vec<u64> = modelio::stream_layers(&model_path)?
        .map(|item| item.map(|(_, bytes)| bytes))
        .collect::<Result<_, _>>()?;
    let profile = latsim::profile(&model, &param_bytes, &flash, mode, reload_per_patch)?;

    let rows: Vec<Vec<String>> = profile
        .layers
        .iter()
        .map(|l| {
            vec![
                l.layer.to_string(),
                l.kind.clone(),
                format!("{:.1}", l.prep_us),
                format!("{:.1}", l.fwd_us),
            ]
        })
        .collect();
    let mut text = format!(
        "latency simulation: mode {mode}, parameters {} (times are simulated with calibrated per-unit costs)\n",
        if reload_per_patch { "reloaded per patch" } else { "resident per layer" }
    );
    text.push_str(&table(&["layer", "kind", "prep_us", "fwd_us"], &rows));
    text.push_str(&format!(
        "\nsingle-thread total: {:.2} ms\nmulti-thread total:  {:.2} ms ({:.1}% saved)\n",
        profile.single_total_us / 1000.0,
        profile.multi_total_us / 1000.0,
        (1.0 - profile.multi_total_us / profile.single_total_us) * 100.0
    ));

    if let Some(path) = &gantt {
        let mut csv = String::from("threads,layer,resource,start_us,end_us\n");
        for (threads, timeline) in [(1, &profile.single), (2, &profile.multi)] {
            for e in &timeline.entries {
                csv.push_str(&format!(
                    "{threads},{},{},{:.3},{:.3}\n",
                    e.layer,
                    match e.resource {
                        latsim::Resource::Load => "load",
                        latsim::Resource::Compute => "compute",
                    },
                    e.start_us,
                    e.end_us
                ));
            }
        }
        std::fs::write(path, csv)?;
    }
    let json = serde_json::to_value(&profile).expect("profile serializes");
    Ok(Report { text, json, exit: 0 })
}
