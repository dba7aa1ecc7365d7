use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use log::{error, info, warn};
use serde::Serialize;

use respigate::eval::{default_roi, format_table, roi_reference, signal_agreement, OddSliceReport};
use respigate::gating::{segment_heartbeats, select_beats, stack_iqr, Convention, GateOptions};
use respigate::io::{self, GateRecord};
use respigate::manifest::RunManifest;
use respigate::preprocess::FilterSpec;
use respigate::{
    correct_signs_with, generate_phantom, odd_slice_experiment, AgreementReport, CorrectionOptions, Error,
    PhantomConfig, Result, Roi,
};

/// Respiratory self-gating signals from multi-slice real-time cine.
#[derive(Parser)]
#[command(name = "respigate", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Render a synthetic breathing phantom with ground truth and triggers.
    Phantom(PhantomArgs),
    /// Extract sign-corrected respiratory signals from a slice stack.
    Extract(ExtractArgs),
    /// Correlate extracted signals with phantom ground truth.
    Evaluate(EvaluateArgs),
    /// Pick one end-expiration and one end-inspiration heartbeat per slice.
    Gate(GateArgs),
}

#[derive(Args, Serialize)]
struct PhantomArgs {
    /// JSON phantom configuration; missing keys take defaults.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Output directory.
    #[arg(long)]
    out: PathBuf,
    /// Overrides the configuration's seed.
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Args, Serialize)]
struct ExtractArgs {
    /// Stack directory holding stack.json and one NPY tensor per slice.
    #[arg(long = "in")]
    input: PathBuf,
    #[arg(long)]
    out: PathBuf,
    /// Low-pass cutoff (Hz).
    #[arg(long, default_value_t = 0.8)]
    cutoff_hz: f64,
    /// Width of the filter transition band (Hz).
    #[arg(long, default_value_t = 0.4)]
    transition_width_hz: f64,
    /// Leading eigenvectors to compute per slice (at least 2).
    #[arg(long, default_value_t = 2)]
    k: usize,
    /// Neighbour correlations below this magnitude are reported as weak.
    #[arg(long, default_value_t = 0.2)]
    weak_link_threshold: f64,
    /// Also write eigenvalues and temporal modes per slice.
    #[arg(long)]
    dump_eigen: bool,
}

#[derive(Args, Serialize)]
struct EvaluateArgs {
    /// Directory written by `extract`.
    #[arg(long = "in")]
    input: PathBuf,
    /// Phantom directory holding ground_truth.json.
    #[arg(long)]
    gt: PathBuf,
    /// Report JSON path.
    #[arg(long)]
    out: PathBuf,
    /// Reference ROI as row,col,rows,cols (0-based). Without it, the liver
    /// region below the deepest diaphragm is used.
    #[arg(long, value_parser = parse_roi)]
    roi: Option<Roi>,
    /// Phantom stack directory; enables the odd-slice comparison.
    #[arg(long)]
    stack: Option<PathBuf>,
}

#[derive(Clone, Copy, ValueEnum, Serialize)]
#[serde(rename_all = "kebab-case")]
enum ConventionArg {
    MaxIsEe,
    MaxIsEi,
}

#[derive(Args, Serialize)]
struct GateArgs {
    /// Directory written by `extract`.
    #[arg(long = "in")]
    input: PathBuf,
    /// CSV with slice_index,frame_index rows.
    #[arg(long)]
    triggers: PathBuf,
    #[arg(long)]
    out: PathBuf,
    #[arg(long, value_enum, default_value = "max-is-ee")]
    convention: ConventionArg,
    /// Accept beats regardless of their in-beat signal range.
    #[arg(long)]
    no_stability: bool,
}

fn parse_roi(s: &str) -> std::result::Result<Roi, String> {
    let parts: Vec<usize> = s
        .split(',')
        .map(|p| p.trim().parse().map_err(|_| format!("bad ROI component {p:?}")))
        .collect::<std::result::Result<_, _>>()?;
    match parts[..] {
        [row, col, rows, cols] => Ok(Roi { row, col, rows, cols }),
        _ => Err("ROI needs four comma-separated integers".into()),
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::new().filter_or("RESPIGATE_LOG", "warn")).init();
    let cli = Cli::parse();
    let code = match &cli.command {
        Command::Phantom(a) => run("phantom", a, &a.out.join(io::MANIFEST), |m| phantom(a, m)),
        Command::Extract(a) => run("extract", a, &a.out.join(io::MANIFEST), |m| extract(a, m)),
        Command::Evaluate(a) => run("evaluate", a, &a.out.with_extension("manifest.json"), |m| evaluate(a, m)),
        Command::Gate(a) => run("gate", a, &a.out.join(io::MANIFEST), |m| gate(a, m)),
    };
    ExitCode::from(code as u8)
}

/// Runs one command and always writes its manifest.
fn run<A: Serialize>(
    name: &str,
    args: &A,
    manifest_path: &Path,
    body: impl FnOnce(&mut RunManifest) -> Result<()>,
) -> i32 {
    let mut manifest = RunManifest::new(name, args);
    let outcome = body(&mut manifest);
    let mut code = 0;
    if let Err(e) = &outcome {
        error!("{e}");
        manifest.fail(e);
        code = e.exit_code();
    }
    if let Some(parent) = manifest_path.parent().filter(|p| !p.as_os_str().is_empty()) {
        let _ = fs::create_dir_all(parent);
    }
    if let Err(e) = manifest.write(manifest_path) {
        error!("could not write manifest: {e}");
        if code == 0 {
            code = e.exit_code();
        }
    }
    code
}

fn phantom(a: &PhantomArgs, m: &mut RunManifest) -> Result<()> {
    let mut cfg: PhantomConfig = match &a.config {
        Some(path) => {
            m.add_input(path)?;
            io::read_json(path)?
        }
        None => PhantomConfig::default(),
    };
    if let Some(seed) = a.seed {
        cfg.seed = seed;
    }
    m.seed = Some(cfg.seed);
    m.config = serde_json::json!({ "args": m.config, "phantom": cfg });
    let (stack, gt) = m.time("render", |_| generate_phantom(&cfg))?;
    m.time("write", |m| {
        io::write_stack(&stack, &a.out)?;
        io::write_ground_truth(&gt, &a.out)?;
        let triggers = stack
            .slices()
            .iter()
            .zip(&gt.trigger_frames)
            .map(|(s, t)| (s.slice_index(), t.clone()))
            .collect();
        io::write_triggers(&triggers, &a.out.join(io::TRIGGERS))?;
        for s in stack.slices() {
            m.add_output(Path::new(&io::slice_file_name(s.slice_index())));
        }
        for f in [io::STACK_METADATA, io::GROUND_TRUTH, io::TRIGGERS] {
            m.add_output(Path::new(f));
        }
        Ok(())
    })?;
    info!("wrote {} slices to {}", stack.len(), a.out.display());
    Ok(())
}

fn record_stack_inputs(dir: &Path, m: &mut RunManifest) -> Result<()> {
    let meta = io::read_stack_metadata(dir)?;
    m.add_input(&dir.join(io::STACK_METADATA))?;
    for e in &meta.slices {
        let path = dir.join(&e.file);
        if path.is_file() {
            m.add_input(&path)?;
        }
    }
    Ok(())
}

fn extract(a: &ExtractArgs, m: &mut RunManifest) -> Result<()> {
    let stack = m.time("read", |m| {
        record_stack_inputs(&a.input, m)?;
        io::read_stack(&a.input)
    })?;
    let opts = CorrectionOptions {
        filter: FilterSpec {
            cutoff_hz: a.cutoff_hz,
            transition_width_hz: a.transition_width_hz,
            ..FilterSpec::default()
        },
        k: a.k,
        weak_link_threshold: a.weak_link_threshold,
    };
    let corr = m.time("correct_signs", |_| correct_signs_with(&stack, &opts))?;
    m.warn_all(corr.report.warnings.iter().cloned());
    let dt = stack.slices()[0].frame_interval();
    m.time("write", |m| {
        for p in io::write_signals(&corr.signals, &corr.report, dt, &a.out)? {
            m.add_output(&p);
        }
        if a.dump_eigen {
            for p in io::write_eigen_dump(&corr.modes, &a.out.join("eigen"))? {
                m.add_output(&p);
            }
        }
        Ok(())
    })?;
    info!(
        "slice {} decided the global sign ({:+})",
        corr.report.chosen_slice, corr.report.applied_global_sign
    );
    Ok(())
}

#[derive(Serialize)]
struct EvaluationReport {
    reference: String,
    agreement: AgreementReport,
    odd_slice: Option<OddSliceReport>,
}

fn evaluate(a: &EvaluateArgs, m: &mut RunManifest) -> Result<()> {
    let (set, gt) = m.time("read", |m| {
        m.add_input(&a.input.join(io::SIGN_REPORT))?;
        m.add_input(&a.gt.join(io::GROUND_TRUTH))?;
        Ok::<_, Error>((io::read_signals(&a.input)?, io::read_ground_truth(&a.gt)?))
    })?;
    if set.signals.len() != gt.resp_trace.len() {
        return Err(Error::DimensionMismatch(format!(
            "{} signals for {} ground-truth slices",
            set.signals.len(),
            gt.resp_trace.len()
        )));
    }
    let roi = a.roi.unwrap_or_else(|| default_roi(&gt));
    let references = (1..=set.signals.len())
        .map(|j| roi_reference(Some(&gt), &roi, j))
        .collect::<Result<Vec<_>>>()?;
    let agreement = m.time("agreement", |_| signal_agreement(&set.signals, &references))?;
    let odd_slice = match &a.stack {
        Some(dir) => Some(m.time("odd_slices", |m| {
            record_stack_inputs(dir, m)?;
            let stack = io::read_stack(dir)?;
            odd_slice_experiment(&stack, &gt, &CorrectionOptions::default())
        })?),
        None => None,
    };
    if !agreement.all_positive {
        let msg = "at least one slice correlates negatively with the reference";
        warn!("{msg}");
        m.warn(msg);
    }

    let mut rows = vec![("extracted".to_string(), &agreement)];
    if let Some(o) = &odd_slice {
        rows.push(("odd slices".to_string(), &o.odd));
    }
    print!("{}", format_table(&rows));

    let report = EvaluationReport {
        reference: roi.to_string(),
        agreement,
        odd_slice,
    };
    if let Some(parent) = a.out.parent().filter(|p| !p.as_os_str().is_empty()) {
        fs::create_dir_all(parent).map_err(|e| Error::IoFailure {
            path: parent.to_path_buf(),
            source: e,
        })?;
    }
    io::write_json(&a.out, &report)?;
    m.add_output(&a.out);
    Ok(())
}

fn gate(a: &GateArgs, m: &mut RunManifest) -> Result<()> {
    let (set, triggers) = m.time("read", |m| {
        m.add_input(&a.triggers)?;
        m.add_input(&a.input.join(io::SIGN_REPORT))?;
        Ok::<_, Error>((io::read_signals(&a.input)?, io::read_triggers(&a.triggers)?))
    })?;
    let opts = GateOptions {
        convention: match a.convention {
            ConventionArg::MaxIsEe => Convention::MaxIsEe,
            ConventionArg::MaxIsEi => Convention::MaxIsEi,
        },
        stability_limit: (!a.no_stability).then(|| stack_iqr(&set.signals)),
    };
    let records = m.time("select", |m| {
        set.signals
            .iter()
            .map(|s| {
                let t = triggers.get(&s.slice_index).map_or(&[][..], Vec::as_slice);
                let beats = segment_heartbeats(s.slice_index, t, s.values.len())?;
                let sel = select_beats(s, &beats, &opts)?;
                m.warn_all(sel.warnings.iter().cloned());
                Ok(GateRecord::new(s.slice_index, &sel))
            })
            .collect::<Result<Vec<_>>>()
    })?;
    fs::create_dir_all(&a.out).map_err(|e| Error::IoFailure {
        path: a.out.clone(),
        source: e,
    })?;
    for r in &records {
        let path = a.out.join(io::gate_file_name(r.slice_index));
        io::write_json(&path, r)?;
        m.add_output(&path);
    }
    Ok(())
}
