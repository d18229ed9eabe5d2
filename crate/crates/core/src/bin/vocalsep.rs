use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::Context;
use clap::{Args, Parser, Subcommand, ValueEnum};
use log::info;

use vocalsep::io::{read_f0_csv, read_wav, write_f0_csv, write_mask_csv, write_mask_pgm, write_rpca_trace, write_saliency_csv, write_wav};
use vocalsep::pipeline::{
    evaluate, grid_search, load_manifest, Analysis, CorpusClip, EvaluationOptions, EvaluationReport, GridSearchSpec,
    MaskMode, Objective, PipelineConfig,
};
use vocalsep::Error;

#[derive(Parser)]
#[command(name = "vocalsep", version, about = "Singing voice separation and vocal F0 estimation")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Split a mixture into vocal and accompaniment WAV files.
    Separate(SeparateArgs),
    /// Write the estimated vocal F0 contour as CSV.
    EstimateF0(EstimateArgs),
    /// Separate and score every clip of a corpus.
    Evaluate(EvaluateArgs),
    /// Score a corpus over a parameter grid.
    GridSearch(GridArgs),
}

#[derive(Args)]
struct ConfigArgs {
    /// JSON object overriding the defaults for the input's sample rate.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    lambda_sep: Option<f64>,
    #[arg(long)]
    lambda_f0: Option<f64>,
    /// Harmonic lobe width in Hz.
    #[arg(long)]
    w: Option<f64>,
    #[arg(long)]
    alpha: Option<f64>,
    #[arg(long)]
    n_partials: Option<usize>,
    #[arg(long, value_parser = parse_mask_mode)]
    mask: Option<MaskMode>,
    /// Average channels of multichannel input.
    #[arg(long)]
    mixdown: bool,
}

fn parse_mask_mode(s: &str) -> Result<MaskMode, String> {
    s.parse().map_err(|e: Error| e.to_string())
}

impl ConfigArgs {
    fn resolve(&self, sample_rate: u32) -> anyhow::Result<PipelineConfig> {
        let mut cfg = match &self.config {
            Some(path) => {
                let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
                PipelineConfig::from_json_over_defaults(&text, sample_rate)?
            }
            None => PipelineConfig::for_sample_rate(sample_rate),
        };
        if let Some(v) = self.lambda_sep {
            cfg.lambda_sep = v;
        }
        if let Some(v) = self.lambda_f0 {
            cfg.lambda_f0 = v;
        }
        if let Some(v) = self.w {
            cfg.w = v;
        }
        if let Some(v) = self.alpha {
            cfg.alpha = v;
        }
        if let Some(v) = self.n_partials {
            cfg.n_partials = v;
        }
        if let Some(m) = self.mask {
            cfg.mask_mode = m;
        }
        cfg.validate()?;
        Ok(cfg)
    }
}

#[derive(Args)]
struct SeparateArgs {
    input: PathBuf,
    #[arg(long)]
    vocal: PathBuf,
    #[arg(long)]
    accomp: PathBuf,
    /// Use this F0 contour (`time_seconds,f0_hz`) instead of estimating one.
    #[arg(long)]
    f0: Option<PathBuf>,
    /// Also write the F0 contour used for the harmonic mask.
    #[arg(long)]
    f0_out: Option<PathBuf>,
    /// Write RPCA traces, masks and saliency into this folder.
    #[arg(long)]
    debug_dir: Option<PathBuf>,
    #[command(flatten)]
    config: ConfigArgs,
}

#[derive(Args)]
struct EstimateArgs {
    input: PathBuf,
    #[arg(long)]
    out: PathBuf,
    #[command(flatten)]
    config: ConfigArgs,
}

#[derive(Clone, Copy, ValueEnum)]
enum ReportFormat {
    Json,
    Csv,
}

#[derive(Args)]
struct CorpusArgs {
    /// JSON list of {id, mixture_path, vocal_path, accomp_path, f0_path}.
    #[arg(long)]
    corpus: PathBuf,
    /// Build harmonic masks from the reference F0 contours.
    #[arg(long)]
    ground_truth_f0: bool,
    /// Worker threads (0 = one per core).
    #[arg(long, default_value_t = 0)]
    threads: usize,
    #[command(flatten)]
    config: ConfigArgs,
}

#[derive(Args)]
struct EvaluateArgs {
    #[arg(long)]
    out: PathBuf,
    #[arg(long, value_enum, default_value_t = ReportFormat::Json)]
    format: ReportFormat,
    /// Remix references at these vocal-to-accompaniment ratios (dB), e.g. `--snr=-5,0,5`.
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
    snr: Vec<f64>,
    #[command(flatten)]
    corpus: CorpusArgs,
}

#[derive(Args)]
struct GridArgs {
    /// JSON grid spec: {"axes": [{"name", "start", "stop", "step"}, ...]}.
    #[arg(long)]
    axes: PathBuf,
    #[arg(long, value_parser = parse_objective)]
    objective: Option<Objective>,
    #[arg(long)]
    out: PathBuf,
    #[command(flatten)]
    corpus: CorpusArgs,
}

fn parse_objective(s: &str) -> Result<Objective, String> {
    s.parse().map_err(|e: Error| e.to_string())
}

/// Exit status for a corpus run with failed clips.
const PARTIAL_FAILURE: u8 = 3;

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info"))
        .format_timestamp_millis()
        .init();
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Separate(args) => separate(args),
        Command::EstimateF0(args) => estimate_f0(args),
        Command::Evaluate(args) => run_evaluate(args),
        Command::GridSearch(args) => run_grid(args),
    };
    match result {
        Ok(code) => code,
        Err(err) => {
            eprintln!("error: {err:#}");
            let invalid = err.chain().any(|e| {
                e.downcast_ref::<Error>().is_some_and(Error::is_invalid_input)
                    || e.downcast_ref::<std::io::Error>()
                        .is_some_and(|e| e.kind() == std::io::ErrorKind::NotFound)
            });
            ExitCode::from(if invalid { 2 } else { 1 })
        }
    }
}

fn read_input(path: &Path, mixdown: bool) -> anyhow::Result<vocalsep::spectrogram::AudioSignal> {
    read_wav(path, mixdown).with_context(|| format!("reading {}", path.display()))
}

fn separate(args: SeparateArgs) -> anyhow::Result<ExitCode> {
    let signal = read_input(&args.input, args.config.mixdown)?;
    let cfg = args.config.resolve(signal.sample_rate())?;
    let mut analysis = Analysis::new(&signal, cfg.window_size, cfg.hop_size)?;
    if args.debug_dir.is_some() {
        analysis.record_traces(true);
    }
    let out = match &args.f0 {
        Some(path) => {
            let f0 = read_f0_csv(path).with_context(|| format!("reading {}", path.display()))?;
            analysis.run_with_f0(&cfg, &f0)?
        }
        None => analysis.run(&cfg)?,
    };
    info!("{} RPCA solve(s)", out.diagnostics.rpca_runs);
    write_wav(&args.vocal, &out.separation.vocal)?;
    write_wav(&args.accomp, &out.separation.accompaniment)?;
    if let Some(path) = &args.f0_out {
        write_f0_csv(path, &out.contour)?;
    }
    if let Some(dir) = &args.debug_dir {
        std::fs::create_dir_all(dir)?;
        let d = &out.diagnostics;
        let geometry = analysis.magnitude.geometry();
        let bin_hz: Vec<f64> = (0..geometry.bins()).map(|f| geometry.bin_hz(f)).collect();
        if let Some(r) = &d.rpca_f0 {
            write_rpca_trace(dir.join("rpca_f0_trace.csv"), &r.trace)?;
        }
        write_rpca_trace(dir.join("rpca_sep_trace.csv"), &d.rpca_sep.trace)?;
        write_mask_pgm(dir.join("mask.pgm"), &d.final_mask)?;
        write_mask_csv(dir.join("mask.csv"), &d.final_mask, geometry.hop_seconds(), &bin_hz)?;
        if let Some(s) = &d.saliency {
            write_saliency_csv(dir.join("saliency.csv"), s, geometry.hop_seconds())?;
        }
        if !d.clamped_bins.is_empty() {
            log::warn!("{} saliency bins used a clamped enhancement lag", d.clamped_bins.len());
        }
    }
    Ok(ExitCode::SUCCESS)
}

fn estimate_f0(args: EstimateArgs) -> anyhow::Result<ExitCode> {
    let signal = read_input(&args.input, args.config.mixdown)?;
    let cfg = args.config.resolve(signal.sample_rate())?;
    let mut analysis = Analysis::new(&signal, cfg.window_size, cfg.hop_size)?;
    let (contour, ..) = analysis.estimate_f0(&cfg)?;
    write_f0_csv(&args.out, &contour)?;
    Ok(ExitCode::SUCCESS)
}

fn load_corpus(args: &CorpusArgs) -> anyhow::Result<(Vec<CorpusClip>, PipelineConfig)> {
    let clips = load_manifest(&args.corpus, args.config.mixdown)
        .with_context(|| format!("loading corpus {}", args.corpus.display()))?;
    let rate = clips[0].mixture.sample_rate();
    if let Some(c) = clips.iter().find(|c| c.mixture.sample_rate() != rate) {
        return Err(Error::InvalidInput(format!(
            "clip {} is at {} Hz but {} is at {rate} Hz; one configuration needs one sample rate",
            c.id,
            c.mixture.sample_rate(),
            clips[0].id
        ))
        .into());
    }
    let cfg = args.config.resolve(rate)?;
    Ok((clips, cfg))
}

fn write_report_csv(path: &Path, report: &EvaluationReport) -> anyhow::Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(["section", "source", "id", "length_seconds", "sdr", "sir", "sar", "nsdr", "rpa"])?;
    for s in &report.sections {
        for (source, scores) in [("vocal", &s.vocal), ("accompaniment", &s.accompaniment)] {
            let Some(scores) = scores else { continue };
            for c in &scores.per_clip {
                let rpa = s.per_clip_rpa.iter().find(|p| p.id == c.id).map(|p| p.rpa.to_string());
                w.write_record([
                    s.label.clone(),
                    source.to_string(),
                    c.id.clone(),
                    c.length.to_string(),
                    c.score.sdr.to_string(),
                    c.score.sir.to_string(),
                    c.score.sar.to_string(),
                    c.score.nsdr.to_string(),
                    rpa.unwrap_or_default(),
                ])?;
            }
            w.write_record([
                s.label.clone(),
                source.to_string(),
                "(global)".to_string(),
                String::new(),
                String::new(),
                scores.gsir.to_string(),
                scores.gsar.to_string(),
                scores.gnsdr.to_string(),
                s.mean_rpa.map(|r| r.to_string()).unwrap_or_default(),
            ])?;
        }
    }
    w.flush()?;
    Ok(())
}

fn run_evaluate(args: EvaluateArgs) -> anyhow::Result<ExitCode> {
    let (clips, cfg) = load_corpus(&args.corpus)?;
    let opts = EvaluationOptions {
        snr_db: args.snr.clone(),
        ground_truth_f0: args.corpus.ground_truth_f0,
        threads: args.corpus.threads,
    };
    let report = evaluate(&clips, &cfg, &opts)?;
    match args.format {
        ReportFormat::Json => {
            let file = std::fs::File::create(&args.out)?;
            serde_json::to_writer_pretty(std::io::BufWriter::new(file), &report)?;
        }
        ReportFormat::Csv => write_report_csv(&args.out, &report)?,
    }
    let failed = report.failed_clips();
    if failed > 0 {
        eprintln!("{failed} clip evaluation(s) failed; see the report");
        return Ok(ExitCode::from(PARTIAL_FAILURE));
    }
    Ok(ExitCode::SUCCESS)
}

fn run_grid(args: GridArgs) -> anyhow::Result<ExitCode> {
    let (clips, cfg) = load_corpus(&args.corpus)?;
    let text = std::fs::read_to_string(&args.axes).with_context(|| format!("reading {}", args.axes.display()))?;
    let mut spec: GridSearchSpec = serde_json::from_str(&text).map_err(Error::from)?;
    if let Some(o) = args.objective {
        spec.objective = o;
    }
    spec.ground_truth_f0 |= args.corpus.ground_truth_f0;
    let table = grid_search(&clips, &spec, &cfg, args.corpus.threads)?;
    table.write_csv(&args.out)?;
    let failed: usize = table.cells.iter().map(|c| c.failed_clips).sum();
    if failed > 0 {
        eprintln!("{failed} clip evaluation(s) failed across the grid; see the table");
        return Ok(ExitCode::from(PARTIAL_FAILURE));
    }
    Ok(ExitCode::SUCCESS)
}
