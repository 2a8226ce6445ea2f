//! Command-line front end: sampling, spectra, restricted norms, moment
//! processes, experiment campaigns, and report generation.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use lce_core::ensembles::{sample_matrix, EnsembleSpec, MomentOracle};
use lce_core::harness::{
    read_records, run_experiment, summarize, write_summary_csv, write_summary_json,
    ExperimentConfig,
};
use lce_core::processes;
use lce_core::restricted::{self, SearchMode};
use lce_core::spectral;
use lce_core::Error;

#[derive(Parser)]
#[command(
    name = "lce",
    about = "Numerical laboratory for log-concave ensembles",
    version
)]
struct Cli {
    /// Worker threads; the LCE_THREADS environment variable overrides this.
    #[arg(long, global = true)]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct SampleArgs {
    /// Ensemble spec: a JSON file path, or inline JSON starting with '{'.
    #[arg(long)]
    spec: String,
    /// Number of sample vectors (columns).
    #[arg(short = 'N', long = "samples")]
    samples: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Output path; stdout when omitted.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Subcommand)]
enum Command {
    /// Draw a sample matrix and write it as CSV, one column per line.
    Sample(SampleArgs),
    /// Eigenvalues of the Gram matrix with scaled extremes and deviation.
    Spectrum(SampleArgs),
    /// Restricted norm over supports of size at most m.
    RestrictedNorm {
        #[command(flatten)]
        sample: SampleArgs,
        #[arg(short, long)]
        m: usize,
        #[arg(long, value_enum, default_value = "exact")]
        mode: Mode,
    },
    /// Supremum of the centered p-th moment process over the sphere.
    MomentProcess {
        #[command(flatten)]
        sample: SampleArgs,
        #[arg(short, long)]
        p: f64,
        /// Reference draws for Monte Carlo moments of non-Gaussian laws.
        #[arg(long, default_value_t = 200_000)]
        reference: usize,
    },
    /// Monte Carlo experiment campaigns.
    Experiment {
        #[command(subcommand)]
        action: ExperimentAction,
    },
    /// Summarize a JSONL record file into CSV and JSON tables.
    Report {
        records: PathBuf,
        /// Output directory for <stem>_summary.{csv,json}.
        #[arg(long, default_value = ".")]
        out: PathBuf,
    },
}

#[derive(Clone, Copy, clap::ValueEnum)]
enum Mode {
    Exact,
    Heuristic,
}

impl From<Mode> for SearchMode {
    fn from(mode: Mode) -> SearchMode {
        match mode {
            Mode::Exact => SearchMode::Exact,
            Mode::Heuristic => SearchMode::Heuristic,
        }
    }
}

#[derive(Subcommand)]
enum ExperimentAction {
    /// Run the campaign described by a JSON config file.
    Run { config: PathBuf },
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(err) => {
            use clap::error::ErrorKind;
            let _ = err.print();
            return match err.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => ExitCode::SUCCESS,
                _ => ExitCode::from(1),
            };
        }
    };
    init_threads(cli.threads);
    match dispatch(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("error: {err}");
            ExitCode::from(exit_code(&err))
        }
    }
}

fn init_threads(flag: Option<usize>) {
    let threads = std::env::var("LCE_THREADS")
        .ok()
        .and_then(|v| v.parse::<usize>().ok())
        .or(flag);
    if let Some(threads) = threads {
        let _ = rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build_global();
    }
}

fn exit_code(err: &Error) -> u8 {
    match err {
        Error::Config(_) | Error::Json(_) | Error::Domain(_) | Error::Precondition(_) => 1,
        _ => 2,
    }
}

fn load_spec(input: &str) -> Result<EnsembleSpec, Error> {
    let spec: EnsembleSpec = if input.trim_start().starts_with('{') {
        serde_json::from_str(input)?
    } else {
        let text = std::fs::read_to_string(input)?;
        serde_json::from_str(&text)?
    };
    spec.validate()?;
    Ok(spec)
}

fn open_output(path: &Option<PathBuf>) -> Result<Box<dyn Write>, Error> {
    Ok(match path {
        Some(path) => Box::new(BufWriter::new(File::create(path)?)),
        None => Box::new(std::io::stdout().lock()),
    })
}

fn write_json<T: serde::Serialize>(value: &T, out: &Option<PathBuf>) -> Result<(), Error> {
    let mut sink = open_output(out)?;
    serde_json::to_writer_pretty(&mut sink, value)?;
    sink.write_all(b"\n")?;
    Ok(())
}

fn dispatch(command: Command) -> Result<(), Error> {
    match command {
        Command::Sample(args) => {
            let spec = load_spec(&args.spec)?;
            let matrix = sample_matrix(&spec, args.samples, args.seed)?;
            let sink = open_output(&args.out)?;
            matrix.write_csv(sink)?;
            Ok(())
        }
        Command::Spectrum(args) => {
            let spec = load_spec(&args.spec)?;
            let matrix = sample_matrix(&spec, args.samples, args.seed)?;
            let summary = spectral::gram_spectrum(&matrix);
            write_json(&summary, &args.out)
        }
        Command::RestrictedNorm { sample, m, mode } => {
            let spec = load_spec(&sample.spec)?;
            let matrix = sample_matrix(&spec, sample.samples, sample.seed)?;
            let result = restricted::a_m(&matrix, m, mode.into())?;
            write_json(&result, &sample.out)
        }
        Command::MomentProcess {
            sample,
            p,
            reference,
        } => {
            let spec = load_spec(&sample.spec)?;
            let matrix = sample_matrix(&spec, sample.samples, sample.seed)?;
            let oracle = MomentOracle::new(&spec, reference, sample.seed ^ 0x0e_ac1e)?;
            let result = processes::p_moment_deviation(&matrix, p, &oracle)?;
            write_json(&result, &sample.out)
        }
        Command::Experiment { action } => match action {
            ExperimentAction::Run { config } => {
                let config = ExperimentConfig::from_json_file(&config)?;
                let records = run_experiment(&config)?;
                let failures = records.iter().filter(|r| r.error.is_some()).count();
                eprintln!(
                    "{}: {} records ({} trial errors){}",
                    config.experiment.name(),
                    records.len(),
                    failures,
                    config
                        .output
                        .as_deref()
                        .map(|p| format!(", written to {}", p.display()))
                        .unwrap_or_default()
                );
                if config.output.is_none() {
                    let mut sink = std::io::stdout().lock();
                    for record in &records {
                        serde_json::to_writer(&mut sink, record)?;
                        sink.write_all(b"\n")?;
                    }
                }
                Ok(())
            }
        },
        Command::Report { records, out } => {
            let loaded = read_records(&records)?;
            let summary = summarize(&loaded)?;
            std::fs::create_dir_all(&out)?;
            let stem = records
                .file_stem()
                .map(|s| s.to_string_lossy().to_string())
                .unwrap_or_else(|| "records".into());
            let csv_path = out.join(format!("{stem}_summary.csv"));
            let json_path = out.join(format!("{stem}_summary.json"));
            write_summary_csv(&summary, &csv_path)?;
            write_summary_json(&summary, &json_path)?;
            eprintln!(
                "report: {} grid points -> {}, {}",
                summary.points.len(),
                csv_path.display(),
                json_path.display()
            );
            Ok(())
        }
    }
}
