use std::io::{self, Write};
use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{Context, Result};
use capmerge_core::pipeline::{run_enhance, run_evaluate, run_gallery_match, run_stats};
use capmerge_core::{Metric, RefField, RunConfig};
use clap::{Args, Parser, Subcommand};

/// Insert identified people's names into image captions and score captions.
#[derive(Parser, Debug)]
#[command(name = "capmerge", version)]
struct Cli {
    /// TOML run configuration; command-line flags take precedence.
    #[arg(long, global = true, value_name = "FILE")]
    config: Option<PathBuf>,

    /// More log output (-v info, -vv debug). RUST_LOG overrides.
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    verbose: u8,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Merge face names into base captions; writes one JSON line per image.
    Enhance(EnhanceArgs),
    /// Score predicted captions against manifest references.
    Evaluate(EvaluateArgs),
    /// Corpus totals and the identified-persons-per-image histogram.
    Stats(CorpusArgs),
    /// Match every face embedding against the gallery.
    GalleryMatch(CorpusArgs),
}

#[derive(Args, Debug)]
struct CorpusArgs {
    /// JSON list of image records.
    #[arg(long, value_name = "FILE")]
    manifest: Option<PathBuf>,
    /// Faces per image, as a JSON object keyed by image id.
    #[arg(long, value_name = "FILE")]
    faces: Option<PathBuf>,
    /// Known identities with reference embeddings.
    #[arg(long, value_name = "FILE")]
    gallery: Option<PathBuf>,
    /// Minimum face similarity for an identity to count (inclusive).
    #[arg(long, value_name = "S")]
    sim_threshold: Option<f64>,
    /// Output file; standard output when omitted.
    #[arg(long, value_name = "FILE")]
    out: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct EnhanceArgs {
    #[command(flatten)]
    corpus: CorpusArgs,
    /// Base captions, one `{"id", "caption"}` object per line.
    #[arg(long, value_name = "FILE")]
    captions: Option<PathBuf>,
    /// JSON list of per-word attention maps (inline grids or file paths).
    #[arg(long, value_name = "FILE")]
    attention_index: Option<PathBuf>,
    /// Extra names and aliases recognized in captions.
    #[arg(long, value_name = "FILE")]
    names: Option<PathBuf>,
    /// Minimum overlap between a word's activated area and a face box.
    #[arg(long, value_name = "THETA")]
    theta: Option<f64>,
    /// Activation cut-off on min-max normalized attention, in (0, 1].
    #[arg(long, value_name = "ALPHA")]
    alpha: Option<f64>,
    /// Worker threads; output does not depend on it.
    #[arg(long, value_name = "N")]
    jobs: Option<usize>,
}

#[derive(Args, Debug)]
struct EvaluateArgs {
    /// JSON list of image records.
    #[arg(long, value_name = "FILE")]
    manifest: Option<PathBuf>,
    /// Predictions, one `{"id", "caption"}` or enhance output object per line.
    #[arg(long, value_name = "FILE")]
    predictions: Option<PathBuf>,
    /// first-sentence or synthetic.
    #[arg(long, value_name = "FIELD")]
    ref_field: Option<RefField>,
    /// Comma-separated subset of bleu,rouge,cider,meteor.
    #[arg(long, value_name = "LIST", value_delimiter = ',')]
    metrics: Option<Vec<Metric>>,
    /// Report file; standard output when omitted.
    #[arg(long, value_name = "FILE")]
    out: Option<PathBuf>,
}

fn set<T>(slot: &mut T, value: Option<T>) {
    if let Some(v) = value {
        *slot = v;
    }
}

fn set_path(slot: &mut Option<PathBuf>, value: Option<PathBuf>) {
    if value.is_some() {
        *slot = value;
    }
}

impl CorpusArgs {
    fn apply(self, config: &mut RunConfig) {
        set_path(&mut config.manifest, self.manifest);
        set_path(&mut config.faces, self.faces);
        set_path(&mut config.gallery, self.gallery);
        set(&mut config.merge.sim_threshold, self.sim_threshold);
        set_path(&mut config.output, self.out);
    }
}

fn write_json_lines<T: serde::Serialize>(rows: &[T]) -> Result<()> {
    let mut out = io::stdout().lock();
    for row in rows {
        serde_json::to_writer(&mut out, row)?;
        out.write_all(b"\n")?;
    }
    Ok(())
}

fn print_pretty<T: serde::Serialize>(value: &T) -> Result<()> {
    let mut out = io::stdout().lock();
    serde_json::to_writer_pretty(&mut out, value)?;
    out.write_all(b"\n")?;
    Ok(())
}

fn run(cli: Cli) -> Result<()> {
    let mut config = match &cli.config {
        Some(path) => RunConfig::load(path)?,
        None => RunConfig::default(),
    };
    match cli.command {
        Command::Enhance(args) => {
            args.corpus.apply(&mut config);
            set_path(&mut config.captions, args.captions);
            set_path(&mut config.attention_index, args.attention_index);
            set_path(&mut config.names, args.names);
            set(&mut config.merge.theta, args.theta);
            set(&mut config.merge.alpha, args.alpha);
            set(&mut config.jobs, args.jobs);
            let outcome = run_enhance(&config, None)?;
            if config.output.is_none() {
                write_json_lines(&outcome.records)?;
            }
            eprintln!("{}", outcome.stats);
        }
        Command::Evaluate(args) => {
            set_path(&mut config.manifest, args.manifest);
            set_path(&mut config.predictions, args.predictions);
            set(&mut config.ref_field, args.ref_field);
            set(&mut config.metrics, args.metrics);
            set_path(&mut config.output, args.out);
            let report = run_evaluate(&config)?;
            if config.output.is_none() {
                print_pretty(&report)?;
            }
            eprintln!("scored {} pairs ({} excluded)", report.pairs, report.excluded);
        }
        Command::Stats(args) => {
            args.apply(&mut config);
            let summary = run_stats(&config)?;
            if config.output.is_none() {
                print_pretty(&summary)?;
            }
            eprintln!(
                "{} images, {} identified persons over {} unique images",
                summary.images, summary.identified_persons, summary.unique_images_with_identifications
            );
        }
        Command::GalleryMatch(args) => {
            args.apply(&mut config);
            let matches = run_gallery_match(&config)?;
            if config.output.is_none() {
                write_json_lines(&matches)?;
            }
            let identified = matches.iter().filter(|m| m.identity.is_some()).count();
            eprintln!("{identified} of {} faces matched", matches.len());
        }
    }
    io::stdout().flush().context("flushing standard output")?;
    Ok(())
}

/// 1 for problems with the inputs or flags, 2 for everything else.
fn exit_code(err: &anyhow::Error) -> u8 {
    match err.downcast_ref::<capmerge_core::Error>() {
        Some(e) if e.is_input_error() => 1,
        _ => 2,
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();

    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            // core errors already carry their causes in the message
            if err.downcast_ref::<capmerge_core::Error>().is_some() {
                eprintln!("error: {err}");
            } else {
                eprintln!("error: {err:#}");
            }
            ExitCode::from(exit_code(&err))
        }
    }
}
