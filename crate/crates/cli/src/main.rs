use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context};
use clap::{Args, Parser, Subcommand};
use rai_impact::pipeline::{self, PipelineConfig, Stage};
use rai_impact::synth::{self, SynthSpec};
use rai_impact::MockEmbedder;

const EXIT_VALIDATION: u8 = 2;
const EXIT_STAGE: u8 = 3;

#[derive(Parser)]
#[command(name = "rai-impact", version, about = "Translational-impact analytics over paper, patent and repository corpora")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone)]
struct RunArgs {
    /// Pipeline configuration (TOML).
    #[arg(long, short)]
    config: PathBuf,
    /// Override the output directory.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Override the worker thread count (0 = all cores).
    #[arg(long)]
    threads: Option<usize>,
    /// Override the seed.
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Subcommand)]
enum Command {
    /// Check the configuration and input paths.
    Validate(RunArgs),
    /// Load and filter papers, patents and repository links.
    Ingest(RunArgs),
    /// Assign topics and keep the high-confidence corpus.
    Classify(RunArgs),
    /// Link papers to patents and repositories.
    Link(RunArgs),
    /// Impact tables, tests, survival curves and institution ranking.
    Metrics(RunArgs),
    /// Cited-venue conventionality scores.
    Conventionality(RunArgs),
    /// Write the manifest for the current outputs.
    Report(RunArgs),
    /// All stages in order.
    Run(RunArgs),
    /// Embed `key<TAB>text` lines with the hashing embedder.
    EmbedMock {
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        output: PathBuf,
        #[arg(long, default_value_t = 256)]
        dim: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Write the text format instead of binary.
        #[arg(long)]
        text: bool,
    },
    /// Write a synthetic corpus with planted links.
    Synth {
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 200)]
        papers: usize,
        #[arg(long, default_value_t = 80)]
        patents: usize,
        #[arg(long, default_value_t = 11)]
        seed: u64,
        #[arg(long, default_value_t = 2)]
        max_edits: usize,
    },
}

enum Failure {
    Validation(anyhow::Error),
    Stage(anyhow::Error),
}

impl<E: Into<anyhow::Error>> From<E> for Failure {
    fn from(e: E) -> Self {
        Failure::Stage(e.into())
    }
}

fn load_config(args: &RunArgs) -> Result<PipelineConfig, Failure> {
    let mut cfg = PipelineConfig::load(&args.config)
        .with_context(|| format!("loading {}", args.config.display()))
        .map_err(Failure::Validation)?;
    if let Some(out) = &args.out {
        cfg.out_dir = out.clone();
    }
    if let Some(t) = args.threads {
        cfg.threads = t;
    }
    if let Some(s) = args.seed {
        cfg.seed = s;
    }
    cfg.validate().map_err(|e| Failure::Validation(e.into()))?;
    Ok(cfg)
}

fn embed_mock(input: &Path, output: &Path, dim: usize, seed: u64, text: bool) -> anyhow::Result<()> {
    let reader = BufReader::new(File::open(input).with_context(|| format!("opening {}", input.display()))?);
    let mut rows = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let Some((key, body)) = line.split_once('\t') else {
            bail!("line {}: expected key<TAB>text", i + 1);
        };
        rows.push((key.to_owned(), body.to_owned()));
    }
    let store = MockEmbedder::new(dim, seed).embed_all(rows.iter().map(|(k, t)| (k.clone(), t.as_str())))?;
    let mut w = BufWriter::new(File::create(output).with_context(|| format!("creating {}", output.display()))?);
    if text {
        store.save_text(&mut w)?;
    } else {
        store.save_binary(&mut w)?;
    }
    w.flush()?;
    eprintln!("wrote {} vectors ({}) to {}", store.len(), store.model_id(), output.display());
    Ok(())
}

fn execute(cli: Cli) -> Result<(), Failure> {
    let stage = |args: &RunArgs, stage: Stage| -> Result<(), Failure> {
        let cfg = load_config(args)?;
        pipeline::run_stage(&cfg, stage)?;
        eprintln!("{} done -> {}", stage.as_str(), cfg.out_dir.display());
        Ok(())
    };
    match cli.command {
        Command::Validate(a) => {
            load_config(&a)?;
            eprintln!("config ok");
        }
        Command::Ingest(a) => stage(&a, Stage::Ingest)?,
        Command::Classify(a) => stage(&a, Stage::Classify)?,
        Command::Link(a) => stage(&a, Stage::Link)?,
        Command::Metrics(a) => stage(&a, Stage::Metrics)?,
        Command::Conventionality(a) => stage(&a, Stage::Conventionality)?,
        Command::Report(a) => stage(&a, Stage::Report)?,
        Command::Run(a) => {
            let cfg = load_config(&a)?;
            let manifest = pipeline::run(&cfg)?;
            eprintln!(
                "run complete: {} files, settings {} -> {}",
                manifest.outputs.len(),
                &manifest.settings_sha256[..12],
                cfg.out_dir.display()
            );
        }
        Command::EmbedMock {
            input,
            output,
            dim,
            seed,
            text,
        } => embed_mock(&input, &output, dim, seed, text)?,
        Command::Synth {
            out,
            papers,
            patents,
            seed,
            max_edits,
        } => {
            let spec = SynthSpec {
                papers,
                patents,
                seed,
                max_title_edits: max_edits,
                ..SynthSpec::default()
            };
            let corpus = synth::generate(&spec);
            synth::write_corpus(&corpus, &out)?;
            eprintln!(
                "wrote {} papers, {} patents, {} repository links to {}",
                corpus.papers.len(),
                corpus.patents.len(),
                corpus.repos.len(),
                out.display()
            );
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    match execute(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Validation(e)) => {
            eprintln!("error: {e:#}");
            ExitCode::from(EXIT_VALIDATION)
        }
        Err(Failure::Stage(e)) => {
            eprintln!("error: {e:#}");
            ExitCode::from(EXIT_STAGE)
        }
    }
}
