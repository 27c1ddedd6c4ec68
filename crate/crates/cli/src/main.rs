use std::collections::BTreeSet;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};

use icdnet::embed::train_skipgram;
use icdnet::icd9::{label_distribution, GROUP_COUNT};
use icdnet::ingest::{corpus_stats, load_notes, SyntheticConfig};
use icdnet::pipeline::{
    benchmark_table, compare_reports, evaluate_run, load_report, prepare_cohort, run_pipeline, stage_seed,
    write_fixture, ErrorKind, Mode, Paths, PipelineError, RunConfig, Stage, TrainedModel, CONFIG_FILE, LABELS_FILE,
};

const OUTPUT_ENV: &str = "ICDNET_OUTPUT_DIR";

#[derive(Debug, Parser)]
#[command(
    name = "icdnet",
    version,
    about = "ICD9 disease-group prediction from physician notes"
)]
struct Cli {
    /// Increase log verbosity (-v info, -vv debug).
    #[arg(short, long, action = clap::ArgAction::Count, global = true)]
    verbose: u8,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, clap::Args)]
struct ConfigArgs {
    /// Run configuration (TOML).
    #[arg(short, long)]
    config: PathBuf,
    /// Replaces `paths.output_dir`.
    #[arg(short, long, env = OUTPUT_ENV)]
    output_dir: Option<PathBuf>,
}

impl ConfigArgs {
    fn load(&self) -> Result<RunConfig, PipelineError> {
        let mut cfg = RunConfig::load(&self.config)?;
        if let Some(dir) = &self.output_dir {
            cfg.paths.output_dir = dir.clone();
        }
        Ok(cfg)
    }
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum CorpusKind {
    Standard,
    TwoCluster,
    MixedSignal,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Build the labeled cohort and write its filter counts and label distribution.
    Ingest(ConfigArgs),
    /// Print corpus statistics of the cohort.
    Stats {
        #[command(flatten)]
        args: ConfigArgs,
        #[arg(long)]
        json: bool,
    },
    /// Train skipgram vectors on the whole cohort and save them as text.
    TrainEmbeddings {
        #[command(flatten)]
        args: ConfigArgs,
        /// Output file; defaults to `word2vec.txt` in the output directory.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Run the full pipeline: features, training, evaluation and artifacts.
    Train {
        #[command(flatten)]
        args: ConfigArgs,
        #[arg(long)]
        mode: Option<Mode>,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        epochs: Option<usize>,
    },
    /// Re-score the held-out split of a finished run.
    Evaluate {
        /// Run directory.
        run: PathBuf,
        /// Also print the run next to the published benchmark numbers.
        #[arg(long)]
        benchmark: bool,
    },
    /// Score notes from a CSV with a trained run.
    Predict {
        run: PathBuf,
        /// Notes CSV with the NOTEEVENTS columns.
        #[arg(long)]
        notes: PathBuf,
        /// Output CSV; stdout when omitted.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Compare finished runs that share a cohort and split.
    Compare {
        #[arg(required = true, num_args = 2..)]
        runs: Vec<PathBuf>,
        /// Add the published value next to each column.
        #[arg(long)]
        reference: bool,
        #[arg(long)]
        json: bool,
    },
    /// Generate a synthetic corpus, stand-in pretrained table and run config.
    Synth {
        #[arg(long)]
        out: PathBuf,
        #[arg(long, value_enum, default_value = "standard")]
        kind: CorpusKind,
        #[arg(long, default_value_t = 2000)]
        notes: usize,
        #[arg(long, default_value_t = 500)]
        admissions: usize,
        #[arg(long, default_value_t = 7)]
        seed: u64,
        #[arg(long, default_value_t = 200)]
        dim: usize,
    },
}

fn output_error(path: &Path, e: impl std::fmt::Display) -> PipelineError {
    PipelineError::data(Stage::Output, format!("{}: {e}", path.display()))
}

fn write(path: &Path, text: &str) -> Result<(), PipelineError> {
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        std::fs::create_dir_all(parent).map_err(|e| output_error(parent, e))?;
    }
    std::fs::write(path, text).map_err(|e| output_error(path, e))
}

fn to_json<T: serde::Serialize>(v: &T) -> String {
    serde_json::to_string_pretty(v).expect("serializable")
}

fn run(cli: Cli) -> Result<(), PipelineError> {
    match cli.command {
        Command::Ingest(args) => {
            let cfg = args.load()?;
            let cohort = prepare_cohort(&cfg)?;
            let provenance = cohort.corpus.provenance();
            let dist = label_distribution(cohort.corpus.labels(), &cohort.grouping)
                .map_err(|e| PipelineError::data(Stage::Labels, e))?;
            let dir = &cfg.paths.output_dir;
            write(&dir.join("cohort.json"), &(to_json(provenance) + "\n"))?;
            write(&dir.join(LABELS_FILE), &dist.to_csv())?;
            println!("{}", provenance.filters);
            println!("unique ICD9 codes: {}", provenance.unique_codes);
            println!("cohort fingerprint: {}", cohort.corpus.fingerprint());
        }
        Command::Stats { args, json } => {
            let cfg = args.load()?;
            let cohort = prepare_cohort(&cfg)?;
            let stats = corpus_stats(&cohort.corpus).map_err(|e| PipelineError::data(Stage::Ingest, e))?;
            if json {
                println!("{}", to_json(&stats));
            } else {
                let mut out = String::new();
                writeln!(out, "notes              {}", stats.note_count).unwrap();
                writeln!(out, "unique words       {}", stats.unique_word_count).unwrap();
                writeln!(
                    out,
                    "words per note     min {} / mean {:.1} / max {}",
                    stats.min_note_words, stats.mean_note_words, stats.max_note_words
                )
                .unwrap();
                writeln!(out, "unique ICD9 codes  {}", stats.unique_disease_count).unwrap();
                writeln!(out, "disease groups     {}", stats.group_count).unwrap();
                writeln!(out, "note types:").unwrap();
                for (t, n) in &stats.note_types {
                    writeln!(out, "  {n:>8}  {t}").unwrap();
                }
                print!("{out}");
            }
        }
        Command::TrainEmbeddings { args, out } => {
            let cfg = args.load()?;
            let cohort = prepare_cohort(&cfg)?;
            let sg = icdnet::embed::SkipgramConfig {
                seed: stage_seed(cfg.seed, "skipgram"),
                ..cfg.skipgram.clone()
            };
            let model = train_skipgram(cohort.tokens.iter(), &sg).map_err(|e| PipelineError::data(Stage::Embed, e))?;
            let path = out.unwrap_or_else(|| cfg.paths.output_dir.join(icdnet::pipeline::WORD2VEC_FILE));
            if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
                std::fs::create_dir_all(parent).map_err(|e| output_error(parent, e))?;
            }
            model.table.save_text(&path).map_err(|e| output_error(&path, e))?;
            println!(
                "{} vectors of dimension {} written to {}",
                model.table.len(),
                model.table.dim(),
                path.display()
            );
        }
        Command::Train {
            args,
            mode,
            seed,
            epochs,
        } => {
            let mut cfg = args.load()?;
            if let Some(m) = mode {
                cfg.mode = m;
            }
            if let Some(s) = seed {
                cfg.seed = s;
            }
            if let Some(e) = epochs {
                cfg.train.epochs = e;
            }
            let artifacts = run_pipeline(&cfg)?;
            print!("{}", artifacts.report.to_text());
            println!("\nartifacts in {}", artifacts.dir.display());
        }
        Command::Evaluate { run, benchmark } => {
            let report = evaluate_run(&run)?;
            print!("{}", report.to_text());
            if benchmark {
                println!();
                print!("{}", benchmark_table(&report));
            }
        }
        Command::Predict { run, notes, out } => {
            let model = TrainedModel::load(&run)?;
            let notes = load_notes(&notes, &BTreeSet::new()).map_err(|e| PipelineError::data(Stage::Ingest, e))?;
            let texts: Vec<&str> = notes.iter().map(|n| n.text.as_str()).collect();
            let scores = model.score_texts(&texts)?;
            let mut csv = String::from("ROW_ID,HADM_ID");
            for g in 1..=GROUP_COUNT {
                write!(csv, ",group_{g:02}").unwrap();
            }
            csv.push('\n');
            for (i, n) in notes.iter().enumerate() {
                write!(csv, "{},{}", n.row_id, n.hadm_id).unwrap();
                for g in 0..GROUP_COUNT {
                    write!(csv, ",{:.6}", scores[[i, g]]).unwrap();
                }
                csv.push('\n');
            }
            match out {
                Some(path) => write(&path, &csv)?,
                None => print!("{csv}"),
            }
        }
        Command::Compare { runs, reference, json } => {
            let reports = runs.iter().map(|r| load_report(r)).collect::<Result<Vec<_>, _>>()?;
            let comparison = compare_reports(&reports)?;
            if json {
                println!("{}", to_json(&comparison));
            } else {
                print!("{}", comparison.to_table(reference));
            }
        }
        Command::Synth {
            out,
            kind,
            notes,
            admissions,
            seed,
            dim,
        } => {
            let synth = match kind {
                CorpusKind::Standard => SyntheticConfig::standard(notes, admissions),
                CorpusKind::TwoCluster => SyntheticConfig::two_cluster(notes, admissions),
                CorpusKind::MixedSignal => SyntheticConfig::mixed_signal(notes, admissions),
            };
            let fixture = write_fixture(&out, &synth, seed, dim)?;
            let mut cfg = RunConfig::new(
                Mode::Hybrid,
                seed,
                Paths {
                    notes: file_name(&fixture.notes),
                    diagnoses: file_name(&fixture.diagnoses),
                    pretrained: Some(file_name(&fixture.pretrained)),
                    output_dir: PathBuf::from("run"),
                    stoplist: None,
                    grouping: None,
                },
            );
            cfg.skipgram.dimension = dim;
            write(&out.join(CONFIG_FILE), &cfg.to_toml_string())?;
            println!("synthetic corpus written to {}", out.display());
        }
    }
    Ok(())
}

fn file_name(path: &Path) -> PathBuf {
    PathBuf::from(path.file_name().expect("file path"))
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() {
                ErrorKind::Usage.exit_code()
            } else {
                0
            };
            let _ = e.print();
            return ExitCode::from(code as u8);
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
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
