use std::fmt;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use blm_core::answers::{AnswerConfig, PerturbationStyle, ViolationKind};
use blm_core::augment::{AugmentConfig, AugmentError, Review, ScorerBoundary};
use blm_core::dataset::{
    augment_dataset, generate_from_config, set_review, solve_dataset, split_by_lexicalization,
    strip_answers, validate, DatasetError, DatasetFile, GenerationConfig,
};
use blm_core::realize::LexicalizationMode;
use blm_core::template::Shape;
use clap::{Args, Parser, Subcommand, ValueEnum};

#[derive(Parser)]
#[command(name = "blm", version, about = "Generate, verify and solve Blackbird Language Matrices")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a dataset from a config file or flags.
    Generate(GenerateArgs),
    /// Re-check every invariant of a dataset.
    Validate {
        dataset: PathBuf,
        /// Print the report as JSON.
        #[arg(long)]
        json: bool,
    },
    /// Run the reference solver and report accuracy.
    Solve {
        dataset: PathBuf,
        #[arg(long)]
        json: bool,
        /// Include one record per instance in the JSON report.
        #[arg(long)]
        records: bool,
    },
    /// Add lexically augmented copies of every instance.
    Augment(AugmentArgs),
    /// Write an evaluation export.
    Export(ExportArgs),
    /// Set the review status of augmented instances.
    Review {
        dataset: PathBuf,
        /// Only these instance ids (default: all augmented instances).
        #[arg(long = "id")]
        ids: Vec<String>,
        #[arg(long, value_enum, default_value = "approved")]
        status: ReviewStatus,
        /// Output path (default: rewrite the input).
        #[arg(short, long)]
        output: Option<PathBuf>,
    },
}

#[derive(Args)]
struct GenerateArgs {
    /// TOML generation config.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Phenomenon file (`.blm`), when no config is given.
    #[arg(long)]
    phenomenon: Option<PathBuf>,
    /// Operator, e.g. `alternation NP1.number cycle=s,p period=1`. Repeatable.
    #[arg(long = "operator")]
    operators: Vec<String>,
    /// Items per instance.
    #[arg(long)]
    n: Option<usize>,
    /// Maximum tokens per item.
    #[arg(long)]
    l: Option<usize>,
    #[arg(long)]
    count: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long, value_enum)]
    lexicalization: Option<Lexicalization>,
    /// Comma-separated option kinds, e.g. `Correct,ViolationE,ViolationI`.
    #[arg(long)]
    composition: Option<String>,
    #[arg(long, value_enum)]
    style: Option<Style>,
    #[arg(long)]
    max_attempts: Option<usize>,
    #[arg(short, long)]
    output: Option<PathBuf>,
    /// Do not print summary statistics.
    #[arg(long, short)]
    quiet: bool,
}

#[derive(Args)]
struct AugmentArgs {
    dataset: PathBuf,
    /// `stub:<table.tsv>`, `cmd:<command>` or `url:<http url>`.
    #[arg(long)]
    provider: String,
    #[arg(long, default_value_t = 1.0)]
    epsilon: f64,
    /// Augmented copies per instance.
    #[arg(long, default_value_t = 1)]
    budget: usize,
    /// Largest accepted rank.
    #[arg(long, default_value_t = 10)]
    window: usize,
    /// Candidates requested per slot.
    #[arg(long, default_value_t = 10)]
    k: usize,
    /// Categories of substitutable phrases.
    #[arg(long = "category", default_values_t = ["NP".to_string()])]
    categories: Vec<String>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(short, long)]
    output: Option<PathBuf>,
    #[arg(long, short)]
    quiet: bool,
}

#[derive(Args)]
struct ExportArgs {
    dataset: PathBuf,
    /// Remove answers and every field that would reveal them.
    #[arg(long)]
    strip_answers: bool,
    /// Experimental: hold out this percentage of lexical groups into `--heldout`.
    #[arg(long, value_name = "PERCENT", requires = "heldout")]
    split_by_lexicalization: Option<u64>,
    /// Output path for the held-out part of a split.
    #[arg(long)]
    heldout: Option<PathBuf>,
    #[arg(short, long)]
    output: Option<PathBuf>,
}

#[derive(Clone, Copy, ValueEnum)]
enum Lexicalization {
    Varied,
    Shared,
}

#[derive(Clone, Copy, ValueEnum)]
enum Style {
    Template,
    Minimal,
}

#[derive(Clone, Copy, ValueEnum)]
enum ReviewStatus {
    Pending,
    Approved,
}

/// Failure with its process exit code.
struct Failure {
    code: u8,
    message: String,
}

impl Failure {
    fn config(message: impl fmt::Display) -> Self {
        Failure {
            code: 4,
            message: message.to_string(),
        }
    }

    fn validation(message: impl fmt::Display) -> Self {
        Failure {
            code: 2,
            message: message.to_string(),
        }
    }
}

impl From<DatasetError> for Failure {
    fn from(e: DatasetError) -> Self {
        let code = match &e {
            DatasetError::Config(_) | DatasetError::Dsl(_) | DatasetError::Template(_) => 4,
            DatasetError::Schema(_) | DatasetError::NoAnswers => 2,
            DatasetError::Augment(AugmentError::ProviderUnavailable(_))
            | DatasetError::Augment(AugmentError::MalformedProviderResponse(_))
            | DatasetError::Augment(AugmentError::BadTable { .. }) => 3,
            DatasetError::Augment(AugmentError::Verify(_)) => 2,
            _ => 1,
        };
        Failure {
            code,
            message: e.to_string(),
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {}", f.message);
            ExitCode::from(f.code)
        }
    }
}

fn run(cmd: Command) -> Result<(), Failure> {
    match cmd {
        Command::Generate(args) => generate(args),
        Command::Validate { dataset, json } => {
            let file = load(&dataset)?;
            let report = validate(&file);
            if json {
                println!("{}", serde_json::to_string_pretty(&report).expect("report serializes"));
            } else {
                for f in &report.failures {
                    println!(
                        "FAIL [{}] {}: {}",
                        f.check.as_str(),
                        f.instance.as_deref().unwrap_or("<file>"),
                        f.message
                    );
                }
                println!(
                    "{} instances, {} failures",
                    report.instances,
                    report.failures.len()
                );
            }
            if report.ok() {
                Ok(())
            } else {
                Err(Failure::validation("validation failed"))
            }
        }
        Command::Solve {
            dataset,
            json,
            records,
        } => {
            let file = load(&dataset)?;
            let mut report = solve_dataset(&file)?;
            let failing: Vec<String> = report
                .records
                .iter()
                .filter(|r| r.status != "exact" || r.correct == Some(false))
                .map(|r| format!("{}: {}", r.id, r.error.as_deref().unwrap_or(&r.status)))
                .collect();
            let accuracy = report.accuracy;
            if json {
                if !records {
                    report.records.clear();
                }
                println!("{}", serde_json::to_string_pretty(&report).expect("report serializes"));
            } else {
                for line in &failing {
                    println!("{line}");
                }
                println!(
                    "instances {} exact {} ambiguous {} unsolved {}",
                    report.instances, report.exact, report.ambiguous, report.unsolved
                );
                if let Some(a) = accuracy {
                    println!("accuracy {a:.4}");
                }
                for (k, v) in &report.confusion {
                    println!("  {k}: {v}");
                }
            }
            if failing.is_empty() {
                Ok(())
            } else {
                Err(Failure::validation(format!("{} instances not solved exactly", failing.len())))
            }
        }
        Command::Augment(args) => augment(args),
        Command::Export(args) => export(args),
        Command::Review {
            dataset,
            ids,
            status,
            output,
        } => {
            let mut file = load(&dataset)?;
            let status = match status {
                ReviewStatus::Pending => Review::Pending,
                ReviewStatus::Approved => Review::Approved,
            };
            let changed = set_review(&mut file, &ids, status);
            write(output.as_deref().or(Some(&dataset)), &file.to_json())?;
            eprintln!("{changed} records updated");
            Ok(())
        }
    }
}

fn load(path: &Path) -> Result<DatasetFile, Failure> {
    DatasetFile::load(path).map_err(|e| match e {
        DatasetError::Read { .. } => Failure {
            code: 1,
            message: e.to_string(),
        },
        other => other.into(),
    })
}

fn write(path: Option<&Path>, text: &str) -> Result<(), Failure> {
    match path {
        Some(p) => std::fs::write(p, text).map_err(|e| Failure {
            code: 1,
            message: format!("cannot write {}: {e}", p.display()),
        }),
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

fn generation_config(args: &GenerateArgs) -> Result<GenerationConfig, Failure> {
    let mut cfg = match &args.config {
        Some(path) => GenerationConfig::load(path).map_err(|e| match e {
            DatasetError::Read { .. } => Failure::config(e),
            other => other.into(),
        })?,
        None => {
            let phenomenon = args
                .phenomenon
                .clone()
                .ok_or_else(|| Failure::config("either --config or --phenomenon is required"))?;
            let (Some(n), Some(l)) = (args.n, args.l) else {
                return Err(Failure::config("--n and --l are required without --config"));
            };
            GenerationConfig {
                phenomenon,
                count: 1,
                seed: 0,
                operators: Vec::new(),
                output: None,
                lexicalization: LexicalizationMode::Varied,
                max_attempts: 8,
                shape: Shape { n, l },
                answers: AnswerConfig::default(),
                base_dir: None,
            }
        }
    };
    if !args.operators.is_empty() {
        cfg.operators = args.operators.clone();
    }
    if let Some(n) = args.n {
        cfg.shape.n = n;
    }
    if let Some(l) = args.l {
        cfg.shape.l = l;
    }
    if let Some(c) = args.count {
        cfg.count = c;
    }
    if let Some(s) = args.seed {
        cfg.seed = s;
    }
    if let Some(m) = args.max_attempts {
        cfg.max_attempts = m;
    }
    if let Some(lex) = args.lexicalization {
        cfg.lexicalization = match lex {
            Lexicalization::Varied => LexicalizationMode::Varied,
            Lexicalization::Shared => LexicalizationMode::Shared,
        };
    }
    if let Some(style) = args.style {
        cfg.answers.style = match style {
            Style::Template => PerturbationStyle::Template,
            Style::Minimal => PerturbationStyle::Minimal,
        };
    }
    if let Some(c) = &args.composition {
        cfg.answers.composition = c
            .split(',')
            .map(|k| k.trim().parse::<ViolationKind>())
            .collect::<Result<_, _>>()
            .map_err(Failure::config)?;
    }
    if args.output.is_some() {
        cfg.output = args.output.clone();
    }
    if !cfg.phenomenon_path().exists() {
        return Err(Failure::config(format!(
            "phenomenon file {} does not exist",
            cfg.phenomenon_path().display()
        )));
    }
    Ok(cfg)
}

fn generate(args: GenerateArgs) -> Result<(), Failure> {
    let cfg = generation_config(&args)?;
    let (file, stats) = generate_from_config(&cfg).map_err(|e| match e {
        DatasetError::Read { .. } => Failure::config(e),
        other => other.into(),
    })?;
    write(cfg.output.as_deref(), &file.to_json())?;
    if !args.quiet {
        eprintln!("generated {} instances", stats.instances);
        for (k, v) in &stats.composition {
            eprintln!("  {k}: {v}");
        }
        for (k, v) in &stats.rejections {
            eprintln!("  rejected ({k}): {v}");
        }
    }
    Ok(())
}

fn augment(args: AugmentArgs) -> Result<(), Failure> {
    if !(args.epsilon >= 0.0) || args.budget == 0 {
        return Err(Failure::config("epsilon must be non-negative and budget at least 1"));
    }
    let file = load(&args.dataset)?;
    let boundary = ScorerBoundary::parse(&args.provider).map_err(Failure::config)?;
    let provider = boundary.connect().map_err(|e| Failure {
        code: 3,
        message: e.to_string(),
    })?;
    let config = AugmentConfig {
        epsilon: args.epsilon,
        window: args.window,
        k: args.k,
        budget: args.budget,
        slot_categories: args.categories.clone(),
    };
    let (out, stats) = augment_dataset(&file, provider.as_ref(), &config, args.seed)?;
    write(args.output.as_deref(), &out.to_json())?;
    if !args.quiet {
        eprintln!(
            "{} base instances, {} augmented copies, {} of {} candidates accepted",
            stats.base_instances, stats.augmented, stats.accepted, stats.candidates
        );
        for (k, v) in &stats.rejections {
            eprintln!("  rejected ({k}): {v}");
        }
        if !stats.without_candidates.is_empty() {
            eprintln!(
                "  no acceptable candidate: {}",
                stats.without_candidates.join(", ")
            );
        }
    }
    Ok(())
}

fn export(args: ExportArgs) -> Result<(), Failure> {
    let file = load(&args.dataset)?;
    let prepare = |f: &DatasetFile| {
        if args.strip_answers {
            strip_answers(f)
        } else {
            f.clone()
        }
    };
    match args.split_by_lexicalization {
        Some(percent) => {
            if percent > 100 {
                return Err(Failure::config("split percentage must be at most 100"));
            }
            let (train, heldout) = split_by_lexicalization(&file, percent);
            write(args.output.as_deref(), &prepare(&train).to_json())?;
            write(args.heldout.as_deref(), &prepare(&heldout).to_json())?;
            eprintln!(
                "split: {} instances, {} held out",
                train.instances.len(),
                heldout.instances.len()
            );
        }
        None => write(args.output.as_deref(), &prepare(&file).to_json())?,
    }
    Ok(())
}
