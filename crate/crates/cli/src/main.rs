use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use surveyeval::config::PipelineConfig;
use surveyeval::corpus::{load_manifest, CorpusManifest};
use surveyeval::pipeline::{self, Pipeline, PipelineError};
use surveyeval::report::render_markdown;

#[derive(Parser)]
#[command(name = "surveyeval", version, about = "Evaluate generated surveys against human-written ones")]
struct Cli {
    /// Pipeline config (TOML). Defaults apply when omitted.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Corpus manifest (JSON).
    #[arg(long, global = true)]
    manifest: Option<PathBuf>,
    /// Output directory; overrides the config.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Answer judge calls from the cache only.
    #[arg(long, global = true)]
    offline: bool,
    /// Audit the stage's outputs; mismatches exit with status 4.
    #[arg(long, global = true)]
    verify: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Validate the manifest and mine missing topics.
    Ingest,
    /// Split every survey into outline, content and reference units.
    Decompose,
    /// Embed all units into the vector index.
    Embed,
    /// Score every survey and write the report.
    Evaluate,
    /// Pairwise win rates against the human surveys.
    Arena,
    /// Render a stored report.
    Report {
        #[arg(long, value_enum, default_value_t = Format::Markdown)]
        format: Format,
        /// Report to render; defaults to `<out>/report.json`.
        #[arg(long)]
        report: Option<PathBuf>,
    },
    /// Show the judging templates or generate rubric criteria.
    Criteria {
        #[arg(value_enum, default_value_t = CriteriaAction::Show)]
        action: CriteriaAction,
        /// Dimension for `generate`, e.g. outline, content, reference.
        #[arg(long, default_value = "outline")]
        dimension: String,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum Format {
    Json,
    Markdown,
}

#[derive(Clone, Copy, ValueEnum)]
enum CriteriaAction {
    Show,
    Generate,
}

fn load_config(cli: &Cli) -> Result<PipelineConfig, PipelineError> {
    let mut config = match &cli.config {
        Some(path) => PipelineConfig::load(path)?,
        None => {
            // Without a config file, keep the cache and index beside the output.
            let out = cli.out.clone().unwrap_or_else(|| PathBuf::from("out"));
            let mut c = PipelineConfig::default();
            c.paths.cache = out.join("cache/judge.jsonl");
            c.paths.index = out.join("index/vectors.jsonl");
            c
        }
    };
    if let Some(out) = &cli.out {
        config.paths.out = out.clone();
    }
    Ok(config)
}

fn pipeline(cli: &Cli, manifest_required: bool) -> Result<Pipeline, PipelineError> {
    let config = load_config(cli)?;
    let manifest = match &cli.manifest {
        Some(path) => load_manifest(path)?,
        None if manifest_required => {
            return Err(PipelineError::Order("--manifest is required for this command".into()))
        }
        None => CorpusManifest { corpus_id: String::new(), entries: Vec::new(), base_dir: PathBuf::from(".") },
    };
    Pipeline::new(config, manifest, cli.offline)
}

fn mismatches(kind: &str, found: Vec<String>) -> Result<(), PipelineError> {
    for m in &found {
        eprintln!("{kind}: {m}");
    }
    println!("verify: {} mismatch(es)", found.len());
    if found.is_empty() {
        Ok(())
    } else {
        Err(PipelineError::Verification(found.len()))
    }
}

fn verify_report(p: &Pipeline) -> Result<(), PipelineError> {
    let outcome = p.verify()?;
    println!("verify: {} values checked", outcome.checked);
    mismatches(
        "mismatch",
        outcome
            .mismatches
            .iter()
            .map(|m| {
                format!(
                    "{}{}: reported {}, recomputed {}",
                    m.survey_id.as_deref().map(|s| format!("{s} ")).unwrap_or_default(),
                    m.field,
                    m.reported,
                    m.recomputed
                )
            })
            .collect(),
    )
}

fn run(cli: &Cli) -> Result<(), PipelineError> {
    match &cli.command {
        Command::Ingest => {
            let summary = pipeline(cli, true)?.ingest()?;
            println!("{summary}");
            println!("systems: {}", summary.systems.join(", "));
            if summary.topics_mined > 0 {
                println!("topics mined: {}", summary.topics_mined);
            }
        }
        Command::Decompose => {
            let p = pipeline(cli, true)?;
            let records = p.decompose()?;
            println!("decomposed {} surveys into {}", records.len(), p.out_dir.join("decomposition").display());
            if cli.verify {
                let found = p.audit_decompositions()?;
                mismatches("violation", found.into_iter().map(|(id, v)| format!("{id}: {v}")).collect())?;
            }
        }
        Command::Embed => {
            let p = pipeline(cli, true)?;
            let summary = p.embed()?;
            println!("embedded {} units into {} ({})", summary.total, p.index_path().display(), summary.digest);
            if cli.verify {
                mismatches("violation", p.audit_index()?)?;
            }
        }
        Command::Evaluate => {
            let p = pipeline(cli, true)?;
            let report = p.evaluate()?;
            println!("evaluated {} surveys into {}", report.surveys.len(), p.report_path().display());
            if cli.verify {
                verify_report(&p)?;
            }
        }
        Command::Arena => {
            let p = pipeline(cli, true)?;
            let results = p.arena()?;
            print!("{}", surveyeval::arena::render_markdown(&results));
        }
        Command::Report { format, report } => {
            let p = pipeline(cli, false)?;
            let path = report.clone().unwrap_or_else(|| p.report_path());
            let loaded = pipeline::load_report(&path)?;
            match format {
                Format::Json => print!("{}", loaded.to_json()),
                Format::Markdown => {
                    let md = render_markdown(&loaded);
                    pipeline::write_text(&md_path(&path), &md)?;
                    print!("{md}");
                }
            }
            if cli.verify {
                verify_report(&p)?;
            }
        }
        Command::Criteria { action, dimension } => {
            let p = pipeline(cli, false)?;
            match action {
                CriteriaAction::Show => {
                    for t in p.templates().templates() {
                        println!("== {} ({})\n{}\n", t.id, t.kind.as_str(), t.text.trim_end());
                    }
                }
                CriteriaAction::Generate => {
                    for line in p.criteria(dimension)? {
                        println!("- {line}");
                    }
                }
            }
        }
    }
    Ok(())
}

fn md_path(report: &Path) -> PathBuf {
    report.with_extension("md")
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
