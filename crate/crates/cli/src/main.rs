use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand, ValueEnum};
use closure_core::eval::{diagnostic_counts, execute_programs, parse_questions, run_symbolic_pipeline, score};
use closure_core::generator::{
    build_dataset, generate_questions, oversample_mix, sample_scenes, DatasetConfig, GenerationRules,
};
use closure_core::io::{read_json, write_json, PredictionSet, ProgramsFile, QuestionsFile, QuestionsInfo, ScenesFile};
use closure_core::module_net::{gradient_suite, BiasPlacement, ModuleConfig};
use closure_core::parser::QuestionParser;
use closure_core::scene::{Split, MAX_OBJECTS, MIN_SAMPLED_OBJECTS};
use closure_core::template::{builtin_templates, templates_from_json, Template, TemplateGroup};
use serde::Serialize;

#[derive(Parser)]
#[command(name = "closure", version, about = "Symbolic CLEVR/CLOSURE dataset generation, parsing and evaluation")]
struct Cli {
    /// Base seed for every random choice.
    #[arg(long, global = true, default_value_t = 0)]
    seed: u64,
    /// Output file (a directory for build-dataset). Standard output when absent.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Summary format on standard output.
    #[arg(long, global = true, value_enum, default_value_t = Format::Json)]
    format: Format,
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Format {
    Json,
    Text,
}

#[derive(Subcommand)]
enum Command {
    /// Sample a scene pool.
    GenScenes {
        #[arg(long)]
        num: usize,
        #[arg(long, default_value_t = 0)]
        start: usize,
        #[arg(long, default_value = "val")]
        split: Split,
        #[arg(long, default_value_t = MIN_SAMPLED_OBJECTS)]
        min_objects: usize,
        #[arg(long, default_value_t = MAX_OBJECTS)]
        max_objects: usize,
    },
    /// Generate balanced questions for every CLOSURE family over a scene file.
    GenQuestions {
        #[arg(long)]
        scenes: PathBuf,
        #[arg(long)]
        per_test: usize,
        /// Also generate the baseline families.
        #[arg(long)]
        baselines: bool,
        /// Extra templates (JSON) generated alongside the built-in ones.
        #[arg(long)]
        templates: Option<PathBuf>,
        #[arg(long, default_value_t = 10_000)]
        max_rejections: usize,
    },
    /// Parse question texts into programs.
    Parse {
        #[arg(long)]
        questions: PathBuf,
        #[arg(long)]
        templates: Option<PathBuf>,
    },
    /// Execute parsed programs against scenes.
    Execute {
        #[arg(long)]
        programs: PathBuf,
        #[arg(long)]
        scenes: PathBuf,
        #[arg(long, default_value = "symbolic")]
        run_id: String,
    },
    /// Parse and execute in one step.
    Pipeline {
        #[arg(long)]
        questions: PathBuf,
        #[arg(long)]
        scenes: PathBuf,
        #[arg(long)]
        templates: Option<PathBuf>,
        #[arg(long, default_value = "symbolic")]
        run_id: String,
    },
    /// Score prediction sets against a questions file.
    Evaluate {
        #[arg(long)]
        dataset: PathBuf,
        /// One prediction file per run; repeat for several runs.
        #[arg(long = "pred", required = true)]
        predictions: Vec<PathBuf>,
    },
    /// Finite-difference check of every module_net kernel.
    Gradcheck {
        #[arg(long, default_value_t = 1e-3)]
        epsilon: f64,
        /// Largest accepted relative error on smooth coordinates.
        #[arg(long, default_value_t = 1e-4)]
        threshold: f64,
        #[arg(long, default_value_t = 3)]
        channels: usize,
        #[arg(long, value_enum, default_value_t = Placement::Outer)]
        bias_placement: Placement,
    },
    /// Repeat the few-shot CLOSURE records and mix them into a base set.
    Oversample {
        #[arg(long)]
        closure: PathBuf,
        #[arg(long)]
        base: Option<PathBuf>,
        #[arg(long, default_value_t = 300)]
        factor: usize,
    },
    /// Build all three splits with the default sizes into `--out`.
    BuildDataset {
        /// JSON dataset configuration; flags below override it.
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        workers: Option<usize>,
        #[arg(long)]
        per_test_val: Option<usize>,
        #[arg(long)]
        per_test_test: Option<usize>,
        #[arg(long)]
        per_test_train: Option<usize>,
        #[arg(long)]
        no_baselines: bool,
    },
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Placement {
    Outer,
    Inner,
}

impl Command {
    fn name(&self) -> &'static str {
        match self {
            Command::GenScenes { .. } => "gen-scenes",
            Command::GenQuestions { .. } => "gen-questions",
            Command::Parse { .. } => "parse",
            Command::Execute { .. } => "execute",
            Command::Pipeline { .. } => "pipeline",
            Command::Evaluate { .. } => "evaluate",
            Command::Gradcheck { .. } => "gradcheck",
            Command::Oversample { .. } => "oversample",
            Command::BuildDataset { .. } => "build-dataset",
        }
    }
}

/// Writes `value` to `--out`, or to standard output.
fn emit<T: Serialize>(out: Option<&Path>, value: &T) -> Result<()> {
    match out {
        Some(path) => write_json(path, value)?,
        None => {
            let mut stdout = std::io::stdout().lock();
            serde_json::to_writer(&mut stdout, value)?;
            writeln!(stdout)?;
        }
    }
    Ok(())
}

fn extra_templates(path: Option<&Path>) -> Result<Vec<Template>> {
    let Some(path) = path else {
        return Ok(Vec::new());
    };
    let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    templates_from_json(&text).with_context(|| format!("loading templates from {}", path.display()))
}

fn load_questions(path: &Path) -> Result<QuestionsFile> {
    Ok(read_json(path)?)
}

fn load_scenes(path: &Path) -> Result<Vec<closure_core::scene::Scene>> {
    let file: ScenesFile = read_json(path)?;
    Ok(file.to_scenes()?)
}

fn report_predictions(cli: &Cli, set: &PredictionSet) -> Result<()> {
    if cli.out.is_some() || cli.format == Format::Text {
        let counts = diagnostic_counts(set);
        eprintln!("{} predictions, {} diagnostics {:?}", set.predictions.len(), set.diagnostics.len(), counts);
    }
    if cli.out.is_some() || cli.format == Format::Json {
        emit(cli.out.as_deref(), set)?;
    }
    Ok(())
}

fn run(cli: &Cli) -> Result<()> {
    let out = cli.out.as_deref();
    match &cli.command {
        Command::GenScenes { num, start, split, min_objects, max_objects } => {
            let scenes = sample_scenes(cli.seed, *start, *num, *min_objects, *max_objects, *split)?;
            emit(out, &ScenesFile::from_scenes(*split, cli.seed, &scenes))?;
        }
        Command::GenQuestions { scenes, per_test, baselines, templates, max_rejections } => {
            let file: ScenesFile = read_json(scenes)?;
            let pool = file.to_scenes()?;
            let mut chosen: Vec<Template> =
                builtin_templates().into_iter().filter(|t| *baselines || t.group() == TemplateGroup::Closure).collect();
            chosen.extend(extra_templates(templates.as_deref())?);
            let rules = GenerationRules { max_rejections_per_question: *max_rejections, ..GenerationRules::default() };
            let (questions, stats) = generate_questions(&chosen, &pool, *per_test, cli.seed, &rules)?;
            eprintln!("{}", serde_json::to_string(&stats)?);
            let info = QuestionsInfo { split: file.info.split, seed: cli.seed };
            emit(out, &QuestionsFile { info, questions })?;
        }
        Command::Parse { questions, templates } => {
            let parser = QuestionParser::with_extra(extra_templates(templates.as_deref())?);
            let programs = parse_questions(&parser, &load_questions(questions)?.questions);
            emit(out, &programs)?;
        }
        Command::Execute { programs, scenes, run_id } => {
            let programs: ProgramsFile = read_json(programs)?;
            let set = execute_programs(&programs, &load_scenes(scenes)?, run_id);
            report_predictions(cli, &set)?;
        }
        Command::Pipeline { questions, scenes, templates, run_id } => {
            let parser = QuestionParser::with_extra(extra_templates(templates.as_deref())?);
            let questions = load_questions(questions)?.questions;
            let set = run_symbolic_pipeline(&parser, &questions, &load_scenes(scenes)?, run_id);
            report_predictions(cli, &set)?;
        }
        Command::Evaluate { dataset, predictions } => {
            let dataset = load_questions(dataset)?.questions;
            let runs = predictions.iter().map(|p| Ok(read_json(p)?)).collect::<Result<Vec<PredictionSet>>>()?;
            let report = score(&dataset, &runs)?;
            match (out, cli.format) {
                (Some(path), _) => {
                    write_json(path, &report)?;
                    print!("{}", report.to_table());
                }
                (None, Format::Json) => {
                    emit(None, &report)?;
                    eprint!("{}", report.to_table());
                }
                (None, Format::Text) => print!("{}", report.to_table()),
            }
        }
        Command::Gradcheck { epsilon, threshold, channels, bias_placement } => {
            let bias_placement = match bias_placement {
                Placement::Outer => BiasPlacement::Outer,
                Placement::Inner => BiasPlacement::Inner,
            };
            let config = ModuleConfig { channels: *channels, blocks: 2, bias_placement, ..ModuleConfig::default() };
            let results = gradient_suite(config, cli.seed, *epsilon)?;
            let failed: Vec<&str> = results
                .iter()
                .filter(|r| r.report.max_relative_error.is_nan() || r.report.max_relative_error >= *threshold)
                .map(|r| r.name.as_str())
                .collect();
            if cli.format == Format::Text {
                for r in &results {
                    println!(
                        "{:<24} max rel {:.3e}  coords {:>5}  kinks {:>3}",
                        r.name, r.report.max_relative_error, r.report.coordinates, r.report.kinks
                    );
                }
            } else {
                emit(out, &results)?;
            }
            if !failed.is_empty() {
                bail!("gradient check above {threshold:e}: {}", failed.join(", "));
            }
        }
        Command::Oversample { closure, base, factor } => {
            let few_shot = load_questions(closure)?;
            let base = match base {
                Some(path) => load_questions(path)?.questions,
                None => Vec::new(),
            };
            let questions = oversample_mix(&few_shot.questions, &base, *factor, cli.seed);
            let info = QuestionsInfo { split: few_shot.info.split, seed: cli.seed };
            emit(out, &QuestionsFile { info, questions })?;
        }
        Command::BuildDataset { config, workers, per_test_val, per_test_test, per_test_train, no_baselines } => {
            let Some(dir) = out else {
                bail!("build-dataset needs --out <directory>");
            };
            let mut settings: DatasetConfig = match config {
                Some(path) => read_json(path)?,
                None => DatasetConfig::default(),
            };
            settings.seed = cli.seed;
            settings.workers = workers.or(settings.workers);
            settings.per_test_val = per_test_val.unwrap_or(settings.per_test_val);
            settings.per_test_test = per_test_test.unwrap_or(settings.per_test_test);
            settings.per_test_train = per_test_train.unwrap_or(settings.per_test_train);
            settings.baselines &= !no_baselines;
            let splits = build_dataset(&settings, dir)?;
            let summary: Vec<serde_json::Value> = splits
                .iter()
                .map(|s| {
                    serde_json::json!({
                        "split": s.split,
                        "scenes": s.scenes.len(),
                        "questions": s.questions.len(),
                        "stats": s.stats,
                    })
                })
                .collect();
            let mut stdout = std::io::stdout().lock();
            serde_json::to_writer(&mut stdout, &summary)?;
            writeln!(stdout)?;
        }
    }
    Ok(())
}

/// The error chain on one line; causes already quoted by their parent are skipped.
fn describe(error: &anyhow::Error) -> String {
    let mut message = String::new();
    for cause in error.chain() {
        let text = cause.to_string();
        if !message.contains(&text) {
            if !message.is_empty() {
                message.push_str(": ");
            }
            message.push_str(&text);
        }
    }
    message
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) if !e.use_stderr() => {
            print!("{e}");
            return ExitCode::SUCCESS;
        }
        Err(e) => {
            let line =
                serde_json::json!({ "error": { "command": null, "kind": "usage", "message": e.to_string().trim() } });
            eprintln!("{line}");
            return ExitCode::from(2);
        }
    };
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            let line = serde_json::json!({
                "error": { "command": cli.command.name(), "kind": "failure", "message": describe(&e) }
            });
            eprintln!("{line}");
            ExitCode::FAILURE
        }
    }
}
