//! Scoring predictions per family and the parse-then-execute pipeline.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fmt::Write as _;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dsl::{validate, Program};
use crate::executor::{execute, Answer, ExecError};
use crate::io::{Diagnostic, Failure, Prediction, PredictionSet, ProgramRecord, ProgramsFile, QAInstance};
use crate::parser::{ParseError, QuestionParser};
use crate::scene::Scene;

/// Answer recorded when a question could not be answered. It never equals
/// a ground-truth answer, so such questions score as wrong.
pub const NO_ANSWER: &str = "<no-answer>";

#[derive(Debug, Error, Clone, PartialEq)]
pub enum EvalError {
    #[error("predictions reference unknown question indices: {}", list_offenders(.0))]
    UnknownIndices(Vec<(String, usize)>),
    #[error("run {run_id}: question {question_index} is predicted more than once")]
    DuplicateIndex { run_id: String, question_index: usize },
}

fn list_offenders(offenders: &[(String, usize)]) -> String {
    offenders.iter().map(|(run, i)| format!("{run}:{i}")).collect::<Vec<_>>().join(", ")
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunAccuracy {
    pub run_id: String,
    pub correct: usize,
    pub scored: usize,
    pub accuracy: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FamilyAccuracy {
    pub family: String,
    pub runs: Vec<RunAccuracy>,
    pub mean: f64,
    /// Sample standard deviation; absent with fewer than two runs.
    pub std: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AccuracyReport {
    pub families: Vec<FamilyAccuracy>,
}

/// Mean and sample standard deviation (`n - 1` denominator).
pub fn mean_std(values: &[f64]) -> (f64, Option<f64>) {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let std = (values.len() >= 2).then(|| (values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt());
    (mean, std)
}

impl AccuracyReport {
    pub fn family(&self, family: &str) -> Option<&FamilyAccuracy> {
        self.families.iter().find(|f| f.family == family)
    }

    /// Percentages as `mean ± std`, one row per family.
    pub fn to_table(&self) -> String {
        let width = self.families.iter().map(|f| f.family.len()).max().unwrap_or(6).max(6);
        let mut out = format!("{:<width$}  {:>4}  {:>9}  accuracy (%)\n", "family", "runs", "scored");
        for family in &self.families {
            let scored: usize = family.runs.iter().map(|r| r.scored).sum();
            let accuracy = match family.std {
                Some(std) => format!("{:.1} ± {:.1}", 100.0 * family.mean, 100.0 * std),
                None => format!("{:.1}", 100.0 * family.mean),
            };
            let _ = writeln!(out, "{:<width$}  {:>4}  {:>9}  {accuracy}", family.family, family.runs.len(), scored);
        }
        out
    }
}

/// Scores every run against the dataset by exact match of canonical
/// answers, grouped by template family. Families a run never touches are
/// left out of that run.
pub fn score(dataset: &[QAInstance], predictions: &[PredictionSet]) -> Result<AccuracyReport, EvalError> {
    let offenders: Vec<(String, usize)> = predictions
        .iter()
        .flat_map(|set| {
            set.predictions
                .iter()
                .filter(|p| p.question_index >= dataset.len())
                .map(move |p| (set.run_id.clone(), p.question_index))
        })
        .collect();
    if !offenders.is_empty() {
        return Err(EvalError::UnknownIndices(offenders));
    }
    // family -> run position -> (correct, scored)
    let mut tallies: BTreeMap<&str, BTreeMap<usize, (usize, usize)>> = BTreeMap::new();
    for (run, set) in predictions.iter().enumerate() {
        let mut seen = BTreeSet::new();
        for p in &set.predictions {
            if !seen.insert(p.question_index) {
                return Err(EvalError::DuplicateIndex { run_id: set.run_id.clone(), question_index: p.question_index });
            }
            let truth = &dataset[p.question_index];
            let entry = tallies.entry(&truth.family).or_default().entry(run).or_default();
            entry.1 += 1;
            if Answer::from_text(p.answer.as_str()) == Answer::from_text(truth.answer.as_str()) {
                entry.0 += 1;
            }
        }
    }
    let families = tallies
        .into_iter()
        .map(|(family, runs)| {
            let runs: Vec<RunAccuracy> = runs
                .into_iter()
                .map(|(run, (correct, scored))| RunAccuracy {
                    run_id: predictions[run].run_id.clone(),
                    correct,
                    scored,
                    accuracy: correct as f64 / scored as f64,
                })
                .collect();
            let (mean, std) = mean_std(&runs.iter().map(|r| r.accuracy).collect::<Vec<_>>());
            FamilyAccuracy { family: family.to_string(), runs, mean, std }
        })
        .collect();
    Ok(AccuracyReport { families })
}

fn parse_failure(error: &ParseError) -> Failure {
    let kind = match error {
        ParseError::NoParse { .. } => "no_parse",
        ParseError::AmbiguousParse { .. } => "ambiguous_parse",
        ParseError::Template(_) => "template_error",
    };
    Failure { kind: kind.into(), message: error.to_string() }
}

/// Parses every question; failures are recorded per question.
pub fn parse_questions(parser: &QuestionParser, questions: &[QAInstance]) -> ProgramsFile {
    let texts: Vec<&str> = questions.iter().map(|q| q.question.as_str()).collect();
    let programs = parser
        .batch_parse(&texts)
        .into_iter()
        .zip(questions)
        .enumerate()
        .map(|(question_index, (parsed, q))| match parsed {
            Ok(r) => ProgramRecord {
                question_index,
                image_index: q.image_index,
                family: Some(r.family),
                program: Some(r.program),
                error: None,
            },
            Err(e) => ProgramRecord {
                question_index,
                image_index: q.image_index,
                family: None,
                program: None,
                error: Some(parse_failure(&e)),
            },
        })
        .collect();
    ProgramsFile { programs }
}

fn run_program(program: &Program, image_index: usize, scenes: &HashMap<usize, &Scene>) -> Result<Answer, Failure> {
    let scene = scenes.get(&image_index).ok_or_else(|| Failure {
        kind: "unknown_image".into(),
        message: format!("no scene with image_index {image_index}"),
    })?;
    let typed = validate(program).map_err(|e| Failure { kind: "invalid_program".into(), message: e.to_string() })?;
    execute(&typed, scene).map_err(|e| Failure {
        kind: match e {
            ExecError::UniqueViolation { .. } => "unique_violation",
            _ => "execution_error",
        }
        .into(),
        message: e.to_string(),
    })
}

/// Executes parsed programs; records without a program, and programs that
/// fail, get the [`NO_ANSWER`] sentinel and a diagnostic.
pub fn execute_programs(programs: &ProgramsFile, scenes: &[Scene], run_id: &str) -> PredictionSet {
    let by_index: HashMap<usize, &Scene> = scenes.iter().map(|s| (s.scene_index, s)).collect();
    let outcomes: Vec<(Prediction, Option<Diagnostic>)> = programs
        .programs
        .par_iter()
        .map(|record| {
            let result = match (&record.program, &record.error) {
                (_, Some(failure)) => Err(failure.clone()),
                (Some(program), None) => run_program(program, record.image_index, &by_index),
                (None, None) => {
                    Err(Failure { kind: "missing_program".into(), message: "record has no program".into() })
                }
            };
            match result {
                Ok(answer) => (Prediction { question_index: record.question_index, answer }, None),
                Err(failure) => (
                    Prediction { question_index: record.question_index, answer: Answer::from_text(NO_ANSWER) },
                    Some(Diagnostic {
                        question_index: record.question_index,
                        kind: failure.kind,
                        message: failure.message,
                    }),
                ),
            }
        })
        .collect();
    let (predictions, diagnostics): (Vec<_>, Vec<_>) = outcomes.into_iter().unzip();
    PredictionSet { run_id: run_id.to_string(), predictions, diagnostics: diagnostics.into_iter().flatten().collect() }
}

/// Parse, then execute, every question.
pub fn run_symbolic_pipeline(
    parser: &QuestionParser,
    questions: &[QAInstance],
    scenes: &[Scene],
    run_id: &str,
) -> PredictionSet {
    execute_programs(&parse_questions(parser, questions), scenes, run_id)
}

/// Tally of diagnostic kinds.
pub fn diagnostic_counts(set: &PredictionSet) -> BTreeMap<String, usize> {
    let mut counts = BTreeMap::new();
    for d in &set.diagnostics {
        *counts.entry(d.kind.clone()).or_insert(0) += 1;
    }
    counts
}
