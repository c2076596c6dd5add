//! Question generation: scene-guided slot filling, rejection of ill-posed or
//! degenerate candidates, answer balancing and dataset assembly.

use std::collections::BTreeMap;
use std::fmt;
use std::path::Path;

use rand::seq::{IndexedRandom, SliceRandom};
use rand::{Rng, SeedableRng};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dsl::{validate, Function};
use crate::executor::{execute, is_degenerate, Answer, ExecError};
use crate::io::{write_json, IoError, QAInstance, QuestionsFile, QuestionsInfo, ScenesFile};
use crate::rng::{derive_seed, stable_hash, StreamRng};
use crate::scene::{sample_scene, AttributeValue, ObjectSet, Property, Scene, SceneError, Split, MAX_OBJECTS};
use crate::template::{
    builtin_templates, AnswerKind, Noun, SkeletonOp, SlotBinding, SlotId, SlotKind, SlotValue, Template, TemplateGroup,
};

/// Why a candidate question was discarded.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Reject {
    UniqueViolation,
    Degenerate,
    AnswerDisallowed,
    NoBindingFound,
}

impl fmt::Display for Reject {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Reject::UniqueViolation => "unique_violation",
            Reject::Degenerate => "degenerate",
            Reject::AnswerDisallowed => "answer_disallowed",
            Reject::NoBindingFound => "no_binding_found",
        })
    }
}

#[derive(Debug, Error)]
pub enum GenerateError {
    #[error("{family}: rejection budget of {budget} candidates exhausted with answer counts {achieved:?}")]
    BudgetExhausted { family: String, budget: usize, achieved: BTreeMap<String, usize> },
    #[error("no scenes to generate from")]
    NoScenes,
    #[error("invalid config: {0}")]
    Config(String),
    #[error(transparent)]
    Scene(#[from] SceneError),
    #[error(transparent)]
    Io(#[from] IoError),
}

/// Target answer distribution for one family.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BalancePolicy {
    pub targets: BTreeMap<Answer, f64>,
    pub tolerance: f64,
}

impl BalancePolicy {
    /// Uniform over the allowed counts for counting families, yes/no at
    /// 1/2, and for attribute questions each property 1/4 split evenly over
    /// its values.
    pub fn for_template(template: &Template, counting_answers: &[usize], tolerance: f64) -> BalancePolicy {
        let mut targets = BTreeMap::new();
        match template.answer_kind() {
            AnswerKind::Integer => {
                for &n in counting_answers {
                    targets.insert(Answer::from_text(&n.to_string()), 1.0 / counting_answers.len() as f64);
                }
            }
            AnswerKind::Boolean => {
                targets.insert(Answer::from_text("yes"), 0.5);
                targets.insert(Answer::from_text("no"), 0.5);
            }
            AnswerKind::Attribute => {
                for &p in Property::ALL {
                    let values = AttributeValue::values_of(p);
                    for v in &values {
                        let share = 1.0 / (Property::ALL.len() * values.len()) as f64;
                        targets.insert(Answer::from_text(v.word()), share);
                    }
                }
            }
        }
        BalancePolicy { targets, tolerance }
    }

    /// Largest count of each answer among `n` accepted questions.
    pub fn caps(&self, n: usize) -> BTreeMap<Answer, usize> {
        self.targets.iter().map(|(a, &t)| (a.clone(), (t * n as f64 - 1e-9).ceil().max(0.0) as usize)).collect()
    }

    /// Answers whose empirical frequency strays beyond the tolerance.
    pub fn violations(&self, answers: &[Answer]) -> Vec<(Answer, f64)> {
        if answers.is_empty() {
            return vec![];
        }
        let mut counts: BTreeMap<&Answer, usize> = BTreeMap::new();
        for a in answers {
            *counts.entry(a).or_default() += 1;
        }
        let n = answers.len() as f64;
        let mut out = Vec::new();
        for (a, &t) in &self.targets {
            let freq = counts.get(a).copied().unwrap_or(0) as f64 / n;
            if (freq - t).abs() > self.tolerance {
                out.push((a.clone(), freq));
            }
        }
        for (a, &c) in &counts {
            if !self.targets.contains_key(*a) {
                out.push(((*a).clone(), c as f64 / n));
            }
        }
        out
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct GenerationStats {
    pub candidates: usize,
    pub accepted: usize,
    pub over_quota: usize,
    pub rejected: BTreeMap<Reject, usize>,
}

impl GenerationStats {
    fn merge(&mut self, other: &GenerationStats) {
        self.candidates += other.candidates;
        self.accepted += other.accepted;
        self.over_quota += other.over_quota;
        for (&r, &c) in &other.rejected {
            *self.rejected.entry(r).or_default() += c;
        }
    }
}

#[derive(Clone, Copy)]
enum Partial {
    Set(ObjectSet),
    Object(usize),
    Done,
}

fn empty_value(kind: SlotKind) -> SlotValue {
    match kind {
        SlotKind::Z => SlotValue::Size(None),
        SlotKind::C => SlotValue::Color(None),
        SlotKind::M => SlotValue::Material(None),
        _ => SlotValue::Noun(Noun::Thing),
    }
}

/// Values an adjective/noun slot may take under the current binding.
fn slot_options(template: &Template, binding: &SlotBinding, slot: SlotId) -> Vec<SlotValue> {
    if let Some(v) = binding.get(slot) {
        return vec![v];
    }
    let property = slot.kind.described_property().expect("adjective or noun slot");
    let mut options = match slot.kind {
        SlotKind::S => vec![SlotValue::Noun(Noun::Thing), SlotValue::Noun(Noun::Object)],
        kind => vec![empty_value(kind)],
    };
    if !template.must_be_empty(binding, slot) {
        for value in AttributeValue::values_of(property) {
            options.push(match value {
                AttributeValue::Size(v) => SlotValue::Size(Some(v)),
                AttributeValue::Color(v) => SlotValue::Color(Some(v)),
                AttributeValue::Material(v) => SlotValue::Material(Some(v)),
                AttributeValue::Shape(v) => SlotValue::Noun(Noun::Shape(v)),
            });
        }
    }
    options
}

fn apply_filter(scene: &Scene, set: ObjectSet, value: SlotValue) -> ObjectSet {
    match value.filter_value() {
        Some(v) => scene.filter(set, v),
        None => set,
    }
}

/// Every assignment of `slots` that narrows `set` to exactly one object.
fn singleton_assignments(
    template: &Template,
    binding: &SlotBinding,
    scene: &Scene,
    slots: &[SlotId],
    set: ObjectSet,
    prefix: &mut Vec<SlotValue>,
    out: &mut Vec<Vec<SlotValue>>,
) {
    let Some((&slot, rest)) = slots.split_first() else {
        if set.len() == 1 {
            out.push(prefix.clone());
        }
        return;
    };
    for value in slot_options(template, binding, slot) {
        let narrowed = apply_filter(scene, set, value);
        if narrowed.is_empty() {
            continue;
        }
        prefix.push(value);
        singleton_assignments(template, binding, scene, rest, narrowed, prefix, out);
        prefix.pop();
    }
}

/// Second filling stage, guided by the scene: every filter chain feeding
/// `unique` is chosen uniformly among the descriptions that pick out exactly
/// one object; other adjectives are random.
pub fn guided_binding<R: Rng + ?Sized>(template: &Template, scene: &Scene, rng: &mut R) -> Result<SlotBinding, Reject> {
    let mut binding = template.fill_properties(rng);
    let nodes = template.nodes();
    let mut feeds_unique = vec![false; nodes.len()];
    for node in nodes {
        if node.op == SkeletonOp::Fixed(Function::Unique) {
            feeds_unique[node.inputs[0]] = true;
        }
    }
    let mut values: Vec<Partial> = Vec::with_capacity(nodes.len());
    for (i, node) in nodes.iter().enumerate() {
        let input = |k: usize| values[node.inputs[k]];
        let set_input = |k: usize| match input(k) {
            Partial::Set(s) => s,
            _ => unreachable!("skeleton type-checked"),
        };
        let object_input = |k: usize| match input(k) {
            Partial::Object(o) => o,
            _ => unreachable!("skeleton type-checked"),
        };
        let value = match &node.op {
            SkeletonOp::Fixed(Function::Scene) => Partial::Set(scene.all_objects()),
            SkeletonOp::Fixed(Function::Unique) => match set_input(0).only() {
                Some(o) => Partial::Object(o),
                None => return Err(Reject::UniqueViolation),
            },
            SkeletonOp::Fixed(Function::Union) => Partial::Set(set_input(0).union(set_input(1))),
            SkeletonOp::Fixed(Function::Intersect) => Partial::Set(set_input(0).intersect(set_input(1))),
            SkeletonOp::Fixed(_) | SkeletonOp::Query(_) | SkeletonOp::Equal(_) => Partial::Done,
            SkeletonOp::Filter(slots) => {
                let set = set_input(0);
                if feeds_unique[i] {
                    let mut options = Vec::new();
                    singleton_assignments(template, &binding, scene, slots, set, &mut Vec::new(), &mut options);
                    let chosen = options.choose(rng).ok_or(Reject::NoBindingFound)?;
                    for (&slot, &value) in slots.iter().zip(chosen) {
                        binding.set(slot, value).expect("option fits slot");
                    }
                } else {
                    for &slot in slots {
                        if binding.get(slot).is_none() {
                            let value = template.random_value(&binding, slot, rng);
                            binding.set(slot, value).expect("value fits slot");
                        }
                    }
                }
                let narrowed =
                    slots.iter().fold(set, |s, &slot| apply_filter(scene, s, binding.get(slot).expect("bound")));
                Partial::Set(narrowed)
            }
            SkeletonOp::Relate(slot) => {
                if binding.get(*slot).is_none() {
                    let value = template.random_value(&binding, *slot, rng);
                    binding.set(*slot, value).expect("value fits slot");
                }
                let direction = binding.direction(*slot).expect("bound");
                Partial::Set(scene.spatial_set(object_input(0), direction).expect("object from this scene"))
            }
            SkeletonOp::Same(slot) => {
                let property = binding.property(*slot).expect("filled in the first stage");
                Partial::Set(scene.match_set(object_input(0), property).expect("object from this scene"))
            }
        };
        values.push(value);
    }
    Ok(binding)
}

/// One candidate question about `scene`, or the reason it was discarded.
pub fn generate_instance<R: Rng + ?Sized>(
    template: &Template,
    scene: &Scene,
    counting_answers: &[usize],
    rng: &mut R,
) -> Result<QAInstance, Reject> {
    let binding = guided_binding(template, scene, rng)?;
    let program = template.instantiate_program(&binding).expect("binding is total");
    let typed = validate(&program).expect("builtin skeletons validate");
    let answer = match execute(&typed, scene) {
        Ok(a) => a,
        Err(ExecError::UniqueViolation { .. }) => return Err(Reject::UniqueViolation),
        Err(e) => unreachable!("validated program on a valid scene: {e}"),
    };
    if is_degenerate(&typed, scene).expect("program executed") {
        return Err(Reject::Degenerate);
    }
    if template.is_counting() && !counting_answers.iter().any(|n| n.to_string() == answer.as_str()) {
        return Err(Reject::AnswerDisallowed);
    }
    let question = template.render_text(&binding, rng).expect("binding is total");
    Ok(QAInstance {
        image_index: scene.scene_index,
        question,
        program,
        answer,
        family: template.family().to_string(),
        split: scene.split,
    })
}

/// Candidates are drawn in parallel chunks and accepted in candidate order.
const CHUNK: usize = 2048;

/// `n` balanced questions. Candidate `k` uses its own stream derived from
/// `(seed, k)` and picks its own scene, so the result does not depend on
/// the number of worker threads.
pub fn generate_balanced(
    template: &Template,
    scenes: &[Scene],
    policy: &BalancePolicy,
    counting_answers: &[usize],
    n: usize,
    seed: u64,
    max_rejections_per_question: usize,
) -> Result<(Vec<QAInstance>, GenerationStats), GenerateError> {
    let mut stats = GenerationStats::default();
    if n == 0 {
        return Ok((Vec::new(), stats));
    }
    if scenes.is_empty() {
        return Err(GenerateError::NoScenes);
    }
    let caps = policy.caps(n);
    let mut counts: BTreeMap<Answer, usize> = BTreeMap::new();
    let mut accepted = Vec::with_capacity(n);
    let budget = n.saturating_mul(max_rejections_per_question.max(1));
    let mut next = 0usize;
    while accepted.len() < n {
        if next >= budget {
            return Err(GenerateError::BudgetExhausted {
                family: template.family().to_string(),
                budget,
                achieved: counts.into_iter().map(|(a, c)| (a.to_string(), c)).collect(),
            });
        }
        let end = (next + CHUNK).min(budget);
        let batch: Vec<Result<QAInstance, Reject>> = (next..end)
            .into_par_iter()
            .map(|k| {
                let mut rng = StreamRng::seed_from_u64(derive_seed(seed, k as u64, 0xCA4D));
                let scene = scenes.choose(&mut rng).expect("non-empty");
                generate_instance(template, scene, counting_answers, &mut rng)
            })
            .collect();
        for candidate in batch {
            stats.candidates += 1;
            match candidate {
                Err(reason) => *stats.rejected.entry(reason).or_default() += 1,
                Ok(instance) => {
                    let cap = caps.get(&instance.answer).copied().unwrap_or(0);
                    let count = counts.entry(instance.answer.clone()).or_default();
                    if *count >= cap {
                        stats.over_quota += 1;
                        continue;
                    }
                    *count += 1;
                    stats.accepted += 1;
                    accepted.push(instance);
                    if accepted.len() == n {
                        break;
                    }
                }
            }
        }
        next = end;
    }
    Ok((accepted, stats))
}

/// Questions for every template over one scene pool, in template order.
pub fn generate_questions(
    templates: &[Template],
    scenes: &[Scene],
    per_family: usize,
    seed: u64,
    rules: &GenerationRules,
) -> Result<(Vec<QAInstance>, GenerationStats), GenerateError> {
    let split_code = scenes.first().map_or(0, |s| s.split as u64);
    let results: Vec<Result<(Vec<QAInstance>, GenerationStats), GenerateError>> = templates
        .par_iter()
        .map(|t| {
            let policy = BalancePolicy::for_template(t, &rules.counting_answers, rules.tolerance);
            let family_seed = derive_seed(seed, stable_hash(t.family()), split_code);
            generate_balanced(
                t,
                scenes,
                &policy,
                &rules.counting_answers,
                per_family,
                family_seed,
                rules.max_rejections_per_question,
            )
        })
        .collect();
    let mut questions = Vec::new();
    let mut stats = GenerationStats::default();
    for r in results {
        let (q, s) = r?;
        questions.extend(q);
        stats.merge(&s);
    }
    Ok((questions, stats))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GenerationRules {
    pub counting_answers: Vec<usize>,
    pub tolerance: f64,
    pub max_rejections_per_question: usize,
}

impl Default for GenerationRules {
    fn default() -> Self {
        GenerationRules { counting_answers: vec![1, 2, 3], tolerance: 0.035, max_rejections_per_question: 10_000 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DatasetConfig {
    pub per_test_val: usize,
    pub per_test_test: usize,
    pub per_test_train: usize,
    pub seed: u64,
    pub counting_answers: Vec<usize>,
    pub max_rejections_per_question: usize,
    pub tolerance: f64,
    pub val_scenes: usize,
    pub test_scenes: usize,
    pub train_scenes: usize,
    pub min_objects: usize,
    pub max_objects: usize,
    /// Also emit the baseline families in the validation split.
    pub baselines: bool,
    /// Worker threads; `None` uses every core. Output does not depend on it.
    pub workers: Option<usize>,
}

impl Default for DatasetConfig {
    fn default() -> Self {
        DatasetConfig {
            per_test_val: 3600,
            per_test_test: 3600,
            per_test_train: 36,
            seed: 0,
            counting_answers: vec![1, 2, 3],
            max_rejections_per_question: 10_000,
            tolerance: 0.035,
            val_scenes: 5000,
            test_scenes: 5000,
            train_scenes: 1000,
            min_objects: 3,
            max_objects: 10,
            baselines: true,
            workers: None,
        }
    }
}

impl DatasetConfig {
    pub fn validate(&self) -> Result<(), GenerateError> {
        if let Some(&bad) = self.counting_answers.iter().find(|&&n| n > MAX_OBJECTS) {
            return Err(GenerateError::Config(format!("counting answer {bad} is outside 0..={MAX_OBJECTS}")));
        }
        if self.counting_answers.is_empty() {
            return Err(GenerateError::Config("counting_answers is empty".into()));
        }
        if self.tolerance.is_nan() || self.tolerance <= 0.0 {
            return Err(GenerateError::Config("tolerance must be positive".into()));
        }
        if self.workers == Some(0) {
            return Err(GenerateError::Config("workers must be at least 1".into()));
        }
        Ok(())
    }

    pub fn rules(&self) -> GenerationRules {
        let mut counting_answers = self.counting_answers.clone();
        counting_answers.sort_unstable();
        counting_answers.dedup();
        GenerationRules {
            counting_answers,
            tolerance: self.tolerance,
            max_rejections_per_question: self.max_rejections_per_question,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SplitData {
    pub split: Split,
    pub scenes: Vec<Scene>,
    pub questions: Vec<QAInstance>,
    pub stats: GenerationStats,
}

/// Scenes with consecutive indices `start..start + count`.
pub fn sample_scenes(
    seed: u64,
    start: usize,
    count: usize,
    min_objects: usize,
    max_objects: usize,
    split: Split,
) -> Result<Vec<Scene>, SceneError> {
    (start..start + count).into_par_iter().map(|i| sample_scene(seed, i, min_objects, max_objects, split)).collect()
}

/// The three splits in memory. Scene pools are disjoint index ranges:
/// validation first, then test, then train.
pub fn generate_dataset(config: &DatasetConfig) -> Result<Vec<SplitData>, GenerateError> {
    config.validate()?;
    let run = || {
        let rules = config.rules();
        let all = builtin_templates();
        let closure: Vec<Template> = all.iter().filter(|t| t.group() == TemplateGroup::Closure).cloned().collect();
        let plan = [
            (Split::Val, 0, config.val_scenes, config.per_test_val),
            (Split::Test, config.val_scenes, config.test_scenes, config.per_test_test),
            (Split::Train, config.val_scenes + config.test_scenes, config.train_scenes, config.per_test_train),
        ];
        let mut out = Vec::new();
        for (split, start, count, per_family) in plan {
            let scenes = sample_scenes(config.seed, start, count, config.min_objects, config.max_objects, split)?;
            let templates = if split == Split::Val && config.baselines { &all } else { &closure };
            let (questions, stats) = generate_questions(templates, &scenes, per_family, config.seed, &rules)?;
            out.push(SplitData { split, scenes, questions, stats });
        }
        Ok(out)
    };
    match config.workers {
        None => run(),
        Some(w) => rayon::ThreadPoolBuilder::new()
            .num_threads(w)
            .build()
            .map_err(|e| GenerateError::Config(e.to_string()))?
            .install(run),
    }
}

/// Writes `scenes_{split}.json` and `questions_{split}.json` into `out_dir`.
pub fn build_dataset(config: &DatasetConfig, out_dir: &Path) -> Result<Vec<SplitData>, GenerateError> {
    let splits = generate_dataset(config)?;
    for data in &splits {
        let scenes = ScenesFile::from_scenes(data.split, config.seed, &data.scenes);
        write_json(&out_dir.join(format!("scenes_{}.json", data.split)), &scenes)?;
        let questions = QuestionsFile {
            info: QuestionsInfo { split: data.split, seed: config.seed },
            questions: data.questions.clone(),
        };
        write_json(&out_dir.join(format!("questions_{}.json", data.split)), &questions)?;
    }
    Ok(splits)
}

/// Each CLOSURE record repeated `factor` times, appended to `base`, then
/// shuffled with a stream derived from `seed`.
pub fn oversample_mix<T: Clone>(closure: &[T], base: &[T], factor: usize, seed: u64) -> Vec<T> {
    let mut out: Vec<T> = Vec::with_capacity(closure.len() * factor + base.len());
    for _ in 0..factor {
        out.extend_from_slice(closure);
    }
    out.extend_from_slice(base);
    let mut rng = StreamRng::seed_from_u64(derive_seed(seed, 0x0515, 0));
    out.shuffle(&mut rng);
    out
}
