//! Dataset files and the generate / validate / solve / augment / export pipeline.

use std::collections::{BTreeMap, BTreeSet};
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::answers::{
    build_answer_set, classify, diff_rows, satisfies_e, AnswerConfig, AnswerError, AnswerOption,
    AnswerSet, ViolationKind, ViolationLabel,
};
use crate::augment::{
    augment_instance, AugmentConfig, AugmentError, CandidateProvider, ItemRef, Review, Verdict,
};
use crate::dsl::{parse_phenomenon, serialize_phenomenon, DslError};
use crate::grammar::PhenomenonGrammar;
use crate::instance::BlmInstance;
use crate::realize::{
    check_item, realize_context, template_id, ContextSequence, LexicalizationMode, RealizeError,
    RealizedItem,
};
use crate::seed;
use crate::solver::{solve, Confidence, SolveError, VerifyFailure};
use crate::template::{build_template, Operator, Shape, TemplateError, TemplateMatrix};

pub const FORMAT_VERSION: &str = "blm-dataset/1";
pub const TOOL_VERSION: &str = env!("CARGO_PKG_VERSION");

#[derive(Debug, Error)]
pub enum DatasetError {
    #[error("configuration error: {0}")]
    Config(String),
    #[error("cannot read {path}: {source}")]
    Read {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("malformed dataset: {0}")]
    Schema(String),
    #[error("phenomenon: {0}")]
    Dsl(#[from] DslError),
    #[error(transparent)]
    Template(#[from] TemplateError),
    #[error("instance {index} (seed {seed}): {message}")]
    Instance {
        index: usize,
        seed: u64,
        message: String,
    },
    #[error(transparent)]
    Augment(#[from] AugmentError),
    #[error("dataset has no answers section")]
    NoAnswers,
}

fn default_attempts() -> usize {
    8
}

/// Everything needed to regenerate a dataset.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GenerationConfig {
    /// Path of the `.blm` file, relative to the config file.
    pub phenomenon: PathBuf,
    pub count: usize,
    pub seed: u64,
    pub operators: Vec<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub output: Option<PathBuf>,
    #[serde(default)]
    pub lexicalization: LexicalizationMode,
    /// Redraws per instance when the uniqueness gate or realization fails.
    #[serde(default = "default_attempts")]
    pub max_attempts: usize,
    pub shape: Shape,
    #[serde(default)]
    pub answers: AnswerConfig,
    /// Directory relative paths are resolved against; not serialized.
    #[serde(skip)]
    pub base_dir: Option<PathBuf>,
}

impl GenerationConfig {
    pub fn from_toml(text: &str) -> Result<Self, DatasetError> {
        toml::from_str(text).map_err(|e| DatasetError::Config(e.to_string()))
    }

    /// Load a TOML config; the phenomenon path is resolved against the config's
    /// directory.
    pub fn load(path: &Path) -> Result<Self, DatasetError> {
        let text = std::fs::read_to_string(path).map_err(|source| DatasetError::Read {
            path: path.to_path_buf(),
            source,
        })?;
        let mut cfg = Self::from_toml(&text)?;
        cfg.base_dir = path.parent().map(Path::to_path_buf);
        Ok(cfg)
    }

    pub fn resolve(&self, path: &Path) -> PathBuf {
        match &self.base_dir {
            Some(dir) if path.is_relative() => dir.join(path),
            _ => path.to_path_buf(),
        }
    }

    pub fn phenomenon_path(&self) -> PathBuf {
        self.resolve(&self.phenomenon)
    }

    pub fn parse_operators(&self) -> Result<Vec<Operator>, DatasetError> {
        self.operators
            .iter()
            .map(|s| s.parse::<Operator>().map_err(DatasetError::from))
            .collect()
    }

    pub fn check(&self) -> Result<(), DatasetError> {
        self.shape
            .validate()
            .map_err(|e| DatasetError::Config(e.to_string()))?;
        if self.max_attempts == 0 {
            return Err(DatasetError::Config("max_attempts must be at least 1".into()));
        }
        self.parse_operators()
            .map_err(|e| DatasetError::Config(e.to_string()))?;
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DatasetHeader {
    pub format_version: String,
    pub tool_version: String,
    pub phenomenon_id: String,
    /// Canonical serialization of the phenomenon, so the file is self-contained.
    pub phenomenon_source: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub config: Option<GenerationConfig>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InstanceRecord {
    pub id: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub template: Option<TemplateMatrix>,
    pub context: ContextSequence,
    /// Options in presentation order, without labels.
    pub options: Vec<RealizedItem>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub augmentation: Option<crate::augment::AugmentationRecord>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AnswerRecord {
    pub id: String,
    pub correct_index: usize,
    pub labels: Vec<ViolationLabel>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DatasetFile {
    pub header: DatasetHeader,
    pub instances: Vec<InstanceRecord>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub answers: Option<Vec<AnswerRecord>>,
}

impl DatasetFile {
    pub fn new(g: &PhenomenonGrammar, config: Option<GenerationConfig>) -> Self {
        DatasetFile {
            header: DatasetHeader {
                format_version: FORMAT_VERSION.into(),
                tool_version: TOOL_VERSION.into(),
                phenomenon_id: g.id.clone(),
                phenomenon_source: serialize_phenomenon(g),
                config,
            },
            instances: Vec::new(),
            answers: Some(Vec::new()),
        }
    }

    pub fn from_json(text: &str) -> Result<Self, DatasetError> {
        let file: DatasetFile =
            serde_json::from_str(text).map_err(|e| DatasetError::Schema(e.to_string()))?;
        if file.header.format_version != FORMAT_VERSION {
            return Err(DatasetError::Schema(format!(
                "unsupported format version `{}`",
                file.header.format_version
            )));
        }
        Ok(file)
    }

    pub fn load(path: &Path) -> Result<Self, DatasetError> {
        let text = std::fs::read_to_string(path).map_err(|source| DatasetError::Read {
            path: path.to_path_buf(),
            source,
        })?;
        Self::from_json(&text)
    }

    /// Pretty JSON with a trailing newline. Field order is fixed and maps are
    /// ordered, so equal datasets serialize to identical bytes.
    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("dataset serializes");
        s.push('\n');
        s
    }

    pub fn grammar(&self) -> Result<PhenomenonGrammar, DatasetError> {
        Ok(parse_phenomenon(&self.header.phenomenon_source)?)
    }

    pub fn push(&mut self, inst: &BlmInstance) {
        self.instances.push(InstanceRecord {
            id: inst.id.clone(),
            seed: inst.seed,
            template: inst.template.clone(),
            context: inst.context.clone(),
            options: inst.answers.options.iter().map(|o| o.item.clone()).collect(),
            augmentation: inst.augmentation.clone(),
        });
        if let Some(answers) = &mut self.answers {
            answers.push(AnswerRecord {
                id: inst.id.clone(),
                correct_index: inst.answers.correct_index,
                labels: inst.answers.options.iter().map(|o| o.label.clone()).collect(),
            });
        }
    }

    /// Join instances with their answers. Fails on stripped files or when the
    /// answers section does not line up with the instances.
    pub fn to_instances(&self) -> Result<Vec<BlmInstance>, DatasetError> {
        let answers = self.answers.as_ref().ok_or(DatasetError::NoAnswers)?;
        if answers.len() != self.instances.len() {
            return Err(DatasetError::Schema(format!(
                "{} instances but {} answer records",
                self.instances.len(),
                answers.len()
            )));
        }
        self.instances
            .iter()
            .zip(answers)
            .map(|(rec, ans)| {
                if rec.id != ans.id {
                    return Err(DatasetError::Schema(format!(
                        "answer record `{}` does not match instance `{}`",
                        ans.id, rec.id
                    )));
                }
                if ans.labels.len() != rec.options.len() {
                    return Err(DatasetError::Schema(format!(
                        "instance `{}`: {} options but {} labels",
                        rec.id,
                        rec.options.len(),
                        ans.labels.len()
                    )));
                }
                Ok(BlmInstance {
                    id: rec.id.clone(),
                    seed: rec.seed,
                    template: rec.template.clone(),
                    context: rec.context.clone(),
                    answers: AnswerSet {
                        options: rec
                            .options
                            .iter()
                            .zip(&ans.labels)
                            .map(|(item, label)| AnswerOption {
                                item: item.clone(),
                                label: label.clone(),
                            })
                            .collect(),
                        correct_index: ans.correct_index,
                    },
                    augmentation: rec.augmentation.clone(),
                })
            })
            .collect()
    }
}

/// Counts reported after generation.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct GenerationStats {
    pub instances: usize,
    pub composition: BTreeMap<ViolationKind, usize>,
    /// Rejected draws by reason.
    pub rejections: BTreeMap<String, usize>,
}

fn instance_id(g: &PhenomenonGrammar, index: usize) -> String {
    format!("{}-{:05}", g.id, index)
}

fn attempt_seed(base: u64, attempt: usize) -> u64 {
    if attempt == 0 {
        base
    } else {
        seed::stream_seed(base, "redraw", attempt as u64)
    }
}

#[derive(Debug)]
enum DrawFailure {
    Realize(RealizeError),
    Answers(AnswerError),
    Gate(VerifyFailure),
}

impl DrawFailure {
    fn reason(&self) -> String {
        match self {
            DrawFailure::Realize(_) => "realization".into(),
            DrawFailure::Answers(AnswerError::DuplicateSurface { .. }) => "duplicate-surface".into(),
            DrawFailure::Answers(_) => "answer-set".into(),
            DrawFailure::Gate(VerifyFailure::Ambiguous(_)) => "gate-ambiguous".into(),
            DrawFailure::Gate(_) => "gate-other".into(),
        }
    }

    fn message(&self) -> String {
        match self {
            DrawFailure::Realize(e) => e.to_string(),
            DrawFailure::Answers(e) => e.to_string(),
            DrawFailure::Gate(e) => e.to_string(),
        }
    }
}

/// One draw of an instance from a fixed seed. Pure function of its arguments.
pub fn draw_instance(
    g: &PhenomenonGrammar,
    t: &TemplateMatrix,
    config: &GenerationConfig,
    id: String,
    seed_value: u64,
) -> Result<BlmInstance, DrawFailureInfo> {
    draw(g, t, config, id, seed_value).map_err(|e| DrawFailureInfo {
        reason: e.reason(),
        message: e.message(),
    })
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DrawFailureInfo {
    pub reason: String,
    pub message: String,
}

fn draw(
    g: &PhenomenonGrammar,
    t: &TemplateMatrix,
    config: &GenerationConfig,
    id: String,
    seed_value: u64,
) -> Result<BlmInstance, DrawFailure> {
    let context = realize_context(t, g, seed_value, config.lexicalization).map_err(DrawFailure::Realize)?;
    let answers = build_answer_set(t, g, &config.answers, seed_value).map_err(DrawFailure::Answers)?;
    let inst = BlmInstance {
        id,
        seed: Some(seed_value),
        template: Some(t.clone()),
        context,
        answers,
        augmentation: None,
    };
    inst.verify(g).map_err(DrawFailure::Gate)?;
    Ok(inst)
}

/// Generate `config.count` gated instances in parallel. Output order is by
/// instance index.
pub fn generate(
    g: &PhenomenonGrammar,
    config: &GenerationConfig,
) -> Result<(DatasetFile, GenerationStats), DatasetError> {
    config.check()?;
    let ops = config.parse_operators()?;
    let t = build_template(g, config.shape, &ops)?;

    let results: Vec<Result<(BlmInstance, Vec<String>), DatasetError>> = (0..config.count)
        .into_par_iter()
        .map(|i| {
            let base = seed::instance_seed(config.seed, i as u64);
            let mut rejected = Vec::new();
            let mut last = String::new();
            for attempt in 0..config.max_attempts {
                let s = attempt_seed(base, attempt);
                match draw(g, &t, config, instance_id(g, i), s) {
                    Ok(inst) => return Ok((inst, rejected)),
                    Err(e) => {
                        rejected.push(e.reason());
                        last = e.message();
                    }
                }
            }
            Err(DatasetError::Instance {
                index: i,
                seed: base,
                message: format!("no valid draw in {} attempts: {last}", config.max_attempts),
            })
        })
        .collect();

    let mut file = DatasetFile::new(g, Some(config.clone()));
    let mut stats = GenerationStats::default();
    for r in results {
        let (inst, rejected) = r?;
        for reason in rejected {
            *stats.rejections.entry(reason).or_default() += 1;
        }
        for o in &inst.answers.options {
            *stats.composition.entry(o.label.kind).or_default() += 1;
        }
        stats.instances += 1;
        file.push(&inst);
    }
    Ok((file, stats))
}

/// Read the phenomenon named by a config and generate.
pub fn generate_from_config(config: &GenerationConfig) -> Result<(DatasetFile, GenerationStats), DatasetError> {
    let path = config.phenomenon_path();
    let source = std::fs::read_to_string(&path).map_err(|source| DatasetError::Read {
        path,
        source,
    })?;
    let g = parse_phenomenon(&source)?;
    generate(&g, config)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Check {
    Schema,
    Phenomenon,
    Faithfulness,
    EConsistency,
    Template,
    LabelFaithfulness,
    SingleSolution,
    Reproduction,
    Augmentation,
}

impl Check {
    pub fn as_str(self) -> &'static str {
        match self {
            Check::Schema => "schema",
            Check::Phenomenon => "phenomenon",
            Check::Faithfulness => "faithfulness",
            Check::EConsistency => "e-consistency",
            Check::Template => "template",
            Check::LabelFaithfulness => "label-faithfulness",
            Check::SingleSolution => "single-solution",
            Check::Reproduction => "reproduction",
            Check::Augmentation => "augmentation",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ValidationFailure {
    /// Instance id, or `None` for file-level failures.
    pub instance: Option<String>,
    pub check: Check,
    pub message: String,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ValidationReport {
    pub instances: usize,
    pub failures: Vec<ValidationFailure>,
}

impl ValidationReport {
    pub fn ok(&self) -> bool {
        self.failures.is_empty()
    }

    fn fail(&mut self, instance: Option<&str>, check: Check, message: impl Into<String>) {
        self.failures.push(ValidationFailure {
            instance: instance.map(str::to_string),
            check,
            message: message.into(),
        });
    }

    pub fn failing_checks(&self) -> BTreeSet<Check> {
        self.failures.iter().map(|f| f.check).collect()
    }
}

fn item_refs(inst: &BlmInstance) -> Vec<(String, &RealizedItem)> {
    inst.context
        .items
        .iter()
        .enumerate()
        .map(|(i, it)| (format!("context {i}"), it))
        .chain(
            inst.answers
                .options
                .iter()
                .enumerate()
                .map(|(i, o)| (format!("option {i}"), &o.item)),
        )
        .collect()
}

/// Re-run every invariant on a dataset file.
pub fn validate(file: &DatasetFile) -> ValidationReport {
    let mut report = ValidationReport {
        instances: file.instances.len(),
        failures: Vec::new(),
    };
    if file.header.format_version != FORMAT_VERSION {
        report.fail(None, Check::Schema, format!("format version `{}`", file.header.format_version));
    }
    let g = match file.grammar() {
        Ok(g) => g,
        Err(e) => {
            report.fail(None, Check::Phenomenon, e.to_string());
            return report;
        }
    };
    if g.id != file.header.phenomenon_id {
        report.fail(None, Check::Phenomenon, "phenomenon id does not match its source");
    }
    if serialize_phenomenon(&g) != file.header.phenomenon_source {
        report.fail(None, Check::Phenomenon, "phenomenon source is not in canonical form");
    }
    let mut seen_ids = BTreeSet::new();
    for rec in &file.instances {
        if !seen_ids.insert(rec.id.as_str()) {
            report.fail(Some(&rec.id), Check::Schema, "duplicate instance id");
        }
    }

    let config = file.header.config.as_ref();
    let max_tokens = config.map(|c| c.shape.l);

    if file.answers.is_none() {
        for rec in &file.instances {
            for (i, item) in rec.context.items.iter().chain(&rec.options).enumerate() {
                if let Err(e) = check_item(item, &g, max_tokens.unwrap_or(usize::MAX)) {
                    report.fail(Some(&rec.id), Check::Faithfulness, format!("item {i}: {e}"));
                }
            }
        }
        return report;
    }
    let instances = match file.to_instances() {
        Ok(v) => v,
        Err(e) => {
            report.fail(None, Check::Schema, e.to_string());
            return report;
        }
    };
    let by_id: BTreeMap<&str, &BlmInstance> = instances.iter().map(|i| (i.id.as_str(), i)).collect();
    let template = config.and_then(|c| {
        let ops = c.parse_operators().ok()?;
        build_template(&g, c.shape, &ops).ok()
    });

    for inst in &instances {
        validate_instance(inst, &g, config, template.as_ref(), &by_id, &mut report);
    }
    report
}

fn validate_instance(
    inst: &BlmInstance,
    g: &PhenomenonGrammar,
    config: Option<&GenerationConfig>,
    template: Option<&TemplateMatrix>,
    by_id: &BTreeMap<&str, &BlmInstance>,
    report: &mut ValidationReport,
) {
    let id = Some(inst.id.as_str());
    let n_opts = inst.answers.options.len();
    if inst.answers.correct_index >= n_opts {
        report.fail(id, Check::Schema, format!("correct index {} out of range", inst.answers.correct_index));
        return;
    }
    let corrects: Vec<usize> = inst
        .answers
        .options
        .iter()
        .enumerate()
        .filter(|(_, o)| o.label.kind == ViolationKind::Correct)
        .map(|(i, _)| i)
        .collect();
    if corrects != [inst.answers.correct_index] {
        report.fail(
            id,
            Check::LabelFaithfulness,
            format!("Correct labels at {corrects:?}, correct index {}", inst.answers.correct_index),
        );
    }
    let surfaces: BTreeSet<&str> = inst.answers.options.iter().map(|o| o.item.surface.as_str()).collect();
    if surfaces.len() != n_opts {
        report.fail(id, Check::Schema, "option surfaces are not distinct");
    }

    let limit = inst
        .template
        .as_ref()
        .map(|t| t.shape.l)
        .or(config.map(|c| c.shape.l))
        .unwrap_or(usize::MAX);
    for (name, item) in item_refs(inst) {
        if let Err(e) = check_item(item, g, limit) {
            report.fail(id, Check::Faithfulness, format!("{name}: {e}"));
        }
    }

    for (i, item) in inst.context.items.iter().enumerate() {
        if !satisfies_e(g, &item.abstract_row) || item.abstract_row.coordination.is_some() {
            report.fail(id, Check::EConsistency, format!("context {i} violates an E rule"));
        }
    }
    let expected = &inst.answers.options[inst.answers.correct_index].item.abstract_row;
    if !satisfies_e(g, expected) {
        report.fail(id, Check::EConsistency, "correct option violates an E rule");
    }

    if let Some(t) = &inst.template {
        let rebuilt = build_template(g, t.shape, &t.operators).ok();
        if rebuilt.as_ref() != Some(t) {
            report.fail(id, Check::Template, "stored template is not reproduced by its operators");
        }
        if let Some(tpl) = template {
            if tpl != t {
                report.fail(id, Check::Template, "template differs from the configured one");
            }
        }
        if inst.context.template_ref != template_id(t) {
            report.fail(id, Check::Template, "context template reference does not match");
        }
        let rows: Vec<_> = inst.context.items.iter().map(|i| &i.abstract_row).collect();
        if rows.len() + 1 != t.rows.len() || rows.iter().zip(t.context_rows()).any(|(a, b)| *a != b) {
            report.fail(id, Check::Template, "context abstracts differ from the template");
        }
        if expected != t.answer_row() {
            report.fail(id, Check::Template, "correct option differs from the template answer row");
        }
    }

    for (i, o) in inst.answers.options.iter().enumerate() {
        let got = classify(g, expected, &o.item.abstract_row);
        if got.kind != o.label.kind {
            report.fail(
                id,
                Check::LabelFaithfulness,
                format!("option {i} labeled {} but classifies as {}", o.label.kind, got.kind),
            );
        } else if diff_rows(g, expected, &o.item.abstract_row) != o.label.detail {
            report.fail(id, Check::LabelFaithfulness, format!("option {i} label detail does not match its diff"));
        }
    }

    if let Err(e) = inst.verify(g) {
        report.fail(id, Check::SingleSolution, e.to_string());
    }

    match &inst.augmentation {
        None => {
            if let (Some(cfg), Some(t), Some(s)) = (config, template, inst.seed) {
                match draw(g, t, cfg, inst.id.clone(), s) {
                    Ok(again) if again == *inst => {}
                    Ok(_) => report.fail(id, Check::Reproduction, format!("seed {s} regenerates a different instance")),
                    Err(e) => report.fail(id, Check::Reproduction, format!("seed {s} does not regenerate: {}", e.message())),
                }
            }
        }
        Some(aug) => validate_augmented(inst, aug, by_id, report),
    }
}

fn validate_augmented(
    inst: &BlmInstance,
    aug: &crate::augment::AugmentationRecord,
    by_id: &BTreeMap<&str, &BlmInstance>,
    report: &mut ValidationReport,
) {
    let id = Some(inst.id.as_str());
    for s in &aug.substitutions {
        let rec = aug.provenance.iter().find(|r| r.candidate == *s);
        match rec {
            Some(r) if r.verdict == Verdict::Accept => {
                let delta = (s.sentence_score - r.base_score).abs();
                if s.rank < 1 || s.rank > aug.window || !(delta <= aug.epsilon) {
                    report.fail(id, Check::Augmentation, format!("substitution `{}` violates rank/score bounds", s.surface));
                }
            }
            _ => report.fail(id, Check::Augmentation, format!("substitution `{}` was not accepted", s.surface)),
        }
        let item = match s.item {
            ItemRef::Context(i) => inst.context.items.get(i),
            ItemRef::Option(i) => inst.answers.options.get(i).map(|o| &o.item),
        };
        let applied = item.and_then(|it| it.choices.get(s.cell)).map(|c| c.entry);
        if applied.is_none() || applied != s.entry {
            report.fail(id, Check::Augmentation, format!("substitution `{}` is not applied", s.surface));
        }
    }
    if aug.substitutions.is_empty() {
        report.fail(id, Check::Augmentation, "augmented instance records no substitution");
    }
    if let Some(base) = by_id.get(aug.base.as_str()) {
        let abstracts = |i: &BlmInstance| {
            let rows: Vec<_> = i
                .context
                .items
                .iter()
                .chain(i.answers.options.iter().map(|o| &o.item))
                .map(|it| serde_json::to_string(&it.abstract_row).expect("serializes"))
                .collect();
            rows
        };
        if abstracts(base) != abstracts(inst)
            || base.answers.correct_index != inst.answers.correct_index
            || base.template != inst.template
        {
            report.fail(id, Check::Augmentation, "abstract structure differs from the base instance");
        }
        let labels = |i: &BlmInstance| i.answers.options.iter().map(|o| o.label.clone()).collect::<Vec<_>>();
        if labels(base) != labels(inst) {
            report.fail(id, Check::Augmentation, "labels differ from the base instance");
        }
    }
}

/// Outcome of solving one instance.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SolveRecord {
    pub id: String,
    pub chosen: Option<usize>,
    /// `exact`, `ambiguous`, `no-match` or `error`.
    pub status: String,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub consistent: Vec<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub correct: Option<bool>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub hypothesis: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct SolveReport {
    pub instances: usize,
    pub exact: usize,
    pub ambiguous: usize,
    pub unsolved: usize,
    /// Present when answers are available.
    pub accuracy: Option<f64>,
    /// One count per instance: the label kind of the chosen option (or
    /// `Ambiguous` / `NoMatchingOption` / `Error`). Sums to `instances`.
    pub confusion: BTreeMap<String, usize>,
    /// Label kinds co-consistent with the prediction in ambiguous instances.
    pub co_consistent: BTreeMap<String, usize>,
    pub records: Vec<SolveRecord>,
}

/// Run the reference solver on every instance.
pub fn solve_dataset(file: &DatasetFile) -> Result<SolveReport, DatasetError> {
    let g = file.grammar()?;
    let answers: Option<BTreeMap<&str, &AnswerRecord>> = file
        .answers
        .as_ref()
        .map(|a| a.iter().map(|r| (r.id.as_str(), r)).collect());
    let records: Vec<(SolveRecord, Option<&AnswerRecord>)> = file
        .instances
        .par_iter()
        .map(|rec| {
            let rows: Vec<_> = rec.options.iter().map(|o| o.abstract_row.clone()).collect();
            let key = answers.as_ref().and_then(|a| a.get(rec.id.as_str()).copied());
            let mut out = SolveRecord {
                id: rec.id.clone(),
                chosen: None,
                status: String::new(),
                consistent: Vec::new(),
                correct: None,
                hypothesis: None,
                error: None,
            };
            match solve(&rec.context, &rows, &g) {
                Ok(sol) => {
                    out.chosen = Some(sol.chosen_index);
                    out.hypothesis = Some(sol.hypothesis.to_string());
                    match sol.confidence {
                        Confidence::Exact => out.status = "exact".into(),
                        Confidence::Ambiguous(list) => {
                            out.status = "ambiguous".into();
                            out.consistent = list;
                        }
                    }
                    out.correct = key.map(|k| out.status == "exact" && k.correct_index == sol.chosen_index);
                }
                Err(SolveError::NoMatchingOption) => {
                    out.status = "no-match".into();
                    out.correct = key.map(|_| false);
                }
                Err(e) => {
                    out.status = "error".into();
                    out.error = Some(e.to_string());
                    out.correct = key.map(|_| false);
                }
            }
            (out, key)
        })
        .collect();

    let mut report = SolveReport {
        instances: records.len(),
        ..Default::default()
    };
    let mut right = 0;
    for (r, key) in &records {
        let kind_of = |i: usize| {
            key.and_then(|k| k.labels.get(i))
                .map(|l| l.kind.to_string())
                .unwrap_or_else(|| format!("option-{i}"))
        };
        let bucket = match r.status.as_str() {
            "exact" => {
                report.exact += 1;
                kind_of(r.chosen.expect("exact has a choice"))
            }
            "ambiguous" => {
                report.ambiguous += 1;
                for &i in &r.consistent {
                    *report.co_consistent.entry(kind_of(i)).or_default() += 1;
                }
                "Ambiguous".into()
            }
            "no-match" => {
                report.unsolved += 1;
                "NoMatchingOption".into()
            }
            _ => {
                report.unsolved += 1;
                "Error".into()
            }
        };
        *report.confusion.entry(bucket).or_default() += 1;
        if r.correct == Some(true) {
            right += 1;
        }
    }
    if file.answers.is_some() {
        report.accuracy = Some(if records.is_empty() {
            1.0
        } else {
            right as f64 / records.len() as f64
        });
    }
    report.records = records.into_iter().map(|(r, _)| r).collect();
    Ok(report)
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct AugmentStats {
    pub base_instances: usize,
    pub augmented: usize,
    /// Base instances with no acceptable candidate anywhere.
    pub without_candidates: Vec<String>,
    pub candidates: usize,
    pub accepted: usize,
    pub rejections: BTreeMap<String, usize>,
}

/// Augment every non-augmented instance. The output holds the base instances
/// followed, per base, by its augmented copies.
pub fn augment_dataset(
    file: &DatasetFile,
    provider: &dyn CandidateProvider,
    config: &AugmentConfig,
    seed_value: u64,
) -> Result<(DatasetFile, AugmentStats), DatasetError> {
    let g = file.grammar()?;
    let bases: Vec<BlmInstance> = file
        .to_instances()?
        .into_iter()
        .filter(|i| i.augmentation.is_none())
        .collect();
    let results: Vec<Result<Vec<BlmInstance>, AugmentError>> = bases
        .par_iter()
        .enumerate()
        .map(|(i, inst)| augment_instance(inst, &g, provider, config, seed::instance_seed(seed_value, i as u64)))
        .collect();

    let mut out = DatasetFile {
        header: file.header.clone(),
        instances: Vec::new(),
        answers: Some(Vec::new()),
    };
    let mut stats = AugmentStats {
        base_instances: bases.len(),
        ..Default::default()
    };
    for inst in &bases {
        out.push(inst);
    }
    for (inst, r) in bases.iter().zip(results) {
        match r {
            Ok(copies) => {
                if let Some(aug) = copies.first().and_then(|c| c.augmentation.as_ref()) {
                    stats.candidates += aug.provenance.len();
                    for p in &aug.provenance {
                        match &p.verdict {
                            Verdict::Accept => stats.accepted += 1,
                            Verdict::Reject(reason) => {
                                let key = serde_json::to_value(reason).expect("serializes")["reason"]
                                    .as_str()
                                    .unwrap_or("other")
                                    .to_string();
                                *stats.rejections.entry(key).or_default() += 1;
                            }
                        }
                    }
                }
                stats.augmented += copies.len();
                for c in &copies {
                    out.push(c);
                }
            }
            Err(AugmentError::NoAcceptableCandidates(_)) => stats.without_candidates.push(inst.id.clone()),
            Err(e) => return Err(e.into()),
        }
    }
    Ok((out, stats))
}

/// Evaluation export: drops the answers section and every field from which the
/// correct index could be recovered without solving (templates, operators,
/// seeds, config, template references, augmentation provenance).
pub fn strip_answers(file: &DatasetFile) -> DatasetFile {
    DatasetFile {
        header: DatasetHeader {
            config: None,
            ..file.header.clone()
        },
        instances: file
            .instances
            .iter()
            .map(|r| InstanceRecord {
                id: r.id.clone(),
                seed: None,
                template: None,
                context: ContextSequence {
                    items: r.context.items.clone(),
                    template_ref: String::new(),
                    seed: None,
                },
                options: r.options.clone(),
                augmentation: None,
            })
            .collect(),
        answers: None,
    }
}

/// Experimental split by lexicalization: instances are grouped by the lexical
/// entry of the first phrase of their first context item, and a group goes to
/// the held-out part when its key hashes into the first `heldout_percent`
/// buckets out of 100. Groups never straddle the two parts.
pub fn split_by_lexicalization(file: &DatasetFile, heldout_percent: u64) -> (DatasetFile, DatasetFile) {
    let mut train = DatasetFile {
        header: file.header.clone(),
        instances: Vec::new(),
        answers: file.answers.as_ref().map(|_| Vec::new()),
    };
    let mut heldout = train.clone();
    let answers: BTreeMap<&str, &AnswerRecord> = file
        .answers
        .iter()
        .flatten()
        .map(|a| (a.id.as_str(), a))
        .collect();
    for rec in &file.instances {
        let key = rec
            .context
            .items
            .first()
            .and_then(|i| i.choices.first())
            .map(|c| c.entry.0)
            .unwrap_or(0);
        let bucket = seed::stream_seed(0, "split", key as u64) % 100;
        let target = if bucket < heldout_percent { &mut heldout } else { &mut train };
        target.instances.push(rec.clone());
        if let (Some(list), Some(a)) = (&mut target.answers, answers.get(rec.id.as_str())) {
            list.push((*a).clone());
        }
    }
    (train, heldout)
}

/// Set the review status of augmented instances; `ids` empty means all.
/// Returns the number of records changed.
pub fn set_review(file: &mut DatasetFile, ids: &[String], status: Review) -> usize {
    let mut changed = 0;
    for rec in &mut file.instances {
        if !ids.is_empty() && !ids.contains(&rec.id) {
            continue;
        }
        if let Some(aug) = &mut rec.augmentation {
            if aug.review != status {
                aug.review = status;
                changed += 1;
            }
        }
    }
    changed
}
