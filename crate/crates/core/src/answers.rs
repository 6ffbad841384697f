//! Answer sets: the correct completion plus contrastive distractors that break an
//! E rule, an I rule, a relational operator, or the phrase structure.

use std::collections::BTreeSet;
use std::fmt;
use std::str::FromStr;

use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::grammar::{PhenomenonGrammar, Slot, TAG_DISTANCE_INVARIANT};
use crate::realize::{realize_row, Pins, RealizeError, RealizedItem};
use crate::seed;
use crate::template::{
    build_row, Operator, ProgressionSpec, ProgressionTarget, TemplateError, TemplateMatrix,
    TemplateRow,
};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum AnswerError {
    #[error("cannot build a {kind} option: {reason}")]
    NotPerturbable { kind: ViolationKind, reason: String },
    #[error("could not draw distinct surfaces after {attempts} attempts")]
    DuplicateSurface { attempts: usize },
    #[error("composition must contain exactly one Correct option (found {0})")]
    InvalidComposition(usize),
    #[error(transparent)]
    Realize(#[from] RealizeError),
    #[error(transparent)]
    Template(#[from] TemplateError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum ViolationKind {
    Correct,
    ViolationE,
    ViolationI,
    ViolationR,
    WrongStructure,
}

impl ViolationKind {
    pub const ALL: [ViolationKind; 5] = [
        ViolationKind::Correct,
        ViolationKind::ViolationE,
        ViolationKind::ViolationI,
        ViolationKind::ViolationR,
        ViolationKind::WrongStructure,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            ViolationKind::Correct => "Correct",
            ViolationKind::ViolationE => "ViolationE",
            ViolationKind::ViolationI => "ViolationI",
            ViolationKind::ViolationR => "ViolationR",
            ViolationKind::WrongStructure => "WrongStructure",
        }
    }
}

impl fmt::Display for ViolationKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for ViolationKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Self::ALL
            .into_iter()
            .find(|k| k.as_str().eq_ignore_ascii_case(s))
            .ok_or_else(|| format!("unknown violation kind `{s}`"))
    }
}

/// One elementary difference between an option and the correct row.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(tag = "edit", rename_all = "kebab-case")]
pub enum Edit {
    /// The cell for this object occurrence is introduced by the coordinator.
    Coordinate { object: String, occurrence: u32 },
    /// The number of occurrences of an object changed.
    SetCount { object: String, from: u32, to: u32 },
    SetValue {
        object: String,
        occurrence: u32,
        attribute: String,
        from: String,
        to: String,
    },
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ViolationLabel {
    pub kind: ViolationKind,
    /// Empty exactly when `kind` is `Correct`.
    pub detail: Vec<Edit>,
}

impl ViolationLabel {
    pub fn correct() -> Self {
        ViolationLabel {
            kind: ViolationKind::Correct,
            detail: Vec::new(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AnswerOption {
    pub item: RealizedItem,
    pub label: ViolationLabel,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AnswerSet {
    pub options: Vec<AnswerOption>,
    pub correct_index: usize,
}

/// How E and R distractors are perturbed.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum PerturbationStyle {
    /// E: the subject value flips and no other phrase keeps the verb's value, so
    /// the verb agrees with nothing. R: the item repeats the earliest context row
    /// showing the wrong count. Reproduces the classic agreement answer template.
    #[default]
    Template,
    /// Single-site edits: E flips the agreeing verb, R changes only the count.
    Minimal,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AnswerConfig {
    #[serde(default = "default_composition")]
    pub composition: Vec<ViolationKind>,
    #[serde(default)]
    pub style: PerturbationStyle,
    /// Distractors reuse the correct option's lexical positions.
    #[serde(default)]
    pub matched_lexicalization: bool,
    #[serde(default = "default_redraws")]
    pub max_redraws: usize,
}

fn default_redraws() -> usize {
    16
}

fn default_composition() -> Vec<ViolationKind> {
    use ViolationKind::*;
    vec![
        Correct,
        WrongStructure,
        ViolationR,
        ViolationE,
        ViolationI,
        ViolationI,
    ]
}

impl Default for AnswerConfig {
    fn default() -> Self {
        AnswerConfig {
            composition: default_composition(),
            style: PerturbationStyle::Template,
            matched_lexicalization: false,
            max_redraws: default_redraws(),
        }
    }
}

fn not_perturbable(kind: ViolationKind, reason: impl Into<String>) -> AnswerError {
    AnswerError::NotPerturbable {
        kind,
        reason: reason.into(),
    }
}

/// The next declared value after `current`, cyclically.
fn other_value(g: &PhenomenonGrammar, attribute: &str, current: &str) -> Option<String> {
    let def = g.attribute(attribute)?;
    if def.values.len() < 2 {
        return None;
    }
    let pos = def.position(current)?;
    Some(def.values[(pos + 1) % def.values.len()].clone())
}

/// Structural differences between `correct` and `option`, in canonical order:
/// coordination, then counts (grammar object order), then values (cell order of
/// `option`, attributes sorted).
pub fn diff_rows(g: &PhenomenonGrammar, correct: &TemplateRow, option: &TemplateRow) -> Vec<Edit> {
    let mut edits = Vec::new();
    if option.coordination != correct.coordination {
        if let Some(cell) = option.coordination.and_then(|i| option.cells.get(i)) {
            edits.push(Edit::Coordinate {
                object: cell.object.clone(),
                occurrence: cell.occurrence,
            });
        }
    }
    for obj in &g.objects {
        let (a, b) = (correct.occurrences(&obj.name), option.occurrences(&obj.name));
        if a != b {
            edits.push(Edit::SetCount {
                object: obj.name.clone(),
                from: a as u32,
                to: b as u32,
            });
        }
    }
    for cell in &option.cells {
        let Some(base) = correct
            .cells
            .iter()
            .find(|c| c.object == cell.object && c.occurrence == cell.occurrence)
        else {
            continue;
        };
        for (attr, to) in &cell.values {
            let from = base.values.get(attr).cloned().unwrap_or_default();
            if &from != to {
                edits.push(Edit::SetValue {
                    object: cell.object.clone(),
                    occurrence: cell.occurrence,
                    attribute: attr.clone(),
                    from,
                    to: to.clone(),
                });
            }
        }
    }
    edits
}

/// True when every E `match` rule holds within the row.
pub fn satisfies_e(g: &PhenomenonGrammar, row: &TemplateRow) -> bool {
    g.match_rules().all(|rule| {
        let present: Vec<&str> = rule.participants.iter().filter_map(|p| row.value(p)).collect();
        present.windows(2).all(|w| w[0] == w[1])
    })
}

/// Classify an option against the expected completion.
pub fn classify(g: &PhenomenonGrammar, expected: &TemplateRow, option: &TemplateRow) -> ViolationLabel {
    let detail = diff_rows(g, expected, option);
    let kind = if option.same_content(expected) {
        ViolationKind::Correct
    } else if option.coordination.is_some() && option.coordination != expected.coordination {
        ViolationKind::WrongStructure
    } else if detail.iter().any(|e| matches!(e, Edit::SetCount { .. })) {
        ViolationKind::ViolationR
    } else if !satisfies_e(g, option) {
        ViolationKind::ViolationE
    } else {
        ViolationKind::ViolationI
    };
    ViolationLabel { kind, detail }
}

fn set_value(row: &mut TemplateRow, object: &str, attribute: &str, value: &str) {
    for c in row.cells.iter_mut().filter(|c| c.object == object) {
        c.values.insert(attribute.to_string(), value.to_string());
    }
}

fn violation_e(
    g: &PhenomenonGrammar,
    correct: &TemplateRow,
    style: PerturbationStyle,
) -> Result<TemplateRow, AnswerError> {
    let kind = ViolationKind::ViolationE;
    let rule = g
        .match_rules()
        .find(|r| r.participants.iter().all(|p| correct.value(p).is_some()))
        .ok_or_else(|| not_perturbable(kind, "no E match rule with all participants present"))?;
    let source = &rule.participants[0];
    let derived = rule.participants.last().expect("match has >= 2 participants");
    let mut row = correct.clone();
    match style {
        PerturbationStyle::Minimal => {
            let current = correct.value(derived).expect("present");
            let flipped = other_value(g, &derived.attribute, current)
                .ok_or_else(|| not_perturbable(kind, "attribute has a single value"))?;
            set_value(&mut row, &derived.object, &derived.attribute, &flipped);
        }
        PerturbationStyle::Template => {
            let current = correct.value(source).expect("present");
            let flipped = other_value(g, &source.attribute, current)
                .ok_or_else(|| not_perturbable(kind, "attribute has a single value"))?;
            let target = correct.value(derived).expect("present").to_string();
            set_value(&mut row, &source.object, &source.attribute, &flipped);
            // No other carrier of the attribute may license the derived value.
            let participants: BTreeSet<&str> =
                rule.participants.iter().map(|p| p.object.as_str()).collect();
            for cell in row.cells.iter_mut() {
                if participants.contains(cell.object.as_str()) {
                    continue;
                }
                if cell.values.get(&source.attribute) == Some(&target) {
                    cell.values.insert(source.attribute.clone(), flipped.clone());
                }
            }
        }
    }
    Ok(row)
}

/// Cells an I-diagnostic distractor may flip: attribute cells outside every E match
/// rule, restricted to the intervening objects when a distance-invariant I rule exists.
pub fn i_sites(g: &PhenomenonGrammar, correct: &TemplateRow) -> Vec<(usize, String)> {
    if g.rules_i.is_empty() {
        return Vec::new();
    }
    let e_slots: BTreeSet<Slot> = g
        .match_rules()
        .flat_map(|r| r.participants.iter().cloned())
        .collect();
    let windows: Vec<(usize, usize)> = g
        .rules_i
        .iter()
        .filter(|r| r.tag.as_deref() == Some(TAG_DISTANCE_INVARIANT))
        .filter_map(|r| {
            let idx: Vec<usize> = r
                .participants
                .iter()
                .filter_map(|p| g.object_index(&p.object))
                .collect();
            Some((*idx.iter().min()?, *idx.iter().max()?))
        })
        .collect();
    let mut sites = Vec::new();
    for (ci, cell) in correct.cells.iter().enumerate() {
        let Some(oi) = g.object_index(&cell.object) else {
            continue;
        };
        if !windows.is_empty() && !windows.iter().any(|&(lo, hi)| lo < oi && oi < hi) {
            continue;
        }
        for attr in cell.values.keys() {
            if e_slots.contains(&Slot::new(&cell.object, attr)) {
                continue;
            }
            if g.attribute(attr).is_some_and(|d| d.values.len() > 1) {
                sites.push((ci, attr.clone()));
            }
        }
    }
    sites
}

fn violation_i(
    g: &PhenomenonGrammar,
    correct: &TemplateRow,
    site: &(usize, String),
) -> TemplateRow {
    let mut row = correct.clone();
    let cell = &mut row.cells[site.0];
    let current = cell.values[&site.1].clone();
    let flipped = other_value(g, &site.1, &current).expect("site has >= 2 values");
    cell.values.insert(site.1.clone(), flipped);
    row
}

fn violation_r(
    g: &PhenomenonGrammar,
    t: &TemplateMatrix,
    style: PerturbationStyle,
) -> Result<TemplateRow, AnswerError> {
    let kind = ViolationKind::ViolationR;
    let obj = g
        .countable_object()
        .ok_or_else(|| not_perturbable(kind, "grammar has no countable object"))?;
    let (lo, hi) = obj.count_domain().expect("countable");
    let correct = t.answer_row();
    let count = lo + correct.occurrences(&obj.name) as i64;
    let wrong = if count - 1 >= lo {
        count - 1
    } else if count + 1 <= hi {
        count + 1
    } else {
        return Err(not_perturbable(kind, format!("count of {} cannot change", obj.name)));
    };
    let wrong_occ = (wrong - lo) as usize;

    if style == PerturbationStyle::Template {
        if let Some(row) = t
            .context_rows()
            .iter()
            .find(|r| r.occurrences(&obj.name) == wrong_occ)
        {
            return Ok(TemplateRow {
                index: correct.index,
                cells: row.cells.clone(),
                coordination: None,
            });
        }
    }
    let ops: Vec<Operator> = t
        .operators
        .iter()
        .filter(|op| {
            !matches!(op, Operator::Progression(p) if p.target == ProgressionTarget::Count { object: obj.name.clone() })
        })
        .cloned()
        .chain(std::iter::once(Operator::Progression(ProgressionSpec {
            target: ProgressionTarget::Count {
                object: obj.name.clone(),
            },
            start: wrong,
            step: 0,
            block_size: 1,
        })))
        .collect();
    Ok(build_row(g, &ops, correct.index)?)
}

fn wrong_structure(g: &PhenomenonGrammar, correct: &TemplateRow) -> Result<TemplateRow, AnswerError> {
    let kind = ViolationKind::WrongStructure;
    let first_category = correct
        .cells
        .first()
        .and_then(|c| g.object(&c.object))
        .map(|o| o.category.clone())
        .ok_or_else(|| not_perturbable(kind, "empty row"))?;
    let last_phrase = correct
        .cells
        .iter()
        .enumerate()
        .skip(1)
        .filter(|(_, c)| g.object(&c.object).is_some_and(|o| o.category == first_category))
        .map(|(i, _)| i)
        .last()
        .ok_or_else(|| not_perturbable(kind, "fewer than two phrases to coordinate"))?;
    let mut row = correct.clone();
    row.coordination = Some(last_phrase);
    Ok(row)
}

/// The correct option: the realized answer row.
pub fn make_correct<R: Rng + ?Sized>(
    t: &TemplateMatrix,
    g: &PhenomenonGrammar,
    rng: &mut R,
) -> Result<AnswerOption, AnswerError> {
    let item = realize_row(t.answer_row(), g, t.shape.l, None, rng)?;
    Ok(AnswerOption {
        item,
        label: ViolationLabel::correct(),
    })
}

/// Abstract rows (with labels) for a requested violation kind. I-violations return
/// one row per perturbable site, in cell order.
pub fn violation_rows(
    t: &TemplateMatrix,
    g: &PhenomenonGrammar,
    kind: ViolationKind,
    style: PerturbationStyle,
) -> Result<Vec<TemplateRow>, AnswerError> {
    let correct = t.answer_row();
    Ok(match kind {
        ViolationKind::Correct => vec![correct.clone()],
        ViolationKind::ViolationE => vec![violation_e(g, correct, style)?],
        ViolationKind::ViolationI => {
            let sites = i_sites(g, correct);
            if sites.is_empty() {
                return Err(not_perturbable(kind, "no I-diagnostic cell"));
            }
            sites.iter().map(|s| violation_i(g, correct, s)).collect()
        }
        ViolationKind::ViolationR => vec![violation_r(g, t, style)?],
        ViolationKind::WrongStructure => vec![wrong_structure(g, correct)?],
    })
}

/// A single distractor of the requested kind. For I-violations the site is drawn
/// from `rng`.
pub fn make_violation<R: Rng + ?Sized>(
    t: &TemplateMatrix,
    g: &PhenomenonGrammar,
    kind: ViolationKind,
    style: PerturbationStyle,
    rng: &mut R,
) -> Result<AnswerOption, AnswerError> {
    if kind == ViolationKind::Correct {
        return Err(not_perturbable(kind, "Correct is not a violation"));
    }
    let rows = violation_rows(t, g, kind, style)?;
    let row = rows.choose(rng).expect("nonempty").clone();
    let item = realize_row(&row, g, t.shape.l, None, rng)?;
    Ok(AnswerOption {
        label: ViolationLabel {
            kind,
            detail: diff_rows(g, t.answer_row(), &row),
        },
        item,
    })
}

/// Abstract options for a whole composition, before realization and shuffling.
pub fn plan_options<R: Rng + ?Sized>(
    t: &TemplateMatrix,
    g: &PhenomenonGrammar,
    config: &AnswerConfig,
    rng: &mut R,
) -> Result<Vec<(TemplateRow, ViolationLabel)>, AnswerError> {
    let n_correct = config
        .composition
        .iter()
        .filter(|k| **k == ViolationKind::Correct)
        .count();
    if n_correct != 1 {
        return Err(AnswerError::InvalidComposition(n_correct));
    }
    let correct = t.answer_row();
    let mut i_pool: Option<Vec<TemplateRow>> = None;
    let mut planned = Vec::with_capacity(config.composition.len());
    for &kind in &config.composition {
        let row = match kind {
            ViolationKind::ViolationI => {
                if i_pool.is_none() {
                    let mut pool = violation_rows(t, g, kind, config.style)?;
                    pool.shuffle(rng);
                    i_pool = Some(pool);
                }
                i_pool
                    .as_mut()
                    .and_then(Vec::pop)
                    .ok_or_else(|| not_perturbable(kind, "more I options requested than sites"))?
            }
            _ => violation_rows(t, g, kind, config.style)?.remove(0),
        };
        let label = if kind == ViolationKind::Correct {
            ViolationLabel::correct()
        } else {
            ViolationLabel {
                kind,
                detail: diff_rows(g, correct, &row),
            }
        };
        planned.push((row, label));
    }
    Ok(planned)
}

/// Build, realize and shuffle an answer set. All surfaces are distinct; options
/// whose surface collides with an earlier one are redrawn up to
/// `config.max_redraws` times.
pub fn build_answer_set(
    t: &TemplateMatrix,
    g: &PhenomenonGrammar,
    config: &AnswerConfig,
    seed_value: u64,
) -> Result<AnswerSet, AnswerError> {
    let planned = plan_options(t, g, config, &mut seed::stream(seed_value, "plan", 0))?;
    let correct_pos = planned
        .iter()
        .position(|(_, l)| l.kind == ViolationKind::Correct)
        .expect("validated composition");

    let correct_item = realize_row(
        &planned[correct_pos].0,
        g,
        t.shape.l,
        None,
        &mut seed::stream(seed_value, "option", correct_pos as u64),
    )?;
    let pins = config
        .matched_lexicalization
        .then(|| Pins::from_item(&correct_item, g));

    let mut options: Vec<AnswerOption> = Vec::with_capacity(planned.len());
    let mut surfaces = BTreeSet::new();
    surfaces.insert(correct_item.surface.clone());
    for (i, (row, label)) in planned.into_iter().enumerate() {
        let item = if i == correct_pos {
            correct_item.clone()
        } else {
            let mut found = None;
            for attempt in 0..config.max_redraws.max(1) {
                let mut rng = seed::stream(seed_value, "option", (i + attempt * 1000) as u64);
                let item = realize_row(&row, g, t.shape.l, pins.as_ref(), &mut rng)?;
                if !surfaces.contains(&item.surface) {
                    found = Some(item);
                    break;
                }
            }
            let item = found.ok_or(AnswerError::DuplicateSurface {
                attempts: config.max_redraws.max(1),
            })?;
            surfaces.insert(item.surface.clone());
            item
        };
        options.push(AnswerOption { item, label });
    }

    let mut order: Vec<usize> = (0..options.len()).collect();
    order.shuffle(&mut seed::stream(seed_value, "shuffle", 0));
    let correct_index = order
        .iter()
        .position(|&i| i == correct_pos)
        .expect("permutation");
    let mut slots: Vec<Option<AnswerOption>> = options.into_iter().map(Some).collect();
    let options = order
        .into_iter()
        .map(|i| slots[i].take().expect("each index once"))
        .collect();
    Ok(AnswerSet {
        options,
        correct_index,
    })
}
