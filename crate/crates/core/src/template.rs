//! Relational operators and the abstract template matrix they produce.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::str::FromStr;

use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::grammar::{AttributeKind, PhenomenonGrammar, Slot};
use crate::lexicon::Bundle;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum TemplateError {
    #[error("invalid shape: {0}")]
    InvalidShape(String),
    #[error("operator target `{0}` does not resolve in the grammar")]
    UnknownTarget(String),
    #[error("illegal operator: {0}")]
    IllegalOperator(String),
    #[error("operators conflict on `{0}`")]
    ConflictingOperators(String),
    #[error("operator on `{target}` leaves its domain at row {row} (value {value})")]
    DomainExceeded {
        target: String,
        row: usize,
        value: i64,
    },
    #[error("E rule forces `{slot}` to `{forced}` at row {row} but an operator assigns `{assigned}`")]
    EConflict {
        slot: String,
        row: usize,
        forced: String,
        assigned: String,
    },
    #[error("operator `{0}` is reserved and not implemented")]
    Unimplemented(&'static str),
    #[error("cannot parse operator `{text}`: {reason}")]
    Parse { text: String, reason: String },
}

/// `S(n, l)`: `n` items of at most `l` tokens each.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Shape {
    pub n: usize,
    pub l: usize,
}

impl Shape {
    pub fn new(n: usize, l: usize) -> Result<Self, TemplateError> {
        let s = Shape { n, l };
        s.validate()?;
        Ok(s)
    }

    pub fn validate(&self) -> Result<(), TemplateError> {
        if self.n < 2 {
            return Err(TemplateError::InvalidShape(format!("n = {} < 2", self.n)));
        }
        if self.l < 1 {
            return Err(TemplateError::InvalidShape("l must be at least 1".into()));
        }
        Ok(())
    }
}

/// Cyclic value change: `cycle[((row + phase) / period) % cycle.len()]`.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct AlternationSpec {
    pub target: Slot,
    pub cycle: Vec<String>,
    pub period: u32,
    pub phase: u32,
}

impl AlternationSpec {
    pub fn value_at(&self, row: usize) -> &str {
        let step = (row + self.phase as usize) / self.period as usize;
        &self.cycle[step % self.cycle.len()]
    }

    /// Phases `0..period * |cycle|` are distinct; anything larger repeats.
    pub fn phase_limit(&self) -> u32 {
        self.period * self.cycle.len() as u32
    }
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum ProgressionTarget {
    /// Number of occurrences (plus base) of the countable object.
    Count { object: String },
    /// Position on an ordinal attribute's scale.
    Ordinal { slot: Slot },
}

impl fmt::Display for ProgressionTarget {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ProgressionTarget::Count { object } => write!(f, "count({object})"),
            ProgressionTarget::Ordinal { slot } => write!(f, "{slot}"),
        }
    }
}

/// Monotone change: `start + step * (row / block_size)`.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct ProgressionSpec {
    pub target: ProgressionTarget,
    pub start: i64,
    pub step: i64,
    pub block_size: u32,
}

impl ProgressionSpec {
    pub fn raw_at(&self, row: usize) -> i64 {
        self.start + self.step * (row / self.block_size as usize) as i64
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "op", rename_all = "lowercase")]
pub enum Operator {
    Alternation(AlternationSpec),
    Progression(ProgressionSpec),
    /// Reserved.
    Conjunction,
    /// Reserved.
    Disjunction,
    /// Reserved.
    Xor,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum OpValue {
    Symbol(String),
    Count(i64),
}

/// What an operator writes to: an attribute slot or an object's count.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord)]
pub enum TargetKey {
    Slot(Slot),
    Count(String),
}

impl fmt::Display for TargetKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            TargetKey::Slot(s) => write!(f, "{s}"),
            TargetKey::Count(o) => write!(f, "count({o})"),
        }
    }
}

impl Operator {
    pub fn target_key(&self) -> Option<TargetKey> {
        match self {
            Operator::Alternation(a) => Some(TargetKey::Slot(a.target.clone())),
            Operator::Progression(p) => Some(match &p.target {
                ProgressionTarget::Count { object } => TargetKey::Count(object.clone()),
                ProgressionTarget::Ordinal { slot } => TargetKey::Slot(slot.clone()),
            }),
            _ => None,
        }
    }

    fn reserved_name(&self) -> Option<&'static str> {
        match self {
            Operator::Conjunction => Some("conjunction"),
            Operator::Disjunction => Some("disjunction"),
            Operator::Xor => Some("xor"),
            _ => None,
        }
    }

    /// Check that the operator is well-formed and legal for its target.
    pub fn validate(&self, g: &PhenomenonGrammar) -> Result<(), TemplateError> {
        if let Some(name) = self.reserved_name() {
            return Err(TemplateError::Unimplemented(name));
        }
        match self {
            Operator::Alternation(a) => {
                if !g.has_slot(&a.target) {
                    return Err(TemplateError::UnknownTarget(a.target.to_string()));
                }
                let def = g.attribute(&a.target.attribute).expect("validated slot");
                if a.cycle.is_empty() {
                    return Err(TemplateError::IllegalOperator(format!(
                        "alternation on {} has an empty cycle",
                        a.target
                    )));
                }
                let distinct: BTreeSet<_> = a.cycle.iter().collect();
                if distinct.len() != a.cycle.len() {
                    return Err(TemplateError::IllegalOperator(format!(
                        "alternation on {} repeats a cycle value",
                        a.target
                    )));
                }
                if let Some(v) = a.cycle.iter().find(|v| def.position(v).is_none()) {
                    return Err(TemplateError::UnknownTarget(format!("{}={v}", a.target)));
                }
                if a.period == 0 {
                    return Err(TemplateError::IllegalOperator(format!(
                        "alternation on {} has period 0",
                        a.target
                    )));
                }
                if a.phase >= a.phase_limit() {
                    return Err(TemplateError::IllegalOperator(format!(
                        "alternation on {}: phase {} must be below {}",
                        a.target,
                        a.phase,
                        a.phase_limit()
                    )));
                }
            }
            Operator::Progression(p) => {
                if p.block_size == 0 {
                    return Err(TemplateError::IllegalOperator(format!(
                        "progression on {} has block size 0",
                        p.target
                    )));
                }
                match &p.target {
                    ProgressionTarget::Count { object } => {
                        let obj = g
                            .object(object)
                            .ok_or_else(|| TemplateError::UnknownTarget(object.clone()))?;
                        if !obj.is_countable() {
                            return Err(TemplateError::IllegalOperator(format!(
                                "count progression on non-countable object {object}"
                            )));
                        }
                    }
                    ProgressionTarget::Ordinal { slot } => {
                        if !g.has_slot(slot) {
                            return Err(TemplateError::UnknownTarget(slot.to_string()));
                        }
                        let def = g.attribute(&slot.attribute).expect("validated slot");
                        if def.kind != AttributeKind::Ordinal {
                            return Err(TemplateError::IllegalOperator(format!(
                                "progression on categorical attribute {slot}"
                            )));
                        }
                    }
                }
            }
            _ => unreachable!(),
        }
        Ok(())
    }

    /// Closed-form value of the operator at a 0-based row index.
    pub fn value_at(&self, g: &PhenomenonGrammar, row: usize) -> Result<OpValue, TemplateError> {
        match self {
            Operator::Alternation(a) => Ok(OpValue::Symbol(a.value_at(row).to_string())),
            Operator::Progression(p) => {
                let raw = p.raw_at(row);
                let exceeded = || TemplateError::DomainExceeded {
                    target: p.target.to_string(),
                    row,
                    value: raw,
                };
                match &p.target {
                    ProgressionTarget::Count { object } => {
                        let (lo, hi) = g
                            .object(object)
                            .and_then(|o| o.count_domain())
                            .ok_or_else(|| TemplateError::UnknownTarget(object.clone()))?;
                        if raw < lo || raw > hi {
                            return Err(exceeded());
                        }
                        Ok(OpValue::Count(raw))
                    }
                    ProgressionTarget::Ordinal { slot } => {
                        let def = g
                            .attribute(&slot.attribute)
                            .ok_or_else(|| TemplateError::UnknownTarget(slot.to_string()))?;
                        if raw < 0 || raw as usize >= def.values.len() {
                            return Err(exceeded());
                        }
                        Ok(OpValue::Symbol(def.values[raw as usize].clone()))
                    }
                }
            }
            other => Err(TemplateError::Unimplemented(
                other.reserved_name().unwrap_or("operator"),
            )),
        }
    }
}

impl fmt::Display for Operator {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Operator::Alternation(a) => write!(
                f,
                "alternation {} cycle={} period={} phase={}",
                a.target,
                a.cycle.join(","),
                a.period,
                a.phase
            ),
            Operator::Progression(p) => write!(
                f,
                "progression {} start={} step={} block={}",
                p.target, p.start, p.step, p.block_size
            ),
            other => f.write_str(other.reserved_name().unwrap_or("?")),
        }
    }
}

impl FromStr for Operator {
    type Err = TemplateError;

    /// Parses the textual form produced by `Display`, e.g.
    /// `alternation NP1.number cycle=s,p period=1` or
    /// `progression count(NP3) start=1 step=1 block=4`.
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let err = |reason: &str| TemplateError::Parse {
            text: s.to_string(),
            reason: reason.to_string(),
        };
        let mut toks = s.split_whitespace();
        let kind = toks.next().ok_or_else(|| err("empty operator"))?;
        match kind {
            "conjunction" => return Ok(Operator::Conjunction),
            "disjunction" => return Ok(Operator::Disjunction),
            "xor" => return Ok(Operator::Xor),
            "alternation" | "progression" => {}
            _ => return Err(err("expected alternation or progression")),
        }
        let target = toks.next().ok_or_else(|| err("missing target"))?;
        let mut params = BTreeMap::new();
        for tok in toks {
            let (k, v) = tok.split_once('=').ok_or_else(|| err("expected key=value"))?;
            if params.insert(k, v).is_some() {
                return Err(err("repeated parameter"));
            }
        }
        let slot = |t: &str| -> Result<Slot, TemplateError> {
            let (o, a) = t
                .split_once('.')
                .ok_or_else(|| err("target must be Object.attribute"))?;
            Ok(Slot::new(o, a))
        };
        let int = |key: &str, default: Option<i64>| -> Result<i64, TemplateError> {
            match params.get(key) {
                Some(v) => v.parse().map_err(|_| err(&format!("bad integer for {key}"))),
                None => default.ok_or_else(|| err(&format!("missing {key}"))),
            }
        };
        let nonneg = |key: &str, default: Option<i64>| -> Result<u32, TemplateError> {
            u32::try_from(int(key, default)?).map_err(|_| err(&format!("{key} must be >= 0")))
        };
        let allowed: &[&str] = if kind == "alternation" {
            &["cycle", "period", "phase"]
        } else {
            &["start", "step", "block"]
        };
        if let Some(k) = params.keys().find(|k| !allowed.contains(k)) {
            return Err(err(&format!("unknown parameter {k}")));
        }
        if kind == "alternation" {
            let cycle = params
                .get("cycle")
                .ok_or_else(|| err("missing cycle"))?
                .split(',')
                .map(str::to_string)
                .collect();
            Ok(Operator::Alternation(AlternationSpec {
                target: slot(target)?,
                cycle,
                period: nonneg("period", Some(1))?,
                phase: nonneg("phase", Some(0))?,
            }))
        } else {
            let target = match target
                .strip_prefix("count(")
                .and_then(|r| r.strip_suffix(')'))
            {
                Some(object) => ProgressionTarget::Count {
                    object: object.to_string(),
                },
                None => ProgressionTarget::Ordinal { slot: slot(target)? },
            };
            Ok(Operator::Progression(ProgressionSpec {
                target,
                start: int("start", None)?,
                step: int("step", Some(1))?,
                block_size: nonneg("block", Some(1))?,
            }))
        }
    }
}

/// One present object occurrence with its attribute values.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Cell {
    pub object: String,
    pub occurrence: u32,
    pub values: Bundle,
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct TemplateRow {
    /// Operator index this row instantiates (0-based).
    pub index: usize,
    pub cells: Vec<Cell>,
    /// Position in `cells` of the cell introduced by a coordinator instead of its
    /// usual function word. `None` for every well-formed row.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub coordination: Option<usize>,
}

impl TemplateRow {
    pub fn occurrences(&self, object: &str) -> usize {
        self.cells.iter().filter(|c| c.object == object).count()
    }

    pub fn value(&self, slot: &Slot) -> Option<&str> {
        self.cells
            .iter()
            .find(|c| c.object == slot.object)
            .and_then(|c| c.values.get(&slot.attribute))
            .map(String::as_str)
    }

    /// Row content ignoring the index, for comparing an item against a prediction.
    pub fn same_content(&self, other: &TemplateRow) -> bool {
        self.cells == other.cells && self.coordination == other.coordination
    }

    /// Compact rendering such as `NP1:p NP2:p NP3:s V:p`.
    pub fn render(&self) -> String {
        self.cells
            .iter()
            .enumerate()
            .map(|(i, c)| {
                let vals: Vec<&str> = c.values.values().map(String::as_str).collect();
                let coord = if self.coordination == Some(i) { "and " } else { "" };
                format!("{coord}{}:{}", c.object, vals.join("/"))
            })
            .collect::<Vec<_>>()
            .join(" ")
    }
}

/// Parse the compact notation produced by [`TemplateRow::render`], e.g.
/// `NP1:p NP2:p and NP3:s V:p`. Values of multi-attribute objects are joined
/// by `/` in attribute-name order.
pub fn parse_row(g: &PhenomenonGrammar, index: usize, text: &str) -> Result<TemplateRow, TemplateError> {
    let bad = |reason: String| TemplateError::Parse {
        text: text.to_string(),
        reason,
    };
    let mut cells: Vec<Cell> = Vec::new();
    let mut coordination = None;
    let mut pending_and = false;
    for tok in text.split_whitespace() {
        if tok == "and" {
            pending_and = true;
            continue;
        }
        let (object, vals) = tok
            .split_once(':')
            .ok_or_else(|| bad(format!("expected `Object:value`, got `{tok}`")))?;
        let def = g
            .object(object)
            .ok_or_else(|| bad(format!("unknown object `{object}`")))?;
        let mut names: Vec<&String> = def.attributes.iter().collect();
        names.sort();
        let values: Vec<&str> = if vals.is_empty() { Vec::new() } else { vals.split('/').collect() };
        if values.len() != names.len() {
            return Err(bad(format!("`{tok}` needs {} values", names.len())));
        }
        let mut bundle = Bundle::new();
        for (name, v) in names.into_iter().zip(values) {
            let attr = g.attribute(name).expect("validated grammar");
            if attr.position(v).is_none() {
                return Err(bad(format!("`{v}` is not a value of {name}")));
            }
            bundle.insert(name.clone(), v.to_string());
        }
        if pending_and {
            coordination = Some(cells.len());
            pending_and = false;
        }
        let occurrence = cells.iter().filter(|c| c.object == object).count() as u32;
        cells.push(Cell {
            object: object.to_string(),
            occurrence,
            values: bundle,
        });
    }
    Ok(TemplateRow {
        index,
        cells,
        coordination,
    })
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TemplateMatrix {
    pub shape: Shape,
    pub rows: Vec<TemplateRow>,
    pub operators: Vec<Operator>,
}

impl TemplateMatrix {
    /// The withheld answer row.
    pub fn answer_row(&self) -> &TemplateRow {
        self.rows.last().expect("shape.n >= 2")
    }

    pub fn context_rows(&self) -> &[TemplateRow] {
        &self.rows[..self.rows.len() - 1]
    }

    /// Keep a seeded subset of `keep` rows (in order), always including the answer row.
    pub fn sample(&self, keep: usize, seed: u64) -> Result<TemplateMatrix, TemplateError> {
        let n = self.rows.len();
        if keep < 2 || keep > n {
            return Err(TemplateError::InvalidShape(format!(
                "cannot sample {keep} rows from {n}"
            )));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut picked: Vec<usize> = sample(&mut rng, n - 1, keep - 1).into_vec();
        picked.sort_unstable();
        picked.push(n - 1);
        Ok(TemplateMatrix {
            shape: Shape {
                n: keep,
                l: self.shape.l,
            },
            rows: picked.into_iter().map(|i| self.rows[i].clone()).collect(),
            operators: self.operators.clone(),
        })
    }
}

/// Validate operators against a grammar and each other.
pub fn check_operators(g: &PhenomenonGrammar, ops: &[Operator]) -> Result<(), TemplateError> {
    let mut seen = BTreeSet::new();
    for op in ops {
        op.validate(g)?;
        let key = op.target_key().expect("validated operator");
        if !seen.insert(key.clone()) {
            return Err(TemplateError::ConflictingOperators(key.to_string()));
        }
    }
    Ok(())
}

/// Instantiate a single row at `index`. Operators must already be checked.
pub fn build_row(
    g: &PhenomenonGrammar,
    ops: &[Operator],
    index: usize,
) -> Result<TemplateRow, TemplateError> {
    let mut values: BTreeMap<Slot, String> = BTreeMap::new();
    let mut fixed: BTreeSet<Slot> = BTreeSet::new();
    let mut counts: BTreeMap<String, i64> = BTreeMap::new();

    for op in ops {
        match (op.target_key(), op.value_at(g, index)?) {
            (Some(TargetKey::Slot(slot)), OpValue::Symbol(v)) => {
                values.insert(slot.clone(), v);
                fixed.insert(slot);
            }
            (Some(TargetKey::Count(object)), OpValue::Count(c)) => {
                counts.insert(object, c);
            }
            _ => unreachable!("operator kind and value agree"),
        }
    }
    for slot in g.slots() {
        if !values.contains_key(&slot) {
            let def = g.attribute(&slot.attribute).expect("validated grammar");
            values.insert(slot, def.default_value().to_string());
        }
    }

    for rule in g.match_rules() {
        let source = rule
            .participants
            .iter()
            .find(|p| fixed.contains(*p))
            .unwrap_or(&rule.participants[0])
            .clone();
        let forced = values[&source].clone();
        for p in &rule.participants {
            if *p == source {
                continue;
            }
            if fixed.contains(p) && values[p] != forced {
                return Err(TemplateError::EConflict {
                    slot: p.to_string(),
                    row: index,
                    forced,
                    assigned: values[p].clone(),
                });
            }
            values.insert(p.clone(), forced.clone());
            fixed.insert(p.clone());
        }
        fixed.insert(source);
    }

    let mut cells = Vec::new();
    for obj in &g.objects {
        let occurrences = match obj.count_domain() {
            None => 1,
            Some((lo, hi)) => {
                let count = counts.get(&obj.name).copied().unwrap_or(lo);
                if count < lo || count > hi {
                    return Err(TemplateError::DomainExceeded {
                        target: format!("count({})", obj.name),
                        row: index,
                        value: count,
                    });
                }
                (count - lo) as u32
            }
        };
        let bundle: Bundle = obj
            .attributes
            .iter()
            .map(|a| (a.clone(), values[&Slot::new(&obj.name, a)].clone()))
            .collect();
        for occurrence in 0..occurrences {
            cells.push(Cell {
                object: obj.name.clone(),
                occurrence,
                values: bundle.clone(),
            });
        }
    }
    Ok(TemplateRow {
        index,
        cells,
        coordination: None,
    })
}

/// Apply operators to a grammar over `shape.n` rows.
pub fn build_template(
    g: &PhenomenonGrammar,
    shape: Shape,
    ops: &[Operator],
) -> Result<TemplateMatrix, TemplateError> {
    shape.validate()?;
    check_operators(g, ops)?;
    let rows = (0..shape.n)
        .map(|i| build_row(g, ops, i))
        .collect::<Result<Vec<_>, _>>()?;
    Ok(TemplateMatrix {
        shape,
        rows,
        operators: ops.to_vec(),
    })
}
