//! Brute-force rule induction over a context sequence.
//!
//! Every free `(object, attribute)` slot gets the set of bounded alternations (and,
//! for ordinal attributes, progressions) that reproduce its observed values; the
//! countable object gets the bounded count progressions that reproduce its observed
//! counts. Slots forced by an E `match` rule are not enumerated: their observations
//! are merged into the rule's first participant. A hypothesis is one candidate per
//! slot plus one count rule; its description length is the sum of its parts.

use std::cmp::Ordering;
use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::answers::AnswerSet;
use crate::grammar::{AttributeKind, PhenomenonGrammar, Slot};
use crate::realize::ContextSequence;
use crate::template::{
    build_row, AlternationSpec, Operator, ProgressionSpec, ProgressionTarget, TemplateError,
    TemplateRow,
};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum SolveError {
    #[error("context needs at least two rows, found {0}")]
    TooFewRows(usize),
    #[error("no bounded rule reproduces the context: {0}")]
    NoConsistentHypothesis(String),
    #[error("hypothesis space of {0} exceeds the configured limit")]
    SpaceTooLarge(u128),
    #[error("the predicted completion matches no option")]
    NoMatchingOption,
    #[error(transparent)]
    Template(#[from] TemplateError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct HypothesisBounds {
    pub max_period: u32,
    /// Largest progression block; `None` means the number of context rows.
    pub max_block: Option<u32>,
    pub max_hypotheses: u128,
}

impl Default for HypothesisBounds {
    fn default() -> Self {
        HypothesisBounds {
            max_period: 4,
            max_block: None,
            max_hypotheses: 1_000_000,
        }
    }
}

/// Candidate rule for one slot.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(tag = "rule", rename_all = "lowercase")]
pub enum CellRule {
    Alternation(AlternationSpec),
    Progression(ProgressionSpec),
}

impl CellRule {
    pub fn description_length(&self) -> u32 {
        match self {
            CellRule::Alternation(a) => a.period,
            CellRule::Progression(p) => progression_length(p),
        }
    }

    fn sort_key(&self) -> (u32, u8, i64, i64, Vec<String>) {
        match self {
            CellRule::Alternation(a) => (a.period, 0, a.phase as i64, 0, a.cycle.clone()),
            CellRule::Progression(p) => (p.block_size, 1, p.start, p.step, Vec::new()),
        }
    }

    fn to_operator(&self) -> Operator {
        match self {
            CellRule::Alternation(a) => Operator::Alternation(a.clone()),
            CellRule::Progression(p) => Operator::Progression(p.clone()),
        }
    }
}

impl fmt::Display for CellRule {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CellRule::Alternation(a) => {
                write!(f, "alt[{}] period {} phase {}", a.cycle.join(","), a.period, a.phase)
            }
            CellRule::Progression(p) => fmt_progression(f, p),
        }
    }
}

fn fmt_progression(f: &mut fmt::Formatter<'_>, p: &ProgressionSpec) -> fmt::Result {
    write!(
        f,
        "prog start {} step {} block {}",
        p.start, p.step, p.block_size
    )
}

fn progression_length(p: &ProgressionSpec) -> u32 {
    if p.step == 0 {
        1
    } else {
        2
    }
}

fn progression_key(p: &ProgressionSpec) -> (i64, i64, u32) {
    (p.step.abs(), p.start, p.block_size)
}

/// An `E` constraint assumed by a hypothesis: `derived` equals `source`.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct MatchAssumption {
    pub source: Slot,
    pub derived: Slot,
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct RuleHypothesis {
    /// One rule per free slot, in grammar declaration order.
    pub per_cell: Vec<(Slot, CellRule)>,
    pub count_rule: Option<ProgressionSpec>,
    pub e_rules: Vec<MatchAssumption>,
}

impl RuleHypothesis {
    pub fn description_length(&self) -> u32 {
        self.per_cell
            .iter()
            .map(|(_, r)| r.description_length())
            .sum::<u32>()
            + self.count_rule.as_ref().map_or(0, progression_length)
    }

    pub fn rule_for(&self, slot: &Slot) -> Option<&CellRule> {
        self.per_cell.iter().find(|(s, _)| s == slot).map(|(_, r)| r)
    }

    /// The hypothesis as template operators.
    pub fn operators(&self) -> Vec<Operator> {
        self.per_cell
            .iter()
            .map(|(_, r)| r.to_operator())
            .chain(self.count_rule.iter().cloned().map(Operator::Progression))
            .collect()
    }

    /// Operators whose value changes across rows; constant rules are dropped.
    pub fn varying_operators(&self) -> Vec<Operator> {
        self.operators()
            .into_iter()
            .filter(|op| match op {
                Operator::Alternation(a) => a.cycle.len() > 1,
                Operator::Progression(p) => p.step != 0,
                _ => true,
            })
            .collect()
    }

    /// Predicted row at a 0-based index.
    pub fn predict(&self, g: &PhenomenonGrammar, index: usize) -> Result<TemplateRow, SolveError> {
        Ok(build_row(g, &self.operators(), index)?)
    }

    fn cmp_key(&self, other: &Self) -> Ordering {
        self.description_length()
            .cmp(&other.description_length())
            .then_with(|| {
                let a = self.per_cell.iter().map(|(_, r)| r.sort_key());
                let b = other.per_cell.iter().map(|(_, r)| r.sort_key());
                a.cmp(b)
            })
            .then_with(|| {
                self.count_rule
                    .as_ref()
                    .map(progression_key)
                    .cmp(&other.count_rule.as_ref().map(progression_key))
            })
    }
}

impl fmt::Display for RuleHypothesis {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let mut first = true;
        let mut sep = |f: &mut fmt::Formatter<'_>| {
            if !std::mem::take(&mut first) {
                f.write_str("; ")
            } else {
                Ok(())
            }
        };
        for (slot, rule) in &self.per_cell {
            sep(f)?;
            write!(f, "{slot}: {rule}")?;
        }
        if let Some(p) = &self.count_rule {
            sep(f)?;
            write!(f, "{}: ", p.target)?;
            fmt_progression(f, p)?;
        }
        for e in &self.e_rules {
            sep(f)?;
            write!(f, "E: {} = {}", e.derived, e.source)?;
        }
        Ok(())
    }
}

/// Per-slot candidate lists, before taking the product.
#[derive(Debug, Clone)]
pub struct CandidateSpace {
    pub slots: Vec<(Slot, Vec<CellRule>)>,
    pub count: Option<Vec<ProgressionSpec>>,
    pub e_rules: Vec<MatchAssumption>,
}

impl CandidateSpace {
    /// Number of hypotheses in the full product.
    pub fn size(&self) -> u128 {
        let slots: u128 = self.slots.iter().map(|(_, c)| c.len() as u128).product();
        slots * self.count.as_ref().map_or(1, |c| c.len() as u128)
    }

    /// Keep only the per-slot candidates of minimal description length.
    pub fn minimal(&self) -> CandidateSpace {
        fn keep_min<T: Clone>(items: &[T], len: impl Fn(&T) -> u32) -> Vec<T> {
            let best = items.iter().map(&len).min().unwrap_or(0);
            items.iter().filter(|c| len(c) == best).cloned().collect()
        }
        CandidateSpace {
            slots: self
                .slots
                .iter()
                .map(|(s, c)| (s.clone(), keep_min(c, CellRule::description_length)))
                .collect(),
            count: self.count.as_ref().map(|c| keep_min(c, progression_length)),
            e_rules: self.e_rules.clone(),
        }
    }

    /// Every hypothesis in the product, ordered by description length, then
    /// lexicographically by slot order, period and phase.
    pub fn hypotheses(&self) -> Vec<RuleHypothesis> {
        let mut partial: Vec<Vec<(Slot, CellRule)>> = vec![Vec::new()];
        for (slot, cands) in &self.slots {
            partial = partial
                .into_iter()
                .flat_map(|prefix| {
                    cands.iter().map(move |c| {
                        let mut next = prefix.clone();
                        next.push((slot.clone(), c.clone()));
                        next
                    })
                })
                .collect();
        }
        let counts: Vec<Option<ProgressionSpec>> = match &self.count {
            Some(c) => c.iter().cloned().map(Some).collect(),
            None => vec![None],
        };
        let mut out: Vec<RuleHypothesis> = partial
            .into_iter()
            .flat_map(|per_cell| {
                counts.iter().map(move |count_rule| RuleHypothesis {
                    per_cell: per_cell.clone(),
                    count_rule: count_rule.clone(),
                    e_rules: self.e_rules.clone(),
                })
            })
            .collect();
        out.sort_by(|a, b| a.cmp_key(b));
        out
    }
}

/// Ordered arrangements of distinct values, lengths `1..=values.len()`.
fn cycles(values: &[String]) -> Vec<Vec<String>> {
    fn extend(values: &[String], used: &mut Vec<bool>, cur: &mut Vec<String>, out: &mut Vec<Vec<String>>) {
        if !cur.is_empty() {
            out.push(cur.clone());
        }
        for i in 0..values.len() {
            if !used[i] {
                used[i] = true;
                cur.push(values[i].clone());
                extend(values, used, cur, out);
                cur.pop();
                used[i] = false;
            }
        }
    }
    let mut out = Vec::new();
    extend(values, &mut vec![false; values.len()], &mut Vec::new(), &mut out);
    out
}

/// Observed values of a slot, merged across E-rule participants: row index -> value.
type Observations = BTreeMap<usize, String>;

fn observe(
    rows: &[TemplateRow],
    slots: &[Slot],
) -> Result<Observations, SolveError> {
    let mut obs = Observations::new();
    for row in rows {
        for slot in slots {
            for cell in row.cells.iter().filter(|c| c.object == slot.object) {
                let Some(v) = cell.values.get(&slot.attribute) else {
                    continue;
                };
                match obs.get(&row.index) {
                    Some(prev) if prev != v => {
                        return Err(SolveError::NoConsistentHypothesis(format!(
                            "row {} assigns {} and {} within {}",
                            row.index,
                            prev,
                            v,
                            slots.iter().map(|s| s.to_string()).collect::<Vec<_>>().join("=")
                        )))
                    }
                    _ => {
                        obs.insert(row.index, v.clone());
                    }
                }
            }
        }
    }
    Ok(obs)
}

/// Build the per-slot candidate lists for a context predicting row `target`.
pub fn candidate_space(
    context: &[TemplateRow],
    g: &PhenomenonGrammar,
    bounds: &HypothesisBounds,
    target: usize,
) -> Result<CandidateSpace, SolveError> {
    if context.len() < 2 {
        return Err(SolveError::TooFewRows(context.len()));
    }
    let max_block = bounds.max_block.unwrap_or(context.len() as u32).max(1);
    let derived = g.derived_slots();

    // Group each free slot with the slots an E rule forces equal to it.
    let mut groups: BTreeMap<Slot, Vec<Slot>> = BTreeMap::new();
    let mut e_rules = Vec::new();
    for rule in g.match_rules() {
        let source = rule.participants[0].clone();
        for d in &rule.participants[1..] {
            e_rules.push(MatchAssumption {
                source: source.clone(),
                derived: d.clone(),
            });
            groups.entry(source.clone()).or_default().push(d.clone());
        }
    }

    let mut slots = Vec::new();
    for slot in g.slots() {
        if derived.contains(&slot) {
            continue;
        }
        let mut members = vec![slot.clone()];
        members.extend(groups.get(&slot).cloned().unwrap_or_default());
        let obs = observe(context, &members)?;
        let def = g.attribute(&slot.attribute).expect("validated grammar");
        let mut cands = Vec::new();
        for cycle in cycles(&def.values) {
            for period in 1..=bounds.max_period {
                for phase in 0..period * cycle.len() as u32 {
                    let a = AlternationSpec {
                        target: slot.clone(),
                        cycle: cycle.clone(),
                        period,
                        phase,
                    };
                    if obs.iter().all(|(&i, v)| a.value_at(i) == v) {
                        cands.push(CellRule::Alternation(a));
                    }
                }
            }
        }
        if def.kind == AttributeKind::Ordinal {
            let len = def.values.len() as i64;
            for p in progressions(
                ProgressionTarget::Ordinal { slot: slot.clone() },
                0,
                len - 1,
                max_block,
                target,
            ) {
                let ok = obs.iter().all(|(&i, v)| {
                    let raw = p.raw_at(i);
                    def.values.get(raw as usize) == Some(v)
                });
                if ok {
                    cands.push(CellRule::Progression(p));
                }
            }
        }
        if cands.is_empty() {
            return Err(SolveError::NoConsistentHypothesis(format!(
                "no bounded rule reproduces {slot}"
            )));
        }
        cands.sort_by(|a, b| {
            a.description_length()
                .cmp(&b.description_length())
                .then_with(|| a.sort_key().cmp(&b.sort_key()))
        });
        slots.push((slot, cands));
    }

    let count = match g.countable_object() {
        None => None,
        Some(obj) => {
            let (lo, hi) = obj.count_domain().expect("countable");
            let observed: Vec<(usize, i64)> = context
                .iter()
                .map(|r| (r.index, lo + r.occurrences(&obj.name) as i64))
                .collect();
            let mut cands: Vec<ProgressionSpec> = progressions(
                ProgressionTarget::Count {
                    object: obj.name.clone(),
                },
                lo,
                hi,
                max_block,
                target,
            )
            .into_iter()
            .filter(|p| observed.iter().all(|&(i, c)| p.raw_at(i) == c))
            .collect();
            if cands.is_empty() {
                return Err(SolveError::NoConsistentHypothesis(format!(
                    "no bounded progression reproduces the count of {}",
                    obj.name
                )));
            }
            cands.sort_by_key(|p| (progression_length(p), progression_key(p)));
            Some(cands)
        }
    };

    Ok(CandidateSpace {
        slots,
        count,
        e_rules,
    })
}

/// Progressions with step in {-1, 0, 1} that stay within `[lo, hi]` on rows
/// `0..=target`. Step 0 only appears with block size 1.
fn progressions(
    target_kind: ProgressionTarget,
    lo: i64,
    hi: i64,
    max_block: u32,
    target: usize,
) -> Vec<ProgressionSpec> {
    let mut out = Vec::new();
    for start in lo..=hi {
        for step in [-1i64, 0, 1] {
            let blocks = if step == 0 { 1..=1 } else { 1..=max_block };
            for block_size in blocks {
                let p = ProgressionSpec {
                    target: target_kind.clone(),
                    start,
                    step,
                    block_size,
                };
                let in_domain = (0..=target).all(|i| {
                    let v = p.raw_at(i);
                    lo <= v && v <= hi
                });
                if in_domain {
                    out.push(p);
                }
            }
        }
    }
    out
}

fn default_target(context: &[TemplateRow]) -> usize {
    context.iter().map(|r| r.index).max().map_or(0, |m| m + 1)
}

/// All hypotheses within bounds that reproduce every context row, shortest first.
pub fn enumerate_hypotheses(
    context: &[TemplateRow],
    g: &PhenomenonGrammar,
    bounds: &HypothesisBounds,
) -> Result<Vec<RuleHypothesis>, SolveError> {
    let space = candidate_space(context, g, bounds, default_target(context))?;
    let size = space.size();
    if size > bounds.max_hypotheses {
        return Err(SolveError::SpaceTooLarge(size));
    }
    Ok(space.hypotheses())
}

/// Hypotheses of minimal description length only.
pub fn minimal_hypotheses(
    context: &[TemplateRow],
    g: &PhenomenonGrammar,
    bounds: &HypothesisBounds,
    target: usize,
) -> Result<Vec<RuleHypothesis>, SolveError> {
    let space = candidate_space(context, g, bounds, target)?.minimal();
    let size = space.size();
    if size > bounds.max_hypotheses {
        return Err(SolveError::SpaceTooLarge(size));
    }
    Ok(space.hypotheses())
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "confidence", content = "options", rename_all = "lowercase")]
pub enum Confidence {
    Exact,
    /// Indices of every option some minimal hypothesis accepts.
    Ambiguous(Vec<usize>),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Solution {
    pub chosen_index: usize,
    pub hypothesis: RuleHypothesis,
    pub prediction: TemplateRow,
    pub confidence: Confidence,
}

/// Pick the option that continues the context, given abstract annotations.
pub fn solve_rows(
    context: &[TemplateRow],
    options: &[TemplateRow],
    g: &PhenomenonGrammar,
    bounds: &HypothesisBounds,
) -> Result<Solution, SolveError> {
    let target = options
        .first()
        .map(|o| o.index)
        .filter(|&i| options.iter().all(|o| o.index == i))
        .unwrap_or_else(|| default_target(context));
    let hypotheses = minimal_hypotheses(context, g, bounds, target)?;

    let mut predictions: Vec<(TemplateRow, &RuleHypothesis)> = Vec::new();
    for h in &hypotheses {
        let row = h.predict(g, target)?;
        if !predictions.iter().any(|(p, _)| p.same_content(&row)) {
            predictions.push((row, h));
        }
    }

    let mut accepted: BTreeMap<usize, usize> = BTreeMap::new();
    for (pi, (pred, _)) in predictions.iter().enumerate() {
        for (oi, opt) in options.iter().enumerate() {
            if opt.same_content(pred) {
                accepted.entry(oi).or_insert(pi);
            }
        }
    }
    let (&chosen_index, &pi) = accepted.iter().next().ok_or(SolveError::NoMatchingOption)?;
    let confidence = if accepted.len() == 1 {
        Confidence::Exact
    } else {
        Confidence::Ambiguous(accepted.keys().copied().collect())
    };
    Ok(Solution {
        chosen_index,
        hypothesis: predictions[pi].1.clone(),
        prediction: predictions[pi].0.clone(),
        confidence,
    })
}

/// Solve a realized instance from its abstract annotations.
pub fn solve(
    context: &ContextSequence,
    options: &[TemplateRow],
    g: &PhenomenonGrammar,
) -> Result<Solution, SolveError> {
    let rows: Vec<TemplateRow> = context.items.iter().map(|i| i.abstract_row.clone()).collect();
    solve_rows(&rows, options, g, &HypothesisBounds::default())
}

#[derive(Debug, Clone, PartialEq, Eq, Error, Serialize, Deserialize)]
pub enum VerifyFailure {
    #[error("solver failed: {0}")]
    Solver(String),
    #[error("no option matches the predicted completion")]
    NoMatchingOption,
    #[error("ambiguous: options {0:?} are all rule-consistent")]
    Ambiguous(Vec<usize>),
    #[error("solver chose option {chosen}, stored answer is {stored}")]
    WrongChoice { chosen: usize, stored: usize },
}

/// Pass iff the solver is exact and selects the stored correct option.
pub fn verify_unique(
    context: &ContextSequence,
    answers: &AnswerSet,
    g: &PhenomenonGrammar,
) -> Result<Solution, VerifyFailure> {
    let options: Vec<TemplateRow> = answers
        .options
        .iter()
        .map(|o| o.item.abstract_row.clone())
        .collect();
    verify_rows(context, &options, answers.correct_index, g)
}

pub fn verify_rows(
    context: &ContextSequence,
    options: &[TemplateRow],
    correct_index: usize,
    g: &PhenomenonGrammar,
) -> Result<Solution, VerifyFailure> {
    let solution = solve(context, options, g).map_err(|e| match e {
        SolveError::NoMatchingOption => VerifyFailure::NoMatchingOption,
        other => VerifyFailure::Solver(other.to_string()),
    })?;
    if let Confidence::Ambiguous(list) = &solution.confidence {
        return Err(VerifyFailure::Ambiguous(list.clone()));
    }
    if solution.chosen_index != correct_index {
        return Err(VerifyFailure::WrongChoice {
            chosen: solution.chosen_index,
            stored: correct_index,
        });
    }
    Ok(solution)
}

/// Distinct values predicted for each slot across hypotheses; handy for reports.
pub fn slot_predictions(
    hypotheses: &[RuleHypothesis],
    g: &PhenomenonGrammar,
    index: usize,
) -> BTreeMap<Slot, BTreeSet<String>> {
    let mut out: BTreeMap<Slot, BTreeSet<String>> = BTreeMap::new();
    for h in hypotheses {
        if let Ok(row) = h.predict(g, index) {
            for slot in g.slots() {
                if let Some(v) = row.value(&slot) {
                    out.entry(slot).or_default().insert(v.to_string());
                }
            }
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn cycles_of_two_values() {
        let vals = vec!["s".to_string(), "p".to_string()];
        let got = cycles(&vals);
        assert_eq!(got.len(), 4);
        assert!(got.contains(&vec!["p".to_string(), "s".to_string()]));
    }

    #[test]
    fn cycles_count_is_arrangements() {
        // sum_{k=1..3} 3!/(3-k)! = 3 + 6 + 6
        let vals: Vec<String> = ["a", "b", "c"].iter().map(|s| s.to_string()).collect();
        assert_eq!(cycles(&vals).len(), 15);
    }

    #[test]
    fn progressions_respect_domain() {
        let ps = progressions(
            ProgressionTarget::Count { object: "X".into() },
            1,
            2,
            4,
            7,
        );
        for p in &ps {
            assert!((0..=7).all(|i| (1..=2).contains(&p.raw_at(i))));
        }
        assert!(ps.iter().any(|p| p.start == 1 && p.step == 1 && p.block_size == 4));
        assert!(!ps.iter().any(|p| p.start == 1 && p.step == 1 && p.block_size == 2));
    }
}
