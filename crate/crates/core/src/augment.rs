//! Lexical augmentation: substitute noun phrases with provider-ranked alternatives,
//! keeping the abstract template fixed. A substitution is kept only if it sits in
//! the top-`window` ranks, preserves the cell's attribute bundle, and changes the
//! sentence score by at most `epsilon`.

use std::collections::{BTreeMap, BTreeSet};
use std::io::{BufRead, BufReader, Write};
use std::path::Path;
use std::process::{Child, ChildStdin, ChildStdout, Command, Stdio};
use std::sync::Mutex;

use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::answers::{AnswerOption, AnswerSet};
use crate::grammar::PhenomenonGrammar;
use crate::instance::BlmInstance;
use crate::lexicon::EntryId;
use crate::realize::{cell_spans, with_entry, ContextSequence, RealizedItem};
use crate::seed;
use crate::solver::VerifyFailure;

#[derive(Debug, Error)]
pub enum AugmentError {
    #[error("provider unavailable: {0}")]
    ProviderUnavailable(String),
    #[error("malformed provider response: {0}")]
    MalformedProviderResponse(String),
    #[error("no acceptable candidate at any slot of instance {0}")]
    NoAcceptableCandidates(String),
    #[error("bad scorer table at line {line}: {message}")]
    BadTable { line: usize, message: String },
    #[error("budget must be at least 1")]
    ZeroBudget,
    #[error("augmented instance failed verification: {0}")]
    Verify(#[from] VerifyFailure),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoredSurface {
    pub surface: String,
    pub score: f64,
}

/// One request to a provider.
#[derive(Debug, Clone, Copy)]
pub struct SlotRequest<'a> {
    pub sentence: &'a str,
    /// Byte span of the phrase to replace.
    pub span: (usize, usize),
    pub k: usize,
    /// Surface form currently in the slot.
    pub current: &'a str,
    /// Lexicalized forms sharing the slot's category and bundle.
    pub alternatives: &'a [String],
}

/// Source of ranked alternatives and sentence scores.
pub trait CandidateProvider: Send + Sync {
    fn propose(&self, req: &SlotRequest<'_>) -> Result<Vec<ScoredSurface>, AugmentError>;
    fn score_sentence(&self, sentence: &str) -> Result<f64, AugmentError>;
}

fn normalize_token(tok: &str) -> String {
    tok.trim_matches(|c: char| matches!(c, '.' | ',' | ';' | ':' | '!' | '?'))
        .to_lowercase()
}

/// Deterministic table-driven scorer.
///
/// Phrase score is the table value of the exact (lowercased) surface, else 0.
/// Sentence score is the sum of table values over a greedy longest-match
/// segmentation of the lowercased, punctuation-stripped tokens; unmatched tokens
/// score 0.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct StubScorer {
    table: BTreeMap<String, f64>,
    longest: usize,
}

impl StubScorer {
    pub fn new(entries: impl IntoIterator<Item = (String, f64)>) -> Self {
        let table: BTreeMap<String, f64> = entries
            .into_iter()
            .map(|(s, v)| (s.split_whitespace().map(normalize_token).collect::<Vec<_>>().join(" "), v))
            .collect();
        let longest = table
            .keys()
            .map(|k| k.split(' ').count())
            .max()
            .unwrap_or(1);
        StubScorer { table, longest }
    }

    /// Parse `surface<TAB>score` lines; `#` starts a comment line.
    pub fn parse(text: &str) -> Result<Self, AugmentError> {
        let mut entries = Vec::new();
        for (i, line) in text.lines().enumerate() {
            let line = line.trim_end_matches('\r');
            if line.trim().is_empty() || line.trim_start().starts_with('#') {
                continue;
            }
            let (surface, score) = line.split_once('\t').ok_or_else(|| AugmentError::BadTable {
                line: i + 1,
                message: "expected surface<TAB>score".into(),
            })?;
            let score: f64 = score.trim().parse().map_err(|_| AugmentError::BadTable {
                line: i + 1,
                message: format!("bad score `{}`", score.trim()),
            })?;
            if !score.is_finite() || surface.trim().is_empty() {
                return Err(AugmentError::BadTable {
                    line: i + 1,
                    message: "empty surface or non-finite score".into(),
                });
            }
            entries.push((surface.trim().to_string(), score));
        }
        Ok(StubScorer::new(entries))
    }

    pub fn load(path: &Path) -> Result<Self, AugmentError> {
        Self::parse(&std::fs::read_to_string(path)?)
    }

    pub fn phrase_score(&self, surface: &str) -> f64 {
        let key = surface
            .split_whitespace()
            .map(normalize_token)
            .collect::<Vec<_>>()
            .join(" ");
        self.table.get(&key).copied().unwrap_or(0.0)
    }

    pub fn sentence_score(&self, sentence: &str) -> f64 {
        let toks: Vec<String> = sentence
            .split_whitespace()
            .map(normalize_token)
            .filter(|t| !t.is_empty())
            .collect();
        let mut total = 0.0;
        let mut i = 0;
        while i < toks.len() {
            let mut matched = false;
            for len in (1..=self.longest.min(toks.len() - i)).rev() {
                if let Some(v) = self.table.get(&toks[i..i + len].join(" ")) {
                    total += v;
                    i += len;
                    matched = true;
                    break;
                }
            }
            if !matched {
                i += 1;
            }
        }
        total
    }
}

impl CandidateProvider for StubScorer {
    /// The `k` highest-scoring lexicalized alternatives (ties by surface).
    fn propose(&self, req: &SlotRequest<'_>) -> Result<Vec<ScoredSurface>, AugmentError> {
        let mut out: Vec<ScoredSurface> = req
            .alternatives
            .iter()
            .map(|s| ScoredSurface {
                surface: s.clone(),
                score: self.phrase_score(s),
            })
            .collect();
        out.sort_by(|a, b| b.score.total_cmp(&a.score).then_with(|| a.surface.cmp(&b.surface)));
        out.truncate(req.k);
        Ok(out)
    }

    fn score_sentence(&self, sentence: &str) -> Result<f64, AugmentError> {
        Ok(self.sentence_score(sentence))
    }
}

/// Proposes only the phrase already in the slot; every sentence scores 0.
#[derive(Debug, Clone, Copy, Default)]
pub struct IdentityProvider;

impl CandidateProvider for IdentityProvider {
    fn propose(&self, req: &SlotRequest<'_>) -> Result<Vec<ScoredSurface>, AugmentError> {
        Ok(if req.k == 0 {
            Vec::new()
        } else {
            vec![ScoredSurface {
                surface: req.current.to_string(),
                score: 0.0,
            }]
        })
    }

    fn score_sentence(&self, _sentence: &str) -> Result<f64, AugmentError> {
        Ok(0.0)
    }
}

/// Wire request: one JSON object per line.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProviderRequest {
    pub sentence: String,
    /// `[start, end)` byte span, or `null` for a sentence-score request.
    pub slot: Option<[usize; 2]>,
    pub k: usize,
}

/// Wire response: one JSON object per line.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProviderResponse {
    #[serde(default)]
    pub candidates: Vec<ScoredSurface>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sentence_score: Option<f64>,
}

fn check_response(resp: ProviderResponse, req: &ProviderRequest) -> Result<ProviderResponse, AugmentError> {
    if resp.candidates.iter().any(|c| !c.score.is_finite() || c.surface.trim().is_empty()) {
        return Err(AugmentError::MalformedProviderResponse(
            "candidate with empty surface or non-finite score".into(),
        ));
    }
    if req.slot.is_none() {
        match resp.sentence_score {
            Some(s) if s.is_finite() => {}
            _ => {
                return Err(AugmentError::MalformedProviderResponse(
                    "missing or non-finite sentence_score".into(),
                ))
            }
        }
    }
    Ok(resp)
}

fn slot_request(req: &SlotRequest<'_>) -> ProviderRequest {
    ProviderRequest {
        sentence: req.sentence.to_string(),
        slot: Some([req.span.0, req.span.1]),
        k: req.k,
    }
}

fn score_request(sentence: &str) -> ProviderRequest {
    ProviderRequest {
        sentence: sentence.to_string(),
        slot: None,
        k: 0,
    }
}

struct ChildPipes {
    child: Child,
    stdin: ChildStdin,
    stdout: BufReader<ChildStdout>,
}

/// Provider running as a child process speaking line-delimited JSON on stdio.
/// Requests are serialized; responses are read in request order.
pub struct SubprocessProvider {
    pipes: Mutex<ChildPipes>,
}

impl SubprocessProvider {
    /// `command` is split on whitespace into program and arguments.
    pub fn spawn(command: &str) -> Result<Self, AugmentError> {
        let mut parts = command.split_whitespace();
        let program = parts
            .next()
            .ok_or_else(|| AugmentError::ProviderUnavailable("empty command".into()))?;
        let mut child = Command::new(program)
            .args(parts)
            .stdin(Stdio::piped())
            .stdout(Stdio::piped())
            .stderr(Stdio::inherit())
            .spawn()
            .map_err(|e| AugmentError::ProviderUnavailable(format!("{command}: {e}")))?;
        let stdin = child.stdin.take().expect("piped");
        let stdout = BufReader::new(child.stdout.take().expect("piped"));
        Ok(SubprocessProvider {
            pipes: Mutex::new(ChildPipes {
                child,
                stdin,
                stdout,
            }),
        })
    }

    fn call(&self, req: &ProviderRequest) -> Result<ProviderResponse, AugmentError> {
        let mut pipes = self.pipes.lock().expect("provider lock");
        let mut line = serde_json::to_string(req).expect("request serializes");
        line.push('\n');
        pipes
            .stdin
            .write_all(line.as_bytes())
            .and_then(|_| pipes.stdin.flush())
            .map_err(|e| AugmentError::ProviderUnavailable(e.to_string()))?;
        let mut buf = String::new();
        let n = pipes
            .stdout
            .read_line(&mut buf)
            .map_err(|e| AugmentError::ProviderUnavailable(e.to_string()))?;
        if n == 0 {
            return Err(AugmentError::ProviderUnavailable(
                "provider closed its output".into(),
            ));
        }
        let resp: ProviderResponse = serde_json::from_str(buf.trim_end())
            .map_err(|e| AugmentError::MalformedProviderResponse(e.to_string()))?;
        check_response(resp, req)
    }
}

impl Drop for SubprocessProvider {
    fn drop(&mut self) {
        if let Ok(p) = self.pipes.get_mut() {
            let _ = p.child.kill();
            let _ = p.child.wait();
        }
    }
}

impl CandidateProvider for SubprocessProvider {
    fn propose(&self, req: &SlotRequest<'_>) -> Result<Vec<ScoredSurface>, AugmentError> {
        Ok(self.call(&slot_request(req))?.candidates)
    }

    fn score_sentence(&self, sentence: &str) -> Result<f64, AugmentError> {
        Ok(self
            .call(&score_request(sentence))?
            .sentence_score
            .expect("checked"))
    }
}

/// Provider reached over HTTP: each request is POSTed as JSON, the body of the
/// reply is one response object.
pub struct HttpProvider {
    url: String,
    client: reqwest::blocking::Client,
}

impl HttpProvider {
    pub fn new(url: &str) -> Result<Self, AugmentError> {
        let client = reqwest::blocking::Client::builder()
            .build()
            .map_err(|e| AugmentError::ProviderUnavailable(e.to_string()))?;
        Ok(HttpProvider {
            url: url.to_string(),
            client,
        })
    }

    fn call(&self, req: &ProviderRequest) -> Result<ProviderResponse, AugmentError> {
        let resp = self
            .client
            .post(&self.url)
            .json(req)
            .send()
            .and_then(|r| r.error_for_status())
            .map_err(|e| AugmentError::ProviderUnavailable(e.to_string()))?;
        let body = resp
            .text()
            .map_err(|e| AugmentError::ProviderUnavailable(e.to_string()))?;
        let parsed: ProviderResponse = serde_json::from_str(body.trim())
            .map_err(|e| AugmentError::MalformedProviderResponse(e.to_string()))?;
        check_response(parsed, req)
    }
}

impl CandidateProvider for HttpProvider {
    fn propose(&self, req: &SlotRequest<'_>) -> Result<Vec<ScoredSurface>, AugmentError> {
        Ok(self.call(&slot_request(req))?.candidates)
    }

    fn score_sentence(&self, sentence: &str) -> Result<f64, AugmentError> {
        Ok(self
            .call(&score_request(sentence))?
            .sentence_score
            .expect("checked"))
    }
}

/// Where candidates and scores come from.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum ScorerBoundary {
    BuiltinStub { table: String },
    External { endpoint: String },
}

impl ScorerBoundary {
    /// `stub:<table>`, `cmd:<command line>` or `url:<http url>`.
    pub fn parse(spec: &str) -> Result<Self, AugmentError> {
        if let Some(t) = spec.strip_prefix("stub:") {
            Ok(ScorerBoundary::BuiltinStub { table: t.to_string() })
        } else if spec.starts_with("cmd:") || spec.starts_with("url:") {
            Ok(ScorerBoundary::External {
                endpoint: spec.to_string(),
            })
        } else {
            Err(AugmentError::ProviderUnavailable(format!(
                "unknown provider `{spec}` (expected stub:, cmd: or url:)"
            )))
        }
    }

    pub fn connect(&self) -> Result<Box<dyn CandidateProvider>, AugmentError> {
        match self {
            ScorerBoundary::BuiltinStub { table } => Ok(Box::new(StubScorer::load(Path::new(table))?)),
            ScorerBoundary::External { endpoint } => {
                if let Some(cmd) = endpoint.strip_prefix("cmd:") {
                    Ok(Box::new(SubprocessProvider::spawn(cmd)?))
                } else if let Some(url) = endpoint.strip_prefix("url:") {
                    Ok(Box::new(HttpProvider::new(url)?))
                } else {
                    Err(AugmentError::ProviderUnavailable(endpoint.clone()))
                }
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(tag = "part", content = "index", rename_all = "lowercase")]
pub enum ItemRef {
    Context(usize),
    Option(usize),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SubstitutionCandidate {
    pub item: ItemRef,
    pub cell: usize,
    pub surface: String,
    /// Lexicon entry the surface resolves to, if lexicalized.
    pub entry: Option<EntryId>,
    /// 1-based position in the provider's ranked list.
    pub rank: usize,
    pub phrase_score: f64,
    pub sentence_score: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "reason", rename_all = "kebab-case")]
pub enum RejectReason {
    Unlexicalized,
    BundleMismatch,
    RankOutsideWindow { rank: usize, window: usize },
    ScoreDelta { delta: f64, epsilon: f64 },
    LengthExceeded { tokens: usize, limit: usize },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "verdict", rename_all = "lowercase")]
pub enum Verdict {
    Accept,
    Reject(RejectReason),
}

impl Verdict {
    pub fn is_accept(&self) -> bool {
        matches!(self, Verdict::Accept)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AcceptPolicy {
    pub window: usize,
    pub epsilon: f64,
    pub max_tokens: usize,
}

/// Apply the rank window, bundle and score-margin constraints. The score bound is
/// closed: `|delta| == epsilon` is accepted.
pub fn accept(
    cand: &SubstitutionCandidate,
    base: &RealizedItem,
    base_score: f64,
    g: &PhenomenonGrammar,
    policy: &AcceptPolicy,
) -> Verdict {
    let Some(entry) = cand.entry.and_then(|e| g.lexicon.entry(e)) else {
        return Verdict::Reject(RejectReason::Unlexicalized);
    };
    let cell = &base.abstract_row.cells[cand.cell];
    let category = g.object(&cell.object).map(|o| o.category.as_str());
    if Some(entry.category.as_str()) != category || entry.bundle != cell.values {
        return Verdict::Reject(RejectReason::BundleMismatch);
    }
    if cand.rank < 1 || cand.rank > policy.window {
        return Verdict::Reject(RejectReason::RankOutsideWindow {
            rank: cand.rank,
            window: policy.window,
        });
    }
    let delta = cand.sentence_score - base_score;
    if delta.is_nan() || delta.abs() > policy.epsilon {
        return Verdict::Reject(RejectReason::ScoreDelta {
            delta,
            epsilon: policy.epsilon,
        });
    }
    let tokens = crate::realize::token_length(&with_entry(base, g, cand.cell, entry_id(cand)).surface);
    if tokens > policy.max_tokens {
        return Verdict::Reject(RejectReason::LengthExceeded {
            tokens,
            limit: policy.max_tokens,
        });
    }
    Verdict::Accept
}

fn entry_id(c: &SubstitutionCandidate) -> EntryId {
    c.entry.expect("lexicalized")
}

/// Cells eligible for substitution.
pub fn substitutable_cells(item: &RealizedItem, g: &PhenomenonGrammar, categories: &[String]) -> Vec<usize> {
    item.abstract_row
        .cells
        .iter()
        .enumerate()
        .filter(|(_, c)| {
            g.object(&c.object)
                .is_some_and(|o| categories.iter().any(|cat| *cat == o.category))
        })
        .map(|(i, _)| i)
        .collect()
}

/// Ranked candidates for one cell of an item, at most `k`.
pub fn propose_candidates(
    item: &RealizedItem,
    item_ref: ItemRef,
    cell: usize,
    g: &PhenomenonGrammar,
    provider: &dyn CandidateProvider,
    k: usize,
) -> Result<Vec<SubstitutionCandidate>, AugmentError> {
    if k == 0 {
        return Ok(Vec::new());
    }
    let abstract_cell = &item.abstract_row.cells[cell];
    let category = g
        .object(&abstract_cell.object)
        .map(|o| o.category.clone())
        .unwrap_or_default();
    let same_bundle = g.lexicon.forms(&category, &abstract_cell.values);
    let alternatives: Vec<String> = same_bundle
        .iter()
        .filter_map(|e| g.lexicon.entry(*e).map(|x| x.surface.clone()))
        .collect();
    let current = g
        .lexicon
        .entry(item.choices[cell].entry)
        .map(|e| e.surface.clone())
        .unwrap_or_default();
    let spans = cell_spans(g, &item.abstract_row, &item.choices);
    let req = SlotRequest {
        sentence: &item.surface,
        span: spans[cell],
        k,
        current: &current,
        alternatives: &alternatives,
    };
    let mut ranked = provider.propose(&req)?;
    ranked.sort_by(|a, b| b.score.total_cmp(&a.score));
    ranked.truncate(k);

    let mut out = Vec::with_capacity(ranked.len());
    for (i, s) in ranked.into_iter().enumerate() {
        let entry = same_bundle
            .iter()
            .copied()
            .find(|e| g.lexicon.entry(*e).is_some_and(|x| x.surface == s.surface))
            .or_else(|| g.lexicon.lookup_surface(&s.surface).into_iter().next());
        let sentence = match entry {
            Some(e) => with_entry(item, g, cell, e).surface,
            None => {
                let (a, b) = spans[cell];
                format!("{}{}{}", &item.surface[..a], s.surface, &item.surface[b..])
            }
        };
        out.push(SubstitutionCandidate {
            item: item_ref,
            cell,
            surface: s.surface,
            entry,
            rank: i + 1,
            phrase_score: s.score,
            sentence_score: provider.score_sentence(&sentence)?,
        });
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Review {
    #[default]
    Pending,
    Approved,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CandidateRecord {
    pub candidate: SubstitutionCandidate,
    pub base_score: f64,
    pub verdict: Verdict,
}

/// Provenance attached to an augmented instance.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AugmentationRecord {
    pub base: String,
    pub epsilon: f64,
    pub window: usize,
    /// Substitutions applied to produce this instance.
    pub substitutions: Vec<SubstitutionCandidate>,
    /// Every candidate considered for the base instance, with its verdict.
    pub provenance: Vec<CandidateRecord>,
    pub review: Review,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AugmentConfig {
    pub epsilon: f64,
    pub window: usize,
    pub k: usize,
    pub budget: usize,
    pub slot_categories: Vec<String>,
}

impl Default for AugmentConfig {
    fn default() -> Self {
        AugmentConfig {
            epsilon: 1.0,
            window: 10,
            k: 10,
            budget: 1,
            slot_categories: vec!["NP".into()],
        }
    }
}

fn items_of(inst: &BlmInstance) -> Vec<(ItemRef, &RealizedItem)> {
    inst.context
        .items
        .iter()
        .enumerate()
        .map(|(i, it)| (ItemRef::Context(i), it))
        .chain(
            inst.answers
                .options
                .iter()
                .enumerate()
                .map(|(i, o)| (ItemRef::Option(i), &o.item)),
        )
        .collect()
}

/// Score every candidate of every substitutable cell of an instance.
pub fn collect_candidates(
    inst: &BlmInstance,
    g: &PhenomenonGrammar,
    provider: &dyn CandidateProvider,
    config: &AugmentConfig,
) -> Result<Vec<CandidateRecord>, AugmentError> {
    let max_tokens = inst
        .template
        .as_ref()
        .map(|t| t.shape.l)
        .unwrap_or(usize::MAX);
    let policy = AcceptPolicy {
        window: config.window,
        epsilon: config.epsilon,
        max_tokens,
    };
    let mut records = Vec::new();
    for (item_ref, item) in items_of(inst) {
        let base_score = provider.score_sentence(&item.surface)?;
        for cell in substitutable_cells(item, g, &config.slot_categories) {
            for cand in propose_candidates(item, item_ref, cell, g, provider, config.k)? {
                let verdict = accept(&cand, item, base_score, g, &policy);
                records.push(CandidateRecord {
                    candidate: cand,
                    base_score,
                    verdict,
                });
            }
        }
    }
    Ok(records)
}

fn apply(
    inst: &BlmInstance,
    g: &PhenomenonGrammar,
    picks: &[&SubstitutionCandidate],
) -> (ContextSequence, AnswerSet) {
    let mut context = inst.context.clone();
    let mut answers = inst.answers.clone();
    for c in picks {
        let e = entry_id(c);
        match c.item {
            ItemRef::Context(i) => context.items[i] = with_entry(&context.items[i], g, c.cell, e),
            ItemRef::Option(i) => {
                let opt = &answers.options[i];
                answers.options[i] = AnswerOption {
                    item: with_entry(&opt.item, g, c.cell, e),
                    label: opt.label.clone(),
                };
            }
        }
    }
    (context, answers)
}

/// Produce up to `budget` augmented copies of an instance. Each copy picks, for
/// every cell with at least one accepted candidate, one accepted candidate
/// uniformly; copies with colliding option surfaces or duplicating an earlier copy
/// are skipped. Every emitted copy passes `verify_unique`.
pub fn augment_instance(
    inst: &BlmInstance,
    g: &PhenomenonGrammar,
    provider: &dyn CandidateProvider,
    config: &AugmentConfig,
    seed_value: u64,
) -> Result<Vec<BlmInstance>, AugmentError> {
    if config.budget == 0 {
        return Err(AugmentError::ZeroBudget);
    }
    let records = collect_candidates(inst, g, provider, config)?;
    let mut accepted: BTreeMap<(ItemRef, usize), Vec<&SubstitutionCandidate>> = BTreeMap::new();
    for r in records.iter().filter(|r| r.verdict.is_accept()) {
        accepted
            .entry((r.candidate.item, r.candidate.cell))
            .or_default()
            .push(&r.candidate);
    }
    if accepted.is_empty() {
        return Err(AugmentError::NoAcceptableCandidates(inst.id.clone()));
    }

    let mut out = Vec::new();
    let mut seen: BTreeSet<Vec<String>> = BTreeSet::new();
    for attempt in 0..config.budget * 4 {
        if out.len() == config.budget {
            break;
        }
        let mut rng = seed::stream(seed_value, "augment", attempt as u64);
        let picks: Vec<&SubstitutionCandidate> = accepted
            .values()
            .map(|cands| cands[rng.gen_range(0..cands.len())])
            .collect();
        let (context, answers) = apply(inst, g, &picks);
        let surfaces: Vec<String> = context
            .items
            .iter()
            .map(|i| i.surface.clone())
            .chain(answers.options.iter().map(|o| o.item.surface.clone()))
            .collect();
        let option_surfaces: BTreeSet<&String> = answers.options.iter().map(|o| &o.item.surface).collect();
        if option_surfaces.len() != answers.options.len() || !seen.insert(surfaces) {
            continue;
        }
        let candidate = BlmInstance {
            id: format!("{}-aug{}", inst.id, out.len()),
            seed: inst.seed,
            template: inst.template.clone(),
            context,
            answers,
            augmentation: Some(AugmentationRecord {
                base: inst.id.clone(),
                epsilon: config.epsilon,
                window: config.window,
                substitutions: picks.into_iter().cloned().collect(),
                provenance: records.clone(),
                review: Review::Pending,
            }),
        };
        candidate.verify(g)?;
        out.push(candidate);
    }
    Ok(out)
}
