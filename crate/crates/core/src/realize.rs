//! Surface realization of template rows.

use std::collections::BTreeMap;

use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::grammar::PhenomenonGrammar;
use crate::lexicon::{format_bundle, EntryId, Lexicon};
use crate::seed;
use crate::template::{Cell, TemplateMatrix, TemplateRow};

/// Rejection-sampling attempts before falling back to the shortest choices.
const LENGTH_ATTEMPTS: usize = 32;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum RealizeError {
    #[error("no lexical choice fits {limit} tokens (shortest realization has {min_tokens})")]
    LengthExceeded { min_tokens: usize, limit: usize },
    #[error("no lexicon entry for object {object} with bundle {bundle}")]
    MissingEntry { object: String, bundle: String },
    #[error("unknown object {0}")]
    UnknownObject(String),
    #[error("row {row}: {source}")]
    AtRow {
        row: usize,
        #[source]
        source: Box<RealizeError>,
    },
}

/// Lexical selection for one cell.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct LexChoice {
    pub object: String,
    pub occurrence: u32,
    pub entry: EntryId,
    /// Index into the slot's function-word list; `None` when the slot has none or
    /// the cell is introduced by the coordinator.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub glue: Option<u32>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RealizedItem {
    pub surface: String,
    #[serde(rename = "abstract")]
    pub abstract_row: TemplateRow,
    pub choices: Vec<LexChoice>,
    pub token_length: usize,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ContextSequence {
    pub items: Vec<RealizedItem>,
    pub template_ref: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum LexicalizationMode {
    /// Independent uniform draws per row.
    #[default]
    Varied,
    /// One lexical position per object slot, reused across all rows.
    Shared,
}

/// Positional lexical preferences per `(object, occurrence)`: the chosen form is
/// `forms[form % len]` and the function word `glue[glue % len]`.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Pins(pub BTreeMap<(String, u32), (u32, u32)>);

impl Pins {
    pub fn draw<R: Rng + ?Sized>(g: &PhenomenonGrammar, rng: &mut R) -> Pins {
        let mut map = BTreeMap::new();
        for obj in &g.objects {
            let max_occ = match obj.optionality {
                crate::grammar::Optionality::Required => 1,
                crate::grammar::Optionality::Countable { max, .. } => max,
            };
            for occ in 0..max_occ {
                map.insert((obj.name.clone(), occ), (rng.gen::<u32>(), rng.gen::<u32>()));
            }
        }
        Pins(map)
    }

    /// Pins that reproduce an item's own choices where the same lists apply.
    pub fn from_item(item: &RealizedItem, g: &PhenomenonGrammar) -> Pins {
        let mut map = BTreeMap::new();
        for (cell, choice) in item.abstract_row.cells.iter().zip(&item.choices) {
            let Some(obj) = g.object(&cell.object) else {
                continue;
            };
            let forms = g.lexicon.forms(&obj.category, &cell.values);
            let form_pos = forms.iter().position(|e| *e == choice.entry).unwrap_or(0);
            map.insert(
                (cell.object.clone(), cell.occurrence),
                (form_pos as u32, choice.glue.unwrap_or(0)),
            );
        }
        Pins(map)
    }
}

/// Choice domain for one cell.
struct CellOptions {
    forms: Vec<EntryId>,
    glue: Vec<Option<u32>>,
}

fn cell_options(
    g: &PhenomenonGrammar,
    row: &TemplateRow,
    i: usize,
    cell: &Cell,
) -> Result<CellOptions, RealizeError> {
    let obj = g
        .object(&cell.object)
        .ok_or_else(|| RealizeError::UnknownObject(cell.object.clone()))?;
    let forms = g.lexicon.forms(&obj.category, &cell.values);
    if forms.is_empty() {
        return Err(RealizeError::MissingEntry {
            object: cell.object.clone(),
            bundle: format_bundle(&cell.values),
        });
    }
    let n_glue = g.lexicon.glue_for(&cell.object).len();
    let glue = if row.coordination == Some(i) || n_glue == 0 {
        vec![None]
    } else {
        (0..n_glue as u32).map(Some).collect()
    };
    Ok(CellOptions { forms, glue })
}

fn piece(lex: &Lexicon, row: &TemplateRow, i: usize, choice: &LexChoice) -> String {
    let surface = lex
        .entry(choice.entry)
        .map(|e| e.surface.as_str())
        .unwrap_or("");
    let intro = if row.coordination == Some(i) {
        Some(lex.coordinator.as_deref().unwrap_or("and"))
    } else {
        choice
            .glue
            .and_then(|j| lex.glue_for(&choice.object).get(j as usize))
            .map(String::as_str)
    };
    match intro {
        Some(w) => lex.contract(&format!("{w} {surface}")),
        None => lex.contract(surface),
    }
}

/// Deterministic surface string for a row under a set of choices.
pub fn render_surface(g: &PhenomenonGrammar, row: &TemplateRow, choices: &[LexChoice]) -> String {
    let body = choices
        .iter()
        .enumerate()
        .map(|(i, c)| piece(&g.lexicon, row, i, c))
        .collect::<Vec<_>>()
        .join(" ");
    let mut chars = body.chars();
    match chars.next() {
        Some(first) => format!("{}{}.", first.to_uppercase(), chars.as_str()),
        None => String::new(),
    }
}

/// Byte span of each cell's phrase (function word included) in the rendered surface.
pub fn cell_spans(g: &PhenomenonGrammar, row: &TemplateRow, choices: &[LexChoice]) -> Vec<(usize, usize)> {
    let surface = render_surface(g, row, choices);
    let mut spans = Vec::with_capacity(choices.len());
    let mut offset = 0;
    for (i, c) in choices.iter().enumerate() {
        let p = piece(&g.lexicon, row, i, c);
        // Capitalization may change the byte length of the first character.
        let len = if i == 0 {
            let mut chars = p.chars();
            chars
                .next()
                .map_or(0, |f| f.to_uppercase().map(char::len_utf8).sum::<usize>() + chars.as_str().len())
        } else {
            p.len()
        };
        spans.push((offset, (offset + len).min(surface.len())));
        offset += len + 1;
    }
    spans
}

pub fn token_length(surface: &str) -> usize {
    surface.split_whitespace().count()
}

fn assemble(g: &PhenomenonGrammar, row: &TemplateRow, choices: Vec<LexChoice>) -> RealizedItem {
    let surface = render_surface(g, row, &choices);
    RealizedItem {
        token_length: token_length(&surface),
        surface,
        abstract_row: row.clone(),
        choices,
    }
}

fn choice(cell: &Cell, entry: EntryId, glue: Option<u32>) -> LexChoice {
    LexChoice {
        object: cell.object.clone(),
        occurrence: cell.occurrence,
        entry,
        glue,
    }
}

/// Realize one row. Each cell draws a surface form uniformly from its lexicon entry
/// list (or follows `pins`), plus a function word for its slot. Draws that exceed
/// `max_tokens` are rejected; after a bounded number of attempts the shortest
/// choice per cell is used, and if even that is too long the row fails.
pub fn realize_row<R: Rng + ?Sized>(
    row: &TemplateRow,
    g: &PhenomenonGrammar,
    max_tokens: usize,
    pins: Option<&Pins>,
    rng: &mut R,
) -> Result<RealizedItem, RealizeError> {
    let options = row
        .cells
        .iter()
        .enumerate()
        .map(|(i, c)| cell_options(g, row, i, c))
        .collect::<Result<Vec<_>, _>>()?;

    let attempts = if pins.is_some() { 1 } else { LENGTH_ATTEMPTS };
    for _ in 0..attempts {
        let choices: Vec<LexChoice> = row
            .cells
            .iter()
            .zip(&options)
            .map(|(cell, opt)| {
                let (f, gl) = match pins.and_then(|p| p.0.get(&(cell.object.clone(), cell.occurrence))) {
                    Some(&(f, gl)) => (f as usize % opt.forms.len(), gl as usize % opt.glue.len()),
                    None => (rng.gen_range(0..opt.forms.len()), rng.gen_range(0..opt.glue.len())),
                };
                choice(cell, opt.forms[f], opt.glue[gl])
            })
            .collect();
        let item = assemble(g, row, choices);
        if item.token_length <= max_tokens {
            return Ok(item);
        }
    }

    // Pieces never interact across cells, so the per-cell minimum is the global one.
    let mut choices = Vec::with_capacity(row.cells.len());
    for (i, (cell, opt)) in row.cells.iter().zip(&options).enumerate() {
        let mut best: Option<(usize, LexChoice)> = None;
        for &entry in &opt.forms {
            for &glue in &opt.glue {
                let c = choice(cell, entry, glue);
                let len = token_length(&piece(&g.lexicon, row, i, &c));
                if best.as_ref().map_or(true, |(b, _)| len < *b) {
                    best = Some((len, c));
                }
            }
        }
        choices.push(best.expect("nonempty options").1);
    }
    let item = assemble(g, row, choices);
    if item.token_length <= max_tokens {
        Ok(item)
    } else {
        Err(RealizeError::LengthExceeded {
            min_tokens: item.token_length,
            limit: max_tokens,
        })
    }
}

/// Realize rows `1..n-1` of a template (the answer row is withheld).
pub fn realize_context(
    t: &TemplateMatrix,
    g: &PhenomenonGrammar,
    seed_value: u64,
    mode: LexicalizationMode,
) -> Result<ContextSequence, RealizeError> {
    let pins = match mode {
        LexicalizationMode::Varied => None,
        LexicalizationMode::Shared => Some(Pins::draw(g, &mut seed::stream(seed_value, "pins", 0))),
    };
    let items = t
        .context_rows()
        .iter()
        .enumerate()
        .map(|(i, row)| {
            let mut rng = seed::stream(seed_value, "context-row", i as u64);
            realize_row(row, g, t.shape.l, pins.as_ref(), &mut rng).map_err(|e| {
                RealizeError::AtRow {
                    row: i,
                    source: Box::new(e),
                }
            })
        })
        .collect::<Result<Vec<_>, _>>()?;
    Ok(ContextSequence {
        items,
        template_ref: template_id(t),
        seed: Some(seed_value),
    })
}

/// Stable identifier of a template: FNV-1a over its JSON serialization.
pub fn template_id(t: &TemplateMatrix) -> String {
    let json = serde_json::to_string(t).expect("template serializes");
    let h = json.bytes().fold(0xCBF2_9CE4_8422_2325u64, |h, b| {
        (h ^ b as u64).wrapping_mul(0x0000_0100_0000_01B3)
    });
    format!("t{h:016x}")
}

/// Why an item is not faithful to its abstract annotation.
#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum FaithfulnessError {
    #[error("choice {0} references an unknown lexicon entry")]
    UnknownEntry(usize),
    #[error("choices do not reconstruct the abstract row")]
    AbstractMismatch,
    #[error("surface differs from the one rendered from its choices")]
    SurfaceMismatch,
    #[error("token length {found} does not match surface or exceeds {limit}")]
    Length { found: usize, limit: usize },
}

/// Rebuild the abstract row from the choices record and the lexicon alone.
pub fn reconstruct_row(item: &RealizedItem, g: &PhenomenonGrammar) -> Result<TemplateRow, FaithfulnessError> {
    let mut cells = Vec::with_capacity(item.choices.len());
    for (i, c) in item.choices.iter().enumerate() {
        let entry = g.lexicon.entry(c.entry).ok_or(FaithfulnessError::UnknownEntry(i))?;
        let obj = g.object(&c.object).ok_or(FaithfulnessError::UnknownEntry(i))?;
        if obj.category != entry.category {
            return Err(FaithfulnessError::AbstractMismatch);
        }
        cells.push(Cell {
            object: c.object.clone(),
            occurrence: c.occurrence,
            values: entry.bundle.clone(),
        });
    }
    Ok(TemplateRow {
        index: item.abstract_row.index,
        cells,
        coordination: item.abstract_row.coordination,
    })
}

/// Faithfulness, determinism of the surface and the length bound.
pub fn check_item(item: &RealizedItem, g: &PhenomenonGrammar, max_tokens: usize) -> Result<(), FaithfulnessError> {
    if reconstruct_row(item, g)? != item.abstract_row {
        return Err(FaithfulnessError::AbstractMismatch);
    }
    if render_surface(g, &item.abstract_row, &item.choices) != item.surface {
        return Err(FaithfulnessError::SurfaceMismatch);
    }
    if item.token_length != token_length(&item.surface) || item.token_length > max_tokens {
        return Err(FaithfulnessError::Length {
            found: item.token_length,
            limit: max_tokens,
        });
    }
    Ok(())
}

/// Replace the lexical entry of one cell and re-render.
pub fn with_entry(item: &RealizedItem, g: &PhenomenonGrammar, cell: usize, entry: EntryId) -> RealizedItem {
    let mut choices = item.choices.clone();
    choices[cell].entry = entry;
    assemble(g, &item.abstract_row, choices)
}
