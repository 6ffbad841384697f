//! Table-driven lexicon: surface forms keyed by (category, attribute bundle),
//! per-slot function words, a coordinator and contraction rules.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

/// Attribute-value assignment, e.g. `{number: p}`.
pub type Bundle = BTreeMap<String, String>;

pub fn format_bundle(bundle: &Bundle) -> String {
    let parts: Vec<String> = bundle.iter().map(|(k, v)| format!("{k}={v}")).collect();
    format!("[{}]", parts.join(", "))
}

/// Index of a surface form in [`Lexicon::entries`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct EntryId(pub u32);

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LexEntry {
    pub category: String,
    pub bundle: Bundle,
    pub surface: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Contraction {
    pub from: String,
    pub to: String,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Lexicon {
    pub entries: Vec<LexEntry>,
    /// Function words introducing an object slot, keyed by object name.
    pub glue: BTreeMap<String, Vec<String>>,
    pub coordinator: Option<String>,
    pub contractions: Vec<Contraction>,
}

impl Lexicon {
    pub fn entry(&self, id: EntryId) -> Option<&LexEntry> {
        self.entries.get(id.0 as usize)
    }

    /// Entry ids for a (category, bundle) key, in file order.
    pub fn forms(&self, category: &str, bundle: &Bundle) -> Vec<EntryId> {
        self.entries
            .iter()
            .enumerate()
            .filter(|(_, e)| e.category == category && &e.bundle == bundle)
            .map(|(i, _)| EntryId(i as u32))
            .collect()
    }

    pub fn glue_for(&self, object: &str) -> &[String] {
        self.glue.get(object).map(Vec::as_slice).unwrap_or(&[])
    }

    /// Entry ids whose surface equals `surface` exactly.
    pub fn lookup_surface(&self, surface: &str) -> Vec<EntryId> {
        self.entries
            .iter()
            .enumerate()
            .filter(|(_, e)| e.surface == surface)
            .map(|(i, _)| EntryId(i as u32))
            .collect()
    }

    /// Apply contraction rules to a whitespace-tokenized phrase. Rules match whole
    /// token sequences and are tried in declaration order at each position.
    pub fn contract(&self, phrase: &str) -> String {
        if self.contractions.is_empty() {
            return phrase.to_string();
        }
        let rules: Vec<(Vec<&str>, &str)> = self
            .contractions
            .iter()
            .map(|c| (c.from.split_whitespace().collect(), c.to.as_str()))
            .collect();
        let tokens: Vec<&str> = phrase.split_whitespace().collect();
        let mut out: Vec<&str> = Vec::with_capacity(tokens.len());
        let mut i = 0;
        'outer: while i < tokens.len() {
            for (pattern, to) in &rules {
                if !pattern.is_empty()
                    && i + pattern.len() <= tokens.len()
                    && tokens[i..i + pattern.len()] == pattern[..]
                {
                    out.push(to);
                    i += pattern.len();
                    continue 'outer;
                }
            }
            out.push(tokens[i]);
            i += 1;
        }
        out.join(" ")
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn french() -> Lexicon {
        Lexicon {
            contractions: vec![
                Contraction {
                    from: "de les".into(),
                    to: "des".into(),
                },
                Contraction {
                    from: "de le".into(),
                    to: "du".into(),
                },
            ],
            ..Default::default()
        }
    }

    #[test]
    fn contractions_apply_on_token_boundaries() {
        let lex = french();
        assert_eq!(lex.contract("de les réformes"), "des réformes");
        assert_eq!(lex.contract("de le village"), "du village");
        assert_eq!(lex.contract("de la villa"), "de la villa");
        // "lessive" must not be touched by the "de les" rule
        assert_eq!(lex.contract("de lessive"), "de lessive");
    }

    #[test]
    fn bundle_formatting() {
        let mut b = Bundle::new();
        b.insert("number".into(), "s".into());
        b.insert("gender".into(), "f".into());
        assert_eq!(format_bundle(&b), "[gender=f, number=s]");
        assert_eq!(format_bundle(&Bundle::new()), "[]");
    }
}
