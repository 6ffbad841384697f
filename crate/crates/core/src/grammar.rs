//! Phenomenon grammar: objects, attributes, observed (E) and internal (I) rules, lexicon.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::lexicon::{Bundle, Lexicon};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum AttributeKind {
    Categorical,
    Ordinal,
}

impl AttributeKind {
    pub fn as_str(self) -> &'static str {
        match self {
            AttributeKind::Categorical => "categorical",
            AttributeKind::Ordinal => "ordinal",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AttributeDef {
    pub name: String,
    pub kind: AttributeKind,
    /// Declared values, in order. For ordinal attributes the order is the scale.
    pub values: Vec<String>,
}

impl AttributeDef {
    pub fn position(&self, value: &str) -> Option<usize> {
        self.values.iter().position(|v| v == value)
    }

    pub fn default_value(&self) -> &str {
        &self.values[0]
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase", tag = "mode")]
pub enum Optionality {
    Required,
    /// Appears `0..=max` times per row. Counts reported by operators include `base`,
    /// so a count value `c` means `c - base` occurrences.
    Countable { max: u32, base: u32 },
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ObjectDef {
    pub name: String,
    pub category: String,
    pub optionality: Optionality,
    pub attributes: Vec<String>,
}

impl ObjectDef {
    pub fn is_countable(&self) -> bool {
        matches!(self.optionality, Optionality::Countable { .. })
    }

    /// Legal count values `[base, base + max]` for a countable object.
    pub fn count_domain(&self) -> Option<(i64, i64)> {
        match self.optionality {
            Optionality::Required => None,
            Optionality::Countable { max, base } => Some((base as i64, (base + max) as i64)),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum RuleClass {
    E,
    I,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RuleOp {
    Match,
    Become,
    Change,
}

impl RuleOp {
    pub fn as_str(self) -> &'static str {
        match self {
            RuleOp::Match => "match",
            RuleOp::Become => "become",
            RuleOp::Change => "change",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "match" => Some(RuleOp::Match),
            "become" => Some(RuleOp::Become),
            "change" => Some(RuleOp::Change),
            _ => None,
        }
    }
}

/// An `(object, attribute)` pair.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct Slot {
    pub object: String,
    pub attribute: String,
}

impl Slot {
    pub fn new(object: impl Into<String>, attribute: impl Into<String>) -> Self {
        Slot {
            object: object.into(),
            attribute: attribute.into(),
        }
    }
}

impl fmt::Display for Slot {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}.{}", self.object, self.attribute)
    }
}

/// Operationalization tag consumed by the answer-set builder: I-rule diagnostic
/// distractors perturb the cells lying between the rule's participants.
pub const TAG_DISTANCE_INVARIANT: &str = "distance-invariant";

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct GrammarRule {
    pub class: RuleClass,
    pub op: RuleOp,
    pub participants: Vec<Slot>,
    pub tag: Option<String>,
    pub description: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PhenomenonGrammar {
    pub id: String,
    pub attributes: Vec<AttributeDef>,
    pub objects: Vec<ObjectDef>,
    pub rules_e: Vec<GrammarRule>,
    pub rules_i: Vec<GrammarRule>,
    pub lexicon: Lexicon,
}

impl PhenomenonGrammar {
    pub fn attribute(&self, name: &str) -> Option<&AttributeDef> {
        self.attributes.iter().find(|a| a.name == name)
    }

    pub fn object(&self, name: &str) -> Option<&ObjectDef> {
        self.objects.iter().find(|o| o.name == name)
    }

    pub fn object_index(&self, name: &str) -> Option<usize> {
        self.objects.iter().position(|o| o.name == name)
    }

    pub fn countable_object(&self) -> Option<&ObjectDef> {
        self.objects.iter().find(|o| o.is_countable())
    }

    /// Every `(object, attribute)` pair in declaration order.
    pub fn slots(&self) -> Vec<Slot> {
        self.objects
            .iter()
            .flat_map(|o| o.attributes.iter().map(move |a| Slot::new(&o.name, a)))
            .collect()
    }

    pub fn has_slot(&self, slot: &Slot) -> bool {
        self.object(&slot.object)
            .map(|o| o.attributes.iter().any(|a| a == &slot.attribute))
            .unwrap_or(false)
    }

    pub fn match_rules(&self) -> impl Iterator<Item = &GrammarRule> {
        self.rules_e.iter().filter(|r| r.op == RuleOp::Match)
    }

    /// Slots whose value is forced by an E `match` rule (every participant but the first).
    pub fn derived_slots(&self) -> BTreeSet<Slot> {
        self.match_rules()
            .flat_map(|r| r.participants.iter().skip(1).cloned())
            .collect()
    }

    /// Every legal attribute-value bundle for an object.
    pub fn bundles(&self, object: &ObjectDef) -> Vec<Bundle> {
        let mut out = vec![BTreeMap::new()];
        for attr in &object.attributes {
            let Some(def) = self.attribute(attr) else {
                continue;
            };
            out = out
                .into_iter()
                .flat_map(|b| {
                    def.values.iter().map(move |v| {
                        let mut b = b.clone();
                        b.insert(attr.clone(), v.clone());
                        b
                    })
                })
                .collect();
        }
        out
    }
}
