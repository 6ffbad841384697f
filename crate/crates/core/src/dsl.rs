//! The `.blm` phenomenon file format.
//!
//! A line-oriented, sectioned text format. `#` starts a comment. The document opens
//! with `phenomenon: <id>` and continues with the sections `attributes:`,
//! `objects:`, `rules-E:`, `rules-I:` and `lexicon:`. See `docs/blm-format.md`.

use std::collections::{BTreeMap, BTreeSet, HashSet};
use std::fmt::Write as _;

use thiserror::Error;

use crate::grammar::{
    AttributeDef, AttributeKind, GrammarRule, ObjectDef, Optionality, PhenomenonGrammar,
    RuleClass, RuleOp, Slot,
};
use crate::lexicon::{format_bundle, Bundle, Contraction, LexEntry, Lexicon};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum DslError {
    #[error("syntax error at line {line}, column {column}: {message}")]
    Syntax {
        line: usize,
        column: usize,
        message: String,
    },
    #[error("unknown symbol `{symbol}` in {context}")]
    UnknownSymbol { symbol: String, context: String },
    #[error("lexicon has no surface form for object {object} with bundle {bundle}")]
    IncompleteLexicon { object: String, bundle: String },
    #[error("grammar declares no E rule")]
    EmptyRuleSet,
    #[error("invalid grammar: {0}")]
    Invalid(String),
}

fn syntax(line: usize, column: usize, message: impl Into<String>) -> DslError {
    DslError::Syntax {
        line,
        column,
        message: message.into(),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
enum Section {
    Attributes,
    Objects,
    RulesE,
    RulesI,
    Lexicon,
}

impl Section {
    fn from_header(s: &str) -> Option<Self> {
        match s {
            "attributes:" => Some(Section::Attributes),
            "objects:" => Some(Section::Objects),
            "rules-E:" => Some(Section::RulesE),
            "rules-I:" => Some(Section::RulesI),
            "lexicon:" => Some(Section::Lexicon),
            _ => None,
        }
    }
}

/// Strip a trailing `#` comment that is not inside a double-quoted string.
fn strip_comment(line: &str) -> &str {
    let mut in_quotes = false;
    let mut escaped = false;
    for (i, c) in line.char_indices() {
        match c {
            '\\' if in_quotes && !escaped => {
                escaped = true;
                continue;
            }
            '"' if !escaped => in_quotes = !in_quotes,
            '#' if !in_quotes => return &line[..i],
            _ => {}
        }
        escaped = false;
    }
    line
}

/// Column (1-based, in chars) of `needle` inside `line`, falling back to the first
/// non-blank column.
fn column_of(line: &str, needle: &str) -> usize {
    let byte = line
        .find(needle)
        .unwrap_or_else(|| line.len() - line.trim_start().len());
    line[..byte].chars().count() + 1
}

/// Parse and fully validate a phenomenon document.
pub fn parse_phenomenon(source: &str) -> Result<PhenomenonGrammar, DslError> {
    let mut id: Option<String> = None;
    let mut section: Option<Section> = None;
    let mut attributes = Vec::new();
    let mut objects = Vec::new();
    let mut rules_e = Vec::new();
    let mut rules_i = Vec::new();
    let mut lexicon = Lexicon::default();
    let mut seen_sections = HashSet::new();

    for (idx, raw) in source.lines().enumerate() {
        let lineno = idx + 1;
        let line = strip_comment(raw);
        let trimmed = line.trim();
        if trimmed.is_empty() {
            continue;
        }
        if let Some(rest) = trimmed.strip_prefix("phenomenon:") {
            if id.is_some() {
                return Err(syntax(lineno, 1, "duplicate `phenomenon:` header"));
            }
            let name = rest.trim();
            if !is_identifier(name) {
                return Err(syntax(
                    lineno,
                    column_of(raw, rest.trim()),
                    format!("invalid phenomenon id `{name}`"),
                ));
            }
            id = Some(name.to_string());
            continue;
        }
        if let Some(s) = Section::from_header(trimmed) {
            if !seen_sections.insert(s) {
                return Err(syntax(lineno, 1, format!("duplicate section `{trimmed}`")));
            }
            section = Some(s);
            continue;
        }
        let Some(current) = section else {
            return Err(syntax(
                lineno,
                column_of(raw, trimmed),
                "content outside of any section",
            ));
        };
        match current {
            Section::Attributes => attributes.push(parse_attribute(raw, trimmed, lineno)?),
            Section::Objects => objects.push(parse_object(raw, trimmed, lineno)?),
            Section::RulesE => rules_e.push(parse_rule(raw, trimmed, lineno, RuleClass::E)?),
            Section::RulesI => rules_i.push(parse_rule(raw, trimmed, lineno, RuleClass::I)?),
            Section::Lexicon => parse_lexicon_line(raw, trimmed, lineno, &mut lexicon)?,
        }
    }

    let id = id.ok_or_else(|| syntax(1, 1, "missing `phenomenon:` header"))?;
    let grammar = PhenomenonGrammar {
        id,
        attributes,
        objects,
        rules_e,
        rules_i,
        lexicon,
    };
    validate(&grammar)?;
    Ok(grammar)
}

/// Parse a standalone lexicon file (the body of a `lexicon:` section; the header
/// line is optional).
pub fn parse_lexicon(source: &str) -> Result<Lexicon, DslError> {
    let mut lexicon = Lexicon::default();
    for (idx, raw) in source.lines().enumerate() {
        let line = strip_comment(raw);
        let trimmed = line.trim();
        if trimmed.is_empty() || trimmed == "lexicon:" {
            continue;
        }
        parse_lexicon_line(raw, trimmed, idx + 1, &mut lexicon)?;
    }
    Ok(lexicon)
}

fn is_identifier(s: &str) -> bool {
    !s.is_empty()
        && s.chars()
            .all(|c| c.is_alphanumeric() || c == '_' || c == '-')
}

fn expect_identifier(raw: &str, tok: &str, lineno: usize, what: &str) -> Result<String, DslError> {
    if is_identifier(tok) {
        Ok(tok.to_string())
    } else {
        Err(syntax(
            lineno,
            column_of(raw, tok),
            format!("invalid {what} `{tok}`"),
        ))
    }
}

fn parse_attribute(raw: &str, line: &str, lineno: usize) -> Result<AttributeDef, DslError> {
    let mut toks = line.split_whitespace();
    let name = toks.next().unwrap_or_default();
    let name = expect_identifier(raw, name, lineno, "attribute name")?;
    let kind_tok = toks
        .next()
        .ok_or_else(|| syntax(lineno, raw.len() + 1, "expected `categorical` or `ordinal`"))?;
    let kind = match kind_tok {
        "categorical" => AttributeKind::Categorical,
        "ordinal" => AttributeKind::Ordinal,
        other => {
            return Err(syntax(
                lineno,
                column_of(raw, other),
                format!("unknown attribute kind `{other}`"),
            ))
        }
    };
    let values = toks
        .map(|v| expect_identifier(raw, v, lineno, "attribute value"))
        .collect::<Result<Vec<_>, _>>()?;
    Ok(AttributeDef { name, kind, values })
}

fn parse_object(raw: &str, line: &str, lineno: usize) -> Result<ObjectDef, DslError> {
    let toks: Vec<&str> = line.split_whitespace().collect();
    if toks.len() < 3 {
        return Err(syntax(
            lineno,
            column_of(raw, line),
            "expected `<name> <category> <required|countable> [options] [attributes]`",
        ));
    }
    let name = expect_identifier(raw, toks[0], lineno, "object name")?;
    let category = expect_identifier(raw, toks[1], lineno, "category")?;
    let mut max = None;
    let mut base = None;
    let mut attributes = Vec::new();
    for tok in &toks[3..] {
        if let Some((key, value)) = tok.split_once('=') {
            let parsed: u32 = value.parse().map_err(|_| {
                syntax(
                    lineno,
                    column_of(raw, tok),
                    format!("expected a nonnegative integer in `{tok}`"),
                )
            })?;
            match key {
                "max" => max = Some(parsed),
                "base" => base = Some(parsed),
                _ => {
                    return Err(syntax(
                        lineno,
                        column_of(raw, tok),
                        format!("unknown object option `{key}`"),
                    ))
                }
            }
        } else {
            attributes.push(expect_identifier(raw, tok, lineno, "attribute name")?);
        }
    }
    let optionality = match toks[2] {
        "required" => {
            if max.is_some() || base.is_some() {
                return Err(syntax(
                    lineno,
                    column_of(raw, "required"),
                    "`max`/`base` only apply to countable objects",
                ));
            }
            Optionality::Required
        }
        "countable" => Optionality::Countable {
            max: max.unwrap_or(1),
            base: base.unwrap_or(0),
        },
        other => {
            return Err(syntax(
                lineno,
                column_of(raw, other),
                format!("expected `required` or `countable`, found `{other}`"),
            ))
        }
    };
    Ok(ObjectDef {
        name,
        category,
        optionality,
        attributes,
    })
}

fn parse_quoted(raw: &str, s: &str, lineno: usize) -> Result<String, DslError> {
    let mut out = String::new();
    let mut chars = s.chars();
    let mut escaped = false;
    for c in chars.by_ref() {
        if escaped {
            out.push(c);
            escaped = false;
        } else if c == '\\' {
            escaped = true;
        } else if c == '"' {
            let rest: String = chars.collect();
            if !rest.trim().is_empty() {
                return Err(syntax(
                    lineno,
                    column_of(raw, rest.trim()),
                    "unexpected text after description",
                ));
            }
            return Ok(out);
        } else {
            out.push(c);
        }
    }
    Err(syntax(lineno, column_of(raw, "\""), "unterminated string"))
}

fn parse_rule(
    raw: &str,
    line: &str,
    lineno: usize,
    class: RuleClass,
) -> Result<GrammarRule, DslError> {
    let (head, description) = match line.find('"') {
        Some(pos) => (&line[..pos], parse_quoted(raw, &line[pos + 1..], lineno)?),
        None => (line, String::new()),
    };
    let mut toks = head.split_whitespace();
    let op_tok = toks.next().unwrap_or_default();
    let op = RuleOp::parse(op_tok).ok_or_else(|| {
        syntax(
            lineno,
            column_of(raw, op_tok),
            format!("unknown rule operation `{op_tok}` (expected match, become or change)"),
        )
    })?;
    let mut participants = Vec::new();
    let mut tag = None;
    for tok in toks {
        if let Some(t) = tok.strip_prefix('@') {
            if tag.is_some() {
                return Err(syntax(lineno, column_of(raw, tok), "duplicate rule tag"));
            }
            tag = Some(expect_identifier(raw, t, lineno, "rule tag")?);
        } else if let Some((o, a)) = tok.split_once('.') {
            participants.push(Slot::new(
                expect_identifier(raw, o, lineno, "object name")?,
                expect_identifier(raw, a, lineno, "attribute name")?,
            ));
        } else {
            return Err(syntax(
                lineno,
                column_of(raw, tok),
                format!("expected `Object.attribute`, found `{tok}`"),
            ));
        }
    }
    Ok(GrammarRule {
        class,
        op,
        participants,
        tag,
        description,
    })
}

fn split_forms(raw: &str, s: &str, lineno: usize) -> Result<Vec<String>, DslError> {
    let forms: Vec<String> = s
        .split(',')
        .map(|f| f.split_whitespace().collect::<Vec<_>>().join(" "))
        .collect();
    if forms.iter().any(String::is_empty) {
        return Err(syntax(lineno, column_of(raw, s.trim()), "empty surface form"));
    }
    Ok(forms)
}

fn parse_lexicon_line(
    raw: &str,
    line: &str,
    lineno: usize,
    lexicon: &mut Lexicon,
) -> Result<(), DslError> {
    if let Some(rest) = line.strip_prefix("contract:") {
        let (from, to) = rest.split_once("=>").ok_or_else(|| {
            syntax(lineno, column_of(raw, rest), "expected `contract: <words> => <word>`")
        })?;
        let from = from.split_whitespace().collect::<Vec<_>>().join(" ");
        let to = to.split_whitespace().collect::<Vec<_>>().join(" ");
        if from.is_empty() || to.is_empty() {
            return Err(syntax(lineno, column_of(raw, rest), "empty contraction side"));
        }
        lexicon.contractions.push(Contraction { from, to });
        return Ok(());
    }
    if let Some(rest) = line.strip_prefix("coordinator:") {
        let word = rest.trim();
        if word.is_empty() {
            return Err(syntax(lineno, column_of(raw, line), "empty coordinator"));
        }
        if lexicon.coordinator.is_some() {
            return Err(syntax(lineno, 1, "duplicate coordinator"));
        }
        lexicon.coordinator = Some(word.to_string());
        return Ok(());
    }
    let (key, forms) = line
        .split_once(':')
        .ok_or_else(|| syntax(lineno, column_of(raw, line), "expected `:` in lexicon line"))?;
    let key = key.trim();
    if let Some(object) = key.strip_prefix("glue ") {
        let object = expect_identifier(raw, object.trim(), lineno, "object name")?;
        let words = split_forms(raw, forms, lineno)?;
        lexicon.glue.entry(object).or_default().extend(words);
        return Ok(());
    }
    let (category, bundle) = match key.find('[') {
        Some(open) => {
            let close = key.rfind(']').filter(|&c| c > open).ok_or_else(|| {
                syntax(lineno, column_of(raw, key), "unterminated attribute bundle")
            })?;
            if !key[close + 1..].trim().is_empty() {
                return Err(syntax(lineno, column_of(raw, key), "text after attribute bundle"));
            }
            (key[..open].trim(), parse_bundle(raw, &key[open + 1..close], lineno)?)
        }
        None => (key, Bundle::new()),
    };
    let category = expect_identifier(raw, category, lineno, "category")?;
    for surface in split_forms(raw, forms, lineno)? {
        lexicon.entries.push(LexEntry {
            category: category.clone(),
            bundle: bundle.clone(),
            surface,
        });
    }
    Ok(())
}

fn parse_bundle(raw: &str, s: &str, lineno: usize) -> Result<Bundle, DslError> {
    let mut bundle = Bundle::new();
    for part in s.split(',').map(str::trim).filter(|p| !p.is_empty()) {
        let (k, v) = part.split_once('=').ok_or_else(|| {
            syntax(lineno, column_of(raw, part), format!("expected `attr=value`, found `{part}`"))
        })?;
        let k = expect_identifier(raw, k.trim(), lineno, "attribute name")?;
        let v = expect_identifier(raw, v.trim(), lineno, "attribute value")?;
        if bundle.insert(k.clone(), v).is_some() {
            return Err(syntax(
                lineno,
                column_of(raw, part),
                format!("attribute `{k}` repeated in bundle"),
            ));
        }
    }
    Ok(bundle)
}

fn unknown(symbol: impl Into<String>, context: impl Into<String>) -> DslError {
    DslError::UnknownSymbol {
        symbol: symbol.into(),
        context: context.into(),
    }
}

/// Check every grammar invariant: closure of symbols, rule well-formedness and
/// lexicon totality.
pub fn validate(g: &PhenomenonGrammar) -> Result<(), DslError> {
    let mut names = HashSet::new();
    for a in &g.attributes {
        if !names.insert(&a.name) {
            return Err(DslError::Invalid(format!("attribute `{}` declared twice", a.name)));
        }
        if a.values.is_empty() {
            return Err(DslError::Invalid(format!("attribute `{}` has no values", a.name)));
        }
        let distinct: HashSet<_> = a.values.iter().collect();
        if distinct.len() != a.values.len() {
            return Err(DslError::Invalid(format!(
                "attribute `{}` repeats a value",
                a.name
            )));
        }
        if a.kind == AttributeKind::Ordinal && a.values.len() < 2 {
            return Err(DslError::Invalid(format!(
                "ordinal attribute `{}` needs at least two values",
                a.name
            )));
        }
    }

    let mut names = HashSet::new();
    for o in &g.objects {
        if !names.insert(&o.name) {
            return Err(DslError::Invalid(format!("object `{}` declared twice", o.name)));
        }
        let mut attrs = HashSet::new();
        for a in &o.attributes {
            if g.attribute(a).is_none() {
                return Err(unknown(a, format!("attributes of object {}", o.name)));
            }
            if !attrs.insert(a) {
                return Err(DslError::Invalid(format!(
                    "object `{}` lists attribute `{a}` twice",
                    o.name
                )));
            }
        }
    }
    if g.objects.iter().filter(|o| o.is_countable()).count() > 1 {
        return Err(DslError::Invalid(
            "at most one countable object is allowed".into(),
        ));
    }

    for rule in g.rules_e.iter().chain(&g.rules_i) {
        validate_rule(g, rule)?;
    }
    if g.rules_e.is_empty() {
        return Err(DslError::EmptyRuleSet);
    }

    validate_lexicon(g)
}

fn validate_rule(g: &PhenomenonGrammar, rule: &GrammarRule) -> Result<(), DslError> {
    let context = format!("{:?} rule `{}`", rule.class, rule.op.as_str());
    if rule.participants.is_empty() {
        return Err(DslError::Invalid(format!("{context} has no participants")));
    }
    for p in &rule.participants {
        let Some(obj) = g.object(&p.object) else {
            return Err(unknown(&p.object, context));
        };
        if g.attribute(&p.attribute).is_none() {
            return Err(unknown(&p.attribute, context));
        }
        if !obj.attributes.contains(&p.attribute) {
            return Err(unknown(p.to_string(), context));
        }
    }
    if rule.op == RuleOp::Match {
        if rule.participants.len() < 2 {
            return Err(DslError::Invalid(format!(
                "{context} needs at least two participants"
            )));
        }
        let attr = &rule.participants[0].attribute;
        if rule.participants.iter().any(|p| &p.attribute != attr) {
            return Err(DslError::Invalid(format!(
                "{context} participants must share one attribute"
            )));
        }
        let distinct: BTreeSet<_> = rule.participants.iter().map(|p| &p.object).collect();
        if distinct.len() != rule.participants.len() {
            return Err(DslError::Invalid(format!("{context} repeats an object")));
        }
    }
    Ok(())
}

fn validate_lexicon(g: &PhenomenonGrammar) -> Result<(), DslError> {
    let lex = &g.lexicon;
    let categories: BTreeSet<&str> = g.objects.iter().map(|o| o.category.as_str()).collect();
    for e in &lex.entries {
        if !categories.contains(e.category.as_str()) {
            return Err(unknown(&e.category, "lexicon category"));
        }
        for (k, v) in &e.bundle {
            let Some(def) = g.attribute(k) else {
                return Err(unknown(k, format!("lexicon bundle for {}", e.category)));
            };
            if def.position(v).is_none() {
                return Err(unknown(v, format!("lexicon bundle value for {k}")));
            }
        }
        if e.surface.is_empty() || e.surface.trim() != e.surface {
            return Err(DslError::Invalid(format!(
                "surface form `{}` is empty or padded",
                e.surface
            )));
        }
    }
    for (object, words) in &lex.glue {
        if g.object(object).is_none() {
            return Err(unknown(object, "lexicon glue"));
        }
        if words.iter().any(|w| w.is_empty() || w.trim() != w) {
            return Err(DslError::Invalid(format!("empty glue word for {object}")));
        }
    }
    for o in &g.objects {
        for bundle in g.bundles(o) {
            if lex.forms(&o.category, &bundle).is_empty() {
                return Err(DslError::IncompleteLexicon {
                    object: o.name.clone(),
                    bundle: format_bundle(&bundle),
                });
            }
        }
    }
    Ok(())
}

fn quote(s: &str) -> String {
    let mut out = String::with_capacity(s.len() + 2);
    out.push('"');
    for c in s.chars() {
        if c == '"' || c == '\\' {
            out.push('\\');
        }
        out.push(c);
    }
    out.push('"');
    out
}

fn write_rule(out: &mut String, r: &GrammarRule) {
    out.push_str("  ");
    out.push_str(r.op.as_str());
    for p in &r.participants {
        let _ = write!(out, " {p}");
    }
    if let Some(tag) = &r.tag {
        let _ = write!(out, " @{tag}");
    }
    if !r.description.is_empty() {
        let _ = write!(out, " {}", quote(&r.description));
    }
    out.push('\n');
}

/// Canonical text form of a grammar. Output is a pure function of the value.
pub fn serialize_phenomenon(g: &PhenomenonGrammar) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "phenomenon: {}", g.id);

    out.push_str("\nattributes:\n");
    for a in &g.attributes {
        let _ = writeln!(out, "  {} {} {}", a.name, a.kind.as_str(), a.values.join(" "));
    }

    out.push_str("\nobjects:\n");
    for o in &g.objects {
        let _ = write!(out, "  {} {}", o.name, o.category);
        match o.optionality {
            Optionality::Required => out.push_str(" required"),
            Optionality::Countable { max, base } => {
                let _ = write!(out, " countable max={max} base={base}");
            }
        }
        for a in &o.attributes {
            let _ = write!(out, " {a}");
        }
        out.push('\n');
    }

    out.push_str("\nrules-E:\n");
    for r in &g.rules_e {
        write_rule(&mut out, r);
    }
    out.push_str("\nrules-I:\n");
    for r in &g.rules_i {
        write_rule(&mut out, r);
    }

    out.push_str("\nlexicon:\n");
    out.push_str(&serialize_lexicon_body(&g.lexicon));
    out
}

/// Lexicon lines, grouping consecutive entries that share a key.
pub fn serialize_lexicon_body(lex: &Lexicon) -> String {
    let mut out = String::new();
    let mut groups: Vec<((&str, &Bundle), Vec<&str>)> = Vec::new();
    for e in &lex.entries {
        match groups.last_mut() {
            Some(((c, b), forms)) if *c == e.category && *b == &e.bundle => {
                forms.push(&e.surface)
            }
            _ => groups.push(((&e.category, &e.bundle), vec![&e.surface])),
        }
    }
    for ((category, bundle), forms) in groups {
        let _ = writeln!(out, "  {category} {}: {}", format_bundle(bundle), forms.join(", "));
    }
    let glue: BTreeMap<_, _> = lex.glue.iter().collect();
    for (object, words) in glue {
        let _ = writeln!(out, "  glue {object}: {}", words.join(", "));
    }
    if let Some(c) = &lex.coordinator {
        let _ = writeln!(out, "  coordinator: {c}");
    }
    for c in &lex.contractions {
        let _ = writeln!(out, "  contract: {} => {}", c.from, c.to);
    }
    out
}
