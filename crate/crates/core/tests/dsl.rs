mod common;

use std::collections::BTreeSet;

use blm_core::dsl::{parse_lexicon, parse_phenomenon, serialize_phenomenon, DslError};
use blm_core::grammar::{Optionality, RuleClass, RuleOp};
use proptest::prelude::*;

use common::*;

#[test]
fn fixtures_parse() {
    for name in ["agreement_fr.blm", "agreement_en.blm", "causative_en.blm"] {
        let g = grammar(name);
        assert!(!g.rules_e.is_empty(), "{name}");
    }
    let g = agreement();
    assert_eq!(g.id, "agreement_fr");
    let names: Vec<&str> = g.objects.iter().map(|o| o.name.as_str()).collect();
    assert_eq!(names, ["NP1", "NP2", "NP3", "V"]);
    assert_eq!(
        g.object("NP3").unwrap().optionality,
        Optionality::Countable { max: 1, base: 1 }
    );
    assert_eq!(g.object("NP3").unwrap().count_domain(), Some((1, 2)));
    assert_eq!(g.rules_e[0].op, RuleOp::Match);
    assert_eq!(g.rules_i[0].class, RuleClass::I);
    assert_eq!(g.lexicon.coordinator.as_deref(), Some("et"));
}

#[test]
fn causative_rules_keep_tags_and_descriptions() {
    let g = grammar("causative_en.blm");
    assert_eq!(g.rules_e[0].op, RuleOp::Become);
    assert_eq!(g.rules_i.len(), 2);
    assert!(g.rules_i.iter().all(|r| r.tag.as_deref() == Some("thematic-role")));
    assert_eq!(g.rules_i[0].op, RuleOp::Change);
    assert!(g.rules_e[0].description.contains("becomes subject"));
}

#[test]
fn fixtures_round_trip() {
    for name in ["agreement_fr.blm", "agreement_en.blm", "causative_en.blm"] {
        let g = grammar(name);
        let text = serialize_phenomenon(&g);
        let again = parse_phenomenon(&text).unwrap();
        assert_eq!(again, g, "{name}");
        assert_eq!(serialize_phenomenon(&again), text, "{name}");
    }
}

/// Every (category, bundle) an object can take, computed from the declarations.
fn required_keys(g: &blm_core::PhenomenonGrammar) -> BTreeSet<(String, Vec<(String, String)>)> {
    let mut out = BTreeSet::new();
    for o in &g.objects {
        let mut bundles: Vec<Vec<(String, String)>> = vec![Vec::new()];
        let mut attrs = o.attributes.clone();
        attrs.sort();
        for a in &attrs {
            let def = g.attribute(a).unwrap();
            bundles = bundles
                .into_iter()
                .flat_map(|b| {
                    def.values.iter().map(move |v| {
                        let mut b = b.clone();
                        b.push((a.clone(), v.clone()));
                        b
                    })
                })
                .collect();
        }
        for b in bundles {
            out.insert((o.category.clone(), b));
        }
    }
    out
}

#[test]
fn deleting_any_lexicon_bundle_is_detected() {
    let src = read_fixture("agreement_fr.blm");
    let g = agreement();
    let keys = required_keys(&g);
    assert_eq!(keys.len(), 4);
    for (cat, bundle) in &keys {
        let header = format!(
            "{cat} [{}]:",
            bundle
                .iter()
                .map(|(k, v)| format!("{k}={v}"))
                .collect::<Vec<_>>()
                .join(", ")
        );
        let pruned: String = src
            .lines()
            .filter(|l| !l.trim_start().starts_with(&header))
            .map(|l| format!("{l}\n"))
            .collect();
        assert_ne!(pruned.len(), src.len() + 1, "{header} not found");
        match parse_phenomenon(&pruned) {
            Err(DslError::IncompleteLexicon { bundle: b, .. }) => {
                assert!(b.contains(&bundle[0].1), "{b} vs {header}")
            }
            other => panic!("expected IncompleteLexicon for {header}, got {other:?}"),
        }
    }
}

#[test]
fn syntax_errors_carry_positions() {
    let err = parse_phenomenon("phenomenon: x\nattributes:\n  number fuzzy s p\n").unwrap_err();
    assert_eq!(
        err,
        DslError::Syntax {
            line: 3,
            column: 10,
            message: "unknown attribute kind `fuzzy`".into()
        }
    );
    let err = parse_phenomenon("phenomenon: x\n  stray\n").unwrap_err();
    assert!(matches!(err, DslError::Syntax { line: 2, column: 3, .. }));
    let err = parse_phenomenon("attributes:\nattributes:\n").unwrap_err();
    assert!(matches!(err, DslError::Syntax { line: 2, .. }));
}

#[test]
fn unknown_rule_participant() {
    let src = read_fixture("agreement_fr.blm").replace("match NP1.number V.number \"the", "match NP1.number W.number \"the");
    match parse_phenomenon(&src) {
        Err(DslError::UnknownSymbol { symbol, .. }) => assert_eq!(symbol, "W"),
        other => panic!("{other:?}"),
    }
}

#[test]
fn missing_e_rules_is_an_error() {
    let src = read_fixture("agreement_fr.blm").replace(
        "  match NP1.number V.number \"the subject and the verb match in agreement features\"\n",
        "",
    );
    assert_eq!(parse_phenomenon(&src), Err(DslError::EmptyRuleSet));
}

#[test]
fn standalone_lexicon() {
    let lex = parse_lexicon("lexicon:\n  NP [number=s]: the key\n  glue NP2: of\n").unwrap();
    assert_eq!(lex.entries.len(), 1);
    assert_eq!(lex.glue_for("NP2"), ["of".to_string()]);
}

proptest! {
    #[test]
    fn random_grammars_round_trip(text in arb_grammar_text()) {
        let g = parse_phenomenon(&text).unwrap();
        let canon = serialize_phenomenon(&g);
        let again = parse_phenomenon(&canon).unwrap();
        prop_assert_eq!(&again, &g);
        prop_assert_eq!(serialize_phenomenon(&again), canon);
    }

    #[test]
    fn parser_never_panics(bytes in prop::collection::vec(any::<u8>(), 0..400)) {
        let text = String::from_utf8_lossy(&bytes);
        let _ = parse_phenomenon(&text);
    }

    #[test]
    fn mutated_fixture_never_panics(pos in 0usize..2000, byte in any::<u8>()) {
        let mut src = read_fixture("agreement_fr.blm").into_bytes();
        let pos = pos % src.len();
        src[pos] = byte;
        let text = String::from_utf8_lossy(&src);
        if let Ok(g) = parse_phenomenon(&text) {
            prop_assert_eq!(parse_phenomenon(&serialize_phenomenon(&g)).unwrap(), g);
        }
    }
}
