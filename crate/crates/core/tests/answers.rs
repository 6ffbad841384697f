mod common;

use std::collections::{BTreeMap, BTreeSet};

use blm_core::answers::{
    build_answer_set, classify, violation_rows, AnswerConfig, AnswerError, Edit, PerturbationStyle,
    ViolationKind,
};
use blm_core::grammar::PhenomenonGrammar;
use blm_core::template::{build_template, parse_row, Shape, TemplateRow};
use proptest::prelude::*;

use common::*;

/// Differences computed cell by cell: presence per (object, occurrence), then
/// attribute values, then the coordination marker.
fn oracle_diff(g: &PhenomenonGrammar, correct: &TemplateRow, option: &TemplateRow) -> BTreeSet<Edit> {
    let key = |r: &TemplateRow| -> BTreeMap<(String, u32), BTreeMap<String, String>> {
        r.cells
            .iter()
            .map(|c| ((c.object.clone(), c.occurrence), c.values.clone()))
            .collect()
    };
    let (a, b) = (key(correct), key(option));
    let mut out = BTreeSet::new();
    for obj in &g.objects {
        let na = a.keys().filter(|(o, _)| *o == obj.name).count() as u32;
        let nb = b.keys().filter(|(o, _)| *o == obj.name).count() as u32;
        if na != nb {
            out.insert(Edit::SetCount {
                object: obj.name.clone(),
                from: na,
                to: nb,
            });
        }
    }
    for ((object, occurrence), vals) in &b {
        if let Some(base) = a.get(&(object.clone(), *occurrence)) {
            for (attr, to) in vals {
                if base[attr] != *to {
                    out.insert(Edit::SetValue {
                        object: object.clone(),
                        occurrence: *occurrence,
                        attribute: attr.clone(),
                        from: base[attr].clone(),
                        to: to.clone(),
                    });
                }
            }
        }
    }
    if let Some(i) = option.coordination {
        if correct.coordination != Some(i) {
            let c = &option.cells[i];
            out.insert(Edit::Coordinate {
                object: c.object.clone(),
                occurrence: c.occurrence,
            });
        }
    }
    out
}

fn abstracts_by_kind(g: &PhenomenonGrammar, seed: u64, style: PerturbationStyle) -> Vec<(ViolationKind, String)> {
    let t = agreement_template(g);
    let config = AnswerConfig {
        style,
        ..AnswerConfig::default()
    };
    let set = build_answer_set(&t, g, &config, seed).unwrap();
    let mut out: Vec<(ViolationKind, String)> = set
        .options
        .iter()
        .map(|o| (o.label.kind, o.item.abstract_row.render()))
        .collect();
    out.sort();
    out
}

#[test]
fn default_composition_reproduces_answer_template() {
    let g = agreement();
    let mut expected = vec![
        (ViolationKind::Correct, "NP1:p NP2:p NP3:s V:p".to_string()),
        (ViolationKind::WrongStructure, "NP1:p NP2:p and NP3:s V:p".to_string()),
        (ViolationKind::ViolationR, "NP1:s NP2:s V:s".to_string()),
        (ViolationKind::ViolationE, "NP1:s NP2:s NP3:s V:p".to_string()),
        (ViolationKind::ViolationI, "NP1:p NP2:s NP3:s V:p".to_string()),
        (ViolationKind::ViolationI, "NP1:p NP2:p NP3:p V:p".to_string()),
    ];
    expected.sort();
    for seed in 0..25 {
        assert_eq!(abstracts_by_kind(&g, seed, PerturbationStyle::Template), expected, "seed {seed}");
    }
}

#[test]
fn minimal_style_is_single_edit() {
    let g = agreement();
    let t = agreement_template(&g);
    for kind in ViolationKind::ALL.into_iter().filter(|k| *k != ViolationKind::Correct) {
        for row in violation_rows(&t, &g, kind, PerturbationStyle::Minimal).unwrap() {
            let label = classify(&g, t.answer_row(), &row);
            assert_eq!(label.kind, kind, "{}", row.render());
            assert_eq!(label.detail.len(), 1, "{kind}: {:?}", label.detail);
        }
    }
    let rows: Vec<String> = abstracts_by_kind(&g, 3, PerturbationStyle::Minimal)
        .into_iter()
        .map(|(k, r)| format!("{k} {r}"))
        .collect();
    assert!(rows.contains(&"ViolationE NP1:p NP2:p NP3:s V:s".to_string()), "{rows:?}");
    assert!(rows.contains(&"ViolationR NP1:p NP2:p V:p".to_string()), "{rows:?}");
}

#[test]
fn invalid_compositions() {
    let g = agreement();
    let t = agreement_template(&g);
    let two = AnswerConfig {
        composition: vec![ViolationKind::Correct, ViolationKind::Correct],
        ..AnswerConfig::default()
    };
    assert_eq!(build_answer_set(&t, &g, &two, 0).unwrap_err(), AnswerError::InvalidComposition(2));
    let many_i = AnswerConfig {
        composition: vec![ViolationKind::Correct, ViolationKind::ViolationI, ViolationKind::ViolationI, ViolationKind::ViolationI],
        ..AnswerConfig::default()
    };
    assert!(matches!(
        build_answer_set(&t, &g, &many_i, 0),
        Err(AnswerError::NotPerturbable { kind: ViolationKind::ViolationI, .. })
    ));
}

#[test]
fn no_i_rules_means_no_i_distractors() {
    let src = read_fixture("agreement_fr.blm").replace(
        "  match NP1.number V.number @distance-invariant \"occurs independently of distance of subject and verb\"\n",
        "",
    );
    let g = blm_core::parse_phenomenon(&src).unwrap();
    assert!(g.rules_i.is_empty());
    let t = agreement_template(&g);
    assert!(matches!(
        build_answer_set(&t, &g, &AnswerConfig::default(), 0),
        Err(AnswerError::NotPerturbable { kind: ViolationKind::ViolationI, .. })
    ));
    let without_i = AnswerConfig {
        composition: vec![ViolationKind::Correct, ViolationKind::ViolationE, ViolationKind::ViolationR],
        ..AnswerConfig::default()
    };
    assert_eq!(build_answer_set(&t, &g, &without_i, 0).unwrap().options.len(), 3);
}

#[test]
fn wrong_structure_needs_two_phrases_of_a_kind() {
    let g = agreement();
    let t = build_template(&g, Shape::new(3, 20).unwrap(), &ops(&["alternation NP1.number cycle=s,p"])).unwrap();
    let rows = violation_rows(&t, &g, ViolationKind::WrongStructure, PerturbationStyle::Template).unwrap();
    assert_eq!(rows[0].render(), "NP1:s and NP2:s V:s");
}

#[test]
fn matched_lexicalization_reuses_positions() {
    let g = agreement();
    let t = agreement_template(&g);
    let config = AnswerConfig {
        matched_lexicalization: true,
        ..AnswerConfig::default()
    };
    for seed in 0..10 {
        let set = build_answer_set(&t, &g, &config, seed).unwrap();
        let correct = &set.options[set.correct_index].item;
        for o in &set.options {
            for (cell, ch) in o.item.abstract_row.cells.iter().zip(&o.item.choices) {
                let same = correct
                    .abstract_row
                    .cells
                    .iter()
                    .zip(&correct.choices)
                    .find(|(c, _)| c.object == cell.object && c.occurrence == cell.occurrence);
                if let Some((c, cch)) = same {
                    if c.values == cell.values {
                        assert_eq!(ch.entry, cch.entry, "seed {seed} {}", cell.object);
                    }
                }
            }
        }
    }
}

#[test]
fn annotated_answers_classify_as_labeled() {
    let g = agreement();
    let rows: Vec<(String, String)> = read_fixture("annotated_examples_fr.tsv")
        .lines()
        .filter(|l| l.starts_with("answer\t"))
        .map(|l| {
            let f: Vec<&str> = l.split('\t').collect();
            (f[2].to_string(), f[3].to_string())
        })
        .collect();
    let correct = parse_row(&g, 7, &rows.iter().find(|(_, k)| k == "Correct").unwrap().0).unwrap();
    assert_eq!(correct, *agreement_template(&g).answer_row());
    for (text, kind) in &rows {
        let row = parse_row(&g, 7, text).unwrap();
        assert_eq!(classify(&g, &correct, &row).kind.as_str(), kind, "{text}");
    }
}

proptest! {
    #[test]
    fn labels_agree_with_diff_oracle(seed in any::<u64>(), minimal in any::<bool>(), matched in any::<bool>()) {
        let g = agreement();
        let t = agreement_template(&g);
        let config = AnswerConfig {
            style: if minimal { PerturbationStyle::Minimal } else { PerturbationStyle::Template },
            matched_lexicalization: matched,
            ..AnswerConfig::default()
        };
        let set = build_answer_set(&t, &g, &config, seed).unwrap();
        prop_assert_eq!(set.options.len(), 6);
        let correct = &set.options[set.correct_index];
        prop_assert_eq!(correct.label.kind, ViolationKind::Correct);
        prop_assert_eq!(&correct.item.abstract_row, t.answer_row());
        let surfaces: BTreeSet<&str> = set.options.iter().map(|o| o.item.surface.as_str()).collect();
        prop_assert_eq!(surfaces.len(), 6);
        for o in &set.options {
            let detail: BTreeSet<Edit> = o.label.detail.iter().cloned().collect();
            prop_assert_eq!(detail.len(), o.label.detail.len());
            prop_assert_eq!(&detail, &oracle_diff(&g, t.answer_row(), &o.item.abstract_row));
            prop_assert_eq!(&classify(&g, t.answer_row(), &o.item.abstract_row), &o.label);
            prop_assert_eq!(o.label.kind == ViolationKind::Correct, o.label.detail.is_empty());
        }
        prop_assert_eq!(build_answer_set(&t, &g, &config, seed).unwrap(), set);
    }
}
