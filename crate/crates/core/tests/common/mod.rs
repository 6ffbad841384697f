#![allow(dead_code)]

use std::path::PathBuf;

use blm_core::grammar::PhenomenonGrammar;
use blm_core::template::{build_template, Operator, Shape, TemplateMatrix};
use blm_core::parse_phenomenon;
use proptest::prelude::*;

pub const AGREEMENT_OPS: [&str; 3] = [
    "alternation NP1.number cycle=s,p period=1 phase=0",
    "alternation NP2.number cycle=s,p period=2 phase=0",
    "progression count(NP3) start=1 step=1 block=4",
];

pub fn fixture(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR"))
        .join("../../fixtures")
        .join(name)
}

pub fn read_fixture(name: &str) -> String {
    std::fs::read_to_string(fixture(name)).expect("fixture exists")
}

pub fn grammar(name: &str) -> PhenomenonGrammar {
    parse_phenomenon(&read_fixture(name)).expect("fixture parses")
}

pub fn agreement() -> PhenomenonGrammar {
    grammar("agreement_fr.blm")
}

pub fn ops(texts: &[&str]) -> Vec<Operator> {
    texts.iter().map(|s| s.parse().expect("operator parses")).collect()
}

pub fn agreement_template(g: &PhenomenonGrammar) -> TemplateMatrix {
    build_template(g, Shape::new(8, 24).unwrap(), &ops(&AGREEMENT_OPS)).expect("template builds")
}

/// A random well-formed grammar as `.blm` text.
pub fn arb_grammar_text() -> impl Strategy<Value = String> {
    (
        prop::collection::vec((2usize..=3, any::<bool>()), 1..=2),
        2usize..=4,
        prop::option::of((1u32..=2, 0u32..=1)),
        any::<bool>(),
        1usize..=2,
    )
        .prop_map(|(attrs, n_objects, countable, with_i, forms)| {
            let mut s = String::from("phenomenon: random\n\nattributes:\n");
            for (i, (k, ordinal)) in attrs.iter().enumerate() {
                let kind = if *ordinal { "ordinal" } else { "categorical" };
                let values: Vec<String> = (0..*k).map(|v| format!("v{i}x{v}")).collect();
                s += &format!("  a{i} {kind} {}\n", values.join(" "));
            }
            s += "\nobjects:\n";
            let all_attrs: Vec<String> = (0..attrs.len()).map(|i| format!("a{i}")).collect();
            let mut obj_attrs = Vec::new();
            for j in 0..n_objects {
                let own: Vec<String> = if j % 2 == 0 { all_attrs.clone() } else { vec!["a0".into()] };
                let opt = match (j == n_objects - 1, countable) {
                    (true, Some((max, base))) if j >= 2 => format!("countable max={max} base={base}"),
                    _ => "required".into(),
                };
                s += &format!("  O{j} K{j} {opt} {}\n", own.join(" "));
                obj_attrs.push(own);
            }
            s += "\nrules-E:\n  match O0.a0 O1.a0 \"agree\"\n";
            s += "\nrules-I:\n";
            if with_i {
                s += "  match O0.a0 O1.a0 @distance-invariant\n";
            }
            s += "\nlexicon:\n";
            for (j, own) in obj_attrs.iter().enumerate() {
                let mut bundles: Vec<Vec<String>> = vec![Vec::new()];
                for a in own {
                    let i: usize = a[1..].parse().unwrap();
                    bundles = bundles
                        .into_iter()
                        .flat_map(|b| {
                            (0..attrs[i].0).map(move |v| {
                                let mut b = b.clone();
                                b.push(format!("{a}=v{i}x{v}"));
                                b
                            })
                        })
                        .collect();
                }
                for (bi, b) in bundles.iter().enumerate() {
                    let words: Vec<String> = (0..forms).map(|f| format!("w{j}b{bi}f{f}")).collect();
                    s += &format!("  K{j} [{}]: {}\n", b.join(", "), words.join(", "));
                }
            }
            s += "  glue O1: of, on\n  coordinator: and\n";
            s
        })
}

pub fn agreement_config(count: usize) -> blm_core::dataset::GenerationConfig {
    let mut c = blm_core::dataset::GenerationConfig::load(&fixture("agreement_fr.toml")).expect("config loads");
    c.count = count;
    c
}

pub fn agreement_instances(count: usize) -> Vec<blm_core::BlmInstance> {
    let (file, _) = blm_core::dataset::generate_from_config(&agreement_config(count)).expect("generates");
    file.to_instances().expect("instances")
}

pub type Mutation = (&'static str, blm_core::dataset::Check, fn(&mut blm_core::dataset::DatasetFile));

fn answers0(f: &mut blm_core::dataset::DatasetFile) -> &mut blm_core::dataset::AnswerRecord {
    &mut f.answers.as_mut().expect("answers")[0]
}

fn wrong0(f: &blm_core::dataset::DatasetFile) -> usize {
    (f.answers.as_ref().expect("answers")[0].correct_index + 1) % 6
}

fn realized(row_text: &str, index: usize) -> blm_core::RealizedItem {
    let g = agreement();
    let row = blm_core::template::parse_row(&g, index, row_text).expect("row parses");
    let mut rng = blm_core::seed::stream(7, "mutation", 0);
    blm_core::realize::realize_row(&row, &g, 24, None, &mut rng).expect("realizes")
}

/// Corruptions of a generated dataset (three or more instances, with config)
/// and the check expected to catch each one.
pub fn mutations() -> Vec<Mutation> {
    use blm_core::answers::ViolationKind;
    use blm_core::dataset::Check;
    vec![
        ("move-correct-index", Check::LabelFaithfulness, |f| {
            let w = wrong0(f);
            answers0(f).correct_index = w;
        }),
        ("correct-index-out-of-range", Check::Schema, |f| answers0(f).correct_index = 6),
        ("relabel-kind", Check::LabelFaithfulness, |f| {
            let w = wrong0(f);
            let label = &mut answers0(f).labels[w];
            label.kind = if label.kind == ViolationKind::ViolationR {
                ViolationKind::ViolationE
            } else {
                ViolationKind::ViolationR
            };
        }),
        ("drop-label-detail", Check::LabelFaithfulness, |f| {
            let w = wrong0(f);
            answers0(f).labels[w].detail.pop();
        }),
        ("edit-context-surface", Check::Faithfulness, |f| {
            f.instances[0].context.items[2].surface.insert_str(0, "Hier ");
        }),
        ("edit-option-surface", Check::Faithfulness, |f| {
            let s = &mut f.instances[0].options[1].surface;
            *s = s.replace('.', " encore.");
        }),
        ("flip-context-abstract", Check::Faithfulness, |f| {
            let cell = &mut f.instances[0].context.items[1].abstract_row.cells[1];
            let v = cell.values.get_mut("number").expect("number");
            *v = if v == "s" { "p".into() } else { "s".into() };
        }),
        ("replace-context-item", Check::EConsistency, |f| {
            f.instances[0].context.items[3] = realized("NP1:p NP2:p V:s", 3);
        }),
        ("swap-context-items", Check::Template, |f| {
            f.instances[0].context.items.swap(0, 1);
        }),
        ("drop-context-item", Check::Template, |f| {
            f.instances[0].context.items.pop();
        }),
        ("duplicate-option", Check::Schema, |f| {
            let c = f.answers.as_ref().expect("answers")[0].correct_index;
            let w = wrong0(f);
            f.instances[0].options[w] = f.instances[0].options[c].clone();
        }),
        ("token-length", Check::Faithfulness, |f| {
            f.instances[0].context.items[0].token_length += 1;
        }),
        ("swap-lexical-entry", Check::Faithfulness, |f| {
            let ch = &mut f.instances[0].context.items[0].choices[0];
            ch.entry = blm_core::lexicon::EntryId(ch.entry.0 ^ 1);
        }),
        ("template-operator", Check::Template, |f| {
            let t = f.instances[0].template.as_mut().expect("template");
            t.operators.swap(0, 1);
        }),
        ("template-ref", Check::Template, |f| {
            f.instances[0].context.template_ref.push('x');
        }),
        ("seed", Check::Reproduction, |f| {
            let s = f.instances[0].seed.as_mut().expect("seed");
            *s = s.wrapping_add(1);
        }),
        ("non-canonical-phenomenon", Check::Phenomenon, |f| {
            f.header.phenomenon_source.insert_str(0, "# edited\n");
        }),
        ("phenomenon-id", Check::Phenomenon, |f| {
            f.header.phenomenon_id = "agreement_it".into();
        }),
        ("duplicate-id", Check::Schema, |f| {
            let id = f.instances[0].id.clone();
            f.instances[1].id = id.clone();
            f.answers.as_mut().expect("answers")[1].id = id;
        }),
        ("orphan-answer-record", Check::Schema, |f| {
            f.answers.as_mut().expect("answers").pop();
        }),
        ("swap-options-keep-labels", Check::LabelFaithfulness, |f| {
            let c = f.answers.as_ref().expect("answers")[0].correct_index;
            let w = wrong0(f);
            f.instances[0].options.swap(c, w);
        }),
        ("duplicate-correct-abstract", Check::SingleSolution, |f| {
            let c = f.answers.as_ref().expect("answers")[0].correct_index;
            let w = wrong0(f);
            let text = f.instances[0].options[c].abstract_row.render();
            f.instances[0].options[w] = realized(&text, 7);
            answers0(f).labels[w] = blm_core::ViolationLabel {
                kind: ViolationKind::Correct,
                detail: Vec::new(),
            };
        }),
        ("drop-attractor", Check::Template, |f| {
            f.instances[0].context.items[5] = realized("NP1:p NP2:s V:p", 5);
        }),
        ("format-version", Check::Schema, |f| {
            f.header.format_version = "blm-dataset/0".into();
        }),
    ]
}

/// Table loaded by hand; sentence score by greedy longest match over
/// whitespace tokens with edge punctuation removed.
pub struct Oracle {
    table: std::collections::HashMap<Vec<String>, f64>,
}

fn norm(tok: &str) -> String {
    tok.trim_matches(&['.', ',', ';', ':', '!', '?'][..]).to_lowercase()
}

impl Oracle {
    pub fn load() -> Self {
        let mut table = std::collections::HashMap::new();
        for line in read_fixture("stub_scores_fr.tsv").lines() {
            if line.starts_with('#') || line.is_empty() {
                continue;
            }
            let (s, v) = line.split_once('\t').unwrap();
            table.insert(s.split_whitespace().map(norm).collect(), v.parse().unwrap());
        }
        Oracle { table }
    }

    pub fn phrase(&self, s: &str) -> f64 {
        let key: Vec<String> = s.split_whitespace().map(norm).collect();
        self.table.get(&key).copied().unwrap_or(0.0)
    }

    pub fn sentence(&self, s: &str) -> f64 {
        let toks: Vec<String> = s.split_whitespace().map(norm).filter(|t| !t.is_empty()).collect();
        let longest = self.table.keys().map(Vec::len).max().unwrap();
        let (mut i, mut total) = (0, 0.0);
        while i < toks.len() {
            let hit = (1..=longest.min(toks.len() - i))
                .rev()
                .find_map(|n| self.table.get(&toks[i..i + n]).map(|v| (n, *v)));
            match hit {
                Some((n, v)) => {
                    total += v;
                    i += n;
                }
                None => i += 1,
            }
        }
        total
    }
}

pub type Key = (blm_core::augment::ItemRef, usize, String);

/// Accepted (item, cell, surface) triples derived from the acceptance rule.
pub fn oracle_accepted(inst: &blm_core::BlmInstance, config: &blm_core::augment::AugmentConfig) -> std::collections::BTreeSet<Key> {
    let g = agreement();
    let oracle = Oracle::load();
    let limit = inst.template.as_ref().unwrap().shape.l;
    let items = inst
        .context
        .items
        .iter()
        .enumerate()
        .map(|(i, it)| (blm_core::augment::ItemRef::Context(i), it))
        .chain(inst.answers.options.iter().enumerate().map(|(i, o)| (blm_core::augment::ItemRef::Option(i), &o.item)));
    let mut out = std::collections::BTreeSet::new();
    for (r, item) in items {
        let base = oracle.sentence(&item.surface);
        for (ci, cell) in item.abstract_row.cells.iter().enumerate() {
            if g.object(&cell.object).unwrap().category != "NP" {
                continue;
            }
            let mut alts: Vec<_> = g
                .lexicon
                .forms("NP", &cell.values)
                .into_iter()
                .map(|e| (e, g.lexicon.entry(e).unwrap().surface.clone()))
                .collect();
            alts.sort_by(|a, b| oracle.phrase(&b.1).total_cmp(&oracle.phrase(&a.1)).then(a.1.cmp(&b.1)));
            for (rank, (e, surface)) in alts.into_iter().take(config.k).enumerate() {
                let sub = blm_core::realize::with_entry(item, &g, ci, e);
                if rank < config.window
                    && (oracle.sentence(&sub.surface) - base).abs() <= config.epsilon
                    && blm_core::realize::token_length(&sub.surface) <= limit
                {
                    out.insert((r, ci, surface));
                }
            }
        }
    }
    out
}
