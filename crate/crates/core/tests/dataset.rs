mod common;

use blm_core::augment::{AugmentConfig, Review, StubScorer};
use blm_core::dataset::{
    augment_dataset, generate, generate_from_config, set_review, solve_dataset,
    split_by_lexicalization, strip_answers, validate, Check, DatasetError, DatasetFile,
    GenerationConfig,
};

use common::*;

fn small(count: usize) -> DatasetFile {
    generate_from_config(&agreement_config(count)).unwrap().0
}

#[test]
fn generation_is_byte_deterministic() {
    let a = small(12).to_json();
    let b = small(12).to_json();
    assert_eq!(a, b);
    let mut other = agreement_config(12);
    other.seed += 1;
    assert_ne!(generate_from_config(&other).unwrap().0.to_json(), a);
    let back = DatasetFile::from_json(&a).unwrap();
    assert_eq!(back.to_json(), a);
}

#[test]
fn prefix_stability() {
    let short = small(4);
    let long = small(9);
    assert_eq!(short.instances[..], long.instances[..4]);
}

#[test]
fn checked_in_dataset_regenerates() {
    let stored = read_fixture("agreement_fr_small.json");
    let file = DatasetFile::from_json(&stored).unwrap();
    let config = GenerationConfig {
        base_dir: Some(fixture("")),
        ..file.header.config.clone().unwrap()
    };
    assert_eq!(generate_from_config(&config).unwrap().0.to_json(), stored);
    assert!(validate(&file).ok());
}

#[test]
fn stats_and_empty_runs() {
    let g = agreement();
    let (file, stats) = generate(&g, &agreement_config(0)).unwrap();
    assert!(file.instances.is_empty());
    assert_eq!(stats.instances, 0);
    assert!(validate(&file).ok());
    let (_, stats) = generate(&g, &agreement_config(10)).unwrap();
    assert_eq!(stats.composition.values().sum::<usize>(), 60);
}

#[test]
fn config_errors() {
    let mut c = agreement_config(3);
    c.operators.push("alternation NP1.gender cycle=s,p".into());
    assert!(matches!(generate_from_config(&c), Err(DatasetError::Template(_))));
    let mut c = agreement_config(3);
    c.operators[0] = "spiral NP1.number".into();
    assert!(generate_from_config(&c).is_err());
    let mut c = agreement_config(3);
    c.phenomenon = "missing.blm".into();
    assert!(matches!(generate_from_config(&c), Err(DatasetError::Read { .. })));
    assert!(matches!(
        GenerationConfig::from_toml("phenomenon = 'x'\ncount = 1\nseed = 1\noperators = []\ncolour = 1\n"),
        Err(DatasetError::Config(_))
    ));
}

#[test]
fn every_mutation_is_detected() {
    let base = small(3);
    assert!(validate(&base).ok(), "{:?}", validate(&base).failures);
    let muts = mutations();
    assert!(muts.len() >= 20);
    for (name, check, mutate) in muts {
        let mut f = base.clone();
        mutate(&mut f);
        assert_ne!(f, base, "{name} changed nothing");
        let report = validate(&f);
        assert!(
            report.failing_checks().contains(&check),
            "{name}: expected {}, got {:?}",
            check.as_str(),
            report.failures
        );
    }
}

#[test]
fn corrupt_json_is_a_schema_error() {
    let text = small(1).to_json();
    assert!(matches!(DatasetFile::from_json(&text[..text.len() / 2]), Err(DatasetError::Schema(_))));
    let extra = text.replacen("\"header\": {", "\"header\": {\n    \"colour\": 1,", 1);
    assert!(matches!(DatasetFile::from_json(&extra), Err(DatasetError::Schema(_))));
    let old = text.replace("blm-dataset/1", "blm-dataset/0");
    assert!(matches!(DatasetFile::from_json(&old), Err(DatasetError::Schema(_))));
}

#[test]
fn stripped_export_leaks_nothing() {
    let full = small(3);
    let stripped = strip_answers(&full);
    let json = stripped.to_json();
    for key in ["\"answers\"", "\"labels\"", "\"correct_index\"", "\"seed\"", "\"template\"", "\"config\"", "\"kind\"", "\"operators\""] {
        assert!(!json.contains(key), "{key} leaks");
    }
    assert!(validate(&DatasetFile::from_json(&json).unwrap()).ok());
    let report = solve_dataset(&stripped).unwrap();
    assert_eq!(report.exact, 3);
    assert_eq!(report.accuracy, None);
    let full_report = solve_dataset(&full).unwrap();
    let chosen = |r: &blm_core::dataset::SolveReport| r.records.iter().map(|x| x.chosen).collect::<Vec<_>>();
    assert_eq!(chosen(&report), chosen(&full_report));
}

#[test]
fn solve_report_accounting() {
    let mut f = small(5);
    let report = solve_dataset(&f).unwrap();
    assert_eq!((report.exact, report.accuracy), (5, Some(1.0)));
    assert_eq!(report.confusion.get("Correct"), Some(&5));
    let c = f.answers.as_ref().unwrap()[0].correct_index;
    f.instances[0].options[c] = f.instances[0].options[(c + 1) % 6].clone();
    let report = solve_dataset(&f).unwrap();
    assert_eq!(report.confusion.values().sum::<usize>(), 5);
    assert_eq!(report.unsolved, 1);
    assert!(report.accuracy.unwrap() < 1.0);
}

#[test]
fn augmented_dataset_validates_and_reviews() {
    let base = small(4);
    let stub = StubScorer::load(&fixture("stub_scores_fr.tsv")).unwrap();
    let config = AugmentConfig {
        budget: 2,
        ..AugmentConfig::default()
    };
    let (mut out, stats) = augment_dataset(&base, &stub, &config, 3).unwrap();
    assert_eq!(out.instances[..4], base.instances[..]);
    assert_eq!(out.instances.len(), 4 + stats.augmented);
    assert!(stats.augmented > 0);
    assert!(validate(&out).ok(), "{:?}", validate(&out).failures);
    assert_eq!(solve_dataset(&out).unwrap().accuracy, Some(1.0));

    let id = out.instances[4].id.clone();
    assert_eq!(set_review(&mut out, &[id.clone()], Review::Approved), 1);
    assert_eq!(out.instances[4].augmentation.as_ref().unwrap().review, Review::Approved);

    let mut bad = out.clone();
    let aug = bad.instances[4].augmentation.as_mut().unwrap();
    aug.substitutions[0].rank = aug.window + 1;
    assert!(validate(&bad).failing_checks().contains(&Check::Augmentation));
    let mut bad = out.clone();
    bad.answers.as_mut().unwrap()[4].labels.swap(0, 1);
    assert!(validate(&bad).failing_checks().contains(&Check::Augmentation));
}

#[test]
fn lexical_split_partitions() {
    let f = small(20);
    let (train, held) = split_by_lexicalization(&f, 30);
    assert_eq!(train.instances.len() + held.instances.len(), 20);
    for part in [&train, &held] {
        assert!(validate(part).ok());
        assert_eq!(part.answers.as_ref().unwrap().len(), part.instances.len());
    }
    let (all, none) = split_by_lexicalization(&f, 0);
    assert_eq!((all.instances.len(), none.instances.len()), (20, 0));
}
