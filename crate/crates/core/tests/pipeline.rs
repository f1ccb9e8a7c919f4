use std::collections::{BTreeMap, BTreeSet, HashSet};
use std::path::Path;
use std::sync::OnceLock;

use iriskit::datamodel::{SampleRecord, Split};
use iriskit::encode::{extract_records, ExtractConfig, Method};
use iriskit::matcher::{match_pairs, MatcherConfig};
use iriskit::metrics::{frr_at_far, ScoreSet};
use iriskit::protocols::{
    build_identification, build_verification, load_identification, load_pairs, save_identification,
    save_pairs, split_dataset, EyeMode, ProtocolName, ProtocolSpec, Task,
};
use iriskit::quality::{clean, score_all, QualityThresholds};
use iriskit::synthgen::{generate_corpus, SynthConfig};

fn corpus() -> &'static [SampleRecord] {
    static CORPUS: OnceLock<Vec<SampleRecord>> = OnceLock::new();
    CORPUS.get_or_init(|| {
        let (mut records, _) = clean(generate_corpus(&SynthConfig::new(5, 21)).unwrap());
        score_all(&mut records, &QualityThresholds::default(), Path::new(".")).unwrap();
        records
    })
}

#[test]
fn split_keeps_subjects_whole() {
    let a = split_dataset(corpus().to_vec(), 0.6, 3).unwrap();
    let b = split_dataset(corpus().to_vec(), 0.6, 3).unwrap();
    assert_eq!(a, b);

    let mut sides: BTreeMap<&str, BTreeSet<bool>> = BTreeMap::new();
    for r in &a {
        sides
            .entry(&r.subject_id)
            .or_default()
            .insert(r.split == Some(Split::Train));
    }
    assert!(sides.values().all(|s| s.len() == 1));
    let train = sides.values().filter(|s| s.contains(&true)).count();
    assert_eq!(train, 3);
}

#[test]
fn protocols_rebuild_identically_and_survive_a_round_trip() {
    let records = split_dataset(corpus().to_vec(), 0.4, 8).unwrap();
    let t = QualityThresholds::default();
    let dir = tempfile::tempdir().unwrap();

    let spec =
        ProtocolSpec::new(ProtocolName::Angle, Task::Verification, EyeMode::Dual, 8).unwrap();
    let list = build_verification(&spec, &records, &t).unwrap();
    assert_eq!(list, build_verification(&spec, &records, &t).unwrap());
    assert!(list.n_genuine() > 0 && list.n_genuine() < list.pairs.len());
    let keys: HashSet<_> = list
        .pairs
        .iter()
        .map(|p| (p.probe.key(), p.reference.key()))
        .collect();
    assert_eq!(keys.len(), list.pairs.len());
    save_pairs(dir.path().join("angle.csv"), &list).unwrap();
    assert_eq!(load_pairs(dir.path().join("angle.csv")).unwrap(), list);

    let spec = ProtocolSpec::new(
        ProtocolName::Control,
        Task::Identification,
        EyeMode::Right,
        8,
    )
    .unwrap();
    let set = build_identification(&spec, &records, &t).unwrap();
    assert_eq!(set, build_identification(&spec, &records, &t).unwrap());
    let classes: HashSet<_> = set.gallery.iter().map(|e| &e.class_id).collect();
    assert_eq!(classes.len(), set.gallery.len());
    assert!(set.probes.iter().all(|p| classes.contains(&p.class_id)));
    save_identification(dir.path().join("id.csv"), &set).unwrap();
    assert_eq!(load_identification(dir.path().join("id.csv")).unwrap(), set);
}

#[test]
fn crop_embeddings_separate_genuine_from_impostor() {
    let records = split_dataset(corpus().to_vec(), 0.2, 1).unwrap();
    let spec =
        ProtocolSpec::new(ProtocolName::Control, Task::Verification, EyeMode::Left, 1).unwrap();
    let list = build_verification(&spec, &records, &QualityThresholds::default()).unwrap();

    let used: HashSet<&str> = list
        .pairs
        .iter()
        .flat_map(|p| p.probe.ids().chain(p.reference.ids()))
        .collect();
    let subset: Vec<SampleRecord> = records
        .iter()
        .filter(|r| used.contains(r.sample_id.as_str()))
        .cloned()
        .collect();
    let templates = extract_records::<f64>(
        Method::IrBBox,
        &subset,
        Path::new("."),
        &ExtractConfig::default(),
    )
    .unwrap();
    let scores = match_pairs::<f64>(&list.pairs, &templates, &MatcherConfig::default()).unwrap();

    let set = ScoreSet::from_pairs(&scores, iriskit::metrics::Side::Left);
    let mean = |v: &[f64]| v.iter().sum::<f64>() / v.len() as f64;
    assert!(mean(&set.genuine) > mean(&set.impostor) + 0.1);
    let p = frr_at_far(&set, 0.1).unwrap();
    assert!(p.frr < 0.5, "{p:?}");
}
