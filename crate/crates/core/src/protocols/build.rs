use std::collections::{BTreeMap, BinaryHeap, HashMap};

use rayon::prelude::*;

use super::{select_excluded, EyeMode, Pair, ProtocolName, ProtocolSpec, SampleRef, Task};
use crate::datamodel::{Eye, SampleRecord, Split};
use crate::error::{Error, Result};
use crate::quality::{record_flags, Flags, QualityThresholds};
use crate::seed;

/// Materialized verification protocol: genuine pairs in class-major
/// enumeration order, then impostors in sampling order.
#[derive(Clone, Debug, PartialEq)]
pub struct PairList {
    pub spec: ProtocolSpec,
    pub pairs: Vec<Pair>,
}

impl PairList {
    pub fn n_genuine(&self) -> usize {
        self.pairs.iter().filter(|p| p.genuine).count()
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Entry {
    pub class_id: String,
    pub sample: SampleRef,
}

#[derive(Clone, Debug, PartialEq)]
pub struct IdentificationSet {
    pub spec: ProtocolSpec,
    pub gallery: Vec<Entry>,
    pub probes: Vec<Entry>,
}

impl IdentificationSet {
    /// Every probe against every gallery entry, probe-major.
    pub fn pairs(&self) -> Vec<Pair> {
        self.probes
            .iter()
            .flat_map(|p| {
                self.gallery.iter().map(move |g| Pair {
                    probe: p.sample.clone(),
                    reference: g.sample.clone(),
                    genuine: p.class_id == g.class_id,
                })
            })
            .collect()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
enum Role {
    Plain,
    Dilated,
    Normal,
}

#[derive(Clone, Debug)]
struct Item {
    sample: SampleRef,
    class: String,
    gaze: u8,
    role: Role,
}

fn sample_role(name: ProtocolName, flags: Flags, eye: Eye, gaze: u8) -> Option<Role> {
    let plain = |ok: bool| ok.then_some(Role::Plain);
    match name {
        ProtocolName::Occlusion => {
            plain(!flags.is_empty() && flags.within(Flags::EYELID | Flags::EYELASH))
        }
        ProtocolName::Dilation => plain(flags == Flags::PUPIL),
        ProtocolName::Light => {
            if flags == Flags::PUPIL {
                Some(Role::Dilated)
            } else if flags.is_empty() {
                Some(Role::Normal)
            } else {
                None
            }
        }
        ProtocolName::Angle | ProtocolName::Control => plain(flags.is_empty()),
        ProtocolName::Fix | ProtocolName::Any => Some(Role::Plain),
        ProtocolName::Select => plain(!select_excluded(eye).contains(&gaze)),
    }
}

fn pool_constraint(name: ProtocolName) -> &'static str {
    match name {
        ProtocolName::Occlusion => "challenging on eyelid/eyelash only",
        ProtocolName::Dilation => "challenging on pupil ratio only",
        ProtocolName::Light => "dilated samples plus standard samples",
        ProtocolName::Angle | ProtocolName::Control => "standard samples",
        ProtocolName::Fix | ProtocolName::Any => "any sample",
        ProtocolName::Select => "gaze points outside the extreme column",
    }
}

/// Oriented pair rule: may `p` be the probe and `r` the reference?
fn pair_rule(name: ProtocolName, p: &Item, r: &Item) -> bool {
    let gaze_ok = if name.same_gaze() {
        p.gaze == r.gaze
    } else if name == ProtocolName::Angle {
        p.gaze != r.gaze
    } else {
        true
    };
    let role_ok =
        name != ProtocolName::Light || (p.role == Role::Dilated && r.role == Role::Normal);
    gaze_ok && role_ok
}

/// Orientation of an unordered pair, if either direction is allowed.
fn orient(name: ProtocolName, x: &Item, y: &Item) -> Option<bool> {
    if pair_rule(name, x, y) {
        Some(true)
    } else if pair_rule(name, y, x) {
        Some(false)
    } else {
        None
    }
}

fn class_id(subject: &str, eye: Option<Eye>) -> String {
    match eye {
        Some(e) => format!("{subject}:{e}"),
        None => subject.to_string(),
    }
}

/// Scored test-split records of the requested eye mode, each mapped to a
/// pool role by `role`. Dual items are simultaneous L/R groups whose two
/// samples get the same role.
fn collect_items(
    records: &[SampleRecord],
    mode: EyeMode,
    thresholds: &QualityThresholds,
    role: impl Fn(Flags, Eye, u8) -> Option<Role>,
) -> Result<Vec<Item>> {
    let mut items = Vec::new();
    let test = records.iter().filter(|r| r.split != Some(Split::Train));
    match mode.eye() {
        Some(eye) => {
            for r in test.filter(|r| r.eye == eye) {
                if let Some(role) = role(record_flags(r, thresholds)?, eye, r.gaze_point) {
                    items.push(Item {
                        sample: SampleRef::single(&r.sample_id),
                        class: class_id(&r.subject_id, Some(eye)),
                        gaze: r.gaze_point,
                        role,
                    });
                }
            }
        }
        None => {
            type Key<'a> = (&'a str, u8, u8, u8);
            let mut groups: BTreeMap<Key<'_>, [Option<&SampleRecord>; 2]> = BTreeMap::new();
            for r in test {
                let slot = groups
                    .entry((&r.subject_id, r.gaze_point, r.brightness_level, r.frame_idx))
                    .or_default();
                let i = (r.eye == Eye::R) as usize;
                if slot[i].is_some() {
                    return Err(Error::invariant(
                        &r.sample_id,
                        "duplicate capture for a dual-eye group",
                    ));
                }
                slot[i] = Some(r);
            }
            for ((subject, gaze, _, _), slot) in groups {
                let [Some(l), Some(r)] = slot else { continue };
                let rl = role(record_flags(l, thresholds)?, Eye::L, gaze);
                let rr = role(record_flags(r, thresholds)?, Eye::R, gaze);
                if let (Some(a), Some(b)) = (rl, rr) {
                    if a == b {
                        items.push(Item {
                            sample: SampleRef::dual(&l.sample_id, &r.sample_id),
                            class: class_id(subject, None),
                            gaze,
                            role: a,
                        });
                    }
                }
            }
        }
    }
    items.sort_by(|a, b| a.sample.cmp(&b.sample));
    Ok(items)
}

fn pair_hash(stream: u64, i: usize, j: usize) -> u64 {
    seed::derive_index(seed::derive_index(stream, i as u64), j as u64)
}

/// Keeps the `cap` smallest keys.
fn push_bounded<K: Ord>(heap: &mut BinaryHeap<K>, cap: usize, key: K) {
    if heap.len() < cap {
        heap.push(key);
    } else if heap.peek().is_some_and(|top| key < *top) {
        heap.pop();
        heap.push(key);
    }
}

fn make_pair(items: &[Item], i: usize, j: usize, i_is_probe: bool, genuine: bool) -> Pair {
    let (p, r) = if i_is_probe { (i, j) } else { (j, i) };
    Pair {
        probe: items[p].sample.clone(),
        reference: items[r].sample.clone(),
        genuine,
    }
}

fn genuine_pairs(spec: &ProtocolSpec, items: &[Item]) -> Vec<Pair> {
    let mut by_class: BTreeMap<&str, Vec<usize>> = BTreeMap::new();
    for (i, it) in items.iter().enumerate() {
        by_class.entry(&it.class).or_default().push(i);
    }
    let stream = seed::derive(spec.seed, "genuine");
    // (rank, enumeration index, i, j, orientation)
    let mut heap: BinaryHeap<(u64, u64, usize, usize, bool)> = BinaryHeap::new();
    let mut k = 0u64;
    for idx in by_class.values() {
        for (a, &i) in idx.iter().enumerate() {
            for &j in &idx[a + 1..] {
                if let Some(o) = orient(spec.name, &items[i], &items[j]) {
                    push_bounded(
                        &mut heap,
                        spec.caps.genuine,
                        (pair_hash(stream, i, j), k, i, j, o),
                    );
                    k += 1;
                }
            }
        }
    }
    let mut kept = heap.into_vec();
    kept.sort_unstable_by_key(|e| e.1);
    kept.into_iter()
        .map(|(_, _, i, j, o)| make_pair(items, i, j, o, true))
        .collect()
}

fn impostor_pairs(spec: &ProtocolSpec, items: &[Item]) -> Vec<Pair> {
    let cap = spec.caps.impostor;
    let stream = seed::derive(spec.seed, "impostor");
    let mut by_gaze: HashMap<u8, Vec<usize>> = HashMap::new();
    for (i, it) in items.iter().enumerate() {
        by_gaze.entry(it.gaze).or_default().push(i);
    }
    let all: Vec<usize> = (0..items.len()).collect();
    let partners = |i: usize| -> &[usize] {
        let list = if spec.name.same_gaze() {
            &by_gaze[&items[i].gaze]
        } else {
            &all
        };
        let start = list.partition_point(|&j| j <= i);
        &list[start..]
    };
    let heap = (0..items.len())
        .into_par_iter()
        .fold(BinaryHeap::new, |mut heap, i| {
            for &j in partners(i) {
                if items[i].class == items[j].class {
                    continue;
                }
                if let Some(o) = orient(spec.name, &items[i], &items[j]) {
                    push_bounded(&mut heap, cap, (pair_hash(stream, i, j), i, j, o));
                }
            }
            heap
        })
        .reduce(BinaryHeap::new, |mut a, b| {
            for e in b {
                push_bounded(&mut a, cap, e);
            }
            a
        });
    heap.into_sorted_vec()
        .into_iter()
        .map(|(_, i, j, o)| make_pair(items, i, j, o, false))
        .collect()
}

/// Genuine pairs up to the cap, then impostor pairs drawn without
/// replacement by seeded hash ranking. Records labeled train are ignored.
pub fn build_verification(
    spec: &ProtocolSpec,
    records: &[SampleRecord],
    thresholds: &QualityThresholds,
) -> Result<PairList> {
    spec.validate()?;
    let items = collect_items(records, spec.eye_mode, thresholds, |f, e, g| {
        sample_role(spec.name, f, e, g)
    })?;
    let mut pairs = genuine_pairs(spec, &items);
    pairs.extend(impostor_pairs(spec, &items));
    // A pool whose samples cannot pair with each other is as unusable as an empty one.
    if pairs.is_empty() {
        return Err(Error::EmptyPool {
            protocol: spec.name.to_string(),
            constraint: pool_constraint(spec.name).into(),
        });
    }
    Ok(PairList {
        spec: spec.clone(),
        pairs,
    })
}

/// One standard gaze-5 sample (or simultaneous group) per class, chosen by
/// seeded hash. Depends only on the records, eye mode and seed.
fn gallery(
    records: &[SampleRecord],
    spec: &ProtocolSpec,
    thresholds: &QualityThresholds,
) -> Result<Vec<Item>> {
    let role = if spec.name == ProtocolName::Light {
        Role::Normal
    } else {
        Role::Plain
    };
    let eligible = collect_items(records, spec.eye_mode, thresholds, |f, _, g| {
        (f.is_empty() && g == 5).then_some(role)
    })?;
    let stream = seed::derive(spec.seed, "gallery");
    let mut best: BTreeMap<String, (u64, Item)> = BTreeMap::new();
    for it in eligible {
        let h = seed::hash_str(stream, &it.sample.key());
        match best.get(&it.class) {
            Some((bh, b)) if (*bh, &b.sample) <= (h, &it.sample) => {}
            _ => {
                best.insert(it.class.clone(), (h, it));
            }
        }
    }
    Ok(best.into_values().map(|(_, it)| it).collect())
}

/// Unified gallery plus up to `caps.probes_per_class` probes per class from
/// the protocol pool; each probe satisfies the pair rule against its own
/// class's gallery entry.
pub fn build_identification(
    spec: &ProtocolSpec,
    records: &[SampleRecord],
    thresholds: &QualityThresholds,
) -> Result<IdentificationSet> {
    spec.validate()?;
    if spec.task != Task::Identification {
        return Err(Error::InvalidSpec(format!(
            "{} is a {} spec",
            spec.name,
            spec.task.as_str()
        )));
    }
    let gallery = gallery(records, spec, thresholds)?;
    if gallery.is_empty() {
        return Err(Error::EmptyPool {
            protocol: spec.name.to_string(),
            constraint: "gallery: standard samples at gaze point 5".into(),
        });
    }
    let by_class: HashMap<&str, &Item> = gallery.iter().map(|g| (g.class.as_str(), g)).collect();
    let pool = collect_items(records, spec.eye_mode, thresholds, |f, e, g| {
        sample_role(spec.name, f, e, g)
    })?;

    let mut dropped: Vec<&str> = pool
        .iter()
        .map(|p| p.class.as_str())
        .filter(|c| !by_class.contains_key(c))
        .collect();
    dropped.dedup();
    if !dropped.is_empty() {
        log::warn!(
            "{}: {} class(es) without an eligible gallery sample dropped",
            spec.name,
            dropped.len()
        );
    }

    let stream = seed::derive(spec.seed, "probes");
    let mut per_class: BTreeMap<&str, Vec<(u64, &Item)>> = BTreeMap::new();
    for p in &pool {
        let Some(g) = by_class.get(p.class.as_str()) else {
            continue;
        };
        if p.sample == g.sample || !pair_rule(spec.name, p, g) {
            continue;
        }
        per_class
            .entry(&p.class)
            .or_default()
            .push((seed::hash_str(stream, &p.sample.key()), p));
    }
    let mut probes = Vec::new();
    for (class, mut cands) in per_class {
        cands.sort_by(|a, b| (a.0, &a.1.sample).cmp(&(b.0, &b.1.sample)));
        cands.truncate(spec.caps.probes_per_class);
        cands.sort_by(|a, b| a.1.sample.cmp(&b.1.sample));
        probes.extend(cands.into_iter().map(|(_, p)| Entry {
            class_id: class.to_string(),
            sample: p.sample.clone(),
        }));
    }
    Ok(IdentificationSet {
        spec: spec.clone(),
        gallery: gallery
            .into_iter()
            .map(|g| Entry {
                class_id: g.class,
                sample: g.sample,
            })
            .collect(),
        probes,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::datamodel::{Category, QualityScores};

    /// Scored record whose flags are exactly `flags` under default thresholds.
    fn rec(subject: &str, eye: Eye, gaze: u8, level: u8, frame: u8, flags: Flags) -> SampleRecord {
        let t = QualityThresholds::default();
        let hi = |f: Flags, t: f64| {
            if flags.contains(f) {
                (t + 1.0) / 2.0
            } else {
                0.0
            }
        };
        let q = QualityScores {
            eyelid_occ: hi(Flags::EYELID, t.eyelid_occ),
            eyelash_occ: hi(Flags::EYELASH, t.eyelash_occ),
            pupil_ratio: hi(Flags::PUPIL, t.pupil_ratio),
            gaze_dev: hi(Flags::GAZE, t.gaze_dev),
            reflection: hi(Flags::REFLECTION, t.reflection),
        };
        SampleRecord {
            sample_id: format!("{subject}-{eye}-{gaze}-{level:02}-{frame}"),
            subject_id: subject.into(),
            eye,
            gaze_point: gaze,
            brightness_level: level,
            frame_idx: frame,
            image_ref: String::new(),
            annotation: None,
            quality: Some(q),
            category: Some(if flags.is_empty() {
                Category::Standard
            } else {
                Category::Challenging
            }),
            split: Some(Split::Test),
        }
    }

    fn corpus() -> Vec<SampleRecord> {
        let mut out = Vec::new();
        for s in ["A", "B", "C"] {
            for eye in Eye::BOTH {
                for gaze in 1..=9u8 {
                    for frame in 0..3u8 {
                        let flags = match frame {
                            0 => Flags(0),
                            1 if gaze % 2 == 0 => Flags::PUPIL,
                            1 => Flags::EYELID,
                            _ => Flags(0),
                        };
                        out.push(rec(s, eye, gaze, frame, frame, flags));
                    }
                }
            }
        }
        out
    }

    fn spec(name: ProtocolName, task: Task, mode: EyeMode) -> ProtocolSpec {
        ProtocolSpec::new(name, task, mode, 11).unwrap()
    }

    #[test]
    fn control_left_matches_brute_force() {
        let recs = corpus();
        let s = spec(ProtocolName::Control, Task::Verification, EyeMode::Left);
        let list = build_verification(&s, &recs, &QualityThresholds::default()).unwrap();
        let std_l: Vec<&SampleRecord> = recs
            .iter()
            .filter(|r| r.eye == Eye::L && r.category == Some(Category::Standard))
            .collect();
        let mut expected = 0;
        for (i, a) in std_l.iter().enumerate() {
            for b in &std_l[i + 1..] {
                expected += (a.gaze_point == b.gaze_point) as usize;
            }
        }
        assert_eq!(list.pairs.len(), expected);
        let by_id: HashMap<&str, &SampleRecord> =
            recs.iter().map(|r| (r.sample_id.as_str(), r)).collect();
        for p in &list.pairs {
            let (a, b) = (by_id[p.probe.id.as_str()], by_id[p.reference.id.as_str()]);
            assert_eq!(a.gaze_point, b.gaze_point);
            assert_eq!((a.eye, b.eye), (Eye::L, Eye::L));
            assert_eq!(p.genuine, a.subject_id == b.subject_id);
        }
    }

    #[test]
    fn caps_and_determinism() {
        let recs = corpus();
        let mut s = spec(ProtocolName::Any, Task::Verification, EyeMode::Right);
        s.caps.genuine = 7;
        s.caps.impostor = 13;
        let a = build_verification(&s, &recs, &QualityThresholds::default()).unwrap();
        let b = build_verification(&s, &recs, &QualityThresholds::default()).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.n_genuine(), 7);
        assert_eq!(a.pairs.len(), 20);
    }

    #[test]
    fn light_orientation() {
        let recs = corpus();
        let s = spec(ProtocolName::Light, Task::Verification, EyeMode::Dual);
        let list = build_verification(&s, &recs, &QualityThresholds::default()).unwrap();
        assert!(!list.pairs.is_empty());
        for p in &list.pairs {
            assert!(p.probe.id.ends_with("-1"), "{:?}", p.probe);
            assert!(p.probe.id_r.is_some());
        }
    }

    #[test]
    fn identification_gallery_is_unified() {
        let recs = corpus();
        let t = QualityThresholds::default();
        let a = build_identification(
            &spec(ProtocolName::Any, Task::Identification, EyeMode::Left),
            &recs,
            &t,
        )
        .unwrap();
        let b = build_identification(
            &spec(ProtocolName::Angle, Task::Identification, EyeMode::Left),
            &recs,
            &t,
        )
        .unwrap();
        assert_eq!(a.gallery, b.gallery);
        assert_eq!(a.gallery.len(), 3);
        for p in &b.probes {
            assert!(!p.sample.id.contains("-5-"));
        }
    }

    #[test]
    fn probe_cap() {
        let recs = corpus();
        let mut s = spec(ProtocolName::Any, Task::Identification, EyeMode::Left);
        s.caps.probes_per_class = 4;
        let set = build_identification(&s, &recs, &QualityThresholds::default()).unwrap();
        assert_eq!(set.probes.len(), 12);
    }

    #[test]
    fn empty_pool() {
        let recs: Vec<_> = corpus()
            .into_iter()
            .filter(|r| r.category == Some(Category::Standard))
            .collect();
        let s = spec(ProtocolName::Occlusion, Task::Verification, EyeMode::Left);
        assert!(matches!(
            build_verification(&s, &recs, &QualityThresholds::default()),
            Err(Error::EmptyPool { .. })
        ));
    }

    #[test]
    fn unpairable_pool_is_empty() {
        // Two occluded samples left, at different gazes.
        let recs: Vec<_> = corpus()
            .into_iter()
            .filter(|r| {
                r.frame_idx == 1
                    && [("A", 1), ("B", 3)].contains(&(r.subject_id.as_str(), r.gaze_point))
            })
            .collect();
        let s = spec(ProtocolName::Occlusion, Task::Verification, EyeMode::Left);
        assert!(matches!(
            build_verification(&s, &recs, &QualityThresholds::default()),
            Err(Error::EmptyPool { .. })
        ));
        let s = spec(ProtocolName::Any, Task::Verification, EyeMode::Left);
        assert_eq!(
            build_verification(&s, &recs, &QualityThresholds::default())
                .unwrap()
                .pairs
                .len(),
            1
        );
    }
}
