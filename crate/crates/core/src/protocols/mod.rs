//! Subject-disjoint splitting and the eight evaluation protocols.

mod build;
mod io;

pub use build::{build_identification, build_verification, Entry, IdentificationSet, PairList};
pub use io::{load_identification, load_pairs, peek_spec, save_identification, save_pairs};

use std::collections::BTreeSet;
use std::fmt;
use std::str::FromStr;

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::datamodel::{Eye, SampleRecord, Split};
use crate::error::{Error, Result};
use crate::seed;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ProtocolName {
    Occlusion,
    Dilation,
    Light,
    Angle,
    Control,
    Fix,
    Select,
    Any,
}

impl ProtocolName {
    pub const ALL: [ProtocolName; 8] = [
        ProtocolName::Occlusion,
        ProtocolName::Dilation,
        ProtocolName::Light,
        ProtocolName::Angle,
        ProtocolName::Control,
        ProtocolName::Fix,
        ProtocolName::Select,
        ProtocolName::Any,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            ProtocolName::Occlusion => "occlusion",
            ProtocolName::Dilation => "dilation",
            ProtocolName::Light => "light",
            ProtocolName::Angle => "angle",
            ProtocolName::Control => "control",
            ProtocolName::Fix => "fix",
            ProtocolName::Select => "select",
            ProtocolName::Any => "any",
        }
    }

    /// Factor-specific protocols isolate one degradation or variation.
    pub fn is_factor_specific(self) -> bool {
        matches!(
            self,
            ProtocolName::Occlusion
                | ProtocolName::Dilation
                | ProtocolName::Light
                | ProtocolName::Angle
        )
    }

    /// Both sides of a pair must share a gaze point.
    pub fn same_gaze(self) -> bool {
        matches!(
            self,
            ProtocolName::Occlusion
                | ProtocolName::Dilation
                | ProtocolName::Light
                | ProtocolName::Control
                | ProtocolName::Fix
        )
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Task {
    Verification,
    Identification,
}

impl Task {
    pub fn as_str(self) -> &'static str {
        match self {
            Task::Verification => "verification",
            Task::Identification => "identification",
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EyeMode {
    Left,
    Right,
    Dual,
}

impl EyeMode {
    pub const ALL: [EyeMode; 3] = [EyeMode::Left, EyeMode::Right, EyeMode::Dual];

    pub fn as_str(self) -> &'static str {
        match self {
            EyeMode::Left => "left",
            EyeMode::Right => "right",
            EyeMode::Dual => "dual",
        }
    }

    pub fn eye(self) -> Option<Eye> {
        match self {
            EyeMode::Left => Some(Eye::L),
            EyeMode::Right => Some(Eye::R),
            EyeMode::Dual => None,
        }
    }
}

macro_rules! parse_lower {
    ($t:ty, $what:literal, [$($v:expr),*]) => {
        impl FromStr for $t {
            type Err = Error;
            fn from_str(s: &str) -> Result<Self> {
                [$($v),*]
                    .into_iter()
                    .find(|v| v.as_str() == s)
                    .ok_or_else(|| Error::InvalidSpec(format!(concat!("unknown ", $what, " `{}`"), s)))
            }
        }
        impl fmt::Display for $t {
            fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                f.write_str(self.as_str())
            }
        }
    };
}

parse_lower!(
    ProtocolName,
    "protocol",
    [
        ProtocolName::Occlusion,
        ProtocolName::Dilation,
        ProtocolName::Light,
        ProtocolName::Angle,
        ProtocolName::Control,
        ProtocolName::Fix,
        ProtocolName::Select,
        ProtocolName::Any
    ]
);
parse_lower!(Task, "task", [Task::Verification, Task::Identification]);
parse_lower!(
    EyeMode,
    "eye mode",
    [EyeMode::Left, EyeMode::Right, EyeMode::Dual]
);

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Caps {
    pub genuine: usize,
    pub impostor: usize,
    pub probes_per_class: usize,
}

impl Caps {
    pub fn for_protocol(name: ProtocolName) -> Self {
        Caps {
            genuine: 1_500_000,
            impostor: if name.is_factor_specific() {
                2_000_000
            } else {
                3_000_000
            },
            probes_per_class: 100,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ProtocolSpec {
    pub name: ProtocolName,
    pub task: Task,
    pub eye_mode: EyeMode,
    pub seed: u64,
    pub caps: Caps,
}

impl ProtocolSpec {
    /// Validated spec with the default caps of `name`.
    pub fn new(name: ProtocolName, task: Task, eye_mode: EyeMode, seed: u64) -> Result<Self> {
        let spec = ProtocolSpec {
            name,
            task,
            eye_mode,
            seed,
            caps: Caps::for_protocol(name),
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<()> {
        if self.name == ProtocolName::Dilation && self.task == Task::Identification {
            return Err(Error::InvalidSpec(
                "dilation is not defined for identification: the gallery never holds dilated samples".into(),
            ));
        }
        if self.name == ProtocolName::Select && self.eye_mode == EyeMode::Dual {
            return Err(Error::InvalidSpec(
                "select has no dual-eye mode: only gaze points 2/5/8 are shared by both eyes"
                    .into(),
            ));
        }
        Ok(())
    }

    /// Every valid (name, task, eye mode) combination.
    pub fn all_valid(seed: u64) -> Vec<ProtocolSpec> {
        let mut out = Vec::new();
        for task in [Task::Verification, Task::Identification] {
            for name in ProtocolName::ALL {
                for mode in EyeMode::ALL {
                    if let Ok(s) = ProtocolSpec::new(name, task, mode, seed) {
                        out.push(s);
                    }
                }
            }
        }
        out
    }
}

/// Gaze points excluded from `select` for one eye: the columns farthest off-axis.
pub fn select_excluded(eye: Eye) -> [u8; 3] {
    match eye {
        Eye::L => [3, 6, 9],
        Eye::R => [1, 4, 7],
    }
}

/// One side of a pair: a single sample, or a simultaneous left/right group.
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct SampleRef {
    pub id: String,
    pub id_r: Option<String>,
}

impl SampleRef {
    pub fn single(id: impl Into<String>) -> Self {
        SampleRef {
            id: id.into(),
            id_r: None,
        }
    }

    pub fn dual(left: impl Into<String>, right: impl Into<String>) -> Self {
        SampleRef {
            id: left.into(),
            id_r: Some(right.into()),
        }
    }

    pub fn ids(&self) -> impl Iterator<Item = &str> {
        std::iter::once(self.id.as_str()).chain(self.id_r.as_deref())
    }

    /// Identity of the side as one string.
    pub fn key(&self) -> String {
        match &self.id_r {
            Some(r) => format!("{}+{}", self.id, r),
            None => self.id.clone(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Pair {
    pub probe: SampleRef,
    pub reference: SampleRef,
    pub genuine: bool,
}

/// Assigns whole subjects to train/test by a seeded shuffle;
/// `round(ratio * n)` subjects (at least one per side) go to train.
pub fn split_dataset(
    mut records: Vec<SampleRecord>,
    ratio: f64,
    seed_value: u64,
) -> Result<Vec<SampleRecord>> {
    let subjects: BTreeSet<&str> = records.iter().map(|r| r.subject_id.as_str()).collect();
    let n = subjects.len();
    if n < 2 {
        return Err(Error::TooFewSubjects(n));
    }
    if !(0.0..=1.0).contains(&ratio) {
        return Err(Error::InvalidSpec(format!(
            "split ratio {ratio} outside [0,1]"
        )));
    }
    let mut order: Vec<String> = subjects.into_iter().map(str::to_string).collect();
    order.shuffle(&mut seed::rng(seed::derive(seed_value, "split")));
    let n_train = ((ratio * n as f64).round() as usize).clamp(1, n - 1);
    let train: BTreeSet<String> = order.into_iter().take(n_train).collect();
    for r in &mut records {
        r.split = Some(if train.contains(&r.subject_id) {
            Split::Train
        } else {
            Split::Test
        });
    }
    Ok(records)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::datamodel::Eye;

    pub(crate) fn rec(id: &str, subject: &str) -> SampleRecord {
        SampleRecord {
            sample_id: id.into(),
            subject_id: subject.into(),
            eye: Eye::L,
            gaze_point: 5,
            brightness_level: 5,
            frame_idx: 0,
            image_ref: String::new(),
            annotation: None,
            quality: None,
            category: None,
            split: None,
        }
    }

    #[test]
    fn split_ten_subjects() {
        let records: Vec<_> = (0..10)
            .flat_map(|s| (0..3).map(move |i| rec(&format!("{s}-{i}"), &format!("S{s}"))))
            .collect();
        let a = split_dataset(records.clone(), 0.7, 4).unwrap();
        let b = split_dataset(records, 0.7, 4).unwrap();
        assert_eq!(a, b);
        let train: BTreeSet<_> = a
            .iter()
            .filter(|r| r.split == Some(Split::Train))
            .map(|r| r.subject_id.clone())
            .collect();
        assert_eq!(train.len(), 7);
        for r in &a {
            assert_eq!(r.split == Some(Split::Train), train.contains(&r.subject_id));
        }
    }

    #[test]
    fn too_few_subjects() {
        assert!(matches!(
            split_dataset(vec![rec("a", "S")], 0.7, 1),
            Err(Error::TooFewSubjects(1))
        ));
    }

    #[test]
    fn invalid_combinations() {
        assert!(ProtocolSpec::new(
            ProtocolName::Dilation,
            Task::Identification,
            EyeMode::Left,
            0
        )
        .is_err());
        assert!(
            ProtocolSpec::new(ProtocolName::Select, Task::Verification, EyeMode::Dual, 0).is_err()
        );
        // 8*3 + 7*3 minus select/dual twice.
        assert_eq!(ProtocolSpec::all_valid(0).len(), 24 + 21 - 2);
    }

    #[test]
    fn caps_by_family() {
        assert_eq!(Caps::for_protocol(ProtocolName::Angle).impostor, 2_000_000);
        assert_eq!(Caps::for_protocol(ProtocolName::Any).impostor, 3_000_000);
        assert_eq!(Caps::for_protocol(ProtocolName::Any).genuine, 1_500_000);
    }
}
