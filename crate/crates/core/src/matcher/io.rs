//! Scores files: a `# {json}` provenance line, a column header, one row per
//! pair. Dual pairs carry a second id per side and `_r` score columns.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{MatchScore, MatcherConfig, PairScore};
use crate::error::{Error, Result};
use crate::protocols::{EyeMode, ProtocolSpec, SampleRef};

const SINGLE: &str = "probe_id,reference_id,label,similarity,best_shift,valid_bits";
const DUAL: &str = "probe_id,probe_id_r,reference_id,reference_id_r,label,\
similarity,best_shift,valid_bits,similarity_r,best_shift_r,valid_bits_r";

/// What produced a scores file.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScoresMeta {
    pub spec: ProtocolSpec,
    pub matcher: MatcherConfig,
    /// Template kind or extraction method, free text.
    #[serde(default)]
    pub templates: String,
}

fn parse_err(line: usize, message: impl Into<String>) -> Error {
    Error::Parse {
        line,
        message: message.into(),
    }
}

fn side(s: &SampleRef) -> String {
    match &s.id_r {
        Some(r) => format!("{},{}", s.id, r),
        None => s.id.clone(),
    }
}

fn score_cells(m: &MatchScore<f64>) -> String {
    format!("{},{},{}", m.similarity, m.best_shift, m.valid_bits)
}

pub fn save_scores(
    path: impl AsRef<Path>,
    meta: &ScoresMeta,
    scores: &[PairScore<f64>],
) -> Result<()> {
    let path = path.as_ref();
    let dual = meta.spec.eye_mode == EyeMode::Dual;
    let f = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut out = BufWriter::new(f);
    (|| {
        writeln!(
            out,
            "# {}",
            serde_json::to_string(meta).expect("meta serializes")
        )?;
        writeln!(out, "{}", if dual { DUAL } else { SINGLE })?;
        for p in scores {
            write!(
                out,
                "{},{},{},{}",
                side(&p.probe),
                side(&p.reference),
                p.genuine as u8,
                score_cells(&p.left)
            )?;
            if let Some(r) = &p.right {
                write!(out, ",{}", score_cells(r))?;
            }
            writeln!(out)?;
        }
        out.flush()
    })()
    .map_err(|e| Error::io(path, e))
}

fn parse_score(cells: &[&str], line: usize) -> Result<MatchScore<f64>> {
    let bad = |what: &str, v: &str| parse_err(line, format!("bad {what} `{v}`"));
    Ok(MatchScore {
        similarity: cells[0].parse().map_err(|_| bad("similarity", cells[0]))?,
        best_shift: cells[1].parse().map_err(|_| bad("best_shift", cells[1]))?,
        valid_bits: cells[2].parse().map_err(|_| bad("valid_bits", cells[2]))?,
    })
}

pub fn load_scores(path: impl AsRef<Path>) -> Result<(ScoresMeta, Vec<PairScore<f64>>)> {
    let path = path.as_ref();
    let f = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut lines = BufReader::new(f).lines().enumerate();
    let mut next = || -> Result<Option<(usize, String)>> {
        match lines.next() {
            Some((i, l)) => Ok(Some((i + 1, l.map_err(|e| Error::io(path, e))?))),
            None => Ok(None),
        }
    };
    let (_, first) = next()?.ok_or_else(|| parse_err(1, "empty scores file"))?;
    let json = first
        .strip_prefix("# ")
        .ok_or_else(|| parse_err(1, "first line must be `# {json}`"))?;
    let meta: ScoresMeta = serde_json::from_str(json).map_err(|e| parse_err(1, e.to_string()))?;
    let dual = meta.spec.eye_mode == EyeMode::Dual;
    let (_, header) = next()?.ok_or_else(|| parse_err(2, "missing column header"))?;
    let expected = if dual { DUAL } else { SINGLE };
    if header.trim() != expected {
        return Err(parse_err(2, format!("expected header `{expected}`")));
    }
    let width = if dual { 11 } else { 6 };
    let mut scores = Vec::new();
    while let Some((n, line)) = next()? {
        if line.trim().is_empty() {
            continue;
        }
        let c: Vec<&str> = line.split(',').collect();
        if c.len() != width {
            return Err(parse_err(
                n,
                format!("expected {width} columns, got {}", c.len()),
            ));
        }
        let (probe, reference, rest) = if dual {
            (
                SampleRef::dual(c[0], c[1]),
                SampleRef::dual(c[2], c[3]),
                &c[4..],
            )
        } else {
            (SampleRef::single(c[0]), SampleRef::single(c[1]), &c[2..])
        };
        let genuine = match rest[0] {
            "1" => true,
            "0" => false,
            v => return Err(parse_err(n, format!("label must be 0 or 1, got `{v}`"))),
        };
        scores.push(PairScore {
            probe,
            reference,
            genuine,
            left: parse_score(&rest[1..4], n)?,
            right: if dual {
                Some(parse_score(&rest[4..7], n)?)
            } else {
                None
            },
        });
    }
    Ok((meta, scores))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::protocols::{ProtocolName, Task};

    fn score(s: f64, shift: i32, bits: u32) -> MatchScore<f64> {
        MatchScore {
            similarity: s,
            best_shift: shift,
            valid_bits: bits,
        }
    }

    #[test]
    fn single_and_dual_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        for mode in [EyeMode::Left, EyeMode::Dual] {
            let meta = ScoresMeta {
                spec: ProtocolSpec::new(ProtocolName::Fix, Task::Verification, mode, 3).unwrap(),
                matcher: MatcherConfig::default(),
                templates: "gabor".into(),
            };
            let dual = mode == EyeMode::Dual;
            let mk = |a: &str, b: &str| {
                if dual {
                    SampleRef::dual(a, format!("{b}r"))
                } else {
                    SampleRef::single(a)
                }
            };
            let scores = vec![
                PairScore {
                    probe: mk("a", "a"),
                    reference: mk("b", "b"),
                    genuine: true,
                    left: score(0.1 + 0.2, -3, 4000),
                    right: dual.then(|| score(1.0 / 3.0, 2, 3999)),
                },
                PairScore {
                    probe: mk("c", "c"),
                    reference: mk("b", "b"),
                    genuine: false,
                    left: score(0.0, 0, 0),
                    right: dual.then(|| score(-1.0, 0, 0)),
                },
            ];
            let path = dir.path().join("s.csv");
            save_scores(&path, &meta, &scores).unwrap();
            let (m, back) = load_scores(&path).unwrap();
            assert_eq!(m, meta);
            assert_eq!(back, scores);
        }
    }

    #[test]
    fn rejects_wrong_header() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("s.csv");
        let meta = ScoresMeta {
            spec: ProtocolSpec::new(ProtocolName::Any, Task::Verification, EyeMode::Left, 1)
                .unwrap(),
            matcher: MatcherConfig::default(),
            templates: String::new(),
        };
        let json = serde_json::to_string(&meta).unwrap();
        std::fs::write(&path, format!("# {json}\nprobe,ref\n")).unwrap();
        assert!(matches!(
            load_scores(&path),
            Err(Error::Parse { line: 2, .. })
        ));
    }
}
