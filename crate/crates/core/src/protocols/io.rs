//! CSV forms of pair lists and identification sets. The first line is a
//! `# ` comment carrying the protocol spec as JSON.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use super::build::Entry;
use super::{EyeMode, IdentificationSet, Pair, PairList, ProtocolSpec, SampleRef};
use crate::error::{Error, Result};

fn parse_err(line: usize, message: impl Into<String>) -> Error {
    Error::Parse {
        line,
        message: message.into(),
    }
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    Ok(BufWriter::new(
        File::create(path).map_err(|e| Error::io(path, e))?,
    ))
}

fn write_header(out: &mut impl Write, spec: &ProtocolSpec, columns: &str) -> std::io::Result<()> {
    writeln!(
        out,
        "# {}",
        serde_json::to_string(spec).expect("spec serializes")
    )?;
    writeln!(out, "{columns}")
}

/// Reads the spec comment and column header, then yields data lines with their line numbers.
fn read_body(path: &Path) -> Result<(ProtocolSpec, Vec<(usize, String)>)> {
    let f = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut lines = Vec::new();
    for (i, l) in BufReader::new(f).lines().enumerate() {
        lines.push((i + 1, l.map_err(|e| Error::io(path, e))?));
    }
    let mut it = lines.into_iter();
    let (_, first) = it
        .next()
        .ok_or_else(|| parse_err(1, "missing spec header"))?;
    let json = first
        .strip_prefix("# ")
        .ok_or_else(|| parse_err(1, "first line must be `# {spec json}`"))?;
    let spec: ProtocolSpec = serde_json::from_str(json).map_err(|e| parse_err(1, e.to_string()))?;
    it.next()
        .ok_or_else(|| parse_err(2, "missing column header"))?;
    Ok((spec, it.filter(|(_, l)| !l.trim().is_empty()).collect()))
}

fn side(cells: &[&str], dual: bool) -> SampleRef {
    if dual {
        SampleRef::dual(cells[0], cells[1])
    } else {
        SampleRef::single(cells[0])
    }
}

fn side_cells(s: &SampleRef) -> String {
    match &s.id_r {
        Some(r) => format!("{},{}", s.id, r),
        None => s.id.clone(),
    }
}

/// Protocol spec from the header line of a pairs or identification file.
pub fn peek_spec(path: impl AsRef<Path>) -> Result<ProtocolSpec> {
    let path = path.as_ref();
    let f = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut first = String::new();
    BufReader::new(f)
        .read_line(&mut first)
        .map_err(|e| Error::io(path, e))?;
    let json = first
        .trim_end()
        .strip_prefix("# ")
        .ok_or_else(|| parse_err(1, "first line must be `# {spec json}`"))?;
    serde_json::from_str(json).map_err(|e| parse_err(1, e.to_string()))
}

pub fn save_pairs(path: impl AsRef<Path>, list: &PairList) -> Result<()> {
    let path = path.as_ref();
    let mut out = create(path)?;
    let columns = if list.spec.eye_mode == EyeMode::Dual {
        "probe_id,probe_id_r,reference_id,reference_id_r,label"
    } else {
        "probe_id,reference_id,label"
    };
    (|| {
        write_header(&mut out, &list.spec, columns)?;
        for p in &list.pairs {
            writeln!(
                out,
                "{},{},{}",
                side_cells(&p.probe),
                side_cells(&p.reference),
                p.genuine as u8
            )?;
        }
        out.flush()
    })()
    .map_err(|e| Error::io(path, e))
}

pub fn load_pairs(path: impl AsRef<Path>) -> Result<PairList> {
    let (spec, body) = read_body(path.as_ref())?;
    let dual = spec.eye_mode == EyeMode::Dual;
    let width = if dual { 5 } else { 3 };
    let mut pairs = Vec::with_capacity(body.len());
    for (n, line) in body {
        let cells: Vec<&str> = line.split(',').collect();
        if cells.len() != width {
            return Err(parse_err(
                n,
                format!("expected {width} columns, got {}", cells.len()),
            ));
        }
        let genuine = match cells[width - 1] {
            "1" => true,
            "0" => false,
            other => return Err(parse_err(n, format!("label must be 0 or 1, got `{other}`"))),
        };
        let half = (width - 1) / 2;
        pairs.push(Pair {
            probe: side(&cells[..half], dual),
            reference: side(&cells[half..2 * half], dual),
            genuine,
        });
    }
    Ok(PairList { spec, pairs })
}

pub fn save_identification(path: impl AsRef<Path>, set: &IdentificationSet) -> Result<()> {
    let path = path.as_ref();
    let mut out = create(path)?;
    let columns = if set.spec.eye_mode == EyeMode::Dual {
        "role,class_id,sample_id,sample_id_r"
    } else {
        "role,class_id,sample_id"
    };
    (|| {
        write_header(&mut out, &set.spec, columns)?;
        for (role, entries) in [("gallery", &set.gallery), ("probe", &set.probes)] {
            for e in entries {
                writeln!(out, "{role},{},{}", e.class_id, side_cells(&e.sample))?;
            }
        }
        out.flush()
    })()
    .map_err(|e| Error::io(path, e))
}

pub fn load_identification(path: impl AsRef<Path>) -> Result<IdentificationSet> {
    let (spec, body) = read_body(path.as_ref())?;
    let dual = spec.eye_mode == EyeMode::Dual;
    let width = if dual { 4 } else { 3 };
    let (mut gallery, mut probes) = (Vec::new(), Vec::new());
    for (n, line) in body {
        let cells: Vec<&str> = line.split(',').collect();
        if cells.len() != width {
            return Err(parse_err(
                n,
                format!("expected {width} columns, got {}", cells.len()),
            ));
        }
        let entry = Entry {
            class_id: cells[1].to_string(),
            sample: side(&cells[2..], dual),
        };
        match cells[0] {
            "gallery" => gallery.push(entry),
            "probe" => probes.push(entry),
            other => return Err(parse_err(n, format!("unknown role `{other}`"))),
        }
    }
    Ok(IdentificationSet {
        spec,
        gallery,
        probes,
    })
}
