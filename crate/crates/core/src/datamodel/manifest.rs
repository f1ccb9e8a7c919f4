//! JSON Lines manifest: one [`SampleRecord`] per line.

use std::collections::HashSet;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Read, Write};
use std::path::Path;

use rayon::prelude::*;

use super::record::SampleRecord;
use crate::error::{Error, Result};

pub fn load_manifest(path: impl AsRef<Path>) -> Result<Vec<SampleRecord>> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    parse_manifest(BufReader::new(file)).map_err(|e| match e {
        Error::Io { source, .. } => Error::io(path, source),
        other => other,
    })
}

/// Parses and validates every line; blank lines are ignored.
pub fn parse_manifest<R: Read>(reader: BufReader<R>) -> Result<Vec<SampleRecord>> {
    let mut lines = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let line = line.map_err(|e| Error::io("<manifest>", e))?;
        if !line.trim().is_empty() {
            lines.push((i + 1, line));
        }
    }
    let records = lines
        .par_iter()
        .map(|(no, line)| {
            let rec: SampleRecord = serde_json::from_str(line).map_err(|e| Error::Parse {
                line: *no,
                message: e.to_string(),
            })?;
            rec.validate()?;
            Ok(rec)
        })
        .collect::<Result<Vec<_>>>()?;
    let mut seen = HashSet::with_capacity(records.len());
    for r in &records {
        if !seen.insert(r.sample_id.as_str()) {
            return Err(Error::DuplicateId(r.sample_id.clone()));
        }
    }
    Ok(records)
}

pub fn write_manifest<W: Write>(mut out: W, records: &[SampleRecord]) -> Result<()> {
    let lines: Vec<String> = records
        .par_iter()
        .map(serde_json::to_string)
        .collect::<std::result::Result<_, _>>()?;
    for line in lines {
        out.write_all(line.as_bytes())
            .and_then(|_| out.write_all(b"\n"))
            .map_err(|e| Error::io("<manifest>", e))?;
    }
    out.flush().map_err(|e| Error::io("<manifest>", e))
}

pub fn save_manifest(path: impl AsRef<Path>, records: &[SampleRecord]) -> Result<()> {
    let path = path.as_ref();
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    write_manifest(BufWriter::new(file), records).map_err(|e| match e {
        Error::Io { source, .. } => Error::io(path, source),
        other => other,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::datamodel::record::Eye;

    fn line(id: &str, gaze: u8) -> String {
        format!(
            r#"{{"sample_id":"{id}","subject_id":"s1","eye":"L","gaze_point":{gaze},"brightness_level":3,"frame_idx":0,"image_ref":"a.png","annotation":null,"quality":null,"category":null,"split":null}}"#
        )
    }

    fn parse(text: &str) -> Result<Vec<SampleRecord>> {
        parse_manifest(BufReader::new(text.as_bytes()))
    }

    #[test]
    fn empty_file() {
        assert!(parse("").unwrap().is_empty());
    }

    #[test]
    fn single_record() {
        let recs = parse(&line("a", 5)).unwrap();
        assert_eq!(recs.len(), 1);
        assert_eq!(recs[0].gaze_point, 5);
        assert_eq!(recs[0].eye, Eye::L);
    }

    #[test]
    fn gaze_zero_is_rejected() {
        match parse(&line("a", 0)) {
            Err(Error::InvariantViolation { sample_id, field }) => {
                assert_eq!(sample_id, "a");
                assert_eq!(field, "gaze_point");
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn duplicate_and_parse_errors() {
        let text = format!("{}\n{}\n", line("a", 1), line("a", 2));
        assert!(matches!(parse(&text), Err(Error::DuplicateId(id)) if id == "a"));
        let text = format!("{}\n\n{{not json\n", line("a", 1));
        assert!(matches!(parse(&text), Err(Error::Parse { line: 3, .. })));
    }

    #[test]
    fn keys_and_eye_encoding() {
        let recs = parse(&line("a", 4)).unwrap();
        let mut buf = Vec::new();
        write_manifest(&mut buf, &recs).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert_eq!(text.trim_end(), line("a", 4));
    }
}
