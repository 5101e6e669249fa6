//! File formats: the `LPM1` binary matrix, small CSV matrices, JSONL sidecars
//! and the JSONL records emitted by the clustering commands.
//!
//! `LPM1` layout (all little-endian):
//!
//! ```text
//! b"LPM1" | u32 n_docs | u32 n_texts | n_docs * n_texts f64, row-major
//! ```

use std::fs;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::matrix::LogProbMatrix;

pub const LPM1_MAGIC: &[u8; 4] = b"LPM1";
const HEADER_LEN: usize = 12;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MatrixFormat {
    Binary,
    Csv,
}

impl MatrixFormat {
    /// Guesses the format from the file extension; anything but `.csv` is binary.
    pub fn from_path(path: &Path) -> Self {
        match path.extension().and_then(|e| e.to_str()) {
            Some(ext) if ext.eq_ignore_ascii_case("csv") => MatrixFormat::Csv,
            _ => MatrixFormat::Binary,
        }
    }
}

pub fn load_matrix(path: impl AsRef<Path>, format: MatrixFormat) -> Result<LogProbMatrix> {
    let path = path.as_ref();
    match format {
        MatrixFormat::Binary => {
            let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
            decode_lpm1(&bytes)
        }
        MatrixFormat::Csv => {
            let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
            parse_csv(&text)
        }
    }
}

pub fn save_matrix(path: impl AsRef<Path>, matrix: &LogProbMatrix) -> Result<()> {
    let path = path.as_ref();
    fs::write(path, encode_lpm1(matrix)).map_err(|e| Error::io(path, e))
}

pub fn encode_lpm1(matrix: &LogProbMatrix) -> Vec<u8> {
    let mut out = Vec::with_capacity(HEADER_LEN + 8 * matrix.values().len());
    out.extend_from_slice(LPM1_MAGIC);
    out.extend_from_slice(&(matrix.n_docs() as u32).to_le_bytes());
    out.extend_from_slice(&(matrix.n_texts() as u32).to_le_bytes());
    for v in matrix.values() {
        out.extend_from_slice(&v.to_le_bytes());
    }
    out
}

pub fn decode_lpm1(bytes: &[u8]) -> Result<LogProbMatrix> {
    if bytes.len() < HEADER_LEN {
        return Err(Error::MalformedHeader(format!(
            "file is {} bytes, header needs {HEADER_LEN}",
            bytes.len()
        )));
    }
    if &bytes[..4] != LPM1_MAGIC {
        return Err(Error::MalformedHeader(format!(
            "bad magic {:?}",
            String::from_utf8_lossy(&bytes[..4])
        )));
    }
    let n_docs = u32::from_le_bytes(bytes[4..8].try_into().unwrap()) as usize;
    let n_texts = u32::from_le_bytes(bytes[8..12].try_into().unwrap()) as usize;
    let payload = &bytes[HEADER_LEN..];
    if !payload.len().is_multiple_of(8) {
        return Err(Error::MalformedHeader(format!(
            "payload of {} bytes is not a whole number of f64 values",
            payload.len()
        )));
    }
    let expected = n_docs * n_texts;
    let found = payload.len() / 8;
    if found != expected {
        return Err(Error::DimensionMismatch { expected, found });
    }
    let values = payload
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
        .collect();
    LogProbMatrix::new(n_docs, n_texts, values)
}

/// Headerless CSV, one row per document.
pub fn parse_csv(text: &str) -> Result<LogProbMatrix> {
    let mut values = Vec::new();
    let mut n_texts = None;
    let mut n_docs = 0;
    for (lineno, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        let mut count = 0;
        for field in line.split(',') {
            // tolerate typographic minus signs
            let field = field.trim().replace('\u{2212}', "-");
            let v: f64 = field.parse().map_err(|_| Error::Parse {
                line: lineno + 1,
                message: format!("not a number: {field:?}"),
            })?;
            values.push(v);
            count += 1;
        }
        match n_texts {
            None => n_texts = Some(count),
            Some(c) if c != count => {
                return Err(Error::Parse {
                    line: lineno + 1,
                    message: format!("expected {c} fields, found {count}"),
                })
            }
            _ => {}
        }
        n_docs += 1;
    }
    let n_texts = n_texts.ok_or(Error::Empty("csv contains no rows"))?;
    LogProbMatrix::new(n_docs, n_texts, values)
}

/// One line of `docs.jsonl` / `texts.jsonl`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TextRecord {
    pub id: String,
    pub text: String,
}

/// One line of the flat-clustering assignment output.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AssignmentRecord {
    pub doc_id: String,
    pub cluster: usize,
    pub distortion: f64,
}

/// One line of the hierarchical index output; `code` ends with the leaf ordinal.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CodeRecord {
    pub doc_id: String,
    pub code: Vec<usize>,
}

pub fn read_jsonl<T: DeserializeOwned>(path: impl AsRef<Path>) -> Result<Vec<T>> {
    let path = path.as_ref();
    let file = fs::File::open(path).map_err(|e| Error::io(path, e))?;
    let mut out = Vec::new();
    for (lineno, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| Error::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let record = serde_json::from_str(&line).map_err(|e| Error::Parse {
            line: lineno + 1,
            message: e.to_string(),
        })?;
        out.push(record);
    }
    Ok(out)
}

pub fn write_jsonl<T: Serialize>(path: impl AsRef<Path>, records: &[T]) -> Result<()> {
    let path = path.as_ref();
    let file = fs::File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    for r in records {
        serde_json::to_writer(&mut w, r)?;
        w.write_all(b"\n").map_err(|e| Error::io(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

pub fn write_json<T: Serialize>(path: impl AsRef<Path>, value: &T) -> Result<()> {
    let path = path.as_ref();
    let mut bytes = serde_json::to_vec_pretty(value)?;
    bytes.push(b'\n');
    fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

/// Reads the optional `docs.jsonl` and `texts.jsonl` sidecars next to `matrix_path`
/// and applies their ids to `matrix`. Missing sidecars leave positional ids.
pub fn attach_sidecars(matrix: &mut LogProbMatrix, matrix_path: &Path) -> Result<()> {
    let dir = matrix_path.parent().unwrap_or_else(|| Path::new("."));
    let docs = dir.join("docs.jsonl");
    let texts = dir.join("texts.jsonl");
    let doc_ids = if docs.exists() {
        read_jsonl::<TextRecord>(&docs)?
            .into_iter()
            .map(|r| r.id)
            .collect()
    } else {
        matrix.doc_ids().to_vec()
    };
    let text_ids = if texts.exists() {
        read_jsonl::<TextRecord>(&texts)?
            .into_iter()
            .map(|r| r.id)
            .collect()
    } else {
        matrix.text_ids().to_vec()
    };
    matrix.set_ids(doc_ids, text_ids)
}

/// Integer labels, one per line.
pub fn read_labels(path: impl AsRef<Path>) -> Result<Vec<usize>> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| {
            l.trim().parse().map_err(|_| Error::Parse {
                line: i + 1,
                message: format!("not a label: {l:?}"),
            })
        })
        .collect()
}

pub fn write_labels(path: impl AsRef<Path>, labels: &[usize]) -> Result<()> {
    let path = path.as_ref();
    let mut s = String::with_capacity(labels.len() * 3);
    for l in labels {
        s.push_str(&l.to_string());
        s.push('\n');
    }
    fs::write(path, s).map_err(|e| Error::io(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn bytes_for(n_docs: u32, n_texts: u32, payload: &[f64]) -> Vec<u8> {
        let mut b = LPM1_MAGIC.to_vec();
        b.extend_from_slice(&n_docs.to_le_bytes());
        b.extend_from_slice(&n_texts.to_le_bytes());
        for v in payload {
            b.extend_from_slice(&v.to_le_bytes());
        }
        b
    }

    #[test]
    fn decodes_two_by_two() {
        let m = decode_lpm1(&bytes_for(2, 2, &[-1.0, -2.0, -3.0, -4.0])).unwrap();
        assert_eq!(m.n_docs(), 2);
        assert_eq!(m.n_texts(), 2);
        assert_eq!(m.values(), &[-1.0, -2.0, -3.0, -4.0]);
    }

    #[test]
    fn short_payload_is_dimension_mismatch() {
        let err = decode_lpm1(&bytes_for(3, 2, &[-1.0; 5])).unwrap_err();
        assert!(matches!(
            err,
            Error::DimensionMismatch {
                expected: 6,
                found: 5
            }
        ));
    }

    #[test]
    fn bad_magic_and_short_header() {
        let mut b = bytes_for(1, 1, &[-1.0]);
        b[0] = b'X';
        assert!(matches!(decode_lpm1(&b), Err(Error::MalformedHeader(_))));
        assert!(matches!(
            decode_lpm1(b"LPM1\x01\x00"),
            Err(Error::MalformedHeader(_))
        ));
    }

    #[test]
    fn non_finite_and_positive_are_distinct_errors() {
        assert!(matches!(
            decode_lpm1(&bytes_for(1, 2, &[-1.0, f64::NAN])),
            Err(Error::NonFinite { .. })
        ));
        assert!(matches!(
            decode_lpm1(&bytes_for(1, 2, &[-1.0, 0.1])),
            Err(Error::PositiveLogProb { .. })
        ));
    }

    #[test]
    fn csv_with_typographic_minus() {
        let m = parse_csv("\u{2212}0.5,\u{2212}0.7\n\u{2212}0.2,\u{2212}0.9\n").unwrap();
        assert_eq!(m.n_docs(), 2);
        assert_eq!(m.values(), &[-0.5, -0.7, -0.2, -0.9]);
        let m = parse_csv("-0.5,-0.7\n-0.2,-0.9").unwrap();
        assert_eq!(m.values(), &[-0.5, -0.7, -0.2, -0.9]);
    }

    #[test]
    fn csv_ragged_rows_rejected() {
        assert!(matches!(
            parse_csv("-1,-2\n-3\n"),
            Err(Error::Parse { line: 2, .. })
        ));
    }

    #[test]
    fn sidecars_attach_ids() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.lpm");
        let m = LogProbMatrix::new(2, 1, vec![-1.0, -2.0]).unwrap();
        save_matrix(&path, &m).unwrap();
        write_jsonl(
            dir.path().join("docs.jsonl"),
            &[
                TextRecord {
                    id: "a".into(),
                    text: "first".into(),
                },
                TextRecord {
                    id: "b".into(),
                    text: "second".into(),
                },
            ],
        )
        .unwrap();
        let mut loaded = load_matrix(&path, MatrixFormat::Binary).unwrap();
        attach_sidecars(&mut loaded, &path).unwrap();
        assert_eq!(loaded.doc_ids(), &["a".to_string(), "b".to_string()]);
        assert_eq!(loaded.text_ids(), &["0".to_string()]);
    }

    proptest! {
        #[test]
        fn lpm1_round_trip_is_byte_identical(
            n_docs in 1usize..6,
            n_texts in 1usize..6,
            seed in proptest::collection::vec(-500.0f64..=0.0, 36),
        ) {
            let values = seed[..n_docs * n_texts].to_vec();
            let m = LogProbMatrix::new(n_docs, n_texts, values).unwrap();
            let bytes = encode_lpm1(&m);
            let back = decode_lpm1(&bytes).unwrap();
            prop_assert_eq!(&back, &m);
            prop_assert_eq!(encode_lpm1(&back), bytes);
        }
    }
}
