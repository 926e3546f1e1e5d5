//! Direction-number tables in the Joe–Kuo text layout.
//!
//! The file carries one record per dimension starting at dimension 2:
//! `d s a m_1 ... m_s`, where `s` is the degree of the primitive polynomial,
//! `a` encodes its interior coefficient bits, and the `m_k` are the initial
//! direction integers. Dimension 1 is always the identity construction (all
//! direction integers 1) and consumes no record.

use std::io::BufRead;
use std::path::Path;

use crate::error::{Error, Result};

/// One parsed record of the table (dimensions 2 and up).
#[derive(Debug, Clone)]
pub struct DirectionRecord {
    /// Degree of the primitive polynomial.
    pub degree: u32,
    /// Interior coefficient bits of the polynomial.
    pub poly: u32,
    /// Initial direction integers, `m[k]` odd and `< 2^(k+1)`.
    pub initial: Vec<u32>,
}

/// A direction-number table with capacity for `max_dimension()` dimensions.
#[derive(Debug, Clone)]
pub struct DirectionNumbers {
    records: Vec<DirectionRecord>,
}

impl DirectionNumbers {
    /// Parse a table from a reader in the Joe–Kuo layout. The first line is
    /// a header and is ignored.
    pub fn parse(reader: impl BufRead) -> Result<Self> {
        let mut records = Vec::new();
        for (idx, line) in reader.lines().enumerate() {
            let line = line?;
            let lineno = idx + 1;
            if idx == 0 {
                continue; // header
            }
            let trimmed = line.trim();
            if trimmed.is_empty() {
                continue;
            }
            let mut fields = trimmed.split_whitespace();
            let parse_u32 = |tok: Option<&str>, what: &str| -> Result<u32> {
                tok.ok_or_else(|| Error::Parse {
                    line: lineno,
                    message: format!("missing {what}"),
                })?
                .parse::<u32>()
                .map_err(|e| Error::Parse {
                    line: lineno,
                    message: format!("bad {what}: {e}"),
                })
            };
            let dim = parse_u32(fields.next(), "dimension index")?;
            let degree = parse_u32(fields.next(), "degree")?;
            let poly = parse_u32(fields.next(), "polynomial code")?;
            let expected_dim = records.len() as u32 + 2;
            if dim != expected_dim {
                return Err(Error::Parse {
                    line: lineno,
                    message: format!("expected record for dimension {expected_dim}, found {dim}"),
                });
            }
            if degree == 0 || degree > 32 {
                return Err(Error::Parse {
                    line: lineno,
                    message: format!("degree {degree} out of range 1..=32"),
                });
            }
            let mut initial = Vec::with_capacity(degree as usize);
            for k in 0..degree {
                let m = parse_u32(fields.next(), &format!("direction integer m_{}", k + 1))?;
                if m % 2 == 0 {
                    return Err(Error::Parse {
                        line: lineno,
                        message: format!("direction integer m_{} = {m} is even", k + 1),
                    });
                }
                if m >= 1u32 << (k + 1) {
                    return Err(Error::Parse {
                        line: lineno,
                        message: format!("direction integer m_{} = {m} >= 2^{}", k + 1, k + 1),
                    });
                }
                initial.push(m);
            }
            if fields.next().is_some() {
                return Err(Error::Parse {
                    line: lineno,
                    message: "trailing fields after direction integers".to_string(),
                });
            }
            records.push(DirectionRecord {
                degree,
                poly,
                initial,
            });
        }
        Ok(DirectionNumbers { records })
    }

    /// Load a table from a file path.
    pub fn from_path(path: impl AsRef<Path>) -> Result<Self> {
        let file = std::fs::File::open(path)?;
        Self::parse(std::io::BufReader::new(file))
    }

    /// Highest dimension this table can serve (dimension 1 is implicit).
    pub fn max_dimension(&self) -> usize {
        self.records.len() + 1
    }

    /// Record for `dimension` (>= 2), if present.
    pub fn record(&self, dimension: usize) -> Option<&DirectionRecord> {
        if dimension < 2 {
            return None;
        }
        self.records.get(dimension - 2)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::io::Cursor;

    const SMALL: &str = "d s a m_i\n2 1 0 1\n3 2 1 1 3\n4 3 1 1 3 1\n";

    #[test]
    fn parses_published_layout() {
        let table = DirectionNumbers::parse(Cursor::new(SMALL)).unwrap();
        assert_eq!(table.max_dimension(), 4);
        let rec = table.record(2).unwrap();
        assert_eq!(rec.degree, 1);
        assert_eq!(rec.poly, 0);
        assert_eq!(rec.initial, vec![1]);
        let rec3 = table.record(3).unwrap();
        assert_eq!((rec3.degree, rec3.poly), (2, 1));
        assert_eq!(rec3.initial, vec![1, 3]);
    }

    #[test]
    fn even_direction_integer_rejected() {
        let bad = "header\n2 1 0 2\n";
        let err = DirectionNumbers::parse(Cursor::new(bad)).unwrap_err();
        match err {
            Error::Parse { line, message } => {
                assert_eq!(line, 2);
                assert!(message.contains("even"), "{message}");
            }
            other => panic!("unexpected error {other:?}"),
        }
    }

    #[test]
    fn out_of_range_direction_integer_rejected() {
        // m_2 must be < 4
        let bad = "header\n2 1 0 1\n3 2 1 1 5\n";
        assert!(matches!(
            DirectionNumbers::parse(Cursor::new(bad)),
            Err(Error::Parse { line: 3, .. })
        ));
    }

    #[test]
    fn malformed_record_reports_line() {
        let bad = "header\n2 1 0 1\n3 2 x 1 3\n";
        match DirectionNumbers::parse(Cursor::new(bad)).unwrap_err() {
            Error::Parse { line, .. } => assert_eq!(line, 3),
            other => panic!("unexpected error {other:?}"),
        }
    }

    #[test]
    fn shipped_table_parses_and_validates() {
        let path = concat!(env!("CARGO_MANIFEST_DIR"), "/data/joe-kuo-128.txt");
        let table = DirectionNumbers::from_path(path).unwrap();
        assert!(table.max_dimension() >= 128);
        // Cross-check dimension 2 against the published Joe–Kuo file.
        let rec = table.record(2).unwrap();
        assert_eq!((rec.degree, rec.poly, rec.initial.as_slice()), (1, 0, &[1][..]));
    }
}
