//! Plain-text matrix blocks.
//!
//! A block is a header line `name rows cols` followed by `rows` lines of
//! whitespace-separated values in row-major order. Blank lines and lines
//! starting with `#` are ignored. Plant files hold blocks `A`, `B`, `W`;
//! weight files hold `Q`, `R`; gain files hold a single block.

use std::fmt::Write as _;
use std::path::Path;

use crate::control::{fmt_f64, LQWeights, LinearPlant, Matrix};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Default, PartialEq)]
pub struct MatrixSet {
    blocks: Vec<(String, Matrix)>,
}

impl MatrixSet {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn push(&mut self, name: impl Into<String>, m: Matrix) {
        self.blocks.push((name.into(), m));
    }

    pub fn get(&self, name: &str) -> Option<&Matrix> {
        self.blocks.iter().find(|(n, _)| n == name).map(|(_, m)| m)
    }

    pub fn require(&self, name: &str) -> Result<&Matrix> {
        self.get(name).ok_or_else(|| Error::Parse {
            line: 0,
            msg: format!("missing matrix block {name:?}"),
        })
    }

    pub fn first(&self) -> Option<&Matrix> {
        self.blocks.first().map(|(_, m)| m)
    }

    pub fn len(&self) -> usize {
        self.blocks.len()
    }

    pub fn is_empty(&self) -> bool {
        self.blocks.is_empty()
    }

    pub fn parse(text: &str) -> Result<Self> {
        let mut lines = text
            .lines()
            .enumerate()
            .map(|(i, l)| (i + 1, l.trim()))
            .filter(|(_, l)| !l.is_empty() && !l.starts_with('#'));
        let mut set = Self::new();
        while let Some((line, header)) = lines.next() {
            let parts: Vec<&str> = header.split_whitespace().collect();
            let bad_header = || Error::Parse {
                line,
                msg: format!("expected `name rows cols`, got {header:?}"),
            };
            if parts.len() != 3 {
                return Err(bad_header());
            }
            let rows: usize = parts[1].parse().map_err(|_| bad_header())?;
            let cols: usize = parts[2].parse().map_err(|_| bad_header())?;
            let mut data = Vec::with_capacity(rows * cols);
            for _ in 0..rows {
                let (row_line, row) = lines.next().ok_or(Error::Parse {
                    line,
                    msg: format!("block {:?} ended early", parts[0]),
                })?;
                let values = row
                    .split_whitespace()
                    .map(|tok| {
                        tok.parse::<f64>().ok().filter(|v| v.is_finite()).ok_or_else(|| Error::Parse {
                            line: row_line,
                            msg: format!("bad number {tok:?}"),
                        })
                    })
                    .collect::<Result<Vec<f64>>>()?;
                if values.len() != cols {
                    return Err(Error::Parse {
                        line: row_line,
                        msg: format!("expected {cols} values, found {}", values.len()),
                    });
                }
                data.extend(values);
            }
            set.push(parts[0], Matrix::from_row_slice(rows, cols, &data));
        }
        Ok(set)
    }

    pub fn read(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::Io(format!("{}: {e}", path.display())))?;
        Self::parse(&text)
    }

    pub fn to_text(&self) -> String {
        let mut out = String::new();
        for (name, m) in &self.blocks {
            write_block(&mut out, name, m);
        }
        out
    }
}

pub fn write_block(out: &mut String, name: &str, m: &Matrix) {
    let _ = writeln!(out, "{name} {} {}", m.nrows(), m.ncols());
    for i in 0..m.nrows() {
        let row: Vec<String> = m.row(i).iter().map(|v| fmt_f64(*v)).collect();
        let _ = writeln!(out, "{}", row.join(" "));
    }
}

pub fn plant_from_set(set: &MatrixSet) -> Result<LinearPlant> {
    LinearPlant::new(set.require("A")?.clone(), set.require("B")?.clone(), set.require("W")?.clone())
}

pub fn weights_from_set(set: &MatrixSet) -> Result<LQWeights> {
    LQWeights::new(set.require("Q")?.clone(), set.require("R")?.clone())
}

pub fn load_plant(path: impl AsRef<Path>) -> Result<LinearPlant> {
    plant_from_set(&MatrixSet::read(path)?)
}

pub fn load_weights(path: impl AsRef<Path>) -> Result<LQWeights> {
    weights_from_set(&MatrixSet::read(path)?)
}

/// First block of a gain file.
pub fn load_gain(path: impl AsRef<Path>) -> Result<Matrix> {
    MatrixSet::read(path)?.first().cloned().ok_or(Error::Parse {
        line: 0,
        msg: "gain file has no matrix block".into(),
    })
}

pub fn plant_to_text(plant: &LinearPlant) -> String {
    let mut out = String::new();
    write_block(&mut out, "A", plant.a());
    write_block(&mut out, "B", plant.b());
    write_block(&mut out, "W", plant.w());
    out
}

pub fn weights_to_text(weights: &LQWeights) -> String {
    let mut out = String::new();
    write_block(&mut out, "Q", weights.q());
    write_block(&mut out, "R", weights.r());
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_blocks_with_comments() {
        let text = "# plant\nA 2 2\n0.8 1\n0 0.8\n\nB 2 1\n0\n1\n";
        let set = MatrixSet::parse(text).unwrap();
        assert_eq!(set.len(), 2);
        assert_eq!(set.require("A").unwrap()[(0, 1)], 1.0);
        assert_eq!(set.require("B").unwrap().shape(), (2, 1));
        assert!(set.require("W").is_err());
    }

    #[test]
    fn malformed_input() {
        assert!(matches!(MatrixSet::parse("A 2 2\n1 2\n"), Err(Error::Parse { .. })));
        assert!(matches!(MatrixSet::parse("A 1 2\n1\n"), Err(Error::Parse { line: 2, .. })));
        assert!(matches!(MatrixSet::parse("A x 2\n"), Err(Error::Parse { line: 1, .. })));
        assert!(matches!(MatrixSet::parse("A 1 1\nnan\n"), Err(Error::Parse { .. })));
    }

    #[test]
    fn text_round_trip_is_exact() {
        let mut set = MatrixSet::new();
        set.push("K", Matrix::from_row_slice(1, 3, &[0.1, -1.0 / 3.0, 1e-300]));
        let back = MatrixSet::parse(&set.to_text()).unwrap();
        assert_eq!(back, set);
    }
}
