//! Result records and their CSV form.

use std::path::Path;

use crate::error::{Error, Result};

pub const CSV_HEADER: [&str; 7] = ["method", "q_pct", "mse", "cost", "wall_ms", "seed", "selected"];

/// One (method, budget) cell of an experiment. Infeasible cells carry NaN
/// MSE and cost.
#[derive(Debug, Clone, PartialEq)]
pub struct ResultRecord {
    /// Method name, optionally followed by `|param=value` for sweep points.
    pub method: String,
    pub q_pct: f64,
    pub mse: f64,
    pub cost: f64,
    pub wall_ms: f64,
    pub seed: u64,
    /// Selected node labels in selection order.
    pub selected: Vec<usize>,
}

impl ResultRecord {
    pub fn is_infeasible(&self) -> bool {
        self.mse.is_nan()
    }

    /// Equality up to wall time, with NaNs comparing equal.
    pub fn same_outcome(&self, other: &ResultRecord) -> bool {
        let eq = |a: f64, b: f64| a.to_bits() == b.to_bits() || (a.is_nan() && b.is_nan());
        self.method == other.method
            && eq(self.q_pct, other.q_pct)
            && eq(self.mse, other.mse)
            && eq(self.cost, other.cost)
            && self.seed == other.seed
            && self.selected == other.selected
    }
}

/// Shortest scientific notation that parses back to the same `f64`.
fn sci(x: f64) -> String {
    format!("{x:e}")
}

fn row(r: &ResultRecord) -> [String; 7] {
    [
        r.method.clone(),
        sci(r.q_pct),
        sci(r.mse),
        sci(r.cost),
        sci(r.wall_ms),
        r.seed.to_string(),
        r.selected.iter().map(|i| i.to_string()).collect::<Vec<_>>().join(";"),
    ]
}

fn csv_error(e: csv::Error) -> Error {
    match e.into_kind() {
        csv::ErrorKind::Io(io) => Error::Io(io),
        other => Error::Parse { line: 0, message: format!("{other:?}") },
    }
}

pub fn write_results<W: std::io::Write>(records: &[ResultRecord], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(CSV_HEADER).map_err(csv_error)?;
    for r in records {
        w.write_record(row(r)).map_err(csv_error)?;
    }
    w.flush()?;
    Ok(())
}

pub fn emit_results(records: &[ResultRecord], path: impl AsRef<Path>) -> Result<()> {
    write_results(records, std::fs::File::create(path)?)
}

pub fn parse_results(text: &str) -> Result<Vec<ResultRecord>> {
    let mut rd = csv::Reader::from_reader(text.as_bytes());
    let header = rd.headers().map_err(csv_error)?.clone();
    if header.iter().ne(CSV_HEADER) {
        return Err(Error::Parse { line: 1, message: format!("unexpected header {header:?}") });
    }
    let mut out = Vec::new();
    for (i, rec) in rd.records().enumerate() {
        let line = i + 2;
        let rec = rec.map_err(csv_error)?;
        let bad = |what: &str| Error::Parse { line, message: format!("bad {what}") };
        let num = |j: usize, what: &str| rec[j].parse::<f64>().map_err(|_| bad(what));
        let selected = if rec[6].is_empty() {
            Vec::new()
        } else {
            rec[6].split(';').map(|t| t.parse::<usize>().map_err(|_| bad("selected"))).collect::<Result<_>>()?
        };
        out.push(ResultRecord {
            method: rec[0].to_string(),
            q_pct: num(1, "q_pct")?,
            mse: num(2, "mse")?,
            cost: num(3, "cost")?,
            wall_ms: num(4, "wall_ms")?,
            seed: rec[5].parse().map_err(|_| bad("seed"))?,
            selected,
        });
    }
    Ok(out)
}

pub fn read_results(path: impl AsRef<Path>) -> Result<Vec<ResultRecord>> {
    parse_results(&std::fs::read_to_string(path)?)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn scientific_format_round_trips() {
        for x in [0.1, 1.0 / 3.0, 1e-300, 123456.789, 0.0, f64::INFINITY] {
            assert_eq!(sci(x).parse::<f64>().unwrap().to_bits(), x.to_bits());
        }
        assert!(sci(0.25).contains('e'));
    }

    #[test]
    fn rejects_foreign_header() {
        assert!(parse_results("a,b\n1,2\n").is_err());
    }
}
