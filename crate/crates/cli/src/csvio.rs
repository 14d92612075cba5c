//! CSV schemas for per-population results and convergence summaries.
//!
//! Numeric fields use Rust's shortest round-trip formatting, so files are
//! byte-stable across runs and thread counts and parse back exactly.

use std::collections::HashMap;
use std::io::{BufRead, Write};

use randtrial_core::{Error, Result};

pub const POPULATIONS_COLUMNS: &[&str] = &[
    "scheme",
    "test",
    "adjustment",
    "n",
    "N",
    "null",
    "nrand",
    "nsamp",
    "alpha",
    "population_index",
    "type1_error",
    "rejections",
    "trials",
    "degenerate_count",
];

pub const SUMMARY_COLUMNS: &[&str] = &[
    "scheme",
    "test",
    "adjustment",
    "n",
    "N",
    "null",
    "alpha",
    "l",
    "npops",
    "mean",
    "p2_5",
    "p97_5",
    "spread",
    "within_bounds_proportion",
];

/// One row of populations.csv: one population × one test.
#[derive(Clone, Debug, PartialEq)]
pub struct PopulationRow {
    pub scheme: String,
    pub test: String,
    pub adjustment: String,
    pub n: usize,
    pub big_n: usize,
    pub null: String,
    pub nrand: u64,
    pub nsamp: u64,
    pub alpha: f64,
    pub population_index: u64,
    pub type1_error: f64,
    pub rejections: u64,
    pub trials: u64,
    pub degenerate_count: u64,
}

/// One row of summary.csv: one (scheme, test, adjustment, n, N) group.
#[derive(Clone, Debug, PartialEq)]
pub struct SummaryRow {
    pub scheme: String,
    pub test: String,
    pub adjustment: String,
    pub n: usize,
    pub big_n: usize,
    pub null: String,
    pub alpha: f64,
    pub l: u64,
    pub npops: usize,
    pub mean: f64,
    pub p2_5: f64,
    pub p97_5: f64,
    pub spread: f64,
    pub within_bounds_proportion: f64,
}

pub fn write_populations_header<W: Write>(w: &mut W) -> std::io::Result<()> {
    writeln!(w, "{}", POPULATIONS_COLUMNS.join(","))
}

pub fn write_population_row<W: Write>(w: &mut W, r: &PopulationRow) -> std::io::Result<()> {
    writeln!(
        w,
        "{},{},{},{},{},{},{},{},{},{},{},{},{},{}",
        r.scheme,
        r.test,
        r.adjustment,
        r.n,
        r.big_n,
        r.null,
        r.nrand,
        r.nsamp,
        r.alpha,
        r.population_index,
        r.type1_error,
        r.rejections,
        r.trials,
        r.degenerate_count
    )
}

pub fn write_summary_header<W: Write>(w: &mut W) -> std::io::Result<()> {
    writeln!(w, "{}", SUMMARY_COLUMNS.join(","))
}

pub fn write_summary_row<W: Write>(w: &mut W, r: &SummaryRow) -> std::io::Result<()> {
    writeln!(
        w,
        "{},{},{},{},{},{},{},{},{},{},{},{},{},{}",
        r.scheme,
        r.test,
        r.adjustment,
        r.n,
        r.big_n,
        r.null,
        r.alpha,
        r.l,
        r.npops,
        r.mean,
        r.p2_5,
        r.p97_5,
        r.spread,
        r.within_bounds_proportion
    )
}

/// Map header fields to column indices, failing with the name of the first
/// missing required column. Extra columns are tolerated.
fn header_positions(header: &str, required: &[&str]) -> Result<HashMap<String, usize>> {
    let fields: Vec<&str> = header.trim_end().split(',').map(str::trim).collect();
    let mut positions = HashMap::new();
    for (i, f) in fields.iter().enumerate() {
        positions.insert((*f).to_string(), i);
    }
    for col in required {
        if !positions.contains_key(*col) {
            return Err(Error::InvalidInput(format!("missing column `{col}`")));
        }
    }
    Ok(positions)
}

struct RowReader<'a> {
    positions: &'a HashMap<String, usize>,
    fields: Vec<String>,
    lineno: usize,
}

impl RowReader<'_> {
    fn raw(&self, col: &str) -> Result<&str> {
        let &idx = self
            .positions
            .get(col)
            .ok_or_else(|| Error::InvalidInput(format!("missing column `{col}`")))?;
        self.fields.get(idx).map(String::as_str).ok_or_else(|| {
            Error::InvalidInput(format!(
                "line {}: row has too few fields for column `{col}`",
                self.lineno
            ))
        })
    }

    fn parse<T: std::str::FromStr>(&self, col: &str) -> Result<T>
    where
        T::Err: std::fmt::Display,
    {
        self.raw(col)?.parse().map_err(|e| {
            Error::InvalidInput(format!("line {}: bad `{col}`: {e}", self.lineno))
        })
    }
}

pub fn read_populations_csv<R: BufRead>(r: R) -> Result<Vec<PopulationRow>> {
    let mut lines = r.lines();
    let header = match lines.next() {
        Some(Ok(h)) => h,
        _ => return Err(Error::InvalidInput("empty populations CSV".into())),
    };
    let positions = header_positions(&header, POPULATIONS_COLUMNS)?;
    let mut rows = Vec::new();
    for (i, line) in lines.enumerate() {
        let line = line.map_err(|e| Error::InvalidInput(format!("read error: {e}")))?;
        if line.trim().is_empty() {
            continue;
        }
        let reader = RowReader {
            positions: &positions,
            fields: line.split(',').map(|s| s.trim().to_string()).collect(),
            lineno: i + 2,
        };
        rows.push(PopulationRow {
            scheme: reader.raw("scheme")?.to_string(),
            test: reader.raw("test")?.to_string(),
            adjustment: reader.raw("adjustment")?.to_string(),
            n: reader.parse("n")?,
            big_n: reader.parse("N")?,
            null: reader.raw("null")?.to_string(),
            nrand: reader.parse("nrand")?,
            nsamp: reader.parse("nsamp")?,
            alpha: reader.parse("alpha")?,
            population_index: reader.parse("population_index")?,
            type1_error: reader.parse("type1_error")?,
            rejections: reader.parse("rejections")?,
            trials: reader.parse("trials")?,
            degenerate_count: reader.parse("degenerate_count")?,
        });
    }
    Ok(rows)
}

pub fn read_summary_csv<R: BufRead>(r: R) -> Result<Vec<SummaryRow>> {
    let mut lines = r.lines();
    let header = match lines.next() {
        Some(Ok(h)) => h,
        _ => return Err(Error::InvalidInput("empty summary CSV".into())),
    };
    let positions = header_positions(&header, SUMMARY_COLUMNS)?;
    let mut rows = Vec::new();
    for (i, line) in lines.enumerate() {
        let line = line.map_err(|e| Error::InvalidInput(format!("read error: {e}")))?;
        if line.trim().is_empty() {
            continue;
        }
        let reader = RowReader {
            positions: &positions,
            fields: line.split(',').map(|s| s.trim().to_string()).collect(),
            lineno: i + 2,
        };
        rows.push(SummaryRow {
            scheme: reader.raw("scheme")?.to_string(),
            test: reader.raw("test")?.to_string(),
            adjustment: reader.raw("adjustment")?.to_string(),
            n: reader.parse("n")?,
            big_n: reader.parse("N")?,
            null: reader.raw("null")?.to_string(),
            alpha: reader.parse("alpha")?,
            l: reader.parse("l")?,
            npops: reader.parse("npops")?,
            mean: reader.parse("mean")?,
            p2_5: reader.parse("p2_5")?,
            p97_5: reader.parse("p97_5")?,
            spread: reader.parse("spread")?,
            within_bounds_proportion: reader.parse("within_bounds_proportion")?,
        });
    }
    Ok(rows)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample_row() -> PopulationRow {
        PopulationRow {
            scheme: "fixed_block:4".into(),
            test: "ancova".into(),
            adjustment: "block_indicators".into(),
            n: 16,
            big_n: 32,
            null: "sharp".into(),
            nrand: 1000,
            nsamp: 10,
            alpha: 0.05,
            population_index: 3,
            type1_error: 0.0512,
            rejections: 512,
            trials: 10_000,
            degenerate_count: 0,
        }
    }

    #[test]
    fn population_rows_round_trip() {
        let mut buf = Vec::new();
        write_populations_header(&mut buf).unwrap();
        write_population_row(&mut buf, &sample_row()).unwrap();
        let rows = read_populations_csv(&buf[..]).unwrap();
        assert_eq!(rows, vec![sample_row()]);
    }

    #[test]
    fn missing_column_is_named() {
        let csv = "scheme,test,n\nsimple,anova,16\n";
        let err = read_populations_csv(csv.as_bytes()).unwrap_err();
        assert!(err.to_string().contains("missing column `adjustment`"), "{err}");
    }

    #[test]
    fn full_precision_round_trip_is_exact() {
        let mut row = sample_row();
        row.type1_error = 0.1 + 0.2; // 0.30000000000000004
        let mut buf = Vec::new();
        write_populations_header(&mut buf).unwrap();
        write_population_row(&mut buf, &row).unwrap();
        let back = read_populations_csv(&buf[..]).unwrap();
        assert_eq!(back[0].type1_error.to_bits(), row.type1_error.to_bits());
    }
}
