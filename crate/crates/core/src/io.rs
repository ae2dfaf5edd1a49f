//! CSV formats for designs and counts.
//!
//! Designs: `design_id,coord`. Counts: `design_id,outcome_id,count,source`
//! with 1-based `outcome_id` and `source` one of `real` / `sim`. Repeated
//! cells are summed.

use std::path::Path;

use crate::error::{Error, Result};
use crate::posterior::{CountTable, ProblemData};

#[derive(Debug, Clone, PartialEq)]
pub struct Design {
    pub id: String,
    pub coord: f64,
}

fn parse_error(path: &Path, line: u64, msg: impl Into<String>) -> Error {
    Error::Parse {
        path: path.display().to_string(),
        line,
        msg: msg.into(),
    }
}

fn reader(path: &Path, expected: &[&str]) -> Result<csv::Reader<std::fs::File>> {
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_path(path)?;
    let header: Vec<String> = rdr.headers()?.iter().map(|h| h.to_ascii_lowercase()).collect();
    if header != expected {
        return Err(parse_error(
            path,
            1,
            format!("expected header `{}`, found `{}`", expected.join(","), header.join(",")),
        ));
    }
    Ok(rdr)
}

pub fn read_designs(path: &Path) -> Result<Vec<Design>> {
    let mut rdr = reader(path, &["design_id", "coord"])?;
    let mut out: Vec<Design> = Vec::new();
    for rec in rdr.records() {
        let rec = rec?;
        let line = rec.position().map_or(0, |p| p.line());
        let id = rec[0].to_string();
        let coord: f64 = rec[1]
            .parse()
            .map_err(|_| parse_error(path, line, format!("column coord: `{}` is not a number", &rec[1])))?;
        if !coord.is_finite() {
            return Err(parse_error(path, line, "column coord: must be finite"));
        }
        if out.iter().any(|d| d.id == id) {
            return Err(parse_error(path, line, format!("column design_id: duplicate `{id}`")));
        }
        out.push(Design { id, coord });
    }
    if out.is_empty() {
        return Err(parse_error(path, 1, "no designs"));
    }
    Ok(out)
}

/// Real and simulated counts from one or more files, over the given designs.
///
/// The outcome count is `m` when given, otherwise the largest `outcome_id`.
pub fn read_counts(paths: &[&Path], designs: &[Design], m: Option<usize>) -> Result<(CountTable, CountTable)> {
    struct Row {
        design: usize,
        outcome: usize,
        count: u64,
        real: bool,
    }
    let mut rows = Vec::new();
    for path in paths {
        let mut rdr = reader(path, &["design_id", "outcome_id", "count", "source"])?;
        for rec in rdr.records() {
            let rec = rec?;
            let line = rec.position().map_or(0, |p| p.line());
            let design = designs
                .iter()
                .position(|d| d.id == rec[0])
                .ok_or_else(|| parse_error(path, line, format!("column design_id: unknown design `{}`", &rec[0])))?;
            let outcome: usize = rec[1]
                .parse()
                .ok()
                .filter(|o| *o >= 1)
                .ok_or_else(|| parse_error(path, line, format!("column outcome_id: `{}` is not a positive integer", &rec[1])))?;
            if let Some(m) = m {
                if outcome > m {
                    return Err(parse_error(path, line, format!("column outcome_id: {outcome} exceeds {m} outcomes")));
                }
            }
            let count: u64 = rec[2]
                .parse()
                .map_err(|_| parse_error(path, line, format!("column count: `{}` is not a nonnegative integer", &rec[2])))?;
            let real = match rec[3].to_ascii_lowercase().as_str() {
                "real" => true,
                "sim" => false,
                other => return Err(parse_error(path, line, format!("column source: `{other}` is not real or sim"))),
            };
            rows.push(Row {
                design,
                outcome: outcome - 1,
                count,
                real,
            });
        }
    }
    let m = m.unwrap_or_else(|| rows.iter().map(|r| r.outcome + 1).max().unwrap_or(0));
    if m < 2 {
        return Err(Error::InvalidData("counts describe fewer than two outcomes".into()));
    }
    let s = designs.len();
    let mut real = CountTable::zeros(s, m);
    let mut sim = CountTable::zeros(s, m);
    for r in rows {
        let table = if r.real { &mut real } else { &mut sim };
        table.add(r.design, r.outcome, r.count);
    }
    Ok((real, sim))
}

pub fn load_problem(designs_path: &Path, counts_paths: &[&Path], m: Option<usize>) -> Result<(Vec<Design>, ProblemData)> {
    let designs = read_designs(designs_path)?;
    let (real, sim) = read_counts(counts_paths, &designs, m)?;
    let data = ProblemData::new(designs.iter().map(|d| d.coord).collect(), real, sim)?;
    Ok((designs, data))
}

pub fn write_designs(path: &Path, designs: &[Design]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(["design_id", "coord"])?;
    for d in designs {
        w.write_record([d.id.clone(), format!("{}", d.coord)])?;
    }
    w.flush()?;
    Ok(())
}

/// Every cell of each supplied table, zeros included, so the outcome count survives a round trip.
pub fn write_counts(path: &Path, designs: &[Design], real: Option<&CountTable>, sim: Option<&CountTable>) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(["design_id", "outcome_id", "count", "source"])?;
    for (source, table) in [("real", real), ("sim", sim)] {
        let Some(t) = table else { continue };
        if t.rows() != designs.len() {
            return Err(Error::InvalidData("count table rows must match the designs".into()));
        }
        for (j, d) in designs.iter().enumerate() {
            for i in 0..t.cols() {
                w.write_record([d.id.clone(), (i + 1).to_string(), t.get(j, i).to_string(), source.to_string()])?;
            }
        }
    }
    w.flush()?;
    Ok(())
}
