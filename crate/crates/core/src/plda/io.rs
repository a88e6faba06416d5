//! PLDA model text format: `#plda v1 dim=<D>` followed by `mu`, `B` and `W`
//! sections, each a label line and comma-separated row-major values.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use nalgebra::{DMatrix, DVector};

use super::model::PldaModel;
use crate::error::{Error, Result};
use crate::synthdata::{fmt_f64, parse_header};

fn write_row(out: &mut String, values: impl Iterator<Item = f64>) {
    let row: Vec<String> = values.map(fmt_f64).collect();
    let _ = writeln!(out, "{}", row.join(","));
}

pub fn plda_to_string(model: &PldaModel) -> String {
    let d = model.dim();
    let mut out = format!("#plda v1 dim={d}\nmu\n");
    write_row(&mut out, model.mu.iter().copied());
    for (label, m) in [("B", &model.between), ("W", &model.within)] {
        out.push_str(label);
        out.push('\n');
        for i in 0..d {
            write_row(&mut out, m.row(i).iter().copied());
        }
    }
    out
}

pub fn save_plda(model: &PldaModel, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    fs::write(path, plda_to_string(model)).map_err(|e| Error::io(path, e))
}

pub fn load_plda(path: impl AsRef<Path>) -> Result<PldaModel> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_plda(&text, path)
}

pub fn parse_plda(text: &str, path: &Path) -> Result<PldaModel> {
    let lines: Vec<&str> = text.lines().collect();
    let header = lines.first().copied().unwrap_or("");
    let d = parse_header(header, "#plda v1", "dim")
        .filter(|&d| d > 0)
        .ok_or_else(|| Error::parse(path, 1, format!("malformed header `{header}`")))?;
    let mut cursor = 1;
    let mut section = |label: &str, rows: usize| -> Result<Vec<f64>> {
        if lines.get(cursor).map(|l| l.trim()) != Some(label) {
            return Err(Error::parse(path, cursor + 1, format!("expected section `{label}`")));
        }
        cursor += 1;
        let mut values = Vec::with_capacity(rows * d);
        for _ in 0..rows {
            let line = lines
                .get(cursor)
                .ok_or_else(|| Error::parse(path, cursor + 1, format!("truncated section `{label}`")))?;
            let row: Vec<f64> = line
                .split(',')
                .map(|f| f.trim().parse::<f64>())
                .collect::<std::result::Result<_, _>>()
                .map_err(|_| Error::parse(path, cursor + 1, "non-numeric field"))?;
            if row.len() != d {
                return Err(Error::parse(path, cursor + 1, format!("expected {d} values, got {}", row.len())));
            }
            values.extend(row);
            cursor += 1;
        }
        Ok(values)
    };
    let mu = section("mu", 1)?;
    let b = section("B", d)?;
    let w = section("W", d)?;
    PldaModel::new(
        DVector::from_vec(mu),
        DMatrix::from_row_slice(d, d, &b),
        DMatrix::from_row_slice(d, d, &w),
    )
    .map_err(|e| Error::parse(path, 0, e.to_string()))
}
