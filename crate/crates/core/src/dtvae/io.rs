//! Model text format:
//!
//! ```text
//! #dtvae v1 D=<d> H=<h> L=<l> M=<m> tau=<tau> beta=<beta>
//! activation <relu|tanh>
//! std_mean 1 <d>
//! <row>
//! std_scale 1 <d>
//! <row>
//! <tensor name> <rows> <cols>
//! <rows lines of comma-separated values>
//! ...
//! ```

use std::fs;
use std::path::Path;

use super::config::Activation;
use super::net::{Dims, DtvaeParams, PARAM_NAMES};
use crate::error::{Error, Result};
use crate::ndgrad::{Param, Tensor};
use crate::synthdata::fmt_f64;

fn write_block(out: &mut String, name: &str, rows: usize, cols: usize, data: &[f64]) {
    out.push_str(&format!("{name} {rows} {cols}\n"));
    for r in data.chunks(cols) {
        let row: Vec<String> = r.iter().copied().map(fmt_f64).collect();
        out.push_str(&row.join(","));
        out.push('\n');
    }
}

pub fn dtvae_to_string(p: &DtvaeParams) -> String {
    let Dims { d, h, l, m } = p.dims;
    let mut out = format!(
        "#dtvae v1 D={d} H={h} L={l} M={m} tau={} beta={}\nactivation {}\n",
        p.tau, p.beta, p.activation
    );
    write_block(&mut out, "std_mean", 1, d, p.std_mean());
    write_block(&mut out, "std_scale", 1, d, p.std_scale());
    for (t, (r, c)) in p.tensors().iter().zip(p.dims.shapes()) {
        write_block(&mut out, &t.name, r, c, t.value.data());
    }
    out
}

pub fn save_dtvae(p: &DtvaeParams, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    fs::write(path, dtvae_to_string(p)).map_err(|e| Error::io(path, e))
}

pub fn load_dtvae(path: impl AsRef<Path>) -> Result<DtvaeParams> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_dtvae(&text, path)
}

struct Header {
    dims: Dims,
    tau: f64,
    beta: f64,
}

fn parse_header_line(line: &str) -> Option<Header> {
    let rest = line.strip_prefix("#dtvae v1 ")?;
    let mut fields = [None::<&str>; 6];
    let keys = ["D", "H", "L", "M", "tau", "beta"];
    for tok in rest.split_whitespace() {
        let (k, v) = tok.split_once('=')?;
        let slot = keys.iter().position(|&key| key == k)?;
        fields[slot] = Some(v);
    }
    let int = |i: usize| fields[i]?.parse::<usize>().ok().filter(|&v| v > 0);
    Some(Header {
        dims: Dims {
            d: int(0)?,
            h: int(1)?,
            l: int(2)?,
            m: int(3)?,
        },
        tau: fields[4]?.parse().ok()?,
        beta: fields[5]?.parse().ok()?,
    })
}

pub fn parse_dtvae(text: &str, path: &Path) -> Result<DtvaeParams> {
    let lines: Vec<&str> = text.lines().collect();
    let header_line = lines.first().copied().unwrap_or("");
    let header =
        parse_header_line(header_line).ok_or_else(|| Error::parse(path, 1, format!("malformed header `{header_line}`")))?;
    let activation: Activation = lines
        .get(1)
        .and_then(|l| l.strip_prefix("activation "))
        .ok_or_else(|| Error::parse(path, 2, "expected `activation <relu|tanh>`"))?
        .trim()
        .parse()
        .map_err(|e: Error| Error::parse(path, 2, e.to_string()))?;

    let mut cursor = 2;
    let mut block = |name: &str, rows: usize, cols: usize| -> Result<Vec<f64>> {
        let line_no = cursor + 1;
        let head = lines
            .get(cursor)
            .ok_or_else(|| Error::parse(path, line_no, format!("missing block `{name}`")))?;
        let expect = format!("{name} {rows} {cols}");
        if head.trim() != expect {
            return Err(Error::parse(path, line_no, format!("expected `{expect}`, found `{head}`")));
        }
        cursor += 1;
        let mut data = Vec::with_capacity(rows * cols);
        for _ in 0..rows {
            let line_no = cursor + 1;
            let line = lines
                .get(cursor)
                .ok_or_else(|| Error::parse(path, line_no, format!("truncated block `{name}`")))?;
            let before = data.len();
            for f in line.split(',') {
                let v: f64 = f
                    .trim()
                    .parse()
                    .map_err(|_| Error::parse(path, line_no, format!("non-numeric value `{f}`")))?;
                data.push(v);
            }
            if data.len() - before != cols {
                return Err(Error::parse(path, line_no, format!("expected {cols} values in `{name}`")));
            }
            cursor += 1;
        }
        Ok(data)
    };

    let dims = header.dims;
    let std_mean = block("std_mean", 1, dims.d)?;
    let std_scale = block("std_scale", 1, dims.d)?;
    let mut tensors = Vec::with_capacity(PARAM_NAMES.len());
    for (i, (name, (r, c))) in PARAM_NAMES.iter().zip(dims.shapes()).enumerate() {
        let data = block(name, r, c)?;
        let shape = if i % 2 == 1 { vec![c] } else { vec![r, c] };
        let t = Tensor::new(shape, data).map_err(|e| Error::parse(path, 0, format!("{name}: {e}")))?;
        tensors.push(Param::new(*name, t));
    }
    DtvaeParams::from_parts(dims, activation, header.tau, header.beta, tensors, std_mean, std_scale)
        .map_err(|e| Error::parse(path, 0, e.to_string()))
}
