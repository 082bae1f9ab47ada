//! JSON form of a [`CubatureFormula`].
//!
//! ```text
//! { "meta": {..}, "weights": [..], "paths": [[[t, v_1, .., v_d], ..], ..] }
//! ```
//! Weights and knots are written with 17 significant digits, so reading a
//! file back reproduces every double exactly.

use std::io::{Read, Write};

use serde::{Deserialize, Serialize};

use super::{CubatureFormula, TOOL_VERSION};
use crate::error::{Error, Result};
use crate::path::PiecewiseLinearPath;

#[derive(Serialize, Deserialize)]
struct Meta {
    d: usize,
    #[serde(rename = "D")]
    degree: usize,
    #[serde(rename = "N")]
    steps: usize,
    dyadic_depth: usize,
    seed: u64,
    tool_version: String,
    verified: bool,
    max_residual: f64,
    #[serde(default)]
    symmetrised: bool,
    #[serde(default)]
    fine_degree: Option<usize>,
    #[serde(default)]
    provenance: Vec<String>,
}

#[derive(Deserialize)]
struct Document {
    meta: Meta,
    weights: Vec<f64>,
    paths: Vec<Vec<Vec<f64>>>,
}

fn number(out: &mut String, x: f64) {
    use std::fmt::Write as _;
    if x == 0.0 {
        out.push_str(if x.is_sign_negative() { "-0.0" } else { "0.0" });
    } else {
        write!(out, "{x:.16e}").unwrap();
    }
}

pub fn to_json_string(c: &CubatureFormula) -> Result<String> {
    if c.weights.iter().chain(c.paths.iter().flat_map(|p| p.values())).any(|v| !v.is_finite()) {
        return Err(Error::InvalidArgument("cannot serialise non-finite values".into()));
    }
    let meta = Meta {
        d: c.dim,
        degree: c.degree,
        steps: c.steps,
        dyadic_depth: c.dyadic_depth,
        seed: c.seed,
        tool_version: TOOL_VERSION.to_string(),
        verified: c.verified,
        max_residual: if c.max_residual.is_finite() { c.max_residual } else { -1.0 },
        symmetrised: c.symmetrised,
        fine_degree: c.fine_degree,
        provenance: c.provenance.clone(),
    };
    let mut out = String::from("{\n\"meta\": ");
    out.push_str(&serde_json::to_string(&meta)?);
    out.push_str(",\n\"weights\": [");
    for (i, &w) in c.weights.iter().enumerate() {
        if i > 0 {
            out.push_str(", ");
        }
        number(&mut out, w);
    }
    out.push_str("],\n\"paths\": [");
    for (i, p) in c.paths.iter().enumerate() {
        out.push_str(if i > 0 { ",\n  [" } else { "\n  [" });
        for k in 0..p.num_knots() {
            if k > 0 {
                out.push_str(", ");
            }
            out.push('[');
            number(&mut out, p.times()[k]);
            for &v in p.value(k) {
                out.push_str(", ");
                number(&mut out, v);
            }
            out.push(']');
        }
        out.push(']');
    }
    out.push_str("\n]\n}\n");
    Ok(out)
}

pub fn write_json<W: Write>(c: &CubatureFormula, mut out: W) -> Result<()> {
    out.write_all(to_json_string(c)?.as_bytes())?;
    Ok(())
}

pub fn from_json_str(s: &str) -> Result<CubatureFormula> {
    let doc: Document = serde_json::from_str(s)?;
    let m = doc.meta;
    if doc.weights.len() != doc.paths.len() {
        return Err(Error::InvalidArgument(format!(
            "{} weights for {} paths",
            doc.weights.len(),
            doc.paths.len()
        )));
    }
    let paths = doc
        .paths
        .into_iter()
        .map(|knots| {
            let mut times = Vec::with_capacity(knots.len());
            let mut values = Vec::with_capacity(knots.len() * m.d);
            for k in knots {
                if k.len() != m.d + 1 {
                    return Err(Error::InvalidPath(format!("knot with {} entries, expected {}", k.len(), m.d + 1)));
                }
                times.push(k[0]);
                values.extend_from_slice(&k[1..]);
            }
            PiecewiseLinearPath::new(m.d, times, values)
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(CubatureFormula {
        dim: m.d,
        degree: m.degree,
        steps: m.steps,
        dyadic_depth: m.dyadic_depth,
        fine_degree: m.fine_degree,
        seed: m.seed,
        symmetrised: m.symmetrised,
        paths,
        weights: doc.weights,
        verified: m.verified,
        max_residual: if m.max_residual < 0.0 { f64::INFINITY } else { m.max_residual },
        provenance: m.provenance,
    })
}

pub fn read_json<R: Read>(mut input: R) -> Result<CubatureFormula> {
    let mut s = String::new();
    input.read_to_string(&mut s)?;
    from_json_str(&s)
}
