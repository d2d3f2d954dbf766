//! Plain-text serialization of polytopes, zonotopes and matrices.
//!
//! ```text
//! hpolytope X dim=2 rows=4
//! 5 : 1 0
//! 5 : -1 0
//! ...
//! end
//! ```
//!
//! Each row reads `h_i : H_i1 ... H_in`.

use std::fmt::Write as _;

use thiserror::Error;

use super::{HPolytope, Zonotope};
use crate::mat::Mat;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ParseError {
    #[error("line {line}: {msg}")]
    Syntax { line: usize, msg: String },
    #[error("no hpolytope block named {0}")]
    Missing(String),
}

fn fmt_num(v: f64) -> String {
    // `{:?}` round-trips exactly
    format!("{v:?}")
}

pub fn write_hpolytope(out: &mut String, name: &str, p: &HPolytope) {
    let _ = writeln!(out, "hpolytope {name} dim={} rows={}", p.dim(), p.n_rows());
    for (n, h) in p.rows() {
        let coeffs: Vec<String> = n.iter().map(|v| fmt_num(*v)).collect();
        let _ = writeln!(out, "{} : {}", fmt_num(h), coeffs.join(" "));
    }
    out.push_str("end\n");
}

pub fn write_zonotope(out: &mut String, name: &str, z: &Zonotope) {
    let _ = writeln!(out, "zonotope {name} dim={} generators={}", z.dim(), z.generators.len());
    let c: Vec<String> = z.center.iter().map(|v| fmt_num(*v)).collect();
    let _ = writeln!(out, "center : {}", c.join(" "));
    for g in &z.generators {
        let g: Vec<String> = g.iter().map(|v| fmt_num(*v)).collect();
        let _ = writeln!(out, "g : {}", g.join(" "));
    }
    out.push_str("end\n");
}

pub fn write_matrix(out: &mut String, name: &str, m: &Mat) {
    let _ = writeln!(out, "matrix {name} rows={} cols={}", m.rows(), m.cols());
    for i in 0..m.rows() {
        let r: Vec<String> = m.row(i).iter().map(|v| fmt_num(*v)).collect();
        let _ = writeln!(out, "{}", r.join(" "));
    }
    out.push_str("end\n");
}

fn header_field(tokens: &[&str], key: &str, line: usize) -> Result<usize, ParseError> {
    tokens
        .iter()
        .find_map(|t| t.strip_prefix(key).and_then(|v| v.strip_prefix('=')))
        .ok_or_else(|| ParseError::Syntax { line, msg: format!("missing {key}=") })?
        .parse()
        .map_err(|_| ParseError::Syntax { line, msg: format!("bad {key}=") })
}

fn parse_nums(s: &str, line: usize) -> Result<Vec<f64>, ParseError> {
    s.split_whitespace()
        .map(|t| t.parse::<f64>().map_err(|_| ParseError::Syntax { line, msg: format!("not a number: {t}") }))
        .collect()
}

/// Reads the `hpolytope` block called `name`.
pub fn parse_hpolytope(text: &str, name: &str) -> Result<HPolytope, ParseError> {
    let mut lines = text.lines().enumerate().map(|(i, l)| (i + 1, l.trim()));
    while let Some((ln, l)) = lines.next() {
        let tokens: Vec<&str> = l.split_whitespace().collect();
        if tokens.len() < 2 || tokens[0] != "hpolytope" || tokens[1] != name {
            continue;
        }
        let dim = header_field(&tokens, "dim", ln)?;
        let rows = header_field(&tokens, "rows", ln)?;
        let mut normals = Vec::with_capacity(rows);
        let mut offsets = Vec::with_capacity(rows);
        for (ln, l) in lines.by_ref() {
            if l == "end" {
                if normals.len() != rows {
                    return Err(ParseError::Syntax { line: ln, msg: format!("expected {rows} rows, got {}", normals.len()) });
                }
                if rows == 0 {
                    return Ok(HPolytope::from_rows_lenient(dim, Vec::new()));
                }
                return HPolytope::from_rows(&normals, &offsets)
                    .map_err(|e| ParseError::Syntax { line: ln, msg: e.to_string() });
            }
            let (h, n) = l.split_once(':').ok_or_else(|| ParseError::Syntax { line: ln, msg: "expected `h : H`".into() })?;
            let h = parse_nums(h, ln)?;
            let n = parse_nums(n, ln)?;
            if h.len() != 1 || n.len() != dim {
                return Err(ParseError::Syntax { line: ln, msg: format!("row needs 1 offset and {dim} coefficients") });
            }
            offsets.push(h[0]);
            normals.push(n);
        }
        return Err(ParseError::Syntax { line: ln, msg: "unterminated block".into() });
    }
    Err(ParseError::Missing(name.to_string()))
}
