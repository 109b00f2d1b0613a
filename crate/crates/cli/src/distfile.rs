//! Plain-text tensor format.
//!
//! ```text
//! # DSBS with crossover 0.25
//! dims: 2 2
//! names: X Y
//! 0.375 0.125
//! 0.125 0.375
//! ```
//!
//! Probabilities follow the headers in row-major order, last index fastest.
//! Lines whose first non-blank character is `#` are ignored.

use std::fmt::Write as _;
use std::path::Path;

use commoninfo::{AlphabetSpec, JointPmf};
use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
#[error("line {line}: {reason}")]
pub struct ParseError {
    pub line: usize,
    pub reason: String,
}

fn fail<T>(line: usize, reason: impl Into<String>) -> Result<T, ParseError> {
    Err(ParseError {
        line,
        reason: reason.into(),
    })
}

pub fn parse(text: &str) -> Result<JointPmf, ParseError> {
    let mut dims: Option<Vec<usize>> = None;
    let mut names: Option<Vec<String>> = None;
    let mut probs = Vec::new();
    let mut last_line = 0;

    for (i, raw) in text.lines().enumerate() {
        let line = i + 1;
        let body = raw.trim();
        if body.is_empty() || body.starts_with('#') {
            continue;
        }
        last_line = line;
        if let Some(rest) = body.strip_prefix("dims:") {
            if dims.is_some() {
                return fail(line, "duplicate dims header");
            }
            if !probs.is_empty() {
                return fail(line, "dims header after probabilities");
            }
            let sizes = rest
                .split_whitespace()
                .map(|t| {
                    t.parse::<usize>()
                        .map_err(|_| format!("bad alphabet size {t:?}"))
                })
                .collect::<Result<Vec<_>, _>>();
            match sizes {
                Ok(s) if s.is_empty() => return fail(line, "dims header lists no sizes"),
                Ok(s) => dims = Some(s),
                Err(e) => return fail(line, e),
            }
        } else if let Some(rest) = body.strip_prefix("names:") {
            if names.is_some() {
                return fail(line, "duplicate names header");
            }
            if dims.is_none() || !probs.is_empty() {
                return fail(line, "names header must directly follow dims");
            }
            names = Some(rest.split_whitespace().map(str::to_owned).collect());
        } else {
            if dims.is_none() {
                return fail(line, "probabilities before dims header");
            }
            for tok in body.split_whitespace() {
                match tok.parse::<f64>() {
                    Ok(v) => probs.push(v),
                    Err(_) => return fail(line, format!("bad probability {tok:?}")),
                }
            }
        }
    }

    let Some(sizes) = dims else {
        return fail(last_line.max(1), "missing dims header");
    };
    let mut spec = AlphabetSpec::new(sizes).or_else(|e| fail(1, e.to_string()))?;
    if let Some(n) = names {
        spec = spec.with_names(n).or_else(|e| fail(1, e.to_string()))?;
    }
    if probs.len() != spec.cells() {
        return fail(
            last_line,
            format!(
                "expected {} probabilities, found {}",
                spec.cells(),
                probs.len()
            ),
        );
    }
    JointPmf::new(spec, probs).or_else(|e| fail(last_line, e.to_string()))
}

pub fn read(path: &Path) -> Result<JointPmf, crate::CliError> {
    let text = std::fs::read_to_string(path).map_err(|e| crate::CliError::io(path, e))?;
    parse(&text).map_err(|e| crate::CliError::Parse {
        path: path.display().to_string(),
        source: e,
    })
}

/// Renders with 17 significant digits, one row per run of the last axis,
/// so that [`parse`] returns the same bits.
pub fn render(pmf: &JointPmf) -> String {
    let mut out = String::from("dims:");
    for s in pmf.sizes() {
        write!(out, " {s}").unwrap();
    }
    out.push('\n');
    if let Some(names) = pmf.spec().names() {
        out.push_str("names:");
        for n in names {
            write!(out, " {n}").unwrap();
        }
        out.push('\n');
    }
    let row = *pmf.sizes().last().expect("at least one axis");
    for chunk in pmf.probs().chunks(row) {
        let cells: Vec<String> = chunk.iter().map(|p| format!("{p:.16e}")).collect();
        out.push_str(&cells.join(" "));
        out.push('\n');
    }
    out
}
