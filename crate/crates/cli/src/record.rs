use std::fmt::Write as _;
use std::time::{SystemTime, UNIX_EPOCH};

use serde::Serialize;
use serde_json::Value;

pub const VERSION: &str = env!("CARGO_PKG_VERSION");

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Timestamps {
    pub started_unix_s: f64,
    pub finished_unix_s: f64,
}

impl Timestamps {
    pub fn now() -> f64 {
        SystemTime::now()
            .duration_since(UNIX_EPOCH)
            .map_or(0.0, |d| d.as_secs_f64())
    }
}

/// Everything needed to rerun a command and compare its result.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RunRecord {
    pub command: String,
    pub config: Value,
    pub seed: u64,
    pub version: String,
    pub result: Value,
    /// Present only with `--timing`, so default records rerun byte for byte.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub timestamps: Option<Timestamps>,
}

impl RunRecord {
    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("records serialize");
        s.push('\n');
        s
    }
}

pub struct Output {
    pub record: RunRecord,
    pub table: String,
}

/// Left-aligned text table.
#[derive(Default)]
pub struct Table {
    title: Option<String>,
    header: Vec<String>,
    rows: Vec<Vec<String>>,
}

impl Table {
    pub fn new(header: &[&str]) -> Self {
        Self {
            title: None,
            header: header.iter().map(|s| s.to_string()).collect(),
            rows: Vec::new(),
        }
    }

    pub fn titled(mut self, title: &str) -> Self {
        self.title = Some(title.to_owned());
        self
    }

    pub fn row(&mut self, cells: Vec<String>) {
        self.rows.push(cells);
    }

    pub fn render(&self) -> String {
        let cols = self.header.len();
        let mut width = vec![0; cols];
        for r in std::iter::once(&self.header).chain(&self.rows) {
            for (w, c) in width.iter_mut().zip(r) {
                *w = (*w).max(c.chars().count());
            }
        }
        let mut out = String::new();
        if let Some(t) = &self.title {
            writeln!(out, "{t}").unwrap();
        }
        let line = |out: &mut String, r: &[String]| {
            let cells: Vec<String> = r
                .iter()
                .zip(&width)
                .map(|(c, &w)| format!("{c:<w$}"))
                .collect();
            writeln!(out, "{}", cells.join("  ").trim_end()).unwrap();
        };
        line(&mut out, &self.header);
        line(
            &mut out,
            &width.iter().map(|&w| "-".repeat(w)).collect::<Vec<_>>(),
        );
        for r in &self.rows {
            line(&mut out, r);
        }
        out
    }
}

/// Two-column key/value table.
pub fn summary(title: &str, pairs: &[(&str, String)]) -> String {
    let mut t = Table::new(&["quantity", "value"]).titled(title);
    for (k, v) in pairs {
        t.row(vec![k.to_string(), v.clone()]);
    }
    t.render()
}

/// Fixed-precision bits for tables; records keep full precision.
pub fn bits(v: f64) -> String {
    if v.is_finite() {
        format!("{v:.6}")
    } else {
        format!("{v}")
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn columns_line_up() {
        let mut t = Table::new(&["a", "long name"]);
        t.row(vec!["12345".into(), "x".into()]);
        let text = t.render();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines[0], "a      long name");
        assert_eq!(lines[1], "-----  ---------");
        assert_eq!(lines[2], "12345  x");
    }

    #[test]
    fn timestamps_are_omitted_by_default() {
        let r = RunRecord {
            command: "measures".into(),
            config: Value::Null,
            seed: 3,
            version: VERSION.into(),
            result: Value::Null,
            timestamps: None,
        };
        assert!(!r.to_json().contains("timestamps"));
    }
}
