//! CSV tables with a versioned header.
//!
//! Layout: a `# qtraj <kind> v1` line, optional `# ...` comment lines, a
//! header row starting with `t`, then one row per grid point. Floats are
//! written with 17 significant digits.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use crate::error::{Error, Result};

pub const FORMAT_VERSION: u32 = 1;

#[derive(Clone, Debug, PartialEq)]
pub struct Table {
    pub kind: String,
    pub comments: Vec<String>,
    pub columns: Vec<String>,
    pub rows: Vec<Vec<f64>>,
}

impl Table {
    pub fn new(kind: impl Into<String>, columns: Vec<String>) -> Self {
        Table {
            kind: kind.into(),
            comments: Vec::new(),
            columns,
            rows: Vec::new(),
        }
    }

    pub fn comment(&mut self, line: impl Into<String>) {
        self.comments.push(line.into());
    }

    pub fn push(&mut self, row: Vec<f64>) {
        assert_eq!(row.len(), self.columns.len(), "row width does not match the header");
        self.rows.push(row);
    }

    pub fn column(&self, name: &str) -> Option<Vec<f64>> {
        let i = self.columns.iter().position(|c| c == name)?;
        Some(self.rows.iter().map(|r| r[i]).collect())
    }

    pub fn to_csv(&self) -> String {
        let mut out = format!("# qtraj {} v{FORMAT_VERSION}\n", self.kind);
        for c in &self.comments {
            out.push_str("# ");
            out.push_str(c);
            out.push('\n');
        }
        out.push_str(&self.columns.join(","));
        out.push('\n');
        for row in &self.rows {
            for (i, x) in row.iter().enumerate() {
                if i > 0 {
                    out.push(',');
                }
                write!(out, "{x:.16e}").expect("writing to a string");
            }
            out.push('\n');
        }
        out
    }

    /// Writes the table, creating parent directories.
    pub fn save(&self, path: &Path) -> Result<()> {
        if let Some(dir) = path.parent() {
            fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        }
        fs::write(path, self.to_csv()).map_err(|e| Error::io(path, e))
    }

    pub fn parse(text: &str) -> Result<Table> {
        let bad = |msg: String| Error::invalid("csv", msg);
        let mut lines = text.lines();
        let first = lines.next().ok_or_else(|| bad("empty file".into()))?;
        let kind = first
            .strip_prefix("# qtraj ")
            .and_then(|rest| rest.strip_suffix(&format!(" v{FORMAT_VERSION}")))
            .ok_or_else(|| bad(format!("unrecognized header line {first:?}")))?;
        let mut table = Table::new(kind, Vec::new());
        for line in lines {
            if let Some(c) = line.strip_prefix("# ") {
                table.comments.push(c.to_string());
            } else if table.columns.is_empty() {
                table.columns = line.split(',').map(str::to_string).collect();
            } else {
                let row = line
                    .split(',')
                    .map(|x| x.parse::<f64>().map_err(|e| bad(format!("{x:?}: {e}"))))
                    .collect::<Result<Vec<_>>>()?;
                if row.len() != table.columns.len() {
                    return Err(bad(format!(
                        "row has {} fields, header has {}",
                        row.len(),
                        table.columns.len()
                    )));
                }
                table.rows.push(row);
            }
        }
        Ok(table)
    }

    pub fn load(path: &Path) -> Result<Table> {
        Table::parse(&fs::read_to_string(path).map_err(|e| Error::io(path, e))?)
    }
}
