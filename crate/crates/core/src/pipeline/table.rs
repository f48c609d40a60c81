use std::path::Path;

use super::PipelineError;

/// A comma-separated table with a header row; `#` lines are skipped.
#[derive(Debug, Clone, PartialEq)]
pub struct Table {
    pub header: Vec<String>,
    pub rows: Vec<Vec<String>>,
}

impl Table {
    pub fn parse(text: &str) -> Result<Self, PipelineError> {
        let mut lines = text.lines().filter(|l| !l.starts_with('#') && !l.trim().is_empty());
        let header: Vec<String> = lines
            .next()
            .ok_or_else(|| PipelineError::Stage("table has no header".into()))?
            .split(',')
            .map(|s| s.trim().to_string())
            .collect();
        let mut rows = Vec::new();
        for (n, line) in lines.enumerate() {
            let row: Vec<String> = line.split(',').map(|s| s.trim().to_string()).collect();
            if row.len() != header.len() {
                return Err(PipelineError::Stage(format!(
                    "row {} has {} fields, expected {}",
                    n + 1,
                    row.len(),
                    header.len()
                )));
            }
            rows.push(row);
        }
        Ok(Self { header, rows })
    }

    pub fn column_index(&self, name: &str) -> Result<usize, PipelineError> {
        self.header
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| PipelineError::Stage(format!("missing column `{name}`")))
    }

    /// Numeric values of the named column.
    pub fn column(&self, name: &str) -> Result<Vec<f64>, PipelineError> {
        let c = self.column_index(name)?;
        self.rows.iter().map(|r| parse_f64(&r[c])).collect()
    }

    /// Numeric values of columns `range` of every row.
    pub fn block(&self, range: std::ops::Range<usize>) -> Result<Vec<Vec<f64>>, PipelineError> {
        self.rows
            .iter()
            .map(|r| r[range.clone()].iter().map(|v| parse_f64(v)).collect())
            .collect()
    }
}

fn parse_f64(s: &str) -> Result<f64, PipelineError> {
    s.parse()
        .map_err(|_| PipelineError::Stage(format!("not a number: `{s}`")))
}

pub fn read_table(path: &Path) -> Result<Table, PipelineError> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| PipelineError::Stage(format!("cannot read {}: {e}", path.display())))?;
    Table::parse(&text)
}
