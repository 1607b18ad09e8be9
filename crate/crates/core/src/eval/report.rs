//! Tabular result emission: CSV for machines, aligned text for terminals.

use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum ReportError {
    #[error("row {row} has {got} cells, header has {expected}")]
    RaggedRow { row: usize, expected: usize, got: usize },
    #[error("malformed csv at line {line}: {msg}")]
    Csv { line: usize, msg: String },
    #[error("empty input")]
    Empty,
}

/// One result table: a header row plus data rows, all cells rendered.
#[derive(Debug, Clone, PartialEq)]
pub struct Table {
    pub title: String,
    pub columns: Vec<String>,
    pub rows: Vec<Vec<String>>,
}

impl Table {
    pub fn new(title: impl Into<String>, columns: Vec<String>) -> Self {
        Table { title: title.into(), columns, rows: Vec::new() }
    }

    pub fn push_row(&mut self, row: Vec<String>) -> Result<(), ReportError> {
        if row.len() != self.columns.len() {
            return Err(ReportError::RaggedRow {
                row: self.rows.len(),
                expected: self.columns.len(),
                got: row.len(),
            });
        }
        self.rows.push(row);
        Ok(())
    }

    /// CSV with minimal quoting; the title is not part of the CSV payload.
    pub fn to_csv(&self) -> String {
        let mut out = String::new();
        emit_csv_row(&mut out, &self.columns);
        for row in &self.rows {
            emit_csv_row(&mut out, row);
        }
        out
    }

    pub fn from_csv(input: &str) -> Result<Table, ReportError> {
        let records = parse_csv(input)?;
        let mut it = records.into_iter();
        let columns = it.next().ok_or(ReportError::Empty)?;
        let mut table = Table::new("", columns);
        for row in it {
            table.push_row(row)?;
        }
        Ok(table)
    }

    /// Space-aligned rendering with the title and a header underline.
    pub fn to_text(&self) -> String {
        let mut widths: Vec<usize> = self.columns.iter().map(|c| c.chars().count()).collect();
        for row in &self.rows {
            for (w, cell) in widths.iter_mut().zip(row) {
                *w = (*w).max(cell.chars().count());
            }
        }
        let mut out = String::new();
        if !self.title.is_empty() {
            out.push_str(&self.title);
            out.push('\n');
        }
        let fmt_row = |cells: &[String]| -> String {
            cells
                .iter()
                .zip(&widths)
                .map(|(c, w)| format!("{c:<w$}"))
                .collect::<Vec<_>>()
                .join("  ")
                .trim_end()
                .to_string()
        };
        out.push_str(&fmt_row(&self.columns));
        out.push('\n');
        out.push_str(&widths.iter().map(|w| "-".repeat(*w)).collect::<Vec<_>>().join("  "));
        out.push('\n');
        for row in &self.rows {
            out.push_str(&fmt_row(row));
            out.push('\n');
        }
        out
    }
}

fn emit_csv_row(out: &mut String, cells: &[String]) {
    for (i, cell) in cells.iter().enumerate() {
        if i > 0 {
            out.push(',');
        }
        if cell.contains(',') || cell.contains('"') || cell.contains('\n') {
            out.push('"');
            out.push_str(&cell.replace('"', "\"\""));
            out.push('"');
        } else {
            out.push_str(cell);
        }
    }
    out.push('\n');
}

fn parse_csv(input: &str) -> Result<Vec<Vec<String>>, ReportError> {
    let mut records = Vec::new();
    let mut row = Vec::new();
    let mut cell = String::new();
    let mut in_quotes = false;
    let mut line = 1usize;
    let mut chars = input.chars().peekable();
    while let Some(c) = chars.next() {
        if in_quotes {
            match c {
                '"' => {
                    if chars.peek() == Some(&'"') {
                        chars.next();
                        cell.push('"');
                    } else {
                        in_quotes = false;
                    }
                }
                '\n' => {
                    line += 1;
                    cell.push('\n');
                }
                _ => cell.push(c),
            }
        } else {
            match c {
                '"' if cell.is_empty() => in_quotes = true,
                '"' => {
                    return Err(ReportError::Csv { line, msg: "quote inside unquoted cell".into() })
                }
                ',' => row.push(std::mem::take(&mut cell)),
                '\n' => {
                    line += 1;
                    row.push(std::mem::take(&mut cell));
                    records.push(std::mem::take(&mut row));
                }
                _ => cell.push(c),
            }
        }
    }
    if in_quotes {
        return Err(ReportError::Csv { line, msg: "unterminated quote".into() });
    }
    if !cell.is_empty() || !row.is_empty() {
        row.push(cell);
        records.push(row);
    }
    Ok(records)
}

/// The reciprocal FAR rendering used for theoretical-floor rows.
pub fn far_fraction_label(denominator: u64) -> String {
    format!("1/{denominator}")
}

/// Renders `mean ± σ` as percentages with two decimals.
pub fn mean_sigma_label(mean: f64, sigma: f64) -> String {
    format!("{:.2}% ± {:.2}%", mean * 100.0, sigma * 100.0)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample() -> Table {
        let mut t = Table::new(
            "verification summary",
            vec!["split".into(), "FAR_val(@TAR=90%)".into(), "FAR_theor".into()],
        );
        t.push_row(vec!["60".into(), "0.0123".into(), "1/10620".into()]).unwrap();
        t.push_row(vec!["85".into(), "0.0077".into(), "1/21420".into()]).unwrap();
        t
    }

    #[test]
    fn csv_round_trips_losslessly() {
        let t = sample();
        let csv = t.to_csv();
        let back = Table::from_csv(&csv).unwrap();
        assert_eq!(back.columns, t.columns);
        assert_eq!(back.rows, t.rows);
        assert_eq!(back.to_csv(), csv);
    }

    #[test]
    fn csv_quotes_awkward_cells() {
        let mut t = Table::new("", vec!["a".into(), "b".into()]);
        t.push_row(vec!["x,y".into(), "say \"hi\"\nthere".into()]).unwrap();
        let csv = t.to_csv();
        let back = Table::from_csv(&csv).unwrap();
        assert_eq!(back.rows[0][0], "x,y");
        assert_eq!(back.rows[0][1], "say \"hi\"\nthere");
        assert_eq!(back.to_csv(), csv);
    }

    #[test]
    fn text_alignment_pads_columns() {
        let text = sample().to_text();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines[0], "verification summary");
        assert!(lines[1].starts_with("split  FAR_val(@TAR=90%)"));
        assert!(lines[2].starts_with("-----  -----------------"));
        assert!(lines[3].starts_with("60     0.0123"));
    }

    #[test]
    fn ragged_rows_are_rejected() {
        let mut t = Table::new("", vec!["a".into()]);
        assert_eq!(
            t.push_row(vec!["1".into(), "2".into()]).unwrap_err(),
            ReportError::RaggedRow { row: 0, expected: 1, got: 2 }
        );
    }

    #[test]
    fn labels_render_paper_style() {
        assert_eq!(far_fraction_label(10620), "1/10620");
        assert_eq!(mean_sigma_label(0.0123, 0.0045), "1.23% ± 0.45%");
    }
}
