use serde::{Deserialize, Serialize};

use crate::algebra::{Axis, MultidimTable};
use crate::schema::ALL;

/// Wire form of a multidimensional table, shared by the REPL and the HTTP API.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TablePayload {
    pub subject: SubjectPayload,
    pub rows: AxisPayload,
    pub cols: AxisPayload,
    /// The restriction predicate, `true` when there is none.
    pub restriction: String,
    pub cells: Vec<CellPayload>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SubjectPayload {
    pub fact: String,
    pub measures: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AxisPayload {
    pub dimension: String,
    pub hierarchy: String,
    /// Displayed attributes, coarsest first; empty for the `All` level.
    pub attributes: Vec<String>,
    /// Header tuples in display order.
    pub headers: Vec<Vec<String>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellPayload {
    pub row: Vec<String>,
    pub col: Vec<String>,
    pub measure: String,
    pub value: f64,
    /// Positions in the header lists; they tell apart header tuples that
    /// repeat when a weak attribute is shown without its parameter.
    pub row_index: usize,
    pub col_index: usize,
}

impl From<&MultidimTable> for TablePayload {
    fn from(t: &MultidimTable) -> Self {
        let axis = |a: &Axis, headers: &[Vec<String>]| AxisPayload {
            dimension: a.dimension.clone(),
            hierarchy: a.hierarchy.clone(),
            attributes: a.attributes.clone(),
            headers: headers.to_vec(),
        };
        let g = &t.grid;
        let mut cells = Vec::with_capacity(g.len());
        for r in 0..g.row_headers().len() {
            for c in 0..g.col_headers().len() {
                let Some(values) = g.at(r, c) else { continue };
                for (spec, v) in g.measures().iter().zip(values) {
                    cells.push(CellPayload {
                        row: g.row_headers()[r].clone(),
                        col: g.col_headers()[c].clone(),
                        measure: spec.to_string(),
                        value: *v,
                        row_index: r,
                        col_index: c,
                    });
                }
            }
        }
        TablePayload {
            subject: SubjectPayload {
                fact: t.subject.fact.clone(),
                measures: t.subject.measures.iter().map(ToString::to_string).collect(),
            },
            rows: axis(&t.rows, g.row_headers()),
            cols: axis(&t.cols, g.col_headers()),
            restriction: t.restriction.to_string(),
            cells,
        }
    }
}

/// Formats a cell value with at most two decimals and no trailing zeros.
pub fn format_number(v: f64) -> String {
    let s = format!("{v:.2}");
    let s = if s.contains('.') { s.trim_end_matches('0').trim_end_matches('.') } else { &s };
    if s == "-0" {
        "0".to_string()
    } else {
        s.to_string()
    }
}

/// Attribute names and header tuples of an axis, with `All` standing in for
/// an empty attribute list.
fn shown(a: &AxisPayload) -> (Vec<String>, Vec<Vec<String>>) {
    if a.attributes.is_empty() {
        let headers = a.headers.iter().map(|_| vec![ALL.to_string()]).collect();
        (vec![ALL.to_string()], headers)
    } else {
        (a.attributes.clone(), a.headers.clone())
    }
}

/// Blanks each header component that repeats the previous tuple's value
/// under an identical prefix.
fn merged(headers: &[Vec<String>]) -> Vec<Vec<String>> {
    let mut out = Vec::with_capacity(headers.len());
    for (i, h) in headers.iter().enumerate() {
        let mut same_prefix = i > 0;
        let row = h
            .iter()
            .enumerate()
            .map(|(k, v)| {
                same_prefix = same_prefix && headers[i - 1].get(k) == Some(v);
                if same_prefix {
                    String::new()
                } else {
                    v.clone()
                }
            })
            .collect();
        out.push(row);
    }
    out
}

/// Renders a table as a fixed-layout text grid.
///
/// A title line names the subject and axes. Column headers come next, one
/// line per column attribute, then a measure line when the table has several
/// measures, then the row attribute names. Each data line starts with its row
/// header values. Numbers are right-aligned; absent cells stay blank.
pub fn render_text(p: &TablePayload) -> String {
    let (row_attrs, row_headers) = shown(&p.rows);
    let (col_attrs, col_headers) = shown(&p.cols);
    let measures = &p.subject.measures;
    let left = row_attrs.len();
    let per = measures.len().max(1);
    let data_cols = col_headers.len() * per;

    let mut lines: Vec<Vec<String>> = Vec::new();
    let blank_left = || vec![String::new(); left];

    let merged_cols = merged(&col_headers);
    for (k, attr) in col_attrs.iter().enumerate() {
        let mut line = blank_left();
        line[left - 1] = attr.clone();
        for h in &merged_cols {
            line.push(h.get(k).cloned().unwrap_or_default());
            line.extend(std::iter::repeat_n(String::new(), per - 1));
        }
        lines.push(line);
    }
    if measures.len() > 1 {
        let mut line = blank_left();
        for _ in 0..col_headers.len() {
            line.extend(measures.iter().cloned());
        }
        lines.push(line);
    }
    let mut names = row_attrs.clone();
    names.extend(std::iter::repeat_n(String::new(), data_cols));
    lines.push(names);

    let mut values = vec![vec![String::new(); data_cols]; row_headers.len()];
    for cell in &p.cells {
        let Some(m) = measures.iter().position(|x| *x == cell.measure) else { continue };
        if let Some(row) = values.get_mut(cell.row_index) {
            if let Some(slot) = row.get_mut(cell.col_index * per + m) {
                *slot = format_number(cell.value);
            }
        }
    }
    for (h, vals) in merged(&row_headers).into_iter().zip(values) {
        let mut line: Vec<String> = (0..left).map(|k| h.get(k).cloned().unwrap_or_default()).collect();
        line.extend(vals);
        lines.push(line);
    }

    let width = left + data_cols;
    let mut widths = vec![0; width];
    for line in &lines {
        for (i, s) in line.iter().enumerate() {
            widths[i] = widths[i].max(s.chars().count());
        }
    }

    let mut out = format!("{} {}", p.subject.fact, measures.join(", "));
    out.push_str(&format!(
        "  rows: {}.{}  cols: {}.{}",
        p.rows.dimension, p.rows.hierarchy, p.cols.dimension, p.cols.hierarchy
    ));
    if p.restriction != "true" {
        out.push_str(&format!("  where {}", p.restriction));
    }
    out.push('\n');
    for line in &lines {
        let mut text = String::new();
        for (i, s) in line.iter().enumerate() {
            if i > 0 {
                text.push_str("  ");
            }
            let pad = widths[i] - s.chars().count();
            if i < left {
                text.push_str(s);
                text.extend(std::iter::repeat_n(' ', pad));
            } else {
                text.extend(std::iter::repeat_n(' ', pad));
                text.push_str(s);
            }
        }
        out.push_str(text.trim_end());
        out.push('\n');
    }
    out
}
