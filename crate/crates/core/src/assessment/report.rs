use std::collections::BTreeSet;
use std::fmt::Write as _;

use super::LayerKLStats;

pub const COLUMNS: [&str; 7] = ["layer", "min_kl", "max_kl", "argmin_j", "delta", "valid", "chosen"];

#[derive(Debug, Clone, PartialEq)]
pub struct AssessmentReport {
    pub input_id: String,
    /// Smallest uniform baseline over the assessed inputs.
    pub uniform_baseline: f64,
    /// One entry per assessable layer, layer 1 first.
    pub layers: Vec<LayerKLStats>,
    pub valid: BTreeSet<usize>,
    pub chosen: Option<usize>,
}

impl AssessmentReport {
    pub fn deltas(&self) -> Vec<f64> {
        self.layers.iter().map(|s| s.delta).collect()
    }

    fn rows(&self) -> Vec<[String; 7]> {
        self.layers
            .iter()
            .map(|s| {
                [
                    s.layer.to_string(),
                    format!("{:.9}", s.min_kl),
                    format!("{:.9}", s.max_kl),
                    s.argmin.to_string(),
                    format!("{:.9}", s.delta),
                    (self.valid.contains(&s.layer) as u8).to_string(),
                    ((self.chosen == Some(s.layer)) as u8).to_string(),
                ]
            })
            .collect()
    }

    /// Aligned, human-readable table.
    pub fn to_table(&self) -> String {
        let rows = self.rows();
        let mut widths = COLUMNS.map(str::len);
        for row in &rows {
            for (w, cell) in widths.iter_mut().zip(row) {
                *w = (*w).max(cell.len());
            }
        }
        let mut out = String::new();
        let _ = writeln!(out, "# input: {}", self.input_id);
        let _ = writeln!(out, "# uniform_baseline: {:.9}", self.uniform_baseline);
        match self.chosen {
            Some(c) => {
                let _ = writeln!(out, "# chosen_partition: {c}");
            }
            None => out.push_str("# chosen_partition: none\n"),
        }
        let line = |cells: &[&str]| {
            cells
                .iter()
                .zip(widths)
                .map(|(c, w)| format!("{c:>w$}"))
                .collect::<Vec<_>>()
                .join("  ")
        };
        out.push_str(&line(&COLUMNS));
        out.push('\n');
        for row in &rows {
            let cells: Vec<&str> = row.iter().map(String::as_str).collect();
            out.push_str(&line(&cells));
            out.push('\n');
        }
        out
    }

    /// Tab-separated records in column order, after a header line.
    pub fn to_tsv(&self) -> String {
        let mut out = COLUMNS.join("\t");
        out.push('\n');
        for row in self.rows() {
            out.push_str(&row.join("\t"));
            out.push('\n');
        }
        out
    }
}
