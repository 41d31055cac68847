//! Comma-separated tables with a provenance preamble.
//!
//! Every table starts with `#` lines carrying the crate version, the table format
//! version and the configuration echo, followed by a header row.

use std::io::Write;
use std::path::Path;

use crate::error::Result;

use super::config::StudyConfig;
use super::studies::{ConvergenceRecord, NaiveRow, OnlineResult, TimingRow, TruthRow};
use crate::spectral::TensorGrid2D;

pub const TABLE_FORMAT_VERSION: u32 = 1;

/// One table cell.
#[derive(Clone, Debug, PartialEq)]
pub enum Cell {
    Int(usize),
    Float(f64),
    Text(String),
}

impl Cell {
    fn render(&self) -> String {
        match self {
            Cell::Int(v) => v.to_string(),
            // 17 significant digits round-trip every finite double
            Cell::Float(v) if v.is_finite() => format!("{v:.16e}"),
            Cell::Float(v) if v.is_nan() => "nan".into(),
            Cell::Float(v) => if *v > 0.0 { "inf" } else { "-inf" }.into(),
            Cell::Text(s) => s.clone(),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Table {
    pub title: String,
    /// Extra `#` lines after the configuration echo.
    pub notes: Vec<String>,
    pub header: Vec<String>,
    pub rows: Vec<Vec<Cell>>,
}

impl Table {
    pub fn new(title: &str, header: &[&str]) -> Self {
        Table {
            title: title.to_string(),
            notes: Vec::new(),
            header: header.iter().map(|s| s.to_string()).collect(),
            rows: Vec::new(),
        }
    }

    pub fn render(&self, config: &StudyConfig) -> String {
        let mut out = String::new();
        out.push_str(&format!(
            "# rcm {} table-format {} {}\n",
            env!("CARGO_PKG_VERSION"),
            TABLE_FORMAT_VERSION,
            self.title
        ));
        out.push_str(&format!("# config {}\n", config.echo()));
        for note in &self.notes {
            out.push_str(&format!("# {note}\n"));
        }
        out.push_str(&self.header.join(","));
        out.push('\n');
        for row in &self.rows {
            let cells: Vec<String> = row.iter().map(Cell::render).collect();
            out.push_str(&cells.join(","));
            out.push('\n');
        }
        out
    }

    /// Write to `path`, or to standard output when `path` is `None`.
    pub fn write(&self, config: &StudyConfig, path: Option<&Path>) -> Result<()> {
        let text = self.render(config);
        match path {
            Some(p) => std::fs::write(p, text)?,
            None => std::io::stdout().lock().write_all(text.as_bytes())?,
        }
        Ok(())
    }
}

pub fn truth_table(rows: &[TruthRow]) -> Table {
    let mut t = Table::new("truth-convergence", &["nx", "l2", "linf"]);
    for r in rows {
        t.rows.push(vec![Cell::Int(r.nx), Cell::Float(r.l2), Cell::Float(r.linf)]);
    }
    t
}

pub fn convergence_table(rows: &[ConvergenceRecord]) -> Table {
    let mut t = Table::new("rbm-convergence", &ConvergenceRecord::HEADER);
    for r in rows {
        t.rows.push(vec![
            Cell::Int(r.n),
            Cell::Float(r.max_delta_xi),
            Cell::Float(r.max_delta_test),
            Cell::Float(r.max_l2),
            Cell::Float(r.median_l2),
            Cell::Float(r.min_l2),
            Cell::Float(r.max_linf),
            Cell::Float(r.median_linf),
            Cell::Float(r.min_linf),
        ]);
    }
    t
}

pub fn naive_table(rows: &[NaiveRow]) -> Table {
    let mut t = Table::new("naive-points", &NaiveRow::HEADER);
    for r in rows {
        t.rows.push(vec![
            Cell::Text(r.points.into()),
            Cell::Int(r.n),
            Cell::Float(r.min_cond),
            Cell::Float(r.median_cond),
            Cell::Float(r.max_cond),
            Cell::Int(r.singular),
            Cell::Float(r.best_l2),
            Cell::Float(r.best_linf),
        ]);
    }
    t
}

pub fn timing_table(rows: &[TimingRow]) -> Table {
    let mut t = Table::new("timing", &TimingRow::HEADER);
    for r in rows {
        t.rows.push(vec![
            Cell::Text(r.method.into()),
            Cell::Int(r.nx),
            Cell::Int(r.n),
            Cell::Float(r.offline_seconds),
            Cell::Float(r.online_seconds),
            Cell::Float(r.truth_seconds),
            Cell::Float(r.online_over_truth),
            Cell::Float(r.offline_over_truth),
        ]);
    }
    t
}

/// Interior nodes with the reduced solution; coefficients and certificate as notes.
pub fn online_table(grid: &TensorGrid2D, r: &OnlineResult) -> Table {
    let mut t = Table::new("online-solution", &["x", "y", "u"]);
    let list = |v: &[f64]| v.iter().map(|c| Cell::Float(*c).render()).collect::<Vec<_>>().join(" ");
    t.notes = vec![
        format!("mu {}", list(r.mu.as_slice())),
        format!("coefficients {}", list(&r.coefficients)),
        format!("residual {}", Cell::Float(r.estimate.residual).render()),
        format!("beta {}", Cell::Float(r.estimate.beta).render()),
        format!("delta {}", Cell::Float(r.estimate.delta).render()),
        format!("solve_seconds {}", Cell::Float(r.seconds).render()),
    ];
    for (dof, &u) in r.values.iter().enumerate() {
        let (x, y) = grid.point(dof);
        t.rows.push(vec![Cell::Float(x), Cell::Float(y), Cell::Float(u)]);
    }
    t
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn floats_round_trip() {
        for v in [0.1, 1.0 / 3.0, 1e-300, -2.5e17, std::f64::consts::PI] {
            let s = Cell::Float(v).render();
            assert_eq!(s.parse::<f64>().unwrap().to_bits(), v.to_bits(), "{s}");
        }
        assert_eq!(Cell::Float(f64::INFINITY).render(), "inf");
        assert_eq!(Cell::Float(f64::NAN).render(), "nan");
    }

    #[test]
    fn preamble_and_header() {
        let t = truth_table(&[TruthRow { nx: 12, l2: 0.5, linf: 0.25 }]);
        let text = t.render(&StudyConfig::default());
        let lines: Vec<&str> = text.lines().collect();
        assert!(lines[0].starts_with("# rcm ") && lines[0].contains("table-format 1"));
        assert!(lines[1].starts_with("# config {"));
        assert_eq!(lines[2], "nx,l2,linf");
        assert_eq!(lines[3], "12,5.0000000000000000e-1,2.5000000000000000e-1");
    }
}
