//! Text renderings of simulation results: CSV, JSON and aligned tables.

use std::fmt::Write as _;

use serde::Serialize;

use super::{CompareRow, FigurePoint, NetworkResult};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, clap::ValueEnum)]
pub enum Format {
    #[default]
    Table,
    Csv,
    Json,
}

pub const LAYER_COLUMNS: [&str; 14] = [
    "layer",
    "kind",
    "mode",
    "tiles",
    "compute_cycles",
    "dram_cycles",
    "total_cycles",
    "macs",
    "efficiency",
    "energy_total",
    "energy_dram",
    "energy_buffer",
    "energy_rf",
    "energy_mac",
];

/// A header plus string rows; every renderer goes through this.
#[derive(Debug, Clone, PartialEq)]
pub struct Grid {
    pub header: Vec<String>,
    pub rows: Vec<Vec<String>>,
}

impl Grid {
    pub fn new<S: Into<String>>(header: impl IntoIterator<Item = S>) -> Self {
        Self {
            header: header.into_iter().map(Into::into).collect(),
            rows: Vec::new(),
        }
    }

    pub fn push(&mut self, row: Vec<String>) {
        self.rows.push(row);
    }

    pub fn to_csv(&self) -> String {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(&self.header).expect("in-memory write");
        for r in &self.rows {
            w.write_record(r).expect("in-memory write");
        }
        String::from_utf8(w.into_inner().expect("in-memory flush")).expect("utf-8 fields")
    }

    /// Left-aligned first column, right-aligned numbers.
    pub fn to_table(&self) -> String {
        let n = self.header.len();
        let mut widths: Vec<usize> = self.header.iter().map(|h| h.chars().count()).collect();
        for r in &self.rows {
            for (i, c) in r.iter().enumerate().take(n) {
                widths[i] = widths[i].max(c.chars().count());
            }
        }
        let mut out = String::new();
        let line = |out: &mut String, cells: &[String]| {
            for (i, c) in cells.iter().enumerate() {
                if i > 0 {
                    out.push_str("  ");
                }
                if i == 0 {
                    let _ = write!(out, "{:<w$}", c, w = widths[i]);
                } else {
                    let _ = write!(out, "{:>w$}", c, w = widths[i]);
                }
            }
            out.push('\n');
        };
        line(&mut out, &self.header);
        let rule: Vec<String> = widths.iter().map(|&w| "-".repeat(w)).collect();
        line(&mut out, &rule);
        for r in &self.rows {
            line(&mut out, r);
        }
        out
    }
}

pub fn to_json<T: Serialize + ?Sized>(value: &T) -> String {
    let mut s = serde_json::to_string_pretty(value).expect("results serialize");
    s.push('\n');
    s
}

/// Shortest round-trip form, same digits serde_json emits.
fn num(v: f64) -> String {
    let s = serde_json::to_string(&v).unwrap_or_else(|_| v.to_string());
    match s.strip_suffix(".0") {
        Some(t) => t.to_string(),
        None => s,
    }
}

pub fn layer_grid(r: &NetworkResult) -> Grid {
    let mut g = Grid::new(LAYER_COLUMNS);
    for l in &r.layers {
        g.push(vec![
            l.layer.clone(),
            l.kind.to_string(),
            l.mode.to_string(),
            l.tiles.to_string(),
            l.compute_cycles.to_string(),
            l.dram_cycles.to_string(),
            l.total_cycles.to_string(),
            l.macs.to_string(),
            num(l.efficiency),
            num(l.energy.total),
            num(l.energy.dram),
            num(l.energy.buffer),
            num(l.energy.rf),
            num(l.energy.mac),
        ]);
    }
    g
}

pub fn network_csv(r: &NetworkResult) -> String {
    layer_grid(r).to_csv()
}

pub fn network_table(r: &NetworkResult, verbose_tiling: bool) -> String {
    let mut g = layer_grid(r);
    if verbose_tiling {
        g.header.push("plan".into());
        for (row, l) in g.rows.iter_mut().zip(&r.layers) {
            row.push(l.plan.map(|p| p.summary()).unwrap_or_else(|| "-".into()));
        }
    }
    let mut s = format!("{} on {}\n", r.network, r.config);
    s.push_str(&g.to_table());
    let _ = writeln!(
        s,
        "total: {} cycles, energy {}, {} MACs, {} params, efficiency {:.2} MACs/cycle",
        r.total_cycles,
        num(r.total_energy),
        r.total_macs,
        r.params,
        r.efficiency()
    );
    s
}

pub fn render_network(r: &NetworkResult, format: Format, verbose_tiling: bool) -> String {
    match format {
        Format::Table => network_table(r, verbose_tiling),
        Format::Csv => network_csv(r),
        Format::Json => to_json(r),
    }
}

pub fn compare_grid(rows: &[CompareRow]) -> Grid {
    let mut g = Grid::new([
        "name",
        "params",
        "macs",
        "total_cycles",
        "normalized_time",
        "total_energy",
    ]);
    for r in rows {
        g.push(vec![
            r.name.clone(),
            r.params.to_string(),
            r.macs.to_string(),
            r.total_cycles.to_string(),
            num(r.normalized_time),
            num(r.total_energy),
        ]);
    }
    g
}

pub fn render_compare(rows: &[CompareRow], format: Format) -> String {
    match format {
        Format::Table => {
            let mut g = compare_grid(rows);
            for (row, r) in g.rows.iter_mut().zip(rows) {
                row[4] = format!("x{:.2}", r.normalized_time);
                row[5] = format!("{:.3e}", r.total_energy);
            }
            g.to_table()
        }
        Format::Csv => compare_grid(rows).to_csv(),
        Format::Json => to_json(rows),
    }
}

/// Plot-ready series: one row per point.
pub fn figure_csv(points: &[FigurePoint]) -> String {
    let mut g = Grid::new(["index", "layer", "count", "cycles", "efficiency"]);
    for (i, p) in points.iter().enumerate() {
        g.push(vec![
            i.to_string(),
            p.name.clone(),
            p.count.to_string(),
            p.cycles.to_string(),
            num(p.efficiency),
        ]);
    }
    g.to_csv()
}
