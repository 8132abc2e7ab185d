use std::fmt::Write;

use crate::agent::LightpathRecord;
use crate::topology::TopoGraph;

/// Text table of switches, spans and circuits, sorted by id.
pub fn render_topology(g: &TopoGraph, circuits: &[&LightpathRecord]) -> String {
    let mut out = String::new();
    let names: Vec<&str> = g.vertices().map(|v| v.as_str()).collect();
    let _ = writeln!(out, "switches: {}", names.join(" "));

    let rows: Vec<[String; 5]> = g
        .edges()
        .map(|e| {
            [
                e.span_id.clone(),
                e.from.to_string(),
                e.to.to_string(),
                format_cost(e.cost),
                e.state.to_string(),
            ]
        })
        .collect();
    let header = ["span", "from", "to", "cost", "state"].map(String::from);
    let mut widths = [0usize; 5];
    for row in std::iter::once(&header).chain(&rows) {
        for (w, cell) in widths.iter_mut().zip(row) {
            *w = (*w).max(cell.len());
        }
    }
    for row in std::iter::once(&header).chain(&rows) {
        let cells: Vec<String> = row
            .iter()
            .zip(widths)
            .map(|(c, w)| format!("{c:<w$}"))
            .collect();
        let _ = writeln!(out, "{}", cells.join("  ").trim_end());
    }

    let mut circuits: Vec<&&LightpathRecord> = circuits.iter().collect();
    circuits.sort_by(|a, b| a.path_id.cmp(&b.path_id));
    for c in circuits {
        let _ = writeln!(out, "circuit {} {} {}", c.path_id, c.state, c.route);
    }
    out
}

fn format_cost(c: f64) -> String {
    if c.fract() == 0.0 {
        format!("{c:.0}")
    } else {
        c.to_string()
    }
}
