use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use super::{FlowModel, RowKind};
use crate::error::{Error, Result};

const TERMS_PER_LINE: usize = 8;

fn row_name(kind: RowKind) -> String {
    match kind {
        RowKind::Coverage(t) => format!("cover_t{t}"),
        RowKind::Conservation(v) => format!("flow_n{v}"),
        RowKind::Balance(l) => format!("balance_l{l}"),
    }
}

fn write_terms(out: &mut String, terms: impl Iterator<Item = (usize, f64)>) {
    let mut any = false;
    for (i, (c, a)) in terms.enumerate() {
        if i > 0 && i % TERMS_PER_LINE == 0 {
            out.push_str("\n   ");
        }
        if !any {
            let _ = write!(out, " {a} x{c}");
        } else if a < 0.0 {
            let _ = write!(out, " - {} x{c}", -a);
        } else {
            let _ = write!(out, " + {a} x{c}");
        }
        any = true;
    }
    if !any {
        out.push_str(" 0 x0");
    }
}

/// Writes the model in CPLEX LP text format; `relaxed` drops integrality.
pub fn to_lp_string(model: &FlowModel, relaxed: bool) -> String {
    let mut out = String::from("\\ arc-flow rotation model\nMinimize\n obj:");
    write_terms(&mut out, model.columns.iter().enumerate().map(|(c, col)| (c, col.cost)));
    out.push_str("\nSubject To\n");
    for row in &model.rows {
        if row.entries.is_empty() && row.rhs == 0.0 {
            continue;
        }
        let _ = write!(out, " {}:", row_name(row.kind));
        write_terms(&mut out, row.entries.iter().copied());
        let _ = writeln!(out, " = {}", row.rhs);
    }
    if model.trivially_infeasible {
        out.push_str(" no_arc_for_trip: 0 x0 = 1\n");
    }
    out.push_str("Bounds\n");
    for (c, col) in model.columns.iter().enumerate() {
        let _ = writeln!(out, " 0 <= x{c} <= {}", col.upper);
    }
    if !relaxed {
        let general: Vec<usize> = (0..model.columns.len()).filter(|c| !model.columns[*c].binary).collect();
        let binary: Vec<usize> = (0..model.columns.len()).filter(|c| model.columns[*c].binary).collect();
        for (title, list) in [("General", general), ("Binary", binary)] {
            if list.is_empty() {
                continue;
            }
            let _ = writeln!(out, "{title}");
            for chunk in list.chunks(TERMS_PER_LINE) {
                let names: Vec<String> = chunk.iter().map(|c| format!("x{c}")).collect();
                let _ = writeln!(out, " {}", names.join(" "));
            }
        }
    }
    out.push_str("End\n");
    out
}

pub fn export_lp(model: &FlowModel, relaxed: bool, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    fs::write(path, to_lp_string(model, relaxed)).map_err(|e| Error::io(path, e))
}
