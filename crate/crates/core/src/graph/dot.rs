use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use super::{NodeKind, Seeg};
use crate::error::{Error, Result};
use crate::instance::Instance;

fn time_label(instance: &Instance, t: u32) -> String {
    if t == instance.end_time() {
        "inf".to_string()
    } else {
        t.to_string()
    }
}

/// Renders the graph in Graphviz DOT syntax. Output depends only on the graph.
pub fn to_dot(seeg: &Seeg, instance: &Instance) -> String {
    let mut out = String::from("digraph seeg {\n");
    for (v, node) in seeg.nodes.iter().enumerate() {
        let loc = instance
            .locations
            .get(node.location)
            .map_or("?", |l| l.id.as_str());
        let label = match node.kind {
            NodeKind::ArtificialStart => format!("start {loc}"),
            NodeKind::ArtificialEnd => format!("end {loc}"),
            _ => {
                let theta = node
                    .theta
                    .as_ref()
                    .map(|p| p.0.iter().map(|x| x.to_string()).collect::<Vec<_>>().join(", "))
                    .unwrap_or_default();
                format!("({loc}, {}, [{theta}])", time_label(instance, node.time))
            }
        };
        let _ = writeln!(out, "  n{v} [label=\"{label}\"];");
    }
    for arc in &seeg.arcs {
        let what = match (arc.trip, arc.vehicle) {
            (Some(t), _) => format!("{} {}", arc.kind, instance.trips.get(t).map_or("?", |t| t.id.as_str())),
            (None, Some(v)) => format!("{} {}", arc.kind, instance.vehicles.get(v).map_or("?", |v| v.id.as_str())),
            _ => arc.kind.to_string(),
        };
        let _ = writeln!(out, "  n{} -> n{} [label=\"{what} {}\"];", arc.tail, arc.head, arc.cost);
    }
    out.push_str("}\n");
    out
}

pub fn export_dot(seeg: &Seeg, instance: &Instance, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    fs::write(path, to_dot(seeg, instance)).map_err(|e| Error::io(path, e))
}
