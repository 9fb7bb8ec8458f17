//! DOT export of the transition network.
//!
//! Nodes carry their sojourn time, edges carry the transition
//! probability exactly as written in the model source (fractions stay
//! fractions), and the edges of a highlighted cycle are drawn dashed
//! and bold. Output is byte-deterministic: nodes and edges appear in
//! model order.

use std::collections::HashSet;

use crate::limit::Cycle;
use crate::model::{ChainModel, StateId};

fn quote(text: &str) -> String {
    let escaped = text.replace('\\', "\\\\").replace('"', "\\\"");
    format!("\"{escaped}\"")
}

/// Renders the model as a DOT digraph, highlighting `cycle`'s edges
/// with `style=dashed, penwidth=3` when given.
pub fn render(model: &ChainModel, cycle: Option<&Cycle>) -> String {
    let highlighted: HashSet<(StateId, StateId)> = cycle
        .map(|c| c.successor_pairs().collect())
        .unwrap_or_default();

    let mut out = String::from("digraph chain {\n  rankdir=LR;\n");
    for s in model.states() {
        let name = model.state_name(s);
        let label = format!("{} (T={})", name, model.sojourn_token(s));
        out.push_str(&format!("  {} [label={}];\n", quote(name), quote(&label)));
    }
    for from in model.states() {
        for to in model.states() {
            if model.prob(from, to) <= 0.0 {
                continue;
            }
            let attrs = if highlighted.contains(&(from, to)) {
                ", style=dashed, penwidth=3"
            } else {
                ""
            };
            out.push_str(&format!(
                "  {} -> {} [label={}{}];\n",
                quote(model.state_name(from)),
                quote(model.state_name(to)),
                quote(model.trans_token(from, to)),
                attrs
            ));
        }
    }
    out.push_str("}\n");
    out
}
