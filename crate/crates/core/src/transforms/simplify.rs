use std::collections::BTreeSet;

use super::finish;
use crate::error::{Error, Result};
use crate::ir::graph::{DataflowGraph, Node, State, Wcr};

/// Concatenate state `s2` onto `s1`; `s2` must directly follow `s1`.
pub fn state_fusion(g: &DataflowGraph, s1: usize, s2: usize) -> Result<DataflowGraph> {
    const T: &str = "state_fusion";
    if s2 != s1 + 1 || s2 >= g.states.len() {
        return Err(Error::not_applicable(T, format!("state {s2} does not directly follow state {s1}")));
    }
    let mut out = g.clone();
    let second = out.states.remove(s2);
    out.states[s1].nodes.extend(second.nodes);
    finish(T, out)
}

/// Clean-up to a fixed point: drop transients nobody reads together with
/// their producers, drop identity copies, and merge the state sequence.
pub fn simplify(g: &DataflowGraph) -> Result<DataflowGraph> {
    let mut out = g.clone();
    loop {
        let before = out.clone();
        remove_dead_transients(&mut out);
        for st in &mut out.states {
            retain_nodes(&mut st.nodes, &|n| !matches!(n, Node::Copy(c) if c.src == c.dst && c.src_subset == c.dst_subset));
        }
        if out.states.len() > 1 {
            let label = out.states[0].label.clone();
            let nodes = out.states.drain(..).flat_map(|s| s.nodes).collect();
            out.states.push(State { label, nodes });
        }
        if out == before {
            break;
        }
    }
    finish("simplify", out)
}

fn remove_dead_transients(g: &mut DataflowGraph) {
    let mut read = BTreeSet::new();
    for st in &g.states {
        for n in &st.nodes {
            n.reads(&mut read);
        }
    }
    let dead: BTreeSet<String> =
        g.containers.iter().filter(|c| c.transient && !read.contains(&c.name)).map(|c| c.name.clone()).collect();
    let removable = |n: &Node| match n {
        Node::Tasklet(t) => t.outs.iter().all(|c| dead.contains(&c.memlet.container) && c.memlet.wcr == Wcr::None),
        Node::Copy(c) => dead.contains(&c.dst),
        _ => false,
    };
    for st in &mut g.states {
        retain_nodes(&mut st.nodes, &|n| !removable(n));
    }
    // a container stays if some surviving node still writes it
    let mut touched = BTreeSet::new();
    for st in &g.states {
        for n in &st.nodes {
            n.writes(&mut touched);
            n.reads(&mut touched);
        }
    }
    g.containers.retain(|c| !dead.contains(&c.name) || touched.contains(&c.name));
}

/// Keep nodes satisfying `keep`, recursively, then drop emptied scopes.
fn retain_nodes(nodes: &mut Vec<Node>, keep: &dyn Fn(&Node) -> bool) {
    nodes.retain(|n| keep(n));
    for n in nodes.iter_mut() {
        if let Some(body) = n.body_mut() {
            retain_nodes(body, keep);
        }
    }
    nodes.retain(|n| n.body().is_none_or(|b| !b.is_empty()));
}
