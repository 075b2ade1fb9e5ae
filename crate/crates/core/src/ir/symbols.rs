use crate::error::{Error, Result};
use crate::ir::expr::Affine;
use crate::ir::graph::{DataflowGraph, Node, NodePath, SubsetDim, SymbolicSize};

/// The unique map whose parameter list contains `param`.
pub fn find_map_by_param(g: &DataflowGraph, param: &str) -> Result<NodePath> {
    let hits: Vec<NodePath> = g
        .maps()
        .into_iter()
        .filter(|(_, m)| m.params.iter().any(|p| p == param))
        .map(|(p, _)| p)
        .collect();
    match hits.len() {
        1 => Ok(hits.into_iter().next().unwrap()),
        n => Err(Error::Lookup(format!("expected one map with parameter '{param}', found {n}"))),
    }
}

/// Replace symbol `name` by `value` everywhere and drop it from the table.
pub fn specialize_symbol(g: &DataflowGraph, name: &str, value: i64) -> Result<DataflowGraph> {
    if !g.symbols.iter().any(|s| s == name) {
        return Err(Error::Lookup(format!("unknown symbol '{name}'")));
    }
    if value < 0 {
        return Err(Error::Range(format!("symbol '{name}' cannot take negative value {value}")));
    }
    let mut out = g.clone();
    out.symbols.retain(|s| s != name);
    let constant = Affine::constant(value);
    for c in &mut out.containers {
        for d in &mut c.shape {
            if matches!(d, SymbolicSize::Symbol(s) if s == name) {
                *d = SymbolicSize::Constant(value as u64);
            }
        }
    }
    let sub_size = |s: &SymbolicSize| match s {
        SymbolicSize::Symbol(n) if n == name => SymbolicSize::Constant(value as u64),
        other => other.clone(),
    };
    out.walk_nodes_mut(&mut |n| match n {
        Node::Map(m) => {
            for r in &mut m.ranges {
                *r = r.map_bounds(|b| b.substitute(name, &constant));
            }
        }
        Node::For(f) => f.range = f.range.map_bounds(|b| b.substitute(name, &constant)),
        Node::Tasklet(t) => {
            for m in t.memlets_mut() {
                for a in &mut m.subset {
                    *a = a.substitute(name, &constant);
                }
            }
        }
        Node::Copy(c) => {
            for d in c.src_subset.iter_mut().chain(c.dst_subset.iter_mut()) {
                *d = match d.map_affine(|a| a.substitute(name, &constant)) {
                    SubsetDim::Range { start, extent } => SubsetDim::Range { start, extent: sub_size(&extent) },
                    idx => idx,
                };
            }
        }
    });
    Ok(out)
}
