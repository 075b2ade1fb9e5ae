//! Graph-to-graph transformations. Every transform borrows its input and
//! returns a new graph, so a failed precondition leaves the caller's graph
//! untouched. Results are validated before they are returned.

mod local_storage;
mod maps;
mod recipe;
mod simplify;
mod tiling;

pub use local_storage::local_storage;
pub use maps::{apply_device_transformations, map_collapse, map_expansion, map_fusion, map_to_for_loop, set_schedule};
pub use recipe::{ax_optimization_recipe, ax_recipe, scratch_report, Pass, PassRecipe, DEFAULT_SCRATCH_BUDGET};
pub use simplify::{simplify, state_fusion};
pub use tiling::{map_tiling, strip_mining, warp_tiling};

use crate::error::{Error, Result};
use crate::ir::expr::Affine;
use crate::ir::graph::{DataflowGraph, MapScope, Node, NodePath};
use crate::ir::validate::validate;

fn map_ref<'g>(g: &'g DataflowGraph, at: &NodePath, transform: &str) -> Result<&'g MapScope> {
    g.node(at)
        .and_then(Node::as_map)
        .ok_or_else(|| Error::not_applicable(transform, format!("no map at {at}")))
}

fn finish(transform: &str, g: DataflowGraph) -> Result<DataflowGraph> {
    match validate(&g).first() {
        None => Ok(g),
        Some(d) => Err(Error::not_applicable(transform, format!("result would be invalid: {d}"))),
    }
}

/// Apply `f` to every affine expression in ranges and subsets below `nodes`.
fn rewrite_affines(nodes: &mut [Node], f: &dyn Fn(&Affine) -> Affine) {
    for n in nodes {
        n.walk_mut(&mut |n| match n {
            Node::Map(m) => {
                for r in &mut m.ranges {
                    *r = r.map_bounds(|b| b.map_affine(f));
                }
            }
            Node::For(l) => l.range = l.range.map_bounds(|b| b.map_affine(f)),
            Node::Tasklet(t) => {
                for m in t.memlets_mut() {
                    for a in &mut m.subset {
                        *a = f(a);
                    }
                }
            }
            Node::Copy(c) => {
                for d in c.src_subset.iter_mut().chain(c.dst_subset.iter_mut()) {
                    *d = d.map_affine(f);
                }
            }
        });
    }
}

/// An identifier based on `base` that is neither in `taken` nor a symbol;
/// it is added to `taken`.
fn fresh_name(base: &str, taken: &mut std::collections::BTreeSet<String>) -> String {
    let name = if taken.contains(base) {
        (1..).map(|n| format!("{base}_{n}")).find(|c| !taken.contains(c)).unwrap()
    } else {
        base.to_string()
    };
    taken.insert(name.clone());
    name
}

fn taken_names(g: &DataflowGraph) -> std::collections::BTreeSet<String> {
    let mut taken = g.iterator_names();
    taken.extend(g.symbols.iter().cloned());
    taken.extend(g.containers.iter().map(|c| c.name.clone()));
    taken
}
