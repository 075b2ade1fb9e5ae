use std::collections::{BTreeMap, BTreeSet};

use super::{finish, map_ref};
use crate::error::{Error, Result};
use crate::ir::expr::Affine;
use crate::ir::graph::{CopyNode, DataContainer, DataflowGraph, Node, NodePath, Range, Storage, SubsetDim, SymbolicSize};

const T: &str = "local_storage";

enum Dim {
    Fixed(Affine),
    Window { start: Affine, extent: SymbolicSize },
}

/// Cache the part of `array` read by `node_b` in a scratch container filled
/// right before `node_b`, once per iteration of the enclosing `node_a`.
pub fn local_storage(g: &DataflowGraph, array: &str, node_a: &NodePath, node_b: &NodePath) -> Result<DataflowGraph> {
    map_ref(g, node_a, T)?;
    if !node_a.is_strict_ancestor_of(node_b) {
        return Err(Error::not_applicable(T, format!("{node_b} is not nested inside {node_a}")));
    }
    let b = g.node(node_b).ok_or_else(|| Error::not_applicable(T, format!("no node at {node_b}")))?;
    if b.body().is_none() {
        return Err(Error::not_applicable(T, format!("{} is not a scope", b.describe())));
    }
    let container = g
        .container(array)
        .ok_or_else(|| Error::not_applicable(T, format!("unknown container '{array}'")))?;

    let mut written = BTreeSet::new();
    b.writes(&mut written);
    if written.contains(array) {
        return Err(Error::not_applicable(T, format!("'{array}' is written inside {}", b.describe())));
    }

    let mut inner: BTreeMap<String, Range> = BTreeMap::new();
    let mut accesses: Vec<Vec<Affine>> = Vec::new();
    let mut copied = false;
    b.walk(&mut |n| match n {
        Node::Map(m) => inner.extend(m.params.iter().cloned().zip(m.ranges.iter().cloned())),
        Node::For(f) => {
            inner.insert(f.var.clone(), f.range.clone());
        }
        Node::Tasklet(t) => {
            accesses.extend(t.ins.iter().filter(|c| c.memlet.container == array).map(|c| c.memlet.subset.clone()))
        }
        Node::Copy(c) => copied |= c.src == array,
    });
    if copied {
        return Err(Error::not_applicable(T, format!("'{array}' is copied inside {}", b.describe())));
    }
    if accesses.is_empty() {
        return Err(Error::not_applicable(T, format!("'{array}' is not read inside {}", b.describe())));
    }

    let dims = (0..container.rank())
        .map(|d| slice_dim(d, &accesses, &inner))
        .collect::<Result<Vec<Dim>>>()?;

    let mut out = g.clone();
    let local = out.fresh_container_name(&format!("local_{array}"));
    let shape: Vec<SymbolicSize> = dims
        .iter()
        .filter_map(|d| match d {
            Dim::Window { extent, .. } => Some(extent.clone()),
            Dim::Fixed(_) => None,
        })
        .collect();
    let copy = CopyNode {
        src: array.to_string(),
        src_subset: dims
            .iter()
            .map(|d| match d {
                Dim::Fixed(a) => SubsetDim::Index(a.clone()),
                Dim::Window { start, extent } => SubsetDim::Range { start: start.clone(), extent: extent.clone() },
            })
            .collect(),
        dst: local.clone(),
        dst_subset: shape.iter().map(|e| SubsetDim::Range { start: Affine::constant(0), extent: e.clone() }).collect(),
    };
    out.containers.push(DataContainer::new(&local, shape, Storage::ScratchShared, true));

    out.node_mut(node_b).unwrap().walk_mut(&mut |n| {
        if let Node::Tasklet(t) = n {
            for c in t.ins.iter_mut().filter(|c| c.memlet.container == array) {
                c.memlet.container = local.clone();
                c.memlet.subset = c
                    .memlet
                    .subset
                    .iter()
                    .zip(&dims)
                    .filter_map(|(a, d)| match d {
                        Dim::Window { start, .. } => Some(a.sub(start)),
                        Dim::Fixed(_) => None,
                    })
                    .collect();
            }
        }
    });
    let idx = *node_b.path.last().unwrap();
    out.sibling_list_mut(node_b).unwrap().insert(idx, Node::Copy(copy));
    finish(T, out)
}

/// The index window that dimension `d` of the accesses covers while the
/// variables in `inner` run over their ranges.
fn slice_dim(d: usize, accesses: &[Vec<Affine>], inner: &BTreeMap<String, Range>) -> Result<Dim> {
    let first = &accesses[0][d];
    let varying = |a: &Affine| a.vars().any(|v| inner.contains_key(v));
    if accesses.iter().all(|a| &a[d] == first) && !varying(first) {
        return Ok(Dim::Fixed(first.clone()));
    }
    let mut spans = Vec::new();
    for acc in accesses {
        let a = &acc[d];
        let inner_terms: Vec<(&String, &i64)> = a.terms.iter().filter(|(v, _)| inner.contains_key(*v)).collect();
        match inner_terms.as_slice() {
            [] => spans.push((a.clone(), a.plus(1))),
            [(v, 1)] => {
                let r = &inner[*v];
                let (Some(lo), Some(hi)) = (r.begin.as_affine(), r.end.as_affine()) else {
                    return Err(Error::not_applicable(T, format!("range of '{v}' is not affine")));
                };
                if varying(lo) || varying(hi) {
                    return Err(Error::not_applicable(T, format!("range of '{v}' depends on inner iterators")));
                }
                let rest = a.sub(&Affine::var(v));
                spans.push((rest.add(lo), rest.add(hi)));
            }
            _ => return Err(Error::not_applicable(T, format!("index '{a}' of dimension {d} is not a shifted iterator"))),
        }
    }
    let extreme = |xs: Vec<&Affine>, lowest: bool| -> Result<Affine> {
        xs.iter()
            .find(|c| {
                xs.iter().all(|x| match x.sub(c).as_constant() {
                    Some(k) => (lowest && k >= 0) || (!lowest && k <= 0),
                    None => false,
                })
            })
            .map(|c| (*c).clone())
            .ok_or_else(|| Error::not_applicable(T, format!("window of dimension {d} has no constant bounds")))
    };
    let start = extreme(spans.iter().map(|s| &s.0).collect(), true)?;
    let stop = extreme(spans.iter().map(|s| &s.1).collect(), false)?;
    let extent = SymbolicSize::from_affine(&stop.sub(&start))
        .ok_or_else(|| Error::not_applicable(T, format!("extent of dimension {d} is not a size")))?;
    Ok(Dim::Window { start, extent })
}
