use std::collections::BTreeMap;

use super::{finish, fresh_name, map_ref, rewrite_affines, taken_names};
use crate::error::{Error, Result};
use crate::ir::expr::Affine;
use crate::ir::graph::{DataflowGraph, ForLoop, MapScope, Node, NodePath, Schedule, Storage, SubsetDim};

/// Replace a multi-parameter map by a nest of single-parameter maps.
pub fn map_expansion(g: &DataflowGraph, at: &NodePath) -> Result<DataflowGraph> {
    const T: &str = "map_expansion";
    let m = map_ref(g, at, T)?;
    if m.params.len() < 2 {
        return Err(Error::not_applicable(T, "map has a single parameter"));
    }
    let mut body = m.body.clone();
    for (n, (p, r)) in m.params.iter().zip(&m.ranges).enumerate().rev() {
        let schedule = if n == 0 { m.schedule } else { Schedule::Sequential };
        body = vec![Node::Map(MapScope { params: vec![p.clone()], ranges: vec![r.clone()], schedule, body })];
    }
    let mut out = g.clone();
    *out.node_mut(at).unwrap() = body.pop().unwrap();
    finish(T, out)
}

/// Merge `inner`, the only child of `outer`, into `outer`.
pub fn map_collapse(g: &DataflowGraph, outer: &NodePath, inner: &NodePath) -> Result<DataflowGraph> {
    const T: &str = "map_collapse";
    let o = map_ref(g, outer, T)?;
    let i = map_ref(g, inner, T)?;
    if *inner != outer.child(0) || o.body.len() != 1 {
        return Err(Error::not_applicable(T, "maps are not perfectly nested"));
    }
    if let Some(p) = o.params.iter().find(|p| i.ranges.iter().any(|r| r.uses(p))) {
        return Err(Error::not_applicable(T, format!("inner range depends on outer parameter '{p}'")));
    }
    let merged = MapScope {
        params: o.params.iter().chain(&i.params).cloned().collect(),
        ranges: o.ranges.iter().chain(&i.ranges).cloned().collect(),
        schedule: o.schedule,
        body: i.body.clone(),
    };
    let mut out = g.clone();
    *out.node_mut(outer).unwrap() = Node::Map(merged);
    finish(T, out)
}

#[derive(Default)]
struct Touches {
    /// Per-access index dimensions; `None` for a range dimension of a copy.
    accesses: Vec<Vec<Option<Affine>>>,
    read: bool,
    written: bool,
}

fn collect_touches(nodes: &[Node], out: &mut BTreeMap<String, Touches>) {
    for n in nodes {
        n.walk(&mut |n| match n {
            Node::Tasklet(t) => {
                for c in &t.ins {
                    let e = out.entry(c.memlet.container.clone()).or_default();
                    e.read = true;
                    e.accesses.push(c.memlet.subset.iter().cloned().map(Some).collect());
                }
                for c in &t.outs {
                    let e = out.entry(c.memlet.container.clone()).or_default();
                    e.written = true;
                    e.read |= c.memlet.wcr != crate::ir::graph::Wcr::None;
                    e.accesses.push(c.memlet.subset.iter().cloned().map(Some).collect());
                }
            }
            Node::Copy(c) => {
                let dims = |s: &[SubsetDim]| -> Vec<Option<Affine>> {
                    s.iter()
                        .map(|d| match d {
                            SubsetDim::Index(a) => Some(a.clone()),
                            SubsetDim::Range { .. } => None,
                        })
                        .collect()
                };
                let e = out.entry(c.src.clone()).or_default();
                e.read = true;
                e.accesses.push(dims(&c.src_subset));
                let e = out.entry(c.dst.clone()).or_default();
                e.written = true;
                e.accesses.push(dims(&c.dst_subset));
            }
            _ => {}
        });
    }
}

/// For every parameter, a dimension indexed by exactly that parameter in
/// every access.
fn param_dims(params: &[String], accesses: &[Vec<Option<Affine>>]) -> Option<Vec<usize>> {
    let rank = accesses.first()?.len();
    let mut dims = Vec::new();
    for p in params {
        let v = Affine::var(p);
        let d = (0..rank).find(|&d| !dims.contains(&d) && accesses.iter().all(|a| a[d].as_ref() == Some(&v)))?;
        dims.push(d);
    }
    Some(dims)
}

/// Fuse two consecutive sibling maps with identical ranges.
pub fn map_fusion(g: &DataflowGraph, first: &NodePath, second: &NodePath) -> Result<DataflowGraph> {
    const T: &str = "map_fusion";
    let a = map_ref(g, first, T)?;
    let b = map_ref(g, second, T)?;
    let consecutive = first.parent() == second.parent()
        && first.path.last().map(|i| i + 1) == second.path.last().copied();
    if !consecutive {
        return Err(Error::not_applicable(T, "maps are not consecutive siblings"));
    }
    if a.ranges != b.ranges {
        return Err(Error::not_applicable(
            T,
            format!("ranges differ: [{}] vs [{}]", fmt_ranges(a), fmt_ranges(b)),
        ));
    }

    let mut body_b = b.body.clone();
    let mut taken = taken_names(g);
    let temps: Vec<String> = b.params.iter().map(|p| fresh_name(&format!("{p}_fuse"), &mut taken)).collect();
    for (pb, tmp) in b.params.iter().zip(&temps) {
        rewrite_affines(&mut body_b, &|x| x.rename(pb, tmp));
    }
    for (tmp, pa) in temps.iter().zip(&a.params) {
        rewrite_affines(&mut body_b, &|x| x.rename(tmp, pa));
    }

    let mut ta = BTreeMap::new();
    let mut tb = BTreeMap::new();
    collect_touches(&a.body, &mut ta);
    collect_touches(&body_b, &mut tb);
    for (name, x) in &ta {
        let Some(y) = tb.get(name) else { continue };
        if !(x.written || y.written) {
            continue;
        }
        let all: Vec<_> = x.accesses.iter().chain(&y.accesses).cloned().collect();
        if param_dims(&a.params, &all).is_none() {
            return Err(Error::not_applicable(T, format!("container '{name}' is not accessed pointwise")));
        }
    }

    let mut fused_body = a.body.clone();
    fused_body.extend(body_b);
    let fused = MapScope { params: a.params.clone(), ranges: a.ranges.clone(), schedule: a.schedule, body: fused_body };

    let mut out = g.clone();
    let idx = *second.path.last().unwrap();
    out.sibling_list_mut(second).unwrap().remove(idx);
    *out.node_mut(first).unwrap() = Node::Map(fused);
    demote_transients(&mut out, first);
    finish(T, out)
}

fn keep<T: Clone>(v: &[T], drop: &[usize]) -> Vec<T> {
    v.iter().enumerate().filter(|(d, _)| !drop.contains(d)).map(|(_, x)| x.clone()).collect()
}

fn fmt_ranges(m: &MapScope) -> String {
    m.ranges.iter().map(|r| format!("{}:{}", r.begin, r.end)).collect::<Vec<_>>().join(", ")
}

/// Shrink transients used only inside the map at `at`, and only at the
/// current iteration's slice, to one slice of scratch storage.
fn demote_transients(g: &mut DataflowGraph, at: &NodePath) {
    let m = g.map_at(at).unwrap().clone();
    let mut inside = BTreeMap::new();
    collect_touches(&m.body, &mut inside);
    let mut everywhere = BTreeMap::new();
    for st in &g.states {
        collect_touches(&st.nodes, &mut everywhere);
    }

    let mut plan = Vec::new();
    for c in &g.containers {
        if !c.transient || matches!(c.storage, Storage::ScratchShared | Storage::RegisterTransient) {
            continue;
        }
        let (Some(x), Some(all)) = (inside.get(&c.name), everywhere.get(&c.name)) else { continue };
        if x.accesses.len() != all.accesses.len() || x.accesses.iter().flatten().any(Option::is_none) {
            continue;
        }
        if let Some(dims) = param_dims(&m.params, &x.accesses) {
            plan.push((c.name.clone(), dims));
        }
    }

    for (name, dims) in plan {
        let c = g.container_mut(&name).unwrap();
        c.shape = keep(&c.shape, &dims);
        c.storage = if c.shape.is_empty() { Storage::RegisterTransient } else { Storage::ScratchShared };
        let body = g.node_mut(at).unwrap().body_mut().unwrap();
        for n in body.iter_mut() {
            n.walk_mut(&mut |n| match n {
                Node::Tasklet(t) => {
                    for mm in t.memlets_mut().filter(|mm| mm.container == name) {
                        mm.subset = keep(&mm.subset, &dims);
                    }
                }
                Node::Copy(c) => {
                    if c.src == name {
                        c.src_subset = keep(&c.src_subset, &dims);
                    }
                    if c.dst == name {
                        c.dst_subset = keep(&c.dst_subset, &dims);
                    }
                }
                _ => {}
            });
        }
    }
}

/// Turn a single-parameter map into a sequential loop.
pub fn map_to_for_loop(g: &DataflowGraph, at: &NodePath) -> Result<DataflowGraph> {
    const T: &str = "map_to_for_loop";
    let m = map_ref(g, at, T)?;
    if m.params.len() != 1 {
        return Err(Error::not_applicable(T, format!("map has {} parameters", m.params.len())));
    }
    let lp = ForLoop { var: m.params[0].clone(), range: m.ranges[0].clone(), body: m.body.clone() };
    let mut out = g.clone();
    *out.node_mut(at).unwrap() = Node::For(lp);
    finish(T, out)
}

pub fn set_schedule(g: &DataflowGraph, at: &NodePath, schedule: Schedule) -> Result<DataflowGraph> {
    const T: &str = "set_schedule";
    map_ref(g, at, T)?;
    let mut out = g.clone();
    out.node_mut(at).unwrap().as_map_mut().unwrap().schedule = schedule;
    finish(T, out)
}

/// Outermost maps run on the device grid and interface containers live in
/// device memory.
pub fn apply_device_transformations(g: &DataflowGraph) -> Result<DataflowGraph> {
    const T: &str = "apply_device_transformations";
    fn rec(nodes: &mut [Node]) {
        for n in nodes {
            match n {
                Node::Map(m) => m.schedule = Schedule::DeviceGrid,
                Node::For(f) => rec(&mut f.body),
                _ => {}
            }
        }
    }
    let mut out = g.clone();
    for st in &mut out.states {
        rec(&mut st.nodes);
    }
    for c in out.containers.iter_mut().filter(|c| !c.transient) {
        c.storage = Storage::DeviceGlobal;
    }
    finish(T, out)
}
