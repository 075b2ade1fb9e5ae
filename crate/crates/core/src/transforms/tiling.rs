use super::{finish, fresh_name, map_ref, set_schedule, taken_names};
use crate::error::{Error, Result};
use crate::ir::expr::{Affine, Bound};
use crate::ir::graph::{DataflowGraph, MapScope, Node, NodePath, Range, Schedule};

/// Tile every parameter of a map; `tiles[n]` is the tile size of param `n`.
pub fn map_tiling(g: &DataflowGraph, at: &NodePath, tiles: &[i64]) -> Result<DataflowGraph> {
    let sizes: Vec<Option<i64>> = tiles.iter().copied().map(Some).collect();
    tile(g, at, &sizes, "map_tiling", Schedule::Sequential)
}

/// Tile a single parameter of a map.
pub fn strip_mining(g: &DataflowGraph, at: &NodePath, param: &str, strip: i64) -> Result<DataflowGraph> {
    const T: &str = "strip_mining";
    let m = map_ref(g, at, T)?;
    let pos = m
        .params
        .iter()
        .position(|p| p == param)
        .ok_or_else(|| Error::not_applicable(T, format!("map has no parameter '{param}'")))?;
    let mut sizes = vec![None; m.params.len()];
    sizes[pos] = Some(strip);
    tile(g, at, &sizes, T, Schedule::Sequential)
}

/// Strip-mine the innermost parameter and run the strip as a device block.
/// A width of 1 only changes the schedule of the map itself.
pub fn warp_tiling(g: &DataflowGraph, at: &NodePath, width: i64) -> Result<DataflowGraph> {
    const T: &str = "warp_tiling";
    let m = map_ref(g, at, T)?;
    if width == 1 {
        return set_schedule(g, at, Schedule::DeviceBlock).map_err(|e| rename(e, T));
    }
    let mut sizes = vec![None; m.params.len()];
    *sizes.last_mut().unwrap() = Some(width);
    tile(g, at, &sizes, T, Schedule::DeviceBlock)
}

fn rename(e: Error, transform: &str) -> Error {
    match e {
        Error::Applicability { reason, step, .. } => Error::Applicability { transform: transform.to_string(), reason, step },
        other => other,
    }
}

fn tile(g: &DataflowGraph, at: &NodePath, sizes: &[Option<i64>], t: &str, inner_schedule: Schedule) -> Result<DataflowGraph> {
    let m = map_ref(g, at, t)?;
    if sizes.len() != m.params.len() {
        return Err(Error::not_applicable(
            t,
            format!("{} tile sizes given for a map with {} parameters", sizes.len(), m.params.len()),
        ));
    }
    let mut taken = taken_names(g);
    let mut outer = MapScope { params: Vec::new(), ranges: Vec::new(), schedule: m.schedule, body: Vec::new() };
    let mut inner = MapScope { params: Vec::new(), ranges: Vec::new(), schedule: inner_schedule, body: m.body.clone() };
    for ((p, r), size) in m.params.iter().zip(&m.ranges).zip(sizes) {
        let Some(size) = *size else {
            outer.params.push(p.clone());
            outer.ranges.push(r.clone());
            continue;
        };
        if size < 1 {
            return Err(Error::not_applicable(t, format!("tile size {size} for '{p}' is not positive")));
        }
        let (Some(begin), Some(end)) = (r.begin.as_affine(), r.end.as_affine()) else {
            return Err(Error::not_applicable(t, format!("range of '{p}' is not affine")));
        };
        let extent = end.sub(begin);
        let tp = fresh_name(&format!("tile_{p}"), &mut taken);
        outer.params.push(tp.clone());
        outer.ranges.push(Range::new(Bound::constant(0), Bound::CeilDiv(extent.clone(), size).folded()));

        let start = begin.add(&Affine::term(&tp, size));
        let stop = start.plus(size);
        let exact = extent.as_constant().is_some_and(|c| c % size == 0);
        let stop = if exact { Bound::Affine(stop) } else { Bound::Min(stop, end.clone()).folded() };
        inner.params.push(p.clone());
        inner.ranges.push(Range::new(Bound::Affine(start), stop));
    }
    if inner.params.is_empty() {
        return Err(Error::not_applicable(t, "no parameter to tile"));
    }
    outer.body = vec![Node::Map(inner)];
    let mut out = g.clone();
    *out.node_mut(at).unwrap() = Node::Map(outer);
    finish(t, out)
}
