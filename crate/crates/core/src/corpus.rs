//! Named pass sequences over the Ax program covering every transform, both
//! where it applies and where it must refuse.

use crate::error::Result;
use crate::ir::{build_ax_program, specialize_symbol, DataflowGraph, State, SymbolicSize};
use crate::transforms::{ax_recipe, PassRecipe};

const EXPAND_COLLAPSE: &str = "map_expansion map=e\nmap_collapse outer=j inner=i\nmap_collapse outer=k inner=j\n";
const EXPAND_COLLAPSE_2: &str = "map_expansion map=e2\nmap_collapse outer=j2 inner=i2\nmap_collapse outer=k2 inner=j2\n";

/// `(label, recipe)` pairs that must apply cleanly to the specialised Ax graph.
pub fn applicable_cases(lx: i64) -> Vec<(String, String)> {
    let mut cases: Vec<(&str, String)> = vec![
        ("identity", String::new()),
        ("map_expansion", "map_expansion map=e".into()),
        ("map_expansion_second", "map_expansion map=e2".into()),
        ("map_collapse", EXPAND_COLLAPSE.into()),
        ("map_collapse_second", EXPAND_COLLAPSE_2.into()),
        ("map_tiling", "map_tiling map=e tiles=1,2,2,2".into()),
        ("map_tiling_second", format!("map_tiling map=e2 tiles=2,{lx},3,1")),
        ("strip_mining", "strip_mining map=e param=i strip=2".into()),
        ("strip_mining_full", format!("strip_mining map=e2 param=k2 strip={lx}")),
        ("warp_tiling", format!("{EXPAND_COLLAPSE}warp_tiling map=k width=2")),
        ("warp_tiling_top", "warp_tiling map=e2 width=3".into()),
        ("warp_tiling_unit", "map_expansion map=e\nwarp_tiling map=i width=1".into()),
        ("local_storage_field", format!("{EXPAND_COLLAPSE}local_storage array=ud outer=e inner=k")),
        ("local_storage_matrix", format!("{EXPAND_COLLAPSE_2}local_storage array=dxtd outer=e2 inner=k2")),
        ("local_storage_metric", format!("{EXPAND_COLLAPSE}local_storage array=g12d outer=e inner=k")),
        ("map_to_for_loop", "map_expansion map=e\nmap_to_for_loop map=i".into()),
        ("map_to_for_loop_outer", "map_expansion map=e2\nmap_to_for_loop map=e2".into()),
        ("apply_device_transformations", "apply_device_transformations\napply_device_transformations".into()),
        ("set_schedule", "map_expansion map=e\nset_schedule map=k schedule=DeviceBlock".into()),
        ("set_schedule_cpu", "set_schedule map=e2 schedule=CpuParallel".into()),
        ("map_fusion", format!("{EXPAND_COLLAPSE}{EXPAND_COLLAPSE_2}map_fusion first=e second=e2")),
        ("simplify", "simplify".into()),
        ("tiling_then_fusion", format!("{EXPAND_COLLAPSE}{EXPAND_COLLAPSE_2}map_fusion first=e second=e2\nmap_tiling map=k tiles=2,2,2")),
        ("recipe", ax_recipe(lx, false).to_string()),
    ];
    cases.sort_by_key(|c| c.0);
    cases.into_iter().map(|(l, r)| (l.to_string(), r)).collect()
}

/// `(label, recipe)` pairs whose last pass must fail its precondition.
pub fn refused_cases() -> Vec<(String, String)> {
    [
        ("map_expansion_single", "map_expansion map=e\nmap_expansion map=e"),
        ("map_collapse_not_nested", "map_expansion map=e\nmap_collapse outer=k inner=i"),
        ("map_fusion_not_pointwise", "map_fusion first=e second=e2"),
        ("map_fusion_not_adjacent", "map_expansion map=e\nmap_expansion map=e2\nmap_fusion first=i second=e2"),
        ("map_tiling_arity", "map_tiling map=e tiles=2,2"),
        ("strip_mining_zero", "strip_mining map=e param=i strip=0"),
        ("strip_mining_unknown_param", "strip_mining map=e param=i2 strip=2"),
        ("warp_tiling_no_grid", "set_schedule map=e schedule=Sequential\nwarp_tiling map=e width=2"),
        ("local_storage_written", "map_expansion map=e\nmap_collapse outer=j inner=i\nmap_collapse outer=k inner=j\nlocal_storage array=rtmp outer=e inner=k"),
        ("local_storage_not_nested", "local_storage array=ud outer=e inner=e2"),
        ("map_to_for_loop_multi", "map_to_for_loop map=e"),
        ("set_schedule_block_top", "set_schedule map=e schedule=DeviceBlock"),
        ("state_fusion_single", "state_fusion first=0 second=1"),
    ]
    .into_iter()
    .map(|(l, r)| (l.to_string(), r.to_string()))
    .collect()
}

/// The Ax program with `lx` fixed and `nel` symbolic.
pub fn ax_base(lx: i64) -> DataflowGraph {
    let g = build_ax_program(&SymbolicSize::sym("lx"), &SymbolicSize::sym("nel"));
    specialize_symbol(&g, "lx", lx).expect("ax graph has lx")
}

/// The same program with each element map in its own state.
pub fn ax_two_states(lx: i64) -> DataflowGraph {
    let mut g = ax_base(lx);
    let second = g.states[0].nodes.pop().unwrap();
    g.states.push(State { label: "contract".into(), nodes: vec![second] });
    g
}

/// Every applicable case applied to [`ax_base`], plus state fusion and
/// simplification of [`ax_two_states`].
pub fn ax_corpus(lx: i64) -> Result<Vec<(String, DataflowGraph)>> {
    let base = ax_base(lx);
    let mut out = Vec::new();
    for (label, recipe) in applicable_cases(lx) {
        out.push((label, PassRecipe::parse(&recipe)?.apply(&base)?));
    }
    let split = ax_two_states(lx);
    out.push(("two_states".into(), split.clone()));
    out.push(("state_fusion".into(), PassRecipe::parse("state_fusion first=0 second=1")?.apply(&split)?));
    out.push(("simplify_states".into(), PassRecipe::parse("simplify")?.apply(&split)?));
    Ok(out)
}
