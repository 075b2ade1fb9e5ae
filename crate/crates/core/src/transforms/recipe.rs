use std::collections::BTreeMap;
use std::fmt;

use crate::error::{Error, Result};
use crate::ir::graph::{DataflowGraph, Node, NodePath, Schedule, Storage, SymbolicSize};
use crate::ir::symbols::{find_map_by_param, specialize_symbol};

use super::*;

/// Per-element-map scratch capacity, analogous to GPU shared memory.
pub const DEFAULT_SCRATCH_BUDGET: u64 = 64 * 1024;

/// One recipe step. Maps are named by one of their parameters.
#[derive(Debug, Clone, PartialEq)]
pub enum Pass {
    ApplyDeviceTransformations,
    MapExpansion { map: String },
    MapCollapse { outer: String, inner: String },
    MapFusion { first: String, second: String },
    MapTiling { map: String, tiles: Vec<i64> },
    StripMining { map: String, param: String, strip: i64 },
    WarpTiling { map: String, width: i64 },
    LocalStorage { array: String, outer: String, inner: String },
    StateFusion { first: usize, second: usize },
    MapToForLoop { map: String },
    SetSchedule { map: String, schedule: Schedule },
    SpecializeSymbol { name: String, value: i64 },
    Simplify,
}

impl Pass {
    pub fn name(&self) -> &'static str {
        match self {
            Pass::ApplyDeviceTransformations => "apply_device_transformations",
            Pass::MapExpansion { .. } => "map_expansion",
            Pass::MapCollapse { .. } => "map_collapse",
            Pass::MapFusion { .. } => "map_fusion",
            Pass::MapTiling { .. } => "map_tiling",
            Pass::StripMining { .. } => "strip_mining",
            Pass::WarpTiling { .. } => "warp_tiling",
            Pass::LocalStorage { .. } => "local_storage",
            Pass::StateFusion { .. } => "state_fusion",
            Pass::MapToForLoop { .. } => "map_to_for_loop",
            Pass::SetSchedule { .. } => "set_schedule",
            Pass::SpecializeSymbol { .. } => "specialize_symbol",
            Pass::Simplify => "simplify",
        }
    }

    fn args(&self) -> Vec<(&'static str, String)> {
        let s = |x: &String| x.clone();
        match self {
            Pass::ApplyDeviceTransformations | Pass::Simplify => vec![],
            Pass::MapExpansion { map } | Pass::MapToForLoop { map } => vec![("map", s(map))],
            Pass::MapCollapse { outer, inner } => vec![("outer", s(outer)), ("inner", s(inner))],
            Pass::MapFusion { first, second } => vec![("first", s(first)), ("second", s(second))],
            Pass::MapTiling { map, tiles } => vec![
                ("map", s(map)),
                ("tiles", tiles.iter().map(i64::to_string).collect::<Vec<_>>().join(",")),
            ],
            Pass::StripMining { map, param, strip } => {
                vec![("map", s(map)), ("param", s(param)), ("strip", strip.to_string())]
            }
            Pass::WarpTiling { map, width } => vec![("map", s(map)), ("width", width.to_string())],
            Pass::LocalStorage { array, outer, inner } => {
                vec![("array", s(array)), ("outer", s(outer)), ("inner", s(inner))]
            }
            Pass::StateFusion { first, second } => vec![("first", first.to_string()), ("second", second.to_string())],
            Pass::SetSchedule { map, schedule } => vec![("map", s(map)), ("schedule", schedule.to_string())],
            Pass::SpecializeSymbol { name, value } => vec![("name", s(name)), ("value", value.to_string())],
        }
    }

    pub fn apply(&self, g: &DataflowGraph) -> Result<DataflowGraph> {
        let map = |p: &str| find_map_by_param(g, p);
        match self {
            Pass::ApplyDeviceTransformations => apply_device_transformations(g),
            Pass::MapExpansion { map: m } => map_expansion(g, &map(m)?),
            Pass::MapCollapse { outer, inner } => map_collapse(g, &map(outer)?, &map(inner)?),
            Pass::MapFusion { first, second } => map_fusion(g, &map(first)?, &map(second)?),
            Pass::MapTiling { map: m, tiles } => map_tiling(g, &map(m)?, tiles),
            Pass::StripMining { map: m, param, strip } => strip_mining(g, &map(m)?, param, *strip),
            Pass::WarpTiling { map: m, width } => warp_tiling(g, &map(m)?, *width),
            Pass::LocalStorage { array, outer, inner } => local_storage(g, array, &map(outer)?, &map(inner)?),
            Pass::StateFusion { first, second } => state_fusion(g, *first, *second),
            Pass::MapToForLoop { map: m } => map_to_for_loop(g, &map(m)?),
            Pass::SetSchedule { map: m, schedule } => set_schedule(g, &map(m)?, *schedule),
            Pass::SpecializeSymbol { name, value } => specialize_symbol(g, name, *value),
            Pass::Simplify => simplify(g),
        }
    }

    fn parse_line(line: &str) -> std::result::Result<Pass, String> {
        let mut words = line.split_whitespace();
        let name = words.next().ok_or("empty pass")?;
        let mut args = BTreeMap::new();
        for w in words {
            let (k, v) = w.split_once('=').ok_or_else(|| format!("expected key=value, got '{w}'"))?;
            if args.insert(k, v).is_some() {
                return Err(format!("duplicate key '{k}'"));
            }
        }
        let mut take = |k: &str| args.remove(k).map(str::to_string).ok_or_else(|| format!("{name}: missing '{k}'"));
        fn int<N: std::str::FromStr>(k: &str, v: String) -> std::result::Result<N, String> {
            v.parse().map_err(|_| format!("'{k}' must be an integer, got '{v}'"))
        }
        let pass = match name {
            "apply_device_transformations" => Pass::ApplyDeviceTransformations,
            "simplify" => Pass::Simplify,
            "map_expansion" => Pass::MapExpansion { map: take("map")? },
            "map_to_for_loop" => Pass::MapToForLoop { map: take("map")? },
            "map_collapse" => Pass::MapCollapse { outer: take("outer")?, inner: take("inner")? },
            "map_fusion" => Pass::MapFusion { first: take("first")?, second: take("second")? },
            "map_tiling" => {
                let map = take("map")?;
                let tiles = take("tiles")?
                    .split(',')
                    .map(|t| int("tiles", t.to_string()))
                    .collect::<std::result::Result<_, _>>()?;
                Pass::MapTiling { map, tiles }
            }
            "strip_mining" => {
                Pass::StripMining { map: take("map")?, param: take("param")?, strip: int("strip", take("strip")?)? }
            }
            "warp_tiling" => Pass::WarpTiling { map: take("map")?, width: int("width", take("width")?)? },
            "local_storage" => {
                Pass::LocalStorage { array: take("array")?, outer: take("outer")?, inner: take("inner")? }
            }
            "state_fusion" => {
                Pass::StateFusion { first: int("first", take("first")?)?, second: int("second", take("second")?)? }
            }
            "set_schedule" => {
                let map = take("map")?;
                let s = take("schedule")?;
                let schedule = Schedule::from_name(&s).ok_or_else(|| format!("unknown schedule '{s}'"))?;
                Pass::SetSchedule { map, schedule }
            }
            "specialize_symbol" => Pass::SpecializeSymbol { name: take("name")?, value: int("value", take("value")?)? },
            other => return Err(format!("unknown pass '{other}'")),
        };
        if let Some(k) = args.keys().next() {
            return Err(format!("{name}: unexpected key '{k}'"));
        }
        Ok(pass)
    }
}

impl fmt::Display for Pass {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())?;
        for (k, v) in self.args() {
            write!(f, " {k}={v}")?;
        }
        Ok(())
    }
}

/// An ordered pass list. Text form: one `name key=value ...` line per pass;
/// blank lines and lines starting with `#` are ignored.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct PassRecipe {
    pub passes: Vec<Pass>,
}

impl PassRecipe {
    pub fn parse(text: &str) -> Result<PassRecipe> {
        let mut passes = Vec::new();
        let mut offset = 0;
        for (n, raw) in text.split_inclusive('\n').enumerate() {
            let line = raw.trim();
            if !line.is_empty() && !line.starts_with('#') {
                let pass = Pass::parse_line(line)
                    .map_err(|m| Error::Parse { offset, message: format!("line {}: {m}", n + 1) })?;
                passes.push(pass);
            }
            offset += raw.len();
        }
        Ok(PassRecipe { passes })
    }

    /// Run every pass in order. Failures report the 1-based step.
    pub fn apply(&self, g: &DataflowGraph) -> Result<DataflowGraph> {
        let mut cur = g.clone();
        for (n, pass) in self.passes.iter().enumerate() {
            cur = pass.apply(&cur).map_err(|e| at_step(e, pass.name(), n + 1))?;
        }
        Ok(cur)
    }
}

impl fmt::Display for PassRecipe {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for p in &self.passes {
            writeln!(f, "{p}")?;
        }
        Ok(())
    }
}

fn at_step(e: Error, transform: &str, step: usize) -> Error {
    let reason = match e {
        Error::Applicability { reason, .. } => reason,
        other => other.to_string(),
    };
    Error::Applicability { transform: transform.to_string(), reason, step: Some(step) }
}

/// The two-phase shared-memory recipe for the Ax program. The
/// specialisation step is left out when `lx` is already a constant.
pub fn ax_recipe(lx: i64, specialize: bool) -> PassRecipe {
    let s = |x: &str| x.to_string();
    let mut passes = vec![
        Pass::ApplyDeviceTransformations,
        Pass::MapExpansion { map: s("e") },
        Pass::MapCollapse { outer: s("j"), inner: s("i") },
        Pass::MapCollapse { outer: s("k"), inner: s("j") },
    ];
    if specialize {
        passes.push(Pass::SpecializeSymbol { name: s("lx"), value: lx });
    }
    passes.push(Pass::SetSchedule { map: s("k"), schedule: Schedule::DeviceBlock });
    for arr in ["ud", "dxd", "dyd", "dzd"] {
        passes.push(Pass::LocalStorage { array: s(arr), outer: s("e"), inner: s("k") });
    }
    passes.extend([
        Pass::MapExpansion { map: s("e2") },
        Pass::MapCollapse { outer: s("j2"), inner: s("i2") },
        Pass::MapCollapse { outer: s("k2"), inner: s("j2") },
        Pass::SetSchedule { map: s("k2"), schedule: Schedule::DeviceBlock },
    ]);
    for arr in ["dxtd", "dytd", "dztd"] {
        passes.push(Pass::LocalStorage { array: s(arr), outer: s("e2"), inner: s("k2") });
    }
    passes.push(Pass::MapFusion { first: s("e"), second: s("e2") });
    passes.push(Pass::Simplify);
    PassRecipe { passes }
}

pub fn ax_optimization_recipe(g: &DataflowGraph, lx: i64) -> Result<DataflowGraph> {
    let symbolic = g.symbols.iter().any(|s| s == "lx");
    if !symbolic {
        let want = SymbolicSize::Constant(lx.max(0) as u64);
        let built = g.container("ud").map(|c| c.shape.iter().skip(1).all(|d| *d == want));
        if built != Some(true) {
            return Err(Error::Applicability {
                transform: "specialize_symbol".into(),
                reason: format!("graph has no symbol 'lx' and was not built for lx={lx}"),
                step: Some(1),
            });
        }
    }
    ax_recipe(lx, symbolic).apply(g)
}

/// Warnings for top-level maps whose scratch containers exceed `budget`
/// bytes, or whose scratch size is not statically known.
pub fn scratch_report(g: &DataflowGraph, budget: u64) -> Vec<String> {
    let mut out = Vec::new();
    for (s, st) in g.states.iter().enumerate() {
        for (i, n) in st.nodes.iter().enumerate() {
            if !matches!(n, Node::Map(_)) {
                continue;
            }
            let mut used = std::collections::BTreeSet::new();
            n.reads(&mut used);
            n.writes(&mut used);
            let mut bytes = 0u64;
            for c in g.containers.iter().filter(|c| used.contains(&c.name)) {
                if !matches!(c.storage, Storage::ScratchShared) {
                    continue;
                }
                match c.shape.iter().map(SymbolicSize::as_constant).product::<Option<u64>>() {
                    Some(n) => bytes += n * 8,
                    None => out.push(format!("scratch container '{}' has a symbolic size", c.name)),
                }
            }
            if bytes > budget {
                let at = NodePath { state: s, path: vec![i] };
                out.push(format!("{} at {at} uses {bytes} bytes of scratch, budget is {budget}", n.describe()));
            }
        }
    }
    out
}
