//! C99 emission. One exported function per graph: pointer arguments for the
//! interface containers in declaration order, then `int nelv, int lx`. Every
//! size other than `nel` must already be a constant.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;

use crate::error::{Error, Result};
use crate::ir::expr::{is_identifier, Affine, Bound};
use crate::ir::graph::{CopyNode, DataContainer, DataflowGraph, MapScope, Node, NodePath, Schedule, Storage, SubsetDim, SymbolicSize, Tasklet, Wcr};
use crate::ir::tasklet::{format_const, Expr};
use crate::ir::validate::validate;

pub const DEFAULT_ENTRY: &str = "__dace_ax_helm";

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct EmitConfig {
    pub entry_symbol: String,
    /// Emit `#pragma omp parallel for` on outermost parallel maps.
    pub parallel_annotations: bool,
    pub restrict_aliasing: bool,
    /// Forbid floating-point contraction so results match the interpreter bit for bit.
    pub strict_fp: bool,
}

impl Default for EmitConfig {
    fn default() -> Self {
        EmitConfig {
            entry_symbol: DEFAULT_ENTRY.to_string(),
            parallel_annotations: true,
            restrict_aliasing: true,
            strict_fp: false,
        }
    }
}

const C_RESERVED: &[&str] = &[
    "auto", "break", "case", "char", "const", "continue", "default", "do", "double", "else", "enum", "extern",
    "float", "for", "goto", "if", "inline", "int", "long", "register", "restrict", "return", "short", "signed",
    "sizeof", "static", "struct", "switch", "typedef", "union", "unsigned", "void", "volatile", "while", "_Bool",
    "_Complex", "_Imaginary", "nel", "nelv", "lx", "malloc", "free", "MDG_MIN",
];

pub fn generate_source(g: &DataflowGraph, cfg: &EmitConfig) -> Result<String> {
    let plan = Plan::new(g, cfg)?;
    let mut e = Emitter { g, cfg, plan: &plan, out: String::new(), depth: 0, parallel_depth: 0, copies: 0 };
    e.source()?;
    Ok(e.out)
}

/// Declaration-only header for the exported function.
pub fn generate_interface_header(g: &DataflowGraph, cfg: &EmitConfig) -> Result<String> {
    let plan = Plan::new(g, cfg)?;
    let guard: String = cfg
        .entry_symbol
        .trim_start_matches('_')
        .chars()
        .map(|c| c.to_ascii_uppercase())
        .collect();
    let mut out = String::new();
    let _ = writeln!(out, "#ifndef MDG_{guard}_H");
    let _ = writeln!(out, "#define MDG_{guard}_H");
    out.push_str("\n#ifdef __cplusplus\nextern \"C\" {\n#endif\n\n");
    let _ = writeln!(out, "void {}({});", cfg.entry_symbol, plan.params(g, false));
    out.push_str("\n#ifdef __cplusplus\n}\n#endif\n\n");
    let _ = writeln!(out, "#endif");
    Ok(out)
}

enum Placement {
    Function,
    Map(NodePath),
}

struct Plan {
    interface: Vec<usize>,
    written: BTreeSet<String>,
    heap: Vec<usize>,
    local: Vec<(usize, Placement)>,
    uses_nel: bool,
}

impl Plan {
    fn new(g: &DataflowGraph, cfg: &EmitConfig) -> Result<Plan> {
        if let Some(d) = validate(g).first() {
            return Err(Error::Codegen(format!("graph is invalid: {d}")));
        }
        if !is_identifier(&cfg.entry_symbol) {
            return Err(Error::Codegen(format!("'{}' is not a valid entry symbol", cfg.entry_symbol)));
        }
        if let Some(s) = g.symbols.iter().find(|s| *s != "nel") {
            return Err(Error::Codegen(format!("unresolved symbol '{s}'; specialise it before code generation")));
        }
        for name in g.iterator_names().iter().chain(g.containers.iter().map(|c| &c.name)) {
            if C_RESERVED.contains(&name.as_str()) || name.starts_with("t_") || name.starts_with("cp_") {
                return Err(Error::Codegen(format!("name '{name}' is reserved in generated code")));
            }
        }

        let mut written = BTreeSet::new();
        for st in &g.states {
            for n in &st.nodes {
                n.writes(&mut written);
            }
        }
        let mut plan = Plan { interface: Vec::new(), written, heap: Vec::new(), local: Vec::new(), uses_nel: !g.symbols.is_empty() };
        let accesses = access_paths(g);
        for (i, c) in g.containers.iter().enumerate() {
            if !c.transient {
                plan.interface.push(i);
                continue;
            }
            match c.storage {
                Storage::HostHeap | Storage::DeviceGlobal => plan.heap.push(i),
                Storage::ScratchShared | Storage::RegisterTransient => {
                    if c.shape.iter().any(|d| d.as_constant().is_none()) {
                        return Err(Error::Codegen(format!("scratch container '{}' needs a constant shape", c.name)));
                    }
                    let paths = accesses.get(&c.name).map(Vec::as_slice).unwrap_or_default();
                    plan.local.push((i, place(g, &c.name, paths)?));
                }
            }
        }
        Ok(plan)
    }

    fn params(&self, g: &DataflowGraph, restrict: bool) -> String {
        let q = if restrict { "restrict " } else { "" };
        let mut parts: Vec<String> = self
            .interface
            .iter()
            .map(|&i| {
                let name = &g.containers[i].name;
                let konst = if self.written.contains(name) { "" } else { "const " };
                format!("{konst}double *{q}{name}")
            })
            .collect();
        parts.push("int nelv".into());
        parts.push("int lx".into());
        parts.join(", ")
    }
}

/// Paths of every tasklet and copy touching each container.
fn access_paths(g: &DataflowGraph) -> BTreeMap<String, Vec<NodePath>> {
    let mut out: BTreeMap<String, Vec<NodePath>> = BTreeMap::new();
    for (p, n) in g.all_nodes() {
        let names: Vec<&String> = match n {
            Node::Tasklet(t) => t.memlets().map(|m| &m.container).collect(),
            Node::Copy(c) => vec![&c.src, &c.dst],
            _ => continue,
        };
        for name in names {
            out.entry(name.clone()).or_default().push(p.clone());
        }
    }
    out
}

fn is_parallel(m: &MapScope) -> bool {
    matches!(m.schedule, Schedule::DeviceGrid | Schedule::CpuParallel)
}

/// Local containers live in the body of the outermost parallel map that
/// encloses all their accesses, so each iteration owns a private copy.
fn place(g: &DataflowGraph, name: &str, paths: &[NodePath]) -> Result<Placement> {
    let Some(first) = paths.first() else { return Ok(Placement::Function) };
    let mut common = first.path.len() - 1;
    for p in paths {
        if p.state != first.state {
            common = 0;
            break;
        }
        let shared = first.path.iter().zip(&p.path).take_while(|(a, b)| a == b).count();
        common = common.min(shared).min(p.path.len() - 1);
    }
    for len in 1..=common {
        let at = NodePath { state: first.state, path: first.path[..len].to_vec() };
        if let Some(Node::Map(m)) = g.node(&at) {
            if is_parallel(m) {
                return Ok(Placement::Map(at));
            }
        }
    }
    let inside_parallel = paths.iter().any(|p| g.ancestors(p).iter().any(|(_, n)| n.as_map().is_some_and(is_parallel)));
    if inside_parallel {
        return Err(Error::Codegen(format!("scratch container '{name}' is shared between parallel iterations")));
    }
    Ok(Placement::Function)
}

struct Emitter<'a> {
    g: &'a DataflowGraph,
    cfg: &'a EmitConfig,
    plan: &'a Plan,
    out: String,
    depth: usize,
    parallel_depth: usize,
    copies: usize,
}

fn size_expr(s: &SymbolicSize) -> String {
    match s {
        SymbolicSize::Constant(c) => c.to_string(),
        SymbolicSize::Symbol(n) => n.clone(),
    }
}

/// Fully parenthesised so C evaluates exactly the tree the interpreter does.
fn c_expr(e: &Expr) -> String {
    match e {
        Expr::Const(c) if c.is_sign_negative() => format!("({})", format_const(*c)),
        Expr::Const(c) => format_const(*c),
        Expr::Conn(c) => format!("t_{c}"),
        Expr::Neg(a) => format!("(-{})", c_expr(a)),
        Expr::Bin(op, a, b) => format!("({} {} {})", c_expr(a), op.symbol(), c_expr(b)),
    }
}

fn affine(a: &Affine) -> String {
    a.to_string()
}

fn bound(b: &Bound) -> String {
    match b {
        Bound::Affine(a) => affine(a),
        Bound::Min(a, c) => format!("MDG_MIN({}, {})", affine(a), affine(c)),
        Bound::CeilDiv(a, d) => format!("(({}) + {}) / {d}", affine(a), d - 1),
    }
}

impl Emitter<'_> {
    fn line(&mut self, text: &str) {
        for _ in 0..self.depth {
            self.out.push_str("    ");
        }
        self.out.push_str(text);
        self.out.push('\n');
    }

    fn source(&mut self) -> Result<()> {
        let cfg = self.cfg;
        let _ = writeln!(self.out, "/* generated from graph '{}' */", self.g.name);
        if cfg.strict_fp {
            self.out.push_str("#pragma STDC FP_CONTRACT OFF\n");
        }
        if !self.plan.heap.is_empty() {
            self.out.push_str("#include <stdlib.h>\n");
        }
        self.out.push_str("\n#define MDG_MIN(a, b) ((a) < (b) ? (a) : (b))\n\n");
        let params = self.plan.params(self.g, cfg.restrict_aliasing);
        let _ = writeln!(self.out, "void {}({})\n{{", cfg.entry_symbol, params);
        self.depth = 1;
        if self.plan.uses_nel {
            self.line("const long nel = nelv;");
        } else {
            self.line("(void)nelv;");
        }
        self.line("(void)lx;");

        let heap: Vec<&DataContainer> = self.plan.heap.iter().map(|&i| &self.g.containers[i]).collect();
        for c in &heap {
            let n = c.shape.iter().map(size_expr).collect::<Vec<_>>().join(" * ");
            let n = if n.is_empty() { "1".to_string() } else { n };
            self.line(&format!("double *{} = malloc(sizeof(double) * (size_t)({n}));", c.name));
        }
        if !heap.is_empty() {
            let cond = heap.iter().map(|c| format!("!{}", c.name)).collect::<Vec<_>>().join(" || ");
            self.line(&format!("if ({cond}) {{"));
            self.depth += 1;
            for c in &heap {
                self.line(&format!("free({});", c.name));
            }
            self.line("return;");
            self.depth -= 1;
            self.line("}");
        }
        self.declare_locals(|p| matches!(p, Placement::Function));

        for (s, st) in self.g.states.iter().enumerate() {
            self.line(&format!("/* state '{}' */", st.label));
            self.nodes(&st.nodes, &NodePath { state: s, path: Vec::new() })?;
        }
        for c in &heap {
            self.line(&format!("free({});", c.name));
        }
        self.out.push_str("}\n");
        Ok(())
    }

    fn declare_locals(&mut self, here: impl Fn(&Placement) -> bool) {
        let plan = self.plan;
        for (i, p) in &plan.local {
            if !here(p) {
                continue;
            }
            let c = &self.g.containers[*i];
            if c.shape.is_empty() {
                self.line(&format!("double {};", c.name));
            } else {
                let n: u64 = c.shape.iter().filter_map(SymbolicSize::as_constant).product();
                self.line(&format!("double {}[{n}];", c.name));
            }
        }
    }

    fn nodes(&mut self, nodes: &[Node], base: &NodePath) -> Result<()> {
        for (i, n) in nodes.iter().enumerate() {
            let at = base.child(i);
            match n {
                Node::Map(m) => self.map(m, &at)?,
                Node::For(f) => {
                    self.line(&format!(
                        "for (long {v} = {}; {v} < {}; ++{v}) {{",
                        bound(&f.range.begin),
                        bound(&f.range.end),
                        v = f.var
                    ));
                    self.depth += 1;
                    self.nodes(&f.body, &at)?;
                    self.depth -= 1;
                    self.line("}");
                }
                Node::Tasklet(t) => self.tasklet(t),
                Node::Copy(c) => self.copy(c),
            }
        }
        Ok(())
    }

    fn map(&mut self, m: &MapScope, at: &NodePath) -> Result<()> {
        let annotate = self.cfg.parallel_annotations && is_parallel(m) && self.parallel_depth == 0;
        if annotate {
            let collapse = if m.params.len() > 1 { format!(" collapse({})", m.params.len()) } else { String::new() };
            self.line(&format!("#pragma omp parallel for{collapse}"));
        }
        for (p, r) in m.params.iter().zip(&m.ranges) {
            self.line(&format!("for (long {p} = {}; {p} < {}; ++{p}) {{", bound(&r.begin), bound(&r.end)));
            self.depth += 1;
        }
        self.parallel_depth += usize::from(annotate);
        self.declare_locals(|p| matches!(p, Placement::Map(q) if q == at));
        self.nodes(&m.body, at)?;
        self.parallel_depth -= usize::from(annotate);
        for _ in &m.params {
            self.depth -= 1;
            self.line("}");
        }
        Ok(())
    }

    /// `container[...]` for a point given per-dimension index expressions.
    fn element(&self, container: &str, index: &[Affine]) -> String {
        let c = self.g.container(container).expect("validated");
        if c.shape.is_empty() {
            return c.name.clone();
        }
        let dims: Vec<Option<i64>> = c.shape.iter().map(|d| d.as_constant().map(|x| x as i64)).collect();
        let mut strides = vec![Some(1i64); dims.len()];
        for d in (0..dims.len().saturating_sub(1)).rev() {
            strides[d] = match (strides[d + 1], dims[d + 1]) {
                (Some(s), Some(x)) => Some(s * x),
                _ => None,
            };
        }
        if strides.iter().all(Option::is_some) {
            let flat = index
                .iter()
                .zip(&strides)
                .fold(Affine::constant(0), |acc, (a, s)| acc.add(&a.scale(s.unwrap())));
            return format!("{}[{}]", c.name, affine(&flat));
        }
        // Horner form when a stride is symbolic
        let mut expr = format!("({})", affine(&index[0]));
        for (a, d) in index.iter().zip(&c.shape).skip(1) {
            expr = format!("({expr} * {} + {})", size_expr(d), affine(a));
        }
        format!("{}[{expr}]", c.name)
    }

    fn tasklet(&mut self, t: &Tasklet) {
        self.line(&format!("{{ /* {} */", t.label));
        self.depth += 1;
        for c in &t.ins {
            let src = self.element(&c.memlet.container, &c.memlet.subset);
            self.line(&format!("const double t_{} = {src};", c.name));
        }
        for c in &t.outs {
            self.line(&format!("double t_{};", c.name));
        }
        for s in &t.body.0 {
            self.line(&format!("t_{} = {};", s.target, c_expr(&s.value)));
        }
        for c in &t.outs {
            let dst = self.element(&c.memlet.container, &c.memlet.subset);
            let op = if c.memlet.wcr == Wcr::Sum { "+=" } else { "=" };
            self.line(&format!("{dst} {op} t_{};", c.name));
        }
        self.depth -= 1;
        self.line("}");
    }

    fn copy(&mut self, c: &CopyNode) {
        let extents: Vec<String> = CopyNode::extents(&c.src_subset).into_iter().map(size_expr).collect();
        let n = self.copies;
        self.copies += 1;
        let vars: Vec<String> = (0..extents.len()).map(|d| format!("cp_{n}_{d}")).collect();
        self.line(&format!("/* copy {} -> {} */", c.src, c.dst));
        let open = self.depth;
        for (v, e) in vars.iter().zip(&extents) {
            self.line(&format!("for (long {v} = 0; {v} < {e}; ++{v}) {{"));
            self.depth += 1;
        }
        let index = |subset: &[SubsetDim]| -> Vec<Affine> {
            let mut k = 0;
            subset
                .iter()
                .map(|d| match d {
                    SubsetDim::Index(a) => a.clone(),
                    SubsetDim::Range { start, .. } => {
                        k += 1;
                        start.add(&Affine::var(&vars[k - 1]))
                    }
                })
                .collect()
        };
        let src = self.element(&c.src, &index(&c.src_subset));
        let dst = self.element(&c.dst, &index(&c.dst_subset));
        self.line(&format!("{dst} = {src};"));
        while self.depth > open {
            self.depth -= 1;
            self.line("}");
        }
    }
}
