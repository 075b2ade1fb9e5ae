//! Structural checks. Each violation yields one diagnostic naming the node or
//! container and the rule it breaks; an empty list means the graph is valid.

use std::collections::BTreeSet;
use std::fmt;

use crate::ir::expr::{is_identifier, Affine, Bound};
use crate::ir::graph::{CopyNode, DataflowGraph, Node, NodePath, Range, Schedule, Storage, SubsetDim, SymbolicSize, Tasklet, Wcr};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Rule {
    InvalidIdentifier,
    DuplicateSymbol,
    DuplicateContainer,
    UnknownSymbol,
    InterfaceStorage,
    MapArity,
    IteratorShadowing,
    UnboundIndexVariable,
    NegativeRange,
    UnknownContainer,
    SubsetRank,
    ConnectorMismatch,
    OutputAssignment,
    NonFiniteConstant,
    WcrOnInput,
    CopyShape,
    UninitializedTransient,
    ScheduleNesting,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Diagnostic {
    pub location: String,
    pub rule: Rule,
    pub message: String,
}

impl fmt::Display for Diagnostic {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}: {:?}: {}", self.location, self.rule, self.message)
    }
}

pub fn validate(g: &DataflowGraph) -> Vec<Diagnostic> {
    let mut v = Validator { g, diags: Vec::new(), symbols: BTreeSet::new(), written: BTreeSet::new(), reported_uninit: BTreeSet::new() };
    v.run();
    v.diags
}

struct Validator<'a> {
    g: &'a DataflowGraph,
    diags: Vec<Diagnostic>,
    symbols: BTreeSet<&'a str>,
    written: BTreeSet<String>,
    reported_uninit: BTreeSet<String>,
}

#[derive(Clone, Default)]
struct Scope<'a> {
    vars: Vec<&'a str>,
    in_grid: bool,
    in_device: bool,
}

impl<'a> Validator<'a> {
    fn push(&mut self, location: impl Into<String>, rule: Rule, message: impl Into<String>) {
        self.diags.push(Diagnostic { location: location.into(), rule, message: message.into() });
    }

    fn run(&mut self) {
        let g = self.g;
        for s in &g.symbols {
            if !is_identifier(s) {
                self.push(format!("symbol '{s}'"), Rule::InvalidIdentifier, "symbol name is not an identifier");
            }
            if !self.symbols.insert(s) {
                self.push(format!("symbol '{s}'"), Rule::DuplicateSymbol, "symbol declared twice");
            }
        }
        let mut seen = BTreeSet::new();
        for c in &g.containers {
            let loc = format!("container '{}'", c.name);
            if !is_identifier(&c.name) {
                self.push(&loc, Rule::InvalidIdentifier, "container name is not an identifier");
            }
            if !seen.insert(c.name.as_str()) {
                self.push(&loc, Rule::DuplicateContainer, "container declared twice");
            }
            if !c.transient && matches!(c.storage, Storage::ScratchShared | Storage::RegisterTransient) {
                self.push(&loc, Rule::InterfaceStorage, format!("non-transient container cannot use {} storage", c.storage));
            }
            for d in &c.shape {
                if let SymbolicSize::Symbol(s) = d {
                    if !self.symbols.contains(s.as_str()) {
                        self.push(&loc, Rule::UnknownSymbol, format!("shape uses undeclared symbol '{s}'"));
                    }
                }
            }
        }
        for (si, st) in g.states.iter().enumerate() {
            let base = NodePath { state: si, path: Vec::new() };
            self.nodes(&st.nodes, &base, &Scope::default());
        }
    }

    fn nodes(&mut self, list: &'a [Node], base: &NodePath, scope: &Scope<'a>) {
        for (i, n) in list.iter().enumerate() {
            let at = base.child(i);
            let loc = format!("{at} {}", n.describe());
            match n {
                Node::Map(m) => {
                    if m.params.is_empty() || m.params.len() != m.ranges.len() {
                        self.push(&loc, Rule::MapArity, format!("{} params but {} ranges", m.params.len(), m.ranges.len()));
                    }
                    for r in &m.ranges {
                        self.range(&loc, r, scope);
                    }
                    let mut inner = scope.clone();
                    self.declare(&loc, m.params.iter().map(String::as_str), &mut inner);
                    match m.schedule {
                        Schedule::DeviceBlock if !scope.in_grid => {
                            self.push(&loc, Rule::ScheduleNesting, "DeviceBlock map outside any DeviceGrid map")
                        }
                        Schedule::DeviceGrid if scope.in_device => {
                            self.push(&loc, Rule::ScheduleNesting, "DeviceGrid map nested in a device map")
                        }
                        _ => {}
                    }
                    inner.in_grid |= m.schedule == Schedule::DeviceGrid;
                    inner.in_device |= m.schedule.is_device();
                    self.nodes(&m.body, &at, &inner);
                }
                Node::For(f) => {
                    self.range(&loc, &f.range, scope);
                    let mut inner = scope.clone();
                    self.declare(&loc, std::iter::once(f.var.as_str()), &mut inner);
                    self.nodes(&f.body, &at, &inner);
                }
                Node::Tasklet(t) => self.tasklet(&loc, t, scope),
                Node::Copy(c) => self.copy(&loc, c, scope),
            }
        }
    }

    fn declare(&mut self, loc: &str, names: impl Iterator<Item = &'a str>, scope: &mut Scope<'a>) {
        let start = scope.vars.len();
        for p in names {
            if !is_identifier(p) {
                self.push(loc, Rule::InvalidIdentifier, format!("iterator '{p}' is not an identifier"));
            }
            if scope.vars.contains(&p) || self.symbols.contains(p) {
                let what = if scope.vars[start..].contains(&p) { "repeats" } else { "shadows" };
                self.push(loc, Rule::IteratorShadowing, format!("iterator '{p}' {what} an enclosing name"));
            }
            scope.vars.push(p);
        }
    }

    fn check_vars<'b>(&mut self, loc: &str, vars: impl Iterator<Item = &'b str>, scope: &Scope<'a>, what: &str) {
        for v in vars {
            if !scope.vars.contains(&v) && !self.symbols.contains(v) {
                self.push(loc, Rule::UnboundIndexVariable, format!("{what} uses '{v}', which is neither an enclosing iterator nor a symbol"));
            }
        }
    }

    fn range(&mut self, loc: &str, r: &Range, scope: &Scope<'a>) {
        for b in [&r.begin, &r.end] {
            let vars: Vec<&str> = b.vars().into_iter().collect();
            self.check_vars(loc, vars.into_iter(), scope, "range bound");
            if let Bound::CeilDiv(_, d) = b {
                if *d <= 0 {
                    self.push(loc, Rule::NegativeRange, "ceildiv divisor must be positive");
                }
            }
        }
        if let (Some(b), Some(e)) = (r.begin.as_constant(), r.end.as_constant()) {
            if e < b {
                self.push(loc, Rule::NegativeRange, format!("range [{b}, {e}) is negative"));
            }
        }
    }

    fn subset(&mut self, loc: &str, container: &str, rank: usize, exprs: &[&Affine], scope: &Scope<'a>) -> bool {
        let Some(c) = self.g.container(container) else {
            self.push(loc, Rule::UnknownContainer, format!("memlet references unknown container '{container}'"));
            return false;
        };
        if c.rank() != rank {
            self.push(loc, Rule::SubsetRank, format!("subset of '{container}' has {rank} dimensions, container has rank {}", c.rank()));
        }
        for a in exprs {
            self.check_vars(loc, a.vars(), scope, &format!("subset of '{container}'"));
        }
        true
    }

    fn read_transient(&mut self, loc: &str, container: &str) {
        let Some(c) = self.g.container(container) else { return };
        if c.transient && !self.written.contains(container) && self.reported_uninit.insert(container.to_string()) {
            self.push(loc, Rule::UninitializedTransient, format!("transient '{container}' is read before any write"));
        }
    }

    fn tasklet(&mut self, loc: &str, t: &'a Tasklet, scope: &Scope<'a>) {
        for c in t.ins.iter().chain(&t.outs) {
            let subset: Vec<&Affine> = c.memlet.subset.iter().collect();
            self.subset(loc, &c.memlet.container, subset.len(), &subset, scope);
        }
        for c in &t.ins {
            if c.memlet.wcr != Wcr::None {
                self.push(loc, Rule::WcrOnInput, format!("input connector '{}' carries a write-conflict resolution", c.name));
            }
        }
        let mut names = BTreeSet::new();
        for c in t.ins.iter().chain(&t.outs) {
            if !is_identifier(&c.name) || !names.insert(c.name.as_str()) {
                self.push(loc, Rule::ConnectorMismatch, format!("connector '{}' is invalid or declared twice", c.name));
            }
        }
        let inputs: BTreeSet<&str> = t.ins.iter().map(|c| c.name.as_str()).collect();
        for s in &t.body.0 {
            let mut bad = Vec::new();
            let mut nonfinite = false;
            fn consts(e: &crate::ir::tasklet::Expr, flag: &mut bool) {
                use crate::ir::tasklet::Expr;
                match e {
                    Expr::Const(c) => *flag |= !c.is_finite(),
                    Expr::Neg(x) => consts(x, flag),
                    Expr::Bin(_, a, b) => {
                        consts(a, flag);
                        consts(b, flag);
                    }
                    Expr::Conn(_) => {}
                }
            }
            consts(&s.value, &mut nonfinite);
            s.value.visit_conns(&mut |c| {
                if !inputs.contains(c) {
                    bad.push(c.to_string());
                }
            });
            for c in bad {
                self.push(loc, Rule::ConnectorMismatch, format!("body reads '{c}', which is not an input connector"));
            }
            if nonfinite {
                self.push(loc, Rule::NonFiniteConstant, "body contains a non-finite constant");
            }
        }
        for o in &t.outs {
            let n = t.body.0.iter().filter(|s| s.target == o.name).count();
            if n != 1 {
                self.push(loc, Rule::OutputAssignment, format!("output '{}' assigned {n} times", o.name));
            }
        }
        for s in &t.body.0 {
            if !t.outs.iter().any(|o| o.name == s.target) {
                self.push(loc, Rule::OutputAssignment, format!("body assigns '{}', which is not an output connector", s.target));
            }
        }
        for c in &t.ins {
            self.read_transient(loc, &c.memlet.container);
        }
        for c in &t.outs {
            if c.memlet.wcr == Wcr::Sum {
                self.read_transient(loc, &c.memlet.container);
            }
        }
        for c in &t.outs {
            self.written.insert(c.memlet.container.clone());
        }
    }

    fn copy(&mut self, loc: &str, c: &'a CopyNode, scope: &Scope<'a>) {
        for (name, subset) in [(&c.src, &c.src_subset), (&c.dst, &c.dst_subset)] {
            let exprs: Vec<&Affine> = subset.iter().map(SubsetDim::start).collect();
            self.subset(loc, name, subset.len(), &exprs, scope);
            for e in CopyNode::extents(subset) {
                if let SymbolicSize::Symbol(s) = e {
                    if !self.symbols.contains(s.as_str()) {
                        self.push(loc, Rule::UnknownSymbol, format!("copy extent uses undeclared symbol '{s}'"));
                    }
                }
            }
        }
        if CopyNode::extents(&c.src_subset) != CopyNode::extents(&c.dst_subset) {
            self.push(loc, Rule::CopyShape, "source and destination boxes differ in shape");
        }
        self.read_transient(loc, &c.src);
        self.written.insert(c.dst.clone());
    }
}
