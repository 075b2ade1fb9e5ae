use std::collections::BTreeSet;
use std::fmt;

use crate::error::{Error, Result};
use crate::ir::expr::{Affine, Bound};
use crate::ir::tasklet::Body;

/// A container dimension: a non-negative constant or a graph symbol.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub enum SymbolicSize {
    Constant(u64),
    Symbol(String),
}

impl SymbolicSize {
    pub fn sym(name: &str) -> Self {
        SymbolicSize::Symbol(name.to_string())
    }

    pub fn to_affine(&self) -> Affine {
        match self {
            SymbolicSize::Constant(c) => Affine::constant(*c as i64),
            SymbolicSize::Symbol(s) => Affine::var(s),
        }
    }

    pub fn from_affine(a: &Affine) -> Option<SymbolicSize> {
        if let Some(c) = a.as_constant() {
            return u64::try_from(c).ok().map(SymbolicSize::Constant);
        }
        a.as_single_var().map(SymbolicSize::sym)
    }

    pub fn as_constant(&self) -> Option<u64> {
        match self {
            SymbolicSize::Constant(c) => Some(*c),
            SymbolicSize::Symbol(_) => None,
        }
    }

    pub fn parse(text: &str) -> Result<SymbolicSize> {
        let t = text.trim();
        if let Ok(c) = t.parse::<u64>() {
            return Ok(SymbolicSize::Constant(c));
        }
        if crate::ir::expr::is_identifier(t) {
            return Ok(SymbolicSize::sym(t));
        }
        Err(Error::Parse { offset: 0, message: format!("'{text}' is not a size") })
    }
}

impl fmt::Display for SymbolicSize {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            SymbolicSize::Constant(c) => write!(f, "{c}"),
            SymbolicSize::Symbol(s) => write!(f, "{s}"),
        }
    }
}

macro_rules! named_enum {
    ($(#[$m:meta])* $name:ident { $($variant:ident),+ $(,)? }) => {
        $(#[$m])*
        #[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
        pub enum $name { $($variant),+ }

        impl $name {
            pub const ALL: &'static [$name] = &[$($name::$variant),+];

            pub fn as_str(self) -> &'static str {
                match self { $($name::$variant => stringify!($variant)),+ }
            }

            pub fn from_name(s: &str) -> Option<Self> {
                match s { $(stringify!($variant) => Some($name::$variant),)+ _ => None }
            }
        }

        impl fmt::Display for $name {
            fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                f.write_str(self.as_str())
            }
        }
    };
}

named_enum!(
    /// Where a container lives.
    Storage { HostHeap, DeviceGlobal, ScratchShared, RegisterTransient }
);

named_enum!(
    /// How the iterations of a map are distributed.
    Schedule { Sequential, CpuParallel, DeviceGrid, DeviceBlock }
);

impl Schedule {
    pub fn is_device(self) -> bool {
        matches!(self, Schedule::DeviceGrid | Schedule::DeviceBlock)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct DataContainer {
    pub name: String,
    pub shape: Vec<SymbolicSize>,
    pub storage: Storage,
    pub transient: bool,
}

impl DataContainer {
    pub fn new(name: &str, shape: Vec<SymbolicSize>, storage: Storage, transient: bool) -> Self {
        DataContainer { name: name.to_string(), shape, storage, transient }
    }

    pub fn rank(&self) -> usize {
        self.shape.len()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default)]
pub enum Wcr {
    #[default]
    None,
    Sum,
}

impl Wcr {
    pub fn as_str(self) -> &'static str {
        match self {
            Wcr::None => "none",
            Wcr::Sum => "sum",
        }
    }

    pub fn from_name(s: &str) -> Option<Wcr> {
        match s {
            "none" => Some(Wcr::None),
            "sum" => Some(Wcr::Sum),
            _ => None,
        }
    }
}

/// Single-point access `container[subset...]`.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Memlet {
    pub container: String,
    pub subset: Vec<Affine>,
    pub wcr: Wcr,
}

impl Memlet {
    pub fn new(container: &str, subset: &[&str]) -> Memlet {
        Memlet {
            container: container.to_string(),
            subset: subset.iter().map(|s| Affine::parse(s).expect("valid subset")).collect(),
            wcr: Wcr::None,
        }
    }
}

impl fmt::Display for Memlet {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}[", self.container)?;
        for (n, s) in self.subset.iter().enumerate() {
            if n > 0 {
                write!(f, ", ")?;
            }
            write!(f, "{s}")?;
        }
        write!(f, "]")
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Connector {
    pub name: String,
    pub memlet: Memlet,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Tasklet {
    pub label: String,
    pub ins: Vec<Connector>,
    pub outs: Vec<Connector>,
    pub body: Body,
}

impl Tasklet {
    /// Builder shorthand: `(connector, container, subset)` triples and a body.
    pub fn new(label: &str, ins: &[(&str, &str, &[&str])], outs: &[(&str, &str, &[&str])], body: &str) -> Tasklet {
        let conv = |list: &[(&str, &str, &[&str])]| {
            list.iter()
                .map(|(c, cont, sub)| Connector { name: c.to_string(), memlet: Memlet::new(cont, sub) })
                .collect()
        };
        Tasklet {
            label: label.to_string(),
            ins: conv(ins),
            outs: conv(outs),
            body: Body::parse(body).expect("valid tasklet body"),
        }
    }

    pub fn memlets(&self) -> impl Iterator<Item = &Memlet> {
        self.ins.iter().chain(&self.outs).map(|c| &c.memlet)
    }

    pub fn memlets_mut(&mut self) -> impl Iterator<Item = &mut Memlet> {
        self.ins.iter_mut().chain(self.outs.iter_mut()).map(|c| &mut c.memlet)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Range {
    pub begin: Bound,
    pub end: Bound,
}

impl Range {
    pub fn new(begin: Bound, end: Bound) -> Range {
        Range { begin, end }
    }

    pub fn zero_to(end: &SymbolicSize) -> Range {
        Range { begin: Bound::constant(0), end: Bound::Affine(end.to_affine()) }
    }

    pub fn map_bounds(&self, f: impl Fn(&Bound) -> Bound) -> Range {
        Range { begin: f(&self.begin), end: f(&self.end) }
    }

    pub fn uses(&self, name: &str) -> bool {
        self.begin.uses(name) || self.end.uses(name)
    }

    /// `end - begin` when both are affine.
    pub fn affine_extent(&self) -> Option<Affine> {
        Some(self.end.as_affine()?.sub(self.begin.as_affine()?))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MapScope {
    pub params: Vec<String>,
    pub ranges: Vec<Range>,
    pub schedule: Schedule,
    pub body: Vec<Node>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ForLoop {
    pub var: String,
    pub range: Range,
    pub body: Vec<Node>,
}

/// One dimension of a copy subset.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub enum SubsetDim {
    Index(Affine),
    Range { start: Affine, extent: SymbolicSize },
}

impl SubsetDim {
    pub fn start(&self) -> &Affine {
        match self {
            SubsetDim::Index(a) | SubsetDim::Range { start: a, .. } => a,
        }
    }

    pub fn map_affine(&self, f: impl Fn(&Affine) -> Affine) -> SubsetDim {
        match self {
            SubsetDim::Index(a) => SubsetDim::Index(f(a)),
            SubsetDim::Range { start, extent } => SubsetDim::Range { start: f(start), extent: extent.clone() },
        }
    }
}

impl fmt::Display for SubsetDim {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            SubsetDim::Index(a) => write!(f, "{a}"),
            SubsetDim::Range { start, extent } => write!(f, "{start}:+{extent}"),
        }
    }
}

/// Box copy between two containers; the `Range` dimensions of both sides
/// pair up in order and are traversed row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct CopyNode {
    pub src: String,
    pub src_subset: Vec<SubsetDim>,
    pub dst: String,
    pub dst_subset: Vec<SubsetDim>,
}

impl CopyNode {
    pub fn extents(subset: &[SubsetDim]) -> Vec<&SymbolicSize> {
        subset
            .iter()
            .filter_map(|d| match d {
                SubsetDim::Range { extent, .. } => Some(extent),
                SubsetDim::Index(_) => None,
            })
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Node {
    Map(MapScope),
    For(ForLoop),
    Tasklet(Tasklet),
    Copy(CopyNode),
}

impl Node {
    pub fn body(&self) -> Option<&Vec<Node>> {
        match self {
            Node::Map(m) => Some(&m.body),
            Node::For(f) => Some(&f.body),
            _ => None,
        }
    }

    pub fn body_mut(&mut self) -> Option<&mut Vec<Node>> {
        match self {
            Node::Map(m) => Some(&mut m.body),
            Node::For(f) => Some(&mut f.body),
            _ => None,
        }
    }

    pub fn as_map(&self) -> Option<&MapScope> {
        match self {
            Node::Map(m) => Some(m),
            _ => None,
        }
    }

    pub fn as_map_mut(&mut self) -> Option<&mut MapScope> {
        match self {
            Node::Map(m) => Some(m),
            _ => None,
        }
    }

    /// Iterators introduced by this node.
    pub fn declared_vars(&self) -> Vec<&str> {
        match self {
            Node::Map(m) => m.params.iter().map(String::as_str).collect(),
            Node::For(f) => vec![f.var.as_str()],
            _ => Vec::new(),
        }
    }

    pub fn kind(&self) -> &'static str {
        match self {
            Node::Map(_) => "map",
            Node::For(_) => "for",
            Node::Tasklet(_) => "tasklet",
            Node::Copy(_) => "copy",
        }
    }

    pub fn describe(&self) -> String {
        match self {
            Node::Map(m) => format!("map[{}]", m.params.join(",")),
            Node::For(f) => format!("for[{}]", f.var),
            Node::Tasklet(t) => format!("tasklet '{}'", t.label),
            Node::Copy(c) => format!("copy {}->{}", c.src, c.dst),
        }
    }

    /// Containers read by this node and everything nested in it.
    pub fn reads(&self, out: &mut BTreeSet<String>) {
        self.walk(&mut |n| match n {
            Node::Tasklet(t) => {
                for c in &t.ins {
                    out.insert(c.memlet.container.clone());
                }
                for c in &t.outs {
                    if c.memlet.wcr == Wcr::Sum {
                        out.insert(c.memlet.container.clone());
                    }
                }
            }
            Node::Copy(c) => {
                out.insert(c.src.clone());
            }
            _ => {}
        });
    }

    pub fn writes(&self, out: &mut BTreeSet<String>) {
        self.walk(&mut |n| match n {
            Node::Tasklet(t) => {
                for c in &t.outs {
                    out.insert(c.memlet.container.clone());
                }
            }
            Node::Copy(c) => {
                out.insert(c.dst.clone());
            }
            _ => {}
        });
    }

    /// Pre-order traversal.
    pub fn walk<'a>(&'a self, f: &mut impl FnMut(&'a Node)) {
        f(self);
        if let Some(body) = self.body() {
            for n in body {
                n.walk(f);
            }
        }
    }

    pub fn walk_mut(&mut self, f: &mut impl FnMut(&mut Node)) {
        f(self);
        if let Some(body) = self.body_mut() {
            for n in body {
                n.walk_mut(f);
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct State {
    pub label: String,
    pub nodes: Vec<Node>,
}

impl State {
    /// Ordering edges between top-level nodes: `(a, b)` with `a < b` whenever
    /// both touch a container and at least one of them writes it.
    pub fn dependency_edges(&self) -> Vec<(usize, usize)> {
        let sets: Vec<(BTreeSet<String>, BTreeSet<String>)> = self
            .nodes
            .iter()
            .map(|n| {
                let (mut r, mut w) = (BTreeSet::new(), BTreeSet::new());
                n.reads(&mut r);
                n.writes(&mut w);
                (r, w)
            })
            .collect();
        let mut edges = Vec::new();
        for a in 0..sets.len() {
            for b in a + 1..sets.len() {
                let (ra, wa) = &sets[a];
                let (rb, wb) = &sets[b];
                let conflict = !wa.is_disjoint(rb) || !wa.is_disjoint(wb) || !ra.is_disjoint(wb);
                if conflict {
                    edges.push((a, b));
                }
            }
        }
        edges
    }
}

/// Address of a node: state index plus child indices from the state's top level.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct NodePath {
    pub state: usize,
    pub path: Vec<usize>,
}

impl NodePath {
    pub fn parent(&self) -> Option<NodePath> {
        let (_, rest) = self.path.split_last()?;
        Some(NodePath { state: self.state, path: rest.to_vec() })
    }

    pub fn child(&self, i: usize) -> NodePath {
        let mut path = self.path.clone();
        path.push(i);
        NodePath { state: self.state, path }
    }

    pub fn is_strict_ancestor_of(&self, other: &NodePath) -> bool {
        self.state == other.state && self.path.len() < other.path.len() && other.path.starts_with(&self.path)
    }
}

impl fmt::Display for NodePath {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "state {}", self.state)?;
        for p in &self.path {
            write!(f, "/{p}")?;
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DataflowGraph {
    pub name: String,
    pub symbols: Vec<String>,
    pub containers: Vec<DataContainer>,
    pub states: Vec<State>,
}

impl DataflowGraph {
    pub fn container(&self, name: &str) -> Option<&DataContainer> {
        self.containers.iter().find(|c| c.name == name)
    }

    pub fn container_mut(&mut self, name: &str) -> Option<&mut DataContainer> {
        self.containers.iter_mut().find(|c| c.name == name)
    }

    pub fn node(&self, at: &NodePath) -> Option<&Node> {
        let mut list = &self.states.get(at.state)?.nodes;
        let (last, prefix) = at.path.split_last()?;
        for &i in prefix {
            list = list.get(i)?.body()?;
        }
        list.get(*last)
    }

    pub fn node_mut(&mut self, at: &NodePath) -> Option<&mut Node> {
        let (last, prefix) = at.path.split_last()?;
        let mut list = &mut self.states.get_mut(at.state)?.nodes;
        for &i in prefix {
            list = list.get_mut(i)?.body_mut()?;
        }
        list.get_mut(*last)
    }

    /// The node list that contains the node at `at`.
    pub fn sibling_list_mut(&mut self, at: &NodePath) -> Option<&mut Vec<Node>> {
        match at.parent() {
            Some(p) if !p.path.is_empty() => self.node_mut(&p)?.body_mut(),
            _ => Some(&mut self.states.get_mut(at.state)?.nodes),
        }
    }

    pub fn map_at(&self, at: &NodePath) -> Result<&MapScope> {
        self.node(at)
            .and_then(Node::as_map)
            .ok_or_else(|| Error::Lookup(format!("no map at {at}")))
    }

    /// Every node with its path, pre-order.
    pub fn all_nodes(&self) -> Vec<(NodePath, &Node)> {
        fn rec<'a>(list: &'a [Node], base: NodePath, out: &mut Vec<(NodePath, &'a Node)>) {
            for (i, n) in list.iter().enumerate() {
                let p = base.child(i);
                out.push((p.clone(), n));
                if let Some(body) = n.body() {
                    rec(body, p, out);
                }
            }
        }
        let mut out = Vec::new();
        for (s, st) in self.states.iter().enumerate() {
            rec(&st.nodes, NodePath { state: s, path: Vec::new() }, &mut out);
        }
        out
    }

    pub fn maps(&self) -> Vec<(NodePath, &MapScope)> {
        self.all_nodes().into_iter().filter_map(|(p, n)| n.as_map().map(|m| (p, m))).collect()
    }

    /// Ancestors of `at` (outermost first), excluding `at` itself.
    pub fn ancestors(&self, at: &NodePath) -> Vec<(NodePath, &Node)> {
        (1..at.path.len())
            .filter_map(|len| {
                let p = NodePath { state: at.state, path: at.path[..len].to_vec() };
                self.node(&p).map(|n| (p, n))
            })
            .collect()
    }

    pub fn walk_nodes_mut(&mut self, f: &mut impl FnMut(&mut Node)) {
        for st in &mut self.states {
            for n in &mut st.nodes {
                n.walk_mut(f);
            }
        }
    }

    pub fn count_schedule(&self, schedule: Schedule) -> usize {
        self.maps().iter().filter(|(_, m)| m.schedule == schedule).count()
    }

    /// A container name not yet used in the graph, derived from `base`.
    pub fn fresh_container_name(&self, base: &str) -> String {
        if self.container(base).is_none() {
            return base.to_string();
        }
        (1..).map(|n| format!("{base}_{n}")).find(|c| self.container(c).is_none()).unwrap()
    }

    /// Every iterator name declared anywhere in the graph.
    pub fn iterator_names(&self) -> BTreeSet<String> {
        let mut out = BTreeSet::new();
        for (_, n) in self.all_nodes() {
            out.extend(n.declared_vars().into_iter().map(str::to_string));
        }
        out
    }
}
