//! Sequential reference executor for dataflow graphs.
//!
//! Every map runs its iterations in lexicographic parameter order whatever
//! its schedule, so the result is a pure function of the graph and inputs.
//! The graph is first lowered to a slot-indexed form so that the hot loops
//! do no name lookups.

use std::collections::BTreeMap;

use crate::error::{Error, Result};
use crate::ir::expr::{Affine, Bound};
use crate::ir::graph::{DataflowGraph, Node, SubsetDim, SymbolicSize, Wcr};
use crate::ir::tasklet::{BinOp, Expr};
use crate::ir::builder::AX_INTERFACE;
use crate::ir::validate::validate;
use crate::sem::{DerivativeMatrices, ElementField, GeomFactors};

/// A dense row-major array.
#[derive(Debug, Clone, PartialEq)]
pub struct Tensor {
    pub dims: Vec<usize>,
    pub data: Vec<f64>,
}

impl Tensor {
    pub fn new(dims: Vec<usize>, data: Vec<f64>) -> Result<Tensor> {
        let n: usize = dims.iter().product();
        if n != data.len() {
            return Err(Error::Contract(format!("tensor dims {dims:?} need {n} values, got {}", data.len())));
        }
        Ok(Tensor { dims, data })
    }

    pub fn zeros(dims: Vec<usize>) -> Tensor {
        let n = dims.iter().product();
        Tensor { dims, data: vec![0.0; n] }
    }
}

/// Container arrays plus integer symbol values.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Bindings {
    pub arrays: BTreeMap<String, Tensor>,
    pub symbols: BTreeMap<String, i64>,
}

impl Bindings {
    pub fn with_symbol(mut self, name: &str, value: i64) -> Self {
        self.symbols.insert(name.to_string(), value);
        self
    }

    pub fn with_array(mut self, name: &str, t: Tensor) -> Self {
        self.arrays.insert(name.to_string(), t);
        self
    }
}

/// Variable values seen by one tasklet execution.
pub type IterationRecord = Vec<(String, i64)>;

pub fn execute(g: &DataflowGraph, b: &Bindings) -> Result<Bindings> {
    execute_inner(g, b, None)
}

/// Like [`execute`], additionally returning the in-scope iterator values of
/// every tasklet execution, in execution order.
pub fn execute_recording(g: &DataflowGraph, b: &Bindings) -> Result<(Bindings, Vec<IterationRecord>)> {
    let mut rec = Vec::new();
    let out = execute_inner(g, b, Some(&mut rec))?;
    Ok((out, rec))
}

/// The Ax interface arrays in exported-argument order, with `wd` zeroed.
pub fn ax_arrays(u: &ElementField, d: &DerivativeMatrices, g: &GeomFactors) -> Vec<(&'static str, Tensor)> {
    let field = |f: &ElementField| Tensor { dims: vec![f.nel, f.lx, f.lx, f.lx], data: f.data.clone() };
    let matrix = |m: &[f64]| Tensor { dims: vec![d.lx, d.lx], data: m.to_vec() };
    AX_INTERFACE
        .iter()
        .map(|&name| {
            let t = match name {
                "wd" => Tensor::zeros(vec![u.nel, u.lx, u.lx, u.lx]),
                "ud" => field(u),
                "dxd" => matrix(&d.dxd),
                "dyd" => matrix(&d.dyd),
                "dzd" => matrix(&d.dzd),
                "dxtd" => matrix(&d.dxtd),
                "dytd" => matrix(&d.dytd),
                "dztd" => matrix(&d.dztd),
                "h1d" => field(&g.h1),
                "g11d" => field(&g.g11),
                "g22d" => field(&g.g22),
                "g33d" => field(&g.g33),
                "g12d" => field(&g.g12),
                "g13d" => field(&g.g13),
                _ => field(&g.g23),
            };
            (name, t)
        })
        .collect()
}

/// Bindings for a program built by `build_ax_program` with symbols `lx`
/// and `nel`. Symbols absent from a specialised graph are ignored.
pub fn ax_bindings(u: &ElementField, d: &DerivativeMatrices, g: &GeomFactors) -> Bindings {
    let mut b = Bindings::default().with_symbol("lx", u.lx as i64).with_symbol("nel", u.nel as i64);
    for (name, t) in ax_arrays(u, d, g) {
        b.arrays.insert(name.to_string(), t);
    }
    b
}

/// Execute an Ax program and return its `wd` output.
pub fn run_ax(program: &DataflowGraph, u: &ElementField, d: &DerivativeMatrices, g: &GeomFactors) -> Result<ElementField> {
    let out = execute(program, &ax_bindings(u, d, g))?;
    let wd = out.arrays.get("wd").ok_or_else(|| Error::Contract("program has no 'wd' output".into()))?;
    ElementField::from_vec(u.nel, u.lx, wd.data.clone())
}

fn execute_inner(g: &DataflowGraph, b: &Bindings, rec: Option<&mut Vec<IterationRecord>>) -> Result<Bindings> {
    let diags = validate(g);
    if !diags.is_empty() {
        return Err(Error::Contract(format!("cannot execute invalid graph: {}", diags[0])));
    }
    let mut symbols = BTreeMap::new();
    for s in &g.symbols {
        let v = b.symbols.get(s).ok_or_else(|| Error::Binding(format!("symbol '{s}' is not bound")))?;
        symbols.insert(s.clone(), *v);
    }

    let mut buffers = Vec::with_capacity(g.containers.len());
    let mut index = BTreeMap::new();
    for (n, c) in g.containers.iter().enumerate() {
        let dims = c
            .shape
            .iter()
            .map(|d| match d {
                SymbolicSize::Constant(v) => Ok(*v as usize),
                SymbolicSize::Symbol(s) => usize::try_from(symbols[s])
                    .map_err(|_| Error::Binding(format!("symbol '{s}' is negative"))),
            })
            .collect::<Result<Vec<usize>>>()?;
        let buf = if c.transient {
            let len = dims.iter().product();
            Buffer { data: vec![0.0; len], init: Some(vec![false; len]), dims }
        } else {
            let t = b
                .arrays
                .get(&c.name)
                .ok_or_else(|| Error::Binding(format!("container '{}' is not bound", c.name)))?;
            if t.dims != dims {
                return Err(Error::Binding(format!(
                    "container '{}' bound with dims {:?}, expected {dims:?}",
                    c.name, t.dims
                )));
            }
            Buffer { data: t.data.clone(), init: None, dims }
        };
        buffers.push(buf);
        index.insert(c.name.clone(), n);
    }

    let mut lower = Lowering { symbols: &symbols, containers: &index, scope: Vec::new(), nslots: 0 };
    let mut program = Vec::new();
    for st in &g.states {
        program.extend(lower.nodes(&st.nodes)?);
    }

    let mut m = Machine {
        env: vec![0; lower.nslots.max(1)],
        buffers,
        names: g.containers.iter().map(|c| c.name.clone()).collect(),
        scratch: Vec::new(),
        rec,
    };
    m.run(&program)?;

    let mut out = Bindings { arrays: BTreeMap::new(), symbols: b.symbols.clone() };
    for (c, buf) in g.containers.iter().zip(m.buffers) {
        if !c.transient {
            out.arrays.insert(c.name.clone(), Tensor { dims: buf.dims, data: buf.data });
        }
    }
    Ok(out)
}

struct Buffer {
    dims: Vec<usize>,
    data: Vec<f64>,
    init: Option<Vec<bool>>,
}

#[derive(Clone)]
struct CAffine {
    constant: i64,
    terms: Vec<(usize, i64)>,
}

impl CAffine {
    #[inline]
    fn eval(&self, env: &[i64]) -> i64 {
        self.terms.iter().fold(self.constant, |acc, &(s, c)| acc + c * env[s])
    }
}

enum CBound {
    Affine(CAffine),
    Min(CAffine, CAffine),
    CeilDiv(CAffine, i64),
}

impl CBound {
    #[inline]
    fn eval(&self, env: &[i64]) -> i64 {
        match self {
            CBound::Affine(a) => a.eval(env),
            CBound::Min(a, b) => a.eval(env).min(b.eval(env)),
            CBound::CeilDiv(a, d) => crate::ir::expr::ceil_div(a.eval(env), *d),
        }
    }
}

struct CAccess {
    container: usize,
    dims: Vec<CAffine>,
}

enum CExpr {
    Const(f64),
    In(usize),
    Neg(Box<CExpr>),
    Bin(BinOp, Box<CExpr>, Box<CExpr>),
}

impl CExpr {
    #[inline]
    fn eval(&self, ins: &[f64]) -> f64 {
        match self {
            CExpr::Const(c) => *c,
            CExpr::In(i) => ins[*i],
            CExpr::Neg(e) => -e.eval(ins),
            CExpr::Bin(op, a, b) => {
                let x = a.eval(ins);
                let y = b.eval(ins);
                op.apply(x, y)
            }
        }
    }
}

enum CNode {
    Loop { slot: usize, begin: CBound, end: CBound, body: Vec<CNode> },
    Tasklet(Box<CTasklet>),
    Copy { src: CAccess, dst: CAccess, src_box: Vec<Option<usize>>, dst_box: Vec<Option<usize>>, extents: Vec<usize> },
}

struct CTasklet {
    ins: Vec<CAccess>,
    outs: Vec<(CAccess, Wcr)>,
    /// `(output index, expression)` in statement order.
    stmts: Vec<(usize, CExpr)>,
    scope: Vec<(String, usize)>,
}

struct Lowering<'a> {
    symbols: &'a BTreeMap<String, i64>,
    containers: &'a BTreeMap<String, usize>,
    scope: Vec<(String, usize)>,
    nslots: usize,
}

impl Lowering<'_> {
    fn affine(&self, a: &Affine) -> Result<CAffine> {
        let mut out = CAffine { constant: a.constant, terms: Vec::new() };
        for (v, &c) in &a.terms {
            if let Some((_, slot)) = self.scope.iter().rev().find(|(n, _)| n == v) {
                out.terms.push((*slot, c));
            } else if let Some(val) = self.symbols.get(v) {
                out.constant += c * val;
            } else {
                return Err(Error::Binding(format!("unbound variable '{v}'")));
            }
        }
        Ok(out)
    }

    fn bound(&self, b: &Bound) -> Result<CBound> {
        Ok(match b {
            Bound::Affine(a) => CBound::Affine(self.affine(a)?),
            Bound::Min(a, c) => CBound::Min(self.affine(a)?, self.affine(c)?),
            Bound::CeilDiv(a, d) => CBound::CeilDiv(self.affine(a)?, *d),
        })
    }

    fn access(&self, container: &str, subset: impl Iterator<Item = Affine>) -> Result<CAccess> {
        Ok(CAccess {
            container: self.containers[container],
            dims: subset.map(|a| self.affine(&a)).collect::<Result<_>>()?,
        })
    }

    fn size(&self, s: &SymbolicSize) -> usize {
        match s {
            SymbolicSize::Constant(c) => *c as usize,
            SymbolicSize::Symbol(n) => self.symbols[n].max(0) as usize,
        }
    }

    fn declare(&mut self, name: &str) -> usize {
        let slot = self.nslots;
        self.nslots += 1;
        self.scope.push((name.to_string(), slot));
        slot
    }

    fn nodes(&mut self, list: &[Node]) -> Result<Vec<CNode>> {
        list.iter().map(|n| self.node(n)).collect()
    }

    fn node(&mut self, n: &Node) -> Result<CNode> {
        match n {
            Node::Map(m) => {
                // nest one loop per parameter, first parameter outermost
                let depth = self.scope.len();
                let mut headers = Vec::new();
                for r in &m.ranges {
                    headers.push((self.bound(&r.begin)?, self.bound(&r.end)?));
                }
                let slots: Vec<usize> = m.params.iter().map(|p| self.declare(p)).collect();
                let mut body = self.nodes(&m.body)?;
                for (slot, (begin, end)) in slots.into_iter().zip(headers).rev() {
                    body = vec![CNode::Loop { slot, begin, end, body }];
                }
                self.scope.truncate(depth);
                Ok(body.pop().expect("map has at least one parameter"))
            }
            Node::For(f) => {
                let begin = self.bound(&f.range.begin)?;
                let end = self.bound(&f.range.end)?;
                let slot = self.declare(&f.var);
                let body = self.nodes(&f.body)?;
                self.scope.pop();
                Ok(CNode::Loop { slot, begin, end, body })
            }
            Node::Tasklet(t) => {
                let ins = t
                    .ins
                    .iter()
                    .map(|c| self.access(&c.memlet.container, c.memlet.subset.iter().cloned()))
                    .collect::<Result<Vec<_>>>()?;
                let outs = t
                    .outs
                    .iter()
                    .map(|c| Ok((self.access(&c.memlet.container, c.memlet.subset.iter().cloned())?, c.memlet.wcr)))
                    .collect::<Result<Vec<_>>>()?;
                let in_index = |name: &str| t.ins.iter().position(|c| c.name == name);
                fn lower(e: &Expr, idx: &dyn Fn(&str) -> Option<usize>) -> Result<CExpr> {
                    Ok(match e {
                        Expr::Const(c) => CExpr::Const(*c),
                        Expr::Conn(c) => CExpr::In(idx(c).ok_or_else(|| Error::Contract(format!("unknown connector '{c}'")))?),
                        Expr::Neg(x) => CExpr::Neg(Box::new(lower(x, idx)?)),
                        Expr::Bin(op, a, b) => CExpr::Bin(*op, Box::new(lower(a, idx)?), Box::new(lower(b, idx)?)),
                    })
                }
                let stmts = t
                    .body
                    .0
                    .iter()
                    .map(|s| {
                        let o = t.outs.iter().position(|c| c.name == s.target).expect("validated");
                        Ok((o, lower(&s.value, &in_index)?))
                    })
                    .collect::<Result<Vec<_>>>()?;
                Ok(CNode::Tasklet(Box::new(CTasklet { ins, outs, stmts, scope: self.scope.clone() })))
            }
            Node::Copy(c) => {
                let split = |subset: &[SubsetDim]| -> (Vec<Affine>, Vec<Option<usize>>) {
                    let mut starts = Vec::new();
                    let mut boxes = Vec::new();
                    let mut k = 0;
                    for d in subset {
                        starts.push(d.start().clone());
                        boxes.push(match d {
                            SubsetDim::Index(_) => None,
                            SubsetDim::Range { .. } => {
                                k += 1;
                                Some(k - 1)
                            }
                        });
                    }
                    (starts, boxes)
                };
                let (ss, src_box) = split(&c.src_subset);
                let (ds, dst_box) = split(&c.dst_subset);
                let extents = crate::ir::graph::CopyNode::extents(&c.src_subset).into_iter().map(|e| self.size(e)).collect();
                Ok(CNode::Copy {
                    src: self.access(&c.src, ss.into_iter())?,
                    dst: self.access(&c.dst, ds.into_iter())?,
                    src_box,
                    dst_box,
                    extents,
                })
            }
        }
    }
}

struct Machine<'r> {
    env: Vec<i64>,
    buffers: Vec<Buffer>,
    names: Vec<String>,
    scratch: Vec<f64>,
    rec: Option<&'r mut Vec<IterationRecord>>,
}

impl Machine<'_> {
    fn run(&mut self, program: &[CNode]) -> Result<()> {
        for n in program {
            match n {
                CNode::Loop { slot, begin, end, body } => {
                    let (b, e) = (begin.eval(&self.env), end.eval(&self.env));
                    let mut v = b;
                    while v < e {
                        self.env[*slot] = v;
                        self.run(body)?;
                        v += 1;
                    }
                }
                CNode::Tasklet(t) => self.tasklet(t)?,
                CNode::Copy { src, dst, src_box, dst_box, extents } => self.copy(src, dst, src_box, dst_box, extents)?,
            }
        }
        Ok(())
    }

    #[inline]
    fn offset(&self, a: &CAccess, shift: Option<(&[Option<usize>], &[usize])>) -> Result<usize> {
        let buf = &self.buffers[a.container];
        let mut flat = 0usize;
        for (d, expr) in a.dims.iter().enumerate() {
            let mut v = expr.eval(&self.env);
            if let Some((boxes, pos)) = shift {
                if let Some(k) = boxes[d] {
                    v += pos[k] as i64;
                }
            }
            let extent = buf.dims[d];
            if v < 0 || v as usize >= extent {
                return Err(Error::Contract(format!(
                    "index {v} out of bounds for dimension {d} (extent {extent}) of '{}'",
                    self.names[a.container]
                )));
            }
            flat = flat * extent + v as usize;
        }
        Ok(flat)
    }

    fn uninit(&self, a: &CAccess, flat: usize) -> Error {
        let dims = &self.buffers[a.container].dims;
        let mut index = vec![0i64; dims.len()];
        let mut rest = flat;
        for d in (0..dims.len()).rev() {
            index[d] = (rest % dims[d]) as i64;
            rest /= dims[d];
        }
        Error::UninitializedRead { container: self.names[a.container].clone(), index }
    }

    #[inline]
    fn read(&self, a: &CAccess, flat: usize) -> Result<f64> {
        let buf = &self.buffers[a.container];
        if let Some(init) = &buf.init {
            if !init[flat] {
                return Err(self.uninit(a, flat));
            }
        }
        Ok(buf.data[flat])
    }

    fn tasklet(&mut self, t: &CTasklet) -> Result<()> {
        let mut vals = std::mem::take(&mut self.scratch);
        vals.clear();
        for a in &t.ins {
            let flat = self.offset(a, None)?;
            vals.push(self.read(a, flat)?);
        }
        let nin = vals.len();
        vals.resize(nin + t.outs.len(), 0.0);
        for (o, e) in &t.stmts {
            let v = e.eval(&vals[..nin]);
            vals[nin + o] = v;
        }
        for (o, (a, wcr)) in t.outs.iter().enumerate() {
            let flat = self.offset(a, None)?;
            let v = vals[nin + o];
            let value = match wcr {
                Wcr::None => v,
                Wcr::Sum => self.read(a, flat)? + v,
            };
            let buf = &mut self.buffers[a.container];
            buf.data[flat] = value;
            if let Some(init) = &mut buf.init {
                init[flat] = true;
            }
        }
        self.scratch = vals;
        if let Some(rec) = self.rec.as_deref_mut() {
            rec.push(t.scope.iter().map(|(n, s)| (n.clone(), self.env[*s])).collect());
        }
        Ok(())
    }

    fn copy(&mut self, src: &CAccess, dst: &CAccess, src_box: &[Option<usize>], dst_box: &[Option<usize>], extents: &[usize]) -> Result<()> {
        if extents.contains(&0) {
            return Ok(());
        }
        let mut pos = vec![0usize; extents.len()];
        loop {
            let s = self.offset(src, Some((src_box, &pos)))?;
            let d = self.offset(dst, Some((dst_box, &pos)))?;
            let v = self.read(src, s)?;
            let buf = &mut self.buffers[dst.container];
            buf.data[d] = v;
            if let Some(init) = &mut buf.init {
                init[d] = true;
            }
            // row-major odometer
            let mut k = extents.len();
            loop {
                if k == 0 {
                    return Ok(());
                }
                k -= 1;
                pos[k] += 1;
                if pos[k] < extents[k] {
                    break;
                }
                pos[k] = 0;
            }
        }
    }
}
