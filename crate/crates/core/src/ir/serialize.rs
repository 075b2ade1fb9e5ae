//! The "mdg-1" document format: a JSON object tree, optionally gzip-wrapped.
//! Field order is fixed by the document structs, so equal graphs always
//! serialize to identical bytes.

use std::io::{Read, Write};

use flate2::read::GzDecoder;
use flate2::write::GzEncoder;
use flate2::Compression;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::ir::expr::{Affine, Bound};
use crate::ir::graph::*;
use crate::ir::tasklet::Body;
use crate::ir::validate::validate;

pub const SCHEMA_VERSION: &str = "mdg-1";
pub const GZIP_MAGIC: [u8; 2] = [0x1f, 0x8b];

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct GraphDoc {
    version: String,
    name: String,
    symbols: Vec<String>,
    containers: Vec<ContainerDoc>,
    states: Vec<StateDoc>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ContainerDoc {
    name: String,
    shape: Vec<String>,
    storage: String,
    transient: bool,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct StateDoc {
    label: String,
    nodes: Vec<NodeDoc>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RangeDoc {
    begin: String,
    end: String,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct MemletDoc {
    container: String,
    subset: Vec<String>,
    wcr: String,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ConnectorDoc {
    name: String,
    memlet: MemletDoc,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct BoxDoc {
    container: String,
    subset: Vec<String>,
}

#[derive(Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
enum NodeDoc {
    Map { params: Vec<String>, ranges: Vec<RangeDoc>, schedule: String, body: Vec<NodeDoc> },
    For { var: String, range: RangeDoc, body: Vec<NodeDoc> },
    Tasklet { label: String, ins: Vec<ConnectorDoc>, outs: Vec<ConnectorDoc>, body: String },
    Copy { src: BoxDoc, dst: BoxDoc },
}

fn range_doc(r: &Range) -> RangeDoc {
    RangeDoc { begin: r.begin.to_string(), end: r.end.to_string() }
}

fn connector_doc(c: &Connector) -> ConnectorDoc {
    ConnectorDoc {
        name: c.name.clone(),
        memlet: MemletDoc {
            container: c.memlet.container.clone(),
            subset: c.memlet.subset.iter().map(Affine::to_string).collect(),
            wcr: c.memlet.wcr.as_str().to_string(),
        },
    }
}

fn node_doc(n: &Node) -> NodeDoc {
    match n {
        Node::Map(m) => NodeDoc::Map {
            params: m.params.clone(),
            ranges: m.ranges.iter().map(range_doc).collect(),
            schedule: m.schedule.as_str().to_string(),
            body: m.body.iter().map(node_doc).collect(),
        },
        Node::For(f) => NodeDoc::For { var: f.var.clone(), range: range_doc(&f.range), body: f.body.iter().map(node_doc).collect() },
        Node::Tasklet(t) => NodeDoc::Tasklet {
            label: t.label.clone(),
            ins: t.ins.iter().map(connector_doc).collect(),
            outs: t.outs.iter().map(connector_doc).collect(),
            body: t.body.to_string(),
        },
        Node::Copy(c) => NodeDoc::Copy {
            src: BoxDoc { container: c.src.clone(), subset: c.src_subset.iter().map(SubsetDim::to_string).collect() },
            dst: BoxDoc { container: c.dst.clone(), subset: c.dst_subset.iter().map(SubsetDim::to_string).collect() },
        },
    }
}

/// Canonical document bytes; gzip-wrapped when `compress`.
pub fn serialize(g: &DataflowGraph, compress: bool) -> Result<Vec<u8>> {
    let diags = validate(g);
    if !diags.is_empty() {
        return Err(Error::Contract(format!(
            "cannot serialize invalid graph: {}",
            diags.iter().map(|d| d.to_string()).collect::<Vec<_>>().join("; ")
        )));
    }
    let doc = GraphDoc {
        version: SCHEMA_VERSION.to_string(),
        name: g.name.clone(),
        symbols: g.symbols.clone(),
        containers: g
            .containers
            .iter()
            .map(|c| ContainerDoc {
                name: c.name.clone(),
                shape: c.shape.iter().map(SymbolicSize::to_string).collect(),
                storage: c.storage.as_str().to_string(),
                transient: c.transient,
            })
            .collect(),
        states: g
            .states
            .iter()
            .map(|s| StateDoc { label: s.label.clone(), nodes: s.nodes.iter().map(node_doc).collect() })
            .collect(),
    };
    let mut text = serde_json::to_vec_pretty(&doc).map_err(|e| Error::Io(e.to_string()))?;
    text.push(b'\n');
    if !compress {
        return Ok(text);
    }
    let mut enc = GzEncoder::new(Vec::new(), Compression::best());
    enc.write_all(&text)?;
    Ok(enc.finish()?)
}

/// Parse either form and require the result to validate.
pub fn deserialize(bytes: &[u8]) -> Result<DataflowGraph> {
    let g = deserialize_unchecked(bytes)?;
    let diags = validate(&g);
    if !diags.is_empty() {
        return Err(Error::Contract(format!(
            "document describes an invalid graph: {}",
            diags.iter().map(|d| d.to_string()).collect::<Vec<_>>().join("; ")
        )));
    }
    Ok(g)
}

/// Parse without running validation (used to report diagnostics on bad files).
pub fn deserialize_unchecked(bytes: &[u8]) -> Result<DataflowGraph> {
    let text = if bytes.starts_with(&GZIP_MAGIC) {
        let mut out = Vec::new();
        let mut dec = GzDecoder::new(bytes);
        if let Err(e) = dec.read_to_end(&mut out) {
            return Err(Error::Parse { offset: out.len(), message: format!("corrupt gzip stream: {e}") });
        }
        out
    } else {
        bytes.to_vec()
    };

    let value: serde_json::Value = serde_json::from_slice(&text).map_err(|e| json_error(&text, &e))?;
    match value.get("version").and_then(|v| v.as_str()) {
        Some(SCHEMA_VERSION) => {}
        Some(other) => return Err(Error::Version(format!("schema version '{other}', expected '{SCHEMA_VERSION}'"))),
        None => return Err(Error::Parse { offset: 0, message: "missing string field 'version'".into() }),
    }
    let doc: GraphDoc = serde_json::from_slice(&text).map_err(|e| json_error(&text, &e))?;
    Decoder { text: &text }.graph(doc)
}

fn json_error(text: &[u8], e: &serde_json::Error) -> Error {
    Error::Parse { offset: line_col_offset(text, e.line(), e.column()), message: e.to_string() }
}

fn line_col_offset(text: &[u8], line: usize, column: usize) -> usize {
    if line == 0 {
        return 0;
    }
    let mut offset = 0;
    for (n, l) in text.split(|&b| b == b'\n').enumerate() {
        if n + 1 == line {
            return offset + column.saturating_sub(1);
        }
        offset += l.len() + 1;
    }
    text.len()
}

struct Decoder<'a> {
    text: &'a [u8],
}

impl Decoder<'_> {
    /// Error located at the first occurrence of the offending string literal.
    fn err(&self, value: &str, message: String) -> Error {
        let needle = serde_json::to_string(value).unwrap_or_default();
        let offset = self
            .text
            .windows(needle.len().max(1))
            .position(|w| w == needle.as_bytes())
            .unwrap_or(0);
        Error::Parse { offset, message }
    }

    fn located<T>(&self, value: &str, r: Result<T>) -> Result<T> {
        r.map_err(|e| match e {
            Error::Parse { message, .. } => self.err(value, message),
            other => other,
        })
    }

    fn graph(&self, doc: GraphDoc) -> Result<DataflowGraph> {
        let mut containers = Vec::new();
        for c in doc.containers {
            let storage = Storage::from_name(&c.storage)
                .ok_or_else(|| Error::Version(format!("unknown storage value '{}'", c.storage)))?;
            let shape = c
                .shape
                .iter()
                .map(|s| self.located(s, SymbolicSize::parse(s)))
                .collect::<Result<Vec<_>>>()?;
            containers.push(DataContainer { name: c.name, shape, storage, transient: c.transient });
        }
        let states = doc
            .states
            .into_iter()
            .map(|s| Ok(State { label: s.label, nodes: self.nodes(s.nodes)? }))
            .collect::<Result<Vec<_>>>()?;
        Ok(DataflowGraph { name: doc.name, symbols: doc.symbols, containers, states })
    }

    fn nodes(&self, docs: Vec<NodeDoc>) -> Result<Vec<Node>> {
        docs.into_iter().map(|d| self.node(d)).collect()
    }

    fn range(&self, r: &RangeDoc) -> Result<Range> {
        Ok(Range {
            begin: self.located(&r.begin, Bound::parse(&r.begin))?,
            end: self.located(&r.end, Bound::parse(&r.end))?,
        })
    }

    fn affine(&self, s: &str) -> Result<Affine> {
        self.located(s, Affine::parse(s))
    }

    fn subset_dim(&self, s: &str) -> Result<SubsetDim> {
        match s.split_once(":+") {
            None => Ok(SubsetDim::Index(self.affine(s)?)),
            Some((start, extent)) => Ok(SubsetDim::Range {
                start: self.affine(start)?,
                extent: self.located(s, SymbolicSize::parse(extent))?,
            }),
        }
    }

    fn connector(&self, c: ConnectorDoc) -> Result<Connector> {
        let wcr = Wcr::from_name(&c.memlet.wcr)
            .ok_or_else(|| Error::Version(format!("unknown wcr value '{}'", c.memlet.wcr)))?;
        let subset = c.memlet.subset.iter().map(|s| self.affine(s)).collect::<Result<Vec<_>>>()?;
        Ok(Connector { name: c.name, memlet: Memlet { container: c.memlet.container, subset, wcr } })
    }

    fn node(&self, d: NodeDoc) -> Result<Node> {
        Ok(match d {
            NodeDoc::Map { params, ranges, schedule, body } => {
                let schedule = Schedule::from_name(&schedule)
                    .ok_or_else(|| Error::Version(format!("unknown schedule value '{schedule}'")))?;
                Node::Map(MapScope {
                    params,
                    ranges: ranges.iter().map(|r| self.range(r)).collect::<Result<_>>()?,
                    schedule,
                    body: self.nodes(body)?,
                })
            }
            NodeDoc::For { var, range, body } => {
                Node::For(ForLoop { var, range: self.range(&range)?, body: self.nodes(body)? })
            }
            NodeDoc::Tasklet { label, ins, outs, body } => Node::Tasklet(Tasklet {
                label,
                ins: ins.into_iter().map(|c| self.connector(c)).collect::<Result<_>>()?,
                outs: outs.into_iter().map(|c| self.connector(c)).collect::<Result<_>>()?,
                body: self.located(&body, Body::parse(&body))?,
            }),
            NodeDoc::Copy { src, dst } => Node::Copy(CopyNode {
                src_subset: src.subset.iter().map(|s| self.subset_dim(s)).collect::<Result<_>>()?,
                src: src.container,
                dst_subset: dst.subset.iter().map(|s| self.subset_dim(s)).collect::<Result<_>>()?,
                dst: dst.container,
            }),
        })
    }
}

/// Read a graph file, either `.mdg` or `.mdg.gz`.
pub fn read_graph_file(path: &std::path::Path) -> Result<DataflowGraph> {
    deserialize(&std::fs::read(path)?)
}

/// Write a graph; compression is chosen by a `.gz` extension.
pub fn write_graph_file(g: &DataflowGraph, path: &std::path::Path) -> Result<()> {
    let compress = path.extension().is_some_and(|e| e == "gz");
    std::fs::write(path, serialize(g, compress)?)?;
    Ok(())
}
