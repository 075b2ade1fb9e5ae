//! The Ax program as a dataflow graph: two element maps, the first computing
//! the reference gradient and its geometric combination into six transient
//! arrays, the second contracting them back with the transposed matrices.

use crate::ir::graph::{
    DataContainer, DataflowGraph, ForLoop, MapScope, Node, Range, Schedule, State, Storage, SymbolicSize, Tasklet,
};

/// Kernel interface arrays in exported-argument order.
pub const AX_INTERFACE: [&str; 15] = [
    "wd", "ud", "dxd", "dyd", "dzd", "dxtd", "dytd", "dztd", "h1d", "g11d", "g22d", "g33d", "g12d", "g13d", "g23d",
];

pub const AX_MATRICES: [&str; 6] = ["dxd", "dyd", "dzd", "dxtd", "dytd", "dztd"];

pub const AX_TEMPORARIES: [&str; 6] = ["rtmp", "stmp", "ttmp", "urtmp", "ustmp", "uttmp"];

pub fn build_ax_program(lx: &SymbolicSize, nel: &SymbolicSize) -> DataflowGraph {
    let mut symbols = Vec::new();
    for s in [lx, nel] {
        if let SymbolicSize::Symbol(name) = s {
            if !symbols.contains(name) {
                symbols.push(name.clone());
            }
        }
    }

    let field = || vec![nel.clone(), lx.clone(), lx.clone(), lx.clone()];
    let matrix = || vec![lx.clone(), lx.clone()];
    let mut containers = Vec::new();
    for name in AX_INTERFACE {
        let shape = if AX_MATRICES.contains(&name) { matrix() } else { field() };
        containers.push(DataContainer::new(name, shape, Storage::HostHeap, false));
    }
    for name in AX_TEMPORARIES {
        containers.push(DataContainer::new(name, field(), Storage::HostHeap, true));
    }

    let element_map = |params: [&str; 4], body: Vec<Node>| {
        Node::Map(MapScope {
            params: params.iter().map(|p| p.to_string()).collect(),
            ranges: vec![Range::zero_to(nel), Range::zero_to(lx), Range::zero_to(lx), Range::zero_to(lx)],
            schedule: Schedule::DeviceGrid,
            body,
        })
    };
    let seq_loop = |var: &str, body: Vec<Node>| Node::For(ForLoop { var: var.to_string(), range: Range::zero_to(lx), body });
    let t = |x: Tasklet| Node::Tasklet(x);

    const P: &[&str] = &["e", "k", "j", "i"];
    let gradient = element_map(
        ["e", "k", "j", "i"],
        vec![
            t(Tasklet::new("init_rtmp", &[], &[("r", "rtmp", P)], "r = 0.0")),
            t(Tasklet::new("init_stmp", &[], &[("s", "stmp", P)], "s = 0.0")),
            t(Tasklet::new("init_ttmp", &[], &[("t", "ttmp", P)], "t = 0.0")),
            seq_loop(
                "l",
                vec![
                    t(Tasklet::new(
                        "acc_rtmp",
                        &[("acc", "rtmp", P), ("d", "dxd", &["l", "i"]), ("u", "ud", &["e", "k", "j", "l"])],
                        &[("out", "rtmp", P)],
                        "out = acc + d * u",
                    )),
                    t(Tasklet::new(
                        "acc_stmp",
                        &[("acc", "stmp", P), ("d", "dyd", &["l", "j"]), ("u", "ud", &["e", "k", "l", "i"])],
                        &[("out", "stmp", P)],
                        "out = acc + d * u",
                    )),
                    t(Tasklet::new(
                        "acc_ttmp",
                        &[("acc", "ttmp", P), ("d", "dzd", &["l", "k"]), ("u", "ud", &["e", "l", "j", "i"])],
                        &[("out", "ttmp", P)],
                        "out = acc + d * u",
                    )),
                ],
            ),
            t(Tasklet::new(
                "geometric_combine",
                &[
                    ("G00", "g11d", P),
                    ("G01", "g12d", P),
                    ("G02", "g13d", P),
                    ("G11", "g22d", P),
                    ("G12", "g23d", P),
                    ("G22", "g33d", P),
                    ("H", "h1d", P),
                    ("r", "rtmp", P),
                    ("s", "stmp", P),
                    ("t", "ttmp", P),
                ],
                &[("ur", "urtmp", P), ("us", "ustmp", P), ("ut", "uttmp", P)],
                "ur = H * (G00 * r + G01 * s + G02 * t); \
                 us = H * (G01 * r + G11 * s + G12 * t); \
                 ut = H * (G02 * r + G12 * s + G22 * t)",
            )),
        ],
    );

    const Q: &[&str] = &["e2", "k2", "j2", "i2"];
    let contraction = element_map(
        ["e2", "k2", "j2", "i2"],
        vec![
            t(Tasklet::new("init_wd", &[], &[("w", "wd", Q)], "w = 0.0")),
            seq_loop(
                "l2",
                vec![
                    t(Tasklet::new(
                        "acc_wd_r",
                        &[("acc", "wd", Q), ("d", "dxtd", &["l2", "i2"]), ("v", "urtmp", &["e2", "k2", "j2", "l2"])],
                        &[("out", "wd", Q)],
                        "out = acc + d * v",
                    )),
                    t(Tasklet::new(
                        "acc_wd_s",
                        &[("acc", "wd", Q), ("d", "dytd", &["l2", "j2"]), ("v", "ustmp", &["e2", "k2", "l2", "i2"])],
                        &[("out", "wd", Q)],
                        "out = acc + d * v",
                    )),
                    t(Tasklet::new(
                        "acc_wd_t",
                        &[("acc", "wd", Q), ("d", "dztd", &["l2", "k2"]), ("v", "uttmp", &["e2", "l2", "j2", "i2"])],
                        &[("out", "wd", Q)],
                        "out = acc + d * v",
                    )),
                ],
            ),
        ],
    );

    DataflowGraph {
        name: "ax".to_string(),
        symbols,
        containers,
        states: vec![State { label: "ax".to_string(), nodes: vec![gradient, contraction] }],
    }
}
