//! The dataflow intermediate representation: containers, maps, loops,
//! tasklets and memlets, with validation, serialization and the Ax builder.

pub mod builder;
pub mod expr;
pub mod graph;
pub mod serialize;
pub mod symbols;
pub mod tasklet;
pub mod validate;

pub use builder::build_ax_program;
pub use expr::{Affine, Bound};
pub use graph::*;
pub use serialize::{deserialize, deserialize_unchecked, read_graph_file, serialize, write_graph_file};
pub use symbols::{find_map_by_param, specialize_symbol};
pub use tasklet::{BinOp, Body, Expr, Stmt};
pub use validate::{validate, Diagnostic, Rule};
