//! Sentential decision diagrams (SDDs) and probabilistic SDDs.
//!
//! The crate provides a canonical SDD manager with bottom-up CNF compilation
//! and greedy vtree search, a frozen arithmetic-circuit view for weighted
//! model counting with derivatives, and PSDDs with multiplication,
//! marginals and MPE queries.

pub mod ac;
pub mod cnf;
pub mod compile;
pub mod error;
pub mod io;
pub mod manager;
pub mod minimize;
pub mod psdd;
pub mod vtree;

pub use cnf::{Cnf, Literal, Var};
pub use compile::{compile_cnf, CompileOptions, Compiled};
pub use error::{Result, SddError};
pub use manager::{NodeId, NodeRef, Op, SddManager, SizeStats, FALSE, TRUE};
pub use minimize::{minimize, MinimizeOptions};
pub use vtree::{Move, Projection, Shape, Vtree, VtreeId};
pub use psdd::{Element, Psdd, PsddId, PsddNode};
