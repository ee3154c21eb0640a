//! The typed grid DSL: types, terms, concrete syntax, inference and evaluation.

mod eval;
mod infer;
mod prims;
mod syntax;
mod term;
mod types;

pub use eval::{apply, eval, exec, exec_traced, Closure, Tracer, Value};
pub use infer::{check_type, infer_in_context, infer_type};
pub use prims::{Action, Builtin, Prim, PrimDef, PrimKind, PrimTable};
pub use syntax::{binder_name, parse_program, parse_slotted, print_program, print_slotted};
pub use term::Term;
pub use types::{match_return, BaseTy, Ty, TypeContext};
