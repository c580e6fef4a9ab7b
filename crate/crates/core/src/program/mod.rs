//! The constrained step-program language the API agent plans in.

pub mod ast;
pub mod check;
pub mod eval;
pub mod parse;

pub use ast::{BinOp, Builtin, CmpOp, Expr, Predicate, Statement, StepProgram};
pub use check::{check_program, StaticCheckError};
pub use eval::{
    args_digest, eval_expr, execute_program, values_equal, CallRecord, ExecutionResult, ExecutionStatus,
    ToolInvoker,
};
pub use parse::{parse_program, ProgramParseError};
