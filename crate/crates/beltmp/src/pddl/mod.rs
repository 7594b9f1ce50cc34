//! PDDL 2.1 subset: parser, grounder and the `:attachments` extension used
//! for advisor-backed numeric fluents.

pub mod ast;
pub mod ground;
pub mod parser;

pub use ast::{ActionSchema, Attachments, DomainDef, InitItem, ProblemDef};
pub use ground::{
    ground, FluentTag, GroundAction, GroundCondition, GroundError, GroundNum, GroundNumEffect,
    GroundedTask, NavInfo, NumOp,
};
pub use parser::{parse_domain, parse_problem, PddlError};
