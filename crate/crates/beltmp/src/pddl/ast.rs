//! Syntax tree for the supported PDDL 2.1 subset: typed objects, predicates,
//! numeric fluents, durative actions with `at start`/`at end`/`over all`
//! annotations, plus the `:attachments` extension block in problem files.

use std::fmt;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TypedParam {
    pub name: String,
    pub ty: String,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PredicateDecl {
    pub name: String,
    pub params: Vec<TypedParam>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FunctionDecl {
    pub name: String,
    pub params: Vec<TypedParam>,
}

/// A term is either a `?variable` or an object constant.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub enum Term {
    Var(String),
    Const(String),
}

impl Term {
    pub fn name(&self) -> &str {
        match self {
            Term::Var(s) | Term::Const(s) => s,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Atom {
    pub pred: String,
    pub args: Vec<Term>,
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct FluentRef {
    pub func: String,
    pub args: Vec<Term>,
}

#[derive(Debug, Clone, PartialEq)]
pub enum NumExpr {
    Constant(f64),
    Fluent(FluentRef),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Comparison {
    Eq,
    Gt,
    Ge,
}

impl Comparison {
    pub fn holds(&self, lhs: f64, rhs: f64) -> bool {
        match self {
            Comparison::Eq => (lhs - rhs).abs() < 1e-9,
            Comparison::Gt => lhs > rhs,
            Comparison::Ge => lhs >= rhs - 1e-9,
        }
    }

    pub fn symbol(&self) -> &'static str {
        match self {
            Comparison::Eq => "=",
            Comparison::Gt => ">",
            Comparison::Ge => ">=",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Condition {
    Pred(Atom),
    NotPred(Atom),
    Num(Comparison, NumExpr, NumExpr),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TimeQualifier {
    AtStart,
    AtEnd,
    OverAll,
}

impl TimeQualifier {
    pub fn keyword(&self) -> &'static str {
        match self {
            TimeQualifier::AtStart => "at start",
            TimeQualifier::AtEnd => "at end",
            TimeQualifier::OverAll => "over all",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TimedCondition {
    pub time: TimeQualifier,
    pub cond: Condition,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Effect {
    Add(Atom),
    Del(Atom),
    Increase(FluentRef, NumExpr),
    Assign(FluentRef, NumExpr),
}

#[derive(Debug, Clone, PartialEq)]
pub struct TimedEffect {
    pub time: TimeQualifier,
    pub eff: Effect,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ActionSchema {
    pub name: String,
    pub params: Vec<TypedParam>,
    pub duration: NumExpr,
    pub conditions: Vec<TimedCondition>,
    pub effects: Vec<TimedEffect>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DomainDef {
    pub name: String,
    pub requirements: Vec<String>,
    pub types: Vec<String>,
    pub predicates: Vec<PredicateDecl>,
    pub functions: Vec<FunctionDecl>,
    pub actions: Vec<ActionSchema>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ObjectDecl {
    pub name: String,
    pub ty: String,
}

#[derive(Debug, Clone, PartialEq)]
pub enum InitItem {
    Prop(Atom),
    FluentAssign(FluentRef, f64),
}

/// The `:attachments` extension block: declares which functions are direct
/// (changed by action effects, watched by the advisor), indirect (written
/// back by the advisor) and triggers (communication channel).
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct Attachments {
    pub direct: Vec<String>,
    pub indirect: Vec<String>,
    pub trigger: Vec<String>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ProblemDef {
    pub name: String,
    pub domain: String,
    pub objects: Vec<ObjectDecl>,
    pub init: Vec<InitItem>,
    pub goal: Vec<Condition>,
    pub attachments: Attachments,
}

fn fmt_number(v: f64) -> String {
    if v.fract() == 0.0 && v.abs() < 1e15 {
        format!("{}", v as i64)
    } else {
        format!("{v}")
    }
}

fn fmt_params(params: &[TypedParam]) -> String {
    params
        .iter()
        .map(|p| format!("?{} - {}", p.name, p.ty))
        .collect::<Vec<_>>()
        .join(" ")
}

impl fmt::Display for Term {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Term::Var(v) => write!(f, "?{v}"),
            Term::Const(c) => write!(f, "{c}"),
        }
    }
}

impl fmt::Display for Atom {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "({}", self.pred)?;
        for a in &self.args {
            write!(f, " {a}")?;
        }
        write!(f, ")")
    }
}

impl fmt::Display for FluentRef {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "({}", self.func)?;
        for a in &self.args {
            write!(f, " {a}")?;
        }
        write!(f, ")")
    }
}

impl fmt::Display for NumExpr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            NumExpr::Constant(v) => write!(f, "{}", fmt_number(*v)),
            NumExpr::Fluent(fl) => write!(f, "{fl}"),
        }
    }
}

impl fmt::Display for Condition {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Condition::Pred(a) => write!(f, "{a}"),
            Condition::NotPred(a) => write!(f, "(not {a})"),
            Condition::Num(cmp, l, r) => write!(f, "({} {l} {r})", cmp.symbol()),
        }
    }
}

impl fmt::Display for TimedCondition {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "({} {})", self.time.keyword(), self.cond)
    }
}

impl fmt::Display for Effect {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Effect::Add(a) => write!(f, "{a}"),
            Effect::Del(a) => write!(f, "(not {a})"),
            Effect::Increase(fl, v) => write!(f, "(increase {fl} {v})"),
            Effect::Assign(fl, v) => write!(f, "(assign {fl} {v})"),
        }
    }
}

impl fmt::Display for TimedEffect {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "({} {})", self.time.keyword(), self.eff)
    }
}

impl fmt::Display for ActionSchema {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "  (:durative-action {}", self.name)?;
        writeln!(f, "   :parameters ({})", fmt_params(&self.params))?;
        writeln!(f, "   :duration (= ?duration {})", self.duration)?;
        let conds: Vec<String> = self.conditions.iter().map(|c| c.to_string()).collect();
        writeln!(f, "   :condition (and {})", conds.join(" "))?;
        let effs: Vec<String> = self.effects.iter().map(|e| e.to_string()).collect();
        writeln!(f, "   :effect (and {}))", effs.join(" "))
    }
}

impl fmt::Display for DomainDef {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "(define (domain {})", self.name)?;
        if !self.requirements.is_empty() {
            let reqs: Vec<String> = self.requirements.iter().map(|r| format!(":{r}")).collect();
            writeln!(f, " (:requirements {})", reqs.join(" "))?;
        }
        if !self.types.is_empty() {
            writeln!(f, " (:types {})", self.types.join(" "))?;
        }
        if !self.predicates.is_empty() {
            writeln!(f, " (:predicates")?;
            for p in &self.predicates {
                writeln!(f, "  ({} {})", p.name, fmt_params(&p.params))?;
            }
            writeln!(f, " )")?;
        }
        if !self.functions.is_empty() {
            writeln!(f, " (:functions")?;
            for fun in &self.functions {
                if fun.params.is_empty() {
                    writeln!(f, "  ({})", fun.name)?;
                } else {
                    writeln!(f, "  ({} {})", fun.name, fmt_params(&fun.params))?;
                }
            }
            writeln!(f, " )")?;
        }
        for a in &self.actions {
            write!(f, "{a}")?;
        }
        writeln!(f, ")")
    }
}

impl fmt::Display for ProblemDef {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "(define (problem {})", self.name)?;
        writeln!(f, " (:domain {})", self.domain)?;
        if !self.objects.is_empty() {
            let objs: Vec<String> = self
                .objects
                .iter()
                .map(|o| format!("{} - {}", o.name, o.ty))
                .collect();
            writeln!(f, " (:objects {})", objs.join(" "))?;
        }
        writeln!(f, " (:init")?;
        for item in &self.init {
            match item {
                InitItem::Prop(a) => writeln!(f, "  {a}")?,
                InitItem::FluentAssign(fl, v) => writeln!(f, "  (= {fl} {})", fmt_number(*v))?,
            }
        }
        writeln!(f, " )")?;
        let goals: Vec<String> = self.goal.iter().map(|g| g.to_string()).collect();
        writeln!(f, " (:goal (and {}))", goals.join(" "))?;
        let att = &self.attachments;
        if !att.direct.is_empty() || !att.indirect.is_empty() || !att.trigger.is_empty() {
            writeln!(
                f,
                " (:attachments (direct {}) (indirect {}) (trigger {}))",
                att.direct.join(" "),
                att.indirect.join(" "),
                att.trigger.join(" ")
            )?;
        }
        writeln!(f, ")")
    }
}
