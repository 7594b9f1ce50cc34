//! Grounding: substitute problem objects into schemas, producing indexed
//! propositions, tagged numeric fluents and ground actions.

use std::collections::HashMap;

use thiserror::Error;

use super::ast::*;
use super::parser::PddlError;

/// V^dir / V^ind / V^free classification of a ground fluent.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FluentTag {
    Direct,
    Indirect,
    /// Instance of a trigger function; written only to signal the advisor.
    Trigger,
    Free,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum GroundNum {
    Const(f64),
    Fluent(usize),
}

#[derive(Debug, Clone, PartialEq)]
pub enum GroundCondition {
    Prop(usize),
    NotProp(usize),
    Num(Comparison, GroundNum, GroundNum),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum NumOp {
    Increase,
    Assign,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GroundNumEffect {
    pub fluent: usize,
    pub op: NumOp,
    pub value: GroundNum,
}

/// Navigation marker: the action carries `(increase (act-cost) (external))`
/// and communicates (from, to) through the trigger fluent.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct NavInfo {
    pub from: String,
    pub to: String,
    /// True when the action also increases the goal-trace by `bound`.
    pub has_bound: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GroundAction {
    pub name: String,
    pub schema: String,
    pub args: Vec<String>,
    pub duration: f64,
    pub pre: Vec<GroundCondition>,
    pub add: Vec<usize>,
    pub del: Vec<usize>,
    /// Numeric effects in temporal order (at-start first, then at-end).
    pub num_effects: Vec<GroundNumEffect>,
    pub nav: Option<NavInfo>,
}

#[derive(Debug, Error)]
pub enum GroundError {
    #[error(transparent)]
    Pddl(#[from] PddlError),
    #[error("object `{0}` has undeclared type `{1}`")]
    UnknownObjectType(String, String),
    #[error("non-constant duration in action `{0}`")]
    NonConstantDuration(String),
    #[error("init references unknown symbol `{0}`")]
    UnknownInitSymbol(String),
}

#[derive(Debug, Clone)]
pub struct GroundedTask {
    pub props: Vec<String>,
    pub prop_index: HashMap<String, usize>,
    pub fluents: Vec<String>,
    pub fluent_index: HashMap<String, usize>,
    pub fluent_tags: Vec<FluentTag>,
    pub actions: Vec<GroundAction>,
    pub init_props: Vec<usize>,
    pub init_fluents: Vec<f64>,
    pub goal: Vec<GroundCondition>,
    /// Functions declared as triggers in the `:attachments` block.
    pub trigger_functions: Vec<String>,
}

impl GroundedTask {
    pub fn fluent_id(&self, name: &str) -> Option<usize> {
        self.fluent_index.get(name).copied()
    }

    pub fn prop_id(&self, name: &str) -> Option<usize> {
        self.prop_index.get(name).copied()
    }
}

struct Interner {
    names: Vec<String>,
    index: HashMap<String, usize>,
}

impl Interner {
    fn new() -> Self {
        Interner {
            names: Vec::new(),
            index: HashMap::new(),
        }
    }

    fn intern(&mut self, name: String) -> usize {
        if let Some(&i) = self.index.get(&name) {
            return i;
        }
        let i = self.names.len();
        self.index.insert(name.clone(), i);
        self.names.push(name);
        i
    }
}

fn canonical(head: &str, args: &[String]) -> String {
    if args.is_empty() {
        format!("({head})")
    } else {
        format!("({} {})", head, args.join(" "))
    }
}

type Binding<'a> = HashMap<&'a str, &'a str>;

fn resolve_args(terms: &[Term], binding: &Binding) -> Vec<String> {
    terms
        .iter()
        .map(|t| match t {
            Term::Const(c) => c.clone(),
            Term::Var(v) => binding
                .get(v.as_str())
                .map(|s| s.to_string())
                .unwrap_or_else(|| format!("?{v}")),
        })
        .collect()
}

/// Ground a parsed domain + problem. Every combination of objects matching a
/// schema's parameter types produces one ground action; no applicability
/// pruning is performed here.
pub fn ground(domain: &DomainDef, problem: &ProblemDef) -> Result<GroundedTask, GroundError> {
    for obj in &problem.objects {
        if !domain.types.is_empty() && !domain.types.contains(&obj.ty) && obj.ty != "object" {
            return Err(GroundError::UnknownObjectType(
                obj.name.clone(),
                obj.ty.clone(),
            ));
        }
    }
    let mut objects_by_type: HashMap<&str, Vec<&str>> = HashMap::new();
    for obj in &problem.objects {
        objects_by_type
            .entry(obj.ty.as_str())
            .or_default()
            .push(obj.name.as_str());
    }

    let mut props = Interner::new();
    let mut fluents = Interner::new();

    let mut init_props = Vec::new();
    let mut init_assignments: Vec<(usize, f64)> = Vec::new();
    for item in &problem.init {
        match item {
            InitItem::Prop(atom) => {
                let args: Vec<String> = atom.args.iter().map(|t| t.name().to_string()).collect();
                init_props.push(props.intern(canonical(&atom.pred, &args)));
            }
            InitItem::FluentAssign(fl, v) => {
                let args: Vec<String> = fl.args.iter().map(|t| t.name().to_string()).collect();
                init_assignments.push((fluents.intern(canonical(&fl.func, &args)), *v));
            }
        }
    }

    let ground_num = |e: &NumExpr, binding: &Binding, fluents: &mut Interner| -> GroundNum {
        match e {
            NumExpr::Constant(v) => GroundNum::Const(*v),
            NumExpr::Fluent(fl) => {
                let args = resolve_args(&fl.args, binding);
                GroundNum::Fluent(fluents.intern(canonical(&fl.func, &args)))
            }
        }
    };

    let mut actions = Vec::new();
    for schema in &domain.actions {
        let duration = match &schema.duration {
            NumExpr::Constant(v) => *v,
            NumExpr::Fluent(_) => {
                return Err(GroundError::NonConstantDuration(schema.name.clone()))
            }
        };
        // Cartesian product over the parameter types.
        let pools: Vec<&Vec<&str>> = schema
            .params
            .iter()
            .map(|p| {
                objects_by_type
                    .get(p.ty.as_str())
                    .unwrap_or(&EMPTY_POOL)
            })
            .collect();
        let mut combo = vec![0usize; pools.len()];
        if pools.iter().any(|p| p.is_empty()) && !pools.is_empty() {
            continue;
        }
        loop {
            let binding: Binding = schema
                .params
                .iter()
                .enumerate()
                .map(|(k, p)| (p.name.as_str(), pools[k][combo[k]]))
                .collect();
            let args: Vec<String> = schema
                .params
                .iter()
                .enumerate()
                .map(|(k, _)| pools[k][combo[k]].to_string())
                .collect();

            let mut pre = Vec::new();
            for tc in &schema.conditions {
                pre.push(match &tc.cond {
                    Condition::Pred(a) => {
                        GroundCondition::Prop(
                            props.intern(canonical(&a.pred, &resolve_args(&a.args, &binding))),
                        )
                    }
                    Condition::NotPred(a) => {
                        GroundCondition::NotProp(
                            props.intern(canonical(&a.pred, &resolve_args(&a.args, &binding))),
                        )
                    }
                    Condition::Num(cmp, l, r) => GroundCondition::Num(
                        *cmp,
                        ground_num(l, &binding, &mut fluents),
                        ground_num(r, &binding, &mut fluents),
                    ),
                });
            }

            let mut add = Vec::new();
            let mut del = Vec::new();
            let mut num_effects = Vec::new();
            let mut has_external = false;
            let mut has_bound = false;
            let mut trigger_args: Option<(String, String)> = None;
            // at-start effects first, then at-end, preserving source order
            // within each phase.
            for phase in [TimeQualifier::AtStart, TimeQualifier::AtEnd] {
                for te in schema.effects.iter().filter(|te| te.time == phase) {
                    match &te.eff {
                        Effect::Add(a) => add.push(
                            props.intern(canonical(&a.pred, &resolve_args(&a.args, &binding))),
                        ),
                        Effect::Del(a) => del.push(
                            props.intern(canonical(&a.pred, &resolve_args(&a.args, &binding))),
                        ),
                        Effect::Increase(fl, v) | Effect::Assign(fl, v) => {
                            let fargs = resolve_args(&fl.args, &binding);
                            if let NumExpr::Fluent(src) = v {
                                if src.func == "external" {
                                    has_external = true;
                                }
                                if src.func == "bound" {
                                    has_bound = true;
                                }
                            }
                            if problem.attachments.trigger.contains(&fl.func)
                                && fargs.len() == 2
                            {
                                trigger_args =
                                    Some((fargs[0].clone(), fargs[1].clone()));
                            }
                            let fluent = fluents.intern(canonical(&fl.func, &fargs));
                            let op = match &te.eff {
                                Effect::Increase(..) => NumOp::Increase,
                                _ => NumOp::Assign,
                            };
                            num_effects.push(GroundNumEffect {
                                fluent,
                                op,
                                value: ground_num(v, &binding, &mut fluents),
                            });
                        }
                    }
                }
            }

            let nav = if has_external {
                let (from, to) = trigger_args.clone().unwrap_or_else(|| {
                    // Fall back to the last two parameters, matching the
                    // (?v ?from ?to) convention.
                    let n = args.len();
                    (args[n - 2].clone(), args[n - 1].clone())
                });
                Some(NavInfo {
                    from,
                    to,
                    has_bound,
                })
            } else {
                None
            };

            actions.push(GroundAction {
                name: canonical(&schema.name, &args),
                schema: schema.name.clone(),
                args,
                duration,
                pre,
                add,
                del,
                num_effects,
                nav,
            });

            // advance the product counter
            let mut k = 0;
            loop {
                if k == pools.len() {
                    break;
                }
                combo[k] += 1;
                if combo[k] < pools[k].len() {
                    break;
                }
                combo[k] = 0;
                k += 1;
            }
            if k == pools.len() || pools.is_empty() {
                break;
            }
        }
    }

    let mut goal = Vec::new();
    for g in &problem.goal {
        let binding = Binding::new();
        goal.push(match g {
            Condition::Pred(a) => GroundCondition::Prop(
                props.intern(canonical(&a.pred, &resolve_args(&a.args, &binding))),
            ),
            Condition::NotPred(a) => GroundCondition::NotProp(
                props.intern(canonical(&a.pred, &resolve_args(&a.args, &binding))),
            ),
            Condition::Num(cmp, l, r) => GroundCondition::Num(
                *cmp,
                ground_num(l, &binding, &mut fluents),
                ground_num(r, &binding, &mut fluents),
            ),
        });
    }

    // Make sure the advisor-facing fluents exist even when no init value is
    // given for them.
    for f in problem
        .attachments
        .direct
        .iter()
        .chain(&problem.attachments.indirect)
    {
        // Only 0-ary attachment fluents are interned eagerly; trigger
        // functions get their instances from the action effects above.
        let decl = domain.functions.iter().find(|d| d.name == *f);
        if let Some(decl) = decl {
            if decl.params.is_empty() {
                fluents.intern(canonical(f, &[]));
            }
        }
    }

    let mut init_fluents = vec![0.0; fluents.names.len()];
    for (i, v) in init_assignments {
        init_fluents[i] = v;
    }

    let tag_of = |name: &str| -> FluentTag {
        let func = name[1..name.len() - 1]
            .split_whitespace()
            .next()
            .unwrap_or("");
        if problem.attachments.direct.iter().any(|f| f == func) {
            FluentTag::Direct
        } else if problem.attachments.indirect.iter().any(|f| f == func) {
            FluentTag::Indirect
        } else if problem.attachments.trigger.iter().any(|f| f == func) {
            FluentTag::Trigger
        } else {
            FluentTag::Free
        }
    };
    let fluent_tags = fluents.names.iter().map(|n| tag_of(n)).collect();

    Ok(GroundedTask {
        prop_index: props.index,
        props: props.names,
        fluent_index: fluents.index,
        fluents: fluents.names,
        fluent_tags,
        actions,
        init_props,
        init_fluents,
        goal,
        trigger_functions: problem.attachments.trigger.clone(),
    })
}

static EMPTY_POOL: Vec<&str> = Vec::new();

#[cfg(test)]
mod tests {
    use super::*;
    use crate::pddl::{parse_domain, parse_problem};

    const DOMAIN: &str = r#"
    (define (domain mini)
      (:requirements :typing :durative-actions :numeric-fluents)
      (:types robot region)
      (:predicates (robot_in ?v - robot ?r - region) (seen ?r - region))
      (:functions (act-cost) (external) (bound) (goal-trace) (spare)
                  (triggered ?from - region ?to - region))
      (:durative-action goto
        :parameters (?v - robot ?from ?to - region)
        :duration (= ?duration 100)
        :condition (at start (robot_in ?v ?from))
        :effect (and (at start (not (robot_in ?v ?from)))
                     (at start (increase (triggered ?from ?to) 1))
                     (at end (robot_in ?v ?to))
                     (at end (seen ?to))
                     (at end (increase (act-cost) (external)))
                     (at end (increase (goal-trace) (bound))))))
    "#;

    const PROBLEM: &str = r#"
    (define (problem p) (:domain mini)
      (:objects rob - robot a b c - region)
      (:init (robot_in rob a) (= (act-cost) 0) (= (goal-trace) 0) (= (spare) 7))
      (:goal (and (seen b)))
      (:attachments (direct act-cost goal-trace) (indirect external bound) (trigger triggered)))
    "#;

    fn task() -> GroundedTask {
        let d = parse_domain(DOMAIN).unwrap();
        let p = parse_problem(PROBLEM).unwrap();
        ground(&d, &p).unwrap()
    }

    #[test]
    fn action_count_matches_enumeration() {
        // 1 robot x 3x3 region pairs.
        assert_eq!(task().actions.len(), 9);
    }

    #[test]
    fn fluent_tags_are_classified() {
        let t = task();
        let tag = |name: &str| t.fluent_tags[t.fluent_id(name).unwrap()];
        assert_eq!(tag("(act-cost)"), FluentTag::Direct);
        assert_eq!(tag("(goal-trace)"), FluentTag::Direct);
        assert_eq!(tag("(external)"), FluentTag::Indirect);
        assert_eq!(tag("(bound)"), FluentTag::Indirect);
        assert_eq!(tag("(triggered a b)"), FluentTag::Trigger);
        assert_eq!(tag("(spare)"), FluentTag::Free);
    }

    #[test]
    fn nav_info_detected_from_trigger_and_external() {
        let t = task();
        let goto_ab = t
            .actions
            .iter()
            .find(|a| a.args == ["rob", "a", "b"])
            .unwrap();
        let nav = goto_ab.nav.as_ref().expect("goto should be a nav action");
        assert_eq!(nav.from, "a");
        assert_eq!(nav.to, "b");
        assert!(nav.has_bound);
    }

    #[test]
    fn init_fluents_are_loaded() {
        let t = task();
        assert_eq!(t.init_fluents[t.fluent_id("(spare)").unwrap()], 7.0);
        assert!(t.init_props.contains(&t.prop_id("(robot_in rob a)").unwrap()));
    }

    #[test]
    fn undeclared_object_type_is_rejected() {
        let d = parse_domain(DOMAIN).unwrap();
        let bad = PROBLEM.replace("a b c - region", "a b c - planet");
        let p = parse_problem(&bad).unwrap();
        assert!(matches!(
            ground(&d, &p),
            Err(GroundError::UnknownObjectType(..))
        ));
    }
}
