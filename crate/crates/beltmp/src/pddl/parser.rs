//! Lexer and recursive-descent parser for the supported PDDL subset.
//! Identifiers are case-insensitive and lowercased on read. Constructs
//! outside the subset fail with an explicit `Unsupported` diagnostic.

use thiserror::Error;

use super::ast::*;

#[derive(Debug, Error)]
pub enum PddlError {
    #[error("syntax error at {line}:{col}: {msg}")]
    Syntax { line: usize, col: usize, msg: String },
    #[error("unsupported construct at {line}:{col}: `{construct}` is outside the supported PDDL subset")]
    Unsupported {
        line: usize,
        col: usize,
        construct: String,
    },
    #[error("undeclared symbol `{0}`")]
    Undeclared(String),
    #[error("type mismatch: {0}")]
    TypeMismatch(String),
    #[error("duplicate action name `{0}`")]
    DuplicateAction(String),
    #[error("arity mismatch for `{name}`: declared {declared}, used with {used}")]
    Arity {
        name: String,
        declared: usize,
        used: usize,
    },
}

#[derive(Debug, Clone, PartialEq)]
enum Tok {
    LParen,
    RParen,
    Sym(String),
}

#[derive(Debug, Clone)]
struct Token {
    tok: Tok,
    line: usize,
    col: usize,
}

fn lex(text: &str) -> Result<Vec<Token>, PddlError> {
    let mut out = Vec::new();
    let mut line = 1usize;
    let mut col = 1usize;
    let mut chars = text.chars().peekable();
    while let Some(&c) = chars.peek() {
        match c {
            '\n' => {
                chars.next();
                line += 1;
                col = 1;
            }
            c if c.is_whitespace() => {
                chars.next();
                col += 1;
            }
            ';' => {
                // comment to end of line
                while let Some(&c) = chars.peek() {
                    if c == '\n' {
                        break;
                    }
                    chars.next();
                    col += 1;
                }
            }
            '(' => {
                out.push(Token {
                    tok: Tok::LParen,
                    line,
                    col,
                });
                chars.next();
                col += 1;
            }
            ')' => {
                out.push(Token {
                    tok: Tok::RParen,
                    line,
                    col,
                });
                chars.next();
                col += 1;
            }
            _ => {
                let (start_line, start_col) = (line, col);
                let mut sym = String::new();
                while let Some(&c) = chars.peek() {
                    if c.is_whitespace() || c == '(' || c == ')' || c == ';' {
                        break;
                    }
                    sym.push(c.to_ascii_lowercase());
                    chars.next();
                    col += 1;
                }
                out.push(Token {
                    tok: Tok::Sym(sym),
                    line: start_line,
                    col: start_col,
                });
            }
        }
    }
    Ok(out)
}

struct Parser {
    tokens: Vec<Token>,
    pos: usize,
}

impl Parser {
    fn peek(&self) -> Option<&Token> {
        self.tokens.get(self.pos)
    }

    fn err(&self, msg: impl Into<String>) -> PddlError {
        let (line, col) = self
            .peek()
            .map(|t| (t.line, t.col))
            .unwrap_or_else(|| {
                self.tokens
                    .last()
                    .map(|t| (t.line, t.col))
                    .unwrap_or((1, 1))
            });
        PddlError::Syntax {
            line,
            col,
            msg: msg.into(),
        }
    }

    fn unsupported(&self, construct: impl Into<String>) -> PddlError {
        let (line, col) = self.peek().map(|t| (t.line, t.col)).unwrap_or((1, 1));
        PddlError::Unsupported {
            line,
            col,
            construct: construct.into(),
        }
    }

    fn next(&mut self) -> Result<Token, PddlError> {
        let t = self
            .tokens
            .get(self.pos)
            .cloned()
            .ok_or_else(|| self.err("unexpected end of input"))?;
        self.pos += 1;
        Ok(t)
    }

    fn expect_lparen(&mut self) -> Result<(), PddlError> {
        match self.next()?.tok {
            Tok::LParen => Ok(()),
            _ => Err(self.rewind_err("expected `(`")),
        }
    }

    fn expect_rparen(&mut self) -> Result<(), PddlError> {
        match self.next()?.tok {
            Tok::RParen => Ok(()),
            _ => Err(self.rewind_err("expected `)`")),
        }
    }

    fn rewind_err(&mut self, msg: &str) -> PddlError {
        self.pos -= 1;
        self.err(msg)
    }

    fn symbol(&mut self) -> Result<String, PddlError> {
        match self.next()?.tok {
            Tok::Sym(s) => Ok(s),
            _ => Err(self.rewind_err("expected symbol")),
        }
    }

    fn expect_symbol(&mut self, want: &str) -> Result<(), PddlError> {
        let got = self.symbol()?;
        if got == want {
            Ok(())
        } else {
            Err(self.rewind_err(&format!("expected `{want}`, got `{got}`")))
        }
    }

    fn at_rparen(&self) -> bool {
        matches!(self.peek().map(|t| &t.tok), Some(Tok::RParen))
    }

    fn peek_symbol(&self) -> Option<&str> {
        match self.peek().map(|t| &t.tok) {
            Some(Tok::Sym(s)) => Some(s.as_str()),
            _ => None,
        }
    }

    /// `?a ?b - t1 ?c - t2` style typed lists. With `require_var` unset,
    /// bare names are accepted (object declarations).
    fn typed_list(&mut self, require_var: bool) -> Result<Vec<TypedParam>, PddlError> {
        let mut out = Vec::new();
        let mut pending: Vec<String> = Vec::new();
        while !self.at_rparen() {
            let s = self.symbol()?;
            if s == "-" {
                let ty = self.symbol()?;
                for name in pending.drain(..) {
                    out.push(TypedParam { name, ty: ty.clone() });
                }
            } else {
                let name = match s.strip_prefix('?') {
                    Some(v) => v.to_string(),
                    None if !require_var => s,
                    None => return Err(self.rewind_err("expected `?variable`")),
                };
                pending.push(name);
            }
        }
        for name in pending {
            out.push(TypedParam {
                name,
                ty: "object".to_string(),
            });
        }
        Ok(out)
    }

    fn term(&mut self) -> Result<Term, PddlError> {
        let s = self.symbol()?;
        Ok(match s.strip_prefix('?') {
            Some(v) => Term::Var(v.to_string()),
            None => Term::Const(s),
        })
    }

    /// Parse the inside of `(head args...)`, lparen already consumed.
    fn atom_body(&mut self, head: String) -> Result<Atom, PddlError> {
        let mut args = Vec::new();
        while !self.at_rparen() {
            args.push(self.term()?);
        }
        self.expect_rparen()?;
        Ok(Atom { pred: head, args })
    }

    fn fluent_ref(&mut self) -> Result<FluentRef, PddlError> {
        self.expect_lparen()?;
        let func = self.symbol()?;
        let mut args = Vec::new();
        while !self.at_rparen() {
            args.push(self.term()?);
        }
        self.expect_rparen()?;
        Ok(FluentRef { func, args })
    }

    fn num_expr(&mut self) -> Result<NumExpr, PddlError> {
        if let Some(s) = self.peek_symbol() {
            if let Ok(v) = s.parse::<f64>() {
                self.next()?;
                return Ok(NumExpr::Constant(v));
            }
            return Err(self.err(format!("expected number or fluent, got `{s}`")));
        }
        Ok(NumExpr::Fluent(self.fluent_ref()?))
    }

    /// A single condition: positive literal, negative literal or numeric
    /// comparison. Lparen NOT yet consumed.
    fn condition(&mut self) -> Result<Condition, PddlError> {
        self.expect_lparen()?;
        let head = self.symbol()?;
        match head.as_str() {
            "=" | ">" | ">=" => {
                let cmp = match head.as_str() {
                    "=" => Comparison::Eq,
                    ">" => Comparison::Gt,
                    _ => Comparison::Ge,
                };
                let lhs = self.num_expr()?;
                let rhs = self.num_expr()?;
                self.expect_rparen()?;
                Ok(Condition::Num(cmp, lhs, rhs))
            }
            "<" | "<=" => Err(self.unsupported(head)),
            "not" => {
                self.expect_lparen()?;
                let p = self.symbol()?;
                let atom = self.atom_body(p)?;
                self.expect_rparen()?;
                Ok(Condition::NotPred(atom))
            }
            "forall" | "exists" | "imply" | "or" | "when" => Err(self.unsupported(head)),
            _ => Ok(Condition::Pred(self.atom_body(head)?)),
        }
    }

    /// `(at start <cond>)`, `(at end <cond>)` or `(over all <cond>)`.
    fn timed_condition(&mut self) -> Result<TimedCondition, PddlError> {
        self.expect_lparen()?;
        let head = self.symbol()?;
        let time = match head.as_str() {
            "at" => match self.symbol()?.as_str() {
                "start" => TimeQualifier::AtStart,
                "end" => TimeQualifier::AtEnd,
                other => return Err(self.err(format!("expected `start`/`end`, got `{other}`"))),
            },
            "over" => {
                self.expect_symbol("all")?;
                TimeQualifier::OverAll
            }
            other => return Err(self.err(format!("expected temporal qualifier, got `{other}`"))),
        };
        let cond = self.condition()?;
        self.expect_rparen()?;
        Ok(TimedCondition { time, cond })
    }

    fn timed_condition_list(&mut self) -> Result<Vec<TimedCondition>, PddlError> {
        // Either a single timed condition or `(and ...)`.
        let save = self.pos;
        self.expect_lparen()?;
        if self.peek_symbol() == Some("and") {
            self.symbol()?;
            let mut out = Vec::new();
            while !self.at_rparen() {
                out.push(self.timed_condition()?);
            }
            self.expect_rparen()?;
            Ok(out)
        } else {
            self.pos = save;
            Ok(vec![self.timed_condition()?])
        }
    }

    fn effect(&mut self) -> Result<Effect, PddlError> {
        self.expect_lparen()?;
        let head = self.symbol()?;
        match head.as_str() {
            "not" => {
                self.expect_lparen()?;
                let p = self.symbol()?;
                let atom = self.atom_body(p)?;
                self.expect_rparen()?;
                Ok(Effect::Del(atom))
            }
            "increase" => {
                let fl = self.fluent_ref()?;
                let v = self.num_expr()?;
                self.expect_rparen()?;
                Ok(Effect::Increase(fl, v))
            }
            "assign" => {
                let fl = self.fluent_ref()?;
                let v = self.num_expr()?;
                self.expect_rparen()?;
                Ok(Effect::Assign(fl, v))
            }
            "decrease" | "scale-up" | "scale-down" | "when" | "forall" => {
                Err(self.unsupported(head))
            }
            _ => Ok(Effect::Add(self.atom_body(head)?)),
        }
    }

    fn timed_effect(&mut self) -> Result<TimedEffect, PddlError> {
        self.expect_lparen()?;
        self.expect_symbol("at")?;
        let time = match self.symbol()?.as_str() {
            "start" => TimeQualifier::AtStart,
            "end" => TimeQualifier::AtEnd,
            other => return Err(self.err(format!("expected `start`/`end`, got `{other}`"))),
        };
        let eff = self.effect()?;
        self.expect_rparen()?;
        Ok(TimedEffect { time, eff })
    }

    fn timed_effect_list(&mut self) -> Result<Vec<TimedEffect>, PddlError> {
        let save = self.pos;
        self.expect_lparen()?;
        if self.peek_symbol() == Some("and") {
            self.symbol()?;
            let mut out = Vec::new();
            while !self.at_rparen() {
                out.push(self.timed_effect()?);
            }
            self.expect_rparen()?;
            Ok(out)
        } else {
            self.pos = save;
            Ok(vec![self.timed_effect()?])
        }
    }

    fn durative_action(&mut self) -> Result<ActionSchema, PddlError> {
        let name = self.symbol()?;
        let mut params = Vec::new();
        let mut duration = None;
        let mut conditions = Vec::new();
        let mut effects = Vec::new();
        while !self.at_rparen() {
            let key = self.symbol()?;
            match key.as_str() {
                ":parameters" => {
                    self.expect_lparen()?;
                    params = self.typed_list(true)?;
                    self.expect_rparen()?;
                }
                ":duration" => {
                    // (= ?duration <expr>)
                    self.expect_lparen()?;
                    self.expect_symbol("=")?;
                    self.expect_symbol("?duration")?;
                    duration = Some(self.num_expr()?);
                    self.expect_rparen()?;
                }
                ":condition" => {
                    conditions = self.timed_condition_list()?;
                }
                ":effect" => {
                    effects = self.timed_effect_list()?;
                }
                other => return Err(self.err(format!("unexpected key `{other}` in action"))),
            }
        }
        self.expect_rparen()?;
        Ok(ActionSchema {
            name,
            params,
            duration: duration.ok_or_else(|| self.err("action missing :duration"))?,
            conditions,
            effects,
        })
    }

    fn domain(&mut self) -> Result<DomainDef, PddlError> {
        self.expect_lparen()?;
        self.expect_symbol("define")?;
        self.expect_lparen()?;
        self.expect_symbol("domain")?;
        let name = self.symbol()?;
        self.expect_rparen()?;
        let mut domain = DomainDef {
            name,
            requirements: Vec::new(),
            types: Vec::new(),
            predicates: Vec::new(),
            functions: Vec::new(),
            actions: Vec::new(),
        };
        while !self.at_rparen() {
            self.expect_lparen()?;
            let key = self.symbol()?;
            match key.as_str() {
                ":requirements" => {
                    while !self.at_rparen() {
                        let r = self.symbol()?;
                        domain.requirements.push(
                            r.strip_prefix(':')
                                .ok_or_else(|| self.rewind_err("expected `:requirement`"))?
                                .to_string(),
                        );
                    }
                    self.expect_rparen()?;
                }
                ":types" => {
                    while !self.at_rparen() {
                        let t = self.symbol()?;
                        if t == "-" {
                            return Err(self.unsupported("type hierarchy"));
                        }
                        domain.types.push(t);
                    }
                    self.expect_rparen()?;
                }
                ":predicates" => {
                    while !self.at_rparen() {
                        self.expect_lparen()?;
                        let pname = self.symbol()?;
                        let params = self.typed_list(true)?;
                        self.expect_rparen()?;
                        domain.predicates.push(PredicateDecl { name: pname, params });
                    }
                    self.expect_rparen()?;
                }
                ":functions" => {
                    while !self.at_rparen() {
                        self.expect_lparen()?;
                        let fname = self.symbol()?;
                        let params = self.typed_list(true)?;
                        self.expect_rparen()?;
                        domain.functions.push(FunctionDecl { name: fname, params });
                    }
                    self.expect_rparen()?;
                }
                ":durative-action" => {
                    domain.actions.push(self.durative_action()?);
                }
                ":action" => return Err(self.unsupported(":action (non-durative)")),
                other => return Err(self.unsupported(other)),
            }
        }
        self.expect_rparen()?;
        Ok(domain)
    }

    fn problem(&mut self) -> Result<ProblemDef, PddlError> {
        self.expect_lparen()?;
        self.expect_symbol("define")?;
        self.expect_lparen()?;
        self.expect_symbol("problem")?;
        let name = self.symbol()?;
        self.expect_rparen()?;
        let mut problem = ProblemDef {
            name,
            domain: String::new(),
            objects: Vec::new(),
            init: Vec::new(),
            goal: Vec::new(),
            attachments: Attachments::default(),
        };
        while !self.at_rparen() {
            self.expect_lparen()?;
            let key = self.symbol()?;
            match key.as_str() {
                ":domain" => {
                    problem.domain = self.symbol()?;
                    self.expect_rparen()?;
                }
                ":objects" => {
                    let params = self.typed_list(false)?;
                    self.expect_rparen()?;
                    // bare names allowed: objects are constants.
                    problem.objects = params
                        .into_iter()
                        .map(|p| ObjectDecl {
                            name: p.name,
                            ty: p.ty,
                        })
                        .collect();
                }
                ":init" => {
                    while !self.at_rparen() {
                        self.expect_lparen()?;
                        let head = self.symbol()?;
                        if head == "=" {
                            let fl = self.fluent_ref()?;
                            let v = match self.num_expr()? {
                                NumExpr::Constant(v) => v,
                                NumExpr::Fluent(_) => {
                                    return Err(self.err("init assignment must be a constant"))
                                }
                            };
                            self.expect_rparen()?;
                            problem.init.push(InitItem::FluentAssign(fl, v));
                        } else {
                            let atom = self.atom_body(head)?;
                            problem.init.push(InitItem::Prop(atom));
                        }
                    }
                    self.expect_rparen()?;
                }
                ":goal" => {
                    let save = self.pos;
                    self.expect_lparen()?;
                    if self.peek_symbol() == Some("and") {
                        self.symbol()?;
                        while !self.at_rparen() {
                            problem.goal.push(self.condition()?);
                        }
                        self.expect_rparen()?;
                    } else {
                        self.pos = save;
                        problem.goal.push(self.condition()?);
                    }
                    self.expect_rparen()?;
                }
                ":attachments" => {
                    while !self.at_rparen() {
                        self.expect_lparen()?;
                        let kind = self.symbol()?;
                        let mut names = Vec::new();
                        while !self.at_rparen() {
                            names.push(self.symbol()?);
                        }
                        self.expect_rparen()?;
                        match kind.as_str() {
                            "direct" => problem.attachments.direct = names,
                            "indirect" => problem.attachments.indirect = names,
                            "trigger" => problem.attachments.trigger = names,
                            other => {
                                return Err(
                                    self.err(format!("unknown attachment class `{other}`"))
                                )
                            }
                        }
                    }
                    self.expect_rparen()?;
                }
                ":metric" => return Err(self.unsupported(":metric")),
                other => return Err(self.unsupported(other)),
            }
        }
        self.expect_rparen()?;
        Ok(problem)
    }
}

fn validate_domain(d: &DomainDef) -> Result<(), PddlError> {
    let mut names = std::collections::HashSet::new();
    for a in &d.actions {
        if !names.insert(a.name.clone()) {
            return Err(PddlError::DuplicateAction(a.name.clone()));
        }
    }
    let pred_arity: std::collections::HashMap<&str, usize> = d
        .predicates
        .iter()
        .map(|p| (p.name.as_str(), p.params.len()))
        .collect();
    let func_arity: std::collections::HashMap<&str, usize> = d
        .functions
        .iter()
        .map(|f| (f.name.as_str(), f.params.len()))
        .collect();
    let check_atom = |a: &Atom| -> Result<(), PddlError> {
        match pred_arity.get(a.pred.as_str()) {
            None => Err(PddlError::Undeclared(a.pred.clone())),
            Some(&n) if n != a.args.len() => Err(PddlError::Arity {
                name: a.pred.clone(),
                declared: n,
                used: a.args.len(),
            }),
            _ => Ok(()),
        }
    };
    let check_fluent = |fl: &FluentRef| -> Result<(), PddlError> {
        match func_arity.get(fl.func.as_str()) {
            None => Err(PddlError::Undeclared(fl.func.clone())),
            Some(&n) if n != fl.args.len() => Err(PddlError::Arity {
                name: fl.func.clone(),
                declared: n,
                used: fl.args.len(),
            }),
            _ => Ok(()),
        }
    };
    let check_expr = |e: &NumExpr| -> Result<(), PddlError> {
        match e {
            NumExpr::Constant(_) => Ok(()),
            NumExpr::Fluent(fl) => check_fluent(fl),
        }
    };
    for a in &d.actions {
        let params: std::collections::HashSet<&str> =
            a.params.iter().map(|p| p.name.as_str()).collect();
        let check_vars = |terms: &[Term]| -> Result<(), PddlError> {
            for t in terms {
                if let Term::Var(v) = t {
                    if !params.contains(v.as_str()) {
                        return Err(PddlError::Undeclared(format!("?{v} in action {}", a.name)));
                    }
                }
            }
            Ok(())
        };
        for tc in &a.conditions {
            match &tc.cond {
                Condition::Pred(at) | Condition::NotPred(at) => {
                    check_atom(at)?;
                    check_vars(&at.args)?;
                }
                Condition::Num(_, l, r) => {
                    check_expr(l)?;
                    check_expr(r)?;
                    for e in [l, r] {
                        if let NumExpr::Fluent(fl) = e {
                            check_vars(&fl.args)?;
                        }
                    }
                }
            }
        }
        for te in &a.effects {
            match &te.eff {
                Effect::Add(at) | Effect::Del(at) => {
                    check_atom(at)?;
                    check_vars(&at.args)?;
                }
                Effect::Increase(fl, v) | Effect::Assign(fl, v) => {
                    check_fluent(fl)?;
                    check_vars(&fl.args)?;
                    check_expr(v)?;
                    if let NumExpr::Fluent(vf) = v {
                        check_vars(&vf.args)?;
                    }
                }
            }
        }
        for p in &a.params {
            if !d.types.is_empty() && !d.types.contains(&p.ty) && p.ty != "object" {
                return Err(PddlError::TypeMismatch(format!(
                    "parameter ?{} of action {} has undeclared type {}",
                    p.name, a.name, p.ty
                )));
            }
        }
    }
    Ok(())
}

/// Parse a PDDL domain document.
pub fn parse_domain(text: &str) -> Result<DomainDef, PddlError> {
    let tokens = lex(text)?;
    if tokens.is_empty() {
        return Err(PddlError::Syntax {
            line: 1,
            col: 1,
            msg: "empty input".to_string(),
        });
    }
    let mut p = Parser { tokens, pos: 0 };
    let d = p.domain()?;
    validate_domain(&d)?;
    Ok(d)
}

/// Parse a PDDL problem document.
pub fn parse_problem(text: &str) -> Result<ProblemDef, PddlError> {
    let tokens = lex(text)?;
    if tokens.is_empty() {
        return Err(PddlError::Syntax {
            line: 1,
            col: 1,
            msg: "empty input".to_string(),
        });
    }
    let mut p = Parser { tokens, pos: 0 };
    p.problem()
}
