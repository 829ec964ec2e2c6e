use std::collections::{BTreeMap, BTreeSet};

use super::lexer::{tokenize, Tok, Token};
use super::ParseError;
use crate::expr::{BinOp, Expr, Ident, SemType};
use crate::model::{
    Action, Behavior, ChannelRef, Communication, Component, Dependency, Direction, Label, Param,
    ServiceKind, ServiceSpec, Signature, StateId, Transition,
};

/// Reserved words, matched case-insensitively. They cannot be used as names.
pub const KEYWORDS: &[&str] = &[
    "component", "provides", "requires", "service", "interface", "subs", "cals", "reqs", "ints",
    "properties", "pre", "post", "variables", "behaviour", "behavior", "init", "final", "states",
    "end", "caller", "self", "true", "false", "and", "or", "not", "int", "integer", "bool",
    "boolean",
];

pub fn is_keyword(word: &str) -> bool {
    KEYWORDS.iter().any(|k| k.eq_ignore_ascii_case(word))
}

/// Parses every COMPONENT block of a `.kmelia` source. A top-level SERVICE
/// block is wrapped in a component of the same name that provides it.
pub fn parse_component_file(text: &str) -> Result<Vec<Component>, ParseError> {
    let mut p = Parser {
        toks: tokenize(text)?,
        pos: 0,
    };
    let mut out: Vec<Component> = Vec::new();
    loop {
        if p.peek_is(&Tok::Eof) {
            break;
        }
        let at = p.pos;
        let comp = if p.at_kw("component") {
            p.component()?
        } else if p.at_kw("service") {
            let (spec, _) = p.service(&BTreeSet::new())?;
            Component::new(spec.name()).with_service(spec)
        } else {
            return Err(p.error("COMPONENT or SERVICE"));
        };
        if out.iter().any(|c| c.name == comp.name) {
            return Err(p.error_at(at + 1, "a component name not used before"));
        }
        out.push(comp);
    }
    Ok(out)
}

/// Parses a standalone expression.
pub fn parse_expr(text: &str) -> Result<Expr, ParseError> {
    let mut p = Parser {
        toks: tokenize(text)?,
        pos: 0,
    };
    let e = p.expr()?;
    p.expect(&Tok::Eof, "end of expression")?;
    Ok(e)
}

pub(crate) struct Parser {
    pub(crate) toks: Vec<Token>,
    pub(crate) pos: usize,
}

impl Parser {
    pub(crate) fn new(text: &str) -> Result<Self, ParseError> {
        Ok(Parser {
            toks: tokenize(text)?,
            pos: 0,
        })
    }

    pub(crate) fn peek(&self) -> &Tok {
        &self.toks[self.pos].tok
    }

    fn peek_at(&self, k: usize) -> &Tok {
        let i = (self.pos + k).min(self.toks.len() - 1);
        &self.toks[i].tok
    }

    pub(crate) fn peek_is(&self, t: &Tok) -> bool {
        self.peek() == t
    }

    fn bump(&mut self) -> Tok {
        let t = self.toks[self.pos].tok.clone();
        if self.pos < self.toks.len() - 1 {
            self.pos += 1;
        }
        t
    }

    pub(crate) fn error(&self, expected: &str) -> ParseError {
        self.error_at(self.pos, expected)
    }

    fn error_at(&self, pos: usize, expected: &str) -> ParseError {
        let t = &self.toks[pos.min(self.toks.len() - 1)];
        ParseError {
            line: t.line,
            column: t.column,
            expected: expected.to_string(),
            found: t.tok.to_string(),
        }
    }

    pub(crate) fn eat(&mut self, t: &Tok) -> bool {
        if self.peek_is(t) {
            self.bump();
            true
        } else {
            false
        }
    }

    pub(crate) fn expect(&mut self, t: &Tok, expected: &str) -> Result<(), ParseError> {
        if self.eat(t) {
            Ok(())
        } else {
            Err(self.error(expected))
        }
    }

    pub(crate) fn at_kw(&self, kw: &str) -> bool {
        matches!(self.peek(), Tok::Ident(w) if w.eq_ignore_ascii_case(kw))
    }

    pub(crate) fn eat_kw(&mut self, kw: &str) -> bool {
        if self.at_kw(kw) {
            self.bump();
            true
        } else {
            false
        }
    }

    fn expect_kw(&mut self, kw: &str) -> Result<(), ParseError> {
        if self.eat_kw(kw) {
            Ok(())
        } else {
            Err(self.error(&kw.to_ascii_uppercase()))
        }
    }

    fn at_ident(&self) -> bool {
        matches!(self.peek(), Tok::Ident(w) if !is_keyword(w))
    }

    pub(crate) fn ident(&mut self, what: &str) -> Result<Ident, ParseError> {
        match self.peek() {
            Tok::Ident(w) if !is_keyword(w) => {
                let w = w.clone();
                self.bump();
                Ok(w)
            }
            _ => Err(self.error(what)),
        }
    }

    /// Comma-separated identifiers; empty when the next token is not a name.
    fn ident_list(&mut self, what: &str) -> Result<Vec<(Ident, usize)>, ParseError> {
        let mut out = Vec::new();
        if !self.at_ident() {
            return Ok(out);
        }
        loop {
            let at = self.pos;
            out.push((self.ident(what)?, at));
            if !self.eat(&Tok::Comma) {
                break;
            }
        }
        Ok(out)
    }

    fn sem_type(&mut self) -> Result<SemType, ParseError> {
        let ty = match self.peek() {
            Tok::Ident(w) if w.eq_ignore_ascii_case("int") || w.eq_ignore_ascii_case("integer") => {
                SemType::Int
            }
            Tok::Ident(w) if w.eq_ignore_ascii_case("bool") || w.eq_ignore_ascii_case("boolean") => {
                SemType::Bool
            }
            _ => return Err(self.error("type `int` or `bool`")),
        };
        self.bump();
        Ok(ty)
    }

    fn typed_names(&mut self, what: &str, closing: Option<&Tok>) -> Result<Vec<Param>, ParseError> {
        let mut out: Vec<Param> = Vec::new();
        if closing.is_some_and(|c| self.peek_is(c)) || (closing.is_none() && !self.at_ident()) {
            return Ok(out);
        }
        loop {
            let at = self.pos;
            let name = self.ident(what)?;
            if out.iter().any(|p| p.name == name) {
                return Err(self.error_at(at, &format!("a {what} not declared before")));
            }
            self.expect(&Tok::Colon, "`:`")?;
            let ty = self.sem_type()?;
            out.push(Param { name, ty });
            if !self.eat(&Tok::Comma) {
                break;
            }
        }
        Ok(out)
    }

    fn component(&mut self) -> Result<Component, ParseError> {
        self.expect_kw("component")?;
        let name = self.ident("component name")?;
        let mut provided = Vec::new();
        let mut required = Vec::new();
        if self.eat_kw("provides") {
            provided = self.ident_list("service name")?;
        }
        if self.eat_kw("requires") {
            required = self.ident_list("service name")?;
        }
        let required_names: BTreeSet<Ident> = required
            .iter()
            .filter(|(n, _)| !provided.iter().any(|(p, _)| p == n))
            .map(|(n, _)| n.clone())
            .collect();
        let mut comp = Component::new(name);
        while self.at_kw("service") {
            let (spec, at) = self.service(&required_names)?;
            if comp.services.contains_key(spec.name()) {
                return Err(self.error_at(at, "a service name not used before"));
            }
            comp.services.insert(spec.name().to_string(), spec);
        }
        if !self.eat_kw("end") {
            return Err(self.error("SERVICE or END"));
        }
        for (n, at) in provided.iter().chain(required.iter()) {
            if !comp.services.contains_key(n) {
                return Err(self.error_at(*at, "a name declared by a SERVICE block"));
            }
        }
        comp.provided = provided.into_iter().map(|(n, _)| n).collect();
        comp.required = required.into_iter().map(|(n, _)| n).collect();
        Ok(comp)
    }

    fn service(&mut self, required: &BTreeSet<Ident>) -> Result<(ServiceSpec, usize), ParseError> {
        self.expect_kw("service")?;
        let at = self.pos;
        let name = self.ident("service name")?;
        let mut sig = Signature::new(name.clone());
        if self.eat(&Tok::LParen) {
            sig.params = self.typed_names("parameter", Some(&Tok::RParen))?;
            self.expect(&Tok::RParen, "`)`")?;
        }
        if self.eat(&Tok::Colon) {
            sig.result = Some(self.sem_type()?);
        }
        let kind = if required.contains(&name) {
            ServiceKind::Required
        } else {
            ServiceKind::Provided
        };
        let mut spec = ServiceSpec::new(sig, kind);

        if self.eat_kw("interface") {
            spec.dependency = self.dependency()?;
        }
        if self.eat_kw("properties") {
            spec.properties = self.ident_list("property name")?.into_iter().map(|(n, _)| n).collect();
        }
        if self.eat_kw("pre") {
            spec.precondition = self.expr()?;
        }
        if self.eat_kw("post") {
            spec.postcondition = self.expr()?;
        }
        if self.eat_kw("variables") {
            let at = self.pos;
            let locals = self.typed_names("variable", None)?;
            if let Some(l) = locals
                .iter()
                .find(|l| spec.signature.params.iter().any(|p| p.name == l.name))
            {
                let msg = format!("variable `{}` not clashing with a parameter", l.name);
                return Err(self.error_at(at, &msg));
            }
            spec.locals = locals;
        }
        if self.eat_kw("behaviour") || self.eat_kw("behavior") {
            spec.behavior = self.behavior()?;
        }
        if !self.eat_kw("end") {
            return Err(self.error("END"));
        }
        Ok((spec, at))
    }

    fn dependency(&mut self) -> Result<Dependency, ParseError> {
        let mut dep = Dependency::default();
        loop {
            let which = ["subs", "cals", "reqs", "ints"].into_iter().find(|k| self.at_kw(k));
            let Some(which) = which else { break };
            self.bump();
            self.expect(&Tok::Colon, "`:`")?;
            let names = self.ident_list("service name")?.into_iter().map(|(n, _)| n);
            match which {
                "subs" => dep.subs.extend(names),
                "cals" => dep.cals.extend(names),
                "reqs" => dep.reqs.extend(names),
                _ => dep.ints.extend(names),
            }
        }
        Ok(dep)
    }

    fn behavior(&mut self) -> Result<Behavior, ParseError> {
        let mut initial: Option<StateId> = None;
        let mut finals = BTreeSet::new();
        let mut states = BTreeSet::new();
        let mut annotations: BTreeMap<StateId, BTreeSet<Ident>> = BTreeMap::new();
        let mut transitions = Vec::new();
        let mut touched = false;

        while !self.at_kw("end") {
            touched = true;
            if self.eat_kw("init") {
                let at = self.pos;
                let s = StateId(self.ident("state name")?);
                if initial.is_some() {
                    return Err(self.error_at(at, "a single INIT marker"));
                }
                initial = Some(s);
            } else if self.eat_kw("final") {
                let list = self.ident_list("state name")?;
                if list.is_empty() {
                    return Err(self.error("state name"));
                }
                finals.extend(list.into_iter().map(|(n, _)| StateId(n)));
            } else if self.eat_kw("states") {
                states.extend(self.ident_list("state name")?.into_iter().map(|(n, _)| StateId(n)));
            } else if self.at_ident() {
                let source = StateId(self.ident("state name")?);
                if self.eat(&Tok::Lt) {
                    let subs = self.ident_list("sub-service name")?;
                    self.expect(&Tok::Gt, "`>`")?;
                    annotations
                        .entry(source)
                        .or_default()
                        .extend(subs.into_iter().map(|(n, _)| n));
                } else {
                    self.expect(&Tok::ArrowStart, "`---` or `<`")?;
                    let label = self.label()?;
                    self.expect(&Tok::ArrowEnd, "`--->`")?;
                    let target = StateId(self.ident("target state")?);
                    transitions.push(Transition {
                        source,
                        label,
                        target,
                    });
                }
            } else {
                return Err(self.error("INIT, FINAL, STATES, a transition or END"));
            }
        }

        if !touched {
            return Ok(Behavior::default_for_service());
        }
        let Some(initial) = initial else {
            return Err(self.error("INIT marker before END"));
        };
        states.insert(initial.clone());
        states.extend(finals.iter().cloned());
        states.extend(annotations.keys().cloned());
        for t in &transitions {
            states.insert(t.source.clone());
            states.insert(t.target.clone());
        }
        Ok(Behavior {
            states,
            transitions,
            annotations,
            initial,
            finals,
        })
    }

    fn label(&mut self) -> Result<Label, ParseError> {
        let mut label = Label::default();
        if self.eat(&Tok::LBracket) {
            label.guard = Some(self.expr()?);
            self.expect(&Tok::RBracket, "`]`")?;
        }
        if self.peek_is(&Tok::ArrowEnd) {
            return Ok(label);
        }
        loop {
            label.actions.push(self.action()?);
            if !self.eat(&Tok::Semi) {
                break;
            }
        }
        Ok(label)
    }

    fn action(&mut self) -> Result<Action, ParseError> {
        let channel = if self.eat_kw("caller") {
            ChannelRef::Caller
        } else if self.eat_kw("self") {
            ChannelRef::SelfChannel
        } else {
            let name = self.ident("an action")?;
            if self.eat(&Tok::Assign) {
                let value = self.expr()?;
                return Ok(Action::Assign { target: name, value });
            }
            ChannelRef::Named(name)
        };
        let direction = match self.peek() {
            Tok::Bang => Direction::Send,
            Tok::BangBang => Direction::Call,
            Tok::Query => Direction::Receive,
            Tok::QueryQuery => Direction::Await,
            _ => return Err(self.error("`:=`, `!`, `?`, `!!` or `??`")),
        };
        self.bump();
        let message = self.ident("message name")?;
        let mut args = Vec::new();
        if self.eat(&Tok::LParen) {
            if !self.peek_is(&Tok::RParen) {
                loop {
                    if direction.binds() {
                        args.push(Expr::Var(self.ident("binder name")?));
                    } else {
                        args.push(self.expr()?);
                    }
                    if !self.eat(&Tok::Comma) {
                        break;
                    }
                }
            }
            self.expect(&Tok::RParen, "`)`")?;
        }
        Ok(Action::Comm(Communication {
            channel,
            direction,
            message,
            args,
        }))
    }

    pub(crate) fn expr(&mut self) -> Result<Expr, ParseError> {
        let mut lhs = self.and_expr()?;
        while self.eat_kw("or") || self.eat(&Tok::OrSym) {
            let rhs = self.and_expr()?;
            lhs = Expr::binary(BinOp::Or, lhs, rhs);
        }
        Ok(lhs)
    }

    fn and_expr(&mut self) -> Result<Expr, ParseError> {
        let mut lhs = self.not_expr()?;
        while self.eat_kw("and") || self.eat(&Tok::AndSym) {
            let rhs = self.not_expr()?;
            lhs = Expr::binary(BinOp::And, lhs, rhs);
        }
        Ok(lhs)
    }

    fn not_expr(&mut self) -> Result<Expr, ParseError> {
        if self.eat_kw("not") || self.eat(&Tok::NotSym) {
            return Ok(Expr::negation(self.not_expr()?));
        }
        self.cmp_expr()
    }

    fn cmp_expr(&mut self) -> Result<Expr, ParseError> {
        let lhs = self.add_expr()?;
        let op = match self.peek() {
            Tok::Eq => BinOp::Eq,
            Tok::Ne => BinOp::Ne,
            Tok::Lt => BinOp::Lt,
            Tok::Le => BinOp::Le,
            Tok::Gt => BinOp::Gt,
            Tok::Ge => BinOp::Ge,
            _ => return Ok(lhs),
        };
        self.bump();
        let rhs = self.add_expr()?;
        Ok(Expr::binary(op, lhs, rhs))
    }

    fn add_expr(&mut self) -> Result<Expr, ParseError> {
        let mut lhs = self.mul_expr()?;
        loop {
            let op = match self.peek() {
                Tok::Plus => BinOp::Add,
                Tok::Minus => BinOp::Sub,
                _ => return Ok(lhs),
            };
            self.bump();
            let rhs = self.mul_expr()?;
            lhs = Expr::binary(op, lhs, rhs);
        }
    }

    fn mul_expr(&mut self) -> Result<Expr, ParseError> {
        let mut lhs = self.unary()?;
        while self.eat(&Tok::Star) {
            let rhs = self.unary()?;
            lhs = Expr::binary(BinOp::Mul, lhs, rhs);
        }
        Ok(lhs)
    }

    fn unary(&mut self) -> Result<Expr, ParseError> {
        if self.peek_is(&Tok::Minus) {
            if let Tok::Int(n) = *self.peek_at(1) {
                let at = self.pos;
                self.bump();
                self.bump();
                let v = -(n as i128);
                return i64::try_from(v)
                    .map(Expr::Int)
                    .map_err(|_| self.error_at(at + 1, "integer literal in range"));
            }
            self.bump();
            return Ok(Expr::minus(self.unary()?));
        }
        self.atom()
    }

    fn atom(&mut self) -> Result<Expr, ParseError> {
        match self.peek().clone() {
            Tok::Int(n) => {
                let v = i64::try_from(n).map_err(|_| self.error("integer literal in range"))?;
                self.bump();
                Ok(Expr::Int(v))
            }
            Tok::LParen => {
                self.bump();
                let e = self.expr()?;
                self.expect(&Tok::RParen, "`)`")?;
                Ok(e)
            }
            Tok::Ident(w) if w.eq_ignore_ascii_case("true") => {
                self.bump();
                Ok(Expr::Bool(true))
            }
            Tok::Ident(w) if w.eq_ignore_ascii_case("false") => {
                self.bump();
                Ok(Expr::Bool(false))
            }
            Tok::Ident(w) if !is_keyword(&w) => {
                self.bump();
                Ok(Expr::Var(w))
            }
            _ => Err(self.error("expression")),
        }
    }
}
