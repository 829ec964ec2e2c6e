//! Reachability goals over product states.
//!
//! ```text
//! goal := goal or goal | goal and goal | not goal | ( goal )
//!       | true | false | terminated
//!       | active(C.s) | at(C.s, state)
//! ```

use std::fmt;

use crate::assembly::ServiceKey;
use crate::model::StateId;
use super::ProductLts;
use crate::semantics::ProductState;
use crate::syntax::{ParseError, Parser, Tok};

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Goal {
    True,
    False,
    /// Every active service at a final state and no open call.
    Terminated,
    Active(ServiceKey),
    At(ServiceKey, StateId),
    Not(Box<Goal>),
    And(Box<Goal>, Box<Goal>),
    Or(Box<Goal>, Box<Goal>),
}

impl Goal {
    /// Evaluates the goal on `st`, a state of `p`.
    pub fn holds(&self, st: &ProductState, p: &ProductLts) -> bool {
        match self {
            Goal::True => true,
            Goal::False => false,
            Goal::Terminated => p.is_completed(st),
            Goal::Active(k) => st.active.contains_key(k),
            Goal::At(k, s) => st.location(k) == Some(s),
            Goal::Not(g) => !g.holds(st, p),
            Goal::And(a, b) => a.holds(st, p) && b.holds(st, p),
            Goal::Or(a, b) => a.holds(st, p) || b.holds(st, p),
        }
    }
}

impl fmt::Display for Goal {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Goal::True => f.write_str("true"),
            Goal::False => f.write_str("false"),
            Goal::Terminated => f.write_str("terminated"),
            Goal::Active(k) => write!(f, "active({k})"),
            Goal::At(k, s) => write!(f, "at({k}, {s})"),
            Goal::Not(g) => write!(f, "not ({g})"),
            Goal::And(a, b) => write!(f, "({a}) and ({b})"),
            Goal::Or(a, b) => write!(f, "({a}) or ({b})"),
        }
    }
}

pub fn parse_goal(text: &str) -> Result<Goal, ParseError> {
    let mut p = Parser::new(text)?;
    let g = or_goal(&mut p)?;
    p.expect(&Tok::Eof, "end of goal")?;
    Ok(g)
}

fn or_goal(p: &mut Parser) -> Result<Goal, ParseError> {
    let mut g = and_goal(p)?;
    while p.eat_kw("or") || p.eat(&Tok::OrSym) {
        g = Goal::Or(Box::new(g), Box::new(and_goal(p)?));
    }
    Ok(g)
}

fn and_goal(p: &mut Parser) -> Result<Goal, ParseError> {
    let mut g = not_goal(p)?;
    while p.eat_kw("and") || p.eat(&Tok::AndSym) {
        g = Goal::And(Box::new(g), Box::new(not_goal(p)?));
    }
    Ok(g)
}

fn not_goal(p: &mut Parser) -> Result<Goal, ParseError> {
    if p.eat_kw("not") || p.eat(&Tok::NotSym) {
        return Ok(Goal::Not(Box::new(not_goal(p)?)));
    }
    atom(p)
}

fn atom(p: &mut Parser) -> Result<Goal, ParseError> {
    if p.eat(&Tok::LParen) {
        let g = or_goal(p)?;
        p.expect(&Tok::RParen, "`)`")?;
        return Ok(g);
    }
    if p.eat_kw("true") {
        return Ok(Goal::True);
    }
    if p.eat_kw("false") {
        return Ok(Goal::False);
    }
    if p.eat_kw("terminated") {
        return Ok(Goal::Terminated);
    }
    if p.eat_kw("active") {
        p.expect(&Tok::LParen, "`(`")?;
        let k = service_key(p)?;
        p.expect(&Tok::RParen, "`)`")?;
        return Ok(Goal::Active(k));
    }
    if p.eat_kw("at") {
        p.expect(&Tok::LParen, "`(`")?;
        let k = service_key(p)?;
        p.expect(&Tok::Comma, "`,`")?;
        let mut state = p.ident("state name")?;
        while p.eat(&Tok::Dot) {
            state.push('.');
            state.push_str(&p.ident("state name")?);
        }
        p.expect(&Tok::RParen, "`)`")?;
        return Ok(Goal::At(k, StateId(state)));
    }
    Err(p.error("a goal"))
}

fn service_key(p: &mut Parser) -> Result<ServiceKey, ParseError> {
    let c = p.ident("component name")?;
    p.expect(&Tok::Dot, "`.`")?;
    let s = p.ident("service name")?;
    Ok(ServiceKey::new(c, s))
}
