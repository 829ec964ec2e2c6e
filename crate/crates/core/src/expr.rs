//! Integer/boolean expression language used for guards, assignments,
//! message arguments and pre/post conditions.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub type Ident = String;

/// A runtime value.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Value {
    Int(i64),
    Bool(bool),
}

impl Value {
    pub fn ty(self) -> SemType {
        match self {
            Value::Int(_) => SemType::Int,
            Value::Bool(_) => SemType::Bool,
        }
    }

    pub fn as_bool(self) -> Option<bool> {
        match self {
            Value::Bool(b) => Some(b),
            Value::Int(_) => None,
        }
    }

    pub fn as_int(self) -> Option<i64> {
        match self {
            Value::Int(i) => Some(i),
            Value::Bool(_) => None,
        }
    }
}

impl fmt::Display for Value {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Value::Int(i) => write!(f, "{i}"),
            Value::Bool(b) => write!(f, "{b}"),
        }
    }
}

/// The two semantic types of the expression language.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SemType {
    Int,
    Bool,
}

impl SemType {
    /// Default value given to a freshly declared variable.
    pub fn default_value(self) -> Value {
        match self {
            SemType::Int => Value::Int(0),
            SemType::Bool => Value::Bool(false),
        }
    }

    pub fn keyword(self) -> &'static str {
        match self {
            SemType::Int => "int",
            SemType::Bool => "bool",
        }
    }
}

impl fmt::Display for SemType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.keyword())
    }
}

pub type Store = BTreeMap<Ident, Value>;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum BinOp {
    Add,
    Sub,
    Mul,
    Eq,
    Ne,
    Lt,
    Le,
    Gt,
    Ge,
    And,
    Or,
}

impl BinOp {
    pub fn symbol(self) -> &'static str {
        match self {
            BinOp::Add => "+",
            BinOp::Sub => "-",
            BinOp::Mul => "*",
            BinOp::Eq => "=",
            BinOp::Ne => "<>",
            BinOp::Lt => "<",
            BinOp::Le => "<=",
            BinOp::Gt => ">",
            BinOp::Ge => ">=",
            BinOp::And => "and",
            BinOp::Or => "or",
        }
    }

    pub(crate) fn precedence(self) -> u8 {
        match self {
            BinOp::Or => 1,
            BinOp::And => 2,
            BinOp::Eq | BinOp::Ne | BinOp::Lt | BinOp::Le | BinOp::Gt | BinOp::Ge => 4,
            BinOp::Add | BinOp::Sub => 5,
            BinOp::Mul => 6,
        }
    }

    pub fn is_comparison(self) -> bool {
        self.precedence() == 4
    }
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Expr {
    Int(i64),
    Bool(bool),
    Var(Ident),
    Neg(Box<Expr>),
    Not(Box<Expr>),
    Binary(BinOp, Box<Expr>, Box<Expr>),
}

impl Expr {
    pub fn var(name: impl Into<Ident>) -> Self {
        Expr::Var(name.into())
    }

    pub fn binary(op: BinOp, lhs: Expr, rhs: Expr) -> Self {
        Expr::Binary(op, Box::new(lhs), Box::new(rhs))
    }

    pub fn negation(e: Expr) -> Self {
        Expr::Not(Box::new(e))
    }

    pub fn minus(e: Expr) -> Self {
        Expr::Neg(Box::new(e))
    }

    pub fn is_true_literal(&self) -> bool {
        matches!(self, Expr::Bool(true))
    }

    pub fn free_vars(&self) -> BTreeSet<Ident> {
        let mut out = BTreeSet::new();
        self.collect_vars(&mut out);
        out
    }

    fn collect_vars(&self, out: &mut BTreeSet<Ident>) {
        match self {
            Expr::Int(_) | Expr::Bool(_) => {}
            Expr::Var(v) => {
                out.insert(v.clone());
            }
            Expr::Neg(e) | Expr::Not(e) => e.collect_vars(out),
            Expr::Binary(_, a, b) => {
                a.collect_vars(out);
                b.collect_vars(out);
            }
        }
    }

    pub fn depth(&self) -> usize {
        match self {
            Expr::Int(_) | Expr::Bool(_) | Expr::Var(_) => 1,
            Expr::Neg(e) | Expr::Not(e) => 1 + e.depth(),
            Expr::Binary(_, a, b) => 1 + a.depth().max(b.depth()),
        }
    }

    fn precedence(&self) -> u8 {
        match self {
            Expr::Binary(op, _, _) => op.precedence(),
            Expr::Not(_) => 3,
            Expr::Neg(_) => 7,
            Expr::Int(_) | Expr::Bool(_) | Expr::Var(_) => 8,
        }
    }

    fn write_prec(&self, f: &mut fmt::Formatter<'_>, min: u8) -> fmt::Result {
        let wrap = self.precedence() < min;
        if wrap {
            f.write_str("(")?;
        }
        match self {
            Expr::Int(i) => write!(f, "{i}")?,
            Expr::Bool(b) => write!(f, "{b}")?,
            Expr::Var(v) => f.write_str(v)?,
            Expr::Neg(inner) => {
                f.write_str("-")?;
                // `-3` reads back as a literal and `--` opens a comment
                let needs_parens = matches!(inner.as_ref(), Expr::Int(_) | Expr::Neg(_));
                if needs_parens {
                    f.write_str("(")?;
                    inner.write_prec(f, 0)?;
                    f.write_str(")")?;
                } else {
                    inner.write_prec(f, 7)?;
                }
            }
            Expr::Not(inner) => {
                f.write_str("not ")?;
                inner.write_prec(f, 3)?;
            }
            Expr::Binary(op, a, b) => {
                let p = op.precedence();
                if op.is_comparison() {
                    a.write_prec(f, p + 1)?;
                    write!(f, " {} ", op.symbol())?;
                    b.write_prec(f, p + 1)?;
                } else {
                    a.write_prec(f, p)?;
                    write!(f, " {} ", op.symbol())?;
                    b.write_prec(f, p + 1)?;
                }
            }
        }
        if wrap {
            f.write_str(")")?;
        }
        Ok(())
    }
}

impl fmt::Display for Expr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        self.write_prec(f, 0)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum EvalError {
    #[error("unbound variable `{0}`")]
    UnboundVariable(Ident),
    #[error("type mismatch in `{0}`")]
    TypeMismatch(String),
}

/// Evaluates `expr` under `store`. Arithmetic wraps on overflow so that
/// evaluation is total on well-typed expressions.
pub fn eval_expr(expr: &Expr, store: &Store) -> Result<Value, EvalError> {
    match expr {
        Expr::Int(i) => Ok(Value::Int(*i)),
        Expr::Bool(b) => Ok(Value::Bool(*b)),
        Expr::Var(v) => store
            .get(v)
            .copied()
            .ok_or_else(|| EvalError::UnboundVariable(v.clone())),
        Expr::Neg(e) => match eval_expr(e, store)? {
            Value::Int(i) => Ok(Value::Int(i.wrapping_neg())),
            Value::Bool(_) => Err(EvalError::TypeMismatch(expr.to_string())),
        },
        Expr::Not(e) => match eval_expr(e, store)? {
            Value::Bool(b) => Ok(Value::Bool(!b)),
            Value::Int(_) => Err(EvalError::TypeMismatch(expr.to_string())),
        },
        Expr::Binary(op, a, b) => {
            let lhs = eval_expr(a, store)?;
            let rhs = eval_expr(b, store)?;
            apply_binary(*op, lhs, rhs).ok_or_else(|| EvalError::TypeMismatch(expr.to_string()))
        }
    }
}

pub(crate) fn apply_binary(op: BinOp, lhs: Value, rhs: Value) -> Option<Value> {
    use Value::{Bool, Int};
    Some(match (op, lhs, rhs) {
        (BinOp::Add, Int(a), Int(b)) => Int(a.wrapping_add(b)),
        (BinOp::Sub, Int(a), Int(b)) => Int(a.wrapping_sub(b)),
        (BinOp::Mul, Int(a), Int(b)) => Int(a.wrapping_mul(b)),
        (BinOp::Lt, Int(a), Int(b)) => Bool(a < b),
        (BinOp::Le, Int(a), Int(b)) => Bool(a <= b),
        (BinOp::Gt, Int(a), Int(b)) => Bool(a > b),
        (BinOp::Ge, Int(a), Int(b)) => Bool(a >= b),
        (BinOp::Eq, a, b) if a.ty() == b.ty() => Bool(a == b),
        (BinOp::Ne, a, b) if a.ty() == b.ty() => Bool(a != b),
        (BinOp::And, Bool(a), Bool(b)) => Bool(a && b),
        (BinOp::Or, Bool(a), Bool(b)) => Bool(a || b),
        _ => return None,
    })
}

/// A value in the analysis domain: either concretely known or unknown (top).
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum AbstractValue {
    Known(Value),
    Unknown,
}

impl AbstractValue {
    pub fn known(self) -> Option<Value> {
        match self {
            AbstractValue::Known(v) => Some(v),
            AbstractValue::Unknown => None,
        }
    }
}

impl From<Value> for AbstractValue {
    fn from(v: Value) -> Self {
        AbstractValue::Known(v)
    }
}

impl fmt::Display for AbstractValue {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            AbstractValue::Known(v) => v.fmt(f),
            AbstractValue::Unknown => f.write_str("?"),
        }
    }
}

impl Serialize for AbstractValue {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        match self {
            AbstractValue::Known(v) => v.serialize(s),
            AbstractValue::Unknown => s.serialize_str("?"),
        }
    }
}

pub type AbstractStore = BTreeMap<Ident, AbstractValue>;

/// Strict abstract evaluation: any unknown or missing operand makes the result
/// unknown. Type errors also collapse to unknown.
pub fn eval_abstract(expr: &Expr, store: &AbstractStore) -> AbstractValue {
    fn go(expr: &Expr, store: &AbstractStore) -> Option<Value> {
        match expr {
            Expr::Int(i) => Some(Value::Int(*i)),
            Expr::Bool(b) => Some(Value::Bool(*b)),
            Expr::Var(v) => store.get(v).and_then(|a| a.known()),
            Expr::Neg(e) => match go(e, store)? {
                Value::Int(i) => Some(Value::Int(i.wrapping_neg())),
                Value::Bool(_) => None,
            },
            Expr::Not(e) => match go(e, store)? {
                Value::Bool(b) => Some(Value::Bool(!b)),
                Value::Int(_) => None,
            },
            Expr::Binary(op, a, b) => apply_binary(*op, go(a, store)?, go(b, store)?),
        }
    }
    go(expr, store).map_or(AbstractValue::Unknown, AbstractValue::Known)
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum TypeError {
    #[error("undeclared variable `{0}`")]
    Undeclared(Ident),
    #[error("`{expr}` expects {expected} operands")]
    Operand { expr: String, expected: SemType },
    #[error("`{0}` compares values of different types")]
    Mixed(String),
}

/// Infers the type of `expr` given declared variable types.
pub fn type_of(expr: &Expr, env: &BTreeMap<Ident, SemType>) -> Result<SemType, TypeError> {
    let expect = |e: &Expr, want: SemType, whole: &Expr| -> Result<(), TypeError> {
        if type_of(e, env)? == want {
            Ok(())
        } else {
            Err(TypeError::Operand {
                expr: whole.to_string(),
                expected: want,
            })
        }
    };
    match expr {
        Expr::Int(_) => Ok(SemType::Int),
        Expr::Bool(_) => Ok(SemType::Bool),
        Expr::Var(v) => env.get(v).copied().ok_or_else(|| TypeError::Undeclared(v.clone())),
        Expr::Neg(e) => expect(e, SemType::Int, expr).map(|_| SemType::Int),
        Expr::Not(e) => expect(e, SemType::Bool, expr).map(|_| SemType::Bool),
        Expr::Binary(op, a, b) => match op {
            BinOp::Add | BinOp::Sub | BinOp::Mul => {
                expect(a, SemType::Int, expr)?;
                expect(b, SemType::Int, expr)?;
                Ok(SemType::Int)
            }
            BinOp::Lt | BinOp::Le | BinOp::Gt | BinOp::Ge => {
                expect(a, SemType::Int, expr)?;
                expect(b, SemType::Int, expr)?;
                Ok(SemType::Bool)
            }
            BinOp::And | BinOp::Or => {
                expect(a, SemType::Bool, expr)?;
                expect(b, SemType::Bool, expr)?;
                Ok(SemType::Bool)
            }
            BinOp::Eq | BinOp::Ne => {
                if type_of(a, env)? == type_of(b, env)? {
                    Ok(SemType::Bool)
                } else {
                    Err(TypeError::Mixed(expr.to_string()))
                }
            }
        },
    }
}
