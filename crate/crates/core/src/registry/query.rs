use std::collections::BTreeMap;
use std::ops::RangeInclusive;

use crate::expr::{eval_expr, Expr, Ident, SemType, Store, Value};

use super::{RegistryError, ServiceDescriptor};

/// Integer values tried when deciding entailment.
pub const ENTAILMENT_DOMAIN: RangeInclusive<i64> = -8..=8;

/// Entailment over more variables than this is not attempted (it would
/// mean more than 17^5 evaluations) and counts as not entailed.
pub const ENTAILMENT_MAX_VARS: usize = 5;

/// Discovery criteria; a descriptor matches when every present criterion
/// holds. Build with [`Query::builder`].
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Query {
    pub name_pattern: Option<glob::Pattern>,
    pub param_arity: Option<usize>,
    pub result_type: Option<SemType>,
    pub required_properties: Vec<Ident>,
    /// The values the client will call with; must imply the service's
    /// precondition.
    pub entailment: Option<Expr>,
}

#[derive(Debug, Clone, Default)]
pub struct QueryBuilder {
    name_pattern: Option<String>,
    param_arity: Option<usize>,
    result_type: Option<SemType>,
    required_properties: Vec<Ident>,
    entailment: Option<Expr>,
}

impl QueryBuilder {
    pub fn name(mut self, pattern: impl Into<String>) -> Self {
        self.name_pattern = Some(pattern.into());
        self
    }

    pub fn arity(mut self, n: usize) -> Self {
        self.param_arity = Some(n);
        self
    }

    pub fn result(mut self, ty: SemType) -> Self {
        self.result_type = Some(ty);
        self
    }

    pub fn property(mut self, p: impl Into<Ident>) -> Self {
        self.required_properties.push(p.into());
        self
    }

    pub fn entails(mut self, e: Expr) -> Self {
        self.entailment = Some(e);
        self
    }

    pub fn build(self) -> Result<Query, RegistryError> {
        let empty = self.name_pattern.is_none()
            && self.param_arity.is_none()
            && self.result_type.is_none()
            && self.required_properties.is_empty()
            && self.entailment.is_none();
        if empty {
            return Err(RegistryError::EmptyQuery);
        }
        let name_pattern = self
            .name_pattern
            .map(|p| glob::Pattern::new(&p).map_err(|e| RegistryError::BadPattern(format!("{p}: {e}"))))
            .transpose()?;
        Ok(Query {
            name_pattern,
            param_arity: self.param_arity,
            result_type: self.result_type,
            required_properties: self.required_properties,
            entailment: self.entailment,
        })
    }
}

impl Query {
    pub fn builder() -> QueryBuilder {
        QueryBuilder::default()
    }

    pub fn matches(&self, d: &ServiceDescriptor) -> bool {
        let sig = &d.signature;
        self.name_pattern.as_ref().is_none_or(|p| p.matches(&sig.name))
            && self.param_arity.is_none_or(|n| n == sig.params.len())
            && self.result_type.is_none_or(|t| sig.result == Some(t))
            && self.required_properties.iter().all(|p| d.properties.contains(p))
            && self.entailment.as_ref().is_none_or(|e| {
                let env: BTreeMap<Ident, SemType> = sig.params.iter().map(|p| (p.name.clone(), p.ty)).collect();
                entails(e, &d.precondition, &env)
            })
    }

    /// Number of requested property tags the descriptor carries.
    pub fn overlap(&self, d: &ServiceDescriptor) -> usize {
        self.required_properties
            .iter()
            .filter(|p| d.properties.contains(p))
            .count()
    }
}

/// Whether every store over the finite domain that makes `antecedent` true
/// also makes `consequent` true. Variables take their type from `env`
/// (integer when absent); integers range over [`ENTAILMENT_DOMAIN`].
/// A store where the antecedent is not a true boolean imposes nothing; one
/// where the consequent fails to evaluate to true refutes the entailment.
pub fn entails(antecedent: &Expr, consequent: &Expr, env: &BTreeMap<Ident, SemType>) -> bool {
    let mut vars: Vec<Ident> = antecedent.free_vars().into_iter().collect();
    for v in consequent.free_vars() {
        if !vars.contains(&v) {
            vars.push(v);
        }
    }
    if vars.len() > ENTAILMENT_MAX_VARS {
        return false;
    }
    let domain = |v: &Ident| -> Vec<Value> {
        match env.get(v).copied().unwrap_or(SemType::Int) {
            SemType::Int => ENTAILMENT_DOMAIN.map(Value::Int).collect(),
            SemType::Bool => vec![Value::Bool(false), Value::Bool(true)],
        }
    };
    let domains: Vec<Vec<Value>> = vars.iter().map(domain).collect();
    let mut idx = vec![0usize; vars.len()];
    loop {
        let store: Store = vars
            .iter()
            .zip(&idx)
            .zip(&domains)
            .map(|((v, &i), d)| (v.clone(), d[i]))
            .collect();
        if eval_expr(antecedent, &store) == Ok(Value::Bool(true)) && eval_expr(consequent, &store) != Ok(Value::Bool(true)) {
            return false;
        }
        // odometer increment
        let mut k = 0;
        loop {
            if k == idx.len() {
                return true;
            }
            idx[k] += 1;
            if idx[k] < domains[k].len() {
                break;
            }
            idx[k] = 0;
            k += 1;
        }
    }
}
