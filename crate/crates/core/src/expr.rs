//! Scalar expressions for declaratively described problems (`mu1 * 2.0`,
//! `math::exp(4.0 * x * y)`, ...). Parsing and evaluation are delegated to `evalexpr`.

use std::fmt;

use evalexpr::{
    build_operator_tree, ContextWithMutableVariables, DefaultNumericTypes, HashMapContext, Node,
    Value,
};

use crate::error::{Error, Result};

#[derive(Clone)]
pub struct Expr {
    source: String,
    node: Node<DefaultNumericTypes>,
}

impl fmt::Debug for Expr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Expr({:?})", self.source)
    }
}

impl Expr {
    /// Parse `source`, accepting only the listed free variables.
    pub fn parse(source: &str, allowed: &[&str]) -> Result<Self> {
        let node = build_operator_tree::<DefaultNumericTypes>(source).map_err(|e| {
            Error::Expression {
                expr: source.to_string(),
                message: e.to_string(),
            }
        })?;
        for var in node.iter_variable_identifiers() {
            if !allowed.contains(&var) {
                return Err(Error::Expression {
                    expr: source.to_string(),
                    message: format!("unknown variable `{var}` (allowed: {})", allowed.join(", ")),
                });
            }
        }
        Ok(Expr {
            source: source.to_string(),
            node,
        })
    }

    pub fn source(&self) -> &str {
        &self.source
    }

    pub fn eval(&self, vars: &[(&str, f64)]) -> Result<f64> {
        let mut ctx = HashMapContext::<DefaultNumericTypes>::new();
        for (name, value) in vars {
            ctx.set_value((*name).to_string(), Value::Float(*value))
                .map_err(|e| self.fail(e))?;
        }
        let v = self
            .node
            .eval_number_with_context(&ctx)
            .map_err(|e| self.fail(e))?;
        if v.is_finite() {
            Ok(v)
        } else {
            Err(Error::Expression {
                expr: self.source.clone(),
                message: format!("non-finite value {v}"),
            })
        }
    }

    fn fail(&self, e: impl fmt::Display) -> Error {
        Error::Expression {
            expr: self.source.clone(),
            message: e.to_string(),
        }
    }
}
