//! Disjoint Array Access Programs.
//!
//! A program is a list of statements, each enclosed in its own loop nest.
//! Every statement evaluates an opaque function on `m` input elements and
//! writes one output element:
//!
//! ```text
//! S: A0[phi_0(r)] = f(A1[phi_1(r)], ..., Am[phi_m(r)])
//! ```
//!
//! Loop bounds are affine in a restricted sense: a single outer iteration
//! variable, a size parameter or nothing, plus an integer offset. Ranges are
//! half-open. The textual form is parsed by [`parse_program`]; the canonical
//! interchange form is the serde JSON encoding of [`Program`].

mod count;
mod parse;
mod poly;
#[cfg(test)]
pub(crate) mod testgen;
mod validate;

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use count::{iteration_count, iteration_count_with, symbolic_count, CountOptions, SymbolicCount};
pub use parse::parse_program;
pub use poly::{Monomial, Poly, RealPoly};
pub use validate::{validate_disjoint_access, Violation};

/// Errors raised while building or analysing a program.
#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum DaapError {
    #[error("syntax error at {line}:{col}: {message}")]
    Syntax {
        line: usize,
        col: usize,
        message: String,
    },
    #[error("undeclared variable `{name}` at {line}:{col}")]
    UndeclaredVariable {
        name: String,
        line: usize,
        col: usize,
    },
    #[error("array `{array}` used with {found} dimensions, previously {expected}")]
    DimensionMismatch {
        array: String,
        expected: usize,
        found: usize,
    },
    #[error("duplicate {kind} `{name}`")]
    Duplicate { kind: &'static str, name: String },
    #[error("disjoint access property violated: {}", fmt_violations(.0))]
    DisjointAccess(Vec<Violation>),
    #[error("statement `{statement}`: {message}")]
    Invalid { statement: String, message: String },
    #[error("parameter `{0}` is not bound to a value")]
    UnboundParameter(String),
}

fn fmt_violations(v: &[Violation]) -> String {
    v.iter().map(|x| x.to_string()).collect::<Vec<_>>().join("; ")
}

/// `base + offset`, where `base` names an outer iteration variable or a size
/// parameter (or is absent for a pure constant).
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Affine {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub base: Option<String>,
    #[serde(default)]
    pub offset: i64,
}

impl Affine {
    pub fn constant(offset: i64) -> Self {
        Affine { base: None, offset }
    }

    pub fn symbol(name: impl Into<String>, offset: i64) -> Self {
        Affine {
            base: Some(name.into()),
            offset,
        }
    }

    /// Evaluates the expression given values for every symbol it mentions.
    pub fn eval(&self, env: &HashMap<String, i64>) -> Result<i64, DaapError> {
        match &self.base {
            None => Ok(self.offset),
            Some(name) => env
                .get(name)
                .map(|v| v + self.offset)
                .ok_or_else(|| DaapError::UnboundParameter(name.clone())),
        }
    }
}

impl fmt::Display for Affine {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match (&self.base, self.offset) {
            (None, c) => write!(f, "{c}"),
            (Some(b), 0) => write!(f, "{b}"),
            (Some(b), c) if c > 0 => write!(f, "{b}+{c}"),
            (Some(b), c) => write!(f, "{b}-{}", -c),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct IterVar {
    pub name: String,
    /// Nesting depth, starting at 1 for the outermost loop.
    pub level: usize,
}

/// Half-open range `[lower, upper)`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RangeExpr {
    pub lower: Affine,
    pub upper: Affine,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Loop {
    pub var: IterVar,
    pub range: RangeExpr,
}

/// An array reference `A[v1, v2, ...]` whose components are iteration
/// variables.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct AccessVector {
    pub array: String,
    pub components: Vec<String>,
}

impl AccessVector {
    pub fn new(array: impl Into<String>, components: &[&str]) -> Self {
        AccessVector {
            array: array.into(),
            components: components.iter().map(|s| s.to_string()).collect(),
        }
    }

    /// Distinct iteration variables, in order of first appearance.
    pub fn variables(&self) -> Vec<&str> {
        let mut seen = Vec::new();
        for c in &self.components {
            if !seen.contains(&c.as_str()) {
                seen.push(c.as_str());
            }
        }
        seen
    }

    /// Number of distinct iteration variables; `A[k,k]` has access
    /// dimension 1 although the array is two-dimensional.
    pub fn access_dimension(&self) -> usize {
        self.variables().len()
    }
}

impl fmt::Display for AccessVector {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}[{}]", self.array, self.components.join(","))
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Statement {
    pub id: String,
    pub loop_nest: Vec<Loop>,
    pub output: AccessVector,
    pub inputs: Vec<AccessVector>,
    /// Arrays named by an `@outdeg1(..)` annotation.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub outdeg_one: Vec<String>,
}

impl Statement {
    /// Loop depth `l`.
    pub fn depth(&self) -> usize {
        self.loop_nest.len()
    }

    pub fn var_names(&self) -> Vec<&str> {
        self.loop_nest.iter().map(|l| l.var.name.as_str()).collect()
    }

    pub fn var_index(&self, name: &str) -> Option<usize> {
        self.loop_nest.iter().position(|l| l.var.name == name)
    }
}

/// Statement `producer` writes `array`, which a later statement `consumer`
/// reads.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ProducerConsumer {
    pub producer: String,
    pub consumer: String,
    pub array: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Program {
    pub parameters: Vec<String>,
    pub statements: Vec<Statement>,
    #[serde(default)]
    pub producer_consumer: Vec<ProducerConsumer>,
}

impl Program {
    /// Builds a program, checking its structural invariants and the
    /// disjoint access property, and deriving producer-consumer edges.
    pub fn new(parameters: Vec<String>, statements: Vec<Statement>) -> Result<Self, DaapError> {
        let mut program = Program {
            parameters,
            statements,
            producer_consumer: Vec::new(),
        };
        program.check_structure()?;
        let violations = validate_disjoint_access(&program);
        if !violations.is_empty() {
            return Err(DaapError::DisjointAccess(violations));
        }
        program.producer_consumer = derive_edges(&program.statements);
        Ok(program)
    }

    pub fn statement(&self, id: &str) -> Option<&Statement> {
        self.statements.iter().find(|s| s.id == id)
    }

    /// Arrays written by at least one statement.
    pub fn produced_arrays(&self) -> BTreeSet<&str> {
        self.statements
            .iter()
            .map(|s| s.output.array.as_str())
            .collect()
    }

    fn check_structure(&self) -> Result<(), DaapError> {
        let mut ids = BTreeSet::new();
        let params: BTreeSet<&str> = self.parameters.iter().map(String::as_str).collect();
        if params.len() != self.parameters.len() {
            return Err(DaapError::Duplicate {
                kind: "parameter",
                name: first_duplicate(&self.parameters),
            });
        }
        let mut dims: BTreeMap<&str, usize> = BTreeMap::new();
        for s in &self.statements {
            if !ids.insert(s.id.as_str()) {
                return Err(DaapError::Duplicate {
                    kind: "statement",
                    name: s.id.clone(),
                });
            }
            let mut in_scope: Vec<&str> = Vec::new();
            for (depth, lp) in s.loop_nest.iter().enumerate() {
                let name = lp.var.name.as_str();
                if lp.var.level != depth + 1 {
                    return Err(invalid(s, format!("loop `{name}` has level {} at depth {}", lp.var.level, depth + 1)));
                }
                if in_scope.contains(&name) || params.contains(name) {
                    return Err(DaapError::Duplicate {
                        kind: "iteration variable",
                        name: name.to_string(),
                    });
                }
                for bound in [&lp.range.lower, &lp.range.upper] {
                    if let Some(b) = &bound.base {
                        if !in_scope.contains(&b.as_str()) && !params.contains(b.as_str()) {
                            return Err(invalid(s, format!("bound of `{name}` references `{b}`, which is neither an outer variable nor a parameter")));
                        }
                    }
                }
                in_scope.push(name);
            }
            for acc in std::iter::once(&s.output).chain(&s.inputs) {
                for c in &acc.components {
                    if !in_scope.contains(&c.as_str()) {
                        return Err(invalid(s, format!("access {acc} uses `{c}`, which is not a loop variable of the statement")));
                    }
                }
                let d = acc.components.len();
                match dims.get(acc.array.as_str()) {
                    Some(&e) if e != d => {
                        return Err(DaapError::DimensionMismatch {
                            array: acc.array.clone(),
                            expected: e,
                            found: d,
                        })
                    }
                    _ => {
                        dims.insert(acc.array.as_str(), d);
                    }
                }
            }
            for a in &s.outdeg_one {
                if !s.inputs.iter().any(|i| &i.array == a) {
                    return Err(invalid(s, format!("@outdeg1 names `{a}`, which is not an input")));
                }
            }
        }
        Ok(())
    }
}

fn invalid(s: &Statement, message: String) -> DaapError {
    DaapError::Invalid {
        statement: s.id.clone(),
        message,
    }
}

fn first_duplicate(names: &[String]) -> String {
    let mut seen = BTreeSet::new();
    names
        .iter()
        .find(|n| !seen.insert(n.as_str()))
        .cloned()
        .unwrap_or_default()
}

/// Producer-consumer edges in program order: `S -> T` when `S` precedes `T`
/// and `T` reads the array `S` writes.
fn derive_edges(statements: &[Statement]) -> Vec<ProducerConsumer> {
    let mut edges = Vec::new();
    for (i, s) in statements.iter().enumerate() {
        for t in &statements[i + 1..] {
            if t.inputs.iter().any(|a| a.array == s.output.array) {
                edges.push(ProducerConsumer {
                    producer: s.id.clone(),
                    consumer: t.id.clone(),
                    array: s.output.array.clone(),
                });
            }
        }
    }
    edges
}

impl fmt::Display for Program {
    /// Prints the program in the textual DSL. Consecutive statements whose
    /// loop nests share a prefix are printed inside the shared loops.
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for p in &self.parameters {
            writeln!(f, "param {p}")?;
        }
        let mut open: Vec<&Loop> = Vec::new();
        for s in &self.statements {
            let common = open
                .iter()
                .zip(&s.loop_nest)
                .take_while(|(a, b)| **a == *b)
                .count();
            while open.len() > common {
                open.pop();
                writeln!(f, "{}}}", "  ".repeat(open.len()))?;
            }
            for lp in &s.loop_nest[common..] {
                writeln!(
                    f,
                    "{}loop {} in {}..{} {{",
                    "  ".repeat(open.len()),
                    lp.var.name,
                    lp.range.lower,
                    lp.range.upper
                )?;
                open.push(lp);
            }
            let inputs: Vec<String> = s.inputs.iter().map(|a| a.to_string()).collect();
            write!(
                f,
                "{}{}: {} = f({})",
                "  ".repeat(open.len()),
                s.id,
                s.output,
                inputs.join(", ")
            )?;
            for a in &s.outdeg_one {
                write!(f, " @outdeg1({a})")?;
            }
            writeln!(f)?;
        }
        while !open.is_empty() {
            open.pop();
            writeln!(f, "{}}}", "  ".repeat(open.len()))?;
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn access_dimension_counts_distinct_variables() {
        assert_eq!(AccessVector::new("A", &["k", "k"]).access_dimension(), 1);
        assert_eq!(AccessVector::new("A", &["i", "k"]).access_dimension(), 2);
        assert_eq!(AccessVector::new("D", &["i", "j", "k"]).access_dimension(), 3);
    }

    #[test]
    fn affine_display() {
        assert_eq!(Affine::symbol("k", 1).to_string(), "k+1");
        assert_eq!(Affine::symbol("N", -2).to_string(), "N-2");
        assert_eq!(Affine::symbol("N", 0).to_string(), "N");
        assert_eq!(Affine::constant(-3).to_string(), "-3");
    }
}
