use std::collections::HashMap;
use std::fmt;

use serde::{Deserialize, Serialize};

use super::{AccessVector, Affine, Program, Statement};

/// Two input accesses of one statement that reach the same element at some
/// iteration point.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Violation {
    pub statement: String,
    pub first: AccessVector,
    pub second: AccessVector,
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "statement {}: {} and {} can reference the same element",
            self.statement, self.first, self.second
        )
    }
}

/// Checks the disjoint access property.
///
/// The output is a fresh version of its element, so only pairs of inputs can
/// alias. For each pair reading the same array, equating the components
/// gives difference constraints that are combined with the loop bounds
/// (parameters are at least 1). A pair violates the property exactly when
/// that system is feasible, which Bellman-Ford decides.
pub fn validate_disjoint_access(program: &Program) -> Vec<Violation> {
    let mut out = Vec::new();
    for s in &program.statements {
        for (a, first) in s.inputs.iter().enumerate() {
            for second in &s.inputs[a + 1..] {
                if first.array == second.array && can_alias(s, &program.parameters, first, second) {
                    out.push(Violation {
                        statement: s.id.clone(),
                        first: first.clone(),
                        second: second.clone(),
                    });
                }
            }
        }
    }
    out
}

fn can_alias(s: &Statement, params: &[String], a: &AccessVector, b: &AccessVector) -> bool {
    // node 0 is the constant zero
    let mut node: HashMap<&str, usize> = HashMap::new();
    for p in params {
        let n = node.len() + 1;
        node.insert(p.as_str(), n);
    }
    for l in &s.loop_nest {
        let n = node.len() + 1;
        node.insert(l.var.name.as_str(), n);
    }
    let n = node.len() + 1;
    // edge (u, v, w) encodes x_v - x_u <= w
    let mut edges: Vec<(usize, usize, i64)> = Vec::new();
    let at = |e: &Affine| -> (usize, i64) {
        match &e.base {
            None => (0, e.offset),
            Some(b) => (node[b.as_str()], e.offset),
        }
    };
    for p in params {
        edges.push((node[p.as_str()], 0, -1));
    }
    for l in &s.loop_nest {
        let v = node[l.var.name.as_str()];
        let (lb, lo) = at(&l.range.lower);
        let (ub, uo) = at(&l.range.upper);
        // x_v >= x_lb + lo
        edges.push((v, lb, -lo));
        // x_v <= x_ub + uo - 1
        edges.push((ub, v, uo - 1));
    }
    for (x, y) in a.components.iter().zip(&b.components) {
        let (u, v) = (node[x.as_str()], node[y.as_str()]);
        edges.push((u, v, 0));
        edges.push((v, u, 0));
    }
    !has_negative_cycle(n, &edges)
}

fn has_negative_cycle(n: usize, edges: &[(usize, usize, i64)]) -> bool {
    let mut dist = vec![0i64; n];
    for _ in 0..n {
        let mut changed = false;
        for &(u, v, w) in edges {
            if dist[u] + w < dist[v] {
                dist[v] = dist[u] + w;
                changed = true;
            }
        }
        if !changed {
            return false;
        }
    }
    true
}

#[cfg(test)]
mod tests {
    use super::super::parse_program;
    use super::*;

    #[test]
    fn self_update_is_fine() {
        let p = parse_program("param N\nloop i in 0..N { S: A[i] = f(A[i]) }").unwrap();
        assert!(validate_disjoint_access(&p).is_empty());
    }

    #[test]
    fn diagonal_and_column_do_not_alias_below_diagonal() {
        let p = parse_program(
            "param N\nloop k in 0..N { loop i in k+1..N { S: A[i,k] = f(A[i,k], A[k,k]) } }",
        )
        .unwrap();
        assert!(validate_disjoint_access(&p).is_empty());
    }

    #[test]
    fn empty_domain_cannot_alias() {
        let bad = parse_program("param N\nloop i in 0..N { loop j in 0..N { S: y[i] = f(x[i], x[j]) } }");
        assert!(matches!(bad, Err(super::super::DaapError::DisjointAccess(_))));
        let empty = parse_program("param N\nloop i in 0..N { loop j in i+1..i+1 { S: y[i] = f(x[i], x[j]) } }");
        assert!(empty.is_ok());
    }
}
