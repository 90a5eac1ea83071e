//! Maximal subcomputation volume under a dominator budget.
//!
//! With `y_t = ln |R^t|` the problem
//!
//! ```text
//! max  sum_t y_t
//! s.t. ln sum_j w_j exp(a_j . y) <= ln X,   y >= 0
//! ```
//!
//! is convex. When the inputs touch pairwise disjoint variable sets the
//! optimum is a water-filling closed form; otherwise a log-barrier Newton
//! method brings the iterate close to the optimum and a Newton solve of the
//! KKT system on the detected active set finishes it to machine precision.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::BoundError;
use crate::daap::Statement;

/// Shape of a maximal subcomputation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SubcompShape {
    /// `|R^t|` per iteration variable.
    pub range_sizes: BTreeMap<String, f64>,
    /// `prod_t |R^t|`; infinite when some variable is unconstrained.
    pub volume: f64,
    /// `|A_j(R)|` per input, in statement order, before weighting.
    pub access_sizes: Vec<f64>,
    /// Set when the solver fell back to the per-variable over-approximation.
    #[serde(default)]
    pub approximate: bool,
}

/// One dominator-budget term: a weighted product of range sizes.
#[derive(Debug, Clone, PartialEq)]
pub(crate) struct Term {
    pub vars: Vec<usize>,
    pub weight: f64,
}

pub(crate) fn terms_for(s: &Statement, weights: &[f64]) -> Vec<Term> {
    s.inputs
        .iter()
        .zip(weights)
        .filter(|(_, w)| **w > 0.0)
        .map(|(a, w)| Term {
            vars: a
                .variables()
                .iter()
                .map(|v| s.var_index(v).expect("validated access"))
                .collect(),
            weight: *w,
        })
        .collect()
}

/// Smallest budget for which a one-point subcomputation fits.
pub(crate) fn min_budget(terms: &[Term]) -> f64 {
    terms.iter().map(|t| t.weight).sum()
}

/// Solves for the maximal shape of statement `s` with unit input weights.
pub fn solve_psi(s: &Statement, x: f64) -> Result<SubcompShape, BoundError> {
    solve_psi_weighted(s, &vec![1.0; s.inputs.len()], x)
}

/// As [`solve_psi`], with the access-size term of input `j` multiplied by
/// `weights[j]`. A zero weight removes the term.
pub fn solve_psi_weighted(s: &Statement, weights: &[f64], x: f64) -> Result<SubcompShape, BoundError> {
    let terms = terms_for(s, weights);
    let l = s.depth();
    let covered: Vec<bool> = (0..l)
        .map(|t| terms.iter().any(|term| term.vars.contains(&t)))
        .collect();
    let names = s.var_names();
    if covered.iter().any(|c| !c) {
        let mut range_sizes = BTreeMap::new();
        for (t, n) in names.iter().enumerate() {
            range_sizes.insert(n.to_string(), if covered[t] { 1.0 } else { f64::INFINITY });
        }
        return Ok(SubcompShape {
            range_sizes,
            volume: f64::INFINITY,
            access_sizes: access_sizes(s, &vec![0.0; l]),
            approximate: false,
        });
    }
    let need = min_budget(&terms);
    if x < need * (1.0 - 1e-12) {
        return Err(BoundError::Infeasible { x, minimum: need });
    }
    let (y, approximate) = if x <= need * (1.0 + 1e-12) {
        (vec![0.0; l], false)
    } else if disjoint(&terms) {
        (water_fill(&terms, l, x), false)
    } else {
        match barrier(&terms, l, x) {
            Some(y) => (polish(&terms, &y, x).unwrap_or(y), false),
            None => (over_approximation(&terms, l, x), true),
        }
    };
    let range_sizes = names
        .iter()
        .zip(&y)
        .map(|(n, v)| (n.to_string(), v.exp()))
        .collect();
    Ok(SubcompShape {
        range_sizes,
        volume: y.iter().sum::<f64>().exp(),
        access_sizes: access_sizes(s, &y),
        approximate,
    })
}

fn access_sizes(s: &Statement, y: &[f64]) -> Vec<f64> {
    s.inputs
        .iter()
        .map(|a| {
            a.variables()
                .iter()
                .map(|v| y[s.var_index(v).unwrap()])
                .sum::<f64>()
                .exp()
        })
        .collect()
}

fn disjoint(terms: &[Term]) -> bool {
    let mut seen = Vec::new();
    for t in terms {
        for v in &t.vars {
            if seen.contains(v) {
                return false;
            }
            seen.push(*v);
        }
    }
    true
}

/// Maximizes `prod_j P_j` subject to `sum_j w_j P_j <= X`, `P_j >= 1`.
fn water_fill(terms: &[Term], l: usize, x: f64) -> Vec<f64> {
    let mut clamped = vec![false; terms.len()];
    loop {
        let active: Vec<usize> = (0..terms.len()).filter(|j| !clamped[*j]).collect();
        let budget = x - terms
            .iter()
            .zip(&clamped)
            .filter(|(_, c)| **c)
            .map(|(t, _)| t.weight)
            .sum::<f64>();
        let share = budget / active.len() as f64;
        let worst = active
            .iter()
            .copied()
            .filter(|&j| share / terms[j].weight < 1.0)
            .max_by(|&a, &b| terms[a].weight.total_cmp(&terms[b].weight));
        match worst {
            Some(j) => clamped[j] = true,
            None => {
                let mut y = vec![0.0; l];
                for &j in &active {
                    let p = share / terms[j].weight;
                    for &v in &terms[j].vars {
                        y[v] = p.ln() / terms[j].vars.len() as f64;
                    }
                }
                return y;
            }
        }
    }
}

/// Per-variable bound `|R^t| <= X / w_j` for every term containing `t`;
/// an upper bound on the true optimum.
fn over_approximation(terms: &[Term], l: usize, x: f64) -> Vec<f64> {
    (0..l)
        .map(|t| {
            terms
                .iter()
                .filter(|term| term.vars.contains(&t))
                .map(|term| (x / term.weight).ln())
                .fold(f64::INFINITY, f64::min)
                .max(0.0)
        })
        .collect()
}

struct Lse {
    value: f64,
    grad: Vec<f64>,
    hess: Vec<Vec<f64>>,
}

/// `F(y) = ln sum_j w_j exp(a_j . y)` with derivatives.
fn lse(terms: &[Term], y: &[f64]) -> Lse {
    let l = y.len();
    let z: Vec<f64> = terms
        .iter()
        .map(|t| t.weight.ln() + t.vars.iter().map(|&v| y[v]).sum::<f64>())
        .collect();
    let zmax = z.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let e: Vec<f64> = z.iter().map(|v| (v - zmax).exp()).collect();
    let total: f64 = e.iter().sum();
    let pi: Vec<f64> = e.iter().map(|v| v / total).collect();
    let mut grad = vec![0.0; l];
    let mut hess = vec![vec![0.0; l]; l];
    for (t, p) in terms.iter().zip(&pi) {
        for &a in &t.vars {
            grad[a] += p;
            for &b in &t.vars {
                hess[a][b] += p;
            }
        }
    }
    for a in 0..l {
        for b in 0..l {
            hess[a][b] -= grad[a] * grad[b];
        }
    }
    Lse {
        value: zmax + total.ln(),
        grad,
        hess,
    }
}

fn barrier_value(terms: &[Term], y: &[f64], lnx: f64, tau: f64) -> Option<f64> {
    if y.iter().any(|v| *v <= 0.0) {
        return None;
    }
    let slack = lnx - lse(terms, y).value;
    if slack <= 0.0 {
        return None;
    }
    Some(-tau * y.iter().sum::<f64>() - slack.ln() - y.iter().map(|v| v.ln()).sum::<f64>())
}

fn barrier(terms: &[Term], l: usize, x: f64) -> Option<Vec<f64>> {
    let lnx = x.ln();
    let need = min_budget(terms);
    let widest = terms.iter().map(|t| t.vars.len()).max().unwrap_or(1) as f64;
    let delta = ((x + need) / (2.0 * need)).ln() / widest;
    let mut y = vec![delta; l];
    let mut tau = 1.0;
    while tau <= 1e10 {
        for _ in 0..200 {
            let f = lse(terms, &y);
            let slack = lnx - f.value;
            let mut g = vec![0.0; l];
            let mut h = vec![vec![0.0; l]; l];
            for a in 0..l {
                g[a] = -tau + f.grad[a] / slack - 1.0 / y[a];
                for b in 0..l {
                    h[a][b] = f.hess[a][b] / slack + f.grad[a] * f.grad[b] / (slack * slack);
                }
                h[a][a] += 1.0 / (y[a] * y[a]);
            }
            let neg: Vec<f64> = g.iter().map(|v| -v).collect();
            // an ill-conditioned system late on the path leaves a feasible,
            // nearly optimal iterate for the polish
            let Some(d) = solve_linear(h, neg) else {
                return y.iter().all(|v| v.is_finite()).then_some(y);
            };
            let decrement: f64 = -g.iter().zip(&d).map(|(a, b)| a * b).sum::<f64>();
            if decrement / 2.0 < 1e-14 {
                break;
            }
            let base = barrier_value(terms, &y, lnx, tau)?;
            let mut step = 1.0;
            let mut accepted = false;
            while step > 1e-20 {
                let cand: Vec<f64> = y.iter().zip(&d).map(|(a, b)| a + step * b).collect();
                if let Some(v) = barrier_value(terms, &cand, lnx, tau) {
                    if v <= base - 0.25 * step * decrement {
                        y = cand;
                        accepted = true;
                        break;
                    }
                }
                step *= 0.5;
            }
            if !accepted {
                break;
            }
        }
        tau *= 10.0;
    }
    if y.iter().all(|v| v.is_finite()) {
        Some(y)
    } else {
        None
    }
}

/// Newton on the KKT system restricted to variables the barrier left away
/// from zero. Returns `None` when the candidate is not a KKT point.
fn polish(terms: &[Term], y0: &[f64], x: f64) -> Option<Vec<f64>> {
    let l = y0.len();
    let lnx = x.ln();
    let scale = y0.iter().cloned().fold(1.0, f64::max);
    let free: Vec<usize> = (0..l).filter(|&t| y0[t] > 1e-6 * scale).collect();
    if free.is_empty() {
        return None;
    }
    let mut y: Vec<f64> = (0..l).map(|t| if free.contains(&t) { y0[t] } else { 0.0 }).collect();
    let f0 = lse(terms, &y);
    let mut lambda = free.len() as f64 / free.iter().map(|&t| f0.grad[t]).sum::<f64>();
    let n = free.len();
    let mut converged = false;
    for _ in 0..50 {
        let f = lse(terms, &y);
        let mut r = vec![0.0; n + 1];
        for (a, &t) in free.iter().enumerate() {
            r[a] = 1.0 - lambda * f.grad[t];
        }
        r[n] = f.value - lnx;
        let norm = r.iter().map(|v| v.abs()).fold(0.0, f64::max);
        if norm < 1e-13 {
            converged = true;
            break;
        }
        let mut jac = vec![vec![0.0; n + 1]; n + 1];
        for (a, &t) in free.iter().enumerate() {
            for (b, &u) in free.iter().enumerate() {
                jac[a][b] = -lambda * f.hess[t][u];
            }
            jac[a][n] = -f.grad[t];
            jac[n][a] = f.grad[t];
        }
        let neg: Vec<f64> = r.iter().map(|v| -v).collect();
        let d = solve_linear(jac, neg)?;
        for (a, &t) in free.iter().enumerate() {
            y[t] += d[a];
        }
        lambda += d[n];
    }
    if !converged || lambda <= 0.0 {
        return None;
    }
    let f = lse(terms, &y);
    let kkt = (0..l).all(|t| free.contains(&t) || lambda * f.grad[t] >= 1.0 - 1e-7);
    let feasible = y.iter().all(|v| *v >= -1e-12);
    let better = y.iter().sum::<f64>() >= y0.iter().sum::<f64>() - 1e-6;
    if kkt && feasible && better {
        Some(y.into_iter().map(|v| v.max(0.0)).collect())
    } else {
        None
    }
}

/// Gaussian elimination with partial pivoting.
pub(crate) fn solve_linear(mut a: Vec<Vec<f64>>, mut b: Vec<f64>) -> Option<Vec<f64>> {
    let n = b.len();
    for col in 0..n {
        let piv = (col..n).max_by(|&i, &j| a[i][col].abs().total_cmp(&a[j][col].abs()))?;
        if a[piv][col].abs() < 1e-300 || !a[piv][col].is_finite() {
            return None;
        }
        a.swap(col, piv);
        b.swap(col, piv);
        for row in col + 1..n {
            let f = a[row][col] / a[col][col];
            if f != 0.0 {
                for k in col..n {
                    a[row][k] -= f * a[col][k];
                }
                b[row] -= f * b[col];
            }
        }
    }
    let mut x = vec![0.0; n];
    for row in (0..n).rev() {
        let s: f64 = (row + 1..n).map(|k| a[row][k] * x[k]).sum();
        x[row] = (b[row] - s) / a[row][row];
    }
    if x.iter().all(|v| v.is_finite()) {
        Some(x)
    } else {
        None
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::daap::testgen::statement_strategy;
    use proptest::prelude::*;
    use crate::daap::parse_program;

    fn stmt(src: &str) -> Statement {
        parse_program(src).unwrap().statements.remove(0)
    }

    fn rel(a: f64, b: f64) -> f64 {
        ((a - b) / b).abs()
    }

    #[test]
    fn lu_trailing_update_is_cubic() {
        let s = stmt("param N\nloop k in 0..N { loop i in k+1..N { loop j in k+1..N { S: A[i,j] = f(A[i,j], A[i,k], A[k,j]) } } }");
        for m in [4.0, 64.0, 4096.0] {
            let shape = solve_psi(&s, 3.0 * m).unwrap();
            assert!(rel(shape.volume, m.powf(1.5)) < 1e-10, "{shape:?}");
            for v in shape.range_sizes.values() {
                assert!(rel(*v, m.sqrt()) < 1e-8);
            }
        }
    }

    #[test]
    fn lu_panel_is_affine() {
        let s = stmt("param N\nloop k in 0..N { loop i in k+1..N { S: A[i,k] = f(A[i,k], A[k,k]) } }");
        let shape = solve_psi(&s, 100.0).unwrap();
        assert!(rel(shape.volume, 99.0) < 1e-9, "{shape:?}");
        assert!((shape.range_sizes["k"] - 1.0).abs() < 1e-9);
    }

    #[test]
    fn two_operand_product() {
        let s = stmt("param N\nloop i in 0..N { loop j in 0..N { loop k in 0..N { S: D[i,j,k] = f(A[i,k], B[k,j]) } } }");
        let shape = solve_psi(&s, 40.0).unwrap();
        assert!(rel(shape.volume, 400.0) < 1e-9, "{shape:?}");
        assert!((shape.range_sizes["k"] - 1.0).abs() < 1e-6);
    }

    #[test]
    fn water_filling_clamps_heavy_terms() {
        let s = stmt("param N\nloop i in 0..N { loop j in 0..N { S: c[i,j] = f(a[i], b[j]) } }");
        let shape = solve_psi_weighted(&s, &[1.0, 10.0], 12.0).unwrap();
        // b clamps to one element, a takes the rest
        assert!(rel(shape.volume, 2.0) < 1e-12, "{shape:?}");
    }

    #[test]
    fn infeasible_and_unbounded() {
        let s = stmt("param N\nloop i in 0..N { loop j in 0..N { S: c[i,j] = f(a[i], b[j]) } }");
        assert!(matches!(solve_psi(&s, 1.5), Err(BoundError::Infeasible { .. })));
        let g = stmt("param N\nloop i in 0..N { S: c[i] = f() }");
        assert!(solve_psi(&g, 10.0).unwrap().volume.is_infinite());
    }

    fn product(shape: &SubcompShape, vars: &[&str]) -> f64 {
        vars.iter().map(|v| shape.range_sizes[*v]).product()
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]

        #[test]
        fn psi_shapes_respect_the_budget(p in statement_strategy(), x in 3.0f64..5000.0) {
            let s = &p.statements[0];
            let shape = solve_psi(s, x).unwrap();
            let used: f64 = s.inputs.iter().map(|a| product(&shape, &a.variables())).sum();
            prop_assert!(used <= x * (1.0 + 1e-6), "used {} of {} in {} {:?}", used, x, p, shape);
            let all: Vec<&str> = s.var_names();
            prop_assert!((product(&shape, &all) / shape.volume - 1.0).abs() < 1e-9);
            prop_assert!(shape.range_sizes.values().all(|&r| r >= 1.0 - 1e-9));
            let bigger = solve_psi(s, 2.0 * x).unwrap();
            prop_assert!(bigger.volume >= shape.volume * (1.0 - 1e-9));
        }
    }
}
