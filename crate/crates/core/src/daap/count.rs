use std::collections::HashMap;

use num_traits::{Signed, ToPrimitive};
use serde::{Deserialize, Serialize};

use super::{Affine, DaapError, Poly, Statement};

/// Policy for [`iteration_count_with`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct CountOptions {
    /// Largest number of outer iteration points enumerated directly. Above
    /// it the validated closed form is evaluated instead.
    pub enumeration_limit: u64,
}

impl Default for CountOptions {
    fn default() -> Self {
        CountOptions {
            enumeration_limit: 1 << 24,
        }
    }
}

/// Closed-form iteration count of a statement as a polynomial in the size
/// parameters.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SymbolicCount {
    pub poly: Poly,
    /// The polynomial agreed with enumeration on every small parameter
    /// assignment tried. Summation identities assume non-empty ranges, so a
    /// program whose ranges can invert fails this check.
    pub validated: bool,
}

fn affine_poly(a: &Affine) -> Poly {
    let c = Poly::constant(a.offset);
    match &a.base {
        Some(b) => Poly::var(b).add(&c),
        None => c,
    }
}

fn nest_poly(loops: &[super::Loop]) -> Poly {
    let mut p = Poly::constant(1);
    for l in loops.iter().rev() {
        p = p.sum_over(
            &l.var.name,
            &affine_poly(&l.range.lower),
            &affine_poly(&l.range.upper),
        );
    }
    p
}

fn statement_params(s: &Statement) -> Vec<String> {
    let vars = s.var_names();
    let mut out: Vec<String> = Vec::new();
    for l in &s.loop_nest {
        for b in [&l.range.lower.base, &l.range.upper.base].into_iter().flatten() {
            if !vars.contains(&b.as_str()) && !out.contains(b) {
                out.push(b.clone());
            }
        }
    }
    out
}

fn assignments(params: &[String]) -> Vec<HashMap<String, i64>> {
    const HI: i64 = 6;
    let mut out = Vec::new();
    if params.len() <= 3 {
        let total = (HI as usize).pow(params.len() as u32);
        for mut code in 0..total {
            let mut env = HashMap::new();
            for p in params {
                env.insert(p.clone(), (code % HI as usize) as i64 + 1);
                code /= HI as usize;
            }
            out.push(env);
        }
    } else {
        for v in 1..=HI {
            out.push(params.iter().map(|p| (p.clone(), v)).collect());
        }
    }
    out
}

/// Builds the closed-form count of `s` and checks it against enumeration.
pub fn symbolic_count(s: &Statement) -> SymbolicCount {
    let poly = nest_poly(&s.loop_nest);
    let validated = assignments(&statement_params(s)).iter().all(|env| {
        let direct = enumerate(s, 0, &mut env.clone());
        match poly.eval(env) {
            Some(v) => v.is_integer() && !v.is_negative() && direct.ok() == v.to_integer().to_u64(),
            None => false,
        }
    });
    SymbolicCount { poly, validated }
}

fn bound(a: &Affine, env: &HashMap<String, i64>) -> Result<i64, DaapError> {
    a.eval(env)
}

fn enumerate(s: &Statement, depth: usize, env: &mut HashMap<String, i64>) -> Result<u64, DaapError> {
    let nest = &s.loop_nest;
    if depth == nest.len() {
        return Ok(1);
    }
    let l = &nest[depth];
    let lo = bound(&l.range.lower, env)?;
    let hi = bound(&l.range.upper, env)?;
    if depth + 1 == nest.len() {
        return Ok((hi - lo).max(0) as u64);
    }
    let mut total = 0;
    for v in lo..hi {
        env.insert(l.var.name.clone(), v);
        total += enumerate(s, depth + 1, env)?;
    }
    env.remove(&l.var.name);
    Ok(total)
}

/// Exact number of iteration points of `s` under the given parameter
/// values, with the default [`CountOptions`].
pub fn iteration_count(s: &Statement, params: &HashMap<String, i64>) -> Result<u64, DaapError> {
    iteration_count_with(s, params, CountOptions::default())
}

pub fn iteration_count_with(
    s: &Statement,
    params: &HashMap<String, i64>,
    opts: CountOptions,
) -> Result<u64, DaapError> {
    for p in statement_params(s) {
        match params.get(&p) {
            Some(v) if *v >= 1 => {}
            _ => return Err(DaapError::UnboundParameter(p)),
        }
    }
    if s.loop_nest.len() > 1 {
        let outer = nest_poly(&s.loop_nest[..s.loop_nest.len() - 1]);
        let visits = outer
            .eval(params)
            .and_then(|v| v.to_integer().to_u64())
            .unwrap_or(0);
        if visits > opts.enumeration_limit {
            let sym = symbolic_count(s);
            if sym.validated {
                if let Some(v) = sym.poly.eval(params).and_then(|v| v.to_integer().to_u64()) {
                    return Ok(v);
                }
            }
        }
    }
    enumerate(s, 0, &mut params.clone())
}

#[cfg(test)]
mod tests {
    use super::super::parse_program;
    use super::*;

    const LU: &str = "param N
loop k in 0..N {
  loop i in k+1..N { S1: A[i,k] = f(A[i,k], A[k,k]) }
  loop i in k+1..N { loop j in k+1..N { S2: A[i,j] = f(A[i,j], A[i,k], A[k,j]) } }
}";

    fn n(v: i64) -> HashMap<String, i64> {
        [("N".to_string(), v)].into_iter().collect()
    }

    #[test]
    fn lu_counts() {
        let p = parse_program(LU).unwrap();
        assert_eq!(iteration_count(&p.statements[0], &n(4)).unwrap(), 6);
        assert_eq!(iteration_count(&p.statements[1], &n(4)).unwrap(), 14);
    }

    #[test]
    fn symbolic_matches_enumeration_up_to_16() {
        let p = parse_program(LU).unwrap();
        for s in &p.statements {
            let sym = symbolic_count(s);
            assert!(sym.validated);
            for v in 1..=16 {
                let direct = enumerate(s, 0, &mut n(v)).unwrap();
                assert_eq!(sym.poly.eval(&n(v)).unwrap().to_integer(), direct as i128);
            }
        }
    }

    #[test]
    fn forced_symbolic_path() {
        let p = parse_program(LU).unwrap();
        let opts = CountOptions { enumeration_limit: 0 };
        let s2 = &p.statements[1];
        assert_eq!(
            iteration_count_with(s2, &n(100), opts).unwrap(),
            iteration_count(s2, &n(100)).unwrap()
        );
    }

    #[test]
    fn empty_range() {
        let p = parse_program("param N\nloop i in N..N { S: y[i] = f(x[i]) }").unwrap();
        assert_eq!(iteration_count(&p.statements[0], &n(5)).unwrap(), 0);
    }

    #[test]
    fn unbound_parameter() {
        let p = parse_program(LU).unwrap();
        assert!(matches!(
            iteration_count(&p.statements[0], &HashMap::new()),
            Err(DaapError::UnboundParameter(_))
        ));
    }
}
