//! Multivariate polynomials with exact rational coefficients, enough to sum
//! affine loop ranges in closed form.

use std::collections::{BTreeMap, HashMap};
use std::fmt;

use num_rational::Ratio;
use num_traits::{One, Signed, ToPrimitive, Zero};
use serde::{Deserialize, Serialize};

type Q = Ratio<i128>;

/// Product of variables raised to positive powers.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Default, Serialize, Deserialize)]
pub struct Monomial(pub BTreeMap<String, u32>);

impl Monomial {
    pub fn degree(&self) -> u32 {
        self.0.values().sum()
    }

    fn mul(&self, other: &Monomial) -> Monomial {
        let mut m = self.0.clone();
        for (v, e) in &other.0 {
            *m.entry(v.clone()).or_insert(0) += e;
        }
        Monomial(m)
    }
}

impl fmt::Display for Monomial {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let parts: Vec<String> = self
            .0
            .iter()
            .map(|(v, &e)| if e == 1 { v.clone() } else { format!("{v}^{e}") })
            .collect();
        write!(f, "{}", parts.join("*"))
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct Poly {
    terms: BTreeMap<Monomial, Q>,
}

impl Poly {
    pub fn zero() -> Self {
        Poly::default()
    }

    pub fn constant(c: i64) -> Self {
        Self::from_ratio(Q::from_integer(c as i128))
    }

    fn from_ratio(c: Q) -> Self {
        let mut p = Poly::zero();
        p.add_term(Monomial::default(), c);
        p
    }

    pub fn var(name: &str) -> Self {
        let mut m = BTreeMap::new();
        m.insert(name.to_string(), 1);
        let mut p = Poly::zero();
        p.add_term(Monomial(m), Q::one());
        p
    }

    fn add_term(&mut self, m: Monomial, c: Q) {
        if c.is_zero() {
            return;
        }
        let e = self.terms.entry(m.clone()).or_insert_with(Q::zero);
        *e += c;
        if e.is_zero() {
            self.terms.remove(&m);
        }
    }

    pub fn is_zero(&self) -> bool {
        self.terms.is_empty()
    }

    pub fn degree(&self) -> u32 {
        self.terms.keys().map(Monomial::degree).max().unwrap_or(0)
    }

    pub fn add(&self, o: &Poly) -> Poly {
        let mut r = self.clone();
        for (m, c) in &o.terms {
            r.add_term(m.clone(), *c);
        }
        r
    }

    pub fn sub(&self, o: &Poly) -> Poly {
        self.add(&o.scale_ratio(-Q::one()))
    }

    pub fn mul(&self, o: &Poly) -> Poly {
        let mut r = Poly::zero();
        for (m1, c1) in &self.terms {
            for (m2, c2) in &o.terms {
                r.add_term(m1.mul(m2), c1 * c2);
            }
        }
        r
    }

    fn scale_ratio(&self, k: Q) -> Poly {
        let mut r = Poly::zero();
        for (m, c) in &self.terms {
            r.add_term(m.clone(), c * k);
        }
        r
    }

    fn pow(&self, e: u32) -> Poly {
        let mut r = Poly::constant(1);
        for _ in 0..e {
            r = r.mul(self);
        }
        r
    }

    /// Replaces every occurrence of `var` by `by`.
    pub fn substitute(&self, var: &str, by: &Poly) -> Poly {
        let mut r = Poly::zero();
        for (m, c) in &self.terms {
            let mut rest = m.0.clone();
            let e = rest.remove(var).unwrap_or(0);
            let mut t = Poly::zero();
            t.add_term(Monomial(rest), *c);
            r = r.add(&t.mul(&by.pow(e)));
        }
        r
    }

    /// Splits into coefficients of powers of `var`.
    fn by_power(&self, var: &str) -> BTreeMap<u32, Poly> {
        let mut out: BTreeMap<u32, Poly> = BTreeMap::new();
        for (m, c) in &self.terms {
            let mut rest = m.0.clone();
            let e = rest.remove(var).unwrap_or(0);
            out.entry(e).or_default().add_term(Monomial(rest), *c);
        }
        out
    }

    /// `sum_{var = lo}^{hi - 1} self`, exact as a polynomial identity whenever
    /// `lo <= hi`.
    pub fn sum_over(&self, var: &str, lo: &Poly, hi: &Poly) -> Poly {
        let mut r = Poly::zero();
        for (p, coeff) in self.by_power(var) {
            let s = faulhaber(p);
            let diff = s.substitute("n", hi).sub(&s.substitute("n", lo));
            r = r.add(&coeff.mul(&diff));
        }
        r
    }

    pub fn eval(&self, env: &HashMap<String, i64>) -> Option<Q> {
        let mut acc = Q::zero();
        for (m, c) in &self.terms {
            let mut t = *c;
            for (v, &e) in &m.0 {
                let x = Q::from_integer(*env.get(v)? as i128);
                for _ in 0..e {
                    t *= x;
                }
            }
            acc += t;
        }
        Some(acc)
    }

    pub fn eval_f64(&self, env: &HashMap<String, f64>) -> Option<f64> {
        self.to_real().eval(env)
    }

    /// Coefficient of a monomial given as `(variable, power)` pairs.
    pub fn coefficient(&self, powers: &[(&str, u32)]) -> f64 {
        let m = Monomial(
            powers
                .iter()
                .filter(|(_, e)| *e > 0)
                .map(|(v, e)| (v.to_string(), *e))
                .collect(),
        );
        self.terms.get(&m).map(ratio_f64).unwrap_or(0.0)
    }

    pub fn to_real(&self) -> RealPoly {
        RealPoly {
            terms: self
                .terms
                .iter()
                .rev()
                .map(|(m, c)| (m.clone(), ratio_f64(c)))
                .collect(),
        }
    }
}

fn ratio_f64(c: &Q) -> f64 {
    c.numer().to_f64().unwrap_or(f64::NAN) / c.denom().to_f64().unwrap_or(f64::NAN)
}

impl fmt::Display for Poly {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.terms.is_empty() {
            return write!(f, "0");
        }
        let mut ordered: Vec<(&Monomial, &Q)> = self.terms.iter().collect();
        ordered.sort_by(|a, b| b.0.degree().cmp(&a.0.degree()).then(a.0.cmp(b.0)));
        for (idx, (m, c)) in ordered.into_iter().enumerate() {
            let neg = c.is_negative();
            let a = c.abs();
            if idx == 0 {
                if neg {
                    write!(f, "-")?;
                }
            } else {
                write!(f, " {} ", if neg { "-" } else { "+" })?;
            }
            let coeff = if a.is_integer() {
                a.numer().to_string()
            } else {
                format!("{}/{}", a.numer(), a.denom())
            };
            match (m.0.is_empty(), a.is_one()) {
                (true, _) => write!(f, "{coeff}")?,
                (false, true) => write!(f, "{m}")?,
                (false, false) => write!(f, "{coeff}*{m}")?,
            }
        }
        Ok(())
    }
}

/// Polynomial with floating-point coefficients, used once a symbolic count is
/// divided by a numeric intensity.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RealPoly {
    pub terms: Vec<(Monomial, f64)>,
}

impl RealPoly {
    pub fn scale(&self, k: f64) -> RealPoly {
        RealPoly {
            terms: self.terms.iter().map(|(m, c)| (m.clone(), c * k)).collect(),
        }
    }

    pub fn add(&self, o: &RealPoly) -> RealPoly {
        let mut map: BTreeMap<Monomial, f64> = BTreeMap::new();
        for (m, c) in self.terms.iter().chain(&o.terms) {
            *map.entry(m.clone()).or_insert(0.0) += c;
        }
        RealPoly {
            terms: map.into_iter().rev().filter(|(_, c)| *c != 0.0).collect(),
        }
    }

    pub fn eval(&self, env: &HashMap<String, f64>) -> Option<f64> {
        let mut acc = 0.0;
        for (m, c) in &self.terms {
            let mut t = *c;
            for (v, &e) in &m.0 {
                t *= env.get(v)?.powi(e as i32);
            }
            acc += t;
        }
        Some(acc)
    }

    pub fn coefficient(&self, powers: &[(&str, u32)]) -> f64 {
        self.terms
            .iter()
            .filter(|(m, _)| {
                m.0.len() == powers.iter().filter(|p| p.1 > 0).count()
                    && powers.iter().all(|(v, e)| *e == 0 || m.0.get(*v) == Some(e))
            })
            .map(|(_, c)| *c)
            .sum()
    }
}

impl fmt::Display for RealPoly {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let mut ordered: Vec<&(Monomial, f64)> = self.terms.iter().collect();
        ordered.sort_by(|a, b| b.0.degree().cmp(&a.0.degree()).then(a.0.cmp(&b.0)));
        if ordered.is_empty() {
            return write!(f, "0");
        }
        for (idx, (m, c)) in ordered.into_iter().enumerate() {
            let sep = match (idx, *c < 0.0) {
                (0, true) => "-",
                (0, false) => "",
                (_, true) => " - ",
                (_, false) => " + ",
            };
            if m.0.is_empty() {
                write!(f, "{sep}{}", c.abs())?;
            } else {
                write!(f, "{sep}{}*{m}", c.abs())?;
            }
        }
        Ok(())
    }
}

fn binomial(n: u32, k: u32) -> Q {
    let mut r = Q::one();
    for i in 0..k {
        r = r * Q::from_integer((n - i) as i128) / Q::from_integer((i + 1) as i128);
    }
    r
}

fn bernoulli(m: u32) -> Vec<Q> {
    let mut b = vec![Q::one()];
    for k in 1..=m {
        let mut s = Q::zero();
        for (j, bj) in b.iter().enumerate() {
            s += binomial(k + 1, j as u32) * bj;
        }
        b.push(-s / Q::from_integer((k + 1) as i128));
    }
    b
}

/// `sum_{x=0}^{n-1} x^p` as a polynomial in `n`.
fn faulhaber(p: u32) -> Poly {
    let b = bernoulli(p);
    let n = Poly::var("n");
    let mut r = Poly::zero();
    for (j, bj) in b.iter().enumerate() {
        let c = binomial(p + 1, j as u32) * bj / Q::from_integer((p + 1) as i128);
        r = r.add(&n.pow(p + 1 - j as u32).scale_ratio(c));
    }
    r
}
