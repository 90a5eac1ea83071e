//! Minimizing the intensity `rho(X) = psi(X) / (X - M)`.

use std::fmt;

use serde::{Deserialize, Serialize};

use super::psi::{min_budget, solve_psi_weighted, terms_for, SubcompShape};
use super::BoundError;
use crate::daap::Statement;

/// Default ratio `X_max / M`.
pub const X_MAX_FACTOR: f64 = 100.0;
const GRID: usize = 400;
const FIT_TOL: f64 = 1e-9;

/// Closed form recognised for `psi` on `(M, X_max]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ClosedForm {
    /// `c * X^alpha`
    Power { c: f64, alpha: f64 },
    /// `a * X + b`
    Affine { a: f64, b: f64 },
}

impl ClosedForm {
    pub fn eval(&self, x: f64) -> f64 {
        match *self {
            ClosedForm::Power { c, alpha } => c * x.powf(alpha),
            ClosedForm::Affine { a, b } => a * x + b,
        }
    }
}

fn near_int(v: f64) -> Option<i64> {
    let r = v.round();
    ((v - r).abs() < 1e-7 * v.abs().max(1.0)).then_some(r as i64)
}

fn fraction(v: f64) -> String {
    for den in 1..=12i64 {
        if let Some(num) = near_int(v * den as f64) {
            return if den == 1 { num.to_string() } else { format!("{num}/{den}") };
        }
    }
    format!("{v}")
}

impl fmt::Display for ClosedForm {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match *self {
            ClosedForm::Power { c, alpha } => {
                let k = c.powf(-1.0 / alpha);
                let exp = fraction(alpha);
                match near_int(k) {
                    Some(1) => write!(f, "X^{exp}"),
                    Some(k) => write!(f, "(X/{k})^{exp}"),
                    None => write!(f, "{c}*X^{exp}"),
                }
            }
            ClosedForm::Affine { a, b } => {
                let lead = match near_int(a) {
                    Some(1) => "X".to_string(),
                    _ => format!("{}*X", fraction(a)),
                };
                match b {
                    b if b.abs() < 1e-12 => write!(f, "{lead}"),
                    b if b < 0.0 => write!(f, "{lead} - {}", fraction(-b)),
                    b => write!(f, "{lead} + {}", fraction(b)),
                }
            }
        }
    }
}

/// Result of [`find_x0`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct X0Result {
    pub x0: f64,
    /// Computational intensity at `x0`; infinite when `psi` is unbounded.
    pub rho: f64,
    pub shape: SubcompShape,
    pub closed_form: Option<ClosedForm>,
    /// The minimum sits at the search cap `X_max`.
    pub cap_dominated: bool,
    pub notes: Vec<String>,
}

/// Finds `X_0` for statement `s` with unit weights and `X_max = 100 M`.
pub fn find_x0(s: &Statement, m: f64) -> Result<X0Result, BoundError> {
    find_x0_weighted(s, &vec![1.0; s.inputs.len()], m, X_MAX_FACTOR * m)
}

pub fn find_x0_weighted(s: &Statement, weights: &[f64], m: f64, x_max: f64) -> Result<X0Result, BoundError> {
    if !(m >= 1.0) {
        return Err(BoundError::InvalidInput(format!("memory size must be at least 1, got {m}")));
    }
    let psi = |x: f64| solve_psi_weighted(s, weights, x);
    let need = min_budget(&terms_for(s, weights));
    let x_lo = m.max(need);
    if x_lo >= x_max {
        return Err(BoundError::Infeasible { x: x_max, minimum: need });
    }
    let probe = psi(x_max)?;
    if probe.volume.is_infinite() {
        return Ok(X0Result {
            x0: m,
            rho: f64::INFINITY,
            shape: probe,
            closed_form: None,
            cap_dominated: false,
            notes: vec![format!("statement {}: some iteration variable is not bounded by any input, so no loads are forced", s.id)],
        });
    }
    let rho = |x: f64| -> Result<f64, BoundError> { Ok(psi(x)?.volume / (x - m)) };

    if let Some(cf) = detect_closed_form(&psi, x_lo, x_max)? {
        let (x0, cap) = match cf {
            ClosedForm::Power { alpha, .. } if alpha > 1.0 => {
                let x0 = alpha * m / (alpha - 1.0);
                if x0 > x_max {
                    (x_max, true)
                } else if x0 <= x_lo {
                    (x_lo, false)
                } else {
                    (x0, false)
                }
            }
            _ => (x_max, true),
        };
        let shape = psi(x0)?;
        let value = cf.eval(x0) / (x0 - m);
        let mut notes = Vec::new();
        if cap {
            notes.push(format!(
                "statement {}: rho(X) has no interior minimum, evaluated at X_max = {x_max}",
                s.id
            ));
        }
        if x0 > x_lo || cap {
            return Ok(X0Result {
                x0,
                rho: value,
                shape,
                closed_form: Some(cf),
                cap_dominated: cap,
                notes,
            });
        }
    }

    // numeric path: coarse geometric scan over d = X - M, then golden section
    let d_lo = (x_lo - m).max(1e-6 * m);
    let d_hi = x_max - m;
    let mut grid = Vec::with_capacity(GRID);
    for i in 0..GRID {
        let d = d_lo * (d_hi / d_lo).powf(i as f64 / (GRID - 1) as f64);
        let x = (m + d).max(x_lo);
        grid.push((x, rho(x)?));
    }
    let (best, _) = grid
        .iter()
        .enumerate()
        .min_by(|a, b| a.1 .1.total_cmp(&b.1 .1))
        .map(|(i, v)| (i, *v))
        .ok_or_else(|| BoundError::InvalidInput("empty search interval".into()))?;
    let mut notes = Vec::new();
    let unimodal = grid[..best].windows(2).all(|w| w[1].1 <= w[0].1 * (1.0 + 1e-12))
        && grid[best..].windows(2).all(|w| w[1].1 >= w[0].1 * (1.0 - 1e-12));
    if !unimodal {
        notes.push(format!(
            "statement {}: rho(X) is not unimodal on the scan grid, refined around the global grid minimum",
            s.id
        ));
    }
    let cap = best + 1 == grid.len();
    let (mut a, mut b) = (
        grid[best.saturating_sub(1)].0,
        grid[(best + 1).min(grid.len() - 1)].0,
    );
    let phi = (5f64.sqrt() - 1.0) / 2.0;
    let mut c = b - phi * (b - a);
    let mut d = a + phi * (b - a);
    let (mut fc, mut fd) = (rho(c)?, rho(d)?);
    while (b - a) > 1e-9 * b {
        if fc < fd {
            b = d;
            d = c;
            fd = fc;
            c = b - phi * (b - a);
            fc = rho(c)?;
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + phi * (b - a);
            fd = rho(d)?;
        }
    }
    let mut x0 = (a + b) / 2.0;
    let mut value = rho(x0)?;
    if grid[best].1 < value {
        x0 = grid[best].0;
        value = grid[best].1;
    }
    if cap {
        notes.push(format!(
            "statement {}: rho(X) decreases up to X_max = {x_max}, minimum is cap-dominated",
            s.id
        ));
    }
    Ok(X0Result {
        x0,
        rho: value,
        shape: psi(x0)?,
        closed_form: None,
        cap_dominated: cap,
        notes,
    })
}

/// Rounds `c * X^alpha` to `(X/k)^(p/q)` when both are within fit noise.
fn snap_power(c: f64, alpha: f64) -> ClosedForm {
    let alpha = (1..=12)
        .find_map(|den| near_int(alpha * den as f64).map(|num| num as f64 / den as f64))
        .filter(|a| (a - alpha).abs() < 1e-8)
        .unwrap_or(alpha);
    let k = c.powf(-1.0 / alpha);
    let c = match near_int(k) {
        Some(k) if (k as f64 - c.powf(-1.0 / alpha)).abs() < 1e-7 * k as f64 => (k as f64).powf(-alpha),
        _ => c,
    };
    ClosedForm::Power { c, alpha }
}

fn detect_closed_form(
    psi: &dyn Fn(f64) -> Result<SubcompShape, BoundError>,
    x_lo: f64,
    x_max: f64,
) -> Result<Option<ClosedForm>, BoundError> {
    let lo = x_lo * 1.01;
    let xs: Vec<f64> = (0..8).map(|i| lo * (x_max / lo).powf(i as f64 / 7.0)).collect();
    let mut ys = Vec::with_capacity(xs.len());
    for &x in &xs {
        let shape = psi(x)?;
        if shape.approximate {
            return Ok(None);
        }
        ys.push(shape.volume);
    }
    let (x0, x1, y0, y1) = (xs[0], xs[7], ys[0], ys[7]);
    let alpha = (y1 / y0).ln() / (x1 / x0).ln();
    let c = y0 / x0.powf(alpha);
    let power = ClosedForm::Power { c, alpha };
    if xs.iter().zip(&ys).all(|(x, y)| ((power.eval(*x) - y) / y).abs() < FIT_TOL) {
        if (alpha - 1.0).abs() < FIT_TOL {
            let a = near_int(c).map(|v| v as f64).unwrap_or(c);
            return Ok(Some(ClosedForm::Affine { a, b: 0.0 }));
        }
        return Ok(Some(snap_power(c, alpha)));
    }
    let a = (y1 - y0) / (x1 - x0);
    let affine = ClosedForm::Affine { a, b: y0 - a * x0 };
    if xs.iter().zip(&ys).all(|(x, y)| ((affine.eval(*x) - y) / y).abs() < FIT_TOL) {
        let b = y0 - a * x0;
        let b = near_int(b).map(|v| v as f64).unwrap_or(b);
        let a = near_int(a).map(|v| v as f64).unwrap_or(a);
        return Ok(Some(ClosedForm::Affine { a, b }));
    }
    Ok(None)
}
