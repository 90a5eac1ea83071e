//! Leading-term communication models and scaling sweeps.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ModelError {
    #[error("unknown model `{0}` (expected conflux, candmc or 2d)")]
    UnknownModel(String),
    #[error("N, P and M must be positive, got N={n}, P={p}, M={m}")]
    NonPositive { n: f64, p: f64, m: f64 },
    #[error("invalid memory policy `{0}`")]
    InvalidPolicy(String),
}

/// Per-rank word counts of three dense LU algorithms.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Model {
    /// `N³ / (P √M)`.
    Conflux,
    /// `5 N³ / (P √M)`.
    Candmc,
    /// `N² / √P`.
    #[serde(rename = "2d")]
    TwoD,
}

impl Model {
    pub const ALL: [Model; 3] = [Model::Conflux, Model::Candmc, Model::TwoD];

    pub fn name(self) -> &'static str {
        match self {
            Model::Conflux => "conflux",
            Model::Candmc => "candmc",
            Model::TwoD => "2d",
        }
    }

    pub fn formula(self) -> &'static str {
        match self {
            Model::Conflux => "N^3/(P*sqrt(M))",
            Model::Candmc => "5*N^3/(P*sqrt(M))",
            Model::TwoD => "N^2/sqrt(P)",
        }
    }

    /// Words communicated per rank. Lower-order terms are omitted.
    pub fn per_rank_words(self, n: f64, p: f64, m: f64) -> f64 {
        match self {
            Model::Conflux => n.powi(3) / (p * m.sqrt()),
            Model::Candmc => 5.0 * Model::Conflux.per_rank_words(n, p, m),
            Model::TwoD => n * n / p.sqrt(),
        }
    }
}

impl fmt::Display for Model {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Model {
    type Err = ModelError;

    fn from_str(s: &str) -> Result<Self, ModelError> {
        match s.trim().to_ascii_lowercase().as_str() {
            "conflux" => Ok(Model::Conflux),
            "candmc" => Ok(Model::Candmc),
            "2d" => Ok(Model::TwoD),
            _ => Err(ModelError::UnknownModel(s.to_string())),
        }
    }
}

/// Evaluates model `name` at `(N, P, M)`.
pub fn eval_model(name: &str, n: f64, p: f64, m: f64) -> Result<f64, ModelError> {
    let model: Model = name.parse()?;
    if !(n > 0.0 && p > 0.0 && m > 0.0) {
        return Err(ModelError::NonPositive { n, p, m });
    }
    Ok(model.per_rank_words(n, p, m))
}

/// Memory per rank as a function of `(N, P)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum MemPolicy {
    Fixed(f64),
    /// `M = N² / P^(2/3)`.
    Fig5,
}

impl MemPolicy {
    pub fn memory(self, n: f64, p: f64) -> f64 {
        match self {
            MemPolicy::Fixed(m) => m,
            MemPolicy::Fig5 => n * n / p.powf(2.0 / 3.0),
        }
    }
}

impl FromStr for MemPolicy {
    type Err = ModelError;

    fn from_str(s: &str) -> Result<Self, ModelError> {
        if s.eq_ignore_ascii_case("fig5") {
            return Ok(MemPolicy::Fig5);
        }
        match s.parse::<f64>() {
            Ok(m) if m > 0.0 && m.is_finite() => Ok(MemPolicy::Fixed(m)),
            _ => Err(ModelError::InvalidPolicy(s.to_string())),
        }
    }
}

/// Matrix size as a function of `P`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum SizeRule {
    Fixed(f64),
    /// `N = base · ∛P`.
    Weak(f64),
}

impl SizeRule {
    pub fn n(self, p: f64) -> f64 {
        match self {
            SizeRule::Fixed(n) => n,
            SizeRule::Weak(base) => base * p.cbrt(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub model: Model,
    pub n: f64,
    pub p: u64,
    pub m: f64,
    pub words: f64,
    pub bytes: f64,
}

/// One row per model and rank count, in the order given.
pub fn sweep(models: &[Model], size: SizeRule, ranks: &[u64], policy: MemPolicy) -> Vec<SweepRow> {
    let mut rows = Vec::with_capacity(models.len() * ranks.len());
    for &model in models {
        for &p in ranks {
            let pf = p as f64;
            let n = size.n(pf);
            let m = policy.memory(n, pf);
            let words = model.per_rank_words(n, pf, m);
            rows.push(SweepRow {
                model,
                n,
                p,
                m,
                words,
                bytes: words * 8.0,
            });
        }
    }
    rows
}

/// Powers of two in `[lo, hi]`.
pub fn pow2_range(lo: u64, hi: u64) -> Vec<u64> {
    (0..64)
        .map(|e| 1u64 << e)
        .filter(|&p| p >= lo && p <= hi)
        .collect()
}

pub fn sweep_csv(rows: &[SweepRow]) -> String {
    let mut out = String::from("model,N,P,M,words,bytes\n");
    for r in rows {
        out.push_str(&format!("{},{},{},{},{},{}\n", r.model, r.n, r.p, r.m, r.words, r.bytes));
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn names_round_trip() {
        for m in Model::ALL {
            assert_eq!(m.name().parse::<Model>().unwrap(), m);
        }
        assert!(matches!("lapack".parse::<Model>(), Err(ModelError::UnknownModel(_))));
        assert!(eval_model("conflux", 0.0, 1.0, 1.0).is_err());
    }

    #[test]
    fn single_rank_full_memory() {
        let n = 300.0;
        assert!((eval_model("conflux", n, 1.0, n * n).unwrap() - n * n).abs() < 1e-9);
    }

    #[test]
    fn strong_scaling_shapes() {
        let ps = pow2_range(64, 1024);
        assert_eq!(ps, vec![64, 128, 256, 512, 1024]);
        let rows = sweep(&[Model::Conflux, Model::TwoD], SizeRule::Fixed(16384.0), &ps, MemPolicy::Fig5);
        let (conflux, twod) = rows.split_at(ps.len());
        let flat = |xs: Vec<f64>| xs.iter().all(|x| (x / xs[0] - 1.0).abs() < 1e-12);
        assert!(flat(twod.iter().map(|r| r.words * (r.p as f64).sqrt()).collect()));
        assert!(flat(conflux.iter().map(|r| r.words * (r.p as f64).powf(2.0 / 3.0)).collect()));
    }

    #[test]
    fn ordering_at_scale() {
        let (n, p) = (16384.0, 1024.0);
        let m = MemPolicy::Fig5.memory(n, p);
        let w = |x: Model| x.per_rank_words(n, p, m);
        assert!(w(Model::Conflux) < w(Model::TwoD));
        assert!(w(Model::TwoD) < w(Model::Candmc));
    }

    #[test]
    fn empty_range_is_empty() {
        assert!(sweep(&Model::ALL, SizeRule::Fixed(10.0), &pow2_range(5, 7), MemPolicy::Fig5).is_empty());
        assert_eq!(sweep_csv(&[]), "model,N,P,M,words,bytes\n");
    }

    proptest! {
        #[test]
        fn candmc_is_five_conflux(n in 1.0f64..1e5, p in 1.0f64..1e5, m in 1.0f64..1e9) {
            let (a, b) = (eval_model("candmc", n, p, m).unwrap(), eval_model("conflux", n, p, m).unwrap());
            prop_assert_eq!(a, 5.0 * b);
            prop_assert!((a / b - 5.0).abs() <= 4.0 * f64::EPSILON);
            prop_assert!(eval_model("2d", n, p, m).unwrap() >= 0.0);
        }

        #[test]
        fn conflux_beats_2d_below_crossover(n in 10.0f64..1e5, p in 1.0f64..1e5, m in 1.0f64..1e9) {
            let c = Model::Conflux.per_rank_words(n, p, m);
            let d = Model::TwoD.per_rank_words(n, p, m);
            if n / m.sqrt() < p.sqrt() * (1.0 - 1e-9) {
                prop_assert!(c < d);
            }
        }

        #[test]
        fn weak_scaling_is_flat(e in 0u32..20) {
            let rows = sweep(&[Model::Conflux], SizeRule::Weak(3200.0), &[1, 1 << e], MemPolicy::Fig5);
            prop_assert!((rows[1].words / rows[0].words - 1.0).abs() < 1e-9);
        }
    }
}
