//! 2.5D LU factorization with tournament pivoting and row masking, run on
//! the simulated machine.
//!
//! Ranks form a `[s, s, c]` grid. The matrix is split into `v x v` blocks
//! laid out block-cyclically over each `s x s` layer; layer 0 starts with
//! the matrix and the other layers with zeros, and an element's value is
//! the sum over layers. Each outer step picks `v` pivot rows by a
//! tournament on one processor column, factors the panel and the pivot
//! rows in 1D layouts over all active ranks, and updates the trailing
//! matrix with the reduction dimension split across layers. Pivot rows are
//! never moved: a mask records which rows are done.

mod dense;
mod pivot;
mod rank;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::netsim::{run_spmd, CommLedger, LedgerSummary, MachineConfig, NetError, SpmdError};

pub use dense::{residual, Matrix};
pub use pivot::{tournament_pivot, Tournament};

use rank::{Plan, RankState};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ConfluxError {
    #[error("panel is numerically singular at step {step}")]
    Singular { step: usize },
    #[error("no feasible grid: memory must be at least {min_memory} words")]
    NoFeasibleGrid { min_memory: usize },
    #[error("invalid grid: {0}")]
    InvalidGrid(String),
    #[error("{0}")]
    InvalidInput(String),
    #[error(transparent)]
    Net(#[from] NetError),
}

/// Processor grid `[p1_sqrt, p1_sqrt, c]` and block size.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct GridConfig {
    pub p1_sqrt: usize,
    pub c: usize,
    pub active_ranks: usize,
    pub v: usize,
}

impl GridConfig {
    /// Grid with the default block size for an `n x n` matrix.
    pub fn new(p1_sqrt: usize, c: usize, n: usize) -> Result<Self, ConfluxError> {
        Self::with_block(p1_sqrt, c, default_block(n, c))
    }

    pub fn with_block(p1_sqrt: usize, c: usize, v: usize) -> Result<Self, ConfluxError> {
        if p1_sqrt == 0 || c == 0 {
            return Err(ConfluxError::InvalidGrid("grid dimensions must be positive".into()));
        }
        if v < c {
            return Err(ConfluxError::InvalidGrid(format!("block size {v} is below the layer count {c}")));
        }
        Ok(GridConfig {
            p1_sqrt,
            c,
            active_ranks: p1_sqrt * p1_sqrt * c,
            v,
        })
    }

    pub fn dims(&self) -> [usize; 3] {
        [self.p1_sqrt, self.p1_sqrt, self.c]
    }
}

/// `max(c, 32)`, lowered to the largest divisor of `n` no smaller than
/// half of it when one exists, and capped at `n`.
pub fn default_block(n: usize, c: usize) -> usize {
    let target = c.max(32);
    if n <= target {
        return n.max(c);
    }
    (c.max(target / 2)..=target).rev().find(|d| n % d == 0).unwrap_or(target)
}

/// Chooses the grid with the lowest modeled cost `2N³ / (active √M_eff)`,
/// `M_eff = c N² / active`, among grids whose per-rank share `c N² / active`
/// fits in `m`. Ties go to more active ranks, then fewer layers.
pub fn select_grid(p: usize, n: usize, m: usize, c_max: Option<usize>) -> Result<GridConfig, ConfluxError> {
    if p == 0 || n == 0 || m == 0 {
        return Err(ConfluxError::InvalidInput("P, N and M must be positive".into()));
    }
    let n2 = (n * n) as f64;
    let c_cap = [
        (p as f64).cbrt().ceil() as usize,
        ((m as f64) * (p as f64) / n2).floor() as usize,
        c_max.unwrap_or(usize::MAX),
    ]
    .into_iter()
    .min()
    .unwrap()
    .max(1);
    let mut best: Option<(f64, usize, usize, usize)> = None;
    for c in 1..=c_cap {
        let mut s = 1;
        while s * s * c <= p {
            let active = s * s * c;
            if c as f64 * n2 / active as f64 <= m as f64 {
                let m_eff = c as f64 * n2 / active as f64;
                let score = 2.0 * (n as f64).powi(3) / (active as f64 * m_eff.sqrt());
                let better = match best {
                    None => true,
                    Some((bs, ba, bc, _)) => {
                        score < bs * (1.0 - 1e-12) || ((score - bs).abs() <= bs * 1e-12 && (active, std::cmp::Reverse(c)) > (ba, std::cmp::Reverse(bc)))
                    }
                };
                if better {
                    best = Some((score, active, c, s));
                }
            }
            s += 1;
        }
    }
    match best {
        Some((_, _, c, s)) => GridConfig::new(s, c, n),
        None => {
            let s = (p as f64).sqrt().floor().max(1.0) as usize;
            Err(ConfluxError::NoFeasibleGrid {
                min_memory: (n * n).div_ceil(s * s),
            })
        }
    }
}

/// Row choices as a mask over the original row order.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PivotMask {
    /// Rows in the order they were chosen as pivots.
    pub chosen_rows: Vec<usize>,
    pub remaining_rows: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FactorConfig {
    pub ranks: usize,
    /// Words of memory per rank.
    pub memory: usize,
    pub grid: GridConfig,
    pub strict_memory: bool,
    /// Compute the residual against the input.
    pub verify: bool,
}

impl FactorConfig {
    /// Configuration with the grid from [`select_grid`].
    pub fn auto(ranks: usize, n: usize, memory: usize) -> Result<Self, ConfluxError> {
        Ok(FactorConfig {
            ranks,
            memory,
            grid: select_grid(ranks, n, memory, None)?,
            strict_memory: false,
            verify: true,
        })
    }
}

/// Measured and modeled cost of one outer step.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepCost {
    pub t: usize,
    /// Rows still unfactored after this step's pivots.
    pub remaining: usize,
    pub max_received: u64,
    /// `2 N v (N - t v) / (P √M)`.
    pub model: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FactorSummary {
    pub n: usize,
    pub ranks: usize,
    pub memory: usize,
    pub grid: GridConfig,
    pub padded_n: usize,
    pub residual: Option<f64>,
    pub max_received: u64,
    /// `N³ / (P √M)`.
    pub leading_model: f64,
    /// Largest over mean received words among active ranks.
    pub imbalance: f64,
    pub peak_resident: usize,
    pub steps: Vec<StepCost>,
    pub ledger: LedgerSummary,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FactorResult {
    /// Unit lower triangular, rows in pivot order.
    pub l: Matrix,
    pub u: Matrix,
    pub mask: PivotMask,
    pub residual: Option<f64>,
    pub ledger: CommLedger,
    pub summary: FactorSummary,
}

/// Factors `a` on a simulated machine with `config.ranks` ranks.
pub fn factorize(a: &Matrix, config: &FactorConfig) -> Result<FactorResult, ConfluxError> {
    let n = a.rows;
    if n == 0 || a.cols != n {
        return Err(ConfluxError::InvalidInput("matrix must be square and nonempty".into()));
    }
    let g = config.grid;
    if g.active_ranks > config.ranks {
        return Err(ConfluxError::InvalidGrid(format!(
            "grid {:?} needs {} ranks, only {} available",
            g.dims(),
            g.active_ranks,
            config.ranks
        )));
    }
    if g.v < g.c {
        return Err(ConfluxError::InvalidGrid(format!("block size {} is below the layer count {}", g.v, g.c)));
    }
    let plan = Plan::new(n, g);
    let states: Vec<RankState> = (0..config.ranks).map(|r| RankState::new(r, &plan, a)).collect();
    let machine = MachineConfig {
        ranks: config.ranks,
        memory: config.memory,
        word_size: 8,
        strict_memory: config.strict_memory,
    };
    let run = run_spmd(machine, states, |ctx, st: &mut RankState| st.step(ctx, &plan)).map_err(|e| match e {
        SpmdError::Net(n) => ConfluxError::Net(n),
        SpmdError::Program { source, .. } => source,
    })?;

    let (l, u, chosen) = rank::assemble(&plan, &run.states);
    let mask = PivotMask {
        remaining_rows: (0..n).filter(|g| !chosen.contains(g)).collect(),
        chosen_rows: chosen,
    };
    let residual = config.verify.then(|| residual(a, &mask.chosen_rows, &l, &u));

    let p = config.ranks as f64;
    let m = config.memory as f64;
    let nf = n as f64;
    let spi = plan.supersteps_per_step();
    let steps = (0..plan.nb)
        .map(|t| {
            let got = run.ledger.received_between(t * spi, (t + 1) * spi);
            let remaining = plan.n.saturating_sub((t + 1) * plan.v);
            StepCost {
                t,
                remaining,
                max_received: got.into_iter().max().unwrap_or(0),
                model: 2.0 * nf * g.v as f64 * (plan.n - t * plan.v) as f64 / (p * m.sqrt()),
            }
        })
        .collect();
    let ledger_summary = run.ledger.summary();
    let active = &ledger_summary.received[..g.active_ranks];
    let mean = active.iter().sum::<u64>() as f64 / g.active_ranks as f64;
    let summary = FactorSummary {
        n,
        ranks: config.ranks,
        memory: config.memory,
        grid: g,
        padded_n: plan.n,
        residual,
        max_received: ledger_summary.max_received,
        leading_model: nf.powi(3) / (p * m.sqrt()),
        imbalance: if mean > 0.0 { ledger_summary.max_received as f64 / mean } else { 1.0 },
        peak_resident: run.peak_resident.iter().copied().max().unwrap_or(0),
        steps,
        ledger: ledger_summary,
    };
    Ok(FactorResult {
        l,
        u,
        mask,
        residual,
        ledger: run.ledger,
        summary,
    })
}
