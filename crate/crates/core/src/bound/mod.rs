//! I/O lower bounds for DAAP programs.
//!
//! For each statement the engine finds the largest subcomputation that a
//! dominator budget `X` admits (`psi`), minimizes the intensity
//! `rho(X) = psi(X) / (X - M)` and divides the iteration count by it. Inputs
//! shared between statements (Case I) reduce the sum of the per-statement
//! bounds; arrays produced by one statement and consumed by a later one
//! (Case II) shrink the consumer's access-size terms. The parallel bound
//! divides by the number of ranks.

mod psi;
mod x0;

use std::collections::{BTreeMap, BTreeSet, HashMap};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::daap::{iteration_count, symbolic_count, DaapError, Program, RealPoly, Statement};

pub use psi::{solve_psi, solve_psi_weighted, SubcompShape};
pub use x0::{find_x0, find_x0_weighted, ClosedForm, X0Result, X_MAX_FACTOR};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum BoundError {
    #[error(transparent)]
    Program(#[from] DaapError),
    #[error("dominator budget X = {x} cannot hold one element per input (needs {minimum})")]
    Infeasible { x: f64, minimum: f64 },
    #[error("{0}")]
    InvalidInput(String),
    #[error("unknown statement `{0}`")]
    UnknownStatement(String),
}

/// Bound for one statement.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StatementBound {
    pub id: String,
    pub depth: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub psi_closed_form: Option<String>,
    pub x0: f64,
    /// Intensity from the X-partition argument.
    pub rho_partition: f64,
    /// Cap `1/u` from out-degree-one inputs.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub rho_cap: Option<f64>,
    pub u: usize,
    /// The tighter of `rho_partition` and `rho_cap`; infinite when no load
    /// is forced.
    pub rho: f64,
    pub cap_dominated: bool,
    pub shape: SubcompShape,
    /// Access-size weights after output reuse, per input.
    pub weights: Vec<f64>,
    /// `|V_S|` by enumeration of the loop ranges.
    pub volume: u64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub volume_closed_form: Option<String>,
    /// `|V_S| / rho`.
    pub q: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub q_closed_form: Option<String>,
    #[serde(skip)]
    pub q_poly: Option<RealPoly>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub notes: Vec<String>,
}

/// A reuse correction between statements.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ReuseRecord {
    /// A pure input read by several statements; `amount` loads may be shared.
    InputOverlap {
        array: String,
        statements: Vec<String>,
        /// Candidate amount per sharing statement, same order.
        candidates: Vec<f64>,
        amount: f64,
    },
    /// The consumer's access size for `array` is divided by `divisor`
    /// (`max(1, rho_producer)`), or dropped when the producer needs no loads.
    OutputOverlap {
        producer: String,
        consumer: String,
        array: String,
        rho_producer: f64,
        divisor: f64,
    },
}

/// Whole-program bound.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoundReport {
    pub memory: f64,
    pub ranks: u64,
    pub params: BTreeMap<String, i64>,
    pub per_statement: Vec<StatementBound>,
    pub reuse: Vec<ReuseRecord>,
    pub q_sequential: f64,
    pub q_parallel: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub q_parallel_closed_form: Option<String>,
    #[serde(skip)]
    pub q_parallel_poly: Option<RealPoly>,
    pub notes: Vec<String>,
}

impl BoundReport {
    pub fn statement(&self, id: &str) -> Option<&StatementBound> {
        self.per_statement.iter().find(|s| s.id == id)
    }
}

/// Number `u` of out-degree-one graph inputs each iteration point reads.
///
/// An input counts when its array is never written, the whole program reads
/// it through exactly one access, and that access touches one element per
/// iteration point. `@outdeg1(A)` adds the accesses of `A` that touch one
/// element per iteration point regardless of the first two conditions.
pub fn outdegree_one_bound(program: &Program, s: &Statement) -> Result<Option<usize>, BoundError> {
    let produced = program.produced_arrays();
    let mut reads: HashMap<&str, usize> = HashMap::new();
    for t in &program.statements {
        for a in &t.inputs {
            *reads.entry(a.array.as_str()).or_default() += 1;
        }
    }
    let l = s.depth();
    let mut chosen = BTreeSet::new();
    for (j, a) in s.inputs.iter().enumerate() {
        if !produced.contains(a.array.as_str()) && reads[a.array.as_str()] == 1 && a.access_dimension() == l {
            chosen.insert(j);
        }
    }
    for forced in &s.outdeg_one {
        let matching: Vec<usize> = s
            .inputs
            .iter()
            .enumerate()
            .filter(|(_, a)| &a.array == forced && a.access_dimension() == l)
            .map(|(j, _)| j)
            .collect();
        if matching.is_empty() {
            return Err(BoundError::InvalidInput(format!(
                "statement {}: @outdeg1({forced}) but no access to {forced} touches one element per iteration point",
                s.id
            )));
        }
        chosen.extend(matching);
    }
    Ok((!chosen.is_empty()).then_some(chosen.len()))
}

fn lookup<'a>(program: &'a Program, id: &str) -> Result<&'a Statement, BoundError> {
    program
        .statement(id)
        .ok_or_else(|| BoundError::UnknownStatement(id.to_string()))
}

/// Bound for a single statement analysed on its own.
pub fn statement_bound(
    program: &Program,
    id: &str,
    m: f64,
    params: &HashMap<String, i64>,
) -> Result<StatementBound, BoundError> {
    let s = lookup(program, id)?;
    bound_weighted(program, s, &vec![1.0; s.inputs.len()], m, params)
}

fn bound_weighted(
    program: &Program,
    s: &Statement,
    weights: &[f64],
    m: f64,
    params: &HashMap<String, i64>,
) -> Result<StatementBound, BoundError> {
    let x = find_x0_weighted(s, weights, m, X_MAX_FACTOR * m)?;
    let u = outdegree_one_bound(program, s)?;
    let rho_cap = u.map(|u| 1.0 / u as f64);
    let rho = rho_cap.map_or(x.rho, |c| c.min(x.rho));
    let volume = iteration_count(s, params)?;
    let q = if rho.is_infinite() { 0.0 } else { volume as f64 / rho };
    let sym = symbolic_count(s);
    let (volume_closed_form, q_poly) = if sym.validated {
        let real = sym.poly.to_real();
        let qp = if rho.is_infinite() { RealPoly { terms: vec![] } } else { real.scale(1.0 / rho) };
        (Some(sym.poly.to_string()), Some(qp))
    } else {
        (None, None)
    };
    let mut notes = x.notes;
    if let Some(c) = rho_cap {
        if c < x.rho {
            notes.push(format!("statement {}: out-degree-one inputs cap rho at 1/{}", s.id, u.unwrap()));
        }
    }
    Ok(StatementBound {
        id: s.id.clone(),
        depth: s.depth(),
        psi_closed_form: x.closed_form.map(|c| c.to_string()),
        x0: x.x0,
        rho_partition: x.rho,
        rho_cap,
        u: u.unwrap_or(0),
        rho,
        cap_dominated: x.cap_dominated,
        shape: x.shape,
        weights: weights.to_vec(),
        volume,
        volume_closed_form,
        q,
        q_closed_form: q_poly.as_ref().map(|p| p.to_string()),
        q_poly,
        notes,
    })
}

/// Statement order compatible with the producer-consumer edges, or `None`
/// when the edges form a cycle.
fn topo_order(program: &Program) -> Option<Vec<usize>> {
    let n = program.statements.len();
    let index: HashMap<&str, usize> = program
        .statements
        .iter()
        .enumerate()
        .map(|(i, s)| (s.id.as_str(), i))
        .collect();
    let mut indeg = vec![0; n];
    let mut succ = vec![Vec::new(); n];
    for e in &program.producer_consumer {
        let (p, c) = (*index.get(e.producer.as_str())?, *index.get(e.consumer.as_str())?);
        succ[p].push(c);
        indeg[c] += 1;
    }
    let mut ready: Vec<usize> = (0..n).rev().filter(|&i| indeg[i] == 0).collect();
    let mut out = Vec::with_capacity(n);
    while let Some(i) = ready.pop() {
        out.push(i);
        for &c in &succ[i] {
            indeg[c] -= 1;
            if indeg[c] == 0 {
                ready.push(c);
            }
        }
    }
    (out.len() == n).then_some(out)
}

/// Per-statement bounds with Case II access-size adjustments applied, and
/// the corresponding records.
pub fn output_reuse(
    program: &Program,
    m: f64,
    params: &HashMap<String, i64>,
) -> Result<(Vec<StatementBound>, Vec<ReuseRecord>, Vec<String>), BoundError> {
    let n = program.statements.len();
    let mut notes = Vec::new();
    let order = match topo_order(program) {
        Some(o) => Some(o),
        None => {
            notes.push("producer-consumer edges form a cycle, output reuse not applied".to_string());
            None
        }
    };
    let mut bounds: Vec<Option<StatementBound>> = vec![None; n];
    let mut records = Vec::new();
    match order {
        None => {
            for (i, s) in program.statements.iter().enumerate() {
                bounds[i] = Some(bound_weighted(program, s, &vec![1.0; s.inputs.len()], m, params)?);
            }
        }
        Some(order) => {
            for i in order {
                let s = &program.statements[i];
                let mut weights = vec![1.0; s.inputs.len()];
                let mut by_array: BTreeMap<&str, (f64, Vec<&str>)> = BTreeMap::new();
                for e in program.producer_consumer.iter().filter(|e| e.consumer == s.id) {
                    let pi = program.statements.iter().position(|t| t.id == e.producer).unwrap();
                    let rho_p = bounds[pi].as_ref().expect("topological order").rho;
                    let entry = by_array.entry(e.array.as_str()).or_insert((0.0, Vec::new()));
                    entry.0 = entry.0.max(rho_p);
                    entry.1.push(e.producer.as_str());
                }
                for (array, (rho_p, producers)) in &by_array {
                    let divisor = rho_p.max(1.0);
                    let w = if rho_p.is_infinite() { 0.0 } else { 1.0 / divisor };
                    for (j, a) in s.inputs.iter().enumerate() {
                        if a.array == *array {
                            weights[j] = w;
                        }
                    }
                    for p in producers {
                        records.push(ReuseRecord::OutputOverlap {
                            producer: p.to_string(),
                            consumer: s.id.clone(),
                            array: array.to_string(),
                            rho_producer: *rho_p,
                            divisor,
                        });
                    }
                }
                bounds[i] = Some(bound_weighted(program, s, &weights, m, params)?);
            }
        }
    }
    Ok((bounds.into_iter().map(Option::unwrap).collect(), records, notes))
}

fn input_reuse_from(program: &Program, bounds: &[StatementBound]) -> Vec<ReuseRecord> {
    let produced = program.produced_arrays();
    let mut readers: BTreeMap<&str, Vec<usize>> = BTreeMap::new();
    for (i, s) in program.statements.iter().enumerate() {
        for a in &s.inputs {
            if !produced.contains(a.array.as_str()) {
                let r = readers.entry(a.array.as_str()).or_default();
                if !r.contains(&i) {
                    r.push(i);
                }
            }
        }
    }
    let mut out = Vec::new();
    for (array, idx) in readers {
        if idx.len() < 2 {
            continue;
        }
        let candidates: Vec<f64> = idx
            .iter()
            .map(|&i| {
                let s = &program.statements[i];
                let b = &bounds[i];
                if b.shape.volume.is_infinite() {
                    return 0.0;
                }
                let access: f64 = s
                    .inputs
                    .iter()
                    .zip(&b.shape.access_sizes)
                    .filter(|(a, _)| a.array == array)
                    .map(|(_, sz)| sz)
                    .sum();
                access * b.volume as f64 / b.shape.volume
            })
            .collect();
        let amount = candidates.iter().cloned().fold(f64::INFINITY, f64::min);
        out.push(ReuseRecord::InputOverlap {
            array: array.to_string(),
            statements: idx.iter().map(|&i| program.statements[i].id.clone()).collect(),
            candidates,
            amount,
        });
    }
    out
}

/// Case I records: for each pure input read by two or more statements, the
/// number of loads that may be shared.
pub fn input_reuse(
    program: &Program,
    m: f64,
    params: &HashMap<String, i64>,
) -> Result<Vec<ReuseRecord>, BoundError> {
    let (bounds, _, _) = output_reuse(program, m, params)?;
    Ok(input_reuse_from(program, &bounds))
}

/// Sequential and parallel bound for the whole program.
pub fn program_bound(
    program: &Program,
    m: f64,
    ranks: u64,
    params: &HashMap<String, i64>,
) -> Result<BoundReport, BoundError> {
    if ranks == 0 {
        return Err(BoundError::InvalidInput("rank count must be at least 1".into()));
    }
    let (bounds, mut reuse, mut notes) = output_reuse(program, m, params)?;
    let input = input_reuse_from(program, &bounds);
    let total_q: f64 = bounds.iter().map(|b| b.q).sum();
    let total_reuse: f64 = input
        .iter()
        .map(|r| match r {
            ReuseRecord::InputOverlap { amount, .. } => *amount,
            _ => 0.0,
        })
        .sum();
    let (max_i, max_q) = bounds
        .iter()
        .enumerate()
        .map(|(i, b)| (i, b.q))
        .fold((usize::MAX, 0.0), |acc, v| if v.1 > acc.1 { v } else { acc });
    let mut q_seq = total_q - total_reuse;
    let clamped = q_seq < max_q * (1.0 - 1e-9);
    q_seq = q_seq.max(max_q);
    if clamped {
        notes.push(format!(
            "reuse exceeds the sum of statement bounds, clamped to statement {}",
            bounds[max_i].id
        ));
    }

    let symbolic = if clamped {
        bounds[max_i].q_poly.clone()
    } else {
        let mut acc = Some(RealPoly { terms: vec![] });
        for b in &bounds {
            acc = match (acc, &b.q_poly) {
                (Some(a), Some(p)) => Some(a.add(p)),
                _ => None,
            };
        }
        for r in &input {
            if let ReuseRecord::InputOverlap { statements, candidates, amount, .. } = r {
                let k = candidates.iter().position(|c| c == amount).unwrap_or(0);
                let i = program.statements.iter().position(|s| s.id == statements[k]).unwrap();
                let b = &bounds[i];
                let per_point = if b.volume == 0 { 0.0 } else { amount / b.volume as f64 };
                let sym = symbolic_count(&program.statements[i]);
                acc = match acc {
                    Some(a) if sym.validated => Some(a.add(&sym.poly.to_real().scale(-per_point))),
                    _ => None,
                };
            }
        }
        acc
    };
    let q_par_poly = symbolic.map(|p| p.scale(1.0 / ranks as f64));
    for b in &bounds {
        notes.extend(b.notes.iter().cloned());
    }
    reuse.extend(input);
    Ok(BoundReport {
        memory: m,
        ranks,
        params: params.iter().map(|(k, v)| (k.clone(), *v)).collect(),
        per_statement: bounds,
        reuse,
        q_sequential: q_seq,
        q_parallel: q_seq / ranks as f64,
        q_parallel_closed_form: q_par_poly.as_ref().map(|p| p.to_string()),
        q_parallel_poly: q_par_poly,
        notes,
    })
}
