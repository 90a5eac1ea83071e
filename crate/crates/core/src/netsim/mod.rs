//! A bulk-synchronous simulated machine that counts every word it moves.
//!
//! `P` ranks run a step function once per superstep. Messages sent during a
//! superstep are delivered at its end; each delivery between distinct ranks
//! becomes one ledger row keyed by the receiving rank. Self-sends are local
//! and free.

mod ledger;

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use ledger::{CommLedger, LedgerSummary, Op, Transfer};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct MachineConfig {
    pub ranks: usize,
    /// Words of private memory per rank.
    pub memory: usize,
    pub word_size: usize,
    /// Fail when a rank reports more resident words than `memory` at a
    /// superstep boundary.
    pub strict_memory: bool,
}

impl MachineConfig {
    pub fn new(ranks: usize, memory: usize) -> Self {
        MachineConfig {
            ranks,
            memory,
            word_size: 8,
            strict_memory: false,
        }
    }

    pub fn strict(self) -> Self {
        MachineConfig {
            strict_memory: true,
            ..self
        }
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum NetError {
    #[error("machine needs at least one rank and one word of memory")]
    InvalidConfig,
    #[error("superstep {step}: rank {rank} expected a message from rank {peer} that never came")]
    Deadlock { step: usize, rank: usize, peer: usize },
    #[error("superstep {step}: rank {rank} holds {words} words, memory is {memory}")]
    MemoryExceeded {
        step: usize,
        rank: usize,
        words: usize,
        memory: usize,
    },
    #[error("superstep {step}: rank {from} sent to rank {to}, which does not exist or has finished")]
    Undeliverable { step: usize, from: usize, to: usize },
    #[error("superstep {step}: rank {rank} is not in the collective's group")]
    NotInGroup { step: usize, rank: usize },
}

/// Failure of an SPMD run: a machine rule, or an error raised by the program.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum SpmdError<E: std::error::Error + 'static> {
    #[error(transparent)]
    Net(#[from] NetError),
    #[error("rank {rank}, superstep {step}: {source}")]
    Program { rank: usize, step: usize, source: E },
}

/// Message contents. Values and indices both count as words.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Payload {
    pub values: Vec<f64>,
    pub indices: Vec<usize>,
}

impl Payload {
    pub fn values(values: Vec<f64>) -> Self {
        Payload {
            values,
            indices: Vec::new(),
        }
    }

    pub fn words(&self) -> u64 {
        (self.values.len() + self.indices.len()) as u64
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Message {
    pub from: usize,
    pub op: Op,
    pub payload: Payload,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Flow {
    Continue,
    Done,
}

/// One rank's view of the current superstep.
pub struct Ctx {
    rank: usize,
    ranks: usize,
    step: usize,
    inbox: Vec<Message>,
    outbox: Vec<(usize, Message)>,
    expected: Vec<usize>,
    resident: usize,
}

impl Ctx {
    pub fn rank(&self) -> usize {
        self.rank
    }

    pub fn ranks(&self) -> usize {
        self.ranks
    }

    pub fn superstep(&self) -> usize {
        self.step
    }

    /// Messages delivered at the previous boundary, ordered by sender and
    /// then by send order.
    pub fn take_inbox(&mut self) -> Vec<Message> {
        std::mem::take(&mut self.inbox)
    }

    pub fn send(&mut self, to: usize, op: Op, payload: Payload) {
        self.outbox.push((
            to,
            Message {
                from: self.rank,
                op,
                payload,
            },
        ));
    }

    /// Declares that a message from `from` must arrive at the end of this
    /// superstep.
    pub fn expect(&mut self, from: usize) {
        self.expected.push(from);
    }

    /// Words this rank currently holds.
    pub fn set_resident(&mut self, words: usize) {
        self.resident = words;
    }

    /// Root sends `payload` to every other member; members expect it.
    pub fn bcast(&mut self, group: &[usize], root: usize, payload: Payload) -> Result<(), NetError> {
        self.check_member(group)?;
        if self.rank == root {
            for &r in group.iter().filter(|&&r| r != root) {
                self.send(r, Op::Bcast, payload.clone());
            }
        } else {
            self.expect(root);
        }
        Ok(())
    }

    /// Root sends `parts[i]` to `group[i]`.
    pub fn scatter(&mut self, group: &[usize], root: usize, parts: Vec<Payload>) -> Result<(), NetError> {
        self.check_member(group)?;
        if self.rank == root {
            assert_eq!(parts.len(), group.len(), "one part per group member");
            for (&r, part) in group.iter().zip(parts) {
                self.send(r, Op::Scatter, part);
            }
        } else {
            self.expect(root);
        }
        Ok(())
    }

    /// Every member except the root sends its contribution to the root,
    /// which combines them after delivery.
    pub fn reduce(&mut self, group: &[usize], root: usize, payload: Payload) -> Result<(), NetError> {
        self.check_member(group)?;
        if self.rank == root {
            for &r in group.iter().filter(|&&r| r != root) {
                self.expect(r);
            }
        } else {
            self.send(root, Op::Reduce, payload);
        }
        Ok(())
    }

    /// Every member sends its contribution to every other member.
    pub fn allgather(&mut self, group: &[usize], payload: Payload) -> Result<(), NetError> {
        self.check_member(group)?;
        let me = self.rank;
        for &r in group.iter().filter(|&&r| r != me) {
            self.send(r, Op::Allgather, payload.clone());
            self.expect(r);
        }
        Ok(())
    }

    fn check_member(&self, group: &[usize]) -> Result<(), NetError> {
        if group.contains(&self.rank) {
            Ok(())
        } else {
            Err(NetError::NotInGroup {
                step: self.step,
                rank: self.rank,
            })
        }
    }
}

#[derive(Debug, Clone)]
pub struct SpmdRun<S> {
    pub ledger: CommLedger,
    pub states: Vec<S>,
    pub supersteps: usize,
    /// Largest resident word count each rank reported.
    pub peak_resident: Vec<usize>,
}

/// Runs `step` on every rank, superstep after superstep, until every rank
/// has returned [`Flow::Done`] and no messages are in flight.
///
/// Ranks execute in rank order within a superstep, so a run is a pure
/// function of the initial states and the step function.
pub fn run_spmd<S, E, F>(config: MachineConfig, mut states: Vec<S>, mut step: F) -> Result<SpmdRun<S>, SpmdError<E>>
where
    E: std::error::Error + 'static,
    F: FnMut(&mut Ctx, &mut S) -> Result<Flow, E>,
{
    let p = config.ranks;
    if p == 0 || config.memory == 0 {
        return Err(NetError::InvalidConfig.into());
    }
    assert_eq!(states.len(), p, "one state per rank");
    let mut ledger = CommLedger::new(p, config.word_size);
    let mut inboxes: Vec<Vec<Message>> = vec![Vec::new(); p];
    let mut done = vec![false; p];
    let mut peak = vec![0usize; p];
    let mut superstep = 0;
    loop {
        let mut outgoing: Vec<(usize, usize, Message)> = Vec::new();
        let mut expected: Vec<(usize, usize)> = Vec::new();
        for r in 0..p {
            if done[r] {
                continue;
            }
            let mut ctx = Ctx {
                rank: r,
                ranks: p,
                step: superstep,
                inbox: std::mem::take(&mut inboxes[r]),
                outbox: Vec::new(),
                expected: Vec::new(),
                resident: 0,
            };
            let flow = step(&mut ctx, &mut states[r]).map_err(|source| SpmdError::Program {
                rank: r,
                step: superstep,
                source,
            })?;
            if config.strict_memory && ctx.resident > config.memory {
                return Err(NetError::MemoryExceeded {
                    step: superstep,
                    rank: r,
                    words: ctx.resident,
                    memory: config.memory,
                }
                .into());
            }
            peak[r] = peak[r].max(ctx.resident);
            for (to, msg) in ctx.outbox {
                outgoing.push((r, to, msg));
            }
            expected.extend(ctx.expected.into_iter().map(|from| (r, from)));
            done[r] = flow == Flow::Done;
        }
        let mut arrived: BTreeMap<(usize, usize), usize> = BTreeMap::new();
        for (from, to, msg) in outgoing {
            if to >= p || done[to] {
                return Err(NetError::Undeliverable {
                    step: superstep,
                    from,
                    to,
                }
                .into());
            }
            if from != to {
                ledger.record(superstep, to, msg.op, from, msg.payload.words());
            }
            *arrived.entry((to, from)).or_default() += 1;
            inboxes[to].push(msg);
        }
        for (rank, from) in expected {
            match arrived.get_mut(&(rank, from)) {
                Some(n) if *n > 0 => *n -= 1,
                _ => {
                    return Err(NetError::Deadlock {
                        step: superstep,
                        rank,
                        peer: from,
                    }
                    .into())
                }
            }
        }
        for inbox in &mut inboxes {
            inbox.sort_by_key(|m| m.from);
        }
        superstep += 1;
        if done.iter().all(|&d| d) {
            return Ok(SpmdRun {
                ledger,
                states,
                supersteps: superstep,
                peak_resident: peak,
            });
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use std::convert::Infallible;

    #[test]
    fn single_rank_is_silent() {
        let run = run_spmd(MachineConfig::new(1, 10), vec![0u32], |ctx, n: &mut u32| {
            if *n < 2 {
                ctx.send(0, Op::Recv, Payload::values(vec![1.0; 5]));
            }
            *n += 1;
            Ok::<_, Infallible>(if *n == 3 { Flow::Done } else { Flow::Continue })
        })
        .unwrap();
        assert!(run.ledger.entries.is_empty());
        assert_eq!(run.supersteps, 3);
    }

    #[test]
    fn ring_shift() {
        let p = 4;
        let run = run_spmd(MachineConfig::new(p, 10), vec![None; p], |ctx, got: &mut Option<f64>| {
            if ctx.superstep() == 0 {
                let r = ctx.rank();
                ctx.send((r + 1) % p, Op::Recv, Payload::values(vec![r as f64]));
                ctx.expect((r + p - 1) % p);
                return Ok::<_, Infallible>(Flow::Continue);
            }
            *got = ctx.take_inbox().pop().map(|m| m.payload.values[0]);
            Ok(Flow::Done)
        })
        .unwrap();
        assert_eq!(run.ledger.entries.len(), 4);
        assert_eq!(run.ledger.total_words(), 4);
        assert_eq!(run.states, vec![Some(3.0), Some(0.0), Some(1.0), Some(2.0)]);
    }

    #[test]
    fn unmatched_expectation_deadlocks() {
        let err = run_spmd(MachineConfig::new(2, 10), vec![(); 2], |ctx, _| {
            if ctx.rank() == 1 {
                ctx.expect(0);
            }
            Ok::<_, Infallible>(Flow::Done)
        })
        .unwrap_err();
        assert_eq!(err, SpmdError::Net(NetError::Deadlock { step: 0, rank: 1, peer: 0 }));
    }

    #[test]
    fn strict_memory() {
        let cfg = MachineConfig::new(2, 100).strict();
        let err = run_spmd(cfg, vec![(); 2], |ctx, _| {
            ctx.set_resident(if ctx.rank() == 1 { 101 } else { 100 });
            Ok::<_, Infallible>(Flow::Done)
        })
        .unwrap_err();
        assert!(matches!(err, SpmdError::Net(NetError::MemoryExceeded { rank: 1, words: 101, .. })));
    }

    #[test]
    fn collective_charges() {
        // bcast of 16 words to a group of 4
        let run = run_spmd(MachineConfig::new(4, 100), vec![(); 4], |ctx, _| {
            if ctx.superstep() == 1 {
                return Ok::<_, Infallible>(Flow::Done);
            }
            ctx.bcast(&[0, 1, 2, 3], 0, Payload::values(vec![0.5; 16])).unwrap();
            Ok(Flow::Continue)
        })
        .unwrap();
        assert_eq!(run.ledger.received(), vec![0, 16, 16, 16]);

        // scatter of a (N - tv) v = 96 word panel over 8 ranks
        let run = run_spmd(MachineConfig::new(8, 100), vec![(); 8], |ctx, _| {
            if ctx.superstep() == 1 {
                return Ok::<_, Infallible>(Flow::Done);
            }
            let group: Vec<usize> = (0..8).collect();
            let parts = (0..8).map(|_| Payload::values(vec![1.0; 12])).collect();
            ctx.scatter(&group, 3, parts).unwrap();
            Ok(Flow::Continue)
        })
        .unwrap();
        let recv = run.ledger.received();
        assert!(recv.iter().enumerate().all(|(r, &w)| w == if r == 3 { 0 } else { 12 }));
    }

    proptest! {
        #[test]
        fn netsim_is_deterministic_and_conserves_words(p in 1usize..9, sizes in prop::collection::vec(0usize..6, 64)) {
            let prog = |ctx: &mut Ctx, _: &mut ()| {
                let r = ctx.rank();
                if ctx.superstep() == 0 {
                    for to in 0..p {
                        let len = sizes[(r * p + to) % sizes.len()];
                        if to != r && len > 0 {
                            ctx.send(to, Op::Recv, Payload::values(vec![r as f64; len]));
                        }
                    }
                    return Ok::<_, Infallible>(Flow::Continue);
                }
                ctx.take_inbox();
                Ok(Flow::Done)
            };
            let a = run_spmd(MachineConfig::new(p, 100), vec![(); p], prog).unwrap();
            let b = run_spmd(MachineConfig::new(p, 100), vec![(); p], prog).unwrap();
            prop_assert_eq!(&a.ledger, &b.ledger);
            let expected: u64 = (0..p)
                .flat_map(|r| (0..p).map(move |to| (r, to)))
                .filter(|(r, to)| r != to)
                .map(|(r, to)| sizes[(r * p + to) % sizes.len()] as u64)
                .sum();
            prop_assert_eq!(a.ledger.total_words(), expected);
            prop_assert_eq!(a.ledger.received().iter().sum::<u64>(), expected);
            prop_assert_eq!(a.ledger.sent().iter().sum::<u64>(), expected);
        }
    }
}
