use std::collections::BTreeMap;
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Op {
    /// Point-to-point.
    Recv,
    Bcast,
    Reduce,
    Scatter,
    Allgather,
}

impl Op {
    pub fn as_str(self) -> &'static str {
        match self {
            Op::Recv => "recv",
            Op::Bcast => "bcast",
            Op::Reduce => "reduce",
            Op::Scatter => "scatter",
            Op::Allgather => "allgather",
        }
    }
}

/// One delivered message: `rank` received `words` from `peer`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Transfer {
    pub step: usize,
    pub rank: usize,
    pub op: Op,
    pub peer: usize,
    pub words: u64,
    pub bytes: u64,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CommLedger {
    pub ranks: usize,
    pub word_size: usize,
    pub entries: Vec<Transfer>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LedgerSummary {
    pub ranks: usize,
    pub total_words: u64,
    pub total_bytes: u64,
    pub received: Vec<u64>,
    pub sent: Vec<u64>,
    pub max_received: u64,
    pub max_sent: u64,
    /// Words per operation kind.
    pub by_op: BTreeMap<Op, u64>,
}

impl CommLedger {
    pub fn new(ranks: usize, word_size: usize) -> Self {
        CommLedger {
            ranks,
            word_size,
            entries: Vec::new(),
        }
    }

    pub(crate) fn record(&mut self, step: usize, rank: usize, op: Op, peer: usize, words: u64) {
        self.entries.push(Transfer {
            step,
            rank,
            op,
            peer,
            words,
            bytes: words * self.word_size as u64,
        });
    }

    pub fn total_words(&self) -> u64 {
        self.entries.iter().map(|e| e.words).sum()
    }

    pub fn received(&self) -> Vec<u64> {
        let mut v = vec![0; self.ranks];
        for e in &self.entries {
            v[e.rank] += e.words;
        }
        v
    }

    pub fn sent(&self) -> Vec<u64> {
        let mut v = vec![0; self.ranks];
        for e in &self.entries {
            v[e.peer] += e.words;
        }
        v
    }

    /// Words received per rank during supersteps `lo..hi`.
    pub fn received_between(&self, lo: usize, hi: usize) -> Vec<u64> {
        let mut v = vec![0; self.ranks];
        for e in self.entries.iter().filter(|e| (lo..hi).contains(&e.step)) {
            v[e.rank] += e.words;
        }
        v
    }

    pub fn summary(&self) -> LedgerSummary {
        let received = self.received();
        let sent = self.sent();
        let mut by_op = BTreeMap::new();
        for e in &self.entries {
            *by_op.entry(e.op).or_default() += e.words;
        }
        LedgerSummary {
            ranks: self.ranks,
            total_words: self.total_words(),
            total_bytes: self.total_words() * self.word_size as u64,
            max_received: received.iter().copied().max().unwrap_or(0),
            max_sent: sent.iter().copied().max().unwrap_or(0),
            received,
            sent,
            by_op,
        }
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("step,rank,op,peer,words,bytes\n");
        for e in &self.entries {
            let _ = writeln!(out, "{},{},{},{},{},{}", e.step, e.rank, e.op.as_str(), e.peer, e.words, e.bytes);
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn csv_and_conservation() {
        let mut l = CommLedger::new(3, 8);
        l.record(0, 1, Op::Recv, 0, 4);
        l.record(2, 0, Op::Bcast, 2, 3);
        assert_eq!(l.to_csv(), "step,rank,op,peer,words,bytes\n0,1,recv,0,4,32\n2,0,bcast,2,3,24\n");
        let s = l.summary();
        assert_eq!(s.received.iter().sum::<u64>(), s.sent.iter().sum::<u64>());
        assert_eq!((s.max_received, s.max_sent, s.total_bytes), (4, 4, 56));
        assert_eq!(l.received_between(1, 3), vec![3, 0, 0]);
    }
}
