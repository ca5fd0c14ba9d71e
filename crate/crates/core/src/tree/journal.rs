//! Append-only newline-delimited JSON log of tree mutations.
//!
//! Each line is one [`JournalRecord`]. Timestamps are logical: the zero-based
//! index of the record in the journal, so two identical searches write
//! byte-identical journals.

use std::io::{self, Write};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::insight::InsightId;
use crate::scalar::Scalar;
use crate::space::SearchSpace;
use crate::tree::{ExperimentTree, NodeId, Simulation, StageCode, TreeError};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "event", rename_all = "snake_case")]
pub enum JournalEvent {
    Header {
        fingerprint: String,
        seed: u64,
    },
    NodeCreated {
        node_id: NodeId,
        parent_id: NodeId,
        insight_id: InsightId,
    },
    Simulated {
        node_id: NodeId,
        score: f64,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        test_score: Option<f64>,
        failed: bool,
        #[serde(default, skip_serializing_if = "Vec::is_empty")]
        stages: Vec<StageCode>,
    },
    Backprop {
        node_id: NodeId,
        score: f64,
    },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct JournalRecord {
    #[serde(flatten)]
    pub event: JournalEvent,
    pub timestamp: u64,
}

#[derive(Debug, Error)]
pub enum JournalError {
    #[error("journal io: {0}")]
    Io(#[from] io::Error),
    #[error("journal corrupt at byte offset {offset}: {reason}")]
    Corrupt { offset: usize, reason: String },
    #[error("journal fingerprint {found} does not match dataset fingerprint {expected}")]
    FingerprintMismatch { expected: String, found: String },
}

pub struct JournalWriter<W: Write> {
    out: W,
    next_timestamp: u64,
}

impl<W: Write> JournalWriter<W> {
    pub fn new(out: W) -> Self {
        JournalWriter { out, next_timestamp: 0 }
    }

    /// Continues an existing journal that already holds `records` lines.
    pub fn continuing(out: W, records: u64) -> Self {
        JournalWriter { out, next_timestamp: records }
    }

    pub fn append(&mut self, event: JournalEvent) -> io::Result<()> {
        let record = JournalRecord { event, timestamp: self.next_timestamp };
        let mut line = serde_json::to_vec(&record).map_err(io::Error::other)?;
        line.push(b'\n');
        self.out.write_all(&line)?;
        self.out.flush()?;
        self.next_timestamp += 1;
        Ok(())
    }

    pub fn into_inner(self) -> W {
        self.out
    }
}

/// Parses a journal, reporting the byte offset of the first bad record.
pub fn read_journal(bytes: &[u8]) -> Result<Vec<JournalRecord>, JournalError> {
    let mut records = Vec::new();
    let mut offset = 0;
    while offset < bytes.len() {
        let Some(len) = bytes[offset..].iter().position(|&b| b == b'\n') else {
            return Err(JournalError::Corrupt { offset, reason: "truncated record".into() });
        };
        let line = &bytes[offset..offset + len];
        let record: JournalRecord = serde_json::from_slice(line)
            .map_err(|e| JournalError::Corrupt { offset, reason: e.to_string() })?;
        records.push(record);
        offset += len + 1;
    }
    Ok(records)
}

/// A tree rebuilt from a journal.
#[derive(Clone, Debug)]
pub struct Replayed<S> {
    pub tree: ExperimentTree<S>,
    pub seed: u64,
    /// `(node, score)` of every completed rollout, in order.
    pub rollouts: Vec<(NodeId, S)>,
    pub records: u64,
}

/// Rebuilds the tree described by `records`, resolving insight ids in `space`.
pub fn replay<S: Scalar>(
    records: &[JournalRecord],
    space: &SearchSpace,
) -> Result<Replayed<S>, JournalError> {
    let corrupt = |i: usize, reason: String| JournalError::Corrupt { offset: i, reason };
    let Some(JournalRecord { event: JournalEvent::Header { fingerprint, seed }, .. }) = records.first()
    else {
        return Err(corrupt(0, "missing header record".into()));
    };
    let mut tree = ExperimentTree::new(fingerprint.clone());
    let mut rollouts = Vec::new();
    for (i, rec) in records.iter().enumerate().skip(1) {
        let tree_err = |e: TreeError| corrupt(i, format!("record {i}: {e}"));
        match &rec.event {
            JournalEvent::Header { .. } => return Err(corrupt(i, format!("record {i}: repeated header"))),
            JournalEvent::NodeCreated { node_id, parent_id, insight_id } => {
                let insight = space
                    .insight(insight_id)
                    .ok_or_else(|| corrupt(i, format!("record {i}: unknown insight {insight_id}")))?;
                let id = tree.add_child(*parent_id, insight.clone()).map_err(tree_err)?;
                if id != *node_id {
                    return Err(corrupt(i, format!("record {i}: expected node {id}, found {node_id}")));
                }
            }
            JournalEvent::Simulated { node_id, score, test_score, failed, stages } => {
                let sim = Simulation {
                    score: S::of(*score),
                    test_score: test_score.map(S::of),
                    failed: *failed,
                    stages: stages.clone(),
                    seq: 0,
                };
                tree.set_simulation(*node_id, sim).map_err(tree_err)?;
            }
            JournalEvent::Backprop { node_id, score } => {
                tree.backpropagate(*node_id, S::of(*score)).map_err(tree_err)?;
                rollouts.push((*node_id, S::of(*score)));
            }
        }
    }
    Ok(Replayed { tree, seed: *seed, rollouts, records: records.len() as u64 })
}

/// Checks the journal header against the current dataset fingerprint.
pub fn check_fingerprint(records: &[JournalRecord], expected: &str) -> Result<(), JournalError> {
    match records.first() {
        Some(JournalRecord { event: JournalEvent::Header { fingerprint, .. }, .. }) => {
            if fingerprint == expected {
                Ok(())
            } else {
                Err(JournalError::FingerprintMismatch {
                    expected: expected.to_string(),
                    found: fingerprint.clone(),
                })
            }
        }
        _ => Err(JournalError::Corrupt { offset: 0, reason: "missing header record".into() }),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample() -> Vec<u8> {
        let mut w = JournalWriter::new(Vec::new());
        w.append(JournalEvent::Header { fingerprint: "fp".into(), seed: 3 }).unwrap();
        w.append(JournalEvent::Backprop { node_id: NodeId(0), score: 0.25 }).unwrap();
        w.into_inner()
    }

    #[test]
    fn records_carry_logical_timestamps() {
        let bytes = sample();
        let text = String::from_utf8(bytes.clone()).unwrap();
        assert_eq!(
            text.lines().nth(1).unwrap(),
            r#"{"event":"backprop","node_id":0,"score":0.25,"timestamp":1}"#
        );
        let recs = read_journal(&bytes).unwrap();
        assert_eq!(recs.len(), 2);
        assert_eq!(recs[1].timestamp, 1);
    }

    #[test]
    fn truncated_final_record_names_offset() {
        let mut bytes = sample();
        let first_len = bytes.iter().position(|&b| b == b'\n').unwrap() + 1;
        bytes.truncate(bytes.len() - 5);
        match read_journal(&bytes) {
            Err(JournalError::Corrupt { offset, .. }) => assert_eq!(offset, first_len),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn fingerprint_mismatch() {
        let recs = read_journal(&sample()).unwrap();
        assert!(check_fingerprint(&recs, "fp").is_ok());
        assert!(matches!(
            check_fingerprint(&recs, "other"),
            Err(JournalError::FingerprintMismatch { .. })
        ));
    }
}
