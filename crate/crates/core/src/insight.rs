use std::fmt;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::stage::Stage;

/// Content hash of `(stage, text)`; stable across runs and machines.
#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct InsightId(pub String);

impl InsightId {
    pub fn of(stage: Stage, text: &str) -> InsightId {
        let mut h = Sha256::new();
        h.update([stage.ordinal()]);
        h.update(b"\n");
        h.update(text.as_bytes());
        InsightId(hex::encode(&h.finalize()[..8]))
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }
}

impl fmt::Display for InsightId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

/// A natural-language technique suggestion for one pipeline stage.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Insight {
    pub id: InsightId,
    pub stage: Stage,
    pub text: String,
}

impl Insight {
    pub fn new(stage: Stage, text: impl Into<String>) -> Insight {
        let text = text.into();
        Insight { id: InsightId::of(stage, &text), stage, text }
    }
}
