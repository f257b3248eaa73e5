//! Canonical wire format: line-delimited JSON envelopes. Integers that
//! may exceed 2^53 are carried as decimal strings so any JSON consumer
//! keeps full precision.

use serde::{Deserialize, Serialize};

use crate::mpc::Upload;
use crate::value::{Row, Scalar};

/// Every message on the bus; the event log is one envelope per line.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Envelope {
    pub from: String,
    pub to: String,
    pub epoch: i64,
    #[serde(flatten)]
    pub body: Message,
    pub msg_id: u64,
}

impl Envelope {
    pub fn to_line(&self) -> String {
        serde_json::to_string(self).expect("wire messages serialize")
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", content = "payload")]
pub enum Message {
    EpochOpen {},
    Upload(Upload),
    Ack {
        views: Vec<String>,
    },
    CountShares {
        view: String,
        window: i64,
        group_key_b64: String,
        #[serde(with = "crate::value::wire_u64")]
        share: u64,
    },
    GateDecision {
        view: String,
        window: i64,
        group_key_b64: String,
        revealed_count: u64,
        released: bool,
    },
    Release {
        view: String,
        window: i64,
        group_key_b64: String,
        values: Vec<Scalar>,
    },
    ReplicaPush {
        table: String,
        version: u64,
        rows: Vec<Row>,
    },
    Query {
        sql: String,
    },
    QueryResult {
        rows: Vec<Row>,
        completeness: Option<f64>,
    },
}

impl Message {
    pub fn kind(&self) -> &'static str {
        match self {
            Message::EpochOpen {} => "EpochOpen",
            Message::Upload(_) => "Upload",
            Message::Ack { .. } => "Ack",
            Message::CountShares { .. } => "CountShares",
            Message::GateDecision { .. } => "GateDecision",
            Message::Release { .. } => "Release",
            Message::ReplicaPush { .. } => "ReplicaPush",
            Message::Query { .. } => "Query",
            Message::QueryResult { .. } => "QueryResult",
        }
    }
}

/// Parses an event log back into envelopes.
pub fn parse_event_log(text: &str) -> Result<Vec<Envelope>, serde_json::Error> {
    text.lines()
        .filter(|l| !l.trim().is_empty())
        .map(serde_json::from_str)
        .collect()
}
