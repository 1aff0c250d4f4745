//! Permissioned, append-only ledger: typed transactions, the report lifecycle
//! state machine, round-robin block production among consortium members and
//! full-chain validation.

mod block;
pub mod build;
mod dispute;
mod node;
pub mod sim;
mod state;
mod tx;

use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::hash::{sha256_parts, Digest};
use crate::keys::PublicKey;
use crate::report::{AuditorRegistry, AuthorityDirectory, DirectoryEntry};
use crate::wire::Writer;

pub use block::{tx_merkle_root, Block, BlockHeader, MAX_TXS_PER_BLOCK};
pub use dispute::{verify_dispute, DisputeOutcome, DisputeVerdict};
pub use node::{
    load_chain_dir, validate_chain, validate_chain_bytes, write_chain_dir, ChainError, Network, Node, RejectedTx,
    TxStatus,
};
pub use state::{
    AuditOutcome, AuditRecord, CommitRecord, DeletionRecord, DisputeRecord, Event, HistoryEntry, LedgerState, Phase,
    Publication, ReportRecord,
};
pub use tx::{
    signing_preimage, AuditDecision, CommitPayload, DeletionReason, HandlingStatus, Payload, RejectReason, Transaction,
    TxKind, FIELD_ORDER,
};

pub const DEFAULT_AUDIT_TIMEOUT: u64 = 20;

/// Why a transaction was refused. Every refusal is logged by the node that
/// saw it; none of them changes state.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Error, Serialize, Deserialize)]
pub enum Rejection {
    #[error("transaction not allowed in the report's current phase")]
    WrongPhase,
    #[error("sender does not hold the role this transaction needs")]
    WrongRole,
    #[error("commitment does not match the announced report")]
    HashMismatch,
    #[error("bad transaction signature")]
    BadSignature,
    #[error("unknown report")]
    UnknownReport,
    #[error("sender is not the auditor selected for this report")]
    AuditorMismatch,
    #[error("published fields do not verify against the commitment")]
    InvalidRedaction,
    #[error("key already voted on this report")]
    DuplicateVote,
    #[error("merge target is missing, closed or the report itself")]
    BadMergeTarget,
    #[error("audit timeout has not elapsed")]
    TimeoutNotReached,
    #[error("payload does not decode for this kind")]
    MalformedPayload,
    #[error("no auditors are registered")]
    EmptyRegistry,
}

impl Rejection {
    pub fn code(&self) -> &'static str {
        match self {
            Rejection::WrongPhase => "WrongPhase",
            Rejection::WrongRole => "WrongRole",
            Rejection::HashMismatch => "HashMismatch",
            Rejection::BadSignature => "BadSignature",
            Rejection::UnknownReport => "UnknownReport",
            Rejection::AuditorMismatch => "AuditorMismatch",
            Rejection::InvalidRedaction => "InvalidRedaction",
            Rejection::DuplicateVote => "DuplicateVote",
            Rejection::BadMergeTarget => "BadMergeTarget",
            Rejection::TimeoutNotReached => "TimeoutNotReached",
            Rejection::MalformedPayload => "MalformedPayload",
            Rejection::EmptyRegistry => "EmptyRegistry",
        }
    }
}

#[derive(Debug, Error)]
pub enum GenesisError {
    #[error("genesis file: {0}")]
    Io(#[from] std::io::Error),
    #[error("genesis json: {0}")]
    Json(#[from] serde_json::Error),
    #[error("genesis needs at least one consortium member")]
    NoMembers,
}

fn default_timeout() -> u64 {
    DEFAULT_AUDIT_TIMEOUT
}

fn default_interval() -> u64 {
    5
}

/// Chain parameters fixed at launch, stored as `genesis.json`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Genesis {
    pub chain_id: String,
    /// Block producers, in round-robin order.
    pub members: Vec<PublicKey>,
    #[serde(default)]
    pub auditors: Vec<PublicKey>,
    #[serde(default)]
    pub directory: Vec<DirectoryEntry>,
    /// Blocks after a commit before anyone may force publication.
    #[serde(default = "default_timeout")]
    pub audit_timeout: u64,
    #[serde(default)]
    pub genesis_time: u64,
    #[serde(default = "default_interval")]
    pub block_interval_secs: u64,
}

impl Genesis {
    pub fn new(chain_id: impl Into<String>, members: Vec<PublicKey>) -> Self {
        Self {
            chain_id: chain_id.into(),
            members,
            auditors: Vec::new(),
            directory: Vec::new(),
            audit_timeout: DEFAULT_AUDIT_TIMEOUT,
            genesis_time: 0,
            block_interval_secs: default_interval(),
        }
    }

    pub fn validate(&self) -> Result<(), GenesisError> {
        if self.members.is_empty() {
            return Err(GenesisError::NoMembers);
        }
        Ok(())
    }

    /// Block 0's `prev_hash`.
    pub fn hash(&self) -> Digest {
        let mut w = Writer::new();
        w.str(&self.chain_id).u32(self.members.len() as u32);
        for m in &self.members {
            w.raw(m.as_bytes());
        }
        w.u32(self.auditors.len() as u32);
        for a in &self.auditors {
            w.raw(a.as_bytes());
        }
        w.u32(self.directory.len() as u32);
        for e in &self.directory {
            e.encode(&mut w);
        }
        w.u64(self.audit_timeout).u64(self.genesis_time).u64(self.block_interval_secs);
        sha256_parts(&[b"acrp-genesis", &w.finish()])
    }

    pub fn producer_for(&self, height: u64) -> PublicKey {
        self.members[(height % self.members.len() as u64) as usize]
    }

    pub fn auditor_registry(&self) -> AuditorRegistry {
        AuditorRegistry::from_keys(self.auditors.iter().copied())
    }

    pub fn authority_directory(&self) -> AuthorityDirectory {
        AuthorityDirectory { entries: self.directory.clone() }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("genesis serializes")
    }

    pub fn from_json(s: &str) -> Result<Self, GenesisError> {
        let g: Self = serde_json::from_str(s)?;
        g.validate()?;
        Ok(g)
    }

    pub fn load(path: &Path) -> Result<Self, GenesisError> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }
}
