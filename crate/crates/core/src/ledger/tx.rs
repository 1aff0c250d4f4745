//! Typed ledger transactions and their binary layout.
//!
//! `Transaction`: `kind:u8 ‖ has_id:u8 ‖ [report_id:32] ‖ len:u32 ‖ payload ‖
//! sender_pk:32 ‖ signature:64`. The signature covers
//! `kind:u8 ‖ has_id:u8 ‖ [report_id] ‖ len:u32 ‖ payload ‖ len:u32 ‖ chain_id`.

use serde::{Deserialize, Serialize};

use crate::hash::{sha256, Digest};
use crate::keys::{PublicKey, Signature, SigningKey};
use crate::report::{DirectoryEntry, ReportId, ReportType};
use crate::rss::{FieldTag, RedactedMessage, SignatureCommitment};
use crate::wire::{DecodeError, Reader, Writer};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum TxKind {
    Announce = 0,
    Commit = 1,
    AuditDecision = 2,
    Publish = 3,
    StatusUpdate = 4,
    DeletionLog = 5,
    Vote = 6,
    Comment = 7,
    Merge = 8,
    DisputeEvidence = 9,
    RegisterAuditor = 10,
    RegisterAuthority = 11,
}

impl TxKind {
    pub fn from_u8(v: u8) -> Option<Self> {
        use TxKind::*;
        Some(match v {
            0 => Announce,
            1 => Commit,
            2 => AuditDecision,
            3 => Publish,
            4 => StatusUpdate,
            5 => DeletionLog,
            6 => Vote,
            7 => Comment,
            8 => Merge,
            9 => DisputeEvidence,
            10 => RegisterAuditor,
            11 => RegisterAuthority,
            _ => return None,
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum HandlingStatus {
    Acknowledged = 0,
    InProgress = 1,
    Resolved = 2,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum DeletionReason {
    NotActionable = 0,
    IllicitContent = 1,
    Duplicate = 2,
}

/// Why an auditor refused to publish a report.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum RejectReason {
    LowQuality = 0,
    Forged = 1,
    Spam = 2,
    IllicitContent = 3,
}

macro_rules! code_enum {
    ($t:ty, $field:literal, [$($v:ident),*]) => {
        impl $t {
            pub fn from_u8(v: u8) -> Result<Self, DecodeError> {
                $(if v == <$t>::$v as u8 { return Ok(<$t>::$v); })*
                Err(DecodeError::InvalidValue { field: $field, value: v.into() })
            }
        }

        impl std::str::FromStr for $t {
            type Err = String;
            fn from_str(s: &str) -> Result<Self, String> {
                let norm: String = s.chars().filter(|c| c.is_alphanumeric()).collect::<String>().to_lowercase();
                $(if stringify!($v).to_lowercase() == norm { return Ok(<$t>::$v); })*
                Err(format!("unknown {}: {s:?}", $field))
            }
        }
    };
}

code_enum!(HandlingStatus, "status", [Acknowledged, InProgress, Resolved]);
code_enum!(DeletionReason, "deletion reason", [NotActionable, IllicitContent, Duplicate]);
code_enum!(RejectReason, "reject reason", [LowQuality, Forged, Spam, IllicitContent]);

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CommitPayload {
    pub report_type: ReportType,
    pub auditor_index: u32,
    /// `[location, picture, description]`
    pub commitments: [SignatureCommitment; 3],
    pub storage_key: Digest,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum AuditDecision {
    /// Nothing removed.
    PublishAsIs(Box<[RedactedMessage; 3]>),
    PublishRedacted(Box<[RedactedMessage; 3]>),
    Reject {
        reason: RejectReason,
        note: String,
    },
}

#[derive(Debug, Clone, PartialEq, Eq)]
#[allow(clippy::large_enum_variant)]
pub enum Payload {
    Announce {
        hash: Digest,
    },
    Commit(CommitPayload),
    AuditDecision(AuditDecision),
    /// Publication after the audit timeout; carries the unredacted fields.
    Publish {
        fields: Box<[RedactedMessage; 3]>,
    },
    StatusUpdate {
        status: HandlingStatus,
        note: String,
    },
    DeletionLog {
        reason: DeletionReason,
        note: String,
    },
    Vote,
    /// Comments live off-chain; only their digest is recorded.
    Comment {
        digest: Digest,
    },
    Merge {
        target: ReportId,
    },
    /// A [`crate::report::SignedReport`] encoding released by the citizen.
    DisputeEvidence {
        original: Vec<u8>,
    },
    RegisterAuditor {
        auditor: PublicKey,
    },
    RegisterAuthority {
        entry: DirectoryEntry,
    },
}

fn encode_fields(w: &mut Writer, fields: &[RedactedMessage; 3]) {
    for f in fields {
        let bytes = f.to_bytes();
        w.bytes(&bytes);
    }
}

fn decode_fields(r: &mut Reader<'_>) -> Result<Box<[RedactedMessage; 3]>, DecodeError> {
    let mut out = Vec::with_capacity(3);
    for _ in 0..3 {
        out.push(RedactedMessage::from_bytes(r.bytes()?)?);
    }
    Ok(Box::new(out.try_into().expect("three fields")))
}

impl Payload {
    pub fn kind(&self) -> TxKind {
        match self {
            Payload::Announce { .. } => TxKind::Announce,
            Payload::Commit(_) => TxKind::Commit,
            Payload::AuditDecision(_) => TxKind::AuditDecision,
            Payload::Publish { .. } => TxKind::Publish,
            Payload::StatusUpdate { .. } => TxKind::StatusUpdate,
            Payload::DeletionLog { .. } => TxKind::DeletionLog,
            Payload::Vote => TxKind::Vote,
            Payload::Comment { .. } => TxKind::Comment,
            Payload::Merge { .. } => TxKind::Merge,
            Payload::DisputeEvidence { .. } => TxKind::DisputeEvidence,
            Payload::RegisterAuditor { .. } => TxKind::RegisterAuditor,
            Payload::RegisterAuthority { .. } => TxKind::RegisterAuthority,
        }
    }

    pub fn encode(&self) -> Vec<u8> {
        let mut w = Writer::new();
        match self {
            Payload::Announce { hash } => {
                w.raw(hash);
            }
            Payload::Commit(c) => {
                w.u8(c.report_type.code()).u32(c.auditor_index);
                for s in &c.commitments {
                    s.encode(&mut w);
                }
                w.raw(&c.storage_key);
            }
            Payload::AuditDecision(d) => match d {
                AuditDecision::PublishAsIs(f) => {
                    w.u8(0);
                    encode_fields(&mut w, f);
                }
                AuditDecision::PublishRedacted(f) => {
                    w.u8(1);
                    encode_fields(&mut w, f);
                }
                AuditDecision::Reject { reason, note } => {
                    w.u8(2).u8(*reason as u8).str(note);
                }
            },
            Payload::Publish { fields } => encode_fields(&mut w, fields),
            Payload::StatusUpdate { status, note } => {
                w.u8(*status as u8).str(note);
            }
            Payload::DeletionLog { reason, note } => {
                w.u8(*reason as u8).str(note);
            }
            Payload::Vote => {}
            Payload::Comment { digest } => {
                w.raw(digest);
            }
            Payload::Merge { target } => {
                w.raw(&target.0);
            }
            Payload::DisputeEvidence { original } => {
                w.raw(original);
            }
            Payload::RegisterAuditor { auditor } => {
                w.raw(auditor.as_bytes());
            }
            Payload::RegisterAuthority { entry } => entry.encode(&mut w),
        }
        w.finish()
    }

    pub fn decode(kind: TxKind, bytes: &[u8]) -> Result<Self, DecodeError> {
        let mut r = Reader::new(bytes);
        let out = match kind {
            TxKind::Announce => Payload::Announce { hash: r.array()? },
            TxKind::Commit => {
                let t = r.u8()?;
                let report_type = ReportType::from_u8(t)
                    .ok_or(DecodeError::InvalidValue { field: "report type", value: t.into() })?;
                let auditor_index = r.u32()?;
                let commitments = [
                    SignatureCommitment::decode(&mut r)?,
                    SignatureCommitment::decode(&mut r)?,
                    SignatureCommitment::decode(&mut r)?,
                ];
                Payload::Commit(CommitPayload { report_type, auditor_index, commitments, storage_key: r.array()? })
            }
            TxKind::AuditDecision => Payload::AuditDecision(match r.u8()? {
                0 => AuditDecision::PublishAsIs(decode_fields(&mut r)?),
                1 => AuditDecision::PublishRedacted(decode_fields(&mut r)?),
                2 => AuditDecision::Reject { reason: RejectReason::from_u8(r.u8()?)?, note: r.string("note")? },
                v => return Err(DecodeError::InvalidValue { field: "audit decision", value: v.into() }),
            }),
            TxKind::Publish => Payload::Publish { fields: decode_fields(&mut r)? },
            TxKind::StatusUpdate => {
                Payload::StatusUpdate { status: HandlingStatus::from_u8(r.u8()?)?, note: r.string("note")? }
            }
            TxKind::DeletionLog => {
                Payload::DeletionLog { reason: DeletionReason::from_u8(r.u8()?)?, note: r.string("note")? }
            }
            TxKind::Vote => Payload::Vote,
            TxKind::Comment => Payload::Comment { digest: r.array()? },
            TxKind::Merge => Payload::Merge { target: ReportId(r.array()?) },
            TxKind::DisputeEvidence => Payload::DisputeEvidence { original: r.take(r.remaining())?.to_vec() },
            TxKind::RegisterAuditor => Payload::RegisterAuditor { auditor: PublicKey(r.array()?) },
            TxKind::RegisterAuthority => Payload::RegisterAuthority { entry: DirectoryEntry::decode(&mut r)? },
        };
        r.finish()?;
        Ok(out)
    }
}

/// Field order every three-field payload must follow.
pub const FIELD_ORDER: [FieldTag; 3] = FieldTag::ALL;

#[derive(Clone, PartialEq, Eq)]
pub struct Transaction {
    pub kind: TxKind,
    pub report_id: Option<ReportId>,
    pub payload: Vec<u8>,
    pub sender_pk: PublicKey,
    pub signature: Signature,
}

impl std::fmt::Debug for Transaction {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Transaction")
            .field("kind", &self.kind)
            .field("report_id", &self.report_id)
            .field("payload_len", &self.payload.len())
            .field("sender", &self.sender_pk)
            .finish()
    }
}

fn write_head(w: &mut Writer, kind: TxKind, report_id: Option<&ReportId>, payload: &[u8]) {
    w.u8(kind as u8);
    match report_id {
        Some(id) => w.u8(1).raw(&id.0),
        None => w.u8(0),
    };
    w.bytes(payload);
}

pub fn signing_preimage(kind: TxKind, report_id: Option<&ReportId>, payload: &[u8], chain_id: &str) -> Vec<u8> {
    let mut w = Writer::with_capacity(payload.len() + 48 + chain_id.len());
    write_head(&mut w, kind, report_id, payload);
    w.str(chain_id);
    w.finish()
}

impl Transaction {
    pub fn sign(sk: &SigningKey, chain_id: &str, report_id: Option<ReportId>, payload: &Payload) -> Self {
        let kind = payload.kind();
        let payload = payload.encode();
        let signature = sk.sign(&signing_preimage(kind, report_id.as_ref(), &payload, chain_id));
        Self { kind, report_id, payload, sender_pk: sk.public_key(), signature }
    }

    pub fn verify_signature(&self, chain_id: &str) -> bool {
        let pre = signing_preimage(self.kind, self.report_id.as_ref(), &self.payload, chain_id);
        self.sender_pk.verify(&pre, &self.signature)
    }

    pub fn payload(&self) -> Result<Payload, DecodeError> {
        Payload::decode(self.kind, &self.payload)
    }

    pub fn encode(&self, w: &mut Writer) {
        write_head(w, self.kind, self.report_id.as_ref(), &self.payload);
        w.raw(self.sender_pk.as_bytes()).raw(self.signature.as_bytes());
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut w = Writer::with_capacity(self.payload.len() + 140);
        self.encode(&mut w);
        w.finish()
    }

    pub fn decode(r: &mut Reader<'_>) -> Result<Self, DecodeError> {
        let k = r.u8()?;
        let kind = TxKind::from_u8(k).ok_or(DecodeError::InvalidValue { field: "tx kind", value: k.into() })?;
        let report_id = match r.u8()? {
            0 => None,
            1 => Some(ReportId(r.array()?)),
            v => return Err(DecodeError::InvalidValue { field: "report id flag", value: v.into() }),
        };
        Ok(Self {
            kind,
            report_id,
            payload: r.bytes()?.to_vec(),
            sender_pk: PublicKey(r.array()?),
            signature: Signature(r.array()?),
        })
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self, DecodeError> {
        let mut r = Reader::new(bytes);
        let tx = Self::decode(&mut r)?;
        r.finish()?;
        Ok(tx)
    }

    /// Transaction reference: digest of the full encoding.
    pub fn hash(&self) -> Digest {
        sha256(&self.to_bytes())
    }
}
