//! JSON shapes shared by the server and the client.
//!
//! Binary fields travel as standard base64, digests and keys as lowercase hex.
//! Every mutating request carries a typed body plus the sender's key and an
//! Ed25519 signature over the transaction preimage that body maps to, so the
//! server can rebuild the exact transaction without holding any private key.

use std::collections::BTreeSet;
use std::fmt;

use acrp_core::community::DuplicateCandidate;
use acrp_core::hash::{sha256, to_hex, Digest};
use acrp_core::keys::{PublicKey, Signature, SigningKey, SIGNATURE_LEN};
use acrp_core::ledger::{
    signing_preimage, AuditDecision, AuditOutcome, CommitPayload, DeletionReason, DisputeVerdict, Event,
    HandlingStatus, Payload, Phase, RejectReason, Rejection, Transaction, TxKind,
};
use acrp_core::report::{DirectoryEntry, Location, RegisteredAuditor, ReportId, ReportType};
use acrp_core::rss::{RedactedMessage, SignatureCommitment};
use acrp_core::wire::{Reader, Writer};
use base64::engine::general_purpose::STANDARD;
use base64::Engine;
use serde::{de, Deserialize, Deserializer, Serialize, Serializer};

/// Bytes as a base64 string.
#[derive(Clone, PartialEq, Eq, Default)]
pub struct B64(pub Vec<u8>);

impl fmt::Debug for B64 {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "B64({} bytes)", self.0.len())
    }
}

impl Serialize for B64 {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(&STANDARD.encode(&self.0))
    }
}

impl<'de> Deserialize<'de> for B64 {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        STANDARD.decode(s).map(B64).map_err(de::Error::custom)
    }
}

/// A digest as lowercase hex.
#[derive(Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Hex32(pub Digest);

impl fmt::Debug for Hex32 {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&to_hex(&self.0))
    }
}

impl fmt::Display for Hex32 {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&to_hex(&self.0))
    }
}

impl Serialize for Hex32 {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(&to_hex(&self.0))
    }
}

impl<'de> Deserialize<'de> for Hex32 {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        acrp_core::hash::digest_from_hex(&s).map(Hex32).ok_or_else(|| de::Error::custom("expected 64 hex digits"))
    }
}

/// Why a request body could not be turned into a transaction.
#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("{0}")]
pub struct BodyError(pub String);

impl BodyError {
    fn new(msg: impl Into<String>) -> Self {
        Self(msg.into())
    }
}

/// A request body that maps onto exactly one transaction kind.
pub trait TxBody {
    const KIND: TxKind;
    fn payload(&self) -> Result<Payload, BodyError>;
}

/// A body with the sender's key and signature over its transaction.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Signed<T> {
    #[serde(flatten)]
    pub body: T,
    pub sender_pk: PublicKey,
    pub signature: B64,
}

impl<T: TxBody> Signed<T> {
    pub fn sign(sk: &SigningKey, chain_id: &str, report_id: Option<ReportId>, body: T) -> Result<Self, BodyError> {
        let payload = body.payload()?.encode();
        let pre = signing_preimage(T::KIND, report_id.as_ref(), &payload, chain_id);
        Ok(Self { body, sender_pk: sk.public_key(), signature: B64(sk.sign(&pre).as_bytes().to_vec()) })
    }

    /// The transaction this request stands for. The signature is not
    /// checked here; the ledger does that.
    pub fn transaction(&self, report_id: Option<ReportId>) -> Result<Transaction, BodyError> {
        let sig: [u8; SIGNATURE_LEN] =
            self.signature.0.as_slice().try_into().map_err(|_| BodyError::new("signature must be 64 bytes"))?;
        Ok(Transaction {
            kind: T::KIND,
            report_id,
            payload: self.body.payload()?.encode(),
            sender_pk: self.sender_pk,
            signature: Signature(sig),
        })
    }
}

pub fn commitment_bytes(c: &SignatureCommitment) -> Vec<u8> {
    let mut w = Writer::new();
    c.encode(&mut w);
    w.finish()
}

pub fn commitment_from_bytes(b: &[u8]) -> Result<SignatureCommitment, BodyError> {
    let mut r = Reader::new(b);
    let c = SignatureCommitment::decode(&mut r).map_err(|e| BodyError::new(format!("commitment: {e}")))?;
    r.finish().map_err(|e| BodyError::new(format!("commitment: {e}")))?;
    Ok(c)
}

fn three<T>(v: Vec<T>, what: &str) -> Result<[T; 3], BodyError> {
    v.try_into().map_err(|v: Vec<T>| BodyError::new(format!("expected 3 {what}, got {}", v.len())))
}

pub fn artifacts_of(fields: &[RedactedMessage; 3]) -> Vec<B64> {
    fields.iter().map(|f| B64(f.to_bytes())).collect()
}

fn decode_artifacts(artifacts: &[B64]) -> Result<Box<[RedactedMessage; 3]>, BodyError> {
    let msgs = artifacts
        .iter()
        .map(|a| RedactedMessage::from_bytes(&a.0).map_err(|e| BodyError::new(format!("artifact: {e}"))))
        .collect::<Result<Vec<_>, _>>()?;
    Ok(Box::new(three(msgs, "artifacts")?))
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct AnnounceBody {
    pub report_hash: ReportId,
}

impl TxBody for AnnounceBody {
    const KIND: TxKind = TxKind::Announce;
    fn payload(&self) -> Result<Payload, BodyError> {
        Ok(Payload::Announce { hash: self.report_hash.0 })
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CommitBody {
    pub report_type: ReportType,
    /// Encoded signature commitments for location, picture, description.
    pub signatures: Vec<B64>,
    pub storage_key: Hex32,
    pub auditor_index: u32,
}

impl CommitBody {
    pub fn new(p: &CommitPayload) -> Self {
        Self {
            report_type: p.report_type,
            signatures: p.commitments.iter().map(|c| B64(commitment_bytes(c))).collect(),
            storage_key: Hex32(p.storage_key),
            auditor_index: p.auditor_index,
        }
    }
}

impl TxBody for CommitBody {
    const KIND: TxKind = TxKind::Commit;
    fn payload(&self) -> Result<Payload, BodyError> {
        let cs = self.signatures.iter().map(|s| commitment_from_bytes(&s.0)).collect::<Result<Vec<_>, _>>()?;
        Ok(Payload::Commit(CommitPayload {
            report_type: self.report_type,
            auditor_index: self.auditor_index,
            commitments: three(cs, "signatures")?,
            storage_key: self.storage_key.0,
        }))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum DecisionKind {
    PublishAsIs,
    PublishRedacted,
    Reject,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct AuditBody {
    pub decision: DecisionKind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub reason: Option<RejectReason>,
    #[serde(default)]
    pub note: String,
    /// Redacted chunk indices for location, picture, description.
    #[serde(default)]
    pub redactions: [BTreeSet<usize>; 3],
    /// Encoded redacted messages; empty for a rejection.
    #[serde(default)]
    pub artifacts: Vec<B64>,
}

impl AuditBody {
    pub fn publish(fields: &[RedactedMessage; 3]) -> Self {
        let redactions = fields.each_ref().map(RedactedMessage::redacted_indices);
        let decision = if redactions.iter().all(BTreeSet::is_empty) {
            DecisionKind::PublishAsIs
        } else {
            DecisionKind::PublishRedacted
        };
        Self { decision, reason: None, note: String::new(), redactions, artifacts: artifacts_of(fields) }
    }

    pub fn reject(reason: RejectReason, note: &str) -> Self {
        Self {
            decision: DecisionKind::Reject,
            reason: Some(reason),
            note: note.into(),
            redactions: Default::default(),
            artifacts: Vec::new(),
        }
    }
}

impl TxBody for AuditBody {
    const KIND: TxKind = TxKind::AuditDecision;
    fn payload(&self) -> Result<Payload, BodyError> {
        let d = match self.decision {
            DecisionKind::Reject => AuditDecision::Reject {
                reason: self.reason.ok_or_else(|| BodyError::new("a rejection needs a reason"))?,
                note: self.note.clone(),
            },
            kind => {
                let fields = decode_artifacts(&self.artifacts)?;
                for (f, want) in fields.iter().zip(&self.redactions) {
                    if f.redacted_indices() != *want {
                        return Err(BodyError::new("redaction sets do not match the artifacts"));
                    }
                }
                if kind == DecisionKind::PublishAsIs {
                    AuditDecision::PublishAsIs(fields)
                } else {
                    AuditDecision::PublishRedacted(fields)
                }
            }
        };
        Ok(Payload::AuditDecision(d))
    }
}

/// Forced publication after the audit timeout.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PublishBody {
    pub artifacts: Vec<B64>,
}

impl TxBody for PublishBody {
    const KIND: TxKind = TxKind::Publish;
    fn payload(&self) -> Result<Payload, BodyError> {
        Ok(Payload::Publish { fields: decode_artifacts(&self.artifacts)? })
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct StatusBody {
    pub status: HandlingStatus,
    #[serde(default)]
    pub note: String,
}

impl TxBody for StatusBody {
    const KIND: TxKind = TxKind::StatusUpdate;
    fn payload(&self) -> Result<Payload, BodyError> {
        Ok(Payload::StatusUpdate { status: self.status, note: self.note.clone() })
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DeleteBody {
    pub reason: DeletionReason,
    #[serde(default)]
    pub note: String,
}

impl TxBody for DeleteBody {
    const KIND: TxKind = TxKind::DeletionLog;
    fn payload(&self) -> Result<Payload, BodyError> {
        Ok(Payload::DeletionLog { reason: self.reason, note: self.note.clone() })
    }
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct VoteBody {}

impl TxBody for VoteBody {
    const KIND: TxKind = TxKind::Vote;
    fn payload(&self) -> Result<Payload, BodyError> {
        Ok(Payload::Vote)
    }
}

/// The text is kept in storage; the chain records its digest.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CommentBody {
    pub text: String,
}

impl TxBody for CommentBody {
    const KIND: TxKind = TxKind::Comment;
    fn payload(&self) -> Result<Payload, BodyError> {
        Ok(Payload::Comment { digest: sha256(self.text.as_bytes()) })
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MergeBody {
    pub into: ReportId,
}

impl TxBody for MergeBody {
    const KIND: TxKind = TxKind::Merge;
    fn payload(&self) -> Result<Payload, BodyError> {
        Ok(Payload::Merge { target: self.into })
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DisputeBody {
    /// Encoded signed report as uploaded at filing time.
    pub original: B64,
}

impl TxBody for DisputeBody {
    const KIND: TxKind = TxKind::DisputeEvidence;
    fn payload(&self) -> Result<Payload, BodyError> {
        Ok(Payload::DisputeEvidence { original: self.original.0.clone() })
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RegisterAuditorBody {
    pub auditor: PublicKey,
}

impl TxBody for RegisterAuditorBody {
    const KIND: TxKind = TxKind::RegisterAuditor;
    fn payload(&self) -> Result<Payload, BodyError> {
        Ok(Payload::RegisterAuditor { auditor: self.auditor })
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RegisterAuthorityBody {
    pub entry: DirectoryEntry,
}

impl TxBody for RegisterAuthorityBody {
    const KIND: TxKind = TxKind::RegisterAuthority;
    fn payload(&self) -> Result<Payload, BodyError> {
        Ok(Payload::RegisterAuthority { entry: self.entry.clone() })
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TxAccepted {
    pub tx_ref: Hex32,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DisputeResponse {
    pub tx_ref: Hex32,
    pub verdict: DisputeVerdict,
    /// Chunk indices the published version removed, per field.
    pub redacted: [BTreeSet<usize>; 3],
    /// Chunk indices whose published content differs, per field.
    pub altered: [BTreeSet<usize>; 3],
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct UploadBody {
    pub bytes: B64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct UploadResponse {
    pub key: Hex32,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct StorageObject {
    pub key: Hex32,
    pub bytes: B64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ErrorBody {
    /// A ledger rejection code, or `Malformed`, `NotFound`, `Forbidden`, `Internal`.
    pub error: String,
    pub message: String,
}

impl ErrorBody {
    pub fn rejection(&self) -> Option<Rejection> {
        serde_json::from_value(serde_json::Value::String(self.error.clone())).ok()
    }
}

/// HTTP status for a ledger rejection.
pub fn status_for(r: Rejection) -> u16 {
    match r {
        Rejection::MalformedPayload => 400,
        Rejection::BadSignature => 401,
        Rejection::WrongRole | Rejection::AuditorMismatch => 403,
        Rejection::UnknownReport => 404,
        _ => 409,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TxState {
    Pending,
    Included,
    Rejected,
    Unknown,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TxStatusView {
    pub tx_ref: Hex32,
    pub state: TxState,
    #[serde(default)]
    pub height: Option<u64>,
    #[serde(default)]
    pub code: Option<Rejection>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ChainHead {
    pub chain_id: String,
    /// Number of blocks; the next block gets this height.
    pub height: u64,
    pub head_hash: Option<Hex32>,
    pub genesis_hash: Hex32,
    pub timestamp: u64,
    pub audit_timeout: u64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TxView {
    pub tx_ref: Hex32,
    pub kind: TxKind,
    pub report_id: Option<ReportId>,
    pub sender: PublicKey,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct BlockView {
    pub height: u64,
    pub prev_hash: Hex32,
    pub producer: PublicKey,
    pub timestamp: u64,
    pub tx_root: Hex32,
    pub block_hash: Hex32,
    pub txs: Vec<TxView>,
    /// Full block encoding, for independent verification.
    pub bytes: B64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ConsortiumView {
    pub chain_id: String,
    pub members: Vec<PublicKey>,
    pub auditors: Vec<RegisteredAuditor>,
    pub directory: Vec<DirectoryEntry>,
    pub audit_timeout: u64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ReportSummary {
    pub id: ReportId,
    pub phase: Phase,
    pub announce_height: u64,
    pub report_type: Option<ReportType>,
    pub auditor: Option<PublicKey>,
    pub authority: Option<PublicKey>,
    pub location: Option<Location>,
    pub score: u64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ReportPage {
    pub items: Vec<ReportSummary>,
    pub page: usize,
    pub per_page: usize,
    pub total: usize,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CommitmentView {
    pub n: u32,
    pub root: Hex32,
    pub signer_pk: PublicKey,
    pub encoded: B64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CommitView {
    pub height: u64,
    pub auditor_index: u32,
    pub auditor: PublicKey,
    pub beacon: Hex32,
    pub storage_key: Hex32,
    pub commitments: Vec<CommitmentView>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct AuditView {
    pub height: u64,
    pub outcome: AuditOutcome,
    pub note: String,
    pub redacted: [Vec<u32>; 3],
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PublicationView {
    pub height: u64,
    pub location: Option<Location>,
    pub authority: Option<PublicKey>,
    /// Published words with redacted ones replaced by a placeholder.
    pub description: String,
    pub picture_png: String,
    /// Encoded redacted messages, verifiable offline.
    pub artifacts: Vec<B64>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DeletionView {
    pub height: u64,
    pub reason: DeletionReason,
    pub note: String,
    pub by: PublicKey,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CommentView {
    pub digest: Hex32,
    pub text: Option<String>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DisputeView {
    pub height: u64,
    pub verdict: DisputeVerdict,
    pub redacted: [BTreeSet<usize>; 3],
    pub altered: [BTreeSet<usize>; 3],
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct HistoryView {
    pub height: u64,
    pub sender: PublicKey,
    pub event: String,
}

/// Everything public about one report.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ReportView {
    pub id: ReportId,
    pub phase: Phase,
    pub announcer: PublicKey,
    pub announce_height: u64,
    pub report_type: Option<ReportType>,
    pub score: u64,
    pub votes: u64,
    pub merged_votes: u64,
    pub merged_into: Option<ReportId>,
    pub merged_from: Vec<ReportId>,
    pub commit: Option<CommitView>,
    pub audit: Option<AuditView>,
    pub publication: Option<PublicationView>,
    pub deletion: Option<DeletionView>,
    pub comments: Vec<CommentView>,
    pub disputes: Vec<DisputeView>,
    pub history: Vec<HistoryView>,
}

pub fn event_label(e: &Event) -> String {
    match e {
        Event::Announced => "Announced".into(),
        Event::Committed => "Committed".into(),
        Event::Audited(o) => format!("Audited({o:?})"),
        Event::Published => "Published".into(),
        Event::Status(s, note) if note.is_empty() => format!("Status({s:?})"),
        Event::Status(s, note) => format!("Status({s:?}): {note}"),
        Event::Deleted(r, note) if note.is_empty() => format!("Deleted({r:?})"),
        Event::Deleted(r, note) => format!("Deleted({r:?}): {note}"),
        Event::Vote => "Vote".into(),
        Event::Comment(d) => format!("Comment({})", to_hex(d)),
        Event::MergedInto(t) => format!("MergedInto({})", t.to_hex()),
        Event::Absorbed(s) => format!("Absorbed({})", s.to_hex()),
        Event::Dispute(v) => format!("Dispute({v:?})"),
    }
}

pub const DUPLICATES_DEFAULT_M: f64 = acrp_core::community::DEFAULT_THRESHOLD_M;

pub type Duplicates = Vec<DuplicateCandidate>;

/// Headers that authorize reading an original bundle.
pub const HDR_READER: &str = "x-acrp-pk";
pub const HDR_READ_SIG: &str = "x-acrp-sig";

/// What a reader signs to fetch an access-controlled object.
pub fn read_preimage(chain_id: &str, key: &Digest) -> Vec<u8> {
    let mut w = Writer::new();
    w.raw(b"acrp-storage-read").raw(key).str(chain_id);
    w.finish()
}
