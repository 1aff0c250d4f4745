//! Transaction constructors for each actor.

use std::collections::BTreeSet;

use super::state::LedgerState;
use super::tx::{AuditDecision, CommitPayload, DeletionReason, HandlingStatus, Payload, RejectReason, Transaction};
use super::Rejection;
use crate::hash::{sha256, Digest};
use crate::keys::{PublicKey, SigningKey};
use crate::report::{DirectoryEntry, ReportError, ReportId, SignedReport};
use crate::rss::{RedactedMessage, RssError};

pub fn announce(sk: &SigningKey, chain_id: &str, id: ReportId) -> Transaction {
    Transaction::sign(sk, chain_id, Some(id), &Payload::Announce { hash: id.0 })
}

/// Commit for an announced report. Needs the beacon block, so this fails
/// with `WrongPhase` until the block after the announcement exists.
pub fn commit(
    sk: &SigningKey,
    state: &LedgerState,
    signed: &SignedReport,
    storage_key: Digest,
) -> Result<Transaction, Rejection> {
    let id = signed.id().map_err(|_| Rejection::MalformedPayload)?;
    let (index, _, _) = state.assigned_auditor(&id)?;
    let payload = Payload::Commit(CommitPayload {
        report_type: signed.report.report_type,
        auditor_index: index as u32,
        commitments: signed.commitments().map_err(|_| Rejection::MalformedPayload)?,
        storage_key,
    });
    Ok(Transaction::sign(sk, &state.chain_id, Some(id), &payload))
}

#[derive(Debug, thiserror::Error)]
pub enum BuildError {
    #[error(transparent)]
    Report(#[from] ReportError),
    #[error(transparent)]
    Rss(#[from] RssError),
}

/// The three fields of `signed` with `redact[f]` removed from field `f`.
pub fn redacted_fields(
    signed: &SignedReport,
    redact: &[BTreeSet<usize>; 3],
) -> Result<Box<[RedactedMessage; 3]>, BuildError> {
    let msgs = signed.messages()?;
    let mut out = Vec::with_capacity(3);
    for f in 0..3 {
        out.push(crate::rss::redact(&msgs[f], &signed.signatures[f], &redact[f])?);
    }
    Ok(Box::new(out.try_into().expect("three fields")))
}

/// Auditor approval; publishes as-is when nothing is redacted.
pub fn audit_publish(
    sk: &SigningKey,
    chain_id: &str,
    signed: &SignedReport,
    redact: &[BTreeSet<usize>; 3],
) -> Result<Transaction, BuildError> {
    let fields = redacted_fields(signed, redact)?;
    let decision = if redact.iter().all(BTreeSet::is_empty) {
        AuditDecision::PublishAsIs(fields)
    } else {
        AuditDecision::PublishRedacted(fields)
    };
    Ok(Transaction::sign(sk, chain_id, Some(signed.id()?), &Payload::AuditDecision(decision)))
}

pub fn audit_reject(sk: &SigningKey, chain_id: &str, id: ReportId, reason: RejectReason, note: &str) -> Transaction {
    let d = AuditDecision::Reject { reason, note: note.into() };
    Transaction::sign(sk, chain_id, Some(id), &Payload::AuditDecision(d))
}

/// Forced publication of the unredacted fields after the audit timeout.
pub fn force_publish(sk: &SigningKey, chain_id: &str, signed: &SignedReport) -> Result<Transaction, BuildError> {
    let fields = redacted_fields(signed, &Default::default())?;
    Ok(Transaction::sign(sk, chain_id, Some(signed.id()?), &Payload::Publish { fields }))
}

pub fn status(sk: &SigningKey, chain_id: &str, id: ReportId, status: HandlingStatus, note: &str) -> Transaction {
    let p = Payload::StatusUpdate { status, note: note.into() };
    Transaction::sign(sk, chain_id, Some(id), &p)
}

pub fn delete(sk: &SigningKey, chain_id: &str, id: ReportId, reason: DeletionReason, note: &str) -> Transaction {
    let p = Payload::DeletionLog { reason, note: note.into() };
    Transaction::sign(sk, chain_id, Some(id), &p)
}

pub fn vote(sk: &SigningKey, chain_id: &str, id: ReportId) -> Transaction {
    Transaction::sign(sk, chain_id, Some(id), &Payload::Vote)
}

/// Records the digest of an off-chain comment.
pub fn comment(sk: &SigningKey, chain_id: &str, id: ReportId, text: &str) -> Transaction {
    let p = Payload::Comment { digest: sha256(text.as_bytes()) };
    Transaction::sign(sk, chain_id, Some(id), &p)
}

pub fn merge(sk: &SigningKey, chain_id: &str, duplicate: ReportId, into: ReportId) -> Transaction {
    Transaction::sign(sk, chain_id, Some(duplicate), &Payload::Merge { target: into })
}

/// Releases the original bundle so anyone can compare it with what was published.
pub fn dispute(sk: &SigningKey, chain_id: &str, signed: &SignedReport) -> Result<Transaction, ReportError> {
    let p = Payload::DisputeEvidence { original: signed.to_bytes()? };
    Ok(Transaction::sign(sk, chain_id, Some(signed.id()?), &p))
}

pub fn register_auditor(sk: &SigningKey, chain_id: &str, auditor: PublicKey) -> Transaction {
    Transaction::sign(sk, chain_id, None, &Payload::RegisterAuditor { auditor })
}

pub fn register_authority(sk: &SigningKey, chain_id: &str, entry: DirectoryEntry) -> Transaction {
    Transaction::sign(sk, chain_id, None, &Payload::RegisterAuthority { entry })
}
