//! Ledger state and the transaction state machine.
//!
//! Each handler checks everything first and mutates last, so a rejected
//! transaction leaves the state untouched.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use super::dispute::{verify_dispute, DisputeOutcome};
use super::tx::{
    AuditDecision, CommitPayload, DeletionReason, HandlingStatus, Payload, RejectReason, Transaction, FIELD_ORDER,
};
use super::{Genesis, Rejection};
use crate::chunking::{parse_location_chunk, HEADER_CHUNK};
use crate::hash::{sha256, Digest};
use crate::keys::PublicKey;
use crate::report::{
    route, select_auditor, AuditorRegistry, AuthorityDirectory, Location, RegisteredAuditor, ReportId, ReportType,
    SignedReport,
};
use crate::rss::{verify_redacted, RedactedMessage, SignatureCommitment, Slot};
use crate::wire::Writer;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Phase {
    Announced = 0,
    Committed = 1,
    Audited = 2,
    Published = 3,
    Acknowledged = 4,
    InProgress = 5,
    Resolved = 6,
    Deleted = 7,
}

impl Phase {
    /// Published and awaiting or under handling.
    pub fn is_open(self) -> bool {
        matches!(self, Phase::Published | Phase::Acknowledged | Phase::InProgress)
    }

    pub fn is_terminal(self) -> bool {
        matches!(self, Phase::Resolved | Phase::Deleted)
    }

    fn from_status(s: HandlingStatus) -> Self {
        match s {
            HandlingStatus::Acknowledged => Phase::Acknowledged,
            HandlingStatus::InProgress => Phase::InProgress,
            HandlingStatus::Resolved => Phase::Resolved,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CommitRecord {
    pub height: u64,
    pub report_type: ReportType,
    pub auditor_index: u32,
    pub auditor: PublicKey,
    pub beacon: Digest,
    pub commitments: [SignatureCommitment; 3],
    pub storage_key: Digest,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum AuditOutcome {
    PublishedAsIs,
    PublishedRedacted,
    Rejected(RejectReason),
    /// Published unredacted after the auditor missed the timeout.
    ForcedPublish,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AuditRecord {
    pub height: u64,
    pub outcome: AuditOutcome,
    pub note: String,
    /// Redacted chunk indices per field.
    pub redacted: [Vec<u32>; 3],
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Publication {
    pub height: u64,
    pub fields: Box<[RedactedMessage; 3]>,
    /// `None` when the location chunk was redacted.
    pub location: Option<Location>,
    /// `None` when unrouted: any directory authority may then act.
    pub authority: Option<PublicKey>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DeletionRecord {
    pub height: u64,
    pub reason: DeletionReason,
    pub note: String,
    pub by: PublicKey,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DisputeRecord {
    pub height: u64,
    pub outcome: DisputeOutcome,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Event {
    Announced,
    Committed,
    Audited(AuditOutcome),
    Published,
    Status(HandlingStatus, String),
    Deleted(DeletionReason, String),
    Vote,
    Comment(Digest),
    MergedInto(ReportId),
    Absorbed(ReportId),
    Dispute(super::DisputeVerdict),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct HistoryEntry {
    pub height: u64,
    pub sender: PublicKey,
    pub event: Event,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ReportRecord {
    pub id: ReportId,
    pub announcer: PublicKey,
    pub announce_height: u64,
    pub phase: Phase,
    pub commit: Option<CommitRecord>,
    pub audit: Option<AuditRecord>,
    pub publication: Option<Publication>,
    pub deletion: Option<DeletionRecord>,
    pub votes: u64,
    /// Votes carried over from reports merged into this one.
    pub merged_votes: u64,
    pub voters: BTreeSet<PublicKey>,
    pub merged_into: Option<ReportId>,
    pub merged_from: Vec<ReportId>,
    pub comments: Vec<Digest>,
    pub disputes: Vec<DisputeRecord>,
    pub history: Vec<HistoryEntry>,
}

impl ReportRecord {
    fn new(id: ReportId, announcer: PublicKey, height: u64) -> Self {
        Self {
            id,
            announcer,
            announce_height: height,
            phase: Phase::Announced,
            commit: None,
            audit: None,
            publication: None,
            deletion: None,
            votes: 0,
            merged_votes: 0,
            voters: BTreeSet::new(),
            merged_into: None,
            merged_from: Vec::new(),
            comments: Vec::new(),
            disputes: Vec::new(),
            history: vec![HistoryEntry { height, sender: announcer, event: Event::Announced }],
        }
    }

    /// Priority: own votes plus votes of reports merged in.
    pub fn score(&self) -> u64 {
        self.votes + self.merged_votes
    }

    pub fn report_type(&self) -> Option<ReportType> {
        self.commit.as_ref().map(|c| c.report_type)
    }

    pub fn location(&self) -> Option<Location> {
        self.publication.as_ref().and_then(|p| p.location)
    }

    pub fn authority(&self) -> Option<PublicKey> {
        self.publication.as_ref().and_then(|p| p.authority)
    }

    pub fn is_rejected(&self) -> bool {
        matches!(self.audit.as_ref().map(|a| a.outcome), Some(AuditOutcome::Rejected(_)))
    }

    fn log(&mut self, height: u64, sender: PublicKey, event: Event) {
        self.history.push(HistoryEntry { height, sender, event });
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LedgerState {
    pub chain_id: String,
    pub genesis_hash: Digest,
    pub audit_timeout: u64,
    pub members: Vec<PublicKey>,
    pub auditors: AuditorRegistry,
    pub directory: AuthorityDirectory,
    /// Height of the next block to apply.
    pub height: u64,
    pub block_hashes: Vec<Digest>,
    pub last_timestamp: u64,
    pub reports: BTreeMap<ReportId, ReportRecord>,
}

fn check_fields(
    fields: &[RedactedMessage; 3],
    id: &ReportId,
    commitments: &[SignatureCommitment; 3],
) -> Result<(), Rejection> {
    for (i, f) in fields.iter().enumerate() {
        let ok = f.field_tag == FIELD_ORDER[i]
            && f.context == id.0
            && verify_redacted(f)
            && f.commitment().as_ref() == Some(&commitments[i]);
        if !ok {
            return Err(Rejection::InvalidRedaction);
        }
    }
    // The picture header carries the layout every renderer needs.
    if fields[1].slots.get(HEADER_CHUNK).is_none_or(Slot::is_redacted) {
        return Err(Rejection::InvalidRedaction);
    }
    Ok(())
}

fn redacted_indices(fields: &[RedactedMessage; 3]) -> [Vec<u32>; 3] {
    fields.each_ref().map(|f| f.redacted_indices().into_iter().map(|i| i as u32).collect())
}

fn published_location(fields: &[RedactedMessage; 3]) -> Option<Location> {
    let chunk = fields[0].slots.first()?.present()?;
    let (lat, lon) = parse_location_chunk(chunk)?;
    Location::new(lat, lon).ok()
}

impl LedgerState {
    pub fn from_genesis(g: &Genesis) -> Self {
        Self {
            chain_id: g.chain_id.clone(),
            genesis_hash: g.hash(),
            audit_timeout: g.audit_timeout,
            members: g.members.clone(),
            auditors: g.auditor_registry(),
            directory: g.authority_directory(),
            height: 0,
            block_hashes: Vec::new(),
            last_timestamp: g.genesis_time,
            reports: BTreeMap::new(),
        }
    }

    pub fn report(&self, id: &ReportId) -> Option<&ReportRecord> {
        self.reports.get(id)
    }

    /// Hash of the block at `height + 1`, once that block exists.
    pub fn beacon_after(&self, height: u64) -> Option<Digest> {
        self.block_hashes.get(height as usize + 1).copied()
    }

    /// Auditor drawn for an announced report: its registry index, key and
    /// the beacon used. `WrongPhase` until the beacon block exists.
    pub fn assigned_auditor(&self, id: &ReportId) -> Result<(usize, PublicKey, Digest), Rejection> {
        let rec = self.reports.get(id).ok_or(Rejection::UnknownReport)?;
        let beacon = self.beacon_after(rec.announce_height).ok_or(Rejection::WrongPhase)?;
        let registry = self.auditors.active_at(rec.announce_height);
        let (index, auditor) = select_auditor(id, &beacon, &registry).map_err(|_| Rejection::EmptyRegistry)?;
        Ok((index, auditor, beacon))
    }

    /// Follows merges to the report that now carries the votes.
    pub fn resolve_merges(&self, id: &ReportId) -> Option<ReportId> {
        let mut cur = *id;
        for _ in 0..=self.reports.len() {
            let rec = self.reports.get(&cur)?;
            match rec.merged_into {
                Some(next) => cur = next,
                None => return Some(cur),
            }
        }
        None
    }

    /// Whether `who` may update or delete `rec`: its routed authority, or any
    /// directory authority when it is unrouted.
    pub fn may_handle(&self, rec: &ReportRecord, who: &PublicKey) -> bool {
        match rec.authority() {
            Some(a) => a == *who,
            None => self.directory.contains_authority(who),
        }
    }

    /// Applies one transaction as part of the block at `self.height`.
    pub fn apply_tx(&mut self, tx: &Transaction) -> Result<(), Rejection> {
        if !tx.verify_signature(&self.chain_id) {
            return Err(Rejection::BadSignature);
        }
        let payload = tx.payload().map_err(|_| Rejection::MalformedPayload)?;
        let sender = tx.sender_pk;
        let height = self.height;

        if let Payload::RegisterAuditor { .. } | Payload::RegisterAuthority { .. } = payload {
            if tx.report_id.is_some() {
                return Err(Rejection::MalformedPayload);
            }
            if !self.members.contains(&sender) {
                return Err(Rejection::WrongRole);
            }
            match payload {
                Payload::RegisterAuditor { auditor } => {
                    if self.auditors.contains(&auditor) {
                        return Err(Rejection::WrongPhase);
                    }
                    self.auditors
                        .auditors
                        .push(RegisteredAuditor { public_key: auditor, activation_height: height + 1 });
                }
                Payload::RegisterAuthority { entry } => self.directory.entries.push(entry),
                _ => unreachable!(),
            }
            return Ok(());
        }

        let id = tx.report_id.ok_or(Rejection::MalformedPayload)?;
        if let Payload::Announce { hash } = payload {
            if hash != id.0 {
                return Err(Rejection::MalformedPayload);
            }
            if self.reports.contains_key(&id) {
                return Err(Rejection::WrongPhase);
            }
            self.reports.insert(id, ReportRecord::new(id, sender, height));
            return Ok(());
        }

        let rec = self.reports.get(&id).ok_or(Rejection::UnknownReport)?;
        match payload {
            Payload::Announce { .. } | Payload::RegisterAuditor { .. } | Payload::RegisterAuthority { .. } => {
                unreachable!()
            }
            Payload::Commit(c) => self.commit(id, sender, c),
            Payload::AuditDecision(d) => {
                if rec.phase != Phase::Committed {
                    return Err(Rejection::WrongPhase);
                }
                let commit = rec.commit.as_ref().expect("committed");
                if sender != commit.auditor {
                    return Err(Rejection::AuditorMismatch);
                }
                let claimed_as_is = matches!(d, AuditDecision::PublishAsIs(_));
                match d {
                    AuditDecision::Reject { reason, note } => {
                        let rec = self.reports.get_mut(&id).expect("exists");
                        let outcome = AuditOutcome::Rejected(reason);
                        rec.audit = Some(AuditRecord { height, outcome, note, redacted: Default::default() });
                        rec.phase = Phase::Audited;
                        rec.log(height, sender, Event::Audited(outcome));
                        Ok(())
                    }
                    AuditDecision::PublishAsIs(fields) | AuditDecision::PublishRedacted(fields) => {
                        check_fields(&fields, &id, &commit.commitments)?;
                        let redacted = redacted_indices(&fields);
                        let outcome = if redacted.iter().all(Vec::is_empty) {
                            AuditOutcome::PublishedAsIs
                        } else if claimed_as_is {
                            return Err(Rejection::InvalidRedaction);
                        } else {
                            AuditOutcome::PublishedRedacted
                        };
                        self.publish(id, sender, fields, outcome, redacted);
                        Ok(())
                    }
                }
            }
            Payload::Publish { fields } => {
                if rec.phase != Phase::Committed {
                    return Err(Rejection::WrongPhase);
                }
                let commit = rec.commit.as_ref().expect("committed");
                if height.saturating_sub(commit.height) <= self.audit_timeout {
                    return Err(Rejection::TimeoutNotReached);
                }
                check_fields(&fields, &id, &commit.commitments)?;
                let redacted = redacted_indices(&fields);
                if redacted.iter().any(|r| !r.is_empty()) {
                    return Err(Rejection::InvalidRedaction);
                }
                self.publish(id, sender, fields, AuditOutcome::ForcedPublish, redacted);
                Ok(())
            }
            Payload::StatusUpdate { status, note } => {
                let next = Phase::from_status(status);
                if !rec.phase.is_open() || next <= rec.phase {
                    return Err(Rejection::WrongPhase);
                }
                if !self.may_handle(rec, &sender) {
                    return Err(Rejection::WrongRole);
                }
                let rec = self.reports.get_mut(&id).expect("exists");
                rec.phase = next;
                rec.log(height, sender, Event::Status(status, note));
                Ok(())
            }
            Payload::DeletionLog { reason, note } => {
                if !rec.phase.is_open() {
                    return Err(Rejection::WrongPhase);
                }
                if !self.may_handle(rec, &sender) {
                    return Err(Rejection::WrongRole);
                }
                let rec = self.reports.get_mut(&id).expect("exists");
                rec.phase = Phase::Deleted;
                rec.deletion = Some(DeletionRecord { height, reason, note: note.clone(), by: sender });
                rec.log(height, sender, Event::Deleted(reason, note));
                Ok(())
            }
            Payload::Vote => {
                let target = self.resolve_merges(&id).ok_or(Rejection::UnknownReport)?;
                let t = &self.reports[&target];
                if !t.phase.is_open() {
                    return Err(Rejection::WrongPhase);
                }
                if t.voters.contains(&sender) {
                    return Err(Rejection::DuplicateVote);
                }
                let t = self.reports.get_mut(&target).expect("exists");
                t.voters.insert(sender);
                t.votes += 1;
                t.log(height, sender, Event::Vote);
                Ok(())
            }
            Payload::Comment { digest } => {
                if rec.phase < Phase::Published {
                    return Err(Rejection::WrongPhase);
                }
                let rec = self.reports.get_mut(&id).expect("exists");
                rec.comments.push(digest);
                rec.log(height, sender, Event::Comment(digest));
                Ok(())
            }
            Payload::Merge { target } => {
                if !rec.phase.is_open() {
                    return Err(Rejection::WrongPhase);
                }
                if !self.may_handle(rec, &sender) {
                    return Err(Rejection::WrongRole);
                }
                let ok_target = target != id && self.reports.get(&target).is_some_and(|t| t.phase.is_open());
                if !ok_target {
                    return Err(Rejection::BadMergeTarget);
                }
                let src = self.reports.get_mut(&id).expect("exists");
                let carried = src.score();
                let voters = std::mem::take(&mut src.voters);
                src.phase = Phase::Deleted;
                src.merged_into = Some(target);
                let note = format!("merged into {target}");
                src.deletion =
                    Some(DeletionRecord { height, reason: DeletionReason::Duplicate, note: note.clone(), by: sender });
                src.log(height, sender, Event::MergedInto(target));
                src.log(height, sender, Event::Deleted(DeletionReason::Duplicate, note));
                let dst = self.reports.get_mut(&target).expect("exists");
                dst.merged_votes += carried;
                dst.voters.extend(voters);
                dst.merged_from.push(id);
                dst.log(height, sender, Event::Absorbed(id));
                Ok(())
            }
            Payload::DisputeEvidence { original } => {
                if rec.phase < Phase::Published || rec.publication.is_none() {
                    return Err(Rejection::WrongPhase);
                }
                if sender != rec.announcer {
                    return Err(Rejection::WrongRole);
                }
                let original = SignedReport::from_bytes(&original).map_err(|_| Rejection::MalformedPayload)?;
                let commit = rec.commit.as_ref().expect("published implies committed");
                let publication = rec.publication.as_ref().expect("checked");
                let outcome = verify_dispute(&original, &id, &commit.commitments, &publication.fields);
                let rec = self.reports.get_mut(&id).expect("exists");
                rec.log(height, sender, Event::Dispute(outcome.verdict));
                rec.disputes.push(DisputeRecord { height, outcome });
                Ok(())
            }
        }
    }

    fn commit(&mut self, id: ReportId, sender: PublicKey, c: CommitPayload) -> Result<(), Rejection> {
        let rec = &self.reports[&id];
        if sender != rec.announcer {
            return Err(Rejection::WrongRole);
        }
        if rec.phase != Phase::Announced {
            return Err(Rejection::WrongPhase);
        }
        let (index, auditor, beacon) = self.assigned_auditor(&id)?;
        if c.auditor_index as usize != index {
            return Err(Rejection::AuditorMismatch);
        }
        for (i, s) in c.commitments.iter().enumerate() {
            if s.field_tag != FIELD_ORDER[i] || s.signer_pk != sender || !s.verify(&id.0) {
                return Err(Rejection::HashMismatch);
            }
        }
        let height = self.height;
        let rec = self.reports.get_mut(&id).expect("exists");
        rec.commit = Some(CommitRecord {
            height,
            report_type: c.report_type,
            auditor_index: c.auditor_index,
            auditor,
            beacon,
            commitments: c.commitments,
            storage_key: c.storage_key,
        });
        rec.phase = Phase::Committed;
        rec.log(height, sender, Event::Committed);
        Ok(())
    }

    fn publish(
        &mut self,
        id: ReportId,
        sender: PublicKey,
        fields: Box<[RedactedMessage; 3]>,
        outcome: AuditOutcome,
        redacted: [Vec<u32>; 3],
    ) {
        let height = self.height;
        let location = published_location(&fields);
        let rec = &self.reports[&id];
        let t = rec.report_type().expect("committed");
        let authority = location.and_then(|l| route(t, l, &self.directory).ok());
        let rec = self.reports.get_mut(&id).expect("exists");
        rec.audit = Some(AuditRecord { height, outcome, note: String::new(), redacted });
        rec.publication = Some(Publication { height, fields, location, authority });
        rec.log(height, sender, Event::Audited(outcome));
        rec.log(height, sender, Event::Published);
        rec.phase = Phase::Published;
    }

    /// Records a block boundary after its transactions were applied.
    pub(crate) fn seal_block(&mut self, block_hash: Digest, timestamp: u64) {
        self.block_hashes.push(block_hash);
        self.last_timestamp = timestamp;
        self.height += 1;
    }

    /// Reports assigned to `auditor` that still await a decision.
    pub fn pending_audits(&self, auditor: &PublicKey) -> Vec<ReportId> {
        self.reports
            .values()
            .filter(|r| r.phase == Phase::Committed && r.commit.as_ref().is_some_and(|c| c.auditor == *auditor))
            .map(|r| r.id)
            .collect()
    }

    /// Deterministic encoding of the whole state; equal states give equal bytes.
    pub fn to_bytes(&self) -> Vec<u8> {
        let mut w = Writer::new();
        w.str(&self.chain_id).raw(&self.genesis_hash).u64(self.audit_timeout);
        w.u32(self.members.len() as u32);
        for m in &self.members {
            w.raw(m.as_bytes());
        }
        w.u32(self.auditors.len() as u32);
        for a in &self.auditors.auditors {
            w.raw(a.public_key.as_bytes()).u64(a.activation_height);
        }
        w.u32(self.directory.entries.len() as u32);
        for e in &self.directory.entries {
            e.encode(&mut w);
        }
        w.u64(self.height).u64(self.last_timestamp);
        w.u32(self.block_hashes.len() as u32);
        for h in &self.block_hashes {
            w.raw(h);
        }
        w.u32(self.reports.len() as u32);
        for rec in self.reports.values() {
            encode_record(&mut w, rec);
        }
        w.finish()
    }

    pub fn digest(&self) -> Digest {
        sha256(&self.to_bytes())
    }
}

fn opt<T>(w: &mut Writer, v: Option<&T>, f: impl FnOnce(&mut Writer, &T)) {
    match v {
        None => {
            w.u8(0);
        }
        Some(x) => {
            w.u8(1);
            f(w, x);
        }
    }
}

fn encode_outcome(w: &mut Writer, o: &AuditOutcome) {
    match o {
        AuditOutcome::PublishedAsIs => w.u8(0),
        AuditOutcome::PublishedRedacted => w.u8(1),
        AuditOutcome::Rejected(r) => w.u8(2).u8(*r as u8),
        AuditOutcome::ForcedPublish => w.u8(3),
    };
}

fn encode_event(w: &mut Writer, e: &Event) {
    match e {
        Event::Announced => w.u8(0),
        Event::Committed => w.u8(1),
        Event::Audited(o) => {
            w.u8(2);
            encode_outcome(w, o);
            w
        }
        Event::Published => w.u8(3),
        Event::Status(s, note) => w.u8(4).u8(*s as u8).str(note),
        Event::Deleted(r, note) => w.u8(5).u8(*r as u8).str(note),
        Event::Vote => w.u8(6),
        Event::Comment(d) => w.u8(7).raw(d),
        Event::MergedInto(id) => w.u8(8).raw(&id.0),
        Event::Absorbed(id) => w.u8(9).raw(&id.0),
        Event::Dispute(v) => w.u8(10).u8(*v as u8),
    };
}

fn encode_record(w: &mut Writer, r: &ReportRecord) {
    w.raw(&r.id.0).raw(r.announcer.as_bytes()).u64(r.announce_height).u8(r.phase as u8);
    opt(w, r.commit.as_ref(), |w, c| {
        w.u64(c.height)
            .u8(c.report_type.code())
            .u32(c.auditor_index)
            .raw(c.auditor.as_bytes())
            .raw(&c.beacon)
            .raw(&c.storage_key);
        for s in &c.commitments {
            s.encode(w);
        }
    });
    opt(w, r.audit.as_ref(), |w, a| {
        w.u64(a.height);
        encode_outcome(w, &a.outcome);
        w.str(&a.note);
        for field in &a.redacted {
            w.u32(field.len() as u32);
            for i in field {
                w.u32(*i);
            }
        }
    });
    opt(w, r.publication.as_ref(), |w, p| {
        w.u64(p.height);
        for f in p.fields.iter() {
            f.encode(w);
        }
        opt(w, p.location.as_ref(), |w, l| {
            w.i32(l.lat_micro).i32(l.lon_micro);
        });
        opt(w, p.authority.as_ref(), |w, a| {
            w.raw(a.as_bytes());
        });
    });
    opt(w, r.deletion.as_ref(), |w, d| {
        w.u64(d.height).u8(d.reason as u8).str(&d.note).raw(d.by.as_bytes());
    });
    w.u64(r.votes).u64(r.merged_votes).u32(r.voters.len() as u32);
    for v in &r.voters {
        w.raw(v.as_bytes());
    }
    opt(w, r.merged_into.as_ref(), |w, id| {
        w.raw(&id.0);
    });
    w.u32(r.merged_from.len() as u32);
    for id in &r.merged_from {
        w.raw(&id.0);
    }
    w.u32(r.comments.len() as u32);
    for c in &r.comments {
        w.raw(c);
    }
    w.u32(r.disputes.len() as u32);
    for d in &r.disputes {
        w.u64(d.height);
        d.outcome.encode(w);
    }
    w.u32(r.history.len() as u32);
    for h in &r.history {
        w.u64(h.height).raw(h.sender.as_bytes());
        encode_event(w, &h.event);
    }
}
