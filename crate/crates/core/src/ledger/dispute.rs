//! Checking a published report against the original the citizen signed.

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use crate::report::{ReportId, SignedReport};
use crate::rss::{chunk_commitments, RedactedMessage, SignatureCommitment, Slot};
use crate::wire::Writer;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum DisputeVerdict {
    /// Every published chunk equals the original; only redactions differ.
    Consistent = 0,
    /// A published chunk or redaction digest differs from the original.
    AlteredContent = 1,
    /// The evidence is not the report that was announced and committed.
    HashMismatch = 2,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DisputeOutcome {
    pub verdict: DisputeVerdict,
    /// Per field: indices the published version redacted.
    pub redacted: [BTreeSet<usize>; 3],
    /// Per field: indices whose published content does not match.
    pub altered: [BTreeSet<usize>; 3],
}

impl DisputeOutcome {
    fn mismatch() -> Self {
        Self { verdict: DisputeVerdict::HashMismatch, redacted: Default::default(), altered: Default::default() }
    }

    pub(crate) fn encode(&self, w: &mut Writer) {
        w.u8(self.verdict as u8);
        for set in self.redacted.iter().chain(&self.altered) {
            w.u32(set.len() as u32);
            for &i in set {
                w.u32(i as u32);
            }
        }
    }
}

/// Compares `published` against `original`.
///
/// The original must hash to `announced` and its signatures must reproduce the
/// on-chain `committed` values; otherwise the verdict is `HashMismatch`.
pub fn verify_dispute(
    original: &SignedReport,
    announced: &ReportId,
    committed: &[SignatureCommitment; 3],
    published: &[RedactedMessage; 3],
) -> DisputeOutcome {
    if original.id().ok().as_ref() != Some(announced) {
        return DisputeOutcome::mismatch();
    }
    let (Ok(msgs), Ok(commits)) = (original.messages(), original.commitments()) else {
        return DisputeOutcome::mismatch();
    };
    if &commits != committed {
        return DisputeOutcome::mismatch();
    }
    let mut out = DisputeOutcome {
        verdict: DisputeVerdict::Consistent,
        redacted: Default::default(),
        altered: Default::default(),
    };
    for f in 0..3 {
        let digests = chunk_commitments(&msgs[f], &original.signatures[f]).expect("signature fits its field");
        let pubf = &published[f];
        let n = msgs[f].len();
        #[allow(clippy::needless_range_loop)]
        for i in 0..n.max(pubf.slots.len()) {
            let same = match (pubf.slots.get(i), msgs[f].chunks().get(i)) {
                (Some(Slot::Present(c)), Some(orig)) => c == orig,
                (Some(Slot::Redacted(d)), Some(_)) => {
                    out.redacted[f].insert(i);
                    *d == digests[i]
                }
                _ => false,
            };
            if !same {
                out.altered[f].insert(i);
            }
        }
    }
    if out.altered.iter().any(|s| !s.is_empty()) {
        out.verdict = DisputeVerdict::AlteredContent;
    }
    out
}
