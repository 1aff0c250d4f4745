//! Duplicate detection and citizen prioritization over a ledger snapshot.

use std::cmp::Ordering;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::ledger::{LedgerState, Phase, ReportRecord};
use crate::report::{haversine_m, Location, ReportId, ReportType};

pub const DEFAULT_THRESHOLD_M: f64 = 50.0;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum CommunityError {
    #[error("unknown report {0}")]
    UnknownReport(ReportId),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DuplicateCandidate {
    pub report_a: ReportId,
    pub report_b: ReportId,
    pub distance_m: f64,
    pub same_type: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct PriorityScore {
    pub report_id: ReportId,
    pub score: u64,
}

/// Published, not yet resolved or deleted, with a known type and location.
fn placed(r: &ReportRecord) -> Option<(ReportType, Location)> {
    if !r.phase.is_open() {
        return None;
    }
    Some((r.report_type()?, r.location()?))
}

fn by_distance_then_id(a: &DuplicateCandidate, b: &DuplicateCandidate) -> Ordering {
    a.distance_m
        .total_cmp(&b.distance_m)
        .then_with(|| a.report_b.cmp(&b.report_b))
        .then_with(|| a.report_a.cmp(&b.report_a))
}

/// Open reports of the same type as `r` within `threshold_m` of it. Empty when
/// `r` itself is closed or has no published location.
pub fn find_duplicates(
    state: &LedgerState,
    r: &ReportId,
    threshold_m: f64,
) -> Result<Vec<DuplicateCandidate>, CommunityError> {
    let rec = state.report(r).ok_or(CommunityError::UnknownReport(*r))?;
    let Some((t, loc)) = placed(rec) else {
        return Ok(Vec::new());
    };
    let mut out: Vec<DuplicateCandidate> = state
        .reports
        .values()
        .filter(|o| o.id != *r)
        .filter_map(|o| {
            let (ot, ol) = placed(o)?;
            let d = haversine_m(loc, ol);
            (ot == t && d <= threshold_m).then_some(DuplicateCandidate {
                report_a: *r,
                report_b: o.id,
                distance_m: d,
                same_type: true,
            })
        })
        .collect();
    out.sort_by(by_distance_then_id);
    Ok(out)
}

/// Every qualifying pair once, with `report_a < report_b`.
pub fn duplicate_pairs(state: &LedgerState, threshold_m: f64) -> Vec<DuplicateCandidate> {
    let mut out = Vec::new();
    for id in state.reports.keys() {
        if let Ok(c) = find_duplicates(state, id, threshold_m) {
            out.extend(c.into_iter().filter(|c| c.report_a < c.report_b));
        }
    }
    out.sort_by(by_distance_then_id);
    out
}

/// Own votes plus votes of every report merged into it.
pub fn priority_score(state: &LedgerState, id: &ReportId) -> Result<u64, CommunityError> {
    state.report(id).map(ReportRecord::score).ok_or(CommunityError::UnknownReport(*id))
}

/// Open reports by score, highest first; ties go to the earlier announcement,
/// then to the smaller id.
pub fn priority_ranking(state: &LedgerState) -> Vec<PriorityScore> {
    let mut open: Vec<&ReportRecord> = state.reports.values().filter(|r| r.phase.is_open()).collect();
    open.sort_by(|a, b| {
        b.score().cmp(&a.score()).then(a.announce_height.cmp(&b.announce_height)).then(a.id.cmp(&b.id))
    });
    open.into_iter().map(|r| PriorityScore { report_id: r.id, score: r.score() }).collect()
}

/// Sum of scores over reports that are not deleted. Merges leave it unchanged.
pub fn total_live_score(state: &LedgerState) -> u64 {
    state.reports.values().filter(|r| r.phase != Phase::Deleted).map(ReportRecord::score).sum()
}
