use std::collections::{BTreeMap, BTreeSet};

use acrp_core::community::{find_duplicates, priority_ranking, priority_score, total_live_score, DEFAULT_THRESHOLD_M};
use acrp_core::hash::Digest;
use acrp_core::keys::{PublicKey, SigningKey};
use acrp_core::ledger::build;
use acrp_core::ledger::sim::{sample_report, TxOutcome, World, WorldConfig};
use acrp_core::ledger::{HandlingStatus, Phase, Rejection, Transaction};
use acrp_core::report::{Location, ReportId, ReportType, SignedReport};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::ledger::{citizens, file_all, land, random_redactions};
use crate::{ensure, Verdict};

const REPORTS: usize = 100;
const CLUSTERS: usize = 10;
const CLUSTER_RADIUS_M: f64 = 40.0;
const FILE_BATCHES: usize = 4;
const VOTES: usize = 1000;
const VOTERS: usize = 60;
const MERGES: usize = 20;
const RESOLVED: usize = 5;
const DISTANCE_TOL_M: f64 = 1e-6;

/// Great-circle distance via the atan2 form, independent of the library's.
fn oracle_distance_m(a: Location, b: Location) -> f64 {
    const R: f64 = 6_371_000.0;
    let (p1, p2) = (a.lat_deg().to_radians(), b.lat_deg().to_radians());
    let dp = p2 - p1;
    let dl = (b.lon_deg() - a.lon_deg()).to_radians();
    let x = (dp / 2.0).sin().powi(2) + p1.cos() * p2.cos() * (dl / 2.0).sin().powi(2);
    2.0 * R * x.sqrt().atan2((1.0 - x).sqrt())
}

/// What the ledger should hold, tracked without consulting it.
#[derive(Default)]
struct Oracle {
    kind: BTreeMap<ReportId, ReportType>,
    /// Only for reports whose location was published.
    place: BTreeMap<ReportId, Location>,
    announced: BTreeMap<ReportId, u64>,
    open: BTreeSet<ReportId>,
    parent: BTreeMap<ReportId, ReportId>,
    score: BTreeMap<ReportId, u64>,
    voters: BTreeMap<ReportId, BTreeSet<PublicKey>>,
    deleted: BTreeSet<ReportId>,
    /// Identical transactions within one block share a mempool slot and an
    /// outcome; in a later block a copy is executed again.
    decided: BTreeMap<Digest, Result<(), Rejection>>,
}

impl Oracle {
    fn root(&self, mut id: ReportId) -> ReportId {
        while let Some(p) = self.parent.get(&id) {
            id = *p;
        }
        id
    }

    /// Predicted outcome of `tx`, applying `effect` only on first sight.
    fn predict(
        &mut self,
        tx: &Transaction,
        effect: impl FnOnce(&mut Self) -> Result<(), Rejection>,
    ) -> (bool, Result<(), Rejection>) {
        if let Some(r) = self.decided.get(&tx.hash()) {
            return (false, *r);
        }
        let r = effect(self);
        self.decided.insert(tx.hash(), r);
        (true, r)
    }

    fn vote(&mut self, id: ReportId, who: PublicKey) -> Result<(), Rejection> {
        let t = self.root(id);
        if !self.open.contains(&t) {
            return Err(Rejection::WrongPhase);
        }
        if !self.voters.entry(t).or_default().insert(who) {
            return Err(Rejection::DuplicateVote);
        }
        *self.score.entry(t).or_default() += 1;
        Ok(())
    }

    fn merge(&mut self, src: ReportId, dst: ReportId) -> Result<(), Rejection> {
        if !self.open.contains(&src) {
            return Err(Rejection::WrongPhase);
        }
        if src == dst || !self.open.contains(&dst) {
            return Err(Rejection::BadMergeTarget);
        }
        // The source keeps its tally on record; only live reports count.
        let carried = self.score.get(&src).copied().unwrap_or(0);
        *self.score.entry(dst).or_default() += carried;
        let moved = self.voters.remove(&src).unwrap_or_default();
        self.voters.entry(dst).or_default().extend(moved);
        self.open.remove(&src);
        self.deleted.insert(src);
        self.parent.insert(src, dst);
        Ok(())
    }

    fn duplicates(&self, id: &ReportId) -> BTreeMap<ReportId, f64> {
        let (Some(loc), true) = (self.place.get(id), self.open.contains(id)) else {
            return BTreeMap::new();
        };
        self.open
            .iter()
            .filter(|o| *o != id && self.kind[*o] == self.kind[id])
            .filter_map(|o| Some((*o, oracle_distance_m(*loc, *self.place.get(o)?))))
            .filter(|(_, d)| *d <= DEFAULT_THRESHOLD_M)
            .collect()
    }

    fn ranking(&self) -> Vec<(ReportId, u64)> {
        let mut v: Vec<(ReportId, u64)> =
            self.open.iter().map(|id| (*id, self.score.get(id).copied().unwrap_or(0))).collect();
        v.sort_by_key(|(id, s)| (std::cmp::Reverse(*s), self.announced[id], *id));
        v
    }

    fn live_total(&self) -> u64 {
        self.score.iter().filter(|(id, _)| !self.deleted.contains(*id)).map(|(_, s)| s).sum()
    }
}

/// Ledger verdict on a submitted transaction; `None` while pending.
fn outcome(w: &World, submitted: Result<Digest, Rejection>) -> Option<Result<(), Rejection>> {
    match submitted {
        Err(r) => Some(Err(r)),
        Ok(h) => match w.outcome(&h) {
            TxOutcome::Included(_) => Some(Ok(())),
            TxOutcome::Rejected(r) => Some(Err(r)),
            TxOutcome::Pending => None,
        },
    }
}

fn check_duplicates(w: &World, o: &Oracle, ids: &[ReportId]) -> Result<usize, String> {
    let mut pairs = 0;
    for id in ids {
        let got = find_duplicates(w.state(), id, DEFAULT_THRESHOLD_M).map_err(|e| e.to_string())?;
        let want = o.duplicates(id);
        let got_ids: BTreeSet<ReportId> = got.iter().map(|c| c.report_b).collect();
        let want_ids: BTreeSet<ReportId> = want.keys().copied().collect();
        ensure!(got_ids == want_ids, "duplicates of {id}: ledger {got_ids:?}, oracle {want_ids:?}");
        for c in &got {
            let d = want[&c.report_b];
            ensure!(
                (c.distance_m - d).abs() <= DISTANCE_TOL_M,
                "distance {id}->{}: {} vs oracle {d}",
                c.report_b,
                c.distance_m
            );
            let back = find_duplicates(w.state(), &c.report_b, DEFAULT_THRESHOLD_M).map_err(|e| e.to_string())?;
            ensure!(back.iter().any(|b| b.report_b == *id), "asymmetric pair {id} / {}", c.report_b);
        }
        pairs += got.len();
    }
    Ok(pairs / 2)
}

fn check_tallies(w: &World, o: &Oracle, ids: &[ReportId]) -> Result<(), String> {
    for id in ids {
        let got = priority_score(w.state(), id).map_err(|e| e.to_string())?;
        let want = o.score.get(id).copied().unwrap_or(0);
        ensure!(got == want, "score of {id}: ledger {got}, oracle {want}");
        let rec = w.state().report(id).ok_or("report missing")?;
        ensure!(
            rec.phase.is_open() == o.open.contains(id) && rec.merged_into == o.parent.get(id).copied(),
            "phase or merge link of {id} differs from oracle"
        );
    }
    let got: Vec<(ReportId, u64)> = priority_ranking(w.state()).into_iter().map(|p| (p.report_id, p.score)).collect();
    ensure!(got == o.ranking(), "ranking differs from the sort oracle");
    let live = total_live_score(w.state());
    ensure!(live == o.live_total(), "live score {live}, oracle {}", o.live_total());
    Ok(())
}

pub fn duplicate_priority_oracles() -> Verdict {
    let mut rng = ChaCha8Rng::seed_from_u64(0xd0b1);
    let mut w = World::new(WorldConfig { seed: "community".into(), ..Default::default() });
    let chain = w.chain_id().to_string();
    let people = citizens("community-filers", 20);
    let voters = citizens("community-voters", VOTERS);
    let city = Location::new(40_416_000, -3_703_000).expect("valid");
    let mut o = Oracle::default();

    // Clustered reports, mostly sharing the cluster's type.
    let centers: Vec<(Location, ReportType)> = (0..CLUSTERS)
        .map(|_| {
            let r = sample_report(&mut rng, city, 3000.0, 1, 1);
            (r.location, ReportType::ALL[rng.gen_range(0..ReportType::ALL.len())])
        })
        .collect();
    let filed: Vec<(SigningKey, SignedReport)> = (0..REPORTS)
        .map(|i| {
            let (center, kind) = centers[i % CLUSTERS];
            let (pw, ph) = (rng.gen_range(8..16), rng.gen_range(8..16));
            let mut r = sample_report(&mut rng, center, CLUSTER_RADIUS_M, pw, ph);
            if rng.gen_bool(0.8) {
                r.report_type = kind;
            }
            let c = people[i % people.len()].clone();
            let s = SignedReport::sign(r, &c).expect("signable");
            (c, s)
        })
        .collect();

    let mut ids = Vec::new();
    for batch in filed.chunks(REPORTS / FILE_BATCHES) {
        let announced_at = w.net.height() + 1;
        let batch_ids = file_all(&mut w, batch)?;
        let mut audits = Vec::new();
        for ((_, s), id) in batch.iter().zip(&batch_ids) {
            let mut sets = random_redactions(&mut rng, s);
            let hide_location = rng.gen_bool(0.1);
            if hide_location {
                sets[0].insert(0);
            } else {
                o.place.insert(*id, s.report.location);
            }
            o.kind.insert(*id, s.report.report_type);
            o.announced.insert(*id, announced_at);
            o.open.insert(*id);
            let sk = w.auditor_for(id).ok_or("no auditor key")?;
            audits.push(build::audit_publish(sk, &chain, s, &sets).map_err(|e| e.to_string())?);
        }
        land(&mut w, "audit", audits)?;
        ids.extend(batch_ids);
    }
    let before = check_duplicates(&w, &o, &ids)?;

    // Some reports are handled to completion and stop accepting votes.
    let done: Vec<ReportId> = ids.choose_multiple(&mut rng, RESOLVED).copied().collect();
    let mut txs = Vec::new();
    for id in &done {
        let sk = w.authority_for(id).ok_or("no authority key")?;
        txs.push(build::status(sk, &chain, *id, HandlingStatus::Resolved, "fixed"));
        o.open.remove(id);
    }
    land(&mut w, "resolve", txs)?;

    let rounds = MERGES;
    let per_round = VOTES / rounds;
    let (mut accepted_votes, mut refused_votes, mut resubmitted) = (0u64, 0usize, 0usize);
    let mut merges_done = 0;
    let mut merges_refused = 0;
    for _ in 0..rounds {
        let mut pending = Vec::new();
        for _ in 0..per_round {
            let id = ids[rng.gen_range(0..ids.len())];
            let who = &voters[rng.gen_range(0..voters.len())];
            let tx = build::vote(who, &chain, id);
            let (fresh, predicted) = o.predict(&tx, |o| o.vote(id, who.public_key()));
            pending.push((fresh, predicted, w.submit(tx)));
        }
        w.step();
        o.decided.clear();
        for (i, (fresh, predicted, submitted)) in pending.into_iter().enumerate() {
            let got = outcome(&w, submitted).ok_or("vote left pending")?;
            ensure!(got == predicted, "vote {i}: ledger {got:?}, oracle {predicted:?}");
            match got {
                _ if !fresh => resubmitted += 1,
                Ok(()) => accepted_votes += 1,
                Err(_) => refused_votes += 1,
            }
        }
        check_tallies(&w, &o, &ids)?;

        // Merge until one lands; targets are usually cluster mates.
        loop {
            let src = ids[rng.gen_range(0..ids.len())];
            let pos = ids.iter().position(|x| *x == src).expect("present");
            let dst = if rng.gen_bool(0.8) {
                ids[(pos + CLUSTERS * rng.gen_range(1..REPORTS / CLUSTERS)) % REPORTS]
            } else {
                ids[rng.gen_range(0..ids.len())]
            };
            let sk = w.authority_for(&src).ok_or("no authority key")?.clone();
            let tx = build::merge(&sk, &chain, src, dst);
            let predicted = o.merge(src, dst);
            let submitted = w.submit(tx);
            w.step();
            let got = outcome(&w, submitted).ok_or("merge left pending")?;
            ensure!(got == predicted, "merge {src}->{dst}: ledger {got:?}, oracle {predicted:?}");
            check_tallies(&w, &o, &ids)?;
            if got.is_ok() {
                merges_done += 1;
                break;
            }
            merges_refused += 1;
        }
    }
    let after = check_duplicates(&w, &o, &ids)?;
    let live = total_live_score(w.state());
    ensure!(live == accepted_votes, "votes not conserved: live score {live}, accepted votes {accepted_votes}");
    let deleted = ids.iter().filter(|id| w.state().report(id).is_some_and(|r| r.phase == Phase::Deleted)).count();
    ensure!(deleted == merges_done, "{deleted} deleted reports after {merges_done} merges");
    Ok(format!(
        "{REPORTS} reports, {VOTES} votes ({accepted_votes} counted, {refused_votes} refused and {resubmitted} resubmissions as predicted), {merges_done} merges (+{merges_refused} refused as predicted); duplicate pairs {before} before / {after} after merges match the brute-force scan within {DISTANCE_TOL_M} m; scores, ranking and live total {live} match the tally oracle"
    ))
}
