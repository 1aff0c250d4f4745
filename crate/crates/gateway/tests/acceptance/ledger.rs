use std::collections::{BTreeMap, BTreeSet};
use std::fs;
use std::path::Path;
use std::process::Command;

use acrp_core::chunking::cell_chunk;
use acrp_core::hash::{sha256, Digest};
use acrp_core::keys::{keygen, PublicKey, SigningKey};
use acrp_core::ledger::build;
use acrp_core::ledger::sim::{sample_report, storage_key, TxOutcome, World, WorldConfig};
use acrp_core::ledger::{
    load_chain_dir, validate_chain, validate_chain_bytes, verify_dispute, write_chain_dir, DeletionReason,
    DisputeVerdict, HandlingStatus, Payload, Phase, Transaction,
};
use acrp_core::report::{select_auditor, AuditorRegistry, Location, ReportId, SignedReport};
use acrp_core::rss::Slot;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use statrs::distribution::{ChiSquared, ContinuousCDF};

use crate::{ensure, Verdict};

const LIFECYCLE_NODES: usize = 4;
const LIFECYCLE_REPORTS: usize = 50;
const LIFECYCLE_TIMEOUT: u64 = 3;

const CHAIN_BLOCKS: u64 = 100;
const MUTATIONS: usize = 50;

const SELECTIONS: usize = 10_000;
const SELECTION_AUDITORS: usize = 8;
const CHI_P_MIN: f64 = 0.01;
const ON_CHAIN_SELECTIONS: usize = 200;

pub fn citizens(tag: &str, n: usize) -> Vec<SigningKey> {
    (0..n).map(|i| keygen(Some(format!("{tag}/citizen/{i}").as_bytes())).0).collect()
}

pub fn sign(rng: &mut ChaCha8Rng, center: Location, radius_m: f64, who: &SigningKey) -> SignedReport {
    let (w, h) = (rng.gen_range(8..24), rng.gen_range(8..24));
    SignedReport::sign(sample_report(rng, center, radius_m, w, h), who).expect("signable")
}

/// Submits `txs` together, produces one block and requires every one in it.
pub fn land(w: &mut World, what: &str, txs: Vec<Transaction>) -> Result<(), String> {
    let mut hashes = Vec::new();
    for tx in txs {
        hashes.push(w.submit(tx).map_err(|r| format!("{what}: refused at gossip: {}", r.code()))?);
    }
    w.step();
    for h in hashes {
        match w.outcome(&h) {
            TxOutcome::Included(_) => {}
            other => return Err(format!("{what}: {other:?}")),
        }
    }
    Ok(())
}

/// Announces and commits every report in three blocks.
pub fn file_all(w: &mut World, filed: &[(SigningKey, SignedReport)]) -> Result<Vec<ReportId>, String> {
    let chain = w.chain_id().to_string();
    let ids: Vec<ReportId> = filed.iter().map(|(_, s)| s.id().expect("valid")).collect();
    let announces = filed.iter().zip(&ids).map(|((c, _), id)| build::announce(c, &chain, *id)).collect();
    land(w, "announce", announces)?;
    w.step();
    let commits = filed
        .iter()
        .map(|(c, s)| build::commit(c, w.state(), s, storage_key(s)).map_err(|r| format!("commit: {}", r.code())))
        .collect::<Result<_, _>>()?;
    land(w, "commit", commits)?;
    Ok(ids)
}

pub fn random_redactions(rng: &mut ChaCha8Rng, s: &SignedReport) -> [BTreeSet<usize>; 3] {
    let msgs = s.messages().expect("valid");
    let mut sets: [BTreeSet<usize>; 3] = Default::default();
    for c in 0..msgs[1].len() - 1 {
        if rng.gen_bool(0.15) {
            sets[1].insert(cell_chunk(c));
        }
    }
    for i in 0..msgs[2].len() {
        if rng.gen_bool(0.2) {
            sets[2].insert(i);
        }
    }
    sets
}

fn replay_matches(w: &World) -> Result<usize, String> {
    let first = w.net.node(0);
    for (i, node) in w.net.nodes().iter().enumerate() {
        ensure!(
            node.blocks().iter().map(|b| b.to_bytes()).eq(first.blocks().iter().map(|b| b.to_bytes())),
            "node {i} holds different blocks"
        );
        let replayed = validate_chain(&w.genesis, node.blocks()).map_err(|e| format!("node {i}: {e}"))?;
        ensure!(replayed.to_bytes() == node.state().to_bytes(), "node {i}: replay differs from live state");
        ensure!(node.state().to_bytes() == first.state().to_bytes(), "node {i}: state differs from node 0");
    }
    Ok(first.blocks().len())
}

pub fn lifecycle_end_to_end() -> Verdict {
    let mut rng = ChaCha8Rng::seed_from_u64(0x11fe);
    let mut w = World::new(WorldConfig {
        members: LIFECYCLE_NODES,
        audit_timeout: LIFECYCLE_TIMEOUT,
        seed: "lifecycle".into(),
        ..Default::default()
    });
    let chain = w.chain_id().to_string();
    let people = citizens("lifecycle", 12);
    let center = Location::new(52_520_000, 13_405_000).expect("valid");
    let filed: Vec<(SigningKey, SignedReport)> = (0..LIFECYCLE_REPORTS)
        .map(|i| {
            let c = people[i % people.len()].clone();
            let s = sign(&mut rng, center, 3000.0, &c);
            (c, s)
        })
        .collect();

    // Announce and commit.
    let ids = file_all(&mut w, &filed)?;

    // Audit: most are reviewed, some with redactions; the rest time out.
    let idle: BTreeSet<usize> = (0..LIFECYCLE_REPORTS).filter(|i| i % 7 == 3).collect();
    let mut audits = Vec::new();
    for (i, (_, s)) in filed.iter().enumerate().filter(|(i, _)| !idle.contains(i)) {
        let sk = w.auditor_for(&ids[i]).ok_or("no auditor key")?;
        let sets = random_redactions(&mut rng, s);
        audits.push(build::audit_publish(sk, &chain, s, &sets).map_err(|e| e.to_string())?);
    }
    land(&mut w, "audit", audits)?;

    // Publication of the unreviewed ones after the timeout.
    w.run(LIFECYCLE_TIMEOUT);
    let forced = idle
        .iter()
        .map(|&i| build::force_publish(&people[0], &chain, &filed[i].1).map_err(|e| e.to_string()))
        .collect::<Result<_, _>>()?;
    land(&mut w, "forced publish", forced)?;

    // Community activity on the public reports.
    let mut votes = Vec::new();
    for (k, p) in people.iter().enumerate() {
        for (i, id) in ids.iter().enumerate() {
            if (i + k) % 5 == 0 {
                votes.push(build::vote(p, &chain, *id));
            }
        }
    }
    votes.push(build::comment(&people[1], &chain, ids[0], "still blocking the lane"));
    land(&mut w, "votes", votes)?;

    // Handling by the routed authority.
    let ack: Vec<_> = (0..LIFECYCLE_REPORTS)
        .filter_map(|i| {
            let a = w.authority_for(&ids[i])?;
            Some(build::status(a, &chain, ids[i], HandlingStatus::Acknowledged, "seen"))
        })
        .collect();
    land(&mut w, "acknowledge", ack)?;
    let progress: Vec<_> = (0..LIFECYCLE_REPORTS)
        .filter_map(|i| {
            let a = w.authority_for(&ids[i])?;
            match i % 5 {
                0 => Some(build::delete(a, &chain, ids[i], DeletionReason::NotActionable, "private land")),
                1..=3 => Some(build::status(a, &chain, ids[i], HandlingStatus::InProgress, "crew sent")),
                _ => None,
            }
        })
        .collect();
    land(&mut w, "progress", progress)?;
    let resolve: Vec<_> = (0..LIFECYCLE_REPORTS)
        .filter_map(|i| {
            let a = w.authority_for(&ids[i])?;
            matches!(i % 5, 1 | 2).then(|| build::status(a, &chain, ids[i], HandlingStatus::Resolved, "fixed"))
        })
        .collect();
    land(&mut w, "resolve", resolve)?;

    let mut phases: BTreeMap<String, usize> = BTreeMap::new();
    for id in &ids {
        let p = w.state().report(id).ok_or("report vanished")?.phase;
        ensure!(
            matches!(p, Phase::Acknowledged | Phase::InProgress | Phase::Resolved | Phase::Deleted),
            "report {id} stuck in {p:?}"
        );
        *phases.entry(format!("{p:?}")).or_default() += 1;
    }
    ensure!(w.net.rejections().is_empty(), "unexpected refusals: {:?}", w.net.rejections());
    let blocks = replay_matches(&w)?;

    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    write_chain_dir(dir.path(), &w.genesis, w.net.node(2).blocks()).map_err(|e| e.to_string())?;
    let (g, raw) = load_chain_dir(dir.path()).map_err(|e| e.to_string())?;
    let from_disk = validate_chain_bytes(&g, &raw).map_err(|e| e.to_string())?;
    ensure!(from_disk.to_bytes() == w.state().to_bytes(), "replay from disk differs");

    Ok(format!(
        "{LIFECYCLE_REPORTS} reports on {LIFECYCLE_NODES} nodes, {blocks} blocks, final phases {phases:?}; replay byte-identical on all nodes"
    ))
}

/// Roughly `blocks` blocks with traffic in most of them.
fn busy_chain(blocks: u64, seed: u64) -> Result<World, String> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut w = World::new(WorldConfig { seed: format!("busy/{seed}"), ..Default::default() });
    let people = citizens("busy", 6);
    let center = Location::new(40_416_000, -3_703_000).expect("valid");
    let mut ids = Vec::new();
    let mut i = 0;
    while w.net.node(0).blocks().len() as u64 + 4 <= blocks {
        let c = &people[i % people.len()];
        let s = sign(&mut rng, center, 1000.0, c);
        let id = w.file(c, &s).map_err(|r| r.code().to_string())?;
        w.audit(&s, &random_redactions(&mut rng, &s)).map_err(|r| r.code().to_string())?;
        ids.push(id);
        i += 1;
    }
    let chain = w.chain_id().to_string();
    while (w.net.node(0).blocks().len() as u64) < blocks {
        let voter = &people[rng.gen_range(0..people.len())];
        let _ = w.submit(build::vote(voter, &chain, ids[rng.gen_range(0..ids.len())]));
        w.step();
    }
    Ok(w)
}

fn run_verify(dir: &Path) -> Result<(Option<i32>, String), String> {
    let out = Command::new(env!("CARGO_BIN_EXE_acrp"))
        .arg("verify")
        .arg("--chain")
        .arg(dir)
        .output()
        .map_err(|e| format!("cannot run acrp: {e}"))?;
    Ok((out.status.code(), String::from_utf8_lossy(&out.stdout).into_owned()))
}

pub fn immutability_audit() -> Verdict {
    let mut rng = ChaCha8Rng::seed_from_u64(0x1a3b);
    let w = busy_chain(CHAIN_BLOCKS, 7)?;
    let blocks = w.net.node(0).blocks();
    ensure!(blocks.len() as u64 == CHAIN_BLOCKS, "built {} blocks", blocks.len());
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    write_chain_dir(dir.path(), &w.genesis, blocks).map_err(|e| e.to_string())?;

    let (code, out) = run_verify(dir.path())?;
    ensure!(code == Some(0), "untouched chain: exit {code:?}, {out}");

    let with_txs: Vec<usize> = (0..blocks.len()).filter(|&h| !blocks[h].txs.is_empty()).collect();
    let mut detected = 0;
    for m in 0..MUTATIONS {
        let h = with_txs[rng.gen_range(0..with_txs.len())];
        let tx = blocks[h].txs[rng.gen_range(0..blocks[h].txs.len())].to_bytes();
        let path = dir.path().join("blocks").join(format!("{h:08}.bin"));
        let original = fs::read(&path).map_err(|e| e.to_string())?;
        let at = original
            .windows(tx.len())
            .position(|win| win == tx.as_slice())
            .ok_or("transaction bytes not found in block file")?
            + rng.gen_range(0..tx.len());
        let mut bytes = original.clone();
        bytes[at] ^= rng.gen_range(1..=255u8);
        fs::write(&path, &bytes).map_err(|e| e.to_string())?;
        let (code, out) = run_verify(dir.path())?;
        fs::write(&path, &original).map_err(|e| e.to_string())?;
        ensure!(
            code == Some(1) && out.contains(&format!("height {h}:")),
            "mutation {m} in block {h} at byte {at}: exit {code:?}, output {out:?}"
        );
        detected += 1;
    }
    Ok(format!(
        "{detected}/{MUTATIONS} single-byte transaction mutations detected at the right height in a {CHAIN_BLOCKS}-block chain"
    ))
}

fn chi_square(counts: &[usize]) -> (f64, f64) {
    let expected = counts.iter().sum::<usize>() as f64 / counts.len() as f64;
    let stat: f64 = counts.iter().map(|&c| (c as f64 - expected).powi(2) / expected).sum();
    let p = ChiSquared::new((counts.len() - 1) as f64).expect("dof > 0").sf(stat);
    (stat, p)
}

pub fn auditor_selection_uniformity() -> Verdict {
    let mut rng = ChaCha8Rng::seed_from_u64(0xa0d1);
    let auditors: Vec<PublicKey> =
        (0..SELECTION_AUDITORS).map(|i| keygen(Some(format!("uniform/{i}").as_bytes())).1).collect();
    let reg = AuditorRegistry::from_keys(auditors);
    let draws: Vec<(ReportId, Digest)> = (0..SELECTIONS).map(|_| (ReportId(rng.gen()), rng.gen())).collect();
    let pick = |d: &[(ReportId, Digest)]| -> Vec<usize> {
        d.iter().map(|(id, b)| select_auditor(id, b, &reg).expect("non-empty").0).collect()
    };
    let first = pick(&draws);
    let mut counts = vec![0; SELECTION_AUDITORS];
    for &i in &first {
        counts[i] += 1;
    }
    let (stat, p) = chi_square(&counts);
    ensure!(p > CHI_P_MIN, "chi-square {stat:.2}, p={p:.4} <= {CHI_P_MIN}, counts {counts:?}");
    ensure!(pick(&draws) == first, "recomputing the draws changed an assignment");

    // On chain: assignments survive a replay from genesis and match a local
    // recomputation from block hashes.
    let mut w = World::new(WorldConfig { auditors: SELECTION_AUDITORS, seed: "uniform".into(), ..Default::default() });
    let people = citizens("uniform", 10);
    let center = Location::new(0, 0).expect("valid");
    let mut ids = Vec::new();
    for batch in 0..ON_CHAIN_SELECTIONS / 50 {
        let filed: Vec<_> = (0..50)
            .map(|i| {
                let c = people[(batch * 50 + i) % people.len()].clone();
                let s = sign(&mut rng, center, 5000.0, &c);
                (c, s)
            })
            .collect();
        ids.extend(file_all(&mut w, &filed)?);
    }
    let blocks = w.net.node(0).blocks();
    let replayed = validate_chain(&w.genesis, blocks).map_err(|e| e.to_string())?;
    let live_reg = w.genesis.auditor_registry();
    let mut same = 0;
    for id in &ids {
        let live = w.state().report(id).and_then(|r| r.commit.clone()).ok_or("not committed")?;
        let again = replayed.report(id).and_then(|r| r.commit.clone()).ok_or("not committed on replay")?;
        let h = w.state().report(id).expect("exists").announce_height;
        let beacon = blocks[h as usize + 1].block_hash;
        let local = select_auditor(id, &beacon, &live_reg.active_at(h)).map_err(|e| e.to_string())?;
        if live.auditor == again.auditor && live.auditor_index as usize == local.0 && live.auditor == local.1 {
            same += 1;
        }
    }
    ensure!(same == ids.len(), "only {same}/{} on-chain assignments reproduced", ids.len());
    Ok(format!(
        "{SELECTIONS} draws over {SELECTION_AUDITORS} auditors: chi2={stat:.2}, p={p:.3} > {CHI_P_MIN}; {same}/{} on-chain assignments reproduced by replay",
        ids.len()
    ))
}

pub fn dispute_resolution() -> Verdict {
    let mut rng = ChaCha8Rng::seed_from_u64(0xd15e);
    let mut w = World::new(WorldConfig { seed: "dispute".into(), ..Default::default() });
    let chain = w.chain_id().to_string();
    let citizen = &citizens("dispute", 1)[0];
    let center = Location::new(-33_868_000, 151_209_000).expect("valid");
    let signed = sign(&mut rng, center, 100.0, citizen);
    let id = w.file(citizen, &signed).map_err(|r| r.code().to_string())?;
    let mut sets = random_redactions(&mut rng, &signed);
    sets[2].insert(0);
    w.audit(&signed, &sets).map_err(|r| r.code().to_string())?;

    // Honest removal, through the ledger.
    w.apply(build::dispute(citizen, &chain, &signed).map_err(|e| e.to_string())?).map_err(|r| r.code().to_string())?;
    // Wrong original, through the ledger.
    let other = sign(&mut rng, center, 100.0, citizen);
    let wrong = Payload::DisputeEvidence { original: other.to_bytes().map_err(|e| e.to_string())? };
    w.apply(Transaction::sign(citizen, &chain, Some(id), &wrong)).map_err(|r| r.code().to_string())?;

    let rec = w.state().report(&id).ok_or("unknown report")?;
    let honest = &rec.disputes[0].outcome;
    ensure!(
        honest.verdict == DisputeVerdict::Consistent
            && honest.redacted == sets
            && honest.altered.iter().all(BTreeSet::is_empty),
        "honest removal gave {honest:?}, redactions were {sets:?}"
    );
    let mismatch = &rec.disputes[1].outcome;
    ensure!(mismatch.verdict == DisputeVerdict::HashMismatch, "wrong original gave {mismatch:?}");

    // Altered content cannot pass the audit checks, so it is shown on a
    // forged copy of the published fields.
    let commit = rec.commit.as_ref().ok_or("no commit")?;
    let published = &rec.publication.as_ref().ok_or("no publication")?.fields;
    let mut forged = published.clone();
    let word = (0..forged[2].slots.len()).find(|i| !sets[2].contains(i)).ok_or("every word redacted")?;
    forged[2].slots[word] = Slot::Present(b"nothing to see ".to_vec());
    let digest_slot = *sets[2].first().expect("word 0 redacted");
    forged[2].slots[digest_slot] = Slot::Redacted(sha256(b"decoy"));
    let altered = verify_dispute(&signed, &id, &commit.commitments, &forged);
    let want_altered = BTreeSet::from([word.min(digest_slot), word.max(digest_slot)]);
    ensure!(
        altered.verdict == DisputeVerdict::AlteredContent && altered.altered[2] == want_altered,
        "forged copy gave {altered:?}, expected altered description chunks {want_altered:?}"
    );

    // Same inputs, same verdicts.
    let again = [
        verify_dispute(&signed, &id, &commit.commitments, published),
        verify_dispute(&other, &id, &commit.commitments, published),
        verify_dispute(&signed, &id, &commit.commitments, &forged),
    ];
    ensure!(
        again[0] == *honest && again[1] == *mismatch && again[2] == altered,
        "re-running a dispute changed its outcome"
    );
    let replayed = validate_chain(&w.genesis, w.net.node(1).blocks()).map_err(|e| e.to_string())?;
    ensure!(replayed.report(&id).map(|r| &r.disputes) == Some(&rec.disputes), "replay changed the recorded disputes");
    Ok(format!(
        "Consistent with diff {:?}; AlteredContent at description {:?}; HashMismatch for a wrong original; all reproducible",
        honest.redacted, want_altered
    ))
}
