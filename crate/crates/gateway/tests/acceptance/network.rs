use std::collections::BTreeSet;
use std::time::Duration;

use acrp_core::chunking::cell_chunk;
use acrp_core::ledger::{load_chain_dir, validate_chain_bytes, Block, DeletionReason, Payload, Phase};
use acrp_core::report::Location;
use acrp_core::rss::verify_redacted;
use acrp_gateway::api::{commitment_from_bytes, DeleteBody, Hex32, Signed};
use acrp_gateway::client::Client;
use acrp_gateway::local::{LocalConfig, LocalConsortium};
use acrp_gateway::server::lock;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::ledger::sign;
use crate::{ensure, Verdict};

const WAIT: Duration = Duration::from_secs(30);
const BLOCK_EVERY: Duration = Duration::from_millis(10);

fn err(e: impl std::fmt::Display) -> String {
    e.to_string()
}

pub fn deletion_accountability() -> Verdict {
    let mut rng = ChaCha8Rng::seed_from_u64(0xde1e);
    let net = LocalConsortium::new(&LocalConfig {
        chain_id: "acceptance-deletion".into(),
        authorities: 1,
        citizens: 2,
        seed: Some("deletion".into()),
        ..Default::default()
    });
    let data = tempfile::tempdir().map_err(err)?;
    let server = net.serve(data.path(), Some(BLOCK_EVERY)).map_err(err)?;
    let c = Client::new(&server.url()).map_err(err)?;
    let chain = c.chain_id().map_err(err)?;
    let center = Location::new(51_507_000, -127_000).expect("valid");
    let (citizen, keeper) = (&net.citizens[0], &net.citizens[1]);
    let authority = &net.authorities[0];

    let doomed = sign(&mut rng, center, 100.0, citizen);
    let kept = sign(&mut rng, center, 100.0, keeper);
    let mut filed = Vec::new();
    for (who, s) in [(citizen, &doomed), (keeper, &kept)] {
        let f = c.file_report(who, s, WAIT).map_err(err)?;
        let auditor = net.auditor(&f.auditor).ok_or("auditor key not in consortium")?;
        let redact = [BTreeSet::new(), BTreeSet::from([cell_chunk(0)]), BTreeSet::from([0])];
        let tx = c.approve(auditor, &f.id, &redact).map_err(err)?;
        c.wait_included(&tx, WAIT).map_err(err)?;
        filed.push(f);
    }
    let id = filed[0].id;

    // Every way of removing a published report other than a logged deletion.
    let http = reqwest::blocking::Client::new();
    let url = server.url();
    let mut refused = Vec::new();
    for path in [
        format!("/v1/reports/{id}"),
        format!("/v1/reports/{id}/delete"),
        format!("/v1/storage/{}", Hex32(filed[0].storage_key)),
        "/v1/chain/blocks/1".to_string(),
    ] {
        let status = http.delete(format!("{url}{path}")).send().map_err(err)?.status().as_u16();
        ensure!(status == 404 || status == 405, "DELETE {path} answered {status}");
        refused.push(status);
    }
    for (who, want) in [(citizen, 403), (&net.auditors[0], 403), (keeper, 403)] {
        let body = DeleteBody { reason: DeletionReason::IllicitContent, note: String::new() };
        let req = Signed::sign(who, &chain, Some(id), body).map_err(err)?;
        let status = http.post(format!("{url}/v1/reports/{id}/delete")).json(&req).send().map_err(err)?.status();
        ensure!(status.as_u16() == want, "deletion by a non-authority answered {status}");
        refused.push(status.as_u16());
    }
    let mut forged = Signed::sign(
        authority,
        &chain,
        Some(id),
        DeleteBody { reason: DeletionReason::IllicitContent, note: "forged".into() },
    )
    .map_err(err)?;
    forged.body.note = "altered after signing".into();
    let status = http.post(format!("{url}/v1/reports/{id}/delete")).json(&forged).send().map_err(err)?.status();
    ensure!(status.as_u16() == 401, "tampered deletion answered {status}");
    refused.push(status.as_u16());
    lock(server.gateway()).collect_garbage().map_err(err)?;
    let view = c.report(&id).map_err(err)?;
    ensure!(view.phase == Phase::Published, "report left Published without a deletion: {:?}", view.phase);
    ensure!(c.original(citizen, &id).is_ok(), "original of a live report lost to gc");

    // The legitimate path, then storage cleanup.
    let tx = c.delete(authority, id, DeletionReason::IllicitContent, "faces visible").map_err(err)?;
    c.wait_included(&tx, WAIT).map_err(err)?;
    let removed = lock(server.gateway()).collect_garbage().map_err(err)?;
    let view = c.report(&id).map_err(err)?;
    let deletion = view.deletion.as_ref().ok_or("no deletion record")?;
    ensure!(
        view.phase == Phase::Deleted
            && deletion.by == authority.public_key()
            && deletion.reason == DeletionReason::IllicitContent,
        "deletion not recorded as logged: {:?} {deletion:?}",
        view.phase
    );
    ensure!(removed >= 1, "gc removed nothing");
    match c.fetch(&filed[0].storage_key, Some(citizen)) {
        Err(e) if e.code() == "NotFound" => {}
        other => return Err(format!("deleted original still served: {:?}", other.map(|b| b.len()))),
    }
    ensure!(c.original(keeper, &filed[1].id).is_ok(), "gc removed a live report's original");

    // What stays on chain: the announcement and the commitments.
    let commit = view.commit.as_ref().ok_or("commit record gone")?;
    ensure!(commit.commitments.len() == 3, "expected three commitments");
    for cv in &commit.commitments {
        let sc = commitment_from_bytes(&cv.encoded.0).map_err(err)?;
        ensure!(sc.verify(&id.0), "commitment no longer verifies");
    }
    let announce = c.block(view.announce_height).map_err(err)?;
    let block = Block::from_bytes(&announce.bytes.0).map_err(err)?;
    let found = block.txs.iter().any(|tx| {
        tx.report_id == Some(id)
            && tx.verify_signature(&chain)
            && matches!(tx.payload(), Ok(Payload::Announce { hash }) if hash == id.0)
    });
    ensure!(found, "announcement not found in block {}", view.announce_height);
    let published = view.publication.as_ref().ok_or("publication record gone")?;
    for a in &published.artifacts {
        let m = acrp_core::rss::RedactedMessage::from_bytes(&a.0).map_err(err)?;
        ensure!(verify_redacted(&m), "published artifact no longer verifies");
    }

    let chain_dir = lock(server.gateway()).chain_dir().to_path_buf();
    server.stop();
    let (g, raw) = load_chain_dir(&chain_dir).map_err(err)?;
    let state = validate_chain_bytes(&g, &raw).map_err(err)?;
    let rec = state.report(&id).ok_or("report missing after replay")?;
    ensure!(
        rec.phase == Phase::Deleted
            && rec.commit.as_ref().is_some_and(|c| c.commitments.iter().all(|s| s.verify(&id.0))),
        "replay lost the deletion or the commitments"
    );
    Ok(format!(
        "{} removal attempts refused (HTTP {refused:?}); logged deletion by the authority; gc removed {removed} object(s); announce tx and 3 commitments verify after gc and replay",
        refused.len()
    ))
}
