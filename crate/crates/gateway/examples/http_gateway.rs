//! Runs a local consortium behind the HTTP API and drives it with the client:
//! file, audit, vote, dispute.

use std::collections::BTreeSet;
use std::time::Duration;

use acrp_core::chunking::cell_chunk;
use acrp_core::ledger::sim::sample_report;
use acrp_core::report::{Location, SignedReport};
use acrp_gateway::client::Client;
use acrp_gateway::local::{LocalConfig, LocalConsortium};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn main() -> anyhow::Result<()> {
    let net = LocalConsortium::new(&LocalConfig { citizens: 2, seed: Some("example".into()), ..Default::default() });
    let data = tempfile::tempdir()?;
    let server = net.serve(data.path(), Some(Duration::from_millis(50)))?;
    let c = Client::new(&server.url())?;
    println!("gateway at {}, chain {}", server.url(), c.chain_id()?);

    let wait = Duration::from_secs(30);
    let citizen = &net.citizens[0];
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let center = Location::from_degrees(48.2082, 16.3738)?;
    let signed = SignedReport::sign(sample_report(&mut rng, center, 100.0, 16, 16), citizen)?;
    let filed = c.file_report(citizen, &signed, wait)?;
    println!("filed {} (commit at {}), auditor {}", filed.id, filed.commit_height, filed.auditor.to_hex());

    let auditor = net.auditor(&filed.auditor).expect("auditor from this consortium");
    let redact = [BTreeSet::new(), BTreeSet::from([cell_chunk(0)]), BTreeSet::new()];
    c.wait_included(&c.approve(auditor, &filed.id, &redact)?, wait)?;
    let png = c.picture_png(&filed.id)?;
    println!("published; picture.png is {} bytes", png.len());

    c.wait_included(&c.vote(&net.citizens[1], filed.id)?, wait)?;
    println!("ranking: {:?}", c.ranking()?.iter().map(|p| p.score).collect::<Vec<_>>());

    let dispute = c.dispute(citizen, &signed)?;
    c.wait_included(&dispute.tx_ref, wait)?;
    println!("dispute verdict: {:?}", dispute.verdict);
    server.stop();
    Ok(())
}
