//! A report from announcement to resolution on a simulated consortium.

use std::collections::BTreeSet;

use acrp_core::chunking::cell_chunk;
use acrp_core::keys::keygen;
use acrp_core::ledger::build;
use acrp_core::ledger::sim::{sample_report, World, WorldConfig};
use acrp_core::ledger::{validate_chain, HandlingStatus};
use acrp_core::report::{Location, SignedReport};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn main() {
    let mut w = World::new(WorldConfig::default());
    let chain = w.chain_id().to_string();
    let (citizen, _) = keygen(Some(b"example-citizen"));
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let center = Location::from_degrees(41.3874, 2.1686).expect("valid");
    let signed = SignedReport::sign(sample_report(&mut rng, center, 200.0, 16, 16), &citizen).expect("signable");

    // Announce the hash, wait for the beacon block, commit to the drawn auditor.
    let id = w.file(&citizen, &signed).expect("filed");
    let rec = w.state().report(&id).expect("known");
    println!("report {id}");
    println!("  announced at {}, auditor {}", rec.announce_height, rec.commit.as_ref().unwrap().auditor.to_hex());

    // The auditor blacks out one cell and a word, then publishes.
    let redact = [BTreeSet::new(), BTreeSet::from([cell_chunk(0)]), BTreeSet::from([0])];
    let h = w.audit(&signed, &redact).expect("published");
    println!("  published at {h}");

    let authority = w.authority_for(&id).expect("routed").clone();
    for status in [HandlingStatus::Acknowledged, HandlingStatus::Resolved] {
        w.apply(build::status(&authority, &chain, id, status, "")).expect("authority may update");
    }
    let rec = w.state().report(&id).expect("known");
    println!("  phase {:?} after {} events", rec.phase, rec.history.len());

    let replayed = validate_chain(&w.genesis, w.net.node(0).blocks()).expect("valid chain");
    println!("replay from genesis matches: {}", replayed.to_bytes() == w.state().to_bytes());
}
