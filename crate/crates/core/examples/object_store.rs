//! Content-addressed storage of originals, cleaned up after logged deletions.

use acrp_core::keys::keygen;
use acrp_core::ledger::sim::{sample_report, storage_key, World, WorldConfig};
use acrp_core::ledger::{build, DeletionReason};
use acrp_core::report::{Location, SignedReport};
use acrp_core::storage::{retain_set, ObjectStore};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn main() {
    let dir = tempfile::tempdir().expect("temp dir");
    let mut store = ObjectStore::open(dir.path()).expect("store");
    let mut w = World::new(WorldConfig { authorities: 1, ..Default::default() });
    let chain = w.chain_id().to_string();
    let (citizen, _) = keygen(Some(b"example-citizen"));
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let center = Location::from_degrees(38.7223, -9.1393).unwrap();

    let mut ids = Vec::new();
    for _ in 0..2 {
        let s = SignedReport::sign(sample_report(&mut rng, center, 500.0, 8, 8), &citizen).unwrap();
        let key = store.put(&s.to_bytes().unwrap()).unwrap();
        assert_eq!(key, storage_key(&s));
        println!("stored {} at {}", acrp_core::hash::to_hex(&key), store.path_for(&key).display());
        ids.push(w.file(&citizen, &s).unwrap());
        w.audit(&s, &Default::default()).unwrap();
    }

    let authority = w.authorities[0].clone();
    w.apply(build::delete(&authority, &chain, ids[0], DeletionReason::IllicitContent, "")).unwrap();
    let removed = store.gc(&retain_set(w.state())).unwrap();
    println!("gc after the logged deletion removed {removed} object(s), {} left", store.keys().unwrap().len());
}
