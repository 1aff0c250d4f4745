//! A citizen checks that the published report only removed content.

use std::collections::BTreeSet;

use acrp_core::keys::keygen;
use acrp_core::ledger::build::redacted_fields;
use acrp_core::ledger::sim::sample_report;
use acrp_core::ledger::verify_dispute;
use acrp_core::report::{Location, SignedReport};
use acrp_core::rss::Slot;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn main() {
    let (citizen, _) = keygen(Some(b"example-citizen"));
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let center = Location::from_degrees(50.0755, 14.4378).expect("valid");
    let original = SignedReport::sign(sample_report(&mut rng, center, 100.0, 10, 10), &citizen).expect("signable");
    let id = original.id().expect("valid");
    let committed = original.commitments().expect("valid");

    let redact = [BTreeSet::new(), BTreeSet::new(), BTreeSet::from([1, 2])];
    let honest = redacted_fields(&original, &redact).expect("redactable");
    let outcome = verify_dispute(&original, &id, &committed, &honest);
    println!("honest publication: {:?}, redacted {:?}", outcome.verdict, outcome.redacted);

    // A copy where a visible word was swapped for another.
    let mut forged = honest.clone();
    if let Some(Slot::Present(word)) = forged[2].slots.first_mut() {
        *word = b"fine ".to_vec();
    }
    let outcome = verify_dispute(&original, &id, &committed, &forged);
    println!("altered copy: {:?}, altered {:?}", outcome.verdict, outcome.altered);
}
