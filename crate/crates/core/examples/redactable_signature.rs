//! Sign a chunked message once, then redact chunks without the signer.

use std::collections::BTreeSet;

use acrp_core::chunking::{chunk_text, render_redacted_text, TextGranularity};
use acrp_core::keys::keygen;
use acrp_core::rss::{redact, sign_redactable, signature_overhead, verify_full, verify_redacted, RedactedMessage};

fn main() {
    let (citizen, pk) = keygen(Some(b"example-citizen"));
    let msg =
        chunk_text("Broken streetlight outside number 12, Anna Schmidt lives there", TextGranularity::Words, [0; 32]);
    let sig = sign_redactable(&citizen, &msg);
    println!("signed {} chunks, full verify: {}", msg.len(), verify_full(&pk, &msg, &sig));

    // An auditor removes the name; anyone can still check the citizen's signature.
    let name: BTreeSet<usize> = msg
        .chunks()
        .iter()
        .enumerate()
        .filter(|(_, c)| c.starts_with(b"Anna") || c.starts_with(b"Schmidt"))
        .map(|(i, _)| i)
        .collect();
    let published = redact(&msg, &sig, &name).expect("valid subset");
    println!("published: {}", render_redacted_text(&published, "[redacted] "));
    println!("redacted verify: {}", verify_redacted(&published));

    let bytes = published.to_bytes();
    let back = RedactedMessage::from_bytes(&bytes).expect("round trip");
    println!(
        "{} bytes on the wire, {} of signature material (bound {})",
        bytes.len(),
        back.crypto_overhead(),
        signature_overhead(msg.len(), name.len())
    );

    let mut forged = back.clone();
    if let Some(acrp_core::rss::Slot::Present(c)) = forged.slots.first_mut() {
        c[0] ^= 1;
    }
    println!("altered chunk verifies: {}", verify_redacted(&forged));
}
