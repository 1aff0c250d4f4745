use std::collections::{BTreeSet, HashSet};
use std::time::Instant;

use acrp_core::chunking::cell_chunk;
use acrp_core::keys::keygen;
use acrp_core::ledger::build::redacted_fields;
use acrp_core::ledger::sim::sample_report;
use acrp_core::report::{Location, SignedReport};
use acrp_core::rss::{
    commitment, redact, sign_redactable, signature_overhead, verify_full, verify_redacted, ChunkedMessage, FieldTag,
    RedactedMessage, Slot,
};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::{ensure, Verdict};

const RSS_CASES: usize = 500;
const RSS_MAX_N: usize = 64;
const RSS_MAX_SECS: f64 = 60.0;

const SIZE_NS: [usize; 4] = [4, 16, 64, 256];
/// Random subsets measured per `(n, k)`.
const SIZE_TRIALS: usize = 25;
/// The constants are fitted on these sizes and checked on all of them.
const SIZE_FIT_NS: [usize; 2] = [4, 16];

const HIDING_REPORTS: usize = 200;
const HIDING_WINDOW: usize = 5;
const HIDING_MIN_DISTINCT: usize = 199;
/// Cell chunks open with their rectangle (four u32), which is layout rather
/// than content.
const CELL_RECT_BYTES: usize = 16;

fn random_message(rng: &mut ChaCha8Rng, n: usize) -> ChunkedMessage {
    let chunks = (0..n)
        .map(|_| {
            let len = rng.gen_range(1..=48);
            (0..len).map(|_| rng.gen()).collect()
        })
        .collect();
    let tag = FieldTag::ALL[rng.gen_range(0..3)];
    ChunkedMessage::new(tag, chunks, rng.gen()).expect("valid chunks")
}

fn random_subset(rng: &mut ChaCha8Rng, n: usize, k: usize) -> BTreeSet<usize> {
    let mut idx: Vec<usize> = (0..n).collect();
    idx.shuffle(rng);
    idx.into_iter().take(k).collect()
}

/// One flipped byte anywhere in the encoding must not verify.
fn encoding_tamper_rejected(red: &RedactedMessage, rng: &mut ChaCha8Rng) -> bool {
    let mut bytes = red.to_bytes();
    let at = rng.gen_range(0..bytes.len());
    bytes[at] ^= rng.gen_range(1..=255u8);
    match RedactedMessage::from_bytes(&bytes) {
        Err(_) => true,
        Ok(m) => !(verify_redacted(&m) && m.signer_pk == red.signer_pk),
    }
}

fn chunk_tamper_rejected(msg: &ChunkedMessage, sig_ok: impl Fn(&ChunkedMessage) -> bool, rng: &mut ChaCha8Rng) -> bool {
    let mut chunks = msg.chunks().to_vec();
    let i = rng.gen_range(0..chunks.len());
    let j = rng.gen_range(0..chunks[i].len());
    chunks[i][j] ^= rng.gen_range(1..=255u8);
    let forged = ChunkedMessage::new(msg.field_tag(), chunks, *msg.context()).expect("still valid");
    !sig_ok(&forged)
}

pub fn rss_properties() -> Verdict {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(0x5151);
    let mut failures = Vec::new();
    for case in 0..RSS_CASES {
        let n = rng.gen_range(1..=RSS_MAX_N);
        let msg = random_message(&mut rng, n);
        let (sk, pk) = keygen(Some(format!("rss/{case}").as_bytes()));
        let sig = sign_redactable(&sk, &msg);
        let k = rng.gen_range(0..=n);
        let subset = random_subset(&mut rng, n, k);
        let red = redact(&msg, &sig, &subset).expect("redactable");

        let (a, b): (BTreeSet<usize>, BTreeSet<usize>) = subset.iter().partition(|_| rng.gen_bool(0.5));
        let stepwise = redact(&msg, &sig, &a).and_then(|m| m.redact(&b)).expect("composable");

        let checks = [
            ("sign/verify", verify_full(&pk, &msg, &sig)),
            (
                "redacted verify",
                verify_redacted(&red)
                    && red.signer_pk == pk
                    && red.redacted_indices() == subset
                    && red.commitment() == commitment(&msg, &sig),
            ),
            ("message tamper", chunk_tamper_rejected(&msg, |m| verify_full(&pk, m, &sig), &mut rng)),
            ("encoding tamper", encoding_tamper_rejected(&red, &mut rng)),
            ("composition", stepwise.to_bytes() == red.to_bytes()),
        ];
        for (what, ok) in checks {
            if !ok {
                failures.push(format!("case {case} (n={n}, k={k}): {what}"));
            }
        }
    }
    let secs = start.elapsed().as_secs_f64();
    ensure!(failures.is_empty(), "{} failures, first: {}", failures.len(), failures[0]);
    ensure!(secs < RSS_MAX_SECS, "took {secs:.1}s, limit {RSS_MAX_SECS}s");
    Ok(format!("{RSS_CASES}/{RSS_CASES} cases, n in [1,{RSS_MAX_N}], {secs:.1}s < {RSS_MAX_SECS}s"))
}

fn ceil_log2(n: usize) -> usize {
    n.next_power_of_two().trailing_zeros() as usize
}

pub fn size_scaling_law() -> Verdict {
    let mut rng = ChaCha8Rng::seed_from_u64(0x512e);
    let (sk, _) = keygen(Some(b"size-law"));
    // (n, k, largest measured overhead)
    let mut samples = Vec::new();
    for n in SIZE_NS {
        let msg = random_message(&mut rng, n);
        let sig = sign_redactable(&sk, &msg);
        let ks: BTreeSet<usize> = [0, 1, n / 4, n].into();
        for k in ks {
            let mut worst = 0;
            for _ in 0..SIZE_TRIALS {
                let red = redact(&msg, &sig, &random_subset(&mut rng, n, k)).expect("redactable");
                let size = red.crypto_overhead();
                ensure!(
                    size <= signature_overhead(n, k),
                    "n={n} k={k}: measured {size} above the analytic worst case {}",
                    signature_overhead(n, k)
                );
                worst = worst.max(size);
            }
            samples.push((n, k, worst));
        }
    }
    let fit: Vec<_> = samples.iter().filter(|s| SIZE_FIT_NS.contains(&s.0)).collect();
    let c0 = fit.iter().filter(|s| s.1 == 0).map(|s| s.2 as f64).fold(0.0, f64::max);
    let c1 = fit
        .iter()
        .filter(|s| s.1 > 0)
        .map(|&&(n, k, size)| (size as f64 - c0) / (k * ceil_log2(n)) as f64)
        .fold(0.0, f64::max);
    let violations: Vec<String> = samples
        .iter()
        .filter(|&&(n, k, size)| size as f64 > c0 + c1 * (k * ceil_log2(n)) as f64)
        .map(|(n, k, size)| format!("n={n} k={k} size={size}"))
        .collect();
    ensure!(violations.is_empty(), "C0={c0:.0} C1={c1:.2}: {} violations: {}", violations.len(), violations.join(", "));
    Ok(format!(
        "fitted C0={c0:.0} B, C1={c1:.2} B on n in {SIZE_FIT_NS:?}; 0 violations over {} (n,k) points",
        samples.len()
    ))
}

/// Present chunk content is public by design; zero it so only the
/// cryptographic material is searched.
fn scrubbed(m: &RedactedMessage) -> Vec<u8> {
    let mut m = m.clone();
    for s in &mut m.slots {
        if let Slot::Present(c) = s {
            c.fill(0);
        }
    }
    m.to_bytes()
}

fn windows(bytes: &[u8]) -> impl Iterator<Item = &[u8]> {
    bytes.windows(HIDING_WINDOW).filter(|w| w.iter().any(|&b| b != 0))
}

pub fn hiding() -> Verdict {
    let mut rng = ChaCha8Rng::seed_from_u64(0x41d3);
    let (citizen, _) = keygen(Some(b"hiding"));
    let center = Location::new(48_137_000, 11_575_000).expect("valid");
    let mut leaks = Vec::new();
    let mut distinct = 0;
    let mut redacted_total = 0;
    for i in 0..HIDING_REPORTS {
        let (pw, ph) = (rng.gen_range(8..32), rng.gen_range(8..32));
        let report = sample_report(&mut rng, center, 500.0, pw, ph);
        let first = SignedReport::sign(report.clone(), &citizen).expect("signable");
        let msgs = first.messages().expect("valid");
        let mut sets: [BTreeSet<usize>; 3] = Default::default();
        if rng.gen_bool(0.3) {
            sets[0].insert(0);
        }
        let cells = msgs[1].len() - 1;
        let k = rng.gen_range(0..=cells);
        sets[1] = random_subset(&mut rng, cells, k).into_iter().map(cell_chunk).collect();
        let words = msgs[2].len();
        let k = rng.gen_range(1..=words);
        sets[2] = random_subset(&mut rng, words, k);

        let published = redacted_fields(&first, &sets).expect("redactable");
        let mut visible = HashSet::new();
        for m in published.iter() {
            visible.extend(windows(&scrubbed(m)).map(<[u8]>::to_vec));
        }
        for f in 0..3 {
            for &j in &sets[f] {
                redacted_total += 1;
                let chunk = &msgs[f].chunks()[j];
                let content = if f == 1 { &chunk[CELL_RECT_BYTES..] } else { &chunk[..] };
                if windows(content).any(|w| visible.contains(w)) {
                    leaks.push(format!("report {i} field {f} chunk {j}"));
                }
            }
        }

        let second = SignedReport::sign(report, &citizen).expect("signable");
        let again = redacted_fields(&second, &sets).expect("redactable");
        let all_differ =
            (0..3).all(|f| published[f].slots.iter().zip(&again[f].slots).all(|(a, b)| !(a.is_redacted() && a == b)));
        distinct += usize::from(all_differ);
    }
    ensure!(
        leaks.is_empty(),
        "{} redacted chunks share a {HIDING_WINDOW}-byte window with the artifacts, first: {}",
        leaks.len(),
        leaks[0]
    );
    ensure!(
        distinct >= HIDING_MIN_DISTINCT,
        "re-signing gave distinct digests in {distinct}/{HIDING_REPORTS}, need {HIDING_MIN_DISTINCT}"
    );
    Ok(format!(
        "0 leaks over {redacted_total} redacted chunks in {HIDING_REPORTS} reports; distinct digests {distinct}/{HIDING_REPORTS}"
    ))
}
