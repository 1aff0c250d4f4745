//! A whole deployment in one process: consortium, auditors, authorities and a
//! driver that pushes transactions through blocks. Used by the examples and
//! the test suites.

use std::collections::BTreeSet;

use rand::Rng;

use super::build;
use super::node::{Network, TxStatus};
use super::state::LedgerState;
use super::tx::Transaction;
use super::{Genesis, Rejection};
use crate::chunking::{ChunkingScheme, ImageDescriptor};
use crate::hash::{sha256, Digest};
use crate::keys::{keygen, PublicKey, SigningKey};
use crate::report::{DirectoryEntry, Location, Picture, Region, Report, ReportId, ReportType, SignedReport};

#[derive(Debug, Clone)]
pub struct WorldConfig {
    pub chain_id: String,
    pub members: usize,
    pub auditors: usize,
    /// One catch-all authority if 1; otherwise type `t` goes to authority
    /// `t mod authorities`.
    pub authorities: usize,
    pub audit_timeout: u64,
    /// Seeds every key so runs are reproducible.
    pub seed: String,
}

impl Default for WorldConfig {
    fn default() -> Self {
        Self {
            chain_id: "acrp-sim".into(),
            members: 4,
            auditors: 3,
            authorities: 2,
            audit_timeout: super::DEFAULT_AUDIT_TIMEOUT,
            seed: "sim".into(),
        }
    }
}

fn keys(seed: &str, role: &str, n: usize) -> Vec<SigningKey> {
    (0..n).map(|i| keygen(Some(format!("{seed}/{role}/{i}").as_bytes())).0).collect()
}

/// What became of a submitted transaction after one block.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TxOutcome {
    Included(u64),
    Rejected(Rejection),
    Pending,
}

#[derive(Debug)]
pub struct World {
    pub genesis: Genesis,
    pub net: Network,
    pub members: Vec<SigningKey>,
    pub auditors: Vec<SigningKey>,
    pub authorities: Vec<SigningKey>,
}

impl World {
    pub fn new(cfg: WorldConfig) -> Self {
        let members = keys(&cfg.seed, "member", cfg.members);
        let auditors = keys(&cfg.seed, "auditor", cfg.auditors);
        let authorities = keys(&cfg.seed, "authority", cfg.authorities);
        let mut genesis = Genesis::new(cfg.chain_id, members.iter().map(SigningKey::public_key).collect());
        genesis.audit_timeout = cfg.audit_timeout;
        genesis.auditors = auditors.iter().map(SigningKey::public_key).collect();
        genesis.directory = if authorities.len() == 1 {
            vec![DirectoryEntry {
                report_type: None,
                region: Region::everywhere(),
                authority: authorities[0].public_key(),
            }]
        } else {
            ReportType::ALL
                .iter()
                .zip(authorities.iter().cycle())
                .map(|(t, a)| DirectoryEntry {
                    report_type: Some(*t),
                    region: Region::everywhere(),
                    authority: a.public_key(),
                })
                .collect()
        };
        let net = Network::new(genesis.clone(), members.clone());
        Self { genesis, net, members, auditors, authorities }
    }

    pub fn chain_id(&self) -> &str {
        &self.genesis.chain_id
    }

    pub fn state(&self) -> &LedgerState {
        self.net.state()
    }

    pub fn step(&mut self) {
        self.net.step();
    }

    pub fn run(&mut self, blocks: u64) {
        self.net.run(blocks);
    }

    /// Gossips without producing a block.
    pub fn submit(&mut self, tx: Transaction) -> Result<Digest, Rejection> {
        self.net.broadcast(tx)
    }

    pub fn outcome(&self, hash: &Digest) -> TxOutcome {
        match self.net.tx_status(hash) {
            TxStatus::Included(h) => TxOutcome::Included(h),
            TxStatus::Rejected(_, code) => TxOutcome::Rejected(code),
            TxStatus::Pending | TxStatus::Unknown => TxOutcome::Pending,
        }
    }

    /// Submits `tx`, produces one block and reports what happened to it.
    pub fn apply(&mut self, tx: Transaction) -> Result<u64, Rejection> {
        let hash = self.submit(tx)?;
        self.step();
        match self.outcome(&hash) {
            TxOutcome::Included(h) => Ok(h),
            TxOutcome::Rejected(r) => Err(r),
            TxOutcome::Pending => unreachable!("a block drains the mempool below its cap"),
        }
    }

    pub fn key_of<'a>(keys: &'a [SigningKey], pk: &PublicKey) -> Option<&'a SigningKey> {
        keys.iter().find(|k| k.public_key() == *pk)
    }

    pub fn auditor_for(&self, id: &ReportId) -> Option<&SigningKey> {
        let rec = self.state().report(id)?;
        Self::key_of(&self.auditors, &rec.commit.as_ref()?.auditor)
    }

    /// Routed authority, or the first directory authority when unrouted.
    pub fn authority_for(&self, id: &ReportId) -> Option<&SigningKey> {
        let rec = self.state().report(id)?;
        match rec.authority() {
            Some(a) => Self::key_of(&self.authorities, &a),
            None => self.authorities.first(),
        }
    }

    /// Announce, wait for the beacon block, commit. Returns the report id.
    pub fn file(&mut self, citizen: &SigningKey, signed: &SignedReport) -> Result<ReportId, Rejection> {
        let id = signed.id().map_err(|_| Rejection::MalformedPayload)?;
        self.apply(build::announce(citizen, self.chain_id(), id))?;
        self.step();
        let key = storage_key(signed);
        let tx = build::commit(citizen, self.state(), signed, key)?;
        self.apply(tx)?;
        Ok(id)
    }

    /// The assigned auditor publishes with `redact` removed.
    pub fn audit(&mut self, signed: &SignedReport, redact: &[BTreeSet<usize>; 3]) -> Result<u64, Rejection> {
        let id = signed.id().map_err(|_| Rejection::MalformedPayload)?;
        let sk = self.auditor_for(&id).ok_or(Rejection::UnknownReport)?;
        let tx = build::audit_publish(sk, self.chain_id(), signed, redact).map_err(|_| Rejection::MalformedPayload)?;
        self.apply(tx)
    }
}

/// Content address of a signed bundle.
pub fn storage_key(signed: &SignedReport) -> Digest {
    sha256(&signed.to_bytes().expect("valid report"))
}

const WORDS: &[&str] = &[
    "large", "pothole", "near", "the", "bus", "stop", "on", "main", "street", "broken", "glass", "and", "trash",
    "left", "by", "corner", "since", "monday", "blocking", "bike", "lane", "deep", "crack", "graffiti", "wall",
];

/// A plausible random report within about `radius_m` of `center`, with a
/// `w × h` noise picture on a coarse grid.
pub fn sample_report(rng: &mut impl Rng, center: Location, radius_m: f64, w: u32, h: u32) -> Report {
    // 1 microdegree of latitude is about 0.111 m.
    let spread = (radius_m / 0.111) as i32;
    let lat = (center.lat_micro + rng.gen_range(-spread..=spread)).clamp(-90_000_000, 90_000_000);
    let lon = (center.lon_micro + rng.gen_range(-spread..=spread)).clamp(-180_000_000, 180_000_000);
    let data: Vec<u8> = (0..w * h * 3).map(|_| rng.gen()).collect();
    let n_words = rng.gen_range(3..15);
    let description = (0..n_words).map(|_| WORDS[rng.gen_range(0..WORDS.len())]).collect::<Vec<_>>().join(" ");
    let rows = h.min(4) as u16;
    let cols = w.min(4) as u16;
    Report {
        report_type: ReportType::ALL[rng.gen_range(0..ReportType::ALL.len())],
        location: Location::new(lat, lon).expect("clamped"),
        picture: Picture {
            image: ImageDescriptor::new(w, h, data).expect("sized"),
            scheme: ChunkingScheme::grid(rows, cols),
        },
        description,
    }
}
