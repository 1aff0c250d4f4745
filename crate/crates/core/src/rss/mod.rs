//! Redactable signatures over chunked messages.
//!
//! The signer derives one nonce per chunk from a GGM-style seed tree, commits
//! to every chunk with a salted hash that also binds its position, builds a
//! Merkle tree over the commitments and signs the root once with Ed25519.
//!
//! A holder of the nonces can *remove* chunks: the chunk is replaced by its
//! commitment digest and the seed tree is re-punctured so the removed nonce is
//! no longer derivable. Any *alteration* changes the Merkle root and breaks
//! the root signature.

mod tree;
mod wire;

use std::collections::BTreeSet;

use rand::RngCore;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::hash::{sha256_parts, Digest};
use crate::keys::{PublicKey, Signature, SigningKey};

pub use tree::{depth_for, max_cover_entries, Seed, SEED_LEN};
pub use wire::{FIXED_OVERHEAD, PER_COVER_ENTRY, PER_REDACTED_SLOT};

pub const MAX_CHUNK_LEN: usize = 1024 * 1024;
pub const MAX_CHUNKS: usize = 4096;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum RssError {
    #[error("message has no chunks")]
    EmptyMessage,
    #[error("chunk {0} is empty")]
    EmptyChunk(usize),
    #[error("chunk {index} is {len} bytes, over the {MAX_CHUNK_LEN}-byte cap")]
    ChunkTooLarge { index: usize, len: usize },
    #[error("{0} chunks exceeds the {MAX_CHUNKS}-chunk cap")]
    TooManyChunks(usize),
    #[error("chunk index {index} out of range for {n} chunks")]
    IndexOutOfRange { index: usize, n: usize },
    #[error("chunk {0} is already redacted")]
    AlreadyRedacted(usize),
    #[error("nonce for chunk {0} is not derivable from the seed cover")]
    NonceUnavailable(usize),
    #[error("signature does not belong to this message")]
    SignatureMismatch,
}

/// Which report field a chunked message carries.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum FieldTag {
    Location = 0,
    Picture = 1,
    Description = 2,
}

impl FieldTag {
    pub const ALL: [FieldTag; 3] = [FieldTag::Location, FieldTag::Picture, FieldTag::Description];

    pub fn from_u8(v: u8) -> Option<Self> {
        match v {
            0 => Some(Self::Location),
            1 => Some(Self::Picture),
            2 => Some(Self::Description),
            _ => None,
        }
    }
}

/// An ordered, non-empty list of non-empty chunks bound to one report.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ChunkedMessage {
    field_tag: FieldTag,
    chunks: Vec<Vec<u8>>,
    context: Digest,
}

impl ChunkedMessage {
    pub fn new(field_tag: FieldTag, chunks: Vec<Vec<u8>>, context: Digest) -> Result<Self, RssError> {
        check_chunks(chunks.iter().map(Vec::as_slice), chunks.len())?;
        Ok(Self { field_tag, chunks, context })
    }

    pub fn field_tag(&self) -> FieldTag {
        self.field_tag
    }

    pub fn chunks(&self) -> &[Vec<u8>] {
        &self.chunks
    }

    pub fn len(&self) -> usize {
        self.chunks.len()
    }

    pub fn is_empty(&self) -> bool {
        self.chunks.is_empty()
    }

    pub fn context(&self) -> &Digest {
        &self.context
    }

    /// Rebinds the message to a different report digest.
    pub fn with_context(mut self, context: Digest) -> Self {
        self.context = context;
        self
    }
}

fn check_chunks<'a>(chunks: impl Iterator<Item = &'a [u8]>, n: usize) -> Result<(), RssError> {
    if n == 0 {
        return Err(RssError::EmptyMessage);
    }
    if n > MAX_CHUNKS {
        return Err(RssError::TooManyChunks(n));
    }
    for (index, c) in chunks.enumerate() {
        if c.is_empty() {
            return Err(RssError::EmptyChunk(index));
        }
        if c.len() > MAX_CHUNK_LEN {
            return Err(RssError::ChunkTooLarge { index, len: c.len() });
        }
    }
    Ok(())
}

/// Signature produced by [`sign_redactable`]. Holding it (with the message)
/// means holding every nonce, so it stays with the signer and the auditor.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RedactableSignature {
    pub root_signature: Signature,
    pub n: u32,
    pub depth: u8,
    pub root_seed: Seed,
    pub signer_pk: PublicKey,
}

/// The public, nonce-free binding of a signed message: what goes on chain.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SignatureCommitment {
    pub field_tag: FieldTag,
    pub n: u32,
    pub root: Digest,
    pub root_signature: Signature,
    pub signer_pk: PublicKey,
}

impl SignatureCommitment {
    /// Checks that the root signature is valid for `context`.
    pub fn verify(&self, context: &Digest) -> bool {
        if self.n == 0 || self.n as usize > MAX_CHUNKS {
            return false;
        }
        let msg = root_binding(&self.root, self.n, self.field_tag, context);
        self.signer_pk.verify(&msg, &self.root_signature)
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Slot {
    Present(Vec<u8>),
    Redacted(Digest),
}

impl Slot {
    pub fn is_redacted(&self) -> bool {
        matches!(self, Slot::Redacted(_))
    }

    pub fn present(&self) -> Option<&[u8]> {
        match self {
            Slot::Present(c) => Some(c),
            Slot::Redacted(_) => None,
        }
    }
}

/// One revealed interior (or leaf) seed of the nonce tree.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct CoverEntry {
    pub position: u32,
    pub seed: Seed,
}

/// A message after zero or more redactions, still verifiable against the
/// original root signature.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RedactedMessage {
    pub field_tag: FieldTag,
    pub slots: Vec<Slot>,
    pub seed_cover: Vec<CoverEntry>,
    pub root_signature: Signature,
    pub n: u32,
    pub signer_pk: PublicKey,
    pub context: Digest,
}

fn root_binding(root: &Digest, n: u32, tag: FieldTag, context: &Digest) -> Digest {
    sha256_parts(&[root, &n.to_le_bytes(), &[tag as u8], context])
}

fn leaf_commitments(chunks: &[Vec<u8>], depth: u32, root_seed: &Seed) -> Vec<Digest> {
    let seeds = tree::all_leaf_seeds(root_seed, depth);
    seeds
        .iter()
        .enumerate()
        .map(|(i, s)| match chunks.get(i) {
            Some(c) => tree::content_commitment(&tree::leaf_nonce(s), i, c),
            None => tree::padding_commitment(i),
        })
        .collect()
}

/// Signs with a fresh random root seed.
pub fn sign_redactable(sk: &SigningKey, msg: &ChunkedMessage) -> RedactableSignature {
    let mut root_seed = [0u8; SEED_LEN];
    rand::thread_rng().fill_bytes(&mut root_seed);
    sign_redactable_with_seed(sk, msg, root_seed)
}

/// Signs with a caller-chosen root seed. Reusing a seed across messages
/// breaks hiding; this exists for reproducible fixtures.
pub fn sign_redactable_with_seed(sk: &SigningKey, msg: &ChunkedMessage, root_seed: Seed) -> RedactableSignature {
    let n = msg.len();
    let depth = depth_for(n);
    let root = tree::merkle_root(leaf_commitments(&msg.chunks, depth, &root_seed));
    let binding = root_binding(&root, n as u32, msg.field_tag, &msg.context);
    RedactableSignature {
        root_signature: sk.sign(&binding),
        n: n as u32,
        depth: depth as u8,
        root_seed,
        signer_pk: sk.public_key(),
    }
}

fn signature_fits(msg: &ChunkedMessage, sig: &RedactableSignature) -> bool {
    sig.n as usize == msg.len() && u32::from(sig.depth) == depth_for(msg.len())
}

/// Recomputes the Merkle root of a fully signed message.
pub fn signed_root(msg: &ChunkedMessage, sig: &RedactableSignature) -> Option<Digest> {
    if !signature_fits(msg, sig) {
        return None;
    }
    let depth = u32::from(sig.depth);
    Some(tree::merkle_root(leaf_commitments(&msg.chunks, depth, &sig.root_seed)))
}

pub fn verify_full(pk: &PublicKey, msg: &ChunkedMessage, sig: &RedactableSignature) -> bool {
    if *pk != sig.signer_pk {
        return false;
    }
    let Some(root) = signed_root(msg, sig) else {
        return false;
    };
    let binding = root_binding(&root, sig.n, msg.field_tag, &msg.context);
    pk.verify(&binding, &sig.root_signature)
}

/// The on-chain commitment for a signed message, or `None` if `sig` was not
/// produced over `msg`'s shape.
pub fn commitment(msg: &ChunkedMessage, sig: &RedactableSignature) -> Option<SignatureCommitment> {
    Some(SignatureCommitment {
        field_tag: msg.field_tag,
        n: sig.n,
        root: signed_root(msg, sig)?,
        root_signature: sig.root_signature,
        signer_pk: sig.signer_pk,
    })
}

/// Per-chunk commitment digests of a fully signed message, i.e. the digests a
/// redaction of each chunk must publish.
pub fn chunk_commitments(msg: &ChunkedMessage, sig: &RedactableSignature) -> Option<Vec<Digest>> {
    if !signature_fits(msg, sig) {
        return None;
    }
    let mut all = leaf_commitments(&msg.chunks, u32::from(sig.depth), &sig.root_seed);
    all.truncate(msg.len());
    Some(all)
}

/// Redacts `to_redact` from a freshly signed message.
pub fn redact(
    msg: &ChunkedMessage,
    sig: &RedactableSignature,
    to_redact: &BTreeSet<usize>,
) -> Result<RedactedMessage, RssError> {
    RedactedMessage::from_signed(msg, sig)?.redact(to_redact)
}

impl RedactedMessage {
    /// The unredacted starting point: every slot present, the root seed as
    /// the sole cover entry.
    pub fn from_signed(msg: &ChunkedMessage, sig: &RedactableSignature) -> Result<Self, RssError> {
        if !signature_fits(msg, sig) {
            return Err(RssError::SignatureMismatch);
        }
        Ok(Self {
            field_tag: msg.field_tag,
            slots: msg.chunks.iter().cloned().map(Slot::Present).collect(),
            seed_cover: vec![CoverEntry { position: 1, seed: sig.root_seed }],
            root_signature: sig.root_signature,
            n: sig.n,
            signer_pk: sig.signer_pk,
            context: msg.context,
        })
    }

    fn depth(&self) -> u32 {
        depth_for(self.slots.len())
    }

    /// Seed for `node` if some cover entry is `node` or one of its ancestors.
    fn seed_for(&self, node: u32) -> Option<Seed> {
        self.seed_cover
            .iter()
            .find(|e| e.position >= 1 && tree::is_ancestor_or_self(e.position, node))
            .map(|e| tree::descend(e.position, &e.seed, node))
    }

    /// Removes `to_redact`. Redacting a redacted message composes: the result
    /// is byte-identical to redacting the union from the original.
    pub fn redact(&self, to_redact: &BTreeSet<usize>) -> Result<Self, RssError> {
        let n = self.slots.len();
        let depth = self.depth();
        let mut slots = self.slots.clone();
        for &i in to_redact {
            let chunk = match slots.get(i) {
                None => return Err(RssError::IndexOutOfRange { index: i, n }),
                Some(Slot::Redacted(_)) => return Err(RssError::AlreadyRedacted(i)),
                Some(Slot::Present(c)) => c,
            };
            let seed = self.seed_for(tree::leaf_node(depth, i)).ok_or(RssError::NonceUnavailable(i))?;
            let h = tree::content_commitment(&tree::leaf_nonce(&seed), i, chunk);
            slots[i] = Slot::Redacted(h);
        }
        let redacted: Vec<bool> = slots.iter().map(Slot::is_redacted).collect();
        let cover = tree::cover_nodes(depth, n, &redacted, &mut |node| self.seed_for(node))
            .map_err(RssError::NonceUnavailable)?;
        Ok(Self {
            slots,
            seed_cover: cover.into_iter().map(|(position, seed)| CoverEntry { position, seed }).collect(),
            ..self.clone()
        })
    }

    pub fn redacted_indices(&self) -> BTreeSet<usize> {
        self.slots.iter().enumerate().filter(|(_, s)| s.is_redacted()).map(|(i, _)| i).collect()
    }

    pub fn present_chunks(&self) -> impl Iterator<Item = (usize, &[u8])> {
        self.slots.iter().enumerate().filter_map(|(i, s)| s.present().map(|c| (i, c)))
    }

    /// Recomputes the Merkle root, or `None` if the message is malformed:
    /// inconsistent counts, overlapping or out-of-range cover entries, a cover
    /// entry over a redacted slot, or a present slot with no derivable nonce.
    pub fn root(&self) -> Option<Digest> {
        let n = self.slots.len();
        if n == 0 || n > MAX_CHUNKS || self.n as usize != n {
            return None;
        }
        if check_chunks(self.present_chunks().map(|(_, c)| c), n).is_err() {
            return None;
        }
        let depth = self.depth();
        let width = 1usize << depth;
        let mut nonces: Vec<Option<Digest>> = vec![None; width];
        let mut claimed = vec![false; width];
        for e in &self.seed_cover {
            if e.position == 0 || e.position >= (1u32 << (depth + 1)) {
                return None;
            }
            let (lo, hi) = tree::leaf_range(depth, e.position);
            let seeds = tree::subtree_leaf_seeds(depth, e.position, &e.seed);
            for (leaf, seed) in (lo..hi).zip(seeds) {
                if claimed[leaf] {
                    return None;
                }
                claimed[leaf] = true;
                if leaf < n {
                    if self.slots[leaf].is_redacted() {
                        return None;
                    }
                    nonces[leaf] = Some(tree::leaf_nonce(&seed));
                }
            }
        }
        let mut leaves = Vec::with_capacity(width);
        #[allow(clippy::needless_range_loop)]
        for i in 0..width {
            let h = match self.slots.get(i) {
                Some(Slot::Present(c)) => tree::content_commitment(&nonces[i]?, i, c),
                Some(Slot::Redacted(d)) => *d,
                None => tree::padding_commitment(i),
            };
            leaves.push(h);
        }
        Some(tree::merkle_root(leaves))
    }

    /// The public commitment this message must match on chain.
    pub fn commitment(&self) -> Option<SignatureCommitment> {
        Some(SignatureCommitment {
            field_tag: self.field_tag,
            n: self.n,
            root: self.root()?,
            root_signature: self.root_signature,
            signer_pk: self.signer_pk,
        })
    }

    /// Bytes of the encoding that are not chunk content: framing, digests,
    /// cover, signature, key and context.
    pub fn crypto_overhead(&self) -> usize {
        let content: usize = self.present_chunks().map(|(_, c)| wire::PER_PRESENT_SLOT + c.len()).sum();
        self.to_bytes().len() - content
    }
}

pub fn verify_redacted(redacted: &RedactedMessage) -> bool {
    let Some(root) = redacted.root() else {
        return false;
    };
    let binding = root_binding(&root, redacted.n, redacted.field_tag, &redacted.context);
    redacted.signer_pk.verify(&binding, &redacted.root_signature)
}

/// Worst-case cryptographic overhead in bytes of a [`RedactedMessage`] with
/// `n` chunks of which `k` are redacted, maximized over which `k`.
pub fn signature_overhead(n: usize, k: usize) -> usize {
    assert!(n >= 1 && k <= n, "need 0 <= k <= n and n >= 1");
    FIXED_OVERHEAD + k * PER_REDACTED_SLOT + max_cover_entries(n, k) * PER_COVER_ENTRY
}
