//! Blocks and their hash chain.
//!
//! Encoding: `height:u64 ‖ prev_hash ‖ producer ‖ timestamp:u64 ‖ tx_root ‖
//! count:u32 ‖ (len:u32 ‖ tx)* ‖ block_hash ‖ signature`.

use crate::hash::{sha256_parts, Digest};
use crate::keys::{PublicKey, Signature, SigningKey};
use crate::wire::{DecodeError, Reader, Writer};

use super::tx::Transaction;

pub const MAX_TXS_PER_BLOCK: usize = 1000;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BlockHeader {
    pub height: u64,
    pub prev_hash: Digest,
    pub producer: PublicKey,
    pub timestamp: u64,
    pub tx_root: Digest,
}

impl BlockHeader {
    fn encode(&self, w: &mut Writer) {
        w.u64(self.height).raw(&self.prev_hash).raw(self.producer.as_bytes()).u64(self.timestamp).raw(&self.tx_root);
    }

    /// `H(header ‖ tx_root)`; the header fields are bound to the chain id.
    pub fn hash(&self, chain_id: &str) -> Digest {
        let mut w = Writer::new();
        w.str(chain_id);
        self.encode(&mut w);
        sha256_parts(&[b"acrp-block", &w.finish(), &self.tx_root])
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Block {
    pub header: BlockHeader,
    pub txs: Vec<Transaction>,
    pub block_hash: Digest,
    /// Producer's signature over `block_hash`.
    pub signature: Signature,
}

/// Binary Merkle root with domain-separated leaves (`0x00`) and nodes
/// (`0x01`); an odd node is carried up unchanged.
pub fn tx_merkle_root(txs: &[Transaction]) -> Digest {
    if txs.is_empty() {
        return sha256_parts(&[b"acrp-empty-block"]);
    }
    let mut level: Vec<Digest> = txs.iter().map(|t| sha256_parts(&[&[0], &t.to_bytes()])).collect();
    while level.len() > 1 {
        level = level
            .chunks(2)
            .map(|p| match p {
                [l, r] => sha256_parts(&[&[1], l, r]),
                [one] => *one,
                _ => unreachable!(),
            })
            .collect();
    }
    level[0]
}

impl Block {
    pub fn build(
        sk: &SigningKey,
        chain_id: &str,
        height: u64,
        prev_hash: Digest,
        timestamp: u64,
        txs: Vec<Transaction>,
    ) -> Self {
        let header =
            BlockHeader { height, prev_hash, producer: sk.public_key(), timestamp, tx_root: tx_merkle_root(&txs) };
        let block_hash = header.hash(chain_id);
        Self { signature: sk.sign(&block_hash), header, txs, block_hash }
    }

    pub fn height(&self) -> u64 {
        self.header.height
    }

    /// Internal consistency: tx root, block hash and producer signature.
    pub fn check_integrity(&self, chain_id: &str) -> Result<(), &'static str> {
        if self.txs.len() > MAX_TXS_PER_BLOCK {
            return Err("too many transactions");
        }
        if tx_merkle_root(&self.txs) != self.header.tx_root {
            return Err("transaction root mismatch");
        }
        if self.header.hash(chain_id) != self.block_hash {
            return Err("block hash mismatch");
        }
        if !self.header.producer.verify(&self.block_hash, &self.signature) {
            return Err("bad producer signature");
        }
        Ok(())
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut w = Writer::new();
        self.header.encode(&mut w);
        w.u32(self.txs.len() as u32);
        for t in &self.txs {
            w.bytes(&t.to_bytes());
        }
        w.raw(&self.block_hash).raw(self.signature.as_bytes());
        w.finish()
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self, DecodeError> {
        let mut r = Reader::new(bytes);
        let header = BlockHeader {
            height: r.u64()?,
            prev_hash: r.array()?,
            producer: PublicKey(r.array()?),
            timestamp: r.u64()?,
            tx_root: r.array()?,
        };
        let count = r.count(4)?;
        let mut txs = Vec::with_capacity(count);
        for _ in 0..count {
            txs.push(Transaction::from_bytes(r.bytes()?)?);
        }
        let block = Self { header, txs, block_hash: r.array()?, signature: Signature(r.array()?) };
        r.finish()?;
        Ok(block)
    }
}
