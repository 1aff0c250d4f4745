//! Consortium nodes, an in-process network of them, and chain validation.

use std::collections::{HashMap, HashSet, VecDeque};
use std::fs;
use std::path::Path;

use thiserror::Error;

use super::block::{Block, MAX_TXS_PER_BLOCK};
use super::state::LedgerState;
use super::tx::{Transaction, TxKind};
use super::{Genesis, GenesisError, Rejection};
use crate::hash::Digest;
use crate::keys::{PublicKey, SigningKey};
use crate::report::ReportId;

#[derive(Debug, Error)]
pub enum ChainError {
    #[error("invalid block at height {height}: {reason}")]
    Invalid { height: u64, reason: String },
    #[error("chain directory: {0}")]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Genesis(#[from] GenesisError),
}

impl ChainError {
    /// Height of the first invalid block, if that is what failed.
    pub fn height(&self) -> Option<u64> {
        match self {
            ChainError::Invalid { height, .. } => Some(*height),
            _ => None,
        }
    }
}

/// A refused transaction, kept in the node's rejection log.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RejectedTx {
    pub tx_hash: Digest,
    pub kind: TxKind,
    pub report_id: Option<ReportId>,
    pub sender: PublicKey,
    pub height: u64,
    pub code: Rejection,
}

impl RejectedTx {
    fn new(tx: &Transaction, height: u64, code: Rejection) -> Self {
        Self { tx_hash: tx.hash(), kind: tx.kind, report_id: tx.report_id, sender: tx.sender_pk, height, code }
    }
}

fn apply_block(state: &mut LedgerState, genesis: &Genesis, block: &Block) -> Result<(), String> {
    let height = state.height;
    if block.header.height != height {
        return Err(format!("height field is {}", block.header.height));
    }
    let prev = state.block_hashes.last().copied().unwrap_or(state.genesis_hash);
    if block.header.prev_hash != prev {
        return Err("prev_hash does not match the previous block".into());
    }
    if block.header.producer != genesis.producer_for(height) {
        return Err("producer is not the scheduled member".into());
    }
    if block.header.timestamp < state.last_timestamp {
        return Err("timestamp goes backwards".into());
    }
    block.check_integrity(&state.chain_id)?;
    for (i, tx) in block.txs.iter().enumerate() {
        state.apply_tx(tx).map_err(|r| format!("transaction {i} rejected: {}", r.code()))?;
    }
    state.seal_block(block.block_hash, block.header.timestamp);
    Ok(())
}

/// Replays `blocks` from genesis; fails at the first invalid block.
pub fn validate_chain(genesis: &Genesis, blocks: &[Block]) -> Result<LedgerState, ChainError> {
    let mut state = LedgerState::from_genesis(genesis);
    for (h, b) in blocks.iter().enumerate() {
        apply_block(&mut state, genesis, b).map_err(|reason| ChainError::Invalid { height: h as u64, reason })?;
    }
    Ok(state)
}

/// Like [`validate_chain`] over raw block encodings; undecodable bytes make
/// that block invalid.
pub fn validate_chain_bytes(genesis: &Genesis, blocks: &[Vec<u8>]) -> Result<LedgerState, ChainError> {
    let mut state = LedgerState::from_genesis(genesis);
    for (h, bytes) in blocks.iter().enumerate() {
        let invalid = |reason: String| ChainError::Invalid { height: h as u64, reason };
        let block = Block::from_bytes(bytes).map_err(|e| invalid(format!("undecodable: {e}")))?;
        apply_block(&mut state, genesis, &block).map_err(invalid)?;
    }
    Ok(state)
}

/// Layout: `genesis.json` and `blocks/<height:08>.bin`.
pub fn write_chain_dir(dir: &Path, genesis: &Genesis, blocks: &[Block]) -> Result<(), ChainError> {
    let bdir = dir.join("blocks");
    fs::create_dir_all(&bdir)?;
    fs::write(dir.join("genesis.json"), genesis.to_json())?;
    for b in blocks {
        let path = bdir.join(format!("{:08}.bin", b.height()));
        if !path.exists() {
            fs::write(path, b.to_bytes())?;
        }
    }
    Ok(())
}

/// Reads a chain directory without validating it.
pub fn load_chain_dir(dir: &Path) -> Result<(Genesis, Vec<Vec<u8>>), ChainError> {
    let genesis = Genesis::load(&dir.join("genesis.json"))?;
    let bdir = dir.join("blocks");
    let mut names = Vec::new();
    if bdir.exists() {
        for e in fs::read_dir(&bdir)? {
            let p = e?.path();
            if p.extension().is_some_and(|x| x == "bin") {
                names.push(p);
            }
        }
    }
    names.sort();
    let blocks = names.iter().map(fs::read).collect::<Result<_, _>>()?;
    Ok((genesis, blocks))
}

/// One consortium member: its copy of the chain and state, a FIFO mempool
/// and a log of refused transactions.
#[derive(Debug)]
pub struct Node {
    key: SigningKey,
    genesis: Genesis,
    blocks: Vec<Block>,
    state: LedgerState,
    mempool: VecDeque<Transaction>,
    queued: HashSet<Digest>,
    included: HashMap<Digest, (u64, usize)>,
    rejections: Vec<RejectedTx>,
}

impl Node {
    pub fn new(genesis: Genesis, key: SigningKey) -> Self {
        Self {
            state: LedgerState::from_genesis(&genesis),
            key,
            genesis,
            blocks: Vec::new(),
            mempool: VecDeque::new(),
            queued: HashSet::new(),
            included: HashMap::new(),
            rejections: Vec::new(),
        }
    }

    /// Restores a node from a chain directory, validating every block.
    pub fn open(dir: &Path, key: SigningKey) -> Result<Self, ChainError> {
        let (genesis, raw) = load_chain_dir(dir)?;
        let mut node = Self::new(genesis, key);
        for (h, bytes) in raw.iter().enumerate() {
            let block = Block::from_bytes(bytes)
                .map_err(|e| ChainError::Invalid { height: h as u64, reason: format!("undecodable: {e}") })?;
            node.accept_block(block)?;
        }
        Ok(node)
    }

    pub fn save(&self, dir: &Path) -> Result<(), ChainError> {
        write_chain_dir(dir, &self.genesis, &self.blocks)
    }

    pub fn public_key(&self) -> PublicKey {
        self.key.public_key()
    }

    pub fn genesis(&self) -> &Genesis {
        &self.genesis
    }

    pub fn state(&self) -> &LedgerState {
        &self.state
    }

    pub fn blocks(&self) -> &[Block] {
        &self.blocks
    }

    pub fn height(&self) -> u64 {
        self.state.height
    }

    pub fn rejections(&self) -> &[RejectedTx] {
        &self.rejections
    }

    pub fn mempool_len(&self) -> usize {
        self.mempool.len()
    }

    /// Queued transactions in inclusion order.
    pub fn mempool(&self) -> impl Iterator<Item = &Transaction> {
        self.mempool.iter()
    }

    pub fn is_queued(&self, hash: &Digest) -> bool {
        self.queued.contains(hash)
    }

    /// Block height and transaction for an included transaction hash.
    pub fn find_tx(&self, hash: &Digest) -> Option<(u64, &Transaction)> {
        let &(h, i) = self.included.get(hash)?;
        Some((h, &self.blocks[h as usize].txs[i]))
    }

    /// Queues a transaction. Signature and payload shape are checked up
    /// front; everything else is decided when a block includes it. A replay
    /// of an included transaction is queued again and refused by the state
    /// rules.
    pub fn submit(&mut self, tx: Transaction) -> Result<Digest, Rejection> {
        let hash = tx.hash();
        let early = if !tx.verify_signature(&self.genesis.chain_id) {
            Some(Rejection::BadSignature)
        } else if tx.payload().is_err() {
            Some(Rejection::MalformedPayload)
        } else {
            None
        };
        if let Some(code) = early {
            self.rejections.push(RejectedTx::new(&tx, self.state.height, code));
            return Err(code);
        }
        if self.queued.insert(hash) {
            self.mempool.push_back(tx);
        }
        Ok(hash)
    }

    pub fn is_producer(&self) -> bool {
        self.genesis.producer_for(self.state.height) == self.public_key()
    }

    /// Scheduled timestamp of the next block.
    pub fn next_timestamp(&self) -> u64 {
        self.genesis.genesis_time + self.state.height * self.genesis.block_interval_secs
    }

    /// Builds, applies and returns the next block if this node is scheduled
    /// to produce it. Refused transactions are logged and dropped.
    pub fn produce_block(&mut self, timestamp: u64) -> Option<Block> {
        if !self.is_producer() {
            return None;
        }
        let height = self.state.height;
        let timestamp = timestamp.max(self.state.last_timestamp);
        let mut txs = Vec::new();
        while txs.len() < MAX_TXS_PER_BLOCK {
            let Some(tx) = self.mempool.pop_front() else {
                break;
            };
            self.queued.remove(&tx.hash());
            match self.state.apply_tx(&tx) {
                Ok(()) => txs.push(tx),
                Err(code) => self.rejections.push(RejectedTx::new(&tx, height, code)),
            }
        }
        let prev = self.state.block_hashes.last().copied().unwrap_or(self.state.genesis_hash);
        let block = Block::build(&self.key, &self.genesis.chain_id, height, prev, timestamp, txs);
        self.state.seal_block(block.block_hash, timestamp);
        self.record(block.clone());
        Some(block)
    }

    /// Validates a block from another member and appends it.
    pub fn accept_block(&mut self, block: Block) -> Result<(), ChainError> {
        let mut next = self.state.clone();
        apply_block(&mut next, &self.genesis, &block)
            .map_err(|reason| ChainError::Invalid { height: self.state.height, reason })?;
        self.state = next;
        for tx in &block.txs {
            self.queued.remove(&tx.hash());
        }
        let included: HashSet<Digest> = block.txs.iter().map(Transaction::hash).collect();
        self.mempool.retain(|t| !included.contains(&t.hash()));
        self.record(block);
        Ok(())
    }

    /// Removes transactions another member already refused.
    pub fn drop_txs(&mut self, hashes: &[Digest]) {
        let drop: HashSet<&Digest> = hashes.iter().collect();
        self.mempool.retain(|t| !drop.contains(&t.hash()));
        for h in hashes {
            self.queued.remove(h);
        }
    }

    fn record(&mut self, block: Block) {
        let h = block.height();
        for (i, tx) in block.txs.iter().enumerate() {
            self.included.insert(tx.hash(), (h, i));
        }
        self.blocks.push(block);
    }
}

/// Where a submitted transaction stands.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TxStatus {
    Included(u64),
    /// Refused when the block at this height was built.
    Rejected(u64, Rejection),
    Pending,
    Unknown,
}

/// In-process consortium: every member holds a full node; each step the
/// scheduled member produces a block and the others validate it.
#[derive(Debug)]
pub struct Network {
    nodes: Vec<Node>,
}

impl Network {
    /// `keys` must be the genesis members' keys, in member order.
    pub fn new(genesis: Genesis, keys: Vec<SigningKey>) -> Self {
        assert_eq!(
            keys.iter().map(SigningKey::public_key).collect::<Vec<_>>(),
            genesis.members,
            "keys must match genesis members"
        );
        let nodes = keys.into_iter().map(|k| Node::new(genesis.clone(), k)).collect();
        Self { nodes }
    }

    /// Restores every member from the same chain directory.
    pub fn open(dir: &Path, keys: Vec<SigningKey>) -> Result<Self, ChainError> {
        let nodes: Vec<Node> = keys.into_iter().map(|k| Node::open(dir, k)).collect::<Result<_, _>>()?;
        let Some(first) = nodes.first() else {
            return Err(GenesisError::NoMembers.into());
        };
        let members: Vec<PublicKey> = nodes.iter().map(Node::public_key).collect();
        if members != first.genesis().members {
            return Err(ChainError::Invalid { height: 0, reason: "keys do not match the genesis members".into() });
        }
        Ok(Self { nodes })
    }

    pub fn nodes(&self) -> &[Node] {
        &self.nodes
    }

    pub fn node(&self, i: usize) -> &Node {
        &self.nodes[i]
    }

    pub fn state(&self) -> &LedgerState {
        self.nodes[0].state()
    }

    pub fn height(&self) -> u64 {
        self.nodes[0].height()
    }

    /// Gossips `tx` to every member's mempool.
    pub fn broadcast(&mut self, tx: Transaction) -> Result<Digest, Rejection> {
        let mut out = Ok([0; 32]);
        for n in &mut self.nodes {
            out = n.submit(tx.clone());
        }
        out
    }

    /// Produces one block and propagates it.
    pub fn step(&mut self) -> &Block {
        let p = self.nodes.iter().position(Node::is_producer).expect("some member is scheduled");
        let ts = self.nodes[p].next_timestamp();
        let block = self.nodes[p].produce_block(ts).expect("scheduled");
        let refused: Vec<Digest> =
            self.nodes[p].rejections().iter().filter(|r| r.height == block.height()).map(|r| r.tx_hash).collect();
        for (i, n) in self.nodes.iter_mut().enumerate() {
            if i != p {
                n.accept_block(block.clone()).expect("honest block validates");
                n.drop_txs(&refused);
            }
        }
        self.nodes[p].blocks().last().expect("just produced")
    }

    pub fn run(&mut self, blocks: u64) {
        for _ in 0..blocks {
            self.step();
        }
    }

    /// Every refusal logged by any member, deduplicated by transaction.
    pub fn rejections(&self) -> Vec<RejectedTx> {
        let mut seen = HashSet::new();
        let mut out = Vec::new();
        for n in &self.nodes {
            for r in n.rejections() {
                if seen.insert((r.tx_hash, r.height)) {
                    out.push(r.clone());
                }
            }
        }
        out.sort_by_key(|r| (r.height, r.tx_hash));
        out
    }

    /// Latest fate of a transaction; a replay can be refused after the
    /// original was included.
    pub fn tx_status(&self, hash: &Digest) -> TxStatus {
        let included = self.nodes[0].find_tx(hash).map(|(h, _)| h);
        let rejected =
            self.nodes.iter().flat_map(|n| n.rejections()).filter(|r| r.tx_hash == *hash).max_by_key(|r| r.height);
        let queued = self.nodes.iter().any(|n| n.is_queued(hash));
        match (included, rejected) {
            _ if queued => TxStatus::Pending,
            (Some(h), Some(r)) if r.height > h => TxStatus::Rejected(r.height, r.code),
            (Some(h), _) => TxStatus::Included(h),
            (None, Some(r)) => TxStatus::Rejected(r.height, r.code),
            (None, None) => TxStatus::Unknown,
        }
    }

    /// Whether every member holds byte-identical state.
    pub fn states_agree(&self) -> bool {
        let first = self.nodes[0].state().to_bytes();
        self.nodes.iter().all(|n| n.state().to_bytes() == first)
    }
}
