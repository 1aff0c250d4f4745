//! Binary tree arithmetic shared by the nonce seed tree and the commitment
//! Merkle tree.
//!
//! Nodes are addressed in heap order: the root is `1`, the children of `p`
//! are `2p` and `2p + 1`, and for a tree of depth `d` leaf `i` sits at
//! `2^d + i`.

use crate::hash::{sha256_parts, Digest};

pub const SEED_LEN: usize = 16;
pub type Seed = [u8; SEED_LEN];

const CONTENT_LEAF: u8 = 0x00;
const PADDING_LEAF: u8 = 0x01;
const INTERIOR: u8 = 0x02;

/// `ceil(log2(max(n, 2)))`: the smallest tree holds two leaves.
pub fn depth_for(n: usize) -> u32 {
    let n = n.max(2);
    usize::BITS - (n - 1).leading_zeros()
}

pub fn leaf_node(depth: u32, leaf: usize) -> u32 {
    (1u32 << depth) + leaf as u32
}

pub fn node_depth(node: u32) -> u32 {
    debug_assert!(node >= 1);
    31 - node.leading_zeros()
}

/// Half-open range of leaf indices under `node`.
pub fn leaf_range(depth: u32, node: u32) -> (usize, usize) {
    let level = node_depth(node);
    let span = 1usize << (depth - level);
    let first = (node as usize - (1usize << level)) * span;
    (first, first + span)
}

pub fn is_ancestor_or_self(ancestor: u32, mut node: u32) -> bool {
    while node > ancestor {
        node >>= 1;
    }
    node == ancestor
}

pub fn child_seed(parent: &Seed, child_index: u8) -> Seed {
    let h = sha256_parts(&[parent, &[child_index], b"seed"]);
    let mut out = [0u8; SEED_LEN];
    out.copy_from_slice(&h[..SEED_LEN]);
    out
}

/// Walks from `from` (holding `seed`) down to its descendant `to`.
pub fn descend(from: u32, seed: &Seed, to: u32) -> Seed {
    let hops = node_depth(to) - node_depth(from);
    let mut s = *seed;
    for level in (0..hops).rev() {
        let bit = ((to >> level) & 1) as u8;
        s = child_seed(&s, bit);
    }
    s
}

pub fn leaf_nonce(leaf_seed: &Seed) -> Digest {
    sha256_parts(&[leaf_seed, b"nonce"])
}

pub fn content_commitment(nonce: &Digest, index: usize, chunk: &[u8]) -> Digest {
    let idx = (index as u32).to_le_bytes();
    let len = (chunk.len() as u32).to_le_bytes();
    sha256_parts(&[&[CONTENT_LEAF], nonce, &idx, &len, chunk])
}

pub fn padding_commitment(index: usize) -> Digest {
    sha256_parts(&[&[PADDING_LEAF], &(index as u32).to_le_bytes()])
}

pub fn interior(left: &Digest, right: &Digest) -> Digest {
    sha256_parts(&[&[INTERIOR], left, right])
}

/// Merkle root over a full power-of-two leaf layer.
pub fn merkle_root(mut layer: Vec<Digest>) -> Digest {
    debug_assert!(layer.len().is_power_of_two() && layer.len() >= 2);
    while layer.len() > 1 {
        layer = layer.chunks_exact(2).map(|p| interior(&p[0], &p[1])).collect();
    }
    layer[0]
}

/// Expands every leaf seed of a depth-`depth` tree from its root seed.
pub fn all_leaf_seeds(root_seed: &Seed, depth: u32) -> Vec<Seed> {
    let mut layer = vec![*root_seed];
    for _ in 0..depth {
        layer = layer.iter().flat_map(|s| [child_seed(s, 0), child_seed(s, 1)]).collect();
    }
    layer
}

/// Leaf seeds under `node`, in leaf order.
pub fn subtree_leaf_seeds(depth: u32, node: u32, seed: &Seed) -> Vec<Seed> {
    all_leaf_seeds(seed, depth - node_depth(node))
}

/// Canonical cover: the maximal subtrees that contain no redacted leaf and at
/// least one real (non-padding) leaf, in left-to-right order.
///
/// `seed_of` returns the seed for a node if it can be derived; when it can't,
/// the subtree is split and its children are tried instead.
pub fn cover_nodes(
    depth: u32,
    n: usize,
    redacted: &[bool],
    seed_of: &mut dyn FnMut(u32) -> Option<Seed>,
) -> Result<Vec<(u32, Seed)>, usize> {
    let mut out = Vec::new();
    walk_cover(depth, n, redacted, 1, seed_of, &mut out)?;
    Ok(out)
}

fn walk_cover(
    depth: u32,
    n: usize,
    redacted: &[bool],
    node: u32,
    seed_of: &mut dyn FnMut(u32) -> Option<Seed>,
    out: &mut Vec<(u32, Seed)>,
) -> Result<(), usize> {
    let (lo, hi) = leaf_range(depth, node);
    if lo >= n {
        return Ok(());
    }
    let clean = (lo..hi.min(n)).all(|i| !redacted[i]);
    if clean {
        if let Some(seed) = seed_of(node) {
            out.push((node, seed));
            return Ok(());
        }
    }
    if node_depth(node) == depth {
        if redacted[lo] {
            return Ok(());
        }
        // A present leaf whose nonce nobody can derive.
        return Err(lo);
    }
    walk_cover(depth, n, redacted, 2 * node, seed_of, out)?;
    walk_cover(depth, n, redacted, 2 * node + 1, seed_of, out)
}

/// Largest possible canonical cover over all placements of `k` redacted
/// leaves among `n` real leaves. Tree knapsack, O(n^2) overall.
pub fn max_cover_entries(n: usize, k: usize) -> usize {
    assert!(k <= n && n >= 1);
    let depth = depth_for(n);
    best_cover(depth, n, 1)[k].expect("k <= n is always placeable")
}

// best[j] = max cover size in this subtree with j redacted real leaves.
fn best_cover(depth: u32, n: usize, node: u32) -> Vec<Option<usize>> {
    let (lo, hi) = leaf_range(depth, node);
    let real = hi.min(n).saturating_sub(lo);
    if real == 0 {
        return vec![Some(0)];
    }
    let mut best = vec![None; real + 1];
    best[0] = Some(1);
    if node_depth(node) == depth {
        best[1] = Some(0);
        return best;
    }
    let left = best_cover(depth, n, 2 * node);
    let right = best_cover(depth, n, 2 * node + 1);
    for (a, la) in left.iter().enumerate() {
        for (b, rb) in right.iter().enumerate() {
            if a + b == 0 {
                continue;
            }
            if let (Some(x), Some(y)) = (la, rb) {
                let v = x + y;
                if best[a + b].is_none_or(|cur| v > cur) {
                    best[a + b] = Some(v);
                }
            }
        }
    }
    best
}
