//! Anyone holding the chain files can replay them; a changed byte is pinned
//! to its block.

use acrp_core::ledger::sim::{World, WorldConfig};
use acrp_core::ledger::{load_chain_dir, validate_chain_bytes, write_chain_dir};

fn main() {
    let mut w = World::new(WorldConfig::default());
    w.run(10);
    let dir = tempfile::tempdir().expect("temp dir");
    write_chain_dir(dir.path(), &w.genesis, w.net.node(0).blocks()).expect("written");

    let (genesis, raw) = load_chain_dir(dir.path()).expect("readable");
    let state = validate_chain_bytes(&genesis, &raw).expect("valid");
    println!("{} blocks replayed, state digest {}", raw.len(), acrp_core::hash::to_hex(&state.digest()));

    let mut tampered = raw.clone();
    tampered[6][20] ^= 0x01;
    match validate_chain_bytes(&genesis, &tampered) {
        Ok(_) => println!("tampering went unnoticed"),
        Err(e) => println!("tampered copy refused: {e}"),
    }
}
