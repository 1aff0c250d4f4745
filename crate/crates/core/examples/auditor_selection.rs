//! Who audits a report is drawn from the report hash and a later block hash,
//! so anyone can recompute it and nobody can pick.

use acrp_core::hash::sha256;
use acrp_core::keys::keygen;
use acrp_core::report::{select_auditor, AuditorRegistry, RegisteredAuditor, ReportId};

fn main() {
    let registry = AuditorRegistry {
        auditors: (0..5)
            .map(|i| RegisteredAuditor {
                public_key: keygen(Some(format!("auditor-{i}").as_bytes())).1,
                activation_height: 0,
            })
            .collect(),
    };
    let mut load = [0usize; 5];
    for i in 0..1000u32 {
        let id = ReportId(sha256(&i.to_le_bytes()));
        let beacon = sha256(&(i + 7).to_le_bytes());
        let (index, _) = select_auditor(&id, &beacon, &registry).expect("non-empty registry");
        load[index] += 1;
    }
    println!("1000 reports over 5 auditors: {load:?}");

    let id = ReportId(sha256(b"one report"));
    let a = select_auditor(&id, &sha256(b"block 41"), &registry).unwrap().0;
    let b = select_auditor(&id, &sha256(b"block 41"), &registry).unwrap().0;
    let c = select_auditor(&id, &sha256(b"block 42"), &registry).unwrap().0;
    println!("same beacon: {a} and {b}; different beacon: {c}");
}
