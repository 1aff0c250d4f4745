//! Nearby reports of one kind show up as duplicates; votes and merges set
//! the handling order.

use acrp_core::community::{find_duplicates, priority_ranking, total_live_score, DEFAULT_THRESHOLD_M};
use acrp_core::keys::keygen;
use acrp_core::ledger::build;
use acrp_core::ledger::sim::{sample_report, World, WorldConfig};
use acrp_core::report::{Location, ReportType, SignedReport};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn main() {
    let mut w = World::new(WorldConfig { authorities: 1, ..Default::default() });
    let chain = w.chain_id().to_string();
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let spots = [(52.37020, 4.89520), (52.37023, 4.89527), (52.38000, 4.90000)];
    let mut ids = Vec::new();
    for (i, (lat, lon)) in spots.into_iter().enumerate() {
        let (citizen, _) = keygen(Some(format!("reporter-{i}").as_bytes()));
        let mut r = sample_report(&mut rng, Location::from_degrees(lat, lon).unwrap(), 0.0, 8, 8);
        r.report_type = ReportType::Pothole;
        let s = SignedReport::sign(r, &citizen).unwrap();
        let id = w.file(&citizen, &s).unwrap();
        w.audit(&s, &Default::default()).unwrap();
        ids.push(id);
    }
    for d in find_duplicates(w.state(), &ids[0], DEFAULT_THRESHOLD_M).unwrap() {
        println!("{} looks like {} ({:.1} m)", d.report_a, d.report_b, d.distance_m);
    }

    for (i, target) in [0, 0, 1, 2, 2, 2].into_iter().enumerate() {
        let (voter, _) = keygen(Some(format!("voter-{i}").as_bytes()));
        w.apply(build::vote(&voter, &chain, ids[target])).unwrap();
    }
    let show = |w: &World| {
        for p in priority_ranking(w.state()) {
            println!("  {} score {}", p.report_id, p.score);
        }
        println!("  live total {}", total_live_score(w.state()));
    };
    println!("ranking:");
    show(&w);

    let authority = w.authorities[0].clone();
    w.apply(build::merge(&authority, &chain, ids[1], ids[0])).unwrap();
    println!("after merging the duplicate:");
    show(&w);
}
