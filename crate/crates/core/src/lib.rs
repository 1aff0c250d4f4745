//! Accountable city reports: redactable signatures over chunked reports, a
//! replayable consortium ledger for their lifecycle, content-addressed storage
//! and community prioritization.

pub mod chunking;
pub mod community;
pub mod hash;
pub mod keys;
pub mod ledger;
pub mod report;
pub mod rss;
pub mod storage;
pub mod wire;
