//! Keys and genesis for a consortium run on one machine.

use std::fs;
use std::io;
use std::net::SocketAddr;
use std::path::Path;
use std::time::Duration;

use acrp_core::keys::{keygen, PublicKey, SigningKey};
use acrp_core::ledger::{Genesis, DEFAULT_AUDIT_TIMEOUT};
use acrp_core::report::{DirectoryEntry, Region, ReportType};

use crate::keyfile::write_key;
use crate::server::{Gateway, GatewayError, ServerHandle};

#[derive(Debug, Clone)]
pub struct LocalConfig {
    pub chain_id: String,
    pub members: usize,
    pub auditors: usize,
    /// One catch-all authority if 1; otherwise type `t` goes to authority
    /// `t mod authorities`.
    pub authorities: usize,
    pub citizens: usize,
    pub audit_timeout: u64,
    /// Derives every key; `None` draws them from the OS.
    pub seed: Option<String>,
}

impl Default for LocalConfig {
    fn default() -> Self {
        Self {
            chain_id: "acrp-local".into(),
            members: 4,
            auditors: 3,
            authorities: 2,
            citizens: 1,
            audit_timeout: DEFAULT_AUDIT_TIMEOUT,
            seed: None,
        }
    }
}

#[derive(Debug, Clone)]
pub struct LocalConsortium {
    pub genesis: Genesis,
    pub members: Vec<SigningKey>,
    pub auditors: Vec<SigningKey>,
    pub authorities: Vec<SigningKey>,
    pub citizens: Vec<SigningKey>,
}

impl LocalConsortium {
    pub fn new(cfg: &LocalConfig) -> Self {
        let keys = |role: &str, n: usize| -> Vec<SigningKey> {
            (0..n)
                .map(|i| match &cfg.seed {
                    Some(s) => keygen(Some(format!("{s}/{role}/{i}").as_bytes())).0,
                    None => keygen(None).0,
                })
                .collect()
        };
        let members = keys("member", cfg.members);
        let auditors = keys("auditor", cfg.auditors);
        let authorities = keys("authority", cfg.authorities);
        let citizens = keys("citizen", cfg.citizens);
        let mut genesis = Genesis::new(cfg.chain_id.clone(), members.iter().map(SigningKey::public_key).collect());
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
        Self { genesis, members, auditors, authorities, citizens }
    }

    fn find<'a>(keys: &'a [SigningKey], pk: &PublicKey) -> Option<&'a SigningKey> {
        keys.iter().find(|k| k.public_key() == *pk)
    }

    pub fn auditor(&self, pk: &PublicKey) -> Option<&SigningKey> {
        Self::find(&self.auditors, pk)
    }

    pub fn authority(&self, pk: &PublicKey) -> Option<&SigningKey> {
        Self::find(&self.authorities, pk)
    }

    /// `genesis.json`, `keys/members/member-i.key` and
    /// `keys/<role>-i.key` for the other roles.
    pub fn write(&self, dir: &Path) -> io::Result<()> {
        let keys = dir.join("keys");
        fs::create_dir_all(keys.join("members"))?;
        for (i, k) in self.members.iter().enumerate() {
            write_key(&keys.join("members").join(format!("member-{i}.key")), k)?;
        }
        for (role, list) in [("auditor", &self.auditors), ("authority", &self.authorities), ("citizen", &self.citizens)]
        {
            for (i, k) in list.iter().enumerate() {
                write_key(&keys.join(format!("{role}-{i}.key")), k)?;
            }
        }
        fs::write(dir.join("genesis.json"), self.genesis.to_json())
    }

    pub fn gateway(&self, data_dir: &Path) -> Result<Gateway, GatewayError> {
        Gateway::open(data_dir, self.genesis.clone(), self.members.clone())
    }

    /// Serves on an ephemeral localhost port. Without `block_interval`,
    /// blocks are produced only by [`ServerHandle::step`].
    pub fn serve(&self, data_dir: &Path, block_interval: Option<Duration>) -> Result<ServerHandle, GatewayError> {
        let addr = SocketAddr::from(([127, 0, 0, 1], 0));
        ServerHandle::spawn(self.gateway(data_dir)?, addr, block_interval)
            .map_err(|e| GatewayError::Config(e.to_string()))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn seeded_consortium_is_reproducible_and_routes_every_type() {
        let cfg = LocalConfig { seed: Some("t".into()), ..Default::default() };
        let a = LocalConsortium::new(&cfg);
        let b = LocalConsortium::new(&cfg);
        assert_eq!(a.genesis, b.genesis);
        assert!(a.genesis.validate().is_ok());
        let dir = a.genesis.authority_directory();
        for t in ReportType::ALL {
            assert!(dir.entries.iter().any(|e| e.report_type == Some(t)));
        }
    }

    #[test]
    fn written_layout_round_trips() {
        let tmp = tempfile::tempdir().unwrap();
        let c = LocalConsortium::new(&LocalConfig { seed: Some("w".into()), ..Default::default() });
        c.write(tmp.path()).unwrap();
        let g = Genesis::load(&tmp.path().join("genesis.json")).unwrap();
        assert_eq!(g, c.genesis);
        let members = crate::keyfile::read_key_dir(&tmp.path().join("keys/members")).unwrap();
        assert_eq!(members.len(), 4);
        let auditor = crate::keyfile::read_key(&tmp.path().join("keys/auditor-2.key")).unwrap();
        assert_eq!(auditor.public_key(), c.auditors[2].public_key());
    }
}
