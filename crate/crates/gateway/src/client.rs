//! Blocking HTTP client. Signing and auditor selection happen here, on the
//! caller's side; the node is not trusted for either.

use std::collections::BTreeSet;
use std::sync::OnceLock;
use std::thread::sleep;
use std::time::{Duration, Instant};

use acrp_core::community::PriorityScore;
use acrp_core::hash::{sha256, Digest};
use acrp_core::keys::{PublicKey, SigningKey};
use acrp_core::ledger::{build, CommitPayload, DeletionReason, HandlingStatus, Phase, Rejection};
use acrp_core::report::{select_auditor, AuditorRegistry, DirectoryEntry, ReportId, ReportType, SignedReport};
use serde::de::DeserializeOwned;
use serde::Serialize;

use crate::api::*;

#[derive(Debug, thiserror::Error)]
pub enum ClientError {
    #[error("cannot reach node: {0}")]
    Connect(String),
    #[error("{}", .body.message)]
    Api { status: u16, body: ErrorBody },
    #[error("transaction {tx_ref} was refused by the ledger")]
    Refused { tx_ref: Hex32, code: Rejection },
    #[error("timed out waiting for {0}")]
    Timeout(String),
    #[error("{0}")]
    Local(String),
}

impl ClientError {
    /// Short code for scripts: a ledger rejection code where there is one.
    pub fn code(&self) -> String {
        match self {
            ClientError::Connect(_) => "ConnectionError".into(),
            ClientError::Api { body, .. } => body.error.clone(),
            ClientError::Refused { code, .. } => code.code().into(),
            ClientError::Timeout(_) => "Timeout".into(),
            ClientError::Local(_) => "LocalError".into(),
        }
    }

    pub fn rejection(&self) -> Option<Rejection> {
        match self {
            ClientError::Api { body, .. } => body.rejection(),
            ClientError::Refused { code, .. } => Some(*code),
            _ => None,
        }
    }

    fn local(e: impl std::fmt::Display) -> Self {
        ClientError::Local(e.to_string())
    }
}

impl From<reqwest::Error> for ClientError {
    fn from(e: reqwest::Error) -> Self {
        ClientError::Connect(e.to_string())
    }
}

impl From<BodyError> for ClientError {
    fn from(e: BodyError) -> Self {
        ClientError::Local(e.0)
    }
}

pub type ClientResult<T> = Result<T, ClientError>;

/// Filters for `GET /v1/reports`.
#[derive(Debug, Clone, Default)]
pub struct ReportFilter {
    pub phase: Option<Phase>,
    pub report_type: Option<ReportType>,
    /// `(min_lat, min_lon, max_lat, max_lon)` in degrees.
    pub bbox: Option<(f64, f64, f64, f64)>,
    pub auditor: Option<PublicKey>,
    pub page: Option<usize>,
    pub per_page: Option<usize>,
}

impl ReportFilter {
    fn query(&self) -> String {
        let mut q = Vec::new();
        if let Some(p) = self.phase {
            q.push(format!("phase={p:?}"));
        }
        if let Some(t) = self.report_type {
            q.push(format!("type={t:?}"));
        }
        if let Some((a, b, c, d)) = self.bbox {
            q.push(format!("bbox={a},{b},{c},{d}"));
        }
        if let Some(a) = self.auditor {
            q.push(format!("auditor={}", a.to_hex()));
        }
        if let Some(p) = self.page {
            q.push(format!("page={p}"));
        }
        if let Some(p) = self.per_page {
            q.push(format!("per_page={p}"));
        }
        if q.is_empty() {
            String::new()
        } else {
            format!("?{}", q.join("&"))
        }
    }
}

/// What `file_report` did on chain.
#[derive(Debug, Clone)]
pub struct Filed {
    pub id: ReportId,
    pub announce_ref: Hex32,
    pub announce_height: u64,
    pub commit_ref: Hex32,
    pub commit_height: u64,
    pub auditor: PublicKey,
    pub storage_key: Digest,
}

#[derive(Debug)]
pub struct Client {
    base: String,
    http: reqwest::blocking::Client,
    chain_id: OnceLock<String>,
    pub poll: Duration,
}

impl Client {
    pub fn new(addr: &str) -> ClientResult<Self> {
        let base = if addr.contains("://") {
            addr.trim_end_matches('/').to_string()
        } else {
            format!("http://{}", addr.trim_end_matches('/'))
        };
        let http = reqwest::blocking::Client::builder().timeout(Duration::from_secs(60)).build()?;
        Ok(Self { base, http, chain_id: OnceLock::new(), poll: Duration::from_millis(20) })
    }

    pub fn base_url(&self) -> &str {
        &self.base
    }

    fn finish<T: DeserializeOwned>(resp: reqwest::blocking::Response) -> ClientResult<T> {
        let status = resp.status();
        if status.is_success() {
            return resp.json().map_err(|e| ClientError::Local(format!("bad response body: {e}")));
        }
        let text = resp.text()?;
        let body = serde_json::from_str(&text)
            .unwrap_or(ErrorBody { error: format!("Http{}", status.as_u16()), message: text });
        Err(ClientError::Api { status: status.as_u16(), body })
    }

    fn get<T: DeserializeOwned>(&self, path: &str) -> ClientResult<T> {
        Self::finish(self.http.get(format!("{}{path}", self.base)).send()?)
    }

    fn post<B: Serialize, T: DeserializeOwned>(&self, path: &str, body: &B) -> ClientResult<T> {
        Self::finish(self.http.post(format!("{}{path}", self.base)).json(body).send()?)
    }

    pub fn chain_id(&self) -> ClientResult<String> {
        if let Some(c) = self.chain_id.get() {
            return Ok(c.clone());
        }
        let c = self.head()?.chain_id;
        Ok(self.chain_id.get_or_init(|| c).clone())
    }

    pub fn head(&self) -> ClientResult<ChainHead> {
        self.get("/v1/chain/head")
    }

    pub fn block(&self, height: u64) -> ClientResult<BlockView> {
        self.get(&format!("/v1/chain/blocks/{height}"))
    }

    pub fn consortium(&self) -> ClientResult<ConsortiumView> {
        self.get("/v1/consortium")
    }

    pub fn tx(&self, tx_ref: &Hex32) -> ClientResult<TxStatusView> {
        self.get(&format!("/v1/tx/{tx_ref}"))
    }

    pub fn report(&self, id: &ReportId) -> ClientResult<ReportView> {
        self.get(&format!("/v1/reports/{}", id.to_hex()))
    }

    pub fn reports(&self, f: &ReportFilter) -> ClientResult<ReportPage> {
        self.get(&format!("/v1/reports{}", f.query()))
    }

    pub fn duplicates(&self, id: &ReportId, threshold_m: Option<f64>) -> ClientResult<Duplicates> {
        let q = threshold_m.map(|t| format!("?threshold_m={t}")).unwrap_or_default();
        self.get(&format!("/v1/reports/{}/duplicates{q}", id.to_hex()))
    }

    pub fn ranking(&self) -> ClientResult<Vec<PriorityScore>> {
        self.get("/v1/ranking")
    }

    pub fn picture_png(&self, id: &ReportId) -> ClientResult<Vec<u8>> {
        let resp = self.http.get(format!("{}/v1/reports/{}/picture.png", self.base, id.to_hex())).send()?;
        if !resp.status().is_success() {
            return Self::finish(resp);
        }
        Ok(resp.bytes()?.to_vec())
    }

    pub fn upload(&self, bytes: &[u8]) -> ClientResult<Digest> {
        let r: UploadResponse = self.post("/v1/storage", &UploadBody { bytes: B64(bytes.to_vec()) })?;
        if r.key.0 != sha256(bytes) {
            return Err(ClientError::Local("node returned a key that is not the content hash".into()));
        }
        Ok(r.key.0)
    }

    /// Fetches an object, signing the read when `reader` is given. The bytes
    /// are checked against the key.
    pub fn fetch(&self, key: &Digest, reader: Option<&SigningKey>) -> ClientResult<Vec<u8>> {
        let mut req = self.http.get(format!("{}/v1/storage/{}", self.base, Hex32(*key)));
        if let Some(sk) = reader {
            let sig = sk.sign(&read_preimage(&self.chain_id()?, key));
            req = req.header(HDR_READER, sk.public_key().to_hex()).header(HDR_READ_SIG, hex::encode(sig.as_bytes()));
        }
        let obj: StorageObject = Self::finish(req.send()?)?;
        if sha256(&obj.bytes.0) != *key {
            return Err(ClientError::Local("stored object does not hash to its key".into()));
        }
        Ok(obj.bytes.0)
    }

    fn send<T: TxBody + Serialize>(
        &self,
        path: &str,
        sk: &SigningKey,
        report_id: Option<ReportId>,
        body: T,
    ) -> ClientResult<Hex32> {
        let req = Signed::sign(sk, &self.chain_id()?, report_id, body)?;
        let r: TxAccepted = self.post(path, &req)?;
        Ok(r.tx_ref)
    }

    fn report_path(id: &ReportId, verb: &str) -> String {
        format!("/v1/reports/{}/{verb}", id.to_hex())
    }

    pub fn announce(&self, sk: &SigningKey, id: ReportId) -> ClientResult<Hex32> {
        self.send("/v1/reports/announce", sk, Some(id), AnnounceBody { report_hash: id })
    }

    pub fn commit(&self, sk: &SigningKey, id: ReportId, body: CommitBody) -> ClientResult<Hex32> {
        self.send(&Self::report_path(&id, "commit"), sk, Some(id), body)
    }

    pub fn audit(&self, sk: &SigningKey, id: ReportId, body: AuditBody) -> ClientResult<Hex32> {
        self.send(&Self::report_path(&id, "audit"), sk, Some(id), body)
    }

    /// Forced publication of `original` after the audit timeout.
    pub fn force_publish(&self, sk: &SigningKey, original: &SignedReport) -> ClientResult<Hex32> {
        let id = original.id().map_err(ClientError::local)?;
        let fields = build::redacted_fields(original, &Default::default()).map_err(ClientError::local)?;
        let body = PublishBody { artifacts: artifacts_of(&fields) };
        self.send(&Self::report_path(&id, "publish"), sk, Some(id), body)
    }

    pub fn status(&self, sk: &SigningKey, id: ReportId, status: HandlingStatus, note: &str) -> ClientResult<Hex32> {
        let body = StatusBody { status, note: note.into() };
        self.send(&Self::report_path(&id, "status"), sk, Some(id), body)
    }

    pub fn delete(&self, sk: &SigningKey, id: ReportId, reason: DeletionReason, note: &str) -> ClientResult<Hex32> {
        let body = DeleteBody { reason, note: note.into() };
        self.send(&Self::report_path(&id, "delete"), sk, Some(id), body)
    }

    pub fn vote(&self, sk: &SigningKey, id: ReportId) -> ClientResult<Hex32> {
        self.send(&Self::report_path(&id, "vote"), sk, Some(id), VoteBody {})
    }

    pub fn comment(&self, sk: &SigningKey, id: ReportId, text: &str) -> ClientResult<Hex32> {
        let body = CommentBody { text: text.into() };
        self.send(&Self::report_path(&id, "comment"), sk, Some(id), body)
    }

    pub fn merge(&self, sk: &SigningKey, duplicate: ReportId, into: ReportId) -> ClientResult<Hex32> {
        self.send(&Self::report_path(&duplicate, "merge"), sk, Some(duplicate), MergeBody { into })
    }

    pub fn dispute(&self, sk: &SigningKey, original: &SignedReport) -> ClientResult<DisputeResponse> {
        let id = original.id().map_err(ClientError::local)?;
        let body = DisputeBody { original: B64(original.to_bytes().map_err(ClientError::local)?) };
        let req = Signed::sign(sk, &self.chain_id()?, Some(id), body)?;
        self.post(&Self::report_path(&id, "dispute"), &req)
    }

    pub fn register_auditor(&self, sk: &SigningKey, auditor: PublicKey) -> ClientResult<Hex32> {
        self.send("/v1/consortium/auditors", sk, None, RegisterAuditorBody { auditor })
    }

    pub fn register_authority(&self, sk: &SigningKey, entry: DirectoryEntry) -> ClientResult<Hex32> {
        self.send("/v1/consortium/authorities", sk, None, RegisterAuthorityBody { entry })
    }

    /// Polls until the transaction is in a block; a refusal is an error.
    pub fn wait_included(&self, tx_ref: &Hex32, timeout: Duration) -> ClientResult<u64> {
        let deadline = Instant::now() + timeout;
        loop {
            let s = self.tx(tx_ref)?;
            match (s.state, s.height, s.code) {
                (TxState::Included, Some(h), _) => return Ok(h),
                (TxState::Rejected, _, Some(code)) => return Err(ClientError::Refused { tx_ref: *tx_ref, code }),
                _ if Instant::now() >= deadline => return Err(ClientError::Timeout(format!("transaction {tx_ref}"))),
                _ => sleep(self.poll),
            }
        }
    }

    /// Polls until the chain holds at least `blocks` blocks.
    pub fn wait_blocks(&self, blocks: u64, timeout: Duration) -> ClientResult<ChainHead> {
        let deadline = Instant::now() + timeout;
        loop {
            let head = self.head()?;
            if head.height >= blocks {
                return Ok(head);
            }
            if Instant::now() >= deadline {
                return Err(ClientError::Timeout(format!("block {}", blocks - 1)));
            }
            sleep(self.poll);
        }
    }

    /// Recomputes the auditor draw from public chain data.
    pub fn select_auditor(&self, id: &ReportId, announce_height: u64) -> ClientResult<(usize, PublicKey)> {
        let beacon = self.block(announce_height + 1)?.block_hash;
        let registry = AuditorRegistry { auditors: self.consortium()?.auditors }.active_at(announce_height);
        select_auditor(id, &beacon.0, &registry).map_err(ClientError::local)
    }

    /// Announce, wait for the beacon block, pick the auditor locally, commit,
    /// upload the bundle. Nothing is uploaded unless the commit landed.
    pub fn file_report(&self, sk: &SigningKey, signed: &SignedReport, timeout: Duration) -> ClientResult<Filed> {
        let id = signed.id().map_err(ClientError::local)?;
        let bundle = signed.to_bytes().map_err(ClientError::local)?;
        let commitments = signed.commitments().map_err(ClientError::local)?;

        let announce_ref = self.announce(sk, id)?;
        let announce_height = self.wait_included(&announce_ref, timeout)?;
        self.wait_blocks(announce_height + 2, timeout)?;
        let (index, auditor) = self.select_auditor(&id, announce_height)?;

        let storage_key = sha256(&bundle);
        let body = CommitBody::new(&CommitPayload {
            report_type: signed.report.report_type,
            auditor_index: index as u32,
            commitments,
            storage_key,
        });
        let commit_ref = self.commit(sk, id, body)?;
        let commit_height = self.wait_included(&commit_ref, timeout)?;
        self.upload(&bundle)?;
        Ok(Filed { id, announce_ref, announce_height, commit_ref, commit_height, auditor, storage_key })
    }

    /// The original bundle, read with `sk`'s authority and checked against
    /// the announced id.
    pub fn original(&self, sk: &SigningKey, id: &ReportId) -> ClientResult<SignedReport> {
        let view = self.report(id)?;
        let commit = view.commit.ok_or_else(|| ClientError::Local("report has no commit yet".into()))?;
        let bytes = self.fetch(&commit.storage_key.0, Some(sk))?;
        let signed = SignedReport::from_bytes(&bytes).map_err(ClientError::local)?;
        if signed.id().ok().as_ref() != Some(id) {
            return Err(ClientError::Local("stored bundle is not the announced report".into()));
        }
        Ok(signed)
    }

    /// Publishes the original with `redact[f]` removed from field `f`.
    pub fn approve(&self, sk: &SigningKey, id: &ReportId, redact: &[BTreeSet<usize>; 3]) -> ClientResult<Hex32> {
        let signed = self.original(sk, id)?;
        let fields = build::redacted_fields(&signed, redact).map_err(ClientError::local)?;
        self.audit(sk, *id, AuditBody::publish(&fields))
    }
}
