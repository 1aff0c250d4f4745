//! HTTP service in front of an in-process consortium and its object store.
//!
//! All mutations go through one mutex-guarded [`Gateway`]: a request is
//! dry-run against the current state plus the queued transactions, so ledger
//! refusals come back as HTTP errors right away, then gossiped to every
//! member's mempool. A background task produces blocks on a fixed interval.

use std::future::Future;
use std::net::SocketAddr;
use std::path::{Path, PathBuf};
use std::sync::{Arc, Mutex, MutexGuard};
use std::time::Duration;

use acrp_core::chunking::{render_published_picture, render_redacted_text};
use acrp_core::community::{find_duplicates, priority_ranking};
use acrp_core::hash::{digest_from_hex, Digest};
use acrp_core::keys::{PublicKey, Signature, SigningKey, SIGNATURE_LEN};
use acrp_core::ledger::{
    write_chain_dir, ChainError, Genesis, LedgerState, Network, Phase, Rejection, ReportRecord, Transaction, TxStatus,
};
use acrp_core::report::{Location, ReportId, ReportType};
use acrp_core::storage::{retain_set, ObjectStore, StorageError, MAX_OBJECT_LEN};
use axum::extract::{DefaultBodyLimit, FromRequest, Path as UrlPath, Query, Request, State};
use axum::http::{header, HeaderMap, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use serde::de::DeserializeOwned;
use serde::Deserialize;
use tokio::sync::oneshot;

use crate::api::*;
use crate::photo::encode_png;

#[derive(Debug, thiserror::Error)]
pub enum GatewayError {
    #[error(transparent)]
    Chain(#[from] ChainError),
    #[error(transparent)]
    Storage(#[from] StorageError),
    #[error("{0}")]
    Config(String),
}

/// The consortium, its chain directory and the object store.
#[derive(Debug)]
pub struct Gateway {
    net: Network,
    store: ObjectStore,
    chain_dir: PathBuf,
    saved: usize,
}

impl Gateway {
    /// Opens `data_dir`, restoring the chain under `data_dir/chain` when one
    /// exists. `keys` must include every genesis member, in any order.
    pub fn open(data_dir: &Path, genesis: Genesis, keys: Vec<SigningKey>) -> Result<Self, GatewayError> {
        let mut ordered = Vec::with_capacity(genesis.members.len());
        for m in &genesis.members {
            let k = keys
                .iter()
                .find(|k| k.public_key() == *m)
                .ok_or_else(|| GatewayError::Config(format!("no key for consortium member {m}")))?;
            ordered.push(k.clone());
        }
        let chain_dir = data_dir.join("chain");
        let net = if chain_dir.join("genesis.json").exists() {
            let net = Network::open(&chain_dir, ordered)?;
            if *net.node(0).genesis() != genesis {
                return Err(GatewayError::Config(format!(
                    "{} holds a chain with a different genesis",
                    chain_dir.display()
                )));
            }
            net
        } else {
            write_chain_dir(&chain_dir, &genesis, &[])?;
            Network::new(genesis, ordered)
        };
        let saved = net.node(0).blocks().len();
        let store = ObjectStore::open(data_dir.join("objects"))?;
        Ok(Self { net, store, chain_dir, saved })
    }

    pub fn network(&self) -> &Network {
        &self.net
    }

    pub fn state(&self) -> &LedgerState {
        self.net.state()
    }

    pub fn store(&self) -> &ObjectStore {
        &self.store
    }

    pub fn chain_dir(&self) -> &Path {
        &self.chain_dir
    }

    pub fn chain_id(&self) -> &str {
        &self.state().chain_id
    }

    /// Produces the next block and appends it to the chain directory.
    pub fn produce_block(&mut self) -> Result<u64, GatewayError> {
        let h = self.net.step().height();
        let node = self.net.node(0);
        write_chain_dir(&self.chain_dir, node.genesis(), &node.blocks()[self.saved..])?;
        self.saved = node.blocks().len();
        Ok(h)
    }

    /// The state the next block would reach with `tx` appended.
    pub fn dry_run(&self, tx: &Transaction) -> Result<LedgerState, Rejection> {
        let mut s = self.state().clone();
        for queued in self.net.node(0).mempool() {
            let _ = s.apply_tx(queued);
        }
        s.apply_tx(tx)?;
        Ok(s)
    }

    /// Deletes stored objects no live report references, including uploads
    /// whose commit has not been included yet.
    pub fn collect_garbage(&mut self) -> Result<usize, StorageError> {
        let keep = retain_set(self.net.state());
        self.store.gc(&keep)
    }

    pub fn submit(&mut self, tx: Transaction) -> Result<Digest, Rejection> {
        self.dry_run(&tx)?;
        self.net.broadcast(tx)
    }
}

pub type Shared = Arc<Mutex<Gateway>>;

pub fn lock(g: &Shared) -> MutexGuard<'_, Gateway> {
    g.lock().unwrap_or_else(|e| e.into_inner())
}

#[derive(Debug)]
pub struct ApiError {
    status: StatusCode,
    body: ErrorBody,
}

impl ApiError {
    fn new(status: StatusCode, error: &str, message: impl Into<String>) -> Self {
        Self { status, body: ErrorBody { error: error.into(), message: message.into() } }
    }

    fn bad_request(message: impl Into<String>) -> Self {
        Self::new(StatusCode::BAD_REQUEST, "Malformed", message)
    }

    fn not_found(message: impl Into<String>) -> Self {
        Self::new(StatusCode::NOT_FOUND, "NotFound", message)
    }

    fn forbidden(message: impl Into<String>) -> Self {
        Self::new(StatusCode::FORBIDDEN, "Forbidden", message)
    }

    fn internal(message: impl Into<String>) -> Self {
        Self::new(StatusCode::INTERNAL_SERVER_ERROR, "Internal", message)
    }
}

impl From<Rejection> for ApiError {
    fn from(r: Rejection) -> Self {
        let status = StatusCode::from_u16(status_for(r)).expect("valid status");
        Self::new(status, r.code(), r.to_string())
    }
}

impl From<BodyError> for ApiError {
    fn from(e: BodyError) -> Self {
        Self::new(StatusCode::BAD_REQUEST, Rejection::MalformedPayload.code(), e.0)
    }
}

impl From<StorageError> for ApiError {
    fn from(e: StorageError) -> Self {
        match e {
            StorageError::TooLarge(_) => Self::new(StatusCode::PAYLOAD_TOO_LARGE, "TooLarge", e.to_string()),
            _ => Self::internal(e.to_string()),
        }
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        (self.status, Json(self.body)).into_response()
    }
}

type ApiResult<T> = Result<Json<T>, ApiError>;

/// `Json` whose rejection uses the API error shape.
struct Body<T>(T);

impl<S: Send + Sync, T: DeserializeOwned> FromRequest<S> for Body<T> {
    type Rejection = ApiError;

    async fn from_request(req: Request, state: &S) -> Result<Self, ApiError> {
        match Json::<T>::from_request(req, state).await {
            Ok(Json(v)) => Ok(Body(v)),
            Err(e) => Err(ApiError::new(StatusCode::BAD_REQUEST, Rejection::MalformedPayload.code(), e.body_text())),
        }
    }
}

fn parse_id(s: &str) -> Result<ReportId, ApiError> {
    ReportId::from_hex(s).ok_or_else(|| ApiError::bad_request(format!("not a report id: {s:?}")))
}

fn record<'a>(state: &'a LedgerState, id: &ReportId) -> Result<&'a ReportRecord, ApiError> {
    state.report(id).ok_or_else(|| Rejection::UnknownReport.into())
}

async fn announce(State(g): State<Shared>, Body(req): Body<Signed<AnnounceBody>>) -> ApiResult<TxAccepted> {
    let tx = req.transaction(Some(req.body.report_hash))?;
    let tx_ref = lock(&g).submit(tx)?;
    Ok(Json(TxAccepted { tx_ref: Hex32(tx_ref) }))
}

async fn mutate<T: TxBody + DeserializeOwned + Send + 'static>(
    State(g): State<Shared>,
    UrlPath(id): UrlPath<String>,
    Body(req): Body<Signed<T>>,
) -> ApiResult<TxAccepted> {
    let tx = req.transaction(Some(parse_id(&id)?))?;
    let tx_ref = lock(&g).submit(tx)?;
    Ok(Json(TxAccepted { tx_ref: Hex32(tx_ref) }))
}

async fn register<T: TxBody + DeserializeOwned + Send + 'static>(
    State(g): State<Shared>,
    Body(req): Body<Signed<T>>,
) -> ApiResult<TxAccepted> {
    let tx = req.transaction(None)?;
    let tx_ref = lock(&g).submit(tx)?;
    Ok(Json(TxAccepted { tx_ref: Hex32(tx_ref) }))
}

async fn comment(
    State(g): State<Shared>,
    UrlPath(id): UrlPath<String>,
    Body(req): Body<Signed<CommentBody>>,
) -> ApiResult<TxAccepted> {
    let tx = req.transaction(Some(parse_id(&id)?))?;
    let mut gw = lock(&g);
    gw.dry_run(&tx)?;
    gw.store.put(req.body.text.as_bytes())?;
    let tx_ref = gw.submit(tx)?;
    Ok(Json(TxAccepted { tx_ref: Hex32(tx_ref) }))
}

async fn dispute(
    State(g): State<Shared>,
    UrlPath(id): UrlPath<String>,
    Body(req): Body<Signed<DisputeBody>>,
) -> ApiResult<DisputeResponse> {
    let id = parse_id(&id)?;
    let tx = req.transaction(Some(id))?;
    let mut gw = lock(&g);
    let after = gw.dry_run(&tx)?;
    let outcome = record(&after, &id)?
        .disputes
        .last()
        .map(|d| d.outcome.clone())
        .ok_or_else(|| ApiError::internal("dispute left no record"))?;
    let tx_ref = gw.submit(tx)?;
    Ok(Json(DisputeResponse {
        tx_ref: Hex32(tx_ref),
        verdict: outcome.verdict,
        redacted: outcome.redacted,
        altered: outcome.altered,
    }))
}

async fn upload(State(g): State<Shared>, Body(req): Body<UploadBody>) -> ApiResult<UploadResponse> {
    let key = lock(&g).store.put(&req.bytes.0)?;
    Ok(Json(UploadResponse { key: Hex32(key) }))
}

/// Comment texts are public. An original bundle is readable by its citizen
/// and its assigned auditor, and by anyone once the citizen disputed with
/// it. Anything else stays closed.
fn may_read(state: &LedgerState, key: &Digest, headers: &HeaderMap) -> Result<(), ApiError> {
    if state.reports.values().any(|r| r.comments.contains(key)) {
        return Ok(());
    }
    let owners: Vec<&ReportRecord> =
        state.reports.values().filter(|r| r.commit.as_ref().is_some_and(|c| c.storage_key == *key)).collect();
    if owners.iter().any(|r| !r.disputes.is_empty()) {
        return Ok(());
    }
    let reader = headers.get(HDR_READER).and_then(|v| v.to_str().ok()).and_then(PublicKey::from_hex);
    let sig = headers
        .get(HDR_READ_SIG)
        .and_then(|v| v.to_str().ok())
        .and_then(|v| hex::decode(v).ok())
        .and_then(|v| <[u8; SIGNATURE_LEN]>::try_from(v).ok());
    let (Some(reader), Some(sig)) = (reader, sig) else {
        return Err(ApiError::forbidden("object is access-controlled; sign the read request"));
    };
    if !reader.verify(&read_preimage(&state.chain_id, key), &Signature(sig)) {
        return Err(Rejection::BadSignature.into());
    }
    let allowed =
        owners.iter().any(|r| r.announcer == reader || r.commit.as_ref().is_some_and(|c| c.auditor == reader));
    if allowed {
        Ok(())
    } else {
        Err(ApiError::forbidden("reader is neither the citizen nor the assigned auditor"))
    }
}

async fn fetch(State(g): State<Shared>, UrlPath(key): UrlPath<String>, headers: HeaderMap) -> ApiResult<StorageObject> {
    let key = digest_from_hex(&key).ok_or_else(|| ApiError::bad_request("storage key must be 64 hex digits"))?;
    let gw = lock(&g);
    let bytes = gw.store.get(&key)?.ok_or_else(|| ApiError::not_found("no such object"))?;
    may_read(gw.state(), &key, &headers)?;
    Ok(Json(StorageObject { key: Hex32(key), bytes: B64(bytes) }))
}

#[derive(Debug, Default, Deserialize)]
struct ListParams {
    phase: Option<String>,
    #[serde(rename = "type")]
    report_type: Option<String>,
    /// `min_lat,min_lon,max_lat,max_lon` in degrees.
    bbox: Option<String>,
    auditor: Option<String>,
    page: Option<usize>,
    per_page: Option<usize>,
}

fn parse_bbox(s: &str) -> Result<(Location, Location), ApiError> {
    let v: Vec<f64> = s
        .split(',')
        .map(|x| x.trim().parse::<f64>())
        .collect::<Result<_, _>>()
        .map_err(|_| ApiError::bad_request("bbox must be four numbers"))?;
    let [a, b, c, d] = v[..] else {
        return Err(ApiError::bad_request("bbox must be four numbers"));
    };
    let lo = Location::from_degrees(a, b).map_err(|e| ApiError::bad_request(e.to_string()))?;
    let hi = Location::from_degrees(c, d).map_err(|e| ApiError::bad_request(e.to_string()))?;
    Ok((lo, hi))
}

pub fn parse_phase(s: &str) -> Option<Phase> {
    serde_json::from_value(serde_json::Value::String(s.into())).ok()
}

fn summary(r: &ReportRecord) -> ReportSummary {
    ReportSummary {
        id: r.id,
        phase: r.phase,
        announce_height: r.announce_height,
        report_type: r.report_type(),
        auditor: r.commit.as_ref().map(|c| c.auditor),
        authority: r.authority(),
        location: r.location(),
        score: r.score(),
    }
}

async fn list_reports(State(g): State<Shared>, Query(q): Query<ListParams>) -> ApiResult<ReportPage> {
    let phase = q
        .phase
        .as_deref()
        .map(|p| parse_phase(p).ok_or_else(|| ApiError::bad_request(format!("unknown phase {p:?}"))))
        .transpose()?;
    let report_type =
        q.report_type.as_deref().map(|t| t.parse::<ReportType>().map_err(ApiError::bad_request)).transpose()?;
    let bbox = q.bbox.as_deref().map(parse_bbox).transpose()?;
    let auditor = q
        .auditor
        .as_deref()
        .map(|a| PublicKey::from_hex(a).ok_or_else(|| ApiError::bad_request("auditor must be a hex public key")))
        .transpose()?;
    let per_page = q.per_page.unwrap_or(50).clamp(1, 500);
    let page = q.page.unwrap_or(0);

    let gw = lock(&g);
    let matching: Vec<ReportSummary> = gw
        .state()
        .reports
        .values()
        .filter(|r| phase.is_none_or(|p| r.phase == p))
        .filter(|r| report_type.is_none_or(|t| r.report_type() == Some(t)))
        .filter(|r| auditor.is_none_or(|a| r.commit.as_ref().is_some_and(|c| c.auditor == a)))
        .filter(|r| {
            bbox.is_none_or(|(lo, hi)| {
                r.location().is_some_and(|l| {
                    (lo.lat_micro..=hi.lat_micro).contains(&l.lat_micro)
                        && (lo.lon_micro..=hi.lon_micro).contains(&l.lon_micro)
                })
            })
        })
        .map(summary)
        .collect();
    let total = matching.len();
    let items = matching.into_iter().skip(page * per_page).take(per_page).collect();
    Ok(Json(ReportPage { items, page, per_page, total }))
}

const REDACTED_WORD: &str = "[redacted] ";

fn view(r: &ReportRecord, store: &ObjectStore) -> ReportView {
    ReportView {
        id: r.id,
        phase: r.phase,
        announcer: r.announcer,
        announce_height: r.announce_height,
        report_type: r.report_type(),
        score: r.score(),
        votes: r.votes,
        merged_votes: r.merged_votes,
        merged_into: r.merged_into,
        merged_from: r.merged_from.clone(),
        commit: r.commit.as_ref().map(|c| CommitView {
            height: c.height,
            auditor_index: c.auditor_index,
            auditor: c.auditor,
            beacon: Hex32(c.beacon),
            storage_key: Hex32(c.storage_key),
            commitments: c
                .commitments
                .iter()
                .map(|s| CommitmentView {
                    n: s.n,
                    root: Hex32(s.root),
                    signer_pk: s.signer_pk,
                    encoded: B64(commitment_bytes(s)),
                })
                .collect(),
        }),
        audit: r.audit.as_ref().map(|a| AuditView {
            height: a.height,
            outcome: a.outcome,
            note: a.note.clone(),
            redacted: a.redacted.clone(),
        }),
        publication: r.publication.as_ref().map(|p| PublicationView {
            height: p.height,
            location: p.location,
            authority: p.authority,
            description: render_redacted_text(&p.fields[2], REDACTED_WORD),
            picture_png: format!("/v1/reports/{}/picture.png", r.id.to_hex()),
            artifacts: artifacts_of(&p.fields),
        }),
        deletion: r.deletion.as_ref().map(|d| DeletionView {
            height: d.height,
            reason: d.reason,
            note: d.note.clone(),
            by: d.by,
        }),
        comments: r
            .comments
            .iter()
            .map(|d| CommentView {
                digest: Hex32(*d),
                text: store.get(d).ok().flatten().and_then(|b| String::from_utf8(b).ok()),
            })
            .collect(),
        disputes: r
            .disputes
            .iter()
            .map(|d| DisputeView {
                height: d.height,
                verdict: d.outcome.verdict,
                redacted: d.outcome.redacted.clone(),
                altered: d.outcome.altered.clone(),
            })
            .collect(),
        history: r
            .history
            .iter()
            .map(|h| HistoryView { height: h.height, sender: h.sender, event: event_label(&h.event) })
            .collect(),
    }
}

async fn get_report(State(g): State<Shared>, UrlPath(id): UrlPath<String>) -> ApiResult<ReportView> {
    let id = parse_id(&id)?;
    let gw = lock(&g);
    Ok(Json(view(record(gw.state(), &id)?, &gw.store)))
}

async fn picture(State(g): State<Shared>, UrlPath(id): UrlPath<String>) -> Result<Response, ApiError> {
    let id = parse_id(&id)?;
    let field = {
        let gw = lock(&g);
        let rec = record(gw.state(), &id)?;
        let p = rec.publication.as_ref().ok_or_else(|| ApiError::not_found("report is not published"))?;
        p.fields[1].clone()
    };
    let img = render_published_picture(&field).map_err(|e| ApiError::not_found(e.to_string()))?;
    let png = encode_png(&img).map_err(|e| ApiError::internal(e.to_string()))?;
    Ok(([(header::CONTENT_TYPE, "image/png")], png).into_response())
}

#[derive(Debug, Deserialize)]
struct DuplicateParams {
    threshold_m: Option<f64>,
}

async fn duplicates(
    State(g): State<Shared>,
    UrlPath(id): UrlPath<String>,
    Query(q): Query<DuplicateParams>,
) -> ApiResult<Duplicates> {
    let id = parse_id(&id)?;
    let threshold = q.threshold_m.unwrap_or(DUPLICATES_DEFAULT_M);
    if !threshold.is_finite() || threshold < 0.0 {
        return Err(ApiError::bad_request("threshold_m must be a non-negative number"));
    }
    let gw = lock(&g);
    let found = find_duplicates(gw.state(), &id, threshold).map_err(|_| Rejection::UnknownReport)?;
    Ok(Json(found))
}

async fn ranking(State(g): State<Shared>) -> ApiResult<Vec<acrp_core::community::PriorityScore>> {
    Ok(Json(priority_ranking(lock(&g).state())))
}

fn head_of(gw: &Gateway) -> ChainHead {
    let s = gw.state();
    ChainHead {
        chain_id: s.chain_id.clone(),
        height: s.height,
        head_hash: s.block_hashes.last().copied().map(Hex32),
        genesis_hash: Hex32(s.genesis_hash),
        timestamp: s.last_timestamp,
        audit_timeout: s.audit_timeout,
    }
}

async fn chain_head(State(g): State<Shared>) -> ApiResult<ChainHead> {
    Ok(Json(head_of(&lock(&g))))
}

async fn chain_block(State(g): State<Shared>, UrlPath(height): UrlPath<String>) -> ApiResult<BlockView> {
    let height: u64 = height.parse().map_err(|_| ApiError::bad_request("height must be a number"))?;
    let gw = lock(&g);
    let b = gw
        .net
        .node(0)
        .blocks()
        .get(height as usize)
        .ok_or_else(|| ApiError::not_found(format!("no block at height {height}")))?;
    Ok(Json(BlockView {
        height: b.header.height,
        prev_hash: Hex32(b.header.prev_hash),
        producer: b.header.producer,
        timestamp: b.header.timestamp,
        tx_root: Hex32(b.header.tx_root),
        block_hash: Hex32(b.block_hash),
        txs: b
            .txs
            .iter()
            .map(|t| TxView { tx_ref: Hex32(t.hash()), kind: t.kind, report_id: t.report_id, sender: t.sender_pk })
            .collect(),
        bytes: B64(b.to_bytes()),
    }))
}

async fn tx_status(State(g): State<Shared>, UrlPath(r): UrlPath<String>) -> ApiResult<TxStatusView> {
    let h = digest_from_hex(&r).ok_or_else(|| ApiError::bad_request("tx ref must be 64 hex digits"))?;
    let (state, height, code) = match lock(&g).net.tx_status(&h) {
        TxStatus::Included(at) => (TxState::Included, Some(at), None),
        TxStatus::Rejected(at, c) => (TxState::Rejected, Some(at), Some(c)),
        TxStatus::Pending => (TxState::Pending, None, None),
        TxStatus::Unknown => (TxState::Unknown, None, None),
    };
    Ok(Json(TxStatusView { tx_ref: Hex32(h), state, height, code }))
}

async fn consortium(State(g): State<Shared>) -> ApiResult<ConsortiumView> {
    let gw = lock(&g);
    let s = gw.state();
    Ok(Json(ConsortiumView {
        chain_id: s.chain_id.clone(),
        members: s.members.clone(),
        auditors: s.auditors.auditors.clone(),
        directory: s.directory.entries.clone(),
        audit_timeout: s.audit_timeout,
    }))
}

pub fn router(g: Shared) -> Router {
    Router::new()
        .route("/v1/reports", get(list_reports))
        .route("/v1/reports/announce", post(announce))
        .route("/v1/reports/{id}", get(get_report))
        .route("/v1/reports/{id}/picture.png", get(picture))
        .route("/v1/reports/{id}/duplicates", get(duplicates))
        .route("/v1/reports/{id}/commit", post(mutate::<CommitBody>))
        .route("/v1/reports/{id}/audit", post(mutate::<AuditBody>))
        .route("/v1/reports/{id}/publish", post(mutate::<PublishBody>))
        .route("/v1/reports/{id}/status", post(mutate::<StatusBody>))
        .route("/v1/reports/{id}/delete", post(mutate::<DeleteBody>))
        .route("/v1/reports/{id}/vote", post(mutate::<VoteBody>))
        .route("/v1/reports/{id}/merge", post(mutate::<MergeBody>))
        .route("/v1/reports/{id}/comment", post(comment))
        .route("/v1/reports/{id}/dispute", post(dispute))
        .route("/v1/ranking", get(ranking))
        .route("/v1/storage", post(upload))
        .route("/v1/storage/{key}", get(fetch))
        .route("/v1/chain/head", get(chain_head))
        .route("/v1/chain/blocks/{height}", get(chain_block))
        .route("/v1/tx/{tx_ref}", get(tx_status))
        .route("/v1/consortium", get(consortium))
        .route("/v1/consortium/auditors", post(register::<RegisterAuditorBody>))
        .route("/v1/consortium/authorities", post(register::<RegisterAuthorityBody>))
        // Base64 inflates an object by a third.
        .layer(DefaultBodyLimit::max(MAX_OBJECT_LEN / 3 * 4 + 64 * 1024))
        .with_state(g)
}

async fn produce_blocks(g: Shared, every: Duration) {
    let mut tick = tokio::time::interval(every);
    tick.set_missed_tick_behavior(tokio::time::MissedTickBehavior::Delay);
    tick.tick().await;
    loop {
        tick.tick().await;
        let res = lock(&g).produce_block();
        match res {
            Ok(h) => tracing::debug!(height = h, "block produced"),
            Err(e) => tracing::error!("block production failed: {e}"),
        }
    }
}

/// Serves until `shutdown` resolves. With `block_interval` unset no blocks
/// are produced automatically.
pub async fn serve(
    g: Shared,
    listener: tokio::net::TcpListener,
    block_interval: Option<Duration>,
    shutdown: impl Future<Output = ()> + Send + 'static,
) -> std::io::Result<()> {
    let producer = block_interval.map(|every| tokio::spawn(produce_blocks(g.clone(), every)));
    let res = axum::serve(listener, router(g)).with_graceful_shutdown(shutdown).await;
    if let Some(p) = producer {
        p.abort();
    }
    res
}

/// A server on its own runtime thread, for tests, examples and tools that
/// drive the API with the blocking client.
#[derive(Debug)]
pub struct ServerHandle {
    pub addr: SocketAddr,
    gateway: Shared,
    stop: Option<oneshot::Sender<()>>,
    thread: Option<std::thread::JoinHandle<()>>,
}

impl ServerHandle {
    pub fn spawn(gateway: Gateway, addr: SocketAddr, block_interval: Option<Duration>) -> std::io::Result<Self> {
        let std_listener = std::net::TcpListener::bind(addr)?;
        std_listener.set_nonblocking(true)?;
        let addr = std_listener.local_addr()?;
        let shared: Shared = Arc::new(Mutex::new(gateway));
        let (stop, stopped) = oneshot::channel::<()>();
        let g = shared.clone();
        let rt = tokio::runtime::Builder::new_multi_thread().worker_threads(2).enable_all().build()?;
        let thread = std::thread::spawn(move || {
            rt.block_on(async move {
                let listener = tokio::net::TcpListener::from_std(std_listener).expect("listener");
                let shutdown = async {
                    let _ = stopped.await;
                };
                if let Err(e) = serve(g, listener, block_interval, shutdown).await {
                    tracing::error!("server stopped: {e}");
                }
            });
        });
        Ok(Self { addr, gateway: shared, stop: Some(stop), thread: Some(thread) })
    }

    pub fn url(&self) -> String {
        format!("http://{}", self.addr)
    }

    pub fn gateway(&self) -> &Shared {
        &self.gateway
    }

    /// Produces one block now.
    pub fn step(&self) -> u64 {
        lock(&self.gateway).produce_block().expect("block persisted")
    }

    pub fn run(&self, blocks: u64) {
        for _ in 0..blocks {
            self.step();
        }
    }

    pub fn stop(mut self) {
        self.shutdown();
    }

    fn shutdown(&mut self) {
        if let Some(s) = self.stop.take() {
            let _ = s.send(());
        }
        if let Some(t) = self.thread.take() {
            let _ = t.join();
        }
    }
}

impl Drop for ServerHandle {
    fn drop(&mut self) {
        self.shutdown();
    }
}
