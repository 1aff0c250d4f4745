use std::collections::BTreeSet;
use std::fs;
use std::net::SocketAddr;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::sync::{Arc, Mutex};
use std::time::Duration;

use acrp_core::chunking::{cell_chunk, ChunkingScheme, Rect};
use acrp_core::keys::{keygen, SigningKey};
use acrp_core::ledger::{
    load_chain_dir, validate_chain_bytes, ChainError, DeletionReason, Genesis, HandlingStatus, Phase, RejectReason,
};
use acrp_core::report::{Location, Picture, Report, ReportId, ReportType, SignedReport};
use acrp_gateway::api::{AuditBody, Hex32};
use acrp_gateway::client::{Client, ClientError, ReportFilter};
use acrp_gateway::keyfile::{read_key, read_key_dir, write_key};
use acrp_gateway::local::{LocalConfig, LocalConsortium};
use acrp_gateway::photo::decode_png;
use acrp_gateway::server::{parse_phase, serve, Gateway};
use anyhow::{anyhow, bail, Context};
use clap::{Args, Parser, Subcommand};
use serde::Serialize;

#[derive(Parser)]
#[command(name = "acrp", version, about = "Accountable city reports: node, citizen, auditor and authority tools")]
struct Cli {
    /// Gateway address.
    #[arg(long, global = true, env = "ACRP_NODE_ADDR", default_value = "http://127.0.0.1:7878")]
    node: String,
    /// Secret key file used to sign requests.
    #[arg(long, global = true, env = "ACRP_KEY_FILE")]
    key: Option<PathBuf>,
    /// Seconds to wait for a transaction to land in a block.
    #[arg(long, global = true, default_value_t = 60)]
    wait_secs: u64,
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Writes a new secret key and prints its public key.
    Keygen {
        #[arg(long)]
        out: PathBuf,
        /// Derive the key from a seed instead of the OS RNG.
        #[arg(long)]
        seed: Option<String>,
    },
    /// Creates keys and a genesis file for a local consortium.
    Init(InitArgs),
    #[command(subcommand)]
    Node(NodeCmd),
    #[command(subcommand)]
    Citizen(CitizenCmd),
    #[command(subcommand)]
    Auditor(AuditorCmd),
    #[command(subcommand)]
    Authority(AuthorityCmd),
    /// Publishes an unaudited report after the audit timeout.
    Publish {
        #[arg(long)]
        original: PathBuf,
    },
    #[command(subcommand)]
    Inspect(InspectCmd),
    /// Replays a chain directory from genesis; exits 1 at the first invalid block.
    Verify {
        #[arg(long)]
        chain: PathBuf,
    },
}

#[derive(Args)]
struct InitArgs {
    #[arg(long)]
    dir: PathBuf,
    #[arg(long, default_value = "acrp-local")]
    chain_id: String,
    #[arg(long, default_value_t = 4)]
    members: usize,
    #[arg(long, default_value_t = 3)]
    auditors: usize,
    /// One catch-all authority if 1; otherwise type `t` goes to authority `t mod n`.
    #[arg(long, default_value_t = 2)]
    authorities: usize,
    #[arg(long, default_value_t = 1)]
    citizens: usize,
    #[arg(long, default_value_t = acrp_core::ledger::DEFAULT_AUDIT_TIMEOUT)]
    audit_timeout: u64,
    /// Derive every key from this seed.
    #[arg(long)]
    seed: Option<String>,
}

#[derive(Subcommand)]
enum NodeCmd {
    /// Runs the whole consortium in one process behind the HTTP API.
    Run {
        #[arg(long, env = "ACRP_GENESIS")]
        genesis: PathBuf,
        /// Directory of member `*.key` files.
        #[arg(long)]
        keys_dir: PathBuf,
        #[arg(long, default_value = "acrp-data")]
        data: PathBuf,
        #[arg(long, default_value = "127.0.0.1:7878")]
        listen: SocketAddr,
        #[arg(long, default_value_t = 1000)]
        block_ms: u64,
    },
}

#[derive(Subcommand)]
enum CitizenCmd {
    /// Signs a report, announces it, commits it and uploads the bundle.
    File {
        #[arg(long = "type")]
        report_type: ReportType,
        #[arg(long, allow_hyphen_values = true)]
        lat: f64,
        #[arg(long, allow_hyphen_values = true)]
        lon: f64,
        /// PNG photo.
        #[arg(long)]
        photo: PathBuf,
        #[arg(long)]
        desc: String,
        /// Grid chunking, `ROWSxCOLS`.
        #[arg(long, conflicts_with = "regions")]
        grid: Option<String>,
        /// Object chunking: JSON list of `{x, y, w, h}` rectangles.
        #[arg(long)]
        regions: Option<PathBuf>,
        /// Where to keep the signed original; defaults to `<id>.report`.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Compares the published report with the signed original.
    Dispute {
        #[arg(long)]
        report: Option<ReportId>,
        #[arg(long)]
        original: PathBuf,
    },
    Vote {
        #[arg(long)]
        report: ReportId,
    },
    Comment {
        #[arg(long)]
        report: ReportId,
        #[arg(long)]
        text: String,
    },
}

#[derive(Subcommand)]
enum AuditorCmd {
    /// Committed reports assigned to this key.
    Pending,
    /// Approves (optionally redacting) or rejects a report.
    Decide {
        #[arg(long)]
        report: ReportId,
        /// `FIELD=i,j,...` with FIELD one of location, picture, description.
        /// Picture indices are cell numbers in row-major order.
        #[arg(long, conflicts_with = "reject")]
        redact: Vec<String>,
        /// low-quality, forged, spam or illicit-content.
        #[arg(long)]
        reject: Option<RejectReason>,
        #[arg(long, default_value = "")]
        note: String,
    },
}

#[derive(Subcommand)]
enum AuthorityCmd {
    Update {
        #[arg(long)]
        report: ReportId,
        /// acknowledged, in-progress or resolved.
        #[arg(long)]
        status: HandlingStatus,
        #[arg(long, default_value = "")]
        note: String,
    },
    Delete {
        #[arg(long)]
        report: ReportId,
        /// not-actionable, illicit-content or duplicate.
        #[arg(long)]
        reason: DeletionReason,
        #[arg(long, default_value = "")]
        note: String,
    },
    /// Folds a duplicate into another report.
    Merge {
        #[arg(long)]
        report: ReportId,
        #[arg(long)]
        into: ReportId,
    },
}

#[derive(Subcommand)]
enum InspectCmd {
    Chain {
        /// Also print this block.
        #[arg(long)]
        block: Option<u64>,
    },
    Report {
        id: ReportId,
    },
    Reports {
        #[arg(long)]
        phase: Option<String>,
        #[arg(long = "type")]
        report_type: Option<ReportType>,
    },
    Ranking,
    Consortium,
    Tx {
        tx_ref: String,
    },
}

fn parse_grid(s: &str) -> anyhow::Result<ChunkingScheme> {
    let (r, c) = s.split_once(['x', 'X']).ok_or_else(|| anyhow!("grid must look like 4x4"))?;
    Ok(ChunkingScheme::grid(r.trim().parse()?, c.trim().parse()?))
}

/// `picture=1,2` style selections, indexed by signed field.
fn parse_redactions(specs: &[String]) -> anyhow::Result<[BTreeSet<usize>; 3]> {
    let mut sets: [BTreeSet<usize>; 3] = Default::default();
    for spec in specs {
        let (field, list) = spec.split_once('=').ok_or_else(|| anyhow!("expected FIELD=indices in {spec:?}"))?;
        let f = match field.trim() {
            "location" | "loc" => 0,
            "picture" | "pic" => 1,
            "description" | "desc" => 2,
            other => bail!("unknown field {other:?}"),
        };
        for i in list.split(',').filter(|s| !s.trim().is_empty()) {
            let i: usize = i.trim().parse().with_context(|| format!("bad index in {spec:?}"))?;
            sets[f].insert(if f == 1 { cell_chunk(i) } else { i });
        }
    }
    Ok(sets)
}

fn print_json<T: Serialize>(v: &T) -> anyhow::Result<()> {
    println!("{}", serde_json::to_string_pretty(v)?);
    Ok(())
}

struct Ctx {
    client: Client,
    key: Option<PathBuf>,
    wait: Duration,
}

impl Ctx {
    fn key(&self) -> anyhow::Result<SigningKey> {
        let path = self.key.as_ref().ok_or_else(|| anyhow!("no key: pass --key or set ACRP_KEY_FILE"))?;
        read_key(path).with_context(|| format!("reading key {}", path.display()))
    }

    fn land(&self, tx_ref: Hex32) -> anyhow::Result<()> {
        let h = self.client.wait_included(&tx_ref, self.wait)?;
        println!("tx {tx_ref} included at height {h}");
        Ok(())
    }
}

fn init(a: InitArgs) -> anyhow::Result<()> {
    if a.members == 0 || a.authorities == 0 {
        bail!("need at least one member and one authority");
    }
    let c = LocalConsortium::new(&LocalConfig {
        chain_id: a.chain_id,
        members: a.members,
        auditors: a.auditors,
        authorities: a.authorities,
        citizens: a.citizens,
        audit_timeout: a.audit_timeout,
        seed: a.seed,
    });
    c.genesis.validate()?;
    c.write(&a.dir)?;
    println!("wrote {} and keys under {}", a.dir.join("genesis.json").display(), a.dir.join("keys").display());
    Ok(())
}

fn node_run(genesis: &Path, keys_dir: &Path, data: &Path, listen: SocketAddr, block_ms: u64) -> anyhow::Result<()> {
    let genesis = Genesis::load(genesis).with_context(|| format!("reading {}", genesis.display()))?;
    let keys = read_key_dir(keys_dir)?;
    let gateway = Gateway::open(data, genesis, keys)?;
    tracing::info!(chain = gateway.chain_id(), height = gateway.network().height(), "chain loaded");
    let rt = tokio::runtime::Runtime::new()?;
    rt.block_on(async {
        let listener = tokio::net::TcpListener::bind(listen).await?;
        tracing::info!("listening on http://{}", listener.local_addr()?);
        let shutdown = async {
            let _ = tokio::signal::ctrl_c().await;
        };
        let g = Arc::new(Mutex::new(gateway));
        serve(g, listener, Some(Duration::from_millis(block_ms.max(1))), shutdown).await?;
        anyhow::Ok(())
    })
}

fn read_regions(path: &Path) -> anyhow::Result<Vec<Rect>> {
    serde_json::from_slice(&fs::read(path)?).with_context(|| format!("parsing {}", path.display()))
}

fn read_bundle(path: &Path) -> anyhow::Result<SignedReport> {
    let bytes = fs::read(path).with_context(|| format!("reading {}", path.display()))?;
    Ok(SignedReport::from_bytes(&bytes)?)
}

fn citizen(ctx: &Ctx, cmd: CitizenCmd) -> anyhow::Result<()> {
    let sk = ctx.key()?;
    let c = &ctx.client;
    match cmd {
        CitizenCmd::File { report_type, lat, lon, photo, desc, grid, regions, out } => {
            let image = decode_png(&fs::read(&photo).with_context(|| format!("reading {}", photo.display()))?)?;
            let scheme = match (grid, regions) {
                (_, Some(r)) => ChunkingScheme::objects(read_regions(&r)?),
                (Some(g), None) => parse_grid(&g)?,
                (None, None) => ChunkingScheme::coarse(),
            };
            let report = Report {
                report_type,
                location: Location::from_degrees(lat, lon)?,
                picture: Picture { image, scheme },
                description: desc,
            };
            c.chain_id()?;
            let signed = SignedReport::sign(report, &sk)?;
            let id = signed.id()?;
            // Keep the original before touching the network: it is the only
            // copy the citizen can dispute with.
            let out = out.unwrap_or_else(|| PathBuf::from(format!("{id}.report")));
            fs::write(&out, signed.to_bytes()?)?;
            let filed = c.file_report(&sk, &signed, ctx.wait)?;
            println!("report {id}");
            println!("announced at height {}", filed.announce_height);
            println!("committed at height {} to auditor {}", filed.commit_height, filed.auditor.to_hex());
            println!("original kept in {}", out.display());
        }
        CitizenCmd::Dispute { report, original } => {
            let signed = read_bundle(&original)?;
            if let Some(r) = report {
                if signed.id()? != r {
                    bail!("{} is not the original of report {r}", original.display());
                }
            }
            let res = c.dispute(&sk, &signed)?;
            ctx.land(res.tx_ref)?;
            print_json(&res)?;
        }
        CitizenCmd::Vote { report } => ctx.land(c.vote(&sk, report)?)?,
        CitizenCmd::Comment { report, text } => ctx.land(c.comment(&sk, report, &text)?)?,
    }
    Ok(())
}

fn auditor(ctx: &Ctx, cmd: AuditorCmd) -> anyhow::Result<()> {
    let sk = ctx.key()?;
    let c = &ctx.client;
    match cmd {
        AuditorCmd::Pending => {
            let mut filter = ReportFilter {
                phase: Some(Phase::Committed),
                auditor: Some(sk.public_key()),
                per_page: Some(500),
                page: Some(0),
                ..Default::default()
            };
            loop {
                let page = c.reports(&filter)?;
                for r in &page.items {
                    let t = r.report_type.map(|t| format!("{t:?}")).unwrap_or_default();
                    println!("{} {t} announced at {}", r.id, r.announce_height);
                }
                if (page.page + 1) * page.per_page >= page.total {
                    break;
                }
                filter.page = Some(page.page + 1);
            }
        }
        AuditorCmd::Decide { report, redact, reject, note } => {
            let tx = match reject {
                Some(reason) => c.audit(&sk, report, AuditBody::reject(reason, &note))?,
                None => c.approve(&sk, &report, &parse_redactions(&redact)?)?,
            };
            ctx.land(tx)?;
        }
    }
    Ok(())
}

fn authority(ctx: &Ctx, cmd: AuthorityCmd) -> anyhow::Result<()> {
    let sk = ctx.key()?;
    let c = &ctx.client;
    let tx = match cmd {
        AuthorityCmd::Update { report, status, note } => c.status(&sk, report, status, &note)?,
        AuthorityCmd::Delete { report, reason, note } => c.delete(&sk, report, reason, &note)?,
        AuthorityCmd::Merge { report, into } => c.merge(&sk, report, into)?,
    };
    ctx.land(tx)
}

fn inspect(ctx: &Ctx, cmd: InspectCmd) -> anyhow::Result<()> {
    let c = &ctx.client;
    match cmd {
        InspectCmd::Chain { block } => {
            print_json(&c.head()?)?;
            if let Some(h) = block {
                print_json(&c.block(h)?)?;
            }
        }
        InspectCmd::Report { id } => print_json(&c.report(&id)?)?,
        InspectCmd::Reports { phase, report_type } => {
            let phase = match phase {
                Some(p) => Some(parse_phase(&p).ok_or_else(|| anyhow!("unknown phase {p:?}"))?),
                None => None,
            };
            print_json(&c.reports(&ReportFilter { phase, report_type, ..Default::default() })?)?
        }
        InspectCmd::Ranking => print_json(&c.ranking()?)?,
        InspectCmd::Consortium => print_json(&c.consortium()?)?,
        InspectCmd::Tx { tx_ref } => {
            let d = hex::decode(&tx_ref).ok().and_then(|b| b.try_into().ok());
            let d = d.ok_or_else(|| anyhow!("tx ref must be 64 hex digits"))?;
            print_json(&c.tx(&Hex32(d))?)?
        }
    }
    Ok(())
}

/// Exit status 1 and the first invalid height when the chain does not replay.
fn verify(dir: &Path) -> anyhow::Result<ExitCode> {
    let (genesis, blocks) = load_chain_dir(dir)?;
    match validate_chain_bytes(&genesis, &blocks) {
        Ok(state) => {
            println!("ok: {} blocks, {} reports", blocks.len(), state.reports.len());
            Ok(ExitCode::SUCCESS)
        }
        Err(ChainError::Invalid { height, reason }) => {
            println!("invalid block at height {height}: {reason}");
            eprintln!("InvalidBlock: first invalid height {height}");
            Ok(ExitCode::from(1))
        }
        Err(e) => Err(e.into()),
    }
}

fn run(cli: Cli) -> anyhow::Result<ExitCode> {
    let ctx = || -> anyhow::Result<Ctx> {
        Ok(Ctx { client: Client::new(&cli.node)?, key: cli.key.clone(), wait: Duration::from_secs(cli.wait_secs) })
    };
    match cli.cmd {
        Cmd::Keygen { ref out, ref seed } => {
            let (sk, pk) = keygen(seed.as_ref().map(|s| s.as_bytes()));
            write_key(out, &sk)?;
            println!("{}", pk.to_hex());
        }
        Cmd::Init(a) => init(a)?,
        Cmd::Node(NodeCmd::Run { ref genesis, ref keys_dir, ref data, listen, block_ms }) => {
            node_run(genesis, keys_dir, data, listen, block_ms)?
        }
        Cmd::Citizen(cmd) => citizen(&ctx()?, cmd)?,
        Cmd::Auditor(cmd) => auditor(&ctx()?, cmd)?,
        Cmd::Authority(cmd) => authority(&ctx()?, cmd)?,
        Cmd::Publish { ref original } => {
            let ctx = ctx()?;
            let tx = ctx.client.force_publish(&ctx.key()?, &read_bundle(original)?)?;
            ctx.land(tx)?;
        }
        Cmd::Inspect(cmd) => inspect(&ctx()?, cmd)?,
        Cmd::Verify { ref chain } => return verify(chain),
    }
    Ok(ExitCode::SUCCESS)
}

fn main() -> ExitCode {
    tracing_subscriber::fmt()
        .with_env_filter(
            tracing_subscriber::EnvFilter::try_from_default_env()
                .unwrap_or_else(|_| tracing_subscriber::EnvFilter::new("info")),
        )
        .with_writer(std::io::stderr)
        .init();
    match run(Cli::parse()) {
        Ok(code) => code,
        Err(e) => {
            let code = e.downcast_ref::<ClientError>().map_or_else(|| "Error".to_string(), ClientError::code);
            eprintln!("{code}: {e:#}");
            ExitCode::from(2)
        }
    }
}
