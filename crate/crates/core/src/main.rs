//! `chronocache` operator CLI.

use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::sync::Arc;

use clap::{Args, Parser, Subcommand};
use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;
use tracing_subscriber::EnvFilter;

use chronocache::cache::{CacheLimits, CacheServer};
use chronocache::client::{Client, KeyRing};
use chronocache::config::{mac_key_path_for, CacheConfig, ProviderConfig};
use chronocache::crypto::{keygen, MacKey, NodeKeySet, NonceMode};
use chronocache::net::{self, HttpCache, HttpProvider};
use chronocache::provider::Provider;
use chronocache::sim::{to_csv, Experiment, SimConfig};
use chronocache::tree::{self, TreeParams};
use chronocache::wire::{self, ErrorCode, KeysReply};
use chronocache::{catalog, Error, Result};

#[derive(Parser)]
#[command(name = "chronocache", version, about = "Time-limited access to cached encrypted content")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate node keys for a depth-(m+1) tree plus a MAC key.
    Keygen(KeygenArgs),
    /// Write a catalog of synthetic contents.
    CatalogGen(CatalogArgs),
    /// Run the service provider until interrupted.
    RunSp(RunSpArgs),
    /// Run a cache server until interrupted.
    RunCs(RunCsArgs),
    /// Fetch one content and write the plaintext to stdout.
    Fetch(FetchArgs),
    /// Run the hit-ratio simulation and write CSV.
    Simulate(SimulateArgs),
}

#[derive(Args)]
struct KeygenArgs {
    #[arg(long)]
    m: u32,
    #[arg(long, default_value = "keys.json")]
    out: PathBuf,
    /// MAC key path; defaults to `<out stem>.mac.json`.
    #[arg(long)]
    mac_out: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Args)]
struct CatalogArgs {
    #[arg(long)]
    n: usize,
    #[arg(long, default_value_t = 1024)]
    size: usize,
    #[arg(long, default_value = "catalog.json")]
    out: PathBuf,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Embed content bytes instead of size/seed descriptors.
    #[arg(long)]
    inline: bool,
}

#[derive(Args)]
struct RunSpArgs {
    #[arg(long)]
    config: PathBuf,
    /// Overrides the config's listen address.
    #[arg(long)]
    listen: Option<String>,
}

#[derive(Args)]
struct RunCsArgs {
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    listen: Option<String>,
    #[arg(long)]
    upstream: Option<String>,
    #[arg(long)]
    capacity: Option<usize>,
}

#[derive(Args)]
struct FetchArgs {
    #[arg(long)]
    name: String,
    #[arg(long)]
    t_user: u64,
    #[arg(long)]
    t_curr: u64,
    #[arg(long, default_value_t = 4)]
    m: u32,
    /// Saved key reply (JSON). Without it keys are requested from the provider.
    #[arg(long)]
    ring: Option<PathBuf>,
    #[arg(long, default_value = "cli-user")]
    user_id: String,
    #[arg(long, default_value = "127.0.0.1:8080")]
    sp: String,
    #[arg(long, default_value = "127.0.0.1:8081")]
    cs: String,
    #[arg(long, default_value_t = 128)]
    nonce_bits: u32,
}

#[derive(Args)]
struct SimulateArgs {
    /// JSON SimConfig; the reference setup when omitted.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    /// CSV destination; stdout when omitted.
    #[arg(long)]
    out: Option<PathBuf>,
}

fn main() -> ExitCode {
    tracing_subscriber::fmt()
        .with_env_filter(EnvFilter::try_from_env("CHRONOCACHE_LOG").unwrap_or_else(|_| EnvFilter::new("warn")))
        .with_writer(std::io::stderr)
        .init();

    let result = match Cli::parse().command {
        Command::Keygen(a) => cmd_keygen(a),
        Command::CatalogGen(a) => cmd_catalog(a),
        Command::RunSp(a) => cmd_run_sp(a),
        Command::RunCs(a) => cmd_run_cs(a),
        Command::Fetch(a) => cmd_fetch(a),
        Command::Simulate(a) => cmd_simulate(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("{}: {e}", e.code().as_str());
            ExitCode::from(exit_code(&e))
        }
    }
}

fn exit_code(e: &Error) -> u8 {
    if matches!(e, Error::Decrypt) {
        return 1;
    }
    match e.code() {
        ErrorCode::Validation => 2,
        ErrorCode::Revoked => 3,
        ErrorCode::NotFound | ErrorCode::NoEntry | ErrorCode::StalePeriod => 4,
        ErrorCode::UpstreamError => 5,
    }
}

fn cmd_keygen(a: KeygenArgs) -> Result<()> {
    let params = TreeParams::new(a.m)?;
    let mut rng = match a.seed {
        Some(s) => ChaCha20Rng::seed_from_u64(s),
        None => ChaCha20Rng::from_entropy(),
    };
    let keys = keygen(params, &mut rng);
    let mac = MacKey::random(&mut rng);
    let mac_out = a.mac_out.unwrap_or_else(|| mac_key_path_for(&a.out));
    keys.save(&a.out)?;
    mac.save(&mac_out)?;
    eprintln!("wrote {} node keys to {} and MAC key to {}", keys.len(), a.out.display(), mac_out.display());
    Ok(())
}

fn cmd_catalog(a: CatalogArgs) -> Result<()> {
    if a.n == 0 || a.size == 0 {
        return Err(Error::Validation("--n and --size must be positive".into()));
    }
    catalog::save(&catalog::generate(a.n, a.size, a.seed, a.inline), &a.out)?;
    eprintln!("wrote {} entries to {}", a.n, a.out.display());
    Ok(())
}

fn runtime() -> Result<tokio::runtime::Runtime> {
    Ok(tokio::runtime::Builder::new_multi_thread().enable_all().build()?)
}

fn cmd_run_sp(a: RunSpArgs) -> Result<()> {
    let cfg = ProviderConfig::load(&a.config)?;
    let base = a.config.parent().unwrap_or(Path::new("."));
    let keys = NodeKeySet::load(&base.join(&cfg.key_file))?;
    if keys.params().m() != cfg.m {
        return Err(Error::Validation(format!(
            "key file is for m={}, config says m={}",
            keys.params().m(),
            cfg.m
        )));
    }
    let mac = MacKey::load(&base.join(cfg.mac_key_path()))?;
    let provider = Provider::new(keys, mac, cfg.nonce_mode);
    let entries = catalog::load(&base.join(&cfg.catalog_file))?;
    catalog::register_all(&provider, &entries)?;
    tracing::info!(contents = entries.len(), m = cfg.m, "provider ready");
    let listen = a.listen.unwrap_or(cfg.listen);
    runtime()?.block_on(net::serve_until_signal(net::provider_router(Arc::new(provider)), &listen))
}

fn cmd_run_cs(a: RunCsArgs) -> Result<()> {
    let mut cfg = match &a.config {
        Some(p) => CacheConfig::load(p)?,
        None => CacheConfig {
            capacity_entries: 0,
            upstream: String::new(),
            listen: String::new(),
            byte_budget: None,
        },
    };
    if let Some(v) = a.listen {
        cfg.listen = v;
    }
    if let Some(v) = a.upstream {
        cfg.upstream = v;
    }
    if let Some(v) = a.capacity {
        cfg.capacity_entries = v;
    }
    if cfg.listen.is_empty() || cfg.upstream.is_empty() {
        return Err(Error::Validation("listen and upstream addresses are required".into()));
    }
    let limits = CacheLimits {
        capacity_entries: cfg.capacity_entries,
        byte_budget: cfg.byte_budget,
    };
    let cs = CacheServer::new(limits, HttpProvider::new(&cfg.upstream))?;
    runtime()?.block_on(net::serve_until_signal(net::cache_router(Arc::new(cs)), &cfg.listen))
}

fn cmd_fetch(a: FetchArgs) -> Result<()> {
    let params = TreeParams::new(a.m)?;
    let t_user = params.period(a.t_user)?;
    let t_curr = params.period(a.t_curr)?;
    // Decided locally so a revoked user never contacts anyone, not even for keys.
    if tree::eligible_node(params, t_user, t_curr)?.is_none() {
        return Err(Error::Revoked {
            t_user: a.t_user,
            t_curr: a.t_curr,
        });
    }
    let nonce_mode = NonceMode::try_from(a.nonce_bits)?;
    let client = Client::new(HttpProvider::new(&a.sp), HttpCache::new(&a.cs), nonce_mode);
    let ring = match &a.ring {
        Some(path) => {
            let reply: KeysReply = wire::decode(&std::fs::read(path)?)?;
            KeyRing::from_reply(&reply)?
        }
        None => KeyRing::obtain(&client.provider, &a.user_id, t_user)?,
    };
    if ring.params != params || ring.t_user != t_user {
        return Err(Error::Validation(format!(
            "key ring is for m={} {}, flags say m={} {}",
            ring.params.m(),
            ring.t_user,
            a.m,
            t_user
        )));
    }
    let got = client.fetch(&ring, &a.name, t_curr)?;
    eprintln!("node={} tag={} hit={} period={}", got.node, got.tag, got.hit, got.t_curr);
    std::io::stdout().write_all(&got.plaintext)?;
    Ok(())
}

fn cmd_simulate(a: SimulateArgs) -> Result<()> {
    let mut cfg = match &a.config {
        Some(p) => serde_json::from_slice::<SimConfig>(&std::fs::read(p)?)?,
        None => SimConfig::reference(),
    };
    if let Some(s) = a.seed {
        cfg.seed = s;
    }
    eprintln!("seed={}", cfg.seed);
    let rows = Experiment::new(cfg)?.run(|d| {
        tracing::info!(
            period = d.row.period,
            capacity = d.row.capacity,
            hit_ratio = d.row.hit_ratio,
            "period done"
        )
    })?;
    let csv = to_csv(&rows);
    match a.out {
        Some(p) => std::fs::write(p, csv)?,
        None => std::io::stdout().write_all(csv.as_bytes())?,
    }
    Ok(())
}
