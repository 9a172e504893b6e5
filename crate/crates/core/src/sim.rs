//! Workload simulator for the cache-hit-ratio experiment.
//!
//! Users are spread uniformly over the `t_max` leaves. In every period each
//! user issues a fixed number of Zipf-distributed content requests; users
//! whose access period has expired abort locally and are tallied as revoked
//! attempts. For each cache capacity a fresh provider and cache server are
//! driven through all periods with the same request trace.

use std::collections::{BTreeMap, BTreeSet, HashSet};
use std::fmt::Write as _;
use std::sync::Arc;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::{ChaCha20Rng, ChaCha8Rng};
use serde::{Deserialize, Serialize};

use crate::cache::{CacheLimits, CacheServer, StatsSnapshot};
use crate::catalog::{content_name, synthesize_content};
use crate::client::{CacheApi, Client, KeyRing, ProviderApi};
use crate::crypto::{keygen, MacKey, NodeKeySet, NonceMode, AEAD_OVERHEAD};
use crate::error::{Error, Result};
use crate::net::{self, HttpCache, HttpProvider, ServerHandle};
use crate::provider::Provider;
use crate::tree::{self, TimePeriod, TreeParams};

pub const CSV_HEADER: &str =
    "period,capacity,requests,revoked_attempts,hits,hit_ratio,upstream_bytes,cover_size,duplicated_entries";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SimMode {
    /// Provider and cache called directly; single-threaded and deterministic.
    #[default]
    InProcess,
    /// Provider and cache behind local HTTP servers.
    Networked,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimConfig {
    pub m: u32,
    pub n_users: usize,
    pub n_contents: usize,
    pub requests_per_user_per_period: usize,
    pub capacities: Vec<usize>,
    pub zipf_s: f64,
    pub zipf_v: f64,
    pub content_size_bytes: usize,
    pub seed: u64,
    #[serde(default)]
    pub mode: SimMode,
    #[serde(default, rename = "nonce_bits")]
    pub nonce_mode: NonceMode,
}

impl SimConfig {
    /// The reference setup: 16 periods, 2048 users, 65,535 contents,
    /// 64 requests per user per period, Zipf(s=3, v=3000), three capacities.
    /// Contents are 1 KiB instead of 1 MB; capacities count entries, so hit
    /// ratios are unaffected.
    pub fn reference() -> Self {
        Self {
            m: 4,
            n_users: 2048,
            n_contents: 65_535,
            requests_per_user_per_period: 64,
            capacities: vec![4096, 8192, 16_384],
            zipf_s: 3.0,
            zipf_v: 3000.0,
            content_size_bytes: 1024,
            seed: 20_230_222,
            mode: SimMode::InProcess,
            nonce_mode: NonceMode::Bits128,
        }
    }

    pub fn validate(&self) -> Result<TreeParams> {
        let params = TreeParams::new(self.m)?;
        let positive = [
            ("n_users", self.n_users),
            ("n_contents", self.n_contents),
            ("requests_per_user_per_period", self.requests_per_user_per_period),
            ("content_size_bytes", self.content_size_bytes),
        ];
        for (name, v) in positive {
            if v == 0 {
                return Err(Error::Validation(format!("{name} must be positive")));
            }
        }
        if self.capacities.is_empty() || self.capacities.contains(&0) {
            return Err(Error::Validation("capacities must be a non-empty list of positive sizes".into()));
        }
        if self.n_contents > u32::MAX as usize || self.n_users > u32::MAX as usize {
            return Err(Error::Validation("too many users or contents".into()));
        }
        Zipf::new(self.zipf_s, self.zipf_v, self.n_contents)?;
        Ok(params)
    }

    pub fn ciphertext_len(&self) -> u64 {
        (self.content_size_bytes + AEAD_OVERHEAD) as u64
    }
}

/// Zipf law over `{0, ..., n-1}` with `P(k) ∝ (v + k)^(-s)`, sampled by CDF
/// inversion.
#[derive(Debug, Clone)]
pub struct Zipf {
    s: f64,
    v: f64,
    cdf: Vec<f64>,
    norm: f64,
}

impl Zipf {
    pub fn new(s: f64, v: f64, n: usize) -> Result<Self> {
        let valid = s > 1.0 && v >= 1.0 && n > 0;
        if !valid {
            return Err(Error::Validation(format!(
                "zipf needs s > 1, v >= 1, n >= 1 (got s={s}, v={v}, n={n})"
            )));
        }
        let mut cdf = Vec::with_capacity(n);
        let mut acc = 0.0;
        for k in 0..n {
            acc += (v + k as f64).powf(-s);
            cdf.push(acc);
        }
        let norm = acc;
        for c in &mut cdf {
            *c /= norm;
        }
        *cdf.last_mut().expect("n >= 1") = 1.0;
        Ok(Self { s, v, cdf, norm })
    }

    pub fn len(&self) -> usize {
        self.cdf.len()
    }

    pub fn is_empty(&self) -> bool {
        self.cdf.is_empty()
    }

    /// Exact probability of rank `k`.
    pub fn pmf(&self, k: usize) -> f64 {
        if k >= self.cdf.len() {
            return 0.0;
        }
        (self.v + k as f64).powf(-self.s) / self.norm
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> usize {
        let u: f64 = rng.gen();
        self.cdf.partition_point(|&c| c <= u).min(self.cdf.len() - 1)
    }
}

/// Draws one rank from a freshly built table. Prefer [`Zipf`] for repeated draws.
pub fn zipf_sample<R: Rng + ?Sized>(s: f64, v: f64, n: usize, rng: &mut R) -> Result<usize> {
    Ok(Zipf::new(s, v, n)?.sample(rng))
}

/// Access period of every user, indexed by user id.
///
/// Users are shuffled with the seed and dealt round-robin onto leaves
/// `1..=t_max`, so leaf sizes differ by at most one.
pub fn assign_users(config: &SimConfig) -> Result<Vec<TimePeriod>> {
    let params = TreeParams::new(config.m)?;
    let mut order: Vec<usize> = (0..config.n_users).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    order.shuffle(&mut rng);
    let mut out = vec![params.period(1)?; config.n_users];
    for (pos, user) in order.into_iter().enumerate() {
        out[user] = params.period(pos as u64 % params.t_max() + 1)?;
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SimRequest {
    pub user: u32,
    pub content: u32,
}

/// Request sequence for one period: every user appears
/// `requests_per_user_per_period` times in shuffled order, each with an
/// independent Zipf draw. Identical for every capacity.
pub fn period_trace(config: &SimConfig, zipf: &Zipf, period: u64) -> Vec<SimRequest> {
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    rng.set_stream(period);
    let mut users: Vec<u32> = (0..config.n_users as u32)
        .flat_map(|u| std::iter::repeat_n(u, config.requests_per_user_per_period))
        .collect();
    users.shuffle(&mut rng);
    users
        .into_iter()
        .map(|user| SimRequest {
            user,
            content: zipf.sample(&mut rng) as u32,
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsRow {
    pub period: u64,
    pub capacity: usize,
    pub requests: u64,
    pub revoked_attempts: u64,
    pub hits: u64,
    pub hit_ratio: f64,
    pub upstream_bytes: u64,
    pub cover_size: usize,
    /// Distinct (content, cover node) ciphertexts fetched during the period.
    pub duplicated_entries: u64,
}

impl MetricsRow {
    pub fn served(&self) -> u64 {
        self.requests - self.revoked_attempts
    }
}

/// Everything observed in one period of one capacity run.
#[derive(Debug, Clone)]
pub struct PeriodDetail {
    pub row: MetricsRow,
    /// Cover nodes each content was fetched under, keyed by content index.
    pub nodes_per_content: BTreeMap<u32, BTreeSet<u64>>,
    /// Successful decryptions by users whose period had already expired.
    pub revoked_successes: u64,
    pub successes: u64,
}

/// Precomputed state shared by all capacity runs.
pub struct Experiment {
    config: SimConfig,
    params: TreeParams,
    zipf: Zipf,
    users: Vec<TimePeriod>,
    catalog: Vec<(String, Arc<[u8]>)>,
    keyset: NodeKeySet,
    mac_key: MacKey,
}

impl Experiment {
    pub fn new(config: SimConfig) -> Result<Self> {
        let params = config.validate()?;
        let zipf = Zipf::new(config.zipf_s, config.zipf_v, config.n_contents)?;
        let users = assign_users(&config)?;
        let catalog = (0..config.n_contents)
            .map(|i| {
                let name = content_name(i);
                let bytes = synthesize_content(config.seed, &name, config.content_size_bytes);
                (name, Arc::from(bytes))
            })
            .collect();
        let mut key_rng = ChaCha20Rng::seed_from_u64(config.seed);
        key_rng.set_stream(u64::MAX);
        let keyset = keygen(params, &mut key_rng);
        let mac_key = MacKey::random(&mut key_rng);
        Ok(Self {
            config,
            params,
            zipf,
            users,
            catalog,
            keyset,
            mac_key,
        })
    }

    pub fn config(&self) -> &SimConfig {
        &self.config
    }

    pub fn users(&self) -> &[TimePeriod] {
        &self.users
    }

    pub fn trace(&self, period: u64) -> Vec<SimRequest> {
        period_trace(&self.config, &self.zipf, period)
    }

    fn fresh_provider(&self) -> Result<Arc<Provider>> {
        let sp = Provider::new(self.keyset.clone(), self.mac_key.clone(), self.config.nonce_mode);
        for (name, bytes) in &self.catalog {
            sp.add_content(name.clone(), Arc::clone(bytes))?;
        }
        Ok(Arc::new(sp))
    }

    /// Runs every capacity, calling `on_period` after each period. Rows come
    /// back ordered by period, then by capacity in config order.
    pub fn run(&self, mut on_period: impl FnMut(&PeriodDetail)) -> Result<Vec<MetricsRow>> {
        let mut rows = Vec::new();
        for &capacity in &self.config.capacities {
            let sp = self.fresh_provider()?;
            match self.config.mode {
                SimMode::InProcess => {
                    let cs = CacheServer::new(CacheLimits::entries(capacity), Arc::clone(&sp))?;
                    let backend = InProcess { sp: &sp, cs: &cs };
                    rows.extend(self.drive(capacity, &backend, &mut on_period)?);
                }
                SimMode::Networked => {
                    let backend = Networked::start(sp, capacity)?;
                    rows.extend(self.drive(capacity, &backend, &mut on_period)?);
                }
            }
        }
        let order: Vec<usize> = self.config.capacities.clone();
        rows.sort_by_key(|r| {
            (
                r.period,
                order.iter().position(|&c| c == r.capacity).unwrap_or(usize::MAX),
            )
        });
        Ok(rows)
    }

    fn drive<B: Backend>(
        &self,
        capacity: usize,
        backend: &B,
        on_period: &mut impl FnMut(&PeriodDetail),
    ) -> Result<Vec<MetricsRow>> {
        let sp = backend.provider();
        let rings: Vec<KeyRing> = self
            .params
            .periods()
            .map(|t| KeyRing::obtain(sp, &format!("leaf-{}", t.get()), t))
            .collect::<Result<_>>()?;
        let client = Client::new(sp, backend.cache(), self.config.nonce_mode);

        let mut rows = Vec::new();
        for period in self.params.periods() {
            backend.advance(period)?;
            backend.reset_stats()?;
            let trace = self.trace(period.get());
            let mut revoked = 0u64;
            let mut successes = 0u64;
            let mut revoked_successes = 0u64;
            let mut tags = HashSet::new();
            let mut nodes_per_content: BTreeMap<u32, BTreeSet<u64>> = BTreeMap::new();
            for req in &trace {
                let t_user = self.users[req.user as usize];
                let ring = &rings[(t_user.get() - 1) as usize];
                let (name, content) = &self.catalog[req.content as usize];
                match client.fetch(ring, name, period) {
                    Ok(got) => {
                        if got.plaintext.as_slice() != &**content {
                            return Err(Error::Validation(format!(
                                "plaintext mismatch for {name} at {period}"
                            )));
                        }
                        successes += 1;
                        if t_user < period {
                            revoked_successes += 1;
                        }
                        tags.insert(got.tag);
                        nodes_per_content
                            .entry(req.content)
                            .or_default()
                            .insert(got.node.get());
                    }
                    Err(Error::Revoked { .. }) => revoked += 1,
                    Err(e) => return Err(e),
                }
            }
            let stats = backend.stats()?;
            let requests = trace.len() as u64;
            let row = MetricsRow {
                period: period.get(),
                capacity,
                requests,
                revoked_attempts: revoked,
                hits: stats.hits,
                hit_ratio: stats.hits as f64 / (requests - revoked).max(1) as f64,
                upstream_bytes: stats.upstream_bytes,
                cover_size: tree::cover_at(self.params, period)?.len(),
                duplicated_entries: tags.len() as u64,
            };
            on_period(&PeriodDetail {
                row: row.clone(),
                nodes_per_content,
                revoked_successes,
                successes,
            });
            rows.push(row);
        }
        Ok(rows)
    }
}

trait Backend {
    type P: ProviderApi;
    type C: CacheApi;
    fn provider(&self) -> &Self::P;
    fn cache(&self) -> &Self::C;
    fn advance(&self, t: TimePeriod) -> Result<()>;
    fn reset_stats(&self) -> Result<()>;
    fn stats(&self) -> Result<StatsSnapshot>;
}

struct InProcess<'a> {
    sp: &'a Arc<Provider>,
    cs: &'a CacheServer<Arc<Provider>>,
}

impl<'a> Backend for InProcess<'a> {
    type P = Arc<Provider>;
    type C = CacheServer<Arc<Provider>>;

    fn provider(&self) -> &Self::P {
        self.sp
    }

    fn cache(&self) -> &Self::C {
        self.cs
    }

    fn advance(&self, t: TimePeriod) -> Result<()> {
        self.sp.advance_period(t).map(|_| ())
    }

    fn reset_stats(&self) -> Result<()> {
        self.cs.reset_stats();
        Ok(())
    }

    fn stats(&self) -> Result<StatsSnapshot> {
        Ok(self.cs.stats())
    }
}

struct Networked {
    sp: HttpProvider,
    cs: HttpCache,
    // Cache first so it stops before its upstream.
    _cs_server: ServerHandle,
    _sp_server: ServerHandle,
}

impl Networked {
    fn start(provider: Arc<Provider>, capacity: usize) -> Result<Self> {
        let sp_server = net::spawn_server(net::provider_router(provider), "127.0.0.1:0")?;
        let sp_addr = sp_server.addr().to_string();
        let cs_core = CacheServer::new(CacheLimits::entries(capacity), HttpProvider::new(&sp_addr))?;
        let cs_server = net::spawn_server(net::cache_router(Arc::new(cs_core)), "127.0.0.1:0")?;
        Ok(Self {
            sp: HttpProvider::new(&sp_addr),
            cs: HttpCache::new(&cs_server.addr().to_string()),
            _cs_server: cs_server,
            _sp_server: sp_server,
        })
    }
}

impl Backend for Networked {
    type P = HttpProvider;
    type C = HttpCache;

    fn provider(&self) -> &Self::P {
        &self.sp
    }

    fn cache(&self) -> &Self::C {
        &self.cs
    }

    fn advance(&self, t: TimePeriod) -> Result<()> {
        self.sp.advance(t).map(|_| ())
    }

    fn reset_stats(&self) -> Result<()> {
        self.cs.reset_stats()
    }

    fn stats(&self) -> Result<StatsSnapshot> {
        Ok((&self.cs.stats()?).into())
    }
}

pub fn run_experiment(config: &SimConfig) -> Result<Vec<MetricsRow>> {
    Experiment::new(config.clone())?.run(|_| {})
}

/// Upstream bytes if every served request had gone to the provider.
pub fn no_cache_upstream_bytes(config: &SimConfig, rows: &[MetricsRow]) -> u64 {
    rows.iter().map(|r| r.served() * config.ciphertext_len()).sum()
}

pub fn to_csv(rows: &[MetricsRow]) -> String {
    let mut out = String::with_capacity(64 * (rows.len() + 1));
    out.push_str(CSV_HEADER);
    out.push('\n');
    for r in rows {
        let _ = writeln!(
            out,
            "{},{},{},{},{},{:.6},{},{},{}",
            r.period,
            r.capacity,
            r.requests,
            r.revoked_attempts,
            r.hits,
            r.hit_ratio,
            r.upstream_bytes,
            r.cover_size,
            r.duplicated_entries
        );
    }
    out
}
