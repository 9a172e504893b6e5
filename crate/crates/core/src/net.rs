//! HTTP/1.1 + JSON transport for the provider and cache server, and
//! blocking clients for both.
//!
//! Handlers decode bodies with [`crate::wire::decode`] so malformed input is
//! always answered with a `VALIDATION` error body rather than the framework's
//! own rejection.

use std::io::Read;
use std::net::SocketAddr;
use std::sync::Arc;
use std::thread::JoinHandle;

use axum::body::Bytes;
use axum::extract::State;
use axum::http::{header, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::Router;
use serde::de::DeserializeOwned;
use serde::Serialize;
use tokio::sync::oneshot;
use tracing::{info, warn};

use crate::cache::{CacheServer, StatsSnapshot, Upstream};
use crate::client::{CacheApi, ProviderApi};
use crate::crypto::{Ciphertext, Tag};
use crate::error::{Error, Result};
use crate::provider::Provider;
use crate::tree::{NodeId, TimePeriod};
use crate::wire::{self, *};

fn respond<T: Serialize>(result: Result<T>) -> Response {
    match result {
        Ok(body) => (
            StatusCode::OK,
            [(header::CONTENT_TYPE, "application/json")],
            wire::encode(&body),
        )
            .into_response(),
        Err(e) => {
            let we = WireError::from(&e);
            let status = StatusCode::from_u16(we.code.http_status())
                .unwrap_or(StatusCode::INTERNAL_SERVER_ERROR);
            (
                status,
                [(header::CONTENT_TYPE, "application/json")],
                wire::encode(&we),
            )
                .into_response()
        }
    }
}

async fn blocking<T, F>(f: F) -> Result<T>
where
    F: FnOnce() -> Result<T> + Send + 'static,
    T: Send + 'static,
{
    tokio::task::spawn_blocking(f)
        .await
        .unwrap_or_else(|e| Err(Error::Upstream(format!("handler task failed: {e}"))))
}

fn parse<T: DeserializeOwned + Validate>(body: &[u8]) -> Result<T> {
    wire::decode(body).map_err(Error::from)
}

/// Routes for the service provider.
pub fn provider_router(sp: Arc<Provider>) -> Router {
    Router::new()
        .route(PATH_KEYS, post(sp_keys))
        .route(PATH_CONTENT_REQUEST, post(sp_content_request))
        .route(PATH_CACHE_REQUEST, post(sp_cache_request))
        .route(PATH_ADVANCE, post(sp_advance).get(sp_period))
        .with_state(sp)
}

async fn sp_keys(State(sp): State<Arc<Provider>>, body: Bytes) -> Response {
    respond(
        blocking(move || {
            let req: KeysRequest = parse(&body)?;
            let t = sp.params().period(req.t)?;
            ProviderApi::send_key(&*sp, &req.user_id, t)
        })
        .await,
    )
}

async fn sp_content_request(State(sp): State<Arc<Provider>>, body: Bytes) -> Response {
    respond(
        blocking(move || {
            let req: ContentRequest = parse(&body)?;
            let node = sp.params().node(req.node)?;
            let tag = sp.handle_content_request(&req.c_name, node)?;
            Ok(TagReply { tag })
        })
        .await,
    )
}

async fn sp_cache_request(State(sp): State<Arc<Provider>>, body: Bytes) -> Response {
    respond(
        blocking(move || {
            let req: TagRequest = parse(&body)?;
            let ciphertext = sp.handle_cache_request(&req.tag)?;
            Ok(CiphertextReply { ciphertext })
        })
        .await,
    )
}

async fn sp_advance(State(sp): State<Arc<Provider>>, body: Bytes) -> Response {
    respond(
        blocking(move || {
            let req: AdvanceRequest = parse(&body)?;
            let t = sp.advance_period(sp.params().period(req.t)?)?;
            info!(t_curr = t.get(), "advanced period");
            Ok(AdvanceReply { t_curr: t.get() })
        })
        .await,
    )
}

async fn sp_period(State(sp): State<Arc<Provider>>) -> Response {
    respond(Ok(AdvanceReply {
        t_curr: sp.t_curr().get(),
    }))
}

/// Routes for the cache server.
pub fn cache_router<U: Upstream + 'static>(cs: Arc<CacheServer<U>>) -> Router {
    Router::new()
        .route(PATH_CONTENT, post(cs_content::<U>))
        .route(PATH_STATS, get(cs_stats::<U>))
        .route(PATH_RESET_STATS, post(cs_reset::<U>))
        .with_state(cs)
}

async fn cs_content<U: Upstream + 'static>(State(cs): State<Arc<CacheServer<U>>>, body: Bytes) -> Response {
    respond(
        blocking(move || {
            let req: TagRequest = parse(&body)?;
            let (ciphertext, hit) = cs.send_content(&req.tag)?;
            Ok(ContentReply { ciphertext, hit })
        })
        .await,
    )
}

async fn cs_stats<U: Upstream + 'static>(State(cs): State<Arc<CacheServer<U>>>) -> Response {
    let s = cs.stats();
    respond(Ok(StatsReply {
        hits: s.hits,
        misses: s.misses,
        hit_ratio: s.hit_ratio(),
        upstream_bytes: s.upstream_bytes,
    }))
}

async fn cs_reset<U: Upstream + 'static>(State(cs): State<Arc<CacheServer<U>>>) -> Response {
    cs.reset_stats();
    respond(Ok(Empty {}))
}

/// Serves `router` on `listen` until ctrl-c.
pub async fn serve_until_signal(router: Router, listen: &str) -> Result<()> {
    let listener = tokio::net::TcpListener::bind(listen).await?;
    info!(addr = %listener.local_addr()?, "listening");
    axum::serve(listener, router)
        .with_graceful_shutdown(async {
            let _ = tokio::signal::ctrl_c().await;
        })
        .await?;
    Ok(())
}

/// A server running on its own thread and runtime. Dropping it shuts the
/// server down.
pub struct ServerHandle {
    addr: SocketAddr,
    shutdown: Option<oneshot::Sender<()>>,
    thread: Option<JoinHandle<()>>,
}

impl ServerHandle {
    pub fn addr(&self) -> SocketAddr {
        self.addr
    }

    pub fn shutdown(mut self) {
        self.stop();
    }

    fn stop(&mut self) {
        if let Some(tx) = self.shutdown.take() {
            let _ = tx.send(());
        }
        if let Some(t) = self.thread.take() {
            let _ = t.join();
        }
    }
}

impl Drop for ServerHandle {
    fn drop(&mut self) {
        self.stop();
    }
}

/// Binds `listen` (use port 0 for an ephemeral port) and serves `router` in
/// the background.
pub fn spawn_server(router: Router, listen: &str) -> Result<ServerHandle> {
    let std_listener = std::net::TcpListener::bind(listen)?;
    std_listener.set_nonblocking(true)?;
    let addr = std_listener.local_addr()?;
    let (tx, rx) = oneshot::channel::<()>();
    let runtime = tokio::runtime::Builder::new_multi_thread()
        .worker_threads(2)
        .enable_all()
        .build()?;
    let thread = std::thread::Builder::new()
        .name(format!("http-{addr}"))
        .spawn(move || {
            runtime.block_on(async move {
                let listener = match tokio::net::TcpListener::from_std(std_listener) {
                    Ok(l) => l,
                    Err(e) => {
                        warn!(error = %e, "could not adopt listener");
                        return;
                    }
                };
                let served = axum::serve(listener, router)
                    .with_graceful_shutdown(async {
                        let _ = rx.await;
                    })
                    .await;
                if let Err(e) = served {
                    warn!(error = %e, "server exited with error");
                }
            });
        })?;
    Ok(ServerHandle {
        addr,
        shutdown: Some(tx),
        thread: Some(thread),
    })
}

fn base_url(addr: &str) -> String {
    let trimmed = addr.trim_end_matches('/');
    if trimmed.starts_with("http://") || trimmed.starts_with("https://") {
        trimmed.to_owned()
    } else {
        format!("http://{trimmed}")
    }
}

#[derive(Clone)]
struct Http {
    agent: ureq::Agent,
    base: String,
}

impl Http {
    fn new(addr: &str) -> Self {
        Self {
            agent: ureq::AgentBuilder::new().build(),
            base: base_url(addr),
        }
    }

    fn post<Req: Serialize, Resp: DeserializeOwned + Validate>(&self, path: &str, req: &Req) -> Result<Resp> {
        let r = self
            .agent
            .post(&format!("{}{path}", self.base))
            .set("content-type", "application/json")
            .send_bytes(&wire::encode(req));
        Self::finish(r)
    }

    fn get<Resp: DeserializeOwned + Validate>(&self, path: &str) -> Result<Resp> {
        Self::finish(self.agent.get(&format!("{}{path}", self.base)).call())
    }

    fn finish<Resp: DeserializeOwned + Validate>(
        r: std::result::Result<ureq::Response, ureq::Error>,
    ) -> Result<Resp> {
        match r {
            Ok(resp) => {
                let body = read_body(resp)?;
                wire::decode(&body)
                    .map_err(|e| Error::Upstream(format!("malformed response: {}", e.message)))
            }
            Err(ureq::Error::Status(code, resp)) => {
                let body = read_body(resp)?;
                match serde_json::from_slice::<WireError>(&body) {
                    Ok(we) => Err(we.into()),
                    Err(_) => Err(Error::Upstream(format!("HTTP {code} without error body"))),
                }
            }
            Err(ureq::Error::Transport(t)) => Err(Error::Upstream(t.to_string())),
        }
    }
}

fn read_body(resp: ureq::Response) -> Result<Vec<u8>> {
    let mut buf = Vec::new();
    resp.into_reader()
        .read_to_end(&mut buf)
        .map_err(|e| Error::Upstream(format!("reading response: {e}")))?;
    Ok(buf)
}

/// Blocking client for a provider's HTTP API.
#[derive(Clone)]
pub struct HttpProvider {
    http: Http,
}

impl HttpProvider {
    pub fn new(addr: &str) -> Self {
        Self {
            http: Http::new(addr),
        }
    }

    pub fn advance(&self, t: TimePeriod) -> Result<TimePeriod> {
        let reply: AdvanceReply = self.http.post(PATH_ADVANCE, &AdvanceRequest { t: t.get() })?;
        TimePeriod::new(reply.t_curr)
    }
}

impl ProviderApi for HttpProvider {
    fn send_key(&self, user_id: &str, t: TimePeriod) -> Result<KeysReply> {
        self.http.post(
            PATH_KEYS,
            &KeysRequest {
                user_id: user_id.to_owned(),
                t: t.get(),
            },
        )
    }

    fn content_request(&self, c_name: &str, node: NodeId) -> Result<Tag> {
        let reply: TagReply = self.http.post(
            PATH_CONTENT_REQUEST,
            &ContentRequest {
                c_name: c_name.to_owned(),
                node: node.get(),
            },
        )?;
        Ok(reply.tag)
    }

    fn current_period(&self) -> Result<TimePeriod> {
        let reply: AdvanceReply = self.http.get(PATH_ADVANCE)?;
        TimePeriod::new(reply.t_curr)
    }
}

impl Upstream for HttpProvider {
    fn cache_request(&self, tag: &Tag) -> Result<Ciphertext> {
        let reply: CiphertextReply = self.http.post(PATH_CACHE_REQUEST, &TagRequest { tag: *tag })?;
        Ok(reply.ciphertext)
    }
}

/// Blocking client for a cache server's HTTP API.
#[derive(Clone)]
pub struct HttpCache {
    http: Http,
}

impl HttpCache {
    pub fn new(addr: &str) -> Self {
        Self {
            http: Http::new(addr),
        }
    }

    pub fn stats(&self) -> Result<StatsReply> {
        self.http.get(PATH_STATS)
    }

    pub fn reset_stats(&self) -> Result<()> {
        let _: Empty = self.http.post(PATH_RESET_STATS, &Empty {})?;
        Ok(())
    }
}

impl CacheApi for HttpCache {
    fn fetch(&self, tag: &Tag) -> Result<(Ciphertext, bool)> {
        let reply: ContentReply = self.http.post(PATH_CONTENT, &TagRequest { tag: *tag })?;
        Ok((reply.ciphertext, reply.hit))
    }
}

impl From<&StatsReply> for StatsSnapshot {
    fn from(s: &StatsReply) -> Self {
        StatsSnapshot {
            hits: s.hits,
            misses: s.misses,
            upstream_bytes: s.upstream_bytes,
            downstream_bytes: 0,
        }
    }
}
