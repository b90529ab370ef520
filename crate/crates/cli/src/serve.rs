//! Live mode: an HTTP reverse proxy that spreads requests over three tier endpoints
//! using the engine's current weights.
//!
//! The proxy runs on tokio. The decision loop (one fast tick per period) and the
//! learner (one slow tick per period) each own a dedicated thread; they share nothing
//! with the request path except the weight snapshot, the metric window and the
//! dispatcher's in-flight counters.
//!
//! ```toml
//! listen = "0.0.0.0:8080"
//! timeout_ms = 10000
//! utilization_url = "http://metrics:9100/utilization"
//!
//! [[tiers]]
//! tier = "light"
//! url = "http://light:8000"
//! ```
//!
//! `[engine]` and `[discretization]` tables use the same keys as in scenario files.

use std::fs::{File, OpenOptions};
use std::future::Future;
use std::io::{BufWriter, Write};
use std::net::SocketAddr;
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::{Arc, Mutex};
use std::thread::{self, JoinHandle};
use std::time::{Duration, Instant};

use aif_router::dispatch::{Dispatcher, ForwardResult, SharedWeights, Target, TierEndpoint, DEFAULT_TIMEOUT_MS};
use aif_router::engine::TraceWriter;
use aif_router::model::codec::{read_model, write_model};
use aif_router::model::PreferenceModel;
use aif_router::observe::{
    discretize, DiscretizationConfig, MetricWindow, TierUtilization, UtilizationSource, DEFAULT_WINDOW_S,
};
use aif_router::{Engine, EngineConfig, Tier};
use axum::body::{to_bytes, Body};
use axum::extract::{Request, State};
use axum::http::{header, HeaderMap, HeaderName, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::Router;
use serde::{Deserialize, Serialize};
use tokio::net::TcpListener;
use tracing::{debug, info, warn};

use crate::args::ServeArgs;
use crate::{CliError, Result};

/// Upper bound on a proxied request body.
const MAX_BODY_BYTES: usize = 64 * 1024 * 1024;
const UTIL_SCRAPE_TIMEOUT: Duration = Duration::from_millis(500);
/// Granularity at which sleeping loops notice a shutdown request.
const STOP_POLL: Duration = Duration::from_millis(50);

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TierUrl {
    pub tier: Tier,
    pub url: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ServeConfig {
    #[serde(default = "default_listen")]
    pub listen: SocketAddr,
    #[serde(default = "default_timeout")]
    pub timeout_ms: f64,
    #[serde(default = "default_window")]
    pub metric_window_s: f64,
    #[serde(default = "default_window")]
    pub util_poll_s: f64,
    #[serde(default)]
    pub utilization_url: Option<String>,
    #[serde(default)]
    pub tiers: Vec<TierUrl>,
    #[serde(default)]
    pub engine: EngineConfig,
    #[serde(default)]
    pub discretization: DiscretizationConfig,
}

fn default_listen() -> SocketAddr {
    SocketAddr::from(([127, 0, 0, 1], 8080))
}
fn default_timeout() -> f64 {
    DEFAULT_TIMEOUT_MS
}
fn default_window() -> f64 {
    DEFAULT_WINDOW_S
}

impl Default for ServeConfig {
    fn default() -> Self {
        toml::from_str("").expect("empty serve config is valid")
    }
}

impl ServeConfig {
    pub fn parse(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| CliError::Config(e.to_string()))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
        Self::parse(&text).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))
    }

    /// Config file (if any) overlaid with command-line values.
    pub fn from_args(args: &ServeArgs) -> Result<Self> {
        let mut cfg = match &args.config {
            Some(p) => Self::load(p)?,
            None => Self::default(),
        };
        if let Some(l) = args.listen {
            cfg.listen = l;
        }
        if let Some(t) = args.timeout_ms {
            cfg.timeout_ms = t;
        }
        for (tier, url) in [
            (Tier::Light, &args.light_url),
            (Tier::Medium, &args.medium_url),
            (Tier::Heavy, &args.heavy_url),
        ] {
            if let Some(url) = url {
                cfg.tiers.retain(|t| t.tier != tier);
                cfg.tiers.push(TierUrl { tier, url: url.clone() });
            }
        }
        if let Some(u) = &args.utilization_url {
            cfg.utilization_url = Some(u.clone());
        }
        if let Some(seed) = args.seed {
            cfg.engine.rng_seed = seed;
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        self.tier_urls()?;
        if self.timeout_ms.is_nan() || self.timeout_ms <= 0.0 {
            return Err(CliError::Config(format!("timeout_ms must be positive, got {}", self.timeout_ms)));
        }
        for (name, v) in [("metric_window_s", self.metric_window_s), ("util_poll_s", self.util_poll_s)] {
            if v.is_nan() || v <= 0.0 {
                return Err(CliError::Config(format!("{name} must be positive, got {v}")));
            }
        }
        self.engine.validate()?;
        self.discretization.validate()?;
        Ok(())
    }

    /// Base URLs ordered light, medium, heavy, without trailing slashes.
    pub fn tier_urls(&self) -> Result<[String; 3]> {
        let mut urls: [Option<String>; 3] = Default::default();
        for t in &self.tiers {
            let slot = &mut urls[t.tier.index()];
            if slot.is_some() {
                return Err(CliError::Config(format!("tier `{}` listed twice", t.tier)));
            }
            if !(t.url.starts_with("http://") || t.url.starts_with("https://")) {
                return Err(CliError::Config(format!("tier `{}`: `{}` is not an http(s) URL", t.tier, t.url)));
            }
            *slot = Some(t.url.trim_end_matches('/').to_owned());
        }
        let [l, m, h] = urls;
        match (l, m, h) {
            (Some(l), Some(m), Some(h)) => Ok([l, m, h]),
            (l, m, _) => {
                let missing = if l.is_none() { "light" } else if m.is_none() { "medium" } else { "heavy" };
                Err(CliError::Config(format!("no URL for tier `{missing}`")))
            }
        }
    }
}

/// Request path: picks a tier per request and forwards the request verbatim.
pub struct Proxy {
    dispatcher: Dispatcher,
    client: reqwest::Client,
    urls: [String; 3],
    timeout: Duration,
    clock: Instant,
}

impl Proxy {
    pub fn new(cfg: &ServeConfig, weights: Arc<SharedWeights>, window: Arc<Mutex<MetricWindow>>) -> Result<Self> {
        let urls = cfg.tier_urls()?;
        let endpoints = Tier::ALL.map(|t| TierEndpoint::new(t, Target::Url(urls[t.index()].clone()), cfg.timeout_ms));
        let client = reqwest::Client::builder()
            .build()
            .map_err(|e| CliError::Config(format!("http client: {e}")))?;
        Ok(Self {
            dispatcher: Dispatcher::new(weights, endpoints, window),
            client,
            urls,
            timeout: Duration::from_secs_f64(cfg.timeout_ms / 1000.0),
            clock: Instant::now(),
        })
    }

    /// Seconds since the proxy started; the time base of the metric window.
    pub fn now(&self) -> f64 {
        self.clock.elapsed().as_secs_f64()
    }

    pub fn dispatcher(&self) -> &Dispatcher {
        &self.dispatcher
    }
}

pub fn router(proxy: Arc<Proxy>) -> Router {
    Router::new().fallback(forward).with_state(proxy)
}

fn is_hop_by_hop(name: &HeaderName) -> bool {
    [
        header::CONNECTION,
        header::HOST,
        header::CONTENT_LENGTH,
        header::TRANSFER_ENCODING,
        header::TE,
        header::TRAILER,
        header::UPGRADE,
        header::PROXY_AUTHORIZATION,
        header::PROXY_AUTHENTICATE,
    ]
    .contains(name)
        || name.as_str() == "keep-alive"
}

fn copy_headers(from: &HeaderMap, to: &mut HeaderMap) {
    for (k, v) in from.iter().filter(|(k, _)| !is_hop_by_hop(k)) {
        to.append(k.clone(), v.clone());
    }
}

async fn forward(State(proxy): State<Arc<Proxy>>, req: Request) -> Response {
    let (parts, body) = req.into_parts();
    let body = match to_bytes(body, MAX_BODY_BYTES).await {
        Ok(b) => b,
        Err(e) => return (StatusCode::BAD_REQUEST, e.to_string()).into_response(),
    };
    let ticket = proxy.dispatcher.begin(&mut rand::rng());
    let tier = ticket.tier;
    let path = parts.uri.path_and_query().map_or("/", |p| p.as_str());
    let mut headers = HeaderMap::new();
    copy_headers(&parts.headers, &mut headers);
    let request = proxy
        .client
        .request(parts.method, format!("{}{path}", proxy.urls[tier.index()]))
        .headers(headers)
        .body(body);

    let started = Instant::now();
    let exchange = async {
        let resp = request.send().await?;
        let status = resp.status();
        let headers = resp.headers().clone();
        let body = resp.bytes().await?;
        Ok::<_, reqwest::Error>((status, headers, body))
    };
    match tokio::time::timeout(proxy.timeout, exchange).await {
        Ok(Ok((status, headers, body))) => {
            let latency_ms = started.elapsed().as_secs_f64() * 1000.0;
            let ok = status.is_success();
            proxy
                .dispatcher
                .finish(ticket, ForwardResult::Response { ok, latency_ms }, proxy.now());
            let mut resp = Response::new(Body::from(body));
            *resp.status_mut() = status;
            copy_headers(&headers, resp.headers_mut());
            resp
        }
        Ok(Err(e)) => {
            debug!(%tier, error = %e, "backend request failed");
            proxy.dispatcher.finish(ticket, ForwardResult::Failed, proxy.now());
            (StatusCode::BAD_GATEWAY, format!("{tier} tier unavailable\n")).into_response()
        }
        Err(_) => {
            debug!(%tier, "backend request timed out");
            proxy.dispatcher.finish(ticket, ForwardResult::TimedOut, proxy.now());
            (StatusCode::GATEWAY_TIMEOUT, format!("{tier} tier timed out\n")).into_response()
        }
    }
}

/// Scrapes per-tier CPU fractions from a JSON metrics endpoint.
pub struct HttpUtilization {
    client: reqwest::blocking::Client,
    url: String,
}

impl HttpUtilization {
    pub fn new(url: impl Into<String>) -> Result<Self> {
        let client = reqwest::blocking::Client::builder()
            .timeout(UTIL_SCRAPE_TIMEOUT)
            .build()
            .map_err(|e| CliError::Config(format!("http client: {e}")))?;
        Ok(Self { client, url: url.into() })
    }
}

impl UtilizationSource for HttpUtilization {
    fn poll(&mut self) -> aif_router::Result<TierUtilization> {
        let body = self
            .client
            .get(&self.url)
            .send()
            .and_then(|r| r.error_for_status())
            .and_then(|r| r.text())
            .map_err(|e| aif_router::Error::Io(std::io::Error::other(e)))?;
        TierUtilization::from_json(&body)
    }
}

/// Optional behaviour around the serving core.
#[derive(Debug, Default, Clone)]
pub struct ServeOptions {
    pub trace: Option<PathBuf>,
    pub load_model: Option<PathBuf>,
    pub save_model: Option<PathBuf>,
}

impl From<&ServeArgs> for ServeOptions {
    fn from(a: &ServeArgs) -> Self {
        Self {
            trace: a.trace.clone(),
            load_model: a.load_model.clone(),
            save_model: a.save_model.clone(),
        }
    }
}

/// Sleeps until `deadline`; false if a stop was requested meanwhile.
fn sleep_until(deadline: Instant, stop: &AtomicBool) -> bool {
    loop {
        if stop.load(Ordering::Acquire) {
            return false;
        }
        let now = Instant::now();
        if now >= deadline {
            return true;
        }
        thread::sleep((deadline - now).min(STOP_POLL));
    }
}

/// Next deadline on the fixed grid `origin + k·period` strictly after now; skips missed ticks.
fn next_deadline(origin: Instant, period: Duration, previous: Instant) -> Instant {
    let next = previous + period;
    let now = Instant::now();
    if next > now {
        return next;
    }
    let behind = (now - origin).as_secs_f64() / period.as_secs_f64();
    origin + period.mul_f64(behind.floor() + 1.0)
}

struct DecisionLoop {
    engine: Engine,
    proxy: Arc<Proxy>,
    weights: Arc<SharedWeights>,
    window: Arc<Mutex<MetricWindow>>,
    discretization: DiscretizationConfig,
    util_url: Option<String>,
    util_poll_s: f64,
    trace: Option<TraceWriter<BufWriter<File>>>,
}

impl DecisionLoop {
    fn run(mut self, stop: &AtomicBool) -> Engine {
        let mut util = self.util_url.as_deref().and_then(|u| match HttpUtilization::new(u) {
            Ok(s) => Some(s),
            Err(e) => {
                warn!(error = %e, "utilization scraping disabled");
                None
            }
        });
        let period = Duration::from_secs_f64(self.engine.config().fast_period_s);
        let origin = Instant::now();
        let mut deadline = origin + period;
        let mut last_poll: Option<f64> = None;
        while sleep_until(deadline, stop) {
            let now = self.proxy.now();
            let levels = match util.as_mut() {
                Some(src) if last_poll.is_none_or(|t| now - t >= self.util_poll_s - 1e-9) => {
                    last_poll = Some(now);
                    match src.poll() {
                        Ok(u) => Some(u.discretize(&self.discretization)),
                        Err(e) => {
                            warn!(error = %e, "utilization scrape failed");
                            None
                        }
                    }
                }
                _ => None,
            };
            let in_flight = self.proxy.dispatcher().in_flight();
            let stats = self
                .window
                .lock()
                .expect("metric window lock poisoned")
                .stats(now, in_flight);
            let obs = discretize(&stats, &self.discretization);
            match self.engine.fast_tick(now, obs, levels, stats.error_rate) {
                Ok(tick) => {
                    self.weights.publish(tick.weights);
                    debug!(
                        policy = tick.trace.policy,
                        mode = ?tick.mode,
                        light = tick.weights.light,
                        medium = tick.weights.medium,
                        heavy = tick.weights.heavy,
                        "fast tick"
                    );
                    if let Some(w) = self.trace.as_mut() {
                        if let Err(e) = w.write(&tick.trace) {
                            warn!(error = %e, "trace write failed; tracing disabled");
                            self.trace = None;
                        }
                    }
                }
                Err(e) => warn!(error = %e, "fast tick failed"),
            }
            deadline = next_deadline(origin, period, deadline);
        }
        if let Some(mut w) = self.trace.take().map(TraceWriter::into_inner) {
            if let Err(e) = w.flush() {
                warn!(error = %e, "trace flush failed");
            }
        }
        self.engine
    }
}

fn build_engine(cfg: &ServeConfig, load_model: Option<&Path>) -> Result<Engine> {
    let Some(path) = load_model else {
        return Ok(Engine::new(cfg.engine.clone())?);
    };
    let stored = read_model(std::io::BufReader::new(File::open(path)?))?;
    let prefs = PreferenceModel::new(cfg.engine.preferences.clone())?;
    info!(path = %path.display(), "loaded model");
    Ok(Engine::from_model(cfg.engine.clone(), stored.into_model(prefs)?)?)
}

fn save_engine_model(engine: &Engine, path: &Path) -> Result<()> {
    let tmp = path.with_extension("tmp");
    {
        let mut out = BufWriter::new(File::create(&tmp)?);
        write_model(&engine.model(), &mut out)?;
        out.into_inner().map_err(|e| e.into_error())?.sync_all()?;
    }
    std::fs::rename(&tmp, path)?;
    info!(path = %path.display(), "saved model");
    Ok(())
}

/// Serves on `listener` until `shutdown` resolves, then stops the loops and saves the
/// model if requested.
pub async fn serve_with(
    cfg: ServeConfig,
    opts: ServeOptions,
    listener: TcpListener,
    shutdown: impl Future<Output = ()> + Send + 'static,
) -> Result<()> {
    cfg.validate()?;
    let engine = build_engine(&cfg, opts.load_model.as_deref())?;
    let trace = match &opts.trace {
        Some(p) => Some(TraceWriter::new(BufWriter::new(
            OpenOptions::new().create(true).append(true).open(p)?,
        ))),
        None => None,
    };
    let weights = Arc::new(SharedWeights::new(engine.current_weights()));
    let window = Arc::new(Mutex::new(MetricWindow::new(cfg.metric_window_s)));
    let proxy = Arc::new(Proxy::new(&cfg, Arc::clone(&weights), Arc::clone(&window))?);
    let stop = Arc::new(AtomicBool::new(false));

    let mut learner = engine.learner();
    let slow_period = Duration::from_secs_f64(cfg.engine.slow_period_s);
    let learner_stop = Arc::clone(&stop);
    let learning: JoinHandle<()> = thread::Builder::new()
        .name("aif-learner".into())
        .spawn(move || {
            let origin = Instant::now();
            let mut deadline = origin + slow_period;
            while sleep_until(deadline, &learner_stop) {
                let epoch = learner.slow_tick();
                debug!(epoch, "model published");
                deadline = next_deadline(origin, slow_period, deadline);
            }
        })?;

    let decision = DecisionLoop {
        engine,
        proxy: Arc::clone(&proxy),
        weights,
        window,
        discretization: cfg.discretization,
        util_url: cfg.utilization_url.clone(),
        util_poll_s: cfg.util_poll_s,
        trace,
    };
    let decision_stop = Arc::clone(&stop);
    let deciding: JoinHandle<Engine> = thread::Builder::new()
        .name("aif-decision".into())
        .spawn(move || decision.run(&decision_stop))?;

    info!(addr = %listener.local_addr()?, "routing");
    let served = axum::serve(listener, router(proxy))
        .with_graceful_shutdown(shutdown)
        .await;

    stop.store(true, Ordering::Release);
    let (engine, learned) = tokio::task::spawn_blocking(move || (deciding.join(), learning.join()))
        .await
        .map_err(std::io::Error::other)?;
    let engine = engine.map_err(|_| std::io::Error::other("decision thread panicked"))?;
    learned.map_err(|_| std::io::Error::other("learner thread panicked"))?;
    served?;
    if let Some(path) = &opts.save_model {
        save_engine_model(&engine, path)?;
    }
    Ok(())
}

/// Entry point of `aif-router serve`: binds, serves until Ctrl-C.
pub fn run(args: &ServeArgs) -> Result<()> {
    let cfg = ServeConfig::from_args(args)?;
    let runtime = tokio::runtime::Builder::new_multi_thread().enable_all().build()?;
    runtime.block_on(async {
        let listener = TcpListener::bind(cfg.listen).await?;
        let shutdown = async {
            if let Err(e) = tokio::signal::ctrl_c().await {
                warn!(error = %e, "cannot listen for Ctrl-C");
                std::future::pending::<()>().await;
            }
            info!("shutting down");
        };
        serve_with(cfg, ServeOptions::from(args), listener, shutdown).await
    })
}
