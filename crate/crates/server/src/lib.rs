//! The gaitway server: per-project authentication, live session control,
//! batch ingestion over WebSocket, persistence, annotation and analytics
//! behind an HTTP+JSON API, plus a blocking client and the simulator
//! streaming client.

pub mod auth;
pub mod client;
pub mod error;
pub mod http;
pub mod service;
pub mod storage;

use std::net::SocketAddr;
use std::path::PathBuf;
use std::sync::Arc;
use std::thread::JoinHandle;
use std::time::Duration;

pub use client::{run_client, ApiClient, ClientConfig, ClientError, ClientReport, Faults};
pub use error::{ApiError, ErrorBody};
pub use http::{router, ENDPOINTS};
pub use service::{Service, ServiceConfig, SessionSummary, StartupReport};
pub use storage::{ProjectSecret, SecretFile};

#[derive(Debug, Clone)]
pub struct ServerConfig {
    pub data_dir: PathBuf,
    pub listen: SocketAddr,
    pub token_ttl: Duration,
    pub secrets: Option<SecretFile>,
    pub ui_dir: Option<PathBuf>,
}

impl ServerConfig {
    pub fn new(data_dir: impl Into<PathBuf>, listen: SocketAddr) -> Self {
        Self {
            data_dir: data_dir.into(),
            listen,
            token_ttl: service::DEFAULT_TOKEN_TTL,
            secrets: None,
            ui_dir: None,
        }
    }
}

fn open_service(cfg: &ServerConfig) -> Result<Arc<Service>, ApiError> {
    let scfg = ServiceConfig {
        data_dir: cfg.data_dir.clone(),
        token_ttl: cfg.token_ttl,
    };
    Ok(Arc::new(Service::open(scfg, cfg.secrets.as_ref())?.0))
}

/// Serves until `shutdown` resolves.
pub async fn serve(
    cfg: ServerConfig,
    shutdown: impl std::future::Future<Output = ()> + Send + 'static,
) -> Result<(), ApiError> {
    let service = open_service(&cfg)?;
    let listener = tokio::net::TcpListener::bind(cfg.listen).await?;
    tracing::info!(addr = %listener.local_addr()?, "listening");
    let app = router(service, cfg.ui_dir.clone());
    axum::serve(listener, app).with_graceful_shutdown(shutdown).await?;
    Ok(())
}

/// A server on its own runtime thread, stopped on drop. Used by tests and
/// by the CLI when a command needs a throwaway server.
pub struct RunningServer {
    pub addr: SocketAddr,
    pub service: Arc<Service>,
    stop: Option<tokio::sync::oneshot::Sender<()>>,
    thread: Option<JoinHandle<()>>,
}

impl RunningServer {
    pub fn start(cfg: ServerConfig) -> Result<Self, ApiError> {
        let service = open_service(&cfg)?;
        let std_listener = std::net::TcpListener::bind(cfg.listen)?;
        std_listener.set_nonblocking(true)?;
        let addr = std_listener.local_addr()?;
        let (stop, stopped) = tokio::sync::oneshot::channel::<()>();
        let app = router(Arc::clone(&service), cfg.ui_dir.clone());
        let rt = tokio::runtime::Builder::new_multi_thread()
            .enable_all()
            .thread_name("gaitway-server")
            .build()?;
        let thread = std::thread::spawn(move || {
            rt.block_on(async move {
                let listener = match tokio::net::TcpListener::from_std(std_listener) {
                    Ok(l) => l,
                    Err(e) => {
                        tracing::error!(%e, "listener setup failed");
                        return;
                    }
                };
                tokio::select! {
                    r = axum::serve(listener, app) => {
                        if let Err(e) = r {
                            tracing::error!(%e, "server error");
                        }
                    }
                    _ = stopped => {}
                }
            });
            rt.shutdown_timeout(Duration::from_secs(5));
        });
        Ok(Self {
            addr,
            service,
            stop: Some(stop),
            thread: Some(thread),
        })
    }

    /// `host:port` for clients.
    pub fn server_arg(&self) -> String {
        self.addr.to_string()
    }
}

impl Drop for RunningServer {
    fn drop(&mut self) {
        if let Some(stop) = self.stop.take() {
            let _ = stop.send(());
        }
        if let Some(t) = self.thread.take() {
            let _ = t.join();
        }
    }
}
