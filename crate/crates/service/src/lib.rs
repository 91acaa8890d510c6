//! HTTP job service: submit solve / trials / evaluate jobs, poll them, and
//! fetch reports, knowledge-base content and evaluations.

pub mod error;
mod exec;
pub mod job;
mod routes;
pub mod store;

use std::path::PathBuf;
use std::sync::atomic::AtomicUsize;
use std::sync::Arc;

use tokio::sync::Semaphore;
use triz_core::evaluation::{load_case_base, CaseRecord};
use triz_core::{Gateway, KnowledgeBase};

pub use error::ApiError;
pub use routes::router;
pub use store::{Store, StoreError};

pub const ENV_DATA_DIR: &str = "TRIZ_ENGINE_DATA_DIR";
pub const ENV_PORT: &str = "TRIZ_ENGINE_PORT";

#[derive(Debug, Clone)]
pub struct ServiceConfig {
    pub data_dir: PathBuf,
    pub port: u16,
    /// jobs executing at once
    pub max_concurrent_jobs: usize,
    /// queued + running jobs accepted before submissions are refused
    pub queue_capacity: usize,
    /// case base; the bundled cases when unset
    pub cases_dir: Option<PathBuf>,
}

impl Default for ServiceConfig {
    fn default() -> Self {
        Self {
            data_dir: PathBuf::from("triz-data"),
            port: 8080,
            max_concurrent_jobs: 2,
            queue_capacity: 64,
            cases_dir: None,
        }
    }
}

#[derive(Debug, thiserror::Error)]
pub enum ServiceError {
    #[error("{ENV_PORT}={0:?} is not a port number")]
    BadPort(String),
    #[error(transparent)]
    Store(#[from] StoreError),
    #[error("loading cases: {0}")]
    Cases(#[from] triz_core::evaluation::EvalError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl ServiceConfig {
    pub fn from_env() -> Result<Self, ServiceError> {
        let mut c = Self::default();
        if let Some(d) = std::env::var_os(ENV_DATA_DIR) {
            c.data_dir = d.into();
        }
        if let Ok(p) = std::env::var(ENV_PORT) {
            c.port = p.trim().parse().map_err(|_| ServiceError::BadPort(p))?;
        }
        Ok(c)
    }
}

pub(crate) struct Inner {
    pub store: Store,
    pub kb: KnowledgeBase,
    pub gateway: Gateway,
    pub cases: Vec<CaseRecord>,
    pub permits: Arc<Semaphore>,
    pub active: AtomicUsize,
    pub queue_capacity: usize,
}

/// Shared handle passed to every route.
#[derive(Clone)]
pub struct AppState(pub(crate) Arc<Inner>);

impl AppState {
    pub fn new(config: &ServiceConfig, gateway: Gateway, kb: KnowledgeBase) -> Result<Self, ServiceError> {
        let store = Store::open(&config.data_dir)?;
        let cases_dir = config.cases_dir.clone().unwrap_or_else(|| triz_core::bundled_assets_dir().join("cases"));
        let cases = load_case_base(cases_dir)?;
        Ok(Self(Arc::new(Inner {
            store,
            kb,
            gateway,
            cases,
            permits: Arc::new(Semaphore::new(config.max_concurrent_jobs.max(1))),
            active: AtomicUsize::new(0),
            queue_capacity: config.queue_capacity.max(1),
        })))
    }

    pub fn store(&self) -> &Store {
        &self.0.store
    }
}

/// Binds `0.0.0.0:<port>` and serves until ctrl-c.
pub async fn serve(config: ServiceConfig, state: AppState) -> Result<(), ServiceError> {
    let listener = tokio::net::TcpListener::bind(("0.0.0.0", config.port)).await?;
    log::info!("listening on {}", listener.local_addr()?);
    axum::serve(listener, router(state))
        .with_graceful_shutdown(async {
            let _ = tokio::signal::ctrl_c().await;
        })
        .await?;
    Ok(())
}
