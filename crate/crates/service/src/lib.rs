//! HTTP front-end for controlled releases. Analysts submit queries and see
//! only approved noisy outputs; controllers inspect risk analyses, decide
//! releases, and watch each dataset's odometer.

mod actor;
mod config;
mod error;
mod routes;
mod store;

use std::collections::HashMap;
use std::path::PathBuf;
use std::sync::{Arc, Mutex, RwLock};

use riskscope_core::api::{AnalystTicketView, ControllerTicketView, Role, TicketState};
use riskscope_core::{AnalysisReport, AnalystRelease, Dataset, DecisionRecord, EpsilonGrid, Query, Session};
use tokio::net::TcpListener;

use crate::actor::SessionHandle;

pub use config::ServiceConfig;
pub use error::{ApiError, ServiceError};
pub use routes::router;

struct DatasetEntry {
    dataset: Arc<Dataset>,
    session: SessionHandle,
}

struct Ticket {
    seq: u64,
    id: String,
    dataset_id: String,
    query: Query,
    state: TicketState,
    release: Option<AnalystRelease>,
    decision: Option<DecisionRecord>,
    deciding: bool,
}

impl Ticket {
    fn analyst_view(&self) -> AnalystTicketView {
        AnalystTicketView {
            id: self.id.clone(),
            dataset_id: self.dataset_id.clone(),
            state: self.state,
            output: self.release.as_ref().map(|r| r.output.clone()),
            epsilon: self.release.as_ref().and_then(|r| r.epsilon),
        }
    }

    fn controller_view(&self) -> ControllerTicketView {
        ControllerTicketView {
            id: self.id.clone(),
            dataset_id: self.dataset_id.clone(),
            query: self.query.clone(),
            state: self.state,
            decision: self.decision.clone(),
            analyst_view: self.analyst_view(),
        }
    }
}

struct Inner {
    tokens: HashMap<String, Role>,
    data_dir: Option<PathBuf>,
    default_grid: EpsilonGrid,
    workers: usize,
    datasets: RwLock<HashMap<String, DatasetEntry>>,
    tickets: RwLock<HashMap<String, Ticket>>,
    next_seq: Mutex<u64>,
    analyses: Mutex<HashMap<String, Arc<AnalysisReport>>>,
}

/// Shared state behind the router. Cheap to clone.
#[derive(Clone)]
pub struct AppState {
    inner: Arc<Inner>,
}

impl AppState {
    /// Builds the state and reloads every dataset and journal found under the
    /// configured data directory.
    pub fn new(config: &ServiceConfig) -> Result<Self, ServiceError> {
        let mut datasets = HashMap::new();
        if let Some(root) = &config.data_dir {
            std::fs::create_dir_all(root)?;
            for stored in store::load_all(root)? {
                let dataset = Arc::new(stored.dataset);
                let session = Session::new(stored.id.as_str(), dataset.clone(), stored.odometer);
                tracing::info!(dataset = %stored.id, rows = dataset.n(), "reloaded dataset");
                datasets.insert(
                    stored.id,
                    DatasetEntry {
                        dataset,
                        session: SessionHandle::spawn(session, Some(stored.meta_path)),
                    },
                );
            }
        }
        Ok(Self {
            inner: Arc::new(Inner {
                tokens: config.tokens.clone(),
                data_dir: config.data_dir.clone(),
                default_grid: config.grid()?,
                workers: config.workers(),
                datasets: RwLock::new(datasets),
                tickets: RwLock::new(HashMap::new()),
                next_seq: Mutex::new(0),
                analyses: Mutex::new(HashMap::new()),
            }),
        })
    }
}

/// Serves the router on an already bound listener until the task is dropped.
pub async fn serve_on(listener: TcpListener, state: AppState) -> Result<(), ServiceError> {
    axum::serve(listener, router(state)).await?;
    Ok(())
}

pub async fn serve(config: ServiceConfig) -> Result<(), ServiceError> {
    let state = AppState::new(&config)?;
    let listener = TcpListener::bind(config.listen).await?;
    tracing::info!(addr = %listener.local_addr()?, "listening");
    axum::serve(listener, router(state))
        .with_graceful_shutdown(async {
            let _ = tokio::signal::ctrl_c().await;
        })
        .await?;
    Ok(())
}
