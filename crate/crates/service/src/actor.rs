//! One thread per dataset owns its session, so every odometer mutation for
//! that dataset is applied in arrival order.

use std::path::PathBuf;
use std::sync::mpsc;
use std::thread;

use riskscope_core::{AnswerConfig, DecisionRecord, OdometerState, PrivacyAmount, Query, Session};
use tokio::sync::oneshot;

use crate::store::write_meta;
use crate::ServiceError;

enum Command {
    Answer {
        query_id: String,
        query: Query,
        config: Box<AnswerConfig>,
        reply: oneshot::Sender<riskscope_core::Result<DecisionRecord>>,
    },
    Snapshot {
        reply: oneshot::Sender<OdometerState>,
    },
    SetDeltaG {
        delta_g: PrivacyAmount,
        reply: oneshot::Sender<Result<OdometerState, ServiceError>>,
    },
}

#[derive(Clone)]
pub(crate) struct SessionHandle {
    tx: mpsc::Sender<Command>,
}

impl SessionHandle {
    pub(crate) fn spawn(session: Session, meta_path: Option<PathBuf>) -> Self {
        let (tx, rx) = mpsc::channel();
        let name = format!("session-{}", session.dataset_id());
        thread::Builder::new()
            .name(name)
            .spawn(move || run(session, meta_path, rx))
            .expect("spawn session thread");
        Self { tx }
    }

    pub(crate) async fn answer(
        &self,
        query_id: String,
        query: Query,
        config: AnswerConfig,
    ) -> Result<riskscope_core::Result<DecisionRecord>, ServiceError> {
        let (reply, rx) = oneshot::channel();
        self.send(Command::Answer {
            query_id,
            query,
            config: Box::new(config),
            reply,
        })?;
        rx.await.map_err(|_| gone())
    }

    pub(crate) async fn snapshot(&self) -> Result<OdometerState, ServiceError> {
        let (reply, rx) = oneshot::channel();
        self.send(Command::Snapshot { reply })?;
        rx.await.map_err(|_| gone())
    }

    pub(crate) async fn set_delta_g(&self, delta_g: PrivacyAmount) -> Result<OdometerState, ServiceError> {
        let (reply, rx) = oneshot::channel();
        self.send(Command::SetDeltaG { delta_g, reply })?;
        rx.await.map_err(|_| gone())?
    }

    fn send(&self, cmd: Command) -> Result<(), ServiceError> {
        self.tx.send(cmd).map_err(|_| gone())
    }
}

fn gone() -> ServiceError {
    ServiceError::Storage("session thread stopped".into())
}

fn run(mut session: Session, meta_path: Option<PathBuf>, rx: mpsc::Receiver<Command>) {
    while let Ok(cmd) = rx.recv() {
        match cmd {
            Command::Answer {
                query_id,
                query,
                config,
                reply,
            } => {
                let out = session.answer_query(&query_id, &query, &config);
                let _ = reply.send(out);
            }
            Command::Snapshot { reply } => {
                let _ = reply.send(session.odometer().state().clone());
            }
            Command::SetDeltaG { delta_g, reply } => {
                let out = match &meta_path {
                    Some(path) => write_meta(path, session.dataset().n(), delta_g),
                    None => Ok(()),
                }
                .map(|()| {
                    session.odometer_mut().set_delta_g(delta_g);
                    session.odometer().state().clone()
                });
                let _ = reply.send(out);
            }
        }
    }
}
