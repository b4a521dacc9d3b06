use std::sync::Arc;

use axum::body::Bytes;
use axum::extract::rejection::QueryRejection;
use axum::extract::{FromRequestParts, Path, Query as UrlQuery, State};
use axum::http::header::AUTHORIZATION;
use axum::http::request::Parts;
use axum::http::StatusCode;
use axum::routing::{get, post, put};
use axum::{Json, Router};
use riskscope_core::api::{
    AnalysisParams, AnalysisResponse, AnalystTicketView, AnswerRequest, AnswerResponse, ControllerTicketView,
    OdometerView, RegisterDatasetRequest, RegisterDatasetResponse, Role, SetDeltaGRequest, SubmitQueryRequest,
    TicketState,
};
use riskscope_core::{analyze, load_dataset, Decision, PreparedQuery, PrivacyAmount, SearchOptions, Session};
use serde::de::DeserializeOwned;
use serde::Serialize;

use crate::actor::SessionHandle;
use crate::{store, ApiError, AppState, DatasetEntry, Ticket};

pub fn router(state: AppState) -> Router {
    Router::new()
        .route("/datasets", post(register_dataset))
        .route("/queries", post(submit_query).get(list_queries))
        .route("/queries/{id}", get(get_query))
        .route("/queries/{id}/analysis", get(get_analysis))
        .route("/queries/{id}/answer", post(answer_query))
        .route("/odometer/{id}", get(get_odometer))
        .route("/odometer/{id}/delta-g", put(set_delta_g))
        .fallback(|| async { ApiError::new(StatusCode::NOT_FOUND, "no such endpoint") })
        .with_state(state)
}

pub struct Caller(pub Role);

impl FromRequestParts<AppState> for Caller {
    type Rejection = ApiError;

    async fn from_request_parts(parts: &mut Parts, state: &AppState) -> Result<Self, ApiError> {
        let token = parts
            .headers
            .get(AUTHORIZATION)
            .and_then(|v| v.to_str().ok())
            .and_then(|v| v.strip_prefix("Bearer "))
            .ok_or_else(ApiError::unauthorized)?;
        state
            .inner
            .tokens
            .get(token.trim())
            .copied()
            .map(Caller)
            .ok_or_else(ApiError::unauthorized)
    }
}

fn require(role: Role, needed: Role) -> Result<(), ApiError> {
    if role == needed {
        Ok(())
    } else {
        Err(ApiError::forbidden())
    }
}

fn parse<T: DeserializeOwned>(body: &Bytes) -> Result<T, ApiError> {
    serde_json::from_slice(body).map_err(|e| ApiError::bad_request(format!("invalid request body: {e}")))
}

fn created<T: Serialize>(body: T) -> (StatusCode, Json<T>) {
    (StatusCode::CREATED, Json(body))
}

impl AppState {
    fn session(&self, dataset_id: &str) -> Result<(Arc<riskscope_core::Dataset>, SessionHandle), ApiError> {
        let datasets = self.inner.datasets.read().expect("datasets lock");
        datasets
            .get(dataset_id)
            .map(|e| (e.dataset.clone(), e.session.clone()))
            .ok_or_else(|| ApiError::not_found("dataset", dataset_id))
    }

    fn with_ticket<R>(&self, id: &str, f: impl FnOnce(&Ticket) -> R) -> Result<R, ApiError> {
        let tickets = self.inner.tickets.read().expect("tickets lock");
        tickets.get(id).map(f).ok_or_else(|| ApiError::not_found("query", id))
    }

    fn with_ticket_mut<R>(&self, id: &str, f: impl FnOnce(&mut Ticket) -> R) -> Result<R, ApiError> {
        let mut tickets = self.inner.tickets.write().expect("tickets lock");
        tickets.get_mut(id).map(f).ok_or_else(|| ApiError::not_found("query", id))
    }
}

async fn register_dataset(
    State(s): State<AppState>,
    Caller(role): Caller,
    body: Bytes,
) -> Result<(StatusCode, Json<RegisterDatasetResponse>), ApiError> {
    require(role, Role::Controller)?;
    let req: RegisterDatasetRequest = parse(&body)?;
    let delta_g = PrivacyAmount::from_f64(req.delta_g.unwrap_or(0.0))?;
    let dataset = load_dataset(req.csv.as_bytes(), &req.schema)?;
    let id = format!("ds-{}", uuid::Uuid::new_v4().simple());
    let (odometer, meta_path) = match &s.inner.data_dir {
        Some(root) => {
            let (o, p) = store::save(root, &id, &req.csv, &req.schema, &dataset, delta_g)?;
            (o, Some(p))
        }
        None => (riskscope_core::Odometer::in_memory(id.as_str(), delta_g), None),
    };
    let n = dataset.n();
    let dataset = Arc::new(dataset);
    let session = SessionHandle::spawn(Session::new(id.as_str(), dataset.clone(), odometer), meta_path);
    s.inner
        .datasets
        .write()
        .expect("datasets lock")
        .insert(id.clone(), DatasetEntry { dataset, session });
    tracing::info!(dataset = %id, rows = n, "registered dataset");
    Ok(created(RegisterDatasetResponse { dataset_id: id, n }))
}

async fn submit_query(
    State(s): State<AppState>,
    Caller(role): Caller,
    body: Bytes,
) -> Result<(StatusCode, Json<AnalystTicketView>), ApiError> {
    require(role, Role::Analyst)?;
    let req: SubmitQueryRequest = parse(&body)?;
    let (dataset, _) = s.session(&req.dataset_id)?;
    req.query.validate(dataset.schema())?;
    let seq = {
        let mut next = s.inner.next_seq.lock().expect("seq lock");
        *next += 1;
        *next
    };
    let ticket = Ticket {
        seq,
        id: format!("q-{}", uuid::Uuid::new_v4().simple()),
        dataset_id: req.dataset_id,
        query: req.query,
        state: TicketState::Submitted,
        release: None,
        decision: None,
        deciding: false,
    };
    let view = ticket.analyst_view();
    s.inner
        .tickets
        .write()
        .expect("tickets lock")
        .insert(ticket.id.clone(), ticket);
    Ok(created(view))
}

async fn list_queries(State(s): State<AppState>, Caller(role): Caller) -> Result<Json<Vec<ControllerTicketView>>, ApiError> {
    require(role, Role::Controller)?;
    let tickets = s.inner.tickets.read().expect("tickets lock");
    let mut all: Vec<&Ticket> = tickets.values().collect();
    all.sort_by_key(|t| t.seq);
    Ok(Json(all.into_iter().map(Ticket::controller_view).collect()))
}

async fn get_query(
    State(s): State<AppState>,
    Caller(role): Caller,
    Path(id): Path<String>,
) -> Result<Json<serde_json::Value>, ApiError> {
    let value = match role {
        Role::Analyst => s.with_ticket(&id, |t| serde_json::to_value(t.analyst_view()))?,
        Role::Controller => s.with_ticket(&id, |t| serde_json::to_value(t.controller_view()))?,
    };
    value.map(Json).map_err(|e| ApiError::internal(e.to_string()))
}

async fn get_analysis(
    State(s): State<AppState>,
    Caller(role): Caller,
    Path(id): Path<String>,
    params: Result<UrlQuery<AnalysisParams>, QueryRejection>,
) -> Result<Json<AnalysisResponse>, ApiError> {
    require(role, Role::Controller)?;
    let (dataset_id, query) = s.with_ticket(&id, |t| (t.dataset_id.clone(), t.query.clone()))?;
    let UrlQuery(params) = params.map_err(|e| ApiError::bad_request(e.body_text()))?;
    let mechanism = params.mechanism()?;
    let grid = params.grid(&s.inner.default_grid)?;
    let (dataset, session) = s.session(&dataset_id)?;
    let eps_c = session.snapshot().await?.eps_c();

    let key = format!(
        "{id}|{mechanism:?}|{:?}|{:?}|{eps_c}",
        grid.values(),
        params.sensitivity_override
    );
    let cached = s.inner.analyses.lock().expect("analysis lock").get(&key).cloned();
    let report = match cached {
        Some(r) => r,
        None => {
            let opts = SearchOptions {
                workers: s.inner.workers,
                sensitivity_override: params.sensitivity_override,
            };
            let computed = tokio::task::spawn_blocking(move || {
                let prepared = PreparedQuery::prepare(&dataset, &query, mechanism, opts)?;
                analyze(&prepared, &grid, eps_c)
            })
            .await
            .map_err(|e| ApiError::internal(e.to_string()))?;
            if let Err(e) = &computed {
                if e.is_input_error() {
                    mark_analyzed(&s, &id)?;
                }
            }
            let r = Arc::new(computed?);
            s.inner
                .analyses
                .lock()
                .expect("analysis lock")
                .insert(key, r.clone());
            r
        }
    };
    mark_analyzed(&s, &id)?;
    Ok(Json(AnalysisResponse {
        query_id: id,
        report: (*report).clone(),
    }))
}

fn mark_analyzed(s: &AppState, id: &str) -> Result<(), ApiError> {
    s.with_ticket_mut(id, |t| {
        if t.state == TicketState::Submitted {
            t.state = TicketState::Analyzed;
        }
    })
}

async fn answer_query(
    State(s): State<AppState>,
    Caller(role): Caller,
    Path(id): Path<String>,
    body: Bytes,
) -> Result<Json<AnswerResponse>, ApiError> {
    require(role, Role::Controller)?;
    s.with_ticket(&id, |_| ())?;
    let req: AnswerRequest = parse(&body)?;
    let config = req.to_config(&s.inner.default_grid, s.inner.workers)?;
    let (dataset_id, query) = s.with_ticket_mut(&id, |t| {
        match t.state {
            TicketState::Submitted => return Err(ApiError::conflict("query must be analyzed before it is answered")),
            TicketState::Answered | TicketState::Rejected => {
                return Err(ApiError::conflict("query already decided"))
            }
            TicketState::Analyzed if t.deciding => return Err(ApiError::conflict("decision in progress")),
            TicketState::Analyzed => {}
        }
        t.deciding = true;
        Ok((t.dataset_id.clone(), t.query.clone()))
    })??;

    let outcome = match s.session(&dataset_id) {
        Ok((_, session)) => session.answer(id.clone(), query, config).await.map_err(ApiError::from),
        Err(e) => Err(e),
    };
    s.with_ticket_mut(&id, |t| {
        t.deciding = false;
        let record = outcome??;
        t.state = match record.decision {
            Decision::Answered => TicketState::Answered,
            Decision::Rejected => TicketState::Rejected,
        };
        t.release = record.analyst_release();
        t.decision = Some(record.clone());
        Ok(Json(AnswerResponse {
            state: t.state,
            decision: record,
        }))
    })?
}

async fn get_odometer(
    State(s): State<AppState>,
    Caller(role): Caller,
    Path(id): Path<String>,
) -> Result<Json<OdometerView>, ApiError> {
    require(role, Role::Controller)?;
    let (_, session) = s.session(&id)?;
    Ok(Json(OdometerView::from(&session.snapshot().await?)))
}

async fn set_delta_g(
    State(s): State<AppState>,
    Caller(role): Caller,
    Path(id): Path<String>,
    body: Bytes,
) -> Result<Json<OdometerView>, ApiError> {
    require(role, Role::Controller)?;
    let (_, session) = s.session(&id)?;
    let req: SetDeltaGRequest = parse(&body)?;
    let delta_g = PrivacyAmount::from_f64(req.delta_g)?;
    Ok(Json(OdometerView::from(&session.set_delta_g(delta_g).await?)))
}
