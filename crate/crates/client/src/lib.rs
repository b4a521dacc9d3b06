//! Typed client for the riskscope HTTP service.

use reqwest::{Method, StatusCode, Url};
use riskscope_core::api::{
    AnalysisParams, AnalysisResponse, AnalystTicketView, AnswerRequest, AnswerResponse, ControllerTicketView,
    ErrorBody, OdometerView, RegisterDatasetRequest, RegisterDatasetResponse, SetDeltaGRequest, SubmitQueryRequest,
};
use riskscope_core::Query;
use serde::de::DeserializeOwned;
use serde::Serialize;

#[derive(Debug, thiserror::Error)]
pub enum ClientError {
    #[error("invalid base url: {0}")]
    Url(String),

    #[error(transparent)]
    Http(#[from] reqwest::Error),

    #[error("{status} {code}: {message}")]
    Api {
        status: StatusCode,
        code: String,
        message: String,
    },
}

pub type Result<T> = std::result::Result<T, ClientError>;

#[derive(Clone, Debug)]
pub struct RiskscopeClient {
    http: reqwest::Client,
    base: Url,
    token: String,
}

impl RiskscopeClient {
    pub fn new(base: &str, token: impl Into<String>) -> Result<Self> {
        let mut base = Url::parse(base).map_err(|e| ClientError::Url(e.to_string()))?;
        if !base.path().ends_with('/') {
            let path = format!("{}/", base.path());
            base.set_path(&path);
        }
        Ok(Self {
            http: reqwest::Client::new(),
            base,
            token: token.into(),
        })
    }

    fn url(&self, path: &str) -> Result<Url> {
        self.base.join(path).map_err(|e| ClientError::Url(e.to_string()))
    }

    async fn send<B: Serialize, T: DeserializeOwned>(&self, method: Method, url: Url, body: Option<&B>) -> Result<T> {
        let mut req = self.http.request(method, url).bearer_auth(&self.token);
        if let Some(b) = body {
            req = req.json(b);
        }
        let resp = req.send().await?;
        let status = resp.status();
        if status.is_success() {
            return Ok(resp.json().await?);
        }
        let text = resp.text().await?;
        Err(match serde_json::from_str::<ErrorBody>(&text) {
            Ok(body) => ClientError::Api {
                status,
                code: body.error.code,
                message: body.error.message,
            },
            Err(_) => ClientError::Api {
                status,
                code: "unknown".into(),
                message: text,
            },
        })
    }

    async fn get<T: DeserializeOwned>(&self, path: &str) -> Result<T> {
        self.send::<(), T>(Method::GET, self.url(path)?, None).await
    }

    pub async fn register_dataset(&self, req: &RegisterDatasetRequest) -> Result<RegisterDatasetResponse> {
        self.send(Method::POST, self.url("datasets")?, Some(req)).await
    }

    pub async fn submit_query(&self, dataset_id: &str, query: &Query) -> Result<AnalystTicketView> {
        let body = SubmitQueryRequest {
            dataset_id: dataset_id.to_string(),
            query: query.clone(),
        };
        self.send(Method::POST, self.url("queries")?, Some(&body)).await
    }

    pub async fn list_queries(&self) -> Result<Vec<ControllerTicketView>> {
        self.get("queries").await
    }

    /// The ticket as the caller's role sees it, undecoded.
    pub async fn ticket_json(&self, id: &str) -> Result<serde_json::Value> {
        self.get(&format!("queries/{id}")).await
    }

    pub async fn analyst_ticket(&self, id: &str) -> Result<AnalystTicketView> {
        self.get(&format!("queries/{id}")).await
    }

    pub async fn controller_ticket(&self, id: &str) -> Result<ControllerTicketView> {
        self.get(&format!("queries/{id}")).await
    }

    pub async fn analysis(&self, id: &str, params: &AnalysisParams) -> Result<AnalysisResponse> {
        let mut url = self.url(&format!("queries/{id}/analysis"))?;
        {
            let mut pairs = url.query_pairs_mut();
            if let Some(f) = params.mechanism {
                pairs.append_pair("mechanism", f.as_str());
            }
            if let Some(d) = params.delta {
                pairs.append_pair("delta", &d.to_string());
            }
            if let Some(g) = &params.grid {
                pairs.append_pair("grid", g);
            }
            if let Some(s) = params.sensitivity_override {
                pairs.append_pair("sensitivity_override", &s.to_string());
            }
        }
        if url.query() == Some("") {
            url.set_query(None);
        }
        self.send::<(), _>(Method::GET, url, None).await
    }

    pub async fn answer(&self, id: &str, req: &AnswerRequest) -> Result<AnswerResponse> {
        self.send(Method::POST, self.url(&format!("queries/{id}/answer"))?, Some(req))
            .await
    }

    pub async fn odometer(&self, dataset_id: &str) -> Result<OdometerView> {
        self.get(&format!("odometer/{dataset_id}")).await
    }

    pub async fn set_delta_g(&self, dataset_id: &str, delta_g: f64) -> Result<OdometerView> {
        let body = SetDeltaGRequest { delta_g };
        self.send(Method::PUT, self.url(&format!("odometer/{dataset_id}/delta-g"))?, Some(&body))
            .await
    }
}
