//! Async client for the gicoord `/api/v1` service.

use std::time::Duration;

use reqwest::{Method, RequestBuilder};
use serde::de::DeserializeOwned;
use serde::Serialize;

use gicoord_api::*;
use gicoord_core::simulator::SimConfig;
use gicoord_core::store::ScenarioDocument;
use gicoord_core::{Event, Strategy};

#[derive(Debug, thiserror::Error)]
pub enum ClientError {
    #[error("server answered {status}: {} ({})", body.message, body.error)]
    Api { status: u16, body: ErrorBody },
    #[error("request failed: {0}")]
    Http(#[from] reqwest::Error),
    #[error("search {0} did not finish in time")]
    Timeout(String),
}

impl ClientError {
    /// Error code from the server, if it sent one.
    pub fn code(&self) -> Option<&str> {
        match self {
            ClientError::Api { body, .. } => Some(&body.error),
            _ => None,
        }
    }
}

pub type Result<T> = std::result::Result<T, ClientError>;

#[derive(Debug, Clone)]
pub struct Client {
    http: reqwest::Client,
    base: String,
}

impl Client {
    /// `base` is the server root, e.g. `http://127.0.0.1:8080`.
    pub fn new(base: &str) -> Self {
        Self { http: reqwest::Client::new(), base: format!("{}{PREFIX}", base.trim_end_matches('/')) }
    }

    fn request(&self, method: Method, path: &str) -> RequestBuilder {
        self.http.request(method, format!("{}{path}", self.base))
    }

    async fn send<T: DeserializeOwned>(&self, req: RequestBuilder) -> Result<T> {
        let resp = req.send().await?;
        let status = resp.status();
        if status.is_success() {
            return Ok(resp.json().await?);
        }
        let text = resp.text().await.unwrap_or_default();
        let body = serde_json::from_str(&text).unwrap_or(ErrorBody {
            error: code::INTERNAL.into(),
            message: text,
            violations: Vec::new(),
            threads: Vec::new(),
            current_version: None,
        });
        Err(ClientError::Api { status: status.as_u16(), body })
    }

    async fn get<T: DeserializeOwned>(&self, path: &str) -> Result<T> {
        self.send(self.request(Method::GET, path)).await
    }

    async fn post<B: Serialize, T: DeserializeOwned>(&self, path: &str, body: &B) -> Result<T> {
        self.send(self.request(Method::POST, path).json(body)).await
    }

    pub async fn world(&self) -> Result<WorldView> {
        self.get("/world").await
    }

    pub async fn set_strategy(&self, expected_version: u64, strategy: &Strategy) -> Result<Accepted> {
        self.post("/strategy", &StrategyRequest { expected_version, strategy: strategy.clone() }).await
    }

    pub async fn choices(&self, cap: Option<usize>) -> Result<ChoicesReply> {
        match cap {
            Some(n) => self.get(&format!("/choices?cap={n}")).await,
            None => self.get("/choices").await,
        }
    }

    pub async fn decide(&self, expected_version: u64, decision: &str) -> Result<ScheduleReply> {
        self.post("/decision", &DecisionRequest { expected_version, decision: decision.into() }).await
    }

    pub async fn schedule(&self) -> Result<ScheduleReply> {
        self.get("/schedule").await
    }

    pub async fn start_search(&self, budget: Option<u64>) -> Result<SearchJob> {
        self.post("/search", &SearchRequest { budget }).await
    }

    pub async fn search(&self, id: &str) -> Result<SearchJob> {
        self.get(&format!("/search/{id}")).await
    }

    pub async fn cancel_search(&self, id: &str) -> Result<SearchJob> {
        self.send(self.request(Method::DELETE, &format!("/search/{id}"))).await
    }

    /// Polls a search until it leaves the running state.
    pub async fn wait_search(&self, id: &str, poll: Duration, timeout: Duration) -> Result<SearchJob> {
        let start = std::time::Instant::now();
        loop {
            let job = self.search(id).await?;
            if job.status != JobStatus::Running {
                return Ok(job);
            }
            if start.elapsed() > timeout {
                return Err(ClientError::Timeout(id.into()));
            }
            tokio::time::sleep(poll).await;
        }
    }

    pub async fn recommendations(&self) -> Result<RecommendationsReply> {
        self.get("/recommendations").await
    }

    pub async fn refine(&self, expected_version: u64, accepted: &[String]) -> Result<StrategyReply> {
        self.post("/refine", &RefineRequest { expected_version, accepted: accepted.to_vec() }).await
    }

    pub async fn allocate(&self, transport_speed: f64) -> Result<AllocationReply> {
        self.post("/allocate", &AllocateRequest { transport_speed }).await
    }

    pub async fn step(&self, expected_version: u64, dt: f64) -> Result<StepReply> {
        self.post("/sim/step", &StepRequest { expected_version, dt }).await
    }

    pub async fn run(&self, expected_version: u64, config: &SimConfig) -> Result<RunReply> {
        self.post("/sim/run", &RunRequest { expected_version, config: config.clone() }).await
    }

    /// Events after cursor `since`, waiting up to `wait_ms` for new ones.
    pub async fn events(&self, since: u64, wait_ms: u64) -> Result<EventsReply> {
        self.get(&format!("/events?since={since}&wait_ms={wait_ms}")).await
    }

    pub async fn inject(&self, expected_version: u64, event: &Event) -> Result<InjectReply> {
        self.post("/events/inject", &InjectRequest { expected_version, event: event.clone() }).await
    }

    pub async fn scenario(&self) -> Result<ScenarioDocument> {
        self.get("/scenario").await
    }

    pub async fn load_scenario(&self, expected_version: u64, document: &ScenarioDocument) -> Result<Accepted> {
        self.post("/scenario", &ScenarioRequest { expected_version, document: document.clone() }).await
    }
}
