//! HTTP ask-tell service under `/v1`.
//!
//! Each campaign lives in `<state dir>/<id>/events.jsonl`. On start every
//! log is replayed, so a restarted service answers exactly as before.
//! Mutations of one campaign are serialized by its mutex; different
//! campaigns proceed in parallel. Surrogate fits and chat calls run on the
//! blocking pool.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::sync::{Arc, Mutex, RwLock};

use anyhow::Context;
use axum::body::Bytes;
use axum::extract::{Path as UrlPath, State};
use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use lodestar_agent::events::{InsightsRecord, Report};
use lodestar_agent::reasoning::{hypothesis_table, HypothesisRow, Overview};
use lodestar_agent::{AgentError, Campaign, CampaignConfig, ChatBackend, Clock, JsonlSink, Llm, PromptBundle};
use lodestar_core::campaign::{CampaignStatus, InsightsObject, Trial, TrialOrigin};
use lodestar_core::compass::{validate_compass, ExperimentCompass};
use lodestar_core::metrics::{compute_metrics, MetricReport, TrajectorySet, DEFAULT_CVAR_LEVELS, DEFAULT_IMP_HORIZONS};
use lodestar_core::space::PointAssignment;

pub const EVENTS_FILE: &str = "events.jsonl";

type Shared = Arc<Mutex<Campaign>>;

#[derive(Clone)]
pub struct AppState {
    inner: Arc<Inner>,
}

struct Inner {
    state_dir: PathBuf,
    campaigns: RwLock<BTreeMap<String, Shared>>,
    backend: Option<Arc<dyn ChatBackend>>,
    prompts: PromptBundle,
}

impl AppState {
    /// Replays every campaign found under `state_dir`.
    pub fn open(state_dir: &Path, backend: Option<Arc<dyn ChatBackend>>) -> anyhow::Result<Self> {
        std::fs::create_dir_all(state_dir).with_context(|| format!("creating {}", state_dir.display()))?;
        let mut campaigns = BTreeMap::new();
        for entry in std::fs::read_dir(state_dir)? {
            let dir = entry?.path();
            let log = dir.join(EVENTS_FILE);
            if !log.is_file() {
                continue;
            }
            let (events, sink) = JsonlSink::recover(&log)?;
            if events.is_empty() {
                continue;
            }
            let campaign = Campaign::replay(events, Box::new(sink), Clock::System)
                .with_context(|| format!("replaying {}", log.display()))?;
            campaigns.insert(campaign.id().to_string(), Arc::new(Mutex::new(campaign)));
        }
        Ok(AppState {
            inner: Arc::new(Inner {
                state_dir: state_dir.to_path_buf(),
                campaigns: RwLock::new(campaigns),
                backend,
                prompts: PromptBundle::default(),
            }),
        })
    }

    pub fn campaign_ids(&self) -> Vec<String> {
        self.inner.campaigns.read().expect("campaign map").keys().cloned().collect()
    }

    fn get(&self, id: &str) -> Result<Shared, ApiError> {
        self.inner
            .campaigns
            .read()
            .expect("campaign map")
            .get(id)
            .cloned()
            .ok_or_else(|| ApiError::new(StatusCode::NOT_FOUND, format!("no campaign {id}")))
    }
}

pub fn router(state: AppState) -> Router {
    Router::new()
        .route("/v1/campaigns", post(create).get(list))
        .route("/v1/campaigns/{id}", get(show))
        .route("/v1/campaigns/{id}/suggest", post(suggest))
        .route("/v1/campaigns/{id}/observe", post(observe))
        .route("/v1/campaigns/{id}/insights", get(insights))
        .route("/v1/campaigns/{id}/report", get(report))
        .route("/v1/campaigns/{id}/finalize", post(finalize))
        .with_state(state)
}

pub async fn serve(port: u16, state: AppState) -> anyhow::Result<()> {
    let listener = tokio::net::TcpListener::bind(("0.0.0.0", port))
        .await
        .with_context(|| format!("binding port {port}"))?;
    eprintln!("listening on {}", listener.local_addr()?);
    axum::serve(listener, router(state))
        .with_graceful_shutdown(async {
            let _ = tokio::signal::ctrl_c().await;
        })
        .await?;
    Ok(())
}

#[derive(Debug)]
pub struct ApiError {
    status: StatusCode,
    message: String,
}

impl ApiError {
    fn new(status: StatusCode, message: impl Into<String>) -> Self {
        ApiError {
            status,
            message: message.into(),
        }
    }

    fn bad_request(message: impl Into<String>) -> Self {
        Self::new(StatusCode::BAD_REQUEST, message)
    }
}

impl From<AgentError> for ApiError {
    fn from(err: AgentError) -> Self {
        let status = match &err {
            AgentError::AlreadyObserved(_) => StatusCode::CONFLICT,
            AgentError::UnknownTrial(_)
            | AgentError::InvalidObservation(_)
            | AgentError::EmptyCampaign(_)
            | AgentError::Core(_) => StatusCode::UNPROCESSABLE_ENTITY,
            _ => StatusCode::INTERNAL_SERVER_ERROR,
        };
        ApiError::new(status, err.to_string())
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        (self.status, Json(json!({ "error": self.message }))).into_response()
    }
}

type ApiResult = Result<Json<Value>, ApiError>;

fn parse_body<T: for<'de> Deserialize<'de>>(body: &Bytes) -> Result<T, ApiError> {
    serde_json::from_slice(body).map_err(|e| ApiError::bad_request(format!("malformed body: {e}")))
}

fn to_json<T: Serialize>(value: &T) -> ApiResult {
    Ok(Json(serde_json::to_value(value).expect("response serializes")))
}

/// Runs `f` on the blocking pool with the campaign locked.
async fn with_campaign<T: Send + 'static>(
    state: &AppState,
    id: &str,
    f: impl FnOnce(&mut Campaign, Option<Llm<'_>>) -> Result<T, ApiError> + Send + 'static,
) -> Result<T, ApiError> {
    let shared = state.get(id)?;
    let inner = state.inner.clone();
    tokio::task::spawn_blocking(move || {
        let mut campaign = shared.lock().map_err(|_| ApiError::new(StatusCode::INTERNAL_SERVER_ERROR, "campaign lock poisoned"))?;
        let llm = inner.backend.as_deref().map(|backend| Llm {
            backend,
            prompts: &inner.prompts,
        });
        f(&mut campaign, llm)
    })
    .await
    .map_err(|e| ApiError::new(StatusCode::INTERNAL_SERVER_ERROR, e.to_string()))?
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct CreateRequest {
    compass: Value,
    #[serde(default)]
    seed: u64,
    #[serde(default)]
    budget: Option<usize>,
}

async fn create(State(state): State<AppState>, body: Bytes) -> Result<(StatusCode, Json<Value>), ApiError> {
    let request: CreateRequest = parse_body(&body)?;
    let compass: ExperimentCompass = serde_json::from_value(request.compass)
        .map_err(|e| ApiError::bad_request(format!("malformed compass: {e}")))?;
    let problems = validate_compass(&compass);
    if !problems.is_empty() {
        return Err(ApiError::new(StatusCode::UNPROCESSABLE_ENTITY, problems.join("; ")));
    }
    let mut config = CampaignConfig::for_compass(&compass, request.seed);
    if let Some(b) = request.budget {
        config.budget = b;
    }
    if config.budget == 0 {
        return Err(ApiError::new(StatusCode::UNPROCESSABLE_ENTITY, "budget must be positive"));
    }
    let inner = state.inner.clone();
    let view = tokio::task::spawn_blocking(move || -> Result<Value, ApiError> {
        let mut map = inner.campaigns.write().expect("campaign map");
        let mut n = map.len();
        let id = loop {
            let id = format!("c{n:04}");
            if !map.contains_key(&id) && !inner.state_dir.join(&id).exists() {
                break id;
            }
            n += 1;
        };
        let dir = inner.state_dir.join(&id);
        let io = |e: std::io::Error| ApiError::new(StatusCode::INTERNAL_SERVER_ERROR, e.to_string());
        std::fs::create_dir_all(&dir).map_err(io)?;
        let sink = JsonlSink::open(&dir.join(EVENTS_FILE))?;
        let campaign = match Campaign::create(&id, compass, config, Box::new(sink), Clock::System) {
            Ok(c) => c,
            Err(e) => {
                let _ = std::fs::remove_dir_all(&dir);
                return Err(e.into());
            }
        };
        let view = serde_json::to_value(CampaignView::of(&campaign)).expect("view serializes");
        map.insert(id, Arc::new(Mutex::new(campaign)));
        Ok(view)
    })
    .await
    .map_err(|e| ApiError::new(StatusCode::INTERNAL_SERVER_ERROR, e.to_string()))??;
    Ok((StatusCode::CREATED, Json(view)))
}

#[derive(Debug, Serialize)]
struct ListEntry {
    id: String,
    title: String,
    status: CampaignStatus,
    spent: usize,
    budget: usize,
}

async fn list(State(state): State<AppState>) -> ApiResult {
    let shared: Vec<Shared> = state.inner.campaigns.read().expect("campaign map").values().cloned().collect();
    let mut out = Vec::new();
    for c in shared {
        let c = c.lock().map_err(|_| ApiError::new(StatusCode::INTERNAL_SERVER_ERROR, "campaign lock poisoned"))?;
        out.push(ListEntry {
            id: c.id().to_string(),
            title: c.compass().title.clone(),
            status: c.state().status,
            spent: c.state().spent(),
            budget: c.config().budget,
        });
    }
    to_json(&out)
}

#[derive(Debug, Serialize)]
#[serde(rename_all = "lowercase")]
enum TrialStatus {
    Open,
    Observed,
    Failed,
}

#[derive(Debug, Serialize)]
struct TrialView {
    id: String,
    round: usize,
    point: PointAssignment,
    origin: TrialOrigin,
    status: TrialStatus,
    #[serde(skip_serializing_if = "Option::is_none")]
    value: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    recorded_at: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    reason: Option<String>,
}

#[derive(Debug, Serialize)]
struct BestView {
    trial_id: String,
    value: f64,
    point: PointAssignment,
}

#[derive(Debug, Serialize)]
struct CampaignView {
    id: String,
    title: String,
    status: CampaignStatus,
    compass: ExperimentCompass,
    /// Index of the next round to propose.
    round: usize,
    budget: usize,
    spent: usize,
    remaining: usize,
    trials: Vec<TrialView>,
    best: Option<BestView>,
    flags: Vec<String>,
    events: usize,
}

impl CampaignView {
    fn of(c: &Campaign) -> Self {
        let state = c.state();
        let trials = state
            .trials
            .iter()
            .map(|t| {
                let obs = state.observation(&t.id);
                let failure = state.failures.iter().find(|f| f.trial_id == t.id);
                TrialView {
                    id: t.id.clone(),
                    round: t.round,
                    point: t.point.clone(),
                    origin: t.origin,
                    status: match (obs, failure) {
                        (Some(_), _) => TrialStatus::Observed,
                        (None, Some(_)) => TrialStatus::Failed,
                        (None, None) => TrialStatus::Open,
                    },
                    value: obs.map(|o| o.value),
                    recorded_at: obs.map(|o| o.recorded_at.to_rfc3339()),
                    reason: failure.map(|f| f.reason.clone()),
                }
            })
            .collect();
        CampaignView {
            id: c.id().to_string(),
            title: c.compass().title.clone(),
            status: state.status,
            compass: c.compass().clone(),
            round: state.next_round(),
            budget: c.config().budget,
            spent: state.spent(),
            remaining: c.remaining(),
            trials,
            best: best_of(c),
            flags: c.flags(),
            events: c.events().len(),
        }
    }
}

fn best_of(c: &Campaign) -> Option<BestView> {
    c.state().best().map(|(t, v)| BestView {
        trial_id: t.id.clone(),
        value: v,
        point: t.point.clone(),
    })
}

async fn show(State(state): State<AppState>, UrlPath(id): UrlPath<String>) -> ApiResult {
    let view = with_campaign(&state, &id, |c, _| Ok(CampaignView::of(c))).await?;
    to_json(&view)
}

#[derive(Debug, Serialize)]
struct SuggestResponse {
    round: usize,
    trials: Vec<Trial>,
    exhausted: bool,
    /// Degradations raised while producing this suggestion.
    flags: Vec<String>,
}

async fn suggest(State(state): State<AppState>, UrlPath(id): UrlPath<String>) -> ApiResult {
    let response = with_campaign(&state, &id, |c, llm| {
        let before = c.events().len();
        let s = c.suggest(llm)?;
        let flags = c.events()[before..].iter().flat_map(|e| e.payload.flags().iter().cloned()).collect();
        Ok(SuggestResponse {
            round: s.round,
            trials: s.trials,
            exhausted: s.exhausted,
            flags,
        })
    })
    .await?;
    to_json(&response)
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct ObserveRequest {
    trial_id: String,
    value: Option<f64>,
    #[serde(default)]
    failed: Option<String>,
}

async fn observe(State(state): State<AppState>, UrlPath(id): UrlPath<String>, body: Bytes) -> ApiResult {
    let request: ObserveRequest = parse_body(&body)?;
    let response = with_campaign(&state, &id, move |c, _| {
        if c.is_finished() {
            return Err(ApiError::new(StatusCode::CONFLICT, "campaign is finished"));
        }
        let observation = match (request.value, request.failed) {
            (Some(v), None) => Some(c.observe(&request.trial_id, v)?),
            (None, Some(reason)) => {
                c.fail(&request.trial_id, &reason)?;
                None
            }
            _ => return Err(ApiError::bad_request("give exactly one of value and failed")),
        };
        Ok(json!({
            "observation": observation,
            "round_complete": c.state().open_trials().is_empty(),
            "remaining": c.remaining(),
        }))
    })
    .await?;
    Ok(Json(response))
}

#[derive(Debug, Serialize)]
struct InsightsResponse {
    overview: Option<Overview>,
    history: Vec<InsightsObject>,
    records: Vec<InsightsRecord>,
    hypotheses: Vec<HypothesisRow>,
    notes: usize,
}

async fn insights(State(state): State<AppState>, UrlPath(id): UrlPath<String>) -> ApiResult {
    let response = with_campaign(&state, &id, |c, _| {
        Ok(InsightsResponse {
            overview: c.overview().cloned(),
            history: c.state().insight_history.clone(),
            records: c.insight_records().to_vec(),
            hypotheses: hypothesis_table(&c.state().insight_history),
            notes: c.notes().len(),
        })
    })
    .await?;
    to_json(&response)
}

#[derive(Debug, Serialize)]
struct ReportResponse {
    best: Option<BestView>,
    trajectory: Vec<lodestar_agent::TrajectoryPoint>,
    /// Single-campaign metrics; absent before the first observation.
    metrics: Option<MetricReport>,
    hypotheses: Vec<HypothesisRow>,
    report: Option<Report>,
}

async fn report(State(state): State<AppState>, UrlPath(id): UrlPath<String>) -> ApiResult {
    let response = with_campaign(&state, &id, |c, _| {
        let trajectory = c.trajectory();
        let values: Vec<f64> = trajectory.iter().map(|p| p.value).collect();
        let metrics = if values.is_empty() {
            None
        } else {
            let set = TrajectorySet::new(vec![values], c.compass().space.direction, c.compass().budget.candidates_per_round.max(1));
            compute_metrics(&set, &DEFAULT_CVAR_LEVELS, &DEFAULT_IMP_HORIZONS).ok()
        };
        Ok(ReportResponse {
            best: best_of(c),
            trajectory,
            metrics,
            hypotheses: hypothesis_table(&c.state().insight_history),
            report: c.report().cloned(),
        })
    })
    .await?;
    to_json(&response)
}

async fn finalize(State(state): State<AppState>, UrlPath(id): UrlPath<String>) -> ApiResult {
    let report = with_campaign(&state, &id, |c, llm| Ok(c.finalize(llm)?)).await?;
    to_json(&report)
}
