//! HTTP annotation service.
//!
//! Hosts studies, hands each annotator the least-annotated question they
//! have not yet answered, and records answers in an append-only log per
//! study. All state changes of one study go through that study's lock, so
//! serve, submit and expiry are serialized per study while different
//! studies proceed independently.

pub mod error;
pub mod state;
pub mod store;

use std::collections::BTreeMap;
use std::net::SocketAddr;
use std::path::{Path, PathBuf};
use std::sync::{Arc, Mutex, RwLock};
use std::time::{Duration, Instant};

use axum::extract::{Path as UrlPath, Query, State};
use axum::http::{header, StatusCode};
use axum::response::IntoResponse;
use axum::routing::{get, post};
use axum::{Json, Router};
use chrono::Utc;
use serde::{Deserialize, Serialize};

pub use error::{ErrorBody, ServiceError};
pub use state::{NextTuple, Progress, ServedTuple, StudyManifest, StudyState};
use store::StudyStore;

use crate::io;
use crate::model::{StudyConfig, Term, TermId, Tuple4};
use crate::scoring::{compute_scores, Strictness};
use crate::tuplegen::generate_tuples;

/// Default idle window after which an unanswered assignment returns to the pool.
pub const DEFAULT_EXPIRY: Duration = Duration::from_secs(600);

#[derive(Clone, Debug)]
pub struct ServiceConfig {
    pub data_dir: PathBuf,
    pub expiry: Duration,
    /// Directory of built UI assets served at `/`.
    pub ui_dir: Option<PathBuf>,
}

impl ServiceConfig {
    pub fn new(data_dir: impl Into<PathBuf>) -> Self {
        ServiceConfig {
            data_dir: data_dir.into(),
            expiry: DEFAULT_EXPIRY,
            ui_dir: None,
        }
    }
}

struct Study {
    state: StudyState,
    store: StudyStore,
}

/// All hosted studies.
pub struct Registry {
    root: PathBuf,
    expiry: Duration,
    studies: RwLock<BTreeMap<String, Arc<Mutex<Study>>>>,
    creating: Mutex<()>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum TermInput {
    Text(String),
    Full { id: String, text: String },
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct ConfigInput {
    pub property_name: Option<String>,
    pub best_prompt: Option<String>,
    pub worst_prompt: Option<String>,
    pub tuple_multiplier: Option<f64>,
    pub annotations_per_tuple: Option<u32>,
    pub rng_seed: Option<u64>,
}

impl ConfigInput {
    fn resolve(self) -> StudyConfig {
        let mut c = StudyConfig::for_property(self.property_name.as_deref().unwrap_or("positive sentiment"));
        if let Some(p) = self.best_prompt {
            c.best_prompt = p;
        }
        if let Some(p) = self.worst_prompt {
            c.worst_prompt = p;
        }
        if let Some(m) = self.tuple_multiplier {
            c.tuple_multiplier = m;
        }
        if let Some(q) = self.annotations_per_tuple {
            c.annotations_per_tuple = q;
        }
        if let Some(s) = self.rng_seed {
            c.rng_seed = s;
        }
        c
    }
}

/// Body of `POST /studies`.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct CreateStudy {
    #[serde(default)]
    pub study_id: Option<String>,
    pub terms: Vec<TermInput>,
    #[serde(default)]
    pub config: ConfigInput,
    /// A ready-made design; generated from the config when absent.
    #[serde(default)]
    pub tuples: Option<Vec<Tuple4>>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StudyCreated {
    pub study_id: String,
    pub terms: usize,
    pub tuples: usize,
    pub config: StudyConfig,
}

/// Body of `POST /studies/{id}/responses`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SubmitRequest {
    pub annotator_id: String,
    pub tuple_id: String,
    pub best: String,
    pub worst: String,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScoreEntry {
    pub term_id: TermId,
    pub text: String,
    pub score: f64,
    pub rank: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScoresBody {
    pub study_id: String,
    pub provisional: bool,
    pub complete: bool,
    pub responses: usize,
    pub entries: Vec<ScoreEntry>,
    pub unscored: Vec<TermId>,
}

fn valid_study_id(id: &str) -> bool {
    !id.is_empty() && id.len() <= 64 && id.chars().all(|c| c.is_ascii_alphanumeric() || c == '-' || c == '_')
}

impl Registry {
    /// Opens the data directory and replays every study found there.
    pub fn open(root: &Path, expiry: Duration) -> crate::Result<Self> {
        std::fs::create_dir_all(root).map_err(|e| crate::Error::io(root, e))?;
        let mut studies = BTreeMap::new();
        for dir in store::study_dirs(root)? {
            let (manifest, responses, store) = StudyStore::open(&dir)?;
            let id = manifest.study_id.clone();
            let mut state = StudyState::new(manifest, expiry)
                .map_err(|e| crate::Error::invalid(format!("{}: {e}", dir.display())))?;
            let replayed = responses.len();
            for r in responses {
                state
                    .apply(r)
                    .map_err(|e| crate::Error::invalid(format!("{}: replay failed: {e}", dir.display())))?;
            }
            log::info!("loaded study {id} with {replayed} responses");
            studies.insert(id, Arc::new(Mutex::new(Study { state, store })));
        }
        Ok(Registry {
            root: root.to_path_buf(),
            expiry,
            studies: RwLock::new(studies),
            creating: Mutex::new(()),
        })
    }

    fn study(&self, id: &str) -> Result<Arc<Mutex<Study>>, ServiceError> {
        self.studies
            .read()
            .expect("registry lock")
            .get(id)
            .cloned()
            .ok_or_else(|| ServiceError::UnknownStudy(id.to_string()))
    }

    fn with_study<T>(&self, id: &str, f: impl FnOnce(&mut Study) -> Result<T, ServiceError>) -> Result<T, ServiceError> {
        let study = self.study(id)?;
        let mut guard = study.lock().expect("study lock");
        f(&mut guard)
    }

    pub fn study_ids(&self) -> Vec<String> {
        self.studies.read().expect("registry lock").keys().cloned().collect()
    }

    pub fn create_study(&self, req: CreateStudy) -> Result<StudyCreated, ServiceError> {
        let config = req.config.resolve();
        config.validate().map_err(|e| ServiceError::invalid("config", e.to_string()))?;
        if req.terms.is_empty() {
            return Err(ServiceError::invalid("terms", "a study needs terms"));
        }
        let width = crate::model::id_width(req.terms.len());
        let mut terms = Vec::with_capacity(req.terms.len());
        let mut ids = std::collections::HashSet::new();
        let mut texts = std::collections::HashSet::new();
        for (i, t) in req.terms.into_iter().enumerate() {
            let term = match t {
                TermInput::Text(text) => Term::new(format!("t{i:0width$}"), text),
                TermInput::Full { id, text } => Term::new(id, text),
            }
            .map_err(|e| ServiceError::invalid("terms", format!("term {i}: {e}")))?;
            if !ids.insert(term.id.clone()) {
                return Err(ServiceError::invalid("terms", format!("duplicate term id {}", term.id)));
            }
            if !texts.insert(term.text.clone()) {
                return Err(ServiceError::invalid("terms", format!("duplicate term text {:?}", term.text)));
            }
            terms.push(term);
        }
        let tuples = match req.tuples {
            Some(t) => t,
            None => generate_tuples(&terms, config.tuple_multiplier, config.rng_seed)
                .map_err(|e| ServiceError::invalid("terms", e.to_string()))?,
        };

        let _creating = self.creating.lock().expect("create lock");
        let study_id = match req.study_id {
            Some(id) => {
                if !valid_study_id(&id) {
                    return Err(ServiceError::invalid("study_id", "study ids use letters, digits, '-' and '_'"));
                }
                if self.studies.read().expect("registry lock").contains_key(&id) {
                    return Err(ServiceError::invalid("study_id", format!("study {id} already exists")));
                }
                id
            }
            None => {
                let taken = self.studies.read().expect("registry lock");
                (1..)
                    .map(|i| format!("s{i:04}"))
                    .find(|id| !taken.contains_key(id))
                    .expect("unbounded")
            }
        };
        let manifest = StudyManifest {
            study_id: study_id.clone(),
            config: config.clone(),
            terms,
            tuples,
            created: Utc::now(),
        };
        let state = StudyState::new(manifest.clone(), self.expiry)?;
        let store = StudyStore::create(&self.root, &manifest)?;
        let created = StudyCreated {
            study_id: study_id.clone(),
            terms: manifest.terms.len(),
            tuples: manifest.tuples.len(),
            config,
        };
        self.studies
            .write()
            .expect("registry lock")
            .insert(study_id, Arc::new(Mutex::new(Study { state, store })));
        Ok(created)
    }

    pub fn manifest(&self, id: &str) -> Result<StudyManifest, ServiceError> {
        self.with_study(id, |s| Ok(s.state.manifest().clone()))
    }

    pub fn next_tuple(&self, id: &str, annotator: &str) -> Result<NextTuple, ServiceError> {
        self.with_study(id, |s| s.state.next_tuple(annotator, Instant::now()))
    }

    /// Validates, persists, then applies a submission.
    pub fn submit(&self, id: &str, req: &SubmitRequest) -> Result<crate::model::Response, ServiceError> {
        self.with_study(id, |s| {
            let response = s.state.validate_submission(
                &req.annotator_id,
                &req.tuple_id,
                &req.best,
                &req.worst,
                Instant::now(),
                Some(Utc::now()),
            )?;
            s.store.append(&response)?;
            s.state.apply(response.clone())?;
            Ok(response)
        })
    }

    pub fn progress(&self, id: &str) -> Result<Progress, ServiceError> {
        self.with_study(id, |s| Ok(s.state.progress()))
    }

    pub fn scores(&self, id: &str, provisional: bool) -> Result<ScoresBody, ServiceError> {
        self.with_study(id, |s| {
            let complete = s.state.is_complete();
            if !provisional && !complete {
                return Err(ServiceError::Incomplete);
            }
            let texts: BTreeMap<&TermId, &str> =
                s.state.manifest().terms.iter().map(|t| (&t.id, t.text.as_str())).collect();
            let responses = s.state.responses();
            let (entries, unscored) = if responses.is_empty() {
                (Vec::new(), s.state.tuple_set().term_ids())
            } else {
                let scores = compute_scores(s.state.tuple_set(), responses, Strictness::Permissive)?;
                let entries = scores
                    .lexicon
                    .entries()
                    .iter()
                    .map(|e| ScoreEntry {
                        term_id: e.term_id.clone(),
                        text: texts[&e.term_id].to_string(),
                        score: e.score,
                        rank: e.rank,
                    })
                    .collect();
                (entries, scores.unscored)
            };
            Ok(ScoresBody {
                study_id: id.to_string(),
                provisional: !complete,
                complete,
                responses: responses.len(),
                entries,
                unscored,
            })
        })
    }

    /// Collected responses in the core responses CSV format.
    pub fn export_csv(&self, id: &str) -> Result<Vec<u8>, ServiceError> {
        self.with_study(id, |s| Ok(io::responses_to_csv(s.state.responses())))
    }

    pub fn terms_csv(&self, id: &str) -> Result<Vec<u8>, ServiceError> {
        self.with_study(id, |s| Ok(io::terms_to_csv(&s.state.manifest().terms)))
    }

    pub fn tuples_csv(&self, id: &str) -> Result<Vec<u8>, ServiceError> {
        self.with_study(id, |s| Ok(io::tuples_to_csv(&s.state.manifest().tuples)))
    }
}

fn csv_response(body: Vec<u8>) -> impl IntoResponse {
    ([(header::CONTENT_TYPE, "text/csv; charset=utf-8")], body)
}

#[derive(Deserialize)]
struct NextQuery {
    annotator: String,
}

#[derive(Deserialize)]
struct ScoresQuery {
    #[serde(default)]
    provisional: bool,
    #[serde(default)]
    format: Option<String>,
}

type AppState = Arc<Registry>;

async fn create_study(State(reg): State<AppState>, Json(req): Json<CreateStudy>) -> Result<impl IntoResponse, ServiceError> {
    let created = reg.create_study(req)?;
    Ok((StatusCode::CREATED, Json(created)))
}

async fn list_studies(State(reg): State<AppState>) -> Json<Vec<String>> {
    Json(reg.study_ids())
}

async fn get_study(State(reg): State<AppState>, UrlPath(id): UrlPath<String>) -> Result<impl IntoResponse, ServiceError> {
    let m = reg.manifest(&id)?;
    Ok(Json(StudyCreated {
        study_id: m.study_id,
        terms: m.terms.len(),
        tuples: m.tuples.len(),
        config: m.config,
    }))
}

async fn next_tuple(
    State(reg): State<AppState>,
    UrlPath(id): UrlPath<String>,
    Query(q): Query<NextQuery>,
) -> Result<Json<NextTuple>, ServiceError> {
    Ok(Json(reg.next_tuple(&id, &q.annotator)?))
}

async fn submit(
    State(reg): State<AppState>,
    UrlPath(id): UrlPath<String>,
    Json(req): Json<SubmitRequest>,
) -> Result<impl IntoResponse, ServiceError> {
    let r = reg.submit(&id, &req)?;
    Ok((StatusCode::CREATED, Json(r)))
}

async fn progress(State(reg): State<AppState>, UrlPath(id): UrlPath<String>) -> Result<Json<Progress>, ServiceError> {
    Ok(Json(reg.progress(&id)?))
}

async fn scores(
    State(reg): State<AppState>,
    UrlPath(id): UrlPath<String>,
    Query(q): Query<ScoresQuery>,
) -> Result<axum::response::Response, ServiceError> {
    let body = reg.scores(&id, q.provisional)?;
    match q.format.as_deref() {
        None | Some("json") => Ok(Json(body).into_response()),
        Some("tsv") => {
            let mut out = String::new();
            for e in &body.entries {
                out.push_str(&format!("{}\t{}\n", e.text, io::format_score(e.score)));
            }
            Ok(([(header::CONTENT_TYPE, "text/tab-separated-values; charset=utf-8")], out).into_response())
        }
        Some(other) => Err(ServiceError::invalid("format", format!("unknown format {other:?}"))),
    }
}

async fn export(State(reg): State<AppState>, UrlPath(id): UrlPath<String>) -> Result<impl IntoResponse, ServiceError> {
    Ok(csv_response(reg.export_csv(&id)?))
}

async fn terms(State(reg): State<AppState>, UrlPath(id): UrlPath<String>) -> Result<impl IntoResponse, ServiceError> {
    Ok(csv_response(reg.terms_csv(&id)?))
}

async fn tuples(State(reg): State<AppState>, UrlPath(id): UrlPath<String>) -> Result<impl IntoResponse, ServiceError> {
    Ok(csv_response(reg.tuples_csv(&id)?))
}

pub fn router(registry: Arc<Registry>, ui_dir: Option<&Path>) -> Router {
    let api = Router::new()
        .route("/studies", post(create_study).get(list_studies))
        .route("/studies/{id}", get(get_study))
        .route("/studies/{id}/next", get(next_tuple))
        .route("/studies/{id}/responses", post(submit))
        .route("/studies/{id}/progress", get(progress))
        .route("/studies/{id}/scores", get(scores))
        .route("/studies/{id}/export", get(export))
        .route("/studies/{id}/tuples", get(tuples))
        .route("/studies/{id}/terms", get(terms))
        .with_state(registry);
    match ui_dir {
        Some(dir) => api.fallback_service(tower_http::services::ServeDir::new(dir)),
        None => api,
    }
}

/// Serves until `shutdown` resolves.
pub async fn serve(
    listener: tokio::net::TcpListener,
    app: Router,
    shutdown: impl std::future::Future<Output = ()> + Send + 'static,
) -> std::io::Result<()> {
    axum::serve(listener, app).with_graceful_shutdown(shutdown).await
}

/// A service running on a background thread; stops on [`ServerHandle::stop`] or drop.
pub struct ServerHandle {
    addr: SocketAddr,
    stop: Option<tokio::sync::oneshot::Sender<()>>,
    thread: Option<std::thread::JoinHandle<()>>,
}

impl ServerHandle {
    pub fn start(config: &ServiceConfig, addr: SocketAddr) -> crate::Result<Self> {
        let registry = Arc::new(Registry::open(&config.data_dir, config.expiry)?);
        let app = router(registry, config.ui_dir.as_deref());
        let std_listener = std::net::TcpListener::bind(addr).map_err(|e| crate::Error::io(&config.data_dir, e))?;
        std_listener
            .set_nonblocking(true)
            .map_err(|e| crate::Error::io(&config.data_dir, e))?;
        let addr = std_listener.local_addr().map_err(|e| crate::Error::io(&config.data_dir, e))?;
        let (tx, rx) = tokio::sync::oneshot::channel::<()>();
        let thread = std::thread::spawn(move || {
            let rt = tokio::runtime::Builder::new_multi_thread()
                .worker_threads(2)
                .enable_all()
                .build()
                .expect("tokio runtime");
            rt.block_on(async move {
                let listener = tokio::net::TcpListener::from_std(std_listener).expect("listener");
                if let Err(e) = serve(listener, app, async {
                    let _ = rx.await;
                })
                .await
                {
                    log::error!("server stopped: {e}");
                }
            });
        });
        Ok(ServerHandle {
            addr,
            stop: Some(tx),
            thread: Some(thread),
        })
    }

    pub fn addr(&self) -> SocketAddr {
        self.addr
    }

    pub fn url(&self) -> String {
        format!("http://{}", self.addr)
    }

    pub fn stop(mut self) {
        self.shutdown();
    }

    fn shutdown(&mut self) {
        if let Some(tx) = self.stop.take() {
            let _ = tx.send(());
        }
        if let Some(t) = self.thread.take() {
            let _ = t.join();
        }
    }
}

impl Drop for ServerHandle {
    fn drop(&mut self) {
        self.shutdown();
    }
}
