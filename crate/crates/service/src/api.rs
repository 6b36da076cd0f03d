//! HTTP routes. Every handler returns either JSON or an [`ApiError`] body.

use std::sync::Arc;

use axum::extract::{FromRequest, Path, Query, Request, State};
use axum::http::{header, HeaderValue, StatusCode};
use axum::middleware::{self, Next};
use axum::response::{IntoResponse, Response};
use axum::routing::{delete, get, post};
use axum::{Json, Router};
use chrono::{DateTime, Utc};
use dashmap::DashMap;
use persona_feedback_core::analytics::SnapshotIndex;
use persona_feedback_core::analytics::{EventKind, SessionEvent, SessionLog};
use persona_feedback_core::clock::{from_millis, Clock, IdSource, SystemClock, UuidIds};
use persona_feedback_core::engine::FeedbackRequest;
use persona_feedback_core::history::{ContextStatus, Selection};
use persona_feedback_core::persona::{section_guidance, Sections};
use persona_feedback_core::prompt::parse_few_shot;
use persona_feedback_core::provider::AuditingProvider;
use persona_feedback_core::text::{canonical_newlines, count_words};
use persona_feedback_core::{
    analyze_corpus, attribute_contribution, compute_stats, focus_timeline, AttributeContribution,
    CardId, CompletionProvider, FeedbackCard, FeedbackEngine, MockProvider, Persona, PersonaEdit,
    PersonaId, PromptBundle, RemoteProvider,
};
use serde::{Deserialize, Serialize};
use tokio::sync::{Mutex, OwnedMutexGuard, Semaphore};

use crate::config::{ProviderKind, ServiceConfig};
use crate::error::{ApiError, ErrorCode};
use crate::store::{DocumentRecord, Store};

/// JSON body extractor whose rejections use the service error format.
#[derive(FromRequest)]
#[from_request(via(axum::Json), rejection(ApiError))]
pub struct ApiJson<T>(pub T);

type ApiResult<T> = Result<T, ApiError>;

pub struct AppState {
    pub config: ServiceConfig,
    pub store: Store,
    pub engine: FeedbackEngine,
    clock: Arc<dyn Clock>,
    object_ids: Arc<dyn IdSource>,
    doc_locks: DashMap<String, Arc<Mutex<()>>>,
    persona_locks: DashMap<String, Arc<Mutex<()>>>,
    in_flight: Semaphore,
}

impl AppState {
    /// State with an explicit provider, clock and id sources. `card_ids` names
    /// feedback cards; `object_ids` names documents and personas.
    pub fn new(
        config: ServiceConfig,
        provider: Arc<dyn CompletionProvider>,
        clock: Arc<dyn Clock>,
        card_ids: Arc<dyn IdSource>,
        object_ids: Arc<dyn IdSource>,
    ) -> anyhow::Result<Self> {
        let store = Store::open(&config.data_dir)?;
        let mut engine = FeedbackEngine::new(provider)
            .with_clock(clock.clone())
            .with_ids(card_ids);
        if let Some(path) = &config.few_shot {
            let text = std::fs::read_to_string(path)
                .map_err(|e| anyhow::anyhow!("reading few-shot file {}: {e}", path.display()))?;
            engine = engine.with_few_shot(parse_few_shot(&text)?);
        }
        if let Some(prompt) = &config.condense_prompt {
            engine = engine.with_condense_prompt(prompt.clone());
        }
        Ok(Self {
            in_flight: Semaphore::new(config.max_in_flight.max(1)),
            config,
            store,
            engine,
            clock,
            object_ids,
            doc_locks: DashMap::new(),
            persona_locks: DashMap::new(),
        })
    }

    /// Production state: provider chosen by the configuration, system clock,
    /// random ids.
    pub fn from_config(config: ServiceConfig) -> anyhow::Result<Self> {
        config.validate()?;
        let provider: Arc<dyn CompletionProvider> = match config.provider {
            ProviderKind::Mock => wrap_audit(MockProvider::new(), &config, vec![])?,
            ProviderKind::Remote => {
                let remote = config.remote.clone().unwrap_or_default();
                let key = config.api_key();
                let secrets = key.iter().cloned().collect();
                wrap_audit(RemoteProvider::new(&remote.base_url, key), &config, secrets)?
            }
        };
        Self::new(
            config,
            provider,
            Arc::new(SystemClock),
            Arc::new(UuidIds),
            Arc::new(UuidIds),
        )
    }

    pub fn now(&self) -> DateTime<Utc> {
        self.clock.now()
    }

    async fn lock_document(&self, id: &str) -> OwnedMutexGuard<()> {
        let lock = self.doc_locks.entry(id.to_string()).or_default().clone();
        lock.lock_owned().await
    }

    async fn lock_persona(&self, id: &str) -> OwnedMutexGuard<()> {
        let lock = self
            .persona_locks
            .entry(id.to_string())
            .or_default()
            .clone();
        lock.lock_owned().await
    }

    fn document(&self, id: &str) -> ApiResult<DocumentRecord> {
        self.store
            .load_document(id)?
            .ok_or_else(|| ApiError::document_not_found(id))
    }

    fn persona(&self, id: &PersonaId) -> ApiResult<Persona> {
        self.store
            .load_persona(id)?
            .ok_or_else(|| ApiError::persona_not_found(id.as_str()))
    }

    /// Append server-owned events, stamping each no earlier than the last
    /// logged event. Caller holds the document lock.
    fn log_server_events(
        &self,
        document_id: &str,
        at: DateTime<Utc>,
        kinds: Vec<EventKind>,
    ) -> ApiResult<()> {
        let log = self.store.load_log(document_id)?;
        let at = log.last_timestamp().map_or(at, |last| last.max(at));
        let events: Vec<SessionEvent> = kinds
            .into_iter()
            .map(|k| SessionEvent::new(at, k))
            .collect();
        self.store.append_events(document_id, &events)?;
        Ok(())
    }
}

fn wrap_audit<P: CompletionProvider + 'static>(
    provider: P,
    config: &ServiceConfig,
    secrets: Vec<String>,
) -> anyhow::Result<Arc<dyn CompletionProvider>> {
    Ok(match &config.audit_log {
        Some(path) => Arc::new(AuditingProvider::open(provider, path, secrets)?),
        None => Arc::new(provider),
    })
}

pub fn router(state: Arc<AppState>) -> Router {
    let api = Router::new()
        .route("/guidance", get(guidance))
        .route("/documents", post(create_document).get(list_documents))
        .route("/documents/{id}", get(get_document).put(put_document))
        .route("/documents/{id}/history", get(get_history))
        .route(
            "/documents/{id}/history/{card_id}",
            delete(delete_card).get(get_card),
        )
        .route(
            "/documents/{id}/history/{card_id}/context",
            get(get_context),
        )
        .route("/documents/{id}/events", post(post_events))
        .route("/documents/{id}/stats", get(get_stats))
        .route("/documents/{id}/timeline", get(get_timeline))
        .route("/documents/{id}/contribution", get(get_contribution))
        .route("/documents/{id}/analysis", get(get_analysis))
        .route("/personas", post(create_persona).get(list_personas))
        .route(
            "/personas/{id}",
            get(get_persona).put(put_persona).delete(delete_persona),
        )
        .route("/personas/{id}/edits", post(edit_persona))
        .route("/feedback", post(create_feedback))
        .route("/prompt", post(dump_prompt))
        .route_layer(middleware::from_fn_with_state(state.clone(), require_token));
    Router::new()
        .route("/health", get(health))
        .merge(api)
        .fallback(|| async { ApiError::malformed("no such route") })
        .with_state(state)
}

async fn require_token(State(state): State<Arc<AppState>>, req: Request, next: Next) -> Response {
    if let Some(token) = &state.config.auth_token {
        let ok = req
            .headers()
            .get(header::AUTHORIZATION)
            .and_then(|v| v.to_str().ok())
            .and_then(|v| v.strip_prefix("Bearer "))
            .is_some_and(|v| v == token);
        if !ok {
            return ApiError::new(ErrorCode::Unauthorized, "missing or wrong bearer token")
                .into_response();
        }
    }
    next.run(req).await
}

async fn health() -> Json<serde_json::Value> {
    Json(serde_json::json!({ "status": "ok" }))
}

async fn guidance() -> impl IntoResponse {
    Json(section_guidance())
}

// Documents

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DocumentBody {
    #[serde(default)]
    pub title: String,
    pub text: String,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct DocumentSummary {
    pub id: String,
    pub title: String,
    pub word_count: usize,
    pub updated_at: DateTime<Utc>,
}

async fn create_document(
    State(s): State<Arc<AppState>>,
    ApiJson(body): ApiJson<DocumentBody>,
) -> ApiResult<(StatusCode, Json<DocumentRecord>)> {
    let now = s.now();
    let doc = DocumentRecord {
        id: s.object_ids.next_id(),
        title: body.title,
        text: canonical_newlines(&body.text),
        created_at: now,
        updated_at: now,
    };
    let _guard = s.lock_document(&doc.id).await;
    s.store.save_document(&doc)?;
    Ok((StatusCode::CREATED, Json(doc)))
}

async fn list_documents(State(s): State<Arc<AppState>>) -> ApiResult<Json<Vec<DocumentSummary>>> {
    let dir = s.store.root().join("documents");
    let mut out = Vec::new();
    let entries =
        std::fs::read_dir(&dir).map_err(|e| ApiError::new(ErrorCode::Internal, e.to_string()))?;
    for entry in entries.flatten() {
        let Some(id) = entry.file_name().to_str().map(str::to_string) else {
            continue;
        };
        if let Ok(Some(doc)) = s.store.load_document(&id) {
            out.push(DocumentSummary {
                word_count: count_words(&doc.text),
                id: doc.id,
                title: doc.title,
                updated_at: doc.updated_at,
            });
        }
    }
    out.sort_by(|a, b| {
        b.updated_at
            .cmp(&a.updated_at)
            .then_with(|| a.id.cmp(&b.id))
    });
    Ok(Json(out))
}

async fn get_document(
    State(s): State<Arc<AppState>>,
    Path(id): Path<String>,
) -> ApiResult<Json<DocumentRecord>> {
    Ok(Json(s.document(&id)?))
}

async fn put_document(
    State(s): State<Arc<AppState>>,
    Path(id): Path<String>,
    ApiJson(body): ApiJson<DocumentBody>,
) -> ApiResult<Json<DocumentRecord>> {
    let _guard = s.lock_document(&id).await;
    let mut doc = s.document(&id)?;
    doc.title = body.title;
    doc.text = canonical_newlines(&body.text);
    doc.updated_at = s.now().max(doc.created_at);
    s.store.save_document(&doc)?;
    Ok(Json(doc))
}

// History

/// A stored card plus the sidebar preview.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CardView {
    #[serde(flatten)]
    pub card: FeedbackCard,
    pub preview: String,
}

impl CardView {
    fn new(card: FeedbackCard, sentences: usize) -> Self {
        let preview = card.preview(sentences).to_string();
        Self { card, preview }
    }
}

async fn get_history(
    State(s): State<Arc<AppState>>,
    Path(id): Path<String>,
) -> ApiResult<Json<Vec<CardView>>> {
    s.document(&id)?;
    let history = s.store.load_history(&id)?;
    Ok(Json(
        history
            .cards()
            .iter()
            .map(|c| CardView::new(c.clone(), s.config.preview_sentences))
            .collect(),
    ))
}

fn find_card(s: &AppState, doc: &str, card: &str) -> ApiResult<FeedbackCard> {
    s.document(doc)?;
    let history = s.store.load_history(doc)?;
    history
        .get(&CardId::new(card))
        .cloned()
        .ok_or_else(|| ApiError::new(ErrorCode::CardNotFound, format!("card {card} not found")))
}

async fn get_card(
    State(s): State<Arc<AppState>>,
    Path((id, card_id)): Path<(String, String)>,
) -> ApiResult<Json<CardView>> {
    let card = find_card(&s, &id, &card_id)?;
    Ok(Json(CardView::new(card, s.config.preview_sentences)))
}

async fn delete_card(
    State(s): State<Arc<AppState>>,
    Path((id, card_id)): Path<(String, String)>,
) -> ApiResult<StatusCode> {
    let _guard = s.lock_document(&id).await;
    s.document(&id)?;
    let mut history = s.store.load_history(&id)?;
    let card = history.delete(&CardId::new(card_id))?;
    s.store.save_history(&history)?;
    s.log_server_events(
        &id,
        s.now(),
        vec![EventKind::FeedbackDeleted {
            card_id: card.id().clone(),
        }],
    )?;
    Ok(StatusCode::NO_CONTENT)
}

#[derive(Debug, Serialize, Deserialize)]
pub struct ContextView {
    pub document_id: String,
    pub selection: Selection,
    pub selected_text: String,
    pub status: ContextStatus,
}

async fn get_context(
    State(s): State<Arc<AppState>>,
    Path((id, card_id)): Path<(String, String)>,
) -> ApiResult<Json<ContextView>> {
    let card = find_card(&s, &id, &card_id)?;
    let doc = s.document(&id)?;
    let ctx = card.context();
    Ok(Json(ContextView {
        document_id: ctx.document_id.clone(),
        selection: ctx.selection,
        selected_text: ctx.selected_text.clone(),
        status: ctx.status(&doc.text),
    }))
}

// Session events and analytics

/// A client-side event. Without a timestamp the server stamps it on arrival.
#[derive(Debug, Clone, Deserialize)]
pub struct ClientEvent {
    #[serde(default)]
    pub timestamp: Option<DateTime<Utc>>,
    #[serde(flatten)]
    pub kind: EventKind,
}

#[derive(Debug, Deserialize)]
pub struct EventBatch {
    pub events: Vec<ClientEvent>,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct EventsAccepted {
    pub accepted: usize,
}

fn server_owned(kind: &EventKind) -> bool {
    matches!(
        kind,
        EventKind::FeedbackRequested { .. }
            | EventKind::FeedbackFailed { .. }
            | EventKind::FeedbackDeleted { .. }
    )
}

async fn post_events(
    State(s): State<Arc<AppState>>,
    Path(id): Path<String>,
    ApiJson(batch): ApiJson<EventBatch>,
) -> ApiResult<Json<EventsAccepted>> {
    let _guard = s.lock_document(&id).await;
    s.document(&id)?;
    let mut log = s.store.load_log(&id)?;
    let now = s.now();
    let mut accepted = Vec::with_capacity(batch.events.len());
    for (i, e) in batch.events.into_iter().enumerate() {
        if server_owned(&e.kind) {
            return Err(ApiError::malformed(format!(
                "event {i}: feedback events are recorded by the server"
            )));
        }
        let at = e
            .timestamp
            .unwrap_or_else(|| log.last_timestamp().map_or(now, |last| last.max(now)));
        let event = SessionEvent::new(at, e.kind);
        log.record(event.clone())
            .map_err(|err| ApiError::malformed(format!("event {i}: {err}")))?;
        accepted.push(event);
    }
    s.store.append_events(&id, &accepted)?;
    Ok(Json(EventsAccepted {
        accepted: accepted.len(),
    }))
}

async fn get_stats(
    State(s): State<Arc<AppState>>,
    Path(id): Path<String>,
) -> ApiResult<impl IntoResponse> {
    let doc = s.document(&id)?;
    let log = s.store.load_log(&id)?;
    Ok(Json(compute_stats(&log).with_final_text(&doc.text)))
}

#[derive(Debug, Default, Deserialize)]
pub struct TimelineQuery {
    /// Session end in epoch milliseconds.
    pub end_ms: Option<i64>,
    pub format: Option<String>,
}

async fn get_timeline(
    State(s): State<Arc<AppState>>,
    Path(id): Path<String>,
    query: Result<Query<TimelineQuery>, axum::extract::rejection::QueryRejection>,
) -> ApiResult<Response> {
    let Query(q) = query?;
    s.document(&id)?;
    let log = s.store.load_log(&id)?;
    let timeline = focus_timeline(&log, q.end_ms.map(from_millis));
    match q.format.as_deref() {
        None | Some("json") => Ok(Json(timeline).into_response()),
        Some("csv") => Ok((
            [(header::CONTENT_TYPE, HeaderValue::from_static("text/csv"))],
            timeline.to_csv(),
        )
            .into_response()),
        Some(other) => Err(ApiError::malformed(format!("unknown format {other:?}"))),
    }
}

#[derive(Debug, Serialize, Deserialize)]
pub struct ContributionView {
    #[serde(flatten)]
    pub contribution: AttributeContribution,
    /// Feedback requests whose persona could not be recovered (card and
    /// persona both deleted).
    pub unresolved_requests: usize,
}

async fn get_contribution(
    State(s): State<Arc<AppState>>,
    Path(id): Path<String>,
) -> ApiResult<Json<ContributionView>> {
    s.document(&id)?;
    let log = s.store.load_log(&id)?;
    let mut index = SnapshotIndex::from_history(&s.store.load_history(&id)?);
    for p in s.store.list_personas()? {
        index.insert_persona(p.snapshot_at(s.now()));
    }
    let mut unresolved = 0;
    let resolvable = log.events().iter().filter(|e| match &e.kind {
        EventKind::FeedbackRequested {
            persona_id,
            card_id,
        } => {
            let ok = index.resolve(persona_id, card_id.as_ref()).is_some();
            unresolved += usize::from(!ok);
            ok
        }
        _ => false,
    });
    let filtered = SessionLog::from_events(resolvable.cloned())
        .map_err(|e| ApiError::new(ErrorCode::Internal, e.to_string()))?;
    let contribution = attribute_contribution(&filtered, &index)
        .map_err(|e| ApiError::new(ErrorCode::Internal, e.to_string()))?;
    Ok(Json(ContributionView {
        contribution,
        unresolved_requests: unresolved,
    }))
}

async fn get_analysis(
    State(s): State<Arc<AppState>>,
    Path(id): Path<String>,
) -> ApiResult<impl IntoResponse> {
    s.document(&id)?;
    let history = s.store.load_history(&id)?;
    Ok(Json(analyze_corpus(history.cards())))
}

// Personas

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PersonaBody {
    #[serde(default)]
    pub name: String,
    #[serde(default)]
    pub sections: Option<Sections>,
}

async fn create_persona(
    State(s): State<Arc<AppState>>,
    ApiJson(body): ApiJson<PersonaBody>,
) -> ApiResult<(StatusCode, Json<Persona>)> {
    let now = s.now();
    let mut persona = Persona::with_id(
        PersonaId::new(s.object_ids.next_id()),
        body.name.clone(),
        now,
    );
    if let Some(sections) = body.sections {
        persona.replace(body.name, sections, now)?;
    }
    let _guard = s.lock_persona(persona.id.as_str()).await;
    s.store.save_persona(&persona)?;
    Ok((StatusCode::CREATED, Json(persona)))
}

async fn list_personas(State(s): State<Arc<AppState>>) -> ApiResult<Json<Vec<Persona>>> {
    Ok(Json(s.store.list_personas()?))
}

async fn get_persona(
    State(s): State<Arc<AppState>>,
    Path(id): Path<String>,
) -> ApiResult<Json<Persona>> {
    Ok(Json(s.persona(&PersonaId::new(id))?))
}

async fn put_persona(
    State(s): State<Arc<AppState>>,
    Path(id): Path<String>,
    ApiJson(body): ApiJson<PersonaBody>,
) -> ApiResult<Json<Persona>> {
    let _guard = s.lock_persona(&id).await;
    let mut persona = s.persona(&PersonaId::new(id))?;
    let sections = body.sections.unwrap_or_else(|| persona.sections.clone());
    persona.replace(body.name, sections, s.now())?;
    s.store.save_persona(&persona)?;
    Ok(Json(persona))
}

async fn edit_persona(
    State(s): State<Arc<AppState>>,
    Path(id): Path<String>,
    ApiJson(edit): ApiJson<PersonaEdit>,
) -> ApiResult<Json<Persona>> {
    let _guard = s.lock_persona(&id).await;
    let mut persona = s.persona(&PersonaId::new(id))?;
    persona.apply(edit, s.now())?;
    s.store.save_persona(&persona)?;
    Ok(Json(persona))
}

async fn delete_persona(
    State(s): State<Arc<AppState>>,
    Path(id): Path<String>,
) -> ApiResult<StatusCode> {
    let _guard = s.lock_persona(&id).await;
    if s.store.delete_persona(&PersonaId::new(id.clone()))? {
        Ok(StatusCode::NO_CONTENT)
    } else {
        Err(ApiError::persona_not_found(&id))
    }
}

// Feedback

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FeedbackBody {
    pub document_id: String,
    pub persona_id: PersonaId,
    pub selection: Selection,
    /// Overrides the configured condense setting for this request.
    #[serde(default)]
    pub condense: Option<bool>,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct DryRun {
    pub dry_run: bool,
    pub bundle: PromptBundle,
}

async fn create_feedback(
    State(s): State<Arc<AppState>>,
    ApiJson(body): ApiJson<FeedbackBody>,
) -> ApiResult<Response> {
    let requested_at = s.now();
    let (req, persona) = {
        let _guard = s.lock_document(&body.document_id).await;
        let doc = s.document(&body.document_id)?;
        if body.selection.is_empty() {
            return Err(ApiError::new(
                ErrorCode::EmptySelection,
                "selection is empty",
            ));
        }
        let persona = s.persona(&body.persona_id)?;
        let req = FeedbackRequest::from_document(
            body.document_id.clone(),
            body.persona_id.clone(),
            &doc.text,
            body.selection,
        )?;
        (req, persona)
    };

    if s.config.dump_prompt {
        let bundle = s
            .engine
            .bundle_for(&req.selected_text, &persona.snapshot_at(requested_at))?;
        println!(
            "{}",
            serde_json::to_string_pretty(&bundle).expect("bundle serializes")
        );
        return Ok(Json(DryRun {
            dry_run: true,
            bundle,
        })
        .into_response());
    }

    let condense = body.condense.unwrap_or(s.config.condense);
    let result = {
        let _permit = s
            .in_flight
            .acquire()
            .await
            .expect("semaphore is never closed");
        s.engine
            .generate_feedback(&req, &persona, &s.config.generation, condense)
            .await
    };

    let _guard = s.lock_document(&req.document_id).await;
    match result {
        Ok(card) => {
            let mut history = s.store.load_history(&req.document_id)?;
            history.append(card.clone())?;
            s.store.save_history(&history)?;
            s.log_server_events(
                &req.document_id,
                requested_at,
                vec![EventKind::FeedbackRequested {
                    persona_id: req.persona_id.clone(),
                    card_id: Some(card.id().clone()),
                }],
            )?;
            Ok((
                StatusCode::CREATED,
                Json(CardView::new(card, s.config.preview_sentences)),
            )
                .into_response())
        }
        Err(e) => {
            let err = ApiError::from(e);
            tracing::warn!(document = %req.document_id, error = %err, "feedback request failed");
            if err.code == ErrorCode::ProviderError {
                s.log_server_events(
                    &req.document_id,
                    requested_at,
                    vec![EventKind::FeedbackFailed {
                        persona_id: req.persona_id.clone(),
                        code: "PROVIDER_ERROR".into(),
                    }],
                )?;
            }
            Err(err)
        }
    }
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PromptBody {
    pub persona_id: PersonaId,
    pub selected_text: String,
}

async fn dump_prompt(
    State(s): State<Arc<AppState>>,
    ApiJson(body): ApiJson<PromptBody>,
) -> ApiResult<Json<PromptBundle>> {
    let persona = s.persona(&body.persona_id)?;
    Ok(Json(s.engine.bundle_for(
        &body.selected_text,
        &persona.snapshot_at(s.now()),
    )?))
}
