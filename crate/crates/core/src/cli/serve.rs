//! Local HTTP API backing the review UI.
//!
//! Annotations are served and accepted as canonical `A` records. Every frame
//! carries a revision counter; a PUT must quote the revision it was based
//! on and is rejected with 409 otherwise. Accepted PUTs are appended to a
//! JSON-lines journal, which is replayed on startup.

use std::collections::HashMap;
use std::io::Write as _;
use std::path::{Path, PathBuf};
use std::sync::{Arc, RwLock};

use axum::extract::{Path as UrlPath, State};
use axum::http::{header, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use serde::{Deserialize, Serialize};
use serde_json::json;

use crate::dataio::{format_annotation_line, parse_annotation_records, Annotation, Dataset, FrameId};
use crate::error::{Error, Result};
use crate::geometry::{line_to_bbox, AspectRatio, HeadFeetLine, Point};
use crate::oracle::ImageSource;
use crate::sanitizer::diff_frame_annotations;

pub const SCHEMA_VERSION: u32 = 1;
pub const JOURNAL_FILE: &str = "journal.jsonl";

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct JournalEntry {
    pub frame: FrameId,
    pub revision: u64,
    pub records: String,
}

#[derive(Debug)]
pub enum PutError {
    UnknownFrame,
    Conflict { current: u64 },
    Invalid(Error),
}

#[derive(Debug)]
struct FrameState {
    revision: u64,
    annotations: Vec<Annotation>,
}

/// Original annotations (read only) and the working set under review.
#[derive(Debug)]
pub struct Store {
    original: Dataset,
    order: Vec<FrameId>,
    frames: HashMap<FrameId, FrameState>,
    meta: Vec<String>,
    journal: Option<PathBuf>,
}

fn records_text(anns: &[Annotation]) -> String {
    anns.iter().map(|a| format_annotation_line(a) + "\n").collect()
}

impl Store {
    /// Starts from `working` and replays `journal` if it exists. New
    /// entries are appended to it.
    pub fn open(original: Dataset, working: Dataset, journal: Option<PathBuf>) -> Result<Self> {
        if original.frames() != working.frames() {
            return Err(Error::FrameMismatch(
                "original and working annotations cover different frames".into(),
            ));
        }
        let (order, anns, meta) = working.into_parts();
        let mut frames: HashMap<FrameId, FrameState> = order
            .iter()
            .map(|f| {
                (
                    f.clone(),
                    FrameState {
                        revision: 0,
                        annotations: Vec::new(),
                    },
                )
            })
            .collect();
        for a in anns {
            frames.get_mut(&a.frame).unwrap().annotations.push(a);
        }
        let mut store = Store {
            original,
            order,
            frames,
            meta,
            journal: None,
        };
        if let Some(path) = &journal {
            store.replay(path)?;
            // fail now rather than on the first PUT
            std::fs::OpenOptions::new()
                .create(true)
                .append(true)
                .open(path)
                .map_err(|e| Error::io(path, e))?;
        }
        store.journal = journal;
        Ok(store)
    }

    fn replay(&mut self, path: &Path) -> Result<()> {
        let text = match std::fs::read_to_string(path) {
            Ok(t) => t,
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => return Ok(()),
            Err(e) => return Err(Error::io(path, e)),
        };
        let origin = path.display().to_string();
        for (n, line) in text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty()) {
            let entry: JournalEntry = serde_json::from_str(line)
                .map_err(|e| Error::parse(&origin, n + 1, e.column(), e.to_string()))?;
            let based_on = entry.revision.checked_sub(1).ok_or_else(|| {
                Error::parse(&origin, n + 1, 1, "journal revisions start at 1")
            })?;
            self.apply(&entry.frame, based_on, &entry.records)
                .map_err(|e| {
                    let reason = match e {
                        PutError::UnknownFrame => format!("unknown frame {}", entry.frame),
                        PutError::Conflict { current } => {
                            format!("revision {} does not follow {current}", entry.revision)
                        }
                        PutError::Invalid(e) => e.to_string(),
                    };
                    Error::parse(&origin, n + 1, 1, reason)
                })?;
        }
        Ok(())
    }

    pub fn frames(&self) -> &[FrameId] {
        &self.order
    }

    pub fn original(&self) -> &Dataset {
        &self.original
    }

    pub fn revision(&self, frame: &FrameId) -> Option<u64> {
        self.frames.get(frame).map(|s| s.revision)
    }

    pub fn annotations(&self, frame: &FrameId) -> Option<&[Annotation]> {
        self.frames.get(frame).map(|s| s.annotations.as_slice())
    }

    pub fn next_id(&self) -> u64 {
        self.frames
            .values()
            .flat_map(|s| s.annotations.iter().map(|a| a.id + 1))
            .max()
            .unwrap_or(0)
    }

    /// Current working set as a dataset.
    pub fn snapshot(&self) -> Result<Dataset> {
        let anns = self
            .order
            .iter()
            .flat_map(|f| self.frames[f].annotations.iter().cloned())
            .collect();
        let mut ds = Dataset::new(self.order.iter().cloned(), anns, vec![])?;
        for m in &self.meta {
            ds = ds.with_meta(m.clone());
        }
        Ok(ds)
    }

    fn apply(&mut self, frame: &FrameId, revision: u64, records: &str) -> std::result::Result<u64, PutError> {
        let current = self.revision(frame).ok_or(PutError::UnknownFrame)?;
        if revision != current {
            return Err(PutError::Conflict { current });
        }
        let (anns, _) = parse_annotation_records(records, "request").map_err(PutError::Invalid)?;
        if let Some(a) = anns.iter().find(|a| &a.frame != frame) {
            return Err(PutError::Invalid(Error::FrameMismatch(format!(
                "record for {} sent to frame {frame}",
                a.frame
            ))));
        }
        let mut ids: Vec<u64> = anns.iter().map(|a| a.id).collect();
        ids.extend(
            self.frames
                .iter()
                .filter(|(f, _)| *f != frame)
                .flat_map(|(_, s)| s.annotations.iter().map(|a| a.id)),
        );
        ids.sort_unstable();
        if let Some(w) = ids.windows(2).find(|w| w[0] == w[1]) {
            return Err(PutError::Invalid(Error::Config(format!("duplicate annotation id {}", w[0]))));
        }
        let state = self.frames.get_mut(frame).unwrap();
        state.revision += 1;
        state.annotations = anns;
        Ok(state.revision)
    }

    /// Replaces a frame's annotations if `revision` is current, journaling
    /// the change first.
    pub fn put(&mut self, frame: &FrameId, revision: u64, records: &str) -> std::result::Result<u64, PutError> {
        let current = self.revision(frame).ok_or(PutError::UnknownFrame)?;
        if revision != current {
            return Err(PutError::Conflict { current });
        }
        // apply() validates before touching anything; keep the old state
        // for a failed journal write
        let before = self.frames[frame].annotations.clone();
        let rev = self.apply(frame, revision, records)?;
        let canonical = records_text(&self.frames[frame].annotations);
        if let Some(path) = &self.journal {
            let entry = JournalEntry {
                frame: frame.clone(),
                revision: rev,
                records: canonical,
            };
            let written = std::fs::OpenOptions::new()
                .create(true)
                .append(true)
                .open(path)
                .and_then(|mut f| {
                    let mut line = serde_json::to_string(&entry).expect("journal entry serializes");
                    line.push('\n');
                    f.write_all(line.as_bytes())
                });
            if let Err(e) = written {
                let state = self.frames.get_mut(frame).unwrap();
                state.revision = revision;
                state.annotations = before;
                return Err(PutError::Invalid(Error::io(path, e)));
            }
        }
        Ok(rev)
    }
}

pub struct AppState {
    pub store: RwLock<Store>,
    pub images: Option<ImageSource>,
    pub aspect: AspectRatio,
}

pub fn router(state: Arc<AppState>) -> Router {
    Router::new()
        .route("/api/frames", get(list_frames))
        .route("/api/frames/{video}/{index}/image", get(frame_image))
        .route(
            "/api/frames/{video}/{index}/annotations",
            get(get_annotations).put(put_annotations),
        )
        .route("/api/geometry/line-to-bbox", post(line_to_bbox_handler))
        .route("/api/diff/{video}/{index}", get(frame_diff))
        .with_state(state)
}

fn reply(status: StatusCode, mut body: serde_json::Value) -> Response {
    body["schema_version"] = json!(SCHEMA_VERSION);
    (status, Json(body)).into_response()
}

fn error_reply(status: StatusCode, e: &Error) -> Response {
    reply(status, json!({ "error": e.category(), "detail": e.to_string() }))
}

fn frame_id(video: String, index: u32) -> std::result::Result<FrameId, Response> {
    FrameId::new(video, index).map_err(|e| error_reply(StatusCode::BAD_REQUEST, &e))
}

fn not_found(frame: &FrameId) -> Response {
    reply(
        StatusCode::NOT_FOUND,
        json!({ "error": "unknown-frame", "detail": format!("no frame {frame}") }),
    )
}

async fn list_frames(State(st): State<Arc<AppState>>) -> Response {
    let store = st.store.read().unwrap();
    let frames: Vec<_> = store
        .frames()
        .iter()
        .map(|f| {
            json!({
                "id": f,
                "revision": store.revision(f),
                "annotations": store.annotations(f).map_or(0, <[Annotation]>::len),
                "has_image": st.images.as_ref().is_some_and(|s| s.locate(f).is_some()),
            })
        })
        .collect();
    reply(StatusCode::OK, json!({ "frames": frames }))
}

async fn frame_image(State(st): State<Arc<AppState>>, UrlPath((video, index)): UrlPath<(String, u32)>) -> Response {
    let frame = match frame_id(video, index) {
        Ok(f) => f,
        Err(r) => return r,
    };
    let path = st.images.as_ref().and_then(|s| s.locate(&frame));
    let Some(path) = path else {
        return not_found(&frame);
    };
    let mime = match path.extension().and_then(|e| e.to_str()) {
        Some("png") => "image/png",
        _ => "image/x-portable-graymap",
    };
    match std::fs::read(&path) {
        Ok(bytes) => (
            [
                (header::CONTENT_TYPE, mime.to_string()),
                (header::HeaderName::from_static("x-schema-version"), SCHEMA_VERSION.to_string()),
            ],
            bytes,
        )
            .into_response(),
        Err(e) => error_reply(StatusCode::INTERNAL_SERVER_ERROR, &Error::io(path, e)),
    }
}

fn annotations_body(store: &Store, frame: &FrameId) -> serde_json::Value {
    json!({
        "frame": frame,
        "revision": store.revision(frame),
        "next_id": store.next_id(),
        "records": records_text(store.annotations(frame).unwrap_or(&[])),
    })
}

async fn get_annotations(
    State(st): State<Arc<AppState>>,
    UrlPath((video, index)): UrlPath<(String, u32)>,
) -> Response {
    let frame = match frame_id(video, index) {
        Ok(f) => f,
        Err(r) => return r,
    };
    let store = st.store.read().unwrap();
    if store.revision(&frame).is_none() {
        return not_found(&frame);
    }
    reply(StatusCode::OK, annotations_body(&store, &frame))
}

#[derive(Debug, Deserialize)]
pub struct PutBody {
    pub revision: u64,
    pub records: String,
}

async fn put_annotations(
    State(st): State<Arc<AppState>>,
    UrlPath((video, index)): UrlPath<(String, u32)>,
    Json(body): Json<PutBody>,
) -> Response {
    let frame = match frame_id(video, index) {
        Ok(f) => f,
        Err(r) => return r,
    };
    let mut store = st.store.write().unwrap();
    match store.put(&frame, body.revision, &body.records) {
        Ok(_) => reply(StatusCode::OK, annotations_body(&store, &frame)),
        Err(PutError::UnknownFrame) => not_found(&frame),
        Err(PutError::Conflict { current }) => reply(
            StatusCode::CONFLICT,
            json!({
                "error": "conflict",
                "detail": format!("revision {} is stale, current is {current}", body.revision),
                "revision": current,
            }),
        ),
        Err(PutError::Invalid(e @ Error::Io { .. })) => error_reply(StatusCode::INTERNAL_SERVER_ERROR, &e),
        Err(PutError::Invalid(e)) => error_reply(StatusCode::BAD_REQUEST, &e),
    }
}

#[derive(Debug, Deserialize)]
pub struct LineBody {
    pub head: Point,
    pub feet: Point,
    pub aspect: Option<f64>,
}

async fn line_to_bbox_handler(State(st): State<Arc<AppState>>, Json(body): Json<LineBody>) -> Response {
    let result = (|| {
        let aspect = body.aspect.map_or(Ok(st.aspect), AspectRatio::new)?;
        line_to_bbox(&HeadFeetLine::new(body.head, body.feet)?, aspect)
    })();
    match result {
        Ok(b) => reply(StatusCode::OK, json!({ "bbox": b })),
        Err(e) => error_reply(StatusCode::BAD_REQUEST, &e),
    }
}

async fn frame_diff(State(st): State<Arc<AppState>>, UrlPath((video, index)): UrlPath<(String, u32)>) -> Response {
    let frame = match frame_id(video, index) {
        Ok(f) => f,
        Err(r) => return r,
    };
    let store = st.store.read().unwrap();
    let Some(working) = store.annotations(&frame) else {
        return not_found(&frame);
    };
    match diff_frame_annotations(store.original().frame_annotations(&frame), working, 0.5) {
        Ok(d) => reply(
            StatusCode::OK,
            json!({
                "frame": frame,
                "revision": store.revision(&frame),
                "original": store.original().frame_annotations(&frame),
                "new": working,
                "matched": d.matched,
                "original_only": d.a_only,
                "new_only": d.b_only,
                "agreement": d.agreement,
            }),
        ),
        Err(e) => error_reply(StatusCode::INTERNAL_SERVER_ERROR, &e),
    }
}

/// Binds `127.0.0.1:port` and serves until the process is stopped.
pub fn run_server(state: Arc<AppState>, port: u16) -> Result<()> {
    let rt = tokio::runtime::Builder::new_multi_thread()
        .enable_all()
        .build()
        .map_err(|e| Error::io("tokio runtime", e))?;
    rt.block_on(async move {
        let addr = std::net::SocketAddr::from(([127, 0, 0, 1], port));
        let listener = tokio::net::TcpListener::bind(addr)
            .await
            .map_err(|e| Error::io(format!("127.0.0.1:{port}"), e))?;
        eprintln!("serving on http://{addr}");
        axum::serve(listener, router(state))
            .await
            .map_err(|e| Error::io(format!("127.0.0.1:{port}"), e))
    })
}
