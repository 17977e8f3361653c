//! Registry of collections and sessions backed by a data directory:
//!
//! ```text
//! <root>/collections/<id>/...     uploaded files and bases
//! <root>/sessions/<id>.jsonl      append-only event log
//! ```

use std::collections::HashMap;
use std::fs::{self, File, OpenOptions};
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};
use std::sync::Arc;
use std::time::{Duration, SystemTime, UNIX_EPOCH};

use parking_lot::{Mutex, RwLock};
use retrieve_core::{FusionWeights, QueryStrategy};
use serde::Deserialize;

use crate::collection::{Collection, CollectionDescriptor, Upload};
use crate::error::{Result, ServiceError};
use crate::session::{Event, LabelRequest, Seed, SessionState};

pub const DEFAULT_BUSY_TIMEOUT: Duration = Duration::from_secs(10);

#[derive(Debug, Clone, Deserialize)]
pub struct CreateSession {
    pub seeds: Vec<Seed>,
    #[serde(default = "default_strategy")]
    pub strategy: retrieve_core::StrategyKind,
    /// Defaults to the collection's configured weights.
    #[serde(default)]
    pub fusion: Option<FusionWeights>,
    #[serde(default)]
    pub constant_theta: f64,
    /// Seed of the random strategy's generator.
    #[serde(default)]
    pub seed: u64,
}

fn default_strategy() -> retrieve_core::StrategyKind {
    retrieve_core::StrategyKind::Adaptive
}

struct SessionHandle {
    /// Serializes mutations; held across solve and log append.
    gate: Mutex<()>,
    current: RwLock<Arc<SessionState>>,
}

pub struct Service {
    root: PathBuf,
    busy_timeout: Duration,
    collections: RwLock<HashMap<String, Arc<Collection>>>,
    sessions: RwLock<HashMap<String, Arc<SessionHandle>>>,
}

fn now_ms() -> u64 {
    SystemTime::now()
        .duration_since(UNIX_EPOCH)
        .map_or(0, |d| d.as_millis() as u64)
}

fn new_id() -> String {
    uuid::Uuid::new_v4().simple().to_string()
}

/// Ids come from URLs; only accept what [`new_id`] could have produced so
/// they are safe as file names.
fn valid_id(id: &str) -> bool {
    !id.is_empty()
        && id.len() <= 64
        && id
            .bytes()
            .all(|b| b.is_ascii_alphanumeric() || b == b'-' || b == b'_')
}

impl Service {
    /// Opens `root`, loading every stored collection and replaying every
    /// session log.
    pub fn open(root: impl Into<PathBuf>) -> Result<Self> {
        let root = root.into();
        fs::create_dir_all(root.join("collections"))?;
        fs::create_dir_all(root.join("sessions"))?;
        let svc = Self {
            root,
            busy_timeout: DEFAULT_BUSY_TIMEOUT,
            collections: RwLock::new(HashMap::new()),
            sessions: RwLock::new(HashMap::new()),
        };
        svc.load_all()?;
        Ok(svc)
    }

    pub fn with_busy_timeout(mut self, timeout: Duration) -> Self {
        self.busy_timeout = timeout;
        self
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    fn collection_dir(&self, id: &str) -> PathBuf {
        self.root.join("collections").join(id)
    }

    fn session_log(&self, id: &str) -> PathBuf {
        self.root.join("sessions").join(format!("{id}.jsonl"))
    }

    fn load_all(&self) -> Result<()> {
        let mut ids: Vec<String> = fs::read_dir(self.root.join("collections"))?
            .filter_map(|e| e.ok())
            .filter(|e| e.path().is_dir())
            .filter_map(|e| e.file_name().into_string().ok())
            .filter(|id| valid_id(id))
            .collect();
        ids.sort();
        for id in ids {
            let c = Collection::load(id.clone(), &self.collection_dir(&id))?;
            self.collections.write().insert(id, Arc::new(c));
        }

        let mut logs: Vec<PathBuf> = fs::read_dir(self.root.join("sessions"))?
            .filter_map(|e| e.ok())
            .map(|e| e.path())
            .filter(|p| p.extension().is_some_and(|x| x == "jsonl"))
            .collect();
        logs.sort();
        for path in logs {
            let state = self.replay_log(&path)?;
            self.insert_session(state);
        }
        Ok(())
    }

    fn replay_log(&self, path: &Path) -> Result<SessionState> {
        let name = path.display().to_string();
        let corrupt = |reason: String| ServiceError::CorruptLog {
            session: name.clone(),
            reason,
        };
        let mut events = Vec::new();
        for (i, line) in BufReader::new(File::open(path)?).lines().enumerate() {
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            let e: Event =
                serde_json::from_str(&line).map_err(|e| corrupt(format!("line {}: {e}", i + 1)))?;
            events.push(e);
        }
        let cid = match events.first() {
            Some(Event::Created { collection_id, .. }) => collection_id.clone(),
            _ => return Err(corrupt("log does not start with `created`".into())),
        };
        let collection = self.collection(&cid).map_err(|e| corrupt(e.to_string()))?;
        SessionState::replay(collection, events).map_err(|e| corrupt(e.to_string()))
    }

    fn insert_session(&self, state: SessionState) {
        let handle = SessionHandle {
            gate: Mutex::new(()),
            current: RwLock::new(Arc::new(state)),
        };
        let id = handle.current.read().id.clone();
        self.sessions.write().insert(id, Arc::new(handle));
    }

    pub fn collection(&self, id: &str) -> Result<Arc<Collection>> {
        self.collections
            .read()
            .get(id)
            .cloned()
            .ok_or_else(|| ServiceError::UnknownCollection(id.to_string()))
    }

    /// Fits the bases and stores the collection. Blocking.
    pub fn create_collection(&self, upload: &Upload) -> Result<CollectionDescriptor> {
        let id = new_id();
        let c = Collection::ingest(id.clone(), upload, &self.collection_dir(&id))?;
        let desc = c.descriptor();
        self.collections.write().insert(id, Arc::new(c));
        Ok(desc)
    }

    /// Solves the seeded state and writes the first log line. Blocking.
    pub fn create_session(
        &self,
        collection_id: &str,
        req: &CreateSession,
    ) -> Result<Arc<SessionState>> {
        let collection = self.collection(collection_id)?;
        let strategy = match req.strategy {
            retrieve_core::StrategyKind::Adaptive => QueryStrategy::adaptive(),
            retrieve_core::StrategyKind::Constant => QueryStrategy::constant(req.constant_theta),
            retrieve_core::StrategyKind::Random => QueryStrategy::random(req.seed),
        };
        if !req.constant_theta.is_finite() {
            return Err(ServiceError::Validation(
                "constant_theta must be finite".into(),
            ));
        }
        let id = new_id();
        let created = Event::Created {
            session_id: id.clone(),
            collection_id: collection.id.clone(),
            seeds: req.seeds.clone(),
            strategy,
            fusion: req
                .fusion
                .clone()
                .unwrap_or_else(|| collection.config.fusion.clone()),
            at_ms: now_ms(),
        };
        let state = SessionState::start(collection, created)?;
        let mut f = OpenOptions::new()
            .write(true)
            .create_new(true)
            .open(self.session_log(&id))?;
        write_event(&mut f, &state.events[0])?;
        self.insert_session(state);
        self.session(&id)
    }

    fn handle(&self, id: &str) -> Result<Arc<SessionHandle>> {
        if !valid_id(id) {
            return Err(ServiceError::UnknownSession(id.to_string()));
        }
        self.sessions
            .read()
            .get(id)
            .cloned()
            .ok_or_else(|| ServiceError::UnknownSession(id.to_string()))
    }

    /// Consistent snapshot of a session.
    pub fn session(&self, id: &str) -> Result<Arc<SessionState>> {
        Ok(Arc::clone(&self.handle(id)?.current.read()))
    }

    /// Applies one label: re-solves, appends to the log, then publishes the
    /// new state. Waits up to the busy timeout for a concurrent mutation on
    /// the same session. Blocking.
    pub fn submit_label(&self, id: &str, req: LabelRequest) -> Result<Arc<SessionState>> {
        let handle = self.handle(id)?;
        let _guard = handle
            .gate
            .try_lock_for(self.busy_timeout)
            .ok_or(ServiceError::Busy)?;
        let current = Arc::clone(&handle.current.read());
        let next = current.apply(req, now_ms())?;
        let mut f = OpenOptions::new().append(true).open(self.session_log(id))?;
        write_event(&mut f, next.events.last().expect("apply appends an event"))?;
        let next = Arc::new(next);
        *handle.current.write() = Arc::clone(&next);
        Ok(next)
    }

    pub fn session_ids(&self) -> Vec<String> {
        let mut ids: Vec<String> = self.sessions.read().keys().cloned().collect();
        ids.sort();
        ids
    }
}

fn write_event(f: &mut File, e: &Event) -> Result<()> {
    let mut line = serde_json::to_vec(e).expect("event serializes");
    line.push(b'\n');
    f.write_all(&line)?;
    f.sync_data()?;
    Ok(())
}
