//! Edit jobs for the service. One worker thread runs jobs one at a time and
//! is the only writer of job status; handlers only read it.

use std::collections::{HashMap, VecDeque};
use std::io::Write;
use std::path::PathBuf;
use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::mpsc;
use std::sync::{Arc, Mutex, RwLock};
use std::time::{SystemTime, UNIX_EPOCH};

use hullpaint::hull::VisualHull;
use hullpaint::idu::{run_edit_job, EditJobConfig, JobEvent, JobOptions, JobState, Phase};
use hullpaint::inpaint::{Conditioning, InpaintBackend};
use hullpaint::scene::{Checkpoint, SceneDataset};
use hullpaint::{Error, RadianceField};
use serde::Serialize;

/// Events kept in a status response.
pub const EVENTS_TAIL: usize = 20;

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct JobHandle {
    pub id: String,
    pub created_unix_ms: u64,
    pub config_digest: String,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum JobPhase {
    Queued,
    Training,
    Updating,
    Done,
    Failed,
    Cancelled,
}

impl JobPhase {
    pub fn is_finished(self) -> bool {
        matches!(self, JobPhase::Done | JobPhase::Failed | JobPhase::Cancelled)
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct JobStatus {
    #[serde(flatten)]
    pub handle: JobHandle,
    pub phase: JobPhase,
    pub step: u64,
    pub n_steps: u64,
    pub strength: Option<f64>,
    /// `[step, strength]` of every dataset update so far.
    pub strength_history: Vec<[f64; 2]>,
    pub events_tail: VecDeque<JobEvent>,
    pub error: Option<String>,
}

pub struct JobRecord {
    pub handle: JobHandle,
    status: Mutex<JobStatus>,
    cancel: AtomicBool,
    /// Field after the last completed step that produced an event.
    snapshot: Mutex<Option<Arc<RadianceField<f32>>>>,
}

impl JobRecord {
    pub fn status(&self) -> JobStatus {
        self.status.lock().expect("status lock").clone()
    }

    pub fn snapshot(&self) -> Option<Arc<RadianceField<f32>>> {
        self.snapshot.lock().expect("snapshot lock").clone()
    }

    pub fn cancel(&self) {
        self.cancel.store(true, Ordering::Relaxed);
    }
}

#[derive(Debug, thiserror::Error)]
pub enum SubmitError {
    #[error("job {0} is still running")]
    Busy(String),
    #[error("job worker has stopped")]
    WorkerGone,
}

struct Request {
    record: Arc<JobRecord>,
    config: EditJobConfig,
    hull: VisualHull,
    conditioning: Conditioning,
    backend: Box<dyn InpaintBackend>,
}

#[derive(Default)]
struct Table {
    records: HashMap<String, Arc<JobRecord>>,
    active: Option<String>,
    next: u64,
}

pub struct JobRunner {
    table: Arc<Mutex<Table>>,
    sender: Mutex<mpsc::Sender<Request>>,
    edited: Arc<RwLock<Option<Arc<RadianceField<f32>>>>>,
}

fn now_ms() -> u64 {
    SystemTime::now().duration_since(UNIX_EPOCH).map(|d| d.as_millis() as u64).unwrap_or(0)
}

impl JobRunner {
    /// Starts the worker. Job outputs go to `work_dir/jobs/<id>/`.
    pub fn start(dataset: Arc<SceneDataset>, original: Arc<RadianceField<f32>>, work_dir: PathBuf) -> Self {
        let (sender, receiver) = mpsc::channel::<Request>();
        let table = Arc::new(Mutex::new(Table::default()));
        let edited = Arc::new(RwLock::new(None));
        let worker = Worker { table: table.clone(), edited: edited.clone(), dataset, original, work_dir };
        std::thread::Builder::new()
            .name("edit-worker".into())
            .spawn(move || {
                for req in receiver {
                    worker.run(req);
                }
            })
            .expect("spawn job worker");
        Self { table, sender: Mutex::new(sender), edited }
    }

    pub fn submit(
        &self,
        config: EditJobConfig,
        hull: VisualHull,
        conditioning: Conditioning,
        backend: Box<dyn InpaintBackend>,
    ) -> Result<JobHandle, SubmitError> {
        let mut table = self.table.lock().expect("job table lock");
        if let Some(active) = &table.active {
            return Err(SubmitError::Busy(active.clone()));
        }
        table.next += 1;
        let handle = JobHandle { id: format!("job-{}", table.next), created_unix_ms: now_ms(), config_digest: config.digest() };
        let status = JobStatus {
            handle: handle.clone(),
            phase: JobPhase::Queued,
            step: 0,
            n_steps: config.n_steps,
            strength: None,
            strength_history: Vec::new(),
            events_tail: VecDeque::new(),
            error: None,
        };
        let record = Arc::new(JobRecord {
            handle: handle.clone(),
            status: Mutex::new(status),
            cancel: AtomicBool::new(false),
            snapshot: Mutex::new(None),
        });
        let req = Request { record: record.clone(), config, hull, conditioning, backend };
        self.sender.lock().expect("sender lock").send(req).map_err(|_| SubmitError::WorkerGone)?;
        table.records.insert(handle.id.clone(), record);
        table.active = Some(handle.id.clone());
        Ok(handle)
    }

    pub fn get(&self, id: &str) -> Option<Arc<JobRecord>> {
        self.table.lock().expect("job table lock").records.get(id).cloned()
    }

    pub fn active(&self) -> Option<String> {
        self.table.lock().expect("job table lock").active.clone()
    }

    /// Result of the most recent job that finished successfully.
    pub fn edited(&self) -> Option<Arc<RadianceField<f32>>> {
        self.edited.read().expect("edited lock").clone()
    }
}

struct Worker {
    table: Arc<Mutex<Table>>,
    edited: Arc<RwLock<Option<Arc<RadianceField<f32>>>>>,
    dataset: Arc<SceneDataset>,
    original: Arc<RadianceField<f32>>,
    work_dir: PathBuf,
}

impl Worker {
    fn run(&self, req: Request) {
        let record = req.record.clone();
        let id = record.handle.id.clone();
        let result = self.execute(req);
        {
            let mut status = record.status.lock().expect("status lock");
            match &result {
                Ok(field) => {
                    status.phase = JobPhase::Done;
                    *self.edited.write().expect("edited lock") = Some(field.clone());
                }
                Err(Error::Cancelled(_)) => status.phase = JobPhase::Cancelled,
                Err(e) => {
                    log::error!("{id} failed: {e}");
                    status.phase = JobPhase::Failed;
                    status.error = Some(e.to_string());
                }
            }
        }
        let mut table = self.table.lock().expect("job table lock");
        if table.active.as_deref() == Some(id.as_str()) {
            table.active = None;
        }
    }

    fn execute(&self, req: Request) -> hullpaint::Result<Arc<RadianceField<f32>>> {
        let Request { record, config, hull, conditioning, backend } = req;
        let dir = self.work_dir.join("jobs").join(&record.handle.id);
        std::fs::create_dir_all(&dir).map_err(|e| Error::Io { path: dir.clone(), source: e })?;
        let events_path = dir.join("events.jsonl");
        let mut events =
            std::fs::File::create(&events_path).map_err(|e| Error::Io { path: events_path.clone(), source: e })?;

        let mut observer = |e: &JobEvent, state: &JobState, field: &RadianceField<f32>| {
            if let Err(err) = writeln!(events, "{}", e.to_json_line()) {
                log::warn!("cannot append to {}: {err}", events_path.display());
            }
            let snapshot = matches!(e.event.as_str(), "dataset_update" | "progress" | "job_finished");
            if snapshot {
                *record.snapshot.lock().expect("snapshot lock") = Some(Arc::new(field.clone()));
            }
            let mut status = record.status.lock().expect("status lock");
            status.step = state.step;
            status.phase = match state.phase {
                Phase::Updating => JobPhase::Updating,
                _ => JobPhase::Training,
            };
            if e.event == "dataset_update" {
                if let Some(s) = state.last_strength {
                    status.strength = Some(s);
                    status.strength_history.push([e.step as f64, s]);
                }
            }
            status.events_tail.push_back(e.clone());
            if status.events_tail.len() > EVENTS_TAIL {
                status.events_tail.pop_front();
            }
        };
        let options = JobOptions {
            checkpoint_dir: (config.checkpoint_every > 0).then(|| dir.clone()),
            cancel: Some(&record.cancel),
            observer: Some(&mut observer),
            ..JobOptions::default()
        };
        let outcome =
            run_edit_job(&config, (*self.dataset).clone(), &self.original, &hull, backend.as_ref(), &conditioning, options)?;
        let mut ckpt = Checkpoint::new(outcome.field.clone());
        ckpt.meta = serde_json::json!({"job": record.handle.id, "config_digest": record.handle.config_digest});
        ckpt.save(dir.join("edited.nrfi"))?;
        Ok(Arc::new(outcome.field))
    }
}
