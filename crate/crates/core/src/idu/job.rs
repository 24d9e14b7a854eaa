//! The edit loop: whole-dataset updates at steps 0, n_update, 2·n_update, …
//! interleaved with constrained training on the current images.

use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicBool, Ordering};

use serde::{Deserialize, Serialize};

use super::schedule::strength_at;
use super::update::{prepare_view_masks, render_views, update_dataset, ViewMask};
use super::EditJobConfig;
use crate::error::{Error, Result};
use crate::field::optim::Adam;
use crate::field::train::{train_step, Constraint, LossBreakdown, PixelSampler, TrainWorkspace};
use crate::field::{RadianceField, Tensor};
use crate::hull::VisualHull;
use crate::imaging::RgbImage;
use crate::inpaint::{Conditioning, InpaintBackend};
use crate::scene::{Checkpoint, SceneDataset};

pub const CHECKPOINT_FILE: &str = "job.nrfi";

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Phase {
    Training,
    Updating,
    Done,
    Failed,
}

/// One line of the job's event log.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct JobEvent {
    pub step: u64,
    pub event: String,
    pub detail: serde_json::Value,
}

impl JobEvent {
    pub fn to_json_line(&self) -> String {
        serde_json::to_string(self).expect("event serializes")
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct JobState {
    /// Next training step to run.
    pub step: u64,
    pub phase: Phase,
    pub last_strength: Option<f64>,
    /// Step of the last replacement of each view's image.
    pub view_updated_at: Vec<Option<u64>>,
    pub updates_done: u64,
    pub last_loss: Option<LossBreakdown>,
}

impl JobState {
    fn new(views: usize) -> Self {
        Self {
            step: 0,
            phase: Phase::Training,
            last_strength: None,
            view_updated_at: vec![None; views],
            updates_done: 0,
            last_loss: None,
        }
    }
}

#[derive(Serialize, Deserialize)]
struct CheckpointMeta {
    state: JobState,
    config_digest: String,
}

pub type Observer<'a> = dyn FnMut(&JobEvent, &JobState, &RadianceField<f32>) + 'a;

#[derive(Default)]
pub struct JobOptions<'a> {
    /// Directory for periodic checkpoints (written as [`CHECKPOINT_FILE`]).
    pub checkpoint_dir: Option<PathBuf>,
    /// Continue from a checkpoint written by the same configuration.
    pub resume: Option<Checkpoint>,
    /// Checked before every step; when set the job stops with [`Error::Cancelled`].
    pub cancel: Option<&'a AtomicBool>,
    /// Stop with [`Error::Cancelled`] on reaching this step, as if cancelled.
    pub stop_at: Option<u64>,
    /// Called for every event with the state and field at that moment.
    pub observer: Option<&'a mut Observer<'a>>,
}

#[derive(Clone, Debug)]
pub struct JobOutcome {
    pub field: RadianceField<f32>,
    pub state: JobState,
    pub events: Vec<JobEvent>,
    pub dataset: SceneDataset,
    /// Reprojected masks used for every update.
    pub masks: Vec<ViewMask>,
}

struct Emitter<'o, 'a> {
    events: Vec<JobEvent>,
    observer: Option<&'o mut Observer<'a>>,
}

impl Emitter<'_, '_> {
    fn emit(&mut self, step: u64, event: &str, detail: serde_json::Value, state: &JobState, field: &RadianceField<f32>) {
        let e = JobEvent { step, event: event.into(), detail };
        log::info!("{}", e.to_json_line());
        if let Some(obs) = self.observer.as_deref_mut() {
            obs(&e, state, field);
        }
        self.events.push(e);
    }
}

fn image_tensor(i: usize, img: &RgbImage) -> Tensor<f32> {
    Tensor {
        name: format!("dataset.{i}"),
        shape: vec![img.height as usize, img.width as usize, 3],
        data: img.data.iter().flatten().copied().collect(),
    }
}

fn image_from_tensor(t: &Tensor<f32>) -> Result<RgbImage> {
    match t.shape[..] {
        [h, w, 3] if t.data.len() == h * w * 3 => Ok(RgbImage {
            width: w as u32,
            height: h as u32,
            data: t.data.chunks_exact(3).map(|c| [c[0], c[1], c[2]]).collect(),
        }),
        _ => Err(Error::CorruptCheckpoint(format!("tensor {} is not an RGB image", t.name))),
    }
}

fn save_job_checkpoint(
    dir: &Path,
    field: &RadianceField<f32>,
    adam: &Adam<f32>,
    state: &JobState,
    dataset: &SceneDataset,
    digest: &str,
) -> Result<PathBuf> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let ckpt = Checkpoint {
        field: field.clone(),
        optimizer: Some(adam.clone()),
        meta: serde_json::to_value(CheckpointMeta { state: state.clone(), config_digest: digest.into() })?,
        extra: dataset.views.iter().enumerate().map(|(i, v)| image_tensor(i, &v.image)).collect(),
    };
    let path = dir.join(CHECKPOINT_FILE);
    ckpt.save(&path)?;
    Ok(path)
}

/// Runs an edit of `original` inside `hull`.
///
/// The frozen reference is `original` itself and is never modified. With a
/// deterministic backend the result depends only on the inputs and
/// `config.seed`, also across checkpoint resumes.
#[allow(clippy::too_many_arguments)]
pub fn run_edit_job(
    config: &EditJobConfig,
    mut dataset: SceneDataset,
    original: &RadianceField<f32>,
    hull: &VisualHull,
    backend: &dyn InpaintBackend,
    conditioning: &Conditioning,
    options: JobOptions<'_>,
) -> Result<JobOutcome> {
    config.validate()?;
    if dataset.is_empty() {
        return Err(Error::invalid("dataset has no views"));
    }
    let digest = config.digest();
    let frozen = original;
    let cameras = dataset.cameras();

    let (mut field, mut adam, mut state) = match options.resume {
        Some(ckpt) => {
            let meta: CheckpointMeta = serde_json::from_value(ckpt.meta.clone())
                .map_err(|e| Error::CorruptCheckpoint(format!("job metadata: {e}")))?;
            if meta.config_digest != digest {
                return Err(Error::Validation("checkpoint was written with a different job configuration".into()));
            }
            let images = (0..dataset.len())
                .map(|i| {
                    let t = ckpt
                        .extra_tensor(&format!("dataset.{i}"))
                        .ok_or_else(|| Error::CorruptCheckpoint(format!("missing dataset image {i}")))?;
                    image_from_tensor(t)
                })
                .collect::<Result<Vec<_>>>()?;
            dataset.replace_images(images)?;
            let adam = ckpt.optimizer.ok_or_else(|| Error::CorruptCheckpoint("missing optimizer state".into()))?;
            (ckpt.field, adam, meta.state)
        }
        None => (original.clone(), Adam::new(config.optimizer, original), JobState::new(dataset.len())),
    };
    if state.view_updated_at.len() != dataset.len() {
        return Err(Error::CorruptCheckpoint("checkpoint view count differs from the dataset".into()));
    }

    let mut out = Emitter { events: Vec::new(), observer: options.observer };
    out.emit(
        state.step,
        "job_started",
        serde_json::json!({"n_steps": config.n_steps, "n_update": config.n_update, "views": dataset.len(),
            "backend": backend.describe(), "config_digest": digest, "resumed": state.step > 0}),
        &state,
        &field,
    );

    let masks = prepare_view_masks(hull, frozen, &cameras, config)?;
    let mut ws = TrainWorkspace::new(&field);
    let constraint = Constraint { frozen, weights: config.loss };

    while state.step < config.n_steps {
        let step = state.step;
        if options.stop_at == Some(step) || options.cancel.is_some_and(|c| c.load(Ordering::Relaxed)) {
            out.emit(step, "job_cancelled", serde_json::Value::Null, &state, &field);
            return Err(Error::Cancelled(step));
        }

        if step % config.n_update == 0 {
            state.phase = Phase::Updating;
            let strength = strength_at(step, config.n_steps)?;
            let renders = render_views(&field, &cameras, &config.sampling)?;
            let previous = dataset.images();
            let report = update_dataset(&renders, &previous, &masks, backend, conditioning, strength, state.updates_done, config);
            let report = match report {
                Ok(r) => r,
                Err(e) => {
                    state.phase = Phase::Failed;
                    out.emit(step, "job_failed", serde_json::json!({"error": e.to_string()}), &state, &field);
                    return Err(e);
                }
            };
            dataset.replace_images(report.images)?;
            for (i, slot) in state.view_updated_at.iter_mut().enumerate() {
                if !report.skipped.iter().any(|(v, _)| *v == i) {
                    *slot = Some(step);
                }
            }
            for (view, reason) in &report.skipped {
                out.emit(step, "view_skipped", serde_json::json!({"view": view, "reason": reason}), &state, &field);
            }
            if config.reset_optimizer_on_update {
                adam.reset();
            }
            state.last_strength = Some(strength);
            state.updates_done += 1;
            state.phase = Phase::Training;
            out.emit(
                step,
                "dataset_update",
                serde_json::json!({"index": state.updates_done - 1, "strength": strength,
                    "replaced": report.replaced, "skipped": report.skipped.len()}),
                &state,
                &field,
            );
        }

        let sampler = PixelSampler::new(dataset.posed_images())?;
        let mut batch = sampler.batch(config.batch_rays, &config.sampling, config.seed, step)?;
        let c = if config.constrained {
            batch.mark_membership(|p| hull.contains(p));
            Some(&constraint)
        } else {
            None
        };
        match train_step(&mut field, &batch, c, &mut adam, &mut ws, step) {
            Ok(loss) => state.last_loss = Some(loss),
            Err(e) => {
                state.phase = Phase::Failed;
                out.emit(step, "job_failed", serde_json::json!({"error": e.to_string()}), &state, &field);
                return Err(e);
            }
        }
        state.step = step + 1;

        if config.progress_every > 0 && state.step % config.progress_every == 0 {
            let detail = serde_json::to_value(state.last_loss)?;
            out.emit(state.step, "progress", detail, &state, &field);
        }
        if let Some(dir) = &options.checkpoint_dir {
            if config.checkpoint_every > 0 && state.step % config.checkpoint_every == 0 {
                let path = save_job_checkpoint(dir, &field, &adam, &state, &dataset, &digest)?;
                out.emit(state.step, "checkpoint", serde_json::json!({"path": path}), &state, &field);
            }
        }
    }

    state.phase = Phase::Done;
    out.emit(state.step, "job_finished", serde_json::json!({"updates": state.updates_done}), &state, &field);
    Ok(JobOutcome { field, state, events: out.events, dataset, masks })
}
