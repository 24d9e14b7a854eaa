use std::path::PathBuf;
use std::time::Duration;

use serde::{Deserialize, Serialize};

use crate::edit_loss::EditLossWeights;
use crate::error::{Error, Result};
use crate::field::optim::AdamConfig;
use crate::field::render::SamplingConfig;
use crate::inpaint::remote::{DEFAULT_RETRIES, DEFAULT_TIMEOUT};
use crate::maskproj::{DEFAULT_DILATION, DEFAULT_SIGMA_IN, DEFAULT_THRESHOLD};

/// Text prompt or reference image passed to the backend; at most one.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConditioningConfig {
    #[serde(default)]
    pub prompt: Option<String>,
    #[serde(default)]
    pub reference_image: Option<PathBuf>,
}

/// A silhouette mask drawn over one training view.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MaskRef {
    pub view: usize,
    pub file: PathBuf,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MeshRef {
    pub file: PathBuf,
    /// Row-major 4×4 placement transform.
    #[serde(default = "identity")]
    pub transform: [f64; 16],
    /// Side of the square silhouettes rendered from six axis cameras.
    #[serde(default = "default_mesh_resolution")]
    pub resolution: u32,
    /// Also rasterize the mesh into every training camera.
    #[serde(default)]
    pub include_training_views: bool,
}

fn identity() -> [f64; 16] {
    [1.0, 0.0, 0.0, 0.0, 0.0, 1.0, 0.0, 0.0, 0.0, 0.0, 1.0, 0.0, 0.0, 0.0, 0.0, 1.0]
}

fn default_mesh_resolution() -> u32 {
    256
}

/// Where the editable region comes from: painted masks or a placed mesh.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RegionConfig {
    #[serde(default)]
    pub masks: Vec<MaskRef>,
    #[serde(default)]
    pub mesh: Option<MeshRef>,
}

/// Every setting of an edit job. Paths are only needed when the job is run
/// from files (command line); in-process callers pass data directly.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EditJobConfig {
    /// Total training steps.
    pub n_steps: u64,
    /// Steps between whole-dataset updates.
    pub n_update: u64,
    pub loss: EditLossWeights,
    /// Apply the out-of-region penalty. Off only for ablations.
    pub constrained: bool,
    pub dilation: u32,
    /// Crop side as a multiple of the mask's bounding box, drawn per view and update.
    pub crop_scale: [f64; 2],
    pub mask_threshold: f32,
    pub sigma_in: f64,
    pub conditioning: ConditioningConfig,
    /// `mock:<target>` or an HTTP base URL.
    pub backend: String,
    pub backend_timeout_secs: f64,
    pub backend_retries: u32,
    pub max_in_flight: usize,
    pub denoise_steps: Option<u32>,
    pub sampling: SamplingConfig,
    pub optimizer: AdamConfig,
    pub batch_rays: usize,
    /// Zero the optimizer moments after every dataset update.
    pub reset_optimizer_on_update: bool,
    /// Abort on a failed backend call instead of skipping the view.
    pub strict: bool,
    pub seed: u64,
    /// Steps between checkpoints; 0 disables them.
    pub checkpoint_every: u64,
    /// Steps between progress events.
    pub progress_every: u64,
    pub manifest: Option<PathBuf>,
    pub checkpoint: Option<PathBuf>,
    pub region: Option<RegionConfig>,
    pub output_dir: Option<PathBuf>,
}

impl Default for EditJobConfig {
    fn default() -> Self {
        Self {
            n_steps: 90_000,
            n_update: 6_000,
            loss: EditLossWeights::default(),
            constrained: true,
            dilation: DEFAULT_DILATION,
            crop_scale: [1.5, 2.5],
            mask_threshold: DEFAULT_THRESHOLD,
            sigma_in: DEFAULT_SIGMA_IN,
            conditioning: ConditioningConfig::default(),
            backend: "mock:smooth".into(),
            backend_timeout_secs: DEFAULT_TIMEOUT.as_secs_f64(),
            backend_retries: DEFAULT_RETRIES,
            max_in_flight: 4,
            denoise_steps: None,
            sampling: SamplingConfig::default(),
            optimizer: AdamConfig::default(),
            batch_rays: 1024,
            reset_optimizer_on_update: false,
            strict: false,
            seed: 0,
            checkpoint_every: 0,
            progress_every: 100,
            manifest: None,
            checkpoint: None,
            region: None,
            output_dir: None,
        }
    }
}

/// One problem with a configuration, tied to the offending field.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ConfigIssue {
    pub field: String,
    pub message: String,
}

impl EditJobConfig {
    /// Scaled-down schedule for desk runs: 3000 steps, update every 200.
    pub fn desk() -> Self {
        Self {
            n_steps: 3000,
            n_update: 200,
            sampling: SamplingConfig { n_samples: 48, near: 1.25, far: 4.75, early_stop: 1e-4 },
            ..Self::default()
        }
    }

    pub fn parse(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| Error::parse("job config", e.to_string()))
    }

    pub fn backend_timeout(&self) -> Duration {
        Duration::from_secs_f64(self.backend_timeout_secs.max(0.0))
    }

    pub fn issues(&self) -> Vec<ConfigIssue> {
        let mut out = Vec::new();
        let mut push = |field: &str, message: String| out.push(ConfigIssue { field: field.into(), message });
        if self.n_steps > 0 && (self.n_update == 0 || self.n_update > self.n_steps) {
            push("n_update", format!("must be in 1..={} (n_steps)", self.n_steps));
        }
        if let Err(e) = self.loss.validate() {
            push("loss", e.to_string());
        }
        if self.dilation % 2 == 0 {
            push("dilation", format!("diameter {} must be odd", self.dilation));
        }
        let [lo, hi] = self.crop_scale;
        if !(lo >= 1.0 && hi >= lo && hi.is_finite()) {
            push("crop_scale", format!("[{lo}, {hi}] must satisfy 1 <= min <= max"));
        }
        if !(self.mask_threshold > 0.0 && self.mask_threshold < 1.0) {
            push("mask_threshold", "must lie strictly between 0 and 1".into());
        }
        if !(self.sigma_in > 0.0 && self.sigma_in.is_finite()) {
            push("sigma_in", "must be positive and finite".into());
        }
        if self.conditioning.prompt.is_some() && self.conditioning.reference_image.is_some() {
            push("conditioning", "give a prompt or a reference image, not both".into());
        }
        let b = &self.backend;
        if !(b.starts_with("mock:") || b.starts_with("http://") || b.starts_with("https://")) {
            push("backend", format!("{b:?} is neither mock:<target> nor an http(s) URL"));
        }
        if !(self.backend_timeout_secs > 0.0 && self.backend_timeout_secs.is_finite()) {
            push("backend_timeout_secs", "must be positive".into());
        }
        if self.max_in_flight == 0 {
            push("max_in_flight", "must be at least 1".into());
        }
        if let Err(e) = self.sampling.validate() {
            push("sampling", e.to_string());
        }
        if let Err(e) = self.optimizer.validate() {
            push("optimizer", e.to_string());
        }
        if self.batch_rays == 0 {
            push("batch_rays", "must be at least 1".into());
        }
        if let Some(r) = &self.region {
            if r.masks.is_empty() && r.mesh.is_none() {
                push("region", "needs masks or a mesh".into());
            }
            if !r.masks.is_empty() && r.mesh.is_some() {
                push("region", "give masks or a mesh, not both".into());
            }
        }
        out
    }

    pub fn validate(&self) -> Result<()> {
        let issues = self.issues();
        if issues.is_empty() {
            return Ok(());
        }
        let text: Vec<String> = issues.iter().map(|i| format!("{}: {}", i.field, i.message)).collect();
        Err(Error::Validation(text.join("; ")))
    }

    /// Stable short digest of the serialized configuration.
    pub fn digest(&self) -> String {
        let text = serde_json::to_string(self).unwrap_or_default();
        // FNV-1a, enough to tell configurations apart in logs.
        let mut h: u64 = 0xcbf2_9ce4_8422_2325;
        for b in text.bytes() {
            h ^= b as u64;
            h = h.wrapping_mul(0x100_0000_01b3);
        }
        format!("{h:016x}")
    }
}
