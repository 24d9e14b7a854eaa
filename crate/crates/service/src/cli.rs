//! `hullpaint <subcommand>`. Exit codes: 0 success, 2 usage error, 1 runtime error.

use std::ffi::OsString;
use std::io::Write;
use std::net::SocketAddr;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use hullpaint::camera::Vec3;
use hullpaint::field::render::{render_view, SamplingConfig};
use hullpaint::field::train::{fit, FitConfig};
use hullpaint::hull::PosedMesh;
use hullpaint::idu::{
    hull_from_mesh, hull_from_view_masks, load_conditioning, load_region, prepare_view_masks, run_edit_job, EditJobConfig,
    JobEvent, JobOptions, JobState, CHECKPOINT_FILE,
};
use hullpaint::inpaint::backend_from_spec;
use hullpaint::maskproj::{DEFAULT_SIGMA_IN, DEFAULT_THRESHOLD};
use hullpaint::scene::{load_manifest, save_dataset, save_frames, Checkpoint};
use hullpaint::{CameraModel, FieldConfig, MaskImage, RadianceField};

use crate::error::{ServiceError, ServiceResult};
use crate::server::{load_state, serve_forever, ServiceConfig};

#[derive(Debug, Parser)]
#[command(name = "hullpaint", version, about = "Region-constrained radiance field editing")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Train the original field from a manifest.
    Fit(FitArgs),
    /// Run an edit job from a job config.
    Edit(EditArgs),
    /// Render training views or an orbit from a checkpoint.
    Render(RenderArgs),
    /// Write the reprojected region mask of every training view.
    HullPreview(HullPreviewArgs),
    /// Start the HTTP service.
    Serve(ServeArgs),
}

#[derive(Debug, Clone, Args)]
pub struct SamplingArgs {
    /// Samples per ray.
    #[arg(long)]
    pub samples: Option<usize>,
    #[arg(long)]
    pub near: Option<f64>,
    #[arg(long)]
    pub far: Option<f64>,
}

impl SamplingArgs {
    fn apply(&self, mut s: SamplingConfig) -> SamplingConfig {
        s.n_samples = self.samples.unwrap_or(s.n_samples);
        s.near = self.near.unwrap_or(s.near);
        s.far = self.far.unwrap_or(s.far);
        s
    }
}

#[derive(Debug, Args)]
pub struct FitArgs {
    #[arg(long)]
    pub manifest: PathBuf,
    /// Checkpoint to write.
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, default_value_t = 2000)]
    pub steps: u64,
    #[arg(long, default_value_t = 512)]
    pub batch_rays: usize,
    /// JSON field configuration; defaults fit the manifest's scene box.
    #[arg(long)]
    pub field_config: Option<PathBuf>,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[command(flatten)]
    pub sampling: SamplingArgs,
}

#[derive(Debug, Args)]
pub struct EditArgs {
    /// Job config (JSON). Relative paths in it are taken from its directory.
    #[arg(long)]
    pub config: PathBuf,
    /// Validate the config and its inputs without writing anything.
    #[arg(long)]
    pub dry_run: bool,
    /// Output directory; overrides `output_dir` in the config.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Continue from the job checkpoint in the output directory.
    #[arg(long)]
    pub resume: bool,
}

#[derive(Debug, Args)]
pub struct RenderArgs {
    #[arg(long)]
    pub ckpt: PathBuf,
    /// Render the cameras of this manifest.
    #[arg(long, required_unless_present = "orbit")]
    pub manifest: Option<PathBuf>,
    /// Only these manifest views (comma separated).
    #[arg(long, value_delimiter = ',', requires = "manifest")]
    pub views: Vec<usize>,
    /// Render this many frames on a circle around the field instead.
    #[arg(long, conflicts_with = "manifest")]
    pub orbit: Option<u32>,
    #[arg(long, default_value_t = 3.0)]
    pub orbit_radius: f64,
    #[arg(long, default_value_t = 0.8)]
    pub orbit_height: f64,
    #[arg(long, default_value_t = 128)]
    pub size: u32,
    #[arg(long, default_value_t = 40.0)]
    pub fov: f64,
    #[arg(long)]
    pub out: PathBuf,
    #[command(flatten)]
    pub sampling: SamplingArgs,
}

/// `VIEW=FILE`, or a file whose stem ends in the view index (`v3.png`).
#[derive(Debug, Clone, PartialEq)]
pub struct MaskArg {
    pub view: usize,
    pub file: PathBuf,
}

fn parse_mask_arg(s: &str) -> Result<MaskArg, String> {
    if let Some((view, file)) = s.split_once('=') {
        let view = view.parse().map_err(|_| format!("{view:?} is not a view index"))?;
        return Ok(MaskArg { view, file: file.into() });
    }
    let file = PathBuf::from(s);
    let stem = file.file_stem().and_then(|s| s.to_str()).unwrap_or("");
    let digits = stem.len() - stem.trim_end_matches(|c: char| c.is_ascii_digit()).len();
    if digits == 0 {
        return Err(format!("cannot tell the view of {s:?}; name it like v3.png or pass 3={s}"));
    }
    let view = stem[stem.len() - digits..].parse().map_err(|_| format!("view index in {s:?} is too large"))?;
    Ok(MaskArg { view, file })
}

fn parse_transform(s: &str) -> Result<[f64; 16], String> {
    let values: Vec<f64> = s
        .split(',')
        .map(|v| v.trim().parse::<f64>().map_err(|_| format!("{v:?} is not a number")))
        .collect::<Result<_, _>>()?;
    values.try_into().map_err(|v: Vec<f64>| format!("transform needs 16 values, got {}", v.len()))
}

#[derive(Debug, Args)]
#[command(group(clap::ArgGroup::new("region").required(true).args(["mask", "mesh"])))]
pub struct HullPreviewArgs {
    #[arg(long)]
    pub manifest: PathBuf,
    /// Checkpoint of the original field, used for occlusion.
    #[arg(long)]
    pub ckpt: PathBuf,
    /// Painted mask, `VIEW=FILE` or `vN.png`. Repeat for several views.
    #[arg(long, value_parser = parse_mask_arg)]
    pub mask: Vec<MaskArg>,
    /// OBJ mesh defining the region instead of masks.
    #[arg(long, conflicts_with = "mask")]
    pub mesh: Option<PathBuf>,
    /// Row-major 4×4 mesh placement, 16 comma separated values.
    #[arg(long, value_parser = parse_transform, requires = "mesh", allow_hyphen_values = true)]
    pub transform: Option<[f64; 16]>,
    #[arg(long, default_value_t = 256)]
    pub mesh_resolution: u32,
    #[arg(long)]
    pub include_training_views: bool,
    /// Also write masks dilated by a disc of this (odd) diameter.
    #[arg(long)]
    pub dilation: Option<u32>,
    #[arg(long, default_value_t = DEFAULT_SIGMA_IN)]
    pub sigma_in: f64,
    #[arg(long, default_value_t = DEFAULT_THRESHOLD)]
    pub threshold: f32,
    #[arg(long)]
    pub out: PathBuf,
    #[command(flatten)]
    pub sampling: SamplingArgs,
}

#[derive(Debug, Args)]
pub struct ServeArgs {
    #[arg(long, default_value = "127.0.0.1:8080")]
    pub addr: SocketAddr,
    #[arg(long)]
    pub manifest: PathBuf,
    /// Checkpoint of the original field.
    #[arg(long)]
    pub ckpt: PathBuf,
    /// Annotation UI assets served at `/`.
    #[arg(long)]
    pub static_dir: Option<PathBuf>,
    /// Job outputs and the base for relative paths in job configs.
    #[arg(long, default_value = ".")]
    pub work_dir: PathBuf,
    #[command(flatten)]
    pub sampling: SamplingArgs,
}

/// Parses `argv` and runs the subcommand; returns the exit code.
pub fn run<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 2 } else { 0 };
        }
    };
    let _ = env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).try_init();
    match dispatch(cli.command) {
        Ok(()) => 0,
        Err(ServiceError::Usage(msg)) => {
            eprintln!("error: {msg}");
            2
        }
        Err(e) => {
            eprintln!("error: {e}");
            1
        }
    }
}

pub fn dispatch(command: Command) -> ServiceResult<()> {
    match command {
        Command::Fit(a) => cmd_fit(a),
        Command::Edit(a) => cmd_edit(a),
        Command::Render(a) => cmd_render(a),
        Command::HullPreview(a) => cmd_hull_preview(a),
        Command::Serve(a) => cmd_serve(a),
    }
}

fn read_json<T: serde::de::DeserializeOwned>(path: &Path) -> ServiceResult<T> {
    let text = std::fs::read_to_string(path).map_err(|e| hullpaint::Error::Io { path: path.into(), source: e })?;
    serde_json::from_str(&text)
        .map_err(|e| hullpaint::Error::Parse { context: path.display().to_string(), message: e.to_string() }.into())
}

fn cmd_fit(a: FitArgs) -> ServiceResult<()> {
    let dataset = load_manifest(&a.manifest)?;
    let field_cfg = match &a.field_config {
        Some(p) => read_json(p)?,
        None => FieldConfig { bbox: dataset.scene_box.unwrap_or(FieldConfig::default().bbox), ..FieldConfig::default() },
    };
    let mut field = RadianceField::<f32>::new(field_cfg, a.seed)?;
    let cfg = FitConfig {
        steps: a.steps,
        batch_rays: a.batch_rays,
        sampling: a.sampling.apply(SamplingConfig::default()),
        seed: a.seed,
        ..FitConfig::default()
    };
    log::info!("fitting {} parameters to {} views for {} steps", field.param_count(), dataset.len(), a.steps);
    let losses = fit(&mut field, dataset.posed_images(), &cfg, |step, loss| {
        if (step + 1) % 100 == 0 {
            log::info!("step {}: rgb loss {:.5}", step + 1, loss.rgb);
        }
    })?;
    let mut ckpt = Checkpoint::new(field);
    ckpt.meta = serde_json::json!({"fit": cfg, "final_loss": losses.last()});
    ckpt.save(&a.out)?;
    println!("{}", serde_json::json!({"checkpoint": a.out, "steps": a.steps, "final_loss": losses.last()}));
    Ok(())
}

fn required<'a>(value: &'a Option<PathBuf>, field: &str) -> ServiceResult<&'a PathBuf> {
    value.as_ref().ok_or_else(|| ServiceError::Usage(format!("job config needs `{field}` when run from the command line")))
}

fn resolve(base: &Path, p: &Path) -> PathBuf {
    if p.is_absolute() {
        p.to_path_buf()
    } else {
        base.join(p)
    }
}

fn cmd_edit(a: EditArgs) -> ServiceResult<()> {
    let text = std::fs::read_to_string(&a.config).map_err(|e| hullpaint::Error::Io { path: a.config.clone(), source: e })?;
    let config = EditJobConfig::parse(&text)?;
    let issues = config.issues();
    if !issues.is_empty() {
        for i in &issues {
            eprintln!("{}: {}", i.field, i.message);
        }
        return Err(hullpaint::Error::Validation(format!("{} problem(s) in {}", issues.len(), a.config.display())).into());
    }
    let base = a.config.parent().unwrap_or(Path::new(".")).to_path_buf();
    let manifest = resolve(&base, required(&config.manifest, "manifest")?);
    let checkpoint = resolve(&base, required(&config.checkpoint, "checkpoint")?);
    let region = config
        .region
        .as_ref()
        .ok_or_else(|| ServiceError::Usage("job config needs `region` when run from the command line".into()))?;
    let out = match (&a.out, &config.output_dir) {
        (Some(o), _) => o.clone(),
        (None, Some(o)) => resolve(&base, o),
        (None, None) => return Err(ServiceError::Usage("give --out or `output_dir` in the job config".into())),
    };

    let dataset = load_manifest(&manifest)?;
    let original = Checkpoint::load(&checkpoint)?.field;
    let hull = load_region(region, &base, &dataset.cameras())?;
    let conditioning = load_conditioning(&config.conditioning, &base)?;
    let backend = backend_from_spec(&config.backend, config.backend_timeout(), config.backend_retries)?;
    if a.dry_run {
        println!(
            "{}",
            serde_json::json!({"valid": true, "views": dataset.len(), "parameters": original.param_count(),
                "silhouettes": hull.views().len(), "backend": backend.describe(), "config_digest": config.digest()})
        );
        return Ok(());
    }

    std::fs::create_dir_all(&out).map_err(|e| hullpaint::Error::Io { path: out.clone(), source: e })?;
    let resume = if a.resume {
        let p = out.join(CHECKPOINT_FILE);
        Some(Checkpoint::load(&p)?)
    } else {
        None
    };
    let events_path = out.join("events.jsonl");
    let mut events = std::fs::OpenOptions::new()
        .create(true)
        .append(a.resume)
        .write(true)
        .truncate(!a.resume)
        .open(&events_path)
        .map_err(|e| hullpaint::Error::Io { path: events_path.clone(), source: e })?;
    let mut observer = |e: &JobEvent, _: &JobState, _: &RadianceField<f32>| {
        if let Err(err) = writeln!(events, "{}", e.to_json_line()) {
            log::warn!("cannot append to {}: {err}", events_path.display());
        }
    };
    let options = JobOptions { checkpoint_dir: Some(out.clone()), resume, observer: Some(&mut observer), ..JobOptions::default() };
    let outcome = run_edit_job(&config, dataset, &original, &hull, backend.as_ref(), &conditioning, options)?;

    let mut ckpt = Checkpoint::new(outcome.field);
    ckpt.meta = serde_json::json!({"config_digest": config.digest(), "steps": outcome.state.step});
    let edited = out.join("edited.nrfi");
    ckpt.save(&edited)?;
    save_dataset(&outcome.dataset, out.join("dataset"))?;
    println!(
        "{}",
        serde_json::json!({"checkpoint": edited, "updates": outcome.state.updates_done, "last_loss": outcome.state.last_loss})
    );
    Ok(())
}

fn orbit_cameras(center: Vec3, n: u32, radius: f64, height: f64, size: u32, fov: f64) -> Vec<CameraModel> {
    (0..n)
        .map(|i| {
            let a = i as f64 * std::f64::consts::TAU / n as f64;
            let eye = center + Vec3::new(radius * a.cos(), height, radius * a.sin());
            CameraModel::look_at(eye, center, Vec3::y(), size, size, fov)
        })
        .collect()
}

fn cmd_render(a: RenderArgs) -> ServiceResult<()> {
    let field = Checkpoint::load(&a.ckpt)?.field;
    let sampling = a.sampling.apply(SamplingConfig::default());
    let cameras: Vec<CameraModel> = match (&a.manifest, a.orbit) {
        (Some(m), _) => {
            let all = load_manifest(m)?.cameras();
            if a.views.is_empty() {
                all
            } else {
                a.views
                    .iter()
                    .map(|&v| all.get(v).cloned().ok_or_else(|| ServiceError::Usage(format!("no view {v} in {}", m.display()))))
                    .collect::<ServiceResult<_>>()?
            }
        }
        (None, Some(n)) => {
            let b = field.bbox();
            let center = Vec3::new((b.min[0] + b.max[0]) / 2.0, (b.min[1] + b.max[1]) / 2.0, (b.min[2] + b.max[2]) / 2.0);
            orbit_cameras(center, n, a.orbit_radius, a.orbit_height, a.size, a.fov)
        }
        (None, None) => return Err(ServiceError::Usage("give --manifest or --orbit".into())),
    };
    let frames = cameras
        .iter()
        .map(|c| render_view(&field, c, &sampling, None))
        .collect::<hullpaint::Result<Vec<_>>>()?;
    let written = save_frames(&frames, &a.out)?;
    println!("{}", serde_json::json!({"frames": written.len(), "out": a.out}));
    Ok(())
}

fn cmd_hull_preview(a: HullPreviewArgs) -> ServiceResult<()> {
    let dataset = load_manifest(&a.manifest)?;
    let original = Checkpoint::load(&a.ckpt)?.field;
    let cameras = dataset.cameras();
    let hull = match &a.mesh {
        Some(path) => {
            let mesh = PosedMesh::load_obj(path)?;
            let transform = a.transform.unwrap_or([1.0, 0.0, 0.0, 0.0, 0.0, 1.0, 0.0, 0.0, 0.0, 0.0, 1.0, 0.0, 0.0, 0.0, 0.0, 1.0]);
            let training = a.include_training_views.then_some(cameras.as_slice());
            hull_from_mesh(&mesh, &transform, a.mesh_resolution, training)?
        }
        None => {
            let masks = a
                .mask
                .iter()
                .map(|m| Ok((m.view, MaskImage::load(&m.file)?)))
                .collect::<hullpaint::Result<Vec<_>>>()?;
            hull_from_view_masks(&cameras, &masks)?
        }
    };
    let config = EditJobConfig {
        sampling: a.sampling.apply(SamplingConfig::default()),
        sigma_in: a.sigma_in,
        mask_threshold: a.threshold,
        dilation: a.dilation.unwrap_or(1),
        ..EditJobConfig::default()
    };
    config.validate()?;
    let masks = prepare_view_masks(&hull, &original, &cameras, &config)?;
    std::fs::create_dir_all(&a.out).map_err(|e| hullpaint::Error::Io { path: a.out.clone(), source: e })?;
    let mut pixels = Vec::with_capacity(masks.len());
    for (i, m) in masks.iter().enumerate() {
        m.mask.save(a.out.join(format!("mask_{i:03}.png")))?;
        if a.dilation.is_some() {
            m.dilated.save(a.out.join(format!("dilated_{i:03}.png")))?;
        }
        pixels.push(m.mask.count());
    }
    println!("{}", serde_json::json!({"views": masks.len(), "out": a.out, "pixels": pixels}));
    Ok(())
}

fn cmd_serve(a: ServeArgs) -> ServiceResult<()> {
    let config = ServiceConfig {
        sampling: a.sampling.apply(ServiceConfig::default().sampling),
        work_dir: a.work_dir,
        static_dir: a.static_dir,
        ..ServiceConfig::default()
    };
    let state = load_state(&a.manifest, &a.ckpt, config)?;
    serve_forever(a.addr, state)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn mask_arguments() {
        assert_eq!(parse_mask_arg("masks/v3.png").unwrap(), MaskArg { view: 3, file: "masks/v3.png".into() });
        assert_eq!(parse_mask_arg("12=a.png").unwrap(), MaskArg { view: 12, file: "a.png".into() });
        assert!(parse_mask_arg("mask.png").is_err());
        assert!(parse_mask_arg("x=a.png").is_err());
    }

    #[test]
    fn transforms_need_sixteen_values() {
        assert_eq!(parse_transform("1,0,0,0,0,1,0,0,0,0,1,0,0,0,0,1").unwrap()[15], 1.0);
        assert!(parse_transform("1,2,3").is_err());
    }

    #[test]
    fn missing_flag_is_a_usage_error() {
        let e = Cli::try_parse_from(["hullpaint", "hull-preview", "--ckpt", "f.nrfi", "--out", "o"]).unwrap_err();
        assert!(e.use_stderr());
        assert!(e.to_string().contains("--manifest"), "{e}");
    }

    #[test]
    fn unknown_flag_is_rejected() {
        assert_eq!(run(["hullpaint", "fit", "--bogus"]), 2);
        assert_eq!(run(["hullpaint", "--help"]), 0);
    }
}
