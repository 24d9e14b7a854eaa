use std::sync::atomic::{AtomicBool, AtomicUsize, Ordering};

use hullpaint::desk::{prepare_desk_scene, DeskOptions};
use hullpaint::field::render::SamplingConfig;
use hullpaint::field::train::{fit, FitConfig};
use hullpaint::idu::{
    render_views, run_edit_job, update_dataset, EditJobConfig, JobEvent, JobOptions, JobState, Phase, ViewMask,
    CHECKPOINT_FILE,
};
use hullpaint::inpaint::{Conditioning, InpaintBackend, InpaintRequest, InpaintResponse, MockBackend, MockTarget};
use hullpaint::scene::{generate_synthetic_scene, load_manifest, save_dataset, Checkpoint, SyntheticKind, SyntheticSpec};
use hullpaint::{Error, FieldConfig, MaskImage, RadianceField, RgbImage};

struct Failing(AtomicUsize);

impl InpaintBackend for Failing {
    fn inpaint(&self, _: &InpaintRequest) -> hullpaint::Result<InpaintResponse> {
        self.0.fetch_add(1, Ordering::Relaxed);
        Err(Error::Transport("connection refused".into()))
    }

    fn describe(&self) -> String {
        "failing".into()
    }
}

fn sampling() -> SamplingConfig {
    SamplingConfig { n_samples: 24, near: 1.25, far: 4.75, early_stop: 1e-4 }
}

fn tiny() -> (EditJobConfig, hullpaint::desk::DeskScene) {
    let opts = DeskOptions {
        views: 4,
        resolution: 16,
        fit_steps: 30,
        hull_views: 3,
        field: FieldConfig { levels: 2, log2_table_size: 10, hidden_width: 8, ..FieldConfig::default() },
        ..DeskOptions::default()
    };
    let config = EditJobConfig { n_steps: 12, n_update: 4, batch_rays: 32, sampling: sampling(), progress_every: 3, ..opts.job_config() };
    let desk = prepare_desk_scene(&opts, &config.sampling).unwrap();
    (config, desk)
}

#[test]
fn fitting_one_small_scene_reduces_the_loss_tenfold() {
    let spec = SyntheticSpec { kind: SyntheticKind::TexturedBox, views: 2, resolution: 16 };
    let (dataset, _) = generate_synthetic_scene(&spec, 0).unwrap();
    let mut field = RadianceField::<f32>::new(FieldConfig::default(), 0).unwrap();
    let cfg = FitConfig { steps: 500, batch_rays: 256, sampling: sampling(), ..FitConfig::default() };
    let losses = fit(&mut field, dataset.posed_images(), &cfg, |_, _| {}).unwrap();
    let start: f64 = losses[..10].iter().sum::<f64>() / 10.0;
    let end: f64 = losses[losses.len() - 10..].iter().sum::<f64>() / 10.0;
    assert!(end * 10.0 <= start, "loss went from {start} to {end}");
}

#[test]
fn manifest_round_trip() {
    let spec = SyntheticSpec { kind: SyntheticKind::SphereInBox, views: 3, resolution: 12 };
    let (dataset, _) = generate_synthetic_scene(&spec, 4).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let path = save_dataset(&dataset, dir.path()).unwrap();
    let back = load_manifest(&path).unwrap();
    assert_eq!(back.len(), 3);
    for (a, b) in dataset.views.iter().zip(&back.views) {
        assert_eq!(a.file, b.file);
        assert_eq!(a.image.quantized(), b.image);
        for (x, y) in a.camera.c2w().iter().zip(b.camera.c2w()) {
            assert!((x - y).abs() < 1e-12);
        }
    }
}

fn view_masks() -> (Vec<RgbImage>, Vec<ViewMask>) {
    let renders: Vec<RgbImage> = (0..5).map(|i| RgbImage::filled(20, 16, [0.1 * i as f32, 0.5, 0.5])).collect();
    let masks = (0..5)
        .map(|i| {
            let mask = MaskImage::from_fn(20, 16, |x, y| i != 2 && (5..9 + i).contains(&x) && (4..10).contains(&y));
            let dilated = hullpaint::maskproj::dilate(&mask, 3).unwrap();
            ViewMask { mask, dilated }
        })
        .collect();
    (renders, masks)
}

#[test]
fn updates_touch_only_the_mask_and_ignore_scheduling() {
    let (renders, masks) = view_masks();
    let backend = MockBackend::new(MockTarget::Solid([1.0, 0.0, 0.0]));
    let one = EditJobConfig { max_in_flight: 1, ..EditJobConfig::default() };
    let many = EditJobConfig { max_in_flight: 4, ..EditJobConfig::default() };
    let a = update_dataset(&renders, &renders, &masks, &backend, &Conditioning::None, 1.0, 3, &one).unwrap();
    let b = update_dataset(&renders, &renders, &masks, &backend, &Conditioning::None, 1.0, 3, &many).unwrap();
    assert_eq!(a, b);
    assert_eq!(a.replaced, 5);
    assert!(a.crops[2].is_none(), "view without region is not sent");
    for ((img, render), m) in a.images.iter().zip(&renders).zip(&masks) {
        for y in 0..16 {
            for x in 0..20 {
                let want = if m.mask.get(x, y) { [1.0, 0.0, 0.0] } else { render.get(x, y) };
                assert_eq!(img.get(x, y), want);
            }
        }
    }
}

#[test]
fn failed_views_are_skipped_unless_strict() {
    let (renders, masks) = view_masks();
    let previous: Vec<RgbImage> = renders.iter().map(|r| RgbImage::filled(r.width, r.height, [0.9; 3])).collect();
    let backend = Failing(AtomicUsize::new(0));
    let cfg = EditJobConfig::default();
    let r = update_dataset(&renders, &previous, &masks, &backend, &Conditioning::None, 0.5, 0, &cfg).unwrap();
    assert_eq!(r.replaced, 1);
    assert_eq!(r.skipped.iter().map(|s| s.0).collect::<Vec<_>>(), [0, 1, 3, 4]);
    assert_eq!(r.images[0], previous[0]);
    assert_eq!(r.images[2], renders[2]);
    let strict = EditJobConfig { strict: true, ..cfg };
    let err = update_dataset(&renders, &previous, &masks, &backend, &Conditioning::None, 0.5, 0, &strict).unwrap_err();
    assert!(matches!(err, Error::Transport(_)));
}

#[test]
fn strict_job_fails_with_an_event() {
    let (config, desk) = tiny();
    let config = EditJobConfig { strict: true, ..config };
    let backend = Failing(AtomicUsize::new(0));
    let mut seen = Vec::new();
    let mut obs = |e: &JobEvent, s: &JobState, _: &RadianceField<f32>| seen.push((e.event.clone(), s.phase));
    let options = JobOptions { observer: Some(&mut obs), ..JobOptions::default() };
    let err = run_edit_job(&config, desk.dataset.clone(), &desk.original, &desk.hull, &backend, &Conditioning::None, options)
        .unwrap_err();
    assert!(matches!(err, Error::Transport(_)));
    assert_eq!(seen.last().unwrap(), &("job_failed".to_string(), Phase::Failed));
}

#[test]
fn lenient_job_logs_skipped_views() {
    let (config, desk) = tiny();
    let backend = Failing(AtomicUsize::new(0));
    let out = run_edit_job(&config, desk.dataset.clone(), &desk.original, &desk.hull, &backend, &Conditioning::None, JobOptions::default())
        .unwrap();
    let skipped = out.events.iter().filter(|e| e.event == "view_skipped").count();
    assert_eq!(skipped, backend.0.load(Ordering::Relaxed));
    assert!(skipped > 0);
    assert_eq!(out.state.phase, Phase::Done);
}

#[test]
fn cancel_flag_stops_before_the_next_step() {
    let (config, desk) = tiny();
    let backend = MockBackend::new(MockTarget::Solid([1.0, 0.0, 0.0]));
    let cancel = AtomicBool::new(false);
    let mut obs = |e: &JobEvent, _: &JobState, _: &RadianceField<f32>| {
        if e.event == "progress" && e.step == 6 {
            cancel.store(true, Ordering::Relaxed);
        }
    };
    let options = JobOptions { cancel: Some(&cancel), observer: Some(&mut obs), ..JobOptions::default() };
    let err = run_edit_job(&config, desk.dataset.clone(), &desk.original, &desk.hull, &backend, &Conditioning::None, options)
        .unwrap_err();
    assert!(matches!(err, Error::Cancelled(6)), "{err}");
}

#[test]
fn events_serialize_as_json_lines() {
    let (config, desk) = tiny();
    let backend = MockBackend::new(MockTarget::Solid([1.0, 0.0, 0.0]));
    let out = run_edit_job(&config, desk.dataset.clone(), &desk.original, &desk.hull, &backend, &Conditioning::None, JobOptions::default())
        .unwrap();
    let names: Vec<&str> = out.events.iter().map(|e| e.event.as_str()).collect();
    assert_eq!(names.first(), Some(&"job_started"));
    assert_eq!(names.last(), Some(&"job_finished"));
    assert_eq!(names.iter().filter(|n| **n == "progress").count(), 4);
    for e in &out.events {
        let line = e.to_json_line();
        assert!(!line.contains('\n'));
        assert_eq!(&serde_json::from_str::<JobEvent>(&line).unwrap(), e);
    }
    let strengths: Vec<f64> = out
        .events
        .iter()
        .filter(|e| e.event == "dataset_update")
        .map(|e| e.detail["strength"].as_f64().unwrap())
        .collect();
    assert_eq!(strengths.len(), 3);
    assert_eq!(strengths[0], 1.0);
    assert!(strengths.windows(2).all(|w| w[1] < w[0]));
}

#[test]
fn resume_rejects_a_different_config() {
    let (config, desk) = tiny();
    let backend = MockBackend::new(MockTarget::Solid([1.0, 0.0, 0.0]));
    let dir = tempfile::tempdir().unwrap();
    let config = EditJobConfig { checkpoint_every: 4, ..config };
    let options = JobOptions { checkpoint_dir: Some(dir.path().into()), stop_at: Some(5), ..JobOptions::default() };
    let r = run_edit_job(&config, desk.dataset.clone(), &desk.original, &desk.hull, &backend, &Conditioning::None, options);
    assert!(matches!(r, Err(Error::Cancelled(5))));
    let ckpt = Checkpoint::load(dir.path().join(CHECKPOINT_FILE)).unwrap();
    let other = EditJobConfig { seed: 99, ..config };
    let options = JobOptions { resume: Some(ckpt), ..JobOptions::default() };
    let err = run_edit_job(&other, desk.dataset.clone(), &desk.original, &desk.hull, &backend, &Conditioning::None, options)
        .unwrap_err();
    assert!(matches!(err, Error::Validation(_)), "{err}");
}

#[test]
fn zero_steps_leave_the_field_alone() {
    let (config, desk) = tiny();
    let config = EditJobConfig { n_steps: 0, ..config };
    let backend = MockBackend::new(MockTarget::Solid([1.0, 0.0, 0.0]));
    let out = run_edit_job(&config, desk.dataset.clone(), &desk.original, &desk.hull, &backend, &Conditioning::None, JobOptions::default())
        .unwrap();
    assert_eq!(out.field, desk.original);
    assert_eq!(out.state.updates_done, 0);
    let renders = render_views(&out.field, &desk.dataset.cameras(), &config.sampling).unwrap();
    assert_eq!(renders.len(), 4);
}
