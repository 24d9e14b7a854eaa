#![allow(dead_code)]

use std::sync::Arc;

use base64::engine::general_purpose::STANDARD;
use base64::Engine;
use hullpaint::field::render::SamplingConfig;
use hullpaint::scene::{generate_synthetic_scene, AnalyticScene, SceneDataset, SyntheticKind, SyntheticSpec};
use hullpaint::{FieldConfig, MaskImage, RadianceField};
use hullpaint_service::{AppState, RunningService, ServiceConfig};

pub const RES: u32 = 24;
pub const VIEWS: usize = 6;

pub fn small_field() -> RadianceField<f32> {
    let cfg = FieldConfig { levels: 2, log2_table_size: 10, hidden_width: 8, ..FieldConfig::default() };
    RadianceField::new(cfg, 1).unwrap()
}

pub fn scene() -> (SceneDataset, AnalyticScene) {
    let spec = SyntheticSpec { kind: SyntheticKind::SphereInBox, views: VIEWS, resolution: RES };
    generate_synthetic_scene(&spec, 0).unwrap()
}

pub fn sampling() -> SamplingConfig {
    SamplingConfig { n_samples: 16, near: 1.25, far: 4.75, early_stop: 1e-4 }
}

pub struct Fixture {
    pub service: RunningService,
    pub scene: AnalyticScene,
    pub dataset: SceneDataset,
    pub work: tempfile::TempDir,
    pub agent: ureq::Agent,
}

pub fn start() -> Fixture {
    let (dataset, scene) = scene();
    let work = tempfile::tempdir().unwrap();
    let config = ServiceConfig { sampling: sampling(), work_dir: work.path().into(), ..ServiceConfig::default() };
    let state: Arc<AppState> = AppState::new(dataset.clone(), small_field(), config);
    let service = RunningService::start("127.0.0.1:0".parse().unwrap(), state).unwrap();
    let agent = ureq::Agent::config_builder().http_status_as_error(false).build().into();
    Fixture { service, scene, dataset, work, agent }
}

pub fn b64_mask(mask: &MaskImage) -> String {
    STANDARD.encode(mask.to_png().unwrap())
}

pub fn mask_from_b64(text: &str) -> MaskImage {
    MaskImage::from_png(&STANDARD.decode(text).unwrap()).unwrap()
}

impl Fixture {
    pub fn url(&self, path: &str) -> String {
        format!("{}{path}", self.service.url())
    }

    pub fn get(&self, path: &str) -> (u16, Vec<u8>) {
        let mut r = self.agent.get(&self.url(path)).call().unwrap();
        (r.status().as_u16(), r.body_mut().read_to_vec().unwrap())
    }

    pub fn get_json(&self, path: &str) -> (u16, serde_json::Value) {
        let (s, b) = self.get(path);
        (s, serde_json::from_slice(&b).unwrap_or(serde_json::Value::Null))
    }

    pub fn post_json(&self, path: &str, body: &serde_json::Value, request_id: Option<&str>) -> (u16, serde_json::Value) {
        let mut req = self.agent.post(&self.url(path)).header("content-type", "application/json");
        if let Some(id) = request_id {
            req = req.header("x-request-id", id);
        }
        let mut r = req.send(body.to_string()).unwrap();
        let text = r.body_mut().read_to_string().unwrap();
        (r.status().as_u16(), serde_json::from_str(&text).unwrap_or(serde_json::Value::String(text)))
    }

    pub fn delete(&self, path: &str) -> (u16, serde_json::Value) {
        let mut r = self.agent.delete(&self.url(path)).call().unwrap();
        let text = r.body_mut().read_to_string().unwrap();
        (r.status().as_u16(), serde_json::from_str(&text).unwrap_or(serde_json::Value::Null))
    }

    /// Silhouette of the target sphere in `view`.
    pub fn target_mask(&self, view: usize) -> MaskImage {
        let cams = self.dataset.cameras();
        self.scene.target_silhouettes(&cams[view..=view], 0.1).unwrap().remove(0).mask
    }

    pub fn upload(&self, view: usize, mask: &MaskImage) -> u64 {
        let (status, body) = self.post_json("/api/masks", &serde_json::json!({"view": view, "mask": b64_mask(mask)}), None);
        assert_eq!(status, 200, "{body}");
        body["id"].as_u64().unwrap()
    }

    pub fn wait_for(&self, id: &str, done: impl Fn(&serde_json::Value) -> bool) -> serde_json::Value {
        for _ in 0..600 {
            let (status, body) = self.get_json(&format!("/api/jobs/{id}"));
            assert_eq!(status, 200);
            if done(&body) {
                return body;
            }
            std::thread::sleep(std::time::Duration::from_millis(50));
        }
        panic!("job {id} did not reach the expected state");
    }
}
