//! Iterative dataset update: the edit is distilled into the field by
//! repeatedly replacing every training image with an inpainted render of the
//! current field, with inpainting strength annealed from 1.0 to 0.2.

pub mod config;
pub mod job;
pub mod region;
pub mod schedule;
pub mod update;

pub use config::{ConditioningConfig, ConfigIssue, EditJobConfig, MaskRef, MeshRef, RegionConfig};
pub use job::{run_edit_job, JobEvent, JobOptions, JobOutcome, JobState, Phase, CHECKPOINT_FILE};
pub use region::{hull_from_mesh, hull_from_view_masks, load_conditioning, load_region, mesh_silhouette_cameras};
pub use schedule::{strength_at, update_steps};
pub use update::{prepare_view_masks, render_views, update_dataset, UpdateReport, ViewMask};
