//! Single structured-text configuration covering every tolerance and
//! hyperparameter; flag overrides come from the CLI. The full snapshot is
//! recorded in every run manifest.

use std::path::Path;

use serde::{Deserialize, Serialize};
use structdiff_core::backbone::{BackboneConfig, DenoiserConfig};
use structdiff_core::diffusion::{PoseNormalizer, DEFAULT_BETA_1, DEFAULT_BETA_T};
use structdiff_core::discriminators::{CollisionConfig, PointNetWidths, StructureConfig};
use structdiff_core::encoders::EncoderWidths;
use structdiff_sim::evaluation::EvalConfig;
use structdiff_sim::render::RenderConfig;
use structdiff_sim::structures::WorkspaceConfig;

use crate::error::{PlannerError, PlannerResult};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScheduleConfig {
    pub beta_1: f64,
    pub beta_t: f64,
}

impl Default for ScheduleConfig {
    fn default() -> Self {
        ScheduleConfig {
            beta_1: DEFAULT_BETA_1,
            beta_t: DEFAULT_BETA_T,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DatasetConfig {
    pub per_class: usize,
    pub variant_states: usize,
    pub max_distractors: usize,
    /// Labeled collision configurations generated alongside the scenes.
    pub collision_pairs: usize,
}

impl Default for DatasetConfig {
    fn default() -> Self {
        DatasetConfig {
            per_class: 1000,
            variant_states: 2,
            max_distractors: 2,
            collision_pairs: 100_000,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrainingConfig {
    pub batch_size: usize,
    pub learning_rate: f64,
    pub epochs_diffusion: usize,
    pub epochs_cvae: usize,
    pub epochs_autoregressive: usize,
    pub epochs_collision: usize,
    pub epochs_structure: usize,
    pub seed: u64,
}

impl Default for TrainingConfig {
    fn default() -> Self {
        TrainingConfig {
            batch_size: 128,
            learning_rate: 1e-3,
            epochs_diffusion: 120,
            epochs_cvae: 60,
            epochs_autoregressive: 60,
            epochs_collision: 15,
            epochs_structure: 15,
            seed: 7,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CvaeConfig {
    pub latent_dim: usize,
    pub encoder_layers: usize,
    /// Final KL weight after the warmup.
    pub beta_target: f64,
    /// Epochs over which the KL weight anneals linearly from zero.
    pub beta_warmup_epochs: usize,
}

impl Default for CvaeConfig {
    fn default() -> Self {
        CvaeConfig {
            latent_dim: 16,
            encoder_layers: 1,
            beta_target: 2e-3,
            beta_warmup_epochs: 20,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CemConfig {
    pub population: usize,
    pub elite_fraction: f64,
    pub iterations: usize,
    /// Initial standard deviation per normalized coordinate when jittering a
    /// deterministic initialization.
    pub initial_std: f64,
    /// Lower bound on the refit standard deviation.
    pub std_floor: f64,
}

impl Default for CemConfig {
    fn default() -> Self {
        CemConfig {
            population: 64,
            elite_fraction: 0.1,
            iterations: 20,
            initial_std: 0.1,
            std_floor: 0.01,
        }
    }
}

impl CemConfig {
    pub fn validate(&self) -> PlannerResult<()> {
        if !(self.elite_fraction > 0.0 && self.elite_fraction < 1.0) {
            return Err(PlannerError::Config(format!(
                "elite fraction must be in (0,1), got {}",
                self.elite_fraction
            )));
        }
        if self.population < 8 {
            return Err(PlannerError::Config(format!(
                "population must be >= 8, got {}",
                self.population
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PlanningConfig {
    /// Samples drawn per scene (the planner batch B).
    pub batch: usize,
}

impl Default for PlanningConfig {
    fn default() -> Self {
        PlanningConfig { batch: 64 }
    }
}

/// Everything a run needs, serialized as one TOML document.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
pub struct RunConfig {
    #[serde(default)]
    pub workspace: WorkspaceConfig,
    #[serde(default)]
    pub render: RenderConfig,
    #[serde(default)]
    pub dataset: DatasetConfig,
    #[serde(default)]
    pub model: DenoiserConfig,
    #[serde(default)]
    pub schedule: ScheduleConfig,
    #[serde(default)]
    pub collision_model: CollisionConfig,
    #[serde(default)]
    pub structure_model: StructureMeta,
    #[serde(default)]
    pub cvae: CvaeConfig,
    #[serde(default)]
    pub training: TrainingConfig,
    #[serde(default)]
    pub evaluation: EvalConfig,
    #[serde(default)]
    pub planning: PlanningConfig,
    #[serde(default)]
    pub cem: CemConfig,
}

/// Structure-discriminator sizes without the vocabulary handle.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StructureMeta {
    pub scene_points: usize,
    pub word_dim: usize,
    pub net: PointNetWidths,
}

impl Default for StructureMeta {
    fn default() -> Self {
        let d = StructureConfig::default();
        StructureMeta {
            scene_points: d.scene_points,
            word_dim: d.word_dim,
            net: d.net,
        }
    }
}

impl RunConfig {
    pub fn structure_config(&self) -> StructureConfig {
        StructureConfig {
            scene_points: self.structure_model.scene_points,
            one_hot_width: self.model.backbone.max_objects,
            word_dim: self.structure_model.word_dim,
            net: self.structure_model.net,
        }
    }

    /// Normalization frame for diffusion pose coordinates: workspace origin
    /// at table height, half-extent 0.5 m.
    pub fn normalizer(&self) -> PoseNormalizer {
        PoseNormalizer::new(self.workspace.table_height, 0.5)
    }

    pub fn load(path: &Path) -> PlannerResult<Self> {
        let text = std::fs::read_to_string(path)?;
        Ok(toml::from_str(&text)?)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string_pretty(self).expect("config serializes")
    }

    pub fn save(&self, path: &Path) -> PlannerResult<()> {
        std::fs::write(path, self.to_toml())?;
        Ok(())
    }

    /// Reduced sizes for commodity-hardware verification runs: a smaller
    /// backbone, fewer points per cloud, a 100-step schedule, and a smaller
    /// dataset, chosen so the full train-and-evaluate pipeline finishes on a
    /// two-core machine.
    pub fn desk() -> Self {
        RunConfig {
            dataset: DatasetConfig {
                per_class: 1100,
                variant_states: 1,
                max_distractors: 2,
                collision_pairs: 22_000,
            },
            render: RenderConfig {
                dense_samples: 700,
                points: 32,
                ..RenderConfig::default()
            },
            model: DenoiserConfig {
                backbone: BackboneConfig {
                    layers: 2,
                    heads: 4,
                    d_model: 64,
                    feed_forward: 128,
                    max_words: 8,
                    max_objects: 7,
                },
                encoders: EncoderWidths {
                    points: 32,
                    point_hidden: 32,
                    point_dim: 48,
                    point_heads: 4,
                    shape_dim: 48,
                    centroid_hidden: 16,
                    centroid_dim: 16,
                    pose_hidden: 48,
                    pose_dim: 48,
                    word_dim: 32,
                    time_dim: 16,
                    pos_dim: 8,
                    type_dim: 8,
                },
                timesteps: 100,
            },
            schedule: ScheduleConfig {
                beta_1: 1e-4,
                beta_t: 0.095,
            },
            collision_model: CollisionConfig {
                points_per_object: 32,
                net: PointNetWidths {
                    point_hidden: 32,
                    point_dim: 48,
                    point_heads: 4,
                    head_hidden: 32,
                },
            },
            structure_model: StructureMeta {
                scene_points: 96,
                word_dim: 16,
                net: PointNetWidths {
                    point_hidden: 32,
                    point_dim: 48,
                    point_heads: 4,
                    head_hidden: 32,
                },
            },
            training: TrainingConfig {
                batch_size: 128,
                learning_rate: 1e-3,
                epochs_diffusion: 90,
                epochs_cvae: 50,
                epochs_autoregressive: 50,
                epochs_collision: 12,
                epochs_structure: 12,
                seed: 7,
            },
            ..RunConfig::default()
        }
    }
}
