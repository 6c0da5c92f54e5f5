//! Scene record files, the procedural dataset generator, and the labeled
//! collision-pair stream for discriminator training.
//!
//! A dataset is a directory of one JSON document per record plus a manifest.
//! Generation parallelizes by record index with per-record derived seeds, so
//! the output is byte-identical regardless of worker count.

use std::fs;
use std::path::{Path, PathBuf};

use nalgebra::Vector3;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use structdiff_core::checkpoint::sha256_str;
use structdiff_core::geometry::{
    pose_compose, pose_inverse, PointCloud, Pose, PoseVector, SegmentedScene,
};
use structdiff_core::vocab::{LanguageGoal, ShapeClass, VocabSpec};

use crate::error::{SimError, SimResult};
use crate::primitives::{upright_collides, PrimitiveKind, PrimitiveObject};
use crate::render::{camera_pose, render_partial_cloud, RenderConfig};
use crate::structures::{
    sample_initial_poses, sample_structure_goal, StructureSpec, WorkspaceConfig,
};

pub const RECORD_VERSION: u32 = 1;
pub const GENERATOR_VERSION: &str = "scene-gen-1";

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RecordObject {
    pub id: u32,
    pub object: PrimitiveObject,
    /// True primitive pose in the initial scene.
    pub init_pose: Pose,
    /// True primitive pose in the goal structure.
    pub goal_pose: Pose,
    /// Partial cloud observed in the initial scene (world frame).
    pub cloud: Vec<[f64; 3]>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RecordDistractor {
    pub object: PrimitiveObject,
    pub pose: Pose,
}

/// Clouds re-rendered from an intermediate rearrangement state in which the
/// first `moved` objects already sit at their goal poses (the occlusion
/// augmentation source).
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CloudVariant {
    pub moved: usize,
    pub clouds: Vec<Vec<[f64; 3]>>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SceneRecord {
    pub version: u32,
    pub index: u64,
    pub seed: u64,
    pub spec: StructureSpec,
    pub table_height: f64,
    pub camera: Pose,
    pub tokens: Vec<String>,
    pub objects: Vec<RecordObject>,
    pub distractors: Vec<RecordDistractor>,
    pub variants: Vec<CloudVariant>,
}

impl SceneRecord {
    pub fn goal(&self) -> SimResult<LanguageGoal> {
        Ok(LanguageGoal::from_texts(&self.tokens)?)
    }

    /// The observation handed to models: per-object partial clouds in
    /// rearrangement order.
    pub fn segmented_scene(&self) -> SegmentedScene {
        SegmentedScene {
            objects: self
                .objects
                .iter()
                .map(|o| (o.id, PointCloud::new(o.cloud.clone())))
                .collect(),
            table_height: self.table_height,
            camera_pose: self.camera,
        }
    }

    /// Same observation but with clouds from an intermediate-state variant.
    pub fn segmented_scene_variant(&self, variant: usize) -> SegmentedScene {
        let v = &self.variants[variant];
        SegmentedScene {
            objects: self
                .objects
                .iter()
                .zip(&v.clouds)
                .map(|(o, c)| (o.id, PointCloud::new(c.clone())))
                .collect(),
            table_height: self.table_height,
            camera_pose: self.camera,
        }
    }

    /// Diffusion target for one object: the pose `M * T_pc` where `M` is the
    /// true initial-to-goal motion and `T_pc` the centroid initial pose, so
    /// that `target * T_pc^-1` carries the observed cloud to the goal.
    pub fn target_pose_vector(&self, j: usize) -> PoseVector {
        let o = &self.objects[j];
        let motion = pose_compose(&o.goal_pose, &pose_inverse(&o.init_pose));
        let cloud = PointCloud::new(o.cloud.clone());
        let centroid = cloud.centroid().expect("record clouds are non-empty");
        let target = pose_compose(&motion, &Pose::from_translation(centroid));
        PoseVector::from_pose(&target)
    }

    /// Centroid initial pose of one observed cloud.
    pub fn cloud_initial_pose(&self, j: usize) -> Pose {
        let cloud = PointCloud::new(self.objects[j].cloud.clone());
        Pose::from_translation(cloud.centroid().expect("non-empty"))
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DatasetManifest {
    pub version: u32,
    pub generator: String,
    pub seed: u64,
    pub per_class: usize,
    pub total: usize,
    pub vocab_sha256: String,
    pub workspace: WorkspaceConfig,
    pub render: RenderConfig,
    pub variant_states: usize,
    pub distractor_range: (usize, usize),
    /// Number of semantic constraints checked per structure class.
    pub constraint_counts: Vec<(String, usize)>,
    pub records: Vec<String>,
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct GenConfig {
    pub per_class: usize,
    pub seed: u64,
    pub workspace: WorkspaceConfig,
    pub render: RenderConfig,
    /// Extra intermediate-state cloud variants per record.
    pub variant_states: usize,
    pub max_distractors: usize,
}

impl Default for GenConfig {
    fn default() -> Self {
        GenConfig {
            per_class: 10,
            seed: 0,
            workspace: WorkspaceConfig::default(),
            render: RenderConfig::default(),
            variant_states: 2,
            max_distractors: 2,
        }
    }
}

fn splitmix(seed: u64, salt: u64) -> u64 {
    let mut z = seed ^ salt.wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Builds one record, retrying the whole scene on occlusion or placement
/// failures with fresh derived seeds.
pub fn generate_record(index: u64, cfg: &GenConfig) -> SimResult<SceneRecord> {
    let shape = ShapeClass::ALL[(index % 4) as usize];
    let record_seed = splitmix(cfg.seed, index + 1);
    let mut lasterr: Option<SimError> = None;
    for attempt in 0..20u64 {
        match try_generate_record(index, shape, record_seed, attempt, cfg) {
            Ok(rec) => return Ok(rec),
            Err(e) => lasterr = Some(e),
        }
    }
    Err(lasterr.unwrap_or(SimError::InfeasibleSpec {
        attempts: 20,
        reason: "record generation failed".into(),
    }))
}

fn try_generate_record(
    index: u64,
    shape: ShapeClass,
    record_seed: u64,
    attempt: u64,
    cfg: &GenConfig,
) -> SimResult<SceneRecord> {
    let mut rng = ChaCha8Rng::seed_from_u64(splitmix(record_seed, attempt + 1));
    let ws = &cfg.workspace;
    let (spec, objects, goal_poses, goal) = sample_structure_goal(&mut rng, shape, ws, 50)?;

    let n_distractors = rng.gen_range(0..=cfg.max_distractors);
    let distractors: Vec<PrimitiveObject> = (0..n_distractors)
        .filter_map(|_| {
            crate::structures::sample_objects(&mut rng, ShapeClass::Line, 0.25, 2)
                .map(|v| v[0])
        })
        .collect();
    let (init_poses, dis_poses) =
        sample_initial_poses(&mut rng, &objects, &distractors, ws, 50)?;

    let azimuth = rng.gen_range(0.0..std::f64::consts::TAU);
    let camera = camera_pose(
        azimuth,
        cfg.render.camera_elevation,
        cfg.render.camera_range,
        Vector3::new(0.0, 0.0, ws.table_height),
    );
    let cam_pos = camera.translation;

    // initial-state clouds
    let world: Vec<(PrimitiveObject, Pose)> = objects
        .iter()
        .copied()
        .zip(init_poses.iter().copied())
        .chain(distractors.iter().copied().zip(dis_poses.iter().copied()))
        .collect();
    let mut record_objects = Vec::with_capacity(objects.len());
    for (j, obj) in objects.iter().enumerate() {
        let cloud = render_partial_cloud(j, &world, &cam_pos, &cfg.render, &mut rng)?;
        record_objects.push(RecordObject {
            id: j as u32,
            object: *obj,
            init_pose: init_poses[j],
            goal_pose: goal_poses[j],
            cloud,
        });
    }

    // intermediate-state variants for occlusion augmentation
    let mut variants = Vec::new();
    if objects.len() >= 2 && cfg.variant_states > 0 {
        let mut ks: Vec<usize> = (1..=objects.len()).collect();
        // deterministic subset choice
        for i in (1..ks.len()).rev() {
            let j = rng.gen_range(0..=i);
            ks.swap(i, j);
        }
        ks.truncate(cfg.variant_states.min(ks.len()));
        ks.sort_unstable();
        for k in ks {
            let state: Vec<(PrimitiveObject, Pose)> = objects
                .iter()
                .enumerate()
                .map(|(j, o)| (*o, if j < k { goal_poses[j] } else { init_poses[j] }))
                .chain(distractors.iter().copied().zip(dis_poses.iter().copied()))
                .collect();
            let mut clouds = Vec::with_capacity(objects.len());
            let mut ok = true;
            for j in 0..objects.len() {
                match render_partial_cloud(j, &state, &cam_pos, &cfg.render, &mut rng) {
                    Ok(c) => clouds.push(c),
                    Err(SimError::FullyOccluded { .. }) => {
                        ok = false;
                        break;
                    }
                    Err(e) => return Err(e),
                }
            }
            if ok {
                variants.push(CloudVariant { moved: k, clouds });
            }
        }
    }

    Ok(SceneRecord {
        version: RECORD_VERSION,
        index,
        seed: record_seed,
        spec,
        table_height: ws.table_height,
        camera,
        tokens: goal.texts(),
        objects: record_objects,
        distractors: distractors
            .into_iter()
            .zip(dis_poses)
            .map(|(object, pose)| RecordDistractor { object, pose })
            .collect(),
        variants,
    })
}

pub fn record_file_name(index: u64) -> String {
    format!("rec_{index:06}.json")
}

/// Generates `4 * per_class` balanced records into `dir` (a `records/`
/// subdirectory plus `manifest.json`). Returns the manifest.
pub fn generate_dataset(cfg: &GenConfig, dir: &Path) -> SimResult<DatasetManifest> {
    let records_dir = dir.join("records");
    fs::create_dir_all(&records_dir)?;
    let total = cfg.per_class * ShapeClass::ALL.len();
    let indices: Vec<u64> = (0..total as u64).collect();
    let results: Vec<SimResult<String>> = indices
        .par_iter()
        .map(|&index| {
            let record = generate_record(index, cfg)?;
            let name = record_file_name(index);
            let json = serde_json::to_string(&record)?;
            fs::write(records_dir.join(&name), json)?;
            Ok(name)
        })
        .collect();
    let mut records = Vec::with_capacity(total);
    for r in results {
        records.push(r?);
    }
    let manifest = DatasetManifest {
        version: RECORD_VERSION,
        generator: GENERATOR_VERSION.to_string(),
        seed: cfg.seed,
        per_class: cfg.per_class,
        total,
        vocab_sha256: sha256_str(&VocabSpec::standard().to_manifest()),
        workspace: cfg.workspace,
        render: cfg.render,
        variant_states: cfg.variant_states,
        distractor_range: (0, cfg.max_distractors),
        constraint_counts: vec![
            ("line".into(), 5),
            ("circle".into(), 5),
            ("tower".into(), 4),
            ("dinner".into(), 6),
        ],
        records,
    };
    let json = serde_json::to_string_pretty(&manifest)?;
    fs::write(dir.join("manifest.json"), json)?;
    Ok(manifest)
}

pub fn load_manifest(dir: &Path) -> SimResult<DatasetManifest> {
    let path = dir.join("manifest.json");
    let text = fs::read_to_string(&path).map_err(|e| SimError::CorruptRecord {
        path: path.display().to_string(),
        message: e.to_string(),
    })?;
    let manifest: DatasetManifest =
        serde_json::from_str(&text).map_err(|e| SimError::CorruptRecord {
            path: path.display().to_string(),
            message: e.to_string(),
        })?;
    if manifest.version != RECORD_VERSION {
        return Err(SimError::SchemaVersionMismatch {
            found: manifest.version,
            expected: RECORD_VERSION,
        });
    }
    Ok(manifest)
}

pub fn load_record(dir: &Path, name: &str) -> SimResult<SceneRecord> {
    let path = dir.join("records").join(name);
    let text = fs::read_to_string(&path).map_err(|e| SimError::CorruptRecord {
        path: path.display().to_string(),
        message: e.to_string(),
    })?;
    let record: SceneRecord = serde_json::from_str(&text).map_err(|e| SimError::CorruptRecord {
        path: path.display().to_string(),
        message: e.to_string(),
    })?;
    if record.version != RECORD_VERSION {
        return Err(SimError::SchemaVersionMismatch {
            found: record.version,
            expected: RECORD_VERSION,
        });
    }
    Ok(record)
}

pub fn load_all_records(dir: &Path) -> SimResult<Vec<SceneRecord>> {
    let manifest = load_manifest(dir)?;
    manifest
        .records
        .par_iter()
        .map(|name| load_record(dir, name))
        .collect()
}

// ---------------------------------------------------------------------------
// collision pairs

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CollisionPair {
    pub a: PrimitiveObject,
    pub pose_a: Pose,
    pub b: PrimitiveObject,
    pub pose_b: Pose,
    pub cloud_a: Vec<[f64; 3]>,
    pub cloud_b: Vec<[f64; 3]>,
    pub label: bool,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PairManifest {
    pub version: u32,
    pub seed: u64,
    pub count: usize,
    pub positives: usize,
    pub file: String,
}

fn sample_pair_object<R: Rng>(rng: &mut R) -> PrimitiveObject {
    match rng.gen_range(0..5) {
        0 => PrimitiveObject::new(
            PrimitiveKind::Box,
            [
                rng.gen_range(0.03..0.1),
                rng.gen_range(0.03..0.1),
                rng.gen_range(0.02..0.1),
            ],
        ),
        1 => PrimitiveObject::new(
            PrimitiveKind::Cylinder,
            [rng.gen_range(0.015..0.05), rng.gen_range(0.02..0.1), 0.0],
        ),
        2 => PrimitiveObject::new(
            PrimitiveKind::Plate,
            [rng.gen_range(0.03..0.08), rng.gen_range(0.015..0.025), 0.0],
        ),
        3 => PrimitiveObject::new(
            PrimitiveKind::Bowl,
            [rng.gen_range(0.025..0.05), rng.gen_range(0.04..0.09), 0.006],
        ),
        _ => PrimitiveObject::new(
            PrimitiveKind::Utensil,
            [
                rng.gen_range(0.08..0.15),
                rng.gen_range(0.015..0.025),
                rng.gen_range(0.01..0.018),
            ],
        ),
    }
}

/// One labeled random configuration. Poses are upright (yaw-only), so the
/// closed-form overlap test provides the exact label; bowls use their convex
/// proxy. `want_positive` alternates at the call site, keeping the label
/// distribution at one half.
pub fn generate_collision_pair<R: Rng>(
    rng: &mut R,
    render: &RenderConfig,
    want_positive: bool,
) -> SimResult<CollisionPair> {
    for _ in 0..200 {
        let a = sample_pair_object(rng);
        let b = sample_pair_object(rng);
        let pose_a = Pose::from_yaw(
            rng.gen_range(0.0..std::f64::consts::TAU),
            Vector3::new(0.0, 0.0, a.height() * 0.5),
        );
        let reach = a.max_half_extent_xy() + b.max_half_extent_xy();
        let (r, far_negative) = if want_positive {
            (rng.gen_range(0.0..reach * 0.85), false)
        } else if rng.gen_bool(0.2) {
            (rng.gen_range(reach + 0.02..1.2), true)
        } else {
            (rng.gen_range(reach * 0.9..reach * 2.0), false)
        };
        let ang = rng.gen_range(0.0..std::f64::consts::TAU);
        let dz = if want_positive {
            rng.gen_range(0.0..(a.height() * 0.5).max(0.01))
        } else {
            rng.gen_range(0.0..0.05)
        };
        let pose_b = Pose::from_yaw(
            rng.gen_range(0.0..std::f64::consts::TAU),
            Vector3::new(r * ang.cos(), r * ang.sin(), b.height() * 0.5 + dz),
        );
        let label = upright_collides(&a, &pose_a, &b, &pose_b);
        if label != want_positive {
            continue;
        }
        let _ = far_negative;
        let azimuth = rng.gen_range(0.0..std::f64::consts::TAU);
        let cam = camera_pose(
            azimuth,
            render.camera_elevation,
            render.camera_range,
            Vector3::new(0.0, 0.0, 0.0),
        )
        .translation;
        let world = vec![(a, pose_a), (b, pose_b)];
        let cloud_a = match render_partial_cloud(0, &world, &cam, render, rng) {
            Ok(c) => c,
            Err(SimError::FullyOccluded { .. }) => continue,
            Err(e) => return Err(e),
        };
        let cloud_b = match render_partial_cloud(1, &world, &cam, render, rng) {
            Ok(c) => c,
            Err(SimError::FullyOccluded { .. }) => continue,
            Err(e) => return Err(e),
        };
        return Ok(CollisionPair {
            a,
            pose_a,
            b,
            pose_b,
            cloud_a,
            cloud_b,
            label,
        });
    }
    Err(SimError::InfeasibleSpec {
        attempts: 200,
        reason: "could not realize requested collision label".into(),
    })
}

/// Generates `count` labeled pairs (alternating labels) into
/// `dir/pairs.jsonl` plus `dir/pairs_manifest.json`.
pub fn generate_collision_pairs(
    count: usize,
    seed: u64,
    render: &RenderConfig,
    dir: &Path,
) -> SimResult<PairManifest> {
    fs::create_dir_all(dir)?;
    let lines: Vec<SimResult<String>> = (0..count as u64)
        .collect::<Vec<_>>()
        .par_iter()
        .map(|&i| {
            let mut rng = ChaCha8Rng::seed_from_u64(splitmix(seed, 0x70AB ^ (i + 1)));
            let pair = generate_collision_pair(&mut rng, render, i % 2 == 0)?;
            Ok(serde_json::to_string(&pair)?)
        })
        .collect();
    let mut out = String::new();
    let mut positives = 0usize;
    for l in lines {
        let l = l?;
        if l.contains("\"label\":true") {
            positives += 1;
        }
        out.push_str(&l);
        out.push('\n');
    }
    let file = "pairs.jsonl".to_string();
    fs::write(dir.join(&file), out)?;
    let manifest = PairManifest {
        version: RECORD_VERSION,
        seed,
        count,
        positives,
        file,
    };
    fs::write(
        dir.join("pairs_manifest.json"),
        serde_json::to_string_pretty(&manifest)?,
    )?;
    Ok(manifest)
}

pub fn load_collision_pairs(dir: &Path) -> SimResult<(PairManifest, Vec<CollisionPair>)> {
    let mpath = dir.join("pairs_manifest.json");
    let manifest: PairManifest = serde_json::from_str(&fs::read_to_string(&mpath)?)?;
    let text = fs::read_to_string(dir.join(&manifest.file))?;
    let pairs: Vec<CollisionPair> = text
        .lines()
        .filter(|l| !l.trim().is_empty())
        .map(serde_json::from_str)
        .collect::<Result<_, _>>()?;
    Ok((manifest, pairs))
}

/// Convenience holder for a dataset directory.
pub struct Dataset {
    pub dir: PathBuf,
    pub manifest: DatasetManifest,
}

impl Dataset {
    pub fn open(dir: &Path) -> SimResult<Self> {
        Ok(Dataset {
            dir: dir.to_path_buf(),
            manifest: load_manifest(dir)?,
        })
    }

    pub fn records(&self) -> SimResult<Vec<SceneRecord>> {
        load_all_records(&self.dir)
    }
}
