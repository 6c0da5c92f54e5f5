//! Scene-level discriminators over imagined goal scenes: a pairwise
//! collision classifier and a language-conditioned structure classifier,
//! plus the sample ranking that combines them.
//!
//! Imagined scenes are the observed object clouds rigidly transformed to
//! candidate goal poses, with a one-hot object-id channel appended to every
//! point. The structure path additionally normalizes the combined cloud
//! (centered at its centroid, scaled to unit half-extent) and conditions only
//! on the local-constraint tokens.

use std::cell::RefCell;
use std::collections::HashMap;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::autodiff::{
    init_mlp, mlp, Act, Gradients, Graph, GraphInputs, NodeId, ParamStore, Tensor,
};
use crate::diffusion::StructureSample;
use crate::encoders::farthest_point_indices;
use crate::error::{CoreError, CoreResult};
use crate::geometry::{initial_pose_from_cloud, transform_cloud, PointCloud, SegmentedScene};
use crate::vocab::{LanguageGoal, VocabSpec};

/// Discriminator outputs for one sample; all probabilities in `[0, 1]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DiscriminatorScore {
    /// Probability that any object pair collides (max over pairs).
    pub collision: f64,
    /// Probability that the scene satisfies the local structure constraints.
    pub structure: f64,
    /// `structure * (1 - collision)`.
    pub combined: f64,
}

/// Candidate goal scene: per-object transformed clouds and their combination
/// with one-hot id features.
#[derive(Debug, Clone)]
pub struct ImaginedScene {
    pub per_object: Vec<PointCloud>,
    pub combined: PointCloud,
    pub one_hot_width: usize,
}

/// Transforms every object cloud to its sampled goal pose and tags points
/// with one-hot object ids. Fails with `DegenerateBasis` if any pose vector
/// has no rotation.
pub fn imagine_scene(
    scene: &SegmentedScene,
    sample: &StructureSample,
    one_hot_width: usize,
) -> CoreResult<ImaginedScene> {
    let n = scene.objects.len();
    assert_eq!(sample.poses.len(), n, "one pose per object");
    assert!(n <= one_hot_width, "one-hot width too small");
    let mut per_object = Vec::with_capacity(n);
    let mut combined_points = Vec::new();
    let mut combined_features = Vec::new();
    for (j, (_, cloud)) in scene.objects.iter().enumerate() {
        let goal = sample.poses[j].to_pose()?;
        let initial = initial_pose_from_cloud(cloud)?;
        let mut moved = transform_cloud(&goal, &initial, cloud);
        let mut one_hot = vec![0.0; one_hot_width];
        one_hot[j] = 1.0;
        moved.features = Some(vec![one_hot.clone(); moved.len()]);
        combined_points.extend(moved.points.iter().copied());
        combined_features.extend(std::iter::repeat(one_hot).take(moved.len()));
        per_object.push(moved);
    }
    Ok(ImaginedScene {
        per_object,
        combined: PointCloud {
            points: combined_points,
            features: Some(combined_features),
        },
        one_hot_width,
    })
}

/// Centers a cloud at its centroid and scales to unit half-extent (features
/// untouched). Used by the structure-discriminator path.
pub fn normalize_scene(cloud: &PointCloud) -> CoreResult<PointCloud> {
    let c = cloud.centroid()?;
    let mut half_extent = 0.0f64;
    for p in &cloud.points {
        for k in 0..3 {
            half_extent = half_extent.max((p[k] - c[k]).abs());
        }
    }
    if half_extent < 1e-12 {
        half_extent = 1.0;
    }
    Ok(PointCloud {
        points: cloud
            .points
            .iter()
            .map(|p| {
                [
                    (p[0] - c.x) / half_extent,
                    (p[1] - c.y) / half_extent,
                    (p[2] - c.z) / half_extent,
                ]
            })
            .collect(),
        features: cloud.features.clone(),
    })
}

/// FPS-downsamples a featured cloud to exactly `p` points, carrying the
/// per-point features along unchanged.
pub fn downsample_with_features(cloud: &PointCloud, p: usize) -> PointCloud {
    let idx = farthest_point_indices(&cloud.points, p);
    PointCloud {
        points: idx.iter().map(|&i| cloud.points[i]).collect(),
        features: cloud
            .features
            .as_ref()
            .map(|f| idx.iter().map(|&i| f[i].clone()).collect()),
    }
}

// ---------------------------------------------------------------------------
// point-set classifier backbone shared by both discriminators

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct PointNetWidths {
    pub point_hidden: usize,
    pub point_dim: usize,
    pub point_heads: usize,
    pub head_hidden: usize,
}

impl Default for PointNetWidths {
    fn default() -> Self {
        PointNetWidths {
            point_hidden: 64,
            point_dim: 128,
            point_heads: 4,
            head_hidden: 64,
        }
    }
}

fn init_point_classifier<R: rand::Rng>(
    store: &mut ParamStore,
    prefix: &str,
    in_dim: usize,
    w: &PointNetWidths,
    rng: &mut R,
) {
    init_mlp(
        store,
        &format!("{prefix}.pt"),
        &[in_dim, w.point_hidden, w.point_dim],
        rng,
    );
    crate::autodiff::init_layer_norm(store, &format!("{prefix}.attn_ln"), w.point_dim);
    crate::autodiff::init_attention(store, &format!("{prefix}.attn"), w.point_dim, rng);
}

/// Featured points `[B, P, in_dim]` -> pooled scene code `[B, point_dim]`.
fn point_classifier(
    g: &mut Graph,
    input: NodeId,
    prefix: &str,
    in_dim: usize,
    w: &PointNetWidths,
    batch: usize,
    points: usize,
) -> NodeId {
    let flat = g.reshape(input, &[batch * points, in_dim]);
    let feat = mlp(g, flat, &format!("{prefix}.pt"), 2, Act::Relu);
    let feat = g.reshape(feat, &[batch, points, w.point_dim]);
    let dims = crate::autodiff::SeqDims {
        batch,
        seq: points,
        d_model: w.point_dim,
        heads: w.point_heads,
        ff: 0,
    };
    let normed = crate::autodiff::layer_norm(g, feat, &format!("{prefix}.attn_ln"));
    let attn = crate::autodiff::attention(g, normed, None, &format!("{prefix}.attn"), dims);
    let feat = g.add(feat, attn);
    g.reduce_max(feat, 1)
}

// ---------------------------------------------------------------------------
// pairwise collision discriminator

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct CollisionConfig {
    /// Points kept per object before forming the pair union.
    pub points_per_object: usize,
    pub net: PointNetWidths,
}

impl Default for CollisionConfig {
    fn default() -> Self {
        CollisionConfig {
            points_per_object: 128,
            net: PointNetWidths::default(),
        }
    }
}

/// Binary classifier over the union of two object clouds with a two-channel
/// one-hot id; trained on analytically labeled pairs.
pub struct CollisionModel {
    pub cfg: CollisionConfig,
    pub store: ParamStore,
    graphs: RefCell<HashMap<(usize, bool), Graph>>,
}

impl Clone for CollisionModel {
    fn clone(&self) -> Self {
        CollisionModel {
            cfg: self.cfg,
            store: self.store.clone(),
            graphs: RefCell::new(HashMap::new()),
        }
    }
}

impl CollisionModel {
    pub fn new(cfg: CollisionConfig, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut store = ParamStore::new();
        init_point_classifier(&mut store, "col", 5, &cfg.net, &mut rng);
        init_mlp(
            &mut store,
            "col.head",
            &[cfg.net.point_dim, cfg.net.head_hidden, 1],
            &mut rng,
        );
        CollisionModel {
            cfg,
            store,
            graphs: RefCell::new(HashMap::new()),
        }
    }

    pub fn from_parts(cfg: CollisionConfig, store: ParamStore) -> Self {
        CollisionModel {
            cfg,
            store,
            graphs: RefCell::new(HashMap::new()),
        }
    }

    fn build_graph(&self, batch: usize, with_loss: bool) -> Graph {
        let p2 = self.cfg.points_per_object * 2;
        let mut g = Graph::new();
        let input = g.input("pairs"); // [B, 2P, 5]
        let code = point_classifier(&mut g, input, "col", 5, &self.cfg.net, batch, p2);
        let logit = mlp(&mut g, code, "col.head", 2, Act::Relu);
        let prob = g.sigmoid(logit);
        g.mark_output("prob", prob);
        if with_loss {
            let target = g.input("target");
            let mask = g.input("mask");
            let loss = g.mse_masked(prob, target, mask);
            g.mark_output("loss", loss);
        }
        g
    }

    /// Packs cloud pairs into the `[B, 2P, 5]` union tensor: FPS per object,
    /// centered at the union centroid (collision is translation invariant),
    /// channels 3..5 one-hot for membership.
    pub fn pack_pairs(&self, pairs: &[(&PointCloud, &PointCloud)]) -> Tensor {
        let p = self.cfg.points_per_object;
        let mut out = Tensor::zeros(&[pairs.len(), 2 * p, 5]);
        for (bi, (a, b)) in pairs.iter().enumerate() {
            let ia = farthest_point_indices(&a.points, p);
            let ib = farthest_point_indices(&b.points, p);
            let mut mean = [0.0f64; 3];
            for &i in &ia {
                for k in 0..3 {
                    mean[k] += a.points[i][k];
                }
            }
            for &i in &ib {
                for k in 0..3 {
                    mean[k] += b.points[i][k];
                }
            }
            for m in &mut mean {
                *m /= (2 * p) as f64;
            }
            let base = bi * 2 * p * 5;
            for (slot, &i) in ia.iter().enumerate() {
                let o = base + slot * 5;
                for k in 0..3 {
                    out.data[o + k] = a.points[i][k] - mean[k];
                }
                out.data[o + 3] = 1.0;
            }
            for (slot, &i) in ib.iter().enumerate() {
                let o = base + (p + slot) * 5;
                for k in 0..3 {
                    out.data[o + k] = b.points[i][k] - mean[k];
                }
                out.data[o + 4] = 1.0;
            }
        }
        out
    }

    /// Collision probability for each pair.
    pub fn score_pairs(&self, pairs: &[(&PointCloud, &PointCloud)]) -> CoreResult<Vec<f64>> {
        if pairs.is_empty() {
            return Ok(Vec::new());
        }
        let inputs = GraphInputs::new().tensor("pairs", self.pack_pairs(pairs));
        let mut graphs = self.graphs.borrow_mut();
        let g = graphs
            .entry((pairs.len(), false))
            .or_insert_with(|| self.build_graph(pairs.len(), false));
        g.forward(&self.store, &inputs)?;
        Ok(g.output("prob").unwrap().data.clone())
    }

    /// Squared-error loss against 0/1 labels plus parameter gradients.
    pub fn loss_and_grads(
        &mut self,
        packed: &Tensor,
        labels: &[f64],
    ) -> CoreResult<(f64, Gradients)> {
        let b = packed.shape[0];
        assert_eq!(labels.len(), b);
        let inputs = GraphInputs::new()
            .tensor("pairs", packed.clone())
            .tensor("target", Tensor::new(vec![b, 1], labels.to_vec()))
            .tensor("mask", Tensor::filled(&[b, 1], 1.0));
        let mut graphs = self.graphs.borrow_mut();
        let g = graphs
            .entry((b, true))
            .or_insert_with(|| self.build_graph(b, true));
        g.forward(&self.store, &inputs)?;
        let loss_node = g.output_node("loss").unwrap();
        let loss = g.value(loss_node).scalar_value();
        let grads = g.backward(loss_node)?;
        Ok((loss, grads))
    }

    /// Scene-level collision score: max over all object pairs.
    pub fn scene_score(&self, imagined: &ImaginedScene) -> CoreResult<f64> {
        let n = imagined.per_object.len();
        let mut pairs = Vec::new();
        for i in 0..n {
            for j in (i + 1)..n {
                pairs.push((&imagined.per_object[i], &imagined.per_object[j]));
            }
        }
        if pairs.is_empty() {
            return Ok(0.0);
        }
        let scores = self.score_pairs(&pairs)?;
        Ok(scores.into_iter().fold(0.0, f64::max))
    }
}

// ---------------------------------------------------------------------------
// language-conditioned structure discriminator

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct StructureConfig {
    /// Points kept in the normalized combined scene cloud.
    pub scene_points: usize,
    /// One-hot id width; must cover the maximum object count.
    pub one_hot_width: usize,
    pub word_dim: usize,
    pub net: PointNetWidths,
}

impl Default for StructureConfig {
    fn default() -> Self {
        StructureConfig {
            scene_points: 256,
            one_hot_width: 7,
            word_dim: 32,
            net: PointNetWidths::default(),
        }
    }
}

/// Classifies whether a normalized imagined scene satisfies the local
/// (shape/size) constraints of the goal.
pub struct StructureModel {
    pub cfg: StructureConfig,
    pub vocab: VocabSpec,
    pub store: ParamStore,
    graphs: RefCell<HashMap<(usize, bool), Graph>>,
}

impl Clone for StructureModel {
    fn clone(&self) -> Self {
        StructureModel {
            cfg: self.cfg,
            vocab: self.vocab.clone(),
            store: self.store.clone(),
            graphs: RefCell::new(HashMap::new()),
        }
    }
}

impl StructureModel {
    pub fn new(cfg: StructureConfig, vocab: VocabSpec, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut store = ParamStore::new();
        let in_dim = 3 + cfg.one_hot_width;
        init_point_classifier(&mut store, "st", in_dim, &cfg.net, &mut rng);
        crate::autodiff::init_embedding(&mut store, "st.words", vocab.len(), cfg.word_dim, &mut rng);
        // two local tokens (shape, size) concatenated with the scene code
        init_mlp(
            &mut store,
            "st.head",
            &[
                cfg.net.point_dim + 2 * cfg.word_dim,
                cfg.net.head_hidden,
                1,
            ],
            &mut rng,
        );
        StructureModel {
            cfg,
            vocab,
            store,
            graphs: RefCell::new(HashMap::new()),
        }
    }

    pub fn from_parts(cfg: StructureConfig, vocab: VocabSpec, store: ParamStore) -> Self {
        StructureModel {
            cfg,
            vocab,
            store,
            graphs: RefCell::new(HashMap::new()),
        }
    }

    fn build_graph(&self, batch: usize, with_loss: bool) -> Graph {
        let in_dim = 3 + self.cfg.one_hot_width;
        let mut g = Graph::new();
        let input = g.input("scene"); // [B, P, 3+W]
        let code = point_classifier(
            &mut g,
            input,
            "st",
            in_dim,
            &self.cfg.net,
            batch,
            self.cfg.scene_points,
        );
        let table = g.param("st.words");
        let words = g.embedding(table, "word_ids"); // [B*2, word_dim]
        let words = g.reshape(words, &[batch, 2 * self.cfg.word_dim]);
        let cat = g.concat(vec![code, words]);
        let logit = mlp(&mut g, cat, "st.head", 2, Act::Relu);
        let prob = g.sigmoid(logit);
        g.mark_output("prob", prob);
        if with_loss {
            let target = g.input("target");
            let mask = g.input("mask");
            let loss = g.mse_masked(prob, target, mask);
            g.mark_output("loss", loss);
        }
        g
    }

    /// Normalizes, downsamples, and packs one imagined scene row.
    pub fn pack_scene(&self, imagined: &ImaginedScene) -> CoreResult<Vec<f64>> {
        let w = self.cfg.one_hot_width;
        assert_eq!(imagined.one_hot_width, w, "one-hot width mismatch");
        let normalized = normalize_scene(&imagined.combined)?;
        let reduced = downsample_with_features(&normalized, self.cfg.scene_points);
        let features = reduced.features.as_ref().expect("one-hot features");
        let mut row = Vec::with_capacity(self.cfg.scene_points * (3 + w));
        for (p, f) in reduced.points.iter().zip(features) {
            row.extend_from_slice(p);
            row.extend_from_slice(f);
        }
        Ok(row)
    }

    /// Local-token ids (shape, size) for conditioning; errors if the goal
    /// lacks either or carries unknown tokens.
    pub fn local_ids(&self, goal: &LanguageGoal) -> CoreResult<[usize; 2]> {
        let local = goal.local_only();
        let shape = local
            .shape()
            .ok_or_else(|| CoreError::UnknownToken("goal lacks a shape token".into()))?;
        let size = local
            .size()
            .ok_or_else(|| CoreError::UnknownToken("goal lacks a size token".into()))?;
        Ok([
            self.vocab.id(&crate::vocab::GoalToken::Shape(shape))?,
            self.vocab.id(&crate::vocab::GoalToken::Size(size))?,
        ])
    }

    /// Structure probability per (scene, goal) row.
    pub fn score_batch(
        &self,
        rows: &[Vec<f64>],
        goals: &[&LanguageGoal],
    ) -> CoreResult<Vec<f64>> {
        if rows.is_empty() {
            return Ok(Vec::new());
        }
        let b = rows.len();
        assert_eq!(goals.len(), b);
        let width = self.cfg.scene_points * (3 + self.cfg.one_hot_width);
        let mut data = Vec::with_capacity(b * width);
        for r in rows {
            assert_eq!(r.len(), width);
            data.extend_from_slice(r);
        }
        let mut ids = Vec::with_capacity(b * 2);
        for goal in goals {
            ids.extend_from_slice(&self.local_ids(goal)?);
        }
        let mut inputs = GraphInputs::new().tensor(
            "scene",
            Tensor::new(
                vec![b, self.cfg.scene_points, 3 + self.cfg.one_hot_width],
                data,
            ),
        );
        inputs.set_ids("word_ids", ids);
        let mut graphs = self.graphs.borrow_mut();
        let g = graphs
            .entry((b, false))
            .or_insert_with(|| self.build_graph(b, false));
        g.forward(&self.store, &inputs)?;
        Ok(g.output("prob").unwrap().data.clone())
    }

    pub fn score(&self, imagined: &ImaginedScene, goal: &LanguageGoal) -> CoreResult<f64> {
        let row = self.pack_scene(imagined)?;
        Ok(self.score_batch(&[row], &[goal])?[0])
    }

    /// Squared-error loss on packed rows against 0/1 labels.
    pub fn loss_and_grads(
        &mut self,
        rows: &[Vec<f64>],
        goals: &[&LanguageGoal],
        labels: &[f64],
    ) -> CoreResult<(f64, Gradients)> {
        let b = rows.len();
        assert_eq!(labels.len(), b);
        let width = self.cfg.scene_points * (3 + self.cfg.one_hot_width);
        let mut data = Vec::with_capacity(b * width);
        for r in rows {
            data.extend_from_slice(r);
        }
        let mut ids = Vec::with_capacity(b * 2);
        for goal in goals {
            ids.extend_from_slice(&self.local_ids(goal)?);
        }
        let mut inputs = GraphInputs::new()
            .tensor(
                "scene",
                Tensor::new(
                    vec![b, self.cfg.scene_points, 3 + self.cfg.one_hot_width],
                    data,
                ),
            )
            .tensor("target", Tensor::new(vec![b, 1], labels.to_vec()))
            .tensor("mask", Tensor::filled(&[b, 1], 1.0));
        inputs.set_ids("word_ids", ids);
        let mut graphs = self.graphs.borrow_mut();
        let g = graphs
            .entry((b, true))
            .or_insert_with(|| self.build_graph(b, true));
        g.forward(&self.store, &inputs)?;
        let loss_node = g.output_node("loss").unwrap();
        let loss = g.value(loss_node).scalar_value();
        let grads = g.backward(loss_node)?;
        Ok((loss, grads))
    }
}

// ---------------------------------------------------------------------------
// ranking

/// A sample with its discriminator scores, ordered by [`rank_samples`].
#[derive(Debug, Clone)]
pub struct RankedSample {
    /// Index of the sample in the input order (stable tie-break key).
    pub index: usize,
    pub sample: StructureSample,
    pub score: DiscriminatorScore,
}

/// Scores every sample with both discriminators and sorts by combined score,
/// descending, ties broken by input index. The output is a permutation of the
/// inputs.
pub fn rank_samples(
    samples: &[StructureSample],
    scene: &SegmentedScene,
    goal: &LanguageGoal,
    collision: &CollisionModel,
    structure: &StructureModel,
) -> CoreResult<Vec<RankedSample>> {
    if samples.is_empty() {
        return Err(CoreError::AllSamplesDegenerate(0));
    }
    let n = scene.objects.len();
    let mut imagined = Vec::with_capacity(samples.len());
    for s in samples {
        imagined.push(imagine_scene(scene, s, structure.cfg.one_hot_width)?);
    }

    // batch all pairwise collision queries across samples
    let pair_count = n * (n.saturating_sub(1)) / 2;
    let mut collision_scores = vec![0.0; samples.len()];
    if pair_count > 0 {
        let mut pairs = Vec::with_capacity(samples.len() * pair_count);
        for im in &imagined {
            for i in 0..n {
                for j in (i + 1)..n {
                    pairs.push((&im.per_object[i], &im.per_object[j]));
                }
            }
        }
        let flat = collision.score_pairs(&pairs)?;
        for (si, chunk) in flat.chunks(pair_count).enumerate() {
            collision_scores[si] = chunk.iter().copied().fold(0.0, f64::max);
        }
    }

    let rows: Vec<Vec<f64>> = imagined
        .iter()
        .map(|im| structure.pack_scene(im))
        .collect::<CoreResult<_>>()?;
    let goals = vec![goal; samples.len()];
    let structure_scores = structure.score_batch(&rows, &goals)?;

    let mut ranked: Vec<RankedSample> = samples
        .iter()
        .enumerate()
        .map(|(i, s)| {
            let score = DiscriminatorScore {
                collision: collision_scores[i],
                structure: structure_scores[i],
                combined: structure_scores[i] * (1.0 - collision_scores[i]),
            };
            RankedSample {
                index: i,
                sample: s.clone(),
                score,
            }
        })
        .collect();
    ranked.sort_by(|a, b| {
        b.score
            .combined
            .partial_cmp(&a.score.combined)
            .unwrap_or(std::cmp::Ordering::Equal)
            .then(a.index.cmp(&b.index))
    });
    Ok(ranked)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{Pose, PoseVector};
    use nalgebra::Vector3;

    fn tiny_collision_cfg() -> CollisionConfig {
        CollisionConfig {
            points_per_object: 16,
            net: PointNetWidths {
                point_hidden: 8,
                point_dim: 16,
                point_heads: 2,
                head_hidden: 8,
            },
        }
    }

    fn tiny_structure_cfg() -> StructureConfig {
        StructureConfig {
            scene_points: 32,
            one_hot_width: 4,
            word_dim: 8,
            net: PointNetWidths {
                point_hidden: 8,
                point_dim: 16,
                point_heads: 2,
                head_hidden: 8,
            },
        }
    }

    fn grid_cloud(center: [f64; 3], half: f64, n: usize) -> PointCloud {
        let mut pts = Vec::new();
        for i in 0..n {
            for j in 0..n {
                for k in 0..n {
                    pts.push([
                        center[0] + half * (2.0 * i as f64 / (n - 1) as f64 - 1.0),
                        center[1] + half * (2.0 * j as f64 / (n - 1) as f64 - 1.0),
                        center[2] + half * (2.0 * k as f64 / (n - 1) as f64 - 1.0),
                    ]);
                }
            }
        }
        PointCloud::new(pts)
    }

    fn two_object_scene() -> SegmentedScene {
        SegmentedScene {
            objects: vec![
                (0, grid_cloud([0.0, 0.0, 0.05], 0.03, 3)),
                (1, grid_cloud([0.2, 0.0, 0.05], 0.03, 3)),
            ],
            table_height: 0.0,
            camera_pose: Pose::identity(),
        }
    }

    fn identity_sample(scene: &SegmentedScene) -> StructureSample {
        StructureSample {
            poses: scene
                .objects
                .iter()
                .map(|(_, c)| {
                    PoseVector::from_pose(&initial_pose_from_cloud(c).unwrap())
                })
                .collect(),
        }
    }

    #[test]
    fn imagined_identity_sample_reproduces_scene_geometry() {
        let scene = two_object_scene();
        let sample = identity_sample(&scene);
        let im = imagine_scene(&scene, &sample, 4).unwrap();
        assert_eq!(im.combined.len(), 54);
        for (j, (_, cloud)) in scene.objects.iter().enumerate() {
            for (a, b) in im.per_object[j].points.iter().zip(&cloud.points) {
                for k in 0..3 {
                    assert!((a[k] - b[k]).abs() < 1e-12);
                }
            }
        }
        // one-hot integrity: exactly one 1 per point
        for f in im.combined.features.as_ref().unwrap() {
            assert_eq!(f.iter().filter(|&&v| v == 1.0).count(), 1);
            assert_eq!(f.iter().filter(|&&v| v == 0.0).count(), 3);
        }
    }

    #[test]
    fn normalized_scene_is_centered() {
        let scene = two_object_scene();
        let sample = identity_sample(&scene);
        let im = imagine_scene(&scene, &sample, 4).unwrap();
        let norm = normalize_scene(&im.combined).unwrap();
        let c = norm.centroid().unwrap();
        assert!(c.norm() < 1e-9);
        let max = norm
            .points
            .iter()
            .flat_map(|p| p.iter())
            .fold(0.0f64, |m, v| m.max(v.abs()));
        assert!((max - 1.0).abs() < 1e-9);
    }

    #[test]
    fn degenerate_pose_vector_propagates() {
        let scene = two_object_scene();
        let mut sample = identity_sample(&scene);
        sample.poses[1] = PoseVector {
            t: Vector3::zeros(),
            a: Vector3::zeros(),
            b: Vector3::new(0.0, 1.0, 0.0),
        };
        assert!(matches!(
            imagine_scene(&scene, &sample, 4),
            Err(CoreError::DegenerateBasis(_))
        ));
    }

    #[test]
    fn downsample_preserves_one_hot_rows() {
        let scene = two_object_scene();
        let sample = identity_sample(&scene);
        let im = imagine_scene(&scene, &sample, 4).unwrap();
        let reduced = downsample_with_features(&im.combined, 20);
        assert_eq!(reduced.len(), 20);
        for f in reduced.features.as_ref().unwrap() {
            assert_eq!(f.iter().filter(|&&v| v == 1.0).count(), 1);
        }
    }

    #[test]
    fn scores_are_probabilities_and_ranking_is_a_permutation() {
        use crate::vocab::{GoalToken, ShapeClass, SizeClass};
        let scene = two_object_scene();
        let collision = CollisionModel::new(tiny_collision_cfg(), 3);
        let structure = StructureModel::new(tiny_structure_cfg(), VocabSpec::standard(), 4);
        let goal = LanguageGoal::new(vec![
            GoalToken::Shape(ShapeClass::Line),
            GoalToken::Size(SizeClass::Small),
            GoalToken::PosX(0),
            GoalToken::PosY(0),
            GoalToken::Rot(0),
        ]);
        let mut samples = vec![identity_sample(&scene)];
        // a second sample: objects stacked on the same spot
        let mut s2 = identity_sample(&scene);
        s2.poses[1].t = s2.poses[0].t;
        samples.push(s2);
        let ranked = rank_samples(&samples, &scene, &goal, &collision, &structure).unwrap();
        assert_eq!(ranked.len(), 2);
        let mut seen: Vec<usize> = ranked.iter().map(|r| r.index).collect();
        seen.sort_unstable();
        assert_eq!(seen, vec![0, 1]);
        for r in &ranked {
            assert!((0.0..=1.0).contains(&r.score.collision));
            assert!((0.0..=1.0).contains(&r.score.structure));
            assert!((0.0..=1.0).contains(&r.score.combined));
        }
        assert!(ranked[0].score.combined >= ranked[1].score.combined);
    }

    #[test]
    fn combined_score_is_monotone_in_collision() {
        // same structure score, higher collision must never rank higher
        let s = 0.8;
        let low = s * (1.0 - 0.1);
        let high = s * (1.0 - 0.9);
        assert!(low > high);
    }

    #[test]
    fn single_sample_is_returned_with_scores() {
        use crate::vocab::{GoalToken, ShapeClass, SizeClass};
        let scene = two_object_scene();
        let collision = CollisionModel::new(tiny_collision_cfg(), 5);
        let structure = StructureModel::new(tiny_structure_cfg(), VocabSpec::standard(), 6);
        let goal = LanguageGoal::new(vec![
            GoalToken::Shape(ShapeClass::Tower),
            GoalToken::Size(SizeClass::Small),
        ]);
        let samples = vec![identity_sample(&scene)];
        let ranked = rank_samples(&samples, &scene, &goal, &collision, &structure).unwrap();
        assert_eq!(ranked.len(), 1);
        assert_eq!(ranked[0].index, 0);
    }

    #[test]
    fn empty_sample_set_is_an_error() {
        let scene = two_object_scene();
        let collision = CollisionModel::new(tiny_collision_cfg(), 7);
        let structure = StructureModel::new(tiny_structure_cfg(), VocabSpec::standard(), 8);
        let goal = LanguageGoal::default();
        assert!(matches!(
            rank_samples(&[], &scene, &goal, &collision, &structure),
            Err(CoreError::AllSamplesDegenerate(0))
        ));
    }
}
