//! Modality-specific encoders: object point clouds, word tokens, candidate
//! poses, diffusion timestep, sequence position, and token type, assembled
//! into one fixed-width token sequence with an attention mask.
//!
//! Clouds are downsampled/padded to a fixed point count by deterministic
//! farthest-point sampling and mean-centered before the point-set encoder,
//! which makes the geometric half of the object code exactly translation
//! invariant. The original-cloud centroid goes through its own small MLP and
//! is concatenated back on.

use serde::{Deserialize, Serialize};

use crate::autodiff::{
    attention, init_attention, init_embedding, init_layer_norm, init_linear, init_mlp,
    layer_norm, linear, mlp, Act, Graph, GraphInputs, NodeId, ParamStore, SeqDims, Tensor,
    MASK_NEG,
};
use crate::error::{CoreError, CoreResult};
use crate::geometry::PointCloud;
use crate::vocab::{LanguageGoal, VocabSpec};

/// Widths of every encoder component. Concatenated parts are projected to the
/// backbone width by one linear layer per token kind.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct EncoderWidths {
    /// Fixed number of points per object cloud (FPS downsample / cycle pad).
    pub points: usize,
    pub point_hidden: usize,
    /// Width of the per-point features entering the point self-attention.
    pub point_dim: usize,
    pub point_heads: usize,
    /// Width of the pooled shape code.
    pub shape_dim: usize,
    pub centroid_hidden: usize,
    pub centroid_dim: usize,
    pub pose_hidden: usize,
    pub pose_dim: usize,
    pub word_dim: usize,
    pub time_dim: usize,
    pub pos_dim: usize,
    pub type_dim: usize,
}

impl Default for EncoderWidths {
    fn default() -> Self {
        EncoderWidths {
            points: 128,
            point_hidden: 64,
            point_dim: 128,
            point_heads: 4,
            shape_dim: 128,
            centroid_hidden: 32,
            centroid_dim: 32,
            pose_hidden: 64,
            pose_dim: 64,
            word_dim: 64,
            time_dim: 32,
            pos_dim: 16,
            type_dim: 8,
        }
    }
}

impl EncoderWidths {
    pub fn object_dim(&self) -> usize {
        self.shape_dim + self.centroid_dim
    }

    pub fn word_concat_dim(&self) -> usize {
        self.word_dim + self.pos_dim + self.type_dim + self.time_dim
    }

    pub fn object_concat_dim(&self) -> usize {
        self.object_dim() + self.pose_dim + self.pos_dim + self.type_dim + self.time_dim
    }
}

/// Deterministic farthest-point sampling. Starts from index 0 and breaks
/// distance ties by the lowest index; clouds shorter than `p` are padded by
/// cycling indices.
pub fn farthest_point_indices(points: &[[f64; 3]], p: usize) -> Vec<usize> {
    assert!(!points.is_empty(), "fps on empty cloud");
    let n = points.len();
    if n <= p {
        return (0..p).map(|i| i % n).collect();
    }
    let mut chosen = Vec::with_capacity(p);
    let mut best = vec![f64::INFINITY; n];
    let mut current = 0usize;
    chosen.push(current);
    for _ in 1..p {
        let cp = points[current];
        let mut next = 0usize;
        let mut next_d = f64::NEG_INFINITY;
        for (i, q) in points.iter().enumerate() {
            let d = (q[0] - cp[0]).powi(2) + (q[1] - cp[1]).powi(2) + (q[2] - cp[2]).powi(2);
            if d < best[i] {
                best[i] = d;
            }
            if best[i] > next_d {
                next_d = best[i];
                next = i;
            }
        }
        current = next;
        chosen.push(current);
    }
    chosen
}

/// A cloud reduced to exactly `P` mean-centered points plus the original
/// centroid, ready to feed the object encoder.
#[derive(Debug, Clone, PartialEq)]
pub struct PreparedCloud {
    pub centered: Vec<[f64; 3]>,
    pub centroid: [f64; 3],
}

pub fn prepare_cloud(cloud: &PointCloud, p: usize) -> CoreResult<PreparedCloud> {
    if cloud.is_empty() {
        return Err(CoreError::EmptyCloud);
    }
    let centroid = cloud.centroid()?;
    let idx = farthest_point_indices(&cloud.points, p);
    let selected: Vec<[f64; 3]> = idx.iter().map(|&i| cloud.points[i]).collect();
    let mut mean = [0.0f64; 3];
    for q in &selected {
        for k in 0..3 {
            mean[k] += q[k];
        }
    }
    for m in &mut mean {
        *m /= selected.len() as f64;
    }
    let centered = selected
        .iter()
        .map(|q| [q[0] - mean[0], q[1] - mean[1], q[2] - mean[2]])
        .collect();
    Ok(PreparedCloud {
        centered,
        centroid: [centroid.x, centroid.y, centroid.z],
    })
}

// ---------------------------------------------------------------------------
// parameter registration

pub fn init_point_encoder<R: rand::Rng>(
    store: &mut ParamStore,
    prefix: &str,
    w: &EncoderWidths,
    rng: &mut R,
) {
    init_mlp(
        store,
        &format!("{prefix}.pt"),
        &[3, w.point_hidden, w.point_dim],
        rng,
    );
    init_layer_norm(store, &format!("{prefix}.attn_ln"), w.point_dim);
    init_attention(store, &format!("{prefix}.attn"), w.point_dim, rng);
    init_linear(store, &format!("{prefix}.pool"), w.point_dim, w.shape_dim, rng);
}

/// Registers every encoder parameter: the object point encoder, centroid and
/// pose MLPs, the four embedding tables, and the two token projections.
pub fn init_encoders<R: rand::Rng>(
    store: &mut ParamStore,
    w: &EncoderWidths,
    d_model: usize,
    vocab_size: usize,
    timesteps: usize,
    max_seq: usize,
    rng: &mut R,
) {
    init_point_encoder(store, "obj", w, rng);
    init_mlp(store, "cent", &[3, w.centroid_hidden, w.centroid_dim], rng);
    init_mlp(store, "pose", &[9, w.pose_hidden, w.pose_dim], rng);
    init_embedding(store, "emb.word", vocab_size, w.word_dim, rng);
    init_embedding(store, "emb.time", timesteps + 1, w.time_dim, rng);
    init_embedding(store, "emb.pos", max_seq, w.pos_dim, rng);
    init_embedding(store, "emb.type", 2, w.type_dim, rng);
    init_linear(store, "proj.word", w.word_concat_dim(), d_model, rng);
    init_linear(store, "proj.obj", w.object_concat_dim(), d_model, rng);
}

// ---------------------------------------------------------------------------
// graph wiring

/// Shape code for `groups` clouds: per-point MLP, one self-attention layer
/// over the points, max-pool, projection. Input node must be `[G, P, 3]`.
pub fn point_encoder(
    g: &mut Graph,
    clouds: NodeId,
    prefix: &str,
    w: &EncoderWidths,
    groups: usize,
) -> NodeId {
    let flat = g.reshape(clouds, &[groups * w.points, 3]);
    let feat = mlp(g, flat, &format!("{prefix}.pt"), 2, Act::Relu);
    let feat = g.reshape(feat, &[groups, w.points, w.point_dim]);
    let dims = SeqDims {
        batch: groups,
        seq: w.points,
        d_model: w.point_dim,
        heads: w.point_heads,
        ff: 0,
    };
    let normed = layer_norm(g, feat, &format!("{prefix}.attn_ln"));
    let attn = attention(g, normed, None, &format!("{prefix}.attn"), dims);
    let feat = g.add(feat, attn);
    let pooled = g.reduce_max(feat, 1);
    linear(g, pooled, &format!("{prefix}.pool"))
}

/// Concatenates two token stacks `[B, M, d]` and `[B, N, d]` along the
/// sequence axis.
fn concat_seq(g: &mut Graph, a: NodeId, b: NodeId, shape_a: [usize; 3], shape_b: [usize; 3]) -> NodeId {
    let at = g.permute(a, &[0, 2, 1]);
    let bt = g.permute(b, &[0, 2, 1]);
    let cat = g.concat(vec![at, bt]);
    let _ = (shape_a, shape_b);
    g.permute(cat, &[0, 2, 1])
}

/// Wires the full token assembly for a `(batch, m, n)` bucket and returns the
/// `[B, M+N, d_model]` token node.
///
/// When `tile_clouds` is set, the cloud/centroid inputs carry a single scene
/// (`[N, P, 3]`) and the object codes are tiled across the batch; pose inputs
/// stay per-sample. Expected inputs:
///  - tensors: `clouds`, `centroids`, `poses`
///  - id lists: `word_ids`, `word_pos`, `word_type`, `word_time`,
///    `obj_pos`, `obj_type`, `obj_time`
pub fn assemble_tokens_graph(
    g: &mut Graph,
    w: &EncoderWidths,
    d_model: usize,
    batch: usize,
    m: usize,
    n: usize,
    tile_clouds: bool,
) -> NodeId {
    // word tokens
    let word_table = g.param("emb.word");
    let pos_table = g.param("emb.pos");
    let type_table = g.param("emb.type");
    let time_table = g.param("emb.time");
    let h_w = g.embedding(word_table, "word_ids");
    let h_pos_w = g.embedding(pos_table, "word_pos");
    let h_type_w = g.embedding(type_table, "word_type");
    let h_time_w = g.embedding(time_table, "word_time");
    let word_cat = g.concat(vec![h_w, h_pos_w, h_type_w, h_time_w]);
    let word_tok = linear(g, word_cat, "proj.word");
    let word_tok = g.reshape(word_tok, &[batch, m, d_model]);

    // object tokens
    let clouds = g.input("clouds");
    let cent = g.input("centroids");
    let groups = if tile_clouds { n } else { batch * n };
    let shape_code = point_encoder(g, clouds, "obj", w, groups);
    let cent_code = mlp(g, cent, "cent", 2, Act::Relu);
    let mut h_o = g.concat(vec![shape_code, cent_code]);
    if tile_clouds {
        let tiled = g.tile(h_o, batch);
        h_o = g.reshape(tiled, &[batch * n, w.object_dim()]);
    }
    let poses = g.input("poses");
    let h_t = mlp(g, poses, "pose", 2, Act::Relu);
    let h_pos_o = g.embedding(pos_table, "obj_pos");
    let h_type_o = g.embedding(type_table, "obj_type");
    let h_time_o = g.embedding(time_table, "obj_time");
    let obj_cat = g.concat(vec![h_o, h_t, h_pos_o, h_type_o, h_time_o]);
    let obj_tok = linear(g, obj_cat, "proj.obj");
    let obj_tok = g.reshape(obj_tok, &[batch, n, d_model]);

    concat_seq(
        g,
        word_tok,
        obj_tok,
        [batch, m, d_model],
        [batch, n, d_model],
    )
}

// ---------------------------------------------------------------------------
// host-side input preparation

/// Everything fixed about one scene across diffusion steps: encoded goal
/// and prepared object clouds.
#[derive(Debug, Clone)]
pub struct SceneTokens {
    pub word_ids: Vec<usize>,
    pub clouds: Vec<PreparedCloud>,
}

impl SceneTokens {
    pub fn build(
        objects: &[PointCloud],
        goal: &LanguageGoal,
        vocab: &VocabSpec,
        points: usize,
    ) -> CoreResult<Self> {
        if objects.is_empty() {
            return Err(CoreError::EmptyScene);
        }
        let word_ids = vocab.encode(goal)?;
        let clouds = objects
            .iter()
            .map(|c| prepare_cloud(c, points))
            .collect::<CoreResult<Vec<_>>>()?;
        Ok(SceneTokens { word_ids, clouds })
    }

    pub fn n(&self) -> usize {
        self.clouds.len()
    }

    pub fn m(&self) -> usize {
        self.word_ids.len()
    }
}

/// Fills a [`GraphInputs`] for a batch of scenes padded to the `(m, n)`
/// bucket. `poses` holds one 9-vector per `(example, object-slot)`; timesteps
/// are per example. Returns the inputs; the additive attention mask marks
/// exactly the active word/object slots.
#[allow(clippy::too_many_arguments)]
pub fn batch_inputs(
    scenes: &[&SceneTokens],
    poses: &[f64],
    times: &[usize],
    vocab: &VocabSpec,
    w: &EncoderWidths,
    m: usize,
    n: usize,
    timesteps: usize,
    max_seq: usize,
) -> CoreResult<GraphInputs> {
    let b = scenes.len();
    assert_eq!(poses.len(), b * n * 9, "pose block size");
    assert_eq!(times.len(), b, "one timestep per example");
    let s = m + n;
    let mut word_ids = Vec::with_capacity(b * m);
    let mut word_pos = Vec::with_capacity(b * m);
    let mut word_type = Vec::with_capacity(b * m);
    let mut word_time = Vec::with_capacity(b * m);
    let mut obj_pos = Vec::with_capacity(b * n);
    let mut obj_type = Vec::with_capacity(b * n);
    let mut obj_time = Vec::with_capacity(b * n);
    let mut clouds = Tensor::zeros(&[b * n, w.points, 3]);
    let mut centroids = Tensor::zeros(&[b * n, 3]);
    let mut mask = Tensor::zeros(&[b, 1, 1, s]);

    for (e, scene) in scenes.iter().enumerate() {
        let (sm, sn) = (scene.m(), scene.n());
        if sm > m || sn > n {
            return Err(CoreError::SequenceTooLong(format!(
                "scene ({sm} words, {sn} objects) exceeds bucket ({m}, {n})"
            )));
        }
        if sn == 0 {
            return Err(CoreError::EmptyScene);
        }
        if sm + n > max_seq {
            return Err(CoreError::SequenceTooLong(format!(
                "sequence {} exceeds max {max_seq}",
                sm + n
            )));
        }
        let t = times[e];
        if t > timesteps {
            return Err(CoreError::IndexOutOfRange {
                what: "timestep",
                index: t,
                len: timesteps + 1,
            });
        }
        for i in 0..m {
            word_ids.push(if i < sm { scene.word_ids[i] } else { vocab.pad_id() });
            word_pos.push(i);
            word_type.push(0);
            word_time.push(t);
        }
        for j in 0..n {
            // position index is goal-length + object index, per the token contract
            obj_pos.push((sm + j).min(max_seq - 1));
            obj_type.push(1);
            obj_time.push(t);
            if j < sn {
                let pc = &scene.clouds[j];
                let base = (e * n + j) * w.points * 3;
                for (pi, q) in pc.centered.iter().enumerate() {
                    clouds.data[base + pi * 3..base + pi * 3 + 3].copy_from_slice(q);
                }
                centroids.data[(e * n + j) * 3..(e * n + j) * 3 + 3]
                    .copy_from_slice(&pc.centroid);
            }
        }
        for i in 0..s {
            let active = i < sm || (i >= m && i - m < sn);
            mask.data[e * s + i] = if active { 0.0 } else { MASK_NEG };
        }
    }

    let mut inputs = GraphInputs::new()
        .tensor("clouds", clouds)
        .tensor("centroids", centroids)
        .tensor("poses", Tensor::new(vec![b * n, 9], poses.to_vec()))
        .tensor("attn_mask", mask);
    inputs.set_ids("word_ids", word_ids);
    inputs.set_ids("word_pos", word_pos);
    inputs.set_ids("word_type", word_type);
    inputs.set_ids("word_time", word_time);
    inputs.set_ids("obj_pos", obj_pos);
    inputs.set_ids("obj_type", obj_type);
    inputs.set_ids("obj_time", obj_time);
    Ok(inputs)
}

/// Inputs for batched sampling of one scene: cloud tensors carry the scene
/// once (`[N, P, 3]`, graph tiles the codes), while poses and ids are
/// per-sample. All `batch` samples share the timestep `t`.
pub fn sampling_inputs(
    scene: &SceneTokens,
    poses: &[f64],
    t: usize,
    batch: usize,
    w: &EncoderWidths,
    timesteps: usize,
    max_seq: usize,
) -> CoreResult<GraphInputs> {
    let (m, n) = (scene.m(), scene.n());
    if n == 0 {
        return Err(CoreError::EmptyScene);
    }
    if m + n > max_seq {
        return Err(CoreError::SequenceTooLong(format!(
            "sequence {} exceeds max {max_seq}",
            m + n
        )));
    }
    if t > timesteps {
        return Err(CoreError::IndexOutOfRange {
            what: "timestep",
            index: t,
            len: timesteps + 1,
        });
    }
    assert_eq!(poses.len(), batch * n * 9);
    let s = m + n;
    let mut clouds = Tensor::zeros(&[n, w.points, 3]);
    let mut centroids = Tensor::zeros(&[n, 3]);
    for (j, pc) in scene.clouds.iter().enumerate() {
        let base = j * w.points * 3;
        for (pi, q) in pc.centered.iter().enumerate() {
            clouds.data[base + pi * 3..base + pi * 3 + 3].copy_from_slice(q);
        }
        centroids.data[j * 3..j * 3 + 3].copy_from_slice(&pc.centroid);
    }
    let mut inputs = GraphInputs::new()
        .tensor("clouds", clouds)
        .tensor("centroids", centroids)
        .tensor("poses", Tensor::new(vec![batch * n, 9], poses.to_vec()))
        .tensor("attn_mask", Tensor::zeros(&[batch, 1, 1, s]));
    let mut word_ids = Vec::with_capacity(batch * m);
    let mut word_pos = Vec::with_capacity(batch * m);
    let mut word_time = Vec::with_capacity(batch * m);
    let mut obj_pos = Vec::with_capacity(batch * n);
    let mut obj_time = Vec::with_capacity(batch * n);
    for _ in 0..batch {
        word_ids.extend_from_slice(&scene.word_ids);
        word_pos.extend(0..m);
        word_time.extend(std::iter::repeat(t).take(m));
        obj_pos.extend(m..m + n);
        obj_time.extend(std::iter::repeat(t).take(n));
    }
    inputs.set_ids("word_ids", word_ids);
    inputs.set_ids("word_pos", word_pos);
    inputs.set_ids("word_type", vec![0; batch * m]);
    inputs.set_ids("word_time", word_time);
    inputs.set_ids("obj_pos", obj_pos);
    inputs.set_ids("obj_type", vec![1; batch * n]);
    inputs.set_ids("obj_time", obj_time);
    Ok(inputs)
}

/// Standalone object encoding (mostly for tests): returns `h_o` for one cloud.
pub fn encode_object(
    cloud: &PointCloud,
    store: &ParamStore,
    w: &EncoderWidths,
) -> CoreResult<Vec<f64>> {
    let pc = prepare_cloud(cloud, w.points)?;
    let mut g = Graph::new();
    let clouds = g.input("clouds");
    let cent = g.input("centroids");
    let shape = point_encoder(&mut g, clouds, "obj", w, 1);
    let code = mlp(&mut g, cent, "cent", 2, Act::Relu);
    let out = g.concat(vec![shape, code]);
    g.mark_output("h_o", out);
    let mut flat = Vec::with_capacity(w.points * 3);
    for q in &pc.centered {
        flat.extend_from_slice(q);
    }
    let inputs = GraphInputs::new()
        .tensor("clouds", Tensor::new(vec![1, w.points, 3], flat))
        .tensor(
            "centroids",
            Tensor::new(vec![1, 3], pc.centroid.to_vec()),
        );
    g.forward(store, &inputs)?;
    Ok(g.output("h_o").unwrap().data.clone())
}

/// Standalone per-token word embeddings (lookup semantics, no interaction).
pub fn encode_words(
    goal: &LanguageGoal,
    store: &ParamStore,
    vocab: &VocabSpec,
) -> CoreResult<Vec<Vec<f64>>> {
    let ids = vocab.encode(goal)?;
    if ids.is_empty() {
        return Ok(Vec::new());
    }
    let table = store
        .get("emb.word")
        .ok_or_else(|| CoreError::UnknownToken("emb.word parameter missing".into()))?;
    let d = table.shape[1];
    Ok(ids
        .iter()
        .map(|&id| table.data[id * d..(id + 1) * d].to_vec())
        .collect())
}

/// Standalone lookup/MLP wrappers for the scalar encoders.
pub fn encode_time(t: usize, store: &ParamStore, timesteps: usize) -> CoreResult<Vec<f64>> {
    if t > timesteps {
        return Err(CoreError::IndexOutOfRange {
            what: "timestep",
            index: t,
            len: timesteps + 1,
        });
    }
    let table = store.get("emb.time").expect("emb.time");
    let d = table.shape[1];
    Ok(table.data[t * d..(t + 1) * d].to_vec())
}

pub fn encode_position(i: usize, store: &ParamStore, max_seq: usize) -> CoreResult<Vec<f64>> {
    if i >= max_seq {
        return Err(CoreError::IndexOutOfRange {
            what: "position",
            index: i,
            len: max_seq,
        });
    }
    let table = store.get("emb.pos").expect("emb.pos");
    let d = table.shape[1];
    Ok(table.data[i * d..(i + 1) * d].to_vec())
}

pub fn encode_type(kind: usize, store: &ParamStore) -> CoreResult<Vec<f64>> {
    if kind >= 2 {
        return Err(CoreError::IndexOutOfRange {
            what: "token type",
            index: kind,
            len: 2,
        });
    }
    let table = store.get("emb.type").expect("emb.type");
    let d = table.shape[1];
    Ok(table.data[kind * d..(kind + 1) * d].to_vec())
}

/// Standalone pose encoding through the 2-layer MLP.
pub fn encode_pose(pose9: &[f64; 9], store: &ParamStore) -> CoreResult<Vec<f64>> {
    let mut g = Graph::new();
    let x = g.input("x");
    let h = mlp(&mut g, x, "pose", 2, Act::Relu);
    g.mark_output("h", h);
    let inputs = GraphInputs::new().tensor("x", Tensor::new(vec![1, 9], pose9.to_vec()));
    g.forward(store, &inputs)?;
    Ok(g.output("h").unwrap().data.clone())
}

/// Creates a store with freshly initialized encoder parameters (tests and
/// model constructors).
pub fn fresh_encoder_store<R: rand::Rng>(
    w: &EncoderWidths,
    d_model: usize,
    vocab: &VocabSpec,
    timesteps: usize,
    max_seq: usize,
    rng: &mut R,
) -> ParamStore {
    let mut store = ParamStore::new();
    init_encoders(&mut store, w, d_model, vocab.len(), timesteps, max_seq, rng);
    store
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::vocab::{GoalToken, ShapeClass, SizeClass};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn small_widths() -> EncoderWidths {
        EncoderWidths {
            points: 16,
            point_hidden: 8,
            point_dim: 16,
            point_heads: 2,
            shape_dim: 16,
            centroid_hidden: 8,
            centroid_dim: 8,
            pose_hidden: 16,
            pose_dim: 16,
            word_dim: 12,
            time_dim: 8,
            pos_dim: 6,
            type_dim: 4,
        }
    }

    fn cube_cloud(n: usize, shift: [f64; 3]) -> PointCloud {
        let mut rng = ChaCha8Rng::seed_from_u64(99);
        use rand::Rng;
        PointCloud::new(
            (0..n)
                .map(|_| {
                    [
                        rng.gen_range(-0.05..0.05) + shift[0],
                        rng.gen_range(-0.05..0.05) + shift[1],
                        rng.gen_range(-0.05..0.05) + shift[2],
                    ]
                })
                .collect(),
        )
    }

    #[test]
    fn fps_is_deterministic_and_padding_cycles() {
        let pts = vec![[0.0, 0.0, 0.0], [1.0, 0.0, 0.0], [0.0, 1.0, 0.0]];
        let a = farthest_point_indices(&pts, 3);
        let b = farthest_point_indices(&pts, 3);
        assert_eq!(a, b);
        let padded = farthest_point_indices(&pts, 7);
        assert_eq!(padded, vec![0, 1, 2, 0, 1, 2, 0]);
    }

    #[test]
    fn fps_selects_extremes_first() {
        let mut pts = vec![[0.0, 0.0, 0.0]; 10];
        pts[7] = [10.0, 0.0, 0.0];
        let idx = farthest_point_indices(&pts, 2);
        assert_eq!(idx, vec![0, 7]);
    }

    #[test]
    fn shape_code_is_exactly_translation_invariant() {
        let w = small_widths();
        let vocab = VocabSpec::standard();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let store = fresh_encoder_store(&w, 32, &vocab, 10, 16, &mut rng);
        let cloud = cube_cloud(40, [0.0, 0.0, 0.0]);
        let mut shifted = cloud.clone();
        for p in &mut shifted.points {
            p[0] += 0.5;
        }
        let a = encode_object(&cloud, &store, &w).unwrap();
        let b = encode_object(&shifted, &store, &w).unwrap();
        // centering removes the shift before the shape path, so the halves
        // agree to float rounding; the centroid halves must differ
        for (x, y) in a[..w.shape_dim].iter().zip(&b[..w.shape_dim]) {
            assert!((x - y).abs() < 1e-9, "shape code drifted: {x} vs {y}");
        }
        assert_ne!(a[w.shape_dim..], b[w.shape_dim..]);
    }

    #[test]
    fn identical_point_cloud_gives_zero_input_constant() {
        let w = small_widths();
        let vocab = VocabSpec::standard();
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let store = fresh_encoder_store(&w, 32, &vocab, 10, 16, &mut rng);
        let cloud = PointCloud::new(vec![[0.3, -0.2, 0.1]; 16]);
        let zero_cloud = PointCloud::new(vec![[0.0, 0.0, 0.0]; 16]);
        let a = encode_object(&cloud, &store, &w).unwrap();
        let b = encode_object(&zero_cloud, &store, &w).unwrap();
        for (x, y) in a[..w.shape_dim].iter().zip(&b[..w.shape_dim]) {
            assert!((x - y).abs() < 1e-9, "zero-input constant drifted: {x} vs {y}");
        }
    }

    #[test]
    fn word_encodings_are_pure_lookups() {
        let w = small_widths();
        let vocab = VocabSpec::standard();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let store = fresh_encoder_store(&w, 32, &vocab, 10, 16, &mut rng);
        let empty = encode_words(&LanguageGoal::default(), &store, &vocab).unwrap();
        assert!(empty.is_empty());
        let goal = LanguageGoal::new(vec![
            GoalToken::Shape(ShapeClass::Line),
            GoalToken::Size(SizeClass::Large),
        ]);
        let vs = encode_words(&goal, &store, &vocab).unwrap();
        assert_eq!(vs.len(), 2);
        // same token in a different goal maps to the identical vector
        let goal2 = LanguageGoal::new(vec![
            GoalToken::Size(SizeClass::Large),
            GoalToken::PosX(0),
        ]);
        let vs2 = encode_words(&goal2, &store, &vocab).unwrap();
        assert_eq!(vs[1], vs2[0]);
    }

    #[test]
    fn scalar_encoders_are_deterministic_and_range_checked() {
        let w = small_widths();
        let vocab = VocabSpec::standard();
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let store = fresh_encoder_store(&w, 32, &vocab, 10, 16, &mut rng);
        assert_eq!(
            encode_time(5, &store, 10).unwrap(),
            encode_time(5, &store, 10).unwrap()
        );
        assert!(encode_time(11, &store, 10).is_err());
        assert!(encode_position(16, &store, 16).is_err());
        assert_ne!(
            encode_type(0, &store).unwrap(),
            encode_type(1, &store).unwrap()
        );
        let z = encode_pose(&[0.0; 9], &store).unwrap();
        assert_eq!(z, encode_pose(&[0.0; 9], &store).unwrap());
    }

    #[test]
    fn batch_inputs_mask_counts_active_slots() {
        let w = small_widths();
        let vocab = VocabSpec::standard();
        let goal = LanguageGoal::new(vec![
            GoalToken::Shape(ShapeClass::Tower),
            GoalToken::Size(SizeClass::Small),
        ]);
        let clouds: Vec<PointCloud> = (0..3).map(|i| cube_cloud(20, [i as f64 * 0.1, 0.0, 0.0])).collect();
        let scene = SceneTokens::build(&clouds, &goal, &vocab, w.points).unwrap();
        let poses = vec![0.0; 4 * 9];
        let inputs = batch_inputs(&[&scene], &poses, &[1], &vocab, &w, 3, 4, 10, 16).unwrap();
        let mask = &inputs.tensors["attn_mask"];
        let active = mask.data.iter().filter(|&&v| v == 0.0).count();
        assert_eq!(active, 2 + 3); // M words + N objects
        assert_eq!(mask.shape, vec![1, 1, 1, 7]);
    }

    #[test]
    fn batch_inputs_rejects_empty_scene_and_overflow() {
        let w = small_widths();
        let vocab = VocabSpec::standard();
        let goal = LanguageGoal::new(vec![GoalToken::Shape(ShapeClass::Line)]);
        let clouds = vec![cube_cloud(8, [0.0; 3])];
        let scene = SceneTokens::build(&clouds, &goal, &vocab, w.points).unwrap();
        // bucket too small for the objects
        let err = batch_inputs(&[&scene], &[0.0; 0], &[1], &vocab, &w, 1, 0, 10, 16);
        assert!(err.is_err());
        assert!(SceneTokens::build(&[], &goal, &vocab, w.points).is_err());
    }
}
