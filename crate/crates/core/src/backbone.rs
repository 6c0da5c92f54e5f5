//! Masked transformer encoder over the assembled token sequence, with the
//! shared linear head that reads per-object noise predictions off the object
//! tokens.

use std::cell::RefCell;
use std::collections::HashMap;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::autodiff::{
    encoder_layer, init_encoder_layer, init_layer_norm, init_linear, layer_norm, linear,
    Gradients, Graph, GraphInputs, ParamStore, SeqDims, Tensor,
};
use crate::encoders::{
    assemble_tokens_graph, batch_inputs, init_encoders, sampling_inputs, EncoderWidths,
    SceneTokens,
};
use crate::error::{CoreError, CoreResult};
use crate::vocab::VocabSpec;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct BackboneConfig {
    pub layers: usize,
    pub heads: usize,
    pub d_model: usize,
    pub feed_forward: usize,
    pub max_words: usize,
    pub max_objects: usize,
}

impl Default for BackboneConfig {
    fn default() -> Self {
        BackboneConfig {
            layers: 4,
            heads: 4,
            d_model: 128,
            feed_forward: 512,
            max_words: 8,
            max_objects: 7,
        }
    }
}

impl BackboneConfig {
    pub fn max_seq(&self) -> usize {
        self.max_words + self.max_objects
    }

    pub fn validate(&self) -> CoreResult<()> {
        if self.d_model % self.heads != 0 {
            return Err(CoreError::ShapeMismatch {
                node: 0,
                message: format!(
                    "d_model {} not divisible by heads {}",
                    self.d_model, self.heads
                ),
            });
        }
        Ok(())
    }
}

/// Full conditional-denoiser configuration: backbone sizes, encoder widths,
/// and the diffusion step count the time-embedding table must cover.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct DenoiserConfig {
    pub backbone: BackboneConfig,
    pub encoders: EncoderWidths,
    pub timesteps: usize,
}

impl Default for DenoiserConfig {
    fn default() -> Self {
        DenoiserConfig {
            backbone: BackboneConfig::default(),
            encoders: EncoderWidths::default(),
            timesteps: 200,
        }
    }
}

/// Per-object 9-vector noise estimates, one entry per real object.
#[derive(Debug, Clone, PartialEq)]
pub struct NoisePrediction {
    pub eps: Vec<[f64; 9]>,
}

pub fn init_denoiser<R: rand::Rng>(
    store: &mut ParamStore,
    cfg: &DenoiserConfig,
    vocab_size: usize,
    rng: &mut R,
) {
    let bb = &cfg.backbone;
    init_encoders(
        store,
        &cfg.encoders,
        bb.d_model,
        vocab_size,
        cfg.timesteps,
        bb.max_seq(),
        rng,
    );
    for l in 0..bb.layers {
        init_encoder_layer(store, &format!("layer{l}"), bb.d_model, bb.feed_forward, rng);
    }
    init_layer_norm(store, "final_ln", bb.d_model);
    init_linear(store, "head", bb.d_model, 9, rng);
}

/// Wires assembly, `L` pre-norm encoder layers, and the shared output head
/// for one `(batch, m, n)` bucket.
///
/// Outputs: `tokens_in` (assembled tokens), `tokens_out` (after the encoder
/// stack, before the head's layer norm), `eps_hat` `[B, N, 9]`, and, when
/// `with_loss`, the scalar `loss` of inputs `target`/`loss_mask`.
pub fn build_denoiser_graph(
    cfg: &DenoiserConfig,
    batch: usize,
    m: usize,
    n: usize,
    tile_clouds: bool,
    with_loss: bool,
) -> Graph {
    let bb = &cfg.backbone;
    let mut g = Graph::new();
    let tokens = assemble_tokens_graph(
        &mut g,
        &cfg.encoders,
        bb.d_model,
        batch,
        m,
        n,
        tile_clouds,
    );
    g.mark_output("tokens_in", tokens);
    let mask = g.input("attn_mask");
    let dims = SeqDims {
        batch,
        seq: m + n,
        d_model: bb.d_model,
        heads: bb.heads,
        ff: bb.feed_forward,
    };
    let mut x = tokens;
    for l in 0..bb.layers {
        x = encoder_layer(&mut g, x, Some(mask), &format!("layer{l}"), dims);
    }
    g.mark_output("tokens_out", x);
    let h = layer_norm(&mut g, x, "final_ln");
    let obj = g.narrow(h, 1, m, n);
    let flat = g.reshape(obj, &[batch * n, bb.d_model]);
    let eps = linear(&mut g, flat, "head");
    let eps = g.reshape(eps, &[batch, n, 9]);
    g.mark_output("eps_hat", eps);
    if with_loss {
        let target = g.input("target");
        let loss_mask = g.input("loss_mask");
        let loss = g.mse_masked(eps, target, loss_mask);
        g.mark_output("loss", loss);
    }
    g
}

type BucketKey = (usize, usize, usize, bool, bool);

/// The conditional noise-prediction model: parameters, vocabulary, and a
/// cache of per-bucket graphs. Single-writer during training; clone the model
/// per worker for parallel inference.
pub struct DenoiserModel {
    pub cfg: DenoiserConfig,
    pub vocab: VocabSpec,
    pub store: ParamStore,
    graphs: RefCell<HashMap<BucketKey, Graph>>,
}

impl Clone for DenoiserModel {
    fn clone(&self) -> Self {
        DenoiserModel {
            cfg: self.cfg,
            vocab: self.vocab.clone(),
            store: self.store.clone(),
            graphs: RefCell::new(HashMap::new()),
        }
    }
}

impl DenoiserModel {
    pub fn new(cfg: DenoiserConfig, vocab: VocabSpec, seed: u64) -> CoreResult<Self> {
        cfg.backbone.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut store = ParamStore::new();
        init_denoiser(&mut store, &cfg, vocab.len(), &mut rng);
        Ok(DenoiserModel {
            cfg,
            vocab,
            store,
            graphs: RefCell::new(HashMap::new()),
        })
    }

    pub fn from_parts(cfg: DenoiserConfig, vocab: VocabSpec, store: ParamStore) -> CoreResult<Self> {
        cfg.backbone.validate()?;
        Ok(DenoiserModel {
            cfg,
            vocab,
            store,
            graphs: RefCell::new(HashMap::new()),
        })
    }

    fn with_graph<T>(
        &self,
        key: BucketKey,
        inputs: &GraphInputs,
        f: impl FnOnce(&mut Graph) -> CoreResult<T>,
    ) -> CoreResult<T> {
        let mut graphs = self.graphs.borrow_mut();
        let graph = graphs.entry(key).or_insert_with(|| {
            build_denoiser_graph(&self.cfg, key.0, key.1, key.2, key.3, key.4)
        });
        graph.forward(&self.store, inputs)?;
        f(graph)
    }

    /// Batched noise prediction for padded buckets: scenes padded to `(m, n)`
    /// slots, one timestep per scene. Returns `eps_hat` `[B, n, 9]`.
    pub fn predict_noise_batch(
        &self,
        scenes: &[&SceneTokens],
        poses: &[f64],
        times: &[usize],
        m: usize,
        n: usize,
    ) -> CoreResult<Tensor> {
        let inputs = batch_inputs(
            scenes,
            poses,
            times,
            &self.vocab,
            &self.cfg.encoders,
            m,
            n,
            self.cfg.timesteps,
            self.cfg.backbone.max_seq(),
        )?;
        self.with_graph(
            (scenes.len(), m, n, false, false),
            &inputs,
            |g| Ok(g.output("eps_hat").unwrap().clone()),
        )
    }

    /// Noise prediction for `batch` pose samples of a single scene (the cloud
    /// codes are computed once and tiled).
    pub fn predict_noise_tiled(
        &self,
        scene: &SceneTokens,
        poses: &[f64],
        t: usize,
        batch: usize,
    ) -> CoreResult<Tensor> {
        let inputs = sampling_inputs(
            scene,
            poses,
            t,
            batch,
            &self.cfg.encoders,
            self.cfg.timesteps,
            self.cfg.backbone.max_seq(),
        )?;
        self.with_graph(
            (batch, scene.m(), scene.n(), true, false),
            &inputs,
            |g| Ok(g.output("eps_hat").unwrap().clone()),
        )
    }

    /// Single-scene convenience wrapper returning one 9-vector per object.
    pub fn predict_noise(
        &self,
        scene: &SceneTokens,
        poses: &[[f64; 9]],
        t: usize,
    ) -> CoreResult<NoisePrediction> {
        let n = scene.n();
        assert_eq!(poses.len(), n, "one pose per object");
        let flat: Vec<f64> = poses.iter().flatten().copied().collect();
        let out = self.predict_noise_tiled(scene, &flat, t, 1)?;
        let eps = (0..n)
            .map(|j| {
                let mut e = [0.0; 9];
                e.copy_from_slice(&out.data[j * 9..(j + 1) * 9]);
                e
            })
            .collect();
        Ok(NoisePrediction { eps })
    }

    /// Forward + backward through the masked diffusion loss for one padded
    /// batch. Returns the loss value and parameter gradients.
    #[allow(clippy::too_many_arguments)]
    pub fn loss_and_grads(
        &mut self,
        scenes: &[&SceneTokens],
        noisy_poses: &[f64],
        target_eps: &[f64],
        loss_mask: &[f64],
        times: &[usize],
        m: usize,
        n: usize,
    ) -> CoreResult<(f64, Gradients)> {
        let b = scenes.len();
        let mut inputs = batch_inputs(
            scenes,
            noisy_poses,
            times,
            &self.vocab,
            &self.cfg.encoders,
            m,
            n,
            self.cfg.timesteps,
            self.cfg.backbone.max_seq(),
        )?;
        inputs.set_tensor("target", Tensor::new(vec![b, n, 9], target_eps.to_vec()));
        inputs.set_tensor("loss_mask", Tensor::new(vec![b, n, 9], loss_mask.to_vec()));
        let key = (b, m, n, false, true);
        let mut graphs = self.graphs.borrow_mut();
        let graph = graphs
            .entry(key)
            .or_insert_with(|| build_denoiser_graph(&self.cfg, b, m, n, false, true));
        graph.forward(&self.store, &inputs)?;
        let loss_node = graph.output_node("loss").expect("loss output");
        let loss = graph.value(loss_node).scalar_value();
        let grads = graph.backward(loss_node)?;
        Ok((loss, grads))
    }

    /// Evaluates the masked loss only (no backward).
    #[allow(clippy::too_many_arguments)]
    pub fn loss_only(
        &self,
        scenes: &[&SceneTokens],
        noisy_poses: &[f64],
        target_eps: &[f64],
        loss_mask: &[f64],
        times: &[usize],
        m: usize,
        n: usize,
    ) -> CoreResult<f64> {
        let b = scenes.len();
        let mut inputs = batch_inputs(
            scenes,
            noisy_poses,
            times,
            &self.vocab,
            &self.cfg.encoders,
            m,
            n,
            self.cfg.timesteps,
            self.cfg.backbone.max_seq(),
        )?;
        inputs.set_tensor("target", Tensor::new(vec![b, n, 9], target_eps.to_vec()));
        inputs.set_tensor("loss_mask", Tensor::new(vec![b, n, 9], loss_mask.to_vec()));
        self.with_graph((b, m, n, false, true), &inputs, |g| {
            Ok(g.output("loss").unwrap().scalar_value())
        })
    }
}
