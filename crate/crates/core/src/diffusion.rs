//! Variance schedule, forward noising, training-batch construction, and the
//! reverse sampler over joint object pose vectors.
//!
//! Pose vectors diffuse in the raw 9-D Euclidean embedding (translation plus
//! two rotation-basis vectors); projection to SO(3) happens only when a
//! finished sample is converted to poses. Translations are normalized to
//! roughly unit scale by [`PoseNormalizer`] before entering the chain.

use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::backbone::DenoiserModel;
use crate::encoders::SceneTokens;
use crate::error::{CoreError, CoreResult};
use crate::geometry::PoseVector;

/// beta table with derived alpha products and posterior coefficients.
/// Arrays are indexed by timestep `t` in `[0, T]`; index 0 is the convention
/// `alpha_bar_0 = 1` so the round-trip identities hold at the boundary.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NoiseSchedule {
    pub timesteps: usize,
    pub betas: Vec<f64>,
    pub alphas: Vec<f64>,
    pub alpha_bars: Vec<f64>,
    pub recip_sqrt_alpha: Vec<f64>,
    /// `beta_t / sqrt(1 - alpha_bar_t)`
    pub eps_coef: Vec<f64>,
    /// `sqrt(beta_t)`
    pub sigma: Vec<f64>,
    /// `beta_t (1 - alpha_bar_{t-1}) / (1 - alpha_bar_t)`
    pub posterior_variance: Vec<f64>,
}

pub const DEFAULT_TIMESTEPS: usize = 200;
pub const DEFAULT_BETA_1: f64 = 1e-4;
pub const DEFAULT_BETA_T: f64 = 0.05;

/// Linear beta schedule from `beta_1` to `beta_t` over `timesteps` steps.
pub fn make_schedule(timesteps: usize, beta_1: f64, beta_t: f64) -> CoreResult<NoiseSchedule> {
    if timesteps < 1 {
        return Err(CoreError::InvalidRange("T must be >= 1".into()));
    }
    if !(beta_1 > 0.0 && beta_1 <= beta_t && beta_t < 1.0) {
        return Err(CoreError::InvalidRange(format!(
            "need 0 < beta_1 <= beta_T < 1, got ({beta_1}, {beta_t})"
        )));
    }
    let mut betas = vec![0.0; timesteps + 1];
    for t in 1..=timesteps {
        let frac = if timesteps == 1 {
            0.0
        } else {
            (t - 1) as f64 / (timesteps - 1) as f64
        };
        betas[t] = beta_1 + (beta_t - beta_1) * frac;
    }
    let mut alphas = vec![1.0; timesteps + 1];
    let mut alpha_bars = vec![1.0; timesteps + 1];
    let mut recip_sqrt_alpha = vec![1.0; timesteps + 1];
    let mut eps_coef = vec![0.0; timesteps + 1];
    let mut sigma = vec![0.0; timesteps + 1];
    let mut posterior_variance = vec![0.0; timesteps + 1];
    for t in 1..=timesteps {
        alphas[t] = 1.0 - betas[t];
        alpha_bars[t] = alpha_bars[t - 1] * alphas[t];
        recip_sqrt_alpha[t] = 1.0 / alphas[t].sqrt();
        eps_coef[t] = betas[t] / (1.0 - alpha_bars[t]).sqrt();
        sigma[t] = betas[t].sqrt();
        posterior_variance[t] = betas[t] * (1.0 - alpha_bars[t - 1]) / (1.0 - alpha_bars[t]);
    }
    Ok(NoiseSchedule {
        timesteps,
        betas,
        alphas,
        alpha_bars,
        recip_sqrt_alpha,
        eps_coef,
        sigma,
        posterior_variance,
    })
}

impl NoiseSchedule {
    pub fn default_schedule() -> Self {
        make_schedule(DEFAULT_TIMESTEPS, DEFAULT_BETA_1, DEFAULT_BETA_T)
            .expect("default schedule is valid")
    }
}

/// Joint goal-pose hypothesis for every object in a scene.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StructureSample {
    pub poses: Vec<PoseVector>,
}

impl StructureSample {
    pub fn from_flat(flat: &[f64]) -> Self {
        debug_assert!(flat.len() % 9 == 0);
        StructureSample {
            poses: flat.chunks(9).map(PoseVector::from_flat).collect(),
        }
    }

    pub fn to_flat(&self) -> Vec<f64> {
        self.poses.iter().flat_map(|p| p.to_flat()).collect()
    }
}

/// Maps world-frame translations to the normalized diffusion frame
/// (centered on the workspace origin at table height, scaled by the
/// workspace half-extent) and back. Rotation-basis coordinates pass through.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PoseNormalizer {
    pub center: [f64; 3],
    pub scale: f64,
}

impl PoseNormalizer {
    pub fn new(table_height: f64, half_extent: f64) -> Self {
        PoseNormalizer {
            center: [0.0, 0.0, table_height],
            scale: half_extent,
        }
    }

    pub fn normalize9(&self, pose: &[f64; 9]) -> [f64; 9] {
        let mut out = *pose;
        for k in 0..3 {
            out[k] = (pose[k] - self.center[k]) / self.scale;
        }
        out
    }

    pub fn denormalize9(&self, pose: &[f64; 9]) -> [f64; 9] {
        let mut out = *pose;
        for k in 0..3 {
            out[k] = pose[k] * self.scale + self.center[k];
        }
        out
    }
}

impl Default for PoseNormalizer {
    fn default() -> Self {
        PoseNormalizer::new(0.0, 0.5)
    }
}

/// Closed-form forward noising `x_t = sqrt(abar_t) x_0 + sqrt(1-abar_t) eps`,
/// elementwise over all coordinates.
pub fn forward_noise(x0: &[f64], t: usize, eps: &[f64], schedule: &NoiseSchedule) -> Vec<f64> {
    debug_assert!(t >= 1 && t <= schedule.timesteps);
    debug_assert_eq!(x0.len(), eps.len());
    let a = schedule.alpha_bars[t].sqrt();
    let b = (1.0 - schedule.alpha_bars[t]).sqrt();
    x0.iter().zip(eps).map(|(x, e)| a * x + b * e).collect()
}

/// One reparameterized posterior step
/// `x_{t-1} = (x_t - eps_coef_t * eps_hat) / sqrt(alpha_t) + sigma_t z`.
/// The stochastic term is forced to zero at `t = 1`.
pub fn posterior_step(
    x_t: &[f64],
    eps_hat: &[f64],
    t: usize,
    z: &[f64],
    schedule: &NoiseSchedule,
) -> Vec<f64> {
    debug_assert!(t >= 1 && t <= schedule.timesteps);
    let ra = schedule.recip_sqrt_alpha[t];
    let ec = schedule.eps_coef[t];
    let s = if t == 1 { 0.0 } else { schedule.sigma[t] };
    x_t.iter()
        .zip(eps_hat)
        .zip(z)
        .map(|((x, e), zi)| ra * (x - ec * e) + s * zi)
        .collect()
}

/// Per-example training quantities for one batch: noisy poses, the noise
/// targets, the loss mask over active object slots, and the sampled
/// timesteps.
pub struct TrainingBatch {
    pub noisy: Vec<f64>,
    pub target_eps: Vec<f64>,
    pub loss_mask: Vec<f64>,
    pub times: Vec<usize>,
}

/// Draws `t ~ U[1, T]` per example and `eps ~ N(0, I)` per active coordinate,
/// then applies the closed-form forward process. `x0` is `[B, n, 9]` in
/// normalized coordinates with zeros in padded slots; `active` flags the real
/// object slots (`B * n` entries).
pub fn make_training_batch<R: Rng>(
    x0: &[f64],
    active: &[bool],
    n: usize,
    schedule: &NoiseSchedule,
    rng: &mut R,
) -> TrainingBatch {
    let b = active.len() / n;
    debug_assert_eq!(x0.len(), b * n * 9);
    let normal = Normal::new(0.0, 1.0).unwrap();
    let mut noisy = vec![0.0; x0.len()];
    let mut target_eps = vec![0.0; x0.len()];
    let mut loss_mask = vec![0.0; x0.len()];
    let mut times = Vec::with_capacity(b);
    for e in 0..b {
        let t = rng.gen_range(1..=schedule.timesteps);
        times.push(t);
        let a = schedule.alpha_bars[t].sqrt();
        let bb = (1.0 - schedule.alpha_bars[t]).sqrt();
        for j in 0..n {
            if !active[e * n + j] {
                continue;
            }
            for k in 0..9 {
                let idx = (e * n + j) * 9 + k;
                let eps: f64 = normal.sample(rng);
                target_eps[idx] = eps;
                noisy[idx] = a * x0[idx] + bb * eps;
                loss_mask[idx] = 1.0;
            }
        }
    }
    TrainingBatch {
        noisy,
        target_eps,
        loss_mask,
        times,
    }
}

/// Result of batched sampling: converted samples plus how many draws were
/// discarded for degenerate rotation bases.
pub struct SampleBatch {
    pub samples: Vec<StructureSample>,
    pub dropped: usize,
}

/// Runs the full reverse chain jointly over a batch of `b` samples for one
/// scene, then denormalizes and converts to pose vectors, discarding samples
/// whose rotation conversion fails.
pub fn sample_structures<R: Rng>(
    model: &DenoiserModel,
    scene: &SceneTokens,
    schedule: &NoiseSchedule,
    normalizer: &PoseNormalizer,
    b: usize,
    rng: &mut R,
) -> CoreResult<SampleBatch> {
    assert!(b >= 1, "batch must be >= 1");
    assert_eq!(
        schedule.timesteps, model.cfg.timesteps,
        "schedule and model disagree on T"
    );
    let n = scene.n();
    let normal = Normal::new(0.0, 1.0).unwrap();
    let mut x: Vec<f64> = (0..b * n * 9).map(|_| normal.sample(rng)).collect();
    let mut z = vec![0.0; x.len()];
    for t in (1..=schedule.timesteps).rev() {
        let eps_hat = model.predict_noise_tiled(scene, &x, t, b)?;
        if t > 1 {
            for zi in &mut z {
                *zi = normal.sample(rng);
            }
        } else {
            z.iter_mut().for_each(|zi| *zi = 0.0);
        }
        x = posterior_step(&x, &eps_hat.data, t, &z, schedule);
    }
    let mut samples = Vec::with_capacity(b);
    let mut dropped = 0usize;
    for s in 0..b {
        let mut poses = Vec::with_capacity(n);
        let mut ok = true;
        for j in 0..n {
            let mut raw = [0.0; 9];
            raw.copy_from_slice(&x[(s * n + j) * 9..(s * n + j + 1) * 9]);
            let world = normalizer.denormalize9(&raw);
            let pv = PoseVector::from_flat(&world);
            if pv.to_pose().is_err() {
                ok = false;
                break;
            }
            poses.push(pv);
        }
        if ok {
            samples.push(StructureSample { poses });
        } else {
            dropped += 1;
        }
    }
    if samples.is_empty() {
        return Err(CoreError::AllSamplesDegenerate(b));
    }
    Ok(SampleBatch { samples, dropped })
}
