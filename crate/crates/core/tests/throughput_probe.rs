//! Wall-clock probe for sizing desk-scale configurations. Ignored by
//! default; run with `cargo test -p structdiff-core --test throughput_probe
//! -- --ignored --nocapture`.

use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use structdiff_core::autodiff::{adam_step, AdamConfig, AdamState};
use structdiff_core::backbone::{BackboneConfig, DenoiserConfig, DenoiserModel};
use structdiff_core::diffusion::{make_schedule, make_training_batch};
use structdiff_core::encoders::{EncoderWidths, SceneTokens};
use structdiff_core::geometry::PointCloud;
use structdiff_core::vocab::{GoalToken, LanguageGoal, ShapeClass, SizeClass, VocabSpec};

fn desk_cfg() -> DenoiserConfig {
    DenoiserConfig {
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
    }
}

fn scene_of(rng: &mut ChaCha8Rng, n: usize, cfg: &DenoiserConfig) -> SceneTokens {
    let clouds: Vec<PointCloud> = (0..n)
        .map(|j| {
            PointCloud::new(
                (0..40)
                    .map(|_| {
                        [
                            0.1 * j as f64 + rng.gen_range(-0.04..0.04),
                            rng.gen_range(-0.04..0.04),
                            rng.gen_range(0.0..0.06),
                        ]
                    })
                    .collect(),
            )
        })
        .collect();
    let goal = LanguageGoal::new(vec![
        GoalToken::Shape(ShapeClass::Line),
        GoalToken::Size(SizeClass::Medium),
        GoalToken::PosX(1),
        GoalToken::PosY(2),
        GoalToken::Rot(0),
    ]);
    SceneTokens::build(&clouds, &goal, &VocabSpec::standard(), cfg.encoders.points).unwrap()
}

#[test]
#[ignore]
fn probe_training_and_sampling_throughput() {
    let cfg = desk_cfg();
    let mut model = DenoiserModel::new(cfg, VocabSpec::standard(), 1).unwrap();
    let schedule = make_schedule(100, 1e-4, 0.095).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(2);

    // training step: batch 128 at n = 5
    let n = 5;
    let batch_size = 128;
    let scenes: Vec<SceneTokens> = (0..batch_size).map(|_| scene_of(&mut rng, n, &model.cfg)).collect();
    let refs: Vec<&SceneTokens> = scenes.iter().collect();
    let x0: Vec<f64> = (0..batch_size * n * 9).map(|_| rng.gen_range(-0.5..0.5)).collect();
    let active = vec![true; batch_size * n];
    let mut state = AdamState::new();
    let adam = AdamConfig::default();

    // warm up graph construction
    let b = make_training_batch(&x0, &active, n, &schedule, &mut rng);
    let (_, g) = model
        .loss_and_grads(&refs, &b.noisy, &b.target_eps, &b.loss_mask, &b.times, 5, n)
        .unwrap();
    adam_step(&mut model.store, &g, &mut state, &adam);

    let t0 = Instant::now();
    let steps = 5;
    for _ in 0..steps {
        let b = make_training_batch(&x0, &active, n, &schedule, &mut rng);
        let (_, g) = model
            .loss_and_grads(&refs, &b.noisy, &b.target_eps, &b.loss_mask, &b.times, 5, n)
            .unwrap();
        adam_step(&mut model.store, &g, &mut state, &adam);
    }
    let per_step = t0.elapsed().as_secs_f64() / steps as f64;
    println!("train step (B=128, n=5): {per_step:.3} s");

    // sampling: full reverse chain, B=64, one scene
    let scene = scene_of(&mut rng, 4, &model.cfg);
    let t1 = Instant::now();
    let mut x: Vec<f64> = (0..64 * 4 * 9).map(|_| rng.gen_range(-1.0..1.0)).collect();
    for t in (1..=schedule.timesteps).rev() {
        let eps = model.predict_noise_tiled(&scene, &x, t, 64).unwrap();
        for (xi, ei) in x.iter_mut().zip(&eps.data) {
            *xi = 0.99 * *xi - 0.01 * ei;
        }
    }
    let chain = t1.elapsed().as_secs_f64();
    println!("sample chain (B=64, n=4, T=100): {chain:.3} s");
    println!("params: {}", model.store.total_values());
}
