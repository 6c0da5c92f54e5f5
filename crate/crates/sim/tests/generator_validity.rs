//! Generated ground truth must be valid by construction: every record's goal
//! poses pass the full physical and semantic evaluation, through both the
//! primitive-pose route and the cloud-frame conversion route.

use structdiff_core::geometry::Pose;
use structdiff_sim::dataset::{generate_dataset, load_all_records, GenConfig};
use structdiff_sim::evaluation::{judge, judge_primitive_poses, EvalConfig};
use structdiff_sim::render::RenderConfig;
use structdiff_sim::structures::WorkspaceConfig;

fn small_gen(seed: u64, per_class: usize) -> GenConfig {
    GenConfig {
        per_class,
        seed,
        workspace: WorkspaceConfig::default(),
        render: RenderConfig {
            dense_samples: 600,
            points: 40,
            ..RenderConfig::default()
        },
        variant_states: 1,
        max_distractors: 2,
    }
}

#[test]
fn ground_truth_scores_full_success() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = small_gen(2024, 10);
    generate_dataset(&cfg, dir.path()).unwrap();
    let records = load_all_records(dir.path()).unwrap();
    assert_eq!(records.len(), 40);
    let ws = cfg.workspace;
    let eval = EvalConfig::default();

    let mut failures = Vec::new();
    for rec in &records {
        // route A: true primitive poses straight into the evaluator
        let gt: Vec<Pose> = rec.objects.iter().map(|o| o.goal_pose).collect();
        let outcome = judge_primitive_poses(rec, &gt, &ws, &eval).unwrap();
        if !outcome.success {
            failures.push((rec.index, "primitive", format!("{:?}", outcome)));
            continue;
        }
        // route B: through the cloud-frame target poses the models learn
        let targets: Vec<Pose> = (0..rec.objects.len())
            .map(|j| rec.target_pose_vector(j).to_pose().unwrap())
            .collect();
        let outcome_b = judge(rec, &targets, &ws, &eval).unwrap();
        if !outcome_b.success {
            failures.push((rec.index, "cloud-frame", format!("{:?}", outcome_b)));
        }
    }
    assert!(
        failures.is_empty(),
        "{} of {} ground-truth records failed evaluation; first: {:?}",
        failures.len(),
        records.len(),
        failures.first()
    );
}

#[test]
fn ground_truth_constraint_counts_match_manifest() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = small_gen(7, 3);
    let manifest = generate_dataset(&cfg, dir.path()).unwrap();
    let records = load_all_records(dir.path()).unwrap();
    let ws = cfg.workspace;
    let eval = EvalConfig::default();
    for rec in &records {
        let gt: Vec<Pose> = rec.objects.iter().map(|o| o.goal_pose).collect();
        let outcome = judge_primitive_poses(rec, &gt, &ws, &eval).unwrap();
        let expected = manifest
            .constraint_counts
            .iter()
            .find(|(name, _)| name == rec.spec.shape.name());
        if let Some((_, count)) = expected {
            // dinner count varies with the utensil count; the manifest lists
            // the maximum
            if rec.spec.shape == structdiff_core::vocab::ShapeClass::Dinner {
                assert!(outcome.constraints.len() <= *count);
                assert!(outcome.constraints.len() >= *count - 1);
            } else {
                assert_eq!(outcome.constraints.len(), *count, "{:?}", rec.spec.shape);
            }
        }
    }
}
