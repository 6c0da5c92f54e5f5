//! Ground-truth judging of predicted rearrangements: a physics-lite
//! drop-and-settle check over analytic geometry, model-based semantic
//! classifiers per structure class, and success-rate aggregation.
//!
//! Placement semantics: objects are released 3 cm above their predicted
//! poses in rearrangement order and drop straight down to the first contact
//! with the table or an already-placed object's top surface. A placement is
//! preempted if the settled object interpenetrates a placed object, if its
//! support covers less than a quarter of its footprint, or if contact
//! resolution moved it more than 2 cm laterally (the drop is vertical, so
//! the last check guards the contract rather than firing in practice).

use serde::{Deserialize, Serialize};
use structdiff_core::geometry::{pose_compose, Pose};
use structdiff_core::vocab::ShapeClass;

use crate::dataset::SceneRecord;
use crate::error::{SimError, SimResult};
use crate::primitives::{Footprint, PrimitiveObject};
use crate::structures::{dinner_slots, StructureSpec, WorkspaceConfig};

/// Declared thresholds of the evaluator; every constant is recorded in run
/// manifests.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EvalConfig {
    /// Release height above the predicted pose (meters).
    pub drop_height: f64,
    /// Minimum supported fraction of the footprint.
    pub support_fraction: f64,
    /// Maximum lateral displacement during contact resolution (meters).
    pub settle_displacement: f64,
    /// Interpenetration beyond this is a collision (meters).
    pub penetration_tolerance: f64,
    /// A drop stopping this far above the predicted height means the
    /// predicted space is occupied by a placed object (preempted).
    pub blocked_rise: f64,
    /// Geometric-fit residual bound for line/circle/tower constraints.
    pub fit_tolerance: f64,
    /// Relative spacing/angle/size uniformity bound.
    pub uniformity: f64,
    /// Dinner role objects must land this close to their template slots.
    pub slot_tolerance: f64,
    /// Contact-chain gap bound for towers (meters).
    pub contact_gap: f64,
}

impl Default for EvalConfig {
    fn default() -> Self {
        EvalConfig {
            drop_height: 0.03,
            support_fraction: 0.25,
            settle_displacement: 0.02,
            penetration_tolerance: 1e-6,
            blocked_rise: 0.005,
            fit_tolerance: 0.015,
            uniformity: 0.25,
            slot_tolerance: 0.03,
            contact_gap: 1e-3,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PlacementFailure {
    LateralOverlap,
    InsufficientSupport,
    ExcessiveDisplacement,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ObjectOutcome {
    pub settled: Option<Pose>,
    pub failure: Option<PlacementFailure>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PlacementOutcome {
    pub objects: Vec<ObjectOutcome>,
    pub physically_valid: bool,
    /// `(constraint name, satisfied)` in a fixed per-shape order; empty when
    /// the physical phase already failed.
    pub constraints: Vec<(String, bool)>,
    pub success: bool,
}

/// Predicted primitive world pose from a predicted cloud-frame goal pose:
/// `T = goal * pc_initial^-1 * T_init`.
pub fn predicted_primitive_pose(record: &SceneRecord, j: usize, goal: &Pose) -> Pose {
    let pc_inv = structdiff_core::geometry::pose_inverse(&record.cloud_initial_pose(j));
    pose_compose(&pose_compose(goal, &pc_inv), &record.objects[j].init_pose)
}

/// Drops each object in order onto the strongest support below it.
pub fn execute_placements(
    objects: &[PrimitiveObject],
    predicted: &[Pose],
    ws: &WorkspaceConfig,
    cfg: &EvalConfig,
) -> PlacementOutcome {
    assert_eq!(objects.len(), predicted.len());
    let mut placed: Vec<(usize, Pose, crate::primitives::Polytope, Footprint, f64)> = Vec::new();
    let mut outcomes: Vec<ObjectOutcome> = Vec::new();
    let mut valid = true;

    for (j, (obj, pose)) in objects.iter().zip(predicted).enumerate() {
        if !valid {
            // placement preempted: later objects are not attempted
            outcomes.push(ObjectOutcome {
                settled: None,
                failure: None,
            });
            continue;
        }
        let mut release = *pose;
        release.translation.z += cfg.drop_height;
        let poly = obj.polytope().transformed(&release);
        let fp = Footprint::of(&poly);
        let fp_area = fp.area().max(1e-12);
        let bottom = poly.bottom_z();

        // highest support under the footprint: table or placed tops
        let mut contact_z = ws.table_height;
        for (_, _, _, pfp, ptop) in &placed {
            if fp.intersection_area(pfp) > 1e-10 && *ptop > contact_z {
                contact_z = *ptop;
            }
        }
        let drop = bottom - contact_z;
        let mut settled = release;
        settled.translation.z -= drop;
        let settled_poly = obj.polytope().transformed(&settled);

        // support fraction at the contact height
        let mut support_area = 0.0;
        if (contact_z - ws.table_height).abs() < 1e-9 {
            let table_fp = Footprint::square(0.0, 0.0, ws.table_half_extent);
            support_area += fp.intersection_area(&table_fp);
        }
        for (_, _, _, pfp, ptop) in &placed {
            if (ptop - contact_z).abs() < 1e-6 {
                support_area += fp.intersection_area(pfp);
            }
        }
        let support_fraction = (support_area / fp_area).min(1.0);

        let mut failure = None;
        // a drop blocked above the predicted height means the predicted
        // space is already occupied
        if settled.translation.z > pose.translation.z + cfg.blocked_rise {
            failure = Some(PlacementFailure::LateralOverlap);
        }
        if failure.is_none() && support_fraction < cfg.support_fraction {
            failure = Some(PlacementFailure::InsufficientSupport);
        }
        if failure.is_none() {
            for (_, _, ppoly, _, _) in &placed {
                if crate::primitives::sat_overlap(&settled_poly, ppoly)
                    > cfg.penetration_tolerance
                {
                    failure = Some(PlacementFailure::LateralOverlap);
                    break;
                }
            }
        }
        if failure.is_none() {
            let dx = settled.translation.x - pose.translation.x;
            let dy = settled.translation.y - pose.translation.y;
            if (dx * dx + dy * dy).sqrt() > cfg.settle_displacement {
                failure = Some(PlacementFailure::ExcessiveDisplacement);
            }
        }

        if let Some(f) = failure {
            valid = false;
            outcomes.push(ObjectOutcome {
                settled: None,
                failure: Some(f),
            });
        } else {
            let top = settled_poly.top_z();
            let settled_fp = Footprint::of(&settled_poly);
            placed.push((j, settled, settled_poly, settled_fp, top));
            outcomes.push(ObjectOutcome {
                settled: Some(settled),
                failure: None,
            });
        }
    }

    PlacementOutcome {
        objects: outcomes,
        physically_valid: valid,
        constraints: Vec::new(),
        success: false,
    }
}

// ---------------------------------------------------------------------------
// semantic classifiers

/// Least-squares 2D line through the centroid (principal direction of the
/// xy covariance). Returns (direction angle, max point distance).
pub fn fit_line_xy(points: &[(f64, f64)]) -> (f64, f64) {
    let n = points.len() as f64;
    let (mut mx, mut my) = (0.0, 0.0);
    for p in points {
        mx += p.0;
        my += p.1;
    }
    mx /= n;
    my /= n;
    let (mut sxx, mut sxy, mut syy) = (0.0, 0.0, 0.0);
    for p in points {
        let (dx, dy) = (p.0 - mx, p.1 - my);
        sxx += dx * dx;
        sxy += dx * dy;
        syy += dy * dy;
    }
    // principal eigenvector angle of [[sxx, sxy], [sxy, syy]]
    let theta = 0.5 * (2.0 * sxy).atan2(sxx - syy);
    let (s, c) = theta.sin_cos();
    let mut max_d = 0.0f64;
    for p in points {
        let d = (-(s) * (p.0 - mx) + c * (p.1 - my)).abs();
        max_d = max_d.max(d);
    }
    (theta, max_d)
}

/// Kasa algebraic circle fit: linear least squares on
/// `x^2 + y^2 + a x + b y + c = 0`. Returns (center, radius).
pub fn fit_circle_xy(points: &[(f64, f64)]) -> ((f64, f64), f64) {
    let n = points.len() as f64;
    let (mut sx, mut sy, mut sxx, mut sxy, mut syy, mut sxz, mut syz, mut sz) =
        (0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0);
    for p in points {
        let z = p.0 * p.0 + p.1 * p.1;
        sx += p.0;
        sy += p.1;
        sxx += p.0 * p.0;
        sxy += p.0 * p.1;
        syy += p.1 * p.1;
        sxz += p.0 * z;
        syz += p.1 * z;
        sz += z;
    }
    // normal equations for (a, b, c)
    let m = [
        [sxx, sxy, sx],
        [sxy, syy, sy],
        [sx, sy, n],
    ];
    let rhs = [-sxz, -syz, -sz];
    let det = |m: &[[f64; 3]; 3]| {
        m[0][0] * (m[1][1] * m[2][2] - m[1][2] * m[2][1])
            - m[0][1] * (m[1][0] * m[2][2] - m[1][2] * m[2][0])
            + m[0][2] * (m[1][0] * m[2][1] - m[1][1] * m[2][0])
    };
    let d = det(&m);
    let solve_col = |col: usize| {
        let mut mm = m;
        for r in 0..3 {
            mm[r][col] = rhs[r];
        }
        det(&mm) / d
    };
    let (a, b, c) = (solve_col(0), solve_col(1), solve_col(2));
    let center = (-a / 2.0, -b / 2.0);
    let radius = (center.0 * center.0 + center.1 * center.1 - c).max(0.0).sqrt();
    (center, radius)
}

/// Optimal 2D rigid alignment (rotation + translation, no scaling) of
/// `source` onto `target` in the least-squares sense. Returns (theta, tx, ty).
pub fn fit_rigid_2d(source: &[(f64, f64)], target: &[(f64, f64)]) -> (f64, f64, f64) {
    let n = source.len() as f64;
    let (mut smx, mut smy, mut tmx, mut tmy) = (0.0, 0.0, 0.0, 0.0);
    for (s, t) in source.iter().zip(target) {
        smx += s.0;
        smy += s.1;
        tmx += t.0;
        tmy += t.1;
    }
    smx /= n;
    smy /= n;
    tmx /= n;
    tmy /= n;
    let (mut dot, mut cross) = (0.0, 0.0);
    for (s, t) in source.iter().zip(target) {
        let (sx, sy) = (s.0 - smx, s.1 - smy);
        let (tx, ty) = (t.0 - tmx, t.1 - tmy);
        dot += sx * tx + sy * ty;
        cross += sx * ty - sy * tx;
    }
    let theta = cross.atan2(dot);
    let (sn, cs) = theta.sin_cos();
    let tx = tmx - (cs * smx - sn * smy);
    let ty = tmy - (sn * smx + cs * smy);
    (theta, tx, ty)
}

fn yaw_of(pose: &Pose) -> f64 {
    let f = pose.rotation.column(0);
    f[1].atan2(f[0])
}

/// Circular mean of yaw angles modulo 180 degrees.
fn mean_yaw_mod_pi(yaws: &[f64]) -> f64 {
    let (mut s, mut c) = (0.0, 0.0);
    for &y in yaws {
        s += (2.0 * y).sin();
        c += (2.0 * y).cos();
    }
    0.5 * s.atan2(c)
}

/// Per-constraint booleans for a physically settled arrangement. Constraint
/// order is fixed per shape; see the dataset manifest for the counts.
pub fn semantic_check(
    settled: &[Pose],
    objects: &[PrimitiveObject],
    spec: &StructureSpec,
    ws: &WorkspaceConfig,
    cfg: &EvalConfig,
) -> SimResult<Vec<(String, bool)>> {
    let centers: Vec<(f64, f64)> = settled
        .iter()
        .map(|p| (p.translation.x, p.translation.y))
        .collect();
    let centroid = {
        let n = centers.len() as f64;
        (
            centers.iter().map(|c| c.0).sum::<f64>() / n,
            centers.iter().map(|c| c.1).sum::<f64>() / n,
        )
    };
    let mut out: Vec<(String, bool)> = Vec::new();
    let orientation: f64;

    match spec.shape {
        ShapeClass::Line => {
            let (theta, max_d) = fit_line_xy(&centers);
            out.push(("line_fit".into(), max_d < cfg.fit_tolerance));
            // spacing uniformity along the fitted direction
            let (s, c) = theta.sin_cos();
            let mut proj: Vec<f64> = centers.iter().map(|p| c * p.0 + s * p.1).collect();
            proj.sort_by(|a, b| a.partial_cmp(b).unwrap());
            let gaps: Vec<f64> = proj.windows(2).map(|w| w[1] - w[0]).collect();
            let mean_gap = gaps.iter().sum::<f64>() / gaps.len() as f64;
            let uniform = gaps
                .iter()
                .all(|g| (g - mean_gap).abs() <= cfg.uniformity * mean_gap.max(1e-9));
            out.push(("line_spacing".into(), uniform));
            let length = proj.last().unwrap() - proj.first().unwrap();
            let in_range = length >= spec.scale * (1.0 - cfg.uniformity)
                && length <= spec.scale * (1.0 + cfg.uniformity);
            out.push(("line_length".into(), in_range));
            orientation = theta;
        }
        ShapeClass::Circle => {
            let (center, radius) = fit_circle_xy(&centers);
            let residual = centers
                .iter()
                .map(|p| {
                    (((p.0 - center.0).powi(2) + (p.1 - center.1).powi(2)).sqrt() - radius).abs()
                })
                .fold(0.0f64, f64::max);
            out.push(("circle_fit".into(), residual < cfg.fit_tolerance));
            let target_r = spec.scale * 0.5;
            let r_ok = radius >= target_r * (1.0 - cfg.uniformity)
                && radius <= target_r * (1.0 + cfg.uniformity);
            out.push(("circle_radius".into(), r_ok));
            // angular uniformity
            let mut angles: Vec<f64> = centers
                .iter()
                .map(|p| (p.1 - center.1).atan2(p.0 - center.0))
                .collect();
            angles.sort_by(|a, b| a.partial_cmp(b).unwrap());
            let expected = std::f64::consts::TAU / centers.len() as f64;
            let mut ok = true;
            for i in 0..angles.len() {
                let next = if i + 1 < angles.len() {
                    angles[i + 1]
                } else {
                    angles[0] + std::f64::consts::TAU
                };
                let gap = next - angles[i];
                if (gap - expected).abs() > cfg.uniformity * expected {
                    ok = false;
                    break;
                }
            }
            out.push(("circle_angles".into(), ok));
            // orientation from the first object's bearing
            orientation = (centers[0].1 - center.1).atan2(centers[0].0 - center.0);
        }
        ShapeClass::Tower => {
            let coax = centers
                .iter()
                .map(|p| ((p.0 - centroid.0).powi(2) + (p.1 - centroid.1).powi(2)).sqrt())
                .fold(0.0f64, f64::max);
            out.push(("tower_coaxial".into(), coax < cfg.fit_tolerance));
            // contact chain: exactly one object on the table, each other
            // object resting on some other tower member
            let polys: Vec<_> = objects
                .iter()
                .zip(settled)
                .map(|(o, p)| o.polytope().transformed(p))
                .collect();
            let mut on_table = 0usize;
            let mut chain_ok = true;
            for (i, poly) in polys.iter().enumerate() {
                let bottom = poly.bottom_z();
                if (bottom - ws.table_height).abs() < cfg.contact_gap {
                    on_table += 1;
                    continue;
                }
                let supported = polys.iter().enumerate().any(|(k, other)| {
                    k != i && (other.top_z() - bottom).abs() < cfg.contact_gap
                });
                if !supported {
                    chain_ok = false;
                }
            }
            out.push((
                "tower_contact".into(),
                chain_ok && on_table == 1,
            ));
            let yaws: Vec<f64> = settled.iter().map(yaw_of).collect();
            orientation = mean_yaw_mod_pi(&yaws);
        }
        ShapeClass::Dinner => {
            let mut slots = dinner_slots(objects, spec.scale);
            // center like the generator does
            let n = slots.len() as f64;
            let (mut cx, mut cy) = (0.0, 0.0);
            for s in &slots {
                cx += s[0];
                cy += s[1];
            }
            cx /= n;
            cy /= n;
            for s in &mut slots {
                s[0] -= cx;
                s[1] -= cy;
            }
            let slot_pts: Vec<(f64, f64)> = slots.iter().map(|s| (s[0], s[1])).collect();
            let (theta, tx, ty) = fit_rigid_2d(&slot_pts, &centers);
            let (sn, cs) = theta.sin_cos();
            for (i, s) in slot_pts.iter().enumerate() {
                let px = cs * s.0 - sn * s.1 + tx;
                let py = sn * s.0 + cs * s.1 + ty;
                let d = ((centers[i].0 - px).powi(2) + (centers[i].1 - py).powi(2)).sqrt();
                let role = match i {
                    0 => "plate",
                    1 => "cup",
                    2 => "fork",
                    _ => "knife",
                };
                out.push((format!("dinner_slot_{role}"), d < cfg.slot_tolerance));
            }
            // orientation from the plate-to-cup bearing
            orientation =
                (centers[1].1 - centers[0].1).atan2(centers[1].0 - centers[0].0);
        }
    }

    out.push((
        "position_bin".into(),
        ws.in_bin(spec.pos_bin.0, centroid.0) && ws.in_bin(spec.pos_bin.1, centroid.1),
    ));
    out.push((
        "rotation_bin".into(),
        ws.in_rot_bin(spec.rot_bin, orientation),
    ));
    Ok(out)
}

/// Full judgment of one predicted rearrangement against a record: settle,
/// then semantics; success requires both.
pub fn judge(
    record: &SceneRecord,
    predicted_goals: &[Pose],
    ws: &WorkspaceConfig,
    cfg: &EvalConfig,
) -> SimResult<PlacementOutcome> {
    let objects: Vec<PrimitiveObject> = record.objects.iter().map(|o| o.object).collect();
    let primitive_poses: Vec<Pose> = predicted_goals
        .iter()
        .enumerate()
        .map(|(j, g)| predicted_primitive_pose(record, j, g))
        .collect();
    let mut outcome = execute_placements(&objects, &primitive_poses, ws, cfg);
    if outcome.physically_valid {
        let settled: Vec<Pose> = outcome
            .objects
            .iter()
            .map(|o| o.settled.expect("valid placement has settled pose"))
            .collect();
        outcome.constraints = semantic_check(&settled, &objects, &record.spec, ws, cfg)?;
        outcome.success = outcome.constraints.iter().all(|(_, ok)| *ok);
    }
    Ok(outcome)
}

/// Judgment bypassing the cloud-frame conversion (for ground-truth poses).
pub fn judge_primitive_poses(
    record: &SceneRecord,
    primitive_poses: &[Pose],
    ws: &WorkspaceConfig,
    cfg: &EvalConfig,
) -> SimResult<PlacementOutcome> {
    let objects: Vec<PrimitiveObject> = record.objects.iter().map(|o| o.object).collect();
    let mut outcome = execute_placements(&objects, primitive_poses, ws, cfg);
    if outcome.physically_valid {
        let settled: Vec<Pose> = outcome
            .objects
            .iter()
            .map(|o| o.settled.expect("valid placement has settled pose"))
            .collect();
        outcome.constraints = semantic_check(&settled, &objects, &record.spec, ws, cfg)?;
        outcome.success = outcome.constraints.iter().all(|(_, ok)| *ok);
    }
    Ok(outcome)
}

// ---------------------------------------------------------------------------
// aggregation

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SuccessRates {
    pub per_shape: Vec<(String, usize, usize, f64)>,
    pub overall: (usize, usize, f64),
}

/// `(shape, successes, trials, rate)` per shape plus the overall rate.
pub fn success_rate(outcomes: &[(ShapeClass, bool)]) -> SimResult<SuccessRates> {
    if outcomes.is_empty() {
        return Err(SimError::EmptyGroup("no outcomes".into()));
    }
    let mut per_shape = Vec::new();
    for shape in ShapeClass::ALL {
        let group: Vec<bool> = outcomes
            .iter()
            .filter(|(s, _)| *s == shape)
            .map(|(_, ok)| *ok)
            .collect();
        if group.is_empty() {
            continue;
        }
        let wins = group.iter().filter(|&&b| b).count();
        per_shape.push((
            shape.name().to_string(),
            wins,
            group.len(),
            wins as f64 / group.len() as f64,
        ));
    }
    if per_shape.is_empty() {
        return Err(SimError::EmptyGroup("no shape groups".into()));
    }
    let wins = outcomes.iter().filter(|(_, ok)| *ok).count();
    Ok(SuccessRates {
        per_shape,
        overall: (wins, outcomes.len(), wins as f64 / outcomes.len() as f64),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::primitives::PrimitiveKind;
    use nalgebra::Vector3;

    fn ws() -> WorkspaceConfig {
        WorkspaceConfig::default()
    }

    fn boxy(w: f64, d: f64, h: f64) -> PrimitiveObject {
        PrimitiveObject::new(PrimitiveKind::Box, [w, d, h])
    }

    #[test]
    fn single_box_on_table_settles_valid() {
        let obj = boxy(0.05, 0.05, 0.04);
        let pred = Pose::from_translation(Vector3::new(0.1, 0.0, 0.02));
        let out = execute_placements(&[obj], &[pred], &ws(), &EvalConfig::default());
        assert!(out.physically_valid);
        let settled = out.objects[0].settled.unwrap();
        assert!((settled.translation.z - 0.02).abs() < 1e-12);
    }

    #[test]
    fn identical_predictions_preempt_the_second_object() {
        let obj = boxy(0.05, 0.05, 0.04);
        let pred = Pose::from_translation(Vector3::new(0.0, 0.0, 0.02));
        let out = execute_placements(
            &[obj, obj],
            &[pred, pred],
            &ws(),
            &EvalConfig::default(),
        );
        assert!(!out.physically_valid);
        assert!(out.objects[0].failure.is_none());
        // the drop stops on top of the first box, far above the predicted
        // height: the predicted space is occupied
        assert_eq!(
            out.objects[1].failure,
            Some(PlacementFailure::LateralOverlap)
        );
    }

    #[test]
    fn correct_tower_prediction_settles_on_top() {
        let base = boxy(0.08, 0.08, 0.04);
        let top = boxy(0.05, 0.05, 0.05);
        let preds = [
            Pose::from_translation(Vector3::new(0.0, 0.0, 0.02)),
            Pose::from_translation(Vector3::new(0.0, 0.0, 0.04 + 0.025)),
        ];
        let out = execute_placements(&[base, top], &preds, &ws(), &EvalConfig::default());
        assert!(out.physically_valid, "{:?}", out.objects[1].failure);
        let settled = out.objects[1].settled.unwrap();
        assert!((settled.translation.z - 0.065).abs() < 1e-9);
    }

    #[test]
    fn hanging_object_fails_support() {
        let obj = boxy(0.05, 0.05, 0.04);
        let base = boxy(0.05, 0.05, 0.04);
        // second box predicted mostly off the first one's edge
        let preds = [
            Pose::from_translation(Vector3::new(0.0, 0.0, 0.02)),
            Pose::from_translation(Vector3::new(0.045, 0.0, 0.06)),
        ];
        let out = execute_placements(&[base, obj], &preds, &ws(), &EvalConfig::default());
        assert!(!out.physically_valid);
        assert_eq!(
            out.objects[1].failure,
            Some(PlacementFailure::InsufficientSupport)
        );
    }

    #[test]
    fn side_by_side_interpenetration_is_lateral_overlap() {
        let a = boxy(0.06, 0.06, 0.05);
        let preds = [
            Pose::from_translation(Vector3::new(0.0, 0.0, 0.025)),
            Pose::from_translation(Vector3::new(0.04, 0.0, 0.025)),
        ];
        let out = execute_placements(&[a, a], &preds, &ws(), &EvalConfig::default());
        assert!(!out.physically_valid);
        assert_eq!(
            out.objects[1].failure,
            Some(PlacementFailure::LateralOverlap)
        );
    }

    #[test]
    fn line_fit_flags_displaced_centroid() {
        let spec = StructureSpec {
            shape: ShapeClass::Line,
            size: structdiff_core::vocab::SizeClass::Medium,
            scale: 0.25,
            object_count: 3,
            pos_bin: (1, 1),
            rot_bin: 0,
            anchor: [-0.1, -0.1],
            yaw: 0.0,
        };
        let objs = vec![boxy(0.04, 0.04, 0.04); 3];
        let mk = |dy: f64| {
            vec![
                Pose::from_translation(Vector3::new(-0.225, -0.1, 0.02)),
                Pose::from_translation(Vector3::new(-0.1, -0.1 + dy, 0.02)),
                Pose::from_translation(Vector3::new(0.025, -0.1, 0.02)),
            ]
        };
        let good = semantic_check(&mk(0.0), &objs, &spec, &ws(), &EvalConfig::default()).unwrap();
        assert!(good.iter().find(|(n, _)| n == "line_fit").unwrap().1);
        let bad = semantic_check(&mk(0.05), &objs, &spec, &ws(), &EvalConfig::default()).unwrap();
        assert!(!bad.iter().find(|(n, _)| n == "line_fit").unwrap().1);
    }

    #[test]
    fn success_rates_aggregate() {
        let outcomes = vec![
            (ShapeClass::Line, true),
            (ShapeClass::Line, false),
            (ShapeClass::Tower, true),
        ];
        let rates = success_rate(&outcomes).unwrap();
        assert_eq!(rates.overall, (2, 3, 2.0 / 3.0));
        let line = rates.per_shape.iter().find(|r| r.0 == "line").unwrap();
        assert_eq!((line.1, line.2), (1, 2));
        assert!((line.3 - 0.5).abs() < 1e-12);
        assert!(success_rate(&[]).is_err());
    }

    #[test]
    fn circle_fit_recovers_exact_circle() {
        let pts: Vec<(f64, f64)> = (0..6)
            .map(|i| {
                let a = std::f64::consts::TAU * i as f64 / 6.0 + 0.3;
                (0.1 + 0.12 * a.cos(), -0.05 + 0.12 * a.sin())
            })
            .collect();
        let (c, r) = fit_circle_xy(&pts);
        assert!((c.0 - 0.1).abs() < 1e-9 && (c.1 + 0.05).abs() < 1e-9);
        assert!((r - 0.12).abs() < 1e-9);
    }

    #[test]
    fn rigid_fit_recovers_known_transform() {
        let src = vec![(0.0, 0.0), (0.1, 0.0), (0.0, 0.07), (-0.06, -0.02)];
        let theta = 0.6f64;
        let (s, c) = theta.sin_cos();
        let tgt: Vec<(f64, f64)> = src
            .iter()
            .map(|p| (c * p.0 - s * p.1 + 0.2, s * p.0 + c * p.1 - 0.1))
            .collect();
        let (th, tx, ty) = fit_rigid_2d(&src, &tgt);
        assert!((th - theta).abs() < 1e-9);
        assert!((tx - 0.2).abs() < 1e-9 && (ty + 0.1).abs() < 1e-9);
    }
}
