//! Partial-view point clouds from analytic surfaces: dense area-weighted
//! surface sampling, back-face removal against the camera, occlusion rays
//! against every other object, then farthest-point downsampling.

use nalgebra::{Matrix3, Vector3};
use rand::Rng;
use serde::{Deserialize, Serialize};
use structdiff_core::encoders::farthest_point_indices;
use structdiff_core::geometry::Pose;

use crate::error::{SimError, SimResult};
use crate::primitives::{PrimitiveKind, PrimitiveObject};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RenderConfig {
    /// Dense candidate points sampled on each object's surface.
    pub dense_samples: usize,
    /// Points kept per cloud after farthest-point downsampling.
    pub points: usize,
    /// Below this many visible points the object counts as fully occluded.
    pub min_visible: usize,
    /// Camera elevation above the table plane (radians).
    pub camera_elevation: f64,
    /// Camera distance from the table center (meters).
    pub camera_range: f64,
}

impl Default for RenderConfig {
    fn default() -> Self {
        RenderConfig {
            dense_samples: 1024,
            points: 128,
            min_visible: 16,
            camera_elevation: std::f64::consts::FRAC_PI_4,
            camera_range: 1.0,
        }
    }
}

/// Camera pose looking at `target` from the given azimuth/elevation/range.
/// Columns are (right, up, forward); only the position matters for
/// visibility.
pub fn camera_pose(azimuth: f64, elevation: f64, range: f64, target: Vector3<f64>) -> Pose {
    let dir = Vector3::new(
        elevation.cos() * azimuth.cos(),
        elevation.cos() * azimuth.sin(),
        elevation.sin(),
    );
    let position = target + dir * range;
    let forward = (target - position).normalize();
    let world_up = Vector3::z();
    let right = forward.cross(&world_up).normalize();
    let up = forward.cross(&right);
    Pose {
        translation: position,
        rotation: Matrix3::from_columns(&[right, up, forward]),
    }
}

/// Surface point with outward normal, in the object frame.
struct SurfaceSample {
    point: Vector3<f64>,
    normal: Vector3<f64>,
}

fn allocate(budget: usize, areas: &[f64]) -> Vec<usize> {
    let total: f64 = areas.iter().sum();
    areas
        .iter()
        .map(|a| ((budget as f64) * a / total).round().max(1.0) as usize)
        .collect()
}

fn sample_surface<R: Rng>(obj: &PrimitiveObject, budget: usize, rng: &mut R) -> Vec<SurfaceSample> {
    let mut out = Vec::with_capacity(budget + 8);
    match obj.kind {
        PrimitiveKind::Box | PrimitiveKind::Utensil => {
            let (w, d, h) = (obj.dims[0], obj.dims[1], obj.dims[2]);
            let faces = [
                (Vector3::x(), d * h),
                (-Vector3::x(), d * h),
                (Vector3::y(), w * h),
                (-Vector3::y(), w * h),
                (Vector3::z(), w * d),
                (-Vector3::z(), w * d),
            ];
            let areas: Vec<f64> = faces.iter().map(|f| f.1).collect();
            for (fi, count) in allocate(budget, &areas).into_iter().enumerate() {
                let normal = faces[fi].0;
                for _ in 0..count {
                    let (u, v) = (rng.gen_range(-0.5..0.5), rng.gen_range(-0.5..0.5));
                    let point = if normal.x != 0.0 {
                        Vector3::new(normal.x * w * 0.5, u * d, v * h)
                    } else if normal.y != 0.0 {
                        Vector3::new(u * w, normal.y * d * 0.5, v * h)
                    } else {
                        Vector3::new(u * w, v * d, normal.z * h * 0.5)
                    };
                    out.push(SurfaceSample { point, normal });
                }
            }
        }
        PrimitiveKind::Cylinder | PrimitiveKind::Plate => {
            let (r, h) = (obj.dims[0], obj.dims[1]);
            let areas = [
                std::f64::consts::TAU * r * h,
                std::f64::consts::PI * r * r,
                std::f64::consts::PI * r * r,
            ];
            let counts = allocate(budget, &areas);
            for _ in 0..counts[0] {
                let a = rng.gen_range(0.0..std::f64::consts::TAU);
                let z = rng.gen_range(-0.5..0.5) * h;
                out.push(SurfaceSample {
                    point: Vector3::new(r * a.cos(), r * a.sin(), z),
                    normal: Vector3::new(a.cos(), a.sin(), 0.0),
                });
            }
            for (ci, sign) in [(1usize, 1.0f64), (2, -1.0)] {
                for _ in 0..counts[ci] {
                    let a = rng.gen_range(0.0..std::f64::consts::TAU);
                    let rad = r * rng.gen_range(0.0f64..1.0).sqrt();
                    out.push(SurfaceSample {
                        point: Vector3::new(rad * a.cos(), rad * a.sin(), sign * h * 0.5),
                        normal: Vector3::new(0.0, 0.0, sign),
                    });
                }
            }
        }
        PrimitiveKind::Bowl => {
            let (r, h, w) = (obj.dims[0], obj.dims[1], obj.dims[2]);
            let ri = r - w;
            let areas = [
                std::f64::consts::TAU * r * h,            // outer wall
                std::f64::consts::TAU * ri * (h - w),     // inner wall
                std::f64::consts::PI * (r * r - ri * ri), // rim
                std::f64::consts::PI * r * r,             // bottom
                std::f64::consts::PI * ri * ri,           // inner floor
            ];
            let counts = allocate(budget, &areas);
            for _ in 0..counts[0] {
                let a = rng.gen_range(0.0..std::f64::consts::TAU);
                let z = rng.gen_range(-0.5..0.5) * h;
                out.push(SurfaceSample {
                    point: Vector3::new(r * a.cos(), r * a.sin(), z),
                    normal: Vector3::new(a.cos(), a.sin(), 0.0),
                });
            }
            for _ in 0..counts[1] {
                let a = rng.gen_range(0.0..std::f64::consts::TAU);
                let z = rng.gen_range(-h * 0.5 + w..h * 0.5);
                out.push(SurfaceSample {
                    point: Vector3::new(ri * a.cos(), ri * a.sin(), z),
                    normal: Vector3::new(-a.cos(), -a.sin(), 0.0),
                });
            }
            for _ in 0..counts[2] {
                let a = rng.gen_range(0.0..std::f64::consts::TAU);
                let rad = (ri * ri + (r * r - ri * ri) * rng.gen_range(0.0f64..1.0)).sqrt();
                out.push(SurfaceSample {
                    point: Vector3::new(rad * a.cos(), rad * a.sin(), h * 0.5),
                    normal: Vector3::z(),
                });
            }
            for _ in 0..counts[3] {
                let a = rng.gen_range(0.0..std::f64::consts::TAU);
                let rad = r * rng.gen_range(0.0f64..1.0).sqrt();
                out.push(SurfaceSample {
                    point: Vector3::new(rad * a.cos(), rad * a.sin(), -h * 0.5),
                    normal: -Vector3::z(),
                });
            }
            for _ in 0..counts[4] {
                let a = rng.gen_range(0.0..std::f64::consts::TAU);
                let rad = ri * rng.gen_range(0.0f64..1.0).sqrt();
                out.push(SurfaceSample {
                    point: Vector3::new(rad * a.cos(), rad * a.sin(), -h * 0.5 + w),
                    normal: Vector3::z(),
                });
            }
        }
    }
    out
}

/// Does the segment `origin + t * dir, t in (t_eps, t_max)` hit the solid
/// primitive (bowls act as solid cylinders)?
fn ray_hits(
    obj: &PrimitiveObject,
    pose: &Pose,
    origin: &Vector3<f64>,
    dir: &Vector3<f64>,
    t_max: f64,
) -> bool {
    let t_eps = 1e-6;
    let rt = pose.rotation.transpose();
    let o = rt * (origin - pose.translation);
    let d = rt * dir;
    match obj.kind {
        PrimitiveKind::Box | PrimitiveKind::Utensil => {
            let half = [obj.dims[0] * 0.5, obj.dims[1] * 0.5, obj.dims[2] * 0.5];
            let mut t0: f64 = t_eps;
            let mut t1: f64 = t_max - t_eps;
            for k in 0..3 {
                let (ok, dk, hk) = (o[k], d[k], half[k]);
                if dk.abs() < 1e-15 {
                    if ok.abs() > hk {
                        return false;
                    }
                } else {
                    let mut ta = (-hk - ok) / dk;
                    let mut tb = (hk - ok) / dk;
                    if ta > tb {
                        std::mem::swap(&mut ta, &mut tb);
                    }
                    t0 = t0.max(ta);
                    t1 = t1.min(tb);
                    if t0 > t1 {
                        return false;
                    }
                }
            }
            true
        }
        _ => {
            let (r, h) = (obj.dims[0], obj.height() * 0.5);
            // z slab
            let (mut t0, mut t1) = (t_eps, t_max - t_eps);
            if d.z.abs() < 1e-15 {
                if o.z.abs() > h {
                    return false;
                }
            } else {
                let mut ta = (-h - o.z) / d.z;
                let mut tb = (h - o.z) / d.z;
                if ta > tb {
                    std::mem::swap(&mut ta, &mut tb);
                }
                t0 = t0.max(ta);
                t1 = t1.min(tb);
                if t0 > t1 {
                    return false;
                }
            }
            // infinite-cylinder quadratic in xy
            let a = d.x * d.x + d.y * d.y;
            let b = 2.0 * (o.x * d.x + o.y * d.y);
            let c = o.x * o.x + o.y * o.y - r * r;
            if a < 1e-15 {
                return c <= 0.0; // vertical ray inside/outside the circle
            }
            let disc = b * b - 4.0 * a * c;
            if disc < 0.0 {
                return false;
            }
            let sq = disc.sqrt();
            let ta = (-b - sq) / (2.0 * a);
            let tb = (-b + sq) / (2.0 * a);
            t0.max(ta) <= t1.min(tb)
        }
    }
}

/// Renders the partial cloud of `objects[target]` as seen from
/// `camera_position`, with all other listed objects acting as occluders.
/// Coordinates are rounded to 1e-6 m (still on the analytic surface within
/// the sampling tolerance).
pub fn render_partial_cloud<R: Rng>(
    target: usize,
    objects: &[(PrimitiveObject, Pose)],
    camera_position: &Vector3<f64>,
    cfg: &RenderConfig,
    rng: &mut R,
) -> SimResult<Vec<[f64; 3]>> {
    let (obj, pose) = &objects[target];
    let dense = sample_surface(obj, cfg.dense_samples, rng);
    let mut visible: Vec<[f64; 3]> = Vec::with_capacity(dense.len() / 2);
    'next_point: for s in &dense {
        let world_p = pose.rotation * s.point + pose.translation;
        let world_n = pose.rotation * s.normal;
        let to_cam = camera_position - world_p;
        if world_n.dot(&to_cam) <= 1e-12 {
            continue; // back face
        }
        for (i, (occ, occ_pose)) in objects.iter().enumerate() {
            if i == target {
                continue;
            }
            if ray_hits(occ, occ_pose, &world_p, &to_cam, 1.0) {
                continue 'next_point;
            }
        }
        visible.push([
            (world_p.x * 1e6).round() / 1e6,
            (world_p.y * 1e6).round() / 1e6,
            (world_p.z * 1e6).round() / 1e6,
        ]);
    }
    if visible.len() < cfg.min_visible {
        return Err(SimError::FullyOccluded {
            object: target,
            visible: visible.len(),
        });
    }
    if visible.len() > cfg.points {
        let idx = farthest_point_indices(&visible, cfg.points);
        visible = idx.into_iter().map(|i| visible[i]).collect();
    }
    Ok(visible)
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::Point3;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn upright(x: f64, y: f64, z: f64) -> Pose {
        Pose::from_translation(Vector3::new(x, y, z))
    }

    #[test]
    fn box_seen_from_plus_x_has_no_minus_x_face_points() {
        let b = PrimitiveObject::new(PrimitiveKind::Box, [0.06, 0.06, 0.06]);
        let objects = vec![(b, upright(0.0, 0.0, 0.03))];
        let cam = Vector3::new(1.0, 0.0, 0.03);
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let cloud =
            render_partial_cloud(0, &objects, &cam, &RenderConfig::default(), &mut rng).unwrap();
        for p in &cloud {
            assert!(
                p[0] > -0.03 + 1e-9,
                "point {p:?} lies on the hidden -x face"
            );
        }
    }

    #[test]
    fn object_behind_larger_occluder_is_fully_occluded() {
        let small = PrimitiveObject::new(PrimitiveKind::Box, [0.03, 0.03, 0.03]);
        let wall = PrimitiveObject::new(PrimitiveKind::Box, [0.02, 0.5, 0.5]);
        let objects = vec![
            (small, upright(0.0, 0.0, 0.015)),
            (wall, upright(0.2, 0.0, 0.25)),
        ];
        let cam = Vector3::new(1.0, 0.0, 0.1);
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let got = render_partial_cloud(0, &objects, &cam, &RenderConfig::default(), &mut rng);
        assert!(matches!(got, Err(SimError::FullyOccluded { .. })));
    }

    #[test]
    fn unoccluded_box_shows_at_most_three_faces() {
        let b = PrimitiveObject::new(PrimitiveKind::Box, [0.06, 0.06, 0.06]);
        let objects = vec![(b, upright(0.0, 0.0, 0.03))];
        let cam = Vector3::new(0.7, 0.5, 0.6);
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let cfg = RenderConfig {
            points: 512,
            dense_samples: 2048,
            ..RenderConfig::default()
        };
        let cloud = render_partial_cloud(0, &objects, &cam, &cfg, &mut rng).unwrap();
        // classify each point by its unique face, skipping edge-ambiguous ones
        let mut faces = std::collections::HashSet::new();
        for p in &cloud {
            let local = [p[0], p[1], p[2] - 0.03];
            let mut hits = Vec::new();
            for k in 0..3 {
                if (local[k] - 0.03).abs() < 1e-5 {
                    hits.push(2 * k);
                }
                if (local[k] + 0.03).abs() < 1e-5 {
                    hits.push(2 * k + 1);
                }
            }
            if hits.len() == 1 {
                faces.insert(hits[0]);
            }
        }
        assert!(faces.len() <= 3, "visible faces: {faces:?}");
        // the +x, +y and +z faces must be the visible ones from this camera
        assert!(faces.contains(&0) && faces.contains(&2) && faces.contains(&4));
    }

    #[test]
    fn rendered_points_lie_on_the_analytic_surface() {
        let objs = [
            PrimitiveObject::new(PrimitiveKind::Cylinder, [0.035, 0.09, 0.0]),
            PrimitiveObject::new(PrimitiveKind::Bowl, [0.05, 0.05, 0.006]),
            PrimitiveObject::new(PrimitiveKind::Utensil, [0.14, 0.02, 0.015]),
        ];
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        for (i, obj) in objs.iter().enumerate() {
            let pose = Pose::from_yaw(0.6 * i as f64, Vector3::new(0.1, -0.05, obj.height() * 0.5));
            let objects = vec![(*obj, pose)];
            let cam = Vector3::new(0.7, 0.7, 0.7);
            let cloud =
                render_partial_cloud(0, &objects, &cam, &RenderConfig::default(), &mut rng)
                    .unwrap();
            for p in &cloud {
                let local = pose.rotation.transpose()
                    * (Vector3::new(p[0], p[1], p[2]) - pose.translation);
                let d = obj.surface_distance(&Point3::from(local));
                assert!(d <= 1e-6, "point {p:?} off surface by {d:e}");
            }
        }
    }

    #[test]
    fn rendering_is_deterministic_under_seed() {
        let b = PrimitiveObject::new(PrimitiveKind::Cylinder, [0.03, 0.06, 0.0]);
        let objects = vec![(b, upright(0.0, 0.1, 0.03))];
        let cam = Vector3::new(0.6, -0.3, 0.8);
        let a = render_partial_cloud(
            0,
            &objects,
            &cam,
            &RenderConfig::default(),
            &mut ChaCha8Rng::seed_from_u64(9),
        )
        .unwrap();
        let b2 = render_partial_cloud(
            0,
            &objects,
            &cam,
            &RenderConfig::default(),
            &mut ChaCha8Rng::seed_from_u64(9),
        )
        .unwrap();
        assert_eq!(a, b2);
    }

    #[test]
    fn camera_pose_looks_at_target() {
        let target = Vector3::new(0.0, 0.0, 0.0);
        let cam = camera_pose(0.7, std::f64::consts::FRAC_PI_4, 1.0, target);
        assert!((cam.translation.norm() - 1.0).abs() < 1e-12);
        assert!((cam.translation.z - (0.5f64).sqrt()).abs() < 1e-9);
        let forward: Vector3<f64> = cam.rotation.column(2).into();
        let expect = (target - cam.translation).normalize();
        assert!((forward - expect).norm() < 1e-9);
        assert!(cam.rotation_valid(1e-9));
    }
}
