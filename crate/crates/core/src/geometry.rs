//! SE(3) pose algebra, the 6D rotation construction, and point-cloud
//! transforms.
//!
//! The world frame is z-up with the table surface at z = table height. Poses
//! compose with homogeneous-transform semantics; all operations here are pure
//! functions over immutable values.

use nalgebra::{Matrix3, Point3, Vector3};
use serde::{Deserialize, Serialize};

use crate::error::{CoreError, CoreResult};

/// Norm threshold below which a 6D basis vector counts as degenerate.
pub const DEGENERACY_EPS: f64 = 1e-9;

/// A rigid SE(3) transform: translation in meters plus a rotation matrix.
///
/// Invariants: `rotation` is orthonormal with determinant +1 (within 1e-6).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Pose {
    pub translation: Vector3<f64>,
    pub rotation: Matrix3<f64>,
}

impl Pose {
    pub fn identity() -> Self {
        Pose {
            translation: Vector3::zeros(),
            rotation: Matrix3::identity(),
        }
    }

    pub fn new(translation: Vector3<f64>, rotation: Matrix3<f64>) -> Self {
        Pose {
            translation,
            rotation,
        }
    }

    pub fn from_translation(translation: Vector3<f64>) -> Self {
        Pose {
            translation,
            rotation: Matrix3::identity(),
        }
    }

    /// Rotation about +z by `yaw` radians.
    pub fn from_yaw(yaw: f64, translation: Vector3<f64>) -> Self {
        let (s, c) = yaw.sin_cos();
        Pose {
            translation,
            rotation: Matrix3::new(c, -s, 0.0, s, c, 0.0, 0.0, 0.0, 1.0),
        }
    }

    /// Apply the transform to a point: `R p + t`.
    pub fn transform_point(&self, p: &Point3<f64>) -> Point3<f64> {
        Point3::from(self.rotation * p.coords + self.translation)
    }

    /// Apply only the rotation part to a direction vector.
    pub fn transform_vector(&self, v: &Vector3<f64>) -> Vector3<f64> {
        self.rotation * v
    }

    /// Checks the rotation invariants: `R^T R = I` and `det R = +1` within `tol`.
    pub fn rotation_valid(&self, tol: f64) -> bool {
        let gram = self.rotation.transpose() * self.rotation;
        let id = Matrix3::identity();
        let ortho_err = (gram - id).abs().max();
        let det_err = (self.rotation.determinant() - 1.0).abs();
        ortho_err <= tol && det_err <= tol
    }

    /// Serializes as 12 numbers: translation then rotation row-major.
    pub fn to_flat(&self) -> [f64; 12] {
        let t = self.translation;
        let r = self.rotation;
        [
            t.x,
            t.y,
            t.z,
            r[(0, 0)],
            r[(0, 1)],
            r[(0, 2)],
            r[(1, 0)],
            r[(1, 1)],
            r[(1, 2)],
            r[(2, 0)],
            r[(2, 1)],
            r[(2, 2)],
        ]
    }

    pub fn from_flat(v: &[f64; 12]) -> Self {
        Pose {
            translation: Vector3::new(v[0], v[1], v[2]),
            rotation: Matrix3::new(v[3], v[4], v[5], v[6], v[7], v[8], v[9], v[10], v[11]),
        }
    }
}

impl Serialize for Pose {
    fn serialize<S: serde::Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        self.to_flat().serialize(serializer)
    }
}

impl<'de> Deserialize<'de> for Pose {
    fn deserialize<D: serde::Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let v = <[f64; 12]>::deserialize(deserializer)?;
        Ok(Pose::from_flat(&v))
    }
}

/// Flat 9-D diffusion state per object: translation plus two rotation-basis
/// candidate vectors. Arbitrary reals mid-diffusion; convertible to a [`Pose`]
/// iff the basis is non-degenerate.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PoseVector {
    pub t: Vector3<f64>,
    pub a: Vector3<f64>,
    pub b: Vector3<f64>,
}

impl PoseVector {
    pub fn zeros() -> Self {
        PoseVector {
            t: Vector3::zeros(),
            a: Vector3::zeros(),
            b: Vector3::zeros(),
        }
    }

    pub fn from_pose(pose: &Pose) -> Self {
        PoseVector {
            t: pose.translation,
            a: pose.rotation.column(0).into(),
            b: pose.rotation.column(1).into(),
        }
    }

    pub fn to_flat(&self) -> [f64; 9] {
        [
            self.t.x, self.t.y, self.t.z, self.a.x, self.a.y, self.a.z, self.b.x, self.b.y,
            self.b.z,
        ]
    }

    pub fn from_flat(v: &[f64]) -> Self {
        debug_assert!(v.len() == 9);
        PoseVector {
            t: Vector3::new(v[0], v[1], v[2]),
            a: Vector3::new(v[3], v[4], v[5]),
            b: Vector3::new(v[6], v[7], v[8]),
        }
    }

    /// Converts to a [`Pose`] via [`rotation_from_6d`].
    pub fn to_pose(&self) -> CoreResult<Pose> {
        Ok(Pose {
            translation: self.t,
            rotation: rotation_from_6d(&self.a, &self.b)?,
        })
    }
}

/// Per-object partial point cloud with an optional per-point feature block
/// (for example a one-hot object-id channel).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PointCloud {
    pub points: Vec<[f64; 3]>,
    /// Per-point features, one row per point; `feature_width` columns each.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub features: Option<Vec<Vec<f64>>>,
}

impl PointCloud {
    pub fn new(points: Vec<[f64; 3]>) -> Self {
        PointCloud {
            points,
            features: None,
        }
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    /// Arithmetic mean of the points.
    pub fn centroid(&self) -> CoreResult<Vector3<f64>> {
        if self.points.is_empty() {
            return Err(CoreError::EmptyCloud);
        }
        let mut sum = Vector3::zeros();
        for p in &self.points {
            sum += Vector3::new(p[0], p[1], p[2]);
        }
        Ok(sum / self.points.len() as f64)
    }
}

/// Per-object partial point clouds with segment identity, table frame, and
/// camera provenance. Object order is the rearrangement order; it fixes the
/// token position index of each object.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SegmentedScene {
    /// `(object id, cloud)` in rearrangement order. Ids unique, clouds non-empty.
    pub objects: Vec<(u32, PointCloud)>,
    pub table_height: f64,
    pub camera_pose: Pose,
}

impl SegmentedScene {
    pub fn object_count(&self) -> usize {
        self.objects.len()
    }

    /// Validates the structural invariants (unique ids, non-empty clouds).
    pub fn validate(&self) -> CoreResult<()> {
        if self.objects.is_empty() {
            return Err(CoreError::EmptyScene);
        }
        let mut ids: Vec<u32> = self.objects.iter().map(|(id, _)| *id).collect();
        ids.sort_unstable();
        ids.dedup();
        if ids.len() != self.objects.len() {
            return Err(CoreError::SequenceTooLong(
                "duplicate object ids in scene".into(),
            ));
        }
        for (_, cloud) in &self.objects {
            if cloud.is_empty() {
                return Err(CoreError::EmptyCloud);
            }
        }
        Ok(())
    }
}

/// Builds a rotation matrix from two 3-vectors by Gram-Schmidt: the columns
/// are `c1 = a/|a|`, `c2 = normalize(b - (b.c1)c1)`, `c3 = c1 x c2`.
///
/// Returns [`CoreError::DegenerateBasis`] when `|a|` or the residual of `b`
/// falls below [`DEGENERACY_EPS`]; degenerate samples are discarded by the
/// planner rather than regularized here.
pub fn rotation_from_6d(a: &Vector3<f64>, b: &Vector3<f64>) -> CoreResult<Matrix3<f64>> {
    let a_norm = a.norm();
    if a_norm <= DEGENERACY_EPS {
        return Err(CoreError::DegenerateBasis(format!("|a| = {a_norm:e}")));
    }
    let c1 = a / a_norm;
    let residual = b - b.dot(&c1) * c1;
    let r_norm = residual.norm();
    if r_norm <= DEGENERACY_EPS {
        return Err(CoreError::DegenerateBasis(format!(
            "|b - (b.a)a| = {r_norm:e}"
        )));
    }
    let c2 = residual / r_norm;
    let c3 = c1.cross(&c2);
    Ok(Matrix3::from_columns(&[c1, c2, c3]))
}

/// Composition `p * q` (apply `q` first, then `p`).
pub fn pose_compose(p: &Pose, q: &Pose) -> Pose {
    Pose {
        translation: p.rotation * q.translation + p.translation,
        rotation: p.rotation * q.rotation,
    }
}

/// Inverse transform: `(R, t)^-1 = (R^T, -R^T t)`.
pub fn pose_inverse(p: &Pose) -> Pose {
    let rt = p.rotation.transpose();
    Pose {
        translation: -(rt * p.translation),
        rotation: rt,
    }
}

/// Initial pose of an object from its segmented cloud: translation at the
/// centroid, rotation set to identity.
pub fn initial_pose_from_cloud(cloud: &PointCloud) -> CoreResult<Pose> {
    Ok(Pose {
        translation: cloud.centroid()?,
        rotation: Matrix3::identity(),
    })
}

/// Maps every point by `goal * initial^-1`, preserving per-point features.
/// This is the rigid motion that carries the observed object to its goal
/// placement under the centroid initial-pose convention.
pub fn transform_cloud(goal: &Pose, initial: &Pose, cloud: &PointCloud) -> PointCloud {
    let motion = pose_compose(goal, &pose_inverse(initial));
    let points = cloud
        .points
        .iter()
        .map(|p| {
            let q = motion.transform_point(&Point3::new(p[0], p[1], p[2]));
            [q.x, q.y, q.z]
        })
        .collect();
    PointCloud {
        points,
        features: cloud.features.clone(),
    }
}

/// End-effector placement target: `goal * initial^-1 * grasp`.
pub fn end_effector_pose(goal: &Pose, initial: &Pose, grasp: &Pose) -> Pose {
    pose_compose(&pose_compose(goal, &pose_inverse(initial)), grasp)
}
