//! Parametric tabletop objects: analytic surfaces for rendering, convex
//! polytopes for intersection tests, and footprint polygons for support
//! queries.
//!
//! Cylindrical shapes are rendered from their true smooth surfaces but tested
//! for contact and intersection as 16-gon prisms; open shapes (bowls) use a
//! solid-cylinder convex proxy for those tests.

use nalgebra::{Point3, Vector3};
use serde::{Deserialize, Serialize};
use structdiff_core::geometry::Pose;

/// Number of polygon sides approximating circular cross-sections.
pub const CYLINDER_SIDES: usize = 16;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PrimitiveKind {
    /// Solid rectangular box; dims = [width x, depth y, height z].
    Box,
    /// Solid cylinder; dims = [radius, height, 0].
    Cylinder,
    /// Disk/plate: a squat cylinder; dims = [radius, height, 0].
    Plate,
    /// Open cylinder (bowl or mug); dims = [outer radius, height, wall].
    Bowl,
    /// Elongated thin box (utensil); dims = [length x, width y, height z].
    Utensil,
}

impl PrimitiveKind {
    pub fn name(&self) -> &'static str {
        match self {
            PrimitiveKind::Box => "box",
            PrimitiveKind::Cylinder => "cylinder",
            PrimitiveKind::Plate => "plate",
            PrimitiveKind::Bowl => "bowl",
            PrimitiveKind::Utensil => "utensil",
        }
    }

    /// Kinds with a flat top able to support another object.
    pub fn stackable(&self) -> bool {
        matches!(
            self,
            PrimitiveKind::Box | PrimitiveKind::Cylinder | PrimitiveKind::Plate
        )
    }

    pub fn is_cylindrical(&self) -> bool {
        matches!(
            self,
            PrimitiveKind::Cylinder | PrimitiveKind::Plate | PrimitiveKind::Bowl
        )
    }
}

/// One rigid object. The object frame sits at the geometric center with the
/// canonical forward axis +x (meaningful for boxes and utensils).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PrimitiveObject {
    pub kind: PrimitiveKind,
    pub dims: [f64; 3],
}

impl PrimitiveObject {
    pub fn new(kind: PrimitiveKind, dims: [f64; 3]) -> Self {
        PrimitiveObject { kind, dims }
    }

    pub fn height(&self) -> f64 {
        match self.kind {
            PrimitiveKind::Box | PrimitiveKind::Utensil => self.dims[2],
            _ => self.dims[1],
        }
    }

    pub fn radius(&self) -> f64 {
        debug_assert!(self.kind.is_cylindrical());
        self.dims[0]
    }

    /// Largest horizontal half-extent in canonical orientation.
    pub fn max_half_extent_xy(&self) -> f64 {
        match self.kind {
            PrimitiveKind::Box | PrimitiveKind::Utensil => {
                0.5 * self.dims[0].max(self.dims[1])
            }
            _ => self.dims[0],
        }
    }

    /// Footprint area in canonical orientation.
    pub fn footprint_area(&self) -> f64 {
        match self.kind {
            PrimitiveKind::Box | PrimitiveKind::Utensil => self.dims[0] * self.dims[1],
            _ => std::f64::consts::PI * self.dims[0] * self.dims[0],
        }
    }

    /// Convex polytope in the object frame (bowls become solid cylinders).
    pub fn polytope(&self) -> Polytope {
        match self.kind {
            PrimitiveKind::Box | PrimitiveKind::Utensil => {
                Polytope::cuboid(self.dims[0], self.dims[1], self.dims[2])
            }
            _ => Polytope::prism(self.dims[0], self.height(), CYLINDER_SIDES),
        }
    }

    /// Unsigned distance from a point (object frame) to the analytic
    /// surface. Used to verify that rendered points lie on the surface.
    pub fn surface_distance(&self, p: &Point3<f64>) -> f64 {
        match self.kind {
            PrimitiveKind::Box | PrimitiveKind::Utensil => {
                let h = [
                    self.dims[0] * 0.5,
                    self.dims[1] * 0.5,
                    self.dims[2] * 0.5,
                ];
                // distance to the box boundary
                let q = [p.x.abs() - h[0], p.y.abs() - h[1], p.z.abs() - h[2]];
                let outside =
                    (q[0].max(0.0).powi(2) + q[1].max(0.0).powi(2) + q[2].max(0.0).powi(2))
                        .sqrt();
                let inside = q[0].max(q[1]).max(q[2]).min(0.0);
                (outside + inside).abs()
            }
            PrimitiveKind::Cylinder | PrimitiveKind::Plate => {
                let (r, h) = (self.dims[0], self.dims[1] * 0.5);
                let rd = (p.x * p.x + p.y * p.y).sqrt();
                let q = [rd - r, p.z.abs() - h];
                let outside = (q[0].max(0.0).powi(2) + q[1].max(0.0).powi(2)).sqrt();
                let inside = q[0].max(q[1]).min(0.0);
                (outside + inside).abs()
            }
            PrimitiveKind::Bowl => {
                let (r, hh, w) = (self.dims[0], self.dims[1] * 0.5, self.dims[2]);
                let rd = (p.x * p.x + p.y * p.y).sqrt();
                // distance to the solid outer cylinder wall region minus the cavity
                let outer = {
                    let q = [rd - r, p.z.abs() - hh];
                    let outside = (q[0].max(0.0).powi(2) + q[1].max(0.0).powi(2)).sqrt();
                    let inside = q[0].max(q[1]).min(0.0);
                    outside + inside
                };
                // cavity: inner cylinder from z = -hh + w to top
                let cav = {
                    let rq = (r - w) - rd; // >= 0 inside radius
                    let zq = p.z - (-hh + w); // >= 0 above the floor
                    if rq >= 0.0 && zq >= 0.0 {
                        -rq.min(zq)
                    } else {
                        (rq.min(0.0).powi(2) + zq.min(0.0).powi(2)).sqrt()
                    }
                };
                // surface of (outer minus cavity): |max(outer, -cav)|
                outer.max(-cav).abs()
            }
        }
    }
}

// ---------------------------------------------------------------------------
// convex polytopes and separating-axis tests

/// Convex polytope as vertices plus deduplicated face-normal and
/// edge-direction sets (object frame).
#[derive(Debug, Clone)]
pub struct Polytope {
    pub vertices: Vec<Vector3<f64>>,
    pub face_normals: Vec<Vector3<f64>>,
    pub edge_dirs: Vec<Vector3<f64>>,
}

impl Polytope {
    pub fn cuboid(w: f64, d: f64, h: f64) -> Self {
        let (hw, hd, hh) = (w * 0.5, d * 0.5, h * 0.5);
        let mut vertices = Vec::with_capacity(8);
        for &sx in &[-1.0, 1.0] {
            for &sy in &[-1.0, 1.0] {
                for &sz in &[-1.0, 1.0] {
                    vertices.push(Vector3::new(sx * hw, sy * hd, sz * hh));
                }
            }
        }
        Polytope {
            vertices,
            face_normals: vec![Vector3::x(), Vector3::y(), Vector3::z()],
            edge_dirs: vec![Vector3::x(), Vector3::y(), Vector3::z()],
        }
    }

    /// Regular k-gon prism of given radius and height about +z.
    pub fn prism(radius: f64, height: f64, sides: usize) -> Self {
        let hh = height * 0.5;
        let mut vertices = Vec::with_capacity(2 * sides);
        let mut face_normals = vec![Vector3::z()];
        let mut edge_dirs = vec![Vector3::z()];
        for i in 0..sides {
            let a = 2.0 * std::f64::consts::PI * i as f64 / sides as f64;
            let (s, c) = a.sin_cos();
            vertices.push(Vector3::new(radius * c, radius * s, -hh));
            vertices.push(Vector3::new(radius * c, radius * s, hh));
            // lateral face normal bisects two adjacent rim vertices
            let am = 2.0 * std::f64::consts::PI * (i as f64 + 0.5) / sides as f64;
            if i < sides / 2 {
                face_normals.push(Vector3::new(am.cos(), am.sin(), 0.0));
                edge_dirs.push(Vector3::new(-a.sin(), a.cos(), 0.0));
            }
        }
        Polytope {
            vertices,
            face_normals,
            edge_dirs,
        }
    }

    pub fn transformed(&self, pose: &Pose) -> Polytope {
        Polytope {
            vertices: self
                .vertices
                .iter()
                .map(|v| pose.rotation * v + pose.translation)
                .collect(),
            face_normals: self
                .face_normals
                .iter()
                .map(|n| pose.rotation * n)
                .collect(),
            edge_dirs: self.edge_dirs.iter().map(|e| pose.rotation * e).collect(),
        }
    }

    pub fn top_z(&self) -> f64 {
        self.vertices.iter().map(|v| v.z).fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn bottom_z(&self) -> f64 {
        self.vertices.iter().map(|v| v.z).fold(f64::INFINITY, f64::min)
    }

    fn project(&self, axis: &Vector3<f64>) -> (f64, f64) {
        let mut lo = f64::INFINITY;
        let mut hi = f64::NEG_INFINITY;
        for v in &self.vertices {
            let d = v.dot(axis);
            lo = lo.min(d);
            hi = hi.max(d);
        }
        (lo, hi)
    }
}

/// Separating-axis overlap between two world-frame polytopes: the minimum
/// axis overlap. Negative means separated by that gap; values above a small
/// tolerance mean real interpenetration (touching contact sits at ~0).
pub fn sat_overlap(a: &Polytope, b: &Polytope) -> f64 {
    let mut min_overlap = f64::INFINITY;
    let mut axes: Vec<Vector3<f64>> =
        Vec::with_capacity(a.face_normals.len() + b.face_normals.len() + a.edge_dirs.len() * b.edge_dirs.len());
    axes.extend_from_slice(&a.face_normals);
    axes.extend_from_slice(&b.face_normals);
    for ea in &a.edge_dirs {
        for eb in &b.edge_dirs {
            axes.push(ea.cross(eb));
        }
    }
    for axis in axes {
        let n2 = axis.norm_squared();
        if n2 < 1e-12 {
            continue; // parallel edges give a degenerate axis
        }
        let axis = axis / n2.sqrt();
        let (a_lo, a_hi) = a.project(&axis);
        let (b_lo, b_hi) = b.project(&axis);
        let overlap = a_hi.min(b_hi) - a_lo.max(b_lo);
        if overlap < min_overlap {
            min_overlap = overlap;
            if min_overlap < 0.0 {
                return min_overlap; // separated
            }
        }
    }
    min_overlap
}

/// Do two posed objects interpenetrate by more than `tol`?
pub fn objects_collide(
    a: &PrimitiveObject,
    pose_a: &Pose,
    b: &PrimitiveObject,
    pose_b: &Pose,
    tol: f64,
) -> bool {
    let pa = a.polytope().transformed(pose_a);
    let pb = b.polytope().transformed(pose_b);
    sat_overlap(&pa, &pb) > tol
}

/// Closed-form overlap test for upright poses (yaw-only rotations): exact
/// circle/rectangle math in the plane plus a z-interval check. Bowls are
/// treated as their solid-cylinder proxy.
pub fn upright_collides(
    a: &PrimitiveObject,
    pose_a: &Pose,
    b: &PrimitiveObject,
    pose_b: &Pose,
) -> bool {
    debug_assert!((pose_a.rotation[(2, 2)] - 1.0).abs() < 1e-9, "upright only");
    debug_assert!((pose_b.rotation[(2, 2)] - 1.0).abs() < 1e-9, "upright only");
    let za = (
        pose_a.translation.z - a.height() * 0.5,
        pose_a.translation.z + a.height() * 0.5,
    );
    let zb = (
        pose_b.translation.z - b.height() * 0.5,
        pose_b.translation.z + b.height() * 0.5,
    );
    if za.1 <= zb.0 || zb.1 <= za.0 {
        return false;
    }
    let xy_a = (pose_a.translation.x, pose_a.translation.y);
    let xy_b = (pose_b.translation.x, pose_b.translation.y);
    match (a.kind.is_cylindrical(), b.kind.is_cylindrical()) {
        (true, true) => {
            let d = ((xy_a.0 - xy_b.0).powi(2) + (xy_a.1 - xy_b.1).powi(2)).sqrt();
            d < a.radius() + b.radius()
        }
        (true, false) => circle_rect_overlap(xy_a, a.radius(), b, pose_b),
        (false, true) => circle_rect_overlap(xy_b, b.radius(), a, pose_a),
        (false, false) => {
            // 2D SAT over both rectangles' axes
            rect_rect_overlap(a, pose_a, b, pose_b)
        }
    }
}

fn rect_axes(pose: &Pose) -> [(f64, f64); 2] {
    [
        (pose.rotation[(0, 0)], pose.rotation[(1, 0)]),
        (pose.rotation[(0, 1)], pose.rotation[(1, 1)]),
    ]
}

fn rect_corners(obj: &PrimitiveObject, pose: &Pose) -> [(f64, f64); 4] {
    let (hw, hd) = (obj.dims[0] * 0.5, obj.dims[1] * 0.5);
    let ax = rect_axes(pose);
    let c = (pose.translation.x, pose.translation.y);
    let mut out = [(0.0, 0.0); 4];
    for (i, (sx, sy)) in [(-1.0, -1.0), (1.0, -1.0), (1.0, 1.0), (-1.0, 1.0)]
        .iter()
        .enumerate()
    {
        out[i] = (
            c.0 + sx * hw * ax[0].0 + sy * hd * ax[1].0,
            c.1 + sx * hw * ax[0].1 + sy * hd * ax[1].1,
        );
    }
    out
}

fn circle_rect_overlap(
    center: (f64, f64),
    radius: f64,
    rect: &PrimitiveObject,
    rect_pose: &Pose,
) -> bool {
    // clamp the circle center to the rectangle in its local frame
    let dx = center.0 - rect_pose.translation.x;
    let dy = center.1 - rect_pose.translation.y;
    let ax = rect_axes(rect_pose);
    let lx = dx * ax[0].0 + dy * ax[0].1;
    let ly = dx * ax[1].0 + dy * ax[1].1;
    let (hw, hd) = (rect.dims[0] * 0.5, rect.dims[1] * 0.5);
    let cx = lx.clamp(-hw, hw);
    let cy = ly.clamp(-hd, hd);
    (lx - cx).powi(2) + (ly - cy).powi(2) < radius * radius
}

fn rect_rect_overlap(
    a: &PrimitiveObject,
    pose_a: &Pose,
    b: &PrimitiveObject,
    pose_b: &Pose,
) -> bool {
    let ca = rect_corners(a, pose_a);
    let cb = rect_corners(b, pose_b);
    for axes in [rect_axes(pose_a), rect_axes(pose_b)] {
        for ax in axes {
            let pa: Vec<f64> = ca.iter().map(|p| p.0 * ax.0 + p.1 * ax.1).collect();
            let pb: Vec<f64> = cb.iter().map(|p| p.0 * ax.0 + p.1 * ax.1).collect();
            let (a_lo, a_hi) = (
                pa.iter().cloned().fold(f64::INFINITY, f64::min),
                pa.iter().cloned().fold(f64::NEG_INFINITY, f64::max),
            );
            let (b_lo, b_hi) = (
                pb.iter().cloned().fold(f64::INFINITY, f64::min),
                pb.iter().cloned().fold(f64::NEG_INFINITY, f64::max),
            );
            if a_hi <= b_lo || b_hi <= a_lo {
                return false;
            }
        }
    }
    true
}

// ---------------------------------------------------------------------------
// 2D convex footprints

/// Convex polygon in the plane, counter-clockwise.
#[derive(Debug, Clone, PartialEq)]
pub struct Footprint {
    pub points: Vec<(f64, f64)>,
}

impl Footprint {
    /// Convex hull (monotone chain) of the polytope's xy-projected vertices.
    pub fn of(polytope: &Polytope) -> Footprint {
        let mut pts: Vec<(f64, f64)> = polytope.vertices.iter().map(|v| (v.x, v.y)).collect();
        pts.sort_by(|a, b| a.partial_cmp(b).unwrap());
        pts.dedup_by(|a, b| (a.0 - b.0).abs() < 1e-12 && (a.1 - b.1).abs() < 1e-12);
        if pts.len() <= 2 {
            return Footprint { points: pts };
        }
        let cross = |o: (f64, f64), a: (f64, f64), b: (f64, f64)| {
            (a.0 - o.0) * (b.1 - o.1) - (a.1 - o.1) * (b.0 - o.0)
        };
        let mut hull: Vec<(f64, f64)> = Vec::with_capacity(pts.len() * 2);
        for &p in &pts {
            while hull.len() >= 2 && cross(hull[hull.len() - 2], hull[hull.len() - 1], p) <= 0.0 {
                hull.pop();
            }
            hull.push(p);
        }
        let lower_len = hull.len() + 1;
        for &p in pts.iter().rev() {
            while hull.len() >= lower_len
                && cross(hull[hull.len() - 2], hull[hull.len() - 1], p) <= 0.0
            {
                hull.pop();
            }
            hull.push(p);
        }
        hull.pop();
        Footprint { points: hull }
    }

    pub fn square(cx: f64, cy: f64, half: f64) -> Footprint {
        Footprint {
            points: vec![
                (cx - half, cy - half),
                (cx + half, cy - half),
                (cx + half, cy + half),
                (cx - half, cy + half),
            ],
        }
    }

    /// Shoelace area (counter-clockwise positive).
    pub fn area(&self) -> f64 {
        let n = self.points.len();
        if n < 3 {
            return 0.0;
        }
        let mut acc = 0.0;
        for i in 0..n {
            let (x1, y1) = self.points[i];
            let (x2, y2) = self.points[(i + 1) % n];
            acc += x1 * y2 - x2 * y1;
        }
        acc.abs() * 0.5
    }

    /// Area of the intersection with another convex polygon
    /// (Sutherland-Hodgman clipping).
    pub fn intersection_area(&self, other: &Footprint) -> f64 {
        if self.points.len() < 3 || other.points.len() < 3 {
            return 0.0;
        }
        let mut poly = self.points.clone();
        let n = other.points.len();
        for i in 0..n {
            if poly.is_empty() {
                return 0.0;
            }
            let a = other.points[i];
            let b = other.points[(i + 1) % n];
            // keep the left side of edge a->b (ccw polygon)
            let inside = |p: (f64, f64)| (b.0 - a.0) * (p.1 - a.1) - (b.1 - a.1) * (p.0 - a.0) >= 0.0;
            let mut out = Vec::with_capacity(poly.len() + 2);
            for j in 0..poly.len() {
                let p = poly[j];
                let q = poly[(j + 1) % poly.len()];
                let pin = inside(p);
                let qin = inside(q);
                if pin {
                    out.push(p);
                }
                if pin != qin {
                    // edge crosses the clip line: interpolate on the signed
                    // distance to it
                    let f_p = (b.0 - a.0) * (p.1 - a.1) - (b.1 - a.1) * (p.0 - a.0);
                    let f_q = (b.0 - a.0) * (q.1 - a.1) - (b.1 - a.1) * (q.0 - a.0);
                    let denom = f_p - f_q;
                    if denom.abs() > 1e-15 {
                        let t = (f_p / denom).clamp(0.0, 1.0);
                        out.push((p.0 + t * (q.0 - p.0), p.1 + t * (q.1 - p.1)));
                    }
                }
            }
            poly = out;
        }
        Footprint { points: poly }.area()
    }

    pub fn centroid(&self) -> (f64, f64) {
        let n = self.points.len() as f64;
        let (mut sx, mut sy) = (0.0, 0.0);
        for &(x, y) in &self.points {
            sx += x;
            sy += y;
        }
        (sx / n, sy / n)
    }
}
