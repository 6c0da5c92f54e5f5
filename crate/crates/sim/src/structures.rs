//! Ground-truth multi-object structures: workspace bins, per-shape layout
//! templates, compatible object sampling, and language-goal emission.

use nalgebra::Vector3;
use rand::Rng;
use serde::{Deserialize, Serialize};
use structdiff_core::geometry::Pose;
use structdiff_core::vocab::{GoalToken, LanguageGoal, ShapeClass, SizeClass, BIN_COUNT};

use crate::error::{SimError, SimResult};
use crate::primitives::{objects_collide, sat_overlap, PrimitiveKind, PrimitiveObject};

/// Table frame, position/rotation bin geometry, and structure size classes.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WorkspaceConfig {
    pub table_height: f64,
    /// Table surface spans `[-half, half]` in x and y.
    pub table_half_extent: f64,
    /// The 4x4 position-bin grid spans `[-half, half]` per axis.
    pub bin_grid_half_extent: f64,
    /// Minimum lateral gap between structure objects (except tower contact).
    pub clearance: f64,
    /// Structure extents per size class (meters).
    pub scale_small: f64,
    pub scale_medium: f64,
    pub scale_large: f64,
}

impl Default for WorkspaceConfig {
    fn default() -> Self {
        WorkspaceConfig {
            table_height: 0.0,
            table_half_extent: 0.7,
            bin_grid_half_extent: 0.4,
            clearance: 0.005,
            scale_small: 0.15,
            scale_medium: 0.25,
            scale_large: 0.35,
        }
    }
}

impl WorkspaceConfig {
    pub fn scale_of(&self, size: SizeClass) -> f64 {
        match size {
            SizeClass::Small => self.scale_small,
            SizeClass::Medium => self.scale_medium,
            SizeClass::Large => self.scale_large,
        }
    }

    pub fn bin_width(&self) -> f64 {
        2.0 * self.bin_grid_half_extent / BIN_COUNT as f64
    }

    pub fn bin_center(&self, bin: u8) -> f64 {
        -self.bin_grid_half_extent + self.bin_width() * (bin as f64 + 0.5)
    }

    /// Is a coordinate inside the given bin along one axis?
    pub fn in_bin(&self, bin: u8, v: f64) -> bool {
        (v - self.bin_center(bin)).abs() <= self.bin_width() * 0.5
    }

    /// Rotation-bin center in radians; bins are 45 degrees wide, compared
    /// modulo 180 degrees.
    pub fn rot_bin_center(&self, bin: u8) -> f64 {
        bin as f64 * std::f64::consts::FRAC_PI_4
    }

    pub const ROT_BIN_HALF_WIDTH: f64 = std::f64::consts::FRAC_PI_8;

    /// Absolute angular distance modulo 180 degrees.
    pub fn yaw_distance_mod_pi(a: f64, b: f64) -> f64 {
        let mut d = (a - b).rem_euclid(std::f64::consts::PI);
        if d > std::f64::consts::FRAC_PI_2 {
            d = std::f64::consts::PI - d;
        }
        d
    }

    pub fn in_rot_bin(&self, bin: u8, yaw: f64) -> bool {
        Self::yaw_distance_mod_pi(yaw, self.rot_bin_center(bin)) <= Self::ROT_BIN_HALF_WIDTH
    }
}

/// A sampled structure task: the commanded attributes plus the realized
/// anchor point and yaw drawn inside the commanded bins.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StructureSpec {
    pub shape: ShapeClass,
    pub size: SizeClass,
    pub scale: f64,
    pub object_count: usize,
    pub pos_bin: (u8, u8),
    pub rot_bin: u8,
    pub anchor: [f64; 2],
    pub yaw: f64,
}

impl StructureSpec {
    pub fn language(&self) -> LanguageGoal {
        LanguageGoal::new(vec![
            GoalToken::Shape(self.shape),
            GoalToken::Size(self.size),
            GoalToken::PosX(self.pos_bin.0),
            GoalToken::PosY(self.pos_bin.1),
            GoalToken::Rot(self.rot_bin),
        ])
    }
}

pub fn object_count_range(shape: ShapeClass) -> (usize, usize) {
    match shape {
        ShapeClass::Line => (2, 5),
        ShapeClass::Circle => (3, 6),
        ShapeClass::Tower => (2, 4),
        ShapeClass::Dinner => (3, 4),
    }
}

/// Role slots of the dinner template in the structure frame (before yaw and
/// anchoring): plate at the origin, cup ahead along +x, utensils flanking in
/// y. Shared by the generator and the semantic evaluator.
pub fn dinner_slots(objects: &[PrimitiveObject], scale: f64) -> Vec<[f64; 2]> {
    let plate_r = objects[0].max_half_extent_xy();
    let cup_r = objects[1].max_half_extent_xy();
    let cup_x = (0.32 * scale).max(plate_r + cup_r + 0.02);
    let mut slots = vec![[0.0, 0.0], [cup_x, 0.0]];
    for (slot, obj) in objects.iter().enumerate().skip(2) {
        let off = plate_r + obj.dims[1] * 0.5 + 0.02;
        let side = if slot == 2 { 1.0 } else { -1.0 };
        slots.push([0.0, side * off]);
    }
    slots
}

/// Centers slot coordinates at their centroid.
fn center_slots(slots: &mut [[f64; 2]]) {
    let n = slots.len() as f64;
    let (mut cx, mut cy) = (0.0, 0.0);
    for s in slots.iter() {
        cx += s[0];
        cy += s[1];
    }
    cx /= n;
    cy /= n;
    for s in slots.iter_mut() {
        s[0] -= cx;
        s[1] -= cy;
    }
}

/// Ground-truth goal poses for the given spec and compatible object set.
/// The template centroid lands exactly on the anchor; object z rests on the
/// table (towers stack with contact). Fails if objects interpenetrate, come
/// closer than the clearance (non-tower), or leave the table.
pub fn goal_poses(
    spec: &StructureSpec,
    objects: &[PrimitiveObject],
    ws: &WorkspaceConfig,
) -> SimResult<Vec<Pose>> {
    let n = objects.len();
    assert_eq!(n, spec.object_count);
    let infeasible = |reason: &str| SimError::InfeasibleSpec {
        attempts: 1,
        reason: reason.to_string(),
    };

    // slot positions in the structure frame plus per-object yaw offsets
    let mut slots: Vec<[f64; 2]> = Vec::with_capacity(n);
    let mut yaw_offsets: Vec<f64> = Vec::with_capacity(n);
    match spec.shape {
        ShapeClass::Line => {
            let spacing = spec.scale / (n as f64 - 1.0);
            for i in 0..n {
                let s = (i as f64 - (n as f64 - 1.0) / 2.0) * spacing;
                slots.push([s, 0.0]);
                // objects face the line normal
                yaw_offsets.push(std::f64::consts::FRAC_PI_2);
            }
        }
        ShapeClass::Circle => {
            let radius = spec.scale * 0.5;
            for i in 0..n {
                let theta = std::f64::consts::TAU * i as f64 / n as f64;
                slots.push([radius * theta.cos(), radius * theta.sin()]);
                // forward axis radial (outward); expressed relative to the
                // structure yaw below
                yaw_offsets.push(theta);
            }
        }
        ShapeClass::Tower => {
            for _ in 0..n {
                slots.push([0.0, 0.0]);
                yaw_offsets.push(0.0);
            }
        }
        ShapeClass::Dinner => {
            slots = dinner_slots(objects, spec.scale);
            center_slots(&mut slots);
            for _ in 0..n {
                yaw_offsets.push(0.0);
            }
        }
    }

    let (sy, cy) = spec.yaw.sin_cos();
    let mut poses = Vec::with_capacity(n);
    let mut z_cursor = ws.table_height;
    for (i, obj) in objects.iter().enumerate() {
        let world_x = spec.anchor[0] + cy * slots[i][0] - sy * slots[i][1];
        let world_y = spec.anchor[1] + sy * slots[i][0] + cy * slots[i][1];
        let z = match spec.shape {
            ShapeClass::Tower => {
                let center = z_cursor + obj.height() * 0.5;
                z_cursor += obj.height();
                center
            }
            _ => ws.table_height + obj.height() * 0.5,
        };
        poses.push(Pose::from_yaw(
            spec.yaw + yaw_offsets[i],
            Vector3::new(world_x, world_y, z),
        ));
    }

    // validity by construction gets verified, not assumed
    for (i, (obj, pose)) in objects.iter().zip(&poses).enumerate() {
        let poly = obj.polytope().transformed(pose);
        for v in &poly.vertices {
            if v.x.abs() > ws.table_half_extent - 0.01 || v.y.abs() > ws.table_half_extent - 0.01
            {
                return Err(infeasible("structure leaves the table"));
            }
        }
        for (j, (other, other_pose)) in objects.iter().zip(&poses).enumerate().skip(i + 1) {
            let other_poly = other.polytope().transformed(other_pose);
            let overlap = sat_overlap(&poly, &other_poly);
            if spec.shape == ShapeClass::Tower {
                if j == i + 1 {
                    // stacked contact: allow touching, forbid interpenetration
                    if overlap > 1e-6 {
                        return Err(infeasible("tower objects interpenetrate"));
                    }
                } else if overlap > -1e-9 {
                    return Err(infeasible("non-adjacent tower objects touch"));
                }
            } else if overlap > -ws.clearance {
                return Err(infeasible("objects closer than clearance"));
            }
        }
    }
    Ok(poses)
}

// ---------------------------------------------------------------------------
// sampling

fn sample_dims_capped<R: Rng>(
    rng: &mut R,
    cap_xy: f64,
    kinds: &[PrimitiveKind],
) -> Option<PrimitiveObject> {
    // smallest horizontal extent each kind can take; kinds that cannot fit
    // under the cap are filtered out
    let min_extent = |k: PrimitiveKind| -> f64 {
        match k {
            PrimitiveKind::Box => 0.021,
            PrimitiveKind::Cylinder => 0.022,
            PrimitiveKind::Plate => 0.055,
            PrimitiveKind::Bowl => 0.055,
            PrimitiveKind::Utensil => 0.085,
        }
    };
    let viable: Vec<PrimitiveKind> = kinds
        .iter()
        .copied()
        .filter(|&k| cap_xy >= min_extent(k))
        .collect();
    if viable.is_empty() {
        return None;
    }
    let kind = viable[rng.gen_range(0..viable.len())];
    let obj = match kind {
        PrimitiveKind::Box => {
            let hi = cap_xy.min(0.1);
            let w = rng.gen_range(0.02..hi);
            let d = rng.gen_range(0.02..hi);
            let h = rng.gen_range(0.02..0.1);
            PrimitiveObject::new(PrimitiveKind::Box, [w, d, h])
        }
        PrimitiveKind::Cylinder => {
            let hi = (cap_xy * 0.5).min(0.05);
            let r = rng.gen_range(0.01..hi);
            let h = rng.gen_range(0.02..0.1);
            PrimitiveObject::new(PrimitiveKind::Cylinder, [r, h, 0.0])
        }
        PrimitiveKind::Plate => {
            let hi = (cap_xy * 0.5).min(0.08);
            let r = rng.gen_range(0.025..hi);
            let h = rng.gen_range(0.015..0.025);
            PrimitiveObject::new(PrimitiveKind::Plate, [r, h, 0.0])
        }
        PrimitiveKind::Bowl => {
            let hi = (cap_xy * 0.5).min(0.05);
            let r = rng.gen_range(0.025..hi);
            let h = rng.gen_range(0.04..0.09);
            PrimitiveObject::new(PrimitiveKind::Bowl, [r, h, 0.006])
        }
        PrimitiveKind::Utensil => {
            let hi = cap_xy.min(0.15);
            let l = rng.gen_range(0.08..hi);
            let w = rng.gen_range(0.015..0.025);
            let h = rng.gen_range(0.01..0.018);
            PrimitiveObject::new(PrimitiveKind::Utensil, [l, w, h])
        }
    };
    Some(obj)
}

/// Samples an object set compatible with the shape/size/count combination
/// (towers get stackable kinds sorted by footprint, dinner gets its role
/// kinds, lines and circles get slot-pitch-capped dims).
pub fn sample_objects<R: Rng>(
    rng: &mut R,
    shape: ShapeClass,
    size_scale: f64,
    n: usize,
) -> Option<Vec<PrimitiveObject>> {
    match shape {
        ShapeClass::Line => {
            let pitch = size_scale / (n as f64 - 1.0);
            // objects face the line normal, but boxes sit square to it, so
            // cap every horizontal dim by the slot pitch
            let cap = pitch - 0.01;
            let kinds = [
                PrimitiveKind::Box,
                PrimitiveKind::Cylinder,
                PrimitiveKind::Plate,
                PrimitiveKind::Bowl,
                PrimitiveKind::Utensil,
            ];
            (0..n)
                .map(|_| sample_dims_capped(rng, cap, &kinds))
                .collect()
        }
        ShapeClass::Circle => {
            let chord = size_scale * (std::f64::consts::PI / n as f64).sin();
            let cap = chord - 0.01;
            let kinds = [
                PrimitiveKind::Box,
                PrimitiveKind::Cylinder,
                PrimitiveKind::Bowl,
            ];
            (0..n)
                .map(|_| sample_dims_capped(rng, cap, &kinds))
                .collect()
        }
        ShapeClass::Tower => {
            let kinds = [
                PrimitiveKind::Box,
                PrimitiveKind::Cylinder,
                PrimitiveKind::Plate,
            ];
            let mut half = rng.gen_range(0.04..0.08);
            let mut objs = Vec::with_capacity(n);
            for _ in 0..n {
                let h = (size_scale / n as f64 * rng.gen_range(0.7..1.3)).clamp(0.02, 0.12);
                let kind = kinds[rng.gen_range(0..kinds.len())];
                let obj = match kind {
                    PrimitiveKind::Box => PrimitiveObject::new(
                        PrimitiveKind::Box,
                        [half * 2.0 * rng.gen_range(0.8..1.0), half * 2.0 * rng.gen_range(0.8..1.0), h],
                    ),
                    PrimitiveKind::Cylinder => {
                        PrimitiveObject::new(PrimitiveKind::Cylinder, [half, h, 0.0])
                    }
                    _ => PrimitiveObject::new(
                        PrimitiveKind::Plate,
                        [half, h.min(0.03), 0.0],
                    ),
                };
                objs.push(obj);
                half *= rng.gen_range(0.6..0.9);
                if half < 0.012 {
                    half = 0.012;
                }
            }
            Some(objs)
        }
        ShapeClass::Dinner => {
            let mut objs = vec![
                PrimitiveObject::new(
                    PrimitiveKind::Plate,
                    [rng.gen_range(0.05..0.08), rng.gen_range(0.015..0.025), 0.0],
                ),
                PrimitiveObject::new(
                    PrimitiveKind::Bowl,
                    [
                        rng.gen_range(0.03..0.04),
                        rng.gen_range(0.06..0.09),
                        0.006,
                    ],
                ),
            ];
            for _ in 2..n {
                objs.push(PrimitiveObject::new(
                    PrimitiveKind::Utensil,
                    [
                        rng.gen_range(0.10..0.14),
                        rng.gen_range(0.015..0.025),
                        rng.gen_range(0.01..0.015),
                    ],
                ));
            }
            Some(objs)
        }
    }
}

/// Maximum horizontal reach of the structure from its anchor (slot offset
/// plus object circumradius), used to keep structures on the table.
fn structure_radius(
    spec: &StructureSpec,
    objects: &[PrimitiveObject],
) -> f64 {
    let mut slots: Vec<[f64; 2]> = match spec.shape {
        ShapeClass::Line => {
            let spacing = spec.scale / (objects.len() as f64 - 1.0);
            (0..objects.len())
                .map(|i| [(i as f64 - (objects.len() as f64 - 1.0) / 2.0) * spacing, 0.0])
                .collect()
        }
        ShapeClass::Circle => (0..objects.len())
            .map(|i| {
                let theta = std::f64::consts::TAU * i as f64 / objects.len() as f64;
                [spec.scale * 0.5 * theta.cos(), spec.scale * 0.5 * theta.sin()]
            })
            .collect(),
        ShapeClass::Tower => vec![[0.0, 0.0]; objects.len()],
        ShapeClass::Dinner => {
            let mut s = dinner_slots(objects, spec.scale);
            center_slots(&mut s);
            s
        }
    };
    center_slots(&mut slots);
    slots
        .iter()
        .zip(objects)
        .map(|(s, o)| {
            let reach = (s[0] * s[0] + s[1] * s[1]).sqrt();
            let circum = match o.kind {
                PrimitiveKind::Box | PrimitiveKind::Utensil => {
                    0.5 * (o.dims[0] * o.dims[0] + o.dims[1] * o.dims[1]).sqrt()
                }
                _ => o.dims[0],
            };
            reach + circum
        })
        .fold(0.0, f64::max)
}

/// One feasible sampled task: spec, objects, ground-truth goal poses, and
/// the language goal. Retries object/anchor draws up to `attempts` times.
pub fn sample_structure_goal<R: Rng>(
    rng: &mut R,
    shape: ShapeClass,
    ws: &WorkspaceConfig,
    attempts: usize,
) -> SimResult<(StructureSpec, Vec<PrimitiveObject>, Vec<Pose>, LanguageGoal)> {
    for _ in 0..attempts {
        let size = SizeClass::ALL[rng.gen_range(0..3)];
        let scale = ws.scale_of(size);
        let (lo, hi) = object_count_range(shape);
        let n = rng.gen_range(lo..=hi);
        let Some(objects) = sample_objects(rng, shape, scale, n) else {
            continue;
        };
        let pos_bin = (rng.gen_range(0..BIN_COUNT), rng.gen_range(0..BIN_COUNT));
        let rot_bin = rng.gen_range(0..BIN_COUNT);
        let yaw = ws.rot_bin_center(rot_bin)
            + rng.gen_range(-0.9..0.9) * WorkspaceConfig::ROT_BIN_HALF_WIDTH;
        let mut spec = StructureSpec {
            shape,
            size,
            scale,
            object_count: n,
            pos_bin,
            rot_bin,
            anchor: [0.0, 0.0],
            yaw,
        };
        // anchor inside the commanded bin, clamped so the structure stays on
        // the table
        let radius = structure_radius(&spec, &objects);
        let lim = ws.table_half_extent - 0.02 - radius;
        let hw = ws.bin_width() * 0.5 - 0.005;
        let mut ok = true;
        let mut anchor = [0.0; 2];
        for (axis, bin) in [(0usize, pos_bin.0), (1, pos_bin.1)] {
            let c = ws.bin_center(bin);
            let lo = (c - hw).max(-lim);
            let hi = (c + hw).min(lim);
            if lo >= hi {
                ok = false;
                break;
            }
            anchor[axis] = rng.gen_range(lo..hi);
        }
        if !ok {
            continue;
        }
        spec.anchor = anchor;
        match goal_poses(&spec, &objects, ws) {
            Ok(poses) => {
                let goal = spec.language();
                return Ok((spec, objects, poses, goal));
            }
            Err(_) => continue,
        }
    }
    Err(SimError::InfeasibleSpec {
        attempts,
        reason: format!("no feasible {shape:?} structure found"),
    })
}

/// Random upright collision-free placement of structure objects plus
/// distractors on the table (the initial scene).
pub fn sample_initial_poses<R: Rng>(
    rng: &mut R,
    objects: &[PrimitiveObject],
    distractors: &[PrimitiveObject],
    ws: &WorkspaceConfig,
    attempts: usize,
) -> SimResult<(Vec<Pose>, Vec<Pose>)> {
    let all: Vec<&PrimitiveObject> = objects.iter().chain(distractors).collect();
    'attempt: for _ in 0..attempts {
        let mut poses: Vec<Pose> = Vec::with_capacity(all.len());
        for obj in &all {
            let reach = obj.max_half_extent_xy();
            let lim = ws.table_half_extent - 0.02 - reach;
            let mut placed = false;
            for _ in 0..60 {
                let pose = Pose::from_yaw(
                    rng.gen_range(0.0..std::f64::consts::TAU),
                    Vector3::new(
                        rng.gen_range(-lim..lim),
                        rng.gen_range(-lim..lim),
                        ws.table_height + obj.height() * 0.5,
                    ),
                );
                let clear = poses.iter().zip(&all).all(|(p, o)| {
                    !objects_collide(obj, &pose, o, p, -0.005)
                });
                if clear {
                    poses.push(pose);
                    placed = true;
                    break;
                }
            }
            if !placed {
                continue 'attempt;
            }
        }
        let obj_poses = poses[..objects.len()].to_vec();
        let dis_poses = poses[objects.len()..].to_vec();
        return Ok((obj_poses, dis_poses));
    }
    Err(SimError::InfeasibleSpec {
        attempts,
        reason: "could not place initial scene without collisions".into(),
    })
}
