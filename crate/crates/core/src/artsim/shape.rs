use std::f64::consts::PI;
use std::fmt;
use std::sync::Arc;

use nalgebra::{Rotation3, Unit};
use rand::Rng;
use serde::{Deserialize, Serialize};

use super::obb::Obb;
use crate::error::{validation, Result};
use crate::geometry::{Mat3, Vec3};
use crate::seeding;

/// Kind of movable part a shape carries.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize, PartialOrd, Ord)]
#[serde(rename_all = "lowercase")]
pub enum ShapeFamily {
    Door,
    Drawer,
}

impl fmt::Display for ShapeFamily {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ShapeFamily::Door => f.write_str("door"),
            ShapeFamily::Drawer => f.write_str("drawer"),
        }
    }
}

impl std::str::FromStr for ShapeFamily {
    type Err = crate::Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "door" => Ok(ShapeFamily::Door),
            "drawer" => Ok(ShapeFamily::Drawer),
            other => Err(validation(format!("unknown shape family `{other}`"))),
        }
    }
}

impl ShapeFamily {
    pub fn joint_kind(&self) -> JointKind {
        match self {
            ShapeFamily::Door => JointKind::Revolute,
            ShapeFamily::Drawer => JointKind::Prismatic,
        }
    }

    /// Object categories (style presets) available for this family.
    pub fn categories(&self) -> &'static [&'static str] {
        match self {
            ShapeFamily::Door => &["cabinet", "fridge", "microwave", "safe"],
            ShapeFamily::Drawer => &["cabinet", "table"],
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum JointKind {
    Revolute,
    Prismatic,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct JointSpec {
    #[serde(rename = "type")]
    pub kind: JointKind,
    pub axis: [f64; 3],
    pub location: [f64; 3],
    pub limits: [f64; 2],
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum HingeSide {
    Left,
    Right,
}

/// Sampled size parameters, already normalized to the unit bounding cube.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Dimensions {
    pub width: f64,
    pub height: f64,
    pub depth: f64,
    pub wall: f64,
    pub panel_thickness: f64,
    /// Center of the cabinet body.
    pub origin: [f64; 3],
    /// Vertical extent of the drawer front, relative to the body center.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub drawer_band: Option<[f64; 2]>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub hinge: Option<HingeSide>,
    #[serde(default)]
    pub legs: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum HandleSpec {
    None,
    /// Bar handle; `center` is (x, y) on the panel relative to the body center.
    Bar {
        length: f64,
        thickness: f64,
        standoff: f64,
        center: [f64; 2],
        vertical: bool,
    },
    Knob { size: f64, center: [f64; 2] },
}

impl HandleSpec {
    pub fn is_some(&self) -> bool {
        !matches!(self, HandleSpec::None)
    }
}

/// Portable description of a procedural shape: everything needed to rebuild it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ShapeSpec {
    pub category: ShapeFamily,
    pub tag: String,
    pub seed: u64,
    pub dimensions: Dimensions,
    pub handle: HandleSpec,
    pub joint: JointSpec,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PartBox {
    pub obb: Obb,
    pub handle: bool,
}

/// A shape with one movable part on a 1-DoF joint. Part boxes are stored at q = 0.
#[derive(Debug, Clone, PartialEq)]
pub struct ArticulatedObject {
    pub spec: ShapeSpec,
    pub body: Vec<Obb>,
    pub part: Vec<PartBox>,
    pub joint_axis: Vec3,
    pub joint_location: Vec3,
    pub limits: [f64; 2],
}

pub type Fleet = Vec<Arc<ArticulatedObject>>;

impl ArticulatedObject {
    pub fn from_spec(spec: ShapeSpec) -> Result<Self> {
        let axis = Vec3::from(spec.joint.axis);
        if (axis.norm() - 1.0).abs() > 1e-9 {
            return Err(validation("joint axis must be unit length"));
        }
        if !(spec.joint.limits[0] < spec.joint.limits[1]) {
            return Err(validation("joint limits must satisfy q_min < q_max"));
        }
        if spec.joint.kind != spec.category.joint_kind() {
            return Err(validation("joint type does not match shape family"));
        }
        let (body, part) = build_boxes(&spec.category, &spec.dimensions, &spec.handle);
        Ok(ArticulatedObject {
            joint_axis: axis,
            joint_location: Vec3::from(spec.joint.location),
            limits: spec.joint.limits,
            spec,
            body,
            part,
        })
    }

    pub fn id(&self) -> String {
        format!("{}-{}-{}", self.spec.category, self.spec.tag, self.spec.seed)
    }

    pub fn family(&self) -> ShapeFamily {
        self.spec.category
    }

    pub fn category(&self) -> &str {
        &self.spec.tag
    }

    pub fn joint_kind(&self) -> JointKind {
        self.spec.joint.kind
    }

    pub fn has_handle(&self) -> bool {
        self.spec.handle.is_some()
    }

    pub fn clamp_q(&self, q: f64) -> f64 {
        q.clamp(self.limits[0], self.limits[1])
    }

    pub fn in_limits(&self, q: f64) -> bool {
        q >= self.limits[0] - 1e-12 && q <= self.limits[1] + 1e-12
    }

    /// Rigid motion of the part frame at joint coordinate `q`.
    pub fn part_transform(&self, q: f64) -> PartTransform {
        match self.joint_kind() {
            JointKind::Prismatic => PartTransform {
                rotation: Mat3::identity(),
                pivot: self.joint_location,
                translation: self.joint_axis * q,
            },
            JointKind::Revolute => PartTransform {
                rotation: Rotation3::from_axis_angle(&Unit::new_unchecked(self.joint_axis), q)
                    .into_inner(),
                pivot: self.joint_location,
                translation: Vec3::zeros(),
            },
        }
    }

    pub fn part_boxes_at(&self, q: f64) -> Vec<PartBox> {
        let tf = self.part_transform(q);
        self.part
            .iter()
            .map(|pb| PartBox {
                obb: tf.apply_obb(&pb.obb),
                handle: pb.handle,
            })
            .collect()
    }

    /// Closest point on the joint axis line to `p`.
    pub fn axis_foot(&self, p: &Vec3) -> Vec3 {
        let r = p - self.joint_location;
        self.joint_location + self.joint_axis * r.dot(&self.joint_axis)
    }

    /// World bounding box of the shape at `q`.
    pub fn bounds_at(&self, q: f64) -> (Vec3, Vec3) {
        let mut lo = Vec3::repeat(f64::INFINITY);
        let mut hi = Vec3::repeat(f64::NEG_INFINITY);
        let parts = self.part_boxes_at(q);
        for obb in self.body.iter().chain(parts.iter().map(|p| &p.obb)) {
            for c in obb.corners() {
                lo = lo.inf(&c);
                hi = hi.sup(&c);
            }
        }
        (lo, hi)
    }
}

/// `x -> pivot + R (x - pivot) + translation`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PartTransform {
    pub rotation: Mat3,
    pub pivot: Vec3,
    pub translation: Vec3,
}

impl PartTransform {
    pub fn apply(&self, x: &Vec3) -> Vec3 {
        self.pivot + self.rotation * (x - self.pivot) + self.translation
    }

    pub fn apply_vector(&self, v: &Vec3) -> Vec3 {
        self.rotation * v
    }

    pub fn inverse_apply(&self, y: &Vec3) -> Vec3 {
        self.pivot + self.rotation.transpose() * (y - self.translation - self.pivot)
    }

    pub fn inverse_apply_vector(&self, v: &Vec3) -> Vec3 {
        self.rotation.transpose() * v
    }

    pub fn apply_obb(&self, b: &Obb) -> Obb {
        Obb {
            center: self.apply(&b.center),
            half: b.half,
            rotation: self.rotation * b.rotation,
        }
    }
}

/// Procedurally generates a shape of `family`; the category preset is drawn from the seed.
pub fn generate_shape(family: ShapeFamily, seed: u64) -> ArticulatedObject {
    let mut rng = seeding::rng(seeding::derive(seed, "shape-category", family as u64));
    let cats = family.categories();
    let tag = cats[rng.random_range(0..cats.len())];
    generate_shape_in(family, tag, seed)
}

/// Like [`generate_shape`] with a fixed category preset.
pub fn generate_shape_in(family: ShapeFamily, tag: &str, seed: u64) -> ArticulatedObject {
    let spec = sample_spec(family, tag, seed);
    ArticulatedObject::from_spec(spec).expect("generator produces valid specs")
}

pub fn generate_fleet(family: ShapeFamily, tag: Option<&str>, count: usize, seed: u64) -> Fleet {
    (0..count as u64)
        .map(|i| {
            let s = seeding::derive(seed, "fleet", i);
            Arc::new(match tag {
                Some(t) => generate_shape_in(family, t, s),
                None => generate_shape(family, s),
            })
        })
        .collect()
}

fn range<R: Rng>(rng: &mut R, lo: f64, hi: f64) -> f64 {
    lo + (hi - lo) * rng.random::<f64>()
}

fn sample_spec(family: ShapeFamily, tag: &str, seed: u64) -> ShapeSpec {
    let mut rng = seeding::rng(seeding::derive(seed, tag, family as u64 + 11));
    // body proportions per category preset
    let (w, h, d) = match (family, tag) {
        (ShapeFamily::Drawer, "table") => (
            range(&mut rng, 0.8, 1.0),
            range(&mut rng, 0.25, 0.4),
            range(&mut rng, 0.7, 1.0),
        ),
        (ShapeFamily::Door, "fridge") => (
            range(&mut rng, 0.5, 0.7),
            range(&mut rng, 0.9, 1.0),
            range(&mut rng, 0.5, 0.7),
        ),
        (ShapeFamily::Door, "microwave") => (
            range(&mut rng, 0.8, 1.0),
            range(&mut rng, 0.45, 0.6),
            range(&mut rng, 0.5, 0.7),
        ),
        (ShapeFamily::Door, "safe") => (
            range(&mut rng, 0.6, 0.8),
            range(&mut rng, 0.6, 0.8),
            range(&mut rng, 0.6, 0.8),
        ),
        _ => (
            range(&mut rng, 0.55, 1.0),
            range(&mut rng, 0.5, 1.0),
            range(&mut rng, 0.6, 1.0),
        ),
    };
    let m = w.max(h).max(d);
    let (w, h, d) = (w / m, h / m, d / m);
    let wall = 0.03;
    let legs = family == ShapeFamily::Drawer && tag == "table";
    let mut dims = Dimensions {
        width: w,
        height: h,
        depth: d,
        wall,
        panel_thickness: 0.025,
        origin: [0.0; 3],
        drawer_band: None,
        hinge: None,
        legs,
    };
    let handle_roll: f64 = rng.random();
    let handle = match family {
        ShapeFamily::Drawer => {
            let inner = h - 2.0 * wall;
            let band_h = if legs {
                inner
            } else {
                range(&mut rng, 0.3, 0.6) * inner
            };
            let lo = -h / 2.0 + wall + range(&mut rng, 0.0, 1.0) * (inner - band_h);
            dims.drawer_band = Some([lo, lo + band_h]);
            let yc = lo + band_h / 2.0;
            let panel_w = w - wall;
            if handle_roll < 0.25 {
                HandleSpec::None
            } else if handle_roll < 0.75 {
                HandleSpec::Bar {
                    length: range(&mut rng, 0.3, 0.6) * panel_w,
                    thickness: range(&mut rng, 0.015, 0.025),
                    standoff: range(&mut rng, 0.025, 0.04),
                    center: [0.0, yc],
                    vertical: false,
                }
            } else {
                HandleSpec::Knob {
                    size: range(&mut rng, 0.03, 0.05),
                    center: [0.0, yc],
                }
            }
        }
        ShapeFamily::Door => {
            let side = if rng.random::<bool>() {
                HingeSide::Left
            } else {
                HingeSide::Right
            };
            dims.hinge = Some(side);
            dims.panel_thickness = 0.03;
            let inset = range(&mut rng, 0.06, 0.12);
            let x = match side {
                HingeSide::Left => w / 2.0 - inset,
                HingeSide::Right => -w / 2.0 + inset,
            };
            let y = range(&mut rng, -0.2, 0.2) * h;
            if handle_roll < 0.25 {
                HandleSpec::None
            } else if handle_roll < 0.75 {
                HandleSpec::Bar {
                    length: range(&mut rng, 0.2, 0.45) * h,
                    thickness: range(&mut rng, 0.015, 0.025),
                    standoff: range(&mut rng, 0.025, 0.04),
                    center: [x, y],
                    vertical: true,
                }
            } else {
                HandleSpec::Knob {
                    size: range(&mut rng, 0.03, 0.05),
                    center: [x, y],
                }
            }
        }
    };
    let limit_fraction = match family {
        ShapeFamily::Drawer => range(&mut rng, 0.75, 0.95),
        ShapeFamily::Door => range(&mut rng, 0.6, 0.95),
    };

    // normalize so the closed shape fits the unit cube, centered at the origin
    let (body, part) = build_boxes(&family, &dims, &handle);
    let mut lo = Vec3::repeat(f64::INFINITY);
    let mut hi = Vec3::repeat(f64::NEG_INFINITY);
    for b in body.iter().chain(part.iter().map(|p| &p.obb)) {
        for c in b.corners() {
            lo = lo.inf(&c);
            hi = hi.sup(&c);
        }
    }
    let scale = 1.0 / (hi - lo).max();
    let center = (lo + hi) * 0.5;
    let dims = scale_dims(&dims, scale, &(-center * scale));
    let handle = scale_handle(&handle, scale);

    let joint = joint_for(&family, &dims, limit_fraction);
    ShapeSpec {
        category: family,
        tag: tag.to_string(),
        seed,
        dimensions: dims,
        handle,
        joint,
    }
}

fn scale_dims(d: &Dimensions, s: f64, origin: &Vec3) -> Dimensions {
    Dimensions {
        width: d.width * s,
        height: d.height * s,
        depth: d.depth * s,
        wall: d.wall * s,
        panel_thickness: d.panel_thickness * s,
        origin: [
            d.origin[0] * s + origin.x,
            d.origin[1] * s + origin.y,
            d.origin[2] * s + origin.z,
        ],
        drawer_band: d.drawer_band.map(|[a, b]| [a * s, b * s]),
        hinge: d.hinge,
        legs: d.legs,
    }
}

fn scale_handle(h: &HandleSpec, s: f64) -> HandleSpec {
    match *h {
        HandleSpec::None => HandleSpec::None,
        HandleSpec::Bar {
            length,
            thickness,
            standoff,
            center,
            vertical,
        } => HandleSpec::Bar {
            length: length * s,
            thickness: thickness * s,
            standoff: standoff * s,
            center: [center[0] * s, center[1] * s],
            vertical,
        },
        HandleSpec::Knob { size, center } => HandleSpec::Knob {
            size: size * s,
            center: [center[0] * s, center[1] * s],
        },
    }
}

fn joint_for(family: &ShapeFamily, d: &Dimensions, fraction: f64) -> JointSpec {
    let o = Vec3::from(d.origin);
    let front = o.z + d.depth / 2.0;
    match family {
        ShapeFamily::Drawer => {
            let band = d.drawer_band.expect("drawer band");
            let drawer_depth = d.depth - d.wall - 0.01;
            JointSpec {
                kind: JointKind::Prismatic,
                axis: [0.0, 0.0, 1.0],
                location: [o.x, o.y + band[0], front + d.panel_thickness],
                limits: [0.0, fraction * drawer_depth],
            }
        }
        ShapeFamily::Door => {
            let (x, axis) = match d.hinge.expect("hinge") {
                HingeSide::Left => (o.x - d.width / 2.0, [0.0, -1.0, 0.0]),
                HingeSide::Right => (o.x + d.width / 2.0, [0.0, 1.0, 0.0]),
            };
            JointSpec {
                kind: JointKind::Revolute,
                axis,
                location: [x, o.y, front],
                limits: [0.0, fraction * PI],
            }
        }
    }
}

fn aabb(min: [f64; 3], max: [f64; 3]) -> Obb {
    Obb::aligned(Vec3::from(min), Vec3::from(max))
}

/// Body boxes and part boxes (at q = 0) from the dimension parameters.
fn build_boxes(family: &ShapeFamily, d: &Dimensions, handle: &HandleSpec) -> (Vec<Obb>, Vec<PartBox>) {
    let o = Vec3::from(d.origin);
    let (hw, hh, hd, t) = (d.width / 2.0, d.height / 2.0, d.depth / 2.0, d.wall);
    let (x0, x1) = (o.x - hw, o.x + hw);
    let (y0, y1) = (o.y - hh, o.y + hh);
    let (z0, z1) = (o.z - hd, o.z + hd);
    let mut body = vec![
        aabb([x0, y1 - t, z0], [x1, y1, z1]),         // top
        aabb([x0, y0, z0], [x1, y0 + t, z1]),         // bottom
        aabb([x0, y0 + t, z0], [x0 + t, y1 - t, z1]), // left
        aabb([x1 - t, y0 + t, z0], [x1, y1 - t, z1]), // right
        aabb([x0 + t, y0 + t, z0], [x1 - t, y1 - t, z0 + t]), // back
    ];
    let pt = d.panel_thickness;
    let mut part = Vec::new();
    let front_z = match family {
        ShapeFamily::Drawer => {
            let [b0, b1] = d.drawer_band.expect("drawer band");
            let (yb0, yb1) = (o.y + b0, o.y + b1);
            // static front boards above and below the drawer
            if yb0 > y0 + t + 1e-6 {
                body.push(aabb([x0 + t, y0 + t, z1 - t], [x1 - t, yb0, z1]));
            }
            if yb1 < y1 - t - 1e-6 {
                body.push(aabb([x0 + t, yb1, z1 - t], [x1 - t, y1 - t, z1]));
            }
            if d.legs {
                let leg = 0.04;
                for (lx, lz) in [(x0, z0), (x1 - leg, z0), (x0, z1 - leg), (x1 - leg, z1 - leg)] {
                    body.push(aabb([lx, y0 - 0.4 * d.height, lz], [lx + leg, y0, lz + leg]));
                }
            }
            let gap = 0.004;
            // front board and drawer box
            part.push(PartBox {
                obb: aabb([x0 + t / 2.0, yb0, z1], [x1 - t / 2.0, yb1, z1 + pt]),
                handle: false,
            });
            part.push(PartBox {
                obb: aabb(
                    [x0 + t + gap, yb0 + gap, z0 + t + 0.01],
                    [x1 - t - gap, yb1 - gap, z1],
                ),
                handle: false,
            });
            z1 + pt
        }
        ShapeFamily::Door => {
            part.push(PartBox {
                obb: aabb([x0, y0, z1], [x1, y1, z1 + pt]),
                handle: false,
            });
            z1 + pt
        }
    };
    match *handle {
        HandleSpec::None => {}
        HandleSpec::Bar {
            length,
            thickness,
            standoff,
            center,
            vertical,
        } => {
            let (cx, cy) = (o.x + center[0], o.y + center[1]);
            let zb = front_z + standoff;
            let half_len = length / 2.0;
            let ht = thickness / 2.0;
            let (hx, hy) = if vertical { (ht, half_len) } else { (half_len, ht) };
            part.push(PartBox {
                obb: aabb([cx - hx, cy - hy, zb], [cx + hx, cy + hy, zb + thickness]),
                handle: true,
            });
            let post = 0.6 * thickness;
            let inset = (half_len - 1.5 * post).max(0.0);
            for s in [-1.0, 1.0] {
                let (px, py) = if vertical {
                    (cx, cy + s * inset)
                } else {
                    (cx + s * inset, cy)
                };
                part.push(PartBox {
                    obb: aabb(
                        [px - post / 2.0, py - post / 2.0, front_z],
                        [px + post / 2.0, py + post / 2.0, zb],
                    ),
                    handle: true,
                });
            }
        }
        HandleSpec::Knob { size, center } => {
            let (cx, cy) = (o.x + center[0], o.y + center[1]);
            let h = size / 2.0;
            part.push(PartBox {
                obb: aabb([cx - h, cy - h, front_z], [cx + h, cy + h, front_z + size]),
                handle: true,
            });
        }
    }
    (body, part)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn generation_is_deterministic() {
        let a = generate_shape(ShapeFamily::Drawer, 1);
        let b = generate_shape(ShapeFamily::Drawer, 1);
        assert_eq!(a, b);
        let c = generate_shape(ShapeFamily::Drawer, 2);
        assert_ne!(a.spec, c.spec);
    }

    #[test]
    fn drawers_are_horizontal_prismatic() {
        for seed in 0..100 {
            let obj = generate_shape(ShapeFamily::Drawer, seed);
            assert_eq!(obj.joint_kind(), JointKind::Prismatic);
            assert!(obj.joint_axis.y.abs() < 1e-12);
            assert!(obj.limits[0] >= 0.0 && obj.limits[1] <= 1.0 && obj.limits[0] < obj.limits[1]);
        }
    }

    #[test]
    fn doors_are_revolute_within_half_turn() {
        for seed in 0..100 {
            let obj = generate_shape(ShapeFamily::Door, seed);
            assert_eq!(obj.joint_kind(), JointKind::Revolute);
            assert!(obj.limits[0] >= 0.0 && obj.limits[1] <= PI);
            assert!((obj.joint_axis.norm() - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn closed_shape_fits_unit_cube() {
        for seed in 0..50 {
            for fam in [ShapeFamily::Door, ShapeFamily::Drawer] {
                let obj = generate_shape(fam, seed);
                let (lo, hi) = obj.bounds_at(0.0);
                assert!(((hi - lo).max() - 1.0).abs() < 1e-9);
                assert!(((hi + lo) * 0.5).norm() < 1e-9);
            }
        }
    }

    #[test]
    fn door_opens_outward() {
        for seed in 0..20 {
            let obj = generate_shape(ShapeFamily::Door, seed);
            let panel0 = obj.part_boxes_at(0.0)[0].obb.center;
            let panel1 = obj.part_boxes_at(0.5)[0].obb.center;
            assert!(panel1.z > panel0.z);
        }
    }

    #[test]
    fn part_transform_inverse() {
        let obj = generate_shape(ShapeFamily::Door, 3);
        let tf = obj.part_transform(0.7);
        let p = Vec3::new(0.1, -0.2, 0.3);
        assert!((tf.inverse_apply(&tf.apply(&p)) - p).norm() < 1e-12);
    }

    #[test]
    fn spec_json_round_trip_rebuilds_identical_geometry() {
        let obj = generate_shape(ShapeFamily::Drawer, 9);
        let json = serde_json::to_string(&obj.spec).unwrap();
        let v: serde_json::Value = serde_json::from_str(&json).unwrap();
        for key in ["category", "seed", "dimensions", "handle", "joint"] {
            assert!(v.get(key).is_some(), "missing {key}");
        }
        assert!(v["joint"].get("type").is_some());
        let back = ArticulatedObject::from_spec(serde_json::from_str(&json).unwrap()).unwrap();
        assert_eq!(back, obj);
    }

    #[test]
    fn invalid_spec_rejected() {
        let mut spec = generate_shape(ShapeFamily::Drawer, 4).spec;
        spec.joint.limits = [0.5, 0.5];
        assert!(ArticulatedObject::from_spec(spec.clone()).is_err());
        spec.joint.limits = [0.0, 0.5];
        spec.joint.axis = [0.0, 0.0, 2.0];
        assert!(ArticulatedObject::from_spec(spec).is_err());
    }
}
