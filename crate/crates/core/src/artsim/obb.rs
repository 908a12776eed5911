use crate::geometry::{Mat3, Vec3};

/// Oriented box. Columns of `rotation` are the box axes in world coordinates.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Obb {
    pub center: Vec3,
    pub half: Vec3,
    pub rotation: Mat3,
}

/// Which face of a box: local axis index and sign of its outward normal.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, serde::Serialize, serde::Deserialize)]
pub struct Face {
    pub axis: u8,
    pub positive: bool,
}

impl Face {
    pub fn sign(&self) -> f64 {
        if self.positive {
            1.0
        } else {
            -1.0
        }
    }

    pub fn index(&self) -> u8 {
        self.axis * 2 + u8::from(self.positive)
    }

    pub fn from_index(i: u8) -> Self {
        Face {
            axis: i / 2,
            positive: i % 2 == 1,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RayHit {
    pub t: f64,
    pub face: Face,
}

impl Obb {
    pub fn aligned(min: Vec3, max: Vec3) -> Self {
        Obb {
            center: (min + max) * 0.5,
            half: (max - min) * 0.5,
            rotation: Mat3::identity(),
        }
    }

    pub fn to_local(&self, p: &Vec3) -> Vec3 {
        self.rotation.transpose() * (p - self.center)
    }

    pub fn contains(&self, p: &Vec3, eps: f64) -> bool {
        let l = self.to_local(p);
        (0..3).all(|k| l[k].abs() <= self.half[k] + eps)
    }

    pub fn face_normal(&self, face: Face) -> Vec3 {
        self.rotation.column(face.axis as usize) * face.sign()
    }

    pub fn face_center(&self, face: Face) -> Vec3 {
        self.center + self.face_normal(face) * self.half[face.axis as usize]
    }

    pub fn corners(&self) -> [Vec3; 8] {
        std::array::from_fn(|i| {
            let s = Vec3::new(
                if i & 1 == 0 { -1.0 } else { 1.0 },
                if i & 2 == 0 { -1.0 } else { 1.0 },
                if i & 4 == 0 { -1.0 } else { 1.0 },
            );
            self.center + self.rotation * s.component_mul(&self.half)
        })
    }

    /// Slab test returning the parameter interval `[t_enter, t_exit]` of the
    /// line `origin + t * dir` inside the box and the entry face.
    pub fn line_interval(&self, origin: &Vec3, dir: &Vec3) -> Option<(f64, f64, Face)> {
        let o = self.to_local(origin);
        let d = self.rotation.transpose() * dir;
        let mut t0 = f64::NEG_INFINITY;
        let mut t1 = f64::INFINITY;
        let mut face = Face {
            axis: 0,
            positive: false,
        };
        for k in 0..3 {
            if d[k].abs() < 1e-15 {
                if o[k].abs() > self.half[k] {
                    return None;
                }
                continue;
            }
            let inv = 1.0 / d[k];
            let mut a = (-self.half[k] - o[k]) * inv;
            let mut b = (self.half[k] - o[k]) * inv;
            // entering through the -k face when moving along +k
            let mut entry_positive = false;
            if a > b {
                std::mem::swap(&mut a, &mut b);
                entry_positive = true;
            }
            if a > t0 {
                t0 = a;
                face = Face {
                    axis: k as u8,
                    positive: entry_positive,
                };
            }
            t1 = t1.min(b);
            if t0 > t1 {
                return None;
            }
        }
        Some((t0, t1, face))
    }

    /// First entry of a ray starting outside the box.
    pub fn ray_hit(&self, origin: &Vec3, dir: &Vec3, t_min: f64) -> Option<RayHit> {
        let (t0, _t1, face) = self.line_interval(origin, dir)?;
        (t0 > t_min).then_some(RayHit { t: t0, face })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ray_hits_front_face() {
        let b = Obb::aligned(Vec3::new(-0.5, -0.5, -0.5), Vec3::new(0.5, 0.5, 0.5));
        let hit = b.ray_hit(&Vec3::new(0.0, 0.0, 2.0), &-Vec3::z(), 0.0).unwrap();
        assert!((hit.t - 1.5).abs() < 1e-12);
        assert_eq!(b.face_normal(hit.face), Vec3::z());
    }

    #[test]
    fn ray_misses() {
        let b = Obb::aligned(Vec3::new(-0.5, -0.5, -0.5), Vec3::new(0.5, 0.5, 0.5));
        assert!(b.ray_hit(&Vec3::new(2.0, 0.0, 2.0), &-Vec3::z(), 0.0).is_none());
    }

    #[test]
    fn face_index_round_trip() {
        for i in 0..6 {
            assert_eq!(Face::from_index(i).index(), i);
        }
    }
}
