use rand::Rng;
use serde::{Deserialize, Serialize};

use super::camera::CameraView;
use super::obb::{Face, Obb};
use super::shape::{ArticulatedObject, PartBox};
use crate::error::{validation, Error, Result};
use crate::geometry::Vec3;
use crate::seeding;

/// A face of one of the movable part's boxes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct PartFace {
    pub part_box: u16,
    pub face: Face,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SurfaceHit {
    pub t: f64,
    pub point: Vec3,
    pub normal: Vec3,
    /// `None` for static body geometry.
    pub part_face: Option<PartFace>,
    pub handle: bool,
}

/// World-space boxes of a shape posed at joint coordinate `q`.
#[derive(Debug, Clone)]
pub struct PosedScene {
    pub body: Vec<Obb>,
    pub part: Vec<PartBox>,
}

impl PosedScene {
    pub fn new(obj: &ArticulatedObject, q: f64) -> Self {
        PosedScene {
            body: obj.body.clone(),
            part: obj.part_boxes_at(q),
        }
    }

    /// Nearest surface hit along a ray; boxes containing the origin are skipped.
    pub fn raycast(&self, origin: &Vec3, dir: &Vec3) -> Option<SurfaceHit> {
        const T_MIN: f64 = 1e-9;
        let mut best: Option<SurfaceHit> = None;
        let mut consider = |obb: &Obb, part_face: Option<u16>, handle: bool| {
            if let Some(hit) = obb.ray_hit(origin, dir, T_MIN) {
                if best.map_or(true, |b| hit.t < b.t) {
                    best = Some(SurfaceHit {
                        t: hit.t,
                        point: origin + dir * hit.t,
                        normal: obb.face_normal(hit.face),
                        part_face: part_face.map(|i| PartFace {
                            part_box: i,
                            face: hit.face,
                        }),
                        handle,
                    });
                }
            }
        };
        for b in &self.body {
            consider(b, None, false);
        }
        for (i, pb) in self.part.iter().enumerate() {
            consider(&pb.obb, Some(i as u16), pb.handle);
        }
        best
    }

    /// Length of the part material along the line through `p` in direction `axis`
    /// (union of touching/overlapping part boxes containing `p`).
    pub fn part_thickness(&self, p: &Vec3, axis: &Vec3) -> f64 {
        let axis = axis.normalize();
        let mut intervals: Vec<(f64, f64)> = self
            .part
            .iter()
            .filter_map(|pb| pb.obb.line_interval(p, &axis).map(|(a, b, _)| (a, b)))
            .collect();
        intervals.sort_by(|a, b| a.0.total_cmp(&b.0));
        let mut merged: Vec<(f64, f64)> = Vec::new();
        for (a, b) in intervals {
            match merged.last_mut() {
                Some(last) if a <= last.1 + 1e-9 => last.1 = last.1.max(b),
                _ => merged.push((a, b)),
            }
        }
        merged
            .into_iter()
            .find(|(a, b)| *a <= 0.0 && *b >= 0.0)
            .map_or(0.0, |(a, b)| b - a)
    }
}

/// Every pixel hit of the camera at joint coordinate `q`, in row-major order.
pub fn render_hits(obj: &ArticulatedObject, q: f64, view: &CameraView) -> Result<Vec<SurfaceHit>> {
    if !obj.in_limits(q) {
        return Err(validation(format!(
            "joint coordinate {q} outside limits {:?}",
            obj.limits
        )));
    }
    let scene = PosedScene::new(obj, q);
    let origin = view.position();
    let (fwd, right, up) = view.basis();
    let mut hits = Vec::new();
    for row in 0..view.intrinsics.height {
        for col in 0..view.intrinsics.width {
            let dir = view.pixel_ray_with(col, row, &fwd, &right, &up);
            if let Some(h) = scene.raycast(&origin, &dir) {
                hits.push(h);
            }
        }
    }
    Ok(hits)
}

/// Partial point cloud of the visible surface.
#[derive(Debug, Clone, PartialEq)]
pub struct PointCloud {
    pub points: Vec<Vec3>,
    pub normals: Vec<Vec3>,
    pub part_mask: Vec<bool>,
    pub handle_mask: Vec<bool>,
    pub part_faces: Vec<Option<PartFace>>,
}

impl PointCloud {
    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn part_indices(&self) -> Vec<usize> {
        (0..self.len()).filter(|&i| self.part_mask[i]).collect()
    }

    pub fn from_hits(hits: &[SurfaceHit]) -> Self {
        PointCloud {
            points: hits.iter().map(|h| h.point).collect(),
            normals: hits.iter().map(|h| h.normal).collect(),
            part_mask: hits.iter().map(|h| h.part_face.is_some()).collect(),
            handle_mask: hits.iter().map(|h| h.handle).collect(),
            part_faces: hits.iter().map(|h| h.part_face).collect(),
        }
    }

    pub fn select(&self, idx: &[usize]) -> Self {
        PointCloud {
            points: idx.iter().map(|&i| self.points[i]).collect(),
            normals: idx.iter().map(|&i| self.normals[i]).collect(),
            part_mask: idx.iter().map(|&i| self.part_mask[i]).collect(),
            handle_mask: idx.iter().map(|&i| self.handle_mask[i]).collect(),
            part_faces: idx.iter().map(|&i| self.part_faces[i]).collect(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.points.len();
        if [
            self.normals.len(),
            self.part_mask.len(),
            self.handle_mask.len(),
            self.part_faces.len(),
        ]
        .iter()
        .any(|&l| l != n)
        {
            return Err(validation("point cloud attribute lengths differ"));
        }
        if self.normals.iter().any(|v| (v.norm() - 1.0).abs() > 1e-6) {
            return Err(validation("point cloud normals must be unit length"));
        }
        Ok(())
    }
}

/// Greedy farthest-point sampling starting at `start`.
pub fn farthest_point_sampling(points: &[Vec3], k: usize, start: usize) -> Vec<usize> {
    let n = points.len();
    let k = k.min(n);
    if k == 0 {
        return Vec::new();
    }
    let mut chosen = Vec::with_capacity(k);
    let mut dist = vec![f64::INFINITY; n];
    let mut current = start.min(n - 1);
    for _ in 0..k {
        chosen.push(current);
        let c = points[current];
        let mut best = 0;
        let mut best_d = -1.0;
        for (i, p) in points.iter().enumerate() {
            let d = (p - c).norm_squared();
            if d < dist[i] {
                dist[i] = d;
            }
            if dist[i] > best_d {
                best_d = dist[i];
                best = i;
            }
        }
        current = best;
    }
    chosen
}

/// Ray-cast the visible surface and downsample it to `n_points` by farthest-point sampling.
pub fn render_pointcloud(
    obj: &ArticulatedObject,
    q: f64,
    view: &CameraView,
    n_points: usize,
    seed: u64,
) -> Result<PointCloud> {
    let hits = render_hits(obj, q, view)?;
    if hits.len() < n_points {
        return Err(Error::NotEnoughPoints {
            requested: n_points,
            visible: hits.len(),
        });
    }
    let full = PointCloud::from_hits(&hits);
    let start = seeding::rng(seed).random_range(0..hits.len());
    let idx = farthest_point_sampling(&full.points, n_points, start);
    Ok(full.select(&idx))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::artsim::camera::{sample_camera, Intrinsics};
    use crate::artsim::shape::{generate_shape, ShapeFamily};

    fn small() -> Intrinsics {
        Intrinsics {
            width: 96,
            height: 96,
            fov_y_deg: 80.0,
        }
    }

    #[test]
    fn closed_drawer_frontal_view_sees_no_interior() {
        let obj = generate_shape(ShapeFamily::Drawer, 3);
        let view = CameraView::new(0.0, 0.6, small());
        let hits = render_hits(&obj, 0.0, &view).unwrap();
        // a closed drawer only shows its front board, handle and edges
        let drawer_box = 1u16;
        for h in &hits {
            if let Some(pf) = h.part_face {
                assert!(pf.part_box != drawer_box || h.point.z >= obj.part[0].obb.center.z - 0.02);
            }
        }
        // nothing visible is inside the cabinet cavity
        let d = obj.spec.dimensions;
        let o = Vec3::from(d.origin);
        for h in &hits {
            let l = h.point - o;
            let interior = l.x.abs() < d.width / 2.0 - d.wall - 1e-6
                && l.y.abs() < d.height / 2.0 - d.wall - 1e-6
                && l.z < d.depth / 2.0 - d.wall - 1e-6
                && l.z > -d.depth / 2.0 + d.wall + 1e-6;
            assert!(!interior, "visible interior point {:?}", h.point);
        }
    }

    #[test]
    fn rendering_is_deterministic() {
        let obj = generate_shape(ShapeFamily::Door, 2);
        let view = CameraView::new(0.4, 0.7, small());
        let a = render_pointcloud(&obj, 0.3, &view, 256, 5).unwrap();
        let b = render_pointcloud(&obj, 0.3, &view, 256, 5).unwrap();
        assert_eq!(a, b);
        a.validate().unwrap();
    }

    #[test]
    fn returned_points_are_unoccluded() {
        let obj = generate_shape(ShapeFamily::Drawer, 8);
        let mut rng = seeding::rng(1);
        let view = sample_camera(&mut rng, small());
        let q = obj.limits[1] * 0.5;
        let cloud = render_pointcloud(&obj, q, &view, 300, 2).unwrap();
        let scene = PosedScene::new(&obj, q);
        let cam = view.position();
        for p in &cloud.points {
            let dir = (p - cam).normalize();
            let hit = scene.raycast(&cam, &dir).unwrap();
            assert!((hit.t - (p - cam).norm()).abs() < 1e-6);
        }
    }

    #[test]
    fn too_many_points_is_an_error() {
        let obj = generate_shape(ShapeFamily::Drawer, 1);
        let view = CameraView::new(0.0, 0.7, Intrinsics { width: 8, height: 8, fov_y_deg: 80.0 });
        assert!(matches!(
            render_pointcloud(&obj, 0.0, &view, 1000, 0),
            Err(Error::NotEnoughPoints { .. })
        ));
    }

    #[test]
    fn out_of_limits_rejected() {
        let obj = generate_shape(ShapeFamily::Drawer, 1);
        let view = CameraView::new(0.0, 0.7, small());
        assert!(render_hits(&obj, obj.limits[1] + 0.1, &view).is_err());
    }

    #[test]
    fn fps_spreads_points() {
        let pts: Vec<Vec3> = (0..100).map(|i| Vec3::new(i as f64, 0.0, 0.0)).collect();
        let idx = farthest_point_sampling(&pts, 3, 0);
        assert_eq!(idx, vec![0, 99, 49]);
    }

    #[test]
    fn thickness_of_box_along_axis() {
        let obj = generate_shape(ShapeFamily::Door, 0);
        let scene = PosedScene::new(&obj, 0.0);
        let panel = scene.part[0].obb;
        let t = scene.part_thickness(&panel.center, &Vec3::z());
        assert!((t - 2.0 * panel.half.z).abs() < 1e-9);
    }
}
