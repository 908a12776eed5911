//! Minimal ASCII PLY for point clouds with optional vertex colors.

use std::fmt::Write as _;
use std::path::Path;

use crate::artsim::PointCloud;
use crate::error::{Error, Result};
use crate::geometry::Vec3;

/// PLY text for `cloud`; `comments` become header comment lines.
pub fn cloud_to_ply(cloud: &PointCloud, colors: Option<&[[u8; 3]]>, comments: &[String]) -> Result<String> {
    if let Some(c) = colors {
        if c.len() != cloud.len() {
            return Err(Error::Validation("one color per point is required".into()));
        }
    }
    let mut s = String::from("ply\nformat ascii 1.0\n");
    for c in comments {
        writeln!(s, "comment {}", c.replace('\n', " ")).unwrap();
    }
    writeln!(s, "element vertex {}", cloud.len()).unwrap();
    for p in ["x", "y", "z", "nx", "ny", "nz"] {
        writeln!(s, "property float {p}").unwrap();
    }
    s.push_str("property uchar part\nproperty uchar handle\n");
    if colors.is_some() {
        s.push_str("property uchar red\nproperty uchar green\nproperty uchar blue\n");
    }
    s.push_str("end_header\n");
    for i in 0..cloud.len() {
        let (p, n) = (cloud.points[i], cloud.normals[i]);
        write!(
            s,
            "{} {} {} {} {} {} {} {}",
            p.x, p.y, p.z, n.x, n.y, n.z, cloud.part_mask[i] as u8, cloud.handle_mask[i] as u8
        )
        .unwrap();
        if let Some(c) = colors {
            write!(s, " {} {} {}", c[i][0], c[i][1], c[i][2]).unwrap();
        }
        s.push('\n');
    }
    Ok(s)
}

pub fn write_ply(path: &Path, cloud: &PointCloud, colors: Option<&[[u8; 3]]>, comments: &[String]) -> Result<()> {
    std::fs::write(path, cloud_to_ply(cloud, colors, comments)?).map_err(|e| Error::io(path, e))
}

/// Positions, normals and masks of a PLY written by [`cloud_to_ply`]. Face labels are not stored.
pub fn read_ply(path: &Path) -> Result<PointCloud> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_ply(&text)
}

pub fn parse_ply(text: &str) -> Result<PointCloud> {
    let bad = |m: &str| Error::Validation(format!("malformed ply: {m}"));
    let mut lines = text.lines();
    if lines.next() != Some("ply") {
        return Err(bad("missing magic"));
    }
    let mut n = None;
    for line in lines.by_ref() {
        if let Some(rest) = line.strip_prefix("element vertex ") {
            n = Some(rest.trim().parse::<usize>().map_err(|_| bad("vertex count"))?);
        }
        if line == "end_header" {
            break;
        }
    }
    let n = n.ok_or_else(|| bad("no vertex element"))?;
    let mut pc = PointCloud {
        points: Vec::with_capacity(n),
        normals: Vec::with_capacity(n),
        part_mask: Vec::with_capacity(n),
        handle_mask: Vec::with_capacity(n),
        part_faces: vec![None; n],
    };
    for _ in 0..n {
        let v: Vec<f64> = lines
            .next()
            .ok_or_else(|| bad("truncated body"))?
            .split_whitespace()
            .map(|t| t.parse::<f64>().map_err(|_| bad("number")))
            .collect::<Result<_>>()?;
        if v.len() < 8 {
            return Err(bad("short vertex row"));
        }
        pc.points.push(Vec3::new(v[0], v[1], v[2]));
        pc.normals.push(Vec3::new(v[3], v[4], v[5]));
        pc.part_mask.push(v[6] != 0.0);
        pc.handle_mask.push(v[7] != 0.0);
    }
    Ok(pc)
}
