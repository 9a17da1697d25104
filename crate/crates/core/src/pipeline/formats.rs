//! On-disk formats: OBJ meshes with a TOML sidecar for the rig, 16-bit depth
//! images or headerless little-endian depth, 8-bit masks, detection lists
//! and CSV trajectories.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use image::{GrayImage, ImageBuffer, Luma};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{CameraIntrinsics, DepthFrame, TriangleMesh};
use crate::kinematics::{Joint, JointKind, Pose, Skeleton, SkinWeights, Vec3};
use crate::model::{Fingertip, Part, PhysicalProperties, SkinnedModel};
use crate::salient::{BoundingBox, Detection};

fn read_text(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(|e| Error::io(path, e))
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

fn label(path: &Path) -> String {
    path.display().to_string()
}

/// Parses `v`, `vn` and `f` lines. Face indices are 1-based and may carry
/// `/vt/vn` suffixes; polygons are fan-triangulated. Normals are kept when
/// there is exactly one per vertex, otherwise they are recomputed. Other
/// records are ignored.
pub fn parse_obj(text: &str, source: &str) -> Result<TriangleMesh> {
    let mut vertices = Vec::new();
    let mut normals: Vec<Vec3> = Vec::new();
    let mut triangles = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let line_no = i + 1;
        let mut it = line.split_whitespace();
        match it.next() {
            Some(kind @ ("v" | "vn")) => {
                let c: Vec<f64> = it
                    .take(3)
                    .map(|s| s.parse::<f64>())
                    .collect::<std::result::Result<_, _>>()
                    .map_err(|e| Error::parse(source, line_no, format!("bad coordinate: {e}")))?;
                if c.len() != 3 {
                    return Err(Error::parse(source, line_no, format!("{kind} needs three coordinates")));
                }
                let p = Vec3::new(c[0], c[1], c[2]);
                if kind == "v" {
                    vertices.push(p);
                } else {
                    let n = if (p.norm() - 1.0).abs() < 1e-9 { p } else { p.normalize() };
                    if !n.iter().all(|x| x.is_finite()) {
                        return Err(Error::parse(source, line_no, "zero normal"));
                    }
                    normals.push(n);
                }
            }
            Some("f") => {
                let idx: Vec<usize> = it
                    .map(|s| {
                        let head = s.split('/').next().unwrap_or("");
                        match head.parse::<i64>() {
                            Ok(k) if k > 0 && (k as usize) <= vertices.len() => Ok(k as usize - 1),
                            Ok(k) if k < 0 && k.unsigned_abs() as usize <= vertices.len() => {
                                Ok(vertices.len() - k.unsigned_abs() as usize)
                            }
                            _ => Err(Error::parse(source, line_no, format!("bad face index {s:?}"))),
                        }
                    })
                    .collect::<Result<_>>()?;
                if idx.len() < 3 {
                    return Err(Error::parse(source, line_no, "face needs at least three vertices"));
                }
                for k in 1..idx.len() - 1 {
                    triangles.push([idx[0], idx[k], idx[k + 1]]);
                }
            }
            _ => {}
        }
    }
    if !normals.is_empty() && normals.len() == vertices.len() {
        TriangleMesh::with_normals(vertices, triangles, normals)
    } else {
        TriangleMesh::new(vertices, triangles)
    }
}

/// Writes vertices, per-vertex normals and faces.
pub fn format_obj(mesh: &TriangleMesh) -> String {
    let mut out = String::new();
    for v in &mesh.vertices {
        let _ = writeln!(out, "v {} {} {}", v.x, v.y, v.z);
    }
    for n in &mesh.normals {
        let _ = writeln!(out, "vn {} {} {}", n.x, n.y, n.z);
    }
    for t in &mesh.triangles {
        let [a, b, c] = t.map(|k| k + 1);
        let _ = writeln!(out, "f {a}//{a} {b}//{b} {c}//{c}");
    }
    out
}

pub fn read_obj(path: &Path) -> Result<TriangleMesh> {
    parse_obj(&read_text(path)?, &label(path))
}

pub fn write_obj(path: &Path, mesh: &TriangleMesh) -> Result<()> {
    write_text(path, &format_obj(mesh))
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct PartDoc {
    name: String,
    #[serde(default)]
    support: bool,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
enum KindDoc {
    Root,
    Revolute,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct JointDoc {
    name: String,
    kind: KindDoc,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    parent: Option<String>,
    part: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    axis: Option<[f64; 3]>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    point: Option<[f64; 3]>,
    /// Radians.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    lower: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    upper: Option<f64>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct BodyDoc {
    name: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    object: Option<PhysicalProperties>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct FingertipDoc {
    name: String,
    vertices: Vec<usize>,
}

/// Sidecar document describing everything but the mesh geometry.
#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ModelDoc {
    name: String,
    /// Mesh path, relative to the sidecar.
    mesh: String,
    parts: Vec<PartDoc>,
    /// One entry per root, in skeleton order.
    bodies: Vec<BodyDoc>,
    joints: Vec<JointDoc>,
    #[serde(default)]
    fingertips: Vec<FingertipDoc>,
    /// Per vertex `[[joint, weight], ...]`.
    weights: Vec<Vec<(usize, f64)>>,
}

fn line_of(text: &str, offset: usize) -> usize {
    text[..offset.min(text.len())].matches('\n').count() + 1
}

/// Deserializes TOML, reporting errors with their line number.
pub fn parse_toml<T: serde::de::DeserializeOwned>(text: &str, source: &str) -> Result<T> {
    toml::from_str(text).map_err(|e| {
        let line = e.span().map(|s| line_of(text, s.start)).unwrap_or(0);
        Error::parse(source, line, e.message().to_string())
    })
}

fn model_doc(model: &SkinnedModel, mesh: String) -> ModelDoc {
    let sk = &model.skeleton;
    let joints = sk
        .joints()
        .iter()
        .enumerate()
        .map(|(j, joint)| {
            let parent = joint.parent.map(|p| sk.joints()[p].name.clone());
            let part = model.parts[model.joint_part[j]].name.clone();
            match joint.kind {
                JointKind::Root => JointDoc {
                    name: joint.name.clone(),
                    kind: KindDoc::Root,
                    parent,
                    part,
                    axis: None,
                    point: None,
                    lower: None,
                    upper: None,
                },
                JointKind::Revolute {
                    axis,
                    point,
                    lower,
                    upper,
                } => JointDoc {
                    name: joint.name.clone(),
                    kind: KindDoc::Revolute,
                    parent,
                    part,
                    axis: Some(axis.into()),
                    point: Some(point.into()),
                    lower: Some(lower),
                    upper: Some(upper),
                },
            }
        })
        .collect();
    ModelDoc {
        name: model.name.clone(),
        mesh,
        parts: model
            .parts
            .iter()
            .map(|p| PartDoc {
                name: p.name.clone(),
                support: p.support,
            })
            .collect(),
        bodies: model
            .bodies
            .iter()
            .map(|b| BodyDoc {
                name: b.name.clone(),
                object: b.object,
            })
            .collect(),
        joints,
        fingertips: model
            .fingertips
            .iter()
            .map(|f| FingertipDoc {
                name: f.name.clone(),
                vertices: f.vertices.clone(),
            })
            .collect(),
        weights: model.weights.rows().to_vec(),
    }
}

fn model_from_doc(doc: ModelDoc, mesh: TriangleMesh, source: &str) -> Result<SkinnedModel> {
    let bad = |m: String| Error::parse(source, 0, m);
    let part_index = |name: &str| {
        doc.parts
            .iter()
            .position(|p| p.name == name)
            .ok_or_else(|| bad(format!("unknown part {name:?}")))
    };
    let mut joints = Vec::with_capacity(doc.joints.len());
    let mut joint_part = Vec::with_capacity(doc.joints.len());
    for j in &doc.joints {
        let parent = match &j.parent {
            None => None,
            Some(p) => Some(
                doc.joints
                    .iter()
                    .position(|q| &q.name == p)
                    .ok_or_else(|| bad(format!("joint {:?} has unknown parent {p:?}", j.name)))?,
            ),
        };
        let joint = match (j.kind, parent) {
            (KindDoc::Root, None) => Joint::root(j.name.clone()),
            (KindDoc::Root, Some(_)) => return Err(bad(format!("root joint {:?} has a parent", j.name))),
            (KindDoc::Revolute, None) => return Err(bad(format!("revolute joint {:?} has no parent", j.name))),
            (KindDoc::Revolute, Some(p)) => match (j.axis, j.point, j.lower, j.upper) {
                (Some(a), Some(o), Some(l), Some(u)) => Joint::revolute(j.name.clone(), p, a.into(), o.into(), (l, u)),
                _ => return Err(bad(format!("revolute joint {:?} needs axis, point, lower and upper", j.name))),
            },
        };
        joints.push(joint);
        joint_part.push(part_index(&j.part)?);
    }
    SkinnedModel::new(
        doc.name,
        mesh,
        Skeleton::new(joints)?,
        SkinWeights::new(doc.weights),
        doc.parts
            .into_iter()
            .map(|p| Part {
                name: p.name,
                support: p.support,
            })
            .collect(),
        joint_part,
        doc.fingertips
            .into_iter()
            .map(|f| Fingertip {
                name: f.name,
                vertices: f.vertices,
            })
            .collect(),
        doc.bodies.into_iter().map(|b| (b.name, b.object)).collect(),
    )
}

/// Loads a model from its sidecar; the mesh path inside is resolved
/// relative to the sidecar.
pub fn load_model(path: &Path) -> Result<SkinnedModel> {
    let source = label(path);
    let doc: ModelDoc = parse_toml(&read_text(path)?, &source)?;
    let mesh_path = path.parent().unwrap_or(Path::new(".")).join(&doc.mesh);
    let mesh = read_obj(&mesh_path)?;
    model_from_doc(doc, mesh, &source)
}

/// Writes the sidecar to `path` and the mesh next to it with an `.obj`
/// extension.
pub fn save_model(path: &Path, model: &SkinnedModel) -> Result<()> {
    let mesh_path = path.with_extension("obj");
    let mesh_name = mesh_path
        .file_name()
        .map(|n| n.to_string_lossy().into_owned())
        .ok_or_else(|| Error::Config(format!("bad model path {}", path.display())))?;
    let doc = model_doc(model, mesh_name);
    let text = toml::to_string(&doc).map_err(|e| Error::Config(e.to_string()))?;
    write_obj(&mesh_path, &model.mesh)?;
    write_text(path, &text)
}

fn image_error(path: &Path, source: image::ImageError) -> Error {
    Error::Image {
        path: path.to_path_buf(),
        source,
    }
}

fn check_size(path: &Path, k: &CameraIntrinsics, w: usize, h: usize) -> Result<()> {
    if (w, h) != (k.width, k.height) {
        return Err(Error::Config(format!(
            "{} is {w}x{h}, intrinsics expect {}x{}",
            path.display(),
            k.width,
            k.height
        )));
    }
    Ok(())
}

/// Reads a 16-bit single-channel PNG in millimetres. Zero is invalid.
pub fn read_depth_png(path: &Path, intrinsics: &CameraIntrinsics) -> Result<DepthFrame> {
    let img = image::open(path).map_err(|e| image_error(path, e))?.into_luma16();
    check_size(path, intrinsics, img.width() as usize, img.height() as usize)?;
    DepthFrame::new(*intrinsics, img.into_raw().into_iter().map(f64::from).collect())
}

fn depth_u16(frame: &DepthFrame) -> Vec<u16> {
    frame
        .depth
        .iter()
        .map(|&d| if d.is_finite() { d.round().clamp(0.0, u16::MAX as f64) as u16 } else { 0 })
        .collect()
}

/// Writes depth rounded to whole millimetres. The mask is not stored.
pub fn write_depth_png(path: &Path, frame: &DepthFrame) -> Result<()> {
    let img: ImageBuffer<Luma<u16>, Vec<u16>> =
        ImageBuffer::from_raw(frame.width() as u32, frame.height() as u32, depth_u16(frame))
            .ok_or_else(|| Error::Config("depth buffer size".into()))?;
    img.save(path).map_err(|e| image_error(path, e))
}

/// Reads headerless little-endian `u16` depth; dimensions come from the
/// intrinsics.
pub fn read_depth_raw(path: &Path, intrinsics: &CameraIntrinsics) -> Result<DepthFrame> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    if bytes.len() != 2 * intrinsics.pixel_count() {
        return Err(Error::LengthMismatch(format!(
            "{}: {} bytes for a {}x{} frame",
            path.display(),
            bytes.len(),
            intrinsics.width,
            intrinsics.height
        )));
    }
    let depth = bytes
        .chunks_exact(2)
        .map(|c| u16::from_le_bytes([c[0], c[1]]) as f64)
        .collect();
    DepthFrame::new(*intrinsics, depth)
}

pub fn write_depth_raw(path: &Path, frame: &DepthFrame) -> Result<()> {
    let bytes: Vec<u8> = depth_u16(frame).into_iter().flat_map(u16::to_le_bytes).collect();
    fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

/// Reads an 8-bit mask image; nonzero pixels are kept.
pub fn read_mask_png(path: &Path, intrinsics: &CameraIntrinsics) -> Result<Vec<bool>> {
    let img = image::open(path).map_err(|e| image_error(path, e))?.into_luma8();
    let (w, h) = (img.width() as usize, img.height() as usize);
    if (w, h) != (intrinsics.width, intrinsics.height) {
        return Err(Error::MaskSize {
            width: intrinsics.width,
            height: intrinsics.height,
            mask_width: w,
            mask_height: h,
        });
    }
    Ok(img.into_raw().into_iter().map(|p| p > 0).collect())
}

pub fn write_mask_png(path: &Path, mask: &[bool], width: usize, height: usize) -> Result<()> {
    let img = GrayImage::from_raw(width as u32, height as u32, mask.iter().map(|&m| if m { 255 } else { 0 }).collect())
        .ok_or_else(|| Error::LengthMismatch(format!("{} mask values for {width}x{height}", mask.len())))?;
    img.save(path).map_err(|e| image_error(path, e))
}

/// One line of a detections file.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct DetectionRecord {
    pub frame: usize,
    pub bbox: BoundingBox,
    pub confidence: f64,
}

/// Parses `frame x y w h confidence` records separated by whitespace or
/// commas. Blank lines and `#` comments are skipped.
pub fn parse_detections(text: &str, source: &str) -> Result<Vec<DetectionRecord>> {
    let mut out = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let line = line.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split(|c: char| c == ',' || c.is_whitespace()).filter(|s| !s.is_empty()).collect();
        if fields.len() != 6 {
            return Err(Error::parse(source, i + 1, format!("expected 6 fields, found {}", fields.len())));
        }
        let frame = fields[0]
            .parse::<usize>()
            .map_err(|e| Error::parse(source, i + 1, format!("bad frame index: {e}")))?;
        let v: Vec<f64> = fields[1..]
            .iter()
            .map(|s| s.parse::<f64>())
            .collect::<std::result::Result<_, _>>()
            .map_err(|e| Error::parse(source, i + 1, format!("bad number: {e}")))?;
        out.push(DetectionRecord {
            frame,
            bbox: BoundingBox {
                x: v[0],
                y: v[1],
                w: v[2],
                h: v[3],
            },
            confidence: v[4],
        });
    }
    Ok(out)
}

pub fn read_detections(path: &Path) -> Result<Vec<DetectionRecord>> {
    parse_detections(&read_text(path)?, &label(path))
}

pub fn write_detections(path: &Path, records: &[DetectionRecord]) -> Result<()> {
    let mut out = String::new();
    for r in records {
        let b = &r.bbox;
        let _ = writeln!(out, "{} {} {} {} {} {}", r.frame, b.x, b.y, b.w, b.h, r.confidence);
    }
    write_text(path, &out)
}

/// Groups records by frame and extracts their point clouds. Boxes without
/// valid depth are dropped.
pub fn detections_per_frame(records: &[DetectionRecord], frames: &[DepthFrame]) -> Vec<Vec<Detection>> {
    let mut out = vec![Vec::new(); frames.len()];
    for r in records {
        if let Some(frame) = frames.get(r.frame) {
            if let Some(d) = Detection::from_frame(r.frame, r.bbox, r.confidence, frame) {
                out[r.frame].push(d);
            }
        }
    }
    out
}

fn csv_error(source: &str, e: csv::Error) -> Error {
    let line = e.position().map(|p| p.line() as usize).unwrap_or(0);
    Error::parse(source, line, e.to_string())
}

fn csv_write_error(path: &Path, e: csv::Error) -> Error {
    match e.into_kind() {
        csv::ErrorKind::Io(io) => Error::io(path, io),
        other => Error::Config(format!("{}: {other:?}", path.display())),
    }
}

fn parse_field<T: std::str::FromStr>(s: &str, source: &str, line: usize) -> Result<T>
where
    T::Err: std::fmt::Display,
{
    s.trim()
        .parse()
        .map_err(|e: T::Err| Error::parse(source, line, format!("bad value {s:?}: {e}")))
}

/// Writes `frame,theta_0,...` rows with a header.
pub fn write_trajectory(path: &Path, poses: &[Pose]) -> Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(|e| csv_write_error(path, e))?;
    let n = poses.first().map_or(0, Pose::len);
    let header: Vec<String> = std::iter::once("frame".to_string())
        .chain((0..n).map(|k| format!("theta_{k}")))
        .collect();
    w.write_record(&header).map_err(|e| csv_write_error(path, e))?;
    for (f, p) in poses.iter().enumerate() {
        let row: Vec<String> = std::iter::once(f.to_string())
            .chain(p.theta.iter().map(|x| x.to_string()))
            .collect();
        w.write_record(&row).map_err(|e| csv_write_error(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

/// Reads a trajectory; rows must be in frame order.
pub fn read_trajectory(path: &Path) -> Result<Vec<Pose>> {
    let source = label(path);
    let mut r = csv::Reader::from_path(path).map_err(|e| csv_error(&source, e))?;
    let mut out = Vec::new();
    for rec in r.records() {
        let rec = rec.map_err(|e| csv_error(&source, e))?;
        let line = rec.position().map_or(0, |p| p.line() as usize);
        let frame: usize = parse_field(&rec[0], &source, line)?;
        if frame != out.len() {
            return Err(Error::parse(&source, line, format!("expected frame {}, found {frame}", out.len())));
        }
        let theta = rec
            .iter()
            .skip(1)
            .map(|s| parse_field::<f64>(s, &source, line))
            .collect::<Result<Vec<_>>>()?;
        out.push(Pose::from_vec(theta));
    }
    Ok(out)
}

/// Writes `frame,joint,x,y,z` rows with a header.
pub fn write_joints(path: &Path, joints: &[Vec<Vec3>]) -> Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(|e| csv_write_error(path, e))?;
    w.write_record(["frame", "joint", "x", "y", "z"])
        .map_err(|e| csv_write_error(path, e))?;
    for (f, frame) in joints.iter().enumerate() {
        for (j, p) in frame.iter().enumerate() {
            w.write_record([f.to_string(), j.to_string(), p.x.to_string(), p.y.to_string(), p.z.to_string()])
                .map_err(|e| csv_write_error(path, e))?;
        }
    }
    w.flush().map_err(|e| Error::io(path, e))
}

/// Reads joint positions grouped by frame. Frames and joints must be
/// contiguous and in order.
pub fn read_joints(path: &Path) -> Result<Vec<Vec<Vec3>>> {
    let source = label(path);
    let mut r = csv::Reader::from_path(path).map_err(|e| csv_error(&source, e))?;
    let mut out: Vec<Vec<Vec3>> = Vec::new();
    for rec in r.records() {
        let rec = rec.map_err(|e| csv_error(&source, e))?;
        let line = rec.position().map_or(0, |p| p.line() as usize);
        if rec.len() != 5 {
            return Err(Error::parse(&source, line, format!("expected 5 fields, found {}", rec.len())));
        }
        let f: usize = parse_field(&rec[0], &source, line)?;
        let j: usize = parse_field(&rec[1], &source, line)?;
        if f == out.len() {
            out.push(Vec::new());
        }
        if f + 1 != out.len() || j != out[f].len() {
            return Err(Error::parse(&source, line, format!("row ({f}, {j}) out of order")));
        }
        let p = Vec3::new(
            parse_field(&rec[2], &source, line)?,
            parse_field(&rec[3], &source, line)?,
            parse_field(&rec[4], &source, line)?,
        );
        out[f].push(p);
    }
    Ok(out)
}

/// Frame files of a directory with the given extension, sorted by name.
pub fn list_frames(dir: &Path, extension: &str) -> Result<Vec<PathBuf>> {
    let mut out: Vec<PathBuf> = fs::read_dir(dir)
        .map_err(|e| Error::io(dir, e))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.is_file() && p.extension().is_some_and(|x| x.eq_ignore_ascii_case(extension)))
        .collect();
    out.sort();
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn obj_polygon_and_suffixes() {
        let m = parse_obj("# quad\nv 0 0 0\nv 1 0 0\nv 1 1 0\nv 0 1 0\nvn 0 0 1\nf 1//1 2//1 3//1 -1//1\n", "q").unwrap();
        assert_eq!(m.triangles, vec![[0, 1, 2], [0, 2, 3]]);
    }

    #[test]
    fn obj_error_has_line() {
        match parse_obj("v 0 0 0\nv 1 0 0\nf 1 2 7\n", "m.obj") {
            Err(Error::Parse { line, .. }) => assert_eq!(line, 3),
            other => panic!("{other:?}"),
        }
        match parse_obj("v 0 0\n", "m.obj") {
            Err(Error::Parse { line, .. }) => assert_eq!(line, 1),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn detections_parse() {
        let d = parse_detections("# f x y w h c\n0 10 20 5 6 3.5\n\n2,1,2,3,4,0.5\n", "d").unwrap();
        assert_eq!(d.len(), 2);
        assert_eq!(d[1].frame, 2);
        assert_eq!(d[1].bbox.h, 4.0);
        match parse_detections("0 1 2 3\n", "d") {
            Err(Error::Parse { line, .. }) => assert_eq!(line, 1),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn toml_error_line() {
        #[derive(Debug, Deserialize)]
        #[allow(dead_code)]
        struct T {
            a: f64,
        }
        match parse_toml::<T>("\n\na = \"x\"\n", "t.toml") {
            Err(Error::Parse { line, .. }) => assert_eq!(line, 3),
            other => panic!("{other:?}"),
        }
    }
}
