//! File formats: marker/pose/keypoint/scale CSV tables and the
//! self-describing named-array container used for body assets and network
//! weights. All numeric output is printed with 9 significant digits so golden
//! files stay stable; writes go to a temp file and are renamed into place.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use nalgebra::{DVector, Vector3};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::ik::{MarkerFrame, MarkerFrameSequence};
use crate::skeleton::{Pose, SkeletonModel};

/// 9 significant digits, scientific; deterministic across runs.
pub fn fmt_g9(x: f64) -> String {
    format!("{x:.8e}")
}

/// Writes via a sibling temp file and an atomic rename, so a failed run never
/// leaves a partial output behind.
pub fn write_atomic(path: &Path, contents: &str) -> Result<()> {
    let tmp = path.with_extension(format!(
        "{}.tmp",
        path.extension().and_then(|e| e.to_str()).unwrap_or("out")
    ));
    fs::write(&tmp, contents)?;
    fs::rename(&tmp, path)?;
    Ok(())
}

fn parse_err(line: usize, msg: impl Into<String>) -> Error {
    Error::Parse {
        line,
        msg: msg.into(),
    }
}

fn parse_f64(field: &str, line: usize, what: &str) -> Result<f64> {
    field
        .trim()
        .parse::<f64>()
        .map_err(|_| parse_err(line, format!("bad {what} value '{field}'")))
}

fn parse_usize(field: &str, line: usize, what: &str) -> Result<usize> {
    field
        .trim()
        .parse::<usize>()
        .map_err(|_| parse_err(line, format!("bad {what} value '{field}'")))
}

// ---------------------------------------------------------------------------
// Marker CSV: frame,marker,x,y,z,visible

pub fn write_marker_csv(seq: &MarkerFrameSequence) -> String {
    let mut out = String::from("frame,marker,x,y,z,visible\n");
    for (t, frame) in seq.frames.iter().enumerate() {
        for (name, p) in &frame.positions {
            let visible = frame.visibility.get(name).copied().unwrap_or(true);
            out.push_str(&format!(
                "{t},{name},{},{},{},{}\n",
                fmt_g9(p.x),
                fmt_g9(p.y),
                fmt_g9(p.z),
                u8::from(visible)
            ));
        }
    }
    out
}

pub fn parse_marker_csv(text: &str) -> Result<MarkerFrameSequence> {
    let mut lines = text.lines().enumerate();
    match lines.next() {
        Some((_, h)) if h.trim() == "frame,marker,x,y,z,visible" => {}
        Some((i, h)) => return Err(parse_err(i + 1, format!("bad marker header '{h}'"))),
        None => return Err(parse_err(1, "empty marker file")),
    }
    let mut frames: Vec<MarkerFrame> = Vec::new();
    for (i, line) in lines {
        let lineno = i + 1;
        if line.trim().is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != 6 {
            return Err(parse_err(lineno, format!("expected 6 fields, got {}", fields.len())));
        }
        let t = parse_usize(fields[0], lineno, "frame")?;
        let name = fields[1].trim().to_string();
        let p = Vector3::new(
            parse_f64(fields[2], lineno, "x")?,
            parse_f64(fields[3], lineno, "y")?,
            parse_f64(fields[4], lineno, "z")?,
        );
        let visible = match fields[5].trim() {
            "0" => false,
            "1" => true,
            other => return Err(parse_err(lineno, format!("bad visible flag '{other}'"))),
        };
        if t > frames.len() {
            return Err(parse_err(
                lineno,
                format!("frame indices must be contiguous; jumped to {t} with {} frames seen", frames.len()),
            ));
        }
        if t == frames.len() {
            frames.push(MarkerFrame::default());
        }
        frames[t].positions.insert(name.clone(), p);
        frames[t].visibility.insert(name, visible);
    }
    Ok(MarkerFrameSequence { frames })
}

// ---------------------------------------------------------------------------
// Pose CSV: frame,coord_0..coord_{D-1},tx,ty,tz

pub fn write_pose_csv(dof: usize, poses: &[Pose]) -> String {
    let mut out = String::from("frame");
    for c in 0..dof {
        out.push_str(&format!(",coord_{c}"));
    }
    out.push_str(",tx,ty,tz\n");
    for (t, pose) in poses.iter().enumerate() {
        out.push_str(&t.to_string());
        for c in 0..dof {
            out.push(',');
            out.push_str(&fmt_g9(pose.coords[c]));
        }
        for a in 0..3 {
            out.push(',');
            out.push_str(&fmt_g9(pose.root_translation[a]));
        }
        out.push('\n');
    }
    out
}

pub fn parse_pose_csv(text: &str) -> Result<Vec<Pose>> {
    let mut lines = text.lines().enumerate();
    let (_, header) = lines
        .next()
        .ok_or_else(|| parse_err(1, "empty pose file"))?;
    let cols: Vec<&str> = header.trim().split(',').collect();
    if cols.len() < 5 || cols[0] != "frame" || cols[cols.len() - 3..] != ["tx", "ty", "tz"] {
        return Err(parse_err(1, format!("bad pose header '{header}'")));
    }
    let dof = cols.len() - 4;
    for (c, col) in cols[1..1 + dof].iter().enumerate() {
        if *col != format!("coord_{c}") {
            return Err(parse_err(1, format!("bad pose header column '{col}'")));
        }
    }
    let mut poses = Vec::new();
    for (i, line) in lines {
        let lineno = i + 1;
        if line.trim().is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != dof + 4 {
            return Err(parse_err(
                lineno,
                format!("expected {} fields, got {}", dof + 4, fields.len()),
            ));
        }
        let t = parse_usize(fields[0], lineno, "frame")?;
        if t != poses.len() {
            return Err(parse_err(lineno, format!("expected frame {}, got {t}", poses.len())));
        }
        let mut coords = DVector::zeros(dof);
        for c in 0..dof {
            coords[c] = parse_f64(fields[1 + c], lineno, "coordinate")?;
        }
        let root = Vector3::new(
            parse_f64(fields[1 + dof], lineno, "tx")?,
            parse_f64(fields[2 + dof], lineno, "ty")?,
            parse_f64(fields[3 + dof], lineno, "tz")?,
        );
        poses.push(Pose::new(coords, root));
    }
    Ok(poses)
}

// ---------------------------------------------------------------------------
// 2D keypoint CSV: frame,joint,u,v,confidence

pub fn write_keypoint_csv(frames: &[Vec<(f64, f64, f64)>]) -> String {
    let mut out = String::from("frame,joint,u,v,confidence\n");
    for (t, joints) in frames.iter().enumerate() {
        for (j, (u, v, c)) in joints.iter().enumerate() {
            out.push_str(&format!(
                "{t},{j},{},{},{}\n",
                fmt_g9(*u),
                fmt_g9(*v),
                fmt_g9(*c)
            ));
        }
    }
    out
}

pub fn parse_keypoint_csv(text: &str) -> Result<Vec<Vec<(f64, f64, f64)>>> {
    let mut lines = text.lines().enumerate();
    match lines.next() {
        Some((_, h)) if h.trim() == "frame,joint,u,v,confidence" => {}
        Some((i, h)) => return Err(parse_err(i + 1, format!("bad keypoint header '{h}'"))),
        None => return Err(parse_err(1, "empty keypoint file")),
    }
    let mut frames: Vec<Vec<(f64, f64, f64)>> = Vec::new();
    for (i, line) in lines {
        let lineno = i + 1;
        if line.trim().is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != 5 {
            return Err(parse_err(lineno, format!("expected 5 fields, got {}", fields.len())));
        }
        let t = parse_usize(fields[0], lineno, "frame")?;
        let j = parse_usize(fields[1], lineno, "joint")?;
        if t > frames.len() {
            return Err(parse_err(lineno, format!("frame indices must be contiguous; jumped to {t}")));
        }
        if t == frames.len() {
            frames.push(Vec::new());
        }
        if j != frames[t].len() {
            return Err(parse_err(lineno, format!("expected joint {}, got {j}", frames[t].len())));
        }
        frames[t].push((
            parse_f64(fields[2], lineno, "u")?,
            parse_f64(fields[3], lineno, "v")?,
            parse_f64(fields[4], lineno, "confidence")?,
        ));
    }
    Ok(frames)
}

// ---------------------------------------------------------------------------
// Scales CSV: segment,sx,sy,sz

pub fn write_scales_csv(model: &SkeletonModel, scales: &[Vector3<f64>]) -> String {
    let mut out = String::from("segment,sx,sy,sz\n");
    for (j, s) in model.joints().iter().zip(scales) {
        out.push_str(&format!(
            "{},{},{},{}\n",
            j.name,
            fmt_g9(s.x),
            fmt_g9(s.y),
            fmt_g9(s.z)
        ));
    }
    out
}

pub fn parse_scales_csv(text: &str, model: &SkeletonModel) -> Result<Vec<Vector3<f64>>> {
    let mut lines = text.lines().enumerate();
    match lines.next() {
        Some((_, h)) if h.trim() == "segment,sx,sy,sz" => {}
        Some((i, h)) => return Err(parse_err(i + 1, format!("bad scales header '{h}'"))),
        None => return Err(parse_err(1, "empty scales file")),
    }
    let mut scales = vec![None; model.joints().len()];
    for (i, line) in lines {
        let lineno = i + 1;
        if line.trim().is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != 4 {
            return Err(parse_err(lineno, format!("expected 4 fields, got {}", fields.len())));
        }
        let name = fields[0].trim();
        let idx = model
            .joint_index(name)
            .ok_or_else(|| parse_err(lineno, format!("unknown segment '{name}'")))?;
        scales[idx] = Some(Vector3::new(
            parse_f64(fields[1], lineno, "sx")?,
            parse_f64(fields[2], lineno, "sy")?,
            parse_f64(fields[3], lineno, "sz")?,
        ));
    }
    scales
        .into_iter()
        .enumerate()
        .map(|(i, s)| {
            s.ok_or_else(|| {
                Error::Validation(format!(
                    "scales file missing segment '{}'",
                    model.joints()[i].name
                ))
            })
        })
        .collect()
}

// ---------------------------------------------------------------------------
// Named-array container

/// One named array: row-major data plus its shape.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct NamedArray {
    pub shape: Vec<usize>,
    pub data: Vec<f64>,
}

impl NamedArray {
    pub fn new(shape: Vec<usize>, data: Vec<f64>) -> Result<NamedArray> {
        let expect: usize = shape.iter().product();
        if expect != data.len() {
            return Err(Error::DimensionMismatch(format!(
                "array shape {shape:?} wants {expect} values, got {}",
                data.len()
            )));
        }
        Ok(NamedArray { shape, data })
    }
}

/// Container of named arrays with self-described dimensions; serialized as
/// JSON. Used for body assets and network weights.
#[derive(Debug, Clone, Default, Serialize, Deserialize, PartialEq)]
pub struct ArrayContainer {
    pub arrays: BTreeMap<String, NamedArray>,
}

impl ArrayContainer {
    pub fn insert(&mut self, name: &str, shape: Vec<usize>, data: Vec<f64>) -> Result<()> {
        self.arrays.insert(name.to_string(), NamedArray::new(shape, data)?);
        Ok(())
    }

    pub fn get(&self, name: &str) -> Result<&NamedArray> {
        self.arrays
            .get(name)
            .ok_or_else(|| Error::Validation(format!("container missing array '{name}'")))
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("container serializes")
    }

    pub fn from_json(text: &str) -> Result<ArrayContainer> {
        let c: ArrayContainer = serde_json::from_str(text).map_err(|e| Error::Parse {
            line: e.line(),
            msg: e.to_string(),
        })?;
        for (name, arr) in &c.arrays {
            let expect: usize = arr.shape.iter().product();
            if expect != arr.data.len() {
                return Err(Error::Validation(format!(
                    "array '{name}' shape {:?} disagrees with {} stored values",
                    arr.shape,
                    arr.data.len()
                )));
            }
        }
        Ok(c)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        write_atomic(path, &self.to_json())
    }

    pub fn load(path: &Path) -> Result<ArrayContainer> {
        Self::from_json(&fs::read_to_string(path)?)
    }
}
