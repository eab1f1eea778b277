//! Skeleton data model, per-frame normalisation and vectorisation.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Lengths at or below this are treated as zero.
const DEGENERATE_LEN: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Joint3D {
    pub x: f64,
    pub y: f64,
    pub z: f64,
}

impl Joint3D {
    pub const fn new(x: f64, y: f64, z: f64) -> Self {
        Self { x, y, z }
    }

    fn get(&self, axis: Axis) -> f64 {
        match axis {
            Axis::X => self.x,
            Axis::Y => self.y,
            Axis::Z => self.z,
        }
    }

    fn set(&mut self, axis: Axis, v: f64) {
        match axis {
            Axis::X => self.x = v,
            Axis::Y => self.y = v,
            Axis::Z => self.z = v,
        }
    }

    fn sub(&self, o: &Joint3D) -> Joint3D {
        Joint3D::new(self.x - o.x, self.y - o.y, self.z - o.z)
    }

    fn norm(&self) -> f64 {
        (self.x * self.x + self.y * self.y + self.z * self.z).sqrt()
    }

    fn is_finite(&self) -> bool {
        self.x.is_finite() && self.y.is_finite() && self.z.is_finite()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Frame {
    pub joints: Vec<Joint3D>,
    pub timestamp_index: usize,
}

impl Frame {
    pub fn new(joints: Vec<Joint3D>, timestamp_index: usize) -> Self {
        Self {
            joints,
            timestamp_index,
        }
    }

    pub fn joint_count(&self) -> usize {
        self.joints.len()
    }
}

/// A labelled, subject-attributed recording.
#[derive(Debug, Clone, PartialEq)]
pub struct Sequence {
    pub sequence_id: String,
    pub subject: String,
    pub action: String,
    pub frames: Vec<Frame>,
    /// Pose label per frame; `None` for frames that are not pose exemplars.
    pub pose_annotations: Vec<Option<String>>,
}

impl Sequence {
    pub fn new(
        sequence_id: impl Into<String>,
        subject: impl Into<String>,
        action: impl Into<String>,
        frames: Vec<Frame>,
        pose_annotations: Vec<Option<String>>,
    ) -> Result<Self> {
        let seq = Self {
            sequence_id: sequence_id.into(),
            subject: subject.into(),
            action: action.into(),
            frames,
            pose_annotations,
        };
        seq.validate()?;
        Ok(seq)
    }

    pub fn validate(&self) -> Result<()> {
        if self.frames.is_empty() {
            return Err(Error::Data(format!("sequence {} has no frames", self.sequence_id)));
        }
        if self.pose_annotations.len() != self.frames.len() {
            return Err(Error::Data(format!(
                "sequence {}: {} annotations for {} frames",
                self.sequence_id,
                self.pose_annotations.len(),
                self.frames.len()
            )));
        }
        for w in self.frames.windows(2) {
            if w[1].timestamp_index <= w[0].timestamp_index {
                return Err(Error::Data(format!(
                    "sequence {}: frame index {} does not increase after {}",
                    self.sequence_id, w[1].timestamp_index, w[0].timestamp_index
                )));
            }
        }
        Ok(())
    }

    pub fn has_annotations(&self) -> bool {
        self.pose_annotations.iter().any(Option::is_some)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Axis {
    X,
    Y,
    Z,
}

impl Axis {
    /// `(lateral, depth)` horizontal axes for this vertical axis. Shoulder
    /// alignment points the left→right shoulder line along `+lateral`.
    pub fn horizontal(self) -> (Axis, Axis) {
        match self {
            Axis::X => (Axis::Y, Axis::Z),
            Axis::Y => (Axis::X, Axis::Z),
            Axis::Z => (Axis::X, Axis::Y),
        }
    }
}

impl std::str::FromStr for Axis {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "x" => Ok(Axis::X),
            "y" => Ok(Axis::Y),
            "z" => Ok(Axis::Z),
            other => Err(Error::Config(format!("unknown axis {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PreprocessConfig {
    pub hip_index: usize,
    pub left_shoulder_index: usize,
    pub right_shoulder_index: usize,
    pub selected_joints: Vec<usize>,
    pub vertical_axis: Axis,
}

impl PreprocessConfig {
    /// Checks the config against a raw joint count.
    pub fn validate(&self, joint_count: usize) -> Result<()> {
        let landmarks = [self.hip_index, self.left_shoulder_index, self.right_shoulder_index];
        if landmarks.iter().any(|&i| i >= joint_count) {
            return Err(Error::Schema(format!(
                "landmark index out of range for {joint_count} joints: {landmarks:?}"
            )));
        }
        if landmarks[0] == landmarks[1] || landmarks[0] == landmarks[2] || landmarks[1] == landmarks[2] {
            return Err(Error::Schema(format!(
                "landmark indices must be distinct: {landmarks:?}"
            )));
        }
        if self.selected_joints.is_empty() {
            return Err(Error::Schema("no joints selected".into()));
        }
        if let Some(bad) = self.selected_joints.iter().find(|&&i| i >= joint_count) {
            return Err(Error::Schema(format!(
                "selected joint {bad} out of range for {joint_count} joints"
            )));
        }
        Ok(())
    }

    /// Vector dimension after selection (`3J`).
    pub fn feature_dim(&self) -> usize {
        3 * self.selected_joints.len()
    }

    /// Stable textual identity of the preprocessing, stored alongside models.
    pub fn fingerprint(&self) -> String {
        let axis = match self.vertical_axis {
            Axis::X => "x",
            Axis::Y => "y",
            Axis::Z => "z",
        };
        let sel: Vec<String> = self.selected_joints.iter().map(|i| i.to_string()).collect();
        format!(
            "hip={};lsh={};rsh={};up={};sel={}",
            self.hip_index,
            self.left_shoulder_index,
            self.right_shoulder_index,
            axis,
            sel.join(",")
        )
    }
}

fn joint(frame: &Frame, index: usize) -> Result<Joint3D> {
    frame.joints.get(index).copied().ok_or_else(|| {
        Error::Schema(format!(
            "joint index {index} out of range for a {}-joint frame",
            frame.joints.len()
        ))
    })
}

pub fn translate_hip_to_origin(frame: &Frame, cfg: &PreprocessConfig) -> Result<Frame> {
    let hip = joint(frame, cfg.hip_index)?;
    let joints = frame.joints.iter().map(|j| j.sub(&hip)).collect();
    Ok(Frame::new(joints, frame.timestamp_index))
}

/// Rotates about the vertical axis so the left→right shoulder line points
/// along `+lateral` with no depth component.
pub fn align_shoulders(frame: &Frame, cfg: &PreprocessConfig) -> Result<Frame> {
    let left = joint(frame, cfg.left_shoulder_index)?;
    let right = joint(frame, cfg.right_shoulder_index)?;
    let (lat, dep) = cfg.vertical_axis.horizontal();
    let d_lat = right.get(lat) - left.get(lat);
    let d_dep = right.get(dep) - left.get(dep);
    let r = d_lat.hypot(d_dep);
    let scale = frame
        .joints
        .iter()
        .fold(1.0f64, |m, j| m.max(j.x.abs()).max(j.y.abs()).max(j.z.abs()));
    if !(r > DEGENERATE_LEN * scale) {
        return Err(Error::DegenerateOrientation);
    }
    // Rotation by −θ where θ = atan2(d_dep, d_lat).
    let (c, s) = (d_lat / r, d_dep / r);
    let joints = frame
        .joints
        .iter()
        .map(|j| {
            let (a, b) = (j.get(lat), j.get(dep));
            let mut out = *j;
            out.set(lat, c * a + s * b);
            out.set(dep, -s * a + c * b);
            out
        })
        .collect();
    Ok(Frame::new(joints, frame.timestamp_index))
}

/// Divides all coordinates by the hip→shoulder-midpoint distance.
pub fn remove_scale(frame: &Frame, cfg: &PreprocessConfig) -> Result<Frame> {
    let hip = joint(frame, cfg.hip_index)?;
    let left = joint(frame, cfg.left_shoulder_index)?;
    let right = joint(frame, cfg.right_shoulder_index)?;
    let mid = Joint3D::new(
        0.5 * (left.x + right.x),
        0.5 * (left.y + right.y),
        0.5 * (left.z + right.z),
    );
    let reference = mid.sub(&hip).norm();
    if !(reference > DEGENERATE_LEN) || !reference.is_finite() {
        return Err(Error::DegenerateSkeleton(reference));
    }
    let joints = frame
        .joints
        .iter()
        .map(|j| Joint3D::new(j.x / reference, j.y / reference, j.z / reference))
        .collect();
    Ok(Frame::new(joints, frame.timestamp_index))
}

pub fn select_joints(frame: &Frame, cfg: &PreprocessConfig) -> Result<Frame> {
    if cfg.selected_joints.is_empty() {
        return Err(Error::Schema("no joints selected".into()));
    }
    let joints = cfg
        .selected_joints
        .iter()
        .map(|&i| joint(frame, i))
        .collect::<Result<Vec<_>>>()?;
    Ok(Frame::new(joints, frame.timestamp_index))
}

/// `[x_1..x_J, y_1..y_J, z_1..z_J]`.
pub fn vectorize(frame: &Frame) -> Vec<f64> {
    let j = frame.joints.len();
    let mut out = vec![0.0; 3 * j];
    for (l, p) in frame.joints.iter().enumerate() {
        out[l] = p.x;
        out[j + l] = p.y;
        out[2 * j + l] = p.z;
    }
    out
}

/// Inverse of [`vectorize`].
pub fn devectorize(v: &[f64], timestamp_index: usize) -> Result<Frame> {
    if v.is_empty() || !v.len().is_multiple_of(3) {
        return Err(Error::InvalidDimension(format!(
            "pose vector length {} is not a positive multiple of 3",
            v.len()
        )));
    }
    let j = v.len() / 3;
    let joints = (0..j).map(|l| Joint3D::new(v[l], v[j + l], v[2 * j + l])).collect();
    Ok(Frame::new(joints, timestamp_index))
}

/// translate → align → scale → select on one frame.
pub fn preprocess_frame(frame: &Frame, cfg: &PreprocessConfig) -> Result<Frame> {
    if let Some(bad) = frame.joints.iter().position(|j| !j.is_finite()) {
        return Err(Error::Data(format!("joint {bad} has a non-finite coordinate")));
    }
    let f = translate_hip_to_origin(frame, cfg)?;
    let f = align_shoulders(&f, cfg)?;
    let f = remove_scale(&f, cfg)?;
    select_joints(&f, cfg)
}

/// Applies [`preprocess_frame`] to every frame, keeping labels and annotations.
pub fn preprocess(seq: &Sequence, cfg: &PreprocessConfig) -> Result<Sequence> {
    let frames = seq
        .frames
        .iter()
        .enumerate()
        .map(|(index, f)| {
            preprocess_frame(f, cfg).map_err(|e| Error::Frame {
                index,
                source: Box::new(e),
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(Sequence { frames, ..seq.clone() })
}
