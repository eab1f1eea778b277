//! Dataset manifests, the line-delimited frame interchange format,
//! leave-one-subject-out folds and a seeded synthetic generator.
//!
//! A dataset is a manifest document plus one JSONL file per subject. Each
//! line holds one frame:
//!
//! ```json
//! {"subject":"s01","action":"wave","sequence_id":"s01-wave-0","frame_index":0,"pose":"up","coords":[0.0,0.0,0.0,...]}
//! ```
//!
//! `coords` is joint-major (`x0,y0,z0,x1,y1,z1,...`) and `pose` is optional.

use std::collections::{BTreeMap, BTreeSet};
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::skeleton::{Axis, Frame, Joint3D, PreprocessConfig, Sequence};
use crate::SCHEMA_VERSION;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Landmarks {
    pub hip: usize,
    pub left_shoulder: usize,
    pub right_shoulder: usize,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ManifestFile {
    /// Relative to the manifest's directory.
    pub path: String,
    pub subject: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DatasetManifest {
    pub schema_version: u32,
    pub name: String,
    pub joint_count: usize,
    pub landmarks: Landmarks,
    pub vertical_axis: Axis,
    pub selected_joints: Vec<usize>,
    pub actions: Vec<String>,
    pub poses: Vec<String>,
    pub files: Vec<ManifestFile>,
}

impl DatasetManifest {
    pub fn preprocess_config(&self) -> PreprocessConfig {
        PreprocessConfig {
            hip_index: self.landmarks.hip,
            left_shoulder_index: self.landmarks.left_shoulder,
            right_shoulder_index: self.landmarks.right_shoulder,
            selected_joints: self.selected_joints.clone(),
            vertical_axis: self.vertical_axis,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.schema_version != SCHEMA_VERSION {
            return Err(Error::Schema(format!(
                "manifest schema_version {} is not supported (expected {SCHEMA_VERSION})",
                self.schema_version
            )));
        }
        self.preprocess_config().validate(self.joint_count)?;
        if self.actions.is_empty() {
            return Err(Error::Schema("manifest lists no actions".into()));
        }
        if self.poses.is_empty() {
            return Err(Error::Schema("manifest pose alphabet is empty".into()));
        }
        for (what, labels) in [("action", &self.actions), ("pose", &self.poses)] {
            let distinct: BTreeSet<&String> = labels.iter().collect();
            if distinct.len() != labels.len() || labels.iter().any(String::is_empty) {
                return Err(Error::Schema(format!("{what} labels must be distinct and non-empty")));
            }
        }
        if self.files.is_empty() {
            return Err(Error::Schema("manifest lists no files".into()));
        }
        if let Some(f) = self.files.iter().find(|f| f.subject.is_empty() || f.path.is_empty()) {
            return Err(Error::Schema(format!("file entry {f:?} needs a path and a subject id")));
        }
        Ok(())
    }

    pub fn from_json(s: &str) -> Result<Self> {
        let m: Self = serde_json::from_str(s)?;
        m.validate()?;
        Ok(m)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let s = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json(&s)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_json()?).map_err(|e| Error::io(path, e))
    }
}

/// One line of a JSONL data file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FrameRecord {
    pub subject: String,
    pub action: String,
    pub sequence_id: String,
    pub frame_index: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub pose: Option<String>,
    pub coords: Vec<f64>,
}

fn parse_error(file: &Path, line: usize, message: impl Into<String>) -> Error {
    Error::Parse {
        file: file.to_path_buf(),
        line,
        message: message.into(),
    }
}

/// Reads every file listed in `manifest`, resolving paths against `root`.
/// Sequences come back in file order, then order of first appearance.
pub fn load_sequences(manifest: &DatasetManifest, root: &Path) -> Result<Vec<Sequence>> {
    manifest.validate()?;
    let actions: BTreeSet<&str> = manifest.actions.iter().map(String::as_str).collect();
    let poses: BTreeSet<&str> = manifest.poses.iter().map(String::as_str).collect();
    let mut seen_ids = BTreeSet::new();
    let mut out = Vec::new();
    for entry in &manifest.files {
        let path = root.join(&entry.path);
        let file = File::open(&path).map_err(|e| Error::io(&path, e))?;
        let mut order: Vec<String> = Vec::new();
        let mut partial: BTreeMap<String, Sequence> = BTreeMap::new();
        for (k, line) in BufReader::new(file).lines().enumerate() {
            let line_no = k + 1;
            let line = line.map_err(|e| Error::io(&path, e))?;
            if line.trim().is_empty() {
                continue;
            }
            let rec: FrameRecord =
                serde_json::from_str(&line).map_err(|e| parse_error(&path, line_no, e.to_string()))?;
            if rec.coords.is_empty() || !rec.coords.len().is_multiple_of(3) {
                return Err(parse_error(
                    &path,
                    line_no,
                    format!("{} coordinates is not a positive multiple of 3", rec.coords.len()),
                ));
            }
            if rec.coords.len() / 3 != manifest.joint_count {
                return Err(Error::Schema(format!(
                    "{}:{line_no}: {} joints, manifest declares {}",
                    path.display(),
                    rec.coords.len() / 3,
                    manifest.joint_count
                )));
            }
            if rec.subject != entry.subject {
                return Err(parse_error(
                    &path,
                    line_no,
                    format!(
                        "subject {:?} differs from the manifest's {:?}",
                        rec.subject, entry.subject
                    ),
                ));
            }
            if !actions.contains(rec.action.as_str()) {
                return Err(parse_error(&path, line_no, format!("unknown action {:?}", rec.action)));
            }
            if let Some(p) = &rec.pose {
                if !poses.contains(p.as_str()) {
                    return Err(parse_error(&path, line_no, format!("unknown pose {p:?}")));
                }
            }
            let joints = rec.coords.chunks(3).map(|c| Joint3D::new(c[0], c[1], c[2])).collect();
            let frame = Frame::new(joints, rec.frame_index);
            match partial.get_mut(&rec.sequence_id) {
                Some(seq) => {
                    if seq.action != rec.action {
                        return Err(parse_error(
                            &path,
                            line_no,
                            format!("sequence {:?} changes action", rec.sequence_id),
                        ));
                    }
                    let last = seq.frames.last().map(|f| f.timestamp_index).unwrap_or(0);
                    if rec.frame_index <= last {
                        return Err(parse_error(
                            &path,
                            line_no,
                            format!("frame_index {} does not increase after {last}", rec.frame_index),
                        ));
                    }
                    seq.frames.push(frame);
                    seq.pose_annotations.push(rec.pose);
                }
                None => {
                    if !seen_ids.insert(rec.sequence_id.clone()) {
                        return Err(parse_error(
                            &path,
                            line_no,
                            format!("sequence {:?} is split across files or blocks", rec.sequence_id),
                        ));
                    }
                    order.push(rec.sequence_id.clone());
                    partial.insert(
                        rec.sequence_id.clone(),
                        Sequence {
                            sequence_id: rec.sequence_id,
                            subject: rec.subject,
                            action: rec.action,
                            frames: vec![frame],
                            pose_annotations: vec![rec.pose],
                        },
                    );
                }
            }
        }
        for id in order {
            let seq = partial.remove(&id).expect("recorded id");
            seq.validate()?;
            out.push(seq);
        }
    }
    Ok(out)
}

/// Loads a manifest and the files it lists (relative to the manifest).
pub fn load_dataset(manifest_path: &Path) -> Result<(DatasetManifest, Vec<Sequence>)> {
    let manifest = DatasetManifest::load(manifest_path)?;
    let root = manifest_path.parent().unwrap_or(Path::new("."));
    let seqs = load_sequences(&manifest, root)?;
    Ok((manifest, seqs))
}

/// Writes sequences as JSONL records in the given order.
pub fn save_sequences(path: &Path, sequences: &[&Sequence]) -> Result<()> {
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    for seq in sequences {
        for (frame, pose) in seq.frames.iter().zip(&seq.pose_annotations) {
            let rec = FrameRecord {
                subject: seq.subject.clone(),
                action: seq.action.clone(),
                sequence_id: seq.sequence_id.clone(),
                frame_index: frame.timestamp_index,
                pose: pose.clone(),
                coords: frame.joints.iter().flat_map(|j| [j.x, j.y, j.z]).collect(),
            };
            serde_json::to_writer(&mut w, &rec)?;
            w.write_all(b"\n").map_err(|e| Error::io(path, e))?;
        }
    }
    w.flush().map_err(|e| Error::io(path, e))
}

/// Writes `manifest.json` plus every file it lists into `dir`. Each file
/// receives the sequences of its subject.
pub fn write_dataset(dir: &Path, manifest: &DatasetManifest, sequences: &[Sequence]) -> Result<PathBuf> {
    manifest.validate()?;
    let covered: BTreeSet<&str> = manifest.files.iter().map(|f| f.subject.as_str()).collect();
    if let Some(s) = sequences.iter().find(|s| !covered.contains(s.subject.as_str())) {
        return Err(Error::Data(format!("no manifest file for subject {:?}", s.subject)));
    }
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    for entry in &manifest.files {
        let mine: Vec<&Sequence> = sequences.iter().filter(|s| s.subject == entry.subject).collect();
        save_sequences(&dir.join(&entry.path), &mine)?;
    }
    let path = dir.join("manifest.json");
    manifest.save(&path)?;
    Ok(path)
}

#[derive(Debug, Clone, PartialEq)]
pub struct Fold {
    pub held_out_subject: String,
    pub train: Vec<Sequence>,
    pub test: Vec<Sequence>,
}

/// One fold per subject, sorted by subject id.
pub fn lopo_folds(sequences: &[Sequence]) -> Result<Vec<Fold>> {
    let subjects: BTreeSet<&str> = sequences.iter().map(|s| s.subject.as_str()).collect();
    if subjects.len() < 2 {
        return Err(Error::Protocol(format!(
            "leave-one-subject-out needs at least 2 subjects, found {}",
            subjects.len()
        )));
    }
    Ok(subjects
        .into_iter()
        .map(|held| {
            let (test, train): (Vec<Sequence>, Vec<Sequence>) =
                sequences.iter().cloned().partition(|s| s.subject == held);
            Fold {
                held_out_subject: held.to_string(),
                train,
                test,
            }
        })
        .collect())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SyntheticSpec {
    pub n_subjects: usize,
    pub n_actions: usize,
    pub poses_per_action: usize,
    pub frames_per_pose: usize,
    pub noise_sigma: f64,
    /// Unannotated interpolated frames inserted between consecutive poses.
    #[serde(default)]
    pub transition_frames: usize,
    /// Recordings per (subject, action).
    #[serde(default = "one")]
    pub repetitions: usize,
}

fn one() -> usize {
    1
}

impl SyntheticSpec {
    pub fn new(
        n_subjects: usize,
        n_actions: usize,
        poses_per_action: usize,
        frames_per_pose: usize,
        noise_sigma: f64,
    ) -> Self {
        Self {
            n_subjects,
            n_actions,
            poses_per_action,
            frames_per_pose,
            noise_sigma,
            transition_frames: 0,
            repetitions: 1,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let counts = [
            ("n_subjects", self.n_subjects),
            ("n_actions", self.n_actions),
            ("poses_per_action", self.poses_per_action),
            ("frames_per_pose", self.frames_per_pose),
            ("repetitions", self.repetitions),
        ];
        if let Some((name, _)) = counts.iter().find(|(_, v)| *v == 0) {
            return Err(Error::Config(format!("{name} must be at least 1")));
        }
        if !(self.noise_sigma >= 0.0) || !self.noise_sigma.is_finite() {
            return Err(Error::Config(format!(
                "noise_sigma must be >= 0, got {}",
                self.noise_sigma
            )));
        }
        if self.poses_per_action > 64 || self.n_actions > 10_000 {
            return Err(Error::Config("synthetic spec is too large".into()));
        }
        Ok(())
    }

    /// Size of the shared pose alphabet: the smallest `K > poses_per_action`
    /// with at least `n_actions` ordered pose selections.
    pub fn alphabet_size(&self) -> usize {
        let m = self.poses_per_action;
        let mut k = m + 1;
        loop {
            let mut perms: u128 = 1;
            for i in 0..m {
                perms = perms.saturating_mul((k - i) as u128);
            }
            if perms >= self.n_actions as u128 {
                return k;
            }
            k += 1;
        }
    }
}

/// Joint names of the synthetic skeleton, y up.
pub const SYNTHETIC_JOINTS: [&str; 16] = [
    "hip_center",
    "spine",
    "neck",
    "head",
    "shoulder_left",
    "elbow_left",
    "hand_left",
    "shoulder_right",
    "elbow_right",
    "hand_right",
    "hip_left",
    "knee_left",
    "foot_left",
    "hip_right",
    "knee_right",
    "foot_right",
];

const REST_POSE: [[f64; 3]; 16] = [
    [0.0, 0.0, 0.0],
    [0.0, 0.5, 0.0],
    [0.0, 1.1, 0.0],
    [0.0, 1.35, 0.0],
    [-0.2, 1.0, 0.0],
    [-0.25, 0.7, 0.0],
    [-0.28, 0.4, 0.0],
    [0.2, 1.0, 0.0],
    [0.25, 0.7, 0.0],
    [0.28, 0.4, 0.0],
    [-0.1, -0.05, 0.0],
    [-0.12, -0.5, 0.0],
    [-0.12, -0.95, 0.0],
    [0.1, -0.05, 0.0],
    [0.12, -0.5, 0.0],
    [0.12, -0.95, 0.0],
];

/// Joints moved when building pose prototypes, with their displacement range.
const MOBILE_JOINTS: [(usize, f64); 11] = [
    (2, 0.05),
    (3, 0.15),
    (5, 0.3),
    (6, 0.5),
    (8, 0.3),
    (9, 0.5),
    (11, 0.25),
    (12, 0.4),
    (14, 0.25),
    (15, 0.4),
    (1, 0.05),
];

fn synthetic_manifest(spec: &SyntheticSpec, poses: Vec<String>) -> DatasetManifest {
    DatasetManifest {
        schema_version: SCHEMA_VERSION,
        name: "synthetic".into(),
        joint_count: SYNTHETIC_JOINTS.len(),
        landmarks: Landmarks {
            hip: 0,
            left_shoulder: 4,
            right_shoulder: 7,
        },
        vertical_axis: Axis::Y,
        // Hip and shoulders are fixed by normalisation and carry little signal.
        selected_joints: vec![1, 2, 3, 5, 6, 8, 9, 10, 11, 12, 13, 14, 15],
        actions: (0..spec.n_actions).map(action_label).collect(),
        poses,
        files: (0..spec.n_subjects)
            .map(|s| ManifestFile {
                path: format!("{}.jsonl", subject_label(s)),
                subject: subject_label(s),
            })
            .collect(),
    }
}

fn subject_label(s: usize) -> String {
    format!("subject_{s:02}")
}

fn action_label(a: usize) -> String {
    format!("action_{a:02}")
}

fn pose_label(p: usize) -> String {
    format!("pose_{p:02}")
}

/// Rotation about +y by `theta`, then uniform scale, then translation.
fn place(joint: [f64; 3], theta: f64, scale: f64, shift: [f64; 3]) -> Joint3D {
    let (s, c) = theta.sin_cos();
    let [x, y, z] = joint;
    Joint3D::new(
        scale * (c * x + s * z) + shift[0],
        scale * y + shift[1],
        scale * (-s * x + c * z) + shift[2],
    )
}

/// Seeded synthetic dataset.
///
/// Builds a shared alphabet of prototype skeletons, gives every action a
/// distinct ordered selection of poses, and renders each (subject, action)
/// recording with Gaussian coordinate jitter and a random per-subject yaw,
/// translation and scale. Every pose frame is annotated with its pose.
pub fn generate_synthetic(spec: &SyntheticSpec, seed: u64) -> Result<(Vec<Sequence>, DatasetManifest)> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let k = spec.alphabet_size();

    let prototypes: Vec<Vec<[f64; 3]>> = (0..k)
        .map(|_| {
            let mut joints = REST_POSE.to_vec();
            for &(j, range) in &MOBILE_JOINTS {
                for c in joints[j].iter_mut() {
                    *c += rng.random_range(-range..=range);
                }
            }
            joints
        })
        .collect();

    let mut scripts: Vec<Vec<usize>> = Vec::with_capacity(spec.n_actions);
    let mut pool: Vec<usize> = (0..k).collect();
    while scripts.len() < spec.n_actions {
        pool.shuffle(&mut rng);
        let pick = pool[..spec.poses_per_action].to_vec();
        if !scripts.contains(&pick) {
            scripts.push(pick);
        }
    }

    let noise = Normal::new(0.0, spec.noise_sigma).map_err(|e| Error::Config(e.to_string()))?;
    let mut sequences = Vec::new();
    for s in 0..spec.n_subjects {
        let theta = rng.random_range(0.0..std::f64::consts::TAU);
        let scale = rng.random_range(0.8..1.25);
        let shift = [
            rng.random_range(-1.0..1.0),
            rng.random_range(-0.5..0.5),
            rng.random_range(1.5..3.5),
        ];
        for (a, script) in scripts.iter().enumerate() {
            for rep in 0..spec.repetitions {
                let mut frames = Vec::new();
                let mut annotations = Vec::new();
                let mut emit = |body: &[[f64; 3]], pose: Option<String>, rng: &mut ChaCha8Rng| {
                    let joints = body
                        .iter()
                        .map(|p| {
                            let jittered = if spec.noise_sigma > 0.0 {
                                [
                                    p[0] + noise.sample(rng),
                                    p[1] + noise.sample(rng),
                                    p[2] + noise.sample(rng),
                                ]
                            } else {
                                *p
                            };
                            place(jittered, theta, scale, shift)
                        })
                        .collect();
                    frames.push(Frame::new(joints, frames.len()));
                    annotations.push(pose);
                };
                for (step, &pose) in script.iter().enumerate() {
                    if step > 0 {
                        let prev = &prototypes[script[step - 1]];
                        let next = &prototypes[pose];
                        for t in 1..=spec.transition_frames {
                            let w = t as f64 / (spec.transition_frames + 1) as f64;
                            let body: Vec<[f64; 3]> = prev
                                .iter()
                                .zip(next)
                                .map(|(a, b)| [0, 1, 2].map(|i| (1.0 - w) * a[i] + w * b[i]))
                                .collect();
                            emit(&body, None, &mut rng);
                        }
                    }
                    for _ in 0..spec.frames_per_pose {
                        emit(&prototypes[pose], Some(pose_label(pose)), &mut rng);
                    }
                }
                sequences.push(Sequence::new(
                    format!("{}-{}-{rep}", subject_label(s), action_label(a)),
                    subject_label(s),
                    action_label(a),
                    frames,
                    annotations,
                )?);
            }
        }
    }
    Ok((sequences, synthetic_manifest(spec, (0..k).map(pose_label).collect())))
}

/// Preprocessed prototype vectors of the synthetic alphabet, for tests and
/// diagnostics. Same seed and spec as [`generate_synthetic`].
pub fn synthetic_prototypes(spec: &SyntheticSpec, seed: u64) -> Result<Vec<Vec<f64>>> {
    let clean = SyntheticSpec {
        noise_sigma: 0.0,
        ..spec.clone()
    };
    let (seqs, manifest) = generate_synthetic(&clean, seed)?;
    let cfg = manifest.preprocess_config();
    let mut out: Vec<Option<Vec<f64>>> = vec![None; manifest.poses.len()];
    for seq in &seqs {
        for (frame, pose) in seq.frames.iter().zip(&seq.pose_annotations) {
            if let Some(p) = pose {
                let j = manifest.poses.iter().position(|q| q == p).expect("known pose");
                if out[j].is_none() {
                    let f = crate::skeleton::preprocess_frame(frame, &cfg)?;
                    out[j] = Some(crate::skeleton::vectorize(&f));
                }
            }
        }
    }
    Ok(out.into_iter().flatten().collect())
}
