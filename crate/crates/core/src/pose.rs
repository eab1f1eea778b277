//! Per-frame pose recognition and transition-frame windowing.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rda::{LabeledMatrix, RdaModel};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PoseDecision {
    /// Index into the model's pose alphabet.
    pub pose: usize,
    /// Euclidean distance to that pose's projected mean.
    pub distance: f64,
    pub frame_index: usize,
}

fn euclidean(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt()
}

/// Nearest projected class mean to an already-projected frame. Ties go to
/// the earlier pose in alphabet order.
pub fn nearest_mean(model: &RdaModel, projected: &[f64], frame_index: usize) -> PoseDecision {
    let mut best = PoseDecision {
        pose: 0,
        distance: f64::INFINITY,
        frame_index,
    };
    for (j, mean) in model.class_means.iter().enumerate() {
        let d = euclidean(projected, mean);
        if d < best.distance {
            best.pose = j;
            best.distance = d;
        }
    }
    best
}

/// Projects `x` and returns the nearest pose.
pub fn recognize_pose(model: &RdaModel, x: &[f64], frame_index: usize) -> Result<PoseDecision> {
    let projected = model.project(x)?;
    Ok(nearest_mean(model, &projected, frame_index))
}

/// Distance above which a frame is a removal candidate.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DistanceThreshold {
    Absolute(f64),
    /// One threshold per pose, indexed like the model alphabet.
    PerPose(Vec<f64>),
}

impl DistanceThreshold {
    fn for_pose(&self, pose: usize) -> f64 {
        match self {
            DistanceThreshold::Absolute(t) => *t,
            DistanceThreshold::PerPose(ts) => ts.get(pose).copied().unwrap_or(f64::INFINITY),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WindowingConfig {
    pub window_size: usize,
    pub min_keep_per_window: usize,
    pub distance_threshold: DistanceThreshold,
}

impl WindowingConfig {
    pub fn validate(&self) -> Result<()> {
        if self.window_size == 0 {
            return Err(Error::Config("window_size must be positive".into()));
        }
        if self.min_keep_per_window == 0 || self.min_keep_per_window > self.window_size {
            return Err(Error::Config(format!(
                "min_keep_per_window must lie in [1, {}], got {}",
                self.window_size, self.min_keep_per_window
            )));
        }
        match &self.distance_threshold {
            DistanceThreshold::Absolute(t) if !(*t > 0.0) => {
                Err(Error::Config(format!("distance threshold must be positive, got {t}")))
            }
            DistanceThreshold::PerPose(ts) if ts.iter().any(|t| !(*t >= 0.0)) => {
                Err(Error::Config("per-pose thresholds must be non-negative".into()))
            }
            _ => Ok(()),
        }
    }
}

/// Drops high-distance frames window by window.
///
/// The stream is cut into consecutive windows of `window_size`. Frames whose
/// distance exceeds their threshold are candidates for removal; if fewer than
/// `min(min_keep_per_window, window length)` frames would survive, the
/// lowest-distance candidates are put back until that many remain. Order is
/// preserved.
pub fn window_filter(decisions: &[PoseDecision], cfg: &WindowingConfig) -> Vec<PoseDecision> {
    let size = cfg.window_size.max(1);
    let mut out = Vec::with_capacity(decisions.len());
    for window in decisions.chunks(size) {
        let need = cfg.min_keep_per_window.min(window.len());
        let mut keep: Vec<bool> = window
            .iter()
            .map(|d| d.distance <= cfg.distance_threshold.for_pose(d.pose))
            .collect();
        let mut kept = keep.iter().filter(|k| **k).count();
        if kept < need {
            let mut dropped: Vec<usize> = (0..window.len()).filter(|&i| !keep[i]).collect();
            dropped.sort_by(|&a, &b| window[a].distance.total_cmp(&window[b].distance).then(a.cmp(&b)));
            for i in dropped {
                if kept == need {
                    break;
                }
                keep[i] = true;
                kept += 1;
            }
        }
        out.extend(window.iter().zip(&keep).filter(|(_, k)| **k).map(|(d, _)| *d));
    }
    out
}

/// Calibrated thresholds never fall below this fraction of the largest
/// distance between projected class means.
pub const CALIBRATION_FLOOR_REL: f64 = 1e-9;

/// Per-pose `quantile` of the distances between annotated frames and their
/// own pose's projected mean, floored at [`CALIBRATION_FLOOR_REL`] times the
/// largest class-mean distance. Poses absent from `data` get `+∞`.
pub fn calibrate_thresholds(model: &RdaModel, data: &LabeledMatrix, quantile: f64) -> Result<Vec<f64>> {
    if !(0.0..=1.0).contains(&quantile) {
        return Err(Error::Config(format!("quantile {quantile} outside [0, 1]")));
    }
    let mut per_pose: Vec<Vec<f64>> = vec![Vec::new(); model.pose_alphabet.len()];
    for (k, &j) in data.labels().iter().enumerate() {
        let label = &data.alphabet()[j];
        let Some(pose) = model.pose_alphabet.iter().position(|p| p == label) else {
            continue;
        };
        let x: Vec<f64> = data.x().column(k).to_vec();
        let projected = model.project(&x)?;
        per_pose[pose].push(euclidean(&projected, &model.class_means[pose]));
    }
    let mut spread = 0.0f64;
    for (a, ma) in model.class_means.iter().enumerate() {
        for mb in &model.class_means[a + 1..] {
            spread = spread.max(euclidean(ma, mb));
        }
    }
    let floor = CALIBRATION_FLOOR_REL * spread;
    Ok(per_pose
        .into_iter()
        .map(|mut d| quantile_of(&mut d, quantile).max(floor))
        .collect())
}

/// Linear-interpolation quantile; `+∞` for an empty sample.
fn quantile_of(values: &mut [f64], q: f64) -> f64 {
    if values.is_empty() {
        return f64::INFINITY;
    }
    values.sort_by(f64::total_cmp);
    let pos = q * (values.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    let frac = pos - lo as f64;
    values[lo] + frac * (values[hi] - values[lo])
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rda::{LabelKernelKind, RoweisFactors};
    use ndarray::Array2;
    use proptest::prelude::*;

    fn line_model(means: &[f64]) -> RdaModel {
        RdaModel {
            projection: Array2::eye(1),
            eigenvalues: vec![1.0],
            pose_alphabet: (0..means.len()).map(|j| format!("p{j}")).collect(),
            class_means: means.iter().map(|m| vec![*m]).collect(),
            train_mean: vec![0.0],
            input_class_means: means.iter().map(|m| vec![*m]).collect(),
            factors: RoweisFactors::fda(),
            kernel: LabelKernelKind::Delta,
            regularization: None,
            preprocessing: String::new(),
        }
    }

    fn dec(pose: usize, distance: f64, frame_index: usize) -> PoseDecision {
        PoseDecision {
            pose,
            distance,
            frame_index,
        }
    }

    fn cfg(window_size: usize, min_keep: usize, t: f64) -> WindowingConfig {
        WindowingConfig {
            window_size,
            min_keep_per_window: min_keep,
            distance_threshold: DistanceThreshold::Absolute(t),
        }
    }

    #[test]
    fn recognize_examples() {
        let m = line_model(&[-1.0, 1.0]);
        let d = recognize_pose(&m, &[0.2], 3).unwrap();
        assert_eq!(d.pose, 1);
        assert!((d.distance - 0.8).abs() < 1e-15);
        assert_eq!(d.frame_index, 3);

        let d = recognize_pose(&m, &[-1.0], 0).unwrap();
        assert_eq!((d.pose, d.distance), (0, 0.0));

        // Equidistant: first pose in alphabet order.
        assert_eq!(recognize_pose(&m, &[0.0], 0).unwrap().pose, 0);
        assert!(recognize_pose(&m, &[0.0, 1.0], 0).is_err());
    }

    #[test]
    fn window_keeps_everything_below_threshold() {
        let ds: Vec<_> = (0..7).map(|i| dec(0, 0.1 * i as f64, i)).collect();
        assert_eq!(window_filter(&ds, &cfg(3, 1, 10.0)), ds);
        let max = ds.iter().map(|d| d.distance).fold(0.0, f64::max);
        assert_eq!(window_filter(&ds, &cfg(3, 1, max + 1.0)), ds);
        assert!(window_filter(&[], &cfg(3, 1, 1.0)).is_empty());
    }

    #[test]
    fn window_all_above_keeps_single_best() {
        let ds = vec![dec(0, 3.0, 0), dec(0, 2.5, 1), dec(1, 4.0, 2), dec(1, 2.7, 3)];
        let out = window_filter(&ds, &cfg(4, 1, 1.0));
        // Oracle: enumerate every frame, survivor is the unique argmin.
        let best = (0..4)
            .min_by(|&a, &b| ds[a].distance.total_cmp(&ds[b].distance))
            .unwrap();
        assert_eq!(out, vec![ds[best]]);
    }

    #[test]
    fn window_tops_up_to_min_keep() {
        let ds = vec![
            dec(0, 0.1, 0),
            dec(0, 5.0, 1),
            dec(0, 3.0, 2),
            dec(0, 4.0, 3),
            dec(0, 9.0, 4),
        ];
        let out = window_filter(&ds, &cfg(5, 3, 1.0));
        let idx: Vec<usize> = out.iter().map(|d| d.frame_index).collect();
        assert_eq!(idx, vec![0, 2, 3]);
    }

    #[test]
    fn window_config_validation() {
        assert!(cfg(0, 1, 1.0).validate().is_err());
        assert!(cfg(3, 0, 1.0).validate().is_err());
        assert!(cfg(3, 4, 1.0).validate().is_err());
        assert!(cfg(3, 2, 0.0).validate().is_err());
        assert!(cfg(3, 2, 0.5).validate().is_ok());
    }

    #[test]
    fn per_pose_thresholds() {
        let ds = vec![dec(0, 0.5, 0), dec(1, 0.5, 1)];
        let c = WindowingConfig {
            window_size: 2,
            min_keep_per_window: 1,
            distance_threshold: DistanceThreshold::PerPose(vec![1.0, 0.1]),
        };
        assert_eq!(window_filter(&ds, &c), vec![ds[0]]);
    }

    #[test]
    fn quantile_interpolates() {
        assert_eq!(quantile_of(&mut [3.0, 1.0, 2.0], 0.5), 2.0);
        assert_eq!(quantile_of(&mut [0.0, 10.0], 0.95), 9.5);
        assert_eq!(quantile_of(&mut [], 0.5), f64::INFINITY);
    }

    #[test]
    fn calibration_uses_own_class_distances() {
        let data = LabeledMatrix::from_columns(
            &[vec![-1.5], vec![-0.5], vec![1.0], vec![1.0]],
            &["p0", "p0", "p1", "p1"],
        )
        .unwrap();
        let m = line_model(&[-1.0, 1.0]);
        let t = calibrate_thresholds(&m, &data, 1.0).unwrap();
        assert_eq!(t, vec![0.5, 2.0 * CALIBRATION_FLOOR_REL]);
    }

    proptest! {
        #[test]
        fn window_output_is_subsequence_with_min_survivors(
            dists in prop::collection::vec(0.0..2.0f64, 0..40),
            size in 1usize..7,
            keep in 1usize..7,
            t in 0.01..2.0f64,
        ) {
            let keep = keep.min(size);
            let ds: Vec<_> = dists.iter().enumerate().map(|(i, d)| dec(i % 3, *d, i)).collect();
            let out = window_filter(&ds, &cfg(size, keep, t));
            // Subsequence: strictly increasing frame indices, identical records.
            for w in out.windows(2) {
                prop_assert!(w[0].frame_index < w[1].frame_index);
            }
            for d in &out {
                prop_assert_eq!(*d, ds[d.frame_index]);
            }
            for (w, chunk) in ds.chunks(size).enumerate() {
                let survivors = out.iter().filter(|d| d.frame_index / size == w).count();
                prop_assert!(survivors >= keep.min(chunk.len()));
                // Below-threshold frames are never dropped.
                for d in chunk.iter().filter(|d| d.distance <= t) {
                    prop_assert!(out.contains(d));
                }
            }
            prop_assert_eq!(out.is_empty(), ds.is_empty());
        }

        #[test]
        fn decision_distance_is_brute_force_minimum(x in -5.0..5.0f64, means in prop::collection::vec(-4.0..4.0f64, 1..6)) {
            let m = line_model(&means);
            let d = recognize_pose(&m, &[x], 0).unwrap();
            let min = means.iter().map(|mu| (x - mu).abs()).fold(f64::INFINITY, f64::min);
            prop_assert_eq!(d.distance, min);
            prop_assert!(m.pose_alphabet.get(d.pose).is_some());
        }
    }
}
