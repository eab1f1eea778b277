//! End-to-end pipeline: preprocessing, subspace fit, pose recognition,
//! windowing and per-action HMMs, plus leave-one-subject-out evaluation,
//! factor sweeps and embedding export.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;
use std::path::PathBuf;
use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::dataset::{lopo_folds, DatasetManifest};
use crate::error::{Error, ErrorKind, Result};
use crate::exec::{self, Execution};
use crate::hmm::{classify_action, ActionModelBank, ActionOutcome, BaumWelchConfig, Criterion, TrainReport};
use crate::pose::{calibrate_thresholds, recognize_pose, window_filter, DistanceThreshold, WindowingConfig};
use crate::rda::{self, LabelKernelKind, LabeledMatrix, RdaConfig, RdaModel, RoweisFactors};
use crate::skeleton::{preprocess, vectorize, Sequence};
use crate::SCHEMA_VERSION;

/// The nine factor settings of the standard Roweis-map grid, in report order.
pub const STANDARD_GRID: [(f64, f64); 9] = [
    (0.0, 0.0),
    (0.0, 1.0),
    (1.0, 0.0),
    (1.0, 1.0),
    (0.0, 0.5),
    (1.0, 0.5),
    (0.5, 0.0),
    (0.5, 1.0),
    (0.5, 0.5),
];

/// The four corners: PCA, FDA, SPCA, DSDA.
pub const CORNER_GRID: [(f64, f64); 4] = [(0.0, 0.0), (0.0, 1.0), (1.0, 0.0), (1.0, 1.0)];

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ThresholdSetting {
    Absolute(f64),
    /// Per-pose quantile of own-class training distances.
    Quantile(f64),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct WindowSettings {
    pub window_size: usize,
    pub min_keep_per_window: usize,
    pub threshold: ThresholdSetting,
}

impl Default for WindowSettings {
    fn default() -> Self {
        Self {
            window_size: 5,
            min_keep_per_window: 2,
            threshold: ThresholdSetting::Quantile(0.95),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct HmmSettings {
    pub n_states: usize,
    pub tol: f64,
    pub max_iter: usize,
    pub seed: u64,
    pub smoothing: f64,
    pub criterion: Criterion,
}

impl Default for HmmSettings {
    fn default() -> Self {
        let bw = BaumWelchConfig::default();
        Self {
            n_states: 5,
            tol: bw.tol,
            max_iter: bw.max_iter,
            seed: bw.seed,
            smoothing: bw.smoothing,
            criterion: Criterion::Viterbi,
        }
    }
}

impl HmmSettings {
    pub fn baum_welch(&self) -> BaumWelchConfig {
        BaumWelchConfig {
            tol: self.tol,
            max_iter: self.max_iter,
            seed: self.seed,
            smoothing: self.smoothing,
        }
    }
}

/// Everything a run needs besides the data.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub manifest: Option<PathBuf>,
    pub factors: RoweisFactors,
    pub dims: Option<usize>,
    pub kernel: LabelKernelKind,
    pub eps: Option<f64>,
    pub windowing: WindowSettings,
    pub hmm: HmmSettings,
    pub out: Option<PathBuf>,
    pub execution: Execution,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            manifest: None,
            factors: RoweisFactors::fda(),
            dims: None,
            kernel: LabelKernelKind::Delta,
            eps: None,
            windowing: WindowSettings::default(),
            hmm: HmmSettings::default(),
            out: None,
            execution: Execution::default(),
        }
    }
}

impl RunConfig {
    pub fn validate(&self) -> Result<()> {
        self.factors.validate()?;
        if self.dims == Some(0) {
            return Err(Error::Config("dims must be at least 1".into()));
        }
        if let Some(e) = self.eps {
            if !(e >= 0.0) || !e.is_finite() {
                return Err(Error::Config(format!("eps must be a finite value >= 0, got {e}")));
            }
        }
        if let LabelKernelKind::Rbf { gamma } = self.kernel {
            if !(gamma > 0.0) || !gamma.is_finite() {
                return Err(Error::Config(format!("rbf gamma must be positive, got {gamma}")));
            }
        }
        let w = &self.windowing;
        let t = match w.threshold {
            ThresholdSetting::Absolute(t) => DistanceThreshold::Absolute(t),
            ThresholdSetting::Quantile(q) => {
                if !(0.0..=1.0).contains(&q) {
                    return Err(Error::Config(format!("threshold quantile {q} outside [0, 1]")));
                }
                DistanceThreshold::PerPose(Vec::new())
            }
        };
        WindowingConfig {
            window_size: w.window_size,
            min_keep_per_window: w.min_keep_per_window,
            distance_threshold: t,
        }
        .validate()?;
        let h = &self.hmm;
        if h.n_states == 0 {
            return Err(Error::Config("hmm.n_states must be at least 1".into()));
        }
        if !(h.tol > 0.0) {
            return Err(Error::Config(format!("hmm.tol must be positive, got {}", h.tol)));
        }
        if !(h.smoothing >= 0.0) || !h.smoothing.is_finite() {
            return Err(Error::Config(format!(
                "hmm.smoothing must be >= 0, got {}",
                h.smoothing
            )));
        }
        Ok(())
    }

    /// Rejects an explicit `dims` larger than the feature dimension.
    pub fn check_dims(&self, feature_dim: usize) -> Result<()> {
        match self.dims {
            Some(p) if p > feature_dim => Err(Error::Config(format!(
                "dims = {p} exceeds the feature dimension {feature_dim}"
            ))),
            _ => Ok(()),
        }
    }

    pub fn rda(&self) -> RdaConfig {
        RdaConfig {
            factors: self.factors,
            dims: self.dims,
            kernel: self.kernel,
            eps: self.eps,
        }
    }
}

/// Preprocesses every sequence with the manifest's landmarks and selection.
pub fn preprocess_dataset(
    manifest: &DatasetManifest,
    sequences: &[Sequence],
    mode: Execution,
) -> Result<Vec<Sequence>> {
    let cfg = manifest.preprocess_config();
    exec::map(mode, sequences, |s| {
        preprocess(s, &cfg).map_err(|e| match e.kind() {
            ErrorKind::Data => Error::Data(format!("sequence {:?}: {e}", s.sequence_id)),
            _ => e,
        })
    })
    .into_iter()
    .collect()
}

/// Annotated frames of preprocessed sequences as a labelled matrix.
pub fn annotated_frames(sequences: &[Sequence]) -> Result<LabeledMatrix> {
    let mut columns = Vec::new();
    let mut labels = Vec::new();
    for s in sequences {
        for (f, pose) in s.frames.iter().zip(&s.pose_annotations) {
            if let Some(p) = pose {
                columns.push(vectorize(f));
                labels.push(p.as_str());
            }
        }
    }
    if columns.is_empty() {
        return Err(Error::Protocol("training data carries no pose annotations".into()));
    }
    LabeledMatrix::from_columns(&columns, &labels)
}

/// A fitted subspace and model bank.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainedPipeline {
    pub rda: RdaModel,
    pub bank: ActionModelBank,
    pub reports: BTreeMap<String, TrainReport>,
}

/// Pose symbols of a preprocessed sequence after windowing.
pub fn pose_symbols(rda: &RdaModel, windowing: &WindowingConfig, seq: &Sequence) -> Result<Vec<usize>> {
    let decisions = seq
        .frames
        .iter()
        .enumerate()
        .map(|(i, f)| recognize_pose(rda, &vectorize(f), i))
        .collect::<Result<Vec<_>>>()?;
    Ok(window_filter(&decisions, windowing)
        .into_iter()
        .map(|d| d.pose)
        .collect())
}

/// Fits the subspace on annotated frames, calibrates the windowing
/// threshold and trains one HMM per action on the windowed pose streams.
pub fn train(cfg: &RunConfig, sequences: &[Sequence], fingerprint: &str) -> Result<TrainedPipeline> {
    cfg.validate()?;
    if sequences.is_empty() {
        return Err(Error::Protocol("no training sequences".into()));
    }
    let data = annotated_frames(sequences)?;
    cfg.check_dims(data.dim())?;
    let mut model = rda::fit(&data, &cfg.rda())?;
    model.preprocessing = fingerprint.to_string();

    let threshold = match cfg.windowing.threshold {
        ThresholdSetting::Absolute(t) => DistanceThreshold::Absolute(t),
        ThresholdSetting::Quantile(q) => DistanceThreshold::PerPose(calibrate_thresholds(&model, &data, q)?),
    };
    let windowing = WindowingConfig {
        window_size: cfg.windowing.window_size,
        min_keep_per_window: cfg.windowing.min_keep_per_window,
        distance_threshold: threshold,
    };

    let streams = exec::map(cfg.execution, sequences, |s| pose_symbols(&model, &windowing, s));
    let mut per_action: BTreeMap<String, Vec<Vec<usize>>> = BTreeMap::new();
    for (s, stream) in sequences.iter().zip(streams) {
        per_action.entry(s.action.clone()).or_default().push(stream?);
    }
    let (mut bank, reports) = ActionModelBank::train(
        &per_action,
        cfg.hmm.n_states,
        &model.pose_alphabet,
        &cfg.hmm.baum_welch(),
        cfg.execution,
    )?;
    bank.windowing = Some(windowing);
    Ok(TrainedPipeline {
        rda: model,
        bank,
        reports,
    })
}

impl TrainedPipeline {
    pub fn classify(&self, seq: &Sequence, criterion: Criterion) -> Result<ActionOutcome> {
        let windowing = self
            .bank
            .windowing
            .as_ref()
            .ok_or_else(|| Error::Data("model bank carries no windowing settings".into()))?;
        let symbols = pose_symbols(&self.rda, windowing, seq)?;
        classify_action(&self.bank, &symbols, criterion)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FoldResult {
    pub held_out_subject: String,
    pub n_test: usize,
    pub n_correct: usize,
    pub n_rejected: usize,
    pub accuracy: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub schema_version: u32,
    pub document: String,
    pub factors: RoweisFactors,
    pub supervision_level: f64,
    pub folds: Vec<FoldResult>,
    /// Average of the per-fold accuracies.
    pub mean_accuracy: f64,
    /// Correct decisions over all test sequences.
    pub pooled_accuracy: f64,
    /// Row labels (true action) and the first `actions.len()` column labels.
    pub actions: Vec<String>,
    /// Row-true counts; the last column counts rejected sequences.
    pub confusion: Vec<Vec<usize>>,
    pub config: RunConfig,
    pub seconds: f64,
}

pub const REJECTED_COLUMN: &str = "rejected";

/// Leave-one-subject-out evaluation over preprocessed sequences.
/// Rejected sequences count as errors.
pub fn evaluate_lopo(cfg: &RunConfig, sequences: &[Sequence], fingerprint: &str) -> Result<EvalReport> {
    let start = Instant::now();
    cfg.validate()?;
    let folds = lopo_folds(sequences)?;
    let actions: Vec<String> = sequences
        .iter()
        .map(|s| s.action.clone())
        .collect::<BTreeSet<_>>()
        .into_iter()
        .collect();
    let index: BTreeMap<&str, usize> = actions.iter().enumerate().map(|(i, a)| (a.as_str(), i)).collect();

    let outcomes = exec::map(cfg.execution, &folds, |fold| -> Result<Vec<(usize, Option<usize>)>> {
        if fold.test.is_empty() {
            return Err(Error::Protocol(format!(
                "fold {:?} has no test sequences",
                fold.held_out_subject
            )));
        }
        let trained = train(cfg, &fold.train, fingerprint)?;
        fold.test
            .iter()
            .map(|s| {
                let out = trained.classify(s, cfg.hmm.criterion)?;
                Ok((index[s.action.as_str()], out.action().map(|a| index[a])))
            })
            .collect()
    });

    let n = actions.len();
    let mut confusion = vec![vec![0usize; n + 1]; n];
    let mut fold_results = Vec::with_capacity(folds.len());
    for (fold, outcome) in folds.iter().zip(outcomes) {
        let outcome = outcome.map_err(|e| match e.kind() {
            ErrorKind::Config => e,
            _ => Error::Data(format!("fold {:?}: {e}", fold.held_out_subject)),
        })?;
        let mut correct = 0;
        let mut rejected = 0;
        for (truth, predicted) in &outcome {
            match predicted {
                Some(p) => {
                    confusion[*truth][*p] += 1;
                    correct += usize::from(p == truth);
                }
                None => {
                    confusion[*truth][n] += 1;
                    rejected += 1;
                }
            }
        }
        fold_results.push(FoldResult {
            held_out_subject: fold.held_out_subject.clone(),
            n_test: outcome.len(),
            n_correct: correct,
            n_rejected: rejected,
            accuracy: correct as f64 / outcome.len() as f64,
        });
    }
    let mean_accuracy = fold_results.iter().map(|f| f.accuracy).sum::<f64>() / fold_results.len() as f64;
    let total: usize = fold_results.iter().map(|f| f.n_test).sum();
    let trace: usize = (0..n).map(|i| confusion[i][i]).sum();
    Ok(EvalReport {
        schema_version: SCHEMA_VERSION,
        document: "eval_report".into(),
        factors: cfg.factors,
        supervision_level: cfg.factors.supervision_level(),
        folds: fold_results,
        mean_accuracy,
        pooled_accuracy: trace as f64 / total as f64,
        actions,
        confusion,
        config: cfg.clone(),
        seconds: start.elapsed().as_secs_f64(),
    })
}

impl EvalReport {
    pub fn to_table(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(
            s,
            "factors r1={} r2={} (supervision {:.2})",
            self.factors.r1, self.factors.r2, self.supervision_level
        );
        let _ = writeln!(
            s,
            "{:<20} {:>6} {:>8} {:>9} {:>9}",
            "held-out subject", "tests", "correct", "rejected", "accuracy"
        );
        for f in &self.folds {
            let _ = writeln!(
                s,
                "{:<20} {:>6} {:>8} {:>9} {:>9.4}",
                f.held_out_subject, f.n_test, f.n_correct, f.n_rejected, f.accuracy
            );
        }
        let _ = writeln!(s, "mean accuracy   {:.4}", self.mean_accuracy);
        let _ = writeln!(s, "pooled accuracy {:.4}", self.pooled_accuracy);
        let _ = writeln!(s);
        let width = self
            .actions
            .iter()
            .map(String::len)
            .chain([REJECTED_COLUMN.len()])
            .max()
            .unwrap_or(8)
            + 1;
        let _ = write!(s, "{:<width$}", "true \\ predicted");
        for a in self.actions.iter().map(String::as_str).chain([REJECTED_COLUMN]) {
            let _ = write!(s, "{a:>width$}");
        }
        let _ = writeln!(s);
        for (a, row) in self.actions.iter().zip(&self.confusion) {
            let _ = write!(s, "{a:<width$}");
            for v in row {
                let _ = write!(s, "{v:>width$}");
            }
            let _ = writeln!(s);
        }
        s
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub r1: f64,
    pub r2: f64,
    pub supervision_level: f64,
    pub mean_accuracy: Option<f64>,
    pub pooled_accuracy: Option<f64>,
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepReport {
    pub schema_version: u32,
    pub document: String,
    pub rows: Vec<SweepRow>,
    pub config: RunConfig,
    pub seconds: f64,
}

/// Runs [`evaluate_lopo`] at each grid point. A failing point is recorded
/// in its row and the remaining points still run.
pub fn sweep(
    cfg: &RunConfig,
    grid: &[RoweisFactors],
    sequences: &[Sequence],
    fingerprint: &str,
) -> Result<SweepReport> {
    let start = Instant::now();
    if grid.is_empty() {
        return Err(Error::Config("sweep grid is empty".into()));
    }
    cfg.validate()?;
    let rows = exec::map(cfg.execution, grid, |f| {
        let point = RunConfig {
            factors: *f,
            ..cfg.clone()
        };
        let result = evaluate_lopo(&point, sequences, fingerprint);
        SweepRow {
            r1: f.r1,
            r2: f.r2,
            supervision_level: f.supervision_level(),
            mean_accuracy: result.as_ref().ok().map(|r| r.mean_accuracy),
            pooled_accuracy: result.as_ref().ok().map(|r| r.pooled_accuracy),
            error: result.err().map(|e| format!("(r1={}, r2={}): {e}", f.r1, f.r2)),
        }
    });
    Ok(SweepReport {
        schema_version: SCHEMA_VERSION,
        document: "sweep_report".into(),
        rows,
        config: cfg.clone(),
        seconds: start.elapsed().as_secs_f64(),
    })
}

impl SweepReport {
    pub fn to_table(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "{:>5} {:>5} {:>5} {:>9} {:>9}", "r1", "r2", "s", "mean", "pooled");
        for r in &self.rows {
            let _ = write!(s, "{:>5.2} {:>5.2} {:>5.2} ", r.r1, r.r2, r.supervision_level);
            match (r.mean_accuracy, r.pooled_accuracy, &r.error) {
                (Some(m), Some(p), _) => {
                    let _ = writeln!(s, "{m:>9.4} {p:>9.4}");
                }
                (_, _, e) => {
                    let _ = writeln!(s, "failed: {}", e.as_deref().unwrap_or("unknown"));
                }
            }
        }
        s
    }
}

pub fn grid_from_pairs(pairs: &[(f64, f64)]) -> Result<Vec<RoweisFactors>> {
    pairs.iter().map(|&(r1, r2)| RoweisFactors::new(r1, r2)).collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EmbeddingRowKind {
    Frame,
    ClassMean,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EmbeddingRow {
    pub kind: EmbeddingRowKind,
    pub pose: String,
    pub dim1: f64,
    pub dim2: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sequence_id: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub frame_index: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EmbeddingDocument {
    pub schema_version: u32,
    pub document: String,
    pub factors: RoweisFactors,
    pub rows: Vec<EmbeddingRow>,
}

/// Two leading coordinates of every annotated frame, then one row per
/// stored class mean.
pub fn export_embedding(model: &RdaModel, sequences: &[Sequence]) -> Result<EmbeddingDocument> {
    if model.dims() < 2 {
        return Err(Error::Config(format!(
            "embedding export needs at least 2 dimensions, model has {}",
            model.dims()
        )));
    }
    let mut rows = Vec::new();
    for s in sequences {
        for (f, pose) in s.frames.iter().zip(&s.pose_annotations) {
            let Some(pose) = pose else { continue };
            let y = model.project(&vectorize(f))?;
            rows.push(EmbeddingRow {
                kind: EmbeddingRowKind::Frame,
                pose: pose.clone(),
                dim1: y[0],
                dim2: y[1],
                sequence_id: Some(s.sequence_id.clone()),
                frame_index: Some(f.timestamp_index),
            });
        }
    }
    for (pose, mean) in model.pose_alphabet.iter().zip(&model.class_means) {
        rows.push(EmbeddingRow {
            kind: EmbeddingRowKind::ClassMean,
            pose: pose.clone(),
            dim1: mean[0],
            dim2: mean[1],
            sequence_id: None,
            frame_index: None,
        });
    }
    Ok(EmbeddingDocument {
        schema_version: SCHEMA_VERSION,
        document: "embedding".into(),
        factors: model.factors,
        rows,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::{generate_synthetic, SyntheticSpec};

    fn prepared(spec: &SyntheticSpec, seed: u64) -> (Vec<Sequence>, String) {
        let (seqs, manifest) = generate_synthetic(spec, seed).unwrap();
        let fp = manifest.preprocess_config().fingerprint();
        (preprocess_dataset(&manifest, &seqs, Execution::Sequential).unwrap(), fp)
    }

    fn quick() -> RunConfig {
        RunConfig {
            hmm: HmmSettings {
                n_states: 3,
                ..Default::default()
            },
            ..Default::default()
        }
    }

    #[test]
    fn noiseless_data_is_recognised_perfectly() {
        let (seqs, fp) = prepared(&SyntheticSpec::new(3, 4, 3, 4, 0.0), 2);
        let cfg = RunConfig {
            eps: Some(1e-6),
            ..quick()
        };
        let report = evaluate_lopo(&cfg, &seqs, &fp).unwrap();
        assert_eq!(report.mean_accuracy, 1.0);
        assert_eq!(report.folds.len(), 3);
    }

    #[test]
    fn report_accounting() {
        let (seqs, fp) = prepared(&SyntheticSpec::new(3, 3, 2, 4, 0.05), 4);
        let report = evaluate_lopo(&quick(), &seqs, &fp).unwrap();
        let total: usize = report.confusion.iter().flatten().sum();
        let trace: usize = (0..report.actions.len()).map(|i| report.confusion[i][i]).sum();
        assert!((trace as f64 / total as f64 - report.pooled_accuracy).abs() <= 1e-12);
        // Equal-size folds: mean and pooled coincide.
        assert!((report.mean_accuracy - report.pooled_accuracy).abs() <= 1e-12);
        for (a, row) in report.actions.iter().zip(&report.confusion) {
            let n = seqs.iter().filter(|s| &s.action == a).count();
            assert_eq!(row.iter().sum::<usize>(), n);
        }
        assert!((0.0..=1.0).contains(&report.mean_accuracy));
        assert!(report.to_table().contains("pooled accuracy"));
    }

    #[test]
    fn execution_modes_agree() {
        let (seqs, fp) = prepared(&SyntheticSpec::new(3, 3, 2, 3, 0.03), 8);
        let seq_cfg = RunConfig {
            execution: Execution::Sequential,
            ..quick()
        };
        let par_cfg = RunConfig {
            execution: Execution::Parallel,
            ..quick()
        };
        let a = train(&seq_cfg, &seqs, &fp).unwrap();
        let b = train(&par_cfg, &seqs, &fp).unwrap();
        assert_eq!(a, b);
        let ra = evaluate_lopo(&seq_cfg, &seqs, &fp).unwrap();
        let rb = evaluate_lopo(&par_cfg, &seqs, &fp).unwrap();
        assert_eq!(ra.confusion, rb.confusion);
        assert_eq!(ra.folds, rb.folds);
    }

    #[test]
    fn train_requires_annotations_and_valid_dims() {
        let (mut seqs, fp) = prepared(&SyntheticSpec::new(2, 2, 2, 2, 0.01), 1);
        let too_many = RunConfig {
            dims: Some(1000),
            ..quick()
        };
        assert!(matches!(train(&too_many, &seqs, &fp), Err(Error::Config(_))));
        for s in &mut seqs {
            s.pose_annotations.iter_mut().for_each(|a| *a = None);
        }
        assert!(matches!(train(&quick(), &seqs, &fp), Err(Error::Protocol(_))));
    }

    #[test]
    fn config_validation() {
        let mut c = quick();
        c.windowing.min_keep_per_window = 9;
        assert!(c.validate().is_err());
        let mut c = quick();
        c.windowing.threshold = ThresholdSetting::Quantile(1.5);
        assert!(c.validate().is_err());
        let mut c = quick();
        c.hmm.n_states = 0;
        assert!(c.validate().is_err());
        let mut c = quick();
        c.factors = RoweisFactors { r1: 1.5, r2: 0.0 };
        assert!(c.validate().is_err());
        assert!(RunConfig::default().validate().is_ok());
    }

    #[test]
    fn singleton_sweep_matches_eval() {
        let (seqs, fp) = prepared(&SyntheticSpec::new(3, 3, 2, 3, 0.03), 6);
        let cfg = quick();
        let report = evaluate_lopo(&cfg, &seqs, &fp).unwrap();
        let sw = sweep(&cfg, &[cfg.factors], &seqs, &fp).unwrap();
        assert_eq!(sw.rows.len(), 1);
        assert_eq!(sw.rows[0].mean_accuracy, Some(report.mean_accuracy));
        assert_eq!(sw.rows[0].pooled_accuracy, Some(report.pooled_accuracy));
        assert!(sweep(&cfg, &[], &seqs, &fp).is_err());
    }

    #[test]
    fn sweep_records_failures_and_continues() {
        // Noiseless data has S_W = 0, so r2 = 1 without a ridge cannot be factored.
        let (seqs, fp) = prepared(&SyntheticSpec::new(2, 2, 2, 3, 0.0), 6);
        let cfg = RunConfig {
            eps: Some(0.0),
            ..quick()
        };
        let grid = grid_from_pairs(&[(0.0, 1.0), (0.0, 0.0)]).unwrap();
        let sw = sweep(&cfg, &grid, &seqs, &fp).unwrap();
        assert_eq!(sw.rows.len(), 2);
        assert!(sw.rows[0].error.as_deref().unwrap().contains("r1=0, r2=1"));
        assert!(sw.rows[0].mean_accuracy.is_none());
        assert!(sw.rows[1].error.is_none());
        assert!(sw.to_table().contains("failed"));
        assert_eq!(grid_from_pairs(&STANDARD_GRID).unwrap().len(), 9);
    }

    #[test]
    fn embedding_accounting() {
        let (seqs, fp) = prepared(&SyntheticSpec::new(2, 3, 3, 4, 0.02), 3);
        let t = train(&quick(), &seqs, &fp).unwrap();
        let doc = export_embedding(&t.rda, &seqs).unwrap();
        let frames: usize = seqs.iter().map(|s| s.pose_annotations.iter().flatten().count()).sum();
        assert_eq!(doc.rows.len(), frames + t.rda.pose_alphabet.len());
        for (j, pose) in t.rda.pose_alphabet.iter().enumerate() {
            let members: Vec<&EmbeddingRow> = doc
                .rows
                .iter()
                .filter(|r| r.kind == EmbeddingRowKind::Frame && &r.pose == pose)
                .collect();
            let m1 = members.iter().map(|r| r.dim1).sum::<f64>() / members.len() as f64;
            let m2 = members.iter().map(|r| r.dim2).sum::<f64>() / members.len() as f64;
            assert!((m1 - t.rda.class_means[j][0]).abs() <= 1e-10);
            assert!((m2 - t.rda.class_means[j][1]).abs() <= 1e-10);
        }
    }

    #[test]
    fn zero_noise_embedding_has_no_spread() {
        let (seqs, fp) = prepared(&SyntheticSpec::new(2, 3, 3, 4, 0.0), 3);
        let cfg = RunConfig {
            eps: Some(1e-6),
            ..quick()
        };
        let t = train(&cfg, &seqs, &fp).unwrap();
        let doc = export_embedding(&t.rda, &seqs).unwrap();
        for r in doc.rows.iter().filter(|r| r.kind == EmbeddingRowKind::Frame) {
            let j = t.rda.pose_alphabet.iter().position(|p| p == &r.pose).unwrap();
            assert!((r.dim1 - t.rda.class_means[j][0]).abs() <= 1e-9);
            assert!((r.dim2 - t.rda.class_means[j][1]).abs() <= 1e-9);
        }
        let one_dim = RunConfig { dims: Some(1), ..cfg };
        let t = train(&one_dim, &seqs, &fp).unwrap();
        assert!(matches!(export_embedding(&t.rda, &seqs), Err(Error::Config(_))));
    }
}
