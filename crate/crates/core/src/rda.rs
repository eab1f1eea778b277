//! Roweis discriminant analysis.
//!
//! A subspace is spanned by the leading generalized eigenvectors of the pencil
//! `(R₁, R₂)` with
//!
//! ```text
//! R₁ = X H P H Xᵀ,   P  = r1·K_y + (1 − r1)·I
//! R₂ = r2·S_W + (1 − r2)·I
//! ```
//!
//! The corners of the `(r1, r2)` square are PCA `(0, 0)`, supervised PCA
//! `(1, 0)`, Fisher discriminant analysis `(0, 1)` and double-supervised
//! discriminant analysis `(1, 1)`.

use std::collections::BTreeSet;
use std::fmt;
use std::path::Path;
use std::str::FromStr;

use ndarray::{Array1, Array2, ArrayView2, Axis};
use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::{Error, Result};
use crate::geigen::{self, SymMatrix};
use crate::SCHEMA_VERSION;

/// Pose vectors (columns of `x`) with their class labels.
#[derive(Debug, Clone, PartialEq)]
pub struct LabeledMatrix {
    x: Array2<f64>,
    labels: Vec<usize>,
    alphabet: Vec<String>,
    counts: Vec<usize>,
}

impl LabeledMatrix {
    /// `x` is d×n; the class alphabet is the sorted set of distinct labels.
    pub fn new<S: AsRef<str>>(x: Array2<f64>, labels: &[S]) -> Result<Self> {
        let (d, n) = x.dim();
        if d == 0 || n < 2 {
            return Err(Error::InvalidDimension(format!(
                "labeled data needs d >= 1 and n >= 2, got {d}x{n}"
            )));
        }
        if labels.len() != n {
            return Err(Error::DimensionMismatch {
                expected: n,
                found: labels.len(),
            });
        }
        if x.iter().any(|v| !v.is_finite()) {
            return Err(Error::Data("non-finite value in pose data".into()));
        }
        let alphabet: Vec<String> = labels
            .iter()
            .map(|l| l.as_ref().to_owned())
            .collect::<BTreeSet<_>>()
            .into_iter()
            .collect();
        let index: Vec<usize> = labels
            .iter()
            .map(|l| {
                alphabet
                    .binary_search_by(|a| a.as_str().cmp(l.as_ref()))
                    .expect("present")
            })
            .collect();
        let mut counts = vec![0; alphabet.len()];
        for &j in &index {
            counts[j] += 1;
        }
        Ok(Self {
            x,
            labels: index,
            alphabet,
            counts,
        })
    }

    /// Builds the d×n matrix from per-sample vectors.
    pub fn from_columns<S: AsRef<str>>(columns: &[Vec<f64>], labels: &[S]) -> Result<Self> {
        let d = columns.first().map_or(0, Vec::len);
        if let Some(bad) = columns.iter().find(|c| c.len() != d) {
            return Err(Error::DimensionMismatch {
                expected: d,
                found: bad.len(),
            });
        }
        let x = Array2::from_shape_fn((d, columns.len()), |(i, k)| columns[k][i]);
        Self::new(x, labels)
    }

    pub fn x(&self) -> ArrayView2<'_, f64> {
        self.x.view()
    }

    /// Class index of every sample.
    pub fn labels(&self) -> &[usize] {
        &self.labels
    }

    pub fn alphabet(&self) -> &[String] {
        &self.alphabet
    }

    pub fn class_counts(&self) -> &[usize] {
        &self.counts
    }

    pub fn dim(&self) -> usize {
        self.x.nrows()
    }

    pub fn len(&self) -> usize {
        self.x.ncols()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn n_classes(&self) -> usize {
        self.alphabet.len()
    }

    pub fn mean(&self) -> Array1<f64> {
        self.x.mean_axis(Axis(1)).expect("n >= 2")
    }

    /// d×c matrix of per-class means.
    pub fn class_means(&self) -> Array2<f64> {
        let mut m = Array2::zeros((self.dim(), self.n_classes()));
        for (k, &j) in self.labels.iter().enumerate() {
            let mut col = m.column_mut(j);
            col += &self.x.column(k);
        }
        for (j, &nj) in self.counts.iter().enumerate() {
            m.column_mut(j).mapv_inplace(|v| v / nj as f64);
        }
        m
    }
}

/// Mixing weights `(r1, r2)`, each in `[0, 1]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RoweisFactors {
    pub r1: f64,
    pub r2: f64,
}

impl RoweisFactors {
    pub fn new(r1: f64, r2: f64) -> Result<Self> {
        let f = Self { r1, r2 };
        f.validate()?;
        Ok(f)
    }

    pub fn validate(&self) -> Result<()> {
        check_unit("r1", self.r1)?;
        check_unit("r2", self.r2)
    }

    pub fn pca() -> Self {
        Self { r1: 0.0, r2: 0.0 }
    }

    pub fn fda() -> Self {
        Self { r1: 0.0, r2: 1.0 }
    }

    pub fn spca() -> Self {
        Self { r1: 1.0, r2: 0.0 }
    }

    pub fn dsda() -> Self {
        Self { r1: 1.0, r2: 1.0 }
    }

    pub fn supervision_level(&self) -> f64 {
        supervision_level(self)
    }
}

/// `(r1 + r2) / 2`.
pub fn supervision_level(factors: &RoweisFactors) -> f64 {
    0.5 * (factors.r1 + factors.r2)
}

fn check_unit(name: &str, v: f64) -> Result<()> {
    if !(0.0..=1.0).contains(&v) {
        return Err(Error::Config(format!("{name} = {v} is outside [0, 1]")));
    }
    Ok(())
}

/// Kernel over class labels.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub enum LabelKernelKind {
    #[default]
    Delta,
    Linear,
    Rbf {
        gamma: f64,
    },
}

impl LabelKernelKind {
    /// Every supported kernel on one-hot labels has the form
    /// `K = α·1·1ᵀ + β·Y·Yᵀ`; returns `(α, β)`.
    pub fn one_hot_coefficients(&self) -> (f64, f64) {
        match *self {
            LabelKernelKind::Delta | LabelKernelKind::Linear => (0.0, 1.0),
            LabelKernelKind::Rbf { gamma } => {
                let off = (-2.0 * gamma).exp();
                (off, 1.0 - off)
            }
        }
    }

    fn validate(&self) -> Result<()> {
        if let LabelKernelKind::Rbf { gamma } = *self {
            if !(gamma > 0.0 && gamma.is_finite()) {
                return Err(Error::Config(format!("rbf gamma must be positive, got {gamma}")));
            }
        }
        Ok(())
    }
}

impl fmt::Display for LabelKernelKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            LabelKernelKind::Delta => f.write_str("delta"),
            LabelKernelKind::Linear => f.write_str("linear"),
            LabelKernelKind::Rbf { gamma } => write!(f, "rbf:{gamma}"),
        }
    }
}

impl FromStr for LabelKernelKind {
    type Err = Error;

    /// Accepts `delta`, `linear`, `rbf` (γ = 1) and `rbf:<γ>`.
    fn from_str(s: &str) -> Result<Self> {
        let kind = match s.split_once(':') {
            None => match s {
                "delta" => LabelKernelKind::Delta,
                "linear" => LabelKernelKind::Linear,
                "rbf" => LabelKernelKind::Rbf { gamma: 1.0 },
                _ => return Err(Error::Config(format!("unknown label kernel {s:?}"))),
            },
            Some(("rbf", g)) => LabelKernelKind::Rbf {
                gamma: g.parse().map_err(|_| Error::Config(format!("bad rbf gamma {g:?}")))?,
            },
            Some(_) => return Err(Error::Config(format!("unknown label kernel {s:?}"))),
        };
        kind.validate()?;
        Ok(kind)
    }
}

impl Serialize for LabelKernelKind {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for LabelKernelKind {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LabelKernel {
    pub kind: LabelKernelKind,
    pub matrix: SymMatrix,
}

/// n×n kernel matrix over `labels`.
pub fn label_kernel<T: PartialEq>(labels: &[T], kind: LabelKernelKind) -> Result<LabelKernel> {
    kind.validate()?;
    let n = labels.len();
    if n == 0 {
        return Err(Error::InvalidDimension("label kernel over no labels".into()));
    }
    let (alpha, beta) = kind.one_hot_coefficients();
    let k = Array2::from_shape_fn(
        (n, n),
        |(i, j)| {
            if labels[i] == labels[j] {
                alpha + beta
            } else {
                alpha
            }
        },
    );
    Ok(LabelKernel {
        kind,
        matrix: SymMatrix::symmetrized(k),
    })
}

pub fn between_scatter(data: &LabeledMatrix) -> SymMatrix {
    let mu = data.mean();
    let mut dev = data.class_means();
    for (j, mut col) in dev.columns_mut().into_iter().enumerate() {
        col -= &mu;
        col *= (data.class_counts()[j] as f64).sqrt();
    }
    geigen::gram(dev.view())
}

pub fn within_scatter(data: &LabeledMatrix) -> SymMatrix {
    let means = data.class_means();
    let mut dev = data.x.clone();
    for (k, mut col) in dev.columns_mut().into_iter().enumerate() {
        col -= &means.column(data.labels[k]);
    }
    geigen::gram(dev.view())
}

/// `X H Xᵀ`.
pub fn total_scatter(data: &LabeledMatrix) -> SymMatrix {
    let xc = geigen::center_columns(data.x()).expect("validated non-empty");
    geigen::gram(xc.view())
}

/// `r1·K_y + (1 − r1)·I`.
pub fn roweis_p(kernel: &LabelKernel, r1: f64) -> Result<SymMatrix> {
    check_unit("r1", r1)?;
    let n = kernel.matrix.dim();
    kernel.matrix.combine(r1, &SymMatrix::identity(n), 1.0 - r1)
}

/// `X H P H Xᵀ` for an explicit n×n `P`.
pub fn roweis_r1(x: ArrayView2<f64>, p: &SymMatrix) -> Result<SymMatrix> {
    if p.dim() != x.ncols() {
        return Err(Error::DimensionMismatch {
            expected: x.ncols(),
            found: p.dim(),
        });
    }
    let xc = geigen::center_columns(x)?;
    Ok(SymMatrix::symmetrized(xc.dot(p.as_array()).dot(&xc.t())))
}

/// `R₁` for a one-hot label kernel without forming any n×n matrix.
///
/// With `K = α·11ᵀ + β·YYᵀ` and `H·1 = 0`,
/// `X H P H Xᵀ = r1·β·(XHY)(XHY)ᵀ + (1 − r1)·XHXᵀ`, where column `j` of `XHY`
/// is `n_j·(μ_j − μ)`.
pub fn roweis_r1_from_labels(data: &LabeledMatrix, kind: LabelKernelKind, r1: f64) -> Result<SymMatrix> {
    check_unit("r1", r1)?;
    kind.validate()?;
    let (_, beta) = kind.one_hot_coefficients();
    let mu = data.mean();
    let mut xhy = data.class_means();
    for (j, mut col) in xhy.columns_mut().into_iter().enumerate() {
        col -= &mu;
        col *= data.class_counts()[j] as f64;
    }
    let supervised = geigen::gram(xhy.view());
    let total = total_scatter(data);
    supervised.combine(r1 * beta, &total, 1.0 - r1)
}

/// `r2·S_W + (1 − r2)·I`, ridged by `eps·I` only if it is not positive definite.
pub fn roweis_r2(s_w: &SymMatrix, r2: f64, eps: f64) -> Result<SymMatrix> {
    Ok(roweis_r2_checked(s_w, r2, eps)?.0)
}

/// As [`roweis_r2`], also reporting whether the ridge was applied.
fn roweis_r2_checked(s_w: &SymMatrix, r2: f64, eps: f64) -> Result<(SymMatrix, bool)> {
    check_unit("r2", r2)?;
    if !(eps >= 0.0) {
        return Err(Error::Config(format!("regularization eps must be >= 0, got {eps}")));
    }
    let d = s_w.dim();
    let r = s_w.combine(r2, &SymMatrix::identity(d), 1.0 - r2)?;
    if geigen::cholesky(&r).is_ok() {
        Ok((r, false))
    } else {
        Ok((geigen::regularize(&r, eps), true))
    }
}

/// Fit settings.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RdaConfig {
    pub factors: RoweisFactors,
    /// Subspace dimension; `None` means `c − 1` capped to `[1, d]`.
    pub dims: Option<usize>,
    pub kernel: LabelKernelKind,
    /// Ridge for a singular `R₂`; `None` means `1e-8·trace(R₂)/d`.
    pub eps: Option<f64>,
}

impl Default for RdaConfig {
    fn default() -> Self {
        Self {
            factors: RoweisFactors::fda(),
            dims: None,
            kernel: LabelKernelKind::Delta,
            eps: None,
        }
    }
}

impl RdaConfig {
    pub fn resolve_dims(&self, n_classes: usize, d: usize) -> Result<usize> {
        let p = self.dims.unwrap_or_else(|| n_classes.saturating_sub(1).min(d).max(1));
        if p == 0 || p > d {
            return Err(Error::Config(format!("subspace dimension {p} must lie in [1, {d}]")));
        }
        Ok(p)
    }
}

/// A fitted Roweis subspace plus projected class means.
#[derive(Debug, Clone, PartialEq)]
pub struct RdaModel {
    /// d×p, columns `R₂`-orthonormal at fit time.
    pub projection: Array2<f64>,
    pub eigenvalues: Vec<f64>,
    pub pose_alphabet: Vec<String>,
    /// Projected class means, one length-p vector per pose.
    pub class_means: Vec<Vec<f64>>,
    pub train_mean: Vec<f64>,
    /// Per-class means in input space.
    pub input_class_means: Vec<Vec<f64>>,
    pub factors: RoweisFactors,
    pub kernel: LabelKernelKind,
    /// Ridge added to `R₂`, if any.
    pub regularization: Option<f64>,
    pub preprocessing: String,
}

/// Fits the subspace spanned by the top eigenvectors of `(R₁, R₂)`.
pub fn fit(data: &LabeledMatrix, cfg: &RdaConfig) -> Result<RdaModel> {
    cfg.factors.validate()?;
    let d = data.dim();
    let p = cfg.resolve_dims(data.n_classes(), d)?;
    let RoweisFactors { r1, r2 } = cfg.factors;

    let r1_mat = roweis_r1_from_labels(data, cfg.kernel, r1)?;
    let s_w = within_scatter(data);
    let combo_trace = r2 * s_w.trace() + (1.0 - r2) * d as f64;
    let eps = match cfg.eps {
        Some(e) => e,
        None if combo_trace > 0.0 => 1e-8 * combo_trace / d as f64,
        None => 1e-8,
    };
    let (r2_mat, ridged) = roweis_r2_checked(&s_w, r2, eps)?;
    let sol = geigen::solve_generalized_eig(&r1_mat, &r2_mat, p).map_err(|e| match e {
        Error::IndefiniteConstraint { .. } => Error::Fit(Box::new(e)),
        other => other,
    })?;

    let projection = sol.eigenvectors;
    let projected = projection.t().dot(&data.x());
    let c = data.n_classes();
    let mut class_means = vec![vec![0.0; p]; c];
    for (k, &j) in data.labels().iter().enumerate() {
        for (m, v) in class_means[j].iter_mut().zip(projected.column(k)) {
            *m += v;
        }
    }
    for (j, mean) in class_means.iter_mut().enumerate() {
        let nj = data.class_counts()[j] as f64;
        mean.iter_mut().for_each(|v| *v /= nj);
    }
    let input_means = data.class_means();

    Ok(RdaModel {
        projection,
        eigenvalues: sol.eigenvalues.to_vec(),
        pose_alphabet: data.alphabet().to_vec(),
        class_means,
        train_mean: data.mean().to_vec(),
        input_class_means: input_means.columns().into_iter().map(|c| c.to_vec()).collect(),
        factors: cfg.factors,
        kernel: cfg.kernel,
        regularization: ridged.then_some(eps),
        preprocessing: String::new(),
    })
}

impl RdaModel {
    pub fn input_dim(&self) -> usize {
        self.projection.nrows()
    }

    pub fn dims(&self) -> usize {
        self.projection.ncols()
    }

    /// `Uᵀ x`.
    pub fn project(&self, x: &[f64]) -> Result<Vec<f64>> {
        if x.len() != self.input_dim() {
            return Err(Error::DimensionMismatch {
                expected: self.input_dim(),
                found: x.len(),
            });
        }
        Ok(self
            .projection
            .columns()
            .into_iter()
            .map(|u| u.iter().zip(x).map(|(a, b)| a * b).sum())
            .collect())
    }

    pub fn to_document(&self) -> RdaModelDocument {
        RdaModelDocument {
            schema_version: SCHEMA_VERSION,
            document: RDA_DOCUMENT.into(),
            input_dim: self.input_dim(),
            dims: self.dims(),
            projection: MatrixDocument {
                rows: self.projection.nrows(),
                cols: self.projection.ncols(),
                data: self.projection.iter().copied().collect(),
            },
            eigenvalues: self.eigenvalues.clone(),
            pose_alphabet: self.pose_alphabet.clone(),
            class_means: self.class_means.clone(),
            train_mean: self.train_mean.clone(),
            input_class_means: self.input_class_means.clone(),
            factors: self.factors,
            kernel: self.kernel,
            regularization: self.regularization,
            preprocessing: self.preprocessing.clone(),
        }
    }

    pub fn from_document(doc: RdaModelDocument) -> Result<Self> {
        if doc.schema_version != SCHEMA_VERSION || doc.document != RDA_DOCUMENT {
            return Err(Error::Data(format!(
                "unsupported model document {:?} v{}",
                doc.document, doc.schema_version
            )));
        }
        let m = &doc.projection;
        if m.rows != doc.input_dim || m.cols != doc.dims || m.data.len() != m.rows * m.cols {
            return Err(Error::Data("projection shape does not match declared dims".into()));
        }
        let c = doc.pose_alphabet.len();
        let shapes_ok = doc.class_means.len() == c
            && doc.class_means.iter().all(|v| v.len() == doc.dims)
            && doc.input_class_means.len() == c
            && doc.input_class_means.iter().all(|v| v.len() == doc.input_dim)
            && doc.train_mean.len() == doc.input_dim
            && doc.eigenvalues.len() == doc.dims;
        if c == 0 || doc.dims == 0 || !shapes_ok {
            return Err(Error::Data("model document has inconsistent shapes".into()));
        }
        doc.factors.validate()?;
        let projection =
            Array2::from_shape_vec((m.rows, m.cols), doc.projection.data).map_err(|e| Error::Data(e.to_string()))?;
        Ok(Self {
            projection,
            eigenvalues: doc.eigenvalues,
            pose_alphabet: doc.pose_alphabet,
            class_means: doc.class_means,
            train_mean: doc.train_mean,
            input_class_means: doc.input_class_means,
            factors: doc.factors,
            kernel: doc.kernel,
            regularization: doc.regularization,
            preprocessing: doc.preprocessing,
        })
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(&self.to_document())?)
    }

    pub fn from_json(s: &str) -> Result<Self> {
        Self::from_document(serde_json::from_str(s)?)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_json()?).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let s = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json(&s)
    }
}

const RDA_DOCUMENT: &str = "rda_model";

/// Dense matrix stored row-major with explicit shape.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MatrixDocument {
    pub rows: usize,
    pub cols: usize,
    pub data: Vec<f64>,
}

/// On-disk form of [`RdaModel`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RdaModelDocument {
    pub schema_version: u32,
    pub document: String,
    pub input_dim: usize,
    pub dims: usize,
    pub projection: MatrixDocument,
    pub eigenvalues: Vec<f64>,
    pub pose_alphabet: Vec<String>,
    pub class_means: Vec<Vec<f64>>,
    pub train_mean: Vec<f64>,
    pub input_class_means: Vec<Vec<f64>>,
    pub factors: RoweisFactors,
    pub kernel: LabelKernelKind,
    pub regularization: Option<f64>,
    pub preprocessing: String,
}
