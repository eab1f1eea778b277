//! Discrete-observation hidden Markov models over the pose alphabet.
//!
//! Training uses multi-sequence Baum-Welch with a scaled forward-backward
//! pass; scoring uses the scaled forward recursion or log-space Viterbi.

use std::collections::BTreeMap;
use std::fmt;
use std::path::Path;
use std::str::FromStr;

use ndarray::Array2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::exec::{self, Execution};
use crate::pose::WindowingConfig;
use crate::rda::MatrixDocument;
use crate::SCHEMA_VERSION;

const STOCHASTIC_TOL: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq)]
pub struct DiscreteHmm {
    pub initial: Vec<f64>,
    /// n_states × n_states, row-stochastic.
    pub transition: Array2<f64>,
    /// n_states × |alphabet|, row-stochastic.
    pub emission: Array2<f64>,
    pub alphabet: Vec<String>,
}

fn check_row(name: &str, row: impl IntoIterator<Item = f64>) -> Result<()> {
    let mut sum = 0.0;
    for v in row {
        if !(v >= 0.0) || !v.is_finite() {
            return Err(Error::Data(format!("{name} has an invalid probability {v}")));
        }
        sum += v;
    }
    if (sum - 1.0).abs() > STOCHASTIC_TOL {
        return Err(Error::Data(format!("{name} sums to {sum}, not 1")));
    }
    Ok(())
}

impl DiscreteHmm {
    pub fn new(
        initial: Vec<f64>,
        transition: Array2<f64>,
        emission: Array2<f64>,
        alphabet: Vec<String>,
    ) -> Result<Self> {
        let hmm = Self {
            initial,
            transition,
            emission,
            alphabet,
        };
        hmm.validate()?;
        Ok(hmm)
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.n_states();
        if n == 0 || self.alphabet.is_empty() {
            return Err(Error::Data("HMM needs at least one state and one symbol".into()));
        }
        if self.transition.dim() != (n, n) || self.emission.dim() != (n, self.alphabet.len()) {
            return Err(Error::Data(format!(
                "HMM shapes disagree: {} states, transition {:?}, emission {:?}, {} symbols",
                n,
                self.transition.dim(),
                self.emission.dim(),
                self.alphabet.len()
            )));
        }
        check_row("initial", self.initial.iter().copied())?;
        for (i, row) in self.transition.rows().into_iter().enumerate() {
            check_row(&format!("transition row {i}"), row.iter().copied())?;
        }
        for (i, row) in self.emission.rows().into_iter().enumerate() {
            check_row(&format!("emission row {i}"), row.iter().copied())?;
        }
        Ok(())
    }

    pub fn n_states(&self) -> usize {
        self.initial.len()
    }

    pub fn n_symbols(&self) -> usize {
        self.alphabet.len()
    }

    fn check_sequence(&self, seq: &[usize]) -> Result<()> {
        if seq.is_empty() {
            return Err(Error::Data("empty observation sequence".into()));
        }
        if let Some(bad) = seq.iter().find(|&&o| o >= self.n_symbols()) {
            return Err(Error::Data(format!(
                "symbol {bad} is outside the {}-symbol alphabet",
                self.n_symbols()
            )));
        }
        Ok(())
    }

    /// Maps labels to symbol indices.
    pub fn encode<S: AsRef<str>>(&self, labels: &[S]) -> Result<Vec<usize>> {
        encode(&self.alphabet, labels)
    }
}

pub fn encode<S: AsRef<str>>(alphabet: &[String], labels: &[S]) -> Result<Vec<usize>> {
    labels
        .iter()
        .map(|l| {
            alphabet
                .iter()
                .position(|a| a == l.as_ref())
                .ok_or_else(|| Error::Data(format!("symbol {:?} is not in the alphabet", l.as_ref())))
        })
        .collect()
}

/// Scaled forward pass: normalised alphas (T × N) and the per-step scales.
/// Returns `None` as soon as a step has probability zero.
fn forward_scaled(hmm: &DiscreteHmm, seq: &[usize]) -> Option<(Array2<f64>, Vec<f64>)> {
    let n = hmm.n_states();
    let t_len = seq.len();
    let mut alpha = Array2::zeros((t_len, n));
    let mut scales = Vec::with_capacity(t_len);
    for (t, &o) in seq.iter().enumerate() {
        for j in 0..n {
            let prior = if t == 0 {
                hmm.initial[j]
            } else {
                (0..n).map(|i| alpha[[t - 1, i]] * hmm.transition[[i, j]]).sum()
            };
            alpha[[t, j]] = prior * hmm.emission[[j, o]];
        }
        let c: f64 = alpha.row(t).sum();
        if !(c > 0.0) {
            return None;
        }
        alpha.row_mut(t).mapv_inplace(|v| v / c);
        scales.push(c);
    }
    Some((alpha, scales))
}

/// Backward pass scaled by the forward scales.
fn backward_scaled(hmm: &DiscreteHmm, seq: &[usize], scales: &[f64]) -> Array2<f64> {
    let n = hmm.n_states();
    let t_len = seq.len();
    let mut beta = Array2::zeros((t_len, n));
    beta.row_mut(t_len - 1).fill(1.0);
    for t in (0..t_len - 1).rev() {
        let o = seq[t + 1];
        for i in 0..n {
            let s: f64 = (0..n)
                .map(|j| hmm.transition[[i, j]] * hmm.emission[[j, o]] * beta[[t + 1, j]])
                .sum();
            beta[[t, i]] = s / scales[t + 1];
        }
    }
    beta
}

/// `log P(seq | hmm)`; `-∞` when the sequence is impossible.
pub fn forward_loglik(hmm: &DiscreteHmm, seq: &[usize]) -> Result<f64> {
    hmm.check_sequence(seq)?;
    Ok(match forward_scaled(hmm, seq) {
        Some((_, scales)) => scales.iter().map(|c| c.ln()).sum(),
        None => f64::NEG_INFINITY,
    })
}

/// Most probable state path and its log probability. Ties go to the lower
/// state index.
pub fn viterbi(hmm: &DiscreteHmm, seq: &[usize]) -> Result<(Vec<usize>, f64)> {
    hmm.check_sequence(seq)?;
    let n = hmm.n_states();
    let t_len = seq.len();
    let log_a = hmm.transition.mapv(f64::ln);
    let log_b = hmm.emission.mapv(f64::ln);
    let mut delta: Vec<f64> = (0..n).map(|j| hmm.initial[j].ln() + log_b[[j, seq[0]]]).collect();
    let mut back = vec![vec![0usize; n]; t_len];
    for t in 1..t_len {
        let mut next = vec![0.0; n];
        for j in 0..n {
            let mut best = delta[0] + log_a[[0, j]];
            let mut arg = 0;
            for i in 1..n {
                let v = delta[i] + log_a[[i, j]];
                if v > best {
                    best = v;
                    arg = i;
                }
            }
            back[t][j] = arg;
            next[j] = best + log_b[[j, seq[t]]];
        }
        delta = next;
    }
    let mut last = 0;
    for j in 1..n {
        if delta[j] > delta[last] {
            last = j;
        }
    }
    let score = delta[last];
    let mut path = vec![0; t_len];
    path[t_len - 1] = last;
    for t in (1..t_len).rev() {
        path[t - 1] = back[t][path[t]];
    }
    Ok((path, score))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BaumWelchConfig {
    /// Stop once the total log-likelihood improves by less than this.
    pub tol: f64,
    pub max_iter: usize,
    pub seed: u64,
    /// Added to every probability of the final model before renormalising.
    pub smoothing: f64,
}

impl Default for BaumWelchConfig {
    fn default() -> Self {
        Self {
            tol: 1e-6,
            max_iter: 200,
            seed: 0,
            smoothing: 1e-6,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainReport {
    /// Total log-likelihood of every EM iterate, starting with the initial model.
    pub log_likelihood_trace: Vec<f64>,
    pub iterations: usize,
    pub converged: bool,
}

fn perturbed_row(rng: &mut ChaCha8Rng, len: usize) -> Vec<f64> {
    let mut row: Vec<f64> = (0..len).map(|_| 1.0 + rng.random_range(-0.1..=0.1)).collect();
    let s: f64 = row.iter().sum();
    row.iter_mut().for_each(|v| *v /= s);
    row
}

fn initial_model(n_states: usize, alphabet: &[String], seed: u64) -> DiscreteHmm {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let k = alphabet.len();
    let mut transition = Array2::zeros((n_states, n_states));
    for i in 0..n_states {
        for (j, v) in perturbed_row(&mut rng, n_states).into_iter().enumerate() {
            transition[[i, j]] = v;
        }
    }
    let mut emission = Array2::zeros((n_states, k));
    for i in 0..n_states {
        for (j, v) in perturbed_row(&mut rng, k).into_iter().enumerate() {
            emission[[i, j]] = v;
        }
    }
    DiscreteHmm {
        initial: vec![1.0 / n_states as f64; n_states],
        transition,
        emission,
        alphabet: alphabet.to_vec(),
    }
}

struct Counts {
    initial: Vec<f64>,
    transition: Array2<f64>,
    emission: Array2<f64>,
    loglik: f64,
}

fn expected_counts(hmm: &DiscreteHmm, seqs: &[Vec<usize>]) -> Counts {
    let n = hmm.n_states();
    let mut c = Counts {
        initial: vec![0.0; n],
        transition: Array2::zeros((n, n)),
        emission: Array2::zeros((n, hmm.n_symbols())),
        loglik: 0.0,
    };
    for seq in seqs {
        let Some((alpha, scales)) = forward_scaled(hmm, seq) else {
            c.loglik = f64::NEG_INFINITY;
            continue;
        };
        c.loglik += scales.iter().map(|s| s.ln()).sum::<f64>();
        let beta = backward_scaled(hmm, seq, &scales);
        for (t, &o) in seq.iter().enumerate() {
            for i in 0..n {
                let gamma = alpha[[t, i]] * beta[[t, i]];
                if t == 0 {
                    c.initial[i] += gamma;
                }
                c.emission[[i, o]] += gamma;
            }
            if t + 1 < seq.len() {
                let next = seq[t + 1];
                for i in 0..n {
                    for j in 0..n {
                        c.transition[[i, j]] +=
                            alpha[[t, i]] * hmm.transition[[i, j]] * hmm.emission[[j, next]] * beta[[t + 1, j]]
                                / scales[t + 1];
                    }
                }
            }
        }
    }
    c
}

/// Normalises each row of `counts`, keeping `fallback`'s row where a count
/// row is empty.
fn normalize_rows(counts: &Array2<f64>, fallback: &Array2<f64>) -> Array2<f64> {
    let mut out = counts.clone();
    for (i, mut row) in out.rows_mut().into_iter().enumerate() {
        let s: f64 = row.sum();
        if s > 0.0 {
            row.mapv_inplace(|v| v / s);
        } else {
            row.assign(&fallback.row(i));
        }
    }
    out
}

fn maximize(hmm: &DiscreteHmm, c: &Counts) -> DiscreteHmm {
    let s: f64 = c.initial.iter().sum();
    let initial = if s > 0.0 {
        c.initial.iter().map(|v| v / s).collect()
    } else {
        hmm.initial.clone()
    };
    DiscreteHmm {
        initial,
        transition: normalize_rows(&c.transition, &hmm.transition),
        emission: normalize_rows(&c.emission, &hmm.emission),
        alphabet: hmm.alphabet.clone(),
    }
}

fn smooth(hmm: &mut DiscreteHmm, eps: f64) {
    if eps <= 0.0 {
        return;
    }
    let add = |row: &mut [f64]| {
        let s: f64 = row.iter().map(|v| v + eps).sum();
        row.iter_mut().for_each(|v| *v = (*v + eps) / s);
    };
    add(&mut hmm.initial);
    for mut row in hmm.transition.rows_mut() {
        add(row.as_slice_mut().expect("standard layout"));
    }
    for mut row in hmm.emission.rows_mut() {
        add(row.as_slice_mut().expect("standard layout"));
    }
}

/// Multi-sequence Baum-Welch.
///
/// Runs plain EM from a seeded near-uniform start until the total
/// log-likelihood gain drops below `tol` or `max_iter` updates have been
/// made, then applies the configured smoothing to the final iterate.
pub fn baum_welch(
    sequences: &[Vec<usize>],
    n_states: usize,
    alphabet: &[String],
    cfg: &BaumWelchConfig,
) -> Result<(DiscreteHmm, TrainReport)> {
    if n_states == 0 {
        return Err(Error::Config("an HMM needs at least one state".into()));
    }
    if !(cfg.tol > 0.0) {
        return Err(Error::Config(format!("tolerance must be positive, got {}", cfg.tol)));
    }
    if !(cfg.smoothing >= 0.0) {
        return Err(Error::Config(format!("smoothing must be >= 0, got {}", cfg.smoothing)));
    }
    if alphabet.is_empty() {
        return Err(Error::Config("empty symbol alphabet".into()));
    }
    if sequences.is_empty() || sequences.iter().any(Vec::is_empty) {
        return Err(Error::Data("Baum-Welch needs non-empty training sequences".into()));
    }
    if let Some(bad) = sequences.iter().flatten().find(|&&o| o >= alphabet.len()) {
        return Err(Error::Data(format!(
            "symbol {bad} is outside the {}-symbol alphabet",
            alphabet.len()
        )));
    }

    let mut model = initial_model(n_states, alphabet, cfg.seed);
    let mut trace = Vec::new();
    let mut converged = false;
    let mut updates = 0;
    loop {
        let counts = expected_counts(&model, sequences);
        if let Some(&prev) = trace.last() {
            if counts.loglik - prev < cfg.tol {
                trace.push(counts.loglik);
                converged = true;
                break;
            }
        }
        trace.push(counts.loglik);
        if updates == cfg.max_iter {
            break;
        }
        model = maximize(&model, &counts);
        updates += 1;
    }
    smooth(&mut model, cfg.smoothing);
    Ok((
        model,
        TrainReport {
            log_likelihood_trace: trace,
            iterations: updates,
            converged,
        },
    ))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Criterion {
    #[default]
    Viterbi,
    Forward,
}

impl fmt::Display for Criterion {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Criterion::Viterbi => "viterbi",
            Criterion::Forward => "forward",
        })
    }
}

impl FromStr for Criterion {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "viterbi" => Ok(Criterion::Viterbi),
            "forward" => Ok(Criterion::Forward),
            _ => Err(Error::Config(format!("unknown criterion {s:?}"))),
        }
    }
}

/// One HMM per action over a shared alphabet.
#[derive(Debug, Clone, PartialEq)]
pub struct ActionModelBank {
    pub models: BTreeMap<String, DiscreteHmm>,
    pub alphabet: Vec<String>,
    /// Windowing applied to recognised poses before scoring.
    pub windowing: Option<WindowingConfig>,
}

impl ActionModelBank {
    pub fn new(models: BTreeMap<String, DiscreteHmm>, alphabet: Vec<String>) -> Result<Self> {
        if models.is_empty() {
            return Err(Error::Data("model bank is empty".into()));
        }
        if let Some((action, _)) = models.iter().find(|(_, m)| m.alphabet != alphabet) {
            return Err(Error::Data(format!("model for {action:?} uses a different alphabet")));
        }
        Ok(Self {
            models,
            alphabet,
            windowing: None,
        })
    }

    /// Trains one model per action. Each action gets its own seed derived
    /// from `cfg.seed` and its position in label order.
    pub fn train(
        per_action: &BTreeMap<String, Vec<Vec<usize>>>,
        n_states: usize,
        alphabet: &[String],
        cfg: &BaumWelchConfig,
        mode: Execution,
    ) -> Result<(Self, BTreeMap<String, TrainReport>)> {
        let jobs: Vec<_> = per_action.iter().enumerate().collect();
        let trained = exec::map(mode, &jobs, |(k, (action, seqs))| {
            let cfg = BaumWelchConfig {
                seed: cfg.seed.wrapping_add((*k as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15)),
                ..cfg.clone()
            };
            baum_welch(seqs, n_states, alphabet, &cfg)
                .map(|(m, r)| ((*action).clone(), m, r))
                .map_err(|e| Error::Data(format!("training action {action:?}: {e}")))
        });
        let mut models = BTreeMap::new();
        let mut reports = BTreeMap::new();
        for t in trained {
            let (action, m, r) = t?;
            models.insert(action.clone(), m);
            reports.insert(action, r);
        }
        Ok((Self::new(models, alphabet.to_vec())?, reports))
    }

    pub fn to_json(&self) -> Result<String> {
        let doc = BankDocument {
            schema_version: SCHEMA_VERSION,
            document: BANK_DOCUMENT.into(),
            alphabet: self.alphabet.clone(),
            models: self
                .models
                .iter()
                .map(|(action, m)| HmmDocument {
                    action: action.clone(),
                    n_states: m.n_states(),
                    initial: m.initial.clone(),
                    transition: matrix_doc(&m.transition),
                    emission: matrix_doc(&m.emission),
                })
                .collect(),
            windowing: self.windowing.clone(),
        };
        Ok(serde_json::to_string_pretty(&doc)?)
    }

    pub fn from_json(s: &str) -> Result<Self> {
        let doc: BankDocument = serde_json::from_str(s)?;
        if doc.schema_version != SCHEMA_VERSION || doc.document != BANK_DOCUMENT {
            return Err(Error::Data(format!(
                "unsupported bank document {:?} v{}",
                doc.document, doc.schema_version
            )));
        }
        let mut models = BTreeMap::new();
        for m in doc.models {
            let hmm = DiscreteHmm::new(
                m.initial,
                matrix_from_doc(m.transition)?,
                matrix_from_doc(m.emission)?,
                doc.alphabet.clone(),
            )?;
            if hmm.n_states() != m.n_states {
                return Err(Error::Data(format!("model {:?}: state count mismatch", m.action)));
            }
            models.insert(m.action, hmm);
        }
        let mut bank = Self::new(models, doc.alphabet)?;
        bank.windowing = doc.windowing;
        Ok(bank)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_json()?).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let s = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json(&s)
    }
}

const BANK_DOCUMENT: &str = "hmm_bank";

#[derive(Debug, Serialize, Deserialize)]
struct BankDocument {
    schema_version: u32,
    document: String,
    alphabet: Vec<String>,
    models: Vec<HmmDocument>,
    windowing: Option<WindowingConfig>,
}

#[derive(Debug, Serialize, Deserialize)]
struct HmmDocument {
    action: String,
    n_states: usize,
    initial: Vec<f64>,
    transition: MatrixDocument,
    emission: MatrixDocument,
}

fn matrix_doc(m: &Array2<f64>) -> MatrixDocument {
    MatrixDocument {
        rows: m.nrows(),
        cols: m.ncols(),
        data: m.iter().copied().collect(),
    }
}

fn matrix_from_doc(m: MatrixDocument) -> Result<Array2<f64>> {
    Array2::from_shape_vec((m.rows, m.cols), m.data).map_err(|e| Error::Data(e.to_string()))
}

/// Result of classifying one sequence.
#[derive(Debug, Clone, PartialEq)]
pub enum ActionOutcome {
    Decided {
        action: String,
        /// Log score of every action, in label order.
        scores: Vec<(String, f64)>,
    },
    /// Nothing left to score (e.g. windowing removed every frame).
    Rejected,
}

impl ActionOutcome {
    pub fn action(&self) -> Option<&str> {
        match self {
            ActionOutcome::Decided { action, .. } => Some(action),
            ActionOutcome::Rejected => None,
        }
    }
}

/// Picks the action whose model scores `seq` highest. Ties go to the
/// lexicographically first action label.
pub fn classify_action(bank: &ActionModelBank, seq: &[usize], criterion: Criterion) -> Result<ActionOutcome> {
    if seq.is_empty() {
        return Ok(ActionOutcome::Rejected);
    }
    let mut scores = Vec::with_capacity(bank.models.len());
    for (action, hmm) in &bank.models {
        let s = match criterion {
            Criterion::Viterbi => viterbi(hmm, seq)?.1,
            Criterion::Forward => forward_loglik(hmm, seq)?,
        };
        scores.push((action.clone(), s));
    }
    let action = argmax_label(&scores).to_owned();
    Ok(ActionOutcome::Decided { action, scores })
}

/// First label with the strictly greatest score.
pub fn argmax_label(scores: &[(String, f64)]) -> &str {
    let mut best = 0;
    for (k, (_, s)) in scores.iter().enumerate().skip(1) {
        if *s > scores[best].1 {
            best = k;
        }
    }
    &scores[best].0
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;
    use proptest::prelude::*;
    use rand::Rng;

    fn alphabet(k: usize) -> Vec<String> {
        (0..k).map(|i| format!("s{i}")).collect()
    }

    fn random_hmm(rng: &mut ChaCha8Rng, n: usize, k: usize) -> DiscreteHmm {
        let mut row = |len: usize| -> Vec<f64> {
            let mut r: Vec<f64> = (0..len).map(|_| rng.random_range(0.05..1.0)).collect();
            let s: f64 = r.iter().sum();
            r.iter_mut().for_each(|v| *v /= s);
            r
        };
        let initial = row(n);
        let transition = Array2::from_shape_vec((n, n), (0..n).flat_map(|_| row(n)).collect()).unwrap();
        let emission = Array2::from_shape_vec((n, k), (0..n).flat_map(|_| row(k)).collect()).unwrap();
        DiscreteHmm::new(initial, transition, emission, alphabet(k)).unwrap()
    }

    /// Exhaustive search over all N^T state paths, lexicographic order, first max wins.
    fn brute_force_viterbi(hmm: &DiscreteHmm, seq: &[usize]) -> (Vec<usize>, f64) {
        let n = hmm.n_states();
        let t_len = seq.len();
        let mut best = (vec![0; t_len], f64::NEG_INFINITY);
        let mut first = true;
        for code in 0..n.pow(t_len as u32) {
            let mut path = vec![0; t_len];
            let mut c = code;
            for t in (0..t_len).rev() {
                path[t] = c % n;
                c /= n;
            }
            let mut s = hmm.initial[path[0]].ln() + hmm.emission[[path[0], seq[0]]].ln();
            for t in 1..t_len {
                s += hmm.transition[[path[t - 1], path[t]]].ln();
                s += hmm.emission[[path[t], seq[t]]].ln();
            }
            if first || s > best.1 {
                best = (path, s);
                first = false;
            }
        }
        best
    }

    fn path_score(hmm: &DiscreteHmm, seq: &[usize], path: &[usize]) -> f64 {
        let mut s = hmm.initial[path[0]].ln() + hmm.emission[[path[0], seq[0]]].ln();
        for t in 1..seq.len() {
            s += hmm.transition[[path[t - 1], path[t]]].ln();
            s += hmm.emission[[path[t], seq[t]]].ln();
        }
        s
    }

    /// Gap between the best and second-best path scores.
    fn runner_up_gap(hmm: &DiscreteHmm, seq: &[usize]) -> f64 {
        let n = hmm.n_states();
        let mut scores: Vec<f64> = (0..n.pow(seq.len() as u32))
            .map(|code| {
                let mut c = code;
                let mut path = vec![0; seq.len()];
                for t in (0..seq.len()).rev() {
                    path[t] = c % n;
                    c /= n;
                }
                path_score(hmm, seq, &path)
            })
            .collect();
        if scores.len() < 2 {
            return f64::INFINITY;
        }
        scores.sort_by(|a, b| b.total_cmp(a));
        scores[0] - scores[1]
    }

    /// Exhaustive sum over all paths.
    fn brute_force_likelihood(hmm: &DiscreteHmm, seq: &[usize]) -> f64 {
        let n = hmm.n_states();
        let t_len = seq.len();
        let mut total = 0.0;
        for code in 0..n.pow(t_len as u32) {
            let mut path = vec![0; t_len];
            let mut c = code;
            for t in (0..t_len).rev() {
                path[t] = c % n;
                c /= n;
            }
            let mut p = hmm.initial[path[0]] * hmm.emission[[path[0], seq[0]]];
            for t in 1..t_len {
                p *= hmm.transition[[path[t - 1], path[t]]] * hmm.emission[[path[t], seq[t]]];
            }
            total += p;
        }
        total.ln()
    }

    fn chain() -> DiscreteHmm {
        DiscreteHmm::new(
            vec![1.0, 0.0],
            array![[0.0, 1.0], [0.0, 1.0]],
            array![[0.9, 0.1], [0.2, 0.8]],
            alphabet(2),
        )
        .unwrap()
    }

    #[test]
    fn validation_rejects_bad_rows() {
        assert!(DiscreteHmm::new(vec![0.5, 0.6], Array2::eye(2), Array2::eye(2), alphabet(2)).is_err());
        assert!(DiscreteHmm::new(vec![1.0], array![[1.0]], array![[0.5, 0.5]], alphabet(3)).is_err());
        assert!(DiscreteHmm::new(vec![1.0], array![[1.0]], array![[1.5, -0.5]], alphabet(2)).is_err());
    }

    #[test]
    fn forward_examples() {
        let h = chain();
        let ll = forward_loglik(&h, &[1]).unwrap();
        assert!((ll - (1.0f64 * 0.1).ln()).abs() < 1e-15);
        // Only path 0 → 1 → 1 has mass.
        let ll = forward_loglik(&h, &[0, 1, 1]).unwrap();
        let expected = 0.9f64.ln() + 1.0f64.ln() + 0.8f64.ln() + 1.0f64.ln() + 0.8f64.ln();
        assert!((ll - expected).abs() < 1e-12);

        let zero = DiscreteHmm::new(vec![1.0], array![[1.0]], array![[1.0, 0.0]], alphabet(2)).unwrap();
        assert_eq!(forward_loglik(&zero, &[1]).unwrap(), f64::NEG_INFINITY);
        assert!(forward_loglik(&zero, &[2]).is_err());
        assert!(forward_loglik(&zero, &[]).is_err());
    }

    #[test]
    fn single_state_viterbi_equals_forward() {
        let h = DiscreteHmm::new(vec![1.0], array![[1.0]], array![[0.3, 0.7]], alphabet(2)).unwrap();
        let seq = [0, 1, 1, 0, 1];
        let (path, lp) = viterbi(&h, &seq).unwrap();
        assert_eq!(path, vec![0; 5]);
        assert!((lp - forward_loglik(&h, &seq).unwrap()).abs() < 1e-12);
    }

    #[test]
    fn viterbi_toy_matches_enumeration() {
        let h = DiscreteHmm::new(
            vec![0.6, 0.4],
            array![[0.7, 0.3], [0.4, 0.6]],
            array![[0.5, 0.4, 0.1], [0.1, 0.3, 0.6]],
            alphabet(3),
        )
        .unwrap();
        let seq = [0, 1, 2];
        let (path, lp) = viterbi(&h, &seq).unwrap();
        let (bp, blp) = brute_force_viterbi(&h, &seq);
        assert_eq!(path, bp);
        assert!((lp - blp).abs() <= 1e-10);
    }

    #[test]
    fn viterbi_ties_prefer_lower_state() {
        let h = DiscreteHmm::new(
            vec![0.5, 0.5],
            array![[0.5, 0.5], [0.5, 0.5]],
            array![[1.0], [1.0]],
            alphabet(1),
        )
        .unwrap();
        assert_eq!(viterbi(&h, &[0, 0, 0]).unwrap().0, vec![0, 0, 0]);
    }

    #[test]
    fn single_state_training_recovers_frequencies() {
        let seqs = vec![vec![0, 1, 1, 2], vec![1, 1]];
        let cfg = BaumWelchConfig::default();
        let (h, report) = baum_welch(&seqs, 1, &alphabet(3), &cfg).unwrap();
        assert_eq!(h.transition, array![[1.0]]);
        assert_eq!(h.initial, vec![1.0]);
        let freq = [1.0 / 6.0, 4.0 / 6.0, 1.0 / 6.0];
        for (k, f) in freq.iter().enumerate() {
            assert!((h.emission[[0, k]] - f).abs() < 1e-5);
        }
        assert!(report.converged);
    }

    #[test]
    fn constant_sequence_emits_that_symbol() {
        let seqs = vec![vec![2; 12]];
        let (h, _) = baum_welch(&seqs, 3, &alphabet(4), &BaumWelchConfig::default()).unwrap();
        for s in 0..3 {
            assert!(
                h.emission[[s, 2]] >= 1.0 - 4.0 * 1e-6,
                "state {s}: {}",
                h.emission[[s, 2]]
            );
        }
        h.validate().unwrap();
    }

    #[test]
    fn training_errors() {
        let cfg = BaumWelchConfig::default();
        assert!(matches!(
            baum_welch(&[vec![0]], 0, &alphabet(2), &cfg),
            Err(Error::Config(_))
        ));
        assert!(matches!(
            baum_welch(&[vec![0, 5]], 2, &alphabet(2), &cfg),
            Err(Error::Data(_))
        ));
        assert!(baum_welch(&[], 2, &alphabet(2), &cfg).is_err());
        let bad_tol = BaumWelchConfig { tol: 0.0, ..cfg };
        assert!(baum_welch(&[vec![0]], 2, &alphabet(2), &bad_tol).is_err());
    }

    #[test]
    fn training_is_seed_deterministic() {
        let seqs = vec![vec![0, 1, 2, 1, 0], vec![2, 2, 1]];
        let cfg = BaumWelchConfig {
            seed: 42,
            ..Default::default()
        };
        let a = baum_welch(&seqs, 3, &alphabet(3), &cfg).unwrap();
        let b = baum_welch(&seqs, 3, &alphabet(3), &cfg).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn classify_examples() {
        let only = chain();
        let bank = ActionModelBank::new(BTreeMap::from([("walk".to_string(), only.clone())]), alphabet(2)).unwrap();
        let out = classify_action(&bank, &[0, 1], Criterion::Viterbi).unwrap();
        assert_eq!(out.action(), Some("walk"));
        assert_eq!(
            classify_action(&bank, &[], Criterion::Viterbi).unwrap(),
            ActionOutcome::Rejected
        );

        let certain = DiscreteHmm::new(vec![1.0], array![[1.0]], array![[1.0, 0.0]], alphabet(2)).unwrap();
        let never = DiscreteHmm::new(vec![1.0], array![[1.0]], array![[0.0, 1.0]], alphabet(2)).unwrap();
        let bank = ActionModelBank::new(
            BTreeMap::from([("b".to_string(), never), ("a".to_string(), certain)]),
            alphabet(2),
        )
        .unwrap();
        for criterion in [Criterion::Viterbi, Criterion::Forward] {
            let out = classify_action(&bank, &[0, 0, 0], criterion).unwrap();
            assert_eq!(out.action(), Some("a"));
        }
    }

    #[test]
    fn classify_toy_bank_matches_enumeration() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let a = random_hmm(&mut rng, 2, 3);
        let b = random_hmm(&mut rng, 2, 3);
        let seq = [0, 2, 1, 1];
        let bank = ActionModelBank::new(
            BTreeMap::from([("a".to_string(), a.clone()), ("b".to_string(), b.clone())]),
            alphabet(3),
        )
        .unwrap();
        let out = classify_action(&bank, &seq, Criterion::Viterbi).unwrap();
        let sa = brute_force_viterbi(&a, &seq).1;
        let sb = brute_force_viterbi(&b, &seq).1;
        assert_eq!(out.action(), Some(if sb > sa { "b" } else { "a" }));
    }

    #[test]
    fn argmax_tie_and_shift_invariance() {
        let scores = vec![
            ("a".to_string(), -3.0),
            ("b".to_string(), -3.0),
            ("c".to_string(), -5.0),
        ];
        assert_eq!(argmax_label(&scores), "a");
        let shifted: Vec<_> = scores.iter().map(|(l, s)| (l.clone(), s + 17.25)).collect();
        assert_eq!(argmax_label(&shifted), argmax_label(&scores));
    }

    #[test]
    fn bank_json_roundtrip_is_exact() {
        let seqs = BTreeMap::from([
            ("x".to_string(), vec![vec![0, 1, 2, 2], vec![0, 1, 1]]),
            ("y".to_string(), vec![vec![2, 1, 0]]),
        ]);
        let (bank, _) = ActionModelBank::train(
            &seqs,
            2,
            &alphabet(3),
            &BaumWelchConfig::default(),
            Execution::Sequential,
        )
        .unwrap();
        let back = ActionModelBank::from_json(&bank.to_json().unwrap()).unwrap();
        assert_eq!(back, bank);
        let (par, _) =
            ActionModelBank::train(&seqs, 2, &alphabet(3), &BaumWelchConfig::default(), Execution::Parallel).unwrap();
        assert_eq!(par, bank);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(200))]

        #[test]
        fn viterbi_equals_enumeration(seed in any::<u64>(), n in 1usize..5, k in 1usize..4, t in 1usize..9) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let h = random_hmm(&mut rng, n, k);
            let seq: Vec<usize> = (0..t).map(|_| rng.random_range(0..k)).collect();
            let (path, lp) = viterbi(&h, &seq).unwrap();
            let (bp, blp) = brute_force_viterbi(&h, &seq);
            prop_assert!((lp - blp).abs() <= 1e-10);
            prop_assert!((path_score(&h, &seq, &path) - blp).abs() <= 1e-10);
            if runner_up_gap(&h, &seq) > 1e-9 {
                prop_assert_eq!(path, bp);
            }
            let fw = forward_loglik(&h, &seq).unwrap();
            prop_assert!(fw >= lp - 1e-12);
            prop_assert!((fw - brute_force_likelihood(&h, &seq)).abs() <= 1e-10);
        }

        #[test]
        fn em_is_monotone_and_stochastic(seed in any::<u64>(), n in 1usize..5, k in 2usize..5) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let seqs: Vec<Vec<usize>> = (0..3)
                .map(|_| (0..rng.random_range(1..15)).map(|_| rng.random_range(0..k)).collect())
                .collect();
            let cfg = BaumWelchConfig { seed, max_iter: 50, ..Default::default() };
            let (h, report) = baum_welch(&seqs, n, &alphabet(k), &cfg).unwrap();
            for w in report.log_likelihood_trace.windows(2) {
                prop_assert!(w[1] >= w[0] - 1e-9, "{} -> {}", w[0], w[1]);
            }
            h.validate().unwrap();
        }
    }
}
