//! Viterbi detection over the joint trellis.
//!
//! One engine serves every detector: it minimizes
//! `sum_k sum_j weight_j (r_kj - y_kj)^2` over trellis paths that start in
//! the preamble state. The detectors differ only in the observation space,
//! the branch labels and the weights:
//!
//! | detector | observations            | labels          | weights          |
//! |----------|-------------------------|-----------------|------------------|
//! | ML       | raw head outputs        | `A_n(eps0) w`   | 1                |
//! | WSSJD    | `Lambda^-1 V^T r`       | `V^T w`         | `lambda_j^2`     |
//! | SSJD     | `Lambda^-1 V^T r`       | `V^T w`         | 1                |
//! | SHST     | one head output         | `w`             | 1                |
//!
//! Ties go to the smallest predecessor index. Survivors are kept for the
//! whole sector and the final traceback starts from the best end state.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::channel::{BipolarBlock, ReadbackBlock};
use crate::eigen::{toeplitz_eigen, EigenSystem};
use crate::error::{Error, Result};
use crate::signal::{BipolarSequence, RealSequence, TargetPolynomial};
use crate::trellis::{build_trellis, ml_labels, wssjd_labels, BranchLabels, TrellisSpec};

/// Path metrics and survivor memory for one detection run.
#[derive(Debug, Clone)]
pub struct ViterbiWorkspace {
    states: usize,
    metrics: Vec<f64>,
    next: Vec<f64>,
    branch_metrics: Vec<f64>,
    /// Slot in the state's incoming list, `states` entries per step.
    survivors: Vec<u16>,
    steps: usize,
}

impl ViterbiWorkspace {
    pub fn new(t: &TrellisSpec) -> Self {
        let mut ws = Self {
            states: t.state_count(),
            metrics: vec![0.0; t.state_count()],
            next: vec![0.0; t.state_count()],
            branch_metrics: vec![0.0; t.branch_count()],
            survivors: Vec::new(),
            steps: 0,
        };
        ws.reset(t);
        ws
    }

    /// Starts a new sector in the preamble state.
    pub fn reset(&mut self, t: &TrellisSpec) {
        debug_assert_eq!(self.states, t.state_count());
        self.metrics.fill(f64::INFINITY);
        self.metrics[t.initial_state()] = 0.0;
        self.survivors.clear();
        self.steps = 0;
    }

    pub fn steps(&self) -> usize {
        self.steps
    }

    pub fn metrics(&self) -> &[f64] {
        &self.metrics
    }

    /// Extends every survivor by one observation column.
    pub fn step(&mut self, t: &TrellisSpec, labels: &BranchLabels, weights: &[f64], obs: &[f64]) {
        let dim = weights.len();
        for (bm, y) in self.branch_metrics.iter_mut().zip(labels.as_slice().chunks_exact(dim)) {
            let mut acc = 0.0;
            for j in 0..dim {
                let d = obs[j] - y[j];
                acc += weights[j] * d * d;
            }
            *bm = acc;
        }
        let shift = t.n();
        for s in 0..self.states {
            let mut best = f64::INFINITY;
            let mut slot = 0u16;
            for (k, &b) in t.incoming(s).iter().enumerate() {
                let b = b as usize;
                let m = self.metrics[b >> shift] + self.branch_metrics[b];
                if m < best {
                    best = m;
                    slot = k as u16;
                }
            }
            self.next[s] = best;
            self.survivors.push(slot);
        }
        std::mem::swap(&mut self.metrics, &mut self.next);
        self.steps += 1;
    }

    /// State with the smallest metric; the lowest index wins ties.
    pub fn best_state(&self) -> usize {
        let mut best = 0;
        for (s, &m) in self.metrics.iter().enumerate() {
            if m < self.metrics[best] {
                best = s;
            }
        }
        best
    }

    #[inline]
    fn survivor_branch(&self, t: &TrellisSpec, step: usize, state: usize) -> usize {
        let slot = self.survivors[step * self.states + state] as usize;
        t.incoming(state)[slot] as usize
    }

    /// Branch taken `lag` steps before the latest one on the survivor ending
    /// in `end_state`.
    pub fn traceback(&self, t: &TrellisSpec, end_state: usize, lag: usize) -> usize {
        assert!(lag < self.steps, "traceback lag {lag} beyond {} steps", self.steps);
        let mut s = end_state;
        let mut step = self.steps - 1;
        loop {
            let b = self.survivor_branch(t, step, s);
            if step == self.steps - 1 - lag {
                return b;
            }
            s = t.predecessor(b);
            step -= 1;
        }
    }

    /// Full survivor ending in `end_state`, as input columns.
    pub fn decisions(&self, t: &TrellisSpec, end_state: usize) -> BipolarBlock {
        let n = t.n();
        let mut rows = vec![vec![0i8; self.steps]; n];
        let mut s = end_state;
        for step in (0..self.steps).rev() {
            let b = self.survivor_branch(t, step, s);
            for (i, row) in rows.iter_mut().enumerate() {
                row[step] = t.input_symbol(b, i);
            }
            s = t.predecessor(b);
        }
        BipolarBlock::from_rows_unchecked(rows)
    }
}

fn check_weights(weights: &[f64], n: usize) -> Result<()> {
    if weights.len() != n {
        return Err(Error::DimensionMismatch { expected: n, found: weights.len() });
    }
    if weights.iter().any(|&w| !(w > 0.0 && w.is_finite())) {
        return Err(Error::InvalidArgument("metric weights must be positive and finite".into()));
    }
    Ok(())
}

fn check_block(r: &ReadbackBlock, n: usize) -> Result<()> {
    if r.n() != n {
        return Err(Error::DimensionMismatch { expected: n, found: r.n() });
    }
    if r.is_empty() {
        return Err(Error::InvalidArgument("observation block is empty".into()));
    }
    Ok(())
}

/// Minimum weighted-distance path through `t` for observations `r`.
pub fn viterbi(t: &TrellisSpec, labels: &BranchLabels, weights: &[f64], r: &ReadbackBlock) -> Result<BipolarBlock> {
    check_weights(weights, labels.dim())?;
    check_block(r, labels.dim())?;
    let mut ws = ViterbiWorkspace::new(t);
    let mut col = vec![0.0; r.n()];
    for k in 0..r.len() {
        r.column_into(k, &mut col);
        ws.step(t, labels, weights, &col);
    }
    Ok(ws.decisions(t, ws.best_state()))
}

/// Metric of the path written by `x`, starting from the preamble state.
pub fn path_metric(t: &TrellisSpec, labels: &BranchLabels, weights: &[f64], r: &ReadbackBlock, x: &BipolarBlock) -> f64 {
    let mut s = t.initial_state();
    let mut col = vec![0i8; x.n()];
    let mut total = 0.0;
    for k in 0..x.len() {
        for (i, c) in col.iter_mut().enumerate() {
            *c = x.get(i, k);
        }
        let b = t.branch_for(s, &col);
        for (j, (&y, &w)) in labels.get(b).iter().zip(weights).enumerate() {
            let d = r.get(j, k) - y;
            total += w * d * d;
        }
        s = t.next_state(b);
    }
    total
}

#[derive(Debug, Clone)]
enum Space {
    Raw,
    Eigen { sys: EigenSystem, inv_lambda: Vec<f64> },
}

/// A fixed-parameter detector with its labels and workspace cached, for
/// running many sectors through the same trellis.
#[derive(Debug, Clone)]
pub struct StaticDetector<'t> {
    trellis: &'t TrellisSpec,
    labels: BranchLabels,
    weights: Vec<f64>,
    space: Space,
    ws: ViterbiWorkspace,
    raw: Vec<f64>,
    obs: Vec<f64>,
}

impl<'t> StaticDetector<'t> {
    fn with(trellis: &'t TrellisSpec, labels: BranchLabels, weights: Vec<f64>, space: Space) -> Self {
        let n = trellis.n();
        Self { trellis, labels, weights, space, ws: ViterbiWorkspace::new(trellis), raw: vec![0.0; n], obs: vec![0.0; n] }
    }

    /// ML detection in the raw output space with labels at `eps0`.
    pub fn ml(t: &'t TrellisSpec, eps0: f64) -> Result<Self> {
        Ok(Self::with(t, ml_labels(t, eps0)?, vec![1.0; t.n()], Space::Raw))
    }

    /// Eigen-space detection with weights `lambda_j(eps0)^2`.
    pub fn wssjd(t: &'t TrellisSpec, eps0: f64) -> Result<Self> {
        Self::eigen(t, eps0, true)
    }

    /// Eigen-space detection with unit weights.
    pub fn ssjd(t: &'t TrellisSpec, eps0: f64) -> Result<Self> {
        Self::eigen(t, eps0, false)
    }

    fn eigen(t: &'t TrellisSpec, eps0: f64, weighted: bool) -> Result<Self> {
        crate::error::check_eps(eps0)?;
        let sys = toeplitz_eigen(t.n())?;
        let inv_lambda = sys.inverse_lambda(eps0)?;
        let weights = if weighted { sys.weights(eps0) } else { vec![1.0; t.n()] };
        let labels = wssjd_labels(t, &sys)?;
        Ok(Self::with(t, labels, weights, Space::Eigen { sys, inv_lambda }))
    }

    pub fn trellis(&self) -> &TrellisSpec {
        self.trellis
    }

    pub fn labels(&self) -> &BranchLabels {
        &self.labels
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn detect(&mut self, r: &ReadbackBlock) -> Result<BipolarBlock> {
        let t = self.trellis;
        check_block(r, t.n())?;
        self.ws.reset(t);
        for k in 0..r.len() {
            match &self.space {
                Space::Raw => r.column_into(k, &mut self.obs),
                Space::Eigen { sys, inv_lambda } => {
                    r.column_into(k, &mut self.raw);
                    sys.project(&self.raw, &mut self.obs);
                    for (o, il) in self.obs.iter_mut().zip(inv_lambda) {
                        *o *= il;
                    }
                }
            }
            self.ws.step(t, &self.labels, &self.weights, &self.obs);
        }
        Ok(self.ws.decisions(t, self.ws.best_state()))
    }

    /// Runs a single-track detector independently on every channel of `r`.
    pub fn detect_per_track(&mut self, r: &ReadbackBlock) -> Result<BipolarBlock> {
        if self.trellis.n() != 1 {
            return Err(Error::DimensionMismatch { expected: 1, found: self.trellis.n() });
        }
        let rows = (0..r.n())
            .map(|j| {
                let single = ReadbackBlock::new(vec![r.channel(j).clone()])?;
                Ok(self.detect(&single)?.track(0).symbols().to_vec())
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(BipolarBlock::from_rows_unchecked(rows))
    }
}

pub fn ml_detect(r: &ReadbackBlock, t: &TrellisSpec, eps0: f64) -> Result<BipolarBlock> {
    StaticDetector::ml(t, eps0)?.detect(r)
}

pub fn wssjd_detect(r: &ReadbackBlock, t: &TrellisSpec, eps0: f64) -> Result<BipolarBlock> {
    StaticDetector::wssjd(t, eps0)?.detect(r)
}

pub fn ssjd_detect(r: &ReadbackBlock, t: &TrellisSpec, eps0: f64) -> Result<BipolarBlock> {
    StaticDetector::ssjd(t, eps0)?.detect(r)
}

/// Single-track Viterbi on `h`, treating any ITI in `r` as noise.
pub fn shst_detect(r: &RealSequence, h: &TargetPolynomial) -> Result<BipolarSequence> {
    let t = build_trellis(1, h)?;
    let block = ReadbackBlock::new(vec![r.clone()])?;
    let x = ml_detect(&block, &t, 0.0)?;
    Ok(x.track(0).clone())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum DetectorKind {
    #[serde(rename = "ml")]
    Ml,
    #[serde(rename = "wssjd")]
    Wssjd,
    #[serde(rename = "ssjd")]
    Ssjd,
    #[serde(rename = "wssjd-adaptive")]
    WssjdAdaptive,
    #[serde(rename = "ssjd-adaptive")]
    SsjdAdaptive,
    /// Per-track detection on the ITI-corrupted channel.
    #[serde(rename = "shst-conv")]
    ShstConventional,
    /// Per-track detection on an ITI-free channel; a performance bound.
    #[serde(rename = "shst-itifree")]
    ShstItiFree,
}

impl DetectorKind {
    pub const ALL: [DetectorKind; 7] = [
        DetectorKind::Ml,
        DetectorKind::Wssjd,
        DetectorKind::Ssjd,
        DetectorKind::WssjdAdaptive,
        DetectorKind::SsjdAdaptive,
        DetectorKind::ShstConventional,
        DetectorKind::ShstItiFree,
    ];

    pub fn name(self) -> &'static str {
        match self {
            DetectorKind::Ml => "ml",
            DetectorKind::Wssjd => "wssjd",
            DetectorKind::Ssjd => "ssjd",
            DetectorKind::WssjdAdaptive => "wssjd-adaptive",
            DetectorKind::SsjdAdaptive => "ssjd-adaptive",
            DetectorKind::ShstConventional => "shst-conv",
            DetectorKind::ShstItiFree => "shst-itifree",
        }
    }

    pub fn is_adaptive(self) -> bool {
        matches!(self, DetectorKind::WssjdAdaptive | DetectorKind::SsjdAdaptive)
    }

    pub fn is_single_track(self) -> bool {
        matches!(self, DetectorKind::ShstConventional | DetectorKind::ShstItiFree)
    }
}

impl fmt::Display for DetectorKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for DetectorKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        DetectorKind::ALL
            .into_iter()
            .find(|k| k.name() == s.trim())
            .ok_or_else(|| Error::InvalidArgument(format!("unknown detector `{s}`")))
    }
}
