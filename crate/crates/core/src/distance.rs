//! Distance parameters of error events and minimum-distance searches.
//!
//! An error event `e = x - x_hat` has per-track entries in `{0, +2, -2}`. For
//! a detector that uses labels at `eps0` the pairwise error probability of
//! `e` is `Q(d / 2 sigma)` with
//!
//! ```text
//! d = ||D|| + 2 delta_eps <D, T (x * h)> / ||D||,      D = A_n(eps0) (e * h)
//! ```
//!
//! where `delta_eps` is the offset of the true ITI level from `eps0`. With a
//! matched model the second term vanishes and `d^2 = ||A_n (e * h)||^2`.
//!
//! The mismatch term is linear in the free input symbols (those where
//! `e = 0`), so its worst case over inputs is found exactly by choosing each
//! free symbol against the sign of its coefficient.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use statrs::function::erf::erfc;

use crate::channel::{mix, neighbour_sum, BipolarBlock};
use crate::eigen::EigenSystem;
use crate::error::{check_eps, Error, Result};
use crate::signal::TargetPolynomial;

/// Default node budget for event searches.
pub const DEFAULT_BUDGET: u64 = 200_000_000;

const SYMBOLS: [i8; 3] = [0, 2, -2];

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct ErrorEvent {
    rows: Vec<Vec<i8>>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum EventClass {
    SingleTrack,
    DoubleTrack,
    MultiTrack,
}

impl EventClass {
    pub fn name(self) -> &'static str {
        match self {
            EventClass::SingleTrack => "single-track",
            EventClass::DoubleTrack => "double-track",
            EventClass::MultiTrack => "multi-track",
        }
    }
}

impl ErrorEvent {
    pub fn new(rows: Vec<Vec<i8>>) -> Result<Self> {
        let len = rows.first().map_or(0, Vec::len);
        if rows.is_empty() || len == 0 {
            return Err(Error::InvalidArgument("error event must have at least one track and column".into()));
        }
        if rows.iter().any(|r| r.len() != len) {
            return Err(Error::InvalidArgument("error event tracks differ in length".into()));
        }
        if rows.iter().flatten().any(|v| !SYMBOLS.contains(v)) {
            return Err(Error::InvalidArgument("error event entries must be 0 or +-2".into()));
        }
        if rows.iter().flatten().all(|&v| v == 0) {
            return Err(Error::InvalidArgument("error event is all zero".into()));
        }
        Ok(Self { rows })
    }

    /// Event on one of `n` tracks.
    pub fn single(n: usize, track: usize, pattern: &[i8]) -> Result<Self> {
        if track >= n {
            return Err(Error::InvalidArgument(format!("track {track} out of range for n = {n}")));
        }
        let mut rows = vec![vec![0; pattern.len()]; n];
        rows[track] = pattern.to_vec();
        Self::new(rows)
    }

    fn from_columns(n: usize, cols: &[&[i8]]) -> Self {
        let mut len = cols.len();
        while len > 1 && cols[len - 1].iter().all(|&v| v == 0) {
            len -= 1;
        }
        let rows = (0..n).map(|i| cols[..len].iter().map(|c| c[i]).collect()).collect();
        Self { rows }
    }

    pub fn n(&self) -> usize {
        self.rows.len()
    }

    pub fn len(&self) -> usize {
        self.rows[0].len()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn track(&self, i: usize) -> &[i8] {
        &self.rows[i]
    }

    pub fn get(&self, i: usize, k: usize) -> i8 {
        self.rows[i][k]
    }

    pub fn class(&self) -> EventClass {
        match self.rows.iter().filter(|r| r.iter().any(|&v| v != 0)).count() {
            1 => EventClass::SingleTrack,
            2 => EventClass::DoubleTrack,
            _ => EventClass::MultiTrack,
        }
    }

    /// Per-track `e * h`, each of length `len + nu`.
    pub fn filtered(&self, h: &TargetPolynomial) -> Vec<Vec<f64>> {
        self.rows.iter().map(|r| filter(r, h)).collect()
    }
}

fn filter(seq: &[i8], h: &TargetPolynomial) -> Vec<f64> {
    let taps = h.coeffs();
    let mut out = vec![0.0; seq.len() + taps.len() - 1];
    for (k, &v) in seq.iter().enumerate() {
        for (m, &hm) in taps.iter().enumerate() {
            out[k + m] += hm * f64::from(v);
        }
    }
    out
}

pub fn inner_product(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// `<a * h, b * h>` for two sequences sharing an origin.
pub fn filtered_inner(a: &[i8], b: &[i8], h: &TargetPolynomial) -> f64 {
    let len = a.len().max(b.len());
    let pad = |s: &[i8]| {
        let mut v = s.to_vec();
        v.resize(len, 0);
        v
    };
    inner_product(&filter(&pad(a), h), &filter(&pad(b), h))
}

/// Best `(value, column indices)` of one search subtree, and whether its
/// budget ran out.
type SubtreeResult = (Option<(f64, Vec<usize>)>, bool);

#[derive(Debug, Clone, PartialEq)]
pub struct DistanceReport {
    /// `(d_ideal + d_mism)^2`.
    pub d_squared: f64,
    pub d_ideal: f64,
    pub d_mism: f64,
    pub class: Option<EventClass>,
    pub event: Option<ErrorEvent>,
    /// Inputs over event positions `-nu .. len + nu` (mismatch mode).
    pub input: Option<BipolarBlock>,
    /// The search stopped at its node budget.
    pub partial: bool,
}

impl DistanceReport {
    fn matched(d_squared: f64, event: ErrorEvent) -> Self {
        Self {
            d_squared,
            d_ideal: d_squared.sqrt(),
            d_mism: 0.0,
            class: Some(event.class()),
            event: Some(event),
            input: None,
            partial: false,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum DistanceMode {
    Ml,
    Wssjd,
    Ssjd,
}

impl DistanceMode {
    pub fn name(self) -> &'static str {
        match self {
            DistanceMode::Ml => "ml",
            DistanceMode::Wssjd => "wssjd",
            DistanceMode::Ssjd => "ssjd",
        }
    }
}

impl std::str::FromStr for DistanceMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "ml" => Ok(DistanceMode::Ml),
            "wssjd" => Ok(DistanceMode::Wssjd),
            "ssjd" => Ok(DistanceMode::Ssjd),
            other => Err(Error::InvalidArgument(format!("unknown distance mode `{other}`"))),
        }
    }
}

/// Squared distance of `e` for a detector with matched ITI level `eps`.
pub fn event_distance(e: &ErrorEvent, eps: f64, h: &TargetPolynomial, mode: DistanceMode) -> Result<DistanceReport> {
    check_eps(eps)?;
    let n = e.n();
    let w = e.filtered(h);
    let positions = w[0].len();
    let mut col = vec![0.0; n];
    let mut out = vec![0.0; n];
    let d_squared = match mode {
        DistanceMode::Ml => {
            let mut total = 0.0;
            for p in 0..positions {
                for (c, row) in col.iter_mut().zip(&w) {
                    *c = row[p];
                }
                mix(eps, &col, &mut out);
                total += out.iter().map(|v| v * v).sum::<f64>();
            }
            total
        }
        DistanceMode::Wssjd | DistanceMode::Ssjd => {
            let sys = EigenSystem::new(n)?;
            let mut a = vec![0.0; n];
            for p in 0..positions {
                for (c, row) in col.iter_mut().zip(&w) {
                    *c = row[p];
                }
                sys.project(&col, &mut out);
                for (aj, o) in a.iter_mut().zip(&out) {
                    *aj += o * o;
                }
            }
            let lambda = sys.lambda(eps);
            if mode == DistanceMode::Wssjd {
                a.iter().zip(&lambda).map(|(aj, l)| l * l * aj).sum()
            } else {
                ssjd_finish(&a, &lambda)
            }
        }
    };
    Ok(DistanceReport::matched(d_squared, e.clone()))
}

fn ssjd_finish(a: &[f64], lambda: &[f64]) -> f64 {
    let num: f64 = a.iter().sum();
    let den: f64 = a.iter().zip(lambda).map(|(aj, l)| aj / (l * l)).sum();
    num * num / den
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ClosedForm {
    /// Two-track joint ML (and therefore weighted eigen-space) detection.
    Ml2h2t,
    /// Two-track eigen-space detection without weights.
    Ssjd,
    /// Single-head detector that jointly estimates both tracks.
    ShstOptimal,
    /// Single-head detector treating ITI as noise; derived for 1+D only.
    ShstConventional,
}

/// Closed-form two-track minimum squared distances in units of `d0_sq`.
pub fn closed_form_dmin(kind: ClosedForm, eps: f64, d0_sq: f64, h: &TargetPolynomial) -> Result<f64> {
    check_eps(eps)?;
    Ok(match kind {
        ClosedForm::Ml2h2t => {
            if eps <= 2.0 - 3f64.sqrt() {
                (1.0 + eps * eps) * d0_sq
            } else {
                2.0 * (1.0 - eps).powi(2) * d0_sq
            }
        }
        ClosedForm::Ssjd => (1.0 + eps).powi(2) * (1.0 - eps).powi(2) / (1.0 + eps * eps) * d0_sq,
        ClosedForm::ShstOptimal => (1.0 - eps).powi(2) * d0_sq,
        ClosedForm::ShstConventional => {
            if !h.is_dicode() {
                return Err(Error::OutOfScope("shst-conventional"));
            }
            (1.0 - 2.0 * eps).powi(2) * d0_sq
        }
    })
}

/// Minimum squared distance of single-track events on `1+D` under an ITI
/// offset `delta_eps` from `eps0`.
pub fn mismatch_single_track_dsq(eps0: f64, delta_eps: f64) -> f64 {
    let s = 1.0 + eps0 * eps0;
    if delta_eps > 0.0 {
        8.0 * (s - 2.0 * delta_eps).powi(2) / s
    } else {
        8.0 * (s + (2.0 + 2.0 * eps0) * delta_eps).powi(2) / s
    }
}

/// Minimum squared distance of double-track events on `1+D` under an ITI
/// offset `delta_eps` from `eps0`.
pub fn mismatch_double_track_dsq(eps0: f64, delta_eps: f64) -> f64 {
    if delta_eps > 0.0 {
        16.0 * ((1.0 - eps0) - 2.0 * delta_eps).powi(2)
    } else {
        16.0 * (1.0 - eps0).powi(2)
    }
}

/// Distance of the pair `(e, x)` for a detector at `eps0` reading a channel
/// at `eps0 + delta_eps`.
///
/// `x` spans event positions `-nu .. len + nu` (so `x.len() == e.len() + 2 nu`)
/// and must agree with `e` wherever `e` is nonzero.
pub fn mismatch_distance(
    e: &ErrorEvent,
    x: &BipolarBlock,
    eps0: f64,
    delta_eps: f64,
    h: &TargetPolynomial,
) -> Result<DistanceReport> {
    check_eps(eps0)?;
    let (n, len, nu) = (e.n(), e.len(), h.memory());
    if x.n() != n {
        return Err(Error::DimensionMismatch { expected: n, found: x.n() });
    }
    if x.len() != len + 2 * nu {
        return Err(Error::DimensionMismatch { expected: len + 2 * nu, found: x.len() });
    }
    for i in 0..n {
        for k in 0..len {
            let ev = e.get(i, k);
            if ev != 0 && x.get(i, k + nu) != ev / 2 {
                return Err(Error::InvalidPair { track: i, position: k });
            }
        }
    }
    let w = e.filtered(h);
    let positions = len + nu;
    // (x * h) at event positions 0 .. len + nu.
    let taps = h.coeffs();
    let xh: Vec<Vec<f64>> = (0..n)
        .map(|i| {
            (0..positions)
                .map(|p| taps.iter().enumerate().map(|(m, &hm)| hm * f64::from(x.get(i, p + nu - m))).sum())
                .collect()
        })
        .collect();
    let (mut col, mut d, mut txh, mut xcol) = (vec![0.0; n], vec![0.0; n], vec![0.0; n], vec![0.0; n]);
    let (mut norm_sq, mut cross) = (0.0, 0.0);
    for p in 0..positions {
        for i in 0..n {
            col[i] = w[i][p];
            xcol[i] = xh[i][p];
        }
        mix(eps0, &col, &mut d);
        neighbour_sum(&xcol, &mut txh);
        norm_sq += d.iter().map(|v| v * v).sum::<f64>();
        cross += inner_product(&d, &txh);
    }
    let d_ideal = norm_sq.sqrt();
    let d_mism = 2.0 * delta_eps * cross / d_ideal;
    Ok(DistanceReport {
        d_squared: (d_ideal + d_mism).powi(2),
        d_ideal,
        d_mism,
        class: Some(e.class()),
        event: Some(e.clone()),
        input: Some(x.clone()),
        partial: false,
    })
}

/// Default search length per track count.
pub fn default_max_len(n: usize) -> usize {
    match n {
        0..=2 => 6,
        3 => 5,
        _ => 4,
    }
}

/// Exhaustive error-event search over events of at most `max_len` columns.
///
/// Events are enumerated column by column over `{0, +-2}^n`. The first column
/// is nonzero with its first nonzero entry positive (negating an event never
/// changes its distance). Every prefix is scored as a complete event. The
/// matched ML search prunes on the distance of already-finalized output
/// positions; the first-column subtrees run in parallel and are merged in a
/// fixed order, so results do not depend on scheduling.
#[derive(Debug, Clone)]
pub struct DistanceSearch {
    n: usize,
    h: TargetPolynomial,
    max_len: usize,
    budget: u64,
}

impl DistanceSearch {
    pub fn new(n: usize, h: &TargetPolynomial) -> Result<Self> {
        if n == 0 || n > 8 {
            return Err(Error::InvalidArgument(format!("search supports 1..=8 tracks, got {n}")));
        }
        Ok(Self { n, h: h.clone(), max_len: default_max_len(n), budget: DEFAULT_BUDGET })
    }

    pub fn max_len(mut self, max_len: usize) -> Self {
        self.max_len = max_len.max(1);
        self
    }

    pub fn budget(mut self, budget: u64) -> Self {
        self.budget = budget.max(1);
        self
    }

    /// Minimum matched distance of the joint ML detector (and of its
    /// weighted eigen-space equivalent).
    pub fn ml(&self, eps: f64) -> Result<DistanceReport> {
        check_eps(eps)?;
        let scorer = Scorer::new(self, Projection::Mix(eps));
        let out = self.run(&scorer, true, |acc| acc.iter().sum())?;
        Ok(self.finish_matched(out))
    }

    /// Minimum distance of the unweighted eigen-space detector; searched
    /// without pruning.
    pub fn ssjd(&self, eps: f64) -> Result<DistanceReport> {
        check_eps(eps)?;
        let sys = EigenSystem::new(self.n)?;
        let lambda = sys.lambda(eps);
        let scorer = Scorer::new(self, Projection::Eigen(sys));
        let out = self.run(&scorer, false, |acc| ssjd_finish(acc, &lambda))?;
        Ok(self.finish_matched(out))
    }

    /// Minimum of `d_ideal + d_mism` over error events and every input
    /// consistent with them, for a channel at `eps0 + delta_eps` read by a
    /// detector at `eps0`.
    pub fn mismatch(&self, eps0: f64, delta_eps: f64) -> Result<DistanceReport> {
        check_eps(eps0)?;
        let n = self.n;
        let nu = self.h.memory();
        let firsts = canonical_first_columns(n);
        let cols = all_columns(n);
        let per_subtree = (self.budget / firsts.len() as u64).max(1);
        let results: Vec<SubtreeResult> = firsts
            .par_iter()
            .map(|&first| {
                let mut best: Option<(f64, Vec<usize>)> = None;
                let mut stack = vec![first];
                let mut scratch = MismatchScratch::default();
                let exhausted = dfs(&cols, &mut stack, self.max_len, per_subtree, &mut |stack| {
                    let d = mismatch_value(&cols, stack, n, &self.h, eps0, delta_eps, &mut scratch).0;
                    if best.as_ref().is_none_or(|(b, _)| d < *b - tol(*b)) {
                        best = Some((d, stack.to_vec()));
                    }
                    true
                });
                (best, exhausted)
            })
            .collect();
        let partial = results.iter().any(|(_, ex)| *ex);
        let (_, stack) = merge(results.into_iter().map(|(b, _)| b)).ok_or_else(|| Error::InvalidArgument("empty search".into()))?;
        let mut scratch = MismatchScratch::default();
        let (_, x) = mismatch_value(&cols, &stack, n, &self.h, eps0, delta_eps, &mut scratch);
        let col_refs: Vec<&[i8]> = stack.iter().map(|&c| cols[c].as_slice()).collect();
        let len = stack.len();
        let event = ErrorEvent { rows: (0..n).map(|i| col_refs.iter().map(|c| c[i]).collect()).collect() };
        let input = BipolarBlock::from_rows_unchecked((0..n).map(|i| x[i * (len + 2 * nu)..(i + 1) * (len + 2 * nu)].to_vec()).collect());
        let mut report = mismatch_distance(&event, &input, eps0, delta_eps, &self.h)?;
        report.partial = partial;
        Ok(report)
    }

    fn finish_matched(&self, out: SearchOutcome) -> DistanceReport {
        let cols = all_columns(self.n);
        let refs: Vec<&[i8]> = out.stack.iter().map(|&c| cols[c].as_slice()).collect();
        let mut r = DistanceReport::matched(out.value, ErrorEvent::from_columns(self.n, &refs));
        r.partial = out.partial;
        r
    }

    fn run<F>(&self, scorer: &Scorer, prune: bool, finish: F) -> Result<SearchOutcome>
    where
        F: Fn(&[f64]) -> f64 + Sync,
    {
        let n = self.n;
        let cols = all_columns(n);
        let firsts = canonical_first_columns(n);

        // Seed the bound with the best single-column event.
        let mut seed: Option<(f64, Vec<usize>)> = None;
        let mut state = ScoreState::new(n, self.max_len);
        for &c in &firsts {
            let v = finish(&state.score(scorer, &cols, &[c]).1);
            if seed.as_ref().is_none_or(|(b, _)| v < *b - tol(*b)) {
                seed = Some((v, vec![c]));
            }
        }
        let (seed_value, seed_stack) = seed.expect("at least one column");

        let per_subtree = (self.budget / firsts.len() as u64).max(1);
        let results: Vec<SubtreeResult> = firsts
            .par_iter()
            .map(|&first| {
                let mut best_value = seed_value;
                let mut best: Option<(f64, Vec<usize>)> = None;
                let mut state = ScoreState::new(n, self.max_len);
                let mut stack = vec![first];
                let exhausted = dfs(&cols, &mut stack, self.max_len, per_subtree, &mut |stack| {
                    let (fin, acc) = state.score(scorer, &cols, stack);
                    let v = finish(&acc);
                    if v < best_value - tol(best_value) {
                        best_value = v;
                        best = Some((v, stack.to_vec()));
                    }
                    !(prune && fin > best_value + tol(best_value))
                });
                (best, exhausted)
            })
            .collect();
        let partial = results.iter().any(|(_, ex)| *ex);
        let merged = merge(std::iter::once(Some((seed_value, seed_stack))).chain(results.into_iter().map(|(b, _)| b)))
            .expect("seed is present");
        Ok(SearchOutcome { value: merged.0, stack: merged.1, partial })
    }
}

struct SearchOutcome {
    value: f64,
    stack: Vec<usize>,
    partial: bool,
}

fn tol(v: f64) -> f64 {
    1e-12 * v.abs().max(1.0)
}

fn merge<I>(items: I) -> Option<(f64, Vec<usize>)>
where
    I: IntoIterator<Item = Option<(f64, Vec<usize>)>>,
{
    let mut best: Option<(f64, Vec<usize>)> = None;
    for (v, s) in items.into_iter().flatten() {
        if best.as_ref().is_none_or(|(b, _)| v < *b - tol(*b)) {
            best = Some((v, s));
        }
    }
    best
}

fn all_columns(n: usize) -> Vec<Vec<i8>> {
    let count = 3usize.pow(n as u32);
    (0..count)
        .map(|mut idx| {
            (0..n)
                .map(|_| {
                    let s = SYMBOLS[idx % 3];
                    idx /= 3;
                    s
                })
                .collect()
        })
        .collect()
}

fn canonical_first_columns(n: usize) -> Vec<usize> {
    all_columns(n)
        .iter()
        .enumerate()
        .filter(|(_, c)| c.iter().find(|&&v| v != 0) == Some(&2))
        .map(|(i, _)| i)
        .collect()
}

/// Preorder walk; `visit` returns whether to descend. Returns `true` if the
/// node budget ran out.
fn dfs<F>(cols: &[Vec<i8>], stack: &mut Vec<usize>, max_len: usize, budget: u64, visit: &mut F) -> bool
where
    F: FnMut(&[usize]) -> bool,
{
    let mut nodes = 0u64;
    fn go<F: FnMut(&[usize]) -> bool>(
        cols: &[Vec<i8>],
        stack: &mut Vec<usize>,
        max_len: usize,
        budget: u64,
        nodes: &mut u64,
        visit: &mut F,
    ) -> bool {
        *nodes += 1;
        if *nodes > budget {
            return true;
        }
        if !visit(stack) || stack.len() >= max_len {
            return false;
        }
        for c in 0..cols.len() {
            stack.push(c);
            let exhausted = go(cols, stack, max_len, budget, nodes, visit);
            stack.pop();
            if exhausted {
                return true;
            }
        }
        false
    }
    go(cols, stack, max_len, budget, &mut nodes, visit)
}

enum Projection {
    Mix(f64),
    Eigen(EigenSystem),
}

/// Per-position squared outputs of an event under a fixed linear map.
struct Scorer {
    taps: Vec<f64>,
    projection: Projection,
}

impl Scorer {
    fn new(search: &DistanceSearch, projection: Projection) -> Self {
        Self { taps: search.h.coeffs().to_vec(), projection }
    }

    /// Adds the squared projected outputs at position `p` to `acc`.
    fn position(&self, cols: &[Vec<i8>], stack: &[usize], p: usize, w: &mut [f64], out: &mut [f64], acc: &mut [f64]) {
        let n = w.len();
        for (i, wi) in w.iter_mut().enumerate() {
            let mut v = 0.0;
            for (m, &hm) in self.taps.iter().enumerate() {
                if m <= p && p - m < stack.len() {
                    v += hm * f64::from(cols[stack[p - m]][i]);
                }
            }
            *wi = v;
        }
        match &self.projection {
            Projection::Mix(eps) => mix(*eps, w, out),
            Projection::Eigen(sys) => sys.project(w, out),
        }
        for j in 0..n {
            acc[j] += out[j] * out[j];
        }
    }
}

/// Finalized prefix sums per depth, reused along the current DFS path.
struct ScoreState {
    fin: Vec<Vec<f64>>,
    w: Vec<f64>,
    out: Vec<f64>,
}

impl ScoreState {
    fn new(n: usize, max_len: usize) -> Self {
        Self { fin: vec![vec![0.0; n]; max_len + 1], w: vec![0.0; n], out: vec![0.0; n] }
    }

    /// Returns the finalized-position total (a lower bound for every
    /// extension) and the per-channel totals of the complete event.
    fn score(&mut self, scorer: &Scorer, cols: &[Vec<i8>], stack: &[usize]) -> (f64, Vec<f64>) {
        let depth = stack.len();
        // Position depth-1 is final once column depth-1 is fixed.
        let (prev, cur) = self.fin.split_at_mut(depth);
        cur[0].copy_from_slice(&prev[depth - 1]);
        scorer.position(cols, stack, depth - 1, &mut self.w, &mut self.out, &mut cur[0]);
        let fin_total: f64 = cur[0].iter().sum();
        let mut acc = cur[0].clone();
        let nu = scorer.taps.len() - 1;
        for p in depth..depth + nu {
            scorer.position(cols, stack, p, &mut self.w, &mut self.out, &mut acc);
        }
        (fin_total, acc)
    }
}

#[derive(Default)]
struct MismatchScratch {
    w: Vec<f64>,
    d: Vec<f64>,
    g: Vec<f64>,
}

/// Worst-case `d_ideal + d_mism` of the event on `stack`, with the achieving
/// input laid out track-major over positions `-nu .. len + nu`.
fn mismatch_value(
    cols: &[Vec<i8>],
    stack: &[usize],
    n: usize,
    h: &TargetPolynomial,
    eps0: f64,
    delta_eps: f64,
    s: &mut MismatchScratch,
) -> (f64, Vec<i8>) {
    let taps = h.coeffs();
    let nu = taps.len() - 1;
    let len = stack.len();
    let positions = len + nu;
    s.w.resize(n * positions, 0.0);
    s.d.resize(n * positions, 0.0);
    s.g.resize(n * positions, 0.0);
    let (mut col, mut out) = (vec![0.0; n], vec![0.0; n]);
    let mut norm_sq = 0.0;
    for p in 0..positions {
        for (i, c) in col.iter_mut().enumerate() {
            *c = taps
                .iter()
                .enumerate()
                .filter(|(m, _)| *m <= p && p - m < len)
                .map(|(m, &hm)| hm * f64::from(cols[stack[p - m]][i]))
                .sum();
        }
        mix(eps0, &col, &mut out);
        norm_sq += out.iter().map(|v| v * v).sum::<f64>();
        let mut g = vec![0.0; n];
        neighbour_sum(&out, &mut g);
        for i in 0..n {
            s.d[i * positions + p] = out[i];
            s.g[i * positions + p] = g[i];
        }
    }
    let norm = norm_sq.sqrt();
    // S = sum_q x_q c_q with c_q = sum_m h_m G_{q+m}, q in -nu .. len + nu.
    let span = len + 2 * nu;
    let mut x = vec![1i8; n * span];
    let mut cross = 0.0;
    for i in 0..n {
        for qi in 0..span {
            let mut c = 0.0;
            for (m, &hm) in taps.iter().enumerate() {
                let p = qi + m;
                if p >= nu && p - nu < positions {
                    c += hm * s.g[i * positions + p - nu];
                }
            }
            let fixed = qi >= nu && qi - nu < len && cols[stack[qi - nu]][i] != 0;
            let xv = if fixed {
                cols[stack[qi - nu]][i] / 2
            } else if (delta_eps > 0.0 && c > 0.0) || (delta_eps < 0.0 && c < 0.0) {
                -1
            } else {
                1
            };
            x[i * span + qi] = xv;
            cross += f64::from(xv) * c;
        }
    }
    (norm + 2.0 * delta_eps * cross / norm, x)
}

pub fn dmin_search(n: usize, eps: f64, h: &TargetPolynomial, max_len: usize) -> Result<DistanceReport> {
    DistanceSearch::new(n, h)?.max_len(max_len).ml(eps)
}

/// Minimum single-track distance `||e * h||^2`.
pub fn d0_search(h: &TargetPolynomial, max_len: usize) -> Result<f64> {
    Ok(dmin_search(1, 0.0, h, max_len)?.d_squared)
}

pub fn mismatch_dmin_search(n: usize, eps0: f64, delta_eps: f64, h: &TargetPolynomial, max_len: usize) -> Result<DistanceReport> {
    DistanceSearch::new(n, h)?.max_len(max_len).mismatch(eps0, delta_eps)
}

/// Standard Gaussian tail probability.
pub fn q_function(x: f64) -> f64 {
    0.5 * erfc(x / std::f64::consts::SQRT_2)
}

/// `Q(d_min / 2 sigma)`.
pub fn predicted_pe(d_min: f64, sigma: f64) -> Result<f64> {
    if sigma.is_nan() || sigma <= 0.0 {
        return Err(Error::InvalidArgument(format!("sigma must be positive, got {sigma}")));
    }
    Ok(q_function(d_min / (2.0 * sigma)))
}
