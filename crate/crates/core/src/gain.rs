//! Decision-directed gain loops and the adaptive eigen-space detector.
//!
//! In eigen-coordinates the ITI level only scales each channel:
//! `V^T r_k = lambda_j (V^T w_k)_j + noise`. A loop per channel tracks
//! `g_j = 1 / (1 + eps lambda_hat_j)` with an LMS recursion driven by the
//! detector's tentative decisions `y` at lag `delay`:
//!
//! ```text
//! rbar_k = g_j (V^T r_k)_j
//! e      = y_{k-delay} - rbar_{k-delay}
//! g_j   <- g_j + beta * y_{k-delay} * e
//! ```
//!
//! The same gains weight the Viterbi metric by `g_j^-2`. Channels with
//! `lambda_hat_j = 0` do not see the ITI at all and keep `g_j = 1`.
//!
//! `beta` applies to the orthonormal coordinates used throughout this crate.
//! Loops written for unnormalized sum/difference signals `r_a +- r_b` see
//! every product `y e` doubled, so their step size maps to `2 beta` here.

use crate::channel::{BipolarBlock, ReadbackBlock};
use crate::detect::ViterbiWorkspace;
use crate::eigen::EigenSystem;
use crate::signal::TargetPolynomial;
use crate::error::{check_eps, Error, Result};
use crate::trellis::{wssjd_labels, BranchLabels, TrellisSpec};

pub const GAIN_MIN: f64 = 0.2;
pub const GAIN_MAX: f64 = 5.0;

/// Default decision delay for a target of memory `nu`.
pub fn default_delay(nu: usize) -> usize {
    4 * nu + 1
}

/// Default step size for target `h` and decision delay `delay`.
///
/// 0.016 for dicode at delay 5, scaled down with the label energy `|h|^2`
/// and the delay, both of which stiffen the delayed loop.
pub fn default_beta(h: &TargetPolynomial, delay: usize) -> f64 {
    0.16 / (h.norm_sq() * delay.max(1) as f64)
}

/// One recorded gain value.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GainSample {
    pub k: usize,
    pub channel: usize,
    pub g: f64,
    pub eps_hat: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EpsEstimate {
    /// `(channel, eps_hat)` for every channel that carries a loop.
    pub per_loop: Vec<(usize, f64)>,
    pub combined: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GainLoop {
    gains: Vec<f64>,
    lambda_hat: Vec<f64>,
    beta: f64,
    delay: usize,
    clamps: usize,
}

impl GainLoop {
    pub fn new(sys: &EigenSystem, init: &[f64], beta: f64, delay: usize) -> Result<Self> {
        if init.len() != sys.n() {
            return Err(Error::DimensionMismatch { expected: sys.n(), found: init.len() });
        }
        if !(beta >= 0.0 && beta.is_finite()) {
            return Err(Error::InvalidArgument(format!("step size {beta} must be >= 0")));
        }
        if delay == 0 {
            return Err(Error::InvalidArgument("decision delay must be >= 1".into()));
        }
        let lambda_hat = sys.lambda_hat().to_vec();
        let gains = init
            .iter()
            .zip(&lambda_hat)
            .map(|(&g, &l)| if l == 0.0 { 1.0 } else { g.clamp(GAIN_MIN, GAIN_MAX) })
            .collect();
        Ok(Self { gains, lambda_hat, beta, delay, clamps: 0 })
    }

    /// Loops started at `1 / (1 + eps_init lambda_hat_j)`.
    pub fn from_eps(sys: &EigenSystem, eps_init: f64, beta: f64, delay: usize) -> Result<Self> {
        check_eps(eps_init)?;
        let init: Vec<f64> = sys.inverse_lambda(eps_init)?;
        Self::new(sys, &init, beta, delay)
    }

    pub fn gains(&self) -> &[f64] {
        &self.gains
    }

    pub fn beta(&self) -> f64 {
        self.beta
    }

    pub fn delay(&self) -> usize {
        self.delay
    }

    pub fn is_active(&self, channel: usize) -> bool {
        self.lambda_hat[channel] != 0.0
    }

    /// Number of updates that hit the gain clamp.
    pub fn clamp_count(&self) -> usize {
        self.clamps
    }

    /// LMS update from an already-normalized sample `rbar` and decision `y`.
    pub fn update(&mut self, tentative: &[f64], normalized: &[f64]) {
        for j in 0..self.gains.len() {
            if !self.is_active(j) {
                continue;
            }
            let y = tentative[j];
            let e = y - normalized[j];
            let g = self.gains[j] + self.beta * y * e;
            if !(GAIN_MIN..=GAIN_MAX).contains(&g) {
                self.clamps += 1;
            }
            self.gains[j] = g.clamp(GAIN_MIN, GAIN_MAX);
        }
    }

    /// Normalizes `raw` (a `V^T r` column) with the current gains, then updates.
    pub fn gain_step(&mut self, raw: &[f64], tentative: &[f64]) {
        let normalized: Vec<f64> = raw.iter().zip(&self.gains).map(|(r, g)| r * g).collect();
        self.update(tentative, &normalized);
    }

    pub fn eps_hat(&self, channel: usize) -> Option<f64> {
        self.is_active(channel).then(|| (1.0 / self.gains[channel] - 1.0) / self.lambda_hat[channel])
    }

    pub fn estimate(&self) -> Result<EpsEstimate> {
        eps_from_gains(&self.gains, &self.lambda_hat)
    }
}

/// Inverts each gain to an ITI estimate and averages them.
pub fn eps_from_gains(gains: &[f64], lambda_hat: &[f64]) -> Result<EpsEstimate> {
    let per_loop: Vec<(usize, f64)> = gains
        .iter()
        .zip(lambda_hat)
        .enumerate()
        .filter(|(_, (_, &l))| l != 0.0)
        .map(|(j, (&g, &l))| (j, (1.0 / g - 1.0) / l))
        .collect();
    if per_loop.is_empty() {
        return Err(Error::NoContributingLoop);
    }
    let combined = per_loop.iter().map(|(_, e)| e).sum::<f64>() / per_loop.len() as f64;
    Ok(EpsEstimate { per_loop, combined })
}

/// Least-squares gains from a known training block.
///
/// `x` is written after the usual preamble and `r` holds its aligned
/// readback. Each active channel gets `sum y^2 / sum y (V^T r)`, the gain
/// that best maps the observations onto the noiseless labels.
pub fn trained_gains(t: &TrellisSpec, sys: &EigenSystem, x: &BipolarBlock, r: &ReadbackBlock) -> Result<Vec<f64>> {
    let n = t.n();
    if x.n() != n || r.n() != n || sys.n() != n {
        return Err(Error::DimensionMismatch { expected: n, found: x.n().max(r.n()) });
    }
    if r.len() != x.len() {
        return Err(Error::DimensionMismatch { expected: x.len(), found: r.len() });
    }
    let labels = wssjd_labels(t, sys)?;
    let (mut yy, mut yr) = (vec![0.0; n], vec![0.0; n]);
    let (mut col, mut proj) = (vec![0.0; n], vec![0.0; n]);
    let mut sym = vec![0i8; n];
    let mut s = t.initial_state();
    for k in 0..x.len() {
        for (i, c) in sym.iter_mut().enumerate() {
            *c = x.get(i, k);
        }
        let b = t.branch_for(s, &sym);
        s = t.next_state(b);
        r.column_into(k, &mut col);
        sys.project(&col, &mut proj);
        for (j, &y) in labels.get(b).iter().enumerate() {
            yy[j] += y * y;
            yr[j] += y * proj[j];
        }
    }
    Ok((0..n)
        .map(|j| {
            if sys.lambda_hat()[j] == 0.0 || yr[j] <= 0.0 {
                1.0
            } else {
                (yy[j] / yr[j]).clamp(GAIN_MIN, GAIN_MAX)
            }
        })
        .collect())
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AdaptiveParams {
    pub beta: f64,
    pub delay: usize,
    /// Weight the metric by `g_j^-2`; `false` gives the unweighted variant.
    pub weighted: bool,
    /// Keep a per-step gain trace.
    pub record: bool,
}

#[derive(Debug, Clone)]
pub struct AdaptiveOutput {
    pub decisions: BipolarBlock,
    pub trace: Vec<GainSample>,
    pub final_gains: Vec<f64>,
    pub clamp_count: usize,
}

/// Eigen-space Viterbi detector with per-channel gain loops.
#[derive(Debug, Clone)]
pub struct AdaptiveDetector<'t> {
    trellis: &'t TrellisSpec,
    sys: EigenSystem,
    labels: BranchLabels,
    params: AdaptiveParams,
    ws: ViterbiWorkspace,
}

impl<'t> AdaptiveDetector<'t> {
    pub fn new(t: &'t TrellisSpec, params: AdaptiveParams) -> Result<Self> {
        if params.delay == 0 {
            return Err(Error::InvalidArgument("decision delay must be >= 1".into()));
        }
        let sys = EigenSystem::new(t.n())?;
        let labels = wssjd_labels(t, &sys)?;
        Ok(Self { trellis: t, sys, labels, params, ws: ViterbiWorkspace::new(t) })
    }

    pub fn system(&self) -> &EigenSystem {
        &self.sys
    }

    /// Detects one sector starting from the gains `init`.
    pub fn detect(&mut self, r: &ReadbackBlock, init: &[f64]) -> Result<AdaptiveOutput> {
        let t = self.trellis;
        let n = t.n();
        if r.n() != n {
            return Err(Error::DimensionMismatch { expected: n, found: r.n() });
        }
        let len = r.len();
        let delay = self.params.delay;
        if len <= delay {
            return Err(Error::InvalidArgument(format!("sector length {len} must exceed the delay {delay}")));
        }
        let mut lp = GainLoop::new(&self.sys, init, self.params.beta, delay)?;
        let mut normalized = vec![0.0; n * len];
        let (mut col, mut proj) = (vec![0.0; n], vec![0.0; n]);
        let mut weights = vec![1.0; n];
        let mut trace = Vec::new();
        self.ws.reset(t);
        for k in 0..len {
            r.column_into(k, &mut col);
            self.sys.project(&col, &mut proj);
            let obs = &mut normalized[k * n..(k + 1) * n];
            for j in 0..n {
                obs[j] = lp.gains[j] * proj[j];
                if self.params.weighted {
                    weights[j] = 1.0 / (lp.gains[j] * lp.gains[j]);
                }
            }
            self.ws.step(t, &self.labels, &weights, obs);
            if k >= delay {
                let b = self.ws.traceback(t, self.ws.best_state(), delay);
                let past = &normalized[(k - delay) * n..(k - delay + 1) * n];
                lp.update(self.labels.get(b), past);
            }
            if self.params.record {
                for j in (0..n).filter(|&j| lp.is_active(j)) {
                    trace.push(GainSample { k, channel: j, g: lp.gains[j], eps_hat: lp.eps_hat(j).unwrap_or(0.0) });
                }
            }
        }
        Ok(AdaptiveOutput {
            decisions: self.ws.decisions(t, self.ws.best_state()),
            trace,
            final_gains: lp.gains.clone(),
            clamp_count: lp.clamp_count(),
        })
    }
}

/// One-shot adaptive detection with gains initialized from `eps_init`.
pub fn adaptive_wssjd_detect(
    r: &ReadbackBlock,
    t: &TrellisSpec,
    eps_init: f64,
    beta: f64,
    delay: usize,
) -> Result<(BipolarBlock, Vec<GainSample>)> {
    let mut det = AdaptiveDetector::new(t, AdaptiveParams { beta, delay, weighted: true, record: true })?;
    check_eps(eps_init)?;
    let init = det.system().inverse_lambda(eps_init)?;
    let out = det.detect(r, &init)?;
    Ok((out.decisions, out.trace))
}

/// Mean combined ITI estimate over trace steps `k >= from`.
pub fn mean_eps_hat(trace: &[GainSample], from: usize) -> Option<f64> {
    let tail: Vec<f64> = trace.iter().filter(|s| s.k >= from).map(|s| s.eps_hat).collect();
    (!tail.is_empty()).then(|| tail.iter().sum::<f64>() / tail.len() as f64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::detect::wssjd_detect;
    use crate::eigen::toeplitz_eigen;
    use crate::signal::{sigma_from_snr, substream, TargetPolynomial};
    use crate::trellis::{build_trellis, framed_readback};

    #[test]
    fn fixed_point_has_zero_error() {
        let sys = toeplitz_eigen(2).unwrap();
        let eps = 0.3;
        let mut lp = GainLoop::from_eps(&sys, eps, 0.01, 5).unwrap();
        let before = lp.gains().to_vec();
        let lambda = sys.lambda(eps);
        for y in [[2.0, 0.0], [-1.4, 1.4], [0.0, -2.8]] {
            let raw = [lambda[0] * y[0], lambda[1] * y[1]];
            lp.gain_step(&raw, &y);
        }
        for (a, b) in lp.gains().iter().zip(&before) {
            assert!((a - b).abs() < 1e-15);
        }
        assert!((lp.gains()[0] - 1.0 / 1.3).abs() < 1e-15);
        assert!((lp.gains()[1] - 1.0 / 0.7).abs() < 1e-15);
    }

    #[test]
    fn oracle_decisions_converge_monotonically() {
        let sys = toeplitz_eigen(2).unwrap();
        let eps = 0.1;
        let lambda = sys.lambda(eps);
        let mut lp = GainLoop::new(&sys, &[1.0, 1.0], 0.01, 1).unwrap();
        let mut rng = substream(3, 3);
        let t = build_trellis(2, &TargetPolynomial::dicode()).unwrap();
        let labels = wssjd_labels(&t, &sys).unwrap();
        let mut prev_gap = [f64::INFINITY; 2];
        for _ in 0..5000 {
            let b = rand::Rng::gen_range(&mut rng, 0..t.branch_count());
            let y = labels.get(b);
            let raw = [lambda[0] * y[0], lambda[1] * y[1]];
            lp.gain_step(&raw, y);
            for j in 0..2 {
                let gap = (lp.gains()[j] - 1.0 / lambda[j]).abs();
                assert!(gap <= prev_gap[j] + 1e-15);
                prev_gap[j] = gap;
            }
        }
        assert!((lp.gains()[0] - 1.0 / 1.1).abs() < 1e-9);
        assert!(prev_gap.iter().all(|&g| g < 1e-9));
    }

    #[test]
    fn zero_step_size_freezes_gains() {
        let sys = toeplitz_eigen(3).unwrap();
        let mut lp = GainLoop::new(&sys, &[0.9, 0.5, 1.2], 0.0, 3).unwrap();
        lp.gain_step(&[1.0, 2.0, 3.0], &[0.5, 0.1, -2.0]);
        // The middle channel has no loop and is pinned at 1.
        assert_eq!(lp.gains(), &[0.9, 1.0, 1.2]);
        assert!(!lp.is_active(1) && lp.eps_hat(1).is_none());
    }

    #[test]
    fn clamp_is_counted() {
        let sys = toeplitz_eigen(2).unwrap();
        let mut lp = GainLoop::new(&sys, &[1.0, 1.0], 10.0, 1).unwrap();
        lp.update(&[3.0, 3.0], &[-3.0, 0.0]);
        assert_eq!(lp.gains(), &[GAIN_MAX, GAIN_MAX]);
        assert_eq!(lp.clamp_count(), 2);
    }

    #[test]
    fn estimates_invert_gains() {
        let two = toeplitz_eigen(2).unwrap();
        let est = eps_from_gains(&[1.0 / 1.3, 1.0 / 0.7], two.lambda_hat()).unwrap();
        assert!(est.per_loop.iter().all(|(_, e)| (e - 0.3).abs() < 1e-12));
        assert!((est.combined - 0.3).abs() < 1e-12);

        let three = toeplitz_eigen(3).unwrap();
        let g1 = 1.0 / (1.0 + 0.2 * std::f64::consts::SQRT_2);
        let est = eps_from_gains(&[g1, 1.0, 1.0], three.lambda_hat()).unwrap();
        assert_eq!(est.per_loop.len(), 2);
        assert!((est.per_loop[0].1 - 0.2).abs() < 1e-12);

        let est = eps_from_gains(&[1.0 / 1.29, 1.0 / 0.69], two.lambda_hat()).unwrap();
        assert!((est.per_loop[0].1 - 0.29).abs() < 1e-12 && (est.per_loop[1].1 - 0.31).abs() < 1e-12);
        assert!((est.combined - 0.30).abs() < 1e-12);

        let one = toeplitz_eigen(1).unwrap();
        assert_eq!(eps_from_gains(&[1.0], one.lambda_hat()), Err(Error::NoContributingLoop));
    }

    #[test]
    fn frozen_true_gains_match_static_detector() {
        let h = TargetPolynomial::dicode();
        let t = build_trellis(2, &h).unwrap();
        let mut rng = substream(21, 0);
        for _ in 0..5 {
            let x = BipolarBlock::random(2, 300, &mut rng);
            let r = framed_readback(&x, &h, |_| 0.3, 0.6, &mut rng);
            let (adaptive, trace) = adaptive_wssjd_detect(&r, &t, 0.3, 0.0, 5).unwrap();
            assert_eq!(adaptive, wssjd_detect(&r, &t, 0.3).unwrap());
            assert!(trace.iter().all(|s| (s.eps_hat - 0.3).abs() < 1e-12));
        }
    }

    #[test]
    fn trained_gains_are_exact_without_noise() {
        let h = TargetPolynomial::epr4();
        let t = build_trellis(3, &h).unwrap();
        let sys = toeplitz_eigen(3).unwrap();
        let mut rng = substream(22, 0);
        let x = BipolarBlock::random(3, 256, &mut rng);
        let r = framed_readback(&x, &h, |_| 0.25, 0.0, &mut rng);
        let g = trained_gains(&t, &sys, &x, &r).unwrap();
        let expect = sys.inverse_lambda(0.25).unwrap();
        assert!((g[0] - expect[0]).abs() < 1e-12 && (g[2] - expect[2]).abs() < 1e-12);
        assert_eq!(g[1], 1.0);
    }

    fn run_trace(beta: f64, seed: u64) -> Vec<f64> {
        let h = TargetPolynomial::dicode();
        let t = build_trellis(2, &h).unwrap();
        let mut rng = substream(seed, 0);
        let x = BipolarBlock::random(2, 4096, &mut rng);
        let r = framed_readback(&x, &h, |_| 0.3, sigma_from_snr(10.0, &h), &mut rng);
        let mut det = AdaptiveDetector::new(&t, AdaptiveParams { beta, delay: 5, weighted: true, record: true }).unwrap();
        let out = det.detect(&r, &[1.0, 1.0]).unwrap();
        // Combined estimate per step.
        out.trace.chunks_exact(2).map(|p| 0.5 * (p[0].eps_hat + p[1].eps_hat)).collect()
    }

    #[test]
    fn larger_step_converges_faster_but_noisier() {
        let (mut first_small, mut first_large, mut var_small, mut var_large) = (0.0, 0.0, 0.0, 0.0);
        let seeds = 8;
        for seed in 0..seeds {
            for (beta, first, var) in [(0.002, &mut first_small, &mut var_small), (0.008, &mut first_large, &mut var_large)] {
                let tr = run_trace(beta, 500 + seed);
                *first += tr.iter().position(|e| (e - 0.3).abs() <= 0.02).unwrap_or(tr.len()) as f64;
                let tail = &tr[3000..];
                let m = tail.iter().sum::<f64>() / tail.len() as f64;
                *var += tail.iter().map(|e| (e - m).powi(2)).sum::<f64>() / tail.len() as f64;
            }
        }
        assert!(first_large < first_small, "steps to band: {first_large} vs {first_small}");
        assert!(var_large > var_small, "variance: {var_large} vs {var_small}");
    }

    #[test]
    fn trace_is_deterministic() {
        assert_eq!(run_trace(0.005, 77), run_trace(0.005, 77));
    }

    #[test]
    fn rejects_bad_parameters() {
        let t = build_trellis(2, &TargetPolynomial::dicode()).unwrap();
        let sys = toeplitz_eigen(2).unwrap();
        assert!(GainLoop::new(&sys, &[1.0, 1.0], -0.1, 5).is_err());
        assert!(GainLoop::new(&sys, &[1.0, 1.0], 0.1, 0).is_err());
        assert!(GainLoop::new(&sys, &[1.0], 0.1, 5).is_err());
        let r = ReadbackBlock::from_rows(vec![vec![0.0; 5]; 2]).unwrap();
        assert!(adaptive_wssjd_detect(&r, &t, 0.1, 0.01, 5).is_err());
    }
}
