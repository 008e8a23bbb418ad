//! Monte Carlo harness: sector generation, BER/FER sweeps, gain traces and
//! distance tables, with CSV output.
//!
//! Every sector `s` draws its data and noise from substream `2s` of the run
//! seed and its training block from substream `2s + 1`, so results do not
//! depend on the number of worker threads. The same substreams are reused
//! for every detector and SNR point (common random numbers).

use std::io::Write;
use std::time::Instant;

use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Deserializer, Serialize};

use crate::channel::{BipolarBlock, ItiProfile, ReadbackBlock};
use crate::detect::{DetectorKind, StaticDetector};
use crate::distance::{closed_form_dmin, d0_search, default_max_len, ClosedForm, DistanceSearch, DEFAULT_BUDGET};
use crate::eigen::EigenSystem;
use crate::error::{Error, Result};
use crate::gain::{default_beta, default_delay, trained_gains, AdaptiveDetector, AdaptiveParams, GainSample};
use crate::signal::{sigma_from_snr, substream, TargetPolynomial};
use crate::trellis::{build_trellis, framed_readback, TrellisSpec};

/// Two-sided 95% normal quantile.
pub const Z95: f64 = 1.959964;

/// Sectors processed between stopping-rule checks.
const BATCH: usize = 32;

/// How adaptive detectors initialize their gains at the start of a sector.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum GainInit {
    /// All gains 1.
    Unit,
    /// `1 / (1 + eps0 lambda_hat_j)` from the nominal ITI level.
    Nominal,
    /// Least-squares fit on a known training block.
    Trained,
}

impl std::str::FromStr for GainInit {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "unit" => Ok(GainInit::Unit),
            "nominal" => Ok(GainInit::Nominal),
            "trained" => Ok(GainInit::Trained),
            other => Err(Error::InvalidArgument(format!("unknown gain init `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SimConfig {
    pub detectors: Vec<DetectorKind>,
    pub n: usize,
    /// `"dicode"`, `"epr4"`, `"taps=..."` or a list of taps.
    #[serde(deserialize_with = "target_de")]
    pub target: TargetPolynomial,
    pub profile: ItiProfile,
    pub snr_db: Vec<f64>,
    pub sector_len: usize,
    /// Sectors per point (the cap when `min_errors` is set).
    pub sectors: usize,
    pub seed: u64,
    /// Gain-loop step size in orthonormal coordinates (0.016 here equals a
    /// step of 0.008 on unnormalized sum/difference signals). Derived from
    /// the target and delay when absent.
    pub beta: Option<f64>,
    /// Gain-loop decision delay; `4 nu + 1` when absent.
    pub delay: Option<usize>,
    pub training_len: usize,
    pub gain_init: GainInit,
    /// Stop a point early once this many bit errors are counted.
    pub min_errors: Option<u64>,
    pub jobs: Option<usize>,
    /// Record wall-clock time per point (otherwise 0, keeping output reproducible).
    pub timing: bool,
    pub out: Option<String>,
}

impl Default for SimConfig {
    fn default() -> Self {
        Self {
            detectors: vec![DetectorKind::Ml, DetectorKind::WssjdAdaptive, DetectorKind::Ssjd],
            n: 2,
            target: TargetPolynomial::dicode(),
            profile: ItiProfile { eps0: 0.1, kind: crate::channel::ProfileKind::Static },
            snr_db: vec![10.0],
            sector_len: 4096,
            sectors: 100,
            seed: 1,
            beta: None,
            delay: None,
            training_len: 256,
            gain_init: GainInit::Trained,
            min_errors: None,
            jobs: None,
            timing: false,
            out: None,
        }
    }
}

fn target_de<'de, D: Deserializer<'de>>(d: D) -> std::result::Result<TargetPolynomial, D::Error> {
    #[derive(Deserialize)]
    #[serde(untagged)]
    enum Repr {
        Name(String),
        Taps(Vec<f64>),
    }
    match Repr::deserialize(d)? {
        Repr::Name(s) => s.parse().map_err(serde::de::Error::custom),
        Repr::Taps(t) => TargetPolynomial::new(t).map_err(serde::de::Error::custom),
    }
}

impl SimConfig {
    pub fn delay(&self) -> usize {
        self.delay.unwrap_or_else(|| default_delay(self.target.memory()))
    }

    pub fn beta(&self) -> f64 {
        self.beta.unwrap_or_else(|| default_beta(&self.target, self.delay()))
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        if self.detectors.is_empty() {
            return bad("no detectors selected".into());
        }
        if !(1..=8).contains(&self.n) {
            return bad(format!("n = {} outside 1..=8", self.n));
        }
        if self.snr_db.is_empty() || self.snr_db.iter().any(|s| !s.is_finite()) {
            return bad("SNR grid must be nonempty and finite".into());
        }
        if self.sectors == 0 {
            return bad("sectors must be >= 1".into());
        }
        if self.sector_len <= self.delay() {
            return bad(format!("sector length {} must exceed the delay {}", self.sector_len, self.delay()));
        }
        if !(self.beta().is_finite() && self.beta() >= 0.0) {
            return bad(format!("beta = {} must be finite and >= 0", self.beta()));
        }
        if self.delay == Some(0) {
            return bad("delay must be >= 1".into());
        }
        if self.gain_init == GainInit::Trained && self.training_len == 0 {
            return bad("trained gain init needs training_len >= 1".into());
        }
        if self.jobs == Some(0) {
            return bad("jobs must be >= 1".into());
        }
        self.profile.validate()
    }

    /// Runs `f` on a pool with `jobs` workers (rayon's default otherwise).
    pub fn install<T: Send>(&self, f: impl FnOnce() -> T + Send) -> Result<T> {
        match self.jobs {
            None => Ok(f()),
            Some(j) => {
                let pool = rayon::ThreadPoolBuilder::new()
                    .num_threads(j)
                    .build()
                    .map_err(|e| Error::Config(e.to_string()))?;
                Ok(pool.install(f))
            }
        }
    }
}

/// One CSV row of a BER/FER sweep.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ResultRow {
    pub detector: DetectorKind,
    pub snr_db: f64,
    pub eps_mode: &'static str,
    pub delta_eps: f64,
    pub bits: u64,
    pub bit_errors: u64,
    pub frames: u64,
    pub frame_errors: u64,
    pub ber: f64,
    pub fer: f64,
    pub seed: u64,
    pub wall_time: f64,
}

impl ResultRow {
    pub const HEADER: &'static str =
        "detector,snr_db,eps_mode,delta_eps,bits,bit_errors,frames,frame_errors,ber,fer,seed,wall_time";

    fn from_stats(p: &PointSpec, cfg: &SimConfig, s: &PointStats, wall_time: f64) -> Self {
        Self {
            detector: p.detector,
            snr_db: p.snr_db,
            eps_mode: if cfg.profile.is_static() { "static" } else { "sinusoidal" },
            delta_eps: p.delta_eps,
            bits: s.bits,
            bit_errors: s.bit_errors,
            frames: s.frames,
            frame_errors: s.frame_errors,
            ber: s.ber(),
            fer: s.fer(),
            seed: cfg.seed,
            wall_time,
        }
    }

    /// 95% Wilson interval for the BER.
    pub fn ber_ci(&self) -> (f64, f64) {
        wilson_interval(self.bit_errors, self.bits, Z95)
    }

    pub fn csv_line(&self) -> String {
        format!(
            "{},{},{},{},{},{},{},{},{},{},{},{}",
            self.detector,
            fmt_f(self.snr_db),
            self.eps_mode,
            fmt_f(self.delta_eps),
            self.bits,
            self.bit_errors,
            self.frames,
            self.frame_errors,
            fmt_f(self.ber),
            fmt_f(self.fer),
            self.seed,
            fmt_f(self.wall_time)
        )
    }
}

/// Ten significant digits.
pub fn fmt_f(v: f64) -> String {
    format!("{v:.9e}")
}

/// Error counts accumulated over sectors.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct PointStats {
    pub bits: u64,
    pub bit_errors: u64,
    pub frames: u64,
    pub frame_errors: u64,
    /// Error events, each a run of erroneous columns separated from the
    /// next by at least `nu` clean columns.
    pub events: u64,
    /// Column positions at which an event could start.
    pub positions: u64,
}

impl PointStats {
    pub fn ber(&self) -> f64 {
        ratio(self.bit_errors, self.bits)
    }

    pub fn fer(&self) -> f64 {
        ratio(self.frame_errors, self.frames)
    }

    pub fn event_rate(&self) -> f64 {
        ratio(self.events, self.positions)
    }

    fn add(&mut self, o: &PointStats) {
        self.bits += o.bits;
        self.bit_errors += o.bit_errors;
        self.frames += o.frames;
        self.frame_errors += o.frame_errors;
        self.events += o.events;
        self.positions += o.positions;
    }
}

fn ratio(a: u64, b: u64) -> f64 {
    if b == 0 {
        0.0
    } else {
        a as f64 / b as f64
    }
}

/// Wilson score interval for `k` successes in `n` trials.
pub fn wilson_interval(k: u64, n: u64, z: f64) -> (f64, f64) {
    if n == 0 {
        return (0.0, 1.0);
    }
    let (k, n) = (k as f64, n as f64);
    let p = k / n;
    let z2 = z * z;
    let den = 1.0 + z2 / n;
    let centre = (p + z2 / (2.0 * n)) / den;
    let half = z / den * (p * (1.0 - p) / n + z2 / (4.0 * n * n)).sqrt();
    ((centre - half).max(0.0), (centre + half).min(1.0))
}

/// Counts error events in the column error pattern of `x` against `xhat`.
pub fn count_events(x: &BipolarBlock, xhat: &BipolarBlock, nu: usize) -> u64 {
    let mut events = 0;
    let mut last: Option<usize> = None;
    for k in 0..x.len() {
        if (0..x.n()).any(|i| x.get(i, k) != xhat.get(i, k)) {
            if last.is_none_or(|l| k - l > nu) {
                events += 1;
            }
            last = Some(k);
        }
    }
    events
}

/// Parses `start:stop:step` (inclusive) or a comma-separated list.
pub fn parse_grid(s: &str) -> Result<Vec<f64>> {
    let num = |t: &str| {
        t.trim().parse::<f64>().map_err(|_| Error::InvalidArgument(format!("bad number `{t}` in grid `{s}`")))
    };
    let parts: Vec<&str> = s.split(':').collect();
    match parts.as_slice() {
        [start, stop, step] => {
            let (a, b, d) = (num(start)?, num(stop)?, num(step)?);
            if d.is_nan() || d <= 0.0 || b < a {
                return Err(Error::InvalidArgument(format!("grid `{s}` needs step > 0 and stop >= start")));
            }
            let count = ((b - a) / d + 1e-9).floor() as usize;
            Ok((0..=count).map(|i| a + i as f64 * d).collect())
        }
        [_] => s.split(',').map(num).collect(),
        _ => Err(Error::InvalidArgument(format!("grid `{s}` is neither start:stop:step nor a list"))),
    }
}

/// One simulated operating point.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PointSpec {
    pub detector: DetectorKind,
    pub snr_db: f64,
    /// Offset of the channel ITI from the detector's nominal `eps0`.
    pub delta_eps: f64,
    /// Freeze adaptive gains at their nominal values.
    pub frozen: bool,
}

impl PointSpec {
    pub fn new(detector: DetectorKind, snr_db: f64) -> Self {
        Self { detector, snr_db, delta_eps: 0.0, frozen: false }
    }
}

/// Trellises and parameters shared read-only by every sector of a run.
#[derive(Debug)]
pub struct SimContext {
    cfg: SimConfig,
    joint: Option<TrellisSpec>,
    single: Option<TrellisSpec>,
}

impl SimContext {
    pub fn new(cfg: &SimConfig) -> Result<Self> {
        cfg.validate()?;
        let needs_joint = cfg.detectors.iter().any(|d| !d.is_single_track());
        let needs_single = cfg.detectors.iter().any(|d| d.is_single_track());
        Ok(Self {
            joint: needs_joint.then(|| build_trellis(cfg.n, &cfg.target)).transpose()?,
            single: needs_single.then(|| build_trellis(1, &cfg.target)).transpose()?,
            cfg: cfg.clone(),
        })
    }

    pub fn config(&self) -> &SimConfig {
        &self.cfg
    }

    fn trellis(&self, d: DetectorKind) -> Result<&TrellisSpec> {
        let t = if d.is_single_track() { &self.single } else { &self.joint };
        t.as_ref().ok_or_else(|| Error::Config(format!("detector {d} was not configured")))
    }

    /// Data block of sector `s` and the rng positioned for its noise.
    pub fn sector_data(&self, s: usize) -> (BipolarBlock, ChaCha8Rng) {
        let mut rng = substream(self.cfg.seed, 2 * s as u64);
        let x = BipolarBlock::random(self.cfg.n, self.cfg.sector_len, &mut rng);
        (x, rng)
    }

    /// Noisy readback of sector data under `profile`.
    pub fn readback(&self, x: &BipolarBlock, profile: &ItiProfile, sigma: f64, rng: &ChaCha8Rng) -> ReadbackBlock {
        let len = x.len();
        framed_readback(x, &self.cfg.target, |k| profile.eps_at(k, len), sigma, &mut rng.clone())
    }

    fn training(&self, s: usize, profile: &ItiProfile, sigma: f64) -> (BipolarBlock, ReadbackBlock) {
        let mut rng = substream(self.cfg.seed, 2 * s as u64 + 1);
        let x = BipolarBlock::random(self.cfg.n, self.cfg.training_len, &mut rng);
        let len = self.cfg.sector_len;
        let r = framed_readback(&x, &self.cfg.target, |k| profile.eps_at(k, len), sigma, &mut rng);
        (x, r)
    }

    fn runner(&self, p: &PointSpec) -> Result<Runner<'_>> {
        let t = self.trellis(p.detector)?;
        let eps0 = self.cfg.profile.eps0;
        Ok(match p.detector {
            DetectorKind::Ml => Runner::Static(StaticDetector::ml(t, eps0)?),
            DetectorKind::Wssjd => Runner::Static(StaticDetector::wssjd(t, eps0)?),
            DetectorKind::Ssjd => Runner::Static(StaticDetector::ssjd(t, eps0)?),
            DetectorKind::WssjdAdaptive | DetectorKind::SsjdAdaptive => {
                let params = AdaptiveParams {
                    beta: if p.frozen { 0.0 } else { self.cfg.beta() },
                    delay: self.cfg.delay(),
                    weighted: p.detector == DetectorKind::WssjdAdaptive,
                    record: false,
                };
                Runner::Adaptive(AdaptiveDetector::new(t, params)?)
            }
            DetectorKind::ShstConventional | DetectorKind::ShstItiFree => Runner::Static(StaticDetector::ml(t, 0.0)?),
        })
    }

    fn initial_gains(&self, sys: &EigenSystem, s: usize, channel: &ItiProfile, sigma: f64, frozen: bool) -> Result<Vec<f64>> {
        let init = if frozen { GainInit::Nominal } else { self.cfg.gain_init };
        match init {
            GainInit::Unit => Ok(vec![1.0; self.cfg.n]),
            GainInit::Nominal => sys.inverse_lambda(self.cfg.profile.eps0),
            GainInit::Trained => {
                let t = self.joint.as_ref().expect("adaptive detectors use the joint trellis");
                let (x, r) = self.training(s, channel, sigma);
                trained_gains(t, sys, &x, &r)
            }
        }
    }

    /// Error counts of one sector at one operating point.
    pub fn run_sector(&self, runner: &mut Runner<'_>, p: &PointSpec, s: usize) -> Result<PointStats> {
        let sigma = sigma_from_snr(p.snr_db, &self.cfg.target);
        let channel = if p.detector == DetectorKind::ShstItiFree {
            ItiProfile { eps0: 0.0, kind: crate::channel::ProfileKind::Static }
        } else {
            self.cfg.profile.offset(p.delta_eps)?
        };
        let (x, rng) = self.sector_data(s);
        let r = self.readback(&x, &channel, sigma, &rng);
        let xhat = match runner {
            Runner::Static(d) if p.detector.is_single_track() => d.detect_per_track(&r)?,
            Runner::Static(d) => d.detect(&r)?,
            Runner::Adaptive(d) => {
                let init = self.initial_gains(&d.system().clone(), s, &channel, sigma, p.frozen)?;
                d.detect(&r, &init)?.decisions
            }
        };
        let bit_errors = x.bit_errors(&xhat);
        Ok(PointStats {
            bits: (x.n() * x.len()) as u64,
            bit_errors,
            frames: 1,
            frame_errors: u64::from(bit_errors > 0),
            events: count_events(&x, &xhat, self.cfg.target.memory()),
            positions: x.len() as u64,
        })
    }

    /// Accumulates sectors in index order until the sector cap or the
    /// error target is reached. Deterministic for any pool size.
    pub fn run_point(&self, p: &PointSpec) -> Result<PointStats> {
        self.runner(p)?;
        let mut total = PointStats::default();
        let mut next = 0;
        while next < self.cfg.sectors {
            let end = (next + BATCH).min(self.cfg.sectors);
            let parts: Vec<Result<PointStats>> = (next..end)
                .into_par_iter()
                .map_init(|| self.runner(p).expect("runner validated above"), |r, s| self.run_sector(r, p, s))
                .collect();
            for part in parts {
                total.add(&part?);
            }
            next = end;
            if self.cfg.min_errors.is_some_and(|m| total.bit_errors >= m) {
                break;
            }
        }
        Ok(total)
    }
}

/// Per-worker detector state.
#[derive(Debug)]
pub enum Runner<'t> {
    Static(StaticDetector<'t>),
    Adaptive(AdaptiveDetector<'t>),
}

fn run_points(cfg: &SimConfig, points: &[PointSpec]) -> Result<Vec<ResultRow>> {
    let ctx = SimContext::new(cfg)?;
    cfg.install(|| {
        points
            .iter()
            .map(|p| {
                let start = Instant::now();
                let stats = ctx.run_point(p)?;
                let wall = if cfg.timing { start.elapsed().as_secs_f64() } else { 0.0 };
                Ok(ResultRow::from_stats(p, cfg, &stats, wall))
            })
            .collect()
    })?
}

fn sorted_detectors(cfg: &SimConfig) -> Vec<DetectorKind> {
    let mut d = cfg.detectors.clone();
    d.sort();
    d.dedup();
    d
}

fn sorted_snr(cfg: &SimConfig) -> Vec<f64> {
    let mut s = cfg.snr_db.clone();
    s.sort_by(f64::total_cmp);
    s.dedup();
    s
}

/// BER/FER of every configured detector over the SNR grid, sorted by
/// (detector, SNR).
pub fn run_ber_sweep(cfg: &SimConfig) -> Result<Vec<ResultRow>> {
    let points: Vec<PointSpec> = sorted_detectors(cfg)
        .into_iter()
        .flat_map(|d| sorted_snr(cfg).into_iter().map(move |s| PointSpec::new(d, s)))
        .collect();
    run_points(cfg, &points)
}

/// BER under ITI mismatch: the channel runs at `eps0 + delta` while the
/// detectors keep `eps0` (adaptive gains frozen at their nominal values).
pub fn run_sensitivity_sweep(cfg: &SimConfig, delta_grid: &[f64]) -> Result<Vec<ResultRow>> {
    if !cfg.profile.is_static() {
        return Err(Error::Config("sensitivity sweeps need a static profile".into()));
    }
    if delta_grid.is_empty() {
        return Err(Error::Config("empty offset grid".into()));
    }
    for &d in delta_grid {
        cfg.profile.offset(d)?;
    }
    let mut points = Vec::new();
    for d in sorted_detectors(cfg) {
        for s in sorted_snr(cfg) {
            for &delta_eps in delta_grid {
                points.push(PointSpec { detector: d, snr_db: s, delta_eps, frozen: true });
            }
        }
    }
    run_points(cfg, &points)
}

/// Gain trace of the first adaptive detector in `cfg` (weighted adaptive
/// otherwise) over sector 0 at the first SNR of the grid.
pub fn run_gain_trace(cfg: &SimConfig) -> Result<Vec<GainSample>> {
    let detector = cfg.detectors.iter().copied().find(|d| d.is_adaptive()).unwrap_or(DetectorKind::WssjdAdaptive);
    let cfg = SimConfig { detectors: vec![detector], ..cfg.clone() };
    let ctx = SimContext::new(&cfg)?;
    let t = ctx.trellis(detector)?;
    let params = AdaptiveParams {
        beta: cfg.beta(),
        delay: cfg.delay(),
        weighted: detector == DetectorKind::WssjdAdaptive,
        record: true,
    };
    let mut det = AdaptiveDetector::new(t, params)?;
    let sigma = sigma_from_snr(cfg.snr_db[0], &cfg.target);
    let (x, rng) = ctx.sector_data(0);
    let r = ctx.readback(&x, &cfg.profile, sigma, &rng);
    let init = ctx.initial_gains(&det.system().clone(), 0, &cfg.profile, sigma, false)?;
    Ok(det.detect(&r, &init)?.trace)
}

pub const GAIN_TRACE_HEADER: &str = "k,channel,g,eps_hat";

pub fn gain_trace_line(s: &GainSample) -> String {
    format!("{},{},{},{}", s.k, s.channel, fmt_f(s.g), fmt_f(s.eps_hat))
}

/// Quantities tabulated by [`run_dmin_table`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum DminMode {
    /// Joint ML (equal to weighted eigen-space) search.
    Ml,
    /// Unweighted eigen-space search.
    Ssjd,
    /// Mismatched ML search over the offset grid.
    Mismatch,
    /// Two-track ML closed form.
    MlClosed,
    /// Unweighted eigen-space closed form.
    SsjdClosed,
    ShstOpt,
    ShstConv,
    /// Single track without ITI.
    ItiFree,
}

impl DminMode {
    pub const ALL: [DminMode; 8] = [
        DminMode::Ml,
        DminMode::Ssjd,
        DminMode::Mismatch,
        DminMode::MlClosed,
        DminMode::SsjdClosed,
        DminMode::ShstOpt,
        DminMode::ShstConv,
        DminMode::ItiFree,
    ];

    pub fn name(self) -> &'static str {
        match self {
            DminMode::Ml => "ml",
            DminMode::Ssjd => "ssjd",
            DminMode::Mismatch => "mismatch",
            DminMode::MlClosed => "ml-closed",
            DminMode::SsjdClosed => "ssjd-closed",
            DminMode::ShstOpt => "shst-opt",
            DminMode::ShstConv => "shst-conv",
            DminMode::ItiFree => "iti-free",
        }
    }
}

impl std::str::FromStr for DminMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        DminMode::ALL
            .into_iter()
            .find(|m| m.name() == s.trim())
            .ok_or_else(|| Error::InvalidArgument(format!("unknown distance mode `{s}`")))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DminTable {
    pub n_list: Vec<usize>,
    pub eps_grid: Vec<f64>,
    /// Offsets for [`DminMode::Mismatch`]; other modes ignore it.
    pub delta_grid: Vec<f64>,
    pub modes: Vec<DminMode>,
    pub target: TargetPolynomial,
    /// Per-`n` default when absent.
    pub max_len: Option<usize>,
    pub budget: u64,
}

impl Default for DminTable {
    fn default() -> Self {
        Self {
            n_list: vec![2],
            eps_grid: (0..=10).map(|i| i as f64 * 0.05).collect(),
            delta_grid: vec![0.0],
            modes: vec![DminMode::Ml, DminMode::Ssjd, DminMode::ShstOpt, DminMode::ShstConv],
            target: TargetPolynomial::dicode(),
            max_len: None,
            budget: DEFAULT_BUDGET,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DminRow {
    pub n: usize,
    pub eps: f64,
    pub delta_eps: f64,
    pub mode: DminMode,
    pub d_min_sq: f64,
    /// Empty for closed forms.
    pub event_class: &'static str,
    pub partial: bool,
}

impl DminRow {
    pub const HEADER: &'static str = "n,eps,delta_eps,mode,d_min_sq,event_class";

    pub fn csv_line(&self) -> String {
        format!(
            "{},{},{},{},{},{}",
            self.n,
            fmt_f(self.eps),
            fmt_f(self.delta_eps),
            self.mode.name(),
            fmt_f(self.d_min_sq),
            self.event_class
        )
    }
}

/// Closed forms and searches over `n_list x eps_grid` (and the offset grid
/// for mismatch). Closed forms outside their scope are skipped.
pub fn run_dmin_table(table: &DminTable) -> Result<Vec<DminRow>> {
    let h = &table.target;
    let d0 = d0_search(h, table.max_len.unwrap_or(8).max(8))?;
    let mut rows = Vec::new();
    for &n in &table.n_list {
        let search = DistanceSearch::new(n, h)?
            .max_len(table.max_len.unwrap_or_else(|| default_max_len(n)))
            .budget(table.budget);
        for &eps in &table.eps_grid {
            for &mode in &table.modes {
                let row = |delta_eps, d: f64, class: &'static str, partial| DminRow {
                    n,
                    eps,
                    delta_eps,
                    mode,
                    d_min_sq: d,
                    event_class: class,
                    partial,
                };
                let closed = |kind| closed_form_dmin(kind, eps, d0, h);
                match mode {
                    DminMode::Ml | DminMode::Ssjd => {
                        let r = if mode == DminMode::Ml { search.ml(eps)? } else { search.ssjd(eps)? };
                        rows.push(row(0.0, r.d_squared, r.class.map_or("", |c| c.name()), r.partial));
                    }
                    DminMode::Mismatch => {
                        for &de in &table.delta_grid {
                            if !(0.0..=0.5).contains(&(eps + de)) {
                                continue;
                            }
                            let r = search.mismatch(eps, de)?;
                            rows.push(row(de, r.d_squared, r.class.map_or("", |c| c.name()), r.partial));
                        }
                    }
                    DminMode::MlClosed if n == 2 => rows.push(row(0.0, closed(ClosedForm::Ml2h2t)?, "", false)),
                    DminMode::SsjdClosed if n == 2 => rows.push(row(0.0, closed(ClosedForm::Ssjd)?, "", false)),
                    DminMode::ShstOpt => rows.push(row(0.0, closed(ClosedForm::ShstOptimal)?, "", false)),
                    DminMode::ShstConv if h.is_dicode() => {
                        rows.push(row(0.0, closed(ClosedForm::ShstConventional)?, "", false))
                    }
                    DminMode::ItiFree => rows.push(row(0.0, d0, "", false)),
                    _ => {}
                }
            }
        }
    }
    Ok(rows)
}

/// Writes a header and lines as LF-terminated UTF-8.
pub fn write_csv<W: Write, I: IntoIterator<Item = String>>(mut w: W, header: &str, lines: I) -> std::io::Result<()> {
    writeln!(w, "{header}")?;
    for l in lines {
        writeln!(w, "{l}")?;
    }
    w.flush()
}
