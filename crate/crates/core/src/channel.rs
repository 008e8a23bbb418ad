//! The n-head/n-track read channel.
//!
//! Each head sees its own track through the target `h(D)` plus a fraction
//! `eps` of each adjacent track:
//!
//! ```text
//! R(D) = A_n X(D) h(D) + noise,   A_n = I + eps * T_n
//! ```
//!
//! where `T_n` has ones on the first off-diagonals. Tracks at the band edge
//! only have one neighbour. A spatially varying ITI level is applied per
//! output position: `y_k = A_n(eps(k)) w_k`, with `w_k` the vector of
//! per-track ISI outputs at `k`.

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{check_eps, Error, Result};
use crate::signal::{convolve, BipolarSequence, NoiseSpec, RealSequence, TargetPolynomial};

/// Symmetric tridiagonal Toeplitz interference matrix `A_n`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct InterferenceMatrix {
    n: usize,
    eps: f64,
}

impl InterferenceMatrix {
    pub fn n(&self) -> usize {
        self.n
    }

    pub fn eps(&self) -> f64 {
        self.eps
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        assert!(i < self.n && j < self.n);
        if i == j {
            1.0
        } else if i.abs_diff(j) == 1 {
            self.eps
        } else {
            0.0
        }
    }

    pub fn to_dense(&self) -> Vec<Vec<f64>> {
        (0..self.n).map(|i| (0..self.n).map(|j| self.get(i, j)).collect()).collect()
    }

    /// `out = A_n w`.
    pub fn apply(&self, w: &[f64], out: &mut [f64]) {
        mix(self.eps, w, out);
    }
}

pub fn interference_matrix(n: usize, eps: f64) -> Result<InterferenceMatrix> {
    if n == 0 {
        return Err(Error::InvalidArgument("track count must be >= 1".into()));
    }
    check_eps(eps)?;
    Ok(InterferenceMatrix { n, eps })
}

/// `out = (I + eps T_n) w` without building the matrix.
#[inline]
pub(crate) fn mix(eps: f64, w: &[f64], out: &mut [f64]) {
    let n = w.len();
    debug_assert_eq!(out.len(), n);
    for i in 0..n {
        let mut v = w[i];
        if i > 0 {
            v += eps * w[i - 1];
        }
        if i + 1 < n {
            v += eps * w[i + 1];
        }
        out[i] = v;
    }
}

/// `out = T_n w` (neighbour sum).
#[inline]
pub(crate) fn neighbour_sum(w: &[f64], out: &mut [f64]) {
    let n = w.len();
    for i in 0..n {
        let mut v = 0.0;
        if i > 0 {
            v += w[i - 1];
        }
        if i + 1 < n {
            v += w[i + 1];
        }
        out[i] = v;
    }
}

/// Shape of the ITI level along a sector.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum ProfileKind {
    Static,
    /// `eps(k) = eps0 + amplitude * sin(2 pi cycles k / N)`.
    Sinusoidal { amplitude: f64, cycles: f64 },
}

/// Per-position ITI level `eps(k)` for a sector of `N` positions.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ItiProfile {
    pub eps0: f64,
    #[serde(flatten)]
    pub kind: ProfileKind,
}

impl ItiProfile {
    pub const DEFAULT_AMPLITUDE: f64 = 0.1;
    pub const DEFAULT_CYCLES: f64 = 2.0;

    pub fn constant(eps0: f64) -> Result<Self> {
        check_eps(eps0)?;
        Ok(Self { eps0, kind: ProfileKind::Static })
    }

    /// Sinusoid with the default amplitude 0.1 and two cycles per sector.
    pub fn sinusoidal(eps0: f64) -> Result<Self> {
        Self::sinusoidal_with(eps0, Self::DEFAULT_AMPLITUDE, Self::DEFAULT_CYCLES)
    }

    pub fn sinusoidal_with(eps0: f64, amplitude: f64, cycles: f64) -> Result<Self> {
        let p = Self { eps0, kind: ProfileKind::Sinusoidal { amplitude, cycles } };
        p.validate()?;
        Ok(p)
    }

    pub fn is_static(&self) -> bool {
        matches!(self.kind, ProfileKind::Static)
    }

    /// Same shape shifted by `delta` (the true channel under a mismatch run).
    pub fn offset(&self, delta: f64) -> Result<Self> {
        let p = Self { eps0: self.eps0 + delta, kind: self.kind };
        p.validate()?;
        Ok(p)
    }

    /// Checks that every `eps(k)` stays inside `[0, 0.5]`.
    pub fn validate(&self) -> Result<()> {
        match self.kind {
            ProfileKind::Static => check_eps(self.eps0).map(|_| ()),
            ProfileKind::Sinusoidal { amplitude, cycles } => {
                if !amplitude.is_finite() || !cycles.is_finite() || amplitude < 0.0 {
                    return Err(Error::InvalidArgument("sinusoidal amplitude/cycles must be finite, amplitude >= 0".into()));
                }
                check_eps(self.eps0 - amplitude)?;
                check_eps(self.eps0 + amplitude)?;
                Ok(())
            }
        }
    }

    /// ITI level at position `k` of a sector with `len` positions.
    pub fn eps_at(&self, k: usize, len: usize) -> f64 {
        match self.kind {
            ProfileKind::Static => self.eps0,
            ProfileKind::Sinusoidal { amplitude, cycles } => {
                let phase = 2.0 * std::f64::consts::PI * cycles * (k as f64) / (len as f64);
                self.eps0 + amplitude * phase.sin()
            }
        }
    }
}

/// `n` equal-length bipolar tracks.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BipolarBlock {
    tracks: Vec<BipolarSequence>,
}

impl BipolarBlock {
    pub fn new(tracks: Vec<BipolarSequence>) -> Result<Self> {
        let first = tracks.first().ok_or_else(|| Error::InvalidArgument("block needs at least one track".into()))?;
        let len = first.len();
        for t in &tracks {
            if t.len() != len {
                return Err(Error::DimensionMismatch { expected: len, found: t.len() });
            }
        }
        Ok(Self { tracks })
    }

    pub fn from_rows(rows: Vec<Vec<i8>>) -> Result<Self> {
        Self::new(rows.into_iter().map(BipolarSequence::new).collect::<Result<_>>()?)
    }

    pub fn random<R: Rng + ?Sized>(n: usize, len: usize, rng: &mut R) -> Self {
        Self { tracks: (0..n).map(|_| BipolarSequence::random(len, rng)).collect() }
    }

    pub(crate) fn from_rows_unchecked(rows: Vec<Vec<i8>>) -> Self {
        Self { tracks: rows.into_iter().map(BipolarSequence::from_vec_unchecked).collect() }
    }

    pub fn n(&self) -> usize {
        self.tracks.len()
    }

    pub fn len(&self) -> usize {
        self.tracks[0].len()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn tracks(&self) -> &[BipolarSequence] {
        &self.tracks
    }

    pub fn track(&self, i: usize) -> &BipolarSequence {
        &self.tracks[i]
    }

    pub fn get(&self, track: usize, k: usize) -> i8 {
        self.tracks[track][k]
    }

    /// Number of positions where the two blocks disagree, summed over tracks.
    pub fn bit_errors(&self, other: &BipolarBlock) -> u64 {
        assert_eq!(self.n(), other.n());
        assert_eq!(self.len(), other.len());
        self.tracks
            .iter()
            .zip(&other.tracks)
            .map(|(a, b)| a.iter().zip(b.iter()).filter(|(x, y)| x != y).count() as u64)
            .sum()
    }
}

/// `n` equal-length real sample streams, one per head (or per transformed channel).
#[derive(Debug, Clone, PartialEq, Default)]
pub struct ReadbackBlock {
    channels: Vec<RealSequence>,
}

impl ReadbackBlock {
    pub fn new(channels: Vec<RealSequence>) -> Result<Self> {
        let first = channels.first().ok_or_else(|| Error::InvalidArgument("block needs at least one channel".into()))?;
        let len = first.len();
        for c in &channels {
            if c.len() != len {
                return Err(Error::DimensionMismatch { expected: len, found: c.len() });
            }
        }
        Ok(Self { channels })
    }

    pub fn from_rows(rows: Vec<Vec<f64>>) -> Result<Self> {
        Self::new(rows.into_iter().map(RealSequence::new).collect::<Result<_>>()?)
    }

    pub(crate) fn from_rows_unchecked(rows: Vec<Vec<f64>>) -> Self {
        Self { channels: rows.into_iter().map(RealSequence::from_vec_unchecked).collect() }
    }

    pub fn n(&self) -> usize {
        self.channels.len()
    }

    pub fn len(&self) -> usize {
        self.channels[0].len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn channels(&self) -> &[RealSequence] {
        &self.channels
    }

    pub fn channel(&self, j: usize) -> &RealSequence {
        &self.channels[j]
    }

    pub fn get(&self, j: usize, k: usize) -> f64 {
        self.channels[j][k]
    }

    /// Copies column `k` into `out`.
    #[inline]
    pub fn column_into(&self, k: usize, out: &mut [f64]) {
        for (o, c) in out.iter_mut().zip(&self.channels) {
            *o = c[k];
        }
    }

    /// Sub-block of positions `start..start + len` on every channel.
    pub fn window(&self, start: usize, len: usize) -> ReadbackBlock {
        Self {
            channels: self
                .channels
                .iter()
                .map(|c| RealSequence::from_vec_unchecked(c[start..start + len].to_vec()))
                .collect(),
        }
    }
}

/// Per-track ISI outputs `w^i = x^i * h`, each of length `N + nu`.
pub fn isi_outputs(x: &BipolarBlock, h: &TargetPolynomial) -> Vec<RealSequence> {
    x.tracks().iter().map(|t| convolve(&t.to_real(), h)).collect()
}

/// Noiseless readback with the ITI level `eps_at(k)` applied at output position `k`.
pub fn noiseless_readback<F>(x: &BipolarBlock, h: &TargetPolynomial, eps_at: F) -> ReadbackBlock
where
    F: Fn(usize) -> f64,
{
    let w = isi_outputs(x, h);
    let n = x.n();
    let len = w[0].len();
    let mut rows = vec![vec![0.0; len]; n];
    let mut col = vec![0.0; n];
    let mut mixed = vec![0.0; n];
    for k in 0..len {
        for (c, wi) in col.iter_mut().zip(&w) {
            *c = wi[k];
        }
        mix(eps_at(k), &col, &mut mixed);
        for (row, &v) in rows.iter_mut().zip(&mixed) {
            row[k] = v;
        }
    }
    ReadbackBlock::from_rows_unchecked(rows)
}

/// Adds independent noise to every channel, track by track from `rng`.
pub fn add_noise<R: Rng + ?Sized>(y: &mut ReadbackBlock, sigma: f64, rng: &mut R) {
    if sigma == 0.0 {
        return;
    }
    for c in &mut y.channels {
        for v in c.samples_mut() {
            let z: f64 = rng.sample(StandardNormal);
            *v += sigma * z;
        }
    }
}

/// Noisy readback of `x` under `profile`; positions past the written data
/// (the ISI tail) reuse the last position's ITI level.
pub fn readback<R: Rng + ?Sized>(
    x: &BipolarBlock,
    h: &TargetPolynomial,
    profile: &ItiProfile,
    noise: &NoiseSpec,
    rng: &mut R,
) -> Result<ReadbackBlock> {
    profile.validate()?;
    let len = x.len();
    let mut y = noiseless_readback(x, h, |k| profile.eps_at(k.min(len - 1), len));
    add_noise(&mut y, noise.sigma, rng);
    Ok(y)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::signal::substream;

    #[test]
    fn matrix_entries() {
        let a = interference_matrix(2, 0.3).unwrap();
        assert_eq!(a.to_dense(), vec![vec![1.0, 0.3], vec![0.3, 1.0]]);
        let a = interference_matrix(3, 0.0).unwrap();
        assert_eq!(a.to_dense(), vec![vec![1.0, 0.0, 0.0], vec![0.0, 1.0, 0.0], vec![0.0, 0.0, 1.0]]);
        let a = interference_matrix(4, 0.5).unwrap();
        assert_eq!(a.to_dense()[1], vec![0.5, 1.0, 0.5, 0.0]);
        assert!(matches!(interference_matrix(2, 0.6), Err(Error::EpsOutOfRange(_))));
        assert!(matches!(interference_matrix(2, -0.1), Err(Error::EpsOutOfRange(_))));
        assert!(interference_matrix(0, 0.1).is_err());
    }

    #[test]
    fn matrix_is_identity_plus_scaled_neighbour_sum() {
        for n in 1..=6 {
            for eps in [0.0, 0.17, 0.5] {
                let a = interference_matrix(n, eps).unwrap();
                for i in 0..n {
                    let mut e = vec![0.0; n];
                    e[i] = 1.0;
                    let mut t = vec![0.0; n];
                    neighbour_sum(&e, &mut t);
                    for j in 0..n {
                        let expect = if i == j { 1.0 } else { 0.0 } + eps * t[j];
                        assert_eq!(a.get(j, i), expect);
                    }
                    let row_sum: f64 = (0..n).map(|j| a.get(i, j)).sum();
                    assert!((1.0..=1.0 + 2.0 * eps).contains(&row_sum));
                }
            }
        }
    }

    #[test]
    fn two_track_examples() {
        let h1 = TargetPolynomial::new(vec![1.0]).unwrap();
        let x = BipolarBlock::from_rows(vec![vec![1], vec![-1]]).unwrap();
        let y = noiseless_readback(&x, &h1, |_| 0.2);
        assert!((y.get(0, 0) - 0.8).abs() < 1e-15);
        assert!((y.get(1, 0) + 0.8).abs() < 1e-15);

        let h = TargetPolynomial::dicode();
        let mut rng = substream(1, 0);
        let x = BipolarBlock::random(3, 50, &mut rng);
        let y = noiseless_readback(&x, &h, |_| 0.0);
        for i in 0..3 {
            assert_eq!(y.channel(i).samples(), convolve(&x.track(i).to_real(), &h).samples());
        }

        let a = BipolarSequence::random(40, &mut rng);
        let x = BipolarBlock::new(vec![a.clone(), a.clone()]).unwrap();
        let y = noiseless_readback(&x, &h, |_| 0.5);
        let single = convolve(&a.to_real(), &h);
        for k in 0..single.len() {
            assert_eq!(y.get(0, k), 1.5 * single[k]);
            assert_eq!(y.get(1, k), 1.5 * single[k]);
        }
    }

    #[test]
    fn static_readback_matches_two_line_formula() {
        let h = TargetPolynomial::epr4();
        let eps = 0.27;
        let mut rng = substream(9, 1);
        let x = BipolarBlock::random(2, 200, &mut rng);
        let profile = ItiProfile::constant(eps).unwrap();
        let noise = NoiseSpec::new(0.0, 0).unwrap();
        let y = readback(&x, &h, &profile, &noise, &mut rng).unwrap();
        let xa = convolve(&x.track(0).to_real(), &h);
        let xb = convolve(&x.track(1).to_real(), &h);
        for k in 0..xa.len() {
            assert_eq!(y.get(0, k), xa[k] + eps * xb[k]);
            assert_eq!(y.get(1, k), eps * xa[k] + xb[k]);
        }
    }

    #[test]
    fn sinusoidal_profile() {
        let n = 4096;
        let p = ItiProfile::sinusoidal(0.1).unwrap();
        assert!((p.eps_at(n / 8, n) - 0.2).abs() < 1e-15);
        let mean = (0..n).map(|k| p.eps_at(k, n)).sum::<f64>() / n as f64;
        assert!((mean - 0.1).abs() <= 1e-12, "mean {mean}");
        assert!(ItiProfile::sinusoidal(0.45).is_err());
        assert!(p.offset(0.5).is_err());
        assert!(ItiProfile::constant(0.1).unwrap().offset(0.05).is_ok());
    }

    #[test]
    fn noise_uncorrelated_across_tracks() {
        let len = 1_000_000;
        let x = BipolarBlock::from_rows(vec![vec![1; len], vec![-1; len]]).unwrap();
        let h = TargetPolynomial::new(vec![1.0]).unwrap();
        let profile = ItiProfile::constant(0.2).unwrap();
        let noise = NoiseSpec::new(0.1, 11).unwrap();
        let clean = noiseless_readback(&x, &h, |_| 0.2);
        let y = readback(&x, &h, &profile, &noise, &mut noise.stream(0)).unwrap();
        let (mut saa, mut sbb, mut sab) = (0.0, 0.0, 0.0);
        for k in 0..len {
            let a = y.get(0, k) - clean.get(0, k);
            let b = y.get(1, k) - clean.get(1, k);
            saa += a * a;
            sbb += b * b;
            sab += a * b;
        }
        let corr = sab / (saa * sbb).sqrt();
        assert!(corr.abs() <= 0.005, "corr {corr}");
    }

    #[test]
    fn zero_sigma_readback_is_noiseless() {
        let h = TargetPolynomial::dicode();
        let mut rng = substream(2, 2);
        let x = BipolarBlock::random(2, 64, &mut rng);
        let p = ItiProfile::sinusoidal(0.2).unwrap();
        let y = readback(&x, &h, &p, &NoiseSpec::new(0.0, 0).unwrap(), &mut rng).unwrap();
        let z = noiseless_readback(&x, &h, |k| p.eps_at(k.min(63), 64));
        assert_eq!(y, z);
    }

    #[test]
    fn block_validation() {
        assert!(BipolarBlock::from_rows(vec![vec![1, 1], vec![1]]).is_err());
        assert!(ReadbackBlock::from_rows(vec![vec![0.0], vec![f64::NAN]]).is_err());
        let a = BipolarBlock::from_rows(vec![vec![1, -1, 1], vec![1, 1, 1]]).unwrap();
        let b = BipolarBlock::from_rows(vec![vec![1, 1, 1], vec![-1, 1, -1]]).unwrap();
        assert_eq!(a.bit_errors(&b), 3);
    }
}
