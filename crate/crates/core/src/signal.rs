//! Elementary sequence types shared by every other module: bipolar data,
//! target polynomials, real-valued sample streams, AWGN and SNR bookkeeping.
//!
//! All arithmetic is `f64`. Randomness always comes from an explicit
//! generator so that every sample stream is reproducible from a
//! `(seed, stream index)` pair; see [`substream`].

use std::fmt;
use std::ops::Deref;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// A recorded track: symbols in {-1, +1}.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct BipolarSequence(Vec<i8>);

impl BipolarSequence {
    pub fn new(symbols: Vec<i8>) -> Result<Self> {
        if symbols.is_empty() {
            return Err(Error::InvalidArgument("bipolar sequence must be nonempty".into()));
        }
        if let Some(&bad) = symbols.iter().find(|&&s| s != 1 && s != -1) {
            return Err(Error::InvalidArgument(format!("bipolar symbol {bad} not in {{-1, +1}}")));
        }
        Ok(Self(symbols))
    }

    /// Draws `len` equiprobable symbols.
    pub fn random<R: Rng + ?Sized>(len: usize, rng: &mut R) -> Self {
        assert!(len > 0, "bipolar sequence must be nonempty");
        Self((0..len).map(|_| if rng.gen::<bool>() { 1 } else { -1 }).collect())
    }

    pub fn symbols(&self) -> &[i8] {
        &self.0
    }

    pub fn to_real(&self) -> Vec<f64> {
        self.0.iter().map(|&s| f64::from(s)).collect()
    }

    pub(crate) fn from_vec_unchecked(symbols: Vec<i8>) -> Self {
        debug_assert!(symbols.iter().all(|&s| s == 1 || s == -1));
        Self(symbols)
    }
}

impl Deref for BipolarSequence {
    type Target = [i8];
    fn deref(&self) -> &[i8] {
        &self.0
    }
}

/// Equalized target response `h(D) = h_0 + h_1 D + ... + h_nu D^nu`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<f64>", into = "Vec<f64>")]
pub struct TargetPolynomial {
    coeffs: Vec<f64>,
}

impl TargetPolynomial {
    pub fn new(coeffs: Vec<f64>) -> Result<Self> {
        if coeffs.is_empty() {
            return Err(Error::InvalidArgument("target needs at least one tap".into()));
        }
        if coeffs.iter().any(|c| !c.is_finite()) {
            return Err(Error::InvalidArgument("target taps must be finite".into()));
        }
        if coeffs[0] == 0.0 {
            return Err(Error::InvalidArgument("leading tap h_0 must be nonzero".into()));
        }
        Ok(Self { coeffs })
    }

    /// `1 + D`.
    pub fn dicode() -> Self {
        Self { coeffs: vec![1.0, 1.0] }
    }

    /// `1 + D - D^2 - D^3`.
    pub fn epr4() -> Self {
        Self { coeffs: vec![1.0, 1.0, -1.0, -1.0] }
    }

    pub fn coeffs(&self) -> &[f64] {
        &self.coeffs
    }

    /// Channel memory (taps - 1).
    pub fn memory(&self) -> usize {
        self.coeffs.len() - 1
    }

    pub fn norm_sq(&self) -> f64 {
        self.coeffs.iter().map(|c| c * c).sum()
    }

    /// `M_h = sum |h_m|`.
    pub fn abs_sum(&self) -> f64 {
        self.coeffs.iter().map(|c| c.abs()).sum()
    }

    pub fn is_dicode(&self) -> bool {
        self.coeffs == [1.0, 1.0]
    }
}

impl TryFrom<Vec<f64>> for TargetPolynomial {
    type Error = Error;
    fn try_from(coeffs: Vec<f64>) -> Result<Self> {
        Self::new(coeffs)
    }
}

impl From<TargetPolynomial> for Vec<f64> {
    fn from(h: TargetPolynomial) -> Self {
        h.coeffs
    }
}

/// Accepts `dicode`, `epr4` or `taps=h0,h1,...`.
impl FromStr for TargetPolynomial {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "dicode" => Ok(Self::dicode()),
            "epr4" => Ok(Self::epr4()),
            other => {
                let taps = other.strip_prefix("taps=").ok_or_else(|| {
                    Error::InvalidArgument(format!("unknown target {other:?}; use dicode, epr4 or taps=h0,h1,..."))
                })?;
                let coeffs = taps
                    .split(',')
                    .map(|t| {
                        t.trim()
                            .parse::<f64>()
                            .map_err(|e| Error::InvalidArgument(format!("bad tap {t:?}: {e}")))
                    })
                    .collect::<Result<Vec<_>>>()?;
                Self::new(coeffs)
            }
        }
    }
}

impl fmt::Display for TargetPolynomial {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.is_dicode() {
            return f.write_str("dicode");
        }
        if self.coeffs == [1.0, 1.0, -1.0, -1.0] {
            return f.write_str("epr4");
        }
        let taps: Vec<String> = self.coeffs.iter().map(|c| c.to_string()).collect();
        write!(f, "taps={}", taps.join(","))
    }
}

/// A finite real-valued sample stream.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct RealSequence(Vec<f64>);

impl RealSequence {
    pub fn new(samples: Vec<f64>) -> Result<Self> {
        if samples.iter().any(|s| !s.is_finite()) {
            return Err(Error::InvalidArgument("samples must be finite".into()));
        }
        Ok(Self(samples))
    }

    pub(crate) fn from_vec_unchecked(samples: Vec<f64>) -> Self {
        Self(samples)
    }

    pub fn samples(&self) -> &[f64] {
        &self.0
    }

    pub(crate) fn samples_mut(&mut self) -> &mut [f64] {
        &mut self.0
    }

    pub fn into_inner(self) -> Vec<f64> {
        self.0
    }
}

impl Deref for RealSequence {
    type Target = [f64];
    fn deref(&self) -> &[f64] {
        &self.0
    }
}

/// Per-sample Gaussian noise level plus the master seed it is drawn from.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NoiseSpec {
    pub sigma: f64,
    pub seed: u64,
}

impl NoiseSpec {
    pub fn new(sigma: f64, seed: u64) -> Result<Self> {
        if !(sigma >= 0.0 && sigma.is_finite()) {
            return Err(Error::InvalidArgument(format!("noise sigma {sigma} must be >= 0")));
        }
        Ok(Self { sigma, seed })
    }

    pub fn from_snr(snr_db: f64, h: &TargetPolynomial, seed: u64) -> Self {
        Self { sigma: sigma_from_snr(snr_db, h), seed }
    }

    /// Generator for stream `index` of this spec's seed.
    pub fn stream(&self, index: u64) -> ChaCha8Rng {
        substream(self.seed, index)
    }
}

/// Independent, reproducible generator for `(seed, index)`.
///
/// ChaCha's 64-bit stream selector gives each index its own keystream, so
/// sector `i` of a Monte Carlo run is identical no matter which worker
/// produces it or in what order.
pub fn substream(seed: u64, index: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index);
    rng
}

/// Full linear convolution of `x` with `h`; output length `len(x) + nu`.
pub fn convolve(x: &[f64], h: &TargetPolynomial) -> RealSequence {
    let taps = h.coeffs();
    let mut out = vec![0.0; x.len() + taps.len() - 1];
    for (k, &xk) in x.iter().enumerate() {
        if xk == 0.0 {
            continue;
        }
        for (m, &hm) in taps.iter().enumerate() {
            out[k + m] += hm * xk;
        }
    }
    RealSequence(out)
}

/// Adds i.i.d. `N(0, sigma^2)` samples drawn from `rng`.
pub fn awgn<R: Rng + ?Sized>(y: &RealSequence, spec: &NoiseSpec, rng: &mut R) -> RealSequence {
    if spec.sigma == 0.0 {
        return y.clone();
    }
    RealSequence(
        y.iter()
            .map(|&v| {
                let z: f64 = rng.sample(StandardNormal);
                v + spec.sigma * z
            })
            .collect(),
    )
}

/// Inverts `SNR(dB) = 10 log10(||h||^2 / (2 sigma^2))`.
pub fn sigma_from_snr(snr_db: f64, h: &TargetPolynomial) -> f64 {
    (h.norm_sq() / (2.0 * 10f64.powf(snr_db / 10.0))).sqrt()
}

pub fn snr_from_sigma(sigma: f64, h: &TargetPolynomial) -> f64 {
    10.0 * (h.norm_sq() / (2.0 * sigma * sigma)).log10()
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use proptest::prelude::*;
    use rand::Rng;

    #[test]
    fn convolve_dicode() {
        let y = convolve(&[1.0, 1.0, -1.0, -1.0], &TargetPolynomial::dicode());
        assert_eq!(y.samples(), &[1.0, 2.0, 0.0, -2.0, -1.0]);
    }

    #[test]
    fn impulse_reproduces_target() {
        let y = convolve(&[1.0], &TargetPolynomial::epr4());
        assert_eq!(y.samples(), &[1.0, 1.0, -1.0, -1.0]);
        let z = convolve(&[0.0; 3], &TargetPolynomial::epr4());
        assert!(z.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn zero_sigma_is_identity() {
        let y = RealSequence::new(vec![0.5, -1.5, 2.0]).unwrap();
        let spec = NoiseSpec::new(0.0, 1).unwrap();
        assert_eq!(awgn(&y, &spec, &mut spec.stream(0)), y);
    }

    #[test]
    fn noise_statistics() {
        let y = RealSequence::new(vec![0.0; 1_000_000]).unwrap();
        let spec = NoiseSpec::new(0.1, 7).unwrap();
        let r = awgn(&y, &spec, &mut spec.stream(3));
        let n = r.len() as f64;
        let mean = r.iter().sum::<f64>() / n;
        let var = r.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
        assert!((0.0098..=0.0102).contains(&var), "variance {var}");
        assert!(mean.abs() <= 4.0 * 0.1 / 1000.0, "mean {mean}");
    }

    #[test]
    fn same_seed_same_noise() {
        let y = RealSequence::new(vec![0.0; 64]).unwrap();
        let spec = NoiseSpec::new(0.3, 42).unwrap();
        let a = awgn(&y, &spec, &mut spec.stream(5));
        let b = awgn(&y, &spec, &mut spec.stream(5));
        let c = awgn(&y, &spec, &mut spec.stream(6));
        assert_eq!(a, b);
        assert_ne!(a, c);
    }

    #[test]
    fn snr_conversion() {
        let s = sigma_from_snr(10.0, &TargetPolynomial::dicode());
        assert_relative_eq!(s * s, 0.1, epsilon = 1e-15);
        let s = sigma_from_snr(0.0, &TargetPolynomial::dicode());
        assert_relative_eq!(s * s, 1.0, epsilon = 1e-15);
        let s = sigma_from_snr(10.0, &TargetPolynomial::epr4());
        assert_relative_eq!(s * s, 0.2, epsilon = 1e-15);
    }

    #[test]
    fn target_parsing() {
        assert_eq!("dicode".parse::<TargetPolynomial>().unwrap(), TargetPolynomial::dicode());
        assert_eq!("epr4".parse::<TargetPolynomial>().unwrap(), TargetPolynomial::epr4());
        let h: TargetPolynomial = "taps=1,0.5,-0.25".parse().unwrap();
        assert_eq!(h.coeffs(), &[1.0, 0.5, -0.25]);
        assert_eq!(h.memory(), 2);
        assert!("taps=0,1".parse::<TargetPolynomial>().is_err());
        assert!("pr2".parse::<TargetPolynomial>().is_err());
        assert_eq!(TargetPolynomial::epr4().to_string(), "epr4");
    }

    #[test]
    fn rejects_non_bipolar() {
        assert!(BipolarSequence::new(vec![1, 0, -1]).is_err());
        assert!(BipolarSequence::new(vec![]).is_err());
        assert!(BipolarSequence::new(vec![1, -1]).is_ok());
    }

    proptest! {
        #[test]
        fn convolve_is_linear(
            x in prop::collection::vec(-4.0f64..4.0, 1..40),
            z_seed in any::<u64>(),
            a in -3.0f64..3.0,
            b in -3.0f64..3.0,
        ) {
            let mut rng = substream(z_seed, 0);
            let z: Vec<f64> = (0..x.len()).map(|_| rng.gen_range(-4.0..4.0)).collect();
            let h = TargetPolynomial::new(vec![1.0, 0.7, -0.3, -0.9]).unwrap();
            let mixed: Vec<f64> = x.iter().zip(&z).map(|(p, q)| a * p + b * q).collect();
            let lhs = convolve(&mixed, &h);
            let cx = convolve(&x, &h);
            let cz = convolve(&z, &h);
            for k in 0..lhs.len() {
                prop_assert!((lhs[k] - (a * cx[k] + b * cz[k])).abs() <= 1e-12);
            }
        }

        #[test]
        fn snr_round_trip(snr in -20.0f64..40.0) {
            let h = TargetPolynomial::epr4();
            let back = snr_from_sigma(sigma_from_snr(snr, &h), &h);
            prop_assert!((back - snr).abs() <= 1e-12);
        }
    }
}
