//! Closed-form eigendecomposition of the interference matrix.
//!
//! `A_n = I + eps T_n` shares its eigenvectors with `T_n`, whose spectrum is
//! known in closed form:
//!
//! ```text
//! lambda_hat_k = 2 cos(k pi / (n + 1))
//! v_jk         = sqrt(2 / (n + 1)) sin(j k pi / (n + 1))      (1-based j, k)
//! ```
//!
//! so `A_n = V (I + eps Lambda_hat) V^T` with `V` independent of `eps`.
//! Rotating the head outputs by `V^T` and scaling channel `j` by
//! `1 / (1 + eps lambda_hat_j)` turns the coupled channel into `n` parallel
//! ISI channels with inputs `V^T x` and noise variance `sigma^2 / lambda_j^2`.
//!
//! All transforms here use the orthonormal `V`, including `n = 2`. The
//! classic sum/difference signals `z+ = x_a + x_b`, `z- = x_a - x_b` are the
//! transformed inputs scaled by `sqrt(2)`.

use crate::channel::{BipolarBlock, ReadbackBlock};
use crate::error::{Error, Result};
use crate::signal::RealSequence;

/// Entries smaller than this are exact zeros of the closed form.
const SNAP: f64 = 1e-14;

/// Threshold below which `1 + eps lambda_hat_j` is treated as singular.
pub const SINGULAR_TOL: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq)]
pub struct EigenSystem {
    n: usize,
    /// Row-major `n x n`; `v[j * n + k]` is component `j` of eigenvector `k`.
    v: Vec<f64>,
    lambda_hat: Vec<f64>,
}

impl EigenSystem {
    pub fn new(n: usize) -> Result<Self> {
        if n == 0 {
            return Err(Error::InvalidArgument("track count must be >= 1".into()));
        }
        let denom = (n + 1) as f64;
        let scale = (2.0 / denom).sqrt();
        let snap = |x: f64| if x.abs() < SNAP { 0.0 } else { x };
        let mut v = vec![0.0; n * n];
        for j in 0..n {
            for k in 0..n {
                let angle = ((j + 1) * (k + 1)) as f64 * std::f64::consts::PI / denom;
                v[j * n + k] = snap(scale * angle.sin());
            }
        }
        let lambda_hat = (1..=n)
            .map(|k| snap(2.0 * (k as f64 * std::f64::consts::PI / denom).cos()))
            .collect();
        Ok(Self { n, v, lambda_hat })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    /// Component `j` of eigenvector `k` (0-based).
    pub fn v(&self, j: usize, k: usize) -> f64 {
        self.v[j * self.n + k]
    }

    /// Eigenvalues of the neighbour-sum matrix, strictly decreasing.
    pub fn lambda_hat(&self) -> &[f64] {
        &self.lambda_hat
    }

    /// Eigenvalues of `A_n(eps)`: `1 + eps lambda_hat_k`.
    pub fn lambda(&self, eps: f64) -> Vec<f64> {
        self.lambda_hat.iter().map(|l| 1.0 + eps * l).collect()
    }

    /// `lambda_j^2`, the optimal per-channel metric weights.
    pub fn weights(&self, eps: f64) -> Vec<f64> {
        self.lambda(eps).into_iter().map(|l| l * l).collect()
    }

    /// `1 / lambda_j`, rejecting a (numerically) singular transform.
    pub fn inverse_lambda(&self, eps: f64) -> Result<Vec<f64>> {
        self.lambda(eps)
            .into_iter()
            .map(|l| if l.abs() < SINGULAR_TOL { Err(Error::SingularTransform(l)) } else { Ok(1.0 / l) })
            .collect()
    }

    /// `out = V^T x`.
    #[inline]
    pub fn project(&self, x: &[f64], out: &mut [f64]) {
        let n = self.n;
        for (k, o) in out.iter_mut().enumerate().take(n) {
            let mut acc = 0.0;
            for (j, &xj) in x.iter().enumerate().take(n) {
                acc += self.v[j * n + k] * xj;
            }
            *o = acc;
        }
    }

    /// `out = V xbar`.
    #[inline]
    pub fn unproject(&self, xbar: &[f64], out: &mut [f64]) {
        let n = self.n;
        for (j, o) in out.iter_mut().enumerate().take(n) {
            *o = (0..n).map(|k| self.v[j * n + k] * xbar[k]).sum();
        }
    }

    /// Dense `V diag(1 + eps lambda_hat) V^T`.
    pub fn reconstruct(&self, eps: f64) -> Vec<Vec<f64>> {
        let n = self.n;
        let lambda = self.lambda(eps);
        (0..n)
            .map(|i| {
                (0..n)
                    .map(|j| (0..n).map(|k| self.v(i, k) * lambda[k] * self.v(j, k)).sum())
                    .collect()
            })
            .collect()
    }
}

pub fn toeplitz_eigen(n: usize) -> Result<EigenSystem> {
    EigenSystem::new(n)
}

/// `n` parallel sample streams in eigen-coordinates, with per-channel weights.
#[derive(Debug, Clone, PartialEq)]
pub struct TransformedBlock {
    pub channels: Vec<RealSequence>,
    pub weights: Vec<f64>,
}

impl TransformedBlock {
    pub fn into_readback(self) -> ReadbackBlock {
        ReadbackBlock::new(self.channels).expect("transformed channels have equal length")
    }
}

/// `xbar = V^T x` per position (unit weights).
pub fn transform_inputs(x: &BipolarBlock, sys: &EigenSystem) -> Result<TransformedBlock> {
    if x.n() != sys.n() {
        return Err(Error::DimensionMismatch { expected: sys.n(), found: x.n() });
    }
    let n = sys.n();
    let len = x.len();
    let mut rows = vec![vec![0.0; len]; n];
    let mut col = vec![0.0; n];
    let mut out = vec![0.0; n];
    for k in 0..len {
        for (i, c) in col.iter_mut().enumerate() {
            *c = f64::from(x.get(i, k));
        }
        sys.project(&col, &mut out);
        for (row, &v) in rows.iter_mut().zip(&out) {
            row[k] = v;
        }
    }
    Ok(TransformedBlock {
        channels: rows.into_iter().map(RealSequence::from_vec_unchecked).collect(),
        weights: vec![1.0; n],
    })
}

/// `rbar = Lambda(eps0)^-1 V^T r` per position; weights `lambda_j(eps0)^2`.
pub fn transform_outputs(r: &ReadbackBlock, sys: &EigenSystem, eps0: f64) -> Result<TransformedBlock> {
    if r.n() != sys.n() {
        return Err(Error::DimensionMismatch { expected: sys.n(), found: r.n() });
    }
    let inv = sys.inverse_lambda(eps0)?;
    let n = sys.n();
    let len = r.len();
    let mut rows = vec![vec![0.0; len]; n];
    let mut col = vec![0.0; n];
    let mut out = vec![0.0; n];
    for k in 0..len {
        r.column_into(k, &mut col);
        sys.project(&col, &mut out);
        for (row, (o, il)) in rows.iter_mut().zip(out.iter().zip(&inv)) {
            row[k] = o * il;
        }
    }
    Ok(TransformedBlock {
        channels: rows.into_iter().map(RealSequence::from_vec_unchecked).collect(),
        weights: sys.weights(eps0),
    })
}

/// Distinct values of `sum_i v_ij x_i` over all `x` in `{-1, +1}^n`, ascending.
pub fn channel_alphabet(sys: &EigenSystem, j: usize) -> Result<Vec<f64>> {
    let n = sys.n();
    if j >= n {
        return Err(Error::InvalidArgument(format!("channel index {j} out of range for n = {n}")));
    }
    if n > 20 {
        return Err(Error::InvalidArgument("alphabet enumeration limited to n <= 20".into()));
    }
    let mut values: Vec<f64> = (0..1u32 << n)
        .map(|bits| {
            (0..n)
                .map(|i| {
                    let x = if bits >> i & 1 == 1 { 1.0 } else { -1.0 };
                    sys.v(i, j) * x
                })
                .sum()
        })
        .collect();
    values.sort_by(|a, b| a.total_cmp(b));
    values.dedup_by(|a, b| (*a - *b).abs() < 1e-12);
    Ok(values)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::channel::{interference_matrix, noiseless_readback, add_noise};
    use crate::signal::{convolve, substream, TargetPolynomial};

    const S2: f64 = std::f64::consts::SQRT_2;

    fn max_abs_diff(a: &[Vec<f64>], b: &[Vec<f64>]) -> f64 {
        a.iter()
            .zip(b)
            .flat_map(|(r, s)| r.iter().zip(s).map(|(x, y)| (x - y).abs()))
            .fold(0.0, f64::max)
    }

    #[test]
    fn reconstruction_and_orthogonality() {
        for n in 1..=8 {
            let sys = toeplitz_eigen(n).unwrap();
            for step in 0..=5 {
                let eps = step as f64 * 0.1;
                let a = interference_matrix(n, eps).unwrap().to_dense();
                assert!(max_abs_diff(&sys.reconstruct(eps), &a) <= 1e-12, "n={n} eps={eps}");
            }
            let vtv: Vec<Vec<f64>> = (0..n)
                .map(|i| (0..n).map(|j| (0..n).map(|k| sys.v(k, i) * sys.v(k, j)).sum()).collect())
                .collect();
            let eye: Vec<Vec<f64>> =
                (0..n).map(|i| (0..n).map(|j| if i == j { 1.0 } else { 0.0 }).collect()).collect();
            assert!(max_abs_diff(&vtv, &eye) <= 1e-12);
            assert!(sys.lambda_hat().windows(2).all(|w| w[0] > w[1]));
        }
    }

    #[test]
    fn two_track_closed_form() {
        let sys = toeplitz_eigen(2).unwrap();
        let eps = 0.3;
        let l = sys.lambda(eps);
        assert!((l[0] - 1.3).abs() < 1e-15 && (l[1] - 0.7).abs() < 1e-15);
        let h = S2 / 2.0;
        for (j, k, expect) in [(0, 0, h), (0, 1, h), (1, 0, h), (1, 1, -h)] {
            assert!((sys.v(j, k) - expect).abs() < 1e-15);
        }
    }

    #[test]
    fn three_track_closed_form() {
        let sys = toeplitz_eigen(3).unwrap();
        assert!((sys.lambda_hat()[0] - S2).abs() < 1e-15);
        assert_eq!(sys.lambda_hat()[1], 0.0);
        assert!((sys.lambda_hat()[2] + S2).abs() < 1e-15);
        let row: Vec<f64> = (0..3).map(|k| sys.v(1, k)).collect();
        assert!((row[0] - S2 / 2.0).abs() < 1e-15);
        assert_eq!(row[1], 0.0);
        assert!((row[2] + S2 / 2.0).abs() < 1e-15);
        let expect = [[0.5, S2 / 2.0, 0.5], [S2 / 2.0, 0.0, -S2 / 2.0], [0.5, -S2 / 2.0, 0.5]];
        for j in 0..3 {
            for k in 0..3 {
                assert!((sys.v(j, k) - expect[j][k]).abs() < 1e-15);
            }
        }
    }

    #[test]
    fn input_transform_examples() {
        let sys2 = toeplitz_eigen(2).unwrap();
        let x = BipolarBlock::from_rows(vec![vec![1, 1], vec![-1, 1]]).unwrap();
        let t = transform_inputs(&x, &sys2).unwrap();
        assert!(t.channels[0][0].abs() < 1e-15 && (t.channels[1][0] - S2).abs() < 1e-15);
        assert!((t.channels[0][1] - S2).abs() < 1e-15 && t.channels[1][1].abs() < 1e-15);

        // n = 3 against a plain matrix-vector product.
        let sys3 = toeplitz_eigen(3).unwrap();
        let x = BipolarBlock::from_rows(vec![vec![1], vec![1], vec![1]]).unwrap();
        let t = transform_inputs(&x, &sys3).unwrap();
        let expect = [[0.5, S2 / 2.0, 0.5], [S2 / 2.0, 0.0, -S2 / 2.0], [0.5, -S2 / 2.0, 0.5]];
        for k in 0..3 {
            let direct: f64 = (0..3).map(|j| expect[j][k]).sum();
            assert!((t.channels[k][0] - direct).abs() < 1e-15);
        }
    }

    #[test]
    fn round_trip_recovers_inputs() {
        let mut rng = substream(4, 4);
        for n in 1..=6 {
            let sys = toeplitz_eigen(n).unwrap();
            let x = BipolarBlock::random(n, 20, &mut rng);
            let t = transform_inputs(&x, &sys).unwrap();
            let mut col = vec![0.0; n];
            let mut back = vec![0.0; n];
            for k in 0..20 {
                for j in 0..n {
                    col[j] = t.channels[j][k];
                }
                sys.unproject(&col, &mut back);
                for i in 0..n {
                    assert_eq!(back[i].round() as i8, x.get(i, k));
                    assert!((back[i] - f64::from(x.get(i, k))).abs() < 1e-12);
                }
            }
        }
    }

    #[test]
    fn sum_difference_relation() {
        // (xbar_1, xbar_2) = (sqrt(2)/2) (z+, z-) for every row of the mapping table.
        let sys = toeplitz_eigen(2).unwrap();
        for (xa, xb, zp, zm) in [(1, 1, 2.0, 0.0), (1, -1, 0.0, 2.0), (-1, 1, 0.0, -2.0), (-1, -1, -2.0, 0.0)] {
            let x = BipolarBlock::from_rows(vec![vec![xa], vec![xb]]).unwrap();
            let t = transform_inputs(&x, &sys).unwrap();
            assert!((t.channels[0][0] - zp * S2 / 2.0).abs() < 1e-15);
            assert!((t.channels[1][0] - zm * S2 / 2.0).abs() < 1e-15);
        }
    }

    #[test]
    fn output_transform_examples() {
        let sys = toeplitz_eigen(2).unwrap();
        let r = ReadbackBlock::from_rows(vec![vec![2.0], vec![0.0]]).unwrap();
        let t = transform_outputs(&r, &sys, 0.0).unwrap();
        assert!((t.channels[0][0] - S2).abs() < 1e-15 && (t.channels[1][0] - S2).abs() < 1e-15);
        assert_eq!(t.weights, vec![1.0, 1.0]);
    }

    #[test]
    fn noiseless_output_transform_is_parallel_isi() {
        let h = TargetPolynomial::epr4();
        let mut rng = substream(5, 5);
        for n in 1..=5 {
            let sys = toeplitz_eigen(n).unwrap();
            for eps in [0.1, 0.3, 0.5] {
                let x = BipolarBlock::random(n, 100, &mut rng);
                let r = noiseless_readback(&x, &h, |_| eps);
                let rbar = transform_outputs(&r, &sys, eps).unwrap();
                let xbar = transform_inputs(&x, &sys).unwrap();
                for j in 0..n {
                    let expect = convolve(&xbar.channels[j], &h);
                    for k in 0..expect.len() {
                        assert!((rbar.channels[j][k] - expect[k]).abs() <= 1e-12);
                    }
                }
            }
        }
    }

    #[test]
    fn transformed_noise_powers_and_independence() {
        let sys = toeplitz_eigen(3).unwrap();
        let (eps, sigma, len) = (0.3, 0.1, 1_000_000);
        let mut r = ReadbackBlock::from_rows(vec![vec![0.0; len]; 3]).unwrap();
        add_noise(&mut r, sigma, &mut substream(6, 0));
        let t = transform_outputs(&r, &sys, eps).unwrap();
        let lambda = sys.lambda(eps);
        let var = |c: &[f64]| c.iter().map(|v| v * v).sum::<f64>() / c.len() as f64;
        for j in 0..3 {
            let expect = sigma * sigma / (lambda[j] * lambda[j]);
            let got = var(&t.channels[j]);
            assert!((got / expect - 1.0).abs() < 0.02, "channel {j}: {got} vs {expect}");
        }
        for a in 0..3 {
            for b in a + 1..3 {
                let cross: f64 = t.channels[a].iter().zip(t.channels[b].iter()).map(|(x, y)| x * y).sum::<f64>()
                    / len as f64;
                let corr = cross / (var(&t.channels[a]) * var(&t.channels[b])).sqrt();
                assert!(corr.abs() < 0.01, "corr({a},{b}) = {corr}");
            }
        }
    }

    #[test]
    fn alphabets() {
        let sys2 = toeplitz_eigen(2).unwrap();
        for j in 0..2 {
            let a = channel_alphabet(&sys2, j).unwrap();
            assert_eq!(a.len(), 3);
            assert!((a[0] + S2).abs() < 1e-12 && a[1].abs() < 1e-12 && (a[2] - S2).abs() < 1e-12);
        }
        let sys3 = toeplitz_eigen(3).unwrap();
        let a = channel_alphabet(&sys3, 1).unwrap();
        assert_eq!(a.len(), 3);
        assert!((a[0] + S2).abs() < 1e-12 && a[1].abs() < 1e-12 && (a[2] - S2).abs() < 1e-12);
        assert!(channel_alphabet(&sys3, 3).is_err());
    }

    #[test]
    fn singular_transform_rejected() {
        let sys = toeplitz_eigen(2).unwrap();
        let r = ReadbackBlock::from_rows(vec![vec![1.0], vec![1.0]]).unwrap();
        assert!(matches!(transform_outputs(&r, &sys, 1.0), Err(Error::SingularTransform(_))));
    }
}
