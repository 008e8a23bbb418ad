//! Joint-state trellis for `n` tracks sharing a target of memory `nu`.
//!
//! A state holds the last `nu` input bits of every track. Bits are stored as
//! `b = (x + 1) / 2`, packed track-major: track `i` occupies bits
//! `[i * nu, (i + 1) * nu)` with its newest symbol in the least significant
//! position of that field. An input vector `u` packs bit `i` as track `i`'s
//! new symbol.
//!
//! Branches are indexed `b = state * 2^n + u`, so the predecessor and input of
//! a branch are recovered with a shift and a mask. For `nu = 0` there is one
//! state and `2^n` parallel self-loops.
//!
//! Every sector is framed by `nu` all-`+1` columns so that detection starts in
//! the all-ones state; see [`frame`] and [`framed_readback`].

use rand::Rng;

use crate::channel::{add_noise, mix, noiseless_readback, BipolarBlock, ReadbackBlock};
use crate::eigen::EigenSystem;
use crate::error::{check_eps, Error, Result};
use crate::signal::TargetPolynomial;

/// Largest supported `n * nu`.
pub const MAX_STATE_BITS: usize = 24;

#[derive(Debug, Clone)]
pub struct TrellisSpec {
    n: usize,
    nu: usize,
    target: TargetPolynomial,
    next: Vec<u32>,
    /// Per-track ISI outputs, `n` per branch.
    isi: Vec<f64>,
    /// `2^n` incoming branch indices per state, sorted by predecessor.
    incoming: Vec<u32>,
}

impl TrellisSpec {
    pub fn build(n: usize, h: &TargetPolynomial) -> Result<Self> {
        if n == 0 {
            return Err(Error::InvalidArgument("track count must be >= 1".into()));
        }
        let nu = h.memory();
        let bits = n * nu;
        if bits > MAX_STATE_BITS || n > 16 {
            return Err(Error::TrellisTooLarge(bits));
        }
        let states = 1usize << bits;
        let inputs = 1usize << n;
        let branches = states * inputs;
        let track_mask = (1usize << nu) - 1;
        let taps = h.coeffs();

        let mut next = vec![0u32; branches];
        let mut isi = vec![0.0; branches * n];
        for s in 0..states {
            for u in 0..inputs {
                let b = s * inputs + u;
                let mut succ = 0usize;
                for i in 0..n {
                    let hist = (s >> (i * nu)) & track_mask;
                    let bit = (u >> i) & 1;
                    let mut w = taps[0] * sym(bit);
                    for (m, &hm) in taps.iter().enumerate().skip(1) {
                        w += hm * sym((hist >> (m - 1)) & 1);
                    }
                    isi[b * n + i] = w;
                    succ |= (((hist << 1) | bit) & track_mask) << (i * nu);
                }
                next[b] = succ as u32;
            }
        }

        // Branches are generated in increasing predecessor order, so a stable
        // bucket fill leaves each incoming list sorted.
        let mut fill = vec![0usize; states];
        let mut incoming = vec![0u32; branches];
        for (b, &t) in next.iter().enumerate() {
            let t = t as usize;
            incoming[t * inputs + fill[t]] = b as u32;
            fill[t] += 1;
        }
        debug_assert!(fill.iter().all(|&f| f == inputs));

        Ok(Self { n, nu, target: h.clone(), next, isi, incoming })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn nu(&self) -> usize {
        self.nu
    }

    pub fn target(&self) -> &TargetPolynomial {
        &self.target
    }

    pub fn state_count(&self) -> usize {
        1 << (self.n * self.nu)
    }

    pub fn inputs_per_state(&self) -> usize {
        1 << self.n
    }

    pub fn branch_count(&self) -> usize {
        self.next.len()
    }

    /// State entered after the all-`+1` preamble.
    pub fn initial_state(&self) -> usize {
        self.state_count() - 1
    }

    #[inline]
    pub fn next_state(&self, branch: usize) -> usize {
        self.next[branch] as usize
    }

    #[inline]
    pub fn predecessor(&self, branch: usize) -> usize {
        branch >> self.n
    }

    #[inline]
    pub fn input(&self, branch: usize) -> usize {
        branch & (self.inputs_per_state() - 1)
    }

    /// Bipolar symbol written on `track` by `branch`.
    #[inline]
    pub fn input_symbol(&self, branch: usize, track: usize) -> i8 {
        if (branch >> track) & 1 == 1 {
            1
        } else {
            -1
        }
    }

    #[inline]
    pub fn isi_label(&self, branch: usize) -> &[f64] {
        &self.isi[branch * self.n..(branch + 1) * self.n]
    }

    /// Incoming branches of `state`, sorted by predecessor index.
    #[inline]
    pub fn incoming(&self, state: usize) -> &[u32] {
        let k = self.inputs_per_state();
        &self.incoming[state * k..(state + 1) * k]
    }

    /// Branch leaving `state` with input column `col`.
    pub fn branch_for(&self, state: usize, col: &[i8]) -> usize {
        let u = col.iter().enumerate().fold(0usize, |acc, (i, &x)| acc | (usize::from(x > 0) << i));
        state * self.inputs_per_state() + u
    }
}

pub fn build_trellis(n: usize, h: &TargetPolynomial) -> Result<TrellisSpec> {
    TrellisSpec::build(n, h)
}

#[inline]
fn sym(bit: usize) -> f64 {
    if bit == 1 {
        1.0
    } else {
        -1.0
    }
}

/// Noiseless output vector per branch, `dim` reals each.
#[derive(Debug, Clone, PartialEq)]
pub struct BranchLabels {
    dim: usize,
    values: Vec<f64>,
}

impl BranchLabels {
    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.values.len() / self.dim
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    #[inline]
    pub fn get(&self, branch: usize) -> &[f64] {
        &self.values[branch * self.dim..(branch + 1) * self.dim]
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.values
    }
}

/// Raw-space labels `A_n(eps0) w`.
pub fn ml_labels(t: &TrellisSpec, eps0: f64) -> Result<BranchLabels> {
    check_eps(eps0)?;
    let n = t.n();
    let mut values = vec![0.0; t.isi.len()];
    for (w, out) in t.isi.chunks_exact(n).zip(values.chunks_exact_mut(n)) {
        mix(eps0, w, out);
    }
    Ok(BranchLabels { dim: n, values })
}

/// Eigen-space labels `V^T w`; the same for every ITI level.
pub fn wssjd_labels(t: &TrellisSpec, sys: &EigenSystem) -> Result<BranchLabels> {
    let n = t.n();
    if sys.n() != n {
        return Err(Error::DimensionMismatch { expected: n, found: sys.n() });
    }
    let mut values = vec![0.0; t.isi.len()];
    for (w, out) in t.isi.chunks_exact(n).zip(values.chunks_exact_mut(n)) {
        sys.project(w, out);
    }
    Ok(BranchLabels { dim: n, values })
}

/// Prepends `nu` all-`+1` preamble columns.
pub fn frame(x: &BipolarBlock, nu: usize) -> BipolarBlock {
    let rows = x
        .tracks()
        .iter()
        .map(|t| {
            let mut row = vec![1i8; nu];
            row.extend_from_slice(t.symbols());
            row
        })
        .collect();
    BipolarBlock::from_rows_unchecked(rows)
}

/// Readback samples aligned with the data columns of a framed sector.
///
/// `x` is written after the preamble; the returned block holds the `len(x)`
/// outputs whose newest input is a data column (the ISI tail is dropped).
/// `eps_at(k)` gives the ITI level at data position `k`, and noise is drawn
/// only for the returned samples.
pub fn framed_readback<F, R>(x: &BipolarBlock, h: &TargetPolynomial, eps_at: F, sigma: f64, rng: &mut R) -> ReadbackBlock
where
    F: Fn(usize) -> f64,
    R: Rng + ?Sized,
{
    let nu = h.memory();
    let len = x.len();
    let framed = frame(x, nu);
    let full = noiseless_readback(&framed, h, |p| eps_at(p.saturating_sub(nu).min(len.saturating_sub(1))));
    let mut y = full.window(nu, len);
    add_noise(&mut y, sigma, rng);
    y
}
