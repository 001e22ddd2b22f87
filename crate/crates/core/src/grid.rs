//! Discretized momentum torus with exact index arithmetic.
//!
//! Momenta live on a uniform grid over `[−π, π)^ν` with an even number of
//! points per axis, `p_j = −π + 2πj/n`. Because `n` is even, the grid is
//! closed under addition, negation, and subtraction modulo `2π`, so momentum
//! conservation is resolvable exactly in index arithmetic: the condition
//! `p_k + p_l ≡ p_m + p_p (mod 2π)` is equivalent to
//! `k + l ≡ m + p (mod n)` per axis.

use crate::error::{Error, Result};
use crate::scalar::Real;

/// Maximum points per axis.
pub const MAX_POINTS_PER_AXIS: usize = 1024;

/// Uniform momentum grid on `[−π, π)^ν`, `ν ∈ {1, 2}`, `n` even.
///
/// Grid points are flattened into a single index `0 .. n^ν`; for `ν = 2`
/// the first axis varies fastest (`idx = j1·n + j0`). All index arithmetic
/// is exact; the floating representation of a momentum is derived, never
/// authoritative.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct MomentumGrid {
    dim: usize,
    n: usize,
    len: usize,
}

impl MomentumGrid {
    /// Builds a grid with `dim ∈ {1, 2}` and even `4 ≤ n ≤ 1024` points per
    /// axis.
    pub fn new(dim: usize, n: usize) -> Result<Self> {
        if !(dim == 1 || dim == 2) {
            return Err(Error::Config(format!(
                "unsupported dimension {dim}: only 1 and 2 are available"
            )));
        }
        if n % 2 != 0 {
            return Err(Error::Config(format!(
                "points per axis must be even for exact momentum closure, got {n}"
            )));
        }
        if !(4..=MAX_POINTS_PER_AXIS).contains(&n) {
            return Err(Error::Config(format!(
                "points per axis must lie in [4, {MAX_POINTS_PER_AXIS}], got {n}"
            )));
        }
        let len = n.pow(dim as u32);
        Ok(Self { dim, n, len })
    }

    /// Spatial dimension ν.
    #[inline]
    pub fn dim(&self) -> usize {
        self.dim
    }

    /// Points per axis n.
    #[inline]
    pub fn points_per_axis(&self) -> usize {
        self.n
    }

    /// Total number of grid points `n^ν`.
    #[inline]
    pub fn len(&self) -> usize {
        self.len
    }

    /// Always false: a valid grid has at least 4 points.
    #[inline]
    pub fn is_empty(&self) -> bool {
        false
    }

    /// Normalized cell weight `(1/n)^ν`, the discrete momentum measure.
    #[inline]
    pub fn cell_weight<T: Real>(&self) -> T {
        T::one() / T::count(self.len)
    }

    /// Iterator over all flattened indices.
    #[inline]
    pub fn indices(&self) -> std::ops::Range<usize> {
        0..self.len
    }

    /// Splits a flattened index into per-axis indices (second entry 0 in 1D).
    #[inline]
    pub fn axes(&self, idx: usize) -> [usize; 2] {
        debug_assert!(idx < self.len);
        if self.dim == 1 {
            [idx, 0]
        } else {
            [idx % self.n, idx / self.n]
        }
    }

    /// Flattens per-axis indices.
    #[inline]
    pub fn flatten(&self, axes: [usize; 2]) -> usize {
        debug_assert!(axes[0] < self.n && (self.dim == 2 || axes[1] == 0));
        if self.dim == 1 {
            axes[0]
        } else {
            axes[1] * self.n + axes[0]
        }
    }

    /// Axis momentum `p_j = −π + 2πj/n`.
    #[inline]
    pub fn axis_momentum<T: Real>(&self, j: usize) -> T {
        let two_pi = T::PI() + T::PI();
        -T::PI() + two_pi * T::count(j) / T::count(self.n)
    }

    /// Momentum vector of a flattened index (second component 0 in 1D).
    #[inline]
    pub fn momentum<T: Real>(&self, idx: usize) -> [T; 2] {
        let ax = self.axes(idx);
        if self.dim == 1 {
            [self.axis_momentum(ax[0]), T::zero()]
        } else {
            [self.axis_momentum(ax[0]), self.axis_momentum(ax[1])]
        }
    }

    #[inline]
    fn axis_add(&self, a: usize, b: usize) -> usize {
        (a + b + self.n / 2) % self.n
    }

    #[inline]
    fn axis_neg(&self, a: usize) -> usize {
        (self.n - a) % self.n
    }

    #[inline]
    fn axis_diff(&self, a: usize, b: usize) -> usize {
        (a + self.n + self.n / 2 - b) % self.n
    }

    #[inline]
    fn axis_fourth(&self, k: usize, m: usize, p: usize) -> usize {
        (m + p + self.n - k) % self.n
    }

    /// Index of `p_a + p_b` reduced into the torus.
    #[inline]
    pub fn add(&self, a: usize, b: usize) -> usize {
        let (xa, xb) = (self.axes(a), self.axes(b));
        self.flatten([
            self.axis_add(xa[0], xb[0]),
            if self.dim == 2 { self.axis_add(xa[1], xb[1]) } else { 0 },
        ])
    }

    /// Index of `−p_a` reduced into the torus.
    #[inline]
    pub fn negate(&self, a: usize) -> usize {
        let xa = self.axes(a);
        self.flatten([
            self.axis_neg(xa[0]),
            if self.dim == 2 { self.axis_neg(xa[1]) } else { 0 },
        ])
    }

    /// Index of `p_a − p_b` reduced into the torus.
    #[inline]
    pub fn diff(&self, a: usize, b: usize) -> usize {
        let (xa, xb) = (self.axes(a), self.axes(b));
        self.flatten([
            self.axis_diff(xa[0], xb[0]),
            if self.dim == 2 { self.axis_diff(xa[1], xb[1]) } else { 0 },
        ])
    }

    /// The unique fourth index `l` with `p_k + p_l ≡ p_m + p_p (mod 2π)`.
    #[inline]
    pub fn fourth_on_shell(&self, k: usize, m: usize, p: usize) -> usize {
        let (xk, xm, xp) = (self.axes(k), self.axes(m), self.axes(p));
        self.flatten([
            self.axis_fourth(xk[0], xm[0], xp[0]),
            if self.dim == 2 { self.axis_fourth(xk[1], xm[1], xp[1]) } else { 0 },
        ])
    }

    /// Whether `p_k + p_l ≡ p_m + p_p (mod 2π)` holds exactly.
    #[inline]
    pub fn is_on_shell(&self, k: usize, l: usize, m: usize, p: usize) -> bool {
        self.fourth_on_shell(k, m, p) == l
    }

    /// Reduces a signed per-axis displacement to the canonical torus
    /// coordinate in `0..n`.
    #[inline]
    pub fn wrap_coord(&self, x: i64) -> usize {
        let n = self.n as i64;
        (((x % n) + n) % n) as usize
    }

    /// Minimal-image representative of a signed displacement, in
    /// `(−n/2, n/2]`.
    #[inline]
    pub fn minimal_image(&self, x: i64) -> i64 {
        let n = self.n as i64;
        let r = ((x % n) + n) % n;
        if r > n / 2 {
            r - n
        } else {
            r
        }
    }

    /// Flattened site index for a signed lattice vector (torus wraparound).
    #[inline]
    pub fn site(&self, x: [i64; 2]) -> usize {
        self.flatten([
            self.wrap_coord(x[0]),
            if self.dim == 2 { self.wrap_coord(x[1]) } else { 0 },
        ])
    }

    /// Signed coordinates of a flattened site index, in `0..n` per axis.
    #[inline]
    pub fn site_coords(&self, idx: usize) -> [i64; 2] {
        let ax = self.axes(idx);
        [ax[0] as i64, ax[1] as i64]
    }

    /// Phase `p_j · x` for a flattened momentum index and a signed lattice
    /// vector.
    #[inline]
    pub fn phase<T: Real>(&self, j: usize, x: [i64; 2]) -> T {
        let p = self.momentum::<T>(j);
        let mut acc = p[0] * T::lit(x[0] as f64);
        if self.dim == 2 {
            acc = acc + p[1] * T::lit(x[1] as f64);
        }
        acc
    }

    /// Errors unless `other` is the same grid.
    pub fn ensure_same(&self, other: &MomentumGrid, what: &str) -> Result<()> {
        if self == other {
            Ok(())
        } else {
            Err(Error::Contract(format!(
                "{what}: grid mismatch (ν={}, n={} vs ν={}, n={})",
                self.dim, self.n, other.dim, other.n
            )))
        }
    }
}
