//! Band energies and even pair potentials on the momentum grid.

use crate::error::{Error, Result};
use crate::grid::MomentumGrid;
use crate::scalar::Real;

/// Single-particle band energy `ε(p)` sampled on a momentum grid.
///
/// The default is the nearest-neighbor band `ε(p) = −Σ_a cos p_a`, which is
/// even; custom bands are accepted as long as they are finite.
#[derive(Debug, Clone)]
pub struct Dispersion<T> {
    grid: MomentumGrid,
    eps: Vec<T>,
}

impl<T: Real> Dispersion<T> {
    /// Nearest-neighbor band `ε(p) = −Σ_a cos p_a`.
    pub fn cosine(grid: &MomentumGrid) -> Self {
        Self::from_fn(grid, |p| {
            let mut e = -p[0].cos();
            if grid.dim() == 2 {
                e = e - p[1].cos();
            }
            e
        })
    }

    /// Samples an arbitrary band from a momentum-space function.
    pub fn from_fn(grid: &MomentumGrid, f: impl Fn([T; 2]) -> T) -> Self {
        let eps = grid.indices().map(|j| f(grid.momentum(j))).collect();
        Self { grid: *grid, eps }
    }

    /// Wraps precomputed band values; rejects length mismatches and
    /// non-finite entries.
    pub fn from_values(grid: &MomentumGrid, eps: Vec<T>) -> Result<Self> {
        if eps.len() != grid.len() {
            return Err(Error::Contract(format!(
                "band values: expected {} entries, got {}",
                grid.len(),
                eps.len()
            )));
        }
        if eps.iter().any(|e| !e.is_finite()) {
            return Err(Error::Numerical("band values contain non-finite entries".into()));
        }
        Ok(Self { grid: *grid, eps })
    }

    /// The grid the band is sampled on.
    #[inline]
    pub fn grid(&self) -> &MomentumGrid {
        &self.grid
    }

    /// All band values, indexed by flattened grid index.
    #[inline]
    pub fn values(&self) -> &[T] {
        &self.eps
    }

    /// Band value at a flattened grid index.
    #[inline]
    pub fn value(&self, idx: usize) -> T {
        self.eps[idx]
    }

    /// Minimum and maximum band values.
    pub fn range(&self) -> (T, T) {
        let mut lo = self.eps[0];
        let mut hi = self.eps[0];
        for &e in &self.eps {
            if e < lo {
                lo = e;
            }
            if e > hi {
                hi = e;
            }
        }
        (lo, hi)
    }

    /// Whether the band is even, `ε(−p) = ε(p)`, within `tol`.
    pub fn is_even(&self, tol: T) -> bool {
        self.grid
            .indices()
            .all(|j| (self.eps[j] - self.eps[self.grid.negate(j)]).abs() <= tol)
    }
}

/// Even, real pair potential `v(q)` sampled on the momentum-difference grid.
///
/// Evenness (`v(q) = v(−q)`) is the hermiticity requirement of the two-body
/// interaction; constructors enforce it exactly by symmetrizing sampled
/// values over `q ↔ −q`.
#[derive(Debug, Clone)]
pub struct PairPotential<T> {
    grid: MomentumGrid,
    v: Vec<T>,
}

impl<T: Real> PairPotential<T> {
    /// Short-range cosine potential `v(q) = Σ_a cos q_a`.
    pub fn cosine(grid: &MomentumGrid) -> Self {
        Self::from_fn(grid, |q| {
            let mut v = q[0].cos();
            if grid.dim() == 2 {
                v = v + q[1].cos();
            }
            v
        })
    }

    /// Constant potential; its antisymmetrized matrix elements vanish.
    pub fn constant(grid: &MomentumGrid, c: T) -> Self {
        Self { grid: *grid, v: vec![c; grid.len()] }
    }

    /// Samples a potential and symmetrizes it exactly over `q ↔ −q`.
    pub fn from_fn(grid: &MomentumGrid, f: impl Fn([T; 2]) -> T) -> Self {
        let raw: Vec<T> = grid.indices().map(|j| f(grid.momentum(j))).collect();
        let half = T::lit(0.5);
        let v = grid
            .indices()
            .map(|j| half * (raw[j] + raw[grid.negate(j)]))
            .collect();
        Self { grid: *grid, v }
    }

    /// Wraps precomputed values; rejects uneven or non-finite data.
    pub fn from_values(grid: &MomentumGrid, v: Vec<T>) -> Result<Self> {
        if v.len() != grid.len() {
            return Err(Error::Contract(format!(
                "potential values: expected {} entries, got {}",
                grid.len(),
                v.len()
            )));
        }
        if v.iter().any(|x| !x.is_finite()) {
            return Err(Error::Numerical("potential values contain non-finite entries".into()));
        }
        let tol = T::lit(1e-10);
        for j in grid.indices() {
            if (v[j] - v[grid.negate(j)]).abs() > tol {
                return Err(Error::Config(
                    "pair potential must be even: v(q) = v(−q)".into(),
                ));
            }
        }
        Ok(Self { grid: *grid, v })
    }

    /// The grid the potential is sampled on.
    #[inline]
    pub fn grid(&self) -> &MomentumGrid {
        &self.grid
    }

    /// Potential value at the grid index of a momentum difference.
    #[inline]
    pub fn value(&self, diff_idx: usize) -> T {
        self.v[diff_idx]
    }

    /// `v(p_a − p_b)` for flattened momentum indices `a`, `b`.
    #[inline]
    pub fn at_difference(&self, a: usize, b: usize) -> T {
        self.v[self.grid.diff(a, b)]
    }

    /// All sampled values.
    #[inline]
    pub fn values(&self) -> &[T] {
        &self.v
    }

    /// Largest absolute value, used for weight bounds.
    pub fn max_abs(&self) -> T {
        self.v.iter().fold(T::zero(), |acc, x| acc.max(x.abs()))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn cosine_band_is_even_and_centered() {
        let g = MomentumGrid::new(2, 16).unwrap();
        let b: Dispersion<f64> = Dispersion::cosine(&g);
        assert!(b.is_even(1e-14));
        // Cosine sums over the full grid vanish.
        let total: f64 = b.values().iter().sum();
        assert!(total.abs() < 1e-12);
        let (lo, hi) = b.range();
        assert!((lo + 2.0).abs() < 1e-14 && (hi - 2.0).abs() < 1e-14);
    }

    #[test]
    fn potentials_are_exactly_even() {
        let g = MomentumGrid::new(1, 8).unwrap();
        let v: PairPotential<f64> =
            PairPotential::from_fn(&g, |q: [f64; 2]| q[0].cos() + 0.3 * (2.0 * q[0]).cos());
        for j in g.indices() {
            assert_eq!(v.value(j), v.value(g.negate(j)));
        }
    }

    #[test]
    fn uneven_values_are_rejected() {
        let g = MomentumGrid::new(1, 4).unwrap();
        let bad = vec![0.0, 1.0, 0.0, 0.5];
        assert!(PairPotential::<f64>::from_values(&g, bad).is_err());
    }
}
