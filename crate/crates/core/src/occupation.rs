//! Momentum occupation functions and their scalar functionals.

use crate::band::Dispersion;
use crate::error::{Error, Result};
use crate::grid::MomentumGrid;
use crate::scalar::{cis, czero, Real, C};

/// Budget guard for the dense torus transforms (`len²` work).
const MAX_TRANSFORM_POINTS: usize = 4096;

/// Occupation function `w(p) ∈ [0, 1]` on a momentum grid.
#[derive(Debug, Clone, PartialEq)]
pub struct Occupation<T> {
    grid: MomentumGrid,
    w: Vec<T>,
}

impl<T: Real> Occupation<T> {
    /// Wraps raw values, enforcing `w ∈ [0, 1]` componentwise.
    pub fn new(grid: &MomentumGrid, w: Vec<T>) -> Result<Self> {
        if w.len() != grid.len() {
            return Err(Error::Contract(format!(
                "occupation: expected {} entries, got {}",
                grid.len(),
                w.len()
            )));
        }
        for (j, &x) in w.iter().enumerate() {
            if !x.is_finite() {
                return Err(Error::Numerical(format!("occupation entry {j} is not finite")));
            }
            if x < T::zero() || x > T::one() {
                return Err(Error::Contract(format!(
                    "occupation entry {j} = {x} outside [0, 1]"
                )));
            }
        }
        Ok(Self { grid: *grid, w })
    }

    /// Constant occupation `w ≡ c`.
    pub fn constant(grid: &MomentumGrid, c: T) -> Result<Self> {
        Self::new(grid, vec![c; grid.len()])
    }

    /// Fermi–Dirac occupation `w = 1/(1 + exp(β(ε − μ)))`.
    ///
    /// Overflowing exponentials saturate to the admissible endpoints 0 / 1.
    pub fn fermi_dirac(band: &Dispersion<T>, beta: T, mu: T) -> Result<Self> {
        if !beta.is_finite() || !mu.is_finite() {
            return Err(Error::Config("fermi_dirac: β and μ must be finite".into()));
        }
        let w = band
            .values()
            .iter()
            .map(|&e| logistic(-(beta * (e - mu))))
            .collect();
        Self::new(band.grid(), w)
    }

    /// Sharp Fermi sea: `w = 1` where `ε(p) < ε_F`, else 0 (indicator
    /// occupation, the zero-temperature profile).
    pub fn sharp_sea(band: &Dispersion<T>, fermi_energy: T) -> Result<Self> {
        let w = band
            .values()
            .iter()
            .map(|&e| if e < fermi_energy { T::one() } else { T::zero() })
            .collect();
        Self::new(band.grid(), w)
    }

    /// Grid accessor.
    #[inline]
    pub fn grid(&self) -> &MomentumGrid {
        &self.grid
    }

    /// Occupation values, indexed by flattened grid index.
    #[inline]
    pub fn values(&self) -> &[T] {
        &self.w
    }

    /// Single value.
    #[inline]
    pub fn value(&self, idx: usize) -> T {
        self.w[idx]
    }

    /// Density and energy density: `ρ = (1/n^ν) Σ w_j`,
    /// `e = (1/n^ν) Σ ε_j w_j`.
    pub fn density_energy(&self, band: &Dispersion<T>) -> Result<(T, T)> {
        self.grid.ensure_same(band.grid(), "density_energy")?;
        let cw = self.grid.cell_weight::<T>();
        let mut rho = T::zero();
        let mut e = T::zero();
        for (j, &x) in self.w.iter().enumerate() {
            rho += x;
            e += band.value(j) * x;
        }
        Ok((cw * rho, cw * e))
    }

    /// Particle density `ρ = (1/n^ν) Σ w_j`.
    pub fn density(&self) -> T {
        let cw = self.grid.cell_weight::<T>();
        cw * self.w.iter().copied().sum()
    }

    /// Entropy density
    /// `s = −(1/n^ν) Σ [w ln w + (1−w) ln(1−w)]`, with `0·ln 0 := 0`.
    pub fn entropy_density(&self) -> T {
        let cw = self.grid.cell_weight::<T>();
        let s: T = self.w.iter().map(|&x| mixing_entropy(x)).sum();
        cw * s
    }

    /// Position-space correlation profile
    /// `w(x) = (1/n^ν) Σ_j w_j e^{i p_j·x}` on the periodic torus.
    pub fn to_position(&self) -> Result<PositionProfile<T>> {
        let len = self.grid.len();
        if len > MAX_TRANSFORM_POINTS {
            return Err(Error::Resource(format!(
                "position transform budget: {len} grid points exceed the cap of {MAX_TRANSFORM_POINTS}"
            )));
        }
        let cw = self.grid.cell_weight::<T>();
        let mut c = vec![czero::<T>(); len];
        for (x_idx, cx) in c.iter_mut().enumerate() {
            let x = self.grid.site_coords(x_idx);
            let mut acc = czero::<T>();
            for (j, &wj) in self.w.iter().enumerate() {
                acc = acc + cis(self.grid.phase::<T>(j, x)) * wj;
            }
            *cx = acc * cw;
        }
        Ok(PositionProfile { grid: self.grid, c })
    }
}

/// Numerically stable logistic function `1/(1 + e^{−x})`.
#[inline]
pub fn logistic<T: Real>(x: T) -> T {
    if x >= T::zero() {
        T::one() / (T::one() + (-x).exp())
    } else {
        let e = x.exp();
        e / (T::one() + e)
    }
}

/// One term of the mixing entropy, `−[x ln x + (1−x) ln(1−x)]`, with the
/// `0·ln 0 := 0` convention at the endpoints.
#[inline]
pub fn mixing_entropy<T: Real>(x: T) -> T {
    let mut s = T::zero();
    if x > T::zero() {
        s = s - x * x.ln();
    }
    let y = T::one() - x;
    if y > T::zero() {
        s = s - y * y.ln();
    }
    s
}

/// Position-space correlation profile on the periodic torus,
/// `w(x)` with `w(0)` the density and `w(−x) = conj(w(x))`.
#[derive(Debug, Clone)]
pub struct PositionProfile<T> {
    grid: MomentumGrid,
    c: Vec<C<T>>,
}

impl<T: Real> PositionProfile<T> {
    /// Grid accessor (sites share the momentum grid's torus geometry).
    #[inline]
    pub fn grid(&self) -> &MomentumGrid {
        &self.grid
    }

    /// Profile values indexed by flattened site index.
    #[inline]
    pub fn values(&self) -> &[C<T>] {
        &self.c
    }

    /// Value at a signed lattice vector (torus wraparound).
    #[inline]
    pub fn at(&self, x: [i64; 2]) -> C<T> {
        self.c[self.grid.site(x)]
    }

    /// Inverse transform back to momentum occupations,
    /// `w_j = Σ_x w(x) e^{−i p_j·x}`; validates that the result is real and
    /// inside `[0, 1]` within `1e−10` slack, clamping the rounding residue.
    pub fn to_occupation(&self) -> Result<Occupation<T>> {
        let len = self.grid.len();
        let tol = T::lit(1e-10);
        let mut w = vec![T::zero(); len];
        for (j, wj) in w.iter_mut().enumerate() {
            let mut acc = czero::<T>();
            for (x_idx, &cx) in self.c.iter().enumerate() {
                let x = self.grid.site_coords(x_idx);
                acc = acc + cis(-self.grid.phase::<T>(j, x)) * cx;
            }
            if acc.im.abs() > tol {
                return Err(Error::Numerical(format!(
                    "position profile does not invert to a real occupation at index {j}"
                )));
            }
            let mut val = acc.re;
            if val < -tol || val > T::one() + tol {
                return Err(Error::Numerical(format!(
                    "position profile inverts outside [0,1] at index {j}: {val}"
                )));
            }
            val = val.max(T::zero()).min(T::one());
            *wj = val;
        }
        Occupation::new(&self.grid, w)
    }
}
