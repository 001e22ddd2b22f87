//! Self-adjoint quadratic observables built from localized profiles.

use crate::band::Dispersion;
use crate::error::{Error, Result};
use crate::grid::MomentumGrid;
use crate::scalar::{cis, czero, Real, C};

/// Sparse position-space coefficient map: `(flattened site, amplitude)`.
pub type SiteProfile<T> = Vec<(usize, C<T>)>;

/// Momentum transform `f̂(p_j) = Σ_x f(x) e^{−i p_j·x}` of a sparse profile.
pub fn profile_transform<T: Real>(grid: &MomentumGrid, sites: &[(usize, C<T>)]) -> Vec<C<T>> {
    let mut hat = vec![czero::<T>(); grid.len()];
    for (j, h) in hat.iter_mut().enumerate() {
        let mut acc = czero::<T>();
        for &(x_idx, a) in sites {
            let x = grid.site_coords(x_idx);
            acc = acc + a * cis(-grid.phase::<T>(j, x));
        }
        *h = acc;
    }
    hat
}

/// Extent of a coordinate set on the circular axis of size `n`: the length
/// of the smallest arc covering all points.
fn circular_extent(coords: &mut Vec<usize>, n: usize) -> usize {
    if coords.len() <= 1 {
        return 0;
    }
    coords.sort_unstable();
    coords.dedup();
    if coords.len() == 1 {
        return 0;
    }
    let mut max_gap = coords[0] + n - coords[coords.len() - 1];
    for w in coords.windows(2) {
        max_gap = max_gap.max(w[1] - w[0]);
    }
    n - max_gap
}

/// Self-adjoint quadratic observable
/// `A = a*(f) a(g) + a*(g) a(f)`
/// described by two finitely supported position profiles, with cached
/// momentum transforms.
///
/// The symmetrized convention makes every observable self-adjoint by
/// construction; for `f = g = δ_x` the observable is twice the number
/// operator at `x`, which fixes all normalization factors reported by the
/// correlation functions (for example the on-site variance `4ρ(1−ρ)` of a
/// product state).
#[derive(Debug, Clone)]
pub struct QuadraticObservable<T> {
    grid: MomentumGrid,
    fhat: Vec<C<T>>,
    ghat: Vec<C<T>>,
    f_sites: SiteProfile<T>,
    g_sites: SiteProfile<T>,
    support_diameter: usize,
}

impl<T: Real> QuadraticObservable<T> {
    /// Builds an observable from two sparse position profiles.
    ///
    /// The combined support must have diameter at most `n/4` per axis
    /// (minimal-image), so that translates and block sums remain meaningful
    /// on the torus.
    pub fn from_profiles(
        grid: &MomentumGrid,
        f_sites: SiteProfile<T>,
        g_sites: SiteProfile<T>,
    ) -> Result<Self> {
        if f_sites.is_empty() || g_sites.is_empty() {
            return Err(Error::Config("observable profiles must be nonempty".into()));
        }
        let n = grid.points_per_axis();
        for axis in 0..grid.dim() {
            let mut coords: Vec<usize> = f_sites
                .iter()
                .chain(g_sites.iter())
                .map(|&(s, _)| grid.axes(s)[axis])
                .collect();
            let extent = circular_extent(&mut coords, n);
            if extent > n / 4 {
                return Err(Error::Config(format!(
                    "observable support diameter {extent} exceeds n/4 = {} on axis {axis}",
                    n / 4
                )));
            }
        }
        let fhat = profile_transform(grid, &f_sites);
        let ghat = profile_transform(grid, &g_sites);
        Ok(Self {
            grid: *grid,
            fhat,
            ghat,
            f_sites,
            g_sites,
            support_diameter: 0,
        }
        .with_recorded_diameter())
    }

    fn with_recorded_diameter(mut self) -> Self {
        let n = self.grid.points_per_axis();
        let mut diam = 0;
        for axis in 0..self.grid.dim() {
            let mut coords: Vec<usize> = self
                .f_sites
                .iter()
                .chain(self.g_sites.iter())
                .map(|&(s, _)| self.grid.axes(s)[axis])
                .collect();
            diam = diam.max(circular_extent(&mut coords, n));
        }
        self.support_diameter = diam;
        self
    }

    /// Twice the number operator at a site: `f = g = δ_site`.
    pub fn number_at(grid: &MomentumGrid, site: [i64; 2]) -> Result<Self> {
        let s = grid.site(site);
        let one = C::new(T::one(), T::zero());
        Self::from_profiles(grid, vec![(s, one)], vec![(s, one)])
    }

    /// Builds directly from momentum transforms (used for free-evolved
    /// observables, which are no longer position-localized). The caller is
    /// responsible for the torus-locality of any later block sums.
    pub fn from_momentum(grid: &MomentumGrid, fhat: Vec<C<T>>, ghat: Vec<C<T>>) -> Result<Self> {
        if fhat.len() != grid.len() || ghat.len() != grid.len() {
            return Err(Error::Contract(format!(
                "momentum profiles must have {} entries",
                grid.len()
            )));
        }
        Ok(Self {
            grid: *grid,
            fhat,
            ghat,
            f_sites: Vec::new(),
            g_sites: Vec::new(),
            support_diameter: 0,
        })
    }

    /// Grid accessor.
    #[inline]
    pub fn grid(&self) -> &MomentumGrid {
        &self.grid
    }

    /// Momentum transform of the first profile.
    #[inline]
    pub fn fhat(&self) -> &[C<T>] {
        &self.fhat
    }

    /// Momentum transform of the second profile.
    #[inline]
    pub fn ghat(&self) -> &[C<T>] {
        &self.ghat
    }

    /// Position profile of `f` (empty for momentum-built observables).
    #[inline]
    pub fn f_sites(&self) -> &[(usize, C<T>)] {
        &self.f_sites
    }

    /// Position profile of `g` (empty for momentum-built observables).
    #[inline]
    pub fn g_sites(&self) -> &[(usize, C<T>)] {
        &self.g_sites
    }

    /// Recorded support diameter (largest per-axis minimal-image extent).
    #[inline]
    pub fn support_diameter(&self) -> usize {
        self.support_diameter
    }

    /// Translate by a lattice vector: profiles shift with wraparound,
    /// momentum transforms pick up `e^{−i p·x}` phases.
    pub fn translate(&self, dx: [i64; 2]) -> Self {
        let shift_sites = |sites: &SiteProfile<T>| -> SiteProfile<T> {
            sites
                .iter()
                .map(|&(s, a)| {
                    let c = self.grid.site_coords(s);
                    (self.grid.site([c[0] + dx[0], c[1] + dx[1]]), a)
                })
                .collect()
        };
        let phase = |hat: &[C<T>]| -> Vec<C<T>> {
            hat.iter()
                .enumerate()
                .map(|(j, &h)| h * cis(-self.grid.phase::<T>(j, dx)))
                .collect()
        };
        Self {
            grid: self.grid,
            fhat: phase(&self.fhat),
            ghat: phase(&self.ghat),
            f_sites: shift_sites(&self.f_sites),
            g_sites: shift_sites(&self.g_sites),
            support_diameter: self.support_diameter,
        }
    }

    /// Free Heisenberg evolution: `f̂(p) ↦ e^{i ε(p) t} f̂(p)`, likewise for
    /// `ĝ`. The result is momentum-represented only (the position profiles
    /// delocalize).
    pub fn free_evolve(&self, band: &Dispersion<T>, t: T) -> Result<Self> {
        self.grid.ensure_same(band.grid(), "free_evolve")?;
        let phase = |hat: &[C<T>]| -> Vec<C<T>> {
            hat.iter()
                .enumerate()
                .map(|(j, &h)| h * cis(band.value(j) * t))
                .collect()
        };
        Ok(Self {
            grid: self.grid,
            fhat: phase(&self.fhat),
            ghat: phase(&self.ghat),
            f_sites: Vec::new(),
            g_sites: Vec::new(),
            support_diameter: self.support_diameter,
        })
    }

    /// Mode-matrix entry
    /// `A_{ab} = (conj(f̂_a) ĝ_b + conj(ĝ_a) f̂_b)/n^ν`
    /// of the observable expanded over momentum modes.
    #[inline]
    pub fn mode_matrix_entry(&self, a: usize, b: usize) -> C<T> {
        let cw = self.grid.cell_weight::<T>();
        (self.fhat[a].conj() * self.ghat[b] + self.ghat[a].conj() * self.fhat[b]) * cw
    }

    /// Smearing vectors over momentum modes for the two bilinear halves of
    /// the observable, scaled by `1/√(n^ν)` so that pairing-engine
    /// contractions carry the cell weight: `a*(f)a(g)` contributes the
    /// creator smearing `f̂/√(n^ν)` (the engine applies the antilinear
    /// conjugation itself) and the annihilator smearing `ĝ/√(n^ν)`;
    /// `a*(g)a(f)` the mirrored pair.
    pub fn mode_legs(&self) -> [(Vec<C<T>>, Vec<C<T>>); 2] {
        let s = T::one() / T::count(self.grid.len()).sqrt();
        let scale = |v: &[C<T>]| -> Vec<C<T>> { v.iter().map(|&z| z * s).collect() };
        [
            (scale(&self.fhat), scale(&self.ghat)),
            (scale(&self.ghat), scale(&self.fhat)),
        ]
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn transform_of_delta_is_flat() {
        let g = MomentumGrid::new(1, 8).unwrap();
        let one = C::new(1.0f64, 0.0);
        let hat = profile_transform(&g, &[(g.site([0, 0]), one)]);
        assert!(hat.iter().all(|h| (h - one).norm() < 1e-14));
    }

    #[test]
    fn support_diameter_is_enforced() {
        let g = MomentumGrid::new(1, 16).unwrap();
        let one = C::new(1.0f64, 0.0);
        // Diameter 4 = n/4 is allowed.
        assert!(QuadraticObservable::from_profiles(
            &g,
            vec![(g.site([0, 0]), one), (g.site([4, 0]), one)],
            vec![(g.site([0, 0]), one)],
        )
        .is_ok());
        // Diameter 5 is not.
        assert!(QuadraticObservable::from_profiles(
            &g,
            vec![(g.site([0, 0]), one), (g.site([5, 0]), one)],
            vec![(g.site([0, 0]), one)],
        )
        .is_err());
    }

    #[test]
    fn wraparound_support_is_measured_minimally() {
        let g = MomentumGrid::new(1, 16).unwrap();
        let one = C::new(1.0f64, 0.0);
        // Sites {15, 0, 1} span an arc of length 2 across the seam.
        let a = QuadraticObservable::from_profiles(
            &g,
            vec![(g.site([15, 0]), one), (g.site([1, 0]), one)],
            vec![(g.site([0, 0]), one)],
        )
        .unwrap();
        assert_eq!(a.support_diameter(), 2);
    }

    #[test]
    fn translate_round_trip() {
        let g = MomentumGrid::new(2, 8).unwrap();
        let a = QuadraticObservable::<f64>::number_at(&g, [1, 2]).unwrap();
        let b = a.translate([3, -1]).translate([-3, 1]);
        for (x, y) in a.fhat().iter().zip(b.fhat()) {
            assert!((x - y).norm() < 1e-14);
        }
        assert_eq!(a.f_sites(), b.f_sites());
    }

    #[test]
    fn free_evolution_composes() {
        let g = MomentumGrid::new(1, 8).unwrap();
        let band = Dispersion::cosine(&g);
        let a = QuadraticObservable::<f64>::number_at(&g, [2, 0]).unwrap();
        let one_step = a.free_evolve(&band, 0.7).unwrap().free_evolve(&band, 0.5).unwrap();
        let direct = a.free_evolve(&band, 1.2).unwrap();
        for (x, y) in one_step.fhat().iter().zip(direct.fhat()) {
            assert!((x - y).norm() < 1e-12);
        }
    }

    #[test]
    fn zero_time_evolution_is_identity() {
        let g = MomentumGrid::new(1, 8).unwrap();
        let band = Dispersion::cosine(&g);
        let a = QuadraticObservable::<f64>::number_at(&g, [0, 0]).unwrap();
        let b = a.free_evolve(&band, 0.0).unwrap();
        for (x, y) in a.ghat().iter().zip(b.ghat()) {
            assert!((x - y).norm() < 1e-15);
        }
    }
}
