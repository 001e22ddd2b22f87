//! Gauge-invariant Gaussian (quasifree) states over the momentum torus:
//! pair-determinant moments, truncated correlations, and the bilinear
//! covariance/symplectic forms feeding the fluctuation layer.

pub mod observable;
pub mod wick;

pub use observable::{profile_transform, QuadraticObservable, SiteProfile};
pub use wick::{monomial_expect, small_det, Leg, ModeOp, SmearedOp, WickContext};

use crate::error::{Error, Result};
use crate::grid::MomentumGrid;
use crate::occupation::Occupation;
use crate::scalar::{cis, czero, Real, C};

/// The two bilinear forms of a fluctuation pair: the symmetric covariance
/// `S(A,B)` and the antisymmetric phase form `σ(A,B)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FluctuationForms<T> {
    /// Symmetric covariance form `S(A,B)`.
    pub covariance: T,
    /// Antisymmetric symplectic form `σ(A,B)`.
    pub symplectic: T,
}

/// Translation-invariant gauge-invariant Gaussian state, determined by its
/// momentum-mode occupation function.
#[derive(Debug, Clone)]
pub struct QuasifreeState<T> {
    occ: Occupation<T>,
}

impl<T: Real> QuasifreeState<T> {
    /// Wraps an occupation function as a Gaussian state.
    pub fn new(occ: Occupation<T>) -> Self {
        Self { occ }
    }

    /// Grid accessor.
    #[inline]
    pub fn grid(&self) -> &MomentumGrid {
        self.occ.grid()
    }

    /// The defining mode occupations.
    #[inline]
    pub fn occupation(&self) -> &Occupation<T> {
        &self.occ
    }

    fn check_profile(&self, p: &[(usize, C<T>)], what: &str) -> Result<()> {
        let len = self.grid().len();
        for &(site, _) in p {
            if site >= len {
                return Err(Error::Contract(format!(
                    "{what} profile references site index {site} outside the torus of {len} sites"
                )));
            }
        }
        Ok(())
    }

    /// Two-point function over momentum transforms:
    /// `ω(a*(f)a(g)) = (1/n^ν) Σ_j w_j conj(f̂_j) ĝ_j`.
    pub fn two_point_hats(&self, fhat: &[C<T>], ghat: &[C<T>]) -> C<T> {
        debug_assert_eq!(fhat.len(), self.grid().len());
        debug_assert_eq!(ghat.len(), self.grid().len());
        let w = self.occ.values();
        let mut acc = czero::<T>();
        for j in 0..w.len() {
            acc = acc + fhat[j].conj() * ghat[j] * w[j];
        }
        acc * self.grid().cell_weight::<T>()
    }

    /// Two-point function of two sparse position profiles.
    pub fn two_point(
        &self,
        f: &[(usize, C<T>)],
        g: &[(usize, C<T>)],
    ) -> Result<C<T>> {
        self.check_profile(f, "creator")?;
        self.check_profile(g, "annihilator")?;
        let fhat = profile_transform(self.grid(), f);
        let ghat = profile_transform(self.grid(), g);
        Ok(self.two_point_hats(&fhat, &ghat))
    }

    /// Moment of the normal-ordered word
    /// `a*(f_1)···a*(f_r) a(g_r)···a(g_1)`
    /// as the pair determinant `det[G]`, `G_ij = two_point(f_i, g_j)`.
    ///
    /// Unequal list lengths return 0 (gauge invariance) rather than an
    /// error, which simplifies callers that assemble words generically.
    pub fn wick_expect(
        &self,
        creators: &[SiteProfile<T>],
        annihilators: &[SiteProfile<T>],
    ) -> Result<C<T>> {
        if creators.len() != annihilators.len() {
            return Ok(czero());
        }
        let r = creators.len();
        if r == 0 {
            return Ok(C::new(T::one(), T::zero()));
        }
        let mut g = vec![vec![czero::<T>(); r]; r];
        for (i, f_i) in creators.iter().enumerate() {
            for (j, g_j) in annihilators.iter().enumerate() {
                g[i][j] = self.two_point(f_i, g_j)?;
            }
        }
        Ok(small_det(g))
    }

    /// Mean of a self-adjoint quadratic observable:
    /// `ω(A) = 2 Re ω(a*(f)a(g))`.
    pub fn mean(&self, a: &QuadraticObservable<T>) -> Result<T> {
        self.grid().ensure_same(a.grid(), "mean")?;
        Ok((T::one() + T::one()) * self.two_point_hats(a.fhat(), a.ghat()).re)
    }

    /// `Σ_j w_j conj(û_j) t̂_j e^{−i p_j·d} / n^ν` — the particle leg of a
    /// cross contraction against a copy of the second observable shifted
    /// by `d`.
    fn cross_particle(&self, uhat: &[C<T>], that: &[C<T>], d: [i64; 2]) -> C<T> {
        let w = self.occ.values();
        let grid = self.grid();
        let mut acc = czero::<T>();
        for j in 0..w.len() {
            acc = acc + uhat[j].conj() * that[j] * cis(-grid.phase::<T>(j, d)) * w[j];
        }
        acc * grid.cell_weight::<T>()
    }

    /// `Σ_k (1−w_k) conj(ŝ_k) v̂_k e^{+i p_k·d} / n^ν` — the hole leg.
    fn cross_hole(&self, shat: &[C<T>], vhat: &[C<T>], d: [i64; 2]) -> C<T> {
        let w = self.occ.values();
        let grid = self.grid();
        let mut acc = czero::<T>();
        for k in 0..w.len() {
            acc = acc
                + shat[k].conj() * vhat[k] * cis(grid.phase::<T>(k, d)) * (T::one() - w[k]);
        }
        acc * grid.cell_weight::<T>()
    }

    /// Truncated correlation `ω(A · α_d B) − ω(A) ω(B)` via the single
    /// Wick cross contraction, summed over the four bilinear half-pairs of
    /// the two symmetrized observables.
    pub fn truncated_corr(
        &self,
        a: &QuadraticObservable<T>,
        b: &QuadraticObservable<T>,
        d: [i64; 2],
    ) -> Result<C<T>> {
        self.grid().ensure_same(a.grid(), "truncated_corr")?;
        self.grid().ensure_same(b.grid(), "truncated_corr")?;
        let halves_a: [(&[C<T>], &[C<T>]); 2] =
            [(a.fhat(), a.ghat()), (a.ghat(), a.fhat())];
        let halves_b: [(&[C<T>], &[C<T>]); 2] =
            [(b.fhat(), b.ghat()), (b.ghat(), b.fhat())];
        let mut acc = czero::<T>();
        for &(u, v) in &halves_a {
            for &(s, t) in &halves_b {
                acc = acc + self.cross_particle(u, t, d) * self.cross_hole(s, v, d);
            }
        }
        Ok(acc)
    }

    /// Symplectic form `σ(A,B) = −i Σ_x ω([A, α_x B])`, the torus sum of
    /// commutator means, expanded through the bilinear commutator identity
    /// `[a*(u)a(v), a*(s)a(t)] = {a(v),a*(s)} a*(u)a(t) − {a(t),a*(u)} a*(s)a(v)`.
    ///
    /// Sites are visited in lexicographic order, so the result is
    /// bit-reproducible.
    pub fn symplectic(
        &self,
        a: &QuadraticObservable<T>,
        b: &QuadraticObservable<T>,
    ) -> Result<T> {
        self.grid().ensure_same(a.grid(), "symplectic")?;
        self.grid().ensure_same(b.grid(), "symplectic")?;
        let grid = *self.grid();
        let cw = grid.cell_weight::<T>();
        let w = self.occ.values();
        let halves_a: [(&[C<T>], &[C<T>]); 2] =
            [(a.fhat(), a.ghat()), (a.ghat(), a.fhat())];
        let halves_b: [(&[C<T>], &[C<T>]); 2] =
            [(b.fhat(), b.ghat()), (b.ghat(), b.fhat())];
        let mut acc = czero::<T>();
        for x_idx in 0..grid.len() {
            let c = grid.site_coords(x_idx);
            let x = [c[0] as i64, c[1] as i64];
            for &(u, v) in &halves_a {
                for &(s, t) in &halves_b {
                    // {a(v), a*(s_x)} = (1/n^ν) Σ_j conj(ŝ_j) v̂_j e^{+ip_j·x}
                    let mut anti_vs = czero::<T>();
                    // ω(a*(u) a(t_x)) = (1/n^ν) Σ_j w_j conj(û_j) t̂_j e^{−ip_j·x}
                    let mut mean_ut = czero::<T>();
                    // {a(t_x), a*(u)} = (1/n^ν) Σ_j conj(û_j) t̂_j e^{−ip_j·x}
                    let mut anti_tu = czero::<T>();
                    // ω(a*(s_x) a(v)) = (1/n^ν) Σ_j w_j conj(ŝ_j) v̂_j e^{+ip_j·x}
                    let mut mean_sv = czero::<T>();
                    for j in 0..w.len() {
                        let ph_plus = cis(grid.phase::<T>(j, x));
                        let ph_minus = ph_plus.conj();
                        let sv = s[j].conj() * v[j] * ph_plus;
                        let ut = u[j].conj() * t[j] * ph_minus;
                        anti_vs = anti_vs + sv;
                        mean_sv = mean_sv + sv * w[j];
                        anti_tu = anti_tu + ut;
                        mean_ut = mean_ut + ut * w[j];
                    }
                    acc = acc + (anti_vs * mean_ut - anti_tu * mean_sv) * cw * cw;
                }
            }
        }
        let minus_i = C::new(T::zero(), -T::one());
        Ok((minus_i * acc).re)
    }

    /// Covariance form
    /// `S(A,B) = Σ_x (1/2)[C_AB(x) + C_BA(−x)]`
    /// over the whole torus (exact there, no extrapolation), with
    /// `C_AB = truncated_corr`. Real by the hermiticity of the truncated
    /// correlation; `S(A,A) ≥ 0`.
    pub fn covariance(
        &self,
        a: &QuadraticObservable<T>,
        b: &QuadraticObservable<T>,
    ) -> Result<T> {
        let grid = *self.grid();
        let half = T::lit(0.5);
        let mut acc = czero::<T>();
        for x_idx in 0..grid.len() {
            let c = grid.site_coords(x_idx);
            let d = [c[0] as i64, c[1] as i64];
            let dneg = [-d[0], -d[1]];
            let fwd = self.truncated_corr(a, b, d)?;
            let bwd = self.truncated_corr(b, a, dneg)?;
            acc = acc + (fwd + bwd) * half;
        }
        Ok(acc.re)
    }

    /// Covariance by the closed momentum route: the torus sum over `x`
    /// collapses the two cross-contraction phases onto the diagonal,
    /// leaving `Re Σ_j w_j(1−w_j) Σ_halves conj(û_j) t̂_j conj(ŝ_j) v̂_j / n^ν`.
    /// Algebraically identical to [`Self::covariance`]; kept as an
    /// independent summation route.
    pub fn covariance_spectral(
        &self,
        a: &QuadraticObservable<T>,
        b: &QuadraticObservable<T>,
    ) -> Result<T> {
        self.grid().ensure_same(a.grid(), "covariance_spectral")?;
        self.grid().ensure_same(b.grid(), "covariance_spectral")?;
        let w = self.occ.values();
        let halves_a: [(&[C<T>], &[C<T>]); 2] =
            [(a.fhat(), a.ghat()), (a.ghat(), a.fhat())];
        let halves_b: [(&[C<T>], &[C<T>]); 2] =
            [(b.fhat(), b.ghat()), (b.ghat(), b.fhat())];
        let mut acc = czero::<T>();
        for (j, &wj) in w.iter().enumerate() {
            let pauli = wj * (T::one() - wj);
            if pauli == T::zero() {
                continue;
            }
            let mut combo = czero::<T>();
            for &(u, v) in &halves_a {
                for &(s, t) in &halves_b {
                    combo = combo + u[j].conj() * t[j] * s[j].conj() * v[j];
                }
            }
            acc = acc + combo * pauli;
        }
        Ok((acc * self.grid().cell_weight::<T>()).re)
    }

    /// Both bilinear forms of the pair `(A, B)`.
    pub fn fluctuation_forms(
        &self,
        a: &QuadraticObservable<T>,
        b: &QuadraticObservable<T>,
    ) -> Result<FluctuationForms<T>> {
        Ok(FluctuationForms {
            covariance: self.covariance(a, b)?,
            symplectic: self.symplectic(a, b)?,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn product_state(n: usize, rho: f64) -> QuasifreeState<f64> {
        let g = MomentumGrid::new(1, n).unwrap();
        QuasifreeState::new(Occupation::constant(&g, rho).unwrap())
    }

    #[test]
    fn two_point_product_state_density() {
        let st = product_state(8, 0.37);
        let g = *st.grid();
        let one = C::new(1.0, 0.0);
        let f = vec![(g.site([0, 0]), one)];
        let tp = st.two_point(&f, &f).unwrap();
        assert_abs_diff_eq!(tp.re, 0.37, epsilon = 1e-14);
        assert_abs_diff_eq!(tp.im, 0.0, epsilon = 1e-14);
    }

    #[test]
    fn two_point_disjoint_sites_constant_occupation() {
        let st = product_state(8, 0.5);
        let g = *st.grid();
        let one = C::new(1.0, 0.0);
        let f = vec![(g.site([0, 0]), one)];
        let gg = vec![(g.site([1, 0]), one)];
        let tp = st.two_point(&f, &gg).unwrap();
        assert_abs_diff_eq!(tp.norm(), 0.0, epsilon = 1e-14);
    }

    #[test]
    fn mean_of_double_number_operator() {
        let st = product_state(8, 0.25);
        let a = QuadraticObservable::number_at(st.grid(), [3, 0]).unwrap();
        assert_abs_diff_eq!(st.mean(&a).unwrap(), 0.5, epsilon = 1e-14);
    }

    #[test]
    fn wick_r1_reduces_to_two_point() {
        let g = MomentumGrid::new(1, 8).unwrap();
        let w: Vec<f64> = (0..8).map(|j| 0.1 + 0.08 * j as f64).collect();
        let st = QuasifreeState::new(Occupation::new(&g, w).unwrap());
        let f = vec![(g.site([1, 0]), C::new(0.4, -0.3))];
        let h = vec![(g.site([2, 0]), C::new(-0.2, 0.9))];
        let a = st.wick_expect(&[f.clone()], &[h.clone()]).unwrap();
        let b = st.two_point(&f, &h).unwrap();
        assert_abs_diff_eq!((a - b).norm(), 0.0, epsilon = 1e-14);
    }

    #[test]
    fn wick_product_state_distinct_sites() {
        let st = product_state(8, 0.6);
        let g = *st.grid();
        let one = C::new(1.0, 0.0);
        let sites = [0i64, 2, 5];
        let profiles: Vec<SiteProfile<f64>> = sites
            .iter()
            .map(|&x| vec![(g.site([x, 0]), one)])
            .collect();
        let got = st.wick_expect(&profiles, &profiles).unwrap();
        assert_abs_diff_eq!(got.re, 0.6f64.powi(3), epsilon = 1e-12);
        assert_abs_diff_eq!(got.im, 0.0, epsilon = 1e-12);
    }

    #[test]
    fn wick_unbalanced_counts_vanish() {
        let st = product_state(8, 0.6);
        let g = *st.grid();
        let one = C::new(1.0, 0.0);
        let f = vec![(g.site([0, 0]), one)];
        let z = st.wick_expect(&[f.clone(), f.clone()], &[f]).unwrap();
        assert_eq!(z.norm(), 0.0);
    }

    #[test]
    fn truncated_corr_product_state() {
        let st = product_state(16, 0.3);
        let a = QuadraticObservable::number_at(st.grid(), [0, 0]).unwrap();
        // Distinct sites are independent in a product state.
        let far = st.truncated_corr(&a, &a, [5, 0]).unwrap();
        assert_abs_diff_eq!(far.norm(), 0.0, epsilon = 1e-13);
        // On-site variance of A = 2n_0 is 4ρ(1−ρ).
        let on = st.truncated_corr(&a, &a, [0, 0]).unwrap();
        assert_abs_diff_eq!(on.re, 4.0 * 0.3 * 0.7, epsilon = 1e-13);
        assert_abs_diff_eq!(on.im, 0.0, epsilon = 1e-13);
    }

    #[test]
    fn covariance_product_state_bernoulli() {
        let st = product_state(16, 0.3);
        let a = QuadraticObservable::number_at(st.grid(), [0, 0]).unwrap();
        let s = st.covariance(&a, &a).unwrap();
        assert_abs_diff_eq!(s, 4.0 * 0.3 * 0.7, epsilon = 1e-12);
        let s2 = st.covariance_spectral(&a, &a).unwrap();
        assert_abs_diff_eq!(s2, s, epsilon = 1e-12);
    }

    #[test]
    fn empty_occupation_has_no_fluctuations() {
        let st = product_state(16, 0.0);
        let a = QuadraticObservable::number_at(st.grid(), [0, 0]).unwrap();
        assert_abs_diff_eq!(st.covariance(&a, &a).unwrap(), 0.0, epsilon = 1e-14);
    }

    #[test]
    fn symplectic_antisymmetry_and_number_commuting() {
        let g = MomentumGrid::new(1, 12).unwrap();
        let w: Vec<f64> = (0..12).map(|j| 0.05 + 0.07 * j as f64).collect();
        let st = QuasifreeState::new(Occupation::new(&g, w).unwrap());
        let a = QuadraticObservable::number_at(&g, [0, 0]).unwrap();
        let b = QuadraticObservable::number_at(&g, [2, 0]).unwrap();
        assert_abs_diff_eq!(st.symplectic(&a, &a).unwrap(), 0.0, epsilon = 1e-12);
        assert_abs_diff_eq!(st.symplectic(&a, &b).unwrap(), 0.0, epsilon = 1e-12);
    }
}
