//! Matching Fermi–Dirac parameters to prescribed density and energy.

use crate::band::Dispersion;
use crate::error::{Error, Result};
use crate::grid::MomentumGrid;
use crate::occupation::{logistic, Occupation};
use crate::scalar::Real;

/// Inverse temperature / chemical potential pair describing a Fermi–Dirac
/// state through `w = 1/(1 + exp(β ε − c))` with `c = β μ`.
///
/// `β` may be negative (population inversion). At `β = 0` the chemical
/// potential is not identifiable; the degenerate branch reports `β = 0`,
/// `c = ln(ρ/(1−ρ))`, and flags itself.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EquilibriumParams<T> {
    /// Inverse temperature β.
    pub beta: T,
    /// Chemical potential μ (zero and unidentifiable on the degenerate
    /// branch).
    pub mu: T,
    /// Exponential shift `c = β μ`, the stable parametrization near β = 0.
    pub shift: T,
    /// Whether the β = 0 degenerate branch was taken.
    pub degenerate: bool,
}

impl<T: Real> EquilibriumParams<T> {
    /// Occupation described by these parameters.
    pub fn occupation(&self, band: &Dispersion<T>) -> Result<Occupation<T>> {
        let w = band
            .values()
            .iter()
            .map(|&e| logistic(self.shift - self.beta * e))
            .collect();
        Occupation::new(band.grid(), w)
    }
}

/// Extremal energy densities attainable at density `ρ`: filling the lowest
/// (resp. highest) band values first.
fn energy_bounds<T: Real>(grid: &MomentumGrid, band: &Dispersion<T>, rho: T) -> (T, T) {
    let mut eps: Vec<T> = band.values().to_vec();
    eps.sort_by(|a, b| a.partial_cmp(b).expect("finite band values"));
    let cw = grid.cell_weight::<T>();
    let particles = rho * T::count(grid.len());
    let fill = |sorted: &[T]| -> T {
        let mut remaining = particles;
        let mut acc = T::zero();
        for &e in sorted {
            if remaining <= T::zero() {
                break;
            }
            let take = remaining.min(T::one());
            acc += take * e;
            remaining -= take;
        }
        cw * acc
    };
    let e_min = fill(&eps);
    let rev: Vec<T> = eps.into_iter().rev().collect();
    let e_max = fill(&rev);
    (e_min, e_max)
}

/// Density and energy of `w(x) = 1/(1 + exp(β ε − c))`, together with the
/// Jacobian entries with respect to `(β, c)`.
fn state_and_jacobian<T: Real>(
    band: &Dispersion<T>,
    beta: T,
    c: T,
) -> (T, T, [[T; 2]; 2]) {
    let cw = band.grid().cell_weight::<T>();
    let mut rho = T::zero();
    let mut e = T::zero();
    let mut sw = T::zero(); // Σ w(1−w)
    let mut sew = T::zero(); // Σ ε w(1−w)
    let mut seew = T::zero(); // Σ ε² w(1−w)
    for &eps in band.values() {
        let w = logistic(c - beta * eps);
        let wp = w * (T::one() - w);
        rho += w;
        e += eps * w;
        sw += wp;
        sew += eps * wp;
        seew += eps * eps * wp;
    }
    let j = [
        // ∂(ρ)/∂β, ∂(ρ)/∂c
        [-cw * sew, cw * sw],
        // ∂(e)/∂β, ∂(e)/∂c
        [-cw * seew, cw * sew],
    ];
    (cw * rho, cw * e, j)
}

/// Finds `(β, μ)` such that the Fermi–Dirac state reproduces the target
/// density and energy within `1e−10`.
///
/// Uses a damped two-dimensional Newton iteration in the `(β, c)`
/// parametrization. Unattainable `(ρ, e)` pairs yield a domain error;
/// exhaustion of the iteration budget yields a convergence error.
pub fn match_equilibrium<T: Real>(
    band: &Dispersion<T>,
    rho: T,
    e: T,
) -> Result<EquilibriumParams<T>> {
    let grid = band.grid();
    if !(rho > T::zero() && rho < T::one()) {
        return Err(Error::Domain(format!(
            "target density must lie strictly inside (0, 1), got {rho}"
        )));
    }
    if !e.is_finite() {
        return Err(Error::Domain("target energy must be finite".into()));
    }
    let (lo, hi) = band.range();
    let scale_e = T::one().max(hi - lo);
    let slack = T::lit(1e-10) * scale_e;
    let (e_min, e_max) = energy_bounds(grid, band, rho);
    if e < e_min - slack || e > e_max + slack {
        return Err(Error::Domain(format!(
            "energy {e} unattainable at density {rho}: attainable range [{e_min}, {e_max}]"
        )));
    }

    let mean_energy: T = grid.cell_weight::<T>() * band.values().iter().copied().sum();
    let degenerate_shift = (rho / (T::one() - rho)).ln();
    if (e - rho * mean_energy).abs() <= T::lit(1e-12) * scale_e {
        return Ok(EquilibriumParams {
            beta: T::zero(),
            mu: T::zero(),
            shift: degenerate_shift,
            degenerate: true,
        });
    }

    let tol_rho = T::lit(1e-12);
    let tol_e = T::lit(1e-12) * scale_e;
    let mut beta = T::zero();
    let mut c = degenerate_shift;
    let (mut cur_rho, mut cur_e, mut jac) = state_and_jacobian(band, beta, c);
    let mut res_rho = cur_rho - rho;
    let mut res_e = cur_e - e;

    for _ in 0..200 {
        if res_rho.abs() <= tol_rho && res_e.abs() <= tol_e {
            let mu = if beta.abs() > T::lit(1e-300) { c / beta } else { T::zero() };
            return Ok(EquilibriumParams { beta, mu, shift: c, degenerate: false });
        }
        let det = jac[0][0] * jac[1][1] - jac[0][1] * jac[1][0];
        if det.abs() < T::lit(1e-300) {
            return Err(Error::Convergence(
                "equilibrium matching: singular Jacobian (band degenerate at this state)".into(),
            ));
        }
        // Newton step solving J·δ = −res.
        let d_beta = (-res_rho * jac[1][1] + res_e * jac[0][1]) / det;
        let d_c = (-res_e * jac[0][0] + res_rho * jac[1][0]) / det;

        // Backtracking damping on the residual norm.
        let norm0 = res_rho.abs() / T::one().max(tol_rho) + res_e.abs() / scale_e;
        let mut step = T::one();
        let mut improved = false;
        for _ in 0..40 {
            let nb = beta + step * d_beta;
            let nc = c + step * d_c;
            let (r, en, j) = state_and_jacobian(band, nb, nc);
            let nr = r - rho;
            let ne = en - e;
            let norm1 = nr.abs() / T::one().max(tol_rho) + ne.abs() / scale_e;
            if norm1 < norm0 || norm1 <= T::lit(1e-15) {
                beta = nb;
                c = nc;
                cur_rho = r;
                cur_e = en;
                jac = j;
                res_rho = nr;
                res_e = ne;
                improved = true;
                break;
            }
            step = step * T::lit(0.5);
        }
        if !improved {
            return Err(Error::Convergence(
                "equilibrium matching: damped Newton stalled".into(),
            ));
        }
    }
    let _ = (cur_rho, cur_e);
    Err(Error::Convergence(
        "equilibrium matching: iteration budget exhausted".into(),
    ))
}
