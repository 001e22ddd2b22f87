//! Time integration of the kinetic equation: classical fourth-order
//! Runge–Kutta steps with admissibility-based rejection, adaptive step
//! halving, and trajectory monitoring (conserved quantities, entropy
//! production, distance to the matched equilibrium).

use crate::band::Dispersion;
use crate::collision::{CollisionTable, FoldedView};
use crate::equilibrium::match_equilibrium;
use crate::error::{Error, Result};
use crate::occupation::Occupation;
use crate::scalar::Real;

/// Componentwise slack allowed around `[0, 1]` before a step is rejected;
/// accepted values inside the slack are clamped onto the interval.
pub const ADMISSIBILITY_TOL: f64 = 1e-12;
/// Consecutive rejected steps after which integration gives up.
pub const MAX_CONSECUTIVE_REJECTIONS: usize = 40;

/// Result of one attempted integrator step.
#[derive(Debug, Clone)]
pub enum StepOutcome<T> {
    /// The step kept the occupation admissible (after clamping values
    /// within the slack onto `[0, 1]`).
    Accepted(Occupation<T>),
    /// Some component left `[−tol, 1+tol]`; retry with a smaller step.
    Rejected,
}

/// One classical Runge–Kutta step of `dw/dt = rhs(w)`.
///
/// The right-hand side receives raw slices because intermediate stage
/// vectors need not be admissible occupations. Non-finite stage values are
/// a numerical failure; a finite result outside the admissibility slack is
/// reported as [`StepOutcome::Rejected`].
pub fn step_rk4<T: Real>(
    w: &Occupation<T>,
    rhs: impl Fn(&[T]) -> Result<Vec<T>>,
    dt: T,
) -> Result<StepOutcome<T>> {
    if !(dt > T::zero()) || !dt.is_finite() {
        return Err(Error::Contract(format!("step size dt = {dt} must be positive")));
    }
    let y0 = w.values();
    let n = y0.len();
    let half = dt * T::lit(0.5);

    let k1 = rhs(y0)?;
    check_finite(&k1)?;
    let mut stage = vec![T::zero(); n];
    for i in 0..n {
        stage[i] = y0[i] + half * k1[i];
    }
    let k2 = rhs(&stage)?;
    check_finite(&k2)?;
    for i in 0..n {
        stage[i] = y0[i] + half * k2[i];
    }
    let k3 = rhs(&stage)?;
    check_finite(&k3)?;
    for i in 0..n {
        stage[i] = y0[i] + dt * k3[i];
    }
    let k4 = rhs(&stage)?;
    check_finite(&k4)?;

    let sixth = dt / T::lit(6.0);
    let two = T::lit(2.0);
    let tol = T::lit(ADMISSIBILITY_TOL);
    let mut out = vec![T::zero(); n];
    for i in 0..n {
        let x = y0[i] + sixth * (k1[i] + two * k2[i] + two * k3[i] + k4[i]);
        if !x.is_finite() {
            return Err(Error::Numerical(format!(
                "integrator produced a non-finite occupation at mode {i}"
            )));
        }
        if x < -tol || x > T::one() + tol {
            return Ok(StepOutcome::Rejected);
        }
        out[i] = x.max(T::zero()).min(T::one());
    }
    Ok(StepOutcome::Accepted(Occupation::new(w.grid(), out)?))
}

fn check_finite<T: Real>(k: &[T]) -> Result<()> {
    for (i, &x) in k.iter().enumerate() {
        if !x.is_finite() {
            return Err(Error::Numerical(format!(
                "right-hand side returned a non-finite value at mode {i}"
            )));
        }
    }
    Ok(())
}

/// Snapshot of the state and its scalar diagnostics at one monitor time.
#[derive(Debug, Clone)]
pub struct TrajectoryPoint<T> {
    /// Kinetic time.
    pub t: T,
    /// Occupation snapshot.
    pub w: Occupation<T>,
    /// Particle density.
    pub rho: T,
    /// Energy density.
    pub energy: T,
    /// Entropy density.
    pub entropy: T,
    /// Sup-norm distance to the equilibrium with the same density and
    /// energy.
    pub dist_fd: T,
}

/// Integration record: monitor snapshots, the per-step entropy series, and
/// step statistics.
#[derive(Debug, Clone)]
pub struct Trajectory<T> {
    /// Monitor snapshots; the initial and final states are always present.
    pub points: Vec<TrajectoryPoint<T>>,
    /// `(t, entropy)` after every accepted step, starting at `t = 0`.
    pub entropy_steps: Vec<(T, T)>,
    /// Number of accepted steps.
    pub accepted_steps: usize,
    /// Number of rejected step attempts.
    pub rejected_steps: usize,
    /// Step size in effect when integration finished.
    pub final_dt: T,
    /// Largest deviation of the particle density from its initial value.
    pub max_density_drift: T,
    /// Largest deviation of the energy density from its initial value.
    pub max_energy_drift: T,
}

impl<T: Real> Trajectory<T> {
    /// Final snapshot.
    pub fn last(&self) -> &TrajectoryPoint<T> {
        self.points.last().expect("a trajectory always has endpoints")
    }
}

/// Integrates the kinetic equation from `w0` to time `t_final`.
///
/// Steps start at `dt0`; a rejected step halves the step size, a streak of
/// [`MAX_CONSECUTIVE_REJECTIONS`] rejections aborts, and after an accepted
/// step the size doubles back toward (never beyond) `dt0`. The entropy
/// density is recorded after every accepted step. Full snapshots with the
/// matched-equilibrium distance are taken every `monitor_every` accepted
/// steps; `monitor_every = 0` records the endpoints only.
pub fn evolve<T: Real>(
    w0: &Occupation<T>,
    band: &Dispersion<T>,
    table: &CollisionTable<T>,
    t_final: T,
    dt0: T,
    monitor_every: usize,
) -> Result<Trajectory<T>> {
    w0.grid().ensure_same(band.grid(), "evolve")?;
    w0.grid().ensure_same(table.grid(), "evolve")?;
    if !(t_final > T::zero()) || !t_final.is_finite() {
        return Err(Error::Config(format!("final time {t_final} must be positive")));
    }
    if !(dt0 > T::zero()) || !dt0.is_finite() {
        return Err(Error::Config(format!("initial step size {dt0} must be positive")));
    }

    let folded = FoldedView::from_table(table);
    let rhs = |w: &[T]| Ok(folded.rhs_slice(w));

    let (rho0, e0) = w0.density_energy(band)?;
    let mut w = w0.clone();
    let mut t = T::zero();
    let mut dt = dt0.min(t_final);
    let mut accepted = 0usize;
    let mut rejected = 0usize;
    let mut streak = 0usize;
    let mut max_rho_drift = T::zero();
    let mut max_e_drift = T::zero();

    let mut entropy_steps = vec![(T::zero(), w.entropy_density())];
    let mut points = vec![snapshot(T::zero(), &w, band)?];

    let t_end_slack = t_final * T::lit(1e-12);
    while t_final - t > t_end_slack {
        let dt_step = dt.min(t_final - t);
        match step_rk4(&w, &rhs, dt_step)? {
            StepOutcome::Accepted(next) => {
                w = next;
                t += dt_step;
                accepted += 1;
                streak = 0;
                dt = (dt * T::lit(2.0)).min(dt0);
                entropy_steps.push((t, w.entropy_density()));
                let (rho, e) = w.density_energy(band)?;
                max_rho_drift = max_rho_drift.max((rho - rho0).abs());
                max_e_drift = max_e_drift.max((e - e0).abs());
                if monitor_every > 0 && accepted % monitor_every == 0 && t_final - t > t_end_slack
                {
                    points.push(snapshot(t, &w, band)?);
                }
            }
            StepOutcome::Rejected => {
                rejected += 1;
                streak += 1;
                if streak >= MAX_CONSECUTIVE_REJECTIONS {
                    return Err(Error::Convergence(format!(
                        "step size collapsed after {streak} consecutive rejections at t = {t}"
                    )));
                }
                dt *= T::lit(0.5);
            }
        }
    }

    points.push(snapshot(t, &w, band)?);
    Ok(Trajectory {
        points,
        entropy_steps,
        accepted_steps: accepted,
        rejected_steps: rejected,
        final_dt: dt,
        max_density_drift: max_rho_drift,
        max_energy_drift: max_e_drift,
    })
}

fn snapshot<T: Real>(
    t: T,
    w: &Occupation<T>,
    band: &Dispersion<T>,
) -> Result<TrajectoryPoint<T>> {
    let (rho, energy) = w.density_energy(band)?;
    Ok(TrajectoryPoint {
        t,
        w: w.clone(),
        rho,
        energy,
        entropy: w.entropy_density(),
        dist_fd: relaxation_distance(w, band)?,
    })
}

/// Sup-norm distance from `w` to the equilibrium occupation with the same
/// particle and energy density.
pub fn relaxation_distance<T: Real>(w: &Occupation<T>, band: &Dispersion<T>) -> Result<T> {
    w.grid().ensure_same(band.grid(), "relaxation_distance")?;
    let (rho, e) = w.density_energy(band)?;
    let eq = match_equilibrium(band, rho, e)?;
    let weq = eq.occupation(band)?;
    let mut sup = T::zero();
    for (&a, &b) in w.values().iter().zip(weq.values()) {
        sup = sup.max((a - b).abs());
    }
    Ok(sup)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::band::PairPotential;
    use crate::collision::{build_table, ScalingParameters, TableMode};
    use crate::grid::MomentumGrid;

    fn small_setup() -> (MomentumGrid, Dispersion<f64>, CollisionTable<f64>) {
        let g = MomentumGrid::new(1, 8).unwrap();
        let band = Dispersion::cosine(&g);
        let v = PairPotential::cosine(&g);
        let params = ScalingParameters::new(1.0, 64.0, 8, 0.5).unwrap();
        let table = build_table(&band, &v, &params, Some(0.0), TableMode::Mollified).unwrap();
        (g, band, table)
    }

    fn exact_shell_setup() -> (MomentumGrid, Dispersion<f64>, CollisionTable<f64>) {
        let g = MomentumGrid::new(1, 8).unwrap();
        let band = Dispersion::cosine(&g);
        let v = PairPotential::cosine(&g);
        let params = ScalingParameters::new(1.0, 64.0, 8, 0.5).unwrap();
        let table = build_table(&band, &v, &params, Some(0.0), TableMode::ExactShell).unwrap();
        (g, band, table)
    }

    #[test]
    fn rk4_exact_on_linear_rhs() {
        // dw/dt = c (constant): one step of any size is exact for RK4.
        let g = MomentumGrid::new(1, 4).unwrap();
        let w = Occupation::constant(&g, 0.25).unwrap();
        let rhs = |_: &[f64]| Ok(vec![0.125; 4]);
        match step_rk4(&w, rhs, 2.0).unwrap() {
            StepOutcome::Accepted(next) => {
                for &x in next.values() {
                    assert!((x - 0.5).abs() < 1e-15);
                }
            }
            StepOutcome::Rejected => panic!("admissible step must be accepted"),
        }
    }

    #[test]
    fn rk4_rejects_exiting_steps() {
        let g = MomentumGrid::new(1, 4).unwrap();
        let w = Occupation::constant(&g, 0.9).unwrap();
        let rhs = |_: &[f64]| Ok(vec![1.0; 4]);
        assert!(matches!(step_rk4(&w, rhs, 1.0).unwrap(), StepOutcome::Rejected));
    }

    #[test]
    fn rk4_flags_non_finite_rhs() {
        let g = MomentumGrid::new(1, 4).unwrap();
        let w = Occupation::constant(&g, 0.5).unwrap();
        let rhs = |_: &[f64]| Ok(vec![f64::NAN; 4]);
        assert!(matches!(step_rk4(&w, rhs, 0.1), Err(Error::Numerical(_))));
    }

    #[test]
    fn evolution_conserves_density_and_energy() {
        let (g, band, table) = small_setup();
        let w0 = Occupation::new(
            &g,
            vec![0.9, 0.7, 0.5, 0.3, 0.1, 0.3, 0.5, 0.7],
        )
        .unwrap();
        let traj = evolve(&w0, &band, &table, 2.0, 0.05, 10).unwrap();
        assert!(traj.max_density_drift < 1e-10, "ρ drift {}", traj.max_density_drift);
        // The mollified kernel conserves energy only up to its width; at
        // η = 0.5 the leakage over this run sits near 2e-3.
        assert!(traj.max_energy_drift < 1e-2, "e drift {}", traj.max_energy_drift);
        assert!(traj.accepted_steps >= 40);
        assert_eq!(traj.points.first().unwrap().t, 0.0);
        assert!((traj.last().t - 2.0).abs() < 1e-9);

        // On the exact shell both invariants hold to roundoff.
        let (_, band, sharp) = exact_shell_setup();
        let traj = evolve(&w0, &band, &sharp, 2.0, 0.05, 0).unwrap();
        assert!(traj.max_density_drift < 1e-10, "ρ drift {}", traj.max_density_drift);
        assert!(traj.max_energy_drift < 1e-10, "e drift {}", traj.max_energy_drift);
    }

    #[test]
    fn entropy_never_decreases() {
        let (g, band, table) = small_setup();
        let w0 = Occupation::new(
            &g,
            vec![0.9, 0.7, 0.5, 0.3, 0.1, 0.3, 0.5, 0.7],
        )
        .unwrap();
        let traj = evolve(&w0, &band, &table, 2.0, 0.05, 0).unwrap();
        for pair in traj.entropy_steps.windows(2) {
            assert!(
                pair[1].1 >= pair[0].1 - 1e-12,
                "entropy dropped: {} -> {}",
                pair[0].1,
                pair[1].1
            );
        }
        // monitor_every = 0 records endpoints only.
        assert_eq!(traj.points.len(), 2);
    }

    #[test]
    fn equilibrium_is_a_fixed_point() {
        // Stationarity of the thermal state is exact on the energy shell.
        let (_, band, table) = exact_shell_setup();
        let w0 = Occupation::fermi_dirac(&band, 1.1, 0.2).unwrap();
        let before = w0.values().to_vec();
        let traj = evolve(&w0, &band, &table, 1.0, 0.05, 0).unwrap();
        for (a, b) in before.iter().zip(traj.last().w.values()) {
            assert!((a - b).abs() < 1e-10, "equilibrium moved: {a} -> {b}");
        }
    }

    #[test]
    fn relaxation_distance_vanishes_at_equilibrium() {
        let g = MomentumGrid::new(1, 16).unwrap();
        let band = Dispersion::cosine(&g);
        let w = Occupation::fermi_dirac(&band, 0.8, -0.1).unwrap();
        let d = relaxation_distance(&w, &band).unwrap();
        assert!(d < 1e-9, "distance {d}");
    }

    #[test]
    fn evolve_validates_inputs() {
        let (g, band, table) = small_setup();
        let w0 = Occupation::constant(&g, 0.5).unwrap();
        assert!(evolve(&w0, &band, &table, -1.0, 0.1, 0).is_err());
        assert!(evolve(&w0, &band, &table, 1.0, 0.0, 0).is_err());
        let other = MomentumGrid::new(1, 16).unwrap();
        let w_other = Occupation::constant(&other, 0.5).unwrap();
        assert!(evolve(&w_other, &band, &table, 1.0, 0.1, 0).is_err());
    }
}
