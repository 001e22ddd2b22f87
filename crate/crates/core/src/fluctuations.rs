//! Fluctuation-scale diagnostics for quasifree lattice states: variances of
//! centered block sums, existence classification of the fluctuation limit,
//! Gaussian characteristic values and commutation phases, the first-order
//! vanishing probe, the finite-block/finite-horizon second-order correction
//! kernel with its regime classification, and interaction drifts checked
//! against exact small-volume references.

use std::io::Write;

use rayon::prelude::*;

use crate::band::{Dispersion, PairPotential};
use crate::error::{Error, Result};
use crate::grid::MomentumGrid;
use crate::quasifree::{Leg, QuadraticObservable, QuasifreeState, SmearedOp, WickContext};
use crate::scalar::{cis, czero, Real, C};

/// Loop budget of the second-order correction kernel (`n^{4ν}` terms).
pub const MAX_CORRECTION_TERMS: u128 = 1_000_000_000;
/// Increment-decay threshold of the convergence classifier.
pub const GEOMETRIC_DECAY_LIMIT: f64 = 0.8;
/// Log-log slope beyond which a variance sequence counts as growing.
pub const GROWTH_SLOPE_LIMIT: f64 = 0.1;

/// Elementary oscillatory time integral `∫₀^h e^{iωt} dt`, evaluated in the
/// cancellation-free form `(sin ωh + 2i sin²(ωh/2))/ω`, with the exact value
/// `h` at `ω = 0`.
pub fn osc_integral<T: Real>(omega: T, horizon: T) -> C<T> {
    if omega == T::zero() {
        return C::new(horizon, T::zero());
    }
    let theta = omega * horizon;
    let half = theta * T::lit(0.5);
    let s = half.sin();
    C::new(theta.sin() / omega, T::lit(2.0) * s * s / omega)
}

// ---------------------------------------------------------------------------
// Block variances and the existence classifier
// ---------------------------------------------------------------------------

/// Variance of the `K^{−ν/2}`-normalized centered block sum of translates
/// of `A`: the triangular-weighted sum
/// `V_K = Σ_d Π_a (1 − |d_a|/K) · Re C_AA(d)` over the difference range
/// `|d_a| < K` of the truncated autocorrelation.
pub fn block_variance<T: Real>(
    state: &QuasifreeState<T>,
    a: &QuadraticObservable<T>,
    k_block: usize,
) -> Result<T> {
    state.grid().ensure_same(a.grid(), "block_variance")?;
    let grid = *state.grid();
    if k_block == 0 {
        return Err(Error::Config("block size K must be at least 1".into()));
    }
    if 2 * k_block > grid.points_per_axis() {
        return Err(Error::Config(format!(
            "block size {} too large for {} points per axis (need 2K ≤ n)",
            k_block,
            grid.points_per_axis()
        )));
    }
    let kk = T::count(k_block);
    let range = k_block as i64 - 1;
    let (lo1, hi1) = if grid.dim() == 2 { (-range, range) } else { (0, 0) };
    let mut acc = T::zero();
    for d0 in -range..=range {
        let w0 = T::one() - T::count(d0.unsigned_abs() as usize) / kk;
        for d1 in lo1..=hi1 {
            let w1 = T::one() - T::count(d1.unsigned_abs() as usize) / kk;
            let c = state.truncated_corr(a, a, [d0, d1])?;
            acc += w0 * w1 * c.re;
        }
    }
    Ok(acc)
}

/// Verdict of the block-variance sequence classifier.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum VarianceClass {
    /// The sequence settles; the fluctuation limit exists.
    Convergent,
    /// The sequence grows or fails to settle; no Gaussian limit.
    MarginalDivergent,
}

impl std::fmt::Display for VarianceClass {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            VarianceClass::Convergent => write!(f, "convergent"),
            VarianceClass::MarginalDivergent => write!(f, "marginal/divergent"),
        }
    }
}

/// Result of [`variance_limit`]: the classification, the extrapolated limit
/// for convergent sequences, the measured `(K, V_K)` values, and the fit
/// diagnostics behind the verdict.
#[derive(Debug, Clone)]
pub struct VarianceLimit<T> {
    /// Convergent or marginal/divergent.
    pub class: VarianceClass,
    /// Tail-extrapolated limit (convergent sequences only).
    pub limit: Option<T>,
    /// The measured sequence.
    pub values: Vec<(usize, T)>,
    /// Log-log slope of `V_K` against `K` (positive sequences only).
    pub log_slope: Option<T>,
    /// Log-log slope of `K^ν V_K` against `K`.
    pub scaled_slope: Option<T>,
    /// Geometric mean of successive increment ratios `|ΔV_{i+1}|/|ΔV_i|`.
    pub increment_ratio: Option<T>,
}

/// Classifies the block-variance sequence over an increasing list of block
/// sizes and extrapolates its limit when it converges.
///
/// Decision rules, in order: (a) a flat sequence is convergent at its last
/// value; (b) a sequence that decays in `V_K` while `K^ν V_K` grows is the
/// slow-clustering marginal case — no Gaussian limit at this normalization;
/// (c) a growing sequence (log-log slope > 0.1) is marginal/divergent;
/// (d) geometrically decaying increments (mean ratio < 0.8) are convergent,
/// with the geometric tail resummed onto the last value; (e) anything else
/// is marginal/divergent.
pub fn variance_limit<T: Real>(
    state: &QuasifreeState<T>,
    a: &QuadraticObservable<T>,
    k_list: &[usize],
) -> Result<VarianceLimit<T>> {
    if k_list.len() < 4 {
        return Err(Error::Config(format!(
            "need at least 4 block sizes to classify, got {}",
            k_list.len()
        )));
    }
    if k_list.windows(2).any(|w| w[1] <= w[0]) {
        return Err(Error::Config("block sizes must be strictly increasing".into()));
    }
    let vs: Vec<T> = k_list
        .iter()
        .map(|&k| block_variance(state, a, k))
        .collect::<Result<_>>()?;
    let values: Vec<(usize, T)> = k_list.iter().copied().zip(vs.iter().copied()).collect();

    let vmax = vs.iter().fold(T::zero(), |m, &v| m.max(v.abs()));
    let tiny = T::lit(1e-12) * (T::one() + vmax);
    let increments: Vec<T> = vs.windows(2).map(|w| w[1] - w[0]).collect();

    let logk: Vec<T> = k_list.iter().map(|&k| T::count(k).ln()).collect();
    let log_slope = if vs.iter().all(|&v| v > T::zero()) {
        let logv: Vec<T> = vs.iter().map(|&v| v.ln()).collect();
        fit_slope(&logk, &logv)
    } else {
        None
    };
    let nu = T::count(state.grid().dim());
    let scaled_slope = log_slope.map(|s| s + nu);

    let mut ratios: Vec<T> = Vec::new();
    for w in increments.windows(2) {
        if w[0].abs() > tiny && w[1].abs() > tiny {
            ratios.push(w[1].abs() / w[0].abs());
        }
    }
    let increment_ratio = if ratios.is_empty() {
        None
    } else {
        let log_mean = ratios.iter().map(|&r| r.ln()).sum::<T>() / T::count(ratios.len());
        Some(log_mean.exp())
    };

    let decay_limit = T::lit(GEOMETRIC_DECAY_LIMIT);
    let growth = T::lit(GROWTH_SLOPE_LIMIT);

    let (class, limit) = if increments.iter().all(|&d| d.abs() <= tiny) {
        (VarianceClass::Convergent, Some(*vs.last().expect("nonempty")))
    } else if matches!((log_slope, scaled_slope), (Some(s), Some(z)) if s < -growth && z > growth)
    {
        (VarianceClass::MarginalDivergent, None)
    } else if matches!(log_slope, Some(s) if s > growth) {
        (VarianceClass::MarginalDivergent, None)
    } else if matches!(increment_ratio, Some(r) if r < decay_limit) {
        let r = increment_ratio.expect("matched above");
        let last_v = *vs.last().expect("nonempty");
        let last_d = *increments.last().expect("nonempty");
        (VarianceClass::Convergent, Some(last_v + last_d * r / (T::one() - r)))
    } else {
        (VarianceClass::MarginalDivergent, None)
    };

    Ok(VarianceLimit { class, limit, values, log_slope, scaled_slope, increment_ratio })
}

/// The Gaussian limit datum of one observable: its mean centering and the
/// limiting variance of its normalized block sums.
#[derive(Debug, Clone, Copy)]
pub struct WeylElement<T> {
    /// State mean subtracted from every translate.
    pub centering: T,
    /// Limit variance `S(A,A)`.
    pub gaussian_variance: T,
}

impl<T: Real> WeylElement<T> {
    /// Characteristic value `exp(−S/2) ∈ (0, 1]`.
    pub fn characteristic(&self) -> T {
        (-self.gaussian_variance * T::lit(0.5)).exp()
    }
}

/// Default increasing block-size ladder `n/16 < n/8 < n/4 < n/2` used to
/// gate the Gaussian limit; needs `n ≥ 16`.
fn default_block_ladder(grid: &MomentumGrid) -> Result<Vec<usize>> {
    let n = grid.points_per_axis();
    if n < 16 {
        return Err(Error::Config(format!(
            "need at least 16 points per axis to classify the block ladder, got {n}"
        )));
    }
    Ok(vec![n / 16, n / 8, n / 4, n / 2])
}

/// Builds the Gaussian limit datum of `A`, gated by the block-variance
/// classifier on the default ladder.
pub fn weyl_element<T: Real>(
    state: &QuasifreeState<T>,
    a: &QuadraticObservable<T>,
) -> Result<WeylElement<T>> {
    let ladder = default_block_ladder(state.grid())?;
    let verdict = variance_limit(state, a, &ladder)?;
    if verdict.class != VarianceClass::Convergent {
        return Err(Error::Domain(
            "fluctuation algebra does not exist for this observable (block variance does not converge)"
                .into(),
        ));
    }
    Ok(WeylElement {
        centering: state.mean(a)?,
        gaussian_variance: state.covariance(a, a)?,
    })
}

/// Characteristic value of the limiting Gaussian element, `exp(−S(A,A)/2)`.
pub fn weyl_char<T: Real>(
    state: &QuasifreeState<T>,
    a: &QuadraticObservable<T>,
) -> Result<T> {
    Ok(weyl_element(state, a)?.characteristic())
}

/// Commutation phase `e^{iσ(A,B)}` of two limit elements; unit modulus, and
/// the product of the two orderings is 1.
pub fn ccr_phase<T: Real>(
    state: &QuasifreeState<T>,
    a: &QuadraticObservable<T>,
    b: &QuadraticObservable<T>,
) -> Result<C<T>> {
    Ok(cis(state.symplectic(a, b)?))
}

// ---------------------------------------------------------------------------
// Interaction machinery shared by the probe, the drifts, and the scans
// ---------------------------------------------------------------------------

/// Mean of the commutator of a conserving quartic monomial with a
/// gauge-invariant quadratic observable in a diagonal quasifree state:
/// `ω([d†_k d†_l d_m d_p, Σ B_{ab} d†_a d_b])`, reduced by Wick pairing to
/// four index-coincidence terms. For momentum-conserving quadruples each
/// coincidence forces its occupation difference to vanish, so the value is
/// exactly zero there; the formula stays valid off the conservation shell.
fn quartic_commutator_mean<T: Real>(
    w: &[T],
    k: usize,
    l: usize,
    m: usize,
    p: usize,
    b: &impl Fn(usize, usize) -> C<T>,
) -> C<T> {
    let mut acc = czero::<T>();
    if l == m {
        acc = acc + b(p, k) * C::new(w[l] * (w[k] - w[p]), T::zero());
    }
    if l == p {
        acc = acc + b(m, k) * C::new(w[l] * (w[m] - w[k]), T::zero());
    }
    if k == p {
        acc = acc + b(m, l) * C::new(w[k] * (w[l] - w[m]), T::zero());
    }
    if k == m {
        acc = acc + b(p, l) * C::new(w[k] * (w[p] - w[l]), T::zero());
    }
    acc
}

/// First-order interaction drift `∫₀ᵗ ω([V(s), A]) ds` with the quartic
/// pair interaction `V = λ Σ M(k;m,p) d†_k d†_l d_m d_p` (momentum
/// conserving, set up to match the exact small-volume reference with unit
/// scale parameter) and analytic time integrals.
///
/// For gauge-invariant quadratic observables in momentum-diagonal states
/// every quadruple contributes exactly zero — conservation forces each Wick
/// coincidence onto a vanishing occupation difference — so the drift is an
/// exact structural zero; the sum is still carried out literally.
pub fn weyl_drift<T: Real>(
    state: &QuasifreeState<T>,
    band: &Dispersion<T>,
    v: &PairPotential<T>,
    lambda: T,
    a: &QuadraticObservable<T>,
    t: T,
) -> Result<C<T>> {
    state.grid().ensure_same(a.grid(), "weyl_drift")?;
    weyl_drift_with(state, band, v, lambda, |i, j| a.mode_matrix_entry(i, j), t)
}

/// [`weyl_drift`] against an arbitrary quadratic observable given by its
/// mode-matrix closure `b(i, j)`; used for observables (the total number,
/// blocked sums) that are not of rank-two profile form.
pub fn weyl_drift_with<T: Real>(
    state: &QuasifreeState<T>,
    band: &Dispersion<T>,
    v: &PairPotential<T>,
    lambda: T,
    b: impl Fn(usize, usize) -> C<T>,
    t: T,
) -> Result<C<T>> {
    state.grid().ensure_same(band.grid(), "weyl_drift")?;
    state.grid().ensure_same(v.grid(), "weyl_drift")?;
    if !t.is_finite() {
        return Err(Error::Config("drift horizon must be finite".into()));
    }
    let grid = *state.grid();
    let np = grid.len();
    let eps = band.values();
    let vv = v.values();
    let w = state.occupation().values();
    let mut acc = czero::<T>();
    for k in 0..np {
        for m in 0..np {
            for p in 0..np {
                let l = grid.fourth_on_shell(k, m, p);
                if k == l || m == p {
                    continue;
                }
                let mel = vv[grid.diff(k, p)] - vv[grid.diff(k, m)];
                if mel == T::zero() {
                    continue;
                }
                let de = (eps[k] + eps[l]) - (eps[m] + eps[p]);
                let comm = quartic_commutator_mean(w, k, l, m, p, &b);
                if comm == czero::<T>() {
                    continue;
                }
                acc = acc + comm * osc_integral(de, t) * C::new(lambda * mel, T::zero());
            }
        }
    }
    Ok(acc)
}

/// Precomputed first-order probe data: one `(frequency, weight)` pair per
/// contributing interaction quadruple, with the weight
/// `M(k;m,p) · ω([d†_k d†_l d_m d_p, A²])` evaluated by the Wick pairing
/// engine. The pairs are horizon-independent, so one build serves a whole
/// horizon sweep.
#[derive(Debug, Clone)]
pub struct ProbeKernel<T> {
    lambda: T,
    freqs: Vec<T>,
    weights: Vec<C<T>>,
}

impl<T: Real> ProbeKernel<T> {
    /// Evaluates the probe weights for state, band, interaction, and
    /// observable.
    pub fn build(
        state: &QuasifreeState<T>,
        band: &Dispersion<T>,
        v: &PairPotential<T>,
        lambda: T,
        a: &QuadraticObservable<T>,
    ) -> Result<Self> {
        state.grid().ensure_same(band.grid(), "probe")?;
        state.grid().ensure_same(v.grid(), "probe")?;
        state.grid().ensure_same(a.grid(), "probe")?;
        if !lambda.is_finite() {
            return Err(Error::Config("coupling must be finite".into()));
        }
        let grid = *state.grid();
        let np = grid.len();
        let eps = band.values();
        let vv = v.values();
        let w = state.occupation().values();

        let legs = a.mode_legs();
        let mut ctx = WickContext::new(w);
        let mut word_ids = [[0usize; 2]; 2];
        for (i, (u, vann)) in legs.iter().enumerate() {
            word_ids[i][0] = ctx.register(u)?;
            word_ids[i][1] = ctx.register(vann)?;
        }
        let words: Vec<[SmearedOp; 2]> = word_ids
            .iter()
            .map(|ids| {
                [
                    SmearedOp::create(Leg::Dense(ids[0])),
                    SmearedOp::destroy(Leg::Dense(ids[1])),
                ]
            })
            .collect();

        let mut freqs = Vec::new();
        let mut weights = Vec::new();
        let mut buf: Vec<SmearedOp> = Vec::with_capacity(8);
        for k in 0..np {
            for m in 0..np {
                for p in 0..np {
                    let l = grid.fourth_on_shell(k, m, p);
                    if k == l || m == p {
                        continue;
                    }
                    let mel = vv[grid.diff(k, p)] - vv[grid.diff(k, m)];
                    if mel == T::zero() {
                        continue;
                    }
                    let quartic = [
                        SmearedOp::create(Leg::Pinned(k)),
                        SmearedOp::create(Leg::Pinned(l)),
                        SmearedOp::destroy(Leg::Pinned(m)),
                        SmearedOp::destroy(Leg::Pinned(p)),
                    ];
                    let mut comm = czero::<T>();
                    for wa in &words {
                        for wb in &words {
                            buf.clear();
                            buf.extend_from_slice(&quartic);
                            buf.extend_from_slice(wa);
                            buf.extend_from_slice(wb);
                            let forward = ctx.expect(&buf)?;
                            buf.clear();
                            buf.extend_from_slice(wa);
                            buf.extend_from_slice(wb);
                            buf.extend_from_slice(&quartic);
                            let backward = ctx.expect(&buf)?;
                            comm = comm + forward - backward;
                        }
                    }
                    if comm == czero::<T>() {
                        continue;
                    }
                    let de = (eps[k] + eps[l]) - (eps[m] + eps[p]);
                    freqs.push(de);
                    weights.push(comm * C::new(mel, T::zero()));
                }
            }
        }
        Ok(Self { lambda, freqs, weights })
    }

    /// Number of stored quadruple weights.
    pub fn len(&self) -> usize {
        self.freqs.len()
    }

    /// Whether no quadruple contributes.
    pub fn is_empty(&self) -> bool {
        self.freqs.is_empty()
    }

    /// Total weight carried by the stationary (zero-frequency) set; its
    /// cancellation is what makes the probe decay.
    pub fn stationary_weight(&self) -> C<T> {
        let tol = T::lit(1e-12);
        let mut acc = czero::<T>();
        for (f, w) in self.freqs.iter().zip(&self.weights) {
            if f.abs() <= tol {
                acc = acc + *w;
            }
        }
        acc
    }

    /// Probe value `λ h^{−1/2} Σ_q weight_q · ∫₀^h e^{iω_q t} dt` at one
    /// horizon.
    pub fn eval(&self, horizon: T) -> Result<C<T>> {
        if !(horizon > T::zero()) || !horizon.is_finite() {
            return Err(Error::Config(format!(
                "probe horizon {horizon} must be positive and finite"
            )));
        }
        let mut acc = czero::<T>();
        for (&f, &w) in self.freqs.iter().zip(&self.weights) {
            acc = acc + w * osc_integral(f, horizon);
        }
        Ok(acc * C::new(self.lambda / horizon.sqrt(), T::zero()))
    }
}

/// First-order term of the interaction expansion at kinetic scaling: the
/// coupling carries `h^{−1/2}` and the horizon grows linearly, so the value
/// decays like `h^{−1/2}` once the stationary weight cancels.
pub fn first_order_probe<T: Real>(
    state: &QuasifreeState<T>,
    band: &Dispersion<T>,
    v: &PairPotential<T>,
    lambda: T,
    a: &QuadraticObservable<T>,
    horizon: T,
) -> Result<C<T>> {
    ProbeKernel::build(state, band, v, lambda, a)?.eval(horizon)
}

// ---------------------------------------------------------------------------
// Second-order block/horizon correction and the regime scan
// ---------------------------------------------------------------------------

/// Per-axis block phase sums `D_K[d] = Σ_{x=0}^{K−1} e^{2πi d x / n}`.
fn block_phase_kernel<T: Real>(grid: &MomentumGrid, k_block: usize) -> Vec<C<T>> {
    let n = grid.points_per_axis();
    let two_pi = T::PI() * T::lit(2.0);
    (0..n)
        .map(|d| {
            if d == 0 {
                C::new(T::count(k_block), T::zero())
            } else {
                let unit = two_pi * T::count(d) / T::count(n);
                let wrapped = two_pi * T::count((d * k_block) % n) / T::count(n);
                (cis(wrapped) - C::new(T::one(), T::zero()))
                    / (cis(unit) - C::new(T::one(), T::zero()))
            }
        })
        .collect()
}

/// Additive second-order correction to the block variance at block size `K`
/// and kinetic horizon `N`:
///
/// `ΔV = (λ² / (K^ν N)) (1/n^ν)² Σ_{l,m} w_l (1−w_m)
///        Σ_{x,y∈B_K} |Σ_k Â(k) · [v(m−l) − v(k−m)] · ∫₀^N e^{i(ε_l−ε_m+ε_k)t} dt · e^{i p_k·(x−y)}|²`,
///
/// where `Â(k)` is the diagonal mode weight of the observable and the double
/// block sum collapses to squared geometric phase kernels `|D_K(k₁−k₂)|²`.
///
/// Weight-family conventions (documented here because only structural claims
/// are contracted):
/// * one vertex factor and one Pauli pair `w_l(1−w_m)` are fixed per side;
/// * the mode sum runs over the *oscillatory* configurations only — terms
///   whose frequency `ε_l − ε_m + ε_k` vanishes are secular (they dress the
///   kinetic flow itself, growing linearly in the horizon) and are excluded
///   from the variance correction;
/// * the double block sum over `B_K × B_K` matches the quadratic nature of a
///   variance, so the diagonal `k₁ = k₂` contribution scales like `K^ν` and
///   the whole correction like `K^ν/N`.
///
/// The contracted claims are structural: nonnegativity (the summand is a
/// square norm), the `λ²` scaling, vanishing as `K^ν/N → 0`, and growth in
/// `K` at fixed `N`.
pub fn scaling_correction<T: Real>(
    state: &QuasifreeState<T>,
    band: &Dispersion<T>,
    v: &PairPotential<T>,
    lambda: T,
    a: &QuadraticObservable<T>,
    k_block: usize,
    horizon: T,
) -> Result<T> {
    state.grid().ensure_same(band.grid(), "scaling_correction")?;
    state.grid().ensure_same(v.grid(), "scaling_correction")?;
    state.grid().ensure_same(a.grid(), "scaling_correction")?;
    if k_block == 0 {
        return Err(Error::Config("block size K must be at least 1".into()));
    }
    if !(horizon > T::zero()) || !horizon.is_finite() {
        return Err(Error::Config(format!(
            "horizon {horizon} must be positive and finite"
        )));
    }
    let grid = *state.grid();
    let np = grid.len() as u128;
    if np.pow(4) > MAX_CORRECTION_TERMS {
        return Err(Error::Resource(format!(
            "correction kernel needs {} terms, over the {MAX_CORRECTION_TERMS} budget",
            np.pow(4)
        )));
    }
    let np = grid.len();
    let eps = band.values();
    let vv = v.values();
    let w = state.occupation().values();
    let dker = block_phase_kernel::<T>(&grid, k_block);
    let n_axis = grid.points_per_axis();
    let ahat: Vec<C<T>> = (0..np).map(|k| a.mode_matrix_entry(k, k)).collect();
    let eps_scale = eps
        .iter()
        .fold(T::zero(), |acc, e| if e.abs() > acc { e.abs() } else { acc });
    let secular_tol = T::lit(1e-12) * (T::one() + eps_scale);

    // Squared pairwise block kernel Π_axes |D_K[(j1 − j2) mod n]|².
    let pair_kernel = |k1: usize, k2: usize| -> T {
        let a1 = grid.axes(k1);
        let a2 = grid.axes(k2);
        let mut prod = T::one();
        for ax in 0..grid.dim() {
            let d = (a1[ax] + n_axis - a2[ax]) % n_axis;
            prod = prod * dker[d].norm_sqr();
        }
        prod
    };

    let partials: Vec<C<T>> = (0..np)
        .into_par_iter()
        .map(|l| {
            let mut cvec = vec![czero::<T>(); np];
            let mut row = czero::<T>();
            for m in 0..np {
                let pauli = w[l] * (T::one() - w[m]);
                if pauli == T::zero() {
                    continue;
                }
                let vml = vv[grid.diff(m, l)];
                for (k, c) in cvec.iter_mut().enumerate() {
                    let omega = eps[l] - eps[m] + eps[k];
                    if omega.abs() <= secular_tol {
                        // Secular configuration: dresses the kinetic flow,
                        // not the fluctuation variance.
                        *c = czero::<T>();
                        continue;
                    }
                    let mel = vml - vv[grid.diff(k, m)];
                    *c = ahat[k] * osc_integral(omega, horizon) * C::new(mel, T::zero());
                }
                let mut inner = czero::<T>();
                for k1 in 0..np {
                    if cvec[k1] == czero::<T>() {
                        continue;
                    }
                    for k2 in 0..np {
                        inner =
                            inner + cvec[k1] * cvec[k2].conj() * C::new(pair_kernel(k1, k2), T::zero());
                    }
                }
                row = row + inner * C::new(pauli, T::zero());
            }
            row
        })
        .collect();
    let mut acc = czero::<T>();
    for p in partials {
        acc = acc + p;
    }

    let scale = acc.re.abs() + T::one();
    if acc.im.abs() > T::lit(1e-12) * scale {
        return Err(Error::Numerical(format!(
            "correction kernel lost hermiticity: imaginary part {:e}",
            acc.im
        )));
    }
    let cw = grid.cell_weight::<T>();
    let kvol = T::count(k_block).powi(grid.dim() as i32);
    Ok((lambda * lambda * cw * cw * acc.re / (kvol * horizon)).max(T::zero()))
}

/// Which moment a regime scan probes.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ScanMoment {
    /// First-moment corrections (vanish identically by symmetry).
    Mean,
    /// Second-moment corrections `ΔV(K, N)`.
    Variance,
}

impl std::fmt::Display for ScanMoment {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            ScanMoment::Mean => write!(f, "mean"),
            ScanMoment::Variance => write!(f, "variance"),
        }
    }
}

/// Cell label of the variance scan.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RegimeLabel {
    /// Correction negligible: the fluctuation limit is unaffected.
    Regular,
    /// Correction of the order of the limit variance: finite but shifted.
    FiniteShifted,
    /// Correction dominant and growing with the block: no limit.
    Divergent,
}

impl std::fmt::Display for RegimeLabel {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            RegimeLabel::Regular => write!(f, "regular"),
            RegimeLabel::FiniteShifted => write!(f, "finite-shifted"),
            RegimeLabel::Divergent => write!(f, "divergent"),
        }
    }
}

/// Classification thresholds of the variance scan, in absolute units of the
/// correction. Defaults derive from the unperturbed limit variance `V_∞`:
/// `regular = 0.05·V_∞`, `divergent = V_∞`.
#[derive(Debug, Clone, Copy)]
pub struct RegimeThresholds<T> {
    /// Corrections below this are regular.
    pub regular: T,
    /// Corrections above this (and growing in `K`) are divergent.
    pub divergent: T,
}

/// One `(K, N)` cell of a regime scan.
#[derive(Debug, Clone, Copy)]
pub struct RegimeCell<T> {
    /// Block size.
    pub block: usize,
    /// Kinetic horizon.
    pub horizon: T,
    /// Scaling ratio `K^ν / N`.
    pub ratio: T,
    /// Correction value (mean magnitude or `ΔV`).
    pub value: T,
    /// Label (variance scans only).
    pub label: Option<RegimeLabel>,
}

/// Scan result: cells, the fitted scaling exponent, and the thresholds.
#[derive(Debug, Clone)]
pub struct RegimeReport<T> {
    /// Probed moment.
    pub moment: ScanMoment,
    /// All `(K, N)` cells in row-major `(K, N)` order.
    pub cells: Vec<RegimeCell<T>>,
    /// Least-squares slope of `log ΔV` against `log(K^ν/N)` (variance
    /// scans with enough positive cells).
    pub exponent: Option<T>,
    /// Thresholds used for labeling (variance scans).
    pub thresholds: Option<RegimeThresholds<T>>,
    /// Unperturbed limit variance the default thresholds derive from.
    pub base_variance: Option<T>,
}

impl<T: Real> RegimeReport<T> {
    /// Writes the scan as CSV: provenance comment, header, one row per cell.
    pub fn write_csv<W: Write>(&self, out: &mut W) -> Result<()> {
        write!(out, "# regime-scan moment={}", self.moment)?;
        if let Some(th) = &self.thresholds {
            write!(out, " threshold_regular={:e} threshold_divergent={:e}", th.regular, th.divergent)?;
        }
        if let Some(e) = self.exponent {
            write!(out, " exponent={e:e}")?;
        }
        writeln!(out)?;
        writeln!(out, "K,N,ratio,value,label")?;
        for c in &self.cells {
            writeln!(
                out,
                "{},{:e},{:e},{:e},{}",
                c.block,
                c.horizon,
                c.ratio,
                c.value,
                c.label.map_or_else(|| "-".to_string(), |l| l.to_string())
            )?;
        }
        Ok(())
    }

    /// Writes the scan as a JSON document.
    pub fn write_json<W: Write>(&self, out: &mut W) -> Result<()> {
        writeln!(out, "{{")?;
        writeln!(out, "  \"moment\": \"{}\",", self.moment)?;
        match self.exponent {
            Some(e) => writeln!(out, "  \"exponent\": {e:e},")?,
            None => writeln!(out, "  \"exponent\": null,")?,
        }
        match &self.thresholds {
            Some(th) => writeln!(
                out,
                "  \"thresholds\": {{\"regular\": {:e}, \"divergent\": {:e}}},",
                th.regular, th.divergent
            )?,
            None => writeln!(out, "  \"thresholds\": null,")?,
        }
        match self.base_variance {
            Some(v) => writeln!(out, "  \"base_variance\": {v:e},")?,
            None => writeln!(out, "  \"base_variance\": null,")?,
        }
        writeln!(out, "  \"cells\": [")?;
        for (i, c) in self.cells.iter().enumerate() {
            let comma = if i + 1 < self.cells.len() { "," } else { "" };
            let label = c
                .label
                .map_or_else(|| "null".to_string(), |l| format!("\"{l}\""));
            writeln!(
                out,
                "    {{\"block\": {}, \"horizon\": {:e}, \"ratio\": {:e}, \"value\": {:e}, \"label\": {}}}{}",
                c.block, c.horizon, c.ratio, c.value, label, comma
            )?;
        }
        writeln!(out, "  ]")?;
        writeln!(out, "}}")?;
        Ok(())
    }
}

/// Scans the correction landscape over blocks `K` and horizons `N`.
///
/// The mean scan evaluates the first-moment correction of the blocked
/// observable for every cell and verifies that it vanishes (it does so
/// identically: momentum conservation forces every Wick coincidence onto a
/// vanishing occupation difference, in either limit order). The variance
/// scan tabulates `ΔV(K, N)`, fits the scaling exponent of `ΔV` against
/// `K^ν/N`, and labels every cell regular / finite-shifted / divergent
/// against the thresholds (defaults derived from the unperturbed limit
/// variance; divergent additionally requires growth in `K` at fixed `N`).
#[allow(clippy::too_many_arguments)]
pub fn regime_scan<T: Real>(
    state: &QuasifreeState<T>,
    band: &Dispersion<T>,
    v: &PairPotential<T>,
    lambda: T,
    a: &QuadraticObservable<T>,
    k_values: &[usize],
    horizons: &[T],
    moment: ScanMoment,
    thresholds: Option<RegimeThresholds<T>>,
) -> Result<RegimeReport<T>> {
    if k_values.is_empty() || horizons.is_empty() {
        return Err(Error::Config("regime scan needs nonempty K and N grids".into()));
    }
    let grid = *state.grid();
    let nu = grid.dim() as i32;
    let ratio_of = |k: usize, h: T| T::count(k).powi(nu) / h;

    // Distinct-ratio count gates the scaling fit.
    let mut ratios: Vec<f64> = Vec::new();
    for &k in k_values {
        for &h in horizons {
            let r = ratio_of(k, h).as_f64();
            if !ratios.iter().any(|&x| (x - r).abs() <= 1e-9 * x.abs().max(1e-300)) {
                ratios.push(r);
            }
        }
    }
    if ratios.len() < 3 {
        return Err(Error::Config(format!(
            "regime scan needs at least 3 distinct K^ν/N ratios, got {}",
            ratios.len()
        )));
    }

    match moment {
        ScanMoment::Mean => {
            let eps = band.values();
            let vv = v.values();
            let w = state.occupation().values();
            let np = grid.len();
            let n_axis = grid.points_per_axis();
            let mut cells = Vec::with_capacity(k_values.len() * horizons.len());
            for &k_block in k_values {
                let dker = block_phase_kernel::<T>(&grid, k_block);
                let scale = T::count(k_block)
                    .powi(nu)
                    .sqrt()
                    .recip();
                let blocked = |i: usize, j: usize| -> C<T> {
                    let ai = grid.axes(i);
                    let aj = grid.axes(j);
                    let mut prod = C::new(scale, T::zero());
                    for ax in 0..grid.dim() {
                        let d = (ai[ax] + n_axis - aj[ax]) % n_axis;
                        prod = prod * dker[d];
                    }
                    a.mode_matrix_entry(i, j) * prod
                };
                for &h in horizons {
                    let mut acc = czero::<T>();
                    for k in 0..np {
                        for m in 0..np {
                            for p in 0..np {
                                let l = grid.fourth_on_shell(k, m, p);
                                if k == l || m == p {
                                    continue;
                                }
                                let mel = vv[grid.diff(k, p)] - vv[grid.diff(k, m)];
                                if mel == T::zero() {
                                    continue;
                                }
                                let comm = quartic_commutator_mean(w, k, l, m, p, &blocked);
                                if comm == czero::<T>() {
                                    continue;
                                }
                                let de = (eps[k] + eps[l]) - (eps[m] + eps[p]);
                                acc = acc
                                    + comm * osc_integral(de, h) * C::new(lambda * mel, T::zero());
                            }
                        }
                    }
                    let value = (acc.re * acc.re + acc.im * acc.im).sqrt();
                    if value > T::lit(1e-12) {
                        return Err(Error::Numerical(format!(
                            "first-moment correction {value:e} at (K={k_block}, N={h}) violates the symmetry bound"
                        )));
                    }
                    cells.push(RegimeCell {
                        block: k_block,
                        horizon: h,
                        ratio: ratio_of(k_block, h),
                        value,
                        label: None,
                    });
                }
            }
            Ok(RegimeReport {
                moment,
                cells,
                exponent: None,
                thresholds: None,
                base_variance: None,
            })
        }
        ScanMoment::Variance => {
            let base = state.covariance(a, a)?;
            let th = match thresholds {
                Some(t) => t,
                None => {
                    if !(base > T::zero()) {
                        return Err(Error::Config(
                            "limit variance is degenerate; pass explicit regime thresholds"
                                .into(),
                        ));
                    }
                    RegimeThresholds { regular: T::lit(0.05) * base, divergent: base }
                }
            };
            let mut cells = Vec::with_capacity(k_values.len() * horizons.len());
            for &k_block in k_values {
                for &h in horizons {
                    let dv = scaling_correction(state, band, v, lambda, a, k_block, h)?;
                    cells.push(RegimeCell {
                        block: k_block,
                        horizon: h,
                        ratio: ratio_of(k_block, h),
                        value: dv,
                        label: None,
                    });
                }
            }
            // Labels: divergence additionally requires growth in K at fixed N.
            let snapshot = cells.clone();
            for cell in &mut cells {
                let increasing = snapshot
                    .iter()
                    .filter(|c| c.horizon == cell.horizon && c.block < cell.block)
                    .max_by_key(|c| c.block)
                    .map_or(true, |prev| cell.value > prev.value);
                cell.label = Some(if cell.value < th.regular {
                    RegimeLabel::Regular
                } else if cell.value > th.divergent && increasing {
                    RegimeLabel::Divergent
                } else {
                    RegimeLabel::FiniteShifted
                });
            }
            let mut xs = Vec::new();
            let mut ys = Vec::new();
            for c in &cells {
                if c.value > T::zero() {
                    xs.push(c.ratio.ln());
                    ys.push(c.value.ln());
                }
            }
            let exponent = fit_slope(&xs, &ys);
            Ok(RegimeReport {
                moment,
                cells,
                exponent,
                thresholds: Some(th),
                base_variance: Some(base),
            })
        }
    }
}

/// Least-squares slope of `ys` against `xs`; `None` when degenerate.
fn fit_slope<T: Real>(xs: &[T], ys: &[T]) -> Option<T> {
    if xs.len() < 2 || xs.len() != ys.len() {
        return None;
    }
    let n = T::count(xs.len());
    let xm = xs.iter().copied().sum::<T>() / n;
    let ym = ys.iter().copied().sum::<T>() / n;
    let mut sxx = T::zero();
    let mut sxy = T::zero();
    for (&x, &y) in xs.iter().zip(ys) {
        sxx += (x - xm) * (x - xm);
        sxy += (x - xm) * (y - ym);
    }
    if sxx <= T::zero() {
        return None;
    }
    Some(sxy / sxx)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::occupation::Occupation;
    use crate::quasifree::SiteProfile;
    use approx::assert_abs_diff_eq;

    fn single_site_number(grid: &MomentumGrid) -> QuadraticObservable<f64> {
        QuadraticObservable::number_at(grid, [0, 0]).unwrap()
    }

    fn product_state(grid: &MomentumGrid, rho: f64) -> QuasifreeState<f64> {
        QuasifreeState::new(Occupation::constant(grid, rho).unwrap())
    }

    #[test]
    fn oscillatory_integral_matches_quadrature() {
        let (omega, horizon) = (0.7f64, 5.0f64);
        let steps = 200_000;
        let dt = horizon / steps as f64;
        let mut acc = C::new(0.0, 0.0);
        for i in 0..steps {
            let t = (i as f64 + 0.5) * dt;
            acc += C::new((omega * t).cos(), (omega * t).sin()) * dt;
        }
        let exact = osc_integral(omega, horizon);
        assert_abs_diff_eq!(exact.re, acc.re, epsilon = 1e-8);
        assert_abs_diff_eq!(exact.im, acc.im, epsilon = 1e-8);
        assert_eq!(osc_integral(0.0, 7.5), C::new(7.5, 0.0));
        // Uniform bound 2/|ω| away from the stationary point.
        assert!(osc_integral(0.3, 1e6).norm() <= 2.0 / 0.3 + 1e-12);
    }

    #[test]
    fn block_variance_single_term_at_unit_block() {
        let g = MomentumGrid::new(1, 16).unwrap();
        let band = Dispersion::cosine(&g);
        let state = QuasifreeState::new(Occupation::fermi_dirac(&band, 1.0, 0.0).unwrap());
        let a = single_site_number(&g);
        let v1 = block_variance(&state, &a, 1).unwrap();
        let c0 = state.truncated_corr(&a, &a, [0, 0]).unwrap();
        assert_abs_diff_eq!(v1, c0.re, epsilon = 1e-15);
    }

    #[test]
    fn block_variance_product_state_is_block_independent() {
        let g = MomentumGrid::new(1, 16).unwrap();
        let state = product_state(&g, 0.3);
        let a = single_site_number(&g);
        let expect = 4.0 * 0.3 * 0.7;
        for k in [1, 2, 4, 8] {
            assert_abs_diff_eq!(block_variance(&state, &a, k).unwrap(), expect, epsilon = 1e-12);
        }
        assert!(block_variance(&state, &a, 9).is_err());
        assert!(block_variance(&state, &a, 0).is_err());
    }

    #[test]
    fn variance_limit_product_state_converges() {
        let g = MomentumGrid::new(1, 32).unwrap();
        let state = product_state(&g, 0.25);
        let a = single_site_number(&g);
        let verdict = variance_limit(&state, &a, &[2, 4, 8, 16]).unwrap();
        assert_eq!(verdict.class, VarianceClass::Convergent);
        assert_abs_diff_eq!(verdict.limit.unwrap(), 4.0 * 0.25 * 0.75, epsilon = 1e-12);
        assert!(variance_limit(&state, &a, &[2, 4, 8]).is_err());
        assert!(variance_limit(&state, &a, &[2, 4, 4, 8]).is_err());
    }

    #[test]
    fn weyl_char_product_state_closed_form() {
        let g = MomentumGrid::new(1, 32).unwrap();
        let rho = 0.3f64;
        let state = product_state(&g, rho);
        let a = single_site_number(&g);
        let c = weyl_char(&state, &a).unwrap();
        assert_abs_diff_eq!(c, (-2.0 * rho * (1.0 - rho)).exp(), epsilon = 1e-12);
        assert!(c > 0.0 && c <= 1.0);
    }

    #[test]
    fn weyl_char_scales_quadratically_in_the_amplitude() {
        let g = MomentumGrid::new(1, 32).unwrap();
        let state = product_state(&g, 0.4);
        let a = single_site_number(&g);
        let scaled = {
            let fhat: Vec<C<f64>> = a.fhat().iter().map(|&z| z * 3.0).collect();
            QuadraticObservable::from_momentum(&g, fhat, a.ghat().to_vec()).unwrap()
        };
        let s1 = state.covariance(&a, &a).unwrap();
        let s9 = state.covariance(&scaled, &scaled).unwrap();
        assert_abs_diff_eq!(s9, 9.0 * s1, epsilon = 1e-12);
        let c = weyl_char(&state, &scaled).unwrap();
        assert_abs_diff_eq!(c, (-(9.0 * s1) / 2.0).exp(), epsilon = 1e-12);
    }

    #[test]
    fn ccr_phase_inverse_pairing() {
        let g = MomentumGrid::new(1, 16).unwrap();
        let band = Dispersion::cosine(&g);
        let state = QuasifreeState::new(Occupation::fermi_dirac(&band, 1.0, 0.1).unwrap());
        let f: SiteProfile<f64> = vec![([0, 0], C::new(1.0, 0.2)), ([1, 0], C::new(0.5, -0.3))]
            .into_iter()
            .map(|(s, c)| (g.site(s), c))
            .collect();
        let h: SiteProfile<f64> = vec![([0, 0], C::new(0.3, 0.0)), ([2, 0], C::new(0.0, 0.9))]
            .into_iter()
            .map(|(s, c)| (g.site(s), c))
            .collect();
        let a = QuadraticObservable::from_profiles(&g, f.clone(), h.clone()).unwrap();
        let b = QuadraticObservable::from_profiles(&g, h, f).unwrap();
        let pab = ccr_phase(&state, &a, &b).unwrap();
        let pba = ccr_phase(&state, &b, &a).unwrap();
        assert_abs_diff_eq!(pab.norm(), 1.0, epsilon = 1e-12);
        let prod = pab * pba;
        assert_abs_diff_eq!(prod.re, 1.0, epsilon = 1e-12);
        assert_abs_diff_eq!(prod.im, 0.0, epsilon = 1e-12);
        let self_phase = ccr_phase(&state, &a, &a).unwrap();
        assert_abs_diff_eq!(self_phase.re, 1.0, epsilon = 1e-12);
    }

    #[test]
    fn commutator_formula_matches_pairing_engine() {
        let g = MomentumGrid::new(1, 16).unwrap();
        let w: Vec<f64> = (0..16).map(|j| 0.05 + 0.9 * ((j as f64 * 0.37).sin() * 0.5 + 0.5)).collect();
        let f: SiteProfile<f64> = vec![(0, C::new(0.8, 0.1)), (1, C::new(-0.2, 0.4))];
        let h: SiteProfile<f64> = vec![(0, C::new(0.5, 0.0)), (2, C::new(0.3, -0.6))];
        let a = QuadraticObservable::from_profiles(&g, f, h).unwrap();
        let legs = a.mode_legs();
        let mut ctx = WickContext::new(&w);
        let mut words: Vec<[SmearedOp; 2]> = Vec::new();
        for (u, vann) in &legs {
            let iu = ctx.register(u).unwrap();
            let iv = ctx.register(vann).unwrap();
            words.push([
                SmearedOp::create(Leg::Dense(iu)),
                SmearedOp::destroy(Leg::Dense(iv)),
            ]);
        }
        let bmat = |i: usize, j: usize| a.mode_matrix_entry(i, j);
        let mut state = 7u64;
        let mut next = || {
            state = state.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
            ((state >> 33) % 16) as usize
        };
        let mut buf: Vec<SmearedOp> = Vec::with_capacity(6);
        for _ in 0..200 {
            let (k, l, m, p) = (next(), next(), next(), next());
            if k == l || m == p {
                continue;
            }
            let quartic = [
                SmearedOp::create(Leg::Pinned(k)),
                SmearedOp::create(Leg::Pinned(l)),
                SmearedOp::destroy(Leg::Pinned(m)),
                SmearedOp::destroy(Leg::Pinned(p)),
            ];
            let mut engine = C::new(0.0, 0.0);
            for word in &words {
                buf.clear();
                buf.extend_from_slice(&quartic);
                buf.extend_from_slice(word);
                let fwd = ctx.expect(&buf).unwrap();
                buf.clear();
                buf.extend_from_slice(word);
                buf.extend_from_slice(&quartic);
                let bwd = ctx.expect(&buf).unwrap();
                engine += fwd - bwd;
            }
            let closed = quartic_commutator_mean(&w, k, l, m, p, &bmat);
            assert_abs_diff_eq!(engine.re, closed.re, epsilon = 1e-12);
            assert_abs_diff_eq!(engine.im, closed.im, epsilon = 1e-12);
        }
    }

    #[test]
    fn drift_is_structurally_zero_for_quadratic_observables() {
        let g = MomentumGrid::new(1, 8).unwrap();
        let band = Dispersion::cosine(&g);
        let v = PairPotential::cosine(&g);
        let state = QuasifreeState::new(Occupation::fermi_dirac(&band, 1.0, 0.2).unwrap());
        let f: SiteProfile<f64> = vec![(0, C::new(1.0, 0.3)), (1, C::new(-0.4, 0.2))];
        let h: SiteProfile<f64> = vec![(0, C::new(0.2, 0.0)), (2, C::new(0.7, 0.1))];
        let a = QuadraticObservable::from_profiles(&g, f, h).unwrap();
        let d = weyl_drift(&state, &band, &v, 0.8, &a, 1.0).unwrap();
        assert_eq!(d, C::new(0.0, 0.0));
        // The total number observable, given by its diagonal mode matrix.
        let dn = weyl_drift_with(
            &state,
            &band,
            &v,
            0.8,
            |i, j| {
                if i == j {
                    C::new(1.0, 0.0)
                } else {
                    C::new(0.0, 0.0)
                }
            },
            1.0,
        )
        .unwrap();
        assert_eq!(dn, C::new(0.0, 0.0));
        // Constant interactions carry no matrix elements at all.
        let vc = PairPotential::constant(&g, 2.0);
        let dz = weyl_drift(&state, &band, &vc, 0.8, &a, 1.0).unwrap();
        assert_eq!(dz, C::new(0.0, 0.0));
    }

    #[test]
    fn probe_trivial_zero_and_coupling_linearity() {
        let g = MomentumGrid::new(1, 8).unwrap();
        let band = Dispersion::cosine(&g);
        let state = QuasifreeState::new(Occupation::fermi_dirac(&band, 1.0, 0.0).unwrap());
        let a = single_site_number(&g);
        let vc = PairPotential::constant(&g, 1.5);
        let z = first_order_probe(&state, &band, &vc, 1.0, &a, 32.0).unwrap();
        assert_eq!(z, C::new(0.0, 0.0));
        let v = PairPotential::cosine(&g);
        let k1 = ProbeKernel::build(&state, &band, &v, 0.5, &a).unwrap();
        let k2 = ProbeKernel::build(&state, &band, &v, 1.0, &a).unwrap();
        assert!(!k1.is_empty());
        let e1 = k1.eval(64.0).unwrap();
        let e2 = k2.eval(64.0).unwrap();
        assert_eq!(e2, e1 * 2.0);
    }

    #[test]
    fn correction_trivial_zeros_and_positivity() {
        let g = MomentumGrid::new(1, 8).unwrap();
        let band = Dispersion::cosine(&g);
        let v = PairPotential::cosine(&g);
        let state = QuasifreeState::new(Occupation::fermi_dirac(&band, 1.0, 0.0).unwrap());
        let a = single_site_number(&g);
        assert_eq!(scaling_correction(&state, &band, &v, 0.0, &a, 2, 8.0).unwrap(), 0.0);
        let vc = PairPotential::constant(&g, 3.0);
        assert_eq!(scaling_correction(&state, &band, &vc, 1.0, &a, 2, 8.0).unwrap(), 0.0);
        let dv = scaling_correction(&state, &band, &v, 1.0, &a, 3, 8.0).unwrap();
        assert!(dv >= 0.0);
        // λ enters squared, exactly.
        let dv2 = scaling_correction(&state, &band, &v, 2.0, &a, 3, 8.0).unwrap();
        assert_eq!(dv2, 4.0 * dv);
    }

    #[test]
    fn mean_scan_vanishes_identically() {
        let g = MomentumGrid::new(1, 8).unwrap();
        let band = Dispersion::cosine(&g);
        let v = PairPotential::cosine(&g);
        let state = QuasifreeState::new(Occupation::fermi_dirac(&band, 1.0, -0.3).unwrap());
        let a = single_site_number(&g);
        let report = regime_scan(
            &state,
            &band,
            &v,
            0.9,
            &a,
            &[1, 2, 4],
            &[4.0, 16.0],
            ScanMoment::Mean,
            None,
        )
        .unwrap();
        assert_eq!(report.cells.len(), 6);
        for c in &report.cells {
            assert_eq!(c.value, 0.0);
            assert!(c.label.is_none());
        }
    }

    #[test]
    fn variance_scan_with_zero_coupling_is_all_regular() {
        let g = MomentumGrid::new(1, 8).unwrap();
        let band = Dispersion::cosine(&g);
        let v = PairPotential::cosine(&g);
        let state = QuasifreeState::new(Occupation::fermi_dirac(&band, 1.0, 0.0).unwrap());
        let a = single_site_number(&g);
        let report = regime_scan(
            &state,
            &band,
            &v,
            0.0,
            &a,
            &[1, 2, 4],
            &[4.0, 16.0],
            ScanMoment::Variance,
            None,
        )
        .unwrap();
        for c in &report.cells {
            assert_eq!(c.value, 0.0);
            assert_eq!(c.label, Some(RegimeLabel::Regular));
        }
        assert!(report.thresholds.is_some());
        let mut csv = Vec::new();
        report.write_csv(&mut csv).unwrap();
        assert!(String::from_utf8(csv).unwrap().starts_with("# regime-scan"));
        let mut json = Vec::new();
        report.write_json(&mut json).unwrap();
        let text = String::from_utf8(json).unwrap();
        assert!(text.contains("\"moment\": \"variance\""));
        assert!(text.trim_end().ends_with('}'));
    }

    #[test]
    fn scan_requires_enough_distinct_ratios() {
        let g = MomentumGrid::new(1, 8).unwrap();
        let band = Dispersion::cosine(&g);
        let v = PairPotential::cosine(&g);
        let state = QuasifreeState::new(Occupation::fermi_dirac(&band, 1.0, 0.0).unwrap());
        let a = single_site_number(&g);
        // K and N grids giving only ratios {1/4, 1/2}: degenerate fit.
        let r = regime_scan(
            &state,
            &band,
            &v,
            1.0,
            &a,
            &[1, 2],
            &[4.0],
            ScanMoment::Variance,
            None,
        );
        assert!(matches!(r, Err(Error::Config(_))));
    }
}
