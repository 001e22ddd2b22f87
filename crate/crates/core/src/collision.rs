//! Pair-collision kernel on the momentum torus: antisymmetrized matrix
//! elements, energy-delta regularization, precomputed tables grouped by
//! output mode, and the gain/loss right-hand side with Pauli blocking.
//!
//! Weight values are evaluated so that they are *bit-identical* across the
//! whole symmetry orbit of a quadruple (`k↔l`, `m↔p`, `(k,l)↔(m,p)`):
//! the energy mismatch is always formed as `(ε_k+ε_l) − (ε_m+ε_p)` and the
//! matrix element from shared table lookups. Thresholding therefore keeps
//! or drops whole orbits, never fragments of them.

use std::io::{Read, Write};
use std::sync::atomic::{AtomicBool, AtomicUsize, Ordering};

use rayon::prelude::*;

use crate::band::{Dispersion, PairPotential};
use crate::error::{Error, Result};
use crate::grid::MomentumGrid;
use crate::occupation::Occupation;
use crate::scalar::Real;

/// Hard cap on stored table entries (≈ 2.4 GB at the binary layout).
pub const MAX_TABLE_ENTRIES: usize = 100_000_000;
/// Loop budget for the table-free direct evaluator.
pub const MAX_DIRECT_QUADRUPLES: u128 = 1_000_000_000;
/// Energy-shell tolerance of exact-shell mode.
pub const EXACT_SHELL_TOL: f64 = 1e-12;
/// Relative factor of the default pruning threshold.
pub const DEFAULT_THRESHOLD_REL: f64 = 1e-14;
/// Sample budget of the automatic mollifier-width estimate.
const ETA_SAMPLE_BUDGET: u128 = 1 << 20;

/// Kernel regularization mode.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TableMode {
    /// Gaussian energy mollifier of width η.
    Mollified,
    /// Only quadruples with exactly conserved band energy, at a unit
    /// reference normalization in place of the delta factor.
    ExactShell,
}

impl TableMode {
    fn as_byte(self) -> u8 {
        match self {
            TableMode::Mollified => 0,
            TableMode::ExactShell => 1,
        }
    }
    fn from_byte(b: u8) -> Result<Self> {
        match b {
            0 => Ok(TableMode::Mollified),
            1 => Ok(TableMode::ExactShell),
            other => Err(Error::Config(format!("unknown table mode byte {other}"))),
        }
    }
}

impl std::fmt::Display for TableMode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            TableMode::Mollified => write!(f, "mollified"),
            TableMode::ExactShell => write!(f, "exact-shell"),
        }
    }
}

/// Coupling and scale parameters of a kinetic run: coupling `λ`, interaction
/// time scale `N`, block size `K`, mollifier width `η`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ScalingParameters<T> {
    lambda: T,
    time_scale: T,
    block: usize,
    eta: T,
}

impl<T: Real> ScalingParameters<T> {
    /// Validates and stores the parameter set.
    pub fn new(lambda: T, time_scale: T, block: usize, eta: T) -> Result<Self> {
        if !lambda.is_finite() {
            return Err(Error::Config(format!("coupling λ = {lambda} must be finite")));
        }
        if !(time_scale > T::zero()) || !time_scale.is_finite() {
            return Err(Error::Config(format!(
                "time scale N = {time_scale} must be positive and finite"
            )));
        }
        if block == 0 {
            return Err(Error::Config("block size K must be at least 1".into()));
        }
        if !(eta > T::zero()) || !eta.is_finite() {
            return Err(Error::Config(format!(
                "mollifier width η = {eta} must be positive and finite"
            )));
        }
        Ok(Self { lambda, time_scale, block, eta })
    }

    /// Coupling `λ`.
    #[inline]
    pub fn lambda(&self) -> T {
        self.lambda
    }
    /// Interaction time scale `N`.
    #[inline]
    pub fn time_scale(&self) -> T {
        self.time_scale
    }
    /// Block size `K`.
    #[inline]
    pub fn block(&self) -> usize {
        self.block
    }
    /// Mollifier width `η`.
    #[inline]
    pub fn eta(&self) -> T {
        self.eta
    }

    /// Copy with a different mollifier width.
    pub fn with_eta(&self, eta: T) -> Result<Self> {
        Self::new(self.lambda, self.time_scale, self.block, eta)
    }

    /// Copy with a different coupling.
    pub fn with_lambda(&self, lambda: T) -> Result<Self> {
        Self::new(lambda, self.time_scale, self.block, self.eta)
    }
}

/// Antisymmetrized pair matrix element `M = v(k−p) − v(k−m)` on the
/// momentum-conservation shell. Off-shell index quadruples are a contract
/// violation.
pub fn matrix_element<T: Real>(
    v: &PairPotential<T>,
    k: usize,
    l: usize,
    m: usize,
    p: usize,
) -> Result<T> {
    let grid = v.grid();
    if !grid.is_on_shell(k, l, m, p) {
        return Err(Error::Contract(format!(
            "matrix element requested off the conservation shell: ({k},{l};{m},{p})"
        )));
    }
    let vv = v.values();
    Ok(vv[grid.diff(k, p)] - vv[grid.diff(k, m)])
}

/// Gaussian energy mollifier `δ_η(x) = exp(−(x/η)²)/(η√π)`; even, unit mass.
pub fn mollifier<T: Real>(eta: T, de: T) -> Result<T> {
    if !(eta > T::zero()) || !eta.is_finite() {
        return Err(Error::Config(format!("mollifier width η = {eta} must be positive")));
    }
    Ok(mollifier_unchecked(eta, de))
}

#[inline]
fn mollifier_unchecked<T: Real>(eta: T, de: T) -> T {
    let x = de / eta;
    (-(x * x)).exp() / (eta * T::PI().sqrt())
}

/// Automatic mollifier width: three times the median gap between distinct
/// energy mismatches `|ΔE|` over the momentum-conservation shell (the shell
/// is subsampled with a fixed stride above ~10⁶ quadruples, so the estimate
/// is deterministic). Falls back to one energy unit when the sampled shell
/// is energy-degenerate.
pub fn default_eta<T: Real>(band: &Dispersion<T>) -> T {
    let grid = band.grid();
    let np = grid.len() as u128;
    let total = np * np * np;
    let stride = (total / ETA_SAMPLE_BUDGET).max(1);
    let eps = band.values();
    let npu = grid.len();
    let mut des: Vec<T> = Vec::new();
    let mut i: u128 = 0;
    while i < total {
        let idx = i as usize % (npu * npu * npu).max(1);
        let k = idx / (npu * npu);
        let m = (idx / npu) % npu;
        let p = idx % npu;
        let l = grid.fourth_on_shell(k, m, p);
        let de = ((eps[k] + eps[l]) - (eps[m] + eps[p])).abs();
        if de > T::zero() {
            des.push(de);
        }
        i += stride;
    }
    des.sort_by(|a, b| a.partial_cmp(b).expect("finite energies"));
    let scale = des.last().copied().unwrap_or(T::zero()).max(T::one());
    let dedup_tol = T::lit(1e-12) * scale;
    let mut distinct: Vec<T> = Vec::with_capacity(des.len());
    for &x in &des {
        if distinct.last().map_or(true, |&last| x - last > dedup_tol) {
            distinct.push(x);
        }
    }
    if distinct.len() < 2 {
        return T::one();
    }
    let mut gaps: Vec<T> = distinct.windows(2).map(|w| w[1] - w[0]).collect();
    gaps.sort_by(|a, b| a.partial_cmp(b).expect("finite gaps"));
    let median = gaps[gaps.len() / 2];
    T::lit(3.0) * median
}

/// Precomputed collision kernel: quadruples `(k, l, m, p)` with `l` fixed by
/// momentum conservation and positive retained weight, grouped by the
/// output slot `p` (CSR layout), in lexicographic `(p, k, m)` order.
#[derive(Debug, Clone)]
pub struct CollisionTable<T> {
    grid: MomentumGrid,
    mode: TableMode,
    eta: T,
    threshold: T,
    lambda: T,
    row_ptr: Vec<usize>,
    k: Vec<u32>,
    l: Vec<u32>,
    m: Vec<u32>,
    weight: Vec<T>,
}

/// One stored quadruple with its weight.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TableEntry<T> {
    /// First incoming mode.
    pub k: usize,
    /// Second incoming mode (fixed by conservation).
    pub l: usize,
    /// First outgoing mode.
    pub m: usize,
    /// Output slot the entry is grouped under.
    pub p: usize,
    /// Kernel weight `π λ² M² δ_η(ΔE)` (or the exact-shell normalization).
    pub weight: T,
}

impl<T: Real> CollisionTable<T> {
    /// Grid accessor.
    #[inline]
    pub fn grid(&self) -> &MomentumGrid {
        &self.grid
    }
    /// Regularization mode.
    #[inline]
    pub fn mode(&self) -> TableMode {
        self.mode
    }
    /// Mollifier width used at build time (1 in exact-shell mode).
    #[inline]
    pub fn eta(&self) -> T {
        self.eta
    }
    /// Pruning threshold used at build time.
    #[inline]
    pub fn threshold(&self) -> T {
        self.threshold
    }
    /// Coupling baked into the weights.
    #[inline]
    pub fn lambda(&self) -> T {
        self.lambda
    }
    /// Number of stored entries.
    #[inline]
    pub fn len(&self) -> usize {
        self.weight.len()
    }
    /// Whether the table is empty.
    #[inline]
    pub fn is_empty(&self) -> bool {
        self.weight.is_empty()
    }
    /// Sum of all stored weights.
    pub fn weight_sum(&self) -> T {
        self.weight.iter().copied().sum()
    }

    /// Iterates all entries in storage order.
    pub fn entries(&self) -> impl Iterator<Item = TableEntry<T>> + '_ {
        (0..self.grid.len()).flat_map(move |p| {
            (self.row_ptr[p]..self.row_ptr[p + 1]).map(move |i| TableEntry {
                k: self.k[i] as usize,
                l: self.l[i] as usize,
                m: self.m[i] as usize,
                p,
                weight: self.weight[i],
            })
        })
    }

    /// Checks whether a specific quadruple is stored, returning its weight.
    pub fn find(&self, k: usize, l: usize, m: usize, p: usize) -> Option<T> {
        let (lo, hi) = (self.row_ptr[p], self.row_ptr[p + 1]);
        for i in lo..hi {
            if self.k[i] as usize == k && self.l[i] as usize == l && self.m[i] as usize == m {
                return Some(self.weight[i]);
            }
        }
        None
    }

    /// Gain/loss balance over a raw occupation slice (no range validation;
    /// polynomial in `w`, so intermediate integrator stages may pass values
    /// slightly outside `[0,1]`). Parallelized over output slots; each
    /// slot's sum runs in fixed index order, so the result does not depend
    /// on the worker count.
    pub fn rhs_slice(&self, w: &[T]) -> Vec<T> {
        debug_assert_eq!(w.len(), self.grid.len());
        let cw = self.grid.cell_weight::<T>();
        let cw2 = cw * cw;
        (0..self.grid.len())
            .into_par_iter()
            .map(|p| {
                let wp = w[p];
                let hp = T::one() - wp;
                let mut acc = T::zero();
                for i in self.row_ptr[p]..self.row_ptr[p + 1] {
                    let wk = w[self.k[i] as usize];
                    let wl = w[self.l[i] as usize];
                    let wm = w[self.m[i] as usize];
                    let gain = wk * wl * (T::one() - wm) * hp;
                    let loss = wp * wm * (T::one() - wk) * (T::one() - wl);
                    acc += self.weight[i] * (gain - loss);
                }
                acc * cw2
            })
            .collect()
    }
}

/// Builds the collision table for a band and pair interaction.
///
/// In mollified mode every momentum-conserving quadruple whose weight
/// `π λ² M² δ_η(ΔE)` exceeds `threshold` is stored; in exact-shell mode only
/// quadruples with `|ΔE| ≤ 1e−12` are kept, at weight `π λ² M²` (unit
/// reference normalization in place of the delta factor, recorded as
/// `eta = 1`). `threshold = None` selects the default
/// `1e−14 · π λ² (2 max|v|)² δ_η(0)` — the stated fraction of the a-priori
/// weight bound.
pub fn build_table<T: Real>(
    band: &Dispersion<T>,
    v: &PairPotential<T>,
    params: &ScalingParameters<T>,
    threshold: Option<T>,
    mode: TableMode,
) -> Result<CollisionTable<T>> {
    let grid = *band.grid();
    grid.ensure_same(v.grid(), "build_table")?;
    let eta = match mode {
        TableMode::Mollified => params.eta(),
        TableMode::ExactShell => T::one(),
    };
    let lambda = params.lambda();
    let pref = T::PI() * lambda * lambda;
    let peak = match mode {
        TableMode::Mollified => mollifier_unchecked(eta, T::zero()),
        TableMode::ExactShell => T::one(),
    };
    let two_vmax = T::lit(2.0) * v.max_abs();
    let thr = match threshold {
        Some(t) => {
            if !(t >= T::zero()) {
                return Err(Error::Config(format!("threshold {t} must be nonnegative")));
            }
            t
        }
        None => T::lit(DEFAULT_THRESHOLD_REL) * pref * two_vmax * two_vmax * peak,
    };

    let np = grid.len();
    let eps = band.values();
    let vv = v.values();
    let shell_tol = T::lit(EXACT_SHELL_TOL);
    let count = AtomicUsize::new(0);
    let overflow = AtomicBool::new(false);

    let rows: Vec<Vec<(u32, u32, u32, T)>> = (0..np)
        .into_par_iter()
        .map(|p| {
            if overflow.load(Ordering::Relaxed) {
                return Vec::new();
            }
            let ep = eps[p];
            let mut row: Vec<(u32, u32, u32, T)> = Vec::new();
            for k in 0..np {
                let vkp = vv[grid.diff(k, p)];
                let ek = eps[k];
                for m in 0..np {
                    let l = grid.fourth_on_shell(k, m, p);
                    let mel = vkp - vv[grid.diff(k, m)];
                    if mel == T::zero() {
                        continue;
                    }
                    // Orbit-symmetric energy mismatch (see module docs).
                    let de = (ek + eps[l]) - (eps[m] + ep);
                    let wt = match mode {
                        TableMode::Mollified => {
                            pref * mel * mel * mollifier_unchecked(eta, de)
                        }
                        TableMode::ExactShell => {
                            if de.abs() > shell_tol {
                                continue;
                            }
                            pref * mel * mel
                        }
                    };
                    if wt > thr {
                        row.push((k as u32, l as u32, m as u32, wt));
                    }
                }
            }
            let total = count.fetch_add(row.len(), Ordering::Relaxed) + row.len();
            if total > MAX_TABLE_ENTRIES {
                overflow.store(true, Ordering::Relaxed);
            }
            row
        })
        .collect();

    if overflow.load(Ordering::Relaxed) {
        return Err(Error::Resource(format!(
            "collision table exceeds the entry cap of {MAX_TABLE_ENTRIES}"
        )));
    }

    let total: usize = rows.iter().map(Vec::len).sum();
    let mut row_ptr = Vec::with_capacity(np + 1);
    let mut kk = Vec::with_capacity(total);
    let mut ll = Vec::with_capacity(total);
    let mut mm = Vec::with_capacity(total);
    let mut ww = Vec::with_capacity(total);
    row_ptr.push(0usize);
    for row in &rows {
        for &(k, l, m, wt) in row {
            kk.push(k);
            ll.push(l);
            mm.push(m);
            ww.push(wt);
        }
        row_ptr.push(kk.len());
    }
    Ok(CollisionTable {
        grid,
        mode,
        eta,
        threshold: thr,
        lambda,
        row_ptr,
        k: kk,
        l: ll,
        m: mm,
        weight: ww,
    })
}

/// Collision right-hand side
/// `(dw/dt)_p = (1/n^ν)² Σ_{entries at p} weight·[w_k w_l (1−w_m)(1−w_p) − w_p w_m (1−w_k)(1−w_l)]`.
pub fn collision_rhs<T: Real>(table: &CollisionTable<T>, w: &Occupation<T>) -> Result<Vec<T>> {
    table.grid.ensure_same(w.grid(), "collision_rhs")?;
    Ok(table.rhs_slice(w.values()))
}

/// Table-free direct evaluation of the same right-hand side (threshold 0),
/// as an independent oracle. Refuses grids beyond the `n^{3ν} ≤ 10⁹` loop
/// budget.
pub fn collision_rhs_direct<T: Real>(
    band: &Dispersion<T>,
    v: &PairPotential<T>,
    params: &ScalingParameters<T>,
    w: &Occupation<T>,
    mode: TableMode,
) -> Result<Vec<T>> {
    let grid = *band.grid();
    grid.ensure_same(v.grid(), "collision_rhs_direct")?;
    grid.ensure_same(w.grid(), "collision_rhs_direct")?;
    let np = grid.len();
    let quads = (np as u128).pow(3);
    if quads > MAX_DIRECT_QUADRUPLES {
        return Err(Error::Resource(format!(
            "direct evaluation needs {quads} quadruples, over the {MAX_DIRECT_QUADRUPLES} budget"
        )));
    }
    let eta = match mode {
        TableMode::Mollified => params.eta(),
        TableMode::ExactShell => T::one(),
    };
    let pref = T::PI() * params.lambda() * params.lambda();
    let eps = band.values();
    let vv = v.values();
    let ws = w.values();
    let cw = grid.cell_weight::<T>();
    let cw2 = cw * cw;
    let shell_tol = T::lit(EXACT_SHELL_TOL);
    let mut out = vec![T::zero(); np];
    for (p, out_p) in out.iter_mut().enumerate() {
        let ep = eps[p];
        let wp = ws[p];
        let hp = T::one() - wp;
        let mut acc = T::zero();
        for k in 0..np {
            let vkp = vv[grid.diff(k, p)];
            let ek = eps[k];
            for m in 0..np {
                let l = grid.fourth_on_shell(k, m, p);
                let mel = vkp - vv[grid.diff(k, m)];
                if mel == T::zero() {
                    continue;
                }
                let de = (ek + eps[l]) - (eps[m] + ep);
                let wt = match mode {
                    TableMode::Mollified => pref * mel * mel * mollifier_unchecked(eta, de),
                    TableMode::ExactShell => {
                        if de.abs() > shell_tol {
                            continue;
                        }
                        pref * mel * mel
                    }
                };
                if wt > T::zero() {
                    let (wk, wl, wm) = (ws[k], ws[l], ws[m]);
                    let gain = wk * wl * (T::one() - wm) * hp;
                    let loss = wp * wm * (T::one() - wk) * (T::one() - wl);
                    acc += wt * (gain - loss);
                }
            }
        }
        *out_p = acc * cw2;
    }
    Ok(out)
}

/// Energy flux of the right-hand side and its empirical mollifier bound:
/// returns `(|Σ_p ε_p (dw/dt)_p|, η · (1/n^ν)² · Σ_entries weight·|F|)`.
pub fn energy_flux_stats<T: Real>(
    table: &CollisionTable<T>,
    band: &Dispersion<T>,
    w: &Occupation<T>,
) -> Result<(T, T)> {
    table.grid.ensure_same(band.grid(), "energy_flux_stats")?;
    table.grid.ensure_same(w.grid(), "energy_flux_stats")?;
    let rhs = table.rhs_slice(w.values());
    let eps = band.values();
    let mut flux = T::zero();
    for (p, &r) in rhs.iter().enumerate() {
        flux += eps[p] * r;
    }
    let ws = w.values();
    let cw = table.grid.cell_weight::<T>();
    let mut abs_sum = T::zero();
    for e in table.entries() {
        let (wk, wl, wm, wp) = (ws[e.k], ws[e.l], ws[e.m], ws[e.p]);
        let f = wk * wl * (T::one() - wm) * (T::one() - wp)
            - wp * wm * (T::one() - wk) * (T::one() - wl);
        abs_sum += e.weight * f.abs();
    }
    Ok((flux.abs(), table.eta * cw * cw * abs_sum))
}

/// Orbit-folded evaluator for the same right-hand side.
///
/// Stored table entries come in symmetry orbits of up to eight quadruples
/// sharing one weight; the gain/loss factor `F` is invariant under `k↔l`
/// and `m↔p` and flips sign under `(k,l)↔(m,p)`. The folded view keeps one
/// representative per orbit together with the per-slot signed multiplicity
/// of the whole orbit, so each `F` evaluation serves every slot the orbit
/// touches. Orbits with `{k,l} = {m,p}` have `F ≡ 0` and are dropped.
/// The value equals the unfolded sum exactly up to floating-point
/// reassociation.
#[derive(Debug, Clone)]
pub struct FoldedView<T> {
    grid: MomentumGrid,
    reps: Vec<[u32; 4]>,
    slots: Vec<[u32; 4]>,
    coeffs: Vec<[T; 4]>,
}

/// Orbit chunk size of the folded evaluator's deterministic reduction.
const FOLD_CHUNK: usize = 1 << 16;

impl<T: Real> FoldedView<T> {
    /// Folds a symmetry-closed table into per-orbit records.
    pub fn from_table(table: &CollisionTable<T>) -> Self {
        let mut reps = Vec::new();
        let mut slots = Vec::new();
        let mut coeffs = Vec::new();
        for e in table.entries() {
            let (k, l, m, p) = (e.k as u32, e.l as u32, e.m as u32, e.p as u32);
            let tuple = [k, l, m, p];
            let images = [
                [k, l, m, p],
                [l, k, m, p],
                [k, l, p, m],
                [l, k, p, m],
                [m, p, k, l],
                [p, m, k, l],
                [m, p, l, k],
                [p, m, l, k],
            ];
            if images.iter().any(|im| im < &tuple) {
                continue; // not the orbit representative
            }
            if (k == m && l == p) || (k == p && l == m) {
                continue; // F vanishes identically on pair-diagonal orbits
            }
            let mut distinct: Vec<[u32; 4]> = images.to_vec();
            distinct.sort_unstable();
            distinct.dedup();
            let mut tally: Vec<(u32, T)> = Vec::with_capacity(4);
            for im in &distinct {
                let even = (im[0] == k && im[1] == l) || (im[0] == l && im[1] == k);
                let signed = if even { e.weight } else { -e.weight };
                match tally.iter_mut().find(|(s, _)| *s == im[3]) {
                    Some((_, c)) => *c += signed,
                    None => tally.push((im[3], signed)),
                }
            }
            let mut slot_arr = [0u32; 4];
            let mut coeff_arr = [T::zero(); 4];
            let mut idx = 0;
            for (s, c) in tally {
                if c != T::zero() {
                    slot_arr[idx] = s;
                    coeff_arr[idx] = c;
                    idx += 1;
                }
            }
            if idx == 0 {
                continue;
            }
            reps.push(tuple);
            slots.push(slot_arr);
            coeffs.push(coeff_arr);
        }
        Self { grid: table.grid, reps, slots, coeffs }
    }

    /// Number of stored orbits.
    #[inline]
    pub fn orbit_count(&self) -> usize {
        self.reps.len()
    }

    /// Grid accessor.
    #[inline]
    pub fn grid(&self) -> &MomentumGrid {
        &self.grid
    }

    /// Right-hand side over a raw occupation slice. Orbit chunks are
    /// reduced in fixed order, so the result does not depend on the worker
    /// count (it differs from the unfolded evaluator only by floating-point
    /// reassociation).
    pub fn rhs_slice(&self, w: &[T]) -> Vec<T> {
        debug_assert_eq!(w.len(), self.grid.len());
        let np = self.grid.len();
        let norbit = self.reps.len();
        let nchunks = norbit.div_ceil(FOLD_CHUNK).max(1);
        let partials: Vec<Vec<T>> = (0..nchunks)
            .into_par_iter()
            .map(|c| {
                let lo = c * FOLD_CHUNK;
                let hi = (lo + FOLD_CHUNK).min(norbit);
                let mut out = vec![T::zero(); np];
                for i in lo..hi {
                    let [k, l, m, p] = self.reps[i];
                    let wk = w[k as usize];
                    let wl = w[l as usize];
                    let wm = w[m as usize];
                    let wp = w[p as usize];
                    let f = wk * wl * (T::one() - wm) * (T::one() - wp)
                        - wp * wm * (T::one() - wk) * (T::one() - wl);
                    let sl = &self.slots[i];
                    let cf = &self.coeffs[i];
                    out[sl[0] as usize] += cf[0] * f;
                    out[sl[1] as usize] += cf[1] * f;
                    out[sl[2] as usize] += cf[2] * f;
                    out[sl[3] as usize] += cf[3] * f;
                }
                out
            })
            .collect();
        let cw = self.grid.cell_weight::<T>();
        let cw2 = cw * cw;
        let mut out = vec![T::zero(); np];
        for part in &partials {
            for (o, &x) in out.iter_mut().zip(part.iter()) {
                *o += x;
            }
        }
        for o in &mut out {
            *o *= cw2;
        }
        out
    }
}

// ---------------------------------------------------------------------------
// Serialization
// ---------------------------------------------------------------------------

const MAGIC: [u8; 4] = *b"FKCT";
const FORMAT_VERSION: u16 = 1;

impl<T: Real> CollisionTable<T> {
    /// Writes the documented binary layout: magic `FKCT`, version `u16`,
    /// ν `u16`, n `u32`, mode `u8`, 3 reserved bytes, then `η`, `threshold`,
    /// `λ` as `f64`, the entry count as `u64`, and per entry the quadruple
    /// `(k,l,m,p)` as four `u32` plus the weight as `f64`. All integers and
    /// floats are little-endian.
    pub fn write_binary<W: Write>(&self, out: &mut W) -> Result<()> {
        out.write_all(&MAGIC)?;
        out.write_all(&FORMAT_VERSION.to_le_bytes())?;
        out.write_all(&(self.grid.dim() as u16).to_le_bytes())?;
        out.write_all(&(self.grid.points_per_axis() as u32).to_le_bytes())?;
        out.write_all(&[self.mode.as_byte(), 0, 0, 0])?;
        out.write_all(&self.eta.as_f64().to_le_bytes())?;
        out.write_all(&self.threshold.as_f64().to_le_bytes())?;
        out.write_all(&self.lambda.as_f64().to_le_bytes())?;
        out.write_all(&(self.len() as u64).to_le_bytes())?;
        for e in self.entries() {
            out.write_all(&(e.k as u32).to_le_bytes())?;
            out.write_all(&(e.l as u32).to_le_bytes())?;
            out.write_all(&(e.m as u32).to_le_bytes())?;
            out.write_all(&(e.p as u32).to_le_bytes())?;
            out.write_all(&e.weight.as_f64().to_le_bytes())?;
        }
        Ok(())
    }

    /// Reads the binary layout produced by [`Self::write_binary`],
    /// validating the header, index ranges, momentum conservation of every
    /// entry, and weight finiteness.
    pub fn read_binary<R: Read>(inp: &mut R) -> Result<Self> {
        let mut magic = [0u8; 4];
        inp.read_exact(&mut magic)?;
        if magic != MAGIC {
            return Err(Error::Config("not a collision table stream (bad magic)".into()));
        }
        let version = read_u16(inp)?;
        if version != FORMAT_VERSION {
            return Err(Error::Config(format!(
                "unsupported collision table version {version}"
            )));
        }
        let dim = read_u16(inp)? as usize;
        let n = read_u32(inp)? as usize;
        let grid = MomentumGrid::new(dim, n)?;
        let mut modepad = [0u8; 4];
        inp.read_exact(&mut modepad)?;
        let mode = TableMode::from_byte(modepad[0])?;
        let eta = T::lit(read_f64(inp)?);
        let threshold = T::lit(read_f64(inp)?);
        let lambda = T::lit(read_f64(inp)?);
        let count = read_u64(inp)? as usize;
        if count > MAX_TABLE_ENTRIES {
            return Err(Error::Resource(format!(
                "stored table has {count} entries, over the cap of {MAX_TABLE_ENTRIES}"
            )));
        }
        let np = grid.len();
        let mut rows: Vec<Vec<(u32, u32, u32, T)>> = vec![Vec::new(); np];
        for i in 0..count {
            let k = read_u32(inp)? as usize;
            let l = read_u32(inp)? as usize;
            let m = read_u32(inp)? as usize;
            let p = read_u32(inp)? as usize;
            let wt = read_f64(inp)?;
            if k >= np || l >= np || m >= np || p >= np {
                return Err(Error::Config(format!(
                    "corrupt table: entry {i} has out-of-range indices"
                )));
            }
            if !grid.is_on_shell(k, l, m, p) {
                return Err(Error::Config(format!(
                    "corrupt table: entry {i} violates momentum conservation"
                )));
            }
            if !wt.is_finite() || wt < 0.0 {
                return Err(Error::Config(format!(
                    "corrupt table: entry {i} has invalid weight {wt}"
                )));
            }
            rows[p].push((k as u32, l as u32, m as u32, T::lit(wt)));
        }
        let mut row_ptr = Vec::with_capacity(np + 1);
        let mut kk = Vec::with_capacity(count);
        let mut ll = Vec::with_capacity(count);
        let mut mm = Vec::with_capacity(count);
        let mut ww = Vec::with_capacity(count);
        row_ptr.push(0usize);
        for row in &rows {
            for &(k, l, m, wt) in row {
                kk.push(k);
                ll.push(l);
                mm.push(m);
                ww.push(wt);
            }
            row_ptr.push(kk.len());
        }
        Ok(CollisionTable {
            grid,
            mode,
            eta,
            threshold,
            lambda,
            row_ptr,
            k: kk,
            l: ll,
            m: mm,
            weight: ww,
        })
    }

    /// Writes the table as CSV for inspection: a `#` metadata line, a
    /// column header, then one `k,l,m,p,weight` row per entry.
    pub fn write_csv<W: Write>(&self, out: &mut W) -> Result<()> {
        writeln!(
            out,
            "# collision-table nu={} n={} mode={} eta={:e} threshold={:e} lambda={:e} entries={}",
            self.grid.dim(),
            self.grid.points_per_axis(),
            self.mode,
            self.eta,
            self.threshold,
            self.lambda,
            self.len()
        )?;
        writeln!(out, "k,l,m,p,weight")?;
        for e in self.entries() {
            writeln!(out, "{},{},{},{},{:.17e}", e.k, e.l, e.m, e.p, e.weight)?;
        }
        Ok(())
    }
}

fn read_u16<R: Read>(r: &mut R) -> Result<u16> {
    let mut b = [0u8; 2];
    r.read_exact(&mut b)?;
    Ok(u16::from_le_bytes(b))
}
fn read_u32<R: Read>(r: &mut R) -> Result<u32> {
    let mut b = [0u8; 4];
    r.read_exact(&mut b)?;
    Ok(u32::from_le_bytes(b))
}
fn read_u64<R: Read>(r: &mut R) -> Result<u64> {
    let mut b = [0u8; 8];
    r.read_exact(&mut b)?;
    Ok(u64::from_le_bytes(b))
}
fn read_f64<R: Read>(r: &mut R) -> Result<f64> {
    let mut b = [0u8; 8];
    r.read_exact(&mut b)?;
    Ok(f64::from_le_bytes(b))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn params(lambda: f64, eta: f64) -> ScalingParameters<f64> {
        ScalingParameters::new(lambda, 64.0, 8, eta).unwrap()
    }

    #[test]
    fn parameter_validation() {
        assert!(ScalingParameters::new(1.0, 1.0, 1, 0.3).is_ok());
        assert!(ScalingParameters::new(f64::NAN, 1.0, 1, 0.3).is_err());
        assert!(ScalingParameters::new(1.0, 0.0, 1, 0.3).is_err());
        assert!(ScalingParameters::new(1.0, 1.0, 0, 0.3).is_err());
        assert!(ScalingParameters::new(1.0, 1.0, 1, -0.1).is_err());
    }

    #[test]
    fn mollifier_values() {
        let pi = std::f64::consts::PI;
        assert_abs_diff_eq!(
            mollifier(0.5, 0.0).unwrap(),
            1.0 / (0.5 * pi.sqrt()),
            epsilon = 1e-15
        );
        assert_eq!(mollifier(0.5, 0.7).unwrap(), mollifier(0.5, -0.7).unwrap());
        let spot = mollifier(0.3, 0.3).unwrap();
        assert_abs_diff_eq!(spot, (-1.0f64).exp() / (0.3 * pi.sqrt()), epsilon = 1e-15);
        assert_abs_diff_eq!(spot, 0.691799, epsilon = 1e-4);
        assert!(mollifier(0.0, 0.1).is_err());
    }

    #[test]
    fn matrix_element_cosine_spot_value() {
        let g = MomentumGrid::new(1, 8).unwrap();
        let v: PairPotential<f64> = PairPotential::cosine(&g);
        // p_4 = 0, p_6 = π/2, p_0 = −π; fourth index on the shell is 2.
        let l = g.fourth_on_shell(4, 6, 0);
        assert_eq!(l, 2);
        let m = matrix_element(&v, 4, 2, 6, 0).unwrap();
        assert_abs_diff_eq!(m, -1.0, epsilon = 1e-14);
        // Off shell → contract violation.
        assert!(matrix_element(&v, 4, 3, 6, 0).is_err());
    }

    #[test]
    fn matrix_element_constant_potential_vanishes() {
        let g = MomentumGrid::new(1, 8).unwrap();
        let v = PairPotential::constant(&g, 2.5);
        for k in 0..8 {
            for m in 0..8 {
                for p in 0..8 {
                    let l = g.fourth_on_shell(k, m, p);
                    assert_eq!(matrix_element(&v, k, l, m, p).unwrap(), 0.0);
                }
            }
        }
    }

    #[test]
    fn matrix_element_antisymmetry() {
        let g = MomentumGrid::new(1, 8).unwrap();
        // A generic even potential.
        let v = PairPotential::from_fn(&g, |q: [f64; 2]| {
            0.7 * q[0].cos() + 0.3 * (2.0 * q[0]).cos() - 0.1
        });
        let mut state = 12345u64;
        let mut next = || {
            state = state.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
            ((state >> 33) % 8) as usize
        };
        for _ in 0..100 {
            let (k, m, p) = (next(), next(), next());
            let l = g.fourth_on_shell(k, m, p);
            let m0 = matrix_element(&v, k, l, m, p).unwrap();
            assert_abs_diff_eq!(matrix_element(&v, l, k, m, p).unwrap(), -m0, epsilon = 1e-14);
            assert_abs_diff_eq!(matrix_element(&v, k, l, p, m).unwrap(), -m0, epsilon = 1e-14);
            assert_abs_diff_eq!(matrix_element(&v, m, p, k, l).unwrap(), m0, epsilon = 1e-14);
        }
    }

    #[test]
    fn constant_potential_gives_empty_table() {
        let g = MomentumGrid::new(1, 8).unwrap();
        let band = Dispersion::cosine(&g);
        let v = PairPotential::constant(&g, 3.0);
        let t = build_table(&band, &v, &params(1.0, 0.5), Some(0.0), TableMode::Mollified)
            .unwrap();
        assert!(t.is_empty());
    }

    #[test]
    fn exact_shell_contains_component_exchange_family() {
        let g = MomentumGrid::new(2, 8).unwrap();
        let band = Dispersion::cosine(&g);
        let v = PairPotential::cosine(&g);
        let p = ScalingParameters::new(1.0, 64.0, 8, 1.0).unwrap();
        let t = build_table(&band, &v, &p, Some(0.0), TableMode::ExactShell).unwrap();
        // k=(1,2), l=(5,7), m=(1,7), p=(5,2): exchange of second components.
        let k = g.flatten([1, 2]);
        let l = g.flatten([5, 7]);
        let m = g.flatten([1, 7]);
        let pp = g.flatten([5, 2]);
        assert!(g.is_on_shell(k, l, m, pp));
        assert!(t.find(k, l, m, pp).is_some());
    }

    #[test]
    fn table_symmetry_closure_entry_by_entry() {
        let g = MomentumGrid::new(1, 8).unwrap();
        let band = Dispersion::cosine(&g);
        let v = PairPotential::cosine(&g);
        let t = build_table(&band, &v, &params(0.8, 0.4), None, TableMode::Mollified).unwrap();
        assert!(!t.is_empty());
        for e in t.entries() {
            for (k, l, m, p) in [
                (e.l, e.k, e.m, e.p),
                (e.k, e.l, e.p, e.m),
                (e.m, e.p, e.k, e.l),
            ] {
                let w = t.find(k, l, m, p).expect("orbit image must be stored");
                assert_eq!(w, e.weight, "weights must match bitwise across the orbit");
            }
        }
    }

    #[test]
    fn rhs_constant_occupation_is_zero() {
        let g = MomentumGrid::new(1, 8).unwrap();
        let band = Dispersion::cosine(&g);
        let v = PairPotential::cosine(&g);
        let t = build_table(&band, &v, &params(1.0, 0.5), Some(0.0), TableMode::Mollified)
            .unwrap();
        let w = Occupation::constant(&g, 0.42).unwrap();
        let rhs = collision_rhs(&t, &w).unwrap();
        assert!(rhs.iter().all(|&x| x == 0.0));
    }

    #[test]
    fn rhs_scales_exactly_with_coupling_squared() {
        let g = MomentumGrid::new(1, 8).unwrap();
        let band = Dispersion::cosine(&g);
        let v = PairPotential::cosine(&g);
        let t1 = build_table(&band, &v, &params(0.5, 0.5), Some(0.0), TableMode::Mollified)
            .unwrap();
        let t2 = build_table(&band, &v, &params(1.0, 0.5), Some(0.0), TableMode::Mollified)
            .unwrap();
        let w: Vec<f64> = (0..8).map(|j| 0.05 + 0.1 * j as f64).collect();
        let occ = Occupation::new(&g, w).unwrap();
        let r1 = collision_rhs(&t1, &occ).unwrap();
        let r2 = collision_rhs(&t2, &occ).unwrap();
        for (a, b) in r1.iter().zip(&r2) {
            assert_eq!(*b, 4.0 * *a, "doubling λ must scale the rhs by exactly 4");
        }
    }

    #[test]
    fn rhs_boundary_signs() {
        let g = MomentumGrid::new(1, 8).unwrap();
        let band = Dispersion::cosine(&g);
        let v = PairPotential::cosine(&g);
        let t = build_table(&band, &v, &params(1.0, 0.5), Some(0.0), TableMode::Mollified)
            .unwrap();
        let w = vec![0.0, 0.3, 0.8, 1.0, 0.5, 0.2, 0.9, 0.1];
        let occ = Occupation::new(&g, w).unwrap();
        let rhs = collision_rhs(&t, &occ).unwrap();
        assert!(rhs[0] >= 0.0, "empty slot cannot lose particles");
        assert!(rhs[3] <= 0.0, "full slot cannot gain particles");
    }

    #[test]
    fn fermi_dirac_is_stationary_on_exact_shell() {
        let g = MomentumGrid::new(2, 8).unwrap();
        let band: Dispersion<f64> = Dispersion::cosine(&g);
        let v = PairPotential::cosine(&g);
        let p = ScalingParameters::new(1.0, 64.0, 8, 1.0).unwrap();
        let t = build_table(&band, &v, &p, Some(0.0), TableMode::ExactShell).unwrap();
        let w = Occupation::fermi_dirac(&band, 1.3, -0.2).unwrap();
        let rhs = collision_rhs(&t, &w).unwrap();
        for &x in &rhs {
            assert!(x.abs() <= 1e-14, "detailed balance violated: {x:e}");
        }
    }

    #[test]
    fn particle_conservation() {
        let g = MomentumGrid::new(2, 6).unwrap();
        let band = Dispersion::cosine(&g);
        let v = PairPotential::cosine(&g);
        let t = build_table(&band, &v, &params(1.0, 0.5), Some(0.0), TableMode::Mollified)
            .unwrap();
        let w: Vec<f64> = (0..36).map(|j| 0.03 + 0.025 * (j % 31) as f64).collect();
        let occ = Occupation::new(&g, w).unwrap();
        let rhs = collision_rhs(&t, &occ).unwrap();
        let total: f64 = rhs.iter().sum();
        let scale: f64 = rhs.iter().map(|x| x.abs()).sum();
        assert!(total.abs() <= 1e-13 * scale.max(1e-300));
    }

    #[test]
    fn folded_view_matches_literal_rhs() {
        for (dim, n) in [(1usize, 8usize), (2, 6)] {
            let g = MomentumGrid::new(dim, n).unwrap();
            let band = Dispersion::cosine(&g);
            let v = PairPotential::cosine(&g);
            let t = build_table(&band, &v, &params(0.9, 0.5), None, TableMode::Mollified)
                .unwrap();
            let folded = FoldedView::from_table(&t);
            assert!(folded.orbit_count() > 0);
            assert!(folded.orbit_count() < t.len());
            let w: Vec<f64> = (0..g.len())
                .map(|j| 0.05 + 0.9 * ((j * 37 + 11) % 17) as f64 / 17.0)
                .collect();
            let lit = t.rhs_slice(&w);
            let fol = folded.rhs_slice(&w);
            let scale: f64 = lit.iter().map(|x| x.abs()).fold(0.0, f64::max).max(1e-300);
            for (a, b) in lit.iter().zip(&fol) {
                assert!((a - b).abs() <= 1e-13 * scale, "fold mismatch: {a} vs {b}");
            }
        }
    }

    #[test]
    fn binary_round_trip_preserves_everything() {
        let g = MomentumGrid::new(1, 8).unwrap();
        let band = Dispersion::cosine(&g);
        let v = PairPotential::cosine(&g);
        let t = build_table(&band, &v, &params(0.7, 0.3), None, TableMode::Mollified).unwrap();
        let mut buf = Vec::new();
        t.write_binary(&mut buf).unwrap();
        let back: CollisionTable<f64> =
            CollisionTable::read_binary(&mut buf.as_slice()).unwrap();
        assert_eq!(back.grid(), t.grid());
        assert_eq!(back.mode(), t.mode());
        assert_eq!(back.eta(), t.eta());
        assert_eq!(back.threshold(), t.threshold());
        assert_eq!(back.lambda(), t.lambda());
        assert_eq!(back.len(), t.len());
        for (a, b) in t.entries().zip(back.entries()) {
            assert_eq!((a.k, a.l, a.m, a.p), (b.k, b.l, b.m, b.p));
            assert_eq!(a.weight, b.weight);
        }
    }

    #[test]
    fn binary_rejects_bad_magic() {
        let mut buf = b"NOPE".to_vec();
        buf.extend_from_slice(&[0u8; 64]);
        let r: Result<CollisionTable<f64>> = CollisionTable::read_binary(&mut buf.as_slice());
        assert!(matches!(r, Err(Error::Config(_))));
    }

    #[test]
    fn csv_export_shape() {
        let g = MomentumGrid::new(1, 4).unwrap();
        let band = Dispersion::cosine(&g);
        let v = PairPotential::cosine(&g);
        let t = build_table(&band, &v, &params(1.0, 0.5), Some(0.0), TableMode::Mollified)
            .unwrap();
        let mut buf = Vec::new();
        t.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let mut lines = text.lines();
        assert!(lines.next().unwrap().starts_with('#'));
        assert_eq!(lines.next().unwrap(), "k,l,m,p,weight");
        assert_eq!(lines.count(), t.len());
    }

    #[test]
    fn default_eta_is_positive_and_scale_aware() {
        let g = MomentumGrid::new(1, 16).unwrap();
        let band: Dispersion<f64> = Dispersion::cosine(&g);
        let eta = default_eta(&band);
        assert!(eta > 0.0 && eta < 4.0, "η = {eta}");
        // Flat band: no spacing information, fall back to unit width.
        let flat = Dispersion::from_fn(&g, |_: [f64; 2]| 1.0);
        assert_eq!(default_eta(&flat), 1.0);
    }
}
