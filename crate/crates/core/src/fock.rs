//! Exact finite-lattice fermion representation (1D torus, ≤ 12 sites) used
//! as ground truth: ladder-operator matrices, Gaussian density operators,
//! the interacting Hamiltonian with momentum-conserving quartic terms, and
//! small-system unitary dynamics via dense eigendecomposition.
//!
//! This module is deliberately `f64`-only: it exists to produce reference
//! numbers, not to be generic. Dimensions are capped so every operation has
//! a predictable memory footprint.

use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::fluctuations::osc_integral;
use crate::quasifree::ModeOp;
use crate::scalar::C;

type C64 = C<f64>;

/// Hard cap on site count (state dimension `2^L`).
pub const MAX_SITES: usize = 12;
/// Dense matrices are only materialized up to this dimension (`L ≤ 10`).
pub const MAX_DENSE_DIM: usize = 1024;

/// One additive term of an operator polynomial: a complex coefficient times
/// a product of momentum-mode ladder operators (applied left to right as
/// written, i.e. the rightmost acts first on a ket).
#[derive(Debug, Clone)]
pub struct ModeTerm {
    /// Scalar coefficient.
    pub coeff: C64,
    /// Ladder-operator word.
    pub word: Vec<ModeOp>,
}

/// Operator as a sum of ladder words.
pub type ModePolynomial = Vec<ModeTerm>;

/// A product of smeared ladder operators; each letter carries its
/// mode-coefficient vector (`Σ_j c_j d†_j` or `Σ_j c_j d_j`).
#[derive(Debug, Clone)]
pub struct SmearedWord {
    /// `(creator flag, mode coefficients)` per letter, left to right.
    pub letters: Vec<(bool, Vec<C64>)>,
}

/// Diagonal Gaussian density operator in the mode-occupation basis.
#[derive(Debug, Clone)]
pub struct GaussianState {
    probs: Vec<f64>,
}

impl GaussianState {
    /// Basis-state probabilities.
    pub fn probs(&self) -> &[f64] {
        &self.probs
    }
    /// Trace of the density operator.
    pub fn trace(&self) -> f64 {
        self.probs.iter().sum()
    }
}

/// Sign picked up by a ladder operator on `mode` passing the occupied modes
/// below it in the string ordering.
#[inline]
fn jw_sign(mask: usize, mode: usize) -> f64 {
    if (mask & ((1usize << mode) - 1)).count_ones() % 2 == 0 {
        1.0
    } else {
        -1.0
    }
}

/// Deterministic 64-bit mixer for reproducible test vectors.
fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Exact ladder-operator representation on the full `2^L`-dimensional state
/// space of an `L`-site 1D torus, organized over momentum modes
/// `p_j = −π + 2πj/L`.
///
/// The anticommutation relations of the position-space operators are
/// verified at construction (to `1e−13`): exhaustively over site pairs for
/// `L ≤ 10`, over a deterministic corner/center subset for `L = 11, 12`.
#[derive(Debug, Clone)]
pub struct FockRep {
    l: usize,
    dim: usize,
    momenta: Vec<f64>,
}

impl FockRep {
    /// Builds and validates the representation. `L` outside `[2, 12]` is a
    /// configuration error.
    pub fn new(l: usize) -> Result<Self> {
        if !(2..=MAX_SITES).contains(&l) {
            return Err(Error::Config(format!(
                "site count {l} outside the supported range 2..={MAX_SITES}"
            )));
        }
        let momenta = (0..l)
            .map(|j| -std::f64::consts::PI + 2.0 * std::f64::consts::PI * j as f64 / l as f64)
            .collect();
        let rep = Self { l, dim: 1 << l, momenta };
        rep.verify_car()?;
        Ok(rep)
    }

    /// Site/mode count.
    #[inline]
    pub fn sites(&self) -> usize {
        self.l
    }

    /// State-space dimension `2^L`.
    #[inline]
    pub fn dim(&self) -> usize {
        self.dim
    }

    /// Momentum values `p_j`.
    #[inline]
    pub fn momenta(&self) -> &[f64] {
        &self.momenta
    }

    fn check_mode(&self, mode: usize) -> Result<()> {
        if mode >= self.l {
            return Err(Error::Contract(format!(
                "mode index {mode} outside 0..{}",
                self.l
            )));
        }
        Ok(())
    }

    /// Accumulates `coeff · (ladder op on mode) src` into `dst`.
    fn accumulate_mode(
        &self,
        creator: bool,
        mode: usize,
        coeff: C64,
        src: &[C64],
        dst: &mut [C64],
    ) {
        let bit = 1usize << mode;
        for (b, &amp) in src.iter().enumerate() {
            if amp == C64::new(0.0, 0.0) {
                continue;
            }
            let occupied = b & bit != 0;
            if creator == occupied {
                continue;
            }
            let s = jw_sign(b, mode);
            dst[b ^ bit] += coeff * amp * s;
        }
    }

    /// Applies a single smeared ladder operator `Σ_j coeffs_j d(†)_j`.
    pub fn apply_smeared(&self, creator: bool, coeffs: &[C64], src: &[C64]) -> Result<Vec<C64>> {
        if coeffs.len() != self.l {
            return Err(Error::Contract(format!(
                "smeared operator has {} coefficients, representation has {} modes",
                coeffs.len(),
                self.l
            )));
        }
        if src.len() != self.dim {
            return Err(Error::Contract("state vector dimension mismatch".into()));
        }
        let mut dst = vec![C64::new(0.0, 0.0); self.dim];
        for (j, &c) in coeffs.iter().enumerate() {
            if c == C64::new(0.0, 0.0) {
                continue;
            }
            self.accumulate_mode(creator, j, c, src, &mut dst);
        }
        Ok(dst)
    }

    /// Applies a smeared word (rightmost letter first).
    pub fn apply_word(&self, word: &SmearedWord, src: &[C64]) -> Result<Vec<C64>> {
        let mut v = src.to_vec();
        for (creator, coeffs) in word.letters.iter().rev() {
            v = self.apply_smeared(*creator, coeffs, &v)?;
        }
        Ok(v)
    }

    /// Applies a polynomial of pinned-mode ladder words.
    pub fn apply_polynomial(&self, poly: &[ModeTerm], src: &[C64]) -> Result<Vec<C64>> {
        if src.len() != self.dim {
            return Err(Error::Contract("state vector dimension mismatch".into()));
        }
        let zero = C64::new(0.0, 0.0);
        let mut dst = vec![zero; self.dim];
        for term in poly {
            for op in &term.word {
                self.check_mode(op.mode)?;
            }
            for (b, &amp) in src.iter().enumerate() {
                if amp == zero {
                    continue;
                }
                if let Some((mask, sign)) = walk_word(b, &term.word) {
                    dst[mask] += term.coeff * amp * sign;
                }
            }
        }
        Ok(dst)
    }

    /// Position annihilator coefficients: `a_x = (1/√L) Σ_j e^{−i p_j x} d_j`.
    pub fn position_coeffs(&self, creator: bool, x: i64) -> Vec<C64> {
        let norm = 1.0 / (self.l as f64).sqrt();
        self.momenta
            .iter()
            .map(|&p| {
                let theta = if creator { p * x as f64 } else { -p * x as f64 };
                C64::new(theta.cos(), theta.sin()) * norm
            })
            .collect()
    }

    /// Deterministic dense test vector (unit-scale entries).
    pub fn test_vector(&self, seed: u64) -> Vec<C64> {
        (0..self.dim)
            .map(|b| {
                let h = splitmix64(seed.wrapping_mul(0x100_0000_01b3).wrapping_add(b as u64));
                let u = (h >> 11) as f64 / (1u64 << 53) as f64;
                let h2 = splitmix64(h);
                let r = 0.25 + 0.75 * ((h2 >> 11) as f64 / (1u64 << 53) as f64);
                let theta = 2.0 * std::f64::consts::PI * u;
                C64::new(r * theta.cos(), r * theta.sin())
            })
            .collect()
    }

    fn verify_car(&self) -> Result<()> {
        let pairs: Vec<(i64, i64)> = if self.l <= 10 {
            let mut v = Vec::new();
            for x in 0..self.l as i64 {
                for y in x..self.l as i64 {
                    v.push((x, y));
                }
            }
            v
        } else {
            let picks = [0i64, 1, (self.l / 2) as i64, self.l as i64 - 1];
            let mut v = Vec::new();
            for (i, &x) in picks.iter().enumerate() {
                for &y in &picks[i..] {
                    v.push((x, y));
                }
            }
            v
        };
        let vectors: Vec<Vec<C64>> = (0..4).map(|k| self.test_vector(k as u64 + 1)).collect();
        let tol = 1e-13;
        for &(x, y) in &pairs {
            let ax = self.position_coeffs(false, x);
            let ay = self.position_coeffs(false, y);
            let cy = self.position_coeffs(true, y);
            for v in &vectors {
                let vnorm = l2(v);
                // {a_x, a*_y} − δ_{xy}
                let t1 = self.apply_smeared(false, &ax, &self.apply_smeared(true, &cy, v)?)?;
                let t2 = self.apply_smeared(true, &cy, &self.apply_smeared(false, &ax, v)?)?;
                let delta = if x == y { 1.0 } else { 0.0 };
                let mut worst = 0.0f64;
                for b in 0..self.dim {
                    let r = t1[b] + t2[b] - v[b] * delta;
                    worst = worst.max(r.norm());
                }
                if worst > tol * vnorm {
                    return Err(Error::Numerical(format!(
                        "mixed anticommutator deviates by {worst:e} at sites ({x},{y})"
                    )));
                }
                // {a_x, a_y}
                let s1 = self.apply_smeared(false, &ax, &self.apply_smeared(false, &ay, v)?)?;
                let s2 = self.apply_smeared(false, &ay, &self.apply_smeared(false, &ax, v)?)?;
                let mut worst2 = 0.0f64;
                for b in 0..self.dim {
                    worst2 = worst2.max((s1[b] + s2[b]).norm());
                }
                if worst2 > tol * vnorm {
                    return Err(Error::Numerical(format!(
                        "annihilator anticommutator deviates by {worst2:e} at sites ({x},{y})"
                    )));
                }
            }
        }
        Ok(())
    }

    /// Diagonal Gaussian density operator with prescribed mode occupations.
    pub fn gaussian_state(&self, w: &[f64]) -> Result<GaussianState> {
        if w.len() != self.l {
            return Err(Error::Contract(format!(
                "occupation vector has {} entries, representation has {} modes",
                w.len(),
                self.l
            )));
        }
        for (j, &wj) in w.iter().enumerate() {
            if !(0.0..=1.0).contains(&wj) || !wj.is_finite() {
                return Err(Error::Contract(format!(
                    "occupation {wj} at mode {j} outside [0,1]"
                )));
            }
        }
        let probs = (0..self.dim)
            .map(|b| {
                let mut p = 1.0;
                for (j, &wj) in w.iter().enumerate() {
                    p *= if b & (1 << j) != 0 { wj } else { 1.0 - wj };
                }
                p
            })
            .collect();
        Ok(GaussianState { probs })
    }

    fn check_state(&self, state: &GaussianState) -> Result<()> {
        if state.probs.len() != self.dim {
            return Err(Error::Contract(
                "density operator dimension does not match the representation".into(),
            ));
        }
        Ok(())
    }

    /// `trace(ρ · poly)` for a diagonal Gaussian density operator.
    pub fn expect_poly(&self, state: &GaussianState, poly: &[ModeTerm]) -> Result<C64> {
        self.check_state(state)?;
        for term in poly {
            for op in &term.word {
                self.check_mode(op.mode)?;
            }
        }
        let mut acc = C64::new(0.0, 0.0);
        for term in poly {
            for (b, &p) in state.probs.iter().enumerate() {
                if p == 0.0 {
                    continue;
                }
                if let Some((mask, sign)) = walk_word(b, &term.word) {
                    if mask == b {
                        acc += term.coeff * (sign * p);
                    }
                }
            }
        }
        Ok(acc)
    }

    /// `trace(ρ · word)` for a smeared ladder word.
    pub fn expect_word(&self, state: &GaussianState, word: &SmearedWord) -> Result<C64> {
        self.check_state(state)?;
        let zero = C64::new(0.0, 0.0);
        let mut acc = zero;
        let mut basis = vec![zero; self.dim];
        for (b, &p) in state.probs.iter().enumerate() {
            if p == 0.0 {
                continue;
            }
            basis[b] = C64::new(1.0, 0.0);
            let out = self.apply_word(word, &basis)?;
            acc += out[b] * p;
            basis[b] = zero;
        }
        Ok(acc)
    }

    /// Dense matrix of a polynomial (dimension-capped).
    pub fn dense_polynomial(&self, poly: &[ModeTerm]) -> Result<DMatrix<C64>> {
        if self.dim > MAX_DENSE_DIM {
            return Err(Error::Resource(format!(
                "dense matrices are capped at dimension {MAX_DENSE_DIM}; requested {}",
                self.dim
            )));
        }
        for term in poly {
            for op in &term.word {
                self.check_mode(op.mode)?;
            }
        }
        let mut m = DMatrix::from_element(self.dim, self.dim, C64::new(0.0, 0.0));
        for term in poly {
            for c in 0..self.dim {
                if let Some((mask, sign)) = walk_word(c, &term.word) {
                    m[(mask, c)] += term.coeff * sign;
                }
            }
        }
        Ok(m)
    }

    /// Full lattice Hamiltonian over momentum modes:
    /// `H = Σ_j ε_j d†_j d_j + λ·n_scale^{−1/2} Σ [v(p_k−p_p) − v(p_k−p_m)] d†_k d†_l d_m d_p`,
    /// the quartic sum running over all index triples `(k, m, p)` with the
    /// fourth index fixed by momentum conservation `k + l ≡ m + p (mod L)`.
    /// Words that vanish identically (`k = l` or `m = p`) are omitted.
    /// The pair interaction `v` must be even and `2π`-periodic for the
    /// result to be hermitian.
    pub fn build_hamiltonian(
        &self,
        eps: &[f64],
        v: impl Fn(f64) -> f64,
        lambda: f64,
        n_scale: f64,
    ) -> Result<ModePolynomial> {
        if eps.len() != self.l {
            return Err(Error::Contract(format!(
                "band has {} values, representation has {} modes",
                eps.len(),
                self.l
            )));
        }
        if !(n_scale > 0.0) || !lambda.is_finite() {
            return Err(Error::Config(
                "coupling and scale parameter must be finite, scale positive".into(),
            ));
        }
        let l = self.l;
        let mut poly: ModePolynomial = Vec::new();
        for (j, &e) in eps.iter().enumerate() {
            if e != 0.0 {
                poly.push(ModeTerm {
                    coeff: C64::new(e, 0.0),
                    word: vec![ModeOp::create(j), ModeOp::destroy(j)],
                });
            }
        }
        let pref = lambda / n_scale.sqrt();
        let angle = |a: usize, b: usize| -> f64 {
            // p_a − p_b reduced to (−π, π].
            let mut th = 2.0 * std::f64::consts::PI * (a as f64 - b as f64) / l as f64;
            while th <= -std::f64::consts::PI {
                th += 2.0 * std::f64::consts::PI;
            }
            while th > std::f64::consts::PI {
                th -= 2.0 * std::f64::consts::PI;
            }
            th
        };
        for k in 0..l {
            for m in 0..l {
                for p in 0..l {
                    let lq = (m + p + l - k) % l;
                    if k == lq || m == p {
                        continue;
                    }
                    let mel = v(angle(k, p)) - v(angle(k, m));
                    if mel == 0.0 {
                        continue;
                    }
                    poly.push(ModeTerm {
                        coeff: C64::new(pref * mel, 0.0),
                        word: vec![
                            ModeOp::create(k),
                            ModeOp::create(lq),
                            ModeOp::destroy(m),
                            ModeOp::destroy(p),
                        ],
                    });
                }
            }
        }
        Ok(poly)
    }

    /// Free energies `E_b = Σ_{j∈b} ε_j` of the occupation basis states.
    pub fn free_energies(&self, eps: &[f64]) -> Result<Vec<f64>> {
        if eps.len() != self.l {
            return Err(Error::Contract("band length mismatch".into()));
        }
        Ok((0..self.dim)
            .map(|b| {
                let mut e = 0.0;
                for (j, &ej) in eps.iter().enumerate() {
                    if b & (1 << j) != 0 {
                        e += ej;
                    }
                }
                e
            })
            .collect())
    }

    /// Heisenberg-evolved expectation `trace(ρ e^{iHT} A e^{−iHT})` via a
    /// dense eigendecomposition of the hermitian `H`.
    pub fn exact_evolve_expect(
        &self,
        state: &GaussianState,
        hamiltonian: &[ModeTerm],
        observable: &[ModeTerm],
        t: f64,
    ) -> Result<C64> {
        self.check_state(state)?;
        if !t.is_finite() {
            return Err(Error::Config("evolution time must be finite".into()));
        }
        let h = self.dense_polynomial(hamiltonian)?;
        let a = self.dense_polynomial(observable)?;
        let eig = nalgebra::linalg::SymmetricEigen::new(h);
        let u = &eig.eigenvectors;
        // Unitarity of the eigenbasis: ‖U†U − I‖_max.
        let gram = u.adjoint() * u;
        let mut drift = 0.0f64;
        for i in 0..self.dim {
            for j in 0..self.dim {
                let want = if i == j { C64::new(1.0, 0.0) } else { C64::new(0.0, 0.0) };
                drift = drift.max((gram[(i, j)] - want).norm());
            }
        }
        if drift > 1e-10 {
            return Err(Error::Convergence(format!(
                "eigenbasis lost unitarity by {drift:e}"
            )));
        }
        let mut b = u.adjoint() * a * u;
        for i in 0..self.dim {
            for j in 0..self.dim {
                let phase = (eig.eigenvalues[i] - eig.eigenvalues[j]) * t;
                b[(i, j)] *= C64::new(phase.cos(), phase.sin());
            }
        }
        let at = u * b * u.adjoint();
        let mut acc = C64::new(0.0, 0.0);
        for (bidx, &p) in state.probs.iter().enumerate() {
            acc += at[(bidx, bidx)] * p;
        }
        Ok(acc)
    }

    /// First-order (in the quartic part) drift of `⟨A⟩` over `[0, t]`:
    /// `i Σ_{b,b′} p_b [V_{bb′} A_{b′b} I(E_b−E_{b′}, t) − A_{bb′} V_{b′b} I(E_{b′}−E_b, t)]`
    /// with `I` the elementary oscillatory time integral and `E` the free
    /// energies. This is the closed form of
    /// `i ∫_0^t trace(ρ [V(s), A]) ds` with `V(s)` freely evolved, exact to
    /// first order and free of quadrature error.
    pub fn first_order_drift(
        &self,
        state: &GaussianState,
        eps: &[f64],
        interaction: &[ModeTerm],
        observable: &[ModeTerm],
        t: f64,
    ) -> Result<C64> {
        self.check_state(state)?;
        let v = self.dense_polynomial(interaction)?;
        let a = self.dense_polynomial(observable)?;
        let energies = self.free_energies(eps)?;
        let mut acc = C64::new(0.0, 0.0);
        for (b, &p) in state.probs.iter().enumerate() {
            if p == 0.0 {
                continue;
            }
            let mut row = C64::new(0.0, 0.0);
            for b2 in 0..self.dim {
                let omega = energies[b] - energies[b2];
                let fwd = v[(b, b2)] * a[(b2, b)] * osc_integral(omega, t);
                let bwd = a[(b, b2)] * v[(b2, b)] * osc_integral(-omega, t);
                row += fwd - bwd;
            }
            acc += row * p;
        }
        Ok(acc * C64::new(0.0, 1.0))
    }
}

/// Walks a pinned-mode ladder word over a basis state (rightmost operator
/// first); returns the resulting basis state and accumulated sign, or
/// `None` if the word annihilates it.
fn walk_word(basis: usize, word: &[ModeOp]) -> Option<(usize, f64)> {
    let mut mask = basis;
    let mut sign = 1.0f64;
    for op in word.iter().rev() {
        let bit = 1usize << op.mode;
        let occupied = mask & bit != 0;
        if op.creator == occupied {
            return None;
        }
        sign *= jw_sign(mask, op.mode);
        mask ^= bit;
    }
    Some((mask, sign))
}

fn l2(v: &[C64]) -> f64 {
    v.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt()
}
