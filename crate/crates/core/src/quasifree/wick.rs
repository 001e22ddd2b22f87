//! Moment engines for gauge-invariant Gaussian states over momentum modes.
//!
//! Two independent evaluators are provided:
//!
//! * [`monomial_expect`] — expectation of a word in single-mode ladder
//!   operators, by recursive pairing. Exponential in the word length, used
//!   as a cross-check.
//! * [`WickContext`] — expectation of a word whose letters are either
//!   single modes or registered dense mode-coefficient vectors, via the
//!   pairing-sum with crossing signs and cached pair contractions. Words up
//!   to length 10 (five creator/annihilator pairs) are supported, which
//!   covers every product of at most two quadratic observables plus probes.

use crate::error::{Error, Result};
use crate::scalar::{czero, Real, C};

/// One ladder operator acting on a single momentum mode.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ModeOp {
    /// `true` for a creation operator.
    pub creator: bool,
    /// Flattened mode index.
    pub mode: usize,
}

impl ModeOp {
    /// Creation operator on `mode`.
    pub fn create(mode: usize) -> Self {
        Self { creator: true, mode }
    }
    /// Annihilation operator on `mode`.
    pub fn destroy(mode: usize) -> Self {
        Self { creator: false, mode }
    }
}

/// Expectation of a product of single-mode ladder operators in the diagonal
/// Gaussian state with mode occupations `w`, by recursive contraction of the
/// leftmost operator against every compatible partner.
///
/// Contractions are diagonal: a creator at position `i` pairs with a later
/// annihilator on the same mode (value `w`), an annihilator with a later
/// creator on the same mode (value `1 − w`); the sign is `(−1)^{gap}` for the
/// operators jumped over.
pub fn monomial_expect<T: Real>(w: &[T], ops: &[ModeOp]) -> C<T> {
    if ops.is_empty() {
        return C::new(T::one(), T::zero());
    }
    if ops.len() % 2 == 1 {
        return czero();
    }
    let first = ops[0];
    let mut total = czero::<T>();
    for j in 1..ops.len() {
        let other = ops[j];
        if other.mode != first.mode || other.creator == first.creator {
            continue;
        }
        let value = if first.creator {
            w[first.mode]
        } else {
            T::one() - w[first.mode]
        };
        if value == T::zero() {
            continue;
        }
        let mut rest: Vec<ModeOp> = Vec::with_capacity(ops.len() - 2);
        rest.extend_from_slice(&ops[1..j]);
        rest.extend_from_slice(&ops[j + 1..]);
        let sign = if j % 2 == 1 { T::one() } else { -T::one() };
        total = total + monomial_expect(w, &rest) * C::new(sign * value, T::zero());
    }
    total
}

/// A smeared ladder-operator letter: either pinned to one mode or carrying a
/// dense coefficient vector registered with the context.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Leg {
    /// Single mode with unit coefficient.
    Pinned(usize),
    /// Index of a dense coefficient vector registered via
    /// [`WickContext::register`].
    Dense(usize),
}

/// One letter of a word: creator/annihilator flag plus its smearing.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SmearedOp {
    /// `true` for a creation operator.
    pub creator: bool,
    /// Coefficients of the operator over momentum modes.
    pub leg: Leg,
}

impl SmearedOp {
    /// Creation operator with the given leg.
    pub fn create(leg: Leg) -> Self {
        Self { creator: true, leg }
    }
    /// Annihilation operator with the given leg.
    pub fn destroy(leg: Leg) -> Self {
        Self { creator: false, leg }
    }
}

const MAX_PAIRS: usize = 5;

/// Pairing-sum evaluator over a fixed diagonal Gaussian state.
///
/// Dense legs are registered once and referenced by index, so the
/// dense–dense pair contractions (mode sums of length `n^ν`) are computed
/// lazily and cached across words sharing the context.
pub struct WickContext<'a, T: Real> {
    w: &'a [T],
    dense: Vec<&'a [C<T>]>,
    /// `cache[occ][i][j]`: contraction of dense creator `i` with dense
    /// annihilator `j`; `occ = 0` weighs with `w`, `occ = 1` with `1 − w`.
    cache: [Vec<Vec<Option<C<T>>>>; 2],
}

impl<'a, T: Real> WickContext<'a, T> {
    /// New context over a fixed occupation vector.
    pub fn new(w: &'a [T]) -> Self {
        Self { w, dense: Vec::new(), cache: [Vec::new(), Vec::new()] }
    }

    /// Registers a dense coefficient vector; returns its id for [`Leg::Dense`].
    pub fn register(&mut self, coeffs: &'a [C<T>]) -> Result<usize> {
        if coeffs.len() != self.w.len() {
            return Err(Error::Contract(format!(
                "dense leg has {} coefficients, state has {} modes",
                coeffs.len(),
                self.w.len()
            )));
        }
        self.dense.push(coeffs);
        for side in &mut self.cache {
            for row in side.iter_mut() {
                row.push(None);
            }
            side.push(vec![None; self.dense.len()]);
        }
        Ok(self.dense.len() - 1)
    }

    /// Weight of one contraction: `w[k]` when the creator stands first,
    /// `1 − w[k]` when the annihilator does.
    #[inline]
    fn occ_factor(&self, mode: usize, creator_first: bool) -> T {
        if creator_first {
            self.w[mode]
        } else {
            T::one() - self.w[mode]
        }
    }

    /// Contraction of the creator letter `cre` with the annihilator letter
    /// `ann`; `creator_first` tells which stands earlier in the word.
    fn pair_value(&mut self, cre: Leg, ann: Leg, creator_first: bool) -> C<T> {
        match (cre, ann) {
            (Leg::Pinned(a), Leg::Pinned(b)) => {
                if a == b {
                    C::new(self.occ_factor(a, creator_first), T::zero())
                } else {
                    czero()
                }
            }
            (Leg::Pinned(a), Leg::Dense(j)) => {
                self.dense[j][a] * self.occ_factor(a, creator_first)
            }
            (Leg::Dense(i), Leg::Pinned(b)) => {
                self.dense[i][b].conj() * self.occ_factor(b, creator_first)
            }
            (Leg::Dense(i), Leg::Dense(j)) => {
                let side = if creator_first { 0 } else { 1 };
                if let Some(v) = self.cache[side][i][j] {
                    return v;
                }
                let mut acc = czero::<T>();
                let (u, v) = (self.dense[i], self.dense[j]);
                for k in 0..self.w.len() {
                    acc = acc + u[k].conj() * v[k] * self.occ_factor(k, creator_first);
                }
                self.cache[side][i][j] = Some(acc);
                acc
            }
        }
    }

    /// Expectation of the word `ops` (left to right) in the context state.
    pub fn expect(&mut self, ops: &[SmearedOp]) -> Result<C<T>> {
        let creators: Vec<usize> =
            (0..ops.len()).filter(|&i| ops[i].creator).collect();
        let annihilators: Vec<usize> =
            (0..ops.len()).filter(|&i| !ops[i].creator).collect();
        if creators.len() != annihilators.len() {
            return Ok(czero());
        }
        let r = creators.len();
        if r > MAX_PAIRS {
            return Err(Error::Contract(format!(
                "word has {r} creator/annihilator pairs; at most {MAX_PAIRS} supported"
            )));
        }
        if r == 0 {
            return Ok(C::new(T::one(), T::zero()));
        }
        let mut total = czero::<T>();
        let mut perm = vec![0usize; r];
        let mut used = vec![false; r];
        self.expect_rec(ops, &creators, &annihilators, &mut perm, &mut used, 0, &mut total);
        Ok(total)
    }

    #[allow(clippy::too_many_arguments)]
    fn expect_rec(
        &mut self,
        ops: &[SmearedOp],
        creators: &[usize],
        annihilators: &[usize],
        perm: &mut [usize],
        used: &mut [bool],
        depth: usize,
        total: &mut C<T>,
    ) {
        let r = creators.len();
        if depth == r {
            // Chords (min, max) of each matched pair; sign = crossing parity.
            let mut chords: Vec<(usize, usize)> = Vec::with_capacity(r);
            for (i, &ai) in perm.iter().enumerate() {
                let (c, a) = (creators[i], annihilators[ai]);
                chords.push((c.min(a), c.max(a)));
            }
            let mut crossings = 0usize;
            for i in 0..r {
                for j in (i + 1)..r {
                    let (a1, b1) = chords[i];
                    let (a2, b2) = chords[j];
                    if (a1 < a2 && a2 < b1 && b1 < b2) || (a2 < a1 && a1 < b2 && b2 < b1) {
                        crossings += 1;
                    }
                }
            }
            let mut value = C::new(
                if crossings % 2 == 0 { T::one() } else { -T::one() },
                T::zero(),
            );
            for (i, &ai) in perm.iter().enumerate() {
                let (cpos, apos) = (creators[i], annihilators[ai]);
                value = value
                    * self.pair_value(ops[cpos].leg, ops[apos].leg, cpos < apos);
                if value.norm_sqr() == T::zero() {
                    break;
                }
            }
            *total = *total + value;
            return;
        }
        for cand in 0..r {
            if used[cand] {
                continue;
            }
            used[cand] = true;
            perm[depth] = cand;
            self.expect_rec(ops, creators, annihilators, perm, used, depth + 1, total);
            used[cand] = false;
        }
    }

    /// Expectation of the commutator of two words: `⟨AB⟩ − ⟨BA⟩`.
    pub fn expect_commutator(
        &mut self,
        a: &[SmearedOp],
        b: &[SmearedOp],
    ) -> Result<C<T>> {
        let mut ab: Vec<SmearedOp> = Vec::with_capacity(a.len() + b.len());
        ab.extend_from_slice(a);
        ab.extend_from_slice(b);
        let mut ba: Vec<SmearedOp> = Vec::with_capacity(a.len() + b.len());
        ba.extend_from_slice(b);
        ba.extend_from_slice(a);
        Ok(self.expect(&ab)? - self.expect(&ba)?)
    }
}

/// Determinant of a small complex matrix by Gaussian elimination with
/// partial pivoting. Used for the pair-determinant evaluation of Gaussian
/// moments.
pub fn small_det<T: Real>(mut m: Vec<Vec<C<T>>>) -> C<T> {
    let n = m.len();
    let mut det = C::new(T::one(), T::zero());
    for col in 0..n {
        let mut pivot = col;
        let mut best = m[col][col].norm_sqr();
        for (row, mrow) in m.iter().enumerate().skip(col + 1) {
            let mag = mrow[col].norm_sqr();
            if mag > best {
                best = mag;
                pivot = row;
            }
        }
        if best == T::zero() {
            return czero();
        }
        if pivot != col {
            m.swap(pivot, col);
            det = -det;
        }
        det = det * m[col][col];
        let inv = C::new(T::one(), T::zero()) / m[col][col];
        for row in (col + 1)..n {
            let factor = m[row][col] * inv;
            if factor.norm_sqr() == T::zero() {
                continue;
            }
            for k in col..n {
                let sub = factor * m[col][k];
                m[row][k] = m[row][k] - sub;
            }
        }
    }
    det
}
