//! Finite continuous-time Markov chains: global-balance solving,
//! uniformization, stochastic complementation and the single-entry fold-back
//! construction.
//!
//! Everything here is dense. The chains this crate builds stay in the
//! hundreds-to-thousands of states, so an LU solve with partial pivoting is
//! fast and accurate in the absolute sense. Where tiny probabilities must be
//! accurate relative to their own size, [`steady_state_gth`] and [`censor`]
//! avoid cancellation altogether.

use std::collections::VecDeque;
use std::io::Write;

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

const ROW_SUM_TOL: f64 = 1e-12;
const NORMALIZATION_TOL: f64 = 1e-10;

/// Generator of a finite CTMC. Off-diagonals are rates, each row sums to zero.
#[derive(Debug, Clone, PartialEq)]
pub struct RateMatrix {
    q: DMatrix<f64>,
}

impl RateMatrix {
    /// Validates an explicit generator.
    pub fn new(q: DMatrix<f64>) -> Result<Self> {
        if !q.is_square() || q.nrows() == 0 {
            return Err(Error::InvalidParameter(
                "rate matrix must be square and non-empty".into(),
            ));
        }
        let n = q.nrows();
        for i in 0..n {
            let mut sum = 0.0;
            let mut scale = 1.0_f64;
            for j in 0..n {
                let v = q[(i, j)];
                if !v.is_finite() {
                    return Err(Error::InvalidParameter(format!("non-finite entry at ({i}, {j})")));
                }
                if i != j && v < 0.0 {
                    return Err(Error::InvalidParameter(format!(
                        "negative off-diagonal rate {v} at ({i}, {j})"
                    )));
                }
                sum += v;
                scale = scale.max(v.abs());
            }
            if sum.abs() > ROW_SUM_TOL * scale {
                return Err(Error::InvalidParameter(format!("row {i} sums to {sum}, not 0")));
            }
        }
        Ok(Self { q })
    }

    /// Builds a generator from off-diagonal `(from, to, rate)` triples; repeated
    /// pairs accumulate and the diagonal is filled in.
    pub fn from_transitions<I>(n: usize, transitions: I) -> Result<Self>
    where
        I: IntoIterator<Item = (usize, usize, f64)>,
    {
        let mut q = DMatrix::zeros(n, n);
        for (i, j, rate) in transitions {
            if i >= n || j >= n {
                return Err(Error::InvalidParameter(format!(
                    "transition ({i}, {j}) outside {n} states"
                )));
            }
            if i == j || rate == 0.0 {
                continue;
            }
            if !(rate > 0.0) || !rate.is_finite() {
                return Err(Error::InvalidParameter(format!("rate {rate} on ({i}, {j})")));
            }
            q[(i, j)] += rate;
        }
        for i in 0..n {
            let out: f64 = (0..n).filter(|&j| j != i).map(|j| q[(i, j)]).sum();
            q[(i, i)] = -out;
        }
        Ok(Self { q })
    }

    pub fn dim(&self) -> usize {
        self.q.nrows()
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.q[(i, j)]
    }

    pub fn as_matrix(&self) -> &DMatrix<f64> {
        &self.q
    }

    /// Largest exit rate, `max |q_ii|`.
    pub fn max_exit_rate(&self) -> f64 {
        (0..self.dim()).map(|i| self.q[(i, i)].abs()).fold(0.0, f64::max)
    }

    /// Returns the first state not in the same communicating class as state 0,
    /// or `None` when the positive-rate graph is strongly connected.
    pub fn unreachable_state(&self) -> Option<usize> {
        let n = self.dim();
        let reach = |forward: bool| {
            let mut seen = vec![false; n];
            let mut queue = VecDeque::from([0usize]);
            seen[0] = true;
            while let Some(u) = queue.pop_front() {
                for v in 0..n {
                    let rate = if forward { self.q[(u, v)] } else { self.q[(v, u)] };
                    if v != u && rate > 0.0 && !seen[v] {
                        seen[v] = true;
                        queue.push_back(v);
                    }
                }
            }
            seen
        };
        let fwd = reach(true);
        let bwd = reach(false);
        (0..n).find(|&i| !fwd[i] || !bwd[i])
    }

    /// Dumps every non-zero entry as `row,col,rate`.
    pub fn write_csv<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        writeln!(out, "row,col,rate")?;
        for i in 0..self.dim() {
            for j in 0..self.dim() {
                let v = self.q[(i, j)];
                if v != 0.0 {
                    writeln!(out, "{i},{j},{v:e}")?;
                }
            }
        }
        Ok(())
    }
}

/// A probability vector over an indexed state set.
#[derive(Debug, Clone, PartialEq)]
pub struct Distribution(Vec<f64>);

impl Distribution {
    pub fn new(p: Vec<f64>) -> Result<Self> {
        if p.iter().any(|&x| !(x >= 0.0) || x > 1.0 + NORMALIZATION_TOL) {
            return Err(Error::InvalidParameter("probabilities must lie in [0, 1]".into()));
        }
        let total: f64 = p.iter().sum();
        if (total - 1.0).abs() > NORMALIZATION_TOL {
            return Err(Error::InvalidParameter(format!("probabilities sum to {total}")));
        }
        Ok(Self(p))
    }

    /// Normalizes non-negative weights, clamping round-off negatives to zero.
    pub(crate) fn from_weights(mut w: Vec<f64>) -> Result<Self> {
        for x in w.iter_mut() {
            if *x < 0.0 {
                *x = 0.0;
            }
        }
        let total: f64 = w.iter().sum();
        if !(total > 0.0) || !total.is_finite() {
            return Err(Error::Structural("weights do not normalize".into()));
        }
        Self::new(w.into_iter().map(|x| x / total).collect())
    }

    pub fn probs(&self) -> &[f64] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.0
    }

    /// Restriction to `states`, renormalized: the conditional distribution.
    pub fn conditional(&self, states: &[usize]) -> Result<Distribution> {
        Distribution::from_weights(states.iter().map(|&i| self.0[i]).collect())
    }
}

impl std::ops::Index<usize> for Distribution {
    type Output = f64;

    fn index(&self, i: usize) -> &f64 {
        &self.0[i]
    }
}

/// Two disjoint index sets covering `0..n`. `left` keeps the caller's order;
/// `right` is ascending.
#[derive(Debug, Clone, PartialEq)]
pub struct Partition {
    left: Vec<usize>,
    right: Vec<usize>,
}

impl Partition {
    /// `right` may be empty (the degenerate whole-space partition); `left` may not.
    pub fn new(n: usize, left: Vec<usize>) -> Result<Self> {
        if left.is_empty() {
            return Err(Error::InvalidParameter(
                "partition side L must be non-empty".into(),
            ));
        }
        let mut member = vec![false; n];
        for &i in &left {
            if i >= n {
                return Err(Error::InvalidParameter(format!("state {i} outside {n} states")));
            }
            if member[i] {
                return Err(Error::InvalidParameter(format!("state {i} listed twice")));
            }
            member[i] = true;
        }
        let right = (0..n).filter(|&i| !member[i]).collect();
        Ok(Self { left, right })
    }

    pub fn left(&self) -> &[usize] {
        &self.left
    }

    pub fn right(&self) -> &[usize] {
        &self.right
    }

    pub fn dim(&self) -> usize {
        self.left.len() + self.right.len()
    }
}

/// Row-stochastic matrix of a discrete-time chain.
#[derive(Debug, Clone, PartialEq)]
pub struct StochasticMatrix {
    p: DMatrix<f64>,
}

impl StochasticMatrix {
    pub fn new(p: DMatrix<f64>) -> Result<Self> {
        if !p.is_square() || p.nrows() == 0 {
            return Err(Error::InvalidParameter(
                "probability matrix must be square and non-empty".into(),
            ));
        }
        for i in 0..p.nrows() {
            let row = p.row(i);
            if row.iter().any(|&x| x < -1e-12) {
                return Err(Error::InvalidParameter(format!("row {i} has a negative entry")));
            }
            let s: f64 = row.iter().sum();
            if (s - 1.0).abs() > 1e-10 {
                return Err(Error::InvalidParameter(format!("row {i} sums to {s}")));
            }
        }
        Ok(Self { p })
    }

    pub fn as_matrix(&self) -> &DMatrix<f64> {
        &self.p
    }

    pub fn dim(&self) -> usize {
        self.p.nrows()
    }

    /// Stationary distribution, via the generator `P - I`.
    pub fn stationary(&self) -> Result<Distribution> {
        let n = self.dim();
        let mut g = self.p.clone();
        for i in 0..n {
            // P - I with the diagonal recomputed so rows sum to zero exactly
            let off: f64 = (0..n).filter(|&j| j != i).map(|j| g[(i, j)].max(0.0)).sum();
            for j in 0..n {
                if j != i {
                    g[(i, j)] = g[(i, j)].max(0.0);
                }
            }
            g[(i, i)] = -off;
        }
        steady_state(&RateMatrix { q: g })
    }
}

/// Stationary distribution `pi Q = 0, pi e = 1` of an irreducible generator.
///
/// The last balance equation is replaced by the normalization condition and
/// the system is solved by LU with partial pivoting.
pub fn steady_state(q: &RateMatrix) -> Result<Distribution> {
    let n = q.dim();
    if n == 1 {
        return Distribution::new(vec![1.0]);
    }
    if let Some(state) = q.unreachable_state() {
        return Err(Error::Structural(format!(
            "chain is reducible: state {state} does not communicate with state 0"
        )));
    }
    let mut a = q.q.transpose();
    for j in 0..n {
        a[(n - 1, j)] = 1.0;
    }
    let mut b = DVector::zeros(n);
    b[n - 1] = 1.0;
    let x = a
        .lu()
        .solve(&b)
        .ok_or_else(|| Error::Structural("singular balance system".into()))?;
    Distribution::from_weights(x.iter().copied().collect())
}

/// `P = I + Q / zeta`; `zeta` defaults to the largest exit rate.
pub fn uniformize(q: &RateMatrix, zeta: Option<f64>) -> Result<StochasticMatrix> {
    let min_zeta = q.max_exit_rate();
    let zeta = match zeta {
        None => min_zeta,
        Some(z) if z >= min_zeta && z > 0.0 => z,
        Some(z) => {
            return Err(Error::InvalidParameter(format!(
                "uniformization constant {z} is below max |q_ii| = {min_zeta}"
            )))
        }
    };
    if zeta == 0.0 {
        // a single absorbing state
        return StochasticMatrix::new(DMatrix::identity(q.dim(), q.dim()));
    }
    let n = q.dim();
    let mut p = &q.q / zeta;
    for i in 0..n {
        p[(i, i)] += 1.0;
        if p[(i, i)] < 0.0 {
            p[(i, i)] = 0.0;
        }
    }
    StochasticMatrix::new(p)
}

fn submatrix(m: &DMatrix<f64>, rows: &[usize], cols: &[usize]) -> DMatrix<f64> {
    DMatrix::from_fn(rows.len(), cols.len(), |i, j| m[(rows[i], cols[j])])
}

/// Stochastic complement of `P` on the `L` side of `part`:
/// `P_LL + P_LR (I - P_RR)^-1 P_RL`, indexed in `part.left()` order.
pub fn stochastic_complement(p: &StochasticMatrix, part: &Partition) -> Result<StochasticMatrix> {
    if part.dim() != p.dim() {
        return Err(Error::InvalidParameter(
            "partition does not match matrix size".into(),
        ));
    }
    let (l, r) = (part.left(), part.right());
    let p_ll = submatrix(&p.p, l, l);
    if r.is_empty() {
        return StochasticMatrix::new(p_ll);
    }
    let p_lr = submatrix(&p.p, l, r);
    let p_rl = submatrix(&p.p, r, l);
    let i_minus_rr = DMatrix::identity(r.len(), r.len()) - submatrix(&p.p, r, r);
    let lu = i_minus_rr.lu();
    let det = lu.determinant();
    let solved = lu.solve(&p_rl).filter(|_| det.abs() > 1e-300 && det.is_finite());
    let solved =
        solved.ok_or_else(|| Error::Structural("I - P_RR is singular: R contains a closed class".into()))?;
    let c = p_ll + p_lr * solved;
    // round-off can leave -1e-17 entries
    let c = c.map(|x| if x < 0.0 && x > -1e-12 { 0.0 } else { x });
    StochasticMatrix::new(c)
}

/// Conditional stationary distribution on `L` when every return from `R`
/// lands in the single state `entry_state`: solves
/// `pi_L [Q_LL + Q_LR e e_i^T] = 0`.
///
/// The result is indexed in `part.left()` order.
pub fn fold_back_conditional(q: &RateMatrix, part: &Partition, entry_state: usize) -> Result<Distribution> {
    steady_state(&fold_back_generator(q, part, entry_state)?)
}

/// The generator `Q_LL + Q_LR e e_i^T` on `L`: every exit to `R` is redirected
/// to `entry_state`. Fails unless returns from `R` only land there.
pub fn fold_back_generator(q: &RateMatrix, part: &Partition, entry_state: usize) -> Result<RateMatrix> {
    if part.dim() != q.dim() {
        return Err(Error::InvalidParameter(
            "partition does not match matrix size".into(),
        ));
    }
    let l = part.left();
    let entry_pos = l
        .iter()
        .position(|&s| s == entry_state)
        .ok_or_else(|| Error::TheoremInapplicable(format!("entry state {entry_state} is not in L")))?;
    for &r in part.right() {
        for &s in l {
            if s != entry_state && q.get(r, s) > 0.0 {
                return Err(Error::TheoremInapplicable(format!(
                    "state {r} in R returns to {s}, not only to {entry_state}"
                )));
            }
        }
    }
    let n = l.len();
    let mut folded = submatrix(&q.q, l, l);
    for (i, &s) in l.iter().enumerate() {
        let exit: f64 = part.right().iter().map(|&r| q.get(s, r)).sum();
        folded[(i, entry_pos)] += exit;
    }
    // rebuild the diagonal so rows sum to exactly zero
    for i in 0..n {
        let off: f64 = (0..n).filter(|&j| j != i).map(|j| folded[(i, j)]).sum();
        folded[(i, i)] = -off;
    }
    Ok(RateMatrix { q: folded })
}

/// Censors the chain to `L`: the generator of the process watched only while
/// it is in `L` (the rate form of the stochastic complement). States of `R`
/// are eliminated one at a time by GTH reduction, which only adds and
/// multiplies non-negative numbers. Indexed in `part.left()` order.
pub fn censor(q: &RateMatrix, part: &Partition) -> Result<RateMatrix> {
    if part.dim() != q.dim() {
        return Err(Error::InvalidParameter(
            "partition does not match matrix size".into(),
        ));
    }
    let order: Vec<usize> = part.left().iter().chain(part.right()).copied().collect();
    let mut a = off_diagonal(&submatrix(&q.q, &order, &order));
    let keep = part.left().len();
    for k in (keep..order.len()).rev() {
        eliminate(&mut a, k)?;
    }
    let mut c = DMatrix::zeros(keep, keep);
    for i in 0..keep {
        let mut off = 0.0;
        for j in 0..keep {
            if i != j {
                c[(i, j)] = a[(i, j)];
                off += a[(i, j)];
            }
        }
        c[(i, i)] = -off;
    }
    Ok(RateMatrix { q: c })
}

/// Stationary distribution by the Grassmann-Taksar-Heyman algorithm.
///
/// Slower than [`steady_state`] but subtraction-free, so every entry keeps
/// full relative accuracy even when probabilities span hundreds of orders of
/// magnitude.
pub fn steady_state_gth(q: &RateMatrix) -> Result<Distribution> {
    let n = q.dim();
    if let Some(state) = q.unreachable_state() {
        return Err(Error::Structural(format!(
            "chain is reducible: state {state} does not communicate with state 0"
        )));
    }
    let mut a = off_diagonal(&q.q);
    let mut exit = vec![0.0; n];
    for k in (1..n).rev() {
        exit[k] = eliminate(&mut a, k)?;
    }
    // back substitution in log space keeps tiny entries representable
    let mut ln_pi = vec![0.0; n];
    for k in 1..n {
        let terms: Vec<f64> = (0..k)
            .filter(|&i| a[(i, k)] > 0.0)
            .map(|i| ln_pi[i] + a[(i, k)].ln())
            .collect();
        ln_pi[k] = crate::math::log_sum_exp(&terms) - exit[k].ln();
    }
    let total = crate::math::log_sum_exp(&ln_pi);
    Distribution::new(ln_pi.iter().map(|x| (x - total).exp()).collect())
}

fn off_diagonal(m: &DMatrix<f64>) -> DMatrix<f64> {
    let mut a = m.clone();
    a.fill_diagonal(0.0);
    a
}

/// One GTH step: removes state `k` from the leading `k + 1` states,
/// rerouting its inflow over its outflow. Returns `k`'s exit rate towards the
/// remaining states.
fn eliminate(a: &mut DMatrix<f64>, k: usize) -> Result<f64> {
    let s: f64 = (0..k).map(|j| a[(k, j)]).sum();
    if !(s > 0.0) {
        return Err(Error::Structural(format!(
            "state {k} cannot return to the retained states"
        )));
    }
    for i in 0..k {
        let into = a[(i, k)];
        if into > 0.0 {
            let f = into / s;
            for j in 0..k {
                if j != i {
                    let add = f * a[(k, j)];
                    a[(i, j)] += add;
                }
            }
        }
    }
    Ok(s)
}

/// `max_j |(pi Q)_j|`.
pub fn balance_residual(pi: &Distribution, q: &RateMatrix) -> f64 {
    let n = q.dim();
    (0..n)
        .map(|j| (0..n).map(|i| pi[i] * q.get(i, j)).sum::<f64>().abs())
        .fold(0.0, f64::max)
}
