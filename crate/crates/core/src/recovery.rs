//! Channel estimators: minimum-norm least squares and subspace pursuit.

use crate::{CMatrix, CVector, Error, Result, C64};

/// Relative singular value cutoff used when none is given.
pub const DEFAULT_RANK_TOL: f64 = 1e-10;

/// Column-normalised matrix with the scaling that produced it.
///
/// `normalized = original · diag(scaling)`, so `scaling[j] = 1 / ‖a_j‖`.
#[derive(Debug, Clone)]
pub struct NormalizedMatrix {
    pub normalized: CMatrix,
    pub scaling: Vec<f64>,
}

impl NormalizedMatrix {
    /// Undoes the normalisation: `original = normalized · diag(1 / scaling)`.
    pub fn original(&self) -> CMatrix {
        let mut a = self.normalized.clone();
        for (j, &c) in self.scaling.iter().enumerate() {
            a.column_mut(j).unscale_mut(c);
        }
        a
    }
}

pub fn normalize_columns(a: &CMatrix) -> Result<NormalizedMatrix> {
    let mut normalized = a.clone();
    let mut scaling = Vec::with_capacity(a.ncols());
    for (j, mut col) in normalized.column_iter_mut().enumerate() {
        let norm = col.norm();
        if norm == 0.0 || !norm.is_finite() {
            return Err(Error::ZeroColumn(j));
        }
        col.unscale_mut(norm);
        scaling.push(1.0 / norm);
    }
    Ok(NormalizedMatrix {
        normalized,
        scaling,
    })
}

/// Minimum-norm least-squares solution and the numerical rank it used.
#[derive(Debug, Clone)]
pub struct LeastSquares {
    pub x: CVector,
    pub rank: usize,
    /// True when `rank < min(rows, cols)`.
    pub rank_deficient: bool,
}

/// Householder QR of a tall matrix. Reflector `k` is `v = [v0_k; qr[k+1.., k]]`
/// with `H_k = I - beta_k v vᴴ`; `R` is `diag` plus the strict upper triangle.
#[derive(Debug, Clone)]
struct HouseholderQr {
    qr: CMatrix,
    diag: Vec<C64>,
    v0: Vec<C64>,
    beta: Vec<f64>,
}

impl HouseholderQr {
    fn new(a: &CMatrix) -> Self {
        let (m, n) = a.shape();
        debug_assert!(m >= n);
        let mut qr = a.clone();
        let mut diag = Vec::with_capacity(n);
        let mut v0 = Vec::with_capacity(n);
        let mut beta = Vec::with_capacity(n);
        let data = qr.as_mut_slice();
        for k in 0..n {
            let (head, tail) = data.split_at_mut((k + 1) * m);
            let col = &mut head[k * m..];
            let x0 = col[k];
            let norm_sq: f64 = col[k..].iter().map(|v| v.norm_sqr()).sum();
            let norm = norm_sq.sqrt();
            let phase = if x0.norm() > 0.0 {
                x0 / x0.norm()
            } else {
                C64::new(1.0, 0.0)
            };
            let alpha = -phase * norm;
            let v_first = x0 - alpha;
            let v_norm_sq = norm_sq - x0.norm_sqr() + v_first.norm_sqr();
            let b = if v_norm_sq > 0.0 {
                2.0 / v_norm_sq
            } else {
                0.0
            };
            col[k] = v_first;
            for j in 0..(n - k - 1) {
                let target = &mut tail[j * m..(j + 1) * m];
                let mut w = C64::new(0.0, 0.0);
                for i in k..m {
                    w += col[i].conj() * target[i];
                }
                w *= b;
                for i in k..m {
                    target[i] -= col[i] * w;
                }
            }
            diag.push(alpha);
            v0.push(v_first);
            beta.push(b);
        }
        HouseholderQr { qr, diag, v0, beta }
    }

    fn cols(&self) -> usize {
        self.diag.len()
    }

    /// `y <- Qᴴ y`.
    fn apply_qh(&self, y: &mut [C64]) {
        let m = self.qr.nrows();
        let data = self.qr.as_slice();
        for k in 0..self.cols() {
            let col = &data[k * m..(k + 1) * m];
            let mut w = self.v0[k].conj() * y[k];
            for i in k + 1..m {
                w += col[i].conj() * y[i];
            }
            w *= self.beta[k];
            y[k] -= self.v0[k] * w;
            for i in k + 1..m {
                y[i] -= col[i] * w;
            }
        }
    }

    fn r(&self, i: usize, j: usize) -> C64 {
        if i == j {
            self.diag[i]
        } else {
            self.qr[(i, j)]
        }
    }

    /// Solves `R x = c[..n]` in place.
    fn back_substitute(&self, c: &mut [C64]) {
        let n = self.cols();
        for k in (0..n).rev() {
            let acc = (k + 1..n).fold(c[k], |acc, j| acc - self.r(k, j) * c[j]);
            c[k] = acc / self.diag[k];
        }
    }

    /// Upper bound on the 2-norm condition number, `‖R‖_F ‖R⁻¹‖_F`.
    fn condition_bound(&self) -> f64 {
        let n = self.cols();
        if self.diag.iter().any(|d| d.norm() == 0.0) {
            return f64::INFINITY;
        }
        let mut r_norm = 0.0;
        for j in 0..n {
            for i in 0..=j {
                r_norm += self.r(i, j).norm_sqr();
            }
        }
        let mut inv_norm = 0.0;
        let mut e = vec![C64::new(0.0, 0.0); n];
        for j in 0..n {
            // Column j of R⁻¹ is supported on rows 0..=j.
            e.iter_mut().for_each(|v| *v = C64::new(0.0, 0.0));
            e[j] = C64::new(1.0, 0.0);
            for k in (0..=j).rev() {
                let acc = (k + 1..=j).fold(e[k], |acc, l| acc - self.r(k, l) * e[l]);
                e[k] = acc / self.diag[k];
            }
            inv_norm += e[..=j].iter().map(|v| v.norm_sqr()).sum::<f64>();
        }
        (r_norm * inv_norm).sqrt()
    }
}

#[derive(Debug, Clone)]
enum Factor {
    Qr(HouseholderQr),
    Svd {
        u: CMatrix,
        /// Reciprocal singular values, zero past the numerical rank.
        s_inv: Vec<f64>,
        v_t: CMatrix,
    },
}

/// Reusable factorisation for repeated least-squares solves with one matrix.
///
/// Tall matrices whose QR factor certifies `cond < 1 / rank_tol` are solved
/// through Householder QR; everything else goes through the SVD with singular
/// values below `rank_tol · σ_max` dropped.
#[derive(Debug, Clone)]
pub struct LsFactor {
    factor: Factor,
    rows: usize,
    cols: usize,
    rank: usize,
}

impl LsFactor {
    pub fn new(a: &CMatrix, rank_tol: f64) -> Self {
        let (m, n) = a.shape();
        if m >= n && n > 0 {
            let qr = HouseholderQr::new(a);
            if qr.condition_bound() * rank_tol < 1.0 {
                return LsFactor {
                    factor: Factor::Qr(qr),
                    rows: m,
                    cols: n,
                    rank: n,
                };
            }
        }
        Self::svd(a, rank_tol)
    }

    /// Forces the SVD route.
    pub fn svd(a: &CMatrix, rank_tol: f64) -> Self {
        let (m, n) = a.shape();
        if m == 0 || n == 0 {
            return LsFactor {
                factor: Factor::Svd {
                    u: CMatrix::zeros(m, 0),
                    s_inv: Vec::new(),
                    v_t: CMatrix::zeros(0, n),
                },
                rows: m,
                cols: n,
                rank: 0,
            };
        }
        let svd = a.clone().svd(true, true);
        let s = &svd.singular_values;
        let cutoff = rank_tol * s.iter().cloned().fold(0.0, f64::max);
        let s_inv: Vec<f64> = s
            .iter()
            .map(|&sigma| {
                if sigma > cutoff && sigma > 0.0 {
                    1.0 / sigma
                } else {
                    0.0
                }
            })
            .collect();
        let rank = s_inv.iter().filter(|&&v| v > 0.0).count();
        LsFactor {
            factor: Factor::Svd {
                u: svd.u.expect("left singular vectors requested"),
                s_inv,
                v_t: svd.v_t.expect("right singular vectors requested"),
            },
            rows: m,
            cols: n,
            rank,
        }
    }

    pub fn rank(&self) -> usize {
        self.rank
    }

    pub fn rank_deficient(&self) -> bool {
        self.rank < self.rows.min(self.cols)
    }

    pub fn solve(&self, r: &CVector) -> Result<CVector> {
        if r.len() != self.rows {
            return Err(Error::DimensionMismatch {
                what: "least-squares right-hand side",
                expected: self.rows,
                actual: r.len(),
            });
        }
        Ok(match &self.factor {
            Factor::Qr(qr) => {
                let mut y: Vec<C64> = r.iter().cloned().collect();
                qr.apply_qh(&mut y);
                qr.back_substitute(&mut y[..self.cols]);
                CVector::from_column_slice(&y[..self.cols])
            }
            Factor::Svd { u, s_inv, v_t } => {
                let mut coeffs = u.ad_mul(r);
                for (c, &inv) in coeffs.iter_mut().zip(s_inv) {
                    *c *= inv;
                }
                v_t.ad_mul(&coeffs)
            }
        })
    }

    fn into_solution(self, r: &CVector) -> Result<LeastSquares> {
        let x = self.solve(r)?;
        Ok(LeastSquares {
            x,
            rank: self.rank,
            rank_deficient: self.rank_deficient(),
        })
    }
}

fn check_rhs(a: &CMatrix, r: &CVector) -> Result<()> {
    if a.nrows() != r.len() {
        return Err(Error::DimensionMismatch {
            what: "least-squares right-hand side",
            expected: a.nrows(),
            actual: r.len(),
        });
    }
    Ok(())
}

/// Minimum-norm minimiser of `‖r - A x‖₂`; see [`LsFactor`] for the route taken.
pub fn least_squares(a: &CMatrix, r: &CVector, rank_tol: f64) -> Result<LeastSquares> {
    check_rhs(a, r)?;
    LsFactor::new(a, rank_tol).into_solution(r)
}

/// [`least_squares`] through the SVD unconditionally.
pub fn least_squares_svd(a: &CMatrix, r: &CVector, rank_tol: f64) -> Result<LeastSquares> {
    check_rhs(a, r)?;
    LsFactor::svd(a, rank_tol).into_solution(r)
}

/// Indices of the `k` largest magnitudes, ascending; ties prefer the lower index.
fn top_k(values: impl Iterator<Item = (usize, f64)>, k: usize) -> Vec<usize> {
    let mut ranked: Vec<(usize, f64)> = values.collect();
    ranked.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0)));
    let mut picked: Vec<usize> = ranked.into_iter().take(k).map(|(i, _)| i).collect();
    picked.sort_unstable();
    picked
}

/// Iterate of the pursuit loop.
#[derive(Debug, Clone)]
pub struct PursuitState {
    pub iteration: usize,
    pub support: Vec<usize>,
    /// Least-squares coefficients on `support` (normalised columns).
    pub coefficients: CVector,
    pub residual: CVector,
    pub residual_norm: f64,
}

impl PursuitState {
    fn initial(r: &CVector) -> Self {
        PursuitState {
            iteration: 0,
            support: Vec::new(),
            coefficients: CVector::zeros(0),
            residual: r.clone(),
            residual_norm: r.norm(),
        }
    }
}

#[derive(Debug, Clone)]
pub struct PursuitOutcome {
    /// Selected columns, ascending.
    pub support: Vec<usize>,
    /// Estimate in the scale of the caller's (unnormalised) matrix.
    pub h_hat: CVector,
    /// Iterations run, including the final rejected one.
    pub iterations: usize,
    /// `‖e_k‖₂` for k = 0, 1, …, last iterate (rejected or not).
    pub residual_history: Vec<f64>,
    /// Residual norm of the returned estimate.
    pub residual_norm: f64,
}

/// Iteration cap used by the estimators: `K_total + 10`.
pub fn default_max_iter(k_total: usize) -> usize {
    k_total + 10
}

/// Pivot ratio below which the Gram route hands over to orthogonal solves.
const GRAM_PIVOT_RATIO: f64 = 1e-4;

/// Column-normalised measurement matrix prepared for repeated pursuits.
///
/// With a cached Gram matrix the subset solves run as Cholesky on Gram
/// sub-blocks; subsets whose Cholesky pivots spread by more than
/// `1 / GRAM_PIVOT_RATIO` (condition above 1e8) fall back to [`least_squares`].
#[derive(Debug, Clone)]
pub struct PursuitDictionary {
    normalized: CMatrix,
    scaling: Vec<f64>,
    gram: Option<CMatrix>,
}

impl PursuitDictionary {
    pub fn new(a: &CMatrix) -> Result<Self> {
        let NormalizedMatrix {
            normalized,
            scaling,
        } = normalize_columns(a)?;
        Ok(PursuitDictionary {
            normalized,
            scaling,
            gram: None,
        })
    }

    /// Also caches `Aᴴ A` of the normalised matrix.
    pub fn with_gram(a: &CMatrix) -> Result<Self> {
        let mut d = Self::new(a)?;
        d.gram = Some(d.normalized.ad_mul(&d.normalized));
        Ok(d)
    }

    pub fn rows(&self) -> usize {
        self.normalized.nrows()
    }

    pub fn columns(&self) -> usize {
        self.normalized.ncols()
    }

    fn solve_subset(
        &self,
        support: &[usize],
        r: &CVector,
        correlation: &CVector,
    ) -> Result<CVector> {
        if let Some(gram) = &self.gram {
            let n = support.len();
            let sub = CMatrix::from_fn(n, n, |i, j| gram[(support[i], support[j])]);
            if let Some(chol) = sub.cholesky() {
                let l = chol.l_dirty();
                let (lo, hi) = (0..n).fold((f64::INFINITY, 0.0f64), |(lo, hi), i| {
                    let d = l[(i, i)].re;
                    (lo.min(d), hi.max(d))
                });
                if lo > GRAM_PIVOT_RATIO * hi {
                    let b = CVector::from_iterator(n, support.iter().map(|&i| correlation[i]));
                    return Ok(chol.solve(&b));
                }
            }
        }
        let sub = self.normalized.select_columns(support);
        Ok(least_squares(&sub, r, DEFAULT_RANK_TOL)?.x)
    }

    fn residual(&self, r: &CVector, support: &[usize], coefficients: &CVector) -> CVector {
        let mut e = r.clone();
        for (&j, &c) in support.iter().zip(coefficients.iter()) {
            e.axpy(-c, &self.normalized.column(j), C64::new(1.0, 0.0));
        }
        e
    }

    /// Subspace pursuit for a `k_total`-sparse solution of `r ≈ A h`.
    ///
    /// Correlation, pruning and the residual test run on the normalised
    /// matrix; the returned estimate is rescaled back to the caller's columns.
    /// The loop stops as soon as the residual fails to decrease (reverting to
    /// the previous support) or after `max_iter` iterations. Recovery
    /// guarantees need roughly `2 k_total ≤ rows`; smaller systems still run.
    pub fn pursue(&self, r: &CVector, k_total: usize, max_iter: usize) -> Result<PursuitOutcome> {
        if self.rows() != r.len() {
            return Err(Error::DimensionMismatch {
                what: "pursuit observation length",
                expected: self.rows(),
                actual: r.len(),
            });
        }
        if k_total == 0 || k_total > self.columns() {
            return Err(Error::SparsityTooLarge {
                k: k_total,
                columns: self.columns(),
            });
        }
        let correlation_r = self.normalized.ad_mul(r);

        let mut prev = PursuitState::initial(r);
        let mut history = vec![prev.residual_norm];
        let mut iterations = 0;
        let accepted = loop {
            iterations += 1;
            let corr = if prev.support.is_empty() {
                correlation_r.clone()
            } else {
                self.normalized.ad_mul(&prev.residual)
            };
            let mut merged = prev.support.clone();
            merged.extend(top_k(corr.iter().map(|c| c.norm()).enumerate(), k_total));
            merged.sort_unstable();
            merged.dedup();

            let v = self.solve_subset(&merged, r, &correlation_r)?;
            let pruned: Vec<usize> = top_k(v.iter().map(|c| c.norm()).enumerate(), k_total)
                .into_iter()
                .map(|i| merged[i])
                .collect();

            let coefficients = self.solve_subset(&pruned, r, &correlation_r)?;
            let residual = self.residual(r, &pruned, &coefficients);
            let state = PursuitState {
                iteration: iterations,
                support: pruned,
                coefficients,
                residual_norm: residual.norm(),
                residual,
            };
            history.push(state.residual_norm);

            if state.residual_norm >= prev.residual_norm {
                break prev;
            }
            if iterations >= max_iter {
                break state;
            }
            prev = state;
        };

        let mut h_hat = CVector::zeros(self.columns());
        for (&j, v) in accepted.support.iter().zip(accepted.coefficients.iter()) {
            h_hat[j] = v * self.scaling[j];
        }
        Ok(PursuitOutcome {
            support: accepted.support,
            h_hat,
            iterations,
            residual_history: history,
            residual_norm: accepted.residual_norm,
        })
    }
}

/// One-shot subspace pursuit; see [`PursuitDictionary::pursue`].
pub fn subspace_pursuit(
    a: &CMatrix,
    r: &CVector,
    k_total: usize,
    max_iter: usize,
) -> Result<PursuitOutcome> {
    if a.nrows() != r.len() {
        return Err(Error::DimensionMismatch {
            what: "pursuit observation length",
            expected: a.nrows(),
            actual: r.len(),
        });
    }
    if k_total == 0 || k_total > a.ncols() {
        return Err(Error::SparsityTooLarge {
            k: k_total,
            columns: a.ncols(),
        });
    }
    PursuitDictionary::new(a)?.pursue(r, k_total, max_iter)
}
