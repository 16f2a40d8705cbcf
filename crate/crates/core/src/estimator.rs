//! Two-stage maximum-likelihood grid search.
//!
//! Stage one scans every `(ε, η)` grid point with the timing-embedded model,
//! fits the embedded channel and keeps the point with the smallest residual
//! energy `J1`. Stage two fixes `(ε̂, η̂)`, scans the timing grid with the
//! timing-form model and keeps the smallest `J2`. The channel fit at each grid
//! point is either subspace pursuit (MLSP) or minimum-norm least squares
//! (MLLS).
//!
//! Grid points are independent; they are evaluated in parallel and reduced
//! from an ordered cost table, ε outer and η inner, with the first point
//! winning exact ties. Results do not depend on thread count.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::model::{MeasurementSelection, PilotBlock, SampledModel, SystemConfig};
use crate::recovery::{self, LsFactor, PursuitDictionary, DEFAULT_RANK_TOL};
use crate::{CMatrix, CVector, Error, Result};

/// Tolerance used when counting grid points, so `(0.4 - -0.4) / 0.01` is 80.
const GRID_SLACK: f64 = 1e-9;

/// Search ranges for the three impairments. Every axis includes both ends
/// when `max - min` is a whole number of steps.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GridSpec {
    pub eps_min: f64,
    pub eps_max: f64,
    pub eps_step: f64,
    pub eta_min: f64,
    pub eta_max: f64,
    pub eta_step: f64,
    pub theta_min: i64,
    pub theta_max: i64,
    pub theta_step: i64,
}

impl Default for GridSpec {
    fn default() -> Self {
        Self::reference(SystemConfig::reference().theta_max)
    }
}

impl GridSpec {
    /// |ε| ≤ 0.4 at 0.01, |η| ≤ 5e-3 at 1e-4, θ over `0..=theta_max`.
    pub fn reference(theta_max: usize) -> Self {
        GridSpec {
            eps_min: -0.4,
            eps_max: 0.4,
            eps_step: 0.01,
            eta_min: -5e-3,
            eta_max: 5e-3,
            eta_step: 1e-4,
            theta_min: 0,
            theta_max: theta_max as i64,
            theta_step: 1,
        }
    }

    /// Reference resolution restricted to `center ± eps_half` and `center ± eta_half`.
    pub fn around(epsilon: f64, eta: f64, eps_half: f64, eta_half: f64, theta_max: usize) -> Self {
        GridSpec {
            eps_min: epsilon - eps_half,
            eps_max: epsilon + eps_half,
            eta_min: eta - eta_half,
            eta_max: eta + eta_half,
            ..Self::reference(theta_max)
        }
    }

    /// Single-point grid at `(epsilon, eta)` with the full timing range.
    pub fn single(epsilon: f64, eta: f64, theta_min: i64, theta_max: i64) -> Self {
        GridSpec {
            eps_min: epsilon,
            eps_max: epsilon,
            eps_step: 1.0,
            eta_min: eta,
            eta_max: eta,
            eta_step: 1.0,
            theta_min,
            theta_max,
            theta_step: 1,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let real = [
            ("epsilon", self.eps_min, self.eps_max, self.eps_step),
            ("eta", self.eta_min, self.eta_max, self.eta_step),
        ];
        for (name, min, max, step) in real {
            if !(min.is_finite() && max.is_finite() && step.is_finite()) {
                return Err(Error::InvalidConfig(format!("{name} grid must be finite")));
            }
            if min > max {
                return Err(Error::InvalidConfig(format!("{name} grid needs min ≤ max")));
            }
            if step <= 0.0 {
                return Err(Error::InvalidConfig(format!("{name} grid needs step > 0")));
            }
        }
        if self.theta_min > self.theta_max {
            return Err(Error::InvalidConfig("theta grid needs min ≤ max".into()));
        }
        if self.theta_step <= 0 {
            return Err(Error::InvalidConfig("theta grid needs step > 0".into()));
        }
        Ok(())
    }

    fn real_axis(min: f64, max: f64, step: f64) -> Vec<f64> {
        let count = ((max - min) / step + GRID_SLACK).floor() as usize + 1;
        (0..count).map(|i| min + i as f64 * step).collect()
    }

    pub fn eps_points(&self) -> Vec<f64> {
        Self::real_axis(self.eps_min, self.eps_max, self.eps_step)
    }

    pub fn eta_points(&self) -> Vec<f64> {
        Self::real_axis(self.eta_min, self.eta_max, self.eta_step)
    }

    pub fn theta_points(&self) -> Vec<i64> {
        (self.theta_min..=self.theta_max)
            .step_by(self.theta_step as usize)
            .collect()
    }

    /// Number of `(ε, η)` points in stage one.
    pub fn stage_one_points(&self) -> usize {
        self.eps_points().len() * self.eta_points().len()
    }

    /// Index of the grid point nearest `value` on the ε axis.
    pub fn nearest_eps(&self, value: f64) -> f64 {
        nearest(&self.eps_points(), value)
    }

    pub fn nearest_eta(&self, value: f64) -> f64 {
        nearest(&self.eta_points(), value)
    }
}

fn nearest(points: &[f64], value: f64) -> f64 {
    points
        .iter()
        .cloned()
        .min_by(|a, b| (a - value).abs().total_cmp(&(b - value).abs()))
        .unwrap_or(value)
}

/// Per-grid-point channel estimator.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Method {
    /// Subspace pursuit (MLSP).
    Mlsp,
    /// Minimum-norm least squares (MLLS).
    Mlls,
}

impl Method {
    pub fn name(self) -> &'static str {
        match self {
            Method::Mlsp => "mlsp",
            Method::Mlls => "mlls",
        }
    }
}

impl std::fmt::Display for Method {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

impl std::str::FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "mlsp" => Ok(Method::Mlsp),
            "mlls" => Ok(Method::Mlls),
            other => Err(Error::InvalidConfig(format!("unknown estimator `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EstimatorOptions {
    /// Sparsity budget for subspace pursuit; defaults to `K · tx · rx`.
    pub k_total: Option<usize>,
    /// Pursuit iteration cap; defaults to `k_total + 10`.
    pub max_iter: Option<usize>,
    pub rank_tol: f64,
}

impl Default for EstimatorOptions {
    fn default() -> Self {
        EstimatorOptions {
            k_total: None,
            max_iter: None,
            rank_tol: DEFAULT_RANK_TOL,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EstimationResult {
    pub epsilon_hat: f64,
    pub eta_hat: f64,
    pub theta_hat: i64,
    /// Channel estimate at `θ̂`, length `L_m · tx · rx`.
    pub h_hat: CVector,
    pub min_cost_j1: f64,
    pub min_cost_j2: f64,
    pub j1_evals: usize,
    pub j2_evals: usize,
    /// Stage-one costs, ε-major (`j1_costs[i * n_eta + k]`); failed points are +∞.
    pub j1_costs: Vec<f64>,
    /// Stage-two costs in timing-grid order.
    pub j2_costs: Vec<f64>,
    /// Grid points whose channel fit failed.
    pub failed_points: usize,
}

/// `(r - A h)ᴴ (r - A h)`.
pub fn residual_cost(a: &CMatrix, h: &CVector, r: &CVector) -> Result<f64> {
    if a.ncols() != h.len() {
        return Err(Error::DimensionMismatch {
            what: "cost channel length",
            expected: a.ncols(),
            actual: h.len(),
        });
    }
    if a.nrows() != r.len() {
        return Err(Error::DimensionMismatch {
            what: "cost observation length",
            expected: a.nrows(),
            actual: r.len(),
        });
    }
    Ok((r - a * h).norm_squared())
}

struct Fit {
    cost: f64,
    h: Option<CVector>,
}

impl Fit {
    fn failed() -> Self {
        Fit {
            cost: f64::INFINITY,
            h: None,
        }
    }
}

#[derive(Clone, Copy)]
struct FitSettings {
    method: Method,
    k_total: usize,
    max_iter: usize,
    rank_tol: f64,
}

/// Channel estimator prepared for one measurement matrix.
enum Prepared<'a> {
    Pursuit(&'a CMatrix, PursuitDictionary),
    LeastSquares(&'a CMatrix, LsFactor),
    Failed,
}

impl FitSettings {
    /// `reuse` caches the Gram matrix when many observations share `a`.
    fn prepare<'a>(&self, a: &'a CMatrix, reuse: bool) -> Prepared<'a> {
        match self.method {
            Method::Mlsp => {
                let dict = if reuse {
                    PursuitDictionary::with_gram(a)
                } else {
                    PursuitDictionary::new(a)
                };
                match dict {
                    Ok(d) => Prepared::Pursuit(a, d),
                    Err(_) => Prepared::Failed,
                }
            }
            Method::Mlls => {
                let factor = LsFactor::new(a, self.rank_tol);
                // Rank collapse at a grid point is recorded as a failed point.
                if factor.rank_deficient() {
                    Prepared::Failed
                } else {
                    Prepared::LeastSquares(a, factor)
                }
            }
        }
    }

    fn fit(&self, prepared: &Prepared<'_>, r: &CVector) -> Fit {
        let (a, h) = match prepared {
            Prepared::Pursuit(a, d) => (
                *a,
                d.pursue(r, self.k_total, self.max_iter).map(|o| o.h_hat),
            ),
            Prepared::LeastSquares(a, f) => (*a, f.solve(r)),
            Prepared::Failed => return Fit::failed(),
        };
        match h.and_then(|h| residual_cost(a, &h, r).map(|c| (c, h))) {
            Ok((cost, h)) if cost.is_finite() => Fit { cost, h: Some(h) },
            _ => Fit::failed(),
        }
    }
}

/// First index of the minimum; `None` if every entry is +∞ or NaN.
fn argmin(costs: &[f64]) -> Option<usize> {
    let mut best: Option<usize> = None;
    for (i, &c) in costs.iter().enumerate() {
        if !c.is_finite() {
            continue;
        }
        match best {
            Some(b) if c >= costs[b] => {}
            _ => best = Some(i),
        }
    }
    best
}

/// MLSP: grid search with subspace-pursuit channel fits.
pub fn mlsp(
    r_u: &CVector,
    sel: &MeasurementSelection,
    grids: &GridSpec,
    cfg: &SystemConfig,
    pilots: &PilotBlock,
) -> Result<EstimationResult> {
    estimate(
        Method::Mlsp,
        r_u,
        sel,
        grids,
        cfg,
        pilots,
        &EstimatorOptions::default(),
    )
}

/// MLLS: the same search with least-squares channel fits.
pub fn mlls(
    r_u: &CVector,
    sel: &MeasurementSelection,
    grids: &GridSpec,
    cfg: &SystemConfig,
    pilots: &PilotBlock,
) -> Result<EstimationResult> {
    estimate(
        Method::Mlls,
        r_u,
        sel,
        grids,
        cfg,
        pilots,
        &EstimatorOptions::default(),
    )
}

pub fn estimate(
    method: Method,
    r_u: &CVector,
    sel: &MeasurementSelection,
    grids: &GridSpec,
    cfg: &SystemConfig,
    pilots: &PilotBlock,
    opts: &EstimatorOptions,
) -> Result<EstimationResult> {
    cfg.validate()?;
    grids.validate()?;
    if r_u.len() != sel.len() {
        return Err(Error::DimensionMismatch {
            what: "subsampled observation length",
            expected: sel.len(),
            actual: r_u.len(),
        });
    }
    if grids.theta_min < 0 || grids.theta_max > cfg.theta_max as i64 {
        return Err(Error::OutOfRange {
            what: "theta grid",
            value: if grids.theta_min < 0 {
                grids.theta_min
            } else {
                grids.theta_max
            },
            min: 0,
            max: cfg.theta_max as i64,
        });
    }
    // Surface structural errors (pilots, selection) once instead of per point.
    SampledModel::new(cfg, pilots, grids.eta_min, None, sel)?;

    let k_total = opts.k_total.unwrap_or_else(|| cfg.total_sparsity());
    let settings = FitSettings {
        method,
        k_total,
        max_iter: opts
            .max_iter
            .unwrap_or_else(|| recovery::default_max_iter(k_total)),
        rank_tol: opts.rank_tol,
    };

    let eps = grids.eps_points();
    let eta = grids.eta_points();

    // Stage one. The η-dependent rows C are shared by every ε, and
    // J1 = ‖r - D C h‖² is evaluated as ‖Dᴴ r - C h‖².
    let by_eta: Vec<Vec<f64>> = eta
        .par_iter()
        .map(
            |&eta_k| match SampledModel::new(cfg, pilots, eta_k, None, sel) {
                Ok(model) => {
                    let prepared = settings.prepare(model.rows(), true);
                    eps.iter()
                        .map(|&eps_j| settings.fit(&prepared, &model.derotate(r_u, eps_j)).cost)
                        .collect()
                }
                Err(_) => vec![f64::INFINITY; eps.len()],
            },
        )
        .collect();
    let mut j1_costs = vec![f64::INFINITY; eps.len() * eta.len()];
    for (k, column) in by_eta.iter().enumerate() {
        for (j, &c) in column.iter().enumerate() {
            j1_costs[j * eta.len() + k] = c;
        }
    }
    let best = argmin(&j1_costs).ok_or_else(|| {
        Error::InvalidConfig("no stage-one grid point produced a channel fit".into())
    })?;
    let (epsilon_hat, eta_hat) = (eps[best / eta.len()], eta[best % eta.len()]);

    // Stage two.
    let thetas = grids.theta_points();
    let fits: Vec<Fit> = thetas
        .par_iter()
        .map(
            |&theta| match SampledModel::new(cfg, pilots, eta_hat, Some(theta), sel) {
                Ok(model) => {
                    let prepared = settings.prepare(model.rows(), false);
                    settings.fit(&prepared, &model.derotate(r_u, epsilon_hat))
                }
                Err(_) => Fit::failed(),
            },
        )
        .collect();
    let j2_costs: Vec<f64> = fits.iter().map(|f| f.cost).collect();
    let best_theta = argmin(&j2_costs).ok_or_else(|| {
        Error::InvalidConfig("no stage-two grid point produced a channel fit".into())
    })?;
    let failed_points = j1_costs
        .iter()
        .chain(j2_costs.iter())
        .filter(|c| !c.is_finite())
        .count();
    let h_hat = fits
        .into_iter()
        .nth(best_theta)
        .and_then(|f| f.h)
        .expect("finite cost implies a channel estimate");

    Ok(EstimationResult {
        epsilon_hat,
        eta_hat,
        theta_hat: thetas[best_theta],
        h_hat,
        min_cost_j1: j1_costs[best],
        min_cost_j2: j2_costs[best_theta],
        j1_evals: j1_costs.len(),
        j2_evals: j2_costs.len(),
        j1_costs,
        j2_costs,
        failed_points,
    })
}
