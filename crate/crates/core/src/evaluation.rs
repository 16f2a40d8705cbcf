//! Monte Carlo evaluation: error metrics, probability of timing failure, a
//! numerical Cramér-Rao bound and complexity timing.
//!
//! A sweep is a grid of `(SNR, trial)` jobs. Every trial draws its truth,
//! channel, sample selection and unit noise from seeds derived from the master
//! seed and the trial index alone, so the same draws are reused at every SNR
//! (common random numbers) and no result depends on scheduling. Jobs run in
//! parallel; aggregation walks the records in trial order.

use std::time::{Duration, Instant};

use nalgebra::{DMatrix, SymmetricEigen};
use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::estimator::{estimate, EstimationResult, EstimatorOptions, GridSpec, Method};
use crate::model::{
    embed_ste, generate_channel, mean_signal_power, received_signal, select_samples,
    ImpairmentParams, MeasurementSelection, NoiseSpec, PilotBlock, SampledModel, SparseChannel,
    SystemConfig,
};
use crate::recovery::{default_max_iter, least_squares, subspace_pursuit, DEFAULT_RANK_TOL};
use crate::{CMatrix, CVector, Error, Result, C64};

/// Impairments used by the reference experiments: ε = 0.102, η = 101 ppm, θ = 2.
pub const REFERENCE_TRUTH: ImpairmentParams = ImpairmentParams::new(0.102, 1.01e-4, 2);

/// Squared distance between an estimate and the truth.
pub trait SquaredError {
    fn squared_error(&self, truth: &Self) -> Result<f64>;
}

impl SquaredError for f64 {
    fn squared_error(&self, truth: &Self) -> Result<f64> {
        Ok((self - truth).powi(2))
    }
}

impl SquaredError for i64 {
    fn squared_error(&self, truth: &Self) -> Result<f64> {
        Ok(((self - truth) as f64).powi(2))
    }
}

impl SquaredError for CVector {
    fn squared_error(&self, truth: &Self) -> Result<f64> {
        if self.len() != truth.len() {
            return Err(Error::DimensionMismatch {
                what: "estimate length",
                expected: truth.len(),
                actual: self.len(),
            });
        }
        Ok((self - truth).norm_squared())
    }
}

/// `(1/n) Σ ‖est_i − truth‖²` against a single truth.
pub fn mse<T: SquaredError>(estimates: &[T], truth: &T) -> Result<f64> {
    if estimates.is_empty() {
        return Err(Error::Empty("estimates"));
    }
    let mut acc = MseAccumulator::default();
    for e in estimates {
        acc.push(e.squared_error(truth)?);
    }
    Ok(acc.mean().unwrap_or(0.0))
}

/// Like [`mse`] with a separate truth per trial.
pub fn mse_paired<T: SquaredError>(estimates: &[T], truths: &[T]) -> Result<f64> {
    if estimates.is_empty() {
        return Err(Error::Empty("estimates"));
    }
    if estimates.len() != truths.len() {
        return Err(Error::DimensionMismatch {
            what: "truth count",
            expected: estimates.len(),
            actual: truths.len(),
        });
    }
    let mut acc = MseAccumulator::default();
    for (e, t) in estimates.iter().zip(truths) {
        acc.push(e.squared_error(t)?);
    }
    Ok(acc.mean().unwrap_or(0.0))
}

/// Running sum of squared errors. Merging two accumulators gives the same
/// result as pushing both trial sets into one.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct MseAccumulator {
    sum: f64,
    sum_sq: f64,
    count: usize,
}

impl MseAccumulator {
    pub fn push(&mut self, squared_error: f64) {
        self.sum += squared_error;
        self.sum_sq += squared_error * squared_error;
        self.count += 1;
    }

    pub fn merge(&mut self, other: &MseAccumulator) {
        self.sum += other.sum;
        self.sum_sq += other.sum_sq;
        self.count += other.count;
    }

    pub fn count(&self) -> usize {
        self.count
    }

    pub fn mean(&self) -> Option<f64> {
        (self.count > 0).then(|| self.sum / self.count as f64)
    }

    /// Standard error of the mean; needs at least two samples.
    pub fn standard_error(&self) -> Option<f64> {
        if self.count < 2 {
            return None;
        }
        let n = self.count as f64;
        let mean = self.sum / n;
        let var = ((self.sum_sq - n * mean * mean) / (n - 1.0)).max(0.0);
        Some((var / n).sqrt())
    }
}

/// Fraction of trials with `|θ̂ − θ| ≥ p`.
pub fn timing_failure_prob(theta_hats: &[i64], theta_true: i64, p: u64) -> Result<f64> {
    if theta_hats.is_empty() {
        return Err(Error::Empty("timing estimates"));
    }
    if p == 0 {
        return Err(Error::InvalidConfig(
            "timing failure threshold p must be ≥ 1".into(),
        ));
    }
    let failures = theta_hats
        .iter()
        .filter(|&&t| (t - theta_true).unsigned_abs() >= p)
        .count();
    Ok(failures as f64 / theta_hats.len() as f64)
}

/// Channel error measured on the timing-embedded response.
///
/// Channel and timing are only identifiable jointly: when every pair has an
/// idle first or last tap, a shifted channel with a shifted `θ` produces the
/// same received signal. Comparing `embed(ĥ, θ̂)` with `embed(h, θ)` scores
/// what the observation determines; it equals `‖ĥ − h‖²` whenever `θ̂ = θ`.
pub fn aligned_channel_error(
    cfg: &SystemConfig,
    h_hat: &CVector,
    theta_hat: i64,
    h: &SparseChannel,
    theta: i64,
) -> Result<f64> {
    let estimate = SparseChannel {
        taps: h_hat.clone(),
        supports: Vec::new(),
    };
    let a = embed_ste(&estimate, theta_hat, cfg)?;
    let b = embed_ste(h, theta, cfg)?;
    Ok((a.taps - b.taps).norm_squared())
}

/// Central-difference steps for the two continuous impairments.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FdStep {
    pub epsilon: f64,
    pub eta: f64,
}

impl Default for FdStep {
    fn default() -> Self {
        // η is about a hundred times smaller than ε in practice.
        FdStep {
            epsilon: 1e-6,
            eta: 1e-8,
        }
    }
}

/// Diagonal entries of the inverse Fisher information.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Crlb {
    pub epsilon: f64,
    pub eta: f64,
    /// Trace over the real and imaginary parts of the supported taps.
    pub trace_h: f64,
}

/// Smallest eigenvalue ratio of the scaled FIM treated as invertible.
const FIM_CONDITION_LIMIT: f64 = 1e-12;

/// Inverse of `FIM = (2/σ²) Re(Jᴴ J)` for a real parameter vector whose
/// mean derivatives are the columns of `jacobian`.
///
/// The FIM is Jacobi-scaled before the eigendecomposition so that parameters
/// of very different magnitude (ε vs η) do not masquerade as a null space.
/// A singular FIM is reported with the parameter dominating the null vector.
pub fn inverse_fisher(jacobian: &CMatrix, sigma_sq: f64, names: &[String]) -> Result<DMatrix<f64>> {
    if !(sigma_sq > 0.0 && sigma_sq.is_finite()) {
        return Err(Error::InvalidConfig(format!(
            "noise variance must be positive and finite, got {sigma_sq}"
        )));
    }
    let p = jacobian.ncols();
    if names.len() != p {
        return Err(Error::DimensionMismatch {
            what: "parameter names",
            expected: p,
            actual: names.len(),
        });
    }
    let gram = jacobian.ad_mul(jacobian);
    let fim = DMatrix::from_fn(p, p, |i, j| 2.0 / sigma_sq * gram[(i, j)].re);
    let mut scale = vec![0.0; p];
    for i in 0..p {
        if fim[(i, i)].is_nan() || fim[(i, i)] <= 0.0 {
            return Err(Error::SingularFisher {
                direction: names[i].clone(),
            });
        }
        scale[i] = 1.0 / fim[(i, i)].sqrt();
    }
    let scaled = DMatrix::from_fn(p, p, |i, j| fim[(i, j)] * scale[i] * scale[j]);
    let eig = SymmetricEigen::new(scaled);
    let lo = eig.eigenvalues.imin();
    let hi = eig.eigenvalues.max();
    if eig.eigenvalues[lo].is_nan() || eig.eigenvalues[lo] <= FIM_CONDITION_LIMIT * hi {
        let null = eig.eigenvectors.column(lo);
        let dominant = null.iamax();
        return Err(Error::SingularFisher {
            direction: names[dominant].clone(),
        });
    }
    let inv_vals = eig.eigenvalues.map(|v| 1.0 / v);
    let inv_scaled =
        &eig.eigenvectors * DMatrix::from_diagonal(&inv_vals) * eig.eigenvectors.transpose();
    Ok(DMatrix::from_fn(p, p, |i, j| {
        inv_scaled[(i, j)] * scale[i] * scale[j]
    }))
}

/// Gaussian-model CRLB for `(ε, η)` and the supported channel taps at the
/// true parameters, from the samples kept by `sel`.
///
/// `θ` is held at its true value (it is integer-valued). The mean is linear
/// in `h`, so those derivatives are exact; `ε` and `η` use central
/// differences.
pub fn numerical_crlb(
    cfg: &SystemConfig,
    pilots: &PilotBlock,
    params: &ImpairmentParams,
    h: &SparseChannel,
    sel: &MeasurementSelection,
    sigma_sq: f64,
    step: FdStep,
) -> Result<Crlb> {
    cfg.validate()?;
    if !(step.epsilon > 0.0 && step.eta > 0.0) {
        return Err(Error::InvalidConfig(
            "finite-difference steps must be positive".into(),
        ));
    }
    if h.taps.len() != cfg.channel_len() {
        return Err(Error::DimensionMismatch {
            what: "channel length",
            expected: cfg.channel_len(),
            actual: h.taps.len(),
        });
    }
    let theta = Some(params.theta);
    let at = SampledModel::new(cfg, pilots, params.eta, theta, sel)?;
    let d_eps = (at.with_cfo(params.epsilon + step.epsilon) * &h.taps
        - at.with_cfo(params.epsilon - step.epsilon) * &h.taps)
        / C64::from(2.0 * step.epsilon);
    let plus = SampledModel::new(cfg, pilots, params.eta + step.eta, theta, sel)?;
    let minus = SampledModel::new(cfg, pilots, params.eta - step.eta, theta, sel)?;
    let d_eta = (plus.with_cfo(params.epsilon) * &h.taps
        - minus.with_cfo(params.epsilon) * &h.taps)
        / C64::from(2.0 * step.eta);

    let a = at.with_cfo(params.epsilon);
    let support = h.support_indices(cfg);
    let s = support.len();
    let mut jac = CMatrix::zeros(a.nrows(), 2 + 2 * s);
    jac.set_column(0, &d_eps);
    jac.set_column(1, &d_eta);
    let mut names = vec!["epsilon".to_string(), "eta".to_string()];
    for (k, &idx) in support.iter().enumerate() {
        jac.set_column(2 + k, &a.column(idx));
        jac.set_column(2 + s + k, &(a.column(idx) * C64::i()));
    }
    names.extend(support.iter().map(|i| format!("Re h[{i}]")));
    names.extend(support.iter().map(|i| format!("Im h[{i}]")));

    let inv = inverse_fisher(&jac, sigma_sq, &names)?;
    Ok(Crlb {
        epsilon: inv[(0, 0)],
        eta: inv[(1, 1)],
        trace_h: (2..2 + 2 * s).map(|i| inv[(i, i)]).sum(),
    })
}

/// How the true impairments are chosen for each trial.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum TruthMode {
    /// Reference values snapped to the nearest grid point.
    OnGrid,
    /// ε = 0.102, η = 1.01e-4, θ = 2 exactly.
    PaperValues,
    /// Uniform over the grid ranges, drawn per trial.
    Random,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum PilotMode {
    /// One QPSK pilot block shared by every trial.
    Fixed,
    PerTrial,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SelectionMode {
    PerTrial,
    /// One sample selection shared by every trial.
    Fixed,
}

/// Everything a sweep needs. Timing values here are in the model's
/// nonnegative frame; `theta_shift` maps user-facing signed values into it.
#[derive(Debug, Clone, PartialEq)]
pub struct SweepPlan {
    pub system: SystemConfig,
    pub grids: GridSpec,
    pub snr_db: Vec<f64>,
    pub trials: usize,
    /// Samples kept per receive antenna (`M`).
    pub measurements: usize,
    pub estimators: Vec<Method>,
    pub truth: TruthMode,
    pub pilots: PilotMode,
    pub selection: SelectionMode,
    pub master_seed: u64,
    /// Threshold `p` of the timing failure probability.
    pub timing_p: u64,
    /// Added to the reference timing error to place it in the model frame.
    pub theta_shift: i64,
    pub noiseless: bool,
    /// Worker threads; `None` uses the ambient rayon pool.
    pub workers: Option<usize>,
    pub options: EstimatorOptions,
}

impl SweepPlan {
    /// Reference setup: 2x2, N = 128, L_m = 26, K = 5, M = 45, full grid.
    pub fn reference() -> Self {
        let system = SystemConfig::reference();
        SweepPlan {
            system,
            grids: GridSpec::reference(system.theta_max),
            snr_db: vec![0.0, 10.0, 20.0, 30.0],
            trials: 100,
            measurements: 45,
            estimators: vec![Method::Mlsp, Method::Mlls],
            truth: TruthMode::PaperValues,
            pilots: PilotMode::Fixed,
            selection: SelectionMode::PerTrial,
            master_seed: 2024,
            timing_p: 2,
            theta_shift: 0,
            noiseless: false,
            workers: None,
            options: EstimatorOptions::default(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.system.validate()?;
        self.grids.validate()?;
        if self.grids.theta_min < 0 || self.grids.theta_max > self.system.theta_max as i64 {
            return Err(Error::InvalidConfig(format!(
                "timing grid {}..={} must lie in 0..={} (θ_max)",
                self.grids.theta_min, self.grids.theta_max, self.system.theta_max
            )));
        }
        if self.trials == 0 {
            return Err(Error::InvalidConfig("trials must be ≥ 1".into()));
        }
        if self.measurements == 0 || self.measurements > self.system.subcarriers {
            return Err(Error::InvalidConfig(format!(
                "samples per antenna M must satisfy 1 ≤ M ≤ N = {} (got {})",
                self.system.subcarriers, self.measurements
            )));
        }
        if self.estimators.is_empty() {
            return Err(Error::InvalidConfig(
                "at least one estimator is required".into(),
            ));
        }
        for (i, m) in self.estimators.iter().enumerate() {
            if self.estimators[..i].contains(m) {
                return Err(Error::InvalidConfig(format!(
                    "estimator `{m}` listed twice"
                )));
            }
        }
        if self.snr_db.is_empty() {
            return Err(Error::InvalidConfig("SNR list must not be empty".into()));
        }
        if let Some(s) = self.snr_db.iter().find(|s| !s.is_finite()) {
            return Err(Error::InvalidConfig(format!("SNR {s} dB is not finite")));
        }
        if self.timing_p == 0 {
            return Err(Error::InvalidConfig(
                "timing failure threshold p must be ≥ 1".into(),
            ));
        }
        if self.workers == Some(0) {
            return Err(Error::InvalidConfig("workers must be ≥ 1".into()));
        }
        if self.truth != TruthMode::Random {
            let t = self.fixed_truth();
            let g = &self.grids;
            let inside = (g.eps_min..=g.eps_max).contains(&t.epsilon)
                && (g.eta_min..=g.eta_max).contains(&t.eta)
                && (g.theta_min..=g.theta_max).contains(&t.theta);
            if !inside {
                return Err(Error::InvalidConfig(format!(
                    "true impairments (ε = {}, η = {}, θ = {}) lie outside the search grid",
                    t.epsilon, t.eta, t.theta
                )));
            }
        }
        Ok(())
    }

    /// Truth for the non-random modes.
    fn fixed_truth(&self) -> ImpairmentParams {
        let theta = REFERENCE_TRUTH.theta + self.theta_shift;
        match self.truth {
            TruthMode::OnGrid => ImpairmentParams::new(
                self.grids.nearest_eps(REFERENCE_TRUTH.epsilon),
                self.grids.nearest_eta(REFERENCE_TRUTH.eta),
                theta,
            ),
            _ => ImpairmentParams::new(REFERENCE_TRUTH.epsilon, REFERENCE_TRUTH.eta, theta),
        }
    }

    /// Seed of trial `index`, a function of the master seed and index only.
    pub fn trial_seed(&self, index: usize) -> u64 {
        let mut rng = ChaCha8Rng::seed_from_u64(self.master_seed);
        rng.set_stream(index as u64);
        rng.next_u64()
    }

    fn shared_seed(&self) -> u64 {
        let mut rng = ChaCha8Rng::seed_from_u64(self.master_seed);
        rng.set_stream(u64::MAX);
        rng.next_u64()
    }

    /// Draws the SNR-independent part of a trial from its seed.
    pub fn setup(&self, seed: u64) -> Result<TrialSetup> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let channel_seed = rng.next_u64();
        let noise_seed = rng.next_u64();
        let selection_seed = rng.next_u64();
        let pilot_seed = rng.next_u64();
        let shared = self.shared_seed();

        let cfg = &self.system;
        let truth = match self.truth {
            TruthMode::Random => {
                let g = &self.grids;
                ImpairmentParams::new(
                    uniform(&mut rng, g.eps_min, g.eps_max),
                    uniform(&mut rng, g.eta_min, g.eta_max),
                    rng.random_range(g.theta_min..=g.theta_max),
                )
            }
            _ => self.fixed_truth(),
        };
        let pilots = match self.pilots {
            PilotMode::Fixed => PilotBlock::qpsk(cfg, shared),
            PilotMode::PerTrial => PilotBlock::qpsk(cfg, pilot_seed),
        };
        let selection = match self.selection {
            SelectionMode::Fixed => select_samples(cfg, self.measurements, shared ^ 0x5e1ec7),
            SelectionMode::PerTrial => select_samples(cfg, self.measurements, selection_seed),
        }?;
        let channel = generate_channel(cfg, channel_seed)?;
        let full = SampledModel::new(
            cfg,
            &pilots,
            truth.eta,
            Some(truth.theta),
            &MeasurementSelection::full(cfg),
        )?
        .with_cfo(truth.epsilon);
        let signal_power = mean_signal_power(cfg, &full);
        Ok(TrialSetup {
            seed,
            truth,
            channel,
            pilots,
            selection,
            noise_seed,
            signal_power,
        })
    }

    /// Runs every configured estimator on one trial at one SNR.
    pub fn run_trial(&self, trial: usize, setup: &TrialSetup, snr_db: f64) -> Result<TrialRecord> {
        let cfg = &self.system;
        let noise = if self.noiseless {
            NoiseSpec::noiseless()
        } else {
            NoiseSpec::from_snr(snr_db, setup.signal_power)
        };
        let a1u = SampledModel::new(
            cfg,
            &setup.pilots,
            setup.truth.eta,
            Some(setup.truth.theta),
            &setup.selection,
        )?
        .with_cfo(setup.truth.epsilon);
        let r_u = received_signal(&a1u, &setup.channel.taps, &noise, setup.noise_seed)?;

        let runs = self
            .estimators
            .iter()
            .map(|&method| {
                let start = Instant::now();
                let result = estimate(
                    method,
                    &r_u,
                    &setup.selection,
                    &self.grids,
                    cfg,
                    &setup.pilots,
                    &self.options,
                )
                .map(compact)
                .map_err(|e| e.to_string());
                EstimatorRun {
                    method,
                    result,
                    wall_time: start.elapsed(),
                }
            })
            .collect();
        let crlb = if noise.sigma_sq > 0.0 {
            numerical_crlb(
                cfg,
                &setup.pilots,
                &setup.truth,
                &setup.channel,
                &setup.selection,
                noise.sigma_sq,
                FdStep::default(),
            )
            .ok()
        } else {
            None
        };
        Ok(TrialRecord {
            trial,
            seed: setup.seed,
            snr_db,
            sigma_sq: noise.sigma_sq,
            truth: setup.truth,
            channel: setup.channel.clone(),
            runs,
            crlb,
        })
    }
}

fn uniform(rng: &mut impl Rng, lo: f64, hi: f64) -> f64 {
    if hi > lo {
        rng.random_range(lo..=hi)
    } else {
        lo
    }
}

/// Drops the cost tables, which dominate memory in long sweeps.
fn compact(mut r: EstimationResult) -> EstimationResult {
    r.j1_costs = Vec::new();
    r.j2_costs = Vec::new();
    r
}

/// SNR-independent draws of one trial.
#[derive(Debug, Clone)]
pub struct TrialSetup {
    pub seed: u64,
    pub truth: ImpairmentParams,
    pub channel: SparseChannel,
    pub pilots: PilotBlock,
    pub selection: MeasurementSelection,
    pub noise_seed: u64,
    /// Mean received sample energy used to set the noise level.
    pub signal_power: f64,
}

/// One estimator applied to one trial.
#[derive(Debug, Clone)]
pub struct EstimatorRun {
    pub method: Method,
    /// Estimates without the per-point cost tables, or the error message.
    pub result: std::result::Result<EstimationResult, String>,
    pub wall_time: Duration,
}

#[derive(Debug, Clone)]
pub struct TrialRecord {
    pub trial: usize,
    pub seed: u64,
    pub snr_db: f64,
    pub sigma_sq: f64,
    pub truth: ImpairmentParams,
    pub channel: SparseChannel,
    pub runs: Vec<EstimatorRun>,
    /// `None` when noiseless or when the Fisher information is singular.
    pub crlb: Option<Crlb>,
}

/// Per-estimator metrics at one SNR. MSEs are `None` when no trial completed.
#[derive(Debug, Clone, PartialEq)]
pub struct MethodSummary {
    pub method: Method,
    pub mse_epsilon: Option<f64>,
    pub mse_eta: Option<f64>,
    pub mse_theta: Option<f64>,
    /// Squared error of the timing-embedded channel, see [`aligned_channel_error`].
    pub mse_channel: Option<f64>,
    pub se_epsilon: Option<f64>,
    pub se_eta: Option<f64>,
    pub se_channel: Option<f64>,
    pub ptf: Option<f64>,
    pub completed: usize,
    pub failed: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SnrSummary {
    pub snr_db: f64,
    pub trials: usize,
    pub methods: Vec<MethodSummary>,
    /// Bounds averaged over the trials where the Fisher information was invertible.
    pub crlb: Option<Crlb>,
    pub crlb_trials: usize,
}

impl SnrSummary {
    pub fn method(&self, m: Method) -> Option<&MethodSummary> {
        self.methods.iter().find(|s| s.method == m)
    }
}

/// Deterministic sweep result: no wall-clock data.
#[derive(Debug, Clone, PartialEq)]
pub struct SweepSummary {
    pub timing_p: u64,
    pub estimators: Vec<Method>,
    pub rows: Vec<SnrSummary>,
}

/// Runs every `(SNR, trial)` job. Records come back SNR-major, trial-minor.
pub fn run_trials(plan: &SweepPlan) -> Result<Vec<TrialRecord>> {
    plan.validate()?;
    let work = || -> Result<Vec<TrialRecord>> {
        let setups: Vec<TrialSetup> = (0..plan.trials)
            .into_par_iter()
            .map(|t| plan.setup(plan.trial_seed(t)))
            .collect::<Result<_>>()?;
        let jobs: Vec<(f64, usize)> = plan
            .snr_db
            .iter()
            .flat_map(|&s| (0..plan.trials).map(move |t| (s, t)))
            .collect();
        jobs.par_iter()
            .map(|&(snr, t)| plan.run_trial(t, &setups[t], snr))
            .collect()
    };
    match plan.workers {
        Some(n) => rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build()
            .map_err(|e| Error::InvalidConfig(format!("cannot start {n} workers: {e}")))?
            .install(work),
        None => work(),
    }
}

/// Aggregates records produced by [`run_trials`] for the same plan.
pub fn summarize(plan: &SweepPlan, records: &[TrialRecord]) -> Result<SweepSummary> {
    let mut rows = Vec::with_capacity(plan.snr_db.len());
    for &snr in &plan.snr_db {
        let at: Vec<&TrialRecord> = records
            .iter()
            .filter(|r| r.snr_db.to_bits() == snr.to_bits())
            .collect();
        let mut methods = Vec::with_capacity(plan.estimators.len());
        for &method in &plan.estimators {
            methods.push(summarize_method(plan, method, &at)?);
        }
        let mut crlb_sum = Crlb {
            epsilon: 0.0,
            eta: 0.0,
            trace_h: 0.0,
        };
        let mut crlb_trials = 0;
        for c in at.iter().filter_map(|r| r.crlb) {
            crlb_sum.epsilon += c.epsilon;
            crlb_sum.eta += c.eta;
            crlb_sum.trace_h += c.trace_h;
            crlb_trials += 1;
        }
        let crlb = (crlb_trials > 0).then(|| {
            let n = crlb_trials as f64;
            Crlb {
                epsilon: crlb_sum.epsilon / n,
                eta: crlb_sum.eta / n,
                trace_h: crlb_sum.trace_h / n,
            }
        });
        rows.push(SnrSummary {
            snr_db: snr,
            trials: at.len(),
            methods,
            crlb,
            crlb_trials,
        });
    }
    Ok(SweepSummary {
        timing_p: plan.timing_p,
        estimators: plan.estimators.clone(),
        rows,
    })
}

fn summarize_method(
    plan: &SweepPlan,
    method: Method,
    records: &[&TrialRecord],
) -> Result<MethodSummary> {
    let (mut eps, mut eta, mut theta, mut chan) = (
        MseAccumulator::default(),
        MseAccumulator::default(),
        MseAccumulator::default(),
        MseAccumulator::default(),
    );
    let mut failures = 0usize;
    let mut failed = 0usize;
    for rec in records {
        let Some(run) = rec.runs.iter().find(|r| r.method == method) else {
            continue;
        };
        match &run.result {
            Ok(res) => {
                eps.push(res.epsilon_hat.squared_error(&rec.truth.epsilon)?);
                eta.push(res.eta_hat.squared_error(&rec.truth.eta)?);
                theta.push(res.theta_hat.squared_error(&rec.truth.theta)?);
                chan.push(aligned_channel_error(
                    &plan.system,
                    &res.h_hat,
                    res.theta_hat,
                    &rec.channel,
                    rec.truth.theta,
                )?);
                if (res.theta_hat - rec.truth.theta).unsigned_abs() >= plan.timing_p {
                    failures += 1;
                }
            }
            Err(_) => failed += 1,
        }
    }
    let completed = eps.count();
    Ok(MethodSummary {
        method,
        mse_epsilon: eps.mean(),
        mse_eta: eta.mean(),
        mse_theta: theta.mean(),
        mse_channel: chan.mean(),
        se_epsilon: eps.standard_error(),
        se_eta: eta.standard_error(),
        se_channel: chan.standard_error(),
        ptf: (completed > 0).then(|| failures as f64 / completed as f64),
        completed,
        failed,
    })
}

/// [`run_trials`] followed by [`summarize`].
pub fn monte_carlo_sweep(plan: &SweepPlan) -> Result<SweepSummary> {
    let records = run_trials(plan)?;
    summarize(plan, &records)
}

/// Mean estimator wall time over completed and failed runs, in plan order.
pub fn mean_wall_times(plan: &SweepPlan, records: &[TrialRecord]) -> Vec<(Method, Duration)> {
    plan.estimators
        .iter()
        .map(|&m| {
            let times: Vec<Duration> = records
                .iter()
                .flat_map(|r| r.runs.iter())
                .filter(|run| run.method == m)
                .map(|run| run.wall_time)
                .collect();
            let mean = if times.is_empty() {
                Duration::ZERO
            } else {
                times.iter().sum::<Duration>() / times.len() as u32
            };
            (m, mean)
        })
        .collect()
}

/// One row of [`complexity_trend`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ComplexityRow {
    /// Channel unknowns `L_m · tx · rx`.
    pub unknowns: usize,
    /// Rows of the measurement matrix.
    pub rows: usize,
    pub sparsity: usize,
    pub mean_sp: Duration,
    pub mean_ls: Duration,
}

/// Times one subspace-pursuit and one least-squares channel fit per config
/// on the fully sampled timing-form matrix, averaged over `reps` channel
/// draws.
///
/// Rows are returned sorted by the number of unknowns.
pub fn complexity_trend(
    cfgs: &[SystemConfig],
    reps: usize,
    seed: u64,
) -> Result<Vec<ComplexityRow>> {
    if reps == 0 {
        return Err(Error::InvalidConfig("reps must be ≥ 1".into()));
    }
    let mut sorted: Vec<SystemConfig> = cfgs.to_vec();
    sorted.sort_by_key(|c| c.channel_len());
    let truth = ImpairmentParams::new(0.1, 1e-4, 0);
    let mut rows = Vec::with_capacity(sorted.len());
    for cfg in &sorted {
        cfg.validate()?;
        let pilots = PilotBlock::qpsk(cfg, seed);
        let sel = MeasurementSelection::full(cfg);
        let a = SampledModel::new(cfg, &pilots, truth.eta, Some(truth.theta), &sel)?
            .with_cfo(truth.epsilon);
        let k_total = cfg.total_sparsity();
        let mut sp = Duration::ZERO;
        let mut ls = Duration::ZERO;
        for rep in 0..reps {
            let h = generate_channel(cfg, seed.wrapping_add(rep as u64))?;
            let r = received_signal(&a, &h.taps, &NoiseSpec::noiseless(), seed)?;
            let start = Instant::now();
            std::hint::black_box(subspace_pursuit(
                &a,
                &r,
                k_total,
                default_max_iter(k_total),
            )?);
            sp += start.elapsed();
            let start = Instant::now();
            std::hint::black_box(least_squares(&a, &r, DEFAULT_RANK_TOL)?);
            ls += start.elapsed();
        }
        rows.push(ComplexityRow {
            unknowns: cfg.channel_len(),
            rows: a.nrows(),
            sparsity: k_total,
            mean_sp: sp / reps as u32,
            mean_ls: ls / reps as u32,
        });
    }
    Ok(rows)
}
