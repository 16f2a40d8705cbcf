//! Pilot-aided MIMO-OFDM observation model.
//!
//! Received samples on all `rx` antennas are stacked into one vector of length
//! `N * rx` and modelled as
//!
//! ```text
//! r = (I_rx ⊗ D(ε,η) F1(η) G(θ) X (I_tx ⊗ F2)) h + w            (timing form)
//!   = (I_rx ⊗ D(ε,η) F1(η) X (I_tx ⊗ F2')) h_θ + w               (embedded form)
//! ```
//!
//! where `D` is the CFO phase ramp, `F1` the SFO-warped inverse DFT, `G` the
//! timing ramp, `X` the horizontal concatenation of per-antenna diagonal pilot
//! matrices and `F2`/`F2'` the DFT tap matrices with `L_m` and `L_m + θ_max`
//! columns. The channel vector is stacked receive-antenna-major, then transmit
//! antenna, then tap.

use std::f64::consts::PI;

use nalgebra::DMatrix;
use rand::seq::index;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::{CMatrix, CVector, Error, Result, C64};

/// Static dimensions of the link.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SystemConfig {
    /// Subcarriers per antenna (`N`).
    pub subcarriers: usize,
    /// Transmit antennas.
    pub tx: usize,
    /// Receive antennas.
    pub rx: usize,
    /// Maximum channel length in taps (`L_m`).
    pub taps: usize,
    /// Nonzero taps per transmit/receive pair (`K`).
    pub sparsity: usize,
    /// Largest symbol timing error the embedded model supports, in samples.
    pub theta_max: usize,
    /// Cyclic prefix length in samples.
    pub cp_len: usize,
}

impl Default for SystemConfig {
    fn default() -> Self {
        Self::reference()
    }
}

impl SystemConfig {
    /// 2x2 link with 128 subcarriers, 26-tap 5-sparse channels and a 32-sample CP.
    pub const fn reference() -> Self {
        SystemConfig {
            subcarriers: 128,
            tx: 2,
            rx: 2,
            taps: 26,
            sparsity: 5,
            theta_max: 5,
            cp_len: 32,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("subcarriers", self.subcarriers),
            ("tx", self.tx),
            ("rx", self.rx),
            ("taps", self.taps),
            ("sparsity", self.sparsity),
            ("cp_len", self.cp_len),
        ];
        for (name, v) in positive {
            if v == 0 {
                return Err(Error::InvalidConfig(format!("{name} must be positive")));
            }
        }
        if self.sparsity > self.taps {
            return Err(Error::InvalidConfig(format!(
                "sparsity K ≤ taps L_m violated (K = {}, L_m = {})",
                self.sparsity, self.taps
            )));
        }
        if self.taps + self.theta_max >= self.cp_len {
            return Err(Error::InvalidConfig(format!(
                "taps + theta_max < cp_len violated ({} + {} >= {})",
                self.taps, self.theta_max, self.cp_len
            )));
        }
        if self.taps + self.theta_max > self.subcarriers {
            return Err(Error::InvalidConfig(format!(
                "taps + theta_max ≤ subcarriers violated ({} + {} > {})",
                self.taps, self.theta_max, self.subcarriers
            )));
        }
        Ok(())
    }

    /// Length of the stacked channel vector `h`.
    pub fn channel_len(&self) -> usize {
        self.taps * self.tx * self.rx
    }

    /// Taps per pair in the timing-embedded channel.
    pub fn embedded_taps(&self) -> usize {
        self.taps + self.theta_max
    }

    pub fn embedded_len(&self) -> usize {
        self.embedded_taps() * self.tx * self.rx
    }

    /// Length of the full received vector.
    pub fn samples(&self) -> usize {
        self.subcarriers * self.rx
    }

    /// Total nonzero budget of `h`, `K * tx * rx`.
    pub fn total_sparsity(&self) -> usize {
        self.sparsity * self.tx * self.rx
    }

    pub fn pairs(&self) -> usize {
        self.tx * self.rx
    }
}

/// The unknown impairment triple.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ImpairmentParams {
    /// Carrier frequency offset normalised to the subcarrier spacing.
    pub epsilon: f64,
    /// Relative sampling period mismatch.
    pub eta: f64,
    /// Symbol timing error in samples.
    pub theta: i64,
}

impl ImpairmentParams {
    pub const fn new(epsilon: f64, eta: f64, theta: i64) -> Self {
        ImpairmentParams {
            epsilon,
            eta,
            theta,
        }
    }

    pub const fn zero() -> Self {
        Self::new(0.0, 0.0, 0)
    }
}

/// Frequency-domain pilots, one column per transmit antenna.
#[derive(Debug, Clone, PartialEq)]
pub struct PilotBlock {
    symbols: CMatrix,
}

impl PilotBlock {
    /// Wraps an `N x tx` matrix of pilots; every entry must have unit magnitude.
    pub fn new(symbols: CMatrix) -> Result<Self> {
        for (i, s) in symbols.iter().enumerate() {
            if (s.norm() - 1.0).abs() > 1e-9 {
                return Err(Error::InvalidConfig(format!(
                    "pilot entry {i} has magnitude {} (unit magnitude required)",
                    s.norm()
                )));
            }
        }
        Ok(PilotBlock { symbols })
    }

    /// Uniform random QPSK pilots `(±1 ± j)/√2`.
    pub fn qpsk(cfg: &SystemConfig, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let a = std::f64::consts::FRAC_1_SQRT_2;
        let symbols = CMatrix::from_fn(cfg.subcarriers, cfg.tx, |_, _| {
            let re = if rng.random::<bool>() { a } else { -a };
            let im = if rng.random::<bool>() { a } else { -a };
            C64::new(re, im)
        });
        PilotBlock { symbols }
    }

    pub fn ones(cfg: &SystemConfig) -> Self {
        PilotBlock {
            symbols: CMatrix::from_element(cfg.subcarriers, cfg.tx, C64::new(1.0, 0.0)),
        }
    }

    pub fn symbols(&self) -> &CMatrix {
        &self.symbols
    }

    pub fn subcarriers(&self) -> usize {
        self.symbols.nrows()
    }

    pub fn antennas(&self) -> usize {
        self.symbols.ncols()
    }

    fn check(&self, cfg: &SystemConfig) -> Result<()> {
        if self.subcarriers() != cfg.subcarriers {
            return Err(Error::DimensionMismatch {
                what: "pilot subcarriers",
                expected: cfg.subcarriers,
                actual: self.subcarriers(),
            });
        }
        if self.antennas() != cfg.tx {
            return Err(Error::DimensionMismatch {
                what: "pilot antennas",
                expected: cfg.tx,
                actual: self.antennas(),
            });
        }
        Ok(())
    }
}

/// Stacked channel vector with per-pair supports.
#[derive(Debug, Clone, PartialEq)]
pub struct SparseChannel {
    pub taps: CVector,
    /// One sorted support per (rx, tx) pair, in stacking order.
    pub supports: Vec<Vec<usize>>,
}

impl SparseChannel {
    /// Builds a channel from stacked taps, reading supports off the nonzeros.
    pub fn from_taps(cfg: &SystemConfig, taps: CVector) -> Result<Self> {
        if taps.len() != cfg.channel_len() {
            return Err(Error::DimensionMismatch {
                what: "channel length",
                expected: cfg.channel_len(),
                actual: taps.len(),
            });
        }
        let supports = (0..cfg.pairs())
            .map(|p| {
                (0..cfg.taps)
                    .filter(|&l| taps[p * cfg.taps + l] != C64::new(0.0, 0.0))
                    .collect()
            })
            .collect();
        Ok(SparseChannel { taps, supports })
    }

    pub fn zeros(cfg: &SystemConfig) -> Self {
        SparseChannel {
            taps: CVector::zeros(cfg.channel_len()),
            supports: vec![Vec::new(); cfg.pairs()],
        }
    }

    /// Index of tap `l` of pair (`rx`, `tx`) in the stacked vector.
    pub fn index(cfg: &SystemConfig, rx: usize, tx: usize, l: usize) -> usize {
        (rx * cfg.tx + tx) * cfg.taps + l
    }

    /// Stacked indices of all supported taps, ascending.
    pub fn support_indices(&self, cfg: &SystemConfig) -> Vec<usize> {
        self.supports
            .iter()
            .enumerate()
            .flat_map(|(p, s)| s.iter().map(move |&l| p * cfg.taps + l))
            .collect()
    }
}

/// Channel delayed by the timing error inside a window of `L_m + θ_max` taps.
#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddedChannel {
    pub taps: CVector,
}

impl EmbeddedChannel {
    /// Reads the `L_m` taps of every pair back out at offset `theta`.
    pub fn extract(&self, theta: i64, cfg: &SystemConfig) -> Result<CVector> {
        let shift = check_theta(theta, cfg)?;
        let (w, l) = (cfg.embedded_taps(), cfg.taps);
        Ok(CVector::from_fn(cfg.channel_len(), |i, _| {
            let (p, tap) = (i / l, i % l);
            self.taps[p * w + shift + tap]
        }))
    }
}

/// Rows of the full received vector kept for estimation.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MeasurementSelection {
    indices: Vec<usize>,
    per_rx: usize,
}

impl MeasurementSelection {
    /// Keeps every sample.
    pub fn full(cfg: &SystemConfig) -> Self {
        MeasurementSelection {
            indices: (0..cfg.samples()).collect(),
            per_rx: cfg.subcarriers,
        }
    }

    /// Validates an explicit index set against `cfg`.
    pub fn from_indices(cfg: &SystemConfig, indices: Vec<usize>, per_rx: usize) -> Result<Self> {
        if indices.len() != per_rx * cfg.rx {
            return Err(Error::DimensionMismatch {
                what: "selection size",
                expected: per_rx * cfg.rx,
                actual: indices.len(),
            });
        }
        if indices.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::InvalidConfig(
                "selection indices must be strictly increasing".into(),
            ));
        }
        if let Some(&last) = indices.last() {
            if last >= cfg.samples() {
                return Err(Error::OutOfRange {
                    what: "selection index",
                    value: last as i64,
                    min: 0,
                    max: cfg.samples() as i64 - 1,
                });
            }
        }
        for rx in 0..cfg.rx {
            let n = indices
                .iter()
                .filter(|&&i| i / cfg.subcarriers == rx)
                .count();
            if n != per_rx {
                return Err(Error::InvalidConfig(format!(
                    "receive antenna {rx} contributes {n} samples, expected {per_rx}"
                )));
            }
        }
        Ok(MeasurementSelection { indices, per_rx })
    }

    pub fn indices(&self) -> &[usize] {
        &self.indices
    }

    /// Samples kept per receive antenna (`M`).
    pub fn per_rx(&self) -> usize {
        self.per_rx
    }

    pub fn len(&self) -> usize {
        self.indices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.indices.is_empty()
    }
}

/// Additive noise level.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NoiseSpec {
    pub sigma_sq: f64,
    pub snr_db: f64,
}

impl NoiseSpec {
    pub fn noiseless() -> Self {
        NoiseSpec {
            sigma_sq: 0.0,
            snr_db: f64::INFINITY,
        }
    }

    /// Noise variance giving `snr_db` for a given mean received sample energy.
    pub fn from_snr(snr_db: f64, signal_power: f64) -> Self {
        NoiseSpec {
            sigma_sq: signal_power / 10f64.powf(snr_db / 10.0),
            snr_db,
        }
    }
}

/// Mean received sample energy `E‖A1 h‖² / (N rx)` over uniformly drawn
/// `K`-sparse unit-variance channels: every tap is active with probability
/// `K / L_m`, so the expectation is `(K / L_m) ‖A1‖_F² / (N rx)`.
pub fn mean_signal_power(cfg: &SystemConfig, a1: &CMatrix) -> f64 {
    let active = cfg.sparsity as f64 / cfg.taps as f64;
    active * a1.norm_squared() / cfg.samples() as f64
}

fn check_theta(theta: i64, cfg: &SystemConfig) -> Result<usize> {
    if theta < 0 || theta > cfg.theta_max as i64 {
        return Err(Error::OutOfRange {
            what: "theta",
            value: theta,
            min: 0,
            max: cfg.theta_max as i64,
        });
    }
    Ok(theta as usize)
}

#[inline]
fn cis(phase: f64) -> C64 {
    C64::from_polar(1.0, phase)
}

/// `D(ε,η)`: diagonal with entries `exp(j2π ε(1+η) n / N)`.
pub fn cfo_phase_matrix(epsilon: f64, eta: f64, n: usize) -> CMatrix {
    let d = CVector::from_fn(n, |i, _| cfo_phase(epsilon, eta, i, n));
    CMatrix::from_diagonal(&d)
}

#[inline]
fn cfo_phase(epsilon: f64, eta: f64, i: usize, n: usize) -> C64 {
    cis(2.0 * PI * epsilon * (1.0 + eta) * i as f64 / n as f64)
}

/// `G(θ)`: diagonal with entries `exp(-j2π kθ / N)`.
pub fn timing_ramp_matrix(theta: i64, n: usize) -> CMatrix {
    let g = CVector::from_fn(n, |k, _| timing_phase(theta, k, n));
    CMatrix::from_diagonal(&g)
}

#[inline]
fn timing_phase(theta: i64, k: usize, n: usize) -> C64 {
    // Reduce kθ mod N first so large products keep full phase accuracy.
    let m = (k as i64 * theta).rem_euclid(n as i64);
    cis(-2.0 * PI * m as f64 / n as f64)
}

/// `F1(η)`: entry `(n,k)` is `exp(j2π k n (1+η) / N) / N`.
pub fn sfo_idft_matrix(eta: f64, n: usize) -> CMatrix {
    CMatrix::from_fn(n, n, |row, k| sfo_idft_entry(eta, row, k, n))
}

#[inline]
fn sfo_idft_entry(eta: f64, row: usize, k: usize, n: usize) -> C64 {
    // Split k n (1+η) into an exact integer part reduced mod N and the small
    // warp k n η.
    let base = ((k * row) % n) as f64;
    let warp = (k * row) as f64 * eta;
    cis(2.0 * PI * (base + warp) / n as f64) / n as f64
}

/// `F2`: entry `(k,l)` is `exp(-j2π l k / N)` for `l < taps`.
pub fn dft_tap_matrix(n: usize, taps: usize) -> Result<CMatrix> {
    if taps == 0 || taps > n {
        return Err(Error::OutOfRange {
            what: "tap matrix columns",
            value: taps as i64,
            min: 1,
            max: n as i64,
        });
    }
    Ok(CMatrix::from_fn(n, taps, |k, l| {
        cis(-2.0 * PI * ((k * l) % n) as f64 / n as f64)
    }))
}

/// `X = [diag(x_1) | … | diag(x_tx)]`, shape `N x N·tx`.
pub fn pilot_matrix(pilots: &PilotBlock) -> CMatrix {
    let (n, tx) = (pilots.subcarriers(), pilots.antennas());
    let mut x = CMatrix::zeros(n, n * tx);
    for t in 0..tx {
        for k in 0..n {
            x[(k, t * n + k)] = pilots.symbols[(k, t)];
        }
    }
    x
}

/// `I_count ⊗ block`.
pub fn block_diagonal(block: &CMatrix, count: usize) -> CMatrix {
    let (r, c) = block.shape();
    let mut out = CMatrix::zeros(r * count, c * count);
    for b in 0..count {
        out.view_mut((b * r, b * c), (r, c)).copy_from(block);
    }
    out
}

fn per_rx_block(
    cfg: &SystemConfig,
    pilots: &PilotBlock,
    epsilon: f64,
    eta: f64,
    theta: Option<i64>,
    width: usize,
) -> Result<CMatrix> {
    cfg.validate()?;
    pilots.check(cfg)?;
    let n = cfg.subcarriers;
    let f2 = dft_tap_matrix(n, width)?;
    let taps = block_diagonal(&f2, cfg.tx);
    let mut chain = cfo_phase_matrix(epsilon, eta, n) * sfo_idft_matrix(eta, n);
    if let Some(theta) = theta {
        chain *= timing_ramp_matrix(theta, n);
    }
    Ok(chain * pilot_matrix(pilots) * taps)
}

/// Timing-form measurement matrix `A1(ε,η,θ)`, shape `N·rx x L_m·tx·rx`.
pub fn assemble_a1(
    cfg: &SystemConfig,
    pilots: &PilotBlock,
    params: &ImpairmentParams,
) -> Result<CMatrix> {
    let b = per_rx_block(
        cfg,
        pilots,
        params.epsilon,
        params.eta,
        Some(params.theta),
        cfg.taps,
    )?;
    Ok(block_diagonal(&b, cfg.rx))
}

/// Embedded-form measurement matrix `A2(ε,η)`, shape `N·rx x (L_m+θ_max)·tx·rx`.
pub fn assemble_a2(
    cfg: &SystemConfig,
    pilots: &PilotBlock,
    epsilon: f64,
    eta: f64,
) -> Result<CMatrix> {
    let b = per_rx_block(cfg, pilots, epsilon, eta, None, cfg.embedded_taps())?;
    Ok(block_diagonal(&b, cfg.rx))
}

/// Selected rows of the measurement matrix before the CFO ramp is applied.
///
/// Built directly from the selected rows of `F1(η)` so that the per-grid-point
/// cost in the estimator is a row scaling. [`SampledModel::with_cfo`] applies
/// `D(ε,η)`; the result equals `row_subsample` of [`assemble_a1`] (with
/// `theta`) or [`assemble_a2`] (without).
#[derive(Debug, Clone)]
pub struct SampledModel {
    core: CMatrix,
    local_rows: Vec<usize>,
    eta: f64,
    subcarriers: usize,
}

impl SampledModel {
    pub fn new(
        cfg: &SystemConfig,
        pilots: &PilotBlock,
        eta: f64,
        theta: Option<i64>,
        sel: &MeasurementSelection,
    ) -> Result<Self> {
        pilots.check(cfg)?;
        let n = cfg.subcarriers;
        let width = match theta {
            Some(t) => {
                check_theta(t, cfg)?;
                cfg.taps
            }
            None => cfg.embedded_taps(),
        };
        if let Some(&last) = sel.indices().last() {
            if last >= cfg.samples() {
                return Err(Error::OutOfRange {
                    what: "selection index",
                    value: last as i64,
                    min: 0,
                    max: cfg.samples() as i64 - 1,
                });
            }
        }
        let f2 = dft_tap_matrix(n, width)?;
        let ramp: Vec<C64> = (0..n)
            .map(|k| theta.map_or(C64::new(1.0, 0.0), |t| timing_phase(t, k, n)))
            .collect();

        let rows = sel.len();
        let local_rows: Vec<usize> = sel.indices().iter().map(|&i| i % n).collect();
        let cols_per_rx = width * cfg.tx;
        let mut core = CMatrix::zeros(rows, cols_per_rx * cfg.rx);
        let mut warped = CMatrix::zeros(rows, n);
        for t in 0..cfg.tx {
            for (i, &row) in local_rows.iter().enumerate() {
                for k in 0..n {
                    warped[(i, k)] =
                        sfo_idft_entry(eta, row, k, n) * ramp[k] * pilots.symbols[(k, t)];
                }
            }
            let part = &warped * &f2;
            for (i, &global) in sel.indices().iter().enumerate() {
                let rx = global / n;
                let col0 = rx * cols_per_rx + t * width;
                core.view_mut((i, col0), (1, width)).copy_from(&part.row(i));
            }
        }
        Ok(SampledModel {
            core,
            local_rows,
            eta,
            subcarriers: n,
        })
    }

    /// Selected rows without the CFO ramp.
    pub fn rows(&self) -> &CMatrix {
        &self.core
    }

    /// `D(ε,η)ᴴ r` over the selected rows. Since `D` is unitary and diagonal,
    /// `‖r - D C h‖ = ‖Dᴴ r - C h‖` for every `h`.
    pub fn derotate(&self, r: &CVector, epsilon: f64) -> CVector {
        CVector::from_iterator(
            r.len(),
            r.iter()
                .zip(&self.local_rows)
                .map(|(v, &row)| v * cfo_phase(epsilon, self.eta, row, self.subcarriers).conj()),
        )
    }

    /// Applies the CFO ramp `D(ε,η)` to the cached rows.
    pub fn with_cfo(&self, epsilon: f64) -> CMatrix {
        let mut a = self.core.clone();
        for (i, &row) in self.local_rows.iter().enumerate() {
            let d = cfo_phase(epsilon, self.eta, row, self.subcarriers);
            for v in a.row_mut(i).iter_mut() {
                *v *= d;
            }
        }
        a
    }
}

/// Row-subsampled `A1u(ε,η,θ)`.
pub fn subsampled_a1(
    cfg: &SystemConfig,
    pilots: &PilotBlock,
    params: &ImpairmentParams,
    sel: &MeasurementSelection,
) -> Result<CMatrix> {
    Ok(
        SampledModel::new(cfg, pilots, params.eta, Some(params.theta), sel)?
            .with_cfo(params.epsilon),
    )
}

/// Row-subsampled `A2u(ε,η)`.
pub fn subsampled_a2(
    cfg: &SystemConfig,
    pilots: &PilotBlock,
    epsilon: f64,
    eta: f64,
    sel: &MeasurementSelection,
) -> Result<CMatrix> {
    Ok(SampledModel::new(cfg, pilots, eta, None, sel)?.with_cfo(epsilon))
}

/// Places each pair's `L_m` taps at offset `theta` in a window of `L_m + θ_max`.
pub fn embed_ste(h: &SparseChannel, theta: i64, cfg: &SystemConfig) -> Result<EmbeddedChannel> {
    let shift = check_theta(theta, cfg)?;
    if h.taps.len() != cfg.channel_len() {
        return Err(Error::DimensionMismatch {
            what: "channel length",
            expected: cfg.channel_len(),
            actual: h.taps.len(),
        });
    }
    let (w, l) = (cfg.embedded_taps(), cfg.taps);
    let mut taps = CVector::zeros(cfg.embedded_len());
    for p in 0..cfg.pairs() {
        for tap in 0..l {
            taps[p * w + shift + tap] = h.taps[p * l + tap];
        }
    }
    Ok(EmbeddedChannel { taps })
}

fn complex_gaussian(rng: &mut impl Rng, variance: f64) -> C64 {
    let s = (variance / 2.0).sqrt();
    let re: f64 = StandardNormal.sample(rng);
    let im: f64 = StandardNormal.sample(rng);
    C64::new(s * re, s * im)
}

/// Draws `K` uniformly placed unit-variance circular Gaussian taps per pair.
pub fn generate_channel(cfg: &SystemConfig, seed: u64) -> Result<SparseChannel> {
    if cfg.sparsity > cfg.taps {
        return Err(Error::InvalidConfig(format!(
            "sparsity K ≤ taps L_m violated (K = {}, L_m = {})",
            cfg.sparsity, cfg.taps
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut taps = CVector::zeros(cfg.channel_len());
    let mut supports = Vec::with_capacity(cfg.pairs());
    for p in 0..cfg.pairs() {
        let mut support = index::sample(&mut rng, cfg.taps, cfg.sparsity).into_vec();
        support.sort_unstable();
        for &l in &support {
            taps[p * cfg.taps + l] = complex_gaussian(&mut rng, 1.0);
        }
        supports.push(support);
    }
    Ok(SparseChannel { taps, supports })
}

/// `r = A h + w` with circular Gaussian `w` of per-sample variance `sigma_sq`.
pub fn received_signal(a: &CMatrix, h: &CVector, noise: &NoiseSpec, seed: u64) -> Result<CVector> {
    if a.ncols() != h.len() {
        return Err(Error::DimensionMismatch {
            what: "channel length",
            expected: a.ncols(),
            actual: h.len(),
        });
    }
    let mut r = a * h;
    if noise.sigma_sq > 0.0 {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        for v in r.iter_mut() {
            *v += complex_gaussian(&mut rng, noise.sigma_sq);
        }
    }
    Ok(r)
}

/// Draws `m` distinct samples per receive antenna, sorted ascending.
pub fn select_samples(cfg: &SystemConfig, m: usize, seed: u64) -> Result<MeasurementSelection> {
    let n = cfg.subcarriers;
    if m == 0 || m > n {
        return Err(Error::OutOfRange {
            what: "samples per antenna M",
            value: m as i64,
            min: 1,
            max: n as i64,
        });
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut indices = Vec::with_capacity(m * cfg.rx);
    for rx in 0..cfg.rx {
        let mut block = index::sample(&mut rng, n, m).into_vec();
        block.sort_unstable();
        indices.extend(block.into_iter().map(|k| rx * n + k));
    }
    Ok(MeasurementSelection { indices, per_rx: m })
}

/// Keeping the rows listed in a [`MeasurementSelection`].
pub trait RowSubsample: Sized {
    fn row_subsample(&self, sel: &MeasurementSelection) -> Result<Self>;
}

impl RowSubsample for CMatrix {
    fn row_subsample(&self, sel: &MeasurementSelection) -> Result<Self> {
        check_rows(self.nrows(), sel)?;
        Ok(DMatrix::from_fn(sel.len(), self.ncols(), |i, j| {
            self[(sel.indices[i], j)]
        }))
    }
}

impl RowSubsample for CVector {
    fn row_subsample(&self, sel: &MeasurementSelection) -> Result<Self> {
        check_rows(self.len(), sel)?;
        Ok(CVector::from_iterator(
            sel.len(),
            sel.indices.iter().map(|&i| self[i]),
        ))
    }
}

fn check_rows(rows: usize, sel: &MeasurementSelection) -> Result<()> {
    match sel.indices.last() {
        Some(&last) if last >= rows => Err(Error::OutOfRange {
            what: "selection index",
            value: last as i64,
            min: 0,
            max: rows as i64 - 1,
        }),
        _ => Ok(()),
    }
}

/// Free-function form of [`RowSubsample::row_subsample`].
pub fn row_subsample<T: RowSubsample>(input: &T, sel: &MeasurementSelection) -> Result<T> {
    input.row_subsample(sel)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn c(re: f64, im: f64) -> C64 {
        C64::new(re, im)
    }

    fn small_cfg() -> SystemConfig {
        SystemConfig {
            subcarriers: 32,
            tx: 2,
            rx: 2,
            taps: 6,
            sparsity: 2,
            theta_max: 3,
            cp_len: 10,
        }
    }

    fn max_abs_diff(a: &CMatrix, b: &CMatrix) -> f64 {
        assert_eq!(a.shape(), b.shape());
        a.iter()
            .zip(b.iter())
            .map(|(x, y)| (x - y).norm())
            .fold(0.0, f64::max)
    }

    #[test]
    fn cfo_matrix_values() {
        let d = cfo_phase_matrix(0.0, 0.3, 128);
        assert!(max_abs_diff(&d, &CMatrix::identity(128, 128)) == 0.0);

        let d = cfo_phase_matrix(0.102, 1.01e-4, 128);
        let expected = (c(0.0, 2.0 * PI * 0.102 * 1.000101 / 128.0)).exp();
        assert!((d[(1, 1)] - expected).norm() < 1e-15);
        assert_eq!(d[(0, 0)], c(1.0, 0.0));

        let d = cfo_phase_matrix(0.5, 0.0, 4);
        // exp(jπ n / 4) for n = 0..3
        let want = [
            c(1.0, 0.0),
            c(0.5f64.sqrt(), 0.5f64.sqrt()),
            c(0.0, 1.0),
            c(-(0.5f64.sqrt()), 0.5f64.sqrt()),
        ];
        for (n, w) in want.iter().enumerate() {
            assert!((d[(n, n)] - w).norm() < 1e-12);
        }
    }

    #[test]
    fn timing_matrix_values() {
        assert_eq!(timing_ramp_matrix(0, 128), CMatrix::identity(128, 128));
        let g = timing_ramp_matrix(2, 128);
        assert!((g[(1, 1)] - c(0.0, -4.0 * PI / 128.0).exp()).norm() < 1e-15);
        let g = timing_ramp_matrix(8, 8);
        assert!(max_abs_diff(&g, &CMatrix::identity(8, 8)) < 1e-12);
    }

    #[test]
    fn sfo_idft_values() {
        let f = sfo_idft_matrix(1.01e-4, 128);
        let want = c(0.0, 2.0 * PI * 1.000101 / 128.0).exp() / 128.0;
        assert!((f[(1, 1)] - want).norm() < 1e-15);

        let f = sfo_idft_matrix(0.0, 2);
        let want =
            CMatrix::from_row_slice(2, 2, &[c(0.5, 0.0), c(0.5, 0.0), c(0.5, 0.0), c(-0.5, 0.0)]);
        assert!(max_abs_diff(&f, &want) < 1e-15);
    }

    #[test]
    fn dft_tap_gram_and_bounds() {
        let f2 = dft_tap_matrix(128, 26).unwrap();
        let gram = f2.adjoint() * &f2;
        let want = CMatrix::identity(26, 26) * c(128.0, 0.0);
        assert!(max_abs_diff(&gram, &want) < 1e-9);

        let f2 = dft_tap_matrix(4, 1).unwrap();
        assert!(f2.iter().all(|&v| v == c(1.0, 0.0)));

        assert_eq!(dft_tap_matrix(128, 31).unwrap().shape(), (128, 31));
        assert!(dft_tap_matrix(4, 5).is_err());
    }

    #[test]
    fn pilot_matrix_layouts() {
        let cfg = SystemConfig {
            subcarriers: 2,
            tx: 2,
            rx: 1,
            taps: 1,
            sparsity: 1,
            theta_max: 0,
            cp_len: 2,
        };
        let x = pilot_matrix(&PilotBlock::ones(&cfg));
        let one = c(1.0, 0.0);
        let zero = c(0.0, 0.0);
        let want = CMatrix::from_row_slice(2, 4, &[one, zero, one, zero, zero, one, zero, one]);
        assert_eq!(x, want);

        let reference = SystemConfig::reference();
        let x = pilot_matrix(&PilotBlock::qpsk(&reference, 3));
        assert_eq!(x.shape(), (128, 256));
        assert_eq!(x.iter().filter(|v| v.norm() > 0.0).count(), 256);

        let single = SystemConfig { tx: 1, ..reference };
        let p = PilotBlock::qpsk(&single, 3);
        let x = pilot_matrix(&p);
        assert_eq!(
            x,
            CMatrix::from_diagonal(&p.symbols().column(0).into_owned())
        );
    }

    #[test]
    fn pilots_must_be_unit_magnitude() {
        let bad = CMatrix::from_element(4, 1, c(2.0, 0.0));
        assert!(PilotBlock::new(bad).is_err());
        let cfg = SystemConfig::reference();
        let p = PilotBlock::qpsk(&cfg, 11);
        assert!(p.symbols().iter().all(|s| (s.norm() - 1.0).abs() < 1e-12));
    }

    #[test]
    fn a1_zero_impairments_is_identity_columns() {
        let cfg = SystemConfig {
            tx: 1,
            rx: 1,
            ..SystemConfig::reference()
        };
        let a1 = assemble_a1(&cfg, &PilotBlock::ones(&cfg), &ImpairmentParams::zero()).unwrap();
        let want = CMatrix::identity(128, 26);
        assert!(max_abs_diff(&a1, &want) < 1e-10);

        let a2 = assemble_a2(&cfg, &PilotBlock::ones(&cfg), 0.0, 0.0).unwrap();
        assert!(max_abs_diff(&a2, &CMatrix::identity(128, 31)) < 1e-10);
    }

    #[test]
    fn reference_shapes() {
        let cfg = SystemConfig::reference();
        let p = PilotBlock::qpsk(&cfg, 1);
        let params = ImpairmentParams::new(0.102, 1.01e-4, 2);
        assert_eq!(assemble_a1(&cfg, &p, &params).unwrap().shape(), (256, 104));
        assert_eq!(
            assemble_a2(&cfg, &p, 0.102, 1.01e-4).unwrap().shape(),
            (256, 124)
        );
    }

    #[test]
    fn kronecker_blocks_are_exact() {
        let cfg = small_cfg();
        let p = PilotBlock::qpsk(&cfg, 5);
        let a1 = assemble_a1(&cfg, &p, &ImpairmentParams::new(0.13, 2e-3, 1)).unwrap();
        let (n, c1) = (cfg.subcarriers, cfg.taps * cfg.tx);
        assert!(a1.view((0, c1), (n, c1)).iter().all(|v| *v == c(0.0, 0.0)));
        assert!(a1.view((n, 0), (n, c1)).iter().all(|v| *v == c(0.0, 0.0)));
        assert_eq!(a1.view((0, 0), (n, c1)), a1.view((n, c1), (n, c1)));
    }

    #[test]
    fn a2_at_theta_zero_matches_a1_columns() {
        let cfg = small_cfg();
        let p = PilotBlock::qpsk(&cfg, 9);
        let a1 = assemble_a1(&cfg, &p, &ImpairmentParams::new(-0.2, 1e-3, 0)).unwrap();
        let a2 = assemble_a2(&cfg, &p, -0.2, 1e-3).unwrap();
        for pair in 0..cfg.pairs() {
            for l in 0..cfg.taps {
                let c1 = a1.column(pair * cfg.taps + l);
                let c2 = a2.column(pair * cfg.embedded_taps() + l);
                assert!((c1 - c2).norm() < 1e-12);
            }
        }
    }

    #[test]
    fn embedding_layout_and_round_trip() {
        let cfg = SystemConfig::reference();
        let h = generate_channel(&cfg, 4).unwrap();
        let e0 = embed_ste(&h, 0, &cfg).unwrap();
        let seg = e0.taps.rows(0, 31);
        assert_eq!(seg.rows(0, 26), h.taps.rows(0, 26));
        assert!(seg.rows(26, 5).iter().all(|v| *v == c(0.0, 0.0)));

        let e2 = embed_ste(&h, 2, &cfg).unwrap();
        for p in 0..cfg.pairs() {
            let seg = e2.taps.rows(p * 31, 31);
            assert_eq!(seg[0], c(0.0, 0.0));
            assert_eq!(seg[1], c(0.0, 0.0));
            assert_eq!(seg.rows(2, 26), h.taps.rows(p * 26, 26));
            assert!(seg.rows(28, 3).iter().all(|v| *v == c(0.0, 0.0)));
        }
        assert_eq!(e2.extract(2, &cfg).unwrap(), h.taps);
        assert!(embed_ste(&h, 6, &cfg).is_err());
        assert!(embed_ste(&h, -1, &cfg).is_err());
    }

    #[test]
    fn a1_and_a2_agree_on_the_embedded_channel() {
        let cfg = SystemConfig::reference();
        let p = PilotBlock::qpsk(&cfg, 2);
        let h = generate_channel(&cfg, 8).unwrap();
        for theta in 0..=5 {
            let params = ImpairmentParams::new(0.102, 1.01e-4, theta);
            let y1 = assemble_a1(&cfg, &p, &params).unwrap() * &h.taps;
            let e = embed_ste(&h, theta, &cfg).unwrap();
            let y2 = assemble_a2(&cfg, &p, 0.102, 1.01e-4).unwrap() * &e.taps;
            assert!((&y1 - &y2).norm() <= 1e-9 * y1.norm(), "theta {theta}");
        }
    }

    #[test]
    fn sampled_model_matches_full_assembly() {
        let cfg = SystemConfig::reference();
        let p = PilotBlock::qpsk(&cfg, 21);
        let sel = select_samples(&cfg, 45, 17).unwrap();
        let params = ImpairmentParams::new(-0.31, -2.3e-3, 4);

        let full = assemble_a1(&cfg, &p, &params).unwrap();
        let fast = subsampled_a1(&cfg, &p, &params, &sel).unwrap();
        assert!(max_abs_diff(&full.row_subsample(&sel).unwrap(), &fast) < 1e-12);

        let full = assemble_a2(&cfg, &p, params.epsilon, params.eta).unwrap();
        let fast = subsampled_a2(&cfg, &p, params.epsilon, params.eta, &sel).unwrap();
        assert!(max_abs_diff(&full.row_subsample(&sel).unwrap(), &fast) < 1e-12);
    }

    #[test]
    fn channel_generation() {
        let cfg = SystemConfig::reference();
        let h = generate_channel(&cfg, 99).unwrap();
        assert_eq!(h.taps.len(), 104);
        assert_eq!(h.supports.len(), 4);
        for (pair, s) in h.supports.iter().enumerate() {
            assert_eq!(s.len(), 5);
            let nz = (0..26)
                .filter(|&l| h.taps[pair * 26 + l].norm() > 0.0)
                .count();
            assert_eq!(nz, 5);
        }
        assert_eq!(h.taps.iter().filter(|v| v.norm() > 0.0).count(), 20);
        assert_eq!(h, generate_channel(&cfg, 99).unwrap());
        assert_eq!(SparseChannel::from_taps(&cfg, h.taps.clone()).unwrap(), h);

        let dense = SystemConfig {
            sparsity: 26,
            ..cfg
        };
        let h = generate_channel(&dense, 1).unwrap();
        assert!(h.supports.iter().all(|s| s.len() == 26));
    }

    #[test]
    fn received_signal_noise_and_determinism() {
        let cfg = small_cfg();
        let p = PilotBlock::qpsk(&cfg, 1);
        let a = assemble_a1(&cfg, &p, &ImpairmentParams::new(0.1, 1e-4, 2)).unwrap();
        let h = generate_channel(&cfg, 3).unwrap();
        let r = received_signal(&a, &h.taps, &NoiseSpec::noiseless(), 5).unwrap();
        assert_eq!(r, &a * &h.taps);

        let noise = NoiseSpec {
            sigma_sq: 0.5,
            snr_db: 0.0,
        };
        let r1 = received_signal(&a, &h.taps, &noise, 5).unwrap();
        let r2 = received_signal(&a, &h.taps, &noise, 5).unwrap();
        assert_eq!(r1, r2);
        assert_ne!(r1, received_signal(&a, &h.taps, &noise, 6).unwrap());

        let bad = CVector::zeros(3);
        assert!(received_signal(&a, &bad, &noise, 1).is_err());
    }

    #[test]
    fn noise_variance_matches() {
        let a = CMatrix::zeros(10_000, 1);
        let h = CVector::zeros(1);
        let noise = NoiseSpec {
            sigma_sq: 1.0,
            snr_db: 0.0,
        };
        let r = received_signal(&a, &h, &noise, 2024).unwrap();
        let var = r.norm_squared() / r.len() as f64;
        assert!((var - 1.0).abs() < 0.05, "sample variance {var}");
    }

    #[test]
    fn selection_contracts() {
        let cfg = SystemConfig::reference();
        let full = select_samples(&cfg, 128, 1).unwrap();
        assert_eq!(full, MeasurementSelection::full(&cfg));

        let s = select_samples(&cfg, 45, 7).unwrap();
        assert_eq!(s.len(), 90);
        assert!(s.indices().windows(2).all(|w| w[0] < w[1]));
        assert_eq!(s.indices().iter().filter(|&&i| i < 128).count(), 45);
        assert_eq!(select_samples(&cfg, 75, 7).unwrap().len(), 150);

        assert!(select_samples(&cfg, 0, 1).is_err());
        assert!(select_samples(&cfg, 129, 1).is_err());
        assert!(MeasurementSelection::from_indices(&cfg, s.indices().to_vec(), 45).is_ok());
        assert!(MeasurementSelection::from_indices(&cfg, vec![0, 1], 1).is_err());
    }

    #[test]
    fn row_subsample_contracts() {
        let cfg = SystemConfig::reference();
        let p = PilotBlock::qpsk(&cfg, 1);
        let a = assemble_a1(&cfg, &p, &ImpairmentParams::new(0.1, 1e-4, 2)).unwrap();
        let full = MeasurementSelection::full(&cfg);
        assert_eq!(a.row_subsample(&full).unwrap(), a);

        let sel = select_samples(&cfg, 45, 3).unwrap();
        assert_eq!(row_subsample(&a, &sel).unwrap().shape(), (90, 104));

        let h = generate_channel(&cfg, 2).unwrap();
        let r = received_signal(&a, &h.taps, &NoiseSpec::noiseless(), 0).unwrap();
        let lhs = r.row_subsample(&sel).unwrap();
        let rhs = a.row_subsample(&sel).unwrap() * &h.taps;
        assert!((lhs - rhs).norm() < 1e-12);

        let short = CVector::zeros(10);
        assert!(short.row_subsample(&sel).is_err());
    }

    #[test]
    fn config_invariants() {
        assert!(SystemConfig::reference().validate().is_ok());
        let bad = SystemConfig {
            sparsity: 27,
            ..SystemConfig::reference()
        };
        let msg = bad.validate().unwrap_err().to_string();
        assert!(msg.contains("K ≤ taps"), "{msg}");
        let bad = SystemConfig {
            theta_max: 6,
            ..SystemConfig::reference()
        };
        assert!(bad.validate().unwrap_err().to_string().contains("cp_len"));
    }
}
