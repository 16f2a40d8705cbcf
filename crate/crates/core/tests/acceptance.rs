//! Acceptance suite. Runs without the libtest harness so criteria execute
//! one after another (no interference with the wall-clock checks) and every
//! `criterion N: PASS|FAIL` line is printed regardless of outcome. The
//! process exits non-zero if any criterion fails.

use std::sync::OnceLock;
use std::time::Instant;

use mlsync::config::ExperimentConfig;
use mlsync::estimator::{estimate, EstimatorOptions, GridSpec, Method};
use mlsync::evaluation::{
    aligned_channel_error, complexity_trend, run_trials, summarize, SweepPlan, SweepSummary,
    TrialRecord,
};
use mlsync::model::*;
use mlsync::recovery::{default_max_iter, least_squares, subspace_pursuit, DEFAULT_RANK_TOL};
use mlsync::report::{write_report, CSV_FILES};
use mlsync::{CMatrix, CVector, C64};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

fn report(n: u32, pass: bool, detail: &str) -> bool {
    let verdict = if pass { "PASS" } else { "FAIL" };
    println!("criterion {n}: {verdict} — {detail}");
    pass
}

fn cn(rng: &mut impl Rng) -> C64 {
    let re: f64 = StandardNormal.sample(rng);
    let im: f64 = StandardNormal.sample(rng);
    C64::new(re, im) * std::f64::consts::FRAC_1_SQRT_2
}

fn criterion_1_model_consistency() -> bool {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let mut worst = 0.0f64;
    for case in 0..100u64 {
        let subcarriers = [16usize, 32, 64, 128][rng.random_range(0..4)];
        let taps = rng.random_range(1..=12usize.min(subcarriers / 2));
        let theta_max = rng.random_range(0..=4usize);
        let cfg = SystemConfig {
            subcarriers,
            tx: rng.random_range(1..=2),
            rx: rng.random_range(1..=2),
            taps,
            sparsity: rng.random_range(1..=taps),
            theta_max,
            cp_len: taps + theta_max + 1,
        };
        let params = ImpairmentParams::new(
            rng.random_range(-0.5..0.5),
            rng.random_range(-5e-3..5e-3),
            rng.random_range(0..=theta_max as i64),
        );
        let pilots = PilotBlock::qpsk(&cfg, case);
        let h = generate_channel(&cfg, case + 1000).unwrap();
        let a1h = assemble_a1(&cfg, &pilots, &params).unwrap() * &h.taps;
        let a2h = assemble_a2(&cfg, &pilots, params.epsilon, params.eta).unwrap()
            * embed_ste(&h, params.theta, &cfg).unwrap().taps;
        worst = worst.max((&a1h - &a2h).norm() / a1h.norm());
    }
    let secs = start.elapsed().as_secs_f64();
    report(
        1,
        worst <= 1e-9 && secs < 10.0,
        &format!(
            "100 random configs, worst relative gap {worst:.2e} (≤ 1e-9), {secs:.2} s (< 10 s)"
        ),
    )
}

fn combinations(n: usize, k: usize) -> Vec<Vec<usize>> {
    fn go(start: usize, n: usize, k: usize, cur: &mut Vec<usize>, out: &mut Vec<Vec<usize>>) {
        if cur.len() == k {
            out.push(cur.clone());
            return;
        }
        for i in start..n {
            cur.push(i);
            go(i + 1, n, k, cur, out);
            cur.pop();
        }
    }
    let mut out = Vec::new();
    go(0, n, k, &mut Vec::new(), &mut out);
    out
}

fn criterion_2_pursuit_matches_exhaustive_search() -> bool {
    let start = Instant::now();
    let (rows, cols) = (20, 40);
    let subsets: Vec<Vec<Vec<usize>>> = (0..=3).map(|k| combinations(cols, k)).collect();
    let (mut matched, mut accurate) = (0usize, 0usize);
    for seed in 0..200u64 {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let k = 1 + (seed % 3) as usize;
        let a = CMatrix::from_fn(rows, cols, |_, _| cn(&mut rng));
        let mut x = CVector::zeros(cols);
        for &j in rand::seq::index::sample(&mut rng, cols, k)
            .iter()
            .collect::<Vec<_>>()
            .iter()
        {
            x[j] = cn(&mut rng);
        }
        let r = &a * &x;

        let mut best = (f64::INFINITY, Vec::new());
        for s in &subsets[k] {
            let sub = a.select_columns(s.iter());
            let fit = least_squares(&sub, &r, DEFAULT_RANK_TOL).unwrap();
            let res = (&r - &sub * &fit.x).norm();
            if res < best.0 {
                best = (res, s.clone());
            }
        }
        let out = subspace_pursuit(&a, &r, k, default_max_iter(k)).unwrap();
        if out.support == best.1 {
            matched += 1;
            if (&out.h_hat - &x).norm() <= 1e-8 * x.norm() {
                accurate += 1;
            }
        }
    }
    let secs = start.elapsed().as_secs_f64();
    let rate = matched as f64 / 200.0;
    report(
        2,
        rate >= 0.95 && accurate == matched && secs < 120.0,
        &format!(
            "support match {matched}/200 ({:.1}%, ≥ 95%), {accurate}/{matched} matched within 1e-8, {secs:.1} s",
            100.0 * rate
        ),
    )
}

/// Timing offsets that reproduce the same received signal as `theta` for `h`.
fn equivalent_thetas(cfg: &SystemConfig, h: &SparseChannel, theta: i64) -> Vec<i64> {
    (0..=cfg.theta_max as i64)
        .filter(|&t| {
            let d = t - theta;
            h.supports.iter().all(|s| {
                s.iter().all(|&l| {
                    let moved = l as i64 - d;
                    moved >= 0 && moved < cfg.taps as i64
                })
            })
        })
        .collect()
}

struct Trial {
    cfg: SystemConfig,
    pilots: PilotBlock,
    h: SparseChannel,
    sel: MeasurementSelection,
    r_u: CVector,
}

fn noiseless_trial(seed: u64, m: usize, truth: &ImpairmentParams) -> Trial {
    let cfg = SystemConfig::reference();
    let pilots = PilotBlock::qpsk(&cfg, 77);
    let h = generate_channel(&cfg, seed).unwrap();
    let sel = select_samples(&cfg, m, seed + 10_000).unwrap();
    let a1u = subsampled_a1(&cfg, &pilots, truth, &sel).unwrap();
    let r_u = received_signal(&a1u, &h.taps, &NoiseSpec::noiseless(), 0).unwrap();
    Trial {
        cfg,
        pilots,
        h,
        sel,
        r_u,
    }
}

/// Exact recovery: grid point exact, θ̂ the truth (or a model-equivalent
/// offset when the channel leaves room to shift), channel error ≤ 1e-6.
fn exact(
    t: &Trial,
    truth: &ImpairmentParams,
    method: Method,
    grid: &GridSpec,
) -> (bool, bool, f64) {
    let res = estimate(
        method,
        &t.r_u,
        &t.sel,
        grid,
        &t.cfg,
        &t.pilots,
        &EstimatorOptions::default(),
    )
    .unwrap();
    let eq = equivalent_thetas(&t.cfg, &t.h, truth.theta);
    let identifiable = eq == vec![truth.theta];
    let rel = (aligned_channel_error(&t.cfg, &res.h_hat, res.theta_hat, &t.h, truth.theta)
        .unwrap()
        / t.h.taps.norm_squared())
    .sqrt();
    let ok = (res.epsilon_hat - truth.epsilon).abs() < 1e-9
        && (res.eta_hat - truth.eta).abs() < 1e-12
        && eq.contains(&res.theta_hat)
        && (!identifiable || res.theta_hat == truth.theta)
        && rel <= 1e-6;
    (ok, identifiable, rel)
}

fn criterion_3_noiseless_exactness() -> bool {
    let start = Instant::now();
    let grid0 = GridSpec::reference(5);
    let truth = ImpairmentParams::new(grid0.nearest_eps(0.1), grid0.nearest_eta(1e-4), 2);
    let grid = GridSpec::around(truth.epsilon, truth.eta, 0.05, 5e-4, 5);

    let (mut sp_ok, mut sp_ident, mut sp_ident_ok) = (0, 0, 0);
    for seed in 0..20u64 {
        let t = noiseless_trial(seed, 45, &truth);
        let (ok, ident, _) = exact(&t, &truth, Method::Mlsp, &grid);
        sp_ok += ok as usize;
        sp_ident += ident as usize;
        sp_ident_ok += (ok && ident) as usize;
    }

    let mut ls_failed = 0;
    for seed in 0..50u64 {
        let t = noiseless_trial(seed, 45, &truth);
        let res = estimate(
            Method::Mlls,
            &t.r_u,
            &t.sel,
            &grid,
            &t.cfg,
            &t.pilots,
            &EstimatorOptions::default(),
        )
        .unwrap();
        let rel = (aligned_channel_error(&t.cfg, &res.h_hat, res.theta_hat, &t.h, truth.theta)
            .unwrap()
            / t.h.taps.norm_squared())
        .sqrt();
        ls_failed += (rel > 0.1) as usize;
    }

    let mut ls75_ok = 0;
    for seed in 0..10u64 {
        let t = noiseless_trial(seed, 75, &truth);
        ls75_ok += exact(&t, &truth, Method::Mlls, &grid).0 as usize;
    }
    let secs = start.elapsed().as_secs_f64();
    report(
        3,
        sp_ok == 20 && ls_failed >= 45 && ls75_ok == 10,
        &format!(
            "MLSP M=45 exact {sp_ok}/20 ({sp_ident_ok}/{sp_ident} with a unique timing, the rest up to a \
             model-equivalent shift); MLLS M=45 channel error > 0.1 in {ls_failed}/50 (≥ 45); \
             MLLS M=75 exact {ls75_ok}/10; reduced grid, {secs:.1} s"
        ),
    )
}

struct SweepData {
    plan: SweepPlan,
    records: Vec<TrialRecord>,
    seconds: f64,
}

fn sweep() -> &'static SweepData {
    static DATA: OnceLock<SweepData> = OnceLock::new();
    DATA.get_or_init(|| {
        let mut plan = SweepPlan::reference();
        let full = GridSpec::reference(5);
        plan.grids = GridSpec::around(
            full.nearest_eps(0.102),
            full.nearest_eta(1.01e-4),
            0.05,
            5e-4,
            5,
        );
        plan.trials = 200;
        let start = Instant::now();
        let records = run_trials(&plan).unwrap();
        SweepData {
            plan,
            records,
            seconds: start.elapsed().as_secs_f64(),
        }
    })
}

fn summary_over(trials: usize) -> SweepSummary {
    let data = sweep();
    let mut plan = data.plan.clone();
    plan.trials = trials;
    let subset: Vec<TrialRecord> = data
        .records
        .iter()
        .filter(|r| r.trial < trials)
        .cloned()
        .collect();
    summarize(&plan, &subset).unwrap()
}

fn curve(
    s: &SweepSummary,
    m: Method,
    f: impl Fn(&mlsync::evaluation::MethodSummary) -> (f64, f64),
) -> Vec<(f64, f64, f64)> {
    s.rows
        .iter()
        .map(|row| {
            let (v, se) = f(row.method(m).unwrap());
            (row.snr_db, v, se)
        })
        .collect()
}

fn fmt_curve(c: &[(f64, f64, f64)]) -> String {
    c.iter()
        .map(|(_, v, se)| format!("{v:.2e}±{se:.1e}"))
        .collect::<Vec<_>>()
        .join(" → ")
}

fn criterion_4_mse_curves() -> bool {
    let s = summary_over(100);
    let eps = curve(&s, Method::Mlsp, |m| {
        (m.mse_epsilon.unwrap(), m.se_epsilon.unwrap())
    });
    let eta = curve(&s, Method::Mlsp, |m| {
        (m.mse_eta.unwrap(), m.se_eta.unwrap())
    });
    let chan = curve(&s, Method::Mlsp, |m| {
        (m.mse_channel.unwrap(), m.se_channel.unwrap())
    });
    let ls = curve(&s, Method::Mlls, |m| {
        (m.mse_channel.unwrap(), m.se_channel.unwrap())
    });
    let pooled = |a: &(f64, f64, f64), b: &(f64, f64, f64)| (a.2 * a.2 + b.2 * b.2).sqrt();
    let decreasing = |c: &[(f64, f64, f64)]| {
        c.windows(2)
            .all(|w| w[1].1 <= w[0].1 + pooled(&w[0], &w[1]))
    };
    // The failure floor: no drop beyond one pooled standard error between
    // consecutive SNR points that both lie above 10 dB.
    let floor = ls
        .windows(2)
        .filter(|w| w[0].0 > 10.0)
        .all(|w| w[1].1 >= w[0].1 - pooled(&w[0], &w[1]));
    let pass = decreasing(&eps) && decreasing(&eta) && decreasing(&chan) && floor;
    report(
        4,
        pass,
        &format!(
            "100 trials at 0/10/20/30 dB, M=45: MLSP ε {} ; η {} ; channel {} ; MLLS channel {} ; sweep {:.0} s",
            fmt_curve(&eps),
            fmt_curve(&eta),
            fmt_curve(&chan),
            fmt_curve(&ls),
            sweep().seconds
        ),
    )
}

fn criterion_5_timing_failure() -> bool {
    let s = summary_over(200);
    let mut pass = true;
    let mut detail = Vec::new();
    for row in s.rows.iter().filter(|r| r.snr_db >= 20.0) {
        let sp = row.method(Method::Mlsp).unwrap().ptf.unwrap();
        let ls = row.method(Method::Mlls).unwrap().ptf.unwrap();
        pass &= sp <= ls;
        detail.push(format!("{} dB: MLSP {sp:.3} vs MLLS {ls:.3}", row.snr_db));
    }
    report(
        5,
        pass,
        &format!("P_tf(2) over 200 trials, {}", detail.join(", ")),
    )
}

fn criterion_6_crlb_sanity() -> bool {
    let s = summary_over(200);
    let mut above = true;
    let mut gaps_ok = true;
    let mut detail = Vec::new();
    for row in s.rows.iter().filter(|r| r.snr_db >= 20.0) {
        let m = row.method(Method::Mlsp).unwrap();
        let c = row.crlb.unwrap();
        let (e, n) = (m.mse_epsilon.unwrap(), m.mse_eta.unwrap());
        above &= e > 0.5 * c.epsilon && n > 0.5 * c.eta;
        let gap = |mse: f64, bound: f64| 10.0 * (mse / bound).log10();
        let (ge, gn, gh) = (
            gap(e, c.epsilon),
            gap(n, c.eta),
            gap(m.mse_channel.unwrap(), c.trace_h),
        );
        if row.snr_db >= 30.0 {
            gaps_ok &= (6.0..=24.0).contains(&ge) && (6.0..=24.0).contains(&gn);
        }
        detail.push(format!(
            "{} dB: MSE/CRLB ε {e:.2e}/{:.2e} ({ge:+.1} dB), η {n:.2e}/{:.2e} ({gn:+.1} dB), channel ({gh:+.1} dB)",
            row.snr_db, c.epsilon, c.eta
        ));
    }
    report(
        6,
        above && gaps_ok,
        &format!(
            "MLSP above 0.5·CRLB: {}; 30 dB gap in [6, 24] dB: {}; {}",
            if above { "yes" } else { "no" },
            if gaps_ok { "yes" } else { "no" },
            detail.join("; ")
        ),
    )
}

fn criterion_7_complexity_trend() -> bool {
    // Subcarriers scale with the channel length so the least-squares system
    // keeps its aspect ratio; K stays at 5 per pair.
    let cfgs: Vec<SystemConfig> = [(64usize, 13usize), (128, 26), (256, 52)]
        .iter()
        .map(|&(n, l)| SystemConfig {
            subcarriers: n,
            taps: l,
            cp_len: 64,
            ..SystemConfig::reference()
        })
        .collect();
    let rows = complexity_trend(&cfgs, 30, 3).unwrap();
    let mut pass = true;
    let mut detail = Vec::new();
    for w in rows.windows(2) {
        let ls = w[1].mean_ls.as_secs_f64() / w[0].mean_ls.as_secs_f64();
        let sp = w[1].mean_sp.as_secs_f64() / w[0].mean_sp.as_secs_f64();
        pass &= ls >= 4.0 && sp <= 3.0;
        detail.push(format!(
            "{}→{} unknowns: LS ×{ls:.2}, SP ×{sp:.2}",
            w[0].unknowns, w[1].unknowns
        ));
    }
    report(7, pass, &format!("{} (LS ≥ 4, SP ≤ 3)", detail.join("; ")))
}

fn criterion_8_determinism() -> bool {
    let mut cfg = ExperimentConfig::default();
    let full = GridSpec::reference(5);
    cfg.grid = GridSpec::around(
        full.nearest_eps(0.102),
        full.nearest_eta(1.01e-4),
        0.03,
        3e-4,
        5,
    );
    cfg.trials = 6;
    cfg.snr_db = vec![5.0, 25.0];
    let dir = tempfile::tempdir().unwrap();
    let mut outputs = Vec::new();
    for (i, workers) in [1usize, 4, 1, 4].iter().enumerate() {
        cfg.workers = Some(*workers);
        let plan = cfg.plan().unwrap();
        let summary = summarize(&plan, &run_trials(&plan).unwrap()).unwrap();
        let out = dir.path().join(format!("run{i}"));
        // Worker count is echoed in meta.txt, so only the CSVs are compared.
        write_report(&out, &cfg, &summary).unwrap();
        outputs.push(CSV_FILES.map(|f| std::fs::read(out.join(f)).unwrap()));
    }
    let identical = outputs.windows(2).all(|w| w[0] == w[1]);
    report(
        8,
        identical,
        "4 reruns (workers 1, 4, 1, 4) of a 6-trial, 2-SNR sweep produce byte-identical CSVs",
    )
}

fn main() {
    let criteria: [fn() -> bool; 8] = [
        criterion_1_model_consistency,
        criterion_2_pursuit_matches_exhaustive_search,
        criterion_3_noiseless_exactness,
        criterion_4_mse_curves,
        criterion_5_timing_failure,
        criterion_6_crlb_sanity,
        criterion_7_complexity_trend,
        criterion_8_determinism,
    ];
    let failed = criteria.iter().filter(|c| !c()).count();
    println!(
        "acceptance: {} passed, {failed} failed",
        criteria.len() - failed
    );
    if failed > 0 {
        std::process::exit(1);
    }
}
