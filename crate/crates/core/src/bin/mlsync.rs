use std::path::PathBuf;
use std::time::Instant;

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand};

use mlsync::config::{load_config, ExperimentConfig};
use mlsync::estimator::Method;
use mlsync::evaluation::{
    aligned_channel_error, complexity_trend, mean_wall_times, run_trials, summarize,
};
use mlsync::model::SystemConfig;
use mlsync::report::write_report;

/// Joint CFO/SFO/timing/sparse-channel estimation simulator.
#[derive(Parser)]
#[command(name = "mlsync", version, about)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the Monte Carlo SNR sweep and write CSVs plus meta.txt.
    Sweep {
        config: PathBuf,
        /// Overrides `output_dir` and $MLSYNC_OUTPUT_DIR.
        #[arg(long)]
        output_dir: Option<PathBuf>,
    },
    /// Run one trial and print truth, estimates, costs and timing.
    Single {
        config: PathBuf,
        #[arg(long, value_parser = parse_snr, allow_negative_numbers = true)]
        snr: f64,
        #[arg(long)]
        seed: u64,
        #[arg(long)]
        noiseless: bool,
    },
    /// Time one SP and one LS channel fit on systems of growing size.
    Bench {
        config: PathBuf,
        #[arg(long, default_value_t = 20)]
        reps: usize,
    },
    /// Check a config and print it with every default filled in.
    Validate { config: PathBuf },
}

fn parse_snr(s: &str) -> std::result::Result<f64, String> {
    match s.trim().parse::<f64>() {
        Ok(v) if v.is_finite() => Ok(v),
        _ => Err(format!("`{s}` is not a finite SNR in dB")),
    }
}

fn load(path: &PathBuf) -> Result<ExperimentConfig> {
    load_config(path).with_context(|| format!("loading {}", path.display()))
}

fn warnings(cfg: &ExperimentConfig) -> Vec<String> {
    let mut out = Vec::new();
    let rows = cfg.measurements * cfg.system.rx;
    if cfg.estimators.contains(&Method::Mlls) && cfg.ls_underdetermined() {
        out.push(format!(
            "MLLS is under-determined: M·N_R = {rows} < {} channel unknowns; its channel fit is not unique",
            cfg.system.channel_len()
        ));
    }
    let k = cfg.system.total_sparsity();
    if cfg.estimators.contains(&Method::Mlsp) && 2 * k > rows {
        out.push(format!(
            "MLSP merged support 2K = {} exceeds the {rows} kept samples",
            2 * k
        ));
    }
    out
}

fn sweep(path: &PathBuf, output_dir: Option<PathBuf>) -> Result<()> {
    let cfg = load(path)?;
    for w in warnings(&cfg) {
        eprintln!("warning: {w}");
    }
    let plan = cfg.plan()?;
    let dir = output_dir.unwrap_or_else(|| cfg.resolved_output_dir());
    let start = Instant::now();
    let records = run_trials(&plan)?;
    let summary = summarize(&plan, &records)?;
    let written = write_report(&dir, &cfg, &summary)
        .with_context(|| format!("writing results to {}", dir.display()))?;
    eprintln!(
        "{} trials x {} SNR points in {:.1?}",
        plan.trials,
        plan.snr_db.len(),
        start.elapsed()
    );
    for (m, t) in mean_wall_times(&plan, &records) {
        eprintln!("  {m}: {t:.1?} per trial");
    }
    for p in written {
        println!("{}", p.display());
    }
    Ok(())
}

fn single(path: &PathBuf, snr: f64, seed: u64, noiseless: bool) -> Result<()> {
    let mut cfg = load(path)?;
    cfg.noiseless |= noiseless;
    for w in warnings(&cfg) {
        eprintln!("warning: {w}");
    }
    let plan = cfg.plan()?;
    let setup = plan.setup(seed)?;
    let record = plan.run_trial(0, &setup, snr)?;
    let shift = plan.theta_shift;
    let t = &record.truth;
    println!("seed        {seed}");
    if plan.noiseless {
        println!("snr         noiseless");
    } else {
        println!(
            "snr         {snr} dB (noise variance {:.4e})",
            record.sigma_sq
        );
    }
    println!(
        "truth       epsilon {:.6}  eta {:.4e}  theta {}",
        t.epsilon,
        t.eta,
        t.theta - shift
    );
    for run in &record.runs {
        match &run.result {
            Ok(r) => {
                let err = aligned_channel_error(
                    &plan.system,
                    &r.h_hat,
                    r.theta_hat,
                    &record.channel,
                    t.theta,
                )?;
                println!(
                    "{:<11} epsilon {:.6}  eta {:.4e}  theta {}",
                    run.method.name(),
                    r.epsilon_hat,
                    r.eta_hat,
                    r.theta_hat - shift
                );
                println!(
                    "            J1 {:.6e} ({} points)  J2 {:.6e} ({} points)  failed points {}",
                    r.min_cost_j1, r.j1_evals, r.min_cost_j2, r.j2_evals, r.failed_points
                );
                println!(
                    "            channel error {:.6e} (relative {:.3e})  wall time {:.1?}",
                    err,
                    (err / record.channel.taps.norm_squared()).sqrt(),
                    run.wall_time
                );
            }
            Err(e) => println!("{:<11} failed: {e}", run.method.name()),
        }
    }
    if let Some(c) = record.crlb {
        println!(
            "crlb        epsilon {:.4e}  eta {:.4e}  trace(h) {:.4e}",
            c.epsilon, c.eta, c.trace_h
        );
    }
    Ok(())
}

/// Doubling ladder of systems: the number of subcarriers grows with the
/// channel length so the least-squares problem keeps its shape.
fn ladder(base: SystemConfig) -> Vec<SystemConfig> {
    let start = if base.taps.is_multiple_of(2) && base.subcarriers.is_multiple_of(2) {
        (base.subcarriers / 2, base.taps / 2)
    } else {
        (base.subcarriers, base.taps)
    };
    [1, 2, 4]
        .iter()
        .map(|&f| {
            let taps = start.1 * f;
            SystemConfig {
                subcarriers: start.0 * f,
                taps,
                sparsity: base.sparsity.min(taps),
                cp_len: base.cp_len.max(taps + base.theta_max + 1),
                ..base
            }
        })
        .collect()
}

fn bench(path: &PathBuf, reps: usize) -> Result<()> {
    let cfg = load(path)?;
    if reps == 0 {
        bail!("--reps must be at least 1");
    }
    let rows = complexity_trend(&ladder(cfg.system), reps, cfg.master_seed)?;
    println!("unknowns,rows,k_total,sp_seconds,ls_seconds");
    for r in &rows {
        println!(
            "{},{},{},{:e},{:e}",
            r.unknowns,
            r.rows,
            r.sparsity,
            r.mean_sp.as_secs_f64(),
            r.mean_ls.as_secs_f64()
        );
    }
    for pair in rows.windows(2) {
        eprintln!(
            "{} -> {} unknowns: SP x{:.2}, LS x{:.2}",
            pair[0].unknowns,
            pair[1].unknowns,
            pair[1].mean_sp.as_secs_f64() / pair[0].mean_sp.as_secs_f64(),
            pair[1].mean_ls.as_secs_f64() / pair[0].mean_ls.as_secs_f64()
        );
    }
    Ok(())
}

fn validate(path: &PathBuf) -> Result<()> {
    let cfg = load(path)?;
    for w in warnings(&cfg) {
        eprintln!("warning: {w}");
    }
    print!("{}", cfg.to_toml()?);
    eprintln!(
        "ok: {} stage-one grid points, timing shift {}, output dir {}",
        cfg.grid.stage_one_points(),
        cfg.theta_shift(),
        cfg.resolved_output_dir().display()
    );
    Ok(())
}

fn main() -> Result<()> {
    match Cli::parse().command {
        Command::Sweep { config, output_dir } => sweep(&config, output_dir),
        Command::Single {
            config,
            snr,
            seed,
            noiseless,
        } => single(&config, snr, seed, noiseless),
        Command::Bench { config, reps } => bench(&config, reps),
        Command::Validate { config } => validate(&config),
    }
}
