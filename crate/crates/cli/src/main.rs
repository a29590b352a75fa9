use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use hierpi::harness::{self, export, load_scenario, Format, Mode, Scenario};
use hierpi::oracle::{self, LqInstance, LQ_STATES};
use hierpi::parallel::{map_indexed, threads_from_env, with_workers};
use hierpi::HarnessError;

#[derive(Parser)]
#[command(name = "hierpi", version, about = "Hierarchical PD / path-integral controller runs and checks")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum ModeArg {
    Pd,
    Hybrid,
}

impl From<ModeArg> for Mode {
    fn from(m: ModeArg) -> Self {
        match m {
            ModeArg::Pd => Mode::PdOnly,
            ModeArg::Hybrid => Mode::Hybrid,
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum FormatArg {
    Csv,
    Json,
    Both,
}

impl FormatArg {
    fn formats(self) -> Vec<(Format, &'static str)> {
        match self {
            FormatArg::Csv => vec![(Format::Csv, "csv")],
            FormatArg::Json => vec![(Format::Json, "json")],
            FormatArg::Both => vec![(Format::Csv, "csv"), (Format::Json, "json")],
        }
    }
}

#[derive(Subcommand)]
enum Command {
    /// Run one episode and write its trajectory.
    Run {
        #[arg(long)]
        scenario: PathBuf,
        #[arg(long, value_enum)]
        mode: ModeArg,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, value_enum, default_value = "both")]
        format: FormatArg,
    },
    /// Run seeded episodes and write per-step statistics.
    Batch {
        #[arg(long)]
        scenario: PathBuf,
        #[arg(long, value_enum)]
        mode: ModeArg,
        /// Number of runs (default: the scenario's seed count).
        #[arg(long)]
        runs: Option<usize>,
        /// First seed (default: the scenario's base seed).
        #[arg(long)]
        base_seed: Option<u64>,
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long, value_enum, default_value = "both")]
        format: FormatArg,
        /// Also write every run's trajectory CSV.
        #[arg(long)]
        logs: bool,
    },
    /// Check a scenario file and print it fully resolved.
    Validate {
        #[arg(long)]
        scenario: PathBuf,
    },
    /// Numerical reference checks.
    Oracle {
        #[command(subcommand)]
        which: OracleCmd,
    },
}

#[derive(Subcommand)]
enum OracleCmd {
    /// Sampled controller vs the Riccati feedback on a scalar LQ problem.
    Lq {
        #[arg(long, default_value_t = 100_000)]
        samples: usize,
        #[arg(long, default_value_t = 50)]
        seeds: u64,
        /// Allowed relative error of the seed-averaged estimate.
        #[arg(long, default_value_t = 0.1)]
        tol: f64,
    },
    /// Task derivatives vs finite differences at random states.
    Fd {
        #[arg(long, default_value_t = 500)]
        states: usize,
        #[arg(long, default_value_t = 1e-5)]
        h: f64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
}

enum Failure {
    Harness(HarnessError),
    Check(String),
}

impl From<HarnessError> for Failure {
    fn from(e: HarnessError) -> Self {
        Failure::Harness(e)
    }
}

impl From<hierpi::Error> for Failure {
    fn from(e: hierpi::Error) -> Self {
        Failure::Harness(HarnessError::Numerical(e))
    }
}

fn exit_code(e: &HarnessError) -> u8 {
    match e {
        HarnessError::Parse { .. } | HarnessError::Validation { .. } => 2,
        HarnessError::Numerical(_) | HarnessError::BatchFailed { .. } => 3,
        HarnessError::Io { .. } | HarnessError::Csv(_) | HarnessError::Json(_) => 1,
    }
}

fn create_dir(dir: &Path) -> Result<(), HarnessError> {
    std::fs::create_dir_all(dir).map_err(|e| HarnessError::io(dir, e))
}

fn run(scenario: &Path, mode: Mode, seed: u64, out: &Path, format: FormatArg) -> Result<(), Failure> {
    let scn = load_scenario(scenario)?;
    let log = harness::run_episode(&scn, mode, seed)?;
    create_dir(out)?;
    for (f, ext) in format.formats() {
        export::export_log(&log, scn.goal_point(), out.join(format!("trajectory.{ext}")), f)?;
    }
    let s = &log.summary;
    println!(
        "final_goal_distance={:.6} min_obstacle_distance={:.6} penetrated={} oscillation_sign_changes={} degenerate_steps={} sampler_calls={}",
        s.final_goal_distance, s.min_obstacle_distance, s.penetrated, s.oscillation_sign_changes, s.degenerate_steps, log.sampler_calls
    );
    if let Some(e) = s.mean_spacing_error {
        println!("mean_spacing_error={e:.6}");
    }
    Ok(())
}

#[allow(clippy::too_many_arguments)]
fn batch(
    scenario: &Path,
    mode: Mode,
    runs: Option<usize>,
    base_seed: Option<u64>,
    out: Option<&Path>,
    format: FormatArg,
    logs: bool,
) -> Result<(), Failure> {
    let scn = load_scenario(scenario)?;
    let runs = runs.unwrap_or(scn.seeds.count);
    let base = base_seed.unwrap_or(scn.seeds.base);
    let result = harness::run_batch(&scn, mode, runs, base)?;
    let st = &result.stats;
    if let Some(out) = out {
        create_dir(out)?;
        for (f, ext) in format.formats() {
            export::export_stats(st, out.join(format!("batch.{ext}")), f)?;
        }
        if logs {
            for log in &result.logs {
                let path = out.join(format!("run_{}.csv", log.seed));
                export::export_log(log, scn.goal_point(), path, Format::Csv)?;
            }
        }
    }
    for (seed, msg) in &result.failures {
        eprintln!("seed {seed} failed: {msg}");
    }
    println!(
        "runs={} completed={} success={} reached={} penetrated={} oscillating={} final_goal_mean={:.6}",
        st.runs,
        st.completed,
        st.success_count,
        st.reached_count,
        st.penetration_count,
        st.oscillating_count,
        st.goal_mean.last().copied().unwrap_or(f64::NAN)
    );
    if let Some(e) = st.mean_spacing_error {
        println!("mean_spacing_error={e:.6}");
    }
    Ok(())
}

fn validate(scenario: &Path) -> Result<(), Failure> {
    let scn: Scenario = load_scenario(scenario)?;
    println!("{}", scn.to_json_pretty());
    Ok(())
}

fn oracle_lq(samples: usize, seeds: u64, tol: f64) -> Result<(), Failure> {
    let inst = LqInstance::default();
    let mut worst: f64 = 0.0;
    println!("x0\triccati\tmean_estimate\trel_err");
    for &x in &LQ_STATES {
        let reference = inst.reference(x);
        let est = map_indexed(seeds as usize, |s| inst.estimate(x, samples, s as u64));
        let est = est.into_iter().collect::<Result<Vec<_>, _>>()?;
        let mean = est.iter().sum::<f64>() / est.len() as f64;
        let rel = (mean - reference).abs() / reference.abs();
        worst = worst.max(rel);
        println!("{x}\t{reference:.6}\t{mean:.6}\t{rel:.4}");
    }
    if worst <= tol {
        println!("pass: worst relative error {worst:.4} <= {tol}");
        Ok(())
    } else {
        Err(Failure::Check(format!("worst relative error {worst:.4} > {tol}")))
    }
}

fn oracle_fd(states: usize, h: f64, seed: u64) -> Result<(), Failure> {
    let rows = oracle::fd_suite(states, seed, h)?;
    let mut ok = true;
    println!("task\tstates\tmax_rel_err\tratio_h_over_half_h");
    for r in &rows {
        let ratio_ok = r.ratio.is_none_or(|q| (1.5..=2.5).contains(&q));
        ok &= r.max_err < 1e-4 && ratio_ok;
        let ratio = r.ratio.map_or_else(|| "exact".to_string(), |q| format!("{q:.3}"));
        println!("{}\t{}\t{:.3e}\t{}", r.task, r.states, r.max_err, ratio);
    }
    if ok {
        println!("pass");
        Ok(())
    } else {
        Err(Failure::Check("finite-difference check failed".into()))
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    let outcome = with_workers(threads_from_env(), || match cli.command {
        Command::Run {
            scenario,
            mode,
            seed,
            out,
            format,
        } => run(&scenario, mode.into(), seed, &out, format),
        Command::Batch {
            scenario,
            mode,
            runs,
            base_seed,
            out,
            format,
            logs,
        } => batch(&scenario, mode.into(), runs, base_seed, out.as_deref(), format, logs),
        Command::Validate { scenario } => validate(&scenario),
        Command::Oracle { which } => match which {
            OracleCmd::Lq { samples, seeds, tol } => oracle_lq(samples, seeds, tol),
            OracleCmd::Fd { states, h, seed } => oracle_fd(states, h, seed),
        },
    });
    match outcome {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Harness(e)) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
        Err(Failure::Check(msg)) => {
            eprintln!("check failed: {msg}");
            ExitCode::from(3)
        }
    }
}

#[global_allocator]
static GLOBAL: mimalloc::MiMalloc = mimalloc::MiMalloc;
