//! Command-line surface: config ingestion, experiment orchestration,
//! deterministic output artifacts.
//!
//! Exit codes: 0 success with artifacts written, 2 config/input error,
//! 3 runtime error (blow-up, budget). Diagnostics go to stderr; data goes to
//! files only. Output files are written after all computation succeeds, so a
//! zero exit never leaves partial output. Except for a timestamp confined
//! to `summary.json` under `meta`, repeated runs with the same
//! config and seed produce byte-identical files.

use std::ffi::OsString;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use clap::{Args, Parser, Subcommand};
use serde::Serialize;

use crate::config::{resolve_config, ExperimentConfig};
use crate::error::{Error, Result};
use crate::integrate::flow_endpoint;
use crate::lab::{
    extremize_functional, joint_sweep, slack_budget, sweep_omega, sweep_state, sweep_time,
    SweepReport,
};
use crate::metric::{
    directed_hausdorff, square_wave, weak_star_discrepancy, PointCloud, TestFunctionDictionary,
};
use crate::reach::{convergence_study, reachable_cloud, ReachSpec, SampleMode};
use crate::system::PiecewiseConstantControl;
use crate::vecn;

const CONFIG_HELP: &str = "\
CONFIG DOCUMENT (TOML):
  x0 = [..]           initial state, length n            (required)
  t = 1.0             horizon                            (required)
  output_dir = \"out\"  default output directory           (optional)

  [system]            n, m, drift = [expr,..], f1 = [expr,..], .., fm
                      expressions use x0..x{n-1}, + - * / ^, unary -,
                      sin cos exp tanh abs sqrt
  [omega]             kind = \"box\" (lower, upper) | \"ball\" (center, radius)
                      | \"hull\" (vertices)
  [spec]              N = 2 (switching pieces)   k = 4 (net resolution)
                      h = 0.01 (step)            r = 0.005 (dedup)
                      mode = \"exhaustive\" | \"random\"
                      seed = 0   samples = 2000  budget = 2000000
  [experiment]        deltas = [..]       probes = 8
                      functional = \"expr\" dictionary_depth = 4
                      chatter_switches = [4, 8, 16, 32]   levels = 4
                      kind = \"..\" (informational label; the subcommand
                      decides what runs)

Unknown or duplicate keys are errors. `--config` accepts a file path or a
demo name: single_integrator, double_integrator, linear2d, vanderpol,
bilinear. Set REACHLAB_JOBS or --jobs to bound worker threads.";

#[derive(Parser)]
#[command(
    name = "reachlab",
    version,
    about = "Reachable-set clouds of control-affine systems and Hausdorff continuity experiments",
    after_long_help = CONFIG_HELP
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct RunOpts {
    /// Config file path or built-in demo name
    #[arg(long)]
    config: String,
    /// Output directory (default: config output_dir, else ./out)
    #[arg(long)]
    out: Option<PathBuf>,
    /// Override the sampling seed
    #[arg(long)]
    seed: Option<u64>,
    /// Override the horizon
    #[arg(long)]
    t: Option<f64>,
    /// Override experiment deltas (repeat per value)
    #[arg(long = "delta")]
    deltas: Vec<f64>,
    /// Worker threads (default: available parallelism; REACHLAB_JOBS as fallback)
    #[arg(long)]
    jobs: Option<usize>,
}

#[derive(Args)]
struct SweepOpts {
    #[command(flatten)]
    run: RunOpts,
    /// Also write base and per-row clouds under dumps/
    #[arg(long)]
    dump_clouds: bool,
}

#[derive(Subcommand)]
enum Command {
    /// Build a reachable cloud; writes cloud.csv and summary.json
    Reach(RunOpts),
    /// Hausdorff distance between two cloud CSV files; writes summary.json
    Hausdorff {
        a: PathBuf,
        b: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Perturb the control range; writes rows.csv and verdict.json
    SweepOmega(SweepOpts),
    /// Perturb the horizon; writes rows.csv and verdict.json
    SweepTime(SweepOpts),
    /// Perturb the start state; writes rows.csv and verdict.json
    SweepState(SweepOpts),
    /// Perturb horizon, state and range jointly; writes rows.csv and verdict.json
    SweepJoint(SweepOpts),
    /// Extremize the configured functional over the reachable cloud
    Optimize(RunOpts),
    /// Refinement convergence study; writes rows.csv and verdict.json
    Converge(RunOpts),
    /// Chattering-control discrepancy and endpoint study
    Weakstar(RunOpts),
}

/// Run the CLI on the given argv; returns the process exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return 2;
        }
    };
    match dispatch(cli) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            if e.is_config_error() {
                2
            } else {
                3
            }
        }
    }
}

fn dispatch(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Reach(opts) => cmd_reach(opts),
        Command::Hausdorff { a, b, out } => cmd_hausdorff(&a, &b, out),
        Command::SweepOmega(opts) => cmd_sweep(opts, SweepWhich::Omega),
        Command::SweepTime(opts) => cmd_sweep(opts, SweepWhich::Time),
        Command::SweepState(opts) => cmd_sweep(opts, SweepWhich::State),
        Command::SweepJoint(opts) => cmd_sweep(opts, SweepWhich::Joint),
        Command::Optimize(opts) => cmd_optimize(opts),
        Command::Converge(opts) => cmd_converge(opts),
        Command::Weakstar(opts) => cmd_weakstar(opts),
    }
}

fn init_jobs(jobs: Option<usize>) {
    #[cfg(feature = "parallel")]
    {
        let requested = jobs.or_else(|| {
            std::env::var("REACHLAB_JOBS")
                .ok()
                .and_then(|s| s.parse().ok())
        });
        if let Some(n) = requested {
            if n >= 1 {
                // build_global fails if a pool already exists; keep the first
                let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
            }
        }
    }
    #[cfg(not(feature = "parallel"))]
    let _ = jobs;
}

fn prepare(opts: &RunOpts) -> Result<(ExperimentConfig, PathBuf)> {
    init_jobs(opts.jobs);
    let mut cfg = resolve_config(&opts.config)?;
    if let Some(t) = opts.t {
        if !(t > 0.0) || !t.is_finite() {
            return Err(Error::Config("--t must be a positive horizon".into()));
        }
        cfg.horizon = t;
    }
    if let Some(seed) = opts.seed {
        if let SampleMode::Random { samples, .. } = cfg.spec.mode {
            cfg.spec.mode = SampleMode::Random { seed, samples };
        }
    }
    if !opts.deltas.is_empty() {
        if opts.deltas.iter().any(|&d| !(d > 0.0) || !d.is_finite()) {
            return Err(Error::Config("--delta values must be positive".into()));
        }
        cfg.experiment.deltas = opts.deltas.clone();
    }
    let out = opts
        .out
        .clone()
        .or_else(|| cfg.output_dir.clone())
        .unwrap_or_else(|| PathBuf::from("out"));
    Ok((cfg, out))
}

fn write_file(dir: &Path, name: &str, contents: &str) -> Result<()> {
    fs::create_dir_all(dir)?;
    fs::write(dir.join(name), contents)?;
    Ok(())
}

fn cloud_csv(cloud: &PointCloud) -> String {
    let mut out = String::new();
    let header: Vec<String> = (0..cloud.dim()).map(|i| format!("x{i}")).collect();
    out.push_str(&header.join(","));
    out.push('\n');
    for p in cloud.points() {
        let row: Vec<String> = p.iter().map(|v| format!("{v}")).collect();
        out.push_str(&row.join(","));
        out.push('\n');
    }
    out
}

fn read_cloud_csv(path: &Path) -> Result<PointCloud> {
    let text = fs::read_to_string(path)
        .map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
    let mut lines = text.lines();
    let header = lines
        .next()
        .ok_or_else(|| Error::Config(format!("{} is empty", path.display())))?;
    let dim = header.split(',').count();
    let mut points = Vec::new();
    for (i, line) in lines.enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let p: Vec<f64> = line
            .split(',')
            .map(|f| {
                f.parse::<f64>().map_err(|_| {
                    Error::Config(format!("{}: bad value `{f}` on row {}", path.display(), i + 1))
                })
            })
            .collect::<Result<_>>()?;
        if p.len() != dim {
            return Err(Error::Config(format!(
                "{}: row {} has {} fields, header has {dim}",
                path.display(),
                i + 1,
                p.len()
            )));
        }
        points.push(p);
    }
    PointCloud::new(dim, points)
        .map_err(|e| Error::Config(format!("{}: {e}", path.display())))
}

#[derive(Serialize)]
struct SpecDoc {
    switches: usize,
    values: usize,
    step: f64,
    dedup: f64,
    mode: &'static str,
    seed: u64,
    samples: Option<usize>,
    budget: u64,
}

impl SpecDoc {
    fn of(spec: &ReachSpec) -> Self {
        let (mode, seed, samples) = match spec.mode {
            SampleMode::Exhaustive => ("exhaustive", 0, None),
            SampleMode::Random { seed, samples } => ("random", seed, Some(samples)),
        };
        Self {
            switches: spec.switch_count,
            values: spec.value_resolution,
            step: spec.step,
            dedup: spec.dedup_resolution,
            mode,
            seed,
            samples,
            budget: spec.budget,
        }
    }
}

#[derive(Serialize)]
struct Meta {
    timestamp_unix: u64,
    version: &'static str,
}

impl Meta {
    fn now() -> Self {
        Self {
            timestamp_unix: SystemTime::now()
                .duration_since(UNIX_EPOCH)
                .map(|d| d.as_secs())
                .unwrap_or(0),
            version: env!("CARGO_PKG_VERSION"),
        }
    }
}

fn to_json<T: Serialize>(doc: &T) -> String {
    serde_json::to_string_pretty(doc).expect("json serialization")
}

fn cmd_reach(opts: RunOpts) -> Result<()> {
    let (cfg, out) = prepare(&opts)?;
    let cloud = reachable_cloud(&cfg.system, &cfg.x0, cfg.horizon, &cfg.omega, &cfg.spec)?;
    let slack = slack_budget(&cfg.system, &cfg.x0, cfg.horizon, &cfg.omega, &cfg.spec)?;

    #[derive(Serialize)]
    struct Summary<'a> {
        points: usize,
        dim: usize,
        horizon: f64,
        spec: SpecDoc,
        slack: &'a crate::lab::SlackBudget,
        meta: Meta,
    }
    let summary = Summary {
        points: cloud.len(),
        dim: cloud.dim(),
        horizon: cfg.horizon,
        spec: SpecDoc::of(&cfg.spec),
        slack: &slack,
        meta: Meta::now(),
    };
    write_file(&out, "cloud.csv", &cloud_csv(&cloud))?;
    write_file(&out, "summary.json", &to_json(&summary))?;
    eprintln!("wrote cloud.csv ({} points) to {}", cloud.len(), out.display());
    Ok(())
}

fn cmd_hausdorff(a: &Path, b: &Path, out: Option<PathBuf>) -> Result<()> {
    let cloud_a = read_cloud_csv(a)?;
    let cloud_b = read_cloud_csv(b)?;
    let ab = directed_hausdorff(&cloud_a, &cloud_b)?;
    let ba = directed_hausdorff(&cloud_b, &cloud_a)?;

    #[derive(Serialize)]
    struct Summary<'a> {
        a: &'a str,
        b: &'a str,
        directed_ab: f64,
        directed_ba: f64,
        hausdorff: f64,
        meta: Meta,
    }
    let doc = Summary {
        a: a.to_str().unwrap_or("a"),
        b: b.to_str().unwrap_or("b"),
        directed_ab: ab,
        directed_ba: ba,
        hausdorff: ab.max(ba),
        meta: Meta::now(),
    };
    let dir = out.unwrap_or_else(|| PathBuf::from("out"));
    write_file(&dir, "summary.json", &to_json(&doc))?;
    eprintln!("hausdorff = {} (see {})", ab.max(ba), dir.display());
    Ok(())
}

enum SweepWhich {
    Omega,
    Time,
    State,
    Joint,
}

fn cmd_sweep(opts: SweepOpts, which: SweepWhich) -> Result<()> {
    let (cfg, out) = prepare(&opts.run)?;
    if cfg.experiment.deltas.is_empty() {
        return Err(Error::Config(
            "sweep needs experiment.deltas in the config or --delta on the command line".into(),
        ));
    }
    let report: SweepReport = match which {
        SweepWhich::Omega => sweep_omega(
            &cfg.system,
            &cfg.x0,
            cfg.horizon,
            &cfg.omega,
            &cfg.experiment.deltas,
            &cfg.spec,
        )?,
        SweepWhich::Time => sweep_time(
            &cfg.system,
            &cfg.x0,
            cfg.horizon,
            &cfg.experiment.deltas,
            &cfg.omega,
            &cfg.spec,
        )?,
        SweepWhich::State => sweep_state(
            &cfg.system,
            cfg.horizon,
            &cfg.omega,
            &cfg.x0,
            &cfg.experiment.deltas,
            &cfg.spec,
            cfg.experiment.probes,
        )?,
        SweepWhich::Joint => joint_sweep(
            &cfg.system,
            &cfg.x0,
            cfg.horizon,
            &cfg.omega,
            &cfg.experiment.deltas,
            &cfg.spec,
        )?,
    };
    write_file(&out, "rows.csv", &report.rows_csv())?;
    write_file(&out, "verdict.json", &report.verdict_json())?;
    if opts.dump_clouds {
        let dumps = out.join("dumps");
        write_file(&dumps, "base.csv", &cloud_csv(&report.base_cloud))?;
        for (i, cloud) in report.row_clouds.iter().enumerate() {
            write_file(&dumps, &format!("row_{i:03}.csv"), &cloud_csv(cloud))?;
        }
    }
    eprintln!(
        "{} sweep: {} rows, passed = {} (see {})",
        report.kind.as_str(),
        report.rows.len(),
        report.verdict.passed,
        out.display()
    );
    Ok(())
}

fn cmd_optimize(opts: RunOpts) -> Result<()> {
    let (cfg, out) = prepare(&opts)?;
    let functional = cfg.experiment.functional.as_ref().ok_or_else(|| {
        Error::Config("optimize needs experiment.functional in the config".into())
    })?;
    let cloud = reachable_cloud(&cfg.system, &cfg.x0, cfg.horizon, &cfg.omega, &cfg.spec)?;
    let extremes = extremize_functional(functional, &cloud)?;

    #[derive(Serialize)]
    struct Summary<'a> {
        functional: &'a str,
        points: usize,
        extremes: &'a crate::lab::Extremes,
        meta: Meta,
    }
    let doc = Summary {
        functional: cfg.experiment.functional_src.as_deref().unwrap_or(""),
        points: cloud.len(),
        extremes: &extremes,
        meta: Meta::now(),
    };
    write_file(&out, "cloud.csv", &cloud_csv(&cloud))?;
    write_file(&out, "summary.json", &to_json(&doc))?;
    eprintln!(
        "min = {} at {:?}, max = {} at {:?} (see {})",
        extremes.min_value,
        extremes.argmin,
        extremes.max_value,
        extremes.argmax,
        out.display()
    );
    Ok(())
}

fn cmd_converge(opts: RunOpts) -> Result<()> {
    let (cfg, out) = prepare(&opts)?;
    let study = convergence_study(
        &cfg.system,
        &cfg.x0,
        cfg.horizon,
        &cfg.omega,
        &cfg.spec,
        cfg.experiment.levels,
    )?;
    let final_gap = study.gaps.last().map(|&(_, g)| g).unwrap_or(0.0);
    let final_dedup = study.final_spec.dedup_resolution;
    let passed = study.monotone.unwrap_or(true) && final_gap <= 2.0 * final_dedup;

    let mut rows = String::from("level,gap\n");
    for &(level, gap) in &study.gaps {
        let _ = writeln!(rows, "{level},{gap}");
    }
    // no timestamp here: verdict files must be byte-identical across runs
    #[derive(Serialize)]
    struct Doc {
        monotone: Option<bool>,
        final_gap: f64,
        final_dedup: f64,
        passed: bool,
    }
    write_file(&out, "rows.csv", &rows)?;
    write_file(
        &out,
        "verdict.json",
        &to_json(&Doc {
            monotone: study.monotone,
            final_gap,
            final_dedup,
            passed,
        }),
    )?;
    eprintln!(
        "convergence: {} gaps, final {} vs 2r = {} (see {})",
        study.gaps.len(),
        final_gap,
        2.0 * final_dedup,
        out.display()
    );
    Ok(())
}

fn cmd_weakstar(opts: RunOpts) -> Result<()> {
    let (cfg, out) = prepare(&opts)?;
    if cfg.system.control_dim() != 1 {
        return Err(Error::Config(
            "weakstar needs a scalar control (m = 1)".into(),
        ));
    }
    if !cfg.omega.contains(&[0.0], 1e-9)? {
        return Err(Error::Config(
            "weakstar needs 0 to be an admissible control value".into(),
        ));
    }
    let hi = cfg.omega.support(&[1.0])?;
    let lo = cfg.omega.support(&[-1.0])?;
    let amplitude = hi.min(lo);
    if !(amplitude > 0.0) {
        return Err(Error::Config(
            "weakstar needs a control range with interior around 0".into(),
        ));
    }

    let t = cfg.horizon;
    let dict = TestFunctionDictionary::dyadic(1, t, cfg.experiment.dictionary_depth)?;
    let zero = PiecewiseConstantControl::constant(vec![0.0], t, &cfg.omega)?;
    let base_end = flow_endpoint(&cfg.system, &cfg.x0, &zero, t, cfg.spec.step)?;

    let mut switches = cfg.experiment.chatter_switches.clone();
    switches.sort_unstable();
    switches.dedup();
    let mut rows = String::from("switches,discrepancy,endpoint_distance\n");
    let mut discs = Vec::new();
    let mut dists = Vec::new();
    for &k in &switches {
        let wave = square_wave(amplitude, k, t, 1)?;
        let disc = weak_star_discrepancy(&wave, &zero, &dict)?;
        let end = flow_endpoint(&cfg.system, &cfg.x0, &wave, t, cfg.spec.step)?;
        let dist = vecn::dist(&end, &base_end);
        let _ = writeln!(rows, "{k},{disc},{dist}");
        discs.push(disc);
        dists.push(dist);
    }
    let disc_nonincreasing = discs.windows(2).all(|w| w[1] <= w[0] + 1e-15);
    let shrink_factors: Vec<f64> = dists
        .windows(2)
        .map(|w| if w[1] > 0.0 { w[0] / w[1] } else { f64::INFINITY })
        .collect();
    let min_shrink = shrink_factors.iter().cloned().fold(f64::INFINITY, f64::min);
    let passed = disc_nonincreasing && min_shrink >= 1.5;

    // no timestamp here: verdict files must be byte-identical across runs
    #[derive(Serialize)]
    struct Doc {
        amplitude: f64,
        dictionary_size: usize,
        discrepancy_nonincreasing: bool,
        shrink_factors: Vec<f64>,
        min_shrink_factor: f64,
        passed: bool,
    }
    write_file(&out, "rows.csv", &rows)?;
    write_file(
        &out,
        "verdict.json",
        &to_json(&Doc {
            amplitude,
            dictionary_size: dict.len(),
            discrepancy_nonincreasing: disc_nonincreasing,
            shrink_factors,
            min_shrink_factor: min_shrink,
            passed,
        }),
    )?;
    eprintln!(
        "weakstar: {} waves, min shrink factor {} (see {})",
        switches.len(),
        min_shrink,
        out.display()
    );
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn cloud_csv_round_trip() {
        let cloud = PointCloud::new(2, vec![vec![0.0, 1.5], vec![-1.0, 2.0]]).unwrap();
        let text = cloud_csv(&cloud);
        assert!(text.starts_with("x0,x1\n"));
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("c.csv");
        std::fs::write(&path, &text).unwrap();
        let back = read_cloud_csv(&path).unwrap();
        assert_eq!(back, cloud);
    }

    #[test]
    fn unknown_demo_is_config_error() {
        let code = run(["reachlab", "reach", "--config", "no_such_demo"]);
        assert_eq!(code, 2);
    }

    #[test]
    fn bad_usage_exits_two() {
        let code = run(["reachlab", "frobnicate"]);
        assert_eq!(code, 2);
    }
}
