use anyhow::{anyhow, Context};
use clap::{Args, Parser, Subcommand, ValueEnum};
use serde_json::{json, Value};
use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use stratahjb::config::{ControlsConfig, ProblemConfig};
use stratahjb::io::{write_grid_csv, write_trajectory_csv};
use stratahjb::solver::{solve, SolveMode};
use stratahjb::trajectory::{oracle_value, Integrator, PiecewiseControl};
use stratahjb::verification::{
    closed_form_error, comparison_test, dpp_suite, hypothesis_audit, natural_mode, stability_test, uniqueness_crosscheck,
    DppOptions, PerturbationSpec, Status,
};
use stratahjb::{ControlProblem, Error, StratifiedGrid};

const DEFAULT_NODES: usize = 81;
const DEFAULT_BOX: [f64; 2] = [-2.0, 2.0];

#[derive(Parser)]
#[command(name = "stratahjb", version, about = "Optimal control on stratified domains")]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Solve on a grid; writes `<name>.grid.csv` and `<name>.solve.json`.
    Solve {
        config: PathBuf,
        #[command(flatten)]
        grid: GridArgs,
        #[arg(long, default_value = ".")]
        out: PathBuf,
        /// Write every k-th time step (0: only t = 0 and t = T).
        #[arg(long, default_value_t = 0)]
        time_stride: usize,
    },
    /// Exhaustive search over switching controls from one point.
    Oracle {
        config: PathBuf,
        /// `t,x1,...,xd`
        #[arg(long, value_delimiter = ',', allow_hyphen_values = true, required = true)]
        at: Vec<f64>,
        #[arg(long, default_value_t = 2)]
        depth: usize,
        #[arg(long, default_value_t = 4)]
        slices: usize,
        #[arg(long)]
        controls: Option<usize>,
        /// Write the optimal trajectory as CSV.
        #[arg(long)]
        trajectory: Option<PathBuf>,
    },
    /// Uniqueness cross-check, comparison and DPP checks.
    Verify {
        config: PathBuf,
        #[command(flatten)]
        grid: GridArgs,
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long, default_value_t = 100)]
        probes: usize,
        /// DPP probes closer than this to an interface are skipped.
        #[arg(long, default_value_t = 0.0)]
        interface_gap: f64,
    },
    /// Perturbation ladder `eps0 / 2^n`.
    Stability {
        config: PathBuf,
        #[command(flatten)]
        grid: GridArgs,
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long, default_value_t = 0.2)]
        eps0: f64,
        #[arg(long, default_value_t = 4)]
        levels: usize,
    },
    /// Sampled checks of the standing hypotheses.
    Audit {
        config: PathBuf,
        #[arg(long, value_parser = parse_box, allow_hyphen_values = true)]
        r#box: Option<[f64; 2]>,
        #[arg(long, default_value_t = 200)]
        samples: usize,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        controls: Option<usize>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

#[derive(Args, Clone)]
struct GridArgs {
    /// Nodes per axis.
    #[arg(long)]
    grid: Option<usize>,
    #[arg(long)]
    timesteps: Option<usize>,
    /// `lo,hi`
    #[arg(long, value_parser = parse_box, allow_hyphen_values = true)]
    r#box: Option<[f64; 2]>,
    /// Number of sampled controls.
    #[arg(long)]
    controls: Option<usize>,
    #[arg(long, value_enum)]
    mode: Option<ModeArg>,
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
enum ModeArg {
    Auto,
    Continuous,
    Lsc,
}

#[allow(clippy::neg_cmp_op_on_partial_ord)]
fn parse_box(s: &str) -> Result<[f64; 2], String> {
    let parts: Vec<&str> = s.split(',').collect();
    let [lo, hi] = parts.as_slice() else {
        return Err("expected lo,hi".into());
    };
    let lo: f64 = lo.trim().parse().map_err(|e| format!("{e}"))?;
    let hi: f64 = hi.trim().parse().map_err(|e| format!("{e}"))?;
    if !(lo < hi) {
        return Err("need lo < hi".into());
    }
    Ok([lo, hi])
}

/// Config, problem and the resolved run parameters.
struct Setup {
    cfg: ProblemConfig,
    p: ControlProblem,
    name: String,
    nodes: usize,
    steps: usize,
    bounds: [f64; 2],
    mode: SolveMode,
    seed: u64,
}

impl Setup {
    fn grid(&self) -> anyhow::Result<StratifiedGrid> {
        let [lo, hi] = self.bounds;
        Ok(StratifiedGrid::for_problem(&self.p, lo, hi, self.nodes, self.steps)?)
    }

    fn describe(&self, grid: &StratifiedGrid) -> Value {
        json!({
            "nodes_per_axis": self.nodes,
            "shape": grid.shape(),
            "box": self.bounds,
            "pad": grid.pad,
            "timesteps": self.steps,
            "dt": grid.dt,
            "dx": grid.dx(),
            "horizon": grid.horizon,
            "warnings": grid.warnings,
        })
    }
}

fn load_problem(path: &Path, controls: Option<usize>) -> anyhow::Result<(ProblemConfig, ControlProblem)> {
    let mut cfg = ProblemConfig::load(path).with_context(|| format!("cannot load config {}", path.display()))?;
    if let Some(n) = controls {
        match cfg.controls.as_mut() {
            Some(ControlsConfig::Ball { count, .. } | ControlsConfig::Interval { count, .. }) => *count = n,
            _ => return Err(Error::InvalidArgument("--controls needs a ball or interval control set".into()).into()),
        }
    }
    let p = cfg.build()?;
    Ok((cfg, p))
}

fn setup(path: &Path, args: &GridArgs) -> anyhow::Result<Setup> {
    let (cfg, p) = load_problem(path, args.controls)?;
    let s = cfg.solver();
    let bounds = args.r#box.or(s.bounds).unwrap_or(DEFAULT_BOX);
    let nodes = args.grid.or(s.grid).unwrap_or(DEFAULT_NODES);
    let steps = args
        .timesteps
        .or(s.timesteps)
        .unwrap_or_else(|| StratifiedGrid::default_steps(&p, bounds[0], bounds[1], nodes));
    let mode = match (args.mode, s.mode.as_deref()) {
        (Some(ModeArg::Continuous), _) | (None, Some("continuous")) => SolveMode::Continuous,
        (Some(ModeArg::Lsc), _) | (None, Some("lsc")) => SolveMode::Lsc,
        (Some(ModeArg::Auto), _) | (None, None | Some("auto")) => natural_mode(&p),
        (None, Some(other)) => return Err(Error::ConfigParse(format!("unknown solver mode {other:?}")).into()),
    };
    Ok(Setup {
        name: cfg.display_name(),
        seed: args.seed.or(s.seed).unwrap_or(0),
        cfg,
        p,
        nodes,
        steps,
        bounds,
        mode,
    })
}

fn write_report(out: Option<&Path>, file: &str, report: &Value) -> anyhow::Result<()> {
    let text = serde_json::to_string_pretty(report)?;
    println!("{text}");
    if let Some(dir) = out {
        fs::create_dir_all(dir)?;
        fs::write(dir.join(file), text + "\n")?;
    }
    Ok(())
}

fn cmd_solve(config: &Path, args: &GridArgs, out: &Path, stride: usize) -> anyhow::Result<Status> {
    let s = setup(config, args)?;
    let grid = s.grid()?;
    let v = solve(&s.p, &grid, s.mode)?;
    fs::create_dir_all(out)?;
    let csv = out.join(format!("{}.grid.csv", s.name));
    let mut w = BufWriter::new(File::create(&csv)?);
    write_grid_csv(&v, if stride == 0 { grid.steps } else { stride }, &mut w)?;
    w.flush()?;
    let closed_form = s.cfg.closed_form().map(|cf| {
        let band = 2.0 * grid.dx();
        json!({ "name": s.cfg.closed_form, "band": band, "max_error": closed_form_error(cf, &v, band) })
    });
    let report = json!({
        "problem": s.name,
        "mode": s.mode,
        "seed": s.seed,
        "grid": s.describe(&grid),
        "clamped_updates": v.clamped_updates,
        "total_updates": v.total_updates,
        "clamp_fraction": v.clamp_fraction(),
        "value_at_origin_t0": v.query(0.0, &vec![0.0; s.p.dim()]).ok(),
        "closed_form": closed_form,
        "csv": csv.file_name().and_then(|f| f.to_str()),
    });
    write_report(Some(out), &format!("{}.solve.json", s.name), &report)?;
    Ok(Status::Pass)
}

fn cmd_oracle(
    config: &Path,
    at: &[f64],
    depth: usize,
    slices: usize,
    controls: Option<usize>,
    trajectory: Option<&Path>,
) -> anyhow::Result<Status> {
    let (cfg, p) = load_problem(config, controls)?;
    if at.len() != p.dim() + 1 {
        return Err(Error::InvalidArgument(format!("--at needs t and {} coordinates", p.dim())).into());
    }
    let (t, x) = (at[0], &at[1..]);
    let r = oracle_value(&p, t, x, depth, slices)?;
    let schedule: Vec<Value> = r
        .schedule
        .iter()
        .enumerate()
        .map(|(i, &a)| json!({ "from": r.slice_times[i], "to": r.slice_times[i + 1], "control": a, "u": p.controls.sample(a) }))
        .collect();
    if let Some(path) = trajectory {
        let ctrl = PiecewiseControl::new(r.slice_times.clone(), r.schedule.clone())?;
        let dt = (p.horizon - t) / (64.0 * slices as f64);
        let traj = Integrator::new(dt).integrate(&p, t, x, &ctrl)?;
        let mut w = BufWriter::new(File::create(path)?);
        write_trajectory_csv(&traj, &mut w)?;
        w.flush()?;
    }
    let report = json!({
        "problem": cfg.display_name(),
        "t": t,
        "x": x,
        "depth": depth,
        "slices": slices,
        "value": r.value,
        "evaluations": r.evaluations,
        "schedule": schedule,
    });
    write_report(None, "", &report)?;
    Ok(Status::Pass)
}

fn cmd_verify(config: &Path, args: &GridArgs, out: Option<&Path>, probes: usize, gap: f64) -> anyhow::Result<Status> {
    let s = setup(config, args)?;
    let grid = s.grid()?;
    let mut status = Status::Pass;
    let crosscheck = if s.mode == SolveMode::Continuous {
        let r = uniqueness_crosscheck(&s.p, &grid)?;
        status = status.max(r.status);
        Some(r)
    } else {
        None
    };
    let mut comparisons = Vec::new();
    for delta in [0.0, 0.1, 0.3] {
        let r = comparison_test(&s.p, &grid, s.mode, delta)?;
        status = status.max(r.status);
        comparisons.push(r);
    }
    let v = solve(&s.p, &grid, s.mode)?;
    let dpp = dpp_suite(&s.p, &v, &DppOptions { probes, seed: s.seed, interface_gap: gap })?;
    status = status.max(dpp.status);
    let report = json!({
        "problem": s.name,
        "mode": s.mode,
        "seed": s.seed,
        "grid": s.describe(&grid),
        "uniqueness_crosscheck": crosscheck,
        "comparison": comparisons,
        "dpp": dpp,
        "status": status,
    });
    write_report(out, &format!("{}.verify.json", s.name), &report)?;
    Ok(status)
}

fn cmd_stability(config: &Path, args: &GridArgs, out: Option<&Path>, eps0: f64, levels: usize) -> anyhow::Result<Status> {
    let s = setup(config, args)?;
    let grid = s.grid()?;
    let r = stability_test(&s.p, &grid, &PerturbationSpec::standard(s.p.dim()), eps0, levels)?;
    let status = r.status;
    let report = json!({ "grid": s.describe(&grid), "report": r });
    write_report(out, &format!("{}.stability.json", s.name), &report)?;
    Ok(status)
}

fn cmd_audit(
    config: &Path,
    bounds: Option<[f64; 2]>,
    samples: usize,
    seed: Option<u64>,
    controls: Option<usize>,
    out: Option<&Path>,
) -> anyhow::Result<Status> {
    let (cfg, p) = load_problem(config, controls)?;
    let s = cfg.solver();
    let [lo, hi] = bounds.or(s.bounds).unwrap_or(DEFAULT_BOX);
    let r = hypothesis_audit(&p, lo, hi, samples, seed.or(s.seed).unwrap_or(0))?;
    for c in &r.checks {
        eprintln!("{:<14} {:?}", c.name, c.status);
    }
    let status = r.status;
    write_report(out, &format!("{}.audit.json", cfg.display_name()), &serde_json::to_value(&r)?)?;
    Ok(status)
}

fn run(cli: Cli) -> anyhow::Result<Status> {
    match &cli.cmd {
        Cmd::Solve { config, grid, out, time_stride } => cmd_solve(config, grid, out, *time_stride),
        Cmd::Oracle { config, at, depth, slices, controls, trajectory } => {
            cmd_oracle(config, at, *depth, *slices, *controls, trajectory.as_deref())
        }
        Cmd::Verify { config, grid, out, probes, interface_gap } => {
            cmd_verify(config, grid, out.as_deref(), *probes, *interface_gap)
        }
        Cmd::Stability { config, grid, out, eps0, levels } => cmd_stability(config, grid, out.as_deref(), *eps0, *levels),
        Cmd::Audit { config, r#box, samples, seed, controls, out } => {
            cmd_audit(config, *r#box, *samples, *seed, *controls, out.as_deref())
        }
    }
}

fn threads() -> anyhow::Result<()> {
    let Ok(raw) = std::env::var("STRATAHJB_THREADS") else {
        return Ok(());
    };
    let n: usize = raw
        .parse()
        .ok()
        .filter(|&n| n > 0)
        .ok_or_else(|| anyhow!(Error::InvalidArgument(format!("STRATAHJB_THREADS must be a positive integer, got {raw:?}"))))?;
    rayon::ThreadPoolBuilder::new().num_threads(n).build_global()?;
    Ok(())
}

/// Usage and config problems exit with 2, everything else with 1.
fn is_usage_error(e: &anyhow::Error) -> bool {
    matches!(
        e.downcast_ref::<Error>(),
        Some(
            Error::ConfigParse(_)
                | Error::InvalidArgument(_)
                | Error::Io(_)
                | Error::TerminalModeMismatch(_)
                | Error::NonPositiveDimension(_)
                | Error::DuplicateHyperplane { .. }
                | Error::InvalidAxis { .. }
                | Error::NegativeSnapTolerance(_)
                | Error::StratumPieceMissing(_)
        )
    )
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match threads().and_then(|()| run(cli)) {
        Ok(status) if status.is_fail() => ExitCode::from(1),
        Ok(_) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(if is_usage_error(&e) { 2 } else { 1 })
        }
    }
}
