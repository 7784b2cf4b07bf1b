use std::fs;
use std::io::BufWriter;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use flexlink::error::Error;
use flexlink::parallel::Execution;
use flexlink::report::{self, RunStatus};
use flexlink::scenario::{sha256_hex, Overrides, Scenario, ScenarioFile};

const EXIT_SETTLED: u8 = 0;
const EXIT_IO: u8 = 1;
const EXIT_UNSETTLED: u8 = 2;
const EXIT_DIVERGED: u8 = 3;
const EXIT_CONFIG: u8 = 4;

/// Flexible-link manipulator simulator.
#[derive(Parser)]
#[command(name = "flexlink", version, about)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Simulate the scenario and write trace, summary and plot script.
    Run(Common),
    /// Print the settling-time bounds and the hierarchy verdict.
    Bounds(Common),
    /// Run the proposed and PD controllers and write the comparison table.
    Compare(Common),
    /// Scale the initial angle offset and check every run against the bound.
    Sweep(SweepArgs),
    /// Print the observer gain report.
    Validate(Common),
}

#[derive(Args)]
struct Common {
    /// Scenario JSON file.
    scenario: PathBuf,
    /// Output directory; overrides `output.dir`.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Integration step; overrides `sim.dt`.
    #[arg(long)]
    dt: Option<f64>,
    /// Pure sign functions in controller and observer.
    #[arg(long)]
    theory_mode: bool,
}

#[derive(Args)]
struct SweepArgs {
    #[command(flatten)]
    common: Common,
    /// Initial-offset scales.
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true, default_values_t = [1.0, 10.0, 100.0])]
    scales: Vec<f64>,
    /// Run the sweep on one thread.
    #[arg(long)]
    sequential: bool,
}

#[derive(Debug)]
enum Failure {
    Lib(Error),
    Io(PathBuf, std::io::Error),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure::Lib(e)
    }
}

impl Failure {
    fn code(&self) -> u8 {
        match self {
            Failure::Lib(Error::Diverged { .. } | Error::NonFinite(_)) => EXIT_DIVERGED,
            Failure::Lib(_) => EXIT_CONFIG,
            Failure::Io(..) => EXIT_IO,
        }
    }
}

impl std::fmt::Display for Failure {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Failure::Lib(e) => write!(f, "{e}"),
            Failure::Io(p, e) => write!(f, "{}: {e}", p.display()),
        }
    }
}

type CmdResult = Result<u8, Failure>;

impl Common {
    fn overrides(&self) -> Overrides {
        Overrides {
            dt: self.dt,
            theory_mode: self.theory_mode,
        }
    }

    fn read(&self) -> Result<Vec<u8>, Failure> {
        fs::read(&self.scenario).map_err(|e| {
            Failure::Lib(Error::Config {
                path: self.scenario.display().to_string(),
                reason: e.to_string(),
            })
        })
    }

    fn load(&self) -> Result<Scenario, Failure> {
        Ok(Scenario::from_bytes(&self.read()?, &self.overrides())?)
    }

    fn out_dir(&self, sc: &Scenario) -> PathBuf {
        self.out.clone().unwrap_or_else(|| PathBuf::from(&sc.file.output.dir))
    }
}

fn prepare(dir: &Path) -> Result<(), Failure> {
    fs::create_dir_all(dir).map_err(|e| Failure::Io(dir.to_owned(), e))
}

fn write(path: PathBuf, contents: &str) -> Result<(), Failure> {
    fs::write(&path, contents).map_err(|e| Failure::Io(path, e))
}

fn to_json<T: serde::Serialize>(v: &T) -> String {
    let mut s = serde_json::to_string_pretty(v).expect("serializable artifact");
    s.push('\n');
    s
}

fn status_code(status: RunStatus) -> u8 {
    match status {
        RunStatus::Settled => EXIT_SETTLED,
        RunStatus::Unsettled => EXIT_UNSETTLED,
        RunStatus::Diverged => EXIT_DIVERGED,
    }
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map(|x| format!("{x:.4}")).unwrap_or_else(|| "-".into())
}

fn cmd_run(args: &Common) -> CmdResult {
    let sc = args.load()?;
    let dir = args.out_dir(&sc);
    prepare(&dir)?;
    let art = report::run(&sc)?;
    let names = &sc.file.output;
    if let Some(trace) = &art.trace {
        let path = dir.join(&names.trace);
        let file = fs::File::create(&path).map_err(|e| Failure::Io(path.clone(), e))?;
        report::write_trace_csv(BufWriter::new(file), trace, &sc.sha256).map_err(|e| Failure::Io(path, e))?;
        if !names.plot.is_empty() {
            write(
                dir.join(&names.plot),
                &report::gnuplot_script(&names.trace, &sc.sha256, sc.config().theta_d),
            )?;
        }
    }
    write(dir.join(&names.summary), &to_json(&art.summary))?;

    let s = &art.summary;
    println!("scenario {}", s.scenario_sha256);
    println!("status   {}", serde_json::to_value(s.status).expect("status").as_str().unwrap_or(""));
    if let Some(m) = &s.metrics {
        println!("settling tip   {} s", fmt_opt(m.settling_time_tip));
        println!("settling joint {} s", fmt_opt(m.settling_time_joint));
        println!("overshoot      {} %", fmt_opt(m.overshoot_pct));
    }
    if let Some(d) = &s.divergence {
        println!("diverged at {:.6} s: {}", d.time, d.reason);
    }
    println!("T_total  {:.4} s", s.bounds.cascade.t_total);
    println!("artifacts in {}", dir.display());
    Ok(status_code(s.status))
}

fn cmd_bounds(args: &Common) -> CmdResult {
    let bytes = args.read()?;
    let file = ScenarioFile::from_slice(&bytes)?;
    let sc = Scenario::from_file_unchecked(file, sha256_hex(&bytes), &args.overrides())?;
    let b = &sc.bounds;
    println!("# scenario {}", sc.sha256);
    for (i, t) in b.controller.stages.iter().enumerate() {
        println!("T{i}       {t}");
    }
    println!("T_ctrl   {}", b.cascade.t_ctrl);
    println!("T_FTSMO  {}", b.cascade.t_ftsmo);
    println!("T_total  {}", b.cascade.t_total);
    println!("eps1     {}", b.observer.eps1);
    println!("eps2     {}", b.observer.eps2);
    if b.cascade.separated {
        println!("hierarchy ok: T_FTSMO < T_ctrl");
        Ok(EXIT_SETTLED)
    } else {
        println!("hierarchy violated: T_FTSMO >= T_ctrl");
        Ok(EXIT_CONFIG)
    }
}

fn cmd_compare(args: &Common) -> CmdResult {
    let sc = args.load()?;
    let dir = args.out_dir(&sc);
    prepare(&dir)?;
    let table = report::compare(&sc)?;
    let csv = table.to_csv();
    write(dir.join(&sc.file.output.compare), &csv)?;
    print!("{csv}");
    Ok(EXIT_SETTLED)
}

fn cmd_sweep(args: &SweepArgs) -> CmdResult {
    if args.scales.is_empty() {
        return Err(Error::Config {
            path: "--scales".into(),
            reason: "at least one scale is required".into(),
        }
        .into());
    }
    let sc = args.common.load()?;
    let dir = args.common.out_dir(&sc);
    prepare(&dir)?;
    let execution = if args.sequential {
        Execution::Sequential
    } else {
        Execution::Parallel
    };
    let art = report::sweep(&sc, &args.scales, execution)?;
    write(dir.join(&sc.file.output.sweep), &to_json(&art))?;

    let r = &art.report;
    println!("# scenario {}", art.scenario_sha256);
    println!("T_total {:.4} s", r.bounds.t_total);
    println!("{:>10} {:>10} {:>10} {:>10}  verdict", "scale", "theta0", "tip", "joint");
    for row in &r.rows {
        let verdict = match (&row.diverged, row.within_bound) {
            (Some(_), _) => "diverged",
            (None, true) => "ok",
            (None, false) => "violation",
        };
        let note = if row.mirrored { " (mirrored)" } else { "" };
        println!(
            "{:>10} {:>10.4} {:>10} {:>10}  {verdict}{note}",
            row.scale,
            row.theta0,
            fmt_opt(row.settling_time_tip),
            fmt_opt(row.settling_time_joint)
        );
    }
    println!("violations {}", r.violations);
    Ok(if r.rows.iter().any(|row| row.diverged.is_some()) {
        EXIT_DIVERGED
    } else if r.violations > 0 {
        EXIT_UNSETTLED
    } else {
        EXIT_SETTLED
    })
}

fn cmd_validate(args: &Common) -> CmdResult {
    let sc = args.load()?;
    let out = serde_json::json!({
        "scenario_sha256": sc.sha256,
        "q_report": sc.q_report(),
        "observer_gains": sc.gains.observer.export(),
    });
    print!("{}", to_json(&out));
    Ok(EXIT_SETTLED)
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::Run(a) => cmd_run(a),
        Command::Bounds(a) => cmd_bounds(a),
        Command::Compare(a) => cmd_compare(a),
        Command::Sweep(a) => cmd_sweep(a),
        Command::Validate(a) => cmd_validate(a),
    };
    match result {
        Ok(code) => ExitCode::from(code),
        Err(f) => {
            log::debug!("{f:?}");
            eprintln!("error: {f}");
            ExitCode::from(f.code())
        }
    }
}
