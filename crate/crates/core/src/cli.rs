//! Command-line front end.
//!
//! [`parse_and_validate`] turns an argument vector into a [`CliInvocation`]
//! without running anything; [`execute`] runs it and writes the outputs.

use std::ffi::OsString;
use std::path::PathBuf;
use std::str::FromStr;
use std::time::{Instant, SystemTime, UNIX_EPOCH};

use clap::{Args, Parser, Subcommand, ValueEnum};
use thiserror::Error;

use crate::dynamics::{self, Method};
use crate::experiments::{self, ExperimentError, ExperimentKind, ExperimentSpec};
use crate::market::{self, Boundary, MarketConfig, MarketError, Point, TransportCosts};
use crate::output::{self, Format, OutputError};

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error("--{flag}: {message}")]
    Flag { flag: &'static str, message: String },
    #[error(transparent)]
    Experiment(#[from] ExperimentError),
    #[error(transparent)]
    Market(#[from] MarketError),
    #[error(transparent)]
    Output(#[from] OutputError),
}

impl CliError {
    fn flag(flag: &'static str, message: impl Into<String>) -> Self {
        CliError::Flag {
            flag,
            message: message.into(),
        }
    }
}

#[derive(Debug, Parser)]
#[command(
    name = "torus-market",
    version,
    about = "Spatial price competition on the unit square"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Two firms at distance d: equilibrium profit vs. the closed form.
    TwoFirm(RunArgs),
    /// Tail profit variance as a function of the lattice side N.
    VarianceScaling(RunArgs),
    /// Randomly placed firms: profit per firm vs. m with a power-law fit.
    MultiFirm(RunArgs),
    /// Power-law exponent as a function of the cost exponent gamma.
    GammaSweep(RunArgs),
    /// Two firms with open boundaries: price cycles and profit profiles.
    NonPbcDemo(RunArgs),
    /// Closed-form equilibrium table over d.
    NashTable(RunArgs),
    /// Firm index of every customer for fixed firms and prices.
    AssignMap(AssignArgs),
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum MethodArg {
    Grid,
    Exact,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum BoundaryArg {
    Periodic,
    Open,
}

impl From<BoundaryArg> for Boundary {
    fn from(b: BoundaryArg) -> Self {
        match b {
            BoundaryArg::Periodic => Boundary::Periodic,
            BoundaryArg::Open => Boundary::Open,
        }
    }
}

#[derive(Debug, Args)]
struct OutArgs {
    /// Directory for output files.
    #[arg(long, default_value = ".")]
    out_dir: PathBuf,
    /// Comma-separated subset of csv,json,dat,svg.
    #[arg(long, default_value = "csv,json")]
    formats: String,
}

#[derive(Debug, Args)]
struct RunArgs {
    /// Firm distances: list or start:stop:count.
    #[arg(long)]
    d: Option<String>,
    /// Lattice sides N.
    #[arg(long)]
    n_side: Option<String>,
    /// Firm counts.
    #[arg(long)]
    m: Option<String>,
    #[arg(long)]
    r: Option<f64>,
    /// Cost exponent; a list for gamma-sweep.
    #[arg(long)]
    gamma: Option<String>,
    #[arg(long)]
    steps: Option<usize>,
    #[arg(long)]
    burn_in: Option<usize>,
    #[arg(long)]
    initial_price: Option<f64>,
    #[arg(long, value_enum)]
    method: Option<MethodArg>,
    #[arg(long)]
    grid_points: Option<usize>,
    #[arg(long)]
    price_max: Option<f64>,
    #[arg(long, value_enum)]
    boundary: Option<BoundaryArg>,
    /// Seeds: list or start:stop:count.
    #[arg(long)]
    seeds: Option<String>,
    #[arg(long)]
    fit_min_m: Option<usize>,
    /// Rival prices for the open-boundary profit profiles.
    #[arg(long)]
    p_other: Option<String>,
    #[command(flatten)]
    out: OutArgs,
}

#[derive(Debug, Args)]
struct AssignArgs {
    /// Firms as x:y:price, comma-separated.
    #[arg(long, default_value = "0.2:0.5:0.8,0.5:0.5:1.0")]
    firms: String,
    #[arg(long, default_value_t = 80)]
    n_side: usize,
    #[arg(long, default_value_t = 1.0)]
    r: f64,
    #[arg(long, default_value_t = 1.0)]
    gamma: f64,
    /// Single boundary mode; both are written when omitted.
    #[arg(long, value_enum)]
    boundary: Option<BoundaryArg>,
    #[command(flatten)]
    out: OutArgs,
}

#[derive(Debug, Clone, PartialEq)]
pub struct AssignMapSpec {
    pub n_side: usize,
    pub firms: Vec<(Point, f64)>,
    pub r: f64,
    pub gamma: f64,
    pub boundaries: Vec<Boundary>,
}

impl AssignMapSpec {
    pub fn config(&self, boundary: Boundary) -> Result<MarketConfig, MarketError> {
        let positions: Vec<Point> = self.firms.iter().map(|f| f.0).collect();
        let mut config =
            MarketConfig::new(self.n_side, &positions, 0.0, self.r, self.gamma, boundary)?;
        for (k, (_, price)) in self.firms.iter().enumerate() {
            config.set_price(k, *price)?;
        }
        Ok(config)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Task {
    Experiment(ExperimentSpec),
    AssignMap(AssignMapSpec),
}

#[derive(Debug, Clone, PartialEq)]
pub struct CliInvocation {
    pub task: Task,
    pub out_dir: PathBuf,
    pub formats: Vec<Format>,
}

impl CliInvocation {
    pub fn subcommand(&self) -> &'static str {
        match &self.task {
            Task::Experiment(spec) => spec.kind.command(),
            Task::AssignMap(_) => "assign-map",
        }
    }
}

/// Parses `argv` (including the program name) and validates every flag.
pub fn parse_and_validate<I, T>(argv: I) -> Result<CliInvocation, CliError>
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = Cli::try_parse_from(argv).map_err(clap_error)?;
    match cli.command {
        Command::TwoFirm(a) => build_run(ExperimentKind::TwoFirmSweep, a),
        Command::VarianceScaling(a) => build_run(ExperimentKind::VarianceScaling, a),
        Command::MultiFirm(a) => build_run(ExperimentKind::MultiFirmSweep, a),
        Command::GammaSweep(a) => build_run(ExperimentKind::GammaSweep, a),
        Command::NonPbcDemo(a) => build_run(ExperimentKind::NonPbcDemo, a),
        Command::NashTable(a) => build_run(ExperimentKind::NashTable, a),
        Command::AssignMap(a) => build_assign(a),
    }
}

fn clap_error(e: clap::Error) -> CliError {
    use clap::error::ErrorKind;
    match e.kind() {
        ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => {
            CliError::Usage(e.render().to_string())
        }
        _ => {
            let text = e.render().to_string();
            let first = text
                .lines()
                .find(|l| !l.trim().is_empty())
                .unwrap_or("invalid arguments")
                .trim_start_matches("error: ")
                .to_string();
            CliError::Usage(first)
        }
    }
}

/// True when clap asked for help or version output rather than failing.
pub fn is_informational(argv: &[OsString]) -> bool {
    matches!(
        Cli::try_parse_from(argv).map_err(|e| e.kind()),
        Err(clap::error::ErrorKind::DisplayHelp | clap::error::ErrorKind::DisplayVersion)
    )
}

fn build_run(kind: ExperimentKind, a: RunArgs) -> Result<CliInvocation, CliError> {
    let mut spec = ExperimentSpec::new(kind);
    if let Some(s) = &a.d {
        spec.d_list = parse_f64_list("d", s)?;
    }
    if let Some(s) = &a.n_side {
        spec.n_list = parse_usize_list("n-side", s)?;
        if spec.n_list.contains(&0) {
            return Err(CliError::flag("n-side", "must be positive"));
        }
    }
    if let Some(s) = &a.m {
        spec.m_list = parse_usize_list("m", s)?;
    }
    if let Some(r) = a.r {
        if !(r > 0.0 && r.is_finite()) {
            return Err(CliError::flag("r", format!("must be positive, got {r}")));
        }
        spec.r = r;
    }
    if let Some(s) = &a.gamma {
        let gammas = parse_f64_list("gamma", s)?;
        if let Some(g) = gammas.iter().find(|g| !(**g > 0.0 && g.is_finite())) {
            return Err(CliError::flag(
                "gamma",
                format!("must be positive, got {g}"),
            ));
        }
        if kind == ExperimentKind::GammaSweep {
            spec.gamma_list = gammas;
        } else if let [g] = gammas[..] {
            spec.gamma = g;
        } else {
            return Err(CliError::flag(
                "gamma",
                "takes a single value for this subcommand",
            ));
        }
    }
    if let Some(v) = a.steps {
        spec.steps = v;
    }
    if let Some(v) = a.burn_in {
        spec.burn_in = v;
    }
    if let Some(p) = a.initial_price {
        spec.initial_price = p;
    }
    let method = a.method.unwrap_or(match spec.method {
        Method::Grid { .. } => MethodArg::Grid,
        Method::Exact { .. } => MethodArg::Exact,
    });
    match method {
        MethodArg::Exact => {
            if a.grid_points.is_some() || a.price_max.is_some() {
                return Err(CliError::flag(
                    "grid-points",
                    "--grid-points/--price-max require --method grid",
                ));
            }
            spec.method = Method::exact();
        }
        MethodArg::Grid => {
            let grid_points = a.grid_points.unwrap_or(dynamics::DEFAULT_GRID_POINTS);
            let price_max = a.price_max.unwrap_or(dynamics::DEFAULT_PRICE_MAX);
            if grid_points < 2 {
                return Err(CliError::flag("grid-points", "must be at least 2"));
            }
            if !(price_max > 0.0 && price_max.is_finite()) {
                return Err(CliError::flag("price-max", "must be positive"));
            }
            spec.method = Method::Grid {
                grid_points,
                price_max,
            };
        }
    }
    if let Some(b) = a.boundary {
        spec.boundary = b.into();
    }
    if let Some(s) = &a.seeds {
        spec.seeds = parse_u64_list("seeds", s)?;
    }
    if let Some(v) = a.fit_min_m {
        spec.fit_min_m = v;
    }
    if let Some(s) = &a.p_other {
        spec.p_other_list = parse_f64_list("p-other", s)?;
    }
    spec.validate()?;
    Ok(CliInvocation {
        task: Task::Experiment(spec),
        out_dir: a.out.out_dir,
        formats: parse_formats(&a.out.formats)?,
    })
}

fn build_assign(a: AssignArgs) -> Result<CliInvocation, CliError> {
    let mut firms = Vec::new();
    for item in a.firms.split(',') {
        let parts: Vec<&str> = item.trim().split(':').collect();
        let nums: Result<Vec<f64>, _> = parts.iter().map(|p| p.trim().parse::<f64>()).collect();
        match nums {
            Ok(v) if v.len() == 3 => {
                if !(0.0..=1.0).contains(&v[0]) || !(0.0..=1.0).contains(&v[1]) {
                    return Err(CliError::flag(
                        "firms",
                        format!("position outside the unit square in '{item}'"),
                    ));
                }
                firms.push((Point::new(v[0], v[1]), v[2]));
            }
            _ => {
                return Err(CliError::flag(
                    "firms",
                    format!("expected x:y:price, got '{item}'"),
                ))
            }
        }
    }
    let boundaries = match a.boundary {
        Some(b) => vec![b.into()],
        None => vec![Boundary::Periodic, Boundary::Open],
    };
    let spec = AssignMapSpec {
        n_side: a.n_side,
        firms,
        r: a.r,
        gamma: a.gamma,
        boundaries,
    };
    for &b in &spec.boundaries {
        spec.config(b)?;
    }
    Ok(CliInvocation {
        task: Task::AssignMap(spec),
        out_dir: a.out.out_dir,
        formats: parse_formats(&a.out.formats)?,
    })
}

fn parse_formats(s: &str) -> Result<Vec<Format>, CliError> {
    let mut formats = Vec::new();
    for item in s.split(',').map(str::trim).filter(|t| !t.is_empty()) {
        let f = Format::from_str(item).map_err(|m| CliError::flag("formats", m))?;
        if !formats.contains(&f) {
            formats.push(f);
        }
    }
    if formats.is_empty() {
        return Err(CliError::flag("formats", "no formats given"));
    }
    Ok(formats)
}

/// Parses `a,b,c` and `start:stop:count` items into a flat list.
pub fn parse_list(s: &str) -> Result<Vec<f64>, String> {
    let mut out = Vec::new();
    for item in s.split(',').map(str::trim) {
        if item.is_empty() {
            return Err("empty list item".into());
        }
        let parts: Vec<&str> = item.split(':').collect();
        match parts[..] {
            [v] => out.push(parse_num(v)?),
            [start, stop, count] => {
                let (a, b) = (parse_num(start)?, parse_num(stop)?);
                let n: usize = count
                    .trim()
                    .parse()
                    .map_err(|_| format!("bad count '{count}' in range '{item}'"))?;
                if n == 0 {
                    return Err(format!("range '{item}' has zero points"));
                }
                for i in 0..n {
                    let v = if n == 1 {
                        a
                    } else {
                        a + (b - a) * i as f64 / (n - 1) as f64
                    };
                    out.push(round12(v));
                }
            }
            _ => return Err(format!("expected value or start:stop:count, got '{item}'")),
        }
    }
    Ok(out)
}

fn parse_num(s: &str) -> Result<f64, String> {
    let v: f64 = s
        .trim()
        .parse()
        .map_err(|_| format!("not a number: '{s}'"))?;
    if v.is_finite() {
        Ok(v)
    } else {
        Err(format!("not a finite number: '{s}'"))
    }
}

// Strips linspace rounding noise so 0.05:0.5:10 yields 0.15, not 0.15000000000000002.
fn round12(v: f64) -> f64 {
    format!("{v:.12}").parse().unwrap_or(v)
}

fn parse_f64_list(flag: &'static str, s: &str) -> Result<Vec<f64>, CliError> {
    parse_list(s).map_err(|m| CliError::flag(flag, m))
}

fn parse_u64_list(flag: &'static str, s: &str) -> Result<Vec<u64>, CliError> {
    parse_f64_list(flag, s)?
        .into_iter()
        .map(|v| {
            if v >= 0.0 && v.fract() == 0.0 && v < 2f64.powi(53) {
                Ok(v as u64)
            } else {
                Err(CliError::flag(
                    flag,
                    format!("expected a nonnegative integer, got {v}"),
                ))
            }
        })
        .collect()
}

fn parse_usize_list(flag: &'static str, s: &str) -> Result<Vec<usize>, CliError> {
    Ok(parse_u64_list(flag, s)?
        .into_iter()
        .map(|v| v as usize)
        .collect())
}

/// Seconds since the Unix epoch, used to name output files.
pub fn timestamp() -> String {
    SystemTime::now()
        .duration_since(UNIX_EPOCH)
        .map(|d| d.as_secs())
        .unwrap_or(0)
        .to_string()
}

/// Runs the invocation and returns the files written.
pub fn execute(inv: &CliInvocation, stamp: &str) -> Result<Vec<PathBuf>, CliError> {
    output::ensure_dir(&inv.out_dir)?;
    match &inv.task {
        Task::Experiment(spec) => {
            let start = Instant::now();
            let mut result = experiments::run(spec)?;
            result.meta.wall_clock_secs = start.elapsed().as_secs_f64();
            Ok(output::emit_results(
                &result,
                &inv.formats,
                &inv.out_dir,
                stamp,
            )?)
        }
        Task::AssignMap(spec) => {
            let mut written = Vec::new();
            for &boundary in &spec.boundaries {
                let config = spec.config(boundary)?;
                let costs = TransportCosts::new(&config);
                let choices = market::customer_choices(&config, &costs);
                let path = inv
                    .out_dir
                    .join(format!("assign-map_{stamp}_{boundary}.dat"));
                output::write_atomic(
                    &path,
                    output::assignment_grid_text(&choices, spec.n_side).as_bytes(),
                )?;
                written.push(path);
            }
            Ok(written)
        }
    }
}

/// Entry point shared by the binary: returns the process exit code.
pub fn main_with_args(argv: Vec<OsString>) -> i32 {
    if is_informational(&argv) {
        if let Err(e) = Cli::try_parse_from(&argv) {
            let _ = e.print();
        }
        return 0;
    }
    let result = parse_and_validate(argv).and_then(|inv| execute(&inv, &timestamp()));
    match result {
        Ok(paths) => {
            for p in paths {
                println!("{}", p.display());
            }
            0
        }
        Err(e) => {
            let msg = e.to_string().replace('\n', " ");
            if use_color() {
                eprintln!("\x1b[31merror:\x1b[0m {msg}");
            } else {
                eprintln!("error: {msg}");
            }
            2
        }
    }
}

fn use_color() -> bool {
    use std::io::IsTerminal;
    std::env::var_os("NO_COLOR").is_none_or(|v| v.is_empty()) && std::io::stderr().is_terminal()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn parse(args: &str) -> Result<CliInvocation, CliError> {
        parse_and_validate(std::iter::once("torus-market").chain(args.split_whitespace()))
    }

    fn spec(args: &str) -> ExperimentSpec {
        match parse(args).unwrap().task {
            Task::Experiment(s) => s,
            other => panic!("unexpected task {other:?}"),
        }
    }

    #[test]
    fn two_firm_defaults() {
        let s = spec("two-firm --d 0.5 --n-side 80");
        assert_eq!(s.d_list, vec![0.5]);
        assert_eq!(s.n_list, vec![80]);
        assert_eq!((s.r, s.gamma, s.steps, s.burn_in), (1.0, 1.0, 120, 80));
        assert_eq!(s.method, Method::exact());
        assert_eq!(s.seeds, (0..20).collect::<Vec<u64>>());
        assert_eq!(s.boundary, Boundary::Periodic);
    }

    #[test]
    fn multi_firm_list() {
        let s = spec("multi-firm --m 8,16,32,64 --gamma 1 --fit-min-m 8");
        assert_eq!(s.m_list, vec![8, 16, 32, 64]);
        assert_eq!(s.fit_min_m, 8);
    }

    #[test]
    fn burn_in_error() {
        let e = parse("two-firm --burn-in 200 --steps 120").unwrap_err();
        assert!(e.to_string().contains("burn-in must be < steps"), "{e}");
    }

    #[test]
    fn range_shorthand() {
        let s = spec("nash-table --d 0.05:0.5:10");
        assert_eq!(s.d_list.len(), 10);
        assert_eq!(s.d_list[2], 0.15);
        assert_eq!(s.d_list[9], 0.5);
        let s = spec("two-firm --seeds 0:4:5,10");
        assert_eq!(s.seeds, vec![0, 1, 2, 3, 4, 10]);
    }

    #[test]
    fn bad_values_name_the_flag() {
        assert!(parse("two-firm --gamma 0")
            .unwrap_err()
            .to_string()
            .contains("--gamma"));
        assert!(parse("two-firm --gamma -1").is_err());
        assert!(parse("two-firm --d 1.5")
            .unwrap_err()
            .to_string()
            .contains("(0, 1)"));
        assert!(parse("two-firm --formats csv,xml")
            .unwrap_err()
            .to_string()
            .contains("--formats"));
        assert!(parse("two-firm --seeds 1.5")
            .unwrap_err()
            .to_string()
            .contains("--seeds"));
        assert!(parse("two-firm --grid-points 10").is_err());
        let e = parse("two-firm --bogus 1").unwrap_err().to_string();
        assert!(e.contains("--bogus") && !e.contains('\n'), "{e}");
        assert!(parse("").is_err());
    }

    #[test]
    fn grid_method_flags() {
        let s = spec("two-firm --method grid --grid-points 500 --price-max 2");
        assert_eq!(
            s.method,
            Method::Grid {
                grid_points: 500,
                price_max: 2.0
            }
        );
    }

    #[test]
    fn gamma_list_only_for_sweep() {
        assert!(parse("two-firm --gamma 1,2").is_err());
        let s = spec("gamma-sweep --gamma 0.5,1,2");
        assert_eq!(s.gamma_list, vec![0.5, 1.0, 2.0]);
    }

    #[test]
    fn assign_map_defaults() {
        let inv = parse("assign-map").unwrap();
        assert_eq!(inv.subcommand(), "assign-map");
        let Task::AssignMap(a) = inv.task else {
            panic!()
        };
        assert_eq!(a.firms.len(), 2);
        assert_eq!(a.firms[0], (Point::new(0.2, 0.5), 0.8));
        assert_eq!(a.boundaries, vec![Boundary::Periodic, Boundary::Open]);
        assert!(parse("assign-map --firms 0.2:0.5").is_err());
    }
}
