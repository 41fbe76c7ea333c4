use std::f64::consts::FRAC_PI_4;
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};
use hbell::bell::EventScheme;
use hbell::optimize::{Constraint, Direction, Side, DEFAULT_ALPHA_MAX, DEFAULT_RESTARTS};
use hbell::{InputSpec, Setting};

#[derive(Parser, Debug)]
#[command(
    name = "hbell",
    version,
    about = "Clauser–Horne tests with weak-field homodyne detection",
    args_override_self = true
)]
pub struct Cli {
    /// Re-run the command recorded in a manifest and check that every output
    /// is reproduced byte for byte.
    #[arg(long, value_name = "MANIFEST")]
    pub replay: Option<PathBuf>,

    /// JSON file of flag values (`{"command": "scan", "p-grid": "0.1:0.9:0.1"}`);
    /// flags given on the command line win.
    #[arg(long, value_name = "FILE", global = true)]
    pub config: Option<PathBuf>,

    /// Worker threads; defaults to $HBELL_THREADS, then to all cores. Results
    /// do not depend on it.
    #[arg(long, global = true)]
    pub threads: Option<usize>,

    #[command(subcommand)]
    pub command: Option<Command>,
}

#[derive(Subcommand, Debug, Clone)]
pub enum Command {
    /// Compare every closed form with the Fock-space simulation on random cases.
    CheckOracle(CheckOracleArgs),
    /// Evaluate CH for given settings or a preset.
    ChEval(ChEvalArgs),
    /// Find the extremal CH value at one source weight.
    Optimize(OptimizeArgs),
    /// Optimise over a grid of source weights.
    Scan(ScanArgs),
    /// Map where a CH bound is violated over (p, alpha^2).
    Region(RegionArgs),
    /// Relative CH change under oscillator intensity noise.
    Robustness(RobustnessArgs),
    /// Lowest detector efficiency that still violates the upper bound.
    EtaThreshold(EtaThresholdArgs),
    /// Hardy's construction and its CH value.
    Hardy(HardyArgs),
}

impl Command {
    pub fn name(&self) -> &'static str {
        match self {
            Command::CheckOracle(_) => "check-oracle",
            Command::ChEval(_) => "ch-eval",
            Command::Optimize(_) => "optimize",
            Command::Scan(_) => "scan",
            Command::Region(_) => "region",
            Command::Robustness(_) => "robustness",
            Command::EtaThreshold(_) => "eta-threshold",
            Command::Hardy(_) => "hardy",
        }
    }

    pub fn output(&self) -> &OutputArgs {
        match self {
            Command::CheckOracle(a) => &a.out,
            Command::ChEval(a) => &a.out,
            Command::Optimize(a) => &a.out,
            Command::Scan(a) => &a.out,
            Command::Region(a) => &a.out,
            Command::Robustness(a) => &a.out,
            Command::EtaThreshold(a) => &a.out,
            Command::Hardy(a) => &a.out,
        }
    }
}

pub const SUBCOMMANDS: [&str; 8] = [
    "check-oracle",
    "ch-eval",
    "optimize",
    "scan",
    "region",
    "robustness",
    "eta-threshold",
    "hardy",
];

#[derive(Args, Debug, Clone, Default)]
pub struct OutputArgs {
    /// Write result rows as CSV.
    #[arg(long, value_name = "PATH")]
    pub csv: Option<PathBuf>,
    /// Write results as JSON with the run manifest embedded.
    #[arg(long, value_name = "PATH")]
    pub json: Option<PathBuf>,
    /// Where to write the run manifest [default: next to the first output].
    #[arg(long, value_name = "PATH")]
    pub manifest: Option<PathBuf>,
}

#[derive(ValueEnum, Debug, Clone, Copy, PartialEq, Eq)]
pub enum Family {
    Vac1photon,
    Unbalanced,
    Photonpair,
}

#[derive(Args, Debug, Clone)]
pub struct SourceArgs {
    /// Source state family.
    #[arg(long, value_enum, default_value_t = Family::Vac1photon)]
    pub input: Family,
    /// Weight of the non-vacuum component.
    #[arg(long)]
    pub p: Option<f64>,
    /// Splitting angle of the unbalanced family.
    #[arg(long, default_value_t = FRAC_PI_4)]
    pub xi: f64,
    /// Detection events: dm, cm, fixed:N,M or mixed:N,M (N photons in c, M in d).
    #[arg(long, default_value = "dm", value_parser = parse_scheme)]
    pub scheme: EventScheme,
    /// Detector efficiency.
    #[arg(long, default_value_t = 1.0)]
    pub eta: f64,
}

impl SourceArgs {
    pub fn input_at(&self, p: f64) -> InputSpec {
        match self.input {
            Family::Vac1photon => InputSpec::Vac1Photon { p },
            Family::Unbalanced => InputSpec::Unbalanced { p, xi: self.xi },
            Family::Photonpair => InputSpec::PhotonPair { p },
        }
    }
}

#[derive(Args, Debug, Clone)]
pub struct SearchArgs {
    /// Local searches from quasi-random starting points.
    #[arg(long, default_value_t = DEFAULT_RESTARTS)]
    pub restarts: usize,
    /// Master seed; the same seed reproduces the same result.
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Upper bound on every oscillator amplitude.
    #[arg(long, default_value_t = DEFAULT_ALPHA_MAX)]
    pub alpha_max: f64,
}

#[derive(ValueEnum, Debug, Clone, Copy, PartialEq, Eq)]
pub enum Preset {
    /// Hardy's settings (needs 0 < p < 1).
    Hardy,
    /// Primed settings at alpha^2 = R = 0.1959, phi = pi/2; unprimed off.
    P1Optimal,
    /// Maximise with the primed settings off.
    OnoffMax,
    /// Minimise with the unprimed settings off.
    OnoffMin,
}

#[derive(ValueEnum, Debug, Clone, Copy, PartialEq, Eq)]
pub enum DirectionArg {
    Max,
    Min,
}

impl From<DirectionArg> for Direction {
    fn from(d: DirectionArg) -> Self {
        match d {
            DirectionArg::Max => Direction::Maximize,
            DirectionArg::Min => Direction::Minimize,
        }
    }
}

#[derive(ValueEnum, Debug, Clone, Copy, PartialEq, Eq)]
pub enum ConstraintArg {
    Free,
    OnoffUnprimedOff,
    OnoffPrimedOff,
    OnoffCrossed,
    Symmetric,
}

impl From<ConstraintArg> for Constraint {
    fn from(c: ConstraintArg) -> Self {
        match c {
            ConstraintArg::Free => Constraint::Free,
            ConstraintArg::OnoffUnprimedOff => Constraint::OnOffUnprimedOff,
            ConstraintArg::OnoffPrimedOff => Constraint::OnOffPrimedOff,
            ConstraintArg::OnoffCrossed => Constraint::OnOffCrossed,
            ConstraintArg::Symmetric => Constraint::Symmetric,
        }
    }
}

#[derive(ValueEnum, Debug, Clone, Copy, PartialEq, Eq)]
pub enum SideArg {
    Upper,
    Lower,
}

impl From<SideArg> for Side {
    fn from(s: SideArg) -> Self {
        match s {
            SideArg::Upper => Side::Upper,
            SideArg::Lower => Side::Lower,
        }
    }
}

#[derive(Args, Debug, Clone)]
pub struct CheckOracleArgs {
    #[arg(long, default_value_t = 1000)]
    pub cases: usize,
    #[arg(long, default_value_t = 1)]
    pub seed: u64,
    /// Largest accepted absolute difference.
    #[arg(long, default_value_t = 1e-9)]
    pub tol: f64,
    #[command(flatten)]
    pub out: OutputArgs,
}

#[derive(Args, Debug, Clone)]
pub struct ChEvalArgs {
    #[command(flatten)]
    pub source: SourceArgs,
    #[arg(long, value_enum)]
    pub preset: Option<Preset>,
    /// Party 1, unprimed: "alpha,phi,R" or "off".
    #[arg(long, value_parser = parse_setting)]
    pub a: Option<Setting>,
    /// Party 1, primed.
    #[arg(long, value_parser = parse_setting)]
    pub ap: Option<Setting>,
    /// Party 2, unprimed.
    #[arg(long, value_parser = parse_setting)]
    pub b: Option<Setting>,
    /// Party 2, primed.
    #[arg(long, value_parser = parse_setting)]
    pub bp: Option<Setting>,
    #[command(flatten)]
    pub search: SearchArgs,
    #[command(flatten)]
    pub out: OutputArgs,
}

#[derive(Args, Debug, Clone)]
pub struct ProblemArgs {
    #[arg(long, value_enum, default_value_t = DirectionArg::Max)]
    pub direction: DirectionArg,
    #[arg(long, value_enum, default_value_t = ConstraintArg::Free)]
    pub constraint: ConstraintArg,
    /// onoff-max or onoff-min; overrides direction and constraint.
    #[arg(long, value_enum)]
    pub preset: Option<Preset>,
}

#[derive(Args, Debug, Clone)]
pub struct OptimizeArgs {
    #[command(flatten)]
    pub source: SourceArgs,
    #[command(flatten)]
    pub problem: ProblemArgs,
    #[command(flatten)]
    pub search: SearchArgs,
    #[command(flatten)]
    pub out: OutputArgs,
}

#[derive(Args, Debug, Clone)]
pub struct ScanArgs {
    #[command(flatten)]
    pub source: SourceArgs,
    #[command(flatten)]
    pub problem: ProblemArgs,
    /// "start:stop:step" (inclusive) or a comma-separated list.
    #[arg(long, value_parser = parse_grid)]
    pub p_grid: Grid,
    /// Also compare the optimal intensities with the empirical fit.
    #[arg(long)]
    pub fit_check: bool,
    #[command(flatten)]
    pub search: SearchArgs,
    #[command(flatten)]
    pub out: OutputArgs,
}

#[derive(Args, Debug, Clone)]
pub struct RegionArgs {
    #[command(flatten)]
    pub source: SourceArgs,
    #[arg(long, value_enum, default_value_t = SideArg::Upper)]
    pub side: SideArg,
    #[arg(long, value_parser = parse_grid)]
    pub p_grid: Grid,
    /// Oscillator intensities alpha^2.
    #[arg(long, value_parser = parse_grid)]
    pub alpha_grid: Grid,
    /// Also bisect the source weight where the violation sets in, within
    /// "lo:hi".
    #[arg(long, value_parser = parse_interval)]
    pub onset: Option<(f64, f64)>,
    #[arg(long, default_value_t = 1e-4)]
    pub onset_tol: f64,
    #[command(flatten)]
    pub search: SearchArgs,
    #[command(flatten)]
    pub out: OutputArgs,
}

#[derive(Args, Debug, Clone)]
pub struct RobustnessArgs {
    #[command(flatten)]
    pub source: SourceArgs,
    #[arg(long, value_enum, default_value_t = SideArg::Upper)]
    pub side: SideArg,
    #[arg(long, value_parser = parse_grid)]
    pub p_grid: Grid,
    /// Relative deviations of the oscillator intensity.
    #[arg(long, value_parser = parse_grid, default_value = "0.05,0.1")]
    pub sigma: Grid,
    #[arg(long, default_value_t = 5000)]
    pub samples: usize,
    #[command(flatten)]
    pub search: SearchArgs,
    #[command(flatten)]
    pub out: OutputArgs,
}

#[derive(Args, Debug, Clone)]
pub struct EtaThresholdArgs {
    #[command(flatten)]
    pub source: SourceArgs,
    /// Smallest CH value counted as a violation.
    #[arg(long, default_value_t = 1e-5)]
    pub significance: f64,
    #[arg(long, value_parser = parse_grid, default_value = "0.005:0.105:0.0025")]
    pub p_grid: Grid,
    #[command(flatten)]
    pub search: SearchArgs,
    #[command(flatten)]
    pub out: OutputArgs,
}

#[derive(Args, Debug, Clone)]
pub struct HardyArgs {
    #[arg(long)]
    pub p: f64,
    #[command(flatten)]
    pub out: OutputArgs,
}

/// A list of grid values.
#[derive(Debug, Clone, PartialEq)]
pub struct Grid(pub Vec<f64>);

fn parse_f64(s: &str) -> Result<f64, String> {
    let v: f64 = s.trim().parse().map_err(|_| format!("not a number: {s:?}"))?;
    if v.is_finite() {
        Ok(v)
    } else {
        Err(format!("not a finite number: {s:?}"))
    }
}

/// `start:stop:step` with both ends included, or `a,b,c`. Range points are
/// rounded to 12 decimals so `0.1:0.9:0.1` yields `0.3`, not
/// `0.30000000000000004`.
pub fn parse_grid(s: &str) -> Result<Grid, String> {
    if s.contains(':') {
        let parts: Vec<f64> = s.split(':').map(parse_f64).collect::<Result<_, _>>()?;
        let [start, stop, step] = parts[..] else {
            return Err(format!("expected start:stop:step, got {s:?}"));
        };
        if !(step > 0.0) || stop < start {
            return Err(format!("need step > 0 and stop >= start in {s:?}"));
        }
        let count = ((stop - start) / step + 1e-9).floor() as usize + 1;
        if count > 1_000_000 {
            return Err(format!("grid {s:?} has too many points"));
        }
        let round = |x: f64| (x * 1e12).round() / 1e12;
        Ok(Grid((0..count).map(|i| round(start + i as f64 * step)).collect()))
    } else {
        let v: Vec<f64> = s
            .split(',')
            .filter(|t| !t.trim().is_empty())
            .map(parse_f64)
            .collect::<Result<_, _>>()?;
        Ok(Grid(v))
    }
}

pub fn parse_interval(s: &str) -> Result<(f64, f64), String> {
    match s.split(':').map(parse_f64).collect::<Result<Vec<_>, _>>()?[..] {
        [lo, hi] if lo < hi => Ok((lo, hi)),
        _ => Err(format!("expected lo:hi with lo < hi, got {s:?}")),
    }
}

pub fn parse_setting(s: &str) -> Result<Setting, String> {
    if s.trim().eq_ignore_ascii_case("off") {
        return Ok(Setting::off());
    }
    match s.split(',').map(parse_f64).collect::<Result<Vec<_>, _>>()?[..] {
        [alpha, phi, r] => Ok(Setting::new(alpha, phi, r)),
        _ => Err(format!("expected alpha,phi,R or off, got {s:?}")),
    }
}

pub fn parse_scheme(s: &str) -> Result<EventScheme, String> {
    let s = s.trim().to_ascii_lowercase();
    let nm = |rest: &str| -> Result<(u32, u32), String> {
        match rest.split(',').map(|t| t.trim().parse::<u32>()).collect::<Result<Vec<_>, _>>() {
            Ok(v) if v.len() == 2 => Ok((v[0], v[1])),
            _ => Err(format!("expected N,M photon counts, got {rest:?}")),
        }
    };
    match s.as_str() {
        "dm" => Ok(EventScheme::SinglePhotonDm),
        "cm" => Ok(EventScheme::SinglePhotonCm),
        _ => {
            if let Some(rest) = s.strip_prefix("fixed:") {
                let (n, m) = nm(rest)?;
                Ok(EventScheme::FixedNm { n, m })
            } else if let Some(rest) = s.strip_prefix("mixed:") {
                let (n, m) = nm(rest)?;
                Ok(EventScheme::MixedOnOff { n, m })
            } else {
                Err(format!("unknown scheme {s:?}; use dm, cm, fixed:N,M or mixed:N,M"))
            }
        }
    }
}
