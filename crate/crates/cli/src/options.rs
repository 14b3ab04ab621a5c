//! Flags, the flat TOML config file, and their resolution into a complete
//! [`ExperimentSpec`]. Flags override the config file, which overrides the
//! built-in defaults.

use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use clap::{Args, ValueEnum};
use serde::{Deserialize, Serialize, Serializer};
use wiener_coding::{AGrid, Scheme};

use crate::error::CliError;

/// Environment variable naming the directory used when `--out` is absent.
pub const OUT_DIR_ENV: &str = "WIENER_CODING_OUT_DIR";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum Format {
    Csv,
    Json,
}

impl Format {
    pub fn extension(self) -> &'static str {
        match self {
            Format::Csv => "csv",
            Format::Json => "json",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum SchemeArg {
    Monotone,
    Uniform,
    Ideal,
}

impl From<SchemeArg> for Scheme {
    fn from(s: SchemeArg) -> Self {
        match s {
            SchemeArg::Monotone => Scheme::Monotone,
            SchemeArg::Uniform => Scheme::UniformBenchmark,
            SchemeArg::Ideal => Scheme::IdealBenchmark,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Command {
    Analyze,
    Optimize,
    Simulate,
    Sweep,
}

impl fmt::Display for Command {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let name = match self {
            Command::Analyze => "analyze",
            Command::Optimize => "optimize",
            Command::Simulate => "simulate",
            Command::Sweep => "sweep",
        };
        f.write_str(name)
    }
}

fn parse_real(field: &str, s: &str) -> Result<f64, CliError> {
    match s.trim().to_ascii_lowercase().as_str() {
        "inf" | "+inf" | "infinity" => Ok(f64::INFINITY),
        t => t
            .parse::<f64>()
            .map_err(|_| CliError::usage(field, format!("`{s}` is not a number"))),
    }
}

/// Four code lengths, `l1,l2,l3,l4`; `inf` is accepted.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Lengths(pub [f64; 4]);

impl FromStr for Lengths {
    type Err = CliError;

    fn from_str(s: &str) -> Result<Self, CliError> {
        let parts: Vec<&str> = s.split(',').collect();
        if parts.len() != 4 {
            return Err(CliError::usage(
                "l",
                format!("expected four comma-separated lengths, got `{s}`"),
            ));
        }
        let mut out = [0.0; 4];
        for (o, p) in out.iter_mut().zip(&parts) {
            *o = parse_real("l", p)?;
        }
        Ok(Lengths(out))
    }
}

/// Maximum sampling rate; `inf` for none.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Fmax(pub f64);

impl FromStr for Fmax {
    type Err = CliError;

    fn from_str(s: &str) -> Result<Self, CliError> {
        parse_real("fmax", s).map(Fmax)
    }
}

fn clap_parse<T: FromStr<Err = CliError>>(s: &str) -> Result<T, String> {
    s.parse().map_err(|e: CliError| e.to_string())
}

/// Config values may be TOML numbers or strings.
#[derive(Debug, Clone, Deserialize)]
#[serde(untagged)]
enum NumberOrText {
    Number(f64),
    Text(String),
}

#[derive(Debug, Clone, Deserialize)]
#[serde(untagged)]
enum LengthsValue {
    List(Vec<NumberOrText>),
    Text(String),
}

/// Flags shared by every subcommand; anything left unset falls back to
/// the config file and then to the defaults.
#[derive(Debug, Clone, Default, Args)]
pub struct Options {
    /// Upper threshold a (unit variance).
    #[arg(long, allow_negative_numbers = true)]
    pub a: Option<f64>,
    /// Lower threshold b; defaults to a.
    #[arg(long, allow_negative_numbers = true)]
    pub b: Option<f64>,
    /// Threshold slope mu (unit variance); `inf` for the large-slope limit.
    #[arg(long, allow_negative_numbers = true, value_parser = clap_parse::<Fmax>)]
    pub mu: Option<Fmax>,
    /// Variance of the process per unit time.
    #[arg(long, allow_negative_numbers = true)]
    pub sigma2: Option<f64>,
    /// Code lengths l1,l2,l3,l4.
    #[arg(long, allow_hyphen_values = true, value_parser = clap_parse::<Lengths>, value_name = "L1,L2,L3,L4")]
    pub l: Option<Lengths>,
    /// Maximum sampling rate, or `inf`.
    #[arg(long, allow_negative_numbers = true, value_parser = clap_parse::<Fmax>)]
    pub fmax: Option<Fmax>,
    /// Threshold grid lo:hi:step (a = b at every point).
    #[arg(long, value_name = "LO:HI:STEP")]
    pub grid: Option<String>,
    /// Simulation time step.
    #[arg(long, allow_negative_numbers = true)]
    pub eps: Option<f64>,
    /// Simulated time per replication.
    #[arg(long, allow_negative_numbers = true)]
    pub horizon: Option<f64>,
    /// Master seed; replication r uses stream r of this seed.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Replications per simulation.
    #[arg(long)]
    pub reps: Option<usize>,
    /// Largest length tried by the integer search.
    #[arg(long)]
    pub lmax: Option<u32>,
    /// Scheme to simulate.
    #[arg(long, value_enum)]
    pub scheme: Option<SchemeArg>,
    #[arg(long, value_enum)]
    pub format: Option<Format>,
    /// Output file; defaults to $WIENER_CODING_OUT_DIR/<command>.<ext> or stdout.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Cycle log (CSV) for `simulate`.
    #[arg(long)]
    pub cycles: Option<PathBuf>,
    /// Add simulated overlays to `sweep`.
    #[arg(long)]
    pub simulate: bool,
    /// Skip the golden-section refinement in `optimize`.
    #[arg(long)]
    pub no_refine: bool,
    /// Overwrite existing output files.
    #[arg(long)]
    pub force: bool,
    /// Flat TOML file with the same keys as the flags.
    #[arg(long)]
    pub config: Option<PathBuf>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields, rename_all = "kebab-case")]
struct FileOptions {
    a: Option<f64>,
    b: Option<f64>,
    mu: Option<NumberOrText>,
    sigma2: Option<f64>,
    l: Option<LengthsValue>,
    fmax: Option<NumberOrText>,
    grid: Option<String>,
    eps: Option<f64>,
    horizon: Option<f64>,
    seed: Option<u64>,
    reps: Option<usize>,
    lmax: Option<u32>,
    scheme: Option<SchemeArg>,
    format: Option<Format>,
    out: Option<PathBuf>,
    cycles: Option<PathBuf>,
    simulate: Option<bool>,
    no_refine: Option<bool>,
}

fn real_value(field: &str, v: &NumberOrText) -> Result<f64, CliError> {
    match v {
        NumberOrText::Number(x) => Ok(*x),
        NumberOrText::Text(s) => parse_real(field, s),
    }
}

fn load_file(path: &Path) -> Result<Options, CliError> {
    let config_err = |reason: String| CliError::Config {
        path: path.to_owned(),
        reason,
    };
    let text = std::fs::read_to_string(path).map_err(|e| config_err(e.to_string()))?;
    let f: FileOptions = toml::from_str(&text).map_err(|e| config_err(e.to_string()))?;
    let l = match f.l {
        None => None,
        Some(LengthsValue::Text(s)) => Some(s.parse()?),
        Some(LengthsValue::List(v)) => {
            if v.len() != 4 {
                return Err(CliError::usage("l", "config list must have four entries"));
            }
            let mut out = [0.0; 4];
            for (o, x) in out.iter_mut().zip(&v) {
                *o = real_value("l", x)?;
            }
            Some(Lengths(out))
        }
    };
    Ok(Options {
        a: f.a,
        b: f.b,
        mu: f
            .mu
            .as_ref()
            .map(|v| real_value("mu", v).map(Fmax))
            .transpose()?,
        sigma2: f.sigma2,
        l,
        fmax: f
            .fmax
            .as_ref()
            .map(|v| real_value("fmax", v).map(Fmax))
            .transpose()?,
        grid: f.grid,
        eps: f.eps,
        horizon: f.horizon,
        seed: f.seed,
        reps: f.reps,
        lmax: f.lmax,
        scheme: f.scheme,
        format: f.format,
        out: f.out,
        cycles: f.cycles,
        simulate: f.simulate.unwrap_or(false),
        no_refine: f.no_refine.unwrap_or(false),
        force: false,
        config: None,
    })
}

fn lossless<S: Serializer>(x: &f64, s: S) -> Result<S::Ok, S::Error> {
    if x.is_finite() {
        s.serialize_f64(*x)
    } else {
        s.collect_str(x)
    }
}

fn lossless4<S: Serializer>(x: &[f64; 4], s: S) -> Result<S::Ok, S::Error> {
    use serde::ser::SerializeSeq;
    let mut seq = s.serialize_seq(Some(4))?;
    for v in x {
        if v.is_finite() {
            seq.serialize_element(v)?;
        } else {
            seq.serialize_element(&v.to_string())?;
        }
    }
    seq.end()
}

/// Every input that determines the output, with defaults filled in.
#[derive(Debug, Clone, Serialize)]
pub struct ExperimentSpec {
    pub command: Command,
    pub a: f64,
    pub b: f64,
    #[serde(serialize_with = "lossless")]
    pub mu: f64,
    pub sigma2: f64,
    #[serde(serialize_with = "lossless4")]
    pub l: [f64; 4],
    #[serde(serialize_with = "lossless")]
    pub fmax: f64,
    pub grid: Option<AGrid>,
    pub eps: f64,
    pub horizon: f64,
    pub seed: u64,
    pub reps: usize,
    pub lmax: u32,
    pub scheme: SchemeArg,
    pub simulate: bool,
    pub format: Format,
    #[serde(skip)]
    pub out: Option<PathBuf>,
    #[serde(skip)]
    pub cycles: Option<PathBuf>,
    #[serde(skip)]
    pub force: bool,
}

impl ExperimentSpec {
    pub fn resolve(command: Command, flags: Options) -> Result<Self, CliError> {
        let file = match &flags.config {
            Some(path) => load_file(path)?,
            None => Options::default(),
        };
        let pick = |x: Option<f64>, y: Option<f64>| x.or(y);
        let a = pick(flags.a, file.a).unwrap_or(1.0);
        let grid_text = flags.grid.clone().or(file.grid.clone());
        let grid = match grid_text {
            Some(text) => {
                Some(AGrid::parse(&text).map_err(|e| CliError::usage("grid", e.to_string()))?)
            }
            None => match command {
                Command::Optimize | Command::Sweep => Some(AGrid::default()),
                _ => None,
            },
        };
        let grid = grid.map(|g| AGrid {
            refine: !(flags.no_refine || file.no_refine),
            ..g
        });
        let format = flags.format.or(file.format).unwrap_or(match command {
            Command::Simulate => Format::Json,
            _ => Format::Csv,
        });
        let spec = Self {
            command,
            a,
            b: pick(flags.b, file.b).unwrap_or(a),
            mu: flags.mu.or(file.mu).map_or(10.0, |m| m.0),
            sigma2: pick(flags.sigma2, file.sigma2).unwrap_or(1.0),
            l: flags.l.or(file.l).map_or([2.0; 4], |l| l.0),
            fmax: flags.fmax.or(file.fmax).map_or(f64::INFINITY, |f| f.0),
            grid,
            eps: pick(flags.eps, file.eps).unwrap_or(1e-2),
            horizon: pick(flags.horizon, file.horizon).unwrap_or(1e5),
            seed: flags.seed.or(file.seed).unwrap_or(0),
            reps: flags.reps.or(file.reps).unwrap_or(20),
            lmax: flags.lmax.or(file.lmax).unwrap_or(16),
            scheme: flags.scheme.or(file.scheme).unwrap_or(SchemeArg::Monotone),
            simulate: flags.simulate || file.simulate,
            format,
            out: flags.out.or(file.out),
            cycles: flags.cycles.or(file.cycles),
            force: flags.force,
        };
        spec.check()?;
        Ok(spec)
    }

    fn check(&self) -> Result<(), CliError> {
        let positive = |field: &str, x: f64| {
            if x > 0.0 {
                Ok(())
            } else {
                Err(CliError::usage(field, format!("must be > 0, got {x}")))
            }
        };
        for (field, x) in [("a", self.a), ("b", self.b)] {
            if !(x >= 0.0 && x.is_finite()) {
                return Err(CliError::usage(
                    field,
                    format!("must be finite and >= 0, got {x}"),
                ));
            }
        }
        positive("mu", self.mu)?;
        positive("sigma2", self.sigma2)?;
        positive("fmax", self.fmax)?;
        positive("eps", self.eps)?;
        positive("horizon", self.horizon)?;
        for l in self.l {
            positive("l", l)?;
        }
        if self.reps == 0 {
            return Err(CliError::usage("reps", "must be >= 1"));
        }
        if self.cycles.is_some() && self.command != Command::Simulate {
            return Err(CliError::usage(
                "cycles",
                "only `simulate` writes a cycle log",
            ));
        }
        Ok(())
    }

    /// Where the main output goes; `None` means stdout.
    pub fn output_path(&self) -> Option<PathBuf> {
        if let Some(p) = &self.out {
            return Some(p.clone());
        }
        std::env::var_os(OUT_DIR_ENV)
            .filter(|d| !d.is_empty())
            .map(|d| PathBuf::from(d).join(format!("{}.{}", self.command, self.format.extension())))
    }
}
