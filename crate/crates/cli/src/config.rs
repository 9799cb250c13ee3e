//! Command-line surface: flag definitions, config-file parsing, and the
//! merge of defaults < config file < explicit flags into a [`Settings`].

use clap::{Args, Parser, Subcommand, ValueEnum};
use std::f64::consts::FRAC_PI_2;
use std::path::PathBuf;

/// Failure classes with distinct exit codes: configuration problems name the
/// offending key and exit 2; numerical failures carry the solver diagnostic
/// and exit 1.
pub enum Failure {
    Config(String),
    Numerical(String),
}

/// Map a library error to a CLI failure. Parameter-validation errors are
/// configuration mistakes (the user can fix the key); everything else is a
/// numerical failure.
pub fn lib_err(e: qsense::Error) -> Failure {
    match &e {
        qsense::Error::InvalidParameter { name, .. } => {
            Failure::Config(format!("key `{name}`: {e}"))
        }
        _ => Failure::Numerical(e.to_string()),
    }
}

#[derive(Parser)]
#[command(
    name = "qsense",
    version,
    about = "Quantum Fisher information scans for force sensing with a damped oscillator",
    long_about = "Tabulates bath kernels and oscillator response functions, optimizes the \
                  measurement quadrature and the sequential-window protocol, and fits the \
                  energy scaling of the optimal sensitivity. Every run writes one data file \
                  (CSV or JSON) plus a `<out>.meta.json` sidecar with the fully resolved \
                  parameters, so any output can be recomputed from its sidecar alone."
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Subcommand)]
pub enum Command {
    /// Tabulate the friction memory kernel and the noise kernel on a time grid
    Kernels(CommonArgs),
    /// Solve the damped oscillator response G(t) and tabulate G, G', G''
    Green(CommonArgs),
    /// Optimal single-window QFI H_opt(t) and measurement angle over a time grid
    QfiCurve(CommonArgs),
    /// Scan the window count N of the sequential protocol at fixed squeezing
    ProtocolScan(CommonArgs),
    /// Sweep the squeezing parameter, optimize the protocol at each point, and
    /// fit the energy scaling of N_opt and H_opt
    Fit(CommonArgs),
    /// Closed-form large-squeezing optimum (N_opt, H_opt, tau_opt) for the
    /// configured bath
    Asymptotics(CommonArgs),
    /// Canned parameter bundles for the reference figures; writes one data
    /// file per series. Physics flags are fixed by the bundle and rejected.
    Figure {
        #[arg(value_enum)]
        which: FigureId,
        #[command(flatten)]
        args: CommonArgs,
    },
}

#[derive(Args)]
pub struct CommonArgs {
    /// Bath coupling rate (default 0.1)
    #[arg(long, allow_negative_numbers = true)]
    pub gamma: Option<f64>,
    /// Bath cutoff frequency (default 10)
    #[arg(long, allow_negative_numbers = true)]
    pub lambda: Option<f64>,
    /// Bath temperature (default 0)
    #[arg(long, allow_negative_numbers = true)]
    pub temperature: Option<f64>,
    /// Force envelope: constant or resonant (default constant)
    #[arg(long, value_enum)]
    pub shape: Option<ShapeArg>,
    /// Oscillator environment (default nonmarkovian)
    #[arg(long, value_enum)]
    pub bath: Option<BathArg>,
    /// Squeezing parameter of the probe state (default 1)
    #[arg(long, allow_negative_numbers = true)]
    pub r: Option<f64>,
    /// Start of a squeezing sweep (fit command)
    #[arg(long = "r-min", allow_negative_numbers = true)]
    pub r_min: Option<f64>,
    /// End of a squeezing sweep (fit command)
    #[arg(long = "r-max", allow_negative_numbers = true)]
    pub r_max: Option<f64>,
    /// Increment of a squeezing sweep (fit command)
    #[arg(long = "r-step", allow_negative_numbers = true)]
    pub r_step: Option<f64>,
    /// Total interrogation time (default pi/2)
    #[arg(long = "t-tot", allow_negative_numbers = true)]
    pub t_tot: Option<f64>,
    /// Integration step of the time grid (default 0.005)
    #[arg(long, allow_negative_numbers = true)]
    pub step: Option<f64>,
    /// Cap on the window count explored by protocol scans
    #[arg(long = "n-max")]
    pub n_max: Option<u32>,
    /// Output path (default `<command>.csv` in the working directory)
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Output format (default csv); the metadata sidecar is always JSON
    #[arg(long, value_enum)]
    pub format: Option<FormatArg>,
    /// Flat `key = value` config file; explicit flags override its entries
    #[arg(long)]
    pub config: Option<PathBuf>,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum FigureId {
    Fig1a,
    Fig1b,
    Fig2a,
    Fig2b,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ShapeArg {
    Constant,
    Resonant,
}

impl ShapeArg {
    pub fn name(self) -> &'static str {
        match self {
            ShapeArg::Constant => "constant",
            ShapeArg::Resonant => "resonant",
        }
    }

    pub fn to_shape(self) -> qsense::ForceShape {
        match self {
            ShapeArg::Constant => qsense::ForceShape::Constant,
            ShapeArg::Resonant => qsense::ForceShape::Resonant,
        }
    }
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum BathArg {
    Ideal,
    Markovian,
    Nonmarkovian,
}

impl BathArg {
    pub fn name(self) -> &'static str {
        match self {
            BathArg::Ideal => "ideal",
            BathArg::Markovian => "markovian",
            BathArg::Nonmarkovian => "nonmarkovian",
        }
    }

    pub fn to_bath(self) -> qsense::Bath {
        match self {
            BathArg::Ideal => qsense::Bath::Ideal,
            BathArg::Markovian => qsense::Bath::Markovian,
            BathArg::Nonmarkovian => qsense::Bath::NonMarkovian,
        }
    }
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum FormatArg {
    Csv,
    Json,
}

impl FormatArg {
    pub fn extension(self) -> &'static str {
        match self {
            FormatArg::Csv => "csv",
            FormatArg::Json => "json",
        }
    }
}

/// Fully resolved run parameters after merging defaults, the config file,
/// and explicit flags (in that order of increasing precedence).
pub struct Settings {
    pub gamma: f64,
    pub lambda: f64,
    pub temperature: f64,
    pub shape: ShapeArg,
    pub bath: BathArg,
    pub r: f64,
    pub r_min: Option<f64>,
    pub r_max: Option<f64>,
    pub r_step: Option<f64>,
    pub t_tot: f64,
    pub step: f64,
    pub n_max: Option<u32>,
    pub out: Option<PathBuf>,
    pub format: FormatArg,
    pub config_path: Option<PathBuf>,
}

impl Default for Settings {
    fn default() -> Self {
        Settings {
            gamma: 0.1,
            lambda: 10.0,
            temperature: 0.0,
            shape: ShapeArg::Constant,
            bath: BathArg::Nonmarkovian,
            r: 1.0,
            r_min: None,
            r_max: None,
            r_step: None,
            t_tot: FRAC_PI_2,
            step: 0.005,
            n_max: None,
            out: None,
            format: FormatArg::Csv,
            config_path: None,
        }
    }
}

/// Merge defaults, the optional config file, and explicit flags.
pub fn resolve(args: &CommonArgs) -> Result<Settings, Failure> {
    let mut s = Settings::default();

    if let Some(path) = &args.config {
        let text = std::fs::read_to_string(path).map_err(|e| {
            Failure::Config(format!("key `config`: cannot read {}: {e}", path.display()))
        })?;
        apply_config_file(&mut s, &text)?;
        s.config_path = Some(path.clone());
    }

    if let Some(v) = args.gamma {
        s.gamma = v;
    }
    if let Some(v) = args.lambda {
        s.lambda = v;
    }
    if let Some(v) = args.temperature {
        s.temperature = v;
    }
    if let Some(v) = args.shape {
        s.shape = v;
    }
    if let Some(v) = args.bath {
        s.bath = v;
    }
    if let Some(v) = args.r {
        s.r = v;
    }
    if let Some(v) = args.r_min {
        s.r_min = Some(v);
    }
    if let Some(v) = args.r_max {
        s.r_max = Some(v);
    }
    if let Some(v) = args.r_step {
        s.r_step = Some(v);
    }
    if let Some(v) = args.t_tot {
        s.t_tot = v;
    }
    if let Some(v) = args.step {
        s.step = v;
    }
    if let Some(v) = args.n_max {
        s.n_max = Some(v);
    }
    if let Some(v) = &args.out {
        s.out = Some(v.clone());
    }
    if let Some(v) = args.format {
        s.format = v;
    }

    validate(&s)?;
    Ok(s)
}

/// Parse a flat `key = value` file. Keys use the flag spelling without the
/// leading dashes. Blank lines and `#` comments are ignored.
fn apply_config_file(s: &mut Settings, text: &str) -> Result<(), Failure> {
    for (lineno, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let Some((key, value)) = line.split_once('=') else {
            return Err(Failure::Config(format!(
                "config line {}: expected `key = value`, got `{line}`",
                lineno + 1
            )));
        };
        apply_kv(s, key.trim(), value.trim())?;
    }
    Ok(())
}

fn apply_kv(s: &mut Settings, key: &str, value: &str) -> Result<(), Failure> {
    fn num(key: &str, value: &str) -> Result<f64, Failure> {
        value
            .parse()
            .map_err(|_| Failure::Config(format!("key `{key}`: `{value}` is not a number")))
    }

    match key {
        "gamma" => s.gamma = num(key, value)?,
        "lambda" => s.lambda = num(key, value)?,
        "temperature" => s.temperature = num(key, value)?,
        "shape" => {
            s.shape = match value {
                "constant" => ShapeArg::Constant,
                "resonant" => ShapeArg::Resonant,
                _ => {
                    return Err(Failure::Config(format!(
                        "key `shape`: `{value}` is not one of constant, resonant"
                    )))
                }
            }
        }
        "bath" => {
            s.bath = match value {
                "ideal" => BathArg::Ideal,
                "markovian" => BathArg::Markovian,
                "nonmarkovian" => BathArg::Nonmarkovian,
                _ => {
                    return Err(Failure::Config(format!(
                        "key `bath`: `{value}` is not one of ideal, markovian, nonmarkovian"
                    )))
                }
            }
        }
        "r" => s.r = num(key, value)?,
        "r-min" => s.r_min = Some(num(key, value)?),
        "r-max" => s.r_max = Some(num(key, value)?),
        "r-step" => s.r_step = Some(num(key, value)?),
        "t-tot" => s.t_tot = num(key, value)?,
        "step" => s.step = num(key, value)?,
        "n-max" => {
            s.n_max = Some(value.parse().map_err(|_| {
                Failure::Config(format!("key `n-max`: `{value}` is not a positive integer"))
            })?)
        }
        "out" => s.out = Some(PathBuf::from(value)),
        "format" => {
            s.format = match value {
                "csv" => FormatArg::Csv,
                "json" => FormatArg::Json,
                _ => {
                    return Err(Failure::Config(format!(
                        "key `format`: `{value}` is not one of csv, json"
                    )))
                }
            }
        }
        "config" => {
            return Err(Failure::Config(
                "key `config`: config files cannot include other config files".into(),
            ))
        }
        other => return Err(Failure::Config(format!("unknown key `{other}`"))),
    }
    Ok(())
}

fn validate(s: &Settings) -> Result<(), Failure> {
    fn finite(key: &str, v: f64) -> Result<(), Failure> {
        if v.is_finite() {
            Ok(())
        } else {
            Err(Failure::Config(format!("key `{key}`: value must be finite")))
        }
    }

    finite("gamma", s.gamma)?;
    finite("lambda", s.lambda)?;
    finite("temperature", s.temperature)?;
    finite("r", s.r)?;
    finite("t-tot", s.t_tot)?;
    finite("step", s.step)?;
    if s.r < 0.0 {
        return Err(Failure::Config(format!(
            "key `r`: squeezing must be non-negative, got {}",
            s.r
        )));
    }
    if s.t_tot <= 0.0 {
        return Err(Failure::Config(format!(
            "key `t-tot`: total time must be positive, got {}",
            s.t_tot
        )));
    }
    if s.step <= 0.0 {
        return Err(Failure::Config(format!(
            "key `step`: grid step must be positive, got {}",
            s.step
        )));
    }
    if let Some(v) = s.r_step {
        if !v.is_finite() || v <= 0.0 {
            return Err(Failure::Config(format!(
                "key `r-step`: increment must be positive, got {v}"
            )));
        }
    }
    if let (Some(a), Some(b)) = (s.r_min, s.r_max) {
        if !a.is_finite() || !b.is_finite() || a < 0.0 || b < a {
            return Err(Failure::Config(format!(
                "key `r-max`: sweep needs 0 <= r-min <= r-max, got {a}..{b}"
            )));
        }
    }
    if s.n_max == Some(0) {
        return Err(Failure::Config(
            "key `n-max`: window cap must be at least 1".into(),
        ));
    }
    if let (Some(out), Some(cfg)) = (&s.out, &s.config_path) {
        if out == cfg {
            return Err(Failure::Config(format!(
                "key `out`: refusing to overwrite the config file {}",
                cfg.display()
            )));
        }
    }
    Ok(())
}
