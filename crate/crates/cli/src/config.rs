//! Run configuration: TOML file sections merged with command-line flags.
//!
//! Precedence is flag > file > default. Every value that ends up being used
//! is recorded so the outputs can carry the fully resolved configuration.

use std::collections::BTreeSet;
use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use macrospin::model::MacrospinState;
use macrospin::{IntegratorSpec, ModelParams, RkOrder, SphericalAngle};

use crate::error::CliError;

const SECTIONS: [&str; 4] = ["params", "integrator", "task", "output"];

/// Parsed config file, split into its sections.
#[derive(Debug, Default)]
pub struct ConfigFile {
    params: toml::Table,
    integrator: toml::Table,
    task: toml::Table,
    output: toml::Table,
}

impl ConfigFile {
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = fs::read_to_string(path).map_err(|e| {
            CliError::Validation(format!("cannot read config {}: {e}", path.display()))
        })?;
        Self::parse(&text).map_err(|e| match e {
            CliError::Validation(msg) => CliError::Validation(format!("{}: {msg}", path.display())),
            other => other,
        })
    }

    pub fn parse(text: &str) -> Result<Self, CliError> {
        let table: toml::Table = text.parse().map_err(|e: toml::de::Error| {
            CliError::Validation(format!("malformed config: {}", e.message()))
        })?;
        let mut cfg = Self::default();
        for (name, value) in table {
            let toml::Value::Table(section) = value else {
                return Err(CliError::Validation(format!(
                    "top-level key '{name}' must be a section; expected one of [{}]",
                    SECTIONS.join("], [")
                )));
            };
            match name.as_str() {
                "params" => cfg.params = section,
                "integrator" => cfg.integrator = section,
                "task" => cfg.task = section,
                "output" => cfg.output = section,
                other => {
                    return Err(CliError::Validation(format!(
                        "unknown section [{other}]; expected one of [{}]",
                        SECTIONS.join("], [")
                    )))
                }
            }
        }
        Ok(cfg)
    }
}

/// Renders a TOML scalar or array the way it would be typed on the command line.
fn flatten(value: &toml::Value) -> String {
    match value {
        toml::Value::String(s) => s.clone(),
        toml::Value::Array(items) => items.iter().map(flatten).collect::<Vec<_>>().join(","),
        other => other.to_string(),
    }
}

fn check_keys(section: &str, table: &toml::Table, allowed: &[&str]) -> Result<(), CliError> {
    for key in table.keys() {
        if !allowed.contains(&key.as_str()) {
            return Err(CliError::Validation(format!(
                "unknown key '{key}' in [{section}]; allowed: {}",
                allowed.join(", ")
            )));
        }
    }
    Ok(())
}

/// Model flags shared by every simulation subcommand.
#[derive(Debug, Default, Clone, clap::Args)]
pub struct ModelArgs {
    /// Drive amplitude Γ
    #[arg(long, allow_negative_numbers = true)]
    pub gamma: Option<f64>,
    /// Drive angular frequency ω
    #[arg(long, allow_negative_numbers = true)]
    pub omega: Option<f64>,
    /// Dissipation strength κ
    #[arg(long, allow_negative_numbers = true)]
    pub kappa: Option<f64>,
    /// Couplings as jx,jy,jz
    #[arg(long, allow_hyphen_values = true)]
    pub j: Option<Floats>,
    /// Number of spins for finite-N runs
    #[arg(long = "n-spins")]
    pub n_spins: Option<usize>,
    /// Runge-Kutta order (1, 2 or 4)
    #[arg(long)]
    pub order: Option<u32>,
    /// Step size; must divide the drive period
    #[arg(long)]
    pub dt: Option<f64>,
}

/// Comma-separated list of reals.
#[derive(Debug, Clone, PartialEq)]
pub struct Floats(pub Vec<f64>);

impl FromStr for Floats {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        s.split(',')
            .map(|v| {
                v.trim()
                    .parse::<f64>()
                    .map_err(|_| format!("'{v}' is not a number"))
            })
            .collect::<Result<_, _>>()
            .map(Floats)
    }
}

impl fmt::Display for Floats {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let parts: Vec<String> = self.0.iter().map(f64::to_string).collect();
        f.write_str(&parts.join(","))
    }
}

/// Comma-separated list of non-negative integers.
#[derive(Debug, Clone, PartialEq)]
pub struct Counts(pub Vec<usize>);

impl FromStr for Counts {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        s.split(',')
            .map(|v| {
                v.trim()
                    .parse::<usize>()
                    .map_err(|_| format!("'{v}' is not a non-negative integer"))
            })
            .collect::<Result<_, _>>()
            .map(Counts)
    }
}

impl fmt::Display for Counts {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let parts: Vec<String> = self.0.iter().map(usize::to_string).collect();
        f.write_str(&parts.join(","))
    }
}

/// Evenly spaced axis written as `lo,hi,n`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Axis {
    pub lo: f64,
    pub hi: f64,
    pub n: usize,
}

impl Axis {
    pub fn values(&self) -> Vec<f64> {
        macrospin::lyapunov::linspace(self.lo, self.hi, self.n)
    }
}

impl FromStr for Axis {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        let parts: Vec<&str> = s.split(',').map(str::trim).collect();
        let [lo, hi, n] = parts[..] else {
            return Err(format!("expected lo,hi,n, got '{s}'"));
        };
        let real = |v: &str| {
            v.parse::<f64>()
                .map_err(|_| format!("'{v}' is not a number"))
        };
        let n = n
            .parse::<usize>()
            .map_err(|_| format!("'{n}' is not a point count"))?;
        if n == 0 {
            return Err("an axis needs at least one point".into());
        }
        Ok(Axis {
            lo: real(lo)?,
            hi: real(hi)?,
            n,
        })
    }
}

impl fmt::Display for Axis {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{},{},{}", self.lo, self.hi, self.n)
    }
}

/// Closed interval written as `lo,hi`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Range(pub [f64; 2]);

impl FromStr for Range {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        let Floats(v) = s.parse()?;
        match v[..] {
            [lo, hi] if lo < hi => Ok(Range([lo, hi])),
            [_, _] => Err(format!("range '{s}' must have lo < hi")),
            _ => Err(format!("expected lo,hi, got '{s}'")),
        }
    }
}

impl fmt::Display for Range {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{},{}", self.0[0], self.0[1])
    }
}

/// Initial direction: an axis name (`x`, `-z`, ...) or `theta,phi` in radians.
#[derive(Debug, Clone, PartialEq)]
pub struct Init {
    text: String,
    pub angle: SphericalAngle,
    vector: MacrospinState,
}

impl Init {
    pub fn x() -> Self {
        "x".parse().unwrap()
    }

    /// Exact unit vector for named axes, `angle_to_vector` otherwise.
    pub fn vector(&self) -> MacrospinState {
        self.vector
    }
}

impl FromStr for Init {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        let s = s.trim();
        let axis = |x, y, z| Some(MacrospinState::new(x, y, z));
        let named = match s {
            "x" | "+x" => axis(1.0, 0.0, 0.0),
            "-x" => axis(-1.0, 0.0, 0.0),
            "y" | "+y" => axis(0.0, 1.0, 0.0),
            "-y" => axis(0.0, -1.0, 0.0),
            "z" | "+z" => axis(0.0, 0.0, 1.0),
            "-z" => axis(0.0, 0.0, -1.0),
            _ => None,
        };
        let (angle, vector) = match named {
            Some(m) => (SphericalAngle::from_vector(m), m),
            None => {
                let Floats(v) = s.parse().map_err(|_| {
                    format!("initial state '{s}' is neither an axis (x, -y, ...) nor theta,phi")
                })?;
                let [theta, phi] = v[..] else {
                    return Err(format!("initial state '{s}' must be theta,phi"));
                };
                let a = SphericalAngle::new(theta, phi).map_err(|e| e.to_string())?;
                (a, macrospin::angle_to_vector(a))
            }
        };
        Ok(Init {
            text: s.to_string(),
            angle,
            vector,
        })
    }
}

impl fmt::Display for Init {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.text)
    }
}

/// Everything a subcommand needs, with the resolution bookkeeping.
pub struct Resolver {
    pub params: ModelParams,
    pub spec: IntegratorSpec,
    pub output: Option<PathBuf>,
    pub format: Option<String>,
    task: toml::Table,
    task_keys: BTreeSet<&'static str>,
    pairs: Vec<(String, String)>,
}

impl Resolver {
    pub fn new(
        file: ConfigFile,
        model: &ModelArgs,
        output: Option<PathBuf>,
    ) -> Result<Self, CliError> {
        let mut params = ModelParams::default();
        let from_file: Vec<(String, String)> = file
            .params
            .iter()
            .map(|(k, v)| (k.clone(), flatten(v)))
            .collect();
        params.apply_pairs(from_file.iter().map(|(k, v)| (k.as_str(), v.as_str())))?;
        model.apply(&mut params)?;
        params.validate()?;

        check_keys("integrator", &file.integrator, &["order", "dt"])?;
        let mut spec = IntegratorSpec::default();
        if let Some(v) = file.integrator.get("order") {
            spec.order = parse_order(&flatten(v))?;
        }
        if let Some(v) = file.integrator.get("dt") {
            spec.dt = flatten(v).parse().map_err(|_| {
                CliError::Validation(format!("[integrator] dt: '{}' is not a number", flatten(v)))
            })?;
        }
        if let Some(order) = model.order {
            spec.order = parse_order(&order.to_string())?;
        }
        if let Some(dt) = model.dt {
            spec.dt = dt;
        }
        spec.steps_per_period()?;

        check_keys("output", &file.output, &["path", "format"])?;
        let output = output.or_else(|| file.output.get("path").map(|v| PathBuf::from(flatten(v))));
        let format = file.output.get("format").map(flatten);

        let mut pairs: Vec<(String, String)> = params
            .to_pairs()
            .into_iter()
            .map(|(k, v)| (k.to_string(), v))
            .collect();
        pairs.push(("order".into(), spec.order.order().to_string()));
        pairs.push(("dt".into(), spec.dt.to_string()));
        Ok(Self {
            params,
            spec,
            output,
            format,
            task: file.task,
            task_keys: BTreeSet::new(),
            pairs,
        })
    }

    /// Resolves one `[task]` value: flag, then file, then `default`.
    pub fn get<T>(&mut self, key: &'static str, flag: Option<T>, default: T) -> Result<T, CliError>
    where
        T: FromStr + fmt::Display,
        T::Err: fmt::Display,
    {
        self.task_keys.insert(key);
        let value = match (flag, self.task.get(key)) {
            (Some(v), _) => v,
            (None, Some(raw)) => {
                let text = flatten(raw);
                text.parse()
                    .map_err(|e| CliError::Validation(format!("[task] {key} = '{text}': {e}")))?
            }
            (None, None) => default,
        };
        self.pairs.push((key.to_string(), value.to_string()));
        Ok(value)
    }

    /// Output format: `--format` flag, then `[output] format`, then `default`.
    pub fn format(
        &mut self,
        flag: Option<String>,
        allowed: &[&str],
        default: &str,
    ) -> Result<String, CliError> {
        let format = flag
            .or_else(|| self.format.clone())
            .unwrap_or_else(|| default.to_string());
        if !allowed.contains(&format.as_str()) {
            return Err(CliError::Validation(format!(
                "unknown output format '{format}'; allowed: {}",
                allowed.join(", ")
            )));
        }
        self.pairs.push(("format".into(), format.clone()));
        Ok(format)
    }

    /// Records a value that is not a `[task]` key (e.g. the seed).
    pub fn record(&mut self, key: &str, value: impl fmt::Display) {
        self.pairs.push((key.to_string(), value.to_string()));
    }

    /// Rejects leftover `[task]` keys and returns the `# config:` line.
    pub fn finish(&self) -> Result<String, CliError> {
        for key in self.task.keys() {
            if !self.task_keys.contains(key.as_str()) {
                let allowed: Vec<&str> = self.task_keys.iter().copied().collect();
                return Err(CliError::Validation(format!(
                    "unknown key '{key}' in [task]; allowed for this subcommand: {}",
                    allowed.join(", ")
                )));
            }
        }
        let body: Vec<String> = self.pairs.iter().map(|(k, v)| format!("{k}={v}")).collect();
        Ok(format!("# config: {}", body.join(" ")))
    }
}

fn parse_order(text: &str) -> Result<RkOrder, CliError> {
    let order: u32 = text.trim().parse().map_err(|_| {
        CliError::Validation(format!("integrator order '{text}' is not an integer"))
    })?;
    Ok(RkOrder::from_order(order)?)
}

impl ModelArgs {
    fn apply(&self, p: &mut ModelParams) -> Result<(), CliError> {
        if let Some(v) = self.gamma {
            p.gamma = v;
        }
        if let Some(v) = self.omega {
            p.omega = v;
        }
        if let Some(v) = self.kappa {
            p.kappa = v;
        }
        if let Some(Floats(j)) = &self.j {
            let [x, y, z] = j[..] else {
                return Err(CliError::Validation(format!(
                    "--j needs three values jx,jy,jz, got {}",
                    j.len()
                )));
            };
            p.j = macrospin::Couplings::new(x, y, z);
        }
        if let Some(n) = self.n_spins {
            p.n_spins = n;
        }
        Ok(())
    }
}
