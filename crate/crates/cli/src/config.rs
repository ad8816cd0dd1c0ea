//! Experiment configuration: a plain `key = value` file plus overrides.
//!
//! Blank lines and lines starting with `#` are ignored, as is anything after
//! ` #` on a line. Relative paths resolve against the config file's
//! directory. Every error carries the line it came from; overrides report
//! line 0.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use robreg_core::robustness::{default_omegas, Method};
use robreg_core::{CoefficientPrior, Error, LptnDensity, RegressionProblem, Result, ScalePrior};

#[derive(Debug, Clone, PartialEq)]
pub enum ProblemSource {
    Canonical,
    Csv(PathBuf),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PriorFamily {
    PerCoordinateT,
    MultivariateT,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub source: ProblemSource,
    pub gamma: f64,
    pub coefficient_family: PriorFamily,
    /// One value per coefficient, or a single value used for all.
    pub nu: Vec<f64>,
    pub scale_prior: ScalePrior,
    pub rho: f64,
    pub omegas: Vec<f64>,
    pub method: Method,
    pub seed: u64,
    pub chains: usize,
    pub draws: usize,
    pub output: PathBuf,
    pub instances: Vec<PathBuf>,
    pub builtin_instances: bool,
    pub budget: usize,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            source: ProblemSource::Canonical,
            gamma: 1.0,
            coefficient_family: PriorFamily::PerCoordinateT,
            nu: vec![1.0],
            scale_prior: ScalePrior::HalfCauchy { scale: 1.0 },
            rho: 0.5,
            omegas: default_omegas(),
            method: Method::Grid,
            seed: 1,
            chains: 2,
            draws: 20_000,
            output: PathBuf::from("out"),
            instances: Vec::new(),
            builtin_instances: true,
            budget: 100_000,
        }
    }
}

const KEYS: &[&str] = &[
    "problem",
    "gamma",
    "coefficient_prior",
    "nu",
    "scale_prior",
    "scale_prior_scale",
    "scale_prior_shape",
    "scale_prior_rate",
    "scale_prior_mu",
    "scale_prior_s",
    "rho",
    "omega_ladder",
    "method",
    "seed",
    "chains",
    "draws",
    "output",
    "instances",
    "builtin_instances",
    "budget",
];

/// A raw entry with the line it was read from (0 for overrides).
#[derive(Debug, Clone)]
struct Entry {
    value: String,
    line: usize,
    origin: String,
}

fn err(e: &Entry, key: &str, msg: impl std::fmt::Display) -> Error {
    Error::Parse {
        line: e.line,
        message: format!("{}{key}: {msg}", e.origin),
    }
}

fn parse_f64(e: &Entry, key: &str) -> Result<f64> {
    e.value
        .parse::<f64>()
        .ok()
        .filter(|v| v.is_finite())
        .ok_or_else(|| err(e, key, format!("expected a number, found {:?}", e.value)))
}

fn parse_positive(e: &Entry, key: &str) -> Result<f64> {
    let v = parse_f64(e, key)?;
    if v > 0.0 {
        Ok(v)
    } else {
        Err(err(e, key, format!("must be positive, got {v}")))
    }
}

fn parse_count(e: &Entry, key: &str) -> Result<usize> {
    e.value
        .parse::<usize>()
        .ok()
        .filter(|v| *v > 0)
        .ok_or_else(|| err(e, key, format!("expected a positive integer, found {:?}", e.value)))
}

fn list(value: &str) -> impl Iterator<Item = &str> {
    value.split(',').map(str::trim).filter(|s| !s.is_empty())
}

/// Comma-separated values, or `lo..hi` for every power of ten in between.
pub fn parse_ladder(value: &str) -> std::result::Result<Vec<f64>, String> {
    let omegas: Vec<f64> = if let Some((lo, hi)) = value.split_once("..") {
        let lo: f64 = lo.trim().parse().map_err(|_| format!("bad lower end {lo:?}"))?;
        let hi: f64 = hi.trim().parse().map_err(|_| format!("bad upper end {hi:?}"))?;
        if !(lo > 0.0 && hi >= lo) {
            return Err(format!("need 0 < lo <= hi, got {lo}..{hi}"));
        }
        let (a, b) = (lo.log10().round() as i32, hi.log10().round() as i32);
        (a..=b).map(|k| 10f64.powi(k)).collect()
    } else {
        list(value)
            .map(|s| s.parse::<f64>().map_err(|_| format!("bad value {s:?}")))
            .collect::<std::result::Result<_, _>>()?
    };
    if omegas.is_empty() {
        return Err("empty ladder".into());
    }
    if omegas.iter().any(|w| !(w.is_finite() && *w > 0.0)) {
        return Err("values must be positive".into());
    }
    if omegas.windows(2).any(|w| w[1] <= w[0]) {
        return Err("values must be strictly increasing".into());
    }
    Ok(omegas)
}

impl ExperimentConfig {
    /// Parses a config file; relative paths are taken from its directory.
    pub fn load(path: &Path, overrides: &[(String, String)]) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::InvalidInput(format!("cannot read config {}: {e}", path.display())))?;
        let base = path.parent().map(Path::to_path_buf).unwrap_or_default();
        Self::parse(&text, &base, overrides)
    }

    /// Defaults plus overrides, for commands run without a file.
    pub fn from_overrides(overrides: &[(String, String)]) -> Result<Self> {
        Self::parse("", Path::new("."), overrides)
    }

    pub fn parse(text: &str, base: &Path, overrides: &[(String, String)]) -> Result<Self> {
        let mut entries: BTreeMap<String, Entry> = BTreeMap::new();
        for (k, raw) in text.lines().enumerate() {
            let line = k + 1;
            let content = match raw.find(" #") {
                Some(pos) => &raw[..pos],
                None => raw,
            }
            .trim();
            if content.is_empty() || content.starts_with('#') {
                continue;
            }
            let Some((key, value)) = content.split_once('=') else {
                return Err(Error::Parse {
                    line,
                    message: format!("expected `key = value`, found {content:?}"),
                });
            };
            let key = key.trim().to_string();
            if !KEYS.contains(&key.as_str()) {
                return Err(Error::Parse {
                    line,
                    message: format!("unknown key `{key}`"),
                });
            }
            if let Some(prev) = entries.get(&key) {
                return Err(Error::Parse {
                    line,
                    message: format!("duplicate key `{key}` (first set on line {})", prev.line),
                });
            }
            entries.insert(
                key,
                Entry {
                    value: value.trim().to_string(),
                    line,
                    origin: String::new(),
                },
            );
        }
        for (key, value) in overrides {
            if !KEYS.contains(&key.as_str()) {
                return Err(Error::Parse {
                    line: 0,
                    message: format!("override: unknown key `{key}`"),
                });
            }
            entries.insert(
                key.clone(),
                Entry {
                    value: value.trim().to_string(),
                    line: 0,
                    origin: "override ".into(),
                },
            );
        }
        Self::from_entries(&entries, base)
    }

    fn from_entries(entries: &BTreeMap<String, Entry>, base: &Path) -> Result<Self> {
        let mut cfg = Self::default();
        let get = |k: &str| entries.get(k);
        // Override paths come from the command line and stay relative to the
        // working directory.
        let resolve = |e: &Entry, p: &str| {
            let p = PathBuf::from(p);
            if p.is_absolute() || e.line == 0 {
                p
            } else {
                base.join(p)
            }
        };

        if let Some(e) = get("problem") {
            cfg.source = match e.value.as_str() {
                "canonical" => ProblemSource::Canonical,
                "" => return Err(err(e, "problem", "expected `canonical` or a CSV path")),
                path => ProblemSource::Csv(resolve(e, path)),
            };
        }
        if let Some(e) = get("gamma") {
            cfg.gamma = parse_positive(e, "gamma")?;
        }
        if let Some(e) = get("coefficient_prior") {
            cfg.coefficient_family = match e.value.as_str() {
                "per-coordinate-t" => PriorFamily::PerCoordinateT,
                "multivariate-t" => PriorFamily::MultivariateT,
                other => {
                    return Err(err(
                        e,
                        "coefficient_prior",
                        format!("unknown family `{other}` (per-coordinate-t or multivariate-t)"),
                    ))
                }
            };
        }
        if let Some(e) = get("nu") {
            let nus = list(&e.value)
                .map(|s| s.parse::<f64>().ok().filter(|v| v.is_finite() && *v > 0.0))
                .collect::<Option<Vec<_>>>()
                .filter(|v| !v.is_empty())
                .ok_or_else(|| err(e, "nu", format!("expected positive numbers, found {:?}", e.value)))?;
            cfg.nu = nus;
        }

        let unset = Entry {
            value: String::new(),
            line: 0,
            origin: String::new(),
        };
        let family = get("scale_prior").map_or((&unset, "half-cauchy"), |e| (e, e.value.as_str()));
        let param = |k: &str, default: f64| -> Result<f64> { get(k).map_or(Ok(default), |e| parse_positive(e, k)) };
        let param_any = |k: &str, default: f64| -> Result<f64> { get(k).map_or(Ok(default), |e| parse_f64(e, k)) };
        let allowed: &[&str] = match family.1 {
            "half-cauchy" => {
                cfg.scale_prior = ScalePrior::HalfCauchy {
                    scale: param("scale_prior_scale", 1.0)?,
                };
                &["scale_prior_scale"]
            }
            "inverse-gamma" => {
                cfg.scale_prior = ScalePrior::InverseGamma {
                    shape: param("scale_prior_shape", 2.0)?,
                    rate: param("scale_prior_rate", 1.0)?,
                };
                &["scale_prior_shape", "scale_prior_rate"]
            }
            "log-normal" => {
                cfg.scale_prior = ScalePrior::LogNormal {
                    mu: param_any("scale_prior_mu", 0.0)?,
                    s: param("scale_prior_s", 1.0)?,
                };
                &["scale_prior_mu", "scale_prior_s"]
            }
            other => {
                return Err(err(
                    family.0,
                    "scale_prior",
                    format!("unknown family `{other}` (half-cauchy, inverse-gamma or log-normal)"),
                ))
            }
        };
        for k in ["scale_prior_scale", "scale_prior_shape", "scale_prior_rate", "scale_prior_mu", "scale_prior_s"] {
            if let Some(e) = get(k) {
                if !allowed.contains(&k) {
                    return Err(err(e, k, format!("does not apply to the {} scale prior", family.1)));
                }
            }
        }

        if let Some(e) = get("rho") {
            cfg.rho = parse_positive(e, "rho")?;
        }
        if let Some(e) = get("omega_ladder") {
            cfg.omegas = parse_ladder(&e.value).map_err(|m| err(e, "omega_ladder", m))?;
        }
        if let Some(e) = get("method") {
            cfg.method = e.value.parse().map_err(|_| err(e, "method", "expected grid or mcmc"))?;
        }
        if let Some(e) = get("seed") {
            cfg.seed = e
                .value
                .parse()
                .map_err(|_| err(e, "seed", format!("expected a nonnegative integer, found {:?}", e.value)))?;
        }
        if let Some(e) = get("chains") {
            cfg.chains = parse_count(e, "chains")?;
        }
        if let Some(e) = get("draws") {
            cfg.draws = parse_count(e, "draws")?;
            if cfg.draws < 1000 {
                return Err(err(e, "draws", "at least 1000 draws are required"));
            }
        }
        if let Some(e) = get("output") {
            cfg.output = resolve(e, &e.value);
        }
        if let Some(e) = get("instances") {
            cfg.instances = list(&e.value).map(|s| resolve(e, s)).collect();
        }
        if let Some(e) = get("builtin_instances") {
            cfg.builtin_instances = match e.value.as_str() {
                "true" | "yes" | "1" => true,
                "false" | "no" | "0" => false,
                other => return Err(err(e, "builtin_instances", format!("expected true or false, found {other:?}"))),
            };
        }
        if let Some(e) = get("budget") {
            cfg.budget = parse_count(e, "budget")?;
        }

        // Fail early on problem-level inconsistencies, pointing at the data line.
        let p = match &cfg.source {
            ProblemSource::Canonical => Some(1),
            ProblemSource::Csv(_) => None,
        };
        if let (Some(p), Some(e)) = (p, get("nu")) {
            if cfg.nu.len() != 1 && cfg.nu.len() != p {
                return Err(err(e, "nu", format!("{} values given for {p} coefficients", cfg.nu.len())));
            }
        }
        Ok(cfg)
    }

    fn coefficient_prior(&self, p: usize) -> Result<CoefficientPrior> {
        match self.coefficient_family {
            PriorFamily::PerCoordinateT => {
                let nus = match self.nu.len() {
                    1 => vec![self.nu[0]; p],
                    n if n == p => self.nu.clone(),
                    n => return Err(Error::InvalidInput(format!("nu: {n} values given for {p} coefficients"))),
                };
                CoefficientPrior::per_coordinate_t(nus)
            }
            PriorFamily::MultivariateT => {
                if self.nu.len() != 1 {
                    return Err(Error::InvalidInput("nu: the multivariate t prior takes a single value".into()));
                }
                CoefficientPrior::multivariate_t(self.nu[0], p)
            }
        }
    }

    /// The fully validated regression problem.
    pub fn problem(&self) -> Result<RegressionProblem> {
        let error = LptnDensity::new(self.gamma)?;
        match &self.source {
            ProblemSource::Canonical => {
                let base = RegressionProblem::canonical();
                let x: Vec<Vec<f64>> = base.rows().map(<[f64]>::to_vec).collect();
                RegressionProblem::new(
                    x,
                    base.a().to_vec(),
                    base.b().to_vec(),
                    error,
                    self.coefficient_prior(1)?,
                    self.scale_prior,
                )
            }
            ProblemSource::Csv(path) => {
                let file = std::fs::File::open(path)
                    .map_err(|e| Error::InvalidInput(format!("cannot open data file {}: {e}", path.display())))?;
                // Peek at the header to size the coefficient prior.
                let text = std::io::read_to_string(file)?;
                let p = text
                    .lines()
                    .map(str::trim)
                    .find(|l| !l.is_empty() && !l.starts_with('#'))
                    .map_or(0, |h| h.split(',').filter(|c| c.trim() != "a" && c.trim() != "b").count())
                    .max(1);
                RegressionProblem::from_csv_reader(text.as_bytes(), error, self.coefficient_prior(p)?, self.scale_prior)
                    .map_err(|e| match e {
                        Error::Parse { line, message } => Error::Parse {
                            line,
                            message: format!("{}: {message}", path.display()),
                        },
                        other => other,
                    })
            }
        }
    }
}
