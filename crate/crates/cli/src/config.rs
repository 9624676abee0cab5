//! Flat TOML configuration with field-level errors.

use std::path::{Path, PathBuf};

use serde::Serialize;
use starflow::checks::Experiment;
use starflow::{Rational, RayParams};
use thiserror::Error;
use toml::{Table, Value};

#[derive(Debug, Error, PartialEq)]
#[error("config field `{field}`: {message}")]
pub struct ConfigError {
    pub field: String,
    pub message: String,
}

impl ConfigError {
    pub fn new(field: &str, message: impl Into<String>) -> Self {
        Self {
            field: field.to_string(),
            message: message.into(),
        }
    }
}

const KEYS: &[&str] = &[
    "N",
    "alpha",
    "seed",
    "replicas",
    "length",
    "n_list",
    "T",
    "s",
    "x_ray",
    "x_radius",
    "output_dir",
    "workers",
    "convergence_replicas",
    "spot_checks",
    "input_walk",
];

/// A validated run configuration.
#[derive(Clone, Debug, PartialEq)]
pub struct Config {
    pub experiment: Experiment,
    pub output_dir: PathBuf,
    /// Worker threads; `None` lets rayon decide.
    pub workers: Option<usize>,
    /// Walk dump transformed by `cv-check` instead of random replicas.
    pub input_walk: Option<PathBuf>,
}

impl Default for Config {
    fn default() -> Self {
        Self {
            experiment: Experiment::default(),
            output_dir: PathBuf::from("out"),
            workers: None,
            input_walk: None,
        }
    }
}

/// Echo of the configuration as written to manifests.
#[derive(Debug, Serialize)]
pub struct ConfigEcho {
    #[serde(rename = "N")]
    pub n: usize,
    pub alpha: Vec<String>,
    pub seed: u64,
    pub replicas: u64,
    pub length: usize,
    pub n_list: Vec<u64>,
    #[serde(rename = "T")]
    pub t: f64,
    pub s: f64,
    pub x_ray: usize,
    pub x_radius: f64,
    pub convergence_replicas: u64,
    pub spot_checks: u64,
    pub input_walk: Option<String>,
}

impl Config {
    /// Reads `path`; relative paths inside it resolve against its directory.
    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text =
            std::fs::read_to_string(path).map_err(|e| ConfigError::new("config", e.to_string()))?;
        let base = path.parent().unwrap_or(Path::new(""));
        Self::parse(&text, base)
    }

    pub fn parse(text: &str, base: &Path) -> Result<Self, ConfigError> {
        let table: Table = text
            .parse()
            .map_err(|e: toml::de::Error| ConfigError::new("config", e.message()))?;
        if let Some(key) = table.keys().find(|k| !KEYS.contains(&k.as_str())) {
            return Err(ConfigError::new(key, "unknown key"));
        }
        let mut cfg = Config::default();
        let exp = &mut cfg.experiment;

        if let Some(v) = table.get("alpha") {
            let alpha = rationals("alpha", v)?;
            let total: Rational = alpha.iter().sum();
            if total != Rational::from_integer(1) {
                return Err(ConfigError::new(
                    "alpha",
                    format!("weights sum to {total}, not 1"),
                ));
            }
            exp.params =
                RayParams::new(alpha).map_err(|e| ConfigError::new("alpha", e.to_string()))?;
        }
        if let Some(v) = table.get("N") {
            let n = count("N", v, 1)? as usize;
            if !table.contains_key("alpha") {
                exp.params =
                    RayParams::uniform(n).map_err(|e| ConfigError::new("N", e.to_string()))?;
            } else if n != exp.params.n_rays() {
                return Err(ConfigError::new(
                    "N",
                    format!("{n} rays but alpha has {}", exp.params.n_rays()),
                ));
            }
        }
        if let Some(v) = table.get("seed") {
            exp.seed = count("seed", v, 0)?;
        }
        if let Some(v) = table.get("replicas") {
            exp.replicas = count("replicas", v, 1)?;
        }
        if let Some(v) = table.get("length") {
            exp.length = count("length", v, 2)? as usize;
        }
        if let Some(v) = table.get("n_list") {
            let Value::Array(items) = v else {
                return Err(ConfigError::new("n_list", "expected a list of integers"));
            };
            let list = items
                .iter()
                .map(|x| count("n_list", x, 1))
                .collect::<Result<Vec<_>, _>>()?;
            if list.is_empty() {
                return Err(ConfigError::new("n_list", "must not be empty"));
            }
            exp.n_list = list;
        }
        if let Some(v) = table.get("T") {
            exp.horizon = real("T", v)?;
            if exp.horizon <= 0.0 {
                return Err(ConfigError::new("T", "must be positive"));
            }
        }
        if let Some(v) = table.get("s") {
            exp.s = real("s", v)?;
            if exp.s < 0.0 {
                return Err(ConfigError::new("s", "must be non-negative"));
            }
        }
        if let Some(v) = table.get("x_ray") {
            exp.x_ray = count("x_ray", v, 1)? as usize;
        }
        if exp.x_ray > exp.params.n_rays() {
            return Err(ConfigError::new(
                "x_ray",
                format!("no ray {} among {}", exp.x_ray, exp.params.n_rays()),
            ));
        }
        if let Some(v) = table.get("x_radius") {
            exp.x_radius = real("x_radius", v)?;
            if exp.x_radius < 0.0 {
                return Err(ConfigError::new("x_radius", "must be non-negative"));
            }
        }
        if let Some(v) = table.get("convergence_replicas") {
            exp.convergence_replicas = count("convergence_replicas", v, 1)?;
        }
        if let Some(v) = table.get("spot_checks") {
            exp.spot_checks = count("spot_checks", v, 0)?;
        }
        if let Some(v) = table.get("workers") {
            cfg.workers = Some(count("workers", v, 1)? as usize);
        }
        if let Some(v) = table.get("output_dir") {
            cfg.output_dir = base.join(string("output_dir", v)?);
        }
        if let Some(v) = table.get("input_walk") {
            cfg.input_walk = Some(base.join(string("input_walk", v)?));
        }
        Ok(cfg)
    }

    pub fn echo(&self) -> ConfigEcho {
        let exp = &self.experiment;
        ConfigEcho {
            n: exp.params.n_rays(),
            alpha: (1..=exp.params.n_rays())
                .map(|i| exp.params.alpha(i).to_string())
                .collect(),
            seed: exp.seed,
            replicas: exp.replicas,
            length: exp.length,
            n_list: exp.n_list.clone(),
            t: exp.horizon,
            s: exp.s,
            x_ray: exp.x_ray,
            x_radius: exp.x_radius,
            convergence_replicas: exp.convergence_replicas,
            spot_checks: exp.spot_checks,
            input_walk: self
                .input_walk
                .as_ref()
                .and_then(|p| p.file_name())
                .map(|f| f.to_string_lossy().into_owned()),
        }
    }
}

fn count(field: &str, v: &Value, min: u64) -> Result<u64, ConfigError> {
    match v {
        Value::Integer(i) if *i >= 0 && *i as u64 >= min => Ok(*i as u64),
        Value::Integer(i) => Err(ConfigError::new(
            field,
            format!("{i} is below the minimum {min}"),
        )),
        _ => Err(ConfigError::new(field, "expected an integer")),
    }
}

/// A float, an integer, or a `"num/den"` string.
fn real(field: &str, v: &Value) -> Result<f64, ConfigError> {
    let x = match v {
        Value::Float(x) => *x,
        Value::Integer(i) => *i as f64,
        Value::String(s) => {
            let r = rational(field, s)?;
            *r.numer() as f64 / *r.denom() as f64
        }
        _ => return Err(ConfigError::new(field, "expected a number")),
    };
    if x.is_finite() {
        Ok(x)
    } else {
        Err(ConfigError::new(field, "must be finite"))
    }
}

fn string<'a>(field: &str, v: &'a Value) -> Result<&'a str, ConfigError> {
    v.as_str()
        .ok_or_else(|| ConfigError::new(field, "expected a string"))
}

fn rational(field: &str, s: &str) -> Result<Rational, ConfigError> {
    s.trim()
        .parse::<Rational>()
        .map_err(|_| ConfigError::new(field, format!("`{s}` is not a rational num/den")))
}

fn rationals(field: &str, v: &Value) -> Result<Vec<Rational>, ConfigError> {
    let Value::Array(items) = v else {
        return Err(ConfigError::new(
            field,
            "expected a list of \"num/den\" strings",
        ));
    };
    items
        .iter()
        .map(|x| match x {
            Value::String(s) => rational(field, s),
            Value::Integer(i) => Ok(Rational::from_integer(i128::from(*i))),
            _ => Err(ConfigError::new(field, "expected \"num/den\" strings")),
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn parse(text: &str) -> Result<Config, ConfigError> {
        Config::parse(text, Path::new("/base"))
    }

    #[test]
    fn empty_config_is_the_default() {
        assert_eq!(parse("").unwrap().experiment, Experiment::default());
    }

    #[test]
    fn full_config_parses() {
        let cfg = parse(
            r#"
            N = 2
            alpha = ["1/4", "3/4"]
            seed = 7
            replicas = 12
            length = 40
            n_list = [10, 20]
            T = 2
            s = "1/2"
            x_ray = 2
            x_radius = 0.25
            output_dir = "runs"
            workers = 3
            "#,
        )
        .unwrap();
        let exp = &cfg.experiment;
        assert_eq!(exp.params.alpha(1), Rational::new(1, 4));
        assert_eq!((exp.seed, exp.replicas, exp.length), (7, 12, 40));
        assert_eq!(exp.n_list, vec![10, 20]);
        assert_eq!(
            (exp.horizon, exp.s, exp.x_ray, exp.x_radius),
            (2.0, 0.5, 2, 0.25)
        );
        assert_eq!(cfg.output_dir, PathBuf::from("/base/runs"));
        assert_eq!(cfg.workers, Some(3));
        assert_eq!(cfg.echo().alpha, vec!["1/4", "3/4"]);
    }

    #[test]
    fn bad_alpha_names_alpha() {
        let err = parse(r#"alpha = ["1/2", "1/3"]"#).unwrap_err();
        assert_eq!(err.field, "alpha");
        assert_eq!(parse(r#"alpha = ["1/2", "x"]"#).unwrap_err().field, "alpha");
        assert_eq!(
            parse(r#"alpha = ["3/2", "-1/2"]"#).unwrap_err().field,
            "alpha"
        );
    }

    #[test]
    fn errors_name_their_field() {
        assert_eq!(
            parse("N = 4\nalpha = [\"1/2\", \"1/2\"]")
                .unwrap_err()
                .field,
            "N"
        );
        assert_eq!(parse("seed = -1").unwrap_err().field, "seed");
        assert_eq!(parse("length = 1").unwrap_err().field, "length");
        assert_eq!(parse("n_list = []").unwrap_err().field, "n_list");
        assert_eq!(parse("x_ray = 4").unwrap_err().field, "x_ray");
        assert_eq!(parse("T = 0").unwrap_err().field, "T");
        assert_eq!(parse("colour = 1").unwrap_err().field, "colour");
        assert_eq!(parse("seed = ").unwrap_err().field, "config");
    }

    #[test]
    fn n_alone_gives_uniform_weights() {
        let cfg = parse("N = 4\nx_ray = 4").unwrap();
        assert_eq!(cfg.experiment.params.alpha(4), Rational::new(1, 4));
    }

    #[test]
    fn shipped_default_config_matches_the_defaults() {
        let text = include_str!("../../../configs/default.toml");
        assert_eq!(parse(text).unwrap().experiment, Experiment::default());
    }
}
