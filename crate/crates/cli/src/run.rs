//! Subcommand orchestration and artifact emission.

use std::fs;
use std::io;
use std::path::Path;

use clap::ValueEnum;
use serde::Serialize;
use starflow::checks::{
    all_passed, beta_closed_form_check, chain_donsker, chain_path, convergence, cv_check,
    cv_walk_check, flip_check, flipped_sample, flow_check, Check, ScaleSummary,
};
use starflow::dump::{
    read_walk, write_beta_table, write_chain, write_distance_table, write_kernel, write_walk,
    KERNEL_HEADER,
};
use starflow::flows::kernel_closed_form;
use starflow::walk::gap_below_running_max;
use starflow::{ChainKind, ChainPath, FlowRealization, GraphPoint, WalkWindow};
use thiserror::Error;

use crate::config::{Config, ConfigError};
use crate::manifest::{checks_csv, Input, Manifest};
use crate::svg::{Plot, Series};

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum Subcommand {
    /// Transform invariants over random walks, or over `input_walk`.
    CvCheck,
    /// Fixed-time marginals of the junction chain and its lazy variant.
    ChainDonsker,
    /// Flipping construction invariants and one-step law.
    FlipCheck,
    /// Exact identities of the mapping and kernel flows.
    FlowCheck,
    /// Scaling profiles of the discrete flows against their limits.
    Convergence,
    /// Every check above.
    All,
}

impl Subcommand {
    pub fn name(self) -> &'static str {
        match self {
            Subcommand::CvCheck => "cv-check",
            Subcommand::ChainDonsker => "chain-donsker",
            Subcommand::FlipCheck => "flip-check",
            Subcommand::FlowCheck => "flow-check",
            Subcommand::Convergence => "convergence",
            Subcommand::All => "all",
        }
    }
}

#[derive(Debug, Error)]
pub enum RunError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Core(#[from] starflow::Error),
    #[error("writing artifacts: {0}")]
    Io(#[from] io::Error),
    #[error("worker pool: {0}")]
    Pool(String),
}

pub struct Artifact {
    pub name: String,
    pub bytes: Vec<u8>,
}

impl Artifact {
    fn new(name: &str, bytes: impl Into<Vec<u8>>) -> Self {
        Self {
            name: name.to_string(),
            bytes: bytes.into(),
        }
    }

    fn json(name: &str, value: &impl Serialize) -> Self {
        let mut text = serde_json::to_string_pretty(value).expect("serializable report");
        text.push('\n');
        Self::new(name, text)
    }
}

/// Checks and artifacts of one subcommand.
pub struct Outcome {
    pub subcommand: Subcommand,
    pub checks: Vec<Check>,
    pub artifacts: Vec<Artifact>,
    /// Input files read by the run itself, beyond the config file.
    pub inputs: Vec<Input>,
}

impl Outcome {
    fn new(subcommand: Subcommand, checks: Vec<Check>) -> Self {
        Self {
            subcommand,
            checks,
            artifacts: Vec::new(),
            inputs: Vec::new(),
        }
    }

    pub fn passed(&self) -> bool {
        all_passed(&self.checks)
    }
}

/// Runs `sub`; `all` yields one outcome per part followed by the combined one.
pub fn run(sub: Subcommand, cfg: &Config, svg: bool) -> Result<Vec<Outcome>, RunError> {
    let job = || -> Result<Vec<Outcome>, RunError> {
        if sub != Subcommand::All {
            return Ok(vec![run_one(sub, cfg, svg)?]);
        }
        let mut random = cfg.clone();
        random.input_walk = None;
        let mut outcomes = Vec::new();
        for part in [
            Subcommand::CvCheck,
            Subcommand::ChainDonsker,
            Subcommand::FlipCheck,
            Subcommand::FlowCheck,
            Subcommand::Convergence,
        ] {
            outcomes.push(run_one(part, &random, svg)?);
        }
        let mut checks: Vec<Check> = outcomes
            .iter()
            .flat_map(|o| o.checks.iter().cloned())
            .collect();
        checks.extend(beta_closed_form_check(&cfg.experiment.params));
        outcomes.push(Outcome::new(Subcommand::All, checks));
        Ok(outcomes)
    };
    match cfg.workers {
        Some(n) => rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build()
            .map_err(|e| RunError::Pool(e.to_string()))?
            .install(job),
        None => job(),
    }
}

fn run_one(sub: Subcommand, cfg: &Config, svg: bool) -> Result<Outcome, RunError> {
    match sub {
        Subcommand::CvCheck => match &cfg.input_walk {
            Some(path) => cv_on_input(cfg, path, svg),
            None => cv_random(cfg, svg),
        },
        Subcommand::ChainDonsker => donsker(cfg, svg),
        Subcommand::FlipCheck => flip(cfg),
        Subcommand::FlowCheck => flow(cfg),
        Subcommand::Convergence => profiles(cfg, svg),
        Subcommand::All => unreachable!("handled by run"),
    }
}

fn walk_csv(w: &WalkWindow) -> Vec<u8> {
    let mut out = Vec::new();
    write_walk(&mut out, w).expect("in-memory write");
    out
}

fn chain_csv(path: &ChainPath) -> Vec<u8> {
    let mut out = Vec::new();
    write_chain(&mut out, path).expect("in-memory write");
    out
}

/// `|S|` against `Ybar = max Sbar - Sbar`.
fn transform_plot(s: &WalkWindow, s_bar: &WalkWindow) -> Artifact {
    let modulus = s
        .values()
        .iter()
        .enumerate()
        .map(|(k, v)| (k as f64, v.abs() as f64))
        .collect();
    let y_bar = gap_below_running_max(s_bar)
        .into_iter()
        .enumerate()
        .map(|(k, v)| (k as f64, v as f64))
        .collect();
    let plot = Plot {
        title: "walk modulus and transformed gap".into(),
        x_label: "step".into(),
        y_label: "level".into(),
        series: vec![
            Series {
                label: "|S|".into(),
                points: modulus,
            },
            Series {
                label: "max Sbar - Sbar".into(),
                points: y_bar,
            },
        ],
    };
    Artifact::new("paths.svg", plot.render())
}

fn cv_random(cfg: &Config, svg: bool) -> Result<Outcome, RunError> {
    let exp = &cfg.experiment;
    let report = cv_check(exp)?;
    let s =
        WalkWindow::generate(0, exp.length as i64, exp.seed, 0).map_err(starflow::Error::from)?;
    let (s_bar, _) = cv_walk_check(&s)?;
    let mut out = Outcome::new(Subcommand::CvCheck, report.checks.clone());
    out.artifacts.push(Artifact::json("report.json", &report));
    out.artifacts
        .push(Artifact::new("walk_0.csv", walk_csv(&s)));
    out.artifacts
        .push(Artifact::new("transformed_walk_0.csv", walk_csv(&s_bar)));
    if svg {
        out.artifacts.push(transform_plot(&s, &s_bar));
    }
    Ok(out)
}

fn cv_on_input(cfg: &Config, path: &Path, svg: bool) -> Result<Outcome, RunError> {
    let bytes = fs::read(path)
        .map_err(|e| ConfigError::new("input_walk", format!("{}: {e}", path.display())))?;
    let text = String::from_utf8_lossy(&bytes);
    let s = read_walk(&text)
        .ok_or_else(|| ConfigError::new("input_walk", "not an index,increment,value walk dump"))?;
    if s.start() != 0 || s.value(0) != 0 {
        return Err(
            ConfigError::new("input_walk", "walk must start at index 0 from level 0").into(),
        );
    }
    if s.steps() != cfg.experiment.length {
        return Err(ConfigError::new(
            "length",
            format!(
                "{} but input_walk has {} steps",
                cfg.experiment.length,
                s.steps()
            ),
        )
        .into());
    }
    let (s_bar, checks) = cv_walk_check(&s)?;
    let mut out = Outcome::new(Subcommand::CvCheck, checks);
    out.artifacts
        .push(Artifact::new("transformed_walk.csv", walk_csv(&s_bar)));
    if svg {
        out.artifacts.push(transform_plot(&s, &s_bar));
    }
    let name = path
        .file_name()
        .map_or_else(|| "input_walk".into(), |f| f.to_string_lossy().into_owned());
    out.inputs.push(Input::new(name, &bytes));
    Ok(out)
}

/// Every `k`-th point, keeping at most about 2000.
fn thinned(path: &ChainPath, n: u64) -> Vec<(f64, f64)> {
    let stride = (path.len() / 2000).max(1);
    let sqrt_n = (n as f64).sqrt();
    path.positions
        .iter()
        .enumerate()
        .step_by(stride)
        .map(|(k, x)| (k as f64 / n as f64, x.radius() as f64 / sqrt_n))
        .collect()
}

fn donsker(cfg: &Config, svg: bool) -> Result<Outcome, RunError> {
    let exp = &cfg.experiment;
    let report = chain_donsker(exp)?;
    let n = report.chain_time;
    let q = chain_path(ChainKind::Donsker, &exp.params, exp.seed, 0, n as usize);
    let lazy = chain_path(ChainKind::Lazy, &exp.params, exp.seed, 0, n as usize);
    let mut out = Outcome::new(Subcommand::ChainDonsker, report.checks.clone());
    out.artifacts.push(Artifact::json("report.json", &report));
    out.artifacts
        .push(Artifact::new("chain_q_0.csv", chain_csv(&q)));
    out.artifacts
        .push(Artifact::new("chain_lazy_0.csv", chain_csv(&lazy)));
    if svg {
        let plot = Plot {
            title: format!("rescaled chain radius, n = {n}"),
            x_label: "t".into(),
            y_label: "radius / sqrt(n)".into(),
            series: vec![
                Series {
                    label: "chain".into(),
                    points: thinned(&q, n),
                },
                Series {
                    label: "lazy chain".into(),
                    points: thinned(&lazy, n),
                },
            ],
        };
        out.artifacts
            .push(Artifact::new("chain_radius.svg", plot.render()));
    }
    Ok(out)
}

fn flip(cfg: &Config) -> Result<Outcome, RunError> {
    let exp = &cfg.experiment;
    let report = flip_check(exp)?;
    let mut out = Outcome::new(Subcommand::FlipCheck, report.checks.clone());
    out.artifacts.push(Artifact::json("report.json", &report));
    // the first replica whose walk changes sign
    for r in 0..exp.replicas {
        if let Some((s, flipped)) = flipped_sample(exp, r)? {
            out.artifacts
                .push(Artifact::new(&format!("walk_{r}.csv"), walk_csv(&s)));
            out.artifacts.push(Artifact::new(
                &format!("flipped_chain_{r}.csv"),
                chain_csv(&flipped.path),
            ));
            break;
        }
    }
    Ok(out)
}

fn flow(cfg: &Config) -> Result<Outcome, RunError> {
    let exp = &cfg.experiment;
    let report = flow_check(exp)?;
    let len = exp.length as i64;
    let fr = FlowRealization::generate(&exp.params, 0, len, exp.seed, 0)
        .map_err(starflow::Error::from)?;
    let radius = (exp.x_radius * (len as f64).sqrt()).round() as u64;
    let x = GraphPoint::new(exp.x_ray, radius, exp.params.n_rays());
    let mut kernels = format!("{KERNEL_HEADER}\n").into_bytes();
    for k in 0..=10 {
        let n = k * len / 10;
        let kernel =
            kernel_closed_form(&fr.walk, &exp.params, 0, n, &x).map_err(starflow::Error::from)?;
        write_kernel(&mut kernels, 0, n, &kernel)?;
    }
    let mut out = Outcome::new(Subcommand::FlowCheck, report.checks.clone());
    out.artifacts.push(Artifact::json("report.json", &report));
    out.artifacts.push(Artifact::new("kernel_0.csv", kernels));
    Ok(out)
}

#[derive(Serialize)]
struct ConvergenceSummary<'a> {
    checks: &'a [Check],
    summary: &'a [ScaleSummary],
}

fn profiles(cfg: &Config, svg: bool) -> Result<Outcome, RunError> {
    let exp = &cfg.experiment;
    let report = convergence(exp)?;
    let mut distance = Vec::new();
    write_distance_table(&mut distance, &report.rows)?;
    let mut beta = Vec::new();
    write_beta_table(&mut beta, &report.rows)?;
    let mut out = Outcome::new(Subcommand::Convergence, report.checks.clone());
    out.artifacts
        .push(Artifact::new("sup_distance.csv", distance));
    out.artifacts.push(Artifact::new("sup_beta.csv", beta));
    out.artifacts.push(Artifact::json(
        "summary.json",
        &ConvergenceSummary {
            checks: &report.checks,
            summary: &report.summary,
        },
    ));
    if svg {
        let series = |label: &str, f: fn(&ScaleSummary) -> f64| Series {
            label: label.into(),
            points: report
                .summary
                .iter()
                .map(|s| ((s.n as f64).log10(), f(s).log10()))
                .collect(),
        };
        let plot = Plot {
            title: "median profiles".into(),
            x_label: "log10 n".into(),
            y_label: "log10 median".into(),
            series: vec![
                series("sup distance", |s| s.sup_distance.median),
                series("sup beta", |s| s.sup_beta.median),
                series("hitting time gap", |s| s.tau_gap.median),
            ],
        };
        out.artifacts
            .push(Artifact::new("convergence.svg", plot.render()));
    }
    Ok(out)
}

/// Writes `<output_dir>/<subcommand>/` with the artifacts, `checks.csv` and `manifest.json`.
pub fn write_outcome(
    outcome: &Outcome,
    cfg: &Config,
    config_input: Option<&Input>,
) -> io::Result<()> {
    let dir = cfg.output_dir.join(outcome.subcommand.name());
    fs::create_dir_all(&dir)?;
    for a in &outcome.artifacts {
        fs::write(dir.join(&a.name), &a.bytes)?;
    }
    fs::write(dir.join("checks.csv"), checks_csv(&outcome.checks))?;
    let mut inputs: Vec<Input> = config_input.into_iter().cloned().collect();
    inputs.extend(outcome.inputs.iter().cloned());
    let echo = cfg.echo();
    let manifest = Manifest {
        subcommand: outcome.subcommand.name(),
        config: &echo,
        seed: cfg.experiment.seed,
        version: env!("CARGO_PKG_VERSION"),
        inputs: &inputs,
        checks: &outcome.checks,
    };
    fs::write(
        dir.join("manifest.json"),
        Artifact::json("manifest.json", &manifest).bytes,
    )
}
