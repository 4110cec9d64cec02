//! Run configuration: a TOML file, overridden by command-line flags.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use anyhow::{bail, ensure, Context, Result};
use chrono::NaiveDate;
use serde::{Deserialize, Serialize};
use sssir::data::{column_map_from_pairs, ColumnMap, DateWindow, JAPAN_POPULATION};
use sssir::{ChainConfig, PriorSpec, ScenarioSpec};

use crate::CommonArgs;

pub const DEFAULT_SEED: u64 = 20_200_422;
pub const DEFAULT_P: f64 = 0.1;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum Profile {
    /// 10 000 burn-in, 50 000 iterations thinned by 10.
    #[default]
    #[value(name = "japan-2020")]
    Japan2020,
    /// 2 000 burn-in, 8 000 iterations thinned by 4. Approximate.
    Quick,
}

impl Profile {
    pub fn name(self) -> &'static str {
        match self {
            Profile::Japan2020 => "japan-2020",
            Profile::Quick => "quick",
        }
    }
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields, default)]
struct FileConfig {
    profile: Option<Profile>,
    out: Option<PathBuf>,
    data: DataSection,
    prior: PriorOverrides,
    chain: ChainSection,
    forecast: ForecastSection,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields, default)]
struct DataSection {
    /// Local CSV path or an http(s) URL.
    source: Option<String>,
    offline: bool,
    p: Option<f64>,
    from: Option<NaiveDate>,
    to: Option<NaiveDate>,
    population: Option<u64>,
    columns: BTreeMap<String, String>,
    published_coefficients: bool,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields, default)]
struct PriorOverrides {
    s0: Option<f64>,
    i0_mean: Option<f64>,
    i0_var: Option<f64>,
    pi_mean: Option<f64>,
    pi_sd: Option<f64>,
    pt_mean: Option<f64>,
    pt_sd: Option<f64>,
    kappa_shape: Option<f64>,
    kappa_rate: Option<f64>,
    lambda_shape: Option<f64>,
    lambda_rate: Option<f64>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields, default)]
struct ChainSection {
    seed: Option<u64>,
    chains: Option<usize>,
    iterations: Option<usize>,
    burn_in: Option<usize>,
    thin: Option<usize>,
    substeps: Option<usize>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields, default)]
struct ForecastSection {
    horizon: Option<usize>,
    max_draws: Option<usize>,
    /// `[c, c_star, t_star]` triples.
    scenarios: Vec<[f64; 3]>,
    extended_grid: bool,
}

#[derive(Clone, Debug, PartialEq)]
pub enum DataSource {
    Bundled,
    Path(PathBuf),
    Url(String),
}

/// Fully resolved settings for one invocation.
#[derive(Clone, Debug)]
pub struct RunConfig {
    pub profile: Profile,
    pub source: DataSource,
    pub offline: bool,
    pub columns: ColumnMap,
    pub window: DateWindow,
    pub population: u64,
    pub p: f64,
    pub published_coefficients: bool,
    pub prior: PriorSpec,
    pub chain: ChainConfig,
    pub chains: usize,
    pub horizon: usize,
    pub max_draws: Option<usize>,
    pub scenarios: Vec<ScenarioSpec>,
    pub extended_grid: bool,
    pub out: PathBuf,
    pub force: bool,
}

impl RunConfig {
    pub fn resolve(args: &CommonArgs) -> Result<Self> {
        let file = match &args.config {
            Some(path) => {
                let text = std::fs::read_to_string(path)
                    .with_context(|| format!("reading config {}", path.display()))?;
                toml::from_str::<FileConfig>(&text)
                    .with_context(|| format!("parsing config {}", path.display()))?
            }
            None => FileConfig::default(),
        };

        let profile = args.profile.or(file.profile).unwrap_or_default();
        let source = match args.data.clone().or(file.data.source) {
            None => DataSource::Bundled,
            Some(s) if s.starts_with("http://") || s.starts_with("https://") => DataSource::Url(s),
            Some(s) => {
                let path = PathBuf::from(s);
                ensure!(
                    path.is_file(),
                    "data file {} does not exist",
                    path.display()
                );
                DataSource::Path(path)
            }
        };
        let p = args.p.or(file.data.p).unwrap_or(DEFAULT_P);
        ensure!(p > 0.0 && p <= 1.0, "--p must lie in (0, 1], got {p}");
        let default_window = DateWindow::japan_2020();
        let window = DateWindow::new(
            file.data.from.unwrap_or(default_window.from),
            file.data.to.unwrap_or(default_window.to),
        )?;

        let mut prior = PriorSpec::japan_2020(p);
        let o = &file.prior;
        let set = |slot: &mut f64, v: Option<f64>| {
            if let Some(v) = v {
                *slot = v;
            }
        };
        set(&mut prior.s0, o.s0);
        set(&mut prior.i0_mean, o.i0_mean);
        set(&mut prior.i0_var, o.i0_var);
        set(&mut prior.pi_spec.mean, o.pi_mean);
        set(&mut prior.pi_spec.sd, o.pi_sd);
        set(&mut prior.pt_spec.mean, o.pt_mean);
        set(&mut prior.pt_spec.sd, o.pt_sd);
        set(&mut prior.kappa_shape, o.kappa_shape);
        set(&mut prior.kappa_rate, o.kappa_rate);
        set(&mut prior.lambda_shape, o.lambda_shape);
        set(&mut prior.lambda_rate, o.lambda_rate);
        prior.validate().context("invalid prior")?;

        let seed = args.seed.or(file.chain.seed).unwrap_or(DEFAULT_SEED);
        let mut chain = match profile {
            Profile::Japan2020 => ChainConfig::full(seed),
            Profile::Quick => ChainConfig::quick(seed),
        };
        if let Some(v) = args.iterations.or(file.chain.iterations) {
            chain.iterations = v;
        }
        if let Some(v) = args.burn_in.or(file.chain.burn_in) {
            chain.burn_in = v;
        }
        if let Some(v) = args.thin.or(file.chain.thin) {
            chain.thin = v;
        }
        if let Some(v) = file.chain.substeps {
            chain.substeps = v;
        }
        if chain.iterations == 0 {
            bail!("--iterations must be positive");
        }
        chain.validate().context("invalid chain settings")?;
        let chains = args.chains.or(file.chain.chains).unwrap_or(1);
        ensure!(chains > 0, "--chains must be positive");

        let horizon = args
            .horizon
            .or(file.forecast.horizon)
            .unwrap_or(sssir::forecast::DEFAULT_HORIZON);
        ensure!(horizon > 0, "--horizon must be positive");
        let max_draws = args.max_draws.or(file.forecast.max_draws);
        ensure!(max_draws != Some(0), "--max-draws must be positive");
        let scenarios = file
            .forecast
            .scenarios
            .iter()
            .map(|[c, cs, t]| scenario(*c, *cs, *t, horizon))
            .collect::<Result<Vec<_>>>()?;

        Ok(Self {
            profile,
            source,
            offline: args.offline || file.data.offline,
            columns: column_map_from_pairs(&file.data.columns)?,
            window,
            population: file.data.population.unwrap_or(JAPAN_POPULATION),
            p,
            published_coefficients: args.published_coefficients || file.data.published_coefficients,
            prior,
            chain,
            chains,
            horizon,
            max_draws,
            scenarios,
            extended_grid: file.forecast.extended_grid,
            out: args
                .out
                .clone()
                .or(file.out)
                .unwrap_or_else(|| PathBuf::from("sssir-out")),
            force: args.force,
        })
    }

    pub fn out_dir(&self) -> &Path {
        &self.out
    }
}

fn scenario(c: f64, c_star: f64, t_star: f64, horizon: usize) -> Result<ScenarioSpec> {
    ensure!(
        t_star >= 0.0 && t_star.fract() == 0.0,
        "T* must be a whole number of days, got {t_star}"
    );
    Ok(ScenarioSpec::new(c, c_star, t_star as usize, horizon)?)
}

/// Parses `c,cstar,tstar`.
pub fn parse_scenario(text: &str, horizon: usize) -> Result<ScenarioSpec> {
    let parts: Vec<&str> = text.split(',').map(str::trim).collect();
    ensure!(
        parts.len() == 3,
        "scenario `{text}` is not of the form c,cstar,tstar"
    );
    let num = |s: &str| -> Result<f64> {
        s.parse::<f64>()
            .with_context(|| format!("bad number `{s}` in scenario `{text}`"))
    };
    scenario(num(parts[0])?, num(parts[1])?, num(parts[2])?, horizon)
}
