//! fit, forecast, sweep and prior-check.

use std::path::{Path, PathBuf};

use anyhow::{ensure, Context, Result};
use chrono::{Datelike, NaiveDate};
use serde::{Deserialize, Serialize};
use sssir::data::{
    bundled_japan, derive_observations, fetch_dataset, load_csv_with, FetchOptions, FetchSource,
};
use sssir::forecast::{
    posterior_forecast, prior_predictive, write_forecast_csv, Band, ForecastOptions,
};
use sssir::inference::StepSizes;
use sssir::inference::{
    read_draws_json, run_chains, write_draws_csv, write_draws_json, write_trace_csv, Interval,
    PosteriorSummary,
};
use sssir::prior::{build_grid, fit_beta_regression, GridOptions};
use sssir::{
    Forecast, ObservationSeries, PosteriorDraws, RegressionModel, RngStream, ScenarioSpec,
};

use crate::config::{DataSource, Profile, RunConfig};
use crate::output::OutDir;
use crate::svg::{Chart, Layer};

/// Stream ids kept apart from the chains' `0..chains`.
const FORECAST_STREAM: u64 = 1_000;
const PRIOR_CHECK_STREAM: u64 = 2_000;

pub const SUMMARY_FILE: &str = "summary.json";
pub const OBSERVATIONS_FILE: &str = "observations.json";
pub const DRAWS_FILE: &str = "draws.json";
pub const SWEEP_DIR: &str = "sweep";
pub const SWEEP_INDEX: &str = "sweep/index.csv";

pub fn load_observations(cfg: &RunConfig) -> Result<ObservationSeries> {
    let raw = match &cfg.source {
        DataSource::Bundled => bundled_japan(),
        DataSource::Path(p) => {
            load_csv_with(p, &cfg.columns).with_context(|| format!("loading {}", p.display()))?
        }
        DataSource::Url(url) => {
            let fetched = fetch_dataset(
                url,
                &FetchOptions {
                    offline: cfg.offline,
                    columns: cfg.columns.clone(),
                    ..FetchOptions::default()
                },
            )?;
            if let FetchSource::Bundled(reason) = &fetched.source {
                log::warn!("{url} unavailable ({reason}); continuing with the bundled snapshot");
            }
            load_csv_with(&fetched.path, &cfg.columns)?
        }
    };
    Ok(derive_observations(
        &raw,
        cfg.p,
        cfg.window,
        cfg.population,
    )?)
}

pub fn regression(cfg: &RunConfig, obs: &ObservationSeries) -> Result<RegressionModel> {
    if cfg.published_coefficients {
        return Ok(RegressionModel::published());
    }
    let grid = build_grid(obs.y[0])?;
    let options = GridOptions {
        substeps: cfg.chain.substeps,
        ..GridOptions::default()
    };
    let fit = fit_beta_regression(&grid, cfg.prior.s0, options)
        .context("regenerating the beta regression")?;
    log::info!(
        "beta regression: R2 {:.6}, sigma2 {:.3e}, {} rows",
        fit.r_squared,
        fit.model.sigma2(),
        fit.rows.len()
    );
    Ok(fit.model)
}

fn date_of(obs: &ObservationSeries, day: usize) -> NaiveDate {
    obs.date_of_day(day as f64)
}

/// First-of-month ticks over model days `from..=to`.
fn month_ticks(obs: &ObservationSeries, from: usize, to: usize) -> Vec<(f64, String)> {
    let every = if to - from > 400 { 2 } else { 1 };
    (from..=to)
        .filter_map(|d| {
            let date = date_of(obs, d);
            (date.day() == 1 && date.month0().is_multiple_of(every))
                .then(|| (d as f64, date.format("%b %-d").to_string()))
        })
        .collect()
}

fn observed_points(obs: &ObservationSeries) -> Layer {
    Layer::Points {
        x: (1..=obs.len()).map(|d| d as f64).collect(),
        y: obs.y.clone(),
        fill: "#444",
        label: Some("observed Y".into()),
    }
}

// ------------------------------------------------------------------ fit

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct TableRow {
    pub parameter: String,
    pub description: String,
    /// `"median (lower--upper)"`.
    pub estimate: String,
    pub median: f64,
    pub lower: f64,
    pub upper: f64,
}

impl TableRow {
    fn new(parameter: &str, description: &str, interval: Interval, estimate: String) -> Self {
        Self {
            parameter: parameter.into(),
            description: description.into(),
            estimate,
            median: interval.median,
            lower: interval.lower,
            upper: interval.upper,
        }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct SummaryFile {
    pub p: f64,
    pub profile: String,
    /// True for the quick profile, whose chains are too short for final numbers.
    pub approximate: bool,
    pub seed: u64,
    pub chains: usize,
    pub burn_in: usize,
    pub iterations: usize,
    pub thin: usize,
    pub draws: usize,
    pub first_date: NaiveDate,
    pub last_date: NaiveDate,
    pub coefficients: String,
    pub table: Vec<TableRow>,
    pub precision: Vec<TableRow>,
    /// Calendar dates of the peak-timing median and interval.
    pub peak_date: [NaiveDate; 3],
}

fn summary_file(cfg: &RunConfig, obs: &ObservationSeries, s: &PosteriorSummary) -> SummaryFile {
    let pct = Interval {
        median: 100.0 * s.peak_intensity.median,
        lower: 100.0 * s.peak_intensity.lower,
        upper: 100.0 * s.peak_intensity.upper,
    };
    let pt = s.peak_timing;
    SummaryFile {
        p: cfg.p,
        profile: cfg.profile.name().into(),
        approximate: cfg.profile == Profile::Quick,
        seed: cfg.chain.seed,
        chains: cfg.chains,
        burn_in: cfg.chain.burn_in,
        iterations: cfg.chain.iterations,
        thin: cfg.chain.thin,
        draws: s.draws,
        first_date: obs.first_date(),
        last_date: obs.last_date(),
        coefficients: if cfg.published_coefficients {
            "published"
        } else {
            "regenerated"
        }
        .into(),
        table: vec![
            TableRow::new("beta", "Infection rate", s.beta, s.beta.format(2)),
            TableRow::new("gamma", "Removal rate", s.gamma, s.gamma.format(2)),
            TableRow::new("R0", "Basic reproduction number", s.r0, s.r0.format(2)),
            TableRow::new("PT", "Peak timing", pt, pt.format(0)),
            TableRow::new("PI(%)", "Peak intensity", pct, pct.format(2)),
        ],
        precision: vec![
            TableRow::new("kappa", "State precision", s.kappa, s.kappa.format_sci(2)),
            TableRow::new(
                "lambda",
                "Observation precision",
                s.lambda,
                s.lambda.format_sci(2),
            ),
            TableRow::new(
                "I0",
                "Initial infectious proportion",
                s.i0,
                s.i0.format_sci(2),
            ),
        ],
        peak_date: [pt.median, pt.lower, pt.upper].map(|d| obs.date_of_day(d)),
    }
}

#[derive(Serialize)]
struct ChainAcceptance {
    chain: usize,
    theta_min: f64,
    theta_max: f64,
    block: f64,
    lambda: f64,
    theta: Vec<[f64; 2]>,
    step_sizes: Option<StepSizes>,
}

#[derive(Serialize)]
struct AcceptanceFile {
    /// Whether every rate of every chain lies in [0.2, 0.4].
    all_within_0_2_0_4: bool,
    chains: Vec<ChainAcceptance>,
}

fn acceptance_file(draws: &PosteriorDraws) -> AcceptanceFile {
    let chains = draws
        .acceptance
        .iter()
        .enumerate()
        .map(|(c, a)| {
            let (theta_min, theta_max) = a.theta_range();
            ChainAcceptance {
                chain: c,
                theta_min,
                theta_max,
                block: a.block,
                lambda: a.lambda,
                theta: a.theta.clone(),
                step_sizes: draws.step_sizes.get(c).cloned(),
            }
        })
        .collect();
    AcceptanceFile {
        all_within_0_2_0_4: draws.acceptance.iter().all(|a| a.within(0.2, 0.4)),
        chains,
    }
}

fn fit_chart(obs: &ObservationSeries, s: &PosteriorSummary) -> Chart {
    let x: Vec<f64> = s.infectious.iter().map(|d| d.day as f64).collect();
    Chart {
        title: format!("Posterior infectious proportion, p = {}", obs.p),
        y_label: "proportion (%)".into(),
        x_ticks: month_ticks(obs, 1, obs.len()),
        y_scale: 100.0,
        layers: vec![
            Layer::Band {
                x: x.clone(),
                lower: s.infectious.iter().map(|d| d.interval.lower).collect(),
                upper: s.infectious.iter().map(|d| d.interval.upper).collect(),
                fill: "#9ecae1",
                label: Some("I(t) 95% interval".into()),
            },
            Layer::Line {
                x,
                y: s.infectious.iter().map(|d| d.interval.median).collect(),
                stroke: "#08519c",
                dashed: false,
                label: Some("I(t) median".into()),
            },
            observed_points(obs),
        ],
    }
}

pub fn fit(cfg: &RunConfig) -> Result<()> {
    let out = OutDir::new(cfg.out_dir(), cfg.force)?;
    out.claim(&[
        "draws.csv",
        DRAWS_FILE,
        "trace.csv",
        SUMMARY_FILE,
        "acceptance.json",
        OBSERVATIONS_FILE,
        "regression.json",
        "fit.svg",
    ])?;
    let obs = load_observations(cfg)?;
    let model = regression(cfg, &obs)?;
    log::info!(
        "fitting {} days ({} to {}), profile {}, {} chain(s)",
        obs.len(),
        obs.first_date(),
        obs.last_date(),
        cfg.profile.name(),
        cfg.chains
    );
    let draws = run_chains(&obs.y, &cfg.prior, &model, &cfg.chain, cfg.chains)?;
    let summary = draws.summarize()?;

    out.write_with("draws.csv", |w| write_draws_csv(w, &draws))?;
    out.write_with(DRAWS_FILE, |w| write_draws_json(w, &draws))?;
    out.write_with("trace.csv", |w| write_trace_csv(w, &draws))?;
    out.write_json(OBSERVATIONS_FILE, &obs)?;
    out.write("regression.json", model.to_json().as_bytes())?;
    out.write_json("acceptance.json", &acceptance_file(&draws))?;
    out.write("fit.svg", fit_chart(&obs, &summary).render().as_bytes())?;
    let file = summary_file(cfg, &obs, &summary);
    out.write_json(SUMMARY_FILE, &file)?;
    for row in &file.table {
        println!(
            "{:<6} {:<28} {}",
            row.parameter, row.description, row.estimate
        );
    }
    Ok(())
}

// ------------------------------------------------------------- forecast

fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T> {
    let text =
        std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))
}

/// Draws and observations written by `fit`.
pub fn load_fit(
    cfg: &RunConfig,
    draws: Option<&Path>,
) -> Result<(PosteriorDraws, ObservationSeries)> {
    let draws_path = draws
        .map(Path::to_path_buf)
        .unwrap_or_else(|| cfg.out.join(DRAWS_FILE));
    let obs_path = draws_path
        .parent()
        .map(|p| p.join(OBSERVATIONS_FILE))
        .unwrap_or_else(|| PathBuf::from(OBSERVATIONS_FILE));
    let missing: Vec<String> = [&draws_path, &obs_path]
        .iter()
        .filter(|p| !p.is_file())
        .map(|p| p.display().to_string())
        .collect();
    ensure!(
        missing.is_empty(),
        "missing fit output (run `sssir fit` first): {}",
        missing.join(", ")
    );
    let file = std::fs::File::open(&draws_path)?;
    let draws = read_draws_json(std::io::BufReader::new(file))
        .with_context(|| format!("reading {}", draws_path.display()))?;
    let obs: ObservationSeries = read_json(&obs_path)?;
    ensure!(
        draws.days() == obs.len(),
        "draws cover {} days but the observations have {}",
        draws.days(),
        obs.len()
    );
    Ok((draws, obs))
}

pub fn scenario_tag(s: &ScenarioSpec) -> String {
    if s.is_no_intervention() {
        "none".into()
    } else {
        format!("c{}_cs{}_t{}", s.c, s.c_star, s.t_star)
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct PointPeak {
    pub day: usize,
    pub date: NaiveDate,
    pub median: f64,
    pub q025: f64,
    pub q975: f64,
    pub q95: f64,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct PerDrawPeak {
    pub time: Option<Interval>,
    pub date: Option<[NaiveDate; 3]>,
    pub intensity: Option<Interval>,
    pub censored_fraction: f64,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct PeakFile {
    pub scenario: Option<ScenarioSpec>,
    pub draws: usize,
    /// Peak of the pointwise-median curve of `Y`.
    pub point_prediction: PointPeak,
    /// Peaks of individual simulated `I` paths; censored paths excluded.
    pub per_draw: PerDrawPeak,
    pub attack: Interval,
    pub last_observed: f64,
    pub interior_peak_above_last_observed: bool,
}

pub fn peak_file(f: &Forecast, obs: &ObservationSeries) -> PeakFile {
    let b = f.point_prediction_peak();
    let last = *obs.y.last().unwrap_or(&0.0);
    PeakFile {
        scenario: f.scenario,
        draws: f.draws,
        point_prediction: PointPeak {
            day: b.day,
            date: date_of(obs, b.day),
            median: b.median,
            q025: b.q025,
            q975: b.q975,
            q95: b.q95,
        },
        per_draw: PerDrawPeak {
            time: f.peak.time,
            date: f
                .peak
                .time
                .map(|t| [t.median, t.lower, t.upper].map(|d| obs.date_of_day(d))),
            intensity: f.peak.intensity,
            censored_fraction: f.peak.censored_fraction,
        },
        attack: f.attack,
        last_observed: last,
        interior_peak_above_last_observed: f.point_prediction_has_interior_peak_above(last),
    }
}

fn medians(bands: &[Band]) -> (Vec<f64>, Vec<f64>) {
    (
        bands.iter().map(|b| b.day as f64).collect(),
        bands.iter().map(|b| b.median).collect(),
    )
}

pub fn forecast_chart(
    f: &Forecast,
    reference: Option<&Forecast>,
    obs: &ObservationSeries,
) -> Chart {
    let title = match f.scenario {
        Some(s) if !s.is_no_intervention() => {
            format!("c = {}, c* = {}, T* = {}", s.c, s.c_star, s.t_star)
        }
        _ => "No intervention".into(),
    };
    let (x, med) = medians(&f.observed);
    let mut layers = vec![Layer::Band {
        x: x.clone(),
        lower: med.clone(),
        upper: f.observed.iter().map(|b| b.q95).collect(),
        fill: "#bdbdbd",
        label: Some("95% upper bound".into()),
    }];
    if let Some(r) = reference {
        let (rx, ry) = medians(&r.observed);
        layers.push(Layer::Line {
            x: rx,
            y: ry,
            stroke: "#d62728",
            dashed: false,
            label: Some("no intervention".into()),
        });
    }
    layers.push(Layer::Line {
        x,
        y: med,
        stroke: "black",
        dashed: false,
        label: Some("median prediction".into()),
    });
    layers.push(observed_points(obs));
    let end = f.observed.last().map_or(obs.len(), |b| b.day);
    Chart {
        title,
        y_label: "observed proportion Y (%)".into(),
        x_ticks: month_ticks(obs, 1, end),
        y_scale: 100.0,
        layers,
    }
}

fn forecast_options(cfg: &RunConfig) -> ForecastOptions {
    ForecastOptions {
        max_draws: cfg.max_draws,
        substeps: cfg.chain.substeps,
        ..ForecastOptions::default()
    }
}

pub fn forecast(cfg: &RunConfig, scenarios: &[ScenarioSpec], draws: Option<&Path>) -> Result<()> {
    let scenarios = if scenarios.is_empty() {
        vec![ScenarioSpec::no_intervention(cfg.horizon)]
    } else {
        scenarios.to_vec()
    };
    let out = OutDir::new(cfg.out_dir(), cfg.force)?;
    let names: Vec<String> = scenarios
        .iter()
        .flat_map(|s| {
            let t = scenario_tag(s);
            ["csv", "json", "svg"].map(|ext| format!("forecast_{t}.{ext}"))
        })
        .collect();
    out.claim(&names)?;
    let (draws, obs) = load_fit(cfg, draws)?;
    let rng = RngStream::new(cfg.chain.seed, FORECAST_STREAM);
    let opts = forecast_options(cfg);
    let mut reference: Option<Forecast> = None;
    for s in &scenarios {
        let f = posterior_forecast(&draws, s, &rng, &opts)?;
        if !s.is_no_intervention()
            && reference.as_ref().map(|r| r.observed.len()) != Some(s.horizon)
        {
            reference = Some(posterior_forecast(
                &draws,
                &ScenarioSpec::no_intervention(s.horizon),
                &rng,
                &opts,
            )?);
        }
        let r = if s.is_no_intervention() {
            None
        } else {
            reference.as_ref()
        };
        let tag = scenario_tag(s);
        out.write_with(&format!("forecast_{tag}.csv"), |w| {
            write_forecast_csv(w, &f)
        })?;
        let peak = peak_file(&f, &obs);
        out.write_json(&format!("forecast_{tag}.json"), &peak)?;
        out.write(
            &format!("forecast_{tag}.svg"),
            forecast_chart(&f, r, &obs).render().as_bytes(),
        )?;
        println!(
            "{tag}: point prediction peaks {} at {:.2}% (95% upper {:.2}%)",
            peak.point_prediction.date,
            100.0 * peak.point_prediction.median,
            100.0 * peak.point_prediction.q95
        );
    }
    Ok(())
}

// ---------------------------------------------------------------- sweep

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct IndexRow {
    pub tag: String,
    pub c: f64,
    pub c_star: f64,
    pub t_star: usize,
    pub peak_day: usize,
    pub peak_date: NaiveDate,
    pub peak_median: f64,
    pub peak_q95: f64,
    pub per_draw_peak_intensity: Option<f64>,
    pub censored_fraction: f64,
    pub interior_peak_above_last_observed: bool,
    pub csv: String,
    pub svg: String,
}

pub fn sweep(cfg: &RunConfig, extended: bool, draws: Option<&Path>) -> Result<()> {
    let grid = ScenarioSpec::default_grid(cfg.horizon, extended || cfg.extended_grid);
    let out = OutDir::new(cfg.out_dir(), cfg.force)?;
    let mut names = vec![SWEEP_INDEX.to_string()];
    for s in &grid {
        let t = scenario_tag(s);
        names.push(format!("{SWEEP_DIR}/{t}.csv"));
        names.push(format!("{SWEEP_DIR}/{t}.svg"));
    }
    out.claim(&names)?;
    let (draws, obs) = load_fit(cfg, draws)?;
    // One shared stream: every scenario, and the reference, sees the same
    // innovations, so differences between scenarios are due to the scenario.
    let rng = RngStream::new(cfg.chain.seed, FORECAST_STREAM);
    let opts = forecast_options(cfg);
    let reference = posterior_forecast(
        &draws,
        &ScenarioSpec::no_intervention(cfg.horizon),
        &rng,
        &opts,
    )?;
    let mut index = csv::Writer::from_writer(Vec::new());
    for (k, s) in grid.iter().enumerate() {
        let f = posterior_forecast(&draws, s, &rng, &opts)?;
        let tag = scenario_tag(s);
        let (csv_name, svg_name) = (format!("{tag}.csv"), format!("{tag}.svg"));
        out.write_with(&format!("{SWEEP_DIR}/{csv_name}"), |w| {
            write_forecast_csv(w, &f)
        })?;
        out.write(
            &format!("{SWEEP_DIR}/{svg_name}"),
            forecast_chart(&f, Some(&reference), &obs)
                .render()
                .as_bytes(),
        )?;
        let p = peak_file(&f, &obs);
        index.serialize(IndexRow {
            tag,
            c: s.c,
            c_star: s.c_star,
            t_star: s.t_star,
            peak_day: p.point_prediction.day,
            peak_date: p.point_prediction.date,
            peak_median: p.point_prediction.median,
            peak_q95: p.point_prediction.q95,
            per_draw_peak_intensity: p.per_draw.intensity.map(|i| i.median),
            censored_fraction: p.per_draw.censored_fraction,
            interior_peak_above_last_observed: p.interior_peak_above_last_observed,
            csv: csv_name,
            svg: svg_name,
        })?;
        log::info!("scenario {}/{} done", k + 1, grid.len());
    }
    let bytes = index
        .into_inner()
        .map_err(|e| anyhow::anyhow!("index: {e}"))?;
    out.write(SWEEP_INDEX, &bytes)?;
    println!(
        "wrote {} scenarios and {}",
        grid.len(),
        out.path(SWEEP_INDEX).display()
    );
    Ok(())
}

// ---------------------------------------------------------- prior check

#[derive(Serialize, Deserialize)]
pub struct PriorCheckFile {
    pub n_draws: usize,
    pub fraction_inside: f64,
    pub outside: Vec<NaiveDate>,
}

pub fn prior_check(cfg: &RunConfig, n_draws: usize) -> Result<()> {
    ensure!(n_draws > 0, "--n-draws must be positive");
    let out = OutDir::new(cfg.out_dir(), cfg.force)?;
    out.claim(&["prior_check.csv", "prior_check.json", "prior_check.svg"])?;
    let obs = load_observations(cfg)?;
    let model = regression(cfg, &obs)?;
    let f = prior_predictive(
        &RngStream::new(cfg.chain.seed, PRIOR_CHECK_STREAM),
        &cfg.prior,
        &model,
        obs.len(),
        n_draws,
        &forecast_options(cfg),
    )?;
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record([
        "day", "date", "observed", "q025", "median", "q975", "inside",
    ])?;
    let mut outside = Vec::new();
    for (b, y) in f.observed.iter().zip(&obs.y) {
        let inside = b.contains(*y);
        if !inside {
            outside.push(date_of(&obs, b.day));
        }
        w.write_record([
            b.day.to_string(),
            date_of(&obs, b.day).to_string(),
            y.to_string(),
            b.q025.to_string(),
            b.median.to_string(),
            b.q975.to_string(),
            inside.to_string(),
        ])?;
    }
    let fraction_inside = 1.0 - outside.len() as f64 / obs.len() as f64;
    let bytes = w
        .into_inner()
        .map_err(|e| anyhow::anyhow!("prior check table: {e}"))?;
    out.write("prior_check.csv", &bytes)?;
    out.write_json(
        "prior_check.json",
        &PriorCheckFile {
            n_draws,
            fraction_inside,
            outside,
        },
    )?;
    let (x, med) = medians(&f.observed);
    let chart = Chart {
        title: format!("Prior predictive, p = {}, {} draws", cfg.p, n_draws),
        y_label: "observed proportion Y (%)".into(),
        x_ticks: month_ticks(&obs, 1, obs.len()),
        y_scale: 100.0,
        layers: vec![
            Layer::Band {
                x: x.clone(),
                lower: f.observed.iter().map(|b| b.q025).collect(),
                upper: f.observed.iter().map(|b| b.q975).collect(),
                fill: "#bdbdbd",
                label: Some("95% prior predictive".into()),
            },
            Layer::Line {
                x,
                y: med,
                stroke: "black",
                dashed: true,
                label: Some("median".into()),
            },
            observed_points(&obs),
        ],
    };
    out.write("prior_check.svg", chart.render().as_bytes())?;
    println!(
        "{:.1}% of observed points inside the 95% prior predictive band",
        100.0 * fraction_inside
    );
    Ok(())
}
