//! Assembles fit, prior-check and forecast artifacts into one document.

use std::fs;
use std::path::Path;

use anyhow::{bail, Context, Result};

use crate::commands::{
    IndexRow, PeakFile, PriorCheckFile, SummaryFile, SUMMARY_FILE, SWEEP_DIR, SWEEP_INDEX,
};
use crate::config::RunConfig;
use crate::output::OutDir;
use crate::svg::escape;

#[derive(Clone, Copy, Debug, PartialEq, Eq, clap::ValueEnum)]
pub enum Format {
    Md,
    Html,
    Both,
}

enum Block {
    Heading(u8, String),
    Para(String),
    Table(Vec<String>, Vec<Vec<String>>),
    Svg(String),
}

/// Day and value of the highest `median` in a forecast CSV.
fn csv_peak(path: &Path) -> Result<(usize, f64)> {
    let mut r =
        csv::Reader::from_path(path).with_context(|| format!("opening {}", path.display()))?;
    let headers = r
        .headers()
        .with_context(|| format!("{}: unreadable header", path.display()))?
        .clone();
    let col = |name: &str| {
        headers
            .iter()
            .position(|h| h == name)
            .with_context(|| format!("{}: no `{name}` column", path.display()))
    };
    let (day, median) = (col("day")?, col("median")?);
    let mut best: Option<(usize, f64)> = None;
    for (k, rec) in r.records().enumerate() {
        let line = k + 2;
        let rec =
            rec.with_context(|| format!("{}: line {line}: malformed record", path.display()))?;
        let field = |i: usize| rec.get(i).unwrap_or("");
        let d: usize = field(day).parse().with_context(|| {
            format!("{}: line {line}: bad day `{}`", path.display(), field(day))
        })?;
        let m: f64 = field(median).parse().with_context(|| {
            format!(
                "{}: line {line}: bad median `{}`",
                path.display(),
                field(median)
            )
        })?;
        if best.is_none_or(|(_, b)| m > b) {
            best = Some((d, m));
        }
    }
    best.with_context(|| format!("{}: no rows", path.display()))
}

fn read_json<T: for<'de> serde::Deserialize<'de>>(path: &Path) -> Result<T> {
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    serde_json::from_str(&text).with_context(|| format!("{}: malformed JSON", path.display()))
}

fn read_text(path: &Path) -> Result<String> {
    fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))
}

fn pct(v: f64) -> String {
    format!("{:.2}%", 100.0 * v)
}

pub fn report(cfg: &RunConfig, format: Format) -> Result<()> {
    let out = OutDir::new(cfg.out_dir(), cfg.force)?;
    let targets: Vec<&str> = match format {
        Format::Md => vec!["report.md"],
        Format::Html => vec!["report.html"],
        Format::Both => vec!["report.md", "report.html"],
    };
    out.claim(&targets)?;
    let root = out.root();

    // Collect every missing input before failing.
    let mut missing = Vec::new();
    let summary_path = root.join(SUMMARY_FILE);
    if !summary_path.is_file() {
        missing.push(summary_path.display().to_string());
    }
    let mut forecast_tags = Vec::new();
    if let Ok(entries) = fs::read_dir(root) {
        for e in entries.flatten() {
            let name = e.file_name().to_string_lossy().into_owned();
            if let Some(tag) = name
                .strip_prefix("forecast_")
                .and_then(|n| n.strip_suffix(".json"))
            {
                forecast_tags.push(tag.to_string());
            }
        }
    }
    forecast_tags.sort();
    for tag in &forecast_tags {
        for ext in ["csv", "svg"] {
            let p = root.join(format!("forecast_{tag}.{ext}"));
            if !p.is_file() {
                missing.push(p.display().to_string());
            }
        }
    }
    let index_path = root.join(SWEEP_INDEX);
    let sweep: Vec<IndexRow> = if index_path.is_file() {
        let mut r = csv::Reader::from_path(&index_path)?;
        let rows = r
            .deserialize::<IndexRow>()
            .enumerate()
            .map(|(k, row)| {
                row.with_context(|| {
                    format!("{}: line {}: malformed row", index_path.display(), k + 2)
                })
            })
            .collect::<Result<Vec<_>>>()?;
        for row in &rows {
            for name in [&row.csv, &row.svg] {
                let p = root.join(SWEEP_DIR).join(name);
                if !p.is_file() {
                    missing.push(p.display().to_string());
                }
            }
        }
        rows
    } else {
        Vec::new()
    };
    if !missing.is_empty() {
        bail!("missing report inputs: {}", missing.join(", "));
    }

    let summary: SummaryFile = read_json(&summary_path)?;
    let mut blocks = vec![
        Block::Heading(1, "State-space SIR report".into()),
        Block::Para(format!(
            "Observations {} to {}, identification rate p = {}. Profile `{}`{}: {} chain(s), seed {}, {} burn-in, {} iterations, thin {}, {} retained draws; {} regression coefficients.",
            summary.first_date,
            summary.last_date,
            summary.p,
            summary.profile,
            if summary.approximate { " (approximate)" } else { "" },
            summary.chains,
            summary.seed,
            summary.burn_in,
            summary.iterations,
            summary.thin,
            summary.draws,
            summary.coefficients
        )),
        Block::Heading(2, "Parameter estimates".into()),
        Block::Table(
            vec!["Parameter".into(), "Description".into(), "Estimate (95% interval)".into()],
            summary
                .table
                .iter()
                .chain(&summary.precision)
                .map(|r| vec![r.parameter.clone(), r.description.clone(), r.estimate.clone()])
                .collect(),
        ),
        Block::Para(format!(
            "Peak timing as dates: {} ({} to {}).",
            summary.peak_date[0], summary.peak_date[1], summary.peak_date[2]
        )),
    ];

    let acceptance = root.join("acceptance.json");
    if acceptance.is_file() {
        let v: serde_json::Value = read_json(&acceptance)?;
        let rows = v["chains"]
            .as_array()
            .map(|chains| {
                chains
                    .iter()
                    .map(|c| {
                        let f = |k: &str| c[k].as_f64().map_or("-".into(), |x| format!("{x:.3}"));
                        vec![
                            c["chain"].to_string(),
                            format!("{} to {}", f("theta_min"), f("theta_max")),
                            f("block"),
                            f("lambda"),
                        ]
                    })
                    .collect()
            })
            .unwrap_or_default();
        blocks.push(Block::Heading(2, "Acceptance rates".into()));
        blocks.push(Block::Table(
            vec![
                "Chain".into(),
                "Latent states".into(),
                "Parameter block".into(),
                "lambda".into(),
            ],
            rows,
        ));
    }
    let fit_svg = root.join("fit.svg");
    if fit_svg.is_file() {
        blocks.push(Block::Heading(2, "Fit".into()));
        blocks.push(Block::Svg(read_text(&fit_svg)?));
    }

    let prior_json = root.join("prior_check.json");
    if prior_json.is_file() {
        let pc: PriorCheckFile = read_json(&prior_json)?;
        blocks.push(Block::Heading(2, "Prior predictive check".into()));
        blocks.push(Block::Para(format!(
            "{} of observed points lie inside the pointwise 95% band of {} prior draws.",
            pct(pc.fraction_inside),
            pc.n_draws
        )));
        let svg = root.join("prior_check.svg");
        if svg.is_file() {
            blocks.push(Block::Svg(read_text(&svg)?));
        }
    }

    if !forecast_tags.is_empty() {
        blocks.push(Block::Heading(2, "Forecasts".into()));
        let mut rows = Vec::new();
        let mut svgs = Vec::new();
        for tag in &forecast_tags {
            let peak: PeakFile = read_json(&root.join(format!("forecast_{tag}.json")))?;
            let (day, value) = csv_peak(&root.join(format!("forecast_{tag}.csv")))?;
            let date = summary.first_date + chrono::Duration::days(day as i64 - 1);
            let scenario = peak.scenario.map_or("-".into(), |s| {
                format!("c={}, c*={}, T*={}", s.c, s.c_star, s.t_star)
            });
            rows.push(vec![
                tag.clone(),
                scenario,
                date.to_string(),
                pct(value),
                pct(peak.point_prediction.q95),
                peak.per_draw
                    .intensity
                    .map_or("-".into(), |i| pct(i.median)),
            ]);
            svgs.push(read_text(&root.join(format!("forecast_{tag}.svg")))?);
        }
        blocks.push(Block::Table(
            vec![
                "Forecast".into(),
                "Scenario".into(),
                "Peak date".into(),
                "Peak (median)".into(),
                "95% upper".into(),
                "Per-draw peak".into(),
            ],
            rows,
        ));
        blocks.extend(svgs.into_iter().map(Block::Svg));
    }

    if !sweep.is_empty() {
        blocks.push(Block::Heading(2, "Scenario sweep".into()));
        let mut rows = Vec::new();
        let mut svgs = Vec::new();
        for row in &sweep {
            let (day, value) = csv_peak(&root.join(SWEEP_DIR).join(&row.csv))?;
            let date = summary.first_date + chrono::Duration::days(day as i64 - 1);
            rows.push(vec![
                row.c.to_string(),
                row.c_star.to_string(),
                row.t_star.to_string(),
                date.to_string(),
                pct(value),
                pct(row.peak_q95),
                if row.interior_peak_above_last_observed {
                    "yes"
                } else {
                    "no"
                }
                .into(),
            ]);
            svgs.push(read_text(&root.join(SWEEP_DIR).join(&row.svg))?);
        }
        blocks.push(Block::Table(
            vec![
                "c".into(),
                "c*".into(),
                "T*".into(),
                "Peak date".into(),
                "Peak (median)".into(),
                "95% upper".into(),
                "Regrowth above last observation".into(),
            ],
            rows,
        ));
        blocks.extend(svgs.into_iter().map(Block::Svg));
    }

    if matches!(format, Format::Md | Format::Both) {
        out.write("report.md", markdown(&blocks).as_bytes())?;
    }
    if matches!(format, Format::Html | Format::Both) {
        out.write("report.html", html(&blocks).as_bytes())?;
    }
    println!("report written to {}", root.display());
    Ok(())
}

fn markdown(blocks: &[Block]) -> String {
    let mut s = String::new();
    for b in blocks {
        match b {
            Block::Heading(level, text) => {
                s.push_str(&"#".repeat(*level as usize));
                s.push(' ');
                s.push_str(text);
                s.push_str("\n\n");
            }
            Block::Para(text) => {
                s.push_str(text);
                s.push_str("\n\n");
            }
            Block::Table(head, rows) => {
                let cell = |c: &String| c.replace('|', "\\|");
                s.push_str(&format!(
                    "| {} |\n",
                    head.iter().map(cell).collect::<Vec<_>>().join(" | ")
                ));
                s.push_str(&format!("|{}\n", "---|".repeat(head.len())));
                for r in rows {
                    s.push_str(&format!(
                        "| {} |\n",
                        r.iter().map(cell).collect::<Vec<_>>().join(" | ")
                    ));
                }
                s.push('\n');
            }
            Block::Svg(svg) => {
                s.push_str("<div>\n");
                s.push_str(svg.trim_end());
                s.push_str("\n</div>\n\n");
            }
        }
    }
    s
}

fn html(blocks: &[Block]) -> String {
    let mut s = String::from(
        "<!DOCTYPE html>\n<html><head><meta charset=\"utf-8\"><title>State-space SIR report</title>\n\
         <style>body{font-family:sans-serif;max-width:900px;margin:2em auto}table{border-collapse:collapse}\
         td,th{border:1px solid #ccc;padding:3px 8px;text-align:left}</style></head><body>\n",
    );
    for b in blocks {
        match b {
            Block::Heading(level, text) => {
                s.push_str(&format!("<h{level}>{}</h{level}>\n", escape(text)))
            }
            Block::Para(text) => s.push_str(&format!("<p>{}</p>\n", escape(text))),
            Block::Table(head, rows) => {
                s.push_str("<table><tr>");
                for h in head {
                    s.push_str(&format!("<th>{}</th>", escape(h)));
                }
                s.push_str("</tr>\n");
                for r in rows {
                    s.push_str("<tr>");
                    for c in r {
                        s.push_str(&format!("<td>{}</td>", escape(c)));
                    }
                    s.push_str("</tr>\n");
                }
                s.push_str("</table>\n");
            }
            Block::Svg(svg) => {
                s.push_str("<figure>\n");
                s.push_str(svg.trim_end());
                s.push_str("\n</figure>\n");
            }
        }
    }
    s.push_str("</body></html>\n");
    s
}
