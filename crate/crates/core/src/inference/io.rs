use std::io::{Read, Write};

use crate::error::Result;
use crate::inference::PosteriorDraws;

const PARAM_COLUMNS: [&str; 9] = [
    "i0", "pi", "pt", "kappa", "lambda", "rho", "beta", "gamma", "r0",
];

fn param_values(p: &crate::ModelParams) -> [f64; 9] {
    [
        p.i0(),
        p.pi(),
        p.pt(),
        p.kappa(),
        p.lambda(),
        p.rho(),
        p.beta(),
        p.gamma(),
        p.r0(),
    ]
}

/// One row per draw: chain, iteration, parameters, derived rates, `I(1..T)`
/// and the final `S(T)`, `R(T)` (enough to restart a forecast).
pub fn write_draws_csv<W: Write>(out: W, draws: &PosteriorDraws) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    let days = draws.days();
    let mut header: Vec<String> = vec!["chain".into(), "iter".into()];
    header.extend(PARAM_COLUMNS.iter().map(|s| s.to_string()));
    header.push("log_posterior".into());
    header.extend((1..=days).map(|t| format!("I_{t}")));
    header.push("s_T".into());
    header.push("r_T".into());
    w.write_record(&header)?;
    for k in 0..draws.len() {
        let mut row = vec![draws.chain[k].to_string(), draws.iteration[k].to_string()];
        row.extend(param_values(&draws.params[k]).iter().map(|v| v.to_string()));
        row.push(draws.log_posterior[k].to_string());
        let path = &draws.paths[k].0;
        row.extend(path.iter().map(|th| th.i.to_string()));
        let last = path.last().copied().unwrap_or_default();
        row.push(last.s.to_string());
        row.push(last.r.to_string());
        w.write_record(&row)?;
    }
    w.flush()?;
    Ok(())
}

/// Parameter traces without the latent path.
pub fn write_trace_csv<W: Write>(out: W, draws: &PosteriorDraws) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    let mut header = vec!["chain", "iter"];
    header.extend(PARAM_COLUMNS);
    header.push("log_posterior");
    w.write_record(&header)?;
    for k in 0..draws.len() {
        let mut row = vec![draws.chain[k].to_string(), draws.iteration[k].to_string()];
        row.extend(param_values(&draws.params[k]).iter().map(|v| v.to_string()));
        row.push(draws.log_posterior[k].to_string());
        w.write_record(&row)?;
    }
    w.flush()?;
    Ok(())
}

/// Full-fidelity serialization, used to hand draws to a later forecast.
pub fn write_draws_json<W: Write>(out: W, draws: &PosteriorDraws) -> Result<()> {
    serde_json::to_writer(out, draws)?;
    Ok(())
}

pub fn read_draws_json<R: Read>(input: R) -> Result<PosteriorDraws> {
    Ok(serde_json::from_reader(input)?)
}
