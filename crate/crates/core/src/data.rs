//! Case-count ingestion and the observed infectious proportion.
//!
//! Input is a CSV of cumulative counts per date. The active count is
//! `Z(t) = confirmed − recovered − deaths`, and with identification rate `p`
//! and population `N` the observation is `Y(t) = Z(t) / (N p)`.

use std::collections::BTreeMap;
use std::fs;
use std::io::Read;
use std::path::{Path, PathBuf};
use std::time::Duration;

use chrono::NaiveDate;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};

/// Population of Japan used to normalize counts.
pub const JAPAN_POPULATION: u64 = 126_500_000;

/// Identification-rate presets.
pub const IDENTIFICATION_RATES: [f64; 3] = [0.05, 0.1, 0.2];

/// Bundled snapshot of the Japanese cumulative series (late February to 22 April 2020).
pub const JAPAN_2020_CSV: &str = include_str!("../data/japan_2020.csv");

/// Environment variable overriding the download cache directory.
pub const CACHE_DIR_ENV: &str = "SSSIR_CACHE_DIR";

/// Column names to read from the input CSV.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct ColumnMap {
    pub date: String,
    pub confirmed: String,
    pub recovered: String,
    pub deaths: String,
}

impl Default for ColumnMap {
    fn default() -> Self {
        Self {
            date: "date".into(),
            confirmed: "confirmed".into(),
            recovered: "recovered".into(),
            deaths: "deaths".into(),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct DailyCounts {
    pub date: NaiveDate,
    pub confirmed: u64,
    pub recovered: u64,
    pub deaths: u64,
}

impl DailyCounts {
    /// `Z = confirmed − recovered − deaths`.
    pub fn active(&self) -> i64 {
        self.confirmed as i64 - self.recovered as i64 - self.deaths as i64
    }
}

/// Validated cumulative counts, strictly increasing in date.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct RawSeries {
    rows: Vec<DailyCounts>,
}

impl RawSeries {
    pub fn new(mut rows: Vec<DailyCounts>) -> Result<Self> {
        if rows.is_empty() {
            return Err(Error::Empty);
        }
        rows.sort_by_key(|r| r.date);
        for w in rows.windows(2) {
            let (prev, cur) = (&w[0], &w[1]);
            if prev.date == cur.date {
                return Err(invalid(format!("duplicate date {}", cur.date)));
            }
            for (series, a, b) in [
                ("confirmed", prev.confirmed, cur.confirmed),
                ("recovered", prev.recovered, cur.recovered),
                ("deaths", prev.deaths, cur.deaths),
            ] {
                if b < a {
                    return Err(Error::NonMonotone {
                        series,
                        date: cur.date,
                    });
                }
            }
        }
        if let Some(bad) = rows.iter().find(|r| r.recovered + r.deaths > r.confirmed) {
            return Err(Error::InconsistentCounts { date: bad.date });
        }
        Ok(Self { rows })
    }

    pub fn rows(&self) -> &[DailyCounts] {
        &self.rows
    }

    pub fn get(&self, date: NaiveDate) -> Option<&DailyCounts> {
        self.rows
            .binary_search_by_key(&date, |r| r.date)
            .ok()
            .map(|k| &self.rows[k])
    }

    pub fn first_date(&self) -> NaiveDate {
        self.rows[0].date
    }

    pub fn last_date(&self) -> NaiveDate {
        self.rows[self.rows.len() - 1].date
    }
}

/// Parses cumulative counts from CSV text.
pub fn parse_csv<R: Read>(reader: R, columns: &ColumnMap) -> Result<RawSeries> {
    let mut rdr = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_reader(reader);
    let headers = rdr.headers()?.clone();
    if headers.is_empty() || headers.iter().all(|h| h.is_empty()) {
        return Err(Error::Empty);
    }
    let find = |name: &str| {
        headers
            .iter()
            .position(|h| h.eq_ignore_ascii_case(name))
            .ok_or_else(|| Error::MissingColumn(name.to_string()))
    };
    let idx = [
        find(&columns.date)?,
        find(&columns.confirmed)?,
        find(&columns.recovered)?,
        find(&columns.deaths)?,
    ];
    let mut rows = Vec::new();
    for (k, record) in rdr.records().enumerate() {
        // header is line 1
        let row = k + 2;
        let record = record.map_err(|e| Error::MalformedRow {
            row,
            message: e.to_string(),
        })?;
        let field = |j: usize| record.get(idx[j]).unwrap_or("");
        let date =
            NaiveDate::parse_from_str(field(0), "%Y-%m-%d").map_err(|e| Error::MalformedRow {
                row,
                message: format!("date `{}`: {e}", field(0)),
            })?;
        let count = |j: usize| -> Result<u64> {
            let s = field(j);
            // Some exports write integral counts as floats ("12.0").
            s.parse::<u64>()
                .ok()
                .or_else(|| {
                    s.parse::<f64>()
                        .ok()
                        .filter(|v| *v >= 0.0 && v.fract() == 0.0)
                        .map(|v| v as u64)
                })
                .ok_or_else(|| Error::MalformedRow {
                    row,
                    message: format!("count `{s}` is not a non-negative integer"),
                })
        };
        rows.push(DailyCounts {
            date,
            confirmed: count(1)?,
            recovered: count(2)?,
            deaths: count(3)?,
        });
    }
    RawSeries::new(rows)
}

pub fn load_csv(path: impl AsRef<Path>) -> Result<RawSeries> {
    load_csv_with(path, &ColumnMap::default())
}

pub fn load_csv_with(path: impl AsRef<Path>, columns: &ColumnMap) -> Result<RawSeries> {
    let file = fs::File::open(path.as_ref())?;
    parse_csv(file, columns)
}

/// The bundled Japanese snapshot.
pub fn bundled_japan() -> RawSeries {
    parse_csv(JAPAN_2020_CSV.as_bytes(), &ColumnMap::default()).expect("bundled snapshot is valid")
}

/// Inclusive date range.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct DateWindow {
    pub from: NaiveDate,
    pub to: NaiveDate,
}

impl DateWindow {
    pub fn new(from: NaiveDate, to: NaiveDate) -> Result<Self> {
        if to < from {
            return Err(invalid(format!("window end {to} precedes start {from}")));
        }
        Ok(Self { from, to })
    }

    /// 2020-03-01 to 2020-04-22, 53 days.
    pub fn japan_2020() -> Self {
        Self {
            from: NaiveDate::from_ymd_opt(2020, 3, 1).unwrap(),
            to: NaiveDate::from_ymd_opt(2020, 4, 22).unwrap(),
        }
    }

    pub fn days(&self) -> usize {
        (self.to - self.from).num_days() as usize + 1
    }

    pub fn iter(&self) -> impl Iterator<Item = NaiveDate> + '_ {
        self.from.iter_days().take(self.days())
    }
}

/// Observed infectious proportions `Y(1..=T)` on consecutive days.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ObservationSeries {
    pub dates: Vec<NaiveDate>,
    /// Active counts `Z(t)`.
    pub active: Vec<u64>,
    pub y: Vec<f64>,
    pub population_n: u64,
    /// Identification rate.
    pub p: f64,
}

impl ObservationSeries {
    /// Builds a series directly from proportions (synthetic data, tests).
    pub fn from_proportions(
        start: NaiveDate,
        y: Vec<f64>,
        population_n: u64,
        p: f64,
    ) -> Result<Self> {
        if y.is_empty() {
            return Err(Error::Empty);
        }
        if let Some(bad) = y.iter().find(|v| !(**v > 0.0 && **v < 1.0)) {
            return Err(invalid(format!("observation {bad} outside (0, 1)")));
        }
        let scale = population_n as f64 * p;
        Ok(Self {
            dates: start.iter_days().take(y.len()).collect(),
            active: y.iter().map(|v| (v * scale).round() as u64).collect(),
            y,
            population_n,
            p,
        })
    }

    /// Number of observed days `T`.
    pub fn len(&self) -> usize {
        self.y.len()
    }

    pub fn is_empty(&self) -> bool {
        self.y.is_empty()
    }

    pub fn first_date(&self) -> NaiveDate {
        self.dates[0]
    }

    pub fn last_date(&self) -> NaiveDate {
        self.dates[self.dates.len() - 1]
    }

    /// Calendar date of model day `t` (`t = 1` is the first observation).
    pub fn date_of_day(&self, t: f64) -> NaiveDate {
        let offset = t.round() as i64 - 1;
        self.first_date() + chrono::Duration::days(offset)
    }
}

/// `Y(t) = Z(t) / (N p)` over the window.
///
/// Every date in the window must be present in `raw`, and every `Z(t)` must
/// be strictly positive.
pub fn derive_observations(
    raw: &RawSeries,
    p: f64,
    window: DateWindow,
    population_n: u64,
) -> Result<ObservationSeries> {
    if !(p > 0.0 && p <= 1.0) {
        return Err(invalid(format!("identification rate {p} outside (0, 1]")));
    }
    if population_n == 0 {
        return Err(invalid("population must be positive"));
    }
    let scale = population_n as f64 * p;
    let mut dates = Vec::with_capacity(window.days());
    let mut active = Vec::with_capacity(window.days());
    let mut y = Vec::with_capacity(window.days());
    for date in window.iter() {
        let row = raw.get(date).ok_or(Error::WindowGap {
            from: window.from,
            to: window.to,
            missing: date,
        })?;
        let z = row.active();
        if z <= 0 {
            return Err(Error::NonPositiveActive { date, z });
        }
        let v = z as f64 / scale;
        if v >= 1.0 {
            return Err(invalid(format!("{date}: Y = {v} is not below 1")));
        }
        dates.push(date);
        active.push(z as u64);
        y.push(v);
    }
    Ok(ObservationSeries {
        dates,
        active,
        y,
        population_n,
        p,
    })
}

/// Where [`fetch_dataset`] got its bytes from.
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum FetchSource {
    Downloaded,
    /// Network failure or offline mode; the reason is included.
    Bundled(String),
}

#[derive(Clone, Debug)]
pub struct Fetched {
    pub path: PathBuf,
    pub source: FetchSource,
}

#[derive(Clone, Debug, Default)]
pub struct FetchOptions {
    pub offline: bool,
    /// Defaults to `$SSSIR_CACHE_DIR`, else a directory under the system temp dir.
    pub cache_dir: Option<PathBuf>,
    pub columns: ColumnMap,
    pub timeout: Option<Duration>,
}

pub fn cache_dir(explicit: Option<&Path>) -> PathBuf {
    explicit
        .map(Path::to_path_buf)
        .or_else(|| std::env::var_os(CACHE_DIR_ENV).map(PathBuf::from))
        .unwrap_or_else(|| std::env::temp_dir().join("sssir-cache"))
}

/// Downloads a case-count CSV into the cache directory and returns its path.
///
/// Network failures fall back to the bundled snapshot with a warning; a
/// payload that is not a parseable CSV with the expected header is an error.
pub fn fetch_dataset(url: &str, options: &FetchOptions) -> Result<Fetched> {
    let dir = cache_dir(options.cache_dir.as_deref());
    fs::create_dir_all(&dir)?;

    let fallback = |reason: String| -> Result<Fetched> {
        log::warn!("using bundled snapshot: {reason}");
        let path = dir.join("japan_2020_bundled.csv");
        fs::write(&path, JAPAN_2020_CSV)?;
        Ok(Fetched {
            path,
            source: FetchSource::Bundled(reason),
        })
    };

    if options.offline {
        return fallback("offline mode".into());
    }

    let timeout = options.timeout.unwrap_or(Duration::from_secs(30));
    let agent: ureq::Agent = ureq::Agent::config_builder()
        .timeout_global(Some(timeout))
        .build()
        .into();
    let body = match agent.get(url).call() {
        Ok(mut resp) => match resp.body_mut().read_to_vec() {
            Ok(bytes) => bytes,
            Err(e) => return fallback(format!("reading {url}: {e}")),
        },
        Err(e) => return fallback(format!("fetching {url}: {e}")),
    };

    validate_payload(&body, &options.columns)?;
    let path = dir.join(format!("download_{:016x}.csv", fnv1a(url.as_bytes())));
    let tmp = path.with_extension("csv.part");
    fs::write(&tmp, &body)?;
    fs::rename(&tmp, &path)?;
    Ok(Fetched {
        path,
        source: FetchSource::Downloaded,
    })
}

fn validate_payload(body: &[u8], columns: &ColumnMap) -> Result<()> {
    if body.iter().all(u8::is_ascii_whitespace) {
        return Err(Error::MalformedPayload("empty body".into()));
    }
    let text = std::str::from_utf8(body)
        .map_err(|_| Error::MalformedPayload("body is not UTF-8".into()))?;
    let head = text
        .trim_start()
        .get(..64)
        .unwrap_or(text.trim_start())
        .to_ascii_lowercase();
    if head.starts_with("<!doctype") || head.starts_with("<html") || head.starts_with('<') {
        return Err(Error::MalformedPayload(
            "received HTML, expected CSV".into(),
        ));
    }
    parse_csv(body, columns)
        .map(|_| ())
        .map_err(|e| Error::MalformedPayload(e.to_string()))
}

fn fnv1a(bytes: &[u8]) -> u64 {
    bytes.iter().fold(0xcbf2_9ce4_8422_2325u64, |h, b| {
        (h ^ *b as u64).wrapping_mul(0x0000_0100_0000_01b3)
    })
}

/// Convenience for a run over the bundled snapshot with the default window.
pub fn japan_observations(p: f64) -> Result<ObservationSeries> {
    derive_observations(
        &bundled_japan(),
        p,
        DateWindow::japan_2020(),
        JAPAN_POPULATION,
    )
}

/// Maps column names given as `key=value` pairs over the defaults.
pub fn column_map_from_pairs(pairs: &BTreeMap<String, String>) -> Result<ColumnMap> {
    let mut map = ColumnMap::default();
    for (k, v) in pairs {
        match k.as_str() {
            "date" => map.date = v.clone(),
            "confirmed" => map.confirmed = v.clone(),
            "recovered" => map.recovered = v.clone(),
            "deaths" => map.deaths = v.clone(),
            other => return Err(invalid(format!("unknown column key `{other}`"))),
        }
    }
    Ok(map)
}
