//! CSV ingestion: observation tables, design assembly, and dataset export.
//!
//! Input files are comma-separated with a header row. A column manifest
//! names the site, coordinate, time, and response columns; remaining
//! columns (or an explicit list) become covariates. Times are plain
//! numbers or ISO `YYYY-MM-DD` dates; dates are converted to whole-day
//! offsets from 1970-01-01 so that several files share one time axis.

use crate::config::Config;
use crate::error::{CliError, Result};
use nalgebra::{DMatrix, DVector};
use std::collections::BTreeMap;
use std::path::Path;
use stlmm::harness::SimulatedData;
use stlmm::{Site, StDesign};

/// Which header names play which role.
#[derive(Debug, Clone)]
pub struct ColumnManifest {
    pub site: String,
    pub x: String,
    pub y: String,
    pub time: String,
    pub response: String,
    /// Covariate columns in model order; `None` takes every remaining
    /// column in header order.
    pub covariates: Option<Vec<String>>,
}

impl Default for ColumnManifest {
    fn default() -> Self {
        ColumnManifest {
            site: "site_id".into(),
            x: "x_km".into(),
            y: "y_km".into(),
            time: "time".into(),
            response: "response".into(),
            covariates: None,
        }
    }
}

impl ColumnManifest {
    pub fn from_config(cfg: &Config) -> Self {
        let d = ColumnManifest::default();
        ColumnManifest {
            site: cfg.string("site_col", &d.site),
            x: cfg.string("x_col", &d.x),
            y: cfg.string("y_col", &d.y),
            time: cfg.string("time_col", &d.time),
            response: cfg.string("response_col", &d.response),
            covariates: cfg.list("covariate_cols"),
        }
    }
}

/// One parsed data row. `line` is the 1-based line number in the file,
/// counting the header, for error messages.
#[derive(Debug, Clone)]
pub struct ObsRow {
    pub site_id: String,
    pub x_km: f64,
    pub y_km: f64,
    pub time: f64,
    pub response: Option<f64>,
    pub covariates: Vec<f64>,
    pub line: usize,
}

/// A parsed file: covariate names resolved against the header, plus rows.
#[derive(Debug, Clone)]
pub struct ObservationTable {
    pub covariate_names: Vec<String>,
    pub rows: Vec<ObsRow>,
}

/// Everything a fit needs, derived from one training table.
#[derive(Debug)]
pub struct LoadedData {
    pub design: StDesign,
    /// Intercept column followed by the covariates, rows in the design's
    /// observed-cell order.
    pub x: DMatrix<f64>,
    pub y: DVector<f64>,
    /// Site labels by site index.
    pub site_ids: Vec<String>,
}

/// A training design extended with prediction targets.
#[derive(Debug)]
pub struct PredictionGrid {
    pub design: StDesign,
    pub x_obs: DMatrix<f64>,
    pub y_obs: DVector<f64>,
    pub x_targets: DMatrix<f64>,
    pub target_cells: Vec<usize>,
    /// Site and time labels per target row, file order.
    pub target_site_ids: Vec<String>,
    pub target_times: Vec<f64>,
}

/// Days since 1970-01-01 for a proleptic Gregorian date.
fn days_from_civil(y: i64, m: u32, d: u32) -> i64 {
    let y = if m <= 2 { y - 1 } else { y };
    let era = y.div_euclid(400);
    let yoe = y - era * 400;
    let mp = if m > 2 { m - 3 } else { m + 9 } as i64;
    let doy = (153 * mp + 2) / 5 + d as i64 - 1;
    let doe = yoe * 365 + yoe / 4 - yoe / 100 + doy;
    era * 146097 + doe - 719468
}

fn parse_iso_date(raw: &str) -> Option<i64> {
    let mut parts = raw.split('-');
    let y: i64 = parts.next()?.parse().ok()?;
    let m: u32 = parts.next()?.parse().ok()?;
    let d: u32 = parts.next()?.parse().ok()?;
    if parts.next().is_some() || !(1..=12).contains(&m) {
        return None;
    }
    let leap = y % 4 == 0 && (y % 100 != 0 || y % 400 == 0);
    let days_in_month = match m {
        2 => {
            if leap {
                29
            } else {
                28
            }
        }
        4 | 6 | 9 | 11 => 30,
        _ => 31,
    };
    if !(1..=days_in_month).contains(&d) {
        return None;
    }
    Some(days_from_civil(y, m, d))
}

#[derive(PartialEq, Clone, Copy)]
enum TimeKind {
    Numeric,
    Date,
}

fn parse_time(raw: &str) -> Option<(f64, TimeKind)> {
    if let Ok(v) = raw.parse::<f64>() {
        return v.is_finite().then_some((v, TimeKind::Numeric));
    }
    parse_iso_date(raw).map(|d| (d as f64, TimeKind::Date))
}

fn parse_finite(raw: &str, what: &str, line: usize) -> Result<f64> {
    let v: f64 = raw.trim().parse().map_err(|_| {
        CliError::Data(format!("line {line}: cannot parse {what} value '{raw}'"))
    })?;
    if !v.is_finite() {
        return Err(CliError::Data(format!(
            "line {line}: {what} value '{raw}' is not finite"
        )));
    }
    Ok(v)
}

impl ObservationTable {
    /// Parses a CSV file against the manifest. With `require_response`
    /// false (prediction targets), the response column may be absent.
    pub fn read(path: &Path, manifest: &ColumnManifest, require_response: bool) -> Result<Self> {
        let mut reader = csv::ReaderBuilder::new()
            .trim(csv::Trim::All)
            .from_path(path)
            .map_err(|e| CliError::Data(format!("cannot read {}: {e}", path.display())))?;
        let header: Vec<String> = reader
            .headers()?
            .iter()
            .map(|h| h.to_string())
            .collect();

        let col = |name: &str| -> Result<usize> {
            header.iter().position(|h| h == name).ok_or_else(|| {
                CliError::Data(format!(
                    "{}: header has no '{name}' column (found: {})",
                    path.display(),
                    header.join(", ")
                ))
            })
        };
        let site_c = col(&manifest.site)?;
        let x_c = col(&manifest.x)?;
        let y_c = col(&manifest.y)?;
        let time_c = col(&manifest.time)?;
        let response_c = if require_response {
            Some(col(&manifest.response)?)
        } else {
            header.iter().position(|h| *h == manifest.response)
        };

        let covariate_names: Vec<String> = match &manifest.covariates {
            Some(names) => {
                for n in names {
                    col(n)?;
                }
                names.clone()
            }
            None => {
                let special = [
                    &manifest.site,
                    &manifest.x,
                    &manifest.y,
                    &manifest.time,
                    &manifest.response,
                ];
                header
                    .iter()
                    .filter(|h| !special.contains(h))
                    .cloned()
                    .collect()
            }
        };
        let cov_cols: Vec<usize> = covariate_names
            .iter()
            .map(|n| col(n))
            .collect::<Result<_>>()?;

        let mut rows = Vec::new();
        let mut time_kind: Option<TimeKind> = None;
        for (ri, record) in reader.records().enumerate() {
            let record = record?;
            let line = ri + 2;
            let field = |c: usize| -> &str { record.get(c).unwrap_or("") };

            let raw_time = field(time_c);
            let Some((time, kind)) = parse_time(raw_time) else {
                return Err(CliError::Data(format!(
                    "line {line}: cannot parse time '{raw_time}' as a number or ISO date"
                )));
            };
            match time_kind {
                None => time_kind = Some(kind),
                Some(k) if k != kind => {
                    return Err(CliError::Data(format!(
                        "line {line}: time '{raw_time}' mixes dates and plain numbers"
                    )))
                }
                _ => {}
            }

            let response = match response_c {
                Some(c) if require_response => {
                    Some(parse_finite(field(c), "response", line)?)
                }
                Some(c) => {
                    let raw = field(c);
                    if raw.is_empty() {
                        None
                    } else {
                        Some(parse_finite(raw, "response", line)?)
                    }
                }
                None => None,
            };

            let covariates = cov_cols
                .iter()
                .map(|&c| {
                    let raw = field(c);
                    if raw.is_empty() {
                        Err(CliError::Data(format!(
                            "line {line}: missing covariate value in column '{}'",
                            header[c]
                        )))
                    } else {
                        parse_finite(raw, "covariate", line)
                    }
                })
                .collect::<Result<Vec<f64>>>()?;

            rows.push(ObsRow {
                site_id: field(site_c).to_string(),
                x_km: parse_finite(field(x_c), "x coordinate", line)?,
                y_km: parse_finite(field(y_c), "y coordinate", line)?,
                time,
                response,
                covariates,
                line,
            });
        }
        if rows.is_empty() && require_response {
            return Err(CliError::Data(format!(
                "{}: no data rows",
                path.display()
            )));
        }
        Ok(ObservationTable {
            covariate_names,
            rows,
        })
    }
}

/// Site registry ordered by site label, with coordinate consistency
/// checks. Label order makes the site indexing independent of row order
/// and of which cells happen to be present.
struct SiteRegistry {
    order: Vec<String>,
    sites: Vec<Site>,
    index: BTreeMap<String, usize>,
}

impl SiteRegistry {
    fn build(tables: &[&ObservationTable]) -> Result<Self> {
        let mut map: BTreeMap<String, Site> = BTreeMap::new();
        for table in tables {
            for row in &table.rows {
                match map.get(&row.site_id) {
                    Some(site) if site.x != row.x_km || site.y != row.y_km => {
                        return Err(CliError::Data(format!(
                            "line {}: site '{}' has coordinates ({}, {}) here but ({}, {}) earlier",
                            row.line, row.site_id, row.x_km, row.y_km, site.x, site.y
                        )));
                    }
                    Some(_) => {}
                    None => {
                        map.insert(row.site_id.clone(), Site::new(row.x_km, row.y_km));
                    }
                }
            }
        }
        let order: Vec<String> = map.keys().cloned().collect();
        let sites: Vec<Site> = map.values().copied().collect();
        let index = order
            .iter()
            .enumerate()
            .map(|(i, id)| (id.clone(), i))
            .collect();
        Ok(SiteRegistry {
            order,
            sites,
            index,
        })
    }

    fn site_of(&self, row: &ObsRow) -> usize {
        self.index[&row.site_id]
    }

    fn check_extent(&self) -> Result<()> {
        let span = |f: fn(&Site) -> f64| {
            let lo = self.sites.iter().map(f).fold(f64::INFINITY, f64::min);
            let hi = self.sites.iter().map(f).fold(f64::NEG_INFINITY, f64::max);
            hi - lo
        };
        let extent = span(|s| s.x).max(span(|s| s.y));
        if extent >= 1e5 {
            return Err(CliError::Data(format!(
                "site coordinates span {extent:.0} km; expected planar km (less than 1e5)"
            )));
        }
        Ok(())
    }
}

fn sorted_times(rows: &[ObsRow]) -> Vec<f64> {
    let mut times: Vec<f64> = rows.iter().map(|r| r.time).collect();
    times.sort_by(|a, b| a.partial_cmp(b).unwrap());
    times.dedup();
    times
}

fn time_index(times: &[f64], t: f64) -> usize {
    times.partition_point(|&v| v < t)
}

/// Builds the design, response, and covariate matrix from a training table.
pub fn build_training_design(table: &ObservationTable) -> Result<LoadedData> {
    let registry = SiteRegistry::build(&[table])?;
    registry.check_extent()?;
    let times = sorted_times(&table.rows);
    let s = registry.sites.len();
    let t = times.len();

    let mut cell_row: Vec<Option<usize>> = vec![None; s * t];
    for (ri, row) in table.rows.iter().enumerate() {
        let cell = time_index(&times, row.time) * s + registry.site_of(row);
        if let Some(prev) = cell_row[cell] {
            return Err(CliError::Data(format!(
                "lines {} and {}: duplicate observation for site '{}' at time {}",
                table.rows[prev].line, row.line, row.site_id, row.time
            )));
        }
        cell_row[cell] = Some(ri);
    }

    let observed: Vec<bool> = cell_row.iter().map(|r| r.is_some()).collect();
    let design = StDesign::new(registry.sites.clone(), times, observed)?;

    let p = table.covariate_names.len() + 1;
    let n_o = design.n_observed();
    let mut x = DMatrix::zeros(n_o, p);
    let mut y = DVector::zeros(n_o);
    for (out, &cell) in design.observed_cells().iter().enumerate() {
        let ri = cell_row[cell].expect("observed cells have rows");
        let row = &table.rows[ri];
        x[(out, 0)] = 1.0;
        for (j, &v) in row.covariates.iter().enumerate() {
            x[(out, j + 1)] = v;
        }
        y[out] = row.response.ok_or_else(|| {
            CliError::Data(format!("line {}: missing response", row.line))
        })?;
    }

    Ok(LoadedData {
        design,
        x,
        y,
        site_ids: registry.order,
    })
}

/// Reads a training file and assembles everything a fit needs.
pub fn load_observations(
    path: &Path,
    manifest: &ColumnManifest,
) -> Result<(ObservationTable, LoadedData)> {
    let table = ObservationTable::read(path, manifest, true)?;
    let loaded = build_training_design(&table)?;
    Ok((table, loaded))
}

/// Merges a training table with target rows into one grid whose unobserved
/// cells include every target, keeping target rows in file order.
pub fn build_prediction_grid(
    train: &ObservationTable,
    targets: &ObservationTable,
) -> Result<PredictionGrid> {
    if targets.covariate_names != train.covariate_names {
        return Err(CliError::Data(format!(
            "target covariates ({}) do not match training covariates ({})",
            targets.covariate_names.join(", "),
            train.covariate_names.join(", ")
        )));
    }

    let registry = SiteRegistry::build(&[train, targets])?;
    registry.check_extent()?;

    let mut all_rows: Vec<ObsRow> = train.rows.clone();
    all_rows.extend(targets.rows.iter().cloned());
    let times = sorted_times(&all_rows);
    let s = registry.sites.len();
    let t = times.len();

    let mut cell_row: Vec<Option<usize>> = vec![None; s * t];
    for (ri, row) in train.rows.iter().enumerate() {
        let cell = time_index(&times, row.time) * s + registry.site_of(row);
        if let Some(prev) = cell_row[cell] {
            return Err(CliError::Data(format!(
                "lines {} and {}: duplicate observation for site '{}' at time {}",
                train.rows[prev].line, row.line, row.site_id, row.time
            )));
        }
        cell_row[cell] = Some(ri);
    }

    let observed: Vec<bool> = cell_row.iter().map(|r| r.is_some()).collect();
    let design = StDesign::new(registry.sites.clone(), times.clone(), observed)?;

    let p = train.covariate_names.len() + 1;
    let n_o = design.n_observed();
    let mut x_obs = DMatrix::zeros(n_o, p);
    let mut y_obs = DVector::zeros(n_o);
    for (out, &cell) in design.observed_cells().iter().enumerate() {
        let row = &train.rows[cell_row[cell].expect("observed cells have rows")];
        x_obs[(out, 0)] = 1.0;
        for (j, &v) in row.covariates.iter().enumerate() {
            x_obs[(out, j + 1)] = v;
        }
        y_obs[out] = row
            .response
            .ok_or_else(|| CliError::Data(format!("line {}: missing response", row.line)))?;
    }

    let m = targets.rows.len();
    let mut x_targets = DMatrix::zeros(m, p);
    let mut target_cells = Vec::with_capacity(m);
    for (ti, row) in targets.rows.iter().enumerate() {
        x_targets[(ti, 0)] = 1.0;
        for (j, &v) in row.covariates.iter().enumerate() {
            x_targets[(ti, j + 1)] = v;
        }
        target_cells.push(time_index(&times, row.time) * s + registry.site_of(row));
    }

    Ok(PredictionGrid {
        design,
        x_obs,
        y_obs,
        x_targets,
        target_cells,
        target_site_ids: targets.rows.iter().map(|r| r.site_id.clone()).collect(),
        target_times: targets.rows.iter().map(|r| r.time).collect(),
    })
}

/// Writes one simulated replicate's training rows as a loadable CSV, with
/// default column names and covariates `x1..xk`.
pub fn write_dataset(path: &Path, data: &SimulatedData) -> Result<()> {
    let mut writer = csv::Writer::from_path(path)
        .map_err(|e| CliError::Data(format!("cannot write {}: {e}", path.display())))?;
    let d = ColumnManifest::default();
    let n_cov = data.x_obs.ncols() - 1;
    let mut header = vec![
        d.site.clone(),
        d.x.clone(),
        d.y.clone(),
        d.time.clone(),
        d.response.clone(),
    ];
    for j in 1..=n_cov {
        header.push(format!("x{j}"));
    }
    writer.write_record(&header)?;

    let width = data.design.s().to_string().len();
    let design = &data.design;
    for (row, &cell) in design.observed_cells().iter().enumerate() {
        let site = design.site_of(cell);
        let mut record = vec![
            format!("s{site:0width$}"),
            format!("{}", design.sites()[site].x),
            format!("{}", design.sites()[site].y),
            format!("{}", design.times()[design.time_of(cell)]),
            format!("{}", data.y_obs[row]),
        ];
        for j in 1..=n_cov {
            record.push(format!("{}", data.x_obs[(row, j)]));
        }
        writer.write_record(&record)?;
    }
    writer.flush()?;
    Ok(())
}
