//! Station tables.
//!
//! Two layouts are read:
//! - monthly station records `id,lon,lat,elev_m,m01,...,m12` with optional
//!   `year` and extra covariate columns; the response is the log of the
//!   annual total and the covariates are an intercept, elevation in
//!   kilometres and the extra columns;
//! - prepared observations `id,lon,lat,y` with optional covariate columns;
//!   an intercept is prepended.
//!
//! Missing months are empty fields or values at or below −999.

use std::path::Path;

use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::grid::RegularGrid;
use crate::model::ObservationModel;

/// Responses, locations and covariates ready for modelling.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub ids: Vec<String>,
    pub locations: Vec<(f64, f64)>,
    pub y: Vec<f64>,
    /// First column is the intercept.
    pub x: DMatrix<f64>,
    pub covariate_names: Vec<String>,
    /// Stations dropped for an incomplete year.
    pub excluded_missing: usize,
    /// Stations dropped for a zero annual total.
    pub excluded_zero: usize,
}

impl Dataset {
    pub fn len(&self) -> usize {
        self.y.len()
    }

    pub fn is_empty(&self) -> bool {
        self.y.is_empty()
    }

    pub fn to_observations(&self, grid: &RegularGrid, tau_beta: f64) -> Result<ObservationModel> {
        ObservationModel::at_locations(grid, &self.locations, self.y.clone(), self.x.clone(), tau_beta)
    }

    /// Rows `idx`, in that order.
    pub fn subset(&self, idx: &[usize]) -> Self {
        Self {
            ids: idx.iter().map(|&i| self.ids[i].clone()).collect(),
            locations: idx.iter().map(|&i| self.locations[i]).collect(),
            y: idx.iter().map(|&i| self.y[i]).collect(),
            x: self.x.select_rows(idx),
            covariate_names: self.covariate_names.clone(),
            excluded_missing: self.excluded_missing,
            excluded_zero: self.excluded_zero,
        }
    }
}

const MONTHS: [&str; 12] = ["m01", "m02", "m03", "m04", "m05", "m06", "m07", "m08", "m09", "m10", "m11", "m12"];

fn column(headers: &csv::StringRecord, name: &str) -> Option<usize> {
    headers.iter().position(|h| h.trim().eq_ignore_ascii_case(name))
}

fn parse_num(field: &str, line: usize, name: &str) -> Result<f64> {
    let v: f64 = field
        .trim()
        .parse()
        .map_err(|_| Error::Parse { line, message: format!("`{name}` is not a number: `{field}`") })?;
    if !v.is_finite() {
        return Err(Error::Parse { line, message: format!("`{name}` is not finite") });
    }
    Ok(v)
}

fn open(path: &Path) -> Result<csv::Reader<std::fs::File>> {
    Ok(csv::ReaderBuilder::new().trim(csv::Trim::All).from_path(path)?)
}

/// Reads either table layout, chosen by the presence of `m01`.
pub fn read_dataset(path: impl AsRef<Path>, year: Option<i64>) -> Result<Dataset> {
    let headers = open(path.as_ref())?.headers()?.clone();
    if column(&headers, "m01").is_some() {
        read_stations(path, year)
    } else {
        read_observations(path)
    }
}

/// Monthly station records aggregated to log annual totals.
pub fn read_stations(path: impl AsRef<Path>, year: Option<i64>) -> Result<Dataset> {
    read_stations_from(open(path.as_ref())?, year)
}

fn read_stations_from<R: std::io::Read>(mut rdr: csv::Reader<R>, year: Option<i64>) -> Result<Dataset> {
    let headers = rdr.headers()?.clone();
    let need = |name: &str| {
        column(&headers, name).ok_or_else(|| Error::Parse { line: 1, message: format!("missing column `{name}`") })
    };
    let (c_id, c_lon, c_lat, c_elev) = (need("id")?, need("lon")?, need("lat")?, need("elev_m")?);
    let c_months: Vec<usize> = MONTHS.iter().map(|m| need(m)).collect::<Result<_>>()?;
    let c_year = column(&headers, "year");
    if year.is_some() && c_year.is_none() {
        return Err(Error::Config("a year was selected but the table has no `year` column".into()));
    }
    let mut known = vec![c_id, c_lon, c_lat, c_elev];
    known.extend(&c_months);
    known.extend(c_year);
    let extra: Vec<usize> = (0..headers.len()).filter(|c| !known.contains(c)).collect();
    let mut names = vec!["intercept".to_string(), "elevation_km".to_string()];
    names.extend(extra.iter().map(|&c| headers[c].trim().to_string()));

    let mut ds = Dataset {
        ids: Vec::new(),
        locations: Vec::new(),
        y: Vec::new(),
        x: DMatrix::zeros(0, names.len()),
        covariate_names: names,
        excluded_missing: 0,
        excluded_zero: 0,
    };
    let mut rows: Vec<f64> = Vec::new();
    for rec in rdr.records() {
        let rec = rec?;
        let line = rec.position().map_or(0, |p| p.line() as usize);
        let field = |c: usize| rec.get(c).unwrap_or("");
        if let (Some(want), Some(c)) = (year, c_year) {
            let y = field(c)
                .parse::<i64>()
                .map_err(|_| Error::Parse { line, message: format!("bad year `{}`", field(c)) })?;
            if y != want {
                continue;
            }
        }
        let lon = parse_num(field(c_lon), line, "lon")?;
        let lat = parse_num(field(c_lat), line, "lat")?;
        let elev = parse_num(field(c_elev), line, "elev_m")?;
        let mut total = 0.0;
        let mut complete = true;
        for (&c, name) in c_months.iter().zip(MONTHS) {
            let f = field(c);
            if f.is_empty() {
                complete = false;
                continue;
            }
            let v = parse_num(f, line, name)?;
            if v <= -999.0 {
                complete = false;
            } else if v < 0.0 {
                return Err(Error::Parse { line, message: format!("negative precipitation in `{name}`") });
            } else {
                total += v;
            }
        }
        if !complete {
            ds.excluded_missing += 1;
            continue;
        }
        if total <= 0.0 {
            ds.excluded_zero += 1;
            continue;
        }
        let extras: Vec<f64> = extra.iter().map(|&c| parse_num(field(c), line, &headers[c])).collect::<Result<_>>()?;
        ds.ids.push(field(c_id).to_string());
        ds.locations.push((lon, lat));
        ds.y.push(total.ln());
        rows.push(1.0);
        rows.push(elev / 1000.0);
        rows.extend(extras);
    }
    finish(ds, rows)
}

fn finish(mut ds: Dataset, rows: Vec<f64>) -> Result<Dataset> {
    if ds.y.is_empty() {
        return Err(Error::EmptyDataset("no complete station records".into()));
    }
    ds.x = DMatrix::from_row_slice(ds.y.len(), ds.covariate_names.len(), &rows);
    Ok(ds)
}

/// Prepared observations `id,lon,lat,y[,covariates]`.
pub fn read_observations(path: impl AsRef<Path>) -> Result<Dataset> {
    read_observations_from(open(path.as_ref())?)
}

fn read_observations_from<R: std::io::Read>(mut rdr: csv::Reader<R>) -> Result<Dataset> {
    let headers = rdr.headers()?.clone();
    let need = |name: &str| {
        column(&headers, name).ok_or_else(|| Error::Parse { line: 1, message: format!("missing column `{name}`") })
    };
    let (c_id, c_lon, c_lat, c_y) = (need("id")?, need("lon")?, need("lat")?, need("y")?);
    let extra: Vec<usize> = (0..headers.len()).filter(|c| ![c_id, c_lon, c_lat, c_y].contains(c)).collect();
    let mut names = vec!["intercept".to_string()];
    names.extend(extra.iter().map(|&c| headers[c].trim().to_string()));
    let mut ds = Dataset {
        ids: Vec::new(),
        locations: Vec::new(),
        y: Vec::new(),
        x: DMatrix::zeros(0, names.len()),
        covariate_names: names,
        excluded_missing: 0,
        excluded_zero: 0,
    };
    let mut rows = Vec::new();
    for rec in rdr.records() {
        let rec = rec?;
        let line = rec.position().map_or(0, |p| p.line() as usize);
        let field = |c: usize| rec.get(c).unwrap_or("");
        ds.ids.push(field(c_id).to_string());
        ds.locations.push((parse_num(field(c_lon), line, "lon")?, parse_num(field(c_lat), line, "lat")?));
        ds.y.push(parse_num(field(c_y), line, "y")?);
        rows.push(1.0);
        for &c in &extra {
            rows.push(parse_num(field(c), line, &headers[c])?);
        }
    }
    if ds.y.is_empty() {
        return Err(Error::EmptyDataset("no observations".into()));
    }
    finish(ds, rows)
}
