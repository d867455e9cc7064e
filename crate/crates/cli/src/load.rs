//! CSV inputs.

use std::path::Path;

use geomc_core::covariance::CoordSet;
use geomc_core::dynamic::DynamicDataset;
use geomc_core::model::SpatialDataset;
use geomc_core::DenseMatrix;

use crate::config::{DataSection, DynamicSection};
use crate::error::{CliError, CliResult};

pub const INTERCEPT: &str = "(Intercept)";

struct Table {
    path: String,
    headers: Vec<String>,
    rows: Vec<csv::StringRecord>,
}

impl Table {
    fn read(path: &Path) -> CliResult<Self> {
        let shown = path.display().to_string();
        let mut rdr = csv::ReaderBuilder::new()
            .trim(csv::Trim::All)
            .from_path(path)
            .map_err(|e| CliError::Data(format!("cannot open {shown}: {e}")))?;
        let headers = rdr
            .headers()
            .map_err(|e| CliError::Data(format!("{shown}: {e}")))?
            .iter()
            .map(str::to_string)
            .collect();
        let rows = rdr
            .records()
            .collect::<Result<Vec<_>, _>>()
            .map_err(|e| CliError::Data(format!("ParseError in {shown}: {e}")))?;
        if rows.is_empty() {
            return Err(CliError::Data(format!("{shown} has no data rows")));
        }
        Ok(Self { path: shown, headers, rows })
    }

    fn has(&self, name: &str) -> bool {
        self.headers.iter().any(|h| h == name)
    }

    fn index(&self, name: &str) -> CliResult<usize> {
        self.headers
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| CliError::Data(format!("{} has no column '{name}'", self.path)))
    }

    /// Column values; `na` cells become NaN when `allow_missing`.
    fn column(&self, name: &str, na: &str, allow_missing: bool) -> CliResult<Vec<f64>> {
        let j = self.index(name)?;
        self.rows
            .iter()
            .enumerate()
            .map(|(i, rec)| {
                let cell = rec.get(j).unwrap_or("");
                // row numbers count the header as line 1
                let line = i + 2;
                if cell == na {
                    return if allow_missing {
                        Ok(f64::NAN)
                    } else {
                        Err(CliError::Data(format!(
                            "MissingNotAllowed: {} row {line}, column '{name}' is {na}",
                            self.path
                        )))
                    };
                }
                cell.parse::<f64>()
                    .ok()
                    .filter(|v| v.is_finite())
                    .ok_or_else(|| CliError::Data(format!("ParseError: {} row {line}, column '{name}': '{cell}'", self.path)))
            })
            .collect()
    }

    fn coords(&self, names: &[String; 2], na: &str) -> CliResult<CoordSet> {
        let xs = self.column(&names[0], na, false)?;
        let ys = self.column(&names[1], na, false)?;
        CoordSet::new(xs.into_iter().zip(ys).map(|(a, b)| [a, b]).collect()).map_err(|e| CliError::Data(e.to_string()))
    }

    fn design(&self, intercept: bool, names: &[String], na: &str) -> CliResult<DenseMatrix> {
        let mut cols = Vec::new();
        if intercept {
            cols.push(vec![1.0; self.rows.len()]);
        }
        for c in names {
            cols.push(self.column(c, na, false)?);
        }
        if cols.is_empty() {
            return Err(CliError::Config("the model needs an intercept or at least one covariate".into()));
        }
        let n = self.rows.len();
        Ok(DenseMatrix::from_fn(n, cols.len(), |i, j| cols[j][i]))
    }
}

pub fn beta_names(intercept: bool, covariates: &[String]) -> Vec<String> {
    intercept
        .then(|| INTERCEPT.to_string())
        .into_iter()
        .chain(covariates.iter().cloned())
        .collect()
}

/// Loads the fitting data; every used cell must be present.
pub fn load_spatial(path: &Path, sec: &DataSection) -> CliResult<SpatialDataset> {
    let t = Table::read(path)?;
    let coords = t.coords(&sec.coords, &sec.na_token)?;
    let y = t.column(&sec.response, &sec.na_token, false)?;
    let x = t.design(sec.intercept, &sec.covariates, &sec.na_token)?;
    SpatialDataset::new(coords, y, x).map_err(|e| CliError::Data(e.to_string()))
}

/// New sites for prediction: coordinates, design and, when the file has the
/// response column, the observed outcome.
pub fn load_sites(path: &Path, sec: &DataSection) -> CliResult<(CoordSet, DenseMatrix, Option<Vec<f64>>)> {
    let t = Table::read(path)?;
    let coords = t.coords(&sec.coords, &sec.na_token)?;
    let x0 = t.design(sec.intercept, &sec.covariates, &sec.na_token)?;
    let y = if t.has(&sec.response) {
        Some(t.column(&sec.response, &sec.na_token, false)?)
    } else {
        None
    };
    Ok((coords, x0, y))
}

/// Knot coordinates from a CSV using the data coordinate names.
pub fn load_coords(path: &Path, names: &[String; 2]) -> CliResult<CoordSet> {
    Table::read(path)?.coords(names, "NA")
}

/// Stations × steps; step t of variable v is column `v.t`, t = 1, 2, ….
pub fn load_dynamic(path: &Path, sec: &DynamicSection) -> CliResult<DynamicDataset> {
    let t = Table::read(path)?;
    let coords = t.coords(&sec.coords, &sec.na_token)?;
    let n_t = (1..).take_while(|k| t.has(&format!("{}.{k}", sec.response))).count();
    if n_t == 0 {
        return Err(CliError::Data(format!("{} has no column '{}.1'", t.path, sec.response)));
    }
    let n = coords.len();
    let mut y = DenseMatrix::zeros(n, n_t);
    let mut xs = Vec::with_capacity(n_t);
    for step in 1..=n_t {
        let col = t.column(&format!("{}.{step}", sec.response), &sec.na_token, true)?;
        y.col_mut(step - 1).copy_from_slice(&col);
        let names: Vec<String> = sec.covariates.iter().map(|c| format!("{c}.{step}")).collect();
        xs.push(t.design(sec.intercept, &names, &sec.na_token)?);
    }
    DynamicDataset::new(coords, y, xs).map_err(|e| CliError::Data(e.to_string()))
}
