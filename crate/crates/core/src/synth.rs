//! Synthetic data generators used by the calibration experiments and tests.

use crate::covariance::{cov_matrix, CoordSet, CovFamily, ProcessParams};
use crate::dynamic::DynamicDataset;
use crate::error::{Error, Result};
use crate::linalg::{chol_in_place, DenseMatrix};
use crate::model::SpatialDataset;
use crate::rng::RandomStream;

/// Generating values for the univariate spatial regression.
#[derive(Clone, Debug)]
pub struct SpatialTruth {
    pub beta: Vec<f64>,
    pub family: CovFamily,
    pub params: ProcessParams,
}

impl SpatialTruth {
    /// Intercept 1, slope 5, exponential correlation with σ² = 2, τ² = 1,
    /// φ = 6 (effective range 0.5 on the unit square).
    pub fn reference() -> Self {
        Self {
            beta: vec![1.0, 5.0],
            family: CovFamily::Exponential,
            params: ProcessParams::new(2.0, 6.0, 1.0),
        }
    }
}

/// A simulated dataset with its latent surface.
#[derive(Clone, Debug)]
pub struct SimulatedSpatial {
    pub coords: CoordSet,
    /// `n × p`: an intercept and standard-normal covariates.
    pub x: DenseMatrix,
    pub y: Vec<f64>,
    pub w: Vec<f64>,
}

impl SimulatedSpatial {
    pub fn dataset(&self) -> Result<SpatialDataset> {
        SpatialDataset::new(self.coords.clone(), self.y.clone(), self.x.clone())
    }

    /// First `n_fit` locations as the fitting set, the rest as hold-outs.
    pub fn split(&self, n_fit: usize) -> Result<(SimulatedSpatial, SimulatedSpatial)> {
        let n = self.y.len();
        if n_fit == 0 || n_fit >= n {
            return Err(Error::InvalidParam(format!("cannot split {n} locations at {n_fit}")));
        }
        let part = |idx: Vec<usize>| -> Result<SimulatedSpatial> {
            let p = self.x.cols();
            Ok(SimulatedSpatial {
                coords: self.coords.subset(&idx)?,
                x: DenseMatrix::from_fn(idx.len(), p, |i, j| self.x[(idx[i], j)]),
                y: idx.iter().map(|&i| self.y[i]).collect(),
                w: idx.iter().map(|&i| self.w[i]).collect(),
            })
        };
        Ok((part((0..n_fit).collect())?, part((n_fit..n).collect())?))
    }
}

/// `n` locations uniform on the unit square, `y = Xβ + w + ε`.
pub fn simulate_spatial(n: usize, truth: &SpatialTruth, rng: &mut RandomStream) -> Result<SimulatedSpatial> {
    let p = truth.beta.len();
    if n == 0 || p == 0 {
        return Err(Error::InvalidParam("need at least one location and one coefficient".into()));
    }
    let coords = CoordSet::new((0..n).map(|_| [rng.uniform(), rng.uniform()]).collect())?;
    let x = DenseMatrix::from_fn(n, p, |_, j| if j == 0 { 1.0 } else { rng.standard_normal() });
    let c = cov_matrix(&coords, truth.family, &truth.params, false)?;
    let l = chol_in_place(c)?;
    let w = l.mul_vec(&rng.standard_normals(n))?;
    let xb = x.matvec(&truth.beta)?;
    let sd = truth.params.tau_sq.sqrt();
    let y = xb.iter().zip(&w).map(|(m, wi)| m + wi + sd * rng.standard_normal()).collect();
    Ok(SimulatedSpatial { coords, x, y, w })
}

/// Generating values for the dynamic model; `beta0` starts the random walk.
#[derive(Clone, Debug)]
pub struct DynamicTruth {
    pub family: CovFamily,
    pub beta0: Vec<f64>,
    pub sigma_eta: DenseMatrix,
    pub sigma_sq: Vec<f64>,
    pub tau_sq: Vec<f64>,
    pub phi: Vec<f64>,
}

#[derive(Clone, Debug)]
pub struct SimulatedDynamic {
    /// Fully observed.
    pub data: DynamicDataset,
    /// `p × N_t`, β₁…β_{N_t}.
    pub beta: DenseMatrix,
    /// `n × N_t`, u₁…u_{N_t}.
    pub u: DenseMatrix,
}

impl SimulatedDynamic {
    /// Copy of the data with the listed (station, 0-based step) cells
    /// set missing.
    pub fn with_missing(&self, cells: &[(usize, usize)]) -> Result<DynamicDataset> {
        let mut y = self.data.y().clone();
        for &(i, t) in cells {
            y[(i, t)] = f64::NAN;
        }
        DynamicDataset::new(
            self.data.coords().clone(),
            y,
            (0..self.data.n_t()).map(|t| self.data.x(t).clone()).collect(),
        )
    }
}

/// Draws from the dynamic model at `coords`, with an intercept plus
/// standard-normal covariates at every step.
pub fn simulate_dynamic(coords: &CoordSet, truth: &DynamicTruth, rng: &mut RandomStream) -> Result<SimulatedDynamic> {
    let n = coords.len();
    let p = truth.beta0.len();
    let n_t = truth.phi.len();
    if truth.sigma_sq.len() != n_t || truth.tau_sq.len() != n_t || n_t == 0 {
        return Err(Error::InvalidParam("per-step parameter lists must share a positive length".into()));
    }
    let l_eta = chol_in_place(truth.sigma_eta.clone())?;
    let mut beta = DenseMatrix::zeros(p, n_t);
    let mut u = DenseMatrix::zeros(n, n_t);
    let mut y = DenseMatrix::zeros(n, n_t);
    let mut xs = Vec::with_capacity(n_t);
    let mut prev_beta = truth.beta0.clone();
    let mut prev_u = vec![0.0; n];
    for t in 0..n_t {
        let eta = l_eta.mul_vec(&rng.standard_normals(p))?;
        let b: Vec<f64> = prev_beta.iter().zip(eta).map(|(a, e)| a + e).collect();
        let params = ProcessParams::new(truth.sigma_sq[t], truth.phi[t], 0.0);
        let lw = chol_in_place(cov_matrix(coords, truth.family, &params, false)?)?;
        let w = lw.mul_vec(&rng.standard_normals(n))?;
        let ut: Vec<f64> = prev_u.iter().zip(w).map(|(a, e)| a + e).collect();
        let x = DenseMatrix::from_fn(n, p, |_, j| if j == 0 { 1.0 } else { rng.standard_normal() });
        let xb = x.matvec(&b)?;
        let sd = truth.tau_sq[t].sqrt();
        for i in 0..n {
            y[(i, t)] = xb[i] + ut[i] + sd * rng.standard_normal();
        }
        beta.col_mut(t).copy_from_slice(&b);
        u.col_mut(t).copy_from_slice(&ut);
        xs.push(x);
        prev_beta = b;
        prev_u = ut;
    }
    Ok(SimulatedDynamic {
        data: DynamicDataset::new(coords.clone(), y, xs)?,
        beta,
        u,
    })
}
