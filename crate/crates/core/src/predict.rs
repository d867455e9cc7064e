//! Posterior predictive sampling at new locations.
//!
//! For each retained (β⁽ᵏ⁾, θ⁽ᵏ⁾) the outcome at the new sites is drawn from
//! the Gaussian conditional of `y₀` given `y`. By default each site is drawn
//! from its own marginal conditional; the joint mode factors the t×t
//! conditional covariance instead. For low-rank fits there is also the
//! α-based route, `y₀ ~ N(X₀β + Z₀α, D₀)`.

use crate::covariance::{cov_from_distances, fill_cov_from_distances, pairwise_distances, CoordSet, ProcessParams};
use crate::error::{Error, Result};
use crate::linalg::{chol, chol_in_place, dot, CholFactor, DenseMatrix};
use crate::lowrank::{modified_adjustment, PPGeometry, PPStructure, Parametrization};
use crate::mcmc::Reporter;
use crate::model::{SpatialDataset, ThetaSpec};
use crate::recover::{for_each_sample, Retention};
use crate::rng::RandomStream;

/// Variances this far below zero (relative to the prior variance) are
/// treated as round-off and clamped.
const VAR_FLOOR_TOL: f64 = 1e-10;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Default)]
pub enum PredictMode {
    #[default]
    Conditional,
    ViaAlpha,
}

#[derive(Clone, Debug)]
pub struct PredictionRequest {
    pub new_coords: CoordSet,
    /// `t × p`.
    pub x0: DenseMatrix,
    pub retention: Retention,
    pub mode: PredictMode,
    /// Draw the t sites jointly rather than one at a time.
    pub joint: bool,
    /// Predict the latent surface (no nugget) instead of new observations.
    pub latent: bool,
}

impl PredictionRequest {
    pub fn new(new_coords: CoordSet, x0: DenseMatrix) -> Self {
        Self {
            new_coords,
            x0,
            retention: Retention::all(),
            mode: PredictMode::Conditional,
            joint: false,
            latent: false,
        }
    }

    fn validate(&self, p: usize) -> Result<()> {
        if self.x0.rows() != self.new_coords.len() || self.x0.cols() != p {
            return Err(Error::InvalidModel(format!(
                "prediction design is {}x{} for {} sites and {p} coefficients",
                self.x0.rows(),
                self.x0.cols(),
                self.new_coords.len()
            )));
        }
        if self.x0.as_slice().iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidModel("prediction design must be finite".into()));
        }
        Ok(())
    }
}

/// The model a set of posterior draws came from.
#[derive(Clone, Copy, Debug)]
pub enum FitKind<'a> {
    FullRank,
    LowRank {
        knots: &'a CoordSet,
        modified: bool,
        parametrization: Parametrization,
    },
}

/// Row-aligned posterior draws feeding prediction.
#[derive(Clone, Copy, Debug)]
pub struct PosteriorDraws<'a> {
    /// `K × dim(θ)`, constrained scale.
    pub theta: &'a DenseMatrix,
    /// `K × p`.
    pub beta: &'a DenseMatrix,
    /// `K × r` knot-level effects `w* = Kα` (needed for the α route).
    pub knot_effects: Option<&'a DenseMatrix>,
}

/// Mean and covariance of `y₀ | y, β, θ`.
#[derive(Clone, Debug)]
pub struct PredictiveMoments {
    pub mean: Vec<f64>,
    /// Per-site conditional variances.
    pub var: Vec<f64>,
    /// Full t×t covariance, present when requested jointly.
    pub cov: Option<DenseMatrix>,
}

impl PredictiveMoments {
    fn draw(&self, rng: &mut RandomStream) -> Result<Vec<f64>> {
        match &self.cov {
            Some(c) => {
                let mut c = c.clone();
                c.symmetrize();
                let l = chol_in_place(c).map_err(|e| {
                    Error::InvalidModel(format!(
                        "joint predictive covariance does not factor ({e}); predict one site at a time or use the alpha route"
                    ))
                })?;
                let z = rng.standard_normals(self.mean.len());
                Ok(crate::linalg::mvn_transport(&self.mean, &l, &z)?)
            }
            None => Ok(self
                .mean
                .iter()
                .zip(&self.var)
                .map(|(m, v)| m + v.sqrt() * rng.standard_normal())
                .collect()),
        }
    }
}

fn floor_variance(v: f64, scale: f64, site: usize) -> Result<f64> {
    if v >= 0.0 {
        Ok(v)
    } else if v >= -VAR_FLOOR_TOL * scale {
        Ok(0.0)
    } else {
        Err(Error::InvalidModel(format!("negative predictive variance {v:e} at site {site}")))
    }
}

fn resid(data: &SpatialDataset, beta: &[f64]) -> Result<Vec<f64>> {
    let xb = data.x().matvec(beta)?;
    Ok(data.y().iter().zip(xb).map(|(y, m)| y - m).collect())
}

/// Shared, θ-independent pieces for prediction from a full-rank fit.
pub struct FullRankPredictor<'a> {
    data: &'a SpatialDataset,
    spec: &'a ThetaSpec,
    d11: DenseMatrix,
    d12: DenseMatrix,
    d22: DenseMatrix,
}

impl<'a> FullRankPredictor<'a> {
    pub fn new(data: &'a SpatialDataset, spec: &'a ThetaSpec, new_coords: &CoordSet) -> Self {
        Self {
            data,
            spec,
            d11: pairwise_distances(data.coords(), data.coords()),
            d12: pairwise_distances(data.coords(), new_coords),
            d22: pairwise_distances(new_coords, new_coords),
        }
    }

    /// `μ = X₀β + Vᵀu`, `Σ_p = C₂₂ − VᵀV` with `[u:V] = L⁻¹[y−Xβ : C₁₂]`,
    /// `L = chol(C₁₁)`.
    pub fn moments(&self, params: &ProcessParams, beta: &[f64], x0: &DenseMatrix, joint: bool, latent: bool) -> Result<PredictiveMoments> {
        let family = self.spec.family();
        let c11 = cov_from_distances(&self.d11, family, params, true)?;
        let l = chol_in_place(c11)?;
        let c12 = cov_from_distances(&self.d12, family, params, false)?;
        let u = l.solve_lower_vec(&resid(self.data, beta)?)?;
        let v = l.solve_lower(&c12)?;
        let mut mean = x0.matvec(beta)?;
        mean.iter_mut().zip(v.t_matvec(&u)?).for_each(|(m, a)| *m += a);
        let nugget = if latent { 0.0 } else { params.tau_sq };
        let t = x0.rows();
        let prior_var = params.sigma_sq + nugget;
        let var = (0..t)
            .map(|j| {
                let vj = v.col(j);
                floor_variance(prior_var - dot(vj, vj), prior_var, j)
            })
            .collect::<Result<Vec<_>>>()?;
        let cov = if joint {
            let mut c22 = cov_from_distances(&self.d22, family, params, false)?;
            c22.add_to_diag(nugget);
            Some(c22.sub(&v.gram())?)
        } else {
            None
        };
        Ok(PredictiveMoments { mean, var, cov })
    }
}

/// Shared pieces for prediction from a low-rank fit.
pub struct LowRankPredictor<'a> {
    data: &'a SpatialDataset,
    spec: &'a ThetaSpec,
    geom: PPGeometry,
    modified: bool,
    parametrization: Parametrization,
    /// new sites × knots
    d0k: DenseMatrix,
}

impl<'a> LowRankPredictor<'a> {
    pub fn new(
        data: &'a SpatialDataset,
        spec: &'a ThetaSpec,
        knots: &CoordSet,
        modified: bool,
        parametrization: Parametrization,
        new_coords: &CoordSet,
    ) -> Self {
        Self {
            data,
            spec,
            geom: PPGeometry::new_unchecked(data.coords(), knots),
            modified,
            parametrization,
            d0k: pairwise_distances(new_coords, knots),
        }
    }

    /// 𝒞₀ᵀ (t×r), `A = L*⁻¹𝒞₀` (r×t) and the modified-PP variances at the
    /// new sites.
    fn new_site_terms(&self, pp: &PPStructure) -> Result<(DenseMatrix, DenseMatrix, Vec<f64>)> {
        let mut cross0 = DenseMatrix::zeros(self.d0k.rows(), self.d0k.cols());
        fill_cov_from_distances(&mut cross0, &self.d0k, self.spec.family(), &pp.params);
        let a = pp.chol_c_star.solve_lower(&cross0.transpose())?;
        let adj0 = if self.modified {
            modified_adjustment(&pp.chol_c_star, &cross0, pp.params.sigma_sq)?
        } else {
            vec![0.0; cross0.rows()]
        };
        Ok((cross0, a, adj0))
    }

    pub fn structure(&self, params: &ProcessParams) -> Result<PPStructure> {
        PPStructure::build(&self.geom, self.spec.family(), params, self.modified, self.parametrization)
    }

    /// Conditional moments with `C₁₂ = BᵀA`, `B = L*⁻¹𝒞`, so that
    /// `C₁₂ᵀΣ⁻¹C₁₂ = Aᵀ(PᵀP − (HP)ᵀ(HP))A` with `P = D^{-½}Bᵀ`.
    pub fn moments(&self, params: &ProcessParams, beta: &[f64], x0: &DenseMatrix, joint: bool, latent: bool) -> Result<PredictiveMoments> {
        let pp = self.structure(params)?;
        let swm = pp.swm()?;
        let (_, a, adj0) = self.new_site_terms(&pp)?;
        let b = pp.chol_c_star.solve_lower(&pp.cross.transpose())?;
        let mut p = b.transpose();
        p.scale_rows(&swm.dinv_sqrt);
        let hp = swm.ht.t_matmul(&p)?;
        let mut m = p.gram().sub(&hp.gram())?;
        m.symmetrize();

        let sinv_r = swm.apply_vec(&resid(self.data, beta)?)?;
        let b_sinv_r = b.matvec(&sinv_r)?;
        let mut mean = x0.matvec(beta)?;
        mean.iter_mut().zip(a.t_matvec(&b_sinv_r)?).for_each(|(mu, v)| *mu += v);

        let nugget = if latent { 0.0 } else { params.tau_sq };
        let ma = m.matmul(&a)?;
        let t = x0.rows();
        let var = (0..t)
            .map(|j| {
                let aj = a.col(j);
                let c22 = dot(aj, aj) + adj0[j] + nugget;
                floor_variance(c22 - dot(aj, ma.col(j)), params.sigma_sq + nugget, j)
            })
            .collect::<Result<Vec<_>>>()?;
        let cov = if joint {
            let mut c22 = a.gram();
            c22.add_diag(&adj0);
            c22.add_to_diag(nugget);
            Some(c22.sub(&a.t_matmul(&ma)?)?)
        } else {
            None
        };
        Ok(PredictiveMoments { mean, var, cov })
    }

    /// `N(X₀β + 𝒞₀ᵀC*⁻¹w*, D₀)`; `𝒞₀ᵀC*⁻¹w* = Z₀α` under either parametrization.
    pub fn via_alpha_moments(&self, params: &ProcessParams, beta: &[f64], knot_effects: &[f64], x0: &DenseMatrix, latent: bool) -> Result<PredictiveMoments> {
        let pp = self.structure(params)?;
        let (cross0, _, adj0) = self.new_site_terms(&pp)?;
        let coef = pp.chol_c_star.solve_vec(knot_effects)?;
        let mut mean = x0.matvec(beta)?;
        mean.iter_mut().zip(cross0.matvec(&coef)?).for_each(|(m, v)| *m += v);
        let nugget = if latent { 0.0 } else { params.tau_sq };
        let var = adj0.iter().map(|a| a + nugget).collect();
        Ok(PredictiveMoments { mean, var, cov: None })
    }
}

/// Predictive draws, `t × M′` (one column per retained sample).
#[allow(clippy::too_many_arguments)]
pub fn predict(
    draws: PosteriorDraws<'_>,
    data: &SpatialDataset,
    spec: &ThetaSpec,
    kind: FitKind<'_>,
    request: &PredictionRequest,
    rng: &mut RandomStream,
    report_interval: usize,
    reporter: &mut dyn Reporter,
) -> Result<DenseMatrix> {
    request.validate(data.p())?;
    if draws.theta.rows() != draws.beta.rows() {
        return Err(Error::InvalidModel("theta and beta draws are not aligned".into()));
    }
    let idx = request.retention.indices(draws.theta.rows())?;
    let t = request.new_coords.len();
    let columns = match (kind, request.mode) {
        (FitKind::FullRank, PredictMode::ViaAlpha) => {
            return Err(Error::InvalidModel(
                "the alpha route needs a low-rank fit; use conditional prediction".into(),
            ))
        }
        (FitKind::FullRank, PredictMode::Conditional) => {
            let pred = FullRankPredictor::new(data, spec, &request.new_coords);
            for_each_sample(idx.len(), rng, report_interval, reporter, |k, r| {
                let row = idx[k];
                let params = spec.to_params(&draws.theta.row(row));
                pred.moments(&params, &draws.beta.row(row), &request.x0, request.joint, request.latent)?
                    .draw(r)
            })?
        }
        (
            FitKind::LowRank {
                knots,
                modified,
                parametrization,
            },
            mode,
        ) => {
            let pred = LowRankPredictor::new(data, spec, knots, modified, parametrization, &request.new_coords);
            let effects = match mode {
                PredictMode::ViaAlpha => Some(draws.knot_effects.ok_or_else(|| {
                    Error::InvalidModel("the alpha route needs recovered knot effects".into())
                })?),
                PredictMode::Conditional => None,
            };
            if let Some(e) = effects {
                if e.rows() != draws.theta.rows() || e.cols() != knots.len() {
                    return Err(Error::InvalidModel("knot effects are not aligned with theta".into()));
                }
            }
            for_each_sample(idx.len(), rng, report_interval, reporter, |k, r| {
                let row = idx[k];
                let params = spec.to_params(&draws.theta.row(row));
                let beta = draws.beta.row(row);
                let m = match effects {
                    Some(e) => pred.via_alpha_moments(&params, &beta, &e.row(row), &request.x0, request.latent)?,
                    None => pred.moments(&params, &beta, &request.x0, request.joint, request.latent)?,
                };
                m.draw(r)
            })?
        }
    };
    Ok(DenseMatrix::from_fn(t, idx.len(), |i, k| columns[k][i]))
}

/// Conditional (kriging) prediction from either kind of fit.
pub fn predict_conditional(
    draws: PosteriorDraws<'_>,
    data: &SpatialDataset,
    spec: &ThetaSpec,
    kind: FitKind<'_>,
    request: &PredictionRequest,
    rng: &mut RandomStream,
) -> Result<DenseMatrix> {
    let mut req = request.clone();
    req.mode = PredictMode::Conditional;
    predict(draws, data, spec, kind, &req, rng, usize::MAX, &mut crate::mcmc::NullReporter)
}

/// α-route prediction from a low-rank fit with recovered knot effects.
#[allow(clippy::too_many_arguments)]
pub fn predict_via_alpha(
    draws: PosteriorDraws<'_>,
    data: &SpatialDataset,
    spec: &ThetaSpec,
    knots: &CoordSet,
    modified: bool,
    parametrization: Parametrization,
    request: &PredictionRequest,
    rng: &mut RandomStream,
) -> Result<DenseMatrix> {
    let mut req = request.clone();
    req.mode = PredictMode::ViaAlpha;
    let kind = FitKind::LowRank {
        knots,
        modified,
        parametrization,
    };
    predict(draws, data, spec, kind, &req, rng, usize::MAX, &mut crate::mcmc::NullReporter)
}

/// Dense partitioned-Gaussian conditional, for checking the fast paths:
/// `μ = X₀β + C₁₂ᵀC₁₁⁻¹r`, `Σ = C₂₂ − C₁₂ᵀC₁₁⁻¹C₁₂`.
pub fn dense_conditional(c11: &DenseMatrix, c12: &DenseMatrix, c22: &DenseMatrix, resid: &[f64], x0_beta: &[f64]) -> Result<(Vec<f64>, DenseMatrix)> {
    let l: CholFactor = chol(c11)?;
    let s_r = l.solve_vec(resid)?;
    let s_c12 = l.solve(c12)?;
    let mut mean = c12.t_matvec(&s_r)?;
    mean.iter_mut().zip(x0_beta).for_each(|(m, b)| *m += b);
    Ok((mean, c22.sub(&c12.t_matmul(&s_c12)?)?))
}
