//! Marginalized full-rank sampler.
//!
//! β and the spatial effects are integrated out, leaving a Metropolis chain
//! over θ alone. With a normal β prior the marginal is
//! `y ~ N(Xμ_β, XΣ_βXᵀ + K(θ) + τ²I)`; with a flat prior the β integral
//! contributes a `|XᵀΣ⁻¹X|^{−½}` factor and a profiled quadratic form. Both
//! are evaluated from a single Cholesky factor and triangular solves, and
//! every θ-independent constant is dropped.

use crate::covariance::{fill_cov_from_distances, pairwise_distances, ProcessParams};
use crate::error::{Error, Result};
use crate::linalg::{chol, chol_in_place, dot, CholFactor, DenseMatrix, LinalgError};
use crate::mcmc::{run_theta_chain, OnEvalError, Reporter, ThetaChain};
use crate::model::{BetaPrior, SamplerOptions, SpatialDataset, ThetaSpec};
use crate::rng::RandomStream;

/// Per-chain buffers and θ-independent pieces of the marginal likelihood.
pub struct MarginalLikelihoodWorkspace<'a> {
    data: &'a SpatialDataset,
    spec: ThetaSpec,
    dist: DenseMatrix,
    /// XΣ_βXᵀ for a normal prior.
    x_sigma_xt: Option<DenseMatrix>,
    /// y − Xμ_β (normal prior) or y (flat).
    resid: Vec<f64>,
    /// `[y : X]` for the flat-prior solve.
    yx: Option<DenseMatrix>,
    buf: Option<DenseMatrix>,
    jitter: f64,
}

impl<'a> MarginalLikelihoodWorkspace<'a> {
    pub fn new(data: &'a SpatialDataset, spec: &ThetaSpec, beta_prior: &BetaPrior, jitter: f64) -> Result<Self> {
        beta_prior.check_dim(data.p())?;
        let dist = pairwise_distances(data.coords(), data.coords());
        let (x_sigma_xt, resid, yx) = match beta_prior {
            BetaPrior::Normal(nb) => {
                let xs = data.x().matmul(nb.sigma())?;
                let mut m = xs.matmul(&data.x().transpose())?;
                m.symmetrize();
                let xmu = data.x().matvec(nb.mu())?;
                let r = data.y().iter().zip(&xmu).map(|(y, m)| y - m).collect();
                (Some(m), r, None)
            }
            BetaPrior::Flat => {
                let y = DenseMatrix::column_vector(data.y().to_vec());
                (None, data.y().to_vec(), Some(DenseMatrix::hstack(&[&y, data.x()])?))
            }
        };
        Ok(Self {
            data,
            spec: spec.clone(),
            dist,
            x_sigma_xt,
            resid,
            yx,
            buf: None,
            jitter,
        })
    }

    pub fn is_flat(&self) -> bool {
        self.x_sigma_xt.is_none()
    }

    pub fn distances(&self) -> &DenseMatrix {
        &self.dist
    }

    /// Σ_{y|θ} (normal prior) or Σ_{y|β,θ} (flat prior) in the reusable buffer.
    fn build_sigma(&mut self, params: &ProcessParams) -> DenseMatrix {
        let n = self.data.n();
        let mut s = self.buf.take().unwrap_or_else(|| DenseMatrix::zeros(n, n));
        fill_cov_from_distances(&mut s, &self.dist, self.spec.family(), params);
        s.add_to_diag(params.tau_sq);
        if let Some(m) = &self.x_sigma_xt {
            for (a, b) in s.as_mut_slice().iter_mut().zip(m.as_slice()) {
                *a += b;
            }
        }
        s
    }

    fn factor(&mut self, params: &ProcessParams) -> Result<CholFactor> {
        let s = self.build_sigma(params);
        let retry = (self.jitter > 0.0).then(|| s.clone());
        match chol_in_place(s) {
            Ok(l) => Ok(l),
            Err(LinalgError::NotPositiveDefinite { .. }) if retry.is_some() => {
                let mut s = retry.unwrap();
                s.add_to_diag(self.jitter);
                Ok(chol_in_place(s)?)
            }
            Err(e) => Err(e.into()),
        }
    }

    fn recycle(&mut self, l: CholFactor) {
        self.buf = Some(l.into_inner());
    }

    /// `−½ log|Σ| − ½ Q(θ)` (normal β prior) or the flat-prior counterpart.
    pub fn log_marginal(&mut self, params: &ProcessParams) -> Result<f64> {
        params.validate(self.spec.family())?;
        let l = self.factor(params)?;
        let half_log_det = 0.5 * l.log_det();
        let out = if let Some(yx) = &self.yx {
            let vu = l.solve_lower(yx)?;
            let v = vu.col(0);
            let p = self.data.p();
            let u = DenseMatrix::from_col_major(vu.rows(), p, vu.as_slice()[vu.rows()..].to_vec())?;
            let w = chol(&u.gram()).map_err(|_| Error::RankDeficientX)?;
            let b = u.t_matvec(v)?;
            let bt = w.solve_lower_vec(&b)?;
            -0.5 * w.log_det() - half_log_det - 0.5 * (dot(v, v) - dot(&bt, &bt))
        } else {
            let u = l.solve_lower_vec(&self.resid)?;
            -half_log_det - 0.5 * dot(&u, &u)
        };
        self.recycle(l);
        Ok(out)
    }
}

/// Log prior on the constrained scale, summed over the sampled components.
fn log_prior_constrained(spec: &ThetaSpec, params: &ProcessParams) -> f64 {
    spec.entries()
        .iter()
        .zip(spec.from_params(params))
        .map(|(e, v)| e.prior.log_density(v))
        .sum()
}

/// `log p(θ) − ½ log|Σ_{y|θ}| − ½ (y−Xμ_β)ᵀ Σ_{y|θ}⁻¹ (y−Xμ_β)` with
/// `Σ_{y|θ} = XΣ_βXᵀ + K(θ) + τ²I`.
pub fn log_target_informative(
    theta: &ProcessParams,
    data: &SpatialDataset,
    beta_prior: &BetaPrior,
    spec: &ThetaSpec,
) -> Result<f64> {
    if beta_prior.is_flat() {
        return Err(Error::InvalidModel("informative target needs a normal beta prior".into()));
    }
    let mut ws = MarginalLikelihoodWorkspace::new(data, spec, beta_prior, 0.0)?;
    Ok(log_prior_constrained(spec, theta) + ws.log_marginal(theta)?)
}

/// `log p(θ) − ½ log|XᵀΣ⁻¹X| − ½ log|Σ| − ½ (yᵀΣ⁻¹y − b̃ᵀb̃)` with
/// `Σ = K(θ) + τ²I` for a flat β prior.
pub fn log_target_flat(theta: &ProcessParams, data: &SpatialDataset, spec: &ThetaSpec) -> Result<f64> {
    let mut ws = MarginalLikelihoodWorkspace::new(data, spec, &BetaPrior::Flat, 0.0)?;
    Ok(log_prior_constrained(spec, theta) + ws.log_marginal(theta)?)
}

/// Runs the marginalized Metropolis sampler for θ, seeded from `options.seed`.
pub fn fit_full_rank(
    data: &SpatialDataset,
    spec: &ThetaSpec,
    beta_prior: &BetaPrior,
    options: &SamplerOptions,
    reporter: &mut dyn Reporter,
) -> Result<ThetaChain> {
    let mut rng = RandomStream::new(options.seed);
    fit_full_rank_with_rng(data, spec, beta_prior, options, &mut rng, reporter)
}

pub fn fit_full_rank_with_rng(
    data: &SpatialDataset,
    spec: &ThetaSpec,
    beta_prior: &BetaPrior,
    options: &SamplerOptions,
    rng: &mut RandomStream,
    reporter: &mut dyn Reporter,
) -> Result<ThetaChain> {
    options.validate()?;
    let mut ws = MarginalLikelihoodWorkspace::new(data, spec, beta_prior, options.nugget_jitter)?;
    reporter.message(&format!("Model fit with {} observations.", data.n()));
    reporter.message(&format!("Number of covariates {} (including intercept if specified).", data.p()));
    reporter.message(&format!("Using the {} spatial correlation model.", spec.family().name()));
    reporter.message(&format!("Number of MCMC samples {}.", options.n_samples));
    if options.adaptive {
        reporter.message("Using adaptive MCMC Metropolis-within-Gibbs.");
    }
    run_theta_chain(spec, options, rng, reporter, OnEvalError::Propagate, |x| {
        ws.log_marginal(&spec.to_params(x))
    })
}
