//! Knot-based predictive-process models and their Gibbs sampler.
//!
//! With r knots, the n×n spatial covariance is replaced by `Z K Zᵀ` of rank r
//! plus a diagonal `D(θ)`. The modified variant puts the variance the
//! low-rank term misses, `σ² − cᵢᵀC*⁻¹cᵢ`, back on the diagonal.
//!
//! `Σ⁻¹ = (D + ZKZᵀ)⁻¹` is applied through Sherman–Woodbury–Morrison:
//! with `W = D^{-½}Z`, `L = chol(K⁻¹ + WᵀW)` and `H = L⁻¹Wᵀ`,
//! `Σ⁻¹ = D^{-½}(I − HᵀH)D^{-½}` and `|Σ| = |D| / |I − HHᵀ|`. Nothing of size
//! n×n is ever formed; each θ costs O(nr²).

use crate::covariance::{fill_cov_from_distances, pairwise_distances, CoordSet, CovFamily, ProcessParams};
use crate::error::{Error, Result};
use crate::linalg::{chol, dot, CholFactor, DenseMatrix, LinalgError};
use crate::mcmc::{AcceptanceTracker, MetropolisKernel, OnEvalError, Reporter, ThetaChain};
use crate::model::{build_knots, BetaPrior, KnotSpec, SamplerOptions, SpatialDataset, ThetaSpec};
use crate::recover::{henderson_factor, BetaConditional, RecoveredSamples, Retention};
use crate::rng::RandomStream;

/// Relative tolerance below which a negative modified-PP variance is
/// attributed to round-off and clamped to zero.
const ADJUST_TOL: f64 = 1e-8;

/// How the rank-r term `Z K Zᵀ = 𝒞ᵀ C*⁻¹ 𝒞` is split.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Default)]
pub enum Parametrization {
    /// `K = C*⁻¹`, `Z = 𝒞ᵀ`, so `K⁻¹ = C*` needs no inversion.
    #[default]
    KnotPrecision,
    /// `K = C*`, `Z = 𝒞ᵀC*⁻¹`.
    KnotCovariance,
}

/// Distances that do not change with θ.
#[derive(Clone, Debug)]
pub struct PPGeometry {
    knots: CoordSet,
    d_kk: DenseMatrix,
    d_nk: DenseMatrix,
}

impl PPGeometry {
    pub fn new(coords: &CoordSet, knots: &CoordSet) -> Result<Self> {
        if knots.len() >= coords.len() {
            return Err(Error::TooManyKnots {
                knots: knots.len(),
                n: coords.len(),
            });
        }
        Ok(Self::new_unchecked(coords, knots))
    }

    /// Skips the `r < n` check; used for prediction sites and tests.
    pub fn new_unchecked(coords: &CoordSet, knots: &CoordSet) -> Self {
        Self {
            knots: knots.clone(),
            d_kk: pairwise_distances(knots, knots),
            d_nk: pairwise_distances(coords, knots),
        }
    }

    pub fn n(&self) -> usize {
        self.d_nk.rows()
    }

    pub fn r(&self) -> usize {
        self.d_kk.rows()
    }

    pub fn knots(&self) -> &CoordSet {
        &self.knots
    }
}

/// Everything that depends on θ but not on β.
#[derive(Clone, Debug)]
pub struct PPStructure {
    pub params: ProcessParams,
    pub parametrization: Parametrization,
    pub modified: bool,
    /// C*(θ), r×r.
    pub c_star: DenseMatrix,
    pub chol_c_star: CholFactor,
    /// 𝒞(θ)ᵀ, n×r.
    pub cross: DenseMatrix,
    /// Z(θ), n×r.
    pub z: DenseMatrix,
    /// K(θ)⁻¹, r×r.
    pub k_inv: DenseMatrix,
    /// Diagonal of D(θ).
    pub d_diag: Vec<f64>,
    /// `σ² − cᵢᵀC*⁻¹cᵢ` (all zero when not modified).
    pub adjust: Vec<f64>,
}

/// `σ² − ‖L⁻¹cᵢ‖²` for each row cᵢ of `cross`, where `L = chol(C*)`.
pub(crate) fn modified_adjustment(chol_c_star: &CholFactor, cross: &DenseMatrix, sigma_sq: f64) -> Result<Vec<f64>> {
    let b = chol_c_star.solve_lower(&cross.transpose())?;
    (0..cross.rows())
        .map(|i| {
            let col = b.col(i);
            let a = sigma_sq - dot(col, col);
            if a >= 0.0 {
                Ok(a)
            } else if a >= -ADJUST_TOL * sigma_sq {
                Ok(0.0)
            } else {
                Err(Error::NegativeAdjustment { index: i, value: a })
            }
        })
        .collect()
}

impl PPStructure {
    pub fn build(
        geom: &PPGeometry,
        family: CovFamily,
        params: &ProcessParams,
        modified: bool,
        parametrization: Parametrization,
    ) -> Result<Self> {
        params.validate(family)?;
        let (n, r) = (geom.n(), geom.r());
        let mut c_star = DenseMatrix::zeros(r, r);
        fill_cov_from_distances(&mut c_star, &geom.d_kk, family, params);
        let chol_c_star = chol(&c_star)?;
        let mut cross = DenseMatrix::zeros(n, r);
        fill_cov_from_distances(&mut cross, &geom.d_nk, family, params);
        let adjust = if modified {
            modified_adjustment(&chol_c_star, &cross, params.sigma_sq)?
        } else {
            vec![0.0; n]
        };
        let d_diag: Vec<f64> = adjust.iter().map(|a| a + params.tau_sq).collect();
        if let Some(i) = d_diag.iter().position(|&d| !(d > 0.0)) {
            return Err(Error::InvalidParam(format!("D(θ) diagonal entry {i} is not positive")));
        }
        let (z, k_inv) = match parametrization {
            Parametrization::KnotPrecision => (cross.clone(), c_star.clone()),
            Parametrization::KnotCovariance => {
                let zt = chol_c_star.solve(&cross.transpose())?;
                let mut k_inv = chol_c_star.solve(&DenseMatrix::identity(r))?;
                k_inv.symmetrize();
                (zt.transpose(), k_inv)
            }
        };
        Ok(Self {
            params: *params,
            parametrization,
            modified,
            c_star,
            chol_c_star,
            cross,
            z,
            k_inv,
            d_diag,
            adjust,
        })
    }

    pub fn n(&self) -> usize {
        self.d_diag.len()
    }

    pub fn r(&self) -> usize {
        self.c_star.rows()
    }

    /// The SWM factors for this θ.
    pub fn swm(&self) -> Result<SwmFactor> {
        let dinv_sqrt: Vec<f64> = self.d_diag.iter().map(|d| 1.0 / d.sqrt()).collect();
        let mut w = self.z.clone();
        w.scale_rows(&dinv_sqrt);
        let mut m = w.gram();
        for (a, b) in m.as_mut_slice().iter_mut().zip(self.k_inv.as_slice()) {
            *a += b;
        }
        let l = chol(&m)?;
        let h = l.solve_lower(&w.transpose())?;
        let ht = h.transpose();
        let r = self.r();
        let mut i_hht = ht.gram();
        i_hht.scale(-1.0);
        i_hht.add_to_diag(1.0);
        i_hht.symmetrize();
        // log|I − HHᵀ| from T = chol(I − HHᵀ); when round-off defeats that
        // factorization use the identity I − HHᵀ = L⁻¹K⁻¹L⁻ᵀ instead
        let log_det_i_hht = match chol(&i_hht) {
            Ok(t) => t.log_det(),
            Err(_) => {
                let log_det_k_inv = match self.parametrization {
                    Parametrization::KnotPrecision => self.chol_c_star.log_det(),
                    Parametrization::KnotCovariance => -self.chol_c_star.log_det(),
                };
                log_det_k_inv - l.log_det()
            }
        };
        debug_assert_eq!(i_hht.rows(), r);
        let log_det_d: f64 = self.d_diag.iter().map(|d| d.ln()).sum();
        Ok(SwmFactor {
            dinv_sqrt,
            ht,
            l,
            log_det_sigma: log_det_d - log_det_i_hht,
        })
    }

    /// Knot-level effects `w* = K α` implied by α.
    pub fn knot_effects(&self, alpha: &[f64]) -> Result<Vec<f64>> {
        match self.parametrization {
            Parametrization::KnotPrecision => Ok(self.c_star.matvec(alpha)?),
            Parametrization::KnotCovariance => Ok(alpha.to_vec()),
        }
    }
}

/// `Σ⁻¹ = D^{-½}(I − HᵀH)D^{-½}` and `log|Σ|` for one θ.
#[derive(Clone, Debug)]
pub struct SwmFactor {
    pub dinv_sqrt: Vec<f64>,
    /// Hᵀ, n×r.
    pub ht: DenseMatrix,
    /// chol(K⁻¹ + WᵀW), r×r.
    pub l: CholFactor,
    pub log_det_sigma: f64,
}

impl SwmFactor {
    /// `Σ⁻¹ rhs`.
    pub fn apply(&self, rhs: &DenseMatrix) -> Result<DenseMatrix> {
        if rhs.rows() != self.dinv_sqrt.len() {
            return Err(LinalgError::DimensionMismatch(format!(
                "SWM apply of order {} to {} rows",
                self.dinv_sqrt.len(),
                rhs.rows()
            ))
            .into());
        }
        let mut v = rhs.clone();
        v.scale_rows(&self.dinv_sqrt);
        let hv = self.ht.t_matmul(&v)?;
        let back = self.ht.matmul(&hv)?;
        let mut out = v.sub(&back)?;
        out.scale_rows(&self.dinv_sqrt);
        Ok(out)
    }

    pub fn apply_vec(&self, rhs: &[f64]) -> Result<Vec<f64>> {
        Ok(self.apply(&DenseMatrix::column_vector(rhs.to_vec()))?.into_vec())
    }

    /// `rᵀΣ⁻¹r = vᵀv − wᵀw` with `v = D^{-½}r`, `w = Hv`.
    pub fn quad_form(&self, resid: &[f64]) -> Result<f64> {
        let v: Vec<f64> = resid.iter().zip(&self.dinv_sqrt).map(|(r, s)| r * s).collect();
        let w = self.ht.t_matvec(&v)?;
        Ok(dot(&v, &v) - dot(&w, &w))
    }

    /// `−½ log|Σ| − ½ rᵀΣ⁻¹r`.
    pub fn log_lik(&self, resid: &[f64]) -> Result<f64> {
        Ok(-0.5 * self.log_det_sigma - 0.5 * self.quad_form(resid)?)
    }

    /// Full conditional of β: `b = Σ_β⁻¹μ_β + Vᵀv − ṼᵀHv`,
    /// `B⁻¹ = Σ_β⁻¹ + VᵀV − ṼᵀṼ` with `[v:V] = D^{-½}[y:X]`, `Ṽ = HV`.
    pub fn beta_conditional(&self, data: &SpatialDataset, prior: &BetaPrior) -> Result<BetaConditional> {
        let mut vx = data.x().clone();
        vx.scale_rows(&self.dinv_sqrt);
        let v: Vec<f64> = data.y().iter().zip(&self.dinv_sqrt).map(|(y, s)| y * s).collect();
        let vt = self.ht.t_matmul(&vx)?;
        let hv = self.ht.t_matvec(&v)?;
        let mut prec = vx.gram().sub(&vt.gram())?;
        prec.symmetrize();
        let b: Vec<f64> = vx
            .t_matvec(&v)?
            .iter()
            .zip(vt.t_matvec(&hv)?)
            .map(|(a, c)| a - c)
            .collect();
        BetaConditional::from_parts(prec, b, prior)
    }
}

/// Builds the structure for one θ from raw coordinates.
pub fn build_pp_structure(
    coords: &CoordSet,
    knots: &CoordSet,
    family: CovFamily,
    params: &ProcessParams,
    modified: bool,
    parametrization: Parametrization,
) -> Result<PPStructure> {
    PPStructure::build(&PPGeometry::new_unchecked(coords, knots), family, params, modified, parametrization)
}

/// `(D + ZKZᵀ)⁻¹ rhs` without forming any n×n matrix.
pub fn swm_apply(pp: &PPStructure, rhs: &DenseMatrix) -> Result<DenseMatrix> {
    pp.swm()?.apply(rhs)
}

/// Current state of the low-rank Gibbs sampler.
#[derive(Clone, Debug)]
pub struct GibbsState {
    pub beta: Vec<f64>,
    pub pp: PPStructure,
    pub swm: SwmFactor,
}

impl GibbsState {
    pub fn new(geom: &PPGeometry, spec: &ThetaSpec, params: &ProcessParams, modified: bool, parametrization: Parametrization, p: usize) -> Result<Self> {
        let pp = PPStructure::build(geom, spec.family(), params, modified, parametrization)?;
        let swm = pp.swm()?;
        Ok(Self {
            beta: vec![0.0; p],
            pp,
            swm,
        })
    }

    fn resid(&self, data: &SpatialDataset) -> Result<Vec<f64>> {
        let xb = data.x().matvec(&self.beta)?;
        Ok(data.y().iter().zip(xb).map(|(y, m)| y - m).collect())
    }

    /// `log N(y | Xβ, D + ZKZᵀ)` up to the `2π` constant.
    pub fn log_lik(&self, data: &SpatialDataset) -> Result<f64> {
        self.swm.log_lik(&self.resid(data)?)
    }
}

/// Draws β from its full conditional given the cached θ structure.
pub fn gibbs_update_beta(state: &mut GibbsState, data: &SpatialDataset, prior: &BetaPrior, rng: &mut RandomStream) -> Result<()> {
    state.beta = state.swm.beta_conditional(data, prior)?.draw(rng);
    Ok(())
}

/// One Metropolis update of θ given β. The kernel's stored target is
/// refreshed first because β has moved. Returns the number of accepted moves.
#[allow(clippy::too_many_arguments)]
pub fn gibbs_update_theta(
    state: &mut GibbsState,
    kernel: &mut MetropolisKernel,
    geom: &PPGeometry,
    data: &SpatialDataset,
    spec: &ThetaSpec,
    modified: bool,
    parametrization: Parametrization,
    rng: &mut RandomStream,
) -> Result<usize> {
    let current = state.log_lik(data)? + spec.log_prior_with_jacobian(kernel.z());
    kernel.set_log_target(current);
    let beta = state.beta.clone();
    let xb = data.x().matvec(&beta)?;
    let resid: Vec<f64> = data.y().iter().zip(xb).map(|(y, m)| y - m).collect();
    let mut evaluated: Vec<(Vec<f64>, PPStructure, SwmFactor)> = Vec::new();
    let accepted = kernel.step(rng, |z| {
        let params = spec.to_params(&spec.inverse(z));
        let pp = PPStructure::build(geom, spec.family(), &params, modified, parametrization)?;
        let swm = pp.swm()?;
        let lt = swm.log_lik(&resid)? + spec.log_prior_with_jacobian(z);
        evaluated.push((z.to_vec(), pp, swm));
        Ok(lt)
    })?;
    if accepted > 0 {
        let pos = evaluated
            .iter()
            .rposition(|(z, _, _)| z.as_slice() == kernel.z())
            .expect("accepted state was evaluated");
        let (_, pp, swm) = evaluated.swap_remove(pos);
        state.pp = pp;
        state.swm = swm;
    }
    Ok(accepted)
}

/// Output of [`fit_lowrank`]: θ and β chains aligned by iteration.
#[derive(Clone, Debug)]
pub struct LowRankFit {
    pub theta: ThetaChain,
    /// `M × p`.
    pub beta: DenseMatrix,
    pub knots: CoordSet,
    pub modified: bool,
    pub parametrization: Parametrization,
}

pub fn pp_banner(r: usize, modified: bool) -> String {
    format!(
        "Using {} predictive process with {} knots.",
        if modified { "modified" } else { "non-modified" },
        r
    )
}

/// Gibbs sampler for (β, θ), seeded from `options.seed`.
pub fn fit_lowrank(
    data: &SpatialDataset,
    spec: &ThetaSpec,
    knot_spec: &KnotSpec,
    beta_prior: &BetaPrior,
    options: &SamplerOptions,
    reporter: &mut dyn Reporter,
) -> Result<LowRankFit> {
    let knots = build_knots(knot_spec, data.coords())?;
    let mut rng = RandomStream::new(options.seed);
    fit_lowrank_with(
        data,
        spec,
        &knots,
        knot_spec.modified,
        Parametrization::default(),
        beta_prior,
        options,
        &mut rng,
        reporter,
    )
}

#[allow(clippy::too_many_arguments)]
pub fn fit_lowrank_with(
    data: &SpatialDataset,
    spec: &ThetaSpec,
    knots: &CoordSet,
    modified: bool,
    parametrization: Parametrization,
    beta_prior: &BetaPrior,
    options: &SamplerOptions,
    rng: &mut RandomStream,
    reporter: &mut dyn Reporter,
) -> Result<LowRankFit> {
    options.validate()?;
    beta_prior.check_dim(data.p())?;
    let geom = PPGeometry::new(data.coords(), knots)?;
    reporter.message(&format!("Model fit with {} observations.", data.n()));
    reporter.message(&format!("Number of covariates {} (including intercept if specified).", data.p()));
    reporter.message(&format!("Using the {} spatial correlation model.", spec.family().name()));
    reporter.message(&pp_banner(knots.len(), modified));
    reporter.message(&format!("Number of MCMC samples {}.", options.n_samples));

    let z0 = spec.transform(&spec.start_values())?;
    let mut state = GibbsState::new(&geom, spec, &spec.start_params(), modified, parametrization, data.p())
        .map_err(|e| e.at_iteration(0))?;
    let mut kernel = MetropolisKernel::new(z0, f64::NAN, spec.tuning_sd(), options, OnEvalError::Reject);
    let m = options.n_samples;
    let mut theta = DenseMatrix::zeros(m, spec.dim());
    let mut beta = DenseMatrix::zeros(m, data.p());
    let mut log_targets = Vec::with_capacity(m);
    let mut tracker = AcceptanceTracker::default();
    let mut warned = 0;
    for it in 0..m {
        gibbs_update_beta(&mut state, data, beta_prior, rng).map_err(|e| e.at_iteration(it + 1))?;
        gibbs_update_theta(&mut state, &mut kernel, &geom, data, spec, modified, parametrization, rng)
            .map_err(|e| e.at_iteration(it + 1))?;
        for (j, v) in spec.inverse(kernel.z()).into_iter().enumerate() {
            theta[(it, j)] = v;
        }
        for (j, &v) in state.beta.iter().enumerate() {
            beta[(it, j)] = v;
        }
        log_targets.push(kernel.log_target());
        if kernel.failed_evaluations > warned {
            reporter.message(&format!(
                "Warning: {} θ proposal(s) could not be evaluated and were rejected (iteration {}).",
                kernel.failed_evaluations - warned,
                it + 1
            ));
            warned = kernel.failed_evaluations;
        }
        tracker.report(it + 1, m, options.report_interval, &kernel, reporter);
    }
    Ok(LowRankFit {
        theta: ThetaChain {
            names: spec.names(),
            samples: theta,
            log_targets,
            accepted: kernel.accepted,
            proposals: kernel.proposals,
            failed_evaluations: kernel.failed_evaluations,
            final_tuning_sd: kernel.tuning_sd().to_vec(),
        },
        beta,
        knots: knots.clone(),
        modified,
        parametrization,
    })
}

/// Conditional of α given (β, θ): returns `(mean, F)` with covariance `F Fᵀ`
/// carried as either a precision factor or a covariance factor.
pub enum AlphaConditional {
    /// `α ~ N(P⁻¹b, P⁻¹)` with `P = L Lᵀ`.
    Precision { l: CholFactor, b: Vec<f64> },
    /// `α ~ N(B b, B)` with `B = L_B L_Bᵀ`.
    Covariance { l_b: CholFactor, b: Vec<f64> },
}

impl AlphaConditional {
    pub fn new(pp: &PPStructure, swm: &SwmFactor, data: &SpatialDataset, beta: &[f64]) -> Result<Self> {
        let xb = data.x().matvec(beta)?;
        // D⁻¹(y − Xβ), then b = Zᵀ D⁻¹ (y − Xβ)
        let dr: Vec<f64> = data
            .y()
            .iter()
            .zip(&xb)
            .zip(&pp.d_diag)
            .map(|((y, m), d)| (y - m) / d)
            .collect();
        let b = pp.z.t_matvec(&dr)?;
        match pp.parametrization {
            Parametrization::KnotPrecision => Ok(AlphaConditional::Precision { l: swm.l.clone(), b }),
            Parametrization::KnotCovariance => {
                let mut w = pp.z.clone();
                w.scale_rows(&swm.dinv_sqrt);
                let wtw = chol(&w.gram())?;
                let mut g = wtw.solve(&DenseMatrix::identity(pp.r()))?;
                g.symmetrize();
                let l_b = henderson_factor(&pp.c_star, &g)?;
                Ok(AlphaConditional::Covariance { l_b, b })
            }
        }
    }

    pub fn mean(&self) -> Result<Vec<f64>> {
        Ok(match self {
            AlphaConditional::Precision { l, b } => l.solve_vec(b)?,
            AlphaConditional::Covariance { l_b, b } => l_b.mul_vec(&l_b.t_mul_vec(b)?)?,
        })
    }

    pub fn draw_with(&self, z: &[f64]) -> Result<Vec<f64>> {
        Ok(match self {
            AlphaConditional::Precision { l, b } => {
                let mut t = l.solve_lower_vec(b)?;
                t.iter_mut().zip(z).for_each(|(a, e)| *a += e);
                l.solve_upper_vec(&t)?
            }
            AlphaConditional::Covariance { l_b, b } => {
                let mut m = l_b.t_mul_vec(b)?;
                m.iter_mut().zip(z).for_each(|(a, e)| *a += e);
                l_b.mul_vec(&m)?
            }
        })
    }
}

/// Composition sampling of α for a low-rank fit. β rows are taken from the
/// Gibbs chain at the retained iterations; `w` holds knot-level effects and
/// `w_projected` holds `Z(θ)α` at the data locations.
pub fn recover_w_lowrank(
    fit: &LowRankFit,
    data: &SpatialDataset,
    spec: &ThetaSpec,
    retention: Retention,
    rng: &mut RandomStream,
    report_interval: usize,
    reporter: &mut dyn Reporter,
) -> Result<RecoveredSamples> {
    let idx = retention.indices(fit.theta.len())?;
    let geom = PPGeometry::new(data.coords(), &fit.knots)?;
    let draws = crate::recover::for_each_sample(idx.len(), rng, report_interval, reporter, |k, r| {
        let row = idx[k];
        let params = spec.to_params(&fit.theta.row(row));
        let beta = fit.beta.row(row);
        let pp = PPStructure::build(&geom, spec.family(), &params, fit.modified, fit.parametrization)?;
        let swm = pp.swm()?;
        let cond = AlphaConditional::new(&pp, &swm, data, &beta)?;
        let alpha = cond.draw_with(&r.standard_normals(pp.r()))?;
        Ok((pp.knot_effects(&alpha)?, pp.z.matvec(&alpha)?))
    })?;
    let m = idx.len();
    let r = fit.knots.len();
    Ok(RecoveredSamples {
        theta: DenseMatrix::from_fn(m, fit.theta.samples.cols(), |i, j| fit.theta.samples[(idx[i], j)]),
        beta: DenseMatrix::from_fn(m, data.p(), |i, j| fit.beta[(idx[i], j)]),
        w: Some(DenseMatrix::from_fn(m, r, |i, j| draws[i].0[j])),
        w_projected: Some(DenseMatrix::from_fn(m, data.n(), |i, j| draws[i].1[j])),
        indices: idx,
    })
}
