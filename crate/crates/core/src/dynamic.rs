//! Dynamic spatio-temporal regression:
//!
//! ```text
//! y_t(s) = x_t(s)ᵀβ_t + u_t(s) + ε_t(s),   ε_t(s) ~ N(0, τ²_t)
//! β_t    = β_{t−1} + η_t,                  η_t ~ N(0, Σ_η)
//! u_t(s) = u_{t−1}(s) + w_t(s),            w_t ~ GP(0, σ²_t ρ(·; φ_t))
//! ```
//!
//! with `β₀ ~ N(m₀, Σ₀)` and `u₀ ≡ 0`. The sampler is a single-site Gibbs
//! scan over time steps; each β_t and u_t is drawn from its Gaussian full
//! conditional given its neighbours in time, Σ_η from an inverse-Wishart,
//! σ²_t and τ²_t from inverse gammas, and φ_t by random-walk Metropolis.
//!
//! Time steps are 1-based in the state (`beta` and `u` carry the t = 0
//! column) and in all user-facing labels; the data matrices are 0-based.

use crate::covariance::{cov_from_distances, pairwise_distances, CoordSet, CovFamily, ProcessParams};
use crate::error::{Error, Result};
use crate::linalg::{chol, chol_in_place, dot, trsolve, CholFactor, DenseMatrix, Side};
use crate::mcmc::{MetropolisKernel, OnEvalError, Progress, Reporter};
use crate::model::{SamplerOptions, ScalarPrior};
use crate::rng::RandomStream;

/// Outcomes at a fixed station network over `N_t` time steps.
#[derive(Clone, Debug)]
pub struct DynamicDataset {
    coords: CoordSet,
    /// `n × N_t`; NaN marks a missing cell.
    y: DenseMatrix,
    missing: Vec<(usize, usize)>,
    x: Vec<DenseMatrix>,
}

impl DynamicDataset {
    /// `y` is `n × N_t` with NaN for missing cells; `x[t]` is the `n × p`
    /// design at step t.
    pub fn new(coords: CoordSet, y: DenseMatrix, x: Vec<DenseMatrix>) -> Result<Self> {
        let n = coords.len();
        if y.rows() != n {
            return Err(Error::InvalidModel(format!("outcome matrix has {} rows for {n} stations", y.rows())));
        }
        let n_t = y.cols();
        if x.len() != n_t {
            return Err(Error::InvalidModel(format!("{} design matrices for {n_t} time steps", x.len())));
        }
        let p = x[0].cols();
        for (t, xt) in x.iter().enumerate() {
            if xt.rows() != n || xt.cols() != p {
                return Err(Error::InvalidModel(format!(
                    "design at time step {} is {}x{}, expected {n}x{p}",
                    t + 1,
                    xt.rows(),
                    xt.cols()
                )));
            }
            if xt.as_slice().iter().any(|v| !v.is_finite()) {
                return Err(Error::InvalidModel(format!("design at time step {} is not finite", t + 1)));
            }
        }
        let mut missing = Vec::new();
        for t in 0..n_t {
            let col = y.col(t);
            if col.iter().any(|v| v.is_infinite()) {
                return Err(Error::InvalidModel(format!("infinite outcome at time step {}", t + 1)));
            }
            if col.iter().all(|v| v.is_nan()) {
                return Err(Error::AllMissingStep { t: t + 1 });
            }
            missing.extend(col.iter().enumerate().filter(|(_, v)| v.is_nan()).map(|(i, _)| (i, t)));
        }
        Ok(Self { coords, y, missing, x })
    }

    pub fn n(&self) -> usize {
        self.coords.len()
    }

    pub fn n_t(&self) -> usize {
        self.y.cols()
    }

    pub fn p(&self) -> usize {
        self.x[0].cols()
    }

    pub fn coords(&self) -> &CoordSet {
        &self.coords
    }

    pub fn y(&self) -> &DenseMatrix {
        &self.y
    }

    /// Design at 0-based step `t`.
    pub fn x(&self, t: usize) -> &DenseMatrix {
        &self.x[t]
    }

    /// Missing cells as (station, 0-based step), ordered by step then station.
    pub fn missing_cells(&self) -> &[(usize, usize)] {
        &self.missing
    }

    pub fn n_missing(&self) -> usize {
        self.missing.len()
    }
}

/// Inverse-Wishart with density ∝ |Σ|^{−(df+p+1)/2} exp(−½ tr(SΣ⁻¹));
/// the mean is `S/(df − p − 1)`.
#[derive(Clone, Debug)]
pub struct InverseWishart {
    pub df: f64,
    pub scale: DenseMatrix,
}

impl InverseWishart {
    pub fn new(df: f64, scale: DenseMatrix) -> Result<Self> {
        let p = scale.rows();
        if !scale.is_square() {
            return Err(Error::InvalidParam("inverse-Wishart scale must be square".into()));
        }
        if !(df > p as f64 - 1.0) {
            return Err(Error::InvalidParam(format!(
                "inverse-Wishart df must exceed p - 1 = {}, got {df}",
                p as f64 - 1.0
            )));
        }
        chol(&scale).map_err(|e| Error::InvalidParam(format!("inverse-Wishart scale is not positive definite ({e})")))?;
        Ok(Self { df, scale })
    }

    pub fn dim(&self) -> usize {
        self.scale.rows()
    }

    /// Bartlett draw: Σ⁻¹ = (CA)(CA)ᵀ with `C = chol(S⁻¹)`, so Σ = B⁻ᵀB⁻¹
    /// for `B = CA`.
    pub fn draw(&self, rng: &mut RandomStream) -> Result<DenseMatrix> {
        let p = self.dim();
        let s_inv = chol(&self.scale)?.solve(&DenseMatrix::identity(p))?;
        let c = chol_in_place(s_inv)?.into_inner();
        let mut a = DenseMatrix::zeros(p, p);
        for i in 0..p {
            a[(i, i)] = rng.chi_squared(self.df - i as f64).sqrt();
            for j in 0..i {
                a[(i, j)] = rng.standard_normal();
            }
        }
        let b = c.matmul(&a)?;
        let b_inv = trsolve(&b, &DenseMatrix::identity(p), Side::Lower)?;
        Ok(b_inv.gram())
    }
}

#[derive(Clone, Debug)]
pub struct DynamicPriors {
    pub m0: Vec<f64>,
    pub sigma0: DenseMatrix,
    pub sigma_eta: InverseWishart,
    /// Per time step; must be inverse gamma.
    pub sigma_sq: Vec<ScalarPrior>,
    /// Per time step; must be inverse gamma.
    pub tau_sq: Vec<ScalarPrior>,
    pub phi: Vec<ScalarPrior>,
}

impl DynamicPriors {
    pub fn validate(&self, p: usize, n_t: usize) -> Result<()> {
        if self.m0.len() != p || self.sigma0.rows() != p || self.sigma0.cols() != p || self.sigma_eta.dim() != p {
            return Err(Error::InvalidModel(format!("beta priors must have dimension {p}")));
        }
        chol(&self.sigma0).map_err(|e| Error::InvalidParam(format!("Sigma_0 is not positive definite ({e})")))?;
        for (name, v) in [("sigma.sq", &self.sigma_sq), ("tau.sq", &self.tau_sq), ("phi", &self.phi)] {
            if v.len() != n_t {
                return Err(Error::InvalidModel(format!("{} {name} priors for {n_t} time steps", v.len())));
            }
            for pr in v.iter() {
                pr.validate()?;
            }
        }
        for pr in self.sigma_sq.iter().chain(&self.tau_sq) {
            if !matches!(pr, ScalarPrior::InverseGamma { .. }) {
                return Err(Error::InvalidModel(
                    "sigma.sq and tau.sq priors must be inverse gamma in the dynamic model".into(),
                ));
            }
        }
        Ok(())
    }
}

fn ig_params(p: &ScalarPrior) -> (f64, f64) {
    match *p {
        ScalarPrior::InverseGamma { shape, scale } => (shape, scale),
        ScalarPrior::Uniform { .. } => unreachable!("validated as inverse gamma"),
    }
}

/// Starting values; `beta` is `p × N_t` (β₁…β_{N_t}); β₀ starts at m₀.
#[derive(Clone, Debug)]
pub struct DynamicStart {
    pub beta: DenseMatrix,
    pub sigma_sq: Vec<f64>,
    pub tau_sq: Vec<f64>,
    pub phi: Vec<f64>,
    pub sigma_eta: DenseMatrix,
}

/// Everything that defines a dynamic fit besides the data.
#[derive(Clone, Debug)]
pub struct DynamicModel {
    pub family: CovFamily,
    /// Smoothness, held fixed, for the Matérn family.
    pub nu: Option<f64>,
    pub priors: DynamicPriors,
    pub start: DynamicStart,
    /// Per-step proposal sd for φ_t on the transformed scale.
    pub phi_tuning_sd: Vec<f64>,
}

impl DynamicModel {
    pub fn validate(&self, data: &DynamicDataset) -> Result<()> {
        let (p, n_t) = (data.p(), data.n_t());
        self.family.validate()?;
        if self.family.needs_nu() != self.nu.is_some() {
            return Err(Error::InvalidModel("nu must be given exactly when the family is matern".into()));
        }
        self.priors.validate(p, n_t)?;
        let s = &self.start;
        if s.beta.rows() != p || s.beta.cols() != n_t {
            return Err(Error::InvalidModel(format!("starting beta must be {p}x{n_t}")));
        }
        if s.sigma_eta.rows() != p || s.sigma_eta.cols() != p {
            return Err(Error::InvalidModel(format!("starting sigma.eta must be {p}x{p}")));
        }
        chol(&s.sigma_eta).map_err(|e| Error::InvalidParam(format!("starting sigma.eta is not positive definite ({e})")))?;
        for (name, v, pri) in [
            ("sigma.sq", &s.sigma_sq, &self.priors.sigma_sq),
            ("tau.sq", &s.tau_sq, &self.priors.tau_sq),
            ("phi", &s.phi, &self.priors.phi),
        ] {
            if v.len() != n_t {
                return Err(Error::InvalidModel(format!("{} starting {name} values for {n_t} time steps", v.len())));
            }
            for (t, (&x, pr)) in v.iter().zip(pri).enumerate() {
                if !pr.in_support(x) {
                    return Err(Error::OutOfSupport {
                        name: format!("{name}.t{}", t + 1),
                        value: x,
                    });
                }
            }
        }
        if self.phi_tuning_sd.len() != n_t || self.phi_tuning_sd.iter().any(|s| !(*s > 0.0) || !s.is_finite()) {
            return Err(Error::InvalidParam(format!("phi tuning needs {n_t} positive values")));
        }
        Ok(())
    }
}

#[derive(Clone, Debug)]
pub struct DynamicOptions {
    pub sampler: SamplerOptions,
    /// Also keep posterior predictive draws for every cell.
    pub get_fitted: bool,
    /// Also keep the u_t states.
    pub keep_u: bool,
}

impl Default for DynamicOptions {
    fn default() -> Self {
        Self {
            sampler: SamplerOptions::default(),
            get_fitted: false,
            keep_u: false,
        }
    }
}

/// Current values of every block, plus cached correlation factors.
#[derive(Clone, Debug)]
pub struct DynamicState {
    /// `p × (N_t+1)`, column 0 is β₀.
    pub beta: DenseMatrix,
    /// `n × (N_t+1)`, column 0 is u₀ ≡ 0.
    pub u: DenseMatrix,
    pub sigma_eta: DenseMatrix,
    pub sigma_sq: Vec<f64>,
    pub tau_sq: Vec<f64>,
    pub phi: Vec<f64>,
    /// Completed outcomes, `n × N_t`; only originally-missing cells change.
    pub y: DenseMatrix,
    dist: DenseMatrix,
    family: CovFamily,
    nu: Option<f64>,
    r_chol: Vec<CholFactor>,
    r_inv: Vec<DenseMatrix>,
}

impl DynamicState {
    pub fn new(data: &DynamicDataset, model: &DynamicModel) -> Result<Self> {
        model.validate(data)?;
        let (n, p, n_t) = (data.n(), data.p(), data.n_t());
        let mut beta = DenseMatrix::zeros(p, n_t + 1);
        beta.col_mut(0).copy_from_slice(&model.priors.m0);
        for t in 1..=n_t {
            beta.col_mut(t).copy_from_slice(model.start.beta.col(t - 1));
        }
        let mut y = data.y().clone();
        for &(i, t) in data.missing_cells() {
            y[(i, t)] = dot(&data.x(t).row(i), model.start.beta.col(t));
        }
        let dist = pairwise_distances(data.coords(), data.coords());
        let mut state = Self {
            beta,
            u: DenseMatrix::zeros(n, n_t + 1),
            sigma_eta: model.start.sigma_eta.clone(),
            sigma_sq: model.start.sigma_sq.clone(),
            tau_sq: model.start.tau_sq.clone(),
            phi: model.start.phi.clone(),
            y,
            dist,
            family: model.family,
            nu: model.nu,
            r_chol: Vec::with_capacity(n_t),
            r_inv: Vec::with_capacity(n_t),
        };
        for t in 1..=n_t {
            let (l, inv) = state.correlation_factor(state.phi[t - 1]).map_err(|e| e.at_time_step(t, 0))?;
            state.r_chol.push(l);
            state.r_inv.push(inv);
        }
        Ok(state)
    }

    pub fn n_t(&self) -> usize {
        self.phi.len()
    }

    fn correlation_factor(&self, phi: f64) -> Result<(CholFactor, DenseMatrix)> {
        let mut params = ProcessParams::new(1.0, phi, 0.0);
        if let Some(nu) = self.nu {
            params = params.with_nu(nu);
        }
        let r = cov_from_distances(&self.dist, self.family, &params, false)?;
        let l = chol_in_place(r)?;
        let inv = l.solve(&DenseMatrix::identity(l.dim()))?;
        Ok((l, inv))
    }

    /// `w_t = u_t − u_{t−1}` for 1-based t.
    pub fn w(&self, t: usize) -> Vec<f64> {
        self.u.col(t).iter().zip(self.u.col(t - 1)).map(|(a, b)| a - b).collect()
    }

    /// `y_t − X_tβ_t − u_t` for 1-based t.
    fn resid(&self, data: &DynamicDataset, t: usize) -> Result<Vec<f64>> {
        let xb = data.x(t - 1).matvec(self.beta.col(t))?;
        Ok(self
            .y
            .col(t - 1)
            .iter()
            .zip(xb)
            .zip(self.u.col(t))
            .map(|((y, m), u)| y - m - u)
            .collect())
    }

    /// `log N(w_t | 0, σ²_t R(φ)) + log π(φ) + log|J|`, up to constants, at
    /// transformed `z`, given a factor of R(φ).
    fn phi_log_target(&self, t: usize, l: &CholFactor, prior: &ScalarPrior, z: f64) -> Result<f64> {
        let v = l.solve_lower_vec(&self.w(t))?;
        let phi = prior.inverse(z);
        Ok(-0.5 * l.log_det() - 0.5 * dot(&v, &v) / self.sigma_sq[t - 1] + prior.log_density(phi) + prior.log_jacobian(z))
    }
}

/// Draws `N(P⁻¹b, P⁻¹)` given precision `P` and linear term `b`.
fn draw_from_precision(prec: DenseMatrix, lin: &[f64], rng: &mut RandomStream) -> Result<Vec<f64>> {
    let l = chol_in_place(prec)?;
    let mean = l.solve_vec(lin)?;
    let dev = l.solve_upper_vec(&rng.standard_normals(mean.len()))?;
    Ok(mean.iter().zip(dev).map(|(m, d)| m + d).collect())
}

fn spd_inverse(a: &DenseMatrix) -> Result<DenseMatrix> {
    Ok(chol(a)?.solve(&DenseMatrix::identity(a.rows()))?)
}

/// Precision and linear term of β_t's full conditional (t = 0…N_t).
fn beta_precision_form(state: &DynamicState, data: &DynamicDataset, priors: &DynamicPriors, t: usize) -> Result<(DenseMatrix, Vec<f64>)> {
    let n_t = state.n_t();
    let eta_inv = spd_inverse(&state.sigma_eta)?;
    let p = eta_inv.rows();
    let mut prec = DenseMatrix::zeros(p, p);
    let mut lin = vec![0.0; p];
    let add_eta = |neighbour: &[f64], prec: &mut DenseMatrix, lin: &mut Vec<f64>| -> Result<()> {
        *prec = prec.add(&eta_inv)?;
        lin.iter_mut().zip(eta_inv.matvec(neighbour)?).for_each(|(a, b)| *a += b);
        Ok(())
    };
    if t == 0 {
        let s0_inv = spd_inverse(&priors.sigma0)?;
        prec = prec.add(&s0_inv)?;
        lin.iter_mut().zip(s0_inv.matvec(&priors.m0)?).for_each(|(a, b)| *a += b);
    } else {
        let x = data.x(t - 1);
        let tau = state.tau_sq[t - 1];
        let mut xtx = x.gram();
        xtx.scale(1.0 / tau);
        prec = prec.add(&xtx)?;
        let r: Vec<f64> = state.y.col(t - 1).iter().zip(state.u.col(t)).map(|(y, u)| y - u).collect();
        lin.iter_mut().zip(x.t_matvec(&r)?).for_each(|(a, b)| *a += b / tau);
        add_eta(state.beta.col(t - 1), &mut prec, &mut lin)?;
    }
    if t < n_t {
        add_eta(state.beta.col(t + 1), &mut prec, &mut lin)?;
    }
    Ok((prec, lin))
}

/// Precision and linear term of u_t's full conditional (t = 1…N_t).
fn u_precision_form(state: &DynamicState, data: &DynamicDataset, t: usize) -> Result<(DenseMatrix, Vec<f64>)> {
    let n_t = state.n_t();
    let tau = state.tau_sq[t - 1];
    let mut prec = state.r_inv[t - 1].clone();
    prec.scale(1.0 / state.sigma_sq[t - 1]);
    prec.add_to_diag(1.0 / tau);
    let xb = data.x(t - 1).matvec(state.beta.col(t))?;
    let mut lin: Vec<f64> = state.y.col(t - 1).iter().zip(&xb).map(|(y, m)| (y - m) / tau).collect();
    let q_prev = state.r_inv[t - 1].matvec(state.u.col(t - 1))?;
    lin.iter_mut().zip(q_prev).for_each(|(a, b)| *a += b / state.sigma_sq[t - 1]);
    if t < n_t {
        let s_next = state.sigma_sq[t];
        let mut q_next = state.r_inv[t].clone();
        q_next.scale(1.0 / s_next);
        prec = prec.add(&q_next)?;
        lin.iter_mut()
            .zip(q_next.matvec(state.u.col(t + 1))?)
            .for_each(|(a, b)| *a += b);
    }
    Ok((prec, lin))
}

fn moments_from_precision(prec: DenseMatrix, lin: &[f64]) -> Result<(Vec<f64>, DenseMatrix)> {
    let mean = chol(&prec)?.solve_vec(lin)?;
    Ok((mean, prec))
}

/// Mean and precision of β_t | rest (t = 0…N_t).
pub fn beta_full_conditional(state: &DynamicState, data: &DynamicDataset, priors: &DynamicPriors, t: usize) -> Result<(Vec<f64>, DenseMatrix)> {
    let (prec, lin) = beta_precision_form(state, data, priors, t)?;
    moments_from_precision(prec, &lin)
}

/// Mean and precision of u_t | rest (t = 1…N_t).
pub fn u_full_conditional(state: &DynamicState, data: &DynamicDataset, t: usize) -> Result<(Vec<f64>, DenseMatrix)> {
    let (prec, lin) = u_precision_form(state, data, t)?;
    moments_from_precision(prec, &lin)
}

/// Posterior (df, scale) of Σ_η given the β path.
pub fn sigma_eta_posterior(state: &DynamicState, prior: &InverseWishart) -> (f64, DenseMatrix) {
    let n_t = state.n_t();
    let mut scale = prior.scale.clone();
    let p = scale.rows();
    for t in 1..=n_t {
        let d: Vec<f64> = state.beta.col(t).iter().zip(state.beta.col(t - 1)).map(|(a, b)| a - b).collect();
        for j in 0..p {
            for i in 0..p {
                scale[(i, j)] += d[i] * d[j];
            }
        }
    }
    (prior.df + n_t as f64, scale)
}

/// Posterior inverse-gamma (shape, scale) of σ²_t.
pub fn sigma_sq_posterior(state: &DynamicState, priors: &DynamicPriors, t: usize) -> Result<(f64, f64)> {
    let (a, b) = ig_params(&priors.sigma_sq[t - 1]);
    let v = state.r_chol[t - 1].solve_lower_vec(&state.w(t))?;
    Ok((a + 0.5 * v.len() as f64, b + 0.5 * dot(&v, &v)))
}

/// Posterior inverse-gamma (shape, scale) of τ²_t.
pub fn tau_sq_posterior(state: &DynamicState, data: &DynamicDataset, priors: &DynamicPriors, t: usize) -> Result<(f64, f64)> {
    let (a, b) = ig_params(&priors.tau_sq[t - 1]);
    let r = state.resid(data, t)?;
    Ok((a + 0.5 * r.len() as f64, b + 0.5 * dot(&r, &r)))
}

/// Redraws the missing cells of 1-based step `t` from
/// `N(x_t(s)ᵀβ_t + u_t(s), τ²_t)`.
pub fn impute_missing(state: &mut DynamicState, data: &DynamicDataset, t: usize, rng: &mut RandomStream) {
    let sd = state.tau_sq[t - 1].sqrt();
    let x = data.x(t - 1);
    for &(i, tt) in data.missing_cells() {
        if tt + 1 == t {
            let mean = dot(&x.row(i), state.beta.col(t)) + state.u[(i, t)];
            state.y[(i, tt)] = mean + sd * rng.standard_normal();
        }
    }
}

/// One full scan; `kernels[t−1]` holds φ_t's Metropolis state.
pub fn gibbs_scan(
    state: &mut DynamicState,
    data: &DynamicDataset,
    priors: &DynamicPriors,
    kernels: &mut [MetropolisKernel],
    rng: &mut RandomStream,
    iteration: usize,
) -> Result<()> {
    let n_t = state.n_t();
    let ctx = |t: usize| move |e: Error| e.at_time_step(t, iteration);
    for t in 1..=n_t {
        impute_missing(state, data, t, rng);
    }
    for t in 0..=n_t {
        let (prec, lin) = beta_precision_form(state, data, priors, t).map_err(ctx(t))?;
        let b = draw_from_precision(prec, &lin, rng).map_err(ctx(t))?;
        state.beta.col_mut(t).copy_from_slice(&b);
    }
    for t in 1..=n_t {
        let (prec, lin) = u_precision_form(state, data, t).map_err(ctx(t))?;
        let u = draw_from_precision(prec, &lin, rng).map_err(ctx(t))?;
        state.u.col_mut(t).copy_from_slice(&u);
    }
    let (df, scale) = sigma_eta_posterior(state, &priors.sigma_eta);
    state.sigma_eta = InverseWishart { df, scale }.draw(rng).map_err(|e| e.at_iteration(iteration))?;
    for t in 1..=n_t {
        let (a, b) = sigma_sq_posterior(state, priors, t).map_err(ctx(t))?;
        state.sigma_sq[t - 1] = rng.inv_gamma(a, b);
        let (a, b) = tau_sq_posterior(state, data, priors, t).map_err(ctx(t))?;
        state.tau_sq[t - 1] = rng.inv_gamma(a, b);
    }
    for t in 1..=n_t {
        let prior = &priors.phi[t - 1];
        let kernel = &mut kernels[t - 1];
        let current = state.phi_log_target(t, &state.r_chol[t - 1], prior, kernel.z()[0]).map_err(ctx(t))?;
        kernel.set_log_target(current);
        let st: &DynamicState = state;
        let accepted = kernel
            .step(rng, |z| {
                let (l, _) = st.correlation_factor(prior.inverse(z[0]))?;
                st.phi_log_target(t, &l, prior, z[0])
            })
            .map_err(ctx(t))?;
        if accepted > 0 {
            let phi = prior.inverse(kernel.z()[0]);
            let (l, inv) = state.correlation_factor(phi).map_err(ctx(t))?;
            state.phi[t - 1] = phi;
            state.r_chol[t - 1] = l;
            state.r_inv[t - 1] = inv;
        }
    }
    Ok(())
}

/// Stored draws from a dynamic fit, one row per iteration.
#[derive(Clone, Debug)]
pub struct DynamicSamples {
    pub n: usize,
    pub p: usize,
    pub n_t: usize,
    /// `M × (p·N_t)`, column `(t−1)·p + j` holds coefficient j at step t.
    pub beta: DenseMatrix,
    /// `M × p`, β₀.
    pub beta0: DenseMatrix,
    /// `M × 3N_t`: σ²_1…σ²_{N_t}, τ²_1…, φ_1….
    pub theta: DenseMatrix,
    /// `M × p²`, column-major entries of Σ_η.
    pub sigma_eta: DenseMatrix,
    /// `M × K`, posterior predictive draws at the missing cells (absent
    /// when nothing is missing).
    pub y_missing: Option<DenseMatrix>,
    pub missing_cells: Vec<(usize, usize)>,
    /// `M × (n·N_t)`, posterior predictive draws at every cell (column
    /// `(t−1)·n + i`).
    pub fitted: Option<DenseMatrix>,
    /// `M × (n·N_t)`, same layout as `fitted`.
    pub u: Option<DenseMatrix>,
    pub phi_acceptance: Vec<f64>,
}

impl DynamicSamples {
    pub fn len(&self) -> usize {
        self.theta.rows()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn beta_names(&self) -> Vec<String> {
        (1..=self.n_t)
            .flat_map(|t| (1..=self.p).map(move |j| format!("beta{j}.t{t}")))
            .collect()
    }

    pub fn beta0_names(&self) -> Vec<String> {
        (1..=self.p).map(|j| format!("beta{j}.t0")).collect()
    }

    pub fn theta_names(&self) -> Vec<String> {
        ["sigma.sq", "tau.sq", "phi"]
            .iter()
            .flat_map(|nm| (1..=self.n_t).map(move |t| format!("{nm}.t{t}")))
            .collect()
    }

    pub fn sigma_eta_names(&self) -> Vec<String> {
        (1..=self.p)
            .flat_map(|j| (1..=self.p).map(move |i| format!("sigma.eta.{i}.{j}")))
            .collect()
    }

    pub fn missing_names(&self) -> Vec<String> {
        self.missing_cells.iter().map(|(i, t)| format!("y.s{}.t{}", i + 1, t + 1)).collect()
    }

    pub fn cell_names(&self) -> Vec<String> {
        (1..=self.n_t)
            .flat_map(|t| (1..=self.n).map(move |i| format!("s{i}.t{t}")))
            .collect()
    }

    /// Column of β for coefficient `j` (0-based) at 1-based step `t`.
    pub fn beta_column(&self, j: usize, t: usize) -> &[f64] {
        self.beta.col((t - 1) * self.p + j)
    }
}

fn prior_echo(p: &ScalarPrior) -> String {
    match *p {
        ScalarPrior::InverseGamma { shape, scale } => format!("IG hyperpriors shape={shape:.5} and scale={scale:.5}"),
        ScalarPrior::Uniform { a, b } => format!("Unif hyperpriors a={a:.5} and b={b:.5}"),
    }
}

fn row_line(v: &[f64]) -> String {
    let mut s = String::from("\t");
    for x in v {
        s.push_str(&format!("{x:.3}\t"));
    }
    s
}

/// Model description lines printed before sampling.
pub fn dynamic_banner(data: &DynamicDataset, model: &DynamicModel, n_samples: usize) -> Vec<String> {
    let pr = &model.priors;
    let mut out = vec![
        format!("Model fit with {} observations in {} time steps.", data.n(), data.n_t()),
        String::new(),
        format!("Number of missing observations {}.", data.n_missing()),
        String::new(),
        format!("Number of covariates {} (including intercept if specified).", data.p()),
        String::new(),
        format!("Using the {} spatial correlation model.", model.family.name()),
        String::new(),
        format!("Number of MCMC samples {n_samples}."),
        String::new(),
        "Priors and hyperpriors:".into(),
        "\tbeta normal:".into(),
        format!("\tm_0:{}", row_line(&pr.m0)),
        "\tSigma_0:".into(),
    ];
    for i in 0..data.p() {
        out.push(row_line(&pr.sigma0.row(i)));
    }
    out.push(String::new());
    out.push(format!("\tsigma.eta IW hyperpriors df={:.5} and scale:", pr.sigma_eta.df));
    for i in 0..data.p() {
        out.push(row_line(&pr.sigma_eta.scale.row(i)));
    }
    out.push(String::new());
    for t in 0..data.n_t() {
        out.push(format!("\tsigma.sq_t={} {}", t + 1, prior_echo(&pr.sigma_sq[t])));
        out.push(format!("\ttau.sq_t={} {}", t + 1, prior_echo(&pr.tau_sq[t])));
        out.push(format!("\tphi_t={} {}", t + 1, prior_echo(&pr.phi[t])));
        out.push("\t---".into());
    }
    out
}

fn mean_rate(kernels: &[MetropolisKernel], base: &[(usize, usize)]) -> f64 {
    let rates: Vec<f64> = kernels
        .iter()
        .zip(base)
        .map(|(k, &(a0, p0))| {
            let dp = k.proposals - p0;
            if dp == 0 {
                0.0
            } else {
                (k.accepted - a0) as f64 / dp as f64
            }
        })
        .collect();
    rates.iter().sum::<f64>() / rates.len() as f64
}

/// Runs the dynamic Gibbs sampler for `options.sampler.n_samples` scans.
pub fn fit_dynamic(
    data: &DynamicDataset,
    model: &DynamicModel,
    options: &DynamicOptions,
    reporter: &mut dyn Reporter,
) -> Result<DynamicSamples> {
    let mut rng = RandomStream::new(options.sampler.seed);
    fit_dynamic_with_rng(data, model, options, &mut rng, reporter)
}

pub fn fit_dynamic_with_rng(
    data: &DynamicDataset,
    model: &DynamicModel,
    options: &DynamicOptions,
    rng: &mut RandomStream,
    reporter: &mut dyn Reporter,
) -> Result<DynamicSamples> {
    let so = &options.sampler;
    so.validate()?;
    let mut state = DynamicState::new(data, model)?;
    for line in dynamic_banner(data, model, so.n_samples) {
        reporter.message(&line);
    }
    let (n, p, n_t) = (data.n(), data.p(), data.n_t());
    let mut kernels = Vec::with_capacity(n_t);
    for t in 1..=n_t {
        let prior = &model.priors.phi[t - 1];
        let z = prior
            .transform(state.phi[t - 1])
            .ok_or_else(|| Error::OutOfSupport {
                name: format!("phi.t{t}"),
                value: state.phi[t - 1],
            })?;
        kernels.push(MetropolisKernel::new(
            vec![z],
            f64::NEG_INFINITY,
            vec![model.phi_tuning_sd[t - 1]],
            so,
            OnEvalError::Propagate,
        ));
    }

    let m = so.n_samples;
    let k = data.n_missing();
    let mut beta = DenseMatrix::zeros(m, p * n_t);
    let mut beta0 = DenseMatrix::zeros(m, p);
    let mut theta = DenseMatrix::zeros(m, 3 * n_t);
    let mut sigma_eta = DenseMatrix::zeros(m, p * p);
    let mut y_missing = (k > 0).then(|| DenseMatrix::zeros(m, k));
    let mut fitted = options.get_fitted.then(|| DenseMatrix::zeros(m, n * n_t));
    let mut u_store = options.keep_u.then(|| DenseMatrix::zeros(m, n * n_t));

    let mut interval_base: Vec<(usize, usize)> = vec![(0, 0); n_t];
    for it in 0..m {
        gibbs_scan(&mut state, data, &model.priors, &mut kernels, rng, it + 1)?;

        for t in 1..=n_t {
            for j in 0..p {
                beta[(it, (t - 1) * p + j)] = state.beta[(j, t)];
            }
            theta[(it, t - 1)] = state.sigma_sq[t - 1];
            theta[(it, n_t + t - 1)] = state.tau_sq[t - 1];
            theta[(it, 2 * n_t + t - 1)] = state.phi[t - 1];
        }
        for j in 0..p {
            beta0[(it, j)] = state.beta[(j, 0)];
        }
        for (c, v) in state.sigma_eta.as_slice().iter().enumerate() {
            sigma_eta[(it, c)] = *v;
        }
        // posterior predictive draws from the end-of-scan state
        let cell_draw = |i: usize, t: usize, rng: &mut RandomStream| {
            let mean = dot(&data.x(t).row(i), state.beta.col(t + 1)) + state.u[(i, t + 1)];
            mean + state.tau_sq[t].sqrt() * rng.standard_normal()
        };
        match fitted.as_mut() {
            Some(f) => {
                for t in 0..n_t {
                    for i in 0..n {
                        f[(it, t * n + i)] = cell_draw(i, t, rng);
                    }
                }
                if let Some(ym) = y_missing.as_mut() {
                    for (c, &(i, t)) in data.missing_cells().iter().enumerate() {
                        ym[(it, c)] = f[(it, t * n + i)];
                    }
                }
            }
            None => {
                if let Some(ym) = y_missing.as_mut() {
                    for (c, &(i, t)) in data.missing_cells().iter().enumerate() {
                        ym[(it, c)] = cell_draw(i, t, rng);
                    }
                }
            }
        }
        if let Some(us) = u_store.as_mut() {
            for t in 0..n_t {
                for i in 0..n {
                    us[(it, t * n + i)] = state.u[(i, t + 1)];
                }
            }
        }

        let done = it + 1;
        if done % so.report_interval == 0 || done == m {
            let interval = mean_rate(&kernels, &interval_base);
            let overall = mean_rate(&kernels, &vec![(0, 0); n_t]);
            interval_base = kernels.iter().map(|k| (k.accepted, k.proposals)).collect();
            reporter.progress(&Progress {
                done,
                total: m,
                interval_acceptance: Some(interval),
                overall_acceptance: Some(overall),
                mean_over_blocks: true,
            });
        }
    }
    Ok(DynamicSamples {
        n,
        p,
        n_t,
        beta,
        beta0,
        theta,
        sigma_eta,
        y_missing,
        missing_cells: data.missing_cells().to_vec(),
        fitted,
        u: u_store,
        phi_acceptance: kernels
            .iter()
            .map(|k| if k.proposals == 0 { 0.0 } else { k.accepted as f64 / k.proposals as f64 })
            .collect(),
    })
}
