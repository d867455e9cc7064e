//! Model description: data containers, priors, parameter transforms and
//! sampler options.

use std::fmt;

use statrs::function::gamma::ln_gamma;

use crate::covariance::{CoordSet, CovFamily, ProcessParams};
use crate::error::{Error, Result};
use crate::linalg::{chol, CholFactor, DenseMatrix};

/// Coordinates, outcome and design matrix for one fit.
#[derive(Clone, Debug)]
pub struct SpatialDataset {
    coords: CoordSet,
    y: Vec<f64>,
    x: DenseMatrix,
}

impl SpatialDataset {
    pub fn new(coords: CoordSet, y: Vec<f64>, x: DenseMatrix) -> Result<Self> {
        let n = coords.len();
        if y.len() != n || x.rows() != n {
            return Err(Error::InvalidModel(format!(
                "{} coordinates, {} outcomes and {} design rows",
                n,
                y.len(),
                x.rows()
            )));
        }
        if x.cols() >= n {
            return Err(Error::InvalidModel(format!(
                "need more observations than covariates (n = {n}, p = {})",
                x.cols()
            )));
        }
        if y.iter().chain(x.as_slice()).any(|v| !v.is_finite()) {
            return Err(Error::InvalidModel("outcome and design must be finite and complete".into()));
        }
        chol(&x.gram()).map_err(|_| Error::RankDeficientX)?;
        Ok(Self { coords, y, x })
    }

    pub fn n(&self) -> usize {
        self.y.len()
    }

    pub fn p(&self) -> usize {
        self.x.cols()
    }

    pub fn coords(&self) -> &CoordSet {
        &self.coords
    }

    pub fn y(&self) -> &[f64] {
        &self.y
    }

    pub fn x(&self) -> &DenseMatrix {
        &self.x
    }
}

/// Gaussian prior on β with its precision terms precomputed.
#[derive(Clone, Debug)]
pub struct NormalBetaPrior {
    mu: Vec<f64>,
    sigma: DenseMatrix,
    precision: DenseMatrix,
    precision_mu: Vec<f64>,
}

impl NormalBetaPrior {
    pub fn mu(&self) -> &[f64] {
        &self.mu
    }

    pub fn sigma(&self) -> &DenseMatrix {
        &self.sigma
    }

    /// Σ_β⁻¹, obtained by solving against chol(Σ_β).
    pub fn precision(&self) -> &DenseMatrix {
        &self.precision
    }

    /// Σ_β⁻¹ μ_β.
    pub fn precision_mu(&self) -> &[f64] {
        &self.precision_mu
    }
}

#[derive(Clone, Debug)]
pub enum BetaPrior {
    Flat,
    Normal(NormalBetaPrior),
}

impl BetaPrior {
    pub fn normal(mu: Vec<f64>, sigma: DenseMatrix) -> Result<Self> {
        if !sigma.is_square() || sigma.rows() != mu.len() {
            return Err(Error::InvalidModel(format!(
                "beta prior mean has length {} but covariance is {}x{}",
                mu.len(),
                sigma.rows(),
                sigma.cols()
            )));
        }
        let l: CholFactor =
            chol(&sigma).map_err(|e| Error::InvalidModel(format!("beta prior covariance is not SPD: {e}")))?;
        let mut precision = l.solve(&DenseMatrix::identity(mu.len()))?;
        precision.symmetrize();
        let precision_mu = l.solve_vec(&mu)?;
        Ok(BetaPrior::Normal(NormalBetaPrior {
            mu,
            sigma,
            precision,
            precision_mu,
        }))
    }

    pub fn is_flat(&self) -> bool {
        matches!(self, BetaPrior::Flat)
    }

    pub fn check_dim(&self, p: usize) -> Result<()> {
        match self {
            BetaPrior::Normal(n) if n.mu.len() != p => Err(Error::InvalidModel(format!(
                "beta prior has dimension {} but the design has {p} columns",
                n.mu.len()
            ))),
            _ => Ok(()),
        }
    }
}

/// Prior on one positive covariance parameter.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum ScalarPrior {
    /// Density ∝ x^{−shape−1} e^{−scale/x}; sampled on the log scale.
    InverseGamma { shape: f64, scale: f64 },
    /// Uniform on (a, b); sampled on the logit scale of (x−a)/(b−a).
    Uniform { a: f64, b: f64 },
}

impl ScalarPrior {
    pub fn validate(&self) -> Result<()> {
        match *self {
            ScalarPrior::InverseGamma { shape, scale } if shape > 0.0 && scale > 0.0 && shape.is_finite() && scale.is_finite() => {
                Ok(())
            }
            ScalarPrior::Uniform { a, b } if a < b && a.is_finite() && b.is_finite() => Ok(()),
            other => Err(Error::InvalidParam(format!("invalid prior {other:?}"))),
        }
    }

    pub fn in_support(&self, x: f64) -> bool {
        match *self {
            ScalarPrior::InverseGamma { .. } => x > 0.0 && x.is_finite(),
            ScalarPrior::Uniform { a, b } => x > a && x < b,
        }
    }

    /// Normalized log density on the constrained scale.
    pub fn log_density(&self, x: f64) -> f64 {
        if !self.in_support(x) {
            return f64::NEG_INFINITY;
        }
        match *self {
            ScalarPrior::InverseGamma { shape, scale } => {
                shape * scale.ln() - ln_gamma(shape) - (shape + 1.0) * x.ln() - scale / x
            }
            ScalarPrior::Uniform { a, b } => -(b - a).ln(),
        }
    }

    pub fn transform(&self, x: f64) -> Option<f64> {
        if !self.in_support(x) {
            return None;
        }
        Some(match *self {
            ScalarPrior::InverseGamma { .. } => x.ln(),
            ScalarPrior::Uniform { a, b } => {
                let u = (x - a) / (b - a);
                (u / (1.0 - u)).ln()
            }
        })
    }

    pub fn inverse(&self, z: f64) -> f64 {
        match *self {
            ScalarPrior::InverseGamma { .. } => z.exp(),
            ScalarPrior::Uniform { a, b } => a + (b - a) * logistic(z),
        }
    }

    /// log |dx/dz| of [`ScalarPrior::inverse`].
    pub fn log_jacobian(&self, z: f64) -> f64 {
        match *self {
            ScalarPrior::InverseGamma { .. } => z,
            // log(b−a) + z − 2 log(1+eᶻ), written without overflow
            ScalarPrior::Uniform { a, b } => (b - a).ln() - softplus(z) - softplus(-z),
        }
    }
}

fn logistic(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

fn softplus(z: f64) -> f64 {
    if z > 0.0 {
        z + (-z).exp().ln_1p()
    } else {
        z.exp().ln_1p()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum ParamName {
    SigmaSq,
    TauSq,
    Phi,
    Nu,
}

impl ParamName {
    pub fn label(&self) -> &'static str {
        match self {
            ParamName::SigmaSq => "sigma.sq",
            ParamName::TauSq => "tau.sq",
            ParamName::Phi => "phi",
            ParamName::Nu => "nu",
        }
    }
}

impl fmt::Display for ParamName {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ThetaEntry {
    pub name: ParamName,
    pub prior: ScalarPrior,
    pub start: f64,
    /// Random-walk proposal standard deviation on the transformed scale.
    pub tuning_sd: f64,
}

/// The sampled covariance parameters, in the order σ², τ², φ, ν.
#[derive(Clone, Debug, PartialEq)]
pub struct ThetaSpec {
    family: CovFamily,
    entries: Vec<ThetaEntry>,
    fixed_nu: Option<f64>,
}

impl ThetaSpec {
    /// `entries` may come in any order; they are stored canonically. For the
    /// Matérn family ν is either sampled (an entry named `Nu`) or held at
    /// `fixed_nu`.
    pub fn new(family: CovFamily, mut entries: Vec<ThetaEntry>, fixed_nu: Option<f64>) -> Result<Self> {
        family.validate()?;
        entries.sort_by_key(|e| e.name);
        for w in entries.windows(2) {
            if w[0].name == w[1].name {
                return Err(Error::InvalidModel(format!("parameter {} given twice", w[0].name)));
            }
        }
        let has = |n: ParamName| entries.iter().any(|e| e.name == n);
        for required in [ParamName::SigmaSq, ParamName::TauSq, ParamName::Phi] {
            if !has(required) {
                return Err(Error::InvalidModel(format!("missing prior for {required}")));
            }
        }
        match (family.needs_nu(), has(ParamName::Nu), fixed_nu) {
            (true, true, None) | (false, false, None) => {}
            (true, false, Some(nu)) if nu > 0.0 && nu.is_finite() => {}
            (true, _, _) => {
                return Err(Error::InvalidModel(
                    "matern needs nu either sampled with a uniform prior or fixed, not both".into(),
                ))
            }
            (false, _, _) => {
                return Err(Error::InvalidModel(format!("{} family takes no nu", family.name())))
            }
        }
        for e in &entries {
            e.prior.validate()?;
            if e.name == ParamName::TauSq && !matches!(e.prior, ScalarPrior::InverseGamma { .. }) {
                return Err(Error::InvalidModel("tau.sq needs an inverse-gamma prior".into()));
            }
            if !e.prior.in_support(e.start) {
                return Err(Error::OutOfSupport {
                    name: e.name.label().into(),
                    value: e.start,
                });
            }
            if !(e.tuning_sd > 0.0 && e.tuning_sd.is_finite()) {
                return Err(Error::InvalidParam(format!("tuning for {} must be positive", e.name)));
            }
        }
        Ok(Self {
            family,
            entries,
            fixed_nu,
        })
    }

    pub fn family(&self) -> CovFamily {
        self.family
    }

    pub fn entries(&self) -> &[ThetaEntry] {
        &self.entries
    }

    pub fn dim(&self) -> usize {
        self.entries.len()
    }

    pub fn fixed_nu(&self) -> Option<f64> {
        self.fixed_nu
    }

    pub fn names(&self) -> Vec<ParamName> {
        self.entries.iter().map(|e| e.name).collect()
    }

    pub fn tuning_sd(&self) -> Vec<f64> {
        self.entries.iter().map(|e| e.tuning_sd).collect()
    }

    pub fn start_values(&self) -> Vec<f64> {
        self.entries.iter().map(|e| e.start).collect()
    }

    pub fn start_params(&self) -> ProcessParams {
        self.to_params(&self.start_values())
    }

    /// Constrained vector (canonical order) to process parameters.
    pub fn to_params(&self, values: &[f64]) -> ProcessParams {
        let mut p = ProcessParams {
            sigma_sq: f64::NAN,
            phi: f64::NAN,
            nu: self.fixed_nu,
            tau_sq: f64::NAN,
        };
        for (e, &v) in self.entries.iter().zip(values) {
            match e.name {
                ParamName::SigmaSq => p.sigma_sq = v,
                ParamName::TauSq => p.tau_sq = v,
                ParamName::Phi => p.phi = v,
                ParamName::Nu => p.nu = Some(v),
            }
        }
        p
    }

    pub fn from_params(&self, p: &ProcessParams) -> Vec<f64> {
        self.entries
            .iter()
            .map(|e| match e.name {
                ParamName::SigmaSq => p.sigma_sq,
                ParamName::TauSq => p.tau_sq,
                ParamName::Phi => p.phi,
                ParamName::Nu => p.nu.unwrap_or(f64::NAN),
            })
            .collect()
    }

    pub fn transform(&self, values: &[f64]) -> Result<Vec<f64>> {
        self.entries
            .iter()
            .zip(values)
            .map(|(e, &v)| {
                e.prior.transform(v).ok_or_else(|| Error::OutOfSupport {
                    name: e.name.label().into(),
                    value: v,
                })
            })
            .collect()
    }

    pub fn inverse(&self, z: &[f64]) -> Vec<f64> {
        self.entries.iter().zip(z).map(|(e, &zi)| e.prior.inverse(zi)).collect()
    }

    pub fn log_prior_with_jacobian(&self, z: &[f64]) -> f64 {
        self.entries
            .iter()
            .zip(z)
            .map(|(e, &zi)| e.prior.log_density(e.prior.inverse(zi)) + e.prior.log_jacobian(zi))
            .sum()
    }
}

/// Unconstrained image of `params` under each entry's transform.
pub fn transform_theta(params: &ProcessParams, spec: &ThetaSpec) -> Result<Vec<f64>> {
    spec.transform(&spec.from_params(params))
}

pub fn inverse_transform_theta(z: &[f64], spec: &ThetaSpec) -> ProcessParams {
    spec.to_params(&spec.inverse(z))
}

/// Log prior density of θ on the transformed scale (including the Jacobian).
pub fn log_prior_with_jacobian(z: &[f64], spec: &ThetaSpec) -> f64 {
    spec.log_prior_with_jacobian(z)
}

#[derive(Clone, Debug, PartialEq)]
pub struct SamplerOptions {
    pub n_samples: usize,
    pub report_interval: usize,
    pub adaptive: bool,
    pub adapt_batch: usize,
    pub adapt_target: f64,
    pub seed: u64,
    pub burn_in_fraction: f64,
    pub thin: usize,
    /// Added to the diagonal once when a covariance fails to factor. 0 disables.
    pub nugget_jitter: f64,
}

impl Default for SamplerOptions {
    fn default() -> Self {
        Self {
            n_samples: 5000,
            report_interval: 500,
            adaptive: false,
            adapt_batch: 25,
            adapt_target: 0.44,
            seed: 1,
            burn_in_fraction: 0.75,
            thin: 1,
            nugget_jitter: 0.0,
        }
    }
}

impl SamplerOptions {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::InvalidParam(m.into()));
        if self.n_samples < 1 {
            return bad("n_samples must be at least 1");
        }
        if self.report_interval < 1 || self.adapt_batch < 1 || self.thin < 1 {
            return bad("report_interval, adapt_batch and thin must be at least 1");
        }
        if !(self.adapt_target > 0.0 && self.adapt_target < 1.0) {
            return bad("adapt_target must lie in (0, 1)");
        }
        if !(self.burn_in_fraction >= 0.0 && self.burn_in_fraction < 1.0) {
            return bad("burn_in_fraction must lie in [0, 1)");
        }
        if !(self.nugget_jitter >= 0.0 && self.nugget_jitter.is_finite()) {
            return bad("nugget_jitter must be nonnegative");
        }
        Ok(())
    }

    /// First retained 1-based iteration implied by the burn-in fraction.
    pub fn burn_in_start(&self) -> usize {
        (self.burn_in_fraction * self.n_samples as f64).floor() as usize
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum KnotKind {
    /// `nx × ny` regular grid over the data extent, widened by `extend`
    /// times the coordinate range on every side.
    Grid { nx: usize, ny: usize, extend: f64 },
    Explicit(CoordSet),
}

#[derive(Clone, Debug, PartialEq)]
pub struct KnotSpec {
    pub kind: KnotKind,
    pub modified: bool,
}

/// Knot locations for a predictive-process fit. Grid order: x outer, y inner.
pub fn build_knots(spec: &KnotSpec, data_coords: &CoordSet) -> Result<CoordSet> {
    let knots = match &spec.kind {
        KnotKind::Explicit(c) => c.clone(),
        KnotKind::Grid { nx, ny, extend } => {
            if *nx < 1 || *ny < 1 {
                return Err(Error::InvalidModel("knot grid dimensions must be at least 1".into()));
            }
            if !(*extend >= 0.0 && extend.is_finite()) {
                return Err(Error::InvalidModel("knot grid extend must be nonnegative".into()));
            }
            let (lo, hi) = data_coords.bounding_box();
            let axis = |k: usize, m: usize| -> Vec<f64> {
                let w = hi[k] - lo[k];
                let a = lo[k] - extend * w;
                let b = hi[k] + extend * w;
                if m == 1 {
                    vec![0.5 * (a + b)]
                } else {
                    (0..m).map(|i| a + (b - a) * i as f64 / (m - 1) as f64).collect()
                }
            };
            let xs = axis(0, *nx);
            let ys = axis(1, *ny);
            let mut pts = Vec::with_capacity(nx * ny);
            for &x in &xs {
                for &y in &ys {
                    pts.push([x, y]);
                }
            }
            CoordSet::new(pts)?
        }
    };
    if knots.len() >= data_coords.len() {
        return Err(Error::TooManyKnots {
            knots: knots.len(),
            n: data_coords.len(),
        });
    }
    Ok(knots)
}
