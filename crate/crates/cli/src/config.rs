//! TOML run configuration. Key names follow the R-style names used on the
//! console (`sigma.sq.IG`, `phi.Unif`, ...) so they must be quoted in TOML.

use std::path::{Path, PathBuf};

use geomc_core::covariance::CovFamily;
use geomc_core::lowrank::Parametrization;
use geomc_core::model::{BetaPrior, ParamName, SamplerOptions, ScalarPrior, ThetaEntry, ThetaSpec};
use geomc_core::DenseMatrix;
use serde::Deserialize;

use crate::error::{CliError, CliResult};

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub data: Option<DataSection>,
    pub model: Option<ModelSection>,
    #[serde(default)]
    pub priors: PriorSection,
    #[serde(default)]
    pub starting: ParamValues,
    #[serde(default)]
    pub tuning: ParamValues,
    #[serde(default)]
    pub sampler: SamplerSection,
    pub knots: Option<KnotSection>,
    pub recover: Option<RecoverSection>,
    pub predict: Option<PredictSection>,
    pub dynamic: Option<DynamicSection>,
    #[serde(default)]
    pub output: OutputSection,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DataSection {
    pub path: PathBuf,
    pub coords: [String; 2],
    pub response: String,
    #[serde(default)]
    pub covariates: Vec<String>,
    #[serde(default = "yes")]
    pub intercept: bool,
    #[serde(default = "na")]
    pub na_token: String,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelSection {
    /// exponential | gaussian | spherical | matern | powered-exponential
    #[serde(rename = "cov.model")]
    pub cov_model: String,
    /// Fixed Matérn smoothness (omit and give `nu.Unif` to sample it).
    pub nu: Option<f64>,
    /// Powered-exponential exponent.
    pub alpha: Option<f64>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NormalPrior {
    pub mean: Vec<f64>,
    pub cov: Vec<Vec<f64>>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct WishartPrior {
    pub df: f64,
    pub scale: Vec<Vec<f64>>,
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PriorSection {
    #[serde(rename = "beta.Norm")]
    pub beta_norm: Option<NormalPrior>,
    #[serde(rename = "beta.Flat")]
    pub beta_flat: Option<bool>,
    #[serde(rename = "sigma.sq.IG")]
    pub sigma_sq_ig: Option<[f64; 2]>,
    #[serde(rename = "sigma.sq.Unif")]
    pub sigma_sq_unif: Option<[f64; 2]>,
    #[serde(rename = "tau.sq.IG")]
    pub tau_sq_ig: Option<[f64; 2]>,
    #[serde(rename = "phi.Unif")]
    pub phi_unif: Option<[f64; 2]>,
    #[serde(rename = "phi.IG")]
    pub phi_ig: Option<[f64; 2]>,
    #[serde(rename = "nu.Unif")]
    pub nu_unif: Option<[f64; 2]>,
    #[serde(rename = "beta.0.Norm")]
    pub beta0_norm: Option<NormalPrior>,
    #[serde(rename = "sigma.eta.IW")]
    pub sigma_eta_iw: Option<WishartPrior>,
}

/// Starting values, or proposal variances in `[tuning]`.
#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ParamValues {
    #[serde(rename = "sigma.sq")]
    pub sigma_sq: Option<f64>,
    #[serde(rename = "tau.sq")]
    pub tau_sq: Option<f64>,
    pub phi: Option<f64>,
    pub nu: Option<f64>,
    /// Dynamic model: β_t start, the same at every step.
    pub beta: Option<Vec<f64>>,
    #[serde(rename = "sigma.eta")]
    pub sigma_eta: Option<Vec<Vec<f64>>>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SamplerSection {
    #[serde(rename = "n.samples", default = "n_samples")]
    pub n_samples: usize,
    #[serde(rename = "n.report", default = "n_report")]
    pub n_report: usize,
    #[serde(default)]
    pub adaptive: bool,
    #[serde(default = "adapt_batch")]
    pub adapt_batch: usize,
    #[serde(default = "adapt_target")]
    pub adapt_target: f64,
    #[serde(default = "one")]
    pub seed: u64,
    #[serde(default = "burn_in")]
    pub burn_in_fraction: f64,
    #[serde(default)]
    pub nugget_jitter: f64,
}

impl Default for SamplerSection {
    fn default() -> Self {
        let d = SamplerOptions::default();
        Self {
            n_samples: d.n_samples,
            n_report: d.report_interval,
            adaptive: d.adaptive,
            adapt_batch: d.adapt_batch,
            adapt_target: d.adapt_target,
            seed: d.seed,
            burn_in_fraction: d.burn_in_fraction,
            nugget_jitter: d.nugget_jitter,
        }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct KnotSection {
    /// `[nx, ny, extend]`.
    pub grid: Option<[f64; 3]>,
    /// CSV with the `[data] coords` columns.
    pub path: Option<PathBuf>,
    #[serde(default)]
    pub modified: bool,
    /// knot-precision (default) | knot-covariance
    pub parametrization: Option<String>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RecoverSection {
    /// Output directory of a fit-full or fit-pp run.
    pub input: PathBuf,
    /// First retained iteration, 1-based. Defaults to the burn-in point.
    pub start: Option<usize>,
    #[serde(default = "one_usize")]
    pub thin: usize,
    /// Also recover spatial effects.
    #[serde(default)]
    pub w: bool,
    /// drawn-beta | prior-mean (full-rank only).
    pub w_conditioning: Option<String>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PredictSection {
    /// A recover run, or a fit-pp run.
    pub input: PathBuf,
    /// CSV of new sites with the `[data]` coordinate and covariate columns.
    pub path: PathBuf,
    #[serde(default = "one_usize")]
    pub start: usize,
    #[serde(default = "one_usize")]
    pub thin: usize,
    /// conditional (default) | alpha
    pub mode: Option<String>,
    #[serde(default)]
    pub joint: bool,
    #[serde(default)]
    pub latent: bool,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DynamicSection {
    /// One row per station; step t of variable `v` lives in column `v.t`.
    pub path: PathBuf,
    pub coords: [String; 2],
    pub response: String,
    #[serde(default)]
    pub covariates: Vec<String>,
    #[serde(default = "yes")]
    pub intercept: bool,
    #[serde(default = "na")]
    pub na_token: String,
    #[serde(default)]
    pub get_fitted: bool,
    #[serde(default)]
    pub keep_u: bool,
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputSection {
    pub dir: Option<PathBuf>,
}

fn yes() -> bool {
    true
}
fn na() -> String {
    "NA".into()
}
fn n_samples() -> usize {
    SamplerOptions::default().n_samples
}
fn n_report() -> usize {
    SamplerOptions::default().report_interval
}
fn adapt_batch() -> usize {
    SamplerOptions::default().adapt_batch
}
fn adapt_target() -> f64 {
    SamplerOptions::default().adapt_target
}
fn one() -> u64 {
    1
}
fn one_usize() -> usize {
    1
}
fn burn_in() -> f64 {
    SamplerOptions::default().burn_in_fraction
}

fn cfg<T>(msg: impl Into<String>) -> CliResult<T> {
    Err(CliError::Config(msg.into()))
}

/// A parsed config together with its raw bytes and base directory.
#[derive(Debug, Clone)]
pub struct LoadedConfig {
    pub config: RunConfig,
    pub raw: Vec<u8>,
    pub base: PathBuf,
}

impl LoadedConfig {
    pub fn read(path: &Path) -> CliResult<Self> {
        let raw = std::fs::read(path).map_err(|e| CliError::Config(format!("cannot read {}: {e}", path.display())))?;
        let text = std::str::from_utf8(&raw).map_err(|_| CliError::Config("config is not UTF-8".into()))?;
        let config: RunConfig = toml::from_str(text).map_err(|e| CliError::Config(e.to_string()))?;
        let base = path.parent().map(Path::to_path_buf).unwrap_or_default();
        Ok(Self { config, raw, base })
    }

    /// Paths in the config are relative to the config file.
    pub fn resolve(&self, p: &Path) -> PathBuf {
        if p.is_absolute() {
            p.to_path_buf()
        } else {
            self.base.join(p)
        }
    }
}

impl RunConfig {
    pub fn data(&self) -> CliResult<&DataSection> {
        self.data.as_ref().map_or_else(|| cfg("missing [data] section"), Ok)
    }

    pub fn family(&self) -> CliResult<CovFamily> {
        let m = self.model.as_ref().map_or_else(|| cfg("missing [model] section"), Ok)?;
        Ok(match m.cov_model.as_str() {
            "exponential" => CovFamily::Exponential,
            "gaussian" => CovFamily::Gaussian,
            "spherical" => CovFamily::Spherical,
            "matern" => CovFamily::Matern,
            "powered-exponential" => match m.alpha {
                Some(alpha) => CovFamily::PoweredExponential { alpha },
                None => return cfg("powered-exponential needs model.alpha"),
            },
            other => return cfg(format!("unknown cov.model '{other}'")),
        })
    }

    pub fn fixed_nu(&self) -> Option<f64> {
        self.model.as_ref().and_then(|m| m.nu)
    }

    pub fn sampler_options(&self, seed_override: Option<u64>) -> CliResult<SamplerOptions> {
        let s = &self.sampler;
        let o = SamplerOptions {
            n_samples: s.n_samples,
            report_interval: s.n_report,
            adaptive: s.adaptive,
            adapt_batch: s.adapt_batch,
            adapt_target: s.adapt_target,
            seed: seed_override.unwrap_or(s.seed),
            burn_in_fraction: s.burn_in_fraction,
            thin: 1,
            nugget_jitter: s.nugget_jitter,
        };
        o.validate().map_err(|e| CliError::Config(e.to_string()))?;
        Ok(o)
    }

    fn scalar_prior(&self, name: &str, ig: Option<[f64; 2]>, unif: Option<[f64; 2]>) -> CliResult<Option<ScalarPrior>> {
        match (ig, unif) {
            (Some(_), Some(_)) => cfg(format!("give either {name}.IG or {name}.Unif, not both")),
            (Some([shape, scale]), None) => Ok(Some(ScalarPrior::InverseGamma { shape, scale })),
            (None, Some([a, b])) => Ok(Some(ScalarPrior::Uniform { a, b })),
            (None, None) => Ok(None),
        }
    }

    pub fn sigma_sq_prior(&self) -> CliResult<ScalarPrior> {
        let p = &self.priors;
        self.scalar_prior("sigma.sq", p.sigma_sq_ig, p.sigma_sq_unif)?
            .map_or_else(|| cfg("missing prior sigma.sq.IG"), Ok)
    }

    pub fn tau_sq_prior(&self) -> CliResult<ScalarPrior> {
        let p = &self.priors;
        p.tau_sq_ig
            .map(|[shape, scale]| ScalarPrior::InverseGamma { shape, scale })
            .map_or_else(|| cfg("missing prior tau.sq.IG"), Ok)
    }

    pub fn phi_prior(&self) -> CliResult<ScalarPrior> {
        let p = &self.priors;
        self.scalar_prior("phi", p.phi_ig, p.phi_unif)?
            .map_or_else(|| cfg("missing prior phi.Unif"), Ok)
    }

    /// θ priors, starting values and proposal variances.
    pub fn theta_spec(&self) -> CliResult<ThetaSpec> {
        let family = self.family()?;
        let start = &self.starting;
        let tune = &self.tuning;
        let need = |v: Option<f64>, what: &str, name: &str| v.map_or_else(|| cfg(format!("missing {what} value for {name}")), Ok);
        let mk = |name: ParamName, prior: ScalarPrior, s: Option<f64>, t: Option<f64>| -> CliResult<ThetaEntry> {
            let label = name.label();
            let var = need(t, "tuning", label)?;
            if !(var > 0.0) {
                return cfg(format!("tuning variance for {label} must be positive"));
            }
            Ok(ThetaEntry {
                name,
                prior,
                start: need(s, "starting", label)?,
                tuning_sd: var.sqrt(),
            })
        };
        let mut entries = vec![
            mk(ParamName::SigmaSq, self.sigma_sq_prior()?, start.sigma_sq, tune.sigma_sq)?,
            mk(ParamName::TauSq, self.tau_sq_prior()?, start.tau_sq, tune.tau_sq)?,
            mk(ParamName::Phi, self.phi_prior()?, start.phi, tune.phi)?,
        ];
        if let Some([a, b]) = self.priors.nu_unif {
            entries.push(mk(ParamName::Nu, ScalarPrior::Uniform { a, b }, start.nu, tune.nu)?);
        }
        ThetaSpec::new(family, entries, self.fixed_nu()).map_err(|e| CliError::Config(e.to_string()))
    }

    pub fn beta_prior(&self, p: usize) -> CliResult<BetaPrior> {
        match (&self.priors.beta_norm, self.priors.beta_flat) {
            (Some(_), Some(true)) => cfg("give either beta.Norm or beta.Flat, not both"),
            (Some(n), _) => {
                let cov = matrix(&n.cov, "beta.Norm cov")?;
                let prior = BetaPrior::normal(n.mean.clone(), cov).map_err(|e| CliError::Config(e.to_string()))?;
                prior.check_dim(p).map_err(|e| CliError::Config(e.to_string()))?;
                Ok(prior)
            }
            (None, _) => Ok(BetaPrior::Flat),
        }
    }

    pub fn knots(&self) -> CliResult<&KnotSection> {
        self.knots.as_ref().map_or_else(|| cfg("missing [knots] section"), Ok)
    }
}

impl KnotSection {
    pub fn parametrization(&self) -> CliResult<Parametrization> {
        parse_parametrization(self.parametrization.as_deref().unwrap_or("knot-precision"))
    }
}

pub fn parse_parametrization(s: &str) -> CliResult<Parametrization> {
    match s {
        "knot-precision" => Ok(Parametrization::KnotPrecision),
        "knot-covariance" => Ok(Parametrization::KnotCovariance),
        other => cfg(format!("unknown parametrization '{other}'")),
    }
}

pub fn parametrization_name(p: Parametrization) -> &'static str {
    match p {
        Parametrization::KnotPrecision => "knot-precision",
        Parametrization::KnotCovariance => "knot-covariance",
    }
}

/// Row-major nested lists to a matrix.
pub fn matrix(rows: &[Vec<f64>], what: &str) -> CliResult<DenseMatrix> {
    DenseMatrix::from_rows(rows).map_err(|e| CliError::Config(format!("{what}: {e}")))
}
