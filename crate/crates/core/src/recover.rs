//! Composition sampling of β and the spatial effects from stored θ draws.
//!
//! Each retained θ⁽ᵏ⁾ yields one β⁽ᵏ⁾ from `p(β | θ⁽ᵏ⁾, y)` and, optionally,
//! one set of spatial effects from `p(α | β⁽ᵏ⁾ or μ_β, θ⁽ᵏ⁾, y)`. Draws are
//! independent across k, so they run in parallel; each k owns a substream of
//! the parent seed and results are ordered by k.

use crate::covariance::{fill_cov_from_distances, pairwise_distances, ProcessParams};
use crate::error::{Error, Result};
use crate::linalg::{chol, chol_in_place, CholFactor, DenseMatrix, LinalgError};
use crate::mcmc::{report_count, Reporter, ThetaChain};
use crate::model::{BetaPrior, SpatialDataset, ThetaSpec};
use crate::par;
use crate::rng::RandomStream;

/// Which rows of a chain feed composition sampling: the 1-based iterations
/// `start, start+thin, …` up to and including the last.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Retention {
    pub start: usize,
    pub thin: usize,
}

impl Retention {
    pub fn new(start: usize, thin: usize) -> Self {
        Self { start, thin }
    }

    pub fn all() -> Self {
        Self { start: 1, thin: 1 }
    }

    /// 0-based row indices into a chain of length `m`.
    pub fn indices(&self, m: usize) -> Result<Vec<usize>> {
        if self.thin < 1 {
            return Err(Error::InvalidParam("thin must be at least 1".into()));
        }
        if self.start < 1 || self.start > m {
            return Err(Error::InvalidParam(format!(
                "start must lie in 1..={m}, got {}",
                self.start
            )));
        }
        Ok((self.start - 1..m).step_by(self.thin).collect())
    }

    /// `⌈(m − start + 1)/thin⌉`.
    pub fn count(&self, m: usize) -> usize {
        if self.start < 1 || self.start > m || self.thin < 1 {
            0
        } else {
            (m - self.start + 1).div_ceil(self.thin)
        }
    }
}

/// Conditioning used for the full-rank spatial-effect draw.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum WConditioning {
    /// β integrated out at its prior: `Σ = XΣ_βXᵀ + τ²I`, residual `y − Xμ_β`.
    /// Needs a normal β prior.
    PriorMean,
    /// Conditions on the β⁽ᵏ⁾ drawn for the same sample: `Σ = τ²I`,
    /// residual `y − Xβ⁽ᵏ⁾`.
    DrawnBeta,
}

impl WConditioning {
    pub fn default_for(prior: &BetaPrior) -> Self {
        if prior.is_flat() {
            WConditioning::DrawnBeta
        } else {
            WConditioning::PriorMean
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct RecoveredSamples {
    /// 0-based chain rows that were used.
    pub indices: Vec<usize>,
    /// `M′ × dim(θ)`.
    pub theta: DenseMatrix,
    /// `M′ × p`.
    pub beta: DenseMatrix,
    /// `M′ × n` (full rank) or `M′ × r` knot-level effects (low rank).
    pub w: Option<DenseMatrix>,
    /// `M′ × n` projected effects `Z(θ)α` (low rank only).
    pub w_projected: Option<DenseMatrix>,
}

impl RecoveredSamples {
    pub fn len(&self) -> usize {
        self.indices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.indices.is_empty()
    }
}

/// Gaussian full conditional of β, `N(B b, B)` with `B⁻¹ = L_B L_Bᵀ`.
#[derive(Clone, Debug)]
pub struct BetaConditional {
    pub b: Vec<f64>,
    pub l_b: CholFactor,
}

impl BetaConditional {
    /// Assembles `b = Σ_β⁻¹μ_β + Uᵀv` and `L_B = chol(Σ_β⁻¹ + UᵀU)` (prior
    /// terms dropped when flat).
    pub fn from_parts(utu: DenseMatrix, utv: Vec<f64>, prior: &BetaPrior) -> Result<Self> {
        let (mut prec, mut b) = (utu, utv);
        if let BetaPrior::Normal(nb) = prior {
            prec = prec.add(nb.precision())?;
            b.iter_mut().zip(nb.precision_mu()).for_each(|(x, m)| *x += m);
        }
        let l_b = chol(&prec).map_err(|e| match e {
            LinalgError::NotPositiveDefinite { .. } => Error::RankDeficientX,
            other => other.into(),
        })?;
        Ok(Self { b, l_b })
    }

    pub fn mean(&self) -> Vec<f64> {
        self.l_b.solve_vec(&self.b).expect("dimensions fixed at construction")
    }

    /// `L_B⁻ᵀ L_B⁻¹ b + L_B⁻ᵀ z`.
    pub fn draw_with(&self, z: &[f64]) -> Vec<f64> {
        let mut t = self.l_b.solve_lower_vec(&self.b).expect("dimensions fixed at construction");
        t.iter_mut().zip(z).for_each(|(a, b)| *a += b);
        self.l_b.solve_upper_vec(&t).expect("dimensions fixed at construction")
    }

    pub fn draw(&self, rng: &mut RandomStream) -> Vec<f64> {
        let z = rng.standard_normals(self.b.len());
        self.draw_with(&z)
    }
}

/// Shared pieces for full-rank recovery at any θ.
pub struct FullRankRecovery<'a> {
    data: &'a SpatialDataset,
    spec: &'a ThetaSpec,
    prior: &'a BetaPrior,
    dist: DenseMatrix,
    yx: DenseMatrix,
}

impl<'a> FullRankRecovery<'a> {
    pub fn new(data: &'a SpatialDataset, spec: &'a ThetaSpec, prior: &'a BetaPrior) -> Result<Self> {
        prior.check_dim(data.p())?;
        let y = DenseMatrix::column_vector(data.y().to_vec());
        Ok(Self {
            data,
            spec,
            prior,
            dist: pairwise_distances(data.coords(), data.coords()),
            yx: DenseMatrix::hstack(&[&y, data.x()])?,
        })
    }

    /// K(θ) without nugget.
    fn k(&self, params: &ProcessParams) -> DenseMatrix {
        let n = self.data.n();
        let mut k = DenseMatrix::zeros(n, n);
        fill_cov_from_distances(&mut k, &self.dist, self.spec.family(), params);
        k
    }

    /// Full conditional of β at θ with Σ_{y|β,θ} = K(θ) + τ²I.
    pub fn beta_conditional(&self, params: &ProcessParams) -> Result<BetaConditional> {
        params.validate(self.spec.family())?;
        let mut s = self.k(params);
        s.add_to_diag(params.tau_sq);
        let l = chol_in_place(s)?;
        let vu = l.solve_lower(&self.yx)?;
        let n = self.data.n();
        let p = self.data.p();
        let u = DenseMatrix::from_col_major(n, p, vu.as_slice()[n..].to_vec())?;
        let utv = u.t_matvec(vu.col(0))?;
        BetaConditional::from_parts(u.gram(), utv, self.prior)
    }

    /// Conditional of the n spatial effects at θ: returns `(Bb, L_B)` where
    /// `B = L_B L_Bᵀ` is the conditional covariance.
    pub fn w_conditional(
        &self,
        params: &ProcessParams,
        conditioning: WConditioning,
        beta: Option<&[f64]>,
    ) -> Result<(Vec<f64>, CholFactor)> {
        let n = self.data.n();
        let (g, b) = match conditioning {
            WConditioning::PriorMean => {
                let BetaPrior::Normal(nb) = self.prior else {
                    return Err(Error::InvalidModel("prior-mean conditioning needs a normal beta prior".into()));
                };
                let mut g = self.data.x().matmul(nb.sigma())?.matmul(&self.data.x().transpose())?;
                g.symmetrize();
                g.add_to_diag(params.tau_sq);
                let xmu = self.data.x().matvec(nb.mu())?;
                let r: Vec<f64> = self.data.y().iter().zip(&xmu).map(|(y, m)| y - m).collect();
                // b = Σ⁻¹ r through the factor of Σ
                let l = chol(&g)?;
                let b = l.solve_vec(&r)?;
                (g, b)
            }
            WConditioning::DrawnBeta => {
                let beta = beta.ok_or_else(|| Error::InvalidModel("drawn-beta conditioning needs beta".into()))?;
                let xb = self.data.x().matvec(beta)?;
                let b = self.data.y().iter().zip(&xb).map(|(y, m)| (y - m) / params.tau_sq).collect();
                let mut g = DenseMatrix::zeros(n, n);
                g.add_to_diag(params.tau_sq);
                (g, b)
            }
        };
        let l_b = henderson_factor(&self.k(params), &g)?;
        let mean = l_b.mul_vec(&l_b.t_mul_vec(&b)?)?;
        Ok((mean, l_b))
    }
}

/// Cholesky factor of `(K⁻¹ + G⁻¹)⁻¹ = G − G(K+G)⁻¹G`, evaluated as
/// `L = chol(K+G)`, `W = L⁻¹G`, `chol(G − WᵀW)`. One retry after
/// symmetrizing if round-off breaks definiteness.
pub fn henderson_factor(k: &DenseMatrix, g: &DenseMatrix) -> Result<CholFactor> {
    let mut kg = k.add(g)?;
    kg.symmetrize();
    let l = chol_in_place(kg)?;
    let w = l.solve_lower(g)?;
    let b = g.sub(&w.gram())?;
    match chol(&b) {
        Ok(f) => Ok(f),
        Err(LinalgError::NotPositiveDefinite { .. }) | Err(LinalgError::NotSymmetric { .. }) => {
            let mut b = b;
            b.symmetrize();
            Ok(chol_in_place(b)?)
        }
        Err(e) => Err(e.into()),
    }
}

fn theta_subset(chain: &ThetaChain, idx: &[usize]) -> DenseMatrix {
    DenseMatrix::from_fn(idx.len(), chain.samples.cols(), |i, j| chain.samples[(idx[i], j)])
}

/// Runs `f(k, rng_k)` for every retained sample in parallel, in report-sized
/// blocks so progress lines stay ordered.
pub(crate) fn for_each_sample<T, F>(
    count: usize,
    rng: &mut RandomStream,
    report_interval: usize,
    reporter: &mut dyn Reporter,
    f: F,
) -> Result<Vec<T>>
where
    T: Send,
    F: Fn(usize, &mut RandomStream) -> Result<T> + Sync + Send,
{
    let streams = rng.split(count);
    let interval = report_interval.max(1);
    let mut out = Vec::with_capacity(count);
    let mut lo = 0;
    while lo < count {
        let hi = (lo + interval).min(count);
        let block = par::map_indices(hi - lo, |i| {
            let k = lo + i;
            let mut r = streams[k].clone();
            f(k, &mut r).map_err(|e| e.at_sample(k + 1))
        });
        for r in block {
            out.push(r?);
        }
        lo = hi;
        report_count(hi, count, interval, reporter);
    }
    Ok(out)
}

/// β samples (and optionally the n spatial effects) for a full-rank chain.
#[allow(clippy::too_many_arguments)]
pub fn recover_full_rank(
    chain: &ThetaChain,
    data: &SpatialDataset,
    spec: &ThetaSpec,
    prior: &BetaPrior,
    retention: Retention,
    recover_w: Option<WConditioning>,
    rng: &mut RandomStream,
    report_interval: usize,
    reporter: &mut dyn Reporter,
) -> Result<RecoveredSamples> {
    let idx = retention.indices(chain.len())?;
    let ctx = FullRankRecovery::new(data, spec, prior)?;
    if recover_w == Some(WConditioning::PriorMean) && prior.is_flat() {
        return Err(Error::InvalidModel(
            "a flat beta prior needs drawn-beta conditioning for the spatial effects".into(),
        ));
    }
    let draws = for_each_sample(idx.len(), rng, report_interval, reporter, |k, r| {
        let params = spec.to_params(&chain.row(idx[k]));
        let beta = ctx.beta_conditional(&params)?.draw(r);
        let w = match recover_w {
            None => None,
            Some(c) => {
                let (mean, l_b) = ctx.w_conditional(&params, c, Some(&beta))?;
                let z = r.standard_normals(mean.len());
                Some(crate::linalg::mvn_transport(&mean, &l_b, &z)?)
            }
        };
        Ok((beta, w))
    })?;
    let m = idx.len();
    let beta = DenseMatrix::from_fn(m, data.p(), |i, j| draws[i].0[j]);
    let w = recover_w.map(|_| DenseMatrix::from_fn(m, data.n(), |i, j| draws[i].1.as_ref().unwrap()[j]));
    Ok(RecoveredSamples {
        theta: theta_subset(chain, &idx),
        indices: idx,
        beta,
        w,
        w_projected: None,
    })
}

/// β samples only.
pub fn recover_beta(
    chain: &ThetaChain,
    data: &SpatialDataset,
    spec: &ThetaSpec,
    prior: &BetaPrior,
    retention: Retention,
    rng: &mut RandomStream,
) -> Result<DenseMatrix> {
    Ok(recover_full_rank(chain, data, spec, prior, retention, None, rng, usize::MAX, &mut crate::mcmc::NullReporter)?.beta)
}

/// Spatial-effect samples for a full-rank chain.
pub fn recover_w_full(
    chain: &ThetaChain,
    data: &SpatialDataset,
    spec: &ThetaSpec,
    prior: &BetaPrior,
    retention: Retention,
    conditioning: WConditioning,
    rng: &mut RandomStream,
) -> Result<DenseMatrix> {
    let r = recover_full_rank(
        chain,
        data,
        spec,
        prior,
        retention,
        Some(conditioning),
        rng,
        usize::MAX,
        &mut crate::mcmc::NullReporter,
    )?;
    Ok(r.w.expect("requested"))
}
