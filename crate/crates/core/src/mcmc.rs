//! Random-walk Metropolis machinery shared by the samplers, plus progress
//! reporting.
//!
//! Proposals live on the transformed (unconstrained) scale. The default kernel
//! moves every component at once with a diagonal Gaussian step and a single
//! accept/reject. The adaptive kernel updates one component at a time and,
//! after every batch of iterations, nudges each log step size by
//! `min(0.01, batch^{-1/2})` toward the target acceptance rate.

use crate::error::{Error, Result};
use crate::linalg::DenseMatrix;
use crate::model::{ParamName, SamplerOptions, ThetaSpec};
use crate::rng::RandomStream;

/// One progress checkpoint.
#[derive(Clone, Debug, PartialEq)]
pub struct Progress {
    pub done: usize,
    pub total: usize,
    /// Acceptance over the last report interval, when a Metropolis step is involved.
    pub interval_acceptance: Option<f64>,
    pub overall_acceptance: Option<f64>,
    /// The rates are averages over several per-block kernels.
    pub mean_over_blocks: bool,
}

impl Progress {
    /// Console lines for this checkpoint.
    pub fn lines(&self) -> Vec<String> {
        let mut out = vec![format!(
            "Sampled: {} of {}, {:.2}%",
            self.done,
            self.total,
            100.0 * self.done as f64 / self.total as f64
        )];
        let mean = if self.mean_over_blocks { "Mean " } else { "" };
        if let Some(r) = self.interval_acceptance {
            out.push(format!("Report interval {mean}Metrop. Acceptance rate: {:.2}%", 100.0 * r));
        }
        if let Some(r) = self.overall_acceptance {
            out.push(format!("Overall Metrop. Acceptance rate: {:.2}%", 100.0 * r));
        }
        out
    }
}

/// Receives banners and progress from long-running samplers.
pub trait Reporter {
    fn message(&mut self, line: &str);
    fn progress(&mut self, p: &Progress);
}

/// Discards everything.
#[derive(Default, Clone, Copy, Debug)]
pub struct NullReporter;

impl Reporter for NullReporter {
    fn message(&mut self, _line: &str) {}
    fn progress(&mut self, _p: &Progress) {}
}

/// Collects every line in memory; handy in tests.
#[derive(Default, Clone, Debug)]
pub struct BufferReporter {
    pub lines: Vec<String>,
}

impl Reporter for BufferReporter {
    fn message(&mut self, line: &str) {
        self.lines.push(line.to_string());
    }
    fn progress(&mut self, p: &Progress) {
        self.lines.extend(p.lines());
    }
}

/// Whether a failed target evaluation aborts the run or counts as a rejection.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum OnEvalError {
    Propagate,
    Reject,
}

/// Posterior draws of θ on the constrained scale.
#[derive(Clone, Debug, PartialEq)]
pub struct ThetaChain {
    pub names: Vec<ParamName>,
    /// `M × dim(θ)`.
    pub samples: DenseMatrix,
    /// Log target (transformed scale) at each stored state.
    pub log_targets: Vec<f64>,
    pub accepted: usize,
    pub proposals: usize,
    /// Evaluations that failed and were treated as rejections.
    pub failed_evaluations: usize,
    pub final_tuning_sd: Vec<f64>,
}

impl ThetaChain {
    pub fn len(&self) -> usize {
        self.samples.rows()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn acceptance_rate(&self) -> f64 {
        if self.proposals == 0 {
            0.0
        } else {
            self.accepted as f64 / self.proposals as f64
        }
    }

    pub fn row(&self, k: usize) -> Vec<f64> {
        self.samples.row(k)
    }

    pub fn column(&self, name: ParamName) -> Option<&[f64]> {
        self.names.iter().position(|&n| n == name).map(|j| self.samples.col(j))
    }
}

/// Random-walk Metropolis state for θ on the transformed scale.
#[derive(Clone, Debug)]
pub struct MetropolisKernel {
    z: Vec<f64>,
    log_target: f64,
    sd: Vec<f64>,
    adaptive: bool,
    adapt_batch: usize,
    adapt_target: f64,
    batch_accepts: Vec<usize>,
    batch_iters: usize,
    batches_done: usize,
    on_error: OnEvalError,
    pub accepted: usize,
    pub proposals: usize,
    pub failed_evaluations: usize,
}

impl MetropolisKernel {
    pub fn new(z0: Vec<f64>, log_target0: f64, tuning_sd: Vec<f64>, options: &SamplerOptions, on_error: OnEvalError) -> Self {
        let d = z0.len();
        Self {
            z: z0,
            log_target: log_target0,
            sd: tuning_sd,
            adaptive: options.adaptive,
            adapt_batch: options.adapt_batch,
            adapt_target: options.adapt_target,
            batch_accepts: vec![0; d],
            batch_iters: 0,
            batches_done: 0,
            on_error,
            accepted: 0,
            proposals: 0,
            failed_evaluations: 0,
        }
    }

    pub fn z(&self) -> &[f64] {
        &self.z
    }

    pub fn log_target(&self) -> f64 {
        self.log_target
    }

    pub fn tuning_sd(&self) -> &[f64] {
        &self.sd
    }

    /// Replaces the stored target, e.g. after a Gibbs block changed the
    /// conditioning variables.
    pub fn set_log_target(&mut self, v: f64) {
        self.log_target = v;
    }

    /// One Metropolis iteration. Returns the number of accepted moves
    /// (0 or 1 for the joint kernel; up to dim(θ) for the adaptive one).
    pub fn step<F>(&mut self, rng: &mut RandomStream, mut target: F) -> Result<usize>
    where
        F: FnMut(&[f64]) -> Result<f64>,
    {
        let d = self.z.len();
        let mut n_acc = 0;
        if self.adaptive {
            for i in 0..d {
                let mut prop = self.z.clone();
                prop[i] += self.sd[i] * rng.standard_normal();
                if self.try_accept(prop, rng, &mut target)? {
                    self.batch_accepts[i] += 1;
                    n_acc += 1;
                }
            }
            self.batch_iters += 1;
            if self.batch_iters == self.adapt_batch {
                self.adapt();
            }
        } else {
            let prop: Vec<f64> = self.z.iter().zip(&self.sd).map(|(z, s)| z + s * rng.standard_normal()).collect();
            if self.try_accept(prop, rng, &mut target)? {
                n_acc = 1;
            }
        }
        Ok(n_acc)
    }

    fn try_accept<F>(&mut self, prop: Vec<f64>, rng: &mut RandomStream, target: &mut F) -> Result<bool>
    where
        F: FnMut(&[f64]) -> Result<f64>,
    {
        self.proposals += 1;
        let lt = match target(&prop) {
            Ok(v) => v,
            Err(e) => match self.on_error {
                OnEvalError::Propagate => return Err(e),
                OnEvalError::Reject => {
                    self.failed_evaluations += 1;
                    rng.uniform();
                    return Ok(false);
                }
            },
        };
        let u = rng.uniform();
        if lt.is_finite() && u.ln() < lt - self.log_target {
            self.z = prop;
            self.log_target = lt;
            self.accepted += 1;
            Ok(true)
        } else {
            Ok(false)
        }
    }

    fn adapt(&mut self) {
        self.batches_done += 1;
        let delta = (1.0 / (self.batches_done as f64).sqrt()).min(0.01);
        for (sd, acc) in self.sd.iter_mut().zip(self.batch_accepts.iter_mut()) {
            let rate = *acc as f64 / self.batch_iters as f64;
            let f = if rate > self.adapt_target { delta.exp() } else { (-delta).exp() };
            *sd *= f;
            *acc = 0;
        }
        self.batch_iters = 0;
    }
}

/// Runs a stand-alone θ chain against `log_lik`, which receives constrained
/// parameters in canonical order. The target on the transformed scale is
/// `log_lik + log prior + log Jacobian`.
pub fn run_theta_chain<F>(
    spec: &ThetaSpec,
    options: &SamplerOptions,
    rng: &mut RandomStream,
    reporter: &mut dyn Reporter,
    on_error: OnEvalError,
    mut log_lik: F,
) -> Result<ThetaChain>
where
    F: FnMut(&[f64]) -> Result<f64>,
{
    options.validate()?;
    let z0 = spec.transform(&spec.start_values())?;
    let mut target = |z: &[f64]| -> Result<f64> { Ok(log_lik(&spec.inverse(z))? + spec.log_prior_with_jacobian(z)) };
    let lt0 = target(&z0).map_err(|e| e.at_iteration(0))?;
    if !lt0.is_finite() {
        return Err(Error::InvalidModel("log target is not finite at the starting values".into()));
    }
    let mut kernel = MetropolisKernel::new(z0, lt0, spec.tuning_sd(), options, on_error);
    let m = options.n_samples;
    let d = spec.dim();
    let mut samples = DenseMatrix::zeros(m, d);
    let mut log_targets = Vec::with_capacity(m);
    let mut tracker = AcceptanceTracker::default();
    for it in 0..m {
        kernel.step(rng, &mut target).map_err(|e| e.at_iteration(it + 1))?;
        let x = spec.inverse(kernel.z());
        for (j, v) in x.into_iter().enumerate() {
            samples[(it, j)] = v;
        }
        log_targets.push(kernel.log_target());
        tracker.report(it + 1, m, options.report_interval, &kernel, reporter);
    }
    Ok(ThetaChain {
        names: spec.names(),
        samples,
        log_targets,
        accepted: kernel.accepted,
        proposals: kernel.proposals,
        failed_evaluations: kernel.failed_evaluations,
        final_tuning_sd: kernel.tuning_sd().to_vec(),
    })
}

/// Emits a [`Progress`] every `interval` iterations and at the end.
#[derive(Default, Clone, Debug)]
pub struct AcceptanceTracker {
    last_accepted: usize,
    last_proposals: usize,
}

impl AcceptanceTracker {
    pub fn report(&mut self, done: usize, total: usize, interval: usize, kernel: &MetropolisKernel, reporter: &mut dyn Reporter) {
        if done % interval != 0 && done != total {
            return;
        }
        let da = kernel.accepted - self.last_accepted;
        let dp = kernel.proposals - self.last_proposals;
        self.last_accepted = kernel.accepted;
        self.last_proposals = kernel.proposals;
        reporter.progress(&Progress {
            done,
            total,
            interval_acceptance: Some(if dp == 0 { 0.0 } else { da as f64 / dp as f64 }),
            overall_acceptance: Some(if kernel.proposals == 0 {
                0.0
            } else {
                kernel.accepted as f64 / kernel.proposals as f64
            }),
            mean_over_blocks: false,
        });
    }
}

/// Emits plain `Sampled: k of N` progress for non-Metropolis loops.
pub fn report_count(done: usize, total: usize, interval: usize, reporter: &mut dyn Reporter) {
    if done % interval == 0 || done == total {
        reporter.progress(&Progress {
            done,
            total,
            interval_acceptance: None,
            overall_acceptance: None,
            mean_over_blocks: false,
        });
    }
}
