//! Command pipelines.

use std::path::{Path, PathBuf};
use std::time::Instant;

use geomc_core::covariance::CoordSet;
use geomc_core::dynamic::{fit_dynamic, DynamicModel, DynamicOptions, DynamicPriors, DynamicStart, InverseWishart};
use geomc_core::full_rank::fit_full_rank;
use geomc_core::lowrank::{fit_lowrank_with, recover_w_lowrank, LowRankFit, Parametrization};
use geomc_core::mcmc::{Progress, Reporter, ThetaChain};
use geomc_core::model::{build_knots, BetaPrior, KnotKind, KnotSpec, ScalarPrior, SpatialDataset, ThetaSpec};
use geomc_core::predict::{predict, FitKind, PosteriorDraws, PredictMode, PredictionRequest};
use geomc_core::recover::{recover_full_rank, Retention, WConditioning};
use geomc_core::{DenseMatrix, RandomStream};

use crate::config::{matrix, parametrization_name, parse_parametrization, LoadedConfig, RunConfig};
use crate::error::{CliError, CliResult};
use crate::load::{beta_names, load_coords, load_dynamic, load_sites, load_spatial};
use crate::store::{read_manifest, read_matrix, sha256_hex, Manifest, Store};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Command {
    FitFull,
    FitPp,
    Recover,
    Predict,
    FitDynamic,
}

impl Command {
    pub fn name(&self) -> &'static str {
        match self {
            Command::FitFull => "fit-full",
            Command::FitPp => "fit-pp",
            Command::Recover => "recover",
            Command::Predict => "predict",
            Command::FitDynamic => "fit-dynamic",
        }
    }
}

#[derive(Clone, Debug)]
pub struct RunArgs {
    pub command: Command,
    pub config: PathBuf,
    pub seed: Option<u64>,
    pub out: Option<PathBuf>,
    pub quiet: bool,
}

/// Prints banners and progress to stdout. Lines queued in `after_banner`
/// go out right after the sample-count line, where the prior echo belongs.
struct Console {
    quiet: bool,
    after_banner: Vec<String>,
}

impl Console {
    fn say(&self, line: &str) {
        if !self.quiet {
            println!("{line}");
        }
    }
}

impl Reporter for Console {
    fn message(&mut self, line: &str) {
        self.say(line);
        if line.starts_with("Number of MCMC samples") {
            for l in std::mem::take(&mut self.after_banner) {
                self.say(&l);
            }
        }
    }

    fn progress(&mut self, p: &Progress) {
        for l in p.lines() {
            self.say(&l);
        }
    }
}

fn pipeline<T>(r: geomc_core::Result<T>) -> CliResult<T> {
    r.map_err(CliError::from_pipeline)
}

fn config_err<T>(msg: impl Into<String>) -> CliResult<T> {
    Err(CliError::Config(msg.into()))
}

fn prior_line(name: &str, p: &ScalarPrior) -> String {
    match *p {
        ScalarPrior::InverseGamma { shape, scale } => {
            format!("\t{name} IG hyperpriors shape={shape:.5} and scale={scale:.5}")
        }
        ScalarPrior::Uniform { a, b } => format!("\t{name} Unif hyperpriors a={a:.5} and b={b:.5}"),
    }
}

fn tab_row(v: &[f64]) -> String {
    v.iter().fold(String::from("\t"), |s, x| s + &format!("{x:.3}\t"))
}

fn prior_echo(spec: &ThetaSpec, beta: &BetaPrior) -> Vec<String> {
    let mut out = vec!["Priors and hyperpriors:".to_string()];
    match beta {
        BetaPrior::Flat => out.push("\tbeta flat.".into()),
        BetaPrior::Normal(n) => {
            out.push("\tbeta normal:".into());
            out.push(format!("\tmu:{}", tab_row(n.mu())));
            out.push("\tcov:".into());
            for i in 0..n.mu().len() {
                out.push(tab_row(&n.sigma().row(i)));
            }
        }
    }
    for e in spec.entries() {
        out.push(prior_line(e.name.label(), &e.prior));
    }
    out
}

fn theta_header(spec: &ThetaSpec) -> Vec<String> {
    spec.names().iter().map(|n| n.label().to_string()).collect()
}

fn indexed(prefix: &str, n: usize) -> Vec<String> {
    (1..=n).map(|i| format!("{prefix}{i}")).collect()
}

fn coords_matrix(c: &CoordSet) -> DenseMatrix {
    DenseMatrix::from_fn(c.len(), 2, |i, j| c.points()[i][j])
}

fn rows(m: &DenseMatrix, idx: &[usize]) -> DenseMatrix {
    DenseMatrix::from_fn(idx.len(), m.cols(), |i, j| m[(idx[i], j)])
}

/// Type-7 sample quantile.
fn quantile(xs: &[f64], q: f64) -> f64 {
    let mut v = xs.to_vec();
    v.sort_by(|a, b| a.total_cmp(b));
    let h = (v.len() - 1) as f64 * q;
    let (lo, hi) = (h.floor() as usize, h.ceil() as usize);
    v[lo] + (h - lo as f64) * (v[hi] - v[lo])
}

struct Ctx<'a> {
    lc: &'a LoadedConfig,
    cfg: &'a RunConfig,
    seed: Option<u64>,
    console: Console,
    store: Store,
}

impl Ctx<'_> {
    fn data(&self) -> CliResult<SpatialDataset> {
        let sec = self.cfg.data()?;
        load_spatial(&self.lc.resolve(&sec.path), sec)
    }

    fn beta_header(&self) -> CliResult<Vec<String>> {
        let sec = self.cfg.data()?;
        Ok(beta_names(sec.intercept, &sec.covariates))
    }

    fn coord_header(&self) -> CliResult<Vec<String>> {
        Ok(self.cfg.data()?.coords.to_vec())
    }
}

/// Runs one command; returns the manifest path.
pub fn run(args: &RunArgs) -> CliResult<PathBuf> {
    let lc = LoadedConfig::read(&args.config)?;
    let cfg = &lc.config;
    let out = match (&args.out, &cfg.output.dir) {
        (Some(o), _) => o.clone(),
        (None, Some(d)) => lc.resolve(d),
        (None, None) => return config_err("no output directory: pass --out or set [output] dir"),
    };
    let t0 = Instant::now();
    let mut ctx = Ctx {
        lc: &lc,
        cfg,
        seed: args.seed,
        console: Console {
            quiet: args.quiet,
            after_banner: Vec::new(),
        },
        store: Store::create(&out)?,
    };
    let mut manifest = match args.command {
        Command::FitFull => fit_full(&mut ctx)?,
        Command::FitPp => fit_pp(&mut ctx)?,
        Command::Recover => recover(&mut ctx)?,
        Command::Predict => run_predict(&mut ctx)?,
        Command::FitDynamic => fit_dyn(&mut ctx)?,
    };
    manifest.command = args.command.name().into();
    manifest.config_sha256 = sha256_hex(&lc.raw);
    manifest.wall_time_secs = t0.elapsed().as_secs_f64();
    ctx.store.finish(manifest)
}

fn fit_full(ctx: &mut Ctx) -> CliResult<Manifest> {
    let data = ctx.data()?;
    let spec = ctx.cfg.theta_spec()?;
    let prior = ctx.cfg.beta_prior(data.p())?;
    let opts = ctx.cfg.sampler_options(ctx.seed)?;
    ctx.console.after_banner = prior_echo(&spec, &prior);
    let chain = pipeline(fit_full_rank(&data, &spec, &prior, &opts, &mut ctx.console))?;
    ctx.store.write("theta.csv", &theta_header(&spec), &chain.samples)?;
    Ok(Manifest {
        kind: "full-rank".into(),
        seed: opts.seed,
        n_samples: opts.n_samples,
        acceptance: [("theta".to_string(), chain.acceptance_rate())].into(),
        ..Manifest::default()
    })
}

fn knots_for(ctx: &Ctx, data: &SpatialDataset) -> CliResult<(CoordSet, bool, Parametrization)> {
    let ks = ctx.cfg.knots()?;
    let knots = match (&ks.grid, &ks.path) {
        (Some(_), Some(_)) => return config_err("give either knots.grid or knots.path, not both"),
        (Some([nx, ny, extend]), None) => {
            let count = |v: f64| -> CliResult<usize> {
                if v >= 1.0 && v.fract() == 0.0 {
                    Ok(v as usize)
                } else {
                    config_err(format!("knot grid size must be a positive integer, got {v}"))
                }
            };
            let spec = KnotSpec {
                kind: KnotKind::Grid {
                    nx: count(*nx)?,
                    ny: count(*ny)?,
                    extend: *extend,
                },
                modified: ks.modified,
            };
            pipeline(build_knots(&spec, data.coords()))?
        }
        (None, Some(p)) => load_coords(&ctx.lc.resolve(p), &ctx.cfg.data()?.coords)?,
        (None, None) => return config_err("[knots] needs grid or path"),
    };
    Ok((knots, ks.modified, ks.parametrization()?))
}

fn fit_pp(ctx: &mut Ctx) -> CliResult<Manifest> {
    let data = ctx.data()?;
    let spec = ctx.cfg.theta_spec()?;
    let prior = ctx.cfg.beta_prior(data.p())?;
    let opts = ctx.cfg.sampler_options(ctx.seed)?;
    let (knots, modified, par) = knots_for(ctx, &data)?;
    ctx.console.after_banner = prior_echo(&spec, &prior);
    let mut rng = RandomStream::new(opts.seed);
    let fit = pipeline(fit_lowrank_with(&data, &spec, &knots, modified, par, &prior, &opts, &mut rng, &mut ctx.console))?;
    ctx.store.write("theta.csv", &theta_header(&spec), &fit.theta.samples)?;
    ctx.store.write("beta.csv", &ctx.beta_header()?, &fit.beta)?;
    ctx.store.write("knots.csv", &ctx.coord_header()?, &coords_matrix(&knots))?;
    Ok(Manifest {
        kind: "low-rank".into(),
        seed: opts.seed,
        n_samples: opts.n_samples,
        acceptance: [("theta".to_string(), fit.theta.acceptance_rate())].into(),
        modified: Some(modified),
        parametrization: Some(parametrization_name(par).into()),
        ..Manifest::default()
    })
}

/// θ draws from a previous run, checked against the configured parameters.
fn read_chain(dir: &Path, spec: &ThetaSpec) -> CliResult<ThetaChain> {
    let (header, samples) = read_matrix(&dir.join("theta.csv"))?;
    if header != theta_header(spec) {
        return config_err(format!(
            "theta.csv columns {header:?} do not match the configured parameters {:?}",
            theta_header(spec)
        ));
    }
    let m = samples.rows();
    Ok(ThetaChain {
        names: spec.names(),
        samples,
        log_targets: vec![0.0; m],
        accepted: 0,
        proposals: 0,
        failed_evaluations: 0,
        final_tuning_sd: spec.tuning_sd(),
    })
}

fn read_beta(dir: &Path, m: usize, p: usize) -> CliResult<DenseMatrix> {
    let path = dir.join("beta.csv");
    if !path.exists() {
        return config_err(format!(
            "{} has no beta.csv; predict from a full-rank fit through a recover run",
            dir.display()
        ));
    }
    let (_, beta) = read_matrix(&path)?;
    if beta.rows() != m || beta.cols() != p {
        return Err(CliError::Data(format!(
            "beta.csv is {}x{}, expected {m}x{p}",
            beta.rows(),
            beta.cols()
        )));
    }
    Ok(beta)
}

fn low_rank_setup(dir: &Path, man: &Manifest, coord_names: &[String; 2]) -> CliResult<(CoordSet, bool, Parametrization)> {
    let knots = load_coords(&dir.join("knots.csv"), coord_names)?;
    let modified = man.modified.unwrap_or(false);
    let par = parse_parametrization(man.parametrization.as_deref().unwrap_or("knot-precision"))?;
    Ok((knots, modified, par))
}

fn recover(ctx: &mut Ctx) -> CliResult<Manifest> {
    let rs = ctx.cfg.recover.as_ref().map_or_else(|| config_err("missing [recover] section"), Ok)?;
    let input = ctx.lc.resolve(&rs.input);
    let man = read_manifest(&input)?;
    let data = ctx.data()?;
    let spec = ctx.cfg.theta_spec()?;
    let prior = ctx.cfg.beta_prior(data.p())?;
    let opts = ctx.cfg.sampler_options(ctx.seed)?;
    let chain = read_chain(&input, &spec)?;
    let m = chain.len();
    let start = rs.start.unwrap_or_else(|| opts.burn_in_start().max(1));
    let retention = Retention::new(start, rs.thin);
    let idx = pipeline(retention.indices(m))?;
    let mut rng = RandomStream::new(opts.seed);
    let beta_header = ctx.beta_header()?;
    let out = Manifest {
        kind: man.kind.clone(),
        seed: opts.seed,
        n_samples: idx.len(),
        modified: man.modified,
        parametrization: man.parametrization.clone(),
        source: Some(input.display().to_string()),
        retained: Some((start, rs.thin)),
        ..Manifest::default()
    };
    match man.kind.as_str() {
        "full-rank" => {
            let cond = match (rs.w, rs.w_conditioning.as_deref()) {
                (false, _) => None,
                (true, None) => Some(WConditioning::default_for(&prior)),
                (true, Some("drawn-beta")) => Some(WConditioning::DrawnBeta),
                (true, Some("prior-mean")) => Some(WConditioning::PriorMean),
                (true, Some(other)) => return config_err(format!("unknown w_conditioning '{other}'")),
            };
            let rec = pipeline(recover_full_rank(
                &chain,
                &data,
                &spec,
                &prior,
                retention,
                cond,
                &mut rng,
                opts.report_interval,
                &mut ctx.console,
            ))?;
            ctx.store.write("theta.csv", &theta_header(&spec), &rec.theta)?;
            ctx.store.write("beta.csv", &beta_header, &rec.beta)?;
            if let Some(w) = &rec.w {
                ctx.store.write("w.csv", &indexed("w.s", data.n()), w)?;
            }
        }
        "low-rank" => {
            let (knots, modified, parametrization) = low_rank_setup(&input, &man, &ctx.cfg.data()?.coords)?;
            let beta = read_beta(&input, m, data.p())?;
            if rs.w {
                let fit = LowRankFit {
                    theta: chain,
                    beta,
                    knots: knots.clone(),
                    modified,
                    parametrization,
                };
                let rec = pipeline(recover_w_lowrank(&fit, &data, &spec, retention, &mut rng, opts.report_interval, &mut ctx.console))?;
                ctx.store.write("theta.csv", &theta_header(&spec), &rec.theta)?;
                ctx.store.write("beta.csv", &beta_header, &rec.beta)?;
                if let Some(w) = &rec.w {
                    ctx.store.write("w.csv", &indexed("w.k", knots.len()), w)?;
                }
                if let Some(w) = &rec.w_projected {
                    ctx.store.write("w_tilde.csv", &indexed("w.s", data.n()), w)?;
                }
            } else {
                ctx.store.write("theta.csv", &theta_header(&spec), &rows(&chain.samples, &idx))?;
                ctx.store.write("beta.csv", &beta_header, &rows(&beta, &idx))?;
            }
            ctx.store.write("knots.csv", &ctx.coord_header()?, &coords_matrix(&knots))?;
        }
        other => return config_err(format!("cannot recover from a '{other}' run")),
    }
    Ok(out)
}

fn run_predict(ctx: &mut Ctx) -> CliResult<Manifest> {
    let ps = ctx.cfg.predict.as_ref().map_or_else(|| config_err("missing [predict] section"), Ok)?;
    let input = ctx.lc.resolve(&ps.input);
    let man = read_manifest(&input)?;
    let data = ctx.data()?;
    let spec = ctx.cfg.theta_spec()?;
    let opts = ctx.cfg.sampler_options(ctx.seed)?;
    let chain = read_chain(&input, &spec)?;
    let m = chain.len();
    let beta = read_beta(&input, m, data.p())?;
    let (new_coords, x0, y_obs) = load_sites(&ctx.lc.resolve(&ps.path), ctx.cfg.data()?)?;
    let mode = match ps.mode.as_deref() {
        None | Some("conditional") => PredictMode::Conditional,
        Some("alpha") => PredictMode::ViaAlpha,
        Some(other) => return config_err(format!("unknown predict mode '{other}'")),
    };
    let effects = if mode == PredictMode::ViaAlpha {
        let path = input.join("w.csv");
        if !path.exists() {
            return config_err("alpha-route prediction needs a low-rank recover run with w = true");
        }
        Some(read_matrix(&path)?.1)
    } else {
        None
    };
    let low_rank = match man.kind.as_str() {
        "full-rank" => None,
        "low-rank" => Some(low_rank_setup(&input, &man, &ctx.cfg.data()?.coords)?),
        other => return config_err(format!("cannot predict from a '{other}' run")),
    };
    let kind = match &low_rank {
        None => FitKind::FullRank,
        Some((knots, modified, parametrization)) => FitKind::LowRank {
            knots,
            modified: *modified,
            parametrization: *parametrization,
        },
    };
    let t = new_coords.len();
    let retention = Retention::new(ps.start, ps.thin);
    let idx = pipeline(retention.indices(m))?;
    let request = PredictionRequest {
        new_coords,
        x0,
        retention,
        mode,
        joint: ps.joint,
        latent: ps.latent,
    };
    let draws = PosteriorDraws {
        theta: &chain.samples,
        beta: &beta,
        knot_effects: effects.as_ref(),
    };
    let mut rng = RandomStream::new(opts.seed);
    let y0 = pipeline(predict(draws, &data, &spec, kind, &request, &mut rng, opts.report_interval, &mut ctx.console))?;
    let header: Vec<String> = idx.iter().map(|k| format!("sample.{}", k + 1)).collect();
    ctx.store.write("y0.csv", &header, &y0)?;
    let coverage_95 = y_obs.filter(|_| !ps.latent).map(|y| {
        let hits = (0..t)
            .filter(|&j| {
                let row = y0.row(j);
                let (lo, hi) = (quantile(&row, 0.025), quantile(&row, 0.975));
                lo <= y[j] && y[j] <= hi
            })
            .count();
        let c = hits as f64 / t as f64;
        ctx.console.say(&format!("Empirical 95% predictive interval coverage: {:.2}% ({hits} of {t})", 100.0 * c));
        c
    });
    Ok(Manifest {
        kind: man.kind.clone(),
        seed: opts.seed,
        n_samples: idx.len(),
        modified: man.modified,
        parametrization: man.parametrization.clone(),
        source: Some(input.display().to_string()),
        retained: Some((ps.start, ps.thin)),
        coverage_95,
        ..Manifest::default()
    })
}

fn fit_dyn(ctx: &mut Ctx) -> CliResult<Manifest> {
    let cfg = ctx.cfg;
    let ds = cfg.dynamic.as_ref().map_or_else(|| config_err("missing [dynamic] section"), Ok)?;
    let data = load_dynamic(&ctx.lc.resolve(&ds.path), ds)?;
    let (p, n_t) = (data.p(), data.n_t());
    let pr = &cfg.priors;
    let b0 = pr.beta0_norm.as_ref().map_or_else(|| config_err("missing prior beta.0.Norm"), Ok)?;
    let iw = pr.sigma_eta_iw.as_ref().map_or_else(|| config_err("missing prior sigma.eta.IW"), Ok)?;
    let eta_scale = matrix(&iw.scale, "sigma.eta.IW scale")?;
    let sigma_eta = InverseWishart::new(iw.df, eta_scale.clone()).map_err(|e| CliError::Config(e.to_string()))?;
    let st = &cfg.starting;
    let need = |v: Option<f64>, name: &str| v.map_or_else(|| config_err(format!("missing starting value for {name}")), Ok);
    let beta_start = st.beta.clone().unwrap_or_else(|| vec![0.0; p]);
    if beta_start.len() != p {
        return config_err(format!("starting beta has {} entries for {p} coefficients", beta_start.len()));
    }
    let phi_var = cfg.tuning.phi.map_or_else(|| config_err("missing tuning value for phi"), Ok)?;
    if !(phi_var > 0.0) {
        return config_err("tuning variance for phi must be positive");
    }
    let model = DynamicModel {
        family: cfg.family()?,
        nu: cfg.fixed_nu(),
        priors: DynamicPriors {
            m0: b0.mean.clone(),
            sigma0: matrix(&b0.cov, "beta.0.Norm cov")?,
            sigma_eta,
            sigma_sq: vec![cfg.sigma_sq_prior()?; n_t],
            tau_sq: vec![cfg.tau_sq_prior()?; n_t],
            phi: vec![cfg.phi_prior()?; n_t],
        },
        start: DynamicStart {
            beta: DenseMatrix::from_fn(p, n_t, |j, _| beta_start[j]),
            sigma_sq: vec![need(st.sigma_sq, "sigma.sq")?; n_t],
            tau_sq: vec![need(st.tau_sq, "tau.sq")?; n_t],
            phi: vec![need(st.phi, "phi")?; n_t],
            sigma_eta: match &st.sigma_eta {
                Some(rows) => matrix(rows, "starting sigma.eta")?,
                None => eta_scale,
            },
        },
        phi_tuning_sd: vec![phi_var.sqrt(); n_t],
    };
    let options = DynamicOptions {
        sampler: cfg.sampler_options(ctx.seed)?,
        get_fitted: ds.get_fitted,
        keep_u: ds.keep_u,
    };
    let s = pipeline(fit_dynamic(&data, &model, &options, &mut ctx.console))?;
    let store = &mut ctx.store;
    store.write("beta.csv", &s.beta_names(), &s.beta)?;
    store.write("beta0.csv", &s.beta0_names(), &s.beta0)?;
    store.write("theta.csv", &s.theta_names(), &s.theta)?;
    store.write("sigma_eta.csv", &s.sigma_eta_names(), &s.sigma_eta)?;
    if let Some(y) = &s.y_missing {
        store.write("y_missing.csv", &s.missing_names(), y)?;
    }
    if let Some(f) = &s.fitted {
        store.write("fitted.csv", &s.cell_names(), f)?;
    }
    if let Some(u) = &s.u {
        store.write("u.csv", &s.cell_names(), u)?;
    }
    let mut acceptance: std::collections::BTreeMap<String, f64> =
        s.phi_acceptance.iter().enumerate().map(|(t, &r)| (format!("phi.t{}", t + 1), r)).collect();
    acceptance.insert("phi.mean".into(), s.phi_acceptance.iter().sum::<f64>() / n_t as f64);
    Ok(Manifest {
        kind: "dynamic".into(),
        seed: options.sampler.seed,
        n_samples: s.len(),
        acceptance,
        ..Manifest::default()
    })
}
