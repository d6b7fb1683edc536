use std::path::Path;

use anyhow::{bail, Context, Result};
use fpt_core::analytics::{cumulants_from_moments, fpt_moments, AnalyticsConfig, MomentMethod, MomentSet};
use fpt_core::inference::{mc_study, mle_fit, MleConfig, Param, StudyConfig};
use fpt_core::laguerre::{approximate, match_gamma, GammaWarning, LaguerreApproximant, DEFAULT_ORDER_TOL};
use fpt_core::montecarlo::{empirical_moments, kde, sample_fpt, SimConfig};
use fpt_core::oracle::{fd_moments, laplace_transform, HypEvalConfig};
use fpt_core::{DerivedParams, FptProblem};
use serde_json::json;

use crate::io::{self, emit, num, parse_grid, parse_list, print_out, read_config, sidecar, unix_now, write_file, RunManifest};
use crate::{Cli, Command, Format, MethodArg, ProblemArgs};

const DEFAULT_SEED: u64 = 1;

struct Ctx<'a> {
    cli: &'a Cli,
    name: &'static str,
    started: f64,
}

impl Ctx<'_> {
    fn manifest(&self, config: serde_json::Value, seed: Option<u64>) -> RunManifest {
        RunManifest {
            command: self.name.to_string(),
            args: std::env::args().collect(),
            config,
            version: env!("CARGO_PKG_VERSION"),
            seed,
            precision: self.cli.precision,
            started_unix: self.started,
            finished_unix: unix_now(),
        }
    }
}

pub fn run(cli: &Cli) -> Result<()> {
    let name = match &cli.command {
        Command::Derive { .. } => "derive",
        Command::Moments { .. } => "moments",
        Command::Density { .. } => "density",
        Command::Simulate { .. } => "simulate",
        Command::Compare { .. } => "compare",
        Command::Mle { .. } => "mle",
        Command::Study { .. } => "study",
        Command::Oracle { .. } => "oracle",
    };
    if cli.precision < 64 {
        bail!("--precision must be at least 64 bits");
    }
    let ctx = Ctx { cli, name, started: unix_now() };
    match &cli.command {
        Command::Derive { config } => derive(&ctx, config),
        Command::Moments { problem, order, method, format, out } => moments(&ctx, problem, *order, *method, *format, out.as_deref()),
        Command::Density { config, direction, threshold, nmax, order, grid, out, moments_from } => density(
            &ctx,
            config.as_deref(),
            direction.map(Into::into),
            *threshold,
            *nmax,
            *order,
            grid,
            out.as_deref(),
            moments_from,
        ),
        Command::Simulate { problem, paths, dt, horizon, no_interpolate, out } => {
            simulate(&ctx, problem, *paths, *dt, *horizon, !*no_interpolate, out.as_deref())
        }
        Command::Compare { density, samples, out } => compare(&ctx, density, samples, out.as_deref()),
        Command::Mle { samples, estimate, fixed, init, nmax, max_iter, direction, threshold, out } => mle(
            &ctx,
            samples,
            estimate,
            fixed,
            init.as_deref(),
            *nmax,
            *max_iter,
            direction.map(Into::into),
            *threshold,
            out.as_deref(),
        ),
        Command::Study { problem, sizes, replications, subsets, dt, out } => {
            study(&ctx, problem, sizes, *replications, subsets, *dt, out.as_deref())
        }
        Command::Oracle { problem, lambda_grid, order, out } => oracle(&ctx, problem, lambda_grid, *order, out.as_deref()),
    }
}

fn load_problem(ctx: &Ctx, args: &ProblemArgs) -> Result<(io::ConfigFile, DerivedParams, FptProblem)> {
    let cfg = read_config(&args.config)?;
    let prob = cfg.problem(args.direction.map(Into::into), args.threshold)?;
    let d = DerivedParams::new(&cfg.model, ctx.cli.precision)?;
    Ok((cfg, d, prob))
}

fn derive(ctx: &Ctx, config: &Path) -> Result<()> {
    let cfg = read_config(config)?;
    let d = DerivedParams::new(&cfg.model, ctx.cli.precision)?;
    let v = d.view();
    let out = json!({
        "params": cfg.model,
        "derived": v,
        "regime": {
            "persistent": true,
            "stationary_shape": v.rho,
            "stationary_rate": v.v,
            "stationary_mean": v.rho / v.v,
        },
        "precision": ctx.cli.precision,
    });
    print_out(&(serde_json::to_string_pretty(&out)? + "\n"))
}

fn analytic_moments(d: &DerivedParams, prob: &FptProblem, order: usize, method: MethodArg) -> Result<MomentSet> {
    let acfg = AnalyticsConfig { max_rel_error: None, ..Default::default() };
    Ok(match method {
        MethodArg::Recursion => fpt_moments(d, prob, order, MomentMethod::Recursion, &acfg)?,
        MethodArg::Bell => fpt_moments(d, prob, order, MomentMethod::BellClosedForm, &acfg)?,
        MethodArg::Fd => fd_moments(d, prob, order, &HypEvalConfig { precision: d.precision.max(512), ..Default::default() })?,
    })
}

fn moments(ctx: &Ctx, args: &ProblemArgs, order: usize, method: MethodArg, format: Format, out: Option<&Path>) -> Result<()> {
    let (cfg, d, prob) = load_problem(ctx, args)?;
    if order == 0 {
        bail!("--order must be >= 1");
    }
    let m = analytic_moments(&d, &prob, order, method)?;
    let c = cumulants_from_moments(&m);
    let ratios = c.ratios();
    for k in 1..=order {
        if m.flagged[k] {
            eprintln!("warning: order {k} flagged, relative error estimate {:.3e}", m.rel_error(k));
        }
    }
    let body = match format {
        Format::Csv => {
            let mut s = String::from("# fpt-moments/1\nk,moment,cumulant,ratio,error_estimate,flagged\n");
            for k in 1..=order {
                let ratio = ratios.get(k - 1).map(|r| num(*r)).unwrap_or_default();
                s.push_str(&format!("{k},{},{},{ratio},{},{}\n", num(m.moment(k)), num(c.cumulant(k)), num(m.error_estimate[k]), m.flagged[k]));
            }
            s
        }
        Format::Json => {
            let rows: Vec<_> = (1..=order)
                .map(|k| {
                    json!({
                        "k": k, "moment": m.moment(k), "cumulant": c.cumulant(k),
                        "ratio": ratios.get(k - 1).filter(|r| r.is_finite()), "error_estimate": m.error_estimate[k], "flagged": m.flagged[k],
                    })
                })
                .collect();
            serde_json::to_string_pretty(&json!({ "problem": prob, "degenerate": m.degenerate, "rows": rows }))? + "\n"
        }
    };
    emit(out, &body, || ctx.manifest(json!({ "model": cfg.model, "problem": prob, "order": order }), None))?;
    if ctx.cli.diagnostics {
        let diag = serde_json::to_string_pretty(&json!({ "series": m.diagnostics, "rel_error": (1..=order).map(|k| m.rel_error(k)).collect::<Vec<_>>() }))?;
        match out {
            Some(p) => write_file(&sidecar(p, ".diagnostics.json"), &diag)?,
            None => eprintln!("{diag}"),
        }
    }
    Ok(())
}

#[allow(clippy::too_many_arguments)]
fn density(
    ctx: &Ctx,
    config: Option<&Path>,
    direction: Option<fpt_core::Direction>,
    threshold: Option<f64>,
    nmax: usize,
    order: Option<usize>,
    grid: &str,
    out: Option<&Path>,
    source: &str,
) -> Result<()> {
    let grid = parse_grid(grid)?;
    let (m, echo) = if source == "theory" {
        let path = config.context("--moments-from theory needs a model config")?;
        let cfg = read_config(path)?;
        let prob = cfg.problem(direction, threshold)?;
        let d = DerivedParams::new(&cfg.model, ctx.cli.precision)?;
        let m = analytic_moments(&d, &prob, nmax.max(order.unwrap_or(0)).max(2), MethodArg::Recursion)?;
        (m, json!({ "source": "theory", "model": cfg.model, "problem": prob }))
    } else if let Some(f) = source.strip_prefix("samples:") {
        let s = io::read_samples(Path::new(f))?;
        (empirical_moments(&s, nmax.max(order.unwrap_or(0)).max(2))?, json!({ "source": source, "censored": s.censored }))
    } else if let Some(f) = source.strip_prefix("moments:") {
        (io::read_moments(Path::new(f))?, json!({ "source": source }))
    } else {
        bail!("--moments-from must be theory, samples:FILE or moments:FILE");
    };
    if m.degenerate {
        bail!("passage time is identically zero; there is no density to expand");
    }
    let nmax = nmax.min(m.order());
    let (apx, warnings): (LaguerreApproximant, Vec<GammaWarning>) = match order {
        Some(n) => {
            let (g, w) = match_gamma(&m)?;
            (LaguerreApproximant::build(&m, g, n, true)?, w)
        }
        None => approximate(&m, nmax, DEFAULT_ORDER_TOL)?,
    };
    for w in &warnings {
        eprintln!("warning: {w}");
    }
    if !apx.diagnostics.converged {
        eprintln!("warning: order selection did not converge by n = {}; using n = {}", nmax, apx.order);
    }
    if apx.correction.clip_applied {
        eprintln!("warning: negative mass {:.3e} clipped and renormalized", apx.diagnostics.negative_mass);
    }
    let mut body = String::from("# fpt-density/1\nt,density\n");
    for &t in &grid {
        body.push_str(&format!("{},{}\n", num(t), num(apx.density(t))));
    }
    let meta = json!({
        "alpha": apx.gamma.alpha,
        "beta": apx.gamma.beta,
        "order": apx.order,
        "converged": apx.diagnostics.converged,
        "coefficients": apx.coeffs(),
        "scaled_coefficients": apx.scaled,
        "correction": apx.correction,
        "diagnostics": apx.diagnostics,
        "warnings": warnings.iter().map(|w| w.to_string()).collect::<Vec<_>>(),
        "input": echo,
    });
    match out {
        Some(p) => {
            emit(Some(p), &body, || ctx.manifest(echo.clone(), None))?;
            write_file(&sidecar(p, ".json"), &serde_json::to_string_pretty(&meta)?)?;
        }
        None => {
            print_out(&body)?;
            eprintln!("{}", serde_json::to_string_pretty(&meta)?);
        }
    }
    Ok(())
}

fn simulate(ctx: &Ctx, args: &ProblemArgs, paths: usize, dt: f64, horizon: f64, interpolate: bool, out: Option<&Path>) -> Result<()> {
    let (cfg, d, prob) = load_problem(ctx, args)?;
    let seed = ctx.cli.seed.unwrap_or(DEFAULT_SEED);
    let sim = SimConfig { paths, dt, horizon, seed, problem: prob, interpolate_crossing: interpolate };
    let s = sample_fpt(&d, &sim)?;
    if s.censored > 0 {
        eprintln!("warning: {} of {} paths did not cross by the horizon", s.censored, paths);
    }
    emit(out, &io::write_samples(&s), || ctx.manifest(json!({ "model": cfg.model, "simulation": sim }), Some(seed)))?;
    if ctx.cli.diagnostics {
        eprintln!("{}", json!({ "mean": s.mean, "variance": s.variance, "skewness": s.skewness, "censored": s.censored }));
    }
    Ok(())
}

/// Asymptotic Kolmogorov survival function.
fn kolmogorov_q(x: f64) -> f64 {
    if x < 0.2 {
        return 1.0;
    }
    let mut s = 0.0;
    for k in 1..=100 {
        let kf = k as f64;
        let term = (-2.0 * kf * kf * x * x).exp();
        s += if k % 2 == 1 { term } else { -term };
        if term < 1e-16 {
            break;
        }
    }
    (2.0 * s).clamp(0.0, 1.0)
}

fn trapezoid(t: &[f64], f: &[f64]) -> f64 {
    t.windows(2).zip(f.windows(2)).map(|(tw, fw)| 0.5 * (fw[0] + fw[1]) * (tw[1] - tw[0])).sum()
}

fn compare(ctx: &Ctx, density: &Path, samples: &Path, out: Option<&Path>) -> Result<()> {
    let (t, g) = io::read_density(density)?;
    let s = io::read_samples(samples)?;
    if s.is_empty() {
        bail!("{}: no uncensored samples", samples.display());
    }
    let k = kde(&s, &t)?;
    let diff: Vec<f64> = g.iter().zip(&k.density).map(|(a, b)| (a - b).abs()).collect();
    let l1 = trapezoid(&t, &diff);

    // grid CDF by cumulative trapezoid, linear in between
    let mut cdf = vec![0.0; t.len()];
    for i in 1..t.len() {
        cdf[i] = cdf[i - 1] + 0.5 * (g[i] + g[i - 1]) * (t[i] - t[i - 1]);
    }
    let cdf_at = |x: f64| -> f64 {
        if x <= t[0] {
            return 0.0;
        }
        let i = t.partition_point(|&v| v < x);
        if i >= t.len() {
            return cdf[t.len() - 1];
        }
        let w = (x - t[i - 1]) / (t[i] - t[i - 1]);
        cdf[i - 1] * (1.0 - w) + cdf[i] * w
    };
    let n = s.len() as f64;
    let mut ks: f64 = 0.0;
    for (i, &x) in s.times.iter().enumerate() {
        let f = cdf_at(x);
        ks = ks.max((i as f64 + 1.0) / n - f).max(f - i as f64 / n);
    }
    let sq = n.sqrt();
    let p_value = kolmogorov_q((sq + 0.12 + 0.11 / sq) * ks);

    let em = empirical_moments(&s, 4)?;
    let moment_rows: Vec<_> = (1..=4)
        .map(|j| {
            let tj: Vec<f64> = t.iter().zip(&g).map(|(x, y)| x.powi(j as i32) * y).collect();
            json!({ "k": j, "density": trapezoid(&t, &tj), "samples": em.moment(j) })
        })
        .collect();
    let metrics = json!({
        "l1": l1,
        "ks_statistic": ks,
        "ks_p_value": p_value,
        "density_mass_on_grid": trapezoid(&t, &g),
        "kde_bandwidth": k.bandwidth,
        "samples": s.len(),
        "censored": s.censored,
        "moments": moment_rows,
    });
    let body = serde_json::to_string_pretty(&metrics)? + "\n";
    emit(out, &body, || ctx.manifest(json!({ "density": density, "samples": samples }), None))
}

#[allow(clippy::too_many_arguments)]
fn mle(
    ctx: &Ctx,
    samples: &Path,
    estimate: &str,
    fixed: &Path,
    init: Option<&str>,
    nmax: usize,
    max_iter: usize,
    direction: Option<fpt_core::Direction>,
    threshold: Option<f64>,
    out: Option<&Path>,
) -> Result<()> {
    let cfg = read_config(fixed)?;
    let data = io::read_samples(samples)?;
    let dir = direction.or(cfg.direction).unwrap_or(data.config.problem.direction);
    let thr = threshold.or(cfg.threshold).or(Some(data.config.problem.threshold).filter(|v| v.is_finite()));
    let prob = io::ConfigFile { direction: Some(dir), threshold: thr, ..cfg.clone() }.problem(None, None)?;
    let params: Vec<Param> = estimate.split(',').filter(|s| !s.trim().is_empty()).map(|s| s.trim().parse()).collect::<Result<_, _>>()?;
    let init = match init {
        Some(v) => parse_list(v)?,
        None => params.iter().map(|p| p.get(&cfg.model, &prob)).collect(),
    };
    if init.len() != params.len() {
        bail!("--init has {} values for {} estimated parameters", init.len(), params.len());
    }
    let mut mc = MleConfig::new(params, cfg.model, prob, init);
    mc.n_max = nmax;
    mc.max_iter = max_iter;
    let r = mle_fit(&data, &mc)?;
    if !r.converged {
        eprintln!("warning: stopped after {} iterations without meeting the simplex tolerance", r.iterations);
    }
    let mut v = serde_json::to_value(&r)?;
    if !ctx.cli.diagnostics {
        v.as_object_mut().map(|o| o.remove("trace"));
    }
    let body = serde_json::to_string_pretty(&v)? + "\n";
    emit(out, &body, || ctx.manifest(json!({ "samples": samples, "fixed": cfg, "mle": mc }), ctx.cli.seed))
}

fn study(ctx: &Ctx, args: &ProblemArgs, sizes: &str, replications: usize, subsets: &str, dt: f64, out: Option<&Path>) -> Result<()> {
    let (cfg, _d, prob) = load_problem(ctx, args)?;
    let ns: Vec<usize> = sizes.split(',').map(|s| s.trim().parse()).collect::<Result<_, _>>().context("parsing --sizes")?;
    let subsets: Vec<Vec<Param>> = subsets
        .split(';')
        .map(|g| g.split(',').map(|p| p.trim().parse()).collect::<Result<Vec<Param>, _>>())
        .collect::<Result<_, _>>()?;
    let seed = ctx.cli.seed.unwrap_or(DEFAULT_SEED);
    let scfg = StudyConfig { seed, dt, ..Default::default() };
    let report = mc_study(&cfg.model, &prob, &ns, replications, &subsets, &scfg)?;
    emit(out, &report.to_csv(), || ctx.manifest(json!({ "model": cfg.model, "problem": prob, "study": scfg }), Some(seed)))?;
    if let Some(p) = out {
        write_file(&sidecar(p, ".fits.json"), &serde_json::to_string_pretty(&report.fits)?)?;
    }
    Ok(())
}

fn oracle(ctx: &Ctx, args: &ProblemArgs, grid: &str, order: usize, out: Option<&Path>) -> Result<()> {
    let (cfg, d, prob) = load_problem(ctx, args)?;
    let lambdas = parse_grid(grid)?;
    let m = analytic_moments(&d, &prob, order.max(1), MethodArg::Recursion)?;
    let hcfg = HypEvalConfig { precision: ctx.cli.precision.max(512), series_tol: 1e-40, ..Default::default() };
    let mut body = String::from("# fpt-oracle/1\nlambda,direct,series,abs_diff,series_error\n");
    for &lam in &lambdas {
        let direct = laplace_transform(&d, &prob, lam, &hcfg)?;
        let (series, err) = m.transform_series(lam);
        body.push_str(&format!("{},{},{},{},{}\n", num(lam), num(direct), num(series), num((direct - series).abs()), num(err)));
    }
    emit(out, &body, || ctx.manifest(json!({ "model": cfg.model, "problem": prob, "order": order }), None))
}
