//! Subcommand implementations.

use std::fmt::Write as _;
use std::fs;
use std::sync::Arc;

use anyhow::{anyhow, Context, Result};
use rgp_core::conc::{self, BudgetRow, DesignOptions, McPlan};
use rgp_core::kest::{build_psi, FlatTopKernel, FlatTopSpec, SmootherConfig};
use rgp_core::math::{prop2_check, QuadratureGrid, RkhsElement, SeKernel};
use rgp_core::par::Exec;
use rgp_core::posterior::PosteriorModel;
use rgp_core::rates::{self, Column, RatePlan, RateTable, Schedule};
use rgp_core::{seed, synth};

use crate::config::ExperimentConfig;
use crate::output::{OutDir, Stamp};
use crate::svg;
use crate::Common;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Kind {
    Rates,
    Concentration,
    KernelCheck,
    RkhsCheck,
    Simulate,
}

/// Process exit statuses.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Status {
    Other = 1,
    Config = 2,
    Numerical = 3,
    Check = 4,
}

#[derive(Debug)]
pub struct Failure {
    pub status: Status,
    pub error: anyhow::Error,
}

impl Failure {
    fn new(status: Status, error: anyhow::Error) -> Self {
        Self { status, error }
    }
}

/// Classifies an error from the computation stage.
fn classify(error: anyhow::Error) -> Failure {
    let status = match error.downcast_ref::<rgp_core::Error>() {
        Some(rgp_core::Error::Input(_)) => Status::Config,
        Some(_) => Status::Numerical,
        None => Status::Other,
    };
    Failure::new(status, error)
}

/// Everything resolved before any computation starts.
struct Ctx {
    cfg: ExperimentConfig,
    stamp: Stamp,
    dry_run: bool,
    check: bool,
}

pub fn run(kind: Kind, args: &Common) -> Result<(), Failure> {
    let text = fs::read_to_string(&args.config)
        .with_context(|| format!("cannot read {}", args.config.display()))
        .map_err(|e| Failure::new(Status::Config, e))?;
    let mut cfg = ExperimentConfig::parse(&text).map_err(|e| Failure::new(Status::Config, e))?;
    if let Some(s) = args.seed {
        cfg.seed = Some(s);
    }
    if let Some(o) = &args.out {
        cfg.out = Some(o.clone());
    }
    if let Some(w) = args.workers {
        cfg.workers = Some(w);
    }
    let workers = cfg.workers.unwrap_or(0);
    if workers > 0 {
        // a second build in the same process is harmless
        let _ = rayon::ThreadPoolBuilder::new().num_threads(workers).build_global();
    }
    let ctx = Ctx {
        stamp: Stamp::new(&text, cfg.seed()),
        cfg,
        dry_run: args.dry_run,
        check: args.check,
    };
    let outcome = match kind {
        Kind::Rates => rates_cmd(&ctx),
        Kind::Concentration => concentration_cmd(&ctx),
        Kind::KernelCheck => kernel_cmd(&ctx),
        Kind::RkhsCheck => rkhs_cmd(&ctx),
        Kind::Simulate => simulate_cmd(&ctx),
    }?;
    if ctx.check && !outcome.passed {
        return Err(Failure::new(Status::Check, anyhow!("acceptance check failed: {}", outcome.summary)));
    }
    println!("{}", outcome.summary);
    Ok(())
}

struct Outcome {
    passed: bool,
    summary: String,
}

fn config_err(e: anyhow::Error) -> Failure {
    Failure::new(Status::Config, e)
}

fn dry(ctx: &Ctx, what: String) -> Result<Outcome, Failure> {
    let resolved = toml::to_string(&ctx.cfg).unwrap_or_default();
    Ok(Outcome {
        passed: true,
        summary: format!("dry run ({})\n{what}\n{resolved}", ctx.stamp.line()),
    })
}

fn out_dir(ctx: &Ctx) -> Result<OutDir, Failure> {
    let root = ctx.cfg.out_dir().map_err(config_err)?;
    OutDir::create(&root, ctx.stamp.clone()).map_err(|e| Failure::new(Status::Other, e))
}

fn io<T>(r: Result<T>) -> Result<T, Failure> {
    r.map_err(|e| Failure::new(Status::Other, e))
}

fn kernel_for(d: usize) -> Result<Arc<FlatTopKernel>, Failure> {
    build_psi(&FlatTopSpec::with_profile(Default::default(), d))
        .map(Arc::new)
        .map_err(|e| classify(e.into()))
}

fn rates_cmd(ctx: &Ctx) -> Result<Outcome, Failure> {
    let cfg = &ctx.cfg;
    let schedule = cfg.schedule().map_err(config_err)?;
    let p = cfg.plan().map_err(config_err)?;
    let plan = RatePlan {
        n_grid: p.n.clone(),
        reps: p.reps,
        m: p.m,
        s: p.s,
        truth: cfg.truth_spec(&schedule).map_err(config_err)?,
        q: cfg.density(schedule.d).map_err(config_err)?,
        base_seed: cfg.seed(),
        grid_per_axis: p.grid,
        noise_sd: p.noise_sd,
        fit_noise_var: p.fit_noise_var,
        record_timings: p.record_timings,
        exec: Exec::Parallel,
    };
    plan.validate(&schedule).map_err(|e| config_err(e.into()))?;
    if p.calibrate_m && p.s == 0 {
        return Err(config_err(anyhow!("calibrate_m needs posterior draws (s > 0)")));
    }
    let check = cfg.check.clone().unwrap_or_default();
    let target = check.slope_target.unwrap_or(-schedule.predicted_exponent());
    if ctx.dry_run {
        let mut s = String::new();
        for &n in &plan.n_grid {
            let nf = n as f64;
            let _ = writeln!(
                s,
                "n={n} a_n={:.6} eps_n={:.6} eps_n_nolog={:.6}",
                schedule.a_n(nf),
                schedule.eps_n(nf),
                schedule.eps_n_nolog(nf)
            );
        }
        let _ = write!(
            s,
            "cells={} predicted_slope={:.6} t1_min={:.6}",
            plan.n_grid.len() * plan.reps,
            -schedule.predicted_exponent(),
            schedule.t1_min()
        );
        return dry(ctx, s);
    }
    let out = out_dir(ctx)?;
    let mut table = rates::run_rate_experiment(&schedule, &plan).map_err(|e| classify(e.into()))?;
    if p.calibrate_m {
        let m = rates::calibrate_m(&table).map_err(|e| classify(e.into()))?;
        table = table.with_m(m);
    }
    write_rates(&out, &schedule, &table, target, check.slope_tol)?;

    let fit = rates::fit_rate(&table, Column::PostMean).map_err(|e| classify(e.into()))?;
    let slope_ok = (fit.slope - target).abs() <= check.slope_tol;
    let mut summary = format!(
        "rates: slope {:.4} (se {:.4}), target {:.4} ± {:.2}: {}",
        fit.slope,
        fit.slope_se,
        target,
        check.slope_tol,
        verdict(slope_ok)
    );
    let mut passed = slope_ok;
    if p.s > 0 {
        let fr = table.medians(Column::Contraction);
        let (first, last) = (fr[0].1, fr[fr.len() - 1].1);
        let _ = write!(summary, "\ncontraction at M={:.4}: {first:.3} -> {last:.3}", table.m);
        if let Some(drop) = check.contraction_drop {
            let ok = first - last >= drop;
            passed &= ok;
            let _ = write!(summary, " (required drop {drop}): {}", verdict(ok));
        }
    }
    if !table.failures.is_empty() {
        let _ = write!(summary, "\n{} cells failed (see failures.csv)", table.failures.len());
    }
    Ok(Outcome { passed, summary })
}

fn verdict(ok: bool) -> &'static str {
    if ok {
        "PASS"
    } else {
        "FAIL"
    }
}

fn write_rates(out: &OutDir, schedule: &Schedule, table: &RateTable, target: f64, tol: f64) -> Result<(), Failure> {
    let mut body = Vec::new();
    io(table
        .write_csv(&mut body, &[format!("m={:e}", table.m)])
        .context("cannot format rates table"))?;
    io(out.csv("rates.csv", &body))?;

    let mut fits = String::from("column,slope,intercept,slope_se,predicted,target,tol,ok\n");
    let mut series = Vec::new();
    let columns: &[Column] = if table.rows.iter().any(|r| !r.distances.is_empty()) {
        &[Column::PostMean, Column::PostMedian]
    } else {
        &[Column::PostMean]
    };
    let mut plotted = Vec::new();
    for &c in columns {
        let fit = rates::fit_rate(table, c).map_err(|e| classify(e.into()))?;
        let ok = (fit.slope - target).abs() <= tol;
        let _ = writeln!(
            fits,
            "{},{:.12e},{:.12e},{:.12e},{:.12e},{:.12e},{},{}",
            c.name(),
            fit.slope,
            fit.intercept,
            fit.slope_se,
            -schedule.predicted_exponent(),
            target,
            tol,
            ok
        );
        let pts: Vec<(f64, f64)> = fit.ns.iter().zip(&fit.medians).map(|(&n, &m)| (n as f64, m)).collect();
        plotted.push((c, pts, fit.slope, fit.intercept));
    }
    io(out.csv("fit.csv", fits.as_bytes()))?;

    let mut medians = String::from("n,median_l1_postmean,median_l1_postmedian,median_contraction_fraction\n");
    let (a, b, c) = (
        table.medians(Column::PostMean),
        table.medians(Column::PostMedian),
        table.medians(Column::Contraction),
    );
    for i in 0..a.len() {
        let _ = writeln!(medians, "{},{:.12e},{:.12e},{:.12e}", a[i].0, a[i].1, b[i].1, c[i].1);
    }
    io(out.csv("medians.csv", medians.as_bytes()))?;

    if !table.failures.is_empty() {
        let mut f = String::from("n,rep,seed,error\n");
        for x in &table.failures {
            let _ = writeln!(f, "{},{},{},\"{}\"", x.n, x.rep, x.seed, x.error.to_string().replace('"', "'"));
        }
        io(out.csv("failures.csv", f.as_bytes()))?;
    }

    for (c, pts, slope, intercept) in &plotted {
        series.push(svg::Series {
            label: c.name(),
            points: pts,
            fit: Some((*slope, *intercept)),
        });
    }
    let title = format!(
        "alpha={} beta={} d={}: predicted slope {:.3}",
        schedule.alpha,
        schedule.prior_smoothness(),
        schedule.d,
        -schedule.predicted_exponent()
    );
    io(out.raw("rates.svg", svg::loglog(&title, &out.stamp().line(), &series).as_bytes()))?;
    Ok(())
}

fn concentration_cmd(ctx: &Ctx) -> Result<Outcome, Failure> {
    let cfg = &ctx.cfg;
    let schedule = cfg.schedule().map_err(config_err)?;
    let c = cfg.concentration.as_ref().context("missing [concentration] table").map_err(config_err)?;
    let q = cfg.density(schedule.d).map_err(config_err)?;
    if c.n.is_empty() || c.n.contains(&0) {
        return Err(config_err(anyhow!("concentration needs positive n values")));
    }
    if c.reps < conc::MIN_REPS {
        return Err(config_err(anyhow!(
            "at least {} replications are required, got {}",
            conc::MIN_REPS,
            c.reps
        )));
    }
    let truth = if c.design {
        Some(
            cfg.truth_spec(&schedule)
                .map_err(config_err)?
                .build(schedule.d)
                .map_err(|e| config_err(e.into()))?,
        )
    } else {
        None
    };
    let sigma = |n: usize| c.sigma.unwrap_or_else(|| schedule.sigma_n(n as f64));
    if ctx.dry_run {
        let s = c
            .n
            .iter()
            .map(|&n| format!("n={n} sigma={:.6}", sigma(n)))
            .collect::<Vec<_>>()
            .join("\n");
        return dry(ctx, s);
    }
    let out = out_dir(ctx)?;
    let kernel = kernel_for(schedule.d)?;
    let grid = QuadratureGrid::midpoint(schedule.d, c.grid).map_err(|e| config_err(e.into()))?;
    let mut rows: Vec<BudgetRow> = Vec::new();
    for &n in &c.n {
        let smoother = SmootherConfig::new(sigma(n), kernel.clone()).map_err(|e| config_err(e.into()))?;
        let plan = McPlan {
            reps: c.reps,
            inner: c.inner,
            seed: seed::derive(cfg.seed(), &[n as u64]),
            exec: Exec::Parallel,
        };
        if c.noise {
            let b = conc::noise_process_deviation(&smoother, &q, n, &grid, &plan).map_err(|e| classify(e.into()))?;
            rows.extend(b.rows());
        }
        if let Some(f) = &truth {
            let b = conc::design_process_deviation(f, &smoother, &q, n, &grid, &plan, DesignOptions::default())
                .map_err(|e| classify(e.into()))?;
            rows.extend(b.rows());
        }
    }
    let mut body = Vec::new();
    io(conc::write_rows(&rows, &mut body).context("cannot format budget rows"))?;
    io(out.csv("budget.csv", &body))?;
    let failed: Vec<&str> = rows.iter().filter(|r| !r.ok).map(|r| r.config.as_str()).collect();
    let summary = format!(
        "concentration: {} of {} budget rows hold{}",
        rows.len() - failed.len(),
        rows.len(),
        if failed.is_empty() {
            String::new()
        } else {
            format!(" (violated: {})", failed.join(", "))
        }
    );
    Ok(Outcome {
        passed: failed.is_empty(),
        summary,
    })
}

/// Certificate tolerances.
const MASS_TOL: f64 = 1e-6;
const FLAT_TOL: f64 = 1e-4;

fn kernel_cmd(ctx: &Ctx) -> Result<Outcome, Failure> {
    let spec = ctx.cfg.flat_top_spec().map_err(config_err)?;
    if ctx.dry_run {
        return dry(ctx, format!("{spec:?}"));
    }
    let out = out_dir(ctx)?;
    let k = build_psi(&spec).map_err(|e| classify(e.into()))?;
    let mut body = Vec::new();
    io(k.export_csv(&mut body).context("cannot format psi table"))?;
    io(out.csv("psi.csv", &body))?;
    let mut cert = String::from("key,value\n");
    for line in k.certificate_report().lines() {
        if let Some((key, value)) = line.split_once(" = ") {
            let _ = writeln!(cert, "{key},{value}");
        }
    }
    io(out.csv("certificate.csv", cert.as_bytes()))?;
    let c = k.certificate();
    let mass_dev = (c.mass - 1.0).abs();
    let moment_dev = c.moments.iter().take(c.moment_order).fold(0.0f64, |m, v| m.max(v.abs()));
    let passed = mass_dev <= MASS_TOL && moment_dev <= MASS_TOL && c.flat_dev <= FLAT_TOL;
    Ok(Outcome {
        passed,
        summary: format!(
            "kernel-check ({}): |mass-1| = {mass_dev:e}, max |moment| (order ≤ {}) = {moment_dev:e}, flat deviation = {:e}: {}",
            k.profile().name(),
            c.moment_order,
            c.flat_dev,
            verdict(passed)
        ),
    })
}

fn rkhs_cmd(ctx: &Ctx) -> Result<Outcome, Failure> {
    let cfg = &ctx.cfg;
    let r = cfg.rkhs.as_ref().context("missing [rkhs] table").map_err(config_err)?;
    if r.a.is_empty() || r.d.is_empty() || r.elements == 0 || r.centers == 0 {
        return Err(config_err(anyhow!("rkhs sweep needs a values, d values, elements and centers")));
    }
    if ctx.dry_run {
        return dry(ctx, format!("{} (a, d) pairs x {} elements", r.a.len() * r.d.len(), r.elements));
    }
    let out = out_dir(ctx)?;
    let mut body = String::from("a,d,element,norm,lhs,rhs,ok\n");
    let (mut total, mut violations) = (0usize, 0usize);
    for &d in &r.d {
        let grid = match r.grid {
            Some(g) => QuadratureGrid::midpoint(d, g),
            None => QuadratureGrid::default_for(d),
        }
        .map_err(|e| config_err(e.into()))?;
        for &a in &r.a {
            let kernel = SeKernel::new(a, d).map_err(|e| config_err(e.into()))?;
            let m = a.powf(d as f64 / 2.0);
            for j in 0..r.elements {
                let s = seed::derive(cfg.seed(), &[a.to_bits(), d as u64, j as u64]);
                let h = RkhsElement::random(kernel, r.centers, m, &mut seed::rng(s)).map_err(|e| classify(e.into()))?;
                let c = prop2_check(&h, m, &grid).map_err(|e| classify(e.into()))?;
                total += 1;
                violations += usize::from(!c.ok);
                let _ = writeln!(body, "{a},{d},{j},{:.12e},{:.12e},{:.12e},{}", h.norm(), c.lhs, c.rhs, c.ok);
            }
        }
    }
    io(out.csv("l2_bound.csv", body.as_bytes()))?;
    Ok(Outcome {
        passed: violations == 0,
        summary: format!("rkhs-check: {violations} violations in {total} elements"),
    })
}

fn simulate_cmd(ctx: &Ctx) -> Result<Outcome, Failure> {
    let cfg = &ctx.cfg;
    let schedule = cfg.schedule().map_err(config_err)?;
    let s = cfg.simulate.as_ref().context("missing [simulate] table").map_err(config_err)?;
    let q = cfg.density(schedule.d).map_err(config_err)?;
    let f0 = cfg
        .truth_spec(&schedule)
        .map_err(config_err)?
        .build(schedule.d)
        .map_err(|e| config_err(e.into()))?;
    if s.n == 0 || s.grid == 0 {
        return Err(config_err(anyhow!("simulate needs n > 0 and grid > 0")));
    }
    let a = s.a.unwrap_or_else(|| schedule.a_n(s.n as f64));
    if ctx.dry_run {
        return dry(ctx, format!("n={} a={a:.6}", s.n));
    }
    let out = out_dir(ctx)?;
    let base = cfg.seed();
    let x = synth::sample_design(&q, s.n, base).map_err(|e| classify(e.into()))?;
    let data = synth::gen_dataset(&f0, x, s.noise_sd, base).map_err(|e| classify(e.into()))?;
    let mut body = Vec::new();
    io(data.write_csv(&mut body).context("cannot format dataset"))?;
    io(out.csv("data.csv", &body))?;
    let kernel = SeKernel::new(a, schedule.d).map_err(|e| config_err(e.into()))?;
    let model = PosteriorModel::fit_with_noise(&kernel, &data, rgp_core::posterior::NOISE_VARIANCE)
        .map_err(|e| classify(e.into()))?;
    let grid = QuadratureGrid::midpoint(schedule.d, s.grid).map_err(|e| config_err(e.into()))?;
    let mut body = Vec::new();
    model
        .write_summary_csv(grid.points(), &mut body)
        .map_err(|e| classify(e.into()))?;
    io(out.csv("posterior.csv", &body))?;
    let mean = model.mean_on(grid.points()).map_err(|e| classify(e.into()))?;
    let f0v = grid.eval(&f0);
    let err = rgp_core::posterior::L1qMetric::new(&grid, &q).distance(&mean, &f0v);
    Ok(Outcome {
        passed: true,
        summary: format!("simulate: n={} a={a:.6} posterior-mean L1(q) error {err:.6}", s.n),
    })
}
