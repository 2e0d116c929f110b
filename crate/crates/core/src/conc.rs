//! Monte Carlo budgets for the two deviation processes behind the kernel
//! estimator: the noise process `T(x) = Σ_i ψ_σ(x − X_i) Z_i` (Gaussian, so
//! Borell's inequality applies) and the design process
//! `Σ_i L_x(X_i)` with `L_x(t) = ψ_σ(x − t) f(t) − ψ_σ⋆f(x)` (bounded and
//! centered, so Bousquet's form of Talagrand's inequality applies).

use std::f64::consts::PI;
use std::io::{self, Write};

use nalgebra::DMatrix;
use rand::Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};
use crate::kest::SmootherConfig;
use crate::math::{QuadratureGrid, RegressionFn};
use crate::par::{self, Exec};
use crate::points::PointSet;
use crate::seed::{self, stream};
use crate::stats;
use crate::synth::CovariateDensity;

/// Minimum replications for a reportable budget.
pub const MIN_REPS: usize = 200;
/// Functions in the random `|h| ≤ 1` dictionary.
pub const DICTIONARY_SIZE: usize = 32;
/// Tail levels `t` (probabilities `e^{-t}`).
pub const TAIL_LEVELS: [f64; 3] = [1.0, 2.0, 4.0];

/// One tail comparison: empirical `P(stat > threshold)` against `bound`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TailPair {
    pub t: f64,
    pub threshold: f64,
    pub empirical: f64,
    pub bound: f64,
    /// Binomial standard error at the nominal probability `bound`.
    pub mc_se: f64,
}

impl TailPair {
    fn new(t: f64, threshold: f64, samples: &[f64]) -> Self {
        let bound = (-t).exp();
        let exceed = samples.iter().filter(|&&v| v > threshold).count();
        Self {
            t,
            threshold,
            empirical: exceed as f64 / samples.len() as f64,
            bound,
            mc_se: stats::binomial_se(bound, samples.len()),
        }
    }

    /// Within three standard errors of the bound.
    pub fn ok(&self) -> bool {
        self.empirical <= self.bound + 3.0 * self.mc_se
    }
}

/// A report row: `config, measured, bound, ok`.
#[derive(Debug, Clone, PartialEq)]
pub struct BudgetRow {
    pub config: String,
    pub measured: f64,
    pub bound: f64,
    pub ok: bool,
}

pub fn write_rows<W: Write>(rows: &[BudgetRow], mut w: W) -> io::Result<()> {
    writeln!(w, "config,measured,bound,ok")?;
    for r in rows {
        writeln!(w, "{},{:e},{:e},{}", r.config, r.measured, r.bound, r.ok)?;
    }
    Ok(())
}

/// Replication settings shared by both budgets.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct McPlan {
    pub reps: usize,
    /// Noise draws per design (noise process only).
    pub inner: usize,
    pub seed: u64,
    pub exec: Exec,
}

impl McPlan {
    pub fn new(reps: usize, seed: u64) -> Self {
        Self {
            reps,
            inner: 32,
            seed,
            exec: Exec::default(),
        }
    }

    fn validate(&self) -> Result<()> {
        if self.reps < MIN_REPS {
            return Err(Error::input(format!(
                "at least {MIN_REPS} replications are required, got {}",
                self.reps
            )));
        }
        if self.inner == 0 {
            return Err(Error::input("at least one noise draw per design is required"));
        }
        Ok(())
    }
}

/// `Ψ_{gi} = ψ_σ(x_g − X_i)` for grid rows `g` and design rows `i`.
pub fn smoothing_matrix(cfg: &SmootherConfig, grid: &PointSet, design: &PointSet) -> DMatrix<f64> {
    let d = grid.dim();
    let mut diff = vec![0.0; d];
    DMatrix::from_fn(grid.len(), design.len(), |g, i| {
        let (x, xi) = (grid.row(g), design.row(i));
        for k in 0..d {
            diff[k] = x[k] - xi[k];
        }
        cfg.psi_sigma(&diff)
    })
}

/// `‖T‖₁` on the grid for one noise vector.
pub fn t_process_l1(cfg: &SmootherConfig, design: &PointSet, z: &[f64], grid: &QuadratureGrid) -> f64 {
    let psi = smoothing_matrix(cfg, grid.points(), design);
    let t = psi * nalgebra::DVector::from_column_slice(z);
    grid.l1_norm(t.as_slice())
}

/// Noise-process budget.
#[derive(Debug, Clone, PartialEq)]
pub struct BorellBudget {
    pub n: usize,
    pub sigma: f64,
    pub reps: usize,
    pub inner: usize,
    pub c1: f64,
    pub c2: f64,
    /// Per-design mean of `‖T‖₁` over the inner draws.
    pub rep_means: Vec<f64>,
    /// Per-design conditional mean `sqrt(2/π) ∫ (Σ_i ψ_σ²(x − X_i))^{1/2}`.
    pub exact_means: Vec<f64>,
    /// `C₂ (n/σ^d)^{1/2}`.
    pub mean_bound: f64,
    /// Largest dictionary variance `Σ_i (∫ψ_σ(x − X_i) h(x) dx)²`.
    pub sigma_f_sq: f64,
    /// `C₁ n`.
    pub sigma_f_bound: f64,
    /// `C₁² n`, the bound that holds for every `|h| ≤ 1`.
    pub sigma_f_rigorous: f64,
    pub p99: f64,
    /// `mean_bound + sqrt(2 C₁ n ln 100)`.
    pub p99_bound: f64,
    pub tails: Vec<TailPair>,
}

impl BorellBudget {
    pub fn mean(&self) -> f64 {
        stats::mean(&self.rep_means)
    }

    /// Designs whose mean `‖T‖₁` exceeds the budget.
    pub fn violations(&self) -> usize {
        self.rep_means.iter().filter(|&&m| m > self.mean_bound).count()
    }

    pub fn rows(&self) -> Vec<BudgetRow> {
        let cfg = |what: &str| format!("borell/n={}/sigma={:.6}/{what}", self.n, self.sigma);
        let mut rows = vec![
            BudgetRow {
                config: cfg("max_rep_mean_l1"),
                measured: self.rep_means.iter().cloned().fold(0.0, f64::max),
                bound: self.mean_bound,
                ok: self.violations() == 0,
            },
            BudgetRow {
                config: cfg("exact_mean_l1"),
                measured: stats::mean(&self.exact_means),
                bound: self.mean_bound,
                ok: stats::mean(&self.exact_means) <= self.mean_bound,
            },
            BudgetRow {
                config: cfg("sigma_f_sq"),
                measured: self.sigma_f_sq,
                bound: self.sigma_f_bound,
                ok: self.sigma_f_sq <= self.sigma_f_bound * (1.0 + 1e-6),
            },
            BudgetRow {
                config: cfg("sigma_f_sq_rigorous"),
                measured: self.sigma_f_sq,
                bound: self.sigma_f_rigorous,
                ok: self.sigma_f_sq <= self.sigma_f_rigorous * (1.0 + 1e-6),
            },
            BudgetRow {
                config: cfg("p99_l1"),
                measured: self.p99,
                bound: self.p99_bound,
                ok: self.p99 <= self.p99_bound,
            },
        ];
        rows.extend(self.tails.iter().map(|t| BudgetRow {
            config: cfg(&format!("tail_t={}", t.t)),
            measured: t.empirical,
            bound: t.bound + 3.0 * t.mc_se,
            ok: t.ok(),
        }));
        rows
    }
}

/// Random `|h| ≤ 1` test functions on the grid: the constant, and signs of
/// random cosines with frequencies up to `1/σ`.
fn dictionary(grid: &PointSet, sigma: f64, seed: u64) -> Vec<Vec<f64>> {
    let mut rng = seed::rng(seed::derive(seed, &[stream::DICTIONARY]));
    let d = grid.dim();
    let mut out = vec![vec![1.0; grid.len()]];
    for _ in 1..DICTIONARY_SIZE {
        let omega: Vec<f64> = (0..d)
            .map(|_| 2.0 * PI * rng.random_range(0.25..(1.0 / sigma).max(0.5)))
            .collect();
        let phase = rng.random_range(0.0..2.0 * PI);
        let smooth = rng.random::<bool>();
        out.push(
            grid.iter()
                .map(|x| {
                    let c = (x.iter().zip(&omega).map(|(a, b)| a * b).sum::<f64>() + phase).cos();
                    if smooth {
                        c
                    } else {
                        c.signum()
                    }
                })
                .collect(),
        );
    }
    out
}

/// Noise-process deviation under a fixed design per replication.
pub fn noise_process_deviation(
    cfg: &SmootherConfig,
    q: &CovariateDensity,
    n: usize,
    grid: &QuadratureGrid,
    plan: &McPlan,
) -> Result<BorellBudget> {
    plan.validate()?;
    if n == 0 {
        return Err(Error::input("design size must be positive"));
    }
    if q.dim() != cfg.dim() || grid.dim() != cfg.dim() {
        return Err(Error::input("density, grid and kernel dimensions differ"));
    }
    let d = cfg.dim() as i32;
    let kernel = cfg.kernel();
    let (c1, c2) = (kernel.c1(), kernel.c2());
    let sigma = cfg.sigma();
    let mean_bound = c2 * (n as f64 / sigma.powi(d)).sqrt();
    let dict = dictionary(grid.points(), sigma, plan.seed);
    let weighted: Vec<Vec<f64>> = dict
        .iter()
        .map(|h| h.iter().zip(grid.weights()).map(|(a, w)| a * w).collect())
        .collect();

    struct Rep {
        draws: Vec<f64>,
        exact: f64,
        var_f: f64,
    }
    let reps = par::map_indexed(plan.exec, plan.reps, |r| {
        let rs = seed::derive(plan.seed, &[r as u64]);
        let design = q.sample_with(n, &mut seed::rng(seed::derive(rs, &[stream::DESIGN])));
        let psi = smoothing_matrix(cfg, grid.points(), &design);
        let mut rng = seed::rng(seed::derive(rs, &[stream::NOISE]));
        let z = DMatrix::from_fn(n, plan.inner, |_, _| rng.sample::<f64, _>(StandardNormal));
        let t = &psi * z;
        let draws = t.column_iter().map(|c| grid.l1_norm(c.as_slice())).collect();
        let exact = (2.0 / PI).sqrt()
            * psi
                .row_iter()
                .zip(grid.weights())
                .map(|(row, w)| w * row.norm())
                .sum::<f64>();
        let var_f = weighted
            .iter()
            .map(|v| {
                let a = psi.tr_mul(&nalgebra::DVector::from_column_slice(v));
                a.norm_squared()
            })
            .fold(0.0, f64::max);
        Rep { draws, exact, var_f }
    });

    let rep_means: Vec<f64> = reps.iter().map(|r| stats::mean(&r.draws)).collect();
    let exact_means: Vec<f64> = reps.iter().map(|r| r.exact).collect();
    let all: Vec<f64> = reps.iter().flat_map(|r| r.draws.iter().copied()).collect();
    let sigma_f_sq = reps.iter().map(|r| r.var_f).fold(0.0, f64::max);
    let sigma_f_bound = c1 * n as f64;
    let grand = stats::mean(&all);
    let tails = TAIL_LEVELS
        .iter()
        .map(|&t| TailPair::new(t, grand + (2.0 * sigma_f_bound * t).sqrt(), &all))
        .collect();
    Ok(BorellBudget {
        n,
        sigma,
        reps: plan.reps,
        inner: plan.inner,
        c1,
        c2,
        rep_means,
        exact_means,
        mean_bound,
        sigma_f_sq,
        sigma_f_bound,
        sigma_f_rigorous: c1 * c1 * n as f64,
        p99: stats::quantile(&all, 0.99),
        p99_bound: mean_bound + (2.0 * sigma_f_bound * 100f64.ln()).sqrt(),
        tails,
    })
}

/// Design-process budget.
#[derive(Debug, Clone, PartialEq)]
pub struct TalagrandBudget {
    pub n: usize,
    pub sigma: f64,
    pub reps: usize,
    pub c1: f64,
    pub c2: f64,
    /// Samples of `W = ‖Σ_i L_·(X_i)‖₁`.
    pub w: Vec<f64>,
    /// `‖f‖_{2,q}` or the caller-supplied bound on it.
    pub f_l2: f64,
    /// `C₂ ‖f‖₂ (n/σ^d)^{1/2}`.
    pub ew_bound: f64,
    /// `C₁ ‖f‖_∞ + ‖ψ_σ⋆f‖₁`, a bound on `sup |g|` over the class.
    pub k1: f64,
    /// Largest `sup_t |g_h(t)|` over the dictionary.
    pub k1_measured: f64,
    /// `C₁² ‖f‖²_{2,q}`, a bound on `Var g(X)` over the class.
    pub sigma_g_sq: f64,
    /// `n σ²_G + K₁ E W`.
    pub k2: f64,
    pub tails: Vec<TailPair>,
}

impl TalagrandBudget {
    pub fn mean_w(&self) -> f64 {
        stats::mean(&self.w)
    }

    /// `E W + sqrt(2 K₂ t) + K₁ t / 3`.
    pub fn threshold(&self, t: f64) -> f64 {
        self.mean_w() + (2.0 * self.k2 * t).sqrt() + self.k1 * t / 3.0
    }

    /// `2 C₁ M_n`: the sieve-level bound on `K₁` when `‖f‖_∞ ≤ M_n`.
    pub fn k1_sieve_bound(&self, m_n: f64) -> f64 {
        2.0 * self.c1 * m_n
    }

    pub fn tail(&self, t: f64) -> Option<&TailPair> {
        self.tails.iter().find(|p| p.t == t)
    }

    pub fn rows(&self) -> Vec<BudgetRow> {
        let cfg = |what: &str| format!("talagrand/n={}/sigma={:.6}/{what}", self.n, self.sigma);
        let mut rows = vec![
            BudgetRow {
                config: cfg("mean_w"),
                measured: self.mean_w(),
                bound: self.ew_bound,
                ok: self.mean_w() <= self.ew_bound,
            },
            BudgetRow {
                config: cfg("k1"),
                measured: self.k1_measured,
                bound: self.k1,
                ok: self.k1_measured <= self.k1,
            },
            BudgetRow {
                config: cfg("k2_vs_n_sigma_g"),
                measured: self.n as f64 * self.sigma_g_sq,
                bound: self.k2,
                ok: self.k2 >= self.n as f64 * self.sigma_g_sq,
            },
        ];
        rows.extend(self.tails.iter().map(|t| BudgetRow {
            config: cfg(&format!("tail_t={}", t.t)),
            measured: t.empirical,
            bound: t.bound + 3.0 * t.mc_se,
            ok: t.ok(),
        }));
        rows
    }
}

/// Per-design-point vectors `u_X(x) = ψ_σ(x − X) f(X) − ψ_σ⋆f(x)` on the grid.
struct DesignTerms<'a, F: ?Sized> {
    cfg: &'a SmootherConfig,
    f: &'a F,
    grid: &'a QuadratureGrid,
    f_n: Vec<f64>,
}

impl<'a, F: RegressionFn + ?Sized> DesignTerms<'a, F> {
    fn new(cfg: &'a SmootherConfig, f: &'a F, q: &CovariateDensity, grid: &'a QuadratureGrid) -> Self {
        let f_n = if q.is_uniform() {
            cfg.f_conv_on(f, grid.points())
        } else {
            cfg.f_conv_q_on(f, q, grid.points())
        };
        Self { cfg, f, grid, f_n }
    }

    /// `Σ_i L_x(X_i)` on the grid.
    fn sum(&self, design: &PointSet) -> Vec<f64> {
        let n = design.len() as f64;
        let fx: Vec<f64> = design.iter().map(|x| self.f.eval(x)).collect();
        self.cfg
            .smooth_on(design, &fx, self.grid.points())
            .iter()
            .zip(&self.f_n)
            .map(|(s, m)| n * (s - m))
            .collect()
    }

    fn w(&self, design: &PointSet) -> f64 {
        self.grid.l1_norm(&self.sum(design))
    }
}

/// Options for [`design_process_deviation`].
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct DesignOptions {
    /// Use this value for `‖f‖₂` in the `E W` bound instead of quadrature
    /// (for instance the RKHS-norm bound of an expansion).
    pub l2_bound: Option<f64>,
}

/// Design-process deviation with a fresh design per replication.
pub fn design_process_deviation<F: RegressionFn + ?Sized>(
    f: &F,
    cfg: &SmootherConfig,
    q: &CovariateDensity,
    n: usize,
    grid: &QuadratureGrid,
    plan: &McPlan,
    opts: DesignOptions,
) -> Result<TalagrandBudget> {
    plan.validate()?;
    design_budget(f, cfg, q, n, grid, plan, opts)
}

fn design_budget<F: RegressionFn + ?Sized>(
    f: &F,
    cfg: &SmootherConfig,
    q: &CovariateDensity,
    n: usize,
    grid: &QuadratureGrid,
    plan: &McPlan,
    opts: DesignOptions,
) -> Result<TalagrandBudget> {
    if n == 0 {
        return Err(Error::input("design size must be positive"));
    }
    if q.dim() != cfg.dim() || grid.dim() != cfg.dim() || f.dim() != cfg.dim() {
        return Err(Error::input("function, density, grid and kernel dimensions differ"));
    }
    let terms = DesignTerms::new(cfg, f, q, grid);
    let w = par::map_indexed(plan.exec, plan.reps, |r| {
        let rs = seed::derive(plan.seed, &[r as u64, stream::DESIGN]);
        terms.w(&q.sample_with(n, &mut seed::rng(rs)))
    });

    let kernel = cfg.kernel();
    let (c1, c2) = (kernel.c1(), kernel.c2());
    let sigma = cfg.sigma();
    let fv = grid.eval(f);
    let qv: Vec<f64> = grid.points().iter().map(|x| q.density(x)).collect();
    let f_l2q_sq: f64 = fv
        .iter()
        .zip(&qv)
        .zip(grid.weights())
        .map(|((v, qq), w)| w * qq * v * v)
        .sum();
    let f_l2 = opts.l2_bound.unwrap_or_else(|| {
        let (_, q_hi) = q.bounds();
        (grid.l2_norm_sq(&fv) * q_hi).sqrt()
    });
    let ew_bound = c2 * f_l2 * (n as f64 / sigma.powi(cfg.dim() as i32)).sqrt();
    let sup_f = f
        .sup_bound()
        .unwrap_or_else(|| fv.iter().fold(0.0f64, |m, v| m.max(v.abs())));
    let k1 = c1 * sup_f + grid.l1_norm(&terms.f_n);
    let sigma_g_sq = c1 * c1 * f_l2q_sq;
    let k1_measured = class_sup(&terms, plan.seed);

    let mut budget = TalagrandBudget {
        n,
        sigma,
        reps: plan.reps,
        c1,
        c2,
        w,
        f_l2,
        ew_bound,
        k1,
        k1_measured,
        sigma_g_sq,
        k2: 0.0,
        tails: Vec::new(),
    };
    budget.k2 = n as f64 * sigma_g_sq + k1 * budget.mean_w();
    budget.tails = TAIL_LEVELS
        .iter()
        .map(|&t| TailPair::new(t, budget.threshold(t), &budget.w))
        .collect();
    Ok(budget)
}

/// `max_h sup_t |g_h(t)|` with `g_h(t) = f(t) ∫ψ_σ(x − t) h(x) dx − ∫ f_n h`
/// over the dictionary, `t` ranging over the grid.
fn class_sup<F: RegressionFn + ?Sized>(terms: &DesignTerms<'_, F>, seed: u64) -> f64 {
    let pts = terms.grid.points();
    let psi = smoothing_matrix(terms.cfg, pts, pts);
    let fv = terms.grid.eval(terms.f);
    let mut best = 0.0f64;
    for h in dictionary(pts, terms.cfg.sigma(), seed) {
        let wh: Vec<f64> = h.iter().zip(terms.grid.weights()).map(|(a, w)| a * w).collect();
        let smooth_h = psi.tr_mul(&nalgebra::DVector::from_column_slice(&wh));
        let centre: f64 = wh.iter().zip(&terms.f_n).map(|(a, b)| a * b).sum();
        for (t, s) in smooth_h.iter().enumerate() {
            best = best.max((fv[t] * s - centre).abs());
        }
    }
    best
}

/// `E W` for `n = 2` by a midpoint rule over `(X₁, X₂) ∈ [0,1]^2` with `m`
/// cells per axis (`d = 1`, uniform design).
pub fn design_w_exact_n2<F: RegressionFn + ?Sized>(
    f: &F,
    cfg: &SmootherConfig,
    grid: &QuadratureGrid,
    m: usize,
    exec: Exec,
) -> Result<f64> {
    if cfg.dim() != 1 || grid.dim() != 1 {
        return Err(Error::input("the exhaustive n = 2 reference is one-dimensional"));
    }
    let terms = DesignTerms::new(cfg, f, &CovariateDensity::uniform(1), grid);
    let xs: Vec<f64> = (0..m).map(|i| (i as f64 + 0.5) / m as f64).collect();
    // L_·(X) on the grid for each candidate X
    let us: Vec<Vec<f64>> = xs.iter().map(|&x| terms.sum(&PointSet::from_scalars(&[x]))).collect();
    let rows = par::map_indexed(exec, m, |i| {
        (0..m)
            .map(|j| {
                let s: Vec<f64> = us[i].iter().zip(&us[j]).map(|(a, b)| a + b).collect();
                grid.l1_norm(&s)
            })
            .sum::<f64>()
    });
    Ok(rows.iter().sum::<f64>() / (m * m) as f64)
}

/// `W` samples only, without the pre-validation on the replication count
/// (for reference computations such as the `n = 2` comparison).
pub fn design_w_samples<F: RegressionFn + ?Sized>(
    f: &F,
    cfg: &SmootherConfig,
    q: &CovariateDensity,
    n: usize,
    grid: &QuadratureGrid,
    plan: &McPlan,
) -> Result<Vec<f64>> {
    if plan.reps == 0 {
        return Err(Error::input("at least one replication is required"));
    }
    let terms = DesignTerms::new(cfg, f, q, grid);
    Ok(par::map_indexed(plan.exec, plan.reps, |r| {
        let rs = seed::derive(plan.seed, &[r as u64, stream::DESIGN]);
        terms.w(&q.sample_with(n, &mut seed::rng(rs)))
    }))
}

/// Monte Carlo check that `E L_x(X₁) = 0`.
#[derive(Debug, Clone, PartialEq)]
pub struct Centering {
    /// `max_x |mean_r L_x(X_r)|`.
    pub max_abs: f64,
    /// `max_x |mean| / mc_se` (zero when the standard error vanishes).
    pub max_z: f64,
    pub draws: usize,
}

/// Estimates `E L_x(X₁)` at each of `points`. With `fixed_design` the
/// supplied points are used instead of random draws.
#[allow(clippy::too_many_arguments)]
pub fn centering_check<F: RegressionFn + ?Sized>(
    f: &F,
    cfg: &SmootherConfig,
    q: &CovariateDensity,
    points: &PointSet,
    reps: usize,
    seed: u64,
    fixed_design: Option<&PointSet>,
) -> Result<Centering> {
    let design = match fixed_design {
        Some(x) => x.clone(),
        None => {
            if reps == 0 {
                return Err(Error::input("at least one draw is required"));
            }
            q.sample_with(reps, &mut seed::rng(seed::derive(seed, &[stream::DESIGN])))
        }
    };
    if design.is_empty() {
        return Err(Error::input("empty design"));
    }
    let f_n = if q.is_uniform() {
        cfg.f_conv_on(f, points)
    } else {
        cfg.f_conv_q_on(f, q, points)
    };
    let fx: Vec<f64> = design.iter().map(|x| f.eval(x)).collect();
    let psi = smoothing_matrix(cfg, points, &design);
    let k = design.len() as f64;
    let mut max_abs = 0.0f64;
    let mut max_z = 0.0f64;
    for (g, row) in psi.row_iter().enumerate() {
        let terms: Vec<f64> = row.iter().zip(&fx).map(|(p, v)| p * v - f_n[g]).collect();
        let m = terms.iter().sum::<f64>() / k;
        max_abs = max_abs.max(m.abs());
        if terms.len() > 1 {
            let se = (stats::variance(&terms) / k).sqrt();
            if se > 0.0 {
                max_z = max_z.max(m.abs() / se);
            }
        }
    }
    Ok(Centering {
        max_abs,
        max_z,
        draws: design.len(),
    })
}
