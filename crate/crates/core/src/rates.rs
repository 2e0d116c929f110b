//! Bandwidth and rate schedules, rate sweeps and log-log rate fits.
//!
//! All logarithms are natural.

use std::io::{self, Write};
use std::time::Instant;

use crate::error::{Error, Result};
use crate::math::{QuadratureGrid, SeKernel};
use crate::par::{self, Exec};
use crate::posterior::{self, ContractionEstimate, L1qMetric, PosteriorModel};
use crate::seed;
use crate::stats::{self, LineFit};
use crate::synth::{self, CovariateDensity, TrueFunction, TruthKind};

/// Abort a sweep when more than this fraction of cells fail.
pub const MAX_FAILURE_FRACTION: f64 = 0.10;

/// `a_n = n^{1/(2β + d)}`.
pub fn a_n(n: f64, beta: f64, d: usize) -> f64 {
    n.powf(1.0 / (2.0 * beta + d as f64))
}

/// `ε_n = n^{-α/(2α + d)} (ln n)^{3 t₁ / 2}`.
pub fn eps_n(n: f64, alpha: f64, d: usize, t1: f64) -> f64 {
    n.powf(-alpha / (2.0 * alpha + d as f64)) * log_power(n, 1.5 * t1)
}

/// `σ_n = n^{-1/(2α + d)} (ln n)^{-t₂}`.
pub fn sigma_n(n: f64, alpha: f64, d: usize, t2: f64) -> f64 {
    n.powf(-1.0 / (2.0 * alpha + d as f64)) * log_power(n, -t2)
}

/// `ε_n = n^{-min(α,β)/(2β + d)} (ln n)^{3 t₁ / 2}`.
pub fn eps_n_mismatch(n: f64, alpha: f64, beta: f64, d: usize, t1: f64) -> f64 {
    n.powf(-alpha.min(beta) / (2.0 * beta + d as f64)) * log_power(n, 1.5 * t1)
}

fn log_power(n: f64, p: f64) -> f64 {
    if p == 0.0 {
        1.0
    } else {
        n.ln().powf(p)
    }
}

/// Whether the prior bandwidth follows the truth smoothness or a separate
/// prior smoothness `β`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    Matched,
    Mismatched,
}

/// Exponents and constants of the bandwidth and rate schedules.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Schedule {
    pub alpha: f64,
    pub beta: f64,
    pub d: usize,
    pub t1: f64,
    pub kappa: f64,
    pub mode: Mode,
    /// Skip the `α > d/2` requirement.
    pub allow_rough: bool,
}

impl Schedule {
    /// Matched schedule with `t₁ = (d+1)/2` and `κ = 1/2`.
    pub fn matched(alpha: f64, d: usize) -> Result<Self> {
        let s = Self {
            alpha,
            beta: alpha,
            d,
            t1: (d as f64 + 1.0) / 2.0,
            kappa: 0.5,
            mode: Mode::Matched,
            allow_rough: false,
        };
        s.validate()?;
        Ok(s)
    }

    /// Prior smoothness `β` against truth smoothness `α`.
    pub fn mismatched(alpha: f64, beta: f64, d: usize) -> Result<Self> {
        let s = Self {
            beta,
            mode: Mode::Mismatched,
            ..Self::matched(alpha, d)?
        };
        s.validate()?;
        Ok(s)
    }

    pub fn validate(&self) -> Result<()> {
        let d = self.d as f64;
        if self.d == 0 {
            return Err(Error::input("dimension must be positive"));
        }
        for (name, v) in [("alpha", self.alpha), ("beta", self.beta)] {
            if !(v.is_finite() && v > 0.0) {
                return Err(Error::input(format!("{name} must be positive, got {v}")));
            }
        }
        if !self.allow_rough {
            if self.alpha <= d / 2.0 {
                return Err(Error::input(format!(
                    "smoothness must satisfy α > d/2 (got α = {}, d = {}); set allow_rough to override",
                    self.alpha, self.d
                )));
            }
            if self.mode == Mode::Mismatched && self.beta <= d / 2.0 {
                return Err(Error::input(format!(
                    "prior smoothness must satisfy β > d/2 (got β = {}, d = {}); set allow_rough to override",
                    self.beta, self.d
                )));
            }
        }
        if self.mode == Mode::Matched && self.beta != self.alpha {
            return Err(Error::input("a matched schedule needs beta = alpha"));
        }
        if !(self.t1.is_finite() && self.t1 >= (d + 1.0) / 2.0) {
            return Err(Error::input(format!(
                "log exponent t1 must be at least (d+1)/2 = {}, got {}",
                (d + 1.0) / 2.0,
                self.t1
            )));
        }
        let kappa_max = match self.mode {
            Mode::Matched => 1.0,
            Mode::Mismatched => 2.0,
        };
        if !(self.kappa > 0.0 && self.kappa < kappa_max) {
            return Err(Error::input(format!(
                "kappa must lie in (0, {kappa_max}), got {}",
                self.kappa
            )));
        }
        Ok(())
    }

    /// `t₂ = 1/(2 − κ)`.
    pub fn t2(&self) -> f64 {
        1.0 / (2.0 - self.kappa)
    }

    /// The smallest admissible `t₁` in the mismatched setting,
    /// `t₁ ≥ d/(4 − 2κ)`; recorded alongside `(d+1)/2`.
    pub fn t1_min(&self) -> f64 {
        self.d as f64 / (4.0 - 2.0 * self.kappa)
    }

    /// The smoothness the prior bandwidth is tuned to.
    pub fn prior_smoothness(&self) -> f64 {
        match self.mode {
            Mode::Matched => self.alpha,
            Mode::Mismatched => self.beta,
        }
    }

    pub fn a_n(&self, n: f64) -> f64 {
        a_n(n, self.prior_smoothness(), self.d)
    }

    pub fn eps_n(&self, n: f64) -> f64 {
        self.eps_with_log(n, self.t1)
    }

    /// Rate without the log factor (`t₁ = 0`).
    pub fn eps_n_nolog(&self, n: f64) -> f64 {
        self.eps_with_log(n, 0.0)
    }

    fn eps_with_log(&self, n: f64, t1: f64) -> f64 {
        match self.mode {
            Mode::Matched => eps_n(n, self.alpha, self.d, t1),
            Mode::Mismatched => eps_n_mismatch(n, self.alpha, self.beta, self.d, t1),
        }
    }

    /// Kernel-estimator bandwidth; follows the prior smoothness.
    pub fn sigma_n(&self, n: f64) -> f64 {
        sigma_n(n, self.prior_smoothness(), self.d, self.t2())
    }

    /// The exponent `r` in `ε_n ≍ n^{-r}`.
    pub fn predicted_exponent(&self) -> f64 {
        let s = self.prior_smoothness();
        self.alpha.min(s) / (2.0 * s + self.d as f64)
    }
}

/// Ground-truth recipe.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TruthSpec {
    pub kind: TruthKind,
    pub alpha: f64,
    pub k: usize,
    pub amplitude: f64,
    pub seed: u64,
}

impl TruthSpec {
    pub fn build(&self, d: usize) -> Result<TrueFunction> {
        synth::make_truth(self.kind, self.alpha, self.k, d, self.seed)?.scaled(self.amplitude)
    }
}

/// Sweep plan.
#[derive(Debug, Clone, PartialEq)]
pub struct RatePlan {
    pub n_grid: Vec<usize>,
    pub reps: usize,
    pub m: f64,
    /// Posterior draws per cell; zero skips path sampling.
    pub s: usize,
    pub truth: TruthSpec,
    pub q: CovariateDensity,
    pub base_seed: u64,
    pub grid_per_axis: usize,
    /// Noise sd of the simulated data.
    pub noise_sd: f64,
    /// Noise variance assumed by the posterior.
    pub fit_noise_var: f64,
    /// Fill `wall_ms`; otherwise it is written as 0 so reruns are identical.
    pub record_timings: bool,
    pub exec: Exec,
}

impl RatePlan {
    pub fn validate(&self, schedule: &Schedule) -> Result<()> {
        schedule.validate()?;
        if self.n_grid.len() < 4 {
            return Err(Error::input("the n grid needs at least 4 values"));
        }
        if self.n_grid.windows(2).any(|w| w[1] <= w[0]) || self.n_grid[0] < 2 {
            return Err(Error::input("the n grid must be strictly ascending and start at 2 or more"));
        }
        if self.reps < 10 {
            return Err(Error::input(format!("at least 10 replications are required, got {}", self.reps)));
        }
        if !(self.m.is_finite() && self.m > 0.0) {
            return Err(Error::input("M must be positive"));
        }
        if self.q.dim() != schedule.d {
            return Err(Error::input("covariate density and schedule dimensions differ"));
        }
        if self.grid_per_axis == 0 {
            return Err(Error::input("grid size must be positive"));
        }
        if !(self.fit_noise_var > 0.0) || !(self.noise_sd >= 0.0) {
            return Err(Error::input("noise parameters out of range"));
        }
        Ok(())
    }
}

/// One `(n, rep)` cell.
#[derive(Debug, Clone, PartialEq)]
pub struct RateRow {
    pub n: usize,
    pub rep: usize,
    pub seed: u64,
    pub a_n: f64,
    pub eps_n_nolog: f64,
    pub l1_postmean: f64,
    pub l1_postmedian: f64,
    pub contraction_fraction: f64,
    pub wall_ms: u64,
    /// Per-path `L1(q)` distances, kept for recalibrating `M`.
    pub distances: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CellFailure {
    pub n: usize,
    pub rep: usize,
    pub seed: u64,
    pub error: Error,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RateTable {
    pub m: f64,
    pub rows: Vec<RateRow>,
    pub failures: Vec<CellFailure>,
}

/// Which statistic to fit.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Column {
    PostMean,
    PostMedian,
    Contraction,
}

impl Column {
    fn get(self, r: &RateRow) -> f64 {
        match self {
            Column::PostMean => r.l1_postmean,
            Column::PostMedian => r.l1_postmedian,
            Column::Contraction => r.contraction_fraction,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Column::PostMean => "l1_postmean",
            Column::PostMedian => "l1_postmedian",
            Column::Contraction => "contraction_fraction",
        }
    }
}

pub const CSV_HEADER: &str = "n,rep,seed,a_n,eps_n_nolog,l1_postmean,l1_postmedian,contraction_fraction,wall_ms";

impl RateTable {
    /// Distinct `n` values in ascending order.
    pub fn ns(&self) -> Vec<usize> {
        let mut ns: Vec<usize> = self.rows.iter().map(|r| r.n).collect();
        ns.dedup();
        ns
    }

    /// `(n, median over reps)` for a column.
    pub fn medians(&self, column: Column) -> Vec<(usize, f64)> {
        self.ns()
            .into_iter()
            .map(|n| {
                let v: Vec<f64> = self.rows.iter().filter(|r| r.n == n).map(|r| column.get(r)).collect();
                (n, stats::median(&v))
            })
            .collect()
    }

    /// Same sweep with contraction fractions recomputed at a new `M`.
    pub fn with_m(&self, m: f64) -> Self {
        let mut t = self.clone();
        t.m = m;
        for r in &mut t.rows {
            if !r.distances.is_empty() {
                r.contraction_fraction = ContractionEstimate::from_distances(&r.distances, m, r.eps_n_nolog).fraction;
            }
        }
        t
    }

    /// Writes the result table; `preamble` lines are emitted first, each
    /// prefixed with `# `.
    pub fn write_csv<W: Write>(&self, mut w: W, preamble: &[String]) -> io::Result<()> {
        for line in preamble {
            writeln!(w, "# {line}")?;
        }
        writeln!(w, "{CSV_HEADER}")?;
        for r in &self.rows {
            writeln!(
                w,
                "{},{},{},{:.12e},{:.12e},{:.12e},{:.12e},{:.12e},{}",
                r.n,
                r.rep,
                r.seed,
                r.a_n,
                r.eps_n_nolog,
                r.l1_postmean,
                r.l1_postmedian,
                r.contraction_fraction,
                r.wall_ms
            )?;
        }
        Ok(())
    }
}

/// Seed of cell `(n, rep)`.
pub fn cell_seed(base: u64, n: usize, rep: usize) -> u64 {
    seed::derive(base, &[rep as u64, n as u64])
}

/// Runs every `(n, rep)` cell. Cells are independent; the table is ordered by
/// `(n, rep)` whatever the execution order.
pub fn run_rate_experiment(schedule: &Schedule, plan: &RatePlan) -> Result<RateTable> {
    plan.validate(schedule)?;
    let d = schedule.d;
    let f0 = plan.truth.build(d)?;
    let grid = QuadratureGrid::midpoint(d, plan.grid_per_axis)?;
    let metric = L1qMetric::new(&grid, &plan.q);
    let f0_vals = grid.eval(&f0);
    let cells: Vec<(usize, usize)> = plan
        .n_grid
        .iter()
        .flat_map(|&n| (0..plan.reps).map(move |r| (n, r)))
        .collect();

    let results = par::map_slice(plan.exec, &cells, |&(n, rep)| {
        let seed = cell_seed(plan.base_seed, n, rep);
        run_cell(schedule, plan, &f0, &grid, &metric, &f0_vals, n, rep, seed).map_err(|error| CellFailure {
            n,
            rep,
            seed,
            error,
        })
    });

    let mut rows = Vec::with_capacity(results.len());
    let mut failures = Vec::new();
    for r in results {
        match r {
            Ok(row) => rows.push(row),
            Err(f) => failures.push(f),
        }
    }
    if failures.len() as f64 > MAX_FAILURE_FRACTION * cells.len() as f64 {
        return Err(Error::FailureThreshold {
            failed: failures.len(),
            total: cells.len(),
        });
    }
    Ok(RateTable {
        m: plan.m,
        rows,
        failures,
    })
}

#[allow(clippy::too_many_arguments)]
fn run_cell(
    schedule: &Schedule,
    plan: &RatePlan,
    f0: &TrueFunction,
    grid: &QuadratureGrid,
    metric: &L1qMetric,
    f0_vals: &[f64],
    n: usize,
    rep: usize,
    seed: u64,
) -> Result<RateRow> {
    let start = Instant::now();
    let nf = n as f64;
    let a = schedule.a_n(nf);
    let eps = schedule.eps_n_nolog(nf);
    let x = synth::sample_design(&plan.q, n, seed)?;
    let data = synth::gen_dataset(f0, x, plan.noise_sd, seed)?;
    let kernel = SeKernel::new(a, schedule.d)?;
    let model = PosteriorModel::fit_with_noise(&kernel, &data, plan.fit_noise_var)?;
    let mean = model.mean_on(grid.points())?;
    let l1_postmean = metric.distance(&mean, f0_vals);
    let (distances, l1_postmedian, contraction_fraction) = if plan.s > 0 {
        let dist = posterior::path_distances(&model, f0_vals, grid, metric, plan.s, seed)?;
        let est = ContractionEstimate::from_distances(&dist, plan.m, eps);
        let med = stats::median(&dist);
        (dist, med, est.fraction)
    } else {
        (Vec::new(), f64::NAN, f64::NAN)
    };
    let wall_ms = if plan.record_timings {
        start.elapsed().as_millis() as u64
    } else {
        0
    };
    Ok(RateRow {
        n,
        rep,
        seed,
        a_n: a,
        eps_n_nolog: eps,
        l1_postmean,
        l1_postmedian,
        contraction_fraction,
        wall_ms,
        distances,
    })
}

/// Least-squares fit of `ln(median)` on `ln(n)`.
#[derive(Debug, Clone, PartialEq)]
pub struct RateFit {
    pub slope: f64,
    pub intercept: f64,
    pub slope_se: f64,
    pub ns: Vec<usize>,
    pub medians: Vec<f64>,
}

/// Fits the per-`n` medians of a table column.
pub fn fit_rate(table: &RateTable, column: Column) -> Result<RateFit> {
    fit_medians(&table.medians(column))
}

/// Fits `(n, median)` pairs.
pub fn fit_medians(points: &[(usize, f64)]) -> Result<RateFit> {
    let mut ns: Vec<usize> = points.iter().map(|p| p.0).collect();
    ns.dedup();
    if ns.len() < 4 || ns.len() != points.len() {
        return Err(Error::input("a rate fit needs at least 4 distinct n values"));
    }
    if let Some((n, m)) = points.iter().find(|p| !(p.1 > 0.0 && p.1.is_finite())) {
        return Err(Error::input(format!(
            "median at n = {n} is {m}; rate fits need positive medians"
        )));
    }
    let x: Vec<f64> = points.iter().map(|p| (p.0 as f64).ln()).collect();
    let y: Vec<f64> = points.iter().map(|p| p.1.ln()).collect();
    let LineFit {
        slope,
        intercept,
        slope_se,
    } = stats::ols(&x, &y);
    Ok(RateFit {
        slope,
        intercept,
        slope_se,
        ns,
        medians: points.iter().map(|p| p.1).collect(),
    })
}

/// Median over reps, at the smallest `n`, of the per-rep contraction
/// fraction at radius multiplier `m`.
pub fn smallest_n_fraction(table: &RateTable, m: f64) -> f64 {
    let n0 = table.ns()[0];
    let fr: Vec<f64> = table
        .rows
        .iter()
        .filter(|r| r.n == n0)
        .map(|r| ContractionEstimate::from_distances(&r.distances, m, r.eps_n_nolog).fraction)
        .collect();
    stats::median(&fr)
}

/// Picks `M` so that the smallest-`n` median contraction fraction is about
/// one half: the smallest `M` (to bisection precision) at which it drops to
/// 0.5 or below.
pub fn calibrate_m(table: &RateTable) -> Result<f64> {
    let n0 = *table
        .ns()
        .first()
        .ok_or_else(|| Error::input("empty rate table"))?;
    let rows: Vec<&RateRow> = table.rows.iter().filter(|r| r.n == n0).collect();
    if rows.iter().any(|r| r.distances.is_empty()) {
        return Err(Error::input("calibration needs posterior draws (S > 0)"));
    }
    let hi_start = rows
        .iter()
        .map(|r| r.distances.iter().cloned().fold(0.0, f64::max) / r.eps_n_nolog)
        .fold(0.0, f64::max)
        * 1.01;
    let (mut lo, mut hi) = (0.0, hi_start.max(1e-12));
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if smallest_n_fraction(table, mid) <= 0.5 {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    Ok(hi)
}
