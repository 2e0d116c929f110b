//! Experiment configuration files.
//!
//! One TOML file per experiment. Every table rejects unknown keys; each
//! subcommand requires the tables it reads.

use std::path::PathBuf;

use anyhow::{bail, Context, Result};
use rgp_core::kest::{FlatTopSpec, Profile};
use rgp_core::rates::{Mode, Schedule, TruthSpec};
use rgp_core::synth::{CovariateDensity, TruthKind};
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Default, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub seed: Option<u64>,
    pub out: Option<PathBuf>,
    /// Worker threads; 0 or absent means all available cores.
    pub workers: Option<usize>,
    pub schedule: Option<ScheduleSection>,
    pub plan: Option<PlanSection>,
    pub truth: Option<TruthSection>,
    #[serde(default)]
    pub q: QSection,
    pub check: Option<CheckSection>,
    pub concentration: Option<ConcentrationSection>,
    pub kernel: Option<KernelSection>,
    pub rkhs: Option<RkhsSection>,
    pub simulate: Option<SimulateSection>,
}

#[derive(Debug, Clone, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
pub struct ScheduleSection {
    pub alpha: f64,
    /// Prior smoothness; absent or equal to `alpha` means matched.
    pub beta: Option<f64>,
    pub d: usize,
    pub t1: Option<f64>,
    /// Either `t2` or `kappa` may be given; `t2 = 1/(2 − κ)`.
    pub t2: Option<f64>,
    pub kappa: Option<f64>,
    #[serde(default)]
    pub allow_rough: bool,
}

#[derive(Debug, Clone, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
pub struct PlanSection {
    pub n: Vec<usize>,
    pub reps: usize,
    #[serde(default = "one")]
    pub m: f64,
    /// Replace `m` by the value that puts the smallest-n fraction at 1/2.
    #[serde(default)]
    pub calibrate_m: bool,
    #[serde(default = "default_draws")]
    pub s: usize,
    #[serde(default = "default_grid")]
    pub grid: usize,
    #[serde(default = "one")]
    pub noise_sd: f64,
    #[serde(default = "one")]
    pub fit_noise_var: f64,
    #[serde(default)]
    pub record_timings: bool,
}

#[derive(Debug, Clone, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
pub struct TruthSection {
    pub kind: String,
    /// Defaults to the schedule's `alpha`.
    pub alpha: Option<f64>,
    #[serde(default = "default_terms")]
    pub k: usize,
    #[serde(default = "one")]
    pub amplitude: f64,
    #[serde(default)]
    pub seed: u64,
}

#[derive(Debug, Clone, Default, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
pub struct QSection {
    /// `uniform` (default) or `piecewise`.
    pub kind: Option<String>,
    pub edges: Option<Vec<f64>>,
    pub masses: Option<Vec<f64>>,
}

#[derive(Debug, Clone, Default, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
pub struct CheckSection {
    /// Target slope for `rates`; defaults to minus the predicted exponent.
    pub slope_target: Option<f64>,
    #[serde(default = "default_slope_tol")]
    pub slope_tol: f64,
    /// Required drop of the median contraction fraction from the smallest to
    /// the largest n.
    pub contraction_drop: Option<f64>,
}

#[derive(Debug, Clone, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
pub struct ConcentrationSection {
    pub n: Vec<usize>,
    pub reps: usize,
    #[serde(default = "default_inner")]
    pub inner: usize,
    /// Fixed bandwidth; absent means `σ_n` from the schedule.
    pub sigma: Option<f64>,
    #[serde(default = "default_grid")]
    pub grid: usize,
    #[serde(default = "yes")]
    pub noise: bool,
    #[serde(default = "yes")]
    pub design: bool,
}

#[derive(Debug, Clone, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
pub struct KernelSection {
    #[serde(default = "default_profile")]
    pub profile: String,
    #[serde(default = "one_usize")]
    pub d: usize,
    pub t_max: Option<f64>,
    pub intervals: Option<usize>,
    pub spectral_nodes: Option<usize>,
}

#[derive(Debug, Clone, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
pub struct RkhsSection {
    pub a: Vec<f64>,
    pub d: Vec<usize>,
    pub elements: usize,
    #[serde(default = "default_centers")]
    pub centers: usize,
    /// Grid points per axis; absent means the per-dimension default.
    pub grid: Option<usize>,
}

#[derive(Debug, Clone, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
pub struct SimulateSection {
    pub n: usize,
    /// Inverse bandwidth; absent means `a_n` from the schedule.
    pub a: Option<f64>,
    #[serde(default = "one")]
    pub noise_sd: f64,
    #[serde(default = "default_grid")]
    pub grid: usize,
}

fn one() -> f64 {
    1.0
}
fn one_usize() -> usize {
    1
}
fn yes() -> bool {
    true
}
fn default_draws() -> usize {
    200
}
fn default_grid() -> usize {
    512
}
fn default_terms() -> usize {
    100
}
fn default_inner() -> usize {
    32
}
fn default_centers() -> usize {
    8
}
fn default_slope_tol() -> f64 {
    0.10
}
fn default_profile() -> String {
    "smooth-bump".into()
}

impl ExperimentConfig {
    pub fn parse(text: &str) -> Result<Self> {
        toml::from_str(text).context("cannot parse config")
    }

    pub fn seed(&self) -> u64 {
        self.seed.unwrap_or(0)
    }

    pub fn schedule(&self) -> Result<Schedule> {
        let s = self.schedule.as_ref().context("missing [schedule] table")?;
        let d = s.d as f64;
        let beta = s.beta.unwrap_or(s.alpha);
        let mode = if beta == s.alpha { Mode::Matched } else { Mode::Mismatched };
        let kappa = match (s.kappa, s.t2) {
            (Some(_), Some(_)) => bail!("give either kappa or t2, not both"),
            (Some(k), None) => k,
            (None, Some(t2)) => {
                if !(t2 > 0.0) {
                    bail!("t2 must be positive");
                }
                2.0 - 1.0 / t2
            }
            (None, None) => 0.5,
        };
        let sched = Schedule {
            alpha: s.alpha,
            beta,
            d: s.d,
            t1: s.t1.unwrap_or((d + 1.0) / 2.0),
            kappa,
            mode,
            allow_rough: s.allow_rough,
        };
        sched.validate()?;
        Ok(sched)
    }

    pub fn plan(&self) -> Result<&PlanSection> {
        self.plan.as_ref().context("missing [plan] table")
    }

    pub fn truth_spec(&self, schedule: &Schedule) -> Result<TruthSpec> {
        let t = self.truth.as_ref().context("missing [truth] table")?;
        let kind: TruthKind = t.kind.parse()?;
        Ok(TruthSpec {
            kind,
            alpha: t.alpha.unwrap_or(schedule.alpha),
            k: t.k,
            amplitude: t.amplitude,
            seed: t.seed,
        })
    }

    pub fn density(&self, d: usize) -> Result<CovariateDensity> {
        let q = &self.q;
        match q.kind.as_deref().unwrap_or("uniform") {
            "uniform" => {
                if q.edges.is_some() || q.masses.is_some() {
                    bail!("a uniform density takes no edges or masses");
                }
                Ok(CovariateDensity::uniform(d))
            }
            "piecewise" => {
                let edges = q.edges.clone().context("a piecewise density needs edges")?;
                let masses = q.masses.clone().context("a piecewise density needs masses")?;
                Ok(CovariateDensity::piecewise(d, edges, masses)?)
            }
            other => bail!("unknown density kind {other:?} (expected uniform or piecewise)"),
        }
    }

    pub fn flat_top_spec(&self) -> Result<FlatTopSpec> {
        let k = self.kernel.as_ref().context("missing [kernel] table")?;
        let profile: Profile = k.profile.parse()?;
        let mut spec = FlatTopSpec::with_profile(profile, k.d);
        if let Some(t) = k.t_max {
            spec.t_max = t;
        }
        if let Some(i) = k.intervals {
            spec.intervals = i;
        }
        if let Some(s) = k.spectral_nodes {
            spec.spectral_nodes = s;
        }
        Ok(spec)
    }

    pub fn out_dir(&self) -> Result<PathBuf> {
        self.out.clone().context("no output directory: set `out` in the config or pass --out")
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const BASE: &str = r#"
seed = 3
out = "x"
[schedule]
alpha = 1.0
d = 1
[plan]
n = [128, 256, 512, 1024]
reps = 10
[truth]
kind = "cosine-series"
"#;

    #[test]
    fn defaults_resolve() {
        let c = ExperimentConfig::parse(BASE).unwrap();
        let s = c.schedule().unwrap();
        assert_eq!(s.t1, 1.0);
        assert_eq!(s.kappa, 0.5);
        assert_eq!(s.mode, Mode::Matched);
        assert_eq!(c.plan().unwrap().s, 200);
        assert!(c.density(1).unwrap().is_uniform());
        assert_eq!(c.truth_spec(&s).unwrap().alpha, 1.0);
    }

    #[test]
    fn unknown_keys_are_rejected() {
        let text = BASE.replace("reps = 10", "reps = 10\nrepz = 3");
        assert!(ExperimentConfig::parse(&text).is_err());
        assert!(ExperimentConfig::parse("colour = 1").is_err());
    }

    #[test]
    fn rough_alpha_cites_precondition() {
        let text = BASE.replace("alpha = 1.0", "alpha = 0.4");
        let e = ExperimentConfig::parse(&text).unwrap().schedule().unwrap_err();
        assert!(format!("{e:#}").contains("α > d/2"));
        let text = BASE.replace("alpha = 1.0", "alpha = 0.4\nallow_rough = true");
        assert!(ExperimentConfig::parse(&text).unwrap().schedule().is_ok());
    }

    #[test]
    fn t2_maps_to_kappa() {
        let text = BASE.replace("d = 1", "d = 1\nt2 = 0.8");
        let s = ExperimentConfig::parse(&text).unwrap().schedule().unwrap();
        assert!((s.t2() - 0.8).abs() < 1e-12);
    }
}
