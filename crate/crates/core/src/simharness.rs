//! Bayes coverage simulation.
//!
//! Each run draws a true parameter from the generative prior, simulates
//! multinomial data, forms the analysis posterior and records whether every
//! requested region covers the truth. All methods in one run see the same
//! data, so method comparisons are paired.

use rand_distr::{Binomial, Distribution};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::admissibility::{derive_moment_matrix, CorrelationSpec, MomentTarget};
use crate::binmap::{CellCounts, HBasis, DEFAULT_M_MAX};
use crate::error::{Error, Result};
use crate::fit::{exactness_tolerance, fit_gamma};
use crate::mbeta::{MBetaFull, MBetaReduced};
use crate::numerics::{sample_theta, DirichletSampler, RngStream};
use crate::regions::{
    cr_contrast, cr_copula_with, cr_normal_with, critical_value, extensive_from_sample,
    ContrastMatrix, CredibleRegion, Method, Posterior, RegionOptions,
};

/// Posterior sample size of the extensive method at desk scale.
pub const DESK_N_R: usize = 2000;
/// Posterior sample size of the extensive method at full scale.
pub const PAPER_N_R: usize = 10_000;
pub const DESK_N_SIM: usize = 2000;
pub const PAPER_N_SIM: usize = 50_000;
/// Lattice size per randomisation for `c_α` inside simulations.
pub const SIM_N_QMC: usize = 512;
pub const SIM_RANDOMIZATIONS: usize = 8;
/// Accuracy on `c_α` inside simulations; its effect on coverage is far
/// below the binomial error of a desk-scale run.
pub const SIM_MC_TOLERANCE: f64 = 1e-2;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AnalysisPrior {
    Correct,
    Vague,
}

impl AnalysisPrior {
    pub fn as_str(self) -> &'static str {
        match self {
            AnalysisPrior::Correct => "correct",
            AnalysisPrior::Vague => "vague",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Target {
    RawProportions,
    AllVsOneDifferences,
}

impl Target {
    pub fn as_str(self) -> &'static str {
        match self {
            Target::RawProportions => "raw_proportions",
            Target::AllVsOneDifferences => "all_vs_one_differences",
        }
    }
}

fn default_methods() -> Vec<Method> {
    vec![Method::Approximate, Method::Copula]
}
fn default_alpha() -> f64 {
    0.05
}
fn default_n_sim() -> usize {
    DESK_N_SIM
}
fn default_n_r() -> usize {
    DESK_N_R
}
fn default_n_qmc() -> usize {
    SIM_N_QMC
}
fn default_randomizations() -> usize {
    SIM_RANDOMIZATIONS
}
fn default_mc_tolerance() -> f64 {
    SIM_MC_TOLERANCE
}

/// One simulation configuration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Scenario {
    #[serde(default)]
    pub id: String,
    pub m: usize,
    pub nu_g: f64,
    pub mu_g: Vec<f64>,
    #[serde(alias = "R_g")]
    pub correlation: CorrelationSpec,
    pub n: u64,
    pub analysis_prior: AnalysisPrior,
    #[serde(default = "default_methods")]
    pub methods: Vec<Method>,
    #[serde(default = "target_raw")]
    pub target: Target,
    #[serde(default = "default_alpha")]
    pub alpha: f64,
    #[serde(default = "default_n_sim", alias = "N_sim")]
    pub n_sim: usize,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_n_r")]
    pub n_r: usize,
    #[serde(default = "default_n_qmc")]
    pub n_qmc: usize,
    #[serde(default = "default_randomizations")]
    pub randomizations: usize,
    #[serde(default = "default_mc_tolerance")]
    pub mc_tolerance: f64,
}

fn target_raw() -> Target {
    Target::RawProportions
}

impl Scenario {
    /// Equicorrelated scenario with a constant mean, desk-scale defaults.
    pub fn equicorrelated(
        m: usize,
        nu_g: f64,
        mu: f64,
        rho: f64,
        n: u64,
        prior: AnalysisPrior,
    ) -> Self {
        Self {
            id: format!("m{m}_nu{nu_g}_rho{rho}_n{n}_{}", prior.as_str()),
            m,
            nu_g,
            mu_g: vec![mu; m],
            correlation: CorrelationSpec::Equicorrelation { rho },
            n,
            analysis_prior: prior,
            methods: default_methods(),
            target: Target::RawProportions,
            alpha: 0.05,
            n_sim: DESK_N_SIM,
            seed: 0,
            n_r: DESK_N_R,
            n_qmc: SIM_N_QMC,
            randomizations: SIM_RANDOMIZATIONS,
            mc_tolerance: SIM_MC_TOLERANCE,
        }
    }

    /// Restores full-scale run counts and posterior sample size.
    pub fn paper_scale(mut self) -> Self {
        self.n_sim = PAPER_N_SIM;
        self.n_r = PAPER_N_R;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if self.m == 0 {
            return Err(Error::EmptyDimension);
        }
        if self.m > DEFAULT_M_MAX {
            return Err(Error::DimensionTooLarge {
                m: self.m,
                max: DEFAULT_M_MAX,
            });
        }
        if self.mu_g.len() != self.m {
            return Err(Error::LengthMismatch {
                expected: self.m,
                found: self.mu_g.len(),
            });
        }
        if self.n_sim == 0 {
            return Err(Error::InvalidParameter("n_sim must be at least 1".into()));
        }
        if self.methods.is_empty() {
            return Err(Error::InvalidParameter(
                "at least one method is required".into(),
            ));
        }
        if !(self.alpha > 0.0 && self.alpha < 1.0) {
            return Err(Error::InvalidProbability(format!(
                "alpha must lie in (0, 1), got {}",
                self.alpha
            )));
        }
        if self.target == Target::AllVsOneDifferences && self.m < 2 {
            return Err(Error::InvalidParameter(
                "difference targets need m >= 2".into(),
            ));
        }
        Ok(())
    }

    fn moment_target(&self) -> Result<MomentTarget<f64>> {
        let corr = self.correlation.to_matrix(self.m)?;
        MomentTarget::new(self.nu_g, self.mu_g.clone(), corr)
    }
}

/// Fits the generative `γ_g`; only exact fits are accepted.
pub fn build_generative_prior(scn: &Scenario) -> Result<MBetaFull<f64>> {
    scn.validate()?;
    let infeasible = |e: Error| Error::InfeasibleScenario(e.to_string());
    let target = scn.moment_target().map_err(infeasible)?;
    let red = derive_moment_matrix(&target).map_err(infeasible)?;
    let basis = HBasis::new(scn.m)?;
    let fit = fit_gamma(&red, &basis).map_err(infeasible)?;
    let tol = exactness_tolerance(&red.alpha_tilde());
    if !fit.exact || fit.residual > tol {
        return Err(Error::InfeasibleScenario(format!(
            "generative moments are not attainable (residual {:.3e})",
            fit.residual
        )));
    }
    MBetaFull::new(scn.m, fit.gamma)
}

/// Multinomial counts by sequential conditional binomials.
pub fn multinomial_draw(n: u64, p: &[f64], rng: &mut RngStream) -> Result<Vec<u64>> {
    if p.is_empty() {
        return Err(Error::InvalidProbability("empty probability vector".into()));
    }
    if p.iter().any(|&v| !(v >= 0.0) || !v.is_finite()) {
        return Err(Error::InvalidProbability(
            "probabilities must be finite and nonnegative".into(),
        ));
    }
    let total: f64 = p.iter().sum();
    if (total - 1.0).abs() > 1e-12 {
        return Err(Error::InvalidProbability(format!(
            "probabilities sum to {total}, not 1"
        )));
    }
    let mut out = vec![0u64; p.len()];
    let mut left = n;
    let mut mass = 1.0;
    for (k, &pk) in p.iter().enumerate() {
        if left == 0 {
            break;
        }
        if k + 1 == p.len() || pk >= mass {
            out[k] = left;
            break;
        }
        let q = (pk / mass).clamp(0.0, 1.0);
        let draw = Binomial::new(left, q)
            .map_err(|e| Error::InvalidProbability(e.to_string()))?
            .sample(rng);
        out[k] = draw;
        left -= draw;
        mass -= pk;
    }
    Ok(out)
}

/// Aggregated outcome for one method.
#[derive(Debug, Clone, PartialEq)]
pub struct MethodResult {
    pub method: Method,
    pub bcp_estimate: f64,
    pub bcp_std_error: f64,
    /// Runs that produced a region.
    pub runs: usize,
    /// Runs whose region construction failed.
    pub failures: usize,
    /// Share of regions not inside the support of the target.
    pub frac_outside_unit_cube: f64,
    pub mean_region_volume_log: f64,
    /// Coverage indicator per run (`None` for a failed run), for paired
    /// comparisons between methods.
    pub indicators: Vec<Option<bool>>,
    /// First failure message, if any.
    pub first_error: Option<String>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimResult {
    pub scenario_id: String,
    pub target: Target,
    pub analysis_prior: AnalysisPrior,
    pub n: u64,
    pub methods: Vec<MethodResult>,
}

impl SimResult {
    pub fn method(&self, method: Method) -> Option<&MethodResult> {
        self.methods.iter().find(|r| r.method == method)
    }
}

/// Region outcome of one method in one run.
type RunOutcome = Result<(bool, bool, f64)>;

struct Shared {
    sampler: DirichletSampler,
    basis: HBasis,
    analysis_full: MBetaFull<f64>,
    analysis_red: MBetaReduced<f64>,
    contrast: Option<ContrastMatrix>,
    opts: RegionOptions,
}

/// Runs the scenario; `(scenario, seed)` fixes the result bitwise.
pub fn run_simulation(scn: &Scenario) -> Result<SimResult> {
    let gen = build_generative_prior(scn)?;
    let basis = HBasis::new(scn.m)?;
    let (analysis_full, analysis_red) = match scn.analysis_prior {
        AnalysisPrior::Correct => (gen.clone(), gen.moment_matrix(&basis)?),
        AnalysisPrior::Vague => (MBetaFull::vague(scn.m)?, MBetaReduced::vague(scn.m)?),
    };
    let contrast = match scn.target {
        Target::RawProportions => None,
        Target::AllVsOneDifferences => Some(ContrastMatrix::all_vs_one(scn.m)?),
    };
    let shared = Shared {
        sampler: DirichletSampler::new(gen.gamma())?,
        basis,
        analysis_full,
        analysis_red,
        contrast,
        opts: RegionOptions {
            n_qmc: scn.n_qmc,
            randomizations: scn.randomizations,
            mc_tolerance: scn.mc_tolerance,
            n_r: scn.n_r,
            ..RegionOptions::default()
        },
    };
    let root = RngStream::new(scn.seed, 0);
    let per_run: Vec<Vec<RunOutcome>> = (0..scn.n_sim)
        .into_par_iter()
        .map(|i| one_run(scn, &shared, root.substream(i as u64)))
        .collect();

    let methods = scn
        .methods
        .iter()
        .enumerate()
        .map(|(mi, &method)| aggregate(method, per_run.iter().map(|r| &r[mi])))
        .collect();
    Ok(SimResult {
        scenario_id: scn.id.clone(),
        target: scn.target,
        analysis_prior: scn.analysis_prior,
        n: scn.n,
        methods,
    })
}

fn aggregate<'a>(method: Method, outcomes: impl Iterator<Item = &'a RunOutcome>) -> MethodResult {
    let (mut hits, mut runs, mut failures, mut outside) = (0usize, 0usize, 0usize, 0usize);
    // Kahan summation keeps the mean log volume independent of run count scale
    let (mut vol_sum, mut vol_comp) = (0.0f64, 0.0f64);
    let mut indicators = Vec::new();
    let mut first_error = None;
    for o in outcomes {
        match o {
            Ok((covered, inside, log_vol)) => {
                runs += 1;
                hits += usize::from(*covered);
                outside += usize::from(!*inside);
                let y = log_vol - vol_comp;
                let t = vol_sum + y;
                vol_comp = (t - vol_sum) - y;
                vol_sum = t;
                indicators.push(Some(*covered));
            }
            Err(e) => {
                failures += 1;
                first_error.get_or_insert_with(|| e.to_string());
                indicators.push(None);
            }
        }
    }
    let denom = runs.max(1) as f64;
    let bcp = hits as f64 / denom;
    MethodResult {
        method,
        bcp_estimate: bcp,
        bcp_std_error: if runs > 0 {
            (bcp * (1.0 - bcp) / denom).sqrt()
        } else {
            0.0
        },
        runs,
        failures,
        frac_outside_unit_cube: outside as f64 / denom,
        mean_region_volume_log: if runs > 0 { vol_sum / denom } else { f64::NAN },
        indicators,
        first_error,
    }
}

fn one_run(scn: &Scenario, sh: &Shared, rng: RngStream) -> Vec<RunOutcome> {
    let fail_all = |e: Error| scn.methods.iter().map(|_| Err(e.clone())).collect();
    let w = sh.basis.w();
    let mut p = vec![0.0; w];
    sh.sampler.draw_into(&mut rng.substream(0), &mut p);
    let theta: Vec<f64> = (0..scn.m)
        .map(|j| {
            sh.basis
                .h()
                .row(j)
                .iter()
                .zip(&p)
                .filter(|(b, _)| **b == 1)
                .map(|(_, v)| v)
                .sum::<f64>()
                .min(1.0)
        })
        .collect();
    // renormalise against roundoff before the exact sum check
    let total: f64 = p.iter().sum();
    p.iter_mut().for_each(|v| *v /= total);
    let d = match multinomial_draw(scn.n, &p, &mut rng.substream(1))
        .and_then(|d| CellCounts::from_counts(scn.m, d))
    {
        Ok(d) => d,
        Err(e) => return fail_all(e),
    };
    let post_red = match sh.analysis_red.update(&d, &sh.basis) {
        Ok(r) => r,
        Err(e) => return fail_all(e),
    };
    let needs_full = scn.methods.iter().any(|&m| m == Method::Extensive)
        || (sh.contrast.is_some() && scn.methods.iter().any(|&m| m != Method::Approximate));
    let post_full = if needs_full {
        match sh.analysis_full.update(&d) {
            Ok(f) => Some(f),
            Err(e) => return fail_all(e),
        }
    } else {
        None
    };
    match &sh.contrast {
        None => raw_regions(scn, sh, &theta, &post_red, post_full.as_ref(), &rng),
        Some(k) => contrast_regions(scn, sh, k, &theta, &post_red, post_full.as_ref(), &rng),
    }
}

fn score(region: &CredibleRegion, truth: &[f64]) -> (bool, bool, f64) {
    (
        region.contains(truth),
        region.contains_unit_cube,
        region.log_volume(),
    )
}

fn raw_regions(
    scn: &Scenario,
    sh: &Shared,
    theta: &[f64],
    post_red: &MBetaReduced<f64>,
    post_full: Option<&MBetaFull<f64>>,
    rng: &RngStream,
) -> Vec<RunOutcome> {
    let summary = post_red.mean_cov();
    // c_α depends only on the posterior correlation, so both moment-based
    // methods share one evaluation
    let needs_c = scn.methods.iter().any(|&m| m != Method::Extensive);
    let c = match (&summary, needs_c) {
        (Ok(s), true) => Some(
            critical_value(&s.corr, scn.alpha, &mut rng.substream(2), &sh.opts).map(|q| q.c_alpha),
        ),
        _ => None,
    };
    scn.methods
        .iter()
        .map(|&method| {
            let s = summary.as_ref().map_err(Clone::clone)?;
            let region = match method {
                Method::Approximate => {
                    cr_normal_with(s, scn.alpha, c.clone().expect("computed above")?)?
                }
                Method::Copula => cr_copula_with(
                    &s.marginal_ab,
                    scn.alpha,
                    c.clone().expect("computed above")?,
                )?,
                Method::Extensive => {
                    let full = post_full.expect("full posterior available");
                    let sample =
                        sample_theta(full.gamma(), &sh.basis, scn.n_r, &mut rng.substream(3))?;
                    extensive_from_sample(&s.marginal_ab, &sample, scn.alpha)?
                }
            };
            Ok(score(&region, theta))
        })
        .collect()
}

fn contrast_regions(
    scn: &Scenario,
    sh: &Shared,
    k: &ContrastMatrix,
    theta: &[f64],
    post_red: &MBetaReduced<f64>,
    post_full: Option<&MBetaFull<f64>>,
    rng: &RngStream,
) -> Vec<RunOutcome> {
    let truth = match k.apply(theta) {
        Ok(t) => t,
        Err(e) => return scn.methods.iter().map(|_| Err(e.clone())).collect(),
    };
    scn.methods
        .iter()
        .enumerate()
        .map(|(i, &method)| {
            let input = match (method, post_full) {
                (Method::Approximate, _) | (_, None) => Posterior::Reduced(post_red),
                (_, Some(f)) => Posterior::Full(f, &sh.basis),
            };
            let mut r = rng.substream(10 + i as u64);
            let region = cr_contrast(input, k, scn.alpha, method, &mut r, &sh.opts)?;
            Ok(score(&region, &truth))
        })
        .collect()
}

/// Long-format CSV rows: scenario_id, method, target, analysis_prior, n,
/// bcp, se, frac_outside, runs, failures, mean_log_volume.
pub fn write_sim_csv<W: std::io::Write>(results: &[SimResult], out: W) -> Result<()> {
    let mut wtr = csv::Writer::from_writer(out);
    let fmt = |e: csv::Error| Error::Format(e.to_string());
    wtr.write_record([
        "scenario_id",
        "method",
        "target",
        "analysis_prior",
        "n",
        "bcp",
        "se",
        "frac_outside",
        "runs",
        "failures",
        "mean_log_volume",
    ])
    .map_err(fmt)?;
    for res in results {
        for mr in &res.methods {
            wtr.write_record([
                res.scenario_id.clone(),
                mr.method.to_string(),
                res.target.as_str().to_string(),
                res.analysis_prior.as_str().to_string(),
                res.n.to_string(),
                format!("{:.6}", mr.bcp_estimate),
                format!("{:.6}", mr.bcp_std_error),
                format!("{:.6}", mr.frac_outside_unit_cube),
                mr.runs.to_string(),
                mr.failures.to_string(),
                format!("{:.6}", mr.mean_region_volume_log),
            ])
            .map_err(fmt)?;
        }
    }
    wtr.flush().map_err(|e| Error::Format(e.to_string()))
}

/// Pearson chi-square statistic of counts against probabilities.
pub fn chi_square(counts: &[u64], p: &[f64]) -> f64 {
    let n: u64 = counts.iter().sum();
    counts
        .iter()
        .zip(p)
        .filter(|(_, &pk)| pk > 0.0)
        .map(|(&c, &pk)| {
            let e = n as f64 * pk;
            (c as f64 - e).powi(2) / e
        })
        .sum()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small(m: usize, prior: AnalysisPrior, n: u64, n_sim: usize) -> Scenario {
        Scenario {
            n_sim,
            ..Scenario::equicorrelated(m, 20.0, 0.75, 0.5, n, prior)
        }
    }

    #[test]
    fn generative_priors_fit_exactly() {
        let g = build_generative_prior(&small(5, AnalysisPrior::Correct, 10, 1)).unwrap();
        assert!((g.nu() - 20.0).abs() < 1e-9);
        let scn = Scenario {
            mu_g: [vec![0.75; 5], vec![0.7; 5]].concat(),
            correlation: CorrelationSpec::Block {
                sizes: vec![5, 5],
                within: 0.5,
                between: None,
            },
            ..small(10, AnalysisPrior::Correct, 10, 1)
        };
        build_generative_prior(&scn).unwrap();
        let scn = Scenario {
            nu_g: 2.0,
            mu_g: vec![0.5; 2],
            correlation: CorrelationSpec::Equicorrelation { rho: 0.0 },
            ..small(2, AnalysisPrior::Correct, 10, 1)
        };
        let g = build_generative_prior(&scn).unwrap();
        assert!(g.gamma().iter().all(|v| (v - 0.5).abs() < 1e-9));
    }

    #[test]
    fn infeasible_generative_prior() {
        let scn = Scenario {
            mu_g: vec![0.9, 0.1],
            correlation: CorrelationSpec::Equicorrelation { rho: 0.9 },
            ..small(2, AnalysisPrior::Correct, 10, 1)
        };
        assert!(matches!(
            build_generative_prior(&scn),
            Err(Error::InfeasibleScenario(_))
        ));
    }

    #[test]
    fn multinomial_edge_cases() {
        let mut rng = RngStream::new(1, 0);
        assert_eq!(
            multinomial_draw(0, &[0.5, 0.5], &mut rng).unwrap(),
            vec![0, 0]
        );
        assert_eq!(
            multinomial_draw(17, &[0.0, 1.0, 0.0], &mut rng).unwrap(),
            vec![0, 17, 0]
        );
        assert!(multinomial_draw(5, &[0.5, 0.6], &mut rng).is_err());
        let d = multinomial_draw(1000, &[0.1, 0.2, 0.3, 0.4], &mut rng).unwrap();
        assert_eq!(d.iter().sum::<u64>(), 1000);
    }

    #[test]
    fn multinomial_goodness_of_fit() {
        let p = [0.05, 0.1, 0.15, 0.2, 0.25, 0.125, 0.075, 0.05];
        let d = multinomial_draw(100_000, &p, &mut RngStream::new(2, 0)).unwrap();
        // χ²₇ upper 1% point
        assert!(chi_square(&d, &p) < 18.475);
    }

    #[test]
    fn single_run_is_deterministic() {
        let mut scn = small(3, AnalysisPrior::Correct, 30, 1);
        scn.methods = vec![Method::Approximate, Method::Copula, Method::Extensive];
        scn.n_r = 1000;
        scn.seed = 42;
        let a = run_simulation(&scn).unwrap();
        let b = run_simulation(&scn).unwrap();
        assert_eq!(a, b);
        for mr in &a.methods {
            assert_eq!(mr.runs + mr.failures, 1);
            assert!(mr.bcp_estimate == 0.0 || mr.bcp_estimate == 1.0);
        }
    }

    #[test]
    fn small_run_reports_are_consistent() {
        let mut scn = small(3, AnalysisPrior::Vague, 20, 60);
        scn.methods = vec![Method::Approximate, Method::Copula];
        let res = run_simulation(&scn).unwrap();
        for mr in &res.methods {
            assert_eq!(mr.failures, 0, "{:?}", mr.first_error);
            assert!(mr.bcp_std_error <= 0.5 / (mr.runs as f64).sqrt() + 1e-15);
        }
        assert_eq!(
            res.method(Method::Copula).unwrap().frac_outside_unit_cube,
            0.0
        );
        let mut buf = Vec::new();
        write_sim_csv(&[res], &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert_eq!(text.lines().count(), 3);
        assert!(text.starts_with("scenario_id,method,target"));
    }

    #[test]
    fn difference_target_runs() {
        let mut scn = small(3, AnalysisPrior::Correct, 40, 5);
        scn.target = Target::AllVsOneDifferences;
        scn.methods = vec![Method::Approximate, Method::Copula, Method::Extensive];
        scn.n_r = 1000;
        let res = run_simulation(&scn).unwrap();
        for mr in &res.methods {
            assert_eq!(mr.runs, 5, "{:?}", mr.first_error);
        }
    }

    #[test]
    fn scenario_json_round_trip() {
        let json = r#"{"m": 2, "nu_g": 10, "mu_g": [0.6, 0.7],
            "R_g": {"type": "equicorrelation", "rho": 0.2},
            "n": 50, "analysis_prior": "vague", "N_sim": 3,
            "methods": ["approximate", "copula"]}"#;
        let scn: Scenario = serde_json::from_str(json).unwrap();
        assert_eq!(scn.n_sim, 3);
        assert_eq!(scn.target, Target::RawProportions);
        let back: Scenario = serde_json::from_str(&serde_json::to_string(&scn).unwrap()).unwrap();
        assert_eq!(scn, back);
    }
}
