//! Simultaneous credible regions for `ϑ` and for linear contrasts `Kϑ`.
//!
//! All regions are boxes. The approximate method centres a normal box on the
//! posterior mean; the copula method keeps the normal dependence through
//! `c_α` but uses exact Beta marginals; the extensive method tunes the
//! marginal tail level on a posterior sample.

use std::fmt;
use std::str::FromStr;

use crate::binmap::HBasis;
use crate::error::{Error, Result};
use crate::linalg::Matrix;
use crate::mbeta::{MBetaFull, MBetaReduced, MomentSummary};
use crate::numerics::mvn::{equicoordinate_quantile, EquicoordinateQuantile, QuantileRequest};
use crate::numerics::special::{beta_cdf, beta_quantile, normal_cdf};
use crate::numerics::{sample_theta, RngStream};

/// Smallest posterior sample accepted by the sampling-based methods.
pub const MIN_SAMPLES: usize = 1000;
pub const DEFAULT_SAMPLES: usize = 10_000;

#[derive(
    Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, serde::Serialize, serde::Deserialize,
)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    Approximate,
    Copula,
    Extensive,
}

impl Method {
    pub const ALL: [Method; 3] = [Method::Approximate, Method::Copula, Method::Extensive];

    pub fn as_str(self) -> &'static str {
        match self {
            Method::Approximate => "approximate",
            Method::Copula => "copula",
            Method::Extensive => "extensive",
        }
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "approximate" | "normal" => Ok(Method::Approximate),
            "copula" => Ok(Method::Copula),
            "extensive" => Ok(Method::Extensive),
            other => Err(Error::InvalidParameter(format!(
                "unknown region method '{other}'"
            ))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CredibleRegion {
    pub method: Method,
    pub level: f64,
    pub labels: Vec<String>,
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
    pub c_alpha: Option<f64>,
    pub alpha_tilde: Option<f64>,
    pub n_r: Option<usize>,
    /// Whether the box lies inside the support of the target: `[0, 1]^m`
    /// for proportions, the attainable range of each contrast otherwise.
    pub contains_unit_cube: bool,
}

impl CredibleRegion {
    pub fn dim(&self) -> usize {
        self.lower.len()
    }

    /// Closed-box membership.
    pub fn contains(&self, theta: &[f64]) -> bool {
        theta.len() == self.dim()
            && theta
                .iter()
                .zip(self.lower.iter().zip(&self.upper))
                .all(|(t, (l, u))| l <= t && t <= u)
    }

    pub fn log_volume(&self) -> f64 {
        self.lower
            .iter()
            .zip(&self.upper)
            .map(|(l, u)| (u - l).ln())
            .sum()
    }
}

/// Rows of `K` with labels, for targets `Kϑ`.
#[derive(Debug, Clone, PartialEq)]
pub struct ContrastMatrix {
    k: Matrix<f64>,
    labels: Vec<String>,
}

impl ContrastMatrix {
    pub fn new(k: Matrix<f64>, labels: Vec<String>) -> Result<Self> {
        if k.rows() == 0 || k.cols() == 0 {
            return Err(Error::InvalidParameter(
                "contrast matrix must be nonempty".into(),
            ));
        }
        if labels.len() != k.rows() {
            return Err(Error::LengthMismatch {
                expected: k.rows(),
                found: labels.len(),
            });
        }
        if let Some(r) = (0..k.rows()).find(|&r| k.row(r).iter().all(|&v| v == 0.0)) {
            return Err(Error::InvalidParameter(format!(
                "contrast row {r} is all zero"
            )));
        }
        if k.as_slice().iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidParameter(
                "contrast entries must be finite".into(),
            ));
        }
        Ok(Self { k, labels })
    }

    pub fn identity(m: usize) -> Result<Self> {
        Self::new(Matrix::identity(m), raw_labels(m))
    }

    /// `(I_{m−1}, −1_{m−1})`: every coordinate against the last one.
    pub fn all_vs_one(m: usize) -> Result<Self> {
        if m < 2 {
            return Err(Error::InvalidParameter(
                "all-vs-one contrasts need m >= 2".into(),
            ));
        }
        let mut k = Matrix::zeros(m - 1, m);
        for j in 0..m - 1 {
            k[(j, j)] = 1.0;
            k[(j, m - 1)] = -1.0;
        }
        let labels = (1..m).map(|j| format!("theta{j}-theta{m}")).collect();
        Self::new(k, labels)
    }

    pub fn matrix(&self) -> &Matrix<f64> {
        &self.k
    }

    pub fn labels(&self) -> &[String] {
        &self.labels
    }

    pub fn t(&self) -> usize {
        self.k.rows()
    }

    pub fn m(&self) -> usize {
        self.k.cols()
    }

    /// `Kϑ` for one vector.
    pub fn apply(&self, theta: &[f64]) -> Result<Vec<f64>> {
        self.k.matvec(theta)
    }

    /// Per-row range `[Σ min(K_jl, 0), Σ max(K_jl, 0)]` of `Kϑ` over the cube.
    pub fn support(&self) -> Vec<(f64, f64)> {
        (0..self.t())
            .map(|r| {
                let row = self.k.row(r);
                (
                    row.iter().map(|v| v.min(0.0)).sum(),
                    row.iter().map(|v| v.max(0.0)).sum(),
                )
            })
            .collect()
    }
}

pub fn raw_labels(m: usize) -> Vec<String> {
    (1..=m).map(|j| format!("theta{j}")).collect()
}

/// Tuning of the Monte Carlo parts of region construction.
#[derive(Debug, Clone, PartialEq)]
pub struct RegionOptions {
    pub n_qmc: usize,
    pub randomizations: usize,
    pub mc_tolerance: f64,
    pub max_samples: usize,
    /// Posterior sample size for sampling-based pieces.
    pub n_r: usize,
}

impl Default for RegionOptions {
    fn default() -> Self {
        Self {
            n_qmc: 8192,
            randomizations: 16,
            mc_tolerance: 2e-3,
            max_samples: 1 << 22,
            n_r: DEFAULT_SAMPLES,
        }
    }
}

fn check_alpha(alpha: f64) -> Result<()> {
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(Error::InvalidProbability(format!(
            "alpha must lie in (0, 1), got {alpha}"
        )));
    }
    Ok(())
}

/// `c_α` for the correlation matrix `corr` at level `1 − α`.
pub fn critical_value(
    corr: &Matrix<f64>,
    alpha: f64,
    rng: &mut RngStream,
    opts: &RegionOptions,
) -> Result<EquicoordinateQuantile> {
    check_alpha(alpha)?;
    let req = QuantileRequest {
        corr: corr.clone(),
        level: 1.0 - alpha,
        mc_tolerance: opts.mc_tolerance,
        max_samples: opts.max_samples,
        n_qmc: opts.n_qmc,
        randomizations: opts.randomizations,
    };
    equicoordinate_quantile(&req, rng)
}

/// Marginal tail probability matched to `c`: `α̃ = 2(1 − Φ(c))`.
pub fn alpha_tilde_from_c(c: f64) -> f64 {
    2.0 * normal_cdf(-c)
}

fn in_cube(lower: &[f64], upper: &[f64]) -> bool {
    lower.iter().all(|&l| l >= 0.0) && upper.iter().all(|&u| u <= 1.0)
}

/// Normal-approximation box `μ ± c√v` for a given `c`.
pub fn cr_normal_with(summary: &MomentSummary<f64>, alpha: f64, c: f64) -> Result<CredibleRegion> {
    check_alpha(alpha)?;
    let sd: Vec<f64> = summary
        .variances()
        .iter()
        .map(|v| v.max(0.0).sqrt())
        .collect();
    let lower: Vec<f64> = summary.mu.iter().zip(&sd).map(|(m, s)| m - c * s).collect();
    let upper: Vec<f64> = summary.mu.iter().zip(&sd).map(|(m, s)| m + c * s).collect();
    Ok(CredibleRegion {
        method: Method::Approximate,
        level: 1.0 - alpha,
        labels: raw_labels(lower.len()),
        contains_unit_cube: in_cube(&lower, &upper),
        lower,
        upper,
        c_alpha: Some(c),
        alpha_tilde: None,
        n_r: None,
    })
}

/// Beta-marginal box at tail level `α̃` for a given `c`.
pub fn cr_copula_with(marginals: &[(f64, f64)], alpha: f64, c: f64) -> Result<CredibleRegion> {
    check_alpha(alpha)?;
    let at = alpha_tilde_from_c(c);
    let mut region = beta_box(marginals, at)?;
    region.method = Method::Copula;
    region.level = 1.0 - alpha;
    region.c_alpha = Some(c);
    Ok(region)
}

fn beta_box(marginals: &[(f64, f64)], alpha_tilde: f64) -> Result<CredibleRegion> {
    let at = alpha_tilde.clamp(1e-300, 1.0 - 1e-12);
    let mut lower = Vec::with_capacity(marginals.len());
    let mut upper = Vec::with_capacity(marginals.len());
    for &(a, b) in marginals {
        lower.push(beta_quantile(a, b, at / 2.0)?);
        upper.push(beta_quantile(a, b, 1.0 - at / 2.0)?);
    }
    Ok(CredibleRegion {
        method: Method::Copula,
        level: 1.0 - alpha_tilde,
        labels: raw_labels(lower.len()),
        contains_unit_cube: in_cube(&lower, &upper),
        lower,
        upper,
        c_alpha: None,
        alpha_tilde: Some(alpha_tilde),
        n_r: None,
    })
}

/// Normal-approximation region on the raw proportions.
pub fn cr_normal(
    red: &MBetaReduced<f64>,
    alpha: f64,
    rng: &mut RngStream,
    opts: &RegionOptions,
) -> Result<CredibleRegion> {
    let summary = red.mean_cov()?;
    let c = critical_value(&summary.corr, alpha, rng, opts)?;
    cr_normal_with(&summary, alpha, c.c_alpha)
}

/// Copula region on the raw proportions.
pub fn cr_copula(
    red: &MBetaReduced<f64>,
    alpha: f64,
    rng: &mut RngStream,
    opts: &RegionOptions,
) -> Result<CredibleRegion> {
    let summary = red.mean_cov()?;
    let c = critical_value(&summary.corr, alpha, rng, opts)?;
    cr_copula_with(&summary.marginal_ab, alpha, c.c_alpha)
}

/// Extensive region on the raw proportions: the largest `α̃` whose Beta box
/// holds at least `⌈(1−α) n_r⌉` posterior draws.
pub fn cr_extensive(
    full: &MBetaFull<f64>,
    basis: &HBasis,
    alpha: f64,
    n_r: usize,
    rng: &mut RngStream,
) -> Result<CredibleRegion> {
    check_alpha(alpha)?;
    if n_r < MIN_SAMPLES {
        return Err(Error::InsufficientSamples {
            required: MIN_SAMPLES,
            found: n_r,
        });
    }
    let red = full.moment_matrix(basis)?;
    let marginals = red.marginal_params()?;
    let sample = sample_theta(full.gamma(), basis, n_r, rng)?;
    extensive_from_sample(&marginals, &sample, alpha)
}

/// The extensive construction on a given sample (`n_r × m`).
pub fn extensive_from_sample(
    marginals: &[(f64, f64)],
    sample: &Matrix<f64>,
    alpha: f64,
) -> Result<CredibleRegion> {
    check_alpha(alpha)?;
    let n_r = sample.rows();
    if n_r < MIN_SAMPLES {
        return Err(Error::InsufficientSamples {
            required: MIN_SAMPLES,
            found: n_r,
        });
    }
    if sample.cols() != marginals.len() {
        return Err(Error::LengthMismatch {
            expected: marginals.len(),
            found: sample.cols(),
        });
    }
    // A draw lies in the box at level α̃ iff every marginal cdf value F is
    // in [α̃/2, 1 − α̃/2], i.e. iff α̃ ≤ min_j 2·min(F, 1 − F).
    let mut scores: Vec<f64> = (0..n_r)
        .map(|i| {
            sample
                .row(i)
                .iter()
                .zip(marginals)
                .map(|(&x, &(a, b))| {
                    let f = beta_cdf(x, a, b).unwrap_or(0.5);
                    2.0 * f.min(1.0 - f)
                })
                .fold(1.0, f64::min)
        })
        .collect();
    scores.sort_by(|a, b| b.total_cmp(a));
    let needed = required_count(n_r, alpha);
    // shaved slightly so cdf/quantile roundoff cannot drop the boundary draw
    let alpha_tilde = scores[needed - 1] * (1.0 - 1e-9);
    let mut region = beta_box(marginals, alpha_tilde)?;
    region.method = Method::Extensive;
    region.level = 1.0 - alpha;
    region.n_r = Some(n_r);
    Ok(region)
}

fn required_count(n_r: usize, alpha: f64) -> usize {
    (((1.0 - alpha) * n_r as f64) - 1e-9)
        .ceil()
        .clamp(1.0, n_r as f64) as usize
}

/// Posterior input for contrast regions.
#[derive(Debug, Clone, Copy)]
pub enum Posterior<'a> {
    Reduced(&'a MBetaReduced<f64>),
    Full(&'a MBetaFull<f64>, &'a HBasis),
}

impl Posterior<'_> {
    fn reduced(&self) -> Result<MBetaReduced<f64>> {
        match self {
            Posterior::Reduced(r) => Ok((*r).clone()),
            Posterior::Full(f, b) => f.moment_matrix(b),
        }
    }
}

/// Region for `Kϑ` by the chosen method.
pub fn cr_contrast(
    input: Posterior<'_>,
    k: &ContrastMatrix,
    alpha: f64,
    method: Method,
    rng: &mut RngStream,
    opts: &RegionOptions,
) -> Result<CredibleRegion> {
    check_alpha(alpha)?;
    let red = input.reduced()?;
    if k.m() != red.m() {
        return Err(Error::LengthMismatch {
            expected: red.m(),
            found: k.m(),
        });
    }
    let summary = red.mean_cov()?;
    let km = k.matrix();
    let mean = km.matvec(&summary.mu)?;
    let cov = km.matmul(&summary.sigma)?.matmul(&km.transpose())?;
    if let Some(row) = (0..cov.rows()).find(|&r| !(cov[(r, r)] > 0.0)) {
        return Err(Error::SingularContrastCovariance { row });
    }
    let support = k.support();
    let sample = |rng: &mut RngStream| -> Result<Matrix<f64>> {
        let Posterior::Full(full, basis) = input else {
            return Err(Error::FullParametrisationRequired(format!(
                "the {method} method on contrasts needs the full parameter vector"
            )));
        };
        if opts.n_r < MIN_SAMPLES {
            return Err(Error::InsufficientSamples {
                required: MIN_SAMPLES,
                found: opts.n_r,
            });
        }
        let theta = sample_theta(full.gamma(), basis, opts.n_r, rng)?;
        theta.matmul(&km.transpose())
    };
    let mut region = match method {
        Method::Approximate => {
            let corr = cov.covariance_to_correlation()?;
            let c = critical_value(&corr, alpha, rng, opts)?.c_alpha;
            let sd: Vec<f64> = cov.diag().iter().map(|v| v.sqrt()).collect();
            let lower = mean.iter().zip(&sd).map(|(m, s)| m - c * s).collect();
            let upper = mean.iter().zip(&sd).map(|(m, s)| m + c * s).collect();
            CredibleRegion {
                method,
                level: 1.0 - alpha,
                labels: vec![],
                lower,
                upper,
                c_alpha: Some(c),
                alpha_tilde: None,
                n_r: None,
                contains_unit_cube: false,
            }
        }
        Method::Copula => {
            let corr = cov.covariance_to_correlation()?;
            let c = critical_value(&corr, alpha, rng, opts)?.c_alpha;
            let at = alpha_tilde_from_c(c);
            let s = sample(rng)?;
            let (lower, upper) = empirical_box(&s, at);
            CredibleRegion {
                method,
                level: 1.0 - alpha,
                labels: vec![],
                lower,
                upper,
                c_alpha: Some(c),
                alpha_tilde: Some(at),
                n_r: Some(s.rows()),
                contains_unit_cube: false,
            }
        }
        Method::Extensive => {
            let s = sample(rng)?;
            empirical_extensive(&s, alpha)?
        }
    };
    region.labels = k.labels().to_vec();
    region.contains_unit_cube = region
        .lower
        .iter()
        .zip(&region.upper)
        .zip(&support)
        .all(|((l, u), (lo, hi))| *l >= *lo && *u <= *hi);
    Ok(region)
}

/// Linear-interpolation sample quantile of sorted data.
fn quantile_sorted(sorted: &[f64], p: f64) -> f64 {
    let n = sorted.len();
    let h = p.clamp(0.0, 1.0) * (n - 1) as f64;
    let i = h.floor() as usize;
    if i + 1 >= n {
        return sorted[n - 1];
    }
    sorted[i] + (h - i as f64) * (sorted[i + 1] - sorted[i])
}

fn sorted_columns(s: &Matrix<f64>) -> Vec<Vec<f64>> {
    (0..s.cols())
        .map(|j| {
            let mut col: Vec<f64> = (0..s.rows()).map(|i| s[(i, j)]).collect();
            col.sort_by(f64::total_cmp);
            col
        })
        .collect()
}

fn empirical_box(s: &Matrix<f64>, alpha_tilde: f64) -> (Vec<f64>, Vec<f64>) {
    let cols = sorted_columns(s);
    let lower = cols
        .iter()
        .map(|c| quantile_sorted(c, alpha_tilde / 2.0))
        .collect();
    let upper = cols
        .iter()
        .map(|c| quantile_sorted(c, 1.0 - alpha_tilde / 2.0))
        .collect();
    (lower, upper)
}

/// Extensive construction with empirical marginal quantiles, by bisection
/// on `α̃` to `1e-6`.
fn empirical_extensive(s: &Matrix<f64>, alpha: f64) -> Result<CredibleRegion> {
    let n_r = s.rows();
    let needed = required_count(n_r, alpha);
    let cols = sorted_columns(s);
    let box_at = |at: f64| -> (Vec<f64>, Vec<f64>) {
        (
            cols.iter().map(|c| quantile_sorted(c, at / 2.0)).collect(),
            cols.iter()
                .map(|c| quantile_sorted(c, 1.0 - at / 2.0))
                .collect(),
        )
    };
    let count = |at: f64| -> usize {
        let (lo, hi) = box_at(at);
        (0..n_r)
            .filter(|&i| {
                s.row(i)
                    .iter()
                    .zip(lo.iter().zip(&hi))
                    .all(|(x, (l, u))| l <= x && x <= u)
            })
            .count()
    };
    // coverage is nonincreasing in α̃; at α̃ = 0 the box spans the sample
    let (mut good, mut bad) = (0.0, 1.0);
    if count(alpha) >= needed {
        good = alpha;
    } else {
        bad = alpha;
    }
    while bad - good > 1e-6 {
        let mid = 0.5 * (good + bad);
        if count(mid) >= needed {
            good = mid;
        } else {
            bad = mid;
        }
    }
    let (lower, upper) = box_at(good);
    Ok(CredibleRegion {
        method: Method::Extensive,
        level: 1.0 - alpha,
        labels: vec![],
        lower,
        upper,
        c_alpha: None,
        alpha_tilde: Some(good),
        n_r: Some(n_r),
        contains_unit_cube: false,
    })
}

/// `1` where `θ₀` lies outside the closed interval, else `0`. A length-one
/// `theta0` is broadcast.
pub fn decide_hypotheses(cr: &CredibleRegion, theta0: &[f64]) -> Result<Vec<u8>> {
    let t = cr.dim();
    let value = |j: usize| {
        if theta0.len() == 1 {
            theta0[0]
        } else {
            theta0[j]
        }
    };
    if theta0.len() != 1 && theta0.len() != t {
        return Err(Error::LengthMismatch {
            expected: t,
            found: theta0.len(),
        });
    }
    Ok((0..t)
        .map(|j| u8::from(!(cr.lower[j] <= value(j) && value(j) <= cr.upper[j])))
        .collect())
}
