//! Rectangle probabilities of the multivariate normal distribution by
//! sequential conditioning (Genz's separation of variables) with randomised
//! rank-1 lattice rules, and the equicoordinate quantile built on them.

use super::rng::RngStream;
use super::special::{acklam, normal_cdf, normal_cdf_fast, normal_quantile};
use crate::error::{Error, Result};
use crate::linalg::Matrix;

#[derive(Debug, Clone, PartialEq)]
pub struct MvnOptions {
    /// Lattice points per randomisation (each used with its antithetic twin).
    pub n_qmc: usize,
    /// Number of independent random shifts; at least 16 is advised.
    pub randomizations: usize,
    /// Replace an indefinite matrix by its eigenvalue-clipped correlation
    /// matrix instead of failing.
    pub allow_clipping: bool,
}

impl Default for MvnOptions {
    fn default() -> Self {
        Self {
            n_qmc: 8192,
            randomizations: 16,
            allow_clipping: false,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MvnEstimate {
    pub probability: f64,
    pub std_error: f64,
    /// Whether the correlation matrix had to be repaired by eigenvalue clipping.
    pub clipped: bool,
}

struct Factor {
    l: Matrix<f64>,
    clipped: bool,
}

fn factor(corr: &Matrix<f64>, allow_clipping: bool) -> Result<Factor> {
    if !corr.is_square() || corr.rows() == 0 {
        return Err(Error::CholeskyFailure(
            "correlation matrix must be square and nonempty".into(),
        ));
    }
    if corr.as_slice().iter().any(|v| !v.is_finite()) {
        return Err(Error::CholeskyFailure(
            "correlation matrix has non-finite entries".into(),
        ));
    }
    match corr.cholesky_semidefinite(1e-12) {
        Ok(l) => Ok(Factor { l, clipped: false }),
        Err(e) if !allow_clipping => Err(e),
        Err(_) => {
            let (vals, vecs) = corr.symmetric_eigen()?;
            let n = corr.rows();
            let mut r = Matrix::zeros(n, n);
            for i in 0..n {
                for j in 0..n {
                    r[(i, j)] = (0..n)
                        .map(|k| vecs[(i, k)] * vals[k].max(1e-10) * vecs[(j, k)])
                        .sum();
                }
            }
            let r = r.covariance_to_correlation()?;
            Ok(Factor {
                l: r.cholesky_semidefinite(1e-12)?,
                clipped: true,
            })
        }
    }
}

/// Randomly shifted rank-1 lattice with Richtmyer generators `frac(√p)`.
struct Lattice {
    z: Vec<f64>,
    shifts: Vec<Vec<f64>>,
    n: usize,
}

impl Lattice {
    fn new(dim: usize, n: usize, randomizations: usize, rng: &mut RngStream) -> Self {
        let z = first_primes(dim)
            .into_iter()
            .map(|p| (p as f64).sqrt().fract())
            .collect();
        let shifts = (0..randomizations)
            .map(|_| (0..dim).map(|_| rng.uniform()).collect())
            .collect();
        Self { z, shifts, n }
    }
}

fn first_primes(count: usize) -> Vec<u64> {
    let mut primes = Vec::with_capacity(count);
    let mut k = 2u64;
    while primes.len() < count {
        if primes
            .iter()
            .take_while(|&&p| p * p <= k)
            .all(|&p| k % p != 0)
        {
            primes.push(k);
        }
        k += 1;
    }
    primes
}

/// Sequential-conditioning integrand at `w ∈ [0,1)^{m−1}`.
fn integrand(l: &Matrix<f64>, lower: &[f64], upper: &[f64], w: &[f64], y: &mut [f64]) -> f64 {
    let m = lower.len();
    let mut prod = 1.0;
    for i in 0..m {
        let row = l.row(i);
        let s: f64 = row[..i].iter().zip(&y[..i]).map(|(a, b)| a * b).sum();
        let lii = row[i];
        let (d, e) = if lii > 0.0 {
            (
                normal_cdf_fast((lower[i] - s) / lii),
                normal_cdf_fast((upper[i] - s) / lii),
            )
        } else if lower[i] <= s && s <= upper[i] {
            (0.0, 1.0)
        } else {
            return 0.0;
        };
        prod *= e - d;
        if prod <= 0.0 {
            return 0.0;
        }
        if i + 1 < m {
            y[i] = if lii > 0.0 {
                let u = (d + w[i] * (e - d)).clamp(1e-300, 1.0 - 1e-16);
                acklam(u)
            } else {
                0.0
            };
        }
    }
    prod
}

fn integrate(f: &Factor, lattice: &Lattice, lower: &[f64], upper: &[f64]) -> (f64, f64) {
    let m = lower.len();
    let dim = m - 1;
    let mut w = vec![0.0; dim];
    let mut wa = vec![0.0; dim];
    let mut y = vec![0.0; m];
    let means: Vec<f64> = lattice
        .shifts
        .iter()
        .map(|shift| {
            let mut acc = 0.0;
            for k in 1..=lattice.n {
                for j in 0..dim {
                    let v = (k as f64 * lattice.z[j] + shift[j]).fract();
                    w[j] = v;
                    wa[j] = 1.0 - v;
                }
                acc += 0.5
                    * (integrand(&f.l, lower, upper, &w, &mut y)
                        + integrand(&f.l, lower, upper, &wa, &mut y));
            }
            acc / lattice.n as f64
        })
        .collect();
    let k = means.len() as f64;
    let mean = means.iter().sum::<f64>() / k;
    let var = if means.len() > 1 {
        means.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (k - 1.0)
    } else {
        0.0
    };
    (mean, (var / k).sqrt())
}

fn check_limits(m: usize, lower: &[f64], upper: &[f64]) -> Result<()> {
    if lower.len() != m || upper.len() != m {
        return Err(Error::LengthMismatch {
            expected: m,
            found: lower.len().min(upper.len()),
        });
    }
    if lower.iter().zip(upper).any(|(a, b)| !(a < b)) {
        return Err(Error::InvalidParameter(
            "lower limits must be below upper limits".into(),
        ));
    }
    Ok(())
}

/// `P(lower ≤ Z ≤ upper)` for `Z ~ N(0, R)` with a standard error from the
/// spread across randomisations. Infinite limits are allowed.
pub fn mvn_rectangle_prob(
    corr: &Matrix<f64>,
    lower: &[f64],
    upper: &[f64],
    rng: &mut RngStream,
    opts: &MvnOptions,
) -> Result<MvnEstimate> {
    check_limits(corr.rows(), lower, upper)?;
    let f = factor(corr, opts.allow_clipping)?;
    if corr.rows() == 1 {
        return Ok(MvnEstimate {
            probability: normal_cdf(upper[0]) - normal_cdf(lower[0]),
            std_error: 0.0,
            clipped: f.clipped,
        });
    }
    let lattice = Lattice::new(
        corr.rows() - 1,
        opts.n_qmc.max(1),
        opts.randomizations.max(2),
        rng,
    );
    let (probability, std_error) = integrate(&f, &lattice, lower, upper);
    Ok(MvnEstimate {
        probability,
        std_error,
        clipped: f.clipped,
    })
}

/// Request for the two-sided equicoordinate quantile `c` with
/// `P(|Z_j| ≤ c for all j) = level`.
#[derive(Debug, Clone, PartialEq)]
pub struct QuantileRequest {
    pub corr: Matrix<f64>,
    pub level: f64,
    /// Target accuracy on `c` (twice the Monte Carlo standard error of `c`
    /// must not exceed it).
    pub mc_tolerance: f64,
    /// Budget on lattice points per probability evaluation, summed over
    /// randomisations.
    pub max_samples: usize,
    pub n_qmc: usize,
    pub randomizations: usize,
}

impl QuantileRequest {
    pub fn new(corr: Matrix<f64>, level: f64) -> Self {
        Self {
            corr,
            level,
            mc_tolerance: 2e-3,
            max_samples: 1 << 22,
            n_qmc: 8192,
            randomizations: 16,
        }
    }

    pub fn with_n_qmc(mut self, n_qmc: usize) -> Self {
        self.n_qmc = n_qmc;
        self
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EquicoordinateQuantile {
    pub c_alpha: f64,
    /// Monte Carlo standard error of `c_alpha`.
    pub std_error: f64,
    /// Lattice points per randomisation in the final pass.
    pub n_qmc: usize,
    pub clipped: bool,
}

/// The two bounds `Φ⁻¹(1−α/2) ≤ c ≤ Φ⁻¹(1−α/(2m))` valid for any correlation.
pub fn quantile_bracket(m: usize, level: f64) -> Result<(f64, f64)> {
    let alpha = 1.0 - level;
    Ok((
        normal_quantile(1.0 - alpha / 2.0)?,
        normal_quantile(1.0 - alpha / (2.0 * m as f64))?,
    ))
}

/// Root of `c ↦ P(|Z| ≤ c) − level` on the bracket, with common random
/// numbers across evaluations. The lattice is refined until the Monte Carlo
/// error on `c` meets the tolerance.
pub fn equicoordinate_quantile(
    req: &QuantileRequest,
    rng: &mut RngStream,
) -> Result<EquicoordinateQuantile> {
    if !(req.level > 0.0 && req.level < 1.0) {
        return Err(Error::InvalidProbability(format!(
            "level must lie in (0, 1), got {}",
            req.level
        )));
    }
    if !(req.mc_tolerance > 0.0) {
        return Err(Error::InvalidParameter(
            "mc_tolerance must be positive".into(),
        ));
    }
    let m = req.corr.rows();
    if !req.corr.is_square() || m == 0 {
        return Err(Error::InvalidCorrelation(
            "matrix must be square and nonempty".into(),
        ));
    }
    if (0..m).any(|i| (req.corr[(i, i)] - 1.0).abs() > 1e-8) {
        return Err(Error::InvalidCorrelation("diagonal must be one".into()));
    }
    let (lo_b, hi_b) = quantile_bracket(m, req.level)?;
    if m == 1 {
        return Ok(EquicoordinateQuantile {
            c_alpha: lo_b,
            std_error: 0.0,
            n_qmc: 0,
            clipped: false,
        });
    }
    let f = factor(&req.corr, true)?;
    let k = req.randomizations.max(2);
    let mut n = req.n_qmc.max(16);
    loop {
        if n.saturating_mul(k) > req.max_samples {
            return Err(Error::BudgetExceeded {
                max_samples: req.max_samples,
            });
        }
        let lattice = Lattice::new(m - 1, n, k, rng);
        let eval = |c: f64| {
            let lim_lo = vec![-c; m];
            let lim_hi = vec![c; m];
            integrate(&f, &lattice, &lim_lo, &lim_hi)
        };
        let (c, se_p, slope) = illinois(&eval, lo_b, hi_b, req.level, req.mc_tolerance);
        let se_c = if slope > 0.0 { se_p / slope } else { 0.0 };
        if 2.0 * se_c <= req.mc_tolerance || se_p == 0.0 {
            let c_alpha = c.clamp(lo_b, hi_b);
            debug_assert!(lo_b <= c_alpha && c_alpha <= hi_b);
            return Ok(EquicoordinateQuantile {
                c_alpha,
                std_error: se_c,
                n_qmc: n,
                clipped: f.clipped,
            });
        }
        n *= 2;
    }
}

/// Illinois root finding for the increasing function `eval(c).0 − level`.
/// Returns the root, the probability standard error there and the local slope.
fn illinois(
    eval: &dyn Fn(f64) -> (f64, f64),
    lo: f64,
    hi: f64,
    level: f64,
    tol: f64,
) -> (f64, f64, f64) {
    let (p_lo, se_lo) = eval(lo);
    let (p_hi, se_hi) = eval(hi);
    let full_slope = (p_hi - p_lo) / (hi - lo);
    if p_lo >= level {
        return (lo, se_lo, full_slope);
    }
    if p_hi <= level {
        return (hi, se_hi, full_slope);
    }
    // (point, true value, value used by the secant step)
    let (mut a, mut ta, mut fa) = (lo, p_lo - level, p_lo - level);
    let (mut b, mut tb, mut fb) = (hi, p_hi - level, p_hi - level);
    let mut side = 0i8;
    let mut c = a;
    let mut se = se_lo;
    for _ in 0..100 {
        let next = (a * fb - b * fa) / (fb - fa);
        let moved = (next - c).abs();
        c = next;
        let (p, s) = eval(c);
        se = s;
        let fc = p - level;
        if fc == 0.0 {
            break;
        }
        if fc < 0.0 {
            (a, ta, fa) = (c, fc, fc);
            if side == -1 {
                fb /= 2.0;
            }
            side = -1;
        } else {
            (b, tb, fb) = (c, fc, fc);
            if side == 1 {
                fa /= 2.0;
            }
            side = 1;
        }
        if b - a < tol * 1e-2 || moved < tol * 1e-3 {
            break;
        }
    }
    let slope = if b > a {
        ((tb - ta) / (b - a)).max(full_slope * 1e-3)
    } else {
        full_slope
    };
    (c, se, slope)
}
