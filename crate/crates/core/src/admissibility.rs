//! Realizability of moment targets.
//!
//! A reduced pair `(ν, A)` comes from some mBeta distribution exactly when the
//! linear system `H̃γ = α̃, γ ≥ 0` is feasible. This module offers the exact
//! LP test (with a Farkas certificate on failure) together with the cheaper
//! necessary conditions: the subset moment bounds and the pairwise Fréchet
//! bounds. [`MomentTarget`] turns a mean/correlation specification into the
//! moment matrix that these checks consume.

use num_rational::BigRational;
use num_traits::ToPrimitive;

use crate::binmap::{HBasis, DEFAULT_M_MAX};
use crate::error::{Error, Result};
use crate::linalg::Matrix;
use crate::lp::phase_one;
use crate::mbeta::MBetaReduced;
use crate::scalar::{rationalize, Field, Real};

/// Largest dimension for which [`check_mc`] runs the LP by default.
pub const DEFAULT_MAX_FULL_DIM: usize = 10;

/// Mean vector, correlation matrix and concentration of a prior.
#[derive(Debug, Clone, PartialEq)]
pub struct MomentTarget<T> {
    nu: T,
    mu: Vec<T>,
    corr: Matrix<T>,
}

impl<T: Real> MomentTarget<T> {
    pub fn new(nu: T, mu: Vec<T>, corr: Matrix<T>) -> Result<Self> {
        if !(nu > T::zero()) || !nu.is_finite() {
            return Err(Error::InvalidParameter(
                "nu must be positive and finite".into(),
            ));
        }
        if mu.is_empty() {
            return Err(Error::EmptyDimension);
        }
        if let Some(j) = mu.iter().position(|&v| !(v > T::zero() && v < T::one())) {
            return Err(Error::InvalidParameter(format!(
                "mu[{j}] must lie in (0, 1)"
            )));
        }
        let m = mu.len();
        if corr.rows() != m || corr.cols() != m {
            return Err(Error::LengthMismatch {
                expected: m,
                found: corr.rows(),
            });
        }
        if !corr.is_symmetric_tol(T::lit(1e-12)) {
            return Err(Error::InvalidCorrelation("matrix is not symmetric".into()));
        }
        for i in 0..m {
            if (corr[(i, i)] - T::one()).abs() > T::lit(1e-12) {
                return Err(Error::InvalidCorrelation(format!(
                    "diagonal entry {i} is not 1"
                )));
            }
            for j in 0..m {
                let r = corr[(i, j)];
                if i != j && !(r > -T::one() && r < T::one()) {
                    return Err(Error::InvalidCorrelation(format!(
                        "entry ({i}, {j}) is outside (-1, 1)"
                    )));
                }
            }
        }
        corr.cholesky()
            .map_err(|_| Error::InvalidCorrelation("matrix is not positive definite".into()))?;
        Ok(Self { nu, mu, corr })
    }

    pub fn m(&self) -> usize {
        self.mu.len()
    }

    pub fn nu(&self) -> T {
        self.nu
    }

    pub fn mu(&self) -> &[T] {
        &self.mu
    }

    pub fn corr(&self) -> &Matrix<T> {
        &self.corr
    }

    /// Covariance `Σ = V^{1/2} R V^{1/2}` with `V = diag(μ(1−μ))/(ν+1)`.
    pub fn covariance(&self) -> Matrix<T> {
        let m = self.m();
        let sd: Vec<T> = self
            .mu
            .iter()
            .map(|&u| (u * (T::one() - u) / (self.nu + T::one())).sqrt())
            .collect();
        let mut s = Matrix::zeros(m, m);
        for i in 0..m {
            for j in 0..m {
                s[(i, j)] = sd[i] * self.corr[(i, j)] * sd[j];
            }
        }
        s
    }
}

/// `A = ν((ν+1)Σ + μμᵀ)` with the diagonal set to `νμ` exactly.
pub fn derive_moment_matrix<T: Real>(target: &MomentTarget<T>) -> Result<MBetaReduced<T>> {
    let m = target.m();
    let nu = target.nu;
    let sigma = target.covariance();
    let mut a = Matrix::zeros(m, m);
    for i in 0..m {
        for j in 0..m {
            a[(i, j)] = if i == j {
                nu * target.mu[i]
            } else {
                nu * ((nu + T::one()) * sigma[(i, j)] + target.mu[i] * target.mu[j])
            };
        }
    }
    MBetaReduced::new(nu, a)
}

/// `m × m` matrix with unit diagonal and constant off-diagonal `rho`.
pub fn equicorrelation<T: Field>(m: usize, rho: T) -> Matrix<T> {
    let mut r = Matrix::filled(m, m, rho);
    for i in 0..m {
        r[(i, i)] = T::one();
    }
    r
}

/// Block-constant correlation: `within` inside each block, `between` across
/// blocks. Block sizes are given in coordinate order.
pub fn block_correlation<T: Field>(sizes: &[usize], within: T, between: T) -> Matrix<T> {
    let block_of: Vec<usize> = sizes
        .iter()
        .enumerate()
        .flat_map(|(b, &s)| std::iter::repeat_n(b, s))
        .collect();
    let m = block_of.len();
    let mut r = Matrix::zeros(m, m);
    for i in 0..m {
        for j in 0..m {
            r[(i, j)] = if i == j {
                T::one()
            } else if block_of[i] == block_of[j] {
                within.clone()
            } else {
                between.clone()
            };
        }
    }
    r
}

/// Serialisable description of a correlation matrix.
#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum CorrelationSpec {
    Equicorrelation {
        rho: f64,
    },
    /// Blocks of the given sizes; `between` defaults to `within²`.
    Block {
        sizes: Vec<usize>,
        within: f64,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        between: Option<f64>,
    },
    Full {
        matrix: Vec<Vec<f64>>,
    },
}

impl CorrelationSpec {
    /// The `m × m` matrix; errors if the spec describes another dimension.
    pub fn to_matrix(&self, m: usize) -> Result<Matrix<f64>> {
        let r = match self {
            CorrelationSpec::Equicorrelation { rho } => equicorrelation(m, *rho),
            CorrelationSpec::Block {
                sizes,
                within,
                between,
            } => block_correlation(sizes, *within, between.unwrap_or(within * within)),
            CorrelationSpec::Full { matrix } => Matrix::from_rows(matrix)?,
        };
        if r.rows() != m {
            return Err(Error::LengthMismatch {
                expected: m,
                found: r.rows(),
            });
        }
        Ok(r)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FrechetReport<T> {
    pub lower: Matrix<T>,
    pub upper: Matrix<T>,
    pub ok: bool,
    /// Violating off-diagonal entries `(j, l)` with `j < l`, 0-based.
    pub violations: Vec<(usize, usize)>,
}

/// Entrywise bounds `max(0, α_j + α_l − ν) ≤ A_jl ≤ min(α_j, α_l)`.
pub fn frechet_bounds<T: Field>(red: &MBetaReduced<T>) -> FrechetReport<T> {
    let m = red.m();
    let nu = red.nu().clone();
    let alpha = red.alpha();
    let tol = T::feasibility_tol() * (T::one() + nu.clone());
    let mut lower = Matrix::zeros(m, m);
    let mut upper = Matrix::zeros(m, m);
    let mut violations = Vec::new();
    for j in 0..m {
        for l in 0..m {
            let lo = T::max_of(T::zero(), alpha[j].clone() + alpha[l].clone() - nu.clone());
            let hi = T::min_of(alpha[j].clone(), alpha[l].clone());
            let v = red.a()[(j, l)].clone();
            if j < l && (v.clone() < lo.clone() - tol.clone() || v > hi.clone() + tol.clone()) {
                violations.push((j, l));
            }
            lower[(j, l)] = lo;
            upper[(j, l)] = hi;
        }
    }
    FrechetReport {
        lower,
        upper,
        ok: violations.is_empty(),
        violations,
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MomentBoundsReport {
    /// Violating index sets, 0-based and sorted.
    pub violations: Vec<Vec<usize>>,
    pub ok: bool,
}

/// Checks `ν ≥ Σ_{j∈J} α_j − Σ_{j≠l∈J} α_jl` for every subset `J`.
pub fn moment_bounds<T: Field>(red: &MBetaReduced<T>) -> Result<MomentBoundsReport> {
    let m = red.m();
    if m > DEFAULT_M_MAX {
        return Err(Error::DimensionTooLarge {
            m,
            max: DEFAULT_M_MAX,
        });
    }
    let nu = red.nu().clone();
    let tol = T::feasibility_tol() * (T::one() + nu.clone());
    let a = red.a();
    let two = T::from_count(2);
    let mut violations = Vec::new();
    for mask in 1usize..(1 << m) {
        let set: Vec<usize> = (0..m).filter(|j| mask >> j & 1 == 1).collect();
        let mut s = T::zero();
        for (p, &j) in set.iter().enumerate() {
            s = s + a[(j, j)].clone();
            for &l in &set[p + 1..] {
                s = s - two.clone() * a[(j, l)].clone();
            }
        }
        if s > nu.clone() + tol.clone() {
            violations.push(set);
        }
    }
    Ok(MomentBoundsReport {
        ok: violations.is_empty(),
        violations,
    })
}

/// Attainable correlation range of two binary-mean coordinates, via
/// `ψ = √(μ/(1−μ))`.
pub fn pairwise_correlation_bounds<T: Real>(mu_j: T, mu_k: T) -> Result<(T, T)> {
    for (i, mu) in [mu_j, mu_k].into_iter().enumerate() {
        if !(mu > T::zero() && mu < T::one()) {
            return Err(Error::InvalidParameter(format!(
                "mean {i} must lie in (0, 1)"
            )));
        }
    }
    let psi = |u: T| (u / (T::one() - u)).sqrt();
    let (pj, pk) = (psi(mu_j), psi(mu_k));
    let lo = (-(pj * pk).recip()).max(-(pj * pk));
    let hi = (pj / pk).min(pk / pj);
    Ok((lo, hi))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FeasibilityStatus {
    Feasible,
    Infeasible,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FeasibilityResult<T> {
    pub status: FeasibilityStatus,
    /// `γ ≥ 0` with `H̃γ = α̃` (feasible case).
    pub witness: Option<Vec<T>>,
    /// `b` with `H̃ᵀb ≥ 0` and `bᵀα̃ < 0`, unit infinity-norm (infeasible case).
    pub certificate: Option<Vec<T>>,
    /// Optimal phase-one objective.
    pub infeasibility: T,
}

impl<T> FeasibilityResult<T> {
    pub fn is_feasible(&self) -> bool {
        self.status == FeasibilityStatus::Feasible
    }
}

/// Exact LP test of the moment conditions, refusing `m > 10`.
pub fn check_mc<T: Field>(red: &MBetaReduced<T>, basis: &HBasis) -> Result<FeasibilityResult<T>> {
    check_mc_with_limit(red, basis, DEFAULT_MAX_FULL_DIM)
}

pub fn check_mc_with_limit<T: Field>(
    red: &MBetaReduced<T>,
    basis: &HBasis,
    max_full_dim: usize,
) -> Result<FeasibilityResult<T>> {
    let m = red.m();
    if basis.m() != m {
        return Err(Error::LengthMismatch {
            expected: m,
            found: basis.m(),
        });
    }
    let max = max_full_dim.min(DEFAULT_M_MAX);
    if m > max {
        return Err(Error::DimensionTooLarge { m, max });
    }
    let a: Matrix<T> = basis.htilde().to_matrix();
    let target = red.alpha_tilde();
    let lp = phase_one(&a, &target)?;
    let tol = T::feasibility_tol() * (T::one() + red.nu().clone());
    if lp.infeasibility <= tol {
        let witness = lp.x.into_iter().map(|g| T::max_of(g, T::zero())).collect();
        return Ok(FeasibilityResult {
            status: FeasibilityStatus::Feasible,
            witness: Some(witness),
            certificate: None,
            infeasibility: lp.infeasibility,
        });
    }
    let b: Vec<T> = lp.dual.into_iter().map(|y| -y).collect();
    let certificate = normalise_certificate(basis, b, &target);
    Ok(FeasibilityResult {
        status: FeasibilityStatus::Infeasible,
        witness: None,
        certificate: Some(certificate),
        infeasibility: lp.infeasibility,
    })
}

fn normalise_certificate<T: Field>(basis: &HBasis, b: Vec<T>, target: &[T]) -> Vec<T> {
    let scale = b.iter().fold(T::zero(), |acc, v| T::max_of(acc, v.abs()));
    if scale.is_zero() {
        return b;
    }
    let mut b: Vec<T> = b.into_iter().map(|v| v / scale.clone()).collect();
    if T::feasibility_tol().is_zero() {
        return b;
    }
    let snap = T::lit(1e-9);
    for v in &mut b {
        if v.abs() < snap {
            *v = T::zero();
        }
    }
    // Floating duals are usually small rationals in disguise; prefer the
    // reconstructed values when they certify exactly.
    let alpha_q: Option<Vec<BigRational>> =
        target.iter().map(|v| rationalize(v.approx_f64())).collect();
    let b_q: Option<Vec<BigRational>> = b.iter().map(|v| small_rational(v.approx_f64())).collect();
    if let (Some(alpha_q), Some(b_q)) = (alpha_q, b_q) {
        if verify_certificate(basis, &b_q, &alpha_q) {
            let rebuilt: Option<Vec<T>> = b_q
                .iter()
                .map(|q| q.to_f64().and_then(T::from_f64))
                .collect();
            if let Some(rebuilt) = rebuilt {
                return rebuilt;
            }
        }
    }
    b
}

/// Checks `H̃ᵀb ≥ 0` and `bᵀα̃ < 0` in the arithmetic of `T`.
pub fn verify_certificate<T: Field>(basis: &HBasis, b: &[T], alpha_tilde: &[T]) -> bool {
    if b.len() != basis.r() || alpha_tilde.len() != basis.r() {
        return false;
    }
    let cols = basis.htilde().apply_transpose(b);
    let dot = b
        .iter()
        .zip(alpha_tilde)
        .fold(T::zero(), |acc, (x, y)| acc + x.clone() * y.clone());
    cols.iter().all(|c| !c.lt_zero()) && dot.lt_zero()
}

/// Re-checks a floating certificate in exact rational arithmetic. Entries of
/// `b` are read as the nearest small-denominator rational when one lies
/// within `1e-9`, otherwise as their exact binary value.
pub fn verify_certificate_exact(basis: &HBasis, b: &[f64], alpha_tilde: &[f64]) -> bool {
    let b_q: Option<Vec<BigRational>> = b
        .iter()
        .map(|&v| small_rational(v).or_else(|| rationalize(v)))
        .collect();
    let a_q: Option<Vec<BigRational>> = alpha_tilde.iter().map(|&v| rationalize(v)).collect();
    match (b_q, a_q) {
        (Some(b_q), Some(a_q)) => verify_certificate(basis, &b_q, &a_q),
        _ => false,
    }
}

/// Continued-fraction reconstruction with denominator at most `10^6`.
fn small_rational(x: f64) -> Option<BigRational> {
    if !x.is_finite() || x.abs() > 1e6 {
        return None;
    }
    const MAX_DEN: i64 = 1_000_000;
    let (mut h0, mut h1, mut k0, mut k1) = (0i64, 1i64, 1i64, 0i64);
    let mut v = x;
    for _ in 0..64 {
        let a = v.floor();
        let ai = a as i64;
        let h2 = ai.checked_mul(h1)?.checked_add(h0)?;
        let k2 = ai.checked_mul(k1)?.checked_add(k0)?;
        if k2 > MAX_DEN {
            break;
        }
        (h0, h1, k0, k1) = (h1, h2, k1, k2);
        if (h1 as f64 / k1 as f64 - x).abs() <= 1e-9 {
            return Some(BigRational::new(h1.into(), k1.into()));
        }
        let frac = v - a;
        if frac < 1e-15 {
            break;
        }
        v = frac.recip();
    }
    None
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::binmap::build_basis;
    use crate::mbeta::MBetaFull;
    use num_traits::Zero;

    fn counterexample() -> MBetaReduced<f64> {
        MBetaReduced::new(
            4.0,
            Matrix::from_rows(&[vec![2.0, 3.0], vec![3.0, 3.0]]).unwrap(),
        )
        .unwrap()
    }

    fn reference_target() -> MomentTarget<f64> {
        MomentTarget::new(20.0, vec![0.8, 0.775, 0.75], equicorrelation(3, 0.5)).unwrap()
    }

    #[test]
    fn reference_moment_matrix() {
        let red = derive_moment_matrix(&reference_target()).unwrap();
        let want = [
            [16.00, 14.07, 13.73],
            [14.07, 15.50, 13.43],
            [13.73, 13.43, 15.00],
        ];
        for j in 0..3 {
            for l in 0..3 {
                assert!((red.a()[(j, l)] - want[j][l]).abs() < 0.005);
            }
        }
        assert_eq!(red.alpha(), vec![16.0, 15.5, 15.0]);
    }

    #[test]
    fn independent_half_means() {
        let t = MomentTarget::new(6.0f64, vec![0.5; 3], Matrix::identity(3)).unwrap();
        let red = derive_moment_matrix(&t).unwrap();
        for j in 0..3 {
            for l in 0..3 {
                let want = if j == l { 3.0 } else { 1.5 };
                assert!((red.a()[(j, l)] - want).abs() < 1e-12);
            }
        }
        let t = MomentTarget::new(20.0f64, vec![0.8, 0.775], Matrix::identity(2)).unwrap();
        let red = derive_moment_matrix(&t).unwrap();
        assert!((red.a()[(0, 1)] - 12.4).abs() < 1e-12);
    }

    #[test]
    fn target_validation() {
        let bad = Matrix::from_rows(&[
            vec![1.0, 0.9, -0.9],
            vec![0.9, 1.0, 0.9],
            vec![-0.9, 0.9, 1.0],
        ])
        .unwrap();
        assert!(matches!(
            MomentTarget::new(5.0, vec![0.5; 3], bad),
            Err(Error::InvalidCorrelation(_))
        ));
        assert!(MomentTarget::new(5.0, vec![1.0, 0.5], Matrix::identity(2)).is_err());
        assert!(MomentTarget::new(0.0, vec![0.5], Matrix::identity(1)).is_err());
    }

    #[test]
    fn frechet_examples() {
        let red = derive_moment_matrix(&reference_target()).unwrap();
        let f = frechet_bounds(&red);
        assert!(f.ok);
        assert!((f.lower[(0, 1)] - 11.5).abs() < 1e-12);
        assert_eq!(f.upper[(0, 1)], 15.5);

        let sym = MBetaReduced::new(
            2.0,
            Matrix::from_rows(&[vec![1.0, 0.5], vec![0.5, 1.0]]).unwrap(),
        )
        .unwrap();
        let f = frechet_bounds(&sym);
        assert_eq!((f.lower[(0, 1)], f.upper[(0, 1)]), (0.0, 1.0));

        let f = frechet_bounds(&counterexample());
        assert!(!f.ok);
        assert_eq!(f.upper[(0, 1)], 2.0);
        assert_eq!(f.violations, vec![(0, 1)]);
    }

    #[test]
    fn moment_bound_examples() {
        let red = derive_moment_matrix(&reference_target()).unwrap();
        assert!(moment_bounds(&red).unwrap().ok);
        // MB alone does not reject the counterexample
        assert!(moment_bounds(&counterexample()).unwrap().ok);
        let bad = MBetaReduced::new(
            1.0,
            Matrix::from_rows(&[vec![1.0, 0.0], vec![0.0, 1.0]]).unwrap(),
        )
        .unwrap();
        assert_eq!(moment_bounds(&bad).unwrap().violations, vec![vec![0, 1]]);
    }

    #[test]
    fn correlation_bound_examples() {
        let (lo, hi) = pairwise_correlation_bounds(0.5f64, 0.5).unwrap();
        assert!((lo + 1.0).abs() < 1e-15 && (hi - 1.0).abs() < 1e-15);
        let (lo, hi) = pairwise_correlation_bounds(0.75f64, 0.75).unwrap();
        assert!((lo + 1.0 / 3.0).abs() < 1e-12 && (hi - 1.0).abs() < 1e-12);
        let (lo, hi) = pairwise_correlation_bounds(0.9f64, 0.5).unwrap();
        assert!((lo + 1.0 / 3.0).abs() < 1e-12 && (hi - 1.0 / 3.0).abs() < 1e-12);
        assert!(pairwise_correlation_bounds(0.0f64, 0.5).is_err());
    }

    #[test]
    fn reference_prior_is_feasible() {
        let b = build_basis(3).unwrap();
        let red = derive_moment_matrix(&reference_target()).unwrap();
        let res = check_mc(&red, &b).unwrap();
        assert!(res.is_feasible());
        let g = res.witness.unwrap();
        let back = MBetaFull::new(3, g).unwrap().moment_matrix(&b).unwrap();
        assert!(back.a().sub(red.a()).unwrap().max_abs() < 1e-9);
    }

    #[test]
    fn counterexample_certificate() {
        let b = build_basis(2).unwrap();
        let red = counterexample();
        let res = check_mc(&red, &b).unwrap();
        assert_eq!(res.status, FeasibilityStatus::Infeasible);
        let cert = res.certificate.unwrap();
        assert!(verify_certificate_exact(&b, &cert, &red.alpha_tilde()));
        assert_eq!(cert.iter().fold(0.0f64, |m, v| m.max(v.abs())), 1.0);

        let exact = red.convert::<BigRational>().unwrap();
        let res = check_mc(&exact, &b).unwrap();
        assert_eq!(res.status, FeasibilityStatus::Infeasible);
        assert!(verify_certificate(
            &b,
            &res.certificate.unwrap(),
            &exact.alpha_tilde()
        ));

        let known = [1.0, 0.0, -1.0, 0.0];
        assert!(verify_certificate_exact(&b, &known, &red.alpha_tilde()));
    }

    #[test]
    fn data_pairs_are_feasible() {
        let b = build_basis(3).unwrap();
        let d = [24.0, 10.0, 0.0, 29.0, 9.0, 8.0, 58.0, 179.0];
        let red = MBetaFull::new(3, d.to_vec())
            .unwrap()
            .moment_matrix(&b)
            .unwrap();
        let res = check_mc(&red, &b).unwrap();
        assert!(res.is_feasible());
    }

    #[test]
    fn dimension_guard() {
        let b = build_basis(11).unwrap();
        let red = MBetaReduced::<f64>::vague(11).unwrap();
        assert_eq!(
            check_mc(&red, &b),
            Err(Error::DimensionTooLarge { m: 11, max: 10 })
        );
        assert!(check_mc_with_limit(&red, &b, 12).unwrap().is_feasible());
    }

    #[test]
    fn block_and_equicorrelation_shapes() {
        let r = block_correlation(&[2, 1], 0.5, 0.25);
        assert_eq!(
            r.to_rows(),
            vec![
                vec![1.0, 0.5, 0.25],
                vec![0.5, 1.0, 0.25],
                vec![0.25, 0.25, 1.0]
            ]
        );
        assert_eq!(
            equicorrelation(2, 0.3).to_rows(),
            vec![vec![1.0, 0.3], vec![0.3, 1.0]]
        );
    }

    #[test]
    fn small_rational_reconstruction() {
        assert_eq!(
            small_rational(1.0 / 3.0),
            Some(BigRational::new(1.into(), 3.into()))
        );
        assert_eq!(
            small_rational(-0.5),
            Some(BigRational::new((-1).into(), 2.into()))
        );
        assert_eq!(small_rational(0.0), Some(BigRational::zero()));
    }
}
