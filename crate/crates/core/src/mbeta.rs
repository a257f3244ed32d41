//! The multivariate Beta distribution `ϑ = Hp`, `p ~ Dir(γ)`.
//!
//! Two parametrisations are carried: the full concentration vector `γ` over
//! the `2^m` cells, and the reduced pair `(ν, A)` with `A = H diag(γ) Hᵀ`.
//! Moments and the conjugate update are available from either; anything that
//! only needs means and covariances goes through the reduced form so that it
//! also works when `γ` is unknown.
//!
//! Zero entries of `γ` are structural zeros: the corresponding cell has
//! probability exactly zero.

use crate::binmap::{CellCounts, HBasis};
use crate::error::{Error, Result};
use crate::linalg::Matrix;
use crate::scalar::{Field, Real};

/// Full parametrisation: one concentration per cell.
#[derive(Debug, Clone, PartialEq)]
pub struct MBetaFull<T> {
    m: usize,
    gamma: Vec<T>,
}

impl<T: Field> MBetaFull<T> {
    pub fn new(m: usize, gamma: Vec<T>) -> Result<Self> {
        if m == 0 {
            return Err(Error::EmptyDimension);
        }
        if m >= usize::BITS as usize || gamma.len() != 1usize << m {
            return Err(Error::LengthMismatch {
                expected: 1usize.checked_shl(m as u32).unwrap_or(0),
                found: gamma.len(),
            });
        }
        if let Some(k) = gamma
            .iter()
            .position(|g| g.lt_zero() || !g.approx_f64().is_finite())
        {
            return Err(Error::InvalidParameter(format!(
                "gamma[{k}] is negative or not finite"
            )));
        }
        if gamma.iter().all(|g| g.is_zero()) {
            return Err(Error::AllZeroGamma);
        }
        Ok(Self { m, gamma })
    }

    /// `γ = 1_w ν / w`: independent `Beta(ν/2, ν/2)` marginals.
    pub fn uniform(m: usize, nu: T) -> Result<Self> {
        if !nu.gt_zero() {
            return Err(Error::InvalidParameter("nu must be positive".into()));
        }
        let w = 1u64
            .checked_shl(m as u32)
            .ok_or(Error::DimensionTooLarge { m, max: 63 })?;
        let each = nu / T::from_count(w);
        Self::new(m, vec![each; w as usize])
    }

    /// The vague prior `γ = 1_w · 2/w` (independent uniform marginals).
    pub fn vague(m: usize) -> Result<Self> {
        Self::uniform(m, T::from_count(2))
    }

    pub fn m(&self) -> usize {
        self.m
    }

    pub fn gamma(&self) -> &[T] {
        &self.gamma
    }

    pub fn into_gamma(self) -> Vec<T> {
        self.gamma
    }

    /// `ν = ||γ||₁`.
    pub fn nu(&self) -> T {
        self.gamma.iter().fold(T::zero(), |acc, g| acc + g.clone())
    }

    fn check_basis(&self, basis: &HBasis) -> Result<()> {
        if basis.m() != self.m {
            return Err(Error::LengthMismatch {
                expected: self.m,
                found: basis.m(),
            });
        }
        Ok(())
    }

    /// Reduced parametrisation: `ν = ||γ||₁`, `A = H diag(γ) Hᵀ`.
    pub fn moment_matrix(&self, basis: &HBasis) -> Result<MBetaReduced<T>> {
        self.check_basis(basis)?;
        let a = basis.weighted_gram(&self.gamma)?;
        Ok(MBetaReduced { nu: self.nu(), a })
    }

    /// `(α_J, β_J)` of the product `Π_{j∈J} X_j`, which is `Beta(α_J, β_J)`.
    /// `set` holds 0-based coordinates.
    pub fn product_beta_params(&self, basis: &HBasis, set: &[usize]) -> Result<(T, T)> {
        self.check_basis(basis)?;
        let row = basis.hadamard_row(set)?;
        let alpha = row
            .iter()
            .zip(&self.gamma)
            .filter(|(b, _)| **b == 1)
            .fold(T::zero(), |acc, (_, g)| acc + g.clone());
        let beta = self.nu() - alpha.clone();
        Ok((alpha, beta))
    }

    /// Conjugate update `γ* = γ + d`.
    pub fn update(&self, d: &CellCounts) -> Result<Self> {
        if d.counts().len() != self.gamma.len() {
            return Err(Error::LengthMismatch {
                expected: self.gamma.len(),
                found: d.counts().len(),
            });
        }
        let gamma = self
            .gamma
            .iter()
            .zip(d.counts())
            .map(|(g, &c)| g.clone() + T::from_count(c))
            .collect();
        Ok(Self { m: self.m, gamma })
    }
}

/// Reduced parametrisation `(ν, A)`.
///
/// Construction checks shape, symmetry, finiteness and `0 ≤ α_j ≤ ν`. The
/// pairwise Fréchet bounds (including nonnegativity of the off-diagonal) are
/// *not* enforced here: admissibility checks must be able to receive and
/// reject targets that violate them.
#[derive(Debug, Clone, PartialEq)]
pub struct MBetaReduced<T> {
    nu: T,
    a: Matrix<T>,
}

impl<T: Field> MBetaReduced<T> {
    pub fn new(nu: T, a: Matrix<T>) -> Result<Self> {
        if !nu.gt_zero() {
            return Err(Error::InvalidParameter("nu must be positive".into()));
        }
        if !a.is_square() || a.rows() == 0 {
            return Err(Error::InvalidParameter(
                "moment matrix must be square and nonempty".into(),
            ));
        }
        if !a.is_symmetric() {
            return Err(Error::InvalidParameter(
                "moment matrix must be symmetric".into(),
            ));
        }
        if a.as_slice()
            .iter()
            .any(|x| x.to_f64().is_none_or(|v| !v.is_finite()))
        {
            return Err(Error::InvalidParameter(
                "moment matrix entries must be finite".into(),
            ));
        }
        if let Some(j) = a.diag().iter().position(|x| x.lt_zero()) {
            return Err(Error::InvalidParameter(format!("alpha[{j}] is negative")));
        }
        if let Some(j) = a.diag().iter().position(|x| *x > nu) {
            return Err(Error::InvalidParameter(format!("alpha[{j}] exceeds nu")));
        }
        Ok(Self { nu, a })
    }

    /// Image of the vague prior: `ν = 2`, diagonal 1, off-diagonal ½.
    pub fn vague(m: usize) -> Result<Self> {
        if m == 0 {
            return Err(Error::EmptyDimension);
        }
        let half = T::one() / T::from_count(2);
        let mut a = Matrix::filled(m, m, half);
        for j in 0..m {
            a[(j, j)] = T::one();
        }
        Self::new(T::from_count(2), a)
    }

    pub fn m(&self) -> usize {
        self.a.rows()
    }

    pub fn nu(&self) -> &T {
        &self.nu
    }

    pub fn a(&self) -> &Matrix<T> {
        &self.a
    }

    /// `α = diag(A)`.
    pub fn alpha(&self) -> Vec<T> {
        self.a.diag()
    }

    /// Upper off-diagonal entries of `A` in the row order of `H2`.
    pub fn alpha2(&self) -> Vec<T> {
        crate::binmap::upper_pairs(self.m())
            .into_iter()
            .map(|(j, l)| self.a[(j, l)].clone())
            .collect()
    }

    /// `α̃ = (α, α⁽²⁾, ν)`, aligned with the rows of `Htilde`.
    pub fn alpha_tilde(&self) -> Vec<T> {
        let mut out = self.alpha();
        out.extend(self.alpha2());
        out.push(self.nu.clone());
        out
    }

    /// Marginal `Beta(α_j, β_j)` shapes with `β = ν − α`.
    pub fn marginal_params(&self) -> Result<Vec<(T, T)>> {
        self.alpha()
            .into_iter()
            .enumerate()
            .map(|(j, a)| {
                let b = self.nu.clone() - a.clone();
                if !a.gt_zero() || !b.gt_zero() {
                    Err(Error::DegenerateMarginal { index: j })
                } else {
                    Ok((a, b))
                }
            })
            .collect()
    }

    /// Conjugate update `ν* = ν + n`, `A* = A + H diag(d) Hᵀ`.
    pub fn update(&self, d: &CellCounts, basis: &HBasis) -> Result<Self> {
        if basis.m() != self.m() || d.m() != self.m() {
            return Err(Error::LengthMismatch {
                expected: self.m(),
                found: d.m(),
            });
        }
        let u = basis.weighted_gram(&d.as_field::<T>())?;
        self.update_with(T::from_count(d.n()), &u)
    }

    /// Update from a precomputed `(n, U)` pair.
    pub fn update_with(&self, n: T, u: &Matrix<T>) -> Result<Self> {
        Ok(Self {
            nu: self.nu.clone() + n,
            a: self.a.add(u)?,
        })
    }

    pub fn convert<U: Field>(&self) -> Option<MBetaReduced<U>> {
        Some(MBetaReduced {
            nu: U::from_f64(self.nu.to_f64()?)?,
            a: self.a.convert()?,
        })
    }
}

/// Update matrix `U = Σᵢ xᵢ xᵢᵀ` straight from data rows; equals
/// `H diag(d) Hᵀ` without materialising the `2^m` cells.
pub fn update_matrix_from_rows<T: Field>(m: usize, rows: &[Vec<u8>]) -> Result<Matrix<T>> {
    let mut counts = vec![0u64; m * m];
    for (i, row) in rows.iter().enumerate() {
        if row.len() != m {
            return Err(Error::LengthMismatch {
                expected: m,
                found: row.len(),
            });
        }
        if let Some(col) = row.iter().position(|&b| b > 1) {
            return Err(Error::NonBinaryEntry { row: i, col });
        }
        for j in 0..m {
            if row[j] == 1 {
                for l in 0..m {
                    if row[l] == 1 {
                        counts[j * m + l] += 1;
                    }
                }
            }
        }
    }
    let data = counts.iter().map(|&c| T::from_count(c)).collect();
    Matrix::from_row_major(m, m, data)
}

/// First and second moments of an mBeta distribution.
#[derive(Debug, Clone, PartialEq)]
pub struct MomentSummary<T> {
    pub mu: Vec<T>,
    pub sigma: Matrix<T>,
    pub corr: Matrix<T>,
    pub marginal_ab: Vec<(T, T)>,
}

impl<T: Field> MomentSummary<T> {
    /// Posterior variances, the diagonal of `Σ`.
    pub fn variances(&self) -> Vec<T> {
        self.sigma.diag()
    }
}

impl<T: Real> MBetaReduced<T> {
    /// Mean `α/ν`, covariance `(νA − ααᵀ)/(ν²(ν+1))` and correlation.
    pub fn mean_cov(&self) -> Result<MomentSummary<T>> {
        let marginal_ab = self.marginal_params()?;
        let nu = self.nu;
        let alpha = self.alpha();
        let m = self.m();
        let mu = alpha.iter().map(|a| *a / nu).collect();
        let denom = nu * nu * (nu + T::one());
        let mut sigma = Matrix::zeros(m, m);
        for j in 0..m {
            for l in 0..m {
                sigma[(j, l)] = (nu * self.a[(j, l)] - alpha[j] * alpha[l]) / denom;
            }
        }
        // exact variance from the Beta shapes keeps the diagonal free of cancellation
        for (j, (a, b)) in marginal_ab.iter().enumerate() {
            sigma[(j, j)] = *a * *b / denom;
        }
        let corr = sigma.covariance_to_correlation()?;
        Ok(MomentSummary {
            mu,
            sigma,
            corr,
            marginal_ab,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::binmap::build_basis;
    use num_rational::BigRational;

    pub(crate) const PRIOR_GAMMA: [f64; 8] = [2.57, 0.00, 0.16, 1.27, 0.36, 1.57, 1.91, 12.17];
    pub(crate) const DATA: [u64; 8] = [24, 10, 0, 29, 9, 8, 58, 179];

    fn reference_a() -> Matrix<f64> {
        Matrix::from_rows(&[
            vec![16.00, 14.07, 13.73],
            vec![14.07, 15.50, 13.43],
            vec![13.73, 13.43, 15.00],
        ])
        .unwrap()
    }

    #[test]
    fn moment_matrix_of_reference_gamma() {
        let b = build_basis(3).unwrap();
        let full = MBetaFull::new(3, PRIOR_GAMMA.to_vec()).unwrap();
        let red = full.moment_matrix(&b).unwrap();
        assert!((red.nu() - 20.0).abs() < 0.02);
        let a = reference_a();
        for j in 0..3 {
            for l in 0..3 {
                assert!((red.a()[(j, l)] - a[(j, l)]).abs() < 0.02, "({j},{l})");
            }
        }
    }

    #[test]
    fn uniform_gamma_moments() {
        for m in 1..=5 {
            let b = build_basis(m).unwrap();
            let red = MBetaFull::uniform(m, 8.0f64)
                .unwrap()
                .moment_matrix(&b)
                .unwrap();
            for j in 0..m {
                for l in 0..m {
                    let want = if j == l { 4.0 } else { 2.0 };
                    assert!((red.a()[(j, l)] - want).abs() < 1e-12);
                }
            }
        }
    }

    #[test]
    fn all_ones_cell_gives_constant_a() {
        let b = build_basis(3).unwrap();
        let mut g = vec![0.0; 8];
        g[7] = 5.0;
        let red = MBetaFull::new(3, g).unwrap().moment_matrix(&b).unwrap();
        assert!(red.a().as_slice().iter().all(|&x| x == 5.0));
        // both marginal shapes degenerate (β = 0)
        assert_eq!(
            red.marginal_params(),
            Err(Error::DegenerateMarginal { index: 0 })
        );
    }

    #[test]
    fn marginal_params_examples() {
        let prior = MBetaReduced::new(
            20.0,
            Matrix::from_rows(&[
                vec![16.0, 14.07, 13.73],
                vec![14.07, 15.5, 13.43],
                vec![13.73, 13.43, 15.0],
            ])
            .unwrap(),
        )
        .unwrap();
        assert_eq!(
            prior.marginal_params().unwrap(),
            vec![(16.0, 4.0), (15.5, 4.5), (15.0, 5.0)]
        );
        let vague = MBetaReduced::<f64>::vague(4).unwrap();
        assert!(vague
            .marginal_params()
            .unwrap()
            .iter()
            .all(|&(a, b)| a == 1.0 && b == 1.0));
        let b = build_basis(4).unwrap();
        let v2 = MBetaFull::<f64>::vague(4)
            .unwrap()
            .moment_matrix(&b)
            .unwrap();
        assert_eq!(v2, vague);
    }

    #[test]
    fn posterior_of_reference_example() {
        let b = build_basis(3).unwrap();
        let d = CellCounts::from_counts(3, DATA.to_vec()).unwrap();
        let full = MBetaFull::new(3, PRIOR_GAMMA.to_vec()).unwrap();
        let post = full.update(&d).unwrap();
        let want = [26.57, 10.00, 0.16, 30.27, 9.36, 9.57, 59.91, 191.17];
        for (g, w) in post.gamma().iter().zip(want) {
            assert!((g - w).abs() < 1e-12);
        }
        let red = MBetaReduced::new(20.0, reference_a())
            .unwrap()
            .update(&d, &b)
            .unwrap();
        assert_eq!(*red.nu(), 337.0);
        let a_star = [
            [270.00, 251.07, 200.73],
            [251.07, 281.50, 221.43],
            [200.73, 221.43, 241.00],
        ];
        for j in 0..3 {
            for l in 0..3 {
                assert!((red.a()[(j, l)] - a_star[j][l]).abs() < 1e-9);
            }
        }
        assert_eq!(
            red.marginal_params().unwrap(),
            vec![(270.0, 67.0), (281.5, 55.5), (241.0, 96.0)]
        );
    }

    #[test]
    fn posterior_mean_and_correlation() {
        let d = CellCounts::from_counts(3, DATA.to_vec()).unwrap();
        let b = build_basis(3).unwrap();
        let post = MBetaReduced::new(20.0, reference_a())
            .unwrap()
            .update(&d, &b)
            .unwrap();
        let s = post.mean_cov().unwrap();
        for (mu, want) in s.mu.iter().zip([0.80, 0.84, 0.72]) {
            assert!((mu - want).abs() < 0.005);
        }
        let r = [[1.0, 0.51, 0.13], [0.51, 1.0, 0.36], [0.13, 0.36, 1.0]];
        for j in 0..3 {
            for l in 0..3 {
                assert!((s.corr[(j, l)] - r[j][l]).abs() < 0.01);
            }
        }
        let v1 = 270.0 * 67.0 / (337.0f64.powi(2) * 338.0);
        assert!((s.sigma[(0, 0)] - v1).abs() < 1e-15);
        assert!((v1 - 4.713e-4).abs() < 1e-6);
    }

    #[test]
    fn independent_half_means_variance() {
        let nu = 6.0f64;
        let red = MBetaFull::uniform(2, nu)
            .unwrap()
            .moment_matrix(&build_basis(2).unwrap())
            .unwrap();
        let s = red.mean_cov().unwrap();
        assert!(s.sigma[(0, 1)].abs() < 1e-15);
        assert!((s.sigma[(0, 0)] - 0.25 / (nu + 1.0)).abs() < 1e-15);
    }

    #[test]
    fn product_params() {
        let b = build_basis(3).unwrap();
        let full = MBetaFull::new(3, PRIOR_GAMMA.to_vec()).unwrap();
        let (a1, b1) = full.product_beta_params(&b, &[0]).unwrap();
        assert!((a1 - 16.0).abs() < 0.01 && (b1 - 4.0).abs() < 0.01);
        let (a12, _) = full.product_beta_params(&b, &[0, 1]).unwrap();
        assert!((a12 - 14.07).abs() < 0.01);
        let (a123, _) = full.product_beta_params(&b, &[0, 1, 2]).unwrap();
        assert_eq!(a123, 12.17);
        assert_eq!(full.product_beta_params(&b, &[]), Err(Error::EmptyIndexSet));
    }

    #[test]
    fn update_errors_and_identities() {
        let full = MBetaFull::new(2, vec![1.0; 4]).unwrap();
        let d3 = CellCounts::zeros(3).unwrap();
        assert!(matches!(
            full.update(&d3),
            Err(Error::LengthMismatch { .. })
        ));
        let d0 = CellCounts::zeros(2).unwrap();
        assert_eq!(full.update(&d0).unwrap(), full);
        let b = build_basis(2).unwrap();
        let red = full.moment_matrix(&b).unwrap();
        assert_eq!(red.update(&d0, &b).unwrap(), red);
    }

    #[test]
    fn exact_rational_commutation() {
        let b = build_basis(3).unwrap();
        let g: Vec<BigRational> = PRIOR_GAMMA.iter().map(|&x| BigRational::lit(x)).collect();
        let full = MBetaFull::new(3, g).unwrap();
        let d = CellCounts::from_counts(3, DATA.to_vec()).unwrap();
        let via_full = full.update(&d).unwrap().moment_matrix(&b).unwrap();
        let via_reduced = full.moment_matrix(&b).unwrap().update(&d, &b).unwrap();
        assert_eq!(via_full, via_reduced);
    }

    #[test]
    fn rows_based_update_matrix_matches_cells() {
        let rows = vec![vec![1, 1, 0], vec![0, 1, 1], vec![1, 1, 1], vec![0, 0, 0]];
        let b = build_basis(3).unwrap();
        let d = crate::binmap::cell_counts(3, &rows).unwrap();
        let u1 = b.weighted_gram(&d.as_field::<f64>()).unwrap();
        let u2 = update_matrix_from_rows::<f64>(3, &rows).unwrap();
        assert_eq!(u1, u2);
    }

    #[test]
    fn construction_validation() {
        assert!(MBetaFull::new(2, vec![1.0, -1.0, 1.0, 1.0]).is_err());
        assert_eq!(MBetaFull::new(2, vec![0.0; 4]), Err(Error::AllZeroGamma));
        assert!(MBetaFull::new(2, vec![1.0; 3]).is_err());
        let asym = Matrix::from_rows(&[vec![1.0, 0.5], vec![0.4, 1.0]]).unwrap();
        assert!(MBetaReduced::new(2.0, asym).is_err());
        let too_big = Matrix::from_rows(&[vec![3.0, 0.5], vec![0.5, 1.0]]).unwrap();
        assert!(MBetaReduced::new(2.0, too_big).is_err());
    }

    #[test]
    fn works_in_f32() {
        let b = build_basis(2).unwrap();
        let red = MBetaFull::<f32>::vague(2)
            .unwrap()
            .moment_matrix(&b)
            .unwrap();
        let s = red.mean_cov().unwrap();
        assert!((s.mu[0] - 0.5).abs() < 1e-6);
        assert!((s.corr[(0, 1)]).abs() < 1e-6);
    }
}
