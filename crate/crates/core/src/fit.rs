//! Recovering a full concentration vector `γ` from a reduced pair `(ν, A)`.
//!
//! The target is the constrained least-squares problem
//!
//! ```text
//! minimise ||Cγ − c||²  subject to  Eγ = e,  γ ≥ 0
//! ```
//!
//! with `C = H⁽²⁾`, `c = α⁽²⁾`, `E = [H; 1ᵀ]` and `e = (α, ν)`. Its minimisers
//! form a face of a polytope; among them the one closest to the uniform vector
//! `1_w ν/w` is returned.
//!
//! When `H̃γ = α̃, γ ≥ 0` is feasible (decided by the phase-one LP), the optimal
//! face is exactly that polytope and the answer is the Euclidean projection of
//! the uniform vector onto it. Otherwise the residual is minimised through a
//! penalised projection in the lifted variables `(γ, z = Cγ)`, with weight
//! `1/δ` on `||z − c||²` and weight one on `||γ − u||²`; as `δ → 0` this
//! composes the two criteria lexicographically.
//!
//! Every projection is solved by a semismooth Newton method on the dual of
//! `min ½ Σ wᵢ(xᵢ − x0ᵢ)²  s.t.  Gx = g, x_B ≥ 0`, whose primal iterate
//! `x(λ) = max(0, x0 + W⁻¹Gᵀλ)` is nonnegative by construction.

use crate::binmap::HBasis;
use crate::error::{Error, Result};
use crate::linalg::Matrix;
use crate::lp::phase_one;
use crate::mbeta::{MBetaFull, MBetaReduced};
use crate::scalar::Real;

/// Penalty parameter for the lifted residual minimisation.
const DELTA: f64 = 1e-8;
const MAX_NEWTON: usize = 200;

/// Constrained least-squares problem in the layout above.
#[derive(Debug, Clone, PartialEq)]
pub struct LseiProblem<T> {
    /// Objective matrix `C` (`p × w`).
    pub c_mat: Matrix<T>,
    /// Objective target `c` (length `p`).
    pub c: Vec<T>,
    /// Equality matrix `E` (`q × w`).
    pub e_mat: Matrix<T>,
    /// Equality target `e` (length `q`).
    pub e: Vec<T>,
    /// Tie-break anchor; defaults to the uniform vector with total `e.last()`.
    pub anchor: Option<Vec<T>>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FitResult<T> {
    pub gamma: Vec<T>,
    /// `||Cγ − c||²` at the solution.
    pub residual: T,
    /// Whether the residual is within the exactness tolerance.
    pub exact: bool,
    /// Whether the solution was selected from a non-singleton optimal set by
    /// the distance-to-anchor criterion.
    pub tie_break_applied: bool,
    /// Multipliers of the bounds `γᵢ ≥ 0` in the final projection; zero on
    /// positive components and nonnegative at a KKT point.
    pub bound_multipliers: Vec<T>,
    pub newton_iterations: usize,
}

impl<T: Real> FitResult<T> {
    pub fn to_full(&self, m: usize) -> Result<MBetaFull<T>> {
        MBetaFull::new(m, self.gamma.clone())
    }
}

/// Exactness tolerance `1e-8 · (1 + ||c||²)`.
pub fn exactness_tolerance<T: Real>(c: &[T]) -> T {
    let norm2 = c.iter().fold(T::zero(), |acc, &v| acc + v * v);
    T::lit(1e-8) * (T::one() + norm2)
}

impl<T: Real> LseiProblem<T> {
    /// The problem for `(ν, A)` on `basis`.
    pub fn from_reduced(red: &MBetaReduced<T>, basis: &HBasis) -> Result<Self> {
        if basis.m() != red.m() {
            return Err(Error::LengthMismatch {
                expected: red.m(),
                found: basis.m(),
            });
        }
        let m = red.m();
        let w = basis.w();
        let h: Matrix<T> = basis.h().to_matrix();
        let mut e_data = h.as_slice().to_vec();
        e_data.extend(std::iter::repeat_n(T::one(), w));
        let e_mat = Matrix::from_row_major(m + 1, w, e_data)?;
        let mut e = red.alpha();
        e.push(*red.nu());
        Ok(Self {
            c_mat: basis.h2().to_matrix(),
            c: red.alpha2(),
            e_mat,
            e,
            anchor: None,
        })
    }

    fn validate(&self) -> Result<usize> {
        let w = self.e_mat.cols();
        if self.c_mat.cols() != w {
            return Err(Error::LengthMismatch {
                expected: w,
                found: self.c_mat.cols(),
            });
        }
        if self.c.len() != self.c_mat.rows() {
            return Err(Error::LengthMismatch {
                expected: self.c_mat.rows(),
                found: self.c.len(),
            });
        }
        if self.e.len() != self.e_mat.rows() || self.e.is_empty() {
            return Err(Error::LengthMismatch {
                expected: self.e_mat.rows(),
                found: self.e.len(),
            });
        }
        if let Some(a) = &self.anchor {
            if a.len() != w {
                return Err(Error::LengthMismatch {
                    expected: w,
                    found: a.len(),
                });
            }
        }
        Ok(w)
    }

    fn anchor_vec(&self, w: usize) -> Vec<T> {
        match &self.anchor {
            Some(a) => a.clone(),
            None => vec![*self.e.last().expect("nonempty") / T::from_count(w as u64); w],
        }
    }

    fn residual(&self, gamma: &[T]) -> Result<T> {
        let cg = self.c_mat.matvec(gamma)?;
        Ok(cg
            .iter()
            .zip(&self.c)
            .fold(T::zero(), |acc, (&a, &b)| acc + (a - b) * (a - b)))
    }
}

/// Solves the problem with the lexicographic tie-break described above.
pub fn solve_lsei<T: Real>(problem: &LseiProblem<T>) -> Result<FitResult<T>> {
    let w = problem.validate()?;
    let anchor = problem.anchor_vec(w);
    let (p, q) = (problem.c_mat.rows(), problem.e_mat.rows());
    let scale = problem.e.iter().fold(T::one(), |acc, v| acc.max(v.abs()));

    // Stacked system [E; C] γ = (e, c).
    let mut stacked = problem.e_mat.as_slice().to_vec();
    stacked.extend_from_slice(problem.c_mat.as_slice());
    let full = Matrix::from_row_major(q + p, w, stacked)?;
    let mut full_rhs = problem.e.clone();
    full_rhs.extend_from_slice(&problem.c);
    let lp = phase_one(&full, &full_rhs)?;
    let lp_tol = T::feasibility_tol() * (T::one() + scale);

    let weights = vec![T::one(); w];
    let bounded = vec![true; w];
    let (gamma, multipliers, iters) = if lp.infeasibility <= lp_tol {
        let sol = match project(&full, &full_rhs, &weights, &anchor, &bounded) {
            Err(Error::NumericalFailure(_)) => project_on_face(&full, &full_rhs, &anchor)?,
            other => other?,
        };
        (sol.x, sol.bound_multipliers, sol.iterations)
    } else {
        let e_lp = phase_one(&problem.e_mat, &problem.e)?;
        if e_lp.infeasibility > lp_tol {
            return Err(Error::EqualityInfeasible);
        }
        // lifted variables (γ, z) with [E 0; C −I](γ, z) = (e, 0)
        let n = w + p;
        let mut g = Matrix::zeros(q + p, n);
        for i in 0..q {
            for k in 0..w {
                g[(i, k)] = problem.e_mat[(i, k)];
            }
        }
        for i in 0..p {
            for k in 0..w {
                g[(q + i, k)] = problem.c_mat[(i, k)];
            }
            g[(q + i, w + i)] = -T::one();
        }
        let mut rhs = problem.e.clone();
        rhs.extend(std::iter::repeat_n(T::zero(), p));
        let mut lw = weights.clone();
        lw.extend(std::iter::repeat_n(T::lit(DELTA).recip(), p));
        let mut x0 = anchor.clone();
        x0.extend_from_slice(&problem.c);
        let mut lb = bounded.clone();
        lb.extend(std::iter::repeat_n(false, p));
        let sol = project(&g, &rhs, &lw, &x0, &lb)?;
        let mut x = sol.x;
        x.truncate(w);
        let mut mult = sol.bound_multipliers;
        mult.truncate(w);
        (x, mult, sol.iterations)
    };

    let residual = problem.residual(&gamma)?;
    let exact = residual <= exactness_tolerance(&problem.c);
    Ok(FitResult {
        gamma,
        residual,
        exact,
        tie_break_applied: w > full.rows(),
        bound_multipliers: multipliers,
        newton_iterations: iters,
    })
}

/// Fits `γ` to the reduced pair `(ν, A)`.
pub fn fit_gamma<T: Real>(red: &MBetaReduced<T>, basis: &HBasis) -> Result<FitResult<T>> {
    solve_lsei(&LseiProblem::from_reduced(red, basis)?)
}

/// Coordinates that are positive for some nonnegative solution of `Gx = g`.
///
/// Solves `G(1 + δ) = s·g` with `δ, s ≥ 0` over the kept columns. When that
/// is infeasible the Farkas vector `y` has `Gᵀy ≤ 0` and `gᵀy = 0` on a
/// feasible system, so each column with `(Gᵀy)ᵢ < 0` vanishes in every
/// solution and is dropped before trying again.
fn maximal_support<T: Real>(g: &Matrix<T>, rhs: &[T]) -> Result<Vec<bool>> {
    let (q, n) = (g.rows(), g.cols());
    let mut keep = vec![true; n];
    loop {
        let cols: Vec<usize> = (0..n).filter(|&i| keep[i]).collect();
        let k = cols.len();
        let mut sys = Matrix::zeros(q, k + 1);
        let mut shifted = vec![T::zero(); q];
        for a in 0..q {
            for (c, &i) in cols.iter().enumerate() {
                sys[(a, c)] = g[(a, i)];
                shifted[a] -= g[(a, i)];
            }
            sys[(a, k)] = -rhs[a];
        }
        let lp = phase_one(&sys, &shifted)?;
        let scale = shifted
            .iter()
            .chain(rhs)
            .fold(T::one(), |acc, v| acc.max(v.abs()));
        if lp.infeasibility <= T::feasibility_tol() * scale {
            return Ok(keep);
        }
        let gty = transpose_mul(g, &lp.dual);
        let thr =
            T::feasibility_tol() * cols.iter().fold(T::zero(), |acc, &i| acc.max(gty[i].abs()));
        let mut dropped = false;
        for &i in &cols {
            if gty[i] < -thr {
                keep[i] = false;
                dropped = true;
            }
        }
        if !dropped || !keep.iter().any(|&b| b) {
            return Err(Error::NumericalFailure(
                "could not isolate the face of feasible solutions".into(),
            ));
        }
    }
}

/// Projection restricted to the coordinates that can be positive. Used when
/// the feasible set has no interior point and the dual optimum escapes to
/// infinity.
fn project_on_face<T: Real>(g: &Matrix<T>, rhs: &[T], x0: &[T]) -> Result<Projection<T>> {
    let (q, n) = (g.rows(), g.cols());
    let keep = maximal_support(g, rhs)?;
    let cols: Vec<usize> = (0..n).filter(|&i| keep[i]).collect();
    let mut sub = Matrix::zeros(q, cols.len());
    for a in 0..q {
        for (c, &i) in cols.iter().enumerate() {
            sub[(a, c)] = g[(a, i)];
        }
    }
    let sub_x0: Vec<T> = cols.iter().map(|&i| x0[i]).collect();
    let sol = project(
        &sub,
        rhs,
        &vec![T::one(); cols.len()],
        &sub_x0,
        &vec![true; cols.len()],
    )?;
    let mut x = vec![T::zero(); n];
    for (c, &i) in cols.iter().enumerate() {
        x[i] = sol.x[c];
    }
    // no finite multiplier exists for coordinates forced to zero, so these
    // report the anchor's pull towards the bound
    let mut bound_multipliers: Vec<T> = x0.iter().map(|&v| -v).collect();
    for (c, &i) in cols.iter().enumerate() {
        bound_multipliers[i] = sol.bound_multipliers[c];
    }
    Ok(Projection {
        x,
        bound_multipliers,
        iterations: sol.iterations,
    })
}

pub(crate) struct Projection<T> {
    pub x: Vec<T>,
    pub bound_multipliers: Vec<T>,
    pub iterations: usize,
}

/// Weighted projection `argmin ½ Σ wᵢ(xᵢ − x0ᵢ)²` over `Gx = g` and
/// `xᵢ ≥ 0` where `bounded[i]`. Requires a feasible system.
pub(crate) fn project<T: Real>(
    g: &Matrix<T>,
    rhs: &[T],
    weights: &[T],
    x0: &[T],
    bounded: &[bool],
) -> Result<Projection<T>> {
    let (q, n) = (g.rows(), g.cols());
    let winv: Vec<T> = weights.iter().map(|w| w.recip()).collect();
    let rhs_scale = rhs.iter().fold(T::one(), |acc, v| acc.max(v.abs()));
    let stop_tol = T::epsilon() * T::lit(1e3) * rhs_scale;
    let accept_tol = T::feasibility_tol() * rhs_scale;

    // The primal point and the unclamped values `x0 + W⁻¹Gᵀλ`.
    let primal = |lambda: &[T]| -> (Vec<T>, Vec<T>) {
        let t = transpose_mul(g, lambda);
        let raw: Vec<T> = (0..n).map(|i| x0[i] + t[i] * winv[i]).collect();
        let x = (0..n)
            .map(|i| {
                if bounded[i] && raw[i] <= T::zero() {
                    T::zero()
                } else {
                    raw[i]
                }
            })
            .collect();
        (x, raw)
    };
    let dual_value = |lambda: &[T], x: &[T]| -> T {
        let gx = g.matvec(x).expect("shape");
        let quad = (0..n).fold(T::zero(), |acc, i| {
            acc + weights[i] * (x[i] - x0[i]) * (x[i] - x0[i])
        });
        let lin = (0..q).fold(T::zero(), |acc, a| acc + lambda[a] * (gx[a] - rhs[a]));
        quad / T::lit(2.0) - lin
    };

    let mut lambda = vec![T::zero(); q];
    let (mut x, mut raw) = primal(&lambda);
    let mut value = dual_value(&lambda, &x);
    let mut iterations = 0;
    loop {
        let gx = g.matvec(&x)?;
        let grad: Vec<T> = (0..q).map(|a| rhs[a] - gx[a]).collect();
        let gnorm = grad.iter().fold(T::zero(), |acc, v| acc.max(v.abs()));
        if gnorm <= stop_tol || iterations >= MAX_NEWTON {
            break;
        }
        iterations += 1;
        let free: Vec<bool> = (0..n).map(|i| !bounded[i] || raw[i] > T::zero()).collect();
        let mut jac = reduced_gram(g, &winv, &free);
        let jscale = (0..q).fold(T::zero(), |acc, a| acc.max(jac[(a, a)]));
        // Proximal term proportional to the gradient: far from the solution
        // it turns null directions of a singular Jacobian into ascent steps.
        let tau = T::lit(1e-12) * (T::one() + jscale) + T::lit(1e-6) * gnorm;
        for a in 0..q {
            jac[(a, a)] += tau;
        }
        let dir = jac.solve_psd(&grad)?;
        let slope = grad
            .iter()
            .zip(&dir)
            .fold(T::zero(), |acc, (&a, &b)| acc + a * b);
        let mut step = T::one();
        let mut accepted = false;
        while step >= T::lit(1e-10) {
            let trial: Vec<T> = lambda
                .iter()
                .zip(&dir)
                .map(|(&l, &d)| l + step * d)
                .collect();
            let (tx, traw) = primal(&trial);
            let tv = dual_value(&trial, &tx);
            // Close to the optimum the change in the dual value drowns in
            // its rounding error, so a clear drop in the residual also
            // counts as progress.
            let tg = g.matvec(&tx)?;
            let tnorm = (0..q).fold(T::zero(), |acc, a| acc.max((rhs[a] - tg[a]).abs()));
            if tv >= value + T::lit(1e-4) * step * slope || tnorm <= T::lit(0.5) * gnorm {
                lambda = trial;
                x = tx;
                raw = traw;
                value = tv;
                accepted = true;
                break;
            }
            step = step / T::lit(2.0);
        }
        if !accepted {
            break;
        }
    }

    let gx = g.matvec(&x)?;
    let err = (0..q).fold(T::zero(), |acc, a| acc.max((gx[a] - rhs[a]).abs()));
    if err > accept_tol {
        return Err(Error::NumericalFailure(format!(
            "projection did not reach the equality constraints (max violation {err})"
        )));
    }
    let t = transpose_mul(g, &lambda);
    let bound_multipliers = (0..n)
        .map(|i| {
            if bounded[i] && x[i] == T::zero() {
                -(weights[i] * x0[i] + t[i])
            } else {
                T::zero()
            }
        })
        .collect();
    Ok(Projection {
        x,
        bound_multipliers,
        iterations,
    })
}

fn transpose_mul<T: Real>(g: &Matrix<T>, lambda: &[T]) -> Vec<T> {
    let mut t = vec![T::zero(); g.cols()];
    for (a, &l) in lambda.iter().enumerate() {
        if l == T::zero() {
            continue;
        }
        for (ti, &v) in t.iter_mut().zip(g.row(a)) {
            *ti += v * l;
        }
    }
    t
}

fn reduced_gram<T: Real>(g: &Matrix<T>, winv: &[T], free: &[bool]) -> Matrix<T> {
    let q = g.rows();
    let scaled: Vec<Vec<T>> = (0..q)
        .map(|a| {
            g.row(a)
                .iter()
                .enumerate()
                .map(|(i, &v)| if free[i] { v * winv[i] } else { T::zero() })
                .collect()
        })
        .collect();
    let mut jac = Matrix::zeros(q, q);
    for a in 0..q {
        for b in a..q {
            let s = scaled[a]
                .iter()
                .zip(g.row(b))
                .fold(T::zero(), |acc, (&x, &y)| acc + x * y);
            jac[(a, b)] = s;
            jac[(b, a)] = s;
        }
    }
    jac
}
