//! Phase-one primal simplex for `A x = b, x ≥ 0`.
//!
//! Dense tableau. Entering columns follow Dantzig's most-negative rule while
//! the objective keeps decreasing; after a run of degenerate pivots the
//! solver switches to Bland's smallest-index rule until progress resumes,
//! which rules out cycling. Runs unchanged over exact rationals. Artificial
//! columns are kept in the tableau; their reduced costs give the dual vector
//! at the optimum.

use crate::error::{Error, Result};
use crate::linalg::Matrix;
use crate::scalar::Field;

#[derive(Debug, Clone)]
pub struct PhaseOne<T> {
    /// Optimal sum of artificial variables; zero iff the system is feasible.
    pub infeasibility: T,
    /// Basic solution for the structural variables.
    pub x: Vec<T>,
    /// Vector `y` with `Aᵀy ≤ 0` and `yᵀb = infeasibility` (original row signs).
    pub dual: Vec<T>,
    /// Structural columns in the final basis.
    pub basic_columns: Vec<usize>,
    pub pivots: usize,
}

/// Minimises the total artificial slack of `A x + s = b` (rows sign-normalised
/// so that `b ≥ 0`).
pub fn phase_one<T: Field>(a: &Matrix<T>, b: &[T]) -> Result<PhaseOne<T>> {
    let (r, n) = (a.rows(), a.cols());
    if b.len() != r {
        return Err(Error::LengthMismatch {
            expected: r,
            found: b.len(),
        });
    }
    let width = n + r + 1;
    let rhs_col = n + r;
    let signs: Vec<bool> = b.iter().map(|v| v.lt_zero()).collect();
    let mut tab = vec![T::zero(); r * width];
    for i in 0..r {
        let row = &mut tab[i * width..(i + 1) * width];
        for j in 0..n {
            row[j] = if signs[i] {
                -a[(i, j)].clone()
            } else {
                a[(i, j)].clone()
            };
        }
        row[n + i] = T::one();
        row[rhs_col] = if signs[i] {
            -b[i].clone()
        } else {
            b[i].clone()
        };
    }
    // reduced costs for objective Σ s
    let mut cost = vec![T::zero(); width];
    for i in 0..r {
        for j in 0..n {
            cost[j] = cost[j].clone() - tab[i * width + j].clone();
        }
        cost[rhs_col] = cost[rhs_col].clone() - tab[i * width + rhs_col].clone();
    }
    let mut basis: Vec<usize> = (n..n + r).collect();
    let tol = T::pivot_tol();
    let max_pivots = 50 * (n + r) + 1000;
    let mut pivots = 0;
    let mut degenerate_run = 0usize;
    const BLAND_AFTER: usize = 50;

    loop {
        let entering = if degenerate_run >= BLAND_AFTER {
            (0..n + r).find(|&j| cost[j] < -tol.clone())
        } else {
            let mut best: Option<usize> = None;
            for j in 0..n + r {
                if cost[j] < -tol.clone() && best.is_none_or(|b| cost[j] < cost[b]) {
                    best = Some(j);
                }
            }
            best
        };
        let Some(col) = entering else { break };
        let mut leave: Option<(usize, T)> = None;
        for i in 0..r {
            let piv = &tab[i * width + col];
            if *piv > tol {
                let ratio = tab[i * width + rhs_col].clone() / piv.clone();
                leave = match leave {
                    None => Some((i, ratio)),
                    Some((bi, br)) => {
                        if ratio < br || (ratio == br && basis[i] < basis[bi]) {
                            Some((i, ratio))
                        } else {
                            Some((bi, br))
                        }
                    }
                };
            }
        }
        let Some((prow, step)) = leave else {
            return Err(Error::NumericalFailure(
                "phase-one simplex reported an unbounded ray".into(),
            ));
        };
        if step > tol {
            degenerate_run = 0;
        } else {
            degenerate_run += 1;
        }
        pivot(&mut tab, &mut cost, width, r, prow, col);
        basis[prow] = col;
        pivots += 1;
        if pivots > max_pivots {
            return Err(Error::NumericalFailure(
                "phase-one simplex exceeded its pivot budget".into(),
            ));
        }
    }

    let mut x = vec![T::zero(); n];
    let mut basic_columns = Vec::new();
    for (i, &j) in basis.iter().enumerate() {
        if j < n {
            x[j] = tab[i * width + rhs_col].clone();
            basic_columns.push(j);
        }
    }
    let infeasibility = -cost[rhs_col].clone();
    let dual = (0..r)
        .map(|i| {
            let y = T::one() - cost[n + i].clone();
            if signs[i] {
                -y
            } else {
                y
            }
        })
        .collect();
    Ok(PhaseOne {
        infeasibility,
        x,
        dual,
        basic_columns,
        pivots,
    })
}

fn pivot<T: Field>(tab: &mut [T], cost: &mut [T], width: usize, r: usize, prow: usize, col: usize) {
    let p = tab[prow * width + col].clone();
    for v in &mut tab[prow * width..(prow + 1) * width] {
        *v = v.clone() / p.clone();
    }
    tab[prow * width + col] = T::one();
    let pivot_row: Vec<T> = tab[prow * width..(prow + 1) * width].to_vec();
    for i in 0..r {
        if i == prow {
            continue;
        }
        let f = tab[i * width + col].clone();
        if f.is_zero() {
            continue;
        }
        let row = &mut tab[i * width..(i + 1) * width];
        for (v, pv) in row.iter_mut().zip(&pivot_row) {
            if !pv.is_zero() {
                *v = v.clone() - f.clone() * pv.clone();
            }
        }
        row[col] = T::zero();
    }
    let f = cost[col].clone();
    if !f.is_zero() {
        for (v, pv) in cost.iter_mut().zip(&pivot_row) {
            if !pv.is_zero() {
                *v = v.clone() - f.clone() * pv.clone();
            }
        }
        cost[col] = T::zero();
    }
}
