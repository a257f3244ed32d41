use rand_distr::{Distribution, Gamma};

use super::rng::RngStream;
use crate::binmap::HBasis;
use crate::error::{Error, Result};
use crate::linalg::Matrix;

/// Precomputed Gamma samplers for one concentration vector.
#[derive(Debug, Clone)]
pub struct DirichletSampler {
    // (cell index, sampler for shape γ_k or γ_k + 1, shape < 1)
    parts: Vec<(usize, Gamma<f64>, Option<f64>)>,
    w: usize,
}

impl DirichletSampler {
    pub fn new(gamma: &[f64]) -> Result<Self> {
        if let Some(k) = gamma.iter().position(|g| !(*g >= 0.0) || !g.is_finite()) {
            return Err(Error::InvalidParameter(format!(
                "gamma[{k}] must be finite and nonnegative"
            )));
        }
        if gamma.iter().all(|&g| g == 0.0) {
            return Err(Error::AllZeroGamma);
        }
        let mut parts = Vec::new();
        for (k, &g) in gamma.iter().enumerate() {
            if g == 0.0 {
                continue;
            }
            // Shapes below one are drawn as Gamma(g + 1) · U^{1/g} in log
            // space, so tiny concentrations never underflow to zero.
            let (shape, boost) = if g < 1.0 {
                (g + 1.0, Some(g))
            } else {
                (g, None)
            };
            let dist =
                Gamma::new(shape, 1.0).map_err(|e| Error::InvalidParameter(e.to_string()))?;
            parts.push((k, dist, boost));
        }
        Ok(Self {
            parts,
            w: gamma.len(),
        })
    }

    pub fn w(&self) -> usize {
        self.w
    }

    /// Writes one draw into `out` (length `w`).
    pub fn draw_into(&self, rng: &mut RngStream, out: &mut [f64]) {
        out.iter_mut().for_each(|v| *v = 0.0);
        let mut max_log = f64::NEG_INFINITY;
        for (k, dist, boost) in &self.parts {
            let mut lg = dist.sample(rng).ln();
            if let Some(g) = boost {
                // 1 − U lies in (0, 1], so its log is finite
                lg += (1.0 - rng.uniform()).ln() / g;
            }
            out[*k] = lg;
            max_log = max_log.max(lg);
        }
        let mut total = 0.0;
        for (k, _, _) in &self.parts {
            let v = (out[*k] - max_log).exp();
            out[*k] = v;
            total += v;
        }
        for (k, _, _) in &self.parts {
            out[*k] /= total;
        }
    }
}

/// One Dirichlet draw written into `out`.
pub fn dirichlet_draw_into(gamma: &[f64], rng: &mut RngStream, out: &mut [f64]) -> Result<()> {
    if out.len() != gamma.len() {
        return Err(Error::LengthMismatch {
            expected: gamma.len(),
            found: out.len(),
        });
    }
    DirichletSampler::new(gamma)?.draw_into(rng, out);
    Ok(())
}

/// `count` independent draws from `Dir(γ)`, one per row. Zero entries of
/// `γ` give exact zeros.
pub fn sample_dirichlet(gamma: &[f64], count: usize, rng: &mut RngStream) -> Result<Matrix<f64>> {
    let sampler = DirichletSampler::new(gamma)?;
    let w = gamma.len();
    let mut data = vec![0.0; count * w];
    for row in data.chunks_mut(w.max(1)).take(count) {
        sampler.draw_into(rng, row);
    }
    Matrix::from_row_major(count, w, data)
}

/// `count` draws of `ϑ = Hp` with `p ~ Dir(γ)`, one per row (`count × m`).
pub fn sample_theta(
    gamma: &[f64],
    basis: &HBasis,
    count: usize,
    rng: &mut RngStream,
) -> Result<Matrix<f64>> {
    if gamma.len() != basis.w() {
        return Err(Error::LengthMismatch {
            expected: basis.w(),
            found: gamma.len(),
        });
    }
    let sampler = DirichletSampler::new(gamma)?;
    let (m, w) = (basis.m(), basis.w());
    let mut p = vec![0.0; w];
    let mut data = Vec::with_capacity(count * m);
    for _ in 0..count {
        sampler.draw_into(rng, &mut p);
        for j in 0..m {
            let row = basis.h().row(j);
            data.push(
                row.iter()
                    .zip(&p)
                    .filter(|(b, _)| **b == 1)
                    .map(|(_, v)| v)
                    .sum::<f64>()
                    .min(1.0),
            );
        }
    }
    Matrix::from_row_major(count, m, data)
}
