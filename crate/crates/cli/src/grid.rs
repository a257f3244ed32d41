//! Histogram grids over `(0,1)` and `(0,1)²` from posterior draws.

use std::io::Write;
use std::path::Path;

use mvbeta::numerics::sample_theta;
use mvbeta::{HBasis, Matrix, RngStream};

use crate::commands::{create, read_dist, CliError};

#[derive(Debug, Clone, PartialEq)]
pub struct Grid {
    pub resolution: usize,
    /// `(i, j, masses)` with row-major `resolution × resolution` masses.
    pub pairs: Vec<(usize, usize, Vec<f64>)>,
    /// Per-coordinate masses.
    pub marginals: Vec<Vec<f64>>,
}

fn bin(x: f64, res: usize) -> usize {
    ((x * res as f64) as usize).min(res - 1)
}

pub fn histogram_grid(sample: &Matrix<f64>, pairs: &[(usize, usize)], res: usize) -> Grid {
    let n = sample.rows();
    let normalise = |counts: Vec<usize>| {
        counts
            .into_iter()
            .map(|c| c as f64 / n as f64)
            .collect::<Vec<f64>>()
    };
    let pairs = pairs
        .iter()
        .map(|&(i, j)| {
            let mut counts = vec![0usize; res * res];
            for r in 0..n {
                counts[bin(sample[(r, i)], res) * res + bin(sample[(r, j)], res)] += 1;
            }
            (i, j, normalise(counts))
        })
        .collect();
    let marginals = (0..sample.cols())
        .map(|j| {
            let mut counts = vec![0usize; res];
            for r in 0..n {
                counts[bin(sample[(r, j)], res)] += 1;
            }
            normalise(counts)
        })
        .collect();
    Grid {
        resolution: res,
        pairs,
        marginals,
    }
}

fn parse_pairs(spec: Option<&str>, m: usize) -> Result<Vec<(usize, usize)>, CliError> {
    let Some(spec) = spec else {
        return Ok((0..m)
            .flat_map(|i| (i + 1..m).map(move |j| (i, j)))
            .collect());
    };
    spec.split(',')
        .filter(|s| !s.trim().is_empty())
        .map(|item| {
            let bad = || CliError::Input(format!("invalid pair '{item}', expected e.g. 1-2"));
            let (a, b) = item.trim().split_once('-').ok_or_else(bad)?;
            let a: usize = a.trim().parse().map_err(|_| bad())?;
            let b: usize = b.trim().parse().map_err(|_| bad())?;
            if a == 0 || b == 0 || a > m || b > m || a == b {
                return Err(bad());
            }
            Ok((a - 1, b - 1))
        })
        .collect()
}

fn write_grid<W: Write>(g: &Grid, out: W) -> Result<(), CliError> {
    let fmt = |e: csv::Error| CliError::Input(e.to_string());
    let mut wtr = csv::Writer::from_writer(out);
    wtr.write_record([
        "kind", "i", "j", "bin_x", "bin_y", "x_lo", "x_hi", "y_lo", "y_hi", "mass",
    ])
    .map_err(fmt)?;
    let res = g.resolution;
    let edge = |k: usize| (k as f64 / res as f64).to_string();
    for (j, mass) in g.marginals.iter().enumerate() {
        for (b, v) in mass.iter().enumerate() {
            wtr.write_record([
                "marginal".to_string(),
                (j + 1).to_string(),
                String::new(),
                b.to_string(),
                String::new(),
                edge(b),
                edge(b + 1),
                String::new(),
                String::new(),
                v.to_string(),
            ])
            .map_err(fmt)?;
        }
    }
    for (i, j, mass) in &g.pairs {
        for bx in 0..res {
            for by in 0..res {
                wtr.write_record([
                    "pair".to_string(),
                    (i + 1).to_string(),
                    (j + 1).to_string(),
                    bx.to_string(),
                    by.to_string(),
                    edge(bx),
                    edge(bx + 1),
                    edge(by),
                    edge(by + 1),
                    mass[bx * res + by].to_string(),
                ])
                .map_err(fmt)?;
            }
        }
    }
    wtr.flush().map_err(|e| CliError::Input(e.to_string()))
}

pub fn cmd_grid(
    dist: &Path,
    pairs: Option<&str>,
    resolution: usize,
    n_r: usize,
    seed: u64,
    out: &Path,
) -> Result<(), CliError> {
    if resolution == 0 || n_r == 0 {
        return Err(CliError::Input(
            "--resolution and --n-r must be positive".into(),
        ));
    }
    let doc = read_dist(dist)?;
    let Some(full) = doc.full()? else {
        return Err(CliError::Statistical(
            "density grids need the full parameter vector gamma, which this distribution does not carry".into(),
        ));
    };
    let pairs = parse_pairs(pairs, doc.m)?;
    let basis = HBasis::new(doc.m)?;
    let sample = sample_theta(full.gamma(), &basis, n_r, &mut RngStream::new(seed, 0))?;
    write_grid(&histogram_grid(&sample, &pairs, resolution), create(out)?)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn single_bin_holds_everything() {
        let s = Matrix::from_rows(&[vec![0.1, 0.9], vec![0.5, 1.0]]).unwrap();
        let g = histogram_grid(&s, &[(0, 1)], 1);
        assert_eq!(g.pairs[0].2, vec![1.0]);
        assert_eq!(g.marginals, vec![vec![1.0], vec![1.0]]);
    }

    #[test]
    fn masses_sum_to_one() {
        let basis = HBasis::new(3).unwrap();
        let s = sample_theta(
            &[1.0, 2.0, 0.5, 3.0, 1.5, 2.5, 0.7, 4.0],
            &basis,
            3000,
            &mut RngStream::new(1, 0),
        )
        .unwrap();
        let g = histogram_grid(&s, &parse_pairs(None, 3).unwrap(), 7);
        assert_eq!(g.pairs.len(), 3);
        for (_, _, mass) in &g.pairs {
            assert!((mass.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn pair_parsing() {
        assert_eq!(
            parse_pairs(Some("1-2, 3-1"), 3).unwrap(),
            vec![(0, 1), (2, 0)]
        );
        assert!(parse_pairs(Some("1-1"), 3).is_err());
        assert!(parse_pairs(Some("0-2"), 3).is_err());
        assert!(parse_pairs(Some("1:2"), 3).is_err());
    }
}
