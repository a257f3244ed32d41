//! JSON and CSV documents exchanged with the command line.
//!
//! A distribution document stores its base prior together with the
//! cumulative integer data summaries absorbed so far. The headline `nu`,
//! `A` and `gamma` fields are always recomputed from those two parts, so
//! updating twice gives the same bits as updating once on the pooled data.

use std::io::{Read, Write};

use serde::{Deserialize, Serialize};

use crate::admissibility::{CorrelationSpec, FeasibilityResult, FeasibilityStatus, FrechetReport};
use crate::binmap::{cell_counts, decode_outcome, CellCounts, HBasis, DEFAULT_M_MAX};
use crate::error::{Error, Result};
use crate::linalg::Matrix;
use crate::mbeta::{update_matrix_from_rows, MBetaFull, MBetaReduced};
use crate::regions::CredibleRegion;

fn format_err(e: impl std::fmt::Display) -> Error {
    Error::Format(e.to_string())
}

/// Prior specification in one of three forms.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum PriorSpec {
    Gamma(GammaSpec),
    Moments(MomentSpec),
    Vague(VagueSpec),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GammaSpec {
    pub gamma: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MomentSpec {
    pub nu: f64,
    pub mu: Vec<f64>,
    #[serde(rename = "R")]
    pub r: CorrelationSpec,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct VagueSpec {
    pub vague: bool,
    pub m: usize,
}

impl PriorSpec {
    pub fn from_json(text: &str) -> Result<Self> {
        let spec: Self = serde_json::from_str(text).map_err(|e| {
            Error::Format(format!("prior spec must have exactly one of the forms {{gamma}}, {{nu, mu, R}} or {{vague, m}}: {e}"))
        })?;
        if let PriorSpec::Vague(v) = &spec {
            if !v.vague {
                return Err(Error::Format("\"vague\" must be true when given".into()));
            }
        }
        Ok(spec)
    }

    pub fn m(&self) -> Result<usize> {
        match self {
            PriorSpec::Gamma(g) => {
                let w = g.gamma.len();
                if w < 2 || !w.is_power_of_two() {
                    return Err(Error::Format(format!(
                        "gamma length {w} is not a power of two >= 2"
                    )));
                }
                Ok(w.trailing_zeros() as usize)
            }
            PriorSpec::Moments(s) => Ok(s.mu.len()),
            PriorSpec::Vague(v) => Ok(v.m),
        }
    }
}

/// Integer data summaries absorbed by a distribution.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct DataSummary {
    /// Number of observations.
    pub n: u64,
    /// `U = Σ xᵢxᵢᵀ`, row-major.
    pub u: Vec<u64>,
    /// Cell counts `d`, present whenever the full parametrisation is kept.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub cells: Option<Vec<u64>>,
}

/// Base prior of a distribution document.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BasePrior {
    pub nu: f64,
    #[serde(rename = "A")]
    pub a: Vec<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub gamma: Option<Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DistributionDoc {
    pub m: usize,
    pub nu: f64,
    /// `A`, row-major.
    #[serde(rename = "A")]
    pub a: Vec<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub gamma: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub fit_residual: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub fit_exact: Option<bool>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub prior: Option<BasePrior>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub data: Option<DataSummary>,
}

fn flat(a: &Matrix<f64>) -> Vec<f64> {
    a.as_slice().to_vec()
}

impl DistributionDoc {
    /// Document for a prior given in reduced form, optionally with `γ`.
    pub fn from_prior(red: &MBetaReduced<f64>, full: Option<&MBetaFull<f64>>) -> Self {
        Self {
            m: red.m(),
            nu: *red.nu(),
            a: flat(red.a()),
            gamma: full.map(|f| f.gamma().to_vec()),
            fit_residual: None,
            fit_exact: None,
            prior: None,
            data: None,
        }
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let doc: Self = serde_json::from_str(text).map_err(format_err)?;
        doc.validate()?;
        Ok(doc)
    }

    pub fn to_json(&self) -> Result<String> {
        serde_json::to_string_pretty(self).map_err(format_err)
    }

    fn validate(&self) -> Result<()> {
        let m = self.m;
        if m == 0 {
            return Err(Error::EmptyDimension);
        }
        if self.a.len() != m * m {
            return Err(Error::Format(format!(
                "A has {} entries, expected {}",
                self.a.len(),
                m * m
            )));
        }
        if let Some(g) = &self.gamma {
            if m > DEFAULT_M_MAX || g.len() != 1 << m {
                return Err(Error::Format(format!(
                    "gamma has {} entries, expected 2^{m}",
                    g.len()
                )));
            }
        }
        if let Some(d) = &self.data {
            if d.u.len() != m * m {
                return Err(Error::Format("data.u has the wrong size".into()));
            }
            if self.prior.is_none() {
                return Err(Error::Format(
                    "documents with data must carry their base prior".into(),
                ));
            }
        }
        Ok(())
    }

    /// Reduced parametrisation `(ν, A)`.
    pub fn reduced(&self) -> Result<MBetaReduced<f64>> {
        MBetaReduced::new(
            self.nu,
            Matrix::from_row_major(self.m, self.m, self.a.clone())?,
        )
    }

    /// Full parametrisation when `γ` is present.
    pub fn full(&self) -> Result<Option<MBetaFull<f64>>> {
        self.gamma
            .as_ref()
            .map(|g| MBetaFull::new(self.m, g.clone()))
            .transpose()
    }

    pub fn n_observations(&self) -> u64 {
        self.data.as_ref().map_or(0, |d| d.n)
    }

    /// Absorbs the rows of a binary data matrix.
    pub fn update(&self, rows: &[Vec<u8>]) -> Result<Self> {
        let m = self.m;
        let base = self.prior.clone().unwrap_or(BasePrior {
            nu: self.nu,
            a: self.a.clone(),
            gamma: self.gamma.clone(),
        });
        let mut data = self.data.clone().unwrap_or_else(|| DataSummary {
            n: 0,
            u: vec![0; m * m],
            cells: base.gamma.as_ref().map(|g| vec![0; g.len()]),
        });
        let u_new: Matrix<f64> = update_matrix_from_rows(m, rows)?;
        data.n += rows.len() as u64;
        for (acc, v) in data.u.iter_mut().zip(u_new.as_slice()) {
            *acc += *v as u64;
        }
        if let Some(cells) = data.cells.as_mut() {
            let d = cell_counts(m, rows)?;
            for (acc, v) in cells.iter_mut().zip(d.counts()) {
                *acc += v;
            }
        }
        // posterior = base + cumulative integers, evaluated in one step
        let nu = base.nu + data.n as f64;
        let a = base
            .a
            .iter()
            .zip(&data.u)
            .map(|(x, u)| x + *u as f64)
            .collect();
        let gamma = match (&base.gamma, &data.cells) {
            (Some(g), Some(c)) => Some(g.iter().zip(c).map(|(x, d)| x + *d as f64).collect()),
            _ => None,
        };
        Ok(Self {
            m,
            nu,
            a,
            gamma,
            fit_residual: self.fit_residual,
            fit_exact: self.fit_exact,
            prior: Some(base),
            data: Some(data),
        })
    }

    /// Cell counts absorbed so far, when tracked.
    pub fn cell_counts(&self) -> Result<Option<CellCounts>> {
        match self.data.as_ref().and_then(|d| d.cells.clone()) {
            Some(c) => Ok(Some(CellCounts::from_counts(self.m, c)?)),
            None => Ok(None),
        }
    }
}

/// Admissibility report written next to fitted priors.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AdmissibilityReport {
    /// `feasible`, `infeasible`, or `bounds_ok` when only the pairwise
    /// bounds were checked.
    pub status: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub witness: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub certificate: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub violated_bounds: Option<Vec<ViolatedBound>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ViolatedBound {
    pub i: usize,
    pub j: usize,
    pub value: f64,
    pub lower: f64,
    pub upper: f64,
}

impl AdmissibilityReport {
    pub fn is_ok(&self) -> bool {
        self.status != "infeasible"
    }

    pub fn from_frechet(red: &MBetaReduced<f64>, fb: &FrechetReport<f64>) -> Self {
        let violated: Vec<ViolatedBound> = fb
            .violations
            .iter()
            .map(|&(i, j)| ViolatedBound {
                i: i + 1,
                j: j + 1,
                value: red.a()[(i, j)],
                lower: fb.lower[(i, j)],
                upper: fb.upper[(i, j)],
            })
            .collect();
        Self {
            status: if fb.ok { "bounds_ok" } else { "infeasible" }.into(),
            witness: None,
            certificate: None,
            violated_bounds: (!violated.is_empty()).then_some(violated),
        }
    }

    pub fn from_lp(
        res: &FeasibilityResult<f64>,
        fb: Option<&FrechetReport<f64>>,
        red: &MBetaReduced<f64>,
    ) -> Self {
        let violated = fb
            .map(|f| Self::from_frechet(red, f).violated_bounds)
            .unwrap_or_default();
        Self {
            status: match res.status {
                FeasibilityStatus::Feasible => "feasible",
                FeasibilityStatus::Infeasible => "infeasible",
            }
            .into(),
            witness: res.witness.clone(),
            certificate: res.certificate.clone(),
            violated_bounds: violated,
        }
    }
}

/// Reads a headered 0/1 CSV. An empty input yields no rows. The header, if
/// present, fixes `m`; `expected_m` is checked when given.
pub fn read_data_csv<R: Read>(input: R, expected_m: Option<usize>) -> Result<Vec<Vec<u8>>> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .from_reader(input);
    let header_len = rdr.headers().map_err(format_err)?.len();
    if let Some(m) = expected_m {
        if header_len != 0 && header_len != m {
            return Err(Error::LengthMismatch {
                expected: m,
                found: header_len,
            });
        }
    }
    let mut rows = Vec::new();
    for (i, rec) in rdr.records().enumerate() {
        let rec = rec.map_err(format_err)?;
        let row = rec
            .iter()
            .enumerate()
            .map(|(col, v)| match v {
                "0" => Ok(0u8),
                "1" => Ok(1u8),
                _ => Err(Error::NonBinaryEntry { row: i, col }),
            })
            .collect::<Result<Vec<u8>>>()?;
        if row.len() != header_len {
            return Err(Error::LengthMismatch {
                expected: header_len,
                found: row.len(),
            });
        }
        rows.push(row);
    }
    Ok(rows)
}

/// Writes rows of a binary data matrix with header `x1..xm`.
pub fn write_data_csv<W: Write>(m: usize, rows: &[Vec<u8>], out: W) -> Result<()> {
    let mut wtr = csv::Writer::from_writer(out);
    wtr.write_record((1..=m).map(|j| format!("x{j}")))
        .map_err(format_err)?;
    for row in rows {
        wtr.write_record(row.iter().map(|b| b.to_string()))
            .map_err(format_err)?;
    }
    wtr.flush().map_err(format_err)
}

/// `cell_index, outcome_bits, count` with 1-based cell indices and the
/// first coordinate as the leading bit.
pub fn write_cell_counts_csv<W: Write>(d: &CellCounts, out: W) -> Result<()> {
    let mut wtr = csv::Writer::from_writer(out);
    wtr.write_record(["cell_index", "outcome_bits", "count"])
        .map_err(format_err)?;
    for (k, c) in d.counts().iter().enumerate() {
        let bits: String = decode_outcome(k + 1, d.m())?
            .iter()
            .map(|b| char::from(b'0' + b))
            .collect();
        wtr.write_record([(k + 1).to_string(), bits, c.to_string()])
            .map_err(format_err)?;
    }
    wtr.flush().map_err(format_err)
}

/// Data rows reproducing given cell counts, in cell order.
pub fn rows_from_cell_counts(d: &CellCounts) -> Result<Vec<Vec<u8>>> {
    let mut rows = Vec::new();
    for (k, &c) in d.counts().iter().enumerate() {
        let x = decode_outcome(k + 1, d.m())?;
        rows.extend(std::iter::repeat_n(x, c as usize));
    }
    Ok(rows)
}

fn opt<T: ToString>(v: Option<T>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

pub const REGION_CSV_HEADER: [&str; 9] = [
    "label",
    "lower",
    "upper",
    "method",
    "level",
    "c_alpha",
    "alpha_tilde",
    "n_r",
    "contains_unit_cube",
];

/// One row per coordinate or contrast. Floats use the shortest round-trip
/// representation; absent values are empty fields.
pub fn write_region_csv<W: Write>(cr: &CredibleRegion, out: W) -> Result<()> {
    let mut wtr = csv::Writer::from_writer(out);
    wtr.write_record(REGION_CSV_HEADER).map_err(format_err)?;
    for j in 0..cr.dim() {
        wtr.write_record([
            cr.labels[j].clone(),
            cr.lower[j].to_string(),
            cr.upper[j].to_string(),
            cr.method.to_string(),
            cr.level.to_string(),
            opt(cr.c_alpha),
            opt(cr.alpha_tilde),
            opt(cr.n_r),
            cr.contains_unit_cube.to_string(),
        ])
        .map_err(format_err)?;
    }
    wtr.flush().map_err(format_err)
}

/// Basis-aware check that a document's `γ` and `(ν, A)` agree.
pub fn consistent(doc: &DistributionDoc, tol: f64) -> Result<bool> {
    let Some(full) = doc.full()? else {
        return Ok(true);
    };
    let basis = HBasis::new(doc.m)?;
    let red = full.moment_matrix(&basis)?;
    let scale = 1.0 + doc.nu.abs();
    Ok((red.nu() - doc.nu).abs() <= tol * scale
        && red
            .a()
            .as_slice()
            .iter()
            .zip(&doc.a)
            .all(|(x, y)| (x - y).abs() <= tol * scale))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::regions::{raw_labels, Method};

    #[test]
    fn prior_spec_forms() {
        let g = PriorSpec::from_json(r#"{"gamma": [1, 1, 1, 1]}"#).unwrap();
        assert_eq!(g.m().unwrap(), 2);
        let s = PriorSpec::from_json(
            r#"{"nu": 20, "mu": [0.8, 0.775, 0.75], "R": {"type": "equicorrelation", "rho": 0.5}}"#,
        )
        .unwrap();
        assert_eq!(s.m().unwrap(), 3);
        let v = PriorSpec::from_json(r#"{"vague": true, "m": 3}"#).unwrap();
        assert_eq!(v, PriorSpec::Vague(VagueSpec { vague: true, m: 3 }));
        assert!(PriorSpec::from_json(r#"{"gamma": [1, 1], "vague": true, "m": 1}"#).is_err());
        assert!(PriorSpec::from_json(r#"{"vague": false, "m": 3}"#).is_err());
        assert!(PriorSpec::from_json(r#"{"gamma": [1, 1, 1]}"#)
            .unwrap()
            .m()
            .is_err());
    }

    #[test]
    fn data_csv_round_trip_and_errors() {
        let rows = vec![vec![1, 0, 1], vec![0, 0, 0]];
        let mut buf = Vec::new();
        write_data_csv(3, &rows, &mut buf).unwrap();
        assert_eq!(read_data_csv(buf.as_slice(), Some(3)).unwrap(), rows);
        assert!(read_data_csv(buf.as_slice(), Some(2)).is_err());
        assert!(read_data_csv("a,b\n1,2\n".as_bytes(), None).is_err());
        assert!(read_data_csv("".as_bytes(), Some(3)).unwrap().is_empty());
        assert!(read_data_csv("a,b,c\n".as_bytes(), Some(3))
            .unwrap()
            .is_empty());
    }

    fn prior_doc() -> DistributionDoc {
        let full = MBetaFull::new(2, vec![0.3, 0.7, 1.1, 2.9]).unwrap();
        let red = full.moment_matrix(&HBasis::new(2).unwrap()).unwrap();
        DistributionDoc::from_prior(&red, Some(&full))
    }

    #[test]
    fn sequential_updates_are_bitwise_additive() {
        let a = vec![vec![1, 0], vec![1, 1], vec![0, 1]];
        let b = vec![vec![0, 0], vec![1, 1]];
        let doc = prior_doc();
        let two = doc.update(&a).unwrap().update(&b).unwrap();
        let one = doc.update(&[a, b].concat()).unwrap();
        assert_eq!(two.to_json().unwrap(), one.to_json().unwrap());
        assert_eq!(two.n_observations(), 5);
        assert!(consistent(&two, 1e-12).unwrap());
        let back = DistributionDoc::from_json(&two.to_json().unwrap()).unwrap();
        assert_eq!(back, two);
    }

    #[test]
    fn empty_update_keeps_parameters() {
        let doc = prior_doc();
        let up = doc.update(&[]).unwrap();
        assert_eq!((up.nu, &up.a, &up.gamma), (doc.nu, &doc.a, &doc.gamma));
    }

    #[test]
    fn cell_counts_csv_layout() {
        let d = CellCounts::from_counts(2, vec![3, 0, 1, 2]).unwrap();
        let mut buf = Vec::new();
        write_cell_counts_csv(&d, &mut buf).unwrap();
        assert_eq!(
            String::from_utf8(buf).unwrap(),
            "cell_index,outcome_bits,count\n1,00,3\n2,01,0\n3,10,1\n4,11,2\n"
        );
        let rows = rows_from_cell_counts(&d).unwrap();
        assert_eq!(cell_counts(2, &rows).unwrap(), d);
    }

    #[test]
    fn region_csv_layout() {
        let cr = CredibleRegion {
            method: Method::Copula,
            level: 0.95,
            labels: raw_labels(1),
            lower: vec![0.25],
            upper: vec![0.75],
            c_alpha: Some(1.96),
            alpha_tilde: Some(0.05),
            n_r: None,
            contains_unit_cube: true,
        };
        let mut buf = Vec::new();
        write_region_csv(&cr, &mut buf).unwrap();
        assert_eq!(
            String::from_utf8(buf).unwrap(),
            "label,lower,upper,method,level,c_alpha,alpha_tilde,n_r,contains_unit_cube\n\
             theta1,0.25,0.75,copula,0.95,1.96,0.05,,true\n"
        );
    }
}
