use std::fmt;
use std::fs::{self, File};
use std::io::{BufReader, BufWriter};
use std::path::Path;

use mvbeta::admissibility::{check_mc_with_limit, frechet_bounds, MomentTarget};
use mvbeta::formats::{
    read_data_csv, write_cell_counts_csv, write_region_csv, AdmissibilityReport, DistributionDoc,
    PriorSpec,
};
use mvbeta::regions::{
    cr_contrast, cr_copula, cr_extensive, cr_normal, ContrastMatrix, Posterior, RegionOptions,
};
use mvbeta::simharness::{run_simulation, write_sim_csv, Scenario};
use mvbeta::{
    cell_counts, derive_moment_matrix, fit_gamma, Error, HBasis, MBetaFull, MBetaReduced, Matrix,
    Method,
};
use mvbeta::{RngStream, DEFAULT_M_MAX};

/// Failure of a command. `Input` covers I/O, parsing and malformed
/// arguments; `Statistical` covers infeasible or unavailable requests.
#[derive(Debug)]
pub enum CliError {
    Input(String),
    Statistical(String),
}

impl CliError {
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Input(_) => 1,
            CliError::Statistical(_) => 2,
        }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::Input(m) | CliError::Statistical(m) => f.write_str(m),
        }
    }
}

impl From<Error> for CliError {
    fn from(e: Error) -> Self {
        match e {
            Error::InfeasibleScenario(_)
            | Error::EqualityInfeasible
            | Error::FullParametrisationRequired(_)
            | Error::InvalidCorrelation(_)
            | Error::SingularContrastCovariance { .. }
            | Error::DegenerateMarginal { .. }
            | Error::NumericalFailure(_)
            | Error::BudgetExceeded { .. } => CliError::Statistical(e.to_string()),
            _ => CliError::Input(e.to_string()),
        }
    }
}

pub fn io_err(path: &Path, e: impl fmt::Display) -> CliError {
    CliError::Input(format!("{}: {e}", path.display()))
}

pub fn read_text(path: &Path) -> Result<String, CliError> {
    fs::read_to_string(path).map_err(|e| io_err(path, e))
}

pub fn create(path: &Path) -> Result<BufWriter<File>, CliError> {
    File::create(path)
        .map(BufWriter::new)
        .map_err(|e| io_err(path, e))
}

pub fn write_text(path: &Path, text: &str) -> Result<(), CliError> {
    fs::write(path, text).map_err(|e| io_err(path, e))
}

pub fn read_dist(path: &Path) -> Result<DistributionDoc, CliError> {
    DistributionDoc::from_json(&read_text(path)?).map_err(|e| io_err(path, e))
}

fn emit_report(report: &AdmissibilityReport, path: Option<&Path>) -> Result<(), CliError> {
    let text = serde_json::to_string_pretty(report).map_err(|e| CliError::Input(e.to_string()))?;
    match path {
        Some(p) => write_text(p, &text),
        None => {
            println!("{text}");
            Ok(())
        }
    }
}

pub fn fit(
    spec_path: &Path,
    out: &Path,
    report_path: Option<&Path>,
    max_full_dim: usize,
    allow_approximate: bool,
) -> Result<(), CliError> {
    if max_full_dim > DEFAULT_M_MAX {
        return Err(CliError::Input(format!(
            "--max-full-dim may not exceed {DEFAULT_M_MAX}"
        )));
    }
    let spec = PriorSpec::from_json(&read_text(spec_path)?).map_err(|e| io_err(spec_path, e))?;
    let m = spec.m()?;
    let full_form = m <= max_full_dim;
    let (doc, report) = match &spec {
        PriorSpec::Gamma(g) => {
            let full = MBetaFull::new(m, g.gamma.clone())?;
            let red = full.moment_matrix(&HBasis::new(m)?)?;
            let report = AdmissibilityReport {
                status: "feasible".into(),
                witness: Some(full.gamma().to_vec()),
                certificate: None,
                violated_bounds: None,
            };
            (DistributionDoc::from_prior(&red, Some(&full)), report)
        }
        PriorSpec::Vague(v) => {
            let red = MBetaReduced::vague(v.m)?;
            let full = if full_form {
                Some(MBetaFull::vague(v.m)?)
            } else {
                None
            };
            let report = AdmissibilityReport::from_frechet(&red, &frechet_bounds(&red));
            (DistributionDoc::from_prior(&red, full.as_ref()), report)
        }
        PriorSpec::Moments(s) => {
            let corr = s.r.to_matrix(m)?;
            let target = MomentTarget::new(s.nu, s.mu.clone(), corr)?;
            let red = derive_moment_matrix(&target)?;
            let fb = frechet_bounds(&red);
            if !full_form {
                let report = AdmissibilityReport::from_frechet(&red, &fb);
                (DistributionDoc::from_prior(&red, None), report)
            } else {
                let basis = HBasis::new(m)?;
                let lp = check_mc_with_limit(&red, &basis, max_full_dim)?;
                let report = AdmissibilityReport::from_lp(&lp, Some(&fb), &red);
                if !lp.is_feasible() && !allow_approximate {
                    emit_report(&report, report_path)?;
                    return Err(CliError::Statistical(
                        "the requested moments are not attainable by any prior of this family"
                            .into(),
                    ));
                }
                let fitted = fit_gamma(&red, &basis)?;
                let full = MBetaFull::new(m, fitted.gamma.clone())?;
                let mut doc = if fitted.exact {
                    DistributionDoc::from_prior(&red, Some(&full))
                } else {
                    let attained = full.moment_matrix(&basis)?;
                    DistributionDoc::from_prior(&attained, Some(&full))
                };
                doc.fit_residual = Some(fitted.residual);
                doc.fit_exact = Some(fitted.exact);
                (doc, report)
            }
        }
    };
    if !report.is_ok() && !allow_approximate {
        emit_report(&report, report_path)?;
        return Err(CliError::Statistical(
            "the requested moments violate the pairwise bounds".into(),
        ));
    }
    write_text(out, &doc.to_json()?)?;
    emit_report(&report, report_path)
}

pub fn update(
    dist: &Path,
    data: &Path,
    out: &Path,
    counts_out: Option<&Path>,
) -> Result<(), CliError> {
    let doc = read_dist(dist)?;
    let file = File::open(data).map_err(|e| io_err(data, e))?;
    let rows = read_data_csv(BufReader::new(file), Some(doc.m)).map_err(|e| io_err(data, e))?;
    let posterior = doc.update(&rows)?;
    if let Some(path) = counts_out {
        write_cell_counts_csv(&cell_counts(doc.m, &rows)?, create(path)?)?;
    }
    write_text(out, &posterior.to_json()?)?;
    eprintln!(
        "absorbed {} observations (total {})",
        rows.len(),
        posterior.n_observations()
    );
    Ok(())
}

fn parse_contrast(spec: &str, m: usize) -> Result<Option<ContrastMatrix>, CliError> {
    match spec {
        "identity" => Ok(None),
        "all-vs-one" => Ok(Some(ContrastMatrix::all_vs_one(m)?)),
        path => {
            let path = Path::new(path);
            let mut rdr = csv::Reader::from_path(path).map_err(|e| io_err(path, e))?;
            let mut labels = Vec::new();
            let mut coef = Vec::new();
            for rec in rdr.records() {
                let rec = rec.map_err(|e| io_err(path, e))?;
                if rec.len() != m + 1 {
                    return Err(io_err(
                        path,
                        format!("expected a label and {m} coefficients per row"),
                    ));
                }
                labels.push(rec[0].to_string());
                let row = rec
                    .iter()
                    .skip(1)
                    .map(|v| v.trim().parse::<f64>().map_err(|e| io_err(path, e)))
                    .collect::<Result<Vec<f64>, _>>()?;
                coef.push(row);
            }
            Ok(Some(ContrastMatrix::new(
                Matrix::from_rows(&coef)?,
                labels,
            )?))
        }
    }
}

pub fn region(
    dist: &Path,
    method: Method,
    level: f64,
    contrast: &str,
    seed: u64,
    n_r: usize,
    out: &Path,
) -> Result<(), CliError> {
    if !(level > 0.0 && level < 1.0) {
        return Err(CliError::Input(format!(
            "--level must lie in (0, 1), got {level}"
        )));
    }
    let alpha = 1.0 - level;
    let doc = read_dist(dist)?;
    let red = doc.reduced()?;
    let full = doc.full()?;
    let basis = match &full {
        Some(_) => Some(HBasis::new(doc.m)?),
        None => None,
    };
    let opts = RegionOptions {
        n_r,
        ..RegionOptions::default()
    };
    let mut rng = RngStream::new(seed, 0);
    let needs_gamma = |what: &str| {
        CliError::Statistical(format!(
            "the {method} method {what} needs the full parameter vector gamma, which this distribution does not carry"
        ))
    };
    let cr = match parse_contrast(contrast, doc.m)? {
        None => match method {
            Method::Approximate => cr_normal(&red, alpha, &mut rng, &opts)?,
            Method::Copula => cr_copula(&red, alpha, &mut rng, &opts)?,
            Method::Extensive => {
                let (Some(f), Some(b)) = (&full, &basis) else {
                    return Err(needs_gamma(""));
                };
                cr_extensive(f, b, alpha, n_r, &mut rng)?
            }
        },
        Some(k) => {
            let input = match (&full, &basis) {
                (Some(f), Some(b)) => Posterior::Full(f, b),
                _ if method == Method::Approximate => Posterior::Reduced(&red),
                _ => return Err(needs_gamma("on contrasts")),
            };
            cr_contrast(input, &k, alpha, method, &mut rng, &opts)?
        }
    };
    write_region_csv(&cr, create(out)?)?;
    Ok(())
}

pub fn simulate(path: &Path, out: &Path, paper_scale: bool) -> Result<(), CliError> {
    let text = read_text(path)?;
    let value: serde_json::Value = serde_json::from_str(&text).map_err(|e| io_err(path, e))?;
    let scenarios: Vec<Scenario> = if value.is_array() {
        serde_json::from_value(value)
    } else {
        serde_json::from_value(value).map(|s| vec![s])
    }
    .map_err(|e| io_err(path, e))?;
    let mut results = Vec::with_capacity(scenarios.len());
    for (i, mut scn) in scenarios.into_iter().enumerate() {
        if paper_scale {
            scn = scn.paper_scale();
        }
        if scn.id.is_empty() {
            scn.id = format!("scenario{}", i + 1);
        }
        let res = run_simulation(&scn)?;
        for mr in &res.methods {
            if let Some(e) = &mr.first_error {
                eprintln!(
                    "{}: {} failed in {} runs (first: {e})",
                    scn.id, mr.method, mr.failures
                );
            }
        }
        results.push(res);
    }
    write_sim_csv(&results, create(out)?)?;
    Ok(())
}
