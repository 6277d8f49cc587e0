use std::fmt;

use edm_raim::edm::{self, centering_matrix, NONZERO_REL_TOL};
use edm_raim::geometry::true_ranges;
use edm_raim::montecarlo::{finite_difference_audit, histogram_overlay, run_trials, summarize, TrialConfig};
use edm_raim::perturbation::{self, detection_threshold, nominal_gram, predict_q_distribution};
use edm_raim::{SimulationSummary, StatisticDistribution, Thresholds};
use serde::Serialize;

use crate::config::RunConfig;
use crate::output;
use crate::CliError;

pub const TRIALS_FILE: &str = "trials.csv";
pub const SUMMARY_FILE: &str = "summary.json";
pub const HISTOGRAM_FILE: &str = "histogram.csv";
pub const PREDICTION_FILE: &str = "prediction.json";

/// Largest acceptable finite-difference discrepancy.
pub const FD_TOLERANCE: f64 = 1e-4;
/// Centering residuals, relative to the largest Gram entry.
pub const CENTERING_TOLERANCE: f64 = 1e-12;

#[derive(Serialize)]
struct SummaryDoc<'a> {
    summary: &'a SimulationSummary,
    prediction: Option<&'a StatisticDistribution>,
    thresholds: Option<&'a Thresholds>,
    #[serde(skip_serializing_if = "Option::is_none")]
    prediction_error: Option<String>,
}

#[derive(Serialize)]
struct PredictionDoc<'a> {
    #[serde(flatten)]
    distribution: &'a StatisticDistribution,
    thresholds: &'a Thresholds,
}

/// Runs the Monte Carlo experiment and writes its three output files.
/// Returns the one-line verdict.
pub fn simulate(cfg: &RunConfig) -> Result<String, CliError> {
    cfg.validate()?;
    let g = cfg.geometry()?;
    let nm = cfg.noise_model()?;
    let prediction = predict_q_distribution(&g, &nm, &cfg.prediction_config());
    let thresholds = match &prediction {
        Ok(d) => Some(detection_threshold(d, cfg.p_fa).map_err(|e| CliError::Numerical(e.to_string()))?),
        Err(_) => None,
    };
    let dist = prediction.as_ref().ok();

    let trial_cfg = TrialConfig {
        ordering: cfg.ordering,
        threshold: thresholds.map(|t| t.one_sided),
        ..TrialConfig::new(cfg.n_trials, cfg.seed)
    };
    let records = run_trials(&g, &nm, &trial_cfg).map_err(|e| CliError::Numerical(e.to_string()))?;
    let summary = summarize(&records, dist, trial_cfg.threshold, cfg.ordering)
        .map_err(|e| CliError::Numerical(e.to_string()))?;

    let provenance = cfg.provenance();
    output::ensure_dir(&cfg.out)?;
    output::write_trials(&cfg.out.join(TRIALS_FILE), &provenance, &records)?;
    output::write_histogram(
        &cfg.out.join(HISTOGRAM_FILE),
        &provenance,
        &histogram_overlay(&summary.histogram, dist),
    )?;
    output::write_json(
        &cfg.out.join(SUMMARY_FILE),
        &provenance,
        &SummaryDoc {
            summary: &summary,
            prediction: dist,
            thresholds: thresholds.as_ref(),
            prediction_error: prediction.as_ref().err().map(|e| e.to_string()),
        },
    )?;
    Ok(verdict(&summary, prediction.as_ref().err()))
}

fn verdict(s: &SimulationSummary, err: Option<&perturbation::PerturbationError>) -> String {
    let empirical = format!("empirical q mean {:.4e} std {:.4e}", s.q.mean, s.q.std);
    let (Some(p), Some(ks)) = (s.predicted, s.ks) else {
        let why = err.map_or_else(String::new, |e| format!(" ({e})"));
        return format!("{empirical}; no prediction{why}");
    };
    let rel = |a: f64, b: f64| 100.0 * (a - b) / b;
    let fa = match (s.exceedances, s.false_alarm_rate) {
        (Some(k), Some(r)) => format!("; false alarms {k}/{} ({:.2}%)", s.n_trials, 100.0 * r),
        _ => String::new(),
    };
    format!(
        "predicted q mean {:.4e} std {:.4e}; {empirical} ({:+.2}%, {:+.2}%); KS D {:.4} vs 1% critical {:.4}: {}{fa}",
        p.mean,
        p.std,
        rel(s.q.mean, p.mean),
        rel(s.q.std, p.std),
        ks.statistic,
        ks.critical_1pct,
        if ks.pass_1pct { "pass" } else { "FAIL" },
    )
}

/// Writes the predicted distribution and thresholds. Returns a one-line
/// description.
pub fn predict(cfg: &RunConfig) -> Result<String, CliError> {
    cfg.validate()?;
    let g = cfg.geometry()?;
    let nm = cfg.noise_model()?;
    let dist = predict_q_distribution(&g, &nm, &cfg.prediction_config()).map_err(|e| CliError::Numerical(e.to_string()))?;
    let th = detection_threshold(&dist, cfg.p_fa).map_err(|e| CliError::Numerical(e.to_string()))?;
    output::ensure_dir(&cfg.out)?;
    output::write_json(
        &cfg.out.join(PREDICTION_FILE),
        &cfg.provenance(),
        &PredictionDoc {
            distribution: &dist,
            thresholds: &th,
        },
    )?;
    let warn = if dist.validity_warnings.is_empty() {
        String::new()
    } else {
        format!("; {} validity warning(s)", dist.validity_warnings.len())
    };
    Ok(format!(
        "mu_q {:.6e} sigma_q {:.6e}; one-sided threshold {:.6e} at p_fa {}{warn}",
        dist.mu_q, dist.sigma_q, th.one_sided, cfg.p_fa
    ))
}

#[derive(Debug, Clone, PartialEq)]
pub struct AuditCheck {
    pub name: &'static str,
    pub passed: bool,
    pub detail: String,
}

impl fmt::Display for AuditCheck {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} {}: {}", if self.passed { "PASS" } else { "FAIL" }, self.name, self.detail)
    }
}

/// Runs every numerical self-check on the configured scenario. Geometry
/// and config problems are errors; failed checks are reported, not raised.
pub fn audit(cfg: &RunConfig) -> Result<Vec<AuditCheck>, CliError> {
    cfg.validate()?;
    let g = cfg.geometry()?;
    let nm = cfg.noise_model()?;
    let mut checks = Vec::new();

    checks.push(match finite_difference_audit(&g, &nm, cfg.fd_step, &cfg.prediction_config()) {
        Ok(r) => AuditCheck {
            name: "finite-difference",
            passed: r.max_rel_error <= FD_TOLERANCE,
            detail: format!(
                "max relative error {:.3e} at lambda{} / satellite {} (h = {} m, tolerance {FD_TOLERANCE:e})",
                r.max_rel_error, r.worst.0, r.worst.1, r.h
            ),
        },
        Err(e) => AuditCheck {
            name: "finite-difference",
            passed: false,
            detail: e.to_string(),
        },
    });

    let nominal = nominal_gram(&g, &nm).map_err(|e| CliError::Numerical(e.to_string()))?;
    let n = nominal.gram.nrows();
    let scale = nominal.gram.amax();
    let row_sums = nominal.gram.column_sum().amax() / scale;
    let j = centering_matrix(n);
    let idempotence = (&j * &j - &j).amax();
    checks.push(AuditCheck {
        name: "centering",
        passed: row_sums <= CENTERING_TOLERANCE && idempotence <= CENTERING_TOLERANCE,
        detail: format!(
            "max |G_c 1| / max |G_c| = {row_sums:.3e}, max |J² - J| = {idempotence:.3e} (tolerance {CENTERING_TOLERANCE:e})"
        ),
    });

    let sat_edm = edm::satellite_edm(&g.satellite_matrix());
    let augmented = edm::augment_edm(&sat_edm, &nominal.rho).map_err(|e| CliError::Numerical(e.to_string()))?;
    checks.push(AuditCheck {
        name: "edm",
        passed: augmented.is_valid(),
        detail: format!("symmetric, zero diagonal, non-negative; asymmetry {:.3e}", augmented.asymmetry()),
    });

    let count = |rho: &[f64]| -> Result<(usize, Vec<f64>), CliError> {
        let gc = edm::centered_gram(&sat_edm, rho).map_err(|e| CliError::Numerical(e.to_string()))?;
        let ev = edm::ordered_eigenvalues(&gc, edm::EigenOrdering::Magnitude).map_err(|e| CliError::Numerical(e.to_string()))?;
        Ok((edm::count_nonzero(&ev, NONZERO_REL_TOL), ev))
    };
    let (k, ev) = count(&true_ranges(&g))?;
    checks.push(AuditCheck {
        name: "rank-collapse",
        passed: k == 3,
        detail: format!(
            "exact ranges: {k} eigenvalues above {NONZERO_REL_TOL:e}·|lambda1| (expected 3); |lambda4|/|lambda1| = {:.3e}",
            (ev[3] / ev[0]).abs()
        ),
    });
    if nm.effective_bias() != 0.0 {
        let (k, ev) = count(&nominal.rho)?;
        checks.push(AuditCheck {
            name: "bias-activation",
            passed: k == 5,
            detail: format!(
                "biased ranges: {k} eigenvalues above {NONZERO_REL_TOL:e}·|lambda1| (expected 5); |lambda5|/|lambda1| = {:.3e}",
                (ev[4] / ev[0]).abs()
            ),
        });
    }
    Ok(checks)
}
