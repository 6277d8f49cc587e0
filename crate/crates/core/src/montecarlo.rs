//! Repeated noisy trials at a fixed geometry, their empirical summary, and
//! the finite-difference audit of the analytic sensitivities.

use nalgebra::DMatrix;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::edm::{self, EdmError, EigenOrdering};
use crate::geometry::{derive_seed, sample_pseudoranges, true_ranges, FaultTag, NoiseModel, PseudorangeSample, ScenarioGeometry};
use crate::highprec::{self, Dd};
use crate::perturbation::{
    self, PerturbationError, PredictionConfig, SensitivityTable, StatisticDistribution,
};
use crate::stats::{self, Histogram, Moments};

/// Allowed range for the finite-difference step, meters.
pub const FD_STEP_RANGE: (f64, f64) = (1e-6, 1.0);

#[derive(Debug, Error, Clone, PartialEq)]
pub enum MonteCarloError {
    #[error("n_trials must be at least 1")]
    NoTrials,
    #[error("trial {index}: {source}")]
    Trial { index: u64, source: EdmError },
    #[error("need at least 2 records to summarize, got {0}")]
    TooFewRecords(usize),
    #[error("finite-difference step {0} m outside [1e-6, 1]")]
    BadStep(f64),
    #[error("fault satellite index {index} outside 1..={m}")]
    FaultIndex { index: usize, m: usize },
    #[error(transparent)]
    Perturbation(#[from] PerturbationError),
    #[error(transparent)]
    Edm(#[from] EdmError),
}

/// Monte Carlo run parameters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrialConfig {
    pub n_trials: u64,
    pub master_seed: u64,
    pub ordering: EigenOrdering,
    /// Flag trials whose `q` exceeds this value.
    pub threshold: Option<f64>,
    /// Fault added to every trial's pseudoranges.
    pub fault: Option<FaultTag>,
}

impl TrialConfig {
    pub fn new(n_trials: u64, master_seed: u64) -> Self {
        Self {
            n_trials,
            master_seed,
            ordering: EigenOrdering::default(),
            threshold: None,
            fault: None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrialRecord {
    pub trial_index: u64,
    /// `q` under the configured ordering.
    pub q: f64,
    /// `q` under the other ordering.
    pub q_alternate: f64,
    /// First five eigenvalues under the configured ordering.
    pub lambda: [f64; 5],
    pub exceeded_threshold: Option<bool>,
}

/// Adds `fault_bias` to the pseudorange of satellite `sat_index` (1-based).
pub fn inject_fault(
    sample: &PseudorangeSample,
    sat_index: usize,
    fault_bias: f64,
) -> Result<PseudorangeSample, MonteCarloError> {
    let m = sample.rho.len();
    if sat_index == 0 || sat_index > m {
        return Err(MonteCarloError::FaultIndex { index: sat_index, m });
    }
    let mut out = sample.clone();
    out.rho[sat_index - 1] += fault_bias;
    out.fault = Some(FaultTag {
        sat_index,
        fault_bias,
    });
    Ok(out)
}

/// Runs trial `t` with noise seeded by `(master_seed, t)`.
fn run_one(
    edm_sats: &edm::SquaredDistanceMatrix,
    d: &[f64],
    nm: &NoiseModel,
    cfg: &TrialConfig,
    t: u64,
) -> Result<TrialRecord, MonteCarloError> {
    let trial_err = |source| MonteCarloError::Trial { index: t, source };
    let mut sample = sample_pseudoranges(d, nm, derive_seed(cfg.master_seed, t));
    if let Some(f) = cfg.fault {
        sample = inject_fault(&sample, f.sat_index, f.fault_bias)?;
    }
    let gc = edm::centered_gram(edm_sats, &sample.rho).map_err(trial_err)?;
    let values = gc.symmetric_eigenvalues();
    let values = values.as_slice();
    let pick = |ordering: EigenOrdering| -> Vec<f64> {
        ordering.argsort(values).into_iter().map(|k| values[k]).collect()
    };
    let primary = pick(cfg.ordering);
    let q = edm::statistic_from_eigenvalues(&primary).map_err(trial_err)?;
    let q_alternate = edm::statistic_from_eigenvalues(&pick(cfg.ordering.other())).map_err(trial_err)?;
    let mut lambda = [0.0; 5];
    lambda.copy_from_slice(&primary[..5]);
    Ok(TrialRecord {
        trial_index: t,
        q,
        q_alternate,
        lambda,
        exceeded_threshold: cfg.threshold.map(|th| q > th),
    })
}

/// Runs `cfg.n_trials` independent trials in parallel. Results are in
/// trial order and do not depend on scheduling.
pub fn run_trials(
    g: &ScenarioGeometry,
    nm: &NoiseModel,
    cfg: &TrialConfig,
) -> Result<Vec<TrialRecord>, MonteCarloError> {
    if cfg.n_trials == 0 {
        return Err(MonteCarloError::NoTrials);
    }
    nm.validate().map_err(PerturbationError::from)?;
    let edm_sats = edm::satellite_edm(&g.satellite_matrix());
    let d = true_ranges(g);
    let results: Vec<Result<TrialRecord, MonteCarloError>> = (0..cfg.n_trials)
        .into_par_iter()
        .map(|t| run_one(&edm_sats, &d, nm, cfg, t))
        .collect();
    // first failure in trial order, not completion order
    results.into_iter().collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SampleStats {
    pub mean: f64,
    pub std: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EigenStats {
    pub index: usize,
    pub mean: f64,
    pub variance: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KsResult {
    pub statistic: f64,
    pub critical_5pct: f64,
    pub critical_1pct: f64,
    pub pass_5pct: bool,
    pub pass_1pct: bool,
    /// Sample or reference has zero spread; the statistic is not meaningful.
    pub degenerate: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AlternateOrdering {
    pub ordering: EigenOrdering,
    pub q_mean: f64,
    pub q_std: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimulationSummary {
    pub n_trials: usize,
    pub ordering: EigenOrdering,
    pub q: SampleStats,
    pub q_alternate: AlternateOrdering,
    pub eigenvalues: Vec<EigenStats>,
    pub histogram: Histogram,
    pub predicted: Option<SampleStats>,
    pub ks: Option<KsResult>,
    pub threshold: Option<f64>,
    pub exceedances: Option<usize>,
    pub false_alarm_rate: Option<f64>,
    /// Labels of the rows/columns of `correlation`.
    pub correlation_labels: Vec<String>,
    pub correlation: Vec<Vec<f64>>,
}

pub fn summarize(
    records: &[TrialRecord],
    dist: Option<&StatisticDistribution>,
    threshold: Option<f64>,
    ordering: EigenOrdering,
) -> Result<SimulationSummary, MonteCarloError> {
    if records.len() < 2 {
        return Err(MonteCarloError::TooFewRecords(records.len()));
    }
    let qs: Vec<f64> = records.iter().map(|r| r.q).collect();
    let qm: Moments = qs.iter().copied().collect();
    let qa: Moments = records.iter().map(|r| r.q_alternate).collect();

    let eigenvalues = (0..5)
        .map(|k| {
            let m: Moments = records.iter().map(|r| r.lambda[k]).collect();
            EigenStats {
                index: k + 1,
                mean: m.mean(),
                variance: m.variance(),
            }
        })
        .collect();

    let n = records.len();
    let ks = dist.map(|d| {
        let statistic = stats::ks_statistic_normal(&qs, d.mu_q, d.sigma_q);
        let critical_5pct = stats::ks_critical(stats::KS_COEFF_5PCT, n);
        let critical_1pct = stats::ks_critical(stats::KS_COEFF_1PCT, n);
        KsResult {
            statistic,
            critical_5pct,
            critical_1pct,
            pass_5pct: statistic <= critical_5pct,
            pass_1pct: statistic <= critical_1pct,
            degenerate: d.sigma_q == 0.0 || qm.std() == 0.0,
        }
    });

    let exceedances = threshold.map(|th| qs.iter().filter(|&&q| q > th).count());
    let col = |f: fn(&TrialRecord) -> f64| records.iter().map(f).collect::<Vec<f64>>();
    let correlation = stats::correlation_matrix(&[
        col(|r| r.lambda[0]),
        col(|r| r.lambda[3]),
        col(|r| r.lambda[4]),
        col(|r| r.lambda[3] + r.lambda[4]),
    ]);

    Ok(SimulationSummary {
        n_trials: n,
        ordering,
        q: SampleStats {
            mean: qm.mean(),
            std: qm.std(),
        },
        q_alternate: AlternateOrdering {
            ordering: ordering.other(),
            q_mean: qa.mean(),
            q_std: qa.std(),
        },
        eigenvalues,
        histogram: Histogram::freedman_diaconis(&qs),
        predicted: dist.map(|d| SampleStats {
            mean: d.mu_q,
            std: d.sigma_q,
        }),
        ks,
        threshold,
        exceedances,
        false_alarm_rate: exceedances.map(|e| e as f64 / n as f64),
        correlation_labels: ["lambda1", "lambda4", "lambda5", "lambda4+lambda5"]
            .iter()
            .map(|s| s.to_string())
            .collect(),
        correlation,
    })
}

/// Histogram bins with the predicted Gaussian density at each bin centre.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OverlayRow {
    pub bin_left: f64,
    pub bin_right: f64,
    pub count: u64,
    pub predicted_density: f64,
}

pub fn histogram_overlay(h: &Histogram, dist: Option<&StatisticDistribution>) -> Vec<OverlayRow> {
    h.counts
        .iter()
        .enumerate()
        .map(|(k, &count)| {
            let (l, r) = (h.edges[k], h.edges[k + 1]);
            OverlayRow {
                bin_left: l,
                bin_right: r,
                count,
                predicted_density: dist.map_or(f64::NAN, |d| stats::normal_pdf(0.5 * (l + r), d.mu_q, d.sigma_q)),
            }
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FdAuditReport {
    pub h: f64,
    /// `max |s - fd| / max(|s|, 1)` over tracked eigenvalues and satellites.
    pub max_rel_error: f64,
    /// 1-based eigenvalue index and satellite index of the worst entry.
    pub worst: (usize, usize),
    pub analytic: DMatrix<f64>,
    pub finite_difference: DMatrix<f64>,
}

/// Compares a sensitivity table against finite differences. `fd(j)` must
/// return, for satellite `j` (0-based), the central difference of each
/// tracked eigenvalue in table row order.
pub fn audit_against<F>(table: &SensitivityTable, h: f64, fd: F) -> FdAuditReport
where
    F: Fn(usize) -> Vec<f64> + Sync,
{
    let (rows, m) = table.s.shape();
    let cols: Vec<Vec<f64>> = (0..m).into_par_iter().map(&fd).collect();
    let finite_difference = DMatrix::from_fn(rows, m, |i, j| cols[j][i]);
    let mut max_rel_error = 0.0;
    let mut worst = (table.indices.first().copied().unwrap_or(0), 1);
    for i in 0..rows {
        for j in 0..m {
            let s = table.s[(i, j)];
            let e = (s - finite_difference[(i, j)]).abs() / s.abs().max(1.0);
            if e > max_rel_error {
                max_rel_error = e;
                worst = (table.indices[i], j + 1);
            }
        }
    }
    FdAuditReport {
        h,
        max_rel_error,
        worst,
        analytic: table.s.clone(),
        finite_difference,
    }
}

/// Checks every analytic sensitivity of the nominal scenario against
/// central differences `(lambda_i(v_j = h) - lambda_i(v_j = -h)) / 2h`
/// evaluated in double-double arithmetic.
pub fn finite_difference_audit(
    g: &ScenarioGeometry,
    nm: &NoiseModel,
    h: f64,
    cfg: &PredictionConfig,
) -> Result<FdAuditReport, MonteCarloError> {
    if !(FD_STEP_RANGE.0..=FD_STEP_RANGE.1).contains(&h) {
        return Err(MonteCarloError::BadStep(h));
    }
    let table = perturbation::nominal_sensitivities(g, nm, cfg)?;
    let nominal = perturbation::nominal_gram(g, nm)?;
    let rho: Vec<Dd> = nominal.rho.iter().map(|&r| Dd::from(r)).collect();
    let sats = g.satellites();
    let positions: Vec<usize> = table.indices.iter().map(|i| i - 1).collect();
    let ordered = |r: &[Dd]| -> Vec<Dd> {
        let ev = highprec::centered_gram_eigenvalues(sats, r);
        let his: Vec<f64> = ev.iter().map(|x| x.hi()).collect();
        cfg.ordering.argsort(&his).into_iter().map(|k| ev[k]).collect()
    };
    let hd = Dd::from(h);
    Ok(audit_against(&table, h, |j| {
        let mut up = rho.clone();
        up[j] += hd;
        let mut dn = rho.clone();
        dn[j] -= hd;
        let (lp, lm) = (ordered(&up), ordered(&dn));
        positions
            .iter()
            .map(|&k| highprec::div(lp[k] - lm[k], Dd::from(2.0) * hd).hi())
            .collect()
    }))
}
