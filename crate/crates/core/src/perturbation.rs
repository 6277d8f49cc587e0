//! First-order prediction of the nominal (fault-free) distribution of the
//! tracked eigenvalues of `G_c` and of the statistic `q`.
//!
//! Writing `G_c(v) ≈ G_c + Σ_j δG_j v_j`, a simple eigenpair
//! `(lambda_i, z_i)` moves by `Σ_j s_ij v_j` with
//! `s_ij = z_iᵀ δG_j z_i / z_iᵀ z_i`, so each eigenvalue is Gaussian with
//! variance `Σ_j (s_ij sigma_v)²`. The ratio `q` is approximated by a
//! Gaussian with delta-method moments.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Normal};
use thiserror::Error;

use crate::edm::{self, EdmError, EigenOrdering, GramSpectrum};
use crate::geometry::{true_ranges, GeometryError, NoiseModel, ScenarioGeometry};

/// Tracked eigenvalues must be separated from every other eigenvalue by
/// more than `GAP_REL_TOL * |lambda1|`.
pub const GAP_REL_TOL: f64 = 1e-9;
/// Coefficient of variation of the denominator above which the Gaussian
/// ratio approximation is flagged.
pub const RATIO_CV_LIMIT: f64 = 0.1;
/// Predicted eigenvalue spread, as a fraction of its spectral gap, above
/// which first-order theory is flagged.
pub const GAP_STRAIN_LIMIT: f64 = 0.05;
/// Eigenvalues needed by `q`.
pub const STATISTIC_EIGENVALUES: [usize; 3] = [1, 4, 5];

#[derive(Debug, Error, Clone, PartialEq)]
pub enum PerturbationError {
    #[error(
        "eigenvalue lambda{index} is not simple: gap {gap:.3e} m² to lambda{neighbour} is below {tolerance:.3e} m²; \
         increase the clock bias (bias_b or bias_inflation) to pin its eigenvector"
    )]
    DegenerateEigenvalue {
        index: usize,
        neighbour: usize,
        gap: f64,
        tolerance: f64,
    },
    #[error("eigenvalue index {index} outside spectrum of length {len}")]
    IndexOutOfRange { index: usize, len: usize },
    #[error("sensitivity table has no row for lambda{0}")]
    MissingRow(usize),
    #[error("ratio denominator mean is zero")]
    ZeroDenominator,
    #[error("false-alarm probability {0} outside (0, 0.5)")]
    BadFalseAlarm(f64),
    #[error(
        "effective clock bias is zero: the eigenvectors of lambda4 and lambda5 are unstable without it; \
         set bias_b or bias_inflation"
    )]
    ZeroBias,
    #[error(transparent)]
    Geometry(#[from] GeometryError),
    #[error(transparent)]
    Edm(#[from] EdmError),
}

/// Derivatives `δG_j = ∂G_c/∂v_j` at `v = 0`, one per satellite.
#[derive(Debug, Clone, PartialEq)]
pub struct GramSensitivity {
    pub matrices: Vec<DMatrix<f64>>,
}

impl GramSensitivity {
    pub fn m(&self) -> usize {
        self.matrices.len()
    }

    pub fn zeros(m: usize) -> Self {
        Self {
            matrices: vec![DMatrix::zeros(m + 1, m + 1); m],
        }
    }
}

/// `δG_j = -½ J E_j J`, where `E_j` is zero except `(0,j) = (j,0) = 2 rho_j`.
pub fn gram_sensitivities(rho: &[f64]) -> GramSensitivity {
    let n = rho.len() + 1;
    let matrices = rho
        .iter()
        .enumerate()
        .map(|(j, &r)| {
            let mut e = DMatrix::zeros(n, n);
            e[(0, j + 1)] = 2.0 * r;
            e[(j + 1, 0)] = 2.0 * r;
            edm::double_center(&e)
        })
        .collect();
    GramSensitivity { matrices }
}

/// First-order eigenvalue sensitivities `s_ij` in m²/m.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SensitivityTable {
    /// 1-based eigenvalue indices, one per row.
    pub indices: Vec<usize>,
    /// Nominal eigenvalue for each row.
    pub nominal: Vec<f64>,
    /// Gap from each tracked eigenvalue to its nearest neighbour.
    pub gaps: Vec<f64>,
    /// Rows: tracked eigenvalues. Columns: satellites.
    pub s: DMatrix<f64>,
}

impl SensitivityTable {
    fn position(&self, index: usize) -> Result<usize, PerturbationError> {
        self.indices
            .iter()
            .position(|&i| i == index)
            .ok_or(PerturbationError::MissingRow(index))
    }

    pub fn row(&self, index: usize) -> Result<Vec<f64>, PerturbationError> {
        let k = self.position(index)?;
        Ok(self.s.row(k).iter().copied().collect())
    }

    pub fn nominal(&self, index: usize) -> Result<f64, PerturbationError> {
        Ok(self.nominal[self.position(index)?])
    }

    pub fn gap(&self, index: usize) -> Result<f64, PerturbationError> {
        Ok(self.gaps[self.position(index)?])
    }
}

/// Sensitivities of the tracked (1-based) eigenvalues of `spec` to each
/// satellite's noise. Fails if a tracked eigenvalue is not simple.
pub fn eigenvalue_sensitivities(
    spec: &GramSpectrum,
    gs: &GramSensitivity,
    tracked: &[usize],
) -> Result<SensitivityTable, PerturbationError> {
    let len = spec.len();
    let lambda1 = spec.eigenvalues.amax();
    let tolerance = GAP_REL_TOL * lambda1;
    let mut gaps = Vec::with_capacity(tracked.len());
    for &index in tracked {
        if index == 0 || index > len {
            return Err(PerturbationError::IndexOutOfRange { index, len });
        }
        let li = spec.lambda(index);
        let (neighbour, gap) = (1..=len)
            .filter(|&k| k != index)
            .map(|k| (k, (spec.lambda(k) - li).abs()))
            .min_by(|a, b| a.1.total_cmp(&b.1))
            .unwrap_or((index, f64::INFINITY));
        if gap <= tolerance {
            return Err(PerturbationError::DegenerateEigenvalue {
                index,
                neighbour,
                gap,
                tolerance,
            });
        }
        gaps.push(gap);
    }

    let mut s = DMatrix::zeros(tracked.len(), gs.m());
    for (row, &index) in tracked.iter().enumerate() {
        let z = spec.z(index);
        let norm2 = z.dot(&z);
        for (j, dg) in gs.matrices.iter().enumerate() {
            s[(row, j)] = z.dot(&(dg * &z)) / norm2;
        }
    }
    Ok(SensitivityTable {
        indices: tracked.to_vec(),
        nominal: tracked.iter().map(|&i| spec.lambda(i)).collect(),
        gaps,
        s,
    })
}

/// `Var(lambda_i) = Σ_j (s_ij sigma_v)²`.
pub fn eigenvalue_variance(row: &[f64], sigma_v: f64) -> f64 {
    row.iter().map(|s| (s * sigma_v).powi(2)).sum()
}

/// Moments of `lambda4 + lambda5`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NumeratorMoments {
    pub mean: f64,
    /// Standard deviation of the linear form `Σ_j (s4j + s5j) v_j`,
    /// including the shared-noise covariance of lambda4 and lambda5.
    pub std: f64,
    /// Standard deviation if lambda4 and lambda5 were independent.
    pub std_independent: f64,
}

pub fn numerator_moments(
    table: &SensitivityTable,
    lambda4_nom: f64,
    lambda5_nom: f64,
    sigma_v: f64,
) -> Result<NumeratorMoments, PerturbationError> {
    let s4 = table.row(4)?;
    let s5 = table.row(5)?;
    let combined: Vec<f64> = s4.iter().zip(&s5).map(|(a, b)| a + b).collect();
    Ok(NumeratorMoments {
        mean: lambda4_nom + lambda5_nom,
        std: eigenvalue_variance(&combined, sigma_v).sqrt(),
        std_independent: (eigenvalue_variance(&s4, sigma_v) + eigenvalue_variance(&s5, sigma_v)).sqrt(),
    })
}

/// Gaussian approximation of `X / Y`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RatioMoments {
    pub mean: f64,
    pub std: f64,
    /// `sigma_y / |mu_y|`.
    pub denominator_cv: f64,
    /// Set when `denominator_cv >= RATIO_CV_LIMIT`.
    pub strained: bool,
}

/// `Z = X/Y ~ N(mu_x/mu_y, (mu_x²/mu_y²)(sigma_x²/mu_x² + sigma_y²/mu_y²))`.
pub fn ratio_gaussian(mu_x: f64, sigma_x: f64, mu_y: f64, sigma_y: f64) -> Result<RatioMoments, PerturbationError> {
    if mu_y == 0.0 {
        return Err(PerturbationError::ZeroDenominator);
    }
    let mean = mu_x / mu_y;
    // same variance, written without dividing by mu_x
    let var = (sigma_x * sigma_x + mean * mean * sigma_y * sigma_y) / (mu_y * mu_y);
    let denominator_cv = sigma_y / mu_y.abs();
    Ok(RatioMoments {
        mean,
        std: var.sqrt(),
        denominator_cv,
        strained: denominator_cv >= RATIO_CV_LIMIT,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ValidityWarning {
    /// Denominator spread too large for the Gaussian ratio approximation.
    RatioDenominatorSpread { cv: f64, limit: f64 },
    /// A tracked eigenvalue's predicted spread is a sizeable fraction of
    /// its distance to the neighbouring eigenvalue.
    EigenvalueGapStrain { index: usize, ratio: f64, limit: f64 },
    /// `sigma_q = 0`; thresholds collapse onto `mu_q`.
    DegenerateThreshold,
}

/// Per-eigenvalue prediction.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EigenvaluePrediction {
    pub index: usize,
    pub nominal: f64,
    pub std: f64,
    pub gap: f64,
}

/// Predicted Gaussian parameters for the numerator `lambda4 + lambda5`,
/// the denominator `2 lambda1`, and `q`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StatisticDistribution {
    pub mu_num: f64,
    pub sigma_num: f64,
    pub mu_den: f64,
    pub sigma_den: f64,
    pub mu_q: f64,
    pub sigma_q: f64,
    /// First-order `Cov(lambda4 + lambda5, 2 lambda1)`, m⁴.
    pub covariance_num_den: f64,
    /// Numerator spread under the independent-eigenvalue assumption.
    pub sigma_num_independent: f64,
    pub eigenvalues: Vec<EigenvaluePrediction>,
    pub validity_warnings: Vec<ValidityWarning>,
    pub ordering: EigenOrdering,
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct PredictionConfig {
    #[serde(default)]
    pub ordering: EigenOrdering,
    /// Track lambda1..lambda5 instead of only the eigenvalues `q` needs.
    #[serde(default)]
    pub track_all: bool,
}

impl PredictionConfig {
    pub fn with_ordering(ordering: EigenOrdering) -> Self {
        Self {
            ordering,
            ..Default::default()
        }
    }

    pub fn tracked(&self) -> Vec<usize> {
        if self.track_all {
            (1..=5).collect()
        } else {
            STATISTIC_EIGENVALUES.to_vec()
        }
    }
}

/// The nominal (noise-free, biased) centered Gram matrix and its inputs.
#[derive(Debug, Clone)]
pub struct NominalGram {
    pub rho: Vec<f64>,
    pub gram: DMatrix<f64>,
}

pub fn nominal_gram(g: &ScenarioGeometry, nm: &NoiseModel) -> Result<NominalGram, EdmError> {
    let b = nm.effective_bias();
    let rho: Vec<f64> = true_ranges(g).iter().map(|d| d + b).collect();
    let gram = edm::centered_gram(&edm::satellite_edm(&g.satellite_matrix()), &rho)?;
    Ok(NominalGram { rho, gram })
}

/// Sensitivity table of the nominal biased scenario.
pub fn nominal_sensitivities(
    g: &ScenarioGeometry,
    nm: &NoiseModel,
    cfg: &PredictionConfig,
) -> Result<SensitivityTable, PerturbationError> {
    if nm.effective_bias() == 0.0 {
        return Err(PerturbationError::ZeroBias);
    }
    let nom = nominal_gram(g, nm)?;
    let spec = edm::spectrum(&nom.gram, cfg.ordering)?;
    eigenvalue_sensitivities(&spec, &gram_sensitivities(&nom.rho), &cfg.tracked())
}

/// End-to-end prediction of the nominal distribution of `q`.
pub fn predict_q_distribution(
    g: &ScenarioGeometry,
    nm: &NoiseModel,
    cfg: &PredictionConfig,
) -> Result<StatisticDistribution, PerturbationError> {
    nm.validate()?;
    let table = nominal_sensitivities(g, nm, cfg)?;
    distribution_from_table(&table, nm.sigma_v, cfg.ordering)
}

/// Combines a sensitivity table into the distribution of `q`.
pub fn distribution_from_table(
    table: &SensitivityTable,
    sigma_v: f64,
    ordering: EigenOrdering,
) -> Result<StatisticDistribution, PerturbationError> {
    let num = numerator_moments(table, table.nominal(4)?, table.nominal(5)?, sigma_v)?;
    let s1 = table.row(1)?;
    let mu_den = 2.0 * table.nominal(1)?;
    let sigma_den = 2.0 * eigenvalue_variance(&s1, sigma_v).sqrt();
    let ratio = ratio_gaussian(num.mean, num.std, mu_den, sigma_den)?;

    let s4 = table.row(4)?;
    let s5 = table.row(5)?;
    let covariance_num_den = (0..s1.len())
        .map(|j| (s4[j] + s5[j]) * 2.0 * s1[j])
        .sum::<f64>()
        * sigma_v
        * sigma_v;

    let mut eigenvalues = Vec::with_capacity(table.indices.len());
    let mut validity_warnings = Vec::new();
    for (k, &index) in table.indices.iter().enumerate() {
        let row: Vec<f64> = table.s.row(k).iter().copied().collect();
        let std = eigenvalue_variance(&row, sigma_v).sqrt();
        let gap = table.gaps[k];
        let ratio = std / gap;
        if ratio > GAP_STRAIN_LIMIT {
            validity_warnings.push(ValidityWarning::EigenvalueGapStrain {
                index,
                ratio,
                limit: GAP_STRAIN_LIMIT,
            });
        }
        eigenvalues.push(EigenvaluePrediction {
            index,
            nominal: table.nominal[k],
            std,
            gap,
        });
    }
    if ratio.strained {
        validity_warnings.push(ValidityWarning::RatioDenominatorSpread {
            cv: ratio.denominator_cv,
            limit: RATIO_CV_LIMIT,
        });
    }
    Ok(StatisticDistribution {
        mu_num: num.mean,
        sigma_num: num.std,
        mu_den,
        sigma_den,
        mu_q: ratio.mean,
        sigma_q: ratio.std,
        covariance_num_den,
        sigma_num_independent: num.std_independent,
        eigenvalues,
        validity_warnings,
        ordering,
    })
}

/// Detection thresholds on `q` for a target false-alarm probability.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Thresholds {
    pub p_fa: f64,
    /// `mu_q ∓ z_{1-p/2} sigma_q`.
    pub two_sided: (f64, f64),
    /// `mu_q + z_{1-p} sigma_q`.
    pub one_sided: f64,
    /// `sigma_q == 0`, so every threshold equals `mu_q`.
    pub degenerate: bool,
}

/// Standard normal quantile.
pub fn normal_quantile(p: f64) -> f64 {
    Normal::standard().inverse_cdf(p)
}

pub fn detection_threshold(dist: &StatisticDistribution, p_fa: f64) -> Result<Thresholds, PerturbationError> {
    if !(p_fa > 0.0 && p_fa < 0.5) {
        return Err(PerturbationError::BadFalseAlarm(p_fa));
    }
    let z2 = normal_quantile(1.0 - p_fa / 2.0);
    let z1 = normal_quantile(1.0 - p_fa);
    let (mu, sigma) = (dist.mu_q, dist.sigma_q);
    Ok(Thresholds {
        p_fa,
        two_sided: (mu - z2 * sigma, mu + z2 * sigma),
        one_sided: mu + z1 * sigma,
        degenerate: sigma == 0.0,
    })
}

/// Rayleigh quotient `zᵀ V z / zᵀ z`.
pub fn rayleigh_quotient(z: &DVector<f64>, v: &DMatrix<f64>) -> f64 {
    z.dot(&(v * z)) / z.dot(z)
}
