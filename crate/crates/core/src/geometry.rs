//! Receiver/satellite scenarios and the pseudorange measurement model.
//!
//! Pseudoranges follow `rho_i = d_i + b + v_i`, where `d_i` is the true
//! receiver-to-satellite distance, `b` the range-equivalent clock bias and
//! `v_i` i.i.d. zero-mean Gaussian noise. All quantities are SI meters.

use nalgebra::{DMatrix, Vector3};
use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, UnitSphere};
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Mean Earth radius used to place the receiver, meters.
pub const EARTH_RADIUS: f64 = 6_371_000.0;
/// GPS-like orbit radius, meters.
pub const DEFAULT_ORBIT_RADIUS: f64 = 26_560_000.0;
/// Default elevation mask, degrees.
pub const DEFAULT_ELEVATION_MASK_DEG: f64 = 10.0;
/// Default pseudorange noise standard deviation, meters.
pub const DEFAULT_SIGMA_V: f64 = 3.0;
/// Default range-equivalent clock bias, meters.
pub const DEFAULT_BIAS: f64 = 1.0e5;

/// Minimum number of satellites: the statistic needs five eigenvalues.
pub const MIN_SATELLITES: usize = 5;
/// Satellites closer than this are treated as coincident, meters.
pub const MIN_SATELLITE_SEPARATION: f64 = 1.0;
/// Relative singular-value floor for the rank-3 (non-coplanar) check.
pub const RANK_REL_TOL: f64 = 1e-9;
/// Total draws allowed while rejection-sampling a constellation.
pub const MAX_CONSTELLATION_DRAWS: usize = 1_000_000;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GeometryError {
    #[error("need at least {MIN_SATELLITES} satellites, got {0}")]
    TooFewSatellites(usize),
    #[error("satellites {0} and {1} are coincident (separation {2:.3e} m)")]
    CoincidentSatellites(usize, usize, f64),
    #[error("receiver and satellites are coplanar (singular values {0:?})")]
    Coplanar([f64; 3]),
    #[error("non-finite coordinate in scenario")]
    NonFinite,
    #[error("orbit radius {0} m must exceed the Earth radius")]
    OrbitTooLow(f64),
    #[error("elevation mask {0} deg outside [0, 90)")]
    BadElevationMask(f64),
    #[error("only {found} of {wanted} satellites above the mask after {draws} draws")]
    RejectionCapExceeded {
        wanted: usize,
        found: usize,
        draws: usize,
    },
    #[error("sigma_v must be positive and finite, got {0}")]
    BadSigma(f64),
    #[error("bias terms must be finite")]
    BadBias,
}

/// Receiver position plus the positions of `m` satellites (ECEF, meters).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioGeometry {
    receiver: Vector3<f64>,
    satellites: Vec<Vector3<f64>>,
}

impl ScenarioGeometry {
    /// Validates the scenario invariants: `m >= 5`, no coincident
    /// satellites, and a rank-3 centered point cloud.
    pub fn new(receiver: Vector3<f64>, satellites: Vec<Vector3<f64>>) -> Result<Self, GeometryError> {
        let m = satellites.len();
        if m < MIN_SATELLITES {
            return Err(GeometryError::TooFewSatellites(m));
        }
        if !receiver.iter().chain(satellites.iter().flat_map(|s| s.iter())).all(|x| x.is_finite()) {
            return Err(GeometryError::NonFinite);
        }
        for i in 0..m {
            for j in (i + 1)..m {
                let sep = (satellites[i] - satellites[j]).norm();
                if sep <= MIN_SATELLITE_SEPARATION {
                    return Err(GeometryError::CoincidentSatellites(i + 1, j + 1, sep));
                }
            }
        }
        let sv = centered_singular_values(&receiver, &satellites);
        if sv[2] <= RANK_REL_TOL * sv[0] {
            return Err(GeometryError::Coplanar(sv));
        }
        Ok(Self {
            receiver,
            satellites,
        })
    }

    pub fn receiver(&self) -> &Vector3<f64> {
        &self.receiver
    }

    pub fn satellites(&self) -> &[Vector3<f64>] {
        &self.satellites
    }

    /// Number of satellites `m`.
    pub fn m(&self) -> usize {
        self.satellites.len()
    }

    /// Satellite positions as a 3×m matrix, one column per satellite.
    pub fn satellite_matrix(&self) -> DMatrix<f64> {
        DMatrix::from_fn(3, self.m(), |r, c| self.satellites[c][r])
    }

    /// Elevation of every satellite above the receiver's local horizon,
    /// degrees. The local vertical is the geocentric radial direction.
    pub fn elevations_deg(&self) -> Vec<f64> {
        self.satellites
            .iter()
            .map(|s| elevation_deg(&self.receiver, s))
            .collect()
    }

    /// Same scenario with every coordinate multiplied by `c`.
    pub fn scaled(&self, c: f64) -> Result<Self, GeometryError> {
        Self::new(
            self.receiver * c,
            self.satellites.iter().map(|s| s * c).collect(),
        )
    }

    /// Same scenario with satellites reordered: new satellite `k` is old
    /// satellite `perm[k]`.
    pub fn permuted(&self, perm: &[usize]) -> Result<Self, GeometryError> {
        assert_eq!(perm.len(), self.m(), "permutation length mismatch");
        Self::new(
            self.receiver,
            perm.iter().map(|&k| self.satellites[k]).collect(),
        )
    }
}

fn centered_singular_values(receiver: &Vector3<f64>, satellites: &[Vector3<f64>]) -> [f64; 3] {
    let n = satellites.len() + 1;
    let pts: Vec<&Vector3<f64>> = std::iter::once(receiver).chain(satellites.iter()).collect();
    let mean = pts.iter().fold(Vector3::zeros(), |acc, p| acc + *p) / n as f64;
    let centered = DMatrix::from_fn(3, n, |r, c| pts[c][r] - mean[r]);
    let mut sv: Vec<f64> = centered.singular_values().iter().copied().collect();
    sv.sort_by(|a, b| b.total_cmp(a));
    [sv[0], sv[1], sv[2]]
}

/// Elevation of `sat` seen from `receiver`, degrees.
pub fn elevation_deg(receiver: &Vector3<f64>, sat: &Vector3<f64>) -> f64 {
    let los = sat - receiver;
    let up = receiver.normalize();
    (los.dot(&up) / los.norm()).clamp(-1.0, 1.0).asin().to_degrees()
}

/// Parameters for a synthetic constellation.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ConstellationParams {
    pub n_sats: usize,
    pub elevation_mask_deg: f64,
    pub orbit_radius: f64,
    pub seed: u64,
}

impl Default for ConstellationParams {
    fn default() -> Self {
        Self {
            n_sats: 12,
            elevation_mask_deg: DEFAULT_ELEVATION_MASK_DEG,
            orbit_radius: DEFAULT_ORBIT_RADIUS,
            seed: 1,
        }
    }
}

/// Places a receiver uniformly on the Earth's surface and rejection-samples
/// satellites uniformly on the orbit sphere until `n_sats` clear the mask.
pub fn generate_constellation(params: &ConstellationParams) -> Result<ScenarioGeometry, GeometryError> {
    let ConstellationParams {
        n_sats,
        elevation_mask_deg,
        orbit_radius,
        seed,
    } = *params;
    if n_sats < MIN_SATELLITES {
        return Err(GeometryError::TooFewSatellites(n_sats));
    }
    if !(orbit_radius > EARTH_RADIUS) || !orbit_radius.is_finite() {
        return Err(GeometryError::OrbitTooLow(orbit_radius));
    }
    if !(0.0..90.0).contains(&elevation_mask_deg) {
        return Err(GeometryError::BadElevationMask(elevation_mask_deg));
    }

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let receiver = Vector3::from(UnitSphere.sample(&mut rng)) * EARTH_RADIUS;
    let mut satellites: Vec<Vector3<f64>> = Vec::with_capacity(n_sats);
    let mut draws = 0;
    while satellites.len() < n_sats {
        if draws == MAX_CONSTELLATION_DRAWS {
            return Err(GeometryError::RejectionCapExceeded {
                wanted: n_sats,
                found: satellites.len(),
                draws,
            });
        }
        draws += 1;
        let candidate = Vector3::from(UnitSphere.sample(&mut rng)) * orbit_radius;
        if elevation_deg(&receiver, &candidate) < elevation_mask_deg {
            continue;
        }
        if satellites
            .iter()
            .any(|s| (s - candidate).norm() <= MIN_SATELLITE_SEPARATION)
        {
            continue;
        }
        satellites.push(candidate);
    }
    ScenarioGeometry::new(receiver, satellites)
}

/// Euclidean distance from the receiver to each satellite.
pub fn true_ranges(g: &ScenarioGeometry) -> Vec<f64> {
    g.satellites
        .iter()
        .map(|s| (s - g.receiver).norm())
        .collect()
}

/// Noise and clock-bias model for pseudoranges, meters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NoiseModel {
    pub sigma_v: f64,
    pub bias_b: f64,
    /// Artificial bias added on top of `bias_b` to stabilise the
    /// eigenvectors of the fourth and fifth eigenvalues.
    #[serde(default)]
    pub bias_inflation: f64,
}

impl Default for NoiseModel {
    fn default() -> Self {
        Self {
            sigma_v: DEFAULT_SIGMA_V,
            bias_b: DEFAULT_BIAS,
            bias_inflation: 0.0,
        }
    }
}

impl NoiseModel {
    pub fn new(sigma_v: f64, bias_b: f64, bias_inflation: f64) -> Result<Self, GeometryError> {
        let nm = Self {
            sigma_v,
            bias_b,
            bias_inflation,
        };
        nm.validate()?;
        Ok(nm)
    }

    pub fn validate(&self) -> Result<(), GeometryError> {
        if !(self.sigma_v > 0.0) || !self.sigma_v.is_finite() {
            return Err(GeometryError::BadSigma(self.sigma_v));
        }
        if !self.bias_b.is_finite() || !self.bias_inflation.is_finite() {
            return Err(GeometryError::BadBias);
        }
        Ok(())
    }

    /// Bias actually applied to every pseudorange.
    pub fn effective_bias(&self) -> f64 {
        self.bias_b + self.bias_inflation
    }
}

/// A fault injected into one channel of a sample.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FaultTag {
    /// 1-based satellite index.
    pub sat_index: usize,
    pub fault_bias: f64,
}

/// One epoch of pseudoranges.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PseudorangeSample {
    pub rho: Vec<f64>,
    pub d_true: Vec<f64>,
    /// Noise draw, absent for field data.
    pub v: Option<Vec<f64>>,
    pub b_effective: f64,
    pub fault: Option<FaultTag>,
}

impl PseudorangeSample {
    /// Noise-free pseudoranges `d + b`.
    pub fn noiseless(d: &[f64], b_effective: f64) -> Self {
        Self {
            rho: d.iter().map(|di| di + b_effective).collect(),
            d_true: d.to_vec(),
            v: Some(vec![0.0; d.len()]),
            b_effective,
            fault: None,
        }
    }
}

/// Derives the seed of stream `index` under `master` by reading the first
/// word of ChaCha stream `index`. Independent of evaluation order.
pub fn derive_seed(master: u64, index: u64) -> u64 {
    let mut rng = ChaCha8Rng::seed_from_u64(master);
    rng.set_stream(index);
    rng.next_u64()
}

/// Draws `v ~ N(0, sigma_v^2)` i.i.d. and forms `rho = d + b_eff + v`.
pub fn sample_pseudoranges(d: &[f64], nm: &NoiseModel, seed: u64) -> PseudorangeSample {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    sample_pseudoranges_with(d, nm, &mut rng)
}

pub fn sample_pseudoranges_with<R: Rng + ?Sized>(
    d: &[f64],
    nm: &NoiseModel,
    rng: &mut R,
) -> PseudorangeSample {
    let normal = Normal::new(0.0, nm.sigma_v).expect("sigma_v validated positive");
    let b = nm.effective_bias();
    let v: Vec<f64> = d.iter().map(|_| normal.sample(rng)).collect();
    let rho = d.iter().zip(&v).map(|(di, vi)| di + b + vi).collect();
    PseudorangeSample {
        rho,
        d_true: d.to_vec(),
        v: Some(v),
        b_effective: b,
        fault: None,
    }
}
