//! Gram and Euclidean-distance-matrix construction, double centering,
//! ordered spectra and the detection statistic
//! `q = (lambda4 + lambda5) / (2 lambda1)`.

use std::io::{self, Write};

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// `|lambda| > NONZERO_REL_TOL * |lambda1|` classifies an eigenvalue as
/// non-zero.
pub const NONZERO_REL_TOL: f64 = 1e-9;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum EdmError {
    #[error("dimension mismatch: EDM is {edm}x{edm} but {rho} pseudoranges were given")]
    DimensionMismatch { edm: usize, rho: usize },
    #[error("pseudorange {index} is not positive ({value})")]
    NonPositiveRange { index: usize, value: f64 },
    #[error("matrix contains non-finite entries")]
    NonFinite,
    #[error("need at least 5 eigenvalues, spectrum has {0}")]
    TooFewEigenvalues(usize),
    #[error("largest eigenvalue is zero (degenerate geometry)")]
    ZeroLeadingEigenvalue,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum EdmKind {
    /// Satellite-to-satellite squared distances, m×m.
    InterSatellite,
    /// Receiver row/column of squared pseudoranges prepended, (m+1)×(m+1).
    Augmented,
}

/// Matrix of squared distances in m².
#[derive(Debug, Clone, PartialEq)]
pub struct SquaredDistanceMatrix {
    pub entries: DMatrix<f64>,
    pub kind: EdmKind,
}

impl SquaredDistanceMatrix {
    pub fn dim(&self) -> usize {
        self.entries.nrows()
    }

    /// Largest relative asymmetry `|D_ij - D_ji| / max|D|`.
    pub fn asymmetry(&self) -> f64 {
        let scale = self.entries.amax().max(f64::MIN_POSITIVE);
        (&self.entries - self.entries.transpose()).amax() / scale
    }

    /// Symmetric to 1e-9 relative, zero diagonal, non-negative entries.
    pub fn is_valid(&self) -> bool {
        self.entries.is_square()
            && self.asymmetry() <= 1e-9
            && self.entries.diagonal().iter().all(|&d| d == 0.0)
            && self.entries.iter().all(|&x| x >= 0.0)
    }
}

/// Gram matrix `G = Xᵀ X` of the columns of `x` (3×m positions).
pub fn gram_from_positions(x: &DMatrix<f64>) -> DMatrix<f64> {
    x.transpose() * x
}

/// `D = 1 diag(G)ᵀ - 2G + diag(G) 1ᵀ`.
pub fn edm_from_gram(g: &DMatrix<f64>) -> SquaredDistanceMatrix {
    let n = g.nrows();
    let entries = DMatrix::from_fn(n, n, |i, j| {
        if i == j {
            0.0
        } else {
            let (a, b) = (i.min(j), i.max(j));
            // clamp tiny negatives from cancellation
            (g[(a, a)] - 2.0 * g[(a, b)] + g[(b, b)]).max(0.0)
        }
    });
    SquaredDistanceMatrix {
        entries,
        kind: EdmKind::InterSatellite,
    }
}

/// Prepends the receiver row and column holding `rho_i²`.
pub fn augment_edm(d: &SquaredDistanceMatrix, rho: &[f64]) -> Result<SquaredDistanceMatrix, EdmError> {
    let m = d.dim();
    if rho.len() != m || !d.entries.is_square() {
        return Err(EdmError::DimensionMismatch { edm: m, rho: rho.len() });
    }
    if let Some((index, &value)) = rho.iter().enumerate().find(|(_, r)| !(**r > 0.0)) {
        return Err(EdmError::NonPositiveRange { index: index + 1, value });
    }
    let mut entries = DMatrix::zeros(m + 1, m + 1);
    entries.view_mut((1, 1), (m, m)).copy_from(&d.entries);
    for (j, r) in rho.iter().enumerate() {
        let r2 = r * r;
        entries[(0, j + 1)] = r2;
        entries[(j + 1, 0)] = r2;
    }
    Ok(SquaredDistanceMatrix {
        entries,
        kind: EdmKind::Augmented,
    })
}

/// Centering projector `J = I - 11ᵀ/n`.
pub fn centering_matrix(n: usize) -> DMatrix<f64> {
    DMatrix::identity(n, n) - DMatrix::from_element(n, n, 1.0 / n as f64)
}

/// `G_c = -½ J D_c J`, with `J` sized to `D_c`.
pub fn gram_centered(dc: &SquaredDistanceMatrix) -> DMatrix<f64> {
    double_center(&dc.entries)
}

/// `-½ J A J` for any square `A`, symmetrised.
pub fn double_center(a: &DMatrix<f64>) -> DMatrix<f64> {
    let j = centering_matrix(a.nrows());
    let g = &j * a * &j * -0.5;
    (&g + g.transpose()) * 0.5
}

/// Satellite EDM straight from positions (3×m).
pub fn satellite_edm(x: &DMatrix<f64>) -> SquaredDistanceMatrix {
    edm_from_gram(&gram_from_positions(x))
}

/// `G_c` for a satellite EDM and a pseudorange vector.
pub fn centered_gram(d: &SquaredDistanceMatrix, rho: &[f64]) -> Result<DMatrix<f64>, EdmError> {
    Ok(gram_centered(&augment_edm(d, rho)?))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EigenOrdering {
    /// Largest value first, sign included.
    Algebraic,
    /// Largest `|lambda|` first.
    #[default]
    Magnitude,
}

impl EigenOrdering {
    pub fn other(self) -> Self {
        match self {
            Self::Algebraic => Self::Magnitude,
            Self::Magnitude => Self::Algebraic,
        }
    }

    fn key(self, x: f64) -> f64 {
        match self {
            Self::Algebraic => x,
            Self::Magnitude => x.abs(),
        }
    }

    /// Permutation that sorts `values` descending under this ordering.
    /// Ties break on the algebraic value, then on the original index.
    pub fn argsort(self, values: &[f64]) -> Vec<usize> {
        let mut idx: Vec<usize> = (0..values.len()).collect();
        idx.sort_by(|&a, &b| {
            self.key(values[b])
                .total_cmp(&self.key(values[a]))
                .then(values[b].total_cmp(&values[a]))
                .then(a.cmp(&b))
        });
        idx
    }
}

impl std::fmt::Display for EigenOrdering {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Self::Algebraic => "algebraic",
            Self::Magnitude => "magnitude",
        })
    }
}

impl std::str::FromStr for EigenOrdering {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "algebraic" => Ok(Self::Algebraic),
            "magnitude" => Ok(Self::Magnitude),
            other => Err(format!("unknown ordering '{other}' (expected algebraic|magnitude)")),
        }
    }
}

/// Ordered eigenpairs of a centered Gram matrix. Column `k` of
/// `eigenvectors` belongs to `eigenvalues[k]`; index 0 is `lambda1`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GramSpectrum {
    pub eigenvalues: DVector<f64>,
    pub eigenvectors: DMatrix<f64>,
    pub ordering: EigenOrdering,
}

impl GramSpectrum {
    pub fn len(&self) -> usize {
        self.eigenvalues.len()
    }

    pub fn is_empty(&self) -> bool {
        self.eigenvalues.is_empty()
    }

    /// 1-based eigenvalue, as in `lambda1`.
    pub fn lambda(&self, i: usize) -> f64 {
        self.eigenvalues[i - 1]
    }

    /// 1-based eigenvector.
    pub fn z(&self, i: usize) -> DVector<f64> {
        self.eigenvectors.column(i - 1).into_owned()
    }

    /// Number of eigenvalues with `|lambda| > rel_tol * |lambda1|`.
    pub fn count_nonzero(&self, rel_tol: f64) -> usize {
        count_nonzero(self.eigenvalues.as_slice(), rel_tol)
    }

    /// Largest `‖G z - lambda z‖` over all pairs.
    pub fn max_residual(&self, g: &DMatrix<f64>) -> f64 {
        (0..self.len())
            .map(|k| {
                let z = self.eigenvectors.column(k);
                (g * z - z * self.eigenvalues[k]).norm()
            })
            .fold(0.0, f64::max)
    }

    /// Largest entry of `|ZᵀZ - I|`.
    pub fn orthonormality_error(&self) -> f64 {
        let n = self.len();
        (self.eigenvectors.transpose() * &self.eigenvectors - DMatrix::identity(n, n)).amax()
    }

    /// `Σ lambda_k z_k z_kᵀ`.
    pub fn reconstruct(&self) -> DMatrix<f64> {
        let d = DMatrix::from_diagonal(&self.eigenvalues);
        &self.eigenvectors * d * self.eigenvectors.transpose()
    }
}

/// Counts `|lambda| > rel_tol * max|lambda|`.
pub fn count_nonzero(eigenvalues: &[f64], rel_tol: f64) -> usize {
    let scale = eigenvalues.iter().fold(0.0_f64, |a, x| a.max(x.abs()));
    eigenvalues.iter().filter(|x| x.abs() > rel_tol * scale).count()
}

fn check_finite(g: &DMatrix<f64>) -> Result<(), EdmError> {
    if g.iter().all(|x| x.is_finite()) {
        Ok(())
    } else {
        Err(EdmError::NonFinite)
    }
}

/// Full ordered eigendecomposition. Each eigenvector is signed so that its
/// largest-magnitude component is positive.
pub fn spectrum(g: &DMatrix<f64>, ordering: EigenOrdering) -> Result<GramSpectrum, EdmError> {
    check_finite(g)?;
    let eig = g.clone().symmetric_eigen();
    let order = ordering.argsort(eig.eigenvalues.as_slice());
    let n = order.len();
    let eigenvalues = DVector::from_iterator(n, order.iter().map(|&k| eig.eigenvalues[k]));
    let mut eigenvectors = DMatrix::zeros(g.nrows(), n);
    for (dst, &src) in order.iter().enumerate() {
        let mut col = eig.eigenvectors.column(src).into_owned();
        let pivot = col.iamax();
        if col[pivot] < 0.0 {
            col.neg_mut();
        }
        eigenvectors.set_column(dst, &col);
    }
    Ok(GramSpectrum {
        eigenvalues,
        eigenvectors,
        ordering,
    })
}

/// Ordered eigenvalues only; cheaper than [`spectrum`].
pub fn ordered_eigenvalues(g: &DMatrix<f64>, ordering: EigenOrdering) -> Result<Vec<f64>, EdmError> {
    check_finite(g)?;
    let values = g.symmetric_eigenvalues();
    Ok(ordering.argsort(values.as_slice()).into_iter().map(|k| values[k]).collect())
}

/// `q` from already ordered eigenvalues.
pub fn statistic_from_eigenvalues(eigenvalues: &[f64]) -> Result<f64, EdmError> {
    if eigenvalues.len() < 5 {
        return Err(EdmError::TooFewEigenvalues(eigenvalues.len()));
    }
    if eigenvalues[0] == 0.0 {
        return Err(EdmError::ZeroLeadingEigenvalue);
    }
    Ok((eigenvalues[3] + eigenvalues[4]) / (2.0 * eigenvalues[0]))
}

/// `q = (lambda4 + lambda5) / (2 lambda1)` under the spectrum's ordering.
pub fn test_statistic(s: &GramSpectrum) -> Result<f64, EdmError> {
    statistic_from_eigenvalues(s.eigenvalues.as_slice())
}

/// Writes a matrix as CSV: a header row of column indices, then one row
/// per matrix row.
pub fn write_matrix_csv<W: Write>(m: &DMatrix<f64>, mut w: W) -> io::Result<()> {
    let header: Vec<String> = (0..m.ncols()).map(|j| j.to_string()).collect();
    writeln!(w, "{}", header.join(","))?;
    for row in m.row_iter() {
        let cells: Vec<String> = row.iter().map(|x| format!("{x:e}")).collect();
        writeln!(w, "{}", cells.join(","))?;
    }
    Ok(())
}
