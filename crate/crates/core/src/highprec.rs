//! Double-double evaluation of centered-Gram spectra.
//!
//! Central differences of the eigenvalues with `h = 1e-3 m` change
//! `lambda1 ~ 1e15 m²` by only ~1e3 m², below what an f64 eigensolver
//! resolves reliably. This module rebuilds `G_c` from positions and
//! pseudoranges in ~106-bit arithmetic and diagonalises it with cyclic
//! Jacobi, so finite differences are limited by truncation only.

use nalgebra::Vector3;
use twofloat::TwoFloat;

pub type Dd = TwoFloat;

const MAX_SWEEPS: usize = 60;

fn dd(x: f64) -> Dd {
    Dd::from(x)
}

/// `a / b` to full double-double accuracy. `TwoFloat`'s own division
/// loses the low word, so one Newton correction is applied.
pub fn div(a: Dd, b: Dd) -> Dd {
    let q = a / b;
    let r = a - q * b;
    q + r.hi() / b.hi()
}

/// Square dense matrix in double-double, row-major.
#[derive(Debug, Clone)]
pub struct DdMatrix {
    n: usize,
    data: Vec<Dd>,
}

impl DdMatrix {
    pub fn zeros(n: usize) -> Self {
        Self {
            n,
            data: vec![dd(0.0); n * n],
        }
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn get(&self, i: usize, j: usize) -> Dd {
        self.data[i * self.n + j]
    }

    pub fn set(&mut self, i: usize, j: usize, v: Dd) {
        self.data[i * self.n + j] = v;
    }
}

/// Squared Euclidean distance, exact inputs, double-double accumulation.
fn dist2(a: &Vector3<f64>, b: &Vector3<f64>) -> Dd {
    (0..3).fold(dd(0.0), |acc, k| {
        let diff = Dd::new_sub(a[k], b[k]);
        acc + diff * diff
    })
}

/// Augmented squared-distance matrix for the given satellites and
/// (double-double) pseudoranges.
pub fn augmented_edm(satellites: &[Vector3<f64>], rho: &[Dd]) -> DdMatrix {
    let m = satellites.len();
    let mut d = DdMatrix::zeros(m + 1);
    for j in 0..m {
        let r2 = rho[j] * rho[j];
        d.set(0, j + 1, r2);
        d.set(j + 1, 0, r2);
        for k in (j + 1)..m {
            let v = dist2(&satellites[j], &satellites[k]);
            d.set(j + 1, k + 1, v);
            d.set(k + 1, j + 1, v);
        }
    }
    d
}

/// `-½ J D J` via row, column and grand means.
pub fn double_center(d: &DdMatrix) -> DdMatrix {
    let n = d.dim();
    let inv_n = div(dd(1.0), dd(n as f64));
    let row_mean: Vec<Dd> = (0..n)
        .map(|i| (0..n).fold(dd(0.0), |a, j| a + d.get(i, j)) * inv_n)
        .collect();
    let grand = row_mean.iter().fold(dd(0.0), |a, &x| a + x) * inv_n;
    let mut g = DdMatrix::zeros(n);
    for i in 0..n {
        for j in 0..n {
            // D is symmetric, so column means equal row means
            let v = d.get(i, j) - row_mean[i] - row_mean[j] + grand;
            g.set(i, j, v * dd(-0.5));
        }
    }
    g
}

/// All eigenvalues of a symmetric matrix by cyclic Jacobi rotations.
pub fn jacobi_eigenvalues(a: &DdMatrix) -> Vec<Dd> {
    let n = a.dim();
    let mut a = a.clone();
    let frob = (0..n * n)
        .fold(dd(0.0), |acc, k| acc + a.data[k] * a.data[k])
        .sqrt();
    let tol = frob * dd(1e-30);
    for _ in 0..MAX_SWEEPS {
        let off = (0..n)
            .flat_map(|i| (0..n).filter(move |&j| j != i).map(move |j| (i, j)))
            .fold(dd(0.0), |acc, (i, j)| acc + a.get(i, j) * a.get(i, j))
            .sqrt();
        if off <= tol {
            break;
        }
        for p in 0..n {
            for q in (p + 1)..n {
                let apq = a.get(p, q);
                if apq.hi() == 0.0 {
                    continue;
                }
                let theta = div(a.get(q, q) - a.get(p, p), dd(2.0) * apq);
                let t = {
                    let denom = theta.abs() + (theta * theta + dd(1.0)).sqrt();
                    let t = div(dd(1.0), denom);
                    if theta.hi() < 0.0 {
                        -t
                    } else {
                        t
                    }
                };
                let c = div(dd(1.0), (t * t + dd(1.0)).sqrt());
                let s = t * c;
                for k in 0..n {
                    let akp = a.get(k, p);
                    let akq = a.get(k, q);
                    a.set(k, p, c * akp - s * akq);
                    a.set(k, q, s * akp + c * akq);
                }
                for k in 0..n {
                    let apk = a.get(p, k);
                    let aqk = a.get(q, k);
                    a.set(p, k, c * apk - s * aqk);
                    a.set(q, k, s * apk + c * aqk);
                }
            }
        }
    }
    (0..n).map(|i| a.get(i, i)).collect()
}

/// Eigenvalues of `G_c` built in double-double from satellite positions
/// and pseudoranges.
pub fn centered_gram_eigenvalues(satellites: &[Vector3<f64>], rho: &[Dd]) -> Vec<Dd> {
    jacobi_eigenvalues(&double_center(&augmented_edm(satellites, rho)))
}
