use nalgebra::{DMatrix, SymmetricEigen};

use crate::error::{Error, Result};
use crate::linalg::Matrix;

#[derive(Debug, Clone, PartialEq)]
pub struct PcaResult {
    /// `n × k` coordinates of the centered data on the top components.
    pub projected: Matrix,
    /// `k × d`, one unit-norm principal direction per row.
    pub components: Matrix,
    pub mean: Vec<f64>,
    /// Covariance eigenvalues of the kept components, non-increasing.
    pub explained_variance: Vec<f64>,
    /// Kept eigenvalues over the total variance.
    pub explained_variance_ratio: Vec<f64>,
    /// Number of kept components with (numerically) zero variance.
    pub zero_variance_components: usize,
}

/// Principal component analysis by eigendecomposition of the sample
/// covariance. Each component's sign is fixed so that its largest-magnitude
/// entry is positive.
pub fn pca(data: &Matrix, k: usize) -> Result<PcaResult> {
    let (n, d) = (data.rows(), data.cols());
    if n < 2 {
        return Err(Error::invalid("PCA needs at least two points"));
    }
    if k == 0 || k > n.min(d) {
        return Err(Error::invalid(format!("cannot keep {k} components of a {n} × {d} matrix")));
    }
    let mut mean = vec![0.0; d];
    for i in 0..n {
        for (m, &v) in mean.iter_mut().zip(data.row(i)) {
            *m += v;
        }
    }
    mean.iter_mut().for_each(|m| *m /= n as f64);
    let centered = DMatrix::from_fn(n, d, |i, j| data.get(i, j) - mean[j]);
    let cov = centered.transpose() * &centered / (n as f64 - 1.0);
    let eigen = SymmetricEigen::new(cov);
    let mut order: Vec<usize> = (0..d).collect();
    order.sort_by(|&a, &b| eigen.eigenvalues[b].total_cmp(&eigen.eigenvalues[a]));
    let values: Vec<f64> = order.iter().map(|&i| eigen.eigenvalues[i].max(0.0)).collect();
    let total: f64 = values.iter().sum();
    let tol = 1e-12 * values[0].max(f64::MIN_POSITIVE);

    let mut components = Matrix::zeros(k, d);
    for (c, &i) in order.iter().take(k).enumerate() {
        let v = eigen.eigenvectors.column(i);
        let pivot = (0..d).max_by(|&a, &b| v[a].abs().total_cmp(&v[b].abs())).unwrap_or(0);
        let sign = if v[pivot] < 0.0 { -1.0 } else { 1.0 };
        for j in 0..d {
            components.set(c, j, sign * v[j]);
        }
    }
    let mut projected = Matrix::zeros(n, k);
    for i in 0..n {
        for c in 0..k {
            let s: f64 = (0..d).map(|j| centered[(i, j)] * components.get(c, j)).sum();
            projected.set(i, c, s);
        }
    }
    let explained_variance: Vec<f64> = values[..k].to_vec();
    Ok(PcaResult {
        projected,
        components,
        mean,
        explained_variance_ratio: explained_variance
            .iter()
            .map(|&v| if total > 0.0 { v / total } else { 0.0 })
            .collect(),
        zero_variance_components: explained_variance.iter().filter(|&&v| v <= tol).count(),
        explained_variance,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng;
    use rand::Rng;

    /// Cyclic Jacobi eigenvalue iteration for a symmetric matrix.
    fn jacobi_eigenvalues(mut a: Vec<Vec<f64>>) -> Vec<f64> {
        let n = a.len();
        for _ in 0..100 {
            let off: f64 = (0..n).flat_map(|i| (0..n).filter(move |&j| j != i).map(move |j| (i, j))).map(|(i, j)| a[i][j] * a[i][j]).sum();
            if off < 1e-30 {
                break;
            }
            for p in 0..n {
                for q in (p + 1)..n {
                    if a[p][q].abs() < 1e-300 {
                        continue;
                    }
                    let theta = (a[q][q] - a[p][p]) / (2.0 * a[p][q]);
                    let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                    let t = if theta == 0.0 { 1.0 } else { t };
                    let c = 1.0 / (t * t + 1.0).sqrt();
                    let s = t * c;
                    for k in 0..n {
                        let (akp, akq) = (a[k][p], a[k][q]);
                        a[k][p] = c * akp - s * akq;
                        a[k][q] = s * akp + c * akq;
                    }
                    for k in 0..n {
                        let (apk, aqk) = (a[p][k], a[q][k]);
                        a[p][k] = c * apk - s * aqk;
                        a[q][k] = s * apk + c * aqk;
                    }
                }
            }
        }
        let mut ev: Vec<f64> = (0..n).map(|i| a[i][i]).collect();
        ev.sort_by(|x, y| y.total_cmp(x));
        ev
    }

    fn random_matrix(n: usize, d: usize, seed: u64) -> Matrix {
        let mut rng = rng::seeded(seed);
        let rows: Vec<Vec<f64>> = (0..n).map(|_| (0..d).map(|_| rng.random_range(-2.0..2.0)).collect()).collect();
        Matrix::from_rows(&rows).unwrap()
    }

    #[test]
    fn eigenvalues_match_jacobi_oracle() {
        let x = random_matrix(20, 5, 3);
        let r = pca(&x, 5).unwrap();
        let mean: Vec<f64> = (0..5).map(|j| (0..20).map(|i| x.get(i, j)).sum::<f64>() / 20.0).collect();
        let cov: Vec<Vec<f64>> = (0..5)
            .map(|a| {
                (0..5)
                    .map(|b| (0..20).map(|i| (x.get(i, a) - mean[a]) * (x.get(i, b) - mean[b])).sum::<f64>() / 19.0)
                    .collect()
            })
            .collect();
        let oracle = jacobi_eigenvalues(cov);
        for (a, b) in r.explained_variance.iter().zip(&oracle) {
            assert!((a - b).abs() < 1e-8, "{a} vs {b}");
        }
        assert!(r.explained_variance_ratio.windows(2).all(|w| w[0] >= w[1]));
        assert!((r.explained_variance_ratio.iter().sum::<f64>() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn full_basis_reconstructs_centered_data() {
        let x = random_matrix(12, 4, 1);
        let r = pca(&x, 4).unwrap();
        for i in 0..12 {
            for j in 0..4 {
                let back: f64 = (0..4).map(|c| r.projected.get(i, c) * r.components.get(c, j)).sum();
                assert!((back + r.mean[j] - x.get(i, j)).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn collinear_points_have_one_component() {
        let rows: Vec<Vec<f64>> = (0..10).map(|i| vec![i as f64, 2.0 * i as f64 + 1.0]).collect();
        let r = pca(&Matrix::from_rows(&rows).unwrap(), 2).unwrap();
        assert!((r.explained_variance_ratio[0] - 1.0).abs() < 1e-12);
        assert_eq!(r.zero_variance_components, 1);
    }

    #[test]
    fn invalid_requests() {
        let x = random_matrix(3, 4, 0);
        assert!(pca(&x, 4).is_err());
        assert!(pca(&x, 0).is_err());
        assert!(pca(&random_matrix(1, 3, 0), 1).is_err());
    }
}
