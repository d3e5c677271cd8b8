//! Principal-component projection for 2-D visualization exports.

use nalgebra::{DMatrix, SymmetricEigen};

use crate::error::{check_dim, Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct Projection {
    /// One row per input, `components` columns.
    pub points: Vec<Vec<f64>>,
    /// Unit principal directions, strongest first.
    pub directions: Vec<Vec<f64>>,
    /// Variance captured by each direction (sample variance, `n - 1`).
    pub variances: Vec<f64>,
    pub mean: Vec<f64>,
}

/// Centers the data and projects it onto its top `components` principal
/// directions, found by eigendecomposition of the sample covariance.
/// Each direction's largest-magnitude loading is made positive.
pub fn pca_project<V: AsRef<[f64]>>(vectors: &[V], components: usize) -> Result<Projection> {
    if vectors.len() < 2 {
        return Err(Error::Data("projection needs at least two vectors".into()));
    }
    let dim = vectors[0].as_ref().len();
    for v in vectors {
        check_dim(dim, v.as_ref().len())?;
    }
    if components == 0 || components > dim {
        return Err(Error::Config(format!("cannot project {dim}-dimensional data onto {components} components")));
    }
    let n = vectors.len();
    let mut mean = vec![0.0; dim];
    for v in vectors {
        for (m, x) in mean.iter_mut().zip(v.as_ref()) {
            *m += x;
        }
    }
    mean.iter_mut().for_each(|m| *m /= n as f64);
    let centered = DMatrix::from_fn(n, dim, |i, j| vectors[i].as_ref()[j] - mean[j]);
    if centered.iter().all(|&x| x == 0.0) {
        return Err(Error::Data("all vectors are identical; nothing to project".into()));
    }
    let cov = (centered.transpose() * &centered) / (n as f64 - 1.0);
    let eig = SymmetricEigen::new(cov);
    let mut order: Vec<usize> = (0..dim).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]).then(a.cmp(&b)));

    let mut directions = Vec::with_capacity(components);
    let mut variances = Vec::with_capacity(components);
    for &k in order.iter().take(components) {
        let mut dir: Vec<f64> = eig.eigenvectors.column(k).iter().copied().collect();
        let pivot = dir
            .iter()
            .copied()
            .fold(0.0f64, |best, x| if x.abs() > best.abs() { x } else { best });
        if pivot < 0.0 {
            dir.iter_mut().for_each(|x| *x = -*x);
        }
        directions.push(dir);
        variances.push(eig.eigenvalues[k].max(0.0));
    }
    let points = (0..n)
        .map(|i| {
            directions
                .iter()
                .map(|d| centered.row(i).iter().zip(d).map(|(x, w)| x * w).sum())
                .collect()
        })
        .collect();
    Ok(Projection {
        points,
        directions,
        variances,
        mean,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn column_variance(points: &[Vec<f64>], c: usize) -> f64 {
        let n = points.len() as f64;
        let m = points.iter().map(|p| p[c]).sum::<f64>() / n;
        points.iter().map(|p| (p[c] - m).powi(2)).sum::<f64>() / (n - 1.0)
    }

    #[test]
    fn planar_data_keeps_distances() {
        // points spanning a plane inside R^5
        let u = [1.0, 2.0, 0.0, -1.0, 0.5];
        let v = [0.0, 1.0, 3.0, 1.0, -2.0];
        let coeffs = [(0.0, 0.0), (1.0, 0.0), (0.0, 1.0), (2.0, -1.0), (-1.5, 0.5), (0.3, 2.2)];
        let xs: Vec<Vec<f64>> = coeffs
            .iter()
            .map(|(a, b)| (0..5).map(|j| a * u[j] + b * v[j] + 7.0).collect())
            .collect();
        let proj = pca_project(&xs, 2).unwrap();
        for i in 0..xs.len() {
            for j in 0..xs.len() {
                let orig = crate::linalg::euclidean_distance(&xs[i], &xs[j]).unwrap();
                let flat = crate::linalg::euclidean_distance(&proj.points[i], &proj.points[j]).unwrap();
                assert!((orig - flat).abs() < 1e-9, "{orig} vs {flat}");
            }
        }
    }

    #[test]
    fn line_has_no_second_component() {
        let xs: Vec<Vec<f64>> = (0..10).map(|i| vec![i as f64, 2.0 * i as f64, -(i as f64)]).collect();
        let proj = pca_project(&xs, 2).unwrap();
        assert!(column_variance(&proj.points, 1) < 1e-10);
        assert!(column_variance(&proj.points, 0) >= column_variance(&proj.points, 1));
    }

    #[test]
    fn identical_rows_rejected() {
        let xs = vec![vec![1.0, 2.0]; 4];
        assert!(matches!(pca_project(&xs, 2), Err(Error::Data(_))));
        assert!(pca_project(&[vec![1.0, 2.0]], 2).is_err());
    }
}
