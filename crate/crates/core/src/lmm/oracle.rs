use nalgebra::{DMatrix, DVector};

use super::design::DesignMatrices;
use super::LmmError;

/// Largest `n` the dense oracle accepts.
pub const DENSE_MAX_N: usize = 2000;

/// Gaussian log-density of `y` under `N(X beta, sigma2 (I + sum_g theta_g^2 Z_g Z_g'))`,
/// computed from a dense Cholesky of the full covariance. Independent of the
/// profiled fitter and meant for testing it.
pub fn dense_loglik_oracle(design: &DesignMatrices, beta: &[f64], theta: &[f64], sigma2: f64) -> Result<f64, LmmError> {
    let n = design.n();
    if n > DENSE_MAX_N {
        return Err(LmmError::TooLarge { n, max: DENSE_MAX_N });
    }
    if beta.len() != design.p() {
        return Err(LmmError::ParameterLength {
            expected: design.p(),
            got: beta.len(),
        });
    }
    if theta.len() != design.groups.len() {
        return Err(LmmError::ParameterLength {
            expected: design.groups.len(),
            got: theta.len(),
        });
    }
    if !(sigma2 > 0.0) {
        return Err(LmmError::InvalidTheta);
    }
    let v = DMatrix::from_fn(n, n, |i, j| {
        let shared: f64 = design
            .groups
            .iter()
            .zip(theta)
            .filter(|(g, _)| g.index[i] == g.index[j])
            .map(|(_, t)| t * t)
            .sum();
        sigma2 * (if i == j { 1.0 } else { 0.0 } + shared)
    });
    let chol = v.cholesky().ok_or(LmmError::NotPositiveDefinite)?;
    let x = DMatrix::from_row_slice(n, design.p(), &design.x);
    let resid = DVector::from_column_slice(&design.y) - x * DVector::from_column_slice(beta);
    let logdet = 2.0 * chol.l_dirty().diagonal().iter().map(|d| d.ln()).sum::<f64>();
    let quad = resid.dot(&chol.solve(&resid));
    Ok(-0.5 * (n as f64 * (2.0 * std::f64::consts::PI).ln() + logdet + quad))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lmm::design::GroupingFactor;

    fn design(y: Vec<f64>, groups: Vec<GroupingFactor>) -> DesignMatrices {
        let n = y.len();
        DesignMatrices::from_dense(y, vec![1.0; n], &["(Intercept)"], groups).unwrap()
    }

    #[test]
    fn zero_theta_is_iid_normal() {
        let y = vec![0.5, -1.0, 2.0, 0.0];
        let g = GroupingFactor {
            name: "g".into(),
            levels: vec!["a".into(), "b".into()],
            index: vec![0, 0, 1, 1],
        };
        let d = design(y.clone(), vec![g]);
        let (mu, s2) = (0.25, 1.7);
        let iid: f64 = y
            .iter()
            .map(|v| -0.5 * ((2.0 * std::f64::consts::PI * s2).ln() + (v - mu).powi(2) / s2))
            .sum();
        let got = dense_loglik_oracle(&d, &[mu], &[0.0], s2).unwrap();
        assert!((got - iid).abs() < 1e-12);
    }

    #[test]
    fn exchangeable_under_row_permutation() {
        let y = vec![0.3, 1.1, -0.4, 2.2, 0.9, -1.5];
        let g = GroupingFactor {
            name: "g".into(),
            levels: vec!["a".into(), "b".into(), "c".into()],
            index: vec![0, 1, 2, 0, 1, 2],
        };
        let d = design(y, vec![g]);
        let a = dense_loglik_oracle(&d, &[0.2], &[0.8], 1.3).unwrap();
        let b = dense_loglik_oracle(&d.permuted(&[5, 3, 1, 0, 4, 2]), &[0.2], &[0.8], 1.3).unwrap();
        assert!((a - b).abs() < 1e-12);
    }

    #[test]
    fn rejects_large_n() {
        let d = design(vec![0.0; DENSE_MAX_N + 1], Vec::new());
        assert!(matches!(
            dense_loglik_oracle(&d, &[0.0], &[], 1.0),
            Err(LmmError::TooLarge { .. })
        ));
    }
}
