use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use super::{PredictError, Scaler, N_FEATURES};

/// Reciprocal condition number below which the normal equations are
/// abandoned for the SVD pseudo-inverse.
const RCOND_LIMIT: f64 = 1e-12;

/// `y = intercept + coefficients . z` on standardized features.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LinearModel {
    pub intercept: f64,
    pub coefficients: Vec<f64>,
}

impl LinearModel {
    /// Ordinary least squares through the normal equations, falling back to
    /// the pseudo-inverse of the design matrix when it is (near) singular.
    pub fn fit_ols(z: &[[f64; N_FEATURES]], y: &[f64]) -> Result<Self, PredictError> {
        if y.is_empty() {
            return Err(PredictError::DegenerateDesignMatrix("no targets"));
        }
        let n = z.len();
        let design = DMatrix::from_fn(n, N_FEATURES + 1, |i, j| if j == 0 { 1.0 } else { z[i][j - 1] });
        let target = DVector::from_column_slice(y);
        let gram = design.transpose() * &design;
        let rhs = design.transpose() * &target;

        let sv = gram.singular_values();
        let (smax, smin) = (sv.max(), sv.min());
        let beta = match gram.clone().cholesky() {
            Some(chol) if smax > 0.0 && smin / smax > RCOND_LIMIT => chol.solve(&rhs),
            _ => design
                .pseudo_inverse(1e-10 * smax.sqrt().max(1.0))
                .map_err(|_| PredictError::DegenerateDesignMatrix("pseudo-inverse failed"))?
                * &target,
        };
        Ok(Self { intercept: beta[0], coefficients: beta.iter().skip(1).copied().collect() })
    }

    /// Ridge regression with an unpenalized intercept: features and target
    /// are centered, `(Z'Z + alpha I)^-1 Z'y` gives the slopes and the
    /// intercept restores the means.
    pub fn fit_ridge(z: &[[f64; N_FEATURES]], y: &[f64], alpha: f64) -> Result<Self, PredictError> {
        if !(alpha >= 0.0 && alpha.is_finite()) {
            return Err(PredictError::BadHyperparameter { name: "alpha".into(), reason: format!("{alpha} must be >= 0") });
        }
        if y.is_empty() {
            return Err(PredictError::DegenerateDesignMatrix("no targets"));
        }
        let n = z.len() as f64;
        let mut z_mean = [0.0; N_FEATURES];
        for row in z {
            for j in 0..N_FEATURES {
                z_mean[j] += row[j] / n;
            }
        }
        let y_mean = y.iter().sum::<f64>() / n;
        let centered = DMatrix::from_fn(z.len(), N_FEATURES, |i, j| z[i][j] - z_mean[j]);
        let yc = DVector::from_iterator(y.len(), y.iter().map(|v| v - y_mean));
        let gram = centered.transpose() * &centered + DMatrix::identity(N_FEATURES, N_FEATURES) * alpha;
        let rhs = centered.transpose() * yc;
        let coef = match gram.clone().cholesky() {
            Some(chol) => chol.solve(&rhs),
            None => gram
                .pseudo_inverse(1e-12)
                .map_err(|_| PredictError::DegenerateDesignMatrix("pseudo-inverse failed"))?
                * rhs,
        };
        let intercept = y_mean - coef.iter().zip(&z_mean).map(|(c, m)| c * m).sum::<f64>();
        Ok(Self { intercept, coefficients: coef.iter().copied().collect() })
    }

    pub fn predict(&self, z: &[f64; N_FEATURES]) -> f64 {
        self.intercept + self.coefficients.iter().zip(z).map(|(c, v)| c * v).sum::<f64>()
    }

    /// Intercept and slopes in the original (unscaled) feature units.
    pub fn raw_coefficients(&self, scaler: &Scaler) -> (f64, Vec<f64>) {
        let mut intercept = self.intercept;
        let coefs = self
            .coefficients
            .iter()
            .zip(&scaler.params)
            .map(|(c, (mean, sd))| {
                intercept -= c * mean / sd;
                c / sd
            })
            .collect();
        (intercept, coefs)
    }

    pub fn coefficient_norm(&self) -> f64 {
        self.coefficients.iter().map(|c| c * c).sum::<f64>().sqrt()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::predictors::{fit, FeatureVector, Family, LearnedState, ModelSpec};

    fn design(n: usize) -> Vec<FeatureVector> {
        (0..n)
            .map(|i| {
                let a = 1.0 + ((i * 37) % 23) as f64 * 0.45;
                FeatureVector::new(a, [360, 540, 720, 1080, 1440, 2160][i % 6], [17, 22, 27, 32, 37, 42, 47][(i * 5) % 7])
            })
            .collect()
    }

    fn linear_state(p: &crate::predictors::TrainedPredictor) -> &LinearModel {
        match &p.learned_state {
            LearnedState::Linear(m) => m,
            _ => unreachable!(),
        }
    }

    #[test]
    fn ols_recovers_noiseless_line() {
        let x = design(40);
        let y: Vec<f64> = x.iter().map(|f| 3.0 * f.anchor_value + 2.0).collect();
        let p = fit(&ModelSpec::new(Family::Linear, 0), &x, &y).unwrap();
        let (b0, b) = linear_state(&p).raw_coefficients(&p.scaler);
        assert!((b[0] - 3.0).abs() < 1e-6 && (b0 - 2.0).abs() < 1e-6, "{b0} {b:?}");
        assert!(b[1].abs() < 1e-9 && b[2].abs() < 1e-9);
    }

    #[test]
    fn ols_residuals_are_orthogonal_to_the_design() {
        let x = design(50);
        let y: Vec<f64> = x
            .iter()
            .enumerate()
            .map(|(i, f)| f.anchor_value.sqrt() * f.height as f64 / 100.0 + ((i * 7919) % 13) as f64)
            .collect();
        let p = fit(&ModelSpec::new(Family::Linear, 0), &x, &y).unwrap();
        let yhat = p.predict(&x).unwrap();
        let mut dots = [0.0; N_FEATURES + 1];
        for (f, (yi, yh)) in x.iter().zip(y.iter().zip(&yhat)) {
            let z = p.scaler.transform(&f.to_array());
            let r = yi - yh;
            dots[0] += r;
            for j in 0..N_FEATURES {
                dots[j + 1] += z[j] * r;
            }
        }
        for d in dots {
            assert!(d.abs() < 1e-8, "{dots:?}");
        }
    }

    #[test]
    fn collinear_features_fall_back_to_pseudo_inverse() {
        // qp is constant and height is an affine function of the anchor
        let x: Vec<FeatureVector> = (0..10).map(|i| FeatureVector::new(i as f64, 360 + 10 * i as u32, 30)).collect();
        let y: Vec<f64> = x.iter().map(|f| 2.0 * f.anchor_value - 1.0).collect();
        let p = fit(&ModelSpec::new(Family::Linear, 0), &x, &y).unwrap();
        let yhat = p.predict(&x).unwrap();
        for (a, b) in y.iter().zip(&yhat) {
            assert!((a - b).abs() < 1e-8);
        }
        let m = linear_state(&p);
        assert!(m.coefficients.iter().all(|c| c.is_finite()));
        // minimum-norm solution splits weight evenly between the two copies
        assert!((m.coefficients[0] - m.coefficients[1]).abs() < 1e-8);
    }

    #[test]
    fn ridge_approaches_ols_as_alpha_vanishes() {
        let x = design(40);
        let y: Vec<f64> = x.iter().map(|f| 0.5 * f.anchor_value - 0.01 * f.height as f64 + 0.2 * f.qp as f64).collect();
        let ols = fit(&ModelSpec::new(Family::Linear, 0), &x, &y).unwrap();
        let ridge = fit(&ModelSpec::new(Family::Ridge, 0).with_float("alpha", 1e-9), &x, &y).unwrap();
        let (a, b) = (linear_state(&ols), linear_state(&ridge));
        for (c1, c2) in a.coefficients.iter().zip(&b.coefficients) {
            assert!((c1 - c2).abs() < 1e-4);
        }
        assert!((a.intercept - b.intercept).abs() < 1e-4);
    }

    #[test]
    fn ridge_shrinks_with_alpha() {
        let x = design(60);
        let y: Vec<f64> = x.iter().map(|f| f.anchor_value * f.qp as f64 / 10.0 + f.height as f64 / 500.0).collect();
        let norms: Vec<f64> = [0.1, 1.0, 10.0, 100.0]
            .iter()
            .map(|&a| {
                let p = fit(&ModelSpec::new(Family::Ridge, 0).with_float("alpha", a), &x, &y).unwrap();
                linear_state(&p).coefficient_norm()
            })
            .collect();
        assert!(norms.windows(2).all(|w| w[1] <= w[0]), "{norms:?}");
    }

    #[test]
    fn negative_alpha_rejected() {
        let x = design(10);
        let y = vec![1.0; 10];
        assert!(fit(&ModelSpec::new(Family::Ridge, 0).with_float("alpha", -1.0), &x, &y).is_err());
    }
}
