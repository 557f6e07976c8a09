use alloc::vec;
use alloc::vec::Vec;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::dataset::Window;
use crate::error::{Error, Result};

/// Linear autoregression `x_t = a0 + Σ a_i x_{t-i}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ArModel {
    /// `[a0, a1, ..., a_rho]`; `a_i` multiplies the value `i` steps back.
    pub coeffs: Vec<f64>,
}

impl ArModel {
    pub fn rho(&self) -> usize {
        self.coeffs.len() - 1
    }

    /// `window` is oldest first, as in [`Window::inputs`].
    pub fn predict(&self, window: &[f64]) -> Result<f64> {
        let rho = self.rho();
        if window.len() != rho {
            return Err(Error::WrongLength {
                expected: rho,
                found: window.len(),
            });
        }
        Ok(self.coeffs[0]
            + (1..=rho)
                .map(|i| self.coeffs[i] * window[rho - i])
                .sum::<f64>())
    }
}

/// Minimum-norm least squares through the eigendecomposition of the Gram
/// matrix, plus one step of iterative refinement. Directions whose eigenvalue
/// falls below a relative tolerance are treated as null.
fn min_norm_solve(x: &DMatrix<f64>, y: &DVector<f64>) -> Result<DVector<f64>> {
    let (n, p) = x.shape();
    let eig = (x.transpose() * x).symmetric_eigen();
    let top = eig.eigenvalues.iter().fold(0.0f64, |m, &l| m.max(l));
    let tol = top * 1e-13 * n.max(p) as f64;
    let apply = |rhs: &DVector<f64>| -> DVector<f64> {
        let xtr = x.transpose() * rhs;
        let mut out = DVector::zeros(p);
        for k in 0..p {
            let l = eig.eigenvalues[k];
            if l > tol {
                let v = eig.eigenvectors.column(k);
                out += v * (v.dot(&xtr) / l);
            }
        }
        out
    };
    if !(top > 0.0) {
        return if top == 0.0 {
            Ok(DVector::zeros(p))
        } else {
            Err(Error::SingularDesign("non-finite design matrix".into()))
        };
    }
    let mut beta = apply(y);
    let resid = y - x * &beta;
    beta += apply(&resid);
    Ok(beta)
}

/// Least squares with an unpenalized intercept. Rank-deficient designs get the
/// minimum-norm slope vector, so a constant series yields `a0 = c` and zero
/// slopes.
pub fn fit_ar(windows: &[Window], rho: usize) -> Result<ArModel> {
    if rho == 0 {
        return Err(Error::InvalidArgument("lookback must be at least 1".into()));
    }
    if windows.is_empty() {
        return Err(Error::NoTrainingData(None));
    }
    for w in windows {
        if w.inputs.len() != rho {
            return Err(Error::WrongLength {
                expected: rho,
                found: w.inputs.len(),
            });
        }
    }
    let n = windows.len();
    let nf = n as f64;
    // column i - 1 holds lag i
    let mut mean_x = vec![0.0; rho];
    for w in windows {
        for i in 1..=rho {
            mean_x[i - 1] += w.inputs[rho - i] / nf;
        }
    }
    let mean_y = windows.iter().map(|w| w.target).sum::<f64>() / nf;
    let x = DMatrix::from_fn(n, rho, |r, c| windows[r].inputs[rho - 1 - c] - mean_x[c]);
    let y = DVector::from_iterator(n, windows.iter().map(|w| w.target - mean_y));

    let beta = min_norm_solve(&x, &y)?;
    let a0 = mean_y - beta.iter().zip(&mean_x).map(|(b, m)| b * m).sum::<f64>();
    let mut coeffs = Vec::with_capacity(rho + 1);
    coeffs.push(a0);
    coeffs.extend(beta.iter());
    if coeffs.iter().any(|c| !c.is_finite()) {
        return Err(Error::SingularDesign("non-finite AR coefficients".into()));
    }
    Ok(ArModel { coeffs })
}

/// Mean of the last `rho` values.
pub fn predict_rw(values: &[f64], rho: usize) -> Result<f64> {
    if values.len() != rho || rho == 0 {
        return Err(Error::WrongLength {
            expected: rho,
            found: values.len(),
        });
    }
    Ok(values.iter().sum::<f64>() / rho as f64)
}
