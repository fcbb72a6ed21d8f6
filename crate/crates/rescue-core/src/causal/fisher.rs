//! Fisher-z conditional independence test on partial correlations.

use nalgebra::DMatrix;
use statrs::distribution::{ContinuousCDF, Normal};

use super::data::ObservationalData;
use crate::{Error, Result};

/// Fisher-z test outcome.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FisherZ {
    pub partial_correlation: f64,
    pub statistic: f64,
    pub p_value: f64,
}

/// Tests independence of columns `a` and `b` given `conditioning` columns.
///
/// The partial correlation comes from the precision matrix of the involved
/// columns' correlation matrix; the statistic is
/// `sqrt(n - |cond| - 3) * atanh(r)` with a two-sided normal p-value.
/// A singular correlation submatrix is ridge-regularized with 1e-8.
pub fn fisher_z_test(
    data: &ObservationalData,
    a: usize,
    b: usize,
    conditioning: &[usize],
) -> Result<FisherZ> {
    let n = data.n_rows();
    let k = conditioning.len();
    if n <= k + 3 {
        return Err(Error::domain(format!(
            "fisher-z needs n > |conditioning| + 3, got n={n}, |cond|={k}"
        )));
    }
    let n_cols = data.columns().len();
    let mut involved = vec![a, b];
    involved.extend_from_slice(conditioning);
    for &idx in &involved {
        if idx >= n_cols {
            return Err(Error::domain(format!("column index {idx} out of range")));
        }
    }
    if a == b || conditioning.contains(&a) || conditioning.contains(&b) {
        return Err(Error::domain("test variables and conditioning set must be distinct"));
    }

    let r = partial_correlation(data, &involved)?;
    // atanh explodes at |r| = 1; clamping keeps a perfectly-correlated pair at
    // an astronomically significant statistic instead of NaN.
    let r_clamped = r.clamp(-1.0 + 1e-12, 1.0 - 1e-12);
    let statistic = ((n - k) as f64 - 3.0).sqrt() * 0.5 * ((1.0 + r_clamped) / (1.0 - r_clamped)).ln();
    let normal = Normal::new(0.0, 1.0).expect("unit normal");
    let p_value = 2.0 * (1.0 - normal.cdf(statistic.abs()));
    Ok(FisherZ {
        partial_correlation: r,
        statistic,
        p_value,
    })
}

/// Partial correlation of the first two columns in `involved` given the rest.
fn partial_correlation(data: &ObservationalData, involved: &[usize]) -> Result<f64> {
    let corr = correlation_matrix(data, involved);
    let dim = involved.len();
    let precision = match corr.clone().try_inverse() {
        Some(inv) if inv.iter().all(|v| v.is_finite()) => inv,
        _ => {
            log::warn!("singular correlation submatrix; applying 1e-8 ridge");
            let ridged = corr + DMatrix::identity(dim, dim) * 1e-8;
            ridged.try_inverse().ok_or_else(|| {
                Error::conditioning("correlation matrix not invertible even with ridge")
            })?
        }
    };
    let denom = (precision[(0, 0)] * precision[(1, 1)]).sqrt();
    if denom == 0.0 || !denom.is_finite() {
        return Err(Error::conditioning("degenerate precision matrix"));
    }
    Ok((-precision[(0, 1)] / denom).clamp(-1.0, 1.0))
}

fn correlation_matrix(data: &ObservationalData, involved: &[usize]) -> DMatrix<f64> {
    let n = data.n_rows();
    let k = involved.len();
    let cols: Vec<Vec<f64>> = involved.iter().map(|&i| data.column(i)).collect();
    let means: Vec<f64> = cols.iter().map(|c| c.iter().sum::<f64>() / n as f64).collect();
    let mut cov = DMatrix::zeros(k, k);
    for i in 0..k {
        for j in i..k {
            let mut acc = 0.0;
            for t in 0..n {
                acc += (cols[i][t] - means[i]) * (cols[j][t] - means[j]);
            }
            let v = acc / n as f64;
            cov[(i, j)] = v;
            cov[(j, i)] = v;
        }
    }
    let stds: Vec<f64> = (0..k).map(|i| cov[(i, i)].sqrt().max(1e-300)).collect();
    let mut corr = DMatrix::zeros(k, k);
    for i in 0..k {
        for j in 0..k {
            corr[(i, j)] = cov[(i, j)] / (stds[i] * stds[j]);
        }
    }
    corr
}
