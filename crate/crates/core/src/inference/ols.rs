//! Least squares with classical standard errors.
//!
//! The solver is a Householder QR that processes columns in the order they
//! were added and drops any column whose residual norm falls below the rank
//! tolerance, so collinear adjustment indicators are removed deterministically
//! (later-added columns drop first) and reported by name.

use crate::error::{Error, Result};

/// Rank tolerance, relative to the largest original column norm.
pub const RANK_TOLERANCE: f64 = 1e-10;

/// A named-column design matrix with `n` rows.
#[derive(Clone, Debug)]
pub struct DesignMatrix {
    n: usize,
    names: Vec<String>,
    cols: Vec<Vec<f64>>,
}

impl DesignMatrix {
    pub fn new(n: usize) -> Self {
        DesignMatrix {
            n,
            names: Vec::new(),
            cols: Vec::new(),
        }
    }

    /// Convenience: intercept plus the treatment assignments, the ANOVA design.
    pub fn intercept_and_treatment(z: &[u8]) -> Self {
        let mut x = DesignMatrix::new(z.len());
        x.push_column("intercept", vec![1.0; z.len()]).expect("length matches");
        x.push_column("treatment", z.iter().map(|&v| f64::from(v)).collect())
            .expect("length matches");
        x
    }

    pub fn push_column(&mut self, name: impl Into<String>, values: Vec<f64>) -> Result<()> {
        if values.len() != self.n {
            return Err(Error::InvalidInput(format!(
                "column has {} rows, design matrix has {}",
                values.len(),
                self.n
            )));
        }
        self.names.push(name.into());
        self.cols.push(values);
        Ok(())
    }

    pub fn n_rows(&self) -> usize {
        self.n
    }

    pub fn n_cols(&self) -> usize {
        self.cols.len()
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }
}

/// A fitted least-squares model.
#[derive(Clone, Debug)]
pub struct OlsFit {
    /// Names of the retained columns, in design order.
    pub names: Vec<String>,
    pub coefficients: Vec<f64>,
    pub stderrs: Vec<f64>,
    pub residual_df: usize,
    /// Columns removed for rank deficiency, in drop order.
    pub dropped_columns: Vec<String>,
    pub rss: f64,
    pub sigma2: f64,
}

impl OlsFit {
    fn position(&self, name: &str) -> Option<usize> {
        self.names.iter().position(|n| n == name)
    }

    pub fn coef(&self, name: &str) -> Option<f64> {
        self.position(name).map(|i| self.coefficients[i])
    }

    pub fn stderr(&self, name: &str) -> Option<f64> {
        self.position(name).map(|i| self.stderrs[i])
    }
}

/// Least-squares fit of `y` on the design matrix, with homoskedastic
/// standard errors from the residual variance.
pub fn ols_fit(x: &DesignMatrix, y: &[f64]) -> Result<OlsFit> {
    let n = x.n_rows();
    let k0 = x.n_cols();
    if y.len() != n {
        return Err(Error::InvalidInput(format!(
            "response has {} rows, design matrix has {n}",
            y.len()
        )));
    }
    if k0 == 0 {
        return Err(Error::InvalidInput("design matrix has no columns".to_string()));
    }

    // Column-major working copy; reflectors accumulate in place below the
    // diagonal of their pivot column (LAPACK layout, v[r] = 1 implicit).
    let mut a: Vec<f64> = Vec::with_capacity(n * k0);
    for col in &x.cols {
        a.extend_from_slice(col);
    }
    let mut qty = y.to_vec();

    let max_norm = x
        .cols
        .iter()
        .map(|col| col.iter().map(|v| v * v).sum::<f64>().sqrt())
        .fold(0.0, f64::max);
    let tol = RANK_TOLERANCE * max_norm;

    let mut retained: Vec<usize> = Vec::with_capacity(k0);
    let mut dropped: Vec<String> = Vec::new();

    for j in 0..k0 {
        let r = retained.len();
        let colj = j * n;
        let sigma = a[colj + r..colj + n]
            .iter()
            .map(|v| v * v)
            .sum::<f64>()
            .sqrt();
        if r == n || sigma <= tol {
            dropped.push(x.names[j].clone());
            continue;
        }
        let x0 = a[colj + r];
        let alpha = if x0 >= 0.0 { -sigma } else { sigma };
        let v0 = x0 - alpha;
        for i in (r + 1)..n {
            a[colj + i] /= v0;
        }
        let tau = -v0 / alpha;
        a[colj + r] = alpha;

        // Apply H = I - tau v v' to the trailing columns and to qty.
        for jj in (j + 1)..k0 {
            let c = jj * n;
            let mut dot = a[c + r];
            for i in (r + 1)..n {
                dot += a[colj + i] * a[c + i];
            }
            let w = tau * dot;
            a[c + r] -= w;
            for i in (r + 1)..n {
                a[c + i] -= w * a[colj + i];
            }
        }
        let mut dot = qty[r];
        for i in (r + 1)..n {
            dot += a[colj + i] * qty[i];
        }
        let w = tau * dot;
        qty[r] -= w;
        for i in (r + 1)..n {
            qty[i] -= w * a[colj + i];
        }

        retained.push(j);
    }

    let k = retained.len();
    if k == 0 {
        return Err(Error::UnidentifiableModel(
            "every column was dropped as rank deficient".to_string(),
        ));
    }
    let residual_df = n - k;
    if residual_df < 1 {
        return Err(Error::UnidentifiableModel(format!(
            "{n} rows cannot identify {k} coefficients with a residual degree of freedom"
        )));
    }

    let r_elem = |s: usize, t: usize| a[retained[t] * n + s];

    // Back substitution for the coefficients.
    let mut beta = vec![0.0; k];
    for s in (0..k).rev() {
        let mut acc = qty[s];
        for t in (s + 1)..k {
            acc -= r_elem(s, t) * beta[t];
        }
        beta[s] = acc / r_elem(s, s);
    }

    let rss: f64 = qty[k..n].iter().map(|v| v * v).sum();
    let sigma2 = rss / residual_df as f64;

    // (X'X)^{-1} = R^{-1} R^{-T}; invert R column by column.
    let mut rinv = vec![0.0; k * k];
    for t in 0..k {
        rinv[t + t * k] = 1.0 / r_elem(t, t);
        for s in (0..t).rev() {
            let mut acc = 0.0;
            for m in (s + 1)..=t {
                acc += r_elem(s, m) * rinv[m + t * k];
            }
            rinv[s + t * k] = -acc / r_elem(s, s);
        }
    }
    let stderrs: Vec<f64> = (0..k)
        .map(|jrow| {
            let xtx_inv_diag: f64 = (jrow..k).map(|t| rinv[jrow + t * k].powi(2)).sum();
            (sigma2 * xtx_inv_diag).sqrt()
        })
        .collect();

    Ok(OlsFit {
        names: retained.iter().map(|&j| x.names[j].clone()).collect(),
        coefficients: beta,
        stderrs,
        residual_df,
        dropped_columns: dropped,
        rss,
        sigma2,
    })
}
