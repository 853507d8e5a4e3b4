use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use super::design::{build_design, DesignLayout, DesignMatrices, ModelSpec};
use super::optimize::NelderMead;
use super::LmmError;
use crate::ingest::{AnalysisTable, ColumnRef};

const LN_2PI: f64 = 1.837_877_066_409_345_3;
const PERFECT_FIT_RTOL: f64 = 1e-12;

/// Optimizer settings for [`fit_ml_with`].
#[derive(Debug, Clone, PartialEq)]
pub struct FitOptions {
    pub max_iter: usize,
    /// Deviance spread across the simplex at convergence.
    pub ftol: f64,
    pub theta_start: f64,
    /// A fit with any variance ratio below this is flagged singular.
    pub singular_tol: f64,
}

impl Default for FitOptions {
    fn default() -> Self {
        Self {
            max_iter: 500,
            ftol: 1e-8,
            theta_start: 1.0,
            singular_tol: 1e-4,
        }
    }
}

/// Random intercepts of one grouping factor at the optimum.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RandomEffect {
    pub name: String,
    pub levels: Vec<String>,
    /// sigma_g / sigma.
    pub theta: f64,
    /// Conditional modes, one per level, in outcome units.
    pub blups: Vec<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PredictMode {
    /// `X beta`.
    Marginal,
    /// `X beta + Z b`, with unseen levels contributing 0.
    Conditional,
}

/// A linear mixed model fit by maximum likelihood.
#[derive(Debug, Clone, PartialEq)]
pub struct FittedModel {
    pub spec: ModelSpec,
    pub layout: DesignLayout,
    pub beta: Vec<f64>,
    pub beta_se: Vec<f64>,
    pub theta: Vec<f64>,
    pub sigma2: f64,
    pub random: Vec<RandomEffect>,
    pub loglik: f64,
    pub n_obs: usize,
    /// Fixed effects + one variance per grouping factor + residual variance.
    pub n_params: usize,
    pub converged: bool,
    pub singular: bool,
    pub iterations: usize,
    pub fingerprint: u64,
    pub dropped_columns: Vec<String>,
}

impl FittedModel {
    pub fn n_fixed(&self) -> usize {
        self.beta.len()
    }

    pub fn loglik(&self) -> f64 {
        self.loglik
    }

    pub fn aic(&self) -> f64 {
        aic(self.loglik, self.n_params)
    }

    pub fn column_names(&self) -> Vec<&str> {
        self.layout.column_names()
    }

    /// Estimate and standard error of a named fixed-effect column.
    pub fn coefficient(&self, name: &str) -> Option<(f64, f64)> {
        let j = self.layout.columns.iter().position(|c| c.name == name)?;
        Some((self.beta[j], self.beta_se[j]))
    }

    pub fn predict(&self, rows: &AnalysisTable, mode: PredictMode) -> Result<Vec<f64>, LmmError> {
        let p = self.n_fixed();
        let x = self.layout.materialize(rows)?;
        let mut out: Vec<f64> = x
            .chunks_exact(p.max(1))
            .take(rows.len())
            .map(|row| row.iter().zip(&self.beta).map(|(a, b)| a * b).sum())
            .collect();
        if mode == PredictMode::Conditional {
            for re in &self.random {
                let values = match rows.column(&re.name) {
                    Some(ColumnRef::Factor(v)) => v,
                    Some(ColumnRef::Numeric(_)) => return Err(LmmError::NotFactor(re.name.clone())),
                    None => return Err(LmmError::UnknownColumn(re.name.clone())),
                };
                let lookup: HashMap<&str, f64> = re
                    .levels
                    .iter()
                    .map(String::as_str)
                    .zip(re.blups.iter().copied())
                    .collect();
                for (o, v) in out.iter_mut().zip(values) {
                    *o += lookup.get(v).copied().unwrap_or(0.0);
                }
            }
        }
        Ok(out)
    }
}

pub fn aic(loglik: f64, n_params: usize) -> f64 {
    2.0 * n_params as f64 - 2.0 * loglik
}

/// Estimates at a fixed `theta` with beta and sigma^2 profiled out.
#[derive(Debug, Clone, PartialEq)]
pub struct ProfiledFit {
    pub theta: Vec<f64>,
    pub deviance: f64,
    pub loglik: f64,
    pub sigma2: f64,
    pub beta: Vec<f64>,
    pub beta_se: Vec<f64>,
    /// Conditional modes for all grouping factors, stacked in factor order.
    pub b: Vec<f64>,
}

/// Cross-products of `[Z X y]`, computed once per design.
///
/// Stored as the lower triangle of a dense `(q+p+1)` square matrix. For a
/// given theta the penalized system is this matrix scaled by
/// `diag(lambda, 1, 1)` on both sides, plus the identity on the `Z` block.
struct CrossProducts {
    n: usize,
    q: usize,
    p: usize,
    dim: usize,
    /// Factor owning each `Z` column.
    factor_of: Vec<usize>,
    m: Vec<f64>,
}

impl CrossProducts {
    fn new(d: &DesignMatrices) -> Self {
        let (n, p, q) = (d.n(), d.p(), d.q());
        let dim = q + p + 1;
        let mut offsets = Vec::with_capacity(d.groups.len());
        let mut factor_of = Vec::with_capacity(q);
        for (g, grp) in d.groups.iter().enumerate() {
            offsets.push(factor_of.len());
            factor_of.extend(std::iter::repeat_n(g, grp.q()));
        }
        let mut m = vec![0.0; dim * dim];
        let last = dim - 1;
        let mut zcols = vec![0usize; d.groups.len()];
        for i in 0..n {
            for (g, grp) in d.groups.iter().enumerate() {
                zcols[g] = offsets[g] + grp.index[i];
            }
            let x = d.x_row(i);
            let y = d.y[i];
            // Z blocks come first and in factor order, so zcols is increasing.
            for (a, &za) in zcols.iter().enumerate() {
                for &zb in &zcols[..=a] {
                    m[za * dim + zb] += 1.0;
                }
            }
            for (j, &xj) in x.iter().enumerate() {
                let row = (q + j) * dim;
                for &z in &zcols {
                    m[row + z] += xj;
                }
                for (k, &xk) in x[..=j].iter().enumerate() {
                    m[row + q + k] += xj * xk;
                }
            }
            let row = last * dim;
            for &z in &zcols {
                m[row + z] += y;
            }
            for (j, &xj) in x.iter().enumerate() {
                m[row + q + j] += xj * y;
            }
            m[row + last] += y * y;
        }
        Self {
            n,
            q,
            p,
            dim,
            factor_of,
            m,
        }
    }

    /// Lower Cholesky factor of the penalized augmented system at `theta`.
    fn factor(&self, theta: &[f64]) -> Result<Vec<f64>, LmmError> {
        let dim = self.dim;
        let lambda: Vec<f64> = (0..dim)
            .map(|i| if i < self.q { theta[self.factor_of[i]] } else { 1.0 })
            .collect();
        let mut a = vec![0.0; dim * dim];
        for i in 0..dim {
            for j in 0..=i {
                a[i * dim + j] = lambda[i] * lambda[j] * self.m[i * dim + j];
            }
            if i < self.q {
                a[i * dim + i] += 1.0;
            }
        }
        let yty = self.m[dim * dim - 1];
        match cholesky_lower(&mut a, dim) {
            // r^2 comes out of y'y by cancellation, so anything at rounding
            // level relative to y'y is an exact fit
            Ok(()) if a[dim * dim - 1].powi(2) <= PERFECT_FIT_RTOL * yty => Err(LmmError::PerfectFit),
            Ok(()) => Ok(a),
            Err(j) if j == dim - 1 => Err(LmmError::PerfectFit),
            Err(_) => Err(LmmError::NotPositiveDefinite),
        }
    }

    fn deviance(&self, theta: &[f64]) -> f64 {
        match self.factor(theta) {
            Ok(l) => self.deviance_from(&l).0,
            Err(_) => f64::INFINITY,
        }
    }

    /// (deviance, r^2) from a factor.
    fn deviance_from(&self, l: &[f64]) -> (f64, f64) {
        let dim = self.dim;
        let logdet: f64 = (0..self.q).map(|i| 2.0 * l[i * dim + i].ln()).sum();
        let r = l[dim * dim - 1];
        let r2 = r * r;
        let n = self.n as f64;
        (logdet + n * (1.0 + LN_2PI + (r2 / n).ln()), r2)
    }

    fn profile(&self, theta: &[f64]) -> Result<ProfiledFit, LmmError> {
        let l = self.factor(theta)?;
        let (dim, q, p) = (self.dim, self.q, self.p);
        let (deviance, r2) = self.deviance_from(&l);
        if !(r2 > 0.0) || !deviance.is_finite() {
            return Err(LmmError::PerfectFit);
        }
        let sigma2 = r2 / self.n as f64;

        // Solve L' s = l_y over the first q+p coordinates.
        let k = q + p;
        let ly = &l[(dim - 1) * dim..(dim - 1) * dim + k];
        let mut s = vec![0.0; k];
        for i in (0..k).rev() {
            let mut acc = ly[i];
            for (j, sj) in s.iter().enumerate().skip(i + 1) {
                acc -= l[j * dim + i] * sj;
            }
            s[i] = acc / l[i * dim + i];
        }
        let b = (0..q).map(|i| theta[self.factor_of[i]] * s[i]).collect();
        let beta = s[q..].to_vec();

        // var(beta) = sigma^2 (L_XX L_XX')^{-1}; diag via the rows of L_XX^{-1}.
        let mut linv = vec![0.0; p * p];
        for c in 0..p {
            for i in c..p {
                let mut acc = if i == c { 1.0 } else { 0.0 };
                for j in c..i {
                    acc -= l[(q + i) * dim + q + j] * linv[j * p + c];
                }
                linv[i * p + c] = acc / l[(q + i) * dim + q + i];
            }
        }
        let beta_se = (0..p)
            .map(|c| (sigma2 * (c..p).map(|i| linv[i * p + c].powi(2)).sum::<f64>()).sqrt())
            .collect();

        Ok(ProfiledFit {
            theta: theta.to_vec(),
            deviance,
            loglik: -0.5 * deviance,
            sigma2,
            beta,
            beta_se,
            b,
        })
    }
}

/// In-place lower Cholesky of a row-major square matrix (only the lower
/// triangle is read). Returns the failing pivot on breakdown.
fn cholesky_lower(a: &mut [f64], n: usize) -> Result<(), usize> {
    for j in 0..n {
        let (head, tail) = a.split_at_mut(j * n);
        let row_j = &mut tail[..n];
        for i in 0..j {
            let row_i = &head[i * n..i * n + i + 1];
            let dot: f64 = row_i[..i].iter().zip(&row_j[..i]).map(|(x, y)| x * y).sum();
            row_j[i] = (row_j[i] - dot) / row_i[i];
        }
        let d = row_j[j] - row_j[..j].iter().map(|v| v * v).sum::<f64>();
        if !(d > 0.0) || !d.is_finite() {
            return Err(j);
        }
        row_j[j] = d.sqrt();
        for v in &mut row_j[j + 1..] {
            *v = 0.0;
        }
    }
    Ok(())
}

/// Profiled ML fit at a fixed `theta` (one ratio per grouping factor).
pub fn profiled_loglik(design: &DesignMatrices, theta: &[f64]) -> Result<ProfiledFit, LmmError> {
    if theta.len() != design.groups.len() {
        return Err(LmmError::ParameterLength {
            expected: design.groups.len(),
            got: theta.len(),
        });
    }
    if theta.iter().any(|t| !(*t >= 0.0) || !t.is_finite()) {
        return Err(LmmError::InvalidTheta);
    }
    CrossProducts::new(design).profile(theta)
}

pub fn fit_ml(design: &DesignMatrices) -> Result<FittedModel, LmmError> {
    fit_ml_with(design, &FitOptions::default())
}

pub fn fit_ml_with(design: &DesignMatrices, options: &FitOptions) -> Result<FittedModel, LmmError> {
    let cp = CrossProducts::new(design);
    let k = design.groups.len();
    let (theta, converged, iterations) = if k == 0 {
        (Vec::new(), true, 0)
    } else {
        let nm = NelderMead {
            ftol: options.ftol,
            max_iter: options.max_iter,
            ..NelderMead::new(k)
        };
        let m = nm.minimize(|t| cp.deviance(t), &vec![options.theta_start; k]);
        if !m.fval.is_finite() {
            return Err(LmmError::NotPositiveDefinite);
        }
        (m.x, m.converged, m.iterations)
    };
    let prof = cp.profile(&theta)?;
    let singular = theta.iter().any(|t| *t < options.singular_tol);

    let mut offset = 0;
    let random = design
        .groups
        .iter()
        .zip(&theta)
        .map(|(g, &t)| {
            let blups = prof.b[offset..offset + g.q()].to_vec();
            offset += g.q();
            RandomEffect {
                name: g.name.clone(),
                levels: g.levels.clone(),
                theta: t,
                blups,
            }
        })
        .collect();

    Ok(FittedModel {
        spec: design.spec.clone(),
        layout: design.layout.clone(),
        beta: prof.beta,
        beta_se: prof.beta_se,
        theta,
        sigma2: prof.sigma2,
        random,
        loglik: prof.loglik,
        n_obs: design.n(),
        n_params: design.p() + k + 1,
        converged,
        singular,
        iterations,
        fingerprint: design.fingerprint(),
        dropped_columns: design.dropped.clone(),
    })
}

/// Build a full-rank design and fit it.
pub fn fit_table(table: &AnalysisTable, spec: &ModelSpec) -> Result<FittedModel, LmmError> {
    fit_ml(&build_design(table, spec)?)
}
