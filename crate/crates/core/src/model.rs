//! The contaminated regression problem `y_i = x_iᵀβ + σ ε_i` with observations
//! `y_i(ω) = a_i + b_i ω`, its posterior kernel and the general-position
//! conditions on `(X, a, b)`.

use std::io::Read;
use std::path::Path;

use itertools::Itertools;
use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::heavytail::{CoefficientPrior, LptnDensity, ScalePrior};

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(try_from = "RawProblem", into = "RawProblem")]
pub struct RegressionProblem {
    n: usize,
    p: usize,
    /// Row-major `n × p` design.
    x: Vec<f64>,
    a: Vec<f64>,
    b: Vec<f64>,
    error: LptnDensity,
    coeff_prior: CoefficientPrior,
    scale_prior: ScalePrior,
}

#[derive(Serialize, Deserialize)]
struct RawProblem {
    x: Vec<Vec<f64>>,
    a: Vec<f64>,
    b: Vec<f64>,
    error: LptnDensity,
    coeff_prior: CoefficientPrior,
    scale_prior: ScalePrior,
}

impl TryFrom<RawProblem> for RegressionProblem {
    type Error = Error;

    fn try_from(r: RawProblem) -> Result<Self> {
        Self::new(r.x, r.a, r.b, r.error, r.coeff_prior, r.scale_prior)
    }
}

impl From<RegressionProblem> for RawProblem {
    fn from(p: RegressionProblem) -> Self {
        Self {
            x: p.rows().map(<[f64]>::to_vec).collect(),
            a: p.a,
            b: p.b,
            error: p.error,
            coeff_prior: p.coeff_prior,
            scale_prior: p.scale_prior,
        }
    }
}

/// Which observations enter a likelihood.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Subset {
    All,
    /// The non-outlying rows `K = {i : b_i = 0}`.
    Clean,
    Indices(Vec<usize>),
}

impl RegressionProblem {
    pub fn new(
        x: Vec<Vec<f64>>,
        a: Vec<f64>,
        b: Vec<f64>,
        error: LptnDensity,
        coeff_prior: CoefficientPrior,
        scale_prior: ScalePrior,
    ) -> Result<Self> {
        let n = x.len();
        if n == 0 {
            return Err(Error::invalid("design must have at least one row"));
        }
        let p = x[0].len();
        if p == 0 {
            return Err(Error::invalid("design must have at least one column"));
        }
        if let Some((i, row)) = x.iter().enumerate().find(|(_, r)| r.len() != p) {
            return Err(Error::invalid(format!("row {} has {} columns, expected {p}", i + 1, row.len())));
        }
        if a.len() != n || b.len() != n {
            return Err(Error::invalid(format!(
                "a and b must have length {n}, got {} and {}",
                a.len(),
                b.len()
            )));
        }
        for (i, row) in x.iter().enumerate() {
            if row.iter().chain([&a[i], &b[i]]).any(|v| !v.is_finite()) {
                return Err(Error::invalid(format!("row {} has a non-finite entry", i + 1)));
            }
        }
        coeff_prior.validate()?;
        scale_prior.validate()?;
        if coeff_prior.dim() != p {
            return Err(Error::invalid(format!(
                "coefficient prior has dimension {}, design has {p} columns",
                coeff_prior.dim()
            )));
        }
        Ok(Self {
            n,
            p,
            x: x.into_iter().flatten().collect(),
            a,
            b,
            error,
            coeff_prior,
            scale_prior,
        })
    }

    /// Five observations on an intercept-only design, the last of which
    /// drifts away: `a = (-1, -1/2, 0, 1/2, 1)`, `b = (0, 0, 0, 0, 1)`,
    /// `γ = 1`, a `t_1`-type coefficient prior and a half-Cauchy(1) scale prior.
    pub fn canonical() -> Self {
        Self::new(
            vec![vec![1.0]; 5],
            vec![-1.0, -0.5, 0.0, 0.5, 1.0],
            vec![0.0, 0.0, 0.0, 0.0, 1.0],
            LptnDensity::new(1.0).expect("valid"),
            CoefficientPrior::per_coordinate_t(vec![1.0]).expect("valid"),
            ScalePrior::half_cauchy(1.0).expect("valid"),
        )
        .expect("canonical problem is valid")
    }

    /// Reads columns named `x1, …, xp, a, b` (header required, any order) from a CSV file.
    pub fn from_csv(
        path: impl AsRef<Path>,
        error: LptnDensity,
        coeff_prior: CoefficientPrior,
        scale_prior: ScalePrior,
    ) -> Result<Self> {
        let file = std::fs::File::open(path)?;
        Self::from_csv_reader(file, error, coeff_prior, scale_prior)
    }

    pub fn from_csv_reader<R: Read>(
        reader: R,
        error: LptnDensity,
        coeff_prior: CoefficientPrior,
        scale_prior: ScalePrior,
    ) -> Result<Self> {
        let (x, a, b) = read_design(reader)?;
        Self::new(x, a, b, error, coeff_prior, scale_prior)
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn p(&self) -> usize {
        self.p
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.x[i * self.p..(i + 1) * self.p]
    }

    pub fn rows(&self) -> impl Iterator<Item = &[f64]> {
        self.x.chunks_exact(self.p)
    }

    pub fn a(&self) -> &[f64] {
        &self.a
    }

    pub fn b(&self) -> &[f64] {
        &self.b
    }

    pub fn error(&self) -> &LptnDensity {
        &self.error
    }

    pub fn coeff_prior(&self) -> &CoefficientPrior {
        &self.coeff_prior
    }

    pub fn scale_prior(&self) -> &ScalePrior {
        &self.scale_prior
    }

    /// `K`: rows with `b_i = 0`.
    pub fn clean_indices(&self) -> Vec<usize> {
        (0..self.n).filter(|&i| self.b[i] == 0.0).collect()
    }

    /// `L`: rows with `b_i ≠ 0`.
    pub fn outlier_indices(&self) -> Vec<usize> {
        (0..self.n).filter(|&i| self.b[i] != 0.0).collect()
    }

    /// The same problem with every `b_i` set to zero.
    pub fn without_outliers(&self) -> Self {
        Self {
            b: vec![0.0; self.n],
            ..self.clone()
        }
    }

    pub fn with_priors(&self, coeff_prior: CoefficientPrior, scale_prior: ScalePrior) -> Result<Self> {
        Self::new(
            self.rows().map(<[f64]>::to_vec).collect(),
            self.a.clone(),
            self.b.clone(),
            self.error,
            coeff_prior,
            scale_prior,
        )
    }

    /// Appends the `p` rows `x = e_k`, `(a, b) = (0, 0)`.
    pub fn augment_with_basis(&self) -> Self {
        let mut x = self.x.clone();
        let mut a = self.a.clone();
        let mut b = self.b.clone();
        for k in 0..self.p {
            x.extend((0..self.p).map(|j| if j == k { 1.0 } else { 0.0 }));
            a.push(0.0);
            b.push(0.0);
        }
        Self {
            n: self.n + self.p,
            x,
            a,
            b,
            ..self.clone()
        }
    }

    pub fn fitted(&self, i: usize, beta: &[f64]) -> f64 {
        self.row(i).iter().zip(beta).map(|(x, b)| x * b).sum()
    }

    fn resolve(&self, subset: &Subset) -> Result<Vec<usize>> {
        match subset {
            Subset::All => Ok((0..self.n).collect()),
            Subset::Clean => Ok(self.clean_indices()),
            Subset::Indices(idx) => {
                if let Some(&bad) = idx.iter().find(|&&i| i >= self.n) {
                    return Err(Error::invalid(format!("row index {bad} out of range for n = {}", self.n)));
                }
                if idx.iter().duplicates().next().is_some() {
                    return Err(Error::invalid("row subset has duplicate indices"));
                }
                Ok(idx.clone())
            }
        }
    }
}

fn is_x_column(name: &str) -> bool {
    name.strip_prefix('x')
        .and_then(|d| d.parse::<usize>().ok())
        .is_some_and(|j| j >= 1)
}

fn read_design<R: Read>(reader: R) -> Result<(Vec<Vec<f64>>, Vec<f64>, Vec<f64>)> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .comment(Some(b'#'))
        .from_reader(reader);
    let parse_err = |line: usize, message: String| Error::Parse { line, message };
    let header = rdr.headers().map_err(|e| parse_err(1, e.to_string()))?.clone();
    let names: Vec<String> = header.iter().map(str::to_string).collect();
    let find = |name: &str| {
        names
            .iter()
            .position(|n| n == name)
            .ok_or_else(|| parse_err(1, format!("missing column `{name}`")))
    };
    let (col_a, col_b) = (find("a")?, find("b")?);
    if let Some(other) = names.iter().find(|n| *n != "a" && *n != "b" && !is_x_column(n)) {
        return Err(parse_err(1, format!("unexpected column `{other}`; expected x1, ..., xp, a, b")));
    }
    let p = names.len() - 2;
    if p == 0 {
        return Err(parse_err(1, "missing column `x1`".into()));
    }
    let col_x = (1..=p).map(|j| find(&format!("x{j}"))).collect::<Result<Vec<_>>>()?;

    let (mut x, mut a, mut b) = (Vec::new(), Vec::new(), Vec::new());
    for rec in rdr.records() {
        let rec = rec.map_err(|e| {
            let line = e.position().map_or(0, |p| p.line() as usize);
            parse_err(line, e.to_string())
        })?;
        let line = rec.position().map_or(0, |p| p.line() as usize);
        if rec.len() != p + 2 {
            return Err(parse_err(line, format!("expected {} fields, found {}", p + 2, rec.len())));
        }
        let mut vals = Vec::with_capacity(p + 2);
        for (field, name) in rec.iter().zip(&names) {
            let v: f64 = field
                .parse()
                .map_err(|_| parse_err(line, format!("column {name}: cannot parse {field:?} as a number")))?;
            if !v.is_finite() {
                return Err(parse_err(line, format!("column {name}: value must be finite")));
            }
            vals.push(v);
        }
        a.push(vals[col_a]);
        b.push(vals[col_b]);
        x.push(col_x.iter().map(|&j| vals[j]).collect());
    }
    if x.is_empty() {
        return Err(parse_err(2, "no data rows".into()));
    }
    Ok((x, a, b))
}

pub fn observations_at(prob: &RegressionProblem, omega: f64) -> Result<Vec<f64>> {
    if !(omega.is_finite() && omega >= 0.0) {
        return Err(Error::invalid(format!("omega must be finite and >= 0, got {omega}")));
    }
    Ok(prob.a.iter().zip(&prob.b).map(|(a, b)| a + b * omega).collect())
}

fn check_point(prob: &RegressionProblem, beta: &[f64], sigma: f64) -> Result<()> {
    if beta.len() != prob.p {
        return Err(Error::invalid(format!("beta has length {}, expected {}", beta.len(), prob.p)));
    }
    if !(sigma.is_finite() && sigma > 0.0) {
        return Err(Error::invalid(format!("sigma must be finite and > 0, got {sigma}")));
    }
    Ok(())
}

/// `Σ_{i ∈ I} log{f((y_i(ω) - x_iᵀβ)/σ)/σ}`.
pub fn log_likelihood(prob: &RegressionProblem, beta: &[f64], sigma: f64, omega: f64, subset: &Subset) -> Result<f64> {
    check_point(prob, beta, sigma)?;
    let y = observations_at(prob, omega)?;
    let rows = prob.resolve(subset)?;
    Ok(rows
        .iter()
        .map(|&i| prob.error.ln_scaled(y[i] - prob.fitted(i, beta), sigma))
        .sum())
}

/// `log π(β, σ) + Σ_{i ∈ I} log{f((y_i(ω) - x_iᵀβ)/σ)/σ}`.
pub fn log_kernel(prob: &RegressionProblem, beta: &[f64], sigma: f64, omega: f64, subset: &Subset) -> Result<f64> {
    let ll = log_likelihood(prob, beta, sigma, omega, subset)?;
    Ok(ll + prob.coeff_prior.ln_pdf(beta, sigma) + prob.scale_prior.ln_pdf(sigma))
}

/// Posterior kernel at a fixed `ω`, prepared for repeated evaluation.
///
/// Outlying rows contribute `log f((y_i - x_iᵀβ)/σ) - log σ - log f(y_i)`,
/// so their terms stay of order one however large `ω` is. The dropped
/// constant `Σ log f(y_i)` is available from [`Kernel::ln_offset`].
#[derive(Debug, Clone)]
pub struct Kernel<'a> {
    prob: &'a RegressionProblem,
    y: Vec<f64>,
    clean: Vec<usize>,
    outliers: Vec<usize>,
    ln_f_y: Vec<f64>,
}

impl<'a> Kernel<'a> {
    /// Kernel over the rows in `subset`; rows of `L` among them are pre-normalized.
    pub fn new(prob: &'a RegressionProblem, omega: f64, subset: &Subset) -> Result<Self> {
        let y = observations_at(prob, omega)?;
        let rows = prob.resolve(subset)?;
        let (outliers, clean): (Vec<usize>, Vec<usize>) = rows.into_iter().partition(|&i| prob.b[i] != 0.0);
        let ln_f_y = outliers.iter().map(|&i| prob.error.ln_pdf(y[i])).collect();
        Ok(Self {
            prob,
            y,
            clean,
            outliers,
            ln_f_y,
        })
    }

    /// Every row at `ω`.
    pub fn full(prob: &'a RegressionProblem, omega: f64) -> Result<Self> {
        Self::new(prob, omega, &Subset::All)
    }

    /// The leave-outliers-out kernel over `K`; it does not depend on `ω`.
    pub fn clean(prob: &'a RegressionProblem) -> Self {
        Self::new(prob, 0.0, &Subset::Clean).expect("K is a valid subset")
    }

    pub fn problem(&self) -> &'a RegressionProblem {
        self.prob
    }

    pub fn observations(&self) -> &[f64] {
        &self.y
    }

    pub fn clean_rows(&self) -> &[usize] {
        &self.clean
    }

    pub fn outlier_rows(&self) -> &[usize] {
        &self.outliers
    }

    /// `Σ_{i ∈ L ∩ I} log f(y_i)`, the constant removed by pre-normalization.
    pub fn ln_offset(&self) -> f64 {
        self.ln_f_y.iter().sum()
    }

    /// The pre-normalized log-kernel; `-inf` for `σ <= 0`.
    #[inline]
    pub fn ln_eval(&self, beta: &[f64], sigma: f64) -> f64 {
        if sigma <= 0.0 {
            return f64::NEG_INFINITY;
        }
        let prob = self.prob;
        let d = &prob.error;
        let mut acc = prob.coeff_prior.ln_pdf(beta, sigma) + prob.scale_prior.ln_pdf(sigma);
        for &i in &self.clean {
            acc += d.ln_scaled(self.y[i] - prob.fitted(i, beta), sigma);
        }
        for (&i, lf) in self.outliers.iter().zip(&self.ln_f_y) {
            acc += d.ln_scaled(self.y[i] - prob.fitted(i, beta), sigma) - lf;
        }
        acc
    }

    /// `log{f((y_i - x_iᵀβ)/σ)/σ} - log f(y_i)` for each outlying row.
    pub fn outlier_log_ratios(&self, beta: &[f64], sigma: f64) -> Vec<f64> {
        let d = &self.prob.error;
        self.outliers
            .iter()
            .zip(&self.ln_f_y)
            .map(|(&i, lf)| d.ln_scaled(self.y[i] - self.prob.fitted(i, beta), sigma) - lf)
            .collect()
    }

    /// Whether every outlying residual satisfies `|y_i - x_iᵀβ| >= |y_i|/2`.
    pub fn in_near_region(&self, beta: &[f64]) -> bool {
        self.outliers
            .iter()
            .all(|&i| (self.y[i] - self.prob.fitted(i, beta)).abs() >= 0.5 * self.y[i].abs())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct ConditionReport {
    pub clean: usize,
    pub outliers: usize,
    pub p: usize,
    /// `|K| - |L| - p`.
    pub margin: i64,
    pub holds: bool,
}

pub fn robustness_condition(prob: &RegressionProblem) -> ConditionReport {
    let l = prob.outlier_indices().len();
    let k = prob.n - l;
    let margin = k as i64 - l as i64 - prob.p as i64;
    ConditionReport {
        clean: k,
        outliers: l,
        p: prob.p,
        margin,
        holds: margin >= 0,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum GpCondition {
    /// Every `p` design rows are linearly independent.
    I,
    /// Every `p + 1` rows of `(X, a)` are linearly independent.
    Ii,
    /// Every `p + 1` rows of `(X, b)` are linearly independent unless `b` vanishes on them.
    Iii,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct GpWitness {
    pub condition: GpCondition,
    /// Zero-based row indices, increasing.
    pub rows: Vec<usize>,
}

#[derive(Debug, Clone, Serialize)]
pub struct GeneralPositionReport {
    pub cond_i: bool,
    pub cond_ii: bool,
    pub cond_iii: bool,
    pub witnesses: Vec<GpWitness>,
    /// Violations beyond [`WITNESS_CAP`] are counted but not listed.
    pub violations: usize,
}

impl GeneralPositionReport {
    pub fn holds(&self) -> bool {
        self.cond_i && self.cond_ii && self.cond_iii
    }
}

pub const SUBSET_BUDGET: u128 = 1_000_000;
pub const WITNESS_CAP: usize = 64;
pub const DEFAULT_RANK_TOL: f64 = 1e-9;

pub(crate) fn binomial(n: usize, k: usize) -> u128 {
    if k > n {
        return 0;
    }
    let k = k.min(n - k);
    (0..k).fold(1u128, |acc, j| acc * (n - j) as u128 / (j + 1) as u128)
}

/// Smallest singular value above `tol` times the largest.
pub fn is_invertible(m: &DMatrix<f64>, tol: f64) -> bool {
    let sv = m.singular_values();
    let max = sv.max();
    max > 0.0 && sv.min() > tol * max
}

/// Checks conditions (i)-(iii) on explicit rows `z`, columns `a` and `b`.
pub fn general_position_of(z: &[Vec<f64>], a: &[f64], b: &[f64], tol: f64) -> Result<GeneralPositionReport> {
    let n = z.len();
    let p = z.first().map_or(0, Vec::len);
    if n == 0 || p == 0 || a.len() != n || b.len() != n || z.iter().any(|r| r.len() != p) {
        return Err(Error::invalid("inconsistent dimensions for general-position check"));
    }
    if !(tol > 0.0 && tol < 1.0) {
        return Err(Error::invalid(format!("rank tolerance must lie in (0, 1), got {tol}")));
    }
    let needed = binomial(n, p).max(binomial(n, p + 1));
    if needed > SUBSET_BUDGET {
        return Err(Error::Budget {
            subsets: needed,
            budget: SUBSET_BUDGET,
        });
    }

    let mut witnesses = Vec::new();
    let mut violations = 0usize;
    let mut flags = [true; 3];
    let mut record = |cond: GpCondition, rows: Vec<usize>| {
        flags[cond as usize] = false;
        violations += 1;
        if witnesses.len() < WITNESS_CAP {
            witnesses.push(GpWitness { condition: cond, rows });
        }
    };

    if n >= p {
        for rows in (0..n).combinations(p) {
            let m = DMatrix::from_fn(p, p, |r, c| z[rows[r]][c]);
            if !is_invertible(&m, tol) {
                record(GpCondition::I, rows);
            }
        }
    }
    if n > p {
        for rows in (0..n).combinations(p + 1) {
            let with = |col: &[f64]| DMatrix::from_fn(p + 1, p + 1, |r, c| if c < p { z[rows[r]][c] } else { col[rows[r]] });
            if !is_invertible(&with(a), tol) {
                record(GpCondition::Ii, rows.clone());
            }
            if rows.iter().any(|&i| b[i] != 0.0) && !is_invertible(&with(b), tol) {
                record(GpCondition::Iii, rows);
            }
        }
    }
    Ok(GeneralPositionReport {
        cond_i: flags[0],
        cond_ii: flags[1],
        cond_iii: flags[2],
        witnesses,
        violations,
    })
}

pub fn general_position(prob: &RegressionProblem, tol: f64) -> Result<GeneralPositionReport> {
    let z: Vec<Vec<f64>> = prob.rows().map(<[f64]>::to_vec).collect();
    general_position_of(&z, &prob.a, &prob.b, tol)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn simple(x: Vec<Vec<f64>>, a: Vec<f64>, b: Vec<f64>) -> RegressionProblem {
        let p = x[0].len();
        RegressionProblem::new(
            x,
            a,
            b,
            LptnDensity::new(1.0).unwrap(),
            CoefficientPrior::per_coordinate_t(vec![1.0; p]).unwrap(),
            ScalePrior::half_cauchy(1.0).unwrap(),
        )
        .unwrap()
    }

    #[test]
    fn observations() {
        let prob = simple(vec![vec![1.0], vec![1.0]], vec![1.0, 2.0], vec![0.0, 1.0]);
        assert_eq!(observations_at(&prob, 0.0).unwrap(), vec![1.0, 2.0]);
        assert_eq!(observations_at(&prob, 1e3).unwrap(), vec![1.0, 1002.0]);
        assert_eq!(observations_at(&prob.without_outliers(), 1e9).unwrap(), vec![1.0, 2.0]);
        assert!(observations_at(&prob, -1.0).is_err());
    }

    #[test]
    fn single_residual_at_zero() {
        let prob = simple(vec![vec![1.0]], vec![0.0], vec![0.0]);
        let ll = log_likelihood(&prob, &[0.0], 1.0, 0.0, &Subset::All).unwrap();
        assert!((ll - 0.5f64.ln()).abs() < 1e-15);
        assert!(log_kernel(&prob, &[0.0], 0.0, 0.0, &Subset::All).is_err());
        assert!(log_kernel(&prob, &[0.0], -1.0, 0.0, &Subset::All).is_err());
    }

    #[test]
    fn kernel_matches_term_by_term_sum() {
        let prob = RegressionProblem::canonical();
        let (beta, sigma, omega) = ([0.3], 0.8f64, 50.0);
        let d = LptnDensity::new(1.0).unwrap();
        let y = [-1.0, -0.5, 0.0, 0.5, 51.0];
        let prior = (0.5f64).ln() - sigma.ln() - 2.0 * (0.3f64 / sigma).ln_1p();
        let scale = (2.0 / std::f64::consts::PI).ln() - (sigma * sigma).ln_1p();
        let lik: f64 = y.iter().map(|yi| (d.pdf((yi - 0.3) / sigma) / sigma).ln()).sum();
        let want = prior + scale + lik;
        let got = log_kernel(&prob, &beta, sigma, omega, &Subset::All).unwrap();
        assert!((got - want).abs() < 1e-12, "{got} vs {want}");
        let k = Kernel::full(&prob, omega).unwrap();
        assert!((k.ln_eval(&beta, sigma) + k.ln_offset() - want).abs() < 1e-12);
    }

    #[test]
    fn full_kernel_splits_into_clean_and_outlier_terms() {
        let prob = RegressionProblem::canonical();
        let all = log_kernel(&prob, &[0.1], 1.3, 1e6, &Subset::All).unwrap();
        let clean = log_kernel(&prob, &[0.1], 1.3, 1e6, &Subset::Clean).unwrap();
        let outl = log_likelihood(&prob, &[0.1], 1.3, 1e6, &Subset::Indices(vec![4])).unwrap();
        assert!((all - clean - outl).abs() < 1e-12);
    }

    #[test]
    fn clean_equals_all_without_outliers() {
        let prob = RegressionProblem::canonical().without_outliers();
        let all = log_kernel(&prob, &[0.2], 0.5, 3.0, &Subset::All).unwrap();
        let clean = log_kernel(&prob, &[0.2], 0.5, 3.0, &Subset::Clean).unwrap();
        assert_eq!(all, clean);
    }

    #[test]
    fn condition_margins() {
        assert_eq!(robustness_condition(&RegressionProblem::canonical()).margin, 2);
        assert!(robustness_condition(&RegressionProblem::canonical()).holds);
        let p2 = simple(vec![vec![1.0, 0.0]; 4], vec![0.0; 4], vec![0.0, 0.0, 1.0, 1.0]);
        let c = robustness_condition(&p2);
        assert_eq!((c.margin, c.holds), (-2, false));
        let p1 = simple(vec![vec![1.0]; 3], vec![0.0; 3], vec![0.0, 0.0, 1.0]);
        let c = robustness_condition(&p1);
        assert_eq!((c.margin, c.holds), (0, true));
    }

    #[test]
    fn general_position_examples() {
        let prob = simple(vec![vec![1.0], vec![2.0], vec![3.0]], vec![0.0, 1.0, 2.0], vec![0.0, 0.0, 1.0]);
        let r = general_position(&prob, DEFAULT_RANK_TOL).unwrap();
        assert!(r.cond_i && r.cond_ii && r.cond_iii, "{r:?}");

        let prob = simple(vec![vec![1.0]; 3], vec![0.0, 1.0, 1.0], vec![0.0, 0.0, 1.0]);
        let r = general_position(&prob, DEFAULT_RANK_TOL).unwrap();
        assert!(r.cond_i);
        assert!(!r.cond_ii);
        assert!(r.witnesses.contains(&GpWitness {
            condition: GpCondition::Ii,
            rows: vec![1, 2]
        }));

        let prob = simple(
            vec![vec![1.0, 2.0], vec![1.0, 2.0], vec![0.0, 1.0]],
            vec![0.0, 1.0, 2.0],
            vec![0.0, 0.0, 1.0],
        );
        let r = general_position(&prob, DEFAULT_RANK_TOL).unwrap();
        assert!(!r.cond_i);
        assert_eq!(r.witnesses[0].rows, vec![0, 1]);
    }

    #[test]
    fn condition_iii_exempts_zero_b_subsets() {
        // (x, b) rows (1,0), (2,0) are dependent but b vanishes on them.
        let r = general_position_of(&[vec![1.0], vec![2.0], vec![3.0]], &[0.0, 1.0, 3.0], &[0.0, 0.0, 1.0], 1e-9).unwrap();
        assert!(r.cond_iii);
    }

    #[test]
    fn budget_is_enforced() {
        let z = vec![vec![1.0, 0.5, 0.25]; 200];
        let v = vec![0.0; 200];
        assert!(matches!(general_position_of(&z, &v, &v, 1e-9), Err(Error::Budget { .. })));
    }

    #[test]
    fn csv_round_trip_and_errors() {
        let d = LptnDensity::new(1.0).unwrap();
        let cp = CoefficientPrior::per_coordinate_t(vec![1.0, 1.0]).unwrap();
        let sp = ScalePrior::half_cauchy(1.0).unwrap();
        let ok = "x1,x2,a,b\n1,0,0.5,0\n0,1,-0.5,0\n1,1,2,1\n";
        let prob = RegressionProblem::from_csv_reader(ok.as_bytes(), d, cp.clone(), sp).unwrap();
        assert_eq!((prob.n(), prob.p()), (3, 2));
        assert_eq!(prob.outlier_indices(), vec![2]);
        assert_eq!(prob.row(2), &[1.0, 1.0]);

        let bad = "x1,x2,a,b\n1,0,0.5,0\n0,oops,-0.5,0\n";
        match RegressionProblem::from_csv_reader(bad.as_bytes(), d, cp.clone(), sp) {
            Err(Error::Parse { line, .. }) => assert_eq!(line, 3),
            other => panic!("{other:?}"),
        }
        let bad_header = "x1,x3,a,b\n1,0,0.5,0\n";
        assert!(matches!(
            RegressionProblem::from_csv_reader(bad_header.as_bytes(), d, cp.clone(), sp),
            Err(Error::Parse { line: 1, message }) if message.contains("`x2`")
        ));
        let no_b = "x1,x2,a\n1,0,0.5\n";
        assert!(matches!(
            RegressionProblem::from_csv_reader(no_b.as_bytes(), d, cp, sp),
            Err(Error::Parse { line: 1, message }) if message.contains("`b`")
        ));
    }

    #[test]
    fn augmentation_adds_basis_rows() {
        let prob = RegressionProblem::canonical().augment_with_basis();
        assert_eq!(prob.n(), 6);
        assert_eq!(prob.row(5), &[1.0]);
        assert_eq!((prob.a()[5], prob.b()[5]), (0.0, 0.0));
    }

    #[test]
    fn serde_round_trip() {
        let prob = RegressionProblem::canonical();
        let s = serde_json::to_string(&prob).unwrap();
        let back: RegressionProblem = serde_json::from_str(&s).unwrap();
        assert_eq!(back.a(), prob.a());
        assert_eq!(back.row(3), prob.row(3));
    }
}
