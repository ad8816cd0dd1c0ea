//! Brute-force checks of the covering and product-bound lemmas on small
//! instances.
//!
//! Covering: for `c_i = a_i + b_i ω`, every `β` must keep all but at most `p`
//! of the shifted residuals `|c_i - z_iᵀβ|` above `ε`. A `β` violates this
//! exactly when at least `p + 1` residuals are within `ε`. For `p = 1` each
//! `{β : |c_i - z_i β| <= ε}` is an interval and the check is exact; for
//! larger `p` it samples, which can only falsify.
//!
//! Product bound: `Π_i 1/(1 + |w_i - z_iᵀβ|) <= (1 + δ‖β‖)^-(m-p+1)` for
//! `‖β‖ >= R`, checked on sampled `β`.

use std::path::Path;

use itertools::Itertools;
use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::model::{general_position_of, is_invertible, GpCondition, DEFAULT_RANK_TOL};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LemmaInstance {
    #[serde(default)]
    pub name: String,
    pub p: usize,
    pub m: usize,
    /// `m` rows of length `p`.
    pub z: Vec<Vec<f64>>,
    pub a: Vec<f64>,
    pub b: Vec<f64>,
    /// Shifts for the product bound; `a` is used when absent.
    #[serde(default)]
    pub w: Option<Vec<f64>>,
}

impl LemmaInstance {
    pub fn new(name: impl Into<String>, z: Vec<Vec<f64>>, a: Vec<f64>, b: Vec<f64>, w: Option<Vec<f64>>) -> Result<Self> {
        let inst = Self {
            name: name.into(),
            p: z.first().map_or(0, Vec::len),
            m: z.len(),
            z,
            a,
            b,
            w,
        };
        inst.validate()?;
        Ok(inst)
    }

    pub fn validate(&self) -> Result<()> {
        if self.p == 0 || self.m == 0 {
            return Err(Error::invalid("instance needs at least one row and one column"));
        }
        if self.z.len() != self.m || self.z.iter().any(|r| r.len() != self.p) {
            return Err(Error::invalid(format!("z must be {} x {}", self.m, self.p)));
        }
        if self.a.len() != self.m || self.b.len() != self.m {
            return Err(Error::invalid(format!("a and b must have length {}", self.m)));
        }
        if self.w.as_ref().is_some_and(|w| w.len() != self.m) {
            return Err(Error::invalid(format!("w must have length {}", self.m)));
        }
        let all = self
            .z
            .iter()
            .flatten()
            .chain(&self.a)
            .chain(&self.b)
            .chain(self.w.iter().flatten());
        if all.into_iter().any(|v| !v.is_finite()) {
            return Err(Error::invalid("instance entries must be finite"));
        }
        Ok(())
    }

    /// Appends the `p` unit rows with `(a, b) = (0, 0)`, the device that lets
    /// the covering lemma absorb the coefficient prior.
    pub fn augmented(&self) -> Self {
        let mut out = self.clone();
        for k in 0..self.p {
            out.z.push((0..self.p).map(|j| if j == k { 1.0 } else { 0.0 }).collect());
            out.a.push(0.0);
            out.b.push(0.0);
            if let Some(w) = out.w.as_mut() {
                w.push(0.0);
            }
        }
        out.m += self.p;
        if !out.name.is_empty() {
            out.name.push_str("+basis");
        }
        out
    }

    /// Every entry of `z`, `a`, `b` and `w` multiplied by `k`.
    pub fn scaled(&self, k: f64) -> Self {
        let mut out = self.clone();
        out.z.iter_mut().flatten().for_each(|v| *v *= k);
        out.a.iter_mut().for_each(|v| *v *= k);
        out.b.iter_mut().for_each(|v| *v *= k);
        if let Some(w) = out.w.as_mut() {
            w.iter_mut().for_each(|v| *v *= k);
        }
        if !out.name.is_empty() {
            out.name = format!("{}x{k}", out.name);
        }
        out
    }

    /// Seeded instance with standard normal entries.
    pub fn gaussian(name: impl Into<String>, p: usize, m: usize, seed: u64) -> Result<Self> {
        let mut rng = crate::rng::seeded(seed);
        let mut draw = |n: usize| -> Vec<f64> { (0..n).map(|_| rng.sample(StandardNormal)).collect() };
        let z = (0..m).map(|_| draw(p)).collect();
        let a = draw(m);
        let b = draw(m);
        let w = draw(m);
        Self::new(name, z, a, b, Some(w))
    }

    pub fn shifts(&self) -> &[f64] {
        self.w.as_deref().unwrap_or(&self.a)
    }

    /// SHA-256 of the JSON form, hex encoded.
    pub fn hash(&self) -> String {
        let bytes = serde_json::to_vec(self).expect("instance serializes");
        hex::encode(Sha256::digest(&bytes))
    }

    pub fn from_json(s: &str) -> Result<Self> {
        let inst: Self = serde_json::from_str(s)?;
        inst.validate()?;
        Ok(inst)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        std::fs::write(path, self.to_json()?)?;
        Ok(())
    }

    fn dot(&self, i: usize, beta: &[f64]) -> f64 {
        self.z[i].iter().zip(beta).map(|(z, b)| z * b).sum()
    }
}

/// The six built-in instances: four with `p = 1`, two Gaussian with `p = 2`.
pub fn builtin_suite() -> Vec<LemmaInstance> {
    let hand = LemmaInstance::new(
        "hand-1d",
        vec![vec![1.0], vec![2.0]],
        vec![0.0, 1.0],
        vec![0.0, 1.0],
        Some(vec![0.0, 0.0]),
    )
    .expect("valid");
    let three = LemmaInstance::new(
        "three-1d",
        vec![vec![1.0], vec![-2.0], vec![0.5]],
        vec![0.3, -0.4, 1.2],
        vec![0.0, 1.0, -1.0],
        Some(vec![0.1, 0.5, -0.3]),
    )
    .expect("valid");
    let base = LemmaInstance::new(
        "augmented-1d",
        vec![vec![1.0], vec![2.0], vec![3.0]],
        vec![0.5, -0.2, 1.1],
        vec![0.0, 0.0, 1.0],
        Some(vec![0.2, -0.1, 0.4]),
    )
    .expect("valid");
    vec![
        hand.clone(),
        hand.scaled(10.0),
        three,
        base.augmented(),
        LemmaInstance::gaussian("gauss-2d-m4", 2, 4, 41).expect("valid"),
        LemmaInstance::gaussian("gauss-2d-m5", 2, 5, 52).expect("valid"),
    ]
}

/// Sampling budget and seed shared by all checks.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct SamplePlan {
    /// Sampled `β` per check.
    pub budget: usize,
    pub seed: u64,
}

impl Default for SamplePlan {
    fn default() -> Self {
        Self {
            budget: 100_000,
            seed: 7,
        }
    }
}

fn require_general_position(inst: &LemmaInstance) -> Result<()> {
    inst.validate()?;
    if inst.m < inst.p + 1 {
        return Err(Error::Precondition(format!("covering needs m >= p + 1, got m = {}, p = {}", inst.m, inst.p)));
    }
    let rep = general_position_of(&inst.z, &inst.a, &inst.b, DEFAULT_RANK_TOL)?;
    if let Some(w) = rep.witnesses.first() {
        let name = match w.condition {
            GpCondition::I => "(i) every p rows of z independent",
            GpCondition::Ii => "(ii) every p+1 rows of (z, a) independent",
            GpCondition::Iii => "(iii) every p+1 rows of (z, b) independent",
        };
        return Err(Error::Precondition(format!("general position {name} fails on rows {:?}", w.rows)));
    }
    Ok(())
}

fn require_rows_independent(inst: &LemmaInstance) -> Result<()> {
    inst.validate()?;
    if inst.m < inst.p {
        return Err(Error::Precondition(format!("product bound needs m >= p, got m = {}, p = {}", inst.m, inst.p)));
    }
    let rep = general_position_of(&inst.z, &inst.a, &inst.b, DEFAULT_RANK_TOL)?;
    if !rep.cond_i {
        let rows = rep
            .witnesses
            .iter()
            .find(|w| w.condition == GpCondition::I)
            .map(|w| w.rows.clone())
            .unwrap_or_default();
        return Err(Error::Precondition(format!(
            "general position (i) every p rows of z independent fails on rows {rows:?}"
        )));
    }
    Ok(())
}

#[derive(Debug, Clone, Serialize)]
pub struct CoveringVerdict {
    pub pass: bool,
    pub witness: Option<Vec<f64>>,
    /// Interval arithmetic rather than sampling.
    pub exact: bool,
    pub samples: usize,
}

fn shifted(inst: &LemmaInstance, omega: f64) -> Vec<f64> {
    inst.a.iter().zip(&inst.b).map(|(a, b)| a + b * omega).collect()
}

/// Number of residuals `|c_i - z_iᵀβ|` at most `ε`.
fn close_count(inst: &LemmaInstance, c: &[f64], beta: &[f64], eps: f64) -> usize {
    (0..inst.m).filter(|&i| (c[i] - inst.dot(i, beta)).abs() <= eps).count()
}

/// Direct re-evaluation of a candidate violation. The slack only absorbs
/// rounding in how the witness was constructed.
fn confirm_covering_witness(inst: &LemmaInstance, c: &[f64], beta: &[f64], eps: f64) -> bool {
    close_count(inst, c, beta, eps * (1.0 + 1e-9)) > inst.p
}

/// Exact `p = 1` check: a violation is a point in two of the intervals
/// `[(c_i - ε)/z_i, (c_i + ε)/z_i]`.
fn covering_exact_1d(inst: &LemmaInstance, c: &[f64], eps: f64) -> Option<Vec<f64>> {
    let mut iv: Vec<(f64, f64)> = (0..inst.m)
        .map(|i| {
            let z = inst.z[i][0];
            let (l, h) = ((c[i] - eps) / z, (c[i] + eps) / z);
            (l.min(h), l.max(h))
        })
        .collect();
    iv.sort_by(|x, y| x.0.total_cmp(&y.0));
    // Sorted by left end, two closed intervals meet iff some left end lies
    // at or before the largest right end seen so far.
    let mut best_hi = f64::NEG_INFINITY;
    for &(lo, hi) in &iv {
        if lo <= best_hi {
            let witness = 0.5 * (lo + hi.min(best_hi));
            return Some(vec![witness]);
        }
        best_hi = best_hi.max(hi);
    }
    None
}

fn cofactor_null(rows: &[&[f64]], cols: usize) -> Vec<f64> {
    // Generalized cross product of `cols - 1` vectors in R^cols.
    let k = rows.len();
    debug_assert_eq!(k + 1, cols);
    (0..cols)
        .map(|j| {
            let minor = DMatrix::from_fn(k, k, |r, c| rows[r][if c < j { c } else { c + 1 }]);
            let det = if k == 0 { 1.0 } else { minor.determinant() };
            if j % 2 == 0 {
                det
            } else {
                -det
            }
        })
        .collect()
}

/// Point minimizing `max_{i∈T} |c_i - z_iᵀβ|` over `p + 1` rows `T`.
///
/// With `λ` spanning the left null space of `z_T`, the minimum is
/// `|λᵀc| / ‖λ‖₁` and is attained where `c - z_Tβ = t·sign(λ)`.
fn chebyshev_centre(inst: &LemmaInstance, rows: &[usize], c: &[f64]) -> Option<Vec<f64>> {
    let p = inst.p;
    // λ_i are the cofactors of the transposed (p x (p+1)) system.
    let cols: Vec<Vec<f64>> = (0..p).map(|j| rows.iter().map(|&i| inst.z[i][j]).collect()).collect();
    let col_refs: Vec<&[f64]> = cols.iter().map(Vec::as_slice).collect();
    let lambda = cofactor_null(&col_refs, p + 1);
    let l1: f64 = lambda.iter().map(|v| v.abs()).sum();
    if !(l1 > 0.0) {
        return None;
    }
    let t = rows.iter().zip(&lambda).map(|(&i, l)| l * c[i]).sum::<f64>() / l1;
    let target: Vec<f64> = rows.iter().zip(&lambda).map(|(&i, l)| c[i] - t * l.signum()).collect();
    let zm = DMatrix::from_fn(p, p, |r, k| inst.z[rows[r]][k]);
    let rhs = DVector::from_column_slice(&target[..p]);
    zm.lu().solve(&rhs).map(|v| v.iter().copied().collect())
}

fn random_direction<R: Rng>(p: usize, rng: &mut R) -> Vec<f64> {
    loop {
        let v: Vec<f64> = (0..p).map(|_| rng.sample(StandardNormal)).collect();
        let n = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        if n > 1e-12 {
            return v.into_iter().map(|x| x / n).collect();
        }
    }
}

fn directions(p: usize, count: usize, seed: u64) -> Vec<Vec<f64>> {
    match p {
        1 => vec![vec![1.0], vec![-1.0]],
        2 => (0..count.max(4))
            .map(|k| {
                let th = std::f64::consts::TAU * k as f64 / count.max(4) as f64;
                vec![th.cos(), th.sin()]
            })
            .collect(),
        _ => {
            let mut rng = crate::rng::seeded(seed);
            (0..count.max(2 * p)).map(|_| random_direction(p, &mut rng)).collect()
        }
    }
}

fn covering_samples(inst: &LemmaInstance, c: &[f64], omega: f64, plan: &SamplePlan) -> Vec<Vec<f64>> {
    let p = inst.p;
    let min_row = inst
        .z
        .iter()
        .map(|r| r.iter().map(|v| v * v).sum::<f64>().sqrt())
        .fold(f64::INFINITY, f64::min)
        .max(1e-12);
    let amax = inst.a.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    let bmax = inst.b.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    let radius = 2.0 * (amax + omega * bmax) / min_row + 1.0;
    let mut out = Vec::with_capacity(plan.budget + 64);

    // Chebyshev centres of all (p+1)-row subsets and exact solutions of all p-row subsets.
    for rows in (0..inst.m).combinations(p + 1) {
        if let Some(b) = chebyshev_centre(inst, &rows, c) {
            out.push(b);
        }
    }
    for rows in (0..inst.m).combinations(p) {
        let zm = DMatrix::from_fn(p, p, |r, k| inst.z[rows[r]][k]);
        let rhs = DVector::from_iterator(p, rows.iter().map(|&i| c[i]));
        if let Some(v) = zm.lu().solve(&rhs) {
            out.push(v.iter().copied().collect());
        }
    }

    let random = 10_000.min(plan.budget / 4);
    let shell = plan.budget / 4;
    let grid = plan.budget.saturating_sub(random + shell);

    let per_axis = ((grid as f64).powf(1.0 / p as f64).floor() as usize).max(2);
    let axis: Vec<f64> = (0..per_axis)
        .map(|k| -radius + 2.0 * radius * k as f64 / (per_axis - 1) as f64)
        .collect();
    for idx in (0..p).map(|_| 0..per_axis).multi_cartesian_product() {
        let b: Vec<f64> = idx.iter().map(|&k| axis[k]).collect();
        if b.iter().map(|v| v * v).sum::<f64>() <= radius * radius {
            out.push(b);
        }
    }

    let outer = (10.0 * omega * bmax).max(radius * 10.0);
    let dirs = directions(p, (shell as f64).sqrt() as usize, plan.seed);
    let n_r = (shell / dirs.len()).max(2);
    for k in 0..n_r {
        let r = radius * (outer / radius).powf(k as f64 / (n_r - 1) as f64);
        for d in &dirs {
            out.push(d.iter().map(|v| v * r).collect());
        }
    }

    let mut rng = crate::rng::seeded(plan.seed);
    for _ in 0..random {
        let d = random_direction(p, &mut rng);
        let r = radius * rng.random::<f64>().powf(1.0 / p as f64);
        out.push(d.into_iter().map(|v| v * r).collect());
    }
    out
}

/// Checks the covering property at `(ε, ω)`.
pub fn verify_covering(inst: &LemmaInstance, epsilon: f64, omega: f64, plan: &SamplePlan) -> Result<CoveringVerdict> {
    require_general_position(inst)?;
    check_eps_omega(epsilon, omega)?;
    if inst.p == 1 {
        let c = shifted(inst, omega);
        let witness = covering_exact_1d(inst, &c, epsilon);
        return finish_covering(inst, &c, epsilon, witness, true, 0);
    }
    verify_covering_sampled(inst, epsilon, omega, plan)
}

/// The sampling check for any `p`, including `p = 1`.
pub fn verify_covering_sampled(inst: &LemmaInstance, epsilon: f64, omega: f64, plan: &SamplePlan) -> Result<CoveringVerdict> {
    require_general_position(inst)?;
    check_eps_omega(epsilon, omega)?;
    let c = shifted(inst, omega);
    let samples = covering_samples(inst, &c, omega, plan);
    let witness = samples
        .par_iter()
        .find_first(|b| close_count(inst, &c, b, epsilon) > inst.p)
        .cloned();
    finish_covering(inst, &c, epsilon, witness, false, samples.len())
}

fn check_eps_omega(epsilon: f64, omega: f64) -> Result<()> {
    if !(epsilon > 0.0 && epsilon.is_finite()) {
        return Err(Error::invalid(format!("ε must be positive, got {epsilon}")));
    }
    if !(omega >= 0.0 && omega.is_finite()) {
        return Err(Error::invalid(format!("ω must be nonnegative, got {omega}")));
    }
    Ok(())
}

fn finish_covering(
    inst: &LemmaInstance,
    c: &[f64],
    eps: f64,
    witness: Option<Vec<f64>>,
    exact: bool,
    samples: usize,
) -> Result<CoveringVerdict> {
    if let Some(w) = &witness {
        if !confirm_covering_witness(inst, c, w, eps) {
            return Err(Error::Numerical(format!("covering witness {w:?} did not survive re-evaluation")));
        }
    }
    Ok(CoveringVerdict {
        pass: witness.is_none(),
        witness,
        exact,
        samples,
    })
}

/// `ε` values tried by [`find_epsilon_omega`], largest first.
pub fn epsilon_grid() -> Vec<f64> {
    (0..=6).map(|k| 10f64.powf(-0.5 * k as f64)).collect()
}

/// Candidate thresholds `M`, smallest first.
pub fn omega_ladder() -> Vec<f64> {
    (0..=8).map(|k| 10f64.powi(k)).collect()
}

/// `ω` values each certificate is checked at, as multiples of `M`.
pub const CHECK_MULTIPLES: [f64; 4] = [1.0, 2.0, 10.0, 100.0];

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CoveringCertificate {
    pub instance: String,
    pub instance_hash: String,
    pub epsilon: f64,
    /// Threshold `M`; checked at `M × CHECK_MULTIPLES`.
    pub m_omega: f64,
    pub checked_omegas: Vec<f64>,
    pub exact: bool,
    pub budget: usize,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(tag = "status", rename_all = "lowercase")]
pub enum CoveringSearch {
    Certified(CoveringCertificate),
    /// No `(ε, M)` on the search grid passed; this is not a refutation.
    Inconclusive { instance_hash: String, tried: usize },
}

impl CoveringSearch {
    pub fn certificate(&self) -> Option<&CoveringCertificate> {
        match self {
            CoveringSearch::Certified(c) => Some(c),
            CoveringSearch::Inconclusive { .. } => None,
        }
    }
}

fn passes_ladder(inst: &LemmaInstance, eps: f64, m_omega: f64, plan: &SamplePlan) -> Result<bool> {
    for k in CHECK_MULTIPLES {
        if !verify_covering(inst, eps, k * m_omega, plan)?.pass {
            return Ok(false);
        }
    }
    Ok(true)
}

/// Smallest `M` on [`omega_ladder`] at which `ε` passes at every multiple.
pub fn find_omega(inst: &LemmaInstance, epsilon: f64, plan: &SamplePlan) -> Result<Option<f64>> {
    require_general_position(inst)?;
    for m_omega in omega_ladder() {
        if passes_ladder(inst, epsilon, m_omega, plan)? {
            return Ok(Some(m_omega));
        }
    }
    Ok(None)
}

/// Searches `M` upward and, for each, `ε` downward; returns the first pair
/// that passes at `M`, `2M`, `10M` and `100M`.
pub fn find_epsilon_omega(inst: &LemmaInstance, plan: &SamplePlan) -> Result<CoveringSearch> {
    require_general_position(inst)?;
    let eps = epsilon_grid();
    let mut tried = 0;
    for m_omega in omega_ladder() {
        let verdicts: Vec<bool> = eps
            .par_iter()
            .map(|&e| passes_ladder(inst, e, m_omega, plan))
            .collect::<Result<_>>()?;
        tried += eps.len();
        if let Some(k) = verdicts.iter().position(|v| *v) {
            return Ok(CoveringSearch::Certified(CoveringCertificate {
                instance: inst.name.clone(),
                instance_hash: inst.hash(),
                epsilon: eps[k],
                m_omega,
                checked_omegas: CHECK_MULTIPLES.iter().map(|k| k * m_omega).collect(),
                exact: inst.p == 1,
                budget: plan.budget,
                seed: plan.seed,
            }));
        }
    }
    Ok(CoveringSearch::Inconclusive {
        instance_hash: inst.hash(),
        tried,
    })
}

#[derive(Debug, Clone, Serialize)]
pub struct ProductWitness {
    pub beta: Vec<f64>,
    /// `Π 1/(1 + |w_i - z_iᵀβ|)`.
    pub product: f64,
    /// `(1 + δ‖β‖)^-(m-p+1)`.
    pub bound: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct ProductVerdict {
    pub pass: bool,
    pub witness: Option<ProductWitness>,
    pub samples: usize,
}

/// Largest radius sampled, as a multiple of `R`.
pub const RADIUS_SPAN: f64 = 1e6;

fn norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

fn product_samples(inst: &LemmaInstance, r_min: f64, plan: &SamplePlan) -> Vec<Vec<f64>> {
    let p = inst.p;
    let w = inst.shifts();
    let mut out: Vec<Vec<f64>> = Vec::with_capacity(plan.budget + 64);

    // Lines on which p - 1 residuals vanish decay slowest.
    let lines = plan.budget / 4;
    let subsets: Vec<Vec<usize>> = (0..inst.m).combinations(p - 1).collect();
    let per_line = (lines / (2 * subsets.len()).max(1)).max(8);
    for rows in &subsets {
        let zr: Vec<&[f64]> = rows.iter().map(|&i| inst.z[i].as_slice()).collect();
        let d = cofactor_null(&zr, p);
        let dn = norm(&d);
        if !(dn > 0.0) {
            continue;
        }
        let d: Vec<f64> = d.iter().map(|v| v / dn).collect();
        let base: Vec<f64> = if rows.is_empty() {
            vec![0.0; p]
        } else {
            let zs = DMatrix::from_fn(rows.len(), p, |r, k| inst.z[rows[r]][k]);
            let ws = DVector::from_iterator(rows.len(), rows.iter().map(|&i| w[i]));
            match (&zs * zs.transpose()).lu().solve(&ws) {
                Some(y) => (zs.transpose() * y).iter().copied().collect(),
                None => continue,
            }
        };
        for k in 0..per_line {
            let t = r_min * RADIUS_SPAN.powf(k as f64 / (per_line - 1) as f64) + norm(&base);
            for s in [-1.0, 1.0] {
                out.push(base.iter().zip(&d).map(|(b, dv)| b + s * t * dv).collect());
            }
        }
    }
    for rows in (0..inst.m).combinations(p) {
        let zm = DMatrix::from_fn(p, p, |r, k| inst.z[rows[r]][k]);
        let rhs = DVector::from_iterator(p, rows.iter().map(|&i| w[i]));
        if let Some(v) = zm.lu().solve(&rhs) {
            out.push(v.iter().copied().collect());
        }
    }

    let radial = plan.budget / 2;
    let dirs = directions(p, (radial as f64).sqrt() as usize, plan.seed);
    let n_r = (radial / dirs.len()).max(2);
    for k in 0..n_r {
        let r = r_min * RADIUS_SPAN.powf(k as f64 / (n_r - 1) as f64);
        for d in &dirs {
            out.push(d.iter().map(|v| v * r).collect());
        }
    }

    let random = plan.budget.saturating_sub(out.len());
    let mut rng = crate::rng::seeded(plan.seed ^ 0x9e37_79b9);
    for _ in 0..random {
        let d = random_direction(p, &mut rng);
        let r = r_min * RADIUS_SPAN.powf(rng.random::<f64>());
        out.push(d.into_iter().map(|v| v * r).collect());
    }
    out.retain(|b| norm(b) >= r_min);
    out
}

/// `Σ log(1 + |w_i - z_iᵀβ|) - (m-p+1) log(1 + δ‖β‖)`; negative means violated.
fn product_margin(inst: &LemmaInstance, beta: &[f64], delta: f64) -> f64 {
    let w = inst.shifts();
    let lhs: f64 = (0..inst.m).map(|i| (w[i] - inst.dot(i, beta)).abs().ln_1p()).sum();
    lhs - (inst.m - inst.p + 1) as f64 * (delta * norm(beta)).ln_1p()
}

fn product_witness(inst: &LemmaInstance, beta: &[f64], delta: f64) -> ProductWitness {
    let w = inst.shifts();
    let product: f64 = (0..inst.m).map(|i| 1.0 / (1.0 + (w[i] - inst.dot(i, beta)).abs())).product();
    let bound = (1.0 + delta * norm(beta)).powi(-((inst.m - inst.p + 1) as i32));
    ProductWitness {
        beta: beta.to_vec(),
        product,
        bound,
    }
}

pub fn verify_product_bound(inst: &LemmaInstance, r: f64, delta: f64, plan: &SamplePlan) -> Result<ProductVerdict> {
    require_rows_independent(inst)?;
    if !(r > 0.0 && r.is_finite() && delta > 0.0 && delta.is_finite()) {
        return Err(Error::invalid(format!("R and δ must be positive, got R = {r}, δ = {delta}")));
    }
    let samples = product_samples(inst, r, plan);
    // A small relative slack keeps equality cases from failing on rounding.
    let found = samples.par_iter().find_first(|b| {
        let m = product_margin(inst, b, delta);
        m < -1e-12 * (1.0 + m.abs())
    });
    let witness = match found {
        Some(b) => {
            let wit = product_witness(inst, b, delta);
            if !(wit.product > wit.bound) {
                return Err(Error::Numerical(format!("product-bound witness {b:?} did not survive re-evaluation")));
            }
            Some(wit)
        }
        None => None,
    };
    Ok(ProductVerdict {
        pass: witness.is_none(),
        witness,
        samples: samples.len(),
    })
}

/// `δ` values tried by [`find_r_delta`], largest first: `2^0 … 2^-20`.
pub fn delta_grid() -> Vec<f64> {
    (0..=20).map(|k| 2f64.powi(-k)).collect()
}

/// `R` values tried by [`find_r_delta`], smallest first: `2^0 … 2^20`.
pub fn radius_grid() -> Vec<f64> {
    (0..=20).map(|k| 2f64.powi(k)).collect()
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ProductCertificate {
    pub instance: String,
    pub instance_hash: String,
    pub r: f64,
    pub delta: f64,
    pub budget: usize,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(tag = "status", rename_all = "lowercase")]
pub enum ProductSearch {
    Certified(ProductCertificate),
    /// No `(R, δ)` on the search grid passed; this is not a refutation.
    Inconclusive { instance_hash: String, tried: usize },
}

impl ProductSearch {
    pub fn certificate(&self) -> Option<&ProductCertificate> {
        match self {
            ProductSearch::Certified(c) => Some(c),
            ProductSearch::Inconclusive { .. } => None,
        }
    }
}

/// For `δ` from large to small and, within each, `R` from small to large,
/// returns the first passing pair.
pub fn find_r_delta(inst: &LemmaInstance, plan: &SamplePlan) -> Result<ProductSearch> {
    require_rows_independent(inst)?;
    let radii = radius_grid();
    let mut tried = 0;
    for delta in delta_grid() {
        let verdicts: Vec<bool> = radii
            .par_iter()
            .map(|&r| verify_product_bound(inst, r, delta, plan).map(|v| v.pass))
            .collect::<Result<_>>()?;
        tried += radii.len();
        if let Some(k) = verdicts.iter().position(|v| *v) {
            return Ok(ProductSearch::Certified(ProductCertificate {
                instance: inst.name.clone(),
                instance_hash: inst.hash(),
                r: radii[k],
                delta,
                budget: plan.budget,
                seed: plan.seed,
            }));
        }
    }
    Ok(ProductSearch::Inconclusive {
        instance_hash: inst.hash(),
        tried,
    })
}

/// Checks whether every `p` rows of `z` are linearly independent.
pub fn rows_independent(z: &[Vec<f64>]) -> bool {
    let p = z.first().map_or(0, Vec::len);
    z.len() >= p
        && (0..z.len()).combinations(p).all(|rows| {
            let m = DMatrix::from_fn(p, p, |r, c| z[rows[r]][c]);
            is_invertible(&m, DEFAULT_RANK_TOL)
        })
}
