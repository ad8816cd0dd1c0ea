//! The `check`, `sweep` and `lemmas` commands. Each returns a serializable
//! outcome; the binary turns outcomes and errors into exit codes.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use serde::Serialize;

use robreg_core::heavytail::{scale_moment_check, verify_prior_bound, BoundSearch, MomentCheck, PriorBoundCertificate};
use robreg_core::lemmalab::{builtin_suite, find_epsilon_omega, find_r_delta, CoveringSearch, LemmaInstance, ProductSearch, SamplePlan};
use robreg_core::model::{general_position, robustness_condition, ConditionReport, GeneralPositionReport, DEFAULT_RANK_TOL};
use robreg_core::robustness::{control_sweep, default_eval_points, sweep_with, RobustnessReport, SweepOptions};
use robreg_core::Result;

use crate::config::ExperimentConfig;

/// Largest final sup distance for a sweep to count as converged.
pub const SWEEP_TOLERANCE: f64 = 0.1;
/// Largest distance allowed anywhere in the outlier-free control run.
pub const CONTROL_TOLERANCE: f64 = 1e-6;

#[derive(Debug, Clone, Serialize)]
pub struct HypothesisRow {
    pub name: String,
    pub pass: bool,
    pub detail: String,
}

#[derive(Debug, Clone, Serialize)]
pub struct CheckReport {
    pub rows: Vec<HypothesisRow>,
    pub condition: ConditionReport,
    pub general_position: GeneralPositionReport,
    pub prior_bound: PriorBoundCertificate,
    pub moment: MomentCheck,
}

impl CheckReport {
    pub fn all_pass(&self) -> bool {
        self.rows.iter().all(|r| r.pass)
    }

    pub fn render(&self) -> String {
        let width = self.rows.iter().map(|r| r.name.len()).max().unwrap_or(0);
        let mut s = String::new();
        for r in &self.rows {
            let status = if r.pass { "pass" } else { "FAIL" };
            let _ = writeln!(s, "{:width$}  {status}  {}", r.name, r.detail);
        }
        if !self.condition.holds {
            let _ = writeln!(
                s,
                "note: |K| < |L| + p, so the problem is outside the theorem; sweeps still run with --force but are not assessed"
            );
        }
        s
    }
}

pub fn cmd_check(cfg: &ExperimentConfig) -> Result<CheckReport> {
    let prob = cfg.problem()?;
    let condition = robustness_condition(&prob);
    let gp = general_position(&prob, DEFAULT_RANK_TOL)?;
    let prior_bound = verify_prior_bound(prob.coeff_prior(), &BoundSearch::default())?;
    let moment = scale_moment_check(prob.scale_prior(), cfg.rho)?;

    let mut rows = vec![HypothesisRow {
        name: "size |K| >= |L| + p".into(),
        pass: condition.holds,
        detail: format!(
            "|K| = {}, |L| = {}, p = {}, margin {}",
            condition.clean, condition.outliers, condition.p, condition.margin
        ),
    }];
    let gp_detail = if gp.holds() {
        "conditions (i)-(iii) hold".to_string()
    } else {
        let w = gp.witnesses.first().map(|w| format!(" e.g. {:?} on rows {:?}", w.condition, w.rows));
        format!("{} violations{}", gp.violations, w.unwrap_or_default())
    };
    rows.push(HypothesisRow {
        name: "general position".into(),
        pass: gp.holds(),
        detail: gp_detail,
    });
    rows.push(HypothesisRow {
        name: "coefficient prior bound".into(),
        pass: prior_bound.certified,
        detail: format!(
            "M = {:.6}, nu* = {}{}",
            prior_bound.m,
            prior_bound.nu_star,
            if prior_bound.exact { " (exact)" } else { "" }
        ),
    });
    let moment_ok = moment.analytic_finite && moment.numeric_finite;
    rows.push(HypothesisRow {
        name: format!("scale prior moment rho = {}", cfg.rho),
        pass: moment_ok,
        detail: if moment.agree {
            if moment_ok {
                format!("finite, integral ~ {:.4}", moment.estimate)
            } else {
                format!("infinite, per-decade tail slope {:.3}", moment.tail_slope)
            }
        } else {
            "closed-form rule and quadrature disagree".into()
        },
    });
    Ok(CheckReport {
        rows,
        condition,
        general_position: gp,
        prior_bound,
        moment,
    })
}

#[derive(Debug, Clone, Serialize)]
pub struct SweepCriterion {
    pub strictly_decreasing: bool,
    pub final_distance: f64,
    pub tolerance: f64,
    pub control_max: f64,
    pub control_tolerance: f64,
    /// False for problems outside the theorem, which are never assessed.
    pub assessed: bool,
    pub held: bool,
}

#[derive(Debug, Clone, Serialize)]
pub struct SweepOutcome {
    pub report: RobustnessReport,
    pub control: RobustnessReport,
    pub criterion: SweepCriterion,
    pub files: Vec<PathBuf>,
}

impl SweepOutcome {
    pub fn render(&self) -> String {
        let mut s = String::new();
        if self.report.outside_theorem {
            let _ = writeln!(s, "OUTSIDE THEOREM: |K| < |L| + p, results are descriptive only");
        }
        let _ = writeln!(s, "{:>10}  {:>12}  {:>12}  {:>10}", "omega", "sup dist", "ratio dist", "log Z ratio");
        for (i, w) in self.report.omegas.iter().enumerate() {
            let _ = writeln!(
                s,
                "{w:>10.1e}  {:>12.4e}  {:>12.4e}  {:>10.5}",
                self.report.pointwise_sup_dist[i], self.report.ratio_dist[i], self.report.marginal_ratio[i]
            );
        }
        let c = &self.criterion;
        let verdict = match (c.assessed, c.held) {
            (false, _) => "not assessed",
            (true, true) => "held",
            (true, false) => "FAILED",
        };
        let _ = writeln!(
            s,
            "criterion {verdict}: strictly decreasing = {}, final {:.4e} < {}, control max {:.2e} < {}",
            c.strictly_decreasing, c.final_distance, c.tolerance, c.control_max, c.control_tolerance
        );
        for f in &self.files {
            let _ = writeln!(s, "wrote {}", f.display());
        }
        s
    }
}

fn ensure_dir(dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir)?;
    Ok(())
}

pub fn cmd_sweep(cfg: &ExperimentConfig) -> Result<SweepOutcome> {
    let prob = cfg.problem()?;
    let opts = SweepOptions {
        method: cfg.method,
        draws: cfg.draws,
        chains: cfg.chains,
        seed: cfg.seed,
        nested: None,
    };
    let points = default_eval_points(&prob, &opts)?;
    let report = sweep_with(&prob, &cfg.omegas, &points, &opts)?;
    let control = control_sweep(&prob, &cfg.omegas, &points, &opts)?;
    let control_max = control.pointwise_sup_dist.iter().copied().fold(0.0, f64::max);
    let final_distance = *report.pointwise_sup_dist.last().expect("non-empty ladder");
    let strictly_decreasing = report.strictly_decreasing();
    let assessed = !report.outside_theorem;
    let held = strictly_decreasing && final_distance < SWEEP_TOLERANCE && control_max < CONTROL_TOLERANCE;
    let criterion = SweepCriterion {
        strictly_decreasing,
        final_distance,
        tolerance: SWEEP_TOLERANCE,
        control_max,
        control_tolerance: CONTROL_TOLERANCE,
        assessed,
        held,
    };

    ensure_dir(&cfg.output)?;
    let json = cfg.output.join("sweep.json");
    let csv = cfg.output.join("sweep.csv");
    let control_csv = cfg.output.join("control.csv");
    let outcome = SweepOutcome {
        report,
        control,
        criterion,
        files: vec![json.clone(), csv.clone(), control_csv.clone()],
    };
    std::fs::write(&json, serde_json::to_string_pretty(&outcome)?)?;
    std::fs::write(&csv, outcome.report.to_csv())?;
    std::fs::write(&control_csv, outcome.control.to_csv())?;
    Ok(outcome)
}

#[derive(Debug, Clone, Serialize)]
pub struct LemmaEntry {
    pub instance: String,
    pub instance_hash: String,
    pub covering: CoveringSearch,
    pub product: ProductSearch,
}

#[derive(Debug, Clone, Serialize)]
pub struct LemmaOutcome {
    pub entries: Vec<LemmaEntry>,
    #[serde(skip)]
    pub file: PathBuf,
}

impl LemmaOutcome {
    pub fn inconclusive(&self) -> usize {
        self.entries
            .iter()
            .filter(|e| e.covering.certificate().is_none() || e.product.certificate().is_none())
            .count()
    }

    pub fn render(&self) -> String {
        let width = self.entries.iter().map(|e| e.instance.len()).max().unwrap_or(8).max(8);
        let mut s = format!("{:width$}  {:>22}  {:>22}\n", "instance", "covering (eps, M)", "product (R, delta)");
        for e in &self.entries {
            let cov = e
                .covering
                .certificate()
                .map_or("inconclusive".to_string(), |c| format!("({:.4}, {:.0e})", c.epsilon, c.m_omega));
            let prod = e
                .product
                .certificate()
                .map_or("inconclusive".to_string(), |c| format!("({}, {})", c.r, c.delta));
            let _ = writeln!(s, "{:width$}  {cov:>22}  {prod:>22}", e.instance);
        }
        let _ = writeln!(s, "wrote {}", self.file.display());
        s
    }
}

pub fn cmd_lemmas(cfg: &ExperimentConfig) -> Result<LemmaOutcome> {
    let mut instances = if cfg.builtin_instances { builtin_suite() } else { Vec::new() };
    for path in &cfg.instances {
        let mut inst = LemmaInstance::load(path)?;
        if inst.name.is_empty() {
            inst.name = path.file_stem().map_or_else(String::new, |s| s.to_string_lossy().into_owned());
        }
        instances.push(inst);
    }
    if instances.is_empty() {
        return Err(robreg_core::Error::InvalidInput("no lemma instances to check".into()));
    }
    let plan = SamplePlan {
        budget: cfg.budget,
        seed: cfg.seed,
    };
    let mut entries = Vec::with_capacity(instances.len());
    for inst in &instances {
        entries.push(LemmaEntry {
            instance: inst.name.clone(),
            instance_hash: inst.hash(),
            covering: find_epsilon_omega(inst, &plan)?,
            product: find_r_delta(inst, &plan)?,
        });
    }
    ensure_dir(&cfg.output)?;
    let file = cfg.output.join("certificates.json");
    let outcome = LemmaOutcome { entries, file };
    std::fs::write(&outcome.file, serde_json::to_string_pretty(&outcome)?)?;
    Ok(outcome)
}
