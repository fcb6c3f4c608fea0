//! The four subcommands. Each returns the process exit status.

use std::f64::consts::PI;
use std::fs;
use std::path::Path;

use onduloid::ball_spectra::{
    check_assumptions, derivative_form_check, dirichlet_spectrum, robin_spectrum, AssumptionReport,
    Spectrum,
};
use onduloid::continuation::{
    branch_diagnostics, certify_bifurcation, extend_branch, BranchConfig, BranchSetup,
    CertifyConfig,
};
use onduloid::cylinder_spectra::{find_t_star_by_root, sigma_curve, sigma_k, t_bar, t_star};
use onduloid::dtn::{DtnConfig, DtnSolver, EvenFourierProfile};
use onduloid::radial_ball::robin_constant_by_differencing;
use onduloid::{
    solve_ground_profile, BallGeometry, Nonlinearity, RadialError, RadialProfile, ShootingConfig,
};
use serde_json::{json, Value};

use crate::config::RunConfig;

pub const EXIT_OK: u8 = 0;
pub const EXIT_NUMERICAL: u8 = 1;
pub const EXIT_ASSUMPTION: u8 = 2;
pub const EXIT_USAGE: u8 = 64;

/// Why a command stopped early.
#[derive(Debug)]
pub enum Failure {
    Usage(String),
    Assumption(String),
    Numerical(String),
}

impl Failure {
    pub fn code(&self) -> u8 {
        match self {
            Self::Usage(_) => EXIT_USAGE,
            Self::Assumption(_) => EXIT_ASSUMPTION,
            Self::Numerical(_) => EXIT_NUMERICAL,
        }
    }

    pub fn message(&self) -> &str {
        match self {
            Self::Usage(m) | Self::Assumption(m) | Self::Numerical(m) => m,
        }
    }
}

fn numerical<E: std::fmt::Display>(e: E) -> Failure {
    Failure::Numerical(e.to_string())
}

fn write_json(dir: &Path, name: &str, value: &Value) -> Result<(), Failure> {
    let text = serde_json::to_string_pretty(value).map_err(numerical)? + "\n";
    fs::write(dir.join(name), text).map_err(|e| Failure::Numerical(format!("writing {name}: {e}")))
}

/// Ground state, spectra and thresholds shared by every command.
struct Baseline {
    f: Nonlinearity,
    geom: BallGeometry,
    profile: RadialProfile,
    /// Set when `f` is linear and only a representative profile exists.
    scale_invariant: Option<f64>,
    dirichlet: Spectrum,
    robin: Spectrum,
    assumptions: AssumptionReport,
    gamma_1: f64,
    t_bar: f64,
    t_star: f64,
}

impl Baseline {
    fn compute(cfg: &RunConfig) -> Result<Self, Failure> {
        let f = cfg.nonlinearity().map_err(Failure::Usage)?;
        let geom = BallGeometry::new(cfg.n).map_err(|e| Failure::Usage(e.to_string()))?;
        let shooting = ShootingConfig::with_points(cfg.grid.radial_points);
        let (profile, scale_invariant) = match solve_ground_profile(&f, &geom, &shooting) {
            Ok(p) => (p, None),
            Err(RadialError::ScaleInvariant {
                max_slope,
                representative,
            }) => (*representative, Some(max_slope)),
            Err(e @ (RadialError::NoGroundState { .. } | RadialError::Positivity { .. })) => {
                return Err(Failure::Assumption(format!(
                    "positive ground state unverified: {e}"
                )))
            }
            Err(e) => return Err(numerical(e)),
        };
        let k = cfg.grid.eigenpairs;
        let dirichlet = dirichlet_spectrum(&profile, &f, &geom, k).map_err(numerical)?;
        let robin = robin_spectrum(&profile, &f, &geom, profile.robin_c, k).map_err(numerical)?;
        let assumptions = check_assumptions(&dirichlet, cfg.tolerances.nondegeneracy);
        let gamma_1 = robin.eigenvalues[0];
        let t_bar = t_bar(dirichlet.eigenvalues[0]).unwrap_or(f64::NAN);
        let t_star = t_star(gamma_1).unwrap_or(f64::NAN);
        Ok(Self {
            f,
            geom,
            profile,
            scale_invariant,
            dirichlet,
            robin,
            assumptions,
            gamma_1,
            t_bar,
            t_star,
        })
    }

    fn assumption_failure(&self) -> Option<String> {
        if let Some(slope) = self.scale_invariant {
            return Some(format!(
                "nondegeneracy assumption unverified: f is linear (boundary map slope {slope:e}), \
                 ground state is not isolated"
            ));
        }
        if !self.assumptions.passed() {
            return Some(format!(
                "nondegeneracy assumption unverified: {:?}, min |γ_D| = {:e}",
                self.assumptions.verdict, self.assumptions.min_abs_eigenvalue
            ));
        }
        if !(self.t_star.is_finite() && self.t_star < self.t_bar) {
            return Some(format!(
                "T* = {} is not below the threshold T̄ = {}",
                self.t_star, self.t_bar
            ));
        }
        None
    }

    fn dtn_config(&self, cfg: &RunConfig) -> DtnConfig {
        DtnConfig {
            radial_points: cfg.dtn_radial_points(),
            t_intervals: cfg.grid.t_intervals,
            newton_tol: cfg.tolerances.newton,
            ..DtnConfig::default()
        }
    }

    fn summary(&self, cfg: &RunConfig) -> Value {
        let gamma_err = self.robin.error_estimates[0].abs();
        json!({
            "nonlinearity": self.f.label(),
            "dimension": self.geom.n,
            "resolution": {
                "radial_points": cfg.grid.radial_points,
                "eigenvalue_grids": [
                    cfg.grid.radial_points.div_ceil(2),
                    cfg.grid.radial_points,
                    2 * cfg.grid.radial_points - 1
                ],
                "extrapolation_order": 2,
            },
            "ground_state": {
                "center_value": self.profile.center_value,
                "boundary_slope": self.profile.d_at_1,
                "ode_residual": self.profile.ode_residual(&self.f),
                "scale_invariant": self.scale_invariant.is_some(),
            },
            "robin_c": self.profile.robin_c,
            "robin_c_by_differencing": robin_constant_by_differencing(&self.profile),
            "gamma_dirichlet": self.dirichlet.eigenvalues,
            "gamma_dirichlet_error_estimates": self.dirichlet.error_estimates,
            "negative_count": self.dirichlet.negative_count,
            "gamma_robin": self.robin.eigenvalues,
            "gamma_robin_error_estimates": self.robin.error_estimates,
            "gamma_1": self.gamma_1,
            "t_bar": finite_or_string(self.t_bar),
            "t_star": finite_or_string(self.t_star),
            "t_star_error_estimate": PI * (-self.gamma_1).powf(-1.5) * gamma_err,
            "assumptions": self.assumptions,
        })
    }
}

/// JSON has no infinity; emit it as a string.
fn finite_or_string(x: f64) -> Value {
    if x.is_finite() {
        json!(x)
    } else {
        json!(x.to_string())
    }
}

pub fn analyze(cfg: &RunConfig, out: &Path) -> Result<u8, Failure> {
    let base = Baseline::compute(cfg)?;
    let mut report = base.summary(cfg);
    let gamma_d1 = base.dirichlet.eigenvalues[0];
    let ordering = base.gamma_1 < gamma_d1.min(0.0);
    let form = derivative_form_check(&base.profile, &base.f, &base.geom);
    let form_tol = if base.geom.n == 1 { 1e-6 } else { 1e-4 };
    let failure = base.assumption_failure();
    let root = if failure.is_none() {
        find_t_star_by_root(
            &base.profile,
            &base.f,
            &base.geom,
            base.profile.robin_c,
            base.t_bar,
        )
        .ok()
    } else {
        None
    };
    let obj = report.as_object_mut().expect("summary is an object");
    obj.insert("command".into(), json!("analyze"));
    obj.insert("t_star_by_root".into(), json!(root));
    obj.insert(
        "robin_ordering".into(),
        json!({ "passed": ordering, "gamma_1": base.gamma_1, "bound": gamma_d1.min(0.0) }),
    );
    obj.insert(
        "derivative_form".into(),
        json!({
            "q_value": form.q_value,
            "expected": form.expected,
            "defect": form.defect(),
            "tolerance": form_tol,
            "passed": form.defect() <= form_tol,
        }),
    );
    let verdict = match &failure {
        Some(reason) => json!({ "passed": false, "reason": reason }),
        None => {
            json!({ "passed": ordering, "reason": if ordering { "" } else { "robin ordering violated" } })
        }
    };
    obj.insert("verdict".into(), verdict);
    fs::create_dir_all(out).map_err(numerical)?;
    write_json(out, "analyze.json", &report)?;
    base.profile
        .write_csv(&out.join("profile.csv"))
        .map_err(numerical)?;
    base.dirichlet
        .write_csv(out, "dirichlet_")
        .map_err(numerical)?;
    base.robin.write_csv(out, "robin_").map_err(numerical)?;
    println!(
        "c = {:.10}  γ_D1 = {:.10}  γ₁ = {:.10}  T̄ = {}  T* = {}",
        base.profile.robin_c, gamma_d1, base.gamma_1, base.t_bar, base.t_star
    );
    match failure {
        Some(reason) => {
            eprintln!("{reason}");
            Ok(EXIT_ASSUMPTION)
        }
        None if !ordering => {
            eprintln!("robin ordering γ₁ < min(0, γ_D1) violated");
            Ok(EXIT_NUMERICAL)
        }
        None => Ok(EXIT_OK),
    }
}

pub fn sigma(cfg: &RunConfig, out: &Path) -> Result<u8, Failure> {
    let base = Baseline::compute(cfg)?;
    if let Some(reason) = base.assumption_failure() {
        return Err(Failure::Assumption(reason));
    }
    let lo = cfg.sigma.t_min.unwrap_or(0.5 * base.t_star);
    let hi = cfg.sigma.t_max.unwrap_or(1.5 * base.t_star);
    let n = cfg.sigma.samples;
    let grid: Vec<f64> = match n {
        0 => Vec::new(),
        1 => vec![lo],
        _ => (0..n)
            .map(|i| lo + (hi - lo) * i as f64 / (n - 1) as f64)
            .collect(),
    };
    let kept: Vec<f64> = grid.iter().copied().filter(|t| *t < base.t_bar).collect();
    let clipped = grid.len() - kept.len();
    if clipped > 0 {
        eprintln!(
            "warning: {clipped} periods at or above T̄ = {} were dropped",
            base.t_bar
        );
    }
    fs::create_dir_all(out).map_err(numerical)?;
    let curve = sigma_curve(
        &base.profile,
        &base.f,
        &base.geom,
        base.profile.robin_c,
        &kept,
        cfg.sigma.k_max,
    )
    .map_err(numerical)?;
    curve.write_csv(&out.join("sigma.csv")).map_err(numerical)?;
    let crossings: Vec<[f64; 2]> = curve
        .t_values
        .windows(2)
        .zip(curve.sigma_values.windows(2))
        .filter(|(_, s)| s[0] * s[1] < 0.0)
        .map(|(t, _)| [t[0], t[1]])
        .collect();
    let summary = json!({
        "command": "sigma",
        "radial_points": cfg.grid.radial_points,
        "t_star": base.t_star,
        "t_bar": finite_or_string(base.t_bar),
        "samples": kept.len(),
        "clipped": clipped,
        "sign_changes": curve.sign_changes(),
        "crossings": crossings,
        "dominance_violations": curve.dominance_violations,
    });
    write_json(out, "sigma.json", &summary)?;
    println!(
        "{} periods, {} sign change(s), T* = {}",
        kept.len(),
        curve.sign_changes(),
        base.t_star
    );
    Ok(EXIT_OK)
}

fn certify_config(cfg: &RunConfig) -> CertifyConfig {
    CertifyConfig {
        kernel_tol: cfg.tolerances.kernel,
        transversality_tol: cfg.tolerances.transversality,
        dirichlet_modes: cfg.grid.eigenpairs,
        nondegeneracy_tol: cfg.tolerances.nondegeneracy,
        ..CertifyConfig::default()
    }
}

pub fn branch(cfg: &RunConfig, out: &Path) -> Result<u8, Failure> {
    let base = Baseline::compute(cfg)?;
    fs::create_dir_all(out).map_err(numerical)?;
    if let Some(reason) = base.assumption_failure() {
        return Err(Failure::Assumption(reason));
    }
    let report = certify_bifurcation(
        &base.profile,
        &base.f,
        &base.geom,
        base.profile.robin_c,
        &certify_config(cfg),
    )
    .map_err(numerical)?;
    if !report.certified {
        write_json(out, "certification.json", &json!(report))?;
        let failed: Vec<&str> = report.failures().iter().map(|h| h.name).collect();
        return Err(Failure::Assumption(format!(
            "bifurcation not certified: {}",
            failed.join(", ")
        )));
    }
    let setup =
        BranchSetup::from_report(&base.profile, &base.f, &base.geom, &report).map_err(numerical)?;
    let bcfg = BranchConfig {
        order: cfg.grid.fourier_order,
        max_order: cfg.branch.max_order,
        adaptive_order: cfg.branch.adaptive_order,
        g_accept: cfg.tolerances.branch_residual,
        radial_points: cfg.dtn_radial_points(),
        t_intervals: cfg.grid.t_intervals,
        newton_tol: cfg.tolerances.newton,
        ..BranchConfig::default()
    };
    let branch = extend_branch(&setup, &cfg.amplitudes(), &bcfg).map_err(numerical)?;
    branch
        .write_csv(&out.join("branch.csv"))
        .map_err(numerical)?;
    if cfg.branch.dump_fields {
        for (i, p) in branch.points.iter().enumerate() {
            p.field
                .write_csv(&out.join(format!("field_{i:03}.csv")))
                .map_err(numerical)?;
        }
    }
    let diagnostics = branch_diagnostics(&branch).ok();
    let points: Vec<Value> = branch.points.iter().map(|p| json!(p)).collect();
    let doc = json!({
        "command": "branch",
        "certification": report,
        "t_star": branch.t_star,
        "kernel_mode": branch.kernel_mode,
        "points": points,
        "diagnostics": diagnostics,
        "truncations": branch.truncations,
    });
    write_json(out, "branch.json", &doc)?;
    println!(
        "{} point(s) on the branch, T* = {}",
        branch.points.len(),
        branch.t_star
    );
    if branch.truncations.is_empty() {
        Ok(EXIT_OK)
    } else {
        for t in &branch.truncations {
            eprintln!("branch truncated: {t}");
        }
        Ok(EXIT_NUMERICAL)
    }
}

#[derive(Debug, serde::Serialize)]
struct Check {
    name: &'static str,
    passed: bool,
    measured: Option<f64>,
    tolerance: f64,
    detail: String,
}

impl Check {
    fn at_most(name: &'static str, measured: f64, tolerance: f64) -> Self {
        Self {
            name,
            passed: measured <= tolerance,
            measured: Some(measured),
            tolerance,
            detail: String::new(),
        }
    }

    fn at_least(name: &'static str, measured: f64, tolerance: f64) -> Self {
        Self {
            name,
            passed: measured >= tolerance,
            measured: Some(measured),
            tolerance,
            detail: String::new(),
        }
    }

    fn error(name: &'static str, tolerance: f64, detail: String) -> Self {
        Self {
            name,
            passed: false,
            measured: None,
            tolerance,
            detail,
        }
    }

    fn with_detail(mut self, detail: String) -> Self {
        self.detail = detail;
        self
    }
}

fn run_check(
    name: &'static str,
    tolerance: f64,
    body: impl FnOnce() -> Result<Check, String>,
) -> Check {
    body().unwrap_or_else(|e| Check::error(name, tolerance, e))
}

pub fn verify(cfg: &RunConfig, out: &Path) -> Result<u8, Failure> {
    let base = Baseline::compute(cfg)?;
    let b = &base;
    let (f, geom, profile) = (&b.f, &b.geom, &b.profile);
    let c = profile.robin_c;
    let mut checks = vec![
        Check::at_most("ground_state_residual", profile.ode_residual(f), 1e-6),
        Check::at_most(
            "robin_constant_consistency",
            (c - robin_constant_by_differencing(profile)).abs(),
            10.0 * profile.grid.spacing().powi(2),
        )
        .with_detail("one-sided differencing, O(h²)".into()),
        Check::at_most(
            "leading_eigenvalue_error_estimate",
            b.dirichlet.error_estimates[0]
                .abs()
                .max(b.robin.error_estimates[0].abs()),
            1e-6,
        ),
        Check {
            name: "nondegeneracy",
            passed: b.assumption_failure().is_none(),
            measured: Some(b.assumptions.min_abs_eigenvalue),
            tolerance: cfg.tolerances.nondegeneracy,
            detail: b
                .assumption_failure()
                .unwrap_or_else(|| format!("l = {}", b.dirichlet.negative_count)),
        },
        Check {
            name: "robin_ordering",
            passed: b.gamma_1 < b.dirichlet.eigenvalues[0].min(0.0),
            measured: Some(b.gamma_1 - b.dirichlet.eigenvalues[0].min(0.0)),
            tolerance: 0.0,
            detail: String::new(),
        },
    ];
    let form = derivative_form_check(profile, f, geom);
    checks.push(Check::at_most(
        "derivative_form_identity",
        form.defect(),
        if geom.n == 1 { 1e-6 } else { 1e-4 },
    ));
    if b.assumption_failure().is_none() {
        checks.extend(period_checks(cfg, b));
        checks.extend(dtn_checks(cfg, b));
    }
    let passed = checks.iter().all(|c| c.passed);
    fs::create_dir_all(out).map_err(numerical)?;
    let doc = json!({
        "command": "verify",
        "nonlinearity": f.label(),
        "dimension": geom.n,
        "radial_points": cfg.grid.radial_points,
        "dtn_radial_points": cfg.dtn_radial_points(),
        "t_intervals": cfg.grid.t_intervals,
        "checks": checks,
        "passed": passed,
    });
    write_json(out, "verify.json", &doc)?;
    for ch in &checks {
        let measured = ch
            .measured
            .map_or("error".to_string(), |m| format!("{m:.3e}"));
        println!(
            "{} {:<34} {:>11} (tol {:.1e}) {}",
            if ch.passed { "PASS" } else { "FAIL" },
            ch.name,
            measured,
            ch.tolerance,
            ch.detail
        );
    }
    Ok(if passed { EXIT_OK } else { EXIT_NUMERICAL })
}

fn period_checks(cfg: &RunConfig, b: &Baseline) -> Vec<Check> {
    let (f, geom, profile) = (&b.f, &b.geom, &b.profile);
    let c = profile.robin_c;
    let mut checks = Vec::new();
    checks.push(run_check("t_star_cross_validation", 1e-4, || {
        let root = find_t_star_by_root(profile, f, geom, c, b.t_bar).map_err(|e| e.to_string())?;
        Ok(Check::at_most(
            "t_star_cross_validation",
            (root - b.t_star).abs(),
            1e-4,
        ))
    }));
    checks.push(run_check("sigma_trichotomy", 1.0, || {
        let hi = (1.5 * b.t_star).min(b.t_star + 0.5 * (b.t_bar - b.t_star));
        let lo = 0.5 * b.t_star;
        let grid: Vec<f64> = (0..40).map(|i| lo + (hi - lo) * i as f64 / 39.0).collect();
        let curve =
            sigma_curve(profile, f, geom, c, &grid, cfg.sigma.k_max).map_err(|e| e.to_string())?;
        let located = grid
            .windows(2)
            .zip(curve.sigma_values.windows(2))
            .any(|(t, s)| s[0] * s[1] < 0.0 && t[0] <= b.t_star && b.t_star <= t[1]);
        let changes = curve.sign_changes();
        Ok(Check {
            name: "sigma_trichotomy",
            passed: changes == 1 && located,
            measured: Some(changes as f64),
            tolerance: 1.0,
            detail: format!("crossing brackets T*: {located}"),
        })
    }));
    checks.push(run_check("bifurcation_certified", 0.0, || {
        let report = certify_bifurcation(profile, f, geom, c, &certify_config(cfg))
            .map_err(|e| e.to_string())?;
        let tr = report
            .transversality
            .map(|t| t.relative_error)
            .unwrap_or(f64::NAN);
        let failed: Vec<&str> = report.failures().iter().map(|h| h.name).collect();
        Ok(Check {
            name: "bifurcation_certified",
            passed: report.certified,
            measured: Some(tr),
            tolerance: cfg.tolerances.transversality,
            detail: format!("kernel {:?}, failed: {failed:?}", report.kernel_modes),
        })
    }));
    checks
}

fn dtn_checks(cfg: &RunConfig, b: &Baseline) -> Vec<Check> {
    let (f, geom, profile) = (&b.f, &b.geom, &b.profile);
    let c = profile.robin_c;
    let solver = match DtnSolver::new(profile, f, geom, b.dtn_config(cfg)) {
        Ok(s) => s,
        Err(e) => return vec![Check::error("dtn_setup", 0.0, e.to_string())],
    };
    let period = 0.9 * b.t_star;
    let kmax = 8.min(solver.max_order());
    let mut checks = Vec::new();
    checks.push(run_check("ht_mode_reconciliation", 5e-5, || {
        let mut worst: f64 = 0.0;
        for k in 1..=kmax {
            let w = EvenFourierProfile::mode(k, 1.0, kmax).map_err(|e| e.to_string())?;
            let h = solver.ht_apply_2d(&w, period).map_err(|e| e.to_string())?;
            let s = sigma_k(profile, f, geom, c, k, period).map_err(|e| e.to_string())?;
            worst = worst.max((h.coefficient(k) - s).abs());
        }
        Ok(
            Check::at_most("ht_mode_reconciliation", worst, 5e-5)
                .with_detail(format!("k ≤ {kmax}")),
        )
    }));
    let wa = EvenFourierProfile {
        coefficients: vec![0.8, -0.35, 0.2],
    };
    let wb = EvenFourierProfile {
        coefficients: vec![-0.1, 0.6, 0.45],
    };
    checks.push(run_check("ht_self_adjoint", 1e-8, || {
        let ha = solver.ht_apply_2d(&wa, period).map_err(|e| e.to_string())?;
        let hb = solver.ht_apply_2d(&wb, period).map_err(|e| e.to_string())?;
        Ok(Check::at_most(
            "ht_self_adjoint",
            (ha.inner(&wb) - hb.inner(&wa)).abs(),
            1e-8,
        ))
    }));
    checks.push(run_check("orthogonality", 1e-8, || {
        let report = solver
            .orthogonality_check(
                &EvenFourierProfile {
                    coefficients: vec![1.0],
                },
                period,
                &b.dirichlet,
            )
            .map_err(|e| e.to_string())?;
        Ok(Check::at_most("orthogonality", report.max_abs(), 1e-8))
    }));
    checks.push(run_check("energy_identity", 1e-6, || {
        let h = solver.ht_apply_2d(&wa, period).map_err(|e| e.to_string())?;
        let lhs = period * geom.omega_n * h.inner(&wa);
        let q = solver
            .quadratic_form_2d(&wa, period)
            .map_err(|e| e.to_string())?;
        Ok(Check::at_most("energy_identity", (lhs - q).abs(), 1e-6))
    }));
    checks.push(run_check("g_vanishes_on_cylinder", 0.0, || {
        let g = solver
            .g(&EvenFourierProfile::zeros(kmax), period)
            .map_err(|e| e.to_string())?;
        Ok(Check::at_most(
            "g_vanishes_on_cylinder",
            g.g.coefficient_norm(),
            0.0,
        ))
    }));
    for (name, w) in [
        ("linearization_order_single", vec![1.0]),
        ("linearization_order_double", vec![1.0, 0.5]),
    ] {
        checks.push(run_check(name, 0.9, || {
            let r = solver
                .fd_linearization_check(
                    &EvenFourierProfile { coefficients: w },
                    period,
                    &[1e-2, 1e-3, 1e-4],
                )
                .map_err(|e| e.to_string())?;
            Ok(Check::at_least(name, r.min_order(), 0.9)
                .with_detail(format!("max r(ε)/ε = {:.3e}", r.max_ratio())))
        }));
    }
    checks
}
