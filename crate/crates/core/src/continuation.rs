//! Certification of the bifurcation point and continuation of the branch of
//! perturbed cylinders on which the boundary flux is constant.

use std::path::Path;

use rayon::prelude::*;
use serde::Serialize;
use thiserror::Error;

use crate::ball_spectra::{
    check_assumptions, dirichlet_spectrum, robin_spectrum, AssumptionReport, Normalization,
    SpectrumError, NONDEGENERACY_TOL,
};
use crate::cylinder_spectra::{
    sigma_k, t_bar, t_star, transversality, CylinderError, TransversalityReport,
};
use crate::dtn::{CylinderField, DtnConfig, DtnError, DtnResult, DtnSolver, EvenFourierProfile};
use crate::nonlinearity::Nonlinearity;
use crate::numerics::{BallGeometry, BandMatrix, NumericsError};
use crate::radial_ball::RadialProfile;

#[derive(Debug, Clone, Error)]
pub enum ContinuationError {
    #[error("bifurcation not certified: {0}")]
    NotCertified(String),
    #[error("pinned system is not square: {unknowns} unknowns, {equations} equations")]
    Dimension { unknowns: usize, equations: usize },
    #[error("empty branch")]
    EmptyBranch,
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error(transparent)]
    Spectrum(#[from] SpectrumError),
    #[error(transparent)]
    Cylinder(#[from] CylinderError),
    #[error(transparent)]
    Dtn(#[from] DtnError),
    #[error(transparent)]
    Numerics(#[from] NumericsError),
    #[error("export failed: {0}")]
    Export(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct CertifyConfig {
    /// Fourier modes examined for the kernel.
    pub k_max: usize,
    /// `|σ_k(T*)| ≤ kernel_tol` counts as a kernel mode.
    pub kernel_tol: f64,
    /// Relative tolerance for the transversality derivative.
    pub transversality_tol: f64,
    pub dirichlet_modes: usize,
    pub nondegeneracy_tol: f64,
}

impl Default for CertifyConfig {
    fn default() -> Self {
        Self {
            k_max: 8,
            kernel_tol: 1e-6,
            transversality_tol: 1e-4,
            dirichlet_modes: 6,
            nondegeneracy_tol: NONDEGENERACY_TOL,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct HypothesisCheck {
    pub name: &'static str,
    pub passed: bool,
    pub detail: String,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BifurcationReport {
    pub gamma_dirichlet: Vec<f64>,
    pub gamma_1: f64,
    pub robin_c: f64,
    pub t_bar: f64,
    pub t_star: f64,
    pub assumptions: AssumptionReport,
    /// `σ_k(T*)` for `k = 1..=k_max`.
    pub sigma_at_t_star: Vec<f64>,
    pub kernel_modes: Vec<usize>,
    pub kernel_dim: usize,
    pub transversality: Option<TransversalityReport>,
    pub hypotheses: Vec<HypothesisCheck>,
    pub certified: bool,
}

impl BifurcationReport {
    pub fn failures(&self) -> Vec<&HypothesisCheck> {
        self.hypotheses.iter().filter(|h| !h.passed).collect()
    }
}

/// Checks nondegeneracy, `T* < T̄`, a one-dimensional kernel spanned by
/// `cos 2πt`, and a nonzero transversality derivative.
pub fn certify_bifurcation(
    profile: &RadialProfile,
    f: &Nonlinearity,
    geom: &BallGeometry,
    c: f64,
    cfg: &CertifyConfig,
) -> Result<BifurcationReport, ContinuationError> {
    let dirichlet = dirichlet_spectrum(profile, f, geom, cfg.dirichlet_modes)?;
    let assumptions = check_assumptions(&dirichlet, cfg.nondegeneracy_tol);
    let robin = robin_spectrum(profile, f, geom, c, 2)?;
    let gamma_1 = robin.eigenvalues[0];
    let mut hypotheses = vec![HypothesisCheck {
        name: "nondegenerate_dirichlet",
        passed: assumptions.passed(),
        detail: format!(
            "min |γ_D| = {:e}, verdict {:?}",
            assumptions.min_abs_eigenvalue, assumptions.verdict
        ),
    }];
    let threshold = if assumptions.passed() {
        t_bar(dirichlet.eigenvalues[0])?
    } else {
        f64::NAN
    };
    let critical = t_star(gamma_1)?;
    let below = critical < threshold;
    hypotheses.push(HypothesisCheck {
        name: "t_star_below_threshold",
        passed: below,
        detail: format!("T* = {critical}, T̄ = {threshold}"),
    });
    let mut report = BifurcationReport {
        gamma_dirichlet: dirichlet.eigenvalues.clone(),
        gamma_1,
        robin_c: c,
        t_bar: threshold,
        t_star: critical,
        assumptions,
        sigma_at_t_star: Vec::new(),
        kernel_modes: Vec::new(),
        kernel_dim: 0,
        transversality: None,
        hypotheses,
        certified: false,
    };
    if !(report.assumptions.passed() && below) {
        return Ok(report);
    }
    let sigmas: Vec<f64> = (1..=cfg.k_max)
        .into_par_iter()
        .map(|k| sigma_k(profile, f, geom, c, k, critical))
        .collect::<Result<_, _>>()?;
    let kernel_modes: Vec<usize> = sigmas
        .iter()
        .enumerate()
        .filter(|(_, s)| s.abs() <= cfg.kernel_tol)
        .map(|(i, _)| i + 1)
        .collect();
    let simple = kernel_modes == [1];
    report.hypotheses.push(HypothesisCheck {
        name: "simple_kernel",
        passed: simple,
        detail: format!("kernel modes {kernel_modes:?}, σ_1(T*) = {:e}", sigmas[0]),
    });
    report.kernel_dim = kernel_modes.len();
    report.kernel_modes = kernel_modes;
    report.sigma_at_t_star = sigmas;
    let psi1 = robin
        .renormalized(geom, Normalization::UnitBoundaryValue)?
        .eigenfunctions
        .swap_remove(0);
    let tr = transversality(profile, f, geom, c, critical, gamma_1, &psi1)?;
    let transverse = tr.passed(cfg.transversality_tol);
    report.hypotheses.push(HypothesisCheck {
        name: "transversality",
        passed: transverse,
        detail: format!(
            "dJ/dT = {:e}, expected {:e}, relative error {:e}",
            tr.derivative, tr.expected, tr.relative_error
        ),
    });
    report.transversality = Some(tr);
    report.certified = report.hypotheses.iter().all(|h| h.passed);
    Ok(report)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct BranchConfig {
    /// Initial number of cosine modes `K`.
    pub order: usize,
    pub max_order: usize,
    /// Double `K` when `|v_K| > tail_tol ‖v‖` and `|v_K| > tail_floor`.
    pub adaptive_order: bool,
    pub tail_tol: f64,
    pub tail_floor: f64,
    /// Convergence target for `‖G‖` (coefficient norm).
    pub g_tol: f64,
    /// Largest `‖G‖` at which a stalled iteration is still accepted.
    pub g_accept: f64,
    pub max_newton: usize,
    /// Difference step for the Jacobian, in units of `v_k / s`.
    pub fd_step: f64,
    pub min_step: f64,
    pub radial_points: usize,
    /// Lower bound for the collocation intervals; at least `2K` are used.
    pub t_intervals: usize,
    pub newton_tol: f64,
}

impl Default for BranchConfig {
    fn default() -> Self {
        Self {
            order: 8,
            max_order: 32,
            adaptive_order: true,
            tail_tol: 1e-10,
            tail_floor: 1e-11,
            g_tol: 1e-11,
            g_accept: 1e-9,
            max_newton: 12,
            fd_step: 1e-5,
            min_step: 1e-6,
            radial_points: DtnConfig::default().radial_points,
            t_intervals: DtnConfig::default().t_intervals,
            newton_tol: DtnConfig::default().newton_tol,
        }
    }
}

impl BranchConfig {
    fn validate(&self) -> Result<(), ContinuationError> {
        if self.order < 2 || self.max_order < self.order {
            return Err(ContinuationError::Config(format!(
                "need 2 ≤ K ≤ max K, got K = {}, max {}",
                self.order, self.max_order
            )));
        }
        if !(self.g_tol > 0.0 && self.g_accept >= self.g_tol && self.fd_step > 0.0) {
            return Err(ContinuationError::Config(
                "tolerances must be positive".into(),
            ));
        }
        Ok(())
    }

    fn dtn(&self, order: usize) -> DtnConfig {
        DtnConfig {
            radial_points: self.radial_points,
            t_intervals: self.t_intervals.max(2 * order),
            newton_tol: self.newton_tol,
            ..DtnConfig::default()
        }
    }
}

/// A converged domain `|x| < 1 + v_s(t/T_s)` with constant boundary flux.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BranchPoint {
    pub s: f64,
    pub period: f64,
    pub v: EvenFourierProfile,
    #[serde(skip)]
    pub field: CylinderField,
    /// Common value of the outward normal derivative.
    pub flux_constant: f64,
    /// `‖G(v_s, T_s)‖` from an independent evaluation after convergence.
    pub g_norm: f64,
    /// `max_t |∂_ν u - flux_constant|` on the collocation nodes.
    pub flux_deviation: f64,
    pub newton_residual: f64,
    pub newton_iterations: usize,
    pub order: usize,
    pub radial_points: usize,
    pub t_intervals: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Branch {
    pub points: Vec<BranchPoint>,
    pub t_star: f64,
    pub kernel_mode: usize,
    /// Why each half stopped early, if it did.
    pub truncations: Vec<String>,
}

impl Branch {
    /// `s, T, flux_constant, g_norm, flux_deviation, v_1, …` padded to the
    /// largest order along the branch.
    pub fn write_csv(&self, path: &Path) -> Result<(), ContinuationError> {
        let err = |e: csv::Error| ContinuationError::Export(e.to_string());
        let order = self.points.iter().map(|p| p.v.order()).max().unwrap_or(0);
        let mut w = csv::Writer::from_path(path).map_err(err)?;
        let mut header: Vec<String> = ["s", "T", "flux_constant", "g_norm", "flux_deviation"]
            .iter()
            .map(|s| s.to_string())
            .collect();
        header.extend((1..=order).map(|k| format!("v_{k}")));
        w.write_record(&header).map_err(err)?;
        for p in &self.points {
            let mut row = vec![
                format!("{:.17e}", p.s),
                format!("{:.17e}", p.period),
                format!("{:.17e}", p.flux_constant),
                format!("{:.6e}", p.g_norm),
                format!("{:.6e}", p.flux_deviation),
            ];
            row.extend((1..=order).map(|k| format!("{:.17e}", p.v.coefficient(k))));
            w.write_record(&row).map_err(err)?;
        }
        w.flush()
            .map_err(|e| ContinuationError::Export(e.to_string()))
    }
}

/// Inputs shared by every point of a branch.
#[derive(Debug, Clone)]
pub struct BranchSetup {
    pub profile: RadialProfile,
    pub f: Nonlinearity,
    pub geom: BallGeometry,
    pub t_star: f64,
    pub t_bar: f64,
}

impl BranchSetup {
    pub fn from_report(
        profile: &RadialProfile,
        f: &Nonlinearity,
        geom: &BallGeometry,
        report: &BifurcationReport,
    ) -> Result<Self, ContinuationError> {
        if !report.certified {
            let failed: Vec<&str> = report.failures().iter().map(|h| h.name).collect();
            return Err(ContinuationError::NotCertified(failed.join(", ")));
        }
        Ok(Self {
            profile: profile.clone(),
            f: f.clone(),
            geom: *geom,
            t_star: report.t_star,
            t_bar: report.t_bar,
        })
    }
}

/// Pinned-amplitude solver for one half of the branch. Unknowns are
/// `z_k = v_k / s` for `k = 2..K` and `T`; equations are `G_k / s`, `k = 1..K`.
struct HalfBranch<'a> {
    setup: &'a BranchSetup,
    cfg: BranchConfig,
    solvers: Vec<(usize, DtnSolver)>,
}

struct Solved {
    z: Vec<f64>,
    period: f64,
    result: DtnResult,
    iterations: usize,
}

impl<'a> HalfBranch<'a> {
    fn solver(&mut self, order: usize) -> Result<&DtnSolver, ContinuationError> {
        if let Some(i) = self.solvers.iter().position(|(k, _)| *k == order) {
            return Ok(&self.solvers[i].1);
        }
        let s = DtnSolver::new(
            &self.setup.profile,
            &self.setup.f,
            &self.setup.geom,
            self.cfg.dtn(order),
        )?;
        self.solvers.push((order, s));
        Ok(&self.solvers.last().unwrap().1)
    }

    fn profile(s: f64, z: &[f64]) -> EvenFourierProfile {
        let mut c = Vec::with_capacity(z.len() + 1);
        c.push(s);
        c.extend(z.iter().map(|zk| s * zk));
        EvenFourierProfile { coefficients: c }
    }

    fn evaluate(
        solver: &DtnSolver,
        s: f64,
        z: &[f64],
        period: f64,
    ) -> Result<(Vec<f64>, DtnResult), ContinuationError> {
        let v = Self::profile(s, z);
        let result = solver.g(&v, period)?;
        let scaled: Vec<f64> = result.g.coefficients.iter().map(|g| g / s).collect();
        if scaled.len() != z.len() + 1 {
            return Err(ContinuationError::Dimension {
                unknowns: z.len() + 1,
                equations: scaled.len(),
            });
        }
        Ok((scaled, result))
    }

    fn jacobian(
        solver: &DtnSolver,
        s: f64,
        z: &[f64],
        period: f64,
        base: &[f64],
        step: f64,
    ) -> Result<Vec<Vec<f64>>, ContinuationError> {
        let dim = z.len() + 1;
        (0..dim)
            .into_par_iter()
            .map(|col| {
                let mut zz = z.to_vec();
                let mut tt = period;
                let h = if col + 1 < dim {
                    zz[col] += step;
                    step
                } else {
                    let h = step * period;
                    tt += h;
                    h
                };
                let (r, _) = Self::evaluate(solver, s, &zz, tt)?;
                Ok(r.iter().zip(base).map(|(a, b)| (a - b) / h).collect())
            })
            .collect()
    }

    fn newton(&mut self, s: f64, z0: &[f64], t0: f64) -> Result<Solved, ContinuationError> {
        let cfg = self.cfg;
        let order = z0.len() + 1;
        let solver = self.solver(order)?.clone();
        let t_bar = self.setup.t_bar;
        let norm = |r: &[f64]| r.iter().map(|x| x * x).sum::<f64>().sqrt();
        let mut z = z0.to_vec();
        let mut period = t0;
        let (mut res, mut result) = Self::evaluate(&solver, s, &z, period)?;
        let mut rn = norm(&res) * s.abs();
        let mut jac: Option<Vec<Vec<f64>>> = None;
        let mut fresh = false;
        let mut iterations = 0;
        while rn > cfg.g_tol {
            if iterations >= cfg.max_newton {
                break;
            }
            iterations += 1;
            if jac.is_none() {
                jac = Some(Self::jacobian(&solver, s, &z, period, &res, cfg.fd_step)?);
                fresh = true;
            }
            let cols = jac.as_ref().unwrap();
            let dim = res.len();
            let mut a = BandMatrix::zeros(dim, dim - 1, dim - 1);
            for (j, col) in cols.iter().enumerate() {
                for (i, x) in col.iter().enumerate() {
                    a.set(i, j, *x);
                }
            }
            let step = a.factor()?.solve(&res);
            let mut alpha = 1.0;
            let mut accepted = false;
            while alpha >= 0.125 {
                let zz: Vec<f64> = z.iter().zip(&step).map(|(a, d)| a - alpha * d).collect();
                let tt = period - alpha * step[dim - 1];
                if !(tt > 0.0 && tt < t_bar) {
                    alpha *= 0.5;
                    continue;
                }
                match Self::evaluate(&solver, s, &zz, tt) {
                    Ok((r, g)) if norm(&r) * s.abs() < rn => {
                        z = zz;
                        period = tt;
                        rn = norm(&r) * s.abs();
                        res = r;
                        result = g;
                        accepted = true;
                        break;
                    }
                    _ => alpha *= 0.5,
                }
            }
            if !accepted {
                if fresh {
                    break;
                }
                jac = None;
            } else {
                fresh = false;
            }
        }
        if rn > cfg.g_accept {
            return Err(ContinuationError::Dtn(DtnError::NewtonDivergence {
                iterations,
                residual: rn,
            }));
        }
        Ok(Solved {
            z,
            period,
            result,
            iterations,
        })
    }

    fn tail_too_large(&self, s: f64, z: &[f64]) -> bool {
        let v = Self::profile(s, z);
        let last = v.coefficients.last().copied().unwrap_or(0.0).abs();
        last > self.cfg.tail_tol * v.coefficient_norm() && last > self.cfg.tail_floor
    }

    /// Solves at `s`, doubling the order while the last coefficient stays
    /// significant.
    fn solve_adaptive(&mut self, s: f64, z0: &[f64], t0: f64) -> Result<Solved, ContinuationError> {
        let mut solved = self.newton(s, z0, t0)?;
        while self.cfg.adaptive_order
            && self.tail_too_large(s, &solved.z)
            && 2 * (solved.z.len() + 1) <= self.cfg.max_order
        {
            let order = 2 * (solved.z.len() + 1);
            let mut z = solved.z.clone();
            z.resize(order - 1, 0.0);
            solved = self.newton(s, &z, solved.period)?;
        }
        Ok(solved)
    }

    fn accept(&mut self, s: f64, solved: &Solved) -> Result<BranchPoint, ContinuationError> {
        let order = solved.z.len() + 1;
        let v = Self::profile(s, &solved.z);
        let solver = self.solver(order)?;
        let check = solver.g(&v, solved.period)?;
        let field = solver.solve_fields(&v, solved.period)?.swap_remove(0);
        Ok(BranchPoint {
            s,
            period: solved.period,
            v,
            field,
            flux_constant: check.mean_flux,
            g_norm: check.g.coefficient_norm(),
            flux_deviation: check.deviation_max,
            newton_residual: solved.result.g.coefficient_norm(),
            newton_iterations: solved.iterations,
            order,
            radial_points: solver.config().radial_points,
            t_intervals: solver.config().t_intervals,
        })
    }

    /// Walks the targets in order; steps are halved on failure.
    fn run(&mut self, targets: &[f64]) -> (Vec<BranchPoint>, Option<String>) {
        let mut points: Vec<BranchPoint> = Vec::new();
        let mut history: Vec<(f64, Vec<f64>, f64)> = Vec::new();
        let mut last_s = 0.0;
        for &target in targets {
            let mut s = target;
            loop {
                let (z0, t0) = predict(&history, s, self.cfg.order, self.setup.t_star);
                match self.solve_adaptive(s, &z0, t0) {
                    Ok(solved) => match self.accept(s, &solved) {
                        Ok(p) if p.g_norm <= self.cfg.g_accept && p.field.min_interior() > 0.0 => {
                            history.push((s, solved.z.clone(), solved.period));
                            points.push(p);
                            last_s = s;
                            if s == target {
                                break;
                            }
                            s = target;
                        }
                        Ok(p) => {
                            return (
                                points,
                                Some(format!(
                                    "re-validation failed at s = {s}: ‖G‖ = {:e}",
                                    p.g_norm
                                )),
                            )
                        }
                        Err(e) => return (points, Some(format!("at s = {s}: {e}"))),
                    },
                    Err(e) => {
                        let half = 0.5 * (s - last_s);
                        if half.abs() < self.cfg.min_step {
                            return (points, Some(format!("step underflow near s = {s}: {e}")));
                        }
                        s = last_s + half;
                    }
                }
            }
        }
        (points, None)
    }
}

/// Secant predictor from the last two points, or the kernel direction at the
/// origin.
fn predict(history: &[(f64, Vec<f64>, f64)], s: f64, order: usize, t_star: f64) -> (Vec<f64>, f64) {
    match history {
        [] => (vec![0.0; order - 1], t_star),
        [(_, z1, t1)] => (z1.clone(), *t1),
        [.., (s0, z0, t0), (s1, z1, t1)] => {
            let theta = (s - s1) / (s1 - s0);
            let n = z1.len();
            let z = (0..n)
                .map(|i| {
                    let prev = z0.get(i).copied().unwrap_or(0.0);
                    z1[i] + theta * (z1[i] - prev)
                })
                .collect();
            (z, t1 + theta * (t1 - t0))
        }
    }
}

/// Continues the branch through the amplitudes in `s_grid` (any order, any
/// signs; `0` yields the trivial point). The two halves run in parallel.
pub fn extend_branch(
    setup: &BranchSetup,
    s_grid: &[f64],
    cfg: &BranchConfig,
) -> Result<Branch, ContinuationError> {
    cfg.validate()?;
    if s_grid.iter().any(|s| !s.is_finite()) {
        return Err(ContinuationError::Config(
            "amplitudes must be finite".into(),
        ));
    }
    let mut positive: Vec<f64> = s_grid.iter().copied().filter(|s| *s > 0.0).collect();
    let mut negative: Vec<f64> = s_grid.iter().copied().filter(|s| *s < 0.0).collect();
    positive.sort_by(|a, b| a.partial_cmp(b).unwrap());
    positive.dedup();
    negative.sort_by(|a, b| b.partial_cmp(a).unwrap());
    negative.dedup();
    let run = |targets: &[f64]| {
        let mut half = HalfBranch {
            setup,
            cfg: *cfg,
            solvers: Vec::new(),
        };
        half.run(targets)
    };
    let ((mut neg_points, neg_note), (pos_points, pos_note)) =
        rayon::join(|| run(&negative), || run(&positive));
    let mut points = Vec::new();
    neg_points.reverse();
    points.append(&mut neg_points);
    if s_grid.contains(&0.0) {
        points.push(trivial_point(setup, cfg)?);
    }
    points.extend(pos_points);
    Ok(Branch {
        points,
        t_star: setup.t_star,
        kernel_mode: 1,
        truncations: [neg_note, pos_note].into_iter().flatten().collect(),
    })
}

fn trivial_point(
    setup: &BranchSetup,
    cfg: &BranchConfig,
) -> Result<BranchPoint, ContinuationError> {
    let dtn = cfg.dtn(cfg.order);
    let solver = DtnSolver::new(&setup.profile, &setup.f, &setup.geom, dtn)?;
    let v = EvenFourierProfile::zeros(cfg.order);
    let check = solver.g(&v, setup.t_star)?;
    let field = solver.solve_fields(&v, setup.t_star)?.swap_remove(0);
    Ok(BranchPoint {
        s: 0.0,
        period: setup.t_star,
        v,
        field,
        flux_constant: check.mean_flux,
        g_norm: check.g.coefficient_norm(),
        flux_deviation: check.deviation_max,
        newton_residual: 0.0,
        newton_iterations: 0,
        order: cfg.order,
        radial_points: dtn.radial_points,
        t_intervals: dtn.t_intervals,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PointDiagnostics {
    pub s: f64,
    pub flux_deviation: f64,
    pub g_norm: f64,
    pub min_interior: f64,
    /// `∫₀¹ v_s dt` by a fine trapezoid rule.
    pub mean_v: f64,
    /// `max |u(r, t) - u(r, -t)|` over sampled `t`.
    pub evenness: f64,
    /// `‖v_s - s cos 2πt‖` in coefficient norm.
    pub remainder: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BranchDiagnostics {
    pub points: Vec<PointDiagnostics>,
    /// Least-squares slope of `log ‖v_s - s cos 2πt‖` against `log |s|`.
    pub remainder_slope: Option<f64>,
    /// Least-squares slope of `log |T_s - T*|` against `log |s|`.
    pub period_slope: Option<f64>,
    /// `max |T_s - T*| / |s|` over nontrivial points.
    pub period_constant: Option<f64>,
    /// `max |T_s - T_{-s}|` over amplitude pairs present on both halves.
    pub symmetry_defect: Option<f64>,
}

pub fn branch_diagnostics(branch: &Branch) -> Result<BranchDiagnostics, ContinuationError> {
    if branch.points.is_empty() {
        return Err(ContinuationError::EmptyBranch);
    }
    let samples = 4096;
    let points: Vec<PointDiagnostics> = branch
        .points
        .iter()
        .map(|p| {
            let mean_v = (0..samples)
                .map(|j| p.v.eval(j as f64 / samples as f64))
                .sum::<f64>()
                / samples as f64;
            let mut evenness: f64 = 0.0;
            for i in (0..p.field.radial.n_points()).step_by(16) {
                for t in [0.05, 0.13, 0.31, 0.42] {
                    evenness = evenness.max((p.field.eval_t(i, t) - p.field.eval_t(i, -t)).abs());
                }
            }
            let remainder =
                p.v.coefficients
                    .iter()
                    .skip(1)
                    .map(|c| c * c)
                    .sum::<f64>()
                    .sqrt();
            PointDiagnostics {
                s: p.s,
                flux_deviation: p.flux_deviation,
                g_norm: p.g_norm,
                min_interior: p.field.min_interior(),
                mean_v,
                evenness,
                remainder,
            }
        })
        .collect();
    let nontrivial: Vec<&BranchPoint> = branch.points.iter().filter(|p| p.s != 0.0).collect();
    let fit = |ys: Vec<(f64, f64)>| -> Option<f64> {
        let data: Vec<(f64, f64)> = ys
            .into_iter()
            .filter(|(x, y)| *x > 0.0 && *y > 0.0)
            .map(|(x, y)| (x.ln(), y.ln()))
            .collect();
        least_squares_slope(&data)
    };
    let remainder_slope = fit(nontrivial
        .iter()
        .map(|p| {
            let r =
                p.v.coefficients
                    .iter()
                    .skip(1)
                    .map(|c| c * c)
                    .sum::<f64>()
                    .sqrt();
            (p.s.abs(), r)
        })
        .collect());
    let period_slope = fit(nontrivial
        .iter()
        .map(|p| (p.s.abs(), (p.period - branch.t_star).abs()))
        .collect());
    let period_constant = nontrivial
        .iter()
        .map(|p| (p.period - branch.t_star).abs() / p.s.abs())
        .fold(None, |m: Option<f64>, x| Some(m.map_or(x, |m| m.max(x))));
    let symmetry_defect = nontrivial
        .iter()
        .filter(|p| p.s > 0.0)
        .filter_map(|p| {
            nontrivial
                .iter()
                .find(|q| (q.s + p.s).abs() <= 1e-14 * p.s)
                .map(|q| (p.period - q.period).abs())
        })
        .fold(None, |m: Option<f64>, x| Some(m.map_or(x, |m| m.max(x))));
    Ok(BranchDiagnostics {
        points,
        remainder_slope,
        period_slope,
        period_constant,
        symmetry_defect,
    })
}

fn least_squares_slope(data: &[(f64, f64)]) -> Option<f64> {
    if data.len() < 2 {
        return None;
    }
    let n = data.len() as f64;
    let mx = data.iter().map(|p| p.0).sum::<f64>() / n;
    let my = data.iter().map(|p| p.1).sum::<f64>() / n;
    let sxx: f64 = data.iter().map(|p| (p.0 - mx).powi(2)).sum();
    let sxy: f64 = data.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    (sxx > 0.0).then(|| sxy / sxx)
}

/// Amplitudes `±s_max·2^{-j}`, `j = 0..levels`, plus `0`.
pub fn symmetric_amplitudes(s_max: f64, levels: usize) -> Vec<f64> {
    let mut out = vec![0.0];
    for j in 0..levels {
        let s = s_max * 0.5f64.powi(j as i32);
        out.push(s);
        out.push(-s);
    }
    out.sort_by(|a, b| a.partial_cmp(b).unwrap());
    out
}
