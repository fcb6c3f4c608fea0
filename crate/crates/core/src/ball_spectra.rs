//! Dirichlet and Robin spectra of the radial linearization
//! `-(r^{n-1} ψ')' / r^{n-1} - f'(φ₁) ψ = γ ψ` and the associated quadratic
//! forms.
//!
//! Eigenvalues are first located with a symmetric finite-volume matrix on three
//! nested grids and Richardson-extrapolated; each one is then refined by
//! shooting on the profile grid, which also supplies the eigenfunctions.

use std::path::Path;

use serde::Serialize;
use thiserror::Error;

use crate::nonlinearity::Nonlinearity;
use crate::numerics::{
    find_root, richardson, simpson_extrapolated, sym_tridiag_eigs, BallGeometry, NumericsError,
    SymTridiag,
};
use crate::radial_ball::{RadialFunction, RadialProfile, RadialShooter};

#[derive(Debug, Clone, Error)]
pub enum SpectrumError {
    #[error(transparent)]
    Numerics(#[from] NumericsError),
    #[error("requested {requested} eigenpairs but the coarse grid supports only {available}")]
    TooFewUnknowns { requested: usize, available: usize },
    #[error("radial grid must have an odd node count of at least 11, got {0}")]
    Grid(usize),
    #[error("eigenvalue {index} could not be bracketed by shooting near {estimate}")]
    Bracket { index: usize, estimate: f64 },
    #[error("eigenfunction {0} vanishes at r = 1 and cannot be boundary-normalized")]
    BoundaryNormalization(usize),
    #[error("csv export failed: {0}")]
    Export(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum BoundaryCondition {
    Dirichlet,
    Robin { c: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Normalization {
    /// `ω_n ∫₀¹ r^{n-1} ψ² dr = 1`, positive at the center.
    UnitL2Ball,
    /// `ψ(1) = 1`.
    UnitBoundaryValue,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Spectrum {
    pub bc: BoundaryCondition,
    pub eigenvalues: Vec<f64>,
    /// Shooting values on the profile grid minus those on the half-resolution grid.
    pub error_estimates: Vec<f64>,
    /// Extrapolated finite-volume eigenvalues used to bracket the shooting.
    pub fv_estimates: Vec<f64>,
    pub eigenfunctions: Vec<RadialFunction>,
    pub normalization: Normalization,
    /// Number of negative eigenvalues of the operator.
    pub negative_count: usize,
    pub n_points: usize,
}

impl Spectrum {
    pub fn max_error_estimate(&self) -> f64 {
        self.error_estimates.iter().fold(0.0, |m, e| m.max(e.abs()))
    }

    /// Rescales eigenfunctions to the requested normalization.
    pub fn renormalized(
        &self,
        geom: &BallGeometry,
        normalization: Normalization,
    ) -> Result<Self, SpectrumError> {
        let mut out = self.clone();
        for (j, ef) in out.eigenfunctions.iter_mut().enumerate() {
            *ef = normalize(ef, geom, normalization, j)?;
        }
        out.normalization = normalization;
        Ok(out)
    }

    /// Writes `eigenvalues.csv` and one `eigenfunction_<j>.csv` per pair.
    pub fn write_csv(&self, dir: &Path, prefix: &str) -> Result<(), SpectrumError> {
        let err = |e: csv::Error| SpectrumError::Export(e.to_string());
        let mut w =
            csv::Writer::from_path(dir.join(format!("{prefix}eigenvalues.csv"))).map_err(err)?;
        w.write_record(["index", "eigenvalue", "error_estimate"])
            .map_err(err)?;
        for (j, (v, e)) in self
            .eigenvalues
            .iter()
            .zip(&self.error_estimates)
            .enumerate()
        {
            w.write_record(&[(j + 1).to_string(), format!("{v:.17e}"), format!("{e:.3e}")])
                .map_err(err)?;
        }
        w.flush()
            .map_err(|e| SpectrumError::Export(e.to_string()))?;
        for (j, ef) in self.eigenfunctions.iter().enumerate() {
            let path = dir.join(format!("{prefix}eigenfunction_{}.csv", j + 1));
            let mut w = csv::Writer::from_path(path).map_err(err)?;
            w.write_record(["r", "psi", "dpsi"]).map_err(err)?;
            for i in 0..ef.grid.n_points() {
                w.write_record(&[
                    format!("{:.17e}", ef.grid.node(i)),
                    format!("{:.17e}", ef.values[i]),
                    format!("{:.17e}", ef.derivatives[i]),
                ])
                .map_err(err)?;
            }
            w.flush()
                .map_err(|e| SpectrumError::Export(e.to_string()))?;
        }
        Ok(())
    }
}

/// `ω_n ∫₀¹ r^{n-1} a b dr` by extrapolated Simpson on the common grid.
pub fn ball_inner(a: &RadialFunction, b: &RadialFunction, geom: &BallGeometry) -> f64 {
    let grid = a.grid;
    let y: Vec<f64> = (0..grid.n_points())
        .map(|i| geom.radial_weight(grid.node(i)) * a.values[i] * b.values[i])
        .collect();
    geom.omega_n * simpson_extrapolated(&y, grid.spacing())
}

fn normalize(
    ef: &RadialFunction,
    geom: &BallGeometry,
    normalization: Normalization,
    index: usize,
) -> Result<RadialFunction, SpectrumError> {
    match normalization {
        Normalization::UnitL2Ball => {
            let norm = ball_inner(ef, ef, geom).sqrt();
            let sign = if ef.values[0] < 0.0 { -1.0 } else { 1.0 };
            Ok(ef.scaled(sign / norm))
        }
        Normalization::UnitBoundaryValue => {
            let b = ef.boundary_value();
            let scale = ef.values.iter().fold(0.0_f64, |m, v| m.max(v.abs()));
            if b.abs() <= 1e-8 * scale {
                return Err(SpectrumError::BoundaryNormalization(index));
            }
            Ok(ef.scaled(1.0 / b))
        }
    }
}

/// Finite-volume matrix `W^{-1/2} A W^{-1/2}` on the profile grid.
///
/// Cells are `[r_{i-1/2}, r_{i+1/2}] ∩ [0, 1]` with exact volumes
/// `(hi^n - lo^n)/n` and face coefficients `r_{i+1/2}^{n-1}`. The center cell
/// has no inner face (regularity), the Robin cell carries the boundary flux
/// `c ψ(1)`, and Dirichlet drops the boundary node.
pub fn fv_matrix(
    profile: &RadialProfile,
    f: &Nonlinearity,
    geom: &BallGeometry,
    bc: BoundaryCondition,
) -> SymTridiag {
    let grid = profile.grid;
    let m = grid.n_points();
    let h = grid.spacing();
    let nf = geom.n as f64;
    let unknowns = match bc {
        BoundaryCondition::Dirichlet => m - 1,
        BoundaryCondition::Robin { .. } => m,
    };
    let face = |i: usize| geom.radial_weight((i as f64 + 0.5) * h);
    let volume = |i: usize| {
        let lo = if i == 0 { 0.0 } else { (i as f64 - 0.5) * h };
        let hi = if i + 1 == m {
            1.0
        } else {
            (i as f64 + 0.5) * h
        };
        (hi.powf(nf) - lo.powf(nf)) / nf
    };
    let mut diag = Vec::with_capacity(unknowns);
    let mut off = Vec::with_capacity(unknowns.saturating_sub(1));
    let w: Vec<f64> = (0..unknowns).map(volume).collect();
    for i in 0..unknowns {
        let q = f.slope(profile.values[i]);
        let mut d = -w[i] * q;
        if i > 0 {
            d += face(i - 1) / h;
        }
        if i + 1 < m {
            d += face(i) / h;
        } else if let BoundaryCondition::Robin { c } = bc {
            d += c;
        }
        diag.push(d / w[i]);
        if i + 1 < unknowns {
            off.push(-face(i) / h / (w[i] * w[i + 1]).sqrt());
        }
    }
    SymTridiag::new(diag, off).expect("consistent tridiagonal dimensions")
}

fn fv_eigenvalues(
    profile: &RadialProfile,
    f: &Nonlinearity,
    geom: &BallGeometry,
    bc: BoundaryCondition,
    k: usize,
) -> Result<Vec<f64>, SpectrumError> {
    let m = fv_matrix(profile, f, geom, bc);
    if k > m.dim() {
        return Err(SpectrumError::TooFewUnknowns {
            requested: k,
            available: m.dim(),
        });
    }
    Ok(sym_tridiag_eigs(&m, k)?
        .into_iter()
        .map(|p| p.value)
        .collect())
}

/// Boundary residual of the shot with spectral parameter `gamma`.
fn boundary_residual(shooter: &RadialShooter, a: f64, bc: BoundaryCondition, gamma: f64) -> f64 {
    let shot = shooter.shoot(a, &[gamma]);
    let (v, d) = &shot.companions[0];
    let (v1, d1) = (*v.last().unwrap(), *d.last().unwrap());
    match bc {
        BoundaryCondition::Dirichlet => v1,
        BoundaryCondition::Robin { c } => d1 + c * v1,
    }
}

fn polish(
    shooter: &RadialShooter,
    a: f64,
    bc: BoundaryCondition,
    estimates: &[f64],
    index: usize,
) -> Result<f64, SpectrumError> {
    let g = estimates[index];
    let below = if index > 0 {
        0.5 * (g - estimates[index - 1])
    } else {
        0.5 * (estimates[1] - g)
    };
    let above = 0.5 * (estimates[index + 1] - g);
    let fcn = |x: f64| boundary_residual(shooter, a, bc, x);
    // widen the bracket towards the half-gaps until the residual changes sign
    for frac in [1e-6, 1e-4, 1e-2, 0.25, 1.0] {
        let lo = g - frac * below;
        let hi = g + frac * above;
        if fcn(lo) * fcn(hi) <= 0.0 {
            let tol = 1e-13 * g.abs().max(1.0);
            return Ok(find_root(fcn, (lo, hi), tol)?);
        }
    }
    Err(SpectrumError::Bracket { index, estimate: g })
}

fn spectrum(
    profile: &RadialProfile,
    f: &Nonlinearity,
    geom: &BallGeometry,
    bc: BoundaryCondition,
    k: usize,
) -> Result<Spectrum, SpectrumError> {
    let m = profile.grid.n_points();
    if m < 11 || m.is_multiple_of(2) {
        return Err(SpectrumError::Grid(m));
    }
    let coarse = profile.coarsened().ok_or(SpectrumError::Grid(m))?;
    let fine = profile.refined();
    // one extra pair so every requested eigenvalue has an upper neighbour
    let kk = k + 1;
    let e0 = fv_eigenvalues(&coarse, f, geom, bc, kk)?;
    let e1 = fv_eigenvalues(profile, f, geom, bc, kk)?;
    let e2 = fv_eigenvalues(&fine, f, geom, bc, kk)?;
    let extrapolated: Vec<f64> = (0..kk).map(|j| richardson(e1[j], e2[j], 2)).collect();
    let coarse_extrapolated: Vec<f64> = (0..kk).map(|j| richardson(e0[j], e1[j], 2)).collect();

    let a = profile.center_value;
    let shooter = RadialShooter::new(f, geom.n, profile.grid, profile.substeps);
    let coarse_shooter = RadialShooter::new(f, geom.n, coarse.grid, profile.substeps);

    let mut eigenvalues = Vec::with_capacity(k);
    let mut error_estimates = Vec::with_capacity(k);
    let mut eigenfunctions = Vec::with_capacity(k);
    for j in 0..k {
        let gamma = polish(&shooter, a, bc, &extrapolated, j)?;
        let gamma_coarse = polish(&coarse_shooter, a, bc, &coarse_extrapolated, j)
            .unwrap_or(coarse_extrapolated[j]);
        let shot = shooter.shoot(a, &[gamma]);
        let (values, derivatives) = shot.companions.into_iter().next().unwrap();
        let raw = RadialFunction {
            grid: profile.grid,
            values,
            derivatives,
        };
        eigenfunctions.push(normalize(&raw, geom, Normalization::UnitL2Ball, j)?);
        eigenvalues.push(gamma);
        error_estimates.push((gamma - gamma_coarse).abs());
    }
    let negative_count = fv_matrix(&fine, f, geom, bc).count_below(0.0);
    Ok(Spectrum {
        bc,
        eigenvalues,
        error_estimates,
        fv_estimates: extrapolated[..k].to_vec(),
        eigenfunctions,
        normalization: Normalization::UnitL2Ball,
        negative_count,
        n_points: m,
    })
}

/// First `k` Dirichlet eigenpairs (`ψ(1) = 0`), unit `L²(B)` normalized.
pub fn dirichlet_spectrum(
    profile: &RadialProfile,
    f: &Nonlinearity,
    geom: &BallGeometry,
    k: usize,
) -> Result<Spectrum, SpectrumError> {
    spectrum(profile, f, geom, BoundaryCondition::Dirichlet, k)
}

/// First `k` Robin eigenpairs (`ψ'(1) + c ψ(1) = 0`), unit `L²(B)` normalized.
pub fn robin_spectrum(
    profile: &RadialProfile,
    f: &Nonlinearity,
    geom: &BallGeometry,
    c: f64,
    k: usize,
) -> Result<Spectrum, SpectrumError> {
    spectrum(profile, f, geom, BoundaryCondition::Robin { c }, k)
}

/// `ω_n ∫₀¹ r^{n-1} (ψ'² - f'(φ₁) ψ²) dr + c ω_n ψ(1)²`; the boundary term is
/// dropped when `include_boundary` is false.
pub fn quadratic_form_q(
    profile: &RadialProfile,
    f: &Nonlinearity,
    geom: &BallGeometry,
    c: f64,
    psi: &RadialFunction,
    include_boundary: bool,
) -> f64 {
    let grid = profile.grid;
    let y: Vec<f64> = (0..grid.n_points())
        .map(|i| {
            let q = f.slope(profile.values[i]);
            geom.radial_weight(grid.node(i))
                * (psi.derivatives[i].powi(2) - q * psi.values[i].powi(2))
        })
        .collect();
    let mut total = geom.omega_n * simpson_extrapolated(&y, grid.spacing());
    if include_boundary {
        total += c * geom.omega_n * psi.boundary_value().powi(2);
    }
    total
}

/// `φ₁'` as a radial function, with derivative `φ₁''` taken from the ODE.
pub fn profile_derivative(profile: &RadialProfile, f: &Nonlinearity) -> RadialFunction {
    RadialFunction {
        grid: profile.grid,
        values: profile.derivative_values.clone(),
        derivatives: profile.second_derivative(f),
    }
}

/// Both sides of `Q(φ₁') = -(n-1) ω_n ∫₀¹ r^{n-3} φ₁'² dr`.
///
/// The right-hand integrand is continued by its limit `0` at `r = 0`
/// (`φ₁' ~ φ₁''(0) r` there, and `n ≥ 2` whenever the term is present).
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct DerivativeFormCheck {
    pub q_value: f64,
    pub expected: f64,
}

impl DerivativeFormCheck {
    pub fn defect(&self) -> f64 {
        (self.q_value - self.expected).abs()
    }
}

pub fn derivative_form_check(
    profile: &RadialProfile,
    f: &Nonlinearity,
    geom: &BallGeometry,
) -> DerivativeFormCheck {
    let dphi = profile_derivative(profile, f);
    let q_value = quadratic_form_q(profile, f, geom, profile.robin_c, &dphi, true);
    let expected = if geom.n == 1 {
        0.0
    } else {
        let grid = profile.grid;
        let y: Vec<f64> = (0..grid.n_points())
            .map(|i| {
                let r = grid.node(i);
                if i == 0 {
                    0.0
                } else {
                    r.powi(geom.n as i32 - 3) * profile.derivative_values[i].powi(2)
                }
            })
            .collect();
        -(geom.n as f64 - 1.0) * geom.omega_n * simpson_extrapolated(&y, grid.spacing())
    };
    DerivativeFormCheck { q_value, expected }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum AssumptionVerdict {
    Pass,
    /// Some eigenvalue lies within the tolerance of zero.
    Degenerate,
    /// The eigenvalue error estimate is too large to decide.
    Inconclusive,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AssumptionReport {
    pub verdict: AssumptionVerdict,
    pub negative_count: usize,
    pub min_abs_eigenvalue: f64,
    pub max_error_estimate: f64,
    pub tol: f64,
}

impl AssumptionReport {
    pub fn passed(&self) -> bool {
        self.verdict == AssumptionVerdict::Pass
    }
}

/// Default nondegeneracy tolerance, in eigenvalue units.
pub const NONDEGENERACY_TOL: f64 = 1e-4;

/// Nondegeneracy of the Dirichlet linearization: no computed eigenvalue within
/// `tol` of zero, with error estimates below `tol / 10`.
pub fn check_assumptions(dirichlet: &Spectrum, tol: f64) -> AssumptionReport {
    let min_abs_eigenvalue = dirichlet
        .eigenvalues
        .iter()
        .fold(f64::INFINITY, |m, g| m.min(g.abs()));
    let max_error_estimate = dirichlet.max_error_estimate();
    let verdict = if max_error_estimate > tol / 10.0 {
        AssumptionVerdict::Inconclusive
    } else if min_abs_eigenvalue > tol {
        AssumptionVerdict::Pass
    } else {
        AssumptionVerdict::Degenerate
    };
    AssumptionReport {
        verdict,
        negative_count: dirichlet.negative_count,
        min_abs_eigenvalue,
        max_error_estimate,
        tol,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::radial_ball::{solve_ground_profile, RadialError, ShootingConfig};
    use std::f64::consts::PI;

    fn setup(f: &Nonlinearity, n: usize) -> (RadialProfile, BallGeometry) {
        let geom = BallGeometry::new(n).unwrap();
        let p = solve_ground_profile(f, &geom, &ShootingConfig::default()).unwrap();
        (p, geom)
    }

    /// Root of `mu tanh(mu) = target(mu)` style equations by plain bisection.
    fn bisect(g: impl Fn(f64) -> f64, mut lo: f64, mut hi: f64) -> f64 {
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if g(lo) * g(mid) <= 0.0 {
                hi = mid;
            } else {
                lo = mid;
            }
        }
        0.5 * (lo + hi)
    }

    #[test]
    fn dirichlet_constant_source() {
        let f = Nonlinearity::Constant { a: 1.0 };
        let (p, geom) = setup(&f, 1);
        let s = dirichlet_spectrum(&p, &f, &geom, 3).unwrap();
        for (j, g) in s.eigenvalues.iter().enumerate() {
            let exact = ((2 * j + 1) as f64 * PI / 2.0).powi(2);
            assert!(
                (g - exact).abs() < 1e-6 * exact.max(1.0),
                "{j}: {g} vs {exact}"
            );
        }
        assert_eq!(s.negative_count, 0);
        let (p, geom) = setup(&f, 3);
        let s = dirichlet_spectrum(&p, &f, &geom, 2).unwrap();
        assert!((s.eigenvalues[0] - PI * PI).abs() < 1e-5);
        assert!((s.eigenvalues[1] - 4.0 * PI * PI).abs() < 1e-5);
        // radial eigenfunction sin(πr)/(πr), normalized
        let z = &s.eigenfunctions[0];
        let ratio = z.values[0] / z.values[200];
        assert!((ratio - 1.0 / ((PI * 0.5).sin() / (PI * 0.5))).abs() < 1e-8);
    }

    #[test]
    fn robin_constant_source() {
        let f = Nonlinearity::Constant { a: 1.0 };
        let mu1 = bisect(|m| m * m.tanh() - 1.0, 0.5, 2.0);
        let (p, geom) = setup(&f, 1);
        let s = robin_spectrum(&p, &f, &geom, p.robin_c, 2).unwrap();
        assert!((s.eigenvalues[0] + mu1 * mu1).abs() < 1e-8);
        let mu3 = bisect(|m| m.tanh() - m / 2.0, 1.0, 3.0);
        let (p, geom) = setup(&f, 3);
        let s = robin_spectrum(&p, &f, &geom, p.robin_c, 2).unwrap();
        assert!((s.eigenvalues[0] + mu3 * mu3).abs() < 1e-6);
        let psi = &s.eigenfunctions[0];
        let bc = psi.boundary_derivative() + p.robin_c * psi.boundary_value();
        assert!(bc.abs() < 1e-8);
    }

    #[test]
    fn neumann_constant_mode() {
        let f = Nonlinearity::Constant { a: 1.0 };
        let (p, geom) = setup(&f, 1);
        let s = robin_spectrum(&p, &f, &geom, 0.0, 2).unwrap();
        assert!(s.eigenvalues[0].abs() < 1e-10);
        let v = &s.eigenfunctions[0].values;
        assert!(v.iter().all(|x| (x - v[0]).abs() < 1e-10));
        assert!((s.eigenvalues[1] - PI * PI).abs() < 1e-6);
    }

    #[test]
    fn linear_degenerate_case() {
        let f = Nonlinearity::Linear {
            lambda: PI * PI / 4.0,
        };
        let geom = BallGeometry::new(1).unwrap();
        let p = match solve_ground_profile(&f, &geom, &ShootingConfig::default()) {
            Err(RadialError::ScaleInvariant { representative, .. }) => *representative,
            other => panic!("{other:?}"),
        };
        let s = dirichlet_spectrum(&p, &f, &geom, 2).unwrap();
        assert!(s.eigenvalues[0].abs() < 1e-6);
        let report = check_assumptions(&s, NONDEGENERACY_TOL);
        assert_eq!(report.verdict, AssumptionVerdict::Degenerate);
    }

    #[test]
    fn power_nonlinearity_structure() {
        let f = Nonlinearity::PowerMinusLinear { p: 3.0 };
        let (p, geom) = setup(&f, 2);
        let d = dirichlet_spectrum(&p, &f, &geom, 4).unwrap();
        let report = check_assumptions(&d, NONDEGENERACY_TOL);
        assert!(report.passed(), "{report:?}");
        assert_eq!(report.negative_count, 1);
        assert!(d.eigenvalues[0] < 0.0 && d.eigenvalues[1] > 0.0);
        let r = robin_spectrum(&p, &f, &geom, p.robin_c, 3).unwrap();
        assert!(r.eigenvalues[0] < d.eigenvalues[0].min(0.0));
    }

    #[test]
    fn rayleigh_and_orthogonality() {
        let f = Nonlinearity::PowerMinusLinear { p: 3.0 };
        let (p, geom) = setup(&f, 2);
        for s in [
            dirichlet_spectrum(&p, &f, &geom, 4).unwrap(),
            robin_spectrum(&p, &f, &geom, p.robin_c, 4).unwrap(),
        ] {
            let c = match s.bc {
                BoundaryCondition::Robin { c } => c,
                BoundaryCondition::Dirichlet => 0.0,
            };
            for (j, psi) in s.eigenfunctions.iter().enumerate() {
                let q = quadratic_form_q(&p, &f, &geom, c, psi, true);
                assert!(
                    (q - s.eigenvalues[j]).abs() < 1e-6,
                    "{:?} {j}: {q} vs {}",
                    s.bc,
                    s.eigenvalues[j]
                );
                assert!((ball_inner(psi, psi, &geom) - 1.0).abs() < 1e-12);
                for i in 0..j {
                    let ip = ball_inner(psi, &s.eigenfunctions[i], &geom);
                    assert!(ip.abs() < 1e-8, "{:?} <{i},{j}> = {ip:e}", s.bc);
                }
            }
            for w in s.eigenvalues.windows(2) {
                assert!(w[1] - w[0] > 1e-6);
            }
        }
    }

    #[test]
    fn derivative_form_identity() {
        for (f, n) in [
            (Nonlinearity::Constant { a: 1.0 }, 3),
            (Nonlinearity::PowerMinusLinear { p: 3.0 }, 2),
            (Nonlinearity::Gelfand { lambda: 0.2 }, 2),
        ] {
            let (p, geom) = setup(&f, n);
            let chk = derivative_form_check(&p, &f, &geom);
            assert!(chk.defect() < 1e-4, "{f:?}: {chk:?}");
        }
        // n = 3, f = 1: φ₁' = -r/3, so the right side is -2 ω₃ / 27
        let f = Nonlinearity::Constant { a: 1.0 };
        let (p, geom) = setup(&f, 3);
        let chk = derivative_form_check(&p, &f, &geom);
        assert!((chk.expected + 2.0 * 4.0 * PI / 27.0).abs() < 1e-10);
        let (p, geom) = setup(&f, 1);
        assert!(derivative_form_check(&p, &f, &geom).q_value.abs() < 1e-6);
    }

    #[test]
    fn boundary_normalization() {
        let f = Nonlinearity::Constant { a: 1.0 };
        let (p, geom) = setup(&f, 1);
        let s = robin_spectrum(&p, &f, &geom, -1.0, 2).unwrap();
        let b = s
            .renormalized(&geom, Normalization::UnitBoundaryValue)
            .unwrap();
        assert!((b.eigenfunctions[0].boundary_value() - 1.0).abs() < 1e-14);
        let mu = (-s.eigenvalues[0]).sqrt();
        let (v, _) = b.eigenfunctions[0].eval(0.0).unwrap();
        assert!((v - 1.0 / mu.cosh()).abs() < 1e-9);
        let d = dirichlet_spectrum(&p, &f, &geom, 1).unwrap();
        assert!(d
            .renormalized(&geom, Normalization::UnitBoundaryValue)
            .is_err());
    }
}
