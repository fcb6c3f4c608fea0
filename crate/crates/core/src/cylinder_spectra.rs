//! Linear analysis on the straight cylinder: the period thresholds, the
//! Fourier symbol `σ_k(T)` of the linearized Dirichlet-to-Neumann operator,
//! the bifurcation period and the transversality derivative.

use std::f64::consts::PI;
use std::path::Path;

use rayon::prelude::*;
use serde::Serialize;
use thiserror::Error;

use crate::ball_spectra::Spectrum;
use crate::dtn::EvenFourierProfile;
use crate::nonlinearity::Nonlinearity;
use crate::numerics::{
    find_root, richardson, simpson_extrapolated, BallGeometry, BandMatrix, NumericsError,
    UniformGrid1D,
};
use crate::radial_ball::{RadialFunction, RadialProfile, RadialShooter};

#[derive(Debug, Clone, Error)]
pub enum CylinderError {
    #[error("γ_D1 = 0: the Dirichlet linearization is degenerate")]
    DegenerateThreshold,
    #[error("γ₁ = {0} is not negative; the Robin ground eigenvalue is inconsistent")]
    InconsistentRobin(f64),
    #[error("period must be positive and finite, got {0}")]
    InvalidPeriod(f64),
    #[error("mode {k} at T = {period} is nearly degenerate (boundary value ratio {ratio:e})")]
    Conditioning { k: usize, period: f64, ratio: f64 },
    #[error("no sign change of σ₁ found on (0, {upper})")]
    NoSignChange { upper: f64 },
    #[error("profile has no coefficient for mode {0}")]
    MissingMode(usize),
    #[error("spectrum has {available} eigenvalues, need at least {needed}")]
    ShortSpectrum { available: usize, needed: usize },
    #[error(transparent)]
    Numerics(#[from] NumericsError),
    #[error("csv export failed: {0}")]
    Export(String),
}

/// `2π/√(-γ_D1)` when `γ_D1 < 0`, `+∞` when `γ_D1 > 0`.
pub fn t_bar(gamma_d1: f64) -> Result<f64, CylinderError> {
    if gamma_d1 == 0.0 || gamma_d1.is_nan() {
        Err(CylinderError::DegenerateThreshold)
    } else if gamma_d1 < 0.0 {
        Ok(2.0 * PI / (-gamma_d1).sqrt())
    } else {
        Ok(f64::INFINITY)
    }
}

/// `2π/√(-γ₁)`.
pub fn t_star(gamma_1: f64) -> Result<f64, CylinderError> {
    if gamma_1 < 0.0 {
        Ok(2.0 * PI / (-gamma_1).sqrt())
    } else {
        Err(CylinderError::InconsistentRobin(gamma_1))
    }
}

/// Fourier frequency `2πk/T`.
pub fn wavenumber(k: usize, period: f64) -> f64 {
    2.0 * PI * k as f64 / period
}

/// Separated mode `ρ_k` with `ρ_k(1) = 1` at period `T`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ModeProfile {
    pub k: usize,
    pub period: f64,
    pub values: RadialFunction,
    /// `ρ_k'(1)`, extrapolated over two grids.
    pub flux: f64,
    pub flux_error_estimate: f64,
    /// `ρ_k'(1) + c`
    pub sigma_k: f64,
}

impl ModeProfile {
    /// `max |ρ'' + (n-1)/r ρ' + (f'(φ₁) - κ²) ρ|` over interior nodes, with
    /// `ρ''` from sixth-order differences of `ρ'`, relative to `max(1, κ²)`.
    pub fn residual(&self, profile: &RadialProfile, f: &Nonlinearity) -> f64 {
        let n = profile.dimension as f64;
        let kappa2 = wavenumber(self.k, self.period).powi(2);
        let grid = self.values.grid;
        let h = grid.spacing();
        let d = &self.values.derivatives;
        let v = &self.values.values;
        let m = grid.n_points();
        (3..m - 3)
            .map(|i| {
                let r = grid.node(i);
                let dd = (d[i + 3] - 9.0 * d[i + 2] + 45.0 * d[i + 1] - 45.0 * d[i - 1]
                    + 9.0 * d[i - 2]
                    - d[i - 3])
                    / (60.0 * h);
                let q = f.slope(profile.values[i]);
                (dd + (n - 1.0) / r * d[i] + (q - kappa2) * v[i]).abs()
            })
            .fold(0.0, f64::max)
            / kappa2.max(1.0)
    }
}

fn shoot_mode(
    f: &Nonlinearity,
    geom: &BallGeometry,
    grid: UniformGrid1D,
    substeps: usize,
    a: f64,
    k: usize,
    period: f64,
) -> Result<RadialFunction, CylinderError> {
    let kappa2 = wavenumber(k, period).powi(2);
    let shooter = RadialShooter::new(f, geom.n, grid, substeps);
    let shot = shooter.shoot(a, &[-kappa2]);
    let (values, derivatives) = shot.companions.into_iter().next().unwrap();
    let scale = values.iter().fold(0.0_f64, |m, v| m.max(v.abs()));
    let b = *values.last().unwrap();
    if !(b.abs() > 1e-10 * scale) {
        return Err(CylinderError::Conditioning {
            k,
            period,
            ratio: b.abs() / scale,
        });
    }
    Ok(RadialFunction {
        grid,
        values,
        derivatives,
    }
    .scaled(1.0 / b))
}

/// Solves `ρ'' + (n-1)/r ρ' + (f'(φ₁) - (2πk/T)²) ρ = 0`, `ρ(1) = 1`,
/// regular at the center, by shooting from the center on the profile grid and
/// on its refinement; the flux is extrapolated from the two.
pub fn mode_solution(
    profile: &RadialProfile,
    f: &Nonlinearity,
    geom: &BallGeometry,
    k: usize,
    period: f64,
) -> Result<ModeProfile, CylinderError> {
    if !(period > 0.0) || !period.is_finite() {
        return Err(CylinderError::InvalidPeriod(period));
    }
    let a = profile.center_value;
    let coarse = shoot_mode(f, geom, profile.grid, profile.substeps, a, k, period)?;
    let fine = shoot_mode(
        f,
        geom,
        profile.grid.refined(),
        profile.substeps,
        a,
        k,
        period,
    )?;
    let (fc, ff) = (coarse.boundary_derivative(), fine.boundary_derivative());
    let flux = richardson(fc, ff, 4);
    Ok(ModeProfile {
        k,
        period,
        values: coarse,
        flux,
        flux_error_estimate: (ff - flux).abs(),
        sigma_k: flux + profile.robin_c,
    })
}

/// `σ_k(T) = ρ_k'(1) + c`.
pub fn sigma_k(
    profile: &RadialProfile,
    f: &Nonlinearity,
    geom: &BallGeometry,
    c: f64,
    k: usize,
    period: f64,
) -> Result<f64, CylinderError> {
    Ok(mode_solution(profile, f, geom, k, period)?.flux + c)
}

/// Finite-volume radial operator shared with the two-dimensional solver.
///
/// Nodes `r_i = i h`, cells `[r_{i-1/2}, r_{i+1/2}] ∩ [0, 1]` with exact
/// volumes and face coefficients `r_{i+1/2}^{n-1}`. Row `i` of
/// [`FiniteVolumeRadial::row`] approximates `Δ_rad ρ (r_i)`.
#[derive(Debug, Clone)]
pub(crate) struct FiniteVolumeRadial {
    pub h: f64,
    pub faces: Vec<f64>,
    pub volumes: Vec<f64>,
}

impl FiniteVolumeRadial {
    pub fn new(grid: UniformGrid1D, geom: &BallGeometry) -> Self {
        let m = grid.n_points();
        let h = grid.spacing();
        let nf = geom.n as f64;
        let faces = (0..m - 1)
            .map(|i| geom.radial_weight((i as f64 + 0.5) * h))
            .collect();
        let volumes = (0..m)
            .map(|i| {
                let lo = if i == 0 { 0.0 } else { (i as f64 - 0.5) * h };
                let hi = if i + 1 == m {
                    1.0
                } else {
                    (i as f64 + 0.5) * h
                };
                (hi.powf(nf) - lo.powf(nf)) / nf
            })
            .collect();
        Self { h, faces, volumes }
    }

    pub fn len(&self) -> usize {
        self.volumes.len()
    }

    /// Coefficients `(lower, diag, upper)` of `Δ_rad` at interior node `i < N-1`.
    pub fn row(&self, i: usize) -> (f64, f64, f64) {
        let w = self.volumes[i] * self.h;
        let lower = if i > 0 { self.faces[i - 1] / w } else { 0.0 };
        let upper = self.faces[i] / w;
        (lower, -(lower + upper), upper)
    }

    /// `ρ'(1)` from the balance over the boundary half-cell, given the value of
    /// `Δ_rad ρ` at `r = 1`.
    pub fn boundary_flux(&self, values: &[f64], laplacian_at_boundary: f64) -> f64 {
        let m = self.len();
        self.faces[m - 2] * (values[m - 1] - values[m - 2]) / self.h
            + self.volumes[m - 1] * laplacian_at_boundary
    }
}

/// Mode solution of the finite-volume two-point problem (banded solve), with
/// the boundary flux from the half-cell balance; values on the profile grid
/// and flux not extrapolated.
pub fn mode_solution_fv(
    profile: &RadialProfile,
    f: &Nonlinearity,
    geom: &BallGeometry,
    k: usize,
    period: f64,
) -> Result<(Vec<f64>, f64), CylinderError> {
    let op = FiniteVolumeRadial::new(profile.grid, geom);
    let m = op.len();
    let kappa2 = wavenumber(k, period).powi(2);
    let q: Vec<f64> = profile.values.iter().map(|u| f.slope(*u)).collect();
    let unknowns = m - 1;
    let mut a = BandMatrix::zeros(unknowns, 1, 1);
    let mut rhs = vec![0.0; unknowns];
    for i in 0..unknowns {
        let (l, d, u) = op.row(i);
        a.set(i, i, d + q[i] - kappa2);
        if i > 0 {
            a.set(i, i - 1, l);
        }
        if i + 1 < unknowns {
            a.set(i, i + 1, u);
        } else {
            rhs[i] = -u;
        }
    }
    let lu = a.factor().map_err(|e| match e {
        NumericsError::Singular { ratio } => CylinderError::Conditioning { k, period, ratio },
        other => other.into(),
    })?;
    let mut values = lu.solve(&rhs);
    values.push(1.0);
    let flux = op.boundary_flux(&values, -(q[m - 1] - kappa2));
    Ok((values, flux))
}

/// `σ(T) = min_{1≤k≤k_max} σ_k(T)` over a list of periods.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SigmaCurve {
    pub t_values: Vec<f64>,
    pub sigma_values: Vec<f64>,
    pub minimizing_k: Vec<usize>,
    /// `σ_k(T)` for `k = 1..=k_max` at each period.
    pub mode_values: Vec<Vec<f64>>,
    /// Periods at which some `k ≥ 2` undercuts `k = 1`.
    pub dominance_violations: Vec<f64>,
}

impl SigmaCurve {
    /// Number of strict sign changes along the curve.
    pub fn sign_changes(&self) -> usize {
        self.sigma_values
            .windows(2)
            .filter(|w| w[0] * w[1] < 0.0)
            .count()
    }

    pub fn write_csv(&self, path: &Path) -> Result<(), CylinderError> {
        let err = |e: csv::Error| CylinderError::Export(e.to_string());
        let mut w = csv::Writer::from_path(path).map_err(err)?;
        w.write_record(["T", "sigma", "k_min"]).map_err(err)?;
        for i in 0..self.t_values.len() {
            w.write_record(&[
                format!("{:.17e}", self.t_values[i]),
                format!("{:.17e}", self.sigma_values[i]),
                self.minimizing_k[i].to_string(),
            ])
            .map_err(err)?;
        }
        w.flush().map_err(|e| CylinderError::Export(e.to_string()))
    }
}

pub fn sigma_curve(
    profile: &RadialProfile,
    f: &Nonlinearity,
    geom: &BallGeometry,
    c: f64,
    t_values: &[f64],
    k_max: usize,
) -> Result<SigmaCurve, CylinderError> {
    let rows: Vec<Vec<f64>> = t_values
        .par_iter()
        .map(|&period| {
            (1..=k_max)
                .map(|k| sigma_k(profile, f, geom, c, k, period))
                .collect::<Result<Vec<_>, _>>()
        })
        .collect::<Result<_, _>>()?;
    let mut sigma_values = Vec::with_capacity(rows.len());
    let mut minimizing_k = Vec::with_capacity(rows.len());
    let mut dominance_violations = Vec::new();
    for (row, &period) in rows.iter().zip(t_values) {
        let (kmin, smin) =
            row.iter().enumerate().fold(
                (0, f64::INFINITY),
                |acc, (i, s)| if *s < acc.1 { (i, *s) } else { acc },
            );
        sigma_values.push(smin);
        minimizing_k.push(kmin + 1);
        if kmin > 0 {
            dominance_violations.push(period);
        }
    }
    Ok(SigmaCurve {
        t_values: t_values.to_vec(),
        sigma_values,
        minimizing_k,
        mode_values: rows,
        dominance_violations,
    })
}

/// Largest period scanned when `T̄ = ∞`.
pub const PERIOD_SCAN_CAP: f64 = 1e4;

/// Root of `T ↦ σ₁(T)` on `(0, T̄)`: geometric scan from small periods up to
/// the first sign change, then bracketed refinement.
pub fn find_t_star_by_root(
    profile: &RadialProfile,
    f: &Nonlinearity,
    geom: &BallGeometry,
    c: f64,
    t_bar: f64,
) -> Result<f64, CylinderError> {
    let upper = if t_bar.is_finite() {
        t_bar
    } else {
        PERIOD_SCAN_CAP
    };
    let sigma1 = |t: f64| sigma_k(profile, f, geom, c, 1, t);
    let lo = 1e-2 * upper.min(1.0);
    let steps = 400;
    let ratio = (upper / lo).powf(1.0 / steps as f64);
    let mut t_prev = lo;
    let mut s_prev = sigma1(t_prev)?;
    // geometric scan, then halving the gap to a finite threshold
    let halvings = if t_bar.is_finite() { 40 } else { 0 };
    for i in 1..steps + halvings {
        let t = if i < steps {
            lo * ratio.powi(i)
        } else {
            upper - 0.5 * (upper - t_prev)
        };
        let s = match sigma1(t) {
            Ok(s) => s,
            // the mode problem degenerates only at or beyond the threshold
            Err(CylinderError::Conditioning { .. }) => break,
            Err(e) => return Err(e),
        };
        if s_prev * s <= 0.0 {
            let g = |x: f64| sigma1(x).unwrap_or(f64::NAN);
            let root = find_root(g, (t_prev, t), 1e-12 * t)?;
            // a sign flip through a pole is not a root
            if g(root).abs() <= 1e-6 * (1.0 + s_prev.abs().min(s.abs())) {
                return Ok(root);
            }
        }
        t_prev = t;
        s_prev = s;
    }
    Err(CylinderError::NoSignChange { upper })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum ActiveBranch {
    /// `γ_{D,l+1}` attains the minimum.
    Spectral,
    /// The Fourier-shifted ground value attains the minimum.
    Shifted,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct AlphaBeta {
    pub alpha: f64,
    pub beta: f64,
    pub alpha_branch: ActiveBranch,
    pub beta_branch: ActiveBranch,
}

/// `α = min{γ_{D,l+1}, γ_D1 + 4π²/T²}`, `β = min{γ_{D,l+1}, γ₁ + 4π²/T²}`.
pub fn alpha_beta(
    dirichlet: &Spectrum,
    gamma_1: f64,
    period: f64,
) -> Result<AlphaBeta, CylinderError> {
    let l = dirichlet.negative_count;
    if dirichlet.eigenvalues.len() < l + 1 {
        return Err(CylinderError::ShortSpectrum {
            available: dirichlet.eigenvalues.len(),
            needed: l + 1,
        });
    }
    if !(period > 0.0) {
        return Err(CylinderError::InvalidPeriod(period));
    }
    let spectral = dirichlet.eigenvalues[l];
    let shift = 4.0 * PI * PI / (period * period);
    let pick = |shifted: f64| {
        if spectral <= shifted {
            (spectral, ActiveBranch::Spectral)
        } else {
            (shifted, ActiveBranch::Shifted)
        }
    };
    let (alpha, alpha_branch) = pick(dirichlet.eigenvalues[0] + shift);
    let (beta, beta_branch) = pick(gamma_1 + shift);
    Ok(AlphaBeta {
        alpha,
        beta,
        alpha_branch,
        beta_branch,
    })
}

/// `J_T(v) = ½ Σ σ_k v_k²`, with `sigma_ks[k - 1] = σ_k(T)`.
pub fn jt_quadratic(v: &EvenFourierProfile, sigma_ks: &[f64]) -> Result<f64, CylinderError> {
    let mut total = 0.0;
    for (i, vk) in v.coefficients.iter().enumerate() {
        if *vk == 0.0 {
            continue;
        }
        let s = sigma_ks.get(i).ok_or(CylinderError::MissingMode(i + 1))?;
        total += 0.5 * s * vk * vk;
    }
    Ok(total)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct TransversalityReport {
    /// `d/dT J_T(cos 2πt)` at `T*` by extrapolated centered differences.
    pub derivative: f64,
    /// `-(4π²/T*³) ∫₀¹ r^{n-1} ψ₁² dr` with `ψ₁(1) = 1`.
    pub expected: f64,
    pub relative_error: f64,
    /// `(T*/2) γ₁ ‖ψ₁‖² + (2π²/T*) ‖ψ₁‖²`
    pub consistency_defect: f64,
    pub step: f64,
}

impl TransversalityReport {
    pub fn passed(&self, rel_tol: f64) -> bool {
        self.relative_error <= rel_tol && self.derivative < 0.0 && self.derivative.abs() > rel_tol
    }
}

/// Transversality derivative at `T*` and its closed-form counterpart.
///
/// `psi1` is the Robin ground state scaled to `ψ₁(1) = 1`.
pub fn transversality(
    profile: &RadialProfile,
    f: &Nonlinearity,
    geom: &BallGeometry,
    c: f64,
    t_star: f64,
    gamma_1: f64,
    psi1: &RadialFunction,
) -> Result<TransversalityReport, CylinderError> {
    let j =
        |t: f64| -> Result<f64, CylinderError> { Ok(0.5 * sigma_k(profile, f, geom, c, 1, t)?) };
    let centered = |d: f64| -> Result<f64, CylinderError> {
        Ok((j(t_star + d)? - j(t_star - d)?) / (2.0 * d))
    };
    // σ₁ has a pole at T̄, which may sit close to T*: halve the step until
    // successive extrapolated differences agree
    let mut step = 2e-3 * t_star;
    let mut half = centered(0.5 * step)?;
    let mut derivative = richardson(centered(step)?, half, 2);
    for _ in 0..16 {
        let quarter = centered(0.25 * step)?;
        let next = richardson(half, quarter, 2);
        let settled = (next - derivative).abs() <= 1e-7 * next.abs();
        derivative = next;
        half = quarter;
        step *= 0.5;
        if settled {
            break;
        }
    }
    let grid = psi1.grid;
    let y: Vec<f64> = (0..grid.n_points())
        .map(|i| geom.radial_weight(grid.node(i)) * psi1.values[i].powi(2))
        .collect();
    let mass = simpson_extrapolated(&y, grid.spacing());
    let expected = -4.0 * PI * PI / t_star.powi(3) * mass;
    let norm2 = geom.omega_n * mass;
    Ok(TransversalityReport {
        derivative,
        expected,
        relative_error: ((derivative - expected) / expected).abs(),
        consistency_defect: 0.5 * t_star * gamma_1 * norm2 + 2.0 * PI * PI / t_star * norm2,
        step,
    })
}

/// `Q^T(ψ_v)` for `ψ_v(r, τ) = Σ v_k ρ_k(r) cos(2πkτ/T)` by direct quadrature
/// over `B × [0, T]`: Simpson in `r`, periodic trapezoid in `τ`.
pub fn cylinder_form_by_quadrature(
    profile: &RadialProfile,
    f: &Nonlinearity,
    geom: &BallGeometry,
    c: f64,
    v: &EvenFourierProfile,
    period: f64,
    t_nodes: usize,
) -> Result<f64, CylinderError> {
    let modes: Vec<(usize, f64, ModeProfile)> = v
        .coefficients
        .iter()
        .enumerate()
        .filter(|(_, vk)| **vk != 0.0)
        .map(|(i, vk)| Ok((i + 1, *vk, mode_solution(profile, f, geom, i + 1, period)?)))
        .collect::<Result<_, CylinderError>>()?;
    let grid = profile.grid;
    let m = grid.n_points();
    let dtau = period / t_nodes as f64;
    let q: Vec<f64> = profile.values.iter().map(|u| f.slope(*u)).collect();
    let mut bulk = 0.0;
    let mut boundary = 0.0;
    let mut column = vec![0.0; m];
    for j in 0..t_nodes {
        let tau = j as f64 * dtau;
        for (i, col) in column.iter_mut().enumerate() {
            let (mut psi, mut dr, mut dt) = (0.0, 0.0, 0.0);
            for (k, vk, mode) in &modes {
                let w = wavenumber(*k, period);
                psi += vk * mode.values.values[i] * (w * tau).cos();
                dr += vk * mode.values.derivatives[i] * (w * tau).cos();
                dt -= vk * w * mode.values.values[i] * (w * tau).sin();
            }
            *col = geom.radial_weight(grid.node(i)) * (dr * dr + dt * dt - q[i] * psi * psi);
            if i + 1 == m {
                boundary += psi * psi * dtau;
            }
        }
        bulk += simpson_extrapolated(&column, grid.spacing()) * dtau;
    }
    Ok(geom.omega_n * (bulk + c * boundary))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::radial_ball::{solve_ground_profile, ShootingConfig};

    fn setup(f: &Nonlinearity, n: usize) -> (RadialProfile, BallGeometry) {
        let geom = BallGeometry::new(n).unwrap();
        (
            solve_ground_profile(f, &geom, &ShootingConfig::default()).unwrap(),
            geom,
        )
    }

    #[test]
    fn thresholds() {
        assert!((t_bar(-4.0 * PI * PI).unwrap() - 1.0).abs() < 1e-15);
        assert!((t_bar(-PI * PI).unwrap() - 2.0).abs() < 1e-15);
        assert_eq!(t_bar(PI * PI / 4.0).unwrap(), f64::INFINITY);
        assert!(matches!(
            t_bar(0.0),
            Err(CylinderError::DegenerateThreshold)
        ));
        assert!((t_star(-4.0 * PI * PI).unwrap() - 1.0).abs() < 1e-15);
        assert!(t_star(0.1).is_err());
    }

    #[test]
    fn constant_source_modes() {
        let f = Nonlinearity::Constant { a: 1.0 };
        let (p, geom) = setup(&f, 1);
        for (k, period) in [(1, 3.0), (1, 7.5), (2, 1.0), (3, 0.7)] {
            let m = mode_solution(&p, &f, &geom, k, period).unwrap();
            let w = wavenumber(k, period);
            assert!(
                (m.flux - w * w.tanh()).abs() < 1e-8,
                "k={k} T={period}: {}",
                m.flux - w * w.tanh()
            );
            let (v, _) = m.values.eval(0.4).unwrap();
            assert!((v - (w * 0.4).cosh() / w.cosh()).abs() < 1e-9);
            assert!(m.residual(&p, &f) < 1e-8);
        }
        let m0 = mode_solution(&p, &f, &geom, 0, 2.0).unwrap();
        assert!(m0.flux.abs() < 1e-12);
        assert!(m0.values.values.iter().all(|v| (v - 1.0).abs() < 1e-12));
    }

    #[test]
    fn finite_volume_mode_path_agrees() {
        let f = Nonlinearity::PowerMinusLinear { p: 3.0 };
        let (p, geom) = setup(&f, 2);
        let fine = p.refined();
        for k in 1..=8 {
            let period = 2.5;
            let exact = mode_solution(&p, &f, &geom, k, period).unwrap().flux;
            let (_, f1) = mode_solution_fv(&p, &f, &geom, k, period).unwrap();
            let (_, f2) = mode_solution_fv(&fine, &f, &geom, k, period).unwrap();
            let extrapolated = richardson(f1, f2, 2);
            assert!(
                (extrapolated - exact).abs() < 5e-5,
                "k = {k}: {}",
                extrapolated - exact
            );
        }
    }

    #[test]
    fn sigma_curve_constant_source() {
        let f = Nonlinearity::Constant { a: 1.0 };
        let (p, geom) = setup(&f, 1);
        let mu = find_root(|m| m * m.tanh() - 1.0, (0.5, 2.0), 1e-15).unwrap();
        let ts = 2.0 * PI / mu;
        let curve =
            sigma_curve(&p, &f, &geom, p.robin_c, &[1.0, ts - 0.5, ts, ts + 0.5], 8).unwrap();
        assert!((curve.sigma_values[0] - (2.0 * PI * (2.0 * PI).tanh() - 1.0)).abs() < 1e-6);
        assert!(curve.sigma_values[1] > 0.0 && curve.sigma_values[3] < 0.0);
        assert!(curve.sigma_values[2].abs() < 1e-6);
        assert!(curve.minimizing_k.iter().all(|k| *k == 1));
        assert!(curve.dominance_violations.is_empty());
    }

    #[test]
    fn t_star_by_root_matches_closed_form() {
        let f = Nonlinearity::Constant { a: 1.0 };
        let (p, geom) = setup(&f, 1);
        let mu = find_root(|m| m * m.tanh() - 1.0, (0.5, 2.0), 1e-15).unwrap();
        let t = find_t_star_by_root(&p, &f, &geom, p.robin_c, f64::INFINITY).unwrap();
        assert!((t - 2.0 * PI / mu).abs() < 1e-8);
        let (p, geom) = setup(&f, 3);
        let mu = find_root(|m| m.tanh() - m / 2.0, (1.0, 3.0), 1e-15).unwrap();
        let t = find_t_star_by_root(&p, &f, &geom, p.robin_c, f64::INFINITY).unwrap();
        assert!((t - 2.0 * PI / mu).abs() < 1e-7);
    }

    #[test]
    fn quadratic_functional() {
        let v = EvenFourierProfile::new(vec![1.0]).unwrap();
        let s = 2.0 * PI * (2.0 * PI).tanh() - 1.0;
        assert!((jt_quadratic(&v, &[s]).unwrap() - 0.5 * s).abs() < 1e-15);
        assert_eq!(
            jt_quadratic(&EvenFourierProfile::zeros(3), &[]).unwrap(),
            0.0
        );
        let w = EvenFourierProfile::new(vec![0.0, 1.0]).unwrap();
        assert!(matches!(
            jt_quadratic(&w, &[1.0]),
            Err(CylinderError::MissingMode(2))
        ));
    }

    #[test]
    fn constant_source_transversality() {
        let f = Nonlinearity::Constant { a: 1.0 };
        let (p, geom) = setup(&f, 1);
        let mu = find_root(|m| m * m.tanh() - 1.0, (0.5, 2.0), 1e-15).unwrap();
        let ts = 2.0 * PI / mu;
        let m = mode_solution(&p, &f, &geom, 1, ts).unwrap();
        let rep = transversality(&p, &f, &geom, p.robin_c, ts, -mu * mu, &m.values).unwrap();
        // ∫₀¹ cosh²(μr)/cosh²(μ) dr = (1/2 + sinh(2μ)/(4μ)) / cosh²(μ)
        let mass = (0.5 + (2.0 * mu).sinh() / (4.0 * mu)) / mu.cosh().powi(2);
        let exact = -4.0 * PI * PI / ts.powi(3) * mass;
        assert!((rep.expected - exact).abs() < 1e-10);
        assert!((rep.derivative - exact).abs() < 1e-5 * exact.abs());
        assert!(rep.consistency_defect.abs() < 1e-9);
        assert!(rep.passed(1e-4));
    }

    #[test]
    fn cylinder_form_matches_mode_sum() {
        let f = Nonlinearity::PowerMinusLinear { p: 3.0 };
        let (p, geom) = setup(&f, 2);
        let period = 2.0;
        let v = EvenFourierProfile::new(vec![1.0, 0.5, -0.25]).unwrap();
        let sig: Vec<f64> = (1..=3)
            .map(|k| sigma_k(&p, &f, &geom, p.robin_c, k, period).unwrap())
            .collect();
        let direct = cylinder_form_by_quadrature(&p, &f, &geom, p.robin_c, &v, period, 32).unwrap();
        let via_j = period * geom.omega_n * jt_quadratic(&v, &sig).unwrap();
        assert!((direct - via_j).abs() < 1e-6, "{direct} vs {via_j}");
    }
}
