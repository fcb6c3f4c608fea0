//! Radial ground state of `Δφ + f(φ) = 0` in the unit ball with `φ = 0` on
//! the boundary, computed by shooting on the central amplitude.

use std::path::Path;

use serde::Serialize;
use thiserror::Error;

use crate::nonlinearity::{hermite, hermite_deriv, Nonlinearity};
use crate::numerics::{find_root, BallGeometry, NumericsError, UniformGrid1D};

#[derive(Debug, Clone, Error)]
pub enum RadialError {
    #[error(
        "positive ground state unverified: no amplitude in [{lo}, {hi}] shoots to zero at r = 1"
    )]
    NoGroundState { lo: f64, hi: f64 },
    #[error("scale-invariant family: the shooting map is flat in the amplitude (max |dφ(1)/da| = {max_slope:e})")]
    ScaleInvariant {
        max_slope: f64,
        /// Member of the family with unit central value.
        representative: Box<RadialProfile>,
    },
    #[error("positivity failure: every zero-flux amplitude ({count} found) gives a profile vanishing before r = 1")]
    Positivity { count: usize },
    #[error("degenerate boundary flux φ'(1) = {0:e}")]
    DegenerateFlux(f64),
    #[error("r = {0} lies outside [0, 1]")]
    OutOfRange(f64),
    #[error("invalid shooting configuration: {0}")]
    Config(String),
    #[error(transparent)]
    Numerics(#[from] NumericsError),
    #[error("csv export failed: {0}")]
    Export(String),
}

/// Controls for the amplitude scan and the radial integrator.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ShootingConfig {
    /// Radial nodes on `[0, 1]` (odd, so Simpson weights and grid halving line up).
    pub n_points: usize,
    /// Integrator steps per grid interval.
    pub substeps: usize,
    pub amplitude_lo: f64,
    pub amplitude_hi: f64,
    pub lattice_points: usize,
}

impl Default for ShootingConfig {
    fn default() -> Self {
        Self {
            n_points: 401,
            substeps: 4,
            amplitude_lo: 1e-4,
            amplitude_hi: 40.0,
            lattice_points: 240,
        }
    }
}

impl ShootingConfig {
    pub fn with_points(n_points: usize) -> Self {
        Self {
            n_points,
            ..Self::default()
        }
    }

    fn validate(&self) -> Result<(), RadialError> {
        if self.n_points < 11 || self.n_points.is_multiple_of(2) {
            return Err(RadialError::Config(format!(
                "radial nodes must be odd and at least 11, got {}",
                self.n_points
            )));
        }
        if self.substeps < 2 {
            return Err(RadialError::Config("need at least two substeps".into()));
        }
        if !(self.amplitude_lo < self.amplitude_hi) || self.lattice_points < 2 {
            return Err(RadialError::Config(format!(
                "bad amplitude lattice [{}, {}] x {}",
                self.amplitude_lo, self.amplitude_hi, self.lattice_points
            )));
        }
        Ok(())
    }

    fn lattice(&self) -> Vec<f64> {
        let m = self.lattice_points;
        let (lo, hi) = (self.amplitude_lo, self.amplitude_hi);
        if lo > 0.0 && hi / lo > 20.0 {
            let (a, b) = (lo.ln(), hi.ln());
            (0..m)
                .map(|i| (a + (b - a) * i as f64 / (m - 1) as f64).exp())
                .collect()
        } else {
            (0..m)
                .map(|i| lo + (hi - lo) * i as f64 / (m - 1) as f64)
                .collect()
        }
    }
}

/// A radial function sampled on a grid together with its derivative.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RadialFunction {
    pub grid: UniformGrid1D,
    pub values: Vec<f64>,
    pub derivatives: Vec<f64>,
}

impl RadialFunction {
    pub fn scaled(&self, factor: f64) -> Self {
        Self {
            grid: self.grid,
            values: self.values.iter().map(|v| v * factor).collect(),
            derivatives: self.derivatives.iter().map(|v| v * factor).collect(),
        }
    }

    pub fn boundary_value(&self) -> f64 {
        *self.values.last().unwrap()
    }

    pub fn boundary_derivative(&self) -> f64 {
        *self.derivatives.last().unwrap()
    }

    /// Cubic Hermite interpolation of value and derivative.
    pub fn eval(&self, r: f64) -> Result<(f64, f64), RadialError> {
        if !(0.0..=1.0).contains(&r) {
            return Err(RadialError::OutOfRange(r));
        }
        let n = self.grid.n_points();
        let h = self.grid.spacing();
        let i = ((r / h).floor() as usize).min(n - 2);
        let (x0, x1) = (self.grid.node(i), self.grid.node(i + 1));
        let (y0, y1) = (self.values[i], self.values[i + 1]);
        let (d0, d1) = (self.derivatives[i], self.derivatives[i + 1]);
        if r == x0 {
            return Ok((y0, d0));
        }
        if r == x1 {
            return Ok((y1, d1));
        }
        Ok((
            hermite(x0, x1, y0, y1, d0, d1, r),
            hermite_deriv(x0, x1, y0, y1, d0, d1, r),
        ))
    }

    /// Same function on the grid with every interval halved.
    pub fn refined(&self) -> Self {
        let grid = self.grid.refined();
        let mut values = Vec::with_capacity(grid.n_points());
        let mut derivatives = Vec::with_capacity(grid.n_points());
        for i in 0..grid.n_points() {
            if i % 2 == 0 {
                values.push(self.values[i / 2]);
                derivatives.push(self.derivatives[i / 2]);
            } else {
                let (v, d) = self.eval(grid.node(i)).expect("node inside [0, 1]");
                values.push(v);
                derivatives.push(d);
            }
        }
        Self {
            grid,
            values,
            derivatives,
        }
    }

    /// Every second node; `None` unless the node count is odd.
    pub fn coarsened(&self) -> Option<Self> {
        let grid = self.grid.coarsened()?;
        Some(Self {
            grid,
            values: self.values.iter().step_by(2).copied().collect(),
            derivatives: self.derivatives.iter().step_by(2).copied().collect(),
        })
    }
}

/// The positive radial ground state `φ₁` with its boundary data.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RadialProfile {
    pub grid: UniformGrid1D,
    pub values: Vec<f64>,
    pub derivative_values: Vec<f64>,
    /// `φ₁'(1)`
    pub d_at_1: f64,
    /// `φ₁(0)`
    pub center_value: f64,
    /// `c = n - 1 + f(0) / φ₁'(1)`
    pub robin_c: f64,
    pub dimension: usize,
    /// Integrator steps per grid interval used to build the profile.
    pub substeps: usize,
}

impl RadialProfile {
    pub fn function(&self) -> RadialFunction {
        RadialFunction {
            grid: self.grid,
            values: self.values.clone(),
            derivatives: self.derivative_values.clone(),
        }
    }

    /// The same profile on the halved grid, filled by Hermite interpolation.
    pub fn refined(&self) -> Self {
        let rf = self.function().refined();
        Self {
            grid: rf.grid,
            values: rf.values,
            derivative_values: rf.derivatives,
            substeps: self.substeps,
            ..self.clone()
        }
    }

    pub fn coarsened(&self) -> Option<Self> {
        let rf = self.function().coarsened()?;
        Some(Self {
            grid: rf.grid,
            values: rf.values,
            derivative_values: rf.derivatives,
            ..self.clone()
        })
    }

    /// `φ₁''` at the nodes from the ODE itself, using the limit `-f(φ(0))/n`
    /// at the center.
    pub fn second_derivative(&self, f: &Nonlinearity) -> Vec<f64> {
        let n = self.dimension as f64;
        (0..self.grid.n_points())
            .map(|i| {
                let r = self.grid.node(i);
                if i == 0 {
                    -f.value(self.values[0]) / n
                } else {
                    -(n - 1.0) / r * self.derivative_values[i] - f.value(self.values[i])
                }
            })
            .collect()
    }

    /// `max |φ'' + (n-1)/r φ' + f(φ)|` over interior nodes, with `φ''` from
    /// sixth-order central differences of the stored derivative.
    pub fn ode_residual(&self, f: &Nonlinearity) -> f64 {
        let n = self.dimension as f64;
        let h = self.grid.spacing();
        let d = &self.derivative_values;
        let m = self.grid.n_points();
        (3..m - 3)
            .map(|i| {
                let r = self.grid.node(i);
                let dd = (d[i + 3] - 9.0 * d[i + 2] + 45.0 * d[i + 1] - 45.0 * d[i - 1]
                    + 9.0 * d[i - 2]
                    - d[i - 3])
                    / (60.0 * h);
                (dd + (n - 1.0) / r * d[i] + f.value(self.values[i])).abs()
            })
            .fold(0.0, f64::max)
    }

    pub fn write_csv(&self, path: &Path) -> Result<(), RadialError> {
        let mut w = csv::Writer::from_path(path).map_err(|e| RadialError::Export(e.to_string()))?;
        w.write_record(["r", "phi", "dphi"])
            .map_err(|e| RadialError::Export(e.to_string()))?;
        for i in 0..self.grid.n_points() {
            w.write_record(&[
                format!("{:.17e}", self.grid.node(i)),
                format!("{:.17e}", self.values[i]),
                format!("{:.17e}", self.derivative_values[i]),
            ])
            .map_err(|e| RadialError::Export(e.to_string()))?;
        }
        w.flush().map_err(|e| RadialError::Export(e.to_string()))
    }
}

/// Value and derivative of the profile at `r` by cubic Hermite interpolation.
pub fn eval_profile(profile: &RadialProfile, r: f64) -> Result<(f64, f64), RadialError> {
    profile.function().eval(r)
}

/// `n - 1 + f(0)/φ₁'(1)`.
pub fn robin_constant(profile: &RadialProfile, f: &Nonlinearity, geom: &BallGeometry) -> f64 {
    (geom.n as f64 - 1.0) + f.value(0.0) / profile.d_at_1
}

/// `-φ₁''(1)/φ₁'(1)` with `φ₁''(1)` from a one-sided second-order difference
/// of the stored derivative; agrees with [`robin_constant`] to `O(h²)`.
pub fn robin_constant_by_differencing(profile: &RadialProfile) -> f64 {
    let d = &profile.derivative_values;
    let m = d.len();
    let h = profile.grid.spacing();
    let dd = (3.0 * d[m - 1] - 4.0 * d[m - 2] + d[m - 3]) / (2.0 * h);
    -dd / profile.d_at_1
}

/// One amplitude at which the shooting map vanishes.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct AmplitudeCandidate {
    pub bracket: (f64, f64),
    pub amplitude: f64,
    /// Profile stays positive on `[0, 1)`.
    pub positive: bool,
    pub d_at_1: f64,
}

/// Fourth-order integrator for the radial equation and linear companions
/// `ψ'' + (n-1)/r ψ' + (f'(φ) + shift) ψ = 0`, `ψ(0) = 1`, `ψ'(0) = 0`.
///
/// The `(n-1)/r` singularity is bridged by the series
/// `φ = a - f(a) r²/(2n) + f(a) f'(a) r⁴/(8n(n+2))` over the first substep.
pub(crate) struct RadialShooter<'a> {
    pub f: &'a Nonlinearity,
    pub n: usize,
    pub grid: UniformGrid1D,
    pub substeps: usize,
}

/// Output of one integration: node values of `φ`, `φ'` and of each companion.
pub(crate) struct Shot {
    pub phi: Vec<f64>,
    pub dphi: Vec<f64>,
    pub companions: Vec<(Vec<f64>, Vec<f64>)>,
}

impl<'a> RadialShooter<'a> {
    pub fn new(f: &'a Nonlinearity, n: usize, grid: UniformGrid1D, substeps: usize) -> Self {
        Self {
            f,
            n,
            grid,
            substeps,
        }
    }

    fn rhs(&self, r: f64, y: &[f64], shifts: &[f64], out: &mut [f64]) {
        let k = (self.n as f64 - 1.0) / r;
        let phi = y[0];
        out[0] = y[1];
        out[1] = -k * y[1] - self.f.value(phi);
        let q = self.f.slope(phi);
        for (j, s) in shifts.iter().enumerate() {
            let (p, dp) = (y[2 + 2 * j], y[3 + 2 * j]);
            out[2 + 2 * j] = dp;
            out[3 + 2 * j] = -k * dp - (q + s) * p;
        }
    }

    fn series(&self, a: f64, shifts: &[f64], r: f64) -> Vec<f64> {
        let n = self.n as f64;
        let fa = self.f.value(a);
        let qa = self.f.slope(a);
        let b = -fa / (2.0 * n);
        let d = fa * qa / (8.0 * n * (n + 2.0));
        let mut y = vec![
            a + b * r * r + d * r.powi(4),
            2.0 * b * r + 4.0 * d * r.powi(3),
        ];
        // f'' at the center, by differencing f'
        let da = 1e-5 * a.abs().max(1.0);
        let f2 = (self.f.slope(a + da) - self.f.slope(a - da)) / (2.0 * da);
        for s in shifts {
            let c = -(qa + s) / (2.0 * n);
            let e = -((qa + s) * c + f2 * b) / (4.0 * (n + 2.0));
            y.push(1.0 + c * r * r + e * r.powi(4));
            y.push(2.0 * c * r + 4.0 * e * r.powi(3));
        }
        y
    }

    /// Integrates from the center with amplitude `a`.
    pub fn shoot(&self, a: f64, shifts: &[f64]) -> Shot {
        let m = self.grid.n_points();
        let h = self.grid.spacing();
        let dt = h / self.substeps as f64;
        let dim = 2 + 2 * shifts.len();
        let mut phi = vec![0.0; m];
        let mut dphi = vec![0.0; m];
        let mut comp: Vec<(Vec<f64>, Vec<f64>)> = shifts
            .iter()
            .map(|_| (vec![0.0; m], vec![0.0; m]))
            .collect();
        let mut y = self.series(a, shifts, 0.0);
        let record = |i: usize,
                      y: &[f64],
                      phi: &mut [f64],
                      dphi: &mut [f64],
                      comp: &mut [(Vec<f64>, Vec<f64>)]| {
            phi[i] = y[0];
            dphi[i] = y[1];
            for (j, c) in comp.iter_mut().enumerate() {
                c.0[i] = y[2 + 2 * j];
                c.1[i] = y[3 + 2 * j];
            }
        };
        record(0, &y, &mut phi, &mut dphi, &mut comp);
        let (mut k1, mut k2, mut k3, mut k4, mut tmp) = (
            vec![0.0; dim],
            vec![0.0; dim],
            vec![0.0; dim],
            vec![0.0; dim],
            vec![0.0; dim],
        );
        for i in 0..m - 1 {
            let r0 = i as f64 * h;
            for s in 0..self.substeps {
                let r = r0 + s as f64 * dt;
                if i == 0 && s == 0 {
                    y = self.series(a, shifts, dt);
                    continue;
                }
                self.rhs(r, &y, shifts, &mut k1);
                for d in 0..dim {
                    tmp[d] = y[d] + 0.5 * dt * k1[d];
                }
                self.rhs(r + 0.5 * dt, &tmp, shifts, &mut k2);
                for d in 0..dim {
                    tmp[d] = y[d] + 0.5 * dt * k2[d];
                }
                self.rhs(r + 0.5 * dt, &tmp, shifts, &mut k3);
                for d in 0..dim {
                    tmp[d] = y[d] + dt * k3[d];
                }
                self.rhs(r + dt, &tmp, shifts, &mut k4);
                for d in 0..dim {
                    y[d] += dt / 6.0 * (k1[d] + 2.0 * k2[d] + 2.0 * k3[d] + k4[d]);
                }
            }
            record(i + 1, &y, &mut phi, &mut dphi, &mut comp);
        }
        Shot {
            phi,
            dphi,
            companions: comp,
        }
    }

    /// `(φ(1; a), ∂φ(1; a)/∂a)`.
    pub fn boundary_map(&self, a: f64) -> (f64, f64) {
        let shot = self.shoot(a, &[0.0]);
        (
            *shot.phi.last().unwrap(),
            *shot.companions[0].0.last().unwrap(),
        )
    }
}

fn build_profile(
    f: &Nonlinearity,
    geom: &BallGeometry,
    grid: UniformGrid1D,
    substeps: usize,
    a: f64,
) -> RadialProfile {
    let shooter = RadialShooter::new(f, geom.n, grid, substeps);
    let shot = shooter.shoot(a, &[]);
    let d_at_1 = *shot.dphi.last().unwrap();
    RadialProfile {
        grid,
        robin_c: (geom.n as f64 - 1.0) + f.value(0.0) / d_at_1,
        values: shot.phi,
        derivative_values: shot.dphi,
        d_at_1,
        center_value: a,
        dimension: geom.n,
        substeps,
    }
}

/// The profile with the same central amplitude, integrated on another grid.
pub fn resample_profile(
    profile: &RadialProfile,
    f: &Nonlinearity,
    geom: &BallGeometry,
    n_points: usize,
) -> Result<RadialProfile, RadialError> {
    let grid = UniformGrid1D::unit(n_points)?;
    Ok(build_profile(
        f,
        geom,
        grid,
        profile.substeps,
        profile.center_value,
    ))
}

/// Scans the amplitude lattice and returns every zero of `a ↦ φ(1; a)`,
/// flagged by positivity of the corresponding profile.
pub fn scan_amplitudes(
    f: &Nonlinearity,
    geom: &BallGeometry,
    cfg: &ShootingConfig,
) -> Result<Vec<AmplitudeCandidate>, RadialError> {
    cfg.validate()?;
    let grid = UniformGrid1D::unit(cfg.n_points)?;
    let shooter = RadialShooter::new(f, geom.n, grid, cfg.substeps);
    let lattice = cfg.lattice();
    let samples: Vec<(f64, f64)> = lattice.iter().map(|&a| shooter.boundary_map(a)).collect();

    let max_slope = samples.iter().map(|s| s.1.abs()).fold(0.0, f64::max);
    if max_slope < 1e-10 {
        return Err(RadialError::ScaleInvariant {
            max_slope,
            representative: Box::new(build_profile(f, geom, grid, cfg.substeps, 1.0)),
        });
    }

    let mut out = Vec::new();
    for i in 0..lattice.len() - 1 {
        let (f0, f1) = (samples[i].0, samples[i + 1].0);
        if !f0.is_finite() || !f1.is_finite() {
            continue;
        }
        let a = if f0 == 0.0 {
            lattice[i]
        } else if f0 * f1 < 0.0 {
            let tol = 1e-14 * lattice[i + 1].max(1.0);
            find_root(
                |a| shooter.boundary_map(a).0,
                (lattice[i], lattice[i + 1]),
                tol,
            )?
        } else {
            continue;
        };
        let profile = build_profile(f, geom, grid, cfg.substeps, a);
        let m = profile.values.len();
        let positive = profile.values[..m - 1].iter().all(|v| *v > 0.0);
        out.push(AmplitudeCandidate {
            bracket: (lattice[i], lattice[i + 1]),
            amplitude: a,
            positive,
            d_at_1: profile.d_at_1,
        });
    }
    Ok(out)
}

/// Ground state with the smallest positive-profile amplitude on the lattice.
pub fn solve_ground_profile(
    f: &Nonlinearity,
    geom: &BallGeometry,
    cfg: &ShootingConfig,
) -> Result<RadialProfile, RadialError> {
    let candidates = scan_amplitudes(f, geom, cfg)?;
    if candidates.is_empty() {
        return Err(RadialError::NoGroundState {
            lo: cfg.amplitude_lo,
            hi: cfg.amplitude_hi,
        });
    }
    let chosen = candidates
        .iter()
        .find(|c| c.positive)
        .ok_or(RadialError::Positivity {
            count: candidates.len(),
        })?;
    profile_from_amplitude(f, geom, cfg, chosen.amplitude)
}

/// Builds the profile for a known central amplitude.
pub fn profile_from_amplitude(
    f: &Nonlinearity,
    geom: &BallGeometry,
    cfg: &ShootingConfig,
    amplitude: f64,
) -> Result<RadialProfile, RadialError> {
    cfg.validate()?;
    let grid = UniformGrid1D::unit(cfg.n_points)?;
    let profile = build_profile(f, geom, grid, cfg.substeps, amplitude);
    if !(profile.d_at_1.abs() > 1e-10) {
        return Err(RadialError::DegenerateFlux(profile.d_at_1));
    }
    Ok(profile)
}
