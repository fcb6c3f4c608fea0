//! Boundary perturbations of the cylinder and the nonlinear
//! Dirichlet-to-Neumann operator.

use std::f64::consts::PI;
use std::path::Path;

use serde::Serialize;
use thiserror::Error;

use crate::ball_spectra::Spectrum;
use crate::cylinder_spectra::FiniteVolumeRadial;
use crate::nonlinearity::Nonlinearity;
use crate::numerics::{
    richardson, simpson_extrapolated, BallGeometry, BandMatrix, NumericsError, UniformGrid1D,
};
use crate::radial_ball::{resample_profile, RadialError, RadialProfile};

#[derive(Debug, Clone, Error, PartialEq)]
pub enum ProfileError {
    #[error("cosine coefficients must be finite")]
    NonFinite,
    #[error("mode {k} is outside 1..={max}")]
    ModeOutOfRange { k: usize, max: usize },
}

/// Even, 1-periodic, mean-zero function `v(t) = Σ_{k=1}^K v_k cos(2πkt)`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EvenFourierProfile {
    /// `coefficients[k - 1] = v_k`.
    pub coefficients: Vec<f64>,
}

impl EvenFourierProfile {
    pub fn new(coefficients: Vec<f64>) -> Result<Self, ProfileError> {
        if coefficients.iter().any(|c| !c.is_finite()) {
            return Err(ProfileError::NonFinite);
        }
        Ok(Self { coefficients })
    }

    pub fn zeros(k: usize) -> Self {
        Self {
            coefficients: vec![0.0; k],
        }
    }

    /// `amplitude · cos(2πkt)` truncated at `order` modes.
    pub fn mode(k: usize, amplitude: f64, order: usize) -> Result<Self, ProfileError> {
        if k == 0 || k > order {
            return Err(ProfileError::ModeOutOfRange { k, max: order });
        }
        let mut v = Self::zeros(order);
        v.coefficients[k - 1] = amplitude;
        Ok(v)
    }

    pub fn order(&self) -> usize {
        self.coefficients.len()
    }

    pub fn coefficient(&self, k: usize) -> f64 {
        if k == 0 {
            0.0
        } else {
            self.coefficients.get(k - 1).copied().unwrap_or(0.0)
        }
    }

    pub fn is_zero(&self) -> bool {
        self.coefficients.iter().all(|c| *c == 0.0)
    }

    /// Same function with `order` stored modes (truncating or zero-padding).
    pub fn with_order(&self, order: usize) -> Self {
        let mut c = self.coefficients.clone();
        c.resize(order, 0.0);
        Self { coefficients: c }
    }

    pub fn scaled(&self, factor: f64) -> Self {
        Self {
            coefficients: self.coefficients.iter().map(|c| c * factor).collect(),
        }
    }

    pub fn plus(&self, other: &Self) -> Self {
        let order = self.order().max(other.order());
        Self {
            coefficients: (1..=order)
                .map(|k| self.coefficient(k) + other.coefficient(k))
                .collect(),
        }
    }

    pub fn eval(&self, t: f64) -> f64 {
        self.coefficients
            .iter()
            .enumerate()
            .map(|(i, c)| c * (2.0 * PI * (i + 1) as f64 * t).cos())
            .sum()
    }

    pub fn eval_deriv(&self, t: f64) -> f64 {
        self.coefficients
            .iter()
            .enumerate()
            .map(|(i, c)| {
                let w = 2.0 * PI * (i + 1) as f64;
                -c * w * (w * t).sin()
            })
            .sum()
    }

    pub fn eval_second(&self, t: f64) -> f64 {
        self.coefficients
            .iter()
            .enumerate()
            .map(|(i, c)| {
                let w = 2.0 * PI * (i + 1) as f64;
                -c * w * w * (w * t).cos()
            })
            .sum()
    }

    /// `Σ |v_k|`, an upper bound for `sup |v|`.
    pub fn sup_bound(&self) -> f64 {
        self.coefficients.iter().map(|c| c.abs()).sum()
    }

    /// `∫₀¹ v w dt = ½ Σ v_k w_k`.
    pub fn inner(&self, other: &Self) -> f64 {
        let order = self.order().max(other.order());
        0.5 * (1..=order)
            .map(|k| self.coefficient(k) * other.coefficient(k))
            .sum::<f64>()
    }

    /// Euclidean norm of the coefficient vector.
    pub fn coefficient_norm(&self) -> f64 {
        self.coefficients.iter().map(|c| c * c).sum::<f64>().sqrt()
    }
}

#[derive(Debug, Clone, Error)]
pub enum DtnError {
    #[error(transparent)]
    Profile(#[from] ProfileError),
    #[error("perturbation too large for a valid domain: Σ|v_k| = {0} ≥ 1")]
    DomainValidity(f64),
    #[error("period must be positive and finite, got {0}")]
    InvalidPeriod(f64),
    #[error("Newton did not converge in {iterations} iterations (residual {residual:e})")]
    NewtonDivergence { iterations: usize, residual: f64 },
    #[error("linearized system is numerically singular (pivot ratio {0:e})")]
    Conditioning(f64),
    #[error("converged field is not positive in the interior (min {0:e})")]
    Positivity(f64),
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error(transparent)]
    Radial(#[from] RadialError),
    #[error(transparent)]
    Numerics(#[from] NumericsError),
    #[error("export failed: {0}")]
    Export(String),
}

fn map_singular(e: NumericsError) -> DtnError {
    match e {
        NumericsError::Singular { ratio } => DtnError::Conditioning(ratio),
        other => DtnError::Numerics(other),
    }
}

/// Resolution and Newton controls for the two-dimensional solves.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct DtnConfig {
    /// Radial nodes of the primary grid (odd); a second grid with every
    /// interval halved is used for extrapolation.
    pub radial_points: usize,
    /// Intervals of the collocation grid on the half period `[0, 1/2]`.
    pub t_intervals: usize,
    pub newton_tol: f64,
    pub max_newton: usize,
    pub extrapolate: bool,
}

impl Default for DtnConfig {
    fn default() -> Self {
        Self {
            radial_points: 401,
            t_intervals: 16,
            newton_tol: 1e-10,
            max_newton: 50,
            extrapolate: true,
        }
    }
}

impl DtnConfig {
    fn validate(&self) -> Result<(), DtnError> {
        if self.radial_points < 11 || self.radial_points.is_multiple_of(2) {
            return Err(DtnError::Config(format!(
                "radial points must be odd and at least 11, got {}",
                self.radial_points
            )));
        }
        if self.t_intervals < 2 {
            return Err(DtnError::Config("need at least two t intervals".into()));
        }
        if !(self.newton_tol > 0.0) || self.max_newton == 0 {
            return Err(DtnError::Config("Newton controls must be positive".into()));
        }
        Ok(())
    }
}

/// Even cosine collocation on `t_j = j/(2M)`, `j = 0..=M`.
#[derive(Debug, Clone)]
pub(crate) struct CosineGrid {
    pub nodes: Vec<f64>,
    /// `c_k = Σ_j analysis[k][j] y_j` gives `y(t) = Σ_{k=0}^{M} c_k cos(2πkt)`.
    pub analysis: Vec<Vec<f64>>,
    /// Even samples to samples of the (odd) derivative.
    pub d1: Vec<Vec<f64>>,
    pub d2: Vec<Vec<f64>>,
}

impl CosineGrid {
    pub fn new(intervals: usize) -> Self {
        let m = intervals;
        let nodes: Vec<f64> = (0..=m).map(|j| j as f64 / (2 * m) as f64).collect();
        let mf = m as f64;
        let analysis: Vec<Vec<f64>> = (0..=m)
            .map(|k| {
                (0..=m)
                    .map(|j| {
                        let e = if j == 0 || j == m { 0.5 } else { 1.0 };
                        let scale = if k == 0 || k == m { 1.0 / mf } else { 2.0 / mf };
                        scale * e * (PI * (j * k) as f64 / mf).cos()
                    })
                    .collect()
            })
            .collect();
        let build = |deriv: &dyn Fn(usize, usize) -> f64| -> Vec<Vec<f64>> {
            (0..=m)
                .map(|j| {
                    (0..=m)
                        .map(|l| (0..=m).map(|k| deriv(j, k) * analysis[k][l]).sum())
                        .collect()
                })
                .collect()
        };
        let d1 = build(&|j, k| {
            let w = 2.0 * PI * k as f64;
            -w * (PI * (j * k) as f64 / mf).sin()
        });
        let d2 = build(&|j, k| {
            let w = 2.0 * PI * k as f64;
            -w * w * (PI * (j * k) as f64 / mf).cos()
        });
        Self {
            nodes,
            analysis,
            d1,
            d2,
        }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn coefficients(&self, samples: &[f64]) -> Vec<f64> {
        self.analysis
            .iter()
            .map(|row| row.iter().zip(samples).map(|(a, y)| a * y).sum())
            .collect()
    }

    /// `∫₀¹ y dt` for an even periodic function given on the nodes.
    pub fn mean(&self, samples: &[f64]) -> f64 {
        self.analysis[0]
            .iter()
            .zip(samples)
            .map(|(a, y)| a * y)
            .sum()
    }

    pub fn apply(mat: &[Vec<f64>], y: &[f64]) -> Vec<f64> {
        mat.iter()
            .map(|row| row.iter().zip(y).map(|(a, b)| a * b).sum())
            .collect()
    }
}

/// Solution on the fixed cylinder `[0, 1] × [0, 1/2]` in pulled-back
/// coordinates `ρ = r/(1 + v(t))`, extended evenly in `t`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CylinderField {
    pub radial: UniformGrid1D,
    pub t_nodes: Vec<f64>,
    /// Row-major `values[i * t_nodes.len() + j]`, including the boundary row.
    pub values: Vec<f64>,
    pub period: f64,
    pub v: EvenFourierProfile,
    pub newton_residual: f64,
    pub newton_iterations: usize,
    pub dimension: usize,
    /// `f(0)`, needed for the boundary flux balance.
    pub source_at_zero: f64,
}

impl CylinderField {
    pub fn value(&self, i: usize, j: usize) -> f64 {
        self.values[i * self.t_nodes.len() + j]
    }

    /// Column at a collocation node.
    pub fn slice(&self, j: usize) -> Vec<f64> {
        (0..self.radial.n_points())
            .map(|i| self.value(i, j))
            .collect()
    }

    /// Cosine interpolation in `t` at radial node `i`; any real `t`.
    pub fn eval_t(&self, i: usize, t: f64) -> f64 {
        let grid = CosineGrid::new(self.t_nodes.len() - 1);
        let row: Vec<f64> = (0..self.t_nodes.len()).map(|j| self.value(i, j)).collect();
        grid.coefficients(&row)
            .iter()
            .enumerate()
            .map(|(k, c)| c * (2.0 * PI * k as f64 * t).cos())
            .sum()
    }

    pub fn min_interior(&self) -> f64 {
        let m = self.t_nodes.len();
        self.values[..(self.radial.n_points() - 1) * m]
            .iter()
            .fold(f64::INFINITY, |a, b| a.min(*b))
    }

    /// Dump `(r, t, u)` in physical radius over the half period.
    pub fn write_csv(&self, path: &Path) -> Result<(), DtnError> {
        let err = |e: csv::Error| DtnError::Export(e.to_string());
        let mut w = csv::Writer::from_path(path).map_err(err)?;
        w.write_record(["r", "t", "u"]).map_err(err)?;
        for i in 0..self.radial.n_points() {
            for (j, t) in self.t_nodes.iter().enumerate() {
                let r = self.radial.node(i) * (1.0 + self.v.eval(*t));
                w.write_record(&[
                    format!("{r:.17e}"),
                    format!("{t:.17e}"),
                    format!("{:.17e}", self.value(i, j)),
                ])
                .map_err(err)?;
            }
        }
        w.flush().map_err(|e| DtnError::Export(e.to_string()))
    }
}

/// Value of `G(v, T)` and the data it is built from.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DtnResult {
    /// Cosine coefficients `1..=K` of the flux deviation.
    pub g: EvenFourierProfile,
    pub mean_flux: f64,
    /// Newton residual of the interior solve(s).
    pub residual: f64,
    /// `max_t |∂_ν u - mean|` over the collocation nodes.
    pub deviation_max: f64,
    /// Signed normal derivative at the collocation nodes.
    pub normal_derivative: Vec<f64>,
}

impl DtnResult {
    pub fn to_json(&self) -> String {
        #[derive(Serialize)]
        struct Export<'a> {
            coefficients: &'a [f64],
            mean_flux: f64,
            residual: f64,
        }
        serde_json::to_string_pretty(&Export {
            coefficients: &self.g.coefficients,
            mean_flux: self.mean_flux,
            residual: self.residual,
        })
        .expect("plain numeric data serializes")
    }
}

/// Per-resolution data: radial operator, ground state and its discrete defect.
#[derive(Debug, Clone)]
struct Level {
    grid: UniformGrid1D,
    op: FiniteVolumeRadial,
    /// Ground state with the boundary value set to zero.
    phi: Vec<f64>,
    /// Discrete `Δ_rad φ₁` at the unknown nodes.
    lap_phi: Vec<f64>,
    /// `f'(φ₁)` at every node.
    q: Vec<f64>,
}

impl Level {
    fn new(profile: &RadialProfile, f: &Nonlinearity, geom: &BallGeometry) -> Self {
        let grid = profile.grid;
        let op = FiniteVolumeRadial::new(grid, geom);
        let m = grid.n_points();
        let mut phi = profile.values.clone();
        phi[m - 1] = 0.0;
        let lap_phi = (0..m - 1)
            .map(|i| {
                let (l, _, u) = op.row(i);
                let mut s = u * (phi[i + 1] - phi[i]);
                if i > 0 {
                    s += l * (phi[i - 1] - phi[i]);
                }
                s
            })
            .collect();
        let q = phi.iter().map(|u| f.slope(*u)).collect();
        Self {
            grid,
            op,
            phi,
            lap_phi,
            q,
        }
    }
}

/// Boundary geometry sampled on the collocation nodes.
struct Shape {
    /// `1 + v`
    radius: Vec<f64>,
    /// `1/(1 + v)² - 1`
    contraction: Vec<f64>,
    /// `v'/(1 + v)`
    g: Vec<f64>,
    /// derivative of `g`
    dg: Vec<f64>,
    /// `v'`
    slope: Vec<f64>,
}

impl Shape {
    fn new(v: &EvenFourierProfile, nodes: &[f64]) -> Self {
        let mut radius = Vec::with_capacity(nodes.len());
        let mut contraction = Vec::with_capacity(nodes.len());
        let mut g = Vec::with_capacity(nodes.len());
        let mut dg = Vec::with_capacity(nodes.len());
        let mut slope = Vec::with_capacity(nodes.len());
        for t in nodes {
            let vt = v.eval(*t);
            let r = 1.0 + vt;
            contraction.push(-vt * (2.0 + vt) / (r * r));
            let d1 = v.eval_deriv(*t);
            let d2 = v.eval_second(*t);
            radius.push(r);
            g.push(d1 / r);
            dg.push(d2 / r - d1 * d1 / (r * r));
            slope.push(d1);
        }
        Self {
            radius,
            contraction,
            g,
            dg,
            slope,
        }
    }
}

/// Solver for the Dirichlet problem on perturbed periodic cylinders and the
/// resulting Dirichlet-to-Neumann quantities.
#[derive(Debug, Clone)]
pub struct DtnSolver {
    f: Nonlinearity,
    geom: BallGeometry,
    cfg: DtnConfig,
    levels: Vec<Level>,
    time: CosineGrid,
    robin_c: f64,
    d_at_1: f64,
}

impl DtnSolver {
    pub fn new(
        profile: &RadialProfile,
        f: &Nonlinearity,
        geom: &BallGeometry,
        cfg: DtnConfig,
    ) -> Result<Self, DtnError> {
        cfg.validate()?;
        let primary = resample_profile(profile, f, geom, cfg.radial_points)?;
        let mut levels = vec![Level::new(&primary, f, geom)];
        if cfg.extrapolate {
            let fine = resample_profile(profile, f, geom, 2 * cfg.radial_points - 1)?;
            levels.push(Level::new(&fine, f, geom));
        }
        Ok(Self {
            f: f.clone(),
            geom: *geom,
            cfg,
            levels,
            time: CosineGrid::new(cfg.t_intervals),
            robin_c: profile.robin_c,
            d_at_1: profile.d_at_1,
        })
    }

    pub fn config(&self) -> &DtnConfig {
        &self.cfg
    }

    pub fn robin_c(&self) -> f64 {
        self.robin_c
    }

    pub fn d_at_1(&self) -> f64 {
        self.d_at_1
    }

    /// Largest Fourier order representable on the collocation grid.
    pub fn max_order(&self) -> usize {
        self.cfg.t_intervals - 1
    }

    fn check_inputs(&self, v: &EvenFourierProfile, period: f64) -> Result<(), DtnError> {
        if !(period > 0.0) || !period.is_finite() {
            return Err(DtnError::InvalidPeriod(period));
        }
        let bound = v.sup_bound();
        if !(bound < 1.0) {
            return Err(DtnError::DomainValidity(bound));
        }
        if v.order() > self.max_order() {
            return Err(DtnError::Config(format!(
                "profile order {} exceeds the collocation limit {}",
                v.order(),
                self.max_order()
            )));
        }
        Ok(())
    }

    /// Residual of the pulled-back equation for the correction `x = Φ - φ₁`
    /// and, optionally, its Jacobian. Writing the unknown relative to the
    /// ground state makes the discrete `φ₁` an exact solution at `v = 0` and
    /// keeps rounding proportional to the perturbation.
    fn residual(
        &self,
        level: &Level,
        shape: &Shape,
        lambda: f64,
        x: &[f64],
        jac: Option<&mut BandMatrix>,
    ) -> Vec<f64> {
        let m = self.time.len();
        let nr = level.grid.n_points() - 1;
        let h = level.grid.spacing();
        let at = |i: usize, j: usize| if i < nr { x[i * m + j] } else { 0.0 };
        let phi = &level.phi;
        let mut out = vec![0.0; nr * m];
        let mut jac = jac;
        let mut drho = vec![0.0; m];
        for i in 0..nr {
            let rho = i as f64 * h;
            let (cl, cd, cu) = level.op.row(i);
            for (j, d) in drho.iter_mut().enumerate() {
                *d = if i > 0 {
                    (at(i + 1, j) - at(i - 1, j)) / (2.0 * h)
                } else {
                    0.0
                };
            }
            let mixed = CosineGrid::apply(&self.time.d1, &drho);
            let row: Vec<f64> = (0..m).map(|j| at(i, j)).collect();
            let tt = CosineGrid::apply(&self.time.d2, &row);
            let (dphi, d2phi) = if i > 0 {
                (
                    (phi[i + 1] - phi[i - 1]) / (2.0 * h),
                    (phi[i + 1] - 2.0 * phi[i] + phi[i - 1]) / (h * h),
                )
            } else {
                (0.0, 0.0)
            };
            for j in 0..m {
                let u = at(i, j);
                let lap =
                    cu * (at(i + 1, j) - u) + if i > 0 { cl * (at(i - 1, j) - u) } else { 0.0 };
                let inv_r2 = 1.0 / (shape.radius[j] * shape.radius[j]);
                let (g, dg) = (shape.g[j], shape.dg[j]);
                let second = if i > 0 {
                    (at(i + 1, j) - 2.0 * u + at(i - 1, j)) / (h * h) + d2phi
                } else {
                    0.0
                };
                let stretch = rho * rho * g * g;
                let drift = rho * (g * g - dg);
                let shear = -2.0 * rho * g;
                out[i * m + j] = lap * inv_r2
                    + shape.contraction[j] * level.lap_phi[i]
                    + lambda
                        * (stretch * second + drift * (drho[j] + dphi) + shear * mixed[j] + tt[j])
                    + (self.f.value(phi[i] + u) - self.f.value(phi[i]));
            }
            if let Some(jm) = jac.as_deref_mut() {
                for j in 0..m {
                    let p = i * m + j;
                    let inv_r2 = 1.0 / (shape.radius[j] * shape.radius[j]);
                    let (g, dg) = (shape.g[j], shape.dg[j]);
                    let stretch = lambda * rho * rho * g * g / (h * h);
                    let drift = lambda * rho * (g * g - dg) / (2.0 * h);
                    let shear = -2.0 * lambda * rho * g / (2.0 * h);
                    jm.add(
                        p,
                        p,
                        cd * inv_r2 - 2.0 * stretch + self.f.slope(phi[i] + x[p]),
                    );
                    if i + 1 < nr {
                        jm.add(p, p + m, cu * inv_r2 + stretch + drift);
                    }
                    if i > 0 {
                        jm.add(p, p - m, cl * inv_r2 + stretch - drift);
                    }
                    for l in 0..m {
                        jm.add(p, i * m + l, lambda * self.time.d2[j][l]);
                        if i > 0 && shear != 0.0 {
                            let c = shear * self.time.d1[j][l];
                            if i + 1 < nr {
                                jm.add(p, (i + 1) * m + l, c);
                            }
                            jm.add(p, (i - 1) * m + l, -c);
                        }
                    }
                }
            }
        }
        out
    }

    fn solve_level(
        &self,
        level: &Level,
        v: &EvenFourierProfile,
        period: f64,
    ) -> Result<CylinderField, DtnError> {
        let m = self.time.len();
        let nr = level.grid.n_points() - 1;
        let lambda = 1.0 / (period * period);
        let shape = Shape::new(v, &self.time.nodes);
        let mut x = vec![0.0; nr * m];
        let norm = |r: &[f64]| r.iter().fold(0.0_f64, |a, b| a.max(b.abs()));
        let mut res = self.residual(level, &shape, lambda, &x, None);
        let mut rn = norm(&res);
        let mut iterations = 0;
        let mut polish = 0;
        while rn > self.cfg.newton_tol || (polish < 1 && !v.is_zero()) {
            if rn <= self.cfg.newton_tol {
                polish += 1;
            }
            if iterations >= self.cfg.max_newton {
                return Err(DtnError::NewtonDivergence {
                    iterations,
                    residual: rn,
                });
            }
            iterations += 1;
            let mut jac = BandMatrix::zeros(nr * m, 2 * m - 1, 2 * m - 1);
            self.residual(level, &shape, lambda, &x, Some(&mut jac));
            let lu = jac.factor().map_err(map_singular)?;
            let step = lu.solve(&res);
            let mut alpha = 1.0;
            loop {
                let trial: Vec<f64> = x.iter().zip(&step).map(|(a, d)| a - alpha * d).collect();
                let tr = self.residual(level, &shape, lambda, &trial, None);
                let tn = norm(&tr);
                if tn < rn || (rn <= self.cfg.newton_tol && tn <= self.cfg.newton_tol) {
                    x = trial;
                    res = tr;
                    rn = tn;
                    break;
                }
                alpha *= 0.5;
                if alpha < 1e-6 {
                    if rn <= self.cfg.newton_tol {
                        break;
                    }
                    return Err(DtnError::NewtonDivergence {
                        iterations,
                        residual: rn,
                    });
                }
            }
        }
        let mut values: Vec<f64> = x
            .iter()
            .enumerate()
            .map(|(p, d)| level.phi[p / m] + d)
            .collect();
        values.extend(std::iter::repeat_n(0.0, m));
        let field = CylinderField {
            radial: level.grid,
            t_nodes: self.time.nodes.clone(),
            values,
            period,
            v: v.clone(),
            newton_residual: rn,
            newton_iterations: iterations,
            dimension: self.geom.n,
            source_at_zero: self.f.value(0.0),
        };
        let min = field.min_interior();
        if !(min > 0.0) {
            return Err(DtnError::Positivity(min));
        }
        Ok(field)
    }

    /// Converged fields on every resolution level (primary grid first).
    pub fn solve_fields(
        &self,
        v: &EvenFourierProfile,
        period: f64,
    ) -> Result<Vec<CylinderField>, DtnError> {
        self.check_inputs(v, period)?;
        self.levels
            .iter()
            .map(|level| self.solve_level(level, v, period))
            .collect()
    }

    /// `G(v, T)`, extrapolated over the two radial grids when enabled.
    pub fn g(&self, v: &EvenFourierProfile, period: f64) -> Result<DtnResult, DtnError> {
        let fields = self.solve_fields(v, period)?;
        let parts: Vec<DtnResult> = fields
            .iter()
            .zip(&self.levels)
            .map(|(field, level)| self.g_from_field(field, &level.op))
            .collect();
        Ok(self.combine(&parts, v.order()))
    }

    fn combine(&self, parts: &[DtnResult], order: usize) -> DtnResult {
        if parts.len() == 1 {
            return parts[0].clone();
        }
        let (a, b) = (&parts[0], &parts[1]);
        let nd: Vec<f64> = a
            .normal_derivative
            .iter()
            .zip(&b.normal_derivative)
            .map(|(x, y)| richardson(*x, *y, 2))
            .collect();
        let mean_flux = richardson(a.mean_flux, b.mean_flux, 2);
        deviation_result(
            nd,
            mean_flux,
            order,
            a.residual.max(b.residual),
            &self.time,
            a.deviation_max == 0.0 && b.deviation_max == 0.0,
        )
    }

    fn g_from_field(&self, field: &CylinderField, op: &FiniteVolumeRadial) -> DtnResult {
        flux_deviation(field, op, &self.time)
    }

    /// Solves the linearized problem on the straight cylinder with boundary
    /// values `w` on one level; returns the field and `∂_ρψ(1, t_j)`.
    fn linear_boundary_solve(
        &self,
        level: &Level,
        w: &[f64],
        period: f64,
    ) -> Result<(Vec<f64>, Vec<f64>), DtnError> {
        let m = self.time.len();
        let nr = level.grid.n_points() - 1;
        let lambda = 1.0 / (period * period);
        let mut a = BandMatrix::zeros(nr * m, m, m);
        let mut rhs = vec![0.0; nr * m];
        for i in 0..nr {
            let (cl, cd, cu) = level.op.row(i);
            for j in 0..m {
                let p = i * m + j;
                a.add(p, p, cd + level.q[i]);
                if i > 0 {
                    a.add(p, p - m, cl);
                }
                if i + 1 < nr {
                    a.add(p, p + m, cu);
                } else {
                    rhs[p] = -cu * w[j];
                }
                for l in 0..m {
                    a.add(p, i * m + l, lambda * self.time.d2[j][l]);
                }
            }
        }
        let lu = a.factor().map_err(map_singular)?;
        let mut psi = lu.solve(&rhs);
        psi.extend_from_slice(w);
        let wtt = CosineGrid::apply(&self.time.d2, w);
        let qb = level.q[nr];
        let flux = (0..m)
            .map(|j| {
                let laplacian = -lambda * wtt[j] - qb * w[j];
                level.op.faces[nr - 1] * (w[j] - psi[(nr - 1) * m + j]) / level.op.h
                    + level.op.volumes[nr] * laplacian
            })
            .collect();
        Ok((psi, flux))
    }

    /// `H_T(w) = ∂_ν ψ_w + c w` from two-dimensional solves (no separation of
    /// variables), extrapolated over the radial grids when enabled.
    pub fn ht_apply_2d(
        &self,
        w: &EvenFourierProfile,
        period: f64,
    ) -> Result<EvenFourierProfile, DtnError> {
        Ok(self.ht_apply_2d_full(w, period)?.0)
    }

    fn ht_apply_2d_full(
        &self,
        w: &EvenFourierProfile,
        period: f64,
    ) -> Result<(EvenFourierProfile, Vec<LinearField>), DtnError> {
        self.check_inputs(&EvenFourierProfile::zeros(w.order()), period)?;
        if w.order() > self.max_order() {
            return Err(DtnError::Config(format!(
                "direction order {} exceeds the collocation limit {}",
                w.order(),
                self.max_order()
            )));
        }
        let samples: Vec<f64> = self.time.nodes.iter().map(|t| w.eval(*t)).collect();
        let mut fluxes = Vec::new();
        let mut fields = Vec::new();
        for level in &self.levels {
            let (psi, flux) = self.linear_boundary_solve(level, &samples, period)?;
            fluxes.push(flux);
            fields.push(LinearField {
                radial: level.grid,
                values: psi,
            });
        }
        let flux: Vec<f64> = if fluxes.len() == 2 {
            fluxes[0]
                .iter()
                .zip(&fluxes[1])
                .map(|(a, b)| richardson(*a, *b, 2))
                .collect()
        } else {
            fluxes.remove(0)
        };
        let h: Vec<f64> = flux
            .iter()
            .zip(&samples)
            .map(|(a, b)| a + self.robin_c * b)
            .collect();
        let coeffs = self.time.coefficients(&h);
        Ok((
            EvenFourierProfile {
                coefficients: coeffs[1..=w.order()].to_vec(),
            },
            fields,
        ))
    }
}

/// Linear field `ψ_w` on one radial level (row-major, boundary row included).
#[derive(Debug, Clone)]
struct LinearField {
    radial: UniformGrid1D,
    values: Vec<f64>,
}

/// `∂_ρ Φ(1, t_j)` from the balance over the boundary half-cell.
///
/// At `ρ = 1` the pulled-back equation with `Φ = 0` expresses `Δ_rad Φ` in
/// terms of `F = ∂_ρΦ` and `∂_t F`, so the balance
/// `F - |cell| Δ_rad Φ(1) = r_{N-3/2}^{n-1} (Φ_{N-1} - Φ_{N-2})/h`
/// is a small dense linear system for the boundary flux.
fn boundary_flux(field: &CylinderField, op: &FiniteVolumeRadial, time: &CosineGrid) -> Vec<f64> {
    let m = time.len();
    let nr = field.radial.n_points() - 1;
    let lambda = 1.0 / (field.period * field.period);
    let shape = Shape::new(&field.v, &time.nodes);
    let wb = op.volumes[nr];
    let n = field.dimension as f64;
    let mut a = BandMatrix::zeros(m, m - 1, m - 1);
    let mut rhs = vec![0.0; m];
    for j in 0..m {
        let (r, g, dg) = (shape.radius[j], shape.g[j], shape.dg[j]);
        let p = 1.0 / (r * r) + lambda * g * g;
        let coef = g * g * (2.0 - n) - dg;
        a.add(j, j, 1.0 + wb * lambda * coef / p);
        for l in 0..m {
            a.add(j, l, -wb * lambda * 2.0 * g * time.d1[j][l] / p);
        }
        rhs[j] = op.faces[nr - 1] * (field.value(nr, j) - field.value(nr - 1, j)) / op.h
            - wb * field.source_at_zero / p;
    }
    a.factor()
        .expect("boundary flux system is a small perturbation of the identity")
        .solve(&rhs)
}

/// Converged field of the pulled-back Dirichlet problem on the primary grid.
pub fn solve_perturbed_dirichlet(
    profile: &RadialProfile,
    f: &Nonlinearity,
    geom: &BallGeometry,
    v: &EvenFourierProfile,
    period: f64,
    cfg: DtnConfig,
) -> Result<CylinderField, DtnError> {
    let solver = DtnSolver::new(
        profile,
        f,
        geom,
        DtnConfig {
            extrapolate: false,
            ..cfg
        },
    )?;
    Ok(solver.solve_fields(v, period)?.remove(0))
}

/// `G` evaluated from a single converged field (no extrapolation).
pub fn g_operator(field: &CylinderField, geom: &BallGeometry) -> DtnResult {
    let op = FiniteVolumeRadial::new(field.radial, geom);
    flux_deviation(field, &op, &CosineGrid::new(field.t_nodes.len() - 1))
}

fn flux_deviation(field: &CylinderField, op: &FiniteVolumeRadial, time: &CosineGrid) -> DtnResult {
    let flux = boundary_flux(field, op, time);
    let shape = Shape::new(&field.v, &time.nodes);
    let n = field.dimension as i32;
    let mut nd = Vec::with_capacity(flux.len());
    let mut weight = Vec::with_capacity(flux.len());
    for j in 0..flux.len() {
        let tilt = (1.0 + (shape.slope[j] / field.period).powi(2)).sqrt();
        nd.push(flux[j] * tilt / shape.radius[j]);
        weight.push(shape.radius[j].powi(n - 1) * tilt);
    }
    let weighted: Vec<f64> = nd.iter().zip(&weight).map(|(a, b)| a * b).collect();
    let mean_flux = time.mean(&weighted) / time.mean(&weight);
    deviation_result(
        nd,
        mean_flux,
        field.v.order(),
        field.newton_residual,
        time,
        field.v.is_zero(),
    )
}

/// Cosine coefficients of `∂_ν u - mean`; on the straight cylinder every slice
/// is the same, so the deviation is zero without rounding.
fn deviation_result(
    nd: Vec<f64>,
    mean_flux: f64,
    order: usize,
    residual: f64,
    time: &CosineGrid,
    straight: bool,
) -> DtnResult {
    let deviation: Vec<f64> = if straight {
        vec![0.0; nd.len()]
    } else {
        nd.iter().map(|x| x - mean_flux).collect()
    };
    let coeffs = time.coefficients(&deviation);
    DtnResult {
        g: EvenFourierProfile {
            coefficients: coeffs[1..=order].to_vec(),
        },
        mean_flux,
        residual,
        deviation_max: deviation.iter().fold(0.0, |m, x| m.max(x.abs())),
        normal_derivative: nd,
    }
}

/// Linearization check `r(ε) = ‖G(εw, T)/ε + φ₁'(1) H_T(w)‖` over a list of `ε`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LinearizationReport {
    pub eps: Vec<f64>,
    pub residuals: Vec<f64>,
    /// `r(ε)/ε`.
    pub ratios: Vec<f64>,
    /// `log(r_i/r_{i+1}) / log(ε_i/ε_{i+1})` for consecutive entries.
    pub orders: Vec<f64>,
    /// `‖H_T(w)‖`, the scale the residuals are measured against.
    pub reference: f64,
}

impl LinearizationReport {
    pub fn min_order(&self) -> f64 {
        self.orders.iter().fold(f64::INFINITY, |a, b| a.min(*b))
    }

    pub fn max_ratio(&self) -> f64 {
        self.ratios.iter().fold(0.0, |a, b| a.max(*b))
    }

    pub fn passed(&self, min_order: f64) -> bool {
        self.min_order() >= min_order && self.ratios.iter().all(|r| r.is_finite())
    }
}

/// Orthogonality integrals of the linear field `ψ_w` on the straight cylinder.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct OrthogonalityReport {
    /// `∫ ψ_w z_j` for every negative Dirichlet eigenfunction `z_j`.
    pub eigenfunction_integrals: Vec<f64>,
    /// `∫ ∂_ν ψ_w` over the lateral boundary.
    pub flux_integral: f64,
}

impl OrthogonalityReport {
    pub fn max_abs(&self) -> f64 {
        self.eigenfunction_integrals
            .iter()
            .fold(self.flux_integral.abs(), |a, b| a.max(b.abs()))
    }
}

impl DtnSolver {
    pub fn fd_linearization_check(
        &self,
        w: &EvenFourierProfile,
        period: f64,
        eps_list: &[f64],
    ) -> Result<LinearizationReport, DtnError> {
        let h = self.ht_apply_2d(w, period)?;
        let target = h.scaled(-self.d_at_1);
        let mut residuals = Vec::with_capacity(eps_list.len());
        let mut ratios = Vec::with_capacity(eps_list.len());
        for &eps in eps_list {
            if eps == 0.0 {
                let g = self.g(&w.scaled(0.0), period)?;
                residuals.push(g.g.coefficient_norm());
                ratios.push(0.0);
                continue;
            }
            let g = self.g(&w.scaled(eps), period)?;
            let r =
                g.g.scaled(1.0 / eps)
                    .plus(&target.scaled(-1.0))
                    .coefficient_norm();
            residuals.push(r);
            ratios.push(r / eps);
        }
        let orders = eps_list
            .windows(2)
            .zip(residuals.windows(2))
            .filter(|(e, _)| e[0] != 0.0 && e[1] != 0.0)
            .map(|(e, r)| (r[0] / r[1]).ln() / (e[0] / e[1]).ln())
            .collect();
        Ok(LinearizationReport {
            eps: eps_list.to_vec(),
            residuals,
            ratios,
            orders,
            reference: h.coefficient_norm(),
        })
    }

    /// `∫ ψ_w z_j` (Simpson in `r` times the exact cosine mean in `t`) and the
    /// boundary integral of `∂_ν ψ_w`, per unit length of the period cell.
    pub fn orthogonality_check(
        &self,
        w: &EvenFourierProfile,
        period: f64,
        dirichlet: &Spectrum,
    ) -> Result<OrthogonalityReport, DtnError> {
        let (_, fields) = self.ht_apply_2d_full(w, period)?;
        let field = &fields[0];
        let level = &self.levels[0];
        let m = self.time.len();
        let nr = field.radial.n_points();
        let slice_mean: Vec<f64> = (0..nr)
            .map(|i| self.time.mean(&field.values[i * m..(i + 1) * m]))
            .collect();
        let eigenfunction_integrals = dirichlet
            .eigenfunctions
            .iter()
            .zip(&dirichlet.eigenvalues)
            .filter(|(_, g)| **g < 0.0)
            .map(|(z, _)| {
                let y: Vec<f64> = (0..nr)
                    .map(|i| {
                        let r = field.radial.node(i);
                        let zr = z.eval(r).map(|p| p.0).unwrap_or(0.0);
                        self.geom.radial_weight(r) * zr * slice_mean[i]
                    })
                    .collect();
                self.geom.omega_n * simpson_extrapolated(&y, field.radial.spacing())
            })
            .collect();
        let samples: Vec<f64> = self.time.nodes.iter().map(|t| w.eval(*t)).collect();
        let (_, flux) = self.linear_boundary_solve(level, &samples, period)?;
        let flux_integral = self.geom.omega_n * self.time.mean(&flux);
        Ok(OrthogonalityReport {
            eigenfunction_integrals,
            flux_integral,
        })
    }

    /// `Q^T(ψ_w)` summed directly over the two-dimensional grid: face
    /// differences for `|∂_r ψ|²`, cell volumes for the other bulk terms, cosine
    /// coefficients for the `t` integrals; extrapolated like `ht_apply_2d`.
    pub fn quadratic_form_2d(&self, w: &EvenFourierProfile, period: f64) -> Result<f64, DtnError> {
        let (_, fields) = self.ht_apply_2d_full(w, period)?;
        let lambda = 1.0 / (period * period);
        let m = self.time.len();
        let cosine_energy = |row: &[f64], weight: &dyn Fn(usize) -> f64| -> f64 {
            let c = self.time.coefficients(row);
            c.iter()
                .enumerate()
                .map(|(k, ck)| {
                    let norm = if k == 0 || k + 1 == c.len() { 1.0 } else { 0.5 };
                    weight(k) * norm * ck * ck
                })
                .sum()
        };
        let values: Vec<f64> = fields
            .iter()
            .zip(&self.levels)
            .map(|(field, level)| {
                let nr = field.radial.n_points();
                let row = |i: usize| &field.values[i * m..(i + 1) * m];
                let mut total = 0.0;
                for i in 0..nr {
                    let vol = level.op.volumes[i];
                    let wave = |k: usize| lambda * (2.0 * PI * k as f64).powi(2) - level.q[i];
                    total += vol * cosine_energy(row(i), &wave);
                    if i + 1 < nr {
                        let diff: Vec<f64> =
                            row(i + 1).iter().zip(row(i)).map(|(a, b)| a - b).collect();
                        total += level.op.faces[i] / level.op.h * cosine_energy(&diff, &|_| 1.0);
                    }
                }
                total += self.robin_c * cosine_energy(row(nr - 1), &|_| 1.0);
                period * self.geom.omega_n * total
            })
            .collect();
        Ok(if values.len() == 2 {
            richardson(values[0], values[1], 2)
        } else {
            values[0]
        })
    }
}
