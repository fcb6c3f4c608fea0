//! Run configuration read from a TOML document.

use std::path::{Path, PathBuf};

use onduloid::{Nonlinearity, Table};
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, Deserialize, Serialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum NonlinearitySpec {
    Constant {
        a: f64,
    },
    PowerMinusLinear {
        p: f64,
    },
    Gelfand {
        lambda: f64,
    },
    Linear {
        lambda: f64,
    },
    /// Two CSV files `(u, f)` and `(u, f')`, relative to the config file.
    Tabulated {
        f_table: PathBuf,
        df_table: PathBuf,
    },
}

#[derive(Debug, Clone, PartialEq, Deserialize, Serialize)]
#[serde(default, deny_unknown_fields)]
pub struct GridConfig {
    /// Radial nodes for the ground state and the spectra (odd).
    pub radial_points: usize,
    /// Radial nodes for the two-dimensional solves; defaults to `radial_points`.
    pub dtn_radial_points: Option<usize>,
    /// Collocation intervals in `t` on the half period.
    pub t_intervals: usize,
    /// Cosine modes `K` for branch profiles.
    pub fourier_order: usize,
    pub eigenpairs: usize,
}

impl Default for GridConfig {
    fn default() -> Self {
        Self {
            radial_points: 401,
            dtn_radial_points: None,
            t_intervals: 16,
            fourier_order: 8,
            eigenpairs: 6,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Deserialize, Serialize)]
#[serde(default, deny_unknown_fields)]
pub struct Tolerances {
    pub nondegeneracy: f64,
    pub kernel: f64,
    pub transversality: f64,
    pub newton: f64,
    pub branch_residual: f64,
}

impl Default for Tolerances {
    fn default() -> Self {
        Self {
            nondegeneracy: 1e-4,
            kernel: 1e-6,
            transversality: 1e-4,
            newton: 1e-10,
            branch_residual: 1e-9,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Deserialize, Serialize)]
#[serde(default, deny_unknown_fields)]
pub struct SigmaConfig {
    /// Defaults to `T*/2`.
    pub t_min: Option<f64>,
    /// Defaults to `3T*/2`, clipped below `T̄`.
    pub t_max: Option<f64>,
    pub samples: usize,
    pub k_max: usize,
}

impl Default for SigmaConfig {
    fn default() -> Self {
        Self {
            t_min: None,
            t_max: None,
            samples: 40,
            k_max: 8,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Deserialize, Serialize)]
#[serde(default, deny_unknown_fields)]
pub struct BranchSection {
    /// Explicit amplitudes; otherwise `0, ±s_max 2^{-j}` for `j < levels`.
    pub s_values: Option<Vec<f64>>,
    pub s_max: f64,
    pub levels: usize,
    pub max_order: usize,
    pub adaptive_order: bool,
    /// Write one field dump per converged point.
    pub dump_fields: bool,
}

impl Default for BranchSection {
    fn default() -> Self {
        Self {
            s_values: None,
            s_max: 0.05,
            levels: 6,
            max_order: 32,
            adaptive_order: true,
            dump_fields: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Deserialize, Serialize)]
#[serde(default, deny_unknown_fields)]
pub struct OutputConfig {
    pub dir: PathBuf,
}

impl Default for OutputConfig {
    fn default() -> Self {
        Self {
            dir: PathBuf::from("out"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub nonlinearity: NonlinearitySpec,
    /// Dimension of the ball.
    pub n: usize,
    #[serde(default)]
    pub grid: GridConfig,
    #[serde(default)]
    pub tolerances: Tolerances,
    #[serde(default)]
    pub sigma: SigmaConfig,
    #[serde(default)]
    pub branch: BranchSection,
    #[serde(default)]
    pub output: OutputConfig,
    /// Directory of the config file, for resolving relative paths.
    #[serde(skip)]
    pub base_dir: PathBuf,
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self, String> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| format!("cannot read {}: {e}", path.display()))?;
        let mut cfg = Self::parse(&text)?;
        cfg.base_dir = path.parent().map(Path::to_path_buf).unwrap_or_default();
        Ok(cfg)
    }

    pub fn parse(text: &str) -> Result<Self, String> {
        let cfg: Self = toml::from_str(text).map_err(|e| format!("invalid config: {e}"))?;
        cfg.validate()?;
        Ok(cfg)
    }

    fn validate(&self) -> Result<(), String> {
        let mut problems = Vec::new();
        if self.n == 0 {
            problems.push("n must be at least 1".to_string());
        }
        let odd = |m: usize| m >= 11 && m % 2 == 1;
        if !odd(self.grid.radial_points) {
            problems.push(format!(
                "grid.radial_points must be odd and ≥ 11, got {}",
                self.grid.radial_points
            ));
        }
        if let Some(m) = self.grid.dtn_radial_points {
            if !odd(m) {
                problems.push(format!(
                    "grid.dtn_radial_points must be odd and ≥ 11, got {m}"
                ));
            }
        }
        if self.grid.fourier_order < 2 {
            problems.push("grid.fourier_order must be at least 2".into());
        }
        if self.grid.t_intervals <= self.grid.fourier_order {
            problems.push("grid.t_intervals must exceed grid.fourier_order".into());
        }
        if self.grid.eigenpairs == 0 {
            problems.push("grid.eigenpairs must be positive".into());
        }
        let t = &self.tolerances;
        for (name, v) in [
            ("nondegeneracy", t.nondegeneracy),
            ("kernel", t.kernel),
            ("transversality", t.transversality),
            ("newton", t.newton),
            ("branch_residual", t.branch_residual),
        ] {
            if !(v > 0.0 && v.is_finite()) {
                problems.push(format!("tolerances.{name} must be positive, got {v}"));
            }
        }
        if self.sigma.k_max == 0 {
            problems.push("sigma.k_max must be positive".into());
        }
        for (name, v) in [("t_min", self.sigma.t_min), ("t_max", self.sigma.t_max)] {
            if let Some(v) = v {
                if !(v > 0.0 && v.is_finite()) {
                    problems.push(format!("sigma.{name} must be positive, got {v}"));
                }
            }
        }
        if self.branch.max_order < self.grid.fourier_order {
            problems.push("branch.max_order must be at least grid.fourier_order".into());
        }
        if !(self.branch.s_max > 0.0 && self.branch.s_max < 1.0) {
            problems.push(format!(
                "branch.s_max must lie in (0, 1), got {}",
                self.branch.s_max
            ));
        }
        if let Some(s) = &self.branch.s_values {
            if s.iter().any(|x| !x.is_finite() || x.abs() >= 1.0) {
                problems.push("branch.s_values must be finite with |s| < 1".into());
            }
        }
        if problems.is_empty() {
            Ok(())
        } else {
            Err(problems.join("; "))
        }
    }

    pub fn dtn_radial_points(&self) -> usize {
        self.grid
            .dtn_radial_points
            .unwrap_or(self.grid.radial_points)
    }

    pub fn amplitudes(&self) -> Vec<f64> {
        match &self.branch.s_values {
            Some(s) => s.clone(),
            None => {
                onduloid::continuation::symmetric_amplitudes(self.branch.s_max, self.branch.levels)
            }
        }
    }

    pub fn nonlinearity(&self) -> Result<Nonlinearity, String> {
        let f = match &self.nonlinearity {
            NonlinearitySpec::Constant { a } => Nonlinearity::Constant { a: *a },
            NonlinearitySpec::PowerMinusLinear { p } => Nonlinearity::PowerMinusLinear { p: *p },
            NonlinearitySpec::Gelfand { lambda } => Nonlinearity::Gelfand { lambda: *lambda },
            NonlinearitySpec::Linear { lambda } => Nonlinearity::Linear { lambda: *lambda },
            NonlinearitySpec::Tabulated { f_table, df_table } => {
                let table =
                    Table::from_csv(&self.base_dir.join(f_table), &self.base_dir.join(df_table))
                        .map_err(|e| e.to_string())?;
                Nonlinearity::Tabulated(table)
            }
        };
        f.validate(self.n).map_err(|e| e.to_string())?;
        Ok(f)
    }
}
