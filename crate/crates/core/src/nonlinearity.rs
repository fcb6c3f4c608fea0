//! Reaction terms `f` together with their derivatives.

use std::path::Path;

use serde::Serialize;
use thiserror::Error;

#[derive(Debug, Clone, Error, PartialEq)]
pub enum NonlinearityError {
    #[error("f is defined on [0, inf); got u = {0}")]
    Domain(f64),
    #[error("u = {u} lies beyond the tabulated range [{lo}, {hi}]")]
    OutsideTable { u: f64, lo: f64, hi: f64 },
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error("invalid table: {0}")]
    InvalidTable(String),
    #[error("cannot read table: {0}")]
    Io(String),
}

/// Tabulated `f` and `f'` sampled on a strictly increasing grid.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Table {
    u: Vec<f64>,
    f: Vec<f64>,
    df: Vec<f64>,
    #[serde(skip)]
    f_slopes: Vec<f64>,
    #[serde(skip)]
    df_slopes: Vec<f64>,
}

impl Table {
    pub fn new(u: Vec<f64>, f: Vec<f64>, df: Vec<f64>) -> Result<Self, NonlinearityError> {
        if u.len() < 2 {
            return Err(NonlinearityError::InvalidTable(
                "need at least two rows".into(),
            ));
        }
        if f.len() != u.len() || df.len() != u.len() {
            return Err(NonlinearityError::InvalidTable(format!(
                "inconsistent lengths: {} grid points, {} f values, {} f' values",
                u.len(),
                f.len(),
                df.len()
            )));
        }
        if u.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(NonlinearityError::InvalidTable(
                "grid must be strictly increasing".into(),
            ));
        }
        if u[0] != 0.0 {
            return Err(NonlinearityError::InvalidTable(
                "grid must start at u = 0".into(),
            ));
        }
        if u.iter().chain(&f).chain(&df).any(|v| !v.is_finite()) {
            return Err(NonlinearityError::InvalidTable("non-finite entry".into()));
        }
        let f_slopes = pchip_slopes(&u, &f);
        let df_slopes = pchip_slopes(&u, &df);
        Ok(Self {
            u,
            f,
            df,
            f_slopes,
            df_slopes,
        })
    }

    /// Reads two CSV files with columns `(u, f)` and `(u, f')`. A header row
    /// is allowed; the two `u` columns must coincide.
    pub fn from_csv(f_path: &Path, df_path: &Path) -> Result<Self, NonlinearityError> {
        let (u1, f) = read_two_columns(f_path)?;
        let (u2, df) = read_two_columns(df_path)?;
        if u1 != u2 {
            return Err(NonlinearityError::InvalidTable(
                "the f and f' tables use different u grids".into(),
            ));
        }
        Self::new(u1, f, df)
    }

    fn range(&self) -> (f64, f64) {
        (self.u[0], *self.u.last().unwrap())
    }

    fn interval(&self, u: f64) -> usize {
        match self.u.binary_search_by(|x| x.partial_cmp(&u).unwrap()) {
            Ok(i) => i.min(self.u.len() - 2),
            Err(i) => i.saturating_sub(1).min(self.u.len() - 2),
        }
    }

    fn interpolate(&self, values: &[f64], slopes: &[f64], u: f64) -> f64 {
        let i = self.interval(u);
        hermite(
            self.u[i],
            self.u[i + 1],
            values[i],
            values[i + 1],
            slopes[i],
            slopes[i + 1],
            u,
        )
    }

    /// Linear continuation of the end segments.
    fn extrapolate(&self, values: &[f64], slopes: &[f64], u: f64) -> f64 {
        let (lo, hi) = self.range();
        let last = values.len() - 1;
        if u < lo {
            values[0] + slopes[0] * (u - lo)
        } else {
            values[last] + slopes[last] * (u - hi)
        }
    }
}

fn read_two_columns(path: &Path) -> Result<(Vec<f64>, Vec<f64>), NonlinearityError> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(false)
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(|e| NonlinearityError::Io(format!("{}: {e}", path.display())))?;
    let mut xs = Vec::new();
    let mut ys = Vec::new();
    for (line, record) in reader.records().enumerate() {
        let record = record.map_err(|e| NonlinearityError::Io(e.to_string()))?;
        if record.len() < 2 {
            return Err(NonlinearityError::InvalidTable(format!(
                "{}: row {} has fewer than two columns",
                path.display(),
                line + 1
            )));
        }
        match (record[0].parse::<f64>(), record[1].parse::<f64>()) {
            (Ok(x), Ok(y)) => {
                xs.push(x);
                ys.push(y);
            }
            // header row
            _ if line == 0 => continue,
            _ => {
                return Err(NonlinearityError::InvalidTable(format!(
                    "{}: row {} is not numeric",
                    path.display(),
                    line + 1
                )))
            }
        }
    }
    Ok((xs, ys))
}

/// Fritsch-Carlson monotone slopes.
fn pchip_slopes(x: &[f64], y: &[f64]) -> Vec<f64> {
    let n = x.len();
    let delta: Vec<f64> = (0..n - 1)
        .map(|i| (y[i + 1] - y[i]) / (x[i + 1] - x[i]))
        .collect();
    if n == 2 {
        return vec![delta[0], delta[0]];
    }
    let mut d = vec![0.0; n];
    for i in 1..n - 1 {
        if delta[i - 1] * delta[i] > 0.0 {
            let h0 = x[i] - x[i - 1];
            let h1 = x[i + 1] - x[i];
            let w1 = 2.0 * h1 + h0;
            let w2 = h1 + 2.0 * h0;
            d[i] = (w1 + w2) / (w1 / delta[i - 1] + w2 / delta[i]);
        }
    }
    d[0] = pchip_end(x[1] - x[0], x[2] - x[1], delta[0], delta[1]);
    d[n - 1] = pchip_end(
        x[n - 1] - x[n - 2],
        x[n - 2] - x[n - 3],
        delta[n - 2],
        delta[n - 3],
    );
    d
}

fn pchip_end(h0: f64, h1: f64, d0: f64, d1: f64) -> f64 {
    let d = ((2.0 * h0 + h1) * d0 - h0 * d1) / (h0 + h1);
    if d.signum() != d0.signum() {
        0.0
    } else if d0.signum() != d1.signum() && d.abs() > 3.0 * d0.abs() {
        3.0 * d0
    } else {
        d
    }
}

pub(crate) fn hermite(x0: f64, x1: f64, y0: f64, y1: f64, d0: f64, d1: f64, x: f64) -> f64 {
    let h = x1 - x0;
    let t = (x - x0) / h;
    let t2 = t * t;
    let t3 = t2 * t;
    (2.0 * t3 - 3.0 * t2 + 1.0) * y0
        + (t3 - 2.0 * t2 + t) * h * d0
        + (-2.0 * t3 + 3.0 * t2) * y1
        + (t3 - t2) * h * d1
}

pub(crate) fn hermite_deriv(x0: f64, x1: f64, y0: f64, y1: f64, d0: f64, d1: f64, x: f64) -> f64 {
    let h = x1 - x0;
    let t = (x - x0) / h;
    let t2 = t * t;
    ((6.0 * t2 - 6.0 * t) * y0 + (-6.0 * t2 + 6.0 * t) * y1) / h
        + (3.0 * t2 - 4.0 * t + 1.0) * d0
        + (3.0 * t2 - 2.0 * t) * d1
}

/// The reaction term `f: [0, inf) -> R`.
#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Nonlinearity {
    /// `f(u) = a`
    Constant {
        a: f64,
    },
    /// `f(u) = u^p - u`
    PowerMinusLinear {
        p: f64,
    },
    /// `f(u) = lambda e^u`
    Gelfand {
        lambda: f64,
    },
    /// `f(u) = lambda u`
    Linear {
        lambda: f64,
    },
    Tabulated(Table),
}

impl Nonlinearity {
    /// Checks the parameter constraints that depend on the ambient dimension.
    pub fn validate(&self, n: usize) -> Result<(), NonlinearityError> {
        match self {
            Self::Constant { a } if !a.is_finite() => {
                Err(NonlinearityError::InvalidParameter(format!("a = {a}")))
            }
            Self::PowerMinusLinear { p } => {
                if !(*p > 1.0) {
                    return Err(NonlinearityError::InvalidParameter(format!(
                        "exponent must exceed 1, got {p}"
                    )));
                }
                if n > 2 {
                    let critical = (n as f64 + 2.0) / (n as f64 - 2.0);
                    if !(*p < critical) {
                        return Err(NonlinearityError::InvalidParameter(format!(
                            "exponent {p} is not subcritical in dimension {n} (need p < {critical})"
                        )));
                    }
                }
                Ok(())
            }
            Self::Gelfand { lambda } if !(*lambda > 0.0) => {
                Err(NonlinearityError::InvalidParameter(format!(
                    "lambda must be positive, got {lambda}"
                )))
            }
            Self::Linear { lambda } if !lambda.is_finite() => Err(
                NonlinearityError::InvalidParameter(format!("lambda = {lambda}")),
            ),
            _ => Ok(()),
        }
    }

    pub fn eval(&self, u: f64) -> Result<f64, NonlinearityError> {
        if !(u >= 0.0) {
            return Err(NonlinearityError::Domain(u));
        }
        if let Self::Tabulated(t) = self {
            let (lo, hi) = t.range();
            if u > hi {
                return Err(NonlinearityError::OutsideTable { u, lo, hi });
            }
        }
        Ok(self.value(u))
    }

    pub fn eval_deriv(&self, u: f64) -> Result<f64, NonlinearityError> {
        if !(u >= 0.0) {
            return Err(NonlinearityError::Domain(u));
        }
        if let Self::Tabulated(t) = self {
            let (lo, hi) = t.range();
            if u > hi {
                return Err(NonlinearityError::OutsideTable { u, lo, hi });
            }
        }
        Ok(self.slope(u))
    }

    /// `f` extended to all of R: `f(0) + f'(0) u` below zero, and linear
    /// continuation beyond a table's range. Used inside the solvers, where
    /// iterates may leave the physical range transiently.
    pub fn value(&self, u: f64) -> f64 {
        if u < 0.0 {
            return self.value(0.0) + self.slope(0.0) * u;
        }
        match self {
            Self::Constant { a } => *a,
            Self::PowerMinusLinear { p } => u.powf(*p) - u,
            Self::Gelfand { lambda } => lambda * u.exp(),
            Self::Linear { lambda } => lambda * u,
            Self::Tabulated(t) => {
                let (_, hi) = t.range();
                if u > hi {
                    t.extrapolate(&t.f, &t.f_slopes, u)
                } else {
                    t.interpolate(&t.f, &t.f_slopes, u)
                }
            }
        }
    }

    /// Derivative of [`Nonlinearity::value`].
    pub fn slope(&self, u: f64) -> f64 {
        let u = u.max(0.0);
        match self {
            Self::Constant { .. } => 0.0,
            Self::PowerMinusLinear { p } => p * u.powf(p - 1.0) - 1.0,
            Self::Gelfand { lambda } => lambda * u.exp(),
            Self::Linear { lambda } => *lambda,
            Self::Tabulated(t) => {
                let (_, hi) = t.range();
                if u > hi {
                    t.extrapolate(&t.df, &t.df_slopes, u)
                } else {
                    t.interpolate(&t.df, &t.df_slopes, u)
                }
            }
        }
    }

    pub fn label(&self) -> String {
        match self {
            Self::Constant { a } => format!("constant(a={a})"),
            Self::PowerMinusLinear { p } => format!("u^{p} - u"),
            Self::Gelfand { lambda } => format!("{lambda} e^u"),
            Self::Linear { lambda } => format!("{lambda} u"),
            Self::Tabulated(t) => format!("tabulated({} rows)", t.u.len()),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::io::Write;

    #[test]
    fn worked_family_values() {
        assert_eq!(Nonlinearity::Constant { a: 1.0 }.eval(0.7).unwrap(), 1.0);
        assert_eq!(
            Nonlinearity::PowerMinusLinear { p: 3.0 }.eval(2.0).unwrap(),
            6.0
        );
        assert_eq!(
            Nonlinearity::Gelfand { lambda: 0.5 }.eval(0.0).unwrap(),
            0.5
        );
        assert_eq!(
            Nonlinearity::Constant { a: 1.0 }.eval_deriv(3.3).unwrap(),
            0.0
        );
        assert_eq!(
            Nonlinearity::PowerMinusLinear { p: 3.0 }
                .eval_deriv(1.0)
                .unwrap(),
            2.0
        );
        let g = Nonlinearity::Gelfand { lambda: 0.5 }
            .eval_deriv(1.0)
            .unwrap();
        assert!((g - 0.5 * std::f64::consts::E).abs() < 1e-15);
    }

    #[test]
    fn negative_argument_is_a_domain_error() {
        let f = Nonlinearity::Gelfand { lambda: 1.0 };
        assert_eq!(f.eval(-0.1), Err(NonlinearityError::Domain(-0.1)));
        assert_eq!(f.eval_deriv(-1.0), Err(NonlinearityError::Domain(-1.0)));
    }

    #[test]
    fn extension_below_zero_is_affine() {
        let f = Nonlinearity::PowerMinusLinear { p: 3.0 };
        assert_eq!(f.value(-2.0), 2.0);
        let g = Nonlinearity::Gelfand { lambda: 0.3 };
        assert!((g.value(-1.0) - (0.3 - 0.3)).abs() < 1e-15);
    }

    #[test]
    fn parameter_validation() {
        assert!(Nonlinearity::PowerMinusLinear { p: 1.0 }
            .validate(2)
            .is_err());
        assert!(Nonlinearity::PowerMinusLinear { p: 5.0 }
            .validate(3)
            .is_err());
        assert!(Nonlinearity::PowerMinusLinear { p: 4.9 }
            .validate(3)
            .is_ok());
        assert!(Nonlinearity::PowerMinusLinear { p: 40.0 }
            .validate(2)
            .is_ok());
        assert!(Nonlinearity::Gelfand { lambda: 0.0 }.validate(2).is_err());
    }

    #[test]
    fn table_validation() {
        assert!(Table::new(vec![0.0, 1.0, 1.0], vec![0.0; 3], vec![0.0; 3]).is_err());
        assert!(Table::new(vec![0.0, 1.0], vec![0.0; 3], vec![0.0; 2]).is_err());
        assert!(Table::new(vec![0.0, 1.0], vec![0.0; 2], vec![0.0; 2]).is_ok());
    }

    #[test]
    fn table_interpolates_nodes_and_stays_monotone() {
        let u: Vec<f64> = (0..11).map(|i| i as f64 * 0.3).collect();
        let f: Vec<f64> = u.iter().map(|x| x * x * x - x).collect();
        let df: Vec<f64> = u.iter().map(|x| 3.0 * x * x - 1.0).collect();
        let t = Nonlinearity::Tabulated(Table::new(u.clone(), f.clone(), df.clone()).unwrap());
        for (x, y) in u.iter().zip(&f) {
            assert!((t.eval(*x).unwrap() - y).abs() < 1e-14);
        }
        // monotone data stays monotone between nodes
        let mu: Vec<f64> = (0..6).map(|i| i as f64).collect();
        let mf = vec![0.0, 0.1, 0.1, 2.0, 2.05, 5.0];
        let m = Nonlinearity::Tabulated(Table::new(mu, mf, vec![0.0; 6]).unwrap());
        let mut prev = m.eval(0.0).unwrap();
        for k in 1..=500 {
            let v = m.eval(k as f64 * 0.01).unwrap();
            assert!(v >= prev - 1e-14);
            prev = v;
        }
        assert!(matches!(
            t.eval(100.0),
            Err(NonlinearityError::OutsideTable { .. })
        ));
    }

    #[test]
    fn table_reads_csv_with_header() {
        let dir = tempfile::tempdir().unwrap();
        let fp = dir.path().join("f.csv");
        let dp = dir.path().join("df.csv");
        let mut a = std::fs::File::create(&fp).unwrap();
        writeln!(a, "u,f\n0,1\n0.5,1\n1,1").unwrap();
        let mut b = std::fs::File::create(&dp).unwrap();
        writeln!(b, "u,df\n0,0\n0.5,0\n1,0").unwrap();
        let t = Nonlinearity::Tabulated(Table::from_csv(&fp, &dp).unwrap());
        assert!((t.eval(0.3).unwrap() - 1.0).abs() < 1e-15);
        assert_eq!(t.eval_deriv(0.3).unwrap(), 0.0);
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        fn families() -> Vec<Nonlinearity> {
            vec![
                Nonlinearity::Constant { a: 1.3 },
                Nonlinearity::PowerMinusLinear { p: 3.0 },
                Nonlinearity::PowerMinusLinear { p: 2.5 },
                Nonlinearity::Gelfand { lambda: 0.7 },
                Nonlinearity::Linear { lambda: 2.0 },
            ]
        }

        proptest! {
            #[test]
            fn derivative_matches_central_difference(u in 0.01f64..3.0) {
                for f in families() {
                    for h in [1e-3_f64, 1e-4] {
                        let h = h.min(u);
                        let fd = (f.value(u + h) - f.value(u - h)) / (2.0 * h);
                        let exact = f.slope(u);
                        // O(h^2) with a constant bounded by |f'''| on [0, 3.01]
                        prop_assert!((fd - exact).abs() <= 5.0 * h * h * (1.0 + exact.abs()) + 1e-9,
                            "{}: {} vs {}", f.label(), fd, exact);
                    }
                }
            }
        }
    }
}
