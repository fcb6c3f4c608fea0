//! Ground states checked against a separately written RK4 shooting integrator.

use onduloid::{solve_ground_profile, BallGeometry, Nonlinearity, ShootingConfig};

/// `φ(1)` for `φ'' + (n-1)/r φ' + f(φ) = 0`, `φ(0) = a`, `φ'(0) = 0`, started
/// from the two-term Taylor expansion at a small radius.
fn boundary_value(f: &dyn Fn(f64) -> f64, n: usize, a: f64, steps: usize) -> f64 {
    let nf = n as f64;
    let r0 = 1e-6;
    let mut r = r0;
    let mut y = [a - f(a) * r0 * r0 / (2.0 * nf), -f(a) * r0 / nf];
    let h = (1.0 - r0) / steps as f64;
    let rhs = |r: f64, y: [f64; 2]| [y[1], -(nf - 1.0) / r * y[1] - f(y[0])];
    for _ in 0..steps {
        let k1 = rhs(r, y);
        let k2 = rhs(
            r + 0.5 * h,
            [y[0] + 0.5 * h * k1[0], y[1] + 0.5 * h * k1[1]],
        );
        let k3 = rhs(
            r + 0.5 * h,
            [y[0] + 0.5 * h * k2[0], y[1] + 0.5 * h * k2[1]],
        );
        let k4 = rhs(r + h, [y[0] + h * k3[0], y[1] + h * k3[1]]);
        for i in 0..2 {
            y[i] += h / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]);
        }
        r += h;
    }
    y[0]
}

fn oracle_center(f: &dyn Fn(f64) -> f64, n: usize, lo: f64, hi: f64) -> f64 {
    let g = |a: f64| boundary_value(f, n, a, 20_000);
    let (mut lo, mut hi) = (lo, hi);
    let glo = g(lo);
    assert!(glo * g(hi) < 0.0, "oracle bracket does not straddle a root");
    for _ in 0..60 {
        let mid = 0.5 * (lo + hi);
        if (g(mid) > 0.0) == (glo > 0.0) {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    0.5 * (lo + hi)
}

fn library_center(f: &Nonlinearity, n: usize) -> f64 {
    let geom = BallGeometry::new(n).unwrap();
    solve_ground_profile(f, &geom, &ShootingConfig::default())
        .unwrap()
        .center_value
}

#[test]
fn cubic_disk_center_value() {
    let lib = library_center(&Nonlinearity::PowerMinusLinear { p: 3.0 }, 2);
    let oracle = oracle_center(&|u: f64| u * u * u - u, 2, 0.9 * lib, 1.1 * lib);
    assert!(
        (lib - oracle).abs() < 1e-7 * oracle,
        "library {lib}, oracle {oracle}"
    );
}

#[test]
fn gelfand_disk_center_value() {
    let lib = library_center(&Nonlinearity::Gelfand { lambda: 0.2 }, 2);
    let oracle = oracle_center(&|u: f64| 0.2 * u.exp(), 2, 0.9 * lib, 1.1 * lib);
    assert!(
        (lib - oracle).abs() < 1e-7 * oracle,
        "library {lib}, oracle {oracle}"
    );
}

#[test]
fn cubic_ball_center_value() {
    let lib = library_center(&Nonlinearity::PowerMinusLinear { p: 3.0 }, 3);
    let oracle = oracle_center(&|u: f64| u * u * u - u, 3, 0.9 * lib, 1.1 * lib);
    assert!(
        (lib - oracle).abs() < 1e-7 * oracle,
        "library {lib}, oracle {oracle}"
    );
}
