//! Convergence-rate fits and power-law extrapolation.

use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum FitError {
    #[error("need at least 3 data points, got {0}")]
    TooFewPoints(usize),
    #[error("inputs have different lengths ({0} and {1})")]
    LengthMismatch(usize, usize),
    #[error("input {0} is not positive and finite")]
    NonPositive(f64),
}

fn check(xs: &[f64], ys: &[f64]) -> Result<(), FitError> {
    if xs.len() != ys.len() {
        return Err(FitError::LengthMismatch(xs.len(), ys.len()));
    }
    if xs.len() < 3 {
        return Err(FitError::TooFewPoints(xs.len()));
    }
    if let Some(&bad) = xs.iter().chain(ys).find(|v| !(v.is_finite() && **v > 0.0)) {
        return Err(FitError::NonPositive(bad));
    }
    Ok(())
}

/// Least-squares slope of `log(error)` against `log(h)`.
pub fn fit_rate(h: &[f64], errors: &[f64]) -> Result<f64, FitError> {
    check(h, errors)?;
    let x: Vec<f64> = h.iter().map(|v| v.ln()).collect();
    let y: Vec<f64> = errors.iter().map(|v| v.ln()).collect();
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let sxy: f64 = x.iter().zip(&y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let sxx: f64 = x.iter().map(|a| (a - mx).powi(2)).sum();
    Ok(sxy / sxx)
}

/// Result of fitting `ω(N) = ω_extr + C·N^{−t}`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Extrapolation {
    pub omega: f64,
    pub order: f64,
    pub constant: f64,
    pub converged: bool,
    pub iterations: usize,
    /// Root-mean-square residual of the fit.
    pub rms: f64,
}

const MAX_ITER: usize = 500;

/// Levenberg–Marquardt fit of `ω(N) = ω_extr + C·N^{−t}` started from
/// `t = 2`, `ω_extr` = the last omega.
pub fn extrapolate(levels: &[f64], omegas: &[f64]) -> Result<Extrapolation, FitError> {
    check(levels, omegas)?;
    let n = levels.len();
    let scale = omegas.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    let y: Vec<f64> = omegas.iter().map(|v| v / scale).collect();
    let model = |p: [f64; 3], k: usize| p[0] + p[1] * levels[k].powf(-p[2]);
    let cost = |p: [f64; 3]| (0..n).map(|k| (model(p, k) - y[k]).powi(2)).sum::<f64>();

    let t0 = 2.0;
    let w0 = y[n - 1];
    let c0 = (y[0] - w0) * levels[0].powf(t0);
    let mut p = [w0, c0, t0];
    let mut f = cost(p);
    let mut lambda = 1e-3;
    let mut converged = false;
    let mut iterations = 0;
    while iterations < MAX_ITER {
        iterations += 1;
        let mut jtj = [[0.0; 3]; 3];
        let mut jtr = [0.0; 3];
        for k in 0..n {
            let nt = levels[k].powf(-p[2]);
            let j = [1.0, nt, -p[1] * levels[k].ln() * nt];
            let r = model(p, k) - y[k];
            for a in 0..3 {
                jtr[a] += j[a] * r;
                for b in 0..3 {
                    jtj[a][b] += j[a] * j[b];
                }
            }
        }
        let mut improved = false;
        while lambda < 1e16 {
            let mut m = jtj;
            for (a, row) in m.iter_mut().enumerate() {
                row[a] += lambda * jtj[a][a].max(1e-300);
            }
            let Some(step) = solve3(m, [-jtr[0], -jtr[1], -jtr[2]]) else {
                lambda *= 10.0;
                continue;
            };
            let trial = [p[0] + step[0], p[1] + step[1], p[2] + step[2]];
            let ft = cost(trial);
            if ft.is_finite() && ft <= f {
                let small = step.iter().zip(&trial).all(|(s, v)| s.abs() <= 1e-13 * v.abs().max(1e-8));
                p = trial;
                f = ft;
                lambda = (lambda / 10.0).max(1e-15);
                improved = true;
                if small || f <= 1e-30 {
                    converged = true;
                }
                break;
            }
            lambda *= 10.0;
        }
        if !improved {
            // no descent direction left: stationary to working precision
            converged = jtr.iter().all(|g| g.abs() <= 1e-10);
            break;
        }
        if converged {
            break;
        }
    }
    Ok(Extrapolation {
        omega: p[0] * scale,
        order: p[2],
        constant: p[1] * scale,
        converged,
        iterations,
        rms: (f / n as f64).sqrt() * scale,
    })
}

fn solve3(m: [[f64; 3]; 3], b: [f64; 3]) -> Option<[f64; 3]> {
    let det = |m: [[f64; 3]; 3]| {
        m[0][0] * (m[1][1] * m[2][2] - m[1][2] * m[2][1]) - m[0][1] * (m[1][0] * m[2][2] - m[1][2] * m[2][0])
            + m[0][2] * (m[1][0] * m[2][1] - m[1][1] * m[2][0])
    };
    let d = det(m);
    if d == 0.0 || !d.is_finite() {
        return None;
    }
    let mut x = [0.0; 3];
    for (c, xc) in x.iter_mut().enumerate() {
        let mut mc = m;
        for r in 0..3 {
            mc[r][c] = b[r];
        }
        *xc = det(mc) / d;
    }
    Some(x)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    #[test]
    fn exact_power_law_rate() {
        let h = [0.1, 0.05, 0.025];
        let e: Vec<f64> = h.iter().map(|v| v * v).collect();
        assert!((fit_rate(&h, &e).unwrap() - 2.0).abs() < 1e-10);
        assert_eq!(fit_rate(&h, &[3.0, 3.0, 3.0]).unwrap(), 0.0);
    }

    #[test]
    fn rate_rejects_bad_input() {
        assert_eq!(fit_rate(&[1.0, 2.0], &[1.0, 2.0]), Err(FitError::TooFewPoints(2)));
        assert_eq!(fit_rate(&[1.0, 2.0, 3.0], &[1.0, 0.0, 1.0]), Err(FitError::NonPositive(0.0)));
        assert_eq!(fit_rate(&[1.0, 2.0, 3.0], &[1.0, 1.0]), Err(FitError::LengthMismatch(3, 2)));
    }

    #[test]
    fn recovers_exact_model() {
        let n = [4.0, 6.0, 8.0, 10.0, 12.0];
        let w: Vec<f64> = n.iter().map(|v: &f64| 5.0 + 3.0 * v.powi(-2)).collect();
        let e = extrapolate(&n, &w).unwrap();
        assert!(e.converged);
        assert_relative_eq!(e.omega, 5.0, max_relative = 1e-10);
        assert_relative_eq!(e.order, 2.0, max_relative = 1e-8);
        assert_relative_eq!(e.constant, 3.0, max_relative = 1e-7);
    }

    #[test]
    fn recovers_decaying_from_below() {
        let n = [8.0, 10.0, 12.0, 14.0];
        let w: Vec<f64> = n.iter().map(|v: &f64| 100.0 - 40.0 * v.powf(-1.3)).collect();
        let e = extrapolate(&n, &w).unwrap();
        assert_relative_eq!(e.omega, 100.0, max_relative = 1e-9);
        assert_relative_eq!(e.order, 1.3, max_relative = 1e-6);
    }

    proptest! {
        #[test]
        fn rate_is_scale_invariant(t in 0.5f64..3.0, c in 0.1f64..100.0, k in 0.1f64..10.0) {
            let h: [f64; 4] = [0.2, 0.1, 0.07, 0.05];
            let e: Vec<f64> = h.iter().map(|v| c * v.powf(t)).collect();
            let hs: Vec<f64> = h.iter().map(|v| k * v).collect();
            prop_assert!((fit_rate(&hs, &e).unwrap() - t).abs() < 1e-9);
        }

        #[test]
        fn extrapolation_recovers_generated_models(w in 10.0f64..1e4, c in 0.5f64..50.0, t in 0.8f64..2.5) {
            let n = [6.0, 8.0, 10.0, 12.0, 14.0];
            let ys: Vec<f64> = n.iter().map(|v: &f64| w + c * v.powf(-t)).collect();
            let e = extrapolate(&n, &ys).unwrap();
            prop_assert!((e.omega - w).abs() <= 1e-7 * w, "{:?}", e);
            prop_assert!((e.order - t).abs() <= 1e-4, "{:?}", e);
        }
    }
}
