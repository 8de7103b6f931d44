//! Levenberg-Marquardt refinement of a least-squares residual vector, with
//! a central-difference Jacobian.

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LmOptions {
    pub max_iterations: usize,
    /// Relative finite-difference step.
    pub diff_step: f64,
    /// Stop when a step changes every coordinate by less than this.
    pub x_tol: f64,
}

impl Default for LmOptions {
    fn default() -> Self {
        Self {
            max_iterations: 200,
            diff_step: 1e-6,
            x_tol: 1e-15,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LmResult {
    pub x: Vec<f64>,
    /// Sum of squared residuals at `x`.
    pub value: f64,
    pub iterations: usize,
}

fn sum_sq(r: &[f64]) -> f64 {
    let v: f64 = r.iter().map(|a| a * a).sum();
    if v.is_finite() {
        v
    } else {
        f64::INFINITY
    }
}

fn eval<R>(res: &R, x: &[f64]) -> Option<(Vec<f64>, f64)>
where
    R: Fn(&[f64]) -> Option<Vec<f64>>,
{
    let r = res(x)?;
    let v = sum_sq(&r);
    v.is_finite().then_some((r, v))
}

/// Least-squares solution of `a x ≈ b` for a tall `a` (rows of length `n`)
/// by Householder QR. Returns `None` if `a` is rank deficient.
fn qr_solve(mut a: Vec<Vec<f64>>, mut b: Vec<f64>, n: usize) -> Option<Vec<f64>> {
    let m = a.len();
    if m < n {
        return None;
    }
    for k in 0..n {
        let norm = (k..m).map(|i| a[i][k] * a[i][k]).sum::<f64>().sqrt();
        if !(norm > 0.0) {
            return None;
        }
        let alpha = if a[k][k] > 0.0 { -norm } else { norm };
        let mut v: Vec<f64> = (k..m).map(|i| a[i][k]).collect();
        v[0] -= alpha;
        let vv: f64 = v.iter().map(|x| x * x).sum();
        if vv > 0.0 {
            for j in k..n {
                let d: f64 = (k..m).map(|i| v[i - k] * a[i][j]).sum::<f64>() * 2.0 / vv;
                for i in k..m {
                    a[i][j] -= d * v[i - k];
                }
            }
            let d: f64 = (k..m).map(|i| v[i - k] * b[i]).sum::<f64>() * 2.0 / vv;
            for i in k..m {
                b[i] -= d * v[i - k];
            }
        }
    }
    let diag_max = (0..n).map(|i| a[i][i].abs()).fold(0.0, f64::max);
    let mut x = vec![0.0; n];
    for i in (0..n).rev() {
        let s: f64 = (i + 1..n).map(|j| a[i][j] * x[j]).sum();
        if a[i][i].abs() <= 1e-14 * diag_max {
            return None;
        }
        x[i] = (b[i] - s) / a[i][i];
    }
    x.iter().all(|v| v.is_finite()).then_some(x)
}

/// Minimizes `Σ r_i(x)²` from `x0`. `res` returns `None` where the residuals
/// are undefined. The result is never worse than `x0`.
pub fn minimize<R>(res: R, x0: &[f64], opts: &LmOptions) -> LmResult
where
    R: Fn(&[f64]) -> Option<Vec<f64>>,
{
    let n = x0.len();
    let mut x = x0.to_vec();
    let Some((mut r, mut value)) = eval(&res, &x) else {
        return LmResult {
            x,
            value: f64::INFINITY,
            iterations: 0,
        };
    };
    let mut lambda: f64 = 1e-3;
    let mut iterations = 0;
    'outer: while iterations < opts.max_iterations && value > 0.0 {
        iterations += 1;
        let m = r.len();
        let mut jac = vec![vec![0.0; n]; m];
        for k in 0..n {
            let h = opts.diff_step * x[k].abs().max(1.0);
            let mut xp = x.clone();
            let mut xm = x.clone();
            xp[k] += h;
            xm[k] -= h;
            let (Some(rp), Some(rm)) = (res(&xp), res(&xm)) else {
                break 'outer;
            };
            if rp.len() != m || rm.len() != m {
                break 'outer;
            }
            for i in 0..m {
                jac[i][k] = (rp[i] - rm[i]) / (2.0 * h);
            }
        }
        // Marquardt scaling by column norms, floored so that a parameter with
        // no influence still gets a finite damping term.
        let col: Vec<f64> = (0..n)
            .map(|k| (0..m).map(|i| jac[i][k] * jac[i][k]).sum::<f64>().sqrt())
            .collect();
        if col.iter().any(|v| !v.is_finite()) {
            break;
        }
        let col_max = col.iter().cloned().fold(0.0, f64::max);
        let scale: Vec<f64> = col.iter().map(|&c| c.max(1e-12 * col_max).max(1e-300)).collect();

        loop {
            // Damped Gauss-Newton step as the least-squares problem
            // [J; sqrt(λ) D] δ ≈ [-r; 0], which avoids squaring cond(J).
            let mut aug: Vec<Vec<f64>> = jac.clone();
            let mut rhs: Vec<f64> = r.iter().map(|v| -v).collect();
            for k in 0..n {
                let mut row = vec![0.0; n];
                row[k] = lambda.sqrt() * scale[k];
                aug.push(row);
                rhs.push(0.0);
            }
            if let Some(step) = qr_solve(aug, rhs, n) {
                let trial: Vec<f64> = x.iter().zip(&step).map(|(a, b)| a + b).collect();
                if let Some((rt, vt)) = eval(&res, &trial) {
                    if vt < value {
                        let small = step.iter().all(|s| s.abs() <= opts.x_tol);
                        x = trial;
                        r = rt;
                        value = vt;
                        lambda = (lambda / 3.0).max(1e-20);
                        if small {
                            break 'outer;
                        }
                        continue 'outer;
                    }
                }
                if step.iter().all(|s| s.abs() <= opts.x_tol) {
                    break 'outer;
                }
            }
            lambda *= 4.0;
            if lambda > 1e12 {
                break 'outer;
            }
        }
    }
    LmResult { x, value, iterations }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rosenbrock_residuals_reach_the_minimum() {
        let res = |x: &[f64]| Some(vec![10.0 * (x[1] - x[0] * x[0]), 1.0 - x[0]]);
        let r = minimize(res, &[-1.2, 1.0], &LmOptions::default());
        assert!((r.x[0] - 1.0).abs() < 1e-10, "{:?}", r.x);
        assert!((r.x[1] - 1.0).abs() < 1e-10, "{:?}", r.x);
        assert!(r.value < 1e-20);
    }

    #[test]
    fn linear_least_squares_matches_normal_equations() {
        // Fit y = a + b t to four points; the normal equations give the oracle.
        let t = [0.0, 1.0, 2.0, 3.0];
        let y = [1.0, 2.9, 5.2, 6.8];
        let res = |x: &[f64]| Some(t.iter().zip(&y).map(|(ti, yi)| x[0] + x[1] * ti - yi).collect());
        let r = minimize(res, &[0.0, 0.0], &LmOptions::default());
        let n = 4.0;
        let st: f64 = t.iter().sum();
        let sy: f64 = y.iter().sum();
        let stt: f64 = t.iter().map(|v| v * v).sum();
        let sty: f64 = t.iter().zip(&y).map(|(a, b)| a * b).sum();
        let b = (n * sty - st * sy) / (n * stt - st * st);
        let a = (sy - b * st) / n;
        assert!((r.x[0] - a).abs() < 1e-9 && (r.x[1] - b).abs() < 1e-9, "{:?} vs {a} {b}", r.x);
    }

    #[test]
    fn undefined_start_is_returned_unchanged() {
        let r = minimize(|_: &[f64]| None, &[3.0], &LmOptions::default());
        assert_eq!(r.x, vec![3.0]);
        assert_eq!(r.value, f64::INFINITY);
        assert_eq!(r.iterations, 0);
    }

    #[test]
    fn never_worse_than_start() {
        let res = |x: &[f64]| Some(vec![(x[0] * 40.0).sin() + 0.3 * x[0], x[1].cos()]);
        let x0 = [0.7, 0.2];
        let start: f64 = res(&x0).unwrap().iter().map(|v| v * v).sum();
        let r = minimize(res, &x0, &LmOptions::default());
        assert!(r.value <= start);
    }

    #[test]
    fn qr_solves_square_and_rejects_rank_deficient() {
        let x = qr_solve(vec![vec![4.0, 2.0], vec![2.0, 3.0]], vec![2.0, 1.0], 2).unwrap();
        assert!((4.0 * x[0] + 2.0 * x[1] - 2.0).abs() < 1e-14);
        assert!((2.0 * x[0] + 3.0 * x[1] - 1.0).abs() < 1e-14);
        assert!(qr_solve(vec![vec![1.0, 2.0], vec![2.0, 4.0], vec![3.0, 6.0]], vec![1.0; 3], 2).is_none());
        assert!(qr_solve(vec![vec![1.0, 2.0]], vec![1.0], 2).is_none());
    }
}
