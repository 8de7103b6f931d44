//! Nelder-Mead downhill simplex with dimension-adaptive coefficients.

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SimplexOptions {
    pub max_iterations: usize,
    /// Stop when the spread of objective values across the simplex drops below this.
    pub f_tol: f64,
    /// Stop when every vertex is within this distance of the best vertex (per coordinate).
    pub x_tol: f64,
}

impl Default for SimplexOptions {
    fn default() -> Self {
        Self {
            max_iterations: 4000,
            f_tol: 1e-18,
            x_tol: 1e-12,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimplexResult {
    pub x: Vec<f64>,
    pub value: f64,
    pub iterations: usize,
    pub evaluations: usize,
}

/// Minimizes `f` starting from `x0`, with an initial simplex built by
/// stepping each coordinate by `step[i]`. Non-finite objective values are
/// treated as `+inf`.
pub fn minimize<F>(f: F, x0: &[f64], step: &[f64], opts: &SimplexOptions) -> SimplexResult
where
    F: Fn(&[f64]) -> f64,
{
    let n = x0.len();
    assert_eq!(step.len(), n, "step length must match dimension");
    let mut verts: Vec<Vec<f64>> = Vec::with_capacity(n + 1);
    verts.push(x0.to_vec());
    for i in 0..n {
        let mut v = x0.to_vec();
        v[i] += step[i];
        verts.push(v);
    }
    minimize_from(f, verts, opts)
}

/// Same as [`minimize`] but from an explicit initial simplex of `n + 1`
/// vertices in `n` dimensions.
pub fn minimize_from<F>(f: F, mut verts: Vec<Vec<f64>>, opts: &SimplexOptions) -> SimplexResult
where
    F: Fn(&[f64]) -> f64,
{
    assert!(!verts.is_empty(), "simplex needs at least one vertex");
    let n = verts[0].len();
    assert_eq!(verts.len(), n + 1, "simplex needs n + 1 vertices");
    let eval = |x: &[f64]| {
        let v = f(x);
        if v.is_nan() {
            f64::INFINITY
        } else {
            v
        }
    };
    let mut evaluations = 0usize;
    let mut vals: Vec<f64> = verts
        .iter()
        .map(|v| {
            evaluations += 1;
            eval(v)
        })
        .collect();

    if n == 0 {
        return SimplexResult {
            x: Vec::new(),
            value: vals[0],
            iterations: 0,
            evaluations,
        };
    }

    let nf = n as f64;
    let alpha = 1.0;
    let gamma = 1.0 + 2.0 / nf;
    let rho = 0.75 - 1.0 / (2.0 * nf);
    let sigma = 1.0 - 1.0 / nf;

    let mut order: Vec<usize> = (0..=n).collect();
    let mut iterations = 0;
    while iterations < opts.max_iterations {
        // Stable sort keeps ties in index order, which keeps runs deterministic.
        order.sort_by(|&a, &b| vals[a].total_cmp(&vals[b]));
        let best = order[0];
        let worst = order[n];
        let second = order[n - 1];

        let f_spread = (vals[worst] - vals[best]).abs();
        let x_spread = verts
            .iter()
            .flat_map(|v| v.iter().zip(&verts[best]).map(|(a, b)| (a - b).abs()))
            .fold(0.0f64, f64::max);
        if f_spread <= opts.f_tol && x_spread <= opts.x_tol {
            break;
        }
        if vals[best] == 0.0 {
            break;
        }
        iterations += 1;

        let mut centroid = vec![0.0; n];
        for &idx in order.iter().take(n) {
            for (c, x) in centroid.iter_mut().zip(&verts[idx]) {
                *c += x / nf;
            }
        }
        let along = |t: f64| -> Vec<f64> {
            centroid
                .iter()
                .zip(&verts[worst])
                .map(|(c, w)| c + t * (c - w))
                .collect()
        };

        let xr = along(alpha);
        let fr = eval(&xr);
        evaluations += 1;
        if fr < vals[best] {
            let xe = along(alpha * gamma);
            let fe = eval(&xe);
            evaluations += 1;
            if fe < fr {
                verts[worst] = xe;
                vals[worst] = fe;
            } else {
                verts[worst] = xr;
                vals[worst] = fr;
            }
            continue;
        }
        if fr < vals[second] {
            verts[worst] = xr;
            vals[worst] = fr;
            continue;
        }
        let (xc, fc, accept) = if fr < vals[worst] {
            let xc = along(alpha * rho);
            let fc = eval(&xc);
            (xc, fc, fc <= fr)
        } else {
            let xc = along(-rho);
            let fc = eval(&xc);
            (xc, fc, fc < vals[worst])
        };
        evaluations += 1;
        if accept {
            verts[worst] = xc;
            vals[worst] = fc;
            continue;
        }
        let anchor = verts[best].clone();
        for &idx in order.iter().skip(1) {
            for (x, a) in verts[idx].iter_mut().zip(&anchor) {
                *x = a + sigma * (*x - a);
            }
            vals[idx] = eval(&verts[idx]);
            evaluations += 1;
        }
    }

    let best = (0..=n)
        .min_by(|&a, &b| vals[a].total_cmp(&vals[b]))
        .unwrap_or(0);
    SimplexResult {
        x: verts[best].clone(),
        value: vals[best],
        iterations,
        evaluations,
    }
}
