//! Derivative-free minimization (Nelder-Mead with dimension-adaptive
//! coefficients).

#[derive(Debug, Clone)]
pub struct NelderMeadOptions {
    pub max_evals: usize,
    /// Edge length of the initial simplex along each axis.
    pub initial_step: f64,
    /// Stop once the best value is at or below this.
    pub target: f64,
    /// Stop once the spread of simplex values falls below
    /// `f_tol + f_rel * |best|` and the simplex is smaller than `x_tol`.
    pub f_tol: f64,
    pub f_rel: f64,
    pub x_tol: f64,
}

impl Default for NelderMeadOptions {
    fn default() -> Self {
        Self {
            max_evals: 20_000,
            initial_step: 0.1,
            target: 0.0,
            f_tol: 1e-22,
            f_rel: 1e-10,
            x_tol: 1e-9,
        }
    }
}

#[derive(Debug, Clone)]
pub struct Minimum {
    pub x: Vec<f64>,
    pub value: f64,
    pub evals: usize,
}

/// Minimizes `f` from `start`. Coefficients follow the Gao-Han adaptive
/// scheme, which behaves better than the textbook values above ~5 parameters.
pub fn nelder_mead<F>(f: F, start: &[f64], opts: &NelderMeadOptions) -> Minimum
where
    F: Fn(&[f64]) -> f64,
{
    let n = start.len();
    let evals = std::cell::Cell::new(0usize);
    let eval = |x: &[f64]| {
        evals.set(evals.get() + 1);
        let v = f(x);
        if v.is_nan() {
            f64::INFINITY
        } else {
            v
        }
    };
    if n == 0 {
        let value = eval(start);
        return Minimum {
            x: Vec::new(),
            value,
            evals: evals.get(),
        };
    }

    let nf = n as f64;
    let alpha = 1.0;
    let beta = 1.0 + 2.0 / nf;
    let gamma = 0.75 - 1.0 / (2.0 * nf);
    let delta = 1.0 - 1.0 / nf;

    let mut simplex: Vec<Vec<f64>> = Vec::with_capacity(n + 1);
    simplex.push(start.to_vec());
    for i in 0..n {
        let mut v = start.to_vec();
        v[i] += opts.initial_step;
        simplex.push(v);
    }
    let mut values: Vec<f64> = simplex.iter().map(|v| eval(v)).collect();

    loop {
        // order best..worst
        let mut idx: Vec<usize> = (0..=n).collect();
        idx.sort_by(|&a, &b| values[a].total_cmp(&values[b]));
        simplex = idx.iter().map(|&i| simplex[i].clone()).collect();
        values = idx.iter().map(|&i| values[i]).collect();

        let best = values[0];
        let worst = values[n];
        if best <= opts.target || evals.get() >= opts.max_evals {
            break;
        }
        let diameter = simplex[1..]
            .iter()
            .map(|v| {
                v.iter()
                    .zip(&simplex[0])
                    .map(|(a, b)| (a - b).abs())
                    .fold(0.0, f64::max)
            })
            .fold(0.0, f64::max);
        if (worst - best).abs() <= opts.f_tol + opts.f_rel * best.abs() && diameter <= opts.x_tol {
            break;
        }
        if diameter <= opts.x_tol * 1e-4 {
            break;
        }

        let mut centroid = vec![0.0; n];
        for v in &simplex[..n] {
            for (c, x) in centroid.iter_mut().zip(v) {
                *c += x / nf;
            }
        }
        let along = |t: f64| -> Vec<f64> {
            centroid
                .iter()
                .zip(&simplex[n])
                .map(|(c, w)| c + t * (c - w))
                .collect()
        };

        let xr = along(alpha);
        let fr = eval(&xr);
        if fr < values[0] {
            let xe = along(alpha * beta);
            let fe = eval(&xe);
            if fe < fr {
                simplex[n] = xe;
                values[n] = fe;
            } else {
                simplex[n] = xr;
                values[n] = fr;
            }
            continue;
        }
        if fr < values[n - 1] {
            simplex[n] = xr;
            values[n] = fr;
            continue;
        }
        let (xc, fc) = if fr < values[n] {
            let xc = along(alpha * gamma);
            let fc = eval(&xc);
            (xc, fc)
        } else {
            let xc = along(-gamma);
            let fc = eval(&xc);
            (xc, fc)
        };
        if fc < values[n].min(fr) {
            simplex[n] = xc;
            values[n] = fc;
            continue;
        }
        // shrink toward the best vertex
        let best_v = simplex[0].clone();
        for k in 1..=n {
            let v: Vec<f64> = best_v
                .iter()
                .zip(&simplex[k])
                .map(|(b, x)| b + delta * (x - b))
                .collect();
            values[k] = eval(&v);
            simplex[k] = v;
        }
    }

    let k = (0..=n)
        .min_by(|&a, &b| values[a].total_cmp(&values[b]))
        .unwrap_or(0);
    Minimum {
        x: simplex[k].clone(),
        value: values[k],
        evals: evals.get(),
    }
}
