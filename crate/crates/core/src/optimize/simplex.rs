//! Nelder–Mead simplex search with dimension-adaptive coefficients
//! (Gao & Han) and re-initialisation at the incumbent after convergence.

/// Stopping rules for one local search.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SimplexOptions {
    /// Budget of objective evaluations, shared by all re-initialisations.
    pub max_evals: usize,
    /// Converged once the spread of simplex values is below this...
    pub ftol: f64,
    /// ...and every vertex is within this distance (max-norm) of the best.
    pub xtol: f64,
    /// Number of fresh simplices built around the incumbent after a
    /// convergence; a collapsed simplex is the usual way Nelder–Mead stalls.
    pub reinit: usize,
}

impl Default for SimplexOptions {
    fn default() -> Self {
        SimplexOptions {
            max_evals: 40_000,
            ftol: 1e-15,
            xtol: 1e-10,
            reinit: 3,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimplexOutcome {
    pub x: Vec<f64>,
    pub f: f64,
    pub evals: usize,
    /// Whether the last simplex met both tolerances inside the budget.
    pub converged: bool,
}

/// Minimise `f` starting from `x0`. `steps` sets the size of the initial
/// simplex along each coordinate. Non-finite objective values count as `+inf`.
pub fn minimize<F>(mut f: F, x0: &[f64], steps: &[f64], opts: &SimplexOptions) -> SimplexOutcome
where
    F: FnMut(&[f64]) -> f64,
{
    assert_eq!(x0.len(), steps.len());
    let n = x0.len();
    let mut evals = 0usize;
    let mut eval = |x: &[f64], evals: &mut usize| {
        *evals += 1;
        let v = f(x);
        if v.is_finite() {
            v
        } else {
            f64::INFINITY
        }
    };

    if n == 0 {
        let v = eval(x0, &mut evals);
        return SimplexOutcome {
            x: Vec::new(),
            f: v,
            evals,
            converged: true,
        };
    }

    let nf = n as f64;
    let (rho, chi, gamma, sigma) = (1.0, 1.0 + 2.0 / nf, 0.75 - 0.5 / nf, 1.0 - 1.0 / nf);

    let mut best_x = x0.to_vec();
    let mut best_f = eval(x0, &mut evals);
    let mut converged = false;
    let mut scale = 1.0;

    for round in 0..=opts.reinit {
        if evals >= opts.max_evals {
            break;
        }
        let mut pts: Vec<Vec<f64>> = Vec::with_capacity(n + 1);
        let mut vals: Vec<f64> = Vec::with_capacity(n + 1);
        pts.push(best_x.clone());
        vals.push(best_f);
        for i in 0..n {
            let mut x = best_x.clone();
            x[i] += scale * steps[i];
            vals.push(eval(&x, &mut evals));
            pts.push(x);
        }

        converged = false;
        let mut order: Vec<usize> = (0..=n).collect();
        let mut centroid = vec![0.0; n];
        let mut trial = vec![0.0; n];
        while evals < opts.max_evals {
            order.sort_by(|&a, &b| vals[a].total_cmp(&vals[b]).then(a.cmp(&b)));
            let (lo, hi, second) = (order[0], order[n], order[n - 1]);

            let spread = vals[hi] - vals[lo];
            let size = pts
                .iter()
                .flat_map(|p| p.iter().zip(&pts[lo]).map(|(a, b)| (a - b).abs()))
                .fold(0.0, f64::max);
            if spread <= opts.ftol && size <= opts.xtol {
                converged = true;
                break;
            }

            centroid.iter_mut().for_each(|c| *c = 0.0);
            for &k in &order[..n] {
                for (c, x) in centroid.iter_mut().zip(&pts[k]) {
                    *c += x / nf;
                }
            }
            let point = |t: f64, out: &mut Vec<f64>, worst: &[f64]| {
                for ((o, c), w) in out.iter_mut().zip(&centroid).zip(worst) {
                    *o = c + t * (c - w);
                }
            };

            point(rho, &mut trial, &pts[hi]);
            let fr = eval(&trial, &mut evals);
            if fr < vals[lo] {
                let reflected = trial.clone();
                point(rho * chi, &mut trial, &pts[hi]);
                let fe = eval(&trial, &mut evals);
                if fe < fr {
                    pts[hi].copy_from_slice(&trial);
                    vals[hi] = fe;
                } else {
                    pts[hi] = reflected;
                    vals[hi] = fr;
                }
                continue;
            }
            if fr < vals[second] {
                pts[hi].copy_from_slice(&trial);
                vals[hi] = fr;
                continue;
            }
            let (t, bound) = if fr < vals[hi] { (rho * gamma, fr) } else { (-gamma, vals[hi]) };
            point(t, &mut trial, &pts[hi]);
            let fc = eval(&trial, &mut evals);
            let accept = if t > 0.0 { fc <= bound } else { fc < bound };
            if accept {
                pts[hi].copy_from_slice(&trial);
                vals[hi] = fc;
                continue;
            }
            let anchor = pts[lo].clone();
            for &k in &order[1..] {
                for (x, a) in pts[k].iter_mut().zip(&anchor) {
                    *x = a + sigma * (*x - a);
                }
                vals[k] = eval(&pts[k], &mut evals);
            }
        }

        let k = (0..=n)
            .min_by(|&a, &b| vals[a].total_cmp(&vals[b]).then(a.cmp(&b)))
            .unwrap();
        let improved = best_f - vals[k];
        if vals[k] <= best_f {
            best_f = vals[k];
            best_x = pts[k].clone();
        }
        // A fresh simplex that finds nothing better confirms the optimum.
        if round > 0 && converged && improved <= opts.ftol {
            break;
        }
        scale *= 0.5;
    }

    SimplexOutcome {
        x: best_x,
        f: best_f,
        evals,
        converged,
    }
}
