//! Derivative-free minimization used by the mixed-model fits.

use alloc::vec;
use alloc::vec::Vec;

#[derive(Debug, Clone)]
pub(crate) struct Minimum {
    pub x: Vec<f64>,
    pub value: f64,
    pub iterations: usize,
    pub converged: bool,
}

/// Nelder–Mead simplex search. Stops when the spread of simplex values falls
/// below `ftol (1 + |f_best|)` and the simplex diameter below `xtol`.
pub(crate) fn nelder_mead<F: FnMut(&[f64]) -> f64>(
    mut f: F,
    start: &[f64],
    step: &[f64],
    max_iter: usize,
    ftol: f64,
    xtol: f64,
) -> Minimum {
    let p = start.len();
    let mut simplex: Vec<Vec<f64>> = vec![start.to_vec()];
    for k in 0..p {
        let mut v = start.to_vec();
        v[k] += step[k];
        simplex.push(v);
    }
    let mut values: Vec<f64> = simplex.iter().map(|v| guard(f(v))).collect();
    let mut iterations = 0;
    let mut converged = false;
    let mut order: Vec<usize> = (0..=p).collect();
    while iterations < max_iter {
        order.sort_by(|&a, &b| values[a].total_cmp(&values[b]));
        let (best, worst, second) = (order[0], order[p], order[p - 1]);
        let spread = values[worst] - values[best];
        let diameter = simplex
            .iter()
            .map(|v| {
                v.iter().zip(&simplex[best]).map(|(a, b)| libm::fabs(a - b)).fold(0.0, f64::max)
            })
            .fold(0.0, f64::max);
        if spread <= ftol * (1.0 + libm::fabs(values[best])) && diameter <= xtol {
            converged = true;
            break;
        }
        iterations += 1;
        let mut centroid = vec![0.0; p];
        for &k in order.iter().take(p) {
            for (c, x) in centroid.iter_mut().zip(&simplex[k]) {
                *c += x / p as f64;
            }
        }
        let along = |coef: f64, simplex: &Vec<Vec<f64>>| -> Vec<f64> {
            centroid
                .iter()
                .zip(&simplex[worst])
                .map(|(c, w)| c + coef * (c - w))
                .collect()
        };
        let reflected = along(1.0, &simplex);
        let fr = guard(f(&reflected));
        if fr < values[best] {
            let expanded = along(2.0, &simplex);
            let fe = guard(f(&expanded));
            if fe < fr {
                simplex[worst] = expanded;
                values[worst] = fe;
            } else {
                simplex[worst] = reflected;
                values[worst] = fr;
            }
        } else if fr < values[second] {
            simplex[worst] = reflected;
            values[worst] = fr;
        } else {
            let coef = if fr < values[worst] { 0.5 } else { -0.5 };
            let contracted = along(coef, &simplex);
            let fc = guard(f(&contracted));
            if fc < values[worst].min(fr) {
                simplex[worst] = contracted;
                values[worst] = fc;
            } else {
                let anchor = simplex[best].clone();
                for k in 0..=p {
                    if k == best {
                        continue;
                    }
                    for (x, a) in simplex[k].iter_mut().zip(&anchor) {
                        *x = a + 0.5 * (*x - a);
                    }
                    values[k] = guard(f(&simplex[k]));
                }
            }
        }
    }
    let best = (0..=p).min_by(|&a, &b| values[a].total_cmp(&values[b])).unwrap_or(0);
    Minimum { x: simplex[best].clone(), value: values[best], iterations, converged }
}

/// Damped Newton refinement with central finite-difference derivatives.
/// Returns the input unchanged when the local Hessian is not positive definite.
pub(crate) fn newton_polish<F: FnMut(&[f64]) -> f64>(
    mut f: F,
    start: Minimum,
    h: f64,
    max_iter: usize,
    gtol: f64,
) -> Minimum {
    let p = start.x.len();
    let mut x = start.x.clone();
    let mut fx = start.value;
    let mut iterations = start.iterations;
    let mut converged = start.converged;
    for _ in 0..max_iter {
        let (grad, mut hess) = fd_gradient(&mut f, &x, fx, h);
        let gmax = grad.iter().map(|g| libm::fabs(*g)).fold(0.0, f64::max);
        if gmax <= gtol {
            converged = true;
            break;
        }
        fd_cross_terms(&mut f, &x, h, &mut hess);
        let Some(step) = solve_spd(&hess, &grad, p) else {
            break;
        };
        let mut scale = 1.0;
        let mut accepted = false;
        for _ in 0..30 {
            let trial: Vec<f64> = x.iter().zip(&step).map(|(a, s)| a - scale * s).collect();
            let ft = guard(f(&trial));
            if ft <= fx {
                x = trial;
                fx = ft;
                accepted = true;
                break;
            }
            scale *= 0.5;
        }
        iterations += 1;
        if !accepted {
            break;
        }
    }
    Minimum { x, value: fx, iterations, converged }
}

/// Central-difference gradient and Hessian diagonal (row-major `p x p`).
fn fd_gradient<F: FnMut(&[f64]) -> f64>(f: &mut F, x: &[f64], fx: f64, h: f64) -> (Vec<f64>, Vec<f64>) {
    let p = x.len();
    let mut grad = vec![0.0; p];
    let mut hess = vec![0.0; p * p];
    let mut probe = x.to_vec();
    for k in 0..p {
        probe[k] = x[k] + h;
        let plus = f(&probe);
        probe[k] = x[k] - h;
        let minus = f(&probe);
        probe[k] = x[k];
        grad[k] = (plus - minus) / (2.0 * h);
        hess[k * p + k] = (plus - 2.0 * fx + minus) / (h * h);
    }
    (grad, hess)
}

fn fd_cross_terms<F: FnMut(&[f64]) -> f64>(f: &mut F, x: &[f64], h: f64, hess: &mut [f64]) {
    let p = x.len();
    let mut probe = x.to_vec();
    let mut eval = |da: f64, db: f64, a: usize, b: usize, probe: &mut Vec<f64>| {
        probe[a] = x[a] + da;
        probe[b] = x[b] + db;
        let v = f(probe);
        probe[a] = x[a];
        probe[b] = x[b];
        v
    };
    for a in 0..p {
        for b in 0..a {
            let pp = eval(h, h, a, b, &mut probe);
            let pm = eval(h, -h, a, b, &mut probe);
            let mp = eval(-h, h, a, b, &mut probe);
            let mm = eval(-h, -h, a, b, &mut probe);
            let v = (pp - pm - mp + mm) / (4.0 * h * h);
            hess[a * p + b] = v;
            hess[b * p + a] = v;
        }
    }
}

/// Solves `A x = b` for symmetric positive-definite `A` (row-major `p x p`).
pub(crate) fn solve_spd(a: &[f64], b: &[f64], p: usize) -> Option<Vec<f64>> {
    let mut l = vec![0.0; p * p];
    for i in 0..p {
        for j in 0..=i {
            let mut s = a[i * p + j];
            for k in 0..j {
                s -= l[i * p + k] * l[j * p + k];
            }
            if i == j {
                if !(s > 0.0) || !s.is_finite() {
                    return None;
                }
                l[i * p + i] = libm::sqrt(s);
            } else {
                l[i * p + j] = s / l[j * p + j];
            }
        }
    }
    let mut y = vec![0.0; p];
    for i in 0..p {
        let mut s = b[i];
        for k in 0..i {
            s -= l[i * p + k] * y[k];
        }
        y[i] = s / l[i * p + i];
    }
    let mut x = vec![0.0; p];
    for i in (0..p).rev() {
        let mut s = y[i];
        for k in i + 1..p {
            s -= l[k * p + i] * x[k];
        }
        x[i] = s / l[i * p + i];
    }
    Some(x)
}

fn guard(v: f64) -> f64 {
    if v.is_nan() {
        f64::INFINITY
    } else {
        v
    }
}
