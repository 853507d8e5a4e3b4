//! Bounded Nelder-Mead for the variance-ratio search.
//!
//! Trial points are clamped onto the box `x >= lower`, which keeps every
//! evaluation feasible. The search restarts once from the best vertex with a
//! fresh simplex; a simplex that collapsed onto a bound face cannot leave it.

/// Settings for [`NelderMead::minimize`].
#[derive(Debug, Clone)]
pub struct NelderMead {
    pub lower: Vec<f64>,
    /// Stop when `max f - min f` over the simplex falls below this.
    pub ftol: f64,
    /// Total iteration budget across the initial run and the restart.
    pub max_iter: usize,
    pub initial_step: f64,
}

/// Outcome of a minimization.
#[derive(Debug, Clone, PartialEq)]
pub struct Minimum {
    pub x: Vec<f64>,
    pub fval: f64,
    pub iterations: usize,
    pub evaluations: usize,
    pub converged: bool,
}

const REFLECT: f64 = 1.0;
const EXPAND: f64 = 2.0;
const CONTRACT: f64 = 0.5;
const SHRINK: f64 = 0.5;

impl NelderMead {
    pub fn new(dim: usize) -> Self {
        Self {
            lower: vec![0.0; dim],
            ftol: 1e-8,
            max_iter: 500,
            initial_step: 0.5,
        }
    }

    fn clamp(&self, x: &mut [f64]) {
        for (v, lo) in x.iter_mut().zip(&self.lower) {
            if *v < *lo {
                *v = *lo;
            }
        }
    }

    pub fn minimize<F: FnMut(&[f64]) -> f64>(&self, mut f: F, x0: &[f64]) -> Minimum {
        let mut evaluations = 0;
        let mut eval = |x: &[f64]| {
            evaluations += 1;
            let v = f(x);
            if v.is_nan() {
                f64::INFINITY
            } else {
                v
            }
        };
        let mut start = x0.to_vec();
        self.clamp(&mut start);
        let first = self.run(&mut eval, &start, self.initial_step, self.max_iter);
        let mut result = first.clone();
        let remaining = self.max_iter.saturating_sub(first.iterations);
        if first.converged && remaining > 0 && !start.is_empty() {
            let second = self.run(&mut eval, &first.x, self.initial_step * 0.2, remaining);
            let improved = second.fval < first.fval;
            result = Minimum {
                x: if improved { second.x } else { first.x },
                fval: if improved { second.fval } else { first.fval },
                iterations: first.iterations + second.iterations,
                evaluations: 0,
                converged: second.converged,
            };
        }
        result.evaluations = evaluations;
        result
    }

    fn run<F: FnMut(&[f64]) -> f64>(&self, f: &mut F, x0: &[f64], step: f64, budget: usize) -> Minimum {
        let n = x0.len();
        if n == 0 {
            return Minimum {
                x: Vec::new(),
                fval: f(x0),
                iterations: 0,
                evaluations: 0,
                converged: true,
            };
        }
        let mut simplex: Vec<(Vec<f64>, f64)> = Vec::with_capacity(n + 1);
        simplex.push((x0.to_vec(), f(x0)));
        for i in 0..n {
            let mut x = x0.to_vec();
            x[i] += step;
            self.clamp(&mut x);
            let fx = f(&x);
            simplex.push((x, fx));
        }

        let mut iterations = 0;
        let mut converged = false;
        loop {
            simplex.sort_by(|a, b| a.1.total_cmp(&b.1));
            let spread = simplex[n].1 - simplex[0].1;
            if spread < self.ftol {
                converged = true;
                break;
            }
            if iterations >= budget {
                break;
            }
            iterations += 1;

            let mut centroid = vec![0.0; n];
            for (x, _) in &simplex[..n] {
                for (c, v) in centroid.iter_mut().zip(x) {
                    *c += v / n as f64;
                }
            }
            let toward = |from: &[f64], coef: f64| -> Vec<f64> {
                let mut p: Vec<f64> = centroid.iter().zip(from).map(|(c, w)| c + coef * (w - c)).collect();
                self.clamp(&mut p);
                p
            };
            let worst = simplex[n].0.clone();
            let f_worst = simplex[n].1;

            let xr = toward(&worst, -REFLECT);
            let fr = f(&xr);
            if fr < simplex[0].1 {
                let xe = toward(&xr, EXPAND);
                let fe = f(&xe);
                simplex[n] = if fe < fr { (xe, fe) } else { (xr, fr) };
                continue;
            }
            if fr < simplex[n - 1].1 {
                simplex[n] = (xr, fr);
                continue;
            }
            let (xc, fc) = if fr < f_worst {
                let xc = toward(&xr, CONTRACT);
                let fc = f(&xc);
                (xc, fc)
            } else {
                let xc = toward(&worst, CONTRACT);
                let fc = f(&xc);
                (xc, fc)
            };
            if fc < fr.min(f_worst) {
                simplex[n] = (xc, fc);
                continue;
            }
            let best = simplex[0].0.clone();
            for (x, fx) in simplex.iter_mut().skip(1) {
                for (v, b) in x.iter_mut().zip(&best) {
                    *v = b + SHRINK * (*v - b);
                }
                self.clamp(x);
                *fx = f(x);
            }
        }
        let (x, fval) = simplex.swap_remove(0);
        Minimum {
            x,
            fval,
            iterations,
            evaluations: 0,
            converged,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn interior_quadratic() {
        let nm = NelderMead {
            ftol: 1e-14,
            ..NelderMead::new(2)
        };
        let m = nm.minimize(|x| (x[0] - 2.0).powi(2) + 3.0 * (x[1] - 0.5).powi(2), &[1.0, 1.0]);
        assert!(m.converged);
        assert!((m.x[0] - 2.0).abs() < 1e-5, "{:?}", m.x);
        assert!((m.x[1] - 0.5).abs() < 1e-5, "{:?}", m.x);
    }

    #[test]
    fn minimum_on_the_bound() {
        let nm = NelderMead {
            ftol: 1e-14,
            ..NelderMead::new(2)
        };
        let m = nm.minimize(|x| (x[0] + 1.0).powi(2) + (x[1] - 1.5).powi(2), &[1.0, 1.0]);
        assert_eq!(m.x[0], 0.0);
        assert!((m.x[1] - 1.5).abs() < 1e-5);
        assert!(m.x.iter().all(|v| *v >= 0.0));
    }

    #[test]
    fn budget_exhaustion_is_flagged() {
        let nm = NelderMead {
            max_iter: 3,
            ftol: 0.0,
            ..NelderMead::new(3)
        };
        let m = nm.minimize(|x| x.iter().map(|v| (v - 7.0).powi(2)).sum(), &[1.0, 1.0, 1.0]);
        assert!(!m.converged);
        assert_eq!(m.iterations, 3);
    }

    #[test]
    fn nan_is_treated_as_infinite() {
        let nm = NelderMead::new(1);
        let m = nm.minimize(|x| if x[0] > 1.2 { f64::NAN } else { (x[0] - 0.8).powi(2) }, &[1.0]);
        assert!((m.x[0] - 0.8).abs() < 1e-3);
    }

    #[test]
    fn zero_dimensional() {
        let m = NelderMead::new(0).minimize(|_| 4.0, &[]);
        assert_eq!(m.fval, 4.0);
        assert!(m.converged);
    }
}
