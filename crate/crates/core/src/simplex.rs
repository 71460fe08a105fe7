//! Derivative-free simplex minimizer.
//!
//! A standard Nelder-Mead loop with one twist: when the evaluation budget
//! runs out before convergence, the search restarts once from a smaller,
//! sign-alternating simplex around the incumbent before giving up. Objective
//! values that come back non-finite are treated as infinitely bad, which
//! lets callers express constraint violations by returning NaN or infinity.

/// Tuning knobs for [`NelderMead::minimize`].
#[derive(Debug, Clone)]
pub struct NelderMead {
    /// Evaluation budget per run (the restart gets a fresh budget).
    pub max_evals: usize,
    /// Convergence threshold on the objective spread across the simplex.
    pub objective_tol: f64,
    /// Convergence threshold on the coordinate spread across the simplex.
    pub param_tol: f64,
    /// Offset used to build the initial simplex around the starting point.
    pub initial_step: f64,
    /// Whether to restart once from a perturbed simplex on budget exhaustion.
    pub restart: bool,
}

impl Default for NelderMead {
    fn default() -> Self {
        NelderMead {
            max_evals: 2000,
            objective_tol: 1e-6,
            param_tol: 1e-4,
            initial_step: 0.5,
            restart: true,
        }
    }
}

/// Outcome of a simplex minimization.
#[derive(Debug, Clone)]
pub struct SimplexResult {
    /// Best point found.
    pub x: Vec<f64>,
    /// Objective at the best point.
    pub objective: f64,
    /// Total objective evaluations across both runs.
    pub evaluations: usize,
    /// Simplex iterations across both runs.
    pub iterations: usize,
    /// True when both spread criteria were met before the budget ran out.
    pub converged: bool,
    /// Best objective after each iteration; non-increasing by construction.
    pub best_history: Vec<f64>,
}

const ALPHA: f64 = 1.0;
const GAMMA: f64 = 2.0;
const RHO: f64 = 0.5;
const SIGMA: f64 = 0.5;

struct Run<'a, F> {
    f: &'a mut F,
    evals: usize,
    max_evals: usize,
}

impl<F: FnMut(&[f64]) -> f64> Run<'_, F> {
    fn eval(&mut self, x: &[f64]) -> Option<f64> {
        if self.evals >= self.max_evals {
            return None;
        }
        self.evals += 1;
        let v = (self.f)(x);
        Some(if v.is_finite() { v } else { f64::INFINITY })
    }
}

impl NelderMead {
    /// Minimizes `f` starting from `x0`.
    pub fn minimize<F: FnMut(&[f64]) -> f64>(&self, mut f: F, x0: &[f64]) -> SimplexResult {
        assert!(!x0.is_empty(), "cannot optimize over zero parameters");
        let first = self.run(&mut f, x0, self.initial_step, 1.0);
        if first.converged || !self.restart {
            return first;
        }
        // Perturbed restart: smaller steps, alternating direction, so the
        // rebuilt simplex does not retrace the stale one.
        let mut second = self.run(&mut f, &first.x, 0.25 * self.initial_step, -1.0);
        second.evaluations += first.evaluations;
        second.iterations += first.iterations;
        if first.objective < second.objective {
            second.x = first.x;
            second.objective = first.objective;
        }
        let mut history = first.best_history;
        history.extend(second.best_history);
        second.best_history = history;
        second
    }

    fn run<F: FnMut(&[f64]) -> f64>(
        &self,
        f: &mut F,
        x0: &[f64],
        step: f64,
        alternate: f64,
    ) -> SimplexResult {
        let n = x0.len();
        let mut run = Run {
            f,
            evals: 0,
            max_evals: self.max_evals.max(n + 2),
        };

        let mut simplex: Vec<Vec<f64>> = Vec::with_capacity(n + 1);
        simplex.push(x0.to_vec());
        for i in 0..n {
            let mut v = x0.to_vec();
            v[i] += step * alternate.powi(i as i32);
            simplex.push(v);
        }
        let mut values: Vec<f64> = Vec::with_capacity(n + 1);
        for v in &simplex {
            values.push(run.eval(v).expect("budget covers the initial simplex"));
        }

        let mut iterations = 0usize;
        let mut history = Vec::new();
        let mut converged = false;

        loop {
            let mut order: Vec<usize> = (0..=n).collect();
            order.sort_by(|&a, &b| values[a].total_cmp(&values[b]));
            let best = order[0];
            let worst = order[n];
            let second_worst = order[n - 1];
            history.push(values[best]);

            let obj_spread = values[worst] - values[best];
            let param_spread = simplex
                .iter()
                .map(|v| {
                    v.iter()
                        .zip(&simplex[best])
                        .map(|(a, b)| (a - b).abs())
                        .fold(0.0, f64::max)
                })
                .fold(0.0, f64::max);
            if obj_spread.abs() < self.objective_tol && param_spread < self.param_tol {
                converged = true;
                break;
            }

            let mut centroid = vec![0.0; n];
            for &i in &order[..n] {
                for (c, x) in centroid.iter_mut().zip(&simplex[i]) {
                    *c += x / n as f64;
                }
            }

            let point_along = |t: f64| -> Vec<f64> {
                centroid
                    .iter()
                    .zip(&simplex[worst])
                    .map(|(c, w)| c + t * (c - w))
                    .collect()
            };

            let reflected = point_along(ALPHA);
            let Some(fr) = run.eval(&reflected) else { break };

            if fr < values[best] {
                let expanded = point_along(GAMMA);
                let Some(fe) = run.eval(&expanded) else { break };
                if fe < fr {
                    simplex[worst] = expanded;
                    values[worst] = fe;
                } else {
                    simplex[worst] = reflected;
                    values[worst] = fr;
                }
            } else if fr < values[second_worst] {
                simplex[worst] = reflected;
                values[worst] = fr;
            } else {
                let (contracted, f_ref) = if fr < values[worst] {
                    (point_along(ALPHA * RHO), fr)
                } else {
                    (point_along(-RHO), values[worst])
                };
                let Some(fc) = run.eval(&contracted) else { break };
                if fc < f_ref {
                    simplex[worst] = contracted;
                    values[worst] = fc;
                } else {
                    // Shrink toward the best vertex.
                    let anchor = simplex[best].clone();
                    let mut exhausted = false;
                    for &i in &order[1..] {
                        for (x, a) in simplex[i].iter_mut().zip(&anchor) {
                            *x = a + SIGMA * (*x - *a);
                        }
                        match run.eval(&simplex[i].clone()) {
                            Some(v) => values[i] = v,
                            None => {
                                exhausted = true;
                                break;
                            }
                        }
                    }
                    if exhausted {
                        break;
                    }
                }
            }
            iterations += 1;
        }

        let best = (0..=n)
            .min_by(|&a, &b| values[a].total_cmp(&values[b]))
            .unwrap();
        SimplexResult {
            x: simplex[best].clone(),
            objective: values[best],
            evaluations: run.evals,
            iterations,
            converged,
            best_history: history,
        }
    }
}
