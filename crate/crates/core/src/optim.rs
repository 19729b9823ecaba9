//! Derivative-free minimisation over convex sets: Nelder–Mead simplex
//! reflections with every trial point projected back onto the feasible set.

use nalgebra::DVector;

use crate::space::ParameterSpace;

/// Settings for [`NelderMead::minimize`].
#[derive(Debug, Clone)]
pub struct NelderMead {
    /// Edge length of the initial simplex.
    pub initial_step: f64,
    /// Stop when the spread of simplex values falls below this.
    pub ftol: f64,
    /// ... and the simplex diameter falls below this.
    pub xtol: f64,
    pub max_evals: usize,
    /// Fresh simplices rebuilt around the incumbent after convergence.
    pub restarts: usize,
}

impl Default for NelderMead {
    fn default() -> Self {
        NelderMead {
            initial_step: 0.1,
            ftol: 1e-10,
            xtol: 1e-10,
            max_evals: 4000,
            restarts: 3,
        }
    }
}

#[derive(Debug, Clone)]
pub struct Minimum {
    pub x: DVector<f64>,
    pub value: f64,
    pub evals: usize,
    pub converged: bool,
}

impl NelderMead {
    pub fn with_step(step: f64) -> Self {
        NelderMead {
            initial_step: step,
            ..Default::default()
        }
    }

    /// Minimises `f` over the image of `project`, starting from `start`.
    ///
    /// The returned point is always the best point evaluated, so the result
    /// never exceeds `f(project(start))`.
    pub fn minimize<F, P>(&self, mut f: F, project: P, start: &DVector<f64>) -> Minimum
    where
        F: FnMut(&DVector<f64>) -> f64,
        P: Fn(&DVector<f64>) -> DVector<f64>,
    {
        let mut evals = 0usize;
        let mut eval = |x: &DVector<f64>, evals: &mut usize| {
            *evals += 1;
            let v = f(x);
            if v.is_nan() {
                f64::INFINITY
            } else {
                v
            }
        };
        let x0 = project(start);
        let f0 = eval(&x0, &mut evals);
        let mut best = (x0, f0);
        let mut converged = false;
        let mut step = self.initial_step;
        for round in 0..=self.restarts {
            if evals >= self.max_evals {
                break;
            }
            let (x, v, done) = self.run(&mut eval, &project, &best.0, best.1, step, &mut evals);
            let improvement = best.1 - v;
            if v < best.1 || (v == best.1 && crate::linalg::lex_cmp(&x, &best.0).is_lt()) {
                best = (x, v);
            }
            converged = done;
            if round > 0 && improvement <= self.ftol {
                break;
            }
            step = (step * 0.5).max(self.xtol * 10.0);
        }
        Minimum {
            x: best.0,
            value: best.1,
            evals,
            converged,
        }
    }

    fn run<E, P>(
        &self,
        eval: &mut E,
        project: &P,
        start: &DVector<f64>,
        f_start: f64,
        step: f64,
        evals: &mut usize,
    ) -> (DVector<f64>, f64, bool)
    where
        E: FnMut(&DVector<f64>, &mut usize) -> f64,
        P: Fn(&DVector<f64>) -> DVector<f64>,
    {
        let n = start.len();
        let nf = n as f64;
        // Dimension-adaptive coefficients (Gao & Han).
        let (alpha, gamma, rho, sigma) = if n <= 1 {
            (1.0, 2.0, 0.5, 0.5)
        } else {
            (1.0, 1.0 + 2.0 / nf, 0.75 - 1.0 / (2.0 * nf), 1.0 - 1.0 / nf)
        };
        let mut simplex: Vec<(DVector<f64>, f64)> = Vec::with_capacity(n + 1);
        simplex.push((start.clone(), f_start));
        for i in 0..n {
            let mut x = start.clone();
            x[i] += step;
            let mut px = project(&x);
            if (&px - start).norm() < 0.5 * step {
                x[i] = start[i] - step;
                px = project(&x);
            }
            let v = eval(&px, evals);
            simplex.push((px, v));
        }
        let order = |s: &mut Vec<(DVector<f64>, f64)>| {
            s.sort_by(|a, b| a.1.total_cmp(&b.1).then_with(|| crate::linalg::lex_cmp(&a.0, &b.0)))
        };
        order(&mut simplex);
        while *evals < self.max_evals {
            let spread = simplex[n].1 - simplex[0].1;
            let diameter = simplex[1..]
                .iter()
                .map(|(x, _)| (x - &simplex[0].0).amax())
                .fold(0.0, f64::max);
            if (spread <= self.ftol && diameter <= self.xtol.max(1e-3 * step))
                || diameter <= self.xtol * 1e-2
            {
                return (simplex[0].0.clone(), simplex[0].1, true);
            }
            let centroid = simplex[..n]
                .iter()
                .fold(DVector::zeros(n), |acc, (x, _)| acc + x)
                / nf;
            let worst = simplex[n].clone();
            let xr = project(&(&centroid + (&centroid - &worst.0) * alpha));
            let fr = eval(&xr, evals);
            if fr < simplex[0].1 {
                let xe = project(&(&centroid + (&xr - &centroid) * gamma));
                let fe = eval(&xe, evals);
                simplex[n] = if fe < fr { (xe, fe) } else { (xr, fr) };
            } else if fr < simplex[n - 1].1 {
                simplex[n] = (xr, fr);
            } else {
                let (xc, fc) = if fr < worst.1 {
                    let xc = project(&(&centroid + (&xr - &centroid) * rho));
                    let fc = eval(&xc, evals);
                    (xc, fc)
                } else {
                    let xc = project(&(&centroid + (&worst.0 - &centroid) * rho));
                    let fc = eval(&xc, evals);
                    (xc, fc)
                };
                if fc < worst.1.min(fr) {
                    simplex[n] = (xc, fc);
                } else {
                    let best = simplex[0].0.clone();
                    for vertex in simplex.iter_mut().skip(1) {
                        let xs = project(&(&best + (&vertex.0 - &best) * sigma));
                        let fs = eval(&xs, evals);
                        *vertex = (xs, fs);
                    }
                }
            }
            order(&mut simplex);
        }
        (simplex[0].0.clone(), simplex[0].1, false)
    }
}

/// Outcome of [`multistart`].
#[derive(Debug, Clone)]
pub struct MultiStart {
    pub x: DVector<f64>,
    pub value: f64,
    /// Final value reached from each start, in start order.
    pub restart_values: Vec<f64>,
    /// The best two restarts agree within `agreement`.
    pub converged: bool,
    pub evals: usize,
}

/// Runs `nm` from every start and keeps the best point (lexicographically
/// smallest among exact ties). For `p ≤ 2` a grid with `grid_points` per
/// axis is scanned afterwards and, if it beats the incumbent, used as one
/// more start.
pub fn multistart<F>(
    f: F,
    space: &ParameterSpace,
    starts: &[DVector<f64>],
    nm: &NelderMead,
    grid_points: usize,
    agreement: f64,
) -> MultiStart
where
    F: Fn(&DVector<f64>) -> f64,
{
    let project = |x: &DVector<f64>| space.project(x).unwrap_or_else(|_| x.clone());
    let mut evals = 0;
    let mut runs: Vec<(DVector<f64>, f64)> = Vec::with_capacity(starts.len() + 1);
    for s in starts {
        let m = nm.minimize(&f, project, s);
        evals += m.evals;
        runs.push((m.x, m.value));
    }
    let restart_values: Vec<f64> = runs.iter().map(|r| r.1).collect();
    let better = |a: &(DVector<f64>, f64), b: &(DVector<f64>, f64)| {
        a.1 < b.1 || (a.1 == b.1 && crate::linalg::lex_cmp(&a.0, &b.0).is_lt())
    };
    let mut best = runs
        .iter()
        .cloned()
        .reduce(|a, b| if better(&b, &a) { b } else { a })
        .unwrap_or_else(|| {
            let c = space.center();
            let v = f(&c);
            (c, v)
        });
    if space.dim() <= 2 && grid_points > 1 {
        let probe = space
            .grid(grid_points)
            .into_iter()
            .map(|x| {
                let v = f(&x);
                (x, v)
            })
            .reduce(|a, b| if better(&b, &a) { b } else { a });
        evals += grid_points.pow(space.dim() as u32);
        if let Some(probe) = probe {
            if probe.1 < best.1 - 1e-12 {
                let m = nm.minimize(&f, project, &probe.0);
                evals += m.evals;
                let cand = (m.x, m.value);
                if better(&cand, &best) {
                    best = cand;
                }
            }
        }
    }
    let mut sorted = restart_values.clone();
    sorted.sort_by(f64::total_cmp);
    let converged = sorted.len() < 2 || (sorted[1] - sorted[0]).abs() <= agreement;
    MultiStart {
        x: best.0,
        value: best.1,
        restart_values,
        converged,
        evals,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn v(x: &[f64]) -> DVector<f64> {
        DVector::from_row_slice(x)
    }

    #[test]
    fn minimises_rosenbrock() {
        let nm = NelderMead {
            max_evals: 20_000,
            ..NelderMead::with_step(0.5)
        };
        let r = nm.minimize(
            |x| 100.0 * (x[1] - x[0] * x[0]).powi(2) + (1.0 - x[0]).powi(2),
            |x| x.clone(),
            &v(&[-1.2, 1.0]),
        );
        assert!((r.x.clone() - v(&[1.0, 1.0])).norm() < 1e-4, "{:?}", r);
    }

    #[test]
    fn respects_projection() {
        let nm = NelderMead::with_step(0.3);
        let clamp = |x: &DVector<f64>| x.map(|t| t.clamp(0.0, 1.0));
        let r = nm.minimize(|x| (x[0] - 3.0).powi(2) + (x[1] + 2.0).powi(2), clamp, &v(&[0.5, 0.5]));
        assert!((r.x - v(&[1.0, 0.0])).norm() < 1e-7);
    }

    #[test]
    fn nonsmooth_absolute_value() {
        let nm = NelderMead::with_step(0.5);
        let r = nm.minimize(|x| x[0].abs() + 2.0 * (x[1] - 0.3).abs(), |x| x.clone(), &v(&[0.9, -0.7]));
        assert!(r.value < 1e-8, "{:?}", r);
    }

    #[test]
    fn never_worse_than_start() {
        let nm = NelderMead::with_step(1.0);
        let r = nm.minimize(|x| if x[0] == 0.25 { -1.0 } else { x[0].abs() }, |x| x.clone(), &v(&[0.25]));
        assert_eq!(r.value, -1.0);
    }
}
