//! Derivative-free local search in a 3-dimensional box, plus the
//! low-discrepancy start points used by the multi-start calibrators.

use crate::rng::Prng;

/// Axis-aligned search box.
#[derive(Debug, Clone, Copy)]
pub struct Box3 {
    pub lo: [f64; 3],
    pub hi: [f64; 3],
}

impl Box3 {
    pub fn clamp(&self, x: [f64; 3]) -> [f64; 3] {
        std::array::from_fn(|i| x[i].clamp(self.lo[i], self.hi[i]))
    }

    pub fn lerp(&self, u: [f64; 3]) -> [f64; 3] {
        std::array::from_fn(|i| self.lo[i] + u[i] * (self.hi[i] - self.lo[i]))
    }

    pub fn width(&self, i: usize) -> f64 {
        self.hi[i] - self.lo[i]
    }
}

/// Radical-inverse (van der Corput) digit reversal in the given base.
fn radical_inverse(mut index: u64, base: u64) -> f64 {
    let mut result = 0.0;
    let mut fraction = 1.0 / base as f64;
    while index > 0 {
        result += (index % base) as f64 * fraction;
        index /= base;
        fraction /= base as f64;
    }
    result
}

/// Halton points in bases (2, 3, 5), shifted by a seed-derived
/// Cranley-Patterson rotation and mapped into the box. Deterministic per
/// seed; independent of how the starts are later scheduled.
pub fn multistart_points(n: usize, seed: u64, bounds: &Box3) -> Vec<[f64; 3]> {
    let mut rng = Prng::seed_from_u64(seed);
    let shift = [rng.uniform(), rng.uniform(), rng.uniform()];
    (0..n)
        .map(|i| {
            let idx = i as u64 + 1;
            let u = [
                (radical_inverse(idx, 2) + shift[0]).fract(),
                (radical_inverse(idx, 3) + shift[1]).fract(),
                (radical_inverse(idx, 5) + shift[2]).fract(),
            ];
            bounds.lerp(u)
        })
        .collect()
}

#[derive(Debug, Clone, Copy)]
pub struct NmOptions {
    pub max_iterations: usize,
    /// Stop when the simplex value spread falls below
    /// `tol_rel * (|f_best| + 1e-30)`.
    pub tol_rel: f64,
    /// Initial simplex edge, as a fraction of each box width.
    pub init_step: f64,
}

impl Default for NmOptions {
    fn default() -> Self {
        Self {
            max_iterations: 500,
            tol_rel: 1e-10,
            init_step: 0.05,
        }
    }
}

#[derive(Debug, Clone, Copy)]
pub struct NmResult {
    pub x: [f64; 3],
    pub fx: f64,
    pub iterations: usize,
    pub evaluations: usize,
}

/// Nelder-Mead simplex minimization with candidates clamped into the box.
/// Standard coefficients (reflect 1, expand 2, contract 0.5, shrink 0.5).
pub fn nelder_mead<F>(f: &mut F, x0: [f64; 3], bounds: &Box3, opts: &NmOptions) -> NmResult
where
    F: FnMut(&[f64; 3]) -> f64,
{
    const ALPHA: f64 = 1.0;
    const GAMMA: f64 = 2.0;
    const RHO: f64 = 0.5;
    const SIGMA: f64 = 0.5;

    let mut evaluations = 0;
    let mut eval = |x: &[f64; 3], evals: &mut usize| -> f64 {
        *evals += 1;
        let v = f(x);
        if v.is_nan() {
            f64::INFINITY
        } else {
            v
        }
    };

    // Initial simplex: x0 plus one perturbed vertex per axis, stepping away
    // from the nearer bound.
    let x0 = bounds.clamp(x0);
    let mut simplex: Vec<([f64; 3], f64)> = Vec::with_capacity(4);
    let fx0 = eval(&x0, &mut evaluations);
    simplex.push((x0, fx0));
    for i in 0..3 {
        let mut v = x0;
        let step = opts.init_step * bounds.width(i);
        v[i] = if x0[i] + step <= bounds.hi[i] {
            x0[i] + step
        } else {
            x0[i] - step
        };
        let v = bounds.clamp(v);
        let fv = eval(&v, &mut evaluations);
        simplex.push((v, fv));
    }

    let mut iterations = 0;
    while iterations < opts.max_iterations {
        iterations += 1;
        simplex.sort_by(|a, b| a.1.total_cmp(&b.1));
        let f_best = simplex[0].1;
        let f_worst = simplex[3].1;
        if f_worst.is_finite() && (f_worst - f_best) <= opts.tol_rel * (f_best.abs() + 1e-30) {
            break;
        }

        let centroid: [f64; 3] =
            std::array::from_fn(|i| simplex[..3].iter().map(|v| v.0[i]).sum::<f64>() / 3.0);
        let worst = simplex[3];

        let point_at = |coef: f64| -> [f64; 3] {
            bounds.clamp(std::array::from_fn(|i| {
                centroid[i] + coef * (centroid[i] - worst.0[i])
            }))
        };

        let reflected = point_at(ALPHA);
        let f_reflected = eval(&reflected, &mut evaluations);

        if f_reflected < simplex[0].1 {
            let expanded = point_at(GAMMA);
            let f_expanded = eval(&expanded, &mut evaluations);
            simplex[3] = if f_expanded < f_reflected {
                (expanded, f_expanded)
            } else {
                (reflected, f_reflected)
            };
            continue;
        }
        if f_reflected < simplex[2].1 {
            simplex[3] = (reflected, f_reflected);
            continue;
        }

        let contracted = if f_reflected < worst.1 {
            point_at(RHO)
        } else {
            point_at(-RHO)
        };
        let f_contracted = eval(&contracted, &mut evaluations);
        if f_contracted < f_reflected.min(worst.1) {
            simplex[3] = (contracted, f_contracted);
            continue;
        }

        // Shrink toward the best vertex.
        let best = simplex[0].0;
        for vertex in simplex.iter_mut().skip(1) {
            let p = bounds.clamp(std::array::from_fn(|i| {
                best[i] + SIGMA * (vertex.0[i] - best[i])
            }));
            let fp = eval(&p, &mut evaluations);
            *vertex = (p, fp);
        }
    }

    simplex.sort_by(|a, b| a.1.total_cmp(&b.1));
    NmResult {
        x: simplex[0].0,
        fx: simplex[0].1,
        iterations,
        evaluations,
    }
}
