//! Derivative-free simplex (Nelder–Mead) minimizer used by the
//! mid-quantile fit, plus a jittered multi-start wrapper.

use rand::Rng;
use rand_distr::{Distribution, Normal};

/// Result of one simplex minimization.
#[derive(Debug, Clone)]
pub struct OptimResult {
    pub x: Vec<f64>,
    pub fval: f64,
    pub iterations: usize,
    pub converged: bool,
}

/// Options for [`nelder_mead`].
#[derive(Debug, Clone, Copy)]
pub struct NmOptions {
    pub max_iter: usize,
    /// Absolute tolerance on the simplex objective spread.
    pub ftol: f64,
    /// Absolute tolerance on the simplex vertex spread.
    pub xtol: f64,
    /// Initial per-coordinate step for the starting simplex.
    pub step: f64,
}

impl Default for NmOptions {
    fn default() -> Self {
        Self { max_iter: 4000, ftol: 1e-10, xtol: 1e-9, step: 0.25 }
    }
}

/// Standard Nelder–Mead with reflection/expansion/contraction/shrink
/// coefficients (1, 2, 0.5, 0.5).
pub fn nelder_mead<F: FnMut(&[f64]) -> f64>(mut f: F, x0: &[f64], opts: NmOptions) -> OptimResult {
    let dim = x0.len();
    let mut simplex: Vec<Vec<f64>> = Vec::with_capacity(dim + 1);
    simplex.push(x0.to_vec());
    for i in 0..dim {
        let mut v = x0.to_vec();
        v[i] += if v[i].abs() > 1.0 { v[i].abs() * opts.step } else { opts.step };
        simplex.push(v);
    }
    let mut fvals: Vec<f64> = simplex.iter().map(|v| f(v)).collect();
    let mut iterations = 0;
    let mut converged = false;

    while iterations < opts.max_iter {
        iterations += 1;
        let mut order: Vec<usize> = (0..=dim).collect();
        order.sort_by(|&a, &b| fvals[a].partial_cmp(&fvals[b]).unwrap_or(std::cmp::Ordering::Equal));
        let best = order[0];
        let worst = order[dim];
        let second_worst = order[dim - 1];

        let fspread = (fvals[worst] - fvals[best]).abs();
        let xspread = simplex
            .iter()
            .map(|v| {
                v.iter().zip(&simplex[best]).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max)
            })
            .fold(0.0, f64::max);
        if fspread < opts.ftol && xspread < opts.xtol {
            converged = true;
            break;
        }

        let mut centroid = vec![0.0; dim];
        for &i in order.iter().take(dim) {
            for d in 0..dim {
                centroid[d] += simplex[i][d];
            }
        }
        for c in &mut centroid {
            *c /= dim as f64;
        }

        let reflect: Vec<f64> =
            centroid.iter().zip(&simplex[worst]).map(|(c, w)| 2.0 * c - w).collect();
        let fr = f(&reflect);

        if fr < fvals[best] {
            let expand: Vec<f64> =
                centroid.iter().zip(&reflect).map(|(c, r)| c + 2.0 * (r - c)).collect();
            let fe = f(&expand);
            if fe < fr {
                simplex[worst] = expand;
                fvals[worst] = fe;
            } else {
                simplex[worst] = reflect;
                fvals[worst] = fr;
            }
            continue;
        }
        if fr < fvals[second_worst] {
            simplex[worst] = reflect;
            fvals[worst] = fr;
            continue;
        }
        let contract: Vec<f64> =
            centroid.iter().zip(&simplex[worst]).map(|(c, w)| c + 0.5 * (w - c)).collect();
        let fc = f(&contract);
        if fc < fvals[worst] {
            simplex[worst] = contract;
            fvals[worst] = fc;
            continue;
        }
        let best_point = simplex[best].clone();
        for &i in order.iter().skip(1) {
            for d in 0..dim {
                simplex[i][d] = best_point[d] + 0.5 * (simplex[i][d] - best_point[d]);
            }
            fvals[i] = f(&simplex[i]);
        }
    }

    let (bi, _) = fvals
        .iter()
        .enumerate()
        .min_by(|(_, a), (_, b)| a.partial_cmp(b).unwrap_or(std::cmp::Ordering::Equal))
        .unwrap();
    OptimResult { x: simplex[bi].clone(), fval: fvals[bi], iterations, converged }
}

/// Run [`nelder_mead`] from `x0` and from `restarts − 1` Gaussian-jittered
/// copies of it, keeping the best optimum. Deterministic given the RNG.
pub fn nelder_mead_multistart<F, R>(
    mut f: F,
    x0: &[f64],
    opts: NmOptions,
    restarts: usize,
    jitter_sd: f64,
    rng: &mut R,
) -> OptimResult
where
    F: FnMut(&[f64]) -> f64,
    R: Rng,
{
    let normal = Normal::new(0.0, jitter_sd).expect("valid jitter sd");
    let mut best: Option<OptimResult> = None;
    for r in 0..restarts.max(1) {
        let start: Vec<f64> = if r == 0 {
            x0.to_vec()
        } else {
            x0.iter().map(|&v| v + normal.sample(rng)).collect()
        };
        let res = nelder_mead(&mut f, &start, opts);
        if best.as_ref().map_or(true, |b| res.fval < b.fval) {
            best = Some(res);
        }
    }
    best.unwrap()
}
