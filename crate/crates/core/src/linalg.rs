//! Small dense linear-algebra helpers shared across modules.

use nalgebra::{DMatrix, DVector};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Deterministic generator for the `stream`-th independent task under `seed`.
///
/// Streams let replications and bootstrap draws be generated in any order
/// (or concurrently) without changing their values.
pub fn seeded_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// All `k`-element subsets of `0..n` in lexicographic order.
pub fn combinations(n: usize, k: usize) -> Combinations {
    Combinations {
        n,
        idx: if k <= n { Some((0..k).collect()) } else { None },
    }
}

pub struct Combinations {
    n: usize,
    idx: Option<Vec<usize>>,
}

impl Iterator for Combinations {
    type Item = Vec<usize>;

    fn next(&mut self) -> Option<Vec<usize>> {
        let current = self.idx.clone()?;
        let k = current.len();
        let mut next = current.clone();
        let mut i = k;
        loop {
            if i == 0 {
                self.idx = None;
                break;
            }
            i -= 1;
            if next[i] < self.n - k + i {
                next[i] += 1;
                for j in i + 1..k {
                    next[j] = next[j - 1] + 1;
                }
                self.idx = Some(next);
                break;
            }
        }
        Some(current)
    }
}

/// Solves a square system, returning `None` when it is numerically singular.
pub fn solve_square(a: &DMatrix<f64>, b: &DVector<f64>) -> Option<DVector<f64>> {
    let n = a.nrows();
    if n == 0 {
        return Some(DVector::zeros(0));
    }
    let scale = a.abs().max().max(1e-300);
    let svd = a.clone().svd(true, true);
    let smin = svd.singular_values.min();
    if smin <= 1e-12 * scale {
        return None;
    }
    svd.solve(b, 0.0).ok()
}

/// Pseudo-inverse solve `argmin ‖a x − b‖` with minimum norm.
pub fn lstsq(a: &DMatrix<f64>, b: &DVector<f64>) -> DVector<f64> {
    if a.nrows() == 0 || a.ncols() == 0 {
        return DVector::zeros(a.ncols());
    }
    let scale = a.abs().max();
    let svd = a.clone().svd(true, true);
    svd.solve(b, 1e-12 * scale.max(1e-300))
        .unwrap_or_else(|_| DVector::zeros(a.ncols()))
}

/// Outcome of [`dykstra_halfspaces`].
#[derive(Debug, Clone)]
pub struct DykstraResult {
    pub point: DVector<f64>,
    pub converged: bool,
    pub sweeps: usize,
}

/// Projects `x` onto `{y : normals[j]·y ≤ offsets[j] for all j}` with
/// Dykstra's alternating projection scheme, which converges to the
/// Euclidean projection (not merely a feasible point).
pub fn dykstra_halfspaces(
    x: &DVector<f64>,
    normals: &[DVector<f64>],
    offsets: &[f64],
    tol: f64,
    max_sweeps: usize,
) -> DykstraResult {
    debug_assert_eq!(normals.len(), offsets.len());
    let dim = x.len();
    let mut y = x.clone();
    if normals.iter().zip(offsets).all(|(a, &b)| a.dot(x) <= b) {
        return DykstraResult {
            point: y,
            converged: true,
            sweeps: 0,
        };
    }
    let norms2: Vec<f64> = normals.iter().map(|a| a.norm_squared()).collect();
    let mut increments = vec![DVector::<f64>::zeros(dim); normals.len()];
    let scale = 1.0 + x.norm();
    for sweep in 1..=max_sweeps {
        let mut moved = 0.0;
        for j in 0..normals.len() {
            if norms2[j] == 0.0 {
                continue;
            }
            let z = &y + &increments[j];
            let excess = normals[j].dot(&z) - offsets[j];
            let projected = if excess > 0.0 {
                &z - &normals[j] * (excess / norms2[j])
            } else {
                z.clone()
            };
            increments[j] = &z - &projected;
            moved += (&projected - &y).norm_squared();
            y = projected;
        }
        let worst = normals
            .iter()
            .zip(offsets)
            .map(|(a, &b)| a.dot(&y) - b)
            .fold(f64::NEG_INFINITY, f64::max);
        if moved.sqrt() <= tol * scale && worst <= tol * scale {
            return DykstraResult {
                point: y,
                converged: true,
                sweeps: sweep,
            };
        }
    }
    DykstraResult {
        point: y,
        converged: false,
        sweeps: max_sweeps,
    }
}

/// Lexicographic comparison used for deterministic tie-breaking.
pub fn lex_cmp(a: &DVector<f64>, b: &DVector<f64>) -> std::cmp::Ordering {
    for (x, y) in a.iter().zip(b.iter()) {
        match x.partial_cmp(y) {
            Some(std::cmp::Ordering::Equal) | None => continue,
            Some(ord) => return ord,
        }
    }
    a.len().cmp(&b.len())
}
