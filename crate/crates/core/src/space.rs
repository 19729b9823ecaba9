//! Compact convex parameter spaces.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};
use crate::linalg::{combinations, dykstra_halfspaces, lstsq, seeded_rng, solve_square};

/// Slack used when deciding whether a point belongs to a space.
pub const MEMBERSHIP_TOL: f64 = 1e-9;

/// Bounded polytope `{x : A x ≤ b}` with a nonempty interior.
#[derive(Debug, Clone, PartialEq)]
pub struct Polytope {
    normals: DMatrix<f64>,
    offsets: DVector<f64>,
    rows: Vec<DVector<f64>>,
    vertices: Vec<DVector<f64>>,
    lower: DVector<f64>,
    upper: DVector<f64>,
}

impl Polytope {
    /// Builds the polytope and enumerates its vertices.
    ///
    /// Fails when the system is infeasible, unbounded or flat.
    pub fn new(normals: DMatrix<f64>, offsets: DVector<f64>) -> Result<Self> {
        let (m, p) = normals.shape();
        if p == 0 {
            return Err(Error::config("polytope must have positive dimension"));
        }
        if offsets.len() != m {
            return Err(Error::Dimension {
                expected: m,
                actual: offsets.len(),
                context: "polytope offsets",
            });
        }
        if normals.iter().chain(offsets.iter()).any(|v| !v.is_finite()) {
            return Err(Error::config("polytope has non-finite coefficients"));
        }
        if m < p + 1 {
            return Err(Error::config(format!(
                "a bounded polytope in dimension {p} needs at least {} halfspaces, got {m}",
                p + 1
            )));
        }
        let rows: Vec<DVector<f64>> = (0..m).map(|j| normals.row(j).transpose()).collect();
        let feasible = |x: &DVector<f64>| {
            rows.iter()
                .zip(offsets.iter())
                .all(|(a, &b)| a.dot(x) <= b + 1e-9 * (1.0 + b.abs()))
        };
        let mut vertices: Vec<DVector<f64>> = Vec::new();
        for subset in combinations(m, p) {
            let a = DMatrix::from_fn(p, p, |i, j| normals[(subset[i], j)]);
            let b = DVector::from_fn(p, |i, _| offsets[subset[i]]);
            if let Some(x) = solve_square(&a, &b) {
                if feasible(&x) && !vertices.iter().any(|v| (v - &x).norm() <= 1e-9) {
                    vertices.push(x);
                }
            }
        }
        if vertices.is_empty() {
            return Err(Error::config("polytope is infeasible or has no vertices"));
        }
        let mut lower = vertices[0].clone();
        let mut upper = vertices[0].clone();
        for v in &vertices[1..] {
            lower = lower.inf(v);
            upper = upper.sup(v);
        }
        let centroid = vertices.iter().fold(DVector::zeros(p), |acc, v| acc + v) / vertices.len() as f64;
        // Unbounded directions would leave the centroid on a face or show up as
        // recession directions; check both.
        let interior = rows
            .iter()
            .zip(offsets.iter())
            .all(|(a, &b)| a.dot(&centroid) < b - 1e-9 * (1.0 + b.abs()));
        if !interior {
            return Err(Error::config("polytope has an empty interior"));
        }
        for axis in 0..p {
            for sign in [1.0, -1.0] {
                let mut d = DVector::zeros(p);
                d[axis] = sign;
                if rows.iter().all(|a| a.dot(&d) <= 0.0) {
                    return Err(Error::config("polytope is unbounded"));
                }
            }
        }
        if !bounded_by_normals(&rows, p) {
            return Err(Error::config("polytope is unbounded"));
        }
        Ok(Polytope {
            normals,
            offsets,
            rows,
            vertices,
            lower,
            upper,
        })
    }

    pub fn normals(&self) -> &DMatrix<f64> {
        &self.normals
    }

    pub fn offsets(&self) -> &DVector<f64> {
        &self.offsets
    }

    pub fn vertices(&self) -> &[DVector<f64>] {
        &self.vertices
    }

    pub(crate) fn rows(&self) -> &[DVector<f64>] {
        &self.rows
    }

    fn project(&self, x: &DVector<f64>) -> Result<DVector<f64>> {
        if self.contains_strict(x) {
            return Ok(x.clone());
        }
        let offsets: Vec<f64> = self.offsets.iter().copied().collect();
        let run = dykstra_halfspaces(x, &self.rows, &offsets, 1e-13, 200_000);
        let mut y = run.point;
        if let Some(polished) = self.polish(x, &y) {
            y = polished;
        }
        if !self.contains(&y) {
            return Err(Error::numerical(
                "polytope projection did not reach a member point",
                Some(y.iter().copied().collect()),
            ));
        }
        Ok(y)
    }

    /// Exact projection onto the face identified by the constraints active at
    /// `approx`, accepted only if it satisfies the KKT conditions.
    fn polish(&self, x: &DVector<f64>, approx: &DVector<f64>) -> Option<DVector<f64>> {
        let p = x.len();
        let active: Vec<usize> = (0..self.rows.len())
            .filter(|&j| self.rows[j].dot(approx) >= self.offsets[j] - 1e-7 * (1.0 + self.offsets[j].abs()))
            .collect();
        if active.is_empty() {
            return None;
        }
        let a = DMatrix::from_fn(active.len(), p, |i, j| self.normals[(active[i], j)]);
        let rhs = DVector::from_fn(active.len(), |i, _| self.rows[active[i]].dot(x) - self.offsets[active[i]]);
        let gram = &a * a.transpose();
        let multipliers = lstsq(&gram, &rhs);
        if multipliers.iter().any(|&l| l < -1e-12) {
            return None;
        }
        let z = x - a.transpose() * multipliers;
        let worst = self
            .rows
            .iter()
            .zip(self.offsets.iter())
            .map(|(r, &b)| r.dot(&z) - b)
            .fold(f64::NEG_INFINITY, f64::max);
        (worst <= 1e-12 * (1.0 + x.norm())).then_some(z)
    }

    fn contains_strict(&self, x: &DVector<f64>) -> bool {
        self.rows.iter().zip(self.offsets.iter()).all(|(a, &b)| a.dot(x) <= b)
    }

    fn contains(&self, x: &DVector<f64>) -> bool {
        self.rows
            .iter()
            .zip(self.offsets.iter())
            .all(|(a, &b)| a.dot(x) <= b + MEMBERSHIP_TOL * (1.0 + b.abs()))
    }
}

/// The normals must positively span the space for the polytope to be bounded:
/// no nonzero `d` with `a_j·d ≤ 0` for every row. Checked by projecting every
/// negated normal and coordinate direction onto the recession cone.
fn bounded_by_normals(rows: &[DVector<f64>], p: usize) -> bool {
    let offsets = vec![0.0; rows.len()];
    let mut probes: Vec<DVector<f64>> = rows.iter().map(|a| -a.clone()).collect();
    for axis in 0..p {
        for sign in [1.0, -1.0] {
            let mut d = DVector::zeros(p);
            d[axis] = sign;
            probes.push(d);
        }
    }
    probes.iter().all(|d| {
        let r = dykstra_halfspaces(d, rows, &offsets, 1e-13, 50_000);
        r.point.norm() <= 1e-7 * (1.0 + d.norm())
    })
}

/// Compact convex parameter space `Θ ⊂ ℝ^p`.
#[derive(Debug, Clone, PartialEq)]
pub enum ParameterSpace {
    Box { lower: DVector<f64>, upper: DVector<f64> },
    Ball { center: DVector<f64>, radius: f64 },
    Polytope(Polytope),
}

impl ParameterSpace {
    pub fn boxed(lower: Vec<f64>, upper: Vec<f64>) -> Result<Self> {
        if lower.len() != upper.len() {
            return Err(Error::Dimension {
                expected: lower.len(),
                actual: upper.len(),
                context: "box bounds",
            });
        }
        if lower.is_empty() {
            return Err(Error::config("box must have positive dimension"));
        }
        for (i, (l, u)) in lower.iter().zip(&upper).enumerate() {
            if !l.is_finite() || !u.is_finite() {
                return Err(Error::config(format!("box bound {i} is not finite")));
            }
            if l > u {
                return Err(Error::config(format!("box lower[{i}] = {l} exceeds upper[{i}] = {u}")));
            }
        }
        Ok(ParameterSpace::Box {
            lower: DVector::from_vec(lower),
            upper: DVector::from_vec(upper),
        })
    }

    pub fn ball(center: Vec<f64>, radius: f64) -> Result<Self> {
        if center.is_empty() {
            return Err(Error::config("ball must have positive dimension"));
        }
        if !(radius > 0.0) || !radius.is_finite() {
            return Err(Error::config(format!("ball radius must be positive, got {radius}")));
        }
        if center.iter().any(|c| !c.is_finite()) {
            return Err(Error::config("ball center is not finite"));
        }
        Ok(ParameterSpace::Ball {
            center: DVector::from_vec(center),
            radius,
        })
    }

    pub fn polytope(normals: DMatrix<f64>, offsets: DVector<f64>) -> Result<Self> {
        Polytope::new(normals, offsets).map(ParameterSpace::Polytope)
    }

    pub fn dim(&self) -> usize {
        match self {
            ParameterSpace::Box { lower, .. } => lower.len(),
            ParameterSpace::Ball { center, .. } => center.len(),
            ParameterSpace::Polytope(poly) => poly.normals.ncols(),
        }
    }

    pub fn contains(&self, x: &DVector<f64>) -> bool {
        if x.len() != self.dim() || x.iter().any(|v| !v.is_finite()) {
            return false;
        }
        match self {
            ParameterSpace::Box { lower, upper } => x
                .iter()
                .zip(lower.iter().zip(upper.iter()))
                .all(|(v, (l, u))| *v >= l - MEMBERSHIP_TOL * (1.0 + l.abs()) && *v <= u + MEMBERSHIP_TOL * (1.0 + u.abs())),
            ParameterSpace::Ball { center, radius } => {
                (x - center).norm() <= radius * (1.0 + MEMBERSHIP_TOL)
            }
            ParameterSpace::Polytope(poly) => poly.contains(x),
        }
    }

    /// Euclidean projection onto the space.
    pub fn project(&self, x: &DVector<f64>) -> Result<DVector<f64>> {
        if x.len() != self.dim() {
            return Err(Error::Dimension {
                expected: self.dim(),
                actual: x.len(),
                context: "point to project",
            });
        }
        if x.iter().any(|v| !v.is_finite()) {
            return Err(Error::Precondition("cannot project a non-finite point".into()));
        }
        match self {
            ParameterSpace::Box { lower, upper } => Ok(x.sup(lower).inf(upper)),
            ParameterSpace::Ball { center, radius } => {
                let d = x - center;
                let norm = d.norm();
                if norm <= *radius {
                    Ok(x.clone())
                } else {
                    Ok(center + d * (*radius / norm))
                }
            }
            ParameterSpace::Polytope(poly) => poly.project(x),
        }
    }

    /// Distance from `x` to the boundary; nonpositive outside the space.
    pub fn interior_margin(&self, x: &DVector<f64>) -> f64 {
        match self {
            ParameterSpace::Box { lower, upper } => x
                .iter()
                .zip(lower.iter().zip(upper.iter()))
                .map(|(v, (l, u))| (v - l).min(u - v))
                .fold(f64::INFINITY, f64::min),
            ParameterSpace::Ball { center, radius } => radius - (x - center).norm(),
            ParameterSpace::Polytope(poly) => poly
                .rows
                .iter()
                .zip(poly.offsets.iter())
                .map(|(a, &b)| (b - a.dot(x)) / a.norm())
                .fold(f64::INFINITY, f64::min),
        }
    }

    /// Axis-aligned bounding box `(lower, upper)`.
    pub fn bounds(&self) -> (DVector<f64>, DVector<f64>) {
        match self {
            ParameterSpace::Box { lower, upper } => (lower.clone(), upper.clone()),
            ParameterSpace::Ball { center, radius } => (
                center.map(|c| c - radius),
                center.map(|c| c + radius),
            ),
            ParameterSpace::Polytope(poly) => (poly.lower.clone(), poly.upper.clone()),
        }
    }

    /// A point in the relative interior, used as a deterministic start.
    pub fn center(&self) -> DVector<f64> {
        match self {
            ParameterSpace::Box { lower, upper } => (lower + upper) * 0.5,
            ParameterSpace::Ball { center, .. } => center.clone(),
            ParameterSpace::Polytope(poly) => {
                poly.vertices.iter().fold(DVector::zeros(self.dim()), |acc, v| acc + v)
                    / poly.vertices.len() as f64
            }
        }
    }

    /// `count` member points drawn deterministically from `seed`.
    pub fn sample(&self, seed: u64, count: usize) -> Vec<DVector<f64>> {
        let mut rng = seeded_rng(seed, 0x5a3c);
        let p = self.dim();
        let mut out = Vec::with_capacity(count);
        match self {
            ParameterSpace::Box { lower, upper } => {
                for _ in 0..count {
                    out.push(DVector::from_fn(p, |i, _| lower[i] + (upper[i] - lower[i]) * rng.random::<f64>()));
                }
            }
            ParameterSpace::Ball { center, radius } => {
                for _ in 0..count {
                    let dir = DVector::from_fn(p, |_, _| rng.sample::<f64, _>(StandardNormal));
                    let norm = dir.norm().max(1e-300);
                    let r = radius * rng.random::<f64>().powf(1.0 / p as f64);
                    out.push(center + dir * (r / norm));
                }
            }
            ParameterSpace::Polytope(poly) => {
                let budget = 10_000 * count.max(1);
                let mut tries = 0;
                while out.len() < count && tries < budget {
                    tries += 1;
                    let x = DVector::from_fn(p, |i, _| {
                        poly.lower[i] + (poly.upper[i] - poly.lower[i]) * rng.random::<f64>()
                    });
                    if poly.contains_strict(&x) {
                        out.push(x);
                    }
                }
                // Very thin polytopes: fall back to random convex combinations of vertices.
                while out.len() < count {
                    let weights: Vec<f64> = poly.vertices.iter().map(|_| -rng.random::<f64>().max(1e-300).ln()).collect();
                    let total: f64 = weights.iter().sum();
                    let x = poly
                        .vertices
                        .iter()
                        .zip(&weights)
                        .fold(DVector::zeros(p), |acc, (v, w)| acc + v * (w / total));
                    out.push(x);
                }
            }
        }
        out
    }

    /// Member points of a regular grid over the bounding box, `points` per axis.
    pub fn grid(&self, points: usize) -> Vec<DVector<f64>> {
        let (lower, upper) = self.bounds();
        let p = self.dim();
        let points = points.max(1);
        let axis = |i: usize, j: usize| {
            if points == 1 {
                0.5 * (lower[i] + upper[i])
            } else {
                lower[i] + (upper[i] - lower[i]) * j as f64 / (points - 1) as f64
            }
        };
        let total = points.pow(p as u32);
        let mut out = Vec::with_capacity(total);
        for flat in 0..total {
            let mut rem = flat;
            let x = DVector::from_fn(p, |i, _| {
                let j = rem % points;
                rem /= points;
                axis(i, j)
            });
            if self.contains(&x) {
                out.push(x);
            }
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn v(x: &[f64]) -> DVector<f64> {
        DVector::from_row_slice(x)
    }

    fn triangle() -> ParameterSpace {
        // x ≥ 0, y ≥ 0, x + y ≤ 1
        let a = DMatrix::from_row_slice(3, 2, &[-1.0, 0.0, 0.0, -1.0, 1.0, 1.0]);
        ParameterSpace::polytope(a, v(&[0.0, 0.0, 1.0])).unwrap()
    }

    #[test]
    fn box_projection_clamps() {
        let s = ParameterSpace::boxed(vec![0.0, 0.0], vec![1.0, 1.0]).unwrap();
        assert_eq!(s.project(&v(&[2.0, -1.0])).unwrap(), v(&[1.0, 0.0]));
    }

    #[test]
    fn ball_projection_scales_radially() {
        let s = ParameterSpace::ball(vec![0.0, 0.0], 1.0).unwrap();
        let p = s.project(&v(&[3.0, 4.0])).unwrap();
        assert!((p - v(&[0.6, 0.8])).norm() < 1e-15);
    }

    #[test]
    fn member_points_are_fixed() {
        for s in [
            ParameterSpace::boxed(vec![0.0, 0.0], vec![1.0, 1.0]).unwrap(),
            ParameterSpace::ball(vec![0.0, 0.0], 1.0).unwrap(),
            triangle(),
        ] {
            let x = v(&[0.2, 0.3]);
            assert_eq!(s.project(&x).unwrap(), x);
        }
    }

    #[test]
    fn polytope_vertices_and_projection() {
        let t = triangle();
        let ParameterSpace::Polytope(poly) = &t else { unreachable!() };
        assert_eq!(poly.vertices().len(), 3);
        // projection onto the hypotenuse
        let p = t.project(&v(&[1.0, 1.0])).unwrap();
        assert!((p - v(&[0.5, 0.5])).norm() < 1e-12);
        // projection onto a vertex region
        let p = t.project(&v(&[3.0, -1.0])).unwrap();
        assert!((p - v(&[1.0, 0.0])).norm() < 1e-12);
    }

    #[test]
    fn invalid_spaces_are_rejected() {
        assert!(ParameterSpace::boxed(vec![1.0], vec![0.0]).is_err());
        assert!(ParameterSpace::ball(vec![0.0], 0.0).is_err());
        // infeasible: x ≤ -1 and x ≥ 1
        let a = DMatrix::from_row_slice(2, 1, &[1.0, -1.0]);
        assert!(ParameterSpace::polytope(a, v(&[-1.0, -1.0])).is_err());
        // unbounded: y ≤ 1, x ≤ 1, x + y ≤ 3
        let a = DMatrix::from_row_slice(3, 2, &[0.0, 1.0, 1.0, 0.0, 1.0, 1.0]);
        assert!(ParameterSpace::polytope(a, v(&[1.0, 1.0, 3.0])).is_err());
        // flat: x ≤ 0 and x ≥ 0 inside a box
        let a = DMatrix::from_row_slice(4, 2, &[1.0, 0.0, -1.0, 0.0, 0.0, 1.0, 0.0, -1.0]);
        assert!(ParameterSpace::polytope(a, v(&[0.0, 0.0, 1.0, 1.0])).is_err());
    }

    #[test]
    fn sampling_is_deterministic_and_feasible() {
        let s = ParameterSpace::boxed(vec![0.0], vec![1.0]).unwrap();
        let a = s.sample(7, 3);
        assert_eq!(a, s.sample(7, 3));
        assert!(a.iter().all(|x| (0.0..=1.0).contains(&x[0])));
        let b = ParameterSpace::ball(vec![1.0, -1.0], 0.5).unwrap();
        assert!(b.sample(3, 200).iter().all(|x| (x - v(&[1.0, -1.0])).norm() <= 0.5));
        let t = triangle();
        let pts = t.sample(11, 100);
        assert_eq!(pts.len(), 100);
        // independent halfspace check
        assert!(pts.iter().all(|x| x[0] >= 0.0 && x[1] >= 0.0 && x[0] + x[1] <= 1.0));
    }

    #[test]
    fn grid_keeps_members_only() {
        let t = triangle();
        let g = t.grid(11);
        assert_eq!(g.len(), 66);
        assert!(g.iter().all(|x| t.contains(x)));
    }

    fn spaces() -> Vec<ParameterSpace> {
        let hexagon = {
            let mut rows = Vec::new();
            for j in 0..6 {
                let ang = std::f64::consts::PI * j as f64 / 3.0 + 0.2;
                rows.extend_from_slice(&[ang.cos(), ang.sin()]);
            }
            ParameterSpace::polytope(DMatrix::from_row_slice(6, 2, &rows), DVector::from_element(6, 1.0)).unwrap()
        };
        vec![
            ParameterSpace::boxed(vec![-1.0, 0.0], vec![1.0, 2.0]).unwrap(),
            ParameterSpace::ball(vec![0.5, -0.5], 1.5).unwrap(),
            triangle(),
            hexagon,
        ]
    }

    proptest! {
        #[test]
        fn projection_is_idempotent_and_nonexpansive(
            x in prop::collection::vec(-5.0f64..5.0, 2),
            y in prop::collection::vec(-5.0f64..5.0, 2),
        ) {
            let x = DVector::from_vec(x);
            let y = DVector::from_vec(y);
            for s in spaces() {
                let px = s.project(&x).unwrap();
                let py = s.project(&y).unwrap();
                prop_assert!(s.contains(&px));
                let ppx = s.project(&px).unwrap();
                prop_assert!((&ppx - &px).norm() <= 1e-10);
                prop_assert!((&px - &py).norm() <= (&x - &y).norm() + 1e-10);
            }
        }

        #[test]
        fn spaces_are_midpoint_convex(seed in 0u64..1000) {
            for s in spaces() {
                let pts = s.sample(seed, 2);
                prop_assert!(s.contains(&((&pts[0] + &pts[1]) * 0.5)));
            }
        }

        #[test]
        fn polytope_projection_is_the_closest_member(x in prop::collection::vec(-3.0f64..3.0, 2)) {
            let x = DVector::from_vec(x);
            let t = triangle();
            let px = t.project(&x).unwrap();
            let best = t.grid(201).into_iter().map(|g| (g - &x).norm()).fold(f64::INFINITY, f64::min);
            prop_assert!((&px - &x).norm() <= best + 1e-8);
        }
    }
}
