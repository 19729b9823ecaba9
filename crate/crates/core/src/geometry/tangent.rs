use nalgebra::DVector;

use super::cone::FinitelyGeneratedCone;
use crate::error::{Error, Result};
use crate::space::ParameterSpace;

/// Tangent cone (halfspace form) and normal cone (generator form) of a
/// convex set at a point.
#[derive(Debug, Clone)]
pub struct TangentNormal {
    /// Rows `a_j` of the active constraints; the tangent cone is
    /// `{h : a_j·h ≤ 0}` over these rows, all of `ℝ^p` when empty.
    pub tangent_rows: Vec<DVector<f64>>,
    /// Nonnegative span of the active normals.
    pub normal: FinitelyGeneratedCone,
}

impl TangentNormal {
    pub fn tangent_contains(&self, h: &DVector<f64>, tol: f64) -> bool {
        self.tangent_rows.iter().all(|a| a.dot(h) <= tol * (1.0 + h.norm()))
    }

    /// Distance to the tangent cone. The tangent and normal cones are mutual
    /// polars, so `x = Π_T x + Π_N x` and the distance is `‖Π_N x‖`.
    pub fn distance_to_tangent(&self, x: &DVector<f64>) -> Result<f64> {
        Ok(self.normal.project(x)?.norm())
    }
}

/// Active constraints at `point` (`a·x ≥ b − 1e-8`) define both cones.
pub fn tangent_normal_cones(space: &ParameterSpace, point: &DVector<f64>) -> Result<TangentNormal> {
    let p = space.dim();
    if point.len() != p {
        return Err(Error::Dimension {
            expected: p,
            actual: point.len(),
            context: "tangent cone base point",
        });
    }
    let constraints: Vec<(DVector<f64>, f64)> = match space {
        ParameterSpace::Box { lower, upper } => (0..p)
            .flat_map(|i| {
                let mut e = DVector::zeros(p);
                e[i] = 1.0;
                [(e.clone(), upper[i]), (-e, -lower[i])]
            })
            .collect(),
        ParameterSpace::Ball { center, radius } => {
            let d = point - center;
            let norm = d.norm();
            if norm > radius * (1.0 + 1e-10) {
                return Err(Error::Precondition("tangent cone base point is outside the ball".into()));
            }
            let rows = if norm >= radius - 1e-8 && norm > 0.0 {
                vec![d / norm]
            } else {
                vec![]
            };
            return TangentNormal::from_rows(p, rows);
        }
        ParameterSpace::Polytope(poly) => poly
            .rows()
            .iter()
            .cloned()
            .zip(poly.offsets().iter().copied())
            .collect(),
    };
    let mut rows = Vec::new();
    for (a, b) in constraints {
        let slack = b - a.dot(point);
        if slack < -1e-10 * (1.0 + b.abs()) {
            return Err(Error::Precondition(format!(
                "tangent cone base point violates a constraint by {}",
                -slack
            )));
        }
        if slack <= 1e-8 {
            rows.push(a);
        }
    }
    TangentNormal::from_rows(p, rows)
}

impl TangentNormal {
    fn from_rows(p: usize, rows: Vec<DVector<f64>>) -> Result<Self> {
        let normal = FinitelyGeneratedCone::new(p, rows.clone())?;
        Ok(TangentNormal {
            tangent_rows: rows,
            normal,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn v(x: &[f64]) -> DVector<f64> {
        DVector::from_row_slice(x)
    }

    fn unit_square() -> ParameterSpace {
        ParameterSpace::boxed(vec![0.0, 0.0], vec![1.0, 1.0]).unwrap()
    }

    #[test]
    fn vertex_of_square() {
        let tn = tangent_normal_cones(&unit_square(), &v(&[0.0, 0.0])).unwrap();
        assert!(tn.tangent_contains(&v(&[1.0, 2.0]), 0.0));
        assert!(!tn.tangent_contains(&v(&[-1.0, 2.0]), 0.0));
        assert!(tn.normal.contains(&v(&[-1.0, -3.0]), 1e-12));
        assert!(!tn.normal.contains(&v(&[1.0, -3.0]), 1e-6));
    }

    #[test]
    fn interior_point_has_full_tangent_cone() {
        let tn = tangent_normal_cones(&unit_square(), &v(&[0.3, 0.6])).unwrap();
        assert!(tn.tangent_rows.is_empty());
        assert!(tn.normal.generators().is_empty());
        assert_eq!(tn.distance_to_tangent(&v(&[5.0, -7.0])).unwrap(), 0.0);
    }

    #[test]
    fn single_active_face() {
        let tn = tangent_normal_cones(&unit_square(), &v(&[0.0, 0.5])).unwrap();
        assert_eq!(tn.tangent_rows.len(), 1);
        assert!(tn.tangent_contains(&v(&[0.5, -9.0]), 0.0));
        assert!(!tn.tangent_contains(&v(&[-0.5, 0.0]), 0.0));
        assert_eq!(tn.normal.generators()[0], v(&[-1.0, 0.0]));
        assert!((tn.distance_to_tangent(&v(&[-2.0, 1.0])).unwrap() - 2.0).abs() < 1e-12);
    }

    #[test]
    fn ball_boundary_point() {
        let ball = ParameterSpace::ball(vec![0.0, 0.0], 1.0).unwrap();
        let tn = tangent_normal_cones(&ball, &v(&[0.0, 1.0])).unwrap();
        assert!(tn.tangent_contains(&v(&[1.0, 0.0]), 0.0));
        assert!(!tn.tangent_contains(&v(&[0.0, 1.0]), 0.0));
    }

    #[test]
    fn outside_point_is_rejected() {
        assert!(tangent_normal_cones(&unit_square(), &v(&[1.5, 0.5])).is_err());
    }
}
