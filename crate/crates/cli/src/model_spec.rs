//! Model description files for linear and bilinear moment models.
//!
//! ```text
//! kind = linear            # g = A θ − b + (first k data columns)
//! slope = 1; 1; 0          # A, rows separated by ';'
//! offset = 0, 0, 0         # b
//! family = unit_ball       # unit_ball | weighted | cone_polar | finite | exponential
//! lower = -2
//! upper = 2
//! ```
//!
//! A bilinear model reads a perturbation of `A` (row-major, `k·p` columns)
//! followed by `k` additive columns from each data row:
//! `g = (A + E) θ − b + e`.

use std::sync::Arc;

use minimax_infer::family::TestFunctionFamily;
use minimax_infer::geometry::FinitelyGeneratedCone;
use minimax_infer::moment::{AffineMomentModel, FnMomentModel, MomentModel, Remainder};
use minimax_infer::space::ParameterSpace;
use minimax_infer::{DMatrix, DVector};

use crate::error::{CliError, Result};
use crate::keyvalue::{list, matrix, number, parse_entries, syntax, vector, Entry};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ModelKind {
    Linear,
    Bilinear,
}

#[derive(Debug, Clone, PartialEq)]
pub enum FamilySpec {
    UnitBall,
    Weighted(DMatrix<f64>),
    ConePolar(Vec<DVector<f64>>),
    Finite(Vec<DVector<f64>>),
    Exponential {
        half_width: f64,
        instruments: Vec<String>,
        grid: Option<usize>,
    },
}

#[derive(Debug, Clone, PartialEq)]
pub enum SpaceSpec {
    Box { lower: Vec<f64>, upper: Vec<f64> },
    Ball { center: Vec<f64>, radius: f64 },
}

#[derive(Debug, Clone, PartialEq)]
pub struct ModelSpec {
    pub kind: ModelKind,
    pub slope: DMatrix<f64>,
    pub offset: DVector<f64>,
    pub family: FamilySpec,
    pub space: Option<SpaceSpec>,
}

const KEYS: &[&str] = &[
    "kind",
    "slope",
    "offset",
    "family",
    "weight",
    "generators",
    "vectors",
    "half_width",
    "instruments",
    "grid",
    "lower",
    "upper",
    "center",
    "radius",
];

fn rows(m: &DMatrix<f64>) -> Vec<DVector<f64>> {
    m.row_iter().map(|r| r.transpose()).collect()
}

impl ModelSpec {
    pub fn parse(text: &str, origin: &str) -> Result<Self> {
        let entries = parse_entries(text, origin)?;
        if let Some(e) = entries.iter().find(|e| !KEYS.contains(&e.key.as_str())) {
            return Err(CliError::UnknownKey {
                origin: origin.to_string(),
                key: e.key.clone(),
                line: e.line,
            });
        }
        let get = |key: &str| entries.iter().find(|e| e.key == key);
        let need = |key: &str| -> Result<&Entry> {
            get(key).ok_or_else(|| syntax(origin, entries.last().map_or(1, |e| e.line), format!("missing key '{key}'")))
        };
        let mat = |e: &Entry| matrix(&e.value).map_err(|m| e.fail(origin, m));

        let kind_entry = need("kind")?;
        let kind = match kind_entry.value.as_str() {
            "linear" => ModelKind::Linear,
            "bilinear" => ModelKind::Bilinear,
            other => return Err(kind_entry.fail(origin, format!("expected linear or bilinear, found '{other}'"))),
        };
        let slope_entry = need("slope")?;
        let slope = mat(slope_entry)?;
        let offset_entry = need("offset")?;
        let offset = vector(&offset_entry.value).map_err(|m| offset_entry.fail(origin, m))?;
        let k = slope.nrows();
        if offset.len() != k {
            return Err(offset_entry.fail(origin, format!("has {} entries, slope has {k} rows", offset.len())));
        }

        let family_entry = need("family")?;
        let family = match family_entry.value.as_str() {
            "unit_ball" => FamilySpec::UnitBall,
            "weighted" => {
                let e = need("weight")?;
                let w = mat(e)?;
                if w.shape() != (k, k) {
                    return Err(e.fail(origin, format!("must be {k} × {k}")));
                }
                FamilySpec::Weighted(w)
            }
            "cone_polar" | "finite" => {
                let key = if family_entry.value == "cone_polar" { "generators" } else { "vectors" };
                let e = need(key)?;
                let m = mat(e)?;
                if m.ncols() != k {
                    return Err(e.fail(origin, format!("rows must have {k} entries")));
                }
                if key == "generators" {
                    FamilySpec::ConePolar(rows(&m))
                } else {
                    FamilySpec::Finite(rows(&m))
                }
            }
            "exponential" => {
                let hw = need("half_width")?;
                let half_width = number(&hw.value).map_err(|m| hw.fail(origin, m))?;
                let inst = need("instruments")?;
                let instruments: Vec<String> = inst.value.split(',').map(|s| s.trim().to_string()).collect();
                if instruments.iter().any(|s| s.is_empty()) {
                    return Err(inst.fail(origin, "empty column name"));
                }
                let grid = match get("grid") {
                    Some(e) => Some(
                        e.value
                            .parse::<usize>()
                            .ok()
                            .filter(|&g| g >= 2)
                            .ok_or_else(|| e.fail(origin, "expected an integer ≥ 2"))?,
                    ),
                    None => None,
                };
                FamilySpec::Exponential {
                    half_width,
                    instruments,
                    grid,
                }
            }
            other => return Err(family_entry.fail(origin, format!("unknown family '{other}'"))),
        };

        let nums = |e: &Entry| list(&e.value).map_err(|m| e.fail(origin, m));
        let space = match (get("lower"), get("upper"), get("center"), get("radius")) {
            (None, None, None, None) => None,
            (Some(l), Some(u), None, None) => Some(SpaceSpec::Box {
                lower: nums(l)?,
                upper: nums(u)?,
            }),
            (None, None, Some(c), Some(r)) => Some(SpaceSpec::Ball {
                center: nums(c)?,
                radius: number(&r.value).map_err(|m| r.fail(origin, m))?,
            }),
            _ => {
                let line = ["lower", "upper", "center", "radius"]
                    .iter()
                    .filter_map(|k| get(k))
                    .map(|e| e.line)
                    .max()
                    .unwrap_or(1);
                return Err(syntax(origin, line, "give either lower and upper, or center and radius"));
            }
        };
        Ok(ModelSpec {
            kind,
            slope,
            offset,
            family,
            space,
        })
    }

    pub fn moment_dim(&self) -> usize {
        self.slope.nrows()
    }

    pub fn param_dim(&self) -> usize {
        self.slope.ncols()
    }

    /// Data columns the model reads from each row.
    pub fn data_columns(&self) -> usize {
        let (k, p) = self.slope.shape();
        match self.kind {
            ModelKind::Linear => k,
            ModelKind::Bilinear => k * p + k,
        }
    }

    pub fn model(&self) -> Result<Arc<dyn MomentModel>> {
        let (k, p) = self.slope.shape();
        match self.kind {
            ModelKind::Linear => {
                let m = AffineMomentModel::new(self.slope.clone(), self.offset.clone(), DMatrix::identity(k, k))
                    .map_err(|e| CliError::core("model", e))?;
                Ok(Arc::new(m))
            }
            ModelKind::Bilinear => {
                let (a, b) = (self.slope.clone(), self.offset.clone());
                let a2 = a.clone();
                let m = FnMomentModel::new(k, p, move |row, theta| {
                    let perturbed = &a + DMatrix::from_row_slice(k, p, &row[..k * p]);
                    perturbed * theta - &b + DVector::from_row_slice(&row[k * p..k * p + k])
                })
                .with_jacobian(move |row, _| &a2 + DMatrix::from_row_slice(k, p, &row[..k * p]))
                .with_remainder(Remainder::Zero)
                .with_columns(k * p + k);
                Ok(Arc::new(m))
            }
        }
    }

    pub fn family(&self, columns: &[String], default_grid: usize) -> Result<TestFunctionFamily> {
        let k = self.moment_dim();
        let wrap = |e| CliError::core("test-function family", e);
        match &self.family {
            FamilySpec::UnitBall => Ok(TestFunctionFamily::unit_ball(k)),
            FamilySpec::Weighted(w) => TestFunctionFamily::weighted_ball(w.clone()).map_err(wrap),
            FamilySpec::ConePolar(g) => Ok(TestFunctionFamily::cone_polar_ball(
                FinitelyGeneratedCone::new(k, g.clone()).map_err(wrap)?,
            )),
            FamilySpec::Finite(v) => TestFunctionFamily::finite(v.clone()).map_err(wrap),
            FamilySpec::Exponential {
                half_width,
                instruments,
                grid,
            } => {
                let idx = instruments
                    .iter()
                    .map(|name| {
                        columns
                            .iter()
                            .position(|c| c == name)
                            .ok_or_else(|| CliError::Invalid(format!("instrument column '{name}' not in data")))
                    })
                    .collect::<Result<Vec<_>>>()?;
                TestFunctionFamily::exponential(*half_width, idx, grid.unwrap_or(default_grid)).map_err(wrap)
            }
        }
    }

    pub fn space(&self) -> Option<Result<ParameterSpace>> {
        let wrap = |e| CliError::core("parameter space", e);
        self.space.as_ref().map(|s| match s {
            SpaceSpec::Box { lower, upper } => ParameterSpace::boxed(lower.clone(), upper.clone()).map_err(wrap),
            SpaceSpec::Ball { center, radius } => ParameterSpace::ball(center.clone(), *radius).map_err(wrap),
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const SPEC: &str = "kind = linear\nslope = 1; 1; 0\noffset = 0, 0, 0\nfamily = unit_ball\nlower = -2\nupper = 2\n";

    #[test]
    fn parses_linear_spec() {
        let s = ModelSpec::parse(SPEC, "m").unwrap();
        assert_eq!(s.kind, ModelKind::Linear);
        assert_eq!((s.moment_dim(), s.param_dim(), s.data_columns()), (3, 1, 3));
        let model = s.model().unwrap();
        let g = model.moment(&[0.5, -0.5, 0.0], &DVector::from_element(1, 1.0));
        assert_eq!(g.as_slice(), &[1.5, 0.5, 0.0]);
    }

    #[test]
    fn bilinear_moment_and_jacobian() {
        let text = "kind = bilinear\nslope = 2\noffset = 1\nfamily = unit_ball\n";
        let s = ModelSpec::parse(text, "m").unwrap();
        assert_eq!(s.data_columns(), 2);
        let model = s.model().unwrap();
        let theta = DVector::from_element(1, 3.0);
        assert_eq!(model.moment(&[0.5, 0.25], &theta)[0], 2.5 * 3.0 - 1.0 + 0.25);
        assert_eq!(model.moment_jacobian(&[0.5, 0.25], &theta).unwrap()[(0, 0)], 2.5);
    }

    #[test]
    fn errors_name_line_and_key() {
        let err = ModelSpec::parse("kind = linear\nslope = 1, x\n", "m").unwrap_err();
        assert!(err.to_string().contains("line 2"), "{err}");
        let err = ModelSpec::parse("kind = linear\ncolour = red\n", "m").unwrap_err();
        assert!(err.to_string().contains("colour"), "{err}");
        let err = ModelSpec::parse("kind = linear\nslope = 1; 1\noffset = 0\nfamily = unit_ball\n", "m").unwrap_err();
        assert!(err.to_string().contains("offset"), "{err}");
        assert!(ModelSpec::parse("kind = linear\nslope = 1, 2; 3\noffset = 0, 0\nfamily = unit_ball", "m").is_err());
    }

    #[test]
    fn families_resolve() {
        let text = "kind = linear\nslope = 1; -1\noffset = 0, 0\nfamily = cone_polar\ngenerators = -1, 0; 0, -1\n";
        let s = ModelSpec::parse(text, "m").unwrap();
        assert!(matches!(s.family(&[], 8).unwrap(), TestFunctionFamily::ConePolarBall(_)));
        let text = "kind = linear\nslope = 1\noffset = 0\nfamily = exponential\nhalf_width = 2\ninstruments = z\n";
        let s = ModelSpec::parse(text, "m").unwrap();
        assert!(s.family(&["y".into(), "z".into()], 8).is_ok());
        assert!(s.family(&["y".into()], 8).is_err());
    }
}
