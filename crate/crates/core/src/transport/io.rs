//! JSON map files. Floats are written in shortest round-trip decimal form, so
//! every coefficient reloads bit-exactly.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};
use serde_json::Value;

use super::{
    AffineMap, BananaMap, ComposedMap, MonotoneComponent, RosenbrockMap, Transport, TransportMap,
    TriangularMap,
};
use crate::basis::BasisKind;
use crate::error::{Error, Result};
use crate::targets::matrix_from_rows;

pub const MAP_FORMAT_VERSION: &str = "1";

#[derive(Debug, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
enum MapRepr {
    Affine {
        dim: usize,
        matrix: Vec<Vec<f64>>,
        offset: Vec<f64>,
    },
    Banana {
        dim: usize,
        s: f64,
        b: f64,
    },
    Rosenbrock {
        dim: usize,
        n1: usize,
        n2: usize,
        mu: f64,
        a: f64,
        b: Vec<Vec<f64>>,
    },
    Triangular {
        dim: usize,
        basis: BasisKind,
        quadrature_points: usize,
        components: Vec<MonotoneComponent>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        pre_map: Option<Box<MapRepr>>,
    },
    Composed {
        dim: usize,
        outer: Box<MapRepr>,
        inner: Box<MapRepr>,
    },
}

fn to_repr(map: &TransportMap) -> MapRepr {
    let dim = map.dim();
    match map {
        TransportMap::Affine(a) => {
            let m = a.matrix();
            MapRepr::Affine {
                dim,
                matrix: (0..dim).map(|i| (0..dim).map(|j| m[(i, j)]).collect()).collect(),
                offset: a.offset().to_vec(),
            }
        }
        TransportMap::Banana(b) => MapRepr::Banana { dim, s: b.s, b: b.b },
        TransportMap::Rosenbrock(r) => MapRepr::Rosenbrock {
            dim,
            n1: r.n1,
            n2: r.n2,
            mu: r.mu,
            a: r.a,
            b: r.b.clone(),
        },
        TransportMap::Triangular(t) => triangular_repr(t, None),
        TransportMap::Composed(c) => match (&c.outer, &c.inner) {
            (TransportMap::Triangular(t), inner @ TransportMap::Affine(_)) => {
                triangular_repr(t, Some(Box::new(to_repr(inner))))
            }
            (outer, inner) => MapRepr::Composed {
                dim,
                outer: Box::new(to_repr(outer)),
                inner: Box::new(to_repr(inner)),
            },
        },
    }
}

fn triangular_repr(t: &TriangularMap, pre_map: Option<Box<MapRepr>>) -> MapRepr {
    MapRepr::Triangular {
        dim: t.dim(),
        basis: t.basis,
        quadrature_points: t.quadrature_points,
        components: t.components.clone(),
        pre_map,
    }
}

fn check_repr_dim(declared: usize, actual: usize) -> Result<()> {
    if declared != actual {
        return Err(Error::Schema(format!(
            "declared dim {declared} does not match parameters (dim {actual})"
        )));
    }
    Ok(())
}

fn from_repr(repr: MapRepr) -> Result<TransportMap> {
    let map = match repr {
        MapRepr::Affine {
            dim,
            matrix,
            offset,
        } => {
            let m = matrix_from_rows(&matrix).map_err(|e| Error::Schema(e.to_string()))?;
            let map = TransportMap::Affine(AffineMap::new(m, &offset)?);
            check_repr_dim(dim, map.dim())?;
            map
        }
        MapRepr::Banana { dim, s, b } => {
            check_repr_dim(dim, 2)?;
            TransportMap::Banana(BananaMap::new(s, b)?)
        }
        MapRepr::Rosenbrock {
            dim,
            n1,
            n2,
            mu,
            a,
            b,
        } => {
            let map = TransportMap::Rosenbrock(RosenbrockMap::new(n1, n2, mu, a, b)?);
            check_repr_dim(dim, map.dim())?;
            map
        }
        MapRepr::Triangular {
            dim,
            basis,
            quadrature_points,
            components,
            pre_map,
        } => {
            let tri = TransportMap::Triangular(TriangularMap::new(
                basis,
                quadrature_points,
                components,
            )?);
            check_repr_dim(dim, tri.dim())?;
            match pre_map {
                Some(inner) => {
                    TransportMap::Composed(Box::new(ComposedMap::new(tri, from_repr(*inner)?)?))
                }
                None => tri,
            }
        }
        MapRepr::Composed { dim, outer, inner } => {
            let map = TransportMap::Composed(Box::new(ComposedMap::new(
                from_repr(*outer)?,
                from_repr(*inner)?,
            )?));
            check_repr_dim(dim, map.dim())?;
            map
        }
    };
    Ok(map)
}

/// Serializes a map to a JSON string including the format version.
pub fn map_to_json(map: &TransportMap) -> String {
    let mut value = serde_json::to_value(to_repr(map)).expect("map representation serializes");
    if let Value::Object(obj) = &mut value {
        obj.insert("version".into(), Value::String(MAP_FORMAT_VERSION.into()));
    }
    serde_json::to_string_pretty(&value).expect("json value serializes")
}

pub fn map_from_json(text: &str) -> Result<TransportMap> {
    let mut value: Value = serde_json::from_str(text)?;
    let obj = value
        .as_object_mut()
        .ok_or_else(|| Error::Schema("map file must be a JSON object".into()))?;
    match obj.remove("version") {
        Some(Value::String(v)) if v == MAP_FORMAT_VERSION => {}
        Some(v) => {
            return Err(Error::Schema(format!(
                "unsupported map format version {v} (expected \"{MAP_FORMAT_VERSION}\")"
            )))
        }
        None => return Err(Error::Schema("missing map format version".into())),
    }
    let repr: MapRepr = serde_json::from_value(value)?;
    from_repr(repr)
}

pub fn save_map(map: &TransportMap, path: impl AsRef<Path>) -> Result<()> {
    fs::write(path, map_to_json(map))?;
    Ok(())
}

pub fn load_map(path: impl AsRef<Path>) -> Result<TransportMap> {
    map_from_json(&fs::read_to_string(path)?)
}
