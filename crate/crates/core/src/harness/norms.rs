//! Discrete error norms and observed orders.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{interp_bilinear_unchecked, interp_linear_unchecked};
use crate::scheme::SpaceGrid;

/// Weighted `L¹`, `L²` and maximum norms of an error vector.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct ErrorTriple {
    pub l1: f64,
    pub l2: f64,
    pub linf: f64,
}

impl ErrorTriple {
    pub fn get(&self, norm: Norm) -> f64 {
        match norm {
            Norm::L1 => self.l1,
            Norm::L2 => self.l2,
            Norm::Linf => self.linf,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Norm {
    L1,
    L2,
    Linf,
}

impl Norm {
    pub const ALL: [Norm; 3] = [Norm::L1, Norm::L2, Norm::Linf];
}

/// Norms of `u - reference` with trapezoid weights in 1D and `Δx²` cell
/// weights in 2D. Nodes with `lo ≤ x ≤ hi` are dropped when `exclude` is set.
pub fn error_norms(
    u: &[f64],
    reference: &[f64],
    space: &SpaceGrid,
    exclude: Option<(f64, f64)>,
) -> Result<ErrorTriple> {
    if u.len() != reference.len() || u.len() != space.len() {
        return Err(Error::LengthMismatch {
            expected: space.len(),
            got: if u.len() != space.len() { u.len() } else { reference.len() },
        });
    }
    let weights = space.weights();
    let mut out = ErrorTriple::default();
    let mut kept = 0;
    let mut sq = 0.0;
    for k in 0..u.len() {
        if let Some((lo, hi)) = exclude {
            let x = space.point(k)[0];
            if lo <= x && x <= hi {
                continue;
            }
        }
        kept += 1;
        let e = (u[k] - reference[k]).abs();
        if !e.is_finite() {
            return Err(Error::NonFinite("error vector"));
        }
        out.l1 += weights[k] * e;
        sq += weights[k] * e * e;
        out.linf = out.linf.max(e);
    }
    if kept == 0 {
        return Err(Error::EmptySelection);
    }
    out.l2 = sq.sqrt();
    Ok(out)
}

/// `log(e_coarse / e_fine) / log(ratio)`; `None` when either error is not positive.
pub fn observed_order(e_coarse: f64, e_fine: f64, ratio: f64) -> Option<f64> {
    if e_coarse > 0.0 && e_fine > 0.0 && ratio > 1.0 && e_coarse.is_finite() && e_fine.is_finite() {
        Some((e_coarse / e_fine).ln() / ratio.ln())
    } else {
        None
    }
}

/// Samples a fine-grid field at the nodes of a coarse grid: exact node
/// picking where the grids are nested, interpolation otherwise.
pub fn restrict(fine: &SpaceGrid, values: &[f64], coarse: &SpaceGrid) -> Result<Vec<f64>> {
    if values.len() != fine.len() {
        return Err(Error::LengthMismatch {
            expected: fine.len(),
            got: values.len(),
        });
    }
    match (fine, coarse) {
        (SpaceGrid::Line(f), SpaceGrid::Line(c)) => Ok(c
            .nodes()
            .iter()
            .map(|&x| {
                let k = f.nearest(x);
                if (f.x(k) - x).abs() <= 1e-9 * (1.0 + x.abs()) {
                    values[k]
                } else {
                    interp_linear_unchecked(f, values, x)
                }
            })
            .collect()),
        (SpaceGrid::Torus(f), SpaceGrid::Torus(c)) => {
            let nested = f.points() % c.points() == 0;
            let stride = f.points() / c.points().max(1);
            Ok((0..c.len())
                .map(|k| {
                    let (i, j) = c.split(k);
                    if nested {
                        values[f.index(i * stride, j * stride)]
                    } else {
                        interp_bilinear_unchecked(f, values, c.point(i, j))
                    }
                })
                .collect())
        }
        _ => Err(Error::InvalidGrid("cannot restrict between grids of different dimension".into())),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::{Grid1d, PeriodicGrid2d};

    #[test]
    fn hand_evaluated_norms() {
        let g = SpaceGrid::Line(Grid1d::from_nodes(vec![0.0, 0.5, 1.0]).unwrap());
        let zero = error_norms(&[1.0, 2.0, 3.0], &[1.0, 2.0, 3.0], &g, None).unwrap();
        assert_eq!(zero, ErrorTriple::default());
        let e = error_norms(&[1.0, 1.0, 1.0], &[0.0; 3], &g, None).unwrap();
        assert_eq!(e, ErrorTriple { l1: 1.0, l2: 1.0, linf: 1.0 });
        assert!(matches!(
            error_norms(&[1.0; 3], &[0.0; 3], &g, Some((-1.0, 2.0))),
            Err(Error::EmptySelection)
        ));
        assert!(error_norms(&[1.0; 2], &[0.0; 3], &g, None).is_err());
    }

    #[test]
    fn orders() {
        assert!((observed_order(4e-2, 1e-2, 2.0).unwrap() - 2.0).abs() < 1e-12);
        assert!((observed_order(2.97e-1, 7.64e-2, 2.0).unwrap() - 1.96).abs() < 5e-3);
        assert_eq!(observed_order(0.3, 0.3, 2.0), Some(0.0));
        assert_eq!(observed_order(0.0, 0.3, 2.0), None);
    }

    #[test]
    fn nested_restriction_is_exact() {
        let fine = Grid1d::uniform(0.0, 1.0, 40).unwrap();
        let coarse = Grid1d::uniform(0.0, 1.0, 10).unwrap();
        let v: Vec<f64> = fine.nodes().iter().map(|x| x.exp()).collect();
        let r = restrict(&SpaceGrid::Line(fine.clone()), &v, &SpaceGrid::Line(coarse.clone())).unwrap();
        for (k, x) in coarse.nodes().iter().enumerate() {
            assert_eq!(r[k], v[4 * k]);
            assert!((r[k] - x.exp()).abs() < 1e-12);
        }
        let f2 = PeriodicGrid2d::new(16).unwrap();
        let c2 = PeriodicGrid2d::new(4).unwrap();
        let v2: Vec<f64> = (0..f2.len()).map(|k| k as f64).collect();
        let r2 = restrict(&SpaceGrid::Torus(f2.clone()), &v2, &SpaceGrid::Torus(c2.clone())).unwrap();
        assert_eq!(r2[c2.index(1, 2)], v2[f2.index(4, 8)]);
    }

    #[test]
    fn exclusion_never_increases_norms() {
        let g = Grid1d::uniform(0.0, 5.0, 50).unwrap();
        let e: Vec<f64> = g.nodes().iter().map(|x| (3.0 * x).sin()).collect();
        let s = SpaceGrid::Line(g);
        let full = error_norms(&e, &vec![0.0; e.len()], &s, None).unwrap();
        let part = error_norms(&e, &vec![0.0; e.len()], &s, Some((2.3, 2.7))).unwrap();
        for n in Norm::ALL {
            assert!(part.get(n) <= full.get(n));
        }
    }
}
