use crate::fields::{parse_expression, CellGeometry, CoefficientSet, Expression, PeriodicField, ScalarFn};
use std::collections::BTreeMap;

pub fn ex(s: &str) -> Expression {
    parse_expression(s, &BTreeMap::new()).unwrap()
}

pub fn sf(s: &str) -> ScalarFn {
    ScalarFn::expr(ex(s))
}

pub fn geo(dim: usize) -> CellGeometry {
    CellGeometry::new(1.0, &vec![1.0; dim]).unwrap()
}

pub fn scalar(g: &CellGeometry, s: &str) -> PeriodicField {
    PeriodicField::scalar(g, sf(s)).unwrap()
}

pub fn coeffs_1d(a: &str, q: &str, mu: &str) -> CoefficientSet {
    CoefficientSet::from_formulas(&geo(1), a, &[q], mu, &BTreeMap::new()).unwrap()
}

/// `a` is the upper triangle `a11, a12, a22`.
pub fn coeffs_2d(a: [&str; 3], q: [&str; 2], mu: &str) -> CoefficientSet {
    let g = geo(2);
    CoefficientSet::new(
        PeriodicField::matrix(&g, a.iter().map(|s| sf(s)).collect()).unwrap(),
        PeriodicField::vector(&g, q.iter().map(|s| sf(s)).collect()).unwrap(),
        PeriodicField::scalar(&g, sf(mu)).unwrap(),
    )
    .unwrap()
}
