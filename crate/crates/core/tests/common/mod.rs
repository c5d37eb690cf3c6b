//! Pairs shared by the hinged and acceptance suites.

use std::f64::consts::FRAC_PI_4;

use subheat::SrModel;

pub const Q0: [f64; 2] = [-1.0, -FRAC_PI_4];
pub const Q1: [f64; 2] = [1.0, FRAC_PI_4];

pub type Pair = (&'static str, SrModel, Vec<f64>, Vec<f64>, Option<Vec<f64>>);

/// Pairs covering conjugate and non-conjugate minimizers, unique and
/// multiple. Horizontal free36 pairs are left out: the straight line is
/// reached by a whole family of covectors, so the exponential map is singular
/// along it and the stencil cannot shoot to nearby points.
pub fn catalogue_pairs() -> Vec<Pair> {
    vec![
        ("heisenberg horizontal", SrModel::heisenberg(), vec![0.0; 3], vec![1.0, 0.0, 0.0], None),
        ("heisenberg generic", SrModel::heisenberg(), vec![0.0; 3], vec![0.5, 0.3, 0.2], None),
        ("heisenberg vertical", SrModel::heisenberg(), vec![0.0; 3], vec![0.0, 0.0, 1.0], None),
        ("grushin conjugate", SrModel::grushin(), Q0.to_vec(), Q1.to_vec(), Some(vec![0.0, 0.0])),
        ("grushin two minimizers", SrModel::grushin(), vec![-1.0, -1.2], vec![1.0, 1.2], None),
        ("grushin singular cut", SrModel::grushin(), vec![0.0, 0.0], vec![0.0, 1.0], None),
    ]
}

