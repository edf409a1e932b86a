//! Shared fixtures: the three-mode saturated benchmark system.

use nalgebra::{DMatrix, DVector};
use pwa_synth_core::model::{Polytope, PwaMode, PwaSystem};

/// Three-mode planar system with a vertical strip partition at x1 = -1 and
/// x1 = 1, input box |u| <= umax, domain [-3, 3] x [-2, 2].
pub fn three_mode_system(umax: f64) -> PwaSystem {
    let a = |p: f64| DMatrix::from_row_slice(2, 2, &[0.1, 1.1, p, -1.0]);
    let b = DMatrix::from_row_slice(2, 1, &[0.0, 1.0]);
    let drift = DVector::from_column_slice(&[0.0, 1.0]);
    let strip = |x_lo: f64, x_hi: f64| {
        Polytope::from_polygon(vec![[x_lo, -2.0], [x_hi, -2.0], [x_hi, 2.0], [x_lo, 2.0]])
    };
    let modes = vec![
        PwaMode { a: a(0.1), b: b.clone(), e: drift.clone(), region: strip(-3.0, -1.0) },
        PwaMode { a: a(-0.9), b: b.clone(), e: DVector::zeros(2), region: strip(-1.0, 1.0) },
        PwaMode { a: a(-1.9), b, e: drift, region: strip(1.0, 3.0) },
    ];
    let input = Polytope::from_halfspaces(
        DMatrix::from_row_slice(2, 1, &[1.0, -1.0]),
        DVector::from_column_slice(&[umax, umax]),
    );
    let domain = strip(-3.0, 3.0);
    PwaSystem::new(modes, input, domain).expect("fixture system is well formed")
}
