//! 4th-order centered finite differences on the periodic grid.
//!
//! Independent cross-check for the spectral operators; the two modes
//! agree to O(h⁴) on smooth fields.

use super::ScalarField;

/// Apply a 5-point periodic stencil along one axis, accumulating into `out`.
fn accumulate_axis(
    f: &ScalarField,
    axis: usize,
    coeffs: [f64; 5], // weights for offsets -2, -1, 0, +1, +2
    out: &mut [f64],
) {
    let grid = f.grid();
    let nodes = grid.nodes();
    let m = nodes[axis];
    let inner: usize = nodes[axis + 1..].iter().product();
    let outer: usize = nodes[..axis].iter().product();
    let values = f.values();
    let mut line = vec![0.0f64; m];
    for o in 0..outer {
        for i in 0..inner {
            let start = o * m * inner + i;
            for j in 0..m {
                line[j] = values[start + j * inner];
            }
            for j in 0..m {
                let jm2 = (j + m - 2) % m;
                let jm1 = (j + m - 1) % m;
                let jp1 = (j + 1) % m;
                let jp2 = (j + 2) % m;
                out[start + j * inner] += coeffs[0] * line[jm2]
                    + coeffs[1] * line[jm1]
                    + coeffs[2] * line[j]
                    + coeffs[3] * line[jp1]
                    + coeffs[4] * line[jp2];
            }
        }
    }
}

/// 4th-order Laplacian: per axis (−f₋₂ + 16f₋₁ − 30f + 16f₊₁ − f₊₂)/(12h²).
pub fn laplacian_flat_fd(f: &ScalarField) -> ScalarField {
    let grid = f.grid();
    let mut out = vec![0.0f64; f.len()];
    for axis in 0..grid.n() {
        let h = grid.spacing(axis);
        let s = 1.0 / (12.0 * h * h);
        accumulate_axis(f, axis, [-s, 16.0 * s, -30.0 * s, 16.0 * s, -s], &mut out);
    }
    ScalarField::from_raw(grid.clone(), out)
}

/// 4th-order first derivatives: per axis (f₋₂ − 8f₋₁ + 8f₊₁ − f₊₂)/(12h).
pub fn gradient_flat_fd(f: &ScalarField) -> Vec<ScalarField> {
    let grid = f.grid();
    (0..grid.n())
        .map(|axis| {
            let h = grid.spacing(axis);
            let s = 1.0 / (12.0 * h);
            let mut out = vec![0.0f64; f.len()];
            accumulate_axis(f, axis, [s, -8.0 * s, 0.0, 8.0 * s, -s], &mut out);
            ScalarField::from_raw(grid.clone(), out)
        })
        .collect()
}

/// Pointwise |∇f|² from the finite-difference gradient.
pub fn grad_squared_flat_fd(f: &ScalarField) -> ScalarField {
    let grads = gradient_flat_fd(f);
    let mut out = vec![0.0f64; f.len()];
    for g in &grads {
        for (o, v) in out.iter_mut().zip(g.values().iter()) {
            *o += v * v;
        }
    }
    ScalarField::from_raw(f.grid().clone(), out)
}
