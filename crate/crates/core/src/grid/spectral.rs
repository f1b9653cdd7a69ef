//! Spectral (Fourier multiplier) differentiation on the periodic grid.
//!
//! The n-dimensional transform is applied axis by axis; mode k on an
//! axis with m nodes and period L carries the angular wavenumber
//! κ = 2πk/L with k ∈ (−m/2, m/2]. The Laplacian multiplier is −|κ|²;
//! first derivatives use iκ with the Nyquist mode zeroed so that real
//! input yields real output.

use std::cell::RefCell;
use std::sync::Arc;

use rustfft::num_complex::Complex64;
use rustfft::{Fft, FftPlanner};

use super::{Grid, ScalarField};

thread_local! {
    static PLANNER: RefCell<FftPlanner<f64>> = RefCell::new(FftPlanner::new());
}

fn plan(len: usize, forward: bool) -> Arc<dyn Fft<f64>> {
    PLANNER.with(|p| {
        let mut planner = p.borrow_mut();
        if forward {
            planner.plan_fft_forward(len)
        } else {
            planner.plan_fft_inverse(len)
        }
    })
}

/// In-place FFT along every axis. Forward is unnormalised; the inverse
/// divides by the total node count. The innermost axis is contiguous
/// and transformed in place; outer axes go through a line buffer.
pub(crate) fn fft_all_axes(grid: &Grid, data: &mut [Complex64], forward: bool) {
    let n = grid.n();
    let nodes = grid.nodes();
    for axis in 0..n {
        let m = nodes[axis];
        let inner: usize = nodes[axis + 1..].iter().product();
        let outer: usize = nodes[..axis].iter().product();
        let fft = plan(m, forward);
        if inner == 1 {
            let mut scratch = vec![Complex64::new(0.0, 0.0); fft.get_inplace_scratch_len()];
            for o in 0..outer {
                fft.process_with_scratch(&mut data[o * m..(o + 1) * m], &mut scratch);
            }
        } else {
            let mut line = vec![Complex64::new(0.0, 0.0); m];
            for o in 0..outer {
                for i in 0..inner {
                    let start = o * m * inner + i;
                    for j in 0..m {
                        line[j] = data[start + j * inner];
                    }
                    fft.process(&mut line);
                    for j in 0..m {
                        data[start + j * inner] = line[j];
                    }
                }
            }
        }
    }
    if !forward {
        let scale = 1.0 / grid.len() as f64;
        for v in data.iter_mut() {
            *v *= scale;
        }
    }
}

/// Row-major traversal of mode indices with carry increments, avoiding
/// per-node div/mod in the multiplier loops.
pub(crate) fn for_each_mode(grid: &Grid, mut f: impl FnMut(usize, &[usize])) {
    let n = grid.n();
    let nodes = grid.nodes();
    let total = grid.len();
    let mut idx = vec![0usize; n];
    for flat in 0..total {
        f(flat, &idx);
        for axis in (0..n).rev() {
            idx[axis] += 1;
            if idx[axis] < nodes[axis] {
                break;
            }
            idx[axis] = 0;
        }
    }
}

fn to_spectrum(f: &ScalarField) -> Vec<Complex64> {
    let mut data: Vec<Complex64> =
        f.values().iter().map(|&v| Complex64::new(v, 0.0)).collect();
    fft_all_axes(f.grid(), &mut data, true);
    data
}

fn to_field(grid: &Grid, mut spectrum: Vec<Complex64>) -> ScalarField {
    fft_all_axes(grid, &mut spectrum, false);
    ScalarField::from_raw(grid.clone(), spectrum.into_iter().map(|c| c.re).collect())
}

/// Signed mode number for index i on an axis of length m: i ≤ m/2 maps
/// to i, otherwise to i − m.
fn signed_mode(i: usize, m: usize) -> i64 {
    if i <= m / 2 {
        i as i64
    } else {
        i as i64 - m as i64
    }
}

/// Per-axis angular wavenumber tables κ = 2πk/L.
fn wavenumbers(grid: &Grid) -> Vec<Vec<f64>> {
    (0..grid.n())
        .map(|axis| {
            let m = grid.nodes()[axis];
            let l = grid.periods()[axis];
            (0..m)
                .map(|i| 2.0 * std::f64::consts::PI * signed_mode(i, m) as f64 / l)
                .collect()
        })
        .collect()
}

fn apply_multiplier(f: &ScalarField, mult: impl Fn(&[usize]) -> Complex64) -> ScalarField {
    let grid = f.grid();
    let mut spectrum = to_spectrum(f);
    for_each_mode(grid, |flat, idx| {
        spectrum[flat] *= mult(idx);
    });
    to_field(grid, spectrum)
}

/// Flat-torus Laplacian, spectrally exact for band-limited input.
pub fn laplacian_flat(f: &ScalarField) -> ScalarField {
    let grid = f.grid();
    let kappa_sq: Vec<Vec<f64>> = wavenumbers(grid)
        .into_iter()
        .map(|axis| axis.into_iter().map(|k| k * k).collect())
        .collect();
    let mut spectrum = to_spectrum(f);
    for_each_mode(grid, |flat, idx| {
        let mut ksq = 0.0;
        for (a, &i) in idx.iter().enumerate() {
            ksq += kappa_sq[a][i];
        }
        spectrum[flat] *= -ksq;
    });
    to_field(grid, spectrum)
}

/// All flat partial derivatives ∂f/∂x_a, one field per axis.
pub fn gradient_flat(f: &ScalarField) -> Vec<ScalarField> {
    let grid = f.grid();
    let kappa = wavenumbers(grid);
    let spectrum = to_spectrum(f);
    (0..grid.n())
        .map(|axis| {
            let m = grid.nodes()[axis];
            // iκ is ambiguous at the Nyquist mode of an even axis; zero
            // keeps real input real.
            let factors: Vec<Complex64> = (0..m)
                .map(|i| {
                    if m % 2 == 0 && i == m / 2 {
                        Complex64::new(0.0, 0.0)
                    } else {
                        Complex64::new(0.0, kappa[axis][i])
                    }
                })
                .collect();
            let mut ds = spectrum.clone();
            for_each_mode(grid, |flat, idx| {
                ds[flat] *= factors[idx[axis]];
            });
            to_field(grid, ds)
        })
        .collect()
}

/// Pointwise |∇f|² with respect to the flat metric.
pub fn grad_squared_flat(f: &ScalarField) -> ScalarField {
    let grads = gradient_flat(f);
    let mut out = vec![0.0f64; f.len()];
    for g in &grads {
        for (o, v) in out.iter_mut().zip(g.values().iter()) {
            *o += v * v;
        }
    }
    ScalarField::from_raw(f.grid().clone(), out)
}

/// Pointwise flat inner product ⟨∇f, ∇g⟩.
pub fn grad_inner_flat(f: &ScalarField, g: &ScalarField) -> ScalarField {
    debug_assert_eq!(f.grid(), g.grid());
    let gf = gradient_flat(f);
    let gg = gradient_flat(g);
    let mut out = vec![0.0f64; f.len()];
    for (a, b) in gf.iter().zip(gg.iter()) {
        for (o, (x, y)) in out.iter_mut().zip(a.values().iter().zip(b.values().iter())) {
            *o += x * y;
        }
    }
    ScalarField::from_raw(f.grid().clone(), out)
}

/// 2/3-rule dealiasing filter: zero every mode with |k| > m/3 on any
/// axis. Off by default in the flow; opt-in stabiliser.
pub fn dealias_two_thirds(f: &ScalarField) -> ScalarField {
    let grid = f.grid();
    let cutoffs: Vec<i64> = grid.nodes().iter().map(|&m| (m / 3) as i64).collect();
    let nodes = grid.nodes().to_vec();
    apply_multiplier(f, |idx| {
        let keep = idx
            .iter()
            .enumerate()
            .all(|(a, &i)| signed_mode(i, nodes[a]).abs() <= cutoffs[a]);
        Complex64::new(if keep { 1.0 } else { 0.0 }, 0.0)
    })
}

/// Trigonometric interpolation onto a grid refined by an integer factor
/// per axis. Exact for band-limited fields; Nyquist modes of even axes
/// are split across ±m/2 so real input stays real.
pub fn spectral_upsample(f: &ScalarField, factor: usize) -> ScalarField {
    assert!(factor >= 1);
    let grid = f.grid();
    if factor == 1 {
        return f.clone();
    }
    let fine_nodes: Vec<usize> = grid.nodes().iter().map(|&m| m * factor).collect();
    let fine_grid: Grid = Arc::new(
        super::GridSpec::new(grid.n(), fine_nodes.clone(), grid.periods().to_vec()).unwrap(),
    );
    let spectrum = to_spectrum(f);
    let mut fine = vec![Complex64::new(0.0, 0.0); fine_grid.len()];
    let scale = (fine_grid.len() as f64) / (grid.len() as f64);
    let mut idx = vec![0usize; grid.n()];
    // target positions per axis: (slot, weight); a Nyquist coefficient
    // contributes half to +m/2 and half to −m/2 on the fine grid.
    for (flat, &c) in spectrum.iter().enumerate() {
        grid.unravel(flat, &mut idx);
        let mut placements: Vec<(usize, f64)> = vec![(0, 1.0)];
        for axis in 0..grid.n() {
            let m = grid.nodes()[axis];
            let mf = fine_nodes[axis];
            let k = signed_mode(idx[axis], m);
            let slots: Vec<(usize, f64)> = if m % 2 == 0 && idx[axis] == m / 2 {
                let pos = (m / 2) % mf;
                let neg = mf - m / 2;
                vec![(pos, 0.5), (neg, 0.5)]
            } else {
                let slot = if k >= 0 { k as usize } else { (mf as i64 + k) as usize };
                vec![(slot, 1.0)]
            };
            let mut next = Vec::with_capacity(placements.len() * slots.len());
            for &(base, w) in &placements {
                for &(slot, sw) in &slots {
                    next.push((base * mf + slot, w * sw));
                }
            }
            placements = next;
        }
        for (pos, w) in placements {
            fine[pos] += c * w * scale;
        }
    }
    to_field(&fine_grid, fine)
}
