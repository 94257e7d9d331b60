//! Building blocks shared by the encoder: positional encoding, FFT
//! cross-correlation, circular shifts, top-k selection, softmax, series
//! decomposition, GELU and kernel-3 convolution, each with the adjoint the
//! backward pass needs.

use std::cell::RefCell;
use std::f64::consts::{FRAC_1_SQRT_2, PI};

use ndarray::{s, Array1, Array2, ArrayView2, Axis};
use num_complex::Complex64;
use rustfft::FftPlanner;

thread_local! {
    static PLANNER: RefCell<FftPlanner<f64>> = RefCell::new(FftPlanner::new());
}

fn sinusoid(pos: f64, i: usize, dims: usize) -> f64 {
    let pair = (i - i % 2) as f64;
    let omega = 10000f64.powf(-pair / dims as f64);
    if i.is_multiple_of(2) {
        (pos * omega).sin()
    } else {
        (pos * omega).cos()
    }
}

/// Two-axis sinusoidal encoding: a lag table that varies down the rows with
/// frequency geometric in the column index, plus a subcarrier table that
/// varies across the columns with frequency geometric in the row index.
/// Each table is scaled to `amplitude / 2`, so entries stay in
/// `[-amplitude, amplitude]`.
pub fn positional_encoding(lags: usize, width: usize, amplitude: f64) -> Array2<f64> {
    let half = amplitude / 2.0;
    Array2::from_shape_fn((lags, width), |(r, c)| {
        half * (sinusoid(r as f64, c, width) + sinusoid(c as f64, r, lags))
    })
}

/// Code of a single `(lag, subcarrier)` position: row `lag` of the lag table
/// followed by column `subcarrier` of the subcarrier table.
pub fn position_code(lag: usize, subcarrier: usize, lags: usize, width: usize, amplitude: f64) -> Vec<f64> {
    let half = amplitude / 2.0;
    let row = (0..width).map(|c| half * sinusoid(lag as f64, c, width));
    let col = (0..lags).map(|r| half * sinusoid(subcarrier as f64, r, lags));
    row.chain(col).collect()
}

/// Circular cross-correlation along the lag axis, averaged over columns:
/// `R[tau] = 1/(l d) sum_c sum_t Q[(t + tau) mod l, c] K[t, c]`.
pub fn cross_correlation_fft(q: ArrayView2<f64>, k: ArrayView2<f64>) -> Vec<f64> {
    assert_eq!(q.dim(), k.dim(), "query and key shapes differ");
    let (l, d) = q.dim();
    let (fwd, inv) = PLANNER.with(|p| {
        let mut p = p.borrow_mut();
        (p.plan_fft_forward(l), p.plan_fft_inverse(l))
    });
    let mut acc = vec![Complex64::new(0.0, 0.0); l];
    let mut qb = vec![Complex64::new(0.0, 0.0); l];
    let mut kb = vec![Complex64::new(0.0, 0.0); l];
    for c in 0..d {
        for t in 0..l {
            qb[t] = Complex64::new(q[[t, c]], 0.0);
            kb[t] = Complex64::new(k[[t, c]], 0.0);
        }
        fwd.process(&mut qb);
        fwd.process(&mut kb);
        for ((a, x), y) in acc.iter_mut().zip(&qb).zip(&kb) {
            *a += x * y.conj();
        }
    }
    inv.process(&mut acc);
    // Inverse transform is unnormalized: one factor of l undoes it, the other
    // is the correlation normalization.
    let scale = 1.0 / (l as f64 * l as f64 * d as f64);
    let peak = acc.iter().map(|v| v.re.abs()).fold(0.0, f64::max);
    debug_assert!(
        acc.iter().all(|v| !(v.im.abs() > 1e-9 * peak.max(1e-300) + 1e-12)),
        "cross-correlation has an imaginary residue"
    );
    acc.iter().map(|v| v.re * scale).collect()
}

/// `Roll(V, tau)[t] = V[(t + tau) mod l]` along rows.
pub fn roll(v: ArrayView2<f64>, tau: usize) -> Array2<f64> {
    let l = v.nrows();
    let tau = tau % l.max(1);
    let mut out = Array2::zeros(v.dim());
    out.slice_mut(s![..l - tau, ..]).assign(&v.slice(s![tau.., ..]));
    out.slice_mut(s![l - tau.., ..]).assign(&v.slice(s![..tau, ..]));
    out
}

/// Indices of the `k` largest scores, largest first; ties go to the smaller index.
pub fn top_k(scores: &[f64], k: usize) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..scores.len()).collect();
    idx.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]).then(a.cmp(&b)));
    idx.truncate(k);
    idx
}

pub fn softmax(x: &[f64]) -> Vec<f64> {
    let max = x.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let e: Vec<f64> = x.iter().map(|v| (v - max).exp()).collect();
    let total: f64 = e.iter().sum();
    e.into_iter().map(|v| v / total).collect()
}

/// Moving average along rows with replicate padding.
pub fn moving_average(x: ArrayView2<f64>, kernel: usize) -> Array2<f64> {
    let (l, n) = x.dim();
    let half = (kernel / 2) as isize;
    let inv = 1.0 / kernel as f64;
    let mut out = Array2::zeros((l, n));
    for t in 0..l {
        let mut row = out.row_mut(t);
        for j in -half..=half {
            let src = (t as isize + j).clamp(0, l as isize - 1) as usize;
            row += &x.row(src);
        }
        row *= inv;
    }
    out
}

/// Adjoint of [`moving_average`].
pub fn moving_average_adjoint(dy: ArrayView2<f64>, kernel: usize) -> Array2<f64> {
    let (l, n) = dy.dim();
    let half = (kernel / 2) as isize;
    let inv = 1.0 / kernel as f64;
    let mut out = Array2::zeros((l, n));
    for t in 0..l {
        for j in -half..=half {
            let dst = (t as isize + j).clamp(0, l as isize - 1) as usize;
            out.row_mut(dst).scaled_add(inv, &dy.row(t));
        }
    }
    out
}

/// Splits `x` into `(seasonal, trend)`.
///
/// The trend is the moving average, nudged by at most a few ulps so that
/// `seasonal + trend` reproduces `x` bit for bit.
pub fn series_decompose(x: ArrayView2<f64>, kernel: usize) -> (Array2<f64>, Array2<f64>) {
    let mut trend = moving_average(x, kernel);
    let seasonal = &x - &trend;
    ndarray::Zip::from(&mut trend)
        .and(&seasonal)
        .and(&x)
        .for_each(|t, &s, &v| *t = exact_complement(v, s));
    (seasonal, trend)
}

/// A value `t` with `s + t == x` in floating point, close to `x - s`.
fn exact_complement(x: f64, s: f64) -> f64 {
    let mut t = x - s;
    for _ in 0..8 {
        let r = s + t;
        if r == x {
            break;
        }
        t = if r < x { t.next_up() } else { t.next_down() };
    }
    t
}

/// Backward pass through the seasonal output of [`series_decompose`].
pub fn seasonal_adjoint(d_seasonal: ArrayView2<f64>, kernel: usize) -> Array2<f64> {
    &d_seasonal - &moving_average_adjoint(d_seasonal, kernel)
}

/// Exact GELU, `x * Phi(x)`.
pub fn gelu(x: f64) -> f64 {
    0.5 * x * (1.0 + libm::erf(x * FRAC_1_SQRT_2))
}

pub fn gelu_grad(x: f64) -> f64 {
    let cdf = 0.5 * (1.0 + libm::erf(x * FRAC_1_SQRT_2));
    let pdf = (-0.5 * x * x).exp() / (2.0 * PI).sqrt();
    cdf + x * pdf
}

/// Kernel-3, same-padding unfold: row `t` holds `x[t-1], x[t], x[t+1]`
/// (zeros outside), so a convolution is `im2col(x) . W` with `W` of shape
/// `(3 * channels_in, channels_out)`.
pub fn im2col3(x: ArrayView2<f64>) -> Array2<f64> {
    let (l, c) = x.dim();
    let mut out = Array2::zeros((l, 3 * c));
    for j in 0..3 {
        for t in 0..l {
            let src = t as isize + j as isize - 1;
            if (0..l as isize).contains(&src) {
                out.slice_mut(s![t, j * c..(j + 1) * c]).assign(&x.row(src as usize));
            }
        }
    }
    out
}

/// Adjoint of [`im2col3`].
pub fn col2im3(cols: ArrayView2<f64>) -> Array2<f64> {
    let (l, c3) = cols.dim();
    let c = c3 / 3;
    let mut out = Array2::zeros((l, c));
    for j in 0..3 {
        for t in 0..l {
            let dst = t as isize + j as isize - 1;
            if (0..l as isize).contains(&dst) {
                let mut row = out.row_mut(dst as usize);
                row += &cols.slice(s![t, j * c..(j + 1) * c]);
            }
        }
    }
    out
}

pub fn mean_rows(x: ArrayView2<f64>) -> Array1<f64> {
    x.mean_axis(Axis(0)).expect("at least one row")
}
