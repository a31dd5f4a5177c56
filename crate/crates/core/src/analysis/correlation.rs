//! FFT-based correlation of real series.
//!
//! For `x` of length `n` with mean removed:
//!
//! ```text
//! acf[k]  = sum_{i<n-k} x[i] x[i+k] / sum_i x[i]^2          (linear, biased)
//! xc[s]   = sum_i x[i] y[(i+s) mod n] / sqrt(sum x^2 sum y^2) (circular)
//! ```
//!
//! `xc` peaks at `s = d` when `y[i] = x[i - d]`. Both use
//! `IFFT(conj(X) * Y)`; the autocorrelation zero-pads to `2n` so the
//! wrap-around terms vanish.

use std::cell::RefCell;

use rustfft::num_complex::Complex;
use rustfft::FftPlanner;

thread_local! {
    // Plans are cached per length; awkward lengths are costly to plan.
    static PLANNER: RefCell<FftPlanner<f64>> = RefCell::new(FftPlanner::new());
}

fn centered(x: &[f64]) -> (Vec<f64>, f64) {
    let mean = x.iter().sum::<f64>() / x.len().max(1) as f64;
    let c: Vec<f64> = x.iter().map(|v| v - mean).collect();
    let energy = c.iter().map(|v| v * v).sum();
    (c, energy)
}

fn correlate(a: &[f64], b: &[f64], n: usize) -> Vec<f64> {
    let (fwd, inv) = PLANNER.with(|p| {
        let mut p = p.borrow_mut();
        (p.plan_fft_forward(n), p.plan_fft_inverse(n))
    });
    let lift = |x: &[f64]| -> Vec<Complex<f64>> {
        let mut v: Vec<Complex<f64>> = x.iter().map(|&re| Complex::new(re, 0.0)).collect();
        v.resize(n, Complex::new(0.0, 0.0));
        v
    };
    let mut fa = lift(a);
    let mut fb = lift(b);
    fwd.process(&mut fa);
    fwd.process(&mut fb);
    let mut prod: Vec<Complex<f64>> = fa.iter().zip(&fb).map(|(x, y)| x.conj() * y).collect();
    inv.process(&mut prod);
    prod.iter().map(|c| c.re / n as f64).collect()
}

/// Normalized linear autocorrelation for lags `0..n`. All zeros when the
/// series is constant.
pub fn autocorrelation(x: &[f64]) -> Vec<f64> {
    let n = x.len();
    if n == 0 {
        return Vec::new();
    }
    let (c, energy) = centered(x);
    if energy <= 0.0 {
        return vec![0.0; n];
    }
    let mut r = correlate(&c, &c, 2 * n);
    r.truncate(n);
    r.iter_mut().for_each(|v| *v /= energy);
    r
}

/// Normalized circular cross-correlation for shifts `0..n`, or `None` when
/// either series is constant or the lengths differ.
pub fn circular_cross_correlation(x: &[f64], y: &[f64]) -> Option<Vec<f64>> {
    if x.len() != y.len() || x.is_empty() {
        return None;
    }
    let (a, ea) = centered(x);
    let (b, eb) = centered(y);
    if ea <= 0.0 || eb <= 0.0 {
        return None;
    }
    let norm = (ea * eb).sqrt();
    Some(correlate(&a, &b, x.len()).into_iter().map(|v| v / norm).collect())
}
