//! 2-D FFT helpers and radially binned energy spectra.
//!
//! Conventions: transforms are unnormalized in the forward direction, and the
//! radial spectrum of a channel `u` on an `H x W` grid is
//! `E(k) = sum over wavevectors with round(|k|) == k, k != 0 of |U(k)|^2 / (H W)^2`,
//! summed over channels. With this normalization `sum_k E(k)` equals the
//! spatial variance (summed over channels).

use crate::grid::Field;
use rustfft::num_complex::Complex64;
use rustfft::FftPlanner;

/// In-place 2-D FFT of a row-major `h x w` array. The inverse is unnormalized.
pub fn fft2(data: &mut [Complex64], h: usize, w: usize, inverse: bool) {
    assert_eq!(data.len(), h * w);
    let mut planner = FftPlanner::new();
    let (row, col) = if inverse {
        (planner.plan_fft_inverse(w), planner.plan_fft_inverse(h))
    } else {
        (planner.plan_fft_forward(w), planner.plan_fft_forward(h))
    };
    for r in data.chunks_mut(w) {
        row.process(r);
    }
    let mut column = vec![Complex64::new(0.0, 0.0); h];
    for x in 0..w {
        for y in 0..h {
            column[y] = data[y * w + x];
        }
        col.process(&mut column);
        for y in 0..h {
            data[y * w + x] = column[y];
        }
    }
}

/// Signed integer wavenumber of FFT index `i` on a grid of length `n`.
pub fn signed_wavenumber(i: usize, n: usize) -> f64 {
    if i <= n / 2 {
        i as f64
    } else {
        i as f64 - n as f64
    }
}

/// Radial bin of the wavevector at FFT index `(y, x)`.
pub fn radial_bin(y: usize, x: usize, h: usize, w: usize) -> usize {
    let ky = signed_wavenumber(y, h);
    let kx = signed_wavenumber(x, w);
    (ky * ky + kx * kx).sqrt().round() as usize
}

/// Largest radial bin on an `h x w` grid.
pub fn max_bin(h: usize, w: usize) -> usize {
    let ky = (h / 2) as f64;
    let kx = (w / 2) as f64;
    (ky * ky + kx * kx).sqrt().round() as usize
}

/// Energy spectrum indexed by integer wavenumber `0..=max_bin`; entry 0 is
/// always zero (the mean carries no variance).
pub fn radial_energy_spectrum(field: &Field) -> Vec<f64> {
    let (h, w) = (field.height(), field.width());
    let n2 = ((h * w) as f64).powi(2);
    let mut e = vec![0.0; max_bin(h, w) + 1];
    let mut buf = vec![Complex64::new(0.0, 0.0); h * w];
    for c in 0..field.channels() {
        for (b, &v) in buf.iter_mut().zip(field.channel(c)) {
            *b = Complex64::new(v, 0.0);
        }
        fft2(&mut buf, h, w, false);
        for y in 0..h {
            for x in 0..w {
                if y == 0 && x == 0 {
                    continue;
                }
                e[radial_bin(y, x, h, w)] += buf[y * w + x].norm_sqr() / n2;
            }
        }
    }
    e
}

/// Least-squares slope of `log e` against `log k` over entries with
/// `k_lo <= k <= k_hi` and positive energy.
pub fn loglog_slope(e: &[f64], k_lo: usize, k_hi: usize) -> f64 {
    let pts: Vec<(f64, f64)> = (k_lo..=k_hi.min(e.len() - 1))
        .filter(|&k| k > 0 && e[k] > 0.0)
        .map(|k| ((k as f64).ln(), e[k].ln()))
        .collect();
    let n = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
    sxy / sxx
}
