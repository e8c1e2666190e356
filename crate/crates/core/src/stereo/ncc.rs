//! Normalized cross-correlation of RGB patches, averaged over channels.

use std::cell::RefCell;

use image::RgbImage;
use rustfft::num_complex::Complex;
use rustfft::FftPlanner;

use crate::error::{Error, Result};

/// Correlation scores for every placement of a template inside a region,
/// row-major over offsets.
#[derive(Debug, Clone, PartialEq)]
pub struct NccMap {
    pub width: usize,
    pub height: usize,
    pub scores: Vec<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NccPeak {
    pub value: f64,
    /// Offset of the template's top-left corner inside the region.
    pub location: (u32, u32),
}

impl NccMap {
    /// Maximum and its first occurrence in raster order.
    pub fn peak(&self) -> NccPeak {
        let mut best = 0;
        for (i, &s) in self.scores.iter().enumerate() {
            if s > self.scores[best] {
                best = i;
            }
        }
        NccPeak {
            value: self.scores[best],
            location: ((best % self.width) as u32, (best / self.width) as u32),
        }
    }
}

fn planes(img: &RgbImage) -> [Vec<u8>; 3] {
    let n = (img.width() * img.height()) as usize;
    let mut out = [Vec::with_capacity(n), Vec::with_capacity(n), Vec::with_capacity(n)];
    for px in img.as_raw().chunks_exact(3) {
        out[0].push(px[0]);
        out[1].push(px[1]);
        out[2].push(px[2]);
    }
    out
}

/// Summed-area tables of values and squared values, `(w + 1) x (h + 1)`.
fn integrals(plane: &[u8], w: usize, h: usize) -> (Vec<u64>, Vec<u64>) {
    let stride = w + 1;
    let mut s = vec![0u64; stride * (h + 1)];
    let mut s2 = vec![0u64; stride * (h + 1)];
    for y in 0..h {
        let (mut row, mut row2) = (0u64, 0u64);
        for x in 0..w {
            let v = plane[y * w + x] as u64;
            row += v;
            row2 += v * v;
            s[(y + 1) * stride + x + 1] = s[y * stride + x + 1] + row;
            s2[(y + 1) * stride + x + 1] = s2[y * stride + x + 1] + row2;
        }
    }
    (s, s2)
}

#[inline]
fn rect_sum(table: &[u64], stride: usize, x: usize, y: usize, w: usize, h: usize) -> u64 {
    table[(y + h) * stride + x + w] + table[y * stride + x] - table[y * stride + x + w] - table[(y + h) * stride + x]
}

fn prefer_fft((tw, th): (usize, usize), (sw, sh): (usize, usize)) -> bool {
    let direct = ((sw - tw + 1) * (sh - th + 1) * tw * th) as f64;
    let (p, q) = (fft_len(sw), fft_len(sh));
    let fft = 10.0 * (p * q) as f64 * ((p * q) as f64).log2();
    direct > fft
}

/// Smallest length `>= n` with no prime factor above 5.
fn fft_len(n: usize) -> usize {
    (n..)
        .find(|&m| {
            let mut m = m;
            for f in [2, 3, 5] {
                while m % f == 0 {
                    m /= f;
                }
            }
            m == 1
        })
        .unwrap()
}

fn transpose(src: &[Complex<f64>], rows: usize, cols: usize) -> Vec<Complex<f64>> {
    let mut out = vec![Complex::default(); rows * cols];
    const B: usize = 16;
    for r0 in (0..rows).step_by(B) {
        for c0 in (0..cols).step_by(B) {
            for r in r0..(r0 + B).min(rows) {
                for c in c0..(c0 + B).min(cols) {
                    out[c * rows + r] = src[r * cols + c];
                }
            }
        }
    }
    out
}

/// Forward 2D transform of a `q` rows by `p` columns buffer; the spectrum is
/// returned transposed (`p` rows of length `q`).
fn fft2_forward(mut buf: Vec<Complex<f64>>, p: usize, q: usize, planner: &mut FftPlanner<f64>) -> Vec<Complex<f64>> {
    planner.plan_fft_forward(p).process(&mut buf);
    let mut t = transpose(&buf, q, p);
    planner.plan_fft_forward(q).process(&mut t);
    t
}

/// Inverse of [`fft2_forward`], unnormalized, back to `q` rows of length `p`.
fn fft2_inverse(mut spec: Vec<Complex<f64>>, p: usize, q: usize, planner: &mut FftPlanner<f64>) -> Vec<Complex<f64>> {
    planner.plan_fft_inverse(q).process(&mut spec);
    let mut buf = transpose(&spec, p, q);
    planner.plan_fft_inverse(p).process(&mut buf);
    buf
}

/// `sum t(x, y) * s(x + ox, y + oy)` for every valid offset, by direct
/// summation.
fn cross_direct(t: &[u8], (tw, th): (usize, usize), s: &[u8], (sw, sh): (usize, usize)) -> Vec<u64> {
    let (mw, mh) = (sw - tw + 1, sh - th + 1);
    let mut out = vec![0u64; mw * mh];
    // one template row at a time, all horizontal offsets at once; a row sum
    // of products stays below 2^32 for rows up to 66051 pixels
    let mut row_acc = vec![0u32; mw];
    for oy in 0..mh {
        let acc = &mut out[oy * mw..(oy + 1) * mw];
        for r in 0..th {
            row_acc.fill(0);
            let srow = &s[(oy + r) * sw..(oy + r + 1) * sw];
            for (tx, &tv) in t[r * tw..(r + 1) * tw].iter().enumerate() {
                let tv = tv as u32;
                for (a, &sv) in row_acc.iter_mut().zip(&srow[tx..tx + mw]) {
                    *a += tv * sv as u32;
                }
            }
            for (o, &a) in acc.iter_mut().zip(&row_acc) {
                *o += a as u64;
            }
        }
    }
    out
}

thread_local! {
    static PLANNER: RefCell<FftPlanner<f64>> = RefCell::new(FftPlanner::new());
}

/// Spectra of two real signals packed as real and imaginary parts of `z`
/// (`rows x cols`, any 2D layout).
fn split_spectra(z: &[Complex<f64>], rows: usize, cols: usize) -> (Vec<Complex<f64>>, Vec<Complex<f64>>) {
    let mut a = Vec::with_capacity(rows * cols);
    let mut b = Vec::with_capacity(rows * cols);
    let neg = |i: usize, n: usize| if i == 0 { 0 } else { n - i };
    for r in 0..rows {
        let nr = neg(r, rows) * cols;
        for c in 0..cols {
            let zk = z[r * cols + c];
            let zn = z[nr + neg(c, cols)].conj();
            a.push((zk + zn) * 0.5);
            b.push((zk - zn) * Complex::new(0.0, -0.5));
        }
    }
    (a, b)
}

/// Same sums as [`cross_direct`] for all three channels through 2D
/// transforms, rounded to the nearest integer. Rounding is exact while the
/// transform error stays far below one half, which holds for 8-bit inputs at
/// image sizes.
fn cross_fft3(
    t: &[Vec<u8>; 3],
    (tw, th): (usize, usize),
    s: &[Vec<u8>; 3],
    (sw, sh): (usize, usize),
) -> [Vec<u64>; 3] {
    let (mw, mh) = (sw - tw + 1, sh - th + 1);
    let (p, q) = (fft_len(sw), fft_len(sh));
    let pack = |a: (&[u8], usize, usize), b: (&[u8], usize, usize)| {
        let mut z = vec![Complex::default(); p * q];
        for y in 0..a.2 {
            for x in 0..a.1 {
                z[y * p + x].re = a.0[y * a.1 + x] as f64;
            }
        }
        for y in 0..b.2 {
            for x in 0..b.1 {
                z[y * p + x].im = b.0[y * b.1 + x] as f64;
            }
        }
        z
    };
    PLANNER.with(|planner| {
        let planner = &mut *planner.borrow_mut();
        let z0 = fft2_forward(pack((&s[0], sw, sh), (&s[1], sw, sh)), p, q, planner);
        let z1 = fft2_forward(pack((&s[2], sw, sh), (&t[0], tw, th)), p, q, planner);
        let z2 = fft2_forward(pack((&t[1], tw, th), (&t[2], tw, th)), p, q, planner);
        let (s0, s1) = split_spectra(&z0, p, q);
        let (s2, t0) = split_spectra(&z1, p, q);
        let (t1, t2) = split_spectra(&z2, p, q);
        let i = Complex::new(0.0, 1.0);
        // products of Hermitian spectra invert to real signals, so two
        // channels share one inverse transform
        let u: Vec<Complex<f64>> = (0..p * q).map(|k| s0[k] * t0[k].conj() + i * (s1[k] * t1[k].conj())).collect();
        let v: Vec<Complex<f64>> = (0..p * q).map(|k| s2[k] * t2[k].conj()).collect();
        let u = fft2_inverse(u, p, q, planner);
        let v = fft2_inverse(v, p, q, planner);
        let scale = (p * q) as f64;
        let take = |f: &dyn Fn(usize) -> f64| -> Vec<u64> {
            let mut out = vec![0u64; mw * mh];
            for oy in 0..mh {
                for ox in 0..mw {
                    out[oy * mw + ox] = (f(oy * p + ox) / scale).round().max(0.0) as u64;
                }
            }
            out
        };
        [take(&|k| u[k].re), take(&|k| u[k].im), take(&|k| v[k].re)]
    })
}

/// Full correlation map. Sums are exact integers; only the final ratio is
/// floating point. Windows where either side has zero variance score 0.
pub fn ncc_map(template: &RgbImage, region: &RgbImage) -> Result<NccMap> {
    ncc_map_with(template, region, None)
}

fn ncc_map_with(template: &RgbImage, region: &RgbImage, force_fft: Option<bool>) -> Result<NccMap> {
    let (tw, th) = (template.width() as usize, template.height() as usize);
    let (sw, sh) = (region.width() as usize, region.height() as usize);
    if tw == 0 || th == 0 || tw >= sw || th >= sh {
        return Err(Error::InvalidInput(format!(
            "template {tw}x{th} must be non-empty and strictly smaller than region {sw}x{sh}"
        )));
    }
    let (mw, mh) = (sw - tw + 1, sh - th + 1);
    let n = (tw * th) as i128;
    let use_fft = force_fft.unwrap_or_else(|| prefer_fft((tw, th), (sw, sh)));
    let tp = planes(template);
    let sp = planes(region);
    let mut fft_cross = use_fft.then(|| cross_fft3(&tp, (tw, th), &sp, (sw, sh)));
    let mut scores = vec![0.0f64; mw * mh];
    for c in 0..3 {
        let t = &tp[c];
        let s = &sp[c];
        let st: u64 = t.iter().map(|&v| v as u64).sum();
        let stt: u64 = t.iter().map(|&v| v as u64 * v as u64).sum();
        let var_t = n * stt as i128 - (st as i128) * (st as i128);
        if var_t == 0 {
            continue;
        }
        let (sum, sum2) = integrals(s, sw, sh);
        let cross = match &mut fft_cross {
            Some(all) => std::mem::take(&mut all[c]),
            None => cross_direct(t, (tw, th), s, (sw, sh)),
        };
        for oy in 0..mh {
            for ox in 0..mw {
                let sw_sum = rect_sum(&sum, sw + 1, ox, oy, tw, th) as i128;
                let sww = rect_sum(&sum2, sw + 1, ox, oy, tw, th) as i128;
                let var_w = n * sww - sw_sum * sw_sum;
                if var_w == 0 {
                    continue;
                }
                let num = n * cross[oy * mw + ox] as i128 - st as i128 * sw_sum;
                scores[oy * mw + ox] += num as f64 / ((var_t as f64).sqrt() * (var_w as f64).sqrt());
            }
        }
    }
    for v in &mut scores {
        *v /= 3.0;
    }
    Ok(NccMap {
        width: mw,
        height: mh,
        scores,
    })
}

pub fn ncc_match(template: &RgbImage, region: &RgbImage) -> Result<NccPeak> {
    Ok(ncc_map(template, region)?.peak())
}
