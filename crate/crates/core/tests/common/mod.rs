#![allow(dead_code)]

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use semfilter::Image;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn white_noise(w: usize, h: usize, seed: u64) -> Image {
    let mut r = rng(seed);
    Image::from_fn(w, h, |_, _| [r.random(), r.random(), r.random()]).unwrap()
}

/// Sinusoidal gratings plus mild noise.
pub fn texture(w: usize, h: usize, seed: u64) -> Image {
    let mut r = rng(seed);
    let fx: f64 = r.random_range(0.3..0.9);
    let fy: f64 = r.random_range(0.3..0.9);
    Image::from_fn(w, h, |x, y| {
        let (xf, yf) = (x as f64, y as f64);
        let base = 128.0 + 60.0 * (xf * fx).sin() + 40.0 * (yf * fy + xf * 0.2).cos();
        let n: f64 = r.random_range(-20.0..20.0);
        let v = |o: f64| (base + o + n).clamp(0.0, 255.0) as u8;
        [v(0.0), v(-15.0), v(10.0)]
    })
    .unwrap()
}

/// Smooth sky/ground scene with a few sharp objects: stands in for a photo.
pub fn natural(w: usize, h: usize, seed: u64) -> Image {
    let mut r = rng(seed);
    let objs: Vec<(f64, f64, f64, [u8; 3])> = (0..5)
        .map(|_| {
            (
                r.random_range(0.0..w as f64),
                r.random_range(0.0..h as f64),
                r.random_range(12.0..50.0),
                [r.random(), r.random(), r.random()],
            )
        })
        .collect();
    Image::from_fn(w, h, |x, y| {
        let (xf, yf) = (x as f64, y as f64);
        for &(cx, cy, rad, col) in &objs {
            if (xf - cx).powi(2) + (yf - cy).powi(2) < rad * rad {
                return col;
            }
        }
        let t = yf / h as f64;
        let grain = ((xf * 1.7).sin() * (yf * 2.3).cos() * 6.0) as i32;
        let c = |a: f64, b: f64| ((a + (b - a) * t) as i32 + grain).clamp(0, 255) as u8;
        if t < 0.55 {
            [c(110.0, 190.0), c(150.0, 210.0), c(230.0, 240.0)]
        } else {
            [c(90.0, 60.0), c(130.0, 90.0), c(60.0, 40.0)]
        }
    })
    .unwrap()
}

/// Independent reflect-101 index (mirror about the edge sample).
pub fn mirror(i: i64, n: i64) -> usize {
    let mut i = i;
    while i < 0 || i >= n {
        i = if i < 0 { -i } else { 2 * (n - 1) - i };
    }
    i as usize
}

/// Direct evaluation of normalized Gaussian taps.
pub fn gauss_taps(sigma: f64, size: usize) -> Vec<f64> {
    let c = (size / 2) as f64;
    if sigma < 1e-3 {
        return (0..size).map(|i| if i as f64 == c { 1.0 } else { 0.0 }).collect();
    }
    let raw: Vec<f64> = (0..size).map(|i| (-((i as f64 - c).powi(2)) / (2.0 * sigma * sigma)).exp()).collect();
    let s: f64 = raw.iter().sum();
    raw.iter().map(|v| v / s).collect()
}

/// Brute-force 2-D convolution of one `w` x `h` window with the
/// outer-product kernel, reflecting inside the window only.
pub fn conv2d_window(img: &Image, x0: usize, y0: usize, w: usize, h: usize, sigma: f64, size: usize) -> Vec<u8> {
    let k = gauss_taps(sigma, size);
    let r = (size / 2) as i64;
    let mut out = Vec::with_capacity(w * h * 3);
    for y in 0..h as i64 {
        for x in 0..w as i64 {
            for c in 0..3 {
                let mut acc = 0.0;
                for dy in -r..=r {
                    for dx in -r..=r {
                        let sx = mirror(x + dx, w as i64);
                        let sy = mirror(y + dy, h as i64);
                        let wgt = k[(dy + r) as usize] * k[(dx + r) as usize];
                        acc += wgt * img.pixel(x0 + sx, y0 + sy)[c] as f64;
                    }
                }
                out.push(acc.round().clamp(0.0, 255.0) as u8);
            }
        }
    }
    out
}

/// Brute-force stride choice: enumerate candidates, keep the closest count,
/// prefer the larger stride on ties.
pub fn brute_stride(w: usize, h: usize, tile: usize, tile_num: usize) -> usize {
    let mut cands: Vec<(usize, usize)> = [tile, tile / 2, tile / 4]
        .iter()
        .map(|&s| (s, ((w - tile) / s + 1) * ((h - tile) / s + 1)))
        .collect();
    cands.sort_by_key(|&(s, k)| (k.abs_diff(tile_num), std::cmp::Reverse(s)));
    cands[0].0
}

/// Tiles (indices) whose footprint contains pixel `(px, py)`.
pub fn covering_tiles(origins: &[(usize, usize)], tile: usize, px: usize, py: usize) -> Vec<usize> {
    origins
        .iter()
        .enumerate()
        .filter(|(_, &(ox, oy))| px >= ox && px < ox + tile && py >= oy && py < oy + tile)
        .map(|(i, _)| i)
        .collect()
}

/// Independent monotone cubic (Fritsch-Carlson slopes as in scipy's
/// PchipInterpolator), evaluated pointwise.
pub fn pchip_eval(x: &[f64], y: &[f64], t: f64) -> f64 {
    let n = x.len();
    let h: Vec<f64> = (0..n - 1).map(|i| x[i + 1] - x[i]).collect();
    let del: Vec<f64> = (0..n - 1).map(|i| (y[i + 1] - y[i]) / h[i]).collect();
    let mut d = vec![0.0; n];
    if n == 2 {
        d = vec![del[0], del[0]];
    } else {
        for i in 1..n - 1 {
            if del[i - 1] == 0.0 || del[i] == 0.0 || (del[i - 1] > 0.0) != (del[i] > 0.0) {
                d[i] = 0.0;
            } else {
                let w1 = 2.0 * h[i] + h[i - 1];
                let w2 = h[i] + 2.0 * h[i - 1];
                d[i] = (w1 + w2) / (w1 / del[i - 1] + w2 / del[i]);
            }
        }
        let end = |h0: f64, h1: f64, m0: f64, m1: f64| {
            let v = ((2.0 * h0 + h1) * m0 - h0 * m1) / (h0 + h1);
            if v * m0 <= 0.0 {
                0.0
            } else if m0 * m1 < 0.0 && v.abs() > 3.0 * m0.abs() {
                3.0 * m0
            } else {
                v
            }
        };
        d[0] = end(h[0], h[1], del[0], del[1]);
        d[n - 1] = end(h[n - 2], h[n - 3], del[n - 2], del[n - 3]);
    }
    let mut i = 0;
    while i + 2 < n && t > x[i + 1] {
        i += 1;
    }
    let s = t - x[i];
    // cubic in local coordinate: y + d s + c2 s^2 + c3 s^3
    let c2 = (3.0 * del[i] - 2.0 * d[i] - d[i + 1]) / h[i];
    let c3 = (d[i] + d[i + 1] - 2.0 * del[i]) / (h[i] * h[i]);
    y[i] + d[i] * s + c2 * s * s + c3 * s * s * s
}

/// BD-rate by fine trapezoid integration of densely sampled interpolants.
pub fn bd_rate_dense(anchor: &[(f64, f64)], test: &[(f64, f64)], samples: usize) -> f64 {
    let prep = |c: &[(f64, f64)]| {
        let mut v: Vec<(f64, f64)> = c.iter().map(|&(r, q)| (q, r.log10())).collect();
        v.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap());
        v.into_iter().unzip::<f64, f64, Vec<f64>, Vec<f64>>()
    };
    let (qa, la) = prep(anchor);
    let (qt, lt) = prep(test);
    let lo = qa[0].max(qt[0]);
    let hi = qa[qa.len() - 1].min(qt[qt.len() - 1]);
    let step = (hi - lo) / samples as f64;
    let f = |q: f64| pchip_eval(&qt, &lt, q) - pchip_eval(&qa, &la, q);
    let mut integral = 0.5 * (f(lo) + f(hi));
    for i in 1..samples {
        integral += f(lo + i as f64 * step);
    }
    integral *= step;
    (10f64.powf(integral / (hi - lo)) - 1.0) * 100.0
}
