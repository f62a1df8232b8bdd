use crate::error::{Error, Result};
use crate::image::Image;

pub const WINDOW: usize = 11;
pub const SIGMA: f64 = 1.5;
const K1: f64 = 0.01;
const K2: f64 = 0.03;

/// Pixel types the photometric losses accept, viewed as independent channels.
pub trait Channels: Copy {
    const COUNT: usize;
    fn channel(self, c: usize) -> f64;
}

impl Channels for f64 {
    const COUNT: usize = 1;
    fn channel(self, _: usize) -> f64 {
        self
    }
}

impl Channels for [f64; 3] {
    const COUNT: usize = 3;
    fn channel(self, c: usize) -> f64 {
        self[c]
    }
}

/// Normalized 1-d Gaussian taps; the 2-d window is their outer product.
pub fn gaussian_taps() -> [f64; WINDOW] {
    let half = (WINDOW / 2) as f64;
    let mut g = [0.0; WINDOW];
    for (i, v) in g.iter_mut().enumerate() {
        let x = i as f64 - half;
        *v = (-x * x / (2.0 * SIGMA * SIGMA)).exp();
    }
    let s: f64 = g.iter().sum();
    g.map(|v| v / s)
}

/// Same-size separable filtering with zeros outside the image.
fn blur(src: &[f64], w: usize, h: usize, taps: &[f64; WINDOW]) -> Vec<f64> {
    let r = (WINDOW / 2) as isize;
    let mut tmp = vec![0.0; w * h];
    for y in 0..h {
        for x in 0..w {
            let mut acc = 0.0;
            for (k, t) in taps.iter().enumerate() {
                let xx = x as isize + k as isize - r;
                if xx >= 0 && (xx as usize) < w {
                    acc += t * src[y * w + xx as usize];
                }
            }
            tmp[y * w + x] = acc;
        }
    }
    let mut out = vec![0.0; w * h];
    for y in 0..h {
        for x in 0..w {
            let mut acc = 0.0;
            for (k, t) in taps.iter().enumerate() {
                let yy = y as isize + k as isize - r;
                if yy >= 0 && (yy as usize) < h {
                    acc += t * tmp[yy as usize * w + x];
                }
            }
            out[y * w + x] = acc;
        }
    }
    out
}

fn check_shapes<T: Copy>(a: &Image<T>, b: &Image<T>) -> Result<()> {
    if !a.same_shape(b) {
        return Err(Error::ShapeMismatch(format!("{:?} vs {:?}", a.dims(), b.dims())));
    }
    if a.is_empty() {
        return Err(Error::DegenerateInput("empty image".into()));
    }
    Ok(())
}

fn ssim_channel(a: &[f64], b: &[f64], w: usize, h: usize, taps: &[f64; WINDOW]) -> f64 {
    let c1 = K1 * K1;
    let c2 = K2 * K2;
    let mu_a = blur(a, w, h, taps);
    let mu_b = blur(b, w, h, taps);
    let sq = |x: &[f64], y: &[f64]| x.iter().zip(y).map(|(p, q)| p * q).collect::<Vec<_>>();
    let aa = blur(&sq(a, a), w, h, taps);
    let bb = blur(&sq(b, b), w, h, taps);
    let ab = blur(&sq(a, b), w, h, taps);
    let mut sum = 0.0;
    for i in 0..w * h {
        let (ma, mb) = (mu_a[i], mu_b[i]);
        let va = aa[i] - ma * ma;
        let vb = bb[i] - mb * mb;
        let cov = ab[i] - ma * mb;
        sum += ((2.0 * ma * mb + c1) * (2.0 * cov + c2)) / ((ma * ma + mb * mb + c1) * (va + vb + c2));
    }
    sum / (w * h) as f64
}

/// Mean SSIM over the full map, averaged over channels, for intensities in [0, 1].
pub fn ssim<T: Channels>(a: &Image<T>, b: &Image<T>) -> Result<f64> {
    check_shapes(a, b)?;
    let (w, h) = a.dims();
    let taps = gaussian_taps();
    let mut total = 0.0;
    for c in 0..T::COUNT {
        let pa: Vec<f64> = a.pixels().iter().map(|p| p.channel(c)).collect();
        let pb: Vec<f64> = b.pixels().iter().map(|p| p.channel(c)).collect();
        total += ssim_channel(&pa, &pb, w, h, &taps);
    }
    Ok(total / T::COUNT as f64)
}

/// Mean absolute difference over all pixels and channels.
pub fn l1<T: Channels>(a: &Image<T>, b: &Image<T>) -> Result<f64> {
    check_shapes(a, b)?;
    let mut sum = 0.0;
    for (p, q) in a.pixels().iter().zip(b.pixels()) {
        for c in 0..T::COUNT {
            sum += (p.channel(c) - q.channel(c)).abs();
        }
    }
    Ok(sum / (a.len() * T::COUNT) as f64)
}

/// `(1 - lambda) * L1 + lambda * (1 - SSIM) / 2`.
pub fn loss_3dgs<T: Channels>(i: &Image<T>, i_hat: &Image<T>, lambda: f64) -> Result<f64> {
    if !(0.0..=1.0).contains(&lambda) {
        return Err(Error::Config(format!("photometric weight {lambda} outside [0, 1]")));
    }
    let l1 = l1(i, i_hat)?;
    if lambda == 0.0 {
        return Ok(l1);
    }
    let dssim = (1.0 - ssim(i, i_hat)?) / 2.0;
    Ok((1.0 - lambda) * l1 + lambda * dssim)
}

#[cfg(test)]
mod tests {
    use super::*;

    /// Direct 2-d window sums, one pixel at a time.
    fn reference_ssim(a: &Image<f64>, b: &Image<f64>) -> f64 {
        let (w, h) = a.dims();
        let g = gaussian_taps();
        let at = |img: &Image<f64>, x: isize, y: isize| {
            if x < 0 || y < 0 || x >= w as isize || y >= h as isize {
                0.0
            } else {
                img.get(x as usize, y as usize)
            }
        };
        let (c1, c2) = (0.0001, 0.0009);
        let mut total = 0.0;
        for y in 0..h as isize {
            for x in 0..w as isize {
                let (mut ma, mut mb, mut saa, mut sbb, mut sab) = (0.0, 0.0, 0.0, 0.0, 0.0);
                for dy in -5..=5isize {
                    for dx in -5..=5isize {
                        let wt = g[(dx + 5) as usize] * g[(dy + 5) as usize];
                        let (p, q) = (at(a, x + dx, y + dy), at(b, x + dx, y + dy));
                        ma += wt * p;
                        mb += wt * q;
                        saa += wt * p * p;
                        sbb += wt * q * q;
                        sab += wt * p * q;
                    }
                }
                let num = (2.0 * ma * mb + c1) * (2.0 * (sab - ma * mb) + c2);
                let den = (ma * ma + mb * mb + c1) * (saa - ma * ma + sbb - mb * mb + c2);
                total += num / den;
            }
        }
        total / (w * h) as f64
    }

    fn checker(w: usize, h: usize, cell: usize, shift: usize) -> Image<f64> {
        Image::from_fn(w, h, |x, y| (((x + shift) / cell + y / cell) % 2) as f64)
    }

    #[test]
    fn identities() {
        let img = Image::from_fn(20, 15, |x, y| ((x * 7 + y * 3) % 11) as f64 / 10.0);
        assert_eq!(loss_3dgs(&img, &img, 0.2).unwrap(), 0.0);
        let bin = checker(16, 16, 3, 0);
        let inv = bin.map(|v| 1.0 - v);
        assert_eq!(loss_3dgs(&bin, &inv, 0.0).unwrap(), 1.0);
        let other = Image::filled(20, 14, 0.0);
        assert!(matches!(loss_3dgs(&img, &other, 0.2), Err(Error::ShapeMismatch(_))));
    }

    #[test]
    fn checkerboard_matches_reference() {
        let a = checker(32, 24, 4, 0);
        let b = checker(32, 24, 4, 2);
        let reference = 0.8 * l1(&a, &b).unwrap() + 0.2 * (1.0 - reference_ssim(&a, &b)) / 2.0;
        let got = loss_3dgs(&a, &b, 0.2).unwrap();
        assert!((got - reference).abs() < 1e-6, "{got} vs {reference}");
        assert_eq!(got, loss_3dgs(&b, &a, 0.2).unwrap());
    }

    #[test]
    fn rgb_averages_channels() {
        let a = checker(12, 12, 2, 0);
        let b = checker(12, 12, 2, 1);
        let rgb = |g: &Image<f64>, s: f64| g.map(|v| [v, v * s, 0.5]);
        let s_rgb = ssim(&rgb(&a, 0.5), &rgb(&b, 0.5)).unwrap();
        let expect = (ssim(&a, &b).unwrap() + ssim(&a.map(|v| v * 0.5), &b.map(|v| v * 0.5)).unwrap() + 1.0) / 3.0;
        assert!((s_rgb - expect).abs() < 1e-12);
    }
}
