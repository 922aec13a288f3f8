//! PSNR and single-scale SSIM, on RGB or BT.601 luminance.

use crate::error::{ensure_shape, shape_bail, Result};
use crate::tensor::{Elem, Tensor};

/// Channel mode for metrics: studio-swing luminance or plain RGB.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum EvalMode {
    Y,
    Rgb,
}

impl std::fmt::Display for EvalMode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            EvalMode::Y => "y",
            EvalMode::Rgb => "rgb",
        })
    }
}

impl std::str::FromStr for EvalMode {
    type Err = crate::EdvrError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "y" => Ok(EvalMode::Y),
            "rgb" => Ok(EvalMode::Rgb),
            other => Err(crate::EdvrError::Config(format!("unknown eval mode `{other}`, expected y|rgb"))),
        }
    }
}

/// BT.601 studio-range luminance of an RGB tensor, rescaled to [0, 1]:
/// Y = (65.481 R + 128.553 G + 24.966 B + 16) / 255.
pub fn rgb_to_y<T: Elem>(img: &Tensor<T>) -> Result<Tensor<T>> {
    let [n, c, h, w] = img.dims();
    ensure_shape!(c == 3, "luminance needs a 3-channel image, got {c}");
    Ok(Tensor::from_fn([n, 1, h, w], |b, _, y, x| {
        let r = img.at(b, 0, y, x).to_f64();
        let g = img.at(b, 1, y, x).to_f64();
        let bl = img.at(b, 2, y, x).to_f64();
        T::from_f64((65.481 * r + 128.553 * g + 24.966 * bl + 16.0) / 255.0)
    }))
}

fn mse<T: Elem>(a: &Tensor<T>, b: &Tensor<T>) -> Result<f64> {
    ensure_shape!(
        a.dims() == b.dims(),
        "metric operands differ: {:?} vs {:?}",
        a.dims(),
        b.dims()
    );
    let mut acc = 0.0f64;
    for (&x, &y) in a.data().iter().zip(b.data()) {
        let d = x.to_f64() - y.to_f64();
        acc += d * d;
    }
    Ok(acc / a.numel() as f64)
}

/// Peak signal-to-noise ratio in dB for a dynamic range of 1. Identical
/// inputs report positive infinity.
pub fn psnr<T: Elem>(a: &Tensor<T>, b: &Tensor<T>, mode: EvalMode) -> Result<f64> {
    let m = match mode {
        EvalMode::Rgb => mse(a, b)?,
        EvalMode::Y => mse(&rgb_to_y(a)?, &rgb_to_y(b)?)?,
    };
    if m == 0.0 {
        return Ok(f64::INFINITY);
    }
    Ok(-10.0 * m.log10())
}

const SSIM_WINDOW: usize = 11;
const SSIM_SIGMA: f64 = 1.5;
// K1/K2 stabilizers for dynamic range 1.
const SSIM_C1: f64 = 0.01 * 0.01;
const SSIM_C2: f64 = 0.03 * 0.03;

fn ssim_kernel() -> [f64; SSIM_WINDOW] {
    let mut k = [0.0; SSIM_WINDOW];
    let c = (SSIM_WINDOW / 2) as f64;
    let mut sum = 0.0;
    for (i, v) in k.iter_mut().enumerate() {
        let d = i as f64 - c;
        *v = (-d * d / (2.0 * SSIM_SIGMA * SSIM_SIGMA)).exp();
        sum += *v;
    }
    for v in &mut k {
        *v /= sum;
    }
    k
}

/// Valid-mode separable correlation of one plane with the SSIM window.
fn windowed(plane: &[f64], h: usize, w: usize, k: &[f64; SSIM_WINDOW]) -> Vec<f64> {
    let ow = w - SSIM_WINDOW + 1;
    let oh = h - SSIM_WINDOW + 1;
    let mut horiz = vec![0.0; h * ow];
    for y in 0..h {
        for x in 0..ow {
            let mut acc = 0.0;
            for (i, kv) in k.iter().enumerate() {
                acc += kv * plane[y * w + x + i];
            }
            horiz[y * ow + x] = acc;
        }
    }
    let mut out = vec![0.0; oh * ow];
    for y in 0..oh {
        for x in 0..ow {
            let mut acc = 0.0;
            for (i, kv) in k.iter().enumerate() {
                acc += kv * horiz[(y + i) * ow + x];
            }
            out[y * ow + x] = acc;
        }
    }
    out
}

/// Mean local SSIM over valid window positions of a single-channel pair.
pub fn ssim<T: Elem>(a: &Tensor<T>, b: &Tensor<T>) -> Result<f64> {
    let [n, c, h, w] = a.dims();
    ensure_shape!(
        a.dims() == b.dims(),
        "metric operands differ: {:?} vs {:?}",
        a.dims(),
        b.dims()
    );
    ensure_shape!(c == 1, "ssim expects a single channel, got {c}");
    if h < SSIM_WINDOW || w < SSIM_WINDOW {
        shape_bail!("image {h}x{w} smaller than the {SSIM_WINDOW}-tap ssim window");
    }
    let k = ssim_kernel();
    let (c1, c2) = (SSIM_C1, SSIM_C2);
    let mut total = 0.0;
    let mut count = 0usize;
    for img in 0..n {
        let plane = |t: &Tensor<T>| -> Vec<f64> {
            let mut p = Vec::with_capacity(h * w);
            for y in 0..h {
                for x in 0..w {
                    p.push(t.at(img, 0, y, x).to_f64());
                }
            }
            p
        };
        let pa = plane(a);
        let pb = plane(b);
        let sq = |p: &[f64]| p.iter().map(|v| v * v).collect::<Vec<_>>();
        let prod: Vec<f64> = pa.iter().zip(&pb).map(|(x, y)| x * y).collect();
        let mu_a = windowed(&pa, h, w, &k);
        let mu_b = windowed(&pb, h, w, &k);
        let m_aa = windowed(&sq(&pa), h, w, &k);
        let m_bb = windowed(&sq(&pb), h, w, &k);
        let m_ab = windowed(&prod, h, w, &k);
        for i in 0..mu_a.len() {
            let (ma, mb) = (mu_a[i], mu_b[i]);
            let va = m_aa[i] - ma * ma;
            let vb = m_bb[i] - mb * mb;
            let cov = m_ab[i] - ma * mb;
            let s = ((2.0 * ma * mb + c1) * (2.0 * cov + c2))
                / ((ma * ma + mb * mb + c1) * (va + vb + c2));
            total += s;
            count += 1;
        }
    }
    Ok(total / count as f64)
}

/// SSIM under a channel mode: luminance, or the mean of per-channel scores.
pub fn ssim_mode<T: Elem>(a: &Tensor<T>, b: &Tensor<T>, mode: EvalMode) -> Result<f64> {
    match mode {
        EvalMode::Y => ssim(&rgb_to_y(a)?, &rgb_to_y(b)?),
        EvalMode::Rgb => {
            let [n, c, h, w] = a.dims();
            ensure_shape!(
                a.dims() == b.dims(),
                "metric operands differ: {:?} vs {:?}",
                a.dims(),
                b.dims()
            );
            let chan = |t: &Tensor<T>, ch: usize| {
                Tensor::from_fn([n, 1, h, w], |bb, _, y, x| t.at(bb, ch, y, x))
            };
            let mut total = 0.0;
            for ch in 0..c {
                total += ssim(&chan(a, ch), &chan(b, ch))?;
            }
            Ok(total / c as f64)
        }
    }
}

/// Per-frame scores plus their means, printable as
/// `clip_name psnr_db ssim mode` lines (the `mean` row last).
#[derive(Clone, Debug)]
pub struct MetricReport {
    pub frames: Vec<(String, f64, f64)>,
    pub mean_psnr: f64,
    pub mean_ssim: f64,
    pub mode: EvalMode,
}

impl MetricReport {
    pub fn from_pairs<T: Elem>(
        pairs: &[(String, Tensor<T>, Tensor<T>)],
        mode: EvalMode,
    ) -> Result<Self> {
        ensure_shape!(!pairs.is_empty(), "no frames to score");
        let mut frames = Vec::with_capacity(pairs.len());
        let (mut psum, mut ssum) = (0.0, 0.0);
        for (name, a, b) in pairs {
            let p = psnr(a, b, mode)?;
            let s = ssim_mode(a, b, mode)?;
            psum += p;
            ssum += s;
            frames.push((name.clone(), p, s));
        }
        let n = frames.len() as f64;
        Ok(Self { frames, mean_psnr: psum / n, mean_ssim: ssum / n, mode })
    }
}

impl std::fmt::Display for MetricReport {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        for (name, p, s) in &self.frames {
            writeln!(f, "{name} {p:.4} {s:.6} {}", self.mode)?;
        }
        write!(f, "mean {:.4} {:.6} {}", self.mean_psnr, self.mean_ssim, self.mode)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn noisy(base: &Tensor<f64>, amp: f64, seed: u64) -> Tensor<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        base.map(|v| (v + rng.random_range(-amp..amp)).clamp(0.0, 1.0))
    }

    fn smooth(n: usize, c: usize, h: usize, w: usize) -> Tensor<f64> {
        Tensor::from_fn([n, c, h, w], |_, ch, y, x| {
            0.5 + 0.3 * ((0.3 * y as f64 + 0.2 * x as f64 + ch as f64).sin())
        })
    }

    #[test]
    fn luminance_endpoints() {
        let solid = |r: f64, g: f64, b: f64| {
            Tensor::from_fn([1, 3, 2, 2], |_, c, _, _| [r, g, b][c])
        };
        let check = |img: Tensor<f64>, want: f64| {
            let y = rgb_to_y(&img).unwrap();
            assert_eq!(y.dims(), [1, 1, 2, 2]);
            for &v in y.data() {
                assert!((v - want).abs() < 1e-9, "got {v}, want {want}");
            }
        };
        check(solid(0.0, 0.0, 0.0), 16.0 / 255.0);
        check(solid(1.0, 1.0, 1.0), 235.0 / 255.0);
        check(solid(0.0, 1.0, 0.0), (128.553 + 16.0) / 255.0);
    }

    #[test]
    fn luminance_is_affine() {
        let a = smooth(1, 3, 6, 6);
        let b = a.map(|v| 1.0 - v);
        let alpha = 0.37;
        let mixed = Tensor::from_fn(a.dims(), |bb, c, y, x| {
            alpha * a.at(bb, c, y, x) + (1.0 - alpha) * b.at(bb, c, y, x)
        });
        let ya = rgb_to_y(&a).unwrap();
        let yb = rgb_to_y(&b).unwrap();
        let ym = rgb_to_y(&mixed).unwrap();
        for i in 0..ym.numel() {
            let want = alpha * ya.data()[i] + (1.0 - alpha) * yb.data()[i];
            assert!((ym.data()[i] - want).abs() < 1e-9);
        }
    }

    #[test]
    fn psnr_pinned_values() {
        let a: Tensor<f64> = Tensor::zeros([1, 3, 4, 4]);
        let b = Tensor::full([1, 3, 4, 4], 16.0 / 255.0);
        let p = psnr(&a, &b, EvalMode::Rgb).unwrap();
        assert!((p - 20.0 * (255.0f64 / 16.0).log10()).abs() < 1e-9, "got {p}");
        assert!((p - 24.05).abs() < 0.01);
        let ones = Tensor::full([1, 3, 4, 4], 1.0);
        assert!(psnr(&a, &ones, EvalMode::Rgb).unwrap().abs() < 1e-12);
        assert!(psnr(&a, &a, EvalMode::Rgb).unwrap().is_infinite());
        assert!(psnr(&a, &a, EvalMode::Y).unwrap().is_infinite());
    }

    #[test]
    fn psnr_is_symmetric_and_noise_monotone() {
        let base = smooth(1, 3, 12, 12);
        let mut prev = f64::INFINITY;
        for (i, amp) in [0.01, 0.05, 0.2].iter().enumerate() {
            let n = noisy(&base, *amp, 40 + i as u64);
            let p = psnr(&base, &n, EvalMode::Rgb).unwrap();
            let q = psnr(&n, &base, EvalMode::Rgb).unwrap();
            assert_eq!(p, q);
            assert!(p < prev, "psnr not decreasing with noise: {p} vs {prev}");
            prev = p;
        }
    }

    #[test]
    fn ssim_identical_is_exactly_one() {
        let a = smooth(1, 1, 16, 16);
        assert_eq!(ssim(&a, &a).unwrap(), 1.0);
    }

    #[test]
    fn ssim_binary_negation_is_negative() {
        let a: Tensor<f64> =
            Tensor::from_fn([1, 1, 16, 16], |_, _, y, x| ((y / 2 + x / 2) % 2) as f64);
        let b = a.map(|v| 1.0 - v);
        let s = ssim(&a, &b).unwrap();
        assert!(s < 0.0, "ssim of negated binary image was {s}");
    }

    #[test]
    fn ssim_is_continuous_near_identity() {
        let a = smooth(1, 1, 16, 16).map(|v| v.clamp(0.05, 0.95));
        let b = a.map(|v| v + 1e-4);
        let s = ssim(&a, &b).unwrap();
        assert!(s > 0.999, "ssim {s}");
        assert_eq!(ssim(&a, &b).unwrap(), ssim(&b, &a).unwrap());
    }

    #[test]
    fn ssim_rejects_undersized_images() {
        let a = smooth(1, 1, 10, 16);
        assert!(ssim(&a, &a).is_err());
        let b = smooth(1, 2, 16, 16);
        assert!(ssim(&b, &b).is_err());
    }

    #[test]
    fn rgb_ssim_is_the_channel_mean() {
        let a = smooth(1, 3, 16, 16);
        let b = noisy(&a, 0.05, 7);
        let whole = ssim_mode(&a, &b, EvalMode::Rgb).unwrap();
        let chan = |t: &Tensor<f64>, ch: usize| {
            Tensor::from_fn([1, 1, 16, 16], |_, _, y, x| t.at(0, ch, y, x))
        };
        let mut mean = 0.0;
        for c in 0..3 {
            mean += ssim(&chan(&a, c), &chan(&b, c)).unwrap();
        }
        mean /= 3.0;
        assert!((whole - mean).abs() < 1e-12);
    }

    #[test]
    fn report_lines_are_stable() {
        let a = smooth(1, 3, 16, 16);
        let b = noisy(&a, 0.02, 3);
        let pairs = vec![
            ("frame_00000000".to_string(), a.clone(), b.clone()),
            ("frame_00000001".to_string(), a.clone(), a.clone()),
        ];
        let report = MetricReport::from_pairs(&pairs, EvalMode::Y).unwrap();
        let text = report.to_string();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines.len(), 3);
        assert!(lines[0].starts_with("frame_00000000 "));
        assert!(lines[1].contains(" inf "), "{}", lines[1]);
        assert!(lines[2].starts_with("mean "));
        assert!(lines.iter().all(|l| l.ends_with(" y")));
        assert!(report.mean_psnr.is_infinite());
    }
}
