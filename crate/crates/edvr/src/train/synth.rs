//! Synthetic video clips with exact motion ground truth.
//!
//! Textures are analytic functions of continuous coordinates, so a shifted
//! frame is rendered exactly (no resampling error). Frame i samples the
//! texture at p + d_i: content appears moved by -d_i on screen, and aligning
//! frame i onto the reference needs sampling offsets of -d_i. Displacements
//! are stated in input-frame pixels; the x4 SR track renders at 4x resolution
//! with 4x the shift, then degrades.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{config_bail, ensure_config, ensure_shape, Result};
use crate::tensor::{Elem, Tensor};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum TextureKind {
    Checker,
    Sinusoid,
    RandomSmooth,
}

impl std::fmt::Display for TextureKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            TextureKind::Checker => "checker",
            TextureKind::Sinusoid => "sinusoid",
            TextureKind::RandomSmooth => "random_smooth",
        })
    }
}

impl std::str::FromStr for TextureKind {
    type Err = crate::EdvrError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "checker" => Ok(TextureKind::Checker),
            "sinusoid" => Ok(TextureKind::Sinusoid),
            "random_smooth" => Ok(TextureKind::RandomSmooth),
            other => Err(crate::EdvrError::Config(format!("unknown texture kind `{other}`"))),
        }
    }
}

/// The four degradation tracks.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Track {
    CleanSr,
    BlurSr,
    CleanDeblur,
    CompressionDeblur,
}

impl std::fmt::Display for Track {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Track::CleanSr => "clean_sr",
            Track::BlurSr => "blur_sr",
            Track::CleanDeblur => "clean_deblur",
            Track::CompressionDeblur => "compression_deblur",
        })
    }
}

impl std::str::FromStr for Track {
    type Err = crate::EdvrError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "clean_sr" => Ok(Track::CleanSr),
            "blur_sr" => Ok(Track::BlurSr),
            "clean_deblur" => Ok(Track::CleanDeblur),
            "compression_deblur" => Ok(Track::CompressionDeblur),
            other => Err(crate::EdvrError::Config(format!("unknown track `{other}`"))),
        }
    }
}

impl Track {
    pub fn downsample(&self) -> usize {
        match self {
            Track::CleanSr | Track::BlurSr => 4,
            Track::CleanDeblur | Track::CompressionDeblur => 1,
        }
    }
}

/// Everything needed to render one clip deterministically.
#[derive(Clone, Debug, PartialEq)]
pub struct SynthClipSpec {
    pub texture: TextureKind,
    pub frames: usize,
    /// Input-frame size (what the network consumes).
    pub height: usize,
    pub width: usize,
    /// Per-frame (dy, dx) in input-frame pixels; the center frame must be
    /// (0, 0) (it is the restoration target).
    pub displacements: Vec<(f64, f64)>,
    /// Gaussian blur applied at render resolution; 0 disables.
    pub blur_sigma: f64,
    /// 1 (restoration) or 4 (SR; renders at 4x and downsamples bicubically).
    pub downsample: usize,
    /// Uniform noise amplitude; each pixel gets U(-noise, noise).
    pub noise: f64,
    /// Posterization levels approximating compression; 0 disables.
    pub quantize_levels: u32,
}

impl SynthClipSpec {
    pub fn validate(&self) -> Result<()> {
        ensure_config!(self.frames >= 1, "clip needs at least one frame");
        ensure_config!(
            self.displacements.len() == self.frames,
            "{} displacement(s) for {} frame(s)",
            self.displacements.len(),
            self.frames
        );
        let center = self.displacements[self.frames / 2];
        if center != (0.0, 0.0) {
            config_bail!("reference-frame displacement must be (0, 0), got {center:?}");
        }
        ensure_config!(
            self.downsample == 1 || self.downsample == 4,
            "downsample must be 1 or 4, got {}",
            self.downsample
        );
        ensure_config!(self.height > 0 && self.width > 0, "empty clip geometry");
        ensure_config!(self.blur_sigma >= 0.0, "negative blur sigma");
        ensure_config!(self.noise >= 0.0, "negative noise level");
        Ok(())
    }
}

#[derive(Clone, Debug)]
pub struct Wave {
    pub amp: f64,
    pub fy: f64,
    pub fx: f64,
    pub phase: f64,
}

/// An analytic texture over continuous coordinates, values within (0, 1).
#[derive(Clone, Debug)]
pub enum Texture {
    /// Sum of plane waves per channel around a 0.5 base.
    Waves(Vec<Vec<Wave>>),
    /// Soft checkerboard: tanh-sharpened sine grid, identical channels.
    Checker { period: f64, sharpness: f64, oy: f64, ox: f64 },
}

impl Texture {
    pub fn eval(&self, c: usize, y: f64, x: f64) -> f64 {
        match self {
            Texture::Waves(channels) => {
                let mut v = 0.5;
                for w in &channels[c] {
                    v += w.amp * (w.fy * y + w.fx * x + w.phase).sin();
                }
                v
            }
            Texture::Checker { period, sharpness, oy, ox } => {
                let f = std::f64::consts::TAU / period;
                let gy = (sharpness * (f * (y + oy)).sin()).tanh();
                let gx = (sharpness * (f * (x + ox)).sin()).tanh();
                // The odd (gy + gx) term flips sign under a half-period
                // diagonal shift, so the pattern has no translation symmetry
                // shorter than a full period and motion stays unambiguous.
                0.5 + 0.35 * gy * gx + 0.05 * (gy + gx)
            }
        }
    }
}

/// Draw a texture. Wave periods are quoted in input-frame pixels and scaled
/// by `downsample` to render-resolution frequencies; they stay long enough
/// that the correlation oracle has a unique peak within its search window.
pub fn make_texture(kind: TextureKind, downsample: usize, rng: &mut ChaCha8Rng) -> Texture {
    let ds = downsample as f64;
    let waves = |count: usize, total_amp: f64, p_lo: f64, p_hi: f64, rng: &mut ChaCha8Rng| {
        let mut channels = Vec::with_capacity(3);
        for _ in 0..3 {
            // Spread wave orientations evenly (mod pi) with jitter so no
            // motion direction slides unobserved along a shared crest.
            let base = rng.random_range(0.0..std::f64::consts::PI);
            let sector = std::f64::consts::PI / count as f64;
            let mut raw: Vec<(f64, f64, f64, f64)> = Vec::with_capacity(count);
            let mut amp_sum = 0.0;
            for i in 0..count {
                let amp: f64 = rng.random_range(0.3..1.0);
                let period = rng.random_range(p_lo..p_hi) * ds;
                let jitter = rng.random_range(-0.25 * sector..0.25 * sector);
                let angle = base + i as f64 * sector + jitter;
                let phase = rng.random_range(0.0..std::f64::consts::TAU);
                amp_sum += amp;
                raw.push((amp, period, angle, phase));
            }
            channels.push(
                raw.into_iter()
                    .map(|(amp, period, angle, phase)| {
                        let f = std::f64::consts::TAU / period;
                        Wave {
                            amp: amp / amp_sum * total_amp,
                            fy: f * angle.sin(),
                            fx: f * angle.cos(),
                            phase,
                        }
                    })
                    .collect(),
            );
        }
        Texture::Waves(channels)
    };
    match kind {
        TextureKind::Sinusoid => waves(2, 0.35, 24.0, 48.0, rng),
        TextureKind::RandomSmooth => waves(8, 0.42, 12.0, 64.0, rng),
        TextureKind::Checker => Texture::Checker {
            period: rng.random_range(16.0..32.0) * ds,
            sharpness: 2.5,
            oy: rng.random_range(0.0..32.0),
            ox: rng.random_range(0.0..32.0),
        },
    }
}

fn render(texture: &Texture, h: usize, w: usize, shift: (f64, f64)) -> Tensor<f64> {
    Tensor::from_fn([1, 3, h, w], |_, c, y, x| {
        texture.eval(c, y as f64 + shift.0, x as f64 + shift.1)
    })
}

/// Separable discrete Gaussian, radius ceil(3 sigma), kernel renormalized
/// where it overhangs the border.
pub fn gaussian_blur(img: &Tensor<f64>, sigma: f64) -> Tensor<f64> {
    if sigma <= 0.0 {
        return img.clone();
    }
    let r = (3.0 * sigma).ceil() as isize;
    let kernel: Vec<f64> =
        (-r..=r).map(|k| (-((k * k) as f64) / (2.0 * sigma * sigma)).exp()).collect();
    let [n, c, h, w] = img.dims();
    let pass = |src: &Tensor<f64>, horizontal: bool| {
        Tensor::from_fn([n, c, h, w], |b, ch, y, x| {
            let (pos, len) = if horizontal { (x, w) } else { (y, h) };
            let mut acc = 0.0;
            let mut norm = 0.0;
            for (ki, kv) in kernel.iter().enumerate() {
                let q = pos as isize + ki as isize - r;
                if q < 0 || q >= len as isize {
                    continue;
                }
                let v = if horizontal {
                    src.at(b, ch, y, q as usize)
                } else {
                    src.at(b, ch, q as usize, x)
                };
                acc += kv * v;
                norm += kv;
            }
            acc / norm
        })
    };
    pass(&pass(img, true), false)
}

fn cubic(u: f64) -> f64 {
    // Keys kernel, a = -0.5.
    let u = u.abs();
    if u <= 1.0 {
        (1.5 * u - 2.5) * u * u + 1.0
    } else if u < 2.0 {
        ((-0.5 * u + 2.5) * u - 4.0) * u + 2.0
    } else {
        0.0
    }
}

/// Antialiased bicubic downsampling by an integer factor: the cubic kernel is
/// stretched by the factor, weights renormalized, borders clamped.
pub fn bicubic_downsample(img: &Tensor<f64>, factor: usize) -> Result<Tensor<f64>> {
    if factor == 1 {
        return Ok(img.clone());
    }
    let [n, c, h, w] = img.dims();
    ensure_shape!(
        h % factor == 0 && w % factor == 0,
        "bicubic input {h}x{w} not divisible by factor {factor}"
    );
    let f = factor as f64;
    let taps = |len: usize| -> Vec<(usize, Vec<(usize, f64)>)> {
        (0..len / factor)
            .map(|o| {
                let center = (o as f64 + 0.5) * f - 0.5;
                let lo = (center - 2.0 * f).ceil() as isize;
                let hi = (center + 2.0 * f).floor() as isize;
                let mut entries = Vec::new();
                let mut norm = 0.0;
                for k in lo..=hi {
                    let wgt = cubic((center - k as f64) / f);
                    if wgt == 0.0 {
                        continue;
                    }
                    norm += wgt;
                    let idx = k.clamp(0, len as isize - 1) as usize;
                    entries.push((idx, wgt));
                }
                for e in &mut entries {
                    e.1 /= norm;
                }
                (o, entries)
            })
            .collect()
    };
    let xt = taps(w);
    let horizontal = {
        let mut out = Tensor::zeros([n, c, h, w / factor]);
        let mut i = 0;
        for b in 0..n {
            for ch in 0..c {
                for y in 0..h {
                    for (_, entries) in &xt {
                        let mut acc = 0.0;
                        for &(k, wgt) in entries {
                            acc += wgt * img.at(b, ch, y, k);
                        }
                        out.set(i, acc);
                        i += 1;
                    }
                }
            }
        }
        out
    };
    let yt = taps(h);
    let mut out = Tensor::zeros([n, c, h / factor, w / factor]);
    let mut i = 0;
    for b in 0..n {
        for ch in 0..c {
            for (_, entries) in &yt {
                for x in 0..w / factor {
                    let mut acc = 0.0;
                    for &(k, wgt) in entries {
                        acc += wgt * horizontal.at(b, ch, k, x);
                    }
                    out.set(i, acc);
                    i += 1;
                }
            }
        }
    }
    Ok(out)
}

/// Bicubic upsampling by an integer factor, the classical baseline for the
/// super-resolution tracks. The kernel is not stretched (interpolation, not
/// antialiasing); borders are clamped and weights renormalized there.
pub fn bicubic_upsample(img: &Tensor<f64>, factor: usize) -> Result<Tensor<f64>> {
    if factor == 1 {
        return Ok(img.clone());
    }
    let [n, c, h, w] = img.dims();
    let f = factor as f64;
    let taps = |len: usize| -> Vec<Vec<(usize, f64)>> {
        (0..len * factor)
            .map(|o| {
                let center = (o as f64 + 0.5) / f - 0.5;
                let lo = (center - 2.0).ceil() as isize;
                let hi = (center + 2.0).floor() as isize;
                let mut entries = Vec::new();
                let mut norm = 0.0;
                for k in lo..=hi {
                    let wgt = cubic(center - k as f64);
                    if wgt == 0.0 {
                        continue;
                    }
                    norm += wgt;
                    let idx = k.clamp(0, len as isize - 1) as usize;
                    entries.push((idx, wgt));
                }
                for e in &mut entries {
                    e.1 /= norm;
                }
                entries
            })
            .collect()
    };
    let xt = taps(w);
    let horizontal = {
        let mut out = Tensor::zeros([n, c, h, w * factor]);
        let mut i = 0;
        for b in 0..n {
            for ch in 0..c {
                for y in 0..h {
                    for entries in &xt {
                        let mut acc = 0.0;
                        for &(k, wgt) in entries {
                            acc += wgt * img.at(b, ch, y, k);
                        }
                        out.set(i, acc);
                        i += 1;
                    }
                }
            }
        }
        out
    };
    let yt = taps(h);
    let mut out = Tensor::zeros([n, c, h * factor, w * factor]);
    let mut i = 0;
    for b in 0..n {
        for ch in 0..c {
            for entries in &yt {
                for x in 0..w * factor {
                    let mut acc = 0.0;
                    for &(k, wgt) in entries {
                        acc += wgt * horizontal.at(b, ch, k, x);
                    }
                    out.set(i, acc);
                    i += 1;
                }
            }
        }
    }
    Ok(out)
}

/// Render one clip. Returns (frame-stack (F, 3, h, w), clean full-resolution
/// target (1, 3, H, W), the displacement oracle).
pub fn generate_synth_clip<T: Elem>(
    spec: &SynthClipSpec,
    seed: u64,
) -> Result<(Tensor<T>, Tensor<T>, Vec<(f64, f64)>)> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let texture = make_texture(spec.texture, spec.downsample, &mut rng);
    let ds = spec.downsample;
    let (hh, hw) = (spec.height * ds, spec.width * ds);
    let target = render(&texture, hh, hw, (0.0, 0.0));
    let mut clip = Vec::with_capacity(spec.frames * 3 * spec.height * spec.width);
    for &(dy, dx) in &spec.displacements {
        let mut frame = render(&texture, hh, hw, (dy * ds as f64, dx * ds as f64));
        if spec.blur_sigma > 0.0 {
            frame = gaussian_blur(&frame, spec.blur_sigma);
        }
        if ds > 1 {
            frame = bicubic_downsample(&frame, ds)?;
        }
        let mut data = frame.to_vec();
        if spec.noise > 0.0 {
            for v in &mut data {
                *v += rng.random_range(-spec.noise..spec.noise);
            }
        }
        if spec.quantize_levels > 1 {
            let q = (spec.quantize_levels - 1) as f64;
            for v in &mut data {
                *v = (*v * q).round() / q;
            }
        }
        for v in &mut data {
            *v = v.clamp(0.0, 1.0);
        }
        clip.extend(data);
    }
    let clip = Tensor::new([spec.frames, 3, spec.height, spec.width], clip)?;
    Ok((clip.convert::<T>(), target.convert::<T>(), spec.displacements.clone()))
}

/// Clean full-resolution target for every frame of the clip, (F, 3, H, W).
/// Row f is the texture at frame f's displacement with no blur, noise, or
/// quantization; the same (spec, seed) pair that fed [`generate_synth_clip`]
/// reproduces the same texture.
pub fn generate_synth_targets<T: Elem>(spec: &SynthClipSpec, seed: u64) -> Result<Tensor<T>> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let texture = make_texture(spec.texture, spec.downsample, &mut rng);
    let ds = spec.downsample;
    let (hh, hw) = (spec.height * ds, spec.width * ds);
    let mut out = Vec::with_capacity(spec.frames * 3 * hh * hw);
    for &(dy, dx) in &spec.displacements {
        out.extend(render(&texture, hh, hw, (dy * ds as f64, dx * ds as f64)).to_vec());
    }
    Ok(Tensor::new([spec.frames, 3, hh, hw], out)?.convert::<T>())
}

/// Interleave per-clip frame stacks into the frame-major batch layout the
/// model consumes: row f*B + b is frame f of clip b.
pub fn stack_clips<T: Elem>(clips: &[Tensor<T>]) -> Result<Tensor<T>> {
    ensure_shape!(!clips.is_empty(), "no clips to stack");
    let [f, c, h, w] = clips[0].dims();
    let b = clips.len();
    for clip in clips {
        ensure_shape!(
            clip.dims() == [f, c, h, w],
            "clip shape mismatch in batch: {:?} vs {:?}",
            clip.dims(),
            [f, c, h, w]
        );
    }
    let row = c * h * w;
    let mut data = Vec::with_capacity(f * b * row);
    for fi in 0..f {
        for clip in clips {
            data.extend_from_slice(&clip.data()[fi * row..(fi + 1) * row]);
        }
    }
    Tensor::new([f * b, c, h, w], data)
}

/// Stack single-frame targets along the batch axis.
pub fn stack_targets<T: Elem>(targets: &[Tensor<T>]) -> Result<Tensor<T>> {
    ensure_shape!(!targets.is_empty(), "no targets to stack");
    let [one, c, h, w] = targets[0].dims();
    ensure_shape!(one == 1, "targets must be single-frame");
    let mut data = Vec::with_capacity(targets.len() * c * h * w);
    for t in targets {
        ensure_shape!(t.dims() == [1, c, h, w], "target shape mismatch in batch");
        data.extend_from_slice(t.data());
    }
    Tensor::new([targets.len(), c, h, w], data)
}

/// Draw a clip spec for one track. Non-reference displacements are uniform in
/// [-max_motion, max_motion] per axis.
pub fn sample_clip_spec(
    track: Track,
    texture: TextureKind,
    frames: usize,
    size: usize,
    max_motion: f64,
    rng: &mut ChaCha8Rng,
) -> SynthClipSpec {
    let center = frames / 2;
    let displacements: Vec<(f64, f64)> = (0..frames)
        .map(|i| {
            if i == center {
                (0.0, 0.0)
            } else {
                (
                    rng.random_range(-max_motion..=max_motion),
                    rng.random_range(-max_motion..=max_motion),
                )
            }
        })
        .collect();
    let (blur_sigma, noise, quantize_levels) = match track {
        Track::CleanSr => (0.0, 0.0, 0),
        Track::BlurSr => (rng.random_range(1.0..2.0), 0.0, 0),
        Track::CleanDeblur => (rng.random_range(1.0..3.0), 0.0, 0),
        Track::CompressionDeblur => {
            (rng.random_range(1.0..3.0), 0.005, rng.random_range(12..=24))
        }
    };
    SynthClipSpec {
        texture,
        frames,
        height: size,
        width: size,
        displacements,
        blur_sigma,
        downsample: track.downsample(),
        noise,
        quantize_levels,
    }
}

/// Pick a texture kind deterministically.
pub fn sample_texture_kind(rng: &mut ChaCha8Rng) -> TextureKind {
    match rng.random_range(0..3) {
        0 => TextureKind::Checker,
        1 => TextureKind::Sinusoid,
        _ => TextureKind::RandomSmooth,
    }
}

/// Estimate the displacement d with frame(p) = reference(p + d) by dense
/// normalized cross-correlation over integer lags plus a quadratic subpixel
/// fit. Each lag scores the Pearson correlation of the channel-averaged
/// intensities over the valid overlap, so slowly varying textures do not bias
/// the peak toward zero.
pub fn estimate_displacement<T: Elem>(
    frame: &Tensor<T>,
    reference: &Tensor<T>,
    max_lag: usize,
) -> (f64, f64) {
    let [_, c, h, w] = frame.dims();
    let gray = |t: &Tensor<T>| -> Vec<f64> {
        let mut g = vec![0.0f64; h * w];
        for ch in 0..c {
            for y in 0..h {
                for x in 0..w {
                    g[y * w + x] += t.at(0, ch, y, x).to_f64();
                }
            }
        }
        g
    };
    let f = gray(frame);
    let r = gray(reference);
    let l = max_lag as isize;
    let side = 2 * max_lag + 1;
    let mut scores = vec![f64::NEG_INFINITY; side * side];
    let score = |ty: isize, tx: isize| -> f64 {
        // Pearson correlation of f(p) and r(p + t) over the valid overlap.
        let y0 = 0.max(-ty) as usize;
        let y1 = (h as isize).min(h as isize - ty) as usize;
        let x0 = 0.max(-tx) as usize;
        let x1 = (w as isize).min(w as isize - tx) as usize;
        if y0 >= y1 || x0 >= x1 {
            return f64::NEG_INFINITY;
        }
        let n = ((y1 - y0) * (x1 - x0)) as f64;
        let (mut sf, mut sr, mut sff, mut srr, mut sfr) = (0.0, 0.0, 0.0, 0.0, 0.0);
        for y in y0..y1 {
            let ry = (y as isize + ty) as usize;
            for x in x0..x1 {
                let a = f[y * w + x];
                let b = r[ry * w + (x as isize + tx) as usize];
                sf += a;
                sr += b;
                sff += a * a;
                srr += b * b;
                sfr += a * b;
            }
        }
        let cov = sfr - sf * sr / n;
        let var_f = sff - sf * sf / n;
        let var_r = srr - sr * sr / n;
        let denom = (var_f * var_r).sqrt();
        if denom < 1e-12 {
            return f64::NEG_INFINITY;
        }
        cov / denom
    };
    let mut best = (0isize, 0isize, f64::NEG_INFINITY);
    for ty in -l..=l {
        for tx in -l..=l {
            let s = score(ty, tx);
            scores[(ty + l) as usize * side + (tx + l) as usize] = s;
            if s > best.2 {
                best = (ty, tx, s);
            }
        }
    }
    let (by, bx, _) = best;
    let at = |ty: isize, tx: isize| -> Option<f64> {
        if ty < -l || ty > l || tx < -l || tx > l {
            return None;
        }
        let v = scores[(ty + l) as usize * side + (tx + l) as usize];
        v.is_finite().then_some(v)
    };
    let refine = |m: Option<f64>, c0: f64, p: Option<f64>| -> f64 {
        match (m, p) {
            (Some(m), Some(p)) => {
                let denom = m - 2.0 * c0 + p;
                if denom.abs() < 1e-12 {
                    0.0
                } else {
                    0.5 * (m - p) / denom
                }
            }
            _ => 0.0,
        }
    };
    let c0 = at(by, bx).unwrap_or(0.0);
    let dy = refine(at(by - 1, bx), c0, at(by + 1, bx));
    let dx = refine(at(by, bx - 1), c0, at(by, bx + 1));
    (by as f64 + dy, bx as f64 + dx)
}
