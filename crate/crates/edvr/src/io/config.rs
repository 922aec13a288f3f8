//! Flat `key = value` config files with `#` comments. Unknown keys are
//! rejected so typos fail loudly; missing keys fall back to defaults, and the
//! serializer always emits every key, so parse -> serialize -> parse is the
//! identity on settings.

use indexmap::IndexMap;

use crate::error::{config_bail, ensure_config, EdvrError, Result};
use crate::model::EdvrConfig;
use crate::train::{SynthClipSpec, TrainConfig};

struct KeyBag {
    map: IndexMap<String, String>,
}

impl KeyBag {
    fn new(text: &str) -> Result<Self> {
        let mut map = IndexMap::new();
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let Some((k, v)) = line.split_once('=') else {
                config_bail!("line {}: expected `key = value`, got `{}`", lineno + 1, raw.trim());
            };
            let key = k.trim().to_string();
            if map.insert(key.clone(), v.trim().to_string()).is_some() {
                config_bail!("line {}: duplicate key `{key}`", lineno + 1);
            }
        }
        Ok(Self { map })
    }

    fn take(&mut self, key: &str) -> Option<String> {
        self.map.shift_remove(key)
    }

    fn parse<V>(&mut self, key: &str, default: V) -> Result<V>
    where
        V: std::str::FromStr,
        V::Err: std::fmt::Display,
    {
        match self.take(key) {
            None => Ok(default),
            Some(raw) => raw
                .parse()
                .map_err(|e| EdvrError::Config(format!("key `{key}`: bad value `{raw}` ({e})"))),
        }
    }

    fn finish(self) -> Result<()> {
        if !self.map.is_empty() {
            let keys: Vec<&str> = self.map.keys().map(|s| s.as_str()).collect();
            config_bail!("unknown key(s): {}", keys.join(", "));
        }
        Ok(())
    }
}

/// Everything a training run needs: architecture plus optimization settings.
#[derive(Clone, Debug, PartialEq)]
pub struct RunConfig {
    pub model: EdvrConfig,
    pub train: TrainConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self { model: EdvrConfig::default(), train: TrainConfig::default() }
    }
}

pub fn parse_run_config(text: &str) -> Result<RunConfig> {
    let mut bag = KeyBag::new(text)?;
    let md = EdvrConfig::default();
    let td = TrainConfig::default();
    let model = EdvrConfig {
        n_frames: bag.parse("n_frames", md.n_frames)?,
        channels: bag.parse("channels", md.channels)?,
        pyramid_levels: bag.parse("pyramid_levels", md.pyramid_levels)?,
        extract_blocks: bag.parse("extract_blocks", md.extract_blocks)?,
        recon_blocks: bag.parse("recon_blocks", md.recon_blocks)?,
        scale: bag.parse("scale", md.scale)?,
        predeblur: bag.parse("predeblur", md.predeblur)?,
        hr_input: bag.parse("hr_input", md.hr_input)?,
        deform_groups: bag.parse("deform_groups", md.deform_groups)?,
        align: bag.parse("align", md.align)?,
        tsa: bag.parse("tsa", md.tsa)?,
    };
    let train = TrainConfig {
        lr: bag.parse("lr", td.lr)?,
        beta1: bag.parse("beta1", td.beta1)?,
        beta2: bag.parse("beta2", td.beta2)?,
        adam_eps: bag.parse("adam_eps", td.adam_eps)?,
        batch: bag.parse("batch", td.batch)?,
        patch: bag.parse("patch", td.patch)?,
        iters: bag.parse("iters", td.iters)?,
        charbonnier_eps: bag.parse("charbonnier_eps", td.charbonnier_eps)?,
        loss_mode: bag.parse("loss_mode", td.loss_mode)?,
        seed: bag.parse("seed", td.seed)?,
        track: bag.parse("track", td.track)?,
        motion: bag.parse("motion", td.motion)?,
        augment: bag.parse("augment", td.augment)?,
    };
    bag.finish()?;
    model.validate()?;
    train.validate()?;
    Ok(RunConfig { model, train })
}

pub fn serialize_run_config(cfg: &RunConfig) -> String {
    let m = &cfg.model;
    let t = &cfg.train;
    let mut s = String::from("# architecture\n");
    for (k, v) in [
        ("n_frames", m.n_frames.to_string()),
        ("channels", m.channels.to_string()),
        ("pyramid_levels", m.pyramid_levels.to_string()),
        ("extract_blocks", m.extract_blocks.to_string()),
        ("recon_blocks", m.recon_blocks.to_string()),
        ("scale", m.scale.to_string()),
        ("predeblur", m.predeblur.to_string()),
        ("hr_input", m.hr_input.to_string()),
        ("deform_groups", m.deform_groups.to_string()),
        ("align", m.align.to_string()),
        ("tsa", m.tsa.to_string()),
    ] {
        s.push_str(&format!("{k} = {v}\n"));
    }
    s.push_str("\n# training\n");
    for (k, v) in [
        ("lr", t.lr.to_string()),
        ("beta1", t.beta1.to_string()),
        ("beta2", t.beta2.to_string()),
        ("adam_eps", t.adam_eps.to_string()),
        ("batch", t.batch.to_string()),
        ("patch", t.patch.to_string()),
        ("iters", t.iters.to_string()),
        ("charbonnier_eps", t.charbonnier_eps.to_string()),
        ("loss_mode", t.loss_mode.to_string()),
        ("seed", t.seed.to_string()),
        ("track", t.track.to_string()),
        ("motion", t.motion.to_string()),
        ("augment", t.augment.to_string()),
    ] {
        s.push_str(&format!("{k} = {v}\n"));
    }
    s
}

/// A synthetic-clip recipe file: one clip spec plus the generator seed.
#[derive(Clone, Debug, PartialEq)]
pub struct SynthSpecFile {
    pub clip: SynthClipSpec,
    pub seed: u64,
}

fn parse_displacements(raw: &str) -> Result<Vec<(f64, f64)>> {
    let mut out = Vec::new();
    for pair in raw.split(';') {
        let pair = pair.trim();
        if pair.is_empty() {
            continue;
        }
        let Some((dy, dx)) = pair.split_once(',') else {
            config_bail!("displacement `{pair}` must be `dy,dx`");
        };
        let parse = |s: &str| -> Result<f64> {
            s.trim()
                .parse()
                .map_err(|_| EdvrError::Config(format!("bad displacement component `{s}`")))
        };
        out.push((parse(dy)?, parse(dx)?));
    }
    ensure_config!(!out.is_empty(), "displacements list is empty");
    Ok(out)
}

pub fn parse_synth_spec(text: &str) -> Result<SynthSpecFile> {
    let mut bag = KeyBag::new(text)?;
    let displacements = match bag.take("displacements") {
        Some(raw) => parse_displacements(&raw)?,
        None => config_bail!("synth spec needs a `displacements` key (dy,dx pairs joined by `;`)"),
    };
    let clip = SynthClipSpec {
        texture: bag.parse("texture", crate::train::TextureKind::Sinusoid)?,
        frames: bag.parse("frames", displacements.len())?,
        height: bag.parse("height", 64)?,
        width: bag.parse("width", 64)?,
        displacements,
        blur_sigma: bag.parse("blur_sigma", 0.0)?,
        downsample: bag.parse("downsample", 4)?,
        noise: bag.parse("noise", 0.0)?,
        quantize_levels: bag.parse("quantize_levels", 0u32)?,
    };
    let seed = bag.parse("seed", 0u64)?;
    bag.finish()?;
    clip.validate()?;
    Ok(SynthSpecFile { clip, seed })
}

pub fn serialize_synth_spec(spec: &SynthSpecFile) -> String {
    let c = &spec.clip;
    let displacements: Vec<String> =
        c.displacements.iter().map(|(dy, dx)| format!("{dy},{dx}")).collect();
    let mut s = String::new();
    for (k, v) in [
        ("texture", c.texture.to_string()),
        ("frames", c.frames.to_string()),
        ("height", c.height.to_string()),
        ("width", c.width.to_string()),
        ("displacements", displacements.join("; ")),
        ("blur_sigma", c.blur_sigma.to_string()),
        ("downsample", c.downsample.to_string()),
        ("noise", c.noise.to_string()),
        ("quantize_levels", c.quantize_levels.to_string()),
        ("seed", spec.seed.to_string()),
    ] {
        s.push_str(&format!("{k} = {v}\n"));
    }
    s
}
