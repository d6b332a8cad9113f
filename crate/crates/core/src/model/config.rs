use std::fmt;
use std::str::FromStr;

use serde::Serialize;

use crate::dfrft::FractionalOrder;
use crate::dtg::Generator;
use crate::error::{Error, Result};
use crate::mffa::AttentionScale;

/// Which loss components and modules are switched on.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize)]
pub enum Variant {
    /// Raw embeddings straight into the classifier.
    CeOnly,
    /// Adapter on, tree off.
    Mffa,
    /// Tree on raw embeddings, adapter off.
    Dtg,
    #[default]
    Full,
}

impl Variant {
    pub const ALL: [Variant; 4] = [Variant::CeOnly, Variant::Mffa, Variant::Dtg, Variant::Full];

    pub fn uses_mffa(self) -> bool {
        matches!(self, Variant::Mffa | Variant::Full)
    }

    pub fn uses_dtg(self) -> bool {
        matches!(self, Variant::Dtg | Variant::Full)
    }
}

impl fmt::Display for Variant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Variant::CeOnly => "ce-only",
            Variant::Mffa => "mffa",
            Variant::Dtg => "dtg",
            Variant::Full => "full",
        })
    }
}

impl FromStr for Variant {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "ce-only" => Ok(Variant::CeOnly),
            "mffa" => Ok(Variant::Mffa),
            "dtg" => Ok(Variant::Dtg),
            "full" => Ok(Variant::Full),
            other => Err(Error::Config(format!("unknown variant `{other}` (ce-only, mffa, dtg, full)"))),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct TrainConfig {
    pub dim: usize,
    pub expansion: usize,
    pub depth: usize,
    pub lambda: f64,
    pub order: FractionalOrder,
    pub batch: usize,
    pub epochs: usize,
    pub lr: f64,
    /// Share of all updates spent in linear warm-up.
    pub warmup_fraction: f64,
    pub momentum: f64,
    /// Global gradient-norm ceiling; `0` turns clipping off.
    pub clip_norm: f64,
    pub seed: u64,
    pub generator: Generator,
    pub standard_attn_scale: bool,
    pub variant: Variant,
    pub classes: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            dim: 32,
            expansion: 4,
            depth: 3,
            lambda: 10.0,
            order: FractionalOrder::learnable(0.5),
            batch: 16,
            epochs: 20,
            lr: 0.05,
            warmup_fraction: 0.05,
            momentum: 0.9,
            clip_norm: 1.0,
            seed: 0,
            generator: Generator::Dtg,
            standard_attn_scale: false,
            variant: Variant::Full,
            classes: 5,
        }
    }
}

impl TrainConfig {
    pub const KEYS: [&'static str; 16] = [
        "dim",
        "expansion",
        "depth",
        "lambda",
        "order",
        "batch",
        "epochs",
        "lr",
        "warmup_fraction",
        "momentum",
        "clip_norm",
        "seed",
        "generator",
        "standard_attn_scale",
        "variant",
        "classes",
    ];

    pub fn attention_scale(&self) -> AttentionScale {
        if self.standard_attn_scale {
            AttentionScale::BeforeSoftmax
        } else {
            AttentionScale::AfterSoftmax
        }
    }

    /// Sets one field from its text form. Unknown keys are rejected.
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        fn parse<T: FromStr>(key: &str, value: &str) -> Result<T>
        where
            T::Err: fmt::Display,
        {
            value.trim().parse().map_err(|e| Error::Config(format!("{key}: cannot parse {value:?}: {e}")))
        }
        match key {
            "dim" => self.dim = parse(key, value)?,
            "expansion" => self.expansion = parse(key, value)?,
            "depth" => self.depth = parse(key, value)?,
            "lambda" => self.lambda = parse(key, value)?,
            "order" => self.order = value.parse().map_err(|e: String| Error::Config(format!("order: {e}")))?,
            "batch" => self.batch = parse(key, value)?,
            "epochs" => self.epochs = parse(key, value)?,
            "lr" => self.lr = parse(key, value)?,
            "warmup_fraction" => self.warmup_fraction = parse(key, value)?,
            "momentum" => self.momentum = parse(key, value)?,
            "clip_norm" => self.clip_norm = parse(key, value)?,
            "seed" => self.seed = parse(key, value)?,
            "generator" => self.generator = value.parse()?,
            "standard_attn_scale" => self.standard_attn_scale = parse(key, value)?,
            "variant" => self.variant = value.parse()?,
            "classes" => self.classes = parse(key, value)?,
            other => return Err(Error::Config(format!("unknown config key `{other}`"))),
        }
        Ok(())
    }

    pub fn get(&self, key: &str) -> Option<String> {
        Some(match key {
            "dim" => self.dim.to_string(),
            "expansion" => self.expansion.to_string(),
            "depth" => self.depth.to_string(),
            "lambda" => self.lambda.to_string(),
            "order" => self.order.to_string(),
            "batch" => self.batch.to_string(),
            "epochs" => self.epochs.to_string(),
            "lr" => self.lr.to_string(),
            "warmup_fraction" => self.warmup_fraction.to_string(),
            "momentum" => self.momentum.to_string(),
            "clip_norm" => self.clip_norm.to_string(),
            "seed" => self.seed.to_string(),
            "generator" => self.generator.to_string(),
            "standard_attn_scale" => self.standard_attn_scale.to_string(),
            "variant" => self.variant.to_string(),
            "classes" => self.classes.to_string(),
            _ => return None,
        })
    }

    /// `key=value` lines in [`Self::KEYS`] order. Floats print in their
    /// shortest round-tripping form.
    pub fn to_text(&self) -> String {
        Self::KEYS.iter().map(|k| format!("{k}={}\n", self.get(k).expect("known key"))).collect()
    }

    /// Parses `key=value` lines over the defaults. Blank lines and `#`
    /// comments are ignored.
    pub fn from_text(text: &str) -> Result<Self> {
        let mut cfg = Self::default();
        for (key, value) in parse_pairs(text)? {
            cfg.set(&key, &value)?;
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        let fail = |m: String| Err(Error::Config(m));
        if self.dim < 2 {
            return fail(format!("dim must be at least 2, got {}", self.dim));
        }
        if self.expansion == 0 {
            return fail("expansion must be at least 1".into());
        }
        if !(1..=10).contains(&self.depth) {
            return fail(format!("depth must be in 1..=10, got {}", self.depth));
        }
        if !(self.lambda.is_finite() && self.lambda >= 0.0) {
            return fail(format!("lambda must be finite and nonnegative, got {}", self.lambda));
        }
        if self.batch == 0 {
            return fail("batch must be at least 1".into());
        }
        if !(self.lr.is_finite() && self.lr >= 0.0) {
            return fail(format!("lr must be finite and nonnegative, got {}", self.lr));
        }
        if !(0.0..1.0).contains(&self.warmup_fraction) {
            return fail(format!("warmup_fraction must be in [0, 1), got {}", self.warmup_fraction));
        }
        if !(0.0..1.0).contains(&self.momentum) {
            return fail(format!("momentum must be in [0, 1), got {}", self.momentum));
        }
        if !(self.clip_norm.is_finite() && self.clip_norm >= 0.0) {
            return fail(format!("clip_norm must be finite and nonnegative, got {}", self.clip_norm));
        }
        if self.classes < 2 {
            return fail(format!("classes must be at least 2, got {}", self.classes));
        }
        Ok(())
    }
}

/// Splits `key=value` lines, skipping blanks and `#` comments.
pub fn parse_pairs(text: &str) -> Result<Vec<(String, String)>> {
    let mut out = Vec::new();
    for (n, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let (k, v) = line
            .split_once('=')
            .ok_or_else(|| Error::Config(format!("line {}: expected key=value, got {line:?}", n + 1)))?;
        out.push((k.trim().to_string(), v.trim().to_string()));
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults() {
        let c = TrainConfig::default();
        assert_eq!((c.order.value, c.order.trainable), (0.5, true));
        assert_eq!((c.expansion, c.lambda, c.depth), (4, 10.0, 3));
        assert_eq!((c.batch, c.lr, c.momentum, c.epochs, c.dim), (16, 0.05, 0.9, 20, 32));
        c.validate().unwrap();
    }

    #[test]
    fn text_round_trip() {
        let mut c = TrainConfig::default();
        c.lr = 0.1 + 0.2;
        c.order = FractionalOrder::fixed(1.0);
        c.generator = Generator::Series;
        c.variant = Variant::Mffa;
        c.standard_attn_scale = true;
        assert_eq!(TrainConfig::from_text(&c.to_text()).unwrap(), c);
    }

    #[test]
    fn rejects_bad_input() {
        assert!(TrainConfig::from_text("bogus=1").is_err());
        assert!(TrainConfig::from_text("dim").is_err());
        assert!(TrainConfig::from_text("dim=x").is_err());
        assert!(TrainConfig::from_text("classes=1").is_err());
        assert!(TrainConfig::from_text("momentum=1").is_err());
        let c = TrainConfig::from_text("# note\n\n epochs = 3 \n").unwrap();
        assert_eq!(c.epochs, 3);
    }
}
