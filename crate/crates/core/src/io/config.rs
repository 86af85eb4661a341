//! `key = value` configuration with dotted keys and `#` comments.
//!
//! Every key is registered with a type; unknown keys and ill-typed values
//! are rejected at parse time.

use std::collections::BTreeMap;
use std::path::Path;

use crate::emission::EmissionConfig;
use crate::error::{Error, Result};
use crate::neural::{ArchDescriptor, BinLoss, TrainConfig};
use crate::stress::{StressArch, StressTrainConfig};

/// Environment variable naming a default config file.
pub const CONFIG_ENV: &str = "STRESSNET_CONFIG";

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ValueKind {
    Bool,
    Int,
    Float,
    /// Comma-separated non-negative integers.
    IntList,
    /// `x0,y0,w,h`.
    Rect,
    BinLoss,
}

pub const SCHEMA: &[(&str, ValueKind)] = &[
    ("crop", ValueKind::Rect),
    ("emission.derivative", ValueKind::Bool),
    ("emission.signlog", ValueKind::Bool),
    ("emission.gaussian", ValueKind::Bool),
    ("emission.sigma_spatial", ValueKind::Float),
    ("emission.sigma_temporal", ValueKind::Float),
    ("isti.max_ms", ValueKind::Float),
    ("model.channels", ValueKind::IntList),
    ("model.lstm_layers", ValueKind::Int),
    ("model.hidden", ValueKind::Int),
    ("model.head_hidden", ValueKind::Int),
    ("train.lr_backbone", ValueKind::Float),
    ("train.lr_head", ValueKind::Float),
    ("train.lr_decay_factor", ValueKind::Float),
    ("train.decay_period_epochs", ValueKind::Int),
    ("train.epochs", ValueKind::Int),
    ("train.batch_frames", ValueKind::Int),
    ("train.n_bins", ValueKind::Int),
    ("train.alpha", ValueKind::Float),
    ("train.seq_seconds", ValueKind::Float),
    ("train.bin_loss", ValueKind::BinLoss),
    ("stress.widths", ValueKind::IntList),
    ("stress.lr", ValueKind::Float),
    ("stress.epochs", ValueKind::Int),
    ("stress.batch", ValueKind::Int),
    ("stress.breathing_scale", ValueKind::Float),
];

pub fn kind_of(key: &str) -> Option<ValueKind> {
    SCHEMA.iter().find(|(k, _)| *k == key).map(|(_, v)| *v)
}

fn parse_bool(v: &str) -> Option<bool> {
    match v {
        "true" | "1" | "yes" | "on" => Some(true),
        "false" | "0" | "no" | "off" => Some(false),
        _ => None,
    }
}

fn parse_list(v: &str) -> Option<Vec<usize>> {
    v.split(',').map(|s| s.trim().parse().ok()).collect()
}

fn parse_bin_loss(v: &str) -> Option<BinLoss> {
    match v {
        "ce" | "cross_entropy" => Some(BinLoss::CrossEntropy),
        "bce" | "binary_per_bin" => Some(BinLoss::BinaryPerBin),
        _ => None,
    }
}

fn check_value(key: &str, kind: ValueKind, v: &str) -> Result<()> {
    let ok = match kind {
        ValueKind::Bool => parse_bool(v).is_some(),
        ValueKind::Int => v.parse::<usize>().is_ok(),
        ValueKind::Float => v.parse::<f64>().is_ok_and(f64::is_finite),
        ValueKind::IntList => parse_list(v).is_some_and(|l| !l.is_empty()),
        ValueKind::Rect => parse_list(v).is_some_and(|l| l.len() == 4),
        ValueKind::BinLoss => parse_bin_loss(v).is_some(),
    };
    if ok {
        Ok(())
    } else {
        Err(Error::Config(format!("{key}: cannot read {v:?} as {kind:?}")))
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct Config {
    values: BTreeMap<String, String>,
}

impl Config {
    pub fn parse(text: &str) -> Result<Self> {
        let mut c = Config::default();
        for (i, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| Error::Config(format!("line {}: expected key = value", i + 1)))?;
            c.set(k.trim(), v.trim()).map_err(|e| Error::Config(format!("line {}: {e}", i + 1)))?;
        }
        Ok(c)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Config::parse(&text)
    }

    /// The file named by `STRESSNET_CONFIG`, then `explicit` on top of it.
    pub fn resolve(explicit: Option<&Path>) -> Result<Self> {
        let mut c = match std::env::var_os(CONFIG_ENV) {
            Some(p) if !p.is_empty() => Config::load(Path::new(&p))?,
            _ => Config::default(),
        };
        if let Some(p) = explicit {
            c.merge(Config::load(p)?);
        }
        Ok(c)
    }

    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        let kind = kind_of(key).ok_or_else(|| Error::Config(format!("unknown key {key:?}")))?;
        check_value(key, kind, value)?;
        self.values.insert(key.to_string(), value.to_string());
        Ok(())
    }

    /// Keys of `other` replace ours.
    pub fn merge(&mut self, other: Config) {
        self.values.extend(other.values);
    }

    pub fn get(&self, key: &str) -> Option<&str> {
        self.values.get(key).map(String::as_str)
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    fn float(&self, key: &str) -> Option<f64> {
        self.get(key).and_then(|v| v.parse().ok())
    }

    fn int(&self, key: &str) -> Option<usize> {
        self.get(key).and_then(|v| v.parse().ok())
    }

    fn flag(&self, key: &str) -> Option<bool> {
        self.get(key).and_then(parse_bool)
    }

    fn list(&self, key: &str) -> Option<Vec<usize>> {
        self.get(key).and_then(parse_list)
    }

    pub fn apply_emission(&self, e: &mut EmissionConfig) {
        if let Some(r) = self.list("crop") {
            e.crop = Some([r[0], r[1], r[2], r[3]]);
        }
        if let Some(v) = self.flag("emission.derivative") {
            e.derivative = v;
        }
        if let Some(v) = self.flag("emission.signlog") {
            e.signlog = v;
        }
        if let Some(v) = self.flag("emission.gaussian") {
            e.gaussian = v;
        }
        if let Some(v) = self.float("emission.sigma_spatial") {
            e.sigma_spatial = v;
        }
        if let Some(v) = self.float("emission.sigma_temporal") {
            e.sigma_temporal = v;
        }
    }

    pub fn apply_arch(&self, a: &mut ArchDescriptor) {
        if let Some(v) = self.list("model.channels") {
            a.channels = v;
        }
        if let Some(v) = self.int("model.lstm_layers") {
            a.lstm_layers = v;
        }
        if let Some(v) = self.int("model.hidden") {
            a.hidden = v;
        }
        if let Some(v) = self.int("model.head_hidden") {
            a.head_hidden = v;
        }
        if let Some(v) = self.int("train.n_bins") {
            a.n_bins = v;
        }
    }

    pub fn apply_train(&self, t: &mut TrainConfig) {
        let floats: [(&str, &mut f64); 5] = [
            ("train.lr_backbone", &mut t.lr_backbone),
            ("train.lr_head", &mut t.lr_head),
            ("train.lr_decay_factor", &mut t.lr_decay_factor),
            ("train.alpha", &mut t.alpha),
            ("train.seq_seconds", &mut t.seq_seconds),
        ];
        for (k, slot) in floats {
            if let Some(v) = self.float(k) {
                *slot = v;
            }
        }
        let ints: [(&str, &mut usize); 4] = [
            ("train.decay_period_epochs", &mut t.decay_period_epochs),
            ("train.epochs", &mut t.epochs),
            ("train.batch_frames", &mut t.batch_frames),
            ("train.n_bins", &mut t.n_bins),
        ];
        for (k, slot) in ints {
            if let Some(v) = self.int(k) {
                *slot = v;
            }
        }
        if let Some(v) = self.get("train.bin_loss").and_then(parse_bin_loss) {
            t.bin_loss = v;
        }
    }

    pub fn apply_stress(&self, s: &mut StressTrainConfig) {
        if let Some(v) = self.list("stress.widths") {
            s.arch = StressArch { widths: v };
        }
        if let Some(v) = self.float("stress.lr") {
            s.lr = v;
        }
        if let Some(v) = self.int("stress.epochs") {
            s.epochs = v;
        }
        if let Some(v) = self.int("stress.batch") {
            s.batch = v;
        }
        if let Some(v) = self.float("isti.max_ms") {
            s.scale = v;
        }
    }

    pub fn isti_max_ms(&self) -> Option<f64> {
        self.float("isti.max_ms")
    }

    /// Divisor for breathing-rate inputs (bpm) of the breathing classifier.
    pub fn breathing_scale(&self) -> Option<f64> {
        self.float("stress.breathing_scale")
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_and_applies() {
        let c = Config::parse(
            "# preprocessing\nemission.sigma_spatial = 3  # px\nemission.signlog=false\ncrop = 1,2,30,28\n\ntrain.bin_loss = bce\n",
        )
        .unwrap();
        let mut e = EmissionConfig::default();
        c.apply_emission(&mut e);
        assert_eq!(e.sigma_spatial, 3.0);
        assert!(!e.signlog);
        assert_eq!(e.crop, Some([1, 2, 30, 28]));
        let mut t = TrainConfig::default();
        c.apply_train(&mut t);
        assert_eq!(t.bin_loss, BinLoss::BinaryPerBin);
    }

    #[test]
    fn rejects_unknown_and_ill_typed() {
        assert!(matches!(Config::parse("emission.sigma = 3"), Err(Error::Config(_))));
        assert!(matches!(Config::parse("train.epochs = -1"), Err(Error::Config(_))));
        assert!(matches!(Config::parse("crop = 1,2,3"), Err(Error::Config(_))));
        assert!(matches!(Config::parse("just words"), Err(Error::Config(_))));
    }

    #[test]
    fn later_layers_win() {
        let mut a = Config::parse("train.epochs = 5\ntrain.alpha = 0.5").unwrap();
        a.merge(Config::parse("train.epochs = 9").unwrap());
        assert_eq!(a.get("train.epochs"), Some("9"));
        assert_eq!(a.get("train.alpha"), Some("0.5"));
    }
}
