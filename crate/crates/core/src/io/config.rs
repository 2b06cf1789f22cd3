//! Line-oriented `key=value` run configuration.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use super::cxt::read_file;
use crate::error::{Error, Result};
use crate::learned::{AdamConfig, NetConfig, TrainConfig};
use crate::phantom::PhantomSpec;
use crate::sampling::{LatticeOffset, VistaParams};
use crate::solver::{Mode, PenaltyWeights, SolverConfig};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum KeyKind {
    Uint,
    Float,
    Bool,
    Text,
    Path,
    Choice(&'static [&'static str]),
}

#[derive(Debug, Clone, Copy)]
pub struct KeySpec {
    pub name: &'static str,
    pub kind: KeyKind,
    pub default: Option<&'static str>,
    pub help: &'static str,
}

const fn key(name: &'static str, kind: KeyKind, default: Option<&'static str>, help: &'static str) -> KeySpec {
    KeySpec { name, kind, default, help }
}

use KeyKind::*;

pub const KEYS: &[KeySpec] = &[
    key("seed", Uint, Some("0"), "seed for every random choice"),
    key("frames", Uint, Some("16"), "number of frames T"),
    key("rows", Uint, Some("64"), "image rows H (phase-encoding lines)"),
    key("cols", Uint, Some("64"), "image columns W (readout)"),
    key("coils", Uint, Some("4"), "number of coils"),
    key("noise", Float, Some("0"), "complex k-space noise standard deviation"),
    key("mask", Text, Some("vista"), "lattice | vista | file:PATH | PATH"),
    key("accel", Float, Some("8"), "acceleration factor R"),
    key("center_band", Uint, Some("4"), "central k_y lines covered by the union over frames"),
    key("density_decay", Float, Some("1"), "variable-density exponent of the vista-like mask"),
    key("lattice_stride", Uint, Some("1"), "lattice offset advance per frame"),
    key("mode", Choice(&["classical", "learned"]), Some("classical"), "regularizer family"),
    key("nit", Uint, Some("5"), "solver iterations"),
    key("lambda0", Float, Some("0.1"), "data-consistency weight"),
    key("alpha0", Float, Some("0.1"), "coupling weight of the x-t estimate"),
    key("beta0", Float, Some("0.1"), "coupling weight of the x-f estimate"),
    key("tau_xf", Float, Some("0.5"), "x-f soft threshold (classical mode)"),
    key("tau_xt", Float, Some("0.3"), "x-t soft threshold (classical mode)"),
    key("weights", Choice(&["explicit", "consistent"]), Some("explicit"), "objective weights: the alpha..mu keys, or derived from the update coefficients"),
    key("alpha", Float, Some("1"), "objective weight alpha"),
    key("beta", Float, Some("1"), "objective weight beta"),
    key("gamma", Float, Some("1"), "objective weight gamma"),
    key("lambda", Float, Some("9"), "objective weight lambda"),
    key("mu", Float, Some("1"), "objective weight mu"),
    key("steps", Uint, Some("200"), "training steps"),
    key("lr", Float, Some("0.0001"), "learning rate"),
    key("hidden", Uint, Some("8"), "hidden channels per recurrent layer"),
    key("layers", Uint, Some("2"), "recurrent layers per network"),
    key("augment", Bool, Some("false"), "random flips / rotations / scaling during training"),
    key("train_samples", Uint, Some("2"), "number of synthetic training sequences"),
    key("margin", Uint, Some("4"), "margin around the dynamic crop"),
    key("frame", Uint, Some("0"), "frame to export"),
    key("window", Text, Some("auto"), "auto (1-99 percentile) or MIN,MAX"),
    key("out_dir", Path, Some("."), "output directory"),
    key("input", Path, None, "input tensor file"),
    key("maps", Path, None, "coil map file"),
    key("gt", Path, None, "ground-truth image file"),
    key("ckpt", Path, None, "network checkpoint file"),
    key("out", Path, None, "output file"),
    key("trace", Path, None, "objective trace CSV"),
];

pub fn key_spec(name: &str) -> Option<&'static KeySpec> {
    KEYS.iter().find(|k| k.name == name)
}

/// Where the sampling mask comes from.
#[derive(Debug, Clone, PartialEq)]
pub enum MaskSource {
    Lattice,
    Vista,
    File(PathBuf),
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct RunConfig {
    values: BTreeMap<String, String>,
}

fn cfg_err(msg: impl Into<String>) -> Error {
    Error::Config(msg.into())
}

fn check_value(spec: &KeySpec, value: &str) -> Result<()> {
    let ok = match spec.kind {
        Uint => value.parse::<u64>().is_ok(),
        Float => value.parse::<f64>().is_ok_and(f64::is_finite),
        Bool => matches!(value, "true" | "false"),
        Text | Path => !value.is_empty(),
        Choice(options) => options.contains(&value),
    };
    if ok {
        Ok(())
    } else {
        let expected = match spec.kind {
            Uint => "a non-negative integer".to_string(),
            Float => "a finite number".to_string(),
            Bool => "true or false".to_string(),
            Text | Path => "a non-empty value".to_string(),
            Choice(options) => format!("one of {}", options.join(", ")),
        };
        Err(cfg_err(format!("{}={value:?}: expected {expected}", spec.name)))
    }
}

impl RunConfig {
    pub fn new() -> Self {
        Self::default()
    }

    /// Parse `key=value` lines; blank lines and `#` comments are skipped.
    pub fn parse(text: &str) -> Result<Self> {
        let mut cfg = RunConfig::new();
        for (i, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| cfg_err(format!("line {}: expected key=value, got {line:?}", i + 1)))?;
            cfg.set(k.trim(), v.trim()).map_err(|e| cfg_err(format!("line {}: {e}", i + 1)))?;
        }
        Ok(cfg)
    }

    pub fn from_file(path: &Path) -> Result<Self> {
        let bytes = read_file(path)?;
        let text = String::from_utf8(bytes).map_err(|_| Error::Format {
            path: path.to_path_buf(),
            msg: "config is not UTF-8".into(),
        })?;
        Self::parse(&text).map_err(|e| Error::Format {
            path: path.to_path_buf(),
            msg: e.to_string(),
        })
    }

    /// Set a key after checking that it exists and the value parses.
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        let spec = key_spec(key).ok_or_else(|| cfg_err(format!("unknown key {key:?}")))?;
        check_value(spec, value)?;
        self.values.insert(key.to_string(), value.to_string());
        Ok(())
    }

    pub fn is_set(&self, key: &str) -> bool {
        self.values.contains_key(key)
    }

    /// Explicit value or the key's default.
    pub fn get(&self, key: &str) -> Option<&str> {
        self.values
            .get(key)
            .map(String::as_str)
            .or_else(|| key_spec(key).and_then(|s| s.default))
    }

    fn parsed<T: std::str::FromStr>(&self, key: &str) -> Result<T> {
        let v = self.get(key).ok_or_else(|| cfg_err(format!("{key} is required")))?;
        v.parse().map_err(|_| cfg_err(format!("{key}={v:?} does not parse")))
    }

    pub fn usize(&self, key: &str) -> Result<usize> {
        self.parsed(key)
    }

    pub fn u64(&self, key: &str) -> Result<u64> {
        self.parsed(key)
    }

    pub fn f64(&self, key: &str) -> Result<f64> {
        self.parsed(key)
    }

    pub fn bool(&self, key: &str) -> Result<bool> {
        self.parsed(key)
    }

    pub fn path(&self, key: &str) -> Result<PathBuf> {
        self.get(key)
            .map(PathBuf::from)
            .ok_or_else(|| cfg_err(format!("{key} is required")))
    }

    pub fn opt_path(&self, key: &str) -> Option<PathBuf> {
        self.get(key).map(PathBuf::from)
    }

    /// Explicitly set keys, sorted, one per line.
    pub fn to_text(&self) -> String {
        self.values.iter().map(|(k, v)| format!("{k}={v}\n")).collect()
    }

    pub fn mask_source(&self) -> Result<MaskSource> {
        let v = self.get("mask").expect("mask has a default");
        Ok(match v {
            "lattice" => MaskSource::Lattice,
            "vista" => MaskSource::Vista,
            other => MaskSource::File(PathBuf::from(other.strip_prefix("file:").unwrap_or(other))),
        })
    }

    pub fn lattice_offset(&self) -> Result<LatticeOffset> {
        Ok(LatticeOffset {
            stride: self.usize("lattice_stride")?,
        })
    }

    pub fn vista_params(&self) -> Result<VistaParams> {
        Ok(VistaParams {
            density_decay: self.f64("density_decay")?,
            center_band: self.usize("center_band")?,
            seed: self.u64("seed")?,
        })
    }

    /// The default phantom geometry on the configured grid.
    pub fn phantom_spec(&self) -> Result<PhantomSpec> {
        let mut spec = PhantomSpec::scaled(self.usize("frames")?, self.usize("rows")?, self.usize("cols")?);
        spec.seed = self.u64("seed")?;
        spec.validate()?;
        Ok(spec)
    }

    pub fn solver_config(&self) -> Result<SolverConfig> {
        let mut cfg = SolverConfig {
            lambda0: self.f64("lambda0")?,
            alpha0: self.f64("alpha0")?,
            beta0: self.f64("beta0")?,
            n_it: self.usize("nit")?,
            mode: Mode::parse(self.get("mode").expect("default")).expect("validated choice"),
            tau_xf: self.f64("tau_xf")?,
            tau_xt: self.f64("tau_xt")?,
            weights: PenaltyWeights {
                alpha: self.f64("alpha")?,
                beta: self.f64("beta")?,
                gamma: self.f64("gamma")?,
                lambda: self.f64("lambda")?,
                mu: self.f64("mu")?,
            },
        };
        cfg.validate()?;
        if self.get("weights") == Some("consistent") {
            cfg.weights = PenaltyWeights::consistent(&cfg)?;
        }
        Ok(cfg)
    }

    pub fn train_config(&self) -> Result<TrainConfig> {
        let tc = TrainConfig {
            steps: self.usize("steps")?,
            adam: AdamConfig {
                lr: self.f64("lr")?,
                ..AdamConfig::default()
            },
            seed: self.u64("seed")?,
            augment: self.bool("augment")?,
            noise: self.f64("noise")?,
        };
        if !(tc.adam.lr > 0.0) {
            return Err(cfg_err("lr must be positive"));
        }
        Ok(tc)
    }

    pub fn net_configs(&self) -> Result<(NetConfig, NetConfig)> {
        let hidden = self.usize("hidden")?;
        let layers = self.usize("layers")?;
        let set = |mut c: NetConfig| -> Result<NetConfig> {
            c.layers = layers;
            c.dilations = vec![[1, 1, 1]; layers];
            c.validate()?;
            Ok(c)
        };
        Ok((set(NetConfig::xf(hidden))?, set(NetConfig::xt(hidden))?))
    }

    /// Build every typed view to surface range errors early.
    pub fn validate(&self) -> Result<()> {
        self.phantom_spec()?;
        self.solver_config()?;
        self.train_config()?;
        self.net_configs()?;
        if self.usize("coils")? == 0 {
            return Err(cfg_err("coils must be >= 1"));
        }
        if !(self.f64("accel")? >= 1.0) {
            return Err(cfg_err("accel must be >= 1"));
        }
        if !(self.f64("noise")? >= 0.0) {
            return Err(cfg_err("noise must be >= 0"));
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parse_and_defaults() {
        let cfg = RunConfig::parse("# comment\nnit = 7\n\nmode=learned\n").unwrap();
        assert_eq!(cfg.usize("nit").unwrap(), 7);
        assert_eq!(cfg.solver_config().unwrap().mode, Mode::Learned);
        assert_eq!(cfg.usize("frames").unwrap(), 16);
        assert_eq!(cfg.to_text(), "mode=learned\nnit=7\n");
        assert_eq!(RunConfig::parse(&cfg.to_text()).unwrap(), cfg);
    }

    #[test]
    fn unknown_keys_and_bad_values_rejected() {
        assert!(RunConfig::parse("bogus=1").is_err());
        assert!(RunConfig::parse("nit=-1").is_err());
        assert!(RunConfig::parse("mode=deep").is_err());
        assert!(RunConfig::parse("no equals sign").is_err());
        assert!(RunConfig::parse("lambda0=nan").is_err());
        let cfg = RunConfig::parse("alpha0=0.6\nbeta0=0.6").unwrap();
        assert!(cfg.validate().is_err());
    }

    #[test]
    fn mask_sources() {
        let mut cfg = RunConfig::new();
        assert_eq!(cfg.mask_source().unwrap(), MaskSource::Vista);
        cfg.set("mask", "lattice").unwrap();
        assert_eq!(cfg.mask_source().unwrap(), MaskSource::Lattice);
        cfg.set("mask", "file:a/b.cxt").unwrap();
        assert_eq!(cfg.mask_source().unwrap(), MaskSource::File("a/b.cxt".into()));
        cfg.set("mask", "c.cxt").unwrap();
        assert_eq!(cfg.mask_source().unwrap(), MaskSource::File("c.cxt".into()));
    }

    #[test]
    fn consistent_weights_option() {
        let cfg = RunConfig::parse("weights=consistent").unwrap();
        let s = cfg.solver_config().unwrap();
        assert_eq!(s.weights, PenaltyWeights::consistent(&s).unwrap());
    }

    #[test]
    fn defaults_are_valid() {
        RunConfig::new().validate().unwrap();
        for k in KEYS {
            if let Some(d) = k.default {
                check_value(k, d).unwrap();
            }
        }
    }
}
