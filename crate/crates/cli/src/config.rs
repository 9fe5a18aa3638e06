//! `key = value` experiment configuration.

use std::path::Path;
use std::str::FromStr;

use csifb_core::chanmodel::ChannelGenConfig;
use csifb_core::classicbf::RateParams;
use csifb_core::models::LossVariant;
use csifb_core::nncore::DEFAULT_LEAKY_SLOPE;
use csifb_core::trainharness::{Objective, TrainConfig};

use crate::CliError;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ModelKind {
    CsiFBnetS,
    CsiFBnetM,
    BaselineAe,
    BaselineBf,
}

impl FromStr for ModelKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "csifbnet-s" => Ok(Self::CsiFBnetS),
            "csifbnet-m" => Ok(Self::CsiFBnetM),
            "baseline-ae" => Ok(Self::BaselineAe),
            "baseline-bf" => Ok(Self::BaselineBf),
            _ => Err(format!("unknown model {s:?} (expected csifbnet-s, csifbnet-m, baseline-ae or baseline-bf)")),
        }
    }
}

/// Parameter varied by the mismatch study.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MismatchAxis {
    /// Scattering-cluster count of the generated channels.
    Paths,
    SnrDb,
    Alpha,
}

impl MismatchAxis {
    pub fn name(self) -> &'static str {
        match self {
            Self::Paths => "paths",
            Self::SnrDb => "snr_db",
            Self::Alpha => "alpha",
        }
    }

    /// Config key the axis overrides.
    pub fn key(self) -> &'static str {
        match self {
            Self::Paths => "nc",
            Self::SnrDb => "snr_db",
            Self::Alpha => "alpha",
        }
    }
}

impl FromStr for MismatchAxis {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "paths" | "nc" => Ok(Self::Paths),
            "snr_db" | "snr" => Ok(Self::SnrDb),
            "alpha" => Ok(Self::Alpha),
            _ => Err(format!("unknown mismatch axis {s:?} (expected paths, snr_db or alpha)")),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub nt: usize,
    pub nc: usize,
    pub ns: usize,
    /// Sub-path half-width around each cluster center, in degrees.
    pub spread_deg: f64,
    pub spacing: f64,
    pub seed: u64,
    pub count: usize,

    pub model: ModelKind,
    pub beta: usize,
    pub elements_h: Option<usize>,
    pub elements_g: Option<usize>,
    pub bits: u32,
    pub leaky_slope: f64,
    pub loss_variant: LossVariant,

    pub batch_size: usize,
    pub epochs: usize,
    pub lr_init: f64,
    pub plateau_epochs: usize,
    pub lr_decay: f64,

    pub alpha: f64,
    pub snr_db: f64,
    pub oracle_restarts: usize,

    /// Total feedback bits per sweep cell.
    pub bits_list: Vec<u64>,
    /// `(elements_h, elements_g)` per allocation cell.
    pub alloc_list: Vec<(usize, usize)>,
    pub methods: Vec<String>,
    pub mismatch_axis: MismatchAxis,
    pub mismatch_values: Vec<f64>,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            nt: 32,
            nc: 3,
            ns: 20,
            spread_deg: 7.5,
            spacing: 0.5,
            seed: 0,
            count: 62_500,
            model: ModelKind::CsiFBnetS,
            beta: 4,
            elements_h: None,
            elements_g: None,
            bits: 4,
            leaky_slope: DEFAULT_LEAKY_SLOPE,
            loss_variant: LossVariant::Abs2,
            batch_size: 500,
            epochs: 200,
            lr_init: 1e-3,
            plateau_epochs: 40,
            lr_decay: 0.5,
            alpha: 0.1,
            snr_db: 10.0,
            oracle_restarts: 8,
            bits_list: vec![8, 16, 32],
            alloc_list: vec![(3, 1), (2, 2)],
            methods: Vec::new(),
            mismatch_axis: MismatchAxis::SnrDb,
            mismatch_values: vec![0.0, 10.0, 20.0],
        }
    }
}

fn parse<T: FromStr>(key: &str, value: &str) -> Result<T, String>
where
    T::Err: std::fmt::Display,
{
    value.parse().map_err(|e| format!("{key}: cannot parse {value:?}: {e}"))
}

fn parse_list<T: FromStr>(key: &str, value: &str) -> Result<Vec<T>, String>
where
    T::Err: std::fmt::Display,
{
    value
        .split(',')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(|s| parse(key, s))
        .collect()
}

fn parse_alloc(value: &str) -> Result<Vec<(usize, usize)>, String> {
    value
        .split(',')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(|pair| {
            let (h, g) = pair
                .split_once(':')
                .ok_or_else(|| format!("alloc_list: expected elements_h:elements_g, got {pair:?}"))?;
            Ok((parse("alloc_list", h.trim())?, parse("alloc_list", g.trim())?))
        })
        .collect()
}

impl ExperimentConfig {
    pub fn parse_str(text: &str) -> Result<Self, CliError> {
        let mut cfg = Self::default();
        for (n, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| CliError::Usage(format!("config line {}: expected `key = value`", n + 1)))?;
            cfg.set(key.trim(), value.trim())
                .map_err(|e| CliError::Usage(format!("config line {}: {e}", n + 1)))?;
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Usage(format!("cannot read config {}: {e}", path.display())))?;
        Self::parse_str(&text)
    }

    /// Sets one key; unknown keys are an error.
    pub fn set(&mut self, key: &str, value: &str) -> Result<(), String> {
        match key {
            "nt" => self.nt = parse(key, value)?,
            "nc" => self.nc = parse(key, value)?,
            "ns" => self.ns = parse(key, value)?,
            "spread" => self.spread_deg = parse(key, value)?,
            "spacing" => self.spacing = parse(key, value)?,
            "seed" => self.seed = parse(key, value)?,
            "count" => self.count = parse(key, value)?,
            "model" => self.model = value.parse()?,
            "beta" => self.beta = parse(key, value)?,
            "elements_h" => self.elements_h = Some(parse(key, value)?),
            "elements_g" => self.elements_g = Some(parse(key, value)?),
            "bits" => self.bits = parse(key, value)?,
            "leaky_slope" => self.leaky_slope = parse(key, value)?,
            "loss_variant" => {
                self.loss_variant = match value {
                    "abs2" => LossVariant::Abs2,
                    "neg-re" => LossVariant::NegRe,
                    _ => return Err(format!("loss_variant: expected abs2 or neg-re, got {value:?}")),
                }
            }
            "batch_size" => self.batch_size = parse(key, value)?,
            "epochs" => self.epochs = parse(key, value)?,
            "lr_init" => self.lr_init = parse(key, value)?,
            "plateau_epochs" => self.plateau_epochs = parse(key, value)?,
            "lr_decay" => self.lr_decay = parse(key, value)?,
            "alpha" => self.alpha = parse(key, value)?,
            "snr_db" => self.snr_db = parse(key, value)?,
            "oracle_restarts" => self.oracle_restarts = parse(key, value)?,
            "bits_list" => self.bits_list = parse_list(key, value)?,
            "alloc_list" => self.alloc_list = parse_alloc(value)?,
            "methods" => self.methods = value.split(',').map(|s| s.trim().to_string()).filter(|s| !s.is_empty()).collect(),
            "mismatch_axis" => self.mismatch_axis = value.parse()?,
            "mismatch_values" => self.mismatch_values = parse_list(key, value)?,
            _ => return Err(format!("unknown key {key:?}")),
        }
        Ok(())
    }

    pub fn validate(&self) -> Result<(), CliError> {
        let usage = |m: String| Err(CliError::Usage(m));
        if self.nt == 0 {
            return usage("nt must be at least 1".into());
        }
        if self.beta == 0 {
            return usage("beta must be positive".into());
        }
        if !(1..=16).contains(&self.bits) {
            return usage(format!("bits must be in 1..=16, got {}", self.bits));
        }
        if !self.snr_db.is_finite() {
            return usage("snr_db must be finite".into());
        }
        if !(0.0..=1.0).contains(&self.alpha) {
            return usage(format!("alpha must lie in [0, 1], got {}", self.alpha));
        }
        if self.oracle_restarts == 0 {
            return usage("oracle_restarts must be positive".into());
        }
        self.channel_config().validate().map_err(|e| CliError::Usage(e.to_string()))?;
        Ok(())
    }

    pub fn channel_config(&self) -> ChannelGenConfig {
        ChannelGenConfig {
            n_t: self.nt,
            n_c: self.nc,
            n_s: self.ns,
            spacing_ratio: self.spacing,
            angular_spread: self.spread_deg.to_radians(),
            seed: self.seed,
        }
    }

    pub fn rho(&self) -> f64 {
        10f64.powf(self.snr_db / 10.0)
    }

    pub fn rate_params(&self) -> Result<RateParams, CliError> {
        RateParams::from_snr_db(self.snr_db, self.alpha).map_err(|e| CliError::Usage(e.to_string()))
    }

    /// Codeword length implied by `beta`; `beta` must divide `2 nt`.
    pub fn elements(&self) -> Result<usize, CliError> {
        if (2 * self.nt) % self.beta != 0 {
            return Err(CliError::Usage(format!("beta = {} does not divide 2 nt = {}", self.beta, 2 * self.nt)));
        }
        Ok(2 * self.nt / self.beta)
    }

    /// Per-stream codeword lengths for the multi-cell model, defaulting to `beta` for both.
    pub fn elements_pair(&self) -> Result<(usize, usize), CliError> {
        let eh = match self.elements_h {
            Some(e) => e,
            None => self.elements()?,
        };
        let eg = match self.elements_g {
            Some(e) => e,
            None => self.elements()?,
        };
        if eh == 0 || eg == 0 {
            return Err(CliError::Usage("elements_h and elements_g must be positive".into()));
        }
        Ok((eh, eg))
    }

    pub fn train_config(&self, objective: Objective) -> TrainConfig {
        TrainConfig {
            batch_size: self.batch_size,
            epochs: self.epochs,
            lr_init: self.lr_init,
            plateau_epochs: self.plateau_epochs,
            lr_decay: self.lr_decay,
            seed: self.seed,
            objective,
            ..TrainConfig::default()
        }
    }

    pub fn objective_s(&self) -> Objective {
        Objective::BeamS {
            variant: self.loss_variant,
        }
    }

    pub fn objective_m(&self) -> Objective {
        Objective::BeamM {
            alpha: self.alpha,
            rho: self.rho(),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_keys_comments_and_lists() {
        let cfg = ExperimentConfig::parse_str(
            "# desk run\nnt = 16\nsnr_db = 15 # trailing\nbits_list = 4, 8\nalloc_list = 3:1, 2:2\nmodel = csifbnet-m\n",
        )
        .unwrap();
        assert_eq!(cfg.nt, 16);
        assert_eq!(cfg.snr_db, 15.0);
        assert_eq!(cfg.bits_list, vec![4, 8]);
        assert_eq!(cfg.alloc_list, vec![(3, 1), (2, 2)]);
        assert_eq!(cfg.model, ModelKind::CsiFBnetM);
        assert!((cfg.rho() - 31.622776601683793).abs() < 1e-12);
    }

    #[test]
    fn rejects_unknown_keys_and_bad_values() {
        assert!(matches!(ExperimentConfig::parse_str("colour = red"), Err(CliError::Usage(_))));
        assert!(ExperimentConfig::parse_str("nt = 0").is_err());
        assert!(ExperimentConfig::parse_str("nt 4").is_err());
        assert!(ExperimentConfig::parse_str("alpha = 2").is_err());
        assert!(ExperimentConfig::parse_str("beta = 5").unwrap().elements().is_err());
    }
}
