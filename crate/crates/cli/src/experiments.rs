//! Training pipelines and sweep cells shared by the commands.

use csifb_core::chanmodel::{ChannelSample, Dataset, Split};
use csifb_core::classicbf::RateParams;
use csifb_core::models::{BaselineAe, BaselineBf, CsiFBnetM, CsiFBnetS};
use csifb_core::trainharness::{
    evaluate, init_rng, split_samples, train, AeBf, AeConjPhase, BeamPolicy, ConjPhase, Metric, MultiCellOracle,
    Objective, TrainData, TrainOutcome, TrainStatus,
};
use ndarray::{concatenate, Array2, Axis};

use crate::config::{ExperimentConfig, MismatchAxis, ModelKind};
use crate::CliError;

// Initialization slots, so networks of one run start from distinct weights.
const SLOT_MAIN: u64 = 0;
const SLOT_AE_H: u64 = 1;
const SLOT_AE_G: u64 = 2;
const SLOT_BF: u64 = 3;

/// Which channel of a paired record a single-stream network sees.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Channel {
    H,
    G,
}

/// A dataset cut into training/validation batches and test samples.
pub struct Prepared {
    pub n_t: usize,
    pub train: TrainData<f32>,
    pub val: TrainData<f32>,
    pub test_h: Vec<ChannelSample>,
    pub test_g: Option<Vec<ChannelSample>>,
}

impl Prepared {
    pub fn new(ds: &Dataset) -> Result<Self, CliError> {
        let (test_h, test_g) = split_samples(ds, Split::Test);
        Ok(Self {
            n_t: ds.n_t,
            train: TrainData::from_split(ds, Split::Train)?,
            val: TrainData::from_split(ds, Split::Val)?,
            test_h,
            test_g,
        })
    }

    pub fn is_paired(&self) -> bool {
        self.train.g.is_some()
    }

    fn require_paired(&self, what: &str) -> Result<(), CliError> {
        if !self.is_paired() {
            return Err(CliError::Usage(format!("{what} needs a paired (h, g) dataset")));
        }
        Ok(())
    }

    /// Single-stream view on `h` or `g`.
    fn stream(&self, ch: Channel) -> Result<(TrainData<f32>, TrainData<f32>), CliError> {
        let pick = |d: &TrainData<f32>| -> Result<TrainData<f32>, CliError> {
            let h = match ch {
                Channel::H => d.h.clone(),
                Channel::G => d.g.clone().ok_or_else(|| CliError::Usage("the g stream needs a paired dataset".into()))?,
            };
            Ok(TrainData { h, g: None, input: None })
        };
        Ok((pick(&self.train)?, pick(&self.val)?))
    }

    pub fn mean_se<P: BeamPolicy + ?Sized>(&self, policy: &P, rho: f64) -> Result<f64, CliError> {
        Ok(evaluate(policy, &self.test_h, self.test_g.as_deref(), Metric::MeanSe { rho })?)
    }

    pub fn mean_rate<P: BeamPolicy + ?Sized>(&self, policy: &P, params: RateParams) -> Result<f64, CliError> {
        self.require_paired("the mean-rate metric")?;
        Ok(evaluate(policy, &self.test_h, self.test_g.as_deref(), Metric::MeanRate(params))?)
    }
}

fn finished<M>(what: &str, out: TrainOutcome<M>) -> TrainOutcome<M> {
    if let TrainStatus::Aborted { epoch, reason } = &out.status {
        log::warn!("{what}: stopped at epoch {epoch} ({reason}); keeping the best earlier model");
    }
    log::info!("{what}: best validation loss {:.6} at epoch {}", out.best_val_loss, out.best_epoch);
    out
}

pub fn fit_csifbnet_s(cfg: &ExperimentConfig, data: &Prepared, elements: usize) -> Result<TrainOutcome<CsiFBnetS<f32>>, CliError> {
    let net = CsiFBnetS::new(data.n_t, elements, cfg.bits, &mut init_rng(cfg.seed, SLOT_MAIN))?.with_leaky_slope(cfg.leaky_slope);
    let (tr, va) = data.stream(Channel::H)?;
    let out = train(net, &tr, &va, &cfg.train_config(cfg.objective_s()))?;
    Ok(finished("csifbnet-s", out))
}

pub fn fit_csifbnet_m(
    cfg: &ExperimentConfig,
    data: &Prepared,
    elements_h: usize,
    elements_g: usize,
) -> Result<TrainOutcome<CsiFBnetM<f32>>, CliError> {
    data.require_paired("csifbnet-m")?;
    let net = CsiFBnetM::new(data.n_t, elements_h, elements_g, cfg.bits, &mut init_rng(cfg.seed, SLOT_MAIN))?
        .with_leaky_slope(cfg.leaky_slope);
    let out = train(net, &data.train, &data.val, &cfg.train_config(cfg.objective_m()))?;
    Ok(finished("csifbnet-m", out))
}

pub fn fit_baseline_ae(
    cfg: &ExperimentConfig,
    data: &Prepared,
    ch: Channel,
    elements: usize,
) -> Result<TrainOutcome<BaselineAe<f32>>, CliError> {
    let slot = if ch == Channel::H { SLOT_AE_H } else { SLOT_AE_G };
    let ae = BaselineAe::new(data.n_t, elements, cfg.bits, &mut init_rng(cfg.seed, slot))?.with_leaky_slope(cfg.leaky_slope);
    let (tr, va) = data.stream(ch)?;
    let out = train(ae, &tr, &va, &cfg.train_config(Objective::Mse))?;
    Ok(finished("baseline-ae", out))
}

/// Frozen feedback autoencoders whose reconstructions feed a beamformer.
#[derive(Debug, Clone, Copy)]
pub struct Frozen<'a> {
    pub ae_h: &'a BaselineAe<f32>,
    pub ae_g: Option<&'a BaselineAe<f32>>,
}

fn reconstruct(frozen: Frozen<'_>, d: &TrainData<f32>) -> Result<Array2<f32>, CliError> {
    let rh = frozen.ae_h.reconstruct_batch(d.h.view())?;
    Ok(match (frozen.ae_g, &d.g) {
        (None, _) => rh,
        (Some(ae_g), Some(g)) => {
            let rg = ae_g.reconstruct_batch(g.view())?;
            concatenate(Axis(1), &[rh.view(), rg.view()]).expect("equal row counts")
        }
        (Some(_), None) => return Err(CliError::Usage("the g autoencoder needs a paired dataset".into())),
    })
}

/// NN beamformer: multi-cell (fed `h` and `g`) when the dataset is paired.
/// `frozen = None` trains on perfect CSI; otherwise on the autoencoders' outputs.
pub fn fit_baseline_bf(
    cfg: &ExperimentConfig,
    data: &Prepared,
    frozen: Option<Frozen<'_>>,
) -> Result<TrainOutcome<BaselineBf<f32>>, CliError> {
    let streams = if data.is_paired() { 2 } else { 1 };
    if let Some(f) = frozen {
        if f.ae_g.is_some() != (streams == 2) {
            return Err(CliError::Usage(
                "a paired dataset needs autoencoders for both h and g; an unpaired one only for h".into(),
            ));
        }
    }
    let objective = if streams == 2 { cfg.objective_m() } else { cfg.objective_s() };
    let bf = BaselineBf::new(data.n_t, streams, &mut init_rng(cfg.seed, SLOT_BF))?.with_leaky_slope(cfg.leaky_slope);
    let (tr, va) = match frozen {
        None => (data.train.clone(), data.val.clone()),
        Some(f) => (
            data.train.clone().with_input(reconstruct(f, &data.train)?)?,
            data.val.clone().with_input(reconstruct(f, &data.val)?)?,
        ),
    };
    let out = train(bf, &tr, &va, &cfg.train_config(objective))?;
    Ok(finished("baseline-bf", out))
}

/// Perfect-CSI reference: conjugate phase (single-cell) or the multi-cell search.
pub fn upper_bound(cfg: &ExperimentConfig, data: &Prepared, multi_cell: bool) -> Result<f64, CliError> {
    if multi_cell {
        let params = cfg.rate_params()?;
        data.mean_rate(
            &MultiCellOracle {
                params,
                restarts: cfg.oracle_restarts,
            },
            params,
        )
    } else {
        data.mean_se(&ConjPhase, cfg.rho())
    }
}

/// One cell of a sweep table: a value or the reason it is missing.
pub type Cell = Result<f64, String>;

fn cell(r: Result<f64, CliError>) -> Result<Cell, CliError> {
    match r {
        Ok(v) => Ok(Ok(v)),
        Err(CliError::Usage(m)) => Ok(Err(m)),
        Err(e) => Err(e),
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BitsRow {
    pub n_bits: u64,
    pub method: String,
    pub value: Cell,
}

pub const METHOD_CSIFBNET: &str = "csifbnet";
pub const METHOD_BASELINE: &str = "baseline";
pub const METHOD_BASELINE_1: &str = "baseline-1";
pub const METHOD_BASELINE_2: &str = "baseline-2";
pub const METHOD_UPPER_BOUND: &str = "upper-bound";

fn default_methods(multi_cell: bool) -> Vec<String> {
    let m: &[&str] = if multi_cell {
        &[METHOD_CSIFBNET, METHOD_BASELINE_1, METHOD_BASELINE_2]
    } else {
        &[METHOD_CSIFBNET, METHOD_BASELINE]
    };
    m.iter().map(|s| s.to_string()).collect()
}

/// Codeword length per stream for a total bit budget, or why there is none.
pub fn elements_for_bits(n_t: usize, bits: u32, n_bits: u64, streams: usize) -> Result<usize, String> {
    let per = bits as u64 * streams as u64;
    if n_bits == 0 || n_bits % per != 0 {
        return Err(format!("{n_bits} bits is not a positive multiple of {per} ({streams} stream(s) x {bits} bits per element)"));
    }
    let e = (n_bits / per) as usize;
    if (2 * n_t) % e != 0 {
        return Err(format!("codeword length {e} does not divide 2 nt = {}", 2 * n_t));
    }
    Ok(e)
}

/// Feedback-bit sweep: every method at every listed bit count, plus the
/// perfect-CSI reference. Multi-cell when the config's model is csifbnet-m.
pub fn sweep_bits(cfg: &ExperimentConfig, data: &Prepared) -> Result<Vec<BitsRow>, CliError> {
    let multi = cfg.model == ModelKind::CsiFBnetM;
    if multi {
        data.require_paired("a multi-cell sweep")?;
    }
    let methods = if cfg.methods.is_empty() { default_methods(multi) } else { cfg.methods.clone() };
    for m in &methods {
        let ok = m == METHOD_CSIFBNET
            || (!multi && m == METHOD_BASELINE)
            || (multi && (m == METHOD_BASELINE_1 || m == METHOD_BASELINE_2));
        if !ok {
            return Err(CliError::Usage(format!("method {m:?} is not available for this sweep")));
        }
    }
    let bound = upper_bound(cfg, data, multi)?;
    let params = cfg.rate_params()?;
    let streams = if multi { 2 } else { 1 };
    let mut rows = Vec::new();
    for &n_bits in &cfg.bits_list {
        let e = match elements_for_bits(data.n_t, cfg.bits, n_bits, streams) {
            Ok(e) => e,
            Err(reason) => {
                log::warn!("skipping {n_bits} bits: {reason}");
                for m in &methods {
                    rows.push(BitsRow {
                        n_bits,
                        method: m.clone(),
                        value: Err(reason.clone()),
                    });
                }
                continue;
            }
        };
        log::info!("{n_bits} feedback bits: codeword length {e} per stream");
        let mut aes: Option<(BaselineAe<f32>, Option<BaselineAe<f32>>)> = None;
        for m in &methods {
            let value = match m.as_str() {
                METHOD_CSIFBNET if multi => {
                    let net = fit_csifbnet_m(cfg, data, e, e)?.model;
                    cell(data.mean_rate(&net, params))?
                }
                METHOD_CSIFBNET => {
                    let net = fit_csifbnet_s(cfg, data, e)?.model;
                    cell(data.mean_se(&net, cfg.rho()))?
                }
                METHOD_BASELINE => {
                    let ae = fit_baseline_ae(cfg, data, Channel::H, e)?.model;
                    cell(data.mean_se(&AeConjPhase { ae }, cfg.rho()))?
                }
                _ => {
                    if aes.is_none() {
                        let ae_h = fit_baseline_ae(cfg, data, Channel::H, e)?.model;
                        let ae_g = fit_baseline_ae(cfg, data, Channel::G, e)?.model;
                        aes = Some((ae_h, Some(ae_g)));
                    }
                    let (ae_h, ae_g) = aes.as_ref().expect("trained above");
                    let frozen = Frozen {
                        ae_h,
                        ae_g: ae_g.as_ref(),
                    };
                    let fed = if m == METHOD_BASELINE_2 { Some(frozen) } else { None };
                    let bf = fit_baseline_bf(cfg, data, fed)?.model;
                    let policy = AeBf::new(ae_h.clone(), ae_g.clone(), bf)?;
                    cell(data.mean_rate(&policy, params))?
                }
            };
            rows.push(BitsRow {
                n_bits,
                method: m.clone(),
                value,
            });
        }
        rows.push(BitsRow {
            n_bits,
            method: METHOD_UPPER_BOUND.into(),
            value: Ok(bound),
        });
    }
    Ok(rows)
}

#[derive(Debug, Clone, PartialEq)]
pub struct AllocRow {
    pub elements_h: usize,
    pub elements_g: usize,
    pub value: Cell,
}

/// One CsiFBnet-m per `(elements_h, elements_g)` split, mean rate at the configured `(alpha, rho)`.
pub fn sweep_alloc(cfg: &ExperimentConfig, data: &Prepared) -> Result<Vec<AllocRow>, CliError> {
    data.require_paired("the allocation sweep")?;
    let params = cfg.rate_params()?;
    let mut rows = Vec::new();
    for &(eh, eg) in &cfg.alloc_list {
        let value = if eh == 0 || eg == 0 {
            Err("degenerate split: both streams need at least one element".to_string())
        } else {
            log::info!("allocation {eh}:{eg}");
            let net = fit_csifbnet_m(cfg, data, eh, eg)?.model;
            cell(data.mean_rate(&net, params))?
        };
        rows.push(AllocRow {
            elements_h: eh,
            elements_g: eg,
            value,
        });
    }
    Ok(rows)
}

#[derive(Debug, Clone, PartialEq)]
pub struct MismatchRow {
    pub axis: MismatchAxis,
    pub train_value: f64,
    pub test_value: f64,
    pub value: Cell,
}

/// `cfg` with one mismatch axis set to `value`.
pub fn with_axis(cfg: &ExperimentConfig, axis: MismatchAxis, value: f64) -> Result<ExperimentConfig, CliError> {
    let mut c = cfg.clone();
    c.set(axis.key(), &value.to_string()).map_err(CliError::Usage)?;
    c.validate()?;
    Ok(c)
}

enum Trained {
    S(CsiFBnetS<f32>),
    M(CsiFBnetM<f32>),
}

impl Trained {
    fn fit(cfg: &ExperimentConfig, data: &Prepared) -> Result<Self, CliError> {
        match cfg.model {
            ModelKind::CsiFBnetS => Ok(Self::S(fit_csifbnet_s(cfg, data, cfg.elements()?)?.model)),
            ModelKind::CsiFBnetM => {
                let (eh, eg) = cfg.elements_pair()?;
                Ok(Self::M(fit_csifbnet_m(cfg, data, eh, eg)?.model))
            }
            _ => Err(CliError::Usage("the mismatch study trains csifbnet-s or csifbnet-m".into())),
        }
    }

    fn score(&self, cfg: &ExperimentConfig, data: &Prepared) -> Result<f64, CliError> {
        match self {
            Self::S(net) => data.mean_se(net, cfg.rho()),
            Self::M(net) => data.mean_rate(net, cfg.rate_params()?),
        }
    }
}

/// Trains at every value of `axis` and evaluates each model at every value.
/// Path-count variants regenerate the dataset; the other axes reuse `dataset`
/// (or one generated from `cfg` when absent).
pub fn mismatch(
    cfg: &ExperimentConfig,
    axis: MismatchAxis,
    values: &[f64],
    dataset: Option<&Dataset>,
) -> Result<Vec<MismatchRow>, CliError> {
    if values.is_empty() {
        return Err(CliError::Usage("mismatch_values is empty".into()));
    }
    if axis == MismatchAxis::Alpha && cfg.model != ModelKind::CsiFBnetM {
        return Err(CliError::Usage("an alpha mismatch needs model = csifbnet-m".into()));
    }
    let paired = cfg.model == ModelKind::CsiFBnetM;
    let variants: Vec<ExperimentConfig> = values.iter().map(|&v| with_axis(cfg, axis, v)).collect::<Result<_, _>>()?;
    let shared = match (axis, dataset) {
        (MismatchAxis::Paths, _) => None,
        (_, Some(ds)) => Some(Prepared::new(ds)?),
        (_, None) => Some(Prepared::new(&Dataset::generate(&cfg.channel_config(), cfg.count, paired)?)?),
    };
    let per_variant: Vec<Prepared> = match &shared {
        Some(_) => Vec::new(),
        None => variants
            .iter()
            .map(|c| Prepared::new(&Dataset::generate(&c.channel_config(), c.count, paired)?))
            .collect::<Result<_, _>>()?,
    };
    let data_for = |i: usize| shared.as_ref().unwrap_or_else(|| &per_variant[i]);

    let mut rows = Vec::new();
    for (i, train_cfg) in variants.iter().enumerate() {
        log::info!("mismatch: training at {} = {}", axis.name(), values[i]);
        let model = Trained::fit(train_cfg, data_for(i))?;
        for (j, test_cfg) in variants.iter().enumerate() {
            rows.push(MismatchRow {
                axis,
                train_value: values[i],
                test_value: values[j],
                value: cell(model.score(test_cfg, data_for(j)))?,
            });
        }
    }
    Ok(rows)
}

/// Parses `key=value[,key=value]` over the mismatch keys.
fn parse_variant(cfg: &ExperimentConfig, spec: &str) -> Result<ExperimentConfig, CliError> {
    let mut c = cfg.clone();
    for part in spec.split(',').map(str::trim).filter(|s| !s.is_empty()) {
        let (k, v) = part
            .split_once('=')
            .ok_or_else(|| CliError::Usage(format!("variant {spec:?}: expected key=value")))?;
        let k = k.trim();
        if !["nc", "snr_db", "alpha"].contains(&k) {
            return Err(CliError::Usage(format!("variant key {k:?} is not one of nc, snr_db, alpha")));
        }
        c.set(k, v.trim()).map_err(CliError::Usage)?;
    }
    c.validate()?;
    Ok(c)
}

/// The single axis two variants differ on, with the train and test values.
pub fn variant_axis(cfg: &ExperimentConfig, train: &str, test: &str) -> Result<(MismatchAxis, [f64; 2]), CliError> {
    let a = parse_variant(cfg, train)?;
    let b = parse_variant(cfg, test)?;
    let mut diffs = Vec::new();
    if a.nc != b.nc {
        diffs.push((MismatchAxis::Paths, [a.nc as f64, b.nc as f64]));
    }
    if a.snr_db != b.snr_db {
        diffs.push((MismatchAxis::SnrDb, [a.snr_db, b.snr_db]));
    }
    if a.alpha != b.alpha {
        diffs.push((MismatchAxis::Alpha, [a.alpha, b.alpha]));
    }
    match diffs.len() {
        1 => Ok(diffs[0]),
        0 => Err(CliError::Usage("train and test variants are identical".into())),
        _ => Err(CliError::Usage("train and test variants differ in more than one of nc, snr_db, alpha".into())),
    }
}
