use std::ffi::OsString;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use csifb_core::chanmodel::Dataset;
use csifb_core::lut::Lut;
use csifb_core::models::{complexity_table, BaselineAe, BaselineBf, CsiFBnetM, CsiFBnetS};
use csifb_core::nncore::{Checkpoint, ModelTag};
use csifb_core::trainharness::{evaluate_nmse, AeBf, AeConjPhase, TrainOutcome};

use crate::config::{ExperimentConfig, ModelKind};
use crate::experiments::{
    fit_baseline_ae, fit_baseline_bf, fit_csifbnet_m, fit_csifbnet_s, mismatch, sweep_alloc, sweep_bits, upper_bound,
    variant_axis, Cell, Channel, Frozen, Prepared,
};
use crate::CliError;

#[derive(Debug, Parser)]
#[command(name = "csifb", version, about = "Implicit CSI feedback beamforming experiments")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Args)]
pub struct Common {
    /// Experiment configuration (`key = value` lines).
    #[arg(long)]
    pub config: PathBuf,
    /// Overrides the config seed.
    #[arg(long)]
    pub seed: Option<u64>,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum ChannelArg {
    H,
    G,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate a channel dataset.
    GenData {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        out: PathBuf,
        /// Overrides the config record count.
        #[arg(long)]
        count: Option<usize>,
        /// Emit (h, g) pairs.
        #[arg(long)]
        paired: bool,
    },
    /// Train the configured model; writes the checkpoint and `<out>.loss.csv`.
    Train {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Frozen autoencoder for h (baseline-bf fed reconstructed CSI).
        #[arg(long)]
        ae_checkpoint: Option<PathBuf>,
        /// Frozen autoencoder for g (multi-cell baseline-bf).
        #[arg(long)]
        ae_checkpoint_g: Option<PathBuf>,
        /// Train baseline-bf on the true channels.
        #[arg(long)]
        perfect_csi: bool,
        /// Channel a baseline-ae learns to reconstruct.
        #[arg(long, value_enum, default_value = "h")]
        channel: ChannelArg,
    },
    /// Evaluate a checkpoint on the test split.
    Eval {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        ae_checkpoint: Option<PathBuf>,
        #[arg(long)]
        ae_checkpoint_g: Option<PathBuf>,
        /// CSV destination; stdout when absent.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Mean metric versus total feedback bits for each method.
    SweepBits {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Multi-cell mean rate for each (elements_h, elements_g) split.
    SweepAlloc {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Train under one setting, test under another.
    Mismatch {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        out: PathBuf,
        /// Dataset reused by SNR and alpha studies; generated from the config when absent.
        #[arg(long)]
        data: Option<PathBuf>,
        /// e.g. `nc=3`; requires --test-variant. Overrides mismatch_axis/mismatch_values.
        #[arg(long, requires = "test_variant")]
        train_variant: Option<String>,
        #[arg(long, requires = "train_variant")]
        test_variant: Option<String>,
    },
    /// Tabulate the decoder over every codeword.
    ExportLut {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Weights and FLOPs of every architecture.
    Complexity {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

/// Parses `args` (program name first), runs the command and returns the exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    match execute(cli.command) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}

fn load_config(common: &Common) -> Result<ExperimentConfig, CliError> {
    let mut cfg = ExperimentConfig::load(&common.config)?;
    if let Some(s) = common.seed {
        cfg.seed = s;
    }
    Ok(cfg)
}

fn read_dataset(path: &Path) -> Result<Dataset, CliError> {
    Ok(Dataset::read(path)?)
}

fn read_checkpoint(path: &Path) -> Result<Checkpoint, CliError> {
    Ok(Checkpoint::read(path)?)
}

fn csv_field(s: &str) -> String {
    if s.contains([',', '"', '\n']) {
        format!("\"{}\"", s.replace('"', "\"\""))
    } else {
        s.to_string()
    }
}

fn cell_fields(c: &Cell) -> String {
    match c {
        Ok(v) => format!("{v},"),
        Err(reason) => format!(",{}", csv_field(reason)),
    }
}

fn write_text(path: Option<&Path>, text: &str) -> Result<(), CliError> {
    match path {
        Some(p) => Ok(csifb_core::write_atomic(p, text.as_bytes())?),
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

fn loss_csv_path(out: &Path) -> PathBuf {
    let mut s = out.as_os_str().to_owned();
    s.push(".loss.csv");
    PathBuf::from(s)
}

fn save<M>(out: &Path, outcome: &TrainOutcome<M>, ck: Checkpoint) -> Result<(), CliError> {
    ck.write(out)?;
    outcome.trace.write_csv(&loss_csv_path(out))?;
    Ok(())
}

pub const SWEEP_BITS_HEADER: &str = "n_bits,method,mean_metric,reason";
pub const SWEEP_ALLOC_HEADER: &str = "elements_h,elements_g,n_bits_h,n_bits_g,mean_rate,reason";
pub const MISMATCH_HEADER: &str = "axis,train_value,test_value,mean_metric,reason";
pub const COMPLEXITY_HEADER: &str = "model,params,flops";
pub const EVAL_HEADER: &str = "metric,value";

fn execute(cmd: Command) -> Result<(), CliError> {
    match cmd {
        Command::GenData {
            common,
            out,
            count,
            paired,
        } => {
            let cfg = load_config(&common)?;
            let count = count.unwrap_or(cfg.count);
            let ds = Dataset::generate(&cfg.channel_config(), count, paired)?;
            ds.write(&out)?;
            log::info!("wrote {count} records to {}", out.display());
            Ok(())
        }
        Command::Train {
            common,
            data,
            out,
            ae_checkpoint,
            ae_checkpoint_g,
            perfect_csi,
            channel,
        } => {
            let cfg = load_config(&common)?;
            let ds = read_dataset(&data)?;
            check_dataset(&cfg, &ds)?;
            if cfg.model == ModelKind::CsiFBnetM && !ds.is_paired() {
                return Err(CliError::Usage("csifbnet-m needs a paired dataset (gen-data --paired)".into()));
            }
            if cfg.model == ModelKind::BaselineBf {
                if perfect_csi && ae_checkpoint.is_some() {
                    return Err(CliError::Usage("--perfect-csi and --ae-checkpoint are mutually exclusive".into()));
                }
                if !perfect_csi && ae_checkpoint.is_none() {
                    return Err(CliError::Usage(
                        "baseline-bf needs a frozen autoencoder (--ae-checkpoint) or --perfect-csi".into(),
                    ));
                }
                if !perfect_csi && ds.is_paired() && ae_checkpoint_g.is_none() {
                    return Err(CliError::Usage("a paired dataset also needs --ae-checkpoint-g".into()));
                }
            }
            let prep = Prepared::new(&ds)?;
            match cfg.model {
                ModelKind::CsiFBnetS => {
                    let o = fit_csifbnet_s(&cfg, &prep, cfg.elements()?)?;
                    save(&out, &o, o.model.to_checkpoint())
                }
                ModelKind::CsiFBnetM => {
                    let (eh, eg) = cfg.elements_pair()?;
                    let o = fit_csifbnet_m(&cfg, &prep, eh, eg)?;
                    save(&out, &o, o.model.to_checkpoint())
                }
                ModelKind::BaselineAe => {
                    let (ch, e) = match channel {
                        ChannelArg::H => (Channel::H, cfg.elements_h.map_or_else(|| cfg.elements(), Ok)?),
                        ChannelArg::G => (Channel::G, cfg.elements_g.map_or_else(|| cfg.elements(), Ok)?),
                    };
                    let o = fit_baseline_ae(&cfg, &prep, ch, e)?;
                    save(&out, &o, o.model.to_checkpoint())
                }
                ModelKind::BaselineBf => {
                    let ae_h = ae_checkpoint.as_deref().map(|p| load_ae(p, &cfg)).transpose()?;
                    let ae_g = match (&ae_h, ae_checkpoint_g) {
                        (Some(_), Some(p)) => Some(load_ae(&p, &cfg)?),
                        _ => None,
                    };
                    let frozen = ae_h.as_ref().map(|ae_h| Frozen {
                        ae_h,
                        ae_g: ae_g.as_ref(),
                    });
                    let o = fit_baseline_bf(&cfg, &prep, frozen)?;
                    save(&out, &o, o.model.to_checkpoint())
                }
            }
        }
        Command::Eval {
            common,
            data,
            checkpoint,
            ae_checkpoint,
            ae_checkpoint_g,
            out,
        } => {
            let cfg = load_config(&common)?;
            let ds = read_dataset(&data)?;
            check_dataset(&cfg, &ds)?;
            let prep = Prepared::new(&ds)?;
            let ck = read_checkpoint(&checkpoint)?;
            let mut rows: Vec<(&str, f64)> = Vec::new();
            match ck.tag {
                ModelTag::CsiFBnetS => {
                    let net = CsiFBnetS::from_checkpoint(&ck, cfg.bits)?.with_leaky_slope(cfg.leaky_slope);
                    rows.push(("mean_se", prep.mean_se(&net, cfg.rho())?));
                    rows.push(("upper_bound_se", upper_bound(&cfg, &prep, false)?));
                }
                ModelTag::CsiFBnetM => {
                    let net = CsiFBnetM::from_checkpoint(&ck, cfg.bits)?.with_leaky_slope(cfg.leaky_slope);
                    rows.push(("mean_rate", prep.mean_rate(&net, cfg.rate_params()?)?));
                    rows.push(("upper_bound_rate", upper_bound(&cfg, &prep, true)?));
                }
                ModelTag::BaselineAe => {
                    let ae = BaselineAe::from_checkpoint(&ck, cfg.bits)?.with_leaky_slope(cfg.leaky_slope);
                    rows.push(("nmse_db", evaluate_nmse(&ae, &prep.test_h)?));
                    rows.push(("mean_se", prep.mean_se(&AeConjPhase { ae }, cfg.rho())?));
                }
                ModelTag::BaselineBf => {
                    let bf = BaselineBf::from_checkpoint(&ck)?.with_leaky_slope(cfg.leaky_slope);
                    let ae_path = ae_checkpoint
                        .ok_or_else(|| CliError::Usage("evaluating baseline-bf needs --ae-checkpoint".into()))?;
                    let ae_h = load_ae(&ae_path, &cfg)?;
                    let ae_g = if bf.streams() == 2 {
                        let p = ae_checkpoint_g
                            .ok_or_else(|| CliError::Usage("a multi-cell baseline-bf needs --ae-checkpoint-g".into()))?;
                        Some(load_ae(&p, &cfg)?)
                    } else {
                        None
                    };
                    let streams = bf.streams();
                    let policy = AeBf::new(ae_h, ae_g, bf)?;
                    if streams == 2 {
                        rows.push(("mean_rate", prep.mean_rate(&policy, cfg.rate_params()?)?));
                    } else {
                        rows.push(("mean_se", prep.mean_se(&policy, cfg.rho())?));
                    }
                }
            }
            let mut text = format!("{EVAL_HEADER}\n");
            for (k, v) in rows {
                let _ = writeln!(text, "{k},{v}");
            }
            write_text(out.as_deref(), &text)
        }
        Command::SweepBits { common, data, out } => {
            let cfg = load_config(&common)?;
            let ds = read_dataset(&data)?;
            check_dataset(&cfg, &ds)?;
            let rows = sweep_bits(&cfg, &Prepared::new(&ds)?)?;
            let mut text = format!("{SWEEP_BITS_HEADER}\n");
            for r in rows {
                let _ = writeln!(text, "{},{},{}", r.n_bits, csv_field(&r.method), cell_fields(&r.value));
            }
            write_text(Some(&out), &text)
        }
        Command::SweepAlloc { common, data, out } => {
            let cfg = load_config(&common)?;
            let ds = read_dataset(&data)?;
            check_dataset(&cfg, &ds)?;
            let rows = sweep_alloc(&cfg, &Prepared::new(&ds)?)?;
            let b = cfg.bits as usize;
            let mut text = format!("{SWEEP_ALLOC_HEADER}\n");
            for r in rows {
                let _ = writeln!(
                    text,
                    "{},{},{},{},{}",
                    r.elements_h,
                    r.elements_g,
                    r.elements_h * b,
                    r.elements_g * b,
                    cell_fields(&r.value)
                );
            }
            write_text(Some(&out), &text)
        }
        Command::Mismatch {
            common,
            out,
            data,
            train_variant,
            test_variant,
        } => {
            let cfg = load_config(&common)?;
            let (axis, values) = match (train_variant, test_variant) {
                (Some(a), Some(b)) => {
                    let (axis, v) = variant_axis(&cfg, &a, &b)?;
                    (axis, v.to_vec())
                }
                _ => (cfg.mismatch_axis, cfg.mismatch_values.clone()),
            };
            let ds = data.as_deref().map(read_dataset).transpose()?;
            if let Some(ds) = &ds {
                check_dataset(&cfg, ds)?;
            }
            let rows = mismatch(&cfg, axis, &values, ds.as_ref())?;
            let mut text = format!("{MISMATCH_HEADER}\n");
            for r in rows {
                let _ = writeln!(
                    text,
                    "{},{},{},{}",
                    r.axis.name(),
                    r.train_value,
                    r.test_value,
                    cell_fields(&r.value)
                );
            }
            write_text(Some(&out), &text)
        }
        Command::ExportLut { common, checkpoint, out } => {
            let cfg = load_config(&common)?;
            let ck = read_checkpoint(&checkpoint)?;
            let lut = match ck.tag {
                ModelTag::CsiFBnetS => Lut::from_csifbnet_s(&CsiFBnetS::from_checkpoint(&ck, cfg.bits)?.with_leaky_slope(cfg.leaky_slope)),
                ModelTag::CsiFBnetM => Lut::from_csifbnet_m(&CsiFBnetM::from_checkpoint(&ck, cfg.bits)?.with_leaky_slope(cfg.leaky_slope)),
                t => return Err(CliError::Usage(format!("{} has no codeword decoder to tabulate", t.name()))),
            };
            let lut = lut.map_err(|e| match e {
                csifb_core::Error::Infeasible(m) => CliError::Usage(m),
                e => CliError::Runtime(e),
            })?;
            lut.write(&out)?;
            log::info!("wrote {} rows to {}", lut.rows(), out.display());
            Ok(())
        }
        Command::Complexity { common, out } => {
            let cfg = load_config(&common)?;
            let e = cfg.elements()?;
            let (eh, eg) = cfg.elements_pair()?;
            let mut text = format!("{COMPLEXITY_HEADER}\n");
            for (name, c) in complexity_table(cfg.nt, e, eh, eg) {
                let _ = writeln!(text, "{name},{},{}", c.params, c.flops);
            }
            write_text(out.as_deref(), &text)
        }
    }
}

fn check_dataset(cfg: &ExperimentConfig, ds: &Dataset) -> Result<(), CliError> {
    if ds.n_t != cfg.nt {
        return Err(CliError::Usage(format!("dataset has nt = {} but the config says {}", ds.n_t, cfg.nt)));
    }
    Ok(())
}

fn load_ae(path: &Path, cfg: &ExperimentConfig) -> Result<BaselineAe<f32>, CliError> {
    let ck = read_checkpoint(path)?;
    Ok(BaselineAe::from_checkpoint(&ck, cfg.bits)?.with_leaky_slope(cfg.leaky_slope))
}
