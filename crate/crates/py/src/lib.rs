//! Python bindings: datasets, the two CsiFBnet variants, the classical
//! beamformers and the complexity accounting.

use std::path::PathBuf;

use csifb_core::chanmodel::{ChannelGenConfig, ChannelSample, Dataset as CoreDataset, Split};
use csifb_core::classicbf::{self, RateParams};
use csifb_core::lut::Lut;
use csifb_core::models::{self, BeamVector, LossVariant};
use csifb_core::nncore::{complexity_report, Checkpoint, Quantizer};
use csifb_core::trainharness::{self, init_rng, split_samples, Metric, Objective, TrainConfig, TrainData, TrainOutcome};
use csifb_core::Error;
use num_complex::Complex64;
use pyo3::exceptions::{PyIOError, PyValueError};
use pyo3::prelude::*;

fn py_err(e: Error) -> PyErr {
    match e {
        Error::Io(e) => PyIOError::new_err(e.to_string()),
        other => PyValueError::new_err(other.to_string()),
    }
}

fn sample(h: Vec<Complex64>) -> PyResult<ChannelSample> {
    ChannelSample::new(h).map_err(py_err)
}

fn beam(v: Vec<Complex64>) -> PyResult<BeamVector> {
    BeamVector::new(v).map_err(py_err)
}

type Trace = Vec<(usize, f64, f64, f64)>;

fn fit<M: trainharness::Trainable<f32>>(
    model: M,
    ds: &CoreDataset,
    objective: Objective,
    epochs: usize,
    batch_size: usize,
    lr: f64,
    seed: u64,
) -> PyResult<(M, Trace)> {
    let train = TrainData::from_split(ds, Split::Train).map_err(py_err)?;
    let val = TrainData::from_split(ds, Split::Val).map_err(py_err)?;
    let config = TrainConfig {
        batch_size,
        epochs,
        lr_init: lr,
        seed,
        objective,
        ..TrainConfig::default()
    };
    let TrainOutcome { model, trace, .. } = trainharness::train(model, &train, &val, &config).map_err(py_err)?;
    let rows = trace.records.iter().map(|r| (r.epoch, r.train_loss, r.val_loss, r.lr)).collect();
    Ok((model, rows))
}

/// Channel dataset with a fixed train/validation/test split.
#[pyclass(module = "csifb")]
struct Dataset {
    inner: CoreDataset,
}

#[pymethods]
impl Dataset {
    /// `spread_deg` is the sub-path half-width around each cluster, degrees.
    #[staticmethod]
    #[pyo3(signature = (n_t=32, count=62_500, seed=0, paired=false, n_c=3, n_s=20, spread_deg=7.5, spacing=0.5))]
    #[allow(clippy::too_many_arguments)]
    fn generate(
        n_t: usize,
        count: usize,
        seed: u64,
        paired: bool,
        n_c: usize,
        n_s: usize,
        spread_deg: f64,
        spacing: f64,
    ) -> PyResult<Self> {
        let cfg = ChannelGenConfig {
            n_t,
            n_c,
            n_s,
            spacing_ratio: spacing,
            angular_spread: spread_deg.to_radians(),
            seed,
        };
        Ok(Self {
            inner: CoreDataset::generate(&cfg, count, paired).map_err(py_err)?,
        })
    }

    #[staticmethod]
    fn read(path: PathBuf) -> PyResult<Self> {
        Ok(Self {
            inner: CoreDataset::read(&path).map_err(py_err)?,
        })
    }

    fn write(&self, path: PathBuf) -> PyResult<()> {
        self.inner.write(&path).map_err(py_err)
    }

    fn __len__(&self) -> usize {
        self.inner.len()
    }

    #[getter]
    fn n_t(&self) -> usize {
        self.inner.n_t
    }

    #[getter]
    fn paired(&self) -> bool {
        self.inner.is_paired()
    }

    fn h(&self, i: usize) -> PyResult<Vec<Complex64>> {
        self.inner
            .h
            .get(i)
            .map(|s| s.as_slice().to_vec())
            .ok_or_else(|| PyValueError::new_err(format!("index {i} out of range")))
    }

    fn g(&self, i: usize) -> PyResult<Vec<Complex64>> {
        self.inner
            .g
            .as_ref()
            .and_then(|g| g.get(i))
            .map(|s| s.as_slice().to_vec())
            .ok_or_else(|| PyValueError::new_err(format!("no interfering channel at index {i}")))
    }

    /// Record indices of `"train"`, `"val"` or `"test"`.
    fn split(&self, name: &str) -> PyResult<Vec<usize>> {
        let split = match name {
            "train" => Split::Train,
            "val" => Split::Val,
            "test" => Split::Test,
            _ => return Err(PyValueError::new_err(format!("unknown split {name:?}"))),
        };
        Ok(self.inner.indices(split).to_vec())
    }
}

/// Single-cell implicit-feedback beamformer.
#[pyclass(module = "csifb")]
struct CsiFBnetS {
    inner: models::CsiFBnetS<f32>,
}

#[pymethods]
impl CsiFBnetS {
    #[new]
    #[pyo3(signature = (n_t, elements, bits=4, seed=0))]
    fn new(n_t: usize, elements: usize, bits: u32, seed: u64) -> PyResult<Self> {
        let inner = models::CsiFBnetS::new(n_t, elements, bits, &mut init_rng(seed, 0)).map_err(py_err)?;
        Ok(Self { inner })
    }

    #[staticmethod]
    #[pyo3(signature = (path, bits=4))]
    fn load(path: PathBuf, bits: u32) -> PyResult<Self> {
        let ck = Checkpoint::read(&path).map_err(py_err)?;
        Ok(Self {
            inner: models::CsiFBnetS::from_checkpoint(&ck, bits).map_err(py_err)?,
        })
    }

    fn save(&self, path: PathBuf) -> PyResult<()> {
        self.inner.to_checkpoint().write(&path).map_err(py_err)
    }

    #[getter]
    fn feedback_bits(&self) -> u64 {
        self.inner.feedback_bits()
    }

    /// Trains in place on the dataset's train split, keeping the
    /// best-validation weights. Returns `(epoch, train_loss, val_loss, lr)` rows.
    #[pyo3(signature = (dataset, epochs=200, batch_size=500, lr=1e-3, seed=0))]
    fn train(&mut self, dataset: &Dataset, epochs: usize, batch_size: usize, lr: f64, seed: u64) -> PyResult<Trace> {
        let obj = Objective::BeamS {
            variant: LossVariant::Abs2,
        };
        let (model, trace) = fit(self.inner.clone(), &dataset.inner, obj, epochs, batch_size, lr, seed)?;
        self.inner = model;
        Ok(trace)
    }

    /// Beam for one channel, plus the fed-back quantization indices.
    fn beam(&self, h: Vec<Complex64>) -> PyResult<(Vec<Complex64>, Vec<u32>)> {
        let (v, idx) = self.inner.forward(&sample(h)?).map_err(py_err)?;
        Ok((v.as_slice().to_vec(), idx))
    }

    /// Mean spectral efficiency over the dataset's test split.
    fn mean_se(&self, dataset: &Dataset, snr_db: f64) -> PyResult<f64> {
        let (h, _) = split_samples(&dataset.inner, Split::Test);
        let rho = 10f64.powf(snr_db / 10.0);
        trainharness::evaluate(&self.inner, &h, None, Metric::MeanSe { rho }).map_err(py_err)
    }

    fn export_lut(&self, path: PathBuf) -> PyResult<()> {
        Lut::from_csifbnet_s(&self.inner).and_then(|l| l.write(&path)).map_err(py_err)
    }
}

/// Multi-cell variant: separate encoders for the desired and interfering channel.
#[pyclass(module = "csifb")]
struct CsiFBnetM {
    inner: models::CsiFBnetM<f32>,
}

#[pymethods]
impl CsiFBnetM {
    #[new]
    #[pyo3(signature = (n_t, elements_h, elements_g, bits=4, seed=0))]
    fn new(n_t: usize, elements_h: usize, elements_g: usize, bits: u32, seed: u64) -> PyResult<Self> {
        let inner =
            models::CsiFBnetM::new(n_t, elements_h, elements_g, bits, &mut init_rng(seed, 0)).map_err(py_err)?;
        Ok(Self { inner })
    }

    #[staticmethod]
    #[pyo3(signature = (path, bits=4))]
    fn load(path: PathBuf, bits: u32) -> PyResult<Self> {
        let ck = Checkpoint::read(&path).map_err(py_err)?;
        Ok(Self {
            inner: models::CsiFBnetM::from_checkpoint(&ck, bits).map_err(py_err)?,
        })
    }

    fn save(&self, path: PathBuf) -> PyResult<()> {
        self.inner.to_checkpoint().write(&path).map_err(py_err)
    }

    #[getter]
    fn feedback_bits(&self) -> u64 {
        self.inner.feedback_bits()
    }

    #[pyo3(signature = (dataset, snr_db=15.0, alpha=0.1, epochs=200, batch_size=500, lr=1e-3, seed=0))]
    #[allow(clippy::too_many_arguments)]
    fn train(
        &mut self,
        dataset: &Dataset,
        snr_db: f64,
        alpha: f64,
        epochs: usize,
        batch_size: usize,
        lr: f64,
        seed: u64,
    ) -> PyResult<Trace> {
        let rho = RateParams::from_snr_db(snr_db, alpha).map_err(py_err)?.rho;
        let obj = Objective::BeamM { alpha, rho };
        let (model, trace) = fit(self.inner.clone(), &dataset.inner, obj, epochs, batch_size, lr, seed)?;
        self.inner = model;
        Ok(trace)
    }

    fn beam(&self, h: Vec<Complex64>, g: Vec<Complex64>) -> PyResult<(Vec<Complex64>, Vec<u32>)> {
        let (v, idx) = self.inner.forward(&sample(h)?, &sample(g)?).map_err(py_err)?;
        Ok((v.as_slice().to_vec(), idx))
    }

    /// Mean per-user rate over the test split of a paired dataset.
    fn mean_rate(&self, dataset: &Dataset, snr_db: f64, alpha: f64) -> PyResult<f64> {
        let (h, g) = split_samples(&dataset.inner, Split::Test);
        let g = g.ok_or_else(|| PyValueError::new_err("mean rate needs a paired dataset"))?;
        let params = RateParams::from_snr_db(snr_db, alpha).map_err(py_err)?;
        trainharness::evaluate(&self.inner, &h, Some(&g), Metric::MeanRate(params)).map_err(py_err)
    }

    fn export_lut(&self, path: PathBuf) -> PyResult<()> {
        Lut::from_csifbnet_m(&self.inner).and_then(|l| l.write(&path)).map_err(py_err)
    }
}

/// Phase of each beam entry set to the phase of the channel entry.
#[pyfunction]
fn conj_phase_bf(h: Vec<Complex64>) -> PyResult<Vec<Complex64>> {
    Ok(classicbf::conj_phase_bf(&sample(h)?).as_slice().to_vec())
}

#[pyfunction]
fn spectral_efficiency(h: Vec<Complex64>, v: Vec<Complex64>, snr_db: f64) -> PyResult<f64> {
    Ok(classicbf::spectral_efficiency(&sample(h)?, &beam(v)?, 10f64.powf(snr_db / 10.0)))
}

#[pyfunction]
fn sinr(h: Vec<Complex64>, g: Vec<Complex64>, v: Vec<Complex64>, snr_db: f64, alpha: f64) -> PyResult<f64> {
    let params = RateParams::from_snr_db(snr_db, alpha).map_err(py_err)?;
    Ok(classicbf::sinr(&sample(h)?, &sample(g)?, &beam(v)?, params))
}

/// Perfect-CSI multi-cell beam. Returns `(beam, sinr)`.
#[pyfunction]
#[pyo3(signature = (h, g, snr_db, alpha, restarts=8))]
fn multicell_oracle(
    h: Vec<Complex64>,
    g: Vec<Complex64>,
    snr_db: f64,
    alpha: f64,
    restarts: usize,
) -> PyResult<(Vec<Complex64>, f64)> {
    let params = RateParams::from_snr_db(snr_db, alpha).map_err(py_err)?;
    let r = classicbf::multicell_bf_oracle(&sample(h)?, &sample(g)?, params, restarts).map_err(py_err)?;
    Ok((r.beam.as_slice().to_vec(), r.sinr))
}

/// Uniform quantizer on [-1, 1]: `(index, reconstruction)`.
#[pyfunction]
fn quantize(x: f64, bits: u32) -> PyResult<(u32, f64)> {
    Ok(Quantizer::new(bits).map_err(py_err)?.quantize(x))
}

/// `(params, flops)` of a model: `"csifbnet-s"` uses `elements_h`,
/// `"csifbnet-m"` and `"baseline-m"` use both element counts.
#[pyfunction]
#[pyo3(signature = (model, n_t, elements_h, elements_g=None))]
fn complexity(model: &str, n_t: usize, elements_h: usize, elements_g: Option<usize>) -> PyResult<(u64, u64)> {
    let need_g = || elements_g.ok_or_else(|| PyValueError::new_err(format!("{model} needs elements_g")));
    let specs = match model {
        "csifbnet-s" => models::csifbnet_s_specs(n_t, elements_h),
        "baseline-ae" => models::baseline_ae_specs(n_t, elements_h),
        "csifbnet-m" => models::csifbnet_m_specs(n_t, elements_h, need_g()?),
        "baseline-m" => models::baseline_m_accounting_specs(n_t, elements_h, need_g()?),
        _ => return Err(PyValueError::new_err(format!("unknown model {model:?}"))),
    };
    let c = complexity_report(&specs);
    Ok((c.params, c.flops))
}

#[pymodule]
fn csifb(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<Dataset>()?;
    m.add_class::<CsiFBnetS>()?;
    m.add_class::<CsiFBnetM>()?;
    m.add_function(wrap_pyfunction!(conj_phase_bf, m)?)?;
    m.add_function(wrap_pyfunction!(spectral_efficiency, m)?)?;
    m.add_function(wrap_pyfunction!(sinr, m)?)?;
    m.add_function(wrap_pyfunction!(multicell_oracle, m)?)?;
    m.add_function(wrap_pyfunction!(quantize, m)?)?;
    m.add_function(wrap_pyfunction!(complexity, m)?)?;
    Ok(())
}
