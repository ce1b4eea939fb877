//! Python bindings: channel parameters, codebooks, the threshold decoder,
//! Monte Carlo error estimates and the rate bounds.

use std::path::PathBuf;

use pyo3::exceptions::{PyIOError, PyIndexError, PyValueError};
use pyo3::prelude::*;

use binomial_di::{analysis, bounds, channel, codec, converse, packing, Error};

fn to_py(err: Error) -> PyErr {
    match err {
        Error::Io(_) => PyIOError::new_err(err.to_string()),
        Error::IndexOutOfRange { .. } => PyIndexError::new_err(err.to_string()),
        _ => PyValueError::new_err(err.to_string()),
    }
}

fn parse_mode(mode: &str) -> PyResult<codec::MetricMode> {
    match mode {
        "exact-floor" => Ok(codec::MetricMode::ExactFloor),
        "paper-approx" => Ok(codec::MetricMode::PaperApprox),
        other => Err(PyValueError::new_err(format!("unknown metric mode {other:?}"))),
    }
}

#[pyclass(name = "ChannelParams", frozen)]
struct PyChannelParams {
    inner: channel::ChannelParams,
}

#[pymethods]
impl PyChannelParams {
    #[new]
    #[pyo3(signature = (p, t_s, p_max, p_ave))]
    fn new(p: f64, t_s: f64, p_max: f64, p_ave: f64) -> PyResult<Self> {
        let inner = channel::ChannelParams::new(p, t_s, p_max, p_ave).map_err(to_py)?;
        Ok(Self { inner })
    }

    #[getter]
    fn p(&self) -> f64 {
        self.inner.p()
    }

    #[getter]
    fn amplitude(&self) -> f64 {
        self.inner.amplitude()
    }

    fn molecule_count(&self, x: f64) -> u64 {
        self.inner.molecule_count(x)
    }

    /// Draws one output vector for release rates `x`.
    fn sample(&self, x: Vec<f64>, seed: u64) -> PyResult<Vec<u64>> {
        let x = channel::ReleaseVector::new(x).map_err(to_py)?;
        let mut rng = binomial_di::SeedStream::new(seed).substream(&[]);
        Ok(channel::ChannelSampler::new(&self.inner).sample(&x, &mut rng).as_slice().to_vec())
    }

    fn __repr__(&self) -> String {
        format!(
            "ChannelParams(p={}, t_s={}, p_max={}, p_ave={})",
            self.inner.p(),
            self.inner.symbol_duration(),
            self.inner.peak_rate(),
            self.inner.average_rate()
        )
    }
}

#[pyclass(name = "Codebook", frozen)]
struct PyCodebook {
    inner: packing::Codebook,
}

#[pymethods]
impl PyCodebook {
    /// Random sequential insertion with defaults coupled to `params`.
    #[staticmethod]
    #[pyo3(signature = (params, n, b, seed, a=None, stop_k=None))]
    fn construct(
        params: &PyChannelParams,
        n: usize,
        b: f64,
        seed: u64,
        a: Option<f64>,
        stop_k: Option<u64>,
    ) -> PyResult<Self> {
        let mut cfg = packing::PackingConfig::coupled(n, b, &params.inner, seed);
        if let Some(a) = a {
            cfg.a = a;
        }
        if let Some(k) = stop_k {
            cfg.stop_k = k;
        }
        Ok(Self { inner: packing::construct_saturated(&cfg).map_err(to_py)? })
    }

    #[staticmethod]
    fn load(path: PathBuf) -> PyResult<Self> {
        Ok(Self { inner: packing::Codebook::load(&path).map_err(to_py)? })
    }

    fn save(&self, path: PathBuf) -> PyResult<()> {
        self.inner.save(&path).map_err(to_py)
    }

    #[getter]
    fn n(&self) -> usize {
        self.inner.n()
    }

    #[getter]
    fn r0(&self) -> f64 {
        self.inner.r0()
    }

    fn __len__(&self) -> usize {
        self.inner.len()
    }

    fn codewords(&self) -> Vec<Vec<f64>> {
        self.inner.codewords().to_vec()
    }

    fn validate(&self) -> PyResult<()> {
        self.inner.validate().map_err(to_py)
    }

    /// Fraction of the cube covered by the radius-`r0` balls.
    fn density(&self, trials: u64, seed: u64) -> (f64, f64) {
        let d = packing::density_estimate_par(&self.inner, trials, &binomial_di::SeedStream::new(seed));
        (d.estimate, d.stderr)
    }

    /// One-based codeword for message `i`.
    fn encode(&self, i: usize) -> PyResult<Vec<f64>> {
        Ok(codec::encode(i, &self.inner).map_err(to_py)?.into_inner())
    }

    /// `(accepted, metric)` for target `j`.
    #[pyo3(signature = (y, j, params, b, mode="exact-floor"))]
    fn identify(&self, y: Vec<u64>, j: usize, params: &PyChannelParams, b: f64, mode: &str) -> PyResult<(bool, f64)> {
        let cfg = codec::DecoderConfig::derived(params.inner.amplitude(), self.inner.n(), b, parse_mode(mode)?);
        let out = codec::identify(&channel::ObservationVector::new(y), j, &self.inner, &cfg, &params.inner)
            .map_err(to_py)?;
        Ok((out.accepted, out.metric_value))
    }

    /// Type I error estimate `(estimate, stderr)` for message `i`.
    #[pyo3(signature = (i, params, b, trials, seed, mode="exact-floor"))]
    fn type1(&self, i: usize, params: &PyChannelParams, b: f64, trials: u64, seed: u64, mode: &str) -> PyResult<(f64, f64)> {
        let cfg = codec::DecoderConfig::derived(params.inner.amplitude(), self.inner.n(), b, parse_mode(mode)?);
        let e = analysis::mc_type1(i, &self.inner, &cfg, &params.inner, trials, &binomial_di::SeedStream::new(seed))
            .map_err(to_py)?;
        Ok((e.estimate, e.stderr))
    }

    /// Type II error estimate `(estimate, stderr)` for sent `i`, target `j`.
    #[pyo3(signature = (i, j, params, b, trials, seed, mode="exact-floor"))]
    #[allow(clippy::too_many_arguments)]
    fn type2(
        &self,
        i: usize,
        j: usize,
        params: &PyChannelParams,
        b: f64,
        trials: u64,
        seed: u64,
        mode: &str,
    ) -> PyResult<(f64, f64)> {
        let cfg = codec::DecoderConfig::derived(params.inner.amplitude(), self.inner.n(), b, parse_mode(mode)?);
        let e = analysis::mc_type2(i, j, &self.inner, &cfg, &params.inner, trials, &binomial_di::SeedStream::new(seed))
            .map_err(to_py)?;
        Ok((e.estimate, e.stderr))
    }
}

#[pyfunction]
fn capture_probability(v_rx: f64, diffusion: f64, d: f64, tau: f64) -> PyResult<f64> {
    channel::capture_probability(v_rx, diffusion, d, tau).map_err(to_py)
}

#[pyfunction]
fn log_pmf(n_molecules: u64, p: f64, y: u64) -> PyResult<f64> {
    channel::log_pmf(n_molecules, p, y).map_err(to_py)
}

#[pyfunction]
#[pyo3(signature = (y, c, params, mode="exact-floor"))]
fn decoding_metric(y: Vec<u64>, c: Vec<f64>, params: &PyChannelParams, mode: &str) -> PyResult<f64> {
    let c = channel::ReleaseVector::new(c).map_err(to_py)?;
    codec::decoding_metric(&channel::ObservationVector::new(y), &c, &params.inner, parse_mode(mode)?).map_err(to_py)
}

#[pyfunction]
fn log2_sphere_volume(n: u64, r: f64) -> f64 {
    packing::log2_sphere_volume(n, r)
}

#[pyfunction]
fn type1_bound(params: &PyChannelParams, n: usize, b: f64, c_ref: f64) -> PyResult<f64> {
    analysis::analytic_type1_bound(&params.inner, n, b, c_ref).map_err(to_py)
}

#[pyfunction]
fn rate_lower(n: u64, amplitude: f64, a: f64, b: f64) -> PyResult<f64> {
    bounds::rate_lower(n, amplitude, a, b).map_err(to_py)
}

#[pyfunction]
fn rate_upper(n: u64, p_max: f64, b: f64) -> PyResult<f64> {
    bounds::rate_upper(n, p_max, b).map_err(to_py)
}

/// `(lower, upper, exact)` for `(Gamma(a)/Gamma(b))^(1/(a-b))`.
#[pyfunction]
fn gamma_ratio_bounds(a: f64, b: f64) -> PyResult<(f64, f64, f64)> {
    let g = converse::gamma_ratio_bounds(a, b).map_err(to_py)?;
    Ok((g.lower, g.upper, g.exact))
}

#[pymodule(name = "binomial_di")]
fn py_module(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyChannelParams>()?;
    m.add_class::<PyCodebook>()?;
    m.add_function(wrap_pyfunction!(capture_probability, m)?)?;
    m.add_function(wrap_pyfunction!(log_pmf, m)?)?;
    m.add_function(wrap_pyfunction!(decoding_metric, m)?)?;
    m.add_function(wrap_pyfunction!(log2_sphere_volume, m)?)?;
    m.add_function(wrap_pyfunction!(type1_bound, m)?)?;
    m.add_function(wrap_pyfunction!(rate_lower, m)?)?;
    m.add_function(wrap_pyfunction!(rate_upper, m)?)?;
    m.add_function(wrap_pyfunction!(gamma_ratio_bounds, m)?)?;
    Ok(())
}
