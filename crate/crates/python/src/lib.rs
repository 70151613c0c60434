//! Python bindings: experiment configuration and runs, the channel model,
//! the ACO-OFDM and OOK modems, and the positioning chain.
//!
//! Configurations cross the boundary as JSON strings so that Python sees the
//! same schema as the CLI.

// pyo3 0.22's method macros trip this lint on every fallible method
#![allow(clippy::useless_conversion)]

use num_complex::Complex64;
use pyo3::exceptions::PyValueError;
use pyo3::prelude::*;
use pyo3::types::PyDict;

use vlcpos_core as core;
use vlcpos_core::harness::{self, Modulation, PointRecord};

fn err(e: core::Error) -> PyErr {
    PyValueError::new_err(e.to_string())
}

fn parse_modulation(s: &str) -> PyResult<Modulation> {
    match s {
        "ofdm" => Ok(Modulation::Ofdm),
        "ook" => Ok(Modulation::Ook),
        _ => Err(PyValueError::new_err(format!("unknown modulation {s:?}"))),
    }
}

#[pyclass(module = "vlcpos")]
#[derive(Clone)]
struct ExperimentConfig {
    inner: harness::ExperimentConfig,
}

#[pymethods]
impl ExperimentConfig {
    #[new]
    #[pyo3(signature = (json=None))]
    fn new(json: Option<&str>) -> PyResult<Self> {
        let inner = match json {
            Some(text) => harness::ExperimentConfig::from_json(text).map_err(err)?,
            None => harness::ExperimentConfig::default(),
        };
        Ok(Self { inner })
    }

    #[staticmethod]
    fn load(path: &str) -> PyResult<Self> {
        Ok(Self {
            inner: harness::ExperimentConfig::load(path.as_ref()).map_err(err)?,
        })
    }

    fn to_json(&self) -> String {
        self.inner.to_json()
    }

    fn validate(&self) -> PyResult<()> {
        self.inner.validate().map_err(err)
    }

    #[getter]
    fn grid_step(&self) -> f64 {
        self.inner.grid_step
    }

    #[setter]
    fn set_grid_step(&mut self, v: f64) {
        self.inner.grid_step = v;
    }

    #[getter]
    fn max_bounces(&self) -> usize {
        self.inner.max_bounces
    }

    #[setter]
    fn set_max_bounces(&mut self, v: usize) {
        self.inner.max_bounces = v;
    }

    #[getter]
    fn rng_seed(&self) -> u64 {
        self.inner.rng_seed
    }

    #[setter]
    fn set_rng_seed(&mut self, v: u64) {
        self.inner.rng_seed = v;
    }

    #[getter]
    fn surface_element_size(&self) -> f64 {
        self.inner.scene.surface_element_size
    }

    #[setter]
    fn set_surface_element_size(&mut self, v: f64) {
        self.inner.scene.surface_element_size = v;
    }

    #[getter]
    fn led_nonlinearity(&self) -> bool {
        self.inner.led_nonlinearity
    }

    #[setter]
    fn set_led_nonlinearity(&mut self, v: bool) {
        self.inner.led_nonlinearity = v;
    }

    #[getter]
    fn modulations(&self) -> Vec<&'static str> {
        self.inner.modulations.iter().map(|m| m.as_str()).collect()
    }

    #[setter]
    fn set_modulations(&mut self, v: Vec<String>) -> PyResult<()> {
        self.inner.modulations = v.iter().map(|s| parse_modulation(s)).collect::<PyResult<_>>()?;
        Ok(())
    }

    /// Replaces every reflectivity with zero.
    fn make_absorbing(&mut self) {
        self.inner.scene = self.inner.scene.absorbing();
    }

    fn __repr__(&self) -> String {
        format!(
            "ExperimentConfig(grid_step={}, max_bounces={}, modulations={:?}, rng_seed={})",
            self.inner.grid_step,
            self.inner.max_bounces,
            self.modulations(),
            self.inner.rng_seed
        )
    }
}

fn record_dict<'py>(py: Python<'py>, r: &PointRecord) -> PyResult<Bound<'py, PyDict>> {
    let d = PyDict::new_bound(py);
    d.set_item("modulation", r.modulation.as_str())?;
    d.set_item("x_true", r.x_true)?;
    d.set_item("y_true", r.y_true)?;
    d.set_item("x_est", r.x_est)?;
    d.set_item("y_est", r.y_est)?;
    d.set_item("error", r.error)?;
    d.set_item("flags", r.flags.iter().map(|f| f.to_string()).collect::<Vec<_>>())?;
    d.set_item(
        "p_bar",
        r.estimates.iter().map(|e| (e.tx_id, e.p_bar)).collect::<Vec<_>>(),
    )?;
    Ok(d)
}

#[pyclass(module = "vlcpos")]
struct Experiment {
    inner: harness::Experiment,
}

#[pymethods]
impl Experiment {
    #[new]
    fn new(cfg: &ExperimentConfig) -> PyResult<Self> {
        Ok(Self {
            inner: harness::Experiment::new(&cfg.inner).map_err(err)?,
        })
    }

    /// Returns `{modulation: record}` for the receiver at `(x, y)`.
    #[pyo3(signature = (x, y, index=0))]
    fn run_point<'py>(&self, py: Python<'py>, x: f64, y: f64, index: u64) -> PyResult<Bound<'py, PyDict>> {
        let out = py.allow_threads(|| self.inner.run_point(x, y, index)).map_err(err)?;
        let d = PyDict::new_bound(py);
        for r in [out.ofdm, out.ook].iter().flatten() {
            d.set_item(r.modulation.as_str(), record_dict(py, r)?)?;
        }
        Ok(d)
    }

    #[pyo3(signature = (workers=1))]
    fn run_grid(&self, py: Python<'_>, workers: usize) -> PyResult<GridResult> {
        let inner = py.allow_threads(|| self.inner.run_grid(workers)).map_err(err)?;
        Ok(GridResult { inner })
    }

    fn dump_frames(&self, dir: &str) -> PyResult<Vec<String>> {
        let paths = self.inner.dump_frames(dir.as_ref()).map_err(err)?;
        Ok(paths.iter().map(|p| p.display().to_string()).collect())
    }
}

#[pyclass(module = "vlcpos")]
struct GridResult {
    inner: harness::GridResult,
}

#[pymethods]
impl GridResult {
    #[getter]
    fn modulations(&self) -> Vec<&'static str> {
        self.inner.maps.iter().map(|m| m.modulation.as_str()).collect()
    }

    #[getter]
    fn grid_shape(&self) -> (usize, usize) {
        self.inner.metadata.grid_shape
    }

    fn summary<'py>(&self, py: Python<'py>, modulation: &str) -> PyResult<Bound<'py, PyDict>> {
        let m = parse_modulation(modulation)?;
        let map = self
            .inner
            .map(m)
            .ok_or_else(|| PyValueError::new_err(format!("{modulation} was not run")))?;
        let s = &map.summary;
        let d = PyDict::new_bound(py);
        d.set_item("rms_whole", s.rms_whole)?;
        d.set_item("rms_rect", s.rms_rect)?;
        d.set_item("corner_err", s.corner_err)?;
        d.set_item("edge_err", s.edge_err)?;
        d.set_item("center_err", s.center_err)?;
        d.set_item("max_err", s.max_err)?;
        d.set_item("points", s.points)?;
        d.set_item("failed_points", s.failed_points)?;
        Ok(d)
    }

    /// Per-point records in row-major order (y outer, x inner).
    fn records<'py>(&self, py: Python<'py>, modulation: &str) -> PyResult<Vec<Bound<'py, PyDict>>> {
        let m = parse_modulation(modulation)?;
        self.inner
            .map(m)
            .map(|map| map.records.iter().map(|r| record_dict(py, r)).collect())
            .unwrap_or_else(|| Ok(Vec::new()))
    }

    /// Writes errors.csv, summary.json and histogram.csv.
    fn emit(&self, out_dir: &str) -> PyResult<Vec<String>> {
        let paths = harness::emit_results(&self.inner.maps, Some(&self.inner.metadata), out_dir.as_ref())
            .map_err(err)?;
        Ok(paths.iter().map(|p| p.display().to_string()).collect())
    }
}

#[pyclass(module = "vlcpos")]
struct AcoOfdm {
    inner: core::acoofdm::AcoOfdm,
}

#[pymethods]
impl AcoOfdm {
    #[new]
    #[pyo3(signature = (n_subcarriers=512, cp_length=16, constellation_size=32, data_rate=25e6))]
    fn new(n_subcarriers: usize, cp_length: usize, constellation_size: usize, data_rate: f64) -> PyResult<Self> {
        let cfg = core::acoofdm::OfdmConfig {
            n_subcarriers,
            cp_length,
            constellation_size,
            data_rate,
        };
        Ok(Self {
            inner: core::acoofdm::AcoOfdm::new(&cfg).map_err(err)?,
        })
    }

    #[getter]
    fn data_subcarriers(&self) -> usize {
        self.inner.config().data_subcarriers()
    }

    #[getter]
    fn frame_len(&self) -> usize {
        self.inner.config().frame_len()
    }

    #[getter]
    fn sample_period(&self) -> f64 {
        self.inner.config().sample_period()
    }

    fn modulate_bits(&self, bits: Vec<bool>) -> PyResult<Vec<Complex64>> {
        self.inner.constellation().modulate(&bits).map_err(err)
    }

    fn demodulate_bits(&self, symbols: Vec<Complex64>) -> Vec<bool> {
        self.inner.constellation().demodulate(&symbols)
    }

    /// Returns `{"freq_domain", "time_domain", "clipped"}`.
    fn transmit<'py>(&self, py: Python<'py>, symbols: Vec<Complex64>) -> PyResult<Bound<'py, PyDict>> {
        let f = self.inner.transmit(&symbols).map_err(err)?;
        let d = PyDict::new_bound(py);
        d.set_item("freq_domain", f.freq_domain)?;
        d.set_item("time_domain", f.time_domain)?;
        d.set_item("clipped", f.clipped)?;
        Ok(d)
    }

    fn demodulate(&self, rx_samples: Vec<f64>) -> PyResult<Vec<Complex64>> {
        self.inner.demodulate(&rx_samples).map_err(err)
    }

    fn receive(&self, rx_samples: Vec<f64>, eq: Vec<Complex64>) -> PyResult<Vec<Complex64>> {
        self.inner.receive(&rx_samples, &eq).map_err(err)
    }

    /// Returns `(per-subcarrier gains, p_bar)` from one received training frame.
    fn estimate_channel(&self, training: Vec<Complex64>, rx_samples: Vec<f64>) -> PyResult<(Vec<Complex64>, f64)> {
        let raw = self.inner.demodulate(&rx_samples).map_err(err)?;
        let est = self.inner.estimate_channel(&training, &raw).map_err(err)?;
        Ok((est.gains, est.p_bar))
    }
}

#[pyclass(module = "vlcpos")]
#[derive(Clone)]
struct ImpulseResponse {
    inner: core::channel::ImpulseResponse,
}

#[pymethods]
impl ImpulseResponse {
    #[getter]
    fn bin_width(&self) -> f64 {
        self.inner.bin_width
    }

    #[getter]
    fn t0(&self) -> f64 {
        self.inner.t0
    }

    #[getter]
    fn gains(&self) -> Vec<f64> {
        self.inner.gains.clone()
    }

    #[getter]
    fn los_gain(&self) -> f64 {
        self.inner.los_gain
    }

    #[getter]
    fn total_gain(&self) -> f64 {
        self.inner.total_gain
    }

    fn convolve(&self, signal: Vec<f64>) -> Vec<f64> {
        self.inner.convolve(&signal)
    }

    fn transfer(&self, k: usize, n: usize) -> Complex64 {
        self.inner.transfer(k, n)
    }
}

/// Impulse responses of every transmitter at `(x, y)` for the scene in `cfg`.
#[pyfunction]
fn impulse_responses(cfg: &ExperimentConfig, x: f64, y: f64, bin_width: f64) -> PyResult<Vec<ImpulseResponse>> {
    let c = &cfg.inner;
    let rx = c.receiver.at(x, y);
    core::channel::ChannelSimulator::new(&c.scene, &c.transmitters, c.max_bounces)
        .and_then(|sim| {
            (0..c.transmitters.len())
                .map(|i| sim.impulse_response(i, &rx, bin_width))
                .collect::<core::Result<Vec<_>>>()
        })
        .map(|v| v.into_iter().map(|inner| ImpulseResponse { inner }).collect())
        .map_err(err)
}

/// Line-of-sight DC gain from the LED at `tx` to the default receiver at `(x, y)`.
#[pyfunction]
#[pyo3(signature = (tx, x, y, lambertian_order=1.0))]
fn los_dc_gain(tx: (f64, f64, f64), x: f64, y: f64, lambertian_order: f64) -> PyResult<f64> {
    let mut spec = core::scene::TransmitterSpec::new(1, tx.0, tx.1, tx.2);
    spec.lambertian_order = lambertian_order;
    core::channel::los_dc_gain(&spec, &core::scene::ReceiverSpec::default().at(x, y)).map_err(err)
}

#[pyfunction]
fn concentrator_gain(psi: f64, fov: f64, refractive_index: f64) -> PyResult<f64> {
    core::channel::concentrator_gain(psi, fov, refractive_index).map_err(err)
}

#[pyfunction]
fn lambertian_order(half_power_angle_deg: f64) -> PyResult<f64> {
    core::channel::lambertian_order(half_power_angle_deg).map_err(err)
}

/// Inverts a gain estimate to `(d, outside_fov)` using the default receiver
/// optics and the given heights.
#[pyfunction]
#[pyo3(signature = (p_bar, tx_height=3.3, rx_height=1.2, lambertian_order=1.0))]
fn estimate_distance(p_bar: f64, tx_height: f64, rx_height: f64, lambertian_order: f64) -> PyResult<(f64, bool)> {
    let mut tx = core::scene::TransmitterSpec::new(1, 0.0, 0.0, tx_height);
    tx.lambertian_order = lambertian_order;
    let mut rx = core::scene::ReceiverSpec::default();
    rx.position.z = rx_height;
    let params = core::positioning::LinkParams::from_specs(&tx, &rx);
    let est = core::positioning::ChannelEstimate {
        tx_id: 1,
        tx_coords: (0.0, 0.0),
        p_bar,
    };
    let r = core::positioning::estimate_distance(&est, &params).map_err(err)?;
    Ok((r.d, r.outside_fov))
}

/// `(r, clamped)`.
#[pyfunction]
fn horizontal_range(d: f64, tx_height: f64, rx_height: f64) -> (f64, bool) {
    let r = core::positioning::horizontal_range(d, tx_height, rx_height);
    (r.r, r.clamped)
}

/// Least-squares position from `[(x, y, r), ...]`; returns `(x, y, residual)`.
#[pyfunction]
fn laterate(anchors: Vec<(f64, f64, f64)>) -> PyResult<(f64, f64, f64)> {
    let a: Vec<_> = anchors
        .iter()
        .enumerate()
        .map(|(i, &(x, y, r))| core::positioning::Anchor { id: i as u8, x, y, r })
        .collect();
    let p = core::positioning::laterate(&a).map_err(err)?;
    Ok((p.x, p.y, p.residual_norm))
}

#[pyfunction]
#[pyo3(signature = (bits, power_high=5.0, power_low=3.0))]
fn transmit_ook(bits: Vec<bool>, power_high: f64, power_low: f64) -> PyResult<Vec<f64>> {
    let cfg = core::ook::OokConfig {
        power_high,
        power_low,
        ..Default::default()
    };
    core::ook::transmit_ook(&bits, &cfg).map_err(err)
}

#[pyfunction]
fn estimate_gain_ook(tx_train: Vec<f64>, rx_train: Vec<f64>) -> PyResult<f64> {
    core::ook::estimate_gain_ook(&tx_train, &rx_train).map_err(err)
}

/// Runs the full grid for a config and writes the result files to `out_dir`.
#[pyfunction]
#[pyo3(signature = (cfg, out_dir, workers=1))]
fn run(py: Python<'_>, cfg: &ExperimentConfig, out_dir: &str, workers: usize) -> PyResult<GridResult> {
    let inner = py
        .allow_threads(|| harness::run_grid(&cfg.inner, workers))
        .map_err(err)?;
    harness::emit_results(&inner.maps, Some(&inner.metadata), out_dir.as_ref()).map_err(err)?;
    Ok(GridResult { inner })
}

#[pymodule]
fn vlcpos(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<ExperimentConfig>()?;
    m.add_class::<Experiment>()?;
    m.add_class::<GridResult>()?;
    m.add_class::<AcoOfdm>()?;
    m.add_class::<ImpulseResponse>()?;
    m.add_function(wrap_pyfunction!(impulse_responses, m)?)?;
    m.add_function(wrap_pyfunction!(los_dc_gain, m)?)?;
    m.add_function(wrap_pyfunction!(concentrator_gain, m)?)?;
    m.add_function(wrap_pyfunction!(lambertian_order, m)?)?;
    m.add_function(wrap_pyfunction!(estimate_distance, m)?)?;
    m.add_function(wrap_pyfunction!(horizontal_range, m)?)?;
    m.add_function(wrap_pyfunction!(laterate, m)?)?;
    m.add_function(wrap_pyfunction!(transmit_ook, m)?)?;
    m.add_function(wrap_pyfunction!(estimate_gain_ook, m)?)?;
    m.add_function(wrap_pyfunction!(run, m)?)?;
    Ok(())
}
