//! Python bindings for the `csa-core` kernel, mask, loss and file routines.
//!
//! Tensors cross the boundary as flat lists in channel-major order; masks as
//! flat lists of 0/1 in row-major order.

use pyo3::create_exception;
use pyo3::exceptions::{PyException, PyOSError, PyValueError};
use pyo3::prelude::*;

use csa_core::io as core_io;
use csa_core::losses::{self, CriticScores, LossWeights, SignConvention};
use csa_core::mask as core_mask;
use csa_core::{CsaConfig, CsaError};

create_exception!(
    csa_py,
    CsaPyError,
    PyException,
    "Base class for kernel errors."
);
create_exception!(
    csa_py,
    NoContextError,
    CsaPyError,
    "The context region is empty."
);
create_exception!(csa_py, NoHoleError, CsaPyError, "The hole region is empty.");
create_exception!(
    csa_py,
    FormatError,
    CsaPyError,
    "A tensor or image file is malformed."
);

fn to_py(err: CsaError) -> PyErr {
    let msg = err.to_string();
    match err {
        CsaError::NoContext => NoContextError::new_err(msg),
        CsaError::NoHole => NoHoleError::new_err(msg),
        CsaError::Format { .. } | CsaError::Data(_) => FormatError::new_err(msg),
        CsaError::Io(_) => PyOSError::new_err(msg),
        CsaError::Shape(_) | CsaError::Range(_) | CsaError::Argument(_) => {
            PyValueError::new_err(msg)
        }
    }
}

trait IntoPy<T> {
    fn py_err(self) -> PyResult<T>;
}

impl<T> IntoPy<T> for csa_core::Result<T> {
    fn py_err(self) -> PyResult<T> {
        self.map_err(to_py)
    }
}

fn config(patch_size: usize, eps: f64) -> PyResult<CsaConfig> {
    let config = CsaConfig { patch_size, eps };
    config.validate().py_err()?;
    Ok(config)
}

/// Channel-major `(C, H, W)` feature tensor.
#[pyclass(name = "FeatureMap", module = "csa_py", frozen)]
pub struct PyFeatureMap {
    inner: csa_core::FeatureMap,
}

#[pymethods]
impl PyFeatureMap {
    #[new]
    fn new(channels: usize, height: usize, width: usize, data: Vec<f64>) -> PyResult<Self> {
        let inner = csa_core::FeatureMap::new(channels, height, width, data).py_err()?;
        Ok(Self { inner })
    }

    #[staticmethod]
    fn zeros(channels: usize, height: usize, width: usize) -> PyResult<Self> {
        let inner = csa_core::FeatureMap::zeros(channels, height, width).py_err()?;
        Ok(Self { inner })
    }

    #[getter]
    fn shape(&self) -> (usize, usize, usize) {
        self.inner.shape()
    }

    #[getter]
    fn data(&self) -> Vec<f64> {
        self.inner.data().to_vec()
    }

    fn get(&self, c: usize, y: usize, x: usize) -> PyResult<f64> {
        let (ch, h, w) = self.inner.shape();
        if c >= ch || y >= h || x >= w {
            return Err(PyValueError::new_err(format!(
                "index ({c}, {y}, {x}) outside {ch}x{h}x{w}"
            )));
        }
        Ok(self.inner.get(c, y, x))
    }

    fn pixel_vector(&self, y: usize, x: usize) -> PyResult<Vec<f64>> {
        Ok(self.inner.pixel_vector(y, x).py_err()?.into_inner())
    }

    fn __repr__(&self) -> String {
        let (c, h, w) = self.inner.shape();
        format!("FeatureMap(channels={c}, height={h}, width={w})")
    }
}

/// Binary feature-space mask; 1 marks a hole cell.
#[pyclass(name = "FeatureMask", module = "csa_py", frozen)]
pub struct PyFeatureMask {
    inner: csa_core::FeatureMask,
}

#[pymethods]
impl PyFeatureMask {
    #[new]
    fn new(height: usize, width: usize, cells: Vec<u8>) -> PyResult<Self> {
        let inner = csa_core::FeatureMask::new(height, width, cells).py_err()?;
        Ok(Self { inner })
    }

    #[getter]
    fn shape(&self) -> (usize, usize) {
        (self.inner.height(), self.inner.width())
    }

    #[getter]
    fn cells(&self) -> Vec<u8> {
        self.inner.cells().to_vec()
    }

    fn is_hole(&self, y: usize, x: usize) -> PyResult<bool> {
        if y >= self.inner.height() || x >= self.inner.width() {
            return Err(PyValueError::new_err(format!(
                "cell ({y}, {x}) outside the mask"
            )));
        }
        Ok(self.inner.is_hole(y, x))
    }

    fn hole_count(&self) -> usize {
        self.inner.hole_count()
    }

    fn hole_coords(&self) -> Vec<(usize, usize)> {
        self.inner.hole_coords()
    }

    fn known_coords(&self) -> Vec<(usize, usize)> {
        self.inner.known_coords()
    }

    fn __repr__(&self) -> String {
        format!(
            "FeatureMask(height={}, width={}, holes={})",
            self.inner.height(),
            self.inner.width(),
            self.inner.hole_count()
        )
    }
}

/// Output of [`csa_forward`].
#[pyclass(name = "CsaResult", module = "csa_py", frozen)]
pub struct PyCsaResult {
    out: csa_core::CsaOutput,
}

#[pymethods]
impl PyCsaResult {
    #[getter]
    fn features(&self) -> PyFeatureMap {
        PyFeatureMap {
            inner: self.out.features.clone(),
        }
    }

    /// Attention rows, one list of `n_context` weights per hole cell.
    #[getter]
    fn attention(&self) -> Vec<Vec<f64>> {
        let a = &self.out.attention;
        (0..a.n_hole()).map(|i| a.row(i).to_vec()).collect()
    }

    #[getter]
    fn hole_coords(&self) -> Vec<(usize, usize)> {
        self.out.search.order.clone()
    }

    #[getter]
    fn context_coords(&self) -> Vec<(usize, usize)> {
        self.out.context_coords.clone()
    }

    #[getter]
    fn best_index(&self) -> Vec<usize> {
        self.out.search.best_index.clone()
    }

    #[getter]
    fn dmax(&self) -> Vec<f64> {
        self.out.search.dmax.clone()
    }

    #[getter]
    fn dad(&self) -> Vec<f64> {
        self.out.dad.clone()
    }
}

#[pyfunction]
#[pyo3(signature = (features, mask, patch_size = 1, eps = 1e-8))]
fn csa_forward(
    py: Python<'_>,
    features: &PyFeatureMap,
    mask: &PyFeatureMask,
    patch_size: usize,
    eps: f64,
) -> PyResult<PyCsaResult> {
    let config = config(patch_size, eps)?;
    let out = py
        .detach(|| csa_core::csa_forward(&features.inner, &mask.inner, &config))
        .py_err()?;
    Ok(PyCsaResult { out })
}

/// Gradient of `sum(grad_out * csa_forward(features).features)` with respect to `features`.
#[pyfunction]
#[pyo3(signature = (features, mask, grad_out, patch_size = 1, eps = 1e-8))]
fn csa_backward(
    py: Python<'_>,
    features: &PyFeatureMap,
    mask: &PyFeatureMask,
    grad_out: &PyFeatureMap,
    patch_size: usize,
    eps: f64,
) -> PyResult<PyFeatureMap> {
    let config = config(patch_size, eps)?;
    let inner = py
        .detach(|| csa_core::csa_backward(&features.inner, &mask.inner, &config, &grad_out.inner))
        .py_err()?;
    Ok(PyFeatureMap { inner })
}

#[pyfunction]
fn centering_feature_mask(height: usize, width: usize) -> PyResult<PyFeatureMask> {
    let inner = core_mask::centering_feature_mask(height, width).py_err()?;
    Ok(PyFeatureMask { inner })
}

/// Resolves a row-major 0/1 image mask to feature resolution.
#[pyfunction]
#[pyo3(signature = (height, width, pixels, levels = 3, threshold = 0.3125))]
fn irregular_feature_mask(
    height: usize,
    width: usize,
    pixels: Vec<u8>,
    levels: u32,
    threshold: f64,
) -> PyResult<PyFeatureMask> {
    let image = csa_core::ImageMask::new(height, width, pixels).py_err()?;
    let inner = core_mask::irregular_feature_mask(&image, levels, threshold).py_err()?;
    Ok(PyFeatureMask { inner })
}

fn sign_convention(sign: &str) -> PyResult<SignConvention> {
    match sign {
        "as_printed" => Ok(SignConvention::AsPrinted),
        "minimized" => Ok(SignConvention::Minimized),
        other => Err(PyValueError::new_err(format!(
            "sign must be 'as_printed' or 'minimized', got {other:?}"
        ))),
    }
}

#[pyfunction]
fn consistency_loss(
    csa_features: &PyFeatureMap,
    decoder_features: &PyFeatureMap,
    target_features: &PyFeatureMap,
    mask: &PyFeatureMask,
) -> PyResult<f64> {
    losses::consistency_loss(&losses::ConsistencyInputs {
        csa_features: &csa_features.inner,
        decoder_features: &decoder_features.inner,
        target_features: &target_features.inner,
        mask: &mask.inner,
    })
    .py_err()
}

#[pyfunction]
fn reconstruction_loss(
    pred_rough: &PyFeatureMap,
    pred_refined: &PyFeatureMap,
    target: &PyFeatureMap,
) -> PyResult<f64> {
    losses::reconstruction_loss(&pred_rough.inner, &pred_refined.inner, &target.inner).py_err()
}

#[pyfunction]
#[pyo3(signature = (real_scores, fake_scores, sign = "as_printed"))]
fn ralsgan_generator_loss(
    real_scores: Vec<f64>,
    fake_scores: Vec<f64>,
    sign: &str,
) -> PyResult<f64> {
    let scores = CriticScores::new(real_scores, fake_scores).py_err()?;
    losses::ralsgan_generator_loss_with(&scores, sign_convention(sign)?).py_err()
}

#[pyfunction]
#[pyo3(signature = (real_scores, fake_scores, sign = "as_printed"))]
fn ralsgan_discriminator_loss(
    real_scores: Vec<f64>,
    fake_scores: Vec<f64>,
    sign: &str,
) -> PyResult<f64> {
    let scores = CriticScores::new(real_scores, fake_scores).py_err()?;
    losses::ralsgan_discriminator_loss_with(&scores, sign_convention(sign)?).py_err()
}

#[pyfunction]
#[pyo3(signature = (l_re, l_c, d_r, lambda_r = 1.0, lambda_c = 0.01, lambda_d = 0.002))]
fn total_objective(
    l_re: f64,
    l_c: f64,
    d_r: f64,
    lambda_r: f64,
    lambda_c: f64,
    lambda_d: f64,
) -> PyResult<f64> {
    let weights = LossWeights::new(lambda_r, lambda_c, lambda_d).py_err()?;
    Ok(losses::total_objective(l_re, l_c, d_r, &weights))
}

#[pyfunction]
fn read_tensor(path: std::path::PathBuf) -> PyResult<PyFeatureMap> {
    Ok(PyFeatureMap {
        inner: core_io::read_tensor(path).py_err()?,
    })
}

#[pyfunction]
fn write_tensor(features: &PyFeatureMap, path: std::path::PathBuf) -> PyResult<()> {
    core_io::write_tensor(&features.inner, path).py_err()
}

#[pyfunction]
fn read_feature_mask(path: std::path::PathBuf) -> PyResult<PyFeatureMask> {
    Ok(PyFeatureMask {
        inner: core_io::read_feature_mask(path).py_err()?,
    })
}

#[pyfunction]
fn write_feature_mask(mask: &PyFeatureMask, path: std::path::PathBuf) -> PyResult<()> {
    core_io::write_feature_mask(&mask.inner, path).py_err()
}

#[pymodule]
fn csa_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    let py = m.py();
    m.add("CsaError", py.get_type::<CsaPyError>())?;
    m.add("NoContextError", py.get_type::<NoContextError>())?;
    m.add("NoHoleError", py.get_type::<NoHoleError>())?;
    m.add("FormatError", py.get_type::<FormatError>())?;
    m.add_class::<PyFeatureMap>()?;
    m.add_class::<PyFeatureMask>()?;
    m.add_class::<PyCsaResult>()?;
    m.add_function(wrap_pyfunction!(csa_forward, m)?)?;
    m.add_function(wrap_pyfunction!(csa_backward, m)?)?;
    m.add_function(wrap_pyfunction!(centering_feature_mask, m)?)?;
    m.add_function(wrap_pyfunction!(irregular_feature_mask, m)?)?;
    m.add_function(wrap_pyfunction!(consistency_loss, m)?)?;
    m.add_function(wrap_pyfunction!(reconstruction_loss, m)?)?;
    m.add_function(wrap_pyfunction!(ralsgan_generator_loss, m)?)?;
    m.add_function(wrap_pyfunction!(ralsgan_discriminator_loss, m)?)?;
    m.add_function(wrap_pyfunction!(total_objective, m)?)?;
    m.add_function(wrap_pyfunction!(read_tensor, m)?)?;
    m.add_function(wrap_pyfunction!(write_tensor, m)?)?;
    m.add_function(wrap_pyfunction!(read_feature_mask, m)?)?;
    m.add_function(wrap_pyfunction!(write_feature_mask, m)?)?;
    Ok(())
}
