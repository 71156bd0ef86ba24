//! Python bindings for the effsize toolkit.
//!
//! The module mirrors the library surface: the formula core as plain
//! functions, `Dataset` as a class, and the analysis entry points returning
//! plain dictionaries (reports keep the same keys as the CLI JSON output).

use pyo3::exceptions::PyValueError;
use pyo3::prelude::*;
use pyo3::types::{PyDict, PyList};
use serde_json::Value;

use effsize_core::dataio::{GroupedDataset, LoadOptions, ModelSpec};
use effsize_core::effectsize::{self, BenchmarkConfig, ShrinkageMethod};
use effsize_core::error::Error;
use effsize_core::multilevel::{self, PseudoR2Def};
use effsize_core::report::{ReportBody, ReportDocument, ReportMetadata};
use effsize_core::resampling::{self, BootstrapConfig};
use effsize_core::special;

fn to_py_err(err: Error) -> PyErr {
    PyValueError::new_err(err.to_string())
}

fn json_to_py<'py>(py: Python<'py>, value: &Value) -> PyResult<Bound<'py, PyAny>> {
    Ok(match value {
        Value::Null => py.None().into_bound(py),
        Value::Bool(b) => b.into_pyobject(py)?.to_owned().into_any(),
        Value::Number(n) => {
            if let Some(i) = n.as_i64() {
                i.into_pyobject(py)?.into_any()
            } else if let Some(u) = n.as_u64() {
                u.into_pyobject(py)?.into_any()
            } else {
                n.as_f64().unwrap_or(f64::NAN).into_pyobject(py)?.into_any()
            }
        }
        Value::String(s) => s.into_pyobject(py)?.into_any(),
        Value::Array(items) => {
            let list = PyList::empty(py);
            for item in items {
                list.append(json_to_py(py, item)?)?;
            }
            list.into_any()
        }
        Value::Object(map) => {
            let dict = PyDict::new(py);
            for (k, v) in map {
                dict.set_item(k, json_to_py(py, v)?)?;
            }
            dict.into_any()
        }
    })
}

fn benchmarks_from(benchmarks: Option<(f64, f64, f64)>) -> Result<BenchmarkConfig, Error> {
    match benchmarks {
        None => Ok(BenchmarkConfig::default()),
        Some((s, m, l)) => BenchmarkConfig::new(s, m, l),
    }
}

fn model_spec(response: &str, focal: Vec<String>, controls: Vec<String>) -> Result<ModelSpec, Error> {
    ModelSpec::new(response, focal, controls)
}

fn report_dict<'py>(
    py: Python<'py>,
    body: ReportBody,
    variant: &str,
    seed: Option<u64>,
    warnings: Vec<String>,
) -> PyResult<Bound<'py, PyAny>> {
    let mut doc = ReportDocument {
        metadata: ReportMetadata {
            tool: "effsize".into(),
            version: env!("CARGO_PKG_VERSION").into(),
            seed,
            timestamp: None,
            dataset_digest: None,
        },
        variant: variant.into(),
        body,
        warnings,
    };
    doc.dedup_warnings();
    json_to_py(py, &doc.to_value())
}

/// A table of named numeric columns.
#[pyclass(name = "Dataset")]
struct PyDataset {
    inner: effsize_core::dataio::Dataset,
}

#[pymethods]
impl PyDataset {
    /// Build from `(name, values)` pairs.
    #[new]
    fn new(columns: Vec<(String, Vec<f64>)>) -> PyResult<Self> {
        Ok(PyDataset {
            inner: effsize_core::dataio::Dataset::new(columns).map_err(to_py_err)?,
        })
    }

    /// Load an RFC 4180 CSV file; returns `(dataset, rows_dropped)`.
    #[staticmethod]
    #[pyo3(signature = (path, drop_missing = false))]
    fn load_csv(path: &str, drop_missing: bool) -> PyResult<(Self, usize)> {
        let bytes = std::fs::read(path)
            .map_err(|e| PyValueError::new_err(format!("cannot read {path}: {e}")))?;
        let load = effsize_core::dataio::load_csv(&bytes[..], &LoadOptions { drop_missing })
            .map_err(to_py_err)?;
        Ok((PyDataset { inner: load.dataset }, load.rows_dropped))
    }

    #[getter]
    fn n_rows(&self) -> usize {
        self.inner.n_rows()
    }

    #[getter]
    fn names(&self) -> Vec<String> {
        self.inner.names().to_vec()
    }

    fn column(&self, name: &str) -> PyResult<Vec<f64>> {
        Ok(self.inner.column(name).map_err(to_py_err)?.to_vec())
    }

    fn __repr__(&self) -> String {
        format!(
            "Dataset({} rows x {} columns)",
            self.inner.n_rows(),
            self.inner.n_cols()
        )
    }
}

/// Global f^2 = R^2 / (1 - R^2).
#[pyfunction]
fn global_f2(r2: f64) -> PyResult<f64> {
    effectsize::global_f2(r2).map_err(to_py_err)
}

/// Local f_B^2 = (R2_AB - R2_A) / (1 - R2_AB), nested-fit contract.
#[pyfunction]
fn local_f2(r2_a: f64, r2_ab: f64) -> PyResult<f64> {
    effectsize::local_f2(r2_a, r2_ab).map_err(to_py_err)
}

/// Local f^2 for externally supplied R^2 pairs; may be negative.
#[pyfunction]
fn local_f2_external(r2_a: f64, r2_ab: f64) -> PyResult<f64> {
    effectsize::local_f2_external(r2_a, r2_ab).map_err(to_py_err)
}

/// Benchmark label for an f^2 value: below-small | small | medium | large.
#[pyfunction]
#[pyo3(signature = (f2, benchmarks = None))]
fn classify(f2: f64, benchmarks: Option<(f64, f64, f64)>) -> PyResult<String> {
    let config = benchmarks_from(benchmarks).map_err(to_py_err)?;
    Ok(effectsize::classify(f2, &config).as_str().to_string())
}

/// Shrunken R^2; method is "ezekiel" or "olkin_pratt".
#[pyfunction]
#[pyo3(signature = (r2, n, p, method = "ezekiel"))]
fn adjusted_r2(r2: f64, n: usize, p: usize, method: &str) -> PyResult<f64> {
    let method = match method {
        "ezekiel" => ShrinkageMethod::Ezekiel,
        "olkin_pratt" => ShrinkageMethod::OlkinPratt,
        other => {
            return Err(PyValueError::new_err(format!(
                "unknown shrinkage method `{other}`; use \"ezekiel\" or \"olkin_pratt\""
            )))
        }
    };
    effectsize::adjusted_r2(r2, n, p, method).map_err(to_py_err)
}

/// Student-t CDF.
#[pyfunction]
fn t_cdf(t: f64, df: f64) -> PyResult<f64> {
    special::t_cdf(t, df).map_err(to_py_err)
}

/// Student-t quantile.
#[pyfunction]
fn t_quantile(p: f64, df: f64) -> PyResult<f64> {
    special::t_quantile(p, df).map_err(to_py_err)
}

/// Upper tail of the F distribution.
#[pyfunction]
fn f_sf(f: f64, df1: f64, df2: f64) -> PyResult<f64> {
    special::f_sf(f, df1, df2).map_err(to_py_err)
}

/// Regularized incomplete beta I_x(a, b).
#[pyfunction]
fn regularized_incomplete_beta(x: f64, a: f64, b: f64) -> PyResult<f64> {
    special::regularized_incomplete_beta(x, a, b).map_err(to_py_err)
}

/// Nested-model analysis; returns the report as a dict (same shape as the
/// CLI JSON output).
#[pyfunction]
#[pyo3(signature = (dataset, response, focal, controls = vec![], benchmarks = None))]
fn analyze<'py>(
    py: Python<'py>,
    dataset: &PyDataset,
    response: &str,
    focal: Vec<String>,
    controls: Vec<String>,
    benchmarks: Option<(f64, f64, f64)>,
) -> PyResult<Bound<'py, PyAny>> {
    let spec = model_spec(response, focal, controls).map_err(to_py_err)?;
    let config = benchmarks_from(benchmarks).map_err(to_py_err)?;
    let report = effectsize::analyze(&dataset.inner, &spec, &config).map_err(to_py_err)?;
    let warnings = report.warnings.clone();
    report_dict(py, ReportBody::EffectSize(report), "ols", None, warnings)
}

/// Percentile bootstrap interval for the local f^2.
#[pyfunction]
#[pyo3(signature = (dataset, response, focal, controls = vec![], replicates = 2000, level = 0.95, seed = 0))]
#[allow(clippy::too_many_arguments)]
fn bootstrap_f2_ci<'py>(
    py: Python<'py>,
    dataset: &PyDataset,
    response: &str,
    focal: Vec<String>,
    controls: Vec<String>,
    replicates: usize,
    level: f64,
    seed: u64,
) -> PyResult<Bound<'py, PyAny>> {
    let spec = model_spec(response, focal, controls).map_err(to_py_err)?;
    let config = BootstrapConfig {
        replicates,
        level,
        seed,
    };
    let interval =
        resampling::bootstrap_f2_ci(&dataset.inner, &spec, &config).map_err(to_py_err)?;
    report_dict(py, ReportBody::Bootstrap(interval), "ols", Some(seed), vec![])
}

/// Random-intercept multilevel local f^2; `pseudo_r2` is "total" or
/// "residual".
#[pyfunction]
#[pyo3(signature = (dataset, response, focal, controls, group, pseudo_r2 = "total"))]
fn lmm_local_f2<'py>(
    py: Python<'py>,
    dataset: &PyDataset,
    response: &str,
    focal: Vec<String>,
    controls: Vec<String>,
    group: &str,
    pseudo_r2: &str,
) -> PyResult<Bound<'py, PyAny>> {
    let spec = model_spec(response, focal, controls).map_err(to_py_err)?;
    let definition = match pseudo_r2 {
        "total" => PseudoR2Def::TotalVariance,
        "residual" => PseudoR2Def::ResidualVariance,
        other => {
            return Err(PyValueError::new_err(format!(
                "unknown pseudo-R^2 definition `{other}`; use \"total\" or \"residual\""
            )))
        }
    };
    let grouped =
        GroupedDataset::from_column(dataset.inner.clone(), group).map_err(to_py_err)?;
    let report = multilevel::lmm_local_f2(&grouped, &spec, definition).map_err(to_py_err)?;
    let warnings = report.warnings.clone();
    report_dict(
        py,
        ReportBody::EffectSize(report),
        "multilevel",
        None,
        warnings,
    )
}

#[pymodule]
fn effsize_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add("__version__", env!("CARGO_PKG_VERSION"))?;
    m.add_class::<PyDataset>()?;
    m.add_function(wrap_pyfunction!(global_f2, m)?)?;
    m.add_function(wrap_pyfunction!(local_f2, m)?)?;
    m.add_function(wrap_pyfunction!(local_f2_external, m)?)?;
    m.add_function(wrap_pyfunction!(classify, m)?)?;
    m.add_function(wrap_pyfunction!(adjusted_r2, m)?)?;
    m.add_function(wrap_pyfunction!(t_cdf, m)?)?;
    m.add_function(wrap_pyfunction!(t_quantile, m)?)?;
    m.add_function(wrap_pyfunction!(f_sf, m)?)?;
    m.add_function(wrap_pyfunction!(regularized_incomplete_beta, m)?)?;
    m.add_function(wrap_pyfunction!(analyze, m)?)?;
    m.add_function(wrap_pyfunction!(bootstrap_f2_ci, m)?)?;
    m.add_function(wrap_pyfunction!(lmm_local_f2, m)?)?;
    Ok(())
}
