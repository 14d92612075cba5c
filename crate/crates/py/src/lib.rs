//! Python bindings: schemes, populations, the four tests, and the study
//! harness, with JSON-configured studies for scripting convenience.
//!
//! Build with `cargo build -p randtrial-py --release` and import the
//! resulting cdylib as `randtrial_py` (see python/smoke_test.py).

use pyo3::exceptions::PyValueError;
use pyo3::prelude::*;

use randtrial_core::harness::{self, StudyConfig};
use randtrial_core::inference::{
    self, AdjustmentKind, RbiMode, RbiOptions, TestResult,
};
use randtrial_core::population::{self, NullSpec, ObservedData};
use randtrial_core::schemes::{self, SchemeSpec, TreatmentSequence, DEFAULT_ENUMERATION_CAP};
use randtrial_core::seed::derive_rng;

fn map_err(e: randtrial_core::Error) -> PyErr {
    PyValueError::new_err(e.to_string())
}

fn parse_scheme(label: &str) -> PyResult<SchemeSpec> {
    label.parse().map_err(map_err)
}

fn parse_null(label: &str) -> PyResult<NullSpec> {
    label.parse().map_err(map_err)
}

fn parse_adjustment(label: &str) -> PyResult<AdjustmentKind> {
    match label {
        "none" => Ok(AdjustmentKind::None),
        "block_indicators" => Ok(AdjustmentKind::BlockIndicators),
        "bsd_at_threshold" => Ok(AdjustmentKind::BsdAtThreshold),
        "bsd_imbalance_level" => Ok(AdjustmentKind::BsdImbalanceLevel),
        "bsd_pseudo_block_2mti" => Ok(AdjustmentKind::BsdPseudoBlock2Mti),
        "bsd_pseudo_block_2" => Ok(AdjustmentKind::BsdPseudoBlock2),
        _ => Err(PyValueError::new_err(format!("unknown adjustment `{label}`"))),
    }
}

fn sequence(assignments: Vec<u8>, scheme: &str) -> PyResult<TreatmentSequence> {
    TreatmentSequence::new(assignments, parse_scheme(scheme)?).map_err(map_err)
}

fn observed(y: Vec<f64>, z: Vec<u8>, scheme: &str) -> PyResult<ObservedData> {
    ObservedData::new(y, sequence(z, scheme)?).map_err(map_err)
}

/// A test outcome: p-value, statistic, and optional stderr / df.
#[pyclass(name = "TestResult", skip_from_py_object)]
#[derive(Clone)]
struct PyTestResult {
    #[pyo3(get)]
    test: String,
    #[pyo3(get)]
    p_value: f64,
    #[pyo3(get)]
    statistic: f64,
    #[pyo3(get)]
    stderr: Option<f64>,
    #[pyo3(get)]
    df: Option<f64>,
}

#[pymethods]
impl PyTestResult {
    fn __repr__(&self) -> String {
        format!(
            "TestResult(test='{}', p_value={}, statistic={})",
            self.test, self.p_value, self.statistic
        )
    }
}

impl From<TestResult> for PyTestResult {
    fn from(r: TestResult) -> Self {
        PyTestResult {
            test: r.test_kind.label().to_string(),
            p_value: r.p_value,
            statistic: r.statistic,
            stderr: r.stderr,
            df: r.df,
        }
    }
}

/// Sample one assignment sequence. Scheme labels: "simple", "complete",
/// "fixed_block:B", "big_stick:M".
#[pyfunction]
fn generate_sequence(scheme: &str, n: usize, seed: u64) -> PyResult<Vec<u16>> {
    let spec = parse_scheme(scheme)?;
    let mut rng = derive_rng(seed, &[]);
    Ok(schemes::generate_sequence(spec, n, &mut rng)
        .map_err(map_err)?
        .assignments
        .into_iter()
        .map(u16::from)
        .collect())
}

/// All admissible sequences with their probabilities, lexicographic order.
#[pyfunction]
#[pyo3(signature = (scheme, n, cap=None))]
fn enumerate_sequences(scheme: &str, n: usize, cap: Option<u128>) -> PyResult<Vec<(Vec<u16>, f64)>> {
    let spec = parse_scheme(scheme)?;
    let seqs = schemes::enumerate_sequences(spec, n, cap.unwrap_or(DEFAULT_ENUMERATION_CAP))
        .map_err(map_err)?;
    Ok(seqs
        .into_iter()
        .map(|(s, p)| (s.assignments.into_iter().map(u16::from).collect(), p))
        .collect())
}

/// Running imbalance path (length n + 1, starting at 0).
#[pyfunction]
fn imbalance_path(assignments: Vec<u8>) -> Vec<i64> {
    schemes::ImbalancePath::from_assignments(&assignments).values
}

/// Generate (y0, y1) for a population of size n under a null:
/// "sharp", "normal_zero", or "normal_normal".
#[pyfunction]
fn generate_population(n: usize, null: &str, seed: u64) -> PyResult<(Vec<f64>, Vec<f64>)> {
    let null = parse_null(null)?;
    let mut rng = derive_rng(seed, &[]);
    let pop = population::generate_population(n, null, &mut rng).map_err(map_err)?;
    Ok((pop.y0, pop.y1))
}

#[pyfunction]
fn diff_in_means(y: Vec<f64>, z: Vec<u8>) -> PyResult<f64> {
    let data = observed(y, z, "simple")?;
    inference::diff_in_means(&data).map_err(map_err)
}

#[pyfunction]
fn t_cdf(x: f64, df: f64) -> f64 {
    inference::t_cdf(x, df)
}

#[pyfunction]
fn normal_cdf(x: f64) -> f64 {
    inference::normal_cdf(x)
}

#[pyfunction]
fn anova_test(y: Vec<f64>, z: Vec<u8>) -> PyResult<PyTestResult> {
    let data = observed(y, z, "simple")?;
    Ok(inference::anova_test(&data).map_err(map_err)?.into())
}

/// ANCOVA with a restriction adjustment; `adjustment` is one of "none",
/// "block_indicators", "bsd_at_threshold", "bsd_imbalance_level",
/// "bsd_pseudo_block_2mti", "bsd_pseudo_block_2".
#[pyfunction]
#[pyo3(signature = (y, z, scheme, adjustment="none"))]
fn ancova_test(y: Vec<f64>, z: Vec<u8>, scheme: &str, adjustment: &str) -> PyResult<PyTestResult> {
    let data = observed(y, z, scheme)?;
    let kind = parse_adjustment(adjustment)?;
    Ok(inference::ancova_test(&data, kind).map_err(map_err)?.into())
}

#[pyfunction]
fn neyman_wald_test(y: Vec<f64>, z: Vec<u8>) -> PyResult<PyTestResult> {
    let data = observed(y, z, "simple")?;
    Ok(inference::neyman_wald_test(&data).map_err(map_err)?.into())
}

/// Randomization-test p-value. `draws = None` enumerates the sequence space
/// exactly; otherwise a Monte Carlo estimate from that many sequences.
#[pyfunction]
#[pyo3(signature = (y, z, scheme, draws=None, seed=0))]
fn rbi_pvalue(
    y: Vec<f64>,
    z: Vec<u8>,
    scheme: &str,
    draws: Option<u64>,
    seed: u64,
) -> PyResult<PyTestResult> {
    let data = observed(y, z, scheme)?;
    let mode = match draws {
        Some(draws) => RbiMode::MonteCarlo { draws },
        None => RbiMode::exact(),
    };
    let mut rng = derive_rng(seed, &[]);
    Ok(inference::rbi_pvalue(&data, mode, RbiOptions::default(), &mut rng)
        .map_err(map_err)?
        .into())
}

/// Run a whole study from a JSON `StudyConfig` document. Returns one dict
/// per population with the per-test tallies.
#[pyfunction]
fn run_study(py: Python<'_>, config_json: &str) -> PyResult<Vec<Py<PyAny>>> {
    let config: StudyConfig = serde_json::from_str(config_json)
        .map_err(|e| PyValueError::new_err(format!("bad study config: {e}")))?;
    let results = harness::run_study(&config).map_err(map_err)?;
    let mut out = Vec::with_capacity(results.len());
    for r in results {
        let json = serde_json::to_value(&r).expect("results serialize");
        out.push(json_to_py(py, &json)?);
    }
    Ok(out)
}

/// Summary statistics (mean, percentiles, spread, within-bounds proportion)
/// of per-population Type I error values, with bounds for L sequences.
#[pyfunction]
fn summarize_values(values: Vec<f64>, l: u64, alpha: f64) -> PyResult<Py<PyAny>> {
    let stats = harness::summarize_values(&values, l, alpha).map_err(map_err)?;
    Python::attach(|py| {
        let json = serde_json::to_value(stats).expect("stats serialize");
        json_to_py(py, &json)
    })
}

fn json_to_py(py: Python<'_>, value: &serde_json::Value) -> PyResult<Py<PyAny>> {
    use pyo3::types::{PyDict, PyList};
    Ok(match value {
        serde_json::Value::Null => py.None(),
        serde_json::Value::Bool(b) => b.into_pyobject(py)?.to_owned().unbind().into(),
        serde_json::Value::Number(n) => {
            if let Some(i) = n.as_i64() {
                i.into_pyobject(py)?.unbind().into()
            } else if let Some(u) = n.as_u64() {
                u.into_pyobject(py)?.unbind().into()
            } else {
                n.as_f64().unwrap_or(f64::NAN).into_pyobject(py)?.unbind().into()
            }
        }
        serde_json::Value::String(s) => s.into_pyobject(py)?.unbind().into(),
        serde_json::Value::Array(items) => {
            let list = PyList::empty(py);
            for item in items {
                list.append(json_to_py(py, item)?)?;
            }
            list.unbind().into()
        }
        serde_json::Value::Object(map) => {
            let dict = PyDict::new(py);
            for (k, v) in map {
                dict.set_item(k, json_to_py(py, v)?)?;
            }
            dict.unbind().into()
        }
    })
}

#[pymodule]
fn randtrial_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyTestResult>()?;
    m.add_function(wrap_pyfunction!(generate_sequence, m)?)?;
    m.add_function(wrap_pyfunction!(enumerate_sequences, m)?)?;
    m.add_function(wrap_pyfunction!(imbalance_path, m)?)?;
    m.add_function(wrap_pyfunction!(generate_population, m)?)?;
    m.add_function(wrap_pyfunction!(diff_in_means, m)?)?;
    m.add_function(wrap_pyfunction!(t_cdf, m)?)?;
    m.add_function(wrap_pyfunction!(normal_cdf, m)?)?;
    m.add_function(wrap_pyfunction!(anova_test, m)?)?;
    m.add_function(wrap_pyfunction!(ancova_test, m)?)?;
    m.add_function(wrap_pyfunction!(neyman_wald_test, m)?)?;
    m.add_function(wrap_pyfunction!(rbi_pvalue, m)?)?;
    m.add_function(wrap_pyfunction!(run_study, m)?)?;
    m.add_function(wrap_pyfunction!(summarize_values, m)?)?;
    Ok(())
}
