use ascent_kit::cli::{parse_args, solver_options};
use ascent_kit::problems::{make_problem, PROBLEM_NAMES};
use ascent_kit::{Algorithm, Error, Problem, SolveResult, SolverOptions};
use pyo3::exceptions::{PyRuntimeError, PyValueError};
use pyo3::prelude::*;

#[pyclass(frozen, get_all, name = "SolveResult")]
struct PySolveResult {
    status_code: i32,
    status_name: String,
    x_opt: Vec<f64>,
    f_opt: f64,
    iterations: usize,
    evaluations: usize,
    termination: String,
}

#[pymethods]
impl PySolveResult {
    fn __repr__(&self) -> String {
        format!(
            "SolveResult(status={} {}, f_opt={}, x_opt={:?}, evaluations={})",
            self.status_code, self.status_name, self.f_opt, self.x_opt, self.evaluations
        )
    }
}

impl From<SolveResult> for PySolveResult {
    fn from(r: SolveResult) -> Self {
        PySolveResult {
            status_code: r.status.code(),
            status_name: r.status.name().to_string(),
            x_opt: r.x_opt,
            f_opt: r.f_opt,
            iterations: r.iterations,
            evaluations: r.evaluations,
            termination: r.termination,
        }
    }
}

fn to_py_err(e: Error) -> PyErr {
    match e {
        Error::InvalidArgs(_) => PyValueError::new_err(e.to_string()),
        other => PyRuntimeError::new_err(other.to_string()),
    }
}

/// Names of the built-in problems.
#[pyfunction]
fn list_problems() -> Vec<&'static str> {
    PROBLEM_NAMES.to_vec()
}

/// Solves a built-in problem; unset options take the problem's defaults.
#[pyfunction]
#[pyo3(signature = (problem, algorithm=None, xtol_rel=None, maxeval=None, seed=0, local_algorithm=None, x0=None))]
fn solve_builtin(
    problem: &str,
    algorithm: Option<&str>,
    xtol_rel: Option<f64>,
    maxeval: Option<usize>,
    seed: u64,
    local_algorithm: Option<&str>,
    x0: Option<Vec<f64>>,
) -> PyResult<PySolveResult> {
    let mut argv = vec!["ascent-kit".to_string(), "--problem".to_string(), problem.to_string()];
    let mut push = |flag: &str, value: Option<String>| {
        if let Some(v) = value {
            argv.push(flag.to_string());
            argv.push(v);
        }
    };
    push("--algorithm", algorithm.map(str::to_string));
    push("--xtol-rel", xtol_rel.map(|v| v.to_string()));
    push("--maxeval", maxeval.map(|v| v.to_string()));
    push("--seed", Some(seed.to_string()));
    push("--local-algorithm", local_algorithm.map(str::to_string));
    push(
        "--x0",
        x0.map(|v| v.iter().map(|c| c.to_string()).collect::<Vec<_>>().join(",")),
    );
    let config = parse_args(argv).map_err(|e| PyValueError::new_err(e.message.trim_end().to_string()))?;
    let mut p = make_problem(&config.problem, None).map_err(to_py_err)?;
    if let Some(x0) = &config.x0_override {
        p = p.with_x0(x0.clone());
    }
    ascent_kit::minimize(&p, &solver_options(&config))
        .map(Into::into)
        .map_err(to_py_err)
}

fn scalar_callback(f: Py<PyAny>) -> impl Fn(&[f64]) -> f64 + Send + Sync + 'static {
    move |x: &[f64]| {
        Python::attach(|py| {
            f.bind(py)
                .call1((x.to_vec(),))
                .and_then(|v| v.extract::<f64>())
                .unwrap_or(f64::NAN)
        })
    }
}

fn vector_callback(f: Py<PyAny>) -> impl Fn(&[f64]) -> Vec<f64> + Send + Sync + 'static {
    move |x: &[f64]| {
        Python::attach(|py| {
            f.bind(py)
                .call1((x.to_vec(),))
                .and_then(|v| v.extract::<Vec<f64>>())
                .unwrap_or_else(|_| vec![f64::NAN; x.len()])
        })
    }
}

/// Minimizes a Python callable `f(x) -> float` over a box.
///
/// Exceptions raised by callbacks surface as a `RuntimeError` from the solver.
#[pyfunction]
#[pyo3(signature = (f, x0, *, grad=None, lower=None, upper=None, algorithm="cobyla", xtol_rel=1e-8, maxeval=None, seed=0))]
#[allow(clippy::too_many_arguments)]
fn minimize(
    f: Py<PyAny>,
    x0: Vec<f64>,
    grad: Option<Py<PyAny>>,
    lower: Option<Vec<f64>>,
    upper: Option<Vec<f64>>,
    algorithm: &str,
    xtol_rel: f64,
    maxeval: Option<usize>,
    seed: u64,
) -> PyResult<PySolveResult> {
    let n = x0.len();
    let algorithm: Algorithm = algorithm.parse().map_err(to_py_err)?;
    let mut problem = Problem::new(x0, scalar_callback(f)).with_bounds(
        lower.unwrap_or_else(|| vec![f64::NEG_INFINITY; n]),
        upper.unwrap_or_else(|| vec![f64::INFINITY; n]),
    );
    if let Some(g) = grad {
        problem = problem.with_gradient(vector_callback(g));
    }
    let mut opts = SolverOptions::new(algorithm).xtol_rel(xtol_rel).seed(seed);
    opts.maxeval = maxeval;
    if algorithm == Algorithm::Auglag {
        opts = opts.local_opts(SolverOptions::new(Algorithm::Cobyla).xtol_rel(xtol_rel));
    }
    ascent_kit::minimize(&problem, &opts).map(Into::into).map_err(to_py_err)
}

#[pymodule]
fn ascent_kit_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add("__version__", ascent_kit::VERSION)?;
    m.add_class::<PySolveResult>()?;
    m.add_function(wrap_pyfunction!(list_problems, m)?)?;
    m.add_function(wrap_pyfunction!(solve_builtin, m)?)?;
    m.add_function(wrap_pyfunction!(minimize, m)?)?;
    Ok(())
}
