//! Python bindings: `import qlg`.

use std::path::PathBuf;

use num_complex::Complex64;
use pyo3::exceptions::{PyIOError, PyValueError};
use pyo3::prelude::*;
use pyo3::types::PyDict;

use qlg_core::diagnostics;
use qlg_core::evolution;
use qlg_core::initcond::{self, InitLayout};
use qlg_core::snapshot::{self, Snapshot};
use qlg_core::spectral::{self, Spectrum, SpectrumKind};
use qlg_core::{GridSpec, QlgError, ScalarField, SimParams, SpinorField};

fn to_py(err: QlgError) -> PyErr {
    match err {
        QlgError::Io { .. } | QlgError::Format(_) | QlgError::Truncated { .. } => PyIOError::new_err(err.to_string()),
        other => PyValueError::new_err(other.to_string()),
    }
}

fn grid_from(dims: (usize, usize, usize)) -> PyResult<GridSpec> {
    GridSpec::new(dims.0, dims.1, dims.2).map_err(to_py)
}

/// Simulation parameters `g`, `a`, `phase_scale`, `steps_per_output`.
#[pyclass(name = "Params", from_py_object)]
#[derive(Clone, Copy)]
struct PyParams {
    inner: SimParams,
}

#[pymethods]
impl PyParams {
    #[new]
    #[pyo3(signature = (g = 1.0, a = 0.04, phase_scale = 0.1, steps_per_output = 1000))]
    fn new(g: f64, a: f64, phase_scale: f64, steps_per_output: u64) -> PyResult<Self> {
        let inner = SimParams { g, a, phase_scale, steps_per_output };
        inner.validate().map_err(to_py)?;
        Ok(PyParams { inner })
    }

    #[getter]
    fn g(&self) -> f64 {
        self.inner.g
    }

    #[getter]
    fn a(&self) -> f64 {
        self.inner.a
    }

    #[getter]
    fn phase_scale(&self) -> f64 {
        self.inner.phase_scale
    }

    #[getter]
    fn steps_per_output(&self) -> u64 {
        self.inner.steps_per_output
    }

    /// Parameters describing the same physical system on a grid of extent `to`.
    fn rescaled_for_grid(&self, from: usize, to: usize) -> Self {
        PyParams { inner: self.inner.rescaled_for_grid(from, to) }
    }

    fn __repr__(&self) -> String {
        let p = &self.inner;
        format!("Params(g={}, a={}, phase_scale={}, steps_per_output={})", p.g, p.a, p.phase_scale, p.steps_per_output)
    }
}

/// Two-component lattice state `(alpha, beta)`; `phi = alpha + beta`.
#[pyclass(name = "Field")]
struct PyField {
    inner: SpinorField,
}

#[pymethods]
impl PyField {
    #[staticmethod]
    fn zeros(dims: (usize, usize, usize)) -> PyResult<Self> {
        Ok(PyField { inner: SpinorField::zeros(grid_from(dims)?) })
    }

    /// Spinor with `alpha = beta = phi / 2` from a flat list in lattice order.
    #[staticmethod]
    fn from_phi(dims: (usize, usize, usize), phi: Vec<Complex64>) -> PyResult<Self> {
        let phi = ScalarField::from_data(grid_from(dims)?, phi).map_err(to_py)?;
        Ok(PyField { inner: SpinorField::from_phi(&phi) })
    }

    /// Spinor from flat `alpha` and `beta` lists in lattice order.
    #[staticmethod]
    fn from_components(dims: (usize, usize, usize), alpha: Vec<Complex64>, beta: Vec<Complex64>) -> PyResult<Self> {
        if alpha.len() != beta.len() {
            return Err(PyValueError::new_err("alpha and beta differ in length"));
        }
        let data = alpha.into_iter().zip(beta).map(|(a, b)| [a, b]).collect();
        Ok(PyField { inner: SpinorField::from_data(grid_from(dims)?, data).map_err(to_py)? })
    }

    /// Vortex layout `twelve`, `fortyeight` or `single` on a cubic grid.
    #[staticmethod]
    #[pyo3(signature = (n, params, layout = "twelve", winding = 1, amplitude_rescale = 1.4))]
    fn compose(n: usize, params: PyParams, layout: &str, winding: u8, amplitude_rescale: f64) -> PyResult<Self> {
        let grid = GridSpec::cubic(n).map_err(to_py)?;
        let layout = match layout {
            "single" => InitLayout::single(grid, winding, amplitude_rescale),
            name => InitLayout::preset(name, grid, winding, amplitude_rescale),
        }
        .map_err(to_py)?;
        Ok(PyField { inner: initcond::compose(grid, &layout, &params.inner).map_err(to_py)? })
    }

    #[staticmethod]
    fn load(path: PathBuf) -> PyResult<(Self, u64, PyParams)> {
        let snap = snapshot::load_snapshot(&path).map_err(to_py)?;
        let params = PyParams { inner: snap.params() };
        Ok((PyField { inner: snap.field }, snap.timestep, params))
    }

    fn save(&self, path: PathBuf, timestep: u64, params: PyParams) -> PyResult<()> {
        snapshot::save_snapshot(&Snapshot::new(self.inner.clone(), timestep, &params.inner), &path).map_err(to_py)
    }

    #[getter]
    fn dims(&self) -> (usize, usize, usize) {
        let [x, y, z] = self.inner.grid().dims();
        (x, y, z)
    }

    fn alpha(&self) -> Vec<Complex64> {
        self.inner.data().iter().map(|p| p[0]).collect()
    }

    fn beta(&self) -> Vec<Complex64> {
        self.inner.data().iter().map(|p| p[1]).collect()
    }

    fn phi(&self) -> Vec<Complex64> {
        self.inner.data().iter().map(|p| p[0] + p[1]).collect()
    }

    fn norm_sqr(&self) -> f64 {
        self.inner.norm_sqr()
    }

    /// Advances the state by `n` timesteps, releasing the GIL meanwhile.
    #[pyo3(signature = (params, n = 1))]
    fn step(&mut self, py: Python<'_>, params: PyParams, n: u64) {
        let field = &mut self.inner;
        py.detach(|| {
            for _ in 0..n {
                evolution::evolve_step_in_place(field, &params.inner);
            }
        });
    }

    fn copy(&self) -> Self {
        PyField { inner: self.inner.clone() }
    }

    fn energies<'py>(&self, py: Python<'py>, params: PyParams) -> PyResult<Bound<'py, PyDict>> {
        let e = diagnostics::energies(&self.inner, &params.inner, 0);
        let d = PyDict::new(py);
        for (k, v) in [
            ("E_kin", e.e_kin),
            ("E_qu", e.e_qu),
            ("E_int", e.e_int),
            ("E_tot", e.e_tot),
            ("E_kin_incomp", e.e_kin_incomp),
            ("E_kin_comp", e.e_kin_comp),
        ] {
            d.set_item(k, v)?;
        }
        Ok(d)
    }

    /// Shell spectra keyed by kind name.
    fn spectra<'py>(&self, py: Python<'py>, params: PyParams) -> PyResult<Bound<'py, PyDict>> {
        let s = spectral::snapshot_spectra(&self.inner, &params.inner, 0);
        let d = PyDict::new(py);
        for kind in SpectrumKind::ALL {
            d.set_item(kind.name(), s.get(kind).values.clone())?;
        }
        Ok(d)
    }

    /// `(E_int/E_kin, E_qu/E_kin, E_comp/E_incomp, is_recurrence_class)`.
    fn recurrence_class(&self, params: PyParams) -> PyResult<(f64, f64, f64, bool)> {
        let c = initcond::recurrence_class_check(&self.inner, &params.inner).map_err(to_py)?;
        Ok((c.int_over_kin, c.qu_over_kin, c.comp_over_incomp, c.is_recurrence_class()))
    }

    fn __repr__(&self) -> String {
        let (x, y, z) = self.dims();
        format!("Field({x}x{y}x{z})")
    }
}

/// Square-root-of-swap collision of one site's pair.
#[pyfunction]
fn collide(alpha: Complex64, beta: Complex64) -> (Complex64, Complex64) {
    let [a, b] = evolution::collide_pair([alpha, beta]);
    (a, b)
}

#[pyfunction]
fn pade_profile(r: f64, a: f64, g: f64) -> PyResult<f64> {
    if !(r >= 0.0 && a > 0.0 && g > 0.0) {
        return Err(PyValueError::new_err("pade_profile needs r >= 0, a > 0, g > 0"));
    }
    Ok(initcond::pade_profile(r, a, g))
}

/// Fidelity `|<a, b>| / (|a| |b|)` of the two fields' `phi`.
#[pyfunction]
fn fidelity(a: &PyField, b: &PyField) -> PyResult<f64> {
    let (pa, pb) = (qlg_core::lattice::project_phi(&a.inner), qlg_core::lattice::project_phi(&b.inner));
    diagnostics::fidelity(&pa, &pb).map_err(to_py)
}

#[pyfunction]
fn detect_recurrence(timesteps: Vec<u64>, values: Vec<f64>, threshold: f64) -> PyResult<Vec<(u64, f64)>> {
    diagnostics::detect_recurrence(&timesteps, &values, threshold).map_err(to_py)
}

/// `(alpha, std_error)` of `E ~ k^-alpha` over shells `k_lo..=k_hi`.
#[pyfunction]
fn fit_exponent(values: Vec<f64>, k_lo: usize, k_hi: usize) -> PyResult<(f64, f64)> {
    let spectrum = Spectrum { kind: SpectrumKind::TotalKinetic, timestep: 0, values };
    let fit = spectral::fit_exponent(&spectrum, k_lo, k_hi).map_err(to_py)?;
    Ok((fit.alpha, fit.std_error))
}

/// `(period, half_inversion)` of the cat map on an `n x n` grid.
#[pyfunction]
fn cat_period(n: u64) -> PyResult<(u64, bool)> {
    if n == 0 || n >= 1 << 31 {
        return Err(PyValueError::new_err("n must lie in [1, 2^31)"));
    }
    Ok(qlg_core::catmap::cat_period(n))
}

#[pymodule]
fn qlg(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyParams>()?;
    m.add_class::<PyField>()?;
    m.add_function(wrap_pyfunction!(collide, m)?)?;
    m.add_function(wrap_pyfunction!(pade_profile, m)?)?;
    m.add_function(wrap_pyfunction!(fidelity, m)?)?;
    m.add_function(wrap_pyfunction!(detect_recurrence, m)?)?;
    m.add_function(wrap_pyfunction!(fit_exponent, m)?)?;
    m.add_function(wrap_pyfunction!(cat_period, m)?)?;
    Ok(())
}
