//! Python bindings: the map models, grid functions with the dyadic norms,
//! trace/determinant pipeline, resonances, bound quantities, and the kernel
//! laboratory entry points.

use num_complex::Complex64;
use pyo3::exceptions::{PyRuntimeError, PyValueError};
use pyo3::prelude::*;

use ruelle_core::cones::Cone;
use ruelle_core::determinant::{self, BoundQuadrature, DeterminantSeries};
use ruelle_core::dynamics::{self, Branch1, MapModel, Weight};
use ruelle_core::error::CoreError;
use ruelle_core::experiment::ExperimentConfig;
use ruelle_core::fourier;
use ruelle_core::grid::GridFunction;
use ruelle_core::kernel::{self, Amplitude, KernelConfig};
use ruelle_core::transfer::{self, ResonanceConfig};

fn err(e: CoreError) -> PyErr {
    if e.is_validation() {
        PyValueError::new_err(e.to_string())
    } else {
        PyRuntimeError::new_err(e.to_string())
    }
}

/// A dynamical system: expanding circle map or (perturbed) toral automorphism.
#[pyclass(name = "Map", from_py_object)]
#[derive(Clone)]
struct PyMap {
    inner: MapModel,
}

#[pymethods]
impl PyMap {
    #[staticmethod]
    #[pyo3(signature = (degree, eps=0.0))]
    fn expanding_circle(degree: u32, eps: f64) -> PyResult<Self> {
        Ok(PyMap {
            inner: MapModel::expanding_circle(degree, eps).map_err(err)?,
        })
    }

    #[staticmethod]
    fn linear_toral(matrix: [[i64; 2]; 2]) -> PyResult<Self> {
        Ok(PyMap {
            inner: MapModel::linear_toral(matrix).map_err(err)?,
        })
    }

    #[staticmethod]
    fn perturbed_toral(matrix: [[i64; 2]; 2], delta: f64) -> PyResult<Self> {
        Ok(PyMap {
            inner: MapModel::perturbed_toral(matrix, delta).map_err(err)?,
        })
    }

    fn dim(&self) -> usize {
        self.inner.dim()
    }

    fn apply(&self, x: [f64; 2]) -> [f64; 2] {
        self.inner.apply(x)
    }

    fn iterate(&self, x: [f64; 2], m: u32) -> [f64; 2] {
        self.inner.iterate(x, m)
    }

    fn jacobian(&self, x: [f64; 2]) -> [[f64; 2]; 2] {
        self.inner.jacobian(x)
    }

    /// (λ_s, ν_u) rates of the hyperbolicity metadata.
    fn rates(&self) -> (f64, f64) {
        self.inner.rates()
    }

    /// m-fold preimages (expanding circle maps), with itineraries.
    fn inverse_branches(&self, x: f64, m: u32) -> PyResult<Vec<(f64, Vec<u8>)>> {
        Ok(self
            .inner
            .inverse_branches(x, m)
            .map_err(err)?
            .into_iter()
            .map(|p| (p.point, p.itinerary))
            .collect())
    }

    /// Local hyperbolicity exponents (λ_x(T^m), ν_x(T^m)).
    #[pyo3(signature = (x, m, n_pre=30))]
    fn hyperbolicity_exponents(&self, x: [f64; 2], m: u32, n_pre: u32) -> PyResult<(f64, f64)> {
        dynamics::hyperbolicity_exponents(&self.inner, x, m, n_pre).map_err(err)
    }

    #[pyo3(signature = (x, p, q, m, n_pre=30))]
    fn lambda_pqm(&self, x: [f64; 2], p: f64, q: f64, m: u32, n_pre: u32) -> PyResult<f64> {
        dynamics::lambda_pqm(&self.inner, x, p, q, m, n_pre).map_err(err)
    }

    fn __repr__(&self) -> String {
        format!("{:?}", self.inner)
    }
}

fn build_weight(kind: &str, value: Complex64) -> PyResult<Weight> {
    match kind {
        "const" => Ok(Weight::Const {
            re: value.re,
            im: value.im,
        }),
        "coord" => Ok(Weight::Coord),
        "inv-deriv" => Ok(Weight::InvDeriv),
        "inv-det-unstable" => Ok(Weight::InvDetUnstable),
        other => Err(PyValueError::new_err(format!("unknown weight kind `{other}`"))),
    }
}

/// Complex-valued function on a torus grid with frequency access.
#[pyclass(name = "GridFunction", from_py_object)]
#[derive(Clone)]
struct PyGridFunction {
    inner: GridFunction,
}

#[pymethods]
impl PyGridFunction {
    #[staticmethod]
    fn mode(dim: usize, n: usize, k: [i64; 2]) -> PyGridFunction {
        PyGridFunction {
            inner: GridFunction::mode(dim, n, k),
        }
    }

    #[staticmethod]
    fn from_values(dim: usize, n: usize, values: Vec<Complex64>) -> PyResult<PyGridFunction> {
        Ok(PyGridFunction {
            inner: GridFunction::from_values(dim, n, values).map_err(err)?,
        })
    }

    #[staticmethod]
    fn random_band_limited(
        dim: usize,
        n: usize,
        max_freq: f64,
        decay: f64,
        seed: u64,
    ) -> PyGridFunction {
        PyGridFunction {
            inner: fourier::random_band_limited(dim, n, max_freq, decay, seed),
        }
    }

    fn values(&self) -> Vec<Complex64> {
        self.inner.values().to_vec()
    }

    fn sup_norm(&self) -> f64 {
        self.inner.sup_norm()
    }

    fn eval_at(&self, x: [f64; 2]) -> Complex64 {
        self.inner.eval_at(x)
    }

    /// ‖u‖_{C^p_*}: the dyadic-block Hölder norm.
    fn holder_norm_star(&self, p: f64) -> f64 {
        fourier::holder_norm_star(&self.inner, p)
    }

    /// Finite-difference classical Hölder norm, 0 < p < 1.
    fn classical_holder_norm(&self, p: f64) -> PyResult<f64> {
        fourier::classical_holder_norm(&self.inner, p).map_err(err)
    }

    /// Anisotropic norm with adapted cat-style cones for the given map.
    fn aniso_norm(&self, p: f64, q: f64, cones: &PyConeSystem) -> PyResult<f64> {
        fourier::aniso_norm(&self.inner, p, q, &cones.inner).map_err(err)
    }

    fn __repr__(&self) -> String {
        format!(
            "GridFunction(dim={}, n={})",
            self.inner.dim(),
            self.inner.grid_size()
        )
    }
}

/// Frequency cone system for the anisotropic norms.
#[pyclass(name = "ConeSystem", from_py_object)]
#[derive(Clone)]
struct PyConeSystem {
    inner: ruelle_core::cones::ConeSystem,
}

#[pymethods]
impl PyConeSystem {
    #[staticmethod]
    fn explicit(
        plus_center: f64,
        plus_half: f64,
        minus_center: f64,
        minus_half: f64,
    ) -> PyResult<Self> {
        Ok(PyConeSystem {
            inner: ruelle_core::cones::ConeSystem::new(
                Cone::new(plus_center, plus_half).map_err(err)?,
                Cone::new(minus_center, minus_half).map_err(err)?,
            )
            .map_err(err)?,
        })
    }

    #[staticmethod]
    #[pyo3(signature = (map, narrow=0.13962634015954636, wide=1.3962634015954636))]
    fn adapted(map: &PyMap, narrow: f64, wide: f64) -> PyResult<Self> {
        Ok(PyConeSystem {
            inner: dynamics::adapted_cones(&map.inner, narrow, wide).map_err(err)?,
        })
    }

    fn phi_plus(&self, theta: f64) -> f64 {
        self.inner.phi_plus(theta)
    }
}

/// χ(s): the exp-profile radial bump, 1 on [0,1], 0 on [2,∞).
#[pyfunction]
fn chi(s: f64) -> f64 {
    fourier::chi(s)
}

/// ψ_n(‖ξ‖): the dyadic annulus multiplier.
#[pyfunction]
fn psi(n: u32, r: f64) -> f64 {
    fourier::psi_radial(n, r)
}

/// ψ̃_ℓ(‖ξ‖): the widened profile, 1 on supp ψ_ℓ.
#[pyfunction]
fn psi_tilde(ell: u32, r: f64) -> f64 {
    fourier::psi_tilde_radial(ell, r)
}

/// Birkhoff weight product g^{(m)}(x).
#[pyfunction]
#[pyo3(signature = (map, x, m, weight_kind="const", value=Complex64::new(1.0, 0.0)))]
fn birkhoff_weight(
    map: &PyMap,
    x: [f64; 2],
    m: u32,
    weight_kind: &str,
    value: Complex64,
) -> PyResult<Complex64> {
    let g = build_weight(weight_kind, value)?;
    Ok(dynamics::birkhoff_weight(&map.inner, &g, x, m))
}

/// Flat trace t_m = Σ_{T^m x = x} g^{(m)}(x)/|det(1 − DT^m(x))|.
#[pyfunction]
#[pyo3(signature = (map, m, weight_kind="const", value=Complex64::new(1.0, 0.0)))]
fn trace_sum(map: &PyMap, m: u32, weight_kind: &str, value: Complex64) -> PyResult<Complex64> {
    let g = build_weight(weight_kind, value)?;
    determinant::trace_sum(&map.inner, &g, m).map_err(err)
}

/// Taylor coefficients of d(z) from trace sums.
#[pyfunction]
fn determinant_coefficients(traces: Vec<Complex64>) -> Vec<Complex64> {
    determinant::determinant_coefficients(&traces)
}

/// Reliable zeros (z, order) of the truncated determinant built from traces.
#[pyfunction]
fn determinant_zeros(traces: Vec<Complex64>) -> PyResult<Vec<(Complex64, usize)>> {
    let series = DeterminantSeries::from_traces(&traces);
    let report = determinant::determinant_zeros(&series).map_err(err)?;
    Ok(report
        .zeros
        .into_iter()
        .map(|z| (Complex64::new(z.z_re, z.z_im), z.order))
        .collect())
}

/// Resonances stable under truncation refinement, with the filter value:
/// returns (accepted [(value, multiplicity, stability)], filter).
#[pyfunction]
#[pyo3(signature = (map, n_f, p, q, weight_kind="const", value=Complex64::new(1.0, 0.0)))]
fn resonances(
    map: &PyMap,
    n_f: usize,
    p: f64,
    q: f64,
    weight_kind: &str,
    value: Complex64,
) -> PyResult<(Vec<(Complex64, usize, f64)>, f64)> {
    let g = build_weight(weight_kind, value)?;
    let cones = if map.inner.is_expanding() {
        None
    } else {
        Some(
            dynamics::adapted_cones(&map.inner, 8f64.to_radians(), 80f64.to_radians())
                .map_err(err)?,
        )
    };
    let cfg = ResonanceConfig {
        n_f,
        p,
        q,
        ..Default::default()
    };
    let report = transfer::resonances(&map.inner, &g, cones.as_ref(), &cfg).map_err(err)?;
    Ok((
        report
            .accepted
            .iter()
            .map(|r| (r.value(), r.multiplicity, r.stability))
            .collect(),
        report.filter,
    ))
}

/// ρ^{p,q}(T,g,m): the bound integral over the torus.
#[pyfunction]
#[pyo3(signature = (map, p, q, m, points_per_axis=256, weight_kind="const", value=Complex64::new(1.0, 0.0)))]
fn rho_pqm(
    map: &PyMap,
    p: f64,
    q: f64,
    m: u32,
    points_per_axis: usize,
    weight_kind: &str,
    value: Complex64,
) -> PyResult<f64> {
    let g = build_weight(weight_kind, value)?;
    let quad = BoundQuadrature {
        points_per_axis,
        ..Default::default()
    };
    Ok(determinant::rho_pqm(&map.inner, &g, p, q, m, &quad)
        .map_err(err)?
        .value)
}

/// R^{p,q,t}(T,g) at finite m (t = inf drops the determinant factor).
#[pyfunction]
#[pyo3(signature = (map, p, q, t, m, points_per_axis=64, weight_kind="const", value=Complex64::new(1.0, 0.0)))]
#[allow(clippy::too_many_arguments)]
fn r_pqt(
    map: &PyMap,
    p: f64,
    q: f64,
    t: f64,
    m: u32,
    points_per_axis: usize,
    weight_kind: &str,
    value: Complex64,
) -> PyResult<f64> {
    let g = build_weight(weight_kind, value)?;
    let quad = BoundQuadrature {
        points_per_axis,
        ..Default::default()
    };
    determinant::r_pqt(&map.inner, &g, p, q, t, m, &quad).map_err(err)
}

/// Oscillatory kernel V_n^ℓ(x,y) for the branch w ↦ c·w + a·sin(2πw) with a
/// quadratic-spline amplitude of width h.
#[pyfunction]
#[pyo3(signature = (c, a, h, n, ell, x, y))]
fn kernel_v(c: f64, a: f64, h: f64, n: u32, ell: u32, x: f64, y: f64) -> PyResult<Complex64> {
    let branch = if a == 0.0 {
        Branch1::Scale { c }
    } else {
        Branch1::ScaleSine { c, a }
    };
    let amp = Amplitude::QuadSpline { center: 0.0, h };
    kernel::kernel_v(&branch, &amp, n, ell, x, y, &KernelConfig::default()).map_err(err)
}

/// Residual of the regularized integration-by-parts identity for a linear
/// phase and the sqrt-cusp benchmark amplitude.
#[pyfunction]
fn regularized_ibp_residual(lambda: f64, eps: f64) -> PyResult<f64> {
    let f = |w: f64| w + 0.05 * w * w;
    let fp = |w: f64| 1.0 + 0.1 * w;
    let g = |w: f64| 4.0 * fourier::smooth_bump(w, 0.1, 0.7) * w.abs().sqrt();
    Ok(kernel::regularized_ibp(&f, &fp, &g, lambda, eps, 0.5)
        .map_err(err)?
        .residual)
}

/// Run an experiment config (TOML text) into `out_dir`; returns the config
/// hash.
#[pyfunction]
#[pyo3(signature = (toml_text, out_dir, threads=None))]
fn run_experiment(toml_text: &str, out_dir: &str, threads: Option<usize>) -> PyResult<String> {
    let cfg = ExperimentConfig::from_toml(toml_text).map_err(err)?;
    let outcome =
        ruelle_core::experiment::run(&cfg, std::path::Path::new(out_dir), threads).map_err(err)?;
    Ok(outcome.config_hash)
}

#[pymodule]
fn ruelle_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyMap>()?;
    m.add_class::<PyGridFunction>()?;
    m.add_class::<PyConeSystem>()?;
    m.add_function(wrap_pyfunction!(chi, m)?)?;
    m.add_function(wrap_pyfunction!(psi, m)?)?;
    m.add_function(wrap_pyfunction!(psi_tilde, m)?)?;
    m.add_function(wrap_pyfunction!(birkhoff_weight, m)?)?;
    m.add_function(wrap_pyfunction!(trace_sum, m)?)?;
    m.add_function(wrap_pyfunction!(determinant_coefficients, m)?)?;
    m.add_function(wrap_pyfunction!(determinant_zeros, m)?)?;
    m.add_function(wrap_pyfunction!(resonances, m)?)?;
    m.add_function(wrap_pyfunction!(rho_pqm, m)?)?;
    m.add_function(wrap_pyfunction!(r_pqt, m)?)?;
    m.add_function(wrap_pyfunction!(kernel_v, m)?)?;
    m.add_function(wrap_pyfunction!(regularized_ibp_residual, m)?)?;
    m.add_function(wrap_pyfunction!(run_experiment, m)?)?;
    Ok(())
}
