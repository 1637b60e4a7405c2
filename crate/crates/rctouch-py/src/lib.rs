//! Python bindings. Structured values cross the boundary as JSON strings in
//! the same document formats the CLI and HTTP endpoints use.

use pyo3::create_exception;
use pyo3::exceptions::PyException;
use pyo3::prelude::*;
use rctouch::circuit::{threshold_time, CircuitSpec, DelayProfile, Method, WiringMode};
use rctouch::geom::Vec3;
use rctouch::mesh::{read_stl_file, voxelize, VoxelizeParams};
use rctouch::pipeline::{load_mesh, load_selection, precheck, run_pipeline, write_bundle, PipelineConfig};
use rctouch::robustness::{epsilon_range, perturbation_accuracy, PerturbationSpec};
use rctouch::trace::{estimate_resistance, fill_serpentine, Conduit, FillParams, ResistivityModel};
use rctouch::wire_opt::{min_conduit_length, optimize_single_wire, GridSearchSpec, SizingSpec};
use std::path::Path;

create_exception!(rctouch_py, RctouchError, PyException);

fn py_err(e: rctouch::Error) -> PyErr {
    RctouchError::new_err(e.to_string())
}

fn parse_method(method: &str) -> rctouch::Result<Method> {
    match method {
        "exact" => Ok(Method::Exact),
        "approx" => Ok(Method::Approx),
        other => Err(rctouch::Error::Invalid(format!("unknown method '{other}'"))),
    }
}

pub fn circuit_from_json(doc: &str) -> rctouch::Result<CircuitSpec> {
    let spec: CircuitSpec = serde_json::from_str(doc)?;
    spec.validate()?;
    Ok(spec)
}

pub fn delay_profile_impl(circuit: &str, method: &str) -> rctouch::Result<Vec<Option<f64>>> {
    let spec = circuit_from_json(circuit)?;
    let prof = DelayProfile::compute(&spec, parse_method(method)?);
    Ok(prof.times.iter().map(|t| t.time()).collect())
}

pub fn trace_length_impl(points: Vec<[f64; 3]>, diameter: f64) -> rctouch::Result<(f64, f64, f64)> {
    let conduit = Conduit {
        centerline: points.into_iter().map(|p| Vec3::new(p[0], p[1], p[2])).collect(),
        diameter,
    };
    let path = fill_serpentine(&conduit, &FillParams::default())?;
    let r = estimate_resistance(&path, &ResistivityModel::default());
    Ok((path.length_xy, path.length_z, r))
}

pub fn pipeline_impl(mesh: &str, selection: &str, out_dir: &str, config: Option<&str>) -> rctouch::Result<String> {
    let config: PipelineConfig = match config {
        Some(c) => serde_json::from_str(c)?,
        None => PipelineConfig::default(),
    };
    let selection = load_selection(Path::new(selection))?;
    precheck(&config, &selection)?;
    let (mesh, name) = load_mesh(Path::new(mesh))?;
    let out = run_pipeline(&config, &mesh, &name, &selection)?;
    write_bundle(&out.bundle, Path::new(out_dir))?;
    out.bundle.manifest_json()
}

/// Threshold time (s) of touch `p` (1-based); None when never reached.
#[pyfunction]
#[pyo3(signature = (circuit, p, method="exact"))]
fn threshold(circuit: &str, p: usize, method: &str) -> PyResult<Option<f64>> {
    let spec = circuit_from_json(circuit).map_err(py_err)?;
    if p == 0 || p > spec.n() {
        return Err(py_err(rctouch::Error::Invalid(format!("touch index {p} out of range"))));
    }
    Ok(threshold_time(&spec, p, parse_method(method).map_err(py_err)?).time())
}

/// Threshold times of every touchpoint.
#[pyfunction]
#[pyo3(signature = (circuit, method="exact"))]
fn delay_profile(circuit: &str, method: &str) -> PyResult<Vec<Option<f64>>> {
    delay_profile_impl(circuit, method).map_err(py_err)
}

/// Resistance (ohm) of a trace with the given in-layer and vertical lengths (mm).
#[pyfunction]
#[pyo3(signature = (length_xy, length_z=0.0))]
fn resistance(length_xy: f64, length_z: f64) -> f64 {
    ResistivityModel::default().resistance(length_xy, length_z)
}

/// Serpentine fill of a conduit at default margins: (length_xy, length_z, ohm).
#[pyfunction]
fn fill_conduit(points: Vec<[f64; 3]>, diameter: f64) -> PyResult<(f64, f64, f64)> {
    trace_length_impl(points, diameter).map_err(py_err)
}

/// Single-wire grid search; returns the result document.
#[pyfunction]
fn optimize(n: usize, r_max: f64) -> PyResult<String> {
    let res = optimize_single_wire(&GridSearchSpec::new(n, r_max)).map_err(py_err)?;
    serde_json::to_string(&res).map_err(|e| py_err(e.into()))
}

/// Minimum conduit length (mm) per low-conductivity segment.
#[pyfunction]
fn min_length(n: usize, mode: &str, diameter: f64) -> PyResult<f64> {
    let mode: WiringMode = mode.parse().map_err(py_err)?;
    min_conduit_length(n, mode, diameter, &SizingSpec::default())
        .map(|r| r.conduit_length)
        .map_err(py_err)
}

/// Capacitance shift window (F) that keeps touch `p` classified correctly.
#[pyfunction]
fn epsilon(circuit: &str, p: usize) -> PyResult<(f64, f64)> {
    let spec = circuit_from_json(circuit).map_err(py_err)?;
    let e = epsilon_range(&spec, p).map_err(py_err)?;
    Ok((e.lower, e.upper))
}

/// Monte-Carlo accuracy per capacitance sigma (pF).
#[pyfunction]
#[pyo3(signature = (circuit, sigmas_pf, samples=100, seed=0))]
fn accuracy(circuit: &str, sigmas_pf: Vec<f64>, samples: usize, seed: u64) -> PyResult<Vec<f64>> {
    let spec = circuit_from_json(circuit).map_err(py_err)?;
    let pert = PerturbationSpec {
        sigmas: sigmas_pf.iter().map(|s| s * 1e-12).collect(),
        samples,
        seed,
        ..Default::default()
    };
    let curve = perturbation_accuracy(&spec, &pert, Method::Approx).map_err(py_err)?;
    Ok(curve.iter().map(|p| p.accuracy).collect())
}

/// Number of voxels inside an STL model.
#[pyfunction]
fn voxel_count(path: &str, voxel_size: f64) -> PyResult<usize> {
    let mesh = read_stl_file(Path::new(path)).map_err(py_err)?;
    let grid = voxelize(&mesh, &VoxelizeParams::with_size(voxel_size)).map_err(py_err)?;
    Ok(grid.len())
}

/// Full pipeline; writes the bundle and returns the manifest document.
#[pyfunction]
#[pyo3(signature = (mesh, selection, out_dir, config=None))]
fn pipeline(py: Python<'_>, mesh: &str, selection: &str, out_dir: &str, config: Option<&str>) -> PyResult<String> {
    py.detach(|| pipeline_impl(mesh, selection, out_dir, config)).map_err(py_err)
}

#[pymodule]
fn rctouch_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add("RctouchError", m.py().get_type::<RctouchError>())?;
    m.add_function(wrap_pyfunction!(threshold, m)?)?;
    m.add_function(wrap_pyfunction!(delay_profile, m)?)?;
    m.add_function(wrap_pyfunction!(resistance, m)?)?;
    m.add_function(wrap_pyfunction!(fill_conduit, m)?)?;
    m.add_function(wrap_pyfunction!(optimize, m)?)?;
    m.add_function(wrap_pyfunction!(min_length, m)?)?;
    m.add_function(wrap_pyfunction!(epsilon, m)?)?;
    m.add_function(wrap_pyfunction!(accuracy, m)?)?;
    m.add_function(wrap_pyfunction!(voxel_count, m)?)?;
    m.add_function(wrap_pyfunction!(pipeline, m)?)?;
    Ok(())
}
