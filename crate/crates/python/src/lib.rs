//! Python bindings: `import vaxis`.
//!
//! Frames are passed as `[x, y, z, alpha, beta, gamma]` (mm, rad, ZYX Euler) and
//! returned as `(position, rotation_rows)`.

use std::path::Path;

use pyo3::exceptions::PyValueError;
use pyo3::prelude::*;
use pyo3::types::PyDict;

use vaxis_core::geometry::{euler_to_frame, EulerPose, Frame};
use vaxis_core::ik::{ik_original, IkOutcome};
use vaxis_core::robot::{default_joint_limits, Configuration, Joints, RobotModel, VirtualJoints};
use vaxis_core::scene::{Scene, SweepConfig};
use vaxis_core::solver::{minimize, Method};
use vaxis_core::virtual_ik::{distance_to_shell, ik_virtual, SmoothingParams};

fn value_error(e: impl std::fmt::Display) -> PyErr {
    PyValueError::new_err(e.to_string())
}

type PyFrame = ([f64; 3], [[f64; 3]; 3]);

fn to_py(f: &Frame) -> PyFrame {
    (f.position.into(), f.rotation.rows())
}

fn frame_of(pose: [f64; 6]) -> Frame {
    euler_to_frame(&EulerPose::from_array(pose))
}

fn configuration(s: u8) -> PyResult<Configuration> {
    Configuration::new(s).map_err(value_error)
}

fn smoothing(enabled: bool) -> SmoothingParams {
    if enabled {
        SmoothingParams::default()
    } else {
        SmoothingParams::off()
    }
}

/// 6R arm with a spherical wrist and an optional virtual slide after joint 3.
#[pyclass(name = "Robot", frozen)]
struct PyRobot {
    model: RobotModel,
}

#[pymethods]
impl PyRobot {
    #[new]
    #[pyo3(signature = (l23 = 315.0, l35 = 365.0, tool = 100.0, q_min = None, q_max = None))]
    fn new(l23: f64, l35: f64, tool: f64, q_min: Option<[f64; 6]>, q_max: Option<[f64; 6]>) -> PyResult<Self> {
        let (lo, hi) = default_joint_limits();
        let model = RobotModel::new(l23, l35, tool, q_min.unwrap_or(lo), q_max.unwrap_or(hi)).map_err(value_error)?;
        Ok(PyRobot { model })
    }

    #[staticmethod]
    fn from_json(text: &str) -> PyResult<Self> {
        Ok(PyRobot { model: RobotModel::from_json(text).map_err(value_error)? })
    }

    fn to_json(&self) -> String {
        self.model.to_json()
    }

    #[getter]
    fn shell(&self) -> (f64, f64) {
        let s = self.model.shell();
        (s.inner_radius, s.outer_radius)
    }

    #[getter]
    fn q_min(&self) -> [f64; 6] {
        *self.model.q_min()
    }

    #[getter]
    fn q_max(&self) -> [f64; 6] {
        *self.model.q_max()
    }

    /// WCP frame for joint angles `q`.
    fn fk(&self, q: [f64; 6]) -> PyFrame {
        to_py(&self.model.fk_wcp(&Joints(q)))
    }

    fn fk_tcp(&self, q: [f64; 6]) -> PyFrame {
        to_py(&self.model.fk_tcp(&Joints(q)))
    }

    /// WCP frame of the virtual chain with slide `v` [mm].
    fn fk_virtual(&self, q: [f64; 6], v: f64) -> PyFrame {
        to_py(&self.model.fk_virtual_wcp(&VirtualJoints::new(q, v)))
    }

    /// Configuration index of `q`; raises at a branch boundary.
    fn configuration_of(&self, q: [f64; 6]) -> PyResult<u8> {
        Ok(self.model.configuration_of(&Joints(q)).map_err(value_error)?.index())
    }

    /// Original IK for a WCP pose. Returns a dict with `outcome` and either `q` or `defect`.
    fn ik<'py>(&self, py: Python<'py>, pose: [f64; 6], configuration: u8) -> PyResult<Bound<'py, PyDict>> {
        let out = PyDict::new(py);
        match ik_original(&self.model, &frame_of(pose), self::configuration(configuration)?) {
            IkOutcome::Solution { q, limit_ok } => {
                out.set_item("outcome", "solution")?;
                out.set_item("q", q.0)?;
                out.set_item("limit_ok", limit_ok)?;
            }
            IkOutcome::OutOfReach { defect } => {
                out.set_item("outcome", "out_of_reach")?;
                out.set_item("defect", defect)?;
            }
            IkOutcome::BranchSingular { kind, q } => {
                out.set_item("outcome", "branch_singular")?;
                out.set_item("singularity", format!("{kind:?}").to_lowercase())?;
                out.set_item("q", q.0)?;
            }
        }
        Ok(out)
    }

    /// Virtual IK for a WCP pose; always returns `(q, v)`.
    #[pyo3(signature = (pose, configuration, smooth = true))]
    fn ik_virtual(&self, pose: [f64; 6], configuration: u8, smooth: bool) -> PyResult<([f64; 6], f64)> {
        let qt = ik_virtual(&self.model, &frame_of(pose), self::configuration(configuration)?, &smoothing(smooth));
        Ok((qt.q, qt.v))
    }

    /// Signed distance of a point to the reachable shell.
    fn distance_to_shell(&self, point: [f64; 3]) -> f64 {
        distance_to_shell(&self.model.shell(), &point.into())
    }

    fn __repr__(&self) -> String {
        format!("Robot(l23={}, l35={}, tool={})", self.model.l23(), self.model.l35(), self.model.tool_tz())
    }
}

/// Line sweep of the TCP. `config_json` uses the sweep config file schema;
/// returns `(rows, crossings)` with rows `[x, q1..q6, v]` and the TCP x of each boundary crossing.
#[pyfunction]
#[pyo3(signature = (config_json = "{}", robot = None))]
fn sweep(config_json: &str, robot: Option<&PyRobot>) -> PyResult<(Vec<[f64; 8]>, Vec<f64>)> {
    let cfg = SweepConfig::from_json(config_json).map_err(value_error)?;
    let resolved = cfg.resolve_model(Path::new(".")).map_err(value_error)?;
    let model = robot.map_or(resolved, |r| r.model.clone());
    let line = cfg.line(&model);
    let rows = line
        .run(cfg.samples)
        .map_err(value_error)?
        .iter()
        .map(|s| {
            let q = s.joints.q;
            [s.position.x, q[0], q[1], q[2], q[3], q[4], q[5], s.joints.v]
        })
        .collect();
    let crossings = line.boundary_crossings(cfg.samples).into_iter().map(|t| line.tcp_at(t).position.x).collect();
    Ok((rows, crossings))
}

/// Solves the placement problem of a scene file. `method` is "sqp" or "al".
#[pyfunction]
#[pyo3(signature = (scene_path, method = None))]
fn optimize<'py>(py: Python<'py>, scene_path: &str, method: Option<&str>) -> PyResult<Bound<'py, PyDict>> {
    let (mut scene, base) = Scene::load(Path::new(scene_path)).map_err(value_error)?;
    match method {
        None => {}
        Some("sqp") => scene.solver.method = Method::Sqp,
        Some("al") => scene.solver.method = Method::AugmentedLagrangian,
        Some(other) => return Err(value_error(format!("unknown method {other:?}; use \"sqp\" or \"al\""))),
    }
    let problem = scene.build(&base).map_err(value_error)?;
    let x0 = problem.initial_point();
    let report = py.detach(|| minimize(&problem, &x0, &scene.solver)).map_err(value_error)?;
    let eval = problem.evaluate(&report.x);

    let out = PyDict::new(py);
    let status = serde_json::to_value(report.status).map_err(value_error)?;
    out.set_item("status", status.as_str().unwrap_or_default())?;
    out.set_item("pose", problem.pose(&report.x).to_array())?;
    out.set_item("x", &report.x)?;
    out.set_item("objective", report.objective)?;
    out.set_item("max_violation", report.max_violation)?;
    out.set_item("kkt_residual", report.kkt_residual)?;
    out.set_item("iterations", report.iterations)?;
    out.set_item("objective_trajectory", &report.objective_trajectory)?;
    out.set_item("v", &eval.v)?;
    out.set_item("wall_time_s", report.wall_time_s)?;
    Ok(out)
}

#[pymodule]
fn vaxis(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyRobot>()?;
    m.add_function(wrap_pyfunction!(sweep, m)?)?;
    m.add_function(wrap_pyfunction!(optimize, m)?)?;
    Ok(())
}
