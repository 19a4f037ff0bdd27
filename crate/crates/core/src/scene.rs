//! JSON input files: placement scenes and line-sweep configurations.
//!
//! A robot is either given inline or as a path to a robot file; relative paths
//! resolve against the directory of the file that mentions them. An omitted
//! robot means the default 315/365 mm model.

use std::fs;
use std::path::{Path, PathBuf};

use nalgebra::{Matrix3, Vector3};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::Rotation;
use crate::placement::{BoxSpec, GradientMode, PlacementProblem, PlacementVariables};
use crate::robot::{Configuration, RobotModel};
use crate::solver::SolverOptions;
use crate::virtual_ik::{LineSweep, SmoothingParams};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum RobotSource {
    Path(PathBuf),
    Inline(RobotModel),
}

impl RobotSource {
    pub fn resolve(&self, base_dir: &Path) -> Result<RobotModel> {
        match self {
            RobotSource::Inline(model) => Ok(model.clone()),
            RobotSource::Path(path) => {
                let full = if path.is_absolute() { path.clone() } else { base_dir.join(path) };
                RobotModel::from_json(&fs::read_to_string(&full)?)
            }
        }
    }
}

fn resolve_robot(source: &Option<RobotSource>, base_dir: &Path) -> Result<RobotModel> {
    source.as_ref().map_or_else(|| Ok(RobotModel::default()), |s| s.resolve(base_dir))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Scene {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub robot: Option<RobotSource>,
    #[serde(rename = "box")]
    pub box_spec: BoxSpec,
    pub variables: PlacementVariables,
    #[serde(default)]
    pub smoothing: SmoothingParams,
    #[serde(default)]
    pub gradient: GradientMode,
    #[serde(default)]
    pub solver: SolverOptions,
}

impl Scene {
    pub fn from_json(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("scene serializes")
    }

    /// Reads a scene file; returns it with the directory used for relative paths.
    pub fn load(path: &Path) -> Result<(Scene, PathBuf)> {
        let scene = Scene::from_json(&fs::read_to_string(path)?)?;
        let base = path.parent().map(Path::to_path_buf).unwrap_or_default();
        Ok((scene, base))
    }

    pub fn build(&self, base_dir: &Path) -> Result<PlacementProblem> {
        self.solver.validate()?;
        let model = resolve_robot(&self.robot, base_dir)?;
        Ok(PlacementProblem::new(model, self.box_spec.clone(), self.variables.clone(), self.smoothing)?
            .with_gradient_mode(self.gradient))
    }
}

fn tool_down() -> Rotation {
    Rotation::from_matrix_unchecked(Matrix3::from_diagonal(&Vector3::new(-1.0, 1.0, -1.0)))
}

fn reference_configuration() -> Configuration {
    Configuration::new(4).expect("valid index")
}

fn default_samples() -> usize {
    801
}

/// TCP line sweep; the defaults reproduce the reference experiment.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepConfig {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub robot: Option<RobotSource>,
    #[serde(default = "default_start")]
    pub start: [f64; 3],
    #[serde(default = "default_end")]
    pub end: [f64; 3],
    #[serde(default = "tool_down")]
    pub rotation: Rotation,
    #[serde(default = "reference_configuration")]
    pub configuration: Configuration,
    #[serde(default = "default_samples")]
    pub samples: usize,
    #[serde(default)]
    pub smoothing: SmoothingParams,
}

fn default_start() -> [f64; 3] {
    [500.0, 0.0, 215.0]
}

fn default_end() -> [f64; 3] {
    [1300.0, 0.0, 215.0]
}

impl Default for SweepConfig {
    fn default() -> Self {
        SweepConfig {
            robot: None,
            start: default_start(),
            end: default_end(),
            rotation: tool_down(),
            configuration: reference_configuration(),
            samples: default_samples(),
            smoothing: SmoothingParams::default(),
        }
    }
}

impl SweepConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("sweep config serializes")
    }

    pub fn load(path: &Path) -> Result<(SweepConfig, PathBuf)> {
        let config = SweepConfig::from_json(&fs::read_to_string(path)?)?;
        let base = path.parent().map(Path::to_path_buf).unwrap_or_default();
        Ok((config, base))
    }

    /// Checks the config and returns the robot it refers to.
    pub fn resolve_model(&self, base_dir: &Path) -> Result<RobotModel> {
        if self.samples < 2 {
            return Err(Error::InvalidProblem(format!("need at least 2 samples, got {}", self.samples)));
        }
        if self.start.iter().chain(&self.end).any(|v| !v.is_finite()) {
            return Err(Error::InvalidProblem("sweep endpoints must be finite".into()));
        }
        self.smoothing.validate()?;
        resolve_robot(&self.robot, base_dir)
    }

    pub fn line<'a>(&self, model: &'a RobotModel) -> LineSweep<'a> {
        LineSweep {
            model,
            start: Vector3::from(self.start),
            end: Vector3::from(self.end),
            rotation: self.rotation,
            configuration: self.configuration,
            smoothing: self.smoothing,
        }
    }
}
