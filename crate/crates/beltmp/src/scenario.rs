//! Scenario file: JSON description of the map, landmarks, noise parameters
//! and planner knobs. See `docs/formats.md` for the schema.

use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::belief::{NoiseModel, ProcessNoise};
use crate::world::{ConvexPolygon, Landmark, Rect, WorldMap, WorldError};

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct NoiseSpec {
    /// Translation noise, standard deviation per meter commanded.
    pub sigma_trans_per_m: f64,
    /// Rotation noise per odometry step, degrees.
    pub sigma_rot_deg: f64,
    /// Range measurement variance, m^2.
    pub q_range: f64,
    /// Bearing measurement noise, degrees (standard deviation).
    pub q_bearing_deg: f64,
}

impl Default for NoiseSpec {
    fn default() -> Self {
        NoiseSpec {
            sigma_trans_per_m: 0.05,
            sigma_rot_deg: 1.0,
            q_range: 0.1,
            q_bearing_deg: 2.0,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct LandmarkSpec {
    pub id: String,
    pub x: f64,
    pub y: f64,
}

/// On-disk scenario description.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Scenario {
    /// [xmin, ymin, xmax, ymax] in meters.
    pub bounds: [f64; 4],
    /// Convex polygons, each a list of [x, y] vertices.
    pub obstacles: Vec<Vec<[f64; 2]>>,
    /// name -> [xmin, ymin, xmax, ymax].
    pub regions: BTreeMap<String, [f64; 4]>,
    pub landmarks: Vec<LandmarkSpec>,
    #[serde(default)]
    pub noise: NoiseSpec,
    /// Sensor range in meters.
    pub sensor_range: f64,
    /// Covariance-trace feasibility gate, m^2.
    pub eta: f64,
    /// Roadmap density, samples per square meter.
    pub density: f64,
    /// Pose instantiations per region.
    #[serde(default = "default_region_poses")]
    pub region_poses: usize,
    /// Initial robot pose [x, y, theta]; defaults to the center of `start_region`.
    #[serde(default)]
    pub start_pose: Option<[f64; 3]>,
    /// Region holding the initial pose.
    pub start_region: String,
    /// Initial belief standard deviations [sigma_xy, sigma_theta].
    #[serde(default = "default_start_sigma")]
    pub start_sigma: [f64; 2],
    /// Optional obstacle inflation radius in meters.
    #[serde(default)]
    pub inflation: f64,
}

fn default_region_poses() -> usize {
    5
}

fn default_start_sigma() -> [f64; 2] {
    [0.1, 0.05]
}

#[derive(Debug, Error)]
pub enum ScenarioError {
    #[error("failed to read scenario file: {0}")]
    Io(#[from] std::io::Error),
    #[error("failed to parse scenario file: {0}")]
    Parse(#[from] serde_json::Error),
    #[error("invalid world geometry: {0}")]
    World(#[from] WorldError),
    #[error("start region `{0}` not declared")]
    UnknownStartRegion(String),
}

impl std::str::FromStr for Scenario {
    type Err = ScenarioError;

    fn from_str(text: &str) -> Result<Self, ScenarioError> {
        let s: Scenario = serde_json::from_str(text)?;
        s.validate()?;
        Ok(s)
    }
}

impl Scenario {
    pub fn from_file(path: impl AsRef<Path>) -> Result<Self, ScenarioError> {
        std::fs::read_to_string(path)?.parse()
    }

    fn validate(&self) -> Result<(), ScenarioError> {
        if !self.regions.contains_key(&self.start_region) {
            return Err(ScenarioError::UnknownStartRegion(self.start_region.clone()));
        }
        // world_map() runs the geometric invariants.
        self.world_map()?;
        Ok(())
    }

    pub fn world_map(&self) -> Result<WorldMap, WorldError> {
        let bounds = Rect::new(self.bounds[0], self.bounds[1], self.bounds[2], self.bounds[3]);
        let obstacles = self
            .obstacles
            .iter()
            .map(|poly| ConvexPolygon::new(poly.iter().map(|v| (v[0], v[1])).collect()))
            .collect::<Result<Vec<_>, _>>()?;
        let regions = self
            .regions
            .iter()
            .map(|(name, r)| (name.clone(), Rect::new(r[0], r[1], r[2], r[3])))
            .collect();
        let landmarks = self
            .landmarks
            .iter()
            .map(|lm| Landmark {
                id: lm.id.clone(),
                x: lm.x,
                y: lm.y,
            })
            .collect();
        let mut map = WorldMap::new(bounds, obstacles, regions, landmarks)?;
        map.inflation = self.inflation;
        Ok(map)
    }

    pub fn noise_model(&self) -> NoiseModel {
        NoiseModel {
            process: ProcessNoise::Odometry {
                sigma_trans_per_m: self.noise.sigma_trans_per_m,
                sigma_rot: self.noise.sigma_rot_deg.to_radians(),
            },
            q_range: self.noise.q_range,
            q_bearing: self.noise.q_bearing_deg.to_radians().powi(2),
            sensor_range: self.sensor_range,
        }
    }

    /// Known initial pose q0.
    pub fn start_pose(&self) -> crate::world::Pose {
        match self.start_pose {
            Some([x, y, theta]) => crate::world::Pose::new(x, y, theta),
            None => {
                let r = &self.regions[&self.start_region];
                let cx = 0.5 * (r[0] + r[2]);
                let cy = 0.5 * (r[1] + r[3]);
                crate::world::Pose::new(cx, cy, 0.0)
            }
        }
    }

    pub fn start_belief(&self) -> crate::belief::GaussianBelief {
        crate::belief::GaussianBelief::isotropic(
            self.start_pose(),
            self.start_sigma[0],
            self.start_sigma[1],
        )
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::str::FromStr;

    const MINIMAL: &str = r#"{
        "bounds": [0, 0, 10, 10],
        "obstacles": [[[4, 4], [6, 4], [6, 6], [4, 6]]],
        "regions": {"s": [1, 1, 3, 3], "g": [7, 7, 9, 9]},
        "landmarks": [{"id": "lm0", "x": 5, "y": 9}],
        "sensor_range": 5.0,
        "eta": 1.0,
        "density": 1.0,
        "start_region": "s"
    }"#;

    #[test]
    fn minimal_scenario_loads() {
        let s = Scenario::from_str(MINIMAL).unwrap();
        assert_eq!(s.region_poses, 5);
        let map = s.world_map().unwrap();
        assert_eq!(map.regions.len(), 2);
        assert_eq!(map.landmarks.len(), 1);
        let p = s.start_pose();
        assert_eq!((p.x, p.y), (2.0, 2.0));
    }

    #[test]
    fn unknown_start_region_rejected() {
        let bad = MINIMAL.replace("\"start_region\": \"s\"", "\"start_region\": \"zz\"");
        assert!(matches!(
            Scenario::from_str(&bad),
            Err(ScenarioError::UnknownStartRegion(_))
        ));
    }
}
