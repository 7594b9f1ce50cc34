//! Closed-loop execution: track a planned node sequence with noisy odometry
//! and range-bearing measurements, estimating the pose with the same EKF the
//! planner used and recording consistency statistics.

use nalgebra::{Matrix3, Vector3};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::belief::{
    ekf_predict, ekf_update, motion_mean, observation_mean, Control, GaussianBelief, NoiseModel,
    Observation,
};
use crate::world::{normalize_angle, Pose, WorldMap};

/// Maximum commanded translation per control step, meters.
pub const STEP: f64 = 0.5;
/// Estimated-to-true distance beyond which a run is declared diverged.
pub const DIVERGENCE_RADIUS: f64 = 10.0;
/// Waypoint capture radius for the steering loop, meters.
const CAPTURE_RADIUS: f64 = 0.15;

#[derive(Debug, Error)]
pub enum SimError {
    #[error("plan has no waypoints to execute")]
    EmptyPlan,
    #[error("final region `{0}` is not declared in the map")]
    UnknownGoalRegion(String),
}

/// One recorded control step.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TraceStep {
    pub true_pose: [f64; 3],
    pub est_pose: [f64; 3],
    pub cov_trace: f64,
    /// Normalized estimation error squared at this step.
    pub nees: f64,
    pub observations: usize,
}

/// Full closed-loop run.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ExecutionTrace {
    pub run: usize,
    pub steps: Vec<TraceStep>,
    pub success: bool,
    pub diverged: bool,
    /// Average NEES over measurement-update steps.
    pub avg_nees: f64,
    /// Number of steps entering the NEES average.
    pub nees_samples: usize,
    pub final_true_pose: [f64; 3],
    pub final_trace: f64,
}

fn sample_gaussian(mean: &Pose, cov: &Matrix3<f64>, rng: &mut ChaCha8Rng) -> Pose {
    let chol = cov
        .cholesky()
        .unwrap_or_else(|| Matrix3::from_diagonal(&cov.diagonal().map(f64::sqrt)).cholesky().unwrap());
    let n = Vector3::new(
        StandardNormal.sample(rng),
        StandardNormal.sample(rng),
        StandardNormal.sample(rng),
    );
    let d = chol.l() * n;
    Pose::new(mean.x + d[0], mean.y + d[1], mean.theta + d[2])
}

/// Apply `u` to the true pose with additive process noise w ~ N(0, R(u)),
/// matching the filter's process model exactly.
fn noisy_step(pose: &Pose, u: &Control, noise: &NoiseModel, rng: &mut ChaCha8Rng) -> Pose {
    let r = noise.r(u);
    let l = r
        .cholesky()
        .map(|c| c.l())
        .unwrap_or_else(|| Matrix3::from_diagonal(&r.diagonal().map(f64::sqrt)));
    let n = Vector3::new(
        StandardNormal.sample(rng),
        StandardNormal.sample(rng),
        StandardNormal.sample(rng),
    );
    let w = l * n;
    let m = motion_mean(pose, u);
    Pose::new(m.x + w[0], m.y + w[1], m.theta + w[2])
}

fn nees(true_pose: &Pose, belief: &GaussianBelief) -> f64 {
    let err = Vector3::new(
        true_pose.x - belief.mean.x,
        true_pose.y - belief.mean.y,
        normalize_angle(true_pose.theta - belief.mean.theta),
    );
    match belief.cov.try_inverse() {
        Some(inv) => (err.transpose() * inv * err)[(0, 0)],
        None => f64::INFINITY,
    }
}

/// Observe all landmarks within sensor range of the TRUE pose, in id order,
/// and fuse them into the belief.
fn measurement_update(
    true_pose: &Pose,
    belief: &mut GaussianBelief,
    map: &WorldMap,
    noise: &NoiseModel,
    rng: &mut ChaCha8Rng,
) -> usize {
    let mut landmarks: Vec<_> = map.landmarks.iter().collect();
    landmarks.sort_by(|a, b| a.id.cmp(&b.id));
    let mut count = 0;
    for lm in landmarks {
        let Ok(ideal) = observation_mean(true_pose, lm) else {
            continue;
        };
        if ideal.range > noise.sensor_range {
            continue;
        }
        let nr: f64 = StandardNormal.sample(rng);
        let nb: f64 = StandardNormal.sample(rng);
        let z = Observation {
            landmark_id: lm.id.clone(),
            range: ideal.range + noise.q_range.sqrt() * nr,
            bearing: normalize_angle(ideal.bearing + noise.q_bearing.sqrt() * nb),
        };
        if let Ok(updated) = ekf_update(belief, &z, lm, noise) {
            *belief = updated;
            count += 1;
        }
    }
    count
}

/// Execute one closed-loop run along `waypoints`, starting from a true pose
/// drawn from `start`. `goal_region` decides success.
pub fn execute_run(
    map: &WorldMap,
    noise: &NoiseModel,
    start: &GaussianBelief,
    waypoints: &[Pose],
    goal_region: &str,
    run: usize,
    seed: u64,
) -> Result<ExecutionTrace, SimError> {
    if waypoints.is_empty() {
        return Err(SimError::EmptyPlan);
    }
    let goal_rect = map
        .regions
        .get(goal_region)
        .ok_or_else(|| SimError::UnknownGoalRegion(goal_region.to_string()))?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ (run as u64).wrapping_mul(0x9e3779b97f4a7c15));
    let mut true_pose = sample_gaussian(&start.mean, &start.cov, &mut rng);
    let mut belief = start.clone();
    let mut steps = Vec::new();
    let mut diverged = false;
    let mut nees_sum = 0.0;
    let mut nees_count = 0usize;

    'legs: for target in waypoints {
        // Steering loop: rotate toward the waypoint and advance at most STEP,
        // re-evaluated from the current estimate each iteration.
        let leg_budget =
            ((belief.mean.distance_to(target) / STEP).ceil() as usize).max(1) * 5 + 20;
        let mut iter = 0;
        while belief.mean.distance_to(target) > CAPTURE_RADIUS {
            iter += 1;
            if iter > leg_budget {
                diverged = true;
                break 'legs;
            }
            let mut u = Control::between(&belief.mean, target);
            if u.trans > STEP {
                let heading = u.rot1 + belief.mean.theta;
                let wp = Pose::new(
                    belief.mean.x + STEP * heading.cos(),
                    belief.mean.y + STEP * heading.sin(),
                    heading,
                );
                u = Control::between(&belief.mean, &wp);
            }
            true_pose = noisy_step(&true_pose, &u, noise, &mut rng);
            belief = ekf_predict(&belief, &u, noise);
            if belief.mean.distance_to(&true_pose) > DIVERGENCE_RADIUS {
                diverged = true;
                break 'legs;
            }
            steps.push(TraceStep {
                true_pose: [true_pose.x, true_pose.y, true_pose.theta],
                est_pose: [belief.mean.x, belief.mean.y, belief.mean.theta],
                cov_trace: belief.trace(),
                nees: nees(&true_pose, &belief),
                observations: 0,
            });
        }
        // Waypoint reached: fuse landmark observations, mirroring the
        // planner's node-update rule, and record a consistency sample.
        let n_obs = measurement_update(&true_pose, &mut belief, map, noise, &mut rng);
        let e = nees(&true_pose, &belief);
        nees_sum += e;
        nees_count += 1;
        steps.push(TraceStep {
            true_pose: [true_pose.x, true_pose.y, true_pose.theta],
            est_pose: [belief.mean.x, belief.mean.y, belief.mean.theta],
            cov_trace: belief.trace(),
            nees: e,
            observations: n_obs,
        });
    }

    let success = !diverged && goal_rect.contains(true_pose.x, true_pose.y);
    Ok(ExecutionTrace {
        run,
        steps,
        success,
        diverged,
        avg_nees: if nees_count > 0 {
            nees_sum / nees_count as f64
        } else {
            f64::NAN
        },
        nees_samples: nees_count,
        final_true_pose: [true_pose.x, true_pose.y, true_pose.theta],
        final_trace: belief.trace(),
    })
}

/// Execute `runs` independent closed-loop runs of the same plan.
pub fn execute(
    map: &WorldMap,
    noise: &NoiseModel,
    start: &GaussianBelief,
    waypoints: &[Pose],
    goal_region: &str,
    runs: usize,
    seed: u64,
) -> Result<Vec<ExecutionTrace>, SimError> {
    (0..runs)
        .map(|run| execute_run(map, noise, start, waypoints, goal_region, run, seed))
        .collect()
}

/// Flatten the node poses of a report's motion legs into one waypoint list,
/// dropping consecutive duplicates at leg joins.
pub fn waypoints_from_legs(legs: &[crate::tmp::MotionLegReport]) -> Vec<Pose> {
    let mut out: Vec<Pose> = Vec::new();
    for leg in legs {
        for p in &leg.poses {
            let pose = Pose::new(p[0], p[1], p[2]);
            if out
                .last()
                .map(|q| q.distance_to(&pose) > 1e-9)
                .unwrap_or(true)
            {
                out.push(pose);
            }
        }
    }
    out
}

/// CSV rows for a set of traces: run,step,true_x,true_y,true_theta,
/// est_x,est_y,est_theta,cov_trace,nees,observations.
pub fn traces_to_csv(traces: &[ExecutionTrace]) -> String {
    let mut out = String::from(
        "run,step,true_x,true_y,true_theta,est_x,est_y,est_theta,cov_trace,nees,observations\n",
    );
    for t in traces {
        for (i, s) in t.steps.iter().enumerate() {
            out.push_str(&format!(
                "{},{},{:.6},{:.6},{:.6},{:.6},{:.6},{:.6},{:.6},{:.6},{}\n",
                t.run,
                i,
                s.true_pose[0],
                s.true_pose[1],
                s.true_pose[2],
                s.est_pose[0],
                s.est_pose[1],
                s.est_pose[2],
                s.cov_trace,
                s.nees,
                s.observations
            ));
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::world::{Landmark, Rect};
    use std::collections::BTreeMap;

    fn corridor(landmarks: Vec<Landmark>) -> WorldMap {
        let mut regions = BTreeMap::new();
        regions.insert("s".to_string(), Rect::new(0.5, 0.5, 2.5, 2.5));
        regions.insert("g".to_string(), Rect::new(17.0, 0.5, 19.5, 2.5));
        WorldMap::new(Rect::new(0.0, 0.0, 20.0, 3.0), vec![], regions, landmarks).unwrap()
    }

    fn straight_waypoints() -> Vec<Pose> {
        (1..=9)
            .map(|i| Pose::new(2.0 * i as f64, 1.5, 0.0))
            .collect()
    }

    fn quiet_noise() -> NoiseModel {
        NoiseModel {
            process: crate::belief::ProcessNoise::Odometry {
                sigma_trans_per_m: 1e-9,
                sigma_rot: 1e-9,
            },
            q_range: 1e-12,
            q_bearing: 1e-12,
            sensor_range: 5.0,
        }
    }

    #[test]
    fn noiseless_run_tracks_waypoints_exactly() {
        let map = corridor(vec![]);
        let start = GaussianBelief::isotropic(Pose::new(1.5, 1.5, 0.0), 1e-9, 1e-9);
        let t = execute_run(
            &map,
            &quiet_noise(),
            &start,
            &straight_waypoints(),
            "g",
            0,
            1,
        )
        .unwrap();
        assert!(t.success, "{:?}", t.final_true_pose);
        assert!(!t.diverged);
        let [x, y, _] = t.final_true_pose;
        assert!((x - 18.0).abs() < 0.2 && (y - 1.5).abs() < 0.2);
    }

    #[test]
    fn noisy_runs_mostly_succeed_with_landmarks() {
        let lms: Vec<Landmark> = (0..5)
            .map(|i| Landmark {
                id: format!("lm{i}"),
                x: 2.0 + 4.0 * i as f64,
                y: 2.8,
            })
            .collect();
        let map = corridor(lms);
        let noise = NoiseModel {
            sensor_range: 5.0,
            ..NoiseModel::default()
        };
        let start = GaussianBelief::isotropic(Pose::new(1.5, 1.5, 0.0), 0.05, 0.02);
        let traces = execute(&map, &noise, &start, &straight_waypoints(), "g", 20, 42).unwrap();
        let ok = traces.iter().filter(|t| t.success).count();
        assert!(ok >= 16, "only {ok}/20 succeeded");
    }

    #[test]
    fn execution_is_deterministic_per_seed() {
        let map = corridor(vec![]);
        let start = GaussianBelief::isotropic(Pose::new(1.5, 1.5, 0.0), 0.05, 0.02);
        let noise = NoiseModel::default();
        let a = execute_run(&map, &noise, &start, &straight_waypoints(), "g", 3, 9).unwrap();
        let b = execute_run(&map, &noise, &start, &straight_waypoints(), "g", 3, 9).unwrap();
        assert_eq!(a.steps.len(), b.steps.len());
        assert_eq!(a.final_true_pose, b.final_true_pose);
        assert_eq!(traces_to_csv(&[a]), traces_to_csv(&[b]));
    }

    #[test]
    fn unknown_region_is_an_error() {
        let map = corridor(vec![]);
        let start = GaussianBelief::isotropic(Pose::new(1.5, 1.5, 0.0), 0.05, 0.02);
        let err = execute_run(
            &map,
            &NoiseModel::default(),
            &start,
            &straight_waypoints(),
            "nope",
            0,
            1,
        );
        assert!(matches!(err, Err(SimError::UnknownGoalRegion(_))));
    }

    #[test]
    fn waypoints_dedupe_leg_joins() {
        use crate::tmp::MotionLegReport;
        let leg = |poses: Vec<[f64; 3]>| MotionLegReport {
            from: "a".into(),
            to: "b".into(),
            nodes: vec![],
            poses,
            traces: vec![],
            covs: vec![],
            length: 0.0,
            c_sigma: 0.0,
            c_sigma_g: 0.0,
            cost: 0.0,
        };
        let legs = vec![
            leg(vec![[0.0, 0.0, 0.0], [1.0, 0.0, 0.0]]),
            leg(vec![[1.0, 0.0, 0.0], [2.0, 0.0, 0.0]]),
        ];
        let wp = waypoints_from_legs(&legs);
        assert_eq!(wp.len(), 3);
    }
}
