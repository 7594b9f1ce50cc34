//! Coupled task-and-motion planning session: the task planner's advisor
//! queries are answered by belief-space search over a shared roadmap, replies
//! are memoized per (from, to, start-node), and candidate plans pass a final
//! goal-covariance validation gate before being reported.

use std::collections::HashMap;
use std::time::Instant;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::belief::NoiseModel;
use crate::motion::{
    belief_bfs, build_roadmap, CostConfig, MotionError, MotionPlan, Roadmap,
};
use crate::pddl::{ground, DomainDef, GroundError, GroundedTask, ProblemDef};
use crate::scenario::Scenario;
use crate::taskplan::{
    self, Advisor, AdvisorQuery, AdvisorReply, ChainState, PlanError, TaskPlan,
};
use crate::world::{WorldError, WorldMap};

/// One memoized advisor leg: the reply plus the motion plan realizing it.
#[derive(Debug, Clone)]
pub struct CachedLeg {
    pub reply: AdvisorReply,
    pub plan: Option<MotionPlan>,
}

/// Planning session owning the map, roadmap and advisor cache.
pub struct TmpSession {
    pub world: WorldMap,
    pub roadmap: Roadmap,
    pub noise: NoiseModel,
    pub eta: f64,
    pub config: CostConfig,
    pub seed: u64,
    cache: HashMap<(String, String, usize), CachedLeg>,
}

impl TmpSession {
    pub fn new(
        world: WorldMap,
        roadmap: Roadmap,
        noise: NoiseModel,
        eta: f64,
        config: CostConfig,
        seed: u64,
    ) -> Self {
        TmpSession {
            world,
            roadmap,
            noise,
            eta,
            config,
            seed,
            cache: HashMap::new(),
        }
    }

    pub fn cached_leg(&self, from: &str, to: &str, start_node: usize) -> Option<&CachedLeg> {
        self.cache.get(&(from.to_string(), to.to_string(), start_node))
    }

    /// Drop all memoized legs (e.g. before rescoring under a new config).
    pub fn clear_cache(&mut self) {
        self.cache.clear();
    }
}

impl Advisor for TmpSession {
    fn advise(&mut self, query: &AdvisorQuery) -> AdvisorReply {
        let key = (query.from.clone(), query.to.clone(), query.node);
        if let Some(leg) = self.cache.get(&key) {
            return leg.reply.clone();
        }
        let goals = self.roadmap.region_nodes.get(&query.to).cloned();
        let leg = match goals {
            Some(goals) if !goals.is_empty() => {
                match belief_bfs(
                    &self.world,
                    &self.roadmap,
                    query.node,
                    &query.belief,
                    &goals,
                    self.config,
                    &self.noise,
                    self.seed,
                ) {
                    Ok((plan, _)) => {
                        let reply = AdvisorReply {
                            external: plan.cost,
                            bound: plan.c_sigma_g,
                            feasible: plan.c_sigma_g <= self.eta,
                            goal_node: *plan.nodes.last().unwrap(),
                            goal_belief: plan.beliefs.last().unwrap().clone(),
                        };
                        CachedLeg {
                            reply,
                            plan: Some(plan),
                        }
                    }
                    Err(_) => CachedLeg {
                        reply: AdvisorReply {
                            external: f64::INFINITY,
                            bound: f64::INFINITY,
                            feasible: false,
                            goal_node: query.node,
                            goal_belief: query.belief.clone(),
                        },
                        plan: None,
                    },
                }
            }
            _ => CachedLeg {
                reply: AdvisorReply {
                    external: f64::INFINITY,
                    bound: f64::INFINITY,
                    feasible: false,
                    goal_node: query.node,
                    goal_belief: query.belief.clone(),
                },
                plan: None,
            },
        };
        let reply = leg.reply.clone();
        self.cache.insert(key, leg);
        reply
    }

    fn nav_lower_bound(&self, from: &str, to: &str) -> f64 {
        if self.config == CostConfig::Config4 || from == to {
            // config4 carries no length term, so only 0 is admissible.
            return 0.0;
        }
        match (self.world.regions.get(from), self.world.regions.get(to)) {
            (Some(a), Some(b)) => a.distance_to_rect(b),
            _ => 0.0,
        }
    }
}

#[derive(Debug, Error)]
pub enum SolveError {
    #[error(transparent)]
    World(#[from] WorldError),
    #[error(transparent)]
    Motion(#[from] MotionError),
    #[error(transparent)]
    Ground(#[from] GroundError),
    #[error(transparent)]
    Plan(#[from] PlanError),
    #[error("navigation step {step} was never priced by the advisor")]
    MissingCache { step: usize },
}

/// Outcome of the final plan validation sweep.
#[derive(Debug, Clone, PartialEq)]
pub enum Validation {
    Valid,
    /// Step index whose goal trace exceeded eta, and the trace.
    Rejected { step: usize, trace: f64 },
}

/// Re-check every navigation step's goal trace against `eta` using the
/// session's memoized legs.
pub fn validate_plan(session: &TmpSession, plan: &TaskPlan) -> Result<Validation, SolveError> {
    for (i, step) in plan.steps.iter().enumerate() {
        let Some(nav) = &step.nav else { continue };
        let leg = session
            .cached_leg(&nav.from, &nav.to, nav.start_node)
            .ok_or(SolveError::MissingCache { step: i })?;
        if leg.reply.bound > session.eta {
            return Ok(Validation::Rejected {
                step: i,
                trace: leg.reply.bound,
            });
        }
    }
    Ok(Validation::Valid)
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct NavReport {
    pub from: String,
    pub to: String,
    pub start_node: usize,
    pub goal_node: usize,
    pub external: f64,
    pub bound: f64,
    pub feasible: bool,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct StepReport {
    pub time: f64,
    pub action: String,
    pub duration: f64,
    pub cost: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub nav: Option<NavReport>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PlanReport {
    pub steps: Vec<StepReport>,
    pub total_cost: f64,
    pub goal_traces: Vec<f64>,
}

/// Motion leg with enough geometry to replay or execute it.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MotionLegReport {
    pub from: String,
    pub to: String,
    pub nodes: Vec<usize>,
    /// [x, y, theta] per node.
    pub poses: Vec<[f64; 3]>,
    pub traces: Vec<f64>,
    /// Position-covariance block per node as [xx, xy, yy].
    pub covs: Vec<[f64; 3]>,
    pub length: f64,
    pub c_sigma: f64,
    pub c_sigma_g: f64,
    pub cost: f64,
}

/// Serializable solve result.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SolveReport {
    pub config: u8,
    pub seed: u64,
    pub eta: f64,
    pub density: f64,
    pub feasible: bool,
    /// Validated plan; absent when no feasible plan exists.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub plan: Option<PlanReport>,
    pub plan_text: String,
    /// Candidate that failed validation, kept for diagnostics.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub rejected_plan: Option<PlanReport>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub violated_step: Option<usize>,
    pub motion_legs: Vec<MotionLegReport>,
    /// Final goal region of the plan, when any navigation occurred.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub goal_region: Option<String>,
    /// Initial belief as [x, y, theta, sigma_xy, sigma_theta].
    pub start: [f64; 5],
    pub roadmap_nodes: usize,
    pub roadmap_edges: usize,
    pub wall_time_s: f64,
}

impl SolveReport {
    /// JSON with the wall time zeroed: byte-identical across replays of the
    /// same seed, suitable for determinism checks.
    pub fn canonical_json(&self) -> String {
        let mut c = self.clone();
        c.wall_time_s = 0.0;
        serde_json::to_string_pretty(&c).expect("report serializes")
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }
}

/// Full solve output, including the in-memory artifacts needed for
/// rescoring and execution.
pub struct Solution {
    pub report: SolveReport,
    pub task: GroundedTask,
    /// Validated plan; `None` when the search failed or the gate rejected.
    pub plan: Option<TaskPlan>,
    /// Minimum-cost candidate before validation, kept for cost analysis.
    pub candidate: Option<TaskPlan>,
    pub session: TmpSession,
    pub init_chain: ChainState,
}

fn plan_report(plan: &TaskPlan) -> PlanReport {
    PlanReport {
        steps: plan
            .steps
            .iter()
            .map(|s| StepReport {
                time: s.start,
                action: s.action.clone(),
                duration: s.duration,
                cost: s.cost,
                nav: s.nav.as_ref().map(|n| NavReport {
                    from: n.from.clone(),
                    to: n.to.clone(),
                    start_node: n.start_node,
                    goal_node: n.goal_node,
                    external: n.external,
                    bound: n.bound,
                    feasible: n.feasible,
                }),
            })
            .collect(),
        total_cost: plan.total_cost,
        goal_traces: plan.goal_traces.clone(),
    }
}

fn motion_legs(session: &TmpSession, plan: &TaskPlan) -> Vec<MotionLegReport> {
    let mut legs = Vec::new();
    for step in &plan.steps {
        let Some(nav) = &step.nav else { continue };
        let Some(leg) = session.cached_leg(&nav.from, &nav.to, nav.start_node) else {
            continue;
        };
        let Some(plan) = &leg.plan else { continue };
        legs.push(MotionLegReport {
            from: nav.from.clone(),
            to: nav.to.clone(),
            nodes: plan.nodes.clone(),
            poses: plan
                .nodes
                .iter()
                .map(|&i| {
                    let p = session.roadmap.nodes[i];
                    [p.x, p.y, p.theta]
                })
                .collect(),
            traces: plan.beliefs.iter().map(|b| b.trace()).collect(),
            covs: plan
                .beliefs
                .iter()
                .map(|b| [b.cov[(0, 0)], b.cov[(0, 1)], b.cov[(1, 1)]])
                .collect(),
            length: plan.length,
            c_sigma: plan.c_sigma,
            c_sigma_g: plan.c_sigma_g,
            cost: plan.cost,
        });
    }
    legs
}

/// End-to-end solve: build the roadmap, insert the known initial pose,
/// run the coupled search and validate the candidate plan.
pub fn solve(
    scenario: &Scenario,
    domain: &DomainDef,
    problem: &ProblemDef,
    config: CostConfig,
    seed: u64,
) -> Result<Solution, SolveError> {
    let t0 = Instant::now();
    let world = scenario.world_map()?;
    let mut roadmap = build_roadmap(&world, scenario.density, scenario.region_poses, seed)?;
    let q0 = scenario.start_pose();
    let start_node = roadmap.insert_node(&world, q0);
    let start_belief = scenario.start_belief();
    let init_chain = ChainState {
        region: scenario.start_region.clone(),
        node: start_node,
        belief: start_belief.clone(),
    };
    let task = ground(domain, problem)?;
    let mut session = TmpSession::new(
        world,
        roadmap,
        scenario.noise_model(),
        scenario.eta,
        config,
        seed,
    );

    let planned = taskplan::plan(&task, &mut session, init_chain.clone());
    let (plan, validation) = match planned {
        Ok(p) => {
            let v = validate_plan(&session, &p)?;
            (Some(p), v)
        }
        Err(PlanError::UnreachableGoal { .. }) => (None, Validation::Valid),
        Err(e) => return Err(e.into()),
    };

    let feasible = plan.is_some() && validation == Validation::Valid;
    let goal_region = plan.as_ref().and_then(|p| {
        p.steps
            .iter()
            .rev()
            .find_map(|s| s.nav.as_ref().map(|n| n.to.clone()))
    });
    let legs = plan
        .as_ref()
        .map(|p| motion_legs(&session, p))
        .unwrap_or_default();
    let (plan_field, rejected, violated) = match (&plan, &validation) {
        (Some(p), Validation::Valid) => (Some(plan_report(p)), None, None),
        (Some(p), Validation::Rejected { step, .. }) => {
            (None, Some(plan_report(p)), Some(*step))
        }
        (None, _) => (None, None, None),
    };
    let report = SolveReport {
        config: config.index(),
        seed,
        eta: scenario.eta,
        density: scenario.density,
        feasible,
        plan_text: match (&plan, &validation) {
            (Some(p), Validation::Valid) => taskplan::format_plan(p),
            _ => String::new(),
        },
        plan: plan_field,
        rejected_plan: rejected,
        violated_step: violated,
        motion_legs: legs,
        goal_region,
        start: [
            q0.x,
            q0.y,
            q0.theta,
            scenario.start_sigma[0],
            scenario.start_sigma[1],
        ],
        roadmap_nodes: session.roadmap.nodes.len(),
        roadmap_edges: session.roadmap.edge_count(),
        wall_time_s: t0.elapsed().as_secs_f64(),
    };
    Ok(Solution {
        report,
        task,
        plan: if feasible { plan.clone() } else { None },
        candidate: plan,
        session,
        init_chain,
    })
}

/// Re-price another plan's fixed action sequence under this solution's cost
/// config, reusing its roadmap AND its memoized advisor cache. Sharing the
/// cache keeps the pricing consistent with what the coupled search saw, so
/// the solution's own cost is a guaranteed lower bound on any rescored order.
pub fn rescore(solution: &mut Solution, plan: &TaskPlan) -> Result<f64, SolveError> {
    // Replay matches actions by ground-action id; grounding is deterministic,
    // so plans from another solve of the same domain/problem line up.
    let init_chain = solution.init_chain.clone();
    Ok(taskplan::replay(
        &solution.task,
        plan,
        &mut solution.session,
        init_chain,
    )?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::str::FromStr;
    use crate::pddl::{parse_domain, parse_problem};

    const DOMAIN: &str = r#"
    (define (domain mini-nav)
      (:requirements :typing :durative-actions :numeric-fluents)
      (:types region item)
      (:predicates (robot-at ?r - region) (have ?i - item) (item-at ?i - item ?r - region))
      (:functions (act-cost) (external) (bound) (goal-trace) (triggered ?from - region ?to - region))
      (:durative-action goto
        :parameters (?from - region ?to - region)
        :duration (= ?duration 100)
        :condition (and (at start (robot-at ?from)))
        :effect (and (at start (not (robot-at ?from)))
                     (at end (robot-at ?to))
                     (at start (increase (triggered ?from ?to) 1))
                     (at end (increase (act-cost) (external)))
                     (at end (increase (goal-trace) (bound)))))
      (:durative-action pick
        :parameters (?i - item ?r - region)
        :duration (= ?duration 10)
        :condition (and (over all (robot-at ?r)) (at start (item-at ?i ?r)))
        :effect (and (at end (have ?i)) (at start (increase (act-cost) 4)))))
    "#;

    const PROBLEM: &str = r#"
    (define (problem mini-1)
      (:domain mini-nav)
      (:objects s g - region doc - item)
      (:init (robot-at s) (item-at doc g) (= (act-cost) 0))
      (:goal (and (have doc)))
      (:attachments
        (direct act-cost goal-trace)
        (indirect external bound)
        (trigger triggered)))
    "#;

    fn scenario() -> Scenario {
        Scenario::from_str(
            r#"{
            "bounds": [0, 0, 20, 6],
            "obstacles": [],
            "regions": {"s": [1, 1, 3, 3], "g": [16, 1, 19, 4]},
            "landmarks": [
                {"id": "lm0", "x": 6, "y": 3},
                {"id": "lm1", "x": 12, "y": 3},
                {"id": "lm2", "x": 17, "y": 3}
            ],
            "sensor_range": 6.0,
            "eta": 1.0,
            "density": 1.0,
            "region_poses": 3,
            "start_region": "s"
        }"#,
        )
        .unwrap()
    }

    fn parse() -> (DomainDef, ProblemDef) {
        (
            parse_domain(DOMAIN).unwrap(),
            parse_problem(PROBLEM).unwrap(),
        )
    }

    #[test]
    fn solve_produces_feasible_plan() {
        let (d, p) = parse();
        let sol = solve(&scenario(), &d, &p, CostConfig::Config3, 7).unwrap();
        assert!(sol.report.feasible, "{}", sol.report.to_json());
        let plan = sol.plan.as_ref().unwrap();
        // goto s->g then pick
        assert_eq!(plan.steps.len(), 2);
        assert!(plan.steps[0].action.starts_with("(goto"));
        assert!(plan.steps[1].action.starts_with("(pick"));
        assert_eq!(sol.report.motion_legs.len(), 1);
        assert_eq!(sol.report.goal_region.as_deref(), Some("g"));
        // chain continuity: leg starts at the inserted q0 node
        assert_eq!(
            sol.report.motion_legs[0].nodes.first().copied(),
            Some(sol.init_chain.node)
        );
    }

    #[test]
    fn advisor_replies_are_memoized() {
        let (d, p) = parse();
        let mut sol = solve(&scenario(), &d, &p, CostConfig::Config1, 3).unwrap();
        let q = AdvisorQuery {
            from: "s".into(),
            to: "g".into(),
            node: sol.init_chain.node,
            belief: sol.init_chain.belief.clone(),
        };
        let a = sol.session.advise(&q);
        let b = sol.session.advise(&q);
        assert_eq!(a.external, b.external);
        assert_eq!(a.goal_node, b.goal_node);
        assert!(sol
            .session
            .cached_leg("s", "g", sol.init_chain.node)
            .is_some());
    }

    #[test]
    fn validation_gate_rejects_small_eta() {
        let (d, p) = parse();
        let mut sc = scenario();
        sc.eta = 1e-9; // nothing can satisfy this
        let sol = solve(&sc, &d, &p, CostConfig::Config4, 7).unwrap();
        assert!(!sol.report.feasible);
        assert!(sol.report.plan.is_none());
        assert!(sol.report.plan_text.is_empty());
        assert!(sol.report.violated_step.is_some());
        assert!(sol.report.rejected_plan.is_some());
    }

    #[test]
    fn unreachable_region_means_no_plan() {
        let (d, p) = parse();
        let mut sc = scenario();
        // wall fully separating s from g
        sc.obstacles = vec![vec![[9.0, 0.0], [10.0, 0.0], [10.0, 6.0], [9.0, 6.0]]];
        let sol = solve(&sc, &d, &p, CostConfig::Config1, 5).unwrap();
        assert!(!sol.report.feasible);
        assert!(sol.report.plan.is_none());
    }

    #[test]
    fn deterministic_reports() {
        let (d, p) = parse();
        let a = solve(&scenario(), &d, &p, CostConfig::Config3, 11).unwrap();
        let b = solve(&scenario(), &d, &p, CostConfig::Config3, 11).unwrap();
        assert_eq!(a.report.canonical_json(), b.report.canonical_json());
    }

    #[test]
    fn rescore_matches_replan_on_same_config() {
        let (d, p) = parse();
        let mut sol = solve(&scenario(), &d, &p, CostConfig::Config3, 7).unwrap();
        let plan = sol.plan.clone().unwrap();
        let rescored = rescore(&mut sol, &plan).unwrap();
        assert!((rescored - plan.total_cost).abs() < 1e-9);
    }

    #[test]
    fn config2_never_searches_roadmap() {
        let (d, p) = parse();
        let sol = solve(&scenario(), &d, &p, CostConfig::Config2, 7).unwrap();
        assert!(sol.report.feasible);
        // decoupled leg is the straight line: exactly two nodes
        assert_eq!(sol.report.motion_legs[0].nodes.len(), 2);
    }
}
