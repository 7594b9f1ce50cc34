//! Task-and-motion planning for 2D navigation under uncertainty: a temporal
//! task planner over a PDDL 2.1 subset with semantic attachments, coupled to
//! a probabilistic-roadmap belief-space motion planner with EKF propagation.

pub mod belief;
pub mod motion;
pub mod pddl;
pub mod scenario;
pub mod taskplan;
pub mod sim;
pub mod tmp;
pub mod world;
