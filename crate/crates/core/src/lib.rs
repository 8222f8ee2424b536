//! Learning Stack-of-Tasks hierarchies for a redundant planar mobile
//! manipulator.
//!
//! The numeric core ([`kinematics`], [`tasks`], [`stack`], [`cost`],
//! [`world_sim`]) is generic over the scalar type through [`Real`]; the
//! aliases below fix it to `f64` (the learning loop and the CLI use those).

// `!(x >= lo)` is how validation rejects NaN along with out-of-range values.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod cli;
pub mod cost;
pub mod evolution;
pub mod error;
pub mod kinematics;
pub mod scalar;
pub mod stack;
pub mod tasks;
pub mod world_sim;

pub use error::{Error, Result};
pub use scalar::Real;

pub type Robot = kinematics::RobotModel<f64>;
pub type Robot32 = kinematics::RobotModel<f32>;
pub type Pose = kinematics::Pose2D<f64>;
pub type Stack = stack::StackOfTasks<f64>;
pub type Stack32 = stack::StackOfTasks<f32>;
pub type Entry = stack::TaskEntry<f64>;
pub type Params = tasks::TaskParams<f64>;
pub type Dictionary = tasks::TaskDictionary<f64>;
pub type Costs = cost::CostSpec<f64>;
pub type Trace = world_sim::EpisodeTrace<f64>;
pub type Episode = world_sim::EpisodeConfig<f64>;
pub type Map = world_sim::World<f64>;
pub type Scenario = world_sim::Scenario<f64>;
