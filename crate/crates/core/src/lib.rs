//! Temporal-logic-guided reinforcement learning at desk scale.
//!
//! Tasks are co-safe LTL formulas. They are progressed label by label into a
//! finite set of residual sub-tasks ([`ltl::TaskSet`]), paired with a labeled
//! environment into a product with Markovian rewards ([`tlmdp`]), encoded by a
//! small transformer ([`encoder`]) and solved with double DQN using
//! simultaneous sub-task updates ([`learner`]).

pub mod checkpoint;
pub mod encoder;
pub mod envs;
pub mod learner;
pub mod ltl;
pub mod tensor;
pub mod tlmdp;
