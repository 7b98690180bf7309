//! Exact, enumeration-based values and policy gradients on small finite
//! MDPs, used to validate the sampled update rules of the training loops.

pub mod check;
pub mod exact;
pub mod mdp;
pub mod sim;

pub use check::{estimator_check, run_all, CheckResult};
pub use exact::{enumerate_objective, exact_continuation_values, exact_gradients, exact_objective, ValueTables};
pub use mdp::{TabularMdp, TabularPolicies};
