//! Policy gradient methods as explicit improvement and projection operators
//! on tabular MDPs.
//!
//! Everything is computed exactly: values come from dense linear solves,
//! trajectory distributions from exhaustive enumeration, and projections from
//! closed forms or deterministic gradient descent. No sampling is involved
//! anywhere, so identities between the operators hold to machine precision
//! and can be asserted directly.
//!
//! Module map:
//!
//! * [`mdp`]: tabular MDPs, the four-room gridworld, random instances,
//!   exact policy evaluation and value iteration.
//! * [`policy`]: softmax policies (tabular or shared logits) and the exact
//!   policy gradient.
//! * [`trajectory`]: finite-horizon trajectory enumeration and the
//!   trajectory-level operators and bounds.
//! * [`divergence`]: KL and α-divergences on discrete distributions.
//! * [`operators`]: state-action improvement and projection operators,
//!   their compositions, training loops and the α line search.
//! * [`bounds`]: the operator lower bound, the CPI surrogate and the
//!   one-dimensional bound landscape.
//! * [`experiments`]: experiment configuration, presets, result files,
//!   sweeps and the verification suite used by the `pgop` binary.

// Validation uses `!(x > 0.0)` on purpose so that NaN is rejected too.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod bounds;
pub mod divergence;
pub mod error;
pub mod experiments;
pub mod mdp;
pub mod operators;
pub mod policy;
pub mod trajectory;

pub use error::{Error, Result};
pub use mdp::{evaluate_policy, PolicyEval, PolicyTable, TabularMdp};
pub use policy::{ParamMode, SoftmaxPolicy};
