//! Closed-loop simulation: the ego follows the policy through the bicycle
//! model while background agents replay their logs.

mod features;
mod reward;
mod session;

pub use features::*;
pub use reward::*;
pub use session::*;
