//! Small dense networks with hand-written reverse-mode gradients: the
//! squashed Gaussian actor, the discrete behavior-cloning policy, the double
//! critic, and an Adam optimizer.

mod action_space;
mod adam;
mod checkpoint;
pub mod losses;
mod mlp;
mod policy;

pub use action_space::*;
pub use adam::Adam;
pub use checkpoint::*;
pub use mlp::{Mlp, MlpCache};
pub use policy::*;
