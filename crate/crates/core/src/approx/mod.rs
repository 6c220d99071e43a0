//! Function approximators with hand-written gradients: a fully-connected
//! network (elu activations, optional layer-normalized first layer), an
//! adaptive-moment optimizer, the Gaussian policy wrapper, and flat-file
//! parameter checkpoints.

mod adam;
mod checkpoint;
mod net;
mod policy;

pub use adam::AdamState;
pub use checkpoint::{load_params, save_params};
pub use net::{backward, forward, init_params, Activation, ForwardCache, NetSpec};
pub use policy::PolicyNet;
