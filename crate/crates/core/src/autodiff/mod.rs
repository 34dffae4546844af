//! Reverse-mode differentiation, Adam, Gumbel-softmax sampling and the
//! checkpoint format shared by every trainable component. Double precision
//! throughout.

mod adam;
mod checkpoint;
mod gumbel;
mod tape;
mod tensor;

pub use adam::{Adam, AdamConfig};
pub use checkpoint::Checkpoint;
pub use gumbel::gumbel_softmax;
pub use tape::{softmax, softmax_in_place, Tape, Var};
pub use tensor::Tensor;

pub(crate) use tape::log_sum_exp;
