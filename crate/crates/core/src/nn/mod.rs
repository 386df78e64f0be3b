//! Small reverse-mode neural network kernel in double precision.

pub mod adadelta;
pub mod attention;
pub mod checkpoint;
pub mod gradcheck;
pub mod layers;
pub mod ops;
pub mod tensor;

pub use adadelta::{adadelta_step, AdadeltaConfig, AdadeltaState};
pub use attention::{c2q_attention, C2qAttention};
pub use layers::{Blstm, Dense, Lstm};
pub use ops::{cross_entropy, dense_forward, dropout, softmax};
pub use tensor::{ParamTensor, Parameterized};
