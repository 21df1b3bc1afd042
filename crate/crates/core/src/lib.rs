//! Homomorphic matrix multiplication, convolution and CNN inference over
//! row-packed SIMD ciphertexts.
//!
//! Matrices are packed one row per ciphertext row. The right-hand factor
//! of a product is transposed and cycled down all rows, so a product needs
//! only `p` rotate-multiply-sum rounds. Image batches are packed one image
//! per row and convolved all at once.
//!
//! Everything is written against [`backend::SimdBackend`]; the bundled
//! [`backend::SlotSimulator`] is exact and tracks modulus consumption.

pub mod backend;
pub mod cli;
pub mod conv;
pub mod cost;
pub mod encoding;
pub mod error;
pub mod eval;
pub mod linalg;
pub mod matmul;
pub mod matrix;
pub mod mnist;
pub mod network;
pub mod verify;

pub use backend::{BackendParams, CipherVec, ModulusLedger, OpCounts, SimdBackend, SlotSimulator};
pub use encoding::{EncodedMatrix, LayoutKind, MatrixLayout};
pub use error::{HeError, Result};
pub use eval::{EvalConfig, Evaluator, Fault};
pub use matrix::Matrix;
pub use network::{ActivationPoly, InferenceOutput, NetworkSpec};
