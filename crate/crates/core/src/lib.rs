//! Hypergraph attention (HGA) head for semantic entity recognition.
//!
//! Each entity type is one attention head over the token sequence; the
//! `D×L×L` score tensor holds one score per candidate span and type. Span
//! positions (the node index of each token) drive a rotary encoding so
//! tokens of the same text node interact at relative offset zero. Training
//! uses a balanced log-sum-exp loss over positive and negative spans.
//!
//! The crate is generic over the scalar type ([`Scalar`], implemented for
//! `f32` and `f64`); the `*64` aliases below fix it to `f64`, which is what
//! training and gradient checking use.

pub mod baseline;
pub mod decode;
pub mod doc;
pub mod encoder;
pub mod error;
pub mod eval;
pub mod head;
pub mod loss;
pub mod numerics;
pub mod pipeline;
pub mod rng;
pub mod scalar;
pub mod synth;
pub mod trainer;

pub use error::{Error, Result};
pub use scalar::Scalar;

pub type Tensor64 = numerics::Tensor<f64>;
pub type Tensor32 = numerics::Tensor<f32>;
pub type ParamStore64 = numerics::ParamStore<f64>;
pub type Graph64 = numerics::Graph<f64>;
pub type ScoreTensor64 = head::ScoreTensor<f64>;
pub type ScoreTensor32 = head::ScoreTensor<f32>;
pub type HeadParams64 = head::HeadParams<f64>;
pub type Model64 = trainer::Model<f64>;
pub type TrainOutput64 = trainer::TrainOutput<f64>;
