//! Dense tensors, a reverse-accumulation tape, Adam, finite-difference
//! checking and the parameter checkpoint format.

mod adam;
pub mod checkpoint;
mod gradcheck;
mod graph;
mod params;
mod tensor;

pub use adam::{adam_step, AdamConfig};
pub use gradcheck::{
    analytic_gradients, compare_with_finite_differences, finite_diff_check, relative_error, FdEntry,
    FdReport, FdTolerance,
};
pub use graph::{rotary_rotate, Gradients, Graph, Var};
pub use params::{Param, ParamStore};
pub use tensor::{log1p_sum_exp, Tensor};
