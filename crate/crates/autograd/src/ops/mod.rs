mod arith;
mod conv;
mod gather;
mod loss;
mod matmul;
mod norm;
mod pool;
mod shape;
mod softmax;

pub use conv::{conv3d, conv_transpose3d};
pub use gather::index_select0;
pub use loss::softmax_dice_ce;
pub use matmul::{batched_matmul, linear};
pub use norm::{instance_norm, layer_norm};
pub use pool::max_pool3d;
pub use shape::{concat, roll_array};
pub use softmax::softmax_inplace;
