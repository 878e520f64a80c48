//! Reference instances shared by the test suites and `verify`.

use crate::block::{BlockShape, MultiLevelVector};
use crate::C64;

/// A vector in `C^{2·3·5}` whose best `(1,2,2)`-hierarchically-sparse
/// approximation is supported on `{1, 4, 10, 13}` while its best flat
/// 4-term approximation is supported on `{1, 9, 19, 24}`.
pub fn block_vector_2x3x5() -> MultiLevelVector {
    #[rustfmt::skip]
    let values = [
        0.3, 10.0, -0.2, 0.4, -5.0,
        0.1, -0.5, 1.0, 0.2, 9.0,
        7.0, 0.6, -0.1, -7.0, 0.3,
        0.2, 0.7, -0.4, 0.1, -8.5,
        0.5, -0.3, 0.8, 0.2, 8.5,
        -0.6, 0.4, 0.1, -0.7, 0.2,
    ];
    let shape = BlockShape::new(vec![2, 3, 5]).expect("valid shape");
    MultiLevelVector::new(shape, values.iter().map(|&v| C64::new(v, 0.0)).collect()).expect("length 30")
}
