//! Hierarchical-sparsity compressive sensing for multiuser wideband massive-MIMO
//! channel estimation.
//!
//! - [`block`]: multilevel block vectors, hierarchical supports, and the
//!   best hierarchically-sparse approximation operator.
//! - [`sensing`]: pilot design and the FFT-fast Kronecker sensing operator.
//! - [`channel`]: on-/off-grid channel synthesis and delay-angular representations.
//! - [`recovery`]: HiIHT, HiHTP, flat IHT/HTP, OMP and guarantee calculators.
//! - [`hirip`]: exact RIP / HiRIP constants on small matrices.
//! - [`sim`]: Monte-Carlo experiment harness, CSV output and plot data.

pub mod block;
pub mod channel;
mod combin;
pub mod error;
pub mod fixtures;
pub mod hirip;
pub mod linalg;
pub mod recovery;
pub mod sensing;
pub mod sim;

pub use num_complex::Complex64 as C64;

pub use block::{BlockShape, HiSupport, MultiLevelVector, SparsityProfile};
pub use error::{Error, Result};
pub use sensing::{DesignParams, KroneckerSensingOperator, PilotDesign, SensingOperator, Vectorization};
