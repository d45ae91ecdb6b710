//! Charge-conserving tensor networks for itinerant, braiding anyons.
//!
//! The crate provides, in rough dependency order:
//!
//! - [`model`]: multiplicity-free anyon theories (Fibonacci, Ising, Z2
//!   fermions, hardcore bosons) with F/R symbols, bend factors, consistency
//!   verification, and the Anyon x U(1) product construction;
//! - [`tensor`]: charge-block sparse tensors of order <= 3 with leg
//!   orientations and the diagrammatic manipulations (contraction, loop
//!   removal, star-bubble, bends, braids, fusion maps, weighted SVD);
//! - [`mps`]: anyonic matrix product states in Vidal form, finite and
//!   infinite, with density shifting and entanglement measures;
//! - [`tebd`]: imaginary- and real-time evolution by even/odd two-site gates;
//! - [`ham`]: model Hamiltonians (golden chain, t-J chain and ladder, Hubbard
//!   ladder) as charge-block two-site operators;
//! - [`obs`]: expectation values, correlators, entropy scans and fits;
//! - [`ed`]: exact diagonalization over fusion-tree bases;
//! - [`qwalk`]: the discrete-time coined quantum walk with probability
//!   currents.

pub mod linalg;
pub mod model;
pub mod tensor;
pub mod mps;
pub mod tebd;
pub mod ham;
pub mod obs;
pub mod ed;
pub mod qwalk;

pub use model::{builtin, product_with_u1, AnyonModel, Charge, CompositeCharge, ModelError, U1Window};
pub use tensor::{BlockTensor, ChargeIndex, FusionMap, TruncationPolicy};
