pub use crate::random::{random_density, random_hermitian, random_matrix, random_unitary, rng};
